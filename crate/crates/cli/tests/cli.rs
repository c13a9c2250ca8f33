use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use hardy_core::atoms::{atom_to_text, grid_to_text, make_local_atom, GridFunction};
use hardy_core::coverings::covering_bessel;
use hardy_core::{AdmissibleCovering, Interval};

fn hardy(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hardy"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .output()
        .expect("run hardy")
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn covering_passes_and_writes_svg() {
    let tmp = tempfile::tempdir().unwrap();
    let out = hardy(
        &["covering", "--family", "bessel-box", "--window", "-2..2"],
        tmp.path(),
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let svg = fs::read_to_string(tmp.path().join("covering.svg")).unwrap();
    let csv = fs::read_to_string(tmp.path().join("covering.csv")).unwrap();
    let rows = csv.lines().filter(|l| !l.starts_with('#')).count() - 1;
    assert_eq!(svg.matches("<rect").count(), rows);
    assert!(csv.starts_with("# hardy covering"));
}

#[test]
fn bad_config_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "bad.toml",
        "[kernel]\nkind = \"bessel\"\nbta = 1.0\n",
    );
    let out = hardy(&["verify", "--config", &cfg], &tmp.path().join("o"));
    assert_eq!(out.status.code(), Some(1));
    let cfg = write(tmp.path(), "kappa.toml", "[covering]\nkappa = 1.5\n");
    let out = hardy(&["covering", "--config", &cfg], &tmp.path().join("o"));
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bessel_verify_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "c.toml",
        "[covering]\nwindow = [-1.0, 1.0]\n[verify]\nconditions = [\"A1'\", \"A2'\"]\n",
    );
    let out = hardy(&["verify", "--config", &cfg], tmp.path());
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = fs::read_to_string(tmp.path().join("A1p.csv")).unwrap();
    assert!(csv.contains("condition,cuboid,constant,error,params_hash"));
    let summary = fs::read_to_string(tmp.path().join("summary.txt")).unwrap();
    assert!(summary.contains("pass"));
}

#[test]
fn zero_potential_fails_mass_decay() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "s.toml",
        "[kernel]\nkind = \"schrodinger\"\npotential = \"zero\"\nn_points = 400\n\
         [covering]\nfamily = \"uniform\"\nwindow = [-1.0, 1.0]\ntau = 1.0\n\
         [verify]\nconditions = [\"D'\"]\n[quadrature]\ninterior_samples = 0\n",
    );
    let out = hardy(&["verify", "--config", &cfg], tmp.path());
    assert_eq!(
        out.status.code(),
        Some(1),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn decompose_rejects_input_outside_window() {
    let tmp = tempfile::tempdir().unwrap();
    let g =
        GridFunction::from_fn(vec![Interval::new(0.5, 20.0)], vec![64], |x: &[f64]| x[0]).unwrap();
    let input = write(tmp.path(), "g.txt", &grid_to_text(&g));
    let out = hardy(&["decompose", "--input", &input], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("window error"));
}

#[test]
fn decompose_round_trips_a_bump() {
    let tmp = tempfile::tempdir().unwrap();
    let g = GridFunction::from_fn(vec![Interval::new(1.0, 6.0)], vec![200], |x: &[f64]| {
        let u = (x[0] - 3.5) / 2.5;
        if u.abs() < 1.0 {
            (-1.0 / (1.0 - u * u)).exp()
        } else {
            0.0
        }
    })
    .unwrap();
    let input = write(tmp.path(), "g.txt", &grid_to_text(&g));
    let out = hardy(&["decompose", "--input", &input], tmp.path());
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let summary = fs::read_to_string(tmp.path().join("decomposition_summary.txt")).unwrap();
    assert!(summary.contains("atom_failures 0"));
}

#[test]
fn decompose_of_an_atom_is_itself() {
    let tmp = tempfile::tempdir().unwrap();
    let c: AdmissibleCovering = covering_bessel(0, 0).unwrap();
    let a = make_local_atom(&c.cuboids[0], &c.domain, c.kappa).unwrap();
    let input = write(tmp.path(), "a.txt", &atom_to_text(1.0, &a));
    let out = hardy(&["decompose", "--input", &input], tmp.path());
    assert_eq!(out.status.code(), Some(0));
    let summary = fs::read_to_string(tmp.path().join("decomposition_summary.txt")).unwrap();
    assert!(summary.contains("lambda_sum 1e0"));
}

#[test]
fn maximal_csv_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "m.toml",
        "[covering]\nwindow = [-1.0, 1.0]\n[maximal]\natoms_per_cuboid = 2\n",
    );
    let mut docs = Vec::new();
    for (i, threads) in ["1", "3"].iter().enumerate() {
        let dir = tmp.path().join(format!("r{i}"));
        let out = hardy(
            &[
                "maximal",
                "--config",
                &cfg,
                "--seed",
                "11",
                "--threads",
                threads,
            ],
            &dir,
        );
        assert_eq!(
            out.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        docs.push(fs::read(dir.join("maximal.csv")).unwrap());
    }
    assert_eq!(docs[0], docs[1]);
}
