//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails. Pass criterion numbers as arguments
//! to run a subset, e.g. `cargo test --test acceptance -- 1 4`.
#![allow(clippy::type_complexity)]

use std::f64::consts::PI;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use hardy_core::atoms::{
    local_decompose, localize, make_local_atom, maximal_norm, random_classical_atom,
    reconstruction_error, validate_atom, MaximalConfig,
};
use hardy_core::coverings::{
    box_product, covering_bessel, covering_laguerre, covering_strip, covering_uniform,
    partition_of_unity, validate_covering, DEFAULT_SPLIT_BUDGET,
};
use hardy_core::kernels::{SchrodingerConfig, SchrodingerKernel};
use hardy_core::specfun::stable::{
    density_integral, density_series, stable_density, stable_density_with_branch,
    stable_laplace_check, stable_total_mass, DensityBranch, StableDensityParams,
};
use hardy_core::verifier::{
    delta_probes, verify_a0prime, verify_a1, verify_a1prime, verify_a2, verify_a2prime,
    verify_schrodinger_d, verify_schrodinger_k, verify_smalltime_limits, CuboidSelection,
    VerificationReport, VerifierConfig,
};
use hardy_core::{AdmissibleCovering, DomainSpec, Interval, KernelFamily, Potential};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (rng.gen_range(lo.ln()..hi.ln())).exp()
}

fn c1_bessel_closed_form() -> Check {
    let k = KernelFamily::bessel(1.0).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let t = log_uniform(&mut rng, 1e-4, 10.0);
        let x: f64 = rng.gen_range(0.01..20.0);
        let y: f64 = rng.gen_range(0.01..20.0);
        // e^{-(x-y)^2/4t} - e^{-(x+y)^2/4t} without cancellation
        let oracle = (4.0 * PI * t).powf(-0.5)
            * (-(x - y).powi(2) / (4.0 * t)).exp()
            * -(-x * y / t).exp_m1();
        let v = k.eval(t, &[x], &[y]).map_err(|e| e.to_string())?;
        let err = if oracle < 1e-300 {
            if v.abs() < 1e-290 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            rel(v, oracle)
        };
        worst = worst.max(err);
    }
    ensure(
        worst <= 1e-10,
        format!("max relative error {worst:.2e} on 10000 probes"),
    )
}

fn c2_subordination() -> Check {
    let heat = KernelFamily::euclidean_heat(1);
    let k = KernelFamily::subordinate(heat, 0.5).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut poisson: f64 = 0.0;
    for _ in 0..1000 {
        let t = log_uniform(&mut rng, 1e-2, 10.0);
        let x = rng.gen_range(-5.0..5.0);
        let y = rng.gen_range(-5.0..5.0);
        let oracle = t / (PI * (t * t + (x - y) * (x - y)));
        // the subordinate semigroup is indexed by t^nu
        let v = k.eval(t * t, &[x], &[y]).map_err(|e| e.to_string())?;
        poisson = poisson.max(rel(v, oracle));
    }
    let mut laplace: f64 = 0.0;
    for _ in 0..20 {
        let nu = rng.gen_range(0.05..0.95);
        let x = rng.gen_range(0.05..10.0);
        let p = StableDensityParams::new(nu).map_err(|e| e.to_string())?;
        let v = stable_laplace_check(&p, x).map_err(|e| e.to_string())?;
        laplace = laplace.max((v - (-x.powf(nu)).exp()).abs());
    }
    ensure(
        poisson <= 1e-5 && laplace <= 1e-4,
        format!("Poisson max rel {poisson:.2e} (1000 probes), Laplace max dev {laplace:.2e} (20 probes)"),
    )
}

fn c3_stable_density() -> Check {
    let mut worst_mass: f64 = 0.0;
    let mut worst_jump: f64 = 0.0;
    let mut worst_sup: f64 = 0.0;
    for nu in [0.3, 0.5, 0.7, 0.9] {
        let p = StableDensityParams::new(nu).map_err(|e| e.to_string())?;
        let m = stable_total_mass(&p).map_err(|e| e.to_string())?;
        worst_mass = worst_mass.max((m - 1.0).abs());
        let mut prev: Option<(f64, DensityBranch)> = None;
        let n = 600;
        for i in 0..=n {
            let s = 10f64.powf(-3.0 + 6.0 * i as f64 / n as f64);
            let (g, branch) = stable_density_with_branch(&p, s).map_err(|e| e.to_string())?;
            if !(s * g).is_finite() {
                return Err(format!("s g(s) not finite at nu={nu}, s={s}"));
            }
            worst_sup = worst_sup.max(s * g);
            if let Some((sp, bp)) = prev {
                if bp != branch {
                    // both representations on both sides of the switch
                    for z in [sp, s] {
                        if let Some(a) = density_series(&p, z) {
                            let b = density_integral(&p, z).map_err(|e| e.to_string())?.value;
                            worst_jump = worst_jump.max(rel(a, b));
                        }
                    }
                }
            }
            prev = Some((s, branch));
        }
        let _ = stable_density(&p, 1.0).map_err(|e| e.to_string())?;
    }
    ensure(
        worst_mass <= 1e-4 && worst_jump <= 1e-6 && worst_sup.is_finite(),
        format!("max |mass-1| {worst_mass:.2e}, max crossover mismatch {worst_jump:.2e}, sup s g {worst_sup:.3}"),
    )
}

fn c4_coverings() -> Check {
    let e = |e: hardy_core::Error| e.to_string();
    let b = covering_bessel::<f64>(-3, 3).map_err(e)?;
    let l = covering_laguerre::<f64>(-3, 2).map_err(e)?;
    let windows: Vec<(&str, AdmissibleCovering)> = vec![
        ("Q_B", b.clone()),
        ("Q_L", l.clone()),
        (
            "uniform",
            covering_uniform(
                DomainSpec::euclidean(2),
                1.0,
                &[Interval::new(-3.0, 3.0), Interval::new(-3.0, 3.0)],
            )
            .map_err(e)?,
        ),
        (
            "Q_B x Q_B",
            box_product(&b, &b, DEFAULT_SPLIT_BUDGET).map_err(e)?,
        ),
        (
            "Q_B x Q_L",
            box_product(
                &covering_bessel(-2, 2).map_err(e)?,
                &covering_laguerre(-2, 1).map_err(e)?,
                DEFAULT_SPLIT_BUDGET,
            )
            .map_err(e)?,
        ),
        (
            "R x Q_B",
            covering_strip(1, 2, &covering_bessel(-2, 2).map_err(e)?).map_err(e)?,
        ),
    ];
    let mut lines = Vec::new();
    let mut ok = true;
    for (name, c) in &windows {
        let r = validate_covering(c, 4000);
        let limit = 2usize.pow(c.dim() as u32) * 2;
        let mut good = r.passed() && r.neighbours_ok() && r.max_triple_overlap <= limit;
        if *name == "Q_B" {
            good &= r.c1_measured == 1.0 && r.c2_measured == 2.0;
        }
        if *name == "Q_L" {
            good &= r.c2_measured <= 4.0;
        }
        ok &= good;
        lines.push(format!(
            "{name}: {} cuboids C1={} C2={} overlap {}<={limit}{}",
            r.n_cuboids,
            r.c1_measured,
            r.c2_measured,
            r.max_triple_overlap,
            if good { "" } else { " FAILED" }
        ));
    }
    ensure(ok, lines.join("; "))
}

fn c5_partition() -> Check {
    let c = covering_bessel::<f64>(-5, 5).map_err(|e| e.to_string())?;
    let p = partition_of_unity(&c).map_err(|e| e.to_string())?;
    let (lo, hi) = (c.window[0].lo.ln(), c.window[0].hi.ln());
    let n = 100_000;
    let mut worst: f64 = 0.0;
    for i in 0..n {
        let x = (lo + (hi - lo) * (i as f64 + 0.5) / n as f64).exp();
        let s = p.sum(&[x]).map_err(|e| e.to_string())?;
        worst = worst.max((s - 1.0).abs());
    }
    let inner = c.interior();
    let consts: Vec<f64> = (0..c.len())
        .filter(|&i| inner[i])
        .map(|i| p.derivative_constant(i, 2001))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let lo_c = consts.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi_c = consts.iter().cloned().fold(0.0, f64::max);
    ensure(
        worst <= 1e-12 && hi_c - lo_c <= 1e-9,
        format!(
            "max |sum-1| {worst:.1e} on 1e5 points; derivative constant {lo_c:.6}..{hi_c:.6} over {} cuboids",
            consts.len()
        ),
    )
}

fn campaign_ok(r: &VerificationReport) -> bool {
    r.verdict.is_pass() && r.sup_constant.is_finite() && r.worst_relative_error() < 0.05
}

fn four_conditions(
    k: &KernelFamily,
    c: &AdmissibleCovering,
    cfg: &VerifierConfig,
) -> Vec<VerificationReport> {
    let mut out = vec![verify_a1prime(k, c, cfg), verify_a2prime(k, c, cfg)];
    let (gamma, _) = hardy_core::verifier::clamp_gamma(k, 0.2);
    for delta in delta_probes(gamma) {
        out.push(verify_a1(k, c, delta, cfg));
        out.push(verify_a2(k, c, delta, cfg));
    }
    out
}

fn c6_campaigns() -> Check {
    let cfg = VerifierConfig::default();
    let mut lines = Vec::new();
    let mut ok = true;
    let e = |e: hardy_core::Error| e.to_string();
    let qb = covering_bessel(-4, 4).map_err(e)?;
    for beta in [0.5, 1.0, 2.0] {
        let k = KernelFamily::bessel(beta).map_err(e)?;
        let reports = four_conditions(&k, &qb, &cfg);
        let pass = reports.iter().all(campaign_ok);
        let spread = reports.iter().map(|r| r.spread()).fold(0.0, f64::max);
        ok &= pass && spread <= 0.2;
        lines.push(format!(
            "bessel {beta}: {} reports {} spread {spread:.3}",
            reports.len(),
            if pass { "pass" } else { "FAIL" }
        ));
    }
    let ql = covering_laguerre(-3, 3).map_err(e)?;
    for alpha in [0.5, 1.0] {
        let k = KernelFamily::laguerre(alpha).map_err(e)?;
        let reports = four_conditions(&k, &ql, &cfg);
        let bad: Vec<String> = reports
            .iter()
            .filter(|r| !campaign_ok(r))
            .map(|r| format!("{} {}", r.condition_id, r.verdict.label()))
            .collect();
        ok &= bad.is_empty();
        lines.push(format!(
            "laguerre {alpha}: {} reports, failures {:?}",
            reports.len(),
            bad
        ));
    }
    let b2 = covering_bessel(-2, 2).map_err(e)?;
    let prod = box_product(&b2, &b2, DEFAULT_SPLIT_BUDGET).map_err(e)?;
    let inner = prod.interior();
    let subset: Vec<usize> = (0..prod.len()).filter(|&i| inner[i]).step_by(8).collect();
    let pcfg = VerifierConfig {
        selection: CuboidSelection::Indices(subset.clone()),
        interior_samples: 2,
        ..cfg.clone()
    };
    let k = KernelFamily::product(vec![
        KernelFamily::bessel(1.0).map_err(e)?,
        KernelFamily::bessel(1.0).map_err(e)?,
    ])
    .map_err(e)?;
    let reports = [
        verify_a0prime(&k, &prod, 0.5, &pcfg),
        verify_a1prime(&k, &prod, &pcfg),
        verify_a2prime(&k, &prod, &pcfg),
    ];
    let pass = reports.iter().all(campaign_ok);
    ok &= pass;
    lines.push(format!(
        "bessel x bessel on {} of {} interior cuboids: {}",
        subset.len(),
        inner.iter().filter(|&&b| b).count(),
        reports
            .iter()
            .map(|r| format!("{} {:.3}", r.condition_id, r.sup_constant))
            .collect::<Vec<_>>()
            .join(", ")
    ));
    ensure(ok, lines.join("; "))
}

fn c7_schrodinger() -> Check {
    let e = |e: hardy_core::Error| e.to_string();
    let c =
        covering_uniform(DomainSpec::euclidean(1), 1.0, &[Interval::new(-2.0, 2.0)]).map_err(e)?;
    let cfg = VerifierConfig {
        interior_samples: 0,
        ..VerifierConfig::default()
    };
    let scfg = SchrodingerConfig {
        half_width: 20.0,
        n_points: 800,
    };
    let one = KernelFamily::schrodinger(Potential::Constant(1.0), scfg).map_err(e)?;
    let d = verify_schrodinger_d(&one, &c, 2.0, 4, &cfg);
    let kk = verify_schrodinger_k(&one, &c, 0.5, &cfg);
    let rho = d.fitted_value("rho").unwrap_or(f64::NAN);
    let sigma_lo = kk
        .per_cuboid
        .iter()
        .map(|x| x.constant)
        .fold(f64::INFINITY, f64::min);
    let sigma_hi = kk
        .per_cuboid
        .iter()
        .map(|x| x.constant)
        .fold(f64::NEG_INFINITY, f64::max);
    let zero = KernelFamily::schrodinger(Potential::Zero, scfg).map_err(e)?;
    let control = verify_schrodinger_d(&zero, &c, 2.0, 4, &cfg);

    // h = 0.01; probes are the nodes in |x|,|y| <= 3 where the kernel is
    // within three decades of its diagonal peak
    let hcfg = SchrodingerConfig {
        half_width: 20.0,
        n_points: 4000,
    };
    let h = SchrodingerKernel::build(Potential::Harmonic, hcfg).map_err(e)?;
    let grid = h.grid().to_vec();
    let near: Vec<usize> = (0..grid.len())
        .filter(|&i| grid[i].abs() <= 3.0)
        .step_by(20)
        .collect();
    let mut mehler: f64 = 0.0;
    for t in [0.25f64, 0.5, 1.0, 2.0] {
        let (sh, ch) = ((2.0 * t).sinh(), (2.0 * t).cosh());
        let peak = (2.0 * PI * sh).powf(-0.5);
        for &i in &near {
            for &j in &near {
                let (x, y) = (grid[i], grid[j]);
                let exact = peak * (-(ch / sh) * (x * x + y * y) / 2.0 + x * y / sh).exp();
                if exact < 1e-3 * peak {
                    continue;
                }
                mehler = mehler.max(rel(h.on_grid(t, i, j), exact));
            }
        }
    }
    ensure(
        d.verdict.is_pass() && rho >= 2.0 && (0.9..=1.1).contains(&sigma_lo) && (0.9..=1.1).contains(&sigma_hi)
            && !control.verdict.is_pass()
            && mehler <= 1e-3,
        format!(
            "V=1: rho {rho:.3}, sigma {sigma_lo:.4}..{sigma_hi:.4}; V=0: D' {} (rho {:.5}); Mehler max rel {mehler:.2e}",
            control.verdict.label(),
            control.fitted_value("rho").unwrap_or(f64::NAN)
        ),
    )
}

fn c8_limits() -> Check {
    let e = |e: hardy_core::Error| e.to_string();
    let cases = [
        (KernelFamily::euclidean_heat(1), vec![0.0]),
        (KernelFamily::bessel(2.0).map_err(e)?, vec![1.0]),
        (KernelFamily::laguerre(1.0).map_err(e)?, vec![1.0]),
    ];
    let mut lines = Vec::new();
    let mut ok = true;
    for (k, x) in &cases {
        let r = verify_smalltime_limits(k, std::slice::from_ref(x), &[0.1, 0.5]).map_err(e)?;
        let last: Vec<_> = r
            .rows
            .iter()
            .filter(|row| row.t == 1e-6 && row.asserted)
            .collect();
        let worst = last
            .iter()
            .map(|row| (row.inner - 1.0).abs().max(row.outer.abs()))
            .fold(0.0, f64::max);
        let good = r.passed && last.len() == 2 && worst <= 1e-2;
        ok &= good;
        lines.push(format!("{}: worst {worst:.1e}", k.id()));
    }
    ensure(ok, lines.join("; "))
}

fn atom_seed(i: usize, j: usize) -> u64 {
    0x5eed_0000 + ((i as u64) << 8) + j as u64
}

fn c9_maximal() -> Check {
    let e = |e: hardy_core::Error| e.to_string();
    let k = KernelFamily::bessel(1.0).map_err(e)?;
    let c = covering_bessel(-4, 4).map_err(e)?;
    let mcfg = MaximalConfig::default();
    let mut per_scale = Vec::new();
    let mut min_value = f64::INFINITY;
    let mut count = 0;
    for i in 1..=7 {
        let q = &c.cuboids[i];
        let mut best: f64 = 0.0;
        for j in 0..8 {
            let a = if j == 0 {
                make_local_atom(q, &c.domain, c.kappa)
            } else {
                random_classical_atom(q, &c.domain, c.kappa, 16, atom_seed(i, j))
            }
            .map_err(e)?;
            let m = maximal_norm(&k, &a, c.kappa, &mcfg).map_err(e)?;
            if !m.value.is_finite() || m.error > 0.05 * m.value {
                return Err(format!("atom {i}/{j}: value {} error {}", m.value, m.error));
            }
            best = best.max(m.value);
            min_value = min_value.min(m.value);
            count += 1;
        }
        per_scale.push(best);
    }
    let hi = per_scale.iter().cloned().fold(0.0, f64::max);
    let lo = per_scale.iter().cloned().fold(f64::INFINITY, f64::min);
    ensure(
        min_value >= 1.0 && hi / lo <= 1.25,
        format!("{count} atoms, smallest value {min_value:.4}, per-scale max {lo:.4}..{hi:.4} (ratio {:.4})", hi / lo),
    )
}

fn c10_decomposition() -> Check {
    let e = |e: hardy_core::Error| e.to_string();
    let c = covering_bessel::<f64>(-2, 4).map_err(e)?;
    let p = partition_of_unity(&c).map_err(e)?;
    let bump = |x: &[f64]| {
        let u = (x[0] - 4.5) / 3.5;
        if u.abs() < 1.0 {
            (-1.0 / (1.0 - u * u)).exp()
        } else {
            0.0
        }
    };
    let pieces = localize(bump, &p, 1024).map_err(e)?;
    let mut sums = [0.0, 0.0];
    let mut err: f64 = 0.0;
    let mut bad = 0;
    let mut atoms = 0;
    for (slot, depth) in [6usize, 10].into_iter().enumerate() {
        for (i, fq) in &pieces {
            let d = local_decompose(fq, &c.cuboids[*i], &c.domain, c.kappa, depth).map_err(e)?;
            err = err.max(reconstruction_error(fq, &d));
            sums[slot] += d.lambda_sum();
            if depth == 6 {
                atoms += d.terms.len();
                bad += d
                    .terms
                    .iter()
                    .filter(|(_, a)| !validate_atom(a).passed())
                    .count();
            }
        }
    }
    let ratio = (sums[0] - sums[1]).abs() / sums[1];
    ensure(
        err < 1e-10 && bad == 0 && ratio <= 0.05,
        format!(
            "{} pieces, {atoms} atoms ({bad} invalid), reconstruction error {err:.1e}, lambda sum {:.4} vs {:.4} ({:.2}%)",
            pieces.len(),
            sums[0],
            sums[1],
            100.0 * ratio
        ),
    )
}

fn run_cli(args: &[&str], config: &Path, out: &Path) -> Result<i32, String> {
    let status = Command::new(env!("CARGO_BIN_EXE_hardy"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(["--seed", "7", "--threads", "4"])
        .output()
        .map_err(|e| e.to_string())?;
    Ok(status.status.code().unwrap_or(-1))
}

fn csv_files(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let mut v: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .map_err(|e| e.to_string())?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap_or_default(),
            )
        })
        .collect();
    v.sort();
    Ok(v)
}

fn c11_determinism() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = tmp.path().join("campaign.toml");
    std::fs::write(
        &config,
        "[kernel]\nkind = \"bessel\"\nbeta = 1.0\n\n[covering]\nfamily = \"bessel\"\nwindow = [-2.0, 2.0]\n\n\
         [verify]\nconditions = [\"A1'\", \"A2'\", \"A1\"]\n\n[maximal]\natoms_per_cuboid = 3\n",
    )
    .map_err(|e| e.to_string())?;
    let mut runs = Vec::new();
    for r in 0..2 {
        let out = tmp.path().join(format!("run{r}"));
        for cmd in ["verify", "maximal"] {
            let code = run_cli(&[cmd], &config, &out)?;
            if code != 0 {
                return Err(format!("hardy {cmd} exited with {code}"));
            }
        }
        runs.push(csv_files(&out)?);
    }
    let names: Vec<&str> = runs[0].iter().map(|f| f.0.as_str()).collect();
    ensure(
        runs[0] == runs[1] && names.contains(&"maximal.csv") && names.len() >= 3,
        format!("{} CSV files compared: {}", names.len(), names.join(", ")),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Check); 11] = [
        ("Bessel beta=1 closed form", c1_bessel_closed_form),
        (
            "subordination nu=1/2 and Laplace transform",
            c2_subordination,
        ),
        ("stable density mass and crossover", c3_stable_density),
        ("covering axioms", c4_coverings),
        ("partition of unity", c5_partition),
        ("condition campaigns", c6_campaigns),
        ("Schrodinger D', K and Mehler", c7_schrodinger),
        ("small-time limits", c8_limits),
        ("atom maximal norms", c9_maximal),
        ("decomposition round trip", c10_decomposition),
        ("determinism", c11_determinism),
    ];
    let only: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut failed = 0;
    for (n, (name, check)) in criteria.iter().enumerate() {
        let n = n + 1;
        if !only.is_empty() && !only.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let res = check();
        let secs = start.elapsed().as_secs_f64();
        match res {
            Ok(d) => println!("PASS {n:>2} {name} [{secs:.1}s]: {d}"),
            Err(d) => {
                failed += 1;
                println!("FAIL {n:>2} {name} [{secs:.1}s]: {d}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
