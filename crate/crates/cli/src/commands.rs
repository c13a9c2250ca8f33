use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};
use hardy_core::atoms::{
    atom_to_text, decomposition_to_text, local_decompose, localize, make_local_atom, maximal_norm,
    parse_records, random_classical_atom, reconstruction_error, validate_atom, MaximalConfig,
    Record,
};
use hardy_core::coverings::{covering_svg, partition_of_unity, validate_covering};
use hardy_core::geometry::{bounds_contains, bounds_intersect};
use hardy_core::kernels::KernelFamily;
use hardy_core::quadrature::halton;
use hardy_core::specfun::stable::{stable_laplace_check, StableDensityParams};
use hardy_core::verifier::{
    clamp_gamma, delta_probes, verify_a0, verify_a0prime, verify_a1, verify_a1prime, verify_a2,
    verify_a2prime, verify_a3, verify_a4, verify_laguerre_envelope, verify_schrodinger_d,
    verify_schrodinger_k, verify_smalltime_limits, with_sample_doubling, VerificationReport,
    VerifierConfig, ERROR_BUDGET,
};
use hardy_core::{AdmissibleCovering, Verdict};
use rayon::prelude::*;

use crate::config::CampaignConfig;
use crate::output::{csv_document, header, slug, OutDir, Outcome};

const REPORT_NOTE: &str =
    "reports assert boundedness over the probed window with the stated quadrature error";

fn num(v: f64) -> String {
    format!("{v:e}")
}

fn join(v: &[f64], sep: &str) -> String {
    v.iter()
        .map(|x| format!("{x}"))
        .collect::<Vec<_>>()
        .join(sep)
}

pub fn covering(cfg: &CampaignConfig, out: &OutDir) -> Result<Outcome> {
    let c = cfg.covering.build()?;
    let report = validate_covering(&c, cfg.covering.samples);
    let rows: Vec<Vec<String>> = c
        .cuboids
        .iter()
        .enumerate()
        .map(|(i, q)| {
            vec![
                i.to_string(),
                join(&q.center, ";"),
                join(&q.half_widths, ";"),
                format!("{}", q.diameter()),
            ]
        })
        .collect();
    out.write(
        "covering.csv",
        &csv_document(
            cfg,
            "covering",
            &["index", "center", "half_widths", "d_q"],
            &rows,
        )?,
    )?;

    let mut s = header(cfg, "covering");
    let _ = writeln!(s, "covering {}", c.id());
    let _ = writeln!(s, "cuboids {}", report.n_cuboids);
    let _ = writeln!(s, "interior {}", report.n_interior);
    let _ = writeln!(
        s,
        "c1 measured {} declared {}",
        report.c1_measured, report.c1_declared
    );
    let _ = writeln!(
        s,
        "c2 measured {} declared {}",
        report.c2_measured, report.c2_declared
    );
    let _ = writeln!(s, "max_pair_overlap {}", report.max_pair_overlap);
    let _ = writeln!(
        s,
        "coverage probes {} holes {}",
        report.coverage_probes, report.coverage_holes
    );
    let _ = writeln!(
        s,
        "triple_overlap {} limit {}",
        report.max_triple_overlap, report.overlap_limit
    );
    let _ = writeln!(s, "neighbour_violations {}", report.neighbour_violations);
    for v in &report.violations {
        let _ = writeln!(s, "violation {v}");
    }
    let _ = writeln!(
        s,
        "verdict {}",
        if report.passed() { "pass" } else { "fail" }
    );
    out.write("covering_report.txt", &s)?;

    if c.dim() == 2 {
        out.write("covering.svg", &covering_svg(&c, cfg.covering.log_axes)?)?;
    }
    if report.passed() {
        Ok(Outcome::Pass)
    } else {
        for v in &report.violations {
            eprintln!("violation: {v}");
        }
        Ok(Outcome::ConditionFailure)
    }
}

fn report_rows(cfg: &CampaignConfig, r: &VerificationReport) -> Vec<Vec<String>> {
    let mut extra = r.parameters.clone();
    extra.push(("condition".into(), r.condition_id.clone()));
    let hash = cfg.params_hash(&extra);
    r.per_cuboid
        .iter()
        .map(|e| {
            vec![
                r.condition_id.clone(),
                e.index.to_string(),
                num(e.constant),
                num(e.error),
                hash.clone(),
            ]
        })
        .collect()
}

fn report_name(r: &VerificationReport) -> String {
    match r.parameters.iter().find(|p| p.0 == "delta") {
        Some((_, d)) if r.condition_id == "A1" || r.condition_id == "A2" => {
            let d: f64 = d.parse().unwrap_or(f64::NAN);
            let d = format!("{d:.6}");
            format!(
                "{}_delta{}",
                slug(&r.condition_id),
                d.trim_end_matches('0').trim_end_matches('.')
            )
        }
        _ => slug(&r.condition_id),
    }
}

fn run_condition(
    cond: &str,
    cfg: &CampaignConfig,
    k: &KernelFamily,
    c: &AdmissibleCovering,
    vcfg: &VerifierConfig,
) -> Result<Vec<VerificationReport>> {
    let spec = &cfg.verify;
    let doubled = |run: &dyn Fn(&VerifierConfig) -> VerificationReport| {
        if spec.sample_doubling {
            with_sample_doubling(vcfg, run).0
        } else {
            run(vcfg)
        }
    };
    let (gamma, clamped) = clamp_gamma(k, spec.gamma);
    let with_gamma = |mut r: VerificationReport| {
        r.parameters.push(("gamma".into(), format!("{gamma}")));
        r.parameters
            .push(("gamma_clamped".into(), format!("{clamped}")));
        r
    };
    Ok(match cond {
        "A0" => vec![verify_a0(k, c, vcfg)],
        "A0'" => vec![verify_a0prime(k, c, spec.nu, vcfg)],
        "A1'" => vec![doubled(&|v| verify_a1prime(k, c, v))],
        "A2'" => vec![doubled(&|v| verify_a2prime(k, c, v))],
        "A1" => delta_probes(gamma)
            .iter()
            .map(|&d| with_gamma(doubled(&|v| verify_a1(k, c, d, v))))
            .collect(),
        "A2" => delta_probes(gamma)
            .iter()
            .map(|&d| with_gamma(doubled(&|v| verify_a2(k, c, d, v))))
            .collect(),
        "a3" => vec![verify_a3(k, c, vcfg)],
        "a4" => vec![verify_a4(k, &partition_of_unity(c)?, vcfg)],
        "D'" => vec![verify_schrodinger_d(
            k,
            c,
            spec.rho_target,
            spec.mass_doublings,
            vcfg,
        )],
        "K" => vec![verify_schrodinger_k(k, c, spec.sigma_target, vcfg)],
        other => bail!("unknown condition {other:?}"),
    })
}

pub fn verify(cfg: &CampaignConfig, out: &OutDir) -> Result<Outcome> {
    let k = cfg.kernel.build()?;
    let c = cfg.covering.build()?;
    let vcfg = cfg.verifier()?;
    let mut outcome = Outcome::Pass;
    let mut summary = header(cfg, "verify");
    let _ = writeln!(summary, "kernel {}", k.id());
    let _ = writeln!(summary, "covering {}", c.id());
    let _ = writeln!(summary, "note {REPORT_NOTE}");

    for cond in &cfg.verify.conditions {
        match cond.as_str() {
            "limits" => {
                let xs: Vec<Vec<f64>> = cfg
                    .verify
                    .limit_points
                    .iter()
                    .map(|&x| vec![x; k.dim()])
                    .collect();
                let r = verify_smalltime_limits(&k, &xs, &cfg.verify.limit_radii)?;
                let hash = cfg.params_hash(&[("condition".into(), "limits".into())]);
                let rows: Vec<Vec<String>> = r
                    .rows
                    .iter()
                    .map(|row| {
                        vec![
                            "limits".into(),
                            num(row.t),
                            join(&row.x, ";"),
                            num(row.r),
                            num(row.inner),
                            num(row.outer),
                            row.asserted.to_string(),
                            hash.clone(),
                        ]
                    })
                    .collect();
                let cols = [
                    "condition",
                    "t",
                    "x",
                    "r",
                    "inner",
                    "outer",
                    "asserted",
                    "params_hash",
                ];
                out.write("limits.csv", &csv_document(cfg, "verify", &cols, &rows)?)?;
                let o = if r.passed {
                    Outcome::Pass
                } else {
                    Outcome::ConditionFailure
                };
                let _ = writeln!(summary, "limits {}", if r.passed { "pass" } else { "fail" });
                outcome = outcome.worst(o);
            }
            "envelope" => {
                let r = verify_laguerre_envelope(&k, cfg.verify.envelope_probes)?;
                let ok = r.big_c.is_finite() && r.max_violation <= 1.0 + 1e-9;
                let hash = cfg.params_hash(&[("condition".into(), "envelope".into())]);
                let rows = vec![vec![
                    "envelope".into(),
                    format!("{}", r.alpha),
                    num(r.big_c),
                    num(r.c),
                    r.probes.to_string(),
                    num(r.max_violation),
                    r.power_branch.to_string(),
                    r.unit_branch.to_string(),
                    hash,
                ]];
                let cols = [
                    "condition",
                    "alpha",
                    "C",
                    "c",
                    "probes",
                    "max_violation",
                    "power_branch",
                    "unit_branch",
                    "params_hash",
                ];
                out.write("envelope.csv", &csv_document(cfg, "verify", &cols, &rows)?)?;
                let _ = writeln!(
                    summary,
                    "envelope C={:e} c={} {}",
                    r.big_c,
                    r.c,
                    if ok { "pass" } else { "fail" }
                );
                outcome = outcome.worst(if ok {
                    Outcome::Pass
                } else {
                    Outcome::ConditionFailure
                });
            }
            _ => {
                for r in run_condition(cond, cfg, &k, &c, &vcfg)? {
                    let name = report_name(&r);
                    let cols = ["condition", "cuboid", "constant", "error", "params_hash"];
                    out.write(
                        &format!("{name}.csv"),
                        &csv_document(cfg, "verify", &cols, &report_rows(cfg, &r))?,
                    )?;
                    out.write(
                        &format!("{name}.txt"),
                        &format!("{}{}", header(cfg, "verify"), r.to_text()),
                    )?;
                    let _ = writeln!(
                        summary,
                        "{name} {} sup={:e} error={:e}",
                        r.verdict.label(),
                        r.sup_constant,
                        r.sup_error
                    );
                    if let Verdict::Fail(m) | Verdict::NumericalFailure(m) = &r.verdict {
                        eprintln!("{name}: {m}");
                    }
                    outcome = outcome.worst(Outcome::of(&r.verdict));
                }
            }
        }
    }
    out.write("summary.txt", &summary)?;
    Ok(outcome)
}

/// Seed of atom `j` on cuboid `i`.
fn atom_seed(seed: u64, i: usize, j: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(((i as u64) << 20) | j as u64)
}

pub fn maximal(cfg: &CampaignConfig, out: &OutDir) -> Result<Outcome> {
    let k = cfg.kernel.build()?;
    let c = cfg.covering.build()?;
    let mcfg = MaximalConfig {
        points_per_decade: cfg.maximal.points_per_decade,
        spatial: hardy_core::quadrature::SpatialConfig {
            rel_tol: cfg.maximal.rel_tol,
            ..MaximalConfig::default().spatial
        },
    };
    let inner = c.interior();
    let jobs: Vec<(usize, usize)> = (0..c.len())
        .filter(|&i| inner[i])
        .flat_map(|i| (0..cfg.maximal.atoms_per_cuboid).map(move |j| (i, j)))
        .collect();
    let results: Vec<(
        usize,
        usize,
        &'static str,
        Result<hardy_core::atoms::MaximalEstimate>,
    )> = jobs
        .par_iter()
        .map(|&(i, j)| {
            let q = &c.cuboids[i];
            let atom = if j == 0 {
                make_local_atom(q, &c.domain, c.kappa)
            } else {
                random_classical_atom(
                    q,
                    &c.domain,
                    c.kappa,
                    cfg.maximal.noise_cells,
                    atom_seed(cfg.seed, i, j),
                )
            };
            match atom {
                Ok(a) => (
                    i,
                    j,
                    a.kind.name(),
                    maximal_norm(&k, &a, c.kappa, &mcfg).map_err(Into::into),
                ),
                Err(e) => (i, j, "invalid", Err(e.into())),
            }
        })
        .collect();

    let hash = cfg.params_hash(&[("command".into(), "maximal".into())]);
    let mut rows = Vec::new();
    let mut outcome = Outcome::Pass;
    let mut max_value: f64 = 0.0;
    for (i, j, kind, r) in &results {
        match r {
            Ok(m) => {
                max_value = max_value.max(m.value);
                if !m.value.is_finite() || m.error > ERROR_BUDGET * m.value {
                    outcome = outcome.worst(Outcome::NumericalFailure);
                } else if m.value + m.error < m.l1_norm * (1.0 - ERROR_BUDGET) {
                    // the maximal norm dominates the L1 norm
                    outcome = outcome.worst(Outcome::ConditionFailure);
                }
                rows.push(vec![
                    kind.to_string(),
                    i.to_string(),
                    j.to_string(),
                    num(m.value),
                    num(m.error),
                    num(m.l1_norm),
                    hash.clone(),
                ]);
            }
            Err(e) => {
                eprintln!("cuboid {i} atom {j}: {e}");
                outcome = outcome.worst(Outcome::NumericalFailure);
                rows.push(vec![
                    kind.to_string(),
                    i.to_string(),
                    j.to_string(),
                    "nan".into(),
                    "nan".into(),
                    "nan".into(),
                    hash.clone(),
                ]);
            }
        }
    }
    let cols = [
        "kind",
        "cuboid",
        "atom",
        "value",
        "error",
        "l1_norm",
        "params_hash",
    ];
    out.write("maximal.csv", &csv_document(cfg, "maximal", &cols, &rows)?)?;
    let mut s = header(cfg, "maximal");
    let _ = writeln!(s, "kernel {}", k.id());
    let _ = writeln!(s, "covering {}", c.id());
    let _ = writeln!(s, "atoms {}", rows.len());
    let _ = writeln!(s, "max_value {max_value:e}");
    let _ = writeln!(s, "note {REPORT_NOTE}");
    out.write("maximal_summary.txt", &s)?;
    Ok(outcome)
}

pub fn decompose(cfg: &CampaignConfig, input: Option<&Path>, out: &OutDir) -> Result<Outcome> {
    let path = input
        .map(Path::to_path_buf)
        .or_else(|| cfg.decompose.input.as_ref().map(Into::into))
        .context("decompose needs --input or decompose.input")?;
    let text =
        std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let records = parse_records::<f64>(&text)?;
    let Some(record) = records.into_iter().next() else {
        bail!("{} holds no atom or grid record", path.display());
    };
    let c = cfg.covering.build()?;
    let hash = cfg.params_hash(&[("command".into(), "decompose".into())]);
    let cols = [
        "cuboid",
        "terms",
        "lambda_sum",
        "residual",
        "reconstruction_error",
        "params_hash",
    ];
    let mut s = header(cfg, "decompose");

    let g = match record {
        Record::Atom(lambda, a) => {
            // an atom is its own decomposition
            let rep = validate_atom(&a);
            let _ = writeln!(s, "input atom ({})", a.kind.name());
            let _ = writeln!(s, "lambda_sum {:e}", lambda.abs());
            let _ = writeln!(s, "residual 0");
            let _ = writeln!(s, "reconstruction_error 0");
            let _ = writeln!(s, "atom_failures {}", rep.failures.len());
            out.write("decomposition.txt", &atom_to_text(lambda, &a))?;
            let rows = vec![vec![
                "-1".into(),
                "1".into(),
                num(lambda.abs()),
                num(0.0),
                num(0.0),
                hash,
            ]];
            out.write(
                "decomposition.csv",
                &csv_document(cfg, "decompose", &cols, &rows)?,
            )?;
            out.write("decomposition_summary.txt", &s)?;
            return Ok(if rep.passed() {
                Outcome::Pass
            } else {
                Outcome::ConditionFailure
            });
        }
        Record::Grid(g) => g,
    };

    for k in 0..g.len() {
        if g.values[k] != 0.0 {
            let cell = g.cell_bounds(k);
            let inside = bounds_intersect(&cell, &c.window).is_some_and(|b| {
                b.iter()
                    .zip(&cell)
                    .all(|(x, y)| (x.hi - x.lo - (y.hi - y.lo)).abs() <= 1e-12 * (1.0 + y.hi.abs()))
            });
            if !inside {
                eprintln!(
                    "window error: input support {:?} escapes the covering window {:?}",
                    cell, c.window
                );
                return Ok(Outcome::ConditionFailure);
            }
        }
    }

    let p = partition_of_unity(&c)?;
    let f = |x: &[f64]| {
        if bounds_contains(&g.bounds, x) {
            g.value_at(x)
        } else {
            0.0
        }
    };
    let pieces = localize(f, &p, cfg.decompose.grid_points)?;
    let decs: Vec<_> = pieces
        .par_iter()
        .map(|(i, fq)| {
            local_decompose(fq, &c.cuboids[*i], &c.domain, c.kappa, cfg.decompose.depth)
                .map(|d| (*i, fq, d))
        })
        .collect::<hardy_core::Result<_>>()?;

    let mut rows = Vec::new();
    let mut doc = String::new();
    let (mut lambda, mut residual, mut err, mut failures) = (0.0, 0.0, 0.0f64, 0usize);
    for (i, fq, d) in &decs {
        let e = reconstruction_error(fq, d);
        lambda += d.lambda_sum();
        residual += d.residual_norm;
        err += e;
        failures += d
            .terms
            .iter()
            .filter(|(_, a)| !validate_atom(a).passed())
            .count();
        let _ = writeln!(doc, "# cuboid {i}");
        doc.push_str(&decomposition_to_text(d));
        rows.push(vec![
            i.to_string(),
            d.terms.len().to_string(),
            num(d.lambda_sum()),
            num(d.residual_norm),
            num(e),
            hash.clone(),
        ]);
    }
    out.write("decomposition.txt", &doc)?;
    out.write(
        "decomposition.csv",
        &csv_document(cfg, "decompose", &cols, &rows)?,
    )?;
    let _ = writeln!(s, "pieces {}", decs.len());
    let _ = writeln!(s, "lambda_sum {lambda:e}");
    let _ = writeln!(s, "residual {residual:e}");
    let _ = writeln!(s, "reconstruction_error {err:e}");
    let _ = writeln!(s, "atom_failures {failures}");
    out.write("decomposition_summary.txt", &s)?;
    Ok(if failures > 0 {
        Outcome::ConditionFailure
    } else if !(err < 1e-10 * (1.0 + g.l1_norm())) {
        Outcome::NumericalFailure
    } else {
        Outcome::Pass
    })
}

/// Closed-form checks at `nu = 1/2` plus Laplace-transform checks of the density.
pub fn subordinate_check(cfg: &CampaignConfig, out: &OutDir) -> Result<Outcome> {
    let k = KernelFamily::subordinate(KernelFamily::euclidean_heat(1), 0.5)?;
    let hash = cfg.params_hash(&[("command".into(), "subordinate-check".into())]);
    let mut rows = Vec::new();
    let mut worst_poisson: f64 = 0.0;
    let offset = cfg.seed.wrapping_mul(1000);
    for j in 0..1000u64 {
        let u = halton(offset + j + 1, 3);
        let t = 1e-2 * 1e3f64.powf(u[0]);
        let (x, y) = (10.0 * u[1] - 5.0, 10.0 * u[2] - 5.0);
        // the subordinate family runs on time t^nu
        let v = k.eval(t * t, &[x], &[y])?;
        let exact = t / (std::f64::consts::PI * (t * t + (x - y) * (x - y)));
        let rel = (v / exact - 1.0).abs();
        worst_poisson = worst_poisson.max(rel);
        rows.push(vec![
            "poisson".into(),
            j.to_string(),
            "0.5".into(),
            num(t),
            num(x - y),
            num(v),
            num(exact),
            num(rel),
            hash.clone(),
        ]);
    }
    let mut worst_laplace: f64 = 0.0;
    for j in 0..20u64 {
        let u = halton(offset + j + 1, 2);
        let nu = 0.1 + 0.8 * u[0];
        let x = 0.05 * 200f64.powf(u[1]);
        let p = StableDensityParams::new(nu)?;
        let v = stable_laplace_check(&p, x)?;
        let exact = (-x.powf(nu)).exp();
        let dev = (v - exact).abs();
        worst_laplace = worst_laplace.max(dev);
        rows.push(vec![
            "laplace".into(),
            j.to_string(),
            format!("{nu}"),
            num(x),
            "".into(),
            num(v),
            num(exact),
            num(dev),
            hash.clone(),
        ]);
    }
    let cols = [
        "check",
        "index",
        "nu",
        "t_or_x",
        "r",
        "value",
        "reference",
        "deviation",
        "params_hash",
    ];
    out.write(
        "subordinate_check.csv",
        &csv_document(cfg, "subordinate-check", &cols, &rows)?,
    )?;
    let ok = worst_poisson <= 1e-5 && worst_laplace <= 1e-4;
    let mut s = header(cfg, "subordinate-check");
    let _ = writeln!(
        s,
        "poisson max relative deviation {worst_poisson:e} (limit 1e-5)"
    );
    let _ = writeln!(s, "laplace max deviation {worst_laplace:e} (limit 1e-4)");
    let _ = writeln!(s, "verdict {}", if ok { "pass" } else { "fail" });
    out.write("subordinate_check.txt", &s)?;
    Ok(if ok {
        Outcome::Pass
    } else {
        Outcome::ConditionFailure
    })
}
