//! Empirical estimates of the condition constants: per-cuboid campaigns for
//! (A1'), (A2'), (A1), (A2), the partition quantities (a3), (a4), Schrödinger
//! (D') and (K), envelope fits and the small-time mass limits.
//!
//! Every number here is a bound over the probed window with a stated
//! quadrature error, not a proof.

use std::fmt::Write as _;
use std::sync::Mutex;

use rayon::prelude::*;

use crate::coverings::{AdmissibleCovering, PartitionOfUnity};
use crate::error::{Error, Result};
use crate::geometry::{bounds_contains, Bounds, Interval};
use crate::kernels::{heat, KernelFamily, KernelKind};
use crate::quadrature::adaptive::{integrate_breakpoints, AdaptiveConfig, Estimate};
use crate::quadrature::qmc::halton;
use crate::quadrature::spatial::{integrate_outside, SpatialConfig, SpatialRule};
use crate::quadrature::tgrid::{sup_over_t, TGrid, DEFAULT_POINTS_PER_DECADE};

/// Quadrature error allowed relative to a reported constant.
pub const ERROR_BUDGET: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub enum CuboidSelection {
    /// Cuboids away from the window boundary.
    Interior,
    All,
    Indices(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifierConfig {
    pub points_per_decade: usize,
    /// Quasi-random `y` samples inside `Q*`, on top of the centre and corners.
    pub interior_samples: usize,
    pub spatial: SpatialConfig,
    pub selection: CuboidSelection,
    /// Probe points per cuboid for envelope fits.
    pub probes: usize,
}

impl Default for VerifierConfig {
    fn default() -> Self {
        VerifierConfig {
            points_per_decade: DEFAULT_POINTS_PER_DECADE,
            interior_samples: 8,
            spatial: SpatialConfig {
                rel_tol: 1e-4,
                abs_tol: 1e-12,
                max_leaves: 4000,
                ..SpatialConfig::default()
            },
            selection: CuboidSelection::Interior,
            probes: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CuboidEntry {
    pub index: usize,
    pub bounds: Bounds,
    pub d_q: f64,
    pub constant: f64,
    pub error: f64,
    /// The sampled `y` attaining the constant.
    pub y_arg: Vec<f64>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    Pass,
    Fail(String),
    NumericalFailure(String),
}

impl Verdict {
    pub fn is_pass(&self) -> bool {
        matches!(self, Verdict::Pass)
    }

    pub fn label(&self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail(_) => "fail",
            Verdict::NumericalFailure(_) => "numerical-failure",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    pub condition_id: String,
    pub covering_id: String,
    pub kernel_id: String,
    pub per_cuboid: Vec<CuboidEntry>,
    pub sup_constant: f64,
    /// Error estimate of the entry attaining `sup_constant`.
    pub sup_error: f64,
    pub parameters: Vec<(String, String)>,
    /// Fitted quantities (decay rates, exponents, spreads).
    pub fitted: Vec<(String, f64)>,
    pub verdict: Verdict,
}

impl VerificationReport {
    fn assemble(
        condition_id: impl Into<String>,
        covering: &AdmissibleCovering,
        k: &KernelFamily,
        per_cuboid: Vec<CuboidEntry>,
        parameters: Vec<(String, String)>,
    ) -> Self {
        let mut sup_constant = 0.0;
        let mut sup_error = 0.0;
        for e in &per_cuboid {
            if e.failure.is_none() && (e.constant > sup_constant || e.constant.is_nan()) {
                sup_constant = e.constant;
                sup_error = e.error;
            }
        }
        let mut r = VerificationReport {
            condition_id: condition_id.into(),
            covering_id: covering.id(),
            kernel_id: k.id(),
            per_cuboid,
            sup_constant,
            sup_error,
            parameters,
            fitted: Vec::new(),
            verdict: Verdict::Pass,
        };
        r.verdict = r.default_verdict();
        r
    }

    /// Finite constants whose error stays within `ERROR_BUDGET`.
    fn default_verdict(&self) -> Verdict {
        if let Some(e) = self.per_cuboid.iter().find(|e| e.failure.is_some()) {
            return Verdict::NumericalFailure(format!(
                "cuboid {}: {}",
                e.index,
                e.failure.as_deref().unwrap_or("")
            ));
        }
        if let Some(e) = self.per_cuboid.iter().find(|e| !e.constant.is_finite()) {
            return Verdict::Fail(format!("cuboid {} has unbounded constant", e.index));
        }
        if let Some(e) = self
            .per_cuboid
            .iter()
            .find(|e| e.error > ERROR_BUDGET * e.constant.abs() && e.error > 1e-12)
        {
            return Verdict::NumericalFailure(format!(
                "cuboid {}: error {:e} exceeds {}% of {:e}",
                e.index,
                e.error,
                100.0 * ERROR_BUDGET,
                e.constant
            ));
        }
        Verdict::Pass
    }

    pub fn fitted_value(&self, name: &str) -> Option<f64> {
        self.fitted.iter().find(|(n, _)| n == name).map(|p| p.1)
    }

    /// `(max - min) / max` of the per-cuboid constants.
    pub fn spread(&self) -> f64 {
        let vals: Vec<f64> = self.per_cuboid.iter().map(|e| e.constant).collect();
        spread(&vals)
    }

    /// Largest `error / constant` over the entries.
    pub fn worst_relative_error(&self) -> f64 {
        self.per_cuboid
            .iter()
            .map(|e| {
                if e.constant != 0.0 {
                    e.error / e.constant.abs()
                } else {
                    0.0
                }
            })
            .fold(0.0, f64::max)
    }

    /// Record-per-cuboid text document.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "condition {}", self.condition_id);
        let _ = writeln!(s, "kernel {}", self.kernel_id);
        let _ = writeln!(s, "covering {}", self.covering_id);
        for (k, v) in &self.parameters {
            let _ = writeln!(s, "param {k} = {v}");
        }
        for (k, v) in &self.fitted {
            let _ = writeln!(s, "fitted {k} = {v:e}");
        }
        let _ = writeln!(s, "sup_constant {:e}", self.sup_constant);
        let _ = writeln!(s, "sup_error {:e}", self.sup_error);
        let _ = writeln!(s, "verdict {}", self.verdict.label());
        if let Verdict::Fail(m) | Verdict::NumericalFailure(m) = &self.verdict {
            let _ = writeln!(s, "reason {m}");
        }
        let _ = writeln!(
            s,
            "note bounded over the probed window with the stated quadrature error"
        );
        for e in &self.per_cuboid {
            let b: Vec<String> = e
                .bounds
                .iter()
                .map(|i| format!("{}:{}", i.lo, i.hi))
                .collect();
            let y: Vec<String> = e.y_arg.iter().map(|v| format!("{v}")).collect();
            let _ = writeln!(
                s,
                "cuboid {} box={} d_q={:e} constant={:e} error={:e} y={}{}",
                e.index,
                b.join(","),
                e.d_q,
                e.constant,
                e.error,
                y.join(","),
                e.failure
                    .as_ref()
                    .map(|f| format!(" failure={f}"))
                    .unwrap_or_default()
            );
        }
        s
    }
}

pub fn spread(vals: &[f64]) -> f64 {
    let (lo, hi) = vals
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
    if hi > 0.0 {
        (hi - lo) / hi
    } else {
        0.0
    }
}

fn selected(c: &AdmissibleCovering, sel: &CuboidSelection) -> Vec<usize> {
    match sel {
        CuboidSelection::All => (0..c.len()).collect(),
        CuboidSelection::Interior => {
            let inner = c.interior();
            let v: Vec<usize> = (0..c.len()).filter(|&i| inner[i]).collect();
            if v.is_empty() {
                (0..c.len()).collect()
            } else {
                v
            }
        }
        CuboidSelection::Indices(ix) => ix.iter().copied().filter(|&i| i < c.len()).collect(),
    }
}

/// Centre, corners and quasi-random interior points of `Q*`.
pub fn y_samples(c: &AdmissibleCovering, i: usize, interior: usize) -> Vec<Vec<f64>> {
    let q = &c.cuboids[i];
    let star = c.enlarged(i, 1);
    let d = star.len();
    let mut out = vec![q.center.clone()];
    for mask in 0..(1usize << d) {
        out.push(
            (0..d)
                .map(|j| {
                    if mask >> j & 1 == 1 {
                        star[j].hi
                    } else {
                        star[j].lo
                    }
                })
                .collect(),
        );
    }
    for k in 0..interior {
        let u = halton(k as u64 + 1, d);
        out.push(
            (0..d)
                .map(|j| star[j].lo + u[j] * (star[j].hi - star[j].lo))
                .collect(),
        );
    }
    out
}

/// First error raised inside a closure that must return plain numbers.
struct Trap(Mutex<Option<Error>>);

impl Trap {
    fn new() -> Self {
        Trap(Mutex::new(None))
    }

    fn catch(&self, r: Result<f64>) -> f64 {
        match r {
            Ok(v) => v,
            Err(e) => {
                let mut g = self.0.lock().unwrap_or_else(|p| p.into_inner());
                g.get_or_insert(e);
                0.0
            }
        }
    }

    fn into_result(self) -> Result<()> {
        match self.0.into_inner().unwrap_or_else(|p| p.into_inner()) {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }
}

/// Max over `y` samples of `scale * estimate(y)`, as a cuboid entry.
fn entry_over_y<F>(
    c: &AdmissibleCovering,
    i: usize,
    cfg: &VerifierConfig,
    scale: f64,
    estimate: F,
) -> CuboidEntry
where
    F: Fn(&[f64]) -> Result<Estimate>,
{
    let q = &c.cuboids[i];
    let mut entry = CuboidEntry {
        index: i,
        bounds: q.bounds(),
        d_q: q.diameter(),
        constant: 0.0,
        error: 0.0,
        y_arg: q.center.clone(),
        failure: None,
    };
    for y in y_samples(c, i, cfg.interior_samples) {
        if !c.domain.contains(&y) {
            continue;
        }
        match estimate(&y) {
            Ok(est) => {
                let v = scale * est.value;
                if v > entry.constant || !v.is_finite() {
                    entry.constant = v;
                    entry.error = scale * est.error;
                    entry.y_arg = y;
                }
                if !v.is_finite() {
                    break;
                }
            }
            Err(e) => {
                entry.failure = Some(e.to_string());
                break;
            }
        }
    }
    entry
}

fn run_cuboids<F>(c: &AdmissibleCovering, cfg: &VerifierConfig, f: F) -> Vec<CuboidEntry>
where
    F: Fn(usize) -> CuboidEntry + Sync + Send,
{
    let idx = selected(c, &cfg.selection);
    idx.par_iter().map(|&i| f(i)).collect()
}

fn base_params(c: &AdmissibleCovering, cfg: &VerifierConfig) -> Vec<(String, String)> {
    vec![
        ("kappa".into(), format!("{}", c.kappa)),
        (
            "points_per_decade".into(),
            format!("{}", cfg.points_per_decade),
        ),
        (
            "interior_samples".into(),
            format!("{}", cfg.interior_samples),
        ),
        ("rel_tol".into(), format!("{:e}", cfg.spatial.rel_tol)),
        (
            "window_factor".into(),
            format!("{}", cfg.spatial.window_factor),
        ),
    ]
}

/// `∫_{(Q**)^c} sup_{t>0} t^delta T_t(x, y) dx` for one `y`.
fn complement_sup(
    k: &KernelFamily,
    c: &AdmissibleCovering,
    i: usize,
    y: &[f64],
    delta: f64,
    cfg: &VerifierConfig,
) -> Result<Estimate> {
    let q = &c.cuboids[i];
    let hole = c.enlarged(i, 2);
    let grid = TGrid::all_times(q.diameter(), cfg.points_per_decade)?;
    let trap = Trap::new();
    let f = |x: &[f64]| sup_over_t(&grid, delta, |t| trap.catch(k.eval(t, x, y))).value;
    let out = integrate_outside(
        f,
        &hole,
        k.domain(),
        &q.center,
        q.diameter(),
        None,
        &cfg.spatial,
    )?;
    trap.into_result()?;
    Ok(out.total())
}

/// (A1'): `sup_{y ∈ Q*} ∫_{(Q**)^c} sup_{t>0} T_t(x, y) dx`.
pub fn verify_a1prime(
    k: &KernelFamily,
    c: &AdmissibleCovering,
    cfg: &VerifierConfig,
) -> VerificationReport {
    let entries = run_cuboids(c, cfg, |i| {
        entry_over_y(c, i, cfg, 1.0, |y| complement_sup(k, c, i, y, 0.0, cfg))
    });
    let mut r = VerificationReport::assemble("A1'", c, k, entries, base_params(c, cfg));
    r.fitted.push(("spread".into(), r.spread()));
    r
}

/// (A1) at one `delta`: `d_Q^{-2 delta} ∫_{(Q**)^c} sup_t t^delta T_t(x, y) dx`.
pub fn verify_a1(
    k: &KernelFamily,
    c: &AdmissibleCovering,
    delta: f64,
    cfg: &VerifierConfig,
) -> VerificationReport {
    let entries = run_cuboids(c, cfg, |i| {
        let dq = c.cuboids[i].diameter();
        entry_over_y(c, i, cfg, dq.powf(-2.0 * delta), |y| {
            complement_sup(k, c, i, y, delta, cfg)
        })
    });
    let mut p = base_params(c, cfg);
    p.push(("delta".into(), format!("{delta}")));
    let mut r = VerificationReport::assemble("A1", c, k, entries, p);
    r.fitted.push(("spread".into(), r.spread()));
    r
}

/// `∫_{Q**} sup_{t <= d_Q^2} t^{-delta} |T_t - T~_t|(x, y) dx` for one `y`.
fn local_difference(
    k: &KernelFamily,
    c: &AdmissibleCovering,
    i: usize,
    y: &[f64],
    delta: f64,
    cfg: &VerifierConfig,
) -> Result<Estimate> {
    let q = &c.cuboids[i];
    let region = c.enlarged(i, 2);
    let grid = TGrid::up_to(q.diameter(), cfg.points_per_decade)?;
    let cmp = k.comparison();
    let trap = Trap::new();
    let f = |x: &[f64]| {
        sup_over_t(&grid, -delta, |t| {
            let a = trap.catch(k.eval(t, x, y));
            let b = trap.catch(cmp.eval(t, x, y));
            (a - b).abs()
        })
        .value
    };
    let est = SpatialRule::on_box(region, cfg.spatial.clone())
        .with_focus(y)
        .integrate_best_effort(f);
    trap.into_result()?;
    Ok(est)
}

/// (A2) at one `delta`: `d_Q^{2 delta} ∫_{Q**} sup_{t<d_Q^2} t^{-delta}|T_t - H_t| dx`.
pub fn verify_a2(
    k: &KernelFamily,
    c: &AdmissibleCovering,
    delta: f64,
    cfg: &VerifierConfig,
) -> VerificationReport {
    let entries = run_cuboids(c, cfg, |i| {
        let dq = c.cuboids[i].diameter();
        entry_over_y(c, i, cfg, dq.powf(2.0 * delta), |y| {
            local_difference(k, c, i, y, delta, cfg)
        })
    });
    let mut p = base_params(c, cfg);
    p.push(("delta".into(), format!("{delta}")));
    p.push(("comparison".into(), k.comparison().id()));
    let mut r = VerificationReport::assemble("A2", c, k, entries, p);
    r.fitted.push(("spread".into(), r.spread()));
    r
}

/// (A2') against the family's comparison kernel.
pub fn verify_a2prime(
    k: &KernelFamily,
    c: &AdmissibleCovering,
    cfg: &VerifierConfig,
) -> VerificationReport {
    let mut r = verify_a2(k, c, 0.0, cfg);
    r.condition_id = "A2'".into();
    r
}

/// Upper end of the admissible `gamma` window for a family.
pub fn gamma_window(k: &KernelFamily) -> f64 {
    match k.kind() {
        KernelKind::Bessel { beta } => (0.5f64).min(beta / 2.0),
        KernelKind::Laguerre { alpha } => (0.25f64).min(alpha / 2.0 + 0.25),
        _ => 1.0 / 3.0,
    }
}

/// `gamma` clamped into `(0, window)` and whether the clamp moved it.
pub fn clamp_gamma(k: &KernelFamily, gamma: f64) -> (f64, bool) {
    let upper = gamma_window(k).min(1.0 / 3.0);
    if gamma > 0.0 && gamma < upper {
        (gamma, false)
    } else {
        (0.9 * upper, true)
    }
}

/// The three probed `delta` values `{0, gamma/2, 0.9 gamma}`.
pub fn delta_probes(gamma: f64) -> [f64; 3] {
    [0.0, gamma / 2.0, 0.9 * gamma]
}

/// (A1) and (A2) at the probed `delta` values, with the `gamma` clamp recorded.
pub fn verify_a1_a2_campaign(
    k: &KernelFamily,
    c: &AdmissibleCovering,
    gamma: f64,
    cfg: &VerifierConfig,
) -> Vec<VerificationReport> {
    let (g, clamped) = clamp_gamma(k, gamma);
    let mut out = Vec::new();
    for delta in delta_probes(g) {
        for mut r in [verify_a1(k, c, delta, cfg), verify_a2(k, c, delta, cfg)] {
            r.parameters.push(("gamma".into(), format!("{g}")));
            r.parameters
                .push(("gamma_clamped".into(), format!("{clamped}")));
            out.push(r);
        }
    }
    out
}

/// Largest ratio between the constants of one condition at consecutive probed
/// `delta` values; order-of-magnitude jumps show up as ratios near 10.
pub fn delta_continuity(reports: &[VerificationReport], condition: &str) -> f64 {
    let consts: Vec<f64> = reports
        .iter()
        .filter(|r| r.condition_id == condition)
        .map(|r| r.sup_constant)
        .collect();
    consts
        .windows(2)
        .map(|w| {
            if w[0] > 0.0 && w[1] > 0.0 {
                (w[0] / w[1]).max(w[1] / w[0])
            } else {
                1.0
            }
        })
        .fold(1.0, f64::max)
}

/// Runs a campaign with the configured y-sample count and again with it
/// doubled; returns the doubled report and the relative change of the sup.
pub fn with_sample_doubling<F>(cfg: &VerifierConfig, run: F) -> (VerificationReport, f64)
where
    F: Fn(&VerifierConfig) -> VerificationReport,
{
    let base = run(cfg);
    let doubled_cfg = VerifierConfig {
        interior_samples: (2 * cfg.interior_samples).max(1),
        ..cfg.clone()
    };
    let mut doubled = run(&doubled_cfg);
    let change = if doubled.sup_constant != 0.0 {
        ((doubled.sup_constant - base.sup_constant) / doubled.sup_constant).abs()
    } else {
        0.0
    };
    doubled
        .fitted
        .push(("sample_doubling_change".into(), change));
    (doubled, change)
}

fn log_uniform(lo: f64, hi: f64, u: f64) -> f64 {
    lo * (hi / lo).powf(u)
}

/// Probe `(t, x, y)` triples with `y ∈ Q*`, `x` in the window, and `t` spanning
/// `[1e-6, 1e2] d_Q^2`.
fn probes(c: &AdmissibleCovering, i: usize, n: usize) -> Vec<(f64, Vec<f64>, Vec<f64>)> {
    let d = c.dim();
    let q = &c.cuboids[i];
    let star = c.enlarged(i, 1);
    let dq = q.diameter();
    (0..n)
        .map(|k| {
            let u = halton(k as u64 + 1, 1 + 2 * d);
            let t = log_uniform(1e-6 * dq * dq, 1e2 * dq * dq, u[0]);
            let x = (0..d)
                .map(|j| {
                    let w = c.window[j];
                    if w.lo > 0.0 {
                        log_uniform(w.lo, w.hi, u[1 + j])
                    } else {
                        w.lo + u[1 + j] * (w.hi - w.lo)
                    }
                })
                .collect();
            let y = (0..d)
                .map(|j| star[j].lo + u[1 + d + j] * (star[j].hi - star[j].lo))
                .collect();
            (t, x, y)
        })
        .collect()
}

/// (A0'): fitted `C` in `T_t <= C t^nu / (t + |x-y|^2)^{d/2+nu}`.
pub fn verify_a0prime(
    k: &KernelFamily,
    c: &AdmissibleCovering,
    nu: f64,
    cfg: &VerifierConfig,
) -> VerificationReport {
    let d = k.dim() as f64;
    let entries = run_cuboids(c, cfg, |i| {
        let q = &c.cuboids[i];
        let mut e = CuboidEntry {
            index: i,
            bounds: q.bounds(),
            d_q: q.diameter(),
            constant: 0.0,
            error: 0.0,
            y_arg: q.center.clone(),
            failure: None,
        };
        for (t, x, y) in probes(c, i, cfg.probes) {
            match k.eval(t, &x, &y) {
                Ok(v) => {
                    let r2: f64 = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum();
                    let ratio = v * (t + r2).powf(d / 2.0 + nu) / t.powf(nu);
                    if ratio > e.constant {
                        e.constant = ratio;
                        e.y_arg = y;
                    }
                }
                Err(err) => {
                    e.failure = Some(err.to_string());
                    break;
                }
            }
        }
        e
    });
    let mut p = base_params(c, cfg);
    p.push(("nu".into(), format!("{nu}")));
    p.push(("probes".into(), format!("{}", cfg.probes)));
    VerificationReport::assemble("A0'", c, k, entries, p)
}

/// (A0) for a family: smallest `C` over `c ∈ {1, 2, 4, 8, 16}` in
/// `T_t <= C t^{-d/2} exp(-|x-y|^2 / (c t))`.
pub fn verify_a0(
    k: &KernelFamily,
    c: &AdmissibleCovering,
    cfg: &VerifierConfig,
) -> VerificationReport {
    let d = k.dim() as f64;
    let cs = [1.0, 2.0, 4.0, 8.0, 16.0];
    let all: Vec<(usize, Vec<(f64, f64, f64)>, Option<String>)> = selected(c, &cfg.selection)
        .par_iter()
        .map(|&i| {
            let mut rows = Vec::new();
            for (t, x, y) in probes(c, i, cfg.probes) {
                match k.eval(t, &x, &y) {
                    Ok(v) => {
                        let r2: f64 = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum();
                        rows.push((t, r2, v));
                    }
                    Err(e) => return (i, rows, Some(e.to_string())),
                }
            }
            (i, rows, None)
        })
        .collect();
    let fit = |cc: f64| -> f64 {
        all.iter()
            .flat_map(|(_, rows, _)| rows.iter())
            .map(|&(t, r2, v)| {
                if v > 0.0 {
                    (v.ln() + 0.5 * d * t.ln() + r2 / (cc * t)).exp()
                } else {
                    0.0
                }
            })
            .fold(0.0, f64::max)
    };
    let (best_c, _) = cs
        .iter()
        .map(|&cc| (cc, fit(cc)))
        .fold(
            (cs[0], f64::INFINITY),
            |acc, p| if p.1 < acc.1 { p } else { acc },
        );
    let entries = all
        .into_iter()
        .map(|(i, rows, failure)| {
            let q = &c.cuboids[i];
            let constant = rows
                .iter()
                .map(|&(t, r2, v)| {
                    if v > 0.0 {
                        (v.ln() + 0.5 * d * t.ln() + r2 / (best_c * t)).exp()
                    } else {
                        0.0
                    }
                })
                .fold(0.0, f64::max);
            CuboidEntry {
                index: i,
                bounds: q.bounds(),
                d_q: q.diameter(),
                constant,
                error: 0.0,
                y_arg: q.center.clone(),
                failure,
            }
        })
        .collect();
    let mut r = VerificationReport::assemble("A0", c, k, entries, base_params(c, cfg));
    r.fitted.push(("C".into(), r.sup_constant));
    r.fitted.push(("c".into(), best_c));
    r
}

/// (a3): `sup_{y∈Q*} ∫_{Q**} sup_{t > d_Q^2} T_t(x, y) dx`.
pub fn verify_a3(
    k: &KernelFamily,
    c: &AdmissibleCovering,
    cfg: &VerifierConfig,
) -> VerificationReport {
    let entries = run_cuboids(c, cfg, |i| {
        entry_over_y(c, i, cfg, 1.0, |y| {
            let q = &c.cuboids[i];
            let grid = TGrid::beyond(q.diameter(), cfg.points_per_decade)?;
            let trap = Trap::new();
            let f = |x: &[f64]| sup_over_t(&grid, 0.0, |t| trap.catch(k.eval(t, x, y))).value;
            let est = SpatialRule::on_box(c.enlarged(i, 2), cfg.spatial.clone())
                .with_focus(y)
                .integrate_best_effort(f);
            trap.into_result()?;
            Ok(est)
        })
    });
    VerificationReport::assemble("a3", c, k, entries, base_params(c, cfg))
}

/// (a4): for `y` samples in the window,
/// `Σ_Q ∫_{Q**} sup_{t<=d_Q^2} T_t(x,y) |psi_Q(x) - psi_Q(y)| dx`, summed over
/// the window's cuboids. One entry per cuboid whose `Q*` supplies the `y`.
pub fn verify_a4(
    k: &KernelFamily,
    p: &PartitionOfUnity,
    cfg: &VerifierConfig,
) -> VerificationReport {
    let c = &p.covering;
    let entries = run_cuboids(c, cfg, |i| {
        entry_over_y(c, i, cfg, 1.0, |y| {
            let psi_y: Vec<f64> = (0..c.len()).map(|j| p.psi(j, y)).collect::<Result<_>>()?;
            let mut total = Estimate::default();
            for j in 0..c.len() {
                let qj = &c.cuboids[j];
                let region = c.enlarged(j, 2);
                let grid = TGrid::up_to(qj.diameter(), cfg.points_per_decade)?;
                let trap = Trap::new();
                let f = |x: &[f64]| {
                    let w = (trap.catch(p.psi(j, x)) - psi_y[j]).abs();
                    if w == 0.0 {
                        return 0.0;
                    }
                    w * sup_over_t(&grid, 0.0, |t| trap.catch(k.eval(t, x, y))).value
                };
                let mut rule = SpatialRule::on_box(region.clone(), cfg.spatial.clone());
                if bounds_contains(&region, y) {
                    rule = rule.with_focus(y);
                }
                // the partition is piecewise linear with kinks on Q and Q* faces
                let star = c.enlarged(j, 1);
                for (ax, (b, s)) in qj.bounds().iter().zip(&star).enumerate() {
                    rule = rule.with_breakpoints(ax, &[b.lo, b.hi, s.lo, s.hi]);
                }
                total = total + rule.integrate_best_effort(f);
                trap.into_result()?;
            }
            Ok(total)
        })
    });
    VerificationReport::assemble("a4", c, k, entries, base_params(c, cfg))
}

fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (slope, my - slope * mx)
}

/// (D'): full masses at `t = 2^n d_Q^2`, `n = 0..=n_max`, maxed over `y ∈ Q*`;
/// the least-squares slope of `ln mass` against `n` gives `rho = e^{-slope}`.
/// Passes when the smallest per-cuboid `rho` reaches `rho_target`.
pub fn verify_schrodinger_d(
    k: &KernelFamily,
    c: &AdmissibleCovering,
    rho_target: f64,
    n_max: usize,
    cfg: &VerifierConfig,
) -> VerificationReport {
    let entries = run_cuboids(c, cfg, |i| {
        let q = &c.cuboids[i];
        let dq = q.diameter();
        let mut e = CuboidEntry {
            index: i,
            bounds: q.bounds(),
            d_q: dq,
            constant: 0.0,
            error: 0.0,
            y_arg: q.center.clone(),
            failure: None,
        };
        let mut ns = Vec::new();
        let mut logs = Vec::new();
        for n in 0..=n_max {
            let t = 2f64.powi(n as i32) * dq * dq;
            let mut m: f64 = 0.0;
            for y in y_samples(c, i, cfg.interior_samples) {
                match k.mass(t, &y, f64::INFINITY) {
                    Ok(v) => m = m.max(v),
                    Err(err) => {
                        e.failure = Some(err.to_string());
                        return e;
                    }
                }
            }
            ns.push(n as f64);
            logs.push(m.max(1e-300).ln());
        }
        let (slope, _) = linear_fit(&ns, &logs);
        // the entry constant is the fitted rho
        e.constant = (-slope).exp();
        e
    });
    let mut p = base_params(c, cfg);
    p.push(("rho_target".into(), format!("{rho_target}")));
    p.push(("n_max".into(), format!("{n_max}")));
    let mut r = VerificationReport::assemble("D'", c, k, entries, p);
    let rho = r
        .per_cuboid
        .iter()
        .map(|e| e.constant)
        .fold(f64::INFINITY, f64::min);
    r.fitted.push(("rho".into(), rho));
    if r.verdict.is_pass() && !(rho >= rho_target) {
        r.verdict = Verdict::Fail(format!("fitted rho {rho} below target {rho_target}"));
    }
    r
}

/// (K): `F(t) = sup_y ∫_0^t ∫_{Q***} H_s(x, y) V(x) dx ds` on `t ∈ [1e-4, 1] d_Q^2`;
/// `sigma` is the log-log slope of `F` against `t / d_Q^2`. Passes when the
/// smallest per-cuboid `sigma` reaches `sigma_target` (a zero `F` passes).
pub fn verify_schrodinger_k(
    k: &KernelFamily,
    c: &AdmissibleCovering,
    sigma_target: f64,
    cfg: &VerifierConfig,
) -> VerificationReport {
    let pot = match k.kind() {
        KernelKind::Schrodinger(s) => Some(s.potential.clone()),
        _ => None,
    };
    let entries = run_cuboids(c, cfg, |i| {
        let q = &c.cuboids[i];
        let dq = q.diameter();
        let mut e = CuboidEntry {
            index: i,
            bounds: q.bounds(),
            d_q: dq,
            constant: f64::INFINITY,
            error: 0.0,
            y_arg: q.center.clone(),
            failure: None,
        };
        let Some(pot) = pot.as_ref() else {
            e.failure = Some("condition (K) needs a Schrödinger family".into());
            return e;
        };
        let region = c.enlarged(i, 3)[0];
        let acfg = AdaptiveConfig::with_tol(1e-14, 1e-9);
        let inner = |s: f64, y: f64| -> Result<f64> {
            let sq = s.sqrt();
            let mut pts = vec![region.lo];
            for m in [-8.0, -2.0, 0.0, 2.0, 8.0] {
                let p = y + m * sq;
                if p > region.lo && p < region.hi {
                    pts.push(p);
                }
            }
            pts.push(region.hi);
            Ok(integrate_breakpoints(
                |x| heat(s, 1, (x - y) * (x - y)) * pot.value(x),
                &pts,
                &acfg,
            )?
            .value)
        };
        let ts: Vec<f64> = (0..=8)
            .map(|j| dq * dq * 10f64.powf(-4.0 + 0.5 * j as f64))
            .collect();
        let mut fs = vec![0.0f64; ts.len()];
        for y in y_samples(c, i, cfg.interior_samples) {
            for (j, &t) in ts.iter().enumerate() {
                let trap = Trap::new();
                let pts: Vec<f64> = (0..=12).map(|m| t * 10f64.powf(-12.0 + m as f64)).collect();
                let mut bp = vec![0.0];
                bp.extend(pts.into_iter().filter(|&p| p < t));
                bp.push(t);
                let v = integrate_breakpoints(
                    |s| {
                        if s <= 0.0 {
                            0.0
                        } else {
                            trap.catch(inner(s, y[0]))
                        }
                    },
                    &bp,
                    &acfg,
                );
                if let Err(err) = trap
                    .into_result()
                    .and(v.as_ref().map(|_| ()).map_err(|e| e.clone()))
                {
                    e.failure = Some(err.to_string());
                    return e;
                }
                fs[j] = fs[j].max(v.map(|v| v.value).unwrap_or(0.0));
            }
        }
        if fs.iter().all(|&f| f == 0.0) {
            e.constant = f64::INFINITY;
            e.error = 0.0;
            return e;
        }
        let xs: Vec<f64> = ts.iter().map(|t| (t / (dq * dq)).ln()).collect();
        let ys: Vec<f64> = fs.iter().map(|f| f.max(1e-300).ln()).collect();
        let (sigma, _) = linear_fit(&xs, &ys);
        e.constant = sigma;
        e
    });
    let mut p = base_params(c, cfg);
    p.push(("sigma_target".into(), format!("{sigma_target}")));
    let mut r = VerificationReport::assemble("K", c, k, entries.clone(), p);
    // constants here are exponents; an infinite exponent means V vanishes on Q***
    let sigma = entries
        .iter()
        .map(|e| e.constant)
        .fold(f64::INFINITY, f64::min);
    r.sup_constant = sigma;
    r.fitted.push(("sigma".into(), sigma));
    r.verdict = if let Some(e) = entries.iter().find(|e| e.failure.is_some()) {
        Verdict::NumericalFailure(e.failure.clone().unwrap_or_default())
    } else if sigma >= sigma_target {
        Verdict::Pass
    } else {
        Verdict::Fail(format!("fitted sigma {sigma} below target {sigma_target}"))
    };
    r
}

#[derive(Debug, Clone, PartialEq)]
pub struct LimitRow {
    pub t: f64,
    pub x: Vec<f64>,
    pub r: f64,
    pub inner: f64,
    pub outer: f64,
    /// `r >= LIMIT_MIN_RADIUS` and `x` is at least `r` from the boundary.
    pub asserted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmallTimeReport {
    pub kernel_id: String,
    pub rows: Vec<LimitRow>,
    pub passed: bool,
}

pub const SMALL_TIMES: [f64; 5] = [1e-2, 1e-3, 1e-4, 1e-5, 1e-6];

/// Radii below this are reported but not asserted.
pub const LIMIT_MIN_RADIUS: f64 = 0.1;

/// Inner and outer masses `∫_{|x-y|<=r} T_t(x,y) dy` and `∫_{|x-y|>r}`.
/// At `t = 1e-6` rows with `dist(x, ∂X) >= r >= LIMIT_MIN_RADIUS` must be
/// within `1e-2` of 1 and 0.
pub fn verify_smalltime_limits(
    k: &KernelFamily,
    xs: &[Vec<f64>],
    rs: &[f64],
) -> Result<SmallTimeReport> {
    let mut rows = Vec::new();
    let mut passed = true;
    for x in xs {
        for &r in rs {
            let asserted = r >= LIMIT_MIN_RADIUS && k.domain().boundary_distance(x) >= r;
            for &t in &SMALL_TIMES {
                let total = k.mass(t, x, f64::INFINITY)?;
                let inner = k.mass(t, x, r)?;
                let outer = (total - inner).max(0.0);
                if asserted && t == 1e-6 && ((inner - 1.0).abs() > 1e-2 || outer > 1e-2) {
                    passed = false;
                }
                rows.push(LimitRow {
                    t,
                    x: x.clone(),
                    r,
                    inner,
                    outer,
                    asserted,
                });
            }
        }
    }
    Ok(SmallTimeReport {
        kernel_id: k.id(),
        rows,
        passed,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeReport {
    pub alpha: f64,
    pub big_c: f64,
    pub c: f64,
    pub probes: usize,
    pub max_violation: f64,
    /// Probes where `min(1, (xy/t)^{alpha+1/2})` takes the power branch.
    pub power_branch: usize,
    pub unit_branch: usize,
}

/// Laguerre envelope `C t^{-1/2} e^{-c|x-y|^2/t} e^{-ctxy} min(1, (xy/t)^{alpha+1/2})`
/// fitted over quasi-random probes with `t ∈ [1e-4, 1]`, `x, y ∈ [1e-3, 10]`.
pub fn verify_laguerre_envelope(k: &KernelFamily, probes: usize) -> Result<EnvelopeReport> {
    let KernelKind::Laguerre { alpha } = *k.kind() else {
        return Err(Error::domain("envelope fit needs a Laguerre family"));
    };
    let e = alpha + 0.5;
    let mut pts = Vec::with_capacity(probes);
    for j in 0..probes {
        let u = halton(j as u64 + 1, 3);
        let t = log_uniform(1e-4, 1.0, u[0]);
        let x = log_uniform(1e-3, 10.0, u[1]);
        let y = log_uniform(1e-3, 10.0, u[2]);
        pts.push((t, x, y, k.eval(t, &[x], &[y])?));
    }
    let shape = |t: f64, x: f64, y: f64, c: f64| {
        let m = (e * (x * y / t).ln()).min(0.0);
        -0.5 * t.ln() - c * (x - y) * (x - y) / t - c * t * x * y + m
    };
    let fit = |c: f64| {
        pts.iter()
            .map(|&(t, x, y, v)| {
                if v > 0.0 {
                    v.ln() - shape(t, x, y, c)
                } else {
                    f64::NEG_INFINITY
                }
            })
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let mut best = (0.0, f64::INFINITY);
    for c in [
        1.0 / 64.0,
        1.0 / 32.0,
        1.0 / 16.0,
        1.0 / 8.0,
        0.25,
        0.5,
        1.0,
    ] {
        let lc = fit(c);
        if lc < best.1 {
            best = (c, lc);
        }
    }
    let (c, log_c) = best;
    let big_c = log_c.exp();
    let max_violation = pts
        .iter()
        .map(|&(t, x, y, v)| v / (big_c * shape(t, x, y, c).exp()))
        .fold(0.0, f64::max);
    let power_branch = pts.iter().filter(|&&(t, x, y, _)| x * y < t).count();
    Ok(EnvelopeReport {
        alpha,
        big_c,
        c,
        probes,
        max_violation,
        power_branch,
        unit_branch: probes - power_branch,
    })
}

/// Bounds of a cuboid as a plain list, for reports on product windows.
pub fn window_of(c: &AdmissibleCovering) -> Vec<Interval> {
    c.window.clone()
}
