//! One-sided `nu`-stable subordinator density `g_nu`, its Laplace transform
//! check, and a reusable quadrature table for `∫ F(s) g_nu(s) ds`.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::quadrature::adaptive::{
    gauss_legendre, integrate, integrate_breakpoints_partial, integrate_from_neg_infinity,
    integrate_to_infinity, AdaptiveConfig, Estimate,
};

/// Overall factor multiplying the `w`-integral so that `∫ g_nu = 1`.
pub const STABLE_DENSITY_NORMALIZATION: f64 = 1.0 / PI;

/// `ln(1e16)`: the oscillatory integrand is cut where its damping drops below `1e-16`.
const DAMPING_CUTOFF: f64 = 36.841_361_487_904_734;

/// Accepted absolute error of the `w`-integral when relative accuracy is out of reach.
const ABSOLUTE_FLOOR: f64 = 1e-12;

/// Accepted error relative to `∫|f|` when the integral cancels to near zero.
const CANCELLATION_FLOOR: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StableDensityParams {
    pub nu: f64,
    /// `pi / (1 + nu)`, in `(pi/2, pi)`.
    pub theta_nu: f64,
}

impl StableDensityParams {
    pub fn new(nu: f64) -> Result<Self> {
        if !(nu > 0.0 && nu < 1.0) {
            return Err(Error::domain(format!("stable index {nu} outside (0, 1)")));
        }
        Ok(StableDensityParams {
            nu,
            theta_nu: PI / (1.0 + nu),
        })
    }

    fn is_half(&self) -> bool {
        self.nu == 0.5
    }
}

/// Which evaluation path produced a density value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DensityBranch {
    ClosedForm,
    Series,
    Integral,
}

/// `g_nu(s)`.
pub fn stable_density(p: &StableDensityParams, s: f64) -> Result<f64> {
    stable_density_with_branch(p, s).map(|(v, _)| v)
}

pub fn stable_density_with_branch(p: &StableDensityParams, s: f64) -> Result<(f64, DensityBranch)> {
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::domain(format!(
            "stable density needs s > 0, got {s}"
        )));
    }
    if p.is_half() {
        return Ok((half_closed_form(s), DensityBranch::ClosedForm));
    }
    if let Some(v) = density_series(p, s) {
        return Ok((v.max(0.0), DensityBranch::Series));
    }
    let est = density_integral(p, s)?;
    Ok((est.value.max(0.0), DensityBranch::Integral))
}

/// `(2 sqrt(pi))^{-1} s^{-3/2} e^{-1/(4s)}`.
pub fn half_closed_form(s: f64) -> f64 {
    (-0.25 / s - 1.5 * s.ln()).exp() / (2.0 * PI.sqrt())
}

/// `pi^{-1} sum_k (-1)^{k+1} Gamma(nu k + 1)/k! sin(pi nu k) s^{-nu k - 1}`,
/// or `None` when the partial sums cancel too badly or fail to settle.
pub fn density_series(p: &StableDensityParams, s: f64) -> Option<f64> {
    let nu = p.nu;
    let ls = s.ln();
    let mut sum = 0.0f64;
    let mut abs_sum = 0.0f64;
    let mut prev_mag = f64::INFINITY;
    for k in 1..=400usize {
        let kf = k as f64;
        let log_mag = libm::lgamma(nu * kf + 1.0) - libm::lgamma(kf + 1.0) - (nu * kf + 1.0) * ls;
        let mag = log_mag.exp();
        if !mag.is_finite() {
            return None;
        }
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        let term = sign * mag * (PI * nu * kf).sin();
        sum += term;
        abs_sum += term.abs();
        let decreasing = mag < prev_mag;
        prev_mag = mag;
        if decreasing && mag <= 1e-16 * sum.abs() {
            if abs_sum > 1e4 * sum.abs() {
                return None;
            }
            return Some(sum / PI);
        }
    }
    None
}

/// The damped oscillatory `w`-integral, including the `1/pi` factor.
pub fn density_integral(p: &StableDensityParams, s: f64) -> Result<Estimate> {
    let (raw, converged) = raw_integral(p, s, &AdaptiveConfig::with_tol(1e-17, 1e-11))?;
    // cancellation leaves tiny densities with an absolute, not relative, error
    if !converged && raw.error > ABSOLUTE_FLOOR {
        // small nu at small s: the integrand is large and cancels to ~0, so
        // roundoff relative to ∫|f| is the attainable accuracy
        let (scale, _) = raw_integral_with(p, s, &AdaptiveConfig::with_tol(0.0, 1e-3), true)?;
        if raw.error > CANCELLATION_FLOOR * scale.value {
            return Err(Error::numerical("stable density w-integral", raw.error));
        }
    }
    Ok(Estimate::new(
        raw.value * STABLE_DENSITY_NORMALIZATION,
        raw.error * STABLE_DENSITY_NORMALIZATION,
    ))
}

/// `∫_0^∞ exp((ws + w^nu) cos θ) sin(sw sin θ − w^nu sin θ + θ) dw` as written,
/// without normalization.
pub fn raw_integral(
    p: &StableDensityParams,
    s: f64,
    cfg: &AdaptiveConfig,
) -> Result<(Estimate, bool)> {
    raw_integral_with(p, s, cfg, false)
}

/// With `magnitude`, integrates `|f|` instead: the scale cancellation works against.
fn raw_integral_with(
    p: &StableDensityParams,
    s: f64,
    cfg: &AdaptiveConfig,
    magnitude: bool,
) -> Result<(Estimate, bool)> {
    let (c, sn) = (p.theta_nu.cos(), p.theta_nu.sin());
    let nu = p.nu;
    let wmax = damping_cutoff(nu, s, -c);
    let f = |w: f64| {
        let wn = w.powf(nu);
        let v = ((w * s + wn) * c).exp() * (s * w * sn - wn * sn + p.theta_nu).sin();
        if magnitude {
            v.abs()
        } else {
            v
        }
    };
    // decade panels resolve the w^nu cusp and the slow w^nu damping for small
    // nu; |f| <= 1 makes the first panel negligible
    let mut pts = vec![0.0];
    let top = wmax.log10().ceil().clamp(0.0, 300.0) as i32;
    let cands = (-18..=top).map(|k| 10f64.powi(k)).chain([1.0 / s]);
    let mut cands: Vec<f64> = cands.filter(|&b| b < wmax).collect();
    cands.sort_by(|a, b| a.total_cmp(b));
    cands.dedup();
    pts.extend(cands);
    pts.push(wmax);
    integrate_breakpoints_partial(f, &pts, cfg)
}

/// Solve `(ws + w^nu) |cos θ| = ln(1e16)` for `w`.
fn damping_cutoff(nu: f64, s: f64, abs_cos: f64) -> f64 {
    let target = DAMPING_CUTOFF / abs_cos;
    let h = |w: f64| w * s + w.powf(nu) - target;
    let mut lo = 0.0;
    let mut hi = (target / s).min(target.powf(1.0 / nu));
    if h(hi) < 0.0 {
        hi = target / s;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if h(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

fn density_or_zero(p: &StableDensityParams, s: f64) -> Result<f64> {
    if s <= 0.0 {
        return Ok(0.0);
    }
    stable_density(p, s)
}

/// `∫_0^∞ e^{-xs} g_nu(s) ds` by adaptive quadrature in `u = ln s`.
pub fn stable_laplace_check(p: &StableDensityParams, x: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::domain("laplace argument must be >= 0"));
    }
    let failure = std::cell::Cell::new(None);
    let f = |u: f64| {
        let s = u.exp();
        match density_or_zero(p, s) {
            Ok(g) => (-x * s).exp() * g * s,
            Err(e) => {
                failure.set(Some(e));
                0.0
            }
        }
    };
    let cfg = AdaptiveConfig::with_tol(1e-12, 1e-9);
    // the bulk of the mass sits near s = x^{-1} when x is large
    let split = if x > 1.0 { -x.ln() } else { 0.0 };
    let left = integrate_from_neg_infinity(f, split, 1.0, &cfg)?;
    let right = if x == 0.0 {
        // mass beyond s = 1 from the termwise integrated series
        Estimate::new(series_tail_mass(p, 1.0).unwrap_or(f64::NAN), 0.0)
    } else {
        integrate_to_infinity(f, split, 1.0, &cfg)?
    };
    if let Some(e) = failure.take() {
        return Err(e);
    }
    let total = left.value + right.value;
    if !total.is_finite() {
        return Err(Error::numerical("stable laplace check", f64::INFINITY));
    }
    Ok(total)
}

/// `∫_S^∞ g_nu` from the series integrated term by term.
pub fn series_tail_mass(p: &StableDensityParams, big_s: f64) -> Option<f64> {
    let nu = p.nu;
    let ls = big_s.ln();
    let mut sum = 0.0f64;
    let mut abs_sum = 0.0f64;
    let mut prev = f64::INFINITY;
    for k in 1..=400usize {
        let kf = k as f64;
        let mag =
            (libm::lgamma(nu * kf + 1.0) - libm::lgamma(kf + 1.0) - nu * kf * ls).exp() / (nu * kf);
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        let term = sign * mag * (PI * nu * kf).sin();
        sum += term;
        abs_sum += term.abs();
        let dec = mag < prev;
        prev = mag;
        if dec && mag <= 1e-16 * sum.abs() {
            return (abs_sum <= 1e4 * sum.abs()).then_some(sum / PI);
        }
    }
    None
}

/// `∫_0^∞ g_nu(s) ds`.
pub fn stable_total_mass(p: &StableDensityParams) -> Result<f64> {
    stable_laplace_check(p, 0.0)
}

/// Normalization recovered from the bare `w`-integral: `1 / ∫_0^∞ raw(s) ds`.
/// Should reproduce [`STABLE_DENSITY_NORMALIZATION`].
pub fn empirical_normalization(p: &StableDensityParams) -> Result<f64> {
    let mass = stable_total_mass(p)?;
    Ok(STABLE_DENSITY_NORMALIZATION / mass)
}

/// Precomputed nodes `s_i` and weights `w_i` with `∫ F(s) g_nu(s) ds ≈ Σ w_i F(s_i)`.
///
/// Panels live in `u = ln s`, each carrying an 8-point Gauss-Legendre rule;
/// panels are bisected until `g(s) s` is resolved and are never wider than 1/2.
#[derive(Debug, Clone)]
pub struct SubordinationRule {
    pub params: StableDensityParams,
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// Index of the first node of each panel, plus a final sentinel.
    panel_starts: Vec<usize>,
}

const PANEL_POINTS: usize = 8;
const MAX_PANEL_WIDTH: f64 = 0.5;

impl SubordinationRule {
    pub fn new(p: StableDensityParams) -> Result<Self> {
        let (gx, gw) = gauss_legendre(PANEL_POINTS);
        let gs = |u: f64| -> Result<f64> {
            let s = u.exp();
            Ok(stable_density(&p, s)? * s)
        };
        // lower end: where g(s) s is negligible
        let mut peak: f64 = 0.0;
        let mut u = 0.0;
        let mut u_lo = 0.0;
        for _ in 0..400 {
            let v = gs(u)?;
            peak = peak.max(v);
            if v < 1e-20 * peak.max(1e-300) && u < 0.0 {
                u_lo = u;
                break;
            }
            u -= MAX_PANEL_WIDTH;
            u_lo = u;
        }
        // upper end: tail mass ~ e^{-nu u} below 1e-15
        let u_hi = (35.0 / p.nu).min(700.0);

        let panel_rule = |a: f64, b: f64| -> Result<(Vec<f64>, Vec<f64>, f64)> {
            let h = 0.5 * (b - a);
            let c = 0.5 * (a + b);
            let mut xs = Vec::with_capacity(PANEL_POINTS);
            let mut ws = Vec::with_capacity(PANEL_POINTS);
            let mut sum = 0.0;
            for (x, w) in gx.iter().zip(&gw) {
                let u = c + h * x;
                let wt = h * w * gs(u)?;
                xs.push(u.exp());
                ws.push(wt);
                sum += wt;
            }
            Ok((xs, ws, sum))
        };

        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        let mut panel_starts = Vec::new();
        let mut stack = Vec::new();
        let n0 = ((u_hi - u_lo) / MAX_PANEL_WIDTH).ceil() as usize;
        for i in (0..n0).rev() {
            let a = u_lo + i as f64 * MAX_PANEL_WIDTH;
            stack.push((a, (a + MAX_PANEL_WIDTH).min(u_hi), 0usize));
        }
        while let Some((a, b, depth)) = stack.pop() {
            let (xs, ws, whole) = panel_rule(a, b)?;
            let m = 0.5 * (a + b);
            let (_, _, left) = panel_rule(a, m)?;
            let (_, _, right) = panel_rule(m, b)?;
            if (left + right - whole).abs() > 1e-14 * whole.abs().max(1e-300) + 1e-18 && depth < 12
            {
                stack.push((m, b, depth + 1));
                stack.push((a, m, depth + 1));
                continue;
            }
            panel_starts.push(nodes.len());
            nodes.extend(xs);
            weights.extend(ws);
        }
        panel_starts.push(nodes.len());
        Ok(SubordinationRule {
            params: p,
            nodes,
            weights,
            panel_starts,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `Σ w_i` (should be close to 1 minus the truncated tail).
    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// `∫ F(s) g_nu(s) ds`, stopping once whole panels past the largest
    /// contribution add less than `1e-14` of the running sum.
    pub fn apply<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        let mut acc = 0.0f64;
        let mut peak = 0.0f64;
        let mut quiet = 0;
        for w in self.panel_starts.windows(2) {
            let mut panel = 0.0;
            for i in w[0]..w[1] {
                panel += self.weights[i] * f(self.nodes[i]);
            }
            acc += panel;
            let mag = panel.abs();
            if mag >= peak {
                peak = mag;
                quiet = 0;
            } else if mag <= 1e-14 * acc.abs() {
                quiet += 1;
                if quiet >= 4 {
                    break;
                }
            } else {
                quiet = 0;
            }
        }
        acc
    }
}

/// Plain adaptive check of `∫ F(s) g(s) ds` on `[a, b]`; used by tests.
pub fn subordinate_reference<F: Fn(f64) -> f64>(
    p: &StableDensityParams,
    f: F,
    a: f64,
    b: f64,
) -> Result<Estimate> {
    integrate(
        |u: f64| {
            let s = u.exp();
            f(s) * stable_density(p, s).unwrap_or(f64::NAN) * s
        },
        a.ln(),
        b.ln(),
        &AdaptiveConfig::with_tol(1e-15, 1e-10),
    )
}
