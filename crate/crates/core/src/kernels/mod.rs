//! Semigroup kernels `T_t(x, y)` and their comparison kernels.
//!
//! Subordinate kernels use the substituted time: `eval(subordinate, t, x, y)`
//! returns `K_{t^nu, nu}(x, y) = ∫ T_{ts}(x, y) g_nu(s) ds`, and the stable
//! comparison kernel at time `t` is `P_{t^nu, nu}`.

pub mod schrodinger;

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::{DomainSpec, Interval};
use crate::quadrature::adaptive::{integrate_breakpoints, AdaptiveConfig};
use crate::specfun::bessel::bessel_i_scaled;
use crate::specfun::stable::{StableDensityParams, SubordinationRule};

pub use schrodinger::{Potential, SchrodingerConfig, SchrodingerKernel};

#[derive(Clone)]
pub enum KernelKind {
    EuclideanHeat {
        dim: usize,
    },
    /// `P_{t^nu, nu}` on `R^dim`, obtained by subordinating the heat kernel.
    Stable {
        nu: f64,
        dim: usize,
        rule: Arc<SubordinationRule>,
    },
    Bessel {
        beta: f64,
    },
    Laguerre {
        alpha: f64,
    },
    Schrodinger(Arc<SchrodingerKernel>),
    Subordinate {
        base: Box<KernelFamily>,
        nu: f64,
        rule: Arc<SubordinationRule>,
    },
    Product(Vec<KernelFamily>),
}

#[derive(Clone)]
pub struct KernelFamily {
    domain: DomainSpec,
    kind: KernelKind,
}

impl fmt::Debug for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "KernelFamily({})", self.id())
    }
}

fn check_time(t: f64) -> Result<()> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(Error::domain(format!(
            "time {t} must be positive and finite"
        )));
    }
    Ok(())
}

fn mass_cfg() -> AdaptiveConfig {
    AdaptiveConfig::with_tol(1e-15, 1e-11)
}

impl KernelFamily {
    pub fn euclidean_heat(dim: usize) -> Self {
        KernelFamily {
            domain: DomainSpec::euclidean(dim),
            kind: KernelKind::EuclideanHeat { dim },
        }
    }

    pub fn stable(nu: f64, dim: usize) -> Result<Self> {
        let rule = Arc::new(SubordinationRule::new(StableDensityParams::new(nu)?)?);
        Ok(Self::stable_with_rule(nu, dim, rule))
    }

    fn stable_with_rule(nu: f64, dim: usize, rule: Arc<SubordinationRule>) -> Self {
        KernelFamily {
            domain: DomainSpec::euclidean(dim),
            kind: KernelKind::Stable { nu, dim, rule },
        }
    }

    pub fn bessel(beta: f64) -> Result<Self> {
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(Error::domain(format!(
                "bessel kernel needs beta > 0, got {beta}"
            )));
        }
        Ok(KernelFamily {
            domain: DomainSpec::half_line(),
            kind: KernelKind::Bessel { beta },
        })
    }

    pub fn laguerre(alpha: f64) -> Result<Self> {
        if !(alpha > -0.5) || !alpha.is_finite() {
            return Err(Error::domain(format!(
                "laguerre kernel needs alpha > -1/2, got {alpha}"
            )));
        }
        Ok(KernelFamily {
            domain: DomainSpec::half_line(),
            kind: KernelKind::Laguerre { alpha },
        })
    }

    /// Discretized Schrödinger kernel (1-D).
    pub fn schrodinger(potential: Potential, config: SchrodingerConfig) -> Result<Self> {
        let k = SchrodingerKernel::build(potential, config)?;
        Ok(KernelFamily {
            domain: DomainSpec::euclidean(1),
            kind: KernelKind::Schrodinger(Arc::new(k)),
        })
    }

    pub fn subordinate(base: KernelFamily, nu: f64) -> Result<Self> {
        let rule = Arc::new(SubordinationRule::new(StableDensityParams::new(nu)?)?);
        Ok(Self::subordinate_with_rule(base, nu, rule))
    }

    /// Reuse a precomputed rule (it depends on `nu` only).
    pub fn subordinate_with_rule(
        base: KernelFamily,
        nu: f64,
        rule: Arc<SubordinationRule>,
    ) -> Self {
        KernelFamily {
            domain: base.domain.clone(),
            kind: KernelKind::Subordinate {
                base: Box::new(base),
                nu,
                rule,
            },
        }
    }

    pub fn product(factors: Vec<KernelFamily>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::domain("product needs at least one factor"));
        }
        let mut domain = factors[0].domain.clone();
        for f in &factors[1..] {
            domain = domain.product(&f.domain);
        }
        Ok(KernelFamily {
            domain,
            kind: KernelKind::Product(factors),
        })
    }

    pub fn domain(&self) -> &DomainSpec {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn kind(&self) -> &KernelKind {
        &self.kind
    }

    pub fn id(&self) -> String {
        match &self.kind {
            KernelKind::EuclideanHeat { dim } => format!("euclidean_heat(d={dim})"),
            KernelKind::Stable { nu, dim, .. } => format!("stable(nu={nu},d={dim})"),
            KernelKind::Bessel { beta } => format!("bessel(beta={beta})"),
            KernelKind::Laguerre { alpha } => format!("laguerre(alpha={alpha})"),
            KernelKind::Schrodinger(k) => format!(
                "schrodinger(V={},L={},n={})",
                k.potential.id(),
                k.config.half_width,
                k.config.n_points
            ),
            KernelKind::Subordinate { base, nu, .. } => {
                format!("subordinate({},nu={nu})", base.id())
            }
            KernelKind::Product(fs) => {
                let parts: Vec<String> = fs.iter().map(|f| f.id()).collect();
                format!("product({})", parts.join(","))
            }
        }
    }

    /// `nu` of the stable comparison kernel, if that is the comparison.
    pub fn comparison_nu(&self) -> Option<f64> {
        match &self.kind {
            KernelKind::Stable { nu, .. } | KernelKind::Subordinate { nu, .. } => Some(*nu),
            _ => None,
        }
    }

    /// `H_t` on `R^d`, or `P_{t^nu, nu}` for subordinate and stable kinds.
    pub fn comparison(&self) -> KernelFamily {
        match &self.kind {
            KernelKind::Stable { .. } => self.clone(),
            KernelKind::Subordinate { nu, rule, .. } => {
                Self::stable_with_rule(*nu, self.dim(), rule.clone())
            }
            _ => Self::euclidean_heat(self.dim()),
        }
    }

    fn check_points(&self, x: &[f64], y: &[f64]) -> Result<()> {
        if x.len() != self.dim() || y.len() != self.dim() {
            return Err(Error::domain(format!(
                "points must have dimension {}, got {} and {}",
                self.dim(),
                x.len(),
                y.len()
            )));
        }
        if !self.domain.contains(x) || !self.domain.contains(y) {
            return Err(Error::domain(format!(
                "point {x:?}, {y:?} outside the domain of {}",
                self.id()
            )));
        }
        Ok(())
    }

    pub fn eval(&self, t: f64, x: &[f64], y: &[f64]) -> Result<f64> {
        check_time(t)?;
        self.check_points(x, y)?;
        self.eval_unchecked(t, x, y)
    }

    fn eval_unchecked(&self, t: f64, x: &[f64], y: &[f64]) -> Result<f64> {
        match &self.kind {
            KernelKind::EuclideanHeat { dim } => Ok(heat(t, *dim, sq_dist(x, y))),
            KernelKind::Stable { dim, rule, .. } => {
                let r2 = sq_dist(x, y);
                Ok(rule.apply(|s| heat(t * s, *dim, r2)))
            }
            KernelKind::Bessel { beta } => bessel_kernel(*beta, t, x[0], y[0]),
            KernelKind::Laguerre { alpha } => laguerre_kernel(*alpha, t, x[0], y[0]),
            KernelKind::Schrodinger(k) => k.eval(t, x[0], y[0]),
            KernelKind::Subordinate { base, rule, .. } => {
                let mut err = None;
                let v = rule.apply(|s| match base.eval_unchecked(t * s, x, y) {
                    Ok(v) => v,
                    Err(e) => {
                        err.get_or_insert(e);
                        0.0
                    }
                });
                match err {
                    Some(e) => Err(e),
                    None => Ok(v),
                }
            }
            KernelKind::Product(fs) => {
                let mut off = 0;
                let mut acc = 1.0;
                for f in fs {
                    let d = f.dim();
                    acc *= f.eval_unchecked(t, &x[off..off + d], &y[off..off + d])?;
                    off += d;
                    if acc == 0.0 {
                        break;
                    }
                }
                Ok(acc)
            }
        }
    }

    pub fn comparison_eval(&self, t: f64, x: &[f64], y: &[f64]) -> Result<f64> {
        check_time(t)?;
        if x.len() != self.dim() || y.len() != self.dim() {
            return Err(Error::domain("point dimension mismatch"));
        }
        self.comparison().eval_unchecked(t, x, y)
    }

    /// `∫_{y ∈ X, |x - y| <= R} T_t(x, y) dy`; `radius = inf` gives the full mass.
    pub fn mass(&self, t: f64, x: &[f64], radius: f64) -> Result<f64> {
        check_time(t)?;
        if !(radius > 0.0) {
            return Err(Error::domain("radius must be positive"));
        }
        if x.len() != self.dim() || !self.domain.contains(x) {
            return Err(Error::domain("mass centre outside the domain"));
        }
        self.mass_unchecked(t, x, radius)
    }

    fn mass_unchecked(&self, t: f64, x: &[f64], radius: f64) -> Result<f64> {
        match &self.kind {
            KernelKind::EuclideanHeat { dim } => Ok(heat_ball_mass(t, *dim, radius)),
            KernelKind::Stable { dim, rule, .. } => {
                Ok(rule.apply(|s| heat_ball_mass(t * s, *dim, radius)))
            }
            KernelKind::Bessel { beta } if *beta == 1.0 => Ok(bessel_one_cell_mass(
                t,
                x[0],
                (x[0] - radius).max(0.0),
                x[0] + radius,
            )),
            KernelKind::Bessel { .. } | KernelKind::Laguerre { .. } => {
                self.mass_1d(t, x[0], radius)
            }
            KernelKind::Schrodinger(k) => k.ball_mass(t, x[0], radius),
            KernelKind::Subordinate { base, rule, .. } => {
                let mut err = None;
                let v = rule.apply(|s| match base.mass_unchecked(t * s, x, radius) {
                    Ok(v) => v,
                    Err(e) => {
                        err.get_or_insert(e);
                        0.0
                    }
                });
                err.map_or(Ok(v), Err)
            }
            KernelKind::Product(fs) => product_ball_mass(fs, t, x, radius),
        }
    }

    /// 1-D mass by adaptive quadrature in `y`, truncated where the Gaussian
    /// factor is below `e^{-900}`.
    fn mass_1d(&self, t: f64, x: f64, radius: f64) -> Result<f64> {
        let iv = self.domain.intervals()[0];
        let reach = 60.0 * t.sqrt();
        let lo = iv.lo.max(x - radius).max(x - reach);
        let hi = iv.hi.min(x + radius).min(x + reach);
        if !(hi > lo) {
            return Ok(0.0);
        }
        let mut pts = vec![lo];
        for k in [-10.0, -3.0, -1.0, 0.0, 1.0, 3.0, 10.0] {
            let p = x + k * t.sqrt();
            if p > lo && p < hi {
                pts.push(p);
            }
        }
        pts.push(hi);
        let est = integrate_breakpoints(
            |y| self.eval_unchecked(t, &[x], &[y]).unwrap_or(f64::NAN),
            &pts,
            &mass_cfg(),
        )?;
        Ok(est.value)
    }

    /// `∫_{cell} T_t(x, y) dy` for an axis-aligned cell.
    pub fn cell_mass(&self, t: f64, x: &[f64], cell: &[Interval]) -> Result<f64> {
        check_time(t)?;
        if x.len() != self.dim() || cell.len() != self.dim() {
            return Err(Error::domain("cell dimension mismatch"));
        }
        self.cell_mass_unchecked(t, x, cell)
    }

    fn cell_mass_unchecked(&self, t: f64, x: &[f64], cell: &[Interval]) -> Result<f64> {
        match &self.kind {
            KernelKind::EuclideanHeat { .. } => Ok(x
                .iter()
                .zip(cell)
                .map(|(&xi, c)| gauss_interval_mass(t, c.lo - xi, c.hi - xi))
                .product()),
            KernelKind::Stable { rule, .. } => Ok(rule.apply(|s| {
                x.iter()
                    .zip(cell)
                    .map(|(&xi, c)| gauss_interval_mass(t * s, c.lo - xi, c.hi - xi))
                    .product()
            })),
            KernelKind::Bessel { beta } if *beta == 1.0 => Ok(bessel_one_cell_mass(
                t,
                x[0],
                cell[0].lo.max(0.0),
                cell[0].hi.max(0.0),
            )),
            KernelKind::Product(fs) => {
                let mut off = 0;
                let mut acc = 1.0;
                for f in fs {
                    let d = f.dim();
                    acc *= f.cell_mass_unchecked(t, &x[off..off + d], &cell[off..off + d])?;
                    off += d;
                }
                Ok(acc)
            }
            KernelKind::Subordinate { base, rule, .. } => {
                let mut err = None;
                let v = rule.apply(|s| match base.cell_mass_unchecked(t * s, x, cell) {
                    Ok(v) => v,
                    Err(e) => {
                        err.get_or_insert(e);
                        0.0
                    }
                });
                err.map_or(Ok(v), Err)
            }
            KernelKind::Schrodinger(k) => {
                let c = cell[0];
                let n = 16;
                let w = (c.hi - c.lo) / n as f64;
                let mut acc = 0.0;
                for i in 0..n {
                    acc += k.eval(t, x[0], c.lo + (i as f64 + 0.5) * w)?;
                }
                Ok(acc * w)
            }
            KernelKind::Bessel { .. } | KernelKind::Laguerre { .. } => {
                let iv = self.domain.intervals()[0];
                let lo = cell[0].lo.max(iv.lo);
                let hi = cell[0].hi.min(iv.hi);
                if !(hi > lo) {
                    return Ok(0.0);
                }
                let s = t.sqrt();
                // far cells see a negligible Gaussian factor
                let gap = if x[0] < lo {
                    lo - x[0]
                } else if x[0] > hi {
                    x[0] - hi
                } else {
                    0.0
                };
                if gap > 60.0 * s {
                    return Ok(0.0);
                }
                let mut pts = vec![lo];
                for k in [-3.0, 0.0, 3.0] {
                    let p = x[0] + k * s;
                    if p > lo && p < hi {
                        pts.push(p);
                    }
                }
                pts.push(hi);
                let est = integrate_breakpoints(
                    |y| self.eval_unchecked(t, x, &[y]).unwrap_or(f64::NAN),
                    &pts,
                    &AdaptiveConfig::with_tol(1e-15, 1e-9),
                )?;
                Ok(est.value)
            }
        }
    }
}

fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// `(4 pi t)^{-d/2} exp(-r^2 / 4t)`.
pub fn heat(t: f64, d: usize, r2: f64) -> f64 {
    (-(r2 / (4.0 * t)) - 0.5 * d as f64 * (4.0 * PI * t).ln()).exp()
}

/// `∫_a^b (4 pi t)^{-1/2} e^{-u^2/4t} du`, accurate in both tails.
pub fn gauss_interval_mass(t: f64, a: f64, b: f64) -> f64 {
    if !(b > a) {
        return 0.0;
    }
    let s = 2.0 * t.sqrt();
    let (p, q) = (a / s, b / s);
    let v = if p >= 0.0 {
        0.5 * (libm::erfc(p) - libm::erfc(q))
    } else if q <= 0.0 {
        0.5 * (libm::erfc(-q) - libm::erfc(-p))
    } else {
        0.5 * (libm::erf(q) - libm::erf(p))
    };
    v.max(0.0)
}

/// Mass of the `d`-dimensional heat kernel in a ball of radius `r`.
fn heat_ball_mass(t: f64, d: usize, r: f64) -> f64 {
    if r.is_infinite() {
        return 1.0;
    }
    let s = r / (2.0 * t.sqrt());
    match d {
        1 => libm::erf(s),
        2 => -(-s * s).exp_m1(),
        _ => {
            // regularized lower incomplete gamma P(d/2, s^2) by its series
            let a = 0.5 * d as f64;
            let x = s * s;
            let mut term = 1.0 / a;
            let mut sum = term;
            let mut k = 1.0;
            while term > 1e-17 * sum && k < 10_000.0 {
                term *= x / (a + k);
                sum += term;
                k += 1.0;
            }
            (a * x.ln() - x - libm::lgamma(a)).exp() * sum
        }
    }
}

/// `∫_a^b T(t, x, y) dy` for Bessel `beta = 1`, i.e. the Dirichlet half-line kernel.
fn bessel_one_cell_mass(t: f64, x: f64, a: f64, b: f64) -> f64 {
    let direct = gauss_interval_mass(t, a - x, b - x);
    let image = gauss_interval_mass(t, a + x, b + x);
    (direct - image).max(0.0)
}

fn product_ball_mass(fs: &[KernelFamily], t: f64, x: &[f64], radius: f64) -> Result<f64> {
    if radius.is_infinite() {
        let mut off = 0;
        let mut acc = 1.0;
        for f in fs {
            let d = f.dim();
            acc *= f.mass_unchecked(t, &x[off..off + d], radius)?;
            off += d;
        }
        return Ok(acc);
    }
    let first = &fs[0];
    if fs.len() == 1 {
        return first.mass_unchecked(t, x, radius);
    }
    if first.dim() != 1 {
        return Err(Error::domain(
            "ball mass of products needs a 1-D leading factor",
        ));
    }
    // slice the ball along the first coordinate
    let iv = first.domain.intervals()[0];
    let lo = iv.lo.max(x[0] - radius);
    let hi = iv.hi.min(x[0] + radius);
    if !(hi > lo) {
        return Ok(0.0);
    }
    let mut pts = vec![lo];
    if x[0] > lo && x[0] < hi {
        pts.push(x[0]);
    }
    pts.push(hi);
    let failure = std::cell::RefCell::new(None);
    let est = integrate_breakpoints(
        |y1| {
            let rest = (radius * radius - (y1 - x[0]).powi(2)).max(0.0).sqrt();
            if rest == 0.0 {
                return 0.0;
            }
            let a = first.eval_unchecked(t, &x[..1], &[y1]);
            let b = product_ball_mass(&fs[1..], t, &x[1..], rest);
            match (a, b) {
                (Ok(a), Ok(b)) => a * b,
                (Err(e), _) | (_, Err(e)) => {
                    failure.borrow_mut().get_or_insert(e);
                    0.0
                }
            }
        },
        &pts,
        &AdaptiveConfig::with_tol(1e-13, 1e-8),
    )?;
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    Ok(est.value)
}

/// `sqrt(xy)/(2t) I_{beta-1/2}(xy/2t) exp(-(x^2+y^2)/4t)`, evaluated as
/// `sqrt(xy)/(2t) Î(z) exp(-(x-y)^2/4t)` with `Î(z) = e^{-z} I(z)`.
pub fn bessel_kernel(beta: f64, t: f64, x: f64, y: f64) -> Result<f64> {
    let xy = x * y;
    if xy == 0.0 {
        return Ok(0.0);
    }
    let z = xy / (2.0 * t);
    let i = bessel_i_scaled(beta - 0.5, z)?;
    if i == 0.0 {
        return Ok(0.0);
    }
    let d = x - y;
    Ok((0.5 * xy.ln() - (2.0 * t).ln() - d * d / (4.0 * t) + i.ln()).exp())
}

/// `ln sinh(u)` without overflow.
fn ln_sinh(u: f64) -> f64 {
    if u > 20.0 {
        u + (-(-2.0 * u).exp()).ln_1p() - std::f64::consts::LN_2
    } else {
        u.sinh().ln()
    }
}

/// `sqrt(xy)/sinh 2t · I_alpha(xy / sinh 2t) · exp(-coth(2t)(x^2+y^2)/2)` in the
/// stable form `... Î_alpha(z) exp(-coth(2t)(x-y)^2/2 - xy tanh t)`.
pub fn laguerre_kernel(alpha: f64, t: f64, x: f64, y: f64) -> Result<f64> {
    let xy = x * y;
    if xy == 0.0 {
        return Ok(0.0);
    }
    let ls = ln_sinh(2.0 * t);
    let z = (xy.ln() - ls).exp();
    let i = bessel_i_scaled(alpha, z)?;
    if i == 0.0 {
        return Ok(0.0);
    }
    let coth = 1.0 / (2.0 * t).tanh();
    let d = x - y;
    Ok((0.5 * xy.ln() - ls - 0.5 * coth * d * d - xy * t.tanh() + i.ln()).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dirichlet(t: f64, x: f64, y: f64) -> f64 {
        (4.0 * PI * t).powf(-0.5) * (-(x - y).powi(2) / (4.0 * t)).exp() * -(-x * y / t).exp_m1()
    }

    #[test]
    fn heat_at_diagonal() {
        let k = KernelFamily::euclidean_heat(1);
        assert!((k.eval(1.0, &[0.0], &[0.0]).unwrap() - 0.28209479177387814).abs() < 1e-15);
    }

    #[test]
    fn bessel_one_is_dirichlet_half_line() {
        let k = KernelFamily::bessel(1.0).unwrap();
        let v = k.eval(0.25, &[1.0], &[2.0]).unwrap();
        let exact = PI.powf(-0.5) * ((-1f64).exp() - (-9f64).exp());
        assert!((v / exact - 1.0).abs() < 1e-13);
        assert!((v - 0.207484122184324).abs() < 1e-13);
        for &(t, x, y) in &[
            (1e-4, 0.01, 0.011),
            (10.0, 0.01, 20.0),
            (0.3, 5.0, 5.2),
            (2.0, 19.0, 0.5),
        ] {
            let v = k.eval(t, &[x], &[y]).unwrap();
            assert!((v / dirichlet(t, x, y) - 1.0).abs() < 1e-11, "{t} {x} {y}");
        }
    }

    #[test]
    fn laguerre_small_time_is_heat_like() {
        let k = KernelFamily::laguerre(0.5).unwrap();
        let v = k.eval(1e-3, &[1.0], &[1.0]).unwrap();
        let h = k.comparison_eval(1e-3, &[1.0], &[1.0]).unwrap();
        assert!((v / h - 1.0).abs() < 0.05);
    }

    #[test]
    fn laguerre_minus_half_is_mehler_sum() {
        // alpha = -1/2 gives the even part of the Mehler kernel: M(x,y) + M(x,-y)
        let k = KernelFamily::laguerre(-0.25).unwrap();
        assert!(k.eval(0.5, &[1.0], &[1.0]).unwrap() > 0.0);
        let t: f64 = 0.4;
        let mehler = |x: f64, y: f64| {
            (2.0 * PI * (2.0 * t).sinh()).powf(-0.5)
                * (-((x * x + y * y) * (2.0 * t).cosh() - 2.0 * x * y) / (2.0 * (2.0 * t).sinh()))
                    .exp()
        };
        let (x, y) = (0.7, 1.3);
        let i = crate::specfun::bessel::bessel_i_unscaled(-0.5, x * y / (2.0 * t).sinh()).unwrap();
        let direct = (x * y).sqrt() / (2.0 * t).sinh()
            * i
            * (-(2.0 * t).cosh() / (2.0 * (2.0 * t).sinh()) * (x * x + y * y)).exp();
        assert!((direct / (mehler(x, y) + mehler(x, -y)) - 1.0).abs() < 1e-12);
        let l = laguerre_kernel(-0.5, t, x, y).unwrap();
        assert!((l / direct - 1.0).abs() < 1e-12);
    }

    #[test]
    fn laguerre_large_time_does_not_overflow() {
        let v = laguerre_kernel(1.0, 500.0, 1.0, 2.0).unwrap();
        assert!(v.is_finite() && v >= 0.0);
    }

    #[test]
    fn poisson_from_subordination() {
        let k = KernelFamily::subordinate(KernelFamily::euclidean_heat(1), 0.5).unwrap();
        for &(t, r) in &[(1.0, 0.0), (0.3, 0.5), (2.0, 7.0), (0.01, 0.02)] {
            let v = k.eval(t * t, &[0.0], &[r]).unwrap();
            let exact = t / (PI * (t * t + r * r));
            assert!((v / exact - 1.0).abs() < 1e-6, "{t} {r}: {v} {exact}");
        }
        let p = k.comparison();
        assert!((p.eval(1.0, &[0.0], &[0.0]).unwrap() - 1.0 / PI).abs() < 1e-8);
    }

    #[test]
    fn masses() {
        let h = KernelFamily::euclidean_heat(1);
        assert!((h.mass(3.0, &[0.0], f64::INFINITY).unwrap() - 1.0).abs() < 1e-12);
        let b = KernelFamily::bessel(2.0).unwrap();
        let m = b.mass(1.0, &[0.01], f64::INFINITY).unwrap();
        assert!(m > 0.0 && m < 1.0);
        let l = KernelFamily::laguerre(1.0).unwrap();
        let m = l.mass(1e-4, &[1.0], 0.1).unwrap();
        assert!((m - 1.0).abs() < 1e-3);
        let h2 = KernelFamily::euclidean_heat(3);
        let m = h2.mass(0.5, &[0.0, 0.0, 0.0], 1.0).unwrap();
        // P(3/2, 1/2)
        assert!((m - 0.198748043098799).abs() < 1e-12);
    }

    #[test]
    fn product_kernel_factorizes() {
        let b = KernelFamily::bessel(1.0).unwrap();
        let l = KernelFamily::laguerre(0.5).unwrap();
        let p = KernelFamily::product(vec![b.clone(), l.clone()]).unwrap();
        let v = p.eval(0.7, &[1.0, 2.0], &[1.5, 0.3]).unwrap();
        let w = b.eval(0.7, &[1.0], &[1.5]).unwrap() * l.eval(0.7, &[2.0], &[0.3]).unwrap();
        assert_eq!(v, w);
        assert!(p.eval(0.7, &[-1.0, 2.0], &[1.5, 0.3]).is_err());
        let hm = KernelFamily::product(vec![
            KernelFamily::euclidean_heat(1),
            KernelFamily::euclidean_heat(1),
        ])
        .unwrap();
        let m = hm.mass(0.5, &[0.0, 0.0], 1.0).unwrap();
        assert!((m - heat_ball_mass(0.5, 2, 1.0)).abs() < 1e-7);
    }

    #[test]
    fn cell_mass_matches_quadrature() {
        let b = KernelFamily::bessel(1.0).unwrap();
        let q = b
            .cell_mass(0.3, &[1.0], &[Interval::new(0.5, 1.7)])
            .unwrap();
        let g = KernelFamily::bessel(1.0 + 1e-12).unwrap();
        let r = g
            .cell_mass(0.3, &[1.0], &[Interval::new(0.5, 1.7)])
            .unwrap();
        assert!((q - r).abs() < 1e-9);
    }
}
