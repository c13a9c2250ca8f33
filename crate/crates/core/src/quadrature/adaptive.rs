//! Globally adaptive 15-point Gauss-Kronrod integration on finite intervals,
//! plus geometric panel marching for half-infinite ranges.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// Integral value with an absolute error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

impl Estimate {
    pub fn new(value: f64, error: f64) -> Self {
        Estimate { value, error }
    }

    pub fn relative_error(&self) -> f64 {
        if self.value == 0.0 {
            if self.error == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            self.error / self.value.abs()
        }
    }
}

impl std::ops::Add for Estimate {
    type Output = Estimate;
    fn add(self, o: Estimate) -> Estimate {
        Estimate::new(self.value + o.value, self.error + o.error)
    }
}

impl std::iter::Sum for Estimate {
    fn sum<I: Iterator<Item = Estimate>>(iter: I) -> Estimate {
        iter.fold(Estimate::default(), |a, b| a + b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_subdivisions: usize,
}

impl Default for AdaptiveConfig {
    fn default() -> Self {
        AdaptiveConfig {
            abs_tol: 1e-13,
            rel_tol: 1e-10,
            max_subdivisions: 2000,
        }
    }
}

impl AdaptiveConfig {
    pub fn with_tol(abs_tol: f64, rel_tol: f64) -> Self {
        AdaptiveConfig {
            abs_tol,
            rel_tol,
            ..Default::default()
        }
    }
}

fn rescale_error(err: f64, res_abs: f64, res_asc: f64) -> f64 {
    let mut e = err.abs();
    if res_asc != 0.0 && e != 0.0 {
        let scale = (200.0 * e / res_asc).powf(1.5);
        e = if scale < 1.0 {
            res_asc * scale
        } else {
            res_asc
        };
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        e = e.max(50.0 * f64::EPSILON * res_abs);
    }
    e
}

/// One 15-point Gauss-Kronrod panel.
pub fn gauss_kronrod_15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Estimate {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut res_g = fc * WG[3];
    let mut res_k = fc * WGK[7];
    let mut res_abs = res_k.abs();
    let mut fv1 = [0.0; 7];
    let mut fv2 = [0.0; 7];
    for j in 0..7 {
        let x = half * XGK[j];
        let f1 = f(center - x);
        let f2 = f(center + x);
        fv1[j] = f1;
        fv2[j] = f2;
        res_k += WGK[j] * (f1 + f2);
        res_abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            res_g += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * res_k;
    let mut res_asc = WGK[7] * (fc - mean).abs();
    for j in 0..7 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let err = (res_k - res_g) * half;
    let ah = half.abs();
    Estimate::new(res_k * half, rescale_error(err, res_abs * ah, res_asc * ah))
}

struct Panel {
    a: f64,
    b: f64,
    est: Estimate,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.est.error == other.est.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.est.error.total_cmp(&other.est.error)
    }
}

/// Adaptive integration over `[points[0], points[last]]` with the interior
/// points used as initial breakpoints (they must be increasing).
pub fn integrate_breakpoints<F: Fn(f64) -> f64>(
    f: F,
    points: &[f64],
    cfg: &AdaptiveConfig,
) -> Result<Estimate> {
    match integrate_breakpoints_partial(f, points, cfg)? {
        (est, true) => Ok(est),
        (est, false) => Err(Error::numerical("adaptive quadrature", est.error)),
    }
}

/// As [`integrate_breakpoints`], but an exhausted budget returns the current
/// estimate flagged `false` instead of an error.
pub fn integrate_breakpoints_partial<F: Fn(f64) -> f64>(
    f: F,
    points: &[f64],
    cfg: &AdaptiveConfig,
) -> Result<(Estimate, bool)> {
    if points.len() < 2 {
        return Ok((Estimate::default(), true));
    }
    let mut heap = BinaryHeap::new();
    let mut total = Estimate::default();
    for w in points.windows(2) {
        let (a, b) = (w[0], w[1]);
        if !(b > a) {
            continue;
        }
        let est = gauss_kronrod_15(&f, a, b);
        total = total + est;
        heap.push(Panel { a, b, est });
    }
    if !total.value.is_finite() {
        return Err(Error::numerical(
            "adaptive quadrature (non-finite integrand)",
            f64::INFINITY,
        ));
    }
    let mut count = heap.len();
    loop {
        let tol = cfg.abs_tol.max(cfg.rel_tol * total.value.abs());
        if total.error <= tol {
            return Ok((total, true));
        }
        if count >= cfg.max_subdivisions {
            return Ok((heap.iter().map(|p| p.est).sum(), false));
        }
        let Some(worst) = heap.pop() else {
            return Ok((total, true));
        };
        let mid = 0.5 * (worst.a + worst.b);
        if !(mid > worst.a && mid < worst.b) {
            // interval cannot be split further in floating point
            heap.push(Panel {
                est: Estimate::new(worst.est.value, 0.0),
                ..worst
            });
            total.error -= worst.est.error;
            continue;
        }
        let left = gauss_kronrod_15(&f, worst.a, mid);
        let right = gauss_kronrod_15(&f, mid, worst.b);
        total.value += left.value + right.value - worst.est.value;
        total.error += left.error + right.error - worst.est.error;
        if !total.value.is_finite() {
            return Err(Error::numerical(
                "adaptive quadrature (non-finite integrand)",
                f64::INFINITY,
            ));
        }
        heap.push(Panel {
            a: worst.a,
            b: mid,
            est: left,
        });
        heap.push(Panel {
            a: mid,
            b: worst.b,
            est: right,
        });
        count += 1;
        if count % 64 == 0 {
            // re-sum to limit drift of the running totals
            total = heap.iter().map(|p| p.est).sum();
        }
    }
}

pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    cfg: &AdaptiveConfig,
) -> Result<Estimate> {
    integrate_breakpoints(f, &[a, b], cfg)
}

/// `∫_a^∞ f` by marching panels `[a + s(2^k - 1), a + s(2^{k+1} - 1)]` until two
/// consecutive panels contribute less than the tolerance.
pub fn integrate_to_infinity<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    scale: f64,
    cfg: &AdaptiveConfig,
) -> Result<Estimate> {
    march(&f, a, scale, 1.0, cfg)
}

/// `∫_{-∞}^b f`.
pub fn integrate_from_neg_infinity<F: Fn(f64) -> f64>(
    f: F,
    b: f64,
    scale: f64,
    cfg: &AdaptiveConfig,
) -> Result<Estimate> {
    march(&f, b, scale, -1.0, cfg)
}

fn march<F: Fn(f64) -> f64>(
    f: &F,
    start: f64,
    scale: f64,
    dir: f64,
    cfg: &AdaptiveConfig,
) -> Result<Estimate> {
    if !(scale > 0.0) {
        return Err(Error::domain("panel scale must be positive"));
    }
    let mut total = Estimate::default();
    let mut quiet = 0;
    let mut lo = 0.0;
    let mut width = scale;
    for k in 0..400 {
        let hi = lo + width;
        let (a, b) = (start + dir * lo, start + dir * hi);
        let (a, b) = if dir > 0.0 { (a, b) } else { (b, a) };
        let panel = integrate(f, a, b, cfg)?;
        total = total + panel;
        let tol = cfg.abs_tol.max(cfg.rel_tol * total.value.abs());
        if panel.value.abs() <= 0.5 * tol && k >= 2 {
            quiet += 1;
            if quiet >= 2 {
                return Ok(total);
            }
        } else {
            quiet = 0;
        }
        lo = hi;
        width *= 2.0;
        if !hi.is_finite() {
            break;
        }
    }
    Err(Error::numerical(
        "half-infinite quadrature",
        total.error.max(f64::EPSILON),
    ))
}

/// Nodes and weights of the n-point Gauss-Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                p1 = ((2 * j + 1) as f64 * z * p2 - j as f64 * p3) / (j + 1) as f64;
            }
            pp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * pp * pp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_exact() {
        let e = integrate(
            |x| x * x * x - 2.0 * x,
            0.0,
            3.0,
            &AdaptiveConfig::default(),
        )
        .unwrap();
        assert!((e.value - (81.0 / 4.0 - 9.0)).abs() < 1e-13);
    }

    #[test]
    fn endpoint_singularity() {
        let e = integrate(
            |x: f64| 1.0 / x.sqrt(),
            0.0,
            1.0,
            &AdaptiveConfig::default(),
        )
        .unwrap();
        assert!((e.value - 2.0).abs() < 1e-9, "{e:?}");
    }

    #[test]
    fn gaussian_tail_to_infinity() {
        let cfg = AdaptiveConfig::default();
        let e = integrate_to_infinity(|x: f64| (-x * x).exp(), 0.0, 1.0, &cfg).unwrap();
        assert!((e.value - std::f64::consts::PI.sqrt() / 2.0).abs() < 1e-12);
        let e = integrate_from_neg_infinity(|x: f64| (-x * x).exp(), 0.0, 1.0, &cfg).unwrap();
        assert!((e.value - std::f64::consts::PI.sqrt() / 2.0).abs() < 1e-12);
    }

    #[test]
    fn budget_exhaustion_reports_estimate() {
        let cfg = AdaptiveConfig {
            abs_tol: 0.0,
            rel_tol: 1e-15,
            max_subdivisions: 4,
        };
        match integrate(|x: f64| (50.0 * x).sin().abs(), 0.0, 10.0, &cfg) {
            Err(Error::NumericalFailure { estimate, .. }) => assert!(estimate > 0.0),
            other => panic!("expected failure, got {other:?}"),
        }
    }

    #[test]
    fn legendre_rule_integrates_degree_2n_minus_1() {
        let (x, w) = gauss_legendre(6);
        let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(10)).sum();
        assert!((s - 2.0 / 11.0).abs() < 1e-14);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }
}
