//! Modified Bessel function of the first kind `I_tau(z)` for real `tau >= -1/2`
//! and `z >= 0`.
//!
//! Small and moderate arguments use the ascending series, summed in a
//! rescaled form so the exponentially scaled value never overflows. Beyond
//! `z0(tau) = 30 + 2 tau^2` the Hankel asymptotic expansion takes over.

use crate::error::{Error, Result};

/// Above this argument `bessel_i` hands back `e^{-z} I_tau(z)` instead.
pub const UNSCALED_LIMIT: f64 = 700.0;

/// Result of [`bessel_i`]: the plain value, or `e^{-z} I_tau(z)` when the plain
/// value is not safely representable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BesselValue {
    Unscaled(f64),
    /// `e^{-z} I_tau(z)`.
    Scaled(f64),
}

impl BesselValue {
    pub fn is_scaled(&self) -> bool {
        matches!(self, BesselValue::Scaled(_))
    }
}

/// Series/asymptotic switch point.
pub fn crossover(tau: f64) -> f64 {
    30.0 + 2.0 * tau * tau
}

fn check(tau: f64, z: f64) -> Result<()> {
    if !tau.is_finite() || tau < -0.5 {
        return Err(Error::domain(format!("bessel order {tau} below -1/2")));
    }
    if !(z >= 0.0) || !z.is_finite() {
        return Err(Error::domain(format!(
            "bessel argument {z} must be finite and >= 0"
        )));
    }
    Ok(())
}

/// `e^{-z} I_tau(z)`.
pub fn bessel_i_scaled(tau: f64, z: f64) -> Result<f64> {
    check(tau, z)?;
    if z == 0.0 {
        return if tau == 0.0 {
            Ok(1.0)
        } else if tau > 0.0 {
            Ok(0.0)
        } else {
            Err(Error::Overflow(format!("I_{tau}(0) is unbounded")))
        };
    }
    if z <= crossover(tau) {
        Ok(series_scaled(tau, z))
    } else {
        Ok(asymptotic_scaled(tau, z))
    }
}

/// `I_tau(z)`, flagged as scaled for `z > 700`.
pub fn bessel_i(tau: f64, z: f64) -> Result<BesselValue> {
    let s = bessel_i_scaled(tau, z)?;
    if z > UNSCALED_LIMIT {
        Ok(BesselValue::Scaled(s))
    } else {
        Ok(BesselValue::Unscaled(s * z.exp()))
    }
}

/// `I_tau(z)` without scaling; signals overflow instead of saturating.
pub fn bessel_i_unscaled(tau: f64, z: f64) -> Result<f64> {
    let s = bessel_i_scaled(tau, z)?;
    let ln = s.ln() + z;
    if ln >= f64::MAX.ln() {
        return Err(Error::Overflow(format!("I_{tau}({z}) exceeds f64 range")));
    }
    Ok(s * z.exp())
}

/// Series branch exposed for crossover checks.
pub fn series_branch(tau: f64, z: f64) -> Result<f64> {
    check(tau, z)?;
    if z == 0.0 {
        return bessel_i_scaled(tau, z);
    }
    Ok(series_scaled(tau, z))
}

/// Asymptotic branch exposed for crossover checks.
pub fn asymptotic_branch(tau: f64, z: f64) -> Result<f64> {
    check(tau, z)?;
    if z < 1.0 {
        return Err(Error::domain("asymptotic branch needs z >= 1"));
    }
    Ok(asymptotic_scaled(tau, z))
}

fn series_scaled(tau: f64, z: f64) -> f64 {
    let q = 0.25 * z * z;
    let mut term = 1.0f64;
    let mut sum = 1.0f64;
    // log of factors pulled out of `sum` to keep it in range
    let mut shift = 0.0f64;
    let mut k = 0.0f64;
    loop {
        k += 1.0;
        term *= q / (k * (k + tau));
        sum += term;
        if term <= 1e-17 * sum {
            break;
        }
        if sum > 1e280 {
            shift += sum.ln();
            term /= sum;
            sum = 1.0;
        }
    }
    let log_prefactor = -z + tau * (0.5 * z).ln() - libm::lgamma(tau + 1.0);
    (log_prefactor + shift).exp() * sum
}

fn asymptotic_scaled(tau: f64, z: f64) -> f64 {
    let mu = 4.0 * tau * tau;
    let mut term = 1.0f64;
    let mut sum = 1.0f64;
    let mut prev = f64::INFINITY;
    for k in 1..200 {
        let kf = k as f64;
        let odd = 2.0 * kf - 1.0;
        term *= -(mu - odd * odd) / (8.0 * kf * z);
        if term.abs() > prev {
            break;
        }
        sum += term;
        prev = term.abs();
        if term.abs() <= 1e-17 * sum.abs() {
            break;
        }
    }
    sum / (2.0 * std::f64::consts::PI * z).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    // e^{-z} I_tau(z) from a 40-digit reference
    const TABLE: &[(f64, f64, f64)] = &[
        (0.0, 0.001, 0.99900074958351555937),
        (0.0, 0.5, 0.64503527044915006811),
        (0.0, 10.0, 0.12783333716342860732),
        (0.0, 29.9, 0.073269219046001907707),
        (0.0, 45.0, 0.059638115011731949075),
        (0.0, 100.0, 0.039944379299096682648),
        (0.0, 800.0, 0.014106945005869183979),
        (0.5, 0.001, 0.025206110707457800594),
        (0.5, 0.5, 0.35663583483745893528),
        (0.5, 10.0, 0.12615662584097981553),
        (0.5, 29.9, 0.072958260640694850122),
        (0.5, 45.0, 0.059470803871759037151),
        (0.5, 100.0, 0.039894228040143267794),
        (1.5, 0.001, 8.4020363423501935534e-6),
        (1.5, 0.5, 0.058471662583135768062),
        (1.5, 10.0, 0.11354096377693820774),
        (1.5, 29.9, 0.070518185033982647661),
        (1.5, 45.0, 0.058149230452386614103),
        (1.5, 800.0, 0.01408710866420803979),
        (3.7, 0.001, 3.9568454666702660829e-14),
        (3.7, 0.5, 0.00023582704520573265134),
        (3.7, 10.0, 0.062677427152326848778),
        (3.7, 29.9, 0.058064745727668135209),
        (3.7, 45.0, 0.051138775514461716112),
        (3.7, 100.0, 0.037289060401755087953),
        (-0.3, 0.001, 7.5263022224008840469),
        (-0.3, 0.5, 0.77264198266240841244),
        (-0.3, 10.0, 0.12722706058599668515),
        (-0.3, 45.0, 0.059577828425322853107),
        (-0.3, 800.0, 0.014106151015946849201),
    ];

    #[test]
    fn reference_table() {
        for &(tau, z, want) in TABLE {
            let got = bessel_i_scaled(tau, z).unwrap();
            assert!(
                (got / want - 1.0).abs() < 1e-12,
                "tau={tau} z={z}: {got} vs {want}"
            );
        }
    }

    #[test]
    fn half_order_closed_form() {
        let v = bessel_i_unscaled(0.5, 1.0).unwrap();
        let exact = (2.0 / std::f64::consts::PI).sqrt() * 1f64.sinh();
        assert!((v / exact - 1.0).abs() < 1e-14);
        assert!((v - 0.937674888245487646717).abs() < 1e-14);
    }

    #[test]
    fn order_zero_at_fifty() {
        let v = bessel_i_unscaled(0.0, 50.0).unwrap();
        assert!((v / 293255378384933632665.467507946 - 1.0).abs() < 1e-10);
    }

    #[test]
    fn values_at_origin() {
        assert_eq!(bessel_i_scaled(0.0, 0.0).unwrap(), 1.0);
        assert_eq!(bessel_i_scaled(3.0, 0.0).unwrap(), 0.0);
        assert!(matches!(
            bessel_i_scaled(-0.25, 0.0),
            Err(Error::Overflow(_))
        ));
    }

    #[test]
    fn domain_errors() {
        assert!(matches!(bessel_i_scaled(-0.6, 1.0), Err(Error::Domain(_))));
        assert!(matches!(bessel_i_scaled(0.0, -1.0), Err(Error::Domain(_))));
        assert!(matches!(
            bessel_i_scaled(0.0, f64::NAN),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn scaled_flag_and_overflow() {
        assert!(!bessel_i(1.0, 700.0).unwrap().is_scaled());
        assert!(bessel_i(1.0, 700.5).unwrap().is_scaled());
        assert!(matches!(
            bessel_i_unscaled(0.0, 720.0),
            Err(Error::Overflow(_))
        ));
    }

    #[test]
    fn branches_agree_at_crossover() {
        for tau in [-0.5, -0.2, 0.0, 0.5, 1.0, 2.5, 4.0] {
            let z0 = crossover(tau);
            for f in [0.9, 0.97, 1.0, 1.03, 1.1] {
                let z = z0 * f;
                let a = series_branch(tau, z).unwrap();
                let b = asymptotic_branch(tau, z).unwrap();
                assert!((a / b - 1.0).abs() < 1e-9, "tau={tau} z={z}");
            }
        }
    }

    #[test]
    fn huge_order_series_does_not_overflow() {
        let v = bessel_i_scaled(20.0, 800.0).unwrap();
        assert!(v.is_finite() && v > 0.0);
        let w = series_branch(20.0, 700.0).unwrap();
        assert!(w.is_finite() && w > 0.0);
    }
}
