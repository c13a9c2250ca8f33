//! Geometric time grids discretizing `sup_t` with a local golden-section pass.

use crate::error::{Error, Result};

/// Geometric sequence of times covering `[t_min, t_max]`.
///
/// An end flagged open may be extended at evaluation time when the maximum
/// sits on it, which realizes `sup_{t>0}` (both ends open), `sup_{t<=T}`
/// (open below) and `sup_{t>T}` (open above).
#[derive(Debug, Clone, PartialEq)]
pub struct TGrid {
    pub t_min: f64,
    pub t_max: f64,
    pub points_per_decade: usize,
    pub open_below: bool,
    pub open_above: bool,
    values: Vec<f64>,
}

/// Default grid density.
pub const DEFAULT_POINTS_PER_DECADE: usize = 16;

impl TGrid {
    pub fn new(t_min: f64, t_max: f64, points_per_decade: usize) -> Result<Self> {
        if !(t_min > 0.0 && t_max > t_min && t_max.is_finite()) || points_per_decade == 0 {
            return Err(Error::domain(format!(
                "invalid t-grid [{t_min}, {t_max}] with {points_per_decade} points per decade"
            )));
        }
        let decades = (t_max / t_min).log10();
        let n = ((decades * points_per_decade as f64).ceil() as usize).max(1);
        let ratio = (t_max / t_min).powf(1.0 / n as f64);
        let mut values: Vec<f64> = (0..=n).map(|i| t_min * ratio.powi(i as i32)).collect();
        values[n] = t_max;
        Ok(TGrid {
            t_min,
            t_max,
            points_per_decade,
            open_below: false,
            open_above: false,
            values,
        })
    }

    /// `sup_{t>0}` at spatial scale `d_q`: `[1e-8 d_q^2, 1e4 d_q^2]`, both ends open.
    pub fn all_times(d_q: f64, points_per_decade: usize) -> Result<Self> {
        let s = d_q * d_q;
        let mut g = TGrid::new(1e-8 * s, 1e4 * s, points_per_decade)?;
        g.open_below = true;
        g.open_above = true;
        Ok(g)
    }

    /// `sup_{t<=d_q^2}`.
    pub fn up_to(d_q: f64, points_per_decade: usize) -> Result<Self> {
        let s = d_q * d_q;
        let mut g = TGrid::new(1e-8 * s, s, points_per_decade)?;
        g.open_below = true;
        Ok(g)
    }

    /// `sup_{t>d_q^2}`.
    pub fn beyond(d_q: f64, points_per_decade: usize) -> Result<Self> {
        let s = d_q * d_q;
        let mut g = TGrid::new(s, 1e4 * s, points_per_decade)?;
        g.open_above = true;
        Ok(g)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Same range, doubled density.
    pub fn refined(&self) -> Self {
        let mut g = TGrid::new(self.t_min, self.t_max, 2 * self.points_per_decade)
            .expect("refining a valid grid");
        g.open_below = self.open_below;
        g.open_above = self.open_above;
        g
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupEstimate {
    pub value: f64,
    pub t_arg: f64,
    /// The maximum stayed on an open end after the allowed extension.
    pub at_boundary: bool,
}

/// Extra decades an open end may be pushed before giving up.
const MAX_EXTENSION_DECADES: usize = 24;
const GOLDEN_ITERATIONS: usize = 24;

/// `max_t t^delta g(t)` over the grid, extended on open ends while the maximum
/// sits there, then polished by golden-section search in `log t` around the
/// discrete argmax.
pub fn sup_over_t<F: Fn(f64) -> f64>(grid: &TGrid, delta: f64, g: F) -> SupEstimate {
    let h = |t: f64| {
        let v = g(t);
        if delta == 0.0 {
            v
        } else {
            t.powf(delta) * v
        }
    };
    let mut ts: Vec<f64> = grid.values.clone();
    let mut vs: Vec<f64> = ts.iter().map(|&t| h(t)).collect();
    let step = (1.0f64 / grid.points_per_decade as f64) * std::f64::consts::LN_10;
    let ratio = step.exp();

    let mut at_boundary = false;
    let argmax = |vs: &[f64]| {
        let mut best = 0;
        for (i, v) in vs.iter().enumerate() {
            if *v > vs[best] {
                best = i;
            }
        }
        best
    };
    let mut best = argmax(&vs);

    if grid.open_above && best == ts.len() - 1 && vs[best] > 0.0 {
        let mut added = 0;
        loop {
            let t = ts[ts.len() - 1] * ratio;
            let v = h(t);
            ts.push(t);
            vs.push(v);
            added += 1;
            if v < vs[vs.len() - 2] {
                break;
            }
            if added >= MAX_EXTENSION_DECADES * grid.points_per_decade || !t.is_finite() {
                at_boundary = true;
                break;
            }
        }
        best = argmax(&vs);
    }
    if grid.open_below && best == 0 && vs[0] > 0.0 {
        let mut front_t = Vec::new();
        let mut front_v = Vec::new();
        let mut t = ts[0];
        let mut prev = vs[0];
        loop {
            t /= ratio;
            let v = h(t);
            front_t.push(t);
            front_v.push(v);
            if v < prev {
                break;
            }
            prev = v;
            if front_t.len() >= MAX_EXTENSION_DECADES * grid.points_per_decade || t == 0.0 {
                at_boundary = true;
                break;
            }
        }
        front_t.reverse();
        front_v.reverse();
        front_t.extend_from_slice(&ts);
        front_v.extend_from_slice(&vs);
        ts = front_t;
        vs = front_v;
        best = argmax(&vs);
    }

    let mut value = vs[best];
    let mut t_arg = ts[best];
    if best > 0 && best + 1 < ts.len() && value > 0.0 {
        let phi = |u: f64| h(u.exp());
        let (mut a, mut b) = (ts[best - 1].ln(), ts[best + 1].ln());
        let r = 0.5 * (5f64.sqrt() - 1.0);
        let mut c = b - r * (b - a);
        let mut d = a + r * (b - a);
        let mut fc = phi(c);
        let mut fd = phi(d);
        for _ in 0..GOLDEN_ITERATIONS {
            if fc > fd {
                b = d;
                d = c;
                fd = fc;
                c = b - r * (b - a);
                fc = phi(c);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + r * (b - a);
                fd = phi(d);
            }
        }
        let (u, v) = if fc > fd { (c, fc) } else { (d, fd) };
        if v > value {
            value = v;
            t_arg = u.exp();
        }
    }
    SupEstimate {
        value,
        t_arg,
        at_boundary,
    }
}
