//! Product midpoint rules with Richardson extrapolation on adaptively split
//! boxes, and complement integrals with a power-law tail bound.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::geometry::{bounds_volume, Bounds, DomainSpec, Interval};
use crate::quadrature::adaptive::Estimate;

#[derive(Debug, Clone, PartialEq)]
pub struct SpatialConfig {
    /// Midpoint nodes per axis on the coarse level of each leaf.
    pub points_per_axis: usize,
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_leaves: usize,
    /// Complement windows start at `window_factor * d_Q` around the cuboid.
    pub window_factor: f64,
    /// The window grows while the tail bound exceeds this fraction of the value.
    pub tail_fraction: f64,
    pub max_window_doublings: usize,
}

impl Default for SpatialConfig {
    fn default() -> Self {
        SpatialConfig {
            points_per_axis: 2,
            abs_tol: 1e-13,
            rel_tol: 1e-7,
            max_leaves: 20_000,
            window_factor: 50.0,
            tail_fraction: 0.01,
            max_window_doublings: 6,
        }
    }
}

impl SpatialConfig {
    pub fn with_tol(mut self, abs_tol: f64, rel_tol: f64) -> Self {
        self.abs_tol = abs_tol;
        self.rel_tol = rel_tol;
        self
    }
}

/// Region made of disjoint boxes, with optional focus point and per-axis
/// breakpoints that become leaf faces.
#[derive(Debug, Clone)]
pub struct SpatialRule {
    boxes: Vec<Bounds>,
    breakpoints: Vec<Vec<f64>>,
    pub config: SpatialConfig,
}

impl SpatialRule {
    pub fn on_box(b: Bounds, config: SpatialConfig) -> Self {
        let d = b.len();
        SpatialRule {
            boxes: vec![b],
            breakpoints: vec![Vec::new(); d],
            config,
        }
    }

    /// `window \ hole`, split into at most `3^d - 1` boxes.
    pub fn complement(window: Bounds, hole: &[Interval], config: SpatialConfig) -> Self {
        let d = window.len();
        SpatialRule {
            boxes: box_difference(&window, hole),
            breakpoints: vec![Vec::new(); d],
            config,
        }
    }

    pub fn from_boxes(boxes: Vec<Bounds>, config: SpatialConfig) -> Self {
        let d = boxes.first().map(|b| b.len()).unwrap_or(0);
        SpatialRule {
            boxes,
            breakpoints: vec![Vec::new(); d],
            config,
        }
    }

    /// Make the coordinates of `y` leaf faces so no node lands on it and the
    /// kink of a kernel at `x = y` sits on a leaf boundary.
    pub fn with_focus(mut self, y: &[f64]) -> Self {
        for (bp, &v) in self.breakpoints.iter_mut().zip(y) {
            bp.push(v);
        }
        self
    }

    pub fn with_breakpoints(mut self, axis: usize, pts: &[f64]) -> Self {
        self.breakpoints[axis].extend_from_slice(pts);
        self
    }

    pub fn boxes(&self) -> &[Bounds] {
        &self.boxes
    }

    pub fn volume(&self) -> f64 {
        self.boxes.iter().map(|b| bounds_volume(b)).sum()
    }

    /// Coarse product midpoint nodes and weights of the unrefined rule.
    pub fn nodes_and_weights(&self) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        for b in self.initial_leaves() {
            let (n, w) = midpoint_nodes(&b, self.config.points_per_axis);
            nodes.extend(n);
            weights.extend(w);
        }
        (nodes, weights)
    }

    fn initial_leaves(&self) -> Vec<Bounds> {
        let mut out = Vec::new();
        for b in &self.boxes {
            if bounds_volume(b) <= 0.0 {
                continue;
            }
            let mut pieces = vec![b.clone()];
            for (axis, cuts) in self.breakpoints.iter().enumerate() {
                let mut next = Vec::with_capacity(pieces.len());
                for p in pieces {
                    let mut edges = vec![p[axis].lo];
                    let mut inner: Vec<f64> = cuts
                        .iter()
                        .copied()
                        .filter(|&c| c > p[axis].lo && c < p[axis].hi)
                        .collect();
                    inner.sort_by(|a, b| a.total_cmp(b));
                    inner.dedup();
                    edges.extend(inner);
                    edges.push(p[axis].hi);
                    for w in edges.windows(2) {
                        let mut q = p.clone();
                        q[axis] = Interval::new(w[0], w[1]);
                        next.push(q);
                    }
                }
                pieces = next;
            }
            out.extend(pieces);
        }
        out
    }

    /// Adaptive integration; fails when the budget is exhausted above tolerance.
    pub fn integrate<F: Fn(&[f64]) -> f64>(&self, f: F) -> Result<Estimate> {
        let (est, converged) = self.run(&f);
        if converged {
            Ok(est)
        } else {
            Err(Error::numerical("spatial quadrature", est.error))
        }
    }

    /// Adaptive integration returning whatever accuracy the budget allowed.
    pub fn integrate_best_effort<F: Fn(&[f64]) -> f64>(&self, f: F) -> Estimate {
        self.run(&f).0
    }

    fn run<F: Fn(&[f64]) -> f64>(&self, f: &F) -> (Estimate, bool) {
        let m = self.config.points_per_axis.max(1);
        let mut heap = BinaryHeap::new();
        let mut total = Estimate::default();
        for b in self.initial_leaves() {
            let est = leaf_estimate(f, &b, m);
            total = total + est;
            heap.push(Leaf { bounds: b, est });
        }
        if heap.is_empty() {
            return (total, true);
        }
        let mut count = heap.len();
        loop {
            let tol = self
                .config
                .abs_tol
                .max(self.config.rel_tol * total.value.abs());
            if total.error <= tol {
                return (resum(&heap), true);
            }
            if count >= self.config.max_leaves || !total.value.is_finite() {
                return (resum(&heap), false);
            }
            let worst = heap.pop().expect("nonempty");
            let axis = longest_axis(&worst.bounds);
            let iv = worst.bounds[axis];
            let mid = iv.mid();
            if !(mid > iv.lo && mid < iv.hi) {
                heap.push(Leaf {
                    est: Estimate::new(worst.est.value, 0.0),
                    ..worst
                });
                total.error -= worst.est.error;
                continue;
            }
            let mut lo = worst.bounds.clone();
            lo[axis].hi = mid;
            let mut hi = worst.bounds;
            hi[axis].lo = mid;
            let el = leaf_estimate(f, &lo, m);
            let eh = leaf_estimate(f, &hi, m);
            total.value += el.value + eh.value - worst.est.value;
            total.error += el.error + eh.error - worst.est.error;
            heap.push(Leaf {
                bounds: lo,
                est: el,
            });
            heap.push(Leaf {
                bounds: hi,
                est: eh,
            });
            count += 1;
            if count % 128 == 0 {
                total = resum(&heap);
            }
        }
    }
}

struct Leaf {
    bounds: Bounds,
    est: Estimate,
}

impl PartialEq for Leaf {
    fn eq(&self, other: &Self) -> bool {
        self.est.error == other.est.error
    }
}
impl Eq for Leaf {}
impl PartialOrd for Leaf {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Leaf {
    fn cmp(&self, other: &Self) -> Ordering {
        self.est.error.total_cmp(&other.est.error)
    }
}

fn resum(heap: &BinaryHeap<Leaf>) -> Estimate {
    // pairwise summation over a deterministic order
    let mut leaves: Vec<&Leaf> = heap.iter().collect();
    leaves.sort_by(|a, b| {
        for (p, q) in a.bounds.iter().zip(&b.bounds) {
            match p.lo.total_cmp(&q.lo) {
                Ordering::Equal => continue,
                o => return o,
            }
        }
        Ordering::Equal
    });
    let vals: Vec<f64> = leaves.iter().map(|l| l.est.value).collect();
    let errs: Vec<f64> = leaves.iter().map(|l| l.est.error).collect();
    Estimate::new(pairwise_sum(&vals), pairwise_sum(&errs))
}

/// Tree summation.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 8 {
        return v.iter().sum();
    }
    let (a, b) = v.split_at(v.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

fn longest_axis(b: &[Interval]) -> usize {
    let mut best = 0;
    for (j, i) in b.iter().enumerate() {
        if i.len() > b[best].len() {
            best = j;
        }
    }
    best
}

fn midpoint_nodes(b: &[Interval], m: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
    let d = b.len();
    let w = bounds_volume(b) / (m.pow(d as u32) as f64);
    let total = m.pow(d as u32);
    let mut nodes = Vec::with_capacity(total);
    let mut idx = vec![0usize; d];
    for _ in 0..total {
        nodes.push(
            (0..d)
                .map(|j| b[j].lo + (idx[j] as f64 + 0.5) * b[j].len() / m as f64)
                .collect(),
        );
        for j in 0..d {
            idx[j] += 1;
            if idx[j] < m {
                break;
            }
            idx[j] = 0;
        }
    }
    (nodes, vec![w; total])
}

fn midpoint<F: Fn(&[f64]) -> f64>(f: &F, b: &[Interval], m: usize) -> f64 {
    let d = b.len();
    let total = m.pow(d as u32);
    let mut idx = vec![0usize; d];
    let mut x = vec![0.0; d];
    let mut acc = 0.0;
    for _ in 0..total {
        for j in 0..d {
            x[j] = b[j].lo + (idx[j] as f64 + 0.5) * b[j].len() / m as f64;
        }
        acc += f(&x);
        for j in 0..d {
            idx[j] += 1;
            if idx[j] < m {
                break;
            }
            idx[j] = 0;
        }
    }
    acc * bounds_volume(b) / total as f64
}

/// Midpoint sums at `m`, `2m`, `4m` nodes per axis, extrapolated twice.
/// The error reported is that of the first extrapolation on the finer pair.
fn leaf_estimate<F: Fn(&[f64]) -> f64>(f: &F, b: &[Interval], m: usize) -> Estimate {
    let m1 = midpoint(f, b, m);
    let m2 = midpoint(f, b, 2 * m);
    let m4 = midpoint(f, b, 4 * m);
    let r1 = (4.0 * m2 - m1) / 3.0;
    let r2 = (4.0 * m4 - m2) / 3.0;
    Estimate::new((16.0 * r2 - r1) / 15.0, (r2 - r1).abs() / 15.0)
}

/// `window \ hole` as disjoint boxes; `hole` is clipped to the window first.
pub fn box_difference(window: &[Interval], hole: &[Interval]) -> Vec<Bounds> {
    let d = window.len();
    let Some(hole) = crate::geometry::bounds_intersect(window, hole) else {
        return vec![window.to_vec()];
    };
    // per axis: (segment, is_middle)
    let segs: Vec<Vec<(Interval, bool)>> = (0..d)
        .map(|j| {
            let w = window[j];
            let h = hole[j];
            let mut s = Vec::new();
            if h.lo > w.lo {
                s.push((Interval::new(w.lo, h.lo), false));
            }
            s.push((h, true));
            if h.hi < w.hi {
                s.push((Interval::new(h.hi, w.hi), false));
            }
            s
        })
        .collect();
    let mut out = Vec::new();
    let mut idx = vec![0usize; d];
    loop {
        let all_middle = (0..d).all(|j| segs[j][idx[j]].1);
        if !all_middle {
            let b: Bounds = (0..d).map(|j| segs[j][idx[j]].0).collect();
            if bounds_volume(&b) > 0.0 {
                out.push(b);
            }
        }
        let mut j = 0;
        loop {
            if j == d {
                return out;
            }
            idx[j] += 1;
            if idx[j] < segs[j].len() {
                break;
            }
            idx[j] = 0;
            j += 1;
        }
    }
}

/// Complement integral over `X \ hole`, split into a window part and a tail bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutsideEstimate {
    pub window: Estimate,
    /// Power-law estimate of the integral beyond the window; infinite when
    /// the fitted decay is not integrable.
    pub tail: f64,
    /// Disagreement between tail fits from two radius pairs.
    pub tail_error: f64,
    /// Fitted power-law decay exponent of the integrand at the window edge.
    pub decay: f64,
    /// Final window half-width.
    pub radius: f64,
}

impl OutsideEstimate {
    pub fn total(&self) -> Estimate {
        Estimate::new(
            self.window.value + self.tail,
            self.window.error + self.tail_error,
        )
    }

    pub fn is_finite(&self) -> bool {
        self.tail.is_finite() && self.window.value.is_finite()
    }
}

/// Surface area of the unit sphere in `R^d`.
fn sphere_area(d: usize) -> f64 {
    let h = d as f64 / 2.0;
    2.0 * std::f64::consts::PI.powf(h) / libm::tgamma(h)
}

/// `∫_{X \ hole} f` with `X` truncated to a cube of half-width `W d_Q` around
/// `center`; the remainder is bounded by a power law fitted to `f` on the
/// window edge, and `W` doubles while that bound is a sizeable fraction.
pub fn integrate_outside<F: Fn(&[f64]) -> f64>(
    f: F,
    hole: &[Interval],
    domain: &DomainSpec,
    center: &[f64],
    scale: f64,
    focus: Option<&[f64]>,
    config: &SpatialConfig,
) -> Result<OutsideEstimate> {
    let d = center.len();
    let mut radius = config.window_factor * scale;
    let mut doublings = 0;
    loop {
        let window: Bounds = center
            .iter()
            .map(|&c| Interval::new(c - radius, c + radius))
            .collect();
        let Some(window) = domain.clip(&window) else {
            return Ok(OutsideEstimate {
                window: Estimate::default(),
                tail: 0.0,
                tail_error: 0.0,
                decay: f64::INFINITY,
                radius,
            });
        };
        let mut rule = SpatialRule::complement(window.clone(), hole, config.clone());
        if let Some(y) = focus {
            rule = rule.with_focus(y);
        }
        let est = rule.integrate_best_effort(&f);
        if !est.value.is_finite() {
            return Err(Error::numerical("complement quadrature", f64::INFINITY));
        }
        let (tail, tail_error, decay) = tail_bound(&f, domain, center, radius, d);
        let done = tail_error <= config.tail_fraction * est.value.abs() || tail <= config.abs_tol;
        if done || doublings >= config.max_window_doublings || !tail.is_finite() && doublings >= 2 {
            return Ok(OutsideEstimate {
                window: est,
                tail,
                tail_error,
                decay,
                radius,
            });
        }
        radius *= 2.0;
        doublings += 1;
    }
}

fn tail_bound<F: Fn(&[f64]) -> f64>(
    f: &F,
    domain: &DomainSpec,
    center: &[f64],
    radius: f64,
    d: usize,
) -> (f64, f64, f64) {
    // a bounded domain inside the window leaves no tail
    let open_axes: Vec<(usize, f64)> = domain
        .intervals()
        .iter()
        .enumerate()
        .flat_map(|(j, iv)| {
            let mut dirs = Vec::new();
            if iv.hi > center[j] + radius {
                dirs.push((j, 1.0));
            }
            if iv.lo < center[j] - radius {
                dirs.push((j, -1.0));
            }
            dirs
        })
        .collect();
    if open_axes.is_empty() {
        return (0.0, 0.0, f64::INFINITY);
    }
    let probe = |r: f64| {
        let mut worst: f64 = 0.0;
        for &(j, s) in &open_axes {
            let mut x = center.to_vec();
            x[j] += s * r;
            if !domain.contains(&x) {
                continue;
            }
            worst = worst.max(f(&x).abs());
            // off-axis probes catch integrands that decay slower along diagonals
            if d > 1 {
                let mut z = center.to_vec();
                let step = r / (d as f64).sqrt();
                for (k, zk) in z.iter_mut().enumerate() {
                    let iv = domain.intervals()[k];
                    let sign = if k == j {
                        s
                    } else if iv.hi.is_infinite() {
                        1.0
                    } else {
                        -1.0
                    };
                    let cand = *zk + sign * step;
                    if iv.contains(cand) {
                        *zk = cand;
                    }
                }
                worst = worst.max(f(&z).abs());
            }
        }
        worst
    };
    let f_half = probe(0.5 * radius);
    let f_full = probe(radius);
    let f_twice = probe(2.0 * radius);
    if f_full == 0.0 {
        return (0.0, 0.0, f64::INFINITY);
    }
    let exponent = |a: f64, b: f64| {
        if a > 0.0 && b > 0.0 {
            (a / b).ln() / std::f64::consts::LN_2
        } else {
            f64::INFINITY
        }
    };
    let dd = d as f64;
    let shell = f_full * sphere_area(d) * radius.powi(d as i32);
    let tail_for = |p: f64| {
        if p.is_infinite() {
            0.0
        } else {
            shell / (p - dd)
        }
    };
    let near = exponent(f_half, f_full);
    let far = exponent(f_full, f_twice);
    if !(near > dd + 0.05) || !(far > dd + 0.05) {
        return (f64::INFINITY, f64::INFINITY, near.min(far));
    }
    let (t_near, t_far) = (tail_for(near), tail_for(far));
    // the outer pair sits closer to the asymptotic regime
    (t_far, (t_far - t_near).abs(), far)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn cfg() -> SpatialConfig {
        SpatialConfig::default().with_tol(1e-14, 1e-11)
    }

    #[test]
    fn constant_on_unit_interval() {
        let r = SpatialRule::on_box(vec![Interval::new(1.0, 2.0)], cfg());
        let e = r.integrate(|_| 1.0).unwrap();
        assert!((e.value - 1.0).abs() < 1e-15);
    }

    #[test]
    fn gaussian_mass() {
        let t: f64 = 0.3;
        let s = t.sqrt();
        let r = SpatialRule::on_box(
            vec![Interval::new(-20.0 * s, 20.0 * s)],
            SpatialConfig::default(),
        );
        let e = r
            .integrate(|x| (4.0 * PI * t).powf(-0.5) * (-x[0] * x[0] / (4.0 * t)).exp())
            .unwrap();
        assert!((e.value - 1.0).abs() < 1e-8, "{e:?}");
    }

    #[test]
    fn complement_is_additive() {
        let window = vec![Interval::new(-9.0, 11.0), Interval::new(-9.0, 11.0)];
        let hole = vec![Interval::new(0.5, 1.5), Interval::new(0.0, 2.0)];
        let f = |x: &[f64]| {
            (-(x[0] - 0.3).powi(2) / 8.0 - x[1] * x[1] / 5.0).exp()
                * (2.0 + (0.3 * x[0]).sin() * (0.2 * x[1]).cos())
        };
        let c = SpatialConfig::default().with_tol(1e-14, 1e-10);
        let whole = SpatialRule::on_box(window.clone(), c.clone())
            .integrate(f)
            .unwrap();
        let inner = SpatialRule::on_box(hole.clone(), c.clone())
            .integrate(f)
            .unwrap();
        let outer = SpatialRule::complement(window, &hole, c)
            .integrate(f)
            .unwrap();
        let gap = (whole.value - inner.value - outer.value).abs();
        assert!(
            gap < whole.error + inner.error + outer.error,
            "{gap:e} {whole:?} {inner:?} {outer:?}"
        );
        assert!(gap < 1e-10);
    }

    #[test]
    fn weights_sum_to_volume() {
        let window = vec![Interval::new(0.0, 3.0), Interval::new(-1.0, 1.0)];
        let hole = vec![Interval::new(1.0, 2.0), Interval::new(-0.5, 0.5)];
        let r = SpatialRule::complement(window, &hole, cfg()).with_focus(&[1.2, 0.7]);
        let (nodes, w) = r.nodes_and_weights();
        assert_eq!(nodes.len(), w.len());
        assert!(w.iter().all(|&v| v >= 0.0));
        assert!((w.iter().sum::<f64>() - 5.0).abs() < 1e-12);
        assert!((r.volume() - 5.0).abs() < 1e-12);
        assert_eq!(r.boxes().len(), 8);
    }

    #[test]
    fn focus_is_never_a_node() {
        let y = [0.25];
        let r = SpatialRule::on_box(vec![Interval::new(0.0, 1.0)], cfg()).with_focus(&y);
        let (nodes, _) = r.nodes_and_weights();
        assert!(nodes.iter().all(|x| x[0] != y[0]));
        // the kink at y is a leaf face, so the rule is exact
        let e = SpatialRule::on_box(vec![Interval::new(0.0, 1.0)], cfg())
            .with_focus(&y)
            .integrate(|x| (x[0] - y[0]).abs())
            .unwrap();
        assert!((e.value - 0.3125).abs() < 1e-15);
    }

    #[test]
    fn power_tail_is_bounded() {
        // ∫_{|x|>1} |x|^{-3} dx = 1
        let hole = vec![Interval::new(-1.0, 1.0)];
        let est = integrate_outside(
            |x| x[0].abs().powi(-3),
            &hole,
            &DomainSpec::euclidean(1),
            &[0.0],
            1.0,
            None,
            &SpatialConfig::default(),
        )
        .unwrap();
        assert!(est.is_finite());
        assert!((est.decay - 3.0).abs() < 1e-9);
        assert!((est.total().value - 1.0).abs() <= est.total().error + 1e-6);
    }

    #[test]
    fn slow_tail_is_divergent() {
        let hole = vec![Interval::new(-1.0, 1.0)];
        let est = integrate_outside(
            |x| 1.0 / x[0].abs(),
            &hole,
            &DomainSpec::euclidean(1),
            &[0.0],
            1.0,
            None,
            &SpatialConfig::default(),
        )
        .unwrap();
        assert!(!est.is_finite());
    }
}
