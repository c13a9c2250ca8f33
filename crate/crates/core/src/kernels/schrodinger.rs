//! Heat kernel of `-d^2/dx^2 + V` on a truncated interval, from the full
//! eigendecomposition of the second-order finite-difference matrix with zero
//! boundary values.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Nonnegative potential on the real line.
#[derive(Clone)]
pub enum Potential {
    Zero,
    Constant(f64),
    /// `V(x) = x^2`.
    Harmonic,
    Custom {
        name: String,
        f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    },
}

impl Potential {
    pub fn custom(name: impl Into<String>, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Potential::Custom {
            name: name.into(),
            f: Arc::new(f),
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        match self {
            Potential::Zero => 0.0,
            Potential::Constant(c) => *c,
            Potential::Harmonic => x * x,
            Potential::Custom { f, .. } => f(x),
        }
    }

    pub fn id(&self) -> String {
        match self {
            Potential::Zero => "zero".into(),
            Potential::Constant(c) => format!("const({c})"),
            Potential::Harmonic => "x^2".into(),
            Potential::Custom { name, .. } => name.clone(),
        }
    }
}

impl fmt::Debug for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Potential({})", self.id())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchrodingerConfig {
    /// Truncation box is `[-half_width, half_width]`.
    pub half_width: f64,
    /// Interior grid points.
    pub n_points: usize,
}

impl Default for SchrodingerConfig {
    fn default() -> Self {
        SchrodingerConfig {
            half_width: 20.0,
            n_points: 2000,
        }
    }
}

/// Modes with `t (lambda_k - lambda_0)` above this are dropped.
const MODE_CUTOFF: f64 = 40.0;

#[derive(Debug)]
pub struct SchrodingerKernel {
    pub potential: Potential,
    pub config: SchrodingerConfig,
    pub h: f64,
    grid: Vec<f64>,
    eigenvalues: Vec<f64>,
    /// Mode-major: `modes[k * n + i] = phi_k(x_i)`, unit Euclidean norm.
    modes: Vec<f64>,
    /// `Σ_i phi_k(x_i)`.
    mode_sums: Vec<f64>,
}

impl SchrodingerKernel {
    pub fn build(potential: Potential, config: SchrodingerConfig) -> Result<Self> {
        let n = config.n_points;
        let l = config.half_width;
        if n < 3 || !(l > 0.0) {
            return Err(Error::domain(
                "schrodinger grid needs >= 3 points and a positive box",
            ));
        }
        let h = 2.0 * l / (n as f64 + 1.0);
        let grid: Vec<f64> = (0..n).map(|i| -l + (i as f64 + 1.0) * h).collect();
        let v: Vec<f64> = grid.iter().map(|&x| potential.value(x)).collect();
        if let Some((i, bad)) = v
            .iter()
            .enumerate()
            .find(|(_, &p)| !(p >= 0.0) || !p.is_finite())
        {
            return Err(Error::domain(format!(
                "potential sample {bad} at x = {} is not a finite nonnegative number",
                grid[i]
            )));
        }
        let ih2 = 1.0 / (h * h);
        let diag: Vec<f64> = v.iter().map(|&p| 2.0 * ih2 + p).collect();
        let off = -ih2;
        let eigenvalues = tridiagonal_eigenvalues(&diag, off);
        let mut modes = vec![0.0; n * n];
        let mut mode_sums = vec![0.0; n];
        let scale = eigenvalues.last().copied().unwrap_or(1.0).abs().max(1.0);
        for k in 0..n {
            let mut phi = inverse_iteration(&diag, off, eigenvalues[k], scale)?;
            // re-orthogonalize against numerically close predecessors
            let mut j = k;
            while j > 0 && (eigenvalues[k] - eigenvalues[j - 1]).abs() < 1e-7 * scale {
                j -= 1;
                let prev = &modes[j * n..(j + 1) * n];
                let dot: f64 = phi.iter().zip(prev).map(|(a, b)| a * b).sum();
                for (p, q) in phi.iter_mut().zip(prev) {
                    *p -= dot * q;
                }
                let norm = phi.iter().map(|a| a * a).sum::<f64>().sqrt();
                phi.iter_mut().for_each(|a| *a /= norm);
            }
            // sign convention: first entry of largest magnitude is positive
            let pivot =
                phi.iter()
                    .copied()
                    .fold(0.0f64, |m, a| if a.abs() > m.abs() + 1e-12 { a } else { m });
            if pivot < 0.0 {
                phi.iter_mut().for_each(|a| *a = -*a);
            }
            mode_sums[k] = phi.iter().sum();
            modes[k * n..(k + 1) * n].copy_from_slice(&phi);
        }
        Ok(SchrodingerKernel {
            potential,
            config,
            h,
            grid,
            eigenvalues,
            modes,
            mode_sums,
        })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn check_time(&self, t: f64) -> Result<()> {
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::domain("time must be positive and finite"));
        }
        if t.sqrt() > self.config.half_width / 4.0 {
            return Err(Error::domain(format!(
                "sqrt(t) = {} exceeds the validated range box/4 = {}",
                t.sqrt(),
                self.config.half_width / 4.0
            )));
        }
        Ok(())
    }

    fn active_modes(&self, t: f64) -> usize {
        let l0 = self.eigenvalues[0];
        self.eigenvalues
            .iter()
            .position(|&l| t * (l - l0) > MODE_CUTOFF)
            .unwrap_or(self.eigenvalues.len())
    }

    /// Kernel between grid nodes `i` and `j`.
    pub fn on_grid(&self, t: f64, i: usize, j: usize) -> f64 {
        let n = self.grid.len();
        let m = self.active_modes(t);
        let mut acc = 0.0;
        for k in 0..m {
            let row = &self.modes[k * n..(k + 1) * n];
            acc += (-t * self.eigenvalues[k]).exp() * row[i] * row[j];
        }
        acc / self.h
    }

    /// Interpolation stencil: up to two (node, weight) pairs; empty outside the box.
    fn stencil(&self, x: f64) -> Vec<(Option<usize>, f64)> {
        let l = self.config.half_width;
        if !(x > -l && x < l) {
            return Vec::new();
        }
        // node index as a real: x = -l + (s + 1) h, boundary nodes s = -1 and s = n carry zero
        let s = (x + l) / self.h - 1.0;
        let lo = s.floor();
        let w = s - lo;
        let n = self.grid.len() as i64;
        let idx = |k: i64| (k >= 0 && k < n).then_some(k as usize);
        vec![(idx(lo as i64), 1.0 - w), (idx(lo as i64 + 1), w)]
    }

    /// Bilinear interpolation of the grid kernel; zero outside the box.
    pub fn eval(&self, t: f64, x: f64, y: f64) -> Result<f64> {
        self.check_time(t)?;
        let sx = self.stencil(x);
        let sy = self.stencil(y);
        let n = self.grid.len();
        let m = self.active_modes(t);
        let mut acc = 0.0;
        for k in 0..m {
            let row = &self.modes[k * n..(k + 1) * n];
            let px: f64 = sx.iter().filter_map(|(i, w)| i.map(|i| w * row[i])).sum();
            if px == 0.0 {
                continue;
            }
            let py: f64 = sy.iter().filter_map(|(i, w)| i.map(|i| w * row[i])).sum();
            acc += (-t * self.eigenvalues[k]).exp() * px * py;
        }
        Ok((acc / self.h).max(0.0))
    }

    /// `h Σ_i K(x_i, y)`, the discrete full mass.
    pub fn total_mass(&self, t: f64, y: f64) -> Result<f64> {
        self.check_time(t)?;
        let sy = self.stencil(y);
        let n = self.grid.len();
        let m = self.active_modes(t);
        let mut acc = 0.0;
        for k in 0..m {
            let row = &self.modes[k * n..(k + 1) * n];
            let py: f64 = sy.iter().filter_map(|(i, w)| i.map(|i| w * row[i])).sum();
            acc += (-t * self.eigenvalues[k]).exp() * py * self.mode_sums[k];
        }
        Ok(acc.max(0.0))
    }

    /// Discrete mass over grid nodes within `radius` of `y`.
    pub fn ball_mass(&self, t: f64, y: f64, radius: f64) -> Result<f64> {
        if radius.is_infinite() {
            return self.total_mass(t, y);
        }
        self.check_time(t)?;
        let mut acc = 0.0;
        for (i, &x) in self.grid.iter().enumerate() {
            if (x - y).abs() <= radius {
                acc += self.h * self.eval(t, x, y)?;
                let _ = i;
            }
        }
        Ok(acc)
    }
}

/// All eigenvalues of the symmetric tridiagonal matrix with diagonal `d` and
/// constant off-diagonal `e`, ascending, by Sturm-sequence bisection.
pub fn tridiagonal_eigenvalues(d: &[f64], e: f64) -> Vec<f64> {
    let n = d.len();
    let (lo, hi) = d
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &di| {
            (lo.min(di - 2.0 * e.abs()), hi.max(di + 2.0 * e.abs()))
        });
    let e2 = e * e;
    // number of eigenvalues strictly below x
    let count = |x: f64| {
        let mut c = 0usize;
        let mut q = d[0] - x;
        if q < 0.0 {
            c += 1;
        }
        for &di in &d[1..] {
            let denom = if q == 0.0 {
                f64::EPSILON * e.abs().max(1.0)
            } else {
                q
            };
            q = di - x - e2 / denom;
            if q < 0.0 {
                c += 1;
            }
        }
        c
    };
    let mut out = Vec::with_capacity(n);
    let mut left = lo;
    for k in 0..n {
        let mut a = left;
        let mut b = hi;
        loop {
            let m = 0.5 * (a + b);
            if m <= a || m >= b || b - a <= 4.0 * f64::EPSILON * m.abs().max(1.0) {
                break;
            }
            if count(m) > k {
                b = m;
            } else {
                a = m;
            }
        }
        let lam = 0.5 * (a + b);
        out.push(lam);
        left = a;
    }
    out
}

/// Eigenvector for an accurate eigenvalue `lam` by inverse iteration with a
/// pivoted tridiagonal solve.
fn inverse_iteration(d: &[f64], e: f64, lam: f64, scale: f64) -> Result<Vec<f64>> {
    let n = d.len();
    let shift = lam + 1e-13 * scale;
    // deterministic start vector with all modes present
    let mut x: Vec<f64> = (0..n)
        .map(|i| 1.0 + 0.37 * ((i * 7919 % 613) as f64 / 613.0))
        .collect();
    let lu = TridiagLu::new(d, e, shift);
    for _ in 0..3 {
        let y = lu.solve(&x);
        let norm = y.iter().map(|a| a * a).sum::<f64>().sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::numerical("inverse iteration", f64::INFINITY));
        }
        x = y.into_iter().map(|a| a / norm).collect();
    }
    Ok(x)
}

/// LU factors of `T - shift I` with partial pivoting (second superdiagonal fill).
struct TridiagLu {
    // rows after elimination: u0 (diag), u1, u2 (fill)
    u0: Vec<f64>,
    u1: Vec<f64>,
    u2: Vec<f64>,
    l: Vec<f64>,
    swapped: Vec<bool>,
}

impl TridiagLu {
    fn new(d: &[f64], e: f64, shift: f64) -> Self {
        let n = d.len();
        let mut u0 = vec![0.0; n];
        let mut u1 = vec![0.0; n];
        let mut u2 = vec![0.0; n];
        let mut l = vec![0.0; n];
        let mut swapped = vec![false; n];
        // current row i: (a, b, c) at columns i, i+1, i+2
        let mut a = d[0] - shift;
        let mut b = if n > 1 { e } else { 0.0 };
        let mut c = 0.0;
        let tiny = f64::EPSILON * (d.iter().fold(0.0f64, |m, v| m.max(v.abs())) + e.abs());
        for i in 0..n {
            if i + 1 < n {
                // next row: (e, d[i+1]-shift, e) at columns i, i+1, i+2
                let na = e;
                let nb = d[i + 1] - shift;
                let nc = if i + 2 < n { e } else { 0.0 };
                if na.abs() > a.abs() {
                    swapped[i] = true;
                    let m = a / na;
                    u0[i] = na;
                    u1[i] = nb;
                    u2[i] = nc;
                    l[i] = m;
                    a = b - m * nb;
                    b = c - m * nc;
                    c = 0.0;
                } else {
                    let piv = if a == 0.0 { tiny } else { a };
                    let m = na / piv;
                    u0[i] = piv;
                    u1[i] = b;
                    u2[i] = c;
                    l[i] = m;
                    a = nb - m * b;
                    b = nc - m * c;
                    c = 0.0;
                }
            } else {
                u0[i] = if a == 0.0 { tiny } else { a };
            }
        }
        TridiagLu {
            u0,
            u1,
            u2,
            l,
            swapped,
        }
    }

    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = rhs.len();
        let mut y = rhs.to_vec();
        for i in 0..n.saturating_sub(1) {
            if self.swapped[i] {
                y.swap(i, i + 1);
                // after swap the pivot row is the old row i+1
                let m = self.l[i];
                y[i + 1] -= m * y[i];
            } else {
                y[i + 1] -= self.l[i] * y[i];
            }
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let mut s = y[i];
            if i + 1 < n {
                s -= self.u1[i] * x[i + 1];
            }
            if i + 2 < n {
                s -= self.u2[i] * x[i + 2];
            }
            x[i] = s / self.u0[i];
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn free_eigenvalues_match_formula() {
        let n = 50;
        let h = 1.0 / (n as f64 + 1.0);
        let d = vec![2.0 / (h * h); n];
        let ev = tridiagonal_eigenvalues(&d, -1.0 / (h * h));
        for (k, &l) in ev.iter().enumerate() {
            let exact = 4.0 / (h * h)
                * (PI * (k as f64 + 1.0) / (2.0 * (n as f64 + 1.0)))
                    .sin()
                    .powi(2);
            assert!((l - exact).abs() < 1e-9 * exact, "k={k}");
        }
    }

    #[test]
    fn pivoted_solve_is_accurate() {
        let d = vec![0.1, 3.0, -2.0, 0.5, 4.0];
        let e = 1.5;
        let lu = TridiagLu::new(&d, e, 0.3);
        let rhs = vec![1.0, -2.0, 0.5, 3.0, 1.0];
        let x = lu.solve(&rhs);
        for i in 0..5 {
            let mut r = (d[i] - 0.3) * x[i];
            if i > 0 {
                r += e * x[i - 1];
            }
            if i < 4 {
                r += e * x[i + 1];
            }
            assert!((r - rhs[i]).abs() < 1e-12, "row {i}");
        }
    }

    #[test]
    fn eigenvectors_are_orthonormal() {
        let k = SchrodingerKernel::build(
            Potential::Harmonic,
            SchrodingerConfig {
                half_width: 8.0,
                n_points: 200,
            },
        )
        .unwrap();
        let n = 200;
        for a in [0usize, 1, 7, 100, 199] {
            for b in [0usize, 1, 7, 100, 199] {
                let dot: f64 = (0..n)
                    .map(|i| k.modes[a * n + i] * k.modes[b * n + i])
                    .sum();
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-9, "{a} {b} {dot}");
            }
        }
        // harmonic oscillator levels 2k + 1
        for (j, &l) in k.eigenvalues()[..4].iter().enumerate() {
            assert!((l - (2.0 * j as f64 + 1.0)).abs() < 1e-2);
        }
    }

    #[test]
    fn harmonic_origin_matches_mehler() {
        let k =
            SchrodingerKernel::build(Potential::Harmonic, SchrodingerConfig::default()).unwrap();
        // (2 pi sinh 1)^{-1/2}
        let v = k.eval(0.5, 0.0, 0.0).unwrap();
        assert!((v / 0.36800519870756081 - 1.0).abs() < 1e-3, "{v}");
    }

    #[test]
    fn dominated_by_free_kernel_on_grid() {
        let cfg = SchrodingerConfig {
            half_width: 10.0,
            n_points: 400,
        };
        let free = SchrodingerKernel::build(Potential::Zero, cfg).unwrap();
        let g = free.grid().to_vec();
        for pot in [Potential::Constant(1.0), Potential::Harmonic] {
            let k = SchrodingerKernel::build(pot, cfg).unwrap();
            for t in [0.05, 0.5, 2.0] {
                for i in (0..g.len()).step_by(7) {
                    for j in (0..g.len()).step_by(11) {
                        let v = k.on_grid(t, i, j);
                        assert!(v >= -1e-12 && v <= free.on_grid(t, i, j) + 1e-12);
                    }
                }
            }
        }
        // the free grid kernel exceeds the continuum one by O(h^2/t) only
        for t in [0.05, 0.5, 2.0] {
            let heat = (4.0 * PI * t).powf(-0.5);
            let v = free.on_grid(t, 200, 200);
            assert!(
                v >= heat && v / heat - 1.0 < free.h * free.h / t,
                "{t}: {v} vs {heat}"
            );
        }
    }

    #[test]
    fn rejects_negative_potential_and_long_times() {
        let r = SchrodingerKernel::build(Potential::Constant(-1.0), SchrodingerConfig::default());
        assert!(matches!(r, Err(Error::Domain(_))));
        let k = SchrodingerKernel::build(
            Potential::Zero,
            SchrodingerConfig {
                half_width: 4.0,
                n_points: 50,
            },
        )
        .unwrap();
        assert!(k.eval(1.01, 0.0, 0.0).is_err());
        assert!(k.eval(0.99, 0.0, 0.0).is_ok());
    }
}
