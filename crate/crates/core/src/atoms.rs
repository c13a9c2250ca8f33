//! Q-atoms, random atom generation, localization by a partition of unity,
//! the Haar-type local decomposition and atom maximal norms.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::coverings::{enlarge, PartitionOfUnity};
use crate::error::{Error, Result};
use crate::geometry::{bounds_contains, bounds_volume, Bounds, Cuboid, DomainSpec, Interval};
use crate::kernels::KernelFamily;
use crate::quadrature::spatial::{integrate_outside, pairwise_sum, SpatialConfig, SpatialRule};
use crate::quadrature::tgrid::{sup_over_t, TGrid};
use crate::real::Real;

pub const DEFAULT_GRID_POINTS: usize = 256;
/// Noise cells per axis of random classical atoms.
pub const DEFAULT_NOISE_CELLS: usize = 16;
/// Fraction of `|K|^{-1}` reached by random classical atoms.
pub const SIZE_MARGIN: f64 = 1.0;

/// Piecewise constant function on a uniform cell grid over a box.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction<T: Real = f64> {
    pub bounds: Bounds<T>,
    pub shape: Vec<usize>,
    /// Row-major, last axis fastest.
    pub values: Vec<T>,
}

impl<T: Real> GridFunction<T> {
    pub fn zeros(bounds: Bounds<T>, shape: Vec<usize>) -> Result<Self> {
        if bounds.len() != shape.len() || shape.contains(&0) {
            return Err(Error::domain(
                "grid shape must match the box and be nonzero",
            ));
        }
        let n = shape.iter().product();
        Ok(GridFunction {
            bounds,
            shape,
            values: vec![T::zero(); n],
        })
    }

    /// Samples `f` at cell centres.
    pub fn from_fn<F: Fn(&[T]) -> T>(bounds: Bounds<T>, shape: Vec<usize>, f: F) -> Result<Self> {
        let mut g = Self::zeros(bounds, shape)?;
        for i in 0..g.values.len() {
            let x = g.cell_center(i);
            g.values[i] = f(&x);
        }
        Ok(g)
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn cell_widths(&self) -> Vec<T> {
        self.bounds
            .iter()
            .zip(&self.shape)
            .map(|(b, &n)| (b.hi - b.lo) / T::from_usize_lossy(n))
            .collect()
    }

    pub fn cell_volume(&self) -> T {
        self.cell_widths().iter().fold(T::one(), |a, &w| a * w)
    }

    pub fn multi_index(&self, mut i: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for j in (0..self.dim()).rev() {
            idx[j] = i % self.shape[j];
            i /= self.shape[j];
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter()
            .zip(&self.shape)
            .fold(0, |acc, (&i, &n)| acc * n + i)
    }

    pub fn cell_bounds(&self, i: usize) -> Bounds<T> {
        let w = self.cell_widths();
        self.multi_index(i)
            .iter()
            .enumerate()
            .map(|(j, &k)| {
                let lo = self.bounds[j].lo + T::from_usize_lossy(k) * w[j];
                Interval::new(lo, lo + w[j])
            })
            .collect()
    }

    pub fn cell_center(&self, i: usize) -> Vec<T> {
        self.cell_bounds(i).iter().map(|c| c.mid()).collect()
    }

    /// Value of the cell containing `x`; zero outside the box.
    pub fn value_at(&self, x: &[T]) -> T {
        if !bounds_contains(&self.bounds, x) {
            return T::zero();
        }
        let w = self.cell_widths();
        let idx: Vec<usize> = (0..self.dim())
            .map(|j| {
                let k = ((x[j] - self.bounds[j].lo) / w[j])
                    .floor()
                    .to_usize()
                    .unwrap_or(0);
                k.min(self.shape[j] - 1)
            })
            .collect();
        self.values[self.flat_index(&idx)]
    }

    pub fn integral(&self) -> T {
        sum_t(&self.values) * self.cell_volume()
    }

    pub fn l1_norm(&self) -> T {
        let abs: Vec<T> = self.values.iter().map(|v| v.abs()).collect();
        sum_t(&abs) * self.cell_volume()
    }

    pub fn sup_norm(&self) -> T {
        self.values.iter().fold(T::zero(), |a, v| a.max(v.abs()))
    }

    pub fn scaled(&self, c: T) -> Self {
        let mut g = self.clone();
        g.values.iter_mut().for_each(|v| *v = *v * c);
        g
    }

    pub fn cast<U: Real>(&self) -> GridFunction<U> {
        GridFunction {
            bounds: self
                .bounds
                .iter()
                .map(|b| Interval::new(U::lit(b.lo.to_f64_lossy()), U::lit(b.hi.to_f64_lossy())))
                .collect(),
            shape: self.shape.clone(),
            values: self
                .values
                .iter()
                .map(|v| U::lit(v.to_f64_lossy()))
                .collect(),
        }
    }
}

/// Pairwise sum in the working precision.
fn sum_t<T: Real>(v: &[T]) -> T {
    if v.len() <= 8 {
        return v.iter().fold(T::zero(), |a, &b| a + b);
    }
    let (l, r) = v.split_at(v.len() / 2);
    sum_t(l) + sum_t(r)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AtomKind {
    Classical,
    Local,
}

impl AtomKind {
    pub fn name(&self) -> &'static str {
        match self {
            AtomKind::Classical => "classical",
            AtomKind::Local => "local",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Atom<T: Real = f64> {
    pub kind: AtomKind,
    pub host: Cuboid<T>,
    /// `Q*` of the host within `X`.
    pub host_star: Bounds<T>,
    /// Values on the support `K` (classical) or on `Q` / `Q*` (local).
    pub values: GridFunction<T>,
}

impl<T: Real> Atom<T> {
    pub fn support(&self) -> &Bounds<T> {
        &self.values.bounds
    }

    pub fn eval(&self, x: &[T]) -> T {
        self.values.value_at(x)
    }

    pub fn cast<U: Real>(&self) -> Atom<U> {
        Atom {
            kind: self.kind,
            host: self.host.cast(),
            host_star: self
                .host_star
                .iter()
                .map(|b| Interval::new(U::lit(b.lo.to_f64_lossy()), U::lit(b.hi.to_f64_lossy())))
                .collect(),
            values: self.values.cast(),
        }
    }
}

/// `|Q|^{-1} chi_Q`, stored exactly as a single cell.
pub fn make_local_atom<T: Real>(
    q: &Cuboid<T>,
    domain: &DomainSpec<T>,
    kappa: T,
) -> Result<Atom<T>> {
    let support = q
        .clipped(domain)
        .ok_or_else(|| Error::domain("cuboid misses the domain"))?;
    local_atom_on(q, support, domain, kappa)
}

fn local_atom_on<T: Real>(
    host: &Cuboid<T>,
    support: Bounds<T>,
    domain: &DomainSpec<T>,
    kappa: T,
) -> Result<Atom<T>> {
    let d = support.len();
    let mut values = GridFunction::zeros(support, vec![1; d])?;
    values.values[0] = T::one() / bounds_volume(&values.bounds);
    Ok(Atom {
        kind: AtomKind::Local,
        host: host.clone(),
        host_star: enlarge(host, domain, kappa, 1),
        values,
    })
}

/// Classical atom on a random cube `K ⊂ Q*`: a balanced random sign pattern
/// on `cells^d` cells, mean removed, rescaled to `‖a‖_∞ = SIZE_MARGIN |K|^{-1}`.
pub fn random_classical_atom<T: Real>(
    q: &Cuboid<T>,
    domain: &DomainSpec<T>,
    kappa: T,
    cells: usize,
    seed: u64,
) -> Result<Atom<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let star = enlarge(q, domain, kappa, 1);
    let d = star.len();
    let min_side = star.iter().fold(T::infinity(), |a, b| a.min(b.hi - b.lo));
    let side = min_side * T::lit(rng.gen_range(0.1..1.0));
    let support: Bounds<T> = star
        .iter()
        .map(|b| {
            let lo = b.lo + (b.hi - b.lo - side) * T::lit(rng.gen::<f64>());
            Interval::new(lo, (lo + side).min(b.hi))
        })
        .collect();
    let mut values = GridFunction::zeros(support, vec![cells.max(2); d])?;
    // balanced random signs: half the cells positive
    let n = values.len();
    let mut signs: Vec<f64> = (0..n).map(|i| if 2 * i < n { 1.0 } else { -1.0 }).collect();
    signs.shuffle(&mut rng);
    for (v, s) in values.values.iter_mut().zip(signs) {
        *v = T::lit(s);
    }
    let mean = sum_t(&values.values) / T::from_usize_lossy(values.len());
    values.values.iter_mut().for_each(|v| *v = *v - mean);
    // second pass removes the rounding left by the first
    let mean = sum_t(&values.values) / T::from_usize_lossy(values.len());
    values.values.iter_mut().for_each(|v| *v = *v - mean);
    let scale = T::lit(SIZE_MARGIN) / (values.sup_norm() * bounds_volume(&values.bounds));
    let values = values.scaled(scale);
    Ok(Atom {
        kind: AtomKind::Classical,
        host: q.clone(),
        host_star: star,
        values,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AtomReport {
    pub kind: AtomKind,
    /// `‖a‖_∞ |K|`, at most 1.
    pub size_ratio: f64,
    /// `|∫a| / (‖a‖_∞ |K|)` for classical atoms.
    pub cancellation: f64,
    pub support_ok: bool,
    /// Local atoms: largest relative deviation from `|Q|^{-1}`.
    pub local_deviation: f64,
    pub failures: Vec<String>,
}

impl AtomReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

pub fn validate_atom<T: Real>(a: &Atom<T>) -> AtomReport {
    let k = a.support();
    let vol = bounds_volume(k).to_f64_lossy();
    let sup = a.values.sup_norm().to_f64_lossy();
    let integral = a.values.integral().to_f64_lossy();
    let eps = 64.0 * T::epsilon().to_f64_lossy();
    let mut failures = Vec::new();
    let inside = |inner: &[Interval<T>], outer: &[Interval<T>]| {
        inner.iter().zip(outer).all(|(i, o)| {
            let s = T::one().max(o.hi.abs()).max(o.lo.abs());
            i.lo >= o.lo - T::lit(eps) * s && i.hi <= o.hi + T::lit(eps) * s
        })
    };
    let support_ok = inside(k, &a.host_star);
    if !support_ok {
        failures.push("support not inside Q*".to_string());
    }
    let size_ratio = sup * vol;
    let cancellation = if sup > 0.0 {
        integral.abs() / (sup * vol)
    } else {
        0.0
    };
    let mut local_deviation = 0.0;
    match a.kind {
        AtomKind::Classical => {
            if size_ratio > 1.0 + 1e-12_f64.max(eps) {
                failures.push(format!("size condition fails: ‖a‖_∞|K| = {size_ratio}"));
            }
            let tol = 1e-10_f64.max(eps * a.values.len() as f64);
            if integral.abs() > tol {
                failures.push(format!("cancellation fails: ∫a = {integral:e}"));
            }
        }
        AtomKind::Local => {
            let target = 1.0 / vol;
            local_deviation = a
                .values
                .values
                .iter()
                .map(|v| (v.to_f64_lossy() / target - 1.0).abs())
                .fold(0.0, f64::max);
            if local_deviation > 1e-12_f64.max(eps) {
                failures.push(format!(
                    "local atom deviates from |Q|^-1 by {local_deviation:e}"
                ));
            }
        }
    }
    AtomReport {
        kind: a.kind,
        size_ratio,
        cancellation,
        support_ok,
        local_deviation,
        failures,
    }
}

/// `f_Q = psi_Q f` sampled on a per-cuboid grid over `Q*`.
pub fn localize<T: Real, F: Fn(&[T]) -> T>(
    f: F,
    p: &PartitionOfUnity<T>,
    points_per_axis: usize,
) -> Result<Vec<(usize, GridFunction<T>)>> {
    let c = &p.covering;
    let mut out = Vec::new();
    for i in 0..c.len() {
        let star = c.enlarged(i, 1);
        let d = star.len();
        let mut g = GridFunction::zeros(star, vec![points_per_axis; d])?;
        let mut nonzero = false;
        for k in 0..g.len() {
            let x = g.cell_center(k);
            let fx = f(&x);
            if fx != T::zero() {
                let v = p.psi(i, &x)? * fx;
                nonzero |= v != T::zero();
                g.values[k] = v;
            }
        }
        if nonzero {
            out.push((i, g));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AtomicDecomposition<T: Real = f64> {
    pub terms: Vec<(T, Atom<T>)>,
    /// L1 norm of the part below the finest generation.
    pub residual_norm: T,
    pub remainder: Option<GridFunction<T>>,
}

impl<T: Real> AtomicDecomposition<T> {
    /// `Σ|λ_k|`, an upper bound for the atomic norm of the decomposed part.
    pub fn lambda_sum(&self) -> T {
        let v: Vec<T> = self.terms.iter().map(|t| t.0.abs()).collect();
        sum_t(&v)
    }

    /// `Σ λ_k a_k` sampled on `grid`'s cell centres.
    pub fn reconstruct_on(&self, grid: &GridFunction<T>) -> GridFunction<T> {
        let mut out = grid.clone();
        for k in 0..out.len() {
            let x = grid.cell_center(k);
            let v: Vec<T> = self.terms.iter().map(|(l, a)| *l * a.eval(&x)).collect();
            out.values[k] = sum_t(&v);
        }
        out
    }
}

/// Haar-type decomposition of `fq` on its grid box (taken as `Q*`).
///
/// Generation 0 is the mean on the local atom `|Q*|^{-1} chi_{Q*}`; generation
/// `g` holds the mean-zero differences between dyadic cubes of level `g` and
/// their parents, one classical atom per parent cube. The grid must have
/// `2^depth`-divisible sides.
pub fn local_decompose<T: Real>(
    fq: &GridFunction<T>,
    host: &Cuboid<T>,
    domain: &DomainSpec<T>,
    kappa: T,
    depth: usize,
) -> Result<AtomicDecomposition<T>> {
    let d = fq.dim();
    let n = fq.shape[0];
    if fq.shape.iter().any(|&m| m != n) {
        return Err(Error::domain(
            "local decomposition needs an equal number of cells per axis",
        ));
    }
    let available = n.trailing_zeros() as usize;
    if depth > available || n >> depth << depth != n {
        return Err(Error::Resolution {
            requested: depth,
            available,
        });
    }
    let cell_vol = fq.cell_volume();
    // means[g][cube] for dyadic level g
    let mut means: Vec<Vec<T>> = Vec::with_capacity(depth + 1);
    let block_means = |level: usize| -> Vec<T> {
        let per = 1usize << level;
        let block = n / per;
        let ncubes = per.pow(d as u32);
        let mut sums = vec![Vec::with_capacity(block.pow(d as u32)); ncubes];
        for (i, &v) in fq.values.iter().enumerate() {
            let idx = fq.multi_index(i);
            let cube = idx.iter().fold(0, |acc, &k| acc * per + k / block);
            sums[cube].push(v);
        }
        sums.iter()
            .map(|s| sum_t(s) / T::from_usize_lossy(s.len()))
            .collect()
    };
    for g in 0..=depth {
        means.push(block_means(g));
    }
    let star_vol = bounds_volume(&fq.bounds);
    let mut terms = Vec::new();
    let mean0 = means[0][0];
    if mean0 != T::zero() {
        let atom = local_atom_on(host, fq.bounds.clone(), domain, kappa)?;
        terms.push((mean0 * star_vol, atom));
    }
    let widths: Vec<T> = fq.bounds.iter().map(|b| b.hi - b.lo).collect();
    for g in 1..=depth {
        let per_parent = 1usize << (g - 1);
        let per_child = 1usize << g;
        for parent in 0..per_parent.pow(d as u32) {
            // parent multi-index
            let mut pidx = vec![0usize; d];
            let mut r = parent;
            for j in (0..d).rev() {
                pidx[j] = r % per_parent;
                r /= per_parent;
            }
            let pm = means[g - 1][parent];
            let mut diffs = Vec::with_capacity(1 << d);
            for mask in 0..(1usize << d) {
                let cidx: Vec<usize> = (0..d)
                    .map(|j| 2 * pidx[j] + (mask >> (d - 1 - j) & 1))
                    .collect();
                let child = cidx.iter().fold(0, |acc, &k| acc * per_child + k);
                diffs.push(means[g][child] - pm);
            }
            let amp = diffs.iter().fold(T::zero(), |a, v| a.max(v.abs()));
            if amp == T::zero() {
                continue;
            }
            let support: Bounds<T> = (0..d)
                .map(|j| {
                    let w = widths[j] / T::from_usize_lossy(per_parent);
                    let lo = fq.bounds[j].lo + T::from_usize_lossy(pidx[j]) * w;
                    Interval::new(lo, lo + w)
                })
                .collect();
            let kvol = bounds_volume(&support);
            let mut values = GridFunction::zeros(support, vec![2; d])?;
            for mask in 0..(1usize << d) {
                // child order matches row-major order of the 2^d grid
                values.values[mask] = diffs[mask] / (amp * kvol);
            }
            terms.push((
                amp * kvol,
                Atom {
                    kind: AtomKind::Classical,
                    host: host.clone(),
                    host_star: enlarge(host, domain, kappa, 1),
                    values,
                },
            ));
        }
    }
    // remainder: fq minus the finest-level means
    let per = 1usize << depth;
    let block = n / per;
    let mut rem = fq.clone();
    for (i, v) in rem.values.iter_mut().enumerate() {
        let idx = fq.multi_index(i);
        let cube = idx.iter().fold(0, |acc, &k| acc * per + k / block);
        *v = *v - means[depth][cube];
    }
    let abs: Vec<T> = rem.values.iter().map(|v| v.abs()).collect();
    let residual_norm = sum_t(&abs) * cell_vol;
    Ok(AtomicDecomposition {
        terms,
        residual_norm,
        remainder: Some(rem),
    })
}

/// `‖fq - Σλa - remainder‖_{L1}` on the grid of `fq`.
pub fn reconstruction_error<T: Real>(fq: &GridFunction<T>, dec: &AtomicDecomposition<T>) -> T {
    let rec = dec.reconstruct_on(fq);
    let diff: Vec<T> = fq
        .values
        .iter()
        .zip(&rec.values)
        .enumerate()
        .map(|(i, (&f, &r))| {
            let rem = dec.remainder.as_ref().map_or(T::zero(), |g| g.values[i]);
            (f - r - rem).abs()
        })
        .collect();
    sum_t(&diff) * fq.cell_volume()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaximalConfig {
    pub points_per_decade: usize,
    pub spatial: SpatialConfig,
}

impl Default for MaximalConfig {
    fn default() -> Self {
        MaximalConfig {
            points_per_decade: 8,
            spatial: SpatialConfig {
                rel_tol: 1e-4,
                abs_tol: 1e-10,
                max_leaves: 4000,
                ..SpatialConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaximalEstimate {
    /// `‖sup_t |T_t a|‖_{L1(X)}`.
    pub value: f64,
    pub error: f64,
    pub tail: f64,
    pub l1_norm: f64,
}

/// `sup_{t>0} |T_t a(x)|` with `T_t a(x) = Σ_cells a_c ∫_cell T_t(x, y) dy`.
pub fn maximal_function(
    k: &KernelFamily,
    a: &Atom<f64>,
    x: &[f64],
    cfg: &MaximalConfig,
) -> Result<f64> {
    let scale = a.host.diameter();
    let grid = TGrid::all_times(scale, cfg.points_per_decade)?;
    let cells: Vec<(f64, Bounds)> = (0..a.values.len())
        .filter(|&i| a.values.values[i] != 0.0)
        .map(|i| (a.values.values[i], a.values.cell_bounds(i)))
        .collect();
    let failure = std::cell::RefCell::new(None);
    let est = sup_over_t(&grid, 0.0, |t| {
        let parts: Vec<f64> = cells
            .iter()
            .map(|(v, b)| match k.cell_mass(t, x, b) {
                Ok(m) => v * m,
                Err(e) => {
                    failure.borrow_mut().get_or_insert(e);
                    0.0
                }
            })
            .collect();
        pairwise_sum(&parts).abs()
    });
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    Ok(est.value)
}

/// `‖sup_t |T_t a|‖_{L1(X)}`: adaptive rule on `Q**`, complement window with
/// a fitted power-law tail.
pub fn maximal_norm(
    k: &KernelFamily,
    a: &Atom<f64>,
    kappa: f64,
    cfg: &MaximalConfig,
) -> Result<MaximalEstimate> {
    let domain = k.domain();
    let hole = enlarge(&a.host, domain, kappa, 2);
    let failure = std::cell::RefCell::new(None);
    let m = |x: &[f64]| match maximal_function(k, a, x, cfg) {
        Ok(v) => v,
        Err(e) => {
            failure.borrow_mut().get_or_insert(e);
            0.0
        }
    };
    let mut inner = SpatialRule::on_box(hole.clone(), cfg.spatial.clone());
    // jumps of the atom become leaf faces
    for j in 0..a.values.dim() {
        let w = a.values.cell_widths()[j];
        let pts: Vec<f64> = (0..=a.values.shape[j])
            .map(|i| a.values.bounds[j].lo + i as f64 * w)
            .collect();
        inner = inner.with_breakpoints(j, &pts);
    }
    let inside = inner.integrate_best_effort(m);
    let outside = integrate_outside(
        m,
        &hole,
        domain,
        &a.host.center,
        a.host.diameter(),
        None,
        &cfg.spatial,
    )?;
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    let total = inside + outside.total();
    Ok(MaximalEstimate {
        value: total.value,
        error: total.error,
        tail: outside.tail,
        l1_norm: a.values.l1_norm(),
    })
}

fn fmt_bounds<T: Real>(b: &[Interval<T>]) -> String {
    b.iter()
        .map(|i| format!("{}:{}", i.lo, i.hi))
        .collect::<Vec<_>>()
        .join(",")
}

fn fmt_vec<T: Real>(v: &[T]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn write_grid<T: Real>(s: &mut String, g: &GridFunction<T>) {
    let _ = writeln!(s, "bounds {}", fmt_bounds(&g.bounds));
    let _ = writeln!(
        s,
        "shape {}",
        g.shape
            .iter()
            .map(|n| n.to_string())
            .collect::<Vec<_>>()
            .join(",")
    );
    let _ = writeln!(s, "values");
    let row = *g.shape.last().unwrap_or(&1);
    for chunk in g.values.chunks(row) {
        let _ = writeln!(s, "{}", fmt_vec(chunk));
    }
}

/// Line-oriented text for an atom with coefficient.
pub fn atom_to_text<T: Real>(lambda: T, a: &Atom<T>) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "begin atom");
    let _ = writeln!(s, "kind {}", a.kind.name());
    let _ = writeln!(s, "coefficient {lambda}");
    let _ = writeln!(s, "host_center {}", fmt_vec(&a.host.center));
    let _ = writeln!(s, "host_half_widths {}", fmt_vec(&a.host.half_widths));
    let _ = writeln!(s, "host_star {}", fmt_bounds(&a.host_star));
    write_grid(&mut s, &a.values);
    let _ = writeln!(s, "end atom");
    s
}

pub fn grid_to_text<T: Real>(g: &GridFunction<T>) -> String {
    let mut s = String::from("begin grid\n");
    write_grid(&mut s, g);
    s.push_str("end grid\n");
    s
}

pub fn decomposition_to_text<T: Real>(dec: &AtomicDecomposition<T>) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "decomposition terms={} lambda_sum={} residual={}",
        dec.terms.len(),
        dec.lambda_sum(),
        dec.residual_norm
    );
    for (l, a) in &dec.terms {
        s.push_str(&atom_to_text(*l, a));
    }
    s
}

/// Records parsed from the text format.
#[derive(Debug, Clone, PartialEq)]
pub enum Record<T: Real = f64> {
    Atom(T, Atom<T>),
    Grid(GridFunction<T>),
}

struct Lines<'a> {
    it: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Option<&'a str> {
        for (i, l) in self.it.by_ref() {
            let t = l.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            self.line = i + 1;
            return Some(t);
        }
        None
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            line: self.line,
            msg: msg.into(),
        }
    }

    fn field(&mut self, key: &str) -> Result<&'a str> {
        let l = self
            .next()
            .ok_or_else(|| self.err(format!("missing {key}")))?;
        l.strip_prefix(key)
            .map(str::trim)
            .ok_or_else(|| self.err(format!("expected {key}, found {l:?}")))
    }
}

fn parse_num<T: Real>(s: &str, lines: &Lines) -> Result<T> {
    s.trim().parse::<f64>().map(T::lit).map_err(|_| {
        let shown: String = s.trim().chars().take(40).collect();
        lines.err(format!("bad number {shown:?}"))
    })
}

/// Comma- or whitespace-separated numbers.
fn parse_vec<T: Real>(s: &str, lines: &Lines) -> Result<Vec<T>> {
    s.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|v| !v.is_empty())
        .map(|v| parse_num(v, lines))
        .collect()
}

fn parse_bounds<T: Real>(s: &str, lines: &Lines) -> Result<Bounds<T>> {
    s.split(',')
        .map(|p| {
            let (a, b) = p
                .split_once(':')
                .ok_or_else(|| lines.err(format!("bad interval {p:?}")))?;
            Ok(Interval::new(parse_num(a, lines)?, parse_num(b, lines)?))
        })
        .collect()
}

fn parse_grid<T: Real>(lines: &mut Lines) -> Result<GridFunction<T>> {
    let bounds = parse_bounds(lines.field("bounds")?, lines)?;
    let shape: Vec<usize> = lines
        .field("shape")?
        .split(',')
        .map(|v| {
            v.trim()
                .parse::<usize>()
                .map_err(|_| lines.err(format!("bad shape {v:?}")))
        })
        .collect::<Result<_>>()?;
    lines.field("values")?;
    let mut g = GridFunction::zeros(bounds, shape).map_err(|e| lines.err(e.to_string()))?;
    let mut k = 0;
    while k < g.len() {
        let l = lines
            .next()
            .ok_or_else(|| lines.err("truncated values block"))?;
        for v in parse_vec::<T>(l, lines)? {
            if k >= g.len() {
                return Err(lines.err("too many values"));
            }
            g.values[k] = v;
            k += 1;
        }
    }
    Ok(g)
}

/// Parse atoms and grids; a `decomposition` header line is skipped.
pub fn parse_records<T: Real>(text: &str) -> Result<Vec<Record<T>>> {
    let mut lines = Lines {
        it: text.lines().enumerate(),
        line: 0,
    };
    let mut out = Vec::new();
    while let Some(l) = lines.next() {
        match l {
            "begin atom" => {
                let kind = match lines.field("kind")? {
                    "classical" => AtomKind::Classical,
                    "local" => AtomKind::Local,
                    other => return Err(lines.err(format!("unknown atom kind {other:?}"))),
                };
                let lambda = parse_num(lines.field("coefficient")?, &lines)?;
                let center = parse_vec(lines.field("host_center")?, &lines)?;
                let half = parse_vec(lines.field("host_half_widths")?, &lines)?;
                let host_star = parse_bounds(lines.field("host_star")?, &lines)?;
                let values = parse_grid(&mut lines)?;
                if lines.next() != Some("end atom") {
                    return Err(lines.err("expected end atom"));
                }
                let host = Cuboid::new(center, half).map_err(|e| lines.err(e.to_string()))?;
                out.push(Record::Atom(
                    lambda,
                    Atom {
                        kind,
                        host,
                        host_star,
                        values,
                    },
                ));
            }
            "begin grid" => {
                let g = parse_grid(&mut lines)?;
                if lines.next() != Some("end grid") {
                    return Err(lines.err("expected end grid"));
                }
                out.push(Record::Grid(g));
            }
            l if l.starts_with("decomposition") => {}
            other => return Err(lines.err(format!("unexpected line {other:?}"))),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coverings::{covering_bessel, partition_of_unity};

    fn half() -> DomainSpec {
        DomainSpec::half_line()
    }

    #[test]
    fn local_atoms() {
        let a = make_local_atom(&Cuboid::interval(1.0, 2.0).unwrap(), &half(), 1.05).unwrap();
        assert_eq!(a.eval(&[1.5]), 1.0);
        let b = make_local_atom(&Cuboid::interval(2.0, 4.0).unwrap(), &half(), 1.05).unwrap();
        assert_eq!(b.eval(&[3.0]), 0.5);
        assert_eq!(b.values.integral(), 1.0);
        assert!(validate_atom(&b).passed());
    }

    #[test]
    fn random_atoms_validate_and_are_deterministic() {
        let q = Cuboid::interval(1.0, 2.0).unwrap();
        for seed in 0..20 {
            let a = random_classical_atom(&q, &half(), 1.05, 16, seed).unwrap();
            let r = validate_atom(&a);
            assert!(r.passed(), "{:?}", r.failures);
            assert!(r.size_ratio >= 0.9 && r.size_ratio <= 1.0 + 1e-12);
            assert_eq!(
                a,
                random_classical_atom(&q, &half(), 1.05, 16, seed).unwrap()
            );
        }
        let a32 = random_classical_atom(&q.cast::<f32>(), &DomainSpec::half_line(), 1.05f32, 16, 3)
            .unwrap();
        assert!(validate_atom(&a32).passed());
    }

    #[test]
    fn violations_are_reported() {
        let q = Cuboid::interval(1.0, 2.0).unwrap();
        let a = random_classical_atom(&q, &half(), 1.05, 16, 7).unwrap();
        let mut big = a.clone();
        big.values = a.values.scaled(2.0);
        assert!(validate_atom(&big)
            .failures
            .iter()
            .any(|f| f.contains("size")));
        let mut shifted = a.clone();
        let k = bounds_volume(a.support());
        shifted
            .values
            .values
            .iter_mut()
            .for_each(|v| *v += 1e-3 / k);
        assert!(validate_atom(&shifted)
            .failures
            .iter()
            .any(|f| f.contains("cancellation")));
    }

    #[test]
    fn decomposition_fixed_points() {
        let q = Cuboid::interval(1.0, 2.0).unwrap();
        let star = enlarge(&q, &half(), 1.05, 1);
        let vol = bounds_volume(&star);
        let f = GridFunction::from_fn(star.clone(), vec![64], |_| 1.0 / vol).unwrap();
        let dec = local_decompose(&f, &q, &half(), 1.05, 4).unwrap();
        assert_eq!(dec.terms.len(), 1);
        assert!((dec.terms[0].0 - 1.0).abs() < 1e-14);
        assert!(dec.residual_norm < 1e-14);
        let mid = star[0].mid();
        let haar = GridFunction::from_fn(star.clone(), vec![64], |x| {
            if x[0] < mid {
                1.0 / vol
            } else {
                -1.0 / vol
            }
        })
        .unwrap();
        let dec = local_decompose(&haar, &q, &half(), 1.05, 4).unwrap();
        assert_eq!(dec.terms.len(), 1);
        assert_eq!(dec.terms[0].1.kind, AtomKind::Classical);
        assert!((dec.terms[0].0.abs() - 1.0).abs() < 1e-14);
        assert!(matches!(
            local_decompose(&haar, &q, &half(), 1.05, 7),
            Err(Error::Resolution { .. })
        ));
    }

    #[test]
    fn hat_function_converges_in_depth() {
        let q = Cuboid::new(vec![0.5], vec![0.5 / 1.05]).unwrap();
        let star = enlarge(&q, &DomainSpec::euclidean(1), 1.05, 1);
        let hat = |x: &[f64]| (1.0 - (2.0 * x[0] - 1.0).abs()).max(0.0);
        let f = GridFunction::from_fn(star, vec![1024], hat).unwrap();
        let d6 = local_decompose(&f, &q, &DomainSpec::euclidean(1), 1.05, 6).unwrap();
        let d10 = local_decompose(&f, &q, &DomainSpec::euclidean(1), 1.05, 10).unwrap();
        let (s6, s10) = (d6.lambda_sum(), d10.lambda_sum());
        assert!((s6 - s10).abs() <= 0.05 * s10, "{s6} {s10}");
        for dec in [&d6, &d10] {
            assert!(reconstruction_error(&f, dec) < 1e-12);
            assert!(dec.terms.iter().all(|(_, a)| validate_atom(a).passed()));
        }
    }

    #[test]
    fn localize_reconstructs() {
        let c = covering_bessel::<f64>(-2, 2).unwrap();
        let p = partition_of_unity(&c).unwrap();
        let parts = localize(|_| 1.0, &p, 64).unwrap();
        for (i, g) in &parts {
            for k in 0..g.len() {
                let x = g.cell_center(k);
                if bounds_contains(&c.window, &x) {
                    assert!((g.values[k] - p.psi(*i, &x).unwrap()).abs() < 1e-15);
                }
            }
        }
        for k in 0..200 {
            let x = [0.25 + 7.75 * (k as f64 + 0.5) / 200.0];
            let s: f64 = (0..c.len()).map(|i| p.psi(i, &x).unwrap()).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn text_round_trip() {
        let q = Cuboid::interval(1.0, 2.0).unwrap();
        let a = random_classical_atom(&q, &half(), 1.05, 8, 11).unwrap();
        let text = atom_to_text(0.75, &a);
        let recs: Vec<Record> = parse_records(&text).unwrap();
        assert_eq!(recs, vec![Record::Atom(0.75, a.clone())]);
        let g = GridFunction::from_fn(vec![Interval::new(0.0, 1.0); 2], vec![3, 4], |x| {
            x[0] - 2.0 * x[1]
        })
        .unwrap();
        let recs: Vec<Record> = parse_records(&grid_to_text(&g)).unwrap();
        assert_eq!(recs, vec![Record::Grid(g)]);
        assert!(matches!(
            parse_records::<f64>("begin atom\nkind odd\n"),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn local_atom_maximal_norm_is_at_least_one() {
        let k = KernelFamily::bessel(1.0).unwrap();
        let a = make_local_atom(&Cuboid::interval(1.0, 2.0).unwrap(), &half(), 1.05).unwrap();
        let m = maximal_norm(&k, &a, 1.05, &MaximalConfig::default()).unwrap();
        assert!(m.value >= 1.0 && m.value.is_finite(), "{m:?}");
    }
}
