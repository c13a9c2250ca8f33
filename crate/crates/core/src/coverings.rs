//! Admissible coverings, the box product, enlargements and partitions of unity.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::geometry::{
    bounds_contains, bounds_overlap, bounds_volume, Bounds, Cuboid, DomainSpec, Interval,
};
use crate::quadrature::qmc::halton;
use crate::real::Real;

pub const DEFAULT_KAPPA: f64 = 1.05;
pub const DEFAULT_SPLIT_BUDGET: usize = 1024;
/// Diameter ratios at or below this count as equal in the box product.
pub const SPLIT_RATIO_SLACK: f64 = 1e-9;

/// How a covering window was produced, so it can be rebuilt wider.
#[derive(Debug, Clone, PartialEq)]
pub enum Generator {
    Bessel {
        lo: i32,
        hi: i32,
    },
    Laguerre {
        lo: i32,
        hi: i32,
    },
    Uniform {
        tau: f64,
        window: Vec<(f64, f64)>,
    },
    BoxProduct(Box<Generator>, Box<Generator>),
    /// `R^dim ⊠ base`, with `reach` lattice cells of the largest size on each side.
    Strip {
        dim: usize,
        reach: u32,
        base: Box<Generator>,
    },
    Custom(String),
}

impl Generator {
    pub fn id(&self) -> String {
        match self {
            Generator::Bessel { lo, hi } => format!("bessel[{lo}..{hi}]"),
            Generator::Laguerre { lo, hi } => format!("laguerre[{lo}..{hi}]"),
            Generator::Uniform { tau, window } => {
                let w: Vec<String> = window.iter().map(|(a, b)| format!("{a}:{b}")).collect();
                format!("uniform(tau={tau};{})", w.join(","))
            }
            Generator::BoxProduct(a, b) => format!("{}x{}", a.id(), b.id()),
            Generator::Strip { dim, reach, base } => format!("R{dim}(reach={reach})x{}", base.id()),
            Generator::Custom(s) => s.clone(),
        }
    }

    /// Widen index windows by `extra` on both sides.
    pub fn widened(&self, extra: i32) -> Result<Generator> {
        Ok(match self {
            Generator::Bessel { lo, hi } => Generator::Bessel {
                lo: lo - extra,
                hi: hi + extra,
            },
            Generator::Laguerre { lo, hi } => Generator::Laguerre {
                lo: lo - extra,
                hi: hi + extra,
            },
            Generator::BoxProduct(a, b) => {
                Generator::BoxProduct(Box::new(a.widened(extra)?), Box::new(b.widened(extra)?))
            }
            Generator::Strip { dim, reach, base } => Generator::Strip {
                dim: *dim,
                reach: reach + extra.max(0) as u32,
                base: Box::new(base.widened(extra)?),
            },
            _ => {
                return Err(Error::domain(format!(
                    "covering {} has no index window to widen",
                    self.id()
                )))
            }
        })
    }

    pub fn build<T: Real>(&self, kappa: T) -> Result<AdmissibleCovering<T>> {
        let c = match self {
            Generator::Bessel { lo, hi } => covering_bessel(*lo, *hi)?,
            Generator::Laguerre { lo, hi } => covering_laguerre(*lo, *hi)?,
            Generator::Uniform { tau, window } => {
                let d = window.len();
                let w: Bounds<T> = window
                    .iter()
                    .map(|&(a, b)| Interval::new(T::lit(a), T::lit(b)))
                    .collect();
                covering_uniform(DomainSpec::euclidean(d), T::lit(*tau), &w)?
            }
            Generator::BoxProduct(a, b) => {
                box_product(&a.build(kappa)?, &b.build(kappa)?, DEFAULT_SPLIT_BUDGET)?
            }
            Generator::Strip { dim, reach, base } => {
                covering_strip(*dim, *reach, &base.build(kappa)?)?
            }
            Generator::Custom(s) => {
                return Err(Error::domain(format!(
                    "custom covering {s} cannot be rebuilt"
                )))
            }
        };
        Ok(c.with_kappa(kappa))
    }
}

/// A finite window of an admissible covering.
#[derive(Debug, Clone)]
pub struct AdmissibleCovering<T: Real = f64> {
    pub domain: DomainSpec<T>,
    pub cuboids: Vec<Cuboid<T>>,
    /// Region tiled by `cuboids`.
    pub window: Bounds<T>,
    pub kappa: T,
    /// Declared shape constant.
    pub c1: T,
    /// Declared neighbour constant.
    pub c2: T,
    pub generator: Generator,
}

impl<T: Real> AdmissibleCovering<T> {
    pub fn new(
        domain: DomainSpec<T>,
        cuboids: Vec<Cuboid<T>>,
        window: Bounds<T>,
        c1: T,
        c2: T,
        generator: Generator,
    ) -> Result<Self> {
        if cuboids.is_empty() {
            return Err(Error::Construction("covering has no cuboids".into()));
        }
        let d = domain.dim();
        if window.len() != d || cuboids.iter().any(|q| q.dim() != d) {
            return Err(Error::Construction("dimension mismatch in covering".into()));
        }
        Ok(AdmissibleCovering {
            domain,
            cuboids,
            window,
            kappa: T::lit(DEFAULT_KAPPA),
            c1,
            c2,
            generator,
        })
    }

    pub fn with_kappa(mut self, kappa: T) -> Self {
        self.kappa = kappa;
        self
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn len(&self) -> usize {
        self.cuboids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cuboids.is_empty()
    }

    pub fn id(&self) -> String {
        self.generator.id()
    }

    /// `Q*`, `Q**` or `Q***` of cuboid `i`, as bounds intersected with `X`.
    pub fn enlarged(&self, i: usize, level: u32) -> Bounds<T> {
        enlarge(&self.cuboids[i], &self.domain, self.kappa, level)
    }

    /// Cuboids whose faces avoid the window boundary (domain boundary excepted).
    pub fn interior(&self) -> Vec<bool> {
        let tol = T::lit(1e-12);
        self.cuboids
            .iter()
            .map(|q| {
                q.bounds()
                    .iter()
                    .zip(&self.window)
                    .zip(self.domain.intervals())
                    .all(|((b, w), x)| {
                        let scale = T::one().max(b.hi.abs()).max(b.lo.abs());
                        let lo_ok = b.lo > w.lo + tol * scale || w.lo <= x.lo;
                        let hi_ok = b.hi < w.hi - tol * scale || w.hi >= x.hi;
                        lo_ok && hi_ok
                    })
            })
            .collect()
    }

    /// Index of a cuboid containing `x`, preferring the first.
    pub fn locate(&self, x: &[T]) -> Option<usize> {
        self.cuboids.iter().position(|q| q.contains(x))
    }

    pub fn widened(&self, extra: i32) -> Result<Self> {
        self.generator.widened(extra)?.build(self.kappa)
    }
}

/// Enlargement of `q` by `kappa^level`, intersected with the domain.
pub fn enlarge<T: Real>(q: &Cuboid<T>, domain: &DomainSpec<T>, kappa: T, level: u32) -> Bounds<T> {
    let f = kappa.powi(level as i32);
    let b = q.scaled(f).bounds();
    domain.clip(&b).unwrap_or(b)
}

/// `Q_B = {[2^n, 2^{n+1}]}` for `lo <= n <= hi`.
pub fn covering_bessel<T: Real>(lo: i32, hi: i32) -> Result<AdmissibleCovering<T>> {
    if lo > hi {
        return Err(Error::domain("empty index window"));
    }
    let two = T::lit(2.0);
    let cuboids = (lo..=hi)
        .map(|n| Cuboid::interval(two.powi(n), two.powi(n + 1)))
        .collect::<Result<Vec<_>>>()?;
    AdmissibleCovering::new(
        DomainSpec::half_line(),
        cuboids,
        vec![Interval::new(two.powi(lo), two.powi(hi + 1))],
        T::one(),
        two,
        Generator::Bessel { lo, hi },
    )
}

/// `Q_L`: for `n >= 0` the block `[2^n, 2^{n+1}]` cut into `2^{2n+1}` pieces,
/// for `n < 0` the single interval `[2^n, 2^{n+1}]`.
pub fn covering_laguerre<T: Real>(lo: i32, hi: i32) -> Result<AdmissibleCovering<T>> {
    if lo > hi {
        return Err(Error::domain("empty index window"));
    }
    if hi > 10 {
        return Err(Error::Budget(format!(
            "laguerre block n={hi} has 2^{} intervals",
            2 * hi + 1
        )));
    }
    let two = T::lit(2.0);
    let mut cuboids = Vec::new();
    for n in lo..=hi {
        if n < 0 {
            cuboids.push(Cuboid::interval(two.powi(n), two.powi(n + 1))?);
        } else {
            let base = two.powi(n);
            let step = two.powi(-n - 1);
            for k in 0..(1usize << (2 * n + 1)) {
                let a = base + T::from_usize_lossy(k) * step;
                cuboids.push(Cuboid::interval(a, a + step)?);
            }
        }
    }
    AdmissibleCovering::new(
        DomainSpec::half_line(),
        cuboids,
        vec![Interval::new(two.powi(lo), two.powi(hi + 1))],
        T::one(),
        T::lit(4.0),
        Generator::Laguerre { lo, hi },
    )
}

/// Cubes of diameter `tau` tiling `window`, starting at its lower corner.
pub fn covering_uniform<T: Real>(
    domain: DomainSpec<T>,
    tau: T,
    window: &[Interval<T>],
) -> Result<AdmissibleCovering<T>> {
    let d = domain.dim();
    if !(tau > T::zero()) || window.len() != d {
        return Err(Error::domain(
            "uniform covering needs tau > 0 and a window of matching dimension",
        ));
    }
    let side = tau / T::from_usize_lossy(d).sqrt();
    let counts: Vec<usize> = window
        .iter()
        .map(|w| {
            let c = ((w.hi - w.lo) / side - T::lit(1e-9)).ceil();
            c.to_usize().unwrap_or(0).max(1)
        })
        .collect();
    let total: usize = counts.iter().product();
    if total > 1_000_000 {
        return Err(Error::Budget(format!(
            "uniform covering would have {total} cubes"
        )));
    }
    let half = side / T::lit(2.0);
    let mut cuboids = Vec::with_capacity(total);
    let mut idx = vec![0usize; d];
    for _ in 0..total {
        let center = (0..d)
            .map(|j| window[j].lo + (T::from_usize_lossy(idx[j]) + T::lit(0.5)) * side)
            .collect();
        cuboids.push(Cuboid::new(center, vec![half; d])?);
        for j in (0..d).rev() {
            idx[j] += 1;
            if idx[j] < counts[j] {
                break;
            }
            idx[j] = 0;
        }
    }
    let covered: Bounds<T> = window
        .iter()
        .zip(&counts)
        .map(|(w, &c)| Interval::new(w.lo, w.lo + T::from_usize_lossy(c) * side))
        .collect();
    let gen = Generator::Uniform {
        tau: tau.to_f64_lossy(),
        window: window
            .iter()
            .map(|w| (w.lo.to_f64_lossy(), w.hi.to_f64_lossy()))
            .collect(),
    };
    AdmissibleCovering::new(domain, cuboids, covered, T::one(), T::one(), gen)
}

/// Cut `q` into `m^dim` congruent pieces.
fn split_cuboid<T: Real>(q: &Cuboid<T>, m: usize) -> Result<Vec<Cuboid<T>>> {
    let d = q.dim();
    let b = q.bounds();
    let mf = T::from_usize_lossy(m);
    let mut out = Vec::with_capacity(m.pow(d as u32));
    let mut idx = vec![0usize; d];
    loop {
        let piece: Bounds<T> = (0..d)
            .map(|j| {
                let w = (b[j].hi - b[j].lo) / mf;
                let lo = b[j].lo + T::from_usize_lossy(idx[j]) * w;
                // last piece ends exactly on the original face
                let hi = if idx[j] + 1 == m {
                    b[j].hi
                } else {
                    b[j].lo + T::from_usize_lossy(idx[j] + 1) * w
                };
                Interval::new(lo, hi)
            })
            .collect();
        out.push(Cuboid::from_bounds(&piece)?);
        let mut j = d;
        loop {
            if j == 0 {
                return Ok(out);
            }
            j -= 1;
            idx[j] += 1;
            if idx[j] < m {
                break;
            }
            idx[j] = 0;
        }
    }
}

fn split_count<T: Real>(ratio: T) -> usize {
    if ratio <= T::one() + T::lit(SPLIT_RATIO_SLACK) {
        1
    } else {
        // tolerate rounding in exact ratios such as 2.0000000001
        (ratio - T::lit(SPLIT_RATIO_SLACK))
            .ceil()
            .to_usize()
            .unwrap_or(usize::MAX)
    }
}

/// `a ⊠ b`: every product cell has its longer factor split into
/// `ceil(ratio)^{d_i}` congruent pieces.
pub fn box_product<T: Real>(
    a: &AdmissibleCovering<T>,
    b: &AdmissibleCovering<T>,
    budget: usize,
) -> Result<AdmissibleCovering<T>> {
    let mut cuboids = Vec::new();
    for q1 in &a.cuboids {
        for q2 in &b.cuboids {
            let (d1, d2) = (q1.diameter(), q2.diameter());
            let (m1, m2) = (split_count(d1 / d2), split_count(d2 / d1));
            let (long, pieces) = if m1 > 1 { (q1, m1) } else { (q2, m2) };
            let total = pieces.checked_pow(long.dim() as u32).unwrap_or(usize::MAX);
            if total > budget {
                return Err(Error::Budget(format!(
                    "box product cell needs {total} pieces (budget {budget}); diameters {} and {}",
                    d1, d2
                )));
            }
            let parts = split_cuboid(long, pieces)?;
            for p in parts {
                cuboids.push(if m1 > 1 {
                    p.product(q2)
                } else {
                    q1.product(&p)
                });
            }
        }
    }
    let mut window = a.window.clone();
    window.extend_from_slice(&b.window);
    let dmax = T::from_usize_lossy(a.dim().max(b.dim()));
    let c1 = T::lit(2.0) * a.c1.max(b.c1) * dmax.sqrt();
    let c2 = T::lit(2.0) * a.c2 * b.c2;
    let gen = Generator::BoxProduct(Box::new(a.generator.clone()), Box::new(b.generator.clone()));
    Ok(
        AdmissibleCovering::new(a.domain.product(&b.domain), cuboids, window, c1, c2, gen)?
            .with_kappa(a.kappa),
    )
}

/// `R^dim ⊠ base`: each strip `R^dim x Q` is cut into cubes `Q(z_n, d_Q)` on
/// the lattice of side `2 d_Q`, over `reach` cells of the coarsest size per side.
pub fn covering_strip<T: Real>(
    dim: usize,
    reach: u32,
    base: &AdmissibleCovering<T>,
) -> Result<AdmissibleCovering<T>> {
    if dim == 0 || reach == 0 {
        return Err(Error::domain(
            "strip covering needs dim >= 1 and reach >= 1",
        ));
    }
    let two = T::lit(2.0);
    let dmax = base
        .cuboids
        .iter()
        .map(|q| q.diameter())
        .fold(T::zero(), |a, b| a.max(b));
    let extent = T::from_usize_lossy(reach as usize) * two * dmax;
    let mut cuboids = Vec::new();
    for q in &base.cuboids {
        let side = two * q.diameter();
        let per_axis = (two * extent / side).round().to_usize().unwrap_or(0).max(1);
        let total = per_axis.checked_pow(dim as u32).unwrap_or(usize::MAX);
        if total > 1_000_000 {
            return Err(Error::Budget(format!(
                "strip over {q:?} needs {total} cells"
            )));
        }
        let mut idx = vec![0usize; dim];
        for _ in 0..total {
            let center: Vec<T> = idx
                .iter()
                .map(|&k| -extent + (T::from_usize_lossy(k) + T::lit(0.5)) * side)
                .collect();
            let cube = Cuboid::new(center, vec![q.diameter(); dim])?;
            cuboids.push(cube.product(q));
            for j in (0..dim).rev() {
                idx[j] += 1;
                if idx[j] < per_axis {
                    break;
                }
                idx[j] = 0;
            }
        }
    }
    let mut window: Bounds<T> = vec![Interval::new(-extent, extent); dim];
    window.extend_from_slice(&base.window);
    let c1 = two * base.c1 * T::from_usize_lossy(base.dim()).sqrt();
    let c2 = two * base.c2;
    let gen = Generator::Strip {
        dim,
        reach,
        base: Box::new(base.generator.clone()),
    };
    Ok(AdmissibleCovering::new(
        DomainSpec::euclidean(dim).product(&base.domain),
        cuboids,
        window,
        c1,
        c2,
        gen,
    )?
    .with_kappa(base.kappa))
}

/// Measured constants of a covering window.
#[derive(Debug, Clone, PartialEq)]
pub struct CoveringReport {
    pub n_cuboids: usize,
    pub n_interior: usize,
    pub c1_measured: f64,
    pub c2_measured: f64,
    pub c1_declared: f64,
    pub c2_declared: f64,
    /// Largest `|Q_1 ∩ Q_2| / min(|Q_1|, |Q_2|)` over distinct pairs.
    pub max_pair_overlap: f64,
    pub coverage_probes: usize,
    pub coverage_holes: usize,
    pub max_triple_overlap: usize,
    pub overlap_limit: usize,
    pub neighbour_violations: usize,
    pub violations: Vec<String>,
}

impl CoveringReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn neighbours_ok(&self) -> bool {
        self.neighbour_violations == 0
    }
}

fn touches<T: Real>(a: &[Interval<T>], b: &[Interval<T>], tol: T) -> bool {
    a.iter().zip(b).all(|(x, y)| {
        let scale = T::one().max(x.hi.abs()).max(y.hi.abs());
        x.lo.max(y.lo) <= x.hi.min(y.hi) + tol * scale
    })
}

/// Check Definition 1 on the window: exact cuboid arithmetic for shape,
/// overlaps and neighbours, point probes for the union and `Q***` overlap.
pub fn validate_covering<T: Real>(c: &AdmissibleCovering<T>, samples: usize) -> CoveringReport {
    let n = c.len();
    let d = c.dim();
    let tol = T::lit(64.0) * T::epsilon();
    let interior = c.interior();
    let nominal: Vec<Bounds<T>> = c.cuboids.iter().map(|q| q.bounds()).collect();
    let triple: Vec<Bounds<T>> = (0..n).map(|i| c.enlarged(i, 3)).collect();
    let mut violations = Vec::new();

    let c1_measured = c
        .cuboids
        .iter()
        .map(|q| q.aspect().to_f64_lossy())
        .fold(1.0, f64::max);

    // sweep along the first axis over the enlarged cuboids
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        triple[i][0]
            .lo
            .partial_cmp(&triple[j][0].lo)
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut c2_measured: f64 = 1.0;
    let mut max_pair_overlap: f64 = 0.0;
    let mut neighbour_violations = 0;
    for (a, &i) in order.iter().enumerate() {
        for &j in &order[a + 1..] {
            if triple[j][0].lo > triple[i][0].hi {
                break;
            }
            let enlarged_meet = touches(&triple[i], &triple[j], tol);
            let meet = touches(&nominal[i], &nominal[j], tol);
            if meet {
                let (di, dj) = (
                    c.cuboids[i].diameter().to_f64_lossy(),
                    c.cuboids[j].diameter().to_f64_lossy(),
                );
                c2_measured = c2_measured.max(di / dj).max(dj / di);
                let ov = bounds_overlap(&nominal[i], &nominal[j]).to_f64_lossy();
                let vmin = c.cuboids[i]
                    .volume()
                    .min(c.cuboids[j].volume())
                    .to_f64_lossy();
                max_pair_overlap = max_pair_overlap.max(ov / vmin);
            }
            if enlarged_meet != meet && (interior[i] || interior[j]) {
                neighbour_violations += 1;
            }
        }
    }

    // probes: quasi-random points plus points just past every face centre
    let mut probes: Vec<Vec<T>> = Vec::new();
    let logscale: Vec<bool> = c
        .window
        .iter()
        .map(|w| w.lo > T::zero() && w.hi / w.lo > T::lit(8.0))
        .collect();
    for k in 0..samples {
        let u = halton(k as u64 + 1, d);
        let p = (0..d)
            .map(|j| {
                let w = c.window[j];
                let uj = T::lit(u[j]);
                if logscale[j] && k % 2 == 1 {
                    w.lo * (w.hi / w.lo).powf(uj)
                } else {
                    w.lo + uj * (w.hi - w.lo)
                }
            })
            .collect();
        probes.push(p);
    }
    let step = T::lit(1e-3);
    for q in &c.cuboids {
        for j in 0..d {
            for s in [-T::one(), T::one()] {
                let mut p = q.center.clone();
                p[j] = p[j] + s * q.half_widths[j] * (T::one() + step);
                if bounds_contains(&c.window, &p) && c.domain.contains(&p) {
                    probes.push(p);
                }
            }
        }
    }
    // faces rounded from centre and half-width can leave ulp-wide seams
    let padded: Vec<Bounds<T>> = nominal
        .iter()
        .map(|b| {
            b.iter()
                .map(|i| {
                    let pad = tol * T::one().max(i.lo.abs()).max(i.hi.abs());
                    Interval::new(i.lo - pad, i.hi + pad)
                })
                .collect()
        })
        .collect();
    let coverage_holes = probes
        .iter()
        .filter(|p| !padded.iter().any(|b| bounds_contains(b, p)))
        .count();

    // Q*** overlap at probes and at every cuboid vertex
    let mut count_points = probes.clone();
    for q in &nominal {
        for mask in 0..(1usize << d) {
            let v: Vec<T> = (0..d)
                .map(|j| if mask >> j & 1 == 1 { q[j].hi } else { q[j].lo })
                .collect();
            count_points.push(v);
        }
    }
    let max_triple_overlap = count_points
        .iter()
        .map(|p| triple.iter().filter(|b| bounds_contains(b, p)).count())
        .max()
        .unwrap_or(0);
    let overlap_limit = 2usize << d;

    let (c1d, c2d) = (c.c1.to_f64_lossy(), c.c2.to_f64_lossy());
    if c1_measured > c1d * (1.0 + 1e-9) {
        violations.push(format!(
            "shape constant {c1_measured} exceeds declared {c1d}"
        ));
    }
    if c2_measured > c2d * (1.0 + 1e-9) {
        violations.push(format!(
            "neighbour constant {c2_measured} exceeds declared {c2d}"
        ));
    }
    if max_pair_overlap > 1e-9 {
        violations.push(format!(
            "cuboids overlap with positive measure (ratio {max_pair_overlap:e})"
        ));
    }
    if coverage_holes > 0 {
        violations.push(format!("{coverage_holes} probe points lie in no cuboid"));
    }
    if max_triple_overlap > overlap_limit {
        violations.push(format!(
            "Q*** overlap count {max_triple_overlap} exceeds {overlap_limit}"
        ));
    }
    if neighbour_violations > 0 {
        violations.push(format!(
            "{neighbour_violations} pairs break the neighbour equivalence"
        ));
    }
    CoveringReport {
        n_cuboids: n,
        n_interior: interior.iter().filter(|&&b| b).count(),
        c1_measured,
        c2_measured,
        c1_declared: c1d,
        c2_declared: c2d,
        max_pair_overlap,
        coverage_probes: probes.len(),
        coverage_holes,
        max_triple_overlap,
        overlap_limit,
        neighbour_violations,
        violations,
    }
}

/// Trapezoid partition of unity: `b_Q` is 1 on `Q`, linear down to 0 on `∂Q*`.
#[derive(Debug, Clone)]
pub struct PartitionOfUnity<T: Real = f64> {
    pub covering: AdmissibleCovering<T>,
    stars: Vec<Bounds<T>>,
}

impl<T: Real> PartitionOfUnity<T> {
    pub fn new(covering: AdmissibleCovering<T>) -> Result<Self> {
        if !(covering.kappa > T::one()) {
            return Err(Error::domain("partition of unity needs kappa > 1"));
        }
        let stars = (0..covering.len())
            .map(|i| covering.cuboids[i].scaled(covering.kappa).bounds())
            .collect();
        Ok(PartitionOfUnity { covering, stars })
    }

    pub fn len(&self) -> usize {
        self.stars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stars.is_empty()
    }

    /// Raw bump and its gradient.
    fn bump(&self, i: usize, x: &[T]) -> (T, Vec<T>) {
        let q = &self.covering.cuboids[i];
        let k = self.covering.kappa;
        let d = x.len();
        let mut f = vec![T::one(); d];
        let mut g = vec![T::zero(); d];
        for j in 0..d {
            let r = q.half_widths[j];
            let u = x[j] - q.center[j];
            let a = u.abs();
            if a <= r {
                continue;
            }
            if a >= k * r {
                return (T::zero(), vec![T::zero(); d]);
            }
            let w = (k - T::one()) * r;
            f[j] = (k * r - a) / w;
            g[j] = -u.signum() / w;
        }
        let value = f.iter().fold(T::one(), |acc, &v| acc * v);
        let grad = (0..d)
            .map(|j| (0..d).fold(g[j], |acc, m| if m == j { acc } else { acc * f[m] }))
            .collect();
        (value, grad)
    }

    pub fn raw_bump(&self, i: usize, x: &[T]) -> T {
        self.bump(i, x).0
    }

    /// Indices `Q` with `x ∈ Q*`.
    pub fn active(&self, x: &[T]) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| bounds_contains(&self.stars[i], x))
            .collect()
    }

    /// `(Q, psi_Q(x))` for all `Q` with `psi_Q(x) > 0`.
    pub fn psi_all(&self, x: &[T]) -> Result<Vec<(usize, T)>> {
        let act = self.active(x);
        let vals: Vec<(usize, T)> = act.iter().map(|&i| (i, self.raw_bump(i, x))).collect();
        let s = vals.iter().fold(T::zero(), |a, v| a + v.1);
        if s <= T::zero() {
            if bounds_contains(&self.covering.window, x) {
                return Err(Error::Construction(format!("no bump covers {:?}", x)));
            }
            return Ok(Vec::new());
        }
        Ok(vals
            .into_iter()
            .filter(|v| v.1 > T::zero())
            .map(|(i, v)| (i, v / s))
            .collect())
    }

    pub fn psi(&self, i: usize, x: &[T]) -> Result<T> {
        Ok(self
            .psi_all(x)?
            .into_iter()
            .find(|v| v.0 == i)
            .map_or(T::zero(), |v| v.1))
    }

    /// `sum_Q psi_Q(x)`.
    pub fn sum(&self, x: &[T]) -> Result<T> {
        Ok(self.psi_all(x)?.iter().fold(T::zero(), |a, v| a + v.1))
    }

    /// One-sided gradient of `psi_i` (the bumps are piecewise linear).
    pub fn gradient(&self, i: usize, x: &[T]) -> Result<Vec<T>> {
        let d = x.len();
        let act = self.active(x);
        let mut s = T::zero();
        let mut gs = vec![T::zero(); d];
        let mut bi = T::zero();
        let mut gi = vec![T::zero(); d];
        for &k in &act {
            let (v, g) = self.bump(k, x);
            s = s + v;
            for j in 0..d {
                gs[j] = gs[j] + g[j];
            }
            if k == i {
                bi = v;
                gi = g;
            }
        }
        if s <= T::zero() {
            return Err(Error::Construction(format!("no bump covers {:?}", x)));
        }
        Ok((0..d).map(|j| (gi[j] * s - bi * gs[j]) / (s * s)).collect())
    }

    /// `max |grad psi_i| d_Q` over a grid of `m` points per axis laid out in
    /// coordinates relative to `Q*`, skipping points outside the window.
    pub fn derivative_constant(&self, i: usize, m: usize) -> Result<T> {
        let q = &self.covering.cuboids[i];
        let d = q.dim();
        let k = self.covering.kappa;
        let mut best = T::zero();
        let mut idx = vec![0usize; d];
        let total = m.pow(d as u32);
        for _ in 0..total {
            let x: Vec<T> = (0..d)
                .map(|j| {
                    let u = T::from_usize_lossy(2 * idx[j] + 1) / T::from_usize_lossy(m) - T::one();
                    q.center[j] + u * k * q.half_widths[j]
                })
                .collect();
            if bounds_contains(&self.covering.window, &x) && self.covering.domain.contains(&x) {
                let g = self.gradient(i, &x)?;
                let norm = g.iter().fold(T::zero(), |a, &v| a + v * v).sqrt();
                best = best.max(norm);
            }
            for j in (0..d).rev() {
                idx[j] += 1;
                if idx[j] < m {
                    break;
                }
                idx[j] = 0;
            }
        }
        Ok(best * q.diameter())
    }
}

pub fn partition_of_unity<T: Real>(c: &AdmissibleCovering<T>) -> Result<PartitionOfUnity<T>> {
    PartitionOfUnity::new(c.clone())
}

/// SVG with one `rect` per cuboid of a 2-D covering.
pub fn covering_svg<T: Real>(c: &AdmissibleCovering<T>, log_axes: bool) -> Result<String> {
    if c.dim() != 2 {
        return Err(Error::domain("SVG output needs a 2-D covering"));
    }
    let size = 800.0;
    let map = |v: f64, w: &Interval<T>| -> f64 {
        let (lo, hi) = (w.lo.to_f64_lossy(), w.hi.to_f64_lossy());
        if log_axes && lo > 0.0 {
            (v.ln() - lo.ln()) / (hi.ln() - lo.ln())
        } else {
            (v - lo) / (hi - lo)
        }
    };
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">"#
    );
    for q in &c.cuboids {
        let b = q.bounds();
        let x0 = map(b[0].lo.to_f64_lossy(), &c.window[0]) * size;
        let x1 = map(b[0].hi.to_f64_lossy(), &c.window[0]) * size;
        let y0 = (1.0 - map(b[1].hi.to_f64_lossy(), &c.window[1])) * size;
        let y1 = (1.0 - map(b[1].lo.to_f64_lossy(), &c.window[1])) * size;
        let _ = writeln!(
            s,
            r#"<rect x="{x0:.3}" y="{y0:.3}" width="{:.3}" height="{:.3}" fill="none" stroke="black" stroke-width="0.5"/>"#,
            x1 - x0,
            y1 - y0
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// Measure of the window covered by the cuboids (should equal the window volume).
pub fn covered_volume<T: Real>(c: &AdmissibleCovering<T>) -> T {
    c.cuboids
        .iter()
        .fold(T::zero(), |a, q| a + bounds_volume(&q.bounds()))
}
