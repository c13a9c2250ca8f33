//! Axis-aligned boxes, product domains and the cuboids `Q(z, r_1, ..., r_d)`.

use crate::error::{Error, Result};
use crate::real::Real;

/// Closed interval `[lo, hi]`; either end may be infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval<T = f64> {
    pub lo: T,
    pub hi: T,
}

impl<T: Real> Interval<T> {
    pub fn new(lo: T, hi: T) -> Self {
        Interval { lo, hi }
    }

    pub fn len(&self) -> T {
        self.hi - self.lo
    }

    pub fn mid(&self) -> T {
        (self.lo + self.hi) / T::lit(2.0)
    }

    pub fn is_empty(&self) -> bool {
        !(self.hi >= self.lo)
    }

    pub fn contains(&self, v: T) -> bool {
        v >= self.lo && v <= self.hi
    }

    /// Closed intersection, possibly degenerate (a single point).
    pub fn intersect(&self, other: &Self) -> Option<Self> {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        (lo <= hi).then_some(Interval { lo, hi })
    }

    /// Length of the intersection (zero when they only touch).
    pub fn overlap(&self, other: &Self) -> T {
        self.intersect(other)
            .map(|i| i.len())
            .unwrap_or_else(T::zero)
    }

    pub fn distance_to(&self, v: T) -> T {
        if v < self.lo {
            self.lo - v
        } else if v > self.hi {
            v - self.hi
        } else {
            T::zero()
        }
    }
}

/// Product box as a list of per-axis intervals.
pub type Bounds<T = f64> = Vec<Interval<T>>;

pub fn bounds_volume<T: Real>(b: &[Interval<T>]) -> T {
    b.iter()
        .fold(T::one(), |acc, i| acc * i.len().max(T::zero()))
}

pub fn bounds_contains<T: Real>(b: &[Interval<T>], x: &[T]) -> bool {
    b.iter().zip(x).all(|(i, &v)| i.contains(v))
}

/// Closed intersection of two boxes; `None` when disjoint.
pub fn bounds_intersect<T: Real>(a: &[Interval<T>], b: &[Interval<T>]) -> Option<Bounds<T>> {
    a.iter().zip(b).map(|(p, q)| p.intersect(q)).collect()
}

/// Volume of the intersection of two boxes.
pub fn bounds_overlap<T: Real>(a: &[Interval<T>], b: &[Interval<T>]) -> T {
    a.iter()
        .zip(b)
        .fold(T::one(), |acc, (p, q)| acc * p.overlap(q))
}

/// Euclidean distance from a point to a box.
pub fn bounds_distance<T: Real>(b: &[Interval<T>], x: &[T]) -> T {
    b.iter()
        .zip(x)
        .map(|(i, &v)| {
            let d = i.distance_to(v);
            d * d
        })
        .fold(T::zero(), |a, b| a + b)
        .sqrt()
}

pub fn bounds_diameter<T: Real>(b: &[Interval<T>]) -> T {
    b.iter()
        .map(|i| i.len() * i.len())
        .fold(T::zero(), |a, b| a + b)
        .sqrt()
}

/// `X = (a_1, b_1) x ... x (a_d, b_d)` with possibly infinite ends.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainSpec<T = f64> {
    intervals: Vec<Interval<T>>,
}

impl<T: Real> DomainSpec<T> {
    pub fn new(intervals: Vec<Interval<T>>) -> Result<Self> {
        if intervals.is_empty() {
            return Err(Error::domain("domain must have at least one axis"));
        }
        for (j, i) in intervals.iter().enumerate() {
            if i.lo.is_nan() || i.hi.is_nan() || !(i.lo < i.hi) {
                return Err(Error::domain(format!("axis {j}: need a_j < b_j")));
            }
        }
        Ok(DomainSpec { intervals })
    }

    /// `R^d`.
    pub fn euclidean(d: usize) -> Self {
        DomainSpec {
            intervals: vec![Interval::new(T::neg_infinity(), T::infinity()); d],
        }
    }

    /// `(0, inf)`.
    pub fn half_line() -> Self {
        DomainSpec {
            intervals: vec![Interval::new(T::zero(), T::infinity())],
        }
    }

    pub fn dim(&self) -> usize {
        self.intervals.len()
    }

    pub fn intervals(&self) -> &[Interval<T>] {
        &self.intervals
    }

    /// Membership in the closure of `X`.
    pub fn contains(&self, x: &[T]) -> bool {
        x.len() == self.dim() && bounds_contains(&self.intervals, x)
    }

    pub fn product(&self, other: &Self) -> Self {
        let mut intervals = self.intervals.clone();
        intervals.extend_from_slice(&other.intervals);
        DomainSpec { intervals }
    }

    /// Clip a box to the domain.
    pub fn clip(&self, b: &[Interval<T>]) -> Option<Bounds<T>> {
        bounds_intersect(&self.intervals, b)
    }

    /// Distance from `x` to the boundary of `X`.
    pub fn boundary_distance(&self, x: &[T]) -> T {
        self.intervals
            .iter()
            .zip(x)
            .map(|(i, &v)| (v - i.lo).min(i.hi - v))
            .fold(T::infinity(), |a, b| a.min(b))
    }
}

/// `Q(z, r_1, ..., r_d)`; the geometric object is always `Q ∩ X`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cuboid<T = f64> {
    pub center: Vec<T>,
    pub half_widths: Vec<T>,
}

impl<T: Real> Cuboid<T> {
    pub fn new(center: Vec<T>, half_widths: Vec<T>) -> Result<Self> {
        if center.len() != half_widths.len() || center.is_empty() {
            return Err(Error::domain(
                "center and half-widths must have equal, nonzero length",
            ));
        }
        if half_widths
            .iter()
            .any(|r| !(*r > T::zero()) || !r.is_finite())
        {
            return Err(Error::domain("half-widths must be positive and finite"));
        }
        Ok(Cuboid {
            center,
            half_widths,
        })
    }

    pub fn from_bounds(b: &[Interval<T>]) -> Result<Self> {
        let two = T::lit(2.0);
        Cuboid::new(
            b.iter().map(|i| (i.lo + i.hi) / two).collect(),
            b.iter().map(|i| (i.hi - i.lo) / two).collect(),
        )
    }

    /// One-dimensional `[lo, hi]`.
    pub fn interval(lo: T, hi: T) -> Result<Self> {
        Cuboid::from_bounds(&[Interval::new(lo, hi)])
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn bounds(&self) -> Bounds<T> {
        self.center
            .iter()
            .zip(&self.half_widths)
            .map(|(&z, &r)| Interval::new(z - r, z + r))
            .collect()
    }

    /// `Q ∩ X`.
    pub fn clipped(&self, domain: &DomainSpec<T>) -> Option<Bounds<T>> {
        domain.clip(&self.bounds())
    }

    /// `d_Q = 2 sqrt(sum r_i^2)` of the nominal cuboid.
    pub fn diameter(&self) -> T {
        let s = self
            .half_widths
            .iter()
            .fold(T::zero(), |acc, &r| acc + r * r);
        T::lit(2.0) * s.sqrt()
    }

    pub fn volume(&self) -> T {
        self.half_widths
            .iter()
            .fold(T::one(), |acc, &r| acc * T::lit(2.0) * r)
    }

    /// `max r_i / min r_j`.
    pub fn aspect(&self) -> T {
        let max = self.half_widths.iter().fold(T::zero(), |a, &b| a.max(b));
        let min = self
            .half_widths
            .iter()
            .fold(T::infinity(), |a, &b| a.min(b));
        max / min
    }

    /// Same center, half-widths multiplied by `factor`.
    pub fn scaled(&self, factor: T) -> Self {
        Cuboid {
            center: self.center.clone(),
            half_widths: self.half_widths.iter().map(|&r| r * factor).collect(),
        }
    }

    pub fn contains(&self, x: &[T]) -> bool {
        bounds_contains(&self.bounds(), x)
    }

    /// Cartesian product `self x other`.
    pub fn product(&self, other: &Self) -> Self {
        let mut center = self.center.clone();
        center.extend_from_slice(&other.center);
        let mut half_widths = self.half_widths.clone();
        half_widths.extend_from_slice(&other.half_widths);
        Cuboid {
            center,
            half_widths,
        }
    }

    /// Cuboid cast to another scalar type.
    pub fn cast<U: Real>(&self) -> Cuboid<U> {
        Cuboid {
            center: self
                .center
                .iter()
                .map(|v| U::lit(v.to_f64_lossy()))
                .collect(),
            half_widths: self
                .half_widths
                .iter()
                .map(|v| U::lit(v.to_f64_lossy()))
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diameter_matches_half_widths() {
        let q = Cuboid::new(vec![0.0, 0.0], vec![3.0, 4.0]).unwrap();
        assert_eq!(q.diameter(), 10.0);
        assert_eq!(q.volume(), 48.0);
        assert_eq!(q.aspect(), 4.0 / 3.0);
    }

    #[test]
    fn clipping_to_half_line() {
        let q = Cuboid::new(vec![0.1], vec![0.22]).unwrap();
        let b: Bounds<f64> = q.clipped(&DomainSpec::half_line()).unwrap();
        assert_eq!(b[0].lo, 0.0);
        assert!((b[0].hi - 0.32).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_domains() {
        assert!(DomainSpec::new(vec![Interval::new(1.0, 1.0)]).is_err());
        assert!(DomainSpec::<f64>::new(vec![]).is_err());
        assert!(Cuboid::new(vec![0.0], vec![0.0]).is_err());
    }

    #[test]
    fn overlap_of_touching_boxes_is_zero() {
        let a = vec![Interval::new(0.0, 1.0), Interval::new(0.0, 1.0)];
        let b = vec![Interval::new(1.0, 2.0), Interval::new(0.5, 1.0)];
        assert_eq!(bounds_overlap(&a, &b), 0.0);
        assert!(bounds_intersect(&a, &b).is_some());
    }

    #[test]
    fn works_in_single_precision() {
        let q = Cuboid::<f32>::interval(1.0, 2.0).unwrap();
        assert_eq!(q.center, vec![1.5f32]);
        assert_eq!(q.diameter(), 1.0f32);
    }
}
