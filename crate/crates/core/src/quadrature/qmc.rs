//! Halton low-discrepancy points.

const PRIMES: [u64; 8] = [2, 3, 5, 7, 11, 13, 17, 19];

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    r
}

/// The `index`-th Halton point in `[0,1)^dim` (index 0 is skipped).
pub fn halton(index: u64, dim: usize) -> Vec<f64> {
    assert!(
        dim <= PRIMES.len(),
        "halton supports up to {} dimensions",
        PRIMES.len()
    );
    (0..dim)
        .map(|j| radical_inverse(index + 1, PRIMES[j]))
        .collect()
}

/// `n` Halton points mapped affinely into the box `lo + u * (hi - lo)`.
pub fn halton_in_box(n: usize, lo: &[f64], hi: &[f64]) -> Vec<Vec<f64>> {
    (0..n as u64)
        .map(|i| {
            halton(i, lo.len())
                .into_iter()
                .zip(lo.iter().zip(hi))
                .map(|(u, (&a, &b))| a + u * (b - a))
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_points() {
        assert_eq!(halton(0, 2), vec![0.5, 1.0 / 3.0]);
        assert_eq!(halton(1, 1), vec![0.25]);
    }

    #[test]
    fn stays_in_box() {
        for p in halton_in_box(100, &[-1.0, 2.0], &[1.0, 3.0]) {
            assert!(p[0] > -1.0 && p[0] < 1.0 && p[1] > 2.0 && p[1] < 3.0);
        }
    }
}
