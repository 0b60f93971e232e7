//! Fixed-order pairwise reductions.
//!
//! All energy and inner-product accumulations go through these helpers so
//! that results are bit-reproducible and symmetry identities (unfolding a
//! reduced domain, reflecting a field) hold to near machine precision.

/// Pairwise sum of `f(i)` for `i in 0..n`.
pub fn pairwise_by<F: Fn(usize) -> f64>(n: usize, f: F) -> f64 {
    fn rec<F: Fn(usize) -> f64>(lo: usize, hi: usize, f: &F) -> f64 {
        let n = hi - lo;
        if n <= 16 {
            let mut s = 0.0;
            for i in lo..hi {
                s += f(i);
            }
            s
        } else {
            let mid = lo + n / 2;
            rec(lo, mid, f) + rec(mid, hi, f)
        }
    }
    rec(0, n, &f)
}

/// Pairwise sum of a slice.
pub fn pairwise(xs: &[f64]) -> f64 {
    pairwise_by(xs.len(), |i| xs[i])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_naive_on_smooth_data() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64 * 0.37).sin()).collect();
        let naive: f64 = xs.iter().sum();
        assert!((pairwise(&xs) - naive).abs() < 1e-10);
    }

    #[test]
    fn exact_on_integers() {
        let xs: Vec<f64> = (0..4097).map(|i| i as f64).collect();
        assert_eq!(pairwise(&xs), 4096.0 * 4097.0 / 2.0);
    }
}
