use crate::error::{check_len, Result};

/// Euclidean distance between two equal-length vectors, accumulated in `f64`.
pub fn euclidean_distance(x: &[f32], y: &[f32]) -> Result<f64> {
    check_len("vector length", x.len(), y.len())?;
    Ok(squared_euclidean(x, y).sqrt())
}

#[inline]
pub(crate) fn squared_euclidean(x: &[f32], y: &[f32]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    x.iter()
        .zip(y)
        .map(|(&a, &b)| {
            let diff = a as f64 - b as f64;
            diff * diff
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn naive(x: &[f32], y: &[f32]) -> f64 {
        let mut acc = 0.0f64;
        for i in 0..x.len() {
            let t = x[i] as f64 - y[i] as f64;
            acc += t * t;
        }
        acc.sqrt()
    }

    #[test]
    fn pythagorean() {
        assert_eq!(euclidean_distance(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 5.0);
    }

    #[test]
    fn identical_is_zero() {
        let x = [1.5f32, -2.0, 7.25];
        assert_eq!(euclidean_distance(&x, &x).unwrap(), 0.0);
    }

    #[test]
    fn length_mismatch() {
        assert!(euclidean_distance(&[1.0], &[1.0, 2.0]).is_err());
    }

    proptest! {
        #[test]
        fn matches_naive_loop(pairs in prop::collection::vec((-1e3f32..1e3, -1e3f32..1e3), 1..64)) {
            let (x, y): (Vec<f32>, Vec<f32>) = pairs.into_iter().unzip();
            let got = euclidean_distance(&x, &y).unwrap();
            let want = naive(&x, &y);
            prop_assert!((got - want).abs() <= 1e-12 * want.max(1e-300));
            prop_assert_eq!(got, euclidean_distance(&y, &x).unwrap());
            prop_assert_eq!(got == 0.0, x == y);
        }
    }
}
