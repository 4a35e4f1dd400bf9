//! Small sample statistics for comparing seeded repetitions.

use statrs::distribution::{ContinuousCDF, Normal};

/// Median; `NaN` for an empty slice. Sorting uses `total_cmp`, so `NaN`
/// values sort last instead of panicking.
pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let h = v.len() / 2;
    if v.len() % 2 == 1 {
        v[h]
    } else {
        0.5 * (v[h - 1] + v[h])
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RankTest {
    /// `U` statistic of the first sample.
    pub u: f64,
    pub z: f64,
    /// Two-sided p-value.
    pub p: f64,
}

/// Two-sided Mann–Whitney U test, normal approximation with tie correction
/// and continuity correction.
pub fn mann_whitney(a: &[f64], b: &[f64]) -> RankTest {
    let (n1, n2) = (a.len() as f64, b.len() as f64);
    let mut all: Vec<(f64, bool)> = a
        .iter()
        .map(|&x| (x, true))
        .chain(b.iter().map(|&x| (x, false)))
        .collect();
    all.sort_by(|x, y| x.0.total_cmp(&y.0));

    let mut rank_a = 0.0;
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j + 1 < all.len() && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        rank_a += all[i..=j].iter().filter(|e| e.1).count() as f64 * avg;
        i = j + 1;
    }
    let u = rank_a - n1 * (n1 + 1.0) / 2.0;
    let mu = n1 * n2 / 2.0;
    let n = n1 + n2;
    let var = n1 * n2 / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if !(var > 0.0) {
        return RankTest { u, z: 0.0, p: 1.0 };
    }
    let diff = (u - mu).abs() - 0.5;
    let z = diff.max(0.0) / var.sqrt();
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let p = (2.0 * (1.0 - normal.cdf(z))).min(1.0);
    RankTest { u, z, p }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_odd_even_empty() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
    }

    #[test]
    fn identical_samples_are_indistinguishable() {
        let a: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let t = mann_whitney(&a, &a);
        assert!(t.p > 0.9, "{t:?}");
        assert_eq!(t.u, 200.0);
    }

    #[test]
    fn separated_samples_are_detected() {
        let a: Vec<f64> = (0..30).map(|i| i as f64).collect();
        let b: Vec<f64> = (0..30).map(|i| 100.0 + i as f64).collect();
        let t = mann_whitney(&a, &b);
        assert_eq!(t.u, 0.0);
        assert!(t.p < 1e-8, "{t:?}");
    }

    #[test]
    fn small_sample_against_exact_table() {
        // a = {1,2,3}, b = {4,5,6,7}: U = 0; exact two-sided p = 2/35 ≈ 0.057.
        let t = mann_whitney(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0, 7.0]);
        assert_eq!(t.u, 0.0);
        assert!((t.p - 2.0 / 35.0).abs() < 0.03, "{t:?}");
    }
}
