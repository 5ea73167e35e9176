//! Goodness-of-fit helpers shared by the validation suite and the tests.

use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{domain, Result};

/// Result of a chi-square goodness-of-fit test.
#[derive(Clone, Copy, Debug)]
pub struct ChiSquare {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Pearson chi-square test of `counts` against `probs`.
///
/// Consecutive cells are pooled until each pooled bin expects at least five
/// observations; a trailing short bin is merged into its predecessor.
pub fn chi_square_gof(counts: &[u64], probs: &[f64]) -> Result<ChiSquare> {
    if counts.len() != probs.len() || counts.is_empty() {
        return domain("counts and probabilities must be nonempty and of equal length");
    }
    let n: u64 = counts.iter().sum();
    if n == 0 {
        return domain("no observations");
    }
    let total_p: f64 = probs.iter().sum();
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let (mut obs, mut exp) = (0.0, 0.0);
    for (&c, &p) in counts.iter().zip(probs) {
        obs += c as f64;
        exp += p / total_p * n as f64;
        if exp >= 5.0 {
            bins.push((obs, exp));
            obs = 0.0;
            exp = 0.0;
        }
    }
    if exp > 0.0 || obs > 0.0 {
        match bins.last_mut() {
            Some(last) => {
                last.0 += obs;
                last.1 += exp;
            }
            None => bins.push((obs, exp)),
        }
    }
    if bins.len() < 2 {
        return Ok(ChiSquare {
            statistic: 0.0,
            dof: 0,
            p_value: 1.0,
        });
    }
    let statistic: f64 = bins.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
    let dof = bins.len() - 1;
    let dist = ChiSquared::new(dof as f64).expect("positive degrees of freedom");
    Ok(ChiSquare {
        statistic,
        dof,
        p_value: dist.sf(statistic),
    })
}

/// Total-variation distance between an empirical histogram and `probs`.
pub fn tv_distance(counts: &[u64], probs: &[f64]) -> f64 {
    let n: u64 = counts.iter().sum();
    0.5 * counts
        .iter()
        .zip(probs)
        .map(|(&c, &p)| (c as f64 / n as f64 - p).abs())
        .sum::<f64>()
}

/// Sample mean and its standard error.
pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_counts_do_not_reject() {
        let probs = [0.25; 4];
        let gof = chi_square_gof(&[250, 250, 250, 250], &probs).unwrap();
        assert_eq!(gof.statistic, 0.0);
        assert!((gof.p_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn skewed_counts_reject() {
        let gof = chi_square_gof(&[400, 200, 200, 200], &[0.25; 4]).unwrap();
        assert!(gof.p_value < 1e-6);
    }

    #[test]
    fn tiny_cells_are_pooled() {
        let mut probs = vec![1e-6; 10];
        probs.push(1.0);
        let mut counts = vec![0u64; 10];
        counts.push(1000);
        let gof = chi_square_gof(&counts, &probs).unwrap();
        assert!(gof.p_value > 0.1);
    }

    #[test]
    fn tv_of_matching_histogram_is_zero() {
        assert_eq!(tv_distance(&[1, 3], &[0.25, 0.75]), 0.0);
        assert!((tv_distance(&[4, 0], &[0.0, 1.0]) - 1.0).abs() < 1e-15);
    }
}
