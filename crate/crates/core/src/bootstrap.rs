//! Percentile bootstrap confidence intervals.
//!
//! Replicate `r` draws its resample indices from a ChaCha8 stream seeded with
//! `seed` and stream id `r`, so intervals do not depend on thread scheduling.
//! Percentiles use linear interpolation between order statistics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributional::percentile;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BootstrapError {
    #[error("no tokens to resample")]
    EmptyInput,
    #[error("invalid bootstrap config: {0}")]
    InvalidConfig(String),
    #[error("every replicate statistic was undefined")]
    NoValidReplicates,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResampleUnit {
    /// Resample whole utterances (clustered bootstrap).
    Utterance,
    /// Resample individual tokens.
    Token,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub replicates: usize,
    pub alpha: f64,
    pub seed: u64,
    pub resample_unit: ResampleUnit,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            replicates: 1000,
            alpha: 0.05,
            seed: 0,
            resample_unit: ResampleUnit::Utterance,
        }
    }
}

impl BootstrapConfig {
    pub fn validate(&self) -> Result<(), BootstrapError> {
        if self.replicates < 100 {
            return Err(BootstrapError::InvalidConfig(format!(
                "replicates must be >= 100, got {}",
                self.replicates
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(BootstrapError::InvalidConfig(format!(
                "alpha must be in (0, 1), got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// Statistic recomputed on each resample of per-utterance token values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    /// Mean over all pooled tokens.
    PooledMean,
    /// Fraction of pooled tokens with value strictly below `tau`.
    CollapseRate { tau: f64 },
}

impl Statistic {
    fn token_value(&self, v: f64) -> f64 {
        match *self {
            Statistic::PooledMean => v,
            Statistic::CollapseRate { tau } => {
                if v < tau {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// The statistic on the full sample.
    pub fn evaluate(&self, groups: &[Vec<f64>]) -> Option<f64> {
        let (sum, n) = groups
            .iter()
            .flatten()
            .fold((0.0, 0usize), |(s, n), &v| (s + self.token_value(v), n + 1));
        (n > 0).then(|| sum / n as f64)
    }
}

/// Runs `config.replicates` resamples of `n_units` units and evaluates
/// `statistic` on each (it receives the resampled unit indices). Replicates
/// where the statistic is undefined are dropped. Output is in replicate order.
pub fn replicate_statistics<F>(n_units: usize, config: &BootstrapConfig, statistic: F) -> Vec<f64>
where
    F: Fn(&[usize]) -> Option<f64> + Sync,
{
    (0..config.replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(r as u64);
            let idx: Vec<usize> = (0..n_units).map(|_| rng.random_range(0..n_units)).collect();
            statistic(&idx)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .filter(|v| v.is_finite())
        .collect()
}

/// `(alpha/2, 1 − alpha/2)` percentiles of the replicate distribution.
pub fn percentile_interval(mut replicates: Vec<f64>, alpha: f64) -> Result<(f64, f64), BootstrapError> {
    if replicates.is_empty() {
        return Err(BootstrapError::NoValidReplicates);
    }
    replicates.sort_by(f64::total_cmp);
    Ok((
        percentile(&replicates, alpha / 2.0),
        percentile(&replicates, 1.0 - alpha / 2.0),
    ))
}

/// Generic percentile bootstrap over `n_units` resampling units.
pub fn bootstrap_with<F>(
    n_units: usize,
    config: &BootstrapConfig,
    statistic: F,
) -> Result<(f64, f64), BootstrapError>
where
    F: Fn(&[usize]) -> Option<f64> + Sync,
{
    config.validate()?;
    if n_units == 0 {
        return Err(BootstrapError::EmptyInput);
    }
    percentile_interval(replicate_statistics(n_units, config, statistic), config.alpha)
}

/// 95% (for the default alpha) percentile interval for a pooled statistic
/// over per-utterance token values.
///
/// With utterance resampling, utterances without tokens are ignored. With
/// token resampling each token is its own unit.
pub fn bootstrap_ci(
    groups: &[Vec<f64>],
    statistic: Statistic,
    config: &BootstrapConfig,
) -> Result<(f64, f64), BootstrapError> {
    config.validate()?;
    let units: Vec<(f64, usize)> = match config.resample_unit {
        ResampleUnit::Utterance => groups
            .iter()
            .filter(|g| !g.is_empty())
            .map(|g| (g.iter().map(|&v| statistic.token_value(v)).sum(), g.len()))
            .collect(),
        ResampleUnit::Token => groups
            .iter()
            .flatten()
            .map(|&v| (statistic.token_value(v), 1))
            .collect(),
    };
    if units.is_empty() {
        return Err(BootstrapError::EmptyInput);
    }
    bootstrap_with(units.len(), config, |idx| {
        let (sum, n) = idx
            .iter()
            .fold((0.0, 0usize), |(s, n), &i| (s + units[i].0, n + units[i].1));
        (n > 0).then(|| sum / n as f64)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(seed: u64) -> BootstrapConfig {
        BootstrapConfig {
            seed,
            ..Default::default()
        }
    }

    #[test]
    fn constant_values_give_degenerate_interval() {
        let groups = vec![vec![0.7, 0.7], vec![0.7], vec![0.7, 0.7, 0.7]];
        let (lo, hi) = bootstrap_ci(&groups, Statistic::PooledMean, &cfg(1)).unwrap();
        assert!((lo - 0.7).abs() < 1e-12 && (hi - 0.7).abs() < 1e-12);
    }

    #[test]
    fn deterministic_for_seed() {
        let groups: Vec<Vec<f64>> = (0..20).map(|i| vec![(i as f64 * 0.37).sin().abs()]).collect();
        let a = bootstrap_ci(&groups, Statistic::PooledMean, &cfg(42)).unwrap();
        let b = bootstrap_ci(&groups, Statistic::PooledMean, &cfg(42)).unwrap();
        assert_eq!(a.0.to_bits(), b.0.to_bits());
        assert_eq!(a.1.to_bits(), b.1.to_bits());
        let c = bootstrap_ci(&groups, Statistic::PooledMean, &cfg(43)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn collapse_rate_statistic() {
        let groups = vec![vec![0.2, 0.9], vec![0.5, 0.1]];
        assert_eq!(
            Statistic::CollapseRate { tau: 0.5 }.evaluate(&groups),
            Some(0.5)
        );
        let all_high = vec![vec![0.6, 0.9]];
        let (lo, hi) =
            bootstrap_ci(&all_high, Statistic::CollapseRate { tau: 0.5 }, &cfg(0)).unwrap();
        assert_eq!((lo, hi), (0.0, 0.0));
    }

    #[test]
    fn rejects_bad_input() {
        assert_eq!(
            bootstrap_ci(&[vec![]], Statistic::PooledMean, &cfg(0)).unwrap_err(),
            BootstrapError::EmptyInput
        );
        let bad = BootstrapConfig {
            replicates: 10,
            ..Default::default()
        };
        assert!(matches!(
            bootstrap_ci(&[vec![1.0]], Statistic::PooledMean, &bad),
            Err(BootstrapError::InvalidConfig(_))
        ));
    }

    #[test]
    fn token_unit_flattens() {
        let groups = vec![vec![0.0; 50], vec![1.0; 50]];
        let c = BootstrapConfig {
            resample_unit: ResampleUnit::Token,
            ..cfg(3)
        };
        let (lo, hi) = bootstrap_ci(&groups, Statistic::PooledMean, &c).unwrap();
        // 100 iid Bernoulli(0.5) tokens: interval is roughly 0.5 ± 0.1
        assert!(lo > 0.3 && lo < 0.5 && hi > 0.5 && hi < 0.7, "{lo} {hi}");
    }
}
