//! Elitist cross-entropy method. Each generation samples a diagonal Gaussian,
//! scores the samples, and refits the Gaussian on the best `elites` of the
//! new samples together with the previous elites. Scores are deterministic,
//! so keeping the old elites in the pool makes the elite mean non-decreasing.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::exec::Parallelism;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CemConfig {
    pub population: usize,
    pub elites: usize,
    pub iterations: usize,
    /// Lower bound on every standard deviation after a refit.
    pub min_std: f64,
    /// Extra exploration noise, `extra_std * extra_decay^iteration`, added
    /// in quadrature to the refit deviations.
    pub extra_std: f64,
    pub extra_decay: f64,
}

impl Default for CemConfig {
    fn default() -> Self {
        Self {
            population: 64,
            elites: 8,
            iterations: 200,
            min_std: 0.0,
            extra_std: 0.0,
            extra_decay: 0.97,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CemIteration {
    pub iteration: usize,
    pub best: f64,
    pub elite_mean: f64,
    pub mean_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CemResult {
    pub best: Vec<f64>,
    pub best_score: f64,
    pub mean: Vec<f64>,
    pub history: Vec<CemIteration>,
}

fn score_key(s: f64) -> f64 {
    if s.is_nan() {
        f64::NEG_INFINITY
    } else {
        s
    }
}

/// Maximizes `objective`. Sampling is sequential per generation and
/// evaluation is parallel, so results do not depend on `par`.
pub fn cem_optimize<F>(
    objective: F,
    init_mean: &[f64],
    init_std: &[f64],
    config: &CemConfig,
    seed: u64,
    par: Parallelism,
) -> CemResult
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    assert!(config.population > 0 && config.elites > 0, "population and elites must be positive");
    assert_eq!(init_mean.len(), init_std.len(), "mean and std dimensions differ");
    let dims = init_mean.len();
    let mut mean = init_mean.to_vec();
    let mut std = init_std.to_vec();
    let mut pool: Vec<(Vec<f64>, f64)> = Vec::new();
    let mut history = Vec::with_capacity(config.iterations);

    for it in 0..config.iterations {
        let mut rng = seed::rng_indexed(seed, "cem", it as u64);
        let samples: Vec<Vec<f64>> = (0..config.population)
            .map(|_| {
                (0..dims)
                    .map(|d| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        mean[d] + std[d] * z
                    })
                    .collect()
            })
            .collect();
        let scores = par.map(samples.len(), |i| objective(&samples[i]));

        pool.extend(samples.into_iter().zip(scores));
        // Stable: among equal scores the older entry wins.
        pool.sort_by(|a, b| score_key(b.1).total_cmp(&score_key(a.1)));
        pool.truncate(config.elites);

        let n = pool.len() as f64;
        let extra = config.extra_std * config.extra_decay.powi(it as i32);
        for d in 0..dims {
            let m = pool.iter().map(|(x, _)| x[d]).sum::<f64>() / n;
            let var = pool.iter().map(|(x, _)| (x[d] - m).powi(2)).sum::<f64>() / n;
            mean[d] = m;
            std[d] = (var + extra * extra).sqrt().max(config.min_std);
        }
        history.push(CemIteration {
            iteration: it,
            best: pool[0].1,
            elite_mean: pool.iter().map(|(_, s)| s).sum::<f64>() / n,
            mean_std: std.iter().sum::<f64>() / dims.max(1) as f64,
        });
    }

    let (best, best_score) = pool.first().cloned().unwrap_or((mean.clone(), f64::NEG_INFINITY));
    CemResult {
        best,
        best_score,
        mean,
        history,
    }
}
