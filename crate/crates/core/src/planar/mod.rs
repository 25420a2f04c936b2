//! Planar stand-up surrogate: a reduced sagittal model driven through the
//! reward engine and trained with the cross-entropy method. Results from
//! this module are surrogate evidence, not a reproduction of 3D training.

mod cem;
mod env;
mod model;
mod policy;

pub use cem::{cem_optimize, CemConfig, CemIteration, CemResult};
pub use env::{Controller, OpenLoop, PlanarEnv, PlanarEnvConfig, Rollout, TrajectoryRow, TRAJECTORY_COLUMNS};
pub use model::{
    ContactPoint, Coords, PlanarError, PlanarModel, PlanarParams, PlanarState, FRONT_ELBOW, FRONT_SHOULDER, HIND_HIP,
    HIND_KNEE, NA, NC, NQ, PITCH, X, Z,
};
pub use policy::{PlanarPolicy, FEATURES};

use serde::{Deserialize, Serialize};

use crate::exec::Parallelism;

/// Policy shape and initial search spread for stand-up training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub knots: usize,
    pub horizon: f64,
    pub knot_std: f64,
    pub gain_std: f64,
    pub cem: CemConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            knots: 6,
            horizon: 1.0,
            knot_std: 0.8,
            gain_std: 0.5,
            cem: CemConfig {
                min_std: 0.01,
                extra_std: 0.05,
                ..CemConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainResult {
    pub policy: PlanarPolicy,
    pub cem: CemResult,
    pub rollout: Rollout,
}

/// CEM on the undiscounted episode return.
pub fn train_standup(env: &PlanarEnv, config: &TrainConfig, seed: u64, par: Parallelism) -> TrainResult {
    let dims = PlanarPolicy::dims(config.knots);
    let knot_dims = NA * config.knots;
    let init_std: Vec<f64> = (0..dims)
        .map(|d| if d < knot_dims { config.knot_std } else { config.gain_std })
        .collect();
    let objective = |p: &[f64]| {
        let policy = PlanarPolicy::from_params(config.knots, config.horizon, p);
        env.rollout(&policy, false).undiscounted
    };
    let cem = cem_optimize(objective, &vec![0.0; dims], &init_std, &config.cem, seed, par);
    let policy = PlanarPolicy::from_params(config.knots, config.horizon, &cem.best);
    let rollout = env.rollout(&policy, true);
    TrainResult { policy, cem, rollout }
}
