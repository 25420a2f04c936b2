//! Real-to-sim calibration: pick the plant parameters whose open-loop joint
//! trace is closest to a recorded one,
//!
//! ```text
//! xi* = argmin_xi  sum_i |q_sim_i(xi) - q_real_i|^2
//! ```
//!
//! over a scrambled Sobol sample of a parameter box, then widen the winner
//! into randomization ranges.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Parallelism;
use crate::motor_plant::{simulate, ActionSequence, JointTrace, PlantConfig, PlantError, RunOptions, SimParams};
use crate::observation::CONTROL_DT;
use crate::robot_model::{JointId, JointVector, RobotModel, NUM_JOINTS};
use crate::seed;

pub const REPORT_FORMAT: &str = "quadbiped-calibration-report/1";

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error("dataset: {0}")]
    Dataset(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("every one of the {0} candidates failed to simulate")]
    AllInvalid(usize),
    #[error("invalid parameter box: {0}")]
    Box(String),
    #[error("invalid grid `{0}`: expected lo:hi:step with step > 0 and lo <= hi")]
    Grid(String),
    #[error("unknown parameter `{0}`; expected joint_friction, joint_damping, delay, mass_scale or pd_scale")]
    UnknownParam(String),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub robot_id: String,
    pub date: String,
    pub notes: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationDataset {
    pub actions: ActionSequence,
    pub q_real: JointTrace,
    pub meta: DatasetMeta,
}

pub const ACTIONS_FILE: &str = "actions.csv";
pub const TRACE_FILE: &str = "q_real.csv";
pub const META_FILE: &str = "meta.json";

impl CalibrationDataset {
    pub fn new(actions: ActionSequence, q_real: JointTrace, meta: DatasetMeta) -> Result<Self, CalibrationError> {
        let ds = Self { actions, q_real, meta };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<(), CalibrationError> {
        if self.actions.targets.is_empty() {
            return Err(CalibrationError::Dataset("no actions".into()));
        }
        let expected = self.actions.targets.len() * crate::motor_plant::SAMPLES_PER_ACTION;
        if self.q_real.samples.len() != expected {
            return Err(CalibrationError::Dataset(format!(
                "trace has {} samples but {} actions ({:.2} s) need {expected}",
                self.q_real.samples.len(),
                self.actions.targets.len(),
                self.actions.duration()
            )));
        }
        Ok(())
    }

    /// Reads `actions.csv`, `q_real.csv` and the optional `meta.json`.
    pub fn load(dir: &Path) -> Result<Self, CalibrationError> {
        let open = |name: &str| {
            let p = dir.join(name);
            fs::File::open(&p).map_err(|source| CalibrationError::Io {
                path: p.display().to_string(),
                source,
            })
        };
        let actions = ActionSequence::read_csv(open(ACTIONS_FILE)?)?;
        let q_real = JointTrace::read_csv(open(TRACE_FILE)?)?;
        let meta_path = dir.join(META_FILE);
        let meta = if meta_path.exists() {
            let text = fs::read_to_string(&meta_path).map_err(|source| CalibrationError::Io {
                path: meta_path.display().to_string(),
                source,
            })?;
            serde_json::from_str(&text).map_err(|source| CalibrationError::Json {
                path: meta_path.display().to_string(),
                source,
            })?
        } else {
            DatasetMeta::default()
        };
        Self::new(actions, q_real, meta)
    }

    pub fn save(&self, dir: &Path) -> Result<(), CalibrationError> {
        let io = |p: &Path| {
            let path = p.display().to_string();
            move |source| CalibrationError::Io { path, source }
        };
        fs::create_dir_all(dir).map_err(io(dir))?;
        let ap = dir.join(ACTIONS_FILE);
        self.actions.write_csv(fs::File::create(&ap).map_err(io(&ap))?)?;
        let tp = dir.join(TRACE_FILE);
        self.q_real.write_csv(fs::File::create(&tp).map_err(io(&tp))?)?;
        let mp = dir.join(META_FILE);
        let json = serde_json::to_string_pretty(&self.meta).expect("metadata serializes");
        fs::write(&mp, json + "\n").map_err(io(&mp))?;
        Ok(())
    }
}

/// Sum of squared joint-position differences over every sample and joint.
pub fn trace_distance(a: &JointTrace, b: &JointTrace) -> f64 {
    a.samples
        .iter()
        .zip(&b.samples)
        .map(|(x, y)| x.sub(y).norm_squared())
        .sum()
}

pub fn discrepancy(
    model: &RobotModel,
    xi: &SimParams,
    dataset: &CalibrationDataset,
    plant: &PlantConfig,
) -> Result<f64, CalibrationError> {
    dataset.validate()?;
    let run = simulate(model, xi, &dataset.actions, plant, RunOptions::default())?;
    Ok(trace_distance(&run.trace, &dataset.q_real))
}

/// Calibrated parameters. `mass_scale` is one multiplier tied across the leg
/// segments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Param {
    JointFriction,
    JointDamping,
    Delay,
    MassScale,
    PdScale,
}

impl Param {
    pub const ALL: [Param; 5] = [
        Param::JointFriction,
        Param::JointDamping,
        Param::Delay,
        Param::MassScale,
        Param::PdScale,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Param::JointFriction => "joint_friction",
            Param::JointDamping => "joint_damping",
            Param::Delay => "delay",
            Param::MassScale => "mass_scale",
            Param::PdScale => "pd_scale",
        }
    }

    pub fn get(self, xi: &SimParams) -> f64 {
        match self {
            Param::JointFriction => xi.joint_friction,
            Param::JointDamping => xi.joint_damping,
            Param::Delay => xi.delay,
            Param::MassScale => xi.mass_scales[0],
            Param::PdScale => xi.pd_scale,
        }
    }

    pub fn set(self, xi: &mut SimParams, value: f64) {
        match self {
            Param::JointFriction => xi.joint_friction = value,
            Param::JointDamping => xi.joint_damping = value,
            Param::Delay => xi.delay = value,
            Param::MassScale => xi.mass_scales = [value; 4],
            Param::PdScale => xi.pd_scale = value,
        }
    }
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Param {
    type Err = CalibrationError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Param::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| CalibrationError::UnknownParam(s.to_string()))
    }
}

/// Closed interval per calibrated parameter. Degenerate intervals pin the
/// parameter and use no sampling dimension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamBox {
    pub joint_friction: [f64; 2],
    pub joint_damping: [f64; 2],
    pub delay: [f64; 2],
    pub mass_scale: [f64; 2],
    pub pd_scale: [f64; 2],
}

impl Default for ParamBox {
    fn default() -> Self {
        Self {
            joint_friction: [0.0, 0.2],
            joint_damping: [0.0, 0.1],
            delay: [0.0, 0.04],
            mass_scale: [0.8, 1.2],
            pd_scale: [1.0, 1.0],
        }
    }
}

impl ParamBox {
    pub fn range(&self, p: Param) -> [f64; 2] {
        match p {
            Param::JointFriction => self.joint_friction,
            Param::JointDamping => self.joint_damping,
            Param::Delay => self.delay,
            Param::MassScale => self.mass_scale,
            Param::PdScale => self.pd_scale,
        }
    }

    pub fn validate(&self) -> Result<(), CalibrationError> {
        for p in Param::ALL {
            let [lo, hi] = self.range(p);
            if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(CalibrationError::Box(format!("{p}: [{lo}, {hi}] is empty")));
            }
            let positive = matches!(p, Param::MassScale | Param::PdScale);
            if (positive && lo <= 0.0) || lo < 0.0 {
                return Err(CalibrationError::Box(format!("{p}: [{lo}, {hi}] leaves the valid domain")));
            }
        }
        Ok(())
    }

    fn free_params(&self) -> Vec<Param> {
        Param::ALL
            .into_iter()
            .filter(|p| {
                let [lo, hi] = self.range(*p);
                hi > lo
            })
            .collect()
    }

    /// Candidate `index` of the scrambled Sobol sequence for `seed`.
    pub fn candidate(&self, index: u32, seed: u64) -> SimParams {
        let scramble = seed::derive(seed, "calibration/sobol") as u32;
        let mut xi = SimParams::default();
        for p in Param::ALL {
            Param::set(p, &mut xi, self.range(p)[0]);
        }
        for (dim, p) in self.free_params().into_iter().enumerate() {
            let u = f64::from(sobol_burley::sample(index, dim as u32, scramble));
            let [lo, hi] = self.range(p);
            p.set(&mut xi, lo + u * (hi - lo));
        }
        xi
    }
}

/// Absolute margins below and above the best value, per parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginPolicy {
    pub joint_friction: [f64; 2],
    pub joint_damping: [f64; 2],
    pub delay: [f64; 2],
    pub mass_scale: [f64; 2],
    pub pd_scale: [f64; 2],
}

impl Default for MarginPolicy {
    fn default() -> Self {
        Self {
            joint_friction: [0.025, 0.025],
            joint_damping: [0.02, 0.02],
            delay: [0.01, 0.015],
            mass_scale: [0.1, 0.1],
            pd_scale: [0.2, 0.2],
        }
    }
}

impl MarginPolicy {
    pub fn zero() -> Self {
        Self {
            joint_friction: [0.0; 2],
            joint_damping: [0.0; 2],
            delay: [0.0; 2],
            mass_scale: [0.0; 2],
            pd_scale: [0.0; 2],
        }
    }

    fn get(&self, p: Param) -> [f64; 2] {
        match p {
            Param::JointFriction => self.joint_friction,
            Param::JointDamping => self.joint_damping,
            Param::Delay => self.delay,
            Param::MassScale => self.mass_scale,
            Param::PdScale => self.pd_scale,
        }
    }
}

/// Ranges recommended for randomization, keyed like [`ParamBox`].
pub type RecommendedRanges = ParamBox;

/// `[best - m_lo, best + m_hi]` per parameter, floored at zero.
pub fn add_margins(best: &SimParams, policy: &MarginPolicy) -> RecommendedRanges {
    let range = |p: Param| {
        let v = p.get(best);
        let [lo, hi] = policy.get(p);
        [(v - lo).max(0.0), v + hi]
    };
    ParamBox {
        joint_friction: range(Param::JointFriction),
        joint_damping: range(Param::JointDamping),
        delay: range(Param::Delay),
        mass_scale: range(Param::MassScale),
        pd_scale: range(Param::PdScale),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredCandidate {
    pub index: u32,
    pub params: SimParams,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub format: String,
    pub seed: u64,
    pub candidates: usize,
    pub invalid: usize,
    pub param_box: ParamBox,
    pub best: SimParams,
    pub best_error: f64,
    pub top_k: Vec<ScoredCandidate>,
    pub margins: MarginPolicy,
    pub recommended_ranges: RecommendedRanges,
    /// Set when the optional coordinate-descent polish ran.
    pub polished_from: Option<ScoredCandidate>,
}

impl CalibrationReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepConfig {
    pub candidates: usize,
    pub seed: u64,
    pub param_box: ParamBox,
    pub margins: MarginPolicy,
    pub top_k: usize,
    pub polish: bool,
    pub plant: PlantConfig,
    pub parallelism: Parallelism,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            candidates: 8192,
            seed: 0,
            param_box: ParamBox::default(),
            margins: MarginPolicy::default(),
            top_k: 16,
            polish: false,
            plant: PlantConfig::default(),
            parallelism: Parallelism::default(),
        }
    }
}

fn score(model: &RobotModel, xi: &SimParams, dataset: &CalibrationDataset, plant: &PlantConfig) -> f64 {
    discrepancy(model, xi, dataset, plant).unwrap_or(f64::INFINITY)
}

/// Evaluates `config.candidates` Sobol candidates and reports the argmin.
/// Ties resolve to the lower candidate index.
pub fn sweep(model: &RobotModel, dataset: &CalibrationDataset, config: &SweepConfig) -> Result<CalibrationReport, CalibrationError> {
    dataset.validate()?;
    config.param_box.validate()?;
    let n = config.candidates;
    let mut scored: Vec<ScoredCandidate> = config.parallelism.map(n, |i| {
        let params = config.param_box.candidate(i as u32, config.seed);
        ScoredCandidate {
            index: i as u32,
            params,
            error: score(model, &params, dataset, &config.plant),
        }
    });
    let invalid = scored.iter().filter(|c| !c.error.is_finite()).count();
    if invalid == n {
        return Err(CalibrationError::AllInvalid(n));
    }
    scored.retain(|c| c.error.is_finite());
    scored.sort_by(|a, b| a.error.total_cmp(&b.error).then(a.index.cmp(&b.index)));
    scored.truncate(config.top_k.max(1));

    let mut best = scored[0];
    let mut polished_from = None;
    if config.polish {
        let refined = polish(model, dataset, &config.param_box, best, &config.plant);
        if refined.error < best.error {
            polished_from = Some(best);
            best = refined;
        }
    }

    Ok(CalibrationReport {
        format: REPORT_FORMAT.to_string(),
        seed: config.seed,
        candidates: n,
        invalid,
        param_box: config.param_box,
        best: best.params,
        best_error: best.error,
        top_k: scored,
        margins: config.margins,
        recommended_ranges: add_margins(&best.params, &config.margins),
        polished_from,
    })
}

/// Coordinate descent with shrinking steps, staying inside the box.
fn polish(
    model: &RobotModel,
    dataset: &CalibrationDataset,
    bx: &ParamBox,
    start: ScoredCandidate,
    plant: &PlantConfig,
) -> ScoredCandidate {
    let mut best = start;
    let free = bx.free_params();
    let mut steps: Vec<f64> = free
        .iter()
        .map(|p| {
            let [lo, hi] = bx.range(*p);
            (hi - lo) / 32.0
        })
        .collect();
    for _ in 0..6 {
        for (k, p) in free.iter().enumerate() {
            let [lo, hi] = bx.range(*p);
            for dir in [-1.0, 1.0] {
                loop {
                    let mut xi = best.params;
                    let v = (p.get(&xi) + dir * steps[k]).clamp(lo, hi);
                    if v == p.get(&xi) {
                        break;
                    }
                    p.set(&mut xi, v);
                    let e = score(model, &xi, dataset, plant);
                    if e < best.error {
                        best = ScoredCandidate {
                            index: start.index,
                            params: xi,
                            error: e,
                        };
                    } else {
                        break;
                    }
                }
            }
            steps[k] *= 0.5;
        }
    }
    best
}

/// Discrepancy along one parameter with the others held at `fixed`.
pub fn error_profile(
    model: &RobotModel,
    dataset: &CalibrationDataset,
    param: Param,
    grid: &[f64],
    fixed: &SimParams,
    plant: &PlantConfig,
    parallelism: Parallelism,
) -> Result<Vec<(f64, f64)>, CalibrationError> {
    dataset.validate()?;
    if grid.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(CalibrationError::Grid("grid must be sorted".into()));
    }
    Ok(parallelism.map(grid.len(), |i| {
        let mut xi = *fixed;
        param.set(&mut xi, grid[i]);
        (grid[i], score(model, &xi, dataset, plant))
    }))
}

pub fn profile_csv(param: Param, rows: &[(f64, f64)]) -> String {
    let mut out = format!("{param},error\n");
    for (v, e) in rows {
        out.push_str(&format!("{v},{e}\n"));
    }
    out
}

/// Parses `lo:hi:step` into `lo, lo + step, ...` up to `hi`.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>, CalibrationError> {
    let err = || CalibrationError::Grid(spec.to_string());
    let parts: Vec<f64> = spec
        .split(':')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| err())?;
    let [lo, hi, step] = parts[..] else {
        return Err(err());
    };
    if !(step > 0.0) || !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(err());
    }
    let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|k| lo + k as f64 * step).collect())
}

/// Shape of the synthetic open-loop probing sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeConfig {
    pub duration: f64,
    /// Amplitude of the smooth multi-sine component (rad).
    pub sine_amplitude: f64,
    /// Lowest and highest sine frequency (Hz).
    pub frequencies: [f64; 2],
    pub sines_per_joint: usize,
    /// Target jumps of up to this size (rad) every `step_period` seconds.
    pub step_amplitude: f64,
    pub step_period: f64,
    /// Targets stay this far inside the joint limits (rad).
    pub limit_margin: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            duration: 30.0,
            sine_amplitude: 0.6,
            frequencies: [0.1, 0.3],
            sines_per_joint: 3,
            step_amplitude: 0.0,
            step_period: 1.5,
            limit_margin: 0.05,
        }
    }
}

/// Random multi-sine plus hold-and-jump targets around the nominal pose.
pub fn probe_sequence(model: &RobotModel, probe: &ProbeConfig, seed: u64) -> ActionSequence {
    use rand::Rng as _;
    let mut rng = seed::rng(seed, "calibration/probe");
    let n = (probe.duration / CONTROL_DT).round() as usize;
    let [f_lo, f_hi] = probe.frequencies;
    let sines: Vec<Vec<(f64, f64, f64)>> = (0..NUM_JOINTS)
        .map(|_| {
            (0..probe.sines_per_joint)
                .map(|_| {
                    let f = rng.random_range(f_lo..=f_hi);
                    let phase = rng.random_range(0.0..std::f64::consts::TAU);
                    let amp = probe.sine_amplitude / probe.sines_per_joint as f64 * rng.random_range(0.5..1.5);
                    (f, phase, amp)
                })
                .collect()
        })
        .collect();
    let steps_per_hold = ((probe.step_period / CONTROL_DT).round() as usize).max(1);
    let mut offsets = [0.0; NUM_JOINTS];
    let mut targets = Vec::with_capacity(n);
    for k in 0..n {
        if k % steps_per_hold == 0 && k > 0 && probe.step_amplitude > 0.0 {
            for o in offsets.iter_mut() {
                *o = rng.random_range(-probe.step_amplitude..=probe.step_amplitude);
            }
        }
        let t = k as f64 * CONTROL_DT;
        let mut q = [0.0; NUM_JOINTS];
        for (i, qi) in q.iter_mut().enumerate() {
            let lim = model.joint_limit(JointId::from_index(i));
            let wave: f64 = sines[i]
                .iter()
                .map(|(f, ph, a)| a * (std::f64::consts::TAU * f * t + ph).sin())
                .sum();
            let (lo, hi) = (lim.min + probe.limit_margin, lim.max - probe.limit_margin);
            *qi = (model.nominal_pose.0[i] + offsets[i] + wave).clamp(lo, hi);
        }
        targets.push(JointVector(q));
    }
    ActionSequence { targets }
}

/// Plant trace at `truth` plus i.i.d. Gaussian noise of `noise_sigma` rad.
pub fn synthesize_dataset(
    model: &RobotModel,
    truth: &SimParams,
    actions: ActionSequence,
    plant: &PlantConfig,
    noise_sigma: f64,
    seed: u64,
) -> Result<CalibrationDataset, CalibrationError> {
    let run = simulate(model, truth, &actions, plant, RunOptions::default())?;
    let mut trace = run.trace;
    if noise_sigma > 0.0 {
        let normal = Normal::new(0.0, noise_sigma).map_err(|e| CalibrationError::Dataset(e.to_string()))?;
        let mut rng = seed::rng(seed, "calibration/noise");
        for s in trace.samples.iter_mut() {
            for v in s.0.iter_mut() {
                *v += normal.sample(&mut rng);
            }
        }
    }
    CalibrationDataset::new(
        actions,
        trace,
        DatasetMeta {
            robot_id: model.name.clone(),
            date: String::new(),
            notes: format!("synthetic, noise sigma {noise_sigma} rad, seed {seed}"),
        },
    )
}
