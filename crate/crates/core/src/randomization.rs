//! Per-episode domain randomization. Every row of a [`RandomizationTable`] is
//! an independent uniform interval; a draw is a plain record of values that
//! an environment is built from.

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibration::{CalibrationReport, Param};
use crate::exec::Parallelism;
use crate::kv::{KvDocument, KvError, KvWriter};
use crate::motor_plant::SimParams;
use crate::robot_model::SegmentMasses;
use crate::seed;

pub const TABLE_FORMAT: &str = "quadbiped-randomization/1";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RandomizationError {
    #[error(transparent)]
    Kv(#[from] KvError),
    #[error("row {row}: {message}")]
    InvalidRow { row: Row, message: String },
    #[error("recommended range for {param} is unusable: [{lo}, {hi}]")]
    BadReport { param: Param, lo: f64, hi: f64 },
}

/// One randomized quantity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Row {
    JointFriction,
    JointDamping,
    BodyFriction,
    Restitution,
    BaseMassOffset,
    HipMassOffset,
    ThighMassOffset,
    CalfMassOffset,
    FootMassOffset,
    ComDisplacement,
    PdFraction,
    Delay,
}

impl Row {
    pub const ALL: [Row; 12] = [
        Row::JointFriction,
        Row::JointDamping,
        Row::BodyFriction,
        Row::Restitution,
        Row::BaseMassOffset,
        Row::HipMassOffset,
        Row::ThighMassOffset,
        Row::CalfMassOffset,
        Row::FootMassOffset,
        Row::ComDisplacement,
        Row::PdFraction,
        Row::Delay,
    ];

    pub fn key(self) -> &'static str {
        match self {
            Row::JointFriction => "joint_friction",
            Row::JointDamping => "joint_damping",
            Row::BodyFriction => "body_friction",
            Row::Restitution => "restitution",
            Row::BaseMassOffset => "base_mass_offset",
            Row::HipMassOffset => "hip_mass_offset",
            Row::ThighMassOffset => "thigh_mass_offset",
            Row::CalfMassOffset => "calf_mass_offset",
            Row::FootMassOffset => "foot_mass_offset",
            Row::ComDisplacement => "com_displacement",
            Row::PdFraction => "pd_fraction",
            Row::Delay => "delay",
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            Row::JointFriction => "N m",
            Row::JointDamping => "N m s/rad",
            Row::BodyFriction | Row::Restitution | Row::PdFraction => "1",
            Row::BaseMassOffset
            | Row::HipMassOffset
            | Row::ThighMassOffset
            | Row::CalfMassOffset
            | Row::FootMassOffset => "kg",
            Row::ComDisplacement => "m",
            Row::Delay => "s",
        }
    }

    /// Number of independent draws per episode (the COM shift is per axis).
    pub fn draws(self) -> usize {
        if self == Row::ComDisplacement {
            3
        } else {
            1
        }
    }
}

impl fmt::Display for Row {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for Row {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Row::ALL
            .into_iter()
            .find(|r| r.key() == s)
            .ok_or_else(|| format!("unknown randomization row `{s}`"))
    }
}

/// Closed interval `[lo, hi]` for every [`Row`], in `Row::ALL` order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomizationTable {
    ranges: [[f64; 2]; 12],
}

impl Default for RandomizationTable {
    /// The published ranges.
    fn default() -> Self {
        Self {
            ranges: [
                [0.03, 0.08],
                [0.02, 0.06],
                [1.0, 3.0],
                [0.0, 0.4],
                [-0.5, 0.5],
                [0.0, 0.1],
                [-0.05, 0.05],
                [-0.05, 0.05],
                [0.0, 0.01],
                [-0.01, 0.01],
                [0.8, 1.2],
                [0.005, 0.03],
            ],
        }
    }
}

impl RandomizationTable {
    pub fn range(&self, row: Row) -> [f64; 2] {
        self.ranges[row as usize]
    }

    pub fn with_range(mut self, row: Row, range: [f64; 2]) -> Result<Self, RandomizationError> {
        check_row(row, range)?;
        self.ranges[row as usize] = range;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), RandomizationError> {
        Row::ALL.into_iter().try_for_each(|row| check_row(row, self.range(row)))
    }

    /// Parses a table. Every row must be present; there is no silent fallback.
    pub fn from_text(text: &str) -> Result<Self, RandomizationError> {
        let doc = KvDocument::parse(text)?;
        let mut r = doc.reader();
        let format = r.str("format")?;
        if format != TABLE_FORMAT {
            return Err(r.invalid("format", format!("unsupported format `{format}`, expected `{TABLE_FORMAT}`")).into());
        }
        let mut ranges = [[0.0; 2]; 12];
        for row in Row::ALL {
            if !r.has(row.key()) {
                let (line, _) = r.locate("format");
                return Err(KvError {
                    line,
                    column: 1,
                    message: format!("missing row `{}`", row.key()),
                }
                .into());
            }
            let range = r.numbers::<2>(row.key())?;
            if let Err(RandomizationError::InvalidRow { message, .. }) = check_row(row, range) {
                return Err(r.invalid(row.key(), message).into());
            }
            ranges[row as usize] = range;
        }
        r.finish()?;
        Ok(Self { ranges })
    }

    pub fn to_text(&self) -> String {
        let mut w = KvWriter::new();
        w.comment("Domain randomization ranges, lo, hi.").str("format", TABLE_FORMAT).blank();
        for row in Row::ALL {
            w.comment(row.unit());
            w.numbers(row.key(), &self.range(row));
        }
        w.finish()
    }
}

fn check_row(row: Row, [lo, hi]: [f64; 2]) -> Result<(), RandomizationError> {
    let bad = |message: &str| {
        Err(RandomizationError::InvalidRow {
            row,
            message: format!("[{lo}, {hi}] {message}"),
        })
    };
    if !lo.is_finite() || !hi.is_finite() {
        return bad("is not finite");
    }
    if lo > hi {
        return bad("has lo > hi");
    }
    match row {
        Row::Restitution if lo < 0.0 || hi > 1.0 => bad("must lie in [0, 1]"),
        Row::PdFraction if lo <= 0.0 => bad("must be positive"),
        Row::JointFriction | Row::JointDamping | Row::BodyFriction | Row::Delay if lo < 0.0 => {
            bad("must be non-negative")
        }
        _ => Ok(()),
    }
}

/// One episode's physical parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvParams {
    pub seed: u64,
    pub joint_friction: f64,
    pub joint_damping: f64,
    pub body_friction: f64,
    pub restitution: f64,
    /// Base, hip, thigh, calf and foot mass offsets (kg).
    pub mass_offsets: [f64; 5],
    pub com_displacement: [f64; 3],
    /// Common multiplier on K_p and K_d.
    pub pd_fraction: f64,
    pub delay: f64,
}

impl EnvParams {
    /// The joint-level subset as plant parameters. Limb mass offsets become
    /// multipliers on `masses`; segments with zero nominal mass keep scale 1.
    pub fn sim_params(&self, masses: &SegmentMasses) -> SimParams {
        let nominal = [masses.hip, masses.thigh, masses.calf, masses.foot];
        let mut mass_scales = [1.0; 4];
        for (s, (m, off)) in mass_scales.iter_mut().zip(nominal.iter().zip(&self.mass_offsets[1..])) {
            if *m > 0.0 {
                *s = ((m + off) / m).max(0.0);
            }
        }
        SimParams {
            joint_friction: self.joint_friction,
            joint_damping: self.joint_damping,
            mass_scales,
            delay: self.delay,
            pd_scale: self.pd_fraction,
        }
    }
}

fn uniform(rng: &mut seed::Rng, [lo, hi]: [f64; 2]) -> f64 {
    if hi > lo {
        lo + (hi - lo) * rng.random::<f64>()
    } else {
        lo
    }
}

/// Independent uniform draws for every row. The same `(table, seed)` always
/// yields the same record.
pub fn sample_env_params(table: &RandomizationTable, seed: u64) -> EnvParams {
    let mut rng = seed::rng(seed, "randomization");
    let mut draw = |row: Row| uniform(&mut rng, table.range(row));
    let joint_friction = draw(Row::JointFriction);
    let joint_damping = draw(Row::JointDamping);
    let body_friction = draw(Row::BodyFriction);
    let restitution = draw(Row::Restitution);
    let mass_offsets = [
        draw(Row::BaseMassOffset),
        draw(Row::HipMassOffset),
        draw(Row::ThighMassOffset),
        draw(Row::CalfMassOffset),
        draw(Row::FootMassOffset),
    ];
    let com_displacement = [draw(Row::ComDisplacement), draw(Row::ComDisplacement), draw(Row::ComDisplacement)];
    EnvParams {
        seed,
        joint_friction,
        joint_damping,
        body_friction,
        restitution,
        mass_offsets,
        com_displacement,
        pd_fraction: draw(Row::PdFraction),
        delay: draw(Row::Delay),
    }
}

/// `count` environments, environment `i` seeded with `derive_indexed(seed, "env", i)`.
pub fn sample_batch(table: &RandomizationTable, seed: u64, count: usize, par: Parallelism) -> Vec<EnvParams> {
    par.map(count, |i| sample_env_params(table, seed::derive_indexed(seed, "env", i as u64)))
}

/// Value of `row` in a record; for the COM shift, the `axis` component.
pub fn row_value(p: &EnvParams, row: Row, axis: usize) -> f64 {
    match row {
        Row::JointFriction => p.joint_friction,
        Row::JointDamping => p.joint_damping,
        Row::BodyFriction => p.body_friction,
        Row::Restitution => p.restitution,
        Row::BaseMassOffset => p.mass_offsets[0],
        Row::HipMassOffset => p.mass_offsets[1],
        Row::ThighMassOffset => p.mass_offsets[2],
        Row::CalfMassOffset => p.mass_offsets[3],
        Row::FootMassOffset => p.mass_offsets[4],
        Row::ComDisplacement => p.com_displacement[axis],
        Row::PdFraction => p.pd_fraction,
        Row::Delay => p.delay,
    }
}

/// Builds a table from a calibration report. Parameters that the report
/// actually searched (non-degenerate box interval) take its recommended
/// range; everything else comes from `defaults`. The tied limb mass scale is
/// converted to per-segment offsets with the nominal `masses`.
pub fn table_from_report(
    report: Option<&CalibrationReport>,
    defaults: &RandomizationTable,
    masses: &SegmentMasses,
) -> Result<RandomizationTable, RandomizationError> {
    defaults.validate()?;
    let Some(report) = report else {
        return Ok(*defaults);
    };
    let mut table = *defaults;
    for param in Param::ALL {
        let [blo, bhi] = report.param_box.range(param);
        if !(bhi > blo) {
            continue;
        }
        let [lo, hi] = report.recommended_ranges.range(param);
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(RandomizationError::BadReport { param, lo, hi });
        }
        let reject = |_| RandomizationError::BadReport { param, lo, hi };
        table = match param {
            Param::JointFriction => table.with_range(Row::JointFriction, [lo, hi]).map_err(reject)?,
            Param::JointDamping => table.with_range(Row::JointDamping, [lo, hi]).map_err(reject)?,
            Param::Delay => table.with_range(Row::Delay, [lo, hi]).map_err(reject)?,
            Param::PdScale => table.with_range(Row::PdFraction, [lo, hi]).map_err(reject)?,
            Param::MassScale => {
                let rows = [
                    (Row::HipMassOffset, masses.hip),
                    (Row::ThighMassOffset, masses.thigh),
                    (Row::CalfMassOffset, masses.calf),
                    (Row::FootMassOffset, masses.foot),
                ];
                let mut t = table;
                for (row, m) in rows {
                    t = t.with_range(row, [(lo - 1.0) * m, (hi - 1.0) * m]).map_err(reject)?;
                }
                t
            }
        };
    }
    Ok(table)
}
