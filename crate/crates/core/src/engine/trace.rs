//! Per-run records, CSV serialization and graymap snapshots.

use std::fmt::Write as _;
use std::hash::Hasher;

use fnv::FnvHasher;

use super::scenario::Mode;
use crate::codec::AbstractionMessage;
use crate::grid::{Action, CellIndex};

#[derive(Debug, Clone, PartialEq)]
pub struct SensorStep {
    pub position: CellIndex,
    pub action: Option<Action>,
    /// Template id; 0 for value-only transmissions, `None` when silent.
    pub theta: Option<usize>,
    pub bits: u64,
    pub active: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoggedMessage {
    pub t: usize,
    pub sensor: usize,
    pub message: AbstractionMessage,
    pub bits: u64,
    /// Cells sent as raw values, one per group, for value-only transmissions.
    pub direct: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: usize,
    /// Actor position after its move this round.
    pub actor: CellIndex,
    pub path: Vec<CellIndex>,
    pub sensors: Vec<SensorStep>,
    pub estimate_hash: u64,
    pub h_hash: u64,
    pub cost_so_far: f64,
}

/// Fields the Actor computed at one timestep, before its own move.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSnapshot {
    pub t: usize,
    pub estimate: Vec<f64>,
    pub h: Vec<f64>,
    pub weights: Vec<f64>,
    pub reward: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Field {
    Estimate,
    Uncertainty,
    Weights,
    Reward,
}

impl Field {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "x" | "estimate" => Some(Field::Estimate),
            "h" | "uncertainty" => Some(Field::Uncertainty),
            "w" | "weights" => Some(Field::Weights),
            "r" | "reward" => Some(Field::Reward),
            _ => None,
        }
    }

    pub fn short(self) -> &'static str {
        match self {
            Field::Estimate => "x",
            Field::Uncertainty => "h",
            Field::Weights => "w",
            Field::Reward => "r",
        }
    }
}

impl FieldSnapshot {
    pub fn get(&self, field: Field) -> &[f64] {
        match field {
            Field::Estimate => &self.estimate,
            Field::Uncertainty => &self.h,
            Field::Weights => &self.weights,
            Field::Reward => &self.reward,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioTrace {
    pub seed: u64,
    pub mode: Mode,
    pub width: usize,
    pub height: usize,
    pub steps: Vec<StepRecord>,
    pub messages: Vec<LoggedMessage>,
    pub snapshots: Vec<FieldSnapshot>,
    /// Accumulated true traversal cost over every visited cell, revisits included.
    pub cost: f64,
    pub bits_per_sensor: Vec<u64>,
    pub reached_goal: bool,
    /// The run hit the step cap before reaching the goal.
    pub capped: bool,
    /// Decodes that stopped at the sweep cap.
    pub decode_flags: usize,
}

impl ScenarioTrace {
    pub fn total_bits(&self) -> u64 {
        self.bits_per_sensor.iter().sum()
    }

    pub fn actor_steps(&self) -> usize {
        self.steps.len()
    }

    pub fn summary_line(&self) -> String {
        format!(
            "seed={} mode={} cost={:.6} bits={} steps={}",
            self.seed,
            self.mode.name(),
            self.cost,
            self.total_bits(),
            self.actor_steps()
        )
    }

    pub fn to_csv(&self) -> String {
        let ns = self.bits_per_sensor.len();
        let mut out = String::from("t,actor_row,actor_col");
        for i in 0..ns {
            write!(out, ",s{i}_row,s{i}_col,s{i}_theta,s{i}_bits").unwrap();
        }
        out.push_str(",path_len,cost_so_far,x_hash,h_hash\n");
        for step in &self.steps {
            write!(out, "{},{},{}", step.t, step.actor.row, step.actor.col).unwrap();
            for s in &step.sensors {
                let theta = s.theta.map(|t| t.to_string()).unwrap_or_default();
                write!(out, ",{},{},{},{}", s.position.row, s.position.col, theta, s.bits).unwrap();
            }
            writeln!(
                out,
                ",{},{},{:016x},{:016x}",
                step.path.len(),
                step.cost_so_far,
                step.estimate_hash,
                step.h_hash
            )
            .unwrap();
        }
        out
    }

    pub fn snapshot(&self, t: usize) -> Option<&FieldSnapshot> {
        self.snapshots.iter().find(|s| s.t == t)
    }
}

pub fn hash_field(values: &[f64]) -> u64 {
    let mut h = FnvHasher::default();
    for v in values {
        h.write_u64(v.to_bits());
    }
    h.finish()
}

/// Binary graymap, darker for larger values; values are clamped to `[0,1]`.
pub fn to_pgm(values: &[f64], width: usize, height: usize) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(values.iter().map(|v| ((1.0 - v.clamp(0.0, 1.0)) * 255.0).round() as u8));
    out
}
