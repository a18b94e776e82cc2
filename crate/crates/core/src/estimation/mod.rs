//! Set-membership estimation: accumulated measurement constraints, the
//! per-cell compression-uncertainty bound, and the minimum-distance decoder.

mod dykstra;

use std::collections::{BTreeMap, HashSet};

use thiserror::Error;

use crate::codec::{AbstractionMessage, InstantiatedAbstraction};

pub use dykstra::{attainable_range, decode, project, DecodeError, DecodeParams, DecoderState, EstimateField};

#[derive(Debug, Error, PartialEq)]
pub enum EstimationError {
    #[error("message (theta {msg_theta}, at {msg_center}) does not match abstraction (theta {abs_theta}, at {abs_center})")]
    Mismatch { msg_theta: usize, msg_center: String, abs_theta: usize, abs_center: String },
    #[error("message has {got} groups, abstraction has {expected}")]
    GroupCount { got: usize, expected: usize },
    #[error("observed value {0} outside [0,1]")]
    OutOfRange(f64),
    #[error("cell {cell} re-observed as {new}, previously {old}")]
    StaticConflict { cell: usize, old: f64, new: f64 },
    #[error("cell {0} outside the store")]
    OutOfStore(usize),
}

/// One convex measurement set. Cell lists are flat indices.
#[derive(Debug, Clone, PartialEq)]
pub enum Constraint {
    /// `mean(x_S) = mean`.
    Equality { cells: Vec<usize>, mean: f64 },
    /// `Σ_S x_j² ≤ bound`.
    Ball { cells: Vec<usize>, bound: f64 },
    /// An equality and a ball over the same group, kept together because
    /// their intersection has a closed-form projection.
    GroupDisk { cells: Vec<usize>, mean: f64, bound: f64 },
}

impl Constraint {
    pub fn cells(&self) -> &[usize] {
        match self {
            Constraint::Equality { cells, .. }
            | Constraint::Ball { cells, .. }
            | Constraint::GroupDisk { cells, .. } => cells,
        }
    }

    fn key(&self) -> (u8, Vec<usize>, u64, u64) {
        match self {
            Constraint::Equality { cells, mean } => (0, cells.clone(), mean.to_bits(), 0),
            Constraint::Ball { cells, bound } => (1, cells.clone(), 0, bound.to_bits()),
            Constraint::GroupDisk { cells, mean, bound } => (2, cells.clone(), mean.to_bits(), bound.to_bits()),
        }
    }
}

/// `(o_i, ν_i)` pair: every feasible value of a member cell lies in `[o − ν, o + ν]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub mean: f64,
    pub nu: f64,
}

/// Monotone (append-only) store of an agent's measurement constraints over
/// `n` cells, with the implicit `[0,1]` box.
#[derive(Debug, Clone)]
pub struct ConstraintStore {
    n: usize,
    constraints: Vec<Constraint>,
    registry: Vec<Vec<Interval>>,
    // running min(o+ν) and max(o−ν) per cell
    upper: Vec<f64>,
    lower: Vec<f64>,
    observed: BTreeMap<usize, f64>,
    seen: HashSet<(u8, Vec<usize>, u64, u64)>,
}

impl ConstraintStore {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            constraints: Vec::new(),
            registry: vec![Vec::new(); n],
            upper: vec![f64::INFINITY; n],
            lower: vec![f64::NEG_INFINITY; n],
            observed: BTreeMap::new(),
            seen: HashSet::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    /// Equality rows `(cells, target mean)`, including the mean half of group disks.
    pub fn equalities(&self) -> impl Iterator<Item = (&[usize], f64)> {
        self.constraints.iter().filter_map(|c| match c {
            Constraint::Equality { cells, mean } | Constraint::GroupDisk { cells, mean, .. } => {
                Some((cells.as_slice(), *mean))
            }
            Constraint::Ball { .. } => None,
        })
    }

    /// Ball rows `(cells, Σx² bound)`, including the quadratic half of group disks.
    pub fn balls(&self) -> impl Iterator<Item = (&[usize], f64)> {
        self.constraints.iter().filter_map(|c| match c {
            Constraint::Ball { cells, bound } | Constraint::GroupDisk { cells, bound, .. } => {
                Some((cells.as_slice(), *bound))
            }
            Constraint::Equality { .. } => None,
        })
    }

    pub fn intervals(&self, cell: usize) -> &[Interval] {
        &self.registry[cell]
    }

    pub fn observed(&self) -> &BTreeMap<usize, f64> {
        &self.observed
    }

    /// Implied per-cell bounds `[max(o−ν), min(o+ν)] ∩ [0,1]`.
    pub fn cell_bounds(&self, cell: usize) -> (f64, f64) {
        (self.lower[cell].max(0.0), self.upper[cell].min(1.0))
    }

    fn push(&mut self, c: Constraint) -> bool {
        debug_assert!(c.cells().iter().all(|&j| j < self.n));
        if self.seen.insert(c.key()) {
            self.constraints.push(c);
            true
        } else {
            false
        }
    }

    fn register(&mut self, cells: &[usize], iv: Interval) {
        for &j in cells {
            self.registry[j].push(iv);
            self.upper[j] = self.upper[j].min(iv.mean + iv.nu);
            self.lower[j] = self.lower[j].max(iv.mean - iv.nu);
        }
    }

    /// Raw equality `mean(x_S) = mean`; no interval is registered.
    pub fn add_equality(&mut self, cells: Vec<usize>, mean: f64) -> bool {
        self.push(Constraint::Equality { cells, mean })
    }

    /// Raw ball `Σ_S x² ≤ bound`; no interval is registered.
    pub fn add_ball(&mut self, cells: Vec<usize>, bound: f64) -> bool {
        self.push(Constraint::Ball { cells, bound: bound.max(0.0) })
    }

    pub fn add_direct_observation(&mut self, cell: usize, value: f64) -> Result<(), EstimationError> {
        if cell >= self.n {
            return Err(EstimationError::OutOfStore(cell));
        }
        if !(0.0..=1.0).contains(&value) {
            return Err(EstimationError::OutOfRange(value));
        }
        if let Some(&old) = self.observed.get(&cell) {
            if (old - value).abs() > 1e-12 {
                return Err(EstimationError::StaticConflict { cell, old, new: value });
            }
            return Ok(());
        }
        self.observed.insert(cell, value);
        // the box pin [v, v] carries the equality; no separate set is needed
        self.seen.insert((0, vec![cell], value.to_bits(), 0));
        self.register(&[cell], Interval { mean: value, nu: 0.0 });
        Ok(())
    }

    pub fn add_message(
        &mut self,
        abstraction: &InstantiatedAbstraction,
        message: &AbstractionMessage,
    ) -> Result<(), EstimationError> {
        if abstraction.theta != message.theta || abstraction.center != message.sensor_position {
            return Err(EstimationError::Mismatch {
                msg_theta: message.theta,
                msg_center: message.sensor_position.to_string(),
                abs_theta: abstraction.theta,
                abs_center: abstraction.center.to_string(),
            });
        }
        if abstraction.groups.len() != message.groups.len() {
            return Err(EstimationError::GroupCount {
                got: message.groups.len(),
                expected: abstraction.groups.len(),
            });
        }
        for (group, summary) in abstraction.groups.iter().zip(&message.groups) {
            let cells = &group.cells;
            let n_i = cells.len() as f64;
            let o = summary.mean;
            let (constraint, nu) = if message.variance_included {
                let v = summary.variance.max(0.0);
                (Constraint::GroupDisk { cells: cells.clone(), mean: o, bound: n_i * (o * o + v) }, (n_i * v).sqrt())
            } else {
                // worst-case variance of [0,1]-valued data with mean o
                (Constraint::Equality { cells: cells.clone(), mean: o }, (n_i * o * (1.0 - o)).sqrt())
            };
            let fresh = if cells.len() == 1 && nu == 0.0 {
                // singleton pinned exactly by its interval
                self.seen.insert(constraint.key())
            } else {
                self.push(constraint)
            };
            if fresh {
                self.register(cells, Interval { mean: o, nu });
            }
        }
        Ok(())
    }

    /// Per-cell bound `h_j = min(ν+o) + min(ν−o)`, clamped to `[0,1]`; 1 where
    /// nothing is known.
    pub fn uncertainty(&self) -> UncertaintyField {
        let values = (0..self.n)
            .map(|j| {
                if self.registry[j].is_empty() {
                    1.0
                } else {
                    (self.upper[j] - self.lower[j]).clamp(0.0, 1.0)
                }
            })
            .collect();
        UncertaintyField { values }
    }
}

/// Per-cell uncertainty bound in `[0,1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyField {
    pub values: Vec<f64>,
}

/// Straight evaluation of the bound from an interval list.
pub fn interval_bound(intervals: &[Interval]) -> f64 {
    if intervals.is_empty() {
        return 1.0;
    }
    let a = intervals.iter().map(|i| i.nu + i.mean).fold(f64::INFINITY, f64::min);
    let b = intervals.iter().map(|i| i.nu - i.mean).fold(f64::INFINITY, f64::min);
    (a + b).clamp(0.0, 1.0)
}
