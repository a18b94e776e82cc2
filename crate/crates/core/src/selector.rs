//! Sensor action selection: task-driven reward, per-sensor local MDPs solved
//! by value iteration, sequential overlap removal across sensors, and the
//! greedy one-step alternative.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimation::UncertaintyField;
use crate::grid::{footprint, Action, CellIndex, GridMap};
use crate::planner::PathWeightField;

#[derive(Debug, Error, PartialEq)]
pub enum SelectorError {
    #[error("weights have {weights} cells, uncertainty has {uncertainty}")]
    LengthMismatch { weights: usize, uncertainty: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectorParams {
    /// Chebyshev radius ℓ of the local state neighbourhood.
    pub radius: usize,
    pub gamma: f64,
    pub actions: Vec<Action>,
    pub window_w: usize,
    pub window_h: usize,
}

impl Default for SelectorParams {
    fn default() -> Self {
        Self { radius: 1, gamma: 0.9, actions: Action::ALL.to_vec(), window_w: 7, window_h: 7 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RewardField {
    pub values: Vec<f64>,
}

/// `R = W ∘ h`.
pub fn task_reward(weights: &PathWeightField, h: &UncertaintyField) -> Result<RewardField, SelectorError> {
    if weights.values.len() != h.values.len() {
        return Err(SelectorError::LengthMismatch { weights: weights.values.len(), uncertainty: h.values.len() });
    }
    Ok(RewardField { values: weights.values.iter().zip(&h.values).map(|(w, h)| w * h).collect() })
}

/// Sum of `R` over the cells of a sensor window.
pub fn state_reward(map: &GridMap, cells: &[CellIndex], reward: &RewardField) -> f64 {
    cells.iter().map(|c| reward.values[map.flat(*c)]).sum()
}

fn window_reward(map: &GridMap, center: CellIndex, reward: &RewardField, params: &SelectorParams) -> f64 {
    let fp = footprint(map, center, params.window_w, params.window_h).expect("odd window inside map");
    state_reward(map, &fp.cells, reward)
}

/// Deterministic local MDP for one sensor: states are positions within the
/// Chebyshev neighbourhood, moves leaving it (or the map) self-loop.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorMdp {
    pub states: Vec<CellIndex>,
    pub rewards: Vec<f64>,
    /// `next[s][u]` indexed by position in `actions`.
    pub next: Vec<Vec<usize>>,
    pub actions: Vec<Action>,
    /// Index of the sensor's current position in `states`.
    pub current: usize,
}

impl SensorMdp {
    pub fn build(map: &GridMap, position: CellIndex, reward: &RewardField, params: &SelectorParams) -> Self {
        let l = params.radius as i64;
        let mut states = Vec::new();
        for dr in -l..=l {
            for dc in -l..=l {
                if let Some(c) = map.offset(position, dr, dc) {
                    states.push(c);
                }
            }
        }
        let index_of = |c: CellIndex| states.binary_search(&c).ok();
        let next = states
            .iter()
            .enumerate()
            .map(|(s, &cell)| {
                params
                    .actions
                    .iter()
                    .map(|&a| map.step(cell, a).and_then(index_of).unwrap_or(s))
                    .collect()
            })
            .collect();
        let rewards = states.iter().map(|&c| window_reward(map, c, reward, params)).collect();
        let current = index_of(position).expect("position is in its own neighbourhood");
        Self { states, rewards, next, actions: params.actions.clone(), current }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MdpSolution {
    pub values: Vec<f64>,
    pub policy: Vec<Action>,
    pub iterations: usize,
    /// `‖V − T(V)‖∞` of the returned values.
    pub residual: f64,
}

/// Relative gap below which two action values count as tied.
pub const TIE_TOLERANCE: f64 = 1e-8;

/// Solves `V(s) = R(s) + γ·max_u V(next(s,u))`.
///
/// Rewards are scaled by their maximum before iterating so the stopping rule
/// and tie handling do not depend on the reward magnitude; ties resolve to
/// the first action in order.
pub fn value_iteration(mdp: &SensorMdp, gamma: f64) -> MdpSolution {
    assert!(gamma > 0.0 && gamma < 1.0, "discount must lie in (0,1)");
    let n = mdp.len();
    let scale = mdp.rewards.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    if scale == 0.0 {
        return MdpSolution { values: vec![0.0; n], policy: vec![mdp.actions[0]; n], iterations: 0, residual: 0.0 };
    }
    let r: Vec<f64> = mdp.rewards.iter().map(|x| x / scale).collect();
    let tol = 1e-9 * (1.0 / scale).min(1.0);
    let mut v = r.clone();
    let mut iterations = 0;
    loop {
        iterations += 1;
        let nv: Vec<f64> = (0..n)
            .map(|s| r[s] + gamma * mdp.next[s].iter().map(|&t| v[t]).fold(f64::NEG_INFINITY, f64::max))
            .collect();
        let delta = nv.iter().zip(&v).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        v = nv;
        if delta <= tol {
            break;
        }
    }
    let policy = (0..n)
        .map(|s| {
            let q: Vec<f64> = mdp.next[s].iter().map(|&t| v[t]).collect();
            mdp.actions[first_near_max(&q)]
        })
        .collect();
    let values: Vec<f64> = v.iter().map(|x| x * scale).collect();
    let residual = bellman_residual(mdp, gamma, &values);
    MdpSolution { values, policy, iterations, residual }
}

/// Index of the first entry within `TIE_TOLERANCE` (relative) of the maximum.
pub fn first_near_max(q: &[f64]) -> usize {
    let best = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let slack = TIE_TOLERANCE * best.abs().max(1.0);
    q.iter().position(|&x| x >= best - slack).unwrap_or(0)
}

pub fn bellman_residual(mdp: &SensorMdp, gamma: f64, values: &[f64]) -> f64 {
    (0..mdp.len())
        .map(|s| {
            let best = mdp.next[s].iter().map(|&t| values[t]).fold(f64::NEG_INFINITY, f64::max);
            (mdp.rewards[s] + gamma * best - values[s]).abs()
        })
        .fold(0.0, f64::max)
}

/// Sequential per-sensor selection: each sensor's MDP ignores reward at
/// states already claimed by the neighbourhoods of sensors before it.
pub fn select_actions(map: &GridMap, sensors: &[CellIndex], reward: &RewardField, params: &SelectorParams) -> Vec<Action> {
    let mut considered: BTreeSet<CellIndex> = BTreeSet::new();
    let mut actions = Vec::with_capacity(sensors.len());
    for &pos in sensors {
        let mut mdp = SensorMdp::build(map, pos, reward, params);
        for (s, cell) in mdp.states.iter().enumerate() {
            if considered.contains(cell) {
                mdp.rewards[s] = 0.0;
            }
        }
        let sol = value_iteration(&mdp, params.gamma);
        actions.push(sol.policy[mdp.current]);
        considered.extend(mdp.states.iter().copied());
    }
    actions
}

/// Action whose next window collects the most reward; first in order on ties.
pub fn greedy_select(map: &GridMap, position: CellIndex, reward: &RewardField, params: &SelectorParams) -> Action {
    let mut best = (f64::NEG_INFINITY, params.actions[0]);
    for &a in &params.actions {
        let next = map.step(position, a).unwrap_or(position);
        let r = window_reward(map, next, reward, params);
        if r > best.0 {
            best = (r, a);
        }
    }
    best.1
}
