//! Per-sensor abstraction selection by exhaustive search over the codebook.
//!
//! Each candidate template is tentatively appended to the sensor's own
//! constraint store (the store the Actor holds for this sensor), decoded, and
//! scored by `J = β·D + (1−β)·H + λ(θ)` with `D` the path-weighted distortion
//! over sensed cells, `H` the path-weighted uncertainty over the whole map and
//! `λ(θ) = c_λ·k`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{compress, instantiate, AbstractionMessage, CodecError, Codebook, InstantiatedAbstraction};
use crate::estimation::{ConstraintStore, DecodeError, DecodeParams, DecoderState, EstimateField, EstimationError, UncertaintyField};
use crate::grid::{CellIndex, Footprint, GridMap};
use crate::planner::PathWeightField;

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("codebook is empty")]
    EmptyCodebook,
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Estimation(#[from] EstimationError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    /// Distortion/uncertainty trade-off in `[0,1]`.
    pub beta: f64,
    /// Communication cost per retained group.
    pub c_lambda: f64,
}

impl Default for EncoderParams {
    fn default() -> Self {
        Self { beta: 0.9, c_lambda: 0.05 }
    }
}

impl EncoderParams {
    pub fn lambda(&self, k: usize) -> f64 {
        self.c_lambda * k as f64
    }
}

/// What one sensor knows: the true values it has sensed and the constraints
/// its own transmissions have placed at the Actor.
#[derive(Debug, Clone)]
pub struct SensorBelief {
    pub sensed: BTreeMap<usize, f64>,
    pub store: ConstraintStore,
    decoder: DecoderState,
    pub variance_included: bool,
}

impl SensorBelief {
    pub fn new(n: usize, prior: f64, variance_included: bool) -> Self {
        Self {
            sensed: BTreeMap::new(),
            store: ConstraintStore::new(n),
            decoder: DecoderState::uniform(n, prior),
            variance_included,
        }
    }

    pub fn sense(&mut self, map: &GridMap, fp: &Footprint) {
        for c in &fp.cells {
            self.sensed.insert(map.flat(*c), map.value(*c));
        }
    }

    pub fn commit(&mut self, abstraction: &InstantiatedAbstraction, message: &AbstractionMessage) -> Result<(), EstimationError> {
        self.store.add_message(abstraction, message)
    }

    /// Records the chosen message and keeps its solver iterate for warm starts.
    pub fn commit_selection(&mut self, selection: &Selection) -> Result<(), EstimationError> {
        self.commit(&selection.abstraction, &selection.message)?;
        self.decoder = selection.decoder.clone();
        Ok(())
    }

    pub fn decoder(&self) -> &DecoderState {
        &self.decoder
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateEvaluation {
    pub theta: usize,
    pub k: usize,
    pub distortion: f64,
    pub uncertainty: f64,
    pub lambda: f64,
    pub cost: f64,
    pub estimate: Vec<f64>,
    pub h: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Selection {
    pub theta: usize,
    pub abstraction: InstantiatedAbstraction,
    pub message: AbstractionMessage,
    pub evaluations: Vec<CandidateEvaluation>,
    decoder: DecoderState,
}

/// `Σ_{sensed} (W_j·(x̃_j − x̂_j))²`.
pub fn weighted_distortion(sensed: &BTreeMap<usize, f64>, estimate: &[f64], weights: &PathWeightField) -> f64 {
    sensed
        .iter()
        .map(|(&j, &x)| {
            let e = weights.values[j] * (x - estimate[j]);
            e * e
        })
        .sum()
}

/// `Σ_j (W_j·h_j)²`.
pub fn weighted_uncertainty(h: &UncertaintyField, weights: &PathWeightField) -> f64 {
    h.values.iter().zip(&weights.values).map(|(h, w)| (w * h) * (w * h)).sum()
}

pub fn select_abstraction(
    belief: &SensorBelief,
    codebook: &Codebook,
    map: &GridMap,
    center: CellIndex,
    weights: &PathWeightField,
    params: &EncoderParams,
    decode: &DecodeParams,
) -> Result<Selection, EncoderError> {
    if codebook.is_empty() {
        return Err(EncoderError::EmptyCodebook);
    }
    let mut best: Option<(f64, Selection)> = None;
    let mut evaluations = Vec::with_capacity(codebook.len());
    for template in codebook.templates() {
        let abstraction = instantiate(template, map, center);
        let mut message = compress(|j| belief.sensed.get(&j).copied(), &abstraction, map.width())?;
        if !belief.variance_included {
            message = message.without_variance();
        }
        let mut store = belief.store.clone();
        store.add_message(&abstraction, &message)?;
        let mut decoder = belief.decoder.clone();
        let estimate = decoder.solve(&store, decode).or_else(accept_capped)?;
        let h = store.uncertainty();
        let distortion = weighted_distortion(&belief.sensed, &estimate.values, weights);
        let uncertainty = weighted_uncertainty(&h, weights);
        let k = abstraction.k();
        let lambda = params.lambda(k);
        let cost = params.beta * distortion + (1.0 - params.beta) * uncertainty + lambda;
        evaluations.push(CandidateEvaluation {
            theta: template.id,
            k,
            distortion,
            uncertainty,
            lambda,
            cost,
            estimate: estimate.values,
            h: h.values,
        });
        if best.as_ref().is_none_or(|(c, _)| cost < *c) {
            best = Some((
                cost,
                Selection { theta: template.id, abstraction, message, evaluations: Vec::new(), decoder },
            ));
        }
    }
    let (_, mut selection) = best.expect("codebook is non-empty");
    selection.evaluations = evaluations;
    Ok(selection)
}

fn accept_capped(e: DecodeError) -> Result<EstimateField, DecodeError> {
    match e {
        DecodeError::NotConverged { estimate } => Ok(*estimate),
        other => Err(other),
    }
}
