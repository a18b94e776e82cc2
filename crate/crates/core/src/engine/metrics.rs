//! Batch runs and cost/bit ratios against paired baselines.

use std::fmt::Write as _;

use rayon::prelude::*;

use super::scenario::{Mode, Scenario, Variant};
use super::{run, EngineError, RunOptions};

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub seed: u64,
    pub label: String,
    pub mode: Mode,
    pub cost: f64,
    pub bits: u64,
    pub steps: usize,
    pub capped: bool,
    /// Cost over the paired uninformed run on the same map and endpoints.
    pub r_cost: f64,
    /// Bits over the reference variant's bits for the same seed; 0 when the reference sent none.
    pub r_bits: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariantSummary {
    pub label: String,
    pub mode: Mode,
    pub runs: usize,
    pub mean_cost: f64,
    pub mean_bits: f64,
    pub r_cost: f64,
    pub r_bits: f64,
    pub capped: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub records: Vec<RunRecord>,
    pub summaries: Vec<VariantSummary>,
    /// Label of the variant whose bits normalize every other variant.
    pub bits_reference: Option<String>,
}

impl MetricsReport {
    pub fn summary(&self, label: &str) -> Option<&VariantSummary> {
        self.summaries.iter().find(|s| s.label == label)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("seed,label,mode,cost,bits,steps,capped,r_cost,r_bits\n");
        for r in &self.records {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.seed,
                r.label,
                r.mode.name(),
                r.cost,
                r.bits,
                r.steps,
                r.capped,
                r.r_cost,
                r.r_bits
            )
            .unwrap();
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        let mut out = String::from("label,mode,runs,mean_cost,mean_bits,r_cost,r_bits,capped\n");
        for s in &self.summaries {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                s.label,
                s.mode.name(),
                s.runs,
                s.mean_cost,
                s.mean_bits,
                s.r_cost,
                s.r_bits,
                s.capped
            )
            .unwrap();
        }
        out
    }
}

struct Outcome {
    cost: f64,
    bits: u64,
    steps: usize,
    capped: bool,
}

fn outcome(s: &Scenario) -> Result<Outcome, EngineError> {
    let tr = run(s, RunOptions::default())?;
    Ok(Outcome { cost: tr.cost, bits: tr.total_bits(), steps: tr.actor_steps(), capped: tr.capped })
}

/// Runs every variant on every seed. Each seed also gets one uninformed run
/// that normalizes cost. Seeds execute in parallel; results keep seed order.
pub fn run_batch(template: &Scenario, variants: &[Variant], seeds: &[u64]) -> Result<MetricsReport, EngineError> {
    if variants.is_empty() || seeds.is_empty() {
        return Err(EngineError::Scenario("batch needs at least one variant and one seed".into()));
    }
    let per_seed: Vec<(f64, Vec<Outcome>)> = seeds
        .par_iter()
        .map(|&seed| {
            let mut base = template.clone();
            base.seed = seed;
            let uninformed = outcome(&Variant::of_mode(Mode::Uninformed).apply(&base))?;
            let outs = variants
                .iter()
                .map(|v| {
                    if v.mode == Mode::Uninformed {
                        Ok(Outcome { ..uninformed })
                    } else {
                        outcome(&v.apply(&base))
                    }
                })
                .collect::<Result<Vec<_>, EngineError>>()?;
            Ok((uninformed.cost, outs))
        })
        .collect::<Result<_, EngineError>>()?;

    // fully informed when present, else the variant with the most bits overall
    let reference = variants.iter().position(|v| v.mode == Mode::FullyInformed).or_else(|| {
        let totals: Vec<u64> = (0..variants.len()).map(|i| per_seed.iter().map(|(_, o)| o[i].bits).sum()).collect();
        let max = *totals.iter().max().expect("variants are non-empty");
        if max == 0 {
            None
        } else {
            totals.iter().position(|&t| t == max)
        }
    });

    let mut records = Vec::with_capacity(seeds.len() * variants.len());
    for (&seed, (c_max, outs)) in seeds.iter().zip(&per_seed) {
        let b_max = reference.map_or(0, |i| outs[i].bits);
        for (v, o) in variants.iter().zip(outs) {
            records.push(RunRecord {
                seed,
                label: v.label.clone(),
                mode: v.mode,
                cost: o.cost,
                bits: o.bits,
                steps: o.steps,
                capped: o.capped,
                r_cost: if *c_max > 0.0 { o.cost / c_max } else { 1.0 },
                r_bits: if b_max > 0 { o.bits as f64 / b_max as f64 } else { 0.0 },
            });
        }
    }
    let summaries = variants
        .iter()
        .map(|v| {
            let rs: Vec<_> = records.iter().filter(|r| r.label == v.label).collect();
            let m = rs.len() as f64;
            VariantSummary {
                label: v.label.clone(),
                mode: v.mode,
                runs: rs.len(),
                mean_cost: rs.iter().map(|r| r.cost).sum::<f64>() / m,
                mean_bits: rs.iter().map(|r| r.bits as f64).sum::<f64>() / m,
                r_cost: rs.iter().map(|r| r.r_cost).sum::<f64>() / m,
                r_bits: rs.iter().map(|r| r.r_bits).sum::<f64>() / m,
                capped: rs.iter().filter(|r| r.capped).count(),
            }
        })
        .collect();
    Ok(MetricsReport { records, summaries, bits_reference: reference.map(|i| variants[i].label.clone()) })
}
