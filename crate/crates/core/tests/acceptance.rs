//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`). It exits 0 even when a
//! criterion fails, so an honest miss stays visible without breaking the
//! workspace test run; set `ACCEPTANCE_STRICT=1` to turn failures into a
//! nonzero exit.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mapshare_core::codec::{bit_cost, compress, instantiate, AbstractionMessage, Codebook, CommModel, GroupSummary};
use mapshare_core::engine::metrics::run_batch;
use mapshare_core::engine::scenario::Scenario;
use mapshare_core::engine::{run, RunOptions, Snapshots};
use mapshare_core::estimation::{decode, ConstraintStore, DecodeParams};
use mapshare_core::grid::{CellIndex, GridMap};
use mapshare_core::planner::{shortest_path, PlannerParams};
use mapshare_core::selector::{bellman_residual, value_iteration, RewardField, SelectorParams, SensorMdp};

const DIRECTIONAL: &str = include_str!("../../../scenarios/directional.toml");

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn main() {
    let strict = std::env::var_os("ACCEPTANCE_STRICT").is_some();
    let mut failed = 0;
    let mut report = |name: &str, v: Verdict| {
        if !v.pass {
            failed += 1;
        }
        println!("criterion {name}: {} ({})", if v.pass { "PASS" } else { "FAIL" }, v.detail);
    };
    report("1 uncertainty bound soundness", timed(soundness));
    report("2 decoder vs reference solver", timed(decoder_reference));
    report("3 planner vs path enumeration", timed(planner_enumeration));
    report("4 value iteration vs policy enumeration", timed(policy_enumeration));
    report("5 bit accounting", timed(bit_accounting));
    report("6 uncertainty monotone in time", timed(monotone_uncertainty));
    let (seven, eight) = directional();
    report("7 directional experiment", seven);
    report("8 baseline ordering", eight);
    report("9 deterministic traces", timed(deterministic_traces));
    println!("acceptance: {failed} failing");
    if strict && failed > 0 {
        std::process::exit(1);
    }
}

fn timed(check: fn() -> Verdict) -> Verdict {
    let t = Instant::now();
    let mut v = check();
    v.detail = format!("{} [{:.1?}]", v.detail, t.elapsed());
    v
}

fn random_map(rng: &mut ChaCha8Rng, h: usize, w: usize) -> GridMap {
    let binary = rng.gen_bool(0.5);
    let values = (0..h * w)
        .map(|_| if binary { f64::from(u8::from(rng.gen_bool(0.3))) } else { rng.gen_range(0.0..=1.0) })
        .collect();
    GridMap::new(h, w, values).unwrap()
}

fn soundness() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let book = Codebook::default_7x7();
    let params = DecodeParams::default();
    let (mut worst_bound, mut worst_width) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for _ in 0..200 {
        let map = random_map(&mut rng, 8, 8);
        let mut store = ConstraintStore::new(map.len());
        // independent interval bookkeeping: per cell, (o + ν, ν − o) minima
        let mut hi_lo = vec![(f64::INFINITY, f64::INFINITY); map.len()];
        let mut touched = vec![false; map.len()];
        for _ in 0..3 {
            let center = CellIndex::new(rng.gen_range(0..8), rng.gen_range(0..8));
            let template = &book.templates()[rng.gen_range(0..book.len())];
            let abs = instantiate(template, &map, center);
            let mut msg = compress(|j| Some(map.values()[j]), &abs, map.width()).unwrap();
            if rng.gen_bool(0.5) {
                msg = msg.without_variance();
            }
            store.add_message(&abs, &msg).unwrap();
            for g in &abs.groups {
                let vals: Vec<f64> = g.cells.iter().map(|&j| map.values()[j]).collect();
                let n = vals.len() as f64;
                let o = vals.iter().sum::<f64>() / n;
                let nu = if msg.variance_included {
                    vals.iter().map(|v| (v - o) * (v - o)).sum::<f64>().sqrt()
                } else {
                    (n * o * (1.0 - o)).sqrt()
                };
                for &j in &g.cells {
                    touched[j] = true;
                    hi_lo[j].0 = hi_lo[j].0.min(o + nu);
                    hi_lo[j].1 = hi_lo[j].1.min(nu - o);
                }
            }
        }
        let est = match decode(&store, &params) {
            Ok(e) => e,
            Err(e) => match e.into_estimate() {
                Some(e) => e,
                None => return verdict(false, "decoder reported an infeasible store built from a real map"),
            },
        };
        let h = store.uncertainty();
        for j in 0..map.len() {
            let gap = (map.values()[j] - est.values[j]).abs() - h.values[j];
            worst_bound = worst_bound.max(gap);
            let width = if touched[j] { (hi_lo[j].0 + hi_lo[j].1).clamp(0.0, 1.0) } else { 1.0 };
            worst_width = worst_width.max(width - h.values[j]);
        }
    }
    verdict(
        worst_bound <= 1e-9 && worst_width <= 1e-9,
        format!("max |x−x̂|−h = {worst_bound:.3e}, max oracle−h = {worst_width:.3e}, tol 1e-9"),
    )
}

struct Instance {
    n: usize,
    eqs: Vec<(Vec<usize>, f64)>,
    balls: Vec<(Vec<usize>, f64)>,
}

impl Instance {
    fn violation(&self, x: &[f64]) -> f64 {
        let mut v = x.iter().map(|&xi| (-xi).max(xi - 1.0).max(0.0)).fold(0.0, f64::max);
        for (s, m) in &self.eqs {
            let mean = s.iter().map(|&j| x[j]).sum::<f64>() / s.len() as f64;
            v = v.max((mean - m).abs());
        }
        for (s, b) in &self.balls {
            v = v.max(s.iter().map(|&j| x[j] * x[j]).sum::<f64>() - b);
        }
        v
    }
}

fn random_subset(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    let size = rng.gen_range(1..=n.min(6));
    let mut s = BTreeSet::new();
    while s.len() < size {
        s.insert(rng.gen_range(0..n));
    }
    s.into_iter().collect()
}

fn random_instance(rng: &mut ChaCha8Rng) -> Instance {
    let n = rng.gen_range(2..=16);
    let truth: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..=1.0)).collect();
    let eqs = (0..rng.gen_range(0..=3))
        .map(|_| {
            let s = random_subset(rng, n);
            let m = s.iter().map(|&j| truth[j]).sum::<f64>() / s.len() as f64;
            (s, m)
        })
        .collect();
    let balls = (0..rng.gen_range(0..=3))
        .map(|_| {
            let s = random_subset(rng, n);
            let slack = if rng.gen_bool(0.2) { 0.0 } else { rng.gen_range(0.0..0.5) };
            let b = s.iter().map(|&j| truth[j] * truth[j]).sum::<f64>() + slack;
            (s, b)
        })
        .collect();
    Instance { n, eqs, balls }
}

/// Augmented-Lagrangian reference for `min ‖x − a‖²` over the box and the
/// instance's sets, with projected-gradient inner solves.
fn reference_solve(inst: &Instance, anchor: f64) -> Vec<f64> {
    let n = inst.n;
    let mut x = vec![anchor; n];
    let mut mu = vec![0.0; inst.eqs.len()];
    let mut lam = vec![0.0; inst.balls.len()];
    let mut rho = 10.0;
    let grad = |x: &[f64], mu: &[f64], lam: &[f64], rho: f64| {
        let mut g: Vec<f64> = x.iter().map(|xi| 2.0 * (xi - anchor)).collect();
        for ((s, m), mu) in inst.eqs.iter().zip(mu) {
            let k = s.len() as f64;
            let c = s.iter().map(|&j| x[j]).sum::<f64>() / k - m;
            for &j in s {
                g[j] += (mu + rho * c) / k;
            }
        }
        for ((s, b), lam) in inst.balls.iter().zip(lam) {
            let c = s.iter().map(|&j| x[j] * x[j]).sum::<f64>() - b;
            let w = (lam + rho * c).max(0.0);
            for &j in s {
                g[j] += w * 2.0 * x[j];
            }
        }
        g
    };
    for _ in 0..60 {
        // generous Lipschitz bound for a fixed safe step
        let lip = 2.0 + rho * (1.0 + 4.0 * inst.balls.len() as f64) + 2.0 * lam.iter().sum::<f64>() + 1.0;
        let step = 1.0 / lip;
        for _ in 0..20_000 {
            let g = grad(&x, &mu, &lam, rho);
            let mut moved = 0.0f64;
            for j in 0..n {
                let nx = (x[j] - step * g[j]).clamp(0.0, 1.0);
                moved = moved.max((nx - x[j]).abs());
                x[j] = nx;
            }
            if moved < 1e-13 {
                break;
            }
        }
        for ((s, m), mu) in inst.eqs.iter().zip(&mut mu) {
            *mu += rho * (s.iter().map(|&j| x[j]).sum::<f64>() / s.len() as f64 - m);
        }
        for ((s, b), lam) in inst.balls.iter().zip(&mut lam) {
            *lam = (*lam + rho * (s.iter().map(|&j| x[j] * x[j]).sum::<f64>() - b)).max(0.0);
        }
        if inst.violation(&x) < 1e-10 {
            break;
        }
        rho = (rho * 2.0).min(1e4);
    }
    x
}

fn decoder_reference() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let params = DecodeParams::default();
    let (mut worst_obj, mut worst_feas) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let inst = random_instance(&mut rng);
        let mut store = ConstraintStore::new(inst.n);
        for (s, m) in &inst.eqs {
            store.add_equality(s.clone(), *m);
        }
        for (s, b) in &inst.balls {
            store.add_ball(s.clone(), *b);
        }
        let est = match decode(&store, &params) {
            Ok(e) => e,
            Err(e) => return verdict(false, format!("decode failed on a feasible instance: {e}")),
        };
        let reference = reference_solve(&inst, params.prior);
        let obj = |x: &[f64]| x.iter().map(|v| (v - params.prior) * (v - params.prior)).sum::<f64>();
        worst_obj = worst_obj.max((obj(&est.values) - obj(&reference)).abs());
        worst_feas = worst_feas.max(inst.violation(&est.values));
    }
    verdict(
        worst_obj <= 1e-4 && worst_feas <= 1e-6,
        format!("max objective gap {worst_obj:.3e} (tol 1e-4), max violation {worst_feas:.3e} (tol 1e-6)"),
    )
}

fn enumerate_min(field: &GridMap, here: CellIndex, goal: CellIndex, seen: &mut Vec<bool>, acc: f64, best: &mut f64) {
    let p = PlannerParams::default();
    let n = field.len();
    let x = field.value(here);
    let acc = acc + if x <= p.epsilon { x + p.a } else { n as f64 * (p.epsilon + p.a) };
    if here == goal {
        *best = best.min(acc);
        return;
    }
    seen[field.flat(here)] = true;
    for (dr, dc) in [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)] {
        if let Some(next) = field.offset(here, dr, dc) {
            if !seen[field.flat(next)] {
                enumerate_min(field, next, goal, seen, acc, best);
            }
        }
    }
    seen[field.flat(here)] = false;
}

fn planner_enumeration() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let params = PlannerParams::default();
    let mut mismatches = 0;
    for _ in 0..100 {
        let field = random_map(&mut rng, 4, 4);
        let s = CellIndex::new(rng.gen_range(0..4), rng.gen_range(0..4));
        let g = CellIndex::new(rng.gen_range(0..4), rng.gen_range(0..4));
        let path = shortest_path(&field, s, g, &params);
        let mut best = f64::INFINITY;
        enumerate_min(&field, s, g, &mut vec![false; 16], 0.0, &mut best);
        if path.cost != best {
            mismatches += 1;
        }
    }
    verdict(mismatches == 0, format!("{mismatches}/100 fields where the cost differs from the enumerated minimum"))
}

/// Discounted value of following `policy` from every state of a deterministic MDP.
fn policy_values(mdp: &SensorMdp, policy: &[usize], gamma: f64) -> Vec<f64> {
    let n = mdp.len();
    (0..n)
        .map(|s0| {
            // walk until a state repeats, then close the cycle geometrically
            let mut order = Vec::with_capacity(n);
            let mut pos = vec![usize::MAX; n];
            let mut s = s0;
            while pos[s] == usize::MAX {
                pos[s] = order.len();
                order.push(s);
                s = mdp.next[s][policy[s]];
            }
            let start = pos[s];
            let cycle: f64 = order[start..].iter().rev().fold(0.0, |acc, &c| mdp.rewards[c] + gamma * acc);
            let len = (order.len() - start) as i32;
            let mut v = cycle / (1.0 - gamma.powi(len));
            for &c in order[..start].iter().rev() {
                v = mdp.rewards[c] + gamma * v;
            }
            v
        })
        .collect()
}

fn policy_enumeration() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let params = SelectorParams::default();
    let gamma = params.gamma;
    let map = GridMap::filled(11, 11, 0.0).unwrap();
    let (mut disagreements, mut worst_residual) = (0, 0.0f64);
    for _ in 0..100 {
        let reward = RewardField { values: (0..map.len()).map(|_| rng.gen_range(0.0..1.0)).collect() };
        let position = CellIndex::new(rng.gen_range(0..11), rng.gen_range(0..11));
        let mdp = SensorMdp::build(&map, position, &reward, &params);
        let n = mdp.len();
        let m = mdp.actions.len();
        let mut best = vec![f64::NEG_INFINITY; n];
        let mut policy = vec![0usize; n];
        loop {
            let v = policy_values(&mdp, &policy, gamma);
            for (b, x) in best.iter_mut().zip(&v) {
                *b = b.max(*x);
            }
            // odometer over all m^n stationary policies
            let mut i = 0;
            while i < n && policy[i] + 1 == m {
                policy[i] = 0;
                i += 1;
            }
            if i == n {
                break;
            }
            policy[i] += 1;
        }
        let sol = value_iteration(&mdp, gamma);
        let scale = mdp.rewards.iter().fold(0.0f64, |a, r| a.max(r.abs()));
        for s in 0..n {
            // tie-break normalization: first action in order whose successor is near-best
            let q: Vec<f64> = mdp.next[s].iter().map(|&t| best[t]).collect();
            let top = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let first = q.iter().position(|&x| x >= top - 1e-8 * scale).unwrap();
            if sol.policy[s] != mdp.actions[first] {
                disagreements += 1;
            }
        }
        worst_residual = worst_residual.max(bellman_residual(&mdp, gamma, &sol.values));
    }
    verdict(
        disagreements == 0 && worst_residual <= 1e-9,
        format!("{disagreements} state disagreements, max Bellman residual {worst_residual:.3e} (tol 1e-9)"),
    )
}

fn small_scenario(mode: &str, extra: &str) -> Scenario {
    Scenario::parse(&format!(
        r#"
seed = 11
mode = "{mode}"
horizon = 15
{extra}
[map]
kind = "generated"
width = 16
height = 16
density = 0.25
[actor]
start = {{ row = 1, col = 1 }}
goal = {{ row = 14, col = 13 }}
[sensors]
starts = [{{ row = 6, col = 6 }}, {{ row = 10, col = 3 }}]
[square]
side = 8
direction = "clockwise"
"#
    ))
    .unwrap()
}

fn all_small_scenarios() -> Vec<Scenario> {
    vec![
        small_scenario("task_driven_mdp", ""),
        small_scenario("task_driven_mdp", "variance_included = false\nselector_location = \"sensor\""),
        small_scenario("greedy", ""),
        small_scenario("predefined_path_as", ""),
        small_scenario("fully_informed", ""),
        small_scenario("uninformed", ""),
    ]
}

fn bit_accounting() -> Verdict {
    let comm = CommModel::default();
    let groups = (1..=7).map(|g| GroupSummary { group: g, mean: 0.5, variance: 0.1 }).collect();
    let msg = AbstractionMessage { theta: 3, sensor_position: CellIndex::new(0, 0), groups, variance_included: true, t: 0 };
    let (full, lean) = (bit_cost(&msg, &comm), bit_cost(&msg.clone().without_variance(), &comm));
    let mut detail = format!("k=7 costs {full}/{lean} bits (expect 172/88)");
    let mut pass = full == 172 && lean == 88;
    for s in all_small_scenarios() {
        let tr = run(&s, RunOptions::default()).unwrap();
        let expected: u64 = tr
            .messages
            .iter()
            .map(|m| {
                let per = if m.message.variance_included { 24 } else { 12 };
                m.message.groups.len() as u64 * per + 4
            })
            .sum();
        let logged: u64 = tr.messages.iter().map(|m| m.bits).sum();
        let stepped: u64 = tr.steps.iter().flat_map(|st| &st.sensors).map(|x| x.bits).sum();
        if logged != expected || stepped != expected || tr.total_bits() != expected {
            pass = false;
            detail += &format!("; {} logged {logged}, stepped {stepped}, expected {expected}", s.mode.name());
        }
    }
    verdict(pass, detail)
}

fn monotone_uncertainty() -> Verdict {
    let mut worst = f64::NEG_INFINITY;
    let mut snaps = 0;
    for s in all_small_scenarios() {
        let tr = run(&s, RunOptions { snapshots: Snapshots::All }).unwrap();
        snaps += tr.snapshots.len();
        for pair in tr.snapshots.windows(2) {
            for (a, b) in pair[0].h.iter().zip(&pair[1].h) {
                worst = worst.max(b - a);
            }
        }
    }
    verdict(worst <= 1e-12, format!("max per-cell increase {worst:.3e} over {snaps} snapshots (tol 1e-12)"))
}

fn directional() -> (Verdict, Verdict) {
    let scenario = Scenario::parse(DIRECTIONAL).unwrap();
    let n = scenario.batch.n.unwrap_or(20) as u64;
    let seeds: Vec<u64> = (scenario.seed..scenario.seed + n).collect();
    let t = Instant::now();
    let report = match run_batch(&scenario, &scenario.batch.variants, &seeds) {
        Ok(r) => r,
        Err(e) => {
            let v = verdict(false, format!("batch failed: {e}"));
            return (v, verdict(false, "batch failed"));
        }
    };
    let elapsed = t.elapsed();
    let s = |label: &str| report.summary(label).unwrap_or_else(|| panic!("variant {label} missing"));
    let td = s("task_driven_l1");
    let below = report.records.iter().filter(|r| r.label == td.label && r.r_cost < 1.0).count();
    let frac = below as f64 / n as f64;
    let capped: usize = report.summaries.iter().map(|v| v.capped).sum();
    let seven = verdict(
        td.r_cost <= 0.9 && frac >= 0.8 && capped == 0 && elapsed <= Duration::from_secs(600),
        format!(
            "ℓ=1 mean r_cost {:.3} (≤ 0.9), below 1 in {below}/{n} seeds (≥ 80%); ℓ=2 {:.3}, greedy {:.3}; \
             {capped} capped runs; {:.0?} for {} runs",
            td.r_cost,
            s("task_driven_l2").r_cost,
            s("greedy").r_cost,
            elapsed,
            report.records.len() + seeds.len()
        ),
    );
    let (fi, lean) = (s("fully_informed"), s("task_driven_lean"));
    let eight = verdict(
        report.bits_reference.as_deref() == Some("fully_informed")
            && fi.r_bits == 1.0
            && fi.r_cost <= lean.r_cost + 0.1
            && lean.r_bits < 1.0,
        format!(
            "FI r_bits {:.3}, r_cost {:.3}; task-driven (value-only, sensor-side selector) r_cost {:.3}, r_bits {:.3}; \
             with variance r_bits {:.3}",
            fi.r_bits, fi.r_cost, lean.r_cost, lean.r_bits, td.r_bits
        ),
    );
    (seven, eight)
}

fn deterministic_traces() -> Verdict {
    let mut differing = Vec::new();
    for s in all_small_scenarios() {
        let a = run(&s, RunOptions::default()).unwrap().to_csv();
        let b = run(&s, RunOptions::default()).unwrap().to_csv();
        if a.as_bytes() != b.as_bytes() {
            differing.push(s.mode.name());
        }
    }
    let detail = if differing.is_empty() {
        "6 scenarios rerun byte-identical".to_string()
    } else {
        format!("differing traces: {differing:?}")
    };
    verdict(differing.is_empty(), detail)
}
