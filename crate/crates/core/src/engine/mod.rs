//! Closed-loop Actor/sensor simulation, baselines, batch metrics and traces.

pub mod baselines;
pub mod mapgen;
pub mod metrics;
pub mod scenario;
pub mod trace;

use std::collections::{BTreeSet, HashSet};

use thiserror::Error;

use crate::codec::{instantiate, AbstractionMessage, Codebook, CommModel, GroupSummary};
use crate::encoder::{select_abstraction, EncoderError, EncoderParams, SensorBelief};
use crate::estimation::{ConstraintStore, DecodeError, DecodeParams, DecoderState, EstimationError};
use crate::grid::{footprint, Action, CellIndex, GridMap};
use crate::planner::{cell_cost, path_weights, shortest_path, PathWeightField, PlannerParams};
use crate::selector::{greedy_select, select_actions, task_reward, RewardField, SelectorParams};

use baselines::{action_between, square_route};
use scenario::{Mode, Scenario, SelectorLocation};
use trace::{hash_field, FieldSnapshot, LoggedMessage, ScenarioTrace, SensorStep, StepRecord};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid scenario: {0}")]
    Scenario(String),
    #[error(transparent)]
    Estimation(#[from] EstimationError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
}

/// Which per-step field snapshots a run keeps in its trace.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub enum Snapshots {
    #[default]
    None,
    All,
    At(BTreeSet<usize>),
}

impl Snapshots {
    fn wants(&self, t: usize) -> bool {
        match self {
            Snapshots::None => false,
            Snapshots::All => true,
            Snapshots::At(ts) => ts.contains(&t),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub snapshots: Snapshots,
}

struct Sensor {
    position: CellIndex,
    belief: SensorBelief,
    /// Square circuit and current index, for the predefined-path modes.
    route: Vec<CellIndex>,
    route_at: usize,
    /// Cells already sent as raw values.
    sent: HashSet<usize>,
}

/// One scenario in progress. Call [`Simulation::step`] until
/// [`Simulation::finished`], or use [`run`].
pub struct Simulation {
    scenario: Scenario,
    map: GridMap,
    codebook: Codebook,
    planner: PlannerParams,
    selector: SelectorParams,
    encoder: EncoderParams,
    comm: CommModel,
    decode: DecodeParams,
    actor: CellIndex,
    store: ConstraintStore,
    decoder: DecoderState,
    sensors: Vec<Sensor>,
    t: usize,
    cap: usize,
    options: RunOptions,
    trace: ScenarioTrace,
}

impl Simulation {
    pub fn new(scenario: &Scenario, options: RunOptions) -> Result<Self, EngineError> {
        let map = scenario.build_map()?;
        scenario.validate(&map)?;
        let codebook = scenario.load_codebook()?;
        if codebook.window() != (scenario.sensors.window, scenario.sensors.window) {
            return Err(EngineError::Scenario(format!(
                "codebook window {:?} does not match sensor window {}",
                codebook.window(),
                scenario.sensors.window
            )));
        }
        let n = map.len();
        let prior = scenario.params.prior;
        let starts = if scenario.mode == Mode::Uninformed { Vec::new() } else { scenario.sensor_starts(&map) };
        let sensors = starts
            .into_iter()
            .map(|p| Sensor {
                position: p,
                belief: SensorBelief::new(n, prior, scenario.variance_included),
                route: if scenario.mode.uses_square_path() {
                    square_route(&map, p, scenario.square.side, scenario.square.direction)
                } else {
                    Vec::new()
                },
                route_at: 0,
                sent: HashSet::new(),
            })
            .collect::<Vec<_>>();
        let planner = scenario.planner_params();
        let start = scenario.actor.start;
        let trace = ScenarioTrace {
            seed: scenario.seed,
            mode: scenario.mode,
            width: map.width(),
            height: map.height(),
            steps: Vec::new(),
            messages: Vec::new(),
            snapshots: Vec::new(),
            cost: cell_cost(map.value(start), &planner, n),
            bits_per_sensor: vec![0; sensors.len()],
            reached_goal: start == scenario.actor.goal,
            capped: false,
            decode_flags: 0,
        };
        Ok(Self {
            selector: scenario.selector_params(),
            encoder: scenario.encoder_params(),
            comm: scenario.comm(),
            decode: scenario.decode_params(),
            scenario: scenario.clone(),
            codebook,
            planner,
            actor: start,
            store: ConstraintStore::new(n),
            decoder: DecoderState::uniform(n, prior),
            sensors,
            t: 0,
            cap: 10 * n,
            options,
            trace,
            map,
        })
    }

    pub fn map(&self) -> &GridMap {
        &self.map
    }

    pub fn actor(&self) -> CellIndex {
        self.actor
    }

    pub fn sensor_positions(&self) -> Vec<CellIndex> {
        self.sensors.iter().map(|s| s.position).collect()
    }

    pub fn store(&self) -> &ConstraintStore {
        &self.store
    }

    pub fn finished(&self) -> bool {
        self.actor == self.scenario.actor.goal || self.t >= self.cap
    }

    /// One synchronous round of observe, plan, steer sensors, transmit, move.
    pub fn step(&mut self) -> Result<(), EngineError> {
        if self.finished() {
            return Ok(());
        }
        let t = self.t;
        let n = self.map.len();
        let fp = footprint(&self.map, self.actor, self.scenario.actor.window, self.scenario.actor.window)
            .map_err(|e| EngineError::Scenario(e.to_string()))?;
        for c in &fp.cells {
            self.store.add_direct_observation(self.map.flat(*c), self.map.value(*c))?;
        }
        let estimate = self.decode_actor()?;
        let est_map = GridMap::new(self.map.height(), self.map.width(), estimate)
            .expect("estimate has the map's shape");
        let path = shortest_path(&est_map, self.actor, self.scenario.actor.goal, &self.planner);
        let weights = path_weights(&path, &self.map, self.scenario.params.v);
        let h = self.store.uncertainty();
        let reward = task_reward(&weights, &h).expect("fields share the map's length");
        if self.options.snapshots.wants(t) {
            self.trace.snapshots.push(FieldSnapshot {
                t,
                estimate: est_map.values().to_vec(),
                h: h.values.clone(),
                weights: weights.values.clone(),
                reward: reward.values.clone(),
            });
        }

        let active = t < self.scenario.horizon;
        let actions = if active { self.sensor_actions(&weights, &reward) } else { vec![None; self.sensors.len()] };
        let mut sensor_steps = Vec::with_capacity(self.sensors.len());
        for (i, action) in actions.into_iter().enumerate() {
            if !active {
                sensor_steps.push(SensorStep {
                    position: self.sensors[i].position,
                    action: None,
                    theta: None,
                    bits: 0,
                    active: false,
                });
                continue;
            }
            let step = self.advance_sensor(i, action, &weights)?;
            sensor_steps.push(step);
        }

        // Actor moves one cell along its plan and pays the true cost there.
        if path.len() > 1 {
            self.actor = path.nodes[1];
            self.trace.cost += cell_cost(self.map.value(self.actor), &self.planner, n);
        }
        self.t += 1;
        self.trace.reached_goal = self.actor == self.scenario.actor.goal;
        if !self.trace.reached_goal && self.t >= self.cap {
            self.trace.capped = true;
        }
        self.trace.steps.push(StepRecord {
            t,
            actor: self.actor,
            path: path.nodes,
            sensors: sensor_steps,
            estimate_hash: hash_field(est_map.values()),
            h_hash: hash_field(&h.values),
            cost_so_far: self.trace.cost,
        });
        Ok(())
    }

    pub fn run(mut self) -> Result<ScenarioTrace, EngineError> {
        while !self.finished() {
            self.step()?;
        }
        Ok(self.trace)
    }

    pub fn trace(&self) -> &ScenarioTrace {
        &self.trace
    }

    fn decode_actor(&mut self) -> Result<Vec<f64>, EngineError> {
        match self.decoder.solve(&self.store, &self.decode) {
            Ok(e) => Ok(e.values),
            Err(DecodeError::NotConverged { estimate }) => {
                self.trace.decode_flags += 1;
                Ok(estimate.values)
            }
            Err(e) => Err(e.into()),
        }
    }

    /// Motion for every sensor this round; `None` means stay put.
    fn sensor_actions(&self, weights: &PathWeightField, reward: &RewardField) -> Vec<Option<Action>> {
        let mode = self.scenario.mode;
        if mode.uses_square_path() {
            return self
                .sensors
                .iter()
                .map(|s| {
                    let next = s.route[(s.route_at + 1) % s.route.len()];
                    action_between(s.position, next)
                })
                .collect();
        }
        let own_reward = |s: &Sensor| task_reward(weights, &s.belief.store.uncertainty()).expect("same length");
        match (mode, self.scenario.selector_location) {
            (Mode::TaskDrivenMdp, SelectorLocation::Actor) => {
                let positions = self.sensor_positions();
                select_actions(&self.map, &positions, reward, &self.selector).into_iter().map(Some).collect()
            }
            (Mode::TaskDrivenMdp, SelectorLocation::Sensor) => self
                .sensors
                .iter()
                .map(|s| Some(select_actions(&self.map, &[s.position], &own_reward(s), &self.selector)[0]))
                .collect(),
            (Mode::Greedy, SelectorLocation::Actor) => self
                .sensors
                .iter()
                .map(|s| Some(greedy_select(&self.map, s.position, reward, &self.selector)))
                .collect(),
            (Mode::Greedy, SelectorLocation::Sensor) => self
                .sensors
                .iter()
                .map(|s| Some(greedy_select(&self.map, s.position, &own_reward(s), &self.selector)))
                .collect(),
            _ => vec![None; self.sensors.len()],
        }
    }

    fn advance_sensor(&mut self, i: usize, action: Option<Action>, weights: &PathWeightField) -> Result<SensorStep, EngineError> {
        let t = self.t;
        let window = self.scenario.sensors.window;
        let sensor = &mut self.sensors[i];
        if let Some(a) = action {
            sensor.position = self.map.step(sensor.position, a).unwrap_or(sensor.position);
        }
        if !sensor.route.is_empty() {
            sensor.route_at = (sensor.route_at + 1) % sensor.route.len();
        }
        let fp = footprint(&self.map, sensor.position, window, window).map_err(|e| EngineError::Scenario(e.to_string()))?;
        sensor.belief.sense(&self.map, &fp);

        let (theta, bits) = if self.scenario.mode == Mode::FullyInformed {
            let fresh: Vec<usize> = fp.cells.iter().map(|c| self.map.flat(*c)).filter(|j| sensor.sent.insert(*j)).collect();
            if fresh.is_empty() {
                (None, 0)
            } else {
                let groups = fresh
                    .iter()
                    .enumerate()
                    .map(|(g, &j)| GroupSummary { group: g as u32 + 1, mean: self.map.values()[j], variance: 0.0 })
                    .collect();
                let message = AbstractionMessage {
                    theta: 0,
                    sensor_position: sensor.position,
                    groups,
                    variance_included: false,
                    t,
                };
                let bits = self.comm.cost(fresh.len(), false);
                for &j in &fresh {
                    self.store.add_direct_observation(j, self.map.values()[j])?;
                }
                self.trace.messages.push(LoggedMessage { t, sensor: i, message, bits, direct: Some(fresh) });
                (Some(0), bits)
            }
        } else {
            let sel = select_abstraction(&sensor.belief, &self.codebook, &self.map, sensor.position, weights, &self.encoder, &self.decode)?;
            sensor.belief.commit_selection(&sel)?;
            let message = sel.message.clone().at(t);
            let bits = self.comm.cost(message.k(), message.variance_included);
            // the Actor rebuilds the abstraction from the template id and sensor position
            let template = self.codebook.get(message.theta).expect("selected template exists");
            let abstraction = instantiate(template, &self.map, message.sensor_position);
            self.store.add_message(&abstraction, &message)?;
            self.trace.messages.push(LoggedMessage { t, sensor: i, message, bits, direct: None });
            (Some(sel.theta), bits)
        };
        self.trace.bits_per_sensor[i] += bits;
        Ok(SensorStep { position: sensor.position, action, theta, bits, active: true })
    }
}

/// Runs a scenario to the goal or the step cap.
pub fn run(scenario: &Scenario, options: RunOptions) -> Result<ScenarioTrace, EngineError> {
    Simulation::new(scenario, options)?.run()
}
