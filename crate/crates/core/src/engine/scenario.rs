use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mapgen::{generate_map, MapGenParams};
use super::EngineError;
use crate::codec::{load_codebook, Codebook, CommModel};
use crate::encoder::EncoderParams;
use crate::estimation::DecodeParams;
use crate::grid::{load_map, CellIndex, GridMap};
use crate::planner::PlannerParams;
use crate::selector::SelectorParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    TaskDrivenMdp,
    Greedy,
    PredefinedPathAs,
    FullyInformed,
    Uninformed,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::TaskDrivenMdp => "task_driven_mdp",
            Mode::Greedy => "greedy",
            Mode::PredefinedPathAs => "predefined_path_as",
            Mode::FullyInformed => "fully_informed",
            Mode::Uninformed => "uninformed",
        }
    }

    pub fn uses_square_path(self) -> bool {
        matches!(self, Mode::PredefinedPathAs | Mode::FullyInformed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectorLocation {
    Actor,
    Sensor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SquareDirection {
    Clockwise,
    Counterclockwise,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MapSource {
    File { path: PathBuf },
    Generated {
        width: usize,
        height: usize,
        density: f64,
        #[serde(default)]
        noise: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActorConfig {
    pub start: CellIndex,
    pub goal: CellIndex,
    #[serde(default = "default_actor_window")]
    pub window: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorConfig {
    #[serde(default)]
    pub starts: Vec<CellIndex>,
    /// Extra sensors placed uniformly at random from the run seed.
    #[serde(default)]
    pub random: usize,
    #[serde(default = "default_sensor_window")]
    pub window: usize,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self { starts: Vec::new(), random: 0, window: default_sensor_window() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SquareConfig {
    pub side: usize,
    pub direction: SquareDirection,
}

impl Default for SquareConfig {
    fn default() -> Self {
        Self { side: 16, direction: SquareDirection::Clockwise }
    }
}

/// Numeric parameters; defaults are the reference experiment constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub a: f64,
    pub epsilon: f64,
    pub v: f64,
    pub gamma: f64,
    pub beta: f64,
    pub c_lambda: f64,
    pub radius: usize,
    pub n_m: u64,
    pub n_a: u64,
    pub prior: f64,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            a: 0.025,
            epsilon: 0.501,
            v: 3.33,
            gamma: 0.9,
            beta: 0.9,
            c_lambda: 0.05,
            radius: 1,
            n_m: 24,
            n_a: 4,
            prior: 0.5,
        }
    }
}

/// One compared configuration inside a batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Variant {
    pub label: String,
    pub mode: Mode,
    #[serde(default)]
    pub radius: Option<usize>,
    #[serde(default)]
    pub selector_location: Option<SelectorLocation>,
    #[serde(default)]
    pub variance_included: Option<bool>,
    #[serde(default)]
    pub square_direction: Option<SquareDirection>,
}

impl Variant {
    pub fn of_mode(mode: Mode) -> Self {
        Self {
            label: mode.name().to_string(),
            mode,
            radius: None,
            selector_location: None,
            variance_included: None,
            square_direction: None,
        }
    }

    pub fn apply(&self, base: &Scenario) -> Scenario {
        let mut s = base.clone();
        s.mode = self.mode;
        if let Some(r) = self.radius {
            s.params.radius = r;
        }
        if let Some(l) = self.selector_location {
            s.selector_location = l;
        }
        if let Some(v) = self.variance_included {
            s.variance_included = v;
        }
        if let Some(d) = self.square_direction {
            s.square.direction = d;
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatchConfig {
    #[serde(default)]
    pub n: Option<usize>,
    #[serde(default)]
    pub variants: Vec<Variant>,
}

/// Everything needed to reproduce one run, serialized as TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub seed: u64,
    pub mode: Mode,
    #[serde(default = "default_location")]
    pub selector_location: SelectorLocation,
    #[serde(default = "default_true")]
    pub variance_included: bool,
    /// Sensor horizon T: sensors move and transmit for this many steps.
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    /// Codebook file; the bundled 7×7 codebook when absent.
    #[serde(default)]
    pub codebook: Option<PathBuf>,
    pub map: MapSource,
    pub actor: ActorConfig,
    #[serde(default)]
    pub sensors: SensorConfig,
    #[serde(default)]
    pub square: SquareConfig,
    #[serde(default)]
    pub params: Params,
    #[serde(default)]
    pub batch: BatchConfig,
}

fn default_actor_window() -> usize {
    5
}
fn default_sensor_window() -> usize {
    7
}
fn default_location() -> SelectorLocation {
    SelectorLocation::Actor
}
fn default_true() -> bool {
    true
}
fn default_horizon() -> usize {
    60
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self, EngineError> {
        toml::from_str(text).map_err(|e| EngineError::Scenario(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    /// Loads a scenario file; relative map and codebook paths resolve against
    /// the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, EngineError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| EngineError::Scenario(format!("cannot read {}: {e}", path.display())))?;
        let mut s = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let MapSource::File { path: p } = &mut s.map {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if let Some(p) = &mut s.codebook {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(s)
    }

    pub fn planner_params(&self) -> PlannerParams {
        PlannerParams { a: self.params.a, epsilon: self.params.epsilon, ..Default::default() }
    }

    pub fn selector_params(&self) -> SelectorParams {
        SelectorParams {
            radius: self.params.radius,
            gamma: self.params.gamma,
            window_w: self.sensors.window,
            window_h: self.sensors.window,
            ..Default::default()
        }
    }

    pub fn encoder_params(&self) -> EncoderParams {
        EncoderParams { beta: self.params.beta, c_lambda: self.params.c_lambda }
    }

    pub fn comm(&self) -> CommModel {
        CommModel { n_m: self.params.n_m, n_a: self.params.n_a }
    }

    pub fn decode_params(&self) -> DecodeParams {
        DecodeParams { prior: self.params.prior, ..Default::default() }
    }

    pub fn load_codebook(&self) -> Result<Codebook, EngineError> {
        match &self.codebook {
            Some(p) => load_codebook(p).map_err(|e| EngineError::Scenario(e.to_string())),
            None => Ok(Codebook::default_7x7()),
        }
    }

    /// True map for this scenario's seed.
    pub fn build_map(&self) -> Result<GridMap, EngineError> {
        match &self.map {
            MapSource::File { path } => load_map(path).map_err(|e| EngineError::Scenario(e.to_string())),
            MapSource::Generated { width, height, density, noise } => {
                let gen = MapGenParams {
                    width: *width,
                    height: *height,
                    density: *density,
                    noise: *noise,
                    epsilon: self.params.epsilon,
                };
                generate_map(self.seed, &gen, Some((self.actor.start, self.actor.goal)))
            }
        }
    }

    /// Listed sensor starts followed by the seeded random ones.
    pub fn sensor_starts(&self, map: &GridMap) -> Vec<CellIndex> {
        let mut starts = self.sensors.starts.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x5e45_0a5e_5eed_0001);
        for _ in 0..self.sensors.random {
            starts.push(CellIndex::new(rng.gen_range(0..map.height()), rng.gen_range(0..map.width())));
        }
        starts
    }

    pub fn validate(&self, map: &GridMap) -> Result<(), EngineError> {
        let bad = |m: String| Err(EngineError::Scenario(m));
        if !map.contains(self.actor.start) {
            return bad(format!("actor start {} outside the map", self.actor.start));
        }
        if !map.contains(self.actor.goal) {
            return bad(format!("actor goal {} outside the map", self.actor.goal));
        }
        if self.actor.window.is_multiple_of(2) || self.sensors.window.is_multiple_of(2) {
            return bad("actor and sensor windows must be odd".into());
        }
        for s in &self.sensors.starts {
            if !map.contains(*s) {
                return bad(format!("sensor start {s} outside the map"));
            }
        }
        let p = &self.params;
        if !(p.gamma > 0.0 && p.gamma < 1.0) {
            return bad(format!("gamma {} must lie in (0,1)", p.gamma));
        }
        if !(0.0..=1.0).contains(&p.beta) {
            return bad(format!("beta {} must lie in [0,1]", p.beta));
        }
        if !(0.0..=1.0).contains(&p.epsilon) || !(0.0..=1.0).contains(&p.prior) {
            return bad("epsilon and prior must lie in [0,1]".into());
        }
        if p.radius == 0 {
            return bad("radius must be at least 1".into());
        }
        if p.n_m == 0 {
            return bad("n_m must be positive".into());
        }
        if p.a < 0.0 || p.v <= 0.0 || p.c_lambda < 0.0 {
            return bad("a and c_lambda must be non-negative, v positive".into());
        }
        Ok(())
    }
}
