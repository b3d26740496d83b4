//! Experiment specification and batch execution.
//!
//! Every setting can come from a command-line flag, an experiment TOML file
//! or a built-in default, in that order of precedence.

use std::fs;
use std::path::{Path, PathBuf};

use occunash::game::{builtin, JointGame};
use occunash::gamefile;
use occunash::seed;
use occunash::simulator::{self, Mode, RunParameters, SimulationConfig, SimulationError};
use occunash::{RunRecord, WidthConstant};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::summary::Summary;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("assumption violated: {0}")]
    Assumption(String),
    #[error("run failed: {0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Assumption(_) => 3,
            CliError::Runtime(_) => 4,
        }
    }
}

impl From<SimulationError> for CliError {
    fn from(e: SimulationError) -> Self {
        match e {
            SimulationError::Assumption(m) => CliError::Assumption(m),
            SimulationError::Config(m) => CliError::Config(m),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

/// `on`/`off`, also accepted as a boolean in experiment files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Toggle {
    Bool(bool),
    Word(OnOff),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OnOff {
    On,
    Off,
}

impl Toggle {
    pub fn enabled(self) -> bool {
        matches!(self, Toggle::Bool(true) | Toggle::Word(OnOff::On))
    }
}

/// One layer of settings; unset fields fall through to the next layer.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Layer {
    pub game: Option<String>,
    pub mode: Option<Mode>,
    pub episodes: Option<usize>,
    pub seeds: Option<usize>,
    pub master_seed: Option<u64>,
    pub gamma: Option<f64>,
    pub epsilon: Option<f64>,
    pub c: Option<f64>,
    pub delta: Option<f64>,
    /// Exponent `p` of the decaying step size.
    pub eta_exponent: Option<f64>,
    pub warmup: Option<usize>,
    pub width_constant: Option<WidthConstant>,
    pub out: Option<PathBuf>,
    pub stride: Option<usize>,
    pub oracle: Option<Toggle>,
}

impl Layer {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read experiment file {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("experiment file {}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentSpec {
    pub game: String,
    pub mode: Mode,
    pub episodes: usize,
    pub seeds: usize,
    pub master_seed: u64,
    pub gamma: f64,
    pub epsilon: f64,
    pub c: f64,
    pub delta: Option<f64>,
    pub eta_exponent: f64,
    pub warmup: Option<usize>,
    pub width_constant: WidthConstant,
    pub out: PathBuf,
    pub stride: usize,
    pub oracle: bool,
}

impl ExperimentSpec {
    /// Merges `flags` over `file` over the defaults. A game path taken from
    /// the file is resolved against `file_dir`.
    pub fn resolve(flags: &Layer, file: &Layer, file_dir: Option<&Path>) -> Result<Self, CliError> {
        let defaults = RunParameters::default();
        let game = match (&flags.game, &file.game) {
            (Some(g), _) => g.clone(),
            (None, Some(g)) => match file_dir {
                Some(dir) if builtin::by_name(g).is_none() && Path::new(g).is_relative() => {
                    dir.join(g).display().to_string()
                }
                _ => g.clone(),
            },
            (None, None) => return Err(CliError::Config("no game given (use --game or `game` in the experiment file)".into())),
        };
        let spec = Self {
            game,
            mode: flags.mode.or(file.mode).unwrap_or(defaults.mode),
            episodes: flags.episodes.or(file.episodes).unwrap_or(defaults.episodes),
            seeds: flags.seeds.or(file.seeds).unwrap_or(1),
            master_seed: flags.master_seed.or(file.master_seed).unwrap_or(0),
            gamma: flags.gamma.or(file.gamma).unwrap_or(defaults.gamma),
            epsilon: flags.epsilon.or(file.epsilon).unwrap_or(defaults.epsilon),
            c: flags.c.or(file.c).unwrap_or(defaults.c),
            delta: flags.delta.or(file.delta),
            eta_exponent: flags.eta_exponent.or(file.eta_exponent).unwrap_or(defaults.p),
            warmup: flags.warmup.or(file.warmup),
            width_constant: flags.width_constant.or(file.width_constant).unwrap_or(defaults.width_constant),
            out: flags.out.clone().or_else(|| file.out.clone()).unwrap_or_else(|| PathBuf::from("out")),
            stride: flags.stride.or(file.stride).unwrap_or(1),
            oracle: flags.oracle.or(file.oracle).map(Toggle::enabled).unwrap_or(true),
        };
        spec.check()?;
        Ok(spec)
    }

    fn check(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.episodes == 0 {
            return bad("episodes must be at least 1".into());
        }
        if self.seeds == 0 {
            return bad("seeds must be at least 1".into());
        }
        if self.stride == 0 {
            return bad("stride must be at least 1".into());
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad(format!("gamma must lie in (0, 1), got {}", self.gamma));
        }
        if !(self.epsilon > 0.0) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if !(self.c > 0.0) {
            return bad(format!("c must be positive, got {}", self.c));
        }
        Ok(())
    }

    pub fn parameters(&self) -> RunParameters {
        RunParameters {
            mode: self.mode,
            episodes: self.episodes,
            gamma: self.gamma,
            epsilon: self.epsilon,
            c: self.c,
            p: self.eta_exponent,
            delta: self.delta,
            warmup: self.warmup,
            tau: None,
            width_constant: self.width_constant,
        }
    }

    pub fn load_game(&self) -> Result<JointGame, CliError> {
        load_game(&self.game)
    }
}

/// A built-in name (`g1`, `g2`, `g3`) or a JSON/TOML game file.
pub fn load_game(name: &str) -> Result<JointGame, CliError> {
    let path = Path::new(name);
    if !path.exists() {
        if let Some(game) = builtin::by_name(name) {
            return Ok(game);
        }
        return Err(CliError::Config(format!("game file {name} does not exist and is not a built-in game")));
    }
    gamefile::load(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// All records of a batch, in seed order, with their summary.
pub struct BatchOutcome {
    pub records: Vec<RunRecord>,
    pub summary: Summary,
}

/// Runs every seed in parallel; per-seed master seeds come from
/// [`seed::batch_seed`].
pub fn execute(spec: &ExperimentSpec, game: &JointGame) -> Result<BatchOutcome, CliError> {
    let params = spec.parameters();
    let results: Vec<Result<RunRecord, SimulationError>> = (0..spec.seeds)
        .into_par_iter()
        .map(|i| {
            let master = seed::batch_seed(spec.master_seed, i as u64);
            let mut config = SimulationConfig::build(game, &params, master)?;
            config.record_every = spec.stride;
            config.oracle = spec.oracle;
            simulator::run(game, &config)
        })
        .collect();
    let mut records = Vec::with_capacity(results.len());
    for (i, r) in results.into_iter().enumerate() {
        records.push(r.map_err(|e| match CliError::from(e) {
            CliError::Runtime(m) => CliError::Runtime(format!("seed {i}: {m}")),
            other => other,
        })?);
    }
    let summary = Summary::from_records(spec, &records);
    Ok(BatchOutcome { records, summary })
}

/// Runs the batch and writes `seed_<i>.csv`, `seed_<i>.json` and
/// `summary.json` into the output directory.
pub fn run_batch(spec: &ExperimentSpec) -> Result<BatchOutcome, CliError> {
    let game = spec.load_game()?;
    let outcome = execute(spec, &game)?;
    let io = |e: std::io::Error| CliError::Runtime(format!("writing to {}: {e}", spec.out.display()));
    fs::create_dir_all(&spec.out).map_err(io)?;
    for (i, record) in outcome.records.iter().enumerate() {
        fs::write(spec.out.join(format!("seed_{i}.csv")), record.to_csv()).map_err(io)?;
        fs::write(spec.out.join(format!("seed_{i}.json")), record.to_json()).map_err(io)?;
    }
    fs::write(spec.out.join("summary.json"), outcome.summary.to_json()).map_err(io)?;
    Ok(outcome)
}
