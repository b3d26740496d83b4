//! JSON and TOML game definitions.
//!
//! ```json
//! {
//!   "players": [
//!     { "num_states": 2, "num_actions": 2, "kernel": [[[0.9, 0.1], [0.1, 0.9]], [[0.1, 0.9], [0.9, 0.1]]] }
//!   ],
//!   "rewards": [[[0.5, 0.5], [0.5, 0.5]]]
//! }
//! ```
//!
//! `kernel[s][a][s']` is a distribution; `rewards[i]` is nested as
//! `[s_1]…[s_n][a_1]…[a_n]`. Kernel rows off the simplex by more than
//! [`SIMPLEX_TOLERANCE`] are rejected, smaller deviations are renormalized.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::game::{GameError, JointGame, TransitionKernel, ROW_TOLERANCE};

pub const SIMPLEX_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum GameFileError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid {format} game file: {message}")]
    Parse { format: &'static str, message: String },
    #[error("player {player}: missing kernel row for state {state}, action {action}")]
    MissingRow { player: usize, state: usize, action: usize },
    #[error("player {player}: kernel row for state {state}, action {action} has {found} entries, expected {expected}")]
    RowLength { player: usize, state: usize, action: usize, expected: usize, found: usize },
    #[error("player {player}: kernel has {found} state blocks, expected {expected}")]
    ExtraRows { player: usize, expected: usize, found: usize },
    #[error("player {player}: kernel row for state {state}, action {action} sums to {sum}")]
    OffSimplex { player: usize, state: usize, action: usize, sum: f64 },
    #[error("player {player}: kernel row for state {state}, action {action} has a negative entry")]
    Negative { player: usize, state: usize, action: usize },
    #[error("rewards of player {player} at {path:?}: expected {expected} entries, found {found}")]
    RewardShape { player: usize, path: Vec<usize>, expected: usize, found: String },
    #[error("expected {expected} reward tensors, found {found}")]
    RewardCount { expected: usize, found: usize },
    #[error(transparent)]
    Game(#[from] GameError),
}

/// An arbitrarily nested array of numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Nested {
    Leaf(f64),
    Node(Vec<Nested>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlayerSpec {
    pub num_states: usize,
    pub num_actions: usize,
    pub kernel: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameFile {
    pub players: Vec<PlayerSpec>,
    pub rewards: Vec<Nested>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Toml,
}

impl Format {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
            Some("json") => Some(Format::Json),
            Some("toml") => Some(Format::Toml),
            _ => None,
        }
    }
}

impl GameFile {
    pub fn parse(text: &str, format: Format) -> Result<Self, GameFileError> {
        match format {
            Format::Json => serde_json::from_str(text)
                .map_err(|e| GameFileError::Parse { format: "JSON", message: e.to_string() }),
            Format::Toml => {
                toml::from_str(text).map_err(|e| GameFileError::Parse { format: "TOML", message: e.to_string() })
            }
        }
    }

    /// Validates shapes and rows and builds the game.
    pub fn into_game(self) -> Result<JointGame, GameFileError> {
        let mut kernels = Vec::with_capacity(self.players.len());
        for (player, spec) in self.players.iter().enumerate() {
            kernels.push(kernel_from_spec(player, spec)?);
        }
        if self.rewards.len() != self.players.len() {
            return Err(GameFileError::RewardCount { expected: self.players.len(), found: self.rewards.len() });
        }
        let dims: Vec<usize> = self
            .players
            .iter()
            .map(|p| p.num_states)
            .chain(self.players.iter().map(|p| p.num_actions))
            .collect();
        let mut rewards = Vec::with_capacity(self.rewards.len());
        for (player, nested) in self.rewards.iter().enumerate() {
            let mut flat = Vec::new();
            flatten(player, nested, &dims, &mut Vec::new(), &mut flat)?;
            rewards.push(flat);
        }
        Ok(JointGame::new(kernels, rewards)?)
    }

    pub fn from_game(game: &JointGame) -> Self {
        let players = game
            .players()
            .iter()
            .map(|p| {
                let k = p.kernel();
                let (ns, na) = (k.num_states(), k.num_actions());
                PlayerSpec {
                    num_states: ns,
                    num_actions: na,
                    kernel: (0..ns).map(|s| (0..na).map(|a| k.row(s, a).to_vec()).collect()).collect(),
                }
            })
            .collect::<Vec<_>>();
        let dims: Vec<usize> = game
            .players()
            .iter()
            .map(|p| p.num_states())
            .chain(game.players().iter().map(|p| p.num_actions()))
            .collect();
        let rewards = (0..game.num_players()).map(|i| nest(game.reward_tensor(i), &dims)).collect();
        Self { players, rewards }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("game files serialize")
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("game files serialize")
    }
}

fn kernel_from_spec(player: usize, spec: &PlayerSpec) -> Result<TransitionKernel, GameFileError> {
    let (ns, na) = (spec.num_states, spec.num_actions);
    if spec.kernel.len() > ns {
        return Err(GameFileError::ExtraRows { player, expected: ns, found: spec.kernel.len() });
    }
    let mut probs = Vec::with_capacity(ns * na * ns);
    for state in 0..ns {
        let block = spec.kernel.get(state).ok_or(GameFileError::MissingRow {
            player,
            state,
            action: 0,
        })?;
        if block.len() > na {
            return Err(GameFileError::RowLength { player, state, action: na, expected: na, found: block.len() });
        }
        for action in 0..na {
            let row = block.get(action).ok_or(GameFileError::MissingRow { player, state, action })?;
            if row.len() != ns {
                return Err(GameFileError::RowLength { player, state, action, expected: ns, found: row.len() });
            }
            if row.iter().any(|&p| p < 0.0 || !p.is_finite()) {
                return Err(GameFileError::Negative { player, state, action });
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
                return Err(GameFileError::OffSimplex { player, state, action, sum });
            }
            if (sum - 1.0).abs() > ROW_TOLERANCE {
                probs.extend(row.iter().map(|p| p / sum));
            } else {
                probs.extend_from_slice(row);
            }
        }
    }
    Ok(TransitionKernel::new(ns, na, probs)?)
}

fn flatten(
    player: usize,
    nested: &Nested,
    dims: &[usize],
    path: &mut Vec<usize>,
    out: &mut Vec<f64>,
) -> Result<(), GameFileError> {
    match (nested, dims.split_first()) {
        (Nested::Leaf(v), None) => {
            out.push(*v);
            Ok(())
        }
        (Nested::Node(children), Some((&len, rest))) if children.len() == len => {
            for (i, child) in children.iter().enumerate() {
                path.push(i);
                flatten(player, child, rest, path, out)?;
                path.pop();
            }
            Ok(())
        }
        (Nested::Node(children), Some((&len, _))) => Err(GameFileError::RewardShape {
            player,
            path: path.clone(),
            expected: len,
            found: children.len().to_string(),
        }),
        (Nested::Leaf(_), Some((&len, _))) => Err(GameFileError::RewardShape {
            player,
            path: path.clone(),
            expected: len,
            found: "a number".into(),
        }),
        (Nested::Node(_), None) => Err(GameFileError::RewardShape {
            player,
            path: path.clone(),
            expected: 1,
            found: "a nested array".into(),
        }),
    }
}

fn nest(flat: &[f64], dims: &[usize]) -> Nested {
    match dims.split_first() {
        None => Nested::Leaf(flat[0]),
        Some((&len, rest)) => {
            let chunk = flat.len() / len;
            Nested::Node((0..len).map(|i| nest(&flat[i * chunk..(i + 1) * chunk], rest)).collect())
        }
    }
}

/// Loads a game file, choosing the format from the extension.
pub fn load(path: &Path) -> Result<JointGame, GameFileError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| GameFileError::Io { path: path.display().to_string(), source })?;
    let format = Format::from_path(path).unwrap_or(if text.trim_start().starts_with('{') {
        Format::Json
    } else {
        Format::Toml
    });
    GameFile::parse(&text, format)?.into_game()
}
