//! Decentralized learning of approximate Nash equilibria in average-reward
//! stochastic games whose players run independent, unknown Markov chains.
//!
//! Each player keeps an occupancy measure over its own `(state, action,
//! next_state)` triples, plays the stationary policy that measure induces,
//! and at the end of every episode takes an online mirror descent step over
//! a shrunk occupancy polytope intersected with a confidence set around its
//! empirical transition kernel. The crate is organized as:
//!
//! * [`game`]: the game model, built-in instances and assumption checks.
//! * [`occupancy`]: occupancy measures and their conversions.
//! * [`convex`]: LP, Euclidean projection and Bregman utilities.
//! * [`confidence`]: visit counters and interval confidence sets.
//! * [`learner`]: the per-player episodic state machine.
//! * [`simulator`]: multi-player orchestration and run records.
//! * [`evaluation`]: exact oracle payoffs, best responses and gap functions.

pub mod confidence;
pub mod convex;
pub mod evaluation;
pub mod game;
pub mod gamefile;
pub mod learner;
pub mod occupancy;
pub mod record;
pub mod seed;
pub mod simulator;

pub use confidence::{ConfidenceError, ConfidenceState, ScheduleMode, WidthConstant, WidthSchedule};
pub use convex::{ConvexError, LinearConstraintSystem, RegularizerSpec};
pub use game::{AssumptionReport, GameError, JointGame, PlayerModel, StationaryPolicy, TransitionKernel};
pub use occupancy::{OccupancyError, OccupancyMeasure, ShrunkPolytopeSpec, StateActionOccupancy, StateOccupancy};
pub use learner::{EtaSchedule, Learner, LearnerConfig, LearnerError, Observation, Phase, WarmupSchedule};
pub use evaluation::{EvaluationError, GapReport};
pub use record::RunRecord;
pub use simulator::{run, replay_policies, SimulationConfig, SimulationError};
