//! Federated-learning contribution assessment.
//!
//! * [`model`]: flat-parameter classifiers, utilities and local SGD
//! * [`data`]: synthetic/CSV data, non-i.i.d. partitioning, label poisoning
//! * [`sim`]: training simulation producing a [`GradientLog`]
//! * [`shapley`]: per-epoch Shapley values over partial participation
//! * [`schedule`]: budgeted epoch selection
//! * [`intent`]: change-point and clustering analysis of contribution timelines

pub mod data;
pub mod error;
pub mod intent;
pub mod model;
pub mod rng;
pub mod schedule;
pub mod shapley;
pub mod sim;

pub use data::Dataset;
pub use error::{Error, Result};
pub use model::{ModelSpec, ParamVector, TrainConfig, UtilitySpec};
pub use schedule::{Schedule, ScheduleProblem};
pub use shapley::{assess, ContributionTimeline, ShapleyMethod};
pub use sim::{ClientConfig, ClientId, EpochRecord, GradientLog, Scenario};
