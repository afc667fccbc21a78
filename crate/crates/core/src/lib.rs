//! Load-balance-aware RU sleeping for O-RAN deployments.
//!
//! A digital twin produces network snapshots, a threshold labeler grades
//! their load balance under three policies, learners predict that grade from
//! KPM-derived features, and the RIC search uses the prediction to switch off
//! RUs without unbalancing the network.

pub mod baselines;
pub mod config;
pub mod error;
pub mod features;
pub mod io;
pub mod labeler;
pub mod learner;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod report;
pub mod ric;
pub mod twin;

pub use error::{Error, Result};
pub use features::{FeatureMatrix, FeatureVector, SCHEMA_VERSION};
pub use labeler::{PolicyName, ThresholdPolicy};
pub use model::{BalanceCategory, BalanceMetrics, KpmRecord, NetworkState, RuConfig, Scenario, MAX_RUS};
pub use twin::TwinParams;
