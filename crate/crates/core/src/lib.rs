//! Bias-tolerant fair classification.
//!
//! A small dense classifier trained on a group-weighted cross-entropy with
//! group-conditional expectation regularizers, whose weights and intensities
//! are learned by a one-step-lookahead meta update. Also provides label and
//! selection bias injection, a synthetic generator, fairness metrics and an
//! exact enumeration oracle for the loss decomposition.

pub mod bias;
pub mod data;
pub mod error;
pub mod losses;
pub mod meta;
pub mod metrics;
pub mod model;
pub mod oracle;
pub mod rng;
pub mod synthetic;

pub use bias::BiasSpec;
pub use data::{Dataset, DatasetRecipe, Group, Label};
pub use error::{Error, Result};
pub use losses::{GroupLabelMarginals, MetaParams};
pub use meta::{MetaGradient, MetaTrace};
pub use metrics::MetricsReport;
pub use model::{Activation, ModelParams, TrainConfig};
pub use synthetic::SyntheticConfig;
