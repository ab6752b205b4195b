//! Long-tail augmented graph contrastive recommendation.
//!
//! The numeric core is generic over [`Scalar`] (`f32` for training, `f64`
//! for gradient verification). Concrete aliases for both are exported here.

pub mod adversarial;
pub mod augment;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod graph;
pub mod scalar;
pub mod ssl;
pub mod stack;
pub mod trainer;

pub use error::{LagclError, Result};
pub use scalar::Scalar;

pub use dataset::{InteractionDataset, SplitDataset, SyntheticConfig};
pub use eval::{EvalTarget, GroupReport, MetricsReport, UniformityReport};
pub use trainer::{Checkpoint, Hyperparams, TrainOutcome, Variant};

pub type Graph32 = graph::BipartiteGraph<f32>;
pub type Graph64 = graph::BipartiteGraph<f64>;
pub type Params32 = trainer::ParameterSet<f32>;
pub type Params64 = trainer::ParameterSet<f64>;
pub type Stack32 = graph::LayerStack<f32>;
pub type Stack64 = graph::LayerStack<f64>;
pub type Dropped32 = augment::DroppedGraph<f32>;
pub type Dropped64 = augment::DroppedGraph<f64>;
