//! Multi-class gradient boosting with regression trees.
//!
//! Four training algorithms share one probability model and one tree
//! learner: mart, robust logitboost, abc-mart and abc-logitboost. The abc
//! variants fit only `K - 1` trees per iteration against an adaptively
//! chosen base class, and the base-class search can be run only every `G`
//! iterations to cut training cost.

pub mod boost;
pub mod data;
pub mod model_io;
pub mod numerics;
pub mod synth;
pub mod tree;

pub use boost::{train, Algorithm, Ensemble, TrainConfig};
pub use data::Dataset;
