//! Distils a black-box continuous-control policy into a chain of linear
//! subpolicies, each guarded by a linear SVM gate.
//!
//! The pipeline: load the teacher's recorded states and actions
//! ([`dataset`]), load its critic ([`nn`]), run [`distill::distill`], then
//! evaluate the resulting [`distill::DistilledPolicy`] with [`eval`] on an
//! environment from [`envs`].

pub mod dataset;
pub mod distill;
pub mod envs;
pub mod error;
pub mod eval;
pub mod format;
pub mod learners;
pub mod linalg;
pub mod nn;

pub use dataset::{ActionBounds, DatasetManifest, RegionLabels, TransitionDataset};

pub use distill::{distill, DistillConfig, DistilledPolicy, PartitionNode};
pub use error::{Error, Result};
pub use learners::{LinearSubpolicy, SvmGate};
pub use nn::{Critic, CriticMode, CriticOracle, MlpNetwork};
