//! Weight-space symmetries of small ReLU networks.
//!
//! The crate covers the symmetry operators themselves (positive scaling,
//! permutation of hidden units, softmax bias shift), their removal by
//! canonicalization or by minimizing the network mass over scalings,
//! deterministic SGD for producing checkpoint ensembles, and the statistics
//! used to compare such ensembles (aggregated MMD, calibration and OOD
//! metrics, ensemble mutual information, rank correlation).

pub mod collapse;
pub mod error;
pub mod marginals;
pub mod metrics;
pub mod minmass;
pub mod mmd;
pub mod netcore;
pub mod symmetry;
pub mod training;

pub use error::{Error, ErrorClass, Result};
pub use netcore::{
    build_network, forward, load_checkpoint, network_mass, save_checkpoint, ArchitectureSpec, LayerParams, LayerSpec,
    Network, OutputActivation,
};
pub use symmetry::{PermutationSet, ScalingSet};
