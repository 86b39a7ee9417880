//! Deterministic SGD, synthetic tasks and checkpoint-ensemble production.
//!
//! Batch order depends only on `(seed, epoch)`, so a training run is a pure
//! function of the initial network and the config.

mod ensemble;
mod equivariance;
mod grad;
mod posterior;
mod sgd;
mod task;
mod tracking;

pub use ensemble::{ensemble_predict, predict, EnsemblePrediction};
pub use equivariance::{equivariance_check, equivariance_check_with, EquivarianceReport, EQUIVARIANCE_TOL};
pub use grad::{dataset_loss, loss_and_grad, Gradients, Loss};
pub use posterior::{checkpoint_file, train_posterior_dataset, CheckpointDataset, Manifest, ManifestEntry, MANIFEST_FILE};
pub use sgd::{batch_order, sgd_train, PermutationTracking, StepDecay, TrainConfig, TrainTrace};
pub use task::{gen_task, grid_2d, linearly_separable, pairwise_separable, Dataset, SyntheticTask, TaskKind, Targets, MAX_SEPARABILITY_RETRIES};
pub use tracking::{tau_series, track_permutations, TauSeries};

use crate::netcore::{ArchitectureSpec, OutputActivation};

/// The 2-2-1 ReLU perceptron with a sigmoid head.
pub fn toy_spec() -> ArchitectureSpec {
    ArchitectureSpec::mlp(&[2, 2, 1], OutputActivation::Sigmoid)
}

/// Toy inputs far from both classes: the in-distribution grid moved by (+8, +8).
pub fn toy_ood_inputs(id: &[Vec<f64>]) -> Vec<Vec<f64>> {
    id.iter().map(|x| x.iter().map(|v| v + 8.0).collect()).collect()
}
