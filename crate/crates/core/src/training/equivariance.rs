use serde::{Deserialize, Serialize};

use super::sgd::{sgd_train, TrainConfig};
use super::task::Dataset;
use crate::error::Result;
use crate::netcore::Network;
use crate::symmetry::{apply_permutation, PermutationSet};

pub const EQUIVARIANCE_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquivarianceReport {
    pub max_weight_dev: f64,
    pub tol: f64,
    pub pass: bool,
}

/// Trains from `θ₀` and from `T_p(θ₀, Π)` and compares the second result
/// with `T_p` of the first. `cfg_twin` drives the permuted run.
pub fn equivariance_check_with(
    init: &Network,
    data: &Dataset,
    cfg: &TrainConfig,
    cfg_twin: &TrainConfig,
    perm: &PermutationSet,
) -> Result<EquivarianceReport> {
    let direct = sgd_train(init, data, cfg)?.network;
    let twin = sgd_train(&apply_permutation(init, perm)?, data, cfg_twin)?.network;
    let expected = apply_permutation(&direct, perm)?;
    let max_weight_dev = expected.max_abs_param_diff(&twin).unwrap_or(f64::INFINITY);
    Ok(EquivarianceReport {
        max_weight_dev,
        tol: EQUIVARIANCE_TOL,
        pass: max_weight_dev <= EQUIVARIANCE_TOL,
    })
}

pub fn equivariance_check(init: &Network, data: &Dataset, cfg: &TrainConfig, perm: &PermutationSet) -> Result<EquivarianceReport> {
    equivariance_check_with(init, data, cfg, cfg, perm)
}
