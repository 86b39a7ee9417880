use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{permutation_blocks, PermutationSet, ScalingSet};
use crate::error::{Error, Result};
use crate::netcore::{forward, ArchitectureSpec, Network};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub n_inputs: usize,
    pub max_abs: f64,
    /// Worst per-input deviation relative to the larger output infinity-norm.
    pub max_rel: f64,
    pub tol: f64,
    pub pass: bool,
}

/// Compares two networks on `n_inputs` standard-normal inputs drawn from `seed`.
pub fn verify_equivalence(a: &Network, b: &Network, n_inputs: usize, seed: u64, tol: f64) -> Result<EquivalenceReport> {
    let d = a.spec().input_dim;
    if d != b.spec().input_dim || a.spec().output_dim() != b.spec().output_dim() {
        return Err(Error::Shape(format!(
            "networks differ in dimensions: {}->{} vs {}->{}",
            d,
            a.spec().output_dim(),
            b.spec().input_dim,
            b.spec().output_dim()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_abs: f64 = 0.0;
    let mut max_rel: f64 = 0.0;
    for _ in 0..n_inputs {
        let x: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let ya = forward(a, &x)?;
        let yb = forward(b, &x)?;
        let dev = ya.iter().zip(&yb).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        let scale = ya.iter().chain(&yb).map(|v| v.abs()).fold(0.0, f64::max);
        max_abs = max_abs.max(dev);
        if dev > 0.0 {
            max_rel = max_rel.max(if scale > 0.0 { dev / scale } else { f64::INFINITY });
        }
    }
    Ok(EquivalenceReport {
        n_inputs,
        max_abs,
        max_rel,
        tol,
        pass: max_rel <= tol,
    })
}

/// Random valid symmetry: uniform permutations (intra-block where grouped
/// convolutions require it) and scales log-uniform on `[e^-2, e^2]`.
pub fn random_symmetry(spec: &ArchitectureSpec, seed: u64) -> Result<(PermutationSet, ScalingSet)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm = PermutationSet::identity(spec)?;
    for (p, l) in perm.perms.iter_mut().zip(spec.permutation_interfaces()) {
        let size = p.len() / permutation_blocks(spec, l);
        p.chunks_mut(size).for_each(|block| block.shuffle(&mut rng));
    }
    let mut scaling = ScalingSet::ones(spec)?;
    scaling
        .scales
        .iter_mut()
        .flatten()
        .for_each(|s| *s = rng.random_range(-2.0..=2.0f64).exp());
    Ok((perm, scaling))
}
