//! Functional collapse: how similar ensemble members are as functions,
//! measured by the mutual information of member pairs.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{mutual_information, pearson_rho, PredictionBatch};
use crate::netcore::Network;
use crate::training::predict;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairMi {
    pub i: usize,
    pub j: usize,
    pub id_mi: f64,
    pub ood_mi: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairwiseMiReport {
    pub pairs: Vec<PairMi>,
    pub id_mean: f64,
    pub ood_mean: f64,
    pub id_var: f64,
    pub ood_var: f64,
    /// Pearson ρ between the ID and OOD columns; absent with fewer than three
    /// pairs or a constant column.
    pub rho: Option<f64>,
    pub p_value: Option<f64>,
}

/// `k`-th unordered pair `(i, j)`, `i < j`, in lexicographic order.
fn unrank_pair(mut k: usize, n: usize) -> (usize, usize) {
    let mut i = 0;
    while k >= n - 1 - i {
        k -= n - 1 - i;
        i += 1;
    }
    (i, i + 1 + k)
}

/// `n_pairs` distinct unordered pairs drawn uniformly, sorted; every pair when `n_pairs ≥ C(n, 2)`.
pub fn sample_pairs(n: usize, n_pairs: usize, seed: u64) -> Vec<(usize, usize)> {
    let total = n * n.saturating_sub(1) / 2;
    let mut ranks: Vec<usize> = if n_pairs >= total {
        (0..total).collect()
    } else {
        index::sample(&mut ChaCha8Rng::seed_from_u64(seed), total, n_pairs).into_vec()
    };
    ranks.sort_unstable();
    ranks.into_iter().map(|k| unrank_pair(k, n)).collect()
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 { v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var)
}

fn pair_mi(a: &PredictionBatch, b: &PredictionBatch) -> Result<f64> {
    Ok(mutual_information(&[a.clone(), b.clone()])?.mean)
}

pub fn pairwise_mi(members: &[Network], id_inputs: &[Vec<f64>], ood_inputs: &[Vec<f64>], n_pairs: usize, seed: u64) -> Result<PairwiseMiReport> {
    if members.len() < 2 {
        return Err(Error::InvalidArgument(format!("pairwise MI needs at least 2 checkpoints, got {}", members.len())));
    }
    if n_pairs == 0 {
        return Err(Error::InvalidArgument("n_pairs must be at least 1".into()));
    }
    if let Some(k) = members.iter().position(|m| m.spec() != members[0].spec()) {
        return Err(Error::InvalidArgument(format!("checkpoint {k} has a different architecture")));
    }
    let cached: Vec<(PredictionBatch, PredictionBatch)> = members
        .par_iter()
        .map(|m| Ok((predict(m, id_inputs)?, predict(m, ood_inputs)?)))
        .collect::<Result<_>>()?;
    let pairs = sample_pairs(members.len(), n_pairs, seed)
        .into_par_iter()
        .map(|(i, j)| {
            Ok(PairMi {
                i,
                j,
                id_mi: pair_mi(&cached[i].0, &cached[j].0)?,
                ood_mi: pair_mi(&cached[i].1, &cached[j].1)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let id: Vec<f64> = pairs.iter().map(|p| p.id_mi).collect();
    let ood: Vec<f64> = pairs.iter().map(|p| p.ood_mi).collect();
    let (id_mean, id_var) = mean_var(&id);
    let (ood_mean, ood_var) = mean_var(&ood);
    let (rho, p_value) = match pearson_rho(&id, &ood) {
        Ok((r, p)) => (Some(r), Some(p)),
        Err(e) => {
            log::info!("no correlation reported: {e}");
            (None, None)
        }
    };
    Ok(PairwiseMiReport {
        pairs,
        id_mean,
        ood_mean,
        id_var,
        ood_var,
        rho,
        p_value,
    })
}
