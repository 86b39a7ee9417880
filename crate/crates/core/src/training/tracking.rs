use serde::{Deserialize, Serialize};

use super::sgd::TrainTrace;
use crate::error::{Error, Result};
use crate::metrics::kendall_tau;

/// Kendall τ between successive sorting permutations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TauSeries {
    /// Permutation interfaces that entered the series (width ≥ 2).
    pub interfaces: Vec<usize>,
    /// `per_interface[k][s]` is τ(Π_s, Π_{s+1}) at interface `interfaces[k]`.
    pub per_interface: Vec<Vec<f64>>,
    /// Mean over interfaces, per step.
    pub mean: Vec<f64>,
    pub steps_per_epoch: usize,
}

impl TauSeries {
    /// Mean τ over the transitions ending inside `epoch`.
    pub fn epoch_mean(&self, epoch: usize) -> Option<f64> {
        let lo = (epoch * self.steps_per_epoch).saturating_sub(1);
        let hi = ((epoch + 1) * self.steps_per_epoch - 1).min(self.mean.len());
        (lo < hi).then(|| self.mean[lo..hi].iter().sum::<f64>() / (hi - lo) as f64)
    }

    pub fn epochs(&self) -> usize {
        (self.mean.len() + 1).div_ceil(self.steps_per_epoch.max(1))
    }
}

pub fn track_permutations(trace: &TrainTrace) -> Result<TauSeries> {
    let perms = trace.permutations.as_ref().ok_or(Error::TrackingDisabled)?;
    tau_series(perms.iter().map(|p| p.perms.as_slice()), trace.steps_per_epoch)
}

/// Series over any sequence of permutation sets (one slice of per-interface permutations per step).
pub fn tau_series<'a>(steps: impl IntoIterator<Item = &'a [Vec<usize>]>, steps_per_epoch: usize) -> Result<TauSeries> {
    let steps: Vec<&[Vec<usize>]> = steps.into_iter().collect();
    let first = steps.first().ok_or_else(|| Error::EmptySample("no recorded steps".into()))?;
    let interfaces: Vec<usize> = (0..first.len()).filter(|&k| first[k].len() >= 2).collect();
    if interfaces.is_empty() {
        return Err(Error::InvalidArgument("no interface of width 2 or more to track".into()));
    }
    let mut per_interface = vec![Vec::with_capacity(steps.len().saturating_sub(1)); interfaces.len()];
    for w in steps.windows(2) {
        for (series, &k) in per_interface.iter_mut().zip(&interfaces) {
            series.push(kendall_tau(&w[0][k], &w[1][k])?);
        }
    }
    let mean = (0..steps.len() - 1)
        .map(|s| per_interface.iter().map(|v| v[s]).sum::<f64>() / interfaces.len() as f64)
        .collect();
    Ok(TauSeries {
        interfaces,
        per_interface,
        mean,
        steps_per_epoch,
    })
}
