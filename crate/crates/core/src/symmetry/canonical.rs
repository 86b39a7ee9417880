use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::ops::{apply_permutation, apply_scaling, apply_softmax_shift, weight_units};
use super::{permutation_blocks, PermutationSet, ScalingSet};
use crate::error::Result;
use crate::netcore::{LayerParams, Network, OutputActivation};

/// Statistic used to order the units of a hidden layer.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SortKey {
    /// First incoming weight (top-left kernel weight of the first channel for convs).
    #[default]
    FirstParam,
    /// Largest absolute incoming weight.
    MaxAbs,
}

impl SortKey {
    fn stat(self, row: &[f64]) -> f64 {
        match self {
            SortKey::FirstParam => row[0],
            SortKey::MaxAbs => row.iter().fold(0.0, |m, v| m.max(v.abs())),
        }
    }
}

impl std::str::FromStr for SortKey {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "first_param" => Ok(SortKey::FirstParam),
            "max_abs" => Ok(SortKey::MaxAbs),
            other => Err(format!("unknown sort key {other:?} (expected first_param or max_abs)")),
        }
    }
}

/// Rounds to 40 significant bits, so values that differ only by rescaling
/// roundoff compare equal.
fn coarse(x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    if !x.is_finite() {
        return x;
    }
    let e = x.abs().log2().floor() as i32;
    if !(-900..=900).contains(&e) {
        return x;
    }
    let s = 2f64.powi(40 - e);
    (x * s).round() / s + 0.0
}

fn coarse_cmp(x: f64, y: f64) -> Ordering {
    coarse(x).total_cmp(&coarse(y))
}

/// Descending by key, then descending lexicographically over the row and the
/// bias; full ties fall back to the original order (the sort is stable).
/// All comparisons are at 40-bit precision.
fn unit_order(key: SortKey, rows: &[&[f64]], bias: Option<&[f64]>, a: usize, b: usize) -> Ordering {
    let ka = key.stat(rows[a]);
    let kb = key.stat(rows[b]);
    coarse_cmp(kb, ka)
        .then_with(|| {
            rows[b]
                .iter()
                .zip(rows[a].iter())
                .map(|(x, y)| coarse_cmp(*x, *y))
                .find(|o| o.is_ne())
                .unwrap_or(Ordering::Equal)
        })
        .then_with(|| bias.map_or(Ordering::Equal, |bv| coarse_cmp(bv[b], bv[a])))
}

/// Sort permutation for the output units of layer `l` of `net`, intra-block
/// where grouped convolutions constrain it.
pub(crate) fn sort_permutation(net: &Network, l: usize, key: SortKey) -> Vec<usize> {
    let lp = net.layer(l);
    let w = lp.weight();
    let n = net.shapes()[l + 1].units();
    let fan_in = w.len() / n;
    let rows: Vec<&[f64]> = w.chunks(fan_in).collect();
    let bias = lp.bias();
    let blocks = permutation_blocks(net.spec(), l);
    let size = n / blocks;
    let mut perm = Vec::with_capacity(n);
    for block in 0..blocks {
        let mut idx: Vec<usize> = (block * size..(block + 1) * size).collect();
        idx.sort_by(|&a, &b| unit_order(key, &rows, bias, a, b));
        perm.extend(idx);
    }
    perm
}

/// Sorts the units of every hidden layer, first layer to last, descending
/// by `key`. Returns the sorted network and the permutation that produces it
/// from `net`. The result is a fixed point: sorting it again yields the identity.
pub fn remove_permutations(net: &Network, key: SortKey) -> Result<(Network, PermutationSet)> {
    let spec = net.spec();
    let mut total = PermutationSet::identity(spec)?;
    let mut current = net.clone();
    for (k, &l) in spec.permutation_interfaces().iter().enumerate() {
        let step_perm = sort_permutation(&current, l, key);
        let mut step = PermutationSet::identity(spec)?;
        step.perms[k] = step_perm;
        current = apply_permutation(&current, &step)?;
        total = total.then(&step);
    }
    Ok((current, total))
}

/// Result of [`normalize_neurons`].
#[derive(Clone, Debug)]
pub struct Normalized {
    pub network: Network,
    pub scaling: ScalingSet,
    /// `(layer, unit)` pairs whose incoming weights were all zero and kept scale 1.
    pub zero_norm_units: Vec<(usize, usize)>,
}

/// Rescales every unit of every layer but the last so that its incoming
/// weights have L2 norm `target_norm`, compensating in the next layer.
/// Batchnorm units are normalized on `|gamma|`. Layers are processed in
/// order so each norm is measured after the inbound compensation.
pub fn normalize_neurons(net: &Network, target_norm: f64, include_bias: bool) -> Result<Normalized> {
    if !(target_norm > 0.0 && target_norm.is_finite()) {
        return Err(crate::Error::InvalidArgument(format!("target_norm must be positive, got {target_norm}")));
    }
    let spec = net.spec();
    let shapes = net.shapes();
    let mut scaling = ScalingSet::ones(spec)?;
    let mut zero_norm_units = Vec::new();
    for l in spec.scaling_interfaces() {
        let n = shapes[l + 1].units();
        let mut sq = vec![0.0; n];
        match net.layer(l) {
            LayerParams::Weighted { weight, bias } => {
                for (widx, w) in weight.iter().enumerate() {
                    let (o, i) = weight_units(&spec.layers[l], shapes[l], widx);
                    let down = if l > 0 { scaling.scales[l - 1][i] } else { 1.0 };
                    let v = w / down;
                    sq[o] += v * v;
                }
                if include_bias {
                    if let Some(b) = bias {
                        sq.iter_mut().zip(b).for_each(|(s, b)| *s += b * b);
                    }
                }
            }
            LayerParams::BatchNorm { gamma, .. } => {
                sq.iter_mut().zip(gamma).for_each(|(s, g)| *s = g * g);
            }
        }
        for (o, s) in sq.into_iter().enumerate() {
            let norm = s.sqrt();
            if norm > 0.0 {
                scaling.scales[l][o] = target_norm / norm;
            } else {
                log::warn!("layer {l} unit {o} has zero incoming norm; keeping scale 1");
                zero_norm_units.push((l, o));
            }
        }
    }
    let network = apply_scaling(net, &scaling)?;
    Ok(Normalized {
        network,
        scaling,
        zero_norm_units,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CanonicalizeConfig {
    pub key: SortKey,
    pub target_norm: f64,
    pub include_bias_in_norm: bool,
    pub skip_scaling: bool,
    pub skip_permutation: bool,
    pub skip_shift: bool,
    /// Value the final biases are shifted to sum to (softmax heads only).
    pub shift_target: f64,
}

impl Default for CanonicalizeConfig {
    fn default() -> Self {
        CanonicalizeConfig {
            key: SortKey::FirstParam,
            target_norm: 1.0,
            include_bias_in_norm: false,
            skip_scaling: false,
            skip_permutation: false,
            skip_shift: false,
            shift_target: 0.0,
        }
    }
}

/// What [`canonicalize`] applied, in order: scaling, permutation, shift.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CanonicalizationRecord {
    pub scaling: ScalingSet,
    pub permutation: PermutationSet,
    pub shift: f64,
    pub shift_applied: bool,
    pub config: CanonicalizeConfig,
    pub zero_norm_units: Vec<(usize, usize)>,
}

impl CanonicalizationRecord {
    /// Re-applies the recorded transforms to `net`.
    pub fn replay(&self, net: &Network) -> Result<Network> {
        let scaled = apply_scaling(net, &self.scaling)?;
        let permuted = apply_permutation(&scaled, &self.permutation)?;
        if self.shift_applied {
            apply_softmax_shift(&permuted, self.shift)
        } else {
            Ok(permuted)
        }
    }
}

/// Maps `net` to the representative of its symmetry class: unit-norm hidden
/// units, sorted by `config.key`, with the softmax bias sum pinned.
pub fn canonicalize(net: &Network, config: &CanonicalizeConfig) -> Result<(Network, CanonicalizationRecord)> {
    let spec = net.spec();
    let (scaled, scaling, zero_norm_units) = if config.skip_scaling {
        (net.clone(), ScalingSet::ones(spec)?, Vec::new())
    } else {
        let n = normalize_neurons(net, config.target_norm, config.include_bias_in_norm)?;
        (n.network, n.scaling, n.zero_norm_units)
    };
    let (permuted, permutation) = if config.skip_permutation {
        (scaled, PermutationSet::identity(spec)?)
    } else {
        remove_permutations(&scaled, config.key)?
    };
    let final_bias = permuted.layers().last().and_then(|lp| match lp {
        LayerParams::Weighted { bias: Some(b), .. } => Some(b.clone()),
        _ => None,
    });
    let shiftable = spec.output_activation == OutputActivation::Softmax && final_bias.is_some();
    let (canonical, shift, shift_applied) = match final_bias {
        Some(b) if shiftable && !config.skip_shift => {
            let c = (config.shift_target - b.iter().sum::<f64>()) / b.len() as f64;
            (apply_softmax_shift(&permuted, c)?, c, true)
        }
        _ => (permuted, 0.0, false),
    };
    Ok((
        canonical,
        CanonicalizationRecord {
            scaling,
            permutation,
            shift,
            shift_applied,
            config: config.clone(),
            zero_norm_units,
        },
    ))
}
