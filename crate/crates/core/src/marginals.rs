//! Per-coordinate weight marginals across a posterior sample, raw, after
//! scale normalization, and after full canonicalization.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::ks_two_sample;
use crate::netcore::{LayerSpec, Network};
use crate::symmetry::{canonicalize, normalize_neurons, CanonicalizeConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarginalVariant {
    Raw,
    Normalized,
    Canonical,
}

impl MarginalVariant {
    pub const ALL: [MarginalVariant; 3] = [MarginalVariant::Raw, MarginalVariant::Normalized, MarginalVariant::Canonical];

    pub fn name(self) -> &'static str {
        match self {
            MarginalVariant::Raw => "raw",
            MarginalVariant::Normalized => "normalized",
            MarginalVariant::Canonical => "canonical",
        }
    }
}

/// Which coordinates of which tensor to follow. `coords = None` selects the whole tensor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginalSelection {
    pub layer: usize,
    pub tensor: String,
    pub coords: Option<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<usize>,
}

impl Histogram {
    /// Equal-width bins on `[lo, hi]`; `hi` itself falls in the last bin.
    pub fn new(values: &[f64], lo: f64, hi: f64, bins: usize) -> Self {
        let mut counts = vec![0; bins];
        let width = (hi - lo) / bins as f64;
        for &v in values {
            let b = if width > 0.0 { ((v - lo) / width).floor() as isize } else { 0 };
            counts[b.clamp(0, bins as isize - 1) as usize] += 1;
        }
        Histogram { lo, hi, counts }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoordinateMarginal {
    pub name: String,
    pub values: Vec<f64>,
    pub histogram: Histogram,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KsPair {
    pub a: String,
    pub b: String,
    pub statistic: f64,
    pub p_value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariantMarginals {
    pub variant: MarginalVariant,
    pub coordinates: Vec<CoordinateMarginal>,
    pub ks: Vec<KsPair>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginalsReport {
    pub selection: MarginalSelection,
    pub target_norm: f64,
    pub variants: Vec<VariantMarginals>,
}

fn tensor_names(net: &Network) -> Vec<String> {
    net.layers()
        .iter()
        .enumerate()
        .flat_map(|(l, lp)| lp.tensors().into_iter().map(move |(name, _)| format!("layers.{l}.{name}")))
        .collect()
}

/// `layers.{l}.{tensor}[o,i]` for linear weights, `[o]` for vectors, flat otherwise.
fn coord_name(net: &Network, sel: &MarginalSelection, k: usize) -> String {
    let base = format!("layers.{}.{}", sel.layer, sel.tensor);
    match (&net.spec().layers[sel.layer], sel.tensor.as_str()) {
        (LayerSpec::Linear { in_features, .. }, "weight") => format!("{base}[{},{}]", k / in_features, k % in_features),
        _ => format!("{base}[{k}]"),
    }
}

fn tensor_of<'a>(net: &'a Network, sel: &MarginalSelection) -> Option<&'a [f64]> {
    net.layers().get(sel.layer)?.tensors().into_iter().find(|(n, _)| *n == sel.tensor).map(|(_, t)| t)
}

/// Marginals of the selected coordinates for every variant, with pairwise KS tests between coordinates.
pub fn marginals(nets: &[Network], sel: &MarginalSelection, bins: usize, target_norm: f64) -> Result<MarginalsReport> {
    let first = nets.first().ok_or_else(|| Error::EmptySample("no checkpoints".into()))?;
    if bins == 0 {
        return Err(Error::InvalidArgument("bins must be at least 1".into()));
    }
    let Some(tensor) = tensor_of(first, sel) else {
        return Err(Error::InvalidArgument(format!(
            "no tensor layers.{}.{}; valid tensors: {}",
            sel.layer,
            sel.tensor,
            tensor_names(first).join(", ")
        )));
    };
    let len = tensor.len();
    let coords: Vec<usize> = sel.coords.clone().unwrap_or_else(|| (0..len).collect());
    if let Some(&bad) = coords.iter().find(|&&k| k >= len) {
        let names: Vec<String> = (0..len).map(|k| coord_name(first, sel, k)).collect();
        return Err(Error::InvalidArgument(format!(
            "coordinate {bad} out of range for layers.{}.{}; valid coordinates: {}",
            sel.layer,
            sel.tensor,
            names.join(", ")
        )));
    }
    if let Some(k) = nets.iter().position(|n| n.spec() != first.spec()) {
        return Err(Error::InvalidArgument(format!("checkpoint {k} has a different architecture")));
    }
    let canon_cfg = CanonicalizeConfig {
        target_norm,
        ..CanonicalizeConfig::default()
    };
    let variants = MarginalVariant::ALL
        .iter()
        .map(|&variant| {
            let transformed: Vec<Network> = match variant {
                MarginalVariant::Raw => nets.to_vec(),
                MarginalVariant::Normalized => nets
                    .iter()
                    .map(|n| normalize_neurons(n, target_norm, false).map(|r| r.network))
                    .collect::<Result<_>>()?,
                MarginalVariant::Canonical => nets.iter().map(|n| canonicalize(n, &canon_cfg).map(|r| r.0)).collect::<Result<_>>()?,
            };
            let columns: Vec<Vec<f64>> = coords
                .iter()
                .map(|&k| transformed.iter().map(|n| tensor_of(n, sel).expect("same spec")[k]).collect())
                .collect();
            let lo = columns.iter().flatten().copied().fold(f64::INFINITY, f64::min);
            let hi = columns.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
            let coordinates: Vec<CoordinateMarginal> = coords
                .iter()
                .zip(columns)
                .map(|(&k, values)| CoordinateMarginal {
                    name: coord_name(first, sel, k),
                    histogram: Histogram::new(&values, lo, hi, bins),
                    values,
                })
                .collect();
            let mut ks = Vec::new();
            for a in 0..coordinates.len() {
                for b in a + 1..coordinates.len() {
                    let r = ks_two_sample(&coordinates[a].values, &coordinates[b].values)?;
                    ks.push(KsPair {
                        a: coordinates[a].name.clone(),
                        b: coordinates[b].name.clone(),
                        statistic: r.statistic,
                        p_value: r.p_value,
                    });
                }
            }
            Ok(VariantMarginals { variant, coordinates, ks })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MarginalsReport {
        selection: sel.clone(),
        target_norm,
        variants,
    })
}
