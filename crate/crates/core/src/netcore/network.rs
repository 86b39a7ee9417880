use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::spec::{ArchitectureSpec, LayerSpec, Shape};
use crate::error::{Error, Result};

/// Batchnorm epsilon, fixed for every network and recorded in checkpoint headers.
pub const BN_EPS: f64 = 1e-5;

/// Name of the initialization scheme used by [`build_network`].
pub const INIT_SCHEME: &str = "uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)), stream per (seed, layer)";

/// Parameters of one layer.
#[derive(Clone, Debug, PartialEq)]
pub enum LayerParams {
    /// Linear or conv2d weights plus optional bias.
    Weighted {
        weight: Vec<f64>,
        bias: Option<Vec<f64>>,
    },
    /// Inference-mode batchnorm.
    BatchNorm {
        gamma: Vec<f64>,
        beta: Vec<f64>,
        running_mean: Vec<f64>,
        running_var: Vec<f64>,
    },
}

impl LayerParams {
    /// Weight tensor (gamma for batchnorm).
    pub fn weight(&self) -> &[f64] {
        match self {
            LayerParams::Weighted { weight, .. } => weight,
            LayerParams::BatchNorm { gamma, .. } => gamma,
        }
    }

    /// Bias vector (beta for batchnorm).
    pub fn bias(&self) -> Option<&[f64]> {
        match self {
            LayerParams::Weighted { bias, .. } => bias.as_deref(),
            LayerParams::BatchNorm { beta, .. } => Some(beta),
        }
    }

    /// All tensors in serialization order.
    pub fn tensors(&self) -> Vec<(&'static str, &[f64])> {
        match self {
            LayerParams::Weighted { weight, bias } => {
                let mut out = vec![("weight", weight.as_slice())];
                if let Some(b) = bias {
                    out.push(("bias", b.as_slice()));
                }
                out
            }
            LayerParams::BatchNorm {
                gamma,
                beta,
                running_mean,
                running_var,
            } => vec![
                ("weight", gamma.as_slice()),
                ("bias", beta.as_slice()),
                ("running_mean", running_mean.as_slice()),
                ("running_var", running_var.as_slice()),
            ],
        }
    }

    /// Trainable tensors: weight and bias (gamma and beta for batchnorm).
    pub fn trainable_mut(&mut self) -> Vec<&mut Vec<f64>> {
        match self {
            LayerParams::Weighted { weight, bias } => {
                let mut out = vec![weight];
                if let Some(b) = bias {
                    out.push(b);
                }
                out
            }
            LayerParams::BatchNorm { gamma, beta, .. } => vec![gamma, beta],
        }
    }
}

/// A sequential network. Values are immutable once built; every transform
/// returns a new network.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    spec: ArchitectureSpec,
    shapes: Vec<Shape>,
    layers: Vec<LayerParams>,
}

impl Network {
    /// Assembles a network from explicit parameters, checking every shape
    /// and value invariant.
    pub fn from_parts(spec: ArchitectureSpec, layers: Vec<LayerParams>) -> Result<Self> {
        let shapes = spec.shapes()?;
        if layers.len() != spec.layers.len() {
            return Err(Error::Shape(format!(
                "spec has {} layers, got {} parameter sets",
                spec.layers.len(),
                layers.len()
            )));
        }
        for (l, (ls, lp)) in spec.layers.iter().zip(&layers).enumerate() {
            check_layer(l, ls, lp)?;
        }
        Ok(Network {
            spec,
            shapes,
            layers,
        })
    }

    /// Fully connected network from `(weight rows, bias)` pairs.
    pub fn mlp_from_rows(
        layers: &[(Vec<Vec<f64>>, Option<Vec<f64>>)],
        output_activation: super::spec::OutputActivation,
    ) -> Result<Self> {
        let mut specs = Vec::new();
        let mut params = Vec::new();
        for (rows, bias) in layers {
            let out = rows.len();
            let inp = rows.first().map_or(0, Vec::len);
            specs.push(LayerSpec::Linear {
                in_features: inp,
                out_features: out,
                has_bias: bias.is_some(),
            });
            params.push(LayerParams::Weighted {
                weight: rows.iter().flatten().copied().collect(),
                bias: bias.clone(),
            });
        }
        let input_dim = match specs.first() {
            Some(LayerSpec::Linear { in_features, .. }) => *in_features,
            _ => 0,
        };
        let spec = ArchitectureSpec {
            input_dim,
            input_image: None,
            output_activation,
            layers: specs,
        };
        Network::from_parts(spec, params)
    }

    pub(crate) fn from_parts_unchecked(spec: ArchitectureSpec, shapes: Vec<Shape>, layers: Vec<LayerParams>) -> Self {
        Network { spec, shapes, layers }
    }

    pub fn spec(&self) -> &ArchitectureSpec {
        &self.spec
    }

    /// Activation shapes; `shapes()[l]` feeds layer `l`.
    pub fn shapes(&self) -> &[Shape] {
        &self.shapes
    }

    pub fn layers(&self) -> &[LayerParams] {
        &self.layers
    }

    pub fn layer(&self, l: usize) -> &LayerParams {
        &self.layers[l]
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn into_parts(self) -> (ArchitectureSpec, Vec<LayerParams>) {
        (self.spec, self.layers)
    }

    /// Applies `f` to a copy of the parameters and re-validates.
    pub fn map_layers(&self, f: impl FnOnce(&mut Vec<LayerParams>)) -> Result<Network> {
        let mut layers = self.layers.clone();
        f(&mut layers);
        Network::from_parts(self.spec.clone(), layers)
    }

    pub(crate) fn layers_mut(&mut self) -> &mut Vec<LayerParams> {
        &mut self.layers
    }

    /// Every float of every tensor, in serialization order.
    pub fn flat_params(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.tensors().into_iter().flat_map(|(_, t)| t.iter().copied()))
            .collect()
    }

    /// Trainable parameters of layer `l`, flattened (weight then bias).
    pub fn layer_vector(&self, l: usize) -> Vec<f64> {
        let lp = &self.layers[l];
        let mut v = lp.weight().to_vec();
        if let Some(b) = lp.bias() {
            v.extend_from_slice(b);
        }
        v
    }

    /// True iff every float matches bit for bit.
    pub fn bits_equal(&self, other: &Network) -> bool {
        self.spec == other.spec && {
            let a = self.flat_params();
            let b = other.flat_params();
            a.len() == b.len() && a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits())
        }
    }

    /// Largest absolute per-float difference; `None` when the architectures differ.
    pub fn max_abs_param_diff(&self, other: &Network) -> Option<f64> {
        if self.spec != other.spec {
            return None;
        }
        Some(
            self.flat_params()
                .iter()
                .zip(other.flat_params().iter())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max),
        )
    }

    /// Sum of squared weight/kernel entries. Biases, batchnorm beta and the
    /// running statistics never count; batchnorm gamma counts only when asked.
    pub fn mass_with(&self, include_batchnorm_gamma: bool) -> f64 {
        self.layers
            .iter()
            .map(|lp| match lp {
                LayerParams::Weighted { weight, .. } => weight.iter().map(|w| w * w).sum(),
                LayerParams::BatchNorm { gamma, .. } if include_batchnorm_gamma => {
                    gamma.iter().map(|g| g * g).sum()
                }
                LayerParams::BatchNorm { .. } => 0.0,
            })
            .sum()
    }
}

/// The L2 "mass" of a network, biases excluded.
pub fn network_mass(net: &Network) -> f64 {
    net.mass_with(false)
}

fn check_layer(l: usize, ls: &LayerSpec, lp: &LayerParams) -> Result<()> {
    let shape_err = |what: &str, want: usize, got: usize| {
        Err(Error::Shape(format!("layer {l} {what}: expected {want} values, got {got}")))
    };
    match (ls, lp) {
        (LayerSpec::Batchnorm { features }, LayerParams::BatchNorm {
            gamma,
            beta,
            running_mean,
            running_var,
        }) => {
            for (name, t) in [("gamma", gamma), ("beta", beta), ("running_mean", running_mean), ("running_var", running_var)] {
                if t.len() != *features {
                    return shape_err(name, *features, t.len());
                }
            }
            if let Some(v) = running_var.iter().find(|v| !(**v > 0.0)) {
                return Err(Error::InvalidParams(format!(
                    "layer {l} running_var must be strictly positive, found {v}"
                )));
            }
        }
        (LayerSpec::Batchnorm { .. }, _) => {
            return Err(Error::Shape(format!("layer {l} is batchnorm but has weight/bias parameters")))
        }
        (_, LayerParams::Weighted { weight, bias }) => {
            if weight.len() != ls.weight_len() {
                return shape_err("weight", ls.weight_len(), weight.len());
            }
            match (ls.has_bias(), bias) {
                (true, Some(b)) if b.len() != ls.out_units() => return shape_err("bias", ls.out_units(), b.len()),
                (true, None) => return Err(Error::Shape(format!("layer {l} declares a bias but none given"))),
                (false, Some(_)) => return Err(Error::Shape(format!("layer {l} has no bias in its spec"))),
                _ => {}
            }
        }
        (_, LayerParams::BatchNorm { .. }) => {
            return Err(Error::Shape(format!("layer {l} is linear/conv but has batchnorm parameters")))
        }
    }
    for (name, t) in lp.tensors() {
        if let Some(v) = t.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidParams(format!("layer {l} {name} contains non-finite value {v}")));
        }
    }
    Ok(())
}

/// Draws a network with weights and biases uniform on `±1/sqrt(fan_in)`.
/// Each layer gets its own ChaCha stream keyed by `(seed, layer index)`, so
/// the layers are independent and identically distributed given their shape.
/// Batchnorm layers start at gamma = 1, beta = 0, mean = 0, var = 1.
pub fn build_network(spec: &ArchitectureSpec, seed: u64) -> Result<Network> {
    let shapes = spec.shapes()?;
    let layers = spec
        .layers
        .iter()
        .enumerate()
        .map(|(l, ls)| match ls {
            LayerSpec::Batchnorm { features } => LayerParams::BatchNorm {
                gamma: vec![1.0; *features],
                beta: vec![0.0; *features],
                running_mean: vec![0.0; *features],
                running_var: vec![1.0; *features],
            },
            _ => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(l as u64);
                let bound = 1.0 / (ls.fan_in() as f64).sqrt();
                let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-bound..=bound)).collect() };
                let weight = draw(ls.weight_len());
                let bias = ls.has_bias().then(|| draw(ls.out_units()));
                LayerParams::Weighted { weight, bias }
            }
        })
        .collect();
    Ok(Network::from_parts_unchecked(spec.clone(), shapes, layers))
}
