use serde::{Deserialize, Serialize};

use super::task::{Dataset, Targets};
use crate::error::{Error, Result};
use crate::netcore::{conv_for_each, conv_geom, layer_forward, sigmoid, LayerParams, LayerSpec, Network, OutputActivation, BN_EPS};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    /// Binary cross-entropy on a single sigmoid output.
    Bce,
    /// Categorical cross-entropy on a softmax head.
    CrossEntropy,
    /// `½‖z − t‖²` on raw outputs.
    Mse,
}

impl std::str::FromStr for Loss {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "bce" => Ok(Loss::Bce),
            "cross_entropy" | "ce" => Ok(Loss::CrossEntropy),
            "mse" => Ok(Loss::Mse),
            other => Err(format!("unknown loss {other:?} (expected bce, cross_entropy or mse)")),
        }
    }
}

impl Loss {
    pub fn check(self, net: &Network, data: &Dataset) -> Result<()> {
        let spec = net.spec();
        let out = spec.output_dim();
        if data.input_dim != spec.input_dim {
            return Err(Error::Shape(format!(
                "dataset inputs have {} values, network expects {}",
                data.input_dim, spec.input_dim
            )));
        }
        let ok = match (self, &data.targets) {
            (Loss::Bce, Targets::Classes { num_classes, .. }) => {
                spec.output_activation == OutputActivation::Sigmoid && out == 1 && *num_classes <= 2
            }
            (Loss::CrossEntropy, Targets::Classes { num_classes, .. }) => {
                spec.output_activation == OutputActivation::Softmax && out == *num_classes
            }
            (Loss::Mse, Targets::Values { dim, .. }) => spec.output_activation == OutputActivation::None && out == *dim,
            _ => false,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "loss {self:?} does not fit a {:?} head with {out} outputs on these targets",
                spec.output_activation
            )))
        }
    }

    /// Loss of one example and its gradient with respect to the logits.
    fn value_and_delta(self, z: &[f64], data: &Dataset, n: usize) -> (f64, Vec<f64>) {
        match (self, &data.targets) {
            (Loss::Bce, Targets::Classes { labels, .. }) => {
                let y = labels[n] as f64;
                let z0 = z[0];
                // log(1 + e^z) − y z, stable for both signs.
                let softplus = z0.max(0.0) + (-z0.abs()).exp().ln_1p();
                (softplus - y * z0, vec![sigmoid(z0) - y])
            }
            (Loss::CrossEntropy, Targets::Classes { labels, .. }) => {
                let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
                let y = labels[n];
                let delta = z
                    .iter()
                    .enumerate()
                    .map(|(c, v)| (v - lse).exp() - if c == y { 1.0 } else { 0.0 })
                    .collect();
                (lse - z[y], delta)
            }
            (Loss::Mse, Targets::Values { values, .. }) => {
                let delta: Vec<f64> = z.iter().zip(&values[n]).map(|(a, t)| a - t).collect();
                (0.5 * delta.iter().map(|d| d * d).sum::<f64>(), delta)
            }
            _ => unreachable!("loss checked against targets"),
        }
    }
}

/// Gradient buffers shaped like the trainable tensors of each layer
/// (weight then bias; gamma then beta for batchnorm).
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Vec<Vec<f64>>>,
}

impl Gradients {
    pub fn zeros(net: &Network) -> Self {
        Gradients {
            layers: net
                .layers()
                .iter()
                .map(|lp| match lp {
                    LayerParams::Weighted { weight, bias } => {
                        let mut t = vec![vec![0.0; weight.len()]];
                        if let Some(b) = bias {
                            t.push(vec![0.0; b.len()]);
                        }
                        t
                    }
                    LayerParams::BatchNorm { gamma, .. } => vec![vec![0.0; gamma.len()]; 2],
                })
                .collect(),
        }
    }

    fn scale(&mut self, s: f64) {
        self.layers.iter_mut().flatten().flatten().for_each(|g| *g *= s);
    }

    pub fn flat(&self) -> Vec<f64> {
        self.layers.iter().flatten().flatten().copied().collect()
    }
}

/// Accumulates the gradient of one example into `grads` and returns its loss.
fn backprop_one(net: &Network, loss: Loss, data: &Dataset, n: usize, grads: &mut Gradients) -> f64 {
    let spec = net.spec();
    let shapes = net.shapes();
    let nl = net.num_layers();
    // acts[l] is the input of layer l; pre[l] its affine output.
    let mut acts = Vec::with_capacity(nl + 1);
    let mut pre = Vec::with_capacity(nl);
    acts.push(data.inputs[n].clone());
    for l in 0..nl {
        let z = layer_forward(net, l, &acts[l]);
        let a = if spec.relu_after(l) { z.iter().map(|v| v.max(0.0)).collect() } else { z.clone() };
        pre.push(z);
        acts.push(a);
    }
    let (value, mut delta) = loss.value_and_delta(&pre[nl - 1], data, n);
    for l in (0..nl).rev() {
        if spec.relu_after(l) {
            delta.iter_mut().zip(&pre[l]).for_each(|(d, z)| {
                if *z <= 0.0 {
                    *d = 0.0
                }
            });
        }
        let x = &acts[l];
        let g = &mut grads.layers[l];
        let mut din = vec![0.0; x.len()];
        match (&spec.layers[l], net.layer(l)) {
            (LayerSpec::Linear { in_features, .. }, LayerParams::Weighted { weight, bias }) => {
                for (o, &d) in delta.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    let row = o * in_features;
                    for i in 0..*in_features {
                        g[0][row + i] += d * x[i];
                        din[i] += weight[row + i] * d;
                    }
                }
                if bias.is_some() {
                    g[1].iter_mut().zip(&delta).for_each(|(gb, d)| *gb += d);
                }
            }
            (conv @ LayerSpec::Conv2d { .. }, LayerParams::Weighted { weight, bias }) => {
                let geom = conv_geom(conv, shapes[l], shapes[l + 1]);
                let gw = &mut g[0];
                conv_for_each(&geom, |wi, ii, oi| {
                    gw[wi] += delta[oi] * x[ii];
                    din[ii] += weight[wi] * delta[oi];
                });
                if bias.is_some() {
                    let pos = shapes[l + 1].positions();
                    for (o, gb) in g[1].iter_mut().enumerate() {
                        *gb += delta[o * pos..(o + 1) * pos].iter().sum::<f64>();
                    }
                }
            }
            (
                LayerSpec::Batchnorm { .. },
                LayerParams::BatchNorm {
                    gamma,
                    running_mean,
                    running_var,
                    ..
                },
            ) => {
                let pos = shapes[l].positions();
                for c in 0..gamma.len() {
                    let s = (running_var[c] + BN_EPS).sqrt();
                    for p in 0..pos {
                        let i = c * pos + p;
                        g[0][c] += delta[i] * (x[i] - running_mean[c]) / s;
                        g[1][c] += delta[i];
                        din[i] = delta[i] * gamma[c] / s;
                    }
                }
            }
            _ => unreachable!("parameters validated against spec"),
        }
        delta = din;
    }
    value
}

/// Mean loss over `indices` and its gradient with respect to every trainable parameter.
pub fn loss_and_grad(net: &Network, data: &Dataset, indices: &[usize], loss: Loss) -> Result<(f64, Gradients)> {
    loss.check(net, data)?;
    if indices.is_empty() {
        return Err(Error::EmptySample("empty batch".into()));
    }
    let mut grads = Gradients::zeros(net);
    let mut total = 0.0;
    for &n in indices {
        total += backprop_one(net, loss, data, n, &mut grads);
    }
    let inv = 1.0 / indices.len() as f64;
    grads.scale(inv);
    Ok((total * inv, grads))
}

/// Mean loss over the whole dataset.
pub fn dataset_loss(net: &Network, data: &Dataset, loss: Loss) -> Result<f64> {
    loss.check(net, data)?;
    let mut total = 0.0;
    for n in 0..data.len() {
        let z = crate::netcore::forward_logits(net, &data.inputs[n])?;
        total += loss.value_and_delta(&z, data, n).0;
    }
    Ok(total / data.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netcore::{build_network, ArchitectureSpec};

    #[test]
    fn bce_matches_direct_formula() {
        let net = Network::mlp_from_rows(&[(vec![vec![1.0]], Some(vec![0.0]))], OutputActivation::Sigmoid).unwrap();
        let data = Dataset::classification(vec![vec![0.0], vec![2.0]], vec![1, 0], 2).unwrap();
        let l = dataset_loss(&net, &data, Loss::Bce).unwrap();
        let p = 1.0 / (1.0 + (-2.0f64).exp());
        let want = (-(0.5f64).ln() - (1.0 - p).ln()) / 2.0;
        assert!((l - want).abs() < 1e-14);
    }

    #[test]
    fn least_squares_gradient() {
        // z = w x with w = 3, x = 2, t = 1: loss ½(6 − 1)² = 12.5, dL/dw = (6 − 1)·2 = 10.
        let net = Network::mlp_from_rows(&[(vec![vec![3.0]], None)], OutputActivation::None).unwrap();
        let data = Dataset::regression(vec![vec![2.0]], vec![vec![1.0]]).unwrap();
        let (l, g) = loss_and_grad(&net, &data, &[0], Loss::Mse).unwrap();
        assert_eq!(l, 12.5);
        assert_eq!(g.layers[0][0], vec![10.0]);
    }

    #[test]
    fn rejects_mismatched_head() {
        let net = build_network(&ArchitectureSpec::mlp(&[2, 3], OutputActivation::Softmax), 0).unwrap();
        let data = Dataset::classification(vec![vec![0.0, 1.0]], vec![1], 2).unwrap();
        assert!(loss_and_grad(&net, &data, &[0], Loss::Bce).is_err());
        assert!(loss_and_grad(&net, &data, &[0], Loss::CrossEntropy).is_err());
    }
}
