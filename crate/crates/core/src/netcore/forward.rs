use super::network::{LayerParams, Network, BN_EPS};
use super::spec::{LayerSpec, OutputActivation, Shape};
use crate::error::{Error, Result};

/// Evaluates the network on one flattened input (C×H×W row-major for images).
pub fn forward(net: &Network, x: &[f64]) -> Result<Vec<f64>> {
    let logits = forward_logits(net, x)?;
    Ok(apply_output_activation(net.spec().output_activation, &logits))
}

/// Final pre-activations `z^[L]`.
pub fn forward_logits(net: &Network, x: &[f64]) -> Result<Vec<f64>> {
    check_input(net, x)?;
    let mut a = x.to_vec();
    for l in 0..net.num_layers() {
        a = layer_forward(net, l, &a);
        if net.spec().relu_after(l) {
            a.iter_mut().for_each(|v| *v = v.max(0.0));
        }
    }
    Ok(a)
}

/// Forward pass over a row-major batch (`n × input_dim`).
pub fn forward_batch(net: &Network, inputs: &[f64]) -> Result<Vec<Vec<f64>>> {
    let d = net.spec().input_dim;
    if inputs.len() % d != 0 {
        return Err(Error::Shape(format!("batch of {} floats is not a multiple of input_dim {d}", inputs.len())));
    }
    inputs.chunks(d).map(|x| forward(net, x)).collect()
}

pub(crate) fn check_input(net: &Network, x: &[f64]) -> Result<()> {
    if x.len() != net.spec().input_dim {
        return Err(Error::Shape(format!(
            "input has {} values, network expects {}",
            x.len(),
            net.spec().input_dim
        )));
    }
    Ok(())
}

pub fn apply_output_activation(act: OutputActivation, z: &[f64]) -> Vec<f64> {
    match act {
        OutputActivation::None => z.to_vec(),
        OutputActivation::Sigmoid => z.iter().map(|&v| sigmoid(v)).collect(),
        OutputActivation::Softmax => softmax(z),
    }
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Affine part of layer `l` (no activation).
pub(crate) fn layer_forward(net: &Network, l: usize, x: &[f64]) -> Vec<f64> {
    let inbound = net.shapes()[l];
    let outbound = net.shapes()[l + 1];
    match (&net.spec().layers[l], net.layer(l)) {
        (LayerSpec::Linear { in_features, out_features, .. }, LayerParams::Weighted { weight, bias }) => {
            (0..*out_features)
                .map(|o| {
                    let row = &weight[o * in_features..(o + 1) * in_features];
                    let dot: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum();
                    dot + bias.as_ref().map_or(0.0, |b| b[o])
                })
                .collect()
        }
        (conv @ LayerSpec::Conv2d { .. }, LayerParams::Weighted { weight, bias }) => {
            conv_forward(conv, inbound, outbound, weight, bias.as_deref(), x)
        }
        (
            LayerSpec::Batchnorm { .. },
            LayerParams::BatchNorm {
                gamma,
                beta,
                running_mean,
                running_var,
            },
        ) => {
            let pos = inbound.positions();
            let mut y = vec![0.0; x.len()];
            for c in 0..inbound.units() {
                let s = (running_var[c] + BN_EPS).sqrt();
                for p in 0..pos {
                    let i = c * pos + p;
                    y[i] = gamma[c] * (x[i] - running_mean[c]) / s + beta[c];
                }
            }
            y
        }
        _ => unreachable!("parameters validated against spec"),
    }
}

pub(crate) struct ConvGeom {
    pub cin: usize,
    pub cout: usize,
    pub kh: usize,
    pub kw: usize,
    pub cpg_in: usize,
    pub cpg_out: usize,
    pub pad: isize,
    pub h: usize,
    pub w: usize,
    pub oh: usize,
    pub ow: usize,
}

pub(crate) fn conv_geom(spec: &LayerSpec, inbound: Shape, outbound: Shape) -> ConvGeom {
    let LayerSpec::Conv2d {
        in_channels,
        out_channels,
        kernel_h,
        kernel_w,
        groups,
        padding,
        ..
    } = *spec
    else {
        unreachable!()
    };
    let (Shape::Image { height: h, width: w, .. }, Shape::Image { height: oh, width: ow, .. }) = (inbound, outbound) else {
        unreachable!()
    };
    ConvGeom {
        cin: in_channels,
        cout: out_channels,
        kh: kernel_h,
        kw: kernel_w,
        cpg_in: in_channels / groups,
        cpg_out: out_channels / groups,
        pad: padding as isize,
        h,
        w,
        oh,
        ow,
    }
}

/// Calls `f(weight_index, input_index, output_index)` for every multiply of the convolution.
#[inline]
pub(crate) fn conv_for_each(g: &ConvGeom, mut f: impl FnMut(usize, usize, usize)) {
    for o in 0..g.cout {
        let group = o / g.cpg_out;
        for cl in 0..g.cpg_in {
            let c = group * g.cpg_in + cl;
            for i in 0..g.kh {
                for j in 0..g.kw {
                    let widx = ((o * g.cpg_in + cl) * g.kh + i) * g.kw + j;
                    for y in 0..g.oh {
                        let iy = y as isize + i as isize - g.pad;
                        if iy < 0 || iy >= g.h as isize {
                            continue;
                        }
                        for x in 0..g.ow {
                            let ix = x as isize + j as isize - g.pad;
                            if ix < 0 || ix >= g.w as isize {
                                continue;
                            }
                            let in_idx = (c * g.h + iy as usize) * g.w + ix as usize;
                            let out_idx = (o * g.oh + y) * g.ow + x;
                            f(widx, in_idx, out_idx);
                        }
                    }
                }
            }
        }
    }
    let _ = g.cin;
}

fn conv_forward(spec: &LayerSpec, inbound: Shape, outbound: Shape, weight: &[f64], bias: Option<&[f64]>, x: &[f64]) -> Vec<f64> {
    let g = conv_geom(spec, inbound, outbound);
    let mut y = vec![0.0; outbound.len()];
    conv_for_each(&g, |wi, ii, oi| y[oi] += weight[wi] * x[ii]);
    if let Some(b) = bias {
        let pos = g.oh * g.ow;
        for (o, bo) in b.iter().enumerate() {
            y[o * pos..(o + 1) * pos].iter_mut().for_each(|v| *v += bo);
        }
    }
    y
}
