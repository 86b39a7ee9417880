use super::{PermutationSet, ScalingSet};
use crate::error::{Error, Result};
use crate::netcore::{LayerParams, LayerSpec, Network, OutputActivation, Shape, BN_EPS};

/// Output unit and inbound unit read by weight entry `widx` of a linear or conv layer.
#[inline]
pub(crate) fn weight_units(layer: &LayerSpec, inbound: Shape, widx: usize) -> (usize, usize) {
    let fan_in = layer.fan_in();
    let o = widx / fan_in;
    let r = widx % fan_in;
    match *layer {
        LayerSpec::Conv2d {
            in_channels,
            out_channels,
            kernel_h,
            kernel_w,
            groups,
            ..
        } => {
            let cl = r / (kernel_h * kernel_w);
            let group = o / (out_channels / groups);
            (o, group * (in_channels / groups) + cl)
        }
        _ => (o, r / inbound.positions()),
    }
}

/// Scales every hidden unit by `Λ` and compensates downstream.
///
/// Weight `W[o][i]` of layer `l` becomes `W[o][i] * λ_l[o] / λ_{l-1}[i]`
/// and bias `b[o]` becomes `b[o] * λ_l[o]`. A batchnorm layer absorbs its
/// inbound scale `α` exactly through its running statistics
/// (`μ ← αμ`, `σ² ← α²(σ² + ε) − ε`) and takes its outbound scale on gamma
/// and beta.
pub fn apply_scaling(net: &Network, scaling: &ScalingSet) -> Result<Network> {
    let spec = net.spec();
    scaling.validate(spec)?;
    let last = net.num_layers() - 1;
    let shapes = net.shapes();
    let mut out = net.clone();
    for (l, lp) in out.layers_mut().iter_mut().enumerate() {
        let inbound = (l > 0).then(|| &scaling.scales[l - 1]);
        let outbound = (l < last).then(|| &scaling.scales[l]);
        match lp {
            LayerParams::Weighted { weight, bias } => {
                let layer = &spec.layers[l];
                for (widx, w) in weight.iter_mut().enumerate() {
                    let (o, i) = weight_units(layer, shapes[l], widx);
                    let up = outbound.map_or(1.0, |s| s[o]);
                    let down = inbound.map_or(1.0, |s| s[i]);
                    *w = *w * up / down;
                }
                if let (Some(b), Some(s)) = (bias.as_mut(), outbound) {
                    b.iter_mut().zip(s).for_each(|(b, s)| *b *= s);
                }
            }
            LayerParams::BatchNorm {
                gamma,
                beta,
                running_mean,
                running_var,
            } => {
                if let Some(alpha) = inbound {
                    for c in 0..gamma.len() {
                        let a = alpha[c];
                        if a != 1.0 {
                            running_mean[c] *= a;
                            let var = a * a * (running_var[c] + BN_EPS) - BN_EPS;
                            if !(var > 0.0) {
                                return Err(Error::InvalidScale {
                                    interface: l - 1,
                                    unit: c,
                                    value: a,
                                });
                            }
                            running_var[c] = var;
                        }
                    }
                }
                if let Some(s) = outbound {
                    gamma.iter_mut().zip(s).for_each(|(g, s)| *g *= s);
                    beta.iter_mut().zip(s).for_each(|(b, s)| *b *= s);
                }
            }
        }
    }
    Ok(out)
}

/// Reorders hidden units: unit `i` of interface `k` becomes old unit
/// `Π[k][i]`; the rows of the producing layer, any batchnorm parameters in
/// between and the inbound columns (or channel kernels) of the next layer
/// move together. Pure data movement, so `Π` followed by `Π⁻¹` is bit-exact.
pub fn apply_permutation(net: &Network, perm: &PermutationSet) -> Result<Network> {
    let spec = net.spec();
    perm.validate(spec)?;
    let shapes = net.shapes();
    let n = net.num_layers();
    // Unit permutation of each layer's output and input.
    let mut out_perm: Vec<Option<&[usize]>> = vec![None; n];
    for (k, &l) in spec.permutation_interfaces().iter().enumerate() {
        out_perm[l] = Some(&perm.perms[k]);
        let mut j = l + 1;
        while j < n && spec.layers[j].is_batchnorm() {
            out_perm[j] = Some(&perm.perms[k]);
            j += 1;
        }
    }
    let mut result = net.clone();
    for (l, lp) in result.layers_mut().iter_mut().enumerate() {
        let pout = out_perm[l];
        let pin = if l > 0 { out_perm[l - 1] } else { None };
        if pout.is_none() && pin.is_none() {
            continue;
        }
        let gather = |v: &mut Vec<f64>, p: &[usize]| *v = p.iter().map(|&j| v[j]).collect();
        match lp {
            LayerParams::BatchNorm {
                gamma,
                beta,
                running_mean,
                running_var,
            } => {
                let p = pout.expect("batchnorm shares the permutation of its producer");
                for t in [gamma, beta, running_mean, running_var] {
                    gather(t, p);
                }
            }
            LayerParams::Weighted { weight, bias } => {
                let layer = &spec.layers[l];
                let fan_in = layer.fan_in();
                let inbound = shapes[l];
                let old = weight.clone();
                for (widx, w) in weight.iter_mut().enumerate() {
                    let o = widx / fan_in;
                    let r = widx % fan_in;
                    let src_o = pout.map_or(o, |p| p[o]);
                    let src_r = match (pin, layer) {
                        (None, _) => r,
                        (
                            Some(p),
                            LayerSpec::Conv2d {
                                in_channels,
                                kernel_h,
                                kernel_w,
                                groups,
                                ..
                            },
                        ) => {
                            let k2 = kernel_h * kernel_w;
                            let cpg = in_channels / groups;
                            let (_, c) = weight_units(layer, inbound, widx);
                            let src_c = p[c];
                            (src_c % cpg) * k2 + r % k2
                        }
                        (Some(p), _) => {
                            let pos = inbound.positions();
                            p[r / pos] * pos + r % pos
                        }
                    };
                    *w = old[src_o * fan_in + src_r];
                }
                if let (Some(b), Some(p)) = (bias.as_mut(), pout) {
                    gather(b, p);
                }
            }
        }
    }
    Ok(result)
}

/// Adds `c` to every final-layer bias; softmax probabilities are unchanged.
pub fn apply_softmax_shift(net: &Network, c: f64) -> Result<Network> {
    if net.spec().output_activation != OutputActivation::Softmax {
        return Err(Error::NoSoftmaxShift("output activation is not softmax".into()));
    }
    if !c.is_finite() {
        return Err(Error::NonFinite(format!("softmax shift {c}")));
    }
    let last = net.num_layers() - 1;
    let mut out = net.clone();
    match &mut out.layers_mut()[last] {
        LayerParams::Weighted { bias: Some(b), .. } => b.iter_mut().for_each(|v| *v += c),
        _ => return Err(Error::NoSoftmaxShift("final layer has no bias".into())),
    }
    Ok(out)
}
