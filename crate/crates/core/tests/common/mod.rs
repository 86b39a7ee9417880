#![allow(dead_code)]

use netsym::netcore::ImageShape;
use netsym::training::{Dataset, Loss};
use netsym::{build_network, ArchitectureSpec, LayerParams, LayerSpec, Network, OutputActivation};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn head(rng: &mut ChaCha8Rng) -> (OutputActivation, usize) {
    match rng.random_range(0..3) {
        0 => (OutputActivation::Softmax, rng.random_range(2..=4)),
        1 => (OutputActivation::Sigmoid, 1),
        _ => (OutputActivation::None, rng.random_range(1..=3)),
    }
}

/// Fully connected net with 2 to 4 weight layers.
pub fn random_mlp(rng: &mut ChaCha8Rng) -> ArchitectureSpec {
    let depth = rng.random_range(2..=4);
    let (act, out) = head(rng);
    let mut widths = vec![rng.random_range(1..=5)];
    for _ in 1..depth {
        widths.push(rng.random_range(2..=6));
    }
    widths.push(out);
    ArchitectureSpec::mlp(&widths, act)
}

/// Convolutional net: 1 to 3 convs (optionally grouped, optionally followed
/// by batchnorm) and a linear head. With `batchnorm = false` no batchnorm is used.
pub fn random_conv(rng: &mut ChaCha8Rng, batchnorm: bool) -> ArchitectureSpec {
    let convs = rng.random_range(1..=3);
    let (act, out) = head(rng);
    let mut channels = 2 * rng.random_range(1..=2);
    let mut side = 5;
    let input = ImageShape {
        channels,
        height: side,
        width: side,
    };
    let mut layers = Vec::new();
    for _ in 0..convs {
        let next = 2 * rng.random_range(1..=3);
        let padding = rng.random_range(0..=1);
        let kernel = rng.random_range(2..=3).min(side + 2 * padding);
        let groups = if rng.random_bool(0.5) { 2 } else { 1 };
        layers.push(LayerSpec::Conv2d {
            in_channels: channels,
            out_channels: next,
            kernel_h: kernel,
            kernel_w: kernel,
            groups,
            padding,
            has_bias: rng.random_bool(0.8),
        });
        side = side + 2 * padding + 1 - kernel;
        channels = next;
        if batchnorm && rng.random_bool(0.5) {
            layers.push(LayerSpec::Batchnorm { features: channels });
        }
    }
    layers.push(LayerSpec::linear(channels * side * side, out));
    ArchitectureSpec {
        input_dim: input.channels * input.height * input.width,
        input_image: Some(input),
        output_activation: act,
        layers,
    }
}

pub fn random_spec(rng: &mut ChaCha8Rng, batchnorm: bool) -> ArchitectureSpec {
    if rng.random_bool(0.5) {
        random_mlp(rng)
    } else {
        random_conv(rng, batchnorm)
    }
}

/// Gives batchnorm layers non-trivial affine parameters and running statistics.
pub fn randomize_batchnorm(net: &Network, rng: &mut ChaCha8Rng) -> Network {
    net.map_layers(|layers| {
        for lp in layers {
            if let LayerParams::BatchNorm {
                gamma,
                beta,
                running_mean,
                running_var,
            } = lp
            {
                for c in 0..gamma.len() {
                    gamma[c] = rng.random_range(0.5..1.5) * if rng.random_bool(0.2) { -1.0 } else { 1.0 };
                    beta[c] = rng.random_range(-0.5..0.5);
                    running_mean[c] = rng.random_range(-0.3..0.3);
                    running_var[c] = rng.random_range(0.5..2.0);
                }
            }
        }
    })
    .unwrap()
}

/// Random network (MLP or conv, batchnorm allowed) with randomized batchnorm state.
pub fn random_network(seed: u64) -> Network {
    let mut r = rng(seed);
    let spec = random_spec(&mut r, true);
    randomize_batchnorm(&build_network(&spec, seed).unwrap(), &mut r)
}

pub fn loss_for(spec: &ArchitectureSpec) -> Loss {
    match spec.output_activation {
        OutputActivation::Softmax => Loss::CrossEntropy,
        OutputActivation::Sigmoid => Loss::Bce,
        OutputActivation::None => Loss::Mse,
    }
}

/// Random inputs with targets matching the head of `spec`.
pub fn random_dataset(spec: &ArchitectureSpec, n: usize, rng: &mut ChaCha8Rng) -> Dataset {
    let inputs: Vec<Vec<f64>> = (0..n).map(|_| (0..spec.input_dim).map(|_| rng.random_range(-1.5..1.5)).collect()).collect();
    let out = spec.output_dim();
    match spec.output_activation {
        OutputActivation::Softmax => {
            let labels = (0..n).map(|_| rng.random_range(0..out)).collect();
            Dataset::classification(inputs, labels, out).unwrap()
        }
        OutputActivation::Sigmoid => {
            let labels = (0..n).map(|_| rng.random_range(0..2)).collect();
            Dataset::classification(inputs, labels, 2).unwrap()
        }
        OutputActivation::None => {
            let values = (0..n).map(|_| (0..out).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
            Dataset::regression(inputs, values).unwrap()
        }
    }
}
