use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Activation applied to the final layer's pre-activations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputActivation {
    Softmax,
    Sigmoid,
    None,
}

fn one() -> usize {
    1
}

fn yes() -> bool {
    true
}

/// One layer of a sequential network.
///
/// Weight layouts are row-major: linear `[out][in]`, conv2d
/// `[out_channels][in_channels / groups][kernel_h][kernel_w]`.
/// Convolutions use stride 1 and symmetric zero padding.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Linear {
        in_features: usize,
        out_features: usize,
        #[serde(default = "yes")]
        has_bias: bool,
    },
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        kernel_h: usize,
        kernel_w: usize,
        #[serde(default = "one")]
        groups: usize,
        #[serde(default)]
        padding: usize,
        #[serde(default = "yes")]
        has_bias: bool,
    },
    Batchnorm {
        features: usize,
    },
}

impl LayerSpec {
    pub fn linear(in_features: usize, out_features: usize) -> Self {
        LayerSpec::Linear {
            in_features,
            out_features,
            has_bias: true,
        }
    }

    pub fn conv2d(in_channels: usize, out_channels: usize, kernel: usize) -> Self {
        LayerSpec::Conv2d {
            in_channels,
            out_channels,
            kernel_h: kernel,
            kernel_w: kernel,
            groups: 1,
            padding: 0,
            has_bias: true,
        }
    }

    pub fn is_batchnorm(&self) -> bool {
        matches!(self, LayerSpec::Batchnorm { .. })
    }

    pub fn has_bias(&self) -> bool {
        match self {
            LayerSpec::Linear { has_bias, .. } | LayerSpec::Conv2d { has_bias, .. } => *has_bias,
            LayerSpec::Batchnorm { .. } => false,
        }
    }

    pub fn groups(&self) -> usize {
        match self {
            LayerSpec::Conv2d { groups, .. } => *groups,
            _ => 1,
        }
    }

    /// Number of output units (neurons or channels).
    pub fn out_units(&self) -> usize {
        match self {
            LayerSpec::Linear { out_features, .. } => *out_features,
            LayerSpec::Conv2d { out_channels, .. } => *out_channels,
            LayerSpec::Batchnorm { features } => *features,
        }
    }

    /// Fan-in of one output unit; for batchnorm this is 1.
    pub fn fan_in(&self) -> usize {
        match self {
            LayerSpec::Linear { in_features, .. } => *in_features,
            LayerSpec::Conv2d {
                in_channels,
                kernel_h,
                kernel_w,
                groups,
                ..
            } => in_channels / groups * kernel_h * kernel_w,
            LayerSpec::Batchnorm { .. } => 1,
        }
    }

    /// Number of weight (or gamma) entries.
    pub fn weight_len(&self) -> usize {
        self.out_units() * self.fan_in()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageShape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

/// Shape of the activation flowing between two layers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Shape {
    Flat(usize),
    Image {
        channels: usize,
        height: usize,
        width: usize,
    },
}

impl Shape {
    /// Units carrying an independent scale / permutation: features or channels.
    pub fn units(&self) -> usize {
        match *self {
            Shape::Flat(n) => n,
            Shape::Image { channels, .. } => channels,
        }
    }

    /// Spatial positions per unit.
    pub fn positions(&self) -> usize {
        match *self {
            Shape::Flat(_) => 1,
            Shape::Image { height, width, .. } => height * width,
        }
    }

    pub fn len(&self) -> usize {
        self.units() * self.positions()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A sequential feed-forward architecture. Every hidden activation is ReLU;
/// it is applied after a layer unless that layer is the last one or is
/// directly followed by a batchnorm (which then carries the ReLU).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchitectureSpec {
    pub input_dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_image: Option<ImageShape>,
    pub output_activation: OutputActivation,
    pub layers: Vec<LayerSpec>,
}

impl ArchitectureSpec {
    /// Fully connected ReLU network with the given widths (`widths[0]` is the input).
    pub fn mlp(widths: &[usize], output_activation: OutputActivation) -> Self {
        ArchitectureSpec {
            input_dim: widths[0],
            input_image: None,
            output_activation,
            layers: widths
                .windows(2)
                .map(|w| LayerSpec::linear(w[0], w[1]))
                .collect(),
        }
    }

    /// Parses a JSON architecture description, rejecting graph constructs
    /// (residual / skip connections) this toolkit does not model.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        if value.get("residual").is_some() || value.get("skip_connections").is_some() {
            return Err(Error::Unsupported("residual connections".into()));
        }
        if let Some(layers) = value.get("layers").and_then(|l| l.as_array()) {
            for layer in layers {
                if let Some(kind) = layer.get("kind").and_then(|k| k.as_str()) {
                    if matches!(kind, "residual" | "add" | "skip") {
                        return Err(Error::Unsupported(format!("layer kind {kind:?}")));
                    }
                }
            }
        }
        let spec: ArchitectureSpec = serde_json::from_value(value)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("architecture spec serializes")
    }

    /// SHA-256 of the compact JSON encoding.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_json().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn input_shape(&self) -> Shape {
        match self.input_image {
            Some(img) => Shape::Image {
                channels: img.channels,
                height: img.height,
                width: img.width,
            },
            None => Shape::Flat(self.input_dim),
        }
    }

    pub fn output_dim(&self) -> usize {
        self.shapes().map(|s| s.last().map_or(0, Shape::len)).unwrap_or(0)
    }

    /// Checks the architecture and returns the activation shape at every
    /// boundary: `shapes[0]` is the input, `shapes[l + 1]` the output of layer `l`.
    pub fn shapes(&self) -> Result<Vec<Shape>> {
        let bad = |layer: usize, reason: String| Error::InvalidSpec {
            prev: if layer == 0 {
                "input".to_string()
            } else {
                format!("layer {}", layer - 1)
            },
            layer,
            reason,
        };
        if self.input_dim == 0 {
            return Err(bad(0, "input_dim must be positive".into()));
        }
        if self.layers.is_empty() {
            return Err(bad(0, "network has no layers".into()));
        }
        if let Some(img) = self.input_image {
            if img.channels * img.height * img.width != self.input_dim {
                return Err(bad(
                    0,
                    format!(
                        "input image {}x{}x{} does not flatten to input_dim {}",
                        img.channels, img.height, img.width, self.input_dim
                    ),
                ));
            }
        }
        let mut shapes = vec![self.input_shape()];
        for (l, layer) in self.layers.iter().enumerate() {
            let inbound = shapes[l];
            let out = match *layer {
                LayerSpec::Linear {
                    in_features,
                    out_features,
                    ..
                } => {
                    if in_features != inbound.len() {
                        return Err(bad(
                            l,
                            format!(
                                "linear expects {in_features} inputs, previous output has {}",
                                inbound.len()
                            ),
                        ));
                    }
                    if out_features == 0 {
                        return Err(bad(l, "out_features must be positive".into()));
                    }
                    Shape::Flat(out_features)
                }
                LayerSpec::Conv2d {
                    in_channels,
                    out_channels,
                    kernel_h,
                    kernel_w,
                    groups,
                    padding,
                    ..
                } => {
                    let Shape::Image {
                        channels,
                        height,
                        width,
                    } = inbound
                    else {
                        return Err(bad(l, "conv2d needs an image-shaped input".into()));
                    };
                    if channels != in_channels {
                        return Err(bad(
                            l,
                            format!("conv2d expects {in_channels} channels, previous output has {channels}"),
                        ));
                    }
                    if kernel_h == 0 || kernel_w == 0 {
                        return Err(bad(l, "kernel sizes must be at least 1".into()));
                    }
                    if out_channels == 0 {
                        return Err(bad(l, "out_channels must be positive".into()));
                    }
                    if groups == 0 || in_channels % groups != 0 || out_channels % groups != 0 {
                        return Err(bad(
                            l,
                            format!("groups={groups} must divide in_channels={in_channels} and out_channels={out_channels}"),
                        ));
                    }
                    if height + 2 * padding < kernel_h || width + 2 * padding < kernel_w {
                        return Err(bad(l, "kernel larger than padded input".into()));
                    }
                    Shape::Image {
                        channels: out_channels,
                        height: height + 2 * padding - kernel_h + 1,
                        width: width + 2 * padding - kernel_w + 1,
                    }
                }
                LayerSpec::Batchnorm { features } => {
                    if l == 0 || self.layers[l - 1].is_batchnorm() {
                        return Err(bad(l, "batchnorm must follow a linear or conv2d layer".into()));
                    }
                    if features != inbound.units() {
                        return Err(bad(
                            l,
                            format!("batchnorm has {features} features, previous output has {} units", inbound.units()),
                        ));
                    }
                    inbound
                }
            };
            shapes.push(out);
        }
        if self.layers.last().is_some_and(LayerSpec::is_batchnorm) {
            return Err(bad(self.layers.len() - 1, "last layer must be linear or conv2d".into()));
        }
        Ok(shapes)
    }

    pub fn validate(&self) -> Result<()> {
        self.shapes().map(|_| ())
    }

    /// Whether a ReLU follows layer `l`.
    pub fn relu_after(&self, l: usize) -> bool {
        l + 1 < self.layers.len() && !self.layers[l + 1].is_batchnorm()
    }

    /// Layers whose outputs carry an independent positive scale: every layer but the last.
    pub fn scaling_interfaces(&self) -> Vec<usize> {
        (0..self.layers.len().saturating_sub(1)).collect()
    }

    /// Weight layers whose output units may be permuted: every linear/conv layer but the last.
    pub fn permutation_interfaces(&self) -> Vec<usize> {
        let last = self.layers.len().saturating_sub(1);
        (0..last).filter(|&l| !self.layers[l].is_batchnorm()).collect()
    }

    /// First linear/conv layer after `l`.
    pub fn next_weight_layer(&self, l: usize) -> Option<usize> {
        (l + 1..self.layers.len()).find(|&k| !self.layers[k].is_batchnorm())
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(layer_param_count).sum()
    }
}

/// Trainable parameters of one layer (batchnorm: gamma and beta).
pub fn layer_param_count(layer: &LayerSpec) -> usize {
    match layer {
        LayerSpec::Batchnorm { features } => 2 * features,
        _ => layer.weight_len() + if layer.has_bias() { layer.out_units() } else { 0 },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mlp_shapes() {
        let spec = ArchitectureSpec::mlp(&[2, 2, 1], OutputActivation::Sigmoid);
        assert_eq!(spec.shapes().unwrap(), vec![Shape::Flat(2), Shape::Flat(2), Shape::Flat(1)]);
        assert_eq!(spec.permutation_interfaces(), vec![0]);
        assert_eq!(spec.parameter_count(), 9);
    }

    #[test]
    fn dimension_mismatch_names_layer_pair() {
        let mut spec = ArchitectureSpec::mlp(&[2, 3, 1], OutputActivation::None);
        spec.layers[1] = LayerSpec::linear(4, 1);
        let err = spec.validate().unwrap_err().to_string();
        assert!(err.contains("layer 0 and layer 1"), "{err}");
    }

    #[test]
    fn grouped_conv_must_divide_channels() {
        let spec = ArchitectureSpec {
            input_dim: 3 * 16,
            input_image: Some(ImageShape {
                channels: 3,
                height: 4,
                width: 4,
            }),
            output_activation: OutputActivation::None,
            layers: vec![LayerSpec::Conv2d {
                in_channels: 3,
                out_channels: 4,
                kernel_h: 2,
                kernel_w: 2,
                groups: 2,
                padding: 0,
                has_bias: true,
            }],
        };
        assert!(spec.validate().is_err());
    }

    #[test]
    fn conv_then_batchnorm_then_linear() {
        let spec = ArchitectureSpec {
            input_dim: 2 * 9,
            input_image: Some(ImageShape {
                channels: 2,
                height: 3,
                width: 3,
            }),
            output_activation: OutputActivation::Softmax,
            layers: vec![
                LayerSpec::Conv2d {
                    in_channels: 2,
                    out_channels: 4,
                    kernel_h: 2,
                    kernel_w: 2,
                    groups: 1,
                    padding: 1,
                    has_bias: false,
                },
                LayerSpec::Batchnorm { features: 4 },
                LayerSpec::linear(4 * 16, 3),
            ],
        };
        let shapes = spec.shapes().unwrap();
        assert_eq!(shapes[2].len(), 64);
        assert!(!spec.relu_after(0));
        assert!(spec.relu_after(1));
        assert_eq!(spec.scaling_interfaces(), vec![0, 1]);
        assert_eq!(spec.permutation_interfaces(), vec![0]);
    }

    #[test]
    fn json_round_trip_and_residual_rejection() {
        let spec = ArchitectureSpec::mlp(&[2, 2, 1], OutputActivation::Sigmoid);
        assert_eq!(ArchitectureSpec::from_json(&spec.to_json()).unwrap(), spec);
        let text = r#"{"input_dim":2,"output_activation":"none","layers":[{"kind":"linear","in_features":2,"out_features":2},{"kind":"residual","from":0}]}"#;
        assert!(matches!(ArchitectureSpec::from_json(text), Err(Error::Unsupported(_))));
    }
}
