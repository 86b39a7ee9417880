use serde::{Deserialize, Serialize};

use super::permutation_blocks;
use crate::error::Result;
use crate::netcore::{ArchitectureSpec, LayerSpec};

/// `ln(n!)` by direct summation.
pub fn ln_factorial(n: usize) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterfaceCount {
    /// Layer producing the interface.
    pub layer: usize,
    pub width: usize,
    /// Number of groups the units may only be permuted within.
    pub permutation_blocks: usize,
    pub log_permutations: f64,
    pub scaling_dof: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymmetryCount {
    pub interfaces: Vec<InterfaceCount>,
    pub total_log_permutations: f64,
    pub total_scaling_dof: usize,
}

/// Counts permutation and scaling degrees of freedom per hidden interface.
/// Batchnorm layers leave permutations unchanged and add one scaling degree
/// of freedom per feature.
pub fn count_symmetries(spec: &ArchitectureSpec) -> Result<SymmetryCount> {
    let shapes = spec.shapes()?;
    let interfaces: Vec<InterfaceCount> = spec
        .permutation_interfaces()
        .into_iter()
        .map(|l| {
            let width = shapes[l + 1].units();
            let blocks = permutation_blocks(spec, l);
            let batchnorm_features: usize = spec.layers[l + 1..]
                .iter()
                .take_while(|ls| ls.is_batchnorm())
                .map(|ls| match ls {
                    LayerSpec::Batchnorm { features } => *features,
                    _ => 0,
                })
                .sum();
            InterfaceCount {
                layer: l,
                width,
                permutation_blocks: blocks,
                log_permutations: blocks as f64 * ln_factorial(width / blocks),
                scaling_dof: width + batchnorm_features,
            }
        })
        .collect();
    Ok(SymmetryCount {
        total_log_permutations: interfaces.iter().map(|i| i.log_permutations).sum(),
        total_scaling_dof: interfaces.iter().map(|i| i.scaling_dof).sum(),
        interfaces,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netcore::{ImageShape, OutputActivation};

    #[test]
    fn toy_perceptron() {
        let c = count_symmetries(&ArchitectureSpec::mlp(&[2, 2, 1], OutputActivation::Sigmoid)).unwrap();
        assert_eq!(c.interfaces.len(), 1);
        assert_eq!(c.interfaces[0].scaling_dof, 2);
        assert!((c.interfaces[0].log_permutations - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn width_one_has_no_permutations() {
        let c = count_symmetries(&ArchitectureSpec::mlp(&[3, 1, 1], OutputActivation::None)).unwrap();
        assert_eq!(c.interfaces[0].log_permutations, 0.0);
    }

    #[test]
    fn linear_widths_match_exact_factorials() {
        let widths = [3usize, 7, 12, 20, 1, 5];
        let mut all = vec![2];
        all.extend(widths);
        all.push(1);
        let c = count_symmetries(&ArchitectureSpec::mlp(&all, OutputActivation::None)).unwrap();
        let exact: f64 = widths.iter().map(|&n| ((1..=n as u64).product::<u64>() as f64).ln()).sum();
        assert!((c.total_log_permutations - exact).abs() < 1e-10);
    }

    fn conv_spec(second_groups: usize, batchnorm: bool) -> ArchitectureSpec {
        let mut layers = vec![LayerSpec::Conv2d {
            in_channels: 1,
            out_channels: 4,
            kernel_h: 1,
            kernel_w: 1,
            groups: 1,
            padding: 0,
            has_bias: !batchnorm,
        }];
        if batchnorm {
            layers.push(LayerSpec::Batchnorm { features: 4 });
        }
        layers.push(LayerSpec::Conv2d {
            in_channels: 4,
            out_channels: 2,
            kernel_h: 1,
            kernel_w: 1,
            groups: second_groups,
            padding: 0,
            has_bias: true,
        });
        ArchitectureSpec {
            input_dim: 4,
            input_image: Some(ImageShape { channels: 1, height: 2, width: 2 }),
            output_activation: OutputActivation::None,
            layers,
        }
    }

    #[test]
    fn grouped_successor_restricts_permutations() {
        let c = count_symmetries(&conv_spec(2, false)).unwrap();
        assert!((c.interfaces[0].log_permutations - 4f64.ln()).abs() < 1e-15);
        assert_eq!(c.interfaces[0].scaling_dof, 4);
    }

    #[test]
    fn batchnorm_adds_scaling_dof_only() {
        let c = count_symmetries(&conv_spec(1, true)).unwrap();
        assert!((c.interfaces[0].log_permutations - ln_factorial(4)).abs() < 1e-15);
        assert_eq!(c.interfaces[0].scaling_dof, 8);
    }
}
