//! Scaling, permutation and softmax-shift symmetries and their removal.
//!
//! A *scaling interface* is the output of any layer but the last; a
//! *permutation interface* is the output of any linear/conv layer but the
//! last (batchnorm layers carry the permutation of the layer they follow).

mod canonical;
mod count;
mod ops;
mod verify;

pub use canonical::{
    canonicalize, normalize_neurons, remove_permutations, CanonicalizationRecord, CanonicalizeConfig, Normalized, SortKey,
};
pub use count::{count_symmetries, ln_factorial, InterfaceCount, SymmetryCount};
pub use ops::{apply_permutation, apply_scaling, apply_softmax_shift};
pub(crate) use ops::weight_units;
pub use verify::{random_symmetry, verify_equivalence, EquivalenceReport};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netcore::ArchitectureSpec;

/// Positive per-unit scales, one vector per scaling interface (`scales[l]`
/// belongs to the output of layer `l`). The input and output scales are
/// implicitly 1 and never stored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingSet {
    pub scales: Vec<Vec<f64>>,
}

impl ScalingSet {
    pub fn ones(spec: &ArchitectureSpec) -> Result<Self> {
        let shapes = spec.shapes()?;
        Ok(ScalingSet {
            scales: spec
                .scaling_interfaces()
                .into_iter()
                .map(|l| vec![1.0; shapes[l + 1].units()])
                .collect(),
        })
    }

    /// Element-wise product, the composition of two scalings.
    pub fn compose(&self, other: &ScalingSet) -> ScalingSet {
        ScalingSet {
            scales: self
                .scales
                .iter()
                .zip(&other.scales)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x * y).collect())
                .collect(),
        }
    }

    pub fn inverse(&self) -> ScalingSet {
        ScalingSet {
            scales: self.scales.iter().map(|v| v.iter().map(|x| 1.0 / x).collect()).collect(),
        }
    }

    pub fn from_log(log_scales: &[Vec<f64>]) -> Self {
        ScalingSet {
            scales: log_scales.iter().map(|v| v.iter().map(|u| u.exp()).collect()).collect(),
        }
    }

    pub fn is_identity(&self) -> bool {
        self.scales.iter().flatten().all(|&s| s == 1.0)
    }

    pub fn validate(&self, spec: &ArchitectureSpec) -> Result<()> {
        let shapes = spec.shapes()?;
        let ifaces = spec.scaling_interfaces();
        if self.scales.len() != ifaces.len() {
            return Err(Error::Shape(format!(
                "scaling set has {} interfaces, network has {}",
                self.scales.len(),
                ifaces.len()
            )));
        }
        for (k, (&l, s)) in ifaces.iter().zip(&self.scales).enumerate() {
            let want = shapes[l + 1].units();
            if s.len() != want {
                return Err(Error::Shape(format!(
                    "scaling interface {k} has {} scales, layer {l} has {want} units",
                    s.len()
                )));
            }
            if let Some((unit, &value)) = s.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v > 0.0)) {
                return Err(Error::InvalidScale {
                    interface: k,
                    unit,
                    value,
                });
            }
        }
        Ok(())
    }
}

/// One permutation per permutation interface. `perms[k][i] = j` means new
/// unit `i` is old unit `j`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PermutationSet {
    pub perms: Vec<Vec<usize>>,
}

impl PermutationSet {
    pub fn identity(spec: &ArchitectureSpec) -> Result<Self> {
        let shapes = spec.shapes()?;
        Ok(PermutationSet {
            perms: spec
                .permutation_interfaces()
                .into_iter()
                .map(|l| (0..shapes[l + 1].units()).collect())
                .collect(),
        })
    }

    pub fn inverse(&self) -> PermutationSet {
        PermutationSet {
            perms: self
                .perms
                .iter()
                .map(|p| {
                    let mut inv = vec![0; p.len()];
                    for (i, &j) in p.iter().enumerate() {
                        inv[j] = i;
                    }
                    inv
                })
                .collect(),
        }
    }

    /// Permutation equal to applying `self` first and `then` second.
    pub fn then(&self, then: &PermutationSet) -> PermutationSet {
        PermutationSet {
            perms: self
                .perms
                .iter()
                .zip(&then.perms)
                .map(|(first, second)| second.iter().map(|&i| first[i]).collect())
                .collect(),
        }
    }

    pub fn is_identity(&self) -> bool {
        self.perms.iter().all(|p| p.iter().enumerate().all(|(i, &j)| i == j))
    }

    /// Checks bijectivity and the intra-block constraint imposed by grouped convolutions.
    pub fn validate(&self, spec: &ArchitectureSpec) -> Result<()> {
        let shapes = spec.shapes()?;
        let ifaces = spec.permutation_interfaces();
        if self.perms.len() != ifaces.len() {
            return Err(Error::Shape(format!(
                "permutation set has {} interfaces, network has {}",
                self.perms.len(),
                ifaces.len()
            )));
        }
        for (k, (&l, p)) in ifaces.iter().zip(&self.perms).enumerate() {
            let n = shapes[l + 1].units();
            let bad = |reason: String| Error::InvalidPermutation { interface: k, reason };
            if p.len() != n {
                return Err(bad(format!("length {} but layer {l} has {n} units", p.len())));
            }
            let mut seen = vec![false; n];
            for &j in p {
                if j >= n || std::mem::replace(&mut seen[j], true) {
                    return Err(bad(format!("index {j} out of range or repeated; not a bijection")));
                }
            }
            let blocks = permutation_blocks(spec, l);
            let size = n / blocks;
            if let Some((i, &j)) = p.iter().enumerate().find(|(i, j)| i / size != *j / size) {
                return Err(bad(format!(
                    "unit {j} moved to position {i} across a group boundary ({blocks} groups of {size})"
                )));
            }
        }
        Ok(())
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Number of contiguous blocks the units at permutation interface `l` may
/// only be permuted within: the least common multiple of the group count of
/// layer `l` itself and of the next linear/conv layer.
pub fn permutation_blocks(spec: &ArchitectureSpec, l: usize) -> usize {
    let own = spec.layers[l].groups();
    let next = spec.next_weight_layer(l).map_or(1, |k| spec.layers[k].groups());
    own / gcd(own, next) * next
}
