//! Minimum-mass scaling.
//!
//! For a network of linear/conv layers, the mass after scaling by `Λ` is
//!
//! ```text
//! m(Λ) = Σ_l Σ_{o,i} M^[l][o][i] · λ_l[o]² / λ_{l-1}[i]²
//! ```
//!
//! where `M^[l]` aggregates squared weights per (output unit, input unit).
//! With `u = ln λ` every term is `M · exp(2u_l[o] − 2u_{l-1}[i])`, a convex
//! function of `u`, so the problem is solved by descent in log-scale space.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netcore::{network_mass, LayerParams, LayerSpec, Network};
use crate::symmetry::{apply_scaling, ScalingSet};

/// Squared-weight mass per layer, aggregated to `out_units × in_units`
/// (kernel positions and, for a linear layer reading an image, spatial
/// positions are summed).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MassTerms {
    pub layers: Vec<MassMatrix>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MassMatrix {
    pub rows: usize,
    pub cols: usize,
    /// Row-major `rows × cols`.
    pub values: Vec<f64>,
}

impl MassMatrix {
    pub fn get(&self, o: usize, i: usize) -> f64 {
        self.values[o * self.cols + i]
    }
}

impl MassTerms {
    pub fn total(&self) -> f64 {
        self.layers.iter().flat_map(|m| m.values.iter()).sum()
    }

    /// Number of free log-scale variables (hidden units).
    pub fn dof(&self) -> usize {
        self.layers.iter().take(self.layers.len().saturating_sub(1)).map(|m| m.rows).sum()
    }
}

pub fn mass_terms(net: &Network) -> Result<MassTerms> {
    let spec = net.spec();
    let shapes = net.shapes();
    let mut layers = Vec::with_capacity(net.num_layers());
    for (l, (ls, lp)) in spec.layers.iter().zip(net.layers()).enumerate() {
        let LayerParams::Weighted { weight, .. } = lp else {
            return Err(Error::Unsupported(format!(
                "min-mass through batchnorm (layer {l}) is not supported"
            )));
        };
        let rows = ls.out_units();
        let cols = shapes[l].units();
        let mut values = vec![0.0; rows * cols];
        for (widx, w) in weight.iter().enumerate() {
            let (o, i) = weight_in_unit(ls, shapes[l], widx);
            values[o * cols + i] += w * w;
        }
        layers.push(MassMatrix { rows, cols, values });
    }
    Ok(MassTerms { layers })
}

fn weight_in_unit(ls: &LayerSpec, inbound: crate::netcore::Shape, widx: usize) -> (usize, usize) {
    crate::symmetry::weight_units(ls, inbound, widx)
}

/// Mass of `apply_scaling(net, Λ)` evaluated from the mass terms alone.
pub fn scaled_mass(net: &Network, scaling: &ScalingSet) -> Result<f64> {
    scaling.validate(net.spec())?;
    let terms = mass_terms(net)?;
    let log: Vec<Vec<f64>> = scaling.scales.iter().map(|v| v.iter().map(|s| s.ln()).collect()).collect();
    Ok(objective_value(&terms, &log))
}

fn log_scale(u: &[Vec<f64>], l: isize, unit: usize) -> f64 {
    if l < 0 || l as usize >= u.len() {
        0.0
    } else {
        u[l as usize][unit]
    }
}

fn objective_value(terms: &MassTerms, u: &[Vec<f64>]) -> f64 {
    let mut total = 0.0;
    for (l, m) in terms.layers.iter().enumerate() {
        for o in 0..m.rows {
            let up = log_scale(u, l as isize, o);
            for i in 0..m.cols {
                let v = m.get(o, i);
                if v != 0.0 {
                    total += v * (2.0 * (up - log_scale(u, l as isize - 1, i))).exp();
                }
            }
        }
    }
    total
}

/// Objective and analytic gradient at log-scales `u` (one vector per hidden interface).
pub fn minmass_objective(terms: &MassTerms, u: &[Vec<f64>]) -> Result<(f64, Vec<Vec<f64>>)> {
    let hidden = terms.layers.len().saturating_sub(1);
    if u.len() != hidden || u.iter().zip(&terms.layers).any(|(v, m)| v.len() != m.rows) {
        return Err(Error::Shape("log-scale vectors do not match the hidden interfaces".into()));
    }
    if u.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("log-scale vector".into()));
    }
    let mut grad: Vec<Vec<f64>> = u.iter().map(|v| vec![0.0; v.len()]).collect();
    let mut total = 0.0;
    for (l, m) in terms.layers.iter().enumerate() {
        for o in 0..m.rows {
            let up = log_scale(u, l as isize, o);
            for i in 0..m.cols {
                let v = m.get(o, i);
                if v == 0.0 {
                    continue;
                }
                let t = v * (2.0 * (up - log_scale(u, l as isize - 1, i))).exp();
                total += t;
                if l < hidden {
                    grad[l][o] += 2.0 * t;
                }
                if l > 0 {
                    grad[l - 1][i] -= 2.0 * t;
                }
            }
        }
    }
    Ok((total, grad))
}

/// Rejects problems where some scale has no mass on one side: the objective
/// is then monotone along that coordinate and has no minimizer.
pub fn check_nondegenerate(terms: &MassTerms) -> Result<()> {
    let hidden = terms.layers.len().saturating_sub(1);
    for l in 0..hidden {
        let inbound = &terms.layers[l];
        let outbound = &terms.layers[l + 1];
        for unit in 0..inbound.rows {
            let has_in = (0..inbound.cols).any(|i| inbound.get(unit, i) > 0.0);
            let has_out = (0..outbound.rows).any(|p| outbound.get(p, unit) > 0.0);
            if !has_in {
                return Err(Error::Degenerate {
                    layer: l,
                    unit,
                    side: "incoming",
                    direction: "zero",
                });
            }
            if !has_out {
                return Err(Error::Degenerate {
                    layer: l,
                    unit,
                    side: "outgoing",
                    direction: "infinity",
                });
            }
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Convergence threshold on the infinity norm of the gradient.
    pub tol: f64,
    pub max_iters: usize,
    pub armijo_c: f64,
    pub shrink: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol: 1e-8,
            max_iters: 10_000,
            armijo_c: 1e-4,
            shrink: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinMassSolution {
    pub log_scales: Vec<Vec<f64>>,
    pub scaling: ScalingSet,
    pub mass_before: f64,
    pub mass_after: f64,
    pub iterations: usize,
    pub grad_inf_norm: f64,
    pub converged: bool,
}

fn inf_norm(g: &[Vec<f64>]) -> f64 {
    g.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
}

/// Solves the min-mass problem from the identity scaling.
pub fn solve_minmass(net: &Network, cfg: &SolverConfig) -> Result<MinMassSolution> {
    let terms = mass_terms(net)?;
    let start = terms.layers[..terms.layers.len() - 1].iter().map(|m| vec![0.0; m.rows]).collect();
    solve_from(&terms, start, cfg)
}

/// Solves the min-mass problem from an arbitrary log-scale start.
pub fn solve_minmass_from(net: &Network, start: Vec<Vec<f64>>, cfg: &SolverConfig) -> Result<MinMassSolution> {
    let terms = mass_terms(net)?;
    solve_from(&terms, start, cfg)
}

/// Relative change of the objective treated as rounding noise by the line search.
const NOISE_REL: f64 = 1e-12;

/// Gradient descent with Armijo backtracking in log-scale space.
///
/// The descent direction is the gradient divided by the diagonal of the
/// Hessian (`4 ·` the mass touching each unit), which makes the step size
/// invariant to the mass magnitude; the first trial step is 1 and is halved
/// until the sufficient-decrease condition holds. Near the optimum, where
/// the decrease is lost in rounding, the approximate Armijo condition on the
/// directional derivative is used instead.
pub fn solve_from(terms: &MassTerms, start: Vec<Vec<f64>>, cfg: &SolverConfig) -> Result<MinMassSolution> {
    check_nondegenerate(terms)?;
    let mass_before = terms.total();
    let mut u = start;
    let (mut f, mut g) = minmass_objective(terms, &u)?;
    let mut iterations = 0;
    while inf_norm(&g) > cfg.tol && iterations < cfg.max_iters {
        let diag = hessian_diagonal(terms, &u);
        let dir: Vec<Vec<f64>> = g
            .iter()
            .zip(&diag)
            .map(|(gv, dv)| gv.iter().zip(dv).map(|(a, b)| -a / b).collect())
            .collect();
        let slope: f64 = g.iter().flatten().zip(dir.iter().flatten()).map(|(a, b)| a * b).sum();
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let trial: Vec<Vec<f64>> = u
                .iter()
                .zip(&dir)
                .map(|(uv, dv)| uv.iter().zip(dv).map(|(a, b)| a + step * b).collect())
                .collect();
            let ft = objective_value(terms, &trial);
            let sufficient = if (ft - f).abs() <= NOISE_REL * f.abs() {
                // Decrease below the resolution of f: test the slope at the trial point instead.
                let (_, gt) = minmass_objective(terms, &trial)?;
                let dphi: f64 = gt.iter().flatten().zip(dir.iter().flatten()).map(|(a, b)| a * b).sum();
                dphi <= (1.0 - 2.0 * cfg.armijo_c) * -slope
            } else {
                ft <= f + cfg.armijo_c * step * slope
            };
            if sufficient {
                u = trial;
                accepted = true;
                break;
            }
            step *= cfg.shrink;
        }
        iterations += 1;
        if !accepted {
            break;
        }
        (f, g) = minmass_objective(terms, &u)?;
    }
    let grad_inf_norm = inf_norm(&g);
    Ok(MinMassSolution {
        scaling: ScalingSet::from_log(&u),
        log_scales: u,
        mass_before,
        mass_after: f,
        iterations,
        grad_inf_norm,
        converged: grad_inf_norm <= cfg.tol,
    })
}

fn hessian_diagonal(terms: &MassTerms, u: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let hidden = terms.layers.len() - 1;
    let mut diag: Vec<Vec<f64>> = u.iter().map(|v| vec![0.0; v.len()]).collect();
    for (l, m) in terms.layers.iter().enumerate() {
        for o in 0..m.rows {
            let up = log_scale(u, l as isize, o);
            for i in 0..m.cols {
                let v = m.get(o, i);
                if v == 0.0 {
                    continue;
                }
                let t = 4.0 * v * (2.0 * (up - log_scale(u, l as isize - 1, i))).exp();
                if l < hidden {
                    diag[l][o] += t;
                }
                if l > 0 {
                    diag[l - 1][i] += t;
                }
            }
        }
    }
    diag
}

/// Per-layer statistics around a min-mass rescaling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinMassReport {
    pub solution: MinMassSolution,
    pub max_abs_weight_before: Vec<f64>,
    pub max_abs_weight_after: Vec<f64>,
}

fn max_abs_per_layer(net: &Network) -> Vec<f64> {
    net.layers()
        .iter()
        .map(|lp| lp.weight().iter().fold(0.0, |m: f64, v| m.max(v.abs())))
        .collect()
}

/// Rescales `net` to its minimum-mass representative.
pub fn apply_minmass(net: &Network, cfg: &SolverConfig) -> Result<(Network, MinMassReport)> {
    let solution = solve_minmass(net, cfg)?;
    let scaled = apply_scaling(net, &solution.scaling)?;
    debug_assert!((network_mass(&scaled) - solution.mass_after).abs() <= 1e-6 * solution.mass_after.max(1.0));
    let report = MinMassReport {
        max_abs_weight_before: max_abs_per_layer(net),
        max_abs_weight_after: max_abs_per_layer(&scaled),
        solution,
    };
    Ok((scaled, report))
}
