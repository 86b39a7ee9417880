use microlp::{ComparisonOp, OptimizationDirection, Problem};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_SEPARABILITY_RETRIES: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    TwoGaussians,
    KGaussians,
}

/// Gaussian classes with identity covariance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTask {
    pub kind: TaskKind,
    pub means: Vec<Vec<f64>>,
    pub n_per_class: usize,
    pub seed: u64,
    pub separability_check: bool,
}

impl SyntheticTask {
    /// Class A at (−2, −2), class B at (2, 2).
    pub fn two_gaussians(n_per_class: usize, seed: u64) -> Self {
        SyntheticTask {
            kind: TaskKind::TwoGaussians,
            means: vec![vec![-2.0, -2.0], vec![2.0, 2.0]],
            n_per_class,
            seed,
            separability_check: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.kind == TaskKind::TwoGaussians && self.means.len() != 2 {
            return bad(format!("two_gaussians needs 2 means, got {}", self.means.len()));
        }
        if self.means.len() < 2 {
            return bad("at least two classes are required".into());
        }
        let d = self.means[0].len();
        if d == 0 || self.means.iter().any(|m| m.len() != d) {
            return bad("class means must share a positive dimension".into());
        }
        if self.means.iter().flatten().any(|v| !v.is_finite()) {
            return bad("class means must be finite".into());
        }
        if self.n_per_class == 0 {
            return bad("n_per_class must be positive".into());
        }
        Ok(())
    }
}

/// Supervision attached to a [`Dataset`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Targets {
    Classes { num_classes: usize, labels: Vec<usize> },
    Values { dim: usize, values: Vec<Vec<f64>> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub input_dim: usize,
    pub inputs: Vec<Vec<f64>>,
    pub targets: Targets,
}

impl Dataset {
    pub fn classification(inputs: Vec<Vec<f64>>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        let d = Dataset {
            input_dim: inputs.first().map_or(0, Vec::len),
            inputs,
            targets: Targets::Classes { num_classes, labels },
        };
        d.validate()?;
        Ok(d)
    }

    pub fn regression(inputs: Vec<Vec<f64>>, values: Vec<Vec<f64>>) -> Result<Self> {
        let d = Dataset {
            input_dim: inputs.first().map_or(0, Vec::len),
            targets: Targets::Values {
                dim: values.first().map_or(0, Vec::len),
                values,
            },
            inputs,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn labels(&self) -> Option<&[usize]> {
        match &self.targets {
            Targets::Classes { labels, .. } => Some(labels),
            Targets::Values { .. } => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.inputs.is_empty() {
            return Err(Error::EmptySample("dataset has no inputs".into()));
        }
        if self.inputs.iter().any(|x| x.len() != self.input_dim) {
            return Err(Error::Shape(format!("every input must have {} values", self.input_dim)));
        }
        if self.inputs.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dataset input".into()));
        }
        match &self.targets {
            Targets::Classes { num_classes, labels } => {
                if labels.len() != self.inputs.len() {
                    return Err(Error::Shape(format!("{} labels for {} inputs", labels.len(), self.inputs.len())));
                }
                if let Some(y) = labels.iter().find(|&&y| y >= *num_classes) {
                    return Err(Error::InvalidArgument(format!("label {y} out of range for {num_classes} classes")));
                }
            }
            Targets::Values { dim, values } => {
                if values.len() != self.inputs.len() || values.iter().any(|v| v.len() != *dim) {
                    return Err(Error::Shape("regression targets do not match inputs".into()));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("dataset serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let d: Dataset = serde_json::from_str(s)?;
        d.validate()?;
        Ok(d)
    }
}

fn sample(task: &SyntheticTask, attempt: usize) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(task.seed);
    rng.set_stream(attempt as u64);
    let mut inputs = Vec::with_capacity(task.means.len() * task.n_per_class);
    let mut labels = Vec::with_capacity(inputs.capacity());
    for (c, mean) in task.means.iter().enumerate() {
        for _ in 0..task.n_per_class {
            inputs.push(mean.iter().map(|m| m + Distribution::<f64>::sample(&StandardNormal, &mut rng)).collect::<Vec<f64>>());
            labels.push(c);
        }
    }
    Dataset {
        input_dim: task.means[0].len(),
        inputs,
        targets: Targets::Classes {
            num_classes: task.means.len(),
            labels,
        },
    }
}

/// Whether some `(w, b)` has `w·x + b ≥ 1` on every `pos` point and `≤ −1` on every `neg` point.
pub fn linearly_separable(pos: &[&[f64]], neg: &[&[f64]]) -> bool {
    let d = pos.iter().chain(neg).next().map_or(0, |x| x.len());
    let mut lp = Problem::new(OptimizationDirection::Minimize);
    let w: Vec<_> = (0..d).map(|_| lp.add_var(0.0, (f64::NEG_INFINITY, f64::INFINITY))).collect();
    let b = lp.add_var(0.0, (f64::NEG_INFINITY, f64::INFINITY));
    for (points, sign) in [(pos, 1.0), (neg, -1.0)] {
        for x in points {
            let mut expr: Vec<_> = w.iter().zip(x.iter()).map(|(&v, &xi)| (v, sign * xi)).collect();
            expr.push((b, sign));
            lp.add_constraint(expr.as_slice(), ComparisonOp::Ge, 1.0);
        }
    }
    lp.solve().is_ok()
}

/// Every pair of classes admits a hard-margin linear separator.
pub fn pairwise_separable(data: &Dataset) -> bool {
    let Targets::Classes { num_classes, labels } = &data.targets else {
        return false;
    };
    let class = |c: usize| -> Vec<&[f64]> {
        data.inputs.iter().zip(labels).filter(|(_, &y)| y == c).map(|(x, _)| x.as_slice()).collect()
    };
    (0..*num_classes).all(|a| (a + 1..*num_classes).all(|b| linearly_separable(&class(a), &class(b))))
}

/// Draws the dataset, class-blocked in label order. With the separability
/// check on, draws again from fresh streams of the same seed until every
/// class pair is linearly separable.
pub fn gen_task(task: &SyntheticTask) -> Result<Dataset> {
    task.validate()?;
    if !task.separability_check {
        return Ok(sample(task, 0));
    }
    for attempt in 0..MAX_SEPARABILITY_RETRIES {
        let data = sample(task, attempt);
        if pairwise_separable(&data) {
            if attempt > 0 {
                log::debug!("separable sample found after {attempt} redraws");
            }
            return Ok(data);
        }
    }
    Err(Error::NotSeparable { retries: MAX_SEPARABILITY_RETRIES })
}

/// Regular `side × side` grid spanning `[lo, hi]²`.
pub fn grid_2d(lo: f64, hi: f64, side: usize) -> Vec<Vec<f64>> {
    let step = if side > 1 { (hi - lo) / (side - 1) as f64 } else { 0.0 };
    (0..side)
        .flat_map(|i| (0..side).map(move |j| vec![lo + i as f64 * step, lo + j as f64 * step]))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_task_is_separable_and_sized() {
        let d = gen_task(&SyntheticTask::two_gaussians(200, 0)).unwrap();
        assert_eq!(d.len(), 400);
        assert!(pairwise_separable(&d));
        assert_eq!(d.labels().unwrap().iter().filter(|&&y| y == 1).count(), 200);
    }

    #[test]
    fn deterministic_per_seed() {
        let t = SyntheticTask::two_gaussians(50, 4);
        assert_eq!(gen_task(&t).unwrap(), gen_task(&t).unwrap());
        let other = SyntheticTask { seed: 5, ..t };
        assert_ne!(gen_task(&other).unwrap(), gen_task(&SyntheticTask::two_gaussians(50, 4)).unwrap());
    }

    #[test]
    fn coincident_means_never_separate() {
        let mut t = SyntheticTask::two_gaussians(20, 1);
        t.means = vec![vec![0.0, 0.0], vec![0.0, 0.0]];
        assert!(matches!(gen_task(&t), Err(Error::NotSeparable { retries: 1000 })));
    }

    #[test]
    fn lp_feasibility() {
        let a: [&[f64]; 2] = [&[1.0, 1.0], &[2.0, 0.5]];
        let b: [&[f64]; 2] = [&[-1.0, 0.0], &[0.0, -1.0]];
        assert!(linearly_separable(&a, &b));
        let xor_a: [&[f64]; 2] = [&[0.0, 0.0], &[1.0, 1.0]];
        let xor_b: [&[f64]; 2] = [&[1.0, 0.0], &[0.0, 1.0]];
        assert!(!linearly_separable(&xor_a, &xor_b));
    }

    #[test]
    fn k_gaussians_one_vs_one() {
        let t = SyntheticTask {
            kind: TaskKind::KGaussians,
            means: vec![vec![0.0, 6.0], vec![6.0, -6.0], vec![-6.0, -6.0]],
            n_per_class: 30,
            seed: 2,
            separability_check: true,
        };
        let d = gen_task(&t).unwrap();
        assert_eq!(d.len(), 90);
        assert!(pairwise_separable(&d));
    }

    #[test]
    fn json_round_trip() {
        let d = gen_task(&SyntheticTask::two_gaussians(5, 3)).unwrap();
        assert_eq!(Dataset::from_json(&d.to_json()).unwrap(), d);
    }

    #[test]
    fn grid_corners() {
        let g = grid_2d(-1.0, 1.0, 3);
        assert_eq!(g.len(), 9);
        assert_eq!(g[0], vec![-1.0, -1.0]);
        assert_eq!(g[8], vec![1.0, 1.0]);
    }
}
