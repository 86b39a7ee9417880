//! Uncertainty, OOD and rank-correlation metrics over prediction batches.

mod classification;
mod info;
mod ks;
mod ood;
mod rank;

pub use classification::{accuracy, brier, ece, DEFAULT_ECE_BINS};
pub use info::{entropy, mutual_information, MutualInformation};
pub use ks::{kolmogorov_q, ks_two_sample, KsResult};
pub use ood::{aupr, fpr_at_95_tpr, OodScoreSet};
pub use rank::{kendall_tau, kendall_tau_quadratic, pearson_rho};

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `N × C` class probabilities with optional integer labels.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionBatch {
    probs: Array2<f64>,
    labels: Option<Vec<usize>>,
}

impl PredictionBatch {
    pub fn new(probs: Array2<f64>, labels: Option<Vec<usize>>) -> Result<Self> {
        for (n, row) in probs.rows().into_iter().enumerate() {
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::InvalidArgument(format!("row {n} has a probability outside [0, 1]")));
            }
            let s: f64 = row.sum();
            if (s - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidArgument(format!("row {n} sums to {s}, not 1")));
            }
        }
        if let Some(l) = &labels {
            if l.len() != probs.nrows() {
                return Err(Error::Shape(format!("{} labels for {} rows", l.len(), probs.nrows())));
            }
            if let Some(bad) = l.iter().find(|&&y| y >= probs.ncols()) {
                return Err(Error::InvalidArgument(format!("label {bad} out of range for {} classes", probs.ncols())));
            }
        }
        Ok(PredictionBatch { probs, labels })
    }

    /// Builds a batch from per-input probability rows. Single-column rows are
    /// read as sigmoid outputs `p(class 1)` and expanded to `[1 - p, p]`.
    pub fn from_rows(rows: &[Vec<f64>], labels: Option<Vec<usize>>) -> Result<Self> {
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != c) {
            return Err(Error::Shape("ragged probability rows".into()));
        }
        let (width, flat): (usize, Vec<f64>) = if c == 1 {
            (2, rows.iter().flat_map(|r| [1.0 - r[0], r[0]]).collect())
        } else {
            (c, rows.iter().flatten().copied().collect())
        };
        let probs = Array2::from_shape_vec((rows.len(), width), flat).map_err(|e| Error::Shape(e.to_string()))?;
        PredictionBatch::new(probs, labels)
    }

    pub fn probs(&self) -> &Array2<f64> {
        &self.probs
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn with_labels(mut self, labels: Vec<usize>) -> Result<Self> {
        self.labels = None;
        PredictionBatch::new(self.probs, Some(labels))
    }

    pub fn len(&self) -> usize {
        self.probs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.nrows() == 0
    }

    pub fn num_classes(&self) -> usize {
        self.probs.ncols()
    }

    pub(crate) fn row(&self, n: usize) -> ArrayView1<'_, f64> {
        self.probs.row(n)
    }

    pub(crate) fn require_labels(&self) -> Result<&[usize]> {
        if self.is_empty() {
            return Err(Error::EmptySample("prediction batch has no rows".into()));
        }
        self.labels().ok_or_else(|| Error::InvalidArgument("labels required".into()))
    }

    /// Per-input mean of member probabilities; labels are taken from the first member.
    pub fn mean(members: &[PredictionBatch]) -> Result<PredictionBatch> {
        let first = members.first().ok_or_else(|| Error::EmptySample("no ensemble members".into()))?;
        let mut sum = Array2::<f64>::zeros(first.probs.raw_dim());
        for m in members {
            if m.probs.dim() != first.probs.dim() {
                return Err(Error::Shape("ensemble members have different shapes".into()));
            }
            sum += &m.probs;
        }
        sum /= members.len() as f64;
        Ok(PredictionBatch {
            probs: sum,
            labels: first.labels.clone(),
        })
    }
}

/// Top-label prediction, ties broken toward the lowest class index.
pub(crate) fn argmax(row: ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    for (c, &p) in row.iter().enumerate() {
        if p > row[best] {
            best = c;
        }
    }
    best
}

/// Headline metric set for one evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub acc: f64,
    pub ece: f64,
    pub brier: f64,
    pub aupr: Option<f64>,
    pub fpr95: Option<f64>,
    pub id_mi: f64,
    pub ood_mi: Option<f64>,
    pub ood_score: String,
}

/// Per-input OOD score: ensemble mutual information with two or more
/// members, `1 − max p` for a single network.
pub fn ood_scores(members: &[PredictionBatch]) -> Result<(Vec<f64>, &'static str)> {
    match members.len() {
        0 => Err(Error::EmptySample("no members".into())),
        1 => Ok((
            members[0].probs.rows().into_iter().map(|r| 1.0 - r.iter().copied().fold(0.0, f64::max)).collect(),
            "max_softmax",
        )),
        _ => Ok((mutual_information(members)?.per_sample, "mutual_information")),
    }
}

/// Accuracy, ECE, Brier and ID MI of the ensemble mean on labelled
/// in-distribution predictions; AUPR, FPR95 and OOD MI when OOD predictions
/// from the same members are given.
pub fn summarize(id_members: &[PredictionBatch], ood_members: Option<&[PredictionBatch]>) -> Result<MetricSummary> {
    let mean = PredictionBatch::mean(id_members)?;
    let (id_scores, ood_score) = ood_scores(id_members)?;
    let mut summary = MetricSummary {
        acc: accuracy(&mean)?,
        ece: ece(&mean, DEFAULT_ECE_BINS)?,
        brier: brier(&mean)?,
        aupr: None,
        fpr95: None,
        id_mi: mutual_information(id_members)?.mean,
        ood_mi: None,
        ood_score: ood_score.into(),
    };
    if let Some(ood) = ood_members {
        if ood.len() != id_members.len() {
            return Err(Error::Shape(format!("{} ID members but {} OOD members", id_members.len(), ood.len())));
        }
        let (o, _) = ood_scores(ood)?;
        let set = OodScoreSet::from_split(&id_scores, &o)?;
        summary.aupr = Some(aupr(&set)?);
        summary.fpr95 = Some(fpr_at_95_tpr(&set)?);
        summary.ood_mi = Some(mutual_information(ood)?.mean);
    }
    Ok(summary)
}
