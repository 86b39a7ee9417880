use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Detection scores (larger = more out-of-distribution) with binary labels (1 = OOD).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OodScoreSet {
    pub scores: Vec<f64>,
    pub labels: Vec<bool>,
}

impl OodScoreSet {
    pub fn new(scores: Vec<f64>, labels: Vec<bool>) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::Shape(format!("{} scores for {} labels", scores.len(), labels.len())));
        }
        if scores.iter().any(|s| s.is_nan()) {
            return Err(Error::NonFinite("OOD score".into()));
        }
        Ok(OodScoreSet { scores, labels })
    }

    /// In-distribution scores labelled 0 followed by OOD scores labelled 1.
    pub fn from_split(id: &[f64], ood: &[f64]) -> Result<Self> {
        let mut scores = id.to_vec();
        scores.extend_from_slice(ood);
        let mut labels = vec![false; id.len()];
        labels.resize(id.len() + ood.len(), true);
        OodScoreSet::new(scores, labels)
    }

    /// `(threshold, true positives, false positives)` for every distinct score,
    /// descending; tied scores enter together.
    fn sweep(&self) -> Result<(Vec<(f64, usize, usize)>, usize, usize)> {
        let pos = self.labels.iter().filter(|&&l| l).count();
        let neg = self.labels.len() - pos;
        if pos == 0 || neg == 0 {
            return Err(Error::InvalidArgument("both in- and out-of-distribution samples are required".into()));
        }
        let mut order: Vec<usize> = (0..self.scores.len()).collect();
        order.sort_by(|&a, &b| self.scores[b].total_cmp(&self.scores[a]));
        let mut points = Vec::new();
        let (mut tp, mut fp) = (0, 0);
        let mut k = 0;
        while k < order.len() {
            let t = self.scores[order[k]];
            while k < order.len() && self.scores[order[k]] == t {
                if self.labels[order[k]] {
                    tp += 1;
                } else {
                    fp += 1;
                }
                k += 1;
            }
            points.push((t, tp, fp));
        }
        Ok((points, pos, neg))
    }
}

/// Average precision: `Σ_k (R_k − R_{k−1}) · P_k` over descending thresholds.
pub fn aupr(set: &OodScoreSet) -> Result<f64> {
    let (points, pos, _) = set.sweep()?;
    let mut prev_recall = 0.0;
    let mut ap = 0.0;
    for (_, tp, fp) in points {
        let recall = tp as f64 / pos as f64;
        let precision = tp as f64 / (tp + fp) as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Ok(ap)
}

/// Smallest false-positive rate among thresholds reaching a true-positive rate of 0.95.
pub fn fpr_at_95_tpr(set: &OodScoreSet) -> Result<f64> {
    let (points, pos, neg) = set.sweep()?;
    Ok(points
        .into_iter()
        .filter(|&(_, tp, _)| tp as f64 >= 0.95 * pos as f64)
        .map(|(_, _, fp)| fp as f64 / neg as f64)
        .fold(1.0, f64::min))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn perfect_separation() {
        let s = OodScoreSet::from_split(&[0.1, 0.2, 0.3], &[0.8, 0.9]).unwrap();
        assert_eq!(aupr(&s).unwrap(), 1.0);
        assert_eq!(fpr_at_95_tpr(&s).unwrap(), 0.0);
    }

    #[test]
    fn hand_enumerated_average_precision() {
        let s = OodScoreSet::new(vec![3.0, 1.0, 2.0], vec![true, true, false]).unwrap();
        assert!((aupr(&s).unwrap() - 5.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn constant_scores() {
        let s = OodScoreSet::from_split(&[1.0; 4], &[1.0; 4]).unwrap();
        assert_eq!(fpr_at_95_tpr(&s).unwrap(), 1.0);
        assert_eq!(aupr(&s).unwrap(), 0.5);
    }

    #[test]
    fn single_class_errors() {
        let s = OodScoreSet::from_split(&[1.0, 2.0], &[]).unwrap();
        assert!(aupr(&s).is_err() && fpr_at_95_tpr(&s).is_err());
    }

    /// Brute force: every cut of the sorted list, TPR/FPR counted directly.
    fn fpr95_oracle(id: &[f64], ood: &[f64]) -> f64 {
        let mut best = 1.0f64;
        let mut cuts: Vec<f64> = id.iter().chain(ood).copied().collect();
        cuts.push(f64::INFINITY);
        for &t in &cuts {
            let tp = ood.iter().filter(|&&s| s >= t).count() as f64;
            let fp = id.iter().filter(|&&s| s >= t).count() as f64;
            if tp / ood.len() as f64 >= 0.95 {
                best = best.min(fp / id.len() as f64);
            }
        }
        best
    }

    #[test]
    fn fpr95_twenty_by_twenty() {
        // Positives 1..=20, negatives well below except one sitting above the 19th-ranked positive.
        let ood: Vec<f64> = (1..=20).map(|v| 100.0 + v as f64).collect();
        let mut id: Vec<f64> = (1..=20).map(f64::from).collect();
        id[0] = 102.5;
        let s = OodScoreSet::from_split(&id, &ood).unwrap();
        let expected = fpr95_oracle(&id, &ood);
        assert_eq!(expected, 0.05);
        assert_eq!(fpr_at_95_tpr(&s).unwrap(), expected);
    }

    #[test]
    fn random_scores_match_oracle_and_give_half_aupr() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let id: Vec<f64> = (0..5000).map(|_| rng.random()).collect();
        let ood: Vec<f64> = (0..5000).map(|_| rng.random()).collect();
        let s = OodScoreSet::from_split(&id, &ood).unwrap();
        assert!((aupr(&s).unwrap() - 0.5).abs() < 0.05);
        let small = OodScoreSet::from_split(&id[..60], &ood[..40]).unwrap();
        assert_eq!(fpr_at_95_tpr(&small).unwrap(), fpr95_oracle(&id[..60], &ood[..40]));
    }
}
