use super::PredictionBatch;
use crate::error::{Error, Result};

/// Natural-log entropy with `0 · ln 0 = 0`.
pub fn entropy<'a>(p: impl IntoIterator<Item = &'a f64>) -> f64 {
    -p.into_iter().filter(|&&v| v > 0.0).map(|&v| v * v.ln()).sum::<f64>()
}

#[derive(Clone, Debug, PartialEq)]
pub struct MutualInformation {
    pub per_sample: Vec<f64>,
    pub mean: f64,
}

/// `MI(x) = H(mean_m p_m(x)) − mean_m H(p_m(x))` for every input.
pub fn mutual_information(members: &[PredictionBatch]) -> Result<MutualInformation> {
    let mean = PredictionBatch::mean(members)?;
    if mean.is_empty() {
        return Err(Error::EmptySample("prediction batch has no rows".into()));
    }
    let m = members.len() as f64;
    let per_sample: Vec<f64> = (0..mean.len())
        .map(|n| {
            let expected: f64 = members.iter().map(|b| entropy(b.row(n).iter())).sum::<f64>() / m;
            entropy(mean.row(n).iter()) - expected
        })
        .collect();
    let avg = per_sample.iter().sum::<f64>() / per_sample.len() as f64;
    Ok(MutualInformation { per_sample, mean: avg })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one(rows: &[[f64; 2]]) -> PredictionBatch {
        PredictionBatch::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>(), None).unwrap()
    }

    #[test]
    fn identical_members_have_zero_mi() {
        let a = one(&[[0.3, 0.7], [0.9, 0.1]]);
        let mi = mutual_information(&[a.clone(), a.clone(), a]).unwrap();
        assert!(mi.per_sample.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn opposite_members_give_ln_two() {
        let mi = mutual_information(&[one(&[[1.0, 0.0]]), one(&[[0.0, 1.0]])]).unwrap();
        assert!((mi.mean - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn single_member_is_zero() {
        assert_eq!(mutual_information(&[one(&[[0.2, 0.8]])]).unwrap().mean, 0.0);
    }

    #[test]
    fn shape_mismatch() {
        assert!(mutual_information(&[one(&[[0.2, 0.8]]), one(&[[0.2, 0.8], [0.5, 0.5]])]).is_err());
    }
}
