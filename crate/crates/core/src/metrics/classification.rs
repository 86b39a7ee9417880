use super::{argmax, PredictionBatch};
use crate::error::{Error, Result};

pub const DEFAULT_ECE_BINS: usize = 15;

pub fn accuracy(preds: &PredictionBatch) -> Result<f64> {
    let labels = preds.require_labels()?;
    let hits = labels.iter().enumerate().filter(|(n, &y)| argmax(preds.row(*n)) == y).count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Mean over inputs of `Σ_c (p_c − 1[c = y])²`, in `[0, 2]`.
pub fn brier(preds: &PredictionBatch) -> Result<f64> {
    let labels = preds.require_labels()?;
    let total: f64 = labels
        .iter()
        .enumerate()
        .map(|(n, &y)| {
            preds
                .row(n)
                .iter()
                .enumerate()
                .map(|(c, &p)| {
                    let t = if c == y { 1.0 } else { 0.0 };
                    (p - t) * (p - t)
                })
                .sum::<f64>()
        })
        .sum();
    Ok(total / labels.len() as f64)
}

/// Top-label expected calibration error over `n_bins` equal-width bins.
/// Bin `b` covers `(b/n, (b+1)/n]`; confidence 0 joins the first bin.
pub fn ece(preds: &PredictionBatch, n_bins: usize) -> Result<f64> {
    if n_bins == 0 {
        return Err(Error::InvalidArgument("n_bins must be positive".into()));
    }
    let labels = preds.require_labels()?;
    let mut count = vec![0usize; n_bins];
    let mut conf = vec![0.0; n_bins];
    let mut hits = vec![0.0; n_bins];
    for (n, &y) in labels.iter().enumerate() {
        let row = preds.row(n);
        let top = argmax(row);
        let c = row[top];
        let b = ((c * n_bins as f64).ceil() as usize).clamp(1, n_bins) - 1;
        count[b] += 1;
        conf[b] += c;
        if top == y {
            hits[b] += 1.0;
        }
    }
    let total = labels.len() as f64;
    Ok((0..n_bins)
        .filter(|&b| count[b] > 0)
        .map(|b| {
            let k = count[b] as f64;
            k / total * (hits[b] / k - conf[b] / k).abs()
        })
        .sum())
}
