use crate::error::{Error, Result};
use crate::metrics::PredictionBatch;
use crate::netcore::{forward, Network};

#[derive(Clone, Debug)]
pub struct EnsemblePrediction {
    pub mean: PredictionBatch,
    pub members: Vec<PredictionBatch>,
}

/// Probabilities of one network on every input.
pub fn predict(net: &Network, inputs: &[Vec<f64>]) -> Result<PredictionBatch> {
    let rows = inputs.iter().map(|x| forward(net, x)).collect::<Result<Vec<_>>>()?;
    PredictionBatch::from_rows(&rows, None)
}

/// Member predictions and their per-input average.
pub fn ensemble_predict(members: &[Network], inputs: &[Vec<f64>]) -> Result<EnsemblePrediction> {
    let first = members.first().ok_or_else(|| Error::EmptySample("ensemble has no members".into()))?;
    if let Some(k) = members.iter().position(|m| m.spec() != first.spec()) {
        return Err(Error::InvalidArgument(format!("member {k} has a different architecture than member 0")));
    }
    let members = members.iter().map(|m| predict(m, inputs)).collect::<Result<Vec<_>>>()?;
    Ok(EnsemblePrediction {
        mean: PredictionBatch::mean(&members)?,
        members,
    })
}
