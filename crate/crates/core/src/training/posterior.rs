use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::sgd::{sgd_train, TrainConfig};
use super::task::Dataset;
use crate::error::{Error, Result};
use crate::netcore::{build_network, load_checkpoint, save_checkpoint, ArchitectureSpec, Network};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub seed: u64,
    /// `None` when training failed before producing a loss.
    pub final_loss: Option<f64>,
    pub accepted: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub spec_hash: String,
    pub spec: ArchitectureSpec,
    pub task: serde_json::Value,
    pub config: TrainConfig,
    pub loss_threshold: f64,
    pub entries: Vec<ManifestEntry>,
}

/// A directory of checkpoints plus its manifest.
#[derive(Clone, Debug)]
pub struct CheckpointDataset {
    pub dir: PathBuf,
    pub manifest: Manifest,
}

impl CheckpointDataset {
    /// Reads the manifest and checks every listed file exists and carries the manifest's spec.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        let manifest: Manifest = serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST_FILE))?)?;
        if manifest.spec.hash() != manifest.spec_hash {
            return Err(Error::InvalidArgument("manifest spec does not match its spec hash".into()));
        }
        for e in manifest.entries.iter().filter(|e| e.error.is_none()) {
            let bytes = fs::read(dir.join(&e.file))?;
            let (header, _) = crate::netcore::checkpoint::read_header(&bytes)?;
            if header.spec.hash() != manifest.spec_hash {
                return Err(Error::InvalidArgument(format!("{} has a different architecture than the manifest", e.file)));
            }
        }
        Ok(CheckpointDataset { dir, manifest })
    }

    pub fn accepted(&self) -> impl Iterator<Item = &ManifestEntry> {
        self.manifest.entries.iter().filter(|e| e.accepted)
    }

    pub fn acceptance_rate(&self) -> f64 {
        self.accepted().count() as f64 / self.manifest.entries.len().max(1) as f64
    }

    pub fn load_accepted(&self) -> Result<Vec<Network>> {
        self.accepted().map(|e| load_checkpoint(self.dir.join(&e.file))).collect()
    }
}

pub fn checkpoint_file(i: usize) -> String {
    format!("ckpt_{i:05}.nnck")
}

/// One training per checkpoint, checkpoint `i` seeded with `cfg.seed + i`
/// for both initialization and batch order. Trainings run in parallel;
/// failures are recorded in the manifest instead of aborting the batch.
pub fn train_posterior_dataset(
    spec: &ArchitectureSpec,
    task: serde_json::Value,
    data: &Dataset,
    cfg: &TrainConfig,
    count: usize,
    dir: impl AsRef<Path>,
) -> Result<CheckpointDataset> {
    if count == 0 {
        return Err(Error::InvalidArgument("count must be at least 1".into()));
    }
    spec.validate()?;
    cfg.validate()?;
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let entries: Vec<ManifestEntry> = (0..count)
        .into_par_iter()
        .map(|i| {
            let seed = cfg.seed.wrapping_add(i as u64);
            let file = checkpoint_file(i);
            let run = || -> Result<f64> {
                let net = build_network(spec, seed)?;
                let trace = sgd_train(&net, data, &TrainConfig { seed, ..cfg.clone() })?;
                save_checkpoint(&trace.network, dir.join(&file))?;
                Ok(trace.final_loss)
            };
            match run() {
                Ok(loss) => ManifestEntry {
                    file,
                    seed,
                    final_loss: Some(loss),
                    accepted: loss <= cfg.loss_threshold,
                    error: None,
                },
                Err(e) => {
                    log::warn!("checkpoint {i} (seed {seed}) failed: {e}");
                    ManifestEntry {
                        file,
                        seed,
                        final_loss: None,
                        accepted: false,
                        error: Some(e.to_string()),
                    }
                }
            }
        })
        .collect();
    let manifest = Manifest {
        spec_hash: spec.hash(),
        spec: spec.clone(),
        task,
        config: cfg.clone(),
        loss_threshold: cfg.loss_threshold,
        entries,
    };
    fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?)?;
    Ok(CheckpointDataset {
        dir: dir.to_path_buf(),
        manifest,
    })
}
