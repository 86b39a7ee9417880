use std::ffi::OsString;

use serde::Serialize;
use sha2::{Digest, Sha256};

/// Provenance written into every output.
#[derive(Clone, Debug, Serialize)]
pub struct Stamp {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    /// Effective arguments after config merging.
    pub args: Vec<String>,
    pub config_hash: String,
    pub seed: u64,
    pub threads: Option<usize>,
}

impl Stamp {
    pub fn new(argv: &[OsString], command: &str, seed: u64, threads: Option<usize>) -> Self {
        let args: Vec<String> = argv.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
        let mut h = Sha256::new();
        for a in &args {
            h.update(a.as_bytes());
            h.update([0u8]);
        }
        let config_hash = h.finalize().iter().map(|b| format!("{b:02x}")).collect();
        Stamp {
            tool: "netsym",
            version: env!("CARGO_PKG_VERSION"),
            command: command.into(),
            args,
            config_hash,
            seed,
            threads,
        }
    }

    /// Same stamp for a pipeline stage.
    pub fn stage(&self, command: &str) -> Self {
        Stamp {
            command: command.into(),
            ..self.clone()
        }
    }
}
