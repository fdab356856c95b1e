use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use hexmort::{Error, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

pub const TOOL: &str = "hexmort";

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Serialize)]
struct Seeds {
    solver: u64,
    stats: u64,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    config_sha256: String,
    config: &'a RunConfig,
    seeds: Seeds,
    /// Path as given → sha256.
    inputs: &'a BTreeMap<String, String>,
    /// Path relative to the output directory → sha256.
    outputs: &'a BTreeMap<String, String>,
}

/// Output directory plus the record of everything read and written.
pub struct Run {
    command: &'static str,
    out_dir: PathBuf,
    verbose: bool,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
}

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

impl Run {
    pub fn start(command: &'static str, cfg: &RunConfig, verbose: bool) -> Result<Self> {
        fs::create_dir_all(&cfg.out_dir).map_err(|e| io_error(&cfg.out_dir, e))?;
        Ok(Run {
            command,
            out_dir: cfg.out_dir.clone(),
            verbose,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        })
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        let bytes = fs::read(path).map_err(|e| io_error(path, e))?;
        self.inputs.insert(path.display().to_string(), sha256_hex(&bytes));
        Ok(())
    }

    pub fn write(&mut self, name: &str, bytes: impl AsRef<[u8]>) -> Result<()> {
        let bytes = bytes.as_ref();
        let path = self.out_dir.join(name);
        fs::write(&path, bytes).map_err(|e| io_error(&path, e))?;
        self.outputs.insert(name.to_string(), sha256_hex(bytes));
        self.say(format_args!("wrote {}", path.display()));
        Ok(())
    }

    pub fn write_json(&mut self, name: &str, value: &impl Serialize) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Contract(e.to_string()))?;
        text.push('\n');
        self.write(name, text)
    }

    pub fn say(&self, msg: impl std::fmt::Display) {
        if self.verbose {
            println!("{msg}");
        }
    }

    pub fn finish(mut self, cfg: &RunConfig) -> Result<()> {
        let config_json = serde_json::to_vec(cfg).map_err(|e| Error::Contract(e.to_string()))?;
        let outputs = std::mem::take(&mut self.outputs);
        let inputs = std::mem::take(&mut self.inputs);
        let manifest = Manifest {
            tool: TOOL,
            version: env!("CARGO_PKG_VERSION"),
            command: self.command,
            config_sha256: sha256_hex(&config_json),
            config: cfg,
            seeds: Seeds {
                solver: cfg.solver.seed,
                stats: cfg.stats.seed,
            },
            inputs: &inputs,
            outputs: &outputs,
        };
        self.write_json("manifest.json", &manifest)
    }
}
