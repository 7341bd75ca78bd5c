use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use hlstm_core::experiments::SplitSpec;
use hlstm_core::io_util::write_atomic;
use hlstm_core::ModelKind;
use serde::{Deserialize, Serialize};

pub const RUN_FORMAT: &str = "hlstm-run-v1";
pub const RUN_MANIFEST_FILE: &str = "run_manifest.json";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunInputs {
    pub data: Option<PathBuf>,
    pub split: Option<SplitSpec>,
    pub model: Option<ModelKind>,
    pub model_file: Option<PathBuf>,
    pub config_file: Option<PathBuf>,
}

/// Everything needed to replay a run: pass the manifest back as `--config`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format: String,
    pub command: String,
    pub version: String,
    /// fully resolved configuration, flag overrides applied
    pub config: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: RunInputs,
    pub output_dir: PathBuf,
    pub outputs: Vec<String>,
    pub started_unix: f64,
    pub wall_seconds: f64,
}

impl RunManifest {
    pub fn write(&self, dir: &Path) -> hlstm_core::Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        write_atomic(&dir.join(RUN_MANIFEST_FILE), text.as_bytes())
    }
}
