//! Workdir layout and the `MANIFEST.sha` digest.
//!
//! ```text
//! workdir/
//!   config.resolved.toml
//!   MANIFEST.sha
//!   manifest/{manifest.jsonl, manifest_meta.json}
//!   render/{split}/{id}/{mixture,clean,noise}.wav, target_*.bin, features.bin, meta.json
//!   features/norm.json
//!   models/{kind}/{model.bin, history.csv, norm.json, train.done}
//!   separated/{kind}/{id}.wav, {id}.out.bin
//!   reports/{eval,oracle,coherence}.csv, figs/
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use maskbench_core::masks::TargetKind;
use sha2::{Digest, Sha256};

use crate::{io_error, CliError, PipelineConfig};

pub const LAYOUT_VERSION: u32 = 1;
pub const DIGEST_FILE: &str = "MANIFEST.sha";
pub const RESOLVED_CONFIG: &str = "config.resolved.toml";

#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: PathBuf) -> Self {
        Self { root }
    }

    pub fn manifest_dir(&self) -> PathBuf {
        self.root.join("manifest")
    }

    pub fn render_dir(&self) -> PathBuf {
        self.root.join("render")
    }

    pub fn norm_file(&self) -> PathBuf {
        self.root.join("features").join("norm.json")
    }

    pub fn model_dir(&self, kind: TargetKind) -> PathBuf {
        self.root.join("models").join(kind.name())
    }

    pub fn separated_dir(&self, kind: TargetKind) -> PathBuf {
        self.root.join("separated").join(kind.name())
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.root.join("reports")
    }

    pub fn figs_dir(&self) -> PathBuf {
        self.reports_dir().join("figs")
    }

    /// Create the workdir and echo the resolved configuration into it.
    pub fn prepare(&self, cfg: &PipelineConfig, reference_mode: bool) -> Result<(), CliError> {
        fs::create_dir_all(&self.root).map_err(io_error(&self.root))?;
        if let Some(version) = self.existing_layout_version() {
            if version != LAYOUT_VERSION {
                return Err(CliError::Data(format!(
                    "{}: workdir layout version {version}, this build writes version {LAYOUT_VERSION}",
                    self.root.join(DIGEST_FILE).display()
                )));
            }
        }
        let text = format!(
            "# layout version {LAYOUT_VERSION}; reference mode {}\n{}",
            if reference_mode { "on" } else { "off" },
            cfg.to_toml()
        );
        let path = self.root.join(RESOLVED_CONFIG);
        fs::write(&path, text).map_err(io_error(&path))
    }

    fn existing_layout_version(&self) -> Option<u32> {
        let text = fs::read_to_string(self.root.join(DIGEST_FILE)).ok()?;
        text.lines().next()?.strip_prefix("layout ")?.trim().parse().ok()
    }

    /// Rewrite `MANIFEST.sha`: the layout version, then one
    /// `sha256  relative/path` line per file, sorted by path.
    pub fn write_digest(&self) -> Result<(), CliError> {
        let mut files = Vec::new();
        collect_files(&self.root, &mut files)?;
        files.sort();
        let mut out = format!("layout {LAYOUT_VERSION}\n");
        for f in files {
            let rel = f.strip_prefix(&self.root).expect("file lies under the workdir");
            if rel == Path::new(DIGEST_FILE) {
                continue;
            }
            let bytes = fs::read(&f).map_err(io_error(&f))?;
            out.push_str(&format!("{}  {}\n", sha256_hex(&bytes), rel.display()));
        }
        let path = self.root.join(DIGEST_FILE);
        fs::write(&path, out).map_err(io_error(&path))
    }
}

fn collect_files(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), CliError> {
    for entry in fs::read_dir(dir).map_err(io_error(dir))? {
        let entry = entry.map_err(io_error(dir))?;
        let path = entry.path();
        if entry.file_type().map_err(io_error(&path))?.is_dir() {
            collect_files(&path, out)?;
        } else {
            out.push(path);
        }
    }
    Ok(())
}

/// Lower-case hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
