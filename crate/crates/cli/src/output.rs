use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use tempfile::NamedTempFile;

use crate::manifest::{now, sha256_hex, FileDigest, Manifest};

/// Output directory whose files are written atomically and digested for
/// the manifest.
pub struct OutputDir {
    dir: PathBuf,
    written: Vec<FileDigest>,
}

impl OutputDir {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    /// Renders `name` into memory, then moves it into place.
    pub fn write(&mut self, name: &str, render: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Result<()> {
        let mut bytes = Vec::new();
        render(&mut bytes).with_context(|| format!("rendering {name}"))?;
        self.put(name, &bytes)?;
        self.written.push(FileDigest {
            path: name.to_string(),
            sha256: sha256_hex(&bytes),
        });
        Ok(())
    }

    pub fn write_json<T: serde::Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        self.write(name, |buf| {
            serde_json::to_writer_pretty(&mut *buf, value)?;
            buf.push(b'\n');
            Ok(())
        })
    }

    fn put(&self, name: &str, bytes: &[u8]) -> Result<()> {
        let target = self.dir.join(name);
        let mut tmp = NamedTempFile::new_in(&self.dir)
            .with_context(|| format!("creating a temporary file in {}", self.dir.display()))?;
        tmp.write_all(bytes)?;
        tmp.as_file().sync_all()?;
        tmp.persist(&target)
            .with_context(|| format!("moving output into {}", target.display()))?;
        Ok(())
    }

    /// Writes `manifest.json` listing every output written so far.
    pub fn finish(mut self, mut manifest: Manifest) -> Result<()> {
        manifest.outputs = std::mem::take(&mut self.written);
        manifest.finished_at = now();
        let mut bytes = serde_json::to_vec_pretty(&manifest)?;
        bytes.push(b'\n');
        self.put("manifest.json", &bytes)
    }
}
