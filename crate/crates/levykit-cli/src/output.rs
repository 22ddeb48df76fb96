//! Output directory bookkeeping and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};

use levykit::io::write_atomic;
use levykit::{Error, Result};
use sha2::{Digest, Sha256};

/// Collects the files of one run; every write goes through temp + rename.
pub struct OutDir {
    dir: PathBuf,
    written: Vec<String>,
}

impl OutDir {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: dir.display().to_string(),
            source,
        })?;
        Ok(OutDir {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|source| Error::Io {
                path: parent.display().to_string(),
                source,
            })?;
        }
        write_atomic(&path, bytes)?;
        self.written.push(name.to_string());
        Ok(())
    }

    /// Writes manifest.txt. `config` is the canonical configuration text;
    /// `params` lists the effective command-line parameters. Nothing
    /// time-dependent goes in, so identical runs give identical bytes.
    pub fn finish(mut self, command: &str, config: &str, params: &[(&str, String)], seed: Option<u64>) -> Result<PathBuf> {
        let mut hashed = String::from(config);
        for (k, v) in params {
            hashed.push_str(&format!("{k} = {v}\n"));
        }
        let digest = hex::encode(Sha256::digest(hashed.as_bytes()));
        let mut m = String::new();
        m.push_str(&format!("command = {command}\n"));
        m.push_str(&format!("config_sha256 = {digest}\n"));
        m.push_str(&format!(
            "seed = {}\n",
            seed.map(|s| s.to_string()).unwrap_or_else(|| "none".into())
        ));
        m.push_str(&format!("levykit = {}\n", levykit::VERSION));
        m.push_str(&format!("levykit-cli = {}\n", env!("CARGO_PKG_VERSION")));
        m.push_str(&format!("format = LVF1\ncorpus = {}\n", levykit::spaces::CORPUS_VERSION));
        for (k, v) in params {
            m.push_str(&format!("param.{k} = {v}\n"));
        }
        self.written.sort();
        m.push_str(&format!("outputs = {}\n", self.written.join(", ")));
        let dir = self.dir.clone();
        self.write("manifest.txt", m.as_bytes())?;
        Ok(dir)
    }
}
