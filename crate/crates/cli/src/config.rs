//! Shared settings resolution: flags override the config file, which
//! overrides built-in defaults.

use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    seed: Option<u64>,
    jobs: Option<usize>,
    out_dir: Option<PathBuf>,
    lexicon: Option<PathBuf>,
    embeddings: Option<PathBuf>,
    aliases: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct Settings {
    pub seed: u64,
    pub jobs: usize,
    pub out_dir: PathBuf,
    pub json: bool,
    /// Default paths a command falls back to when its flag is omitted.
    pub lexicon: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub aliases: Option<PathBuf>,
}

impl Settings {
    pub fn resolve(
        config: Option<&Path>,
        seed: Option<u64>,
        jobs: Option<usize>,
        out_dir: Option<PathBuf>,
        json: bool,
    ) -> anyhow::Result<Settings> {
        let file: FileConfig = match config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading config {}", path.display()))?;
                toml::from_str(&text)
                    .with_context(|| format!("parsing config {}", path.display()))?
            }
            None => FileConfig::default(),
        };
        let default_jobs = std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1);
        Ok(Settings {
            seed: seed.or(file.seed).unwrap_or(0),
            jobs: jobs.or(file.jobs).unwrap_or(default_jobs),
            out_dir: out_dir.or(file.out_dir).unwrap_or_else(|| PathBuf::from(".")),
            json,
            lexicon: file.lexicon,
            embeddings: file.embeddings,
            aliases: file.aliases,
        })
    }

    pub fn out_path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }
}
