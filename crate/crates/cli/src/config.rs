use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use synthcat::audio::{Encoding, DEFAULT_SAMPLE_RATE};

use crate::CliError;

pub const SEED_ENV: &str = "SYNTHCAT_SEED";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub workers: usize,
    pub encoding: Encoding,
    pub sample_rate: u32,
    pub out_dir: PathBuf,
    pub counts: Counts,
    pub splits: SplitConfig,
    pub paths: Paths,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Counts {
    pub timbres: usize,
    pub envelopes: usize,
    pub contents: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub test_envelopes: usize,
    pub test_contents: usize,
    /// References drawn per test source.
    pub n_refs: usize,
    pub triplets: usize,
}

/// Overrides for the default layout under the output directory.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub timbre_bank: Option<PathBuf>,
    pub envelope_bank: Option<PathBuf>,
    pub content_dir: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            workers: 1,
            encoding: Encoding::Pcm16,
            sample_rate: DEFAULT_SAMPLE_RATE,
            out_dir: PathBuf::from("synthcat_out"),
            counts: Counts::default(),
            splits: SplitConfig::default(),
            paths: Paths::default(),
        }
    }
}

impl Default for Counts {
    fn default() -> Self {
        Self {
            timbres: 5,
            envelopes: 4,
            contents: 3,
        }
    }
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            test_envelopes: 2,
            test_contents: 1,
            n_refs: 10,
            triplets: 1000,
        }
    }
}

impl RunConfig {
    /// Reads the TOML file if given (defaults otherwise) and applies the
    /// seed environment override.
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let mut config = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::io(format!("{}: {e}", p.display())))?;
                toml::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", p.display())))?
            }
            None => RunConfig::default(),
        };
        if let Ok(raw) = std::env::var(SEED_ENV) {
            config.seed = raw
                .trim()
                .parse()
                .map_err(|_| CliError::config(format!("{SEED_ENV}={raw:?} is not an unsigned integer")))?;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let c = &self.counts;
        if c.timbres == 0 || c.envelopes == 0 || c.contents == 0 {
            return Err(CliError::config("counts must all be at least 1"));
        }
        if self.workers == 0 {
            return Err(CliError::config("workers must be at least 1"));
        }
        if self.sample_rate == 0 {
            return Err(CliError::config("sample_rate must be positive"));
        }
        if self.splits.n_refs == 0 {
            return Err(CliError::config("splits.n_refs must be at least 1"));
        }
        Ok(())
    }

    pub fn layout(&self, out: Option<&Path>) -> Layout {
        let root = out.map_or_else(|| self.out_dir.clone(), Path::to_path_buf);
        let bank = root.join("bank");
        let pick = |o: &Option<PathBuf>, d: PathBuf| o.clone().unwrap_or(d);
        let dataset = pick(&self.paths.dataset, root.join("dataset"));
        Layout {
            timbre_bank: pick(&self.paths.timbre_bank, bank.join("timbres")),
            envelope_bank: pick(&self.paths.envelope_bank, bank.join("envelopes.jsonl")),
            content_dir: pick(&self.paths.content_dir, bank.join("contents")),
            manifest: dataset.join("manifest.jsonl"),
            split_manifest: dataset.join("manifest_splits.jsonl"),
            dataset,
            triplets: root.join("triplets.jsonl"),
            pairs: root.join("pairs.jsonl"),
            eval: root.join("eval"),
            inspect: root.join("inspect"),
            root,
        }
    }
}

/// Where every stage reads and writes.
#[derive(Clone, Debug, Serialize)]
pub struct Layout {
    pub root: PathBuf,
    pub timbre_bank: PathBuf,
    pub envelope_bank: PathBuf,
    pub content_dir: PathBuf,
    pub dataset: PathBuf,
    pub manifest: PathBuf,
    pub split_manifest: PathBuf,
    pub triplets: PathBuf,
    pub pairs: PathBuf,
    pub eval: PathBuf,
    pub inspect: PathBuf,
}
