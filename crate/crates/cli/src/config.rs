use std::path::{Path, PathBuf};

use serde::Deserialize;

use phicap::corpus::TruncationPolicy;
use phicap::inference::InferenceConfig;
use phicap::model::LossConfig;
use phicap::pipeline::PipelineConfig;
use phicap::train::TrainConfig;

use crate::CliError;

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub corpus: Option<PathBuf>,
    pub features: Option<PathBuf>,
    pub splits: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

impl Paths {
    fn resolve(&mut self, base: &Path) {
        for path in [
            &mut self.corpus,
            &mut self.features,
            &mut self.splits,
            &mut self.checkpoint,
            &mut self.output,
        ]
        .into_iter()
        .flatten()
        {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
    }
}

/// Contents of a `--config` TOML file. Relative paths are taken from the
/// file's directory; a top-level `seed` overrides `train.seed`.
#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub paths: Paths,
    pub train: TrainConfig,
    pub inference: InferenceConfig,
    pub truncation: TruncationPolicy,
    pub loss: LossConfig,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| phicap::Error::io(path, e))?;
        let mut cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| CliError::Usage(format!("{}: {}", path.display(), e.message())))?;
        if let Some(seed) = cfg.seed {
            cfg.train.seed = seed;
        }
        cfg.paths.resolve(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            train: self.train.clone(),
            inference: self.inference.clone(),
            truncation: self.truncation,
            loss: self.loss.clone(),
        }
    }
}

/// Flag value if given, else the config file's, else an error naming the flag.
pub fn pick(flag: Option<PathBuf>, file: &Option<PathBuf>, name: &str) -> Result<PathBuf, CliError> {
    flag.or_else(|| file.clone())
        .ok_or_else(|| CliError::Usage(format!("--{name} is required (or set it under [paths])")))
}

pub fn set<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_paths_follow_the_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("run.toml");
        std::fs::write(&file, "seed = 9\n[paths]\ncorpus = \"c.jsonl\"\nfeatures = \"/abs/f.jsonl\"\n[train]\nepochs = 3\n").unwrap();
        let cfg = RunConfig::load(Some(&file)).unwrap();
        assert_eq!(cfg.paths.corpus, Some(dir.path().join("c.jsonl")));
        assert_eq!(cfg.paths.features, Some(PathBuf::from("/abs/f.jsonl")));
        assert_eq!(cfg.train.seed, 9);
        assert_eq!(cfg.train.epochs, 3);
        assert_eq!(cfg.train.learning_rate, TrainConfig::default().learning_rate);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("run.toml");
        std::fs::write(&file, "[train]\nlearning_rat = 0.1\n").unwrap();
        assert!(matches!(RunConfig::load(Some(&file)), Err(CliError::Usage(_))));
    }

    #[test]
    fn missing_file_is_io() {
        let err = RunConfig::load(Some(Path::new("/nonexistent/run.toml"))).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
}
