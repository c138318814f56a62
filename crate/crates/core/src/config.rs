//! `key = value` run configuration files.
//!
//! Keys are field names of [`PredictorConfig`], [`TrainConfig`] or
//! [`SearchConfig`]; `seed` sets both the training and the search seed.
//! Blank lines and lines starting with `#` are skipped.

use std::path::Path;

use crate::error::{Error, Result};
use crate::predictor::PredictorConfig;
use crate::search::SearchConfig;
use crate::training::TrainConfig;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunConfig {
    pub predictor: PredictorConfig,
    pub train: TrainConfig,
    pub search: SearchConfig,
}

impl RunConfig {
    /// Applies one assignment; errors on keys no section knows.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let mut known = self.predictor.set(key, value)?;
        known |= self.train.set(key, value)?;
        known |= self.search.set(key, value)?;
        if known {
            Ok(())
        } else {
            Err(Error::Config(format!("unknown key `{key}`")))
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.predictor.validate()?;
        self.train.validate()?;
        self.search.validate()
    }

    /// Overlays the assignments in `text` onto `self`.
    pub fn apply(&mut self, text: &str, origin: &Path) -> Result<()> {
        for (k, raw) in text.lines().enumerate() {
            let line = raw.split_once('#').map_or(raw, |(code, _)| code).trim();
            if line.is_empty() {
                continue;
            }
            let located = |msg: String| Error::Parse {
                path: origin.to_path_buf(),
                line: k + 1,
                msg,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| located(format!("expected `key = value`, got `{line}`")))?;
            self.set(key.trim(), value.trim()).map_err(|e| match e {
                Error::Config(msg) => located(msg),
                other => located(other.to_string()),
            })?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply(text, Path::new("<config>"))?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::default();
        cfg.apply(&text, path)?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictor::FlowMode;

    #[test]
    fn dispatches_to_sections() {
        let cfg = RunConfig::parse(
            "# run\nforward_mode = gat\ngcn_dims = [16, 16]\n\nepochs = 12\nbudget_per_iter = 8\nseed = 5\n",
        )
        .unwrap();
        assert_eq!(cfg.predictor.forward_mode, FlowMode::Gat);
        assert_eq!(cfg.predictor.gcn_dims, vec![16, 16]);
        assert_eq!(cfg.train.epochs, 12);
        assert_eq!(cfg.search.budget_per_iter, 8);
        assert_eq!((cfg.train.seed, cfg.search.seed), (5, 5));
    }

    #[test]
    fn trailing_comments_are_ignored() {
        let cfg = RunConfig::parse("forward_mode = dgf   # dgf | gat | ensemble
  # indented
").unwrap();
        assert_eq!(cfg.predictor.forward_mode, FlowMode::Dgf);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let err = RunConfig::parse("epochs = 3\nbogus = 1\n").unwrap_err();
        assert!(err.to_string().contains(":2:"), "{err}");
        let err = RunConfig::parse("epochs 3\n").unwrap_err();
        assert!(err.to_string().contains(":1:"), "{err}");
        let err = RunConfig::parse("lr = fast\n").unwrap_err();
        assert!(err.to_string().contains(":1:"), "{err}");
    }
}
