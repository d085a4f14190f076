//! Pipeline configuration, loadable from JSON.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::enumerate::{EnumBudget, NegationMode};
use crate::error::{Error, Result};
use crate::eval::Metric;
use crate::ground::SampleConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Directory with `train.txt` / `valid.txt` / `test.txt`.
    pub kg_dir: Option<PathBuf>,
    pub budget: EnumBudget,
    pub negation: NegationMode,
    pub sampling: SampleConfig,
    pub metrics: Vec<Metric>,
    pub hits: Vec<usize>,
    pub output_dir: PathBuf,
    /// Worker threads; `None` lets rayon decide.
    pub workers: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            kg_dir: None,
            budget: EnumBudget::default(),
            negation: NegationMode::default(),
            sampling: SampleConfig::default(),
            metrics: vec![Metric::Marginal, Metric::Multiply, Metric::Joint],
            hits: vec![1, 3, 10],
            output_dir: PathBuf::from("out"),
            workers: None,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: PipelineConfig = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_owned(),
            line: e.line(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.budget.validate()?;
        if self.hits.is_empty() || self.hits.contains(&0) {
            return Err(Error::contract("hits must be a non-empty list of positive cut-offs"));
        }
        if self.sampling.answer_bound_per_free == 0 {
            return Err(Error::contract("answer_bound_per_free must be positive"));
        }
        if self.workers == Some(0) {
            return Err(Error::contract("workers must be positive"));
        }
        Ok(())
    }
}
