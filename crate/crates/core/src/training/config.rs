use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::templates::ClassId;

/// Training run settings. Read from TOML; every key is optional except
/// `class`, which selects the class defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub class: ClassId,
    /// Weight of the semantic losses.
    pub alpha: f64,
    /// Weight of the reconstruction losses.
    pub beta: f64,
    /// Weight of the similarity loss.
    pub gamma: f64,
    pub learning_rate: f64,
    /// Examples per step, half synthetic and half realistic.
    pub batch_size: usize,
    pub steps: u64,
    /// Points per encoder input cloud.
    pub points: usize,
    /// Points sampled from the predicted mesh for the similarity loss.
    pub sample_count: usize,
    pub edit_branch: bool,
    /// Seed for initialization, batch selection and per-step sampling.
    pub seed: u64,
    /// Seed for dataset generation.
    pub data_seed: u64,
    /// Synthetic shapes generated (before the 4:1 split).
    pub synthetic: usize,
    /// Detail-augmented shapes generated (before the 4:1 split); 0 disables
    /// augmentation.
    pub realistic: usize,
    /// Directory of OBJ/PLY meshes used as realistic shapes in addition to
    /// augmented ones.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub realistic_dir: Option<PathBuf>,
    /// MVE evaluation period in steps; 0 evaluates only at the end.
    pub eval_every: u64,
    pub thresholds: Vec<f64>,
}

/// Keys that may be absent from the serialized defaults.
const OPTIONAL_KEYS: [&str; 1] = ["realistic_dir"];

impl TrainConfig {
    pub fn for_class(class: ClassId) -> Self {
        let (alpha, beta, gamma, steps) = match class {
            ClassId::Chair => (0.3, 30.0, 50.0, 6000),
            ClassId::Airplane => (0.3, 200.0, 10.0, 6000),
            ClassId::Humanoid => (0.03, 4.0, 1.0, 10_000),
        };
        Self {
            class,
            alpha,
            beta,
            gamma,
            learning_rate: 0.001,
            batch_size: 16,
            steps,
            points: 512,
            sample_count: 512,
            edit_branch: true,
            seed: 0,
            data_seed: 0,
            synthetic: 4000,
            realistic: 800,
            realistic_dir: None,
            eval_every: 1000,
            thresholds: vec![0.01, 0.02, 0.03],
        }
    }

    pub fn valid_keys() -> Vec<String> {
        let table = toml::Table::try_from(Self::for_class(ClassId::Chair)).expect("config serializes");
        let mut keys: Vec<String> = table.keys().cloned().collect();
        keys.extend(OPTIONAL_KEYS.map(String::from));
        keys.sort();
        keys
    }

    /// Class defaults, then the file, then `key=value` overrides.
    pub fn load(file: Option<&str>, overrides: &[String]) -> Result<Self> {
        let file_table: toml::Table = match file {
            Some(text) => text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?,
            None => toml::Table::new(),
        };
        let mut override_table = toml::Table::new();
        for o in overrides {
            let (key, value) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{o}` is not key=value")))?;
            let key = key.trim();
            let value = value.trim();
            let parsed = format!("v = {value}")
                .parse::<toml::Table>()
                .ok()
                .and_then(|mut t| t.remove("v"))
                .unwrap_or_else(|| toml::Value::String(value.to_string()));
            override_table.insert(key.to_string(), parsed);
        }
        let valid = Self::valid_keys();
        for key in file_table.keys().chain(override_table.keys()) {
            if !valid.contains(key) {
                return Err(Error::Config(format!(
                    "unknown key `{key}`; valid keys: {}",
                    valid.join(", ")
                )));
            }
        }
        let class_value = override_table
            .get("class")
            .or_else(|| file_table.get("class"))
            .ok_or_else(|| Error::Config("`class` must be given (chair, airplane or humanoid)".into()))?;
        let class: ClassId = class_value
            .as_str()
            .ok_or_else(|| Error::Config("`class` must be a string".into()))?
            .parse()?;
        let mut table = toml::Table::try_from(Self::for_class(class)).expect("config serializes");
        table.extend(file_table);
        table.extend(override_table);
        let config: Self = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.into()));
        if self.batch_size < 2 || !self.batch_size.is_multiple_of(2) {
            return fail("batch_size must be even and at least 2");
        }
        if !(self.alpha >= 0.0 && self.beta >= 0.0 && self.gamma >= 0.0) {
            return fail("loss weights must be non-negative");
        }
        if !(self.learning_rate > 0.0) {
            return fail("learning_rate must be positive");
        }
        if self.points == 0 || self.sample_count == 0 {
            return fail("points and sample_count must be positive");
        }
        if self.synthetic < 5 {
            return fail("at least 5 synthetic shapes are needed for a 4:1 split");
        }
        if self.points > super::POOL_SIZE {
            return fail("points exceeds the per-example point pool");
        }
        if self.thresholds.iter().any(|t| !(*t > 0.0)) {
            return fail("thresholds must be positive");
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
