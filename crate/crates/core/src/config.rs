//! TOML configuration with `[model]`, `[backtest]` and `[synth]` sections.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backtest::BacktestConfig;
use crate::error::{Error, Result};
use crate::synthmarket::SynthConfig;
use crate::volmodel::ModelConfig;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub model: ModelConfig,
    pub backtest: BacktestConfig,
    pub synth: SynthConfig,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.synth.validate()
    }

    /// Applies `section.key=value` overrides. Values are read as TOML
    /// literals, falling back to a plain string.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        if overrides.is_empty() {
            return Ok(self.clone());
        }
        let mut doc = toml::Table::try_from(self).map_err(|e| Error::Config(e.to_string()))?;
        for item in overrides {
            let item = item.as_ref();
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{item}` is not key=value")))?;
            let value = parse_value(raw.trim());
            let path: Vec<&str> = key.trim().split('.').collect();
            set_path(&mut doc, &path, value).map_err(|m| Error::Config(format!("override `{item}`: {m}")))?;
        }
        let cfg: Config = doc.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn set_path(table: &mut toml::Table, path: &[&str], value: toml::Value) -> Result<(), String> {
    match path {
        [] => Err("empty key".into()),
        [last] => {
            table.insert((*last).to_string(), value);
            Ok(())
        }
        [head, rest @ ..] => match table
            .entry((*head).to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
        {
            toml::Value::Table(t) => set_path(t, rest, value),
            _ => Err(format!("`{head}` is not a section")),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = Config::default();
        let text = cfg.to_toml().unwrap();
        assert_eq!(Config::from_toml(&text).unwrap(), cfg);
        assert_eq!(Config::from_toml("").unwrap(), cfg);
        assert_eq!(cfg.model.m, 50.0);
    }

    #[test]
    fn partial_sections_and_unknown_keys() {
        let cfg = Config::from_toml("[model]\nknn = 40\n").unwrap();
        assert_eq!(cfg.model.knn, 40);
        assert_eq!(cfg.model.delta0, 6150.0);
        assert!(Config::from_toml("[model]\nkn = 40\n").is_err());
        assert!(Config::from_toml("[model]\nknn = 0\n").is_err());
    }

    #[test]
    fn overrides() {
        let cfg = Config::default()
            .with_overrides(&[
                "model.knn=20",
                "backtest.first_day=2016-06-01",
                "synth.demand.spike_prob=0.2",
            ])
            .unwrap();
        assert_eq!(cfg.model.knn, 20);
        assert_eq!(cfg.backtest.first_day.unwrap().to_string(), "2016-06-01");
        assert_eq!(cfg.synth.demand.spike_prob, 0.2);
        assert!(Config::default().with_overrides(&["model.nope=1"]).is_err());
        assert!(Config::default().with_overrides(&["model.knn"]).is_err());
        assert!(Config::default().with_overrides(&["model.m=-1"]).is_err());
    }
}
