//! Run configuration: one TOML file with a section per subsystem.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::eval::EvalConfig;
use crate::expert::ExpertParams;
use crate::graph::GraphConfig;
use crate::train::TrainConfig;
use crate::world::{EpisodeConfig, LayoutConfig, ScenarioConfig, TrafficConfig, VehicleConfig};

/// Keys that are valid but absent from the serialized defaults.
const OPTIONAL_KEYS: [&str; 4] = ["traffic.density", "traffic.command", "train.split", "train.max_steps"];

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub layout: LayoutConfig,
    pub episode: EpisodeConfig,
    pub traffic: TrafficConfig,
    pub vehicle: VehicleConfig,
    pub graph: GraphConfig,
    pub expert: ExpertParams,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl Config {
    /// Parses TOML, rejecting keys that no section defines.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let value: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::invalid("<config>", e.message()))?;
        let known = known_keys();
        let mut given = Vec::new();
        collect_keys(&value, "", &mut given);
        if let Some(key) = given.into_iter().find(|k| !known.contains(k)) {
            let suggestion = nearest_key(&key, &known);
            return Err(Error::UnknownConfigKey { key, suggestion });
        }
        let config: Config =
            toml::from_str(text).map_err(|e| Error::invalid(error_key(&e), e.message().to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn scenario(&self) -> ScenarioConfig {
        ScenarioConfig {
            layout: self.layout.clone(),
            episode: self.episode.clone(),
            traffic: self.traffic.clone(),
            vehicle: self.vehicle.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario().validate()?;
        let g = &self.graph;
        if !(g.alpha_m.is_finite() && g.alpha_m > 0.0) {
            return Err(Error::invalid("graph.alpha_m", "must be positive"));
        }
        if g.k == 0 {
            return Err(Error::invalid("graph.k", "must be at least 1"));
        }
        if !g.v_pref.is_finite() {
            return Err(Error::invalid("graph.v_pref", "must be finite"));
        }
        self.expert.validate()?;
        self.train.validate()?;
        self.eval.validate()
    }

    /// SHA-256 over the canonical JSON of the effective configuration.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}

fn error_key(e: &toml::de::Error) -> String {
    e.message().split('`').nth(1).map_or_else(|| "<config>".to_string(), str::to_string)
}

fn known_keys() -> BTreeSet<String> {
    let defaults = toml::Table::try_from(Config::default()).expect("defaults serialize");
    let mut all = Vec::new();
    collect_keys(&defaults, "", &mut all);
    let mut keys: BTreeSet<String> = all.into_iter().collect();
    keys.extend(OPTIONAL_KEYS.iter().map(|s| s.to_string()));
    keys
}

/// Dotted paths of every key in `table`, nested tables included.
fn collect_keys(table: &toml::Table, prefix: &str, out: &mut Vec<String>) {
    for (k, v) in table {
        let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        out.push(path.clone());
        if let toml::Value::Table(inner) = v {
            collect_keys(inner, &path, out);
        }
    }
}

fn nearest_key(key: &str, known: &BTreeSet<String>) -> Option<String> {
    known
        .iter()
        .map(|k| (strsim::levenshtein(key, k), k))
        .filter(|(d, _)| *d <= key.len().max(3) / 2)
        .min_by_key(|(d, _)| *d)
        .map(|(_, k)| k.clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = Config::default();
        assert_eq!(Config::from_toml_str(&c.to_toml()).unwrap(), c);
        assert_eq!(Config::from_toml_str("").unwrap(), c);
    }

    #[test]
    fn misspelled_key_names_nearest() {
        let err = Config::from_toml_str("[graph]\nalpah_m = 5.0\n").unwrap_err();
        match err {
            Error::UnknownConfigKey { key, suggestion } => {
                assert_eq!(key, "graph.alpah_m");
                assert_eq!(suggestion.as_deref(), Some("graph.alpha_m"));
            }
            other => panic!("unexpected {other:?}"),
        }
        let err = Config::from_toml_str("[trian]\nlr = 0.1\n").unwrap_err();
        assert!(err.to_string().contains("`train`"), "{err}");
    }

    #[test]
    fn optional_keys_accepted() {
        let c = Config::from_toml_str("[traffic]\ndensity = 4\ncommand = \"turn_left\"\n[train]\nmax_steps = 10\n").unwrap();
        assert_eq!(c.traffic.density, Some(4));
        assert_eq!(c.train.max_steps, Some(10));
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(Config::from_toml_str("[train]\nbatch_size = 2\n").unwrap_err().is_config_error());
        assert!(Config::from_toml_str("[graph]\nalpha_m = -1.0\n").unwrap_err().is_config_error());
        assert!(Config::from_toml_str("[graph]\nalpha_m = \"x\"\n").unwrap_err().is_config_error());
    }

    #[test]
    fn hash_tracks_content() {
        let a = Config::default();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.graph.k = 2;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
