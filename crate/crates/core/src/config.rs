//! Experiment configuration. Files are TOML; every setting also has a flat
//! dotted key (`scenario.n_ue`, `ppo.learning_rate`, ...) that can be
//! overridden from the command line. Precedence: override > file > default.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toml::Value;

use crate::error::{Error, Result};
use crate::federation::{FederationSchedule, Regime};
use crate::placement::observation::ObservationShape;
use crate::placement::policy::Architecture;
use crate::placement::ppo::PpoConfig;
use crate::placement::reward::RewardParams;
use crate::radio::RadioConfig;
use crate::scenario::ScenarioConfig;
use crate::tradeoff::TradeoffParams;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSizes {
    pub embed: usize,
    pub hidden1: usize,
    pub hidden2: usize,
}

impl Default for NetworkSizes {
    fn default() -> Self {
        let a = Architecture::default();
        Self { embed: a.embed, hidden1: a.hidden1, hidden2: a.hidden2 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSettings {
    /// Environment slots per training run.
    pub budget_slots: u64,
    pub seed: u64,
    pub n_ue: usize,
    pub min_team: usize,
    pub max_team: usize,
    pub codebook_teams: Vec<usize>,
    pub rolling_window: usize,
    pub checkpoint_every: u64,
}

impl Default for TrainingSettings {
    fn default() -> Self {
        Self {
            budget_slots: 50_000,
            seed: 1,
            n_ue: 25,
            min_team: 2,
            max_team: 5,
            codebook_teams: vec![2, 3, 4],
            rolling_window: 500,
            checkpoint_every: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSettings {
    pub episodes: u64,
    /// Episode `e` uses seed `seed + e`.
    pub seed: u64,
    /// Initial MAP count; 0 means ceil(K / K_i).
    pub initial_maps: usize,
    pub dynamic: bool,
    /// Assert every constraint on every slot.
    pub check_constraints: bool,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self { episodes: 20, seed: 10_000, initial_maps: 0, dynamic: false, check_constraints: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub regime: Regime,
    /// Evaluation scenario (K = 60 UEs, mobile, blocked by default).
    pub scenario: ScenarioConfig,
    pub radio: RadioConfig,
    pub tradeoff: TradeoffParams,
    pub reward: RewardParams,
    pub ppo: PpoConfig,
    pub federation: FederationSchedule,
    pub observation: ObservationShape,
    pub network: NetworkSizes,
    pub training: TrainingSettings,
    pub eval: EvalSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "mapnet".into(),
            regime: Regime::Federated,
            scenario: ScenarioConfig { n_ue: 60, ue_speed: 0.8, blockage_prob: 0.5, ..Default::default() },
            radio: RadioConfig::default(),
            tradeoff: TradeoffParams::default(),
            reward: RewardParams::default(),
            ppo: PpoConfig::desk(),
            federation: FederationSchedule::default(),
            observation: ObservationShape::default(),
            network: NetworkSizes::default(),
            training: TrainingSettings::default(),
            eval: EvalSettings::default(),
        }
    }
}

fn to_value<T: Serialize>(v: &T) -> Result<Value> {
    Value::try_from(v).map_err(|e| Error::Config(e.to_string()))
}

fn parse_scalar(raw: &str) -> Value {
    match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| Value::String(raw.to_string())),
        Err(_) => Value::String(raw.to_string()),
    }
}

fn merge(base: &mut Value, over: Value, path: &str) -> Result<()> {
    match (base, over) {
        (Value::Table(b), Value::Table(o)) => {
            for (k, v) in o {
                let key = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v, &key)?,
                    None => return Err(Error::Config(format!("unknown key {key}"))),
                }
            }
            Ok(())
        }
        (b, o) => {
            *b = coerce(b, o);
            Ok(())
        }
    }
}

/// Integers given where floats are expected are widened.
fn coerce(template: &Value, v: Value) -> Value {
    match (template, v) {
        (Value::Float(_), Value::Integer(i)) => Value::Float(i as f64),
        (_, v) => v,
    }
}

fn flatten(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
    match v {
        Value::Table(t) => {
            for (k, v) in t {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, v, out);
            }
        }
        other => out.push((prefix.to_string(), other.to_string())),
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let over: Value = toml::from_str::<toml::Table>(text)
            .map(Value::Table)
            .map_err(|e| Error::Config(e.to_string()))?;
        let mut base = to_value(&Self::default())?;
        merge(&mut base, over, "")?;
        let cfg: Self = base.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    /// Overrides one dotted key. The value is parsed as a TOML literal, falling
    /// back to a bare string.
    pub fn set(&mut self, key: &str, raw: &str) -> Result<()> {
        let mut root = to_value(self)?;
        let mut slot = &mut root;
        for part in key.split('.') {
            slot = match slot {
                Value::Table(t) => t.get_mut(part).ok_or_else(|| Error::Config(format!("unknown key {key}")))?,
                _ => return Err(Error::Config(format!("unknown key {key}"))),
            };
        }
        if slot.is_table() {
            return Err(Error::Config(format!("{key} is a section, not a value")));
        }
        *slot = coerce(slot, parse_scalar(raw));
        let cfg: Self = root
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(format!("{key}={raw}: {e}")))?;
        cfg.validate()?;
        *self = cfg;
        Ok(())
    }

    /// Applies `key=value` overrides in order.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for o in overrides {
            let o = o.as_ref();
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override {o:?} is not key=value")))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.radio.validate()?;
        self.ppo.validate()?;
        self.federation.validate()?;
        if self.eval.episodes == 0 {
            return Err(Error::Config("eval.episodes must be at least 1".into()));
        }
        if self.training.min_team == 0 || self.training.min_team > self.training.max_team {
            return Err(Error::Config("training team range is empty".into()));
        }
        if self.training.codebook_teams.contains(&0) {
            return Err(Error::Config("codebook team sizes must be positive".into()));
        }
        if self.observation.ue_slots == 0 || self.observation.map_slots == 0 {
            return Err(Error::Config("observation slot counts must be positive".into()));
        }
        self.architecture().validate()?;
        Ok(())
    }

    pub fn architecture(&self) -> Architecture {
        Architecture {
            embed: self.network.embed,
            hidden1: self.network.hidden1,
            hidden2: self.network.hidden2,
            ..Architecture::for_shape(self.observation)
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Every setting as (dotted key, TOML literal), sorted by key.
    pub fn flat_keys(&self) -> Result<Vec<(String, String)>> {
        let mut out = Vec::new();
        flatten("", &to_value(self)?, &mut out);
        out.sort();
        Ok(out)
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> Result<String> {
        let bytes = serde_json::to_vec(self)?;
        Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
    }
}
