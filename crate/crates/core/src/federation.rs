//! Policy-management regimes: per-scenario codebooks, one policy per agent
//! (curriculum), and a single federated policy.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::placement::checkpoint;
use crate::placement::env::EpisodeSpec;
use crate::placement::policy::{Architecture, PolicyParameters};
use crate::placement::ppo::{Learner, RegimeHook};
use crate::scenario::ScenarioConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Codebook,
    Curriculum,
    Federated,
}

impl Regime {
    pub const ALL: [Regime; 3] = [Regime::Codebook, Regime::Curriculum, Regime::Federated];

    pub fn tag(self) -> &'static str {
        match self {
            Regime::Codebook => "codebook",
            Regime::Curriculum => "curriculum",
            Regime::Federated => "federated",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "codebook" => Ok(Regime::Codebook),
            "curriculum" => Ok(Regime::Curriculum),
            "federated" => Ok(Regime::Federated),
            other => Err(Error::Config(format!("unknown regime {other:?}"))),
        }
    }
}

/// Number of distinct policies a regime must maintain for up to `m` MAPs.
pub fn complexity(regime: Regime, m: usize) -> usize {
    match regime {
        Regime::Codebook => m * (m + 1) / 2,
        Regime::Curriculum => m,
        Regime::Federated => 1,
    }
}

/// Sum-rate per maintained policy.
pub fn operational_efficiency(sum_rate: f64, regime: Regime, m: usize) -> f64 {
    sum_rate / complexity(regime, m.max(1)) as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FederationSchedule {
    /// Agent steps between aggregations.
    pub tau_f: u64,
    /// Weight kept from the global policy at each aggregation.
    pub alpha_f: f64,
}

impl Default for FederationSchedule {
    fn default() -> Self {
        Self { tau_f: 5000, alpha_f: 0.5 }
    }
}

impl FederationSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.tau_f < 1 {
            return Err(Error::Config("tau_f must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha_f) {
            return Err(Error::Config(format!("alpha_f {} outside [0, 1]", self.alpha_f)));
        }
        Ok(())
    }
}

/// α·w + (1−α)/M_s · Σ w_i with M_s the number of agent vectors.
pub fn federated_average(global: &[f64], agents: &[&[f64]], alpha: f64) -> Result<Vec<f64>> {
    if agents.is_empty() {
        return Err(Error::Config("federated average needs at least one agent".into()));
    }
    for a in agents {
        if a.len() != global.len() {
            return Err(Error::LengthMismatch { expected: global.len(), got: a.len() });
        }
    }
    let k = (1.0 - alpha) / agents.len() as f64;
    Ok((0..global.len())
        .map(|j| alpha * global[j] + k * agents.iter().map(|a| a[j]).sum::<f64>())
        .collect())
}

/// How training episodes are drawn for a regime.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingSampler {
    pub base: ScenarioConfig,
    pub min_team: usize,
    pub max_team: usize,
    /// Fixed team size (codebook entries).
    pub fixed_team: Option<usize>,
}

impl Default for TrainingSampler {
    fn default() -> Self {
        Self {
            base: ScenarioConfig { n_ue: 25, ue_speed: 0.0, blockage_prob: 0.0, ..Default::default() },
            min_team: 2,
            max_team: 5,
            fixed_team: None,
        }
    }
}

impl TrainingSampler {
    pub fn for_regime(regime: Regime, codebook_team: Option<usize>) -> Self {
        let mut s = Self::default();
        if regime == Regime::Codebook {
            s.fixed_team = codebook_team;
        }
        s
    }
}

/// Draws one training scenario. The seed is left to the caller.
pub fn sample_training_scenario<R: Rng + ?Sized>(sampler: &TrainingSampler, rng: &mut R) -> EpisodeSpec {
    let team = sampler
        .fixed_team
        .unwrap_or_else(|| rng.random_range(sampler.min_team..=sampler.max_team));
    let mut scenario = sampler.base.clone();
    scenario.max_maps = scenario.max_maps.max(team);
    EpisodeSpec { scenario, team }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicyKey {
    Federated,
    Agent { slot: usize },
    Codebook { team: usize, slot: usize },
}

impl PolicyKey {
    pub fn file_name(&self) -> String {
        match self {
            PolicyKey::Federated => "federated.ckpt".into(),
            PolicyKey::Agent { slot } => format!("curriculum_agent{slot}.ckpt"),
            PolicyKey::Codebook { team, slot } => format!("codebook_k{team}_slot{slot}.ckpt"),
        }
    }

    pub fn label(&self) -> String {
        match self {
            PolicyKey::Federated => "pi_f".into(),
            PolicyKey::Agent { slot } => format!("pi_{slot}"),
            PolicyKey::Codebook { team, slot } => format!("pi_{team},{slot}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub key: PolicyKey,
    pub file: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub regime: Regime,
    pub max_maps: usize,
    pub entries: Vec<ManifestEntry>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

/// The set of policies a regime deploys.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyRegistry {
    pub regime: Regime,
    /// Largest fleet the registry is sized for (M).
    pub max_maps: usize,
    pub entries: BTreeMap<PolicyKey, PolicyParameters>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl PolicyRegistry {
    pub fn new(regime: Regime, max_maps: usize) -> Self {
        Self { regime, max_maps, entries: BTreeMap::new() }
    }

    /// Registry holding the same initial policy under every key the regime
    /// defines for teams of 1..=M.
    pub fn full(regime: Regime, max_maps: usize, init: &PolicyParameters) -> Self {
        let mut r = Self::new(regime, max_maps);
        for key in Self::keys(regime, 1..=max_maps, max_maps) {
            r.entries.insert(key, init.clone());
        }
        r
    }

    /// Keys of a regime given codebook team sizes and fleet size.
    pub fn keys(regime: Regime, teams: impl IntoIterator<Item = usize>, max_maps: usize) -> Vec<PolicyKey> {
        match regime {
            Regime::Federated => vec![PolicyKey::Federated],
            Regime::Curriculum => (0..max_maps).map(|slot| PolicyKey::Agent { slot }).collect(),
            Regime::Codebook => teams
                .into_iter()
                .flat_map(|team| (0..team).map(move |slot| PolicyKey::Codebook { team, slot }))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(&mut self, key: PolicyKey, params: PolicyParameters) {
        self.entries.insert(key, params);
    }

    pub fn get(&self, key: &PolicyKey) -> Result<&PolicyParameters> {
        self.entries.get(key).ok_or_else(|| Error::MissingPolicy(key.label()))
    }

    /// Team sizes with codebook entries, ascending.
    pub fn codebook_teams(&self) -> Vec<usize> {
        let mut teams: Vec<usize> = self
            .entries
            .keys()
            .filter_map(|k| match k {
                PolicyKey::Codebook { team, .. } => Some(*team),
                _ => None,
            })
            .collect();
        teams.dedup();
        teams
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut entries = Vec::with_capacity(self.entries.len());
        for (key, params) in &self.entries {
            let bytes = checkpoint::encode(params, self.regime.tag());
            let file = key.file_name();
            std::fs::write(dir.join(&file), &bytes)?;
            entries.push(ManifestEntry { key: *key, file, sha256: sha256_hex(&bytes) });
        }
        let manifest = Manifest { regime: self.regime, max_maps: self.max_maps, entries };
        std::fs::write(dir.join(MANIFEST_FILE), serde_json::to_vec_pretty(&manifest)?)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest_path = dir.join(MANIFEST_FILE);
        let manifest: Manifest = serde_json::from_slice(&std::fs::read(&manifest_path)?)
            .map_err(|e| Error::Checkpoint { path: manifest_path.clone(), reason: e.to_string() })?;
        let mut reg = Self::new(manifest.regime, manifest.max_maps);
        for e in manifest.entries {
            let path: PathBuf = dir.join(&e.file);
            let bytes = std::fs::read(&path)?;
            if sha256_hex(&bytes) != e.sha256 {
                return Err(Error::Checkpoint { path, reason: "hash does not match manifest".into() });
            }
            let (params, tag) = checkpoint::decode(&bytes, &path)?;
            if tag != manifest.regime.tag() {
                return Err(Error::Checkpoint { path, reason: format!("regime tag {tag:?} in a {} registry", manifest.regime) });
            }
            reg.entries.insert(e.key, params);
        }
        Ok(reg)
    }
}

/// Policy a MAP runs given the team size `m_s`. `slot` is the MAP's rank
/// among active MAPs (ascending id), `map` its id. Codebook teams without
/// trained entries fall back to a random slot of the nearest trained team.
pub fn select_policy<'a, R: Rng + ?Sized>(
    registry: &'a PolicyRegistry,
    m_s: usize,
    slot: usize,
    map: usize,
    rng: &mut R,
) -> Result<(PolicyKey, &'a PolicyParameters)> {
    let key = match registry.regime {
        Regime::Federated => PolicyKey::Federated,
        Regime::Curriculum => PolicyKey::Agent { slot: map },
        Regime::Codebook => {
            let teams = registry.codebook_teams();
            if teams.contains(&m_s) && slot < m_s {
                PolicyKey::Codebook { team: m_s, slot }
            } else {
                let team = teams
                    .iter()
                    .copied()
                    .min_by_key(|t| (t.abs_diff(m_s), usize::MAX - t))
                    .ok_or_else(|| Error::MissingPolicy(format!("codebook has no entries for M_s={m_s}")))?;
                PolicyKey::Codebook { team, slot: rng.random_range(0..team) }
            }
        }
    };
    Ok((key, registry.get(&key)?))
}

/// Federated training bookkeeping. Learners `0..agents` act; learner
/// `agents` holds π_f and never acts.
pub struct FederatedHook {
    pub agents: usize,
    pub schedule: FederationSchedule,
}

impl FederatedHook {
    /// Initial learners: every agent and π_f start from the same weights.
    pub fn learners(&self, init: &PolicyParameters) -> Vec<Learner> {
        (0..=self.agents).map(|_| Learner::new(init.clone())).collect()
    }

    pub fn global<'a>(&self, learners: &'a [Learner]) -> &'a PolicyParameters {
        &learners[self.agents].params
    }

    /// Mixes the participants into π_f and writes the result back to every
    /// agent. With α_f = 1 nothing is mixed and agents keep their weights.
    pub fn aggregate(&self, learners: &mut [Learner], participants: &[usize]) -> Result<bool> {
        let agents: Vec<usize> = participants.iter().copied().filter(|&p| p < self.agents).collect();
        if agents.is_empty() || self.schedule.alpha_f >= 1.0 {
            return Ok(false);
        }
        let mixed = {
            let views: Vec<&[f64]> = agents.iter().map(|&i| learners[i].params.weights.as_slice()).collect();
            federated_average(&learners[self.agents].params.weights, &views, self.schedule.alpha_f)?
        };
        let step: u64 = agents.iter().map(|&i| learners[i].params.step).max().unwrap_or(0);
        for l in learners.iter_mut() {
            l.params.weights.clone_from(&mixed);
        }
        let g = &mut learners[self.agents].params;
        g.version += 1;
        g.step = step;
        Ok(true)
    }
}

impl RegimeHook for FederatedHook {
    fn learner_for(&self, slot: usize) -> usize {
        slot
    }

    fn after_batch(&self, learners: &mut [Learner], participants: &[usize], counter: &mut u64, batch_steps: u64) -> Result<bool> {
        *counter += batch_steps;
        if *counter < self.schedule.tau_f {
            return Ok(false);
        }
        *counter = 0;
        self.aggregate(learners, participants)
    }

    fn finish(&self, learners: &mut [Learner], participants: &[usize]) -> Result<()> {
        self.aggregate(learners, participants).map(|_| ())
    }
}

/// Registry for a trained set of learners.
pub fn registry_from_learners(regime: Regime, max_maps: usize, learners: &[Learner], codebook_team: Option<usize>) -> PolicyRegistry {
    let mut reg = PolicyRegistry::new(regime, max_maps);
    match regime {
        Regime::Federated => {
            if let Some(g) = learners.last() {
                reg.insert(PolicyKey::Federated, g.params.clone());
            }
        }
        Regime::Curriculum => {
            for (slot, l) in learners.iter().enumerate() {
                reg.insert(PolicyKey::Agent { slot }, l.params.clone());
            }
        }
        Regime::Codebook => {
            let team = codebook_team.unwrap_or(learners.len());
            for (slot, l) in learners.iter().enumerate().take(team) {
                reg.insert(PolicyKey::Codebook { team, slot }, l.params.clone());
            }
        }
    }
    reg
}

/// Architecture-compatible check used before mixing or deploying policies.
pub fn same_architecture(a: &Architecture, b: &Architecture) -> bool {
    a == b && a.param_count() == b.param_count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::stream;

    #[test]
    fn average_examples() {
        assert_eq!(federated_average(&[2.0], &[&[4.0], &[0.0]], 0.5).unwrap(), vec![2.0]);
        assert_eq!(federated_average(&[3.0, -1.0], &[&[9.0, 9.0]], 1.0).unwrap(), vec![3.0, -1.0]);
        assert_eq!(federated_average(&[3.0, -1.0], &[&[9.0, 7.0]], 0.0).unwrap(), vec![9.0, 7.0]);
    }

    #[test]
    fn average_length_mismatch() {
        assert!(matches!(
            federated_average(&[1.0, 2.0], &[&[1.0]], 0.5),
            Err(Error::LengthMismatch { expected: 2, got: 1 })
        ));
    }

    #[test]
    fn complexity_table() {
        assert_eq!(complexity(Regime::Codebook, 4), 10);
        assert_eq!(complexity(Regime::Curriculum, 4), 4);
        assert_eq!(complexity(Regime::Federated, 4), 1);
        assert_eq!(operational_efficiency(2e9, Regime::Codebook, 4), 2e8);
        assert_eq!(operational_efficiency(2e9, Regime::Curriculum, 4), 5e8);
        assert_eq!(operational_efficiency(2e9, Regime::Federated, 4), 2e9);
    }

    #[test]
    fn registry_sizes_match_complexity() {
        let init = PolicyParameters::init(Architecture::default(), &mut stream(0, 0)).unwrap();
        for m in 1..=6 {
            for r in Regime::ALL {
                assert_eq!(PolicyRegistry::full(r, m, &init).len(), complexity(r, m), "{r} M={m}");
            }
        }
    }

    #[test]
    fn codebook_sampler_is_fixed() {
        let s = TrainingSampler::for_regime(Regime::Codebook, Some(3));
        let mut rng = stream(1, 0);
        for _ in 0..100 {
            let spec = sample_training_scenario(&s, &mut rng);
            assert_eq!(spec.team, 3);
            assert_eq!(spec.scenario.n_ue, 25);
        }
    }

    fn codebook() -> PolicyRegistry {
        let mut reg = PolicyRegistry::new(Regime::Codebook, 4);
        let mut rng = stream(2, 0);
        for key in PolicyRegistry::keys(Regime::Codebook, [2, 3, 4], 4) {
            reg.insert(key, PolicyParameters::random(Architecture::default(), 0.1, &mut rng).unwrap());
        }
        reg
    }

    #[test]
    fn codebook_fallback_uses_largest_team() {
        let reg = codebook();
        assert_eq!(reg.len(), 9);
        let mut rng = stream(3, 0);
        let mut seen = std::collections::BTreeSet::new();
        for _ in 0..200 {
            let (key, _) = select_policy(&reg, 6, 5, 5, &mut rng).unwrap();
            match key {
                PolicyKey::Codebook { team: 4, slot } => {
                    seen.insert(slot);
                }
                other => panic!("unexpected {other:?}"),
            }
        }
        assert_eq!(seen.len(), 4);
        let (key, _) = select_policy(&reg, 3, 1, 7, &mut rng).unwrap();
        assert_eq!(key, PolicyKey::Codebook { team: 3, slot: 1 });
    }

    #[test]
    fn curriculum_uses_map_id() {
        let init = PolicyParameters::init(Architecture::default(), &mut stream(0, 0)).unwrap();
        let reg = PolicyRegistry::full(Regime::Curriculum, 4, &init);
        let (key, _) = select_policy(&reg, 3, 0, 2, &mut stream(0, 1)).unwrap();
        assert_eq!(key, PolicyKey::Agent { slot: 2 });
    }

    #[test]
    fn registry_roundtrip_and_tamper() {
        let reg = codebook();
        let dir = tempfile::tempdir().unwrap();
        reg.save(dir.path()).unwrap();
        assert_eq!(PolicyRegistry::load(dir.path()).unwrap(), reg);
        let f = dir.path().join(PolicyKey::Codebook { team: 2, slot: 0 }.file_name());
        let mut bytes = std::fs::read(&f).unwrap();
        let n = bytes.len();
        bytes[n - 1] ^= 1;
        std::fs::write(&f, bytes).unwrap();
        assert!(matches!(PolicyRegistry::load(dir.path()), Err(Error::Checkpoint { .. })));
    }

    #[test]
    fn aggregation_synchronises_agents() {
        let hook = FederatedHook { agents: 3, schedule: FederationSchedule::default() };
        let mut rng = stream(4, 0);
        let mut learners: Vec<Learner> = (0..4)
            .map(|_| Learner::new(PolicyParameters::random(Architecture::default(), 0.1, &mut rng).unwrap()))
            .collect();
        assert!(hook.aggregate(&mut learners, &[0, 1, 2]).unwrap());
        for l in &learners[..3] {
            assert_eq!(l.params.weights, hook.global(&learners).weights);
        }
    }

    #[test]
    fn full_retention_keeps_agents_apart() {
        let hook = FederatedHook { agents: 2, schedule: FederationSchedule { tau_f: 1, alpha_f: 1.0 } };
        let mut rng = stream(5, 0);
        let mut learners: Vec<Learner> = (0..3)
            .map(|_| Learner::new(PolicyParameters::random(Architecture::default(), 0.1, &mut rng).unwrap()))
            .collect();
        let before = learners.clone();
        assert!(!hook.aggregate(&mut learners, &[0, 1]).unwrap());
        assert_eq!(learners, before);
    }
}
