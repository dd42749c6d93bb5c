use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::placement::action::{apply_action, Action};
use crate::placement::observation::{build_observation, Observation, ObservationShape};
use crate::placement::reward::{reward, RewardParams};
use crate::placement::targets::{assign_targets, kmeans, KMEANS_MAX_ITERS};
use crate::radio::{self, RadioConfig};
use crate::scenario::{build_scenario, stream, step_mobility, Location2D, Location3D, NetworkState, ScenarioConfig};

/// Settings shared by every training episode.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub shape: ObservationShape,
    pub reward: RewardParams,
    pub radio: RadioConfig,
}

/// One sampled training episode: the scenario and how many MAPs fly in it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSpec {
    pub scenario: ScenarioConfig,
    pub team: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepInfo {
    pub map: usize,
    pub reward: f64,
    pub distance: f64,
    pub c_backhaul: f64,
}

/// Low-level placement MDP for a fixed team of MAPs.
pub struct PlacementEnv {
    pub state: NetworkState,
    pub cfg: EnvConfig,
    centroids: Vec<Location2D>,
    stale: bool,
    cluster_rng: ChaCha8Rng,
}

/// Stream id for clustering draws, kept apart from mobility/channel/control.
const CLUSTER_STREAM: u64 = 3;

impl PlacementEnv {
    /// Builds the scenario and deploys `team` MAPs at uniformly random
    /// positions drawn from the control stream.
    pub fn reset(spec: &EpisodeSpec, cfg: EnvConfig) -> Result<Self> {
        if spec.team == 0 || spec.team > spec.scenario.max_maps {
            return Err(Error::InvalidScenario(format!(
                "team of {} MAPs with max_maps {}",
                spec.team, spec.scenario.max_maps
            )));
        }
        let mut state = build_scenario(&spec.scenario)?;
        for i in 0..spec.team {
            let region = *state.region();
            let loc = region.sample(&mut state.rng.control);
            state.activate_map(i, loc)?;
        }
        Ok(Self::from_state(state, cfg))
    }

    /// Wraps an already populated state.
    pub fn from_state(state: NetworkState, cfg: EnvConfig) -> Self {
        let cluster_rng = stream(state.config.seed, CLUSTER_STREAM);
        Self { state, cfg, centroids: Vec::new(), stale: true, cluster_rng }
    }

    pub fn team(&self) -> Vec<usize> {
        self.state.active_map_ids()
    }

    pub fn observe(&self, map: usize) -> Observation {
        build_observation(&self.state, map, self.cfg.shape)
    }

    pub fn centroids(&mut self) -> &[Location2D] {
        let k = self.state.deployed();
        if self.stale || self.centroids.len() != k.min(self.visible_ues()) {
            let points: Vec<Location2D> = self.state.ues.iter().filter(|u| !u.blocked).map(|u| u.loc).collect();
            self.centroids = kmeans(&points, k.max(1), KMEANS_MAX_ITERS, &mut self.cluster_rng).centroids;
            self.stale = false;
        }
        &self.centroids
    }

    fn visible_ues(&self) -> usize {
        self.state.ues.iter().filter(|u| !u.blocked).count()
    }

    /// Current clustering target of every active MAP.
    pub fn targets(&mut self) -> Vec<(usize, Location3D)> {
        let altitude = self.cfg.reward.target_altitude;
        self.centroids();
        assign_targets(&self.state, &self.centroids, altitude)
    }

    /// Applies one action per listed MAP, then scores every moved MAP.
    /// UEs advance afterwards so the next observation sees the new slot.
    pub fn step(&mut self, actions: &[(usize, Action)]) -> Result<Vec<StepInfo>> {
        self.move_maps(actions)?;
        radio::refresh_backhaul_channel(&mut self.state, &self.cfg.radio);
        let maps: Vec<usize> = actions.iter().map(|(m, _)| *m).collect();
        let out = self.score(&maps)?;
        self.advance();
        Ok(out)
    }

    /// Moves MAPs, rejecting any move that leaves the region or exceeds the
    /// per-slot step.
    pub fn move_maps(&mut self, actions: &[(usize, Action)]) -> Result<()> {
        let step = self.state.config.map_step_m;
        for &(map, action) in actions {
            if !self.state.maps[map].active {
                return Err(Error::InactiveMap(map));
            }
            let before = self.state.maps[map].loc;
            let after = apply_action(&mut self.state, map, action);
            if !self.state.region().contains(&after) {
                return Err(Error::Constraint(format!("C7: MAP {map} left the region at {after:?}")));
            }
            if before.distance(&after) > step + 1e-9 {
                return Err(Error::Constraint(format!("C8: MAP {map} moved more than {step} m")));
            }
        }
        Ok(())
    }

    /// Rewards of `maps` against the current targets and backhaul channel.
    pub fn score(&mut self, maps: &[usize]) -> Result<Vec<StepInfo>> {
        let targets = self.targets();
        let mut out = Vec::with_capacity(maps.len());
        for &map in maps {
            let target = targets.iter().find(|(i, _)| *i == map).map(|(_, t)| *t);
            let loc = self.state.maps[map].loc;
            let distance = target.map(|t| loc.distance(&t)).unwrap_or(0.0);
            let c_backhaul = radio::backhaul_sinr(&self.state, &self.cfg.radio, map)
                .map(|s| radio::backhaul_capacity(s, true, &self.cfg.radio))?;
            out.push(StepInfo { map, reward: reward(distance, c_backhaul, &self.cfg.reward), distance, c_backhaul });
        }
        Ok(out)
    }

    /// Advances UE mobility and blockage by one slot.
    pub fn advance(&mut self) {
        if self.state.config.ue_speed > 0.0 || self.state.config.blockage_prob > 0.0 {
            step_mobility(&mut self.state, 1);
            self.stale = true;
        } else {
            self.state.slot += 1;
        }
    }
}

/// Uniform-random action, the baseline the trained policy is compared to.
pub fn random_action<R: Rng + ?Sized>(rng: &mut R) -> Action {
    Action::ALL[rng.random_range(0..Action::COUNT)]
}
