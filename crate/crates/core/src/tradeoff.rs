//! Decentralized control of the number of deployed MAPs.
//!
//! Every MAP keeps a signed counter fed by local monitoring of the UEs it
//! serves: inertia (sum of squared distances to its UEs) above a threshold or
//! a full set of beams pushes the counter up, an empty or under-used MAP
//! pushes it down. Once per decision period each MAP looks at the mean of its
//! counter samples and either asks for a helper MAP, repatriates itself, or
//! holds. The counters are then reset.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::network::BsId;
use crate::scenario::{Location3D, NetworkState};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TradeoffParams {
    /// Inertia threshold Phi_max in m^2.
    pub phi_max: f64,
    pub phi_min: f64,
    pub k_min: usize,
    pub decision_period: u64,
    pub reset_period: u64,
    /// Half-width of the horizontal spawn offset of a new MAP.
    pub spawn_jitter_m: f64,
}

impl Default for TradeoffParams {
    fn default() -> Self {
        Self {
            phi_max: 6e3,
            phi_min: 0.0,
            k_min: 2,
            decision_period: 10,
            reset_period: 10,
            spawn_jitter_m: 20.0,
        }
    }
}

/// Number of MAPs enabled at start-up: ceil(K / E[K_i]) clamped to [1, M].
pub fn initial_map_count(n_ue: usize, mean_beams: f64, max_maps: usize) -> usize {
    if !(mean_beams > 0.0) {
        return 1;
    }
    let n = (n_ue as f64 / mean_beams).ceil() as usize;
    n.clamp(1, max_maps.max(1))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MapTradeoff {
    pub theta: i64,
    /// Counter samples since the last reset.
    pub history: Vec<i64>,
    pub inertia: f64,
    pub served: usize,
}

impl MapTradeoff {
    pub fn mean_theta(&self) -> f64 {
        if self.history.is_empty() {
            0.0
        } else {
            self.history.iter().sum::<i64>() as f64 / self.history.len() as f64
        }
    }
}

/// One local monitoring observation of a MAP.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonitorEvent {
    pub slot: u64,
    pub map: usize,
    pub inertia: f64,
    pub served: usize,
    pub beam_limit: usize,
    pub delta: i64,
    pub theta: i64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Refusal {
    /// Activating would exceed M active backhaul links.
    MaxMaps,
    /// Every MAP slot is busy or was released this round.
    NoInactiveMap,
    /// The last deployed MAP may not leave.
    LastMap,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Decision {
    Activate { by: usize, map: usize },
    Repatriate { map: usize },
    Refused { map: usize, reason: Refusal },
}

/// Per-MAP trade-off bookkeeping for one episode.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TradeoffState {
    pub params: TradeoffParams,
    pub maps: BTreeMap<usize, MapTradeoff>,
}

/// Inertia Phi_i: sum of squared 3D distances from MAP `map` to its served UEs.
pub fn inertia(state: &NetworkState, map: usize) -> f64 {
    let loc = state.maps[map].loc;
    state
        .assoc
        .served_by(BsId::Map(map))
        .map(|j| {
            let d = loc.distance(&state.ues[j].loc.grounded());
            d * d
        })
        .sum()
}

/// Counter change of one monitoring event, one unit per criterion.
pub fn theta_delta(params: &TradeoffParams, inertia: f64, served: usize, beam_limit: usize) -> i64 {
    let topology = if served == 0 || inertia < params.phi_min {
        -1
    } else if inertia > params.phi_max {
        1
    } else {
        0
    };
    let load = if served >= beam_limit {
        1
    } else if served < params.k_min {
        -1
    } else {
        0
    };
    topology + load
}

impl TradeoffState {
    pub fn new(params: TradeoffParams) -> Self {
        Self { params, maps: BTreeMap::new() }
    }

    /// Local monitoring of MAP `map` at the current slot.
    pub fn monitor(&mut self, state: &NetworkState, map: usize) -> MonitorEvent {
        let phi = inertia(state, map);
        let served = state.assoc.served_count(BsId::Map(map));
        let beam_limit = state.maps[map].beam_limit;
        let delta = theta_delta(&self.params, phi, served, beam_limit);
        let entry = self.maps.entry(map).or_default();
        entry.inertia = phi;
        entry.served = served;
        entry.theta += delta;
        entry.history.push(entry.theta);
        MonitorEvent { slot: state.slot, map, inertia: phi, served, beam_limit, delta, theta: entry.theta }
    }

    /// Monitors every deployed MAP and forgets undeployed ones.
    pub fn monitor_all(&mut self, state: &NetworkState) -> Vec<MonitorEvent> {
        self.maps.retain(|id, _| state.maps[*id].active);
        state.active_map_ids().into_iter().map(|i| self.monitor(state, i)).collect()
    }

    pub fn reset(&mut self) {
        for m in self.maps.values_mut() {
            m.theta = 0;
            m.history.clear();
        }
    }

    pub fn is_decision_slot(&self, t: u64) -> bool {
        t > 0 && t.is_multiple_of(self.params.decision_period)
    }

    /// Resolves the requests of every deployed MAP into concrete decisions.
    /// Repatriations go first (never the last MAP), then activations in
    /// ascending requester id while inactive slots and the cap M allow.
    pub fn decide(&self, state: &NetworkState) -> Vec<Decision> {
        let active = state.active_map_ids();
        let mean = |i: usize| self.maps.get(&i).map(MapTradeoff::mean_theta).unwrap_or(0.0);
        let leaving: Vec<usize> = active.iter().copied().filter(|&i| mean(i) < 0.0).collect();
        let asking: Vec<usize> = active.iter().copied().filter(|&i| mean(i) > 0.0).collect();
        resolve(state, &active, &leaving, &asking)
    }

    /// Applies decisions to the network and resets the counters.
    pub fn apply<R: Rng + ?Sized>(&mut self, state: &mut NetworkState, decisions: &[Decision], rng: &mut R) {
        for d in decisions {
            match *d {
                Decision::Repatriate { map } => {
                    state.deactivate_map(map);
                    self.maps.remove(&map);
                }
                Decision::Activate { by, map } => {
                    let spawn = spawn_location(state, by, self.params.spawn_jitter_m, rng);
                    // The slot is known to exist and be idle.
                    let _ = state.activate_map(map, spawn);
                    self.maps.insert(map, MapTradeoff::default());
                }
                Decision::Refused { .. } => {}
            }
        }
        self.reset();
    }
}

/// Turns raw requests into decisions; shared with the log-replay check.
pub fn resolve(state: &NetworkState, active: &[usize], leaving: &[usize], asking: &[usize]) -> Vec<Decision> {
    let mut out = Vec::new();
    let mut deployed = active.len();
    let mut released = Vec::new();
    for &i in leaving {
        if deployed <= 1 {
            out.push(Decision::Refused { map: i, reason: Refusal::LastMap });
        } else {
            deployed -= 1;
            released.push(i);
            out.push(Decision::Repatriate { map: i });
        }
    }
    let mut free: Vec<usize> = state
        .maps
        .iter()
        .filter(|m| !m.active && !released.contains(&m.id))
        .map(|m| m.id)
        .collect();
    free.reverse();
    for &i in asking {
        if deployed >= state.config.max_maps {
            out.push(Decision::Refused { map: i, reason: Refusal::MaxMaps });
        } else if let Some(slot) = free.pop() {
            deployed += 1;
            out.push(Decision::Activate { by: i, map: slot });
        } else {
            out.push(Decision::Refused { map: i, reason: Refusal::NoInactiveMap });
        }
    }
    out
}

/// Requester position plus a uniform horizontal offset, at mid-height.
pub fn spawn_location<R: Rng + ?Sized>(state: &NetworkState, by: usize, jitter: f64, rng: &mut R) -> Location3D {
    let region = state.region();
    let base = state.maps[by].loc;
    let (dx, dy) = if jitter > 0.0 {
        (rng.random_range(-jitter..=jitter), rng.random_range(-jitter..=jitter))
    } else {
        (0.0, 0.0)
    };
    region.clamp(Location3D::new(base.x + dx, base.y + dy, region.mid_height()))
}

/// Rebuilds the decisions of one round from the monitoring log alone.
pub fn replay_decisions(state: &NetworkState, window: &[MonitorEvent]) -> Vec<Decision> {
    let mut per_map: BTreeMap<usize, Vec<i64>> = BTreeMap::new();
    for e in window {
        per_map.entry(e.map).or_default().push(e.theta);
    }
    let active = state.active_map_ids();
    let mean = |i: &usize| {
        per_map
            .get(i)
            .filter(|h| !h.is_empty())
            .map(|h| h.iter().sum::<i64>() as f64 / h.len() as f64)
            .unwrap_or(0.0)
    };
    let leaving: Vec<usize> = active.iter().copied().filter(|i| mean(i) < 0.0).collect();
    let asking: Vec<usize> = active.iter().copied().filter(|i| mean(i) > 0.0).collect();
    resolve(state, &active, &leaving, &asking)
}
