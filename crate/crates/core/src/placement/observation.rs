use serde::{Deserialize, Serialize};

use crate::scenario::NetworkState;

pub const UE_FEATURES: usize = 4;
pub const MAP_FEATURES: usize = 3;
pub const SELF_FEATURES: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservationShape {
    pub ue_slots: usize,
    pub map_slots: usize,
}

impl Default for ObservationShape {
    fn default() -> Self {
        Self { ue_slots: 15, map_slots: 5 }
    }
}

/// Fixed-shape local view of one MAP. Rows beyond the available entities are
/// zero and masked out.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    /// (dx, dy, -z, demand) per nearby unblocked UE.
    pub ue: Vec<[f64; UE_FEATURES]>,
    pub ue_mask: Vec<bool>,
    /// (dx, dy, dz) per nearby deployed MAP.
    pub maps: Vec<[f64; MAP_FEATURES]>,
    pub map_mask: Vec<bool>,
    pub own: [f64; SELF_FEATURES],
}

impl Observation {
    pub fn empty(shape: ObservationShape) -> Self {
        Self {
            ue: vec![[0.0; UE_FEATURES]; shape.ue_slots],
            ue_mask: vec![false; shape.ue_slots],
            maps: vec![[0.0; MAP_FEATURES]; shape.map_slots],
            map_mask: vec![false; shape.map_slots],
            own: [0.0; SELF_FEATURES],
        }
    }

    pub fn shape(&self) -> ObservationShape {
        ObservationShape { ue_slots: self.ue.len(), map_slots: self.maps.len() }
    }
}

/// Builds MAP `map`'s observation from the nearest unblocked UEs and nearest
/// other deployed MAPs (3D distance), coordinates relative to the MAP and
/// scaled by the region extents.
pub fn build_observation(state: &NetworkState, map: usize, shape: ObservationShape) -> Observation {
    let region = state.region();
    let me = state.maps[map].loc;
    let mut obs = Observation::empty(shape);
    let demand_scale = if state.config.demand_mean_gbps > 0.0 {
        1.0 / (state.config.demand_mean_gbps * 1e9)
    } else {
        0.0
    };

    let mut ues: Vec<(f64, usize)> = state
        .ues
        .iter()
        .filter(|u| !u.blocked)
        .map(|u| (me.distance(&u.loc.grounded()), u.id))
        .collect();
    ues.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    for (slot, (_, j)) in ues.into_iter().take(shape.ue_slots).enumerate() {
        let u = &state.ues[j];
        obs.ue[slot] = [
            (u.loc.x - me.x) / region.x_max,
            (u.loc.y - me.y) / region.y_max,
            -me.z / region.h_max,
            u.demand_bps * demand_scale,
        ];
        obs.ue_mask[slot] = true;
    }

    let mut others: Vec<(f64, usize)> = state
        .active_maps()
        .filter(|m| m.id != map)
        .map(|m| (me.distance(&m.loc), m.id))
        .collect();
    others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let span = region.h_max - region.h_min;
    for (slot, (_, i)) in others.into_iter().take(shape.map_slots).enumerate() {
        let m = &state.maps[i];
        obs.maps[slot] = [(m.loc.x - me.x) / region.x_max, (m.loc.y - me.y) / region.y_max, (m.loc.z - me.z) / span];
        obs.map_mask[slot] = true;
    }

    obs.own = [me.x / region.x_max, me.y / region.y_max, me.z / region.h_max];
    obs
}
