use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardParams {
    /// Reference distance d0 in meters.
    pub d0: f64,
    /// Converts backhaul capacity from bps into reward units (1e-9: Gbps).
    pub cap_scale: f64,
    pub gamma: f64,
    pub horizon: usize,
    /// Altitude the clustering targets are lifted to.
    pub target_altitude: f64,
}

impl Default for RewardParams {
    fn default() -> Self {
        Self { d0: 10.0, cap_scale: 1e-9, gamma: 0.6, horizon: 100, target_altitude: 60.0 }
    }
}

/// Multi-objective placement reward. Far from the target (d > d0) the MAP is
/// charged its distance; within d0 it earns its scaled backhaul capacity minus d0.
pub fn reward(distance: f64, c_backhaul: f64, params: &RewardParams) -> f64 {
    let delta = if distance <= params.d0 { 1.0 } else { 0.0 };
    (delta - 1.0) * distance + delta * (params.cap_scale * c_backhaul - params.d0)
}
