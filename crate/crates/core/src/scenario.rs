//! Geometry, node populations, UE mobility, traffic demand and blockage.
//!
//! Time is slotted at one second per slot, so speeds in m/s are distances in
//! m/slot. UEs drift in groups: every group shares a waypoint and each member
//! heads for the group waypoint plus a small personal offset. When every
//! member of a group has arrived the group draws a fresh waypoint.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{AssociationState, BackhaulAllocation, RateReport};
use crate::radio::ChannelState;

/// Slot duration in seconds.
pub const SLOT_SECONDS: f64 = 1.0;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Location2D {
    pub x: f64,
    pub y: f64,
}

impl Location2D {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Location2D) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Ground point seen as a 3D location at altitude zero.
    pub fn grounded(&self) -> Location3D {
        Location3D::new(self.x, self.y, 0.0)
    }

    pub fn lift(&self, z: f64) -> Location3D {
        Location3D::new(self.x, self.y, z)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Location3D {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Location3D {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn distance(&self, other: &Location3D) -> f64 {
        let (dx, dy, dz) = (self.x - other.x, self.y - other.y, self.z - other.z);
        (dx * dx + dy * dy + dz * dz).sqrt()
    }

    pub fn ground(&self) -> Location2D {
        Location2D::new(self.x, self.y)
    }

    pub fn sub(&self, other: &Location3D) -> [f64; 3] {
        [self.x - other.x, self.y - other.y, self.z - other.z]
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

/// Axis-aligned box MAPs may fly in; UEs live on its ground footprint.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub x_max: f64,
    pub y_max: f64,
    pub h_min: f64,
    pub h_max: f64,
}

impl Default for Region {
    fn default() -> Self {
        Self { x_max: 200.0, y_max: 200.0, h_min: 20.0, h_max: 120.0 }
    }
}

impl Region {
    pub fn validate(&self) -> Result<()> {
        let ok = self.x_max > 0.0
            && self.y_max > 0.0
            && self.h_min >= 0.0
            && self.h_max > self.h_min
            && [self.x_max, self.y_max, self.h_min, self.h_max].iter().all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidScenario(format!("region {self:?} is not a valid box")))
        }
    }

    pub fn contains(&self, loc: &Location3D) -> bool {
        const EPS: f64 = 1e-9;
        loc.is_finite()
            && (-EPS..=self.x_max + EPS).contains(&loc.x)
            && (-EPS..=self.y_max + EPS).contains(&loc.y)
            && (self.h_min - EPS..=self.h_max + EPS).contains(&loc.z)
    }

    pub fn contains_ground(&self, loc: &Location2D) -> bool {
        (0.0..=self.x_max).contains(&loc.x) && (0.0..=self.y_max).contains(&loc.y)
    }

    pub fn clamp(&self, loc: Location3D) -> Location3D {
        Location3D::new(
            loc.x.clamp(0.0, self.x_max),
            loc.y.clamp(0.0, self.y_max),
            loc.z.clamp(self.h_min, self.h_max),
        )
    }

    pub fn clamp_ground(&self, loc: Location2D) -> Location2D {
        Location2D::new(loc.x.clamp(0.0, self.x_max), loc.y.clamp(0.0, self.y_max))
    }

    pub fn mid_height(&self) -> f64 {
        0.5 * (self.h_min + self.h_max)
    }

    /// Largest distance between two points of the region (ground level included).
    pub fn diameter(&self) -> f64 {
        (self.x_max * self.x_max + self.y_max * self.y_max + self.h_max * self.h_max).sqrt()
    }

    pub fn sample_ground<R: Rng + ?Sized>(&self, rng: &mut R) -> Location2D {
        Location2D::new(rng.random_range(0.0..=self.x_max), rng.random_range(0.0..=self.y_max))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Location3D {
        let g = self.sample_ground(rng);
        g.lift(rng.random_range(self.h_min..=self.h_max))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserEquipment {
    pub id: usize,
    pub loc: Location2D,
    pub demand_bps: f64,
    pub blocked: bool,
    /// Personal mobility target (group waypoint plus jitter).
    pub waypoint: Location2D,
    pub speed: f64,
    pub group: usize,
}

impl UserEquipment {
    pub fn arrived(&self) -> bool {
        self.loc.distance(&self.waypoint) < 1e-9
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapNode {
    pub id: usize,
    pub loc: Location3D,
    pub active: bool,
    pub beam_limit: usize,
    pub policy_id: Option<String>,
    /// Location at the previous slot; `None` right after activation.
    pub prev_loc: Option<Location3D>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DonorNode {
    pub loc: Location3D,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub region: Region,
    pub n_ue: usize,
    pub max_maps: usize,
    pub ue_speed: f64,
    pub blockage_prob: f64,
    pub demand_mean_gbps: f64,
    pub seed: u64,
    pub slot_count: usize,
    /// Beam limit K_i of every MAP.
    pub map_beams: usize,
    pub mobility_groups: usize,
    pub waypoint_jitter_m: f64,
    pub blockage_epoch: u64,
    pub donor_loc: Location3D,
    /// Maximum MAP displacement per slot (Delta l).
    pub map_step_m: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            region: Region::default(),
            n_ue: 25,
            max_maps: 10,
            ue_speed: 0.0,
            blockage_prob: 0.0,
            demand_mean_gbps: 1.0,
            seed: 0,
            slot_count: 100,
            map_beams: 10,
            mobility_groups: 5,
            waypoint_jitter_m: 2.0,
            blockage_epoch: 10,
            donor_loc: Location3D::new(100.0, 100.0, 10.0),
            map_step_m: 5.0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        self.region.validate()?;
        if self.n_ue == 0 {
            return Err(Error::InvalidScenario("n_ue must be at least 1".into()));
        }
        if self.max_maps == 0 {
            return Err(Error::InvalidScenario("max_maps must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.blockage_prob) {
            return Err(Error::InvalidScenario(format!(
                "blockage_prob {} outside [0, 1]",
                self.blockage_prob
            )));
        }
        if self.ue_speed < 0.0 || !self.ue_speed.is_finite() {
            return Err(Error::InvalidScenario("ue_speed must be finite and non-negative".into()));
        }
        if self.map_beams == 0 || self.mobility_groups == 0 || self.blockage_epoch == 0 {
            return Err(Error::InvalidScenario(
                "map_beams, mobility_groups and blockage_epoch must be positive".into(),
            ));
        }
        if !self.donor_loc.is_finite() {
            return Err(Error::InvalidScenario("donor location must be finite".into()));
        }
        Ok(())
    }
}

/// Independent random streams of one episode. Keeping mobility separate from
/// channel and control draws makes UE traces identical across control arms
/// that share a seed.
#[derive(Clone, Debug)]
pub struct Streams {
    pub mobility: ChaCha8Rng,
    pub channel: ChaCha8Rng,
    pub control: ChaCha8Rng,
}

impl Streams {
    pub fn new(seed: u64) -> Self {
        Self {
            mobility: stream(seed, 0),
            channel: stream(seed, 1),
            control: stream(seed, 2),
        }
    }
}

/// Seeded ChaCha stream `id` of `seed`.
pub fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Everything known about the network at one slot.
#[derive(Clone, Debug)]
pub struct NetworkState {
    pub config: ScenarioConfig,
    pub donor: DonorNode,
    pub maps: Vec<MapNode>,
    pub ues: Vec<UserEquipment>,
    pub group_waypoints: Vec<Location2D>,
    pub slot: u64,
    pub channel: ChannelState,
    pub assoc: AssociationState,
    pub backhaul: BackhaulAllocation,
    pub rates: RateReport,
    pub rng: Streams,
}

impl NetworkState {
    pub fn region(&self) -> &Region {
        &self.config.region
    }

    pub fn active_maps(&self) -> impl Iterator<Item = &MapNode> + '_ {
        self.maps.iter().filter(|m| m.active)
    }

    pub fn active_map_ids(&self) -> Vec<usize> {
        self.active_maps().map(|m| m.id).collect()
    }

    /// M_s(t), the number of deployed MAPs.
    pub fn deployed(&self) -> usize {
        self.active_maps().count()
    }

    pub fn connected_ues(&self) -> usize {
        self.ues.iter().filter(|u| !u.blocked).count()
    }

    pub fn activate_map(&mut self, id: usize, loc: Location3D) -> Result<()> {
        let region = self.config.region;
        let map = self
            .maps
            .get_mut(id)
            .ok_or_else(|| Error::InvalidScenario(format!("no MAP slot {id}")))?;
        map.active = true;
        map.loc = region.clamp(loc);
        map.prev_loc = None;
        Ok(())
    }

    pub fn deactivate_map(&mut self, id: usize) {
        if let Some(map) = self.maps.get_mut(id) {
            map.active = false;
            map.prev_loc = None;
            map.policy_id = None;
        }
        self.assoc.drop_bs(crate::network::BsId::Map(id));
        self.backhaul.drop_map(id);
    }

    /// Moves a MAP and remembers where it came from (for the displacement bound).
    pub fn move_map(&mut self, id: usize, loc: Location3D) {
        let map = &mut self.maps[id];
        map.prev_loc = Some(map.loc);
        map.loc = loc;
    }
}

/// Draws a per-UE demand: a Poisson count with mean `mean_gbps`, in units of 1 Gbps.
pub fn sample_demand<R: Rng + ?Sized>(rng: &mut R, mean_gbps: f64) -> f64 {
    if !(mean_gbps > 0.0) {
        return 0.0;
    }
    match Poisson::new(mean_gbps) {
        Ok(p) => p.sample(rng).round() * 1e9,
        Err(_) => 0.0,
    }
}

fn draw_group_waypoint(
    rng: &mut ChaCha8Rng,
    config: &ScenarioConfig,
    ues: &mut [UserEquipment],
    group: usize,
) -> Location2D {
    let region = &config.region;
    let wp = region.sample_ground(rng);
    let jitter = Normal::new(0.0, config.waypoint_jitter_m.max(0.0)).ok();
    for ue in ues.iter_mut().filter(|u| u.group == group) {
        let (jx, jy) = match &jitter {
            Some(n) if config.waypoint_jitter_m > 0.0 => (n.sample(rng), n.sample(rng)),
            _ => (0.0, 0.0),
        };
        ue.waypoint = region.clamp_ground(Location2D::new(wp.x + jx, wp.y + jy));
    }
    wp
}

fn resample_blockage(rng: &mut ChaCha8Rng, ues: &mut [UserEquipment], prob: f64) {
    for ue in ues.iter_mut() {
        ue.blocked = rng.random::<f64>() < prob;
    }
}

/// Builds the slot-0 world: UEs uniformly in the footprint, donor at its fixed
/// location, every MAP slot inactive.
pub fn build_scenario(config: &ScenarioConfig) -> Result<NetworkState> {
    config.validate()?;
    let mut rng = Streams::new(config.seed);
    let region = config.region;

    let mut ues: Vec<UserEquipment> = (0..config.n_ue)
        .map(|id| {
            let loc = region.sample_ground(&mut rng.mobility);
            UserEquipment {
                id,
                loc,
                demand_bps: 0.0,
                blocked: false,
                waypoint: loc,
                speed: config.ue_speed,
                group: id % config.mobility_groups,
            }
        })
        .collect();
    for ue in ues.iter_mut() {
        ue.demand_bps = sample_demand(&mut rng.mobility, config.demand_mean_gbps);
    }
    let group_waypoints = (0..config.mobility_groups)
        .map(|g| draw_group_waypoint(&mut rng.mobility, config, &mut ues, g))
        .collect();
    resample_blockage(&mut rng.mobility, &mut ues, config.blockage_prob);

    let parked = Location3D::new(region.x_max / 2.0, region.y_max / 2.0, region.mid_height());
    let maps = (0..config.max_maps)
        .map(|id| MapNode {
            id,
            loc: parked,
            active: false,
            beam_limit: config.map_beams,
            policy_id: None,
            prev_loc: None,
        })
        .collect();

    Ok(NetworkState {
        config: config.clone(),
        donor: DonorNode { loc: config.donor_loc },
        maps,
        ues,
        group_waypoints,
        slot: 0,
        channel: ChannelState::default(),
        assoc: AssociationState::default(),
        backhaul: BackhaulAllocation::default(),
        rates: RateReport::default(),
        rng,
    })
}

/// Advances UE positions by `dt` slots and resamples blockage at epoch boundaries.
pub fn step_mobility(state: &mut NetworkState, dt: u64) {
    for _ in 0..dt {
        let step = state.config.ue_speed * SLOT_SECONDS;
        for ue in state.ues.iter_mut() {
            let dist = ue.loc.distance(&ue.waypoint);
            if dist <= step {
                ue.loc = ue.waypoint;
            } else if step > 0.0 {
                let f = step / dist;
                ue.loc.x += (ue.waypoint.x - ue.loc.x) * f;
                ue.loc.y += (ue.waypoint.y - ue.loc.y) * f;
            }
            ue.loc = state.config.region.clamp_ground(ue.loc);
        }
        if step > 0.0 {
            for g in 0..state.group_waypoints.len() {
                let done = state.ues.iter().filter(|u| u.group == g).all(UserEquipment::arrived);
                if done {
                    state.group_waypoints[g] =
                        draw_group_waypoint(&mut state.rng.mobility, &state.config, &mut state.ues, g);
                }
            }
        }
        state.slot += 1;
        if state.slot.is_multiple_of(state.config.blockage_epoch) {
            resample_blockage(&mut state.rng.mobility, &mut state.ues, state.config.blockage_prob);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_world() {
        let cfg = ScenarioConfig { seed: 7, ..Default::default() };
        let a = build_scenario(&cfg).unwrap();
        let b = build_scenario(&cfg).unwrap();
        assert_eq!(a.ues, b.ues);
    }

    #[test]
    fn ue_counts_and_footprint() {
        for n in [25, 60] {
            let cfg = ScenarioConfig { n_ue: n, seed: 3, ..Default::default() };
            let s = build_scenario(&cfg).unwrap();
            assert_eq!(s.ues.len(), n);
            assert!(s.ues.iter().all(|u| s.region().contains_ground(&u.loc)));
            assert_eq!(s.deployed(), 0);
        }
    }

    #[test]
    fn rejects_bad_configs() {
        let cfg = ScenarioConfig { n_ue: 0, ..Default::default() };
        assert!(build_scenario(&cfg).is_err());
        let cfg = ScenarioConfig {
            region: Region { x_max: -1.0, ..Region::default() },
            ..Default::default()
        };
        assert!(build_scenario(&cfg).is_err());
        let cfg = ScenarioConfig { blockage_prob: 1.5, ..Default::default() };
        assert!(build_scenario(&cfg).is_err());
    }

    #[test]
    fn zero_speed_is_identity() {
        let cfg = ScenarioConfig { ue_speed: 0.0, seed: 1, ..Default::default() };
        let mut s = build_scenario(&cfg).unwrap();
        let before: Vec<_> = s.ues.iter().map(|u| u.loc).collect();
        step_mobility(&mut s, 25);
        let after: Vec<_> = s.ues.iter().map(|u| u.loc).collect();
        assert_eq!(before, after);
    }

    #[test]
    fn direct_kinematics() {
        let cfg = ScenarioConfig { n_ue: 1, ue_speed: 0.8, ..Default::default() };
        let mut s = build_scenario(&cfg).unwrap();
        s.ues[0].loc = Location2D::new(0.0, 0.0);
        s.ues[0].waypoint = Location2D::new(10.0, 0.0);
        step_mobility(&mut s, 1);
        assert!((s.ues[0].loc.x - 0.8).abs() < 1e-12);
        assert_eq!(s.ues[0].loc.y, 0.0);
    }

    #[test]
    fn full_blockage_blocks_everyone() {
        let cfg = ScenarioConfig { blockage_prob: 1.0, ue_speed: 0.8, ..Default::default() };
        let mut s = build_scenario(&cfg).unwrap();
        assert_eq!(s.connected_ues(), 0);
        step_mobility(&mut s, 30);
        assert_eq!(s.connected_ues(), 0);
    }

    #[test]
    fn demand_is_poisson_in_gbps() {
        let mut rng = stream(11, 0);
        let n = 100_000;
        let samples: Vec<f64> = (0..n).map(|_| sample_demand(&mut rng, 1.0)).collect();
        let mean = samples.iter().sum::<f64>() / n as f64;
        assert!((mean - 1e9).abs() / 1e9 < 0.02, "mean {mean}");
        assert!(samples.iter().all(|d| *d >= 0.0 && (d / 1e9).fract() == 0.0));
    }

    #[test]
    fn vanishing_demand_mean_gives_zero() {
        let mut rng = stream(5, 0);
        let zeros = (0..1000).filter(|_| sample_demand(&mut rng, 1e-9) == 0.0).count();
        assert!(zeros >= 999);
        assert_eq!(sample_demand(&mut rng, 0.0), 0.0);
    }

    #[test]
    fn mobility_trace_is_reproducible_and_stays_inside() {
        let cfg = ScenarioConfig { n_ue: 60, ue_speed: 0.8, blockage_prob: 0.5, seed: 9, ..Default::default() };
        let mut a = build_scenario(&cfg).unwrap();
        let mut b = build_scenario(&cfg).unwrap();
        for _ in 0..300 {
            step_mobility(&mut a, 1);
            step_mobility(&mut b, 1);
            assert_eq!(a.ues, b.ues);
            assert!(a.ues.iter().all(|u| a.region().contains_ground(&u.loc)));
        }
    }
}
