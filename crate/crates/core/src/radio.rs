//! Channel gains, interference, SINR and link capacities for the access and
//! backhaul bands.
//!
//! Large-scale gain is a log-distance path loss anchored at the free-space
//! loss at 1 m, with LoS/NLoS exponents for air-to-ground links (LoS drawn
//! from an elevation-angle sigmoid) and log-normal shadowing. Small-scale
//! fading is Nakagami-m power fading normalised to unit mean.
//!
//! Antennas follow a two-lobe pattern: a transmitter's beam has main-lobe
//! gain inside a cone of width `aperture / beams` around the served node and
//! side-lobe gain elsewhere.

use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::BsId;
use crate::scenario::{Location3D, NetworkState};

const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelMode {
    /// LoS, shadowing and fading are all random.
    Stochastic,
    /// No shadowing, unit fading, LoS whenever its probability is at least one half.
    Deterministic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkClass {
    DonorGround,
    MapAirToGround,
    DonorToMap,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadioConfig {
    pub bandwidth_hz: f64,
    /// Fraction of the band given to backhaul.
    pub mu: f64,
    pub noise_psd_dbm_hz: f64,
    pub donor_fc_hz: f64,
    pub map_fc_hz: f64,
    pub donor_aperture_deg: f64,
    pub map_aperture_deg: f64,
    pub donor_gain_dbi: f64,
    pub donor_sidelobe_dbi: f64,
    pub map_mainlobe_dbi: f64,
    pub map_sidelobe_dbi: f64,
    pub ue_gain_dbi: f64,
    /// Shadowing variances in dB^2.
    pub shadowing_var_donor_db: f64,
    pub shadowing_var_map_db: f64,
    pub nakagami_m: f64,
    pub donor_tx_dbm: f64,
    pub map_tx_dbm: f64,
    pub los_a: f64,
    pub los_b: f64,
    pub exponent_los: f64,
    pub exponent_nlos: f64,
    pub exponent_ground: f64,
    pub decorrelation_m: f64,
    pub mode: ChannelMode,
}

impl Default for RadioConfig {
    fn default() -> Self {
        Self {
            bandwidth_hz: 500e6,
            mu: 0.75,
            noise_psd_dbm_hz: -174.0,
            donor_fc_hz: 2e9,
            map_fc_hz: 28e9,
            donor_aperture_deg: 180.0,
            map_aperture_deg: 90.0,
            donor_gain_dbi: 17.0,
            donor_sidelobe_dbi: -10.0,
            map_mainlobe_dbi: 20.0,
            map_sidelobe_dbi: -10.0,
            ue_gain_dbi: 0.0,
            shadowing_var_donor_db: 3.0,
            shadowing_var_map_db: 12.0,
            nakagami_m: 3.0,
            donor_tx_dbm: 30.0,
            map_tx_dbm: 30.0,
            los_a: 9.61,
            los_b: 0.16,
            exponent_los: 2.0,
            exponent_nlos: 3.5,
            exponent_ground: 3.0,
            decorrelation_m: 10.0,
            mode: ChannelMode::Stochastic,
        }
    }
}

impl RadioConfig {
    pub fn validate(&self) -> Result<()> {
        let apertures_ok = [self.donor_aperture_deg, self.map_aperture_deg]
            .iter()
            .all(|a| *a > 0.0 && *a <= 360.0);
        if !(0.0..=1.0).contains(&self.mu) {
            return Err(Error::Config(format!("mu {} outside [0, 1]", self.mu)));
        }
        if !(self.bandwidth_hz > 0.0) {
            return Err(Error::Config("bandwidth must be positive".into()));
        }
        if !apertures_ok {
            return Err(Error::Config("antenna apertures must lie in (0, 360]".into()));
        }
        if !(self.nakagami_m >= 0.5) {
            return Err(Error::Config("nakagami m must be at least 0.5".into()));
        }
        Ok(())
    }

    pub fn access_noise_w(&self) -> f64 {
        (1.0 - self.mu) * dbm_to_w(self.noise_psd_dbm_hz) * self.bandwidth_hz
    }

    pub fn backhaul_noise_w(&self) -> f64 {
        self.mu * dbm_to_w(self.noise_psd_dbm_hz) * self.bandwidth_hz
    }

    fn carrier(&self, class: LinkClass) -> f64 {
        match class {
            LinkClass::DonorGround | LinkClass::DonorToMap => self.donor_fc_hz,
            LinkClass::MapAirToGround => self.map_fc_hz,
        }
    }

    fn shadow_sigma(&self, class: LinkClass) -> f64 {
        match class {
            LinkClass::DonorGround | LinkClass::DonorToMap => self.shadowing_var_donor_db.sqrt(),
            LinkClass::MapAirToGround => self.shadowing_var_map_db.sqrt(),
        }
    }

    fn exponent(&self, class: LinkClass, los: bool) -> f64 {
        match (class, los) {
            (LinkClass::DonorGround, _) => self.exponent_ground,
            (_, true) => self.exponent_los,
            (_, false) => self.exponent_nlos,
        }
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn dbm_to_w(dbm: f64) -> f64 {
    db_to_linear(dbm - 30.0)
}

/// Free-space loss at 1 m, in dB.
pub fn reference_loss_db(fc_hz: f64) -> f64 {
    20.0 * (4.0 * std::f64::consts::PI * fc_hz / SPEED_OF_LIGHT).log10()
}

pub fn path_loss_db(distance_m: f64, fc_hz: f64, exponent: f64) -> f64 {
    reference_loss_db(fc_hz) + 10.0 * exponent * distance_m.log10()
}

/// Elevation of the higher node as seen from the lower one, in degrees.
pub fn elevation_deg(a: &Location3D, b: &Location3D) -> f64 {
    let horizontal = (a.x - b.x).hypot(a.y - b.y);
    (a.z - b.z).abs().atan2(horizontal).to_degrees()
}

pub fn los_probability(elevation_deg: f64, a: f64, b: f64) -> f64 {
    1.0 / (1.0 + a * (-b * (elevation_deg - a)).exp())
}

/// Unit-mean Nakagami-m power gain (Gamma with shape m and scale 1/m).
pub fn nakagami_power<R: Rng + ?Sized>(rng: &mut R, m: f64) -> f64 {
    Gamma::new(m, 1.0 / m).map(|g| g.sample(rng)).unwrap_or(1.0)
}

fn sample_los<R: Rng + ?Sized>(
    class: LinkClass,
    tx: &Location3D,
    rx: &Location3D,
    cfg: &RadioConfig,
    rng: &mut R,
) -> bool {
    if class == LinkClass::DonorGround {
        return true;
    }
    let p = los_probability(elevation_deg(tx, rx), cfg.los_a, cfg.los_b);
    match cfg.mode {
        ChannelMode::Stochastic => rng.random::<f64>() < p,
        ChannelMode::Deterministic => p >= 0.5,
    }
}

fn sample_shadow_db<R: Rng + ?Sized>(class: LinkClass, cfg: &RadioConfig, rng: &mut R) -> f64 {
    let sigma = cfg.shadow_sigma(class);
    match (cfg.mode, Normal::new(0.0, sigma)) {
        (ChannelMode::Stochastic, Ok(n)) if sigma > 0.0 => n.sample(rng),
        _ => 0.0,
    }
}

fn sample_fading<R: Rng + ?Sized>(cfg: &RadioConfig, rng: &mut R) -> f64 {
    match cfg.mode {
        ChannelMode::Stochastic => nakagami_power(rng, cfg.nakagami_m),
        ChannelMode::Deterministic => 1.0,
    }
}

/// Linear large-scale gain G^H for a given LoS state and shadowing draw.
pub fn large_scale_gain(distance_m: f64, class: LinkClass, los: bool, shadow_db: f64, cfg: &RadioConfig) -> f64 {
    let pl = path_loss_db(distance_m, cfg.carrier(class), cfg.exponent(class, los));
    db_to_linear(-(pl + shadow_db))
}

/// Draws a fresh channel realization G^H * zeta between two points.
pub fn path_gain<R: Rng + ?Sized>(
    tx: &Location3D,
    rx: &Location3D,
    class: LinkClass,
    cfg: &RadioConfig,
    rng: &mut R,
) -> Result<f64> {
    let d = tx.distance(rx);
    if !(d > 0.0) {
        return Err(Error::CoincidentNodes);
    }
    let los = sample_los(class, tx, rx, cfg, rng);
    let shadow = sample_shadow_db(class, cfg, rng);
    let fading = sample_fading(cfg, rng);
    Ok(large_scale_gain(d, class, los, shadow, cfg) * fading)
}

/// Access capacity (1 - mu) B log2(1 + x SINR).
pub fn access_capacity(sinr: f64, associated: bool, cfg: &RadioConfig) -> f64 {
    let x = if associated { 1.0 } else { 0.0 };
    (1.0 - cfg.mu) * cfg.bandwidth_hz * (1.0 + x * sinr.max(0.0)).log2()
}

/// Backhaul capacity mu B log2(1 + z SINR).
pub fn backhaul_capacity(sinr: f64, deployed: bool, cfg: &RadioConfig) -> f64 {
    let z = if deployed { 1.0 } else { 0.0 };
    cfg.mu * cfg.bandwidth_hz * (1.0 + z * sinr.max(0.0)).log2()
}

/// Terms of one SINR expression, all linear.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LinkBudget {
    pub tx_power_w: f64,
    pub tx_gain: f64,
    pub rx_gain: f64,
    pub channel_gain: f64,
    pub fading: f64,
    pub interference_w: f64,
    pub noise_w: f64,
}

impl LinkBudget {
    pub fn signal_w(&self) -> f64 {
        self.fading * self.tx_power_w * self.tx_gain * self.channel_gain * self.rx_gain
    }

    pub fn sinr(&self) -> f64 {
        self.signal_w() / (self.interference_w + self.noise_w)
    }

    pub fn snr(&self) -> f64 {
        self.signal_w() / self.noise_w
    }
}

/// Persistent large-scale state of one link plus its current fading draw.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinkState {
    anchor_tx: Location3D,
    anchor_rx: Location3D,
    pub los: bool,
    pub shadow_db: f64,
    /// G^H at the current distance.
    pub gain: f64,
    pub fading: f64,
}

impl LinkState {
    pub fn effective(&self) -> f64 {
        self.gain * self.fading
    }
}

/// Channel realizations for every link of the current slot.
#[derive(Clone, Debug, Default)]
pub struct ChannelState {
    pub donor_ue: Vec<Option<LinkState>>,
    pub map_ue: Vec<Vec<Option<LinkState>>>,
    pub donor_map: Vec<Option<LinkState>>,
}

impl ChannelState {
    pub fn access(&self, bs: BsId, ue: usize) -> Option<&LinkState> {
        match bs {
            BsId::Donor => self.donor_ue.get(ue)?.as_ref(),
            BsId::Map(i) => self.map_ue.get(i)?.get(ue)?.as_ref(),
        }
    }

    pub fn backhaul(&self, map: usize) -> Option<&LinkState> {
        self.donor_map.get(map)?.as_ref()
    }
}

fn update_link<R: Rng + ?Sized>(
    slot: &mut Option<LinkState>,
    tx: Location3D,
    rx: Location3D,
    class: LinkClass,
    cfg: &RadioConfig,
    rng: &mut R,
) {
    // Keep the link strictly away from zero distance.
    let d = tx.distance(&rx).max(1e-3);
    let stale = match slot {
        Some(s) => {
            s.anchor_tx.distance(&tx) > cfg.decorrelation_m || s.anchor_rx.distance(&rx) > cfg.decorrelation_m
        }
        None => true,
    };
    let (los, shadow_db, anchor_tx, anchor_rx) = match slot {
        Some(s) if !stale => (s.los, s.shadow_db, s.anchor_tx, s.anchor_rx),
        _ => (sample_los(class, &tx, &rx, cfg, rng), sample_shadow_db(class, cfg, rng), tx, rx),
    };
    let fading = sample_fading(cfg, rng);
    *slot = Some(LinkState {
        anchor_tx,
        anchor_rx,
        los,
        shadow_db,
        gain: large_scale_gain(d, class, los, shadow_db, cfg),
        fading,
    });
}

/// Refreshes donor-to-MAP links only: new fading every slot, new LoS and
/// shadowing once an end point has moved past the decorrelation distance.
pub fn refresh_backhaul_channel(state: &mut NetworkState, cfg: &RadioConfig) {
    let n_maps = state.maps.len();
    let ch = &mut state.channel;
    ch.donor_map.resize(n_maps, None);
    let donor = state.donor.loc;
    for map in state.maps.iter() {
        if map.active {
            update_link(&mut ch.donor_map[map.id], donor, map.loc, LinkClass::DonorToMap, cfg, &mut state.rng.channel);
        } else {
            ch.donor_map[map.id] = None;
        }
    }
}

/// Refreshes every link of the slot (backhaul, donor access, MAP access).
pub fn refresh_channel(state: &mut NetworkState, cfg: &RadioConfig) {
    refresh_backhaul_channel(state, cfg);
    let n_ue = state.ues.len();
    let n_maps = state.maps.len();
    let ch = &mut state.channel;
    ch.donor_ue.resize(n_ue, None);
    ch.map_ue.resize(n_maps, Vec::new());
    let donor = state.donor.loc;
    for ue in state.ues.iter() {
        update_link(&mut ch.donor_ue[ue.id], donor, ue.loc.grounded(), LinkClass::DonorGround, cfg, &mut state.rng.channel);
    }
    for map in state.maps.iter() {
        let links = &mut ch.map_ue[map.id];
        if !map.active {
            links.clear();
            continue;
        }
        links.resize(n_ue, None);
        for ue in state.ues.iter() {
            update_link(&mut links[ue.id], map.loc, ue.loc.grounded(), LinkClass::MapAirToGround, cfg, &mut state.rng.channel);
        }
    }
}

fn angle_between(a: [f64; 3], b: [f64; 3]) -> f64 {
    let dot = a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    let na = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
    let nb = (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na * nb)).clamp(-1.0, 1.0).acos().to_degrees()
}

/// True when `target` lies inside the cone of any beam aimed from `origin` at `beams`.
pub fn in_any_beam(origin: &Location3D, beams: &[Location3D], target: &Location3D, beam_width_deg: f64) -> bool {
    let dir = target.sub(origin);
    beams
        .iter()
        .any(|b| angle_between(b.sub(origin), dir) <= 0.5 * beam_width_deg)
}

pub fn bs_location(state: &NetworkState, bs: BsId) -> Location3D {
    match bs {
        BsId::Donor => state.donor.loc,
        BsId::Map(i) => state.maps[i].loc,
    }
}

fn tx_power_w(bs: BsId, cfg: &RadioConfig) -> f64 {
    match bs {
        BsId::Donor => dbm_to_w(cfg.donor_tx_dbm),
        BsId::Map(_) => dbm_to_w(cfg.map_tx_dbm),
    }
}

fn lobes(bs: BsId, cfg: &RadioConfig) -> (f64, f64) {
    match bs {
        BsId::Donor => (db_to_linear(cfg.donor_gain_dbi), db_to_linear(cfg.donor_sidelobe_dbi)),
        BsId::Map(_) => (db_to_linear(cfg.map_mainlobe_dbi), db_to_linear(cfg.map_sidelobe_dbi)),
    }
}

/// Per-beam cone width of a BS's access antenna.
fn access_beam_width(state: &NetworkState, bs: BsId, served: usize, cfg: &RadioConfig) -> f64 {
    match bs {
        BsId::Donor => cfg.donor_aperture_deg / served.max(1) as f64,
        BsId::Map(i) => cfg.map_aperture_deg / state.maps[i].beam_limit.max(1) as f64,
    }
}

fn bs_is_on(state: &NetworkState, bs: BsId) -> bool {
    match bs {
        BsId::Donor => true,
        BsId::Map(i) => state.maps.get(i).is_some_and(|m| m.active),
    }
}

fn access_channel(state: &NetworkState, bs: BsId, ue: usize) -> (f64, f64) {
    state
        .channel
        .access(bs, ue)
        .map(|l| (l.gain, l.fading))
        .unwrap_or((0.0, 0.0))
}

/// Full access link budget of UE `ue` served by `bs` under the current association.
pub fn access_budget(state: &NetworkState, cfg: &RadioConfig, bs: BsId, ue: usize) -> LinkBudget {
    let rx_gain = db_to_linear(cfg.ue_gain_dbi);
    let (gain, fading) = access_channel(state, bs, ue);
    let (main, side) = lobes(bs, cfg);
    let p = tx_power_w(bs, cfg);

    let co_served = state.assoc.served_by(bs).filter(|&j| j != ue).count() as f64;
    let intra = co_served * p * side * gain * fading * rx_gain;

    let target = state.ues[ue].loc.grounded();
    let mut inter = 0.0;
    for other in state.assoc.serving_bs() {
        if other == bs || !bs_is_on(state, other) {
            continue;
        }
        let origin = bs_location(state, other);
        let beams: Vec<Location3D> = state
            .assoc
            .served_by(other)
            .map(|j| state.ues[j].loc.grounded())
            .collect();
        if beams.is_empty() {
            continue;
        }
        let width = access_beam_width(state, other, beams.len(), cfg);
        let (o_main, o_side) = lobes(other, cfg);
        let g_tx = if in_any_beam(&origin, &beams, &target, width) { o_main } else { o_side };
        let (g, z) = access_channel(state, other, ue);
        inter += tx_power_w(other, cfg) * g_tx * g * z * rx_gain;
    }

    LinkBudget {
        tx_power_w: p,
        tx_gain: main,
        rx_gain,
        channel_gain: gain,
        fading,
        interference_w: intra + inter,
        noise_w: cfg.access_noise_w(),
    }
}

/// Downlink access SINR of UE `ue` from BS `bs`.
pub fn access_sinr(state: &NetworkState, cfg: &RadioConfig, bs: BsId, ue: usize) -> f64 {
    access_budget(state, cfg, bs, ue).sinr()
}

/// Large-scale access SNR (no fading, no interference) used for association.
pub fn access_snr(state: &NetworkState, cfg: &RadioConfig, bs: BsId, ue: usize) -> f64 {
    let (gain, _) = access_channel(state, bs, ue);
    let (main, _) = lobes(bs, cfg);
    tx_power_w(bs, cfg) * main * gain * db_to_linear(cfg.ue_gain_dbi) / cfg.access_noise_w()
}

pub fn backhaul_budget(state: &NetworkState, cfg: &RadioConfig, map: usize) -> Result<LinkBudget> {
    if !state.maps.get(map).is_some_and(|m| m.active) {
        return Err(Error::InactiveMap(map));
    }
    let link = state.channel.backhaul(map).copied();
    let (gain, fading) = link.map(|l| (l.gain, l.fading)).unwrap_or((0.0, 0.0));
    let p = dbm_to_w(cfg.donor_tx_dbm);
    let (main, side) = lobes(BsId::Donor, cfg);
    let rx_gain = db_to_linear(cfg.map_mainlobe_dbi);
    let width = cfg.donor_aperture_deg / state.config.max_maps.max(1) as f64;

    let origin = state.donor.loc;
    let target = state.maps[map].loc;
    let mut interference = 0.0;
    for other in state.active_maps().filter(|m| m.id != map) {
        let g_tx = if in_any_beam(&origin, &[other.loc], &target, width) { main } else { side };
        interference += p * g_tx * gain * fading * rx_gain;
    }
    Ok(LinkBudget {
        tx_power_w: p,
        tx_gain: main,
        rx_gain,
        channel_gain: gain,
        fading,
        interference_w: interference,
        noise_w: cfg.backhaul_noise_w(),
    })
}

/// Backhaul SINR of MAP `map` from the donor.
pub fn backhaul_sinr(state: &NetworkState, cfg: &RadioConfig, map: usize) -> Result<f64> {
    Ok(backhaul_budget(state, cfg, map)?.sinr())
}
