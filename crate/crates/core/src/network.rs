//! Per-slot network configuration: user association, backhaul sharing,
//! effective rates, sum-rate and constraint checking.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::radio::{self, RadioConfig};
use crate::scenario::NetworkState;

/// A base station: the IAB donor or one MAP slot. Orders the donor first.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BsId {
    Donor,
    Map(usize),
}

impl fmt::Display for BsId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BsId::Donor => write!(f, "donor"),
            BsId::Map(i) => write!(f, "map{i}"),
        }
    }
}

/// Binary association variables x_{i,j}, stored as the set of links equal to one.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssociationState {
    links: BTreeSet<(BsId, usize)>,
}

impl AssociationState {
    pub fn insert(&mut self, bs: BsId, ue: usize) {
        self.links.insert((bs, ue));
    }

    pub fn links(&self) -> impl Iterator<Item = (BsId, usize)> + '_ {
        self.links.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }

    pub fn served_by(&self, bs: BsId) -> impl Iterator<Item = usize> + '_ {
        self.links.range((bs, 0)..=(bs, usize::MAX)).map(|(_, j)| *j)
    }

    pub fn served_count(&self, bs: BsId) -> usize {
        self.served_by(bs).count()
    }

    /// BSs serving at least one UE, ascending.
    pub fn serving_bs(&self) -> Vec<BsId> {
        let mut out: Vec<BsId> = Vec::new();
        for (bs, _) in &self.links {
            if out.last() != Some(bs) {
                out.push(*bs);
            }
        }
        out
    }

    pub fn bs_of(&self, ue: usize) -> Option<BsId> {
        self.links.iter().find(|(_, j)| *j == ue).map(|(bs, _)| *bs)
    }

    pub fn drop_bs(&mut self, bs: BsId) {
        self.links.retain(|(b, _)| *b != bs);
    }
}

/// Backhaul shares beta_{i,j} keyed by (MAP id, UE id).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BackhaulAllocation {
    pub beta: BTreeMap<(usize, usize), f64>,
}

impl BackhaulAllocation {
    pub fn get(&self, map: usize, ue: usize) -> Option<f64> {
        self.beta.get(&(map, ue)).copied()
    }

    pub fn total(&self, map: usize) -> f64 {
        self.beta.range((map, 0)..=(map, usize::MAX)).map(|(_, b)| b).sum()
    }

    pub fn drop_map(&mut self, map: usize) {
        self.beta.retain(|(i, _), _| *i != map);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub bs: BsId,
    pub ue: usize,
    pub demand: f64,
    pub access_capacity: f64,
    pub gamma: f64,
    pub beta: Option<f64>,
    pub rate: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub rows: Vec<RateRow>,
    /// C^(b) per MAP slot (zero when undeployed).
    pub backhaul_capacity: Vec<f64>,
    pub per_bs: BTreeMap<BsId, f64>,
    pub sum_rate: f64,
}

/// Greedy max-SNR association. UEs with the strongest best-SNR choose first;
/// each takes its highest-SNR BS that still has a free beam (ties go to the
/// lowest BS id). The donor never runs out of beams.
pub fn associate_max_snr(state: &NetworkState, cfg: &RadioConfig) -> AssociationState {
    let mut candidates: Vec<BsId> = vec![BsId::Donor];
    candidates.extend(state.active_maps().map(|m| BsId::Map(m.id)));

    let mut table: Vec<(usize, Vec<f64>, f64)> = state
        .ues
        .iter()
        .filter(|u| !u.blocked)
        .map(|u| {
            let snrs: Vec<f64> = candidates
                .iter()
                .map(|&bs| radio::access_snr(state, cfg, bs, u.id))
                .collect();
            let best = snrs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (u.id, snrs, best)
        })
        .collect();
    table.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)));

    let capacity = |bs: BsId| match bs {
        BsId::Donor => usize::MAX,
        BsId::Map(i) => state.maps[i].beam_limit,
    };
    let mut load: BTreeMap<BsId, usize> = BTreeMap::new();
    let mut assoc = AssociationState::default();
    for (ue, snrs, _) in table {
        let mut choice: Option<(BsId, f64)> = None;
        for (&bs, &snr) in candidates.iter().zip(&snrs) {
            if *load.get(&bs).unwrap_or(&0) >= capacity(bs) || !(snr > 0.0) {
                continue;
            }
            if choice.is_none_or(|(_, s)| snr > s) {
                choice = Some((bs, snr));
            }
        }
        if let Some((bs, _)) = choice {
            *load.entry(bs).or_default() += 1;
            assoc.insert(bs, ue);
        }
    }
    assoc
}

/// Backhaul shares for one MAP: demands are met in full when they fit,
/// otherwise capacity is rationed in proportion to demand.
pub fn proportional_shares(gammas: &[f64], capacity: f64) -> Vec<f64> {
    let total: f64 = gammas.iter().sum();
    if !(capacity > 0.0) {
        return Vec::new();
    }
    if total <= 0.0 {
        return vec![0.0; gammas.len()];
    }
    let denom = if total <= capacity { capacity } else { total };
    gammas.iter().map(|g| (g / denom).clamp(0.0, 1.0)).collect()
}

/// Allocates beta for every MAP given the association and per-link Gamma.
pub fn allocate_backhaul(
    assoc: &AssociationState,
    gamma: &BTreeMap<(BsId, usize), f64>,
    backhaul_capacity: &[f64],
) -> BackhaulAllocation {
    let mut alloc = BackhaulAllocation::default();
    for bs in assoc.serving_bs() {
        let BsId::Map(i) = bs else { continue };
        let ues: Vec<usize> = assoc.served_by(bs).collect();
        let gammas: Vec<f64> = ues.iter().map(|j| gamma.get(&(bs, *j)).copied().unwrap_or(0.0)).collect();
        let cap = backhaul_capacity.get(i).copied().unwrap_or(0.0);
        for (j, b) in ues.iter().zip(proportional_shares(&gammas, cap)) {
            alloc.beta.insert((i, *j), b);
        }
    }
    alloc
}

/// Effective rate: Gamma for donor links, min(Gamma, beta z C^(b)) for MAP links.
pub fn effective_rate(gamma: f64, beta: f64, deployed: bool, c_backhaul: f64, is_donor: bool) -> f64 {
    if is_donor {
        return gamma;
    }
    let z = if deployed { 1.0 } else { 0.0 };
    gamma.min(beta * z * c_backhaul)
}

/// Total network sum-rate of a report.
pub fn sum_rate(report: &RateReport) -> f64 {
    report.rows.iter().map(|r| r.rate).sum()
}

/// Runs association, capacity evaluation, backhaul allocation and rate
/// computation for the current slot. The channel must already be refreshed.
pub fn configure_slot<'a>(state: &'a mut NetworkState, cfg: &RadioConfig) -> &'a RateReport {
    state.assoc = associate_max_snr(state, cfg);
    state.rates = evaluate_rates(state, cfg);
    state.backhaul = BackhaulAllocation {
        beta: state
            .rates
            .rows
            .iter()
            .filter_map(|r| match (r.bs, r.beta) {
                (BsId::Map(i), Some(b)) => Some(((i, r.ue), b)),
                _ => None,
            })
            .collect(),
    };
    &state.rates
}

/// Rates under the association already stored in `state`.
pub fn evaluate_rates(state: &NetworkState, cfg: &RadioConfig) -> RateReport {
    let backhaul_capacity: Vec<f64> = state
        .maps
        .iter()
        .map(|m| match radio::backhaul_sinr(state, cfg, m.id) {
            Ok(sinr) => radio::backhaul_capacity(sinr, m.active, cfg),
            Err(_) => 0.0,
        })
        .collect();

    let mut gamma = BTreeMap::new();
    let mut rows = Vec::with_capacity(state.assoc.len());
    for (bs, ue) in state.assoc.links() {
        let sinr = radio::access_sinr(state, cfg, bs, ue);
        let c_access = radio::access_capacity(sinr, true, cfg);
        let demand = state.ues[ue].demand_bps;
        let g = demand.min(c_access);
        gamma.insert((bs, ue), g);
        rows.push(RateRow { bs, ue, demand, access_capacity: c_access, gamma: g, beta: None, rate: 0.0 });
    }
    let alloc = allocate_backhaul(&state.assoc, &gamma, &backhaul_capacity);

    let mut per_bs: BTreeMap<BsId, f64> = BTreeMap::new();
    for row in rows.iter_mut() {
        row.rate = match row.bs {
            BsId::Donor => effective_rate(row.gamma, 0.0, true, 0.0, true),
            BsId::Map(i) => {
                row.beta = alloc.get(i, row.ue);
                let deployed = state.maps[i].active;
                effective_rate(row.gamma, row.beta.unwrap_or(0.0), deployed, backhaul_capacity[i], false)
            }
        };
        *per_bs.entry(row.bs).or_default() += row.rate;
    }
    let mut report = RateReport { rows, backhaul_capacity, per_bs, sum_rate: 0.0 };
    report.sum_rate = sum_rate(&report);
    report
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Constraint {
    C1,
    C2,
    C3,
    C4,
    C5,
    C6,
    C7,
    C8,
}

impl Constraint {
    pub const ALL: [Constraint; 8] = [
        Constraint::C1,
        Constraint::C2,
        Constraint::C3,
        Constraint::C4,
        Constraint::C5,
        Constraint::C6,
        Constraint::C7,
        Constraint::C8,
    ];
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub constraint: Constraint,
    /// Offending BS, MAP or UE index as a readable tag.
    pub subject: String,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub violations: Vec<Violation>,
}

impl ConstraintReport {
    pub fn passed(&self, c: Constraint) -> bool {
        !self.violations.iter().any(|v| v.constraint == c)
    }

    pub fn all_pass(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn failing(&self, c: Constraint) -> Vec<&Violation> {
        self.violations.iter().filter(|v| v.constraint == c).collect()
    }

    fn push(&mut self, constraint: Constraint, subject: impl Into<String>, detail: String) {
        self.violations.push(Violation { constraint, subject: subject.into(), detail });
    }
}

/// Checks C1..C8 on the slot state.
pub fn check_constraints(state: &NetworkState) -> ConstraintReport {
    const TOL: f64 = 1e-9;
    let mut report = ConstraintReport::default();

    for (bs, ue) in state.assoc.links() {
        let bs_ok = match bs {
            BsId::Donor => true,
            BsId::Map(i) => state.maps.get(i).is_some_and(|m| m.active),
        };
        if !bs_ok || ue >= state.ues.len() {
            report.push(Constraint::C1, format!("{bs}/ue{ue}"), "link to an undeployed BS or unknown UE".into());
        }
    }

    for map in &state.maps {
        let n = state.assoc.served_count(BsId::Map(map.id));
        if n > map.beam_limit {
            report.push(Constraint::C2, format!("map{}", map.id), format!("serves {n} > K_i = {}", map.beam_limit));
        }
    }

    let mut per_ue: BTreeMap<usize, usize> = BTreeMap::new();
    for (_, ue) in state.assoc.links() {
        *per_ue.entry(ue).or_default() += 1;
    }
    for (ue, n) in per_ue.into_iter().filter(|(_, n)| *n > 1) {
        report.push(Constraint::C3, format!("ue{ue}"), format!("associated to {n} BSs"));
    }

    let deployed = state.deployed();
    if deployed > state.config.max_maps {
        report.push(Constraint::C4, "network", format!("M_s = {deployed} > M = {}", state.config.max_maps));
    }

    for (&(i, j), &b) in &state.backhaul.beta {
        if !(0.0..=1.0).contains(&b) {
            report.push(Constraint::C5, format!("map{i}/ue{j}"), format!("beta = {b}"));
        }
    }
    for map in &state.maps {
        let total = state.backhaul.total(map.id);
        if total > 1.0 + TOL {
            report.push(Constraint::C6, format!("map{}", map.id), format!("sum beta = {total}"));
        }
    }

    let region = state.region();
    for map in state.active_maps() {
        if !region.contains(&map.loc) {
            report.push(Constraint::C7, format!("map{}", map.id), format!("location {:?} outside region", map.loc));
        }
        if let Some(prev) = map.prev_loc {
            let step = prev.distance(&map.loc);
            if step > state.config.map_step_m + TOL {
                report.push(
                    Constraint::C8,
                    format!("map{}", map.id),
                    format!("moved {step:.3} m > {}", state.config.map_step_m),
                );
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radio::{refresh_channel, ChannelMode};
    use crate::scenario::{build_scenario, Location2D, Location3D, ScenarioConfig};

    fn quiet() -> RadioConfig {
        RadioConfig { mode: ChannelMode::Deterministic, ..Default::default() }
    }

    #[test]
    fn proportional_examples() {
        let b = proportional_shares(&[50e6, 50e6], 200e6);
        assert_eq!(b, vec![0.25, 0.25]);
        let b = proportional_shares(&[100e6, 300e6], 200e6);
        assert_eq!(b, vec![0.25, 0.75]);
        let rates: Vec<f64> = [100e6, 300e6]
            .iter()
            .zip(&b)
            .map(|(g, beta)| effective_rate(*g, *beta, true, 200e6, false))
            .collect();
        assert_eq!(rates, vec![50e6, 150e6]);
        assert!(proportional_shares(&[], 200e6).is_empty());
        assert!(proportional_shares(&[1.0], 0.0).is_empty());
    }

    #[test]
    fn effective_rate_examples() {
        assert_eq!(effective_rate(250e6, 0.5, true, 375e6, false), 187.5e6);
        assert_eq!(effective_rate(250e6, 0.5, true, 0.0, true), 250e6);
        assert_eq!(effective_rate(250e6, 0.5, false, 375e6, false), 0.0);
    }

    #[test]
    fn empty_report_sums_to_zero() {
        assert_eq!(sum_rate(&RateReport::default()), 0.0);
    }

    fn state_with(ues: &[(f64, f64)], maps: &[Location3D]) -> NetworkState {
        let cfg = ScenarioConfig { n_ue: ues.len(), max_maps: maps.len().max(1), ..Default::default() };
        let mut s = build_scenario(&cfg).unwrap();
        for (u, (x, y)) in s.ues.iter_mut().zip(ues) {
            u.loc = Location2D::new(*x, *y);
            u.blocked = false;
        }
        for (i, loc) in maps.iter().enumerate() {
            s.activate_map(i, *loc).unwrap();
        }
        s
    }

    #[test]
    fn single_ue_joins_strongest_bs() {
        let mut s = state_with(&[(20.0, 20.0)], &[Location3D::new(150.0, 150.0, 50.0), Location3D::new(20.0, 20.0, 50.0)]);
        let cfg = quiet();
        refresh_channel(&mut s, &cfg);
        let a = associate_max_snr(&s, &cfg);
        assert_eq!(a.bs_of(0), Some(BsId::Map(1)));
    }

    #[test]
    fn full_bs_pushes_weaker_ue_to_next_best() {
        let mut s = state_with(&[(20.0, 20.0), (25.0, 20.0)], &[Location3D::new(20.0, 20.0, 30.0)]);
        s.maps[0].beam_limit = 1;
        let cfg = quiet();
        refresh_channel(&mut s, &cfg);
        let a = associate_max_snr(&s, &cfg);
        assert_eq!(a.bs_of(0), Some(BsId::Map(0)));
        assert_eq!(a.bs_of(1), Some(BsId::Donor));
    }

    #[test]
    fn blocked_ues_are_not_associated() {
        let mut s = state_with(&[(20.0, 20.0), (60.0, 20.0)], &[Location3D::new(20.0, 20.0, 30.0)]);
        s.ues.iter_mut().for_each(|u| u.blocked = true);
        let cfg = quiet();
        refresh_channel(&mut s, &cfg);
        assert!(associate_max_snr(&s, &cfg).is_empty());
    }

    #[test]
    fn configured_slot_satisfies_constraints_and_bottleneck() {
        let ues: Vec<(f64, f64)> = (0..30).map(|k| (10.0 + 6.0 * k as f64, 15.0 + 5.0 * k as f64)).collect();
        let mut s = state_with(&ues, &[Location3D::new(40.0, 40.0, 40.0), Location3D::new(150.0, 150.0, 40.0)]);
        let cfg = RadioConfig::default();
        refresh_channel(&mut s, &cfg);
        configure_slot(&mut s, &cfg);
        assert!(check_constraints(&s).all_pass());
        let report = &s.rates;
        for map in s.active_maps() {
            let carried: f64 = report.rows.iter().filter(|r| r.bs == BsId::Map(map.id)).map(|r| r.rate).sum();
            assert!(carried <= report.backhaul_capacity[map.id] * (1.0 + 1e-12));
        }
        let recomputed: f64 = report.rows.iter().map(|r| r.rate).sum();
        assert!((recomputed - report.sum_rate).abs() <= 1e-9 * recomputed.max(1.0));
        for r in &report.rows {
            assert!(r.rate <= r.gamma && r.gamma <= r.demand.min(r.access_capacity));
        }
    }

    #[test]
    fn injected_violations_are_reported() {
        let mut s = state_with(&[(20.0, 20.0), (30.0, 20.0)], &[Location3D::new(20.0, 20.0, 30.0)]);
        let cfg = quiet();
        refresh_channel(&mut s, &cfg);
        configure_slot(&mut s, &cfg);
        assert!(check_constraints(&s).all_pass());

        let mut bad = s.clone();
        bad.backhaul.beta.insert((0, 0), 0.6);
        bad.backhaul.beta.insert((0, 1), 0.6);
        let r = check_constraints(&bad);
        assert!(!r.passed(Constraint::C6));
        assert_eq!(r.failing(Constraint::C6)[0].subject, "map0");

        let mut bad = s.clone();
        let here = bad.maps[0].loc;
        bad.move_map(0, Location3D::new(here.x + 2.0 * bad.config.map_step_m, here.y, here.z));
        assert!(!check_constraints(&bad).passed(Constraint::C8));
    }
}
