//! One evaluation episode: the trade-off controller manages the fleet, the
//! deployed policies move the MAPs, and the network is configured every slot.

use std::collections::BTreeMap;

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::federation::{complexity, operational_efficiency, select_policy, PolicyKey, PolicyRegistry};
use crate::network::{check_constraints, configure_slot};
use crate::placement::env::{EnvConfig, EpisodeSpec, PlacementEnv};
use crate::placement::observation::build_observation;
use crate::placement::policy::ActMode;
use crate::radio::refresh_channel;
use crate::scenario::{stream, ScenarioConfig};
use crate::tradeoff::{initial_map_count, TradeoffState};

use super::record::SlotRow;

const POLICY_STREAM: u64 = 5;
const SPAWN_STREAM: u64 = 6;

/// Verbose per-slot log lines, filled when tracing.
pub type EpisodeTrace = Vec<String>;

/// MAPs deployed at t = 0.
pub fn initial_maps(cfg: &ExperimentConfig, scenario: &ScenarioConfig) -> usize {
    if cfg.eval.initial_maps > 0 {
        cfg.eval.initial_maps.min(scenario.max_maps)
    } else {
        initial_map_count(scenario.n_ue, scenario.map_beams as f64, scenario.max_maps)
    }
}

/// Runs one episode of `cfg.scenario` with the given seed. Returns one row per slot.
pub fn run_episode(
    cfg: &ExperimentConfig,
    registry: &PolicyRegistry,
    episode: u64,
    seed: u64,
    dynamic: bool,
    mut trace: Option<&mut EpisodeTrace>,
) -> Result<Vec<SlotRow>> {
    let scenario = ScenarioConfig { seed, ..cfg.scenario.clone() };
    let team = initial_maps(cfg, &scenario);
    let env_cfg = EnvConfig { shape: cfg.observation, reward: cfg.reward.clone(), radio: cfg.radio.clone() };
    let mut env = PlacementEnv::reset(&EpisodeSpec { scenario, team }, env_cfg)?;
    let mut tradeoff = TradeoffState::new(cfg.tradeoff.clone());
    let mut policy_rng = stream(seed, POLICY_STREAM);
    let mut spawn_rng = stream(seed, SPAWN_STREAM);
    let mut assignment: BTreeMap<Vec<usize>, Vec<PolicyKey>> = BTreeMap::new();
    let o_c = complexity(registry.regime, registry.max_maps);
    let radio = cfg.radio.clone();
    let mut rows = Vec::with_capacity(cfg.scenario.slot_count);

    for t in 0..cfg.scenario.slot_count as u64 {
        let mut decisions = Vec::new();
        if dynamic && tradeoff.is_decision_slot(t) {
            decisions = tradeoff.decide(&env.state);
            tradeoff.apply(&mut env.state, &decisions, &mut spawn_rng);
        } else if t > 0 && cfg.tradeoff.reset_period > 0 && t % cfg.tradeoff.reset_period == 0 {
            tradeoff.reset();
        }

        let team = env.team();
        if !assignment.contains_key(&team) {
            let m_s = team.len();
            let keys = team
                .iter()
                .enumerate()
                .map(|(rank, &map)| select_policy(registry, m_s, rank, map, &mut policy_rng).map(|(k, _)| k))
                .collect::<Result<Vec<_>>>()?;
            assignment.insert(team.clone(), keys);
        }
        let keys = &assignment[&team];
        let mut actions = Vec::with_capacity(team.len());
        for (&map, key) in team.iter().zip(keys) {
            let params = registry.get(key)?;
            let obs = build_observation(&env.state, map, params.arch.shape());
            let (action, _, _) = params.act(&obs, ActMode::Greedy, &mut policy_rng)?;
            actions.push((map, action));
        }

        env.move_maps(&actions)?;
        refresh_channel(&mut env.state, &radio);
        let sum_rate = configure_slot(&mut env.state, &radio).sum_rate;
        let infos = env.score(&team)?;
        let events = tradeoff.monitor_all(&env.state);
        if cfg.eval.check_constraints {
            let report = check_constraints(&env.state);
            if let Some(v) = report.violations.first() {
                return Err(Error::Constraint(format!(
                    "episode {episode} slot {t}: {:?} {} {}",
                    v.constraint, v.subject, v.detail
                )));
            }
        }

        let mean_reward = infos.iter().map(|i| i.reward).sum::<f64>() / infos.len().max(1) as f64;
        let row = SlotRow {
            episode,
            t,
            m_s: team.len(),
            connected: env.state.assoc.len(),
            sum_rate_bps: sum_rate,
            eta: operational_efficiency(sum_rate, registry.regime, registry.max_maps),
            mean_reward,
            theta: events.iter().map(|e| (e.map, e.theta)).collect(),
            decisions,
        };
        debug_assert_eq!(row.eta, sum_rate / o_c as f64);

        if let Some(log) = trace.as_deref_mut() {
            log.push(format!(
                "t={t} M_s={} connected={} R={:.4e} eta={:.4e} reward={:.3}",
                row.m_s, row.connected, row.sum_rate_bps, row.eta, row.mean_reward
            ));
            for d in &row.decisions {
                log.push(format!("  decision {d:?}"));
            }
            for ((map, action), key) in actions.iter().zip(keys) {
                let loc = env.state.maps[*map].loc;
                log.push(format!(
                    "  MAP {map} {} {:?} -> ({:.1}, {:.1}, {:.1})",
                    key.label(),
                    action,
                    loc.x,
                    loc.y,
                    loc.z
                ));
            }
            for e in &events {
                log.push(format!(
                    "  monitor MAP {} inertia={:.1} served={}/{} delta={} theta={}",
                    e.map, e.inertia, e.served, e.beam_limit, e.delta, e.theta
                ));
            }
            let report = check_constraints(&env.state);
            let status = if report.all_pass() { "all constraints hold".to_string() } else { format!("{} violations", report.violations.len()) };
            log.push(format!("  {status}"));
        }
        rows.push(row);
        env.advance();
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::federation::Regime;
    use crate::placement::policy::{Architecture, PolicyParameters};

    fn small() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.scenario.n_ue = 20;
        cfg.scenario.slot_count = 25;
        cfg
    }

    fn federated(cfg: &ExperimentConfig) -> PolicyRegistry {
        let p = PolicyParameters::init(Architecture::for_shape(cfg.observation), &mut stream(3, 0)).unwrap();
        PolicyRegistry::full(Regime::Federated, cfg.scenario.max_maps, &p)
    }

    #[test]
    fn initial_fleet_follows_beam_budget() {
        let cfg = ExperimentConfig::default();
        assert_eq!(initial_maps(&cfg, &cfg.scenario), 6);
        let rows = run_episode(&small(), &federated(&small()), 0, 4, false, None).unwrap();
        assert!(rows.iter().all(|r| r.m_s == 2));
    }

    #[test]
    fn rows_are_ordered_and_eta_matches() {
        let cfg = small();
        let rows = run_episode(&cfg, &federated(&cfg), 3, 11, true, None).unwrap();
        assert_eq!(rows.len(), 25);
        for (t, r) in rows.iter().enumerate() {
            assert_eq!(r.t, t as u64);
            assert_eq!(r.episode, 3);
            assert_eq!(r.eta, r.sum_rate_bps);
        }
    }

    #[test]
    fn decisions_only_at_decision_slots() {
        let cfg = small();
        let rows = run_episode(&cfg, &federated(&cfg), 0, 5, true, None).unwrap();
        for r in &rows {
            if r.t == 0 || r.t % cfg.tradeoff.decision_period != 0 {
                assert!(r.decisions.is_empty());
            }
        }
        let fixed = run_episode(&cfg, &federated(&cfg), 0, 5, false, None).unwrap();
        assert!(fixed.iter().all(|r| r.decisions.is_empty()));
    }

    #[test]
    fn trace_has_a_line_per_slot() {
        let cfg = small();
        let mut log = EpisodeTrace::new();
        run_episode(&cfg, &federated(&cfg), 0, 5, true, Some(&mut log)).unwrap();
        assert_eq!(log.iter().filter(|l| l.starts_with("t=")).count(), 25);
    }
}
