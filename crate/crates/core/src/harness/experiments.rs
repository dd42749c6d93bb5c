//! Training runs per regime, evaluation episodes and the paired comparison
//! of fixed and dynamic fleet management.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::federation::{
    complexity, registry_from_learners, sample_training_scenario, FederatedHook, PolicyRegistry, Regime,
    TrainingSampler,
};
use crate::placement::env::{EnvConfig, EpisodeSpec};
use crate::placement::policy::PolicyParameters;
use crate::placement::ppo::{
    train_ppo, CurveRow, IndependentLearners, Learner, RegimeHook, TrainConfig, TrainerState,
};
use crate::scenario::{stream, ScenarioConfig};

use super::episode::run_episode;
use super::record::{EpisodeRecord, RecordHeader, RECORD_FORMAT};

const INIT_STREAM: u64 = 7;

pub struct TrainingOutcome {
    pub registry: PolicyRegistry,
    /// Training curve of every trainer run, labelled.
    pub curves: Vec<(String, Vec<CurveRow>)>,
}

struct Job {
    label: String,
    team: Option<usize>,
    seed: u64,
    hook: Box<dyn RegimeHook>,
    learners: Vec<Learner>,
}

fn training_sampler(cfg: &ExperimentConfig, regime: Regime, team: Option<usize>) -> TrainingSampler {
    let t = &cfg.training;
    TrainingSampler {
        base: ScenarioConfig {
            n_ue: t.n_ue,
            ue_speed: 0.0,
            blockage_prob: 0.0,
            max_maps: cfg.scenario.max_maps.max(t.max_team),
            ..cfg.scenario.clone()
        },
        min_team: t.min_team,
        max_team: t.max_team,
        ..TrainingSampler::for_regime(regime, team)
    }
}

fn jobs(cfg: &ExperimentConfig, regime: Regime) -> Result<Vec<Job>> {
    let arch = cfg.architecture();
    let seed = cfg.training.seed;
    let init = PolicyParameters::init(arch, &mut stream(seed, INIT_STREAM))?;
    let copies = |n: usize| (0..n).map(|_| Learner::new(init.clone())).collect::<Vec<_>>();
    Ok(match regime {
        Regime::Federated => {
            let hook = FederatedHook { agents: cfg.training.max_team, schedule: cfg.federation };
            let learners = hook.learners(&init);
            vec![Job { label: "federated".into(), team: None, seed, hook: Box::new(hook), learners }]
        }
        Regime::Curriculum => {
            let n = cfg.scenario.max_maps.max(cfg.training.max_team);
            vec![Job { label: "curriculum".into(), team: None, seed, hook: Box::new(IndependentLearners), learners: copies(n) }]
        }
        Regime::Codebook => cfg
            .training
            .codebook_teams
            .iter()
            .map(|&k| Job {
                label: format!("codebook_k{k}"),
                team: Some(k),
                seed: seed.wrapping_add(k as u64),
                hook: Box::new(IndependentLearners),
                learners: copies(k),
            })
            .collect(),
    })
}

/// Fleet size a regime's registry is sized for.
pub fn registry_maps(cfg: &ExperimentConfig, regime: Regime) -> usize {
    match regime {
        Regime::Codebook => cfg.training.codebook_teams.iter().copied().max().unwrap_or(1),
        _ => cfg.scenario.max_maps,
    }
}

/// Trains every policy of `regime`. With `out_dir`, trainer state is
/// checkpointed under `out_dir/train/` (and resumed from there on rerun),
/// curves are written next to it and the registry is saved to
/// `out_dir/policies/<regime>/`.
pub fn run_training(cfg: &ExperimentConfig, regime: Regime, out_dir: Option<&Path>) -> Result<TrainingOutcome> {
    cfg.validate()?;
    let mut registry = PolicyRegistry::new(regime, registry_maps(cfg, regime));
    let mut curves = Vec::new();
    for job in jobs(cfg, regime)? {
        let sampler = training_sampler(cfg, regime, job.team);
        let draw = move |rng: &mut ChaCha8Rng| -> EpisodeSpec { sample_training_scenario(&sampler, rng) };
        let train_cfg = TrainConfig {
            ppo: cfg.ppo.clone(),
            env: EnvConfig { shape: cfg.observation, reward: cfg.reward.clone(), radio: cfg.radio.clone() },
            budget_slots: cfg.training.budget_slots,
            seed: job.seed,
            rolling_window: cfg.training.rolling_window,
            checkpoint_every: cfg.training.checkpoint_every,
        };
        let state_path: Option<PathBuf> = out_dir.map(|d| d.join("train").join(format!("{}.state.json", job.label)));
        let state = match &state_path {
            Some(p) if p.exists() => {
                let s = TrainerState::load(p)?;
                if s.learners.len() != job.learners.len() {
                    return Err(Error::Checkpoint {
                        path: p.clone(),
                        reason: format!("{} learners saved, {} expected", s.learners.len(), job.learners.len()),
                    });
                }
                log::info!("{}: resuming at {} env slots", job.label, s.env_slots);
                s
            }
            _ => TrainerState::new(job.learners),
        };
        let state = train_ppo(&draw, job.hook.as_ref(), &train_cfg, state, state_path.as_deref())?;
        if let Some(p) = &state_path {
            write_curve(&p.with_file_name(format!("{}.curve.ndjson", job.label)), &state.curve)?;
        }
        let part = registry_from_learners(regime, registry.max_maps, &state.learners, job.team);
        registry.entries.extend(part.entries);
        curves.push((job.label, state.curve));
    }
    if let Some(dir) = out_dir {
        registry.save(&dir.join("policies").join(regime.tag()))?;
    }
    Ok(TrainingOutcome { registry, curves })
}

pub fn write_curve(path: &Path, curve: &[CurveRow]) -> Result<()> {
    let mut out = Vec::new();
    for row in curve {
        serde_json::to_writer(&mut out, row)?;
        out.push(b'\n');
    }
    std::fs::File::create(path)?.write_all(&out)?;
    Ok(())
}

pub fn read_curve(path: &Path) -> Result<Vec<CurveRow>> {
    let text = std::fs::read_to_string(path)?;
    text.lines().filter(|l| !l.trim().is_empty()).map(|l| Ok(serde_json::from_str(l)?)).collect()
}

/// Seeds of the configured evaluation episodes.
pub fn eval_seeds(cfg: &ExperimentConfig) -> Vec<u64> {
    (0..cfg.eval.episodes).map(|e| cfg.eval.seed.wrapping_add(e)).collect()
}

/// Runs the configured evaluation episodes in parallel; rows come back in
/// (episode, t) order regardless of completion order.
pub fn run_eval(cfg: &ExperimentConfig, registry: &PolicyRegistry, arm: &str, dynamic: bool) -> Result<EpisodeRecord> {
    cfg.validate()?;
    let seeds = eval_seeds(cfg);
    let per_episode: Vec<_> = seeds
        .par_iter()
        .enumerate()
        .map(|(e, &seed)| run_episode(cfg, registry, e as u64, seed, dynamic, None))
        .collect::<Result<_>>()?;
    Ok(EpisodeRecord {
        header: RecordHeader {
            format: RECORD_FORMAT,
            arm: arm.to_string(),
            regime: registry.regime,
            dynamic,
            registry_maps: registry.max_maps,
            complexity: complexity(registry.regime, registry.max_maps),
            config_hash: cfg.hash()?,
            seeds,
            config: cfg.clone(),
        },
        rows: per_episode.into_iter().flatten().collect(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BucketStats {
    pub m_s: usize,
    pub slots: usize,
    pub mean_sum_rate: f64,
    pub mean_eta: f64,
}

/// Per-slot averages of one arm, overall and per fleet size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub arm: String,
    pub regime: Regime,
    pub dynamic: bool,
    pub complexity: usize,
    pub episodes: usize,
    pub slots: usize,
    pub mean_sum_rate: f64,
    pub mean_eta: f64,
    pub mean_connected: f64,
    pub mean_m_s: f64,
    pub buckets: Vec<BucketStats>,
}

pub fn summarize(record: &EpisodeRecord) -> Result<ArmSummary> {
    let rows = &record.rows;
    if rows.is_empty() {
        return Err(Error::EmptyRecords);
    }
    let n = rows.len() as f64;
    let mut buckets: BTreeMap<usize, (usize, f64, f64)> = BTreeMap::new();
    for r in rows {
        let b = buckets.entry(r.m_s).or_default();
        b.0 += 1;
        b.1 += r.sum_rate_bps;
        b.2 += r.eta;
    }
    Ok(ArmSummary {
        arm: record.header.arm.clone(),
        regime: record.header.regime,
        dynamic: record.header.dynamic,
        complexity: record.header.complexity,
        episodes: record.episode_means().len(),
        slots: rows.len(),
        mean_sum_rate: rows.iter().map(|r| r.sum_rate_bps).sum::<f64>() / n,
        mean_eta: rows.iter().map(|r| r.eta).sum::<f64>() / n,
        mean_connected: rows.iter().map(|r| r.connected as f64).sum::<f64>() / n,
        mean_m_s: rows.iter().map(|r| r.m_s as f64).sum::<f64>() / n,
        buckets: buckets
            .into_iter()
            .map(|(m_s, (slots, r, eta))| BucketStats {
                m_s,
                slots,
                mean_sum_rate: r / slots as f64,
                mean_eta: eta / slots as f64,
            })
            .collect(),
    })
}

/// Recomputes every row's efficiency from its sum-rate and the regime's
/// policy count.
pub fn verify_eta(record: &EpisodeRecord) -> Result<()> {
    let h = &record.header;
    let o_c = complexity(h.regime, h.registry_maps);
    if o_c != h.complexity {
        return Err(Error::Config(format!("header complexity {} but {} regime with M={} has {o_c}", h.complexity, h.regime, h.registry_maps)));
    }
    for r in &record.rows {
        let expected = r.sum_rate_bps / o_c as f64;
        if (r.eta - expected).abs() > 1e-9 * expected.abs().max(1.0) {
            return Err(Error::Config(format!("episode {} slot {}: eta {} != R/O_c {expected}", r.episode, r.t, r.eta)));
        }
    }
    Ok(())
}

pub fn format_summaries(summaries: &[ArmSummary]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{:<20} {:>4} {:>6} {:>14} {:>14} {:>10} {:>6}", "arm", "O_c", "slots", "E[R] (bps)", "E[eta]", "connected", "M_s");
    for a in summaries {
        let _ = writeln!(
            s,
            "{:<20} {:>4} {:>6} {:>14.4e} {:>14.4e} {:>10.2} {:>6.2}",
            a.arm, a.complexity, a.slots, a.mean_sum_rate, a.mean_eta, a.mean_connected, a.mean_m_s
        );
    }
    let _ = writeln!(s);
    let _ = writeln!(s, "{:<20} {:>4} {:>6} {:>14} {:>14}", "arm", "M_s", "slots", "E[R] (bps)", "E[eta]");
    for a in summaries {
        for b in &a.buckets {
            let _ = writeln!(s, "{:<20} {:>4} {:>6} {:>14.4e} {:>14.4e}", a.arm, b.m_s, b.slots, b.mean_sum_rate, b.mean_eta);
        }
    }
    s
}

/// Per-seed means of the three comparison arms (a, b, c).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedComparison {
    pub episode: u64,
    pub seed: u64,
    pub sum_rate: [f64; 3],
    pub eta: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub arms: Vec<ArmSummary>,
    pub per_seed: Vec<SeedComparison>,
    /// Relative change of E[R], codebook + dynamic vs fixed codebook.
    pub delta_b_vs_a: f64,
    /// Relative change of E[R], federated + dynamic vs fixed codebook.
    pub delta_c_vs_a: f64,
    /// Seeds on which arm c has strictly higher mean R than arm a.
    pub c_wins: usize,
    /// Seeds on which arm c has higher mean η than arm a.
    pub c_eta_wins: usize,
}

impl ComparisonReport {
    pub fn table(&self) -> String {
        let mut s = format_summaries(&self.arms);
        let _ = writeln!(s);
        let _ = writeln!(s, "{:>6} {:>12} {:>14} {:>14} {:>14}", "ep", "seed", "R(a)", "R(b)", "R(c)");
        for p in &self.per_seed {
            let _ = writeln!(s, "{:>6} {:>12} {:>14.4e} {:>14.4e} {:>14.4e}", p.episode, p.seed, p.sum_rate[0], p.sum_rate[1], p.sum_rate[2]);
        }
        let n = self.per_seed.len();
        let _ = writeln!(s);
        let _ = writeln!(s, "delta E[R] b vs a: {:+.1}%", 100.0 * self.delta_b_vs_a);
        let _ = writeln!(s, "delta E[R] c vs a: {:+.1}%", 100.0 * self.delta_c_vs_a);
        let _ = writeln!(s, "c beats a on R: {}/{n} seeds; on eta: {}/{n} seeds", self.c_wins, self.c_eta_wins);
        s
    }
}

/// Builds the comparison from the records of arms a, b and c, which must
/// share seeds.
pub fn compare_arms(records: &[EpisodeRecord; 3]) -> Result<ComparisonReport> {
    let seeds = &records[0].header.seeds;
    if records.iter().any(|r| &r.header.seeds != seeds) {
        return Err(Error::Config("comparison arms must use identical seeds".into()));
    }
    let arms = records.iter().map(summarize).collect::<Result<Vec<_>>>()?;
    let means: Vec<Vec<(u64, f64, f64)>> = records.iter().map(EpisodeRecord::episode_means).collect();
    let per_seed: Vec<SeedComparison> = means[0]
        .iter()
        .enumerate()
        .map(|(i, &(episode, _, _))| SeedComparison {
            episode,
            seed: seeds[episode as usize],
            sum_rate: [means[0][i].1, means[1][i].1, means[2][i].1],
            eta: [means[0][i].2, means[1][i].2, means[2][i].2],
        })
        .collect();
    let rel = |x: f64, base: f64| if base != 0.0 { (x - base) / base } else { 0.0 };
    Ok(ComparisonReport {
        delta_b_vs_a: rel(arms[1].mean_sum_rate, arms[0].mean_sum_rate),
        delta_c_vs_a: rel(arms[2].mean_sum_rate, arms[0].mean_sum_rate),
        c_wins: per_seed.iter().filter(|p| p.sum_rate[2] > p.sum_rate[0]).count(),
        c_eta_wins: per_seed.iter().filter(|p| p.eta[2] > p.eta[0]).count(),
        arms,
        per_seed,
    })
}

/// Paired runs on identical seeds: (a) codebook with a fixed fleet,
/// (b) codebook with the trade-off controller, (c) federated policy with the
/// trade-off controller.
pub fn run_dynamic_comparison(
    cfg: &ExperimentConfig,
    codebook: &PolicyRegistry,
    federated: &PolicyRegistry,
) -> Result<(ComparisonReport, [EpisodeRecord; 3])> {
    if codebook.regime != Regime::Codebook || federated.regime != Regime::Federated {
        return Err(Error::Config(format!(
            "comparison needs a codebook and a federated registry, got {} and {}",
            codebook.regime, federated.regime
        )));
    }
    let records = [
        run_eval(cfg, codebook, "codebook", false)?,
        run_eval(cfg, codebook, "codebook+dynamic", true)?,
        run_eval(cfg, federated, "federated+dynamic", true)?,
    ];
    Ok((compare_arms(&records)?, records))
}
