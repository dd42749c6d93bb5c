use std::collections::VecDeque;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::placement::action::Action;
use crate::placement::env::{EnvConfig, EpisodeSpec, PlacementEnv};
use crate::placement::observation::Observation;
use crate::placement::policy::{log_softmax, sample_index, PolicyParameters};
use crate::scenario::stream;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PpoConfig {
    pub learning_rate: f64,
    pub gamma: f64,
    pub clip: f64,
    pub epochs: usize,
    pub episodes_per_batch: usize,
    pub minibatch: usize,
    pub entropy_coef: f64,
    pub value_coef: f64,
    /// Trust region on value updates around the rollout estimate; 0 disables it.
    pub value_clip: f64,
    /// Global gradient-norm clip; 0 disables it.
    pub max_grad_norm: f64,
    /// Rewards are multiplied by this before returns are formed.
    pub reward_scale: f64,
    pub horizon: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            gamma: 0.6,
            clip: 0.2,
            epochs: 4,
            episodes_per_batch: 10,
            minibatch: 64,
            entropy_coef: 0.01,
            value_coef: 0.5,
            value_clip: 0.2,
            max_grad_norm: 0.5,
            reward_scale: 0.01,
            horizon: 100,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl PpoConfig {
    /// Settings for desk-scale budgets (tens of thousands of slots): a larger
    /// step size and more passes over each batch.
    pub fn desk() -> Self {
        Self { learning_rate: 1e-3, epochs: 10, minibatch: 256, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("gamma {} outside [0, 1)", self.gamma)));
        }
        if self.learning_rate < 0.0 || self.clip <= 0.0 {
            return Err(Error::Config("learning rate must be >= 0 and clip > 0".into()));
        }
        if self.epochs == 0 || self.episodes_per_batch == 0 || self.minibatch == 0 || self.horizon == 0 {
            return Err(Error::Config("epochs, batch, minibatch and horizon must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    pub fn step(&mut self, weights: &mut [f64], grad: &[f64], cfg: &PpoConfig) {
        self.t += 1;
        let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
        let c1 = 1.0 - b1.powi(self.t as i32);
        let c2 = 1.0 - b2.powi(self.t as i32);
        for i in 0..weights.len() {
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * grad[i];
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * grad[i] * grad[i];
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            weights[i] -= cfg.learning_rate * mh / (vh.sqrt() + cfg.adam_eps);
        }
    }
}

/// A trainable policy with its optimiser state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Learner {
    pub params: PolicyParameters,
    pub adam: Adam,
}

impl Learner {
    pub fn new(params: PolicyParameters) -> Self {
        let n = params.weights.len();
        Self { params, adam: Adam::new(n) }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub obs: Observation,
    pub action: usize,
    pub log_prob: f64,
    pub value: f64,
    pub reward: f64,
    pub ret: f64,
    pub advantage: f64,
}

/// Discounted Monte-Carlo returns, truncated at the end of the slice.
pub fn discounted_returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for i in (0..rewards.len()).rev() {
        acc = rewards[i] + gamma * acc;
        out[i] = acc;
    }
    out
}

/// Clipped-surrogate loss of one transition (policy + value − entropy),
/// accumulating its gradient into `grad` when given.
pub fn sample_loss(params: &PolicyParameters, t: &Transition, cfg: &PpoConfig, grad: Option<&mut [f64]>) -> Result<f64> {
    let cache = params.forward(&t.obs)?;
    let out = &cache.output;
    let n = out.probs.len();
    let log_p = log_softmax(&out.logits);
    let logp = out.log_prob(t.action);
    let ratio = (logp - t.log_prob).exp();
    let surr1 = ratio * t.advantage;
    let surr2 = ratio.clamp(1.0 - cfg.clip, 1.0 + cfg.clip) * t.advantage;
    let entropy = out.entropy();
    let diff = out.value - t.ret;
    let (v_loss, g_value) = if cfg.value_clip > 0.0 {
        let dv = out.value - t.value;
        let clipped = t.value + dv.clamp(-cfg.value_clip, cfg.value_clip) - t.ret;
        if diff * diff >= clipped * clipped {
            (0.5 * diff * diff, diff)
        } else if dv.abs() < cfg.value_clip {
            (0.5 * clipped * clipped, clipped)
        } else {
            (0.5 * clipped * clipped, 0.0)
        }
    } else {
        (0.5 * diff * diff, diff)
    };
    let loss = -surr1.min(surr2) + cfg.value_coef * v_loss - cfg.entropy_coef * entropy;
    if let Some(grad) = grad {
        let g_logp = if surr1 <= surr2 { -surr1 } else { 0.0 };
        let g_logits: Vec<f64> = (0..n)
            .map(|k| {
                let onehot = if k == t.action { 1.0 } else { 0.0 };
                g_logp * (onehot - out.probs[k]) + cfg.entropy_coef * out.probs[k] * (log_p[k] + entropy)
            })
            .collect();
        params.backward(&cache, &g_logits, cfg.value_coef * g_value, grad);
    }
    Ok(loss)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub loss: f64,
    pub minibatches: usize,
}

/// PPO epochs over one learner's transitions.
pub fn update<R: Rng + ?Sized>(learner: &mut Learner, data: &[Transition], cfg: &PpoConfig, rng: &mut R) -> Result<UpdateStats> {
    let n_w = learner.params.weights.len();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut stats = UpdateStats::default();
    let mut grad = vec![0.0; n_w];
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        for chunk in order.chunks(cfg.minibatch) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let mut loss = 0.0;
            for &i in chunk {
                loss += sample_loss(&learner.params, &data[i], cfg, Some(&mut grad))?;
            }
            let scale = 1.0 / chunk.len() as f64;
            grad.iter_mut().for_each(|g| *g *= scale);
            loss *= scale;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Divergence { step: learner.params.step, checkpoint: PathBuf::new() });
            }
            if cfg.max_grad_norm > 0.0 {
                let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
                if norm > cfg.max_grad_norm {
                    let s = cfg.max_grad_norm / norm;
                    grad.iter_mut().for_each(|g| *g *= s);
                }
            }
            learner.adam.step(&mut learner.params.weights, &grad, cfg);
            stats.loss += loss;
            stats.minibatches += 1;
        }
    }
    if learner.params.weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::Divergence { step: learner.params.step, checkpoint: PathBuf::new() });
    }
    learner.params.version += 1;
    learner.params.step += data.len() as u64;
    if stats.minibatches > 0 {
        stats.loss /= stats.minibatches as f64;
    }
    Ok(stats)
}

/// Regime-specific bookkeeping around the shared PPO loop.
pub trait RegimeHook: Sync {
    /// Learner index that drives team member `slot` (ascending MAP id order).
    fn learner_for(&self, slot: usize) -> usize;

    /// Called after every batch with the learners that collected data in it.
    /// Returns true when the call mixed weights across learners.
    fn after_batch(&self, learners: &mut [Learner], participants: &[usize], hook_counter: &mut u64, batch_steps: u64) -> Result<bool>;

    /// Called once when the budget is exhausted.
    fn finish(&self, _learners: &mut [Learner], _participants: &[usize]) -> Result<()> {
        Ok(())
    }
}

/// Every agent shares learner 0; no aggregation.
pub struct SharedPolicy;

impl RegimeHook for SharedPolicy {
    fn learner_for(&self, _slot: usize) -> usize {
        0
    }

    fn after_batch(&self, _: &mut [Learner], _: &[usize], _: &mut u64, _: u64) -> Result<bool> {
        Ok(false)
    }
}

/// One learner per team slot; learners never exchange weights.
pub struct IndependentLearners;

impl RegimeHook for IndependentLearners {
    fn learner_for(&self, slot: usize) -> usize {
        slot
    }

    fn after_batch(&self, _: &mut [Learner], _: &[usize], _: &mut u64, _: u64) -> Result<bool> {
        Ok(false)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub episode: u64,
    pub env_slots: u64,
    pub mean_reward: f64,
    pub rolling_mean: f64,
    pub aggregated: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub ppo: PpoConfig,
    pub env: EnvConfig,
    /// Training budget in environment slots.
    pub budget_slots: u64,
    pub seed: u64,
    pub rolling_window: usize,
    /// Batches between resume checkpoints (0 disables them).
    pub checkpoint_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            ppo: PpoConfig::default(),
            env: EnvConfig::default(),
            budget_slots: 50_000,
            seed: 0,
            rolling_window: 500,
            checkpoint_every: 10,
        }
    }
}

/// Everything needed to continue an interrupted run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainerState {
    pub batch: u64,
    pub episodes: u64,
    pub env_slots: u64,
    pub agent_steps: u64,
    pub hook_counter: u64,
    pub learners: Vec<Learner>,
    pub participants: Vec<usize>,
    pub window: VecDeque<f64>,
    pub curve: Vec<CurveRow>,
}

impl TrainerState {
    pub fn new(learners: Vec<Learner>) -> Self {
        Self {
            batch: 0,
            episodes: 0,
            env_slots: 0,
            agent_steps: 0,
            hook_counter: 0,
            learners,
            participants: Vec::new(),
            window: VecDeque::new(),
            curve: Vec::new(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, serde_json::to_vec(self)?)?;
        std::fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        serde_json::from_slice(&bytes).map_err(|e| Error::Checkpoint { path: path.to_path_buf(), reason: e.to_string() })
    }
}

struct Rollout {
    per_learner: Vec<(usize, Vec<Transition>)>,
    slot_rewards: Vec<f64>,
}

fn run_episode(
    spec: &EpisodeSpec,
    cfg: &TrainConfig,
    learners: &[Learner],
    hook: &dyn RegimeHook,
) -> Result<Rollout> {
    let mut env = PlacementEnv::reset(spec, cfg.env.clone())?;
    let mut rng = stream(spec.scenario.seed, 4);
    let team = env.team();
    let mut buffers: Vec<Vec<Transition>> = vec![Vec::new(); team.len()];
    let mut rewards: Vec<Vec<f64>> = vec![Vec::new(); team.len()];
    let mut slot_rewards = Vec::with_capacity(cfg.ppo.horizon);
    for _ in 0..cfg.ppo.horizon {
        let mut actions = Vec::with_capacity(team.len());
        for (slot, &map) in team.iter().enumerate() {
            let obs = env.observe(map);
            let policy = &learners[hook.learner_for(slot)].params;
            let out = policy.evaluate(&obs)?;
            let a = sample_index(&out.probs, &mut rng);
            actions.push((map, Action::from_index(a).expect("valid action index")));
            buffers[slot].push(Transition {
                obs,
                action: a,
                log_prob: out.log_prob(a),
                value: out.value,
                reward: 0.0,
                ret: 0.0,
                advantage: 0.0,
            });
        }
        let infos = env.step(&actions)?;
        let mut sum = 0.0;
        for (slot, info) in infos.iter().enumerate() {
            if !info.reward.is_finite() {
                return Err(Error::Divergence { step: 0, checkpoint: PathBuf::new() });
            }
            rewards[slot].push(info.reward);
            buffers[slot].last_mut().expect("pushed above").reward = info.reward;
            sum += info.reward;
        }
        slot_rewards.push(sum / infos.len().max(1) as f64);
    }
    let mut per_learner = Vec::new();
    for (slot, mut buf) in buffers.into_iter().enumerate() {
        let scaled: Vec<f64> = rewards[slot].iter().map(|r| r * cfg.ppo.reward_scale).collect();
        let rets = discounted_returns(&scaled, cfg.ppo.gamma);
        for (t, r) in buf.iter_mut().zip(rets) {
            t.ret = r;
            t.advantage = r - t.value;
        }
        per_learner.push((hook.learner_for(slot), buf));
    }
    Ok(Rollout { per_learner, slot_rewards })
}

fn normalize_advantages(data: &mut [Transition]) {
    let n = data.len() as f64;
    if data.len() < 2 {
        return;
    }
    let mean = data.iter().map(|t| t.advantage).sum::<f64>() / n;
    let var = data.iter().map(|t| (t.advantage - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt().max(1e-8);
    data.iter_mut().for_each(|t| t.advantage = (t.advantage - mean) / sd);
}

/// Runs PPO until `cfg.budget_slots` environment slots have been simulated.
/// Episode specs are drawn from `sampler`; the hook decides which learner
/// drives each team slot and performs regime bookkeeping after each batch.
/// With `checkpoint` set, the trainer state is saved there periodically, on
/// divergence, and once the budget is spent (before the hook's final step).
pub fn train_ppo(
    sampler: &(dyn Fn(&mut ChaCha8Rng) -> EpisodeSpec + Sync),
    hook: &dyn RegimeHook,
    cfg: &TrainConfig,
    mut state: TrainerState,
    checkpoint: Option<&Path>,
) -> Result<TrainerState> {
    cfg.ppo.validate()?;
    let horizon = cfg.ppo.horizon as u64;
    while state.env_slots < cfg.budget_slots {
        let remaining = (cfg.budget_slots - state.env_slots).div_ceil(horizon);
        let n_eps = (cfg.ppo.episodes_per_batch as u64).min(remaining) as usize;
        let mut batch_rng = stream(cfg.seed, 1000 + state.batch);
        let specs: Vec<EpisodeSpec> = (0..n_eps)
            .map(|_| {
                let mut spec = sampler(&mut batch_rng);
                spec.scenario.seed = batch_rng.random();
                spec
            })
            .collect();
        let rollouts: Vec<Rollout> = specs
            .par_iter()
            .map(|spec| run_episode(spec, cfg, &state.learners, hook))
            .collect::<Result<_>>()?;

        let mut data: Vec<Vec<Transition>> = vec![Vec::new(); state.learners.len()];
        for r in rollouts {
            for (l, buf) in r.per_learner {
                data[l].extend(buf);
            }
            for &x in &r.slot_rewards {
                state.window.push_back(x);
                if state.window.len() > cfg.rolling_window {
                    state.window.pop_front();
                }
            }
            state.env_slots += r.slot_rewards.len() as u64;
            let mean = r.slot_rewards.iter().sum::<f64>() / r.slot_rewards.len().max(1) as f64;
            let rolling = state.window.iter().sum::<f64>() / state.window.len().max(1) as f64;
            state.curve.push(CurveRow {
                episode: state.episodes,
                env_slots: state.env_slots,
                mean_reward: mean,
                rolling_mean: rolling,
                aggregated: false,
            });
            state.episodes += 1;
        }

        let participants: Vec<usize> = (0..data.len()).filter(|&l| !data[l].is_empty()).collect();
        let batch_steps: u64 = data.iter().map(|d| d.len() as u64).sum();
        let before = state.learners.clone();
        let batch = state.batch;
        let results: Vec<Result<()>> = state
            .learners
            .par_iter_mut()
            .zip(data.par_iter_mut())
            .enumerate()
            .map(|(l, (learner, d))| {
                if d.is_empty() {
                    return Ok(());
                }
                normalize_advantages(d);
                let mut rng = stream(cfg.seed, 1_000_000 + batch * 4096 + l as u64);
                update(learner, d, &cfg.ppo, &mut rng).map(|_| ())
            })
            .collect();
        if let Some(Err(_)) = results.iter().find(|r| r.is_err()) {
            let path = checkpoint
                .map(|p| p.with_file_name("diverged.json"))
                .unwrap_or_else(|| std::env::temp_dir().join("mapnet-diverged.json"));
            let mut snapshot = state.clone();
            snapshot.learners = before;
            snapshot.save(&path)?;
            return Err(Error::Divergence { step: state.agent_steps, checkpoint: path });
        }

        state.agent_steps += batch_steps;
        for p in &participants {
            if !state.participants.contains(p) {
                state.participants.push(*p);
            }
        }
        state.participants.sort_unstable();
        if hook.after_batch(&mut state.learners, &participants, &mut state.hook_counter, batch_steps)? {
            if let Some(last) = state.curve.last_mut() {
                last.aggregated = true;
            }
        }
        state.batch += 1;
        if let Some(path) = checkpoint {
            if cfg.checkpoint_every > 0 && state.batch.is_multiple_of(cfg.checkpoint_every) {
                state.save(path)?;
            }
        }
    }
    if let Some(path) = checkpoint {
        state.save(path)?;
    }
    let participants = state.participants.clone();
    hook.finish(&mut state.learners, &participants)?;
    Ok(state)
}
