use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::placement::action::Action;
use crate::placement::observation::{Observation, ObservationShape, MAP_FEATURES, SELF_FEATURES, UE_FEATURES};

/// Layer sizes of the attention-pooling actor-critic.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub ue_slots: usize,
    pub ue_features: usize,
    pub map_slots: usize,
    pub map_features: usize,
    pub self_features: usize,
    pub embed: usize,
    pub hidden1: usize,
    pub hidden2: usize,
    pub actions: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Self::for_shape(ObservationShape::default())
    }
}

impl Architecture {
    pub fn for_shape(shape: ObservationShape) -> Self {
        Self {
            ue_slots: shape.ue_slots,
            ue_features: UE_FEATURES,
            map_slots: shape.map_slots,
            map_features: MAP_FEATURES,
            self_features: SELF_FEATURES,
            embed: 32,
            hidden1: 64,
            hidden2: 64,
            actions: Action::COUNT,
        }
    }

    pub fn shape(&self) -> ObservationShape {
        ObservationShape { ue_slots: self.ue_slots, map_slots: self.map_slots }
    }

    pub fn layout(&self) -> Layout {
        Layout::new(self)
    }

    pub fn param_count(&self) -> usize {
        self.layout().total
    }

    pub fn validate(&self) -> Result<()> {
        if self.ue_features != UE_FEATURES
            || self.map_features != MAP_FEATURES
            || self.self_features != SELF_FEATURES
            || self.actions != Action::COUNT
        {
            return Err(Error::ShapeMismatch(format!("unsupported feature sizes in {self:?}")));
        }
        if self.embed == 0 || self.hidden1 == 0 || self.hidden2 == 0 {
            return Err(Error::ShapeMismatch("layer sizes must be positive".into()));
        }
        Ok(())
    }
}

/// A dense block inside the flat weight vector: `rows × cols` matrix followed
/// by `rows` biases.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dense {
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Dense {
    fn len(&self) -> usize {
        self.rows * (self.cols + 1)
    }

    fn w(&self, r: usize, c: usize) -> usize {
        self.offset + r * self.cols + c
    }

    fn b(&self, r: usize) -> usize {
        self.offset + self.rows * self.cols + r
    }

    fn apply(&self, p: &[f64], x: &[f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate().take(self.rows) {
            let row = &p[self.w(r, 0)..self.w(r, 0) + self.cols];
            *o = p[self.b(r)] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
    }

    /// Accumulates weight gradients and returns dL/dx.
    fn backward(&self, p: &[f64], x: &[f64], g_out: &[f64], grad: &mut [f64], g_in: Option<&mut [f64]>) {
        for (r, &g) in g_out.iter().enumerate().take(self.rows) {
            if g == 0.0 {
                continue;
            }
            let base = self.w(r, 0);
            for (c, xc) in x.iter().enumerate().take(self.cols) {
                grad[base + c] += g * xc;
            }
            grad[self.b(r)] += g;
        }
        if let Some(g_in) = g_in {
            for (c, gi) in g_in.iter_mut().enumerate().take(self.cols) {
                *gi = (0..self.rows).map(|r| p[self.w(r, c)] * g_out[r]).sum();
            }
        }
    }
}

/// Offsets of each block in the flat weight vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Layout {
    pub ue_embed: Dense,
    /// Maps (pooled MAP block, own position) to the UE attention query.
    pub ue_query: Dense,
    pub map_embed: Dense,
    pub map_query: usize,
    pub trunk1: Dense,
    pub trunk2: Dense,
    pub policy: Dense,
    pub value: Dense,
    pub total: usize,
}

impl Layout {
    fn new(a: &Architecture) -> Self {
        let mut off = 0;
        let mut dense = |rows: usize, cols: usize| {
            let d = Dense { offset: off, rows, cols };
            off += d.len();
            d
        };
        let ue_embed = dense(a.embed, a.ue_features);
        let map_embed = dense(a.embed, a.map_features);
        let trunk1 = dense(a.hidden1, 2 * a.embed + a.self_features);
        let trunk2 = dense(a.hidden2, a.hidden1);
        let policy = dense(a.actions, a.hidden2);
        let value = dense(1, a.hidden2);
        let ue_query = dense(a.embed, a.embed + a.self_features);
        let map_query = off;
        let total = off + a.embed;
        Self { ue_embed, ue_query, map_embed, map_query, trunk1, trunk2, policy, value, total }
    }
}

/// Flat, versioned weights of one placement policy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyParameters {
    pub arch: Architecture,
    pub weights: Vec<f64>,
    pub version: u64,
    pub step: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActMode {
    Sample,
    Greedy,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolicyOutput {
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
    pub value: f64,
}

impl PolicyOutput {
    pub fn log_prob(&self, action: usize) -> f64 {
        log_softmax(&self.logits)[action]
    }

    pub fn entropy(&self) -> f64 {
        let lp = log_softmax(&self.logits);
        -self.probs.iter().zip(&lp).map(|(p, l)| if *p > 0.0 { p * l } else { 0.0 }).sum::<f64>()
    }

    pub fn greedy(&self) -> usize {
        let mut best = 0;
        for (i, p) in self.probs.iter().enumerate() {
            if *p > self.probs[best] {
                best = i;
            }
        }
        best
    }
}

struct BlockCache {
    query: Vec<f64>,
    rows: Vec<usize>,
    h: Vec<Vec<f64>>,
    attn: Vec<f64>,
    pooled: Vec<f64>,
}

/// Intermediate activations kept for the backward pass.
pub struct ForwardCache {
    ue: BlockCache,
    map: BlockCache,
    input: Vec<f64>,
    y1: Vec<f64>,
    y2: Vec<f64>,
    ue_x: Vec<Vec<f64>>,
    map_x: Vec<Vec<f64>>,
    context: Vec<f64>,
    pub output: PolicyOutput,
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - lse).collect()
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    log_softmax(logits).into_iter().map(f64::exp).collect()
}

impl PolicyParameters {
    /// Random initialisation with a zero policy head, so the untrained policy
    /// is exactly uniform over actions.
    pub fn init<R: Rng + ?Sized>(arch: Architecture, rng: &mut R) -> Result<Self> {
        arch.validate()?;
        let layout = arch.layout();
        let mut weights = vec![0.0; layout.total];
        for d in [layout.ue_embed, layout.map_embed, layout.trunk1, layout.trunk2] {
            let bound = (6.0 / (d.rows + d.cols) as f64).sqrt();
            for r in 0..d.rows {
                for c in 0..d.cols {
                    weights[d.w(r, c)] = rng.random_range(-bound..bound);
                }
            }
        }
        Ok(Self { arch, weights, version: 0, step: 0 })
    }

    /// Random weights everywhere, including heads and queries.
    pub fn random<R: Rng + ?Sized>(arch: Architecture, scale: f64, rng: &mut R) -> Result<Self> {
        arch.validate()?;
        let weights = (0..arch.param_count()).map(|_| rng.random_range(-scale..scale)).collect();
        Ok(Self { arch, weights, version: 0, step: 0 })
    }

    pub fn check_shape(&self, obs: &Observation) -> Result<()> {
        let shape = obs.shape();
        if shape != self.arch.shape() || obs.ue_mask.len() != shape.ue_slots || obs.map_mask.len() != shape.map_slots {
            return Err(Error::ShapeMismatch(format!(
                "observation {:?} does not match policy {:?}",
                shape,
                self.arch.shape()
            )));
        }
        if self.weights.len() != self.arch.param_count() {
            return Err(Error::LengthMismatch { expected: self.arch.param_count(), got: self.weights.len() });
        }
        Ok(())
    }

    fn pool(&self, dense: Dense, query: Vec<f64>, rows: &[Vec<f64>], mask: &[bool]) -> BlockCache {
        let e = self.arch.embed;
        let p = &self.weights;
        let scale = 1.0 / (e as f64).sqrt();
        let valid: Vec<usize> = (0..rows.len()).filter(|&j| mask[j]).collect();
        let mut h = Vec::with_capacity(valid.len());
        let mut scores = Vec::with_capacity(valid.len());
        for &j in &valid {
            let mut u = vec![0.0; e];
            dense.apply(p, &rows[j], &mut u);
            u.iter_mut().for_each(|v| *v = v.tanh());
            scores.push(scale * u.iter().zip(&query).map(|(a, b)| a * b).sum::<f64>());
            h.push(u);
        }
        let attn = if valid.is_empty() { Vec::new() } else { softmax(&scores) };
        let mut pooled = vec![0.0; e];
        for (a, hj) in attn.iter().zip(&h) {
            for (o, v) in pooled.iter_mut().zip(hj) {
                *o += a * v;
            }
        }
        BlockCache { query, rows: valid, h, attn, pooled }
    }

    pub fn forward(&self, obs: &Observation) -> Result<ForwardCache> {
        self.check_shape(obs)?;
        let l = self.arch.layout();
        let ue_x: Vec<Vec<f64>> = obs.ue.iter().map(|r| r.to_vec()).collect();
        let map_x: Vec<Vec<f64>> = obs.maps.iter().map(|r| r.to_vec()).collect();
        let e = self.arch.embed;
        let map_q = self.weights[l.map_query..l.map_query + e].to_vec();
        let map = self.pool(l.map_embed, map_q, &map_x, &obs.map_mask);
        let mut context = map.pooled.clone();
        context.extend_from_slice(&obs.own);
        let mut ue_q = vec![0.0; e];
        l.ue_query.apply(&self.weights, &context, &mut ue_q);
        let ue = self.pool(l.ue_embed, ue_q, &ue_x, &obs.ue_mask);

        let mut input = Vec::with_capacity(l.trunk1.cols);
        input.extend_from_slice(&ue.pooled);
        input.extend_from_slice(&map.pooled);
        input.extend_from_slice(&obs.own);

        let p = &self.weights;
        let mut y1 = vec![0.0; self.arch.hidden1];
        l.trunk1.apply(p, &input, &mut y1);
        y1.iter_mut().for_each(|v| *v = v.tanh());
        let mut y2 = vec![0.0; self.arch.hidden2];
        l.trunk2.apply(p, &y1, &mut y2);
        y2.iter_mut().for_each(|v| *v = v.tanh());
        let mut logits = vec![0.0; self.arch.actions];
        l.policy.apply(p, &y2, &mut logits);
        let mut value = [0.0];
        l.value.apply(p, &y2, &mut value);
        let probs = softmax(&logits);
        Ok(ForwardCache {
            ue,
            map,
            input,
            y1,
            y2,
            ue_x,
            map_x,
            context,
            output: PolicyOutput { logits, probs, value: value[0] },
        })
    }

    pub fn evaluate(&self, obs: &Observation) -> Result<PolicyOutput> {
        Ok(self.forward(obs)?.output)
    }

    /// Accumulates embedding gradients and returns dL/dquery.
    fn pool_backward(&self, dense: Dense, cache: &BlockCache, x: &[Vec<f64>], g_pooled: &[f64], grad: &mut [f64]) -> Vec<f64> {
        let e = self.arch.embed;
        let mut g_query = vec![0.0; e];
        if cache.rows.is_empty() {
            return g_query;
        }
        let scale = 1.0 / (e as f64).sqrt();
        let q = &cache.query;
        let g_attn: Vec<f64> = cache.h.iter().map(|h| h.iter().zip(g_pooled).map(|(a, b)| a * b).sum()).collect();
        let mean: f64 = cache.attn.iter().zip(&g_attn).map(|(a, g)| a * g).sum();
        for (k, &j) in cache.rows.iter().enumerate() {
            let a = cache.attn[k];
            let g_score = a * (g_attn[k] - mean);
            let h = &cache.h[k];
            for d in 0..e {
                g_query[d] += g_score * h[d] * scale;
            }
            let g_u: Vec<f64> = (0..e)
                .map(|d| (a * g_pooled[d] + g_score * q[d] * scale) * (1.0 - h[d] * h[d]))
                .collect();
            dense.backward(&self.weights, &x[j], &g_u, grad, None);
        }
        g_query
    }

    /// Accumulates dL/dw into `grad` given dL/dlogits and dL/dvalue.
    pub fn backward(&self, cache: &ForwardCache, g_logits: &[f64], g_value: f64, grad: &mut [f64]) {
        let l = self.arch.layout();
        let p = &self.weights;
        let mut g_y2 = vec![0.0; self.arch.hidden2];
        l.policy.backward(p, &cache.y2, g_logits, grad, Some(&mut g_y2));
        let mut g_y2v = vec![0.0; self.arch.hidden2];
        l.value.backward(p, &cache.y2, &[g_value], grad, Some(&mut g_y2v));
        let g_pre2: Vec<f64> = (0..self.arch.hidden2)
            .map(|i| (g_y2[i] + g_y2v[i]) * (1.0 - cache.y2[i] * cache.y2[i]))
            .collect();
        let mut g_y1 = vec![0.0; self.arch.hidden1];
        l.trunk2.backward(p, &cache.y1, &g_pre2, grad, Some(&mut g_y1));
        let g_pre1: Vec<f64> = (0..self.arch.hidden1).map(|i| g_y1[i] * (1.0 - cache.y1[i] * cache.y1[i])).collect();
        let mut g_in = vec![0.0; l.trunk1.cols];
        l.trunk1.backward(p, &cache.input, &g_pre1, grad, Some(&mut g_in));
        let e = self.arch.embed;
        let g_ue_query = self.pool_backward(l.ue_embed, &cache.ue, &cache.ue_x, &g_in[..e], grad);
        let mut g_context = vec![0.0; l.ue_query.cols];
        l.ue_query.backward(p, &cache.context, &g_ue_query, grad, Some(&mut g_context));
        let g_map: Vec<f64> = (0..e).map(|d| g_in[e + d] + g_context[d]).collect();
        let g_map_query = self.pool_backward(l.map_embed, &cache.map, &cache.map_x, &g_map, grad);
        for (d, g) in g_map_query.into_iter().enumerate() {
            grad[l.map_query + d] += g;
        }
    }

    pub fn act<R: Rng + ?Sized>(&self, obs: &Observation, mode: ActMode, rng: &mut R) -> Result<(Action, f64, f64)> {
        let out = self.evaluate(obs)?;
        let idx = match mode {
            ActMode::Greedy => out.greedy(),
            ActMode::Sample => sample_index(&out.probs, rng),
        };
        let action = Action::from_index(idx).expect("action head has one logit per action");
        Ok((action, out.log_prob(idx), out.value))
    }
}

pub fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let mut u: f64 = rng.random();
    for (i, p) in probs.iter().enumerate() {
        if u < *p {
            return i;
        }
        u -= p;
    }
    probs.len() - 1
}
