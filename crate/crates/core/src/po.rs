//! Policy optimization: rollouts, GAE, the clipped surrogate with value loss
//! and decaying entropy bonus, the group-relative variant, and greedy
//! inference.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{Env, EnvError};
use crate::featurize::{assemble_state, extract_features, state_dim, ActionRecord, FeatureError};
use crate::nets::{
    adam_step, argmax, critic_forward, entropy, log_softmax, softmax, AdamState, Mlp, NetError, HIDDEN,
};
use crate::raster::Raster;
use crate::reward::{ProviderConfig, RewardError, RewardProvider};
use crate::toolset::{Registry, ToolError, ToolId};

#[derive(Debug, Error)]
pub enum PoError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("length mismatch: {0} rewards, {1} values")]
    Length(usize, usize),
    #[error("group of {0} trajectories; at least 2 are needed")]
    GroupTooSmall(usize),
    #[error("no training images")]
    NoData,
    #[error("update {update}: {failed} of {total} episodes failed, last error: {last}")]
    TooManyFailures {
        update: usize,
        failed: usize,
        total: usize,
        last: String,
    },
    #[error("non-finite {what} at update {update}")]
    NonFinite { what: &'static str, update: usize },
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Tool(#[from] ToolError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Ppo,
    Grpo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    Constant,
    /// Decays from `lr` towards 0 over `updates` update phases.
    Linear,
}

/// How PPO advantages are scaled before the policy loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdvantageNorm {
    None,
    /// Mean 0, std 1 over the batch.
    Batch,
    /// Mean 0, divided by the batch std of the value targets. Unlike
    /// `batch`, the scale does not shrink as the policy converges.
    ReturnScale,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PoConfig {
    pub lr: f64,
    pub lr_schedule: LrSchedule,
    pub c1: f64,
    pub c2: f64,
    pub entropy_decay: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub clip_eps: f64,
    pub t_max: usize,
    pub episodes_per_update: usize,
    pub update_epochs: usize,
    pub minibatch: usize,
    pub updates: usize,
    pub variant: Variant,
    pub grpo_group: usize,
    pub seed: u64,
    pub hidden: usize,
    /// Rollout threads; results are merged in episode order.
    pub workers: usize,
    /// Greedy evaluation on the held-out split every this many updates (0 = only at the end).
    pub eval_every: usize,
    /// Episodes per update allowed to fail before training aborts.
    pub max_failed_episodes: usize,
    pub advantage_norm: AdvantageNorm,
    /// Ends an update phase early once the minibatch KL estimate to the
    /// rollout policy exceeds 1.5x this value; `null` disables the check.
    pub target_kl: Option<f64>,
}

impl Default for PoConfig {
    fn default() -> Self {
        Self {
            lr: 0.01,
            lr_schedule: LrSchedule::Linear,
            c1: 0.5,
            c2: 0.05,
            entropy_decay: 0.99,
            gamma: 0.99,
            lambda: 0.95,
            clip_eps: 0.2,
            t_max: 5,
            episodes_per_update: 64,
            update_epochs: 2,
            minibatch: 32,
            updates: 300,
            variant: Variant::Ppo,
            grpo_group: 8,
            seed: 0,
            hidden: HIDDEN,
            workers: 1,
            eval_every: 10,
            max_failed_episodes: 4,
            advantage_norm: AdvantageNorm::ReturnScale,
            target_kl: None,
        }
    }
}

impl PoConfig {
    pub fn validate(&self) -> Result<(), PoError> {
        let bad = |m: &str| Err(PoError::Config(m.to_string()));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must be in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad("lambda must be in [0, 1]");
        }
        if self.clip_eps <= 0.0 {
            return bad("clip_eps must be positive");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if self.c1 < 0.0 || self.c2 < 0.0 || self.entropy_decay < 0.0 {
            return bad("coefficients must be non-negative");
        }
        if self.episodes_per_update == 0 || self.minibatch == 0 || self.hidden == 0 {
            return bad("episodes_per_update, minibatch and hidden must be positive");
        }
        if self.target_kl.is_some_and(|k| !(k > 0.0)) {
            return bad("target_kl must be positive");
        }
        if self.variant == Variant::Grpo && self.grpo_group < 2 {
            return bad("grpo_group must be at least 2");
        }
        Ok(())
    }

    /// Entropy coefficient in effect during update `update` (0-based).
    pub fn entropy_coef(&self, update: usize) -> f64 {
        self.c2 * self.entropy_decay.powi(update as i32)
    }

    /// Learning rate for update phase `update`.
    pub fn lr_at(&self, update: usize) -> f64 {
        match self.lr_schedule {
            LrSchedule::Constant => self.lr,
            LrSchedule::Linear => self.lr * (1.0 - update as f64 / self.updates.max(1) as f64).max(0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: ToolId,
    pub log_prob_old: f64,
    pub value_old: f64,
    pub reward: f64,
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub transitions: Vec<Transition>,
    /// Always 0: episodes end on STOP or at the step cap.
    pub terminal_value: f64,
    pub episode_return: f64,
    pub initial_score: f64,
    pub final_score: f64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn actions(&self) -> Vec<ToolId> {
        self.transitions.iter().map(|t| t.action).collect()
    }

    /// |Σ rewards − (final score − initial score)|.
    pub fn telescoping_error(&self) -> f64 {
        (self.episode_return - (self.final_score - self.initial_score)).abs()
    }
}

/// Draws an index from `probs` with one uniform variate.
pub fn sample_categorical(probs: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding left u above the final partial sum
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

/// Runs one stochastic episode on `degraded`.
pub fn collect_trajectory(
    env: &mut Env,
    degraded: Raster,
    actor: &Mlp,
    critic: Option<&Mlp>,
    rng: &mut impl Rng,
) -> Result<Trajectory, PoError> {
    let mut state = env.reset(degraded)?;
    let initial_score = env.current().expect("reset").last_score;
    let mut transitions = Vec::new();
    let mut done = env.current().expect("reset").done;
    while !done {
        let logits = actor.forward(state.as_slice())?.out;
        let probs = softmax(&logits);
        let logp = log_softmax(&logits);
        let a = sample_categorical(&probs, rng);
        let value_old = match critic {
            Some(c) => critic_forward(c, state.as_slice())?,
            None => 0.0,
        };
        let out = env.step(ToolId(a))?;
        transitions.push(Transition {
            state: std::mem::take(&mut state.0),
            action: ToolId(a),
            log_prob_old: logp[a],
            value_old,
            reward: out.reward,
            done: out.done,
        });
        state = out.state;
        done = out.done;
    }
    let st = env.current().expect("reset");
    Ok(Trajectory {
        episode_return: transitions.iter().map(|t| t.reward).sum(),
        transitions,
        terminal_value: 0.0,
        initial_score,
        final_score: st.last_score,
    })
}

/// GAE by backward recursion. Returns (advantages, value targets).
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    terminal_value: f64,
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>), PoError> {
    if rewards.len() != values.len() {
        return Err(PoError::Length(rewards.len(), values.len()));
    }
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    let mut next_value = terminal_value;
    for t in (0..n).rev() {
        let delta = rewards[t] + gamma * next_value - values[t];
        next_adv = delta + gamma * lambda * next_adv;
        adv[t] = next_adv;
        next_value = values[t];
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, returns))
}

/// Standardized returns within one group of rollouts from the same input.
pub fn grpo_advantages(group_returns: &[f64]) -> Result<Vec<f64>, PoError> {
    let n = group_returns.len();
    if n < 2 {
        return Err(PoError::GroupTooSmall(n));
    }
    let mean = group_returns.iter().sum::<f64>() / n as f64;
    let var = group_returns.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n as f64;
    let std = var.sqrt();
    Ok(group_returns.iter().map(|r| (r - mean) / (std + 1e-8)).collect())
}

/// Shifts and scales to mean 0, std 1 (std floored at 1e-8).
/// Population standard deviation; 0 for an empty slice.
pub fn std_pop(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt()
}

pub fn normalize(v: &mut [f64]) {
    if v.is_empty() {
        return;
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let std = std_pop(v).max(1e-8);
    for x in v.iter_mut() {
        *x = (*x - mean) / std;
    }
}

/// One training sample for the policy/value losses.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub state: Vec<f64>,
    pub action: usize,
    pub log_prob_old: f64,
    pub advantage: f64,
    pub value_target: f64,
}

/// Clipped surrogate term `min(r·A, clip(r, 1−ε, 1+ε)·A)` and its
/// derivative with respect to `log π`. The derivative is exactly 0 when the
/// clipped branch is the active minimum.
pub fn clipped_term(log_prob: f64, log_prob_old: f64, advantage: f64, eps: f64) -> (f64, f64) {
    let r = (log_prob - log_prob_old).exp();
    let unclipped = r * advantage;
    let clipped = r.clamp(1.0 - eps, 1.0 + eps) * advantage;
    if clipped < unclipped {
        (clipped, 0.0)
    } else {
        (unclipped, r * advantage)
    }
}

/// Per-batch loss values (all as means over the batch).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    /// Clipped surrogate L_PO (maximized).
    pub surrogate: f64,
    /// Value loss L_VF (minimized).
    pub value: f64,
    /// Mean policy entropy L_EB (maximized).
    pub entropy: f64,
    /// Mean of `(r − 1) − log r`, a non-negative estimate of KL(old ‖ new).
    pub approx_kl: f64,
}

/// Loss `−(L_PO + c_ent·L_EB)` for the actor and its gradient.
pub fn actor_objective(actor: &Mlp, batch: &[Sample], eps: f64, c_ent: f64) -> Result<(f64, LossParts, Mlp), PoError> {
    let mut grads = actor.zeros_like();
    let mut parts = LossParts::default();
    let n = batch.len().max(1) as f64;
    for s in batch {
        let fwd = actor.forward(&s.state)?;
        let logp = log_softmax(&fwd.out);
        let probs: Vec<f64> = logp.iter().map(|l| l.exp()).collect();
        let (term, dterm_dlogp) = clipped_term(logp[s.action], s.log_prob_old, s.advantage, eps);
        let h = entropy(&probs);
        parts.surrogate += term / n;
        parts.entropy += h / n;
        let log_r = logp[s.action] - s.log_prob_old;
        parts.approx_kl += (log_r.exp() - 1.0 - log_r) / n;
        // d logπ(a) / d logits = onehot(a) − p;  dH / d logits_k = −p_k (log p_k + H)
        let upstream: Vec<f64> = (0..probs.len())
            .map(|k| {
                let onehot = if k == s.action { 1.0 } else { 0.0 };
                let d_surr = dterm_dlogp * (onehot - probs[k]);
                let d_ent = -probs[k] * (logp[k] + h);
                -(d_surr + c_ent * d_ent) / n
            })
            .collect();
        actor.backward(&fwd, &upstream, &mut grads)?;
    }
    let loss = -(parts.surrogate + c_ent * parts.entropy);
    Ok((loss, parts, grads))
}

/// Loss `c1 · mean (V(s) − R̂)²` for the critic and its gradient.
pub fn critic_objective(critic: &Mlp, batch: &[Sample], c1: f64) -> Result<(f64, Mlp), PoError> {
    let mut grads = critic.zeros_like();
    let n = batch.len().max(1) as f64;
    let mut lvf = 0.0;
    for s in batch {
        let fwd = critic.forward(&s.state)?;
        let err = fwd.out[0] - s.value_target;
        lvf += err * err / n;
        critic.backward(&fwd, &[c1 * 2.0 * err / n], &mut grads)?;
    }
    Ok((c1 * lvf, grads))
}

/// Gradient of the mean surrogate `L_PO` (ascent direction).
pub fn surrogate_gradient(actor: &Mlp, batch: &[Sample], eps: f64) -> Result<Mlp, PoError> {
    let (_, _, mut g) = actor_objective(actor, batch, eps, 0.0)?;
    g.scale(-1.0);
    Ok(g)
}

/// Gradient of the naive estimator `mean A·log π(a|s)` (ascent direction).
pub fn naive_pg_gradient(actor: &Mlp, batch: &[Sample]) -> Result<Mlp, PoError> {
    let mut grads = actor.zeros_like();
    let n = batch.len().max(1) as f64;
    for s in batch {
        let fwd = actor.forward(&s.state)?;
        let probs = softmax(&fwd.out);
        let upstream: Vec<f64> = (0..probs.len())
            .map(|k| {
                let onehot = if k == s.action { 1.0 } else { 0.0 };
                s.advantage * (onehot - probs[k]) / n
            })
            .collect();
        actor.backward(&fwd, &upstream, &mut grads)?;
    }
    Ok(grads)
}

/// Optimizer state for one actor/critic pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Learner {
    pub actor: Mlp,
    pub critic: Option<Mlp>,
    pub actor_opt: AdamState,
    pub critic_opt: Option<AdamState>,
}

impl Learner {
    pub fn new(cfg: &PoConfig, n_actions: usize) -> Self {
        let d_in = state_dim(n_actions);
        let actor = Mlp::init(d_in, cfg.hidden, n_actions, cfg.seed);
        let critic = (cfg.variant == Variant::Ppo).then(|| Mlp::init(d_in, cfg.hidden, 1, cfg.seed ^ 0xC417_1C00));
        Self {
            actor_opt: AdamState::new(&actor),
            critic_opt: critic.as_ref().map(AdamState::new),
            actor,
            critic,
        }
    }
}

/// Mean losses over all minibatches of one update phase.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    pub loss_po: f64,
    pub loss_vf: f64,
    pub loss_eb: f64,
    /// Minibatch steps taken before any KL early stop.
    pub steps: usize,
    pub approx_kl: f64,
}

/// `update_epochs` passes of shuffled minibatches over `batch`, cut short
/// when the policy drifts past the KL target.
pub fn ppo_update(
    learner: &mut Learner,
    batch: &[Sample],
    cfg: &PoConfig,
    update_index: usize,
    rng: &mut impl Rng,
) -> Result<UpdateStats, PoError> {
    if batch.is_empty() {
        return Err(PoError::NoData);
    }
    let c_ent = cfg.entropy_coef(update_index);
    let lr = cfg.lr_at(update_index);
    let c1 = if cfg.variant == Variant::Grpo { 0.0 } else { cfg.c1 };
    let mut order: Vec<usize> = (0..batch.len()).collect();
    let mut stats = UpdateStats::default();
    let mut count = 0usize;
    let non_finite = |what| PoError::NonFinite {
        what,
        update: update_index,
    };
    'epochs: for _ in 0..cfg.update_epochs {
        order.shuffle(rng);
        for chunk in order.chunks(cfg.minibatch) {
            let mb: Vec<Sample> = chunk.iter().map(|&i| batch[i].clone()).collect();
            let (loss, parts, g) = actor_objective(&learner.actor, &mb, cfg.clip_eps, c_ent)?;
            if !loss.is_finite() {
                return Err(non_finite("policy loss"));
            }
            stats.approx_kl = parts.approx_kl;
            if cfg.target_kl.is_some_and(|t| parts.approx_kl > 1.5 * t) {
                break 'epochs;
            }
            adam_step(&mut learner.actor, &g, &mut learner.actor_opt, lr).map_err(|_| non_finite("policy gradient"))?;
            stats.loss_po += parts.surrogate;
            stats.loss_eb += parts.entropy;
            if let (Some(critic), Some(opt)) = (learner.critic.as_mut(), learner.critic_opt.as_mut()) {
                if c1 > 0.0 {
                    let (lvf, g) = critic_objective(critic, &mb, c1)?;
                    if !lvf.is_finite() {
                        return Err(non_finite("value loss"));
                    }
                    adam_step(critic, &g, opt, lr).map_err(|_| non_finite("value gradient"))?;
                    stats.loss_vf += lvf / c1;
                }
            }
            count += 1;
        }
    }
    stats.steps = count;
    let k = count.max(1) as f64;
    stats.loss_po /= k;
    stats.loss_vf /= k;
    stats.loss_eb /= k;
    Ok(stats)
}

/// Turns PPO trajectories into samples with GAE advantages.
pub fn ppo_samples(trajs: &[Trajectory], cfg: &PoConfig) -> Result<Vec<Sample>, PoError> {
    let mut out = Vec::new();
    for tr in trajs {
        let rewards: Vec<f64> = tr.transitions.iter().map(|t| t.reward).collect();
        let values: Vec<f64> = tr.transitions.iter().map(|t| t.value_old).collect();
        let (adv, ret) = compute_gae(&rewards, &values, tr.terminal_value, cfg.gamma, cfg.lambda)?;
        for ((t, a), r) in tr.transitions.iter().zip(adv).zip(ret) {
            out.push(Sample {
                state: t.state.clone(),
                action: t.action.0,
                log_prob_old: t.log_prob_old,
                advantage: a,
                value_target: r,
            });
        }
    }
    let mut adv: Vec<f64> = out.iter().map(|s| s.advantage).collect();
    match cfg.advantage_norm {
        AdvantageNorm::None => {}
        AdvantageNorm::Batch => normalize(&mut adv),
        AdvantageNorm::ReturnScale => {
            let targets: Vec<f64> = out.iter().map(|s| s.value_target).collect();
            let scale = std_pop(&targets).max(1e-8);
            let mean = adv.iter().sum::<f64>() / adv.len().max(1) as f64;
            for a in adv.iter_mut() {
                *a = (*a - mean) / scale;
            }
        }
    }
    for (s, a) in out.iter_mut().zip(adv) {
        s.advantage = a;
    }
    Ok(out)
}

/// Turns groups of trajectories (same start image) into GRPO samples.
pub fn grpo_samples(groups: &[Vec<Trajectory>]) -> Result<Vec<Sample>, PoError> {
    let mut out = Vec::new();
    for g in groups {
        let returns: Vec<f64> = g.iter().map(|t| t.episode_return).collect();
        let adv = grpo_advantages(&returns)?;
        for (tr, a) in g.iter().zip(adv) {
            for t in &tr.transitions {
                out.push(Sample {
                    state: t.state.clone(),
                    action: t.action.0,
                    log_prob_old: t.log_prob_old,
                    advantage: a,
                    value_target: 0.0,
                });
            }
        }
    }
    Ok(out)
}

/// Greedy restoration plan.
#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub actions: Vec<ToolId>,
    /// Provider score before the first step and after every step, when a
    /// provider was supplied.
    pub scores: Vec<f64>,
    pub output: Raster,
    pub forwards: usize,
    /// The policy still wanted to act when the step cap was reached.
    pub capped: bool,
}

/// Argmax rollout: one policy forward per decision, at most `t_max` tools,
/// never reverting an applied tool. The forward at the cap only records
/// whether the policy would have continued.
pub fn infer_plan(
    actor: &Mlp,
    registry: &Registry,
    degraded: &Raster,
    t_max: usize,
    provider: Option<&dyn RewardProvider>,
) -> Result<Plan, PoError> {
    let n = registry.n_actions();
    if actor.d_out != n || actor.d_in != state_dim(n) {
        return Err(PoError::Net(NetError::Width {
            expected: state_dim(n),
            got: actor.d_in,
        }));
    }
    let mut image = degraded.clone();
    let mut record = ActionRecord::new(n);
    let mut actions = Vec::new();
    let mut scores = Vec::new();
    let mut forwards = 0;
    let mut features = extract_features(&image)?;
    if let Some(p) = provider {
        scores.push(p.score_with_features(&image, &features)?);
    }
    let capped = loop {
        let state = assemble_state(&features, &record);
        let logits = actor.forward(state.as_slice())?.out;
        forwards += 1;
        let a = argmax(&logits);
        if registry.is_stop(ToolId(a)) {
            break false;
        }
        if actions.len() >= t_max {
            break true;
        }
        image = registry.apply(ToolId(a), &image)?;
        record.set(a)?;
        actions.push(ToolId(a));
        features = extract_features(&image)?;
        if let Some(p) = provider {
            scores.push(p.score_with_features(&image, &features)?);
        }
    };
    Ok(Plan {
        actions,
        scores,
        output: image,
        forwards,
        capped,
    })
}

/// One training image and, for the supervised reward, its clean reference.
#[derive(Debug, Clone)]
pub struct TrainItem {
    pub degraded: Raster,
    pub clean: Option<Raster>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRow {
    pub update: usize,
    pub mean_return: f64,
    pub entropy: f64,
    pub loss_po: f64,
    pub loss_vf: f64,
    pub loss_eb: f64,
    pub approx_kl: f64,
    pub optimizer_steps: usize,
    pub greedy_eval: Option<f64>,
    pub failed_episodes: usize,
    pub max_telescoping_error: f64,
}

fn episode_rng(seed: u64, update: usize, episode: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((update as u64) << 32) | episode as u64);
    rng
}

pub struct Trainer {
    pub cfg: PoConfig,
    pub learner: Learner,
    registry: Arc<Registry>,
    items: Vec<TrainItem>,
    eval_items: Vec<TrainItem>,
    providers: Vec<Arc<dyn RewardProvider>>,
    eval_providers: Vec<Arc<dyn RewardProvider>>,
    update: usize,
    rng: ChaCha8Rng,
    pool: Option<rayon::ThreadPool>,
}

fn build_providers(cfg: &ProviderConfig, items: &[TrainItem]) -> Result<Vec<Arc<dyn RewardProvider>>, PoError> {
    if cfg.needs_clean() {
        items
            .iter()
            .map(|it| Ok(Arc::from(cfg.build(it.clean.as_ref())?)))
            .collect()
    } else {
        let shared: Arc<dyn RewardProvider> = Arc::from(cfg.build(None)?);
        Ok(vec![shared; items.len()])
    }
}

impl Trainer {
    pub fn new(
        cfg: PoConfig,
        registry: Arc<Registry>,
        items: Vec<TrainItem>,
        eval_items: Vec<TrainItem>,
        provider: &ProviderConfig,
    ) -> Result<Self, PoError> {
        cfg.validate()?;
        if items.is_empty() {
            return Err(PoError::NoData);
        }
        let providers = build_providers(provider, &items)?;
        let eval_providers = build_providers(provider, &eval_items)?;
        let pool = if cfg.workers > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(cfg.workers)
                    .build()
                    .map_err(|e| PoError::Config(e.to_string()))?,
            )
        } else {
            None
        };
        Ok(Self {
            learner: Learner::new(&cfg, registry.n_actions()),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5A3D_0000),
            cfg,
            registry,
            items,
            eval_items,
            providers,
            eval_providers,
            update: 0,
            pool,
        })
    }

    pub fn registry(&self) -> &Arc<Registry> {
        &self.registry
    }

    /// Number of completed updates.
    pub fn updates_done(&self) -> usize {
        self.update
    }

    fn run_episode(&self, item: usize, stream: usize) -> Result<Trajectory, PoError> {
        let mut env = Env::new(
            Arc::clone(&self.registry),
            Arc::clone(&self.providers[item]),
            self.cfg.t_max,
        );
        let mut rng = episode_rng(self.cfg.seed, self.update, stream);
        collect_trajectory(
            &mut env,
            self.items[item].degraded.clone(),
            &self.learner.actor,
            self.learner.critic.as_ref(),
            &mut rng,
        )
    }

    /// (episode index, image index) jobs for the current update.
    fn jobs(&self) -> Vec<(usize, usize)> {
        let n = self.items.len();
        let e = self.cfg.episodes_per_update;
        match self.cfg.variant {
            Variant::Ppo => (0..e).map(|k| (k, (self.update * e + k) % n)).collect(),
            Variant::Grpo => {
                let g = self.cfg.grpo_group;
                let groups = (e / g).max(1);
                (0..groups * g)
                    .map(|k| (k, (self.update * groups + k / g) % n))
                    .collect()
            }
        }
    }

    fn rollouts(&self) -> Vec<(usize, Result<Trajectory, PoError>)> {
        let jobs = self.jobs();
        let run = |&(k, item): &(usize, usize)| (k, self.run_episode(item, k));
        match &self.pool {
            Some(pool) => pool.install(|| jobs.par_iter().map(run).collect()),
            None => jobs.iter().map(run).collect(),
        }
    }

    /// Collects rollouts and applies one update phase.
    pub fn step_update(&mut self) -> Result<TrainLogRow, PoError> {
        let results = self.rollouts();
        let total = results.len();
        let mut failed = 0;
        let mut last_err = String::new();
        let mut trajs: Vec<Option<Trajectory>> = Vec::with_capacity(total);
        for (k, r) in results {
            match r {
                Ok(t) => trajs.push(Some(t)),
                Err(e) => {
                    log::warn!("update {} episode {k} discarded: {e}", self.update);
                    failed += 1;
                    last_err = e.to_string();
                    trajs.push(None);
                }
            }
        }
        if failed > self.cfg.max_failed_episodes || failed == total {
            return Err(PoError::TooManyFailures {
                update: self.update,
                failed,
                total,
                last: last_err,
            });
        }
        let ok: Vec<&Trajectory> = trajs.iter().flatten().collect();
        let mean_return = ok.iter().map(|t| t.episode_return).sum::<f64>() / ok.len() as f64;
        let max_tele = ok.iter().map(|t| t.telescoping_error()).fold(0.0, f64::max);
        let batch = match self.cfg.variant {
            Variant::Ppo => {
                let owned: Vec<Trajectory> = ok.iter().map(|t| (*t).clone()).collect();
                ppo_samples(&owned, &self.cfg)?
            }
            Variant::Grpo => {
                // a group that lost a member is dropped whole
                let groups: Vec<Vec<Trajectory>> = trajs
                    .chunks(self.cfg.grpo_group)
                    .filter(|g| g.iter().all(|t| t.is_some()))
                    .map(|g| g.iter().flatten().cloned().collect())
                    .collect();
                grpo_samples(&groups)?
            }
        };
        let stats = if batch.is_empty() {
            UpdateStats::default()
        } else {
            ppo_update(&mut self.learner, &batch, &self.cfg, self.update, &mut self.rng)?
        };
        self.update += 1;
        let eval_now = self.update == self.cfg.updates
            || (self.cfg.eval_every > 0 && self.update % self.cfg.eval_every == 0);
        let greedy_eval = if eval_now && !self.eval_items.is_empty() {
            Some(self.greedy_eval()?)
        } else {
            None
        };
        Ok(TrainLogRow {
            update: self.update,
            mean_return,
            entropy: stats.loss_eb,
            loss_po: stats.loss_po,
            loss_vf: stats.loss_vf,
            loss_eb: stats.loss_eb,
            approx_kl: stats.approx_kl,
            optimizer_steps: stats.steps,
            greedy_eval,
            failed_episodes: failed,
            max_telescoping_error: max_tele,
        })
    }

    /// Mean greedy return (final minus initial score) on the held-out split.
    pub fn greedy_eval(&self) -> Result<f64, PoError> {
        let returns = self
            .eval_items
            .iter()
            .zip(&self.eval_providers)
            .map(|(it, p)| {
                let plan = infer_plan(&self.learner.actor, &self.registry, &it.degraded, self.cfg.t_max, Some(p.as_ref()))?;
                Ok(plan.scores.last().unwrap() - plan.scores[0])
            })
            .collect::<Result<Vec<f64>, PoError>>()?;
        Ok(returns.iter().sum::<f64>() / returns.len().max(1) as f64)
    }

    /// Runs the remaining updates, calling `on_row` after each.
    pub fn run(&mut self, mut on_row: impl FnMut(&Trainer, &TrainLogRow)) -> Result<Vec<TrainLogRow>, PoError> {
        let mut log = Vec::new();
        while self.update < self.cfg.updates {
            let row = self.step_update()?;
            on_row(self, &row);
            log.push(row);
        }
        Ok(log)
    }
}
