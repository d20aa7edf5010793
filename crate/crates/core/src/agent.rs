//! Two-phase training loop: advisor-constrained exploration first, then
//! autonomous refinement with boosted replay of advisor experience.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::advisor::{self, AdvisorBackend, AdvisorError, DecodeParams, MemoryPool};
use crate::env::{extract_plan, Env, EnvConfig, EnvError, StepOutcome};
use crate::instance::{Instance, NodeId};
use crate::milp::{self, ClockMode, RoutePlan};
use crate::qnet::{
    self, masked_argmax, Adam, Arch, BatchSample, FeatureEncoder, LossKind, NetParams, QNetError,
};
use crate::replay::{ReplayBuffer, ReplayConfig, ReplayError, Transition};

/// Per-module ablation switches; all on reproduces the full method.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AblationSwitches {
    pub double: bool,
    pub dueling: bool,
    pub per: bool,
    pub llm_memory: bool,
    pub llm_per_boost: bool,
    pub reward_shaping: bool,
}

impl Default for AblationSwitches {
    fn default() -> Self {
        AblationSwitches {
            double: true,
            dueling: true,
            per: true,
            llm_memory: true,
            llm_per_boost: true,
            reward_shaping: true,
        }
    }
}

impl AblationSwitches {
    /// The vanilla baseline path.
    pub fn all_off() -> Self {
        AblationSwitches {
            double: false,
            dueling: false,
            per: false,
            llm_memory: false,
            llm_per_boost: false,
            reward_shaping: false,
        }
    }
}

/// When to leave the advisor-guided phase: after a fixed fraction of episodes
/// or once the moving-average return stagnates, whichever happens first.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseConfig {
    pub fraction: f64,
    pub stagnation_window: usize,
    pub stagnation_tol: f64,
    pub use_stagnation: bool,
}

impl Default for PhaseConfig {
    fn default() -> Self {
        PhaseConfig {
            fraction: 0.2,
            stagnation_window: 50,
            stagnation_tol: 0.01,
            use_stagnation: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Discount factor.
    pub gamma: f64,
    pub eps_start: f64,
    pub eps_min: f64,
    /// Multiplicative epsilon decay per episode.
    pub eps_decay: f64,
    pub lr: f64,
    /// Advisor replay weight in the priority formula.
    pub eps_llm: f64,
    pub episodes: usize,
    /// Step cap per episode; `None` means 4x the customer count.
    pub horizon: Option<usize>,
    pub batch_size: usize,
    pub tau: f64,
    /// Learn every this many environment steps once the buffer is warm.
    pub update_period: usize,
    pub warmup: usize,
    pub replay_capacity: usize,
    pub per_alpha: f64,
    pub per_beta0: f64,
    pub per_eps: f64,
    pub boost_on_refresh: bool,
    pub gamma_d: f64,
    pub gamma_f: f64,
    pub gamma_e: f64,
    pub mask_broken_edges: bool,
    pub trunk: Vec<usize>,
    pub head_hidden: usize,
    pub loss: LossKind,
    pub advisor_max_rounds: usize,
    /// Steps a candidate set keeps steering before a fresh query.
    pub candidate_cache_steps: usize,
    pub pool_capacity: usize,
    /// Snapshot the network every this many episodes; 0 disables.
    pub checkpoint_every: usize,
    pub phase: PhaseConfig,
    pub switches: AblationSwitches,
    pub decode: DecodeParams,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            gamma: 0.99,
            eps_start: 0.8,
            eps_min: 0.01,
            eps_decay: 0.995,
            lr: 0.0002,
            eps_llm: 1.5,
            episodes: 1000,
            horizon: None,
            batch_size: 64,
            tau: 0.005,
            update_period: 4,
            warmup: 1000,
            replay_capacity: 100_000,
            per_alpha: 0.6,
            per_beta0: 0.4,
            per_eps: 1e-3,
            boost_on_refresh: true,
            gamma_d: 4.5,
            gamma_f: 65.0,
            gamma_e: 500.0,
            mask_broken_edges: true,
            trunk: vec![128, 128],
            head_hidden: 64,
            loss: LossKind::default(),
            advisor_max_rounds: 3,
            candidate_cache_steps: 5,
            pool_capacity: 10,
            checkpoint_every: 0,
            phase: PhaseConfig::default(),
            switches: AblationSwitches::default(),
            decode: DecodeParams::default(),
        }
    }
}

impl TrainConfig {
    pub fn env_config(&self) -> EnvConfig {
        EnvConfig {
            gamma_d: self.gamma_d,
            gamma_f: self.gamma_f,
            gamma_e: self.gamma_e,
            reward_shaping: self.switches.reward_shaping,
            mask_broken_edges: self.mask_broken_edges,
        }
    }

    pub fn cost_model(&self) -> milp::CostModel {
        milp::CostModel { gamma_d: self.gamma_d, gamma_f: self.gamma_f }
    }

    pub fn epsilon_at(&self, episode: usize) -> f64 {
        (self.eps_start * self.eps_decay.powi(episode as i32)).max(self.eps_min)
    }

    pub fn beta_at(&self, episode: usize) -> f64 {
        if self.episodes <= 1 {
            return 1.0;
        }
        let t = episode as f64 / (self.episodes - 1) as f64;
        self.per_beta0 + (1.0 - self.per_beta0) * t.min(1.0)
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        let checks = [
            ((0.0..=1.0).contains(&self.gamma), "gamma must be in [0, 1]"),
            (self.eps_start >= self.eps_min, "eps_start must be >= eps_min"),
            ((0.0..=1.0).contains(&self.eps_decay), "eps_decay must be in [0, 1]"),
            (self.lr > 0.0, "lr must be positive"),
            (self.episodes > 0, "episodes must be positive"),
            (self.batch_size > 0, "batch_size must be positive"),
            ((0.0..=1.0).contains(&self.tau) && self.tau > 0.0, "tau must be in (0, 1]"),
            (self.update_period > 0, "update_period must be positive"),
            (self.replay_capacity > 0, "replay_capacity must be positive"),
            (self.advisor_max_rounds >= 1, "advisor_max_rounds must be >= 1"),
            ((0.0..=1.0).contains(&self.phase.fraction), "phase fraction must be in [0, 1]"),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(AgentError::Config(msg.into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    QNet(#[from] QNetError),
    #[error(transparent)]
    Replay(#[from] ReplayError),
    #[error("checkpoint corrupt: {0}")]
    CheckpointCorrupt(String),
}

/// One line per episode in the training report stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeReport {
    pub episode: usize,
    pub phase: u8,
    pub ret: f64,
    pub generalized_cost: f64,
    pub feasible: bool,
    pub steps: usize,
    pub llm_calls: usize,
    pub llm_accept_rate: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestPlan {
    pub plan: RoutePlan,
    pub generalized_cost: f64,
    pub episode: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub episode: usize,
    pub data: String,
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub reports: Vec<EpisodeReport>,
    pub best: Option<BestPlan>,
    pub final_checkpoint: String,
    pub checkpoints: Vec<Checkpoint>,
    /// Backend outages that degraded a step to pure DQN.
    pub degraded_steps: usize,
    /// Prompt/reply pairs in call order, for the session log.
    pub session_log: Vec<(String, String)>,
}

/// Training internals surfaced for assertions and audits.
#[derive(Debug, Clone, Copy)]
pub enum TrainEvent {
    Transition {
        episode: usize,
        phase: u8,
        llm_flag: bool,
        advisor_intersection_nonempty: bool,
    },
    Advise { episode: usize, phase: u8, backend_calls: usize, accepted: usize },
    PhaseSwitch { episode: usize },
}

/// Bootstrap targets for a batch: double-DQN decouples the argmax (online)
/// from the evaluation (target); the ablated form maxes the target directly.
pub fn td_target(
    batch: &[Transition],
    online: &NetParams,
    target: &NetParams,
    gamma: f64,
    double: bool,
) -> Result<Vec<f64>, QNetError> {
    let mut out = Vec::with_capacity(batch.len());
    for tr in batch {
        if tr.done || !tr.next_mask.iter().any(|&m| m) {
            out.push(tr.reward);
            continue;
        }
        let q_target = target.forward(&tr.next_features, &tr.next_mask)?;
        let value = if double {
            let q_online = online.forward(&tr.next_features, &tr.next_mask)?;
            let a_star = masked_argmax(&q_online).expect("mask checked non-empty");
            q_target[a_star]
        } else {
            let a_star = masked_argmax(&q_target).expect("mask checked non-empty");
            q_target[a_star]
        };
        out.push(tr.reward + gamma * value);
    }
    Ok(out)
}

/// Signed TD error of a single fresh transition under the current networks.
fn td_error_single(
    tr: &Transition,
    online: &NetParams,
    target: &NetParams,
    gamma: f64,
    double: bool,
) -> Result<f64, QNetError> {
    let y = td_target(std::slice::from_ref(tr), online, target, gamma, double)?[0];
    let q = online.forward(&tr.features, &tr.mask)?[tr.action];
    Ok(q - y)
}

/// Pick an action: the advisor candidate set intersects the legal set when
/// possible, epsilon explores uniformly over the effective set, otherwise the
/// masked argmax of the online network decides.
#[allow(clippy::too_many_arguments)]
pub fn select_action(
    features: &[f64],
    legal: &[NodeId],
    advisor_set: Option<&BTreeSet<NodeId>>,
    net: &NetParams,
    encoder: &FeatureEncoder,
    eps: f64,
    rng: &mut ChaCha8Rng,
) -> Result<NodeId, AgentError> {
    assert!(!legal.is_empty(), "select_action requires a non-empty action space");
    let effective: Vec<NodeId> = match advisor_set {
        Some(set) => {
            let both: Vec<NodeId> = legal.iter().copied().filter(|a| set.contains(a)).collect();
            if both.is_empty() {
                legal.to_vec()
            } else {
                both
            }
        }
        None => legal.to_vec(),
    };
    // One coin per step keeps the RNG stream aligned across code paths.
    let coin: f64 = rng.gen();
    if coin < eps {
        return Ok(effective[rng.gen_range(0..effective.len())]);
    }
    let mask = encoder.mask_of(&effective);
    let q = net.forward(features, &mask)?;
    Ok(masked_argmax(&q).expect("effective set is non-empty"))
}

/// Rolling candidate cache: each accepted trajectory is followed along its
/// spine while executed actions keep matching it; the cache dies after a
/// bounded number of steps.
struct CandidateCache {
    spines: Vec<(Vec<NodeId>, usize)>,
    age: usize,
    limit: usize,
}

impl CandidateCache {
    fn empty(limit: usize) -> Self {
        CandidateCache { spines: Vec::new(), age: 0, limit }
    }

    fn fill(&mut self, accepted: &[Vec<NodeId>]) {
        self.spines = accepted.iter().map(|t| (t.clone(), 0)).collect();
        self.age = 0;
    }

    fn current_actions(&self) -> Option<BTreeSet<NodeId>> {
        let set: BTreeSet<NodeId> =
            self.spines.iter().filter(|(t, i)| i < &t.len()).map(|(t, i)| t[*i]).collect();
        (!set.is_empty()).then_some(set)
    }

    fn advance(&mut self, executed: NodeId) {
        self.age += 1;
        for (t, i) in self.spines.iter_mut() {
            if *i < t.len() && t[*i] == executed {
                *i += 1;
            } else {
                *i = t.len() + 1; // diverged from this spine
            }
        }
        self.spines.retain(|(t, i)| *i <= t.len());
        if self.age >= self.limit {
            self.spines.clear();
        }
    }

    fn exhausted(&self) -> bool {
        self.current_actions().is_none()
    }
}

/// Generalized cost of a (possibly unfinished) trace, in step order.
fn trace_cost(cfg: &TrainConfig, trace: &[StepOutcome]) -> f64 {
    let mut total = 0.0;
    for step in trace {
        if step.info.dispatched {
            total += cfg.gamma_f;
        }
        total += cfg.gamma_d * step.info.distance;
    }
    total
}

pub fn train(
    inst: &Instance,
    cfg: &TrainConfig,
    backend: Option<&dyn AdvisorBackend>,
    seed: u64,
) -> Result<TrainResult, AgentError> {
    train_observed(inst, cfg, backend, seed, &mut |_| {})
}

/// `train` with an event sink for tests and audits.
pub fn train_observed(
    inst: &Instance,
    cfg: &TrainConfig,
    backend: Option<&dyn AdvisorBackend>,
    seed: u64,
    observe: &mut dyn FnMut(TrainEvent),
) -> Result<TrainResult, AgentError> {
    cfg.validate()?;
    let env = Env::new(inst, cfg.env_config());
    let encoder = FeatureEncoder::new(inst);
    let horizon = cfg.horizon.unwrap_or(4 * inst.customer_count().max(1));

    // Seed streams, in documented draw order: network init, policy
    // exploration, replay sampling.
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let net_seed: u64 = master.gen();
    let mut policy_rng = ChaCha8Rng::seed_from_u64(master.gen());
    let replay_seed: u64 = master.gen();

    let arch = Arch {
        input_dim: encoder.dim(),
        trunk: cfg.trunk.clone(),
        head_hidden: cfg.head_hidden,
        n_actions: encoder.n_actions(),
        dueling: cfg.switches.dueling,
    };
    let mut online = NetParams::new(arch, net_seed);
    let mut target = online.clone();
    let mut opt = Adam::new(&online);

    let replay_cfg = ReplayConfig {
        capacity: cfg.replay_capacity,
        alpha: if cfg.switches.per { cfg.per_alpha } else { 0.0 },
        eps_llm: if cfg.switches.llm_per_boost { cfg.eps_llm } else { 0.0 },
        eps_floor: cfg.per_eps,
        boost_on_refresh: cfg.boost_on_refresh,
    };
    let mut replay = ReplayBuffer::new(replay_cfg, replay_seed)?;

    let mut pool = MemoryPool::new(cfg.pool_capacity);
    let empty_pool = MemoryPool::new(0);
    let phase_budget = ((cfg.phase.fraction * cfg.episodes as f64).ceil() as usize).max(1);

    let mut reports = Vec::with_capacity(cfg.episodes);
    let mut best: Option<BestPlan> = None;
    let mut checkpoints = Vec::new();
    let mut session_log = Vec::new();
    let mut degraded_steps = 0usize;
    let mut returns: Vec<f64> = Vec::with_capacity(cfg.episodes);
    let mut phase: u8 = 1;
    let mut step_count = 0usize;

    for episode in 0..cfg.episodes {
        if phase == 1 && phase_over(cfg, episode, phase_budget, &returns) {
            phase = 2;
            observe(TrainEvent::PhaseSwitch { episode });
        }
        let epsilon = cfg.epsilon_at(episode);
        let beta = cfg.beta_at(episode);
        let advisor_on = backend.is_some() && phase == 1;

        let mut state = env.reset();
        let mut trace: Vec<StepOutcome> = Vec::new();
        let mut cache = CandidateCache::empty(cfg.candidate_cache_steps);
        let mut llm_calls = 0usize;
        let mut accepted_total = 0usize;
        let mut requested_total = 0usize;

        for _ in 0..horizon {
            let legal = env.action_space(&state);
            if legal.is_empty() {
                break;
            }

            if advisor_on && (state.position == 0 || cache.exhausted()) {
                let prompt_pool = if cfg.switches.llm_memory { &pool } else { &empty_pool };
                match advisor::advise(
                    &state,
                    inst,
                    backend.expect("advisor_on implies backend"),
                    prompt_pool,
                    cfg.advisor_max_rounds,
                    cfg.env_config(),
                    &cfg.decode,
                ) {
                    Ok(set) => {
                        llm_calls += set.backend_calls();
                        accepted_total += set.accepted.len();
                        requested_total += set.candidates_requested();
                        for round in &set.rounds {
                            session_log.push((round.prompt.clone(), round.reply.clone()));
                        }
                        observe(TrainEvent::Advise {
                            episode,
                            phase,
                            backend_calls: set.backend_calls(),
                            accepted: set.accepted.len(),
                        });
                        cache.fill(&set.accepted);
                    }
                    Err(AdvisorError::BackendUnavailable(_)) => {
                        degraded_steps += 1;
                        cache = CandidateCache::empty(cfg.candidate_cache_steps);
                    }
                }
            }

            let advisor_set = if advisor_on { cache.current_actions() } else { None };
            let intersection_nonempty = advisor_set
                .as_ref()
                .is_some_and(|s| legal.iter().any(|a| s.contains(a)));
            let features = encoder.encode(&state);
            let action = select_action(
                &features,
                &legal,
                advisor_set.as_ref(),
                &online,
                &encoder,
                epsilon,
                &mut policy_rng,
            )?;
            let out = env.step(&state, action)?;

            let llm_flag = advisor_on && intersection_nonempty;
            observe(TrainEvent::Transition {
                episode,
                phase,
                llm_flag,
                advisor_intersection_nonempty: intersection_nonempty,
            });

            let next_legal = env.action_space(&out.next);
            let transition = Transition {
                features,
                mask: encoder.mask_of(&legal),
                action,
                reward: out.reward,
                next_features: encoder.encode(&out.next),
                next_mask: encoder.mask_of(&next_legal),
                done: out.done,
                llm_flag,
            };
            let delta =
                td_error_single(&transition, &online, &target, cfg.gamma, cfg.switches.double)?;
            replay.push(transition, Some(delta));

            cache.advance(action);
            step_count += 1;

            if replay.len() >= cfg.warmup.max(cfg.batch_size) && step_count % cfg.update_period == 0
            {
                let batch = replay.sample(cfg.batch_size, beta)?;
                let targets =
                    td_target(&batch.transitions, &online, &target, cfg.gamma, cfg.switches.double)?;
                let samples: Vec<BatchSample> = batch
                    .transitions
                    .iter()
                    .zip(&targets)
                    .zip(&batch.weights)
                    .map(|((tr, &y), &w)| BatchSample {
                        features: tr.features.clone(),
                        mask: tr.mask.clone(),
                        action: tr.action,
                        target: y,
                        weight: w,
                    })
                    .collect();
                let grads = online.backward(&samples, cfg.loss)?;
                opt.step(&mut online, &grads.grads, cfg.lr)?;
                replay.update_priorities(&batch.indices, &grads.td_errors)?;
                qnet::polyak_update(&mut target, &online, cfg.tau)?;
            }

            let done = out.done;
            state = out.next.clone();
            trace.push(out);
            if done {
                break;
            }
        }

        let ep_return: f64 = trace.iter().map(|o| o.reward).sum();
        let cost = trace_cost(cfg, &trace);
        let complete = state.position == 0
            && state.all_served()
            && trace.last().is_some_and(|t| t.done);
        let plan = extract_plan(&trace);
        let feasible = complete
            && milp::evaluate(inst, &plan, ClockMode::Global)
                .map(|v| v.feasible)
                .unwrap_or(false);
        if feasible && best.as_ref().map_or(true, |b| cost < b.generalized_cost) {
            best = Some(BestPlan { plan, generalized_cost: cost, episode });
        }

        let trajectory: Vec<NodeId> = trace.iter().map(|o| o.info.action).collect();
        pool.update(trajectory, ep_return, Vec::new());

        reports.push(EpisodeReport {
            episode,
            phase,
            ret: ep_return,
            generalized_cost: cost,
            feasible,
            steps: trace.len(),
            llm_calls,
            llm_accept_rate: if requested_total == 0 {
                0.0
            } else {
                accepted_total as f64 / requested_total as f64
            },
            epsilon,
        });
        returns.push(ep_return);

        if cfg.checkpoint_every > 0 && (episode + 1) % cfg.checkpoint_every == 0 {
            checkpoints.push(Checkpoint { episode, data: qnet::save_checkpoint(&online) });
        }
    }

    Ok(TrainResult {
        reports,
        best,
        final_checkpoint: qnet::save_checkpoint(&online),
        checkpoints,
        degraded_steps,
        session_log,
    })
}

fn phase_over(cfg: &TrainConfig, episode: usize, budget: usize, returns: &[f64]) -> bool {
    if episode >= budget {
        return true;
    }
    if !cfg.phase.use_stagnation {
        return false;
    }
    let w = cfg.phase.stagnation_window;
    if returns.len() < 2 * w || w == 0 {
        return false;
    }
    let recent: f64 = returns[returns.len() - w..].iter().sum::<f64>() / w as f64;
    let earlier: f64 =
        returns[returns.len() - 2 * w..returns.len() - w].iter().sum::<f64>() / w as f64;
    (recent - earlier).abs() <= cfg.phase.stagnation_tol * earlier.abs()
}

/// Greedy-policy evaluation of a checkpoint: mean generalized cost and the
/// fraction of rollouts whose induced plan has zero violations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalEpisode {
    pub cost: f64,
    pub feasible: bool,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mean_cost: f64,
    pub satisfaction_rate: f64,
    pub episodes: Vec<EvalEpisode>,
}

pub fn evaluate_policy(
    inst: &Instance,
    checkpoint: &str,
    episodes: usize,
    cfg: &TrainConfig,
) -> Result<EvalReport, AgentError> {
    let params =
        qnet::load_checkpoint(checkpoint).map_err(|e| AgentError::CheckpointCorrupt(e.to_string()))?;
    evaluate_params(inst, &params, episodes, cfg)
}

pub fn evaluate_params(
    inst: &Instance,
    params: &NetParams,
    episodes: usize,
    cfg: &TrainConfig,
) -> Result<EvalReport, AgentError> {
    let env = Env::new(inst, cfg.env_config());
    let encoder = FeatureEncoder::new(inst);
    if params.arch.input_dim != encoder.dim() || params.arch.n_actions != encoder.n_actions() {
        return Err(AgentError::CheckpointCorrupt(format!(
            "checkpoint was trained for a different instance shape ({}x{} vs {}x{})",
            params.arch.input_dim,
            params.arch.n_actions,
            encoder.dim(),
            encoder.n_actions()
        )));
    }
    let horizon = cfg.horizon.unwrap_or(4 * inst.customer_count().max(1));

    let mut out = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let mut state = env.reset();
        let mut trace = Vec::new();
        for _ in 0..horizon {
            let legal = env.action_space(&state);
            if legal.is_empty() {
                break;
            }
            let mask = encoder.mask_of(&legal);
            let q = params.forward(&encoder.encode(&state), &mask)?;
            let action = masked_argmax(&q).expect("legal set non-empty");
            let step = env.step(&state, action)?;
            let done = step.done;
            state = step.next.clone();
            trace.push(step);
            if done {
                break;
            }
        }
        let complete =
            state.position == 0 && state.all_served() && trace.last().is_some_and(|t| t.done);
        let plan = extract_plan(&trace);
        let feasible = complete
            && milp::evaluate(inst, &plan, ClockMode::Global)
                .map(|v| v.feasible)
                .unwrap_or(false);
        out.push(EvalEpisode { cost: trace_cost(cfg, &trace), feasible, steps: trace.len() });
    }

    let mean_cost = if out.is_empty() {
        0.0
    } else {
        out.iter().map(|e| e.cost).sum::<f64>() / out.len() as f64
    };
    let satisfaction_rate = if out.is_empty() {
        0.0
    } else {
        out.iter().filter(|e| e.feasible).count() as f64 / out.len() as f64
    };
    Ok(EvalReport { mean_cost, satisfaction_rate, episodes: out })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::advisor::MockBackend;
    use crate::fixtures;
    use crate::instance::{augment, AugmentConfig};

    fn linear_net(weights: Vec<f64>, n_actions: usize, input_dim: usize) -> NetParams {
        let arch = Arch { input_dim, trunk: vec![], head_hidden: 0, n_actions, dueling: false };
        let mut net = NetParams::new(arch, 0);
        net.advantage[0].w = weights;
        net.advantage[0].b = vec![0.0; n_actions];
        net
    }

    fn chain_transition(done: bool) -> Transition {
        Transition {
            features: vec![1.0, 0.0],
            mask: vec![true, true],
            action: 0,
            reward: 1.0,
            next_features: vec![0.0, 1.0],
            next_mask: vec![true, true],
            done,
            llm_flag: false,
        }
    }

    #[test]
    fn td_target_done_is_just_the_reward() {
        let online = linear_net(vec![3.0, 3.0, 1.0, 9.0], 2, 2);
        let target = linear_net(vec![5.0, 5.0, 7.0, 2.0], 2, 2);
        let y = td_target(&[chain_transition(true)], &online, &target, 0.9, true).unwrap();
        assert_eq!(y, vec![1.0]);
    }

    #[test]
    fn td_target_gamma_zero_is_just_the_reward() {
        let online = linear_net(vec![3.0, 3.0, 1.0, 9.0], 2, 2);
        let target = linear_net(vec![5.0, 5.0, 7.0, 2.0], 2, 2);
        let y = td_target(&[chain_transition(false)], &online, &target, 0.0, true).unwrap();
        assert_eq!(y, vec![1.0]);
    }

    #[test]
    fn td_target_double_decouples_selection_from_evaluation() {
        // Online at s': Q = [3, 9] so the online argmax is action 1.
        // Target at s': Q = [5, 2].
        let online = linear_net(vec![3.0, 3.0, 1.0, 9.0], 2, 2);
        let target = linear_net(vec![5.0, 5.0, 7.0, 2.0], 2, 2);
        let tr = chain_transition(false);
        let double = td_target(&[tr.clone()], &online, &target, 0.9, true).unwrap();
        assert_eq!(double, vec![1.0 + 0.9 * 2.0]);
        let plain = td_target(&[tr], &online, &target, 0.9, false).unwrap();
        assert_eq!(plain, vec![1.0 + 0.9 * 5.0]);
    }

    #[test]
    fn epsilon_schedule_is_pointwise_correct() {
        let cfg = TrainConfig::default();
        for k in 0..2000 {
            let expected = (0.8 * 0.995f64.powi(k as i32)).max(0.01);
            assert_eq!(cfg.epsilon_at(k), expected);
        }
        assert_eq!(cfg.epsilon_at(0), 0.8);
        assert!(cfg.epsilon_at(1999) == 0.01);
    }

    #[test]
    fn greedy_selection_takes_the_argmax() {
        let inst = fixtures::four_node();
        let encoder = FeatureEncoder::new(&inst);
        let mut net = NetParams::new(
            Arch {
                input_dim: encoder.dim(),
                trunk: vec![],
                head_hidden: 0,
                n_actions: 4,
                dueling: false,
            },
            0,
        );
        net.advantage[0].w = vec![0.0; 4 * encoder.dim()];
        net.advantage[0].b = vec![0.1, 0.9, 0.5, 0.2];
        let env = Env::new(&inst, EnvConfig::default());
        let state = env.reset();
        let legal = env.action_space(&state);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = select_action(
            &encoder.encode(&state),
            &legal,
            None,
            &net,
            &encoder,
            0.0,
            &mut rng,
        )
        .unwrap();
        assert_eq!(a, 1);
    }

    #[test]
    fn disjoint_candidate_set_falls_back_to_legal_actions() {
        let inst = fixtures::four_node();
        let encoder = FeatureEncoder::new(&inst);
        let net = NetParams::new(
            Arch {
                input_dim: encoder.dim(),
                trunk: vec![8],
                head_hidden: 4,
                n_actions: 4,
                dueling: true,
            },
            3,
        );
        let env = Env::new(&inst, EnvConfig::default());
        let state = env.reset();
        let legal = env.action_space(&state);
        let advisor: BTreeSet<NodeId> = [0].into_iter().collect(); // depot not legal here
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let a = select_action(
                &encoder.encode(&state),
                &legal,
                Some(&advisor),
                &net,
                &encoder,
                1.0,
                &mut rng,
            )
            .unwrap();
            assert!(legal.contains(&a));
        }
    }

    #[test]
    fn full_exploration_is_uniform_over_the_effective_set() {
        let inst = fixtures::four_node();
        let encoder = FeatureEncoder::new(&inst);
        let net = NetParams::new(
            Arch {
                input_dim: encoder.dim(),
                trunk: vec![8],
                head_hidden: 4,
                n_actions: 4,
                dueling: true,
            },
            5,
        );
        let env = Env::new(&inst, EnvConfig::default());
        let state = env.reset();
        let legal = env.action_space(&state);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut counts = [0usize; 4];
        let draws = 10_000;
        for _ in 0..draws {
            let a = select_action(
                &encoder.encode(&state),
                &legal,
                None,
                &net,
                &encoder,
                1.0,
                &mut rng,
            )
            .unwrap();
            counts[a] += 1;
        }
        let p = 1.0 / legal.len() as f64;
        let sigma = (p * (1.0 - p) / draws as f64).sqrt();
        for &a in &legal {
            let emp = counts[a] as f64 / draws as f64;
            assert!((emp - p).abs() <= 3.0 * sigma, "action {a}: {emp} vs {p}");
        }
    }

    fn tiny_config(episodes: usize) -> TrainConfig {
        TrainConfig {
            episodes,
            warmup: 32,
            batch_size: 16,
            trunk: vec![32],
            head_hidden: 16,
            checkpoint_every: 0,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn single_customer_training_finds_the_oracle_plan() {
        let inst = fixtures::single_customer();
        let cfg = tiny_config(200);
        let backend = MockBackend::new(3);
        let result = train(&inst, &cfg, Some(&backend), 11).unwrap();
        let best = result.best.expect("a feasible plan must be found");
        assert_eq!(best.plan.routes, vec![vec![1]]);
        let oracle = milp::exact_solve(&inst, 8, &cfg.cost_model()).unwrap();
        assert_eq!(best.generalized_cost, oracle.generalized_cost);
    }

    #[test]
    fn same_seed_reproduces_identical_reports() {
        let inst = augment(
            &fixtures::six_customers(),
            &AugmentConfig { window_tightness: 0.4, break_fraction: 0.15, seed: 1 },
        )
        .unwrap();
        let cfg = tiny_config(40);
        let backend = MockBackend::new(9);
        let a = train(&inst, &cfg, Some(&backend), 123).unwrap();
        let b = train(&inst, &cfg, Some(&backend), 123).unwrap();
        assert_eq!(a.reports, b.reports);
        assert_eq!(a.final_checkpoint, b.final_checkpoint);
        let c = train(&inst, &cfg, Some(&backend), 124).unwrap();
        assert_ne!(a.reports, c.reports);
    }

    #[test]
    fn pure_dqn_never_calls_the_backend() {
        let inst = fixtures::four_node();
        let cfg = tiny_config(30);
        let result = train(&inst, &cfg, None, 7).unwrap();
        assert!(result.reports.iter().all(|r| r.llm_calls == 0));
        assert!(result.session_log.is_empty());
    }

    #[test]
    fn vanilla_ablation_runs_the_baseline_path() {
        let inst = fixtures::four_node();
        let cfg = TrainConfig {
            switches: AblationSwitches::all_off(),
            ..tiny_config(30)
        };
        let result = train(&inst, &cfg, None, 7).unwrap();
        assert!(result.reports.iter().all(|r| r.llm_calls == 0));
        let params = qnet::load_checkpoint(&result.final_checkpoint).unwrap();
        assert!(!params.arch.dueling);
    }

    #[test]
    fn phase_two_issues_no_backend_calls_and_flags_are_provenanced() {
        let inst = augment(
            &fixtures::six_customers(),
            &AugmentConfig { window_tightness: 0.4, break_fraction: 0.15, seed: 5 },
        )
        .unwrap();
        let cfg = TrainConfig {
            phase: PhaseConfig { fraction: 0.3, use_stagnation: false, ..Default::default() },
            ..tiny_config(60)
        };
        let backend = MockBackend::new(1);
        let mut flagged = 0usize;
        let mut violations = 0usize;
        let result = train_observed(&inst, &cfg, Some(&backend), 77, &mut |event| match event {
            TrainEvent::Transition { phase, llm_flag, advisor_intersection_nonempty, .. } => {
                if llm_flag {
                    flagged += 1;
                }
                if llm_flag != (phase == 1 && advisor_intersection_nonempty) {
                    violations += 1;
                }
            }
            TrainEvent::Advise { phase, .. } => {
                if phase != 1 {
                    violations += 1;
                }
            }
            TrainEvent::PhaseSwitch { .. } => {}
        })
        .unwrap();
        assert_eq!(violations, 0);
        assert!(flagged > 0, "the advisor never steered a transition");
        for r in &result.reports {
            if r.phase == 2 {
                assert_eq!(r.llm_calls, 0);
            }
        }
        assert!(result.reports.iter().any(|r| r.phase == 2));
    }

    #[test]
    fn evaluate_policy_rates_infeasible_policies_zero() {
        let mut inst = fixtures::forced_split();
        for i in 1..inst.nodes.len() {
            inst.nodes[i].window = crate::instance::TimeWindow { open: 0.0, close: 0.5 };
        }
        let cfg = tiny_config(10);
        let result = train(&inst, &cfg, None, 3).unwrap();
        let eval = evaluate_policy(&inst, &result.final_checkpoint, 5, &cfg).unwrap();
        assert_eq!(eval.satisfaction_rate, 0.0);
        assert!(matches!(
            evaluate_policy(&inst, "not a checkpoint", 1, &cfg),
            Err(AgentError::CheckpointCorrupt(_))
        ));
    }

    #[test]
    fn trained_single_customer_policy_satisfies_constraints() {
        let inst = fixtures::single_customer();
        let cfg = tiny_config(150);
        let result = train(&inst, &cfg, None, 5).unwrap();
        let eval = evaluate_policy(&inst, &result.final_checkpoint, 3, &cfg).unwrap();
        assert_eq!(eval.satisfaction_rate, 1.0);
        let oracle = milp::exact_solve(&inst, 8, &cfg.cost_model()).unwrap();
        assert_eq!(eval.mean_cost, oracle.generalized_cost);
    }
}
