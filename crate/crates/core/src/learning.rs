//! Replay, bootstrap targets, losses and the sampling/training loop shared by
//! the three algorithm modes.

use std::collections::VecDeque;

use ndarray::{Array2, Array3, ArrayView2, ArrayView3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::agents::{
    agent_input_dim, central_act, central_input_dim, epsilon_overlay, greedy, localmax_batch, write_agent_input,
    write_central_input, AgentRuntimes, CentralCritic, EpsilonSchedule, JointCritic,
};
use crate::config::{Algorithm, Config};
use crate::env::{Action, GridWorld, JointAction, Observation, StateFeatures, N_ACTIONS};
use crate::error::{Error, Result};
use crate::intrinsic::Estimator;
use crate::nn::checkpoint::Checkpoint;
use crate::nn::{argmax, clip_grad_norm, AgentNet, CentralNet, Parameters, Real, RmsProp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Controller {
    Decentralized,
    Central,
}

impl Controller {
    pub fn name(self) -> &'static str {
        match self {
            Controller::Decentralized => "decentralized",
            Controller::Central => "central",
        }
    }
}

/// One stored episode. Step `t` holds what the agents saw and did before the
/// `t`-th transition, the environment reward it produced and the intrinsic
/// bonus computed at the following decision point.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub controller: Controller,
    pub observations: Vec<Vec<Observation>>,
    pub states: Vec<StateFeatures>,
    pub actions: Vec<JointAction>,
    pub rewards: Vec<f64>,
    pub bonuses: Vec<f64>,
    /// Set when the final step captured a prey.
    pub terminated: bool,
    /// Set when the final step hit the episode limit.
    pub truncated: bool,
}

impl EpisodeRecord {
    pub fn new(controller: Controller) -> Self {
        EpisodeRecord {
            controller,
            observations: Vec::new(),
            states: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
            bonuses: Vec::new(),
            terminated: false,
            truncated: false,
        }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn n_agents(&self) -> usize {
        self.actions.first().map_or(0, JointAction::len)
    }

    pub fn env_return(&self) -> f64 {
        self.rewards.iter().sum()
    }

    /// No bootstrap past step `t`.
    pub fn is_terminal(&self, t: usize) -> bool {
        t + 1 >= self.len()
    }

    /// Executed own action of `agent` before step `t`, `Stay` at the start.
    pub fn prev_action(&self, t: usize, agent: usize) -> Action {
        if t == 0 {
            Action::Stay
        } else {
            self.actions[t - 1][agent]
        }
    }

    pub fn reward(&self, t: usize, mode: RewardMode) -> f64 {
        match mode {
            RewardMode::EnvOnly => self.rewards[t],
            RewardMode::EnvPlusIntrinsic => self.rewards[t] + self.bonuses[t],
        }
    }
}

/// FIFO store of the most recent episodes.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    episodes: VecDeque<EpisodeRecord>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        ReplayBuffer {
            capacity,
            episodes: VecDeque::with_capacity(capacity),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    pub fn push(&mut self, episode: EpisodeRecord) {
        if self.episodes.len() == self.capacity {
            self.episodes.pop_front();
        }
        self.episodes.push_back(episode);
    }

    pub fn get(&self, i: usize) -> &EpisodeRecord {
        &self.episodes[i]
    }

    pub fn latest(&self) -> Option<&EpisodeRecord> {
        self.episodes.back()
    }

    pub fn iter(&self) -> impl Iterator<Item = &EpisodeRecord> {
        self.episodes.iter()
    }

    /// Uniform draw with replacement.
    pub fn sample_indices<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Result<Vec<usize>> {
        if self.len() < batch || batch == 0 {
            return Err(Error::BufferNotReady {
                stored: self.len(),
                required: batch,
            });
        }
        Ok((0..batch).map(|_| rng.gen_range(0..self.len())).collect())
    }

    pub fn batch(&self, indices: &[usize]) -> BatchView<'_> {
        BatchView::new(indices.iter().map(|&i| self.get(i)).collect())
    }
}

/// Episodes padded to a common length. Steps at or beyond an episode's
/// length are masked out of every loss.
#[derive(Debug, Clone)]
pub struct BatchView<'a> {
    episodes: Vec<&'a EpisodeRecord>,
    steps: usize,
}

impl<'a> BatchView<'a> {
    pub fn new(episodes: Vec<&'a EpisodeRecord>) -> Self {
        let steps = episodes.iter().map(|e| e.len()).max().unwrap_or(0);
        BatchView { episodes, steps }
    }

    /// Pads to `steps`, which must cover the longest episode.
    pub fn padded(episodes: Vec<&'a EpisodeRecord>, steps: usize) -> Result<Self> {
        let mut b = Self::new(episodes);
        if steps < b.steps {
            return Err(Error::Usage(format!("padding to {steps} steps truncates an episode of {}", b.steps)));
        }
        b.steps = steps;
        Ok(b)
    }

    pub fn episodes(&self) -> &[&'a EpisodeRecord] {
        &self.episodes
    }

    pub fn n_episodes(&self) -> usize {
        self.episodes.len()
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn n_agents(&self) -> usize {
        self.episodes.first().map_or(0, |e| e.n_agents())
    }

    /// `[T, S]`, true on real steps.
    pub fn mask(&self) -> Array2<bool> {
        Array2::from_shape_fn((self.steps, self.n_episodes()), |(t, s)| t < self.episodes[s].len())
    }

    pub fn valid_steps(&self) -> usize {
        self.episodes.iter().map(|e| e.len()).sum()
    }

    /// Agent-network inputs `[T, S·n, in]`; sequence `s·n + a` is agent `a`
    /// of episode `s`. Padded steps are zero.
    pub fn agent_inputs<F: Real>(&self) -> Array3<F> {
        let n = self.n_agents();
        let obs_len = self.episodes.first().map_or(0, |e| e.observations[0][0].data.len());
        let dim = agent_input_dim(obs_len, n);
        let mut x = Array3::<F>::zeros((self.steps, self.n_episodes() * n, dim));
        for (s, ep) in self.episodes.iter().enumerate() {
            for t in 0..ep.len() {
                for a in 0..n {
                    let last = (t > 0).then(|| ep.actions[t - 1][a]);
                    let mut row = x.slice_mut(ndarray::s![t, s * n + a, ..]);
                    write_agent_input(
                        &ep.observations[t][a],
                        last,
                        a,
                        n,
                        row.as_slice_mut().expect("contiguous"),
                    );
                }
            }
        }
        x
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RewardMode {
    EnvOnly,
    EnvPlusIntrinsic,
}

/// Double-Q one-step targets `[T, S·n]` from already unrolled online and
/// target Q-values: the online network picks the next action, the target
/// network evaluates it. Zero on padded steps.
pub fn iql_targets_from<F: Real>(
    q_online: ArrayView3<'_, F>,
    q_target: ArrayView3<'_, F>,
    batch: &BatchView<'_>,
    gamma: f64,
    mode: RewardMode,
) -> Array2<F> {
    let n = batch.n_agents();
    let mut y = Array2::<F>::zeros((batch.steps(), batch.n_episodes() * n));
    for (s, ep) in batch.episodes().iter().enumerate() {
        for t in 0..ep.len() {
            let rho = ep.reward(t, mode);
            for a in 0..n {
                let row = s * n + a;
                let value = if ep.is_terminal(t) {
                    rho
                } else {
                    let next = argmax(q_online.slice(ndarray::s![t + 1, row, ..]).iter().copied());
                    rho + gamma * q_target[[t + 1, row, next]].as_f64()
                };
                y[[t, row]] = F::from_f64_lossy(value);
            }
        }
    }
    y
}

pub fn iql_targets<F: Real>(
    online: &AgentNet<F>,
    target: &AgentNet<F>,
    batch: &BatchView<'_>,
    gamma: f64,
    mode: RewardMode,
) -> Array2<F> {
    let x = batch.agent_inputs::<F>();
    let (q, _) = online.unroll(x.view());
    let (qt, _) = target.unroll(x.view());
    iql_targets_from(q.view(), qt.view(), batch, gamma, mode)
}

/// Masked mean squared error of the executed actions' values and `dL/dq`.
fn iql_residuals<F: Real>(q: ArrayView3<'_, F>, batch: &BatchView<'_>, targets: ArrayView2<'_, F>) -> (F, Array3<F>) {
    let n = batch.n_agents();
    let count = F::from_usize(batch.valid_steps() * n).expect("count").max(F::one());
    let two = F::one() + F::one();
    let mut dq = Array3::<F>::zeros(q.raw_dim());
    let mut loss = F::zero();
    for (s, ep) in batch.episodes().iter().enumerate() {
        for t in 0..ep.len() {
            for a in 0..n {
                let row = s * n + a;
                let u = ep.actions[t][a].index();
                let diff = q[[t, row, u]] - targets[[t, row]];
                loss += diff * diff;
                dq[[t, row, u]] = two * diff / count;
            }
        }
    }
    (loss / count, dq)
}

/// Loss and BPTT gradients of the decentralized learner for fixed targets.
pub fn iql_loss<F: Real>(net: &AgentNet<F>, batch: &BatchView<'_>, targets: ArrayView2<'_, F>) -> (F, AgentNet<F>) {
    let x = batch.agent_inputs::<F>();
    let (q, tape) = net.unroll(x.view());
    let (loss, dq) = iql_residuals(q.view(), batch, targets);
    (loss, net.backward(&tape, dq.view()))
}

pub fn iql_loss_value<F: Real>(net: &AgentNet<F>, batch: &BatchView<'_>, targets: ArrayView2<'_, F>) -> F {
    let x = batch.agent_inputs::<F>();
    let (q, _) = net.unroll(x.view());
    iql_residuals(q.view(), batch, targets).0
}

/// Greedy decentralized joint action at every real step, `[S][t]`.
pub fn decentralized_greedy<F: Real>(net: &AgentNet<F>, batch: &BatchView<'_>) -> Vec<Vec<JointAction>> {
    let n = batch.n_agents();
    let x = batch.agent_inputs::<F>();
    let (q, _) = net.unroll(x.view());
    batch
        .episodes()
        .iter()
        .enumerate()
        .map(|(s, ep)| {
            (0..ep.len())
                .map(|t| greedy(q.slice(ndarray::s![t, s * n..(s + 1) * n, ..])))
                .collect()
        })
        .collect()
}

/// Backward recursion
/// `G_t = rho_t + (1 − λ)·γ·bootstrap_t + λ·γ·G_{t+1}` with `G_T = 0`.
/// Callers zero `bootstrap` on terminal steps.
pub fn lambda_returns(rho: &[f64], bootstrap: &[f64], gamma: f64, lambda: f64) -> Vec<f64> {
    assert_eq!(rho.len(), bootstrap.len());
    let mut g = vec![0.0; rho.len()];
    let mut next = 0.0;
    for t in (0..rho.len()).rev() {
        next = rho[t] + (1.0 - lambda) * gamma * bootstrap[t] + lambda * gamma * next;
        g[t] = next;
    }
    g
}

/// Central-critic rows in `(episode, step, agent)` order: inputs and executed actions.
pub fn central_inputs<F: Real>(batch: &BatchView<'_>) -> (Array2<F>, Vec<usize>) {
    let n = batch.n_agents();
    let state_len = batch.episodes().first().map_or(0, |e| e.states[0].0.len());
    let dim = central_input_dim(state_len, n);
    let mut x = Array2::<F>::zeros((batch.valid_steps() * n, dim));
    let mut actions = Vec::with_capacity(x.nrows());
    let mut r = 0;
    for ep in batch.episodes() {
        for t in 0..ep.len() {
            for a in 0..n {
                let mut row = x.row_mut(r);
                write_central_input(
                    &ep.states[t],
                    &ep.actions[t],
                    a,
                    ep.prev_action(t, a),
                    row.as_slice_mut().expect("row-major"),
                );
                actions.push(ep.actions[t][a].index());
                r += 1;
            }
        }
    }
    (x, actions)
}

/// Per-agent `G^λ` targets in `(episode, step, agent)` order. The bootstrap at
/// `t` runs localmax with the online critic on step `t + 1`, starting from
/// the decentralized greedy actions there, and evaluates the result with
/// the target critic.
pub fn lambda_targets<F: Real>(
    online: &CentralNet<F>,
    target: &CentralNet<F>,
    batch: &BatchView<'_>,
    greedy: &[Vec<JointAction>],
    gamma: f64,
    lambda: f64,
    iterations: usize,
) -> Vec<f64> {
    let n = batch.n_agents();
    let mut states = Vec::new();
    let mut prev = Vec::new();
    let mut init = Vec::new();
    for (s, ep) in batch.episodes().iter().enumerate() {
        for t in 0..ep.len() {
            if !ep.is_terminal(t) {
                states.push(&ep.states[t + 1]);
                prev.push(ep.actions[t].clone());
                init.push(greedy[s][t + 1].clone());
            }
        }
    }
    let mut boot = vec![0.0; states.len() * n];
    if !states.is_empty() {
        let joints = localmax_batch(
            &CentralCritic {
                net: online,
                states: &states,
                prev: &prev,
            },
            init,
            iterations,
        );
        let eval = CentralCritic {
            net: target,
            states: &states,
            prev: &prev,
        };
        for a in 0..n {
            for (i, v) in eval.agent_values(a, &joints).into_iter().enumerate() {
                boot[i * n + a] = v[joints[i][a].index()];
            }
        }
    }

    let mut out = Vec::with_capacity(batch.valid_steps() * n);
    let mut cursor = 0;
    for ep in batch.episodes() {
        let len = ep.len();
        let rho: Vec<f64> = (0..len).map(|t| ep.reward(t, RewardMode::EnvPlusIntrinsic)).collect();
        let mut per_agent = Vec::with_capacity(n);
        for a in 0..n {
            let b: Vec<f64> = (0..len)
                .map(|t| if ep.is_terminal(t) { 0.0 } else { boot[(cursor + t) * n + a] })
                .collect();
            per_agent.push(lambda_returns(&rho, &b, gamma, lambda));
        }
        for t in 0..len {
            for g in &per_agent {
                out.push(g[t]);
            }
        }
        cursor += len - 1;
    }
    out
}

fn central_residuals<F: Real>(q: ArrayView2<'_, F>, actions: &[usize], targets: &[F]) -> (F, Array2<F>) {
    let count = F::from_usize(actions.len()).expect("count").max(F::one());
    let two = F::one() + F::one();
    let mut dq = Array2::<F>::zeros(q.raw_dim());
    let mut loss = F::zero();
    for (r, (&u, &y)) in actions.iter().zip(targets).enumerate() {
        let diff = q[[r, u]] - y;
        loss += diff * diff;
        dq[[r, u]] = two * diff / count;
    }
    (loss / count, dq)
}

/// Loss and gradients of the central critic for fixed targets.
pub fn central_loss<F: Real>(
    net: &CentralNet<F>,
    inputs: ArrayView2<'_, F>,
    actions: &[usize],
    targets: &[F],
) -> (F, CentralNet<F>) {
    let (q, tape) = net.forward_tape(inputs);
    let (loss, dq) = central_residuals(q.view(), actions, targets);
    (loss, net.backward(&tape, dq.view()))
}

pub fn central_loss_value<F: Real>(net: &CentralNet<F>, inputs: ArrayView2<'_, F>, actions: &[usize], targets: &[F]) -> F {
    central_residuals(net.q_values(inputs).view(), actions, targets).0
}

/// Online parameters, a frozen target copy and the optimizer.
#[derive(Debug, Clone)]
pub struct Learner<P> {
    pub online: P,
    pub target: P,
    pub opt: RmsProp<f32, P>,
}

impl<P: Parameters<f32>> Learner<P> {
    fn new(online: P, cfg: &crate::config::LearningConfig) -> Self {
        let opt = RmsProp::new(&online, cfg.lr as f32, cfg.rms_alpha as f32, cfg.rms_eps as f32);
        Learner {
            target: online.clone(),
            online,
            opt,
        }
    }

    fn apply(&mut self, mut grads: P, clip: Option<f64>) {
        if let Some(max) = clip {
            clip_grad_norm(&mut grads, max as f32);
        }
        self.opt.step(&mut self.online, &grads);
    }

    pub fn sync(&mut self) {
        self.target = self.online.clone();
    }
}

/// What one sampled episode produced.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeSummary {
    pub controller: Controller,
    pub env_return: f64,
    pub length: usize,
    pub epsilon: f64,
    pub bonus_mean: f64,
    pub bonus_max: f64,
    pub bonus_clamps: u64,
}

/// One training iteration: the sampled episode plus the learner updates.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationStats {
    /// Episodes completed so far, including this one.
    pub episode: u64,
    pub env_steps: u64,
    pub summary: EpisodeSummary,
    pub iql_loss: Option<f64>,
    pub central_loss: Option<f64>,
    pub synced: bool,
}

const STREAM_INIT: u64 = 0;
const STREAM_ENV: u64 = 1;
const STREAM_POLICY: u64 = 2;
const STREAM_SAMPLE: u64 = 3;
/// Reserved for evaluation episodes, which never touch the trainer's streams.
pub const STREAM_EVAL: u64 = 4;

pub fn seeded_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Owns every piece of mutable training state for one seed.
#[derive(Debug, Clone)]
pub struct Trainer {
    config: Config,
    env: GridWorld,
    pub agent: Learner<AgentNet<f32>>,
    /// Present in ICQL only.
    pub central: Option<Learner<CentralNet<f32>>>,
    /// Absent in plain IQL.
    pub estimator: Option<Estimator>,
    pub schedule: EpsilonSchedule,
    pub buffer: ReplayBuffer,
    episodes: u64,
    env_steps: u64,
    rng_env: ChaCha8Rng,
    rng_policy: ChaCha8Rng,
    rng_sample: ChaCha8Rng,
}

impl Trainer {
    pub fn new(config: Config, seed: u64) -> Result<Self> {
        config.validate()?;
        let env = GridWorld::new(config.env.clone())?;
        let n = env.n_agents();
        let lc = &config.learning;
        let mut init = seeded_stream(seed, STREAM_INIT);
        let agent_net = AgentNet::new(agent_input_dim(env.obs_len(), n), lc.agent_hidden, N_ACTIONS, &mut init);
        let central_net = CentralNet::new(central_input_dim(env.state_len(), n), lc.central_hidden, N_ACTIONS, &mut init);
        let (central, estimator) = match config.algorithm {
            Algorithm::Iql => (None, None),
            Algorithm::IqlIntrinsic => (None, Some(Estimator::from_config(lc.agent_hidden, &config.intrinsic)?)),
            Algorithm::Icql => (
                Some(Learner::new(central_net, lc)),
                Some(Estimator::from_config(lc.central_hidden, &config.intrinsic)?),
            ),
        };
        Ok(Trainer {
            agent: Learner::new(agent_net, lc),
            central,
            estimator,
            schedule: EpsilonSchedule::from_config(&config.exploration),
            buffer: ReplayBuffer::new(lc.buffer_capacity),
            episodes: 0,
            env_steps: 0,
            rng_env: seeded_stream(seed, STREAM_ENV),
            rng_policy: seeded_stream(seed, STREAM_POLICY),
            rng_sample: seeded_stream(seed, STREAM_SAMPLE),
            env,
            config,
        })
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    pub fn env(&self) -> &GridWorld {
        &self.env
    }

    pub fn episodes(&self) -> u64 {
        self.episodes
    }

    pub fn env_steps(&self) -> u64 {
        self.env_steps
    }

    pub fn epsilon(&self) -> f64 {
        self.schedule.value(self.env_steps)
    }

    /// Reward seen by the decentralized learner.
    pub fn iql_reward_mode(&self) -> RewardMode {
        match self.config.algorithm {
            Algorithm::IqlIntrinsic => RewardMode::EnvPlusIntrinsic,
            Algorithm::Iql | Algorithm::Icql => RewardMode::EnvOnly,
        }
    }

    /// Runs one episode, stores it in the replay buffer and advances the
    /// episode and step counters. Epsilon is held fixed for the episode.
    pub fn sample_episode(&mut self) -> Result<EpisodeSummary> {
        let n = self.env.n_agents();
        let lc = &self.config.learning;
        let controller = if self.central.is_some() && self.rng_policy.gen_bool(lc.central_control_prob) {
            Controller::Central
        } else {
            Controller::Decentralized
        };
        let epsilon = self.epsilon();
        let central_eps = if self.config.exploration.central_epsilon { epsilon } else { 0.0 };
        let intrinsic_agent = self.config.algorithm == Algorithm::IqlIntrinsic;
        let clamps_before = self.estimator.as_ref().map_or(0, Estimator::clamp_count);

        let (mut state, obs0) = self.env.reset(&mut self.rng_env);
        let mut runtimes = AgentRuntimes::<f32>::new(n, lc.agent_hidden);
        let mut q = runtimes.observe(&self.agent.online, &obs0);
        let mut obs = obs0;
        let mut prev = JointAction::uniform(n, Action::Stay);
        let mut record = EpisodeRecord::new(controller);
        loop {
            let s_feat = self.env.global_features(&state);
            let greedy_joint = greedy(q.view());
            let actions = match (controller, &self.central) {
                (Controller::Central, Some(c)) => central_act(
                    &c.online,
                    &s_feat,
                    &greedy_joint,
                    &prev,
                    lc.localmax_iterations,
                    central_eps,
                    &mut self.rng_policy,
                ),
                _ => epsilon_overlay(&greedy_joint, epsilon, &mut self.rng_policy),
            };
            if let (Some(c), Some(est), false) = (&self.central, self.estimator.as_mut(), record.is_empty()) {
                let phi = central_features(&c.online, &s_feat, &actions, &prev);
                record.bonuses.push(intrinsic_bonus(est, &phi)?);
            }
            runtimes.commit(&actions);
            let out = self.env.step(&mut state, &actions, &mut self.rng_env)?;
            record.observations.push(obs);
            record.states.push(s_feat);
            record.actions.push(actions.clone());
            record.rewards.push(out.reward);
            let done = out.terminated || out.truncated;

            if !done || intrinsic_agent {
                q = runtimes.observe(&self.agent.online, &out.observations);
            }
            match (&self.central, self.estimator.as_mut()) {
                (None, Some(est)) => {
                    let phi = runtimes.hidden().to_owned();
                    record.bonuses.push(intrinsic_bonus(est, &phi)?);
                }
                (Some(c), Some(est)) if done => {
                    // no joint action exists after the last step; the executed one stands in
                    let s_next = self.env.global_features(&state);
                    let phi = central_features(&c.online, &s_next, &actions, &actions);
                    record.bonuses.push(intrinsic_bonus(est, &phi)?);
                }
                (_, None) => record.bonuses.push(0.0),
                _ => {}
            }
            if done {
                record.terminated = out.terminated;
                record.truncated = out.truncated && !out.terminated;
                break;
            }
            obs = out.observations;
            prev = actions;
        }
        debug_assert_eq!(record.bonuses.len(), record.len());

        let length = record.len();
        let summary = EpisodeSummary {
            controller,
            env_return: record.env_return(),
            length,
            epsilon,
            bonus_mean: record.bonuses.iter().sum::<f64>() / length as f64,
            bonus_max: record.bonuses.iter().copied().fold(0.0, f64::max),
            bonus_clamps: self.estimator.as_ref().map_or(0, Estimator::clamp_count) - clamps_before,
        };
        self.buffer.push(record);
        self.episodes += 1;
        self.env_steps += length as u64;
        Ok(summary)
    }

    fn check_ready(&self) -> Result<()> {
        let required = self.config.learning.batch_size;
        if self.buffer.len() < required {
            return Err(Error::BufferNotReady {
                stored: self.buffer.len(),
                required,
            });
        }
        Ok(())
    }

    /// One RMSprop step of the decentralized learner on the given buffer episodes.
    pub fn train_iql_step(&mut self, indices: &[usize]) -> Result<f64> {
        self.check_ready()?;
        let lc = &self.config.learning;
        let mode = self.iql_reward_mode();
        let batch = self.buffer.batch(indices);
        let x = batch.agent_inputs::<f32>();
        let (q, tape) = self.agent.online.unroll(x.view());
        let (qt, _) = self.agent.target.unroll(x.view());
        let y = iql_targets_from(q.view(), qt.view(), &batch, lc.gamma, mode);
        let (loss, dq) = iql_residuals(q.view(), &batch, y.view());
        let grads = self.agent.online.backward(&tape, dq.view());
        self.agent.apply(grads, lc.clip());
        Ok(loss as f64)
    }

    /// One RMSprop step of the central critic; a usage error outside ICQL.
    pub fn train_central_step(&mut self, indices: &[usize]) -> Result<f64> {
        self.check_ready()?;
        let lc = &self.config.learning;
        let central = self
            .central
            .as_mut()
            .ok_or_else(|| Error::Usage("central learner exists only in icql mode".into()))?;
        let batch = self.buffer.batch(indices);
        let greedy = decentralized_greedy(&self.agent.online, &batch);
        let targets: Vec<f32> = lambda_targets(
            &central.online,
            &central.target,
            &batch,
            &greedy,
            lc.gamma,
            lc.lambda,
            lc.localmax_iterations,
        )
        .into_iter()
        .map(|g| g as f32)
        .collect();
        let (x, actions) = central_inputs::<f32>(&batch);
        let (loss, grads) = central_loss(&central.online, x.view(), &actions, &targets);
        central.apply(grads, lc.clip());
        Ok(loss as f64)
    }

    /// Replaces both target networks when the episode counter is a multiple
    /// of the sync interval.
    pub fn sync_targets(&mut self) -> bool {
        let interval = self.config.learning.target_sync_interval as u64;
        if self.episodes == 0 || !self.episodes.is_multiple_of(interval) {
            return false;
        }
        self.agent.sync();
        if let Some(c) = self.central.as_mut() {
            c.sync();
        }
        true
    }

    pub fn training_iteration(&mut self) -> Result<IterationStats> {
        let summary = self.sample_episode()?;
        let batch = self.config.learning.batch_size;
        let (mut iql_loss, mut central_loss) = (None, None);
        if self.buffer.len() >= batch {
            let first = self.buffer.sample_indices(batch, &mut self.rng_sample)?;
            iql_loss = Some(self.train_iql_step(&first)?);
            if self.central.is_some() {
                let second = if self.config.learning.shared_batches {
                    first
                } else {
                    self.buffer.sample_indices(batch, &mut self.rng_sample)?
                };
                central_loss = Some(self.train_central_step(&second)?);
            }
        }
        let synced = self.sync_targets();
        Ok(IterationStats {
            episode: self.episodes,
            env_steps: self.env_steps,
            summary,
            iql_loss,
            central_loss,
            synced,
        })
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new();
        ck.set_meta("algorithm", self.config.algorithm.name());
        ck.set_meta("episodes", self.episodes);
        ck.set_meta("env_steps", self.env_steps);
        ck.set_meta("agent_in", self.agent.online.in_dim());
        ck.set_meta("agent_hidden", self.agent.online.hidden());
        ck.add_params("agent", &self.agent.online);
        ck.add_params("agent_target", &self.agent.target);
        if let Some(c) = &self.central {
            ck.set_meta("central_in", c.online.in_dim());
            ck.set_meta("central_hidden", c.online.hidden());
            ck.add_params("central", &c.online);
            ck.add_params("central_target", &c.target);
        }
        ck
    }
}

/// Central-critic features of every agent at a decision point.
fn central_features(net: &CentralNet<f32>, state: &StateFeatures, joint: &JointAction, prev: &JointAction) -> Array2<f32> {
    let n = joint.len();
    let mut x = Array2::<f32>::zeros((n, net.in_dim()));
    for (a, mut row) in x.rows_mut().into_iter().enumerate() {
        write_central_input(state, joint, a, prev[a], row.as_slice_mut().expect("row-major"));
    }
    net.forward(x.view()).1
}

fn intrinsic_bonus(est: &mut Estimator, phi: &Array2<f32>) -> Result<f64> {
    let phi = phi.mapv(f64::from);
    est.update(phi.view())?;
    est.bonus(phi.view())
}

/// Loads the decentralized network written by [`Trainer::to_checkpoint`].
pub fn agent_from_checkpoint(ck: &Checkpoint) -> Result<AgentNet<f32>> {
    let mut net = AgentNet::zeros(ck.meta_usize("agent_in")?, ck.meta_usize("agent_hidden")?, N_ACTIONS);
    ck.load_params("agent", &mut net)?;
    Ok(net)
}
