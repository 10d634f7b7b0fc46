//! Action selection for the decentralized agents and the central controller.

use ndarray::{Array2, ArrayView2};
use rand::Rng;

use crate::config::ExplorationConfig;
use crate::env::{Action, JointAction, Observation, StateFeatures, N_ACTIONS};
use crate::nn::{argmax, AgentNet, CentralNet, Real};

/// Linear decay from `start` to `end` over `horizon` environment steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub horizon: u64,
}

impl EpsilonSchedule {
    pub fn from_config(cfg: &ExplorationConfig) -> Self {
        EpsilonSchedule {
            start: cfg.epsilon_start,
            end: cfg.epsilon_end,
            horizon: cfg.epsilon_horizon,
        }
    }

    pub fn value(&self, step: u64) -> f64 {
        if step >= self.horizon {
            return self.end;
        }
        let frac = step as f64 / self.horizon as f64;
        (self.start - (self.start - self.end) * frac).max(self.end)
    }
}

pub fn agent_input_dim(obs_len: usize, n_agents: usize) -> usize {
    obs_len + N_ACTIONS + n_agents
}

pub fn central_input_dim(state_len: usize, n_agents: usize) -> usize {
    state_len + (n_agents - 1) * N_ACTIONS + N_ACTIONS + n_agents
}

/// `[observation | one-hot last action (zeros at t = 0) | one-hot agent id]`
pub fn write_agent_input<F: Real>(obs: &Observation, last: Option<Action>, agent: usize, n_agents: usize, out: &mut [F]) {
    let m = obs.data.len();
    debug_assert_eq!(out.len(), agent_input_dim(m, n_agents));
    for (o, &v) in out[..m].iter_mut().zip(&obs.data) {
        *o = F::from_f64_lossy(v as f64);
    }
    for o in &mut out[m..] {
        *o = F::zero();
    }
    if let Some(a) = last {
        out[m + a.index()] = F::one();
    }
    out[m + N_ACTIONS + agent] = F::one();
}

/// `[state | one-hot actions of the other agents in id order | one-hot own
/// previous action | one-hot agent id]`
pub fn write_central_input<F: Real>(
    state: &StateFeatures,
    joint: &JointAction,
    agent: usize,
    prev_own: Action,
    out: &mut [F],
) {
    let n = joint.len();
    let m = state.0.len();
    debug_assert_eq!(out.len(), central_input_dim(m, n));
    for (o, &v) in out[..m].iter_mut().zip(&state.0) {
        *o = F::from_f64_lossy(v as f64);
    }
    for o in &mut out[m..] {
        *o = F::zero();
    }
    let mut slot = 0;
    for (b, &u) in joint.0.iter().enumerate() {
        if b == agent {
            continue;
        }
        out[m + slot * N_ACTIONS + u.index()] = F::one();
        slot += 1;
    }
    let base = m + (n - 1) * N_ACTIONS;
    out[base + prev_own.index()] = F::one();
    out[base + N_ACTIONS + agent] = F::one();
}

/// Recurrent state of every decentralized agent during an episode.
#[derive(Debug, Clone)]
pub struct AgentRuntimes<F> {
    hidden: Array2<F>,
    last: Vec<Option<Action>>,
}

impl<F: Real> AgentRuntimes<F> {
    pub fn new(n_agents: usize, hidden: usize) -> Self {
        AgentRuntimes {
            hidden: Array2::zeros((n_agents, hidden)),
            last: vec![None; n_agents],
        }
    }

    pub fn n_agents(&self) -> usize {
        self.last.len()
    }

    pub fn hidden(&self) -> ArrayView2<'_, F> {
        self.hidden.view()
    }

    pub fn last_actions(&self) -> &[Option<Action>] {
        &self.last
    }

    /// Feeds the current observations through the shared network, advancing
    /// every hidden state. Returns Q-values `[n, A]`.
    pub fn observe(&mut self, net: &AgentNet<F>, observations: &[Observation]) -> Array2<F> {
        let n = self.n_agents();
        let dim = net.in_dim();
        let mut x = Array2::<F>::zeros((n, dim));
        for (a, (obs, mut row)) in observations.iter().zip(x.rows_mut()).enumerate() {
            write_agent_input(obs, self.last[a], a, n, row.as_slice_mut().expect("row-major"));
        }
        let (q, h) = net.step(self.hidden.view(), x.view());
        self.hidden = h;
        q
    }

    /// Records the actions that were actually executed this step.
    pub fn commit(&mut self, executed: &JointAction) {
        for (l, &a) in self.last.iter_mut().zip(&executed.0) {
            *l = Some(a);
        }
    }
}

pub fn greedy<F: Real>(q: ArrayView2<'_, F>) -> JointAction {
    JointAction(q.rows().into_iter().map(|r| Action::from_index(argmax(r.iter().copied()))).collect())
}

/// Independently replaces each agent's action by a uniform one with probability `epsilon`.
pub fn epsilon_overlay<R: Rng + ?Sized>(joint: &JointAction, epsilon: f64, rng: &mut R) -> JointAction {
    JointAction(
        joint
            .0
            .iter()
            .map(|&a| if rng.gen_bool(epsilon) { Action::random(rng) } else { a })
            .collect(),
    )
}

#[derive(Debug, Clone)]
pub struct DecentralizedStep<F> {
    pub actions: JointAction,
    pub greedy: JointAction,
    pub q: Array2<F>,
    /// Post-update hidden states, one row per agent.
    pub features: Array2<F>,
}

/// Epsilon-greedy decentralized choice. Advances the runtimes' hidden states
/// but leaves the last-action record to [`AgentRuntimes::commit`].
pub fn decentralized_act<F: Real, R: Rng + ?Sized>(
    net: &AgentNet<F>,
    runtimes: &mut AgentRuntimes<F>,
    observations: &[Observation],
    epsilon: f64,
    rng: &mut R,
) -> DecentralizedStep<F> {
    let q = runtimes.observe(net, observations);
    let greedy = greedy(q.view());
    let actions = epsilon_overlay(&greedy, epsilon, rng);
    DecentralizedStep {
        actions,
        greedy,
        q,
        features: runtimes.hidden.clone(),
    }
}

/// A joint action-value function with one head per action of the acting agent.
pub trait JointCritic {
    fn n_agents(&self) -> usize;

    /// Values of `agent`'s actions for every row, with the other agents fixed
    /// at that row's joint action.
    fn agent_values(&self, agent: usize, joints: &[JointAction]) -> Vec<[f64; N_ACTIONS]>;
}

/// Coordinate ascent on a joint critic. Each sweep visits agents in id order
/// and replaces the agent's action by its best response to the current
/// joint action; replacements are visible to later agents in the sweep.
pub fn localmax_batch<C: JointCritic + ?Sized>(
    critic: &C,
    mut joints: Vec<JointAction>,
    iterations: usize,
) -> Vec<JointAction> {
    for _ in 0..iterations {
        for a in 0..critic.n_agents() {
            let values = critic.agent_values(a, &joints);
            for (joint, v) in joints.iter_mut().zip(values) {
                joint[a] = Action::from_index(argmax(v));
            }
        }
    }
    joints
}

pub fn localmax<C: JointCritic + ?Sized>(critic: &C, init: JointAction, iterations: usize) -> JointAction {
    localmax_batch(critic, vec![init], iterations).pop().expect("one row")
}

/// The central network viewed as a [`JointCritic`] over a batch of states.
pub struct CentralCritic<'a, F> {
    pub net: &'a CentralNet<F>,
    pub states: &'a [&'a StateFeatures],
    /// Executed joint action of the previous step, per row.
    pub prev: &'a [JointAction],
}

impl<F: Real> CentralCritic<'_, F> {
    pub fn inputs(&self, agent: usize, joints: &[JointAction]) -> Array2<F> {
        let n = self.prev.first().map_or(0, |p| p.len());
        let dim = self.net.in_dim();
        let mut x = Array2::<F>::zeros((joints.len(), dim));
        for (i, mut row) in x.rows_mut().into_iter().enumerate() {
            debug_assert_eq!(joints[i].len(), n);
            write_central_input(
                self.states[i],
                &joints[i],
                agent,
                self.prev[i][agent],
                row.as_slice_mut().expect("row-major"),
            );
        }
        x
    }
}

impl<F: Real> JointCritic for CentralCritic<'_, F> {
    fn n_agents(&self) -> usize {
        self.prev.first().map_or(0, |p| p.len())
    }

    fn agent_values(&self, agent: usize, joints: &[JointAction]) -> Vec<[f64; N_ACTIONS]> {
        let q = self.net.q_values(self.inputs(agent, joints).view());
        q.rows()
            .into_iter()
            .map(|r| std::array::from_fn(|k| r[k].as_f64()))
            .collect()
    }
}

/// Central controller: local maximisation started from the decentralized
/// greedy joint action, then an optional epsilon-greedy overlay.
pub fn central_act<F: Real, R: Rng + ?Sized>(
    net: &CentralNet<F>,
    state: &StateFeatures,
    decentralized_greedy: &JointAction,
    prev_joint: &JointAction,
    iterations: usize,
    epsilon: f64,
    rng: &mut R,
) -> JointAction {
    let states = [state];
    let critic = CentralCritic {
        net,
        states: &states,
        prev: std::slice::from_ref(prev_joint),
    };
    let joint = localmax(&critic, decentralized_greedy.clone(), iterations);
    epsilon_overlay(&joint, epsilon, rng)
}
