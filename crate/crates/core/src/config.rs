//! Experiment configuration.
//!
//! Every field has a default so that an empty TOML document resolves to the
//! reference setup: a 41x10 grid with four predators, RMSprop at 5e-4,
//! discount 0.99, 32-episode batches from a 200-episode buffer, target
//! networks synchronised every 200 episodes, epsilon decayed from 1 to 0.05
//! over 20k steps and an intrinsic bonus with magnitude 1, decay 2e-4 and
//! constant bias 0.01.
//!
//! Unknown keys are rejected at every level.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which learners run and who controls the episodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    /// Decentralized agents only, environment reward only.
    Iql,
    /// Decentralized agents only, environment reward plus a bonus computed
    /// from the agents' own recurrent features.
    IqlIntrinsic,
    /// Decentralized agents and an intrinsically rewarded central critic
    /// share control and the replay buffer.
    Icql,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Iql => "iql",
            Algorithm::IqlIntrinsic => "iql_intrinsic",
            Algorithm::Icql => "icql",
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "iql" => Ok(Algorithm::Iql),
            "iql_intrinsic" | "iql-intrinsic" => Ok(Algorithm::IqlIntrinsic),
            "icql" => Ok(Algorithm::Icql),
            other => Err(Error::Config(format!("unknown algorithm `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub height: usize,
    pub width: usize,
    pub n_agents: usize,
    pub episode_limit: usize,
    /// Probability that an `Up` (agents, valley prey) or `Down` (mountain
    /// prey) move is not executed.
    pub slip_prob: f64,
    pub valley_reward: f64,
    pub mountain_reward: f64,
    /// Observation window half-width; the window is `(2r+1) x (2r+1)`.
    pub obs_radius: usize,
    /// Spawn the mountain prey. Disabling it leaves a single valley prey.
    pub mountain_prey: bool,
    /// Prey draw a uniform random action every step; when false they stay put.
    pub prey_moves: bool,
    /// Pin the valley prey's spawn column instead of drawing it uniformly.
    pub valley_spawn_col: Option<usize>,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            height: 41,
            width: 10,
            n_agents: 4,
            episode_limit: 100,
            slip_prob: 0.5,
            valley_reward: 5.0,
            mountain_reward: 10.0,
            obs_radius: 2,
            mountain_prey: true,
            prey_moves: true,
            valley_spawn_col: None,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_agents == 0 {
            return Err(Error::Config("env.n_agents must be at least 1".into()));
        }
        if self.mountain_prey && self.height < 3 {
            return Err(Error::Config(format!(
                "env.height = {} but at least 3 rows are needed to separate valley, agents and mountain",
                self.height
            )));
        }
        if self.height == 0 {
            return Err(Error::Config("env.height must be positive".into()));
        }
        // Agents share the valley row on grids with fewer than three rows.
        let agent_slots = if self.height / 2 == 0 {
            self.width.saturating_sub(1)
        } else {
            self.width
        };
        if agent_slots < self.n_agents {
            return Err(Error::Config(format!(
                "env.width = {} cannot place {} agents on distinct cells",
                self.width, self.n_agents
            )));
        }
        if let Some(col) = self.valley_spawn_col {
            if col >= self.width {
                return Err(Error::Config(format!(
                    "env.valley_spawn_col = {col} outside width {}",
                    self.width
                )));
            }
        }
        if self.episode_limit == 0 {
            return Err(Error::Config("env.episode_limit must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.slip_prob) {
            return Err(Error::Config(format!(
                "env.slip_prob = {} outside [0, 1]",
                self.slip_prob
            )));
        }
        Ok(())
    }

    pub fn n_prey(&self) -> usize {
        if self.mountain_prey {
            2
        } else {
            1
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearningConfig {
    pub lr: f64,
    pub gamma: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    /// Target networks are replaced every this many episodes.
    pub target_sync_interval: usize,
    pub lambda: f64,
    pub localmax_iterations: usize,
    /// RMSprop smoothing constant.
    pub rms_alpha: f64,
    pub rms_eps: f64,
    /// Global gradient-norm clip applied before each optimizer step; 0 disables it.
    pub grad_clip: f64,
    pub agent_hidden: usize,
    pub central_hidden: usize,
    /// Probability that the central controller runs an episode (ICQL only).
    pub central_control_prob: f64,
    /// Train both learners on the same sampled mini-batch.
    pub shared_batches: bool,
}

impl Default for LearningConfig {
    fn default() -> Self {
        Self {
            lr: 0.0005,
            gamma: 0.99,
            batch_size: 32,
            buffer_capacity: 200,
            target_sync_interval: 200,
            lambda: 0.8,
            localmax_iterations: 1,
            rms_alpha: 0.99,
            rms_eps: 1e-5,
            grad_clip: 10.0,
            agent_hidden: 64,
            central_hidden: 128,
            central_control_prob: 0.5,
            shared_batches: false,
        }
    }
}

impl LearningConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::Config(format!("learning.{name} = {v} outside [0, 1]")))
            }
        };
        unit("gamma", self.gamma)?;
        unit("lambda", self.lambda)?;
        unit("central_control_prob", self.central_control_prob)?;
        if !(self.lr > 0.0) {
            return Err(Error::Config(format!("learning.lr = {} must be positive", self.lr)));
        }
        if self.batch_size == 0 || self.batch_size > self.buffer_capacity {
            return Err(Error::Config(format!(
                "learning.batch_size = {} must be in 1..=buffer_capacity ({})",
                self.batch_size, self.buffer_capacity
            )));
        }
        if self.target_sync_interval == 0 {
            return Err(Error::Config("learning.target_sync_interval must be positive".into()));
        }
        if self.localmax_iterations == 0 {
            return Err(Error::Config("learning.localmax_iterations must be at least 1".into()));
        }
        if self.agent_hidden == 0 || self.central_hidden == 0 {
            return Err(Error::Config("hidden layer widths must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.rms_alpha) || !(self.rms_eps > 0.0) {
            return Err(Error::Config("learning.rms_alpha must be in [0, 1) and rms_eps > 0".into()));
        }
        if !(self.grad_clip >= 0.0 && self.grad_clip.is_finite()) {
            return Err(Error::Config(format!(
                "learning.grad_clip = {} must be finite and >= 0",
                self.grad_clip
            )));
        }
        Ok(())
    }

    pub fn clip(&self) -> Option<f64> {
        (self.grad_clip > 0.0).then_some(self.grad_clip)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplorationConfig {
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Environment steps over which epsilon decays linearly.
    pub epsilon_horizon: u64,
    /// Apply the epsilon-greedy overlay to the central controller as well.
    pub central_epsilon: bool,
}

impl Default for ExplorationConfig {
    fn default() -> Self {
        Self {
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_horizon: 20_000,
            central_epsilon: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BiasMode {
    Constant,
    /// Exponential average of past uncertainties, decayed with `alpha`.
    RunningAverage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntrinsicConfig {
    pub sigma: f64,
    pub alpha: f64,
    pub bias: f64,
    pub reg: f64,
    pub bias_mode: BiasMode,
}

impl Default for IntrinsicConfig {
    fn default() -> Self {
        Self {
            sigma: 1.0,
            alpha: 0.0002,
            bias: 0.01,
            reg: 1e-4,
            bias_mode: BiasMode::Constant,
        }
    }
}

impl IntrinsicConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0) {
            return Err(Error::Config(format!("intrinsic.sigma = {} must be >= 0", self.sigma)));
        }
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("intrinsic.alpha = {} outside [0, 1)", self.alpha)));
        }
        if !(self.bias >= 0.0) {
            return Err(Error::Config(format!("intrinsic.bias = {} must be >= 0", self.bias)));
        }
        if !(self.reg > 0.0) {
            return Err(Error::Config(format!("intrinsic.reg = {} must be > 0", self.reg)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seeds: Vec<u64>,
    pub episodes: usize,
    pub eval_every: usize,
    pub eval_episodes: usize,
    /// Write a checkpoint every this many episodes; 0 writes only the final one.
    pub checkpoint_every: usize,
    pub output_dir: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seeds: (0..8).collect(),
            episodes: 20_000,
            eval_every: 200,
            eval_episodes: 20,
            checkpoint_every: 1000,
            output_dir: "runs".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub algorithm: Algorithm,
    pub env: EnvConfig,
    pub learning: LearningConfig,
    pub exploration: ExplorationConfig,
    pub intrinsic: IntrinsicConfig,
    pub run: RunConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Icql,
            env: EnvConfig::default(),
            learning: LearningConfig::default(),
            exploration: ExplorationConfig::default(),
            intrinsic: IntrinsicConfig::default(),
            run: RunConfig::default(),
        }
    }
}

impl Config {
    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.learning.validate()?;
        self.intrinsic.validate()?;
        let e = &self.exploration;
        if !(0.0..=1.0).contains(&e.epsilon_start) || !(0.0..=1.0).contains(&e.epsilon_end) {
            return Err(Error::Config("exploration epsilons must lie in [0, 1]".into()));
        }
        if self.run.eval_every == 0 {
            return Err(Error::Config("run.eval_every must be positive".into()));
        }
        Ok(())
    }

    /// Parses a TOML document on top of the defaults.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config always serializes")
    }
}
