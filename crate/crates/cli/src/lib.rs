//! Command implementations behind the `icql` binary.

pub mod plot;
pub mod settings;

use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use icql_core::agents::agent_input_dim;
use icql_core::experiment::{self, EvalResult};
use icql_core::learning::{agent_from_checkpoint, seeded_stream, STREAM_EVAL};
use icql_core::nn::checkpoint::Checkpoint;
use icql_core::{Config, GridWorld, MetricsRow};

/// Trains every configured seed and returns the rows per seed.
pub fn run(config: &Config) -> Result<Vec<Vec<MetricsRow>>> {
    log::info!(
        "training {} on {} seeds for {} episodes into {}",
        config.algorithm.name(),
        config.run.seeds.len(),
        config.run.episodes,
        config.run.output_dir
    );
    Ok(experiment::run(config)?)
}

/// The manifest of the run a checkpoint belongs to, if it sits in the
/// usual `<run>/checkpoints/` layout.
pub fn manifest_for(checkpoint: &Path) -> Option<PathBuf> {
    let p = checkpoint.parent()?.parent()?.join("manifest.toml");
    p.exists().then_some(p)
}

/// Greedy decentralized evaluation of a checkpoint's agent network.
pub fn eval(checkpoint: &Path, config: &Config, episodes: usize, seed: u64) -> Result<EvalResult> {
    let file = std::fs::File::open(checkpoint).with_context(|| format!("opening {}", checkpoint.display()))?;
    let ck = Checkpoint::read_from(BufReader::new(file))?;
    let net = agent_from_checkpoint(&ck)?;
    let env = GridWorld::new(config.env.clone())?;
    let expected = agent_input_dim(env.obs_len(), env.n_agents());
    if net.in_dim() != expected {
        bail!(
            "checkpoint expects {} inputs per agent but the configured environment produces {expected}",
            net.in_dim()
        );
    }
    let mut rng = seeded_stream(seed, STREAM_EVAL);
    Ok(experiment::evaluate(&net, &env, episodes, &mut rng)?)
}
