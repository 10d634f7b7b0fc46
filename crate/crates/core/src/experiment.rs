//! Multi-seed experiment runner, evaluation and metrics persistence.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::{greedy, AgentRuntimes};
use crate::config::Config;
use crate::env::{GridWorld, JointAction, Observation};
use crate::error::{Error, Result};
use crate::learning::{seeded_stream, IterationStats, Trainer, STREAM_EVAL};
use crate::nn::AgentNet;

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

pub const CSV_HEADER: [&str; 14] = [
    "seed",
    "episode",
    "env_steps",
    "controller",
    "train_return",
    "episode_length",
    "iql_loss",
    "central_loss",
    "bonus_mean",
    "bonus_max",
    "bonus_clamps",
    "epsilon",
    "test_return_mean",
    "test_return_stderr",
];

/// One CSV row per training iteration. Optional fields are empty cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub seed: u64,
    pub episode: u64,
    pub env_steps: u64,
    pub controller: String,
    pub train_return: f64,
    pub episode_length: usize,
    pub iql_loss: Option<f64>,
    pub central_loss: Option<f64>,
    pub bonus_mean: f64,
    pub bonus_max: f64,
    pub bonus_clamps: u64,
    pub epsilon: f64,
    pub test_return_mean: Option<f64>,
    pub test_return_stderr: Option<f64>,
}

impl MetricsRow {
    pub fn from_stats(seed: u64, s: &IterationStats, eval: Option<EvalResult>) -> Self {
        MetricsRow {
            seed,
            episode: s.episode,
            env_steps: s.env_steps,
            controller: s.summary.controller.name().to_string(),
            train_return: s.summary.env_return,
            episode_length: s.summary.length,
            iql_loss: s.iql_loss,
            central_loss: s.central_loss,
            bonus_mean: s.summary.bonus_mean,
            bonus_max: s.summary.bonus_max,
            bonus_clamps: s.summary.bonus_clamps,
            epsilon: s.summary.epsilon,
            test_return_mean: eval.map(|e| e.mean),
            test_return_stderr: eval.map(|e| e.stderr),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalResult {
    pub mean: f64,
    pub stderr: f64,
}

/// Mean and standard error of the mean (sample standard deviation); the
/// error is zero for fewer than two values.
pub fn mean_stderr(values: &[f64]) -> EvalResult {
    let n = values.len();
    if n == 0 {
        return EvalResult { mean: 0.0, stderr: 0.0 };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return EvalResult { mean, stderr: 0.0 };
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    EvalResult {
        mean,
        stderr: (var / n as f64).sqrt(),
    }
}

/// Undiscounted return of one episode under `policy`, which maps the
/// current observations to a joint action.
pub fn play_episode<R, P>(env: &GridWorld, rng: &mut R, mut policy: P) -> Result<f64>
where
    R: Rng + ?Sized,
    P: FnMut(&[Observation]) -> JointAction,
{
    let (mut state, mut obs) = env.reset(rng);
    let mut total = 0.0;
    loop {
        let actions = policy(&obs);
        let out = env.step(&mut state, &actions, rng)?;
        total += out.reward;
        if out.terminated || out.truncated {
            return Ok(total);
        }
        obs = out.observations;
    }
}

/// Undiscounted return of one greedy, fully decentralized episode.
pub fn greedy_episode<R: Rng + ?Sized>(net: &AgentNet<f32>, env: &GridWorld, rng: &mut R) -> Result<f64> {
    let mut rt = AgentRuntimes::<f32>::new(env.n_agents(), net.hidden());
    play_episode(env, rng, |obs| {
        let q = rt.observe(net, obs);
        let actions = greedy(q.view());
        rt.commit(&actions);
        actions
    })
}

/// Greedy test evaluation on a parameter snapshot.
pub fn evaluate<R: Rng + ?Sized>(net: &AgentNet<f32>, env: &GridWorld, episodes: usize, rng: &mut R) -> Result<EvalResult> {
    let returns = (0..episodes)
        .map(|_| greedy_episode(net, env, rng))
        .collect::<Result<Vec<_>>>()?;
    Ok(mean_stderr(&returns))
}

fn write_row<W: Write>(w: &mut csv::Writer<W>, row: &MetricsRow) -> Result<()> {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    w.write_record([
        row.seed.to_string(),
        row.episode.to_string(),
        row.env_steps.to_string(),
        row.controller.clone(),
        row.train_return.to_string(),
        row.episode_length.to_string(),
        opt(row.iql_loss),
        opt(row.central_loss),
        row.bonus_mean.to_string(),
        row.bonus_max.to_string(),
        row.bonus_clamps.to_string(),
        row.epsilon.to_string(),
        opt(row.test_return_mean),
        opt(row.test_return_stderr),
    ])?;
    Ok(())
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != CSV_HEADER {
        return Err(Error::Usage(format!("{} does not have the metrics header", path.display())));
    }
    r.deserialize().map(|row| Ok(row?)).collect()
}

pub fn seed_csv_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("seed_{seed}.csv"))
}

fn checkpoint_path(dir: &Path, seed: u64, episode: u64) -> PathBuf {
    dir.join("checkpoints").join(format!("seed_{seed}_ep_{episode}.ckpt"))
}

fn save_checkpoint(trainer: &Trainer, dir: &Path, seed: u64) -> Result<()> {
    let path = checkpoint_path(dir, seed, trainer.episodes());
    fs::create_dir_all(path.parent().expect("checkpoint directory"))?;
    let mut ck = trainer.to_checkpoint();
    ck.set_meta("seed", seed);
    let mut w = BufWriter::new(File::create(path)?);
    ck.write_to(&mut w)?;
    w.flush()?;
    Ok(())
}

/// Trains one seed. Rows are streamed to `dir/seed_<seed>.csv` when a
/// directory is given.
pub fn run_seed(config: &Config, seed: u64, dir: Option<&Path>) -> Result<Vec<MetricsRow>> {
    let mut trainer = Trainer::new(config.clone(), seed)?;
    let eval_env = GridWorld::new(config.env.clone())?;
    let mut eval_rng = seeded_stream(seed, STREAM_EVAL);
    let run = &config.run;
    let mut writer = match dir {
        Some(d) => {
            let mut w = csv::Writer::from_path(seed_csv_path(d, seed))?;
            w.write_record(CSV_HEADER)?;
            w.flush()?;
            Some(w)
        }
        None => None,
    };
    let mut rows = Vec::with_capacity(run.episodes);
    for _ in 0..run.episodes {
        let stats = trainer.training_iteration()?;
        let eval = if run.eval_every > 0 && stats.episode % run.eval_every as u64 == 0 {
            Some(evaluate(&trainer.agent.online, &eval_env, run.eval_episodes, &mut eval_rng)?)
        } else {
            None
        };
        let row = MetricsRow::from_stats(seed, &stats, eval);
        if let Some(w) = writer.as_mut() {
            write_row(w, &row)?;
            if eval.is_some() {
                w.flush()?;
                log::info!(
                    "seed {seed} episode {} test return {:.3}",
                    row.episode,
                    row.test_return_mean.unwrap_or_default()
                );
            }
        }
        rows.push(row);
        if let Some(d) = dir {
            if run.checkpoint_every > 0 && stats.episode % run.checkpoint_every as u64 == 0 {
                save_checkpoint(&trainer, d, seed)?;
            }
        }
    }
    if let Some(mut w) = writer {
        w.flush()?;
    }
    if let Some(d) = dir {
        let last = trainer.episodes();
        if run.checkpoint_every == 0 || last % run.checkpoint_every as u64 != 0 {
            save_checkpoint(&trainer, d, seed)?;
        }
    }
    Ok(rows)
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    code_version: &'a str,
    seeds: &'a [u64],
    config: &'a Config,
}

pub fn manifest_text(config: &Config) -> String {
    toml::to_string(&Manifest {
        code_version: CODE_VERSION,
        seeds: &config.run.seeds,
        config,
    })
    .expect("config serializes")
}

/// Trains every configured seed in parallel under `run.output_dir`, writing
/// one CSV per seed, checkpoints and `manifest.toml`.
pub fn run(config: &Config) -> Result<Vec<Vec<MetricsRow>>> {
    config.validate()?;
    let dir = PathBuf::from(&config.run.output_dir);
    fs::create_dir_all(dir.join("checkpoints"))
        .map_err(|e| Error::Usage(format!("cannot create output directory {}: {e}", dir.display())))?;
    fs::write(dir.join("manifest.toml"), manifest_text(config))?;
    config
        .run
        .seeds
        .par_iter()
        .map(|&seed| run_seed(config, seed, Some(&dir)))
        .collect()
}

/// First episode at which the test return has been at least `threshold`
/// on `consecutive` evaluations in a row.
pub fn episodes_to_threshold(rows: &[MetricsRow], threshold: f64, consecutive: usize) -> Option<u64> {
    let mut streak = 0;
    for r in rows {
        if let Some(m) = r.test_return_mean {
            if m >= threshold {
                streak += 1;
                if streak >= consecutive {
                    return Some(r.episode);
                }
            } else {
                streak = 0;
            }
        }
    }
    None
}

/// Sample standard deviation of the test returns evaluated in the last
/// quarter of training.
pub fn final_quartile_std(rows: &[MetricsRow]) -> f64 {
    let last = rows.last().map_or(0, |r| r.episode);
    let cutoff = last - last / 4;
    let tail: Vec<f64> = rows
        .iter()
        .filter(|r| r.episode > cutoff)
        .filter_map(|r| r.test_return_mean)
        .collect();
    if tail.len() < 2 {
        return 0.0;
    }
    let m = tail.iter().sum::<f64>() / tail.len() as f64;
    (tail.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (tail.len() - 1) as f64).sqrt()
}

/// Median with unreached thresholds ranked above every reached one.
pub fn median_episodes(values: &[Option<u64>]) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().map(|x| x.map_or(f64::INFINITY, |e| e as f64)).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}
