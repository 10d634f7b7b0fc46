//! Fixtures shared by the benchmarks.

use icql_core::{Algorithm, Config};

/// The full-size environment with networks at their default widths and a
/// short run, so a trainer can be built and warmed up quickly.
pub fn bench_config(algorithm: Algorithm) -> Config {
    let mut c = Config { algorithm, ..Config::default() };
    c.run.seeds = vec![0];
    c.run.episodes = 1000;
    c
}

/// A trainer whose buffer already holds one batch of episodes.
pub fn warm_trainer(algorithm: Algorithm) -> icql_core::Trainer {
    let config = bench_config(algorithm);
    let mut t = icql_core::Trainer::new(config, 0).expect("valid bench config");
    while t.buffer.len() < t.config().learning.batch_size {
        t.sample_episode().expect("sampling");
    }
    t
}
