//! Time stepping, single trajectories and reproducible ensembles.
//!
//! Every trajectory owns a random stream derived from `(seed, index)` alone,
//! so a run is reproducible independently of how trajectories are scheduled.
//! Ensemble moments are accumulated over fixed blocks of consecutive
//! trajectories and the blocks are merged in index order; the result is
//! bit-identical for any number of worker threads.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::analysis::{EnsembleResult, StepMoments};
use crate::error::{invalid, Result};
use crate::feedback::{FeedbackPolicy, MAX_CUSTOM_GAIN};
use crate::measurement::{sample_record, SamplingMode};
use crate::state::{apply_rotation, rotation_angle, BlochState, SimParams};

/// Per-trajectory random stream.
pub type Stream = ChaCha8Rng;

/// Trajectories per accumulation block. Fixed so that the reduction tree
/// never depends on the thread count.
pub const BLOCK_SIZE: usize = 64;
/// Blocks evaluated between sequential merges; bounds peak memory.
const BLOCKS_PER_WAVE: usize = 256;

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "SIM_THREADS";

/// Counter-based stream derivation: the ChaCha key comes from `seed` and the
/// stream id is `trajectory_index`. No stream is split from another.
pub fn derive_stream(seed: u64, trajectory_index: u64) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trajectory_index);
    rng
}

/// The part of a run configuration needed to take one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Dynamics {
    pub params: SimParams,
    pub policy: FeedbackPolicy,
    pub mode: SamplingMode,
}

impl Dynamics {
    pub fn new(params: SimParams, policy: FeedbackPolicy, mode: SamplingMode) -> Self {
        Dynamics {
            params,
            policy,
            mode,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepRecord {
    pub step_index: u64,
    pub delta_n: f64,
    pub theta: f64,
    pub state_after: BlochState,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RunConfig {
    pub params: SimParams,
    pub policy: FeedbackPolicy,
    pub mode: SamplingMode,
    pub initial: BlochState,
    pub n_steps: u64,
    pub n_trajectories: u64,
    pub seed: u64,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trajectories == 0 {
            return Err(invalid("n_trajectories must be >= 1"));
        }
        if !(self.n_steps as f64 * self.params.tau()).is_finite() {
            return Err(invalid("n_steps * tau is not finite"));
        }
        if let FeedbackPolicy::Custom(g) = self.policy {
            if !g.is_finite() || g.abs() > MAX_CUSTOM_GAIN {
                return Err(invalid(format!("custom gain {g} out of range")));
            }
        }
        Ok(())
    }

    pub fn dynamics(&self) -> Dynamics {
        Dynamics::new(self.params, self.policy, self.mode)
    }
}

/// One measurement-and-feedback step from `state`.
pub fn step(
    state: BlochState,
    dynamics: &Dynamics,
    step_index: u64,
    rng: &mut Stream,
) -> (BlochState, StepRecord) {
    let record = sample_record(state, &dynamics.params, dynamics.mode, rng);
    let theta = rotation_angle(
        state.s_z(),
        record.delta_n,
        &dynamics.params,
        dynamics.policy.gain(),
    );
    let next = apply_rotation(state, theta);
    (
        next,
        StepRecord {
            step_index,
            delta_n: record.delta_n,
            theta,
            state_after: next,
        },
    )
}

/// Lazily generated trajectory.
#[derive(Debug, Clone)]
pub struct Trajectory {
    dynamics: Dynamics,
    state: BlochState,
    rng: Stream,
    next_index: u64,
    n_steps: u64,
}

impl Trajectory {
    pub fn new(config: &RunConfig, trajectory_index: u64) -> Self {
        Trajectory {
            dynamics: config.dynamics(),
            state: config.initial,
            rng: derive_stream(config.seed, trajectory_index),
            next_index: 0,
            n_steps: config.n_steps,
        }
    }

    pub fn state(&self) -> BlochState {
        self.state
    }
}

impl Iterator for Trajectory {
    type Item = StepRecord;

    fn next(&mut self) -> Option<StepRecord> {
        if self.next_index >= self.n_steps {
            return None;
        }
        let (state, record) = step(self.state, &self.dynamics, self.next_index, &mut self.rng);
        self.state = state;
        self.next_index += 1;
        Some(record)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let left = (self.n_steps - self.next_index) as usize;
        (left, Some(left))
    }
}

pub fn run_trajectory(config: &RunConfig, trajectory_index: u64) -> Result<Vec<StepRecord>> {
    config.validate()?;
    Ok(Trajectory::new(config, trajectory_index).collect())
}

/// How ensemble work is scheduled. Results never depend on the choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Parallelism {
    Sequential,
    /// Dedicated pool with this many workers.
    Threads(usize),
    /// Global pool, or [`THREADS_ENV`] when set.
    #[default]
    Auto,
}

impl Parallelism {
    /// Reads [`THREADS_ENV`]; absent means [`Parallelism::Auto`].
    pub fn from_env() -> Result<Self> {
        match std::env::var(THREADS_ENV) {
            Ok(v) => match v.trim().parse::<usize>() {
                Ok(n) if n > 0 => Ok(Parallelism::Threads(n)),
                _ => Err(invalid(format!(
                    "{THREADS_ENV} must be a positive integer, got {v:?}"
                ))),
            },
            Err(_) => Ok(Parallelism::Auto),
        }
    }
}

pub fn run_ensemble(config: &RunConfig) -> Result<EnsembleResult> {
    run_ensemble_with(config, Parallelism::from_env()?)
}

pub fn run_ensemble_with(config: &RunConfig, parallelism: Parallelism) -> Result<EnsembleResult> {
    config.validate()?;
    let n_rows = config.n_steps as usize + 1;
    let n_blocks = (config.n_trajectories as usize).div_ceil(BLOCK_SIZE);

    let mut total = StepMoments::new(n_rows);
    let mut start = 0;
    while start < n_blocks {
        let end = (start + BLOCKS_PER_WAVE).min(n_blocks);
        let wave = map_blocks(start..end, parallelism, |b| accumulate_block(config, b))?;
        for block in &wave {
            total.merge(block);
        }
        start = end;
    }
    Ok(total.finish(config.params.tau(), Some(*config)))
}

fn accumulate_block(config: &RunConfig, block: usize) -> StepMoments {
    let n_rows = config.n_steps as usize + 1;
    let first = (block * BLOCK_SIZE) as u64;
    let last = (first + BLOCK_SIZE as u64).min(config.n_trajectories);
    let mut moments = StepMoments::new(n_rows);
    for index in first..last {
        moments.push(0, config.initial);
        for record in Trajectory::new(config, index) {
            moments.push(record.step_index as usize + 1, record.state_after);
        }
    }
    moments
}

/// Draws `n_trajectories` independent single steps from `config.initial`
/// (the state is reset before every draw). Record `i` comes from stream `i`.
pub fn one_step_records(config: &RunConfig, parallelism: Parallelism) -> Result<Vec<StepRecord>> {
    config.validate()?;
    let single = RunConfig {
        n_steps: 1,
        ..*config
    };
    let n = config.n_trajectories as usize;
    let blocks = map_blocks(0..n.div_ceil(BLOCK_SIZE), parallelism, |b| {
        let first = b * BLOCK_SIZE;
        let last = (first + BLOCK_SIZE).min(n);
        (first..last)
            .filter_map(|i| Trajectory::new(&single, i as u64).next())
            .collect::<Vec<_>>()
    })?;
    Ok(blocks.into_iter().flatten().collect())
}

#[cfg(feature = "parallel")]
fn map_blocks<T, F>(
    blocks: std::ops::Range<usize>,
    parallelism: Parallelism,
    f: F,
) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    match parallelism {
        Parallelism::Sequential => Ok(blocks.map(f).collect()),
        Parallelism::Auto => Ok(blocks.into_par_iter().map(f).collect()),
        Parallelism::Threads(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| invalid(format!("cannot build thread pool: {e}")))?;
            Ok(pool.install(|| blocks.into_par_iter().map(f).collect()))
        }
    }
}

#[cfg(not(feature = "parallel"))]
fn map_blocks<T, F>(
    blocks: std::ops::Range<usize>,
    _parallelism: Parallelism,
    f: F,
) -> Result<Vec<T>>
where
    F: Fn(usize) -> T,
{
    Ok(blocks.map(f).collect())
}
