use homodyne_core::engine::{run_ensemble_with, Trajectory};
use homodyne_core::{EnsembleResult, Parallelism, RunConfig, SimParams};
use serde::Serialize;

use crate::args::{Format, RunArgs, SimulateArgs};
use crate::output::{num, sidecar, write_file, Sink};
use crate::Failure;

pub const CSV_HEADER: &str = "step,time,mean_sx,mean_sz,var_sx,var_sz,se_sx,se_sz";
pub const TRAJECTORY_HEADER: &str = "traj,step,time,phi,sx,sz,delta_n,theta";

/// Flag values after config-file merging, in the order they are echoed.
#[derive(Debug, Serialize)]
pub struct EffectiveConfig {
    pub gamma: f64,
    pub tau: f64,
    pub alpha: f64,
    pub policy: String,
    pub sampling: String,
    pub initial: String,
    pub steps: u64,
    pub trajectories: u64,
    pub seed: u64,
}

impl EffectiveConfig {
    pub fn from_args(a: &RunArgs) -> Self {
        EffectiveConfig {
            gamma: a.model.gamma,
            tau: a.model.tau,
            alpha: a.model.alpha,
            policy: a.policy.to_string(),
            sampling: a.sampling.to_string(),
            initial: a.initial.to_string(),
            steps: a.steps,
            trajectories: a.trajectories,
            seed: a.seed,
        }
    }

    /// The `key=value` form accepted by `--config`.
    pub fn to_conf(&self) -> String {
        format!(
            "gamma={}\ntau={}\nalpha={}\npolicy={}\nsampling={}\ninitial={}\nsteps={}\ntrajectories={}\nseed={}\n",
            num(self.gamma),
            num(self.tau),
            num(self.alpha),
            self.policy,
            self.sampling,
            self.initial,
            self.steps,
            self.trajectories,
            self.seed
        )
    }
}

pub fn run_config(a: &RunArgs) -> Result<RunConfig, Failure> {
    let params = SimParams::new(a.model.gamma, a.model.tau, a.model.alpha)?;
    if let Some(w) = params.coupling_warning() {
        eprintln!("warning: {w}");
    }
    let config = RunConfig {
        params,
        policy: a.policy,
        mode: a.sampling,
        initial: a.initial.state(),
        n_steps: a.steps,
        n_trajectories: a.trajectories,
        seed: a.seed,
    };
    config.validate()?;
    Ok(config)
}

pub fn ensemble(config: &RunConfig) -> Result<EnsembleResult, Failure> {
    let parallelism = Parallelism::from_env()?;
    Ok(run_ensemble_with(config, parallelism)?)
}

pub fn run(a: &SimulateArgs) -> Result<(), Failure> {
    let config = run_config(&a.run)?;
    let effective = EffectiveConfig::from_args(&a.run);
    let result = ensemble(&config)?;
    match a.format {
        Format::Csv => {
            write_file(&a.out, &to_csv(&result))?;
            write_file(&sidecar(&a.out, ".conf"), &effective.to_conf())?;
        }
        Format::Json => write_file(&a.out, &to_json(&effective, &result))?,
    }
    if let Some(path) = &a.dump_trajectories {
        dump_trajectories(path, &config)?;
    }
    Ok(())
}

pub fn to_csv(r: &EnsembleResult) -> String {
    let mut out = String::with_capacity(64 * (r.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for k in 0..r.len() {
        let fields = [r.time[k], r.mean_sx[k], r.mean_sz[k], r.var_sx[k], r.var_sz[k], r.stderr_sx[k], r.stderr_sz[k]];
        out.push_str(&k.to_string());
        for v in fields {
            out.push(',');
            out.push_str(&num(v));
        }
        out.push('\n');
    }
    out
}

#[derive(Serialize)]
struct JsonOutput<'a> {
    config: &'a EffectiveConfig,
    step: Vec<usize>,
    time: &'a [f64],
    mean_sx: &'a [f64],
    mean_sz: &'a [f64],
    var_sx: &'a [f64],
    var_sz: &'a [f64],
    se_sx: &'a [f64],
    se_sz: &'a [f64],
}

pub fn to_json(config: &EffectiveConfig, r: &EnsembleResult) -> String {
    let doc = JsonOutput {
        config,
        step: (0..r.len()).collect(),
        time: &r.time,
        mean_sx: &r.mean_sx,
        mean_sz: &r.mean_sz,
        var_sx: &r.var_sx,
        var_sz: &r.var_sz,
        se_sx: &r.stderr_sx,
        se_sz: &r.stderr_sz,
    };
    let mut text = serde_json::to_string_pretty(&doc).expect("serializable output");
    text.push('\n');
    text
}

/// Every step of every trajectory, regenerated from the same streams as the
/// ensemble. Row `step` is the state after that many steps.
fn dump_trajectories(path: &std::path::Path, config: &RunConfig) -> Result<(), Failure> {
    let mut sink = Sink::create(path)?;
    sink.line(TRAJECTORY_HEADER)?;
    let tau = config.params.tau();
    for traj in 0..config.n_trajectories {
        for r in Trajectory::new(config, traj) {
            let step = r.step_index + 1;
            let s = r.state_after;
            sink.line(&format!(
                "{traj},{step},{},{},{},{},{},{}",
                num(step as f64 * tau),
                num(s.phi()),
                num(s.s_x()),
                num(s.s_z()),
                num(r.delta_n),
                num(r.theta)
            ))?;
        }
    }
    sink.finish()
}
