//! Acceptance checks with pinned seeds and tolerances.
//!
//! Each check returns a [`CheckOutcome`]; [`run_all`] collects them into a
//! [`Report`] whose rendering is deterministic. The `compensation_gain`
//! option replaces the gain used wherever the compensation scenario is
//! exercised, so a perturbed gain can be shown to fail the suite.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, PI};
use std::fmt::Write as _;

use num_complex::Complex64;

use crate::analysis::{drift_field, estimate_diffusion, Moments};
use crate::engine::{one_step_records, run_ensemble_with, Parallelism, RunConfig, Trajectory};
use crate::feedback::FeedbackPolicy;
use crate::measurement::{bayes_dipole_update, SamplingMode};
use crate::oracle::{auto_cutoff, delta_n_pmf, gaussian_distance, skellam_pmf, SourceSpec};
use crate::state::{apply_rotation, rotation_angle, BlochState, SimParams};

pub const FIXED_POINT_STEPS: u64 = 100_000;
pub const FIXED_POINT_TOL: f64 = 1e-12;
pub const DRIFT_SAMPLES: u64 = 1_000_000;
pub const DRIFT_SIGMAS: f64 = 3.0;
pub const DIFFUSION_SAMPLES: u64 = 1_000_000;
pub const DIFFUSION_REL_TOL: f64 = 0.02;
pub const WEAK_COUPLINGS: [f64; 3] = [1e-2, 1e-3, 1e-4];
pub const WEAK_DIFF_RATIO: (f64, f64) = (5.0, 20.0);
pub const WEAK_UPDATE_RATIO: (f64, f64) = (2.5, 4.0);
pub const SKELLAM_TOL: f64 = 1e-10;
pub const QUBIT_MEAN_TOL: f64 = 1e-8;
pub const TV_BOUND: f64 = 0.02;
pub const PURITY_STEPS: u64 = 1_000_000;
pub const PURITY_TOL: f64 = 1e-12;
pub const DETERMINISM_THREADS: [usize; 3] = [1, 2, 8];
pub const DRIFT_GRID: usize = 16;
pub const DECAY_TRAJECTORIES: u64 = 10_000;
pub const DECAY_EARLY: (f64, f64) = (0.3, 0.05);
pub const DECAY_LATE: (f64, f64) = (1.0, 0.15);

const COUPLING: f64 = 1e-3;
const ALPHA: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidationOptions {
    /// Gain used for the compensation scenario; 1 unless perturbed.
    pub compensation_gain: f64,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        ValidationOptions {
            compensation_gain: 1.0,
        }
    }
}

impl ValidationOptions {
    fn compensation(&self) -> FeedbackPolicy {
        if self.compensation_gain == 1.0 {
            FeedbackPolicy::Compensation
        } else {
            FeedbackPolicy::Custom(self.compensation_gain)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    /// Non-gating checks are reported but do not affect the exit status.
    pub gating: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub outcomes: Vec<CheckOutcome>,
}

impl Report {
    pub fn all_passed(&self) -> bool {
        self.outcomes.iter().filter(|o| o.gating).all(|o| o.passed)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for o in &self.outcomes {
            let status = match (o.passed, o.gating) {
                (true, _) => "PASS",
                (false, true) => "FAIL",
                (false, false) => "WARN",
            };
            let _ = writeln!(out, "[{status}] {:>2} {:<28} {}", o.id, o.name, o.detail);
        }
        let gating = self.outcomes.iter().filter(|o| o.gating).count();
        let passed = self.outcomes.iter().filter(|o| o.gating && o.passed).count();
        let _ = writeln!(out, "{passed}/{gating} gating checks passed");
        out
    }
}

pub type Check = fn(&ValidationOptions) -> CheckOutcome;

pub const CHECKS: [Check; 9] = [
    fixed_points,
    drift_anchors,
    diffusion_law,
    weak_measurement,
    oracle_exactness,
    gaussian_limit,
    purity_and_determinism,
    drift_field_pattern,
    decay_characterization,
];

pub fn run_all(options: &ValidationOptions) -> Report {
    Report {
        outcomes: CHECKS.iter().map(|check| check(options)).collect(),
    }
}

fn params() -> SimParams {
    SimParams::with_coupling(COUPLING, ALPHA).expect("valid validation parameters")
}

fn base_config(policy: FeedbackPolicy, initial: BlochState, n_steps: u64, n_trajectories: u64, seed: u64) -> RunConfig {
    RunConfig {
        params: params(),
        policy,
        mode: SamplingMode::Conditional,
        initial,
        n_steps,
        n_trajectories,
        seed,
    }
}

fn outcome(id: u8, name: &'static str, passed: bool, detail: String) -> CheckOutcome {
    CheckOutcome {
        id,
        name,
        passed,
        gating: true,
        detail,
    }
}

fn angular_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(2.0 * PI);
    d.min(2.0 * PI - d)
}

/// Stationary states stay put under random records.
pub fn fixed_points(options: &ValidationOptions) -> CheckOutcome {
    let cases = [
        ("g=0 ground", FeedbackPolicy::NoFeedback, BlochState::GROUND),
        ("g=1 dipole+", options.compensation(), BlochState::DIPOLE_PLUS),
        ("g=1 dipole-", options.compensation(), BlochState::DIPOLE_MINUS),
        ("g=2 excited", FeedbackPolicy::Inversion, BlochState::EXCITED),
    ];
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for (i, (label, policy, state)) in cases.into_iter().enumerate() {
        let config = base_config(policy, state, FIXED_POINT_STEPS, 1, 101 + i as u64);
        let drift = Trajectory::new(&config, 0)
            .map(|r| angular_distance(r.state_after.phi(), state.phi()))
            .fold(0.0, f64::max);
        worst = worst.max(drift);
        parts.push(format!("{label}:{drift:.1e}"));
    }
    outcome(
        1,
        "fixed-point exactness",
        worst <= FIXED_POINT_TOL,
        format!("max |dphi| {} (tol {FIXED_POINT_TOL:.0e})", parts.join(" ")),
    )
}

/// One-step mean of `delta s_z / tau` against `-gamma (1 + s_z)`.
pub fn drift_anchors(_options: &ValidationOptions) -> CheckOutcome {
    let cases = [
        ("excited", BlochState::EXCITED),
        ("dipole+", BlochState::DIPOLE_PLUS),
        ("dipole-", BlochState::DIPOLE_MINUS),
        ("ground", BlochState::GROUND),
    ];
    let mut passed = true;
    let mut parts = Vec::new();
    for (i, (label, state)) in cases.into_iter().enumerate() {
        let config = base_config(FeedbackPolicy::NoFeedback, state, 1, DRIFT_SAMPLES, 201 + i as u64);
        let (slope, se) = one_step_slope(&config);
        let expected = -config.params.gamma() * (1.0 + state.s_z()) + 0.0;
        let ok = if state == BlochState::GROUND {
            slope == 0.0
        } else {
            (slope - expected).abs() <= DRIFT_SIGMAS * se
        };
        passed &= ok;
        parts.push(format!("{label}:{slope:+.4}±{se:.4}(exp {expected:+.0})"));
    }
    outcome(2, "drift anchors", passed, parts.join(" "))
}

/// Mean and standard error of `delta s_z / tau` over independent one-step draws.
pub fn one_step_slope(config: &RunConfig) -> (f64, f64) {
    let records = one_step_records(config, Parallelism::Auto).expect("valid config");
    let s_z0 = config.initial.s_z();
    let mut m = Moments::default();
    for r in &records {
        m.push((r.state_after.s_z() - s_z0) / config.params.tau());
    }
    (m.mean(), m.stderr())
}

/// `Var(theta) / (gamma tau)` against `(1 + s_z - g)²` on the 3x3 grid.
pub fn diffusion_law(options: &ValidationOptions) -> CheckOutcome {
    let states = [
        ("sz=-1", BlochState::GROUND),
        ("sz=0", BlochState::DIPOLE_PLUS),
        ("sz=+1", BlochState::EXCITED),
    ];
    let policies = [
        (0.0, FeedbackPolicy::NoFeedback),
        (1.0, options.compensation()),
        (2.0, FeedbackPolicy::Inversion),
    ];
    let mut passed = true;
    let mut parts = Vec::new();
    let mut seed = 300;
    let mut ratio_excited = 0.0;
    let mut ratio_classical = 0.0;
    for (label, state) in states {
        for (g, policy) in policies {
            seed += 1;
            let config = base_config(policy, state, 1, DIFFUSION_SAMPLES, seed);
            let records = one_step_records(&config, Parallelism::Auto).expect("valid config");
            let d = estimate_diffusion(&records, &config.params).expect("enough records");
            let ratio = d.value / config.params.gamma();
            let expected = (1.0 + state.s_z() - g).powi(2);
            let ok = if expected == 0.0 {
                ratio == 0.0
            } else {
                (ratio / expected - 1.0).abs() <= DIFFUSION_REL_TOL
            };
            passed &= ok;
            if g == 0.0 && state == BlochState::EXCITED {
                ratio_excited = ratio;
            }
            if g == 0.0 && state == BlochState::DIPOLE_PLUS {
                ratio_classical = ratio;
            }
            if !ok {
                parts.push(format!("{label},g={g}:{ratio:.4}(exp {expected})"));
            }
        }
    }
    let detail = format!(
        "excited/classical variance ratio {:.3}; {}",
        ratio_excited / ratio_classical,
        if parts.is_empty() {
            format!("all 9 within {:.0}%", DIFFUSION_REL_TOL * 100.0)
        } else {
            parts.join(" ")
        }
    );
    outcome(3, "diffusion law", passed, detail)
}

/// Bayesian dipole update versus the compensated rotation across couplings.
pub fn weak_measurement(options: &ValidationOptions) -> CheckOutcome {
    let state = BlochState::from_angle(0.6).expect("finite");
    let g = options.compensation_gain;
    let mut diffs = Vec::new();
    let mut updates = Vec::new();
    for coupling in WEAK_COUPLINGS {
        let p = SimParams::with_coupling(coupling, ALPHA).expect("valid");
        let mut diff: f64 = 0.0;
        let mut update: f64 = 0.0;
        for ratio in [-1.0, 1.0] {
            let dn = ratio * p.alpha();
            let rotated = apply_rotation(state, rotation_angle(state.s_z(), dn, &p, g));
            let bayes = bayes_dipole_update(state, dn, &p);
            diff = diff
                .max((rotated.s_x() - bayes.s_x()).abs())
                .max((rotated.s_z() - bayes.s_z()).abs());
            update = update
                .max((rotated.s_x() - state.s_x()).abs())
                .max((rotated.s_z() - state.s_z()).abs());
        }
        diffs.push(diff);
        updates.push(update);
    }
    let diff_ratios: Vec<f64> = diffs.windows(2).map(|w| w[0] / w[1]).collect();
    let update_ratios: Vec<f64> = updates.windows(2).map(|w| w[0] / w[1]).collect();
    let in_range = |r: &f64, (lo, hi): (f64, f64)| (lo..=hi).contains(r);
    let smallest = *WEAK_COUPLINGS.last().expect("non-empty");
    let passed = diff_ratios.iter().all(|r| in_range(r, WEAK_DIFF_RATIO))
        && update_ratios.iter().all(|r| in_range(r, WEAK_UPDATE_RATIO))
        && diffs[diffs.len() - 1] <= 10.0 * smallest;
    outcome(
        4,
        "weak-measurement equivalence",
        passed,
        format!(
            "diff/decade {:.2},{:.2} (in [{},{}]); update/decade {:.2},{:.2} (in [{},{}])",
            diff_ratios[0],
            diff_ratios[1],
            WEAK_DIFF_RATIO.0,
            WEAK_DIFF_RATIO.1,
            update_ratios[0],
            update_ratios[1],
            WEAK_UPDATE_RATIO.0,
            WEAK_UPDATE_RATIO.1
        ),
    )
}

/// Max pointwise gap between the vacuum-source Fock pmf and Skellam.
pub fn vacuum_skellam_error(alpha: f64) -> f64 {
    let source = SourceSpec::Vacuum;
    let pmf = delta_n_pmf(alpha, &source, auto_cutoff(alpha, &source)).expect("auto cutoff");
    let mu = alpha * alpha / 2.0;
    let lo = pmf.offset - 5;
    let hi = pmf.offset + pmf.probabilities.len() as i64 + 5;
    (lo..hi)
        .map(|k| (pmf.prob(k) - skellam_pmf(k, mu, mu).expect("valid rates")).abs())
        .fold(0.0, f64::max)
}

pub fn oracle_exactness(_options: &ValidationOptions) -> CheckOutcome {
    let err2 = vacuum_skellam_error(2.0);
    let err4 = vacuum_skellam_error(4.0);
    let alpha = 4.0;
    let h = Complex64::new(FRAC_1_SQRT_2, 0.0);
    let source = SourceSpec::Qubit(h, h);
    let pmf = delta_n_pmf(alpha, &source, auto_cutoff(alpha, &source)).expect("auto cutoff");
    let expected = 2.0 * alpha * source.mean_annihilation().re;
    let mean_err = (pmf.mean() - expected).abs();
    outcome(
        5,
        "oracle exactness",
        err2 <= SKELLAM_TOL && err4 <= SKELLAM_TOL && mean_err <= QUBIT_MEAN_TOL,
        format!(
            "skellam max err a=2 {err2:.1e}, a=4 {err4:.1e}; qubit <dn> {:.10} vs {expected} (err {mean_err:.1e})",
            pmf.mean()
        ),
    )
}

pub fn vacuum_tv_distance(alpha: f64) -> f64 {
    let source = SourceSpec::Vacuum;
    let pmf = delta_n_pmf(alpha, &source, auto_cutoff(alpha, &source)).expect("auto cutoff");
    gaussian_distance(&pmf, alpha).expect("alpha > 0")
}

pub fn gaussian_limit(_options: &ValidationOptions) -> CheckOutcome {
    let tv6 = vacuum_tv_distance(6.0);
    let tv10 = vacuum_tv_distance(10.0);
    outcome(
        6,
        "gaussian limit",
        tv6 < TV_BOUND && tv10 < tv6,
        format!("TV a=6 {tv6:.5} (< {TV_BOUND}), a=10 {tv10:.5}"),
    )
}

pub fn purity_and_determinism(_options: &ValidationOptions) -> CheckOutcome {
    let config = base_config(FeedbackPolicy::NoFeedback, BlochState::EXCITED, PURITY_STEPS, 1, 701);
    let purity = Trajectory::new(&config, 0)
        .map(|r| r.state_after.purity_error())
        .fold(0.0, f64::max);

    let config = base_config(FeedbackPolicy::NoFeedback, BlochState::EXCITED, 200, 2_000, 702);
    let runs: Vec<_> = DETERMINISM_THREADS
        .iter()
        .map(|&n| run_ensemble_with(&config, Parallelism::Threads(n)).expect("valid config"))
        .collect();
    let identical = runs.windows(2).all(|w| bit_identical(&w[0], &w[1]));
    outcome(
        7,
        "purity and determinism",
        purity <= PURITY_TOL && identical,
        format!(
            "max purity error {purity:.1e} over {PURITY_STEPS} steps; threads {:?} bit-identical: {identical}",
            DETERMINISM_THREADS
        ),
    )
}

pub fn bit_identical(a: &crate::analysis::EnsembleResult, b: &crate::analysis::EnsembleResult) -> bool {
    let cols = |r: &crate::analysis::EnsembleResult| -> Vec<u64> {
        [&r.time, &r.mean_sx, &r.mean_sz, &r.var_sx, &r.var_sz, &r.stderr_sx, &r.stderr_sz]
            .iter()
            .flat_map(|c| c.iter().map(|v| v.to_bits()))
            .collect()
    };
    cols(a) == cols(b) && a.n_trajectories == b.n_trajectories && a.config == b.config
}

pub fn drift_field_pattern(options: &ValidationOptions) -> CheckOutcome {
    let p = params();
    let panels: [(&str, f64, Vec<f64>); 3] = [
        ("none", 0.0, vec![PI]),
        ("compensation", options.compensation_gain, vec![FRAC_PI_2, -FRAC_PI_2]),
        ("inversion", 2.0, vec![0.0]),
    ];
    let mut passed = true;
    let mut parts = Vec::new();
    for (name, g, expected_fixed) in panels {
        let field = drift_field(&p, g, DRIFT_GRID).expect("valid grid");
        let mut fixed: Vec<f64> = field.fixed_points().map(|pt| pt.phi).collect();
        fixed.sort_by(f64::total_cmp);
        let mut expected = expected_fixed.clone();
        expected.sort_by(f64::total_cmp);
        let fixed_ok = fixed == expected;
        // For positive records: no feedback circulates towards increasing
        // phi everywhere, inversion towards decreasing phi, and
        // compensation drives both hemispheres towards s_x = +1.
        let sign_ok = field.points.iter().filter(|pt| !pt.fixed_point).all(|pt| {
            let want = match name {
                "none" => 1.0,
                "inversion" => -1.0,
                _ => pt.s_z.signum(),
            };
            pt.mean_rotation_positive.signum() == want
        });
        passed &= fixed_ok && sign_ok;
        let shown: Vec<String> = fixed.iter().map(|f| format!("{:.3}", f / PI)).collect();
        parts.push(format!("{name}: fixed phi/pi [{}] signs {}", shown.join(","), if sign_ok { "ok" } else { "BAD" }));
    }
    outcome(8, "drift field pattern", passed, parts.join("; "))
}

/// Ensemble decay from the excited state versus `2 e^{-gamma t} - 1`.
/// Reported but not gating.
pub fn decay_characterization(_options: &ValidationOptions) -> CheckOutcome {
    let steps = (DECAY_LATE.0 / COUPLING).round() as u64;
    let config = base_config(FeedbackPolicy::NoFeedback, BlochState::EXCITED, steps, DECAY_TRAJECTORIES, 901);
    let result = run_ensemble_with(&config, Parallelism::Auto).expect("valid config");
    let gamma = config.params.gamma();
    let deviation = |t_max: f64| {
        result
            .time
            .iter()
            .zip(&result.mean_sz)
            .filter(|(t, _)| gamma * **t <= t_max + 1e-12)
            .map(|(t, m)| (m - (2.0 * (-gamma * t).exp() - 1.0)).abs())
            .fold(0.0, f64::max)
    };
    let early = deviation(DECAY_EARLY.0);
    let late = deviation(DECAY_LATE.0);
    CheckOutcome {
        id: 9,
        name: "decay characterization",
        passed: early <= DECAY_EARLY.1 && late <= DECAY_LATE.1,
        gating: false,
        detail: format!(
            "max dev gt<={}: {early:.4} (<= {}), gt<={}: {late:.4} (<= {})",
            DECAY_EARLY.0, DECAY_EARLY.1, DECAY_LATE.0, DECAY_LATE.1
        ),
    }
}
