use homodyne_core::analysis::{
    chi_square_gof, conditional_cdf, ensemble_stats, estimate_diffusion, histogram, Moments,
};
use homodyne_core::engine::{derive_stream, one_step_records, run_ensemble_with, run_trajectory, Trajectory};
use homodyne_core::measurement::{sample_record, SamplingMode};
use homodyne_core::numeric::std_normal_cdf;
use homodyne_core::{BlochState, FeedbackPolicy, Parallelism, RunConfig, SimParams};
use rand::RngCore;

fn config(policy: FeedbackPolicy, initial: BlochState, coupling: f64, n_steps: u64, n: u64, seed: u64) -> RunConfig {
    RunConfig {
        params: SimParams::with_coupling(coupling, 100.0).unwrap(),
        policy,
        mode: SamplingMode::Conditional,
        initial,
        n_steps,
        n_trajectories: n,
        seed,
    }
}

fn draws(state: BlochState, params: &SimParams, mode: SamplingMode, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = derive_stream(seed, 0);
    (0..n).map(|_| sample_record(state, params, mode, &mut rng).delta_n).collect()
}

#[test]
fn vacuum_sampler_moments() {
    let p = SimParams::with_coupling(1e-3, 10.0).unwrap();
    let xs = draws(BlochState::EXCITED, &p, SamplingMode::Vacuum, 1_000_000, 1);
    let mut m = Moments::default();
    xs.iter().for_each(|&x| m.push(x));
    assert!(m.mean().abs() <= 3.0 * 10.0 / 1e3, "mean {}", m.mean());
    assert!((m.variance() / 100.0 - 1.0).abs() <= 0.01, "var {}", m.variance());
}

#[test]
fn conditional_sampler_mean_follows_dipole() {
    let p = SimParams::with_coupling(0.01, 10.0).unwrap();
    let xs = draws(BlochState::DIPOLE_PLUS, &p, SamplingMode::Conditional, 1_000_000, 2);
    let mut m = Moments::default();
    xs.iter().for_each(|&x| m.push(x));
    assert!((m.mean() - 1.0).abs() <= 3.0 * m.stderr(), "{} ± {}", m.mean(), m.stderr());

    let xs = draws(BlochState::EXCITED, &p, SamplingMode::Conditional, 1_000_000, 3);
    let positive = xs.iter().filter(|&&x| x > 0.0).count() as f64 / xs.len() as f64;
    let se = (0.25 / xs.len() as f64).sqrt();
    assert!((positive - 0.5).abs() <= 3.0 * se);
}

#[test]
fn sampler_goodness_of_fit() {
    let p = SimParams::with_coupling(0.01, 10.0).unwrap();
    let alpha = p.alpha();
    for (mode, state, seed) in [
        (SamplingMode::Vacuum, BlochState::EXCITED, 10),
        (SamplingMode::Conditional, BlochState::from_angle(0.7).unwrap(), 11),
        (SamplingMode::Conditional, BlochState::DIPOLE_MINUS, 12),
    ] {
        let xs = draws(state, &p, mode, 100_000, seed);
        let h = histogram(&xs, 100, (-5.0 * alpha, 5.0 * alpha)).unwrap();
        let test = match mode {
            SamplingMode::Vacuum => chi_square_gof(&h, |x| std_normal_cdf(x / alpha)),
            SamplingMode::Conditional => chi_square_gof(&h, |x| conditional_cdf(x, state, &p)),
        }
        .unwrap();
        assert!(test.p_value >= 1e-3, "{mode} {state:?}: {test:?}");
    }
}

#[test]
fn million_vacuum_samples_fit_gaussian() {
    let p = SimParams::with_coupling(1e-3, 10.0).unwrap();
    let xs = draws(BlochState::EXCITED, &p, SamplingMode::Vacuum, 1_000_000, 13);
    let h = histogram(&xs, 100, (-50.0, 50.0)).unwrap();
    assert_eq!(h.total(), 1_000_000);
    let test = chi_square_gof(&h, |x| std_normal_cdf(x / 10.0)).unwrap();
    assert!(test.p_value >= 1e-3, "{test:?}");
}

#[test]
fn streams_are_uncorrelated() {
    let n = 100_000;
    let to_unit = |x: u64| (x >> 11) as f64 / (1u64 << 53) as f64;
    let mut a = derive_stream(42, 0);
    let mut b = derive_stream(42, 1);
    let xs: Vec<f64> = (0..n).map(|_| to_unit(a.next_u64())).collect();
    let ys: Vec<f64> = (0..n).map(|_| to_unit(b.next_u64())).collect();
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let vx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let vy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let rho = cov / (vx * vy).sqrt();
    assert!(rho.abs() < 0.01, "rho = {rho}");
}

#[test]
fn long_trajectory_stays_pure() {
    let c = config(FeedbackPolicy::NoFeedback, BlochState::EXCITED, 1e-3, 100_000, 1, 5);
    let records = run_trajectory(&c, 0).unwrap();
    assert_eq!(records.len(), 100_000);
    let worst = records.iter().map(|r| r.state_after.purity_error()).fold(0.0, f64::max);
    assert!(worst <= 1e-12);
    assert!(records.iter().enumerate().all(|(i, r)| r.step_index == i as u64));
}

#[test]
fn angle_variance_law_with_finite_coupling_correction() {
    // Var(theta) = gamma tau (1 + s_z - g)² (1 + gamma tau (1 - s_x²)); at
    // gamma tau = 0.05 the correction is 5%, so it is resolvable here.
    let coupling = 0.05;
    for (state, g) in [
        (BlochState::EXCITED, 0.0),
        (BlochState::DIPOLE_PLUS, 0.0),
        (BlochState::GROUND, 2.0),
        (BlochState::EXCITED, 1.0),
    ] {
        let c = config(FeedbackPolicy::Custom(g), state, coupling, 1, 1_000_000, 17);
        let records = one_step_records(&c, Parallelism::Auto).unwrap();
        let mut m = Moments::default();
        records.iter().for_each(|r| m.push(r.theta));
        let s_x = state.s_x();
        let expected = coupling * (1.0 + state.s_z() - g).powi(2) * (1.0 + coupling * (1.0 - s_x * s_x));
        assert!((m.variance() / expected - 1.0).abs() < 0.02, "{state:?} g={g}");
    }
}

#[test]
fn excited_state_diffuses_four_times_faster_than_dipole() {
    let estimate = |state, g, seed| {
        let c = config(FeedbackPolicy::Custom(g), state, 1e-3, 1, 1_000_000, seed);
        let records = one_step_records(&c, Parallelism::Auto).unwrap();
        estimate_diffusion(&records, &c.params).unwrap()
    };
    let excited = estimate(BlochState::EXCITED, 0.0, 21);
    assert!((excited.value / 4.0 - 1.0).abs() < 0.02, "{excited:?}");
    assert!(excited.stderr > 0.0 && excited.stderr < 0.02 * excited.value);

    let compensated = estimate(BlochState::EXCITED, 1.0, 22);
    assert!((compensated.value - 1.0).abs() < 0.02, "{compensated:?}");

    let dipole = estimate(BlochState::DIPOLE_PLUS, 0.0, 23);
    assert!((excited.value / dipole.value / 4.0 - 1.0).abs() < 0.05);

    let ground = estimate(BlochState::GROUND, 0.0, 24);
    assert_eq!(ground.value, 0.0);
}

#[test]
fn ground_state_has_no_drift() {
    let c = config(FeedbackPolicy::NoFeedback, BlochState::GROUND, 1e-3, 1, 10_000, 3);
    let r = run_ensemble_with(&c, Parallelism::Auto).unwrap();
    assert_eq!(r.mean_sz[1] - r.mean_sz[0], 0.0);
}

#[test]
fn relaxation_from_excited_is_monotone() {
    let c = config(FeedbackPolicy::NoFeedback, BlochState::EXCITED, 1e-3, 3_000, 4_000, 31);
    let r = run_ensemble_with(&c, Parallelism::Auto).unwrap();
    // Compare points 100 steps apart so that the expected decrease dominates
    // the sampling noise.
    for k in (0..r.len() - 100).step_by(100) {
        let (a, b) = (r.mean_sz[k], r.mean_sz[k + 100]);
        let se = r.stderr_sz[k].hypot(r.stderr_sz[k + 100]);
        assert!(b <= a + 2.0 * se, "step {k}: {a} -> {b}");
    }
    // The drift vanishes quadratically near the ground state, so the tail is
    // slower than exponential.
    assert!(*r.mean_sz.last().unwrap() < -0.7);
}

#[test]
fn intermediate_drift_deviates_from_master_equation() {
    // One-step drift of the finite-rotation model from a pure state is
    // -gamma tau (1 + s_z)² (1 - s_z / 2); it agrees with -gamma tau (1 + s_z)
    // only at s_z in {-1, 0, 1}. At s_z = 0.5 the two differ by 12.5%.
    let s_z: f64 = 0.5;
    let state = BlochState::from_components((1.0 - s_z * s_z).sqrt(), s_z).unwrap();
    let c = config(FeedbackPolicy::NoFeedback, state, 1e-3, 1, 2_000_000, 41);
    let records = one_step_records(&c, Parallelism::Auto).unwrap();
    let mut m = Moments::default();
    records.iter().for_each(|r| m.push((r.state_after.s_z() - state.s_z()) / c.params.tau()));
    let model = -(1.0 + s_z).powi(2) * (1.0 - s_z / 2.0);
    let master = -(1.0 + s_z);
    assert!((m.mean() - model).abs() <= 4.0 * m.stderr(), "{} ± {}", m.mean(), m.stderr());
    assert!((m.mean() - master).abs() > 4.0 * m.stderr());
}

#[test]
fn ensemble_stats_agrees_with_streaming_ensemble() {
    let c = config(FeedbackPolicy::Custom(0.5), BlochState::from_angle(1.2).unwrap(), 1e-3, 20, 150, 8);
    let streamed = run_ensemble_with(&c, Parallelism::Sequential).unwrap();
    let stored: Vec<_> = (0..c.n_trajectories).map(|i| Trajectory::new(&c, i).collect()).collect();
    let batch = ensemble_stats(&stored, c.params.tau()).unwrap();
    for k in 0..20 {
        assert!((streamed.mean_sz[k + 1] - batch.mean_sz[k]).abs() < 1e-14);
        assert!((streamed.var_sx[k + 1] - batch.var_sx[k]).abs() < 1e-14);
        assert_eq!(streamed.time[k + 1], batch.time[k]);
    }
}

#[test]
fn vacuum_mode_has_no_net_decay_at_equator() {
    let mut c = config(FeedbackPolicy::NoFeedback, BlochState::DIPOLE_PLUS, 1e-3, 1, 1_000_000, 51);
    c.mode = SamplingMode::Vacuum;
    let records = one_step_records(&c, Parallelism::Auto).unwrap();
    let mut m = Moments::default();
    records.iter().for_each(|r| m.push(r.state_after.s_z() / c.params.tau()));
    assert!(m.mean().abs() <= 3.0 * m.stderr());
}
