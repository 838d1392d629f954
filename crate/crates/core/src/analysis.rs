//! Ensemble moments, diffusion estimates, the drift field of the record
//! response, and histogram/goodness-of-fit helpers.

use std::f64::consts::TAU;

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::engine::{RunConfig, StepRecord};
use crate::error::{Error, Result};
use crate::measurement::component_shift;
use crate::numeric::{normal_pdf, std_normal_cdf};
use crate::state::{BlochState, SimParams};

/// Tolerance on `|1 + s_z - g|` below which a grid point is a fixed point.
pub const FIXED_POINT_TOL: f64 = 1e-12;

/// Welford running mean/variance with Chan's pairwise merge.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    count: u64,
    mean: f64,
    m2: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Moments) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n_a = self.count as f64;
        let n_b = other.count as f64;
        let n = n_a + n_b;
        let delta = other.mean - self.mean;
        self.mean += delta * (n_b / n);
        self.m2 += other.m2 + delta * delta * (n_a * n_b / n);
        self.count += other.count;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance; zero for fewer than two samples.
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.m2 / (self.count - 1) as f64).max(0.0)
        }
    }

    pub fn stderr(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }
}

/// Per-step moments of `s_x` and `s_z`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepMoments {
    s_x: Vec<Moments>,
    s_z: Vec<Moments>,
}

impl StepMoments {
    pub fn new(n_rows: usize) -> Self {
        StepMoments {
            s_x: vec![Moments::default(); n_rows],
            s_z: vec![Moments::default(); n_rows],
        }
    }

    pub fn push(&mut self, row: usize, state: BlochState) {
        let (s_x, s_z) = state.components();
        self.s_x[row].push(s_x);
        self.s_z[row].push(s_z);
    }

    pub fn merge(&mut self, other: &StepMoments) {
        for (a, b) in self.s_x.iter_mut().zip(&other.s_x) {
            a.merge(b);
        }
        for (a, b) in self.s_z.iter_mut().zip(&other.s_z) {
            a.merge(b);
        }
    }

    /// Row `k` is reported at time `(k + time_offset) * tau`.
    pub(crate) fn finish_at(self, tau: f64, time_offset: usize, config: Option<RunConfig>) -> EnsembleResult {
        let n_trajectories = self.s_z.first().map_or(0, |m| m.count());
        let rows = self.s_z.len();
        EnsembleResult {
            time: (0..rows).map(|k| (k + time_offset) as f64 * tau).collect(),
            mean_sx: self.s_x.iter().map(Moments::mean).collect(),
            mean_sz: self.s_z.iter().map(Moments::mean).collect(),
            var_sx: self.s_x.iter().map(Moments::variance).collect(),
            var_sz: self.s_z.iter().map(Moments::variance).collect(),
            stderr_sx: self.s_x.iter().map(Moments::stderr).collect(),
            stderr_sz: self.s_z.iter().map(Moments::stderr).collect(),
            n_trajectories,
            seed: config.map(|c| c.seed),
            config,
        }
    }

    pub(crate) fn finish(self, tau: f64, config: Option<RunConfig>) -> EnsembleResult {
        self.finish_at(tau, 0, config)
    }
}

/// Time series of ensemble moments.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleResult {
    pub time: Vec<f64>,
    pub mean_sx: Vec<f64>,
    pub mean_sz: Vec<f64>,
    pub var_sx: Vec<f64>,
    pub var_sz: Vec<f64>,
    pub stderr_sx: Vec<f64>,
    pub stderr_sz: Vec<f64>,
    pub n_trajectories: u64,
    pub seed: Option<u64>,
    pub config: Option<RunConfig>,
}

impl EnsembleResult {
    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }
}

/// Moments of stored trajectories. Row `k` describes the state after step
/// `k + 1`, i.e. time `(k + 1) * tau`.
pub fn ensemble_stats(trajectories: &[Vec<StepRecord>], tau: f64) -> Result<EnsembleResult> {
    let expected = trajectories.first().map_or(0, Vec::len);
    let mut moments = StepMoments::new(expected);
    for (index, trajectory) in trajectories.iter().enumerate() {
        if trajectory.len() != expected {
            return Err(Error::RaggedTrajectories {
                index,
                len: trajectory.len(),
                expected,
            });
        }
        for (row, record) in trajectory.iter().enumerate() {
            moments.push(row, record.state_after);
        }
    }
    Ok(moments.finish_at(tau, 1, None))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiffusionEstimate {
    /// `Var(theta) / tau`, in rad² per unit time.
    pub value: f64,
    pub stderr: f64,
}

pub const MIN_DIFFUSION_RECORDS: usize = 100;
const JACKKNIFE_BLOCKS: usize = 100;

/// Angular diffusion `Var(theta) / tau` with a delete-one-block jackknife
/// standard error.
pub fn estimate_diffusion(records: &[StepRecord], params: &SimParams) -> Result<DiffusionEstimate> {
    if records.len() < MIN_DIFFUSION_RECORDS {
        return Err(Error::TooFewRecords {
            needed: MIN_DIFFUSION_RECORDS,
            got: records.len(),
        });
    }
    let n = records.len();
    let n_blocks = JACKKNIFE_BLOCKS.min(n);
    let blocks: Vec<Moments> = (0..n_blocks)
        .map(|b| {
            let (lo, hi) = (b * n / n_blocks, (b + 1) * n / n_blocks);
            let mut m = Moments::default();
            records[lo..hi].iter().for_each(|r| m.push(r.theta));
            m
        })
        .collect();

    let mut prefix = vec![Moments::default(); n_blocks + 1];
    for b in 0..n_blocks {
        prefix[b + 1] = prefix[b];
        prefix[b + 1].merge(&blocks[b]);
    }
    let mut suffix = vec![Moments::default(); n_blocks + 1];
    for b in (0..n_blocks).rev() {
        let mut m = blocks[b];
        m.merge(&suffix[b + 1]);
        suffix[b] = m;
    }

    let tau = params.tau();
    let full = prefix[n_blocks].variance() / tau;
    let leave_out: Vec<f64> = (0..n_blocks)
        .map(|b| {
            let mut m = prefix[b];
            m.merge(&suffix[b + 1]);
            m.variance() / tau
        })
        .collect();
    let k = n_blocks as f64;
    let mean_lo = leave_out.iter().sum::<f64>() / k;
    let spread: f64 = leave_out.iter().map(|v| (v - mean_lo).powi(2)).sum();
    Ok(DiffusionEstimate {
        value: full.max(0.0),
        stderr: ((k - 1.0) / k * spread).sqrt(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DriftPoint {
    pub phi: f64,
    pub s_x: f64,
    pub s_z: f64,
    /// Mean rotation conditioned on a positive record.
    pub mean_rotation_positive: f64,
    pub rms_rotation: f64,
    pub fixed_point: bool,
}

/// Response of the state to positive records around the `s_y = 0` circle.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftField {
    pub gain: f64,
    pub points: Vec<DriftPoint>,
}

impl DriftField {
    pub fn fixed_points(&self) -> impl Iterator<Item = &DriftPoint> {
        self.points.iter().filter(|p| p.fixed_point)
    }
}

/// Grid angle `2 pi k / n`, exact at the four cardinal states.
pub fn grid_state(k: usize, n: usize) -> BlochState {
    let k = k % n;
    if (4 * k).is_multiple_of(n) {
        return match 4 * k / n {
            0 => BlochState::EXCITED,
            1 => BlochState::DIPOLE_PLUS,
            2 => BlochState::GROUND,
            _ => BlochState::DIPOLE_MINUS,
        };
    }
    BlochState::from_angle(TAU * k as f64 / n as f64).expect("finite grid angle")
}

/// `E[delta_n | delta_n > 0]` under the conditional record mixture.
pub fn positive_record_mean(state: BlochState, params: &SimParams) -> f64 {
    let mu = component_shift(params);
    let sigma = params.alpha();
    let s_x = state.s_x();
    let mut mass = 0.0;
    let mut first = 0.0;
    for (weight, center) in [((1.0 + s_x) / 2.0, mu), ((1.0 - s_x) / 2.0, -mu)] {
        let z = center / sigma;
        let p = std_normal_cdf(z);
        mass += weight * p;
        first += weight * (center * p + sigma * sigma * normal_pdf(0.0, center, sigma));
    }
    first / mass
}

pub const MIN_GRID_SIZE: usize = 4;

pub fn drift_field(params: &SimParams, gain: f64, grid_size: usize) -> Result<DriftField> {
    if grid_size < MIN_GRID_SIZE {
        return Err(Error::InvalidParameter(format!(
            "grid_size must be >= {MIN_GRID_SIZE}, got {grid_size}"
        )));
    }
    if !gain.is_finite() {
        return Err(Error::InvalidParameter(format!("gain must be finite, got {gain}")));
    }
    let root = params.coupling().sqrt();
    let rms_record = (1.0 + params.coupling()).sqrt();
    let points = (0..grid_size)
        .map(|k| {
            let state = grid_state(k, grid_size);
            let (s_x, s_z) = state.components();
            let lever = (1.0 + s_z) - gain;
            let fixed_point = lever.abs() < FIXED_POINT_TOL;
            let mean_rotation_positive = if fixed_point {
                0.0
            } else {
                root * lever * positive_record_mean(state, params) / params.alpha()
            };
            DriftPoint {
                phi: state.phi(),
                s_x,
                s_z,
                mean_rotation_positive,
                rms_rotation: if fixed_point { 0.0 } else { root * lever.abs() * rms_record },
                fixed_point,
            }
        })
        .collect();
    Ok(DriftField { gain, points })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
    pub underflow: u64,
    /// Values `>= hi` and NaNs.
    pub overflow: u64,
}

impl Histogram {
    pub fn bin_width(&self) -> f64 {
        (self.hi - self.lo) / self.counts.len() as f64
    }

    pub fn bin_edges(&self) -> Vec<f64> {
        let w = self.bin_width();
        (0..=self.counts.len()).map(|i| self.lo + i as f64 * w).collect()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.underflow + self.overflow
    }
}

pub fn histogram(values: &[f64], bins: usize, range: (f64, f64)) -> Result<Histogram> {
    let (lo, hi) = range;
    if bins == 0 || !(lo.is_finite() && hi.is_finite()) || lo >= hi {
        return Err(Error::InvalidRange { lo, hi, bins });
    }
    let mut h = Histogram {
        lo,
        hi,
        counts: vec![0; bins],
        underflow: 0,
        overflow: 0,
    };
    let scale = bins as f64 / (hi - lo);
    for &v in values {
        if v < lo {
            h.underflow += 1;
        } else if v < hi {
            let i = (((v - lo) * scale) as usize).min(bins - 1);
            h.counts[i] += 1;
        } else {
            h.overflow += 1;
        }
    }
    Ok(h)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Minimum expected count per pooled cell.
pub const MIN_EXPECTED: f64 = 5.0;

/// Pearson goodness of fit of a histogram (including under/overflow) against
/// a distribution given by its CDF. Adjacent cells are pooled left to right
/// until each expects at least [`MIN_EXPECTED`] counts.
pub fn chi_square_gof(hist: &Histogram, cdf: impl Fn(f64) -> f64) -> Result<ChiSquareTest> {
    let n = hist.total() as f64;
    let edges = hist.bin_edges();
    let mut cells: Vec<(f64, f64)> = Vec::with_capacity(hist.counts.len() + 2);
    cells.push((hist.underflow as f64, cdf(hist.lo)));
    for (i, &c) in hist.counts.iter().enumerate() {
        cells.push((c as f64, cdf(edges[i + 1]) - cdf(edges[i])));
    }
    cells.push((hist.overflow as f64, 1.0 - cdf(hist.hi)));

    let mut pooled: Vec<(f64, f64)> = Vec::new();
    let (mut obs, mut exp) = (0.0, 0.0);
    for (o, p) in cells {
        obs += o;
        exp += p * n;
        if exp >= MIN_EXPECTED {
            pooled.push((obs, exp));
            obs = 0.0;
            exp = 0.0;
        }
    }
    if let Some(last) = pooled.last_mut() {
        last.0 += obs;
        last.1 += exp;
    }
    if pooled.len() < 2 {
        return Err(Error::InvalidParameter(
            "not enough populated cells for a chi-square test".into(),
        ));
    }
    let statistic: f64 = pooled.iter().map(|(o, e)| (o - e).powi(2) / e).sum();
    let dof = pooled.len() - 1;
    let dist = ChiSquared::new(dof as f64).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    Ok(ChiSquareTest {
        statistic,
        dof,
        p_value: dist.sf(statistic),
    })
}

/// Mixture CDF of the conditional record.
pub fn conditional_cdf(delta_n: f64, state: BlochState, params: &SimParams) -> f64 {
    let mu = component_shift(params);
    let sigma = params.alpha();
    let s_x = state.s_x();
    (1.0 + s_x) / 2.0 * std_normal_cdf((delta_n - mu) / sigma)
        + (1.0 - s_x) / 2.0 * std_normal_cdf((delta_n + mu) / sigma)
}

/// Expected arrow sign pattern of a drift panel: `+1`, `-1` or `0` at a
/// fixed point.
pub fn expected_circulation(state: BlochState, gain: f64) -> f64 {
    let lever = (1.0 + state.s_z()) - gain;
    if lever.abs() < FIXED_POINT_TOL {
        0.0
    } else {
        lever.signum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{one_step_records, Parallelism};
    use crate::feedback::FeedbackPolicy;
    use crate::measurement::SamplingMode;
    use std::f64::consts::PI;

    fn record(theta: f64, state: BlochState) -> StepRecord {
        StepRecord {
            step_index: 0,
            delta_n: 0.0,
            theta,
            state_after: state,
        }
    }

    #[test]
    fn moments_merge_matches_sequential() {
        let xs: Vec<f64> = (0..1000).map(|i| ((i * 37) % 101) as f64 / 7.0).collect();
        let mut all = Moments::default();
        xs.iter().for_each(|&x| all.push(x));
        let mut a = Moments::default();
        let mut b = Moments::default();
        xs[..313].iter().for_each(|&x| a.push(x));
        xs[313..].iter().for_each(|&x| b.push(x));
        a.merge(&b);
        assert!((a.mean() - all.mean()).abs() < 1e-12);
        assert!((a.variance() - all.variance()).abs() < 1e-10);
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
        assert!((all.variance() - var).abs() < 1e-10);
    }

    #[test]
    fn ensemble_stats_edge_cases() {
        let s = BlochState::from_angle(0.4).unwrap();
        let single = vec![vec![record(0.1, s), record(0.2, s)]];
        let r = ensemble_stats(&single, 0.01).unwrap();
        assert!(r.var_sx.iter().chain(&r.var_sz).all(|&v| v == 0.0));
        assert_eq!(r.time, vec![0.01, 0.02]);

        let same = vec![vec![record(0.1, s)]; 5];
        let r = ensemble_stats(&same, 0.01).unwrap();
        assert!(r.stderr_sx.iter().chain(&r.stderr_sz).all(|&v| v == 0.0));
        assert_eq!(r.mean_sz[0], s.s_z());

        let ragged = vec![vec![record(0.1, s)], vec![]];
        assert!(matches!(
            ensemble_stats(&ragged, 0.01),
            Err(Error::RaggedTrajectories { index: 1, .. })
        ));
    }

    #[test]
    fn ensemble_stats_one_step_drift_from_excited() {
        let coupling = 1e-3;
        let config = RunConfig {
            params: SimParams::with_coupling(coupling, 100.0).unwrap(),
            policy: FeedbackPolicy::NoFeedback,
            mode: SamplingMode::Conditional,
            initial: BlochState::EXCITED,
            n_steps: 1,
            n_trajectories: 100_000,
            seed: 2024,
        };
        let recs = one_step_records(&config, Parallelism::Auto).unwrap();
        let trajectories: Vec<Vec<StepRecord>> = recs.into_iter().map(|r| vec![r]).collect();
        let r = ensemble_stats(&trajectories, coupling).unwrap();
        let change = r.mean_sz[0] - 1.0;
        assert!((change + 2.0 * coupling).abs() <= 3.0 * r.stderr_sz[0]);
    }

    #[test]
    fn diffusion_needs_records() {
        let p = SimParams::with_coupling(1e-3, 10.0).unwrap();
        let few = vec![record(0.0, BlochState::GROUND); 99];
        assert!(matches!(
            estimate_diffusion(&few, &p),
            Err(Error::TooFewRecords { needed: 100, got: 99 })
        ));
        let zeros = vec![record(0.0, BlochState::GROUND); 1000];
        let d = estimate_diffusion(&zeros, &p).unwrap();
        assert_eq!(d.value, 0.0);
        assert_eq!(d.stderr, 0.0);
    }

    #[test]
    fn jackknife_matches_analytic_stderr_for_iid() {
        // For i.i.d. Gaussian data, SE(variance) ~ var * sqrt(2/n).
        use rand::SeedableRng;
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let p = SimParams::new(1.0, 1e-3, 10.0).unwrap();
        let recs: Vec<StepRecord> = (0..50_000)
            .map(|_| {
                let x: f64 = StandardNormal.sample(&mut rng);
                record(x, BlochState::GROUND)
            })
            .collect();
        let d = estimate_diffusion(&recs, &p).unwrap();
        let expected_se = (2.0 / 50_000f64).sqrt() / 1e-3;
        assert!((d.stderr / expected_se - 1.0).abs() < 0.35, "{} vs {}", d.stderr, expected_se);
        assert!((d.value * 1e-3 - 1.0).abs() < 0.03);
    }

    #[test]
    fn histogram_basics() {
        let h = histogram(&[], 4, (0.0, 1.0)).unwrap();
        assert_eq!(h.counts, vec![0; 4]);
        assert_eq!(h.total(), 0);

        let h = histogram(&[0.0], 4, (0.0, 1.0)).unwrap();
        assert_eq!(h.counts, vec![1, 0, 0, 0]);

        let h = histogram(&[-1.0, 0.25, 0.999_999, 1.0, 3.0, f64::NAN], 4, (0.0, 1.0)).unwrap();
        assert_eq!(h.counts, vec![0, 1, 0, 1]);
        assert_eq!(h.underflow, 1);
        assert_eq!(h.overflow, 3);
        assert_eq!(h.total(), 6);

        assert!(histogram(&[1.0], 0, (0.0, 1.0)).is_err());
        assert!(histogram(&[1.0], 3, (1.0, 1.0)).is_err());
        assert!(histogram(&[1.0], 3, (2.0, 1.0)).is_err());
    }

    #[test]
    fn grid_contains_exact_anchors() {
        assert_eq!(grid_state(0, 8), BlochState::EXCITED);
        assert_eq!(grid_state(2, 8), BlochState::DIPOLE_PLUS);
        assert_eq!(grid_state(4, 8), BlochState::GROUND);
        assert_eq!(grid_state(6, 8), BlochState::DIPOLE_MINUS);
        assert!((grid_state(1, 8).phi() - PI / 4.0).abs() < 1e-15);
        assert!((grid_state(7, 8).phi() + PI / 4.0).abs() < 1e-15);
    }

    #[test]
    fn drift_field_fixed_points() {
        let p = SimParams::with_coupling(1e-3, 100.0).unwrap();
        let fixed = |g: f64| -> Vec<BlochState> {
            drift_field(&p, g, 16)
                .unwrap()
                .fixed_points()
                .map(|pt| BlochState::from_angle(pt.phi).unwrap())
                .collect()
        };
        assert_eq!(fixed(0.0), vec![BlochState::GROUND]);
        assert_eq!(fixed(1.0), vec![BlochState::DIPOLE_PLUS, BlochState::DIPOLE_MINUS]);
        assert_eq!(fixed(2.0), vec![BlochState::EXCITED]);
        assert!(drift_field(&p, 0.0, 3).is_err());
    }

    #[test]
    fn drift_field_largest_arrow_at_excited_without_feedback() {
        let p = SimParams::with_coupling(1e-3, 100.0).unwrap();
        let f = drift_field(&p, 0.0, 16).unwrap();
        let max = f
            .points
            .iter()
            .max_by(|a, b| a.mean_rotation_positive.abs().total_cmp(&b.mean_rotation_positive.abs()))
            .unwrap();
        assert_eq!(max.phi, 0.0);
        assert!(f.points.iter().all(|pt| pt.mean_rotation_positive >= 0.0));
    }

    #[test]
    fn positive_record_mean_matches_quadrature() {
        let p = SimParams::with_coupling(0.05, 2.0).unwrap();
        let s = BlochState::from_angle(0.8).unwrap();
        let (a, b, n) = (0.0, 30.0, 60_000);
        let h = (b - a) / n as f64;
        let (mut mass, mut first) = (0.0, 0.0);
        for i in 0..n {
            let x = a + (i as f64 + 0.5) * h;
            let f = crate::measurement::conditional_pdf(x, s, &p);
            mass += f * h;
            first += x * f * h;
        }
        assert!((positive_record_mean(s, &p) - first / mass).abs() < 1e-6);
    }

    #[test]
    fn chi_square_accepts_matching_and_rejects_shifted() {
        use rand::SeedableRng;
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        let xs: Vec<f64> = (0..100_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let h = histogram(&xs, 100, (-5.0, 5.0)).unwrap();
        let ok = chi_square_gof(&h, std_normal_cdf).unwrap();
        assert!(ok.p_value > 1e-3, "{ok:?}");
        let bad = chi_square_gof(&h, |x| std_normal_cdf(x - 0.05)).unwrap();
        assert!(bad.p_value < 1e-3, "{bad:?}");
    }
}
