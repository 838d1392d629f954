//! Exact truncated-Fock-space model of balanced homodyne detection.
//!
//! A coherent local oscillator `|alpha>` (mode `a`, phase chosen so that
//! `alpha >= 0`) and a source state (mode `b`) enter a 50:50 beamsplitter
//! with outputs `c = (a + b)/sqrt(2)` and `d = (a - b)/sqrt(2)`. The detector
//! difference `n_c - n_d` realizes the interference term `a† b + a b†`.
//!
//! The beamsplitter conserves total photon number, so it is applied block by
//! block: within the `N`-photon block the image of `|m>_a |N-m>_b` is built
//! from the `(N-1)`-photon images by one creation operator, which is an
//! isometry and keeps rounding at the `N * eps` level.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::numeric::{compensated_sum, normal_interval_mass};

/// Largest truncation leakage `1 - norm` accepted.
pub const LEAKAGE_BOUND: f64 = 1e-10;
const QUBIT_NORM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SourceSpec {
    Vacuum,
    Coherent(Complex64),
    /// `c0 |0> + c1 |1>`.
    Qubit(Complex64, Complex64),
}

impl SourceSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            SourceSpec::Vacuum => Ok(()),
            SourceSpec::Coherent(beta) => {
                if beta.re.is_finite() && beta.im.is_finite() {
                    Ok(())
                } else {
                    Err(invalid(format!("coherent amplitude {beta} is not finite")))
                }
            }
            SourceSpec::Qubit(c0, c1) => {
                let norm = c0.norm_sqr() + c1.norm_sqr();
                if (norm - 1.0).abs() <= QUBIT_NORM_TOL {
                    Ok(())
                } else {
                    Err(invalid(format!("qubit amplitudes have norm {norm}, expected 1")))
                }
            }
        }
    }

    /// `<b>` of the source state.
    pub fn mean_annihilation(&self) -> Complex64 {
        match *self {
            SourceSpec::Vacuum => Complex64::new(0.0, 0.0),
            SourceSpec::Coherent(beta) => beta,
            SourceSpec::Qubit(c0, c1) => c0.conj() * c1,
        }
    }

    fn mean_photons(&self) -> f64 {
        match *self {
            SourceSpec::Vacuum => 0.0,
            SourceSpec::Coherent(beta) => beta.norm_sqr(),
            SourceSpec::Qubit(_, c1) => c1.norm_sqr(),
        }
    }

    /// Source amplitudes in the number basis up to `cutoff`.
    fn amplitudes(&self, cutoff: usize) -> Vec<Complex64> {
        let mut amps = vec![Complex64::new(0.0, 0.0); cutoff + 1];
        match *self {
            SourceSpec::Vacuum => amps[0] = Complex64::new(1.0, 0.0),
            SourceSpec::Coherent(beta) => {
                amps[0] = Complex64::new((-0.5 * beta.norm_sqr()).exp(), 0.0);
                for n in 1..=cutoff {
                    amps[n] = amps[n - 1] * beta / (n as f64).sqrt();
                }
            }
            SourceSpec::Qubit(c0, c1) => {
                amps[0] = c0;
                if cutoff >= 1 {
                    amps[1] = c1;
                }
            }
        }
        amps
    }
}

/// Real coherent-state amplitudes `e^{-a²/2} a^n / sqrt(n!)`.
pub fn coherent_amplitudes(alpha: f64, cutoff: usize) -> Vec<f64> {
    let mut amps = vec![0.0; cutoff + 1];
    amps[0] = (-0.5 * alpha * alpha).exp();
    for n in 1..=cutoff {
        amps[n] = amps[n - 1] * alpha / (n as f64).sqrt();
    }
    amps
}

/// Cutoff that keeps the coherent tail well below [`LEAKAGE_BOUND`]:
/// `a² + 10 a + 20` for the total amplitude `a`, plus one.
pub fn auto_cutoff(lo_alpha: f64, source: &SourceSpec) -> usize {
    let a2 = lo_alpha * lo_alpha + source.mean_photons();
    let a = a2.sqrt();
    (a2 + 10.0 * a + 20.0).ceil() as usize + 1
}

/// Two-mode output amplitudes, indexed by `(n_c, n_d)` with `n_c + n_d <= cutoff`.
#[derive(Debug, Clone, PartialEq)]
pub struct FockField {
    cutoff: usize,
    amplitudes: Vec<Complex64>,
    /// `1 - norm` of the truncated input.
    leakage: f64,
}

impl FockField {
    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn amplitude(&self, n_c: usize, n_d: usize) -> Complex64 {
        if n_c > self.cutoff || n_d > self.cutoff {
            return Complex64::new(0.0, 0.0);
        }
        self.amplitudes[n_c * (self.cutoff + 1) + n_d]
    }

    pub fn probability(&self, n_c: usize, n_d: usize) -> f64 {
        self.amplitude(n_c, n_d).norm_sqr()
    }

    pub fn norm_sqr(&self) -> f64 {
        compensated_sum(self.amplitudes.iter().map(|a| a.norm_sqr()))
    }

    pub fn leakage(&self) -> f64 {
        self.leakage
    }

    /// Photon-number distribution of output `c` (`mode = 0`) or `d` (`mode = 1`).
    pub fn marginal(&self, mode: usize) -> Vec<f64> {
        (0..=self.cutoff)
            .map(|n| {
                compensated_sum((0..=self.cutoff).map(|m| {
                    if mode == 0 {
                        self.probability(n, m)
                    } else {
                        self.probability(m, n)
                    }
                }))
            })
            .collect()
    }
}

pub fn beamsplitter_output(lo_alpha: f64, source: &SourceSpec, cutoff: usize) -> Result<FockField> {
    if !(lo_alpha.is_finite() && lo_alpha >= 0.0) {
        return Err(invalid(format!("local oscillator amplitude must be >= 0, got {lo_alpha}")));
    }
    source.validate()?;

    let lo = coherent_amplitudes(lo_alpha, cutoff);
    let src = source.amplitudes(cutoff);
    let kept = compensated_sum((0..=cutoff).flat_map(|m| {
        let (lo, src) = (&lo, &src);
        (0..=cutoff - m).map(move |n| lo[m] * lo[m] * src[n].norm_sqr())
    }));
    let leakage = (1.0 - kept).max(0.0);
    if leakage > LEAKAGE_BOUND {
        return Err(Error::CutoffTooSmall {
            cutoff,
            leakage,
            bound: LEAKAGE_BOUND,
        });
    }

    let dim = cutoff + 1;
    let mut amplitudes = vec![Complex64::new(0.0, 0.0); dim * dim];
    let h = std::f64::consts::FRAC_1_SQRT_2;

    // images[m][j]: amplitude of |j, N-j>_{cd} in the image of |m, N-m>_{ab}.
    let mut images: Vec<Vec<f64>> = vec![vec![1.0]];
    for total in 0..=cutoff {
        if total > 0 {
            let mut next = Vec::with_capacity(total + 1);
            // b† on |0, N-1>: (c† - d†)/sqrt(2)
            next.push(raise(&images[0], total, -1.0, h / (total as f64).sqrt()));
            for m in 1..=total {
                next.push(raise(&images[m - 1], total, 1.0, h / (m as f64).sqrt()));
            }
            images = next;
        }
        for j in 0..=total {
            let terms = (0..=total).filter_map(|m| {
                let w = src[total - m] * lo[m];
                (w != Complex64::new(0.0, 0.0)).then(|| w * images[m][j])
            });
            let (mut re, mut im) = (Vec::new(), Vec::new());
            for t in terms {
                re.push(t.re);
                im.push(t.im);
            }
            amplitudes[j * dim + (total - j)] = Complex64::new(compensated_sum(re), compensated_sum(im));
        }
    }

    Ok(FockField {
        cutoff,
        amplitudes,
        leakage,
    })
}

/// Applies `(c† + sign d†) * scale` to a vector of the `(total-1)`-photon
/// block, returning a vector of the `total`-photon block.
fn raise(v: &[f64], total: usize, sign: f64, scale: f64) -> Vec<f64> {
    let mut out = vec![0.0; total + 1];
    let prev = total - 1;
    for (j, &x) in v.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        // c†: |j, prev-j> -> sqrt(j+1) |j+1, prev-j>
        out[j + 1] += ((j + 1) as f64).sqrt() * x * scale;
        // d†: |j, prev-j> -> sqrt(prev-j+1) |j, prev-j+1>
        out[j] += sign * ((prev - j + 1) as f64).sqrt() * x * scale;
    }
    out
}

/// Distribution of an integer variable starting at `offset`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Pmf {
    pub offset: i64,
    pub probabilities: Vec<f64>,
}

impl Pmf {
    pub fn prob(&self, k: i64) -> f64 {
        let i = k - self.offset;
        if i < 0 {
            return 0.0;
        }
        self.probabilities.get(i as usize).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        self.probabilities
            .iter()
            .enumerate()
            .map(move |(i, &p)| (self.offset + i as i64, p))
    }

    pub fn total(&self) -> f64 {
        compensated_sum(self.probabilities.iter().copied())
    }

    pub fn mean(&self) -> f64 {
        compensated_sum(self.iter().map(|(k, p)| k as f64 * p)) / self.total()
    }

    pub fn variance(&self) -> f64 {
        let mean = self.mean();
        compensated_sum(self.iter().map(|(k, p)| (k as f64 - mean).powi(2) * p)) / self.total()
    }

    pub fn max_abs_diff(&self, other: impl Fn(i64) -> f64) -> f64 {
        self.iter().map(|(k, p)| (p - other(k)).abs()).fold(0.0, f64::max)
    }
}

pub fn delta_n_pmf(lo_alpha: f64, source: &SourceSpec, cutoff: usize) -> Result<Pmf> {
    let field = beamsplitter_output(lo_alpha, source, cutoff)?;
    Ok(pmf_from_field(&field))
}

/// `P(dn = k) = sum over n_c - n_d = k of |amplitude|²`, trimmed of exact
/// zeros at both ends.
pub fn pmf_from_field(field: &FockField) -> Pmf {
    let cutoff = field.cutoff as i64;
    let mut probabilities: Vec<f64> = (-cutoff..=cutoff)
        .map(|k| {
            compensated_sum((0..=field.cutoff).filter_map(|n_d| {
                let n_c = n_d as i64 + k;
                (n_c >= 0 && n_c as usize + n_d <= field.cutoff)
                    .then(|| field.probability(n_c as usize, n_d))
            }))
        })
        .collect();
    let first = probabilities.iter().position(|&p| p != 0.0).unwrap_or(0);
    let last = probabilities.iter().rposition(|&p| p != 0.0).unwrap_or(0);
    probabilities.truncate(last + 1);
    probabilities.drain(..first);
    Pmf {
        offset: -cutoff + first as i64,
        probabilities,
    }
}

/// Skellam pmf: difference of independent Poisson(`mu1`) and Poisson(`mu2`).
pub fn skellam_pmf(k: i64, mu1: f64, mu2: f64) -> Result<f64> {
    if !(mu1.is_finite() && mu2.is_finite() && mu1 >= 0.0 && mu2 >= 0.0) {
        return Err(invalid(format!("Skellam rates must be >= 0, got ({mu1}, {mu2})")));
    }
    let n = k.unsigned_abs() as f64;
    let rate = if k >= 0 { mu1 } else { mu2 };
    let other = if k >= 0 { mu2 } else { mu1 };
    if rate == 0.0 {
        return Ok(if k == 0 && other == 0.0 { 1.0 } else if k == 0 { (-other).exp() } else { 0.0 });
    }
    // e^{-(mu1+mu2)} rate^n / n! * sum_m (mu1 mu2)^m / (m! (m+n)!) * n!
    let log_first = -(mu1 + mu2) + n * rate.ln() - libm::lgamma(n + 1.0);
    if other == 0.0 {
        return Ok(log_first.exp());
    }
    let log_r = (mu1 * mu2).ln();
    let mut log_terms = vec![log_first];
    let mut log_t = log_first;
    let peak = (mu1 * mu2).sqrt();
    let mut m = 0.0;
    loop {
        log_t += log_r - ((m + 1.0) * (m + 1.0 + n)).ln();
        m += 1.0;
        log_terms.push(log_t);
        let max = log_terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if m > peak && log_t < max - 45.0 {
            break;
        }
        if m > 1e6 {
            break;
        }
    }
    let max = log_terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let scaled = compensated_sum(log_terms.iter().map(|&l| (l - max).exp()));
    Ok((max + scaled.ln()).exp())
}

/// Total-variation distance between an integer pmf and the zero-mean
/// Gaussian of standard deviation `alpha` integrated over unit bins centred
/// on the integers.
pub fn gaussian_distance(pmf: &Pmf, alpha: f64) -> Result<f64> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(invalid(format!("alpha must be finite and > 0, got {alpha}")));
    }
    let reach = (12.0 * alpha).ceil() as i64 + 1;
    let lo = pmf.offset.min(-reach);
    let hi = (pmf.offset + pmf.probabilities.len() as i64 - 1).max(reach);
    let bin = |k: i64| normal_interval_mass(k as f64 - 0.5, k as f64 + 0.5, 0.0, alpha);
    let inside = compensated_sum((lo..=hi).map(|k| (pmf.prob(k) - bin(k)).abs()));
    let outside = normal_interval_mass(f64::NEG_INFINITY, lo as f64 - 0.5, 0.0, alpha)
        + normal_interval_mass(hi as f64 + 0.5, f64::INFINITY, 0.0, alpha);
    Ok((0.5 * (inside + outside)).clamp(0.0, 1.0))
}

/// The binned Gaussian used by [`gaussian_distance`], as a pmf over
/// `|k| <= reach`.
pub fn binned_gaussian(alpha: f64, reach: i64) -> Pmf {
    Pmf {
        offset: -reach,
        probabilities: (-reach..=reach)
            .map(|k| normal_interval_mass(k as f64 - 0.5, k as f64 + 0.5, 0.0, alpha))
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn poisson(n: usize, mean: f64) -> f64 {
        (-mean + n as f64 * mean.ln() - libm::lgamma(n as f64 + 1.0)).exp()
    }

    #[test]
    fn vacuum_in_vacuum_out() {
        let f = beamsplitter_output(0.0, &SourceSpec::Vacuum, 5).unwrap();
        assert_eq!(f.probability(0, 0), 1.0);
        let pmf = pmf_from_field(&f);
        assert_eq!(pmf.offset, 0);
        assert_eq!(pmf.probabilities, vec![1.0]);
    }

    #[test]
    fn vacuum_source_factorizes_into_coherent_outputs() {
        let alpha = 3.0;
        let cutoff = auto_cutoff(alpha, &SourceSpec::Vacuum);
        let f = beamsplitter_output(alpha, &SourceSpec::Vacuum, cutoff).unwrap();
        let mean = alpha * alpha / 2.0;
        for mode in [0, 1] {
            let marginal = f.marginal(mode);
            for (n, &p) in marginal.iter().enumerate().take(60) {
                assert!((p - poisson(n, mean)).abs() < 1e-10, "mode {mode} n {n}");
            }
        }
        let out = coherent_amplitudes(alpha / 2f64.sqrt(), cutoff);
        for c in 0..30 {
            for d in 0..30 {
                let a = f.amplitude(c, d);
                assert!((a.re - out[c] * out[d]).abs() < 1e-12 && a.im.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn coherent_source_factorizes() {
        let alpha = 2.0;
        let beta = Complex64::new(0.7, -0.4);
        let source = SourceSpec::Coherent(beta);
        let cutoff = auto_cutoff(alpha, &source);
        let f = beamsplitter_output(alpha, &source, cutoff).unwrap();
        let c_amp = SourceSpec::Coherent((alpha + beta) / 2f64.sqrt()).amplitudes(cutoff);
        let d_amp = SourceSpec::Coherent((alpha - beta) / 2f64.sqrt()).amplitudes(cutoff);
        for (c, &a) in c_amp.iter().enumerate().take(25) {
            for (d, &b) in d_amp.iter().enumerate().take(25) {
                assert!((f.amplitude(c, d) - a * b).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn unitarity() {
        let sources = [
            SourceSpec::Vacuum,
            SourceSpec::Coherent(Complex64::new(1.0, 0.5)),
            SourceSpec::Qubit(Complex64::new(0.6, 0.0), Complex64::new(0.0, 0.8)),
        ];
        for alpha in [0.0, 1.5, 4.0, 6.0] {
            for source in &sources {
                let cutoff = auto_cutoff(alpha, source);
                let f = beamsplitter_output(alpha, source, cutoff).unwrap();
                assert!((f.norm_sqr() - (1.0 - f.leakage())).abs() < 1e-10);
                assert!(f.leakage() <= LEAKAGE_BOUND);
            }
        }
    }

    #[test]
    fn cutoff_too_small_is_reported() {
        let err = beamsplitter_output(4.0, &SourceSpec::Vacuum, 10).unwrap_err();
        assert!(matches!(err, Error::CutoffTooSmall { cutoff: 10, .. }));
    }

    #[test]
    fn invalid_sources_rejected() {
        let q = SourceSpec::Qubit(Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0));
        assert!(beamsplitter_output(1.0, &q, 40).is_err());
        assert!(beamsplitter_output(-1.0, &SourceSpec::Vacuum, 40).is_err());
    }

    #[test]
    fn skellam_values() {
        assert_eq!(skellam_pmf(0, 0.0, 0.0).unwrap(), 1.0);
        assert_eq!(skellam_pmf(3, 0.0, 0.0).unwrap(), 0.0);
        let p = skellam_pmf(0, 2.0, 2.0).unwrap();
        assert!((p - 0.207_001_921_223_986_6).abs() < 1e-12, "{p}");
        assert!(skellam_pmf(0, -1.0, 2.0).is_err());
        // One-sided limits reduce to Poisson.
        assert!((skellam_pmf(3, 2.5, 0.0).unwrap() - poisson(3, 2.5)).abs() < 1e-15);
        assert!((skellam_pmf(-2, 0.0, 1.5).unwrap() - poisson(2, 1.5)).abs() < 1e-15);
        assert_eq!(skellam_pmf(-2, 1.5, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn skellam_normalized() {
        for (mu1, mu2) in [(2.0, 2.0), (0.3, 5.0), (18.0, 18.0), (50.0, 7.0)] {
            let reach = (8.0 * f64::sqrt(mu1 + mu2) + 20.0) as i64;
            let center = (mu1 - mu2) as i64;
            let total = compensated_sum(
                (center - reach..=center + reach).map(|k| skellam_pmf(k, mu1, mu2).unwrap()),
            );
            assert!((total - 1.0).abs() < 1e-10, "({mu1},{mu2}) -> {total}");
        }
    }

    #[test]
    fn skellam_matches_poisson_convolution() {
        // Independent route: direct convolution of two Poisson pmfs.
        let (mu1, mu2) = (3.3, 1.7);
        for k in -12i64..=15 {
            let conv = compensated_sum((0..200usize).filter_map(|n2| {
                let n1 = n2 as i64 + k;
                (n1 >= 0).then(|| poisson(n1 as usize, mu1) * poisson(n2, mu2))
            }));
            assert!((skellam_pmf(k, mu1, mu2).unwrap() - conv).abs() < 1e-14, "k={k}");
        }
    }

    #[test]
    fn gaussian_distance_of_identical_is_zero() {
        let g = binned_gaussian(3.0, 60);
        assert!(gaussian_distance(&g, 3.0).unwrap() < 1e-15);
        assert!(gaussian_distance(&g, 0.0).is_err());
    }

    #[test]
    fn gaussian_distance_bounded() {
        let point = Pmf {
            offset: 40,
            probabilities: vec![1.0],
        };
        let d = gaussian_distance(&point, 1.0).unwrap();
        assert!((d - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pmf_moments() {
        let pmf = Pmf {
            offset: -1,
            probabilities: vec![0.25, 0.5, 0.25],
        };
        assert_eq!(pmf.mean(), 0.0);
        assert_eq!(pmf.variance(), 0.5);
        assert_eq!(pmf.prob(-2), 0.0);
        assert_eq!(pmf.prob(1), 0.25);
        assert_eq!(pmf.prob(2), 0.0);
    }
}
