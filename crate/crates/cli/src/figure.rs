use homodyne_core::analysis::{drift_field, histogram, DriftField};
use homodyne_core::engine::derive_stream;
use homodyne_core::measurement::{conditional_pdf, pdf_vacuum, sample_record};
use homodyne_core::{EnsembleResult, FeedbackPolicy, SamplingMode, SimParams};

use crate::args::{FigureArgs, FigureKind, ModelArgs, RunArgs};
use crate::output::write_file;
use crate::simulate::{ensemble, run_config};
use crate::svg::{Axis, Svg};
use crate::Failure;

const PANEL: f64 = 260.0;
const RADIUS: f64 = 90.0;
/// Arrow length in pixels per unit of `|1 + s_z - g|`.
pub const ARROW_SCALE: f64 = 14.0;
const ARROW_HEAD: &str = r##"<marker id="head" viewBox="0 0 10 10" refX="9" refY="5" markerWidth="6" markerHeight="6" orient="auto"><path d="M0,0 L10,5 L0,10 z" fill="#1f4e9c"/></marker>"##;

pub fn run(a: &FigureArgs) -> Result<(), Failure> {
    let svg = match a.kind {
        FigureKind::DriftField => {
            let params = params(&a.model)?;
            let policies = match a.policy {
                Some(p) => vec![p],
                None => vec![
                    FeedbackPolicy::NoFeedback,
                    FeedbackPolicy::Compensation,
                    FeedbackPolicy::Inversion,
                ],
            };
            let fields = policies
                .iter()
                .map(|p| drift_field(&params, p.gain(), a.grid).map(|f| (*p, f)))
                .collect::<Result<Vec<_>, _>>()?;
            drift_svg(&fields)
        }
        FigureKind::Decay => {
            let run = run_args(a);
            let config = run_config(&run)?;
            decay_svg(&ensemble(&config)?, &run)
        }
        FigureKind::RecordHistogram => histogram_svg(a)?,
    };
    write_file(&a.out, &svg)
}

fn params(m: &ModelArgs) -> Result<SimParams, Failure> {
    let p = SimParams::new(m.gamma, m.tau, m.alpha)?;
    if let Some(w) = p.coupling_warning() {
        eprintln!("warning: {w}");
    }
    Ok(p)
}

fn run_args(a: &FigureArgs) -> RunArgs {
    RunArgs {
        model: a.model.clone(),
        policy: a.policy.unwrap_or(FeedbackPolicy::NoFeedback),
        sampling: a.sampling,
        initial: a.initial,
        steps: a.steps,
        trajectories: a.trajectories,
        seed: a.seed,
    }
}

/// One circle per scenario in the `(s_x, s_z)` plane, excited state on top.
/// Arrows follow the mean rotation after a positive record.
pub fn drift_svg(fields: &[(FeedbackPolicy, DriftField)]) -> String {
    let mut svg = Svg::new(PANEL * fields.len() as f64, PANEL + 30.0);
    for (i, (policy, field)) in fields.iter().enumerate() {
        let cx = PANEL * (i as f64 + 0.5);
        let cy = PANEL / 2.0 + 20.0;
        svg.text(cx, 20.0, &format!("{policy} (g = {})", field.gain), r#"text-anchor="middle""#);
        svg.circle(cx, cy, RADIUS, r##"class="bloch" fill="none" stroke="#888""##);
        svg.line(cx - RADIUS - 8.0, cy, cx + RADIUS + 8.0, cy, r##"stroke="#ddd""##);
        svg.line(cx, cy - RADIUS - 8.0, cx, cy + RADIUS + 8.0, r##"stroke="#ddd""##);
        svg.text(cx + 4.0, cy - RADIUS - 10.0, "s_z = +1", r#"font-size="10""#);
        svg.text(cx + 4.0, cy + RADIUS + 18.0, "s_z = -1", r#"font-size="10""#);
        for p in &field.points {
            let (x, y) = (cx + RADIUS * p.s_x, cy - RADIUS * p.s_z);
            if p.fixed_point {
                svg.circle(x, y, 5.0, r##"class="fixed-point" fill="#c0392b""##);
                continue;
            }
            // Increasing phi moves along (s_z, -s_x); screen y points down.
            let sign = p.mean_rotation_positive.signum();
            let length = ARROW_SCALE * (1.0 + p.s_z - field.gain).abs();
            let (dx, dy) = (sign * p.s_z * length, sign * p.s_x * length);
            svg.circle(x, y, 1.5, r##"fill="#1f4e9c""##);
            svg.line(x, y, x + dx, y + dy, r##"class="arrow" stroke="#1f4e9c" stroke-width="1.5" marker-end="url(#head)""##);
        }
    }
    svg.finish(ARROW_HEAD)
}

const WIDTH: f64 = 560.0;
const HEIGHT: f64 = 360.0;
const MARGIN: f64 = 50.0;
const MAX_POINTS: usize = 500;

fn frame(svg: &mut Svg, title: &str, x_label: &str, y_label: &str) {
    svg.rect(MARGIN, MARGIN, WIDTH - 2.0 * MARGIN, HEIGHT - 2.0 * MARGIN, r##"fill="none" stroke="#444""##);
    svg.text(WIDTH / 2.0, 25.0, title, r#"text-anchor="middle""#);
    svg.text(WIDTH / 2.0, HEIGHT - 12.0, x_label, r#"text-anchor="middle""#);
    svg.text(14.0, HEIGHT / 2.0, y_label, r#"text-anchor="middle" transform="rotate(-90 14 180)""#);
}

fn tick_labels(svg: &mut Svg, x: Axis, y: Axis) {
    for (v, anchor) in [(x.lo, "start"), (x.hi, "end")] {
        svg.text(x.map(v), HEIGHT - MARGIN + 15.0, &format!("{v}"), &format!(r#"text-anchor="{anchor}" font-size="10""#));
    }
    for v in [y.lo, y.hi] {
        svg.text(MARGIN - 4.0, y.map(v) + 4.0, &format!("{v}"), r#"text-anchor="end" font-size="10""#);
    }
}

/// `<s_z>(t)` with a one-standard-error band.
pub fn decay_svg(r: &EnsembleResult, run: &RunArgs) -> String {
    let mut svg = Svg::new(WIDTH, HEIGHT);
    let t_end = *r.time.last().unwrap_or(&0.0);
    let x = Axis { lo: 0.0, hi: if t_end > 0.0 { t_end } else { 1.0 }, from: MARGIN, to: WIDTH - MARGIN };
    let y = Axis { lo: -1.0, hi: 1.0, from: HEIGHT - MARGIN, to: MARGIN };
    frame(
        &mut svg,
        &format!(
            "policy {} from {}, {} trajectories, seed {}",
            run.policy, run.initial, run.trajectories, run.seed
        ),
        "time",
        "mean s_z",
    );
    tick_labels(&mut svg, x, y);

    let stride = r.len().div_ceil(MAX_POINTS).max(1);
    let rows: Vec<usize> = (0..r.len()).step_by(stride).chain(r.len().checked_sub(1)).collect();
    let mut rows = rows;
    rows.dedup();

    let upper = rows.iter().map(|&k| (x.map(r.time[k]), y.map((r.mean_sz[k] + r.stderr_sz[k]).min(1.0))));
    let lower = rows.iter().rev().map(|&k| (x.map(r.time[k]), y.map((r.mean_sz[k] - r.stderr_sz[k]).max(-1.0))));
    let band: Vec<_> = upper.chain(lower).collect();
    svg.polygon(&band, r##"class="stderr-band" fill="#9ecae1" stroke="none""##);
    let mean: Vec<_> = rows.iter().map(|&k| (x.map(r.time[k]), y.map(r.mean_sz[k]))).collect();
    svg.polyline(&mean, r##"class="mean" fill="none" stroke="#08519c" stroke-width="1.5""##);

    if run.policy == FeedbackPolicy::NoFeedback {
        // Exponential relaxation toward the ground state for comparison.
        let s0 = r.mean_sz.first().copied().unwrap_or(1.0);
        let gamma = run.model.gamma;
        let reference: Vec<_> = rows
            .iter()
            .map(|&k| (x.map(r.time[k]), y.map((1.0 + s0) * (-gamma * r.time[k]).exp() - 1.0)))
            .collect();
        svg.polyline(&reference, r##"class="reference" fill="none" stroke="#666" stroke-dasharray="4 3""##);
    }
    svg.finish("")
}

/// Histogram of single-step records with the vacuum Gaussian overlaid, and
/// the conditional mixture when records are sampled conditionally.
fn histogram_svg(a: &FigureArgs) -> Result<String, Failure> {
    let params = params(&a.model)?;
    if a.bins == 0 || a.samples == 0 {
        return Err(Failure::Usage("--bins and --samples must be >= 1".into()));
    }
    let state = a.initial.state();
    let alpha = params.alpha();
    let mut rng = derive_stream(a.seed, 0);
    let values: Vec<f64> = (0..a.samples)
        .map(|_| sample_record(state, &params, a.sampling, &mut rng).delta_n)
        .collect();
    let range = (-5.0 * alpha, 5.0 * alpha);
    let h = histogram(&values, a.bins, range)?;
    let width = h.bin_width();
    let n = a.samples as f64;
    let peak = pdf_vacuum(0.0, alpha)?;
    let densities: Vec<f64> = h.counts.iter().map(|&c| c as f64 / (n * width)).collect();
    let top = densities.iter().copied().fold(peak, f64::max) * 1.1;

    let mut svg = Svg::new(WIDTH, HEIGHT);
    let x = Axis { lo: range.0, hi: range.1, from: MARGIN, to: WIDTH - MARGIN };
    let y = Axis { lo: 0.0, hi: top, from: HEIGHT - MARGIN, to: MARGIN };
    frame(
        &mut svg,
        &format!("{} records from {}, {} sampling, seed {}", a.samples, a.initial, a.sampling, a.seed),
        "delta_n",
        "density",
    );
    tick_labels(&mut svg, x, Axis { hi: 0.0, ..y });
    for (i, d) in densities.iter().enumerate() {
        let left = x.map(range.0 + i as f64 * width);
        let right = x.map(range.0 + (i + 1) as f64 * width);
        svg.rect(left, y.map(*d), right - left, y.map(0.0) - y.map(*d), r##"class="bar" fill="#c6dbef" stroke="#6baed6""##);
    }
    let grid: Vec<f64> = (0..=400).map(|i| range.0 + (range.1 - range.0) * i as f64 / 400.0).collect();
    let gauss: Vec<_> = grid
        .iter()
        .map(|&v| Ok((x.map(v), y.map(pdf_vacuum(v, alpha)?))))
        .collect::<Result<_, homodyne_core::Error>>()?;
    svg.polyline(&gauss, r##"class="vacuum-gaussian" fill="none" stroke="#000" stroke-width="1.5""##);
    if a.sampling == SamplingMode::Conditional {
        let mix: Vec<_> = grid
            .iter()
            .map(|&v| (x.map(v), y.map(conditional_pdf(v, state, &params))))
            .collect();
        svg.polyline(&mix, r##"class="conditional" fill="none" stroke="#d94801" stroke-dasharray="5 3""##);
    }
    Ok(svg.finish(""))
}
