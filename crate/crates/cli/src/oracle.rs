use homodyne_core::oracle::{auto_cutoff, beamsplitter_output, gaussian_distance, pmf_from_field, skellam_pmf, SourceSpec};
use serde::Serialize;

use crate::args::{Cutoff, OracleArgs};
use crate::output::{num, sidecar, write_file};
use crate::Failure;

#[derive(Debug, Serialize)]
struct Summary {
    alpha: f64,
    source: String,
    cutoff: usize,
    leakage: f64,
    total_probability: f64,
    mean: f64,
    variance: f64,
    /// Against unit-bin masses of the zero-mean Gaussian with variance
    /// `alpha²`; absent when `alpha = 0`.
    tv_distance_vs_eq2: Option<f64>,
    skellam_max_abs_err: Option<f64>,
}

pub fn run(a: &OracleArgs) -> Result<(), Failure> {
    let source = a.source.0;
    let cutoff = match a.cutoff {
        Cutoff::Auto => auto_cutoff(a.alpha.max(0.0), &source),
        Cutoff::Fixed(n) => n,
    };
    let field = beamsplitter_output(a.alpha, &source, cutoff)?;
    let pmf = pmf_from_field(&field);

    let tv = if a.alpha > 0.0 {
        Some(gaussian_distance(&pmf, a.alpha)?)
    } else {
        None
    };
    let skellam = match source {
        SourceSpec::Vacuum => {
            let half = a.alpha * a.alpha / 2.0;
            let mut worst: f64 = 0.0;
            for (k, p) in pmf.iter() {
                worst = worst.max((p - skellam_pmf(k, half, half)?).abs());
            }
            Some(worst)
        }
        _ => None,
    };

    let mut csv = String::from("delta_n,probability\n");
    for (k, p) in pmf.iter() {
        csv.push_str(&format!("{k},{}\n", num(p)));
    }
    write_file(&a.out, &csv)?;

    let summary = Summary {
        alpha: a.alpha,
        source: a.source.to_string(),
        cutoff,
        leakage: field.leakage(),
        total_probability: pmf.total(),
        mean: pmf.mean(),
        variance: pmf.variance(),
        tv_distance_vs_eq2: tv,
        skellam_max_abs_err: skellam,
    };
    let mut json = serde_json::to_string_pretty(&summary).expect("serializable summary");
    json.push('\n');
    write_file(&sidecar(&a.out, ".summary.json"), &json)
}
