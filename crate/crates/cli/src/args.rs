//! Flag definitions and the flat `key=value` config file.

use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use homodyne_core::oracle::SourceSpec;
use homodyne_core::{BlochState, FeedbackPolicy, SamplingMode};
use num_complex::Complex64;

use crate::Failure;

#[derive(Debug, Parser)]
#[command(name = "homodyne", version, about = "Homodyne-monitored two-level emitter simulator")]
#[command(args_override_self = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run an ensemble of trajectories and write its moments.
    Simulate(SimulateArgs),
    /// Exact photon-difference distribution from the two-mode Fock model.
    Oracle(OracleArgs),
    /// Render an SVG figure.
    Figure(FigureArgs),
    /// Run the acceptance checks.
    Validate(ValidateArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    /// Measurement interval in units of 1/gamma.
    #[arg(long, default_value_t = 1e-3)]
    pub tau: f64,
    /// Local-oscillator amplitude.
    #[arg(long, default_value_t = 100.0)]
    pub alpha: f64,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value = "none")]
    pub policy: FeedbackPolicy,
    #[arg(long, default_value = "conditional")]
    pub sampling: SamplingMode,
    #[arg(long, default_value = "excited")]
    pub initial: InitialState,
    #[arg(long, default_value_t = 1000)]
    pub steps: u64,
    #[arg(long, default_value_t = 1000)]
    pub trajectories: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Flat key=value file; command-line flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Also write every trajectory step to this CSV file.
    #[arg(long)]
    pub dump_trajectories: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub alpha: f64,
    #[arg(long, default_value = "vacuum")]
    pub source: Source,
    /// Photon-number cutoff, or `auto`.
    #[arg(long, default_value = "auto")]
    pub cutoff: Cutoff,
    /// Distribution CSV; the summary goes to `<out>.summary.json`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FigureArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub kind: FigureKind,
    /// Drift-field panel to draw; all three scenarios when omitted.
    /// For the other kinds this is the feedback policy of the run.
    #[arg(long)]
    pub policy: Option<FeedbackPolicy>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value = "conditional")]
    pub sampling: SamplingMode,
    #[arg(long, default_value = "excited")]
    pub initial: InitialState,
    #[arg(long, default_value_t = 3000)]
    pub steps: u64,
    #[arg(long, default_value_t = 1000)]
    pub trajectories: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Grid points around each drift-field circle.
    #[arg(long, default_value_t = 16)]
    pub grid: usize,
    /// Records drawn for the histogram.
    #[arg(long, default_value_t = 100_000)]
    pub samples: u64,
    #[arg(long, default_value_t = 60)]
    pub bins: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FigureKind {
    DriftField,
    Decay,
    RecordHistogram,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Replaces the compensation gain; for checking that the suite can fail.
    #[arg(long, hide = true, default_value_t = 1.0)]
    pub debug_compensation_gain: f64,
}

/// `excited|ground|dipole+|dipole-|phi:X`, kept as typed for echoing back.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialState {
    Excited,
    Ground,
    DipolePlus,
    DipoleMinus,
    Angle(f64),
}

impl InitialState {
    pub fn state(self) -> BlochState {
        match self {
            InitialState::Excited => BlochState::EXCITED,
            InitialState::Ground => BlochState::GROUND,
            InitialState::DipolePlus => BlochState::DIPOLE_PLUS,
            InitialState::DipoleMinus => BlochState::DIPOLE_MINUS,
            InitialState::Angle(phi) => BlochState::from_angle(phi).expect("checked when parsed"),
        }
    }
}

impl FromStr for InitialState {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "excited" => Ok(InitialState::Excited),
            "ground" => Ok(InitialState::Ground),
            "dipole+" => Ok(InitialState::DipolePlus),
            "dipole-" => Ok(InitialState::DipoleMinus),
            _ => {
                let x = s
                    .strip_prefix("phi:")
                    .ok_or_else(|| format!("expected excited|ground|dipole+|dipole-|phi:X, got {s:?}"))?;
                let phi: f64 = x.trim().parse().map_err(|_| format!("bad angle {x:?}"))?;
                BlochState::from_angle(phi).map_err(|e| e.to_string())?;
                Ok(InitialState::Angle(phi))
            }
        }
    }
}

impl fmt::Display for InitialState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitialState::Excited => f.write_str("excited"),
            InitialState::Ground => f.write_str("ground"),
            InitialState::DipolePlus => f.write_str("dipole+"),
            InitialState::DipoleMinus => f.write_str("dipole-"),
            InitialState::Angle(phi) => write!(f, "phi:{phi}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Source(pub SourceSpec);

fn parse_floats(s: &str, n: usize) -> Result<Vec<f64>, String> {
    let values: Vec<f64> = s
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| format!("bad number {v:?}")))
        .collect::<Result<_, _>>()?;
    if values.len() != n {
        return Err(format!("expected {n} comma-separated numbers, got {}", values.len()));
    }
    Ok(values)
}

impl FromStr for Source {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let spec = if s == "vacuum" {
            SourceSpec::Vacuum
        } else if let Some(rest) = s.strip_prefix("coherent:") {
            let v = parse_floats(rest, 2)?;
            SourceSpec::Coherent(Complex64::new(v[0], v[1]))
        } else if let Some(rest) = s.strip_prefix("qubit:") {
            let v = parse_floats(rest, 4)?;
            SourceSpec::Qubit(Complex64::new(v[0], v[1]), Complex64::new(v[2], v[3]))
        } else {
            return Err(format!(
                "expected vacuum|coherent:RE,IM|qubit:C0RE,C0IM,C1RE,C1IM, got {s:?}"
            ));
        };
        spec.validate().map_err(|e| e.to_string())?;
        Ok(Source(spec))
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            SourceSpec::Vacuum => f.write_str("vacuum"),
            SourceSpec::Coherent(b) => write!(f, "coherent:{},{}", b.re, b.im),
            SourceSpec::Qubit(c0, c1) => write!(f, "qubit:{},{},{},{}", c0.re, c0.im, c1.re, c1.im),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cutoff {
    Auto,
    Fixed(usize),
}

impl FromStr for Cutoff {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "auto" {
            return Ok(Cutoff::Auto);
        }
        s.parse()
            .map(Cutoff::Fixed)
            .map_err(|_| format!("expected a non-negative integer or auto, got {s:?}"))
    }
}

/// Splices `--config FILE` entries in front of the remaining flags so that
/// anything given on the command line wins. Only the first `--config` is
/// honoured.
pub fn expand_config(argv: Vec<OsString>) -> Result<Vec<OsString>, Failure> {
    if argv.len() < 2 {
        return Ok(argv);
    }
    let mut rest: Vec<OsString> = Vec::with_capacity(argv.len());
    let mut path = None;
    let mut iter = argv[2..].iter();
    while let Some(arg) = iter.next() {
        let text = arg.to_string_lossy();
        if path.is_none() && text == "--config" {
            match iter.next() {
                Some(p) => path = Some(PathBuf::from(p)),
                None => return Err(Failure::Usage("--config requires a path".into())),
            }
        } else if let Some(p) = text.strip_prefix("--config=").filter(|_| path.is_none()) {
            path = Some(PathBuf::from(p));
        } else {
            rest.push(arg.clone());
        }
    }
    let Some(path) = path else {
        return Ok(argv);
    };
    let mut out = argv[..2].to_vec();
    out.extend(read_config(&path)?);
    out.extend(rest);
    Ok(out)
}

fn read_config(path: &Path) -> Result<Vec<OsString>, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Io(format!("cannot read config {}: {e}", path.display())))?;
    parse_config(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

/// `key=value` lines; blank lines and `#` comments are skipped.
pub fn parse_config(text: &str) -> Result<Vec<OsString>, String> {
    let mut args = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected key=value", n + 1))?;
        let key = key.trim();
        if key.is_empty() || key == "config" || key.starts_with('-') {
            return Err(format!("line {}: invalid key {key:?}", n + 1));
        }
        args.push(OsString::from(format!("--{key}")));
        args.push(OsString::from(value.trim()));
    }
    Ok(args)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn os(v: &[&str]) -> Vec<OsString> {
        v.iter().map(OsString::from).collect()
    }

    #[test]
    fn config_lines_become_flags() {
        let args = parse_config("# run\nseed = 7\n\npolicy=custom:0.5\n").unwrap();
        assert_eq!(args, os(&["--seed", "7", "--policy", "custom:0.5"]));
        assert!(parse_config("seed 7").is_err());
        assert!(parse_config("config=x").is_err());
    }

    #[test]
    fn file_values_precede_command_line() {
        let dir = std::env::temp_dir().join(format!("homodyne-args-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("run.conf");
        std::fs::write(&path, "seed=3\n").unwrap();
        let argv = os(&["homodyne", "simulate", "--seed", "9", "--config", path.to_str().unwrap()]);
        let expanded = expand_config(argv).unwrap();
        assert_eq!(expanded, os(&["homodyne", "simulate", "--seed", "3", "--seed", "9"]));
        let cli = Cli::try_parse_from(
            expanded.into_iter().chain(os(&["--out", "x.csv"])),
        )
        .unwrap();
        match cli.command {
            Command::Simulate(a) => assert_eq!(a.run.seed, 9),
            _ => unreachable!(),
        }
        std::fs::remove_dir_all(dir).unwrap();
    }

    #[test]
    fn initial_and_source_round_trip() {
        for s in ["excited", "ground", "dipole+", "dipole-", "phi:0.25"] {
            assert_eq!(s.parse::<InitialState>().unwrap().to_string(), s);
        }
        assert!("phi:nan".parse::<InitialState>().is_err());
        for s in ["vacuum", "coherent:0.5,-1", "qubit:0.6,0,0,0.8"] {
            assert_eq!(s.parse::<Source>().unwrap().to_string(), s);
        }
        assert!("qubit:1,0,1,0".parse::<Source>().is_err());
        assert_eq!("auto".parse::<Cutoff>().unwrap(), Cutoff::Auto);
        assert_eq!("12".parse::<Cutoff>().unwrap(), Cutoff::Fixed(12));
    }
}
