//! Run configuration: defaults, flat `key=value` files and flag overrides,
//! resolved into one fully specified [`RunConfig`] that is echoed into the
//! manifest next to every output.

use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Subcommand, ValueEnum};
use ri_onset::sde::StepperKind;
use ri_onset::sweep::SweepParam;
use ri_onset::{ModelParams, State, DEFAULT_DT, DEFAULT_ELL, DEFAULT_T_MAX};

use crate::error::CliError;

/// Bumped whenever a column or manifest key changes meaning.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Deterministic onset time T and variance factor H along parameter sweeps
    DetTime,
    /// Monte-Carlo onset probability along a v0 or s sweep, per noise level
    OnsetProb,
    /// Smallest v0 reaching the target onset probability, per noise level
    Indicator,
    /// Onset-time histograms with the Gaussian small-noise overlay
    Hist,
    /// Monte-Carlo conditional variance of the onset time next to theory
    Variance,
    /// Hitting probability, conditional time and erf regimes of a scalar diffusion
    Onedim,
    /// Dump a single stochastic path
    Simulate,
}

impl Command {
    pub const ALL: [Command; 7] = [
        Command::DetTime,
        Command::OnsetProb,
        Command::Indicator,
        Command::Hist,
        Command::Variance,
        Command::Onedim,
        Command::Simulate,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Command::DetTime => "det-time",
            Command::OnsetProb => "onset-prob",
            Command::Indicator => "indicator",
            Command::Hist => "hist",
            Command::Variance => "variance",
            Command::Onedim => "onedim",
            Command::Simulate => "simulate",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl Format {
    pub fn name(&self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

impl FromStr for Format {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(format!("unknown format '{s}' (csv or json)")),
        }
    }
}

fn parse_stepper(s: &str) -> Result<StepperKind, String> {
    match s {
        "rk4" => Ok(StepperKind::Rk4PlusNoise),
        "euler" => Ok(StepperKind::EulerMaruyama),
        _ => Err(format!("unknown stepper '{s}' (rk4 or euler)")),
    }
}

fn stepper_name(k: StepperKind) -> &'static str {
    match k {
        StepperKind::Rk4PlusNoise => "rk4",
        StepperKind::EulerMaruyama => "euler",
    }
}

fn parse_sweep(s: &str) -> Result<SweepParam, String> {
    SweepParam::parse(s).ok_or_else(|| format!("unknown sweep parameter '{s}' (v0, s, r or p)"))
}

/// Optional settings shared by the flag parser and the config-file reader.
#[derive(Debug, Clone, Default, Args)]
pub struct Settings {
    /// Flat key=value file; explicit flags take precedence over it
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub p: Option<f64>,
    #[arg(long, global = true)]
    pub r: Option<f64>,
    #[arg(long, global = true)]
    pub s: Option<f64>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub u0: Option<f64>,
    #[arg(long, global = true)]
    pub v0: Option<f64>,
    #[arg(long, global = true)]
    pub b0: Option<f64>,
    #[arg(long, global = true)]
    pub ell: Option<f64>,
    #[arg(long, global = true)]
    pub dt: Option<f64>,
    #[arg(long, global = true)]
    pub tmax: Option<f64>,
    /// Noise amplitude; also the one-element default for --eps-list
    #[arg(long, global = true)]
    pub eps: Option<f64>,
    /// Realizations per ensemble
    #[arg(long, global = true)]
    pub n: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub format: Option<Format>,
    /// Swept parameters (det-time, onset-prob)
    #[arg(long, global = true, value_delimiter = ',', value_parser = parse_sweep)]
    pub sweep: Option<Vec<SweepParam>>,
    /// Sweep values; only with a single sweep parameter
    #[arg(long, global = true, value_delimiter = ',', allow_hyphen_values = true)]
    pub values: Option<Vec<f64>>,
    #[arg(long = "v0-list", global = true, value_delimiter = ',')]
    pub v0_list: Option<Vec<f64>>,
    #[arg(long = "eps-list", global = true, value_delimiter = ',')]
    pub eps_list: Option<Vec<f64>>,
    /// Independent batches per sweep point (onset-prob)
    #[arg(long, global = true)]
    pub experiments: Option<usize>,
    /// Realizations per batch (onset-prob)
    #[arg(long = "per-experiment", global = true)]
    pub per_experiment: Option<usize>,
    /// Target onset probability (indicator)
    #[arg(long, global = true)]
    pub target: Option<f64>,
    /// Histogram bin count; Freedman-Diaconis when 0
    #[arg(long, global = true)]
    pub bins: Option<usize>,
    /// rk4 or euler
    #[arg(long, global = true, value_parser = parse_stepper)]
    pub stepper: Option<StepperKind>,
    /// zero, linear or logistic (onedim)
    #[arg(long, global = true)]
    pub drift: Option<String>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub coeff: Option<f64>,
    /// Starting points of the scalar diffusion (onedim)
    #[arg(long, global = true, value_delimiter = ',')]
    pub xs: Option<Vec<f64>>,
    /// Also evaluate at x = c * eps (onedim)
    #[arg(long, global = true)]
    pub c: Option<f64>,
    /// Noise stream of the dumped path (simulate)
    #[arg(long, global = true)]
    pub stream: Option<u64>,
}

fn parse_value<T: FromStr>(key: &str, v: &str) -> Result<T, CliError>
where
    T::Err: Display,
{
    v.trim()
        .parse()
        .map_err(|e| CliError::Config(format!("{key}: cannot parse '{v}': {e}")))
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>, CliError>
where
    T::Err: Display,
{
    v.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse_value(key, s))
        .collect()
}

impl Settings {
    /// Reads a `key=value` file. Blank lines and `#` comments are skipped;
    /// keys may use `-` or `_`. Returns the settings and the `command` key
    /// if present.
    pub fn from_file(path: &Path) -> Result<(Self, Option<Command>), CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse_text(&text)
    }

    pub fn parse_text(text: &str) -> Result<(Self, Option<Command>), CliError> {
        let mut s = Settings::default();
        let mut command = None;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Config(format!(
                    "line {}: expected key=value, got '{line}'",
                    lineno + 1
                ))
            })?;
            let key = key.trim().replace('-', "_");
            let v = value.trim();
            match key.as_str() {
                "schema_version" => {
                    let version: u32 = parse_value(&key, v)?;
                    if version != SCHEMA_VERSION {
                        return Err(CliError::Config(format!(
                            "schema_version {version} is not supported (expected {SCHEMA_VERSION})"
                        )));
                    }
                }
                "command" => {
                    command = Some(
                        Command::parse(v)
                            .ok_or_else(|| CliError::Config(format!("unknown command '{v}'")))?,
                    )
                }
                "p" => s.p = Some(parse_value(&key, v)?),
                "r" => s.r = Some(parse_value(&key, v)?),
                "s" => s.s = Some(parse_value(&key, v)?),
                "u0" => s.u0 = Some(parse_value(&key, v)?),
                "v0" => s.v0 = Some(parse_value(&key, v)?),
                "b0" => s.b0 = Some(parse_value(&key, v)?),
                "ell" => s.ell = Some(parse_value(&key, v)?),
                "dt" => s.dt = Some(parse_value(&key, v)?),
                "tmax" => s.tmax = Some(parse_value(&key, v)?),
                "eps" => s.eps = Some(parse_value(&key, v)?),
                "n" => s.n = Some(parse_value(&key, v)?),
                "seed" => s.seed = Some(parse_value(&key, v)?),
                "out" => s.out = Some(PathBuf::from(v)),
                "format" => s.format = Some(v.parse().map_err(CliError::Config)?),
                "sweep" => {
                    s.sweep = Some(
                        v.split(',')
                            .map(|x| parse_sweep(x.trim()).map_err(CliError::Config))
                            .collect::<Result<_, _>>()?,
                    )
                }
                "values" => s.values = Some(parse_list(&key, v)?),
                "v0_list" => s.v0_list = Some(parse_list(&key, v)?),
                "eps_list" => s.eps_list = Some(parse_list(&key, v)?),
                "experiments" => s.experiments = Some(parse_value(&key, v)?),
                "per_experiment" => s.per_experiment = Some(parse_value(&key, v)?),
                "target" => s.target = Some(parse_value(&key, v)?),
                "bins" => s.bins = Some(parse_value(&key, v)?),
                "stepper" => s.stepper = Some(parse_stepper(v).map_err(CliError::Config)?),
                "drift" => s.drift = Some(v.to_string()),
                "coeff" => s.coeff = Some(parse_value(&key, v)?),
                "xs" => s.xs = Some(parse_list(&key, v)?),
                "c" => s.c = Some(parse_value(&key, v)?),
                "stream" => s.stream = Some(parse_value(&key, v)?),
                other => return Err(CliError::Config(format!("unknown key '{other}'"))),
            }
        }
        Ok((s, command))
    }

    /// Field-wise `self.or(lower)`.
    pub fn over(self, lower: Settings) -> Settings {
        Settings {
            config: self.config.or(lower.config),
            p: self.p.or(lower.p),
            r: self.r.or(lower.r),
            s: self.s.or(lower.s),
            u0: self.u0.or(lower.u0),
            v0: self.v0.or(lower.v0),
            b0: self.b0.or(lower.b0),
            ell: self.ell.or(lower.ell),
            dt: self.dt.or(lower.dt),
            tmax: self.tmax.or(lower.tmax),
            eps: self.eps.or(lower.eps),
            n: self.n.or(lower.n),
            seed: self.seed.or(lower.seed),
            out: self.out.or(lower.out),
            format: self.format.or(lower.format),
            sweep: self.sweep.or(lower.sweep),
            values: self.values.or(lower.values),
            v0_list: self.v0_list.or(lower.v0_list),
            eps_list: self.eps_list.or(lower.eps_list),
            experiments: self.experiments.or(lower.experiments),
            per_experiment: self.per_experiment.or(lower.per_experiment),
            target: self.target.or(lower.target),
            bins: self.bins.or(lower.bins),
            stepper: self.stepper.or(lower.stepper),
            drift: self.drift.or(lower.drift),
            coeff: self.coeff.or(lower.coeff),
            xs: self.xs.or(lower.xs),
            c: self.c.or(lower.c),
            stream: self.stream.or(lower.stream),
        }
    }
}

/// Fully resolved configuration of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub params: ModelParams,
    pub x0: State,
    pub ell: f64,
    pub dt: f64,
    pub t_max: f64,
    pub epsilon: f64,
    pub n: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub format: Format,
    pub sweep: Vec<SweepParam>,
    /// Empty means the per-parameter default grid.
    pub values: Vec<f64>,
    pub v0_list: Vec<f64>,
    pub eps_list: Vec<f64>,
    pub experiments: usize,
    pub per_experiment: usize,
    pub target: f64,
    pub bins: usize,
    pub stepper: StepperKind,
    pub drift: String,
    pub coeff: f64,
    pub xs: Vec<f64>,
    pub c: f64,
    pub stream: u64,
}

fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

impl RunConfig {
    /// Defaults, then the config file (if any), then explicit flags.
    pub fn resolve(command: Command, flags: Settings) -> Result<Self, CliError> {
        let settings = match &flags.config {
            Some(path) => {
                let (file, file_command) = Settings::from_file(path)?;
                if let Some(c) = file_command {
                    if c != command {
                        return Err(CliError::Config(format!(
                            "config file is for '{}', not '{}'",
                            c.name(),
                            command.name()
                        )));
                    }
                }
                flags.over(file)
            }
            None => flags,
        };
        Self::from_settings(command, settings)
    }

    pub fn from_settings(command: Command, s: Settings) -> Result<Self, CliError> {
        let defaults = ModelParams::default();
        let reference = State::reference();
        let format = s.format.unwrap_or_default();
        let epsilon = s.eps.unwrap_or(0.01);
        let ell = s.ell.unwrap_or(DEFAULT_ELL);
        let default_eps = match command {
            Command::OnsetProb => vec![1e-3, 1e-2, 1e-1],
            Command::Indicator => grid(0.001, 0.01, 10),
            Command::Hist | Command::Variance => vec![1e-4, 1e-3, 1e-2],
            Command::Onedim => vec![1e-1, 1e-2, 1e-3],
            Command::DetTime | Command::Simulate => vec![epsilon],
        };
        let eps_list = s.eps_list.or(s.eps.map(|e| vec![e])).unwrap_or(default_eps);
        let default_v0s = match command {
            Command::Variance => grid(0.01, 0.05, 9),
            _ => vec![0.01, 0.02, 0.03],
        };
        let default_sweep = match command {
            Command::DetTime => SweepParam::ALL.to_vec(),
            _ => vec![SweepParam::V0],
        };
        let cfg = RunConfig {
            command,
            params: ModelParams {
                p: s.p.unwrap_or(defaults.p),
                r: s.r.unwrap_or(defaults.r),
                s: s.s.unwrap_or(defaults.s),
            },
            x0: State::new(
                s.u0.unwrap_or(reference.u),
                s.v0.unwrap_or(reference.v),
                s.b0.unwrap_or(reference.b),
            ),
            ell,
            dt: s.dt.unwrap_or(DEFAULT_DT),
            t_max: s.tmax.unwrap_or(DEFAULT_T_MAX),
            epsilon,
            n: s.n.unwrap_or(1000),
            seed: s.seed.unwrap_or(1),
            out: s
                .out
                .unwrap_or_else(|| PathBuf::from(format!("{}.{}", command.name(), format.name()))),
            format,
            sweep: s.sweep.unwrap_or(default_sweep),
            values: s.values.unwrap_or_default(),
            v0_list: s.v0_list.unwrap_or(default_v0s),
            eps_list,
            experiments: s.experiments.unwrap_or(10),
            per_experiment: s.per_experiment.unwrap_or(100),
            target: s.target.unwrap_or(0.8),
            bins: s.bins.unwrap_or(0),
            stepper: s.stepper.unwrap_or_default(),
            drift: s.drift.unwrap_or_else(|| "linear".to_string()),
            coeff: s.coeff.unwrap_or(1.0),
            xs: s
                .xs
                .unwrap_or_else(|| vec![0.25 * ell, 0.5 * ell, 0.75 * ell]),
            c: s.c.unwrap_or(1.0),
            stream: s.stream.unwrap_or(0),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        self.params.validate()?;
        if !self.values.is_empty() && self.sweep.len() != 1 {
            return Err(CliError::Config(
                "--values needs exactly one --sweep parameter".into(),
            ));
        }
        if self.command == Command::OnsetProb
            && self
                .sweep
                .iter()
                .any(|p| !matches!(p, SweepParam::V0 | SweepParam::S))
        {
            return Err(CliError::Config("onset-prob sweeps v0 or s".into()));
        }
        if self.n == 0 || self.experiments == 0 || self.per_experiment == 0 {
            return Err(CliError::Config("ensemble sizes must be positive".into()));
        }
        let all_eps_ok = self.eps_list.iter().all(|e| e.is_finite() && *e >= 0.0);
        if self.eps_list.is_empty() || !all_eps_ok || !(self.epsilon >= 0.0) {
            return Err(CliError::Config(
                "noise amplitudes must be finite and >= 0".into(),
            ));
        }
        if self.v0_list.is_empty() {
            return Err(CliError::Config("--v0-list is empty".into()));
        }
        if !(self.ell > 0.0 && self.dt > 0.0 && self.t_max >= self.dt) {
            return Err(CliError::Config(
                "need ell > 0, dt > 0 and tmax >= dt".into(),
            ));
        }
        Ok(())
    }

    pub fn baseline(&self) -> ri_onset::sweep::Baseline {
        ri_onset::sweep::Baseline {
            params: self.params,
            x0: self.x0,
            ell: self.ell,
            dt: self.dt,
            t_max: self.t_max,
        }
    }

    /// The manifest: every resolved key, sorted, in the config-file syntax.
    pub fn manifest(&self) -> String {
        fn list<T: Display>(xs: &[T]) -> String {
            xs.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(",")
        }
        let sweep: Vec<&str> = self.sweep.iter().map(|p| p.name()).collect();
        let mut entries = vec![
            ("b0", self.x0.b.to_string()),
            ("bins", self.bins.to_string()),
            ("c", self.c.to_string()),
            ("coeff", self.coeff.to_string()),
            ("command", self.command.name().to_string()),
            ("drift", self.drift.clone()),
            ("dt", self.dt.to_string()),
            ("ell", self.ell.to_string()),
            ("eps", self.epsilon.to_string()),
            ("eps_list", list(&self.eps_list)),
            ("experiments", self.experiments.to_string()),
            ("format", self.format.name().to_string()),
            ("n", self.n.to_string()),
            ("out", self.out.display().to_string()),
            ("p", self.params.p.to_string()),
            ("per_experiment", self.per_experiment.to_string()),
            ("r", self.params.r.to_string()),
            ("s", self.params.s.to_string()),
            ("schema_version", SCHEMA_VERSION.to_string()),
            ("seed", self.seed.to_string()),
            ("stepper", stepper_name(self.stepper).to_string()),
            ("stream", self.stream.to_string()),
            ("sweep", sweep.join(",")),
            ("target", self.target.to_string()),
            ("tmax", self.t_max.to_string()),
            ("u0", self.x0.u.to_string()),
            ("v0", self.x0.v.to_string()),
            ("v0_list", list(&self.v0_list)),
            ("xs", list(&self.xs)),
        ];
        if !self.values.is_empty() {
            entries.push(("values", list(&self.values)));
        }
        entries.sort();
        entries
            .into_iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_round_trips() {
        let flags = Settings {
            v0: Some(0.0123456789),
            eps_list: Some(vec![1e-4, 0.3]),
            values: Some(vec![0.1, 0.2]),
            sweep: Some(vec![SweepParam::S]),
            stepper: Some(StepperKind::EulerMaruyama),
            ..Settings::default()
        };
        let cfg = RunConfig::from_settings(Command::OnsetProb, flags).unwrap();
        let (back, command) = Settings::parse_text(&cfg.manifest()).unwrap();
        assert_eq!(command, Some(Command::OnsetProb));
        assert_eq!(
            RunConfig::from_settings(Command::OnsetProb, back).unwrap(),
            cfg
        );
    }

    #[test]
    fn flags_override_file() {
        let (file, _) =
            Settings::parse_text("# comment\nv0 = 0.02\nseed=9\nper-experiment=5\n").unwrap();
        let flags = Settings {
            v0: Some(0.03),
            ..Settings::default()
        };
        let cfg = RunConfig::from_settings(Command::OnsetProb, flags.over(file)).unwrap();
        assert_eq!(cfg.x0.v, 0.03);
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.per_experiment, 5);
    }

    #[test]
    fn single_eps_becomes_the_list() {
        let flags = Settings {
            eps: Some(0.05),
            ..Settings::default()
        };
        let cfg = RunConfig::from_settings(Command::Hist, flags).unwrap();
        assert_eq!(cfg.eps_list, vec![0.05]);
        let cfg = RunConfig::from_settings(Command::Hist, Settings::default()).unwrap();
        assert_eq!(cfg.eps_list, vec![1e-4, 1e-3, 1e-2]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Settings::parse_text("bogus=1").is_err());
        assert!(Settings::parse_text("v0").is_err());
        assert!(Settings::parse_text("n=-3").is_err());
        assert!(Settings::parse_text("schema_version=99").is_err());
        let neg = Settings {
            p: Some(-1.0),
            ..Settings::default()
        };
        assert!(RunConfig::from_settings(Command::DetTime, neg).is_err());
        let two = Settings {
            values: Some(vec![1.0]),
            ..Settings::default()
        };
        assert!(RunConfig::from_settings(Command::DetTime, two).is_err());
    }
}
