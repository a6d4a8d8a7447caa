//! One function per subcommand. Each builds its tables, then [`run`] writes
//! them in the requested format together with the manifest.

use std::path::PathBuf;

use rayon::prelude::*;
use ri_onset::asymptotics::{
    gaussian_onset_cdf, gaussian_onset_pdf, onset_gaussian, OnsetGaussian,
};
use ri_onset::det::{deterministic_onset_time, integrate_ode, DetOnset, Trajectory};
use ri_onset::ensemble::{
    self, conditional_variance_curve, onset_indicator, onset_probability_curve, BatchProtocol,
    EnsembleConfig, EnsembleStats, IndicatorConfig, IndicatorResult,
};
use ri_onset::noise::NoiseConfig;
use ri_onset::onedim::{self, DriftFn1D, PassageTable};
use ri_onset::sde::HitSetup;
use ri_onset::stats::{self, Binning};
use ri_onset::sweep::SweepParam;
use ri_onset::{Error, State};
use serde_json::{json, Value};

use crate::config::{Command, Format, RunConfig, SCHEMA_VERSION};
use crate::error::CliError;
use crate::output::{self, manifest_path, sibling, Cell, Table};

/// Tables produced by a command before they are written.
#[derive(Debug)]
pub struct Report {
    pub primary: Table,
    /// Extra tables, written next to the primary file as `<stem>_<name>`.
    pub extra: Vec<(&'static str, Table)>,
    /// Structured results included only in the JSON output.
    pub details: Value,
    /// Short human-readable lines for stdout.
    pub summary: Vec<String>,
}

impl Report {
    fn new(primary: Table) -> Self {
        Self {
            primary,
            extra: Vec::new(),
            details: Value::Null,
            summary: Vec::new(),
        }
    }
}

/// Runs the configured command, writes all outputs and returns the summary
/// lines followed by the written paths.
pub fn run(cfg: &RunConfig) -> Result<Vec<String>, CliError> {
    let report = build(cfg)?;
    let mut written = Vec::new();
    match cfg.format {
        Format::Csv => {
            output::write_file(&cfg.out, &report.primary.to_csv())?;
            written.push(cfg.out.clone());
            for (name, table) in &report.extra {
                let path = sibling(&cfg.out, name);
                output::write_file(&path, &table.to_csv())?;
                written.push(path);
            }
        }
        Format::Json => {
            let mut doc = json!({
                "schema_version": SCHEMA_VERSION,
                "command": cfg.command.name(),
                "rows": report.primary.to_json(),
            });
            for (name, table) in &report.extra {
                doc[*name] = table.to_json();
            }
            if !report.details.is_null() {
                doc["details"] = report.details.clone();
            }
            output::write_json(&cfg.out, &doc)?;
            written.push(cfg.out.clone());
        }
    }
    let manifest = manifest_path(&cfg.out);
    output::write_file(&manifest, &cfg.manifest())?;
    written.push(manifest);
    let mut lines = report.summary;
    lines.extend(
        written
            .iter()
            .map(|p: &PathBuf| format!("wrote {}", p.display())),
    );
    Ok(lines)
}

pub fn build(cfg: &RunConfig) -> Result<Report, CliError> {
    match cfg.command {
        Command::DetTime => det_time(cfg),
        Command::OnsetProb => onset_prob(cfg),
        Command::Indicator => indicator(cfg),
        Command::Hist => hist(cfg),
        Command::Variance => variance(cfg),
        Command::Onedim => onedim(cfg),
        Command::Simulate => simulate(cfg),
    }
}

fn ensemble_config(cfg: &RunConfig, epsilon: f64) -> EnsembleConfig {
    EnsembleConfig {
        n_realizations: cfg.n,
        params: cfg.params,
        x0: cfg.x0,
        ell: cfg.ell,
        dt: cfg.dt,
        t_max: cfg.t_max,
        epsilon,
        seed: cfg.seed,
        kind: cfg.stepper,
        binning: if cfg.bins == 0 {
            Binning::FreedmanDiaconis
        } else {
            Binning::Count(cfg.bins)
        },
    }
}

fn sweep_values(cfg: &RunConfig, param: SweepParam) -> Vec<f64> {
    if !cfg.values.is_empty() {
        return cfg.values.clone();
    }
    match (cfg.command, param) {
        (Command::OnsetProb, SweepParam::V0) => (1..=20).map(|i| 0.005 * i as f64).collect(),
        (Command::OnsetProb, SweepParam::S) => (0..=10).map(|i| 0.05 + 0.025 * i as f64).collect(),
        _ => param.default_grid(),
    }
}

fn deterministic(
    cfg: &RunConfig,
    x0: State,
    epsilon: f64,
) -> Result<(Trajectory, Option<OnsetGaussian>), Error> {
    let traj = integrate_ode(&cfg.params, x0, cfg.dt, cfg.t_max)?;
    let gauss = match onset_gaussian(&traj, cfg.ell, epsilon) {
        Ok(g) => Some(g),
        Err(Error::NoOnset { .. }) => None,
        Err(e) => return Err(e),
    };
    Ok((traj, gauss))
}

fn det_time(cfg: &RunConfig) -> Result<Report, CliError> {
    let mut table = Table::new(&[
        "param",
        "sweep_value",
        "T",
        "u_T",
        "sigma22_T",
        "H",
        "variance_at_eps",
        "v_terminal",
    ]);
    let base = cfg.baseline();
    for &param in &cfg.sweep {
        let rows = sweep_values(cfg, param)
            .into_par_iter()
            .map(|value| {
                let b = param.apply(&base, value);
                let traj = integrate_ode(&b.params, b.x0, b.dt, b.t_max)?;
                let gauss = match deterministic_onset_time(&traj, b.ell)? {
                    DetOnset::At { .. } => Some(onset_gaussian(&traj, b.ell, cfg.epsilon)?),
                    DetOnset::Never => None,
                };
                Ok((value, gauss, traj.terminal_v()))
            })
            .collect::<Result<Vec<_>, Error>>()?;
        for (value, g, v_end) in rows {
            table.push(vec![
                param.name().into(),
                value.into(),
                Cell::opt(g.map(|g| g.mean)),
                Cell::opt(g.map(|g| g.u_at_onset)),
                Cell::opt(g.map(|g| g.sigma22)),
                Cell::opt(g.map(|g| g.h)),
                Cell::opt(g.map(|g| g.variance)),
                v_end.into(),
            ]);
        }
    }
    let mut report = Report::new(table);
    report
        .summary
        .push(format!("det-time: {} rows", report.primary.rows.len()));
    Ok(report)
}

fn onset_prob(cfg: &RunConfig) -> Result<Report, CliError> {
    let mut table = Table::new(&[
        "sweep_value",
        "epsilon",
        "p_hat",
        "ci_low",
        "ci_high",
        "n_onset",
        "tau_mean",
        "tau_var",
        "param",
        "batch_ci_low",
        "batch_ci_high",
        "n_extinct",
        "n_censored",
        "n_blowup",
    ]);
    let protocol = BatchProtocol {
        experiments: cfg.experiments,
        per_experiment: cfg.per_experiment,
    };
    let mut details = Vec::new();
    for &eps in &cfg.eps_list {
        for &param in &cfg.sweep {
            let points = onset_probability_curve(
                &ensemble_config(cfg, eps),
                param,
                &sweep_values(cfg, param),
                protocol,
            )?;
            for pt in &points {
                let s = &pt.stats;
                table.push(vec![
                    pt.value.into(),
                    eps.into(),
                    s.p_hat.into(),
                    s.ci_low.into(),
                    s.ci_high.into(),
                    s.n_onset.into(),
                    Cell::opt(s.tau_mean),
                    Cell::opt(s.tau_var),
                    param.name().into(),
                    pt.batch_ci.0.into(),
                    pt.batch_ci.1.into(),
                    s.n_extinct.into(),
                    s.n_censored.into(),
                    s.n_blowup.into(),
                ]);
            }
            details.push(json!({ "param": param.name(), "epsilon": eps, "points": points }));
        }
    }
    let mut report = Report::new(table);
    report.details = Value::Array(details);
    report.summary.push(format!(
        "onset-prob: {} sweep points",
        report.primary.rows.len()
    ));
    Ok(report)
}

fn indicator(cfg: &RunConfig) -> Result<Report, CliError> {
    let mut table = Table::new(&[
        "epsilon",
        "found",
        "v0",
        "p_hat",
        "ci_low",
        "ci_high",
        "evaluations",
    ]);
    let icfg = IndicatorConfig {
        target: cfg.target,
        ..IndicatorConfig::default()
    };
    let mut details = Vec::new();
    let (mut fit_x, mut fit_y) = (Vec::new(), Vec::new());
    for &eps in &cfg.eps_list {
        let result = onset_indicator(&ensemble_config(cfg, eps), &icfg)?;
        let row = match &result {
            IndicatorResult::Found {
                v0,
                p_hat,
                ci_low,
                ci_high,
                evaluations,
            } => {
                fit_x.push(eps);
                fit_y.push(*v0);
                vec![
                    eps.into(),
                    Cell::Int(1),
                    (*v0).into(),
                    (*p_hat).into(),
                    (*ci_low).into(),
                    (*ci_high).into(),
                    (*evaluations).into(),
                ]
            }
            IndicatorResult::NoSolution { .. } => {
                vec![
                    eps.into(),
                    Cell::Int(0),
                    Cell::Missing,
                    Cell::Missing,
                    Cell::Missing,
                    Cell::Missing,
                    Cell::Missing,
                ]
            }
        };
        table.push(row);
        details.push(json!({ "epsilon": eps, "result": result }));
    }
    let mut report = Report::new(table);
    report.details = Value::Array(details);
    match stats::linear_fit(&fit_x, &fit_y) {
        Some(f) => report.summary.push(format!(
            "indicator: v0 = {:.6} eps + {:.6}, R^2 = {:.4}",
            f.slope, f.intercept, f.r_squared
        )),
        None => report
            .summary
            .push("indicator: too few points for a linear fit".into()),
    }
    Ok(report)
}

fn hist(cfg: &RunConfig) -> Result<Report, CliError> {
    let mut summary = Table::new(&[
        "v0",
        "epsilon",
        "n",
        "n_onset",
        "n_extinct",
        "n_censored",
        "n_blowup",
        "p_hat",
        "T",
        "tau_mean",
        "tau_var",
        "gaussian_var",
        "ks_statistic",
        "ks_p_value",
        "scaled_skewness",
    ]);
    let mut bins = Table::new(&[
        "v0",
        "epsilon",
        "p_hat",
        "T",
        "bin_left",
        "bin_right",
        "count",
        "density",
        "gaussian_density",
    ]);
    let mut details = Vec::new();
    for &eps in &cfg.eps_list {
        for &v0 in &cfg.v0_list {
            let x0 = State { v: v0, ..cfg.x0 };
            let ecfg = EnsembleConfig {
                x0,
                ..ensemble_config(cfg, eps)
            };
            let results = ensemble::simulate_outcomes(&ecfg)?;
            let stats = EnsembleStats::from_results(&results, ecfg.binning);
            let (_, gauss) = deterministic(cfg, x0, eps)?;
            let times = ensemble::onset_times(&results);
            let (ks, skew) = match gauss {
                Some(g) if g.variance > 0.0 && times.len() >= 3 => {
                    let ks =
                        stats::ks_test(&times, |t| gaussian_onset_cdf(&g, t).unwrap_or(f64::NAN));
                    let scaled: Vec<f64> = times.iter().map(|t| (t - g.mean) / eps).collect();
                    (ks, stats::skewness(&scaled))
                }
                _ => (None, None),
            };
            summary.push(vec![
                v0.into(),
                eps.into(),
                stats.n_realizations.into(),
                stats.n_onset.into(),
                stats.n_extinct.into(),
                stats.n_censored.into(),
                stats.n_blowup.into(),
                stats.p_hat.into(),
                Cell::opt(gauss.map(|g| g.mean)),
                Cell::opt(stats.tau_mean),
                Cell::opt(stats.tau_var),
                Cell::opt(gauss.map(|g| g.variance)),
                Cell::opt(ks.map(|k| k.statistic)),
                Cell::opt(ks.map(|k| k.p_value)),
                Cell::opt(skew),
            ]);
            let h = &stats.histogram;
            for (i, &count) in h.counts.iter().enumerate() {
                let (left, right) = (h.edges[i], h.edges[i + 1]);
                let width = right - left;
                let density = if width > 0.0 {
                    count as f64 / (stats.n_onset as f64 * width)
                } else {
                    f64::NAN
                };
                let overlay = gauss.and_then(|g| gaussian_onset_pdf(&g, 0.5 * (left + right)).ok());
                bins.push(vec![
                    v0.into(),
                    eps.into(),
                    stats.p_hat.into(),
                    Cell::opt(gauss.map(|g| g.mean)),
                    left.into(),
                    right.into(),
                    count.into(),
                    Cell::opt(density.is_finite().then_some(density)),
                    Cell::opt(overlay),
                ]);
            }
            details.push(json!({ "v0": v0, "epsilon": eps, "stats": stats, "gaussian": gauss }));
        }
    }
    let mut report = Report::new(summary);
    report.extra.push(("bins", bins));
    report.details = Value::Array(details);
    report
        .summary
        .push(format!("hist: {} panels", report.primary.rows.len()));
    Ok(report)
}

fn variance(cfg: &RunConfig) -> Result<Report, CliError> {
    let mut table = Table::new(&[
        "v0",
        "epsilon",
        "n_onset",
        "p_hat",
        "tau_mean",
        "tau_var",
        "theory_var",
        "T",
        "H",
        "relative_difference",
    ]);
    let points = conditional_variance_curve(
        &ensemble_config(cfg, cfg.epsilon),
        &cfg.v0_list,
        &cfg.eps_list,
    )?;
    for pt in &points {
        let rel = match (pt.stats.tau_var, pt.theory) {
            (Some(mc), Some(g)) if g.variance > 0.0 => Some((mc - g.variance) / g.variance),
            _ => None,
        };
        table.push(vec![
            pt.v0.into(),
            pt.epsilon.into(),
            pt.stats.n_onset.into(),
            pt.stats.p_hat.into(),
            Cell::opt(pt.stats.tau_mean),
            Cell::opt(pt.stats.tau_var),
            Cell::opt(pt.theory.map(|g| g.variance)),
            Cell::opt(pt.theory.map(|g| g.mean)),
            Cell::opt(pt.theory.map(|g| g.h)),
            Cell::opt(rel),
        ]);
    }
    let mut report = Report::new(table);
    report.details = serde_json::to_value(&points)?;
    report
        .summary
        .push(format!("variance: {} points", points.len()));
    Ok(report)
}

fn onedim(cfg: &RunConfig) -> Result<Report, CliError> {
    let drift = DriftFn1D::named(&cfg.drift, cfg.coeff)?;
    let slope = drift.slope_at_origin();
    let mut table = Table::new(&[
        "epsilon",
        "x",
        "x_over_eps",
        "hit_prob",
        "erf_limit",
        "cond_exp_time",
        "psi",
        "psi_gap_over_x2",
        "deterministic_time",
    ]);
    for &eps in &cfg.eps_list {
        if !(eps > 0.0) {
            return Err(CliError::Config("onedim needs eps > 0".into()));
        }
        let mut xs = cfg.xs.clone();
        let scaled = cfg.c * eps;
        if scaled > 0.0 && scaled <= cfg.ell {
            xs.push(scaled);
        }
        if xs.iter().any(|&x| !(x > 0.0 && x <= cfg.ell)) {
            return Err(CliError::Config(format!(
                "starting points must lie in (0, {}]",
                cfg.ell
            )));
        }
        let passage = PassageTable::new(&drift, eps, cfg.ell, &xs)?;
        for &x in &xs {
            let erf_limit = (slope > 0.0)
                .then(|| onedim::asymptotic_hit_prob(&drift, x / eps, 1.0))
                .transpose()?;
            table.push(vec![
                eps.into(),
                x.into(),
                (x / eps).into(),
                onedim::hit_prob_1d(&drift, eps, cfg.ell, x)?.into(),
                Cell::opt(erf_limit),
                passage.cond_exp(x)?.into(),
                passage.psi().into(),
                (passage.psi_gap(x)? / (x * x)).into(),
                onedim::deterministic_time_1d(&drift, cfg.ell, x)?.into(),
            ]);
        }
    }
    let mut erf = Table::new(&["c", "alpha", "epsilon", "value", "leading", "regime"]);
    for &eps in &cfg.eps_list {
        for alpha in [0.5, 1.0, 2.0] {
            let a = onedim::erf_asymptotics(cfg.c, alpha, eps)?;
            let regime = match a.regime {
                onedim::ErfRegime::TendsToOne => "to_one",
                onedim::ErfRegime::Constant => "constant",
                onedim::ErfRegime::Linear => "linear",
            };
            erf.push(vec![
                cfg.c.into(),
                alpha.into(),
                eps.into(),
                a.value.into(),
                a.leading.into(),
                regime.into(),
            ]);
        }
    }
    let mut report = Report::new(table);
    report.extra.push(("erf", erf));
    report.summary.push(format!(
        "onedim: drift {}, {} rows",
        drift.label,
        report.primary.rows.len()
    ));
    Ok(report)
}

fn simulate(cfg: &RunConfig) -> Result<Report, CliError> {
    let setup = HitSetup {
        params: cfg.params,
        x0: cfg.x0,
        ell: cfg.ell,
        dt: cfg.dt,
        t_max: cfg.t_max,
        kind: cfg.stepper,
    };
    let noise = NoiseConfig::new(cfg.epsilon, cfg.seed, cfg.stream)?;
    let mut path = Vec::new();
    let outcome = setup.run_recording(&noise, &mut path)?;
    let mut table = Table::new(&["t", "u", "v", "b"]);
    for (k, s) in path.iter().enumerate() {
        table.push(vec![
            (k as f64 * cfg.dt).into(),
            s.u.into(),
            s.v.into(),
            s.b.into(),
        ]);
    }
    let mut report = Report::new(table);
    report.details = serde_json::to_value(outcome)?;
    report.summary.push(format!(
        "simulate: {:?} at t = {}",
        outcome.kind, outcome.time
    ));
    Ok(report)
}
