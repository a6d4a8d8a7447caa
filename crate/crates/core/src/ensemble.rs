//! Monte-Carlo ensembles: onset probability with a Wilson interval,
//! conditional moments of the onset time, histograms, sweeps and the
//! onset indicator.
//!
//! Trajectory `i` always uses noise stream `i` of the master seed, and
//! aggregation sorts before summing, so every statistic is independent of
//! the worker count and of the order in which paths complete.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymptotics::{onset_variance, OnsetGaussian};
use crate::noise::NoiseConfig;
use crate::sde::{HitSetup, HittingOutcome, OutcomeKind, StepperKind};
use crate::stats::{self, Binning, Histogram, Z_95};
use crate::sweep::{Baseline, SweepParam};
use crate::{Error, ModelParams, Result, State, DEFAULT_DT, DEFAULT_ELL, DEFAULT_T_MAX};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub n_realizations: usize,
    pub params: ModelParams,
    pub x0: State,
    pub ell: f64,
    pub dt: f64,
    pub t_max: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub kind: StepperKind,
    pub binning: Binning,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            n_realizations: 1000,
            params: ModelParams::default(),
            x0: State::reference(),
            ell: DEFAULT_ELL,
            dt: DEFAULT_DT,
            t_max: DEFAULT_T_MAX,
            epsilon: 0.01,
            seed: 0,
            kind: StepperKind::Rk4PlusNoise,
            binning: Binning::FreedmanDiaconis,
        }
    }
}

impl EnsembleConfig {
    pub fn setup(&self) -> HitSetup {
        HitSetup {
            params: self.params,
            x0: self.x0,
            ell: self.ell,
            dt: self.dt,
            t_max: self.t_max,
            kind: self.kind,
        }
    }

    pub fn baseline(&self) -> Baseline {
        Baseline {
            params: self.params,
            x0: self.x0,
            ell: self.ell,
            dt: self.dt,
            t_max: self.t_max,
        }
    }

    pub fn with_baseline(&self, b: &Baseline) -> Self {
        Self {
            params: b.params,
            x0: b.x0,
            ell: b.ell,
            dt: b.dt,
            t_max: b.t_max,
            ..*self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_realizations == 0 {
            return Err(Error::InvalidParameter(
                "n_realizations must be >= 1".into(),
            ));
        }
        self.setup().validate()?;
        NoiseConfig::new(self.epsilon, self.seed, 0)?;
        Ok(())
    }

    fn noise(&self, stream_index: u64) -> NoiseConfig {
        NoiseConfig {
            epsilon: self.epsilon,
            seed: self.seed,
            stream_index,
        }
    }
}

/// Per-path result; numeric blowups are kept apart from the three outcomes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum PathResult {
    Hit(HittingOutcome),
    Blowup { last_valid_time: f64 },
}

/// Simulates streams `0..n_realizations` on the current rayon pool,
/// returned in stream order.
pub fn simulate_outcomes(cfg: &EnsembleConfig) -> Result<Vec<PathResult>> {
    cfg.validate()?;
    let setup = cfg.setup();
    (0..cfg.n_realizations as u64)
        .into_par_iter()
        .map(|i| match setup.run(&cfg.noise(i)) {
            Ok(out) => Ok(PathResult::Hit(out)),
            Err(Error::Blowup { last_valid_time }) => Ok(PathResult::Blowup { last_valid_time }),
            Err(e) => Err(e),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleStats {
    pub n_realizations: usize,
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_onset: usize,
    pub n_extinct: usize,
    pub n_censored: usize,
    /// Paths that left the floating-point range before hitting either level.
    pub n_blowup: usize,
    /// Mean onset time given onset; `None` without onsets.
    pub tau_mean: Option<f64>,
    /// Unbiased variance of the onset time given onset; `None` with fewer
    /// than two onsets.
    pub tau_var: Option<f64>,
    pub histogram: Histogram,
}

impl EnsembleStats {
    pub fn from_results(results: &[PathResult], binning: Binning) -> Self {
        let mut times = Vec::new();
        let (mut n_extinct, mut n_censored, mut n_blowup) = (0, 0, 0);
        for r in results {
            match r {
                PathResult::Hit(out) => match out.kind {
                    OutcomeKind::Onset => times.push(out.time),
                    OutcomeKind::Extinction => n_extinct += 1,
                    OutcomeKind::Censored => n_censored += 1,
                },
                PathResult::Blowup { .. } => n_blowup += 1,
            }
        }
        Self::from_onset_times(times, n_extinct, n_censored, n_blowup, binning)
    }

    pub fn from_onset_times(
        mut times: Vec<f64>,
        n_extinct: usize,
        n_censored: usize,
        n_blowup: usize,
        binning: Binning,
    ) -> Self {
        times.sort_by(f64::total_cmp);
        let n_onset = times.len();
        let n = n_onset + n_extinct + n_censored + n_blowup;
        let (ci_low, ci_high) = stats::wilson_interval(n_onset, n, Z_95);
        Self {
            n_realizations: n,
            p_hat: if n == 0 {
                0.0
            } else {
                n_onset as f64 / n as f64
            },
            ci_low,
            ci_high,
            n_onset,
            n_extinct,
            n_censored,
            n_blowup,
            tau_mean: stats::mean(&times),
            tau_var: stats::variance(&times),
            histogram: Histogram::build(&times, binning),
        }
    }

    pub fn ci_contains(&self, p: f64) -> bool {
        self.ci_low <= p && p <= self.ci_high
    }
}

/// Runs an ensemble and aggregates it.
pub fn run_ensemble(cfg: &EnsembleConfig) -> Result<EnsembleStats> {
    let results = simulate_outcomes(cfg)?;
    Ok(EnsembleStats::from_results(&results, cfg.binning))
}

/// Onset times of the paths that reached the level, in stream order.
pub fn onset_times(results: &[PathResult]) -> Vec<f64> {
    results
        .iter()
        .filter_map(|r| match r {
            PathResult::Hit(out) if out.kind == OutcomeKind::Onset => Some(out.time),
            _ => None,
        })
        .collect()
}

/// Two-sided 97.5% Student-t quantiles for 1..=30 degrees of freedom.
const T_975: [f64; 30] = [
    12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228, 2.201, 2.179, 2.160,
    2.145, 2.131, 2.120, 2.110, 2.101, 2.093, 2.086, 2.080, 2.074, 2.069, 2.064, 2.060, 2.056,
    2.052, 2.048, 2.045, 2.042,
];

fn t_quantile_975(df: usize) -> f64 {
    match df {
        0 => f64::INFINITY,
        1..=30 => T_975[df - 1],
        _ => Z_95,
    }
}

/// Repetition protocol of the probability curves: `experiments` independent
/// batches of `per_experiment` paths each.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchProtocol {
    pub experiments: usize,
    pub per_experiment: usize,
}

impl Default for BatchProtocol {
    fn default() -> Self {
        Self {
            experiments: 10,
            per_experiment: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub value: f64,
    pub epsilon: f64,
    /// Pooled statistics over all batches.
    pub stats: EnsembleStats,
    /// Onset fraction of every batch.
    pub batch_p: Vec<f64>,
    /// t-interval of the mean batch fraction.
    pub batch_ci: (f64, f64),
}

/// Onset probability along a sweep of one parameter. Each point pools
/// `experiments * per_experiment` paths; batch `e` uses streams
/// `e * per_experiment ..`.
pub fn onset_probability_curve(
    base: &EnsembleConfig,
    param: SweepParam,
    values: &[f64],
    protocol: BatchProtocol,
) -> Result<Vec<CurvePoint>> {
    if protocol.experiments == 0 || protocol.per_experiment == 0 {
        return Err(Error::InvalidParameter("empty batch protocol".into()));
    }
    values
        .iter()
        .map(|&value| {
            let cfg = EnsembleConfig {
                n_realizations: protocol.experiments * protocol.per_experiment,
                ..base.with_baseline(&param.apply(&base.baseline(), value))
            };
            let results = simulate_outcomes(&cfg)?;
            let batch_p: Vec<f64> = results
                .chunks(protocol.per_experiment)
                .map(|chunk| {
                    let hits = chunk
                        .iter()
                        .filter(|r| matches!(r, PathResult::Hit(o) if o.kind == OutcomeKind::Onset))
                        .count();
                    hits as f64 / chunk.len() as f64
                })
                .collect();
            let mean = stats::mean(&batch_p).unwrap_or(0.0);
            let half = stats::variance(&batch_p)
                .map(|v| t_quantile_975(batch_p.len() - 1) * (v / batch_p.len() as f64).sqrt())
                .unwrap_or(f64::INFINITY);
            Ok(CurvePoint {
                value,
                epsilon: cfg.epsilon,
                stats: EnsembleStats::from_results(&results, cfg.binning),
                batch_p,
                batch_ci: ((mean - half).max(0.0), (mean + half).min(1.0)),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndicatorConfig {
    pub target: f64,
    /// Search bracket for `v0`; defaults to `(0, ell)`.
    pub bracket: Option<(f64, f64)>,
    /// Stop once the bracket is narrower than this.
    pub width_tol: f64,
    /// Also stop as soon as the Wilson interval at the midpoint contains
    /// the target.
    pub stop_on_ci: bool,
}

impl Default for IndicatorConfig {
    fn default() -> Self {
        Self {
            target: 0.8,
            bracket: None,
            width_tol: 1e-4,
            stop_on_ci: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum IndicatorResult {
    Found {
        v0: f64,
        p_hat: f64,
        ci_low: f64,
        ci_high: f64,
        evaluations: usize,
    },
    /// The target is not bracketed by the onset probabilities at the ends.
    NoSolution { p_low: f64, p_high: f64 },
}

impl IndicatorResult {
    pub fn v0(&self) -> Option<f64> {
        match self {
            IndicatorResult::Found { v0, .. } => Some(*v0),
            IndicatorResult::NoSolution { .. } => None,
        }
    }
}

/// Smallest initial `v0` whose Monte-Carlo onset probability reaches the
/// target, by bisection. Every evaluation reuses the same seed, so the
/// estimates along the search share their noise.
pub fn onset_indicator(base: &EnsembleConfig, icfg: &IndicatorConfig) -> Result<IndicatorResult> {
    base.validate()?;
    if !(icfg.target > 0.0 && icfg.target < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "target probability must lie in (0, 1), got {}",
            icfg.target
        )));
    }
    let (mut lo, mut hi) = icfg.bracket.unwrap_or((0.0, base.ell));
    if !(lo < hi) {
        return Err(Error::InvalidParameter(format!(
            "empty bracket ({lo}, {hi})"
        )));
    }
    let mut evaluations = 0;
    let mut eval = |v0: f64| -> Result<EnsembleStats> {
        evaluations += 1;
        let cfg = EnsembleConfig {
            x0: State { v: v0, ..base.x0 },
            ..*base
        };
        run_ensemble(&cfg)
    };
    let p_low = eval(lo)?.p_hat;
    let p_high = eval(hi)?.p_hat;
    if !(p_low < icfg.target && p_high >= icfg.target) {
        return Ok(IndicatorResult::NoSolution { p_low, p_high });
    }
    loop {
        let mid = 0.5 * (lo + hi);
        let stats = eval(mid)?;
        let done = hi - lo < icfg.width_tol || (icfg.stop_on_ci && stats.ci_contains(icfg.target));
        if done {
            return Ok(IndicatorResult::Found {
                v0: mid,
                p_hat: stats.p_hat,
                ci_low: stats.ci_low,
                ci_high: stats.ci_high,
                evaluations,
            });
        }
        if stats.p_hat < icfg.target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariancePoint {
    pub v0: f64,
    pub epsilon: f64,
    pub stats: EnsembleStats,
    /// Small-noise prediction; `None` when the deterministic path never
    /// reaches the level.
    pub theory: Option<OnsetGaussian>,
}

/// Monte-Carlo conditional variance of the onset time next to its
/// small-noise prediction, on a `v0 x epsilon` grid.
pub fn conditional_variance_curve(
    base: &EnsembleConfig,
    v0s: &[f64],
    epsilons: &[f64],
) -> Result<Vec<VariancePoint>> {
    let mut out = Vec::with_capacity(v0s.len() * epsilons.len());
    for &epsilon in epsilons {
        for &v0 in v0s {
            let cfg = EnsembleConfig {
                x0: State { v: v0, ..base.x0 },
                epsilon,
                ..*base
            };
            let stats = run_ensemble(&cfg)?;
            let theory =
                match onset_variance(&cfg.params, cfg.x0, cfg.ell, epsilon, cfg.dt, cfg.t_max) {
                    Ok(g) => Some(g),
                    Err(Error::NoOnset { .. }) => None,
                    Err(e) => return Err(e),
                };
            out.push(VariancePoint {
                v0,
                epsilon,
                stats,
                theory,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::det::{deterministic_onset_time, integrate_ode};

    fn cfg(v0: f64, eps: f64, n: usize) -> EnsembleConfig {
        EnsembleConfig {
            n_realizations: n,
            x0: State::new(-0.01, v0, 1e-4),
            epsilon: eps,
            seed: 7,
            ..EnsembleConfig::default()
        }
    }

    #[test]
    fn zero_noise_ensemble_is_deterministic() {
        let c = cfg(0.01, 0.0, 20);
        let s = run_ensemble(&c).unwrap();
        let traj = integrate_ode(&c.params, c.x0, c.dt, c.t_max).unwrap();
        let t = deterministic_onset_time(&traj, c.ell)
            .unwrap()
            .time()
            .unwrap();
        assert_eq!(s.p_hat, 1.0);
        assert_eq!(s.tau_var, Some(0.0));
        assert!((s.tau_mean.unwrap() - t).abs() < 1e-12);
        assert_eq!(s.histogram.total(), 20);
    }

    #[test]
    fn counts_are_consistent() {
        let s = run_ensemble(&cfg(0.01, 0.03, 200)).unwrap();
        assert_eq!(s.n_onset + s.n_extinct + s.n_censored + s.n_blowup, 200);
        assert!(s.ci_low <= s.p_hat && s.p_hat <= s.ci_high);
        assert_eq!(s.histogram.total(), s.n_onset);
        assert!(s.tau_var.unwrap() >= 0.0);
    }

    #[test]
    fn all_censored_has_no_moments() {
        let mut c = cfg(0.01, 1e-4, 10);
        c.t_max = 0.5;
        let s = run_ensemble(&c).unwrap();
        assert_eq!(s.n_censored, 10);
        assert_eq!(s.n_onset, 0);
        assert_eq!(s.tau_mean, None);
        assert_eq!(s.tau_var, None);
        assert_eq!(s.p_hat, 0.0);
    }

    #[test]
    fn permuting_streams_leaves_stats_unchanged() {
        let c = cfg(0.01, 0.02, 100);
        let mut results = simulate_outcomes(&c).unwrap();
        let a = EnsembleStats::from_results(&results, c.binning);
        results.reverse();
        results.swap(3, 50);
        let b = EnsembleStats::from_results(&results, c.binning);
        assert_eq!(a, b);
    }

    #[test]
    fn independent_of_pool_size() {
        let c = cfg(0.01, 0.02, 64);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| run_ensemble(&c).unwrap())
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn wilson_coverage_with_injected_outcomes() {
        // Bernoulli(0.5) outcomes in place of trajectories
        let mut covered = 0;
        let dummy = State::default();
        for rep in 0..1000u64 {
            let mut stream = crate::noise::NoiseStream::new(31, rep);
            let results: Vec<PathResult> = (0..1000)
                .map(|_| {
                    let (_, [u, _]) = stream.normal_and_uniforms();
                    let kind = if u < 0.5 {
                        OutcomeKind::Onset
                    } else {
                        OutcomeKind::Extinction
                    };
                    PathResult::Hit(HittingOutcome {
                        kind,
                        time: 1.0,
                        final_state: dummy,
                    })
                })
                .collect();
            if EnsembleStats::from_results(&results, Binning::Count(1)).ci_contains(0.5) {
                covered += 1;
            }
        }
        assert!((930..=970).contains(&covered), "coverage {covered}");
    }

    #[test]
    fn starting_on_level_always_onsets() {
        let s = run_ensemble(&cfg(0.1, 0.05, 50)).unwrap();
        assert_eq!(s.p_hat, 1.0);
    }

    #[test]
    fn curve_pools_batches() {
        let base = cfg(0.02, 0.01, 1);
        let pts = onset_probability_curve(
            &base,
            SweepParam::V0,
            &[0.1],
            BatchProtocol {
                experiments: 4,
                per_experiment: 25,
            },
        )
        .unwrap();
        assert_eq!(pts[0].stats.n_realizations, 100);
        assert_eq!(pts[0].batch_p, vec![1.0; 4]);
    }

    #[test]
    fn indicator_reports_unreachable_target() {
        let mut c = cfg(0.02, 0.01, 50);
        c.t_max = 0.1;
        // nothing reaches the level in so short a horizon
        let r = onset_indicator(
            &c,
            &IndicatorConfig {
                bracket: Some((0.01, 0.05)),
                ..IndicatorConfig::default()
            },
        )
        .unwrap();
        assert!(matches!(r, IndicatorResult::NoSolution { .. }));
    }

    #[test]
    fn rejects_empty_ensemble() {
        assert!(run_ensemble(&cfg(0.01, 0.01, 0)).is_err());
    }
}
