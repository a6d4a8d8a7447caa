//! One-parameter sweeps of the deterministic onset time `T` and of the
//! noise-free variance factor `H(T)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymptotics::onset_gaussian;
use crate::det::{deterministic_onset_time, integrate_ode};
use crate::{Error, ModelParams, Result, State, DEFAULT_DT, DEFAULT_ELL, DEFAULT_T_MAX};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SweepParam {
    V0,
    S,
    R,
    P,
}

impl SweepParam {
    pub const ALL: [SweepParam; 4] = [SweepParam::V0, SweepParam::S, SweepParam::R, SweepParam::P];

    pub fn name(&self) -> &'static str {
        match self {
            SweepParam::V0 => "v0",
            SweepParam::S => "s",
            SweepParam::R => "r",
            SweepParam::P => "p",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == name)
    }

    /// A default grid for this parameter around the reference values.
    pub fn default_grid(&self) -> Vec<f64> {
        let (lo, hi, n) = match self {
            SweepParam::V0 => (0.005, 0.09, 18),
            SweepParam::S => (0.05, 0.3, 11),
            SweepParam::R => (0.1, 0.6, 11),
            SweepParam::P => (100.0, 400.0, 13),
        };
        (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect()
    }

    pub fn apply(&self, base: &Baseline, value: f64) -> Baseline {
        let mut out = *base;
        match self {
            SweepParam::V0 => out.x0.v = value,
            SweepParam::S => out.params.s = value,
            SweepParam::R => out.params.r = value,
            SweepParam::P => out.params.p = value,
        }
        out
    }
}

/// Reference configuration that every sweep perturbs in one coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub params: ModelParams,
    pub x0: State,
    pub ell: f64,
    pub dt: f64,
    pub t_max: f64,
}

impl Default for Baseline {
    fn default() -> Self {
        Self {
            params: ModelParams::default(),
            x0: State::reference(),
            ell: DEFAULT_ELL,
            dt: DEFAULT_DT,
            t_max: DEFAULT_T_MAX,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OnsetTimeRow {
    pub value: f64,
    /// `None` when the path never reaches the level before `t_max`.
    pub t_onset: Option<f64>,
}

/// Deterministic onset time along a one-parameter sweep.
pub fn onset_time_curves(
    base: &Baseline,
    param: SweepParam,
    values: &[f64],
) -> Result<Vec<OnsetTimeRow>> {
    values
        .par_iter()
        .map(|&value| {
            let b = param.apply(base, value);
            let traj = integrate_ode(&b.params, b.x0, b.dt, b.t_max)?;
            Ok(OnsetTimeRow {
                value,
                t_onset: deterministic_onset_time(&traj, b.ell)?.time(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VarianceFactorRow {
    pub value: f64,
    pub t_onset: f64,
    pub u_at_onset: f64,
    pub sigma22: f64,
    pub h: f64,
}

/// `H(T) = Sigma_22(T) / (ell^2 (u(T) + ell)^2)` along a sweep.
pub fn h_of_t_curves(
    base: &Baseline,
    param: SweepParam,
    values: &[f64],
) -> Result<Vec<VarianceFactorRow>> {
    values
        .par_iter()
        .map(|&value| {
            let b = param.apply(base, value);
            let traj = integrate_ode(&b.params, b.x0, b.dt, b.t_max)?;
            let g = onset_gaussian(&traj, b.ell, 1.0)?;
            Ok(VarianceFactorRow {
                value,
                t_onset: g.mean,
                u_at_onset: g.u_at_onset,
                sigma22: g.sigma22,
                h: g.h,
            })
        })
        .collect()
}

/// Relative range `(max - min) / mean` of a positive series.
pub fn relative_range(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidParameter("empty series".into()));
    }
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    Ok((max - min) / mean)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn times(param: SweepParam, values: &[f64]) -> Vec<f64> {
        onset_time_curves(&Baseline::default(), param, values)
            .unwrap()
            .iter()
            .map(|r| r.t_onset.expect("onset within horizon"))
            .collect()
    }

    fn increasing(xs: &[f64]) -> bool {
        xs.windows(2).all(|w| w[1] > w[0])
    }

    #[test]
    fn onset_time_monotone_in_v0() {
        let grid = SweepParam::V0.default_grid();
        let t = times(SweepParam::V0, &grid);
        assert!(t.windows(2).all(|w| w[1] < w[0]), "{t:?}");
    }

    #[test]
    fn onset_time_trends_in_parameters() {
        assert!(increasing(&times(SweepParam::S, &[0.05, 0.1, 0.15, 0.2])));
        assert!(increasing(&times(SweepParam::R, &[0.15, 0.25, 0.35, 0.45])));
        let t = times(SweepParam::P, &[100.0, 200.0, 300.0, 400.0]);
        assert!(t.windows(2).all(|w| w[1] < w[0]), "{t:?}");
    }

    #[test]
    fn names_round_trip() {
        for p in SweepParam::ALL {
            assert_eq!(SweepParam::parse(p.name()), Some(p));
        }
        assert_eq!(SweepParam::parse("q"), None);
    }

    #[test]
    fn variance_factor_sensitivity() {
        let base = Baseline::default();
        let range = |param: SweepParam| {
            let rows = h_of_t_curves(&base, param, &param.default_grid()).unwrap();
            assert!(rows.iter().all(|r| r.h > 0.0));
            relative_range(&rows.iter().map(|r| r.h).collect::<Vec<_>>()).unwrap()
        };
        let (p, r, s) = (
            range(SweepParam::P),
            range(SweepParam::R),
            range(SweepParam::S),
        );
        assert!(p < r && p < s, "p {p}, r {r}, s {s}");
        assert!(s > 1.0);
    }
}
