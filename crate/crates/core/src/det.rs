//! Deterministic integration of the MSD+ ODE and the deterministic onset time.

use std::io::{self, Write};

use serde::Serialize;

use crate::msd::drift_unchecked;
use crate::{format_sig17, Error, ModelParams, Result, State};

/// One classical fourth-order Runge-Kutta step of `dx/dt = mu(x)`.
#[inline]
pub fn rk4_step(params: &ModelParams, x: &State, dt: f64) -> State {
    let k1 = drift_unchecked(params, x);
    let k2 = drift_unchecked(params, &(*x + k1 * (0.5 * dt)));
    let k3 = drift_unchecked(params, &(*x + k2 * (0.5 * dt)));
    let k4 = drift_unchecked(params, &(*x + k3 * dt));
    *x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
}

/// Number of grid steps needed to cover `[0, t_max]` with spacing `dt`.
pub(crate) fn step_count(dt: f64, t_max: f64) -> usize {
    // tolerate t_max being an integer multiple of dt up to roundoff
    ((t_max / dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize
}

/// A deterministic path sampled on the uniform grid `t_k = k * dt`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    params: ModelParams,
    dt: f64,
    states: Vec<State>,
}

impl Trajectory {
    /// Wraps precomputed states. Used by tests and by callers that want to
    /// feed a synthetic path to the covariance integrator.
    pub fn from_states(params: ModelParams, dt: f64, states: Vec<State>) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "dt must be positive, got {dt}"
            )));
        }
        if states.is_empty() {
            return Err(Error::InvalidParameter("trajectory has no states".into()));
        }
        if let Some(k) = states.iter().position(|x| !x.is_finite()) {
            return Err(Error::Blowup {
                last_valid_time: k.saturating_sub(1) as f64 * dt,
            });
        }
        Ok(Self { params, dt, states })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn states(&self) -> &[State] {
        &self.states
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub fn t_end(&self) -> f64 {
        self.time(self.states.len() - 1)
    }

    /// State at an arbitrary time inside the span, linearly interpolated
    /// between grid points.
    pub fn state_at(&self, t: f64) -> Result<State> {
        let end = self.t_end();
        if !(0.0..=end * (1.0 + 1e-12)).contains(&t) {
            return Err(Error::OutOfRange { requested: t, end });
        }
        let pos = t / self.dt;
        let k = (pos.floor() as usize).min(self.states.len() - 1);
        if k + 1 >= self.states.len() {
            return Ok(self.states[k]);
        }
        Ok(self.states[k].lerp(&self.states[k + 1], pos - k as f64))
    }

    /// v at the end of the horizon; a crude stand-in for the stable critical
    /// point when checking that the onset level is reachable.
    pub fn terminal_v(&self) -> f64 {
        self.states[self.states.len() - 1].v
    }

    /// Writes `t,u,v,b` rows with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "t,u,v,b")?;
        for (k, x) in self.states.iter().enumerate() {
            writeln!(
                out,
                "{},{},{},{}",
                format_sig17(self.time(k)),
                format_sig17(x.u),
                format_sig17(x.v),
                format_sig17(x.b)
            )?;
        }
        Ok(())
    }
}

/// Integrates the ODE with RK4 over `[0, t_max]`, storing every grid state.
pub fn integrate_ode(params: &ModelParams, x0: State, dt: f64, t_max: f64) -> Result<Trajectory> {
    params.validate()?;
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "dt must be positive, got {dt}"
        )));
    }
    if !(t_max.is_finite() && t_max >= dt) {
        return Err(Error::InvalidParameter(format!(
            "t_max must be >= dt, got {t_max}"
        )));
    }
    if !x0.is_finite() {
        return Err(Error::Domain("integrate_ode"));
    }
    let n = step_count(dt, t_max);
    let mut states = Vec::with_capacity(n + 1);
    states.push(x0);
    let mut x = x0;
    for k in 0..n {
        x = rk4_step(params, &x, dt);
        if !x.is_finite() {
            return Err(Error::Blowup {
                last_valid_time: k as f64 * dt,
            });
        }
        states.push(x);
    }
    Ok(Trajectory {
        params: *params,
        dt,
        states,
    })
}

/// Deterministic onset: first time `v` reaches the level from below.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum DetOnset {
    At { time: f64, state: State },
    Never,
}

impl DetOnset {
    pub fn time(&self) -> Option<f64> {
        match self {
            DetOnset::At { time, .. } => Some(*time),
            DetOnset::Never => None,
        }
    }

    pub fn state(&self) -> Option<State> {
        match self {
            DetOnset::At { state, .. } => Some(*state),
            DetOnset::Never => None,
        }
    }
}

/// Fraction of the step `[v_prev, v_next]` at which the value `level` is met.
#[inline]
pub(crate) fn crossing_fraction(v_prev: f64, v_next: f64, level: f64) -> f64 {
    let denom = v_next - v_prev;
    if denom == 0.0 {
        1.0
    } else {
        ((level - v_prev) / denom).clamp(0.0, 1.0)
    }
}

/// Scans the trajectory for the first grid interval where `v` reaches `ell`
/// and refines the crossing by linear interpolation.
pub fn deterministic_onset_time(traj: &Trajectory, ell: f64) -> Result<DetOnset> {
    if !(ell.is_finite() && ell > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "ell must be positive, got {ell}"
        )));
    }
    let states = traj.states();
    if states[0].v >= ell {
        return Ok(DetOnset::At {
            time: 0.0,
            state: states[0],
        });
    }
    for (k, pair) in states.windows(2).enumerate() {
        let (prev, next) = (pair[0], pair[1]);
        if next.v >= ell {
            let theta = crossing_fraction(prev.v, next.v, ell);
            let mut state = prev.lerp(&next, theta);
            // the interpolated v equals ell up to one rounding; pin it exactly
            state.v = ell;
            return Ok(DetOnset::At {
                time: (k as f64 + theta) * traj.dt(),
                state,
            });
        }
    }
    Ok(DetOnset::Never)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference_params() -> ModelParams {
        ModelParams::default()
    }

    #[test]
    fn fixed_point_stays_put() {
        let traj = integrate_ode(&reference_params(), State::default(), 1e-3, 2.0).unwrap();
        assert_eq!(traj.states().len(), 2001);
        assert!(traj.states().iter().all(|x| *x == State::default()));
    }

    #[test]
    fn grid_covers_horizon() {
        let traj = integrate_ode(&reference_params(), State::reference(), 1e-3, 5.0).unwrap();
        assert_eq!(traj.states().len(), 5001);
        assert!((traj.t_end() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn reference_path_crosses_onset_level() {
        let traj = integrate_ode(&reference_params(), State::reference(), 1e-3, 50.0).unwrap();
        let onset = deterministic_onset_time(&traj, 0.1).unwrap();
        let t = onset.time().expect("reference path reaches v = 0.1");
        assert!(t > 0.0 && t < 50.0);
        assert!((onset.state().unwrap().v - 0.1).abs() <= 1e-9);
    }

    #[test]
    fn constant_path_never_hits() {
        let states = vec![State::new(0.0, 0.05, 0.0); 100];
        let traj = Trajectory::from_states(reference_params(), 0.01, states).unwrap();
        assert_eq!(
            deterministic_onset_time(&traj, 0.1).unwrap(),
            DetOnset::Never
        );
    }

    #[test]
    fn start_on_level_is_time_zero() {
        let traj =
            integrate_ode(&reference_params(), State::new(-0.01, 0.1, 1e-4), 1e-3, 1.0).unwrap();
        let onset = deterministic_onset_time(&traj, 0.1).unwrap();
        assert_eq!(onset.time(), Some(0.0));
    }

    #[test]
    fn onset_time_decreases_with_v0() {
        let times: Vec<f64> = [0.01, 0.02, 0.03, 0.04]
            .iter()
            .map(|&v0| {
                let traj =
                    integrate_ode(&reference_params(), State::new(-0.01, v0, 1e-4), 1e-3, 50.0)
                        .unwrap();
                deterministic_onset_time(&traj, 0.1)
                    .unwrap()
                    .time()
                    .unwrap()
            })
            .collect();
        assert!(times.windows(2).all(|w| w[1] < w[0]), "{times:?}");
    }

    #[test]
    fn halving_dt_is_converged() {
        let coarse = integrate_ode(&reference_params(), State::reference(), 1e-3, 5.0).unwrap();
        let fine = integrate_ode(&reference_params(), State::reference(), 5e-4, 5.0).unwrap();
        let a = coarse.state_at(5.0).unwrap().v;
        let b = fine.state_at(5.0).unwrap().v;
        assert!((a - b).abs() < 1e-8, "{a} vs {b}");
    }

    #[test]
    fn rk4_is_fourth_order() {
        // error against a dt/16 reference at fixed time, measured exponent in [3.5, 4.5]
        let params = reference_params();
        let x0 = State::new(-0.01, 0.05, 1e-4);
        let t = 4.0;
        let reference = integrate_ode(&params, x0, 0.1 / 16.0, t)
            .unwrap()
            .state_at(t)
            .unwrap();
        let err = |dt: f64| {
            let x = integrate_ode(&params, x0, dt, t)
                .unwrap()
                .state_at(t)
                .unwrap();
            let d = x - reference;
            (d.u * d.u + d.v * d.v + d.b * d.b).sqrt()
        };
        let e1 = err(0.1);
        let e2 = err(0.05);
        let order = (e1 / e2).log2();
        assert!(
            (3.5..=4.5).contains(&order),
            "order {order} ({e1:e}, {e2:e})"
        );
    }

    #[test]
    fn blowup_reports_last_valid_time() {
        let err =
            integrate_ode(&reference_params(), State::new(0.0, -50.0, 0.0), 0.1, 50.0).unwrap_err();
        assert!(matches!(err, Error::Blowup { .. }));
    }

    #[test]
    fn rejects_bad_grid() {
        assert!(integrate_ode(&reference_params(), State::reference(), 0.0, 1.0).is_err());
        assert!(integrate_ode(&reference_params(), State::reference(), 0.1, 0.01).is_err());
        let traj = integrate_ode(&reference_params(), State::reference(), 0.1, 1.0).unwrap();
        assert!(traj.state_at(2.0).is_err());
    }

    #[test]
    fn csv_has_header_and_rows() {
        let traj = integrate_ode(&reference_params(), State::reference(), 0.5, 1.0).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "t,u,v,b");
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[1], "0.0000000000000000e0,-1.0000000000000000e-2,1.0000000000000000e-2,1.0000000000000000e-4");
    }
}
