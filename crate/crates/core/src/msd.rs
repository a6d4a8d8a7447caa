//! The cyclonic (v > 0) branch of the MSD model: parameters, states, drift
//! field and Jacobian.

use std::ops::{Add, Mul, Sub};

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Nondimensional MSD parameters.
///
/// `p` scales with the squared ratio of tropospheric to boundary-layer depth,
/// `r` is the Newtonian cooling rate and `s` the static stability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub p: f64,
    pub r: f64,
    pub s: f64,
}

impl ModelParams {
    pub fn new(p: f64, r: f64, s: f64) -> Result<Self> {
        let params = Self { p, r, s };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, value) in [("p", self.p), ("r", self.r), ("s", self.s)] {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be finite and positive, got {value}"
                )));
            }
        }
        Ok(())
    }
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            p: 200.0,
            r: 0.25,
            s: 0.1,
        }
    }
}

/// A point `(u, v, b)`: maximum radial wind, maximum tangential wind and
/// warm-core anomaly.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct State {
    pub u: f64,
    pub v: f64,
    pub b: f64,
}

impl State {
    pub const fn new(u: f64, v: f64, b: f64) -> Self {
        Self { u, v, b }
    }

    /// Initial condition of the reference experiments.
    pub const fn reference() -> Self {
        Self::new(-0.01, 0.01, 1e-4)
    }

    pub fn is_finite(&self) -> bool {
        self.u.is_finite() && self.v.is_finite() && self.b.is_finite()
    }

    /// Componentwise linear interpolation, `theta = 0` giving `self`.
    pub fn lerp(&self, other: &State, theta: f64) -> State {
        *self + (*other - *self) * theta
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.u, self.v, self.b]
    }
}

impl From<[f64; 3]> for State {
    fn from(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }
}

impl Add for State {
    type Output = State;
    fn add(self, rhs: State) -> State {
        State::new(self.u + rhs.u, self.v + rhs.v, self.b + rhs.b)
    }
}

impl Sub for State {
    type Output = State;
    fn sub(self, rhs: State) -> State {
        State::new(self.u - rhs.u, self.v - rhs.v, self.b - rhs.b)
    }
}

impl Mul<f64> for State {
    type Output = State;
    fn mul(self, k: f64) -> State {
        State::new(self.u * k, self.v * k, self.b * k)
    }
}

/// Drift without input validation, for the integrator inner loops.
#[inline]
pub(crate) fn drift_unchecked(params: &ModelParams, x: &State) -> State {
    let ModelParams { p, r, s } = *params;
    let State { u, v, b } = *x;
    State::new(
        p * v * v - (p + 1.0) * b - u * v,
        -u * v - v * v,
        b * u + s * u + v - r * b,
    )
}

/// The MSD+ vector field `mu(x)`.
///
/// No clamping of `v` happens here; the stochastic path may legitimately
/// cross below zero and extinction is decided by the hitting logic.
pub fn drift(params: &ModelParams, x: &State) -> Result<State> {
    if !x.is_finite() {
        return Err(Error::Domain("drift"));
    }
    params.validate()?;
    Ok(drift_unchecked(params, x))
}

#[inline]
pub(crate) fn jacobian_unchecked(params: &ModelParams, x: &State) -> Matrix3<f64> {
    let ModelParams { p, r, s } = *params;
    let State { u, v, b } = *x;
    Matrix3::new(
        -v,
        2.0 * p * v - u,
        -(p + 1.0),
        -v,
        -u - 2.0 * v,
        0.0,
        b + s,
        1.0,
        u - r,
    )
}

/// Jacobian `D mu(x)`, rows ordered `(u, v, b)`.
pub fn jacobian(params: &ModelParams, x: &State) -> Result<Matrix3<f64>> {
    if !x.is_finite() {
        return Err(Error::Domain("jacobian"));
    }
    params.validate()?;
    Ok(jacobian_unchecked(params, x))
}
