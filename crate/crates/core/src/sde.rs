//! Single-trajectory simulation of the additive-noise SDE with detection of
//! the onset (`v` reaches `ell`) and extinction (`v` reaches 0) times.

use serde::{Deserialize, Serialize};

use crate::det::{crossing_fraction, rk4_step, step_count};
use crate::msd::drift_unchecked;
use crate::noise::NoiseConfig;
use crate::{Error, ModelParams, Result, State};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum StepperKind {
    EulerMaruyama,
    /// RK4 on the drift followed by the Gaussian increment.
    #[default]
    Rk4PlusNoise,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OutcomeKind {
    Onset,
    Extinction,
    Censored,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HittingOutcome {
    pub kind: OutcomeKind,
    pub time: f64,
    pub final_state: State,
}

/// Advances `x` by one step of the chosen scheme under an arbitrary drift.
/// `increments` are the already scaled noise terms `eps * sqrt(dt) * xi`.
#[inline]
pub fn step_with<F>(drift: F, x: &State, dt: f64, increments: [f64; 3], kind: StepperKind) -> State
where
    F: Fn(&State) -> State,
{
    let det = match kind {
        StepperKind::EulerMaruyama => *x + drift(x) * dt,
        StepperKind::Rk4PlusNoise => {
            let k1 = drift(x);
            let k2 = drift(&(*x + k1 * (0.5 * dt)));
            let k3 = drift(&(*x + k2 * (0.5 * dt)));
            let k4 = drift(&(*x + k3 * dt));
            *x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
        }
    };
    det + State::from(increments)
}

/// One stochastic MSD step.
pub fn step(
    params: &ModelParams,
    x: &State,
    dt: f64,
    increments: [f64; 3],
    kind: StepperKind,
) -> Result<State> {
    let next = step_with(|y| drift_unchecked(params, y), x, dt, increments, kind);
    if next.is_finite() {
        Ok(next)
    } else {
        Err(Error::Blowup {
            last_valid_time: 0.0,
        })
    }
}

/// Everything that defines a hitting experiment except the noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HitSetup {
    pub params: ModelParams,
    pub x0: State,
    pub ell: f64,
    pub dt: f64,
    pub t_max: f64,
    pub kind: StepperKind,
}

impl HitSetup {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if !self.x0.is_finite() {
            return Err(Error::Domain("run_to_hit"));
        }
        if !(self.ell.is_finite() && self.ell > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "ell must be positive, got {}",
                self.ell
            )));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if !(self.t_max.is_finite() && self.t_max > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "t_max must be positive, got {}",
                self.t_max
            )));
        }
        Ok(())
    }

    pub fn run(&self, noise: &NoiseConfig) -> Result<HittingOutcome> {
        self.run_inner(noise, None)
    }

    /// Like [`HitSetup::run`] but also records every grid state visited,
    /// including the initial one.
    pub fn run_recording(
        &self,
        noise: &NoiseConfig,
        path: &mut Vec<State>,
    ) -> Result<HittingOutcome> {
        self.run_inner(noise, Some(path))
    }

    fn run_inner(
        &self,
        noise: &NoiseConfig,
        mut path: Option<&mut Vec<State>>,
    ) -> Result<HittingOutcome> {
        self.validate()?;
        noise.validate()?;
        let Self {
            params,
            x0,
            ell,
            dt,
            t_max,
            kind,
        } = *self;
        if let Some(p) = path.as_deref_mut() {
            p.push(x0);
        }
        if x0.v >= ell {
            return Ok(HittingOutcome {
                kind: OutcomeKind::Onset,
                time: 0.0,
                final_state: x0,
            });
        }
        if x0.v <= 0.0 {
            return Ok(HittingOutcome {
                kind: OutcomeKind::Extinction,
                time: 0.0,
                final_state: x0,
            });
        }

        let scale = noise.epsilon * dt.sqrt();
        let mut stream = noise.stream();
        let n = step_count(dt, t_max);
        let mut x = x0;
        for k in 0..n {
            let mut next = match kind {
                StepperKind::Rk4PlusNoise => rk4_step(&params, &x, dt),
                StepperKind::EulerMaruyama => x + drift_unchecked(&params, &x) * dt,
            };
            if scale > 0.0 {
                let [a, b, c] = stream.normals3();
                next = next + State::new(a * scale, b * scale, c * scale);
            }
            if !next.is_finite() {
                return Err(Error::Blowup {
                    last_valid_time: k as f64 * dt,
                });
            }
            if let Some(p) = path.as_deref_mut() {
                p.push(next);
            }
            // a single linear segment cannot cross both levels, so checking
            // the upper level first is unambiguous
            let hit = if next.v >= ell {
                Some((OutcomeKind::Onset, ell))
            } else if next.v <= 0.0 {
                Some((OutcomeKind::Extinction, 0.0))
            } else {
                None
            };
            if let Some((kind, level)) = hit {
                let theta = crossing_fraction(x.v, next.v, level);
                let mut final_state = x.lerp(&next, theta);
                final_state.v = level;
                return Ok(HittingOutcome {
                    kind,
                    time: (k as f64 + theta) * dt,
                    final_state,
                });
            }
            x = next;
        }
        Ok(HittingOutcome {
            kind: OutcomeKind::Censored,
            time: t_max,
            final_state: x,
        })
    }
}

/// Runs one trajectory of the MSD SDE until onset, extinction or `t_max`.
#[allow(clippy::too_many_arguments)]
pub fn run_to_hit(
    params: &ModelParams,
    x0: State,
    ell: f64,
    dt: f64,
    t_max: f64,
    noise: &NoiseConfig,
    kind: StepperKind,
) -> Result<HittingOutcome> {
    HitSetup {
        params: *params,
        x0,
        ell,
        dt,
        t_max,
        kind,
    }
    .run(noise)
}

/// Outcome of a scalar diffusion run between the barriers 0 and `ell`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalarOutcome {
    pub kind: OutcomeKind,
    pub time: f64,
    pub value: f64,
}

/// Hitting experiment for `dZ = F(Z) dt + eps dW` on `(0, ell)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarSetup {
    pub z0: f64,
    pub ell: f64,
    pub dt: f64,
    pub t_max: f64,
    pub kind: StepperKind,
    /// Also test for barrier crossings between grid points using the
    /// Brownian-bridge crossing probability; removes the O(sqrt(dt))
    /// discrete-monitoring bias.
    pub bridge: bool,
}

#[inline]
fn scalar_step<F: Fn(f64) -> f64>(drift: &F, z: f64, dt: f64, kind: StepperKind) -> f64 {
    match kind {
        StepperKind::EulerMaruyama => z + drift(z) * dt,
        StepperKind::Rk4PlusNoise => {
            let k1 = drift(z);
            let k2 = drift(z + 0.5 * dt * k1);
            let k3 = drift(z + 0.5 * dt * k2);
            let k4 = drift(z + dt * k3);
            z + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        }
    }
}

impl ScalarSetup {
    pub fn run<F: Fn(f64) -> f64>(&self, drift: F, noise: &NoiseConfig) -> Result<ScalarOutcome> {
        noise.validate()?;
        let Self {
            z0,
            ell,
            dt,
            t_max,
            kind,
            bridge,
        } = *self;
        if !(z0.is_finite() && ell > 0.0 && dt > 0.0 && t_max > 0.0) {
            return Err(Error::InvalidParameter(
                "invalid scalar hitting setup".into(),
            ));
        }
        if z0 >= ell {
            return Ok(ScalarOutcome {
                kind: OutcomeKind::Onset,
                time: 0.0,
                value: z0,
            });
        }
        if z0 <= 0.0 {
            return Ok(ScalarOutcome {
                kind: OutcomeKind::Extinction,
                time: 0.0,
                value: z0,
            });
        }
        let eps = noise.epsilon;
        let scale = eps * dt.sqrt();
        let bridge_rate = if eps > 0.0 {
            2.0 / (eps * eps * dt)
        } else {
            0.0
        };
        let mut stream = noise.stream();
        let n = step_count(dt, t_max);
        let mut z = z0;
        for k in 0..n {
            let (xi, [u_low, u_high]) = stream.normal_and_uniforms();
            let next = scalar_step(&drift, z, dt, kind) + scale * xi;
            if !next.is_finite() {
                return Err(Error::Blowup {
                    last_valid_time: k as f64 * dt,
                });
            }
            if next >= ell || next <= 0.0 {
                let level = if next >= ell { ell } else { 0.0 };
                let theta = crossing_fraction(z, next, level);
                return Ok(ScalarOutcome {
                    kind: if level > 0.0 {
                        OutcomeKind::Onset
                    } else {
                        OutcomeKind::Extinction
                    },
                    time: (k as f64 + theta) * dt,
                    value: level,
                });
            }
            if bridge && bridge_rate > 0.0 {
                let p_low = (-bridge_rate * z * next).exp();
                let p_high = (-bridge_rate * (ell - z) * (ell - next)).exp();
                let low = u_low < p_low;
                let high = u_high < p_high;
                if low || high {
                    // both can only fire when the step spans the interval;
                    // the likelier crossing is taken
                    let onset = high && (!low || p_high > p_low);
                    return Ok(ScalarOutcome {
                        kind: if onset {
                            OutcomeKind::Onset
                        } else {
                            OutcomeKind::Extinction
                        },
                        time: (k as f64 + 0.5) * dt,
                        value: if onset { ell } else { 0.0 },
                    });
                }
            }
            z = next;
        }
        Ok(ScalarOutcome {
            kind: OutcomeKind::Censored,
            time: t_max,
            value: z,
        })
    }
}

/// Evolves the scalar SDE without barriers up to time `t` and returns `Z_t`.
pub fn scalar_value_at<F: Fn(f64) -> f64>(
    drift: F,
    z0: f64,
    dt: f64,
    t: f64,
    noise: &NoiseConfig,
    kind: StepperKind,
) -> Result<f64> {
    noise.validate()?;
    let scale = noise.epsilon * dt.sqrt();
    let mut stream = noise.stream();
    let mut z = z0;
    for k in 0..step_count(dt, t) {
        let (xi, _) = stream.normal_and_uniforms();
        z = scalar_step(&drift, z, dt, kind) + scale * xi;
        if !z.is_finite() {
            return Err(Error::Blowup {
                last_valid_time: k as f64 * dt,
            });
        }
    }
    Ok(z)
}
