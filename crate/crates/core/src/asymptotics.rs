//! Small-noise Gaussian approximation of the onset time.
//!
//! Around the deterministic path the fluctuation `(X_t - x(t)) / eps` is
//! asymptotically Gaussian with covariance `Sigma(t)` solving
//!
//! ```text
//! dSigma/dt = I + A(t) Sigma + Sigma A(t)^T,   Sigma(0) = 0,
//! ```
//!
//! with `A(t)` the drift Jacobian along the path. Projecting onto the
//! `v = ell` plane gives the onset-time variance
//! `eps^2 Sigma_22(T) / (ell^2 (u(T) + ell)^2)`.

use nalgebra::{Matrix3, SymmetricEigen};
use serde::Serialize;

use crate::det::{deterministic_onset_time, integrate_ode, DetOnset, Trajectory};
use crate::msd::jacobian_unchecked;
use crate::{Error, ModelParams, Result, State};

/// Symmetric 3x3 covariance matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovMatrix(pub Matrix3<f64>);

impl CovMatrix {
    pub fn zeros() -> Self {
        Self(Matrix3::zeros())
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    /// Variance of the `v` fluctuation.
    pub fn sigma22(&self) -> f64 {
        self.0[(1, 1)]
    }

    pub fn asymmetry(&self) -> f64 {
        (self.0 - self.0.transpose()).abs().max()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        SymmetricEigen::new(self.0).eigenvalues.min()
    }
}

#[inline]
fn lyapunov_rhs(a: &Matrix3<f64>, sigma: &Matrix3<f64>) -> Matrix3<f64> {
    let a_sigma = a * sigma;
    Matrix3::identity() + a_sigma + a_sigma.transpose()
}

/// RK4 step of the covariance ODE given `A` at the start, midpoint and end.
#[inline]
fn sigma_step(
    sigma: &Matrix3<f64>,
    h: f64,
    a0: &Matrix3<f64>,
    a_mid: &Matrix3<f64>,
    a1: &Matrix3<f64>,
) -> Matrix3<f64> {
    let k1 = lyapunov_rhs(a0, sigma);
    let k2 = lyapunov_rhs(a_mid, &(sigma + k1 * (0.5 * h)));
    let k3 = lyapunov_rhs(a_mid, &(sigma + k2 * (0.5 * h)));
    let k4 = lyapunov_rhs(a1, &(sigma + k3 * h));
    let next = sigma + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    (next + next.transpose()) * 0.5
}

/// Integrates the covariance ODE for an arbitrary coefficient `A(t)` on the
/// grid `k * dt`, with a final partial step landing exactly on `t_end`.
///
/// `observer` sees `(t, Sigma(t))` after every step.
pub fn integrate_sigma_with<A, O>(a: A, dt: f64, t_end: f64, mut observer: O) -> Result<CovMatrix>
where
    A: Fn(f64) -> Result<Matrix3<f64>>,
    O: FnMut(f64, &CovMatrix),
{
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "dt must be positive, got {dt}"
        )));
    }
    if !(t_end.is_finite() && t_end >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "t_end must be >= 0, got {t_end}"
        )));
    }
    let full = ((t_end / dt) * (1.0 + 1e-12)).floor() as usize;
    let mut sigma = Matrix3::zeros();
    let mut a_prev = a(0.0)?;
    for k in 0..full {
        let t0 = k as f64 * dt;
        let t1 = (k + 1) as f64 * dt;
        let a_mid = a(t0 + 0.5 * dt)?;
        let a_next = a(t1.min(t_end))?;
        sigma = sigma_step(&sigma, dt, &a_prev, &a_mid, &a_next);
        if !sigma.iter().all(|x| x.is_finite()) {
            return Err(Error::Blowup {
                last_valid_time: t0,
            });
        }
        observer(t1, &CovMatrix(sigma));
        a_prev = a_next;
    }
    let t_last = full as f64 * dt;
    let rest = t_end - t_last;
    if rest > 0.0 {
        let a_mid = a(t_last + 0.5 * rest)?;
        let a_end = a(t_end)?;
        sigma = sigma_step(&sigma, rest, &a_prev, &a_mid, &a_end);
        if !sigma.iter().all(|x| x.is_finite()) {
            return Err(Error::Blowup {
                last_valid_time: t_last,
            });
        }
        observer(t_end, &CovMatrix(sigma));
    }
    Ok(CovMatrix(sigma))
}

/// Covariance `Sigma(t_end)` along a stored deterministic trajectory; `A` at
/// RK4 half steps uses linearly interpolated states.
pub fn integrate_sigma(traj: &Trajectory, t_end: f64) -> Result<CovMatrix> {
    integrate_sigma_observed(traj, t_end, |_, _| {})
}

pub fn integrate_sigma_observed<O>(traj: &Trajectory, t_end: f64, observer: O) -> Result<CovMatrix>
where
    O: FnMut(f64, &CovMatrix),
{
    let end = traj.t_end();
    if !(0.0..=end * (1.0 + 1e-12)).contains(&t_end) {
        return Err(Error::OutOfRange {
            requested: t_end,
            end,
        });
    }
    let params = *traj.params();
    integrate_sigma_with(
        |t| Ok(jacobian_unchecked(&params, &traj.state_at(t.min(end))?)),
        traj.dt(),
        t_end,
        observer,
    )
}

/// Gaussian approximation `N(T, eps^2 H)` of the onset time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OnsetGaussian {
    /// Deterministic onset time `T`.
    pub mean: f64,
    pub variance: f64,
    pub epsilon: f64,
    /// `u(T)` at the deterministic hitting point.
    pub u_at_onset: f64,
    pub sigma22: f64,
    /// The noise-free factor `H = Sigma_22(T) / (ell^2 (u(T) + ell)^2)`.
    pub h: f64,
}

impl OnsetGaussian {
    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }
}

/// Builds the Gaussian approximation from an already integrated trajectory.
pub fn onset_gaussian(traj: &Trajectory, ell: f64, epsilon: f64) -> Result<OnsetGaussian> {
    if !(epsilon.is_finite() && epsilon >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "epsilon must be >= 0, got {epsilon}"
        )));
    }
    let (t_onset, hit) = match deterministic_onset_time(traj, ell)? {
        DetOnset::At { time, state } => (time, state),
        DetOnset::Never => {
            return Err(Error::NoOnset {
                t_max: traj.t_end(),
            })
        }
    };
    let sigma = integrate_sigma(traj, t_onset)?;
    let denom = (ell * (hit.u + ell)).powi(2);
    let h = sigma.sigma22() / denom;
    Ok(OnsetGaussian {
        mean: t_onset,
        variance: epsilon * epsilon * h,
        epsilon,
        u_at_onset: hit.u,
        sigma22: sigma.sigma22(),
        h,
    })
}

/// Integrates the deterministic path and returns the small-noise Gaussian
/// law of the onset time.
pub fn onset_variance(
    params: &ModelParams,
    x0: State,
    ell: f64,
    epsilon: f64,
    dt: f64,
    t_max: f64,
) -> Result<OnsetGaussian> {
    let traj = integrate_ode(params, x0, dt, t_max)?;
    onset_gaussian(&traj, ell, epsilon)
}

/// Normal density of the onset-time approximation.
pub fn gaussian_onset_pdf(g: &OnsetGaussian, t: f64) -> Result<f64> {
    if g.variance <= 0.0 {
        return Err(Error::PointMass);
    }
    let z = (t - g.mean) / g.std_dev();
    Ok((-0.5 * z * z).exp() / (g.std_dev() * (2.0 * std::f64::consts::PI).sqrt()))
}

/// Normal CDF of the onset-time approximation.
pub fn gaussian_onset_cdf(g: &OnsetGaussian, t: f64) -> Result<f64> {
    if g.variance <= 0.0 {
        return Err(Error::PointMass);
    }
    Ok(crate::stats::normal_cdf((t - g.mean) / g.std_dev()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::msd::drift;

    fn reference_traj(v0: f64, dt: f64) -> Trajectory {
        integrate_ode(
            &ModelParams::default(),
            State::new(-0.01, v0, 1e-4),
            dt,
            50.0,
        )
        .unwrap()
    }

    #[test]
    fn zero_coefficient_gives_linear_growth() {
        let sigma = integrate_sigma_with(|_| Ok(Matrix3::zeros()), 1e-3, 2.5, |_, _| {}).unwrap();
        assert!((sigma.0 - Matrix3::identity() * 2.5).abs().max() < 1e-12);
    }

    #[test]
    fn scalar_coefficient_closed_form() {
        // A = a I: Sigma(t) = (e^{2at} - 1) / (2a) I
        let a = 0.5;
        let sigma =
            integrate_sigma_with(|_| Ok(Matrix3::identity() * a), 1e-3, 1.0, |_, _| {}).unwrap();
        let exact = ((2.0 * a).exp() - 1.0) / (2.0 * a);
        for i in 0..3 {
            assert!((sigma.get(i, i) / exact - 1.0).abs() < 1e-8);
        }
        assert!(sigma.get(0, 1).abs() < 1e-15);
    }

    #[test]
    fn partial_final_step_lands_on_t_end() {
        let mut last = 0.0;
        let sigma =
            integrate_sigma_with(|_| Ok(Matrix3::zeros()), 0.3, 1.0, |t, _| last = t).unwrap();
        assert_eq!(last, 1.0);
        assert!((sigma.get(1, 1) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn sigma_stays_symmetric_psd_along_path() {
        let traj = reference_traj(0.02, 1e-3);
        let t_onset = deterministic_onset_time(&traj, 0.1)
            .unwrap()
            .time()
            .unwrap();
        let mut worst_asym: f64 = 0.0;
        let mut worst_eig = f64::INFINITY;
        integrate_sigma_observed(&traj, t_onset, |_, s| {
            worst_asym = worst_asym.max(s.asymmetry());
            worst_eig = worst_eig.min(s.min_eigenvalue() / s.matrix().abs().max().max(1.0));
        })
        .unwrap();
        assert!(worst_asym <= 1e-12, "{worst_asym}");
        assert!(worst_eig >= -1e-10, "{worst_eig}");
    }

    #[test]
    fn grid_refinement_converges() {
        let a = onset_gaussian(&reference_traj(0.02, 1e-3), 0.1, 1.0).unwrap();
        let b = onset_gaussian(&reference_traj(0.02, 5e-4), 0.1, 1.0).unwrap();
        assert!(
            (a.sigma22 / b.sigma22 - 1.0).abs() < 1e-6,
            "{} vs {}",
            a.sigma22,
            b.sigma22
        );
    }

    #[test]
    fn variance_scales_with_eps_squared() {
        let params = ModelParams::default();
        let x0 = State::new(-0.01, 0.03, 1e-4);
        let g1 = onset_variance(&params, x0, 0.1, 1e-3, 1e-3, 50.0).unwrap();
        let g2 = onset_variance(&params, x0, 0.1, 2e-3, 1e-3, 50.0).unwrap();
        assert!((g2.variance / g1.variance - 4.0).abs() < 1e-12);
        assert_eq!(g1.mean, g2.mean);
    }

    #[test]
    fn denominator_matches_drift_at_hit_point() {
        let traj = reference_traj(0.03, 1e-3);
        let hit = deterministic_onset_time(&traj, 0.1)
            .unwrap()
            .state()
            .unwrap();
        let mu = drift(traj.params(), &hit).unwrap();
        assert!((mu.v + 0.1 * (hit.u + 0.1)).abs() < 1e-9);
    }

    #[test]
    fn no_onset_is_an_error() {
        let params = ModelParams::default();
        let err = onset_variance(&params, State::reference(), 0.1, 1e-3, 1e-3, 1.0).unwrap_err();
        assert!(matches!(err, Error::NoOnset { .. }));
    }

    #[test]
    fn out_of_range_end_time() {
        let traj = integrate_ode(&ModelParams::default(), State::reference(), 1e-3, 1.0).unwrap();
        assert!(matches!(
            integrate_sigma(&traj, 2.0),
            Err(Error::OutOfRange { .. })
        ));
    }

    #[test]
    fn pdf_symmetric_and_normalised() {
        let g = onset_variance(
            &ModelParams::default(),
            State::new(-0.01, 0.02, 1e-4),
            0.1,
            1e-3,
            1e-3,
            50.0,
        )
        .unwrap();
        let sd = g.std_dev();
        for d in [0.1, 0.5, 2.0] {
            let a = gaussian_onset_pdf(&g, g.mean + d * sd).unwrap();
            let b = gaussian_onset_pdf(&g, g.mean - d * sd).unwrap();
            assert!((a - b).abs() <= 1e-14 * a.max(b));
        }
        let integral = crate::quad::simpson(
            |t| gaussian_onset_pdf(&g, t).unwrap(),
            g.mean - 8.0 * sd,
            g.mean + 8.0 * sd,
            2000,
        );
        assert!((integral - 1.0).abs() < 1e-6, "{integral}");
    }

    #[test]
    fn degenerate_variance_is_point_mass() {
        let g = OnsetGaussian {
            mean: 1.0,
            variance: 0.0,
            epsilon: 0.0,
            u_at_onset: -0.2,
            sigma22: 1.0,
            h: 1.0,
        };
        assert_eq!(gaussian_onset_pdf(&g, 1.0), Err(Error::PointMass));
    }
}
