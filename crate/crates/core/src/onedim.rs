//! First-passage formulas for the scalar diffusion `dZ = F(Z) dt + eps dW`
//! on `[0, ell]`: hitting probability, conditional expected hitting time
//! and its small-start limit, plus the error-function asymptotics that
//! govern small-noise hitting probabilities.
//!
//! With `g(y) = (2/eps^2) int_0^y F` the integrating factor is
//! `k(y) = exp(-g(y))`. Everything is evaluated through `g` and exponent
//! differences, never through `k` or `1/k` directly, which overflow long
//! before the quantities of interest do.
//!
//! The conditional time uses the factorisation
//!
//! ```text
//! M(u) = int_0^u p(y) exp(g(y) - g(u)) dy      (= k(u) K(u))
//! J(x) = int_0^x M
//! E_x  = (2/eps^2) (J(ell) - J(x) / p(x))
//! Psi  = (2/eps^2) J(ell)
//! ```
//!
//! so the double integral over `[x, ell] x [0, x]` collapses into one
//! cumulative pass and `Psi - E_x = (2/eps^2) J(x) / p(x)` comes out free
//! of cancellation.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::quad::{self, QuadConfig, PANEL_POINTS};
use crate::{Error, Result};

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Step of the central difference used when `F'(0)` is not supplied.
pub const DERIVATIVE_STEP: f64 = 1e-7;

/// A scalar drift with an optional analytic slope at the origin.
#[derive(Clone)]
pub struct DriftFn1D {
    f: ScalarFn,
    pub f_prime_at_0: Option<f64>,
    pub label: String,
    pub quad: QuadConfig,
}

impl fmt::Debug for DriftFn1D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DriftFn1D")
            .field("label", &self.label)
            .field("f_prime_at_0", &self.f_prime_at_0)
            .field("quad", &self.quad)
            .finish_non_exhaustive()
    }
}

impl DriftFn1D {
    pub fn new(label: impl Into<String>, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            f: Arc::new(f),
            f_prime_at_0: None,
            label: label.into(),
            quad: QuadConfig::default(),
        }
    }

    pub fn with_derivative(mut self, f_prime_at_0: f64) -> Self {
        self.f_prime_at_0 = Some(f_prime_at_0);
        self
    }

    pub fn with_quad(mut self, quad: QuadConfig) -> Self {
        self.quad = quad;
        self
    }

    /// Built-in drifts scaled by `coeff`: `zero` (0), `linear` (`coeff * x`)
    /// and `logistic` (`coeff * x (1 - x)`).
    pub fn named(name: &str, coeff: f64) -> Result<Self> {
        if !coeff.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "drift coefficient {coeff}"
            )));
        }
        let d = match name {
            "zero" => Self::new("zero", |_| 0.0).with_derivative(0.0),
            "linear" => {
                Self::new(format!("linear({coeff})"), move |x| coeff * x).with_derivative(coeff)
            }
            "logistic" => Self::new(format!("logistic({coeff})"), move |x| coeff * x * (1.0 - x))
                .with_derivative(coeff),
            other => {
                return Err(Error::InvalidParameter(format!(
                    "unknown drift '{other}' (expected zero, linear or logistic)"
                )))
            }
        };
        Ok(d)
    }

    pub fn eval(&self, x: f64) -> f64 {
        (self.f)(x)
    }

    /// `F'(0)`, estimated by a central difference when not supplied.
    pub fn slope_at_origin(&self) -> f64 {
        match self.f_prime_at_0 {
            Some(d) => d,
            None => {
                let h = DERIVATIVE_STEP;
                let d = (self.eval(h) - self.eval(-h)) / (2.0 * h);
                log::warn!(
                    "F'(0) of drift '{}' not supplied; central-difference estimate {d}",
                    self.label
                );
                d
            }
        }
    }
}

fn check_eps(epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    Ok(())
}

fn check_level(ell: f64, x: f64) -> Result<()> {
    if !(ell > 0.0 && ell.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "level must be positive, got {ell}"
        )));
    }
    if !(0.0..=ell).contains(&x) {
        return Err(Error::InvalidParameter(format!(
            "x = {x} outside [0, {ell}]"
        )));
    }
    Ok(())
}

/// `log k_eps(y) = -(2/eps^2) int_0^y F`.
pub fn log_k_eps(drift: &DriftFn1D, epsilon: f64, y: f64) -> Result<f64> {
    check_eps(epsilon)?;
    if !(y >= 0.0 && y.is_finite()) {
        return Err(Error::InvalidParameter(format!("y must be >= 0, got {y}")));
    }
    let int = quad::integrate(|z| drift.eval(z), 0.0, y, &drift.quad)?;
    Ok(-2.0 / (epsilon * epsilon) * int.value)
}

pub fn k_eps(drift: &DriftFn1D, epsilon: f64, y: f64) -> Result<f64> {
    Ok(log_k_eps(drift, epsilon, y)?.exp())
}

/// Probability that the diffusion started at `x` reaches `ell` before 0:
/// `int_0^x k / int_0^ell k`, with `k` rescaled by its maximum on a scan
/// of the interval.
pub fn hit_prob_1d(drift: &DriftFn1D, epsilon: f64, ell: f64, x: f64) -> Result<f64> {
    check_eps(epsilon)?;
    check_level(ell, x)?;
    if x == 0.0 {
        return Ok(0.0);
    }
    const SCAN: usize = 64;
    let mut shift = 0.0f64;
    for i in 1..=SCAN {
        shift = shift.max(log_k_eps(drift, epsilon, ell * i as f64 / SCAN as f64)?);
    }
    shift = shift.max(log_k_eps(drift, epsilon, x)?);
    let integrand = |y: f64| match log_k_eps(drift, epsilon, y) {
        Ok(l) => (l - shift).exp(),
        Err(_) => f64::NAN,
    };
    let below = quad::integrate(integrand, 0.0, x, &drift.quad)?.value;
    let above = quad::integrate(integrand, x, ell, &drift.quad)?.value;
    let total = below + above;
    if !(total > 0.0) {
        return Err(Error::Quadrature {
            estimate: total,
            error: f64::NAN,
        });
    }
    Ok(below / total)
}

/// Small-noise limit of the hitting probability from `x = c eps^alpha`:
/// 1 for `alpha < 1`, `erf(c sqrt(F'(0)))` for `alpha = 1`, 0 for
/// `alpha > 1`.
pub fn asymptotic_hit_prob(drift: &DriftFn1D, c: f64, alpha: f64) -> Result<f64> {
    if !(c > 0.0 && c.is_finite() && alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "need c > 0 and alpha > 0, got c={c}, alpha={alpha}"
        )));
    }
    let slope = drift.slope_at_origin();
    if !(slope > 0.0 && slope.is_finite()) {
        return Err(Error::Contract(format!(
            "drift '{}' needs F'(0) > 0, got {slope}",
            drift.label
        )));
    }
    Ok(if alpha < 1.0 {
        1.0
    } else if alpha == 1.0 {
        libm::erf(c * slope.sqrt())
    } else {
        0.0
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ErfRegime {
    /// `alpha < 1`: the argument grows without bound and `erf -> 1`.
    TendsToOne,
    /// `alpha = 1`: the argument is `c` for every `eps`.
    Constant,
    /// `alpha > 1`: the argument vanishes and
    /// `erf ~ (2c/sqrt(pi)) eps^(alpha-1)`.
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErfAsymptotics {
    pub value: f64,
    pub regime: ErfRegime,
    /// Leading-order approximation of `value` in this regime.
    pub leading: f64,
}

/// `erf(c eps^(alpha-1))` together with its asymptotic regime as `eps -> 0`.
pub fn erf_asymptotics(c: f64, alpha: f64, epsilon: f64) -> Result<ErfAsymptotics> {
    check_eps(epsilon)?;
    if !(c > 0.0 && c.is_finite() && alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "need c > 0 and alpha > 0, got c={c}, alpha={alpha}"
        )));
    }
    let (arg, regime) = if alpha == 1.0 {
        (c, ErfRegime::Constant)
    } else if alpha < 1.0 {
        (c * epsilon.powf(alpha - 1.0), ErfRegime::TendsToOne)
    } else {
        (c * epsilon.powf(alpha - 1.0), ErfRegime::Linear)
    };
    let value = libm::erf(arg);
    let leading = match regime {
        ErfRegime::TendsToOne => 1.0,
        ErfRegime::Constant => value,
        ErfRegime::Linear => 2.0 / std::f64::consts::PI.sqrt() * arg,
    };
    Ok(ErfAsymptotics {
        value,
        regime,
        leading,
    })
}

/// Largest change of `g` tolerated across one panel.
const MAX_PANEL_DG: f64 = 8.0;
/// Cap on the panel count; the count grows like `g(ell) / MAX_PANEL_DG`.
const MAX_PANELS: usize = 1 << 20;
/// Relative agreement required between the panel rule and Gauss-Kronrod on
/// `int F` before a panel counts as resolved.
const PANEL_F_RTOL: f64 = 1e-13;

/// One Chebyshev panel with the cumulative quantities at its nodes.
#[derive(Debug, Clone)]
struct Panel {
    a: f64,
    b: f64,
    g: [f64; PANEL_POINTS],
    p: [f64; PANEL_POINTS],
    m: [f64; PANEL_POINTS],
    j: [f64; PANEL_POINTS],
}

/// Tabulated first-passage quantities on `[0, ell]` for one `(F, eps)`.
/// Queries are exact (to quadrature accuracy) at the breakpoints given at
/// construction plus 0 and `ell`.
#[derive(Debug, Clone)]
pub struct PassageTable {
    epsilon: f64,
    ell: f64,
    panels: Vec<Panel>,
}

impl PassageTable {
    pub fn new(drift: &DriftFn1D, epsilon: f64, ell: f64, breakpoints: &[f64]) -> Result<Self> {
        check_eps(epsilon)?;
        check_level(ell, 0.0)?;
        drift.quad.validate()?;
        let mut cuts = vec![0.0, ell];
        for &x in breakpoints {
            check_level(ell, x)?;
            cuts.push(x);
        }
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let scale = 2.0 / (epsilon * epsilon);

        // pass 1: panels resolving F with bounded change of g
        let mut panels: Vec<Panel> = Vec::new();
        let mut g_start = 0.0;
        for w in cuts.windows(2) {
            let mut stack = vec![(w[0], w[1])];
            while let Some((a, b)) = stack.pop() {
                let nodes = quad::panel_nodes(a, b);
                let fv = nodes.map(|y| drift.eval(y));
                if fv.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Domain("drift is not finite on [0, ell]"));
                }
                let cum = quad::panel_cumulative(a, b, &fv);
                let (gk, _) = quad::gk21(&|y| drift.eval(y), a, b);
                let fmax = fv.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                let resolved = (cum[PANEL_POINTS - 1] - gk).abs() <= PANEL_F_RTOL * (b - a) * fmax;
                let g = cum.map(|c| g_start + scale * c);
                let (lo, hi) = min_max(&g);
                if (!resolved || hi - lo > MAX_PANEL_DG) && b - a > 1e-12 * ell {
                    let mid = 0.5 * (a + b);
                    // right half first so the left half is processed next
                    stack.push((mid, b));
                    stack.push((a, mid));
                    continue;
                }
                if panels.len() >= MAX_PANELS {
                    return Err(Error::Quadrature {
                        estimate: f64::NAN,
                        error: f64::INFINITY,
                    });
                }
                g_start = g[PANEL_POINTS - 1];
                panels.push(Panel {
                    a,
                    b,
                    g,
                    p: [0.0; PANEL_POINTS],
                    m: [0.0; PANEL_POINTS],
                    j: [0.0; PANEL_POINTS],
                });
            }
        }

        // pass 2: D = int exp(-(g - g_min)), stored in p until normalised
        let g_min = panels
            .iter()
            .flat_map(|p| p.g.iter())
            .fold(f64::INFINITY, |m, &v| m.min(v));
        let mut d = 0.0;
        for panel in &mut panels {
            let vals = panel.g.map(|g| (g_min - g).exp());
            let cum = quad::panel_cumulative(panel.a, panel.b, &vals);
            panel.p = cum.map(|c| d + c);
            d = panel.p[PANEL_POINTS - 1];
        }
        if !(d > 0.0 && d.is_finite()) {
            return Err(Error::Quadrature {
                estimate: d,
                error: f64::NAN,
            });
        }
        for panel in &mut panels {
            panel.p = panel.p.map(|v| v / d);
        }
        panels.last_mut().expect("at least one panel").p[PANEL_POINTS - 1] = 1.0;

        // pass 3: M and its running integral J
        let (mut m_prev, mut g_prev, mut j) = (0.0, 0.0, 0.0);
        for panel in &mut panels {
            let (_, g_ref) = min_max(&panel.g);
            let mut vals = [0.0; PANEL_POINTS];
            for k in 0..PANEL_POINTS {
                vals[k] = panel.p[k] * (panel.g[k] - g_ref).exp();
            }
            let cum = quad::panel_cumulative(panel.a, panel.b, &vals);
            for k in 0..PANEL_POINTS {
                panel.m[k] =
                    m_prev * (g_prev - panel.g[k]).exp() + (g_ref - panel.g[k]).exp() * cum[k];
            }
            let cum_m = quad::panel_cumulative(panel.a, panel.b, &panel.m);
            panel.j = cum_m.map(|c| j + c);
            m_prev = panel.m[PANEL_POINTS - 1];
            g_prev = panel.g[PANEL_POINTS - 1];
            j = panel.j[PANEL_POINTS - 1];
        }
        if !j.is_finite() {
            return Err(Error::Quadrature {
                estimate: j,
                error: f64::NAN,
            });
        }
        Ok(Self {
            epsilon,
            ell,
            panels,
        })
    }

    pub fn panel_count(&self) -> usize {
        self.panels.len()
    }

    /// Node index of a breakpoint.
    fn locate(&self, x: f64) -> Result<(usize, usize)> {
        if x == 0.0 {
            return Ok((0, 0));
        }
        self.panels
            .iter()
            .position(|p| p.b == x)
            .map(|i| (i, PANEL_POINTS - 1))
            .ok_or_else(|| Error::InvalidParameter(format!("{x} is not a breakpoint of the table")))
    }

    fn scale(&self) -> f64 {
        2.0 / (self.epsilon * self.epsilon)
    }

    pub fn hit_prob(&self, x: f64) -> Result<f64> {
        let (i, k) = self.locate(x)?;
        Ok(self.panels[i].p[k])
    }

    /// `Psi(eps) = lim_{x -> 0} E_x[tau_ell | tau_ell < tau_0]`.
    pub fn psi(&self) -> f64 {
        self.scale() * self.panels.last().expect("at least one panel").j[PANEL_POINTS - 1]
    }

    /// `Psi(eps) - E_x[tau_ell | tau_ell < tau_0]`, computed directly.
    pub fn psi_gap(&self, x: f64) -> Result<f64> {
        let (i, k) = self.locate(x)?;
        let (p, j) = (self.panels[i].p[k], self.panels[i].j[k]);
        if x == 0.0 {
            return Ok(0.0);
        }
        if !(p > 0.0) {
            return Err(Error::Domain("hitting probability vanishes at x"));
        }
        Ok(self.scale() * j / p)
    }

    /// `E_x[tau_ell | tau_ell < tau_0]` for `x` in `(0, ell]`.
    pub fn cond_exp(&self, x: f64) -> Result<f64> {
        if !(x > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "x must lie in (0, {}], got {x}",
                self.ell
            )));
        }
        if x == self.ell {
            return Ok(0.0);
        }
        Ok((self.psi() - self.psi_gap(x)?).max(0.0))
    }
}

fn min_max(xs: &[f64]) -> (f64, f64) {
    xs.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        })
}

/// `E_x[tau_ell | tau_ell < tau_0]` for the diffusion started at `x`.
pub fn cond_exp_hit_time(drift: &DriftFn1D, epsilon: f64, ell: f64, x: f64) -> Result<f64> {
    check_level(ell, x)?;
    if x == 0.0 {
        return Err(Error::InvalidParameter(format!("x must lie in (0, {ell}]")));
    }
    PassageTable::new(drift, epsilon, ell, &[x])?.cond_exp(x)
}

/// Limit of the conditional expected hitting time as the start tends to 0.
pub fn psi_limit(drift: &DriftFn1D, epsilon: f64, ell: f64) -> Result<f64> {
    Ok(PassageTable::new(drift, epsilon, ell, &[])?.psi())
}

/// Time for the noiseless flow `z' = F(z)` to climb from `x` to `ell`;
/// infinite if `F` vanishes on the way.
pub fn deterministic_time_1d(drift: &DriftFn1D, ell: f64, x: f64) -> Result<f64> {
    check_level(ell, x)?;
    if x == ell {
        return Ok(0.0);
    }
    // a zero of F on the way makes the time infinite
    let nodes = quad::panel_nodes(x, ell);
    if nodes.iter().any(|&y| !(drift.eval(y) > 0.0)) {
        return Ok(f64::INFINITY);
    }
    // substitute y = x (ell/x)^s so logarithmic growth near 0 stays smooth
    let ratio = (ell / x).ln();
    let r = quad::integrate(
        |s| {
            let y = x * (s * ratio).exp();
            y * ratio / drift.eval(y)
        },
        0.0,
        1.0,
        &drift.quad,
    )?;
    Ok(r.value)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimpsonCheck {
    pub hit_prob: f64,
    pub cond_exp: f64,
    pub psi: f64,
}

/// Slow cross-check: the hitting probability, the conditional expected
/// time as the literal double integral of `k(z) k(u) (K(z) - K(u))` with
/// `K = int p / k`, and `Psi`, all by nested composite Simpson rules with
/// `n` subintervals per level. Only usable while `g` spans less than the
/// double exponent range.
pub fn simpson_cross_check(
    drift: &DriftFn1D,
    epsilon: f64,
    ell: f64,
    x: f64,
    n: usize,
) -> Result<SimpsonCheck> {
    check_eps(epsilon)?;
    check_level(ell, x)?;
    if !(x > 0.0 && x < ell) {
        return Err(Error::InvalidParameter(format!("x must lie in (0, {ell})")));
    }
    let n = (n.max(2) + 1) & !1;
    let scale = 2.0 / (epsilon * epsilon);
    let g = |y: f64| scale * quad::simpson(|z| drift.eval(z), 0.0, y, n);
    let k = |y: f64| (-g(y)).exp();
    let d = |y: f64| quad::simpson(k, 0.0, y, n);
    let d_ell = d(ell);
    let p = |y: f64| d(y) / d_ell;
    let big_k = |y: f64| quad::simpson(|z| p(z) / k(z), 0.0, y, n);

    let grid = |a: f64, b: f64| -> Vec<(f64, f64, f64)> {
        (0..=n)
            .map(|i| {
                let y = a + (b - a) * i as f64 / n as f64;
                let w = if i == 0 || i == n {
                    1.0
                } else if i % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                (y, w * (b - a) / (3.0 * n as f64), 0.0)
            })
            .map(|(y, w, _)| (w, k(y), big_k(y)))
            .collect()
    };
    let lower = grid(0.0, x);
    let upper = grid(x, ell);
    let mut double = 0.0;
    for &(wz, kz, bz) in &upper {
        for &(wu, ku, bu) in &lower {
            double += wz * wu * kz * ku * (bz - bu);
        }
    }
    let d_x = d(x);
    let cond_exp = scale * double / d_x;
    let psi = scale
        * lower
            .iter()
            .chain(upper.iter())
            .map(|&(w, kk, bk)| w * kk * bk)
            .sum::<f64>();
    let out = SimpsonCheck {
        hit_prob: d_x / d_ell,
        cond_exp,
        psi,
    };
    if !(out.cond_exp.is_finite() && out.psi.is_finite() && out.hit_prob.is_finite()) {
        return Err(Error::Quadrature {
            estimate: out.cond_exp,
            error: f64::NAN,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// `erf(x) = 2/sqrt(pi) exp(-x^2) sum_n 2^n x^(2n+1) / (2n+1)!!`, a
    /// positive-term series independent of libm.
    fn erf_series(x: f64) -> f64 {
        let mut term = x;
        let mut sum = x;
        for n in 1..400 {
            term *= 2.0 * x * x / (2 * n + 1) as f64;
            sum += term;
            if term < 1e-17 * sum {
                break;
            }
        }
        2.0 / std::f64::consts::PI.sqrt() * (-x * x).exp() * sum
    }

    fn linear() -> DriftFn1D {
        DriftFn1D::named("linear", 1.0).unwrap()
    }

    #[test]
    fn erf_series_agrees_with_libm() {
        for &x in &[0.0, 0.1, 0.5, 1.0, 2.0, 3.0] {
            assert!((erf_series(x) - libm::erf(x)).abs() < 1e-14);
        }
    }

    #[test]
    fn k_eps_closed_forms() {
        let zero = DriftFn1D::named("zero", 1.0).unwrap();
        assert_eq!(k_eps(&zero, 0.1, 0.07).unwrap(), 1.0);
        assert_eq!(k_eps(&linear(), 0.1, 0.0).unwrap(), 1.0);
        let eps = 0.03;
        assert!((k_eps(&linear(), eps, eps).unwrap() - (-1.0f64).exp()).abs() < 1e-14);
        assert!((log_k_eps(&linear(), 1e-3, 0.1).unwrap() + 1e4).abs() < 1e-8);
        assert!(k_eps(&linear(), 0.1, -1.0).is_err());
    }

    #[test]
    fn brownian_hit_probability_is_linear() {
        let zero = DriftFn1D::named("zero", 1.0).unwrap();
        assert!((hit_prob_1d(&zero, 0.1, 0.1, 0.05).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(hit_prob_1d(&linear(), 0.01, 0.1, 0.0).unwrap(), 0.0);
        assert_eq!(hit_prob_1d(&linear(), 0.01, 0.1, 0.1).unwrap(), 1.0);
    }

    #[test]
    fn linear_drift_hit_probability_closed_form() {
        // int_0^x exp(-y^2/eps^2) = (sqrt(pi) eps / 2) erf(x / eps)
        let eps = 0.04;
        for &x in &[0.01, 0.03, 0.07] {
            let exact = erf_series(x / eps) / erf_series(0.1 / eps);
            assert!((hit_prob_1d(&linear(), eps, 0.1, x).unwrap() - exact).abs() < 1e-9);
        }
    }

    #[test]
    fn hit_probability_approaches_erf_one() {
        let target = erf_series(1.0);
        let gaps: Vec<f64> = [1e-1, 1e-2, 1e-3]
            .iter()
            .map(|&e| (hit_prob_1d(&linear(), e, 0.1, e).unwrap() - target).abs())
            .collect();
        // below eps = 1e-2 the exact gap is ~1e-45, so only round-off remains
        assert!(gaps[1] <= gaps[0] && gaps[2] <= gaps[1] + 1e-15, "{gaps:?}");
        assert!(gaps[2] < 1e-3);
    }

    #[test]
    fn survives_huge_exponents() {
        let p = hit_prob_1d(&linear(), 1e-4, 0.1, 5e-5).unwrap();
        assert!((p - erf_series(0.5)).abs() < 1e-6);
        let t = PassageTable::new(&linear(), 1e-3, 0.1, &[1e-4]).unwrap();
        assert!(t.psi().is_finite() && t.psi() > 0.0);
    }

    #[test]
    fn asymptotic_cases() {
        let d = linear();
        assert_eq!(asymptotic_hit_prob(&d, 1.0, 0.5).unwrap(), 1.0);
        assert_eq!(asymptotic_hit_prob(&d, 1.0, 2.0).unwrap(), 0.0);
        assert!((asymptotic_hit_prob(&d, 1.0, 1.0).unwrap() - erf_series(1.0)).abs() < 1e-15);
        let scaled = DriftFn1D::named("linear", 4.0).unwrap();
        assert!((asymptotic_hit_prob(&scaled, 0.5, 1.0).unwrap() - erf_series(1.0)).abs() < 1e-15);
        let zero = DriftFn1D::named("zero", 1.0).unwrap();
        assert!(matches!(
            asymptotic_hit_prob(&zero, 1.0, 1.0),
            Err(Error::Contract(_))
        ));
        // slope estimated when not supplied
        let bare = DriftFn1D::new("bare", |x: f64| x.sin());
        assert!((asymptotic_hit_prob(&bare, 1.0, 1.0).unwrap() - erf_series(1.0)).abs() < 1e-8);
    }

    #[test]
    fn erf_regimes() {
        let a = erf_asymptotics(1.0, 0.5, 1e-4).unwrap();
        assert_eq!(a.regime, ErfRegime::TendsToOne);
        assert!((a.value - 1.0).abs() < 1e-6);
        for &e in &[1e-1, 1e-5] {
            let b = erf_asymptotics(0.7, 1.0, e).unwrap();
            assert_eq!(b.regime, ErfRegime::Constant);
            assert_eq!(b.value, libm::erf(0.7));
        }
        let c = erf_asymptotics(1.0, 2.0, 1e-3).unwrap();
        assert_eq!(c.regime, ErfRegime::Linear);
        let series = 2.0 / std::f64::consts::PI.sqrt() * 1e-3;
        assert!((c.value / series - 1.0).abs() < 1e-4);
        assert!((c.leading / series - 1.0).abs() < 1e-12);
    }

    #[test]
    fn brownian_conditional_time() {
        let zero = DriftFn1D::named("zero", 1.0).unwrap();
        assert!((cond_exp_hit_time(&zero, 0.1, 0.1, 0.05).unwrap() - 0.25).abs() < 1e-12);
        assert!((psi_limit(&zero, 0.1, 0.1).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(cond_exp_hit_time(&linear(), 0.05, 0.1, 0.1).unwrap(), 0.0);
        assert!(cond_exp_hit_time(&linear(), 0.05, 0.1, 0.0).is_err());
        assert!(cond_exp_hit_time(&linear(), 0.05, 0.1, 0.2).is_err());
    }

    #[test]
    fn table_matches_adaptive_probability() {
        let d = DriftFn1D::named("logistic", 3.0).unwrap();
        let xs = [0.01, 0.04, 0.09];
        let t = PassageTable::new(&d, 0.03, 0.1, &xs).unwrap();
        for &x in &xs {
            let a = hit_prob_1d(&d, 0.03, 0.1, x).unwrap();
            assert!((t.hit_prob(x).unwrap() - a).abs() < 1e-10, "{x}");
        }
        assert!(t.hit_prob(0.02).is_err());
    }

    #[test]
    fn table_matches_literal_simpson() {
        for (d, eps) in [
            (linear(), 0.05),
            (DriftFn1D::named("logistic", 1.0).unwrap(), 0.08),
        ] {
            let x = 0.03;
            let s = simpson_cross_check(&d, eps, 0.1, x, 32).unwrap();
            let t = PassageTable::new(&d, eps, 0.1, &[x]).unwrap();
            assert!((t.hit_prob(x).unwrap() - s.hit_prob).abs() < 1e-6);
            assert!((t.cond_exp(x).unwrap() / s.cond_exp - 1.0).abs() < 1e-5);
            assert!((t.psi() / s.psi - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn conditional_time_tends_to_psi() {
        let eps = 0.05;
        let psi = psi_limit(&linear(), eps, 0.1).unwrap();
        let diffs: Vec<f64> = [1e-2, 1e-3, 1e-4]
            .iter()
            .map(|f| (psi - cond_exp_hit_time(&linear(), eps, 0.1, f * 0.1).unwrap()).abs())
            .collect();
        assert!(diffs[0] > diffs[1] && diffs[1] > diffs[2]);
    }

    #[test]
    fn second_order_gap() {
        let eps = 0.05;
        let target = 1.0 / (3.0 * eps * eps);
        let xs = [1e-3, 5e-4, 2e-4];
        let t = PassageTable::new(&linear(), eps, 0.1, &xs).unwrap();
        let ratios: Vec<f64> = xs
            .iter()
            .map(|&x| t.psi_gap(x).unwrap() / (x * x))
            .collect();
        for r in &ratios {
            assert!((r / target - 1.0).abs() < 0.05, "{r}");
        }
        // the remainder is O(x^2) on top of the limit: Richardson removes it
        let rich = (ratios[1] * 4.0 - ratios[0]) / 3.0;
        assert!((rich / target - 1.0).abs() < 1e-4, "{rich}");
    }

    #[test]
    fn shorter_than_deterministic() {
        let eps = 0.05;
        for &f in &[1e-3, 1e-4, 1e-5] {
            let x = f * 0.1;
            let det = deterministic_time_1d(&linear(), 0.1, x).unwrap();
            assert!((det - (0.1 / x).ln()).abs() < 1e-10);
            assert!(cond_exp_hit_time(&linear(), eps, 0.1, x).unwrap() < det);
        }
        let zero = DriftFn1D::named("zero", 1.0).unwrap();
        assert_eq!(
            deterministic_time_1d(&zero, 0.1, 0.05).unwrap(),
            f64::INFINITY
        );
    }

    #[test]
    fn registry() {
        assert!(DriftFn1D::named("cubic", 1.0).is_err());
        let l = DriftFn1D::named("logistic", 2.0).unwrap();
        assert_eq!(l.eval(0.5), 0.5);
        assert_eq!(l.slope_at_origin(), 2.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn hit_probability_is_monotone(
            coeff in 0.1f64..5.0,
            eps in 0.02f64..0.3,
            a in 0.0f64..0.1,
            b in 0.0f64..0.1,
            logistic in any::<bool>(),
        ) {
            let d = DriftFn1D::named(if logistic { "logistic" } else { "linear" }, coeff).unwrap();
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let plo = hit_prob_1d(&d, eps, 0.1, lo).unwrap();
            let phi = hit_prob_1d(&d, eps, 0.1, hi).unwrap();
            prop_assert!((0.0..=1.0).contains(&plo) && (0.0..=1.0).contains(&phi));
            prop_assert!(plo <= phi + 1e-12);
        }

        #[test]
        fn conditional_time_is_bounded_by_psi(
            coeff in 0.1f64..5.0,
            eps in 0.02f64..0.3,
            x in 1e-4f64..0.1,
        ) {
            let d = DriftFn1D::named("linear", coeff).unwrap();
            let t = PassageTable::new(&d, eps, 0.1, &[x]).unwrap();
            let e = t.cond_exp(x).unwrap();
            prop_assert!(e >= 0.0 && e <= t.psi());
        }
    }
}
