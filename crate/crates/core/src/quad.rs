//! Quadrature: adaptive Gauss-Kronrod, composite Simpson, and spectral
//! cumulative integration on Chebyshev panels.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_subdivisions: usize,
}

impl Default for QuadConfig {
    fn default() -> Self {
        Self {
            abs_tol: 1e-10,
            rel_tol: 1e-8,
            max_subdivisions: 1000,
        }
    }
}

impl QuadConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0 && self.rel_tol > 0.0 && self.max_subdivisions > 0) {
            return Err(Error::InvalidParameter(
                "quadrature tolerances and subdivision limit must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

#[allow(clippy::excessive_precision)]
const XGK21: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

#[allow(clippy::excessive_precision)]
const WG10: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

#[allow(clippy::excessive_precision)]
const WGK21: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_958_109_831_074,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

/// 21-point Kronrod rule with the embedded 10-point Gauss rule on `[a, b]`.
/// Returns `(integral, error estimate)` using the QUADPACK error scaling.
pub fn gk21<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let f_center = f(center);
    let mut res_k = WGK21[10] * f_center;
    let mut res_g = 0.0;
    let mut res_abs = res_k.abs();
    let mut fv1 = [0.0; 10];
    let mut fv2 = [0.0; 10];
    for j in 0..10 {
        let dx = half * XGK21[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        res_k += WGK21[j] * (f1 + f2);
        res_abs += WGK21[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            res_g += WG10[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * res_k;
    let mut res_asc = WGK21[10] * (f_center - mean).abs();
    for j in 0..10 {
        res_asc += WGK21[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let result = res_k * half;
    let res_abs = res_abs * half.abs();
    let res_asc = res_asc * half.abs();
    let mut err = ((res_k - res_g) * half).abs();
    if res_asc != 0.0 && err != 0.0 {
        err = res_asc * (200.0 * err / res_asc).powf(1.5).min(1.0);
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * res_abs);
    }
    (result, err)
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Globally adaptive Gauss-Kronrod integration: the segment with the largest
/// error estimate is bisected until the total error meets
/// `max(abs_tol, rel_tol * |I|)`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, cfg: &QuadConfig) -> Result<QuadResult> {
    cfg.validate()?;
    if a == b {
        return Ok(QuadResult {
            value: 0.0,
            error: 0.0,
            evaluations: 0,
        });
    }
    let (value, error) = gk21(&f, a, b);
    let mut evaluations = 21;
    let mut heap = BinaryHeap::new();
    heap.push(Segment { a, b, value, error });
    let mut total = value;
    let mut total_err = error;
    loop {
        if !total.is_finite() {
            return Err(Error::Quadrature {
                estimate: total,
                error: total_err,
            });
        }
        let tol = cfg.abs_tol.max(cfg.rel_tol * total.abs());
        if total_err <= tol {
            break;
        }
        if heap.len() >= cfg.max_subdivisions {
            return Err(Error::Quadrature {
                estimate: total,
                error: total_err,
            });
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a.min(worst.b) || mid >= worst.a.max(worst.b) {
            // interval exhausted at machine precision
            return Err(Error::Quadrature {
                estimate: total,
                error: total_err,
            });
        }
        let (v1, e1) = gk21(&f, worst.a, mid);
        let (v2, e2) = gk21(&f, mid, worst.b);
        evaluations += 42;
        total += v1 + v2 - worst.value;
        total_err += e1 + e2 - worst.error;
        heap.push(Segment {
            a: worst.a,
            b: mid,
            value: v1,
            error: e1,
        });
        heap.push(Segment {
            a: mid,
            b: worst.b,
            value: v2,
            error: e2,
        });
    }
    // resum to shed the drift of the running updates
    let value = heap.iter().map(|s| s.value).sum();
    let error = heap.iter().map(|s| s.error).sum();
    Ok(QuadResult {
        value,
        error,
        evaluations,
    })
}

/// Composite Simpson rule with `n` (rounded up to even) subintervals.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let n = (n.max(2) + 1) & !1;
    let h = (b - a) / n as f64;
    let mut sum = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(a + i as f64 * h);
    }
    sum * h / 3.0
}

/// Points per Chebyshev panel.
pub const PANEL_POINTS: usize = 25;

struct ChebyshevRule {
    /// Chebyshev-Lobatto nodes on [-1, 1] in increasing order.
    nodes: [f64; PANEL_POINTS],
    /// `cumulative[j][k]`: integral from -1 to `nodes[j]` of the k-th
    /// Lagrange basis polynomial.
    cumulative: [[f64; PANEL_POINTS]; PANEL_POINTS],
}

fn chebyshev_rule() -> &'static ChebyshevRule {
    static RULE: OnceLock<ChebyshevRule> = OnceLock::new();
    RULE.get_or_init(|| {
        let n = PANEL_POINTS - 1;
        let pi = std::f64::consts::PI;
        let mut nodes = [0.0; PANEL_POINTS];
        for (j, node) in nodes.iter_mut().enumerate() {
            *node = -(pi * j as f64 / n as f64).cos();
        }
        // node j sits at angle theta_j = pi (n - j) / n in the descending
        // convention x = cos(theta)
        let angle = |j: usize| pi * (n - j) as f64 / n as f64;
        let mut cumulative = [[0.0; PANEL_POINTS]; PANEL_POINTS];
        for k in 0..PANEL_POINTS {
            // Chebyshev coefficients of the Lagrange basis polynomial l_k
            let mut c = vec![0.0; n + 2];
            for (m, cm) in c.iter_mut().enumerate().take(n + 1) {
                let mut w = 2.0 / n as f64 * (m as f64 * angle(k)).cos();
                if k == 0 || k == n {
                    w *= 0.5;
                }
                if m == 0 || m == n {
                    w *= 0.5;
                }
                *cm = w;
            }
            // antiderivative coefficients
            let mut big = vec![0.0; n + 2];
            for m in 1..=n + 1 {
                let prev = c[m - 1] * if m == 1 { 2.0 } else { 1.0 };
                let next = if m + 1 <= n { c[m + 1] } else { 0.0 };
                big[m] = (prev - next) / (2.0 * m as f64);
            }
            // fix the constant so the antiderivative vanishes at -1
            let at_minus_one: f64 = big
                .iter()
                .enumerate()
                .skip(1)
                .map(|(m, v)| if m % 2 == 0 { *v } else { -*v })
                .sum();
            big[0] = -at_minus_one;
            for j in 0..PANEL_POINTS {
                let th = angle(j);
                cumulative[j][k] = big
                    .iter()
                    .enumerate()
                    .map(|(m, v)| v * (m as f64 * th).cos())
                    .sum();
            }
        }
        ChebyshevRule { nodes, cumulative }
    })
}

/// Chebyshev-Lobatto nodes mapped onto `[a, b]`, increasing.
pub fn panel_nodes(a: f64, b: f64) -> [f64; PANEL_POINTS] {
    let rule = chebyshev_rule();
    let mut out = [0.0; PANEL_POINTS];
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    for (o, t) in out.iter_mut().zip(rule.nodes.iter()) {
        *o = mid + half * t;
    }
    out[0] = a;
    out[PANEL_POINTS - 1] = b;
    out
}

/// Given samples of `f` at [`panel_nodes`]`(a, b)`, returns the running
/// integrals `int_a^{y_j} f` at every node. Spectrally accurate for `f`
/// analytic on the panel.
pub fn panel_cumulative(a: f64, b: f64, values: &[f64; PANEL_POINTS]) -> [f64; PANEL_POINTS] {
    let rule = chebyshev_rule();
    let half = 0.5 * (b - a);
    let mut out = [0.0; PANEL_POINTS];
    for (j, o) in out.iter_mut().enumerate() {
        *o = half
            * rule.cumulative[j]
                .iter()
                .zip(values.iter())
                .map(|(w, v)| w * v)
                .sum::<f64>();
    }
    out[0] = 0.0;
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gk21_is_exact_for_polynomials() {
        let (v, _) = gk21(&|x: f64| x.powi(9) - 3.0 * x * x + 1.0, -1.0, 2.0);
        let exact = (2f64.powi(10) - 1.0) / 10.0 - (8.0 + 1.0) + 3.0;
        assert!((v - exact).abs() < 1e-12);
    }

    #[test]
    fn adaptive_handles_peaks() {
        let eps: f64 = 1e-3;
        let r = integrate(
            |y| (-(y * y) / (eps * eps)).exp(),
            0.0,
            0.1,
            &QuadConfig::default(),
        )
        .unwrap();
        let exact = eps * std::f64::consts::PI.sqrt() / 2.0 * libm::erf(0.1 / eps);
        assert!((r.value / exact - 1.0).abs() < 1e-10);
    }

    #[test]
    fn adaptive_reports_failure() {
        let cfg = QuadConfig {
            max_subdivisions: 3,
            ..QuadConfig::default()
        };
        let err = integrate(|x: f64| 1.0 / x.sqrt(), 0.0, 1.0, &cfg).unwrap_err();
        assert!(matches!(err, Error::Quadrature { .. }));
    }

    #[test]
    fn reversed_and_empty_intervals() {
        let cfg = QuadConfig::default();
        assert_eq!(integrate(|x| x, 1.0, 1.0, &cfg).unwrap().value, 0.0);
        let r = integrate(|x| x, 1.0, 0.0, &cfg).unwrap();
        assert!((r.value + 0.5).abs() < 1e-14);
    }

    #[test]
    fn simpson_matches_cubic_exactly() {
        let v = simpson(|x| x * x * x + x, 0.0, 2.0, 4);
        assert!((v - 6.0).abs() < 1e-13);
    }

    #[test]
    fn panel_cumulative_is_spectral() {
        let (a, b) = (0.3, 1.7);
        let nodes = panel_nodes(a, b);
        let values = nodes.map(|y| (2.0 * y).exp());
        let cum = panel_cumulative(a, b, &values);
        for (y, c) in nodes.iter().zip(cum.iter()) {
            let exact = ((2.0 * y).exp() - (2.0 * a).exp()) / 2.0;
            assert!(
                (c - exact).abs() < 1e-13 * (1.0 + exact.abs()),
                "{c} vs {exact}"
            );
        }
    }
}
