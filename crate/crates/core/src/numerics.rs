//! Special functions and adaptive quadrature shared by the analytic rate
//! evaluators.
//!
//! Every rate expression reduces to incomplete Gamma functions of order two,
//! the kernel `G(x) = exp(x) Ei(-x)`, or a smooth integral over `[0, ∞)` with
//! an exponential tail. Integrals over the half line are mapped onto `[0, 1)`
//! with `x = s·t/(1−t)` and handled by a globally adaptive 7/15-point
//! Gauss–Kronrod rule.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

/// Euler–Mascheroni constant.
const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Tolerances and work limit for adaptive quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_subdivisions: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            abs_tol: 1e-10,
            rel_tol: 1e-8,
            max_subdivisions: 2000,
        }
    }
}

impl QuadratureSpec {
    pub fn new(abs_tol: f64, rel_tol: f64, max_subdivisions: usize) -> Result<Self> {
        if !(abs_tol > 0.0 && abs_tol.is_finite()) {
            return Err(Error::domain(format!("abs_tol must be positive, got {abs_tol}")));
        }
        if !(rel_tol > 0.0 && rel_tol.is_finite()) {
            return Err(Error::domain(format!("rel_tol must be positive, got {rel_tol}")));
        }
        if max_subdivisions == 0 {
            return Err(Error::domain("max_subdivisions must be at least 1"));
        }
        Ok(Self {
            abs_tol,
            rel_tol,
            max_subdivisions,
        })
    }

    fn tolerance(&self, estimate: f64) -> f64 {
        self.abs_tol.max(self.rel_tol * estimate.abs())
    }
}

fn check_nonnegative(x: f64, name: &str) -> Result<()> {
    if x >= 0.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} requires x >= 0, got {x}")))
    }
}

/// Lower incomplete Gamma function of order two, `γ(2,x) = 1 − (x+1)e^{−x}`.
///
/// This is also the CDF of a unit-scale Gamma(2) variable.
pub fn lower_gamma2(x: f64) -> Result<f64> {
    check_nonnegative(x, "lower_gamma2")?;
    Ok(gamma2_cdf(x))
}

/// Upper incomplete Gamma function of order two, `Γ(2,x) = (x+1)e^{−x}`.
pub fn upper_gamma2(x: f64) -> Result<f64> {
    check_nonnegative(x, "upper_gamma2")?;
    Ok(gamma2_sf(x))
}

/// Unchecked `γ(2,x)` for hot loops; `x` must be nonnegative.
#[inline]
pub(crate) fn gamma2_cdf(x: f64) -> f64 {
    if x < 0.5 {
        // γ(2,x) = Σ_{n≥2} (−1)^n (n−1) x^n / n!
        let mut term = x * x / 2.0; // x^n / n! at n = 2
        let mut sum = term;
        let mut n = 2.0;
        loop {
            n += 1.0;
            term *= -x / n;
            let add = term * (n - 1.0);
            sum += add;
            if add.abs() <= 1e-17 * sum {
                break;
            }
        }
        sum
    } else {
        1.0 - gamma2_sf(x)
    }
}

/// Unchecked `Γ(2,x)`; `x` must be nonnegative.
#[inline]
pub(crate) fn gamma2_sf(x: f64) -> f64 {
    if x.is_infinite() {
        0.0
    } else {
        (x + 1.0) * (-x).exp()
    }
}

/// `G(x) = exp(x)·Ei(−x) = −exp(x)·E₁(x)` for `x > 0`.
///
/// Power series for `x ≤ 1`, Lentz continued fraction on `(1, 30]`, and the
/// asymptotic series above 30 where the product `e^x·E₁(x)` would otherwise
/// be formed from an overflowing and an underflowing factor.
pub fn g_function(x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::domain(format!("g_function requires x > 0, got {x}")));
    }
    Ok(-scaled_e1(x))
}

/// `e^x·E₁(x)` for `x > 0`.
fn scaled_e1(x: f64) -> f64 {
    if x.is_infinite() {
        return 0.0;
    }
    if x <= 1.0 {
        // E₁(x) = −γ − ln x − Σ_{n≥1} (−x)^n / (n·n!)
        let mut term = 1.0;
        let mut sum = 0.0;
        for n in 1..60 {
            let n = n as f64;
            term *= -x / n;
            let add = term / n;
            sum += add;
            if add.abs() < 1e-18 * sum.abs() {
                break;
            }
        }
        (-EULER_GAMMA - x.ln() - sum) * x.exp()
    } else if x <= 30.0 {
        // e^x E₁(x) = 1/(x+1− 1²/(x+3− 2²/(x+5− …)))
        const TINY: f64 = 1e-300;
        let mut b = x + 1.0;
        let mut c = 1.0 / TINY;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..1000 {
            let an = -((i * i) as f64);
            b += 2.0;
            d = 1.0 / (an * d + b);
            c = b + an / c;
            let del = c * d;
            h *= del;
            if (del - 1.0).abs() < 1e-16 {
                break;
            }
        }
        h
    } else {
        // e^x E₁(x) ~ (1/x) Σ (−1)^n n!/x^n, truncated at the smallest term.
        let mut term = 1.0;
        let mut sum = 1.0;
        for n in 1..200 {
            let next = term * -(n as f64) / x;
            if next.abs() >= term.abs() {
                break;
            }
            term = next;
            sum += term;
            if term.abs() < 1e-17 * sum.abs() {
                break;
            }
        }
        sum / x
    }
}

// 7-point Gauss / 15-point Kronrod abscissae and weights.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error.total_cmp(&other.error) == Ordering::Equal
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

fn checked<F: Fn(f64) -> f64>(f: &F, x: f64) -> Result<f64> {
    let v = f(x);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite { x, value: v })
    }
}

fn kronrod15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Result<Segment> {
    let centre = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = checked(f, centre)?;
    let mut res_g = fc * WG[3];
    let mut res_k = fc * WGK[7];
    let mut res_abs = res_k.abs();
    let mut fv1 = [0.0; 7];
    let mut fv2 = [0.0; 7];
    for j in 0..7 {
        let absc = half * XGK[j];
        let f1 = checked(f, centre - absc)?;
        let f2 = checked(f, centre + absc)?;
        fv1[j] = f1;
        fv2[j] = f2;
        res_k += WGK[j] * (f1 + f2);
        res_abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            res_g += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * res_k;
    let mut res_asc = WGK[7] * (fc - mean).abs();
    for j in 0..7 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let value = res_k * half;
    res_abs *= half.abs();
    res_asc *= half.abs();
    let mut error = ((res_k - res_g) * half).abs();
    if res_asc != 0.0 && error != 0.0 {
        error = res_asc * (200.0 * error / res_asc).powf(1.5).min(1.0);
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        error = error.max(50.0 * f64::EPSILON * res_abs);
    }
    Ok(Segment { a, b, value, error })
}

/// Globally adaptive Gauss–Kronrod integration over a finite interval.
pub fn integrate_interval<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, spec: &QuadratureSpec) -> Result<f64> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::domain("integrate_interval requires finite limits"));
    }
    if a == b {
        return Ok(0.0);
    }
    let first = kronrod15(&f, a, b)?;
    let mut total = first.value;
    let mut total_err = first.error;
    let mut heap = BinaryHeap::with_capacity(2 * spec.max_subdivisions + 1);
    heap.push(first);
    let mut subdivisions = 0;
    while total_err > spec.tolerance(total) {
        if subdivisions >= spec.max_subdivisions {
            return Err(Error::NonConvergence {
                estimate: total,
                error: total_err,
                tolerance: spec.tolerance(total),
                subdivisions,
            });
        }
        let worst = heap.pop().expect("heap holds at least one segment");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            return Err(Error::NonConvergence {
                estimate: total,
                error: total_err,
                tolerance: spec.tolerance(total),
                subdivisions,
            });
        }
        let left = kronrod15(&f, worst.a, mid)?;
        let right = kronrod15(&f, mid, worst.b)?;
        total += left.value + right.value - worst.value;
        total_err += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
        subdivisions += 1;
        if subdivisions % 64 == 0 {
            // re-sum to keep the running totals free of drift
            total = heap.iter().map(|s| s.value).sum();
            total_err = heap.iter().map(|s| s.error).sum();
        }
    }
    Ok(heap.iter().map(|s| s.value).sum())
}

/// `∫₀^∞ f(x) dx` via the map `x = t/(1−t)`.
pub fn integrate_semi_infinite<F: Fn(f64) -> f64>(f: F, spec: &QuadratureSpec) -> Result<f64> {
    integrate_semi_infinite_scaled(f, 1.0, spec)
}

/// `∫₀^∞ f(x) dx` via `x = scale·t/(1−t)`; `scale` should sit near where the
/// integrand carries its mass.
pub fn integrate_semi_infinite_scaled<F: Fn(f64) -> f64>(f: F, scale: f64, spec: &QuadratureSpec) -> Result<f64> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::domain(format!("quadrature scale must be positive, got {scale}")));
    }
    let mapped = |t: f64| {
        let u = 1.0 - t;
        let x = scale * t / u;
        let fx = f(x);
        if fx == 0.0 {
            0.0
        } else {
            fx * scale / (u * u)
        }
    };
    integrate_interval(mapped, 0.0, 1.0, spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma2_special_points() {
        assert_eq!(lower_gamma2(0.0).unwrap(), 0.0);
        assert_eq!(upper_gamma2(0.0).unwrap(), 1.0);
        assert_eq!(lower_gamma2(f64::INFINITY).unwrap(), 1.0);
        let e = std::f64::consts::E;
        assert!((lower_gamma2(1.0).unwrap() - (1.0 - 2.0 / e)).abs() < 1e-15);
        assert!((upper_gamma2(1.0).unwrap() - 2.0 / e).abs() < 1e-15);
        assert!((lower_gamma2(1.0).unwrap() - 0.264_241_117_657_115_4).abs() < 1e-15);
    }

    #[test]
    fn gamma2_series_branch_matches_closed_form_at_seam() {
        let x = 0.5 - 1e-12;
        let series = gamma2_cdf(x);
        let closed = 1.0 - (x + 1.0) * (-x).exp();
        assert!((series - closed).abs() < 1e-15);
        // small x keeps relative accuracy: γ(2,x) ≈ x²/2 − x³/3
        let x = 1e-6;
        let approx = x * x / 2.0 - x * x * x / 3.0;
        assert!(((gamma2_cdf(x) - approx) / approx).abs() < 1e-12);
    }

    #[test]
    fn negative_arguments_are_rejected() {
        assert!(matches!(lower_gamma2(-1e-9), Err(Error::Domain(_))));
        assert!(matches!(upper_gamma2(-1.0), Err(Error::Domain(_))));
        assert!(matches!(g_function(0.0), Err(Error::Domain(_))));
        assert!(matches!(g_function(-2.0), Err(Error::Domain(_))));
        assert!(matches!(g_function(f64::NAN), Err(Error::Domain(_))));
    }

    #[test]
    fn g_function_reference_values() {
        // 60-digit mpmath values of −e^x E₁(x)
        let cases = [
            (1.0, -0.596_347_362_323_194_074_341_078_499_369),
            (0.5, -0.922_910_632_483_730_468_832_849_375_828),
            (2.0, -0.361_328_616_888_222_584_697_161_657_678),
            (50.0, -0.019_615_109_930_114_870_365_307_609_799),
            (1e-3, -6.337_874_070_325_487_956_325_860_616_796),
        ];
        for (x, want) in cases {
            let got = g_function(x).unwrap();
            assert!(((got - want) / want).abs() < 1e-13, "x={x}: {got} vs {want}");
        }
    }

    #[test]
    fn g_function_asymptotic_bounds() {
        let x = 50.0;
        let g = g_function(x).unwrap();
        assert!(g > -1.0 / x && g < -1.0 / x + 2.0 / (x * x));
        assert!(g_function(1e6).unwrap() < 0.0);
        assert!(g_function(1e300).unwrap() > -1e-299);
    }

    #[test]
    fn regime_seams_are_continuous() {
        for seam in [1.0f64, 30.0] {
            let lo = g_function(seam * (1.0 - 1e-12)).unwrap();
            let hi = g_function(seam * (1.0 + 1e-12)).unwrap();
            assert!(((lo - hi) / lo).abs() < 1e-11, "seam {seam}: {lo} vs {hi}");
        }
    }

    #[test]
    fn semi_infinite_normalisations() {
        let spec = QuadratureSpec::default();
        let v = integrate_semi_infinite(|x| x * (-x).exp(), &spec).unwrap();
        assert!((v - 1.0).abs() < 1e-10);
        let v = integrate_semi_infinite(|x| (-x).exp(), &spec).unwrap();
        assert!((v - 1.0).abs() < 1e-10);
        let v = integrate_semi_infinite(|x| x.ln_1p() * x * (-x).exp(), &spec).unwrap();
        assert!((v - 1.0).abs() < 1e-9, "{v}");
    }

    #[test]
    fn scaled_map_handles_wide_integrands() {
        let spec = QuadratureSpec::default();
        let c = 1e-3;
        let v = integrate_semi_infinite_scaled(|x| c * c * x * (-c * x).exp(), 1.0 / c, &spec).unwrap();
        assert!((v - 1.0).abs() < 1e-9);
    }

    #[test]
    fn non_finite_integrand_is_reported() {
        let spec = QuadratureSpec::default();
        let err = integrate_semi_infinite(|x| if x > 1.0 { f64::NAN } else { 1.0 }, &spec);
        assert!(matches!(err, Err(Error::NonFinite { .. })));
    }

    #[test]
    fn non_convergence_is_reported() {
        let spec = QuadratureSpec::new(1e-14, 1e-14, 3).unwrap();
        let err = integrate_interval(
            |x: f64| x.abs().sqrt().sin() / x.abs().sqrt().max(1e-300),
            0.0,
            1.0,
            &spec,
        );
        assert!(matches!(err, Err(Error::NonConvergence { .. })));
    }

    #[test]
    fn quadrature_spec_validation() {
        assert!(QuadratureSpec::new(0.0, 1e-8, 10).is_err());
        assert!(QuadratureSpec::new(1e-10, -1.0, 10).is_err());
        assert!(QuadratureSpec::new(1e-10, 1e-8, 0).is_err());
        assert!(QuadratureSpec::new(1e-10, 1e-8, 1).is_ok());
    }
}
