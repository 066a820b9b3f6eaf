//! Normal, Student-t and chi-square distribution functions.
//!
//! Everything rests on two special functions: the regularized incomplete
//! gamma function (power series below the transition point, Lentz continued
//! fraction above it) and the regularized incomplete beta function (Lentz
//! continued fraction with the usual symmetry swap). Quantiles are found by
//! Newton iteration on the CDF, falling back to bisection whenever a Newton
//! step leaves the current bracket.

use crate::error::{Error, Result};

/// Base iteration cap for the continued fractions and series.
const MAX_ITER: usize = 500;
const CONVERGENCE_TOL: f64 = 1e-14;
const TINY: f64 = 1e-300;
const SQRT_2PI: f64 = 2.506_628_274_631_000_7;

/// A probability strictly inside (0, 1).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct TailProbability(f64);

impl TailProbability {
    pub fn new(p: f64) -> Result<Self> {
        if p > 0.0 && p < 1.0 {
            Ok(Self(p))
        } else {
            Err(Error::domain(format!("probability {p} is not in (0, 1)")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// `1 - p`, exact when `p >= 0.5`.
    pub fn complement(self) -> Self {
        Self(1.0 - self.0)
    }
}

impl TryFrom<f64> for TailProbability {
    type Error = Error;

    fn try_from(p: f64) -> Result<Self> {
        Self::new(p)
    }
}

/// The iteration budget grows with the shape parameter: near the transition
/// point both the series and the continued fractions need O(sqrt(a)) terms.
fn iteration_cap(shape: f64) -> usize {
    MAX_ITER + (10.0 * shape.sqrt()) as usize
}

fn check_df(df: u64) -> Result<f64> {
    if df < 1 {
        return Err(Error::domain("degrees of freedom must be at least 1"));
    }
    Ok(df as f64)
}

/// Natural log of the gamma function for `x > 0` (Lanczos, g = 7).
#[allow(clippy::excessive_precision)]
pub fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_59,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // Reflection keeps the approximation in its accurate range.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Regularized lower incomplete gamma function `P(a, x)`.
pub fn gamma_p(a: f64, x: f64) -> Result<f64> {
    check_gamma_args(a, x)?;
    if x == 0.0 {
        return Ok(0.0);
    }
    if x < a + 1.0 {
        gamma_series(a, x)
    } else {
        Ok(1.0 - gamma_cont_frac(a, x)?)
    }
}

/// Regularized upper incomplete gamma function `Q(a, x) = 1 - P(a, x)`.
pub fn gamma_q(a: f64, x: f64) -> Result<f64> {
    check_gamma_args(a, x)?;
    if x == 0.0 {
        return Ok(1.0);
    }
    if x < a + 1.0 {
        Ok(1.0 - gamma_series(a, x)?)
    } else {
        gamma_cont_frac(a, x)
    }
}

fn check_gamma_args(a: f64, x: f64) -> Result<()> {
    if !(a > 0.0) || !(x >= 0.0) {
        return Err(Error::domain(format!(
            "incomplete gamma needs a > 0 and x >= 0 (a = {a}, x = {x})"
        )));
    }
    Ok(())
}

fn gamma_prefactor(a: f64, x: f64) -> f64 {
    (-x + a * x.ln() - ln_gamma(a)).exp()
}

fn gamma_series(a: f64, x: f64) -> Result<f64> {
    let mut denom = a;
    let mut term = 1.0 / a;
    let mut sum = term;
    for _ in 0..iteration_cap(a) {
        denom += 1.0;
        term *= x / denom;
        sum += term;
        if term.abs() < sum.abs() * CONVERGENCE_TOL {
            return Ok((sum * gamma_prefactor(a, x)).min(1.0));
        }
    }
    Err(Error::Internal(format!(
        "incomplete gamma series failed to converge (a = {a}, x = {x})"
    )))
}

fn gamma_cont_frac(a: f64, x: f64) -> Result<f64> {
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..=iteration_cap(a) {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < CONVERGENCE_TOL {
            return Ok((gamma_prefactor(a, x) * h).min(1.0));
        }
    }
    Err(Error::Internal(format!(
        "incomplete gamma continued fraction failed to converge (a = {a}, x = {x})"
    )))
}

/// Regularized incomplete beta function `I_x(a, b)`.
pub fn beta_reg(a: f64, b: f64, x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::domain(format!("incomplete beta needs x in [0, 1], got {x}")));
    }
    beta_reg_split(a, b, x, 1.0 - x)
}

/// `I_x(a, b)` with `y = 1 - x` supplied separately so callers can pass a
/// complement that was computed without cancellation.
fn beta_reg_split(a: f64, b: f64, x: f64, y: f64) -> Result<f64> {
    if !(a > 0.0) || !(b > 0.0) {
        return Err(Error::domain(format!(
            "incomplete beta needs a, b > 0 (a = {a}, b = {b})"
        )));
    }
    if x <= 0.0 {
        return Ok(0.0);
    }
    if y <= 0.0 {
        return Ok(1.0);
    }
    let ln_front = a * x.ln() + b * y.ln() - ln_beta(a, b);
    if x < (a + 1.0) / (a + b + 2.0) {
        Ok(ln_front.exp() * beta_cont_frac(a, b, x)? / a)
    } else {
        Ok(1.0 - ln_front.exp() * beta_cont_frac(b, a, y)? / b)
    }
}

fn beta_cont_frac(a: f64, b: f64, x: f64) -> Result<f64> {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=iteration_cap(a.max(b)) {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < CONVERGENCE_TOL {
            return Ok(h);
        }
    }
    Err(Error::Internal(format!(
        "incomplete beta continued fraction failed to converge (a = {a}, b = {b}, x = {x})"
    )))
}

/// Complementary error function.
pub fn erfc(z: f64) -> f64 {
    // Q(1/2, z^2) converges for every finite argument within the cap.
    let tail = |v: f64| gamma_q(0.5, v * v).expect("erfc: incomplete gamma with a = 1/2");
    if z.is_nan() {
        f64::NAN
    } else if z >= 0.0 {
        tail(z)
    } else {
        2.0 - tail(-z)
    }
}

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / SQRT_2PI
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    let z = x / std::f64::consts::SQRT_2;
    if x < 0.0 {
        0.5 * erfc(-z)
    } else {
        1.0 - 0.5 * erfc(z)
    }
}

/// Inverse of the standard normal CDF.
///
/// Acklam's rational approximation (relative error about 1e-9) followed by
/// one Newton step on the lower-tail CDF.
pub fn normal_quantile(p: TailProbability) -> f64 {
    let p = p.value();
    if p > 0.5 {
        return -lower_normal_quantile(1.0 - p);
    }
    lower_normal_quantile(p)
}

fn lower_normal_quantile(p: f64) -> f64 {
    if p == 0.5 {
        return 0.0;
    }
    let x = acklam(p);
    let err = normal_cdf(x) - p;
    x - err / normal_pdf(x)
}

fn acklam(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_671_010_434_34,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.024_25;

    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    }
}

pub fn t_pdf(x: f64, df: u64) -> Result<f64> {
    let nu = check_df(df)?;
    let ln_norm = ln_gamma(0.5 * (nu + 1.0)) - ln_gamma(0.5 * nu) - 0.5 * (nu * std::f64::consts::PI).ln();
    Ok((ln_norm - 0.5 * (nu + 1.0) * (x * x / nu).ln_1p()).exp())
}

/// `P(T <= x)` for Student's t with `df` degrees of freedom.
pub fn t_cdf(x: f64, df: u64) -> Result<f64> {
    let nu = check_df(df)?;
    if x.is_nan() {
        return Err(Error::domain("t_cdf of NaN"));
    }
    if x.is_infinite() {
        return Ok(if x > 0.0 { 1.0 } else { 0.0 });
    }
    let x2 = x * x;
    let denom = nu + x2;
    let tail = 0.5 * beta_reg_split(0.5 * nu, 0.5, nu / denom, x2 / denom)?;
    Ok(if x > 0.0 { 1.0 - tail } else { tail })
}

/// Inverse of [`t_cdf`].
pub fn t_quantile(p: TailProbability, df: u64) -> Result<f64> {
    check_df(df)?;
    let target = p.value();
    if target == 0.5 {
        return Ok(0.0);
    }
    let start = normal_quantile(p);
    solve_cdf(
        target,
        start,
        f64::NEG_INFINITY,
        f64::INFINITY,
        |x| t_cdf(x, df),
        |x| t_pdf(x, df),
    )
}

pub fn chisq_pdf(x: f64, df: u64) -> Result<f64> {
    let k = check_df(df)?;
    if x <= 0.0 {
        return Ok(if x == 0.0 && df == 2 { 0.5 } else if x == 0.0 && df == 1 { f64::INFINITY } else { 0.0 });
    }
    let half = 0.5 * k;
    Ok(((half - 1.0) * x.ln() - 0.5 * x - half * std::f64::consts::LN_2 - ln_gamma(half)).exp())
}

pub fn chisq_cdf(x: f64, df: u64) -> Result<f64> {
    let k = check_df(df)?;
    if x.is_nan() {
        return Err(Error::domain("chisq_cdf of NaN"));
    }
    if x <= 0.0 {
        return Ok(0.0);
    }
    if x.is_infinite() {
        return Ok(1.0);
    }
    gamma_p(0.5 * k, 0.5 * x)
}

/// Inverse of [`chisq_cdf`].
pub fn chisq_quantile(p: TailProbability, df: u64) -> Result<f64> {
    let k = check_df(df)?;
    // Wilson-Hilferty starting point.
    let z = normal_quantile(p);
    let c = 2.0 / (9.0 * k);
    let wh = k * (1.0 - c + z * c.sqrt()).powi(3);
    let start = if wh > 0.0 { wh } else { k * 1e-3 };
    solve_cdf(
        p.value(),
        start,
        0.0,
        f64::INFINITY,
        |x| chisq_cdf(x, df),
        |x| chisq_pdf(x, df),
    )
}

/// Safeguarded Newton iteration for `cdf(x) = target` on `(lo, hi)`.
fn solve_cdf(
    target: f64,
    start: f64,
    mut lo: f64,
    mut hi: f64,
    cdf: impl Fn(f64) -> Result<f64>,
    pdf: impl Fn(f64) -> Result<f64>,
) -> Result<f64> {
    let mut x = start;
    for _ in 0..400 {
        let diff = cdf(x)? - target;
        if diff == 0.0 {
            return Ok(x);
        }
        if diff < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let mut next = x - diff / pdf(x)?;
        if !(next.is_finite() && next > lo && next < hi) {
            next = match (lo.is_finite(), hi.is_finite()) {
                (true, true) => 0.5 * (lo + hi),
                (true, false) => lo + lo.abs().max(1.0),
                (false, true) => hi - hi.abs().max(1.0),
                (false, false) => unreachable!("bracket is tightened on every step"),
            };
        }
        let scale = x.abs().max(next.abs());
        if (next - x).abs() <= 4.0 * f64::EPSILON * scale || scale < TINY {
            return Ok(next);
        }
        if hi.is_finite() && lo.is_finite() && hi - lo <= 4.0 * f64::EPSILON * scale {
            return Ok(0.5 * (lo + hi));
        }
        x = next;
    }
    Err(Error::Internal(format!(
        "quantile search failed to converge for p = {target}"
    )))
}
