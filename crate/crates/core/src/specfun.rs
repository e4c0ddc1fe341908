//! Log-gamma, the Mittag-Leffler function and generalized Fox-Wright series.
//!
//! ```text
//! E_nu(x) = sum_j x^j / Gamma(nu j + 1)
//!
//! pPsiq[(a_j, A_j); (b_l, B_l); z] = sum_n z^n / n! * prod Gamma(a_j + A_j n) / prod Gamma(b_l + B_l n)
//! ```
//!
//! Series terms are formed in log space and summed with Neumaier compensation.
//! A reciprocal gamma at a pole is taken to be exactly zero.

use std::f64::consts::PI;

use crate::error::{domain, invalid, Error, Result};

/// Controls adaptive truncation of infinite series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationPolicy {
    abs_tol: f64,
    max_terms: usize,
}

impl TruncationPolicy {
    pub fn new(abs_tol: f64, max_terms: usize) -> Result<Self> {
        if !(abs_tol.is_finite() && abs_tol > 0.0) {
            return Err(invalid(
                "abs_tol",
                format!("must be positive, got {abs_tol}"),
            ));
        }
        if max_terms < 8 {
            return Err(invalid(
                "max_terms",
                format!("must be at least 8, got {max_terms}"),
            ));
        }
        Ok(TruncationPolicy { abs_tol, max_terms })
    }

    pub fn abs_tol(&self) -> f64 {
        self.abs_tol
    }

    pub fn max_terms(&self) -> usize {
        self.max_terms
    }
}

impl Default for TruncationPolicy {
    fn default() -> Self {
        TruncationPolicy {
            abs_tol: 1e-15,
            max_terms: 400,
        }
    }
}

/// Result of a truncated series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesValue {
    pub value: f64,
    /// Ratio-test bound on the neglected tail.
    pub tail_estimate: f64,
    /// Sum of the absolute values of the retained terms.
    pub abs_sum: f64,
    /// Bound on the rounding error of the terms and of their summation.
    pub rounding: f64,
    pub terms: usize,
}

impl SeriesValue {
    pub fn rounding_bound(&self) -> f64 {
        self.rounding
    }
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Ratio-test stopping rule shared by the series in this crate.
///
/// Tracks the last few ratios of consecutive nonzero term magnitudes and
/// bounds the tail by a geometric series with the largest recent ratio.
#[derive(Debug, Clone)]
pub(crate) struct TailTracker {
    prev: f64,
    ratios: [f64; 3],
    filled: usize,
}

impl TailTracker {
    pub(crate) fn new() -> Self {
        TailTracker {
            prev: 0.0,
            ratios: [f64::INFINITY; 3],
            filled: 0,
        }
    }

    /// Feed the magnitude of the next term and return the current tail bound.
    pub(crate) fn push(&mut self, mag: f64) -> f64 {
        if mag == 0.0 {
            // a vanishing term carries no ratio information
            self.prev = 0.0;
            self.filled = 0;
            return f64::INFINITY;
        }
        if self.prev > 0.0 {
            self.ratios.rotate_right(1);
            self.ratios[0] = mag / self.prev;
            self.filled = (self.filled + 1).min(3);
        }
        self.prev = mag;
        if self.filled < 3 {
            return f64::INFINITY;
        }
        let r = self.ratios.iter().cloned().fold(0.0, f64::max);
        if r < 1.0 {
            mag * r / (1.0 - r)
        } else {
            f64::INFINITY
        }
    }
}

/// `ln|Gamma(x)|` and the sign of `Gamma(x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogGamma {
    pub ln_abs: f64,
    pub sign: f64,
}

fn is_pole(x: f64, scale: f64) -> bool {
    if x > 0.5 {
        return false;
    }
    let r = x.round();
    r <= 0.0 && (x - r).abs() <= 16.0 * f64::EPSILON * scale.max(1.0)
}

/// Natural log of `|Gamma(x)|` with the sign of `Gamma(x)`.
pub fn log_gamma(x: f64) -> Result<LogGamma> {
    if x.is_nan() {
        return Err(domain("log_gamma", "argument is NaN"));
    }
    if x <= 0.0 && x == x.floor() {
        return Err(Error::Pole(x));
    }
    if x < 0.5 {
        // reflection: Gamma(x) = pi / (sin(pi x) Gamma(1 - x))
        let s = sin_pi(x);
        return Ok(LogGamma {
            ln_abs: std::f64::consts::PI.ln() - s.abs().ln() - libm::lgamma(1.0 - x),
            sign: s.signum(),
        });
    }
    Ok(LogGamma {
        ln_abs: libm::lgamma(x),
        sign: 1.0,
    })
}

/// `sin(pi x)` with the argument reduced exactly.
fn sin_pi(x: f64) -> f64 {
    let n = x.round();
    let r = x - n;
    let s = (std::f64::consts::PI * r).sin();
    if n.rem_euclid(2.0) == 0.0 {
        s
    } else {
        -s
    }
}

/// `1/Gamma(x)` in log form; `None` at a pole (where the reciprocal is zero).
///
/// `scale` is the magnitude of the operands that produced `x` and sets the
/// distance within which `x` is treated as a non-positive integer.
fn log_rgamma(x: f64, scale: f64) -> Option<LogGamma> {
    if is_pole(x, scale) {
        return None;
    }
    log_gamma(x).ok().map(|g| LogGamma {
        ln_abs: -g.ln_abs,
        sign: g.sign,
    })
}

/// `1/Gamma(x)`, exactly zero at the poles.
pub fn rgamma(x: f64) -> f64 {
    match log_rgamma(x, x.abs()) {
        None => 0.0,
        Some(g) => g.sign * g.ln_abs.exp(),
    }
}

/// Parameters `(a_j, A_j)` and `(b_l, B_l)` of a Fox-Wright function.
#[derive(Debug, Clone, PartialEq)]
pub struct FoxWrightSpec {
    upper: Vec<(f64, f64)>,
    lower: Vec<(f64, f64)>,
}

impl FoxWrightSpec {
    pub fn new(upper: Vec<(f64, f64)>, lower: Vec<(f64, f64)>) -> Result<Self> {
        for &(a, b) in upper.iter().chain(lower.iter()) {
            if !(a.is_finite() && b.is_finite()) {
                return Err(invalid("fox_wright parameters", "must be finite"));
            }
        }
        Ok(FoxWrightSpec { upper, lower })
    }

    pub fn upper(&self) -> &[(f64, f64)] {
        &self.upper
    }

    pub fn lower(&self) -> &[(f64, f64)] {
        &self.lower
    }
}

/// Sum the Fox-Wright series at `z`.
pub fn fox_wright(spec: &FoxWrightSpec, z: f64, pol: &TruncationPolicy) -> Result<SeriesValue> {
    let tol = pol.abs_tol;
    fox_wright_core(spec, z, 0.0, pol.max_terms, |bound, _| bound <= tol)
}

/// The Fox-Wright series divided by `exp(ln_offset)`, stopped once the tail
/// bound falls below `rel_tol` times the accumulated magnitude.
pub(crate) fn fox_wright_scaled(
    spec: &FoxWrightSpec,
    z: f64,
    ln_offset: f64,
    rel_tol: f64,
    max_terms: usize,
) -> Result<SeriesValue> {
    fox_wright_core(spec, z, ln_offset, max_terms, |bound, abs_sum| {
        bound <= rel_tol * abs_sum
    })
}

fn fox_wright_core(
    spec: &FoxWrightSpec,
    z: f64,
    ln_offset: f64,
    max_terms: usize,
    done: impl Fn(f64, f64) -> bool,
) -> Result<SeriesValue> {
    if !z.is_finite() {
        return Err(domain("fox_wright", format!("z must be finite, got {z}")));
    }
    let ln_z = z.abs().ln();
    let mut sum = CompensatedSum::default();
    let mut abs_sum = 0.0;
    let mut rounding = 0.0;
    let mut tail = TailTracker::new();
    let mut bound = f64::INFINITY;
    for n in 0..max_terms {
        let (term, ln_mag) = fox_wright_term(spec, z, ln_z, ln_offset, n as f64)?;
        // exp() turns an absolute error in the logarithm into a relative one
        let term_err = f64::EPSILON * (4.0 + ln_mag) * term.abs();
        if z == 0.0 {
            return Ok(SeriesValue {
                value: term,
                tail_estimate: 0.0,
                abs_sum: term.abs(),
                rounding: term_err,
                terms: 1,
            });
        }
        sum.add(term);
        abs_sum += term.abs();
        rounding += term_err;
        bound = tail.push(term.abs());
        if done(bound, abs_sum) {
            return Ok(SeriesValue {
                value: sum.value(),
                tail_estimate: bound,
                abs_sum,
                rounding: rounding + 2.0 * f64::EPSILON * abs_sum,
                terms: n + 1,
            });
        }
    }
    Err(Error::NonConvergence {
        series: "fox_wright",
        terms: max_terms,
        tail: bound,
    })
}

/// One term of the series and the summed magnitude of the logarithms that
/// produced it.
fn fox_wright_term(
    spec: &FoxWrightSpec,
    z: f64,
    ln_z: f64,
    ln_offset: f64,
    n: f64,
) -> Result<(f64, f64)> {
    let power = if n == 0.0 { 0.0 } else { n * ln_z };
    let mut sign = if z < 0.0 && (n as u64) % 2 == 1 {
        -1.0
    } else {
        1.0
    };
    let lf = libm::lgamma(n + 1.0);
    let mut ln = power - ln_offset - lf;
    let mut mag = power.abs() + ln_offset.abs() + lf;
    for &(a, al) in &spec.upper {
        let x = a + al * n;
        if is_pole(x, a.abs() + (al * n).abs()) {
            return Err(domain(
                "fox_wright",
                format!("upper gamma argument {x} is a pole at n = {n}"),
            ));
        }
        let g = log_gamma(x)?;
        ln += g.ln_abs;
        mag += g.ln_abs.abs();
        sign *= g.sign;
    }
    for &(b, be) in &spec.lower {
        match log_rgamma(b + be * n, b.abs() + (be * n).abs()) {
            None => return Ok((0.0, 0.0)),
            Some(g) => {
                ln += g.ln_abs;
                mag += g.ln_abs.abs();
                sign *= g.sign;
            }
        }
    }
    let t = sign * ln.exp();
    if t.is_finite() {
        Ok((t, mag))
    } else {
        Err(domain("fox_wright", format!("term {n} is not finite")))
    }
}

/// Beyond this value of `x^(1/nu)` the positive-argument asymptotic form is used.
const ML_ASYMPTOTIC: f64 = 30.0;

/// The Mittag-Leffler function `E_nu(x)` for `0 < nu <= 1`.
///
/// Small arguments use the power series. For `x^(1/nu) > 30` the expansion
///
/// ```text
/// E_nu(x) = exp(x^(1/nu)) / nu - sum_{k>=1} x^-k / Gamma(1 - nu k)
/// ```
///
/// is used. Elsewhere the value comes from the integral representation
///
/// ```text
/// E_nu(-y) = sin(nu pi)/(nu pi) * int_0^inf exp(-v^(1/nu)) y / (v^2 + 2 v y cos(nu pi) + y^2) dv
/// E_nu(y)  = exp(y^(1/nu)) / nu - sin(nu pi)/(nu pi) * int_0^inf exp(-v^(1/nu)) y / (v^2 - 2 v y cos(nu pi) + y^2) dv
/// ```
pub fn mittag_leffler(nu: f64, x: f64, pol: &TruncationPolicy) -> Result<f64> {
    if !(nu > 0.0 && nu <= 1.0) {
        return Err(invalid("nu", format!("must lie in (0, 1], got {nu}")));
    }
    if x.is_nan() {
        return Err(domain("mittag_leffler", "argument is NaN"));
    }
    if x == 0.0 {
        return Ok(1.0);
    }
    if nu == 1.0 {
        return Ok(x.exp());
    }
    if x == f64::NEG_INFINITY {
        return Ok(0.0);
    }
    let y = x.abs().powf(1.0 / nu);
    if x > 0.0 && y > ML_ASYMPTOTIC {
        return Ok(ml_asymptotic(nu, x, y));
    }
    if x.abs() <= 1.0 {
        return ml_series(nu, x, pol);
    }
    ml_integral(nu, x, pol.abs_tol)
}

fn ml_series(nu: f64, x: f64, pol: &TruncationPolicy) -> Result<f64> {
    let ln_x = x.abs().ln();
    let mut sum = CompensatedSum::default();
    let mut tail = TailTracker::new();
    let mut bound = f64::INFINITY;
    for j in 0..pol.max_terms {
        let jf = j as f64;
        let mag = (jf * ln_x - libm::lgamma(nu * jf + 1.0)).exp();
        let term = if x < 0.0 && j % 2 == 1 { -mag } else { mag };
        sum.add(term);
        bound = tail.push(mag);
        if bound <= pol.abs_tol {
            return Ok(sum.value());
        }
    }
    Err(Error::NonConvergence {
        series: "mittag_leffler",
        terms: pol.max_terms,
        tail: bound,
    })
}

fn ml_asymptotic(nu: f64, x: f64, y: f64) -> f64 {
    let mut corr = 0.0;
    let mut p = 1.0;
    for k in 1..=12 {
        p /= x;
        corr += p * rgamma(1.0 - nu * k as f64);
    }
    y.exp() / nu - corr
}

fn ml_integral(nu: f64, x: f64, abs_tol: f64) -> Result<f64> {
    let y = x.abs();
    let (s, c) = (nu * PI).sin_cos();
    // sign of the cross term in the denominator
    let cross = if x < 0.0 { c } else { -c };
    let inv_nu = 1.0 / nu;
    let f = |v: f64| (-v.powf(inv_nu)).exp() * y / (v * v + 2.0 * v * y * cross + y * y);
    let upper = 40f64.powf(nu);

    let mut cuts = vec![0.0, upper];
    let peak = -cross * y;
    if peak > 0.0 {
        let w = y * s;
        for p in [peak - w, peak, peak + w] {
            if p > 0.0 && p < upper {
                cuts.push(p);
            }
        }
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();

    let tol = (abs_tol * 1e-2).max(1e-17);
    let mut total = CompensatedSum::default();
    let mut err = 0.0;
    for w in cuts.windows(2) {
        let out = quadrature::double_exponential::integrate(f, w[0], w[1], tol);
        total.add(out.integral);
        err += out.error_estimate;
    }
    let integral = s / (nu * PI) * total.value();
    let err = s / (nu * PI) * err;
    if !(integral.is_finite()) || err > 1e-9 * integral.abs().max(1e-3) {
        return Err(Error::NonConvergence {
            series: "mittag_leffler integral",
            terms: 0,
            tail: err,
        });
    }
    if x < 0.0 {
        Ok(integral)
    } else {
        Ok(y.powf(inv_nu).exp() / nu - integral)
    }
}
