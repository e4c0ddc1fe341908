//! Exact state probabilities `p_{k,n}(t) = P(X(t) = n | X(0) = k)`.
//!
//! Write `k = 2r + (k mod 2)`, `n = 2s + (n mod 2)`, `d = s - r` and
//!
//! ```text
//! R = a1 b1 / (a2 b2),   c = (b1 + b2 - a1 - a2) / 2,   D = a1 + a2 - b1 - b2.
//! ```
//!
//! For the plain chain and an even start and target,
//!
//! ```text
//! p_{2r,2s}(t) = e^{-sigma t/2} sum_{n >= |d|} R^d theta^n_{r,s}
//!                [ (ct)^{2n} / (2n)! + (ct)^{2n+1} / (2n+1)! ]
//! ```
//!
//! with `theta` from [`theta`]. The other parity cases and the time-changed
//! chains follow the same pattern: a weight sequence `R^d theta^n c^{2n}`
//! multiplied by a clock-dependent kernel. When `a1 + a2 = b1 + b2` the
//! weights become `R^d eta^n` (see [`eta`]) and the powers of `c` drop out.
//!
//! The kernels are
//!
//! - identity clock: powers of `t` against `e^{-sigma t/2}`;
//! - inverse stable clock: four 2Psi2 Fox-Wright functions at
//!   `(t^nu sigma / 2)^2`;
//! - tempered stable clock: two 1Psi1 functions at `-t (sigma/2 + mu)^nu`.

use rayon::prelude::*;
use serde::Serialize;

use crate::clock::{ClockDensity, ClockRule};
use crate::error::{invalid, Error, Result};
use crate::model::{Parity, RateQuad};
use crate::pgf::TimeChange;
use crate::specfun::{
    fox_wright_scaled, CompensatedSum, FoxWrightSpec, TailTracker, TruncationPolicy,
};

/// Relative distance from `a1 + a2 = b1 + b2` below which the balanced
/// (`eta`) formulas are used.
pub const BALANCE_THRESHOLD: f64 = 1e-9;

/// Probabilities whose rounding bound exceeds this are rejected.
pub const MAX_ROUNDING: f64 = 1e-6;

/// Negative values down to this size are treated as rounding noise.
const CLAMP_TOL: f64 = 1e-10;

/// Inner series stop once their tail falls below this fraction of the
/// accumulated magnitude.
const INNER_REL_TOL: f64 = 1e-17;

/// A single transition probability request.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PmfQuery {
    pub k: i64,
    pub n: i64,
    pub t: f64,
    pub q: RateQuad,
    pub clock: TimeChange,
    pub pol: TruncationPolicy,
}

/// A transition probability with its error accounting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PmfValue {
    pub p: f64,
    /// Ratio-test bound on the neglected part of the outer series.
    pub tail_estimate: f64,
    /// Bound on the rounding error accumulated while summing.
    pub rounding_bound: f64,
    /// Set when a slightly negative result was clamped to zero (or a result
    /// slightly above one to one).
    pub clamped: bool,
    pub terms: usize,
    pub method: Method,
}

/// How a probability was evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// The weighted series with closed-form or Fox-Wright kernels.
    Series,
    /// Quadrature of the plain-chain probability against the clock density.
    Mixture,
}

/// Evaluation strategy for the time-changed chains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Evaluation {
    /// The series, replaced by the mixture integral when its rounding bound
    /// exceeds [`SERIES_TRUST`].
    #[default]
    Auto,
    Series,
    Mixture,
}

/// Largest rounding bound accepted from the Fox-Wright series before
/// [`Evaluation::Auto`] switches to the mixture integral.
pub const SERIES_TRUST: f64 = 1e-11;

/// One row of a [`PmfTable`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PmfRow {
    pub n: i64,
    pub p: f64,
    pub tail_estimate: f64,
    pub rounding_bound: f64,
    pub clamped: bool,
}

/// Probabilities over the window `k - radius ..= k + radius`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PmfTable {
    pub k: i64,
    pub t: f64,
    pub rows: Vec<PmfRow>,
    /// Targets whose evaluation failed, with the error message.
    pub failures: Vec<(i64, String)>,
    /// `|1 - sum p|` plus the summed tail estimates.
    pub normalization_defect: f64,
}

impl PmfTable {
    pub fn is_complete(&self) -> bool {
        self.failures.is_empty()
    }
}

fn ln_factorial(k: usize) -> f64 {
    libm::lgamma(k as f64 + 1.0)
}

fn ln_choose(n: i64, k: i64) -> f64 {
    if k < 0 || k > n || n < 0 {
        return f64::NEG_INFINITY;
    }
    ln_factorial(n as usize) - ln_factorial(k as usize) - ln_factorial((n - k) as usize)
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn is_balanced(q: &RateQuad) -> bool {
    q.imbalance().abs() < BALANCE_THRESHOLD * q.sigma()
}

/// The weight sequence `n -> ln(R^d Theta^n_d)`, where `Theta = theta c^{2n}`
/// (or `eta` in the balanced regime).
///
/// ```text
/// Theta^n_d = sum_h C(n, h+d) (a2 b2)^d (a1 b2)^h (D^2/4)^{n-d-h} I(h, d)
/// I(h, d)   = sum_l C(h+d, l) C(h+d, h-l) rho^l,     rho = a2 b1 / (a1 b2)
/// ```
///
/// This scaled form stays finite as `D -> 0`, where only `h = n - d` survives
/// and `Theta` equals `eta`.
struct Weights {
    d: i64,
    ln_prefix: f64,
    ln_cross: f64,
    ln_quarter_d2: f64,
    ln_rho: f64,
    balanced: bool,
    inner: Vec<f64>,
}

impl Weights {
    fn new(q: &RateQuad, d: i64, balanced: bool) -> Self {
        let (a1, a2, b1, b2) = q.as_tuple();
        let ln_r = (a1 * b1).ln() - (a2 * b2).ln();
        let dd = q.imbalance();
        Weights {
            d,
            ln_prefix: d as f64 * (ln_r + (a2 * b2).ln()),
            ln_cross: (a1 * b2).ln(),
            ln_quarter_d2: if balanced {
                f64::NEG_INFINITY
            } else {
                (0.25 * dd * dd).ln()
            },
            ln_rho: (a2 * b1).ln() - (a1 * b2).ln(),
            balanced,
            inner: Vec::new(),
        }
    }

    fn ln_inner(&mut self, h: i64) -> f64 {
        let d = self.d;
        while self.inner.len() as i64 <= h {
            let hh = self.inner.len() as i64;
            let m = hh + d;
            let lo = 0.max(-d);
            let hi = hh.min(m);
            let terms: Vec<f64> = (lo..=hi)
                .map(|l| ln_choose(m, l) + ln_choose(m, hh - l) + l as f64 * self.ln_rho)
                .collect();
            self.inner.push(log_sum_exp(&terms));
        }
        self.inner[h as usize]
    }

    /// `ln(R^d Theta^n_d)`; `-inf` when `n < |d|`.
    fn ln_weight(&mut self, n: i64) -> f64 {
        let d = self.d;
        if n < d.abs() {
            return f64::NEG_INFINITY;
        }
        let top = n - d;
        if self.balanced {
            return self.ln_prefix + top as f64 * self.ln_cross + self.ln_inner(top);
        }
        let lo = 0.max(-d);
        let mut terms = Vec::with_capacity((top - lo + 1).max(0) as usize);
        for h in lo..=top {
            terms.push(
                ln_choose(n, h + d)
                    + h as f64 * self.ln_cross
                    + (n - d - h) as f64 * self.ln_quarter_d2
                    + self.ln_inner(h),
            );
        }
        self.ln_prefix + log_sum_exp(&terms)
    }
}

/// `theta^n_{r,s}` for rates with `a1 + a2 != b1 + b2`.
///
/// ```text
/// theta^n_{r,s} = (4 a2 b2 / D^2)^{s-r} sum_{h=0}^{n-s+r} C(n, h+s-r) (4 a1 b2 / D^2)^h
///                 sum_{l=0}^{h} C(h+s-r, l) C(h+s-r, h-l) (a2 b1 / (a1 b2))^l
/// ```
///
/// Binomial coefficients with arguments out of range are zero.
pub fn theta(n: u32, r: i64, s: i64, q: &RateQuad) -> Result<f64> {
    let dd = q.imbalance();
    if dd.abs() <= 1e-12 * q.sigma() {
        return Err(Error::Regime {
            function: "theta",
            required: "a1 + a2 != b1 + b2",
        });
    }
    let d = s - r;
    let mut w = Weights::new(q, d, false);
    let ln_r = (q.alpha1() * q.beta1()).ln() - (q.alpha2() * q.beta2()).ln();
    let ln = w.ln_weight(n as i64) - d as f64 * ln_r - n as f64 * w.ln_quarter_d2;
    Ok(ln.exp())
}

/// `eta^n_{r,s}` for rates with `a1 + a2 = b1 + b2`.
///
/// ```text
/// eta^n_{r,s} = (a2/a1)^{s-r} (a1 b2)^n sum_{l=0}^{n-s+r} C(n, l) C(n, s-r+l) (a2 b1 / (a1 b2))^l
/// ```
pub fn eta(n: u32, r: i64, s: i64, q: &RateQuad) -> Result<f64> {
    if q.imbalance().abs() > 1e-12 * q.sigma() {
        return Err(Error::Regime {
            function: "eta",
            required: "a1 + a2 = b1 + b2",
        });
    }
    let d = s - r;
    let n = n as i64;
    if n < d.abs() {
        return Ok(0.0);
    }
    let (a1, a2, b1, b2) = q.as_tuple();
    let ln_rho = (a2 * b1).ln() - (a1 * b2).ln();
    let terms: Vec<f64> = (0..=n - d)
        .map(|l| ln_choose(n, l) + ln_choose(n, d + l) + l as f64 * ln_rho)
        .collect();
    let ln = d as f64 * (a2 / a1).ln() + n as f64 * (a1 * b2).ln() + log_sum_exp(&terms);
    Ok(ln.exp())
}

/// A kernel value `exp(ln_scale) * value`, with `envelope >= |value|` used
/// for tail estimation and `err` bounding the absolute rounding error of
/// `value`.
#[derive(Debug, Clone, Copy)]
struct KernelTerm {
    ln_scale: f64,
    value: f64,
    envelope: f64,
    err: f64,
}

/// Which combination of the kernel a parity case uses.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Shape {
    /// Even to even (`+1`) or odd to odd (`-1`).
    Same(f64),
    Cross,
}

trait Kernel {
    fn term(&self, n: i64, shape: Shape) -> Result<KernelTerm>;
}

struct IdentityKernel {
    t: f64,
    ln_t: f64,
    c: f64,
    decay: f64,
}

impl IdentityKernel {
    fn new(q: &RateQuad, t: f64, balanced: bool) -> Self {
        IdentityKernel {
            t,
            ln_t: t.ln(),
            c: if balanced { 0.0 } else { -0.5 * q.imbalance() },
            decay: -0.5 * q.sigma() * t,
        }
    }
}

impl Kernel for IdentityKernel {
    fn term(&self, n: i64, shape: Shape) -> Result<KernelTerm> {
        let m = 2 * n as usize;
        Ok(match shape {
            Shape::Same(sign) => {
                let extra = sign * self.c * self.t / (m as f64 + 1.0);
                KernelTerm {
                    ln_scale: self.decay + m as f64 * self.ln_t - ln_factorial(m),
                    value: 1.0 + extra,
                    envelope: 1.0 + extra.abs(),
                    err: 2.0 * f64::EPSILON * (1.0 + extra.abs()),
                }
            }
            Shape::Cross => KernelTerm {
                ln_scale: self.decay + (m + 1) as f64 * self.ln_t - ln_factorial(m + 1),
                value: 1.0,
                envelope: 1.0,
                err: 0.0,
            },
        })
    }
}

/// Evaluates a Fox-Wright function divided by `exp(ln_offset)` and returns
/// `(value, rounding + truncation error)`.
fn psi_scaled(
    spec: &FoxWrightSpec,
    z: f64,
    ln_offset: f64,
    max_terms: usize,
) -> Result<(f64, f64)> {
    let v = fox_wright_scaled(spec, z, ln_offset, INNER_REL_TOL, max_terms)?;
    Ok((v.value, v.rounding_bound() + v.tail_estimate))
}

/// Accumulates `sum coef_i * psi_i` together with its error bound.
#[derive(Default)]
struct Combo {
    value: f64,
    envelope: f64,
    err: f64,
}

impl Combo {
    fn add(&mut self, coef: f64, (v, e): (f64, f64)) {
        self.value += coef * v;
        self.envelope += (coef * v).abs();
        self.err += coef.abs() * e;
    }

    fn finish(self, ln_scale: f64) -> KernelTerm {
        KernelTerm {
            ln_scale,
            value: self.value,
            envelope: self.envelope.max(self.value.abs()),
            err: self.err + 4.0 * f64::EPSILON * self.envelope,
        }
    }
}

struct FractionalKernel {
    nu: f64,
    ln_t: f64,
    t_nu: f64,
    z: f64,
    sigma: f64,
    d: f64,
    max_terms: usize,
}

impl FractionalKernel {
    fn new(q: &RateQuad, t: f64, nu: f64, balanced: bool, max_terms: usize) -> Self {
        let t_nu = t.powf(nu);
        FractionalKernel {
            nu,
            ln_t: t.ln(),
            t_nu,
            z: (0.5 * t_nu * q.sigma()).powi(2),
            sigma: q.sigma(),
            d: if balanced { 0.0 } else { q.imbalance() },
            max_terms,
        }
    }

    /// `2Psi2[(a, 2), (1, 1); (w, 2), (b, 2 nu); z] / exp(ln_offset)`.
    fn psi(&self, a: f64, w: f64, b: f64, ln_offset: f64) -> Result<(f64, f64)> {
        let spec = FoxWrightSpec::new(
            vec![(a, 2.0), (1.0, 1.0)],
            vec![(w, 2.0), (b, 2.0 * self.nu)],
        )?;
        psi_scaled(&spec, self.z, ln_offset, self.max_terms)
    }
}

impl Kernel for FractionalKernel {
    fn term(&self, k: i64, shape: Shape) -> Result<KernelTerm> {
        let kf = k as f64;
        let nu = self.nu;
        let m = 2 * k as usize;
        let ln_scale = 2.0 * kf * nu * self.ln_t;
        let (f_even, f_odd) = (ln_factorial(m), ln_factorial(m + 1));
        let b_even = 2.0 * kf * nu + 1.0;
        let b_odd = (2.0 * kf + 1.0) * nu + 1.0;
        // psi_A / (2k+1)!  and  psi_C / (2k+1)!
        let pa = self.psi(2.0 * kf + 1.0, 0.0, b_even, f_odd)?;
        let pc = self.psi(2.0 * kf + 2.0, 1.0, b_odd, f_odd)?;
        let mut combo = Combo::default();
        match shape {
            Shape::Same(sign) => {
                // psi_B / (2k)!  and  psi_E / (2k)!
                let pb = self.psi(2.0 * kf + 1.0, 1.0, b_even, f_even)?;
                let pe = self.psi(2.0 * kf + 2.0, 2.0, b_odd, f_even)?;
                let sd = sign * self.d;
                combo.add(sd / self.sigma, pa);
                combo.add(1.0, pb);
                combo.add(-0.5 * self.t_nu * sd, pc);
                combo.add(-0.5 * self.t_nu * self.sigma, pe);
            }
            Shape::Cross => {
                combo.add(self.t_nu, pc);
                combo.add(-2.0 / self.sigma, pa);
            }
        }
        Ok(combo.finish(ln_scale))
    }
}

struct TemperedKernel {
    nu: f64,
    ln_lambda: f64,
    z: f64,
    pre: f64,
    c_over_lambda: f64,
    max_terms: usize,
}

impl TemperedKernel {
    fn new(q: &RateQuad, t: f64, nu: f64, mu: f64, balanced: bool, max_terms: usize) -> Self {
        let lambda = 0.5 * q.sigma() + mu;
        let c = if balanced { 0.0 } else { -0.5 * q.imbalance() };
        TemperedKernel {
            nu,
            ln_lambda: lambda.ln(),
            z: -t * lambda.powf(nu),
            pre: mu.powf(nu) * t,
            c_over_lambda: c / lambda,
            max_terms,
        }
    }

    /// `1Psi1[(1, nu); (b, nu); z] / exp(ln_offset)`.
    fn psi(&self, b: f64, ln_offset: f64) -> Result<(f64, f64)> {
        let spec = FoxWrightSpec::new(vec![(1.0, self.nu)], vec![(b, self.nu)])?;
        psi_scaled(&spec, self.z, ln_offset, self.max_terms)
    }
}

impl Kernel for TemperedKernel {
    fn term(&self, n: i64, shape: Shape) -> Result<KernelTerm> {
        let m = 2 * n as usize;
        let mf = m as f64;
        // 1Psi1[(1,nu);(-2n,nu)] / (2n+1)!
        let p0 = self.psi(-mf, ln_factorial(m + 1))?;
        let mut combo = Combo::default();
        Ok(match shape {
            Shape::Same(sign) => {
                let p1 = self.psi(1.0 - mf, ln_factorial(m))?;
                combo.add(1.0, p1);
                combo.add(-sign * self.c_over_lambda, p0);
                combo.finish(self.pre - mf * self.ln_lambda)
            }
            Shape::Cross => {
                combo.add(-1.0, p0);
                combo.finish(self.pre - (mf + 1.0) * self.ln_lambda)
            }
        })
    }
}

fn check_time(t: f64) -> Result<()> {
    if t.is_finite() && t >= 0.0 {
        Ok(())
    } else {
        Err(invalid(
            "t",
            format!("must be finite and non-negative, got {t}"),
        ))
    }
}

fn indicator(k: i64, n: i64) -> PmfValue {
    PmfValue {
        p: if k == n { 1.0 } else { 0.0 },
        tail_estimate: 0.0,
        rounding_bound: 0.0,
        clamped: false,
        terms: 0,
        method: Method::Series,
    }
}

/// Weight sequences, kernel shape and first index for the parity case of
/// `(k, n)`.
fn parity_parts(q: &RateQuad, k: i64, n: i64) -> (Vec<(f64, Weights)>, Shape, i64) {
    let balanced = is_balanced(q);
    let r = k.div_euclid(2);
    let s = n.div_euclid(2);
    let d = s - r;
    let sw = q.swapped();
    let (parts, shape): (Vec<(f64, Weights)>, Shape) = match (Parity::of(k), Parity::of(n)) {
        (Parity::Even, Parity::Even) => {
            (vec![(1.0, Weights::new(q, d, balanced))], Shape::Same(1.0))
        }
        (Parity::Odd, Parity::Odd) => (
            vec![(1.0, Weights::new(&sw, d, balanced))],
            Shape::Same(-1.0),
        ),
        (Parity::Even, Parity::Odd) => (
            vec![
                (q.alpha1(), Weights::new(q, d, balanced)),
                (q.alpha2(), Weights::new(q, d + 1, balanced)),
            ],
            Shape::Cross,
        ),
        (Parity::Odd, Parity::Even) => (
            vec![
                (q.beta2(), Weights::new(&sw, d, balanced)),
                (q.beta1(), Weights::new(&sw, d - 1, balanced)),
            ],
            Shape::Cross,
        ),
    };
    let start = parts.iter().map(|(_, w)| w.d.abs()).min().unwrap_or(0);
    (parts, shape, start)
}

/// Sums the outer series for the parity case of `(k, n)`.
fn outer_series(
    q: &RateQuad,
    k: i64,
    n: i64,
    kernel: &dyn Kernel,
    pol: &TruncationPolicy,
    method: Method,
) -> Result<PmfValue> {
    let (mut parts, shape, start) = parity_parts(q, k, n);

    let mut sum = CompensatedSum::default();
    let mut abs_sum = 0.0;
    let mut err = 0.0;
    let mut tail = TailTracker::new();
    let mut bound = f64::INFINITY;
    for i in 0..pol.max_terms() {
        let idx = start + i as i64;
        let kt = kernel.term(idx, shape)?;
        let mut contrib = 0.0;
        let mut envelope = 0.0;
        for (coef, w) in parts.iter_mut() {
            let lw = w.ln_weight(idx);
            if lw == f64::NEG_INFINITY {
                continue;
            }
            let f = *coef * (lw + kt.ln_scale).exp();
            contrib += f * kt.value;
            envelope += f * kt.envelope;
            err += f * kt.err;
        }
        if !contrib.is_finite() || !envelope.is_finite() {
            return Err(Error::PrecisionLoss {
                what: "pmf outer series",
                bound: f64::INFINITY,
            });
        }
        sum.add(contrib);
        abs_sum += contrib.abs();
        bound = tail.push(envelope);
        if bound <= pol.abs_tol() {
            return finish(
                sum.value(),
                bound,
                err + 4.0 * f64::EPSILON * abs_sum,
                i + 1,
                method,
            );
        }
    }
    Err(Error::NonConvergence {
        series: "pmf outer series",
        terms: pol.max_terms(),
        tail: bound,
    })
}

fn finish(p: f64, tail: f64, rounding: f64, terms: usize, method: Method) -> Result<PmfValue> {
    if rounding > MAX_ROUNDING {
        return Err(Error::PrecisionLoss {
            what: "pmf series cancellation",
            bound: rounding,
        });
    }
    let slack = CLAMP_TOL + rounding + tail;
    let (p, clamped) = if p < 0.0 {
        if p < -slack {
            return Err(Error::PrecisionLoss {
                what: "pmf negative beyond rounding",
                bound: rounding,
            });
        }
        (0.0, true)
    } else if p > 1.0 {
        if p > 1.0 + slack {
            return Err(Error::PrecisionLoss {
                what: "pmf above one beyond rounding",
                bound: rounding,
            });
        }
        (1.0, true)
    } else {
        (p, false)
    };
    Ok(PmfValue {
        p,
        tail_estimate: tail,
        rounding_bound: rounding,
        clamped,
        terms,
        method,
    })
}

/// The plain-chain series `u -> p_{k,n}(u)` with its weights precomputed,
/// for repeated evaluation at many times.
struct BaseExpansion {
    shape: Shape,
    c: f64,
    a: f64,
    /// `(index, ln sum_j coef_j R^d Theta^index)`
    ln_w: Vec<(i64, f64)>,
}

impl BaseExpansion {
    /// Keeps enough terms for every `u <= u_max`.
    fn new(q: &RateQuad, k: i64, n: i64, u_max: f64, pol: &TruncationPolicy) -> Result<Self> {
        let (mut parts, shape, start) = parity_parts(q, k, n);
        let extra = usize::from(shape == Shape::Cross);
        let ln_u = u_max.ln();
        let mut ln_w = Vec::new();
        let mut best = f64::NEG_INFINITY;
        let mut prev = f64::NEG_INFINITY;
        for i in 0..pol.max_terms() {
            let idx = start + i as i64;
            let logs: Vec<f64> = parts
                .iter_mut()
                .map(|(coef, w)| coef.ln() + w.ln_weight(idx))
                .collect();
            let lw = log_sum_exp(&logs);
            ln_w.push((idx, lw));
            let m = 2 * idx as usize + extra;
            let at_top = lw + m as f64 * ln_u - ln_factorial(m);
            best = best.max(at_top);
            if at_top < prev && at_top < best - 45.0 {
                return Ok(BaseExpansion {
                    shape,
                    c: if is_balanced(q) {
                        0.0
                    } else {
                        -0.5 * q.imbalance()
                    },
                    a: 0.5 * q.sigma(),
                    ln_w,
                });
            }
            prev = at_top;
        }
        Err(Error::NonConvergence {
            series: "pmf mixture expansion",
            terms: pol.max_terms(),
            tail: (prev - best).exp(),
        })
    }

    fn eval(&self, u: f64) -> f64 {
        if u <= 0.0 {
            return 0.0;
        }
        let ln_u = u.ln();
        let mut sum = 0.0;
        let mut best = f64::NEG_INFINITY;
        for &(idx, lw) in &self.ln_w {
            let m = 2 * idx as usize;
            let (ln_t, factor) = match self.shape {
                Shape::Same(sign) => (
                    lw + m as f64 * ln_u - ln_factorial(m),
                    1.0 + sign * self.c * u / (m as f64 + 1.0),
                ),
                Shape::Cross => (lw + (m + 1) as f64 * ln_u - ln_factorial(m + 1), 1.0),
            };
            let ln_term = ln_t - self.a * u;
            if ln_term < best - 45.0 {
                break;
            }
            best = best.max(ln_term);
            sum += ln_term.exp() * factor;
        }
        sum
    }
}

/// `E[p_{k,n}(T)]` for a clock `T` with a density, by quadrature.
fn mixture(
    q: &RateQuad,
    k: i64,
    n: i64,
    rule: &ClockRule,
    pol: &TruncationPolicy,
) -> Result<PmfValue> {
    let u_max = rule.nodes.iter().map(|node| node.u).fold(0.0, f64::max);
    let base = BaseExpansion::new(q, k, n, u_max, pol)?;
    let (p, err) = rule.expect(|u| base.eval(u));
    finish(p, 1e-17, err, base.ln_w.len(), Method::Mixture)
}

/// `p_{k,n}(t)` for the plain chain.
pub fn pmf_base(q: &RateQuad, k: i64, n: i64, t: f64, pol: &TruncationPolicy) -> Result<PmfValue> {
    check_time(t)?;
    if t == 0.0 {
        return Ok(indicator(k, n));
    }
    let kernel = IdentityKernel::new(q, t, is_balanced(q));
    outer_series(q, k, n, &kernel, pol, Method::Series)
}

/// `p^nu_{k,n}(t)` for the chain run on an inverse `nu`-stable clock.
pub fn pmf_fractional(
    q: &RateQuad,
    k: i64,
    n: i64,
    t: f64,
    nu: f64,
    pol: &TruncationPolicy,
) -> Result<PmfValue> {
    pmf_fractional_with(q, k, n, t, nu, pol, Evaluation::Auto)
}

/// [`pmf_fractional`] with an explicit evaluation strategy.
pub fn pmf_fractional_with(
    q: &RateQuad,
    k: i64,
    n: i64,
    t: f64,
    nu: f64,
    pol: &TruncationPolicy,
    how: Evaluation,
) -> Result<PmfValue> {
    check_time(t)?;
    TimeChange::inverse_stable(nu)?;
    if t == 0.0 {
        return Ok(indicator(k, n));
    }
    let series = || {
        let kernel = FractionalKernel::new(q, t, nu, is_balanced(q), pol.max_terms());
        outer_series(q, k, n, &kernel, pol, Method::Series)
    };
    let integral = || {
        if nu == 1.0 {
            return pmf_base(q, k, n, t, pol);
        }
        mixture(
            q,
            k,
            n,
            &ClockDensity::inverse_stable(t, nu)?.shared_rule(),
            pol,
        )
    };
    choose(how, series, integral)
}

/// `p~^{nu,mu}_{k,n}(t)` for the chain run on a tempered stable clock.
pub fn pmf_tempered(
    q: &RateQuad,
    k: i64,
    n: i64,
    t: f64,
    nu: f64,
    mu: f64,
    pol: &TruncationPolicy,
) -> Result<PmfValue> {
    pmf_tempered_with(q, k, n, t, nu, mu, pol, Evaluation::Auto)
}

/// [`pmf_tempered`] with an explicit evaluation strategy.
#[allow(clippy::too_many_arguments)]
pub fn pmf_tempered_with(
    q: &RateQuad,
    k: i64,
    n: i64,
    t: f64,
    nu: f64,
    mu: f64,
    pol: &TruncationPolicy,
    how: Evaluation,
) -> Result<PmfValue> {
    check_time(t)?;
    TimeChange::tempered_stable(nu, mu)?;
    if t == 0.0 {
        return Ok(indicator(k, n));
    }
    let series = || {
        let kernel = TemperedKernel::new(q, t, nu, mu, is_balanced(q), pol.max_terms());
        outer_series(q, k, n, &kernel, pol, Method::Series)
    };
    let integral = || {
        if nu == 1.0 {
            // the clock is deterministic
            return pmf_base(q, k, n, t, pol);
        }
        mixture(
            q,
            k,
            n,
            &ClockDensity::tempered_stable(t, nu, mu)?.shared_rule(),
            pol,
        )
    };
    choose(how, series, integral)
}

fn choose(
    how: Evaluation,
    series: impl FnOnce() -> Result<PmfValue>,
    integral: impl FnOnce() -> Result<PmfValue>,
) -> Result<PmfValue> {
    match how {
        Evaluation::Series => series(),
        Evaluation::Mixture => integral(),
        Evaluation::Auto => match series() {
            Ok(v) if v.rounding_bound <= SERIES_TRUST => Ok(v),
            Ok(_) | Err(Error::PrecisionLoss { .. }) | Err(Error::NonConvergence { .. }) => {
                integral()
            }
            Err(e) => Err(e),
        },
    }
}

/// Dispatch on the clock of the query.
pub fn pmf(query: &PmfQuery) -> Result<PmfValue> {
    let PmfQuery {
        k,
        n,
        t,
        q,
        clock,
        pol,
    } = *query;
    match clock {
        TimeChange::Identity => pmf_base(&q, k, n, t, &pol),
        TimeChange::InverseStable { nu } => pmf_fractional(&q, k, n, t, nu, &pol),
        TimeChange::TemperedStable { nu, mu } => pmf_tempered(&q, k, n, t, nu, mu, &pol),
    }
}

/// Evaluate the window, recording failed targets instead of aborting.
pub fn pmf_window_lenient(
    q: &RateQuad,
    clock: &TimeChange,
    k: i64,
    t: f64,
    radius: u32,
    pol: &TruncationPolicy,
) -> Result<PmfTable> {
    if radius == 0 {
        return Err(invalid("radius", "must be at least 1"));
    }
    check_time(t)?;
    clock.validate()?;
    if t == 0.0 {
        return Ok(PmfTable {
            k,
            t,
            rows: vec![PmfRow {
                n: k,
                p: 1.0,
                tail_estimate: 0.0,
                rounding_bound: 0.0,
                clamped: false,
            }],
            failures: Vec::new(),
            normalization_defect: 0.0,
        });
    }
    let r = radius as i64;
    let results: Vec<(i64, Result<PmfValue>)> = (k - r..=k + r)
        .into_par_iter()
        .map(|n| {
            let query = PmfQuery {
                k,
                n,
                t,
                q: *q,
                clock: *clock,
                pol: *pol,
            };
            (n, pmf(&query))
        })
        .collect();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (n, res) in results {
        match res {
            Ok(v) => rows.push(PmfRow {
                n,
                p: v.p,
                tail_estimate: v.tail_estimate,
                rounding_bound: v.rounding_bound,
                clamped: v.clamped,
            }),
            Err(e) => failures.push((n, e.to_string())),
        }
    }
    let mut total = CompensatedSum::default();
    let mut tails = 0.0;
    for row in &rows {
        total.add(row.p);
        tails += row.tail_estimate;
    }
    Ok(PmfTable {
        k,
        t,
        rows,
        failures,
        normalization_defect: (1.0 - total.value()).abs() + tails,
    })
}

/// Evaluate `p_{k,n}(t)` for every `n` within `radius` of `k`.
pub fn pmf_window(
    q: &RateQuad,
    clock: &TimeChange,
    k: i64,
    t: f64,
    radius: u32,
    pol: &TruncationPolicy,
) -> Result<PmfTable> {
    let table = pmf_window_lenient(q, clock, k, t, radius, pol)?;
    if let Some((n, _)) = table.failures.first() {
        let query = PmfQuery {
            k,
            n: *n,
            t,
            q: *q,
            clock: *clock,
            pol: *pol,
        };
        pmf(&query)?;
    }
    Ok(table)
}
