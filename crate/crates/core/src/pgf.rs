//! Probability generating functions `F_k(z, t) = E[z^X(t) | X(0) = k]` for the
//! plain chain and the two time-changed chains, with the mean and variance of
//! the plain chain.
//!
//! All three share the form
//!
//! ```text
//! F_k(z,t) = z^k ( (1 + c_k/h)/2 * G(h+(z)) + (1 - c_k/h)/2 * G(h-(z)) )
//! ```
//!
//! where `G(x)` is the moment generating function of the clock at time `t`:
//! `exp(x t)` for the identity clock, `E_nu(x t^nu)` for the inverse stable
//! clock and `exp(t Psi(x))` for the tempered stable clock, with
//!
//! ```text
//! Psi(x) = mu^nu - (mu - x)^nu   for x <= mu,   +inf otherwise.
//! ```

use serde::Serialize;

use crate::error::{domain, invalid, Result};
use crate::model::{Parity, RateQuad};
use crate::specfun::{mittag_leffler, TruncationPolicy};

/// The random clock driving the chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TimeChange {
    Identity,
    /// Inverse of a `nu`-stable subordinator.
    InverseStable {
        nu: f64,
    },
    /// Tempered `nu`-stable subordinator with tempering `mu`; `mu = 0` is the
    /// plain stable subordinator.
    TemperedStable {
        nu: f64,
        mu: f64,
    },
}

fn check_nu(nu: f64) -> Result<f64> {
    // nu = 1 is accepted: it reduces every clock to the identity
    if nu > 0.0 && nu <= 1.0 {
        Ok(nu)
    } else {
        Err(invalid("nu", format!("must lie in (0, 1), got {nu}")))
    }
}

fn check_mu(mu: f64) -> Result<f64> {
    if mu.is_finite() && mu >= 0.0 {
        Ok(mu)
    } else {
        Err(invalid(
            "mu",
            format!("must be finite and non-negative, got {mu}"),
        ))
    }
}

impl TimeChange {
    pub fn inverse_stable(nu: f64) -> Result<Self> {
        Ok(TimeChange::InverseStable { nu: check_nu(nu)? })
    }

    pub fn tempered_stable(nu: f64, mu: f64) -> Result<Self> {
        Ok(TimeChange::TemperedStable {
            nu: check_nu(nu)?,
            mu: check_mu(mu)?,
        })
    }

    /// Re-check the parameters of a value built directly from the variants.
    pub fn validate(&self) -> Result<()> {
        match *self {
            TimeChange::Identity => Ok(()),
            TimeChange::InverseStable { nu } => check_nu(nu).map(|_| ()),
            TimeChange::TemperedStable { nu, mu } => {
                check_nu(nu)?;
                check_mu(mu).map(|_| ())
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            TimeChange::Identity => "identity",
            TimeChange::InverseStable { .. } => "inverse-stable",
            TimeChange::TemperedStable { .. } => "tempered-stable",
        }
    }
}

/// A generating-function value; `value` may be `+inf` for the tempered clock.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PgfValue {
    pub value: f64,
    pub z: f64,
    pub t: f64,
    pub k: i64,
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

/// `(z^k, (1 + c/h)/2, (1 - c/h)/2, h-, h+)`.
fn pieces(q: &RateQuad, z: f64, k: i64) -> Result<(f64, f64, f64, f64, f64)> {
    let (lo, hi) = q.eigenvalues(z)?;
    let c = q.parity_coefficient(z, Parity::of(k))?;
    let ratio = c / q.h(z)?;
    Ok((
        z.powf(k as f64),
        0.5 * (1.0 + ratio),
        0.5 * (1.0 - ratio),
        lo,
        hi,
    ))
}

pub fn pgf_base(q: &RateQuad, z: f64, t: f64, k: i64) -> Result<PgfValue> {
    check_time(t)?;
    let (zk, wp, wm, lo, hi) = pieces(q, z, k)?;
    let value = zk * (wp * (hi * t).exp() + wm * (lo * t).exp());
    Ok(PgfValue { value, z, t, k })
}

pub fn pgf_fractional(
    q: &RateQuad,
    z: f64,
    t: f64,
    k: i64,
    nu: f64,
    pol: &TruncationPolicy,
) -> Result<PgfValue> {
    check_time(t)?;
    check_nu(nu)?;
    let (zk, wp, wm, lo, hi) = pieces(q, z, k)?;
    let tn = t.powf(nu);
    let gp = mittag_leffler(nu, hi * tn, pol)?;
    let gm = mittag_leffler(nu, lo * tn, pol)?;
    Ok(PgfValue {
        value: zk * (wp * gp + wm * gm),
        z,
        t,
        k,
    })
}

/// Relative slack allowed when testing `h+(z) <= mu` at the domain edge.
const EDGE_SLACK: f64 = 1e-12;

pub fn pgf_tempered(q: &RateQuad, z: f64, t: f64, k: i64, nu: f64, mu: f64) -> Result<PgfValue> {
    check_time(t)?;
    check_nu(nu)?;
    check_mu(mu)?;
    let (zk, wp, wm, lo, hi) = pieces(q, z, k)?;
    let edge = mu + EDGE_SLACK * (mu + 0.5 * q.sigma());
    if hi > edge {
        return Ok(PgfValue {
            value: f64::INFINITY,
            z,
            t,
            k,
        });
    }
    let gp = (t * psi_raw(hi.min(mu), nu, mu)).exp();
    let gm = (t * psi_raw(lo, nu, mu)).exp();
    Ok(PgfValue {
        value: zk * (wp * gp + wm * gm),
        z,
        t,
        k,
    })
}

/// Dispatch on the clock.
pub fn pgf(
    q: &RateQuad,
    clock: &TimeChange,
    z: f64,
    t: f64,
    k: i64,
    pol: &TruncationPolicy,
) -> Result<PgfValue> {
    match *clock {
        TimeChange::Identity => pgf_base(q, z, t, k),
        TimeChange::InverseStable { nu } => pgf_fractional(q, z, t, k, nu, pol),
        TimeChange::TemperedStable { nu, mu } => pgf_tempered(q, z, t, k, nu, mu),
    }
}

fn psi_raw(gamma: f64, nu: f64, mu: f64) -> f64 {
    if gamma > mu {
        return f64::INFINITY;
    }
    if mu == 0.0 {
        return -(-gamma).powf(nu);
    }
    // mu^nu (1 - (1 - gamma/mu)^nu) without cancellation near gamma = 0
    -mu.powf(nu) * (nu * (-gamma / mu).ln_1p()).exp_m1()
}

/// Laplace exponent of the tempered stable subordinator,
/// `Psi(gamma) = mu^nu - (mu - gamma)^nu`, infinite for `gamma > mu`.
pub fn psi(gamma: f64, nu: f64, mu: f64) -> Result<f64> {
    check_nu(nu)?;
    check_mu(mu)?;
    if gamma.is_nan() {
        return Err(domain("psi", "argument is NaN"));
    }
    Ok(psi_raw(gamma, nu, mu))
}

/// `(Psi'(0), Psi''(0)) = (nu mu^(nu-1), -nu (nu-1) mu^(nu-2))`.
pub fn psi_derivatives_at_origin(nu: f64, mu: f64) -> Result<(f64, f64)> {
    check_nu(nu)?;
    if !(mu.is_finite() && mu > 0.0) {
        return Err(invalid("mu", format!("must be positive, got {mu}")));
    }
    Ok((nu * mu.powf(nu - 1.0), -nu * (nu - 1.0) * mu.powf(nu - 2.0)))
}

/// `(sqrt(m-(mu)), sqrt(m+(mu)))`: the `z` interval on which `h+(z) <= mu`.
///
/// ```text
/// m±(mu) = (M ± sqrt(M^2 - 4 a1 a2 b1 b2)) / (2 a1 b1),   M = mu^2 + mu sigma + a1 b1 + a2 b2
/// ```
pub fn tempered_domain(q: &RateQuad, mu: f64) -> Result<(f64, f64)> {
    check_mu(mu)?;
    let (a1, a2, b1, b2) = q.as_tuple();
    let (p, m) = (a1 * b1, a2 * b2);
    let big = mu * mu + mu * q.sigma() + p + m;
    // M^2 - 4pm = (p - m)^2 + (M - p - m)(M + p + m)
    let extra = mu * mu + mu * q.sigma();
    let disc = ((p - m).powi(2) + extra * (big + p + m)).sqrt();
    let m_plus = (big + disc) / (2.0 * p);
    // product of the roots is m/p
    let m_minus = m / (p * m_plus);
    Ok((m_minus.sqrt(), m_plus.sqrt()))
}

/// `E[X(t) | X(0) = k]` for the plain chain.
///
/// ```text
/// k + Lambda'(0) t + C_k (1 - e^{-sigma t}) / 2,   C_even = 2 (a1+a2)(a1-a2-b1+b2) / sigma^2
/// ```
///
/// `C_odd` is `C_even` with the rate pairs exchanged.
pub fn mean_base(q: &RateQuad, t: f64, k: i64) -> Result<f64> {
    check_time(t)?;
    let r = match Parity::of(k) {
        Parity::Even => *q,
        Parity::Odd => q.swapped(),
    };
    let (a1, a2, b1, b2) = r.as_tuple();
    let s = q.sigma();
    let coef = 2.0 * (a1 + a2) * (a1 - a2 - b1 + b2) / (s * s);
    let (drift, _) = q.cumulant_derivatives_at_origin();
    Ok(k as f64 + drift * t - coef * 0.5 * (-s * t).exp_m1())
}

/// `Var[X(t) | X(0) = k]` for the plain chain.
///
/// The even-start closed form is coded term by term; an odd start uses the
/// same expression with the rate pairs exchanged.
pub fn variance_base(q: &RateQuad, t: f64, k: i64) -> Result<f64> {
    check_time(t)?;
    Ok(match Parity::of(k) {
        Parity::Even => variance_even(q, t),
        Parity::Odd => variance_even(&q.swapped(), t),
    })
}

fn variance_even(q: &RateQuad, t: f64) -> f64 {
    let (a1, a2, b1, b2) = q.as_tuple();
    let s = q.sigma();
    let (_, curv) = q.cumulant_derivatives_at_origin();
    let p = a1 - a2 - b1 + b2;
    let a = a1 + a2;
    let b = b1 + b2;
    let d = a - b;
    let s3 = s * s * s;
    let s4 = s3 * s;
    let e1 = (-s * t).exp();
    let e2 = (-2.0 * s * t).exp();

    let transient = 8.0 * t * a * p * (a1 * b1 - a2 * b2) + a * p * d
        - 6.0 * (a2 - b1) * p * d
        - 2.0 * (7.0 * a2 + b1 - 2.0 * b2) * b * d
        - 4.0 * (a2 - b2).powi(2) * d
        + 8.0 * a2 * b * a
        - 8.0 * a2 * b * p
        + 8.0 * b1 * b * b
        - 16.0 * (a2 + b1).powi(2) * b * b / s;
    let constant = (-7.0 * a1 + 3.0 * a2 + 10.0 * b1 - 4.0 * b2) * b * p
        + 4.0 * (a2 + a1) * (a2 + 2.0 * b2) * p
        + 4.0 * (a2 - b2).powi(2) * p
        + 4.0 * (a2 - b2) * (a2 + b1) * b
        - 10.0 * (a2 + b1) * b * b
        + 8.0 * (a2 + b1) * (a2 - b2).powi(2);

    curv * t - e2 * a * a * p * p / s4
        + e1 / s3 * transient
        + constant / s3
        + 20.0 * (a2 + b1).powi(2) * b * b / s4
}
