//! Large and moderate deviation rate functions.
//!
//! `X(t)/t` satisfies a large deviation principle with speed `t` and rate
//! `Lambda*`, the Legendre transform of the cumulant `Lambda`. The
//! time-changed chains use the cumulants
//!
//! ```text
//! Lambda_nu(g)       = Lambda(g)^(1/nu)   where Lambda(g) >= 0, else 0
//! Lambda~_{nu,mu}(g) = mu^nu - (mu - Lambda(g))^nu   where Lambda(g) <= mu, else +inf
//! ```
//!
//! Moderate deviations have the quadratic rate `y^2 / (2 c)` with `c` the
//! curvature of the cumulant at zero.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::RateQuad;
use crate::pgf::{psi, tempered_domain};

/// Search settings for [`legendre`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BracketPolicy {
    /// First trial `|gamma|`; doubled until the maximiser is bracketed.
    pub start: f64,
    /// Largest `|gamma|` tried before giving up.
    pub limit: f64,
    pub iterations: usize,
    pub gamma_tol: f64,
}

impl Default for BracketPolicy {
    fn default() -> Self {
        BracketPolicy {
            start: 1.0,
            limit: 1e3,
            iterations: 200,
            gamma_tol: 1e-10,
        }
    }
}

/// `sup_g { g y - f(g) }` and where it is attained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Conjugate {
    pub rate: f64,
    pub argmax: f64,
    /// The maximiser sits at the edge of the effective domain of `f`.
    pub at_boundary: bool,
}

/// Numerical Legendre transform of a convex `f` with `f(0) = 0`.
///
/// The objective `g y - f(g)` is concave. Its maximiser is bracketed by
/// doubling steps away from zero and then located by golden-section search.
/// Values of `f` may be `+inf` outside the effective domain.
pub fn legendre(f: impl Fn(f64) -> f64, y: f64, pol: &BracketPolicy) -> Result<Conjugate> {
    if !y.is_finite() {
        return Err(invalid("y", format!("must be finite, got {y}")));
    }
    let obj = |g: f64| {
        let v = f(g);
        if v == f64::INFINITY {
            f64::NEG_INFINITY
        } else {
            g * y - v
        }
    };
    let (lo, hi) = bracket(&obj, pol)?;
    let argmax = golden(&obj, lo, hi, pol);
    let step = 4.0 * pol.gamma_tol * argmax.abs().max(1.0);
    let at_boundary = f(argmax + step) == f64::INFINITY || f(argmax - step) == f64::INFINITY;
    Ok(Conjugate {
        rate: obj(argmax).max(0.0),
        argmax,
        at_boundary,
    })
}

fn bracket(obj: &impl Fn(f64) -> f64, pol: &BracketPolicy) -> Result<(f64, f64)> {
    let s = pol.start;
    let at_zero = obj(0.0);
    for dir in [1.0, -1.0] {
        if obj(dir * s) > at_zero {
            let (mut a, mut b) = (0.0, dir * s);
            let mut c = 2.0 * b;
            while obj(c) > obj(b) {
                if c.abs() > pol.limit {
                    return Err(Error::BracketFailure { limit: pol.limit });
                }
                a = b;
                b = c;
                c *= 2.0;
            }
            return Ok(if dir > 0.0 { (a, c) } else { (c, a) });
        }
    }
    Ok((-s, s))
}

fn golden(obj: &impl Fn(f64) -> f64, mut a: f64, mut b: f64, pol: &BracketPolicy) -> f64 {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - r * (b - a);
    let mut x2 = a + r * (b - a);
    let (mut f1, mut f2) = (obj(x1), obj(x2));
    for _ in 0..pol.iterations {
        if (b - a).abs() <= pol.gamma_tol * a.abs().max(b.abs()).max(1.0) {
            break;
        }
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - r * (b - a);
            f1 = obj(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + r * (b - a);
            f2 = obj(x2);
        }
    }
    let mid = 0.5 * (a + b);
    // keep a finite endpoint value when the middle falls off the domain
    [mid, x1, x2]
        .into_iter()
        .max_by(|p, q| obj(*p).total_cmp(&obj(*q)))
        .unwrap_or(mid)
}

/// `Lambda_nu(gamma)` for `0 < nu <= 1`; at `nu = 1` this is `Lambda`.
pub fn lambda_nu(gamma: f64, q: &RateQuad, nu: f64) -> f64 {
    let l = q.cumulant(gamma);
    if nu == 1.0 {
        return l;
    }
    if l >= 0.0 {
        l.powf(1.0 / nu)
    } else {
        0.0
    }
}

/// `Lambda~_{nu,mu}(gamma) = Psi(Lambda(gamma))`, `+inf` where `Lambda > mu`.
pub fn lambda_tempered(gamma: f64, q: &RateQuad, nu: f64, mu: f64) -> f64 {
    psi(q.cumulant(gamma), nu, mu).unwrap_or(f64::NAN)
}

/// `d/dgamma Lambda~_{nu,mu} = nu (mu - Lambda)^(nu-1) Lambda'`.
pub fn lambda_tempered_first(gamma: f64, q: &RateQuad, nu: f64, mu: f64) -> f64 {
    let l = q.cumulant(gamma);
    if l > mu {
        return f64::INFINITY;
    }
    nu * (mu - l).powf(nu - 1.0) * q.cumulant_first(gamma)
}

/// The `gamma` interval on which `Lambda(gamma) <= mu`.
pub fn tempered_gamma_domain(q: &RateQuad, mu: f64) -> Result<(f64, f64)> {
    let (lo, hi) = tempered_domain(q, mu)?;
    Ok((lo.ln(), hi.ln()))
}

/// Which process a rate function belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum RateFamily {
    Base,
    Fractional { nu: f64 },
    Tempered { nu: f64, mu: f64 },
}

impl RateFamily {
    pub fn validate(&self) -> Result<()> {
        match *self {
            RateFamily::Base => Ok(()),
            RateFamily::Fractional { nu } => {
                if nu > 0.0 && nu <= 1.0 {
                    Ok(())
                } else {
                    Err(invalid("nu", format!("must lie in (0, 1], got {nu}")))
                }
            }
            RateFamily::Tempered { nu, mu } => {
                if !(nu > 0.0 && nu < 1.0) {
                    return Err(invalid("nu", format!("must lie in (0, 1), got {nu}")));
                }
                if !mu.is_finite() || mu < 0.0 {
                    return Err(invalid(
                        "mu",
                        format!("must be finite and non-negative, got {mu}"),
                    ));
                }
                if mu == 0.0 {
                    return Err(Error::UnsupportedRegime(
                        "tempered rate functions need mu > 0; with mu = 0 the clock is heavy tailed \
                         and no large deviation principle is available"
                            .into(),
                    ));
                }
                Ok(())
            }
        }
    }

    /// The cumulant whose Legendre transform is the rate.
    pub fn cumulant(&self, q: &RateQuad, gamma: f64) -> f64 {
        match *self {
            RateFamily::Base => q.cumulant(gamma),
            RateFamily::Fractional { nu } => lambda_nu(gamma, q, nu),
            RateFamily::Tempered { nu, mu } => lambda_tempered(gamma, q, nu, mu),
        }
    }

    /// The `y` at which the rate vanishes.
    pub fn zero(&self, q: &RateQuad) -> f64 {
        let (d1, _) = q.cumulant_derivatives_at_origin();
        match *self {
            RateFamily::Base => d1,
            RateFamily::Fractional { nu: 1.0 } => d1,
            RateFamily::Fractional { .. } => 0.0,
            RateFamily::Tempered { nu, mu } => nu * mu.powf(nu - 1.0) * d1,
        }
    }

    pub fn name(&self) -> String {
        match *self {
            RateFamily::Base => "base".into(),
            RateFamily::Fractional { nu } => format!("fractional(nu={nu})"),
            RateFamily::Tempered { nu, mu } => format!("tempered(nu={nu},mu={mu})"),
        }
    }
}

/// Rate function of `family` at `y`.
pub fn rate(q: &RateQuad, family: &RateFamily, y: f64) -> Result<Conjugate> {
    family.validate()?;
    legendre(|g| family.cumulant(q, g), y, &BracketPolicy::default())
}

/// `Lambda*(y)`.
pub fn rate_base(q: &RateQuad, y: f64) -> Result<Conjugate> {
    rate(q, &RateFamily::Base, y)
}

/// `Lambda_nu*(y)`.
pub fn rate_fractional(q: &RateQuad, nu: f64, y: f64) -> Result<Conjugate> {
    rate(q, &RateFamily::Fractional { nu }, y)
}

/// `Lambda~*_{nu,mu}(y)`; requires `mu > 0`.
pub fn rate_tempered(q: &RateQuad, nu: f64, mu: f64, y: f64) -> Result<Conjugate> {
    rate(q, &RateFamily::Tempered { nu, mu }, y)
}

/// One point of a [`RateCurve`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RatePoint {
    pub y: f64,
    pub rate: f64,
    pub argmax_gamma: f64,
    /// The rate has different one-sided slopes here.
    pub kink: bool,
}

/// A rate function sampled on a grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateCurve {
    pub family: RateFamily,
    pub rates: (f64, f64, f64, f64),
    pub points: Vec<RatePoint>,
}

/// Whether the rate of `family` has a corner at `y`.
///
/// `Lambda_nu` is flat on the interval `{Lambda <= 0}`. When `Lambda'(0) != 0`
/// that interval has positive length, the maximiser jumps across it at
/// `y = 0` and the one-sided slopes of the rate there are its endpoints.
pub fn has_kink(q: &RateQuad, family: &RateFamily, y: f64) -> bool {
    match *family {
        RateFamily::Fractional { nu } if nu < 1.0 => {
            let (d1, _) = q.cumulant_derivatives_at_origin();
            y == 0.0 && d1.abs() > 1e-12
        }
        _ => false,
    }
}

/// Evaluates the rate of `family` on `ys`.
pub fn rate_curve(q: &RateQuad, family: &RateFamily, ys: &[f64]) -> Result<RateCurve> {
    family.validate()?;
    let mut points = Vec::with_capacity(ys.len());
    for &y in ys {
        let c = rate(q, family, y)?;
        points.push(RatePoint {
            y,
            rate: c.rate,
            argmax_gamma: c.argmax,
            kink: has_kink(q, family, y),
        });
    }
    Ok(RateCurve {
        family: *family,
        rates: q.as_tuple(),
        points,
    })
}

/// The grid `-0.5, -0.49, ..., 0.5`.
pub fn figure2_grid() -> Vec<f64> {
    (-50..=50).map(|i| i as f64 / 100.0).collect()
}

/// The fractional rate functions for `nu = 1/4, 1/2, 1` and symmetric unit
/// rates, on [`figure2_grid`].
pub fn figure2() -> Result<Vec<RateCurve>> {
    let q = RateQuad::symmetric(1.0)?;
    let ys = figure2_grid();
    [0.25, 0.5, 1.0]
        .into_iter()
        .map(|nu| rate_curve(&q, &RateFamily::Fractional { nu }, &ys))
        .collect()
}

/// The largest `d` on the grid such that the curves, listed in decreasing
/// order, are strictly ordered at every grid point with `0 < |y| <= d`.
pub fn ordering_radius(curves: &[RateCurve]) -> f64 {
    let Some(first) = curves.first() else {
        return 0.0;
    };
    let mut order: Vec<(f64, bool)> = first
        .points
        .iter()
        .enumerate()
        .filter(|(_, p)| p.y != 0.0)
        .map(|(i, p)| {
            let ok = curves
                .windows(2)
                .all(|w| w[0].points[i].rate > w[1].points[i].rate);
            (p.y.abs(), ok)
        })
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut radius = 0.0;
    for (r, ok) in order {
        if !ok {
            break;
        }
        radius = r;
    }
    // a failure at the same |y| on the other side must also stop the scan
    radius
}

/// Processes with a moderate deviation rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum MdFamily {
    Base,
    Tempered { nu: f64, mu: f64 },
    Fractional { nu: f64 },
}

/// The constant of the quadratic rate `y^2 / (2 sigma_sq)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MdRate {
    pub sigma_sq: f64,
}

impl MdRate {
    pub fn rate(&self, y: f64) -> f64 {
        y * y / (2.0 * self.sigma_sq)
    }
}

/// Curvature of the cumulant at zero.
///
/// For the tempered chain
/// `nu mu^(nu-1) Lambda''(0) - nu (nu-1) mu^(nu-2) Lambda'(0)^2`.
pub fn md_curvature(q: &RateQuad, family: &MdFamily) -> Result<MdRate> {
    let (d1, d2) = q.cumulant_derivatives_at_origin();
    let sigma_sq = match *family {
        MdFamily::Base => d2,
        MdFamily::Tempered { nu, mu } => {
            RateFamily::Tempered { nu, mu }.validate()?;
            nu * mu.powf(nu - 1.0) * d2 - nu * (nu - 1.0) * mu.powf(nu - 2.0) * d1 * d1
        }
        MdFamily::Fractional { .. } => return Err(Error::UnsupportedRegime(
            "no moderate deviation rate for the time-fractional chain: the candidate curvature \
                 vanishes for nu <= 1/2, so this rate function is not interesting and is \
                 deliberately not provided"
                .into(),
        )),
    };
    Ok(MdRate { sigma_sq })
}

/// `y^2 / (2 c)` for the curvature `c` of `family`.
pub fn md_rate(q: &RateQuad, family: &MdFamily, y: f64) -> Result<f64> {
    Ok(md_curvature(q, family)?.rate(y))
}
