//! Densities of the random clocks.
//!
//! Both clocks are built from a one-sided stable variable `S` with
//! `E[e^{-s S}] = e^{-s^nu}`. Kanter's representation
//!
//! ```text
//! S = (A(phi) / E)^((1-nu)/nu),   phi ~ U(0, pi),  E ~ Exp(1)
//! A(phi) = (sin(nu phi) / sin(phi))^(1/(1-nu)) * sin((1-nu) phi) / sin(nu phi)
//! ```
//!
//! turns every density below into an integral over `phi` of a positive
//! integrand.

use std::f64::consts::PI;
use std::sync::{Arc, Mutex};

use quadrature::double_exponential;

use crate::error::{invalid, Result};
use crate::specfun::rgamma;

/// `ln A(phi)`.
pub fn kanter_ln_a(phi: f64, nu: f64) -> f64 {
    if phi < 1e-8 {
        return kanter_a0(nu).ln();
    }
    let (sn, s1, s2) = ((nu * phi).sin(), phi.sin(), ((1.0 - nu) * phi).sin());
    (sn.ln() - s1.ln()) / (1.0 - nu) + s2.ln() - sn.ln()
}

/// `A(0) = (1 - nu) nu^(nu/(1-nu))`, the minimum of `A`.
pub fn kanter_a0(nu: f64) -> f64 {
    (1.0 - nu) * nu.powf(nu / (1.0 - nu))
}

/// `phi` in `(0, pi)` with `ln A(phi) = level`; `A` increases from `A(0)`
/// to infinity.
fn kanter_solve(level: f64, nu: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, PI);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if kanter_ln_a(mid, nu) < level {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// `ln int_0^pi A(phi) e^{-w A(phi)} dphi` for `w > 0`.
///
/// As a function of `L = ln A` the integrand is the bump `e^{L - w e^L}`
/// peaking at `L = -ln w`; it is split where `L` sits at fixed offsets from
/// the peak, and cut off where it has dropped below `e^{-50}` of it.
fn ln_kanter_integral(w: f64, nu: f64) -> f64 {
    let a0 = kanter_a0(nu);
    let ln_peak = if w * a0 <= 1.0 {
        -1.0 - w.ln()
    } else {
        a0.ln() - w * a0
    };
    let f = |phi: f64| {
        let ln_a = kanter_ln_a(phi, nu);
        (ln_a - w * ln_a.exp() - ln_peak).exp()
    };
    let mut cuts = vec![0.0];
    for delta in [-20.0, -5.0, -1.0, 0.0, 1.0, 2.0, 4.0] {
        let level = -w.ln() + delta;
        if level > a0.ln() {
            cuts.push(kanter_solve(level, nu));
        }
    }
    if cuts.len() == 1 {
        // the bump lies left of A(0): the integrand only decays
        let level = a0.ln() + (50.0 / (w * a0)).ln_1p();
        cuts.push(kanter_solve(level, nu));
    }
    let mut total = 0.0;
    for c in cuts.windows(2) {
        total += double_exponential::integrate(f, c[0], c[1], 1e-16).integral;
    }
    ln_peak + total.ln()
}

/// Below this argument the M-Wright function uses its power series.
const MWRIGHT_SERIES: f64 = 0.5;

/// `ln M_nu(x)` for `x > 0`, where `M_nu(x) / tau` is the density of the
/// inverse stable clock at `u = x tau`:
///
/// ```text
/// M_nu(x) = sum_n (-x)^n / (n! Gamma(1 - nu - nu n))
///         = x^(nu/(1-nu)) / (pi (1-nu)) int_0^pi A e^{-A x^(1/(1-nu))} dphi
/// ```
pub fn ln_mwright(x: f64, nu: f64) -> f64 {
    if x < MWRIGHT_SERIES {
        let mut sum = 0.0;
        let mut power = 1.0;
        // x^n / n! outruns 1/Gamma(1 - nu - nu n) well before 60 terms
        for n in 0..60 {
            sum += power * rgamma(1.0 - nu - nu * n as f64);
            power *= -x / (n as f64 + 1.0);
        }
        return sum.ln();
    }
    let w = (x.ln() / (1.0 - nu)).exp();
    ln_kanter_integral(w, nu) - PI.ln() - (1.0 - nu).ln() + x.ln() * nu / (1.0 - nu)
}

/// A clock whose law has a density on `(0, inf)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClockDensity {
    /// Inverse `nu`-stable subordinator at time `t`: `T = (t / S_1)^nu`.
    InverseStable { t: f64, nu: f64 },
    /// Tempered `nu`-stable subordinator at time `t` with tempering `mu`.
    TemperedStable { t: f64, nu: f64, mu: f64 },
}

impl ClockDensity {
    pub fn inverse_stable(t: f64, nu: f64) -> Result<Self> {
        check(t, nu)?;
        Ok(ClockDensity::InverseStable { t, nu })
    }

    pub fn tempered_stable(t: f64, nu: f64, mu: f64) -> Result<Self> {
        check(t, nu)?;
        if !(mu.is_finite() && mu >= 0.0) {
            return Err(invalid(
                "mu",
                format!("must be finite and non-negative, got {mu}"),
            ));
        }
        Ok(ClockDensity::TemperedStable { t, nu, mu })
    }

    /// `ln f(u)` for `u > 0`.
    pub fn ln_density(&self, u: f64) -> f64 {
        if u <= 0.0 {
            return f64::NEG_INFINITY;
        }
        match *self {
            ClockDensity::InverseStable { t, nu } => {
                let tau = t.powf(nu);
                ln_mwright(u / tau, nu) - tau.ln()
            }
            ClockDensity::TemperedStable { t, nu, mu } => {
                // T = t^(1/nu) S tilted by e^{-mu T + mu^nu t}, and S has
                // density nu y^(-nu-1) M_nu(y^-nu)
                let ln_scale = t.ln() / nu;
                let ln_y = u.ln() - ln_scale;
                let ln_g = nu.ln() - (nu + 1.0) * ln_y + ln_mwright((-nu * ln_y).exp(), nu);
                ln_g - ln_scale - mu * u + mu.powf(nu) * t
            }
        }
    }

    pub fn density(&self, u: f64) -> f64 {
        self.ln_density(u).exp()
    }

    /// Breakpoints covering all but about `e^{-40}` of the mass, in
    /// increasing order starting at zero.
    pub fn cuts(&self) -> Vec<f64> {
        let mut cuts = vec![0.0];
        match *self {
            ClockDensity::InverseStable { t, nu } => {
                // P(T > u) decays like exp(-A(0) (u/tau)^(1/(1-nu)))
                let tau = t.powf(nu);
                let top = tau * (45.0 / kanter_a0(nu)).powf(1.0 - nu);
                let mut x = tau / 16.0;
                while x < top {
                    cuts.push(x);
                    x *= 2.0;
                }
                cuts.push(top);
            }
            ClockDensity::TemperedStable { t, nu, mu } => {
                let scale = t.powf(1.0 / nu);
                // lower tail: S is tiny with probability about exp(-A(0) y^(-nu/(1-nu)))
                let bottom = scale * (kanter_a0(nu) / 45.0).powf((1.0 - nu) / nu);
                // upper tail: x^(-1-nu) e^{-mu x}
                let heavy = scale * 1e6f64.powf(1.0 / nu);
                let top = if mu > 0.0 {
                    (scale * 4.0).max((45.0 + mu.powf(nu) * t) / mu).min(heavy)
                } else {
                    heavy
                };
                let mut x = bottom;
                while x < top {
                    cuts.push(x);
                    x *= 2.0;
                }
                cuts.push(top);
            }
        }
        cuts
    }
}

/// Step of the tanh-sinh rule in [`ClockDensity::rule`].
const RULE_STEP: f64 = 1.0 / 32.0;
/// Half-width of the truncated tanh-sinh parameter range.
const RULE_SPAN: f64 = 3.2;

/// A quadrature node carrying `weight * density` for the fine rule and for
/// the rule with twice the step (zero on the odd nodes).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClockNode {
    pub u: f64,
    pub fine: f64,
    pub coarse: f64,
}

/// Fixed quadrature nodes for expectations under a clock law.
#[derive(Debug, Clone, PartialEq)]
pub struct ClockRule {
    pub nodes: Vec<ClockNode>,
}

impl ClockRule {
    /// `E[g(T)]` and an error estimate from the two step sizes.
    pub fn expect(&self, g: impl Fn(f64) -> f64) -> (f64, f64) {
        let mut fine = 0.0;
        let mut coarse = 0.0;
        for node in &self.nodes {
            let v = g(node.u);
            fine += node.fine * v;
            coarse += node.coarse * v;
        }
        // halving the step roughly squares the relative error
        let scale = fine.abs().max(f64::MIN_POSITIVE);
        let rel = (fine - coarse).abs() / scale;
        (fine, scale * rel.min(1.0).powi(2) + 1e-13 * scale)
    }
}

/// Rules recently built by [`ClockDensity::shared_rule`].
static RULES: Mutex<Vec<(ClockDensity, Arc<ClockRule>)>> = Mutex::new(Vec::new());
const RULE_CACHE: usize = 8;

impl ClockDensity {
    /// [`ClockDensity::rule`], reusing the result for repeated clocks.
    pub fn shared_rule(&self) -> Arc<ClockRule> {
        if let Some((_, r)) = RULES
            .lock()
            .expect("rule cache")
            .iter()
            .find(|(c, _)| c == self)
        {
            return Arc::clone(r);
        }
        let rule = Arc::new(self.rule());
        let mut cache = RULES.lock().expect("rule cache");
        if cache.len() == RULE_CACHE {
            cache.remove(0);
        }
        cache.push((*self, Arc::clone(&rule)));
        rule
    }

    /// Tanh-sinh nodes on each interval of [`ClockDensity::cuts`].
    pub fn rule(&self) -> ClockRule {
        let cuts = self.cuts();
        let half = (RULE_SPAN / RULE_STEP).round() as i64;
        let mut nodes = Vec::new();
        for c in cuts.windows(2) {
            let rad = 0.5 * (c[1] - c[0]);
            for k in -half..=half {
                let s = k as f64 * RULE_STEP;
                let arg = 0.5 * PI * s.sinh();
                // distance to the nearer endpoint, kept exact near it
                let gap = 1.0 / (arg.abs().exp() * arg.abs().cosh());
                let u = if s < 0.0 {
                    c[0] + rad * gap
                } else {
                    c[1] - rad * gap
                };
                let w = RULE_STEP * 0.5 * PI * s.cosh() / arg.cosh().powi(2) * rad;
                let f = self.density(u);
                if !(f.is_finite() && w > 0.0) || u <= c[0] || u >= c[1] {
                    continue;
                }
                nodes.push(ClockNode {
                    u,
                    fine: w * f,
                    coarse: if k % 2 == 0 { 2.0 * w * f } else { 0.0 },
                });
            }
        }
        ClockRule { nodes }
    }
}

fn check(t: f64, nu: f64) -> Result<()> {
    if !(t.is_finite() && t > 0.0) {
        return Err(invalid(
            "t",
            format!("must be finite and positive, got {t}"),
        ));
    }
    if !(nu > 0.0 && nu < 1.0) {
        return Err(invalid("nu", format!("must lie in (0, 1), got {nu}")));
    }
    Ok(())
}
