//! Rate parameters of the alternating chain and its scalar cumulant machinery.
//!
//! The chain lives on the integers. From an even state it jumps up with rate
//! `alpha1` and down with rate `alpha2`; from an odd state the rates are
//! `beta1` and `beta2`.
//!
//! ```text
//! h~(z)   = (a1+a2-b1-b2)^2 z^2 + 4 (b1 z^2 + b2)(a1 z^2 + a2)
//! h(z)    = sqrt(h~(z)) / 2
//! h±(z)   = -sigma/2 ± h(z)/z
//! Lambda(g) = h+(e^g)
//! ```
//!
//! `Lambda` is evaluated through the identity
//!
//! ```text
//! S^2 - sigma^2/4 = a1 b1 (z^2 - 1) + a2 b2 (z^-2 - 1),    S = h(z)/z
//! ```
//!
//! which gives `Lambda(0) = 0` exactly and keeps full relative accuracy near
//! the origin.

use serde::Serialize;

use crate::error::{domain, invalid, Result};

/// Smallest accepted rate.
pub const MIN_RATE: f64 = 1e-12;
/// Largest accepted rate.
pub const MAX_RATE: f64 = 1e12;

/// Above this |gamma| the exponentials are factored out of the square root.
const LARGE_GAMMA: f64 = 300.0;

/// The four transition rates together with their sum `sigma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateQuad {
    alpha1: f64,
    alpha2: f64,
    beta1: f64,
    beta2: f64,
    sigma: f64,
}

/// Parity of a state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    pub fn of(k: i64) -> Self {
        if k.rem_euclid(2) == 0 {
            Parity::Even
        } else {
            Parity::Odd
        }
    }

    pub fn swap(self) -> Self {
        match self {
            Parity::Even => Parity::Odd,
            Parity::Odd => Parity::Even,
        }
    }
}

/// Which derivative of the cumulant a [`CumulantValue`] holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DerivativeOrder {
    Value,
    First,
    Second,
}

/// `Lambda`, `Lambda'` or `Lambda''` evaluated at `at`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CumulantValue {
    pub value: f64,
    pub order: DerivativeOrder,
    pub at: f64,
}

fn check_rate(name: &'static str, v: f64) -> Result<f64> {
    if !v.is_finite() {
        return Err(invalid(name, format!("must be finite, got {v}")));
    }
    if v <= MIN_RATE || v >= MAX_RATE {
        return Err(invalid(
            name,
            format!("must lie in ({MIN_RATE:e}, {MAX_RATE:e}), got {v}"),
        ));
    }
    Ok(v)
}

fn check_z(function: &'static str, z: f64) -> Result<()> {
    if z.is_finite() && z > 0.0 {
        Ok(())
    } else {
        Err(domain(
            function,
            format!("z must be positive and finite, got {z}"),
        ))
    }
}

impl RateQuad {
    pub fn new(alpha1: f64, alpha2: f64, beta1: f64, beta2: f64) -> Result<Self> {
        let alpha1 = check_rate("alpha1", alpha1)?;
        let alpha2 = check_rate("alpha2", alpha2)?;
        let beta1 = check_rate("beta1", beta1)?;
        let beta2 = check_rate("beta2", beta2)?;
        Ok(RateQuad {
            alpha1,
            alpha2,
            beta1,
            beta2,
            sigma: alpha1 + alpha2 + beta1 + beta2,
        })
    }

    /// All four rates equal to `lambda`: the symmetric random walk.
    pub fn symmetric(lambda: f64) -> Result<Self> {
        Self::new(lambda, lambda, lambda, lambda)
    }

    pub fn alpha1(&self) -> f64 {
        self.alpha1
    }
    pub fn alpha2(&self) -> f64 {
        self.alpha2
    }
    pub fn beta1(&self) -> f64 {
        self.beta1
    }
    pub fn beta2(&self) -> f64 {
        self.beta2
    }
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// `(alpha1, alpha2, beta1, beta2)`.
    pub fn as_tuple(&self) -> (f64, f64, f64, f64) {
        (self.alpha1, self.alpha2, self.beta1, self.beta2)
    }

    /// Exchange the even-state and odd-state rate pairs.
    pub fn swapped(&self) -> Self {
        RateQuad {
            alpha1: self.beta1,
            alpha2: self.beta2,
            beta1: self.alpha1,
            beta2: self.alpha2,
            sigma: self.sigma,
        }
    }

    /// `alpha1 + alpha2 - beta1 - beta2`.
    pub fn imbalance(&self) -> f64 {
        (self.alpha1 + self.alpha2) - (self.beta1 + self.beta2)
    }

    /// Total exit rate of a state with the given parity.
    pub fn exit_rate(&self, parity: Parity) -> f64 {
        match parity {
            Parity::Even => self.alpha1 + self.alpha2,
            Parity::Odd => self.beta1 + self.beta2,
        }
    }

    pub fn h_tilde(&self, z: f64) -> Result<f64> {
        check_z("h_tilde", z)?;
        let d = self.imbalance();
        let z2 = z * z;
        Ok(d * d * z2 + 4.0 * (self.beta1 * z2 + self.beta2) * (self.alpha1 * z2 + self.alpha2))
    }

    pub fn h(&self, z: f64) -> Result<f64> {
        check_z("h", z)?;
        Ok(z * self.s_of_z(z))
    }

    /// `h(z)/z`, computed without forming `h~` so that it stays finite for
    /// extreme `z`.
    fn s_of_z(&self, z: f64) -> f64 {
        let d = self.imbalance();
        ((0.5 * d).powi(2)
            + (self.beta1 * z + self.beta2 / z) * (self.alpha1 * z + self.alpha2 / z))
            .sqrt()
    }

    /// `(h-(z), h+(z))`.
    pub fn eigenvalues(&self, z: f64) -> Result<(f64, f64)> {
        check_z("eigenvalues", z)?;
        let s = self.s_of_z(z);
        let half = 0.5 * self.sigma;
        // a1 b1 (z^2 - 1) + a2 b2 (z^-2 - 1), factored to avoid cancellation near z = 1
        let num =
            (z - 1.0) * (z + 1.0) * (self.alpha1 * self.beta1 - self.alpha2 * self.beta2 / (z * z));
        Ok((-half - s, num / (s + half)))
    }

    /// The parity coefficient `c_k(z)`.
    pub fn parity_coefficient(&self, z: f64, parity: Parity) -> Result<f64> {
        check_z("parity_coefficient", z)?;
        let q = match parity {
            Parity::Even => *self,
            Parity::Odd => self.swapped(),
        };
        Ok(-0.5 * q.imbalance() * z + q.alpha1 * z * z + q.alpha2)
    }

    /// `S(gamma)^2 = a1 b1 e^{2g} + a2 b2 e^{-2g} + K`.
    fn constant_part(&self) -> f64 {
        let d = self.imbalance();
        0.25 * d * d + self.alpha1 * self.beta2 + self.alpha2 * self.beta1
    }

    /// `S(gamma)`; infinite when it leaves the double range.
    fn s_of_gamma(&self, gamma: f64) -> f64 {
        let ab = self.alpha1 * self.beta1;
        let ba = self.alpha2 * self.beta2;
        let k = self.constant_part();
        if gamma.abs() <= LARGE_GAMMA {
            (ab * (2.0 * gamma).exp() + ba * (-2.0 * gamma).exp() + k).sqrt()
        } else {
            let g = gamma.abs();
            let (lead, tail) = if gamma > 0.0 { (ab, ba) } else { (ba, ab) };
            let inner = (lead + k * (-2.0 * g).exp() + tail * (-4.0 * g).exp()).sqrt();
            g.exp() * inner
        }
    }

    /// The limiting cumulant `Lambda(gamma) = h+(e^gamma)`.
    pub fn cumulant(&self, gamma: f64) -> f64 {
        if gamma.is_nan() {
            return f64::NAN;
        }
        if gamma.is_infinite() {
            return f64::INFINITY;
        }
        let s = self.s_of_gamma(gamma);
        if gamma.abs() <= LARGE_GAMMA {
            // a1 b1 (e^{2g} - 1) + a2 b2 (e^{-2g} - 1), split into odd and even parts
            let (p, m) = (self.alpha1 * self.beta1, self.alpha2 * self.beta2);
            let num = (p - m) * (2.0 * gamma).sinh() + 2.0 * (p + m) * gamma.sinh().powi(2);
            num / (s + 0.5 * self.sigma)
        } else {
            s - 0.5 * self.sigma
        }
    }

    /// `Lambda'(gamma)`.
    pub fn cumulant_first(&self, gamma: f64) -> f64 {
        let s = self.s_of_gamma(gamma);
        let dq = self.dq(gamma);
        if s.is_infinite() {
            return gamma.signum() * f64::INFINITY;
        }
        dq / (2.0 * s)
    }

    /// `Lambda''(gamma)`.
    pub fn cumulant_second(&self, gamma: f64) -> f64 {
        let s = self.s_of_gamma(gamma);
        if s.is_infinite() {
            return f64::INFINITY;
        }
        let dq = self.dq(gamma);
        let d2q = 4.0 * self.alpha1 * self.beta1 * (2.0 * gamma).exp()
            + 4.0 * self.alpha2 * self.beta2 * (-2.0 * gamma).exp();
        d2q / (2.0 * s) - dq * dq / (4.0 * s * s * s)
    }

    fn dq(&self, gamma: f64) -> f64 {
        2.0 * self.alpha1 * self.beta1 * (2.0 * gamma).exp()
            - 2.0 * self.alpha2 * self.beta2 * (-2.0 * gamma).exp()
    }

    pub fn cumulant_value(&self, gamma: f64, order: DerivativeOrder) -> CumulantValue {
        let value = match order {
            DerivativeOrder::Value => self.cumulant(gamma),
            DerivativeOrder::First => self.cumulant_first(gamma),
            DerivativeOrder::Second => self.cumulant_second(gamma),
        };
        CumulantValue {
            value,
            order,
            at: gamma,
        }
    }

    /// `(Lambda'(0), Lambda''(0))` from the closed forms
    ///
    /// ```text
    /// Lambda'(0)  = 2 (a1 b1 - a2 b2) / sigma
    /// Lambda''(0) = 4 (a1 b1 + a2 b2) / sigma - 8 (a1 b1 - a2 b2)^2 / sigma^3
    /// ```
    pub fn cumulant_derivatives_at_origin(&self) -> (f64, f64) {
        let s = self.sigma;
        let p = self.alpha1 * self.beta1;
        let m = self.alpha2 * self.beta2;
        let first = 2.0 * (p - m) / s;
        let second = 4.0 * (p + m) / s - 8.0 * (p - m).powi(2) / (s * s * s);
        (first, second)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn q2131() -> RateQuad {
        RateQuad::new(2.0, 1.0, 3.0, 1.0).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn rejects_bad_rates() {
        for bad in [0.0, -1.0, f64::NAN, f64::INFINITY, 1e-13, 2e12] {
            let err = RateQuad::new(bad, 1.0, 1.0, 1.0).unwrap_err();
            assert!(err.to_string().contains("alpha1"), "{err}");
        }
        assert!(RateQuad::new(1.0, 1.0, 1.0, 0.0)
            .unwrap_err()
            .to_string()
            .contains("beta2"));
    }

    #[test]
    fn sigma_is_cached_sum() {
        let q = q2131();
        assert_eq!(q.sigma(), 7.0);
        assert_eq!(q.swapped().sigma(), 7.0);
    }

    #[test]
    fn h_tilde_values() {
        assert_eq!(
            RateQuad::symmetric(1.0).unwrap().h_tilde(1.0).unwrap(),
            16.0
        );
        let q = q2131();
        assert!(rel(q.h_tilde(1.0).unwrap(), 49.0) < 1e-15);
        // exact rational 270091/2500
        assert!(rel(q.h_tilde(1.3).unwrap(), 108.0364) < 1e-14);
        assert!(q.h_tilde(0.0).is_err());
        assert!(q.h_tilde(-1.0).is_err());
        assert!(q.h_tilde(f64::NAN).is_err());
    }

    #[test]
    fn h_values() {
        let q = q2131();
        assert!(rel(q.h(1.0).unwrap(), 3.5) < 1e-15);
        let z = 0.7;
        assert!(rel(q.h(z).unwrap(), 0.5 * q.h_tilde(z).unwrap().sqrt()) < 1e-14);
        let s = RateQuad::symmetric(1.7).unwrap();
        for z in [0.2, 1.0, 3.0] {
            assert!(rel(s.h(z).unwrap(), 1.7 * (z * z + 1.0)) < 1e-14);
        }
    }

    #[test]
    fn eigenvalues_at_one_and_against_matrix() {
        let q = q2131();
        let (lo, hi) = q.eigenvalues(1.0).unwrap();
        assert_eq!(hi, 0.0);
        assert!(rel(lo, -7.0) < 1e-15);

        // 2x2 matrix [[-(a1+a2), z a1 + a2/z], [z b1 + b2/z, -(b1+b2)]]
        let z = 1.5;
        let (a, b): (f64, f64) = (-3.0, -4.0);
        let off = (z * 2.0 + 1.0 / z) * (z * 3.0 + 1.0 / z);
        let tr = a + b;
        let det = a * b - off;
        let disc = (tr * tr - 4.0 * det).sqrt();
        let (lo, hi) = q.eigenvalues(z).unwrap();
        assert!(rel(lo, 0.5 * (tr - disc)) < 1e-13);
        assert!(rel(hi, 0.5 * (tr + disc)) < 1e-13);
    }

    #[test]
    fn parity_coefficient_values() {
        let q = q2131();
        assert!(
            rel(
                q.parity_coefficient(1.0, Parity::Even).unwrap(),
                q.h(1.0).unwrap()
            ) < 1e-15
        );
        assert!(
            rel(
                q.parity_coefficient(1.0, Parity::Odd).unwrap(),
                q.h(1.0).unwrap()
            ) < 1e-15
        );
        let s = RateQuad::symmetric(0.8).unwrap();
        assert!(
            rel(
                s.parity_coefficient(2.0, Parity::Even).unwrap(),
                s.h(2.0).unwrap()
            ) < 1e-15
        );
        for z in [0.3, 1.7] {
            assert_eq!(
                q.parity_coefficient(z, Parity::Odd).unwrap(),
                q.swapped().parity_coefficient(z, Parity::Even).unwrap()
            );
        }
    }

    #[test]
    fn cumulant_values() {
        let q = q2131();
        assert_eq!(q.cumulant(0.0), 0.0);
        let g: f64 = 0.3;
        let (_, hi) = q.eigenvalues(g.exp()).unwrap();
        // direct eigenvalue formula, no cancellation at this distance from 0
        let direct = -3.5 + q.h(g.exp()).unwrap() / g.exp();
        assert!(rel(q.cumulant(g), direct) < 1e-12);
        assert!(rel(q.cumulant(g), hi) < 1e-14);

        let lam = 1.3;
        let s = RateQuad::symmetric(lam).unwrap();
        for g in [-2.0f64, -0.01, 1e-6, 0.5, 4.0] {
            assert!(rel(s.cumulant(g), 4.0 * lam * (0.5 * g).sinh().powi(2)) < 1e-12);
        }
    }

    #[test]
    fn cumulant_large_arguments() {
        let q = q2131();
        for g in [299.0, 301.0, -299.0, -301.0] {
            let v = q.cumulant(g);
            assert!(v.is_finite() && v > 0.0);
        }
        let a = q.cumulant(299.999);
        let b = q.cumulant(300.001);
        assert!(b > a);
        assert!(rel(q.cumulant(301.0), (6.0f64).sqrt() * 301f64.exp()) < 1e-12);
        assert_eq!(q.cumulant(800.0), f64::INFINITY);
        assert_eq!(q.cumulant(-800.0), f64::INFINITY);
    }

    #[test]
    fn derivatives_at_origin() {
        let q = q2131();
        let (d1, d2) = q.cumulant_derivatives_at_origin();
        assert!(rel(d1, 10.0 / 7.0) < 1e-15);
        assert!(rel(d2, 4.0 - 200.0 / 343.0) < 1e-15);
        assert!(rel(q.cumulant_first(0.0), d1) < 1e-14);
        assert!(rel(q.cumulant_second(0.0), d2) < 1e-14);
        let (s1, s2) = RateQuad::symmetric(2.5)
            .unwrap()
            .cumulant_derivatives_at_origin();
        assert_eq!(s1, 0.0);
        assert!(rel(s2, 5.0) < 1e-15);
    }

    #[test]
    fn cumulant_value_orders() {
        let q = q2131();
        let v = q.cumulant_value(0.2, DerivativeOrder::First);
        assert_eq!(v.order, DerivativeOrder::First);
        assert_eq!(v.at, 0.2);
        assert_eq!(v.value, q.cumulant_first(0.2));
    }

    #[test]
    fn swap_is_involution() {
        let q = q2131();
        assert_eq!(q.swapped().as_tuple(), (3.0, 1.0, 2.0, 1.0));
        assert_eq!(q.swapped().swapped(), q);
        assert_eq!(Parity::Even.swap(), Parity::Odd);
        assert_eq!(Parity::of(-3), Parity::Odd);
        assert_eq!(Parity::of(-2), Parity::Even);
    }

    fn rate() -> impl Strategy<Value = f64> {
        0.05f64..20.0
    }

    fn quad() -> impl Strategy<Value = RateQuad> {
        (rate(), rate(), rate(), rate()).prop_map(|(a, b, c, d)| RateQuad::new(a, b, c, d).unwrap())
    }

    proptest! {
        #[test]
        fn lower_eigenvalue_negative(q in quad(), z in 1e-3f64..1e3) {
            let (lo, hi) = q.eigenvalues(z).unwrap();
            prop_assert!(lo < 0.0);
            prop_assert!(lo < hi);
        }

        #[test]
        fn cumulant_is_upper_eigenvalue(q in quad(), g in -5.0f64..5.0) {
            let (_, hi) = q.eigenvalues(g.exp()).unwrap();
            let lam = q.cumulant(g);
            prop_assert!((lam - hi).abs() <= 1e-12 * (1.0 + lam.abs()));
        }

        #[test]
        fn cumulant_convex(q in quad(), g1 in -4.0f64..4.0, g2 in -4.0f64..4.0, th in 0.0f64..1.0) {
            let mid = q.cumulant(th * g1 + (1.0 - th) * g2);
            let chord = th * q.cumulant(g1) + (1.0 - th) * q.cumulant(g2);
            prop_assert!(mid <= chord + 1e-12 * (1.0 + chord.abs()));
        }

        #[test]
        fn cumulant_swap_invariant(q in quad(), g in -3.0f64..3.0) {
            let s = q.swapped();
            let tol = 1e-12 * (1.0 + q.cumulant(g).abs());
            prop_assert!((q.cumulant(g) - s.cumulant(g)).abs() <= tol);
            let h = 1e-5;
            let fd = |r: &RateQuad| (r.cumulant(g + h) - r.cumulant(g - h)) / (2.0 * h);
            prop_assert!((fd(&q) - fd(&s)).abs() <= 1e-8 * (1.0 + fd(&q).abs()));
            let (a, b) = (q.cumulant_second(g), s.cumulant_second(g));
            prop_assert!((a - b).abs() <= 1e-12 * a.abs());
        }

        #[test]
        fn second_derivative_positive(q in quad()) {
            prop_assert!(q.cumulant_derivatives_at_origin().1 > 0.0);
        }

        #[test]
        fn analytic_derivatives_match_differences(q in quad(), g in -2.0f64..2.0) {
            let h = 1e-5;
            let fd1 = (q.cumulant(g + h) - q.cumulant(g - h)) / (2.0 * h);
            let d1 = q.cumulant_first(g);
            prop_assert!((fd1 - d1).abs() <= 1e-6 * (1.0 + d1.abs()));
            let h = 1e-4;
            let fd2 = (q.cumulant(g + h) - 2.0 * q.cumulant(g) + q.cumulant(g - h)) / (h * h);
            let d2 = q.cumulant_second(g);
            prop_assert!((fd2 - d2).abs() <= 1e-5 * (1.0 + d2.abs()));
        }
    }
}
