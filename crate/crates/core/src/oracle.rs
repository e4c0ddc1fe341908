//! Uniformization reference solver for the plain chain.
//!
//! On the window `lo..=hi` the chain is killed when it tries to leave, so
//! the computed vector is a sub-probability that underestimates `p_{k,n}(t)`
//! by at most the escaped mass. With uniformization rate `L` (the largest
//! exit rate) and `P = I + G / L`,
//!
//! ```text
//! p(t) = sum_m e^{-L t} (L t)^m / m! * e_k P^m
//! ```
//!
//! Every term is non-negative, so there is no cancellation.

use crate::error::{invalid, Result};
use crate::model::{Parity, RateQuad};

/// Poisson weights beyond this are dropped.
const POISSON_TAIL: f64 = 1e-18;

/// Transition probabilities on a finite window.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleTable {
    pub lo: i64,
    /// `p[i]` approximates `p_{k, lo + i}(t)`.
    pub p: Vec<f64>,
    /// Mass that left the window or sits in the dropped Poisson tail.
    pub lost_mass: f64,
}

impl OracleTable {
    pub fn get(&self, n: i64) -> f64 {
        let i = n - self.lo;
        if i < 0 || i as usize >= self.p.len() {
            0.0
        } else {
            self.p[i as usize]
        }
    }
}

/// `p_{k,n}(t)` for `n` in `lo..=hi` by uniformization.
pub fn uniformization(q: &RateQuad, k: i64, t: f64, lo: i64, hi: i64) -> Result<OracleTable> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(invalid(
            "t",
            format!("must be finite and non-negative, got {t}"),
        ));
    }
    if !(lo <= k && k <= hi) {
        return Err(invalid(
            "window",
            format!("{lo}..={hi} does not contain the start state {k}"),
        ));
    }
    let size = (hi - lo + 1) as usize;
    let mut v = vec![0.0; size];
    v[(k - lo) as usize] = 1.0;
    if t == 0.0 {
        return Ok(OracleTable {
            lo,
            p: v,
            lost_mass: 0.0,
        });
    }
    let rate = q.exit_rate(Parity::Even).max(q.exit_rate(Parity::Odd));
    let lt = rate * t;
    // per-state (stay, up, down) probabilities of one uniformized step
    let step: Vec<(f64, f64, f64)> = (lo..=hi)
        .map(|n| {
            let (up, down) = match Parity::of(n) {
                Parity::Even => (q.alpha1(), q.alpha2()),
                Parity::Odd => (q.beta1(), q.beta2()),
            };
            (1.0 - (up + down) / rate, up / rate, down / rate)
        })
        .collect();

    let mut out = vec![0.0; size];
    let mut next = vec![0.0; size];
    let mut used = 0.0;
    let mut m = 0usize;
    loop {
        let ln_w = -lt + m as f64 * lt.ln() - libm::lgamma(m as f64 + 1.0);
        let w = ln_w.exp();
        for (o, x) in out.iter_mut().zip(&v) {
            *o += w * x;
        }
        used += w;
        if m as f64 > lt && 1.0 - used < POISSON_TAIL.max(4.0 * f64::EPSILON) {
            break;
        }
        // remaining Poisson mass is below w * (L t / (m+1)) / (1 - L t / (m+1))
        if m as f64 > 2.0 * lt && w * 2.0 < POISSON_TAIL {
            break;
        }
        next.iter_mut().for_each(|x| *x = 0.0);
        for i in 0..size {
            let x = v[i];
            if x == 0.0 {
                continue;
            }
            let (stay, up, down) = step[i];
            next[i] += x * stay;
            if i + 1 < size {
                next[i + 1] += x * up;
            }
            if i > 0 {
                next[i - 1] += x * down;
            }
        }
        std::mem::swap(&mut v, &mut next);
        m += 1;
    }
    let total: f64 = out.iter().sum();
    Ok(OracleTable {
        lo,
        p: out,
        lost_mass: (1.0 - total).max(0.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_values() {
        // expm of the truncated generator, computed independently
        let q = RateQuad::new(2.0, 1.0, 3.0, 1.0).unwrap();
        let table = uniformization(&q, 0, 0.5, -60, 60).unwrap();
        let want = [
            (-3, 0.004222845629484),
            (-1, 0.116023539280272),
            (0, 0.360914403405196),
            (1, 0.240294058730496),
            (3, 0.051270280820865),
        ];
        for (n, w) in want {
            assert!((table.get(n) - w).abs() < 1e-14, "n={n}: {}", table.get(n));
        }
        assert!(table.lost_mass < 1e-14);
    }

    #[test]
    fn time_zero_and_bad_windows() {
        let q = RateQuad::symmetric(1.0).unwrap();
        let table = uniformization(&q, 2, 0.0, -5, 5).unwrap();
        assert_eq!(table.get(2), 1.0);
        assert_eq!(table.get(3), 0.0);
        assert!(uniformization(&q, 9, 1.0, -5, 5).is_err());
        assert!(uniformization(&q, 0, -1.0, -5, 5).is_err());
    }

    #[test]
    fn narrow_window_loses_mass() {
        let q = RateQuad::symmetric(2.0).unwrap();
        let table = uniformization(&q, 0, 2.0, -2, 2).unwrap();
        assert!(table.lost_mass > 0.1);
        let sum: f64 = table.p.iter().sum();
        assert!((sum + table.lost_mass - 1.0).abs() < 1e-12);
    }
}
