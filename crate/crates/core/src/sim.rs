//! Monte Carlo simulation of the chain and its random clocks.
//!
//! Every path owns the ChaCha8 stream numbered by its index under the
//! configured seed, and estimators reduce in path order, so results depend
//! only on `(seed, paths)` and never on the number of worker threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Uniform};
use rayon::prelude::*;
use serde::Serialize;

use crate::clock::kanter_ln_a;
use crate::error::{invalid, Result};
use crate::model::{Parity, RateQuad};
use crate::pgf::TimeChange;

/// Simulation settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimConfig {
    pub seed: u64,
    pub paths: u64,
    pub horizon: f64,
    pub workers: usize,
}

impl SimConfig {
    pub fn new(seed: u64, paths: u64, horizon: f64, workers: usize) -> Result<Self> {
        if paths == 0 {
            return Err(invalid("paths", "must be at least 1"));
        }
        if !(horizon.is_finite() && horizon >= 0.0) {
            return Err(invalid(
                "horizon",
                format!("must be finite and non-negative, got {horizon}"),
            ));
        }
        if workers == 0 {
            return Err(invalid("workers", "must be at least 1"));
        }
        Ok(SimConfig {
            seed,
            paths,
            horizon,
            workers,
        })
    }
}

/// A Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub paths_used: u64,
}

impl McEstimate {
    /// Sample mean and standard error of the mean.
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        let mean = pairwise_sum(xs) / n as f64;
        let std_error = if n > 1 {
            let dev: Vec<f64> = xs.iter().map(|x| (x - mean).powi(2)).collect();
            (pairwise_sum(&dev) / (n - 1) as f64 / n as f64).sqrt()
        } else {
            0.0
        };
        McEstimate {
            mean,
            std_error,
            paths_used: n as u64,
        }
    }

    /// Sample variance with a delta-method standard error.
    pub fn variance_of(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = pairwise_sum(xs) / n;
        let d2: Vec<f64> = xs.iter().map(|x| (x - mean).powi(2)).collect();
        let d4: Vec<f64> = d2.iter().map(|x| x * x).collect();
        let m2 = pairwise_sum(&d2) / n;
        let m4 = pairwise_sum(&d4) / n;
        let var = if n > 1.0 { m2 * n / (n - 1.0) } else { 0.0 };
        McEstimate {
            mean: var,
            std_error: ((m4 - m2 * m2).max(0.0) / n).sqrt(),
            paths_used: xs.len() as u64,
        }
    }

    /// `|mean - target|` in units of the standard error (infinite when the
    /// error is zero and the values differ).
    pub fn z_score(&self, target: f64) -> f64 {
        let d = (self.mean - target).abs();
        if d == 0.0 {
            0.0
        } else {
            d / self.std_error
        }
    }
}

/// Pairwise summation in index order.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 16 {
        return xs.iter().sum();
    }
    let (a, b) = xs.split_at(xs.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

/// The random stream of path `path` under `seed`.
pub fn path_rng(seed: u64, path: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path);
    rng
}

fn unit_exp(rng: &mut impl Rng) -> f64 {
    Exp1.sample(rng)
}

/// `X(t)` for the plain chain started at `k0` (exact jump-by-jump
/// simulation).
pub fn simulate_chain(k0: i64, t: f64, q: &RateQuad, rng: &mut impl Rng) -> i64 {
    let mut state = k0;
    let mut clock = 0.0;
    loop {
        let (up, down) = rates(q, state);
        clock += unit_exp(rng) / (up + down);
        if clock > t {
            return state;
        }
        state += if rng.random::<f64>() * (up + down) < up {
            1
        } else {
            -1
        };
    }
}

/// The visited states with their completed holding times up to `t`.
pub fn simulate_path(k0: i64, t: f64, q: &RateQuad, rng: &mut impl Rng) -> Vec<(i64, f64)> {
    let mut out = Vec::new();
    let mut state = k0;
    let mut clock = 0.0;
    loop {
        let (up, down) = rates(q, state);
        let hold = unit_exp(rng) / (up + down);
        clock += hold;
        if clock > t {
            return out;
        }
        out.push((state, hold));
        state += if rng.random::<f64>() * (up + down) < up {
            1
        } else {
            -1
        };
    }
}

fn rates(q: &RateQuad, state: i64) -> (f64, f64) {
    match Parity::of(state) {
        Parity::Even => (q.alpha1(), q.alpha2()),
        Parity::Odd => (q.beta1(), q.beta2()),
    }
}

/// One draw of `S^nu(1)`, the stable subordinator at time one
/// (`E[e^{-s S}] = e^{-s^nu}`), by the Chambers-Mallows-Stuck
/// transformation in Kanter's form `(A(phi) / E)^((1-nu)/nu)`.
pub fn sample_stable(nu: f64, rng: &mut impl Rng) -> f64 {
    let phi = loop {
        let u: f64 = Uniform::new(0.0, std::f64::consts::PI)
            .expect("valid range")
            .sample(rng);
        if u > 0.0 {
            break u;
        }
    };
    let e = unit_exp(rng);
    ((kanter_ln_a(phi, nu) - e.ln()) * (1.0 - nu) / nu).exp()
}

/// One draw of the inverse stable clock `T^nu(t) = (t / S^nu(1))^nu`.
pub fn sample_inverse_stable(nu: f64, t: f64, rng: &mut impl Rng) -> f64 {
    if t == 0.0 {
        return 0.0;
    }
    if nu == 1.0 {
        return t;
    }
    (t / sample_stable(nu, rng)).powf(nu)
}

/// One draw of the tempered stable subordinator at time `t`.
///
/// The horizon is cut into increments `d = min(t, ln 2 / mu^nu)`; on each,
/// a stable draw `d^(1/nu) S` is accepted with probability `e^{-mu x}`,
/// which is at least one half on average.
pub fn sample_tempered_stable(nu: f64, mu: f64, t: f64, rng: &mut impl Rng) -> f64 {
    if t == 0.0 {
        return 0.0;
    }
    if nu == 1.0 {
        return t;
    }
    let delta = if mu > 0.0 {
        t.min(std::f64::consts::LN_2 / mu.powf(nu))
    } else {
        t
    };
    let full = (t / delta).floor() as u64;
    let rest = t - full as f64 * delta;
    let mut total = 0.0;
    for d in std::iter::repeat_n(delta, full as usize).chain((rest > 0.0).then_some(rest)) {
        let scale = d.powf(1.0 / nu);
        total += loop {
            let x = scale * sample_stable(nu, rng);
            if mu == 0.0 || rng.random::<f64>() < (-mu * x).exp() {
                break x;
            }
        };
    }
    total
}

/// One draw of the clock at time `t`.
pub fn sample_clock(clock: &TimeChange, t: f64, rng: &mut impl Rng) -> f64 {
    match *clock {
        TimeChange::Identity => t,
        TimeChange::InverseStable { nu } => sample_inverse_stable(nu, t, rng),
        TimeChange::TemperedStable { nu, mu } => sample_tempered_stable(nu, mu, t, rng),
    }
}

/// `X(T(t))` with the clock drawn first and the chain run to that time.
pub fn simulate_time_changed(
    k0: i64,
    t: f64,
    q: &RateQuad,
    clock: &TimeChange,
    rng: &mut impl Rng,
) -> i64 {
    let s = sample_clock(clock, t, rng);
    simulate_chain(k0, s, q, rng)
}

/// `f` evaluated once per path, in path order.
pub fn mc_samples<F>(cfg: &SimConfig, f: F) -> Vec<f64>
where
    F: Fn(&mut ChaCha8Rng) -> f64 + Sync,
{
    let run = || {
        (0..cfg.paths)
            .into_par_iter()
            .map(|i| f(&mut path_rng(cfg.seed, i)))
            .collect::<Vec<f64>>()
    };
    match rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
    {
        Ok(pool) => pool.install(run),
        Err(_) => run(),
    }
}

/// Mean of `f` over the configured number of paths.
pub fn mc_estimate<F>(cfg: &SimConfig, f: F) -> McEstimate
where
    F: Fn(&mut ChaCha8Rng) -> f64 + Sync,
{
    McEstimate::from_samples(&mc_samples(cfg, f))
}

/// Estimate of `P(X(T(t)) = n | X(0) = k0)` at `t = cfg.horizon`.
pub fn mc_pmf(cfg: &SimConfig, clock: &TimeChange, q: &RateQuad, k0: i64, n: i64) -> McEstimate {
    let t = cfg.horizon;
    mc_estimate(cfg, |rng| {
        f64::from(u8::from(simulate_time_changed(k0, t, q, clock, rng) == n))
    })
}

/// Estimate of `E[X(T(t))]`.
pub fn mc_mean(cfg: &SimConfig, clock: &TimeChange, q: &RateQuad, k0: i64) -> McEstimate {
    let t = cfg.horizon;
    mc_estimate(cfg, |rng| {
        simulate_time_changed(k0, t, q, clock, rng) as f64
    })
}

/// Estimate of `Var[X(T(t))]`.
pub fn mc_variance(cfg: &SimConfig, clock: &TimeChange, q: &RateQuad, k0: i64) -> McEstimate {
    let t = cfg.horizon;
    McEstimate::variance_of(&mc_samples(cfg, |rng| {
        simulate_time_changed(k0, t, q, clock, rng) as f64
    }))
}

/// Estimate of `E[z^{X(T(t))}]`.
pub fn mc_pgf(cfg: &SimConfig, clock: &TimeChange, q: &RateQuad, k0: i64, z: f64) -> McEstimate {
    let t = cfg.horizon;
    mc_estimate(cfg, |rng| {
        z.powf(simulate_time_changed(k0, t, q, clock, rng) as f64)
    })
}
