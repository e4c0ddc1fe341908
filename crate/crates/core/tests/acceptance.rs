//! Acceptance suite. Runs without the libtest harness and prints one
//! `[PASS]`/`[FAIL]` line per criterion.

use std::time::{Duration, Instant};

use altchain::cli::{validation_suite, Status, SuiteConfig};
use altchain::ldp::{self, MdFamily};
use altchain::oracle::uniformization;
use altchain::pgf::{self, TimeChange};
use altchain::pmf;
use altchain::specfun::{fox_wright, FoxWrightSpec};
use altchain::{RateQuad, TruncationPolicy};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_quad(r: &mut ChaCha8Rng, lo: f64, hi: f64) -> RateQuad {
    let mut x = || r.random_range(lo..hi);
    RateQuad::new(x(), x(), x(), x()).unwrap()
}

fn pol() -> TruncationPolicy {
    TruncationPolicy::default()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn cumulant_derivatives() -> Outcome {
    let mut r = rng(1);
    let h = 1e-4;
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let q = random_quad(&mut r, 0.1, 10.0);
        let (d1, d2) = q.cumulant_derivatives_at_origin();
        let fd1 = (q.cumulant(h) - q.cumulant(-h)) / (2.0 * h);
        let fd2 = (q.cumulant(h) - 2.0 * q.cumulant(0.0) + q.cumulant(-h)) / (h * h);
        if d2 <= 0.0 {
            return Err(format!("quad {i}: second derivative {d2} is not positive"));
        }
        // the first derivative can vanish; measure it against the curvature scale
        let e1 = (d1 - fd1).abs() / d1.abs().max(d2 * h);
        let e2 = rel(d2, fd2);
        worst = worst.max(e1).max(e2);
        if e1 > 1e-6 || e2 > 1e-6 {
            return Err(format!(
                "quad {i} {:?}: relative errors {e1:e}, {e2:e}",
                q.as_tuple()
            ));
        }
    }
    Ok(format!("worst relative error {worst:.1e}"))
}

fn pgf_normalization() -> Outcome {
    let mut r = rng(2);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let q = random_quad(&mut r, 0.1, 10.0);
        let t = r.random_range(0.0..5.0);
        let k = r.random_range(-5i64..=5);
        let nu = r.random_range(0.05..1.0);
        let mu = r.random_range(0.01..5.0);
        let clocks = [
            TimeChange::Identity,
            TimeChange::inverse_stable(nu).unwrap(),
            TimeChange::tempered_stable(nu, mu).unwrap(),
        ];
        for c in clocks {
            let v = pgf::pgf(&q, &c, 1.0, t, k, &pol())
                .map_err(|e| e.to_string())?
                .value;
            worst = worst.max((v - 1.0).abs());
            if (v - 1.0).abs() > 1e-12 {
                return Err(format!(
                    "{} at q={:?} t={t} k={k}: {v}",
                    c.name(),
                    q.as_tuple()
                ));
            }
        }
    }
    Ok(format!("worst |G(1) - 1| = {worst:.1e}"))
}

fn oracle_equivalence() -> Outcome {
    let mut r = rng(3);
    let mut worst: f64 = 0.0;
    let mut balanced = 0;
    let mut parities = [false; 4];
    for case in 0..20 {
        let k = [-1i64, 0, 1, 2][case % 4];
        let t = r.random_range(0.01..=3.0);
        let q = if case % 4 == 3 || case % 5 == 0 {
            // equal total rates on both parities
            let a1 = r.random_range(0.2..4.0);
            let a2 = r.random_range(0.2..4.0);
            let b1 = r.random_range(0.2f64.max(a1 + a2 - 4.8)..(a1 + a2 - 0.2).min(4.8));
            RateQuad::new(a1, a2, b1, a1 + a2 - b1).unwrap()
        } else {
            random_quad(&mut r, 0.2, 5.0)
        };
        if q.imbalance().abs() < pmf::BALANCE_THRESHOLD * q.sigma() {
            balanced += 1;
        }
        let table = uniformization(&q, k, t, -200, 200).map_err(|e| e.to_string())?;
        for n in -60..=60 {
            let p = pmf::pmf_base(&q, k, n, t, &pol())
                .map_err(|e| format!("case {case} n={n}: {e}"))?
                .p;
            let err = (p - table.get(n)).abs();
            worst = worst.max(err);
            if err > 1e-8 {
                return Err(format!(
                    "case {case} q={:?} k={k} n={n} t={t}: {p} vs {}",
                    q.as_tuple(),
                    table.get(n)
                ));
            }
            parities[((k & 1) * 2 + (n & 1)) as usize] = true;
        }
    }
    if balanced == 0 || balanced == 20 || parities.contains(&false) {
        return Err(format!(
            "coverage incomplete: {balanced} balanced cases, parities {parities:?}"
        ));
    }
    Ok(format!(
        "sup error {worst:.1e} over 20 cases ({balanced} balanced)"
    ))
}

fn reduction_identities() -> Outcome {
    let q = RateQuad::new(2.0, 1.0, 3.0, 1.0).unwrap();
    let mut worst: f64 = 0.0;
    for (k, n) in [(0i64, 0i64), (0, 1), (1, 0), (1, 1)] {
        for t in [0.5, 1.5] {
            let base = pmf::pmf_base(&q, k, n, t, &pol())
                .map_err(|e| e.to_string())?
                .p;
            let frac = pmf::pmf_fractional(&q, k, n, t, 1.0, &pol())
                .map_err(|e| e.to_string())?
                .p;
            let temp = pmf::pmf_tempered(&q, k, n, t, 1.0, 1.0, &pol())
                .map_err(|e| e.to_string())?
                .p;
            let e = (frac - base).abs().max((temp - base).abs());
            worst = worst.max(e);
            if e > 1e-8 {
                return Err(format!(
                    "k={k} n={n} t={t}: base {base}, fractional {frac}, tempered {temp}"
                ));
            }
        }
    }
    Ok(format!("worst difference {worst:.1e}"))
}

fn fox_wright_reductions() -> Outcome {
    let mut worst: f64 = 0.0;
    for z in [0.25f64, 1.0, 4.0, 9.0] {
        let s = z.sqrt();
        for (omega, want) in [(0.0, s * s.sinh()), (1.0, s.cosh()), (2.0, s.sinh() / s)] {
            let spec =
                FoxWrightSpec::new(vec![(3.0, 2.0), (1.0, 1.0)], vec![(omega, 2.0), (3.0, 2.0)])
                    .unwrap();
            let got = fox_wright(&spec, z, &pol())
                .map_err(|e| e.to_string())?
                .value;
            worst = worst.max(rel(got, want));
            if rel(got, want) > 1e-9 {
                return Err(format!("omega={omega} z={z}: {got} vs {want}"));
            }
        }
    }
    Ok(format!("worst relative error {worst:.1e}"))
}

/// First two derivatives of `g` at 1 by Richardson-extrapolated central differences.
fn derivatives_at_one(g: impl Fn(f64) -> f64) -> (f64, f64) {
    let d = |h: f64| {
        let (p, m, c) = (g(1.0 + h), g(1.0 - h), g(1.0));
        ((p - m) / (2.0 * h), (p - 2.0 * c + m) / (h * h))
    };
    let (a1, a2) = d(2e-3);
    let (b1, b2) = d(1e-3);
    ((4.0 * b1 - a1) / 3.0, (4.0 * b2 - a2) / 3.0)
}

fn moment_formulas() -> Outcome {
    let mut r = rng(6);
    let mut worst: f64 = 0.0;
    for i in 0..50 {
        let q = random_quad(&mut r, 0.2, 5.0);
        let t = r.random_range(0.1..3.0);
        let k = if i % 2 == 0 {
            2 * r.random_range(-3i64..=3)
        } else {
            2 * r.random_range(-3i64..=3) + 1
        };
        let (g1, g2) = derivatives_at_one(|z| pgf::pgf_base(&q, z, t, k).unwrap().value);
        let fd_mean = g1;
        let fd_var = g2 + g1 - g1 * g1;
        let mean = pgf::mean_base(&q, t, k).map_err(|e| e.to_string())?;
        let var = pgf::variance_base(&q, t, k).map_err(|e| e.to_string())?;
        let (e1, e2) = (rel(mean, fd_mean), rel(var, fd_var));
        worst = worst.max(e1).max(e2);
        if e1 > 1e-5 || e2 > 1e-5 {
            return Err(format!(
                "q={:?} t={t} k={k}: mean {mean} vs {fd_mean}, variance {var} vs {fd_var}",
                q.as_tuple()
            ));
        }
    }
    Ok(format!("worst relative error {worst:.1e}"))
}

fn monte_carlo() -> Outcome {
    let cfg = SuiteConfig {
        q: RateQuad::new(2.0, 1.0, 3.0, 1.0).unwrap(),
        t: 1.0,
        k: 0,
        nu: 0.5,
        mu: 1.0,
        seed: 42,
        paths: 100_000,
        workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    let checks = validation_suite(&cfg).map_err(|e| e.to_string())?;
    let wanted = [
        "mc-mean-base",
        "mc-variance-base",
        "mc-inverse-stable-laplace",
        "mc-tempered-clock-mean",
        "mc-tempered-clock-variance",
    ];
    let mut worst: f64 = 0.0;
    for name in wanted {
        let c = checks
            .iter()
            .find(|c| c.name == name)
            .ok_or_else(|| format!("{name} missing from the suite"))?;
        let se = c.std_error.unwrap_or(0.0);
        worst = worst.max((c.analytic - c.oracle).abs() / se);
        if c.status != Status::Pass {
            return Err(format!(
                "{name}: {} vs {} (SE {se:e})",
                c.analytic, c.oracle
            ));
        }
    }
    Ok(format!("all within 3 SE, worst {worst:.2} SE"))
}

fn rate_structure() -> Outcome {
    let q = RateQuad::new(2.0, 1.0, 3.0, 1.0).unwrap();
    let (d1, _) = q.cumulant_derivatives_at_origin();
    let at_zero = ldp::rate_base(&q, d1).map_err(|e| e.to_string())?.rate;
    if at_zero.abs() > 1e-10 {
        return Err(format!("rate at the drift is {at_zero}"));
    }
    let ys: Vec<f64> = (0..101).map(|i| d1 - 2.0 + 0.04 * i as f64).collect();
    let rates: Vec<f64> = ys
        .iter()
        .map(|&y| ldp::rate_base(&q, y).unwrap().rate)
        .collect();
    for i in 1..100 {
        if rates[i - 1] + rates[i + 1] - 2.0 * rates[i] < -1e-10 {
            return Err(format!("not convex at y={}", ys[i]));
        }
    }
    let mut worst: f64 = 0.0;
    for lam in [0.5, 1.0, 3.0] {
        let q = RateQuad::symmetric(lam).unwrap();
        for i in 0..101 {
            let y = -5.0 + 0.1 * i as f64;
            let want = y * (y / (2.0 * lam)).asinh() - (y * y + 4.0 * lam * lam).sqrt() + 2.0 * lam;
            let got = ldp::rate_base(&q, y).map_err(|e| e.to_string())?.rate;
            worst = worst.max((got - want).abs());
            if (got - want).abs() > 1e-8 {
                return Err(format!("lambda={lam} y={y}: {got} vs {want}"));
            }
        }
    }
    Ok(format!("analytic conjugate error {worst:.1e}"))
}

fn figure2() -> Outcome {
    let curves = ldp::figure2().map_err(|e| e.to_string())?;
    if curves.len() != 3 {
        return Err(format!("{} curves", curves.len()));
    }
    for (i, y) in ldp::figure2_grid().into_iter().enumerate() {
        let r: Vec<f64> = curves.iter().map(|c| c.points[i].rate).collect();
        if y == 0.0 {
            if r.iter().any(|v| v.abs() > 1e-12) {
                return Err(format!("rates at zero: {r:?}"));
            }
        } else if y.abs() <= 0.3 + 1e-12 && !(r[0] > r[1] && r[1] > r[2]) {
            return Err(format!("ordering fails at y={y}: {r:?}"));
        }
    }
    Ok(format!(
        "strict ordering on 0 < |y| <= 0.3, holds out to {}",
        ldp::ordering_radius(&curves)
    ))
}

fn moderate_deviations() -> Outcome {
    let mut worst: f64 = 0.0;
    for (q, nu, mu) in [
        (RateQuad::new(2.0, 1.0, 3.0, 1.0).unwrap(), 0.5, 1.0),
        (RateQuad::new(0.7, 2.2, 1.1, 0.4).unwrap(), 0.3, 2.5),
        (RateQuad::symmetric(1.0).unwrap(), 0.8, 0.6),
    ] {
        let (d1, d2) = q.cumulant_derivatives_at_origin();
        let c = ldp::md_curvature(&q, &MdFamily::Tempered { nu, mu })
            .map_err(|e| e.to_string())?
            .sigma_sq;
        let formula = nu * mu.powf(nu - 1.0) * d2 - nu * (nu - 1.0) * mu.powf(nu - 2.0) * d1 * d1;
        let h = 1e-4;
        let f = |g| ldp::lambda_tempered(g, &q, nu, mu);
        let fd = (f(h) - 2.0 * f(0.0) + f(-h)) / (h * h);
        worst = worst.max(rel(c, fd));
        if rel(c, formula) > 1e-14 || rel(c, fd) > 1e-6 {
            return Err(format!(
                "nu={nu} mu={mu}: {c} vs formula {formula}, differences {fd}"
            ));
        }
    }
    match ldp::md_curvature(
        &RateQuad::symmetric(1.0).unwrap(),
        &MdFamily::Fractional { nu: 0.5 },
    ) {
        Ok(_) => Err("fractional moderate deviations did not error".into()),
        Err(e) if e.to_string().contains("not interesting") => {
            Ok(format!("finite-difference error {worst:.1e}"))
        }
        Err(e) => Err(format!("unexpected message: {e}")),
    }
}

fn main() {
    type Criterion = (&'static str, fn() -> Outcome, Duration);
    let secs = Duration::from_secs;
    let criteria: [Criterion; 10] = [
        (
            "cumulant derivatives at the origin",
            cumulant_derivatives,
            secs(1),
        ),
        ("PGF normalization", pgf_normalization, secs(1)),
        ("pmf against uniformization", oracle_equivalence, secs(30)),
        ("nu = 1 reductions", reduction_identities, secs(10)),
        ("Fox-Wright reductions", fox_wright_reductions, secs(1)),
        ("moment formulas", moment_formulas, secs(5)),
        ("Monte Carlo consistency", monte_carlo, secs(120)),
        ("rate function structure", rate_structure, secs(5)),
        ("figure2 ordering", figure2, secs(10)),
        ("moderate deviation constants", moderate_deviations, secs(1)),
    ];
    let mut failed = 0;
    for (i, (name, run, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let out = run();
        let took = start.elapsed();
        let verdict = match out {
            Ok(detail) if took <= *budget => Ok(detail),
            Ok(detail) => Err(format!("{detail}; took {took:.2?}, budget {budget:?}")),
            Err(e) => Err(e),
        };
        match verdict {
            Ok(detail) => println!("[PASS] {:>2}. {name} ({took:.2?}): {detail}", i + 1),
            Err(e) => {
                failed += 1;
                println!("[FAIL] {:>2}. {name} ({took:.2?}): {e}", i + 1);
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
