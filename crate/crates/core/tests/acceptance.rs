//! End-to-end acceptance checks. Prints one `criterion N: PASS|FAIL` line
//! per check with the measured error, and exits nonzero if any fails.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use wasserstein_hj::classical::ClosedForm;
use wasserstein_hj::viscosity::uniform_grid;
use wasserstein_hj::*;

type Outcome = (bool, String);

fn rng() -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(0)
}

fn random_measure(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Measure {
    let points = (0..n)
        .map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let weights = (0..n).map(|_| rng.gen_range(0.1..1.0)).collect();
    Measure::new(points, weights).unwrap()
}

fn random_uniform(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Measure {
    Measure::uniform(
        (0..n)
            .map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect(),
    )
    .unwrap()
}

fn ex33() -> Spec {
    Spec::new(2.0, ScalarField::Zero, ScalarField::Quadratic { c: 0.5 }).unwrap()
}

fn ex34() -> Spec {
    Spec::new(3.0, ScalarField::Zero, ScalarField::p_power(3.0)).unwrap()
}

fn closed_u(spec: &Spec) -> impl Fn(&Measure, f64) -> Result<f64> + Sync + '_ {
    move |m, s| {
        let cf = ClosedForm::from_spec(spec, s)?;
        m.points().zip(m.weights()).map(|(x, &w)| Ok(w * cf.u(x, s)?)).sum()
    }
}

fn criterion_01_example_quadratic() -> Outcome {
    let spec = ex33();
    let mut worst = 0.0f64;
    for x in [0.5, 1.0, 2.0] {
        for t in [0.3, 0.6, 1.0] {
            let r = minimize_classical(&[x], t, &spec, 400, None).unwrap();
            let exact = -t.tan() * x * x / 2.0;
            worst = worst.max((r.value - exact).abs());
        }
    }
    (worst <= 1e-4, format!("max |u - u_exact| = {worst:.3e}"))
}

fn criterion_02_riccati_and_p3() -> Outcome {
    let sol = solve_a_ode(2.0, 1.0, 100_000);
    let a_err = (sol.values.last().unwrap() + 1.0f64.tan()).abs();
    let blow = solve_a_ode(2.0f64, 2.0, 200_000).t_p_estimate.unwrap();
    let blow_err = (blow - t_p(2.0)).abs();
    let t = 0.4;
    let a = solve_a_ode(3.0, t, 100_000).values.last().copied().unwrap();
    let mut p3_err = 0.0f64;
    for x in [0.5f64, 1.0, 1.5] {
        let r = minimize_classical(&[x], t, &ex34(), 400, None).unwrap();
        p3_err = p3_err.max((r.value - a * x * x * x.abs() / 3.0).abs());
    }
    (
        a_err <= 1e-8 && blow_err <= 1e-3 && p3_err <= 5e-4,
        format!("a(1) err = {a_err:.3e}, blowup err = {blow_err:.3e}, p=3 err = {p3_err:.3e}"),
    )
}

fn criterion_03_linear_reduction() -> Outcome {
    let mut rng = rng();
    let linear = Spec::new(2.0, ScalarField::Linear { c: vec![0.7, -0.4] }, ScalarField::Zero).unwrap();
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let mu = random_measure(&mut rng, 10, 2);
        for (spec, t) in [(ex33(), 0.6), (linear.clone(), 0.8)] {
            let joint = minimize_generalized(&mu, t, &spec, 200).unwrap().value;
            let reduced = reduce_linear(&mu, t, &spec, 200).unwrap();
            worst = worst.max((joint - reduced).abs());
        }
    }
    (worst <= 2e-3, format!("max |U - reduced| = {worst:.3e} over 40 solves"))
}

fn criterion_04_hopf_lax() -> Outcome {
    let mut rng = rng();
    let c = vec![0.8, -0.3];
    let (mut closed, mut direct) = (0.0f64, 0.0f64);
    for p in [1.5, 2.0, 3.0] {
        let q = p / (p - 1.0);
        let spec = Spec::new(p, ScalarField::Linear { c: c.clone() }, ScalarField::Zero).unwrap();
        let mu = random_measure(&mut rng, 6, 2);
        let t = 0.7;
        let hl = wasserstein_hopf_lax(&mu, t, spec.initial_functional(), &spec).unwrap();
        let cnorm = (c[0] * c[0] + c[1] * c[1]).sqrt();
        let mean = mu.mean();
        let exact = c[0] * mean[0] + c[1] * mean[1] - t * cnorm.powf(q) / q;
        closed = closed.max((hl.value - exact).abs());
        let u = minimize_generalized(&mu, t, &spec, 200).unwrap().value;
        direct = direct.max((hl.value - u).abs());
    }
    (
        closed <= 1e-5 && direct <= 1e-4,
        format!("vs closed form {closed:.3e}, vs path optimizer {direct:.3e}"),
    )
}

fn criterion_05_dynamic_programming() -> Outcome {
    let mut rng = rng();
    let mu = random_measure(&mut rng, 10, 1);
    let r = dp_check(&mu, 0.6, 0.3, &ex33(), 400).unwrap();
    (r.residual.abs() <= 5e-3, format!("residual = {:.3e}", r.residual))
}

fn criterion_06_optimal_transport() -> Outcome {
    let mut rng = rng();
    let mut exact = 0.0f64;
    for p in [1.5, 2.0, 3.0] {
        for _ in 0..200 {
            let d = rng.gen_range(1..=3);
            let mu = random_uniform(&mut rng, 5, d);
            let nu = random_uniform(&mut rng, 5, d);
            let lp = wasserstein_distance(&mu, &nu, p).unwrap();
            let bf = brute_force_wasserstein(&mu, &nu, p).unwrap();
            exact = exact.max((lp - bf).abs());
        }
    }
    let (mut asym, mut triangle) = (0.0f64, f64::NEG_INFINITY);
    for i in 0..200 {
        let p = [1.5, 2.0, 3.0][i % 3];
        let a = random_measure(&mut rng, 4, 2);
        let b = random_measure(&mut rng, 5, 2);
        let c = random_measure(&mut rng, 3, 2);
        let ab = wasserstein_distance(&a, &b, p).unwrap();
        let ba = wasserstein_distance(&b, &a, p).unwrap();
        let bc = wasserstein_distance(&b, &c, p).unwrap();
        let ac = wasserstein_distance(&a, &c, p).unwrap();
        asym = asym.max((ab - ba).abs());
        triangle = triangle.max(ac - ab - bc);
    }
    (
        exact <= 1e-8 && asym <= 1e-10 && triangle <= 1e-10,
        format!("vs brute force {exact:.3e}, asymmetry {asym:.3e}, triangle excess {triangle:.3e}"),
    )
}

fn criterion_07_poincare() -> Outcome {
    let mut rng = rng();
    let mut excess = f64::NEG_INFINITY;
    for i in 0..100 {
        let p = [1.5, 2.0, 3.0][i % 3];
        let mu = random_measure(&mut rng, 5, 2);
        let paths = mu
            .points()
            .map(|x| {
                let a: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-2.0..2.0));
                Path::from_fn(0.0, 1.0, 100, |s| {
                    vec![
                        x[0] + a[0] * (s - 1.0) + a[1] * (3.0 * s).sin(),
                        x[1] + a[2] * (s - 1.0).powi(2) + a[3] * s * s,
                    ]
                })
                .unwrap()
            })
            .collect();
        let sigma = Ensemble::new(mu.weights().to_vec(), paths).unwrap();
        let (lhs, rhs) = poincare_check(&sigma, p).unwrap();
        excess = excess.max(lhs - rhs);
    }
    let h = horizon(1.0, 2.0);
    (
        excess <= 1e-6 && h == 0.5,
        format!("max lhs - rhs = {excess:.3e}, horizon(1, 2) = {h}"),
    )
}

fn criterion_08_euler_poisson() -> Outcome {
    let mut rng = rng();
    let spec = ex33();
    let mu = random_measure(&mut rng, 10, 1);
    let t = 0.6;
    let mut worst = Vec::new();
    for n in [100, 200, 400] {
        let sigma = Ensemble::from_flow(&mu, t, n, |x, s| flow_map(x, t, s, &spec)).unwrap();
        let r = euler_poisson_residual(&sigma, &spec, &TestFunction::default_set(&sigma)).unwrap();
        worst.push(r.continuity.max(r.momentum));
    }
    let ratios = [worst[1] / worst[0], worst[2] / worst[1]];
    (
        worst[2] <= 1e-2 && ratios.iter().all(|&r| r <= 0.6),
        format!(
            "residual at N=400 {:.3e}, refinement ratios {:.3} {:.3}",
            worst[2], ratios[0], ratios[1]
        ),
    )
}

fn criterion_09_optimality() -> Outcome {
    let mut rng = rng();
    let mu = random_measure(&mut rng, 10, 1);
    let t = 0.6;
    let spec = ex33();
    let sigma = Ensemble::from_flow(&mu, t, 400, |x, s| flow_map(x, t, s, &spec)).unwrap();
    let e33 = optimality_condition_check(&sigma, &spec, |x, s| closed_form_u(x, s, &spec)).unwrap();

    let p3 = ex34();
    let t = 0.4;
    let cf = ClosedForm::from_spec(&p3, t).unwrap();
    let sigma = Ensemble::from_flow(&mu, t, 400, |x, s| cf.flow_map(x, t, s)).unwrap();
    let e34 = optimality_condition_check(&sigma, &p3, |x, s| cf.u(x, s)).unwrap();

    let linear = Spec::new(2.0, ScalarField::Linear { c: vec![0.5] }, ScalarField::Zero).unwrap();
    let sigma = minimize_generalized(&mu, 0.8, &linear, 200).unwrap().path;
    let bm = boundary_momentum_check(&sigma, &linear).unwrap();
    (
        e33 <= 1e-6 && e34 <= 5e-3 && bm <= 1e-5,
        format!("quadratic {e33:.3e}, p=3 {e34:.3e}, boundary momentum {bm:.3e}"),
    )
}

fn criterion_10_viscosity() -> Outcome {
    let mut rng = rng();
    let spec = ex33();
    let mu = random_measure(&mut rng, 5, 1);
    let t0 = 0.6;
    let cf = ClosedForm::from_spec(&spec, t0).unwrap();
    let xi = mu
        .points()
        .map(|x| cf.grad_u(x, t0))
        .collect::<Result<Vec<_>>>()
        .unwrap();
    let a: f64 = mu
        .points()
        .zip(mu.weights())
        .map(|(x, &w)| w * cf.u_t(x, t0).unwrap())
        .sum();
    let cand = TestCotangent::new(&mu, xi, a).unwrap();
    let dirs = direction_family(&mu, &cand, 2.0, 1.0).unwrap();
    let u = closed_u(&spec);
    let hs = [0.05, 0.025, 0.0125];

    let sub = subsolution_probe(&u, &mu, t0, &cand, &dirs, 0.01, &spec).unwrap();
    let sup = supersolution_probe(&u, &mu, t0, &cand, &hs, &spec, 400).unwrap();
    let up = TestCotangent {
        a: a + 0.1,
        ..cand.clone()
    };
    let down = TestCotangent {
        a: a - 0.1,
        ..cand.clone()
    };
    let sub_bad = subsolution_probe(&u, &mu, t0, &up, &dirs, 0.01, &spec)
        .unwrap()
        .max_violation;
    let sup_bad = -supersolution_probe(&u, &mu, t0, &down, &hs, &spec, 400)
        .unwrap()
        .extrapolated_gap;

    let pm = random_measure(&mut rng, 8, 2);
    let hje2 = hje_residual_wasserstein(&spec, &pm, 0.7).unwrap();
    let hje3 = hje_residual_wasserstein(&ex34(), &pm, 0.3).unwrap();

    let ok = sub.sup_inequality.abs() <= 1e-6
        && sup.extrapolated_gap.abs() <= 5e-3
        && sub_bad >= 0.05
        && sup_bad >= 0.05
        && hje2 <= 1e-8
        && hje3 <= 1e-6;
    (
        ok,
        format!(
            "sub {:.3e}, super {:.3e}, perturbed margins {sub_bad:.3} {sup_bad:.3}, hje {hje2:.3e} {hje3:.3e}",
            sub.sup_inequality, sup.extrapolated_gap
        ),
    )
}

fn criterion_11_legendre() -> Outcome {
    let grid = uniform_grid(20.0, 4000);
    let (mut err, mut fy) = (0.0f64, f64::NEG_INFINITY);
    for p in [1.5f64, 2.0, 3.0] {
        let q = p / (p - 1.0);
        let ell = move |w: f64| w.powf(p) / p;
        let l = legendre(ell, grid.clone()).unwrap();
        for z in [0.5, 1.0, 2.0] {
            let star = l.eval(z).unwrap();
            err = err.max((star - z.powf(q) / q).abs());
            // z·w ≤ ℓ(w) + ℓ*(z) for every grid w
            for &w in l.grid() {
                fy = fy.max(z * w - ell(w) - star);
            }
        }
    }
    (
        err <= 1e-6 && fy <= 1e-9,
        format!("max conjugate err {err:.3e}, max Fenchel-Young excess {fy:.3e}"),
    )
}

fn criterion_12_determinism() -> Outcome {
    let run = || {
        let mut rng = rng();
        let mu = random_measure(&mut rng, 10, 2);
        let r = minimize_generalized(&mu, 0.5, &ex33(), 100).unwrap();
        let dp = dp_check(&mu, 0.6, 0.3, &ex33(), 100).unwrap();
        (serde_json::to_string(&r).unwrap(), serde_json::to_string(&dp).unwrap())
    };
    let (a, b) = (run(), run());
    (a == b, format!("{} + {} bytes compared", a.0.len(), a.1.len()))
}

fn main() {
    let checks: [fn() -> Outcome; 12] = [
        criterion_01_example_quadratic,
        criterion_02_riccati_and_p3,
        criterion_03_linear_reduction,
        criterion_04_hopf_lax,
        criterion_05_dynamic_programming,
        criterion_06_optimal_transport,
        criterion_07_poincare,
        criterion_08_euler_poisson,
        criterion_09_optimality,
        criterion_10_viscosity,
        criterion_11_legendre,
        criterion_12_determinism,
    ];
    let mut failed = 0;
    for (i, check) in checks.iter().enumerate() {
        let (ok, detail) = std::panic::catch_unwind(check).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            (false, format!("panicked: {msg}"))
        });
        println!("criterion {}: {} {detail}", i + 1, if ok { "PASS" } else { "FAIL" });
        failed += usize::from(!ok);
    }
    if failed > 0 {
        println!("{failed} of {} criteria failed", checks.len());
        std::process::exit(1);
    }
}
