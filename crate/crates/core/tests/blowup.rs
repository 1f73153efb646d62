use cyclic_wavemap::blowup::*;
use cyclic_wavemap::coeffs::{hill_potential, make_builtin, Builtin, PeriodicCoefficient};
use cyclic_wavemap::error::Error;
use cyclic_wavemap::floquet::{scan_instability, FundamentalPair, InstabilityInterval, Monodromy};
use cyclic_wavemap::transform::{build_transform, ScalarFn, TransformPair};
use proptest::prelude::*;
use std::sync::OnceLock;

struct Scenario {
    b: PeriodicCoefficient,
    intervals: Vec<InstabilityInterval>,
    tp: TransformPair,
}

fn scenario() -> &'static Scenario {
    static S: OnceLock<Scenario> = OnceLock::new();
    S.get_or_init(|| {
        let b = make_builtin(Builtin::SqrtSin, 0.5).unwrap();
        let pot = hill_potential(&b, 3).unwrap();
        let intervals = scan_instability(&pot, (0.1, 60.0), 4000, 1e-11).unwrap();
        let tp = build_transform(ScalarFn::example1(-1.0), 1e-12).unwrap();
        Scenario { b, intervals, tp }
    })
}

fn witnesses() -> Vec<f64> {
    scenario().intervals.iter().map(|i| i.witness_lambda).collect()
}

fn certify(delta: f64) -> BlowupCertificate {
    let sc = scenario();
    certify_blowup(&PlanSearch::new(3, witnesses()), &sc.tp, &sc.b, 3, delta).unwrap()
}

/// `W(k)` by repeated multiplication with the one-period matrix.
fn w_by_powers(m: &Monodromy, k: u32) -> f64 {
    let mat = [[m.b11, m.b12], [m.b21, m.b22]];
    let mut p = [[1.0, 0.0], [0.0, 1.0]];
    for _ in 0..k {
        let mut q = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                q[i][j] = p[i][0] * mat[0][j] + p[i][1] * mat[1][j];
            }
        }
        p = q;
    }
    p[1][0]
}

#[test]
fn certificate_for_the_conformal_example() {
    let sc = scenario();
    let cert = certify(1e-3);
    let plan = &cert.plan;
    assert!(cert.smallness <= 1e-3);
    assert!(cert.t_star.unwrap() <= plan.m as f64);
    // regression values
    assert_eq!(plan.m, 38);
    assert!((cert.t_star.unwrap() - 35.105294683540706).abs() < 1e-6);
    assert!((cert.endpoint - std::f64::consts::PI / 8f64.sqrt()).abs() < 1e-7);

    // closed-form v(M, 0) from the scanned monodromy
    let pair = FundamentalPair::new(&hill_potential(&sc.b, 3).unwrap(), plan.lambda, 1e-11).unwrap();
    let m = *pair.monodromy();
    let tr = m.b11 + m.b22;
    let mu = if tr > 0.0 { 0.5 * (tr + (tr * tr - 4.0).sqrt()) } else { 0.5 * (tr - (tr * tr - 4.0).sqrt()) };
    assert!((mu.abs() - cert.mu0).abs() < 1e-12 * cert.mu0);
    let big_m = plan.m as i32;
    let w_m = m.b21 * (mu.powi(big_m) - mu.powi(-big_m)) / (mu - 1.0 / mu);
    let g0 = sc.tp.g(plan.amplitude()).unwrap();
    let v_m = g0 + plan.a_sign * plan.amplitude() * w_m;
    assert!((cert.v_m.value() - v_m).abs() < 1e-8 * v_m.abs());
    assert!(v_m >= cert.endpoint);
    // growth lower bound
    let bound = m.b21.abs() / (mu.abs() - 1.0 / mu.abs()) * plan.amplitude() * (mu.abs().powi(big_m) - mu.abs().powi(-big_m));
    assert!((v_m - g0).abs() >= bound * (1.0 - 1e-8));

    // integer-time trajectory agrees with the matrix powers
    for &(t, v) in &cert.trajectory {
        if t.fract() == 0.0 && t <= cert.t_star.unwrap() {
            let expect = g0 + plan.a_sign * plan.amplitude() * w_by_powers(&m, t as u32);
            assert!((v - expect).abs() <= 1e-8 * (v - g0).abs().max(1e-300) + 1e-15, "t = {t}: {v} vs {expect}");
        }
    }

    // first crossing: below the endpoint before, at it after refinement
    let t_star = cert.t_star.unwrap();
    let v_at = |t: f64| {
        let (w, _) = pair.w(t).unwrap();
        g0 + plan.a_sign * plan.amplitude() * w * (sc.b.eval(t) / sc.b.eval(0.0)).powf(1.5)
    };
    assert!(v_at(t_star) >= cert.endpoint * (1.0 - 1e-9) - 1e-12);
    for &(t, v) in &cert.trajectory {
        if t < t_star - 1e-6 {
            assert!(v < cert.endpoint);
        }
    }

    let json = cert.to_json();
    for key in ["S", "M", "A", "lambda", "y", "mu0", "b21", "b_G", "t_star", "smallness", "trajectory"] {
        assert!(json.get(key).is_some(), "missing {key}");
    }
}

#[test]
fn smaller_delta_needs_larger_m() {
    let a = certify(1e-3);
    let b = certify(2e-3);
    let c = certify(1e-5);
    assert!(b.plan.m <= a.plan.m);
    assert!(c.plan.m > a.plan.m && c.smallness <= 1e-5);
    assert_eq!(c.plan.m, 56);
    assert!(c.t_star.is_some());
}

#[test]
fn zero_nonlinearity_is_not_applicable() {
    let sc = scenario();
    let tp = build_transform(ScalarFn::zero(), 1e-12).unwrap();
    let err = certify_blowup(&PlanSearch::new(3, witnesses()), &tp, &sc.b, 3, 1e-3).unwrap_err();
    assert!(matches!(err, Error::NotApplicable(_)));
}

#[test]
fn exhausted_search_reports_deficit() {
    let sc = scenario();
    let mut search = PlanSearch::new(3, witnesses());
    search.m_max = 10;
    let err = certify_blowup(&search, &sc.tp, &sc.b, 3, 1e-3).unwrap_err();
    match err {
        Error::Exhausted(msg) => assert!(msg.contains("growth")),
        e => panic!("unexpected {e}"),
    }
}

/// The rescaled norm against a direct evaluation on a large torus in x.
#[test]
fn rescaled_smallness_matches_full_grid() {
    let tp = build_transform(ScalarFn::example1(-1.0), 1e-12).unwrap();
    let plan = BlowupPlan::new(3.0, 2, 1.0, 9.0, 1).unwrap();
    let data = make_data(&plan, &tp);
    let grid = TorusGrid { dim: 1, length: 20.0, points: 2048 };
    let u0 = grid.sample(|x| data.u0(x));
    let u1 = grid.sample(|x| data.u1(x).unwrap());
    let full = sobolev_smallness(&u0, &u1, plan.sobolev_order, &grid).unwrap();
    let rescaled = plan_smallness(&plan, &tp).unwrap();
    assert!((full - rescaled).abs() < 1e-3 * full, "{full} vs {rescaled}");
}

#[test]
fn smallness_decreases_with_m() {
    let tp = build_transform(ScalarFn::example1(-1.0), 1e-12).unwrap();
    let values: Vec<f64> = (4..=7)
        .map(|m| plan_smallness(&BlowupPlan::new(3.0, m, 1.0, 9.0, 1).unwrap(), &tp).unwrap())
        .collect();
    assert!((values[0] - 0.8478649610194445).abs() < 1e-10);
    for w in values.windows(2) {
        assert!(w[1] < w[0]);
    }
}

#[test]
fn local_solution_matches_data_and_equation() {
    let sc = scenario();
    let lambda = witnesses()[0];
    let pot = hill_potential(&sc.b, 3).unwrap();
    let pair = FundamentalPair::new(&pot, lambda, 1e-10).unwrap();
    let plan = BlowupPlan::new(7.0, 6, 1.0, lambda, 3).unwrap();
    let sol = exact_local_solution(&plan, &sc.tp, &pair).unwrap();
    let data = make_data(&plan, &sc.tp);
    let origin = [0.0; 3];
    assert_eq!(sol.eval(0.0, &origin).unwrap(), sc.tp.g(data.u0(&origin)).unwrap());
    for x in [[0.0, 0.0, 0.0], [0.7, -1.1, 2.0], [5.0, 3.0, -4.0]] {
        // v_t(0) = u₁ exp(∫₀^{u₀} f)
        let expect = data.u1(&x).unwrap() * sc.tp.big_f(data.u0(&x)).unwrap();
        assert!((sol.eval_t(0.0, &x).unwrap() - expect).abs() < 1e-10 * plan.amplitude());
    }
    // linear equation residual by fourth-order central differences
    let h = 5e-3;
    let scale = plan.amplitude();
    for &t in &[0.3, 1.7, 4.2] {
        for x in [[0.2, 0.0, 0.1], [1.0, -2.0, 0.5]] {
            let v = |t: f64, x: &[f64]| (sol.eval(t, x).unwrap() - sol.g0()) / scale;
            let at = |k: f64| v(t + k * h, &x);
            let vtt = (-at(2.0) + 16.0 * at(1.0) - 30.0 * at(0.0) + 16.0 * at(-1.0) - at(-2.0)) / (12.0 * h * h);
            let vt = (-at(2.0) + 8.0 * at(1.0) - 8.0 * at(-1.0) + at(-2.0)) / (12.0 * h);
            let mut lap = 0.0;
            for k in 0..3 {
                let mut xp = x;
                let mut xm = x;
                xp[k] += h;
                xm[k] -= h;
                let mut xpp = xp;
                let mut xmm = xm;
                xpp[k] += h;
                xmm[k] -= h;
                lap += (-v(t, &xpp) + 16.0 * v(t, &xp) - 30.0 * v(t, &x) + 16.0 * v(t, &xm) - v(t, &xmm)) / (12.0 * h * h);
            }
            let (b, db, _) = sc.b.derivs(t);
            let res = vtt - 3.0 * db / b * vt - b * b * lap;
            let size = vtt.abs() + (b * b * lap).abs();
            assert!(res.abs() < 1e-6 * size.max(1.0), "residual {res} at t = {t}");
        }
    }
    assert!(sol.eval(6.5, &origin).is_err());
    assert!(sol.eval(1.0, &[15.0, 0.0, 0.0]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sobolev_norms_are_parseval_at_zero_and_grow_with_order(
        coeffs in proptest::collection::vec(-1.0..1.0f64, 4),
        length in 0.5..5.0f64,
    ) {
        let grid = TorusGrid { dim: 1, length, points: 64 };
        let u: Vec<f64> = (0..64).map(|j| {
            let x = 2.0 * std::f64::consts::PI * j as f64 / 64.0;
            coeffs[0] + coeffs[1] * x.cos() + coeffs[2] * (2.0 * x).sin() + coeffs[3] * (3.0 * x).cos()
        }).collect();
        let l2 = (u.iter().map(|v| v * v).sum::<f64>() * length / 64.0).sqrt();
        let s0 = sobolev_norm(&u, &grid, 0.0).unwrap();
        prop_assert!((s0 - l2).abs() <= 1e-12 * l2.max(1e-300));
        let s1 = sobolev_norm(&u, &grid, 1.0).unwrap();
        let s2 = sobolev_norm(&u, &grid, 2.0).unwrap();
        prop_assert!(s0 <= s1 * (1.0 + 1e-14) && s1 <= s2 * (1.0 + 1e-14));
    }

    #[test]
    fn cutoff_is_a_partition(r in 0.0..3.0f64) {
        let c = chi(r);
        prop_assert!((0.0..=1.0).contains(&c));
        if r <= 1.0 { prop_assert_eq!(c, 1.0); }
        if r >= 2.0 { prop_assert_eq!(c, 0.0); }
        // χ(r) + χ(3 - r) = 1 on the transition
        if (1.0..=2.0).contains(&r) { prop_assert!((c + chi(3.0 - r) - 1.0).abs() < 1e-15); }
    }
}
