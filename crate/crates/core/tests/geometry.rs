use cyclic_wavemap::geometry::*;
use cyclic_wavemap::transform::ScalarFn;
use proptest::prelude::*;

#[test]
fn straight_lines_in_flat_chart() {
    let path = geodesic_full(&MetricChart::flat(3), &[1.0, 0.0, -1.0], &[0.5, 2.0, -1.0], 4.0, 1e-10).unwrap();
    for smp in &path.samples {
        let expect = [1.0 + 0.5 * smp.s, 2.0 * smp.s, -1.0 - smp.s];
        for (x, e) in smp.u.iter().zip(expect) {
            assert!((x - e).abs() < 1e-12);
        }
    }
}

#[test]
fn sinh_geodesic_on_the_diagonal() {
    let chart = MetricChart::example1(-1.0);
    let xi = unit_speed_factor(&chart, &[0.0, 0.0], &[1.0, 1.0]).unwrap();
    let path = geodesic_full(&chart, &[0.0, 0.0], &[xi, xi], 3.0, 1e-11).unwrap();
    assert!((path.speed - 1.0).abs() < 1e-14);
    for smp in &path.samples {
        let expect = smp.s.sinh() / 2f64.sqrt();
        assert!((smp.u[0] - expect).abs() < 1e-6);
        assert!((smp.u[1] - expect).abs() < 1e-6);
        // arclength identity ∫₀^u √h(r,r) dr = s/√2
        let lhs = (2f64.sqrt() * smp.u[0]).asinh() / 2f64.sqrt();
        assert!((lhs - smp.s / 2f64.sqrt()).abs() < 1e-8);
    }
}

#[test]
fn exponential_geodesic_in_half_plane() {
    let path = geodesic_full(&MetricChart::example2(2.0), &[0.0, 0.0], &[0.0, 1.0], 3.0, 1e-11).unwrap();
    for smp in &path.samples {
        assert!(smp.u[0].abs() < 1e-14);
        assert!((smp.u[1] - (smp.s.exp() - 1.0)).abs() < 1e-6 * smp.s.exp());
    }
}

#[test]
fn distinguished_line_coefficients() {
    let alpha = -0.7;
    let line = check_self_coherence(&MetricChart::example1(alpha), &[1.0, 1.0], (-3.0, 3.0), 64).unwrap();
    assert!(line.max_residual < 1e-10);
    for &(t, f) in &line.f_samples {
        assert!((f - 2.0 * alpha * t / (1.0 + 2.0 * t * t)).abs() < 1e-13);
    }
    let line = check_self_coherence(&MetricChart::example3(alpha), &[1.0, 0.0], (-3.0, 3.0), 64).unwrap();
    assert!(line.max_residual < 1e-12);
    for &(t, f) in &line.f_samples {
        assert!((f - alpha * t / (1.0 + t * t)).abs() < 1e-13);
    }
    let line = check_self_coherence(&MetricChart::example3(alpha), &[0.0, 1.0], (-3.0, 3.0), 64).unwrap();
    for &(t, f) in &line.f_samples {
        assert!((f - 2.0 * alpha * t.powi(3) / (1.0 + t.powi(4))).abs() < 1e-13);
    }
    let line = check_self_coherence(&MetricChart::flat(2), &[0.3, -2.0], (-1.0, 1.0), 16).unwrap();
    assert_eq!(line.max_residual, 0.0);
    assert!(line.f_samples.iter().all(|&(_, f)| f == 0.0));
}

#[test]
fn self_coherence_preconditions() {
    let chart = MetricChart::example1(-1.0);
    assert!(check_self_coherence(&chart, &[1.0, 1.0], (-1.0, 1.0), 8).is_err());
    assert!(check_self_coherence(&chart, &[0.0, 0.0], (-1.0, 1.0), 32).is_err());
    assert!(check_self_coherence(&MetricChart::example2(2.0), &[0.0, 1.0], (-2.0, 1.0), 32).is_err());
}

#[test]
fn perturbed_diagonal_keeps_its_geodesic() {
    let m = 3;
    let alpha = -1.5;
    let chart = MetricChart::diagonal_perturbed(PolyPower::radial(m, alpha), 0.6).unwrap();
    let a = vec![1.0; m];
    let line = check_self_coherence(&chart, &a, (-4.0, 4.0), 64).unwrap();
    assert!(line.max_residual < 1e-8);
    for &(t, f) in &line.f_samples {
        let expect = m as f64 * alpha * t / (1.0 + m as f64 * t * t);
        assert!((f - expect).abs() < 1e-12);
    }
    // off the diagonal the perturbation is felt
    let h = chart.h(&[1.0, 0.0, 0.0]).unwrap();
    assert!(h[(0, 1)].abs() > 1e-3);
    assert!(MetricChart::diagonal_perturbed(PolyPower::radial(m, alpha), 1.2).is_err());
}

/// The reduced scalar geodesic, repeated in every component, is a geodesic
/// of the full system.
#[test]
fn reduced_geodesic_lifts_to_full_geodesic() {
    let cases: Vec<(MetricChart, Vec<f64>)> = vec![
        (MetricChart::example1(-1.0), vec![1.0, 1.0]),
        (MetricChart::example3(0.8), vec![1.0, 0.0]),
        (MetricChart::diagonal_perturbed(PolyPower::radial(3, -0.5), 0.5).unwrap(), vec![1.0; 3]),
    ];
    for (chart, a) in cases {
        let m = a.len();
        let origin = vec![0.0; m];
        let xi = unit_speed_factor(&chart, &origin, &a).unwrap();
        let f = line_function(&chart, &a).unwrap();
        let reduced = geodesic_reduced(&f, 0.0, xi, 2.5, 1e-12).unwrap();
        let v0: Vec<f64> = a.iter().map(|x| x * xi).collect();
        let full = geodesic_full(&chart, &origin, &v0, 2.5, 1e-12).unwrap();
        for ((s, u, du), smp) in reduced.iter().zip(&full.samples) {
            assert!((s - smp.s).abs() < 1e-14);
            for k in 0..m {
                assert!((a[k] * u - smp.u[k]).abs() < 1e-8);
                assert!((a[k] * du - smp.du[k]).abs() < 1e-8);
            }
        }
    }
}

#[test]
fn reduced_geodesic_with_zero_f_is_linear() {
    let path = geodesic_reduced(&ScalarFn::zero(), 0.5, -2.0, 3.0, 1e-10).unwrap();
    for (s, u, du) in path {
        assert!((u - (0.5 - 2.0 * s)).abs() < 1e-12);
        assert_eq!(du, -2.0);
    }
    assert!(geodesic_reduced(&ScalarFn::zero(), 0.0, 0.0, 1.0, 1e-10).is_err());
}

#[test]
fn runaway_geodesic_is_truncated() {
    // u̇ = (1+u)², reaches infinity at s = 1
    let f = ScalarFn::on_line("-2/(1+u)", |u| -2.0 / (1.0 + u));
    let path = geodesic_reduced(&f, 0.0, 1.0, 2.0, 1e-10).unwrap();
    let last = path.last().unwrap();
    assert!(last.0 < 1.0 && last.1 > 1e5);
    let chart = MetricChart::example1(-3.0);
    let path = geodesic_full(&chart, &[0.0, 0.0], &[1.0, 1.0], 50.0, 1e-10).unwrap();
    assert!(path.truncated_at.is_some());
}

#[test]
fn path_csv_header() {
    let path = geodesic_full(&MetricChart::flat(2), &[0.0, 0.0], &[1.0, 0.0], 1.0, 1e-10).unwrap();
    let csv = path_csv(&path);
    assert!(csv.starts_with("s,u1,u2,du1,du2\n"));
    assert_eq!(csv.lines().count(), GEODESIC_SAMPLES + 1);
}

fn any_chart() -> impl Strategy<Value = MetricChart> {
    prop_oneof![
        (-2.0..2.0f64).prop_map(MetricChart::example1),
        (-2.0..2.0f64).prop_map(MetricChart::example3),
        (-2.0..2.0f64).prop_map(MetricChart::skew),
        (0.0..4.0f64).prop_map(MetricChart::example2),
        (-2.0..2.0f64, 0.0..0.9f64).prop_map(|(a, k)| MetricChart::diagonal_perturbed(PolyPower::radial(2, a), k).unwrap()),
    ]
}

/// Charts whose geodesics from a bounded start cannot reach the chart edge in
/// finite arclength.
fn complete_chart() -> impl Strategy<Value = MetricChart> {
    prop_oneof![
        (-1.0..2.0f64).prop_map(MetricChart::example1),
        (-1.0..2.0f64).prop_map(MetricChart::example3),
        (2.0..4.0f64).prop_map(MetricChart::example2),
        (-1.0..2.0f64, 0.0..0.9f64).prop_map(|(a, k)| MetricChart::diagonal_perturbed(PolyPower::radial(2, a), k).unwrap()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn christoffel_is_symmetric(chart in any_chart(), u in -1.5..1.5f64, v in -0.9..1.5f64) {
        let g = christoffel(&chart, &[u, v]).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    prop_assert!((g.get(i, j, k) - g.get(i, k, j)).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn analytic_partials_match_differences(chart in any_chart(), u in -1.5..1.5f64, v in -0.5..1.5f64) {
        let exact = chart.dh(&[u, v]).unwrap();
        let fd = chart.dh_fd(&[u, v]).unwrap();
        for (a, b) in exact.iter().zip(&fd) {
            let scale = a.amax().max(1.0);
            prop_assert!((a - b).amax() < 1e-8 * scale);
        }
    }

    #[test]
    fn metric_is_positive_definite(chart in any_chart(), u in -3.0..3.0f64, v in -0.9..3.0f64) {
        let h = chart.h(&[u, v]).unwrap();
        prop_assert!((&h - h.transpose()).amax() == 0.0);
        prop_assert!(h.cholesky().is_some());
    }

    #[test]
    fn geodesic_speed_is_conserved(chart in complete_chart(), dx in -1.0..1.0f64, dy in -1.0..1.0f64) {
        prop_assume!(dx.abs() + dy.abs() > 0.1);
        let path = geodesic_full(&chart, &[0.1, 0.2], &[dx, dy], 5.0, 1e-10).unwrap();
        prop_assume!(path.truncated_at.is_none());
        prop_assert!(path.max_speed_drift < 1e-6);
    }
}
