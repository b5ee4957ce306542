use driftlab::experiments::{
    cov_error_poisson, mean_error, pathwise_utility_gap, table2a, value_function, ConvergenceReport,
};
use driftlab::mc::Runner;
use driftlab_core::filter::{mean_track, CovTrack, Regime};
use driftlab_core::rng::PathStreams;
use driftlab_core::simulate::{make_grid, simulate_path};
use driftlab_core::value::terminal_log_wealth;
use driftlab_core::{DateScheme, Model, ModelParams};

fn table1() -> Model {
    ModelParams::table1().validate().unwrap()
}

fn det(ns: &[usize]) -> Vec<DateScheme> {
    ns.iter().map(|&n| DateScheme::Deterministic { n }).collect()
}

fn value(model: &Model, regime: Regime, scheme: Option<&DateScheme>, step: f64) -> f64 {
    value_function(model, regime, scheme, 1.0, step, None, 0, &Runner::default()).unwrap().value
}

#[test]
fn full_information_value_closed_form() {
    // Q = 0; Σ_t and m_t of the scalar OU prior integrate in closed form.
    let (alpha, beta, delta, m0, s0, sr) = (3.0f64, 1.0f64, 0.05, 0.05, 0.2, 0.25);
    let s_inf = beta * beta / (2.0 * alpha);
    let int_sigma = s_inf + (s0 - s_inf) * (1.0 - (-2.0 * alpha).exp()) / (2.0 * alpha);
    let a = (m0 - delta) / alpha * (1.0 - (-alpha).exp());
    let int_m2 = delta * delta + 2.0 * delta * a + (m0 - delta).powi(2) * (1.0 - (-2.0 * alpha).exp()) / (2.0 * alpha);
    let expected = 0.5 * (int_sigma + int_m2) / (sr * sr);
    let v = value(&table1(), Regime::F, None, 1e-3);
    assert!((v - expected).abs() < 1e-9, "{v} vs {expected}");
}

#[test]
fn values_are_ordered_and_increase_with_n() {
    let m = table1();
    let rows = table2a(&m, &[10, 100, 1000, 10_000], 1.0, 1e-3).unwrap();
    let vals: Vec<f64> = rows.iter().map(|r| r.value).collect();
    let vf = value(&m, Regime::F, None, 1e-3);
    // R ≤ Z,10 ≤ Z,100 ≤ ... ≤ J ≤ F
    for w in vals.windows(2) {
        assert!(w[0] <= w[1], "{vals:?}");
    }
    assert!(*vals.last().unwrap() <= vf);
}

#[test]
fn quadrature_halving_is_stable() {
    let m = table1();
    let cases: [(Regime, Option<DateScheme>); 5] = [
        (Regime::R, None),
        (Regime::J, None),
        (Regime::F, None),
        (Regime::Z, Some(DateScheme::Deterministic { n: 10 })),
        (Regime::Z, Some(DateScheme::Deterministic { n: 100 })),
    ];
    for (regime, scheme) in cases {
        let a = value(&m, regime, scheme.as_ref(), 1e-3);
        let b = value(&m, regime, scheme.as_ref(), 5e-4);
        assert!((a - b).abs() < 1e-6, "{regime} {scheme:?}: {a} vs {b}");
    }
}

#[test]
fn deterministic_value_gap_constant_is_stable() {
    let m = table1();
    let vj = value(&m, Regime::J, None, 1e-3);
    let k: Vec<f64> = [1000usize, 10_000]
        .iter()
        .map(|&n| (vj - value(&m, Regime::Z, Some(&DateScheme::Deterministic { n }), 1e-3)) * n as f64)
        .collect();
    assert!(k.iter().all(|&x| x > 0.0));
    let ratio = k[0] / k[1];
    assert!((0.5..=1.5).contains(&ratio), "{k:?}");
}

#[test]
fn poisson_value_gap_within_root_lambda_bound() {
    let m = table1();
    let runner = Runner::default();
    let vj = value(&m, Regime::J, None, 1e-3);
    let scaled: Vec<f64> = [10.0, 100.0, 1000.0]
        .iter()
        .map(|&lambda| {
            let s = DateScheme::Poisson { lambda };
            let r = value_function(&m, Regime::Z, Some(&s), 1.0, 1e-3, Some(2000), 11, &runner).unwrap();
            (vj - r.value) * f64::sqrt(lambda)
        })
        .collect();
    // The gap decays at least like 1/√λ: the scaled gap is bounded by its
    // value at the smallest intensity.
    assert!(scaled.iter().all(|&k| k > 0.0 && k <= scaled[0] * 1.05), "{scaled:?}");
}

#[test]
fn z_without_dates_is_r_bitwise() {
    let m = table1();
    let scheme = DateScheme::Poisson { lambda: 5.0 };
    let grid = make_grid(&m, &scheme, &[], 1e-3).unwrap();
    assert!(grid.date_nodes().is_empty());
    let path = simulate_path(&m, &scheme, &grid, &mut PathStreams::new(9, 0)).unwrap();
    let z = CovTrack::for_scheme(&m, Regime::Z, &scheme, &grid).unwrap();
    let r = CovTrack::compute(&m, Regime::R, &grid, None).unwrap();
    let (mut mz, mut mr) = (Vec::new(), Vec::new());
    mean_track(&m, &z, &path, &mut mz).unwrap();
    mean_track(&m, &r, &path, &mut mr).unwrap();
    assert_eq!(mz, mr);
    let lz = terminal_log_wealth(&m, &path, &mz, 1.0);
    let lr = terminal_log_wealth(&m, &path, &mr, 1.0);
    assert_eq!((lz - lr).abs().to_bits(), 0.0f64.to_bits());
}

#[test]
fn mean_gap_without_opinions_is_r_vs_j_floor() {
    // Z on a date-free grid carries only return information, so its gap to
    // J is the (strictly positive) R-to-J gap on the same paths.
    let m = table1();
    let scheme = DateScheme::Poisson { lambda: 5.0 };
    let grid = make_grid(&m, &scheme, &[], 1e-3).unwrap();
    let z = CovTrack::for_scheme(&m, Regime::Z, &scheme, &grid).unwrap();
    let j = CovTrack::compute(&m, Regime::J, &grid, None).unwrap();
    let r = CovTrack::compute(&m, Regime::R, &grid, None).unwrap();
    let (mut a, mut b, mut c) = (Vec::new(), Vec::new(), Vec::new());
    let mut zj = 0.0;
    let mut rj = 0.0;
    for p in 0..200 {
        let path = simulate_path(&m, &scheme, &grid, &mut PathStreams::new(4, p)).unwrap();
        mean_track(&m, &z, &path, &mut a).unwrap();
        mean_track(&m, &j, &path, &mut b).unwrap();
        mean_track(&m, &r, &path, &mut c).unwrap();
        let last = grid.len() - 1;
        zj += (a[last] - b[last]).powi(2);
        rj += (c[last] - b[last]).powi(2);
    }
    assert_eq!(zj, rj);
    assert!(zj / 200.0 > 1e-3);
}

#[test]
fn reports_repeat_exactly() {
    let m = table1();
    let runner = Runner::new(2);
    let go = || mean_error(&m, &det(&[10, 20, 40]), 2.0, 20, false, 300, 5, Some(1e-3), &runner).unwrap();
    assert_eq!(go(), go());
    let g = || pathwise_utility_gap(&m, &det(&[10, 40]), 1.0, 200, 5, Some(1e-3), &runner).unwrap();
    let (a, b) = (g(), g());
    assert_eq!(a, b);
    assert!(a.slope.is_none());
}

#[test]
fn single_level_has_no_slope() {
    let m = table1();
    let rep: ConvergenceReport =
        cov_error_poisson(&m, &[DateScheme::Poisson { lambda: 10.0 }], 2.0, 50, 1, Some(1e-3), &Runner::default())
            .unwrap();
    assert!(rep.slope.is_none());
    assert_eq!(rep.levels, vec![10.0]);
    assert!(rep.errors[0] > 0.0);
}

#[test]
fn mixed_or_unsorted_levels_rejected() {
    let m = table1();
    let mixed = [DateScheme::Deterministic { n: 10 }, DateScheme::Poisson { lambda: 20.0 }];
    assert!(mean_error(&m, &mixed, 2.0, 20, false, 10, 1, None, &Runner::default()).is_err());
    assert!(mean_error(&m, &det(&[20, 10]), 2.0, 20, false, 10, 1, None, &Runner::default()).is_err());
}
