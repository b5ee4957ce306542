use driftlab_core::filter::{mean_track, CovTrack, Regime};
use driftlab_core::model::{DateScheme, ModelParams};
use driftlab_core::rng::{stream, StreamRole};
use driftlab_core::simulate::{make_grid, sample_poisson_dates, simulate_indexed};

fn moments(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Checks a Gaussian sample's mean and variance against targets within
/// four standard errors.
fn assert_gaussian_moments(xs: &[f64], mean: f64, var: f64) {
    let n = xs.len() as f64;
    let (m, v) = moments(xs);
    let se_mean = (var / n).sqrt();
    let se_var = var * (2.0 / (n - 1.0)).sqrt();
    assert!((m - mean).abs() <= 4.0 * se_mean, "mean {m} vs {mean} (se {se_mean})");
    assert!((v - var).abs() <= 4.0 * se_var, "var {v} vs {var} (se {se_var})");
}

#[test]
fn poisson_count_moments() {
    let mut rng = stream(11, 0, StreamRole::Dates);
    let counts: Vec<f64> = (0..100_000).map(|_| sample_poisson_dates(10.0, 1.0, &mut rng).len() as f64).collect();
    let (mean, var) = moments(&counts);
    assert!((mean - 10.0).abs() < 0.1, "mean {mean}");
    assert!((var / 10.0 - 1.0).abs() < 0.05, "var {var}");
}

#[test]
fn exact_one_step_transition() {
    let h = 0.1;
    let model = ModelParams::scalar(3.0, 1.0, 0.05, 0.25, 0.2, 0.3, 0.0, h).validate().unwrap();
    let scheme = DateScheme::Deterministic { n: 1 };
    let xs: Vec<f64> = (0..100_000)
        .map(|p| simulate_indexed(&model, &scheme, h, &[], 21, p).unwrap().mu_at(1)[0])
        .collect();
    let mean = 0.05 + (-3.0 * h).exp() * (0.3 - 0.05);
    let var = (1.0 - (-6.0 * h).exp()) / 6.0;
    assert_gaussian_moments(&xs, mean, var);
}

#[test]
fn terminal_drift_moments() {
    let model = ModelParams::table1().validate().unwrap();
    let scheme = DateScheme::Deterministic { n: 4 };
    let xs: Vec<f64> = (0..100_000)
        .map(|p| *simulate_indexed(&model, &scheme, 0.05, &[], 5, p).unwrap().mu.last().unwrap())
        .collect();
    assert_gaussian_moments(&xs, model.drift_mean(1.0)[0], model.drift_cov(1.0).get(0, 0));
}

#[test]
fn opinion_noise_has_scheme_covariance() {
    let model = ModelParams::table1().validate().unwrap();
    for scheme in [DateScheme::Deterministic { n: 10 }, DateScheme::Poisson { lambda: 10.0 }] {
        let h = scheme.default_h_max(1.0) * 10.0;
        let mut eps = Vec::new();
        for p in 0..10_000 {
            let path = simulate_indexed(&model, &scheme, h, &[], 8, p).unwrap();
            for o in &path.opinions {
                eps.push(o.value[0] - path.mu_at(o.node)[0]);
            }
        }
        // Opinions within a path use disjoint windows, so the residuals are independent.
        assert_gaussian_moments(&eps, 0.0, 0.4);
    }
}

#[test]
fn expert_increments_are_shared_with_opinions() {
    let model = ModelParams::table1().validate().unwrap();
    let scheme = DateScheme::Poisson { lambda: 50.0 };
    let path = simulate_indexed(&model, &scheme, 1e-3, &[], 17, 3).unwrap();
    for o in &path.opinions {
        let (a, b) = o.window;
        if b >= 1.0 {
            continue;
        }
        let ia = path.grid.node_at(a).unwrap();
        let ib = path.grid.node_at(b).unwrap();
        let dw: f64 = (ia..ib).map(|i| path.wj_at(i)[0]).sum();
        let expected = path.mu_at(o.node)[0] + 50.0 * 0.2 * dw;
        assert!((o.value[0] - expected).abs() < 1e-12);
        // The continuous expert is driven by the same increments.
        for i in ia..ib {
            let dj = path.mu_at(i)[0] * path.grid.step(i) + 0.2 * path.wj_at(i)[0];
            assert_eq!(path.expert_at(i)[0], dj);
        }
    }
}

#[test]
fn poisson_tail_windows_are_contiguous() {
    let model = ModelParams::table1().validate().unwrap();
    let scheme = DateScheme::Poisson { lambda: 10.0 };
    let mut seen_tail = false;
    for p in 0..200 {
        let path = simulate_indexed(&model, &scheme, 5e-3, &[], 23, p).unwrap();
        for w in path.wj_tail.windows(2) {
            assert_eq!(w[0].end, w[1].start);
        }
        if let Some(first) = path.wj_tail.first() {
            assert!(first.start >= 1.0);
            seen_tail = true;
        }
        assert_eq!(path.opinions.len(), path.grid.date_nodes().len());
    }
    assert!(seen_tail);
}

#[test]
fn grid_refinement_changes_filter_at_first_order() {
    let model = ModelParams::table1().validate().unwrap();
    let scheme = DateScheme::Deterministic { n: 4 };
    let fine_h = 1.0 / 2048.0;
    let factors = [32usize, 16, 8];
    let mut errors = [0.0f64; 3];
    let n_paths = 400;
    for p in 0..n_paths {
        let fine = simulate_indexed(&model, &scheme, fine_h, &[], 31, p).unwrap();
        let terminal = |path: &driftlab_core::MarketPath| {
            let cov = CovTrack::compute(&model, Regime::R, &path.grid, None).unwrap();
            let mut m = Vec::new();
            mean_track(&model, &cov, path, &mut m).unwrap();
            *m.last().unwrap()
        };
        let reference = terminal(&fine);
        for (e, &f) in errors.iter_mut().zip(&factors) {
            let coarse = fine.coarsen(&model, f).unwrap();
            *e += (terminal(&coarse) - reference).abs() / n_paths as f64;
        }
    }
    for w in errors.windows(2) {
        let ratio = w[0] / w[1];
        assert!((1.5..=2.5).contains(&ratio), "errors {errors:?}");
    }
}

#[test]
fn grid_invariants() {
    let model = ModelParams::table1().validate().unwrap();
    let scheme = DateScheme::Poisson { lambda: 100.0 };
    let mut rng = stream(2, 0, StreamRole::Dates);
    let dates = sample_poisson_dates(100.0, 1.0, &mut rng);
    let h = scheme.default_h_max(1.0);
    let grid = make_grid(&model, &scheme, &dates, h).unwrap();
    assert_eq!(grid.nodes()[0], 0.0);
    assert_eq!(*grid.nodes().last().unwrap(), 1.0);
    assert!(grid.nodes().windows(2).all(|w| w[0] < w[1]));
    assert!(grid.max_spacing() <= h * (1.0 + 1e-12));
    assert_eq!(grid.dates(), dates);
}
