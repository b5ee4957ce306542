//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p driftlab --test acceptance [-- 3 5]` to select
//! criteria. A FAIL is reported, not raised; set
//! `DRIFTLAB_ACCEPTANCE_STRICT=1` to turn any FAIL into a nonzero exit.
//! `DRIFTLAB_ACCEPTANCE_FULL=1` adds the optional λ = 10000 value run.

use std::io::Write;
use std::time::Instant;

use driftlab::config::{parse_config, RunConfig, TABLE1_CFG};
use driftlab::experiments::{
    cov_error_deterministic, cov_error_poisson, estimation_lemma, expert_noise_check, filter_consistency,
    fit_positive, loewner_chain, mean_error, pathwise_utility_gap, stationary_roots, table2a, table2b,
    update_posterior_check, ConvergenceReport,
};
use driftlab::mc::Runner;
use driftlab_core::{sym_sqrt, DateScheme, Matrix, Model, SymMatrix};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

struct Outcome {
    pass: bool,
    summary: String,
    details: Vec<String>,
}

impl Outcome {
    fn new(pass: bool, summary: impl Into<String>) -> Self {
        Outcome { pass, summary: summary.into(), details: Vec::new() }
    }

    fn detail(mut self, line: impl Into<String>) -> Self {
        self.details.push(line.into());
        self
    }
}

fn emit(line: &str) {
    // Written to the process stdout directly so the lines survive test
    // output capture.
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{line}");
    let _ = out.flush();
}

struct Ctx {
    cfg: RunConfig,
    model: Model,
    runner: Runner,
}

fn slope_line(rep: &ConvergenceReport) -> String {
    let errs: Vec<String> = rep.levels.iter().zip(&rep.errors).map(|(l, e)| format!("{l}:{e:.4e}")).collect();
    match rep.slope {
        Some(f) => format!("slope {:.3} ± {:.3}; errors {}", f.slope, f.stderr, errs.join(" ")),
        None => format!("no slope; errors {}", errs.join(" ")),
    }
}

fn in_window(rep: &ConvergenceReport, lo: f64, hi: f64) -> bool {
    rep.slope_within(lo, hi).unwrap_or(false)
}

/// Slope over the upper half of the levels.
fn upper_half_slope(levels: &[f64], errors: &[f64]) -> Option<f64> {
    let k = levels.len() / 2;
    fit_positive(&levels[k..], &errors[k..]).0.map(|f| f.slope)
}

fn criterion_1(ctx: &Ctx) -> Outcome {
    let reference = [0.3410, 0.5245, 0.5511, 0.5531, 0.5533, 0.5533];
    let rows = table2a(&ctx.model, &[10, 100, 1000, 10_000], 1.0, ctx.cfg.value_step()).expect("table2a");
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for (r, p) in rows.iter().zip(reference) {
        worst = worst.max((r.value - p).abs());
        parts.push(format!("{}={:.4}", r.label(), r.value));
    }
    Outcome::new(worst <= 5e-4, format!("deterministic-date value table, max deviation {worst:.1e} (tol 5e-4)")).detail(parts.join(" "))
}

fn criterion_2(ctx: &Ctx) -> Outcome {
    let mut lambdas = vec![10.0, 100.0, 1000.0];
    let mut reference = vec![(0.5211, 0.5230), (0.5496, 0.5502), (0.5529, 0.5531)];
    let full = std::env::var_os("DRIFTLAB_ACCEPTANCE_FULL").is_some();
    if full {
        lambdas.push(10_000.0);
        reference.push((0.5523, 0.5543));
    }
    let rows = table2b(&ctx.model, &lambdas, 1.0, ctx.cfg.value_step(), 10_000, ctx.cfg.mc.seed, &ctx.runner)
        .expect("table2b");
    let mut pass = true;
    let mut out = Outcome::new(true, "");
    for (r, (lo, hi)) in rows.iter().zip(&reference) {
        let (clo, chi) = r.ci.expect("MC interval");
        let half = 0.5 * (chi - clo);
        let ok = if r.level == Some(10_000.0) {
            (r.value - 0.5533).abs() <= 1e-3
        } else {
            (lo - half..=hi + half).contains(&r.value)
        };
        pass &= ok;
        out = out.detail(format!(
            "λ={}: {:.5} (own CI {:.5}..{:.5}); accept [{:.5}, {:.5}] {}",
            r.level.unwrap(),
            r.value,
            clo,
            chi,
            lo - half,
            hi + half,
            if ok { "ok" } else { "miss" }
        ));
    }
    if !full {
        out = out.detail("λ=10000 skipped (optional; set DRIFTLAB_ACCEPTANCE_FULL=1)");
    }
    out.pass = pass;
    out.summary = "Poisson-date values inside reference CIs widened by own half-width, n_mc=10000".into();
    out
}

fn criterion_3(ctx: &Ctx) -> Outcome {
    let schemes: Vec<DateScheme> = [10, 20, 40, 80, 160, 320].map(|n| DateScheme::Deterministic { n }).to_vec();
    let rep = cov_error_deterministic(&ctx.model, &schemes, None).expect("cov_error_deterministic");
    let mut out = Outcome::new(
        in_window(&rep, -1.15, -0.85),
        "sup_t ‖Q^Z,n - Q^J‖ slope vs n in [-1.15, -0.85] (left limits at dates included)",
    )
    .detail(slope_line(&rep));
    for d in &rep.diagnostics {
        out = out.detail(format!("diagnostic {}: slope {:.3}", d.name, d.slope.map_or(f64::NAN, |f| f.slope)));
    }
    out
}

fn criterion_4(ctx: &Ctx) -> Outcome {
    let schemes: Vec<DateScheme> = [10, 20, 40, 80, 160, 320].map(|n| DateScheme::Deterministic { n }).to_vec();
    let n = &ctx.cfg.numerics;
    let rep = mean_error(&ctx.model, &schemes, 2.0, n.checkpoints, false, 10_000, ctx.cfg.mc.seed, None, &ctx.runner)
        .expect("mean_error");
    Outcome::new(
        in_window(&rep, -1.2, -0.8),
        format!("max over {} checkpoints of E‖m̂^Z,n - m̂^J‖² slope in [-1.2, -0.8], n_mc=10000", n.checkpoints),
    )
    .detail(slope_line(&rep))
}

fn poisson_levels() -> Vec<DateScheme> {
    [10.0, 20.0, 40.0, 80.0, 160.0, 320.0, 640.0, 1280.0].map(|lambda| DateScheme::Poisson { lambda }).to_vec()
}

fn criterion_5(ctx: &Ctx) -> Outcome {
    let seed = ctx.cfg.mc.seed;
    let p2 = cov_error_poisson(&ctx.model, &poisson_levels(), 2.0, 1000, seed, None, &ctx.runner).expect("p=2");
    let p1 = cov_error_poisson(&ctx.model, &poisson_levels(), 1.0, 1000, seed, None, &ctx.runner).expect("p=1");
    let (a, b) = (in_window(&p2, -1.2, -0.8), in_window(&p1, -0.65, -0.35));
    Outcome::new(a && b, "E sup ‖Q^Z,λ - Q^J‖^p slope: p=2 in [-1.2, -0.8], p=1 in [-0.65, -0.35], n_mc=1000")
        .detail(format!("p=2 {} {}", if a { "ok" } else { "miss" }, slope_line(&p2)))
        .detail(format!("p=1 {} {}", if b { "ok" } else { "miss" }, slope_line(&p1)))
}

fn criterion_6(ctx: &Ctx) -> Outcome {
    let n = &ctx.cfg.numerics;
    let rep = mean_error(&ctx.model, &poisson_levels(), 2.0, n.checkpoints, false, 10_000, ctx.cfg.mc.seed, None, &ctx.runner)
        .expect("mean_error");
    let upper = upper_half_slope(&rep.levels, &rep.errors);
    Outcome::new(in_window(&rep, -0.65, -0.35), "E‖m̂^Z,λ - m̂^J‖² slope vs λ in [-0.65, -0.35], n_mc=10000")
        .detail(slope_line(&rep))
        .detail(format!("diagnostic upper-half slope (λ ≥ 160): {:.3}", upper.unwrap_or(f64::NAN)))
}

fn criterion_7(ctx: &Ctx) -> Outcome {
    let m = &ctx.model;
    let seed = ctx.cfg.mc.seed;
    let tol = ctx.cfg.numerics.loewner_tol;
    let mut pass = true;
    let mut out = Outcome::new(true, "");
    let mut check = |ok: bool, line: String| {
        pass &= ok;
        format!("{} {line}", if ok { "ok  " } else { "FAIL" })
    };
    let mut lines = Vec::new();

    // Loewner chain and update monotonicity.
    let mut lo = Vec::new();
    for s in [10usize, 40, 320].map(|n| DateScheme::Deterministic { n }) {
        lo.push((s, loewner_chain(m, &s, 1, seed, None, tol).expect("loewner")));
    }
    for s in [10.0, 100.0].map(|lambda| DateScheme::Poisson { lambda }) {
        lo.push((s, loewner_chain(m, &s, 20, seed, None, tol).expect("loewner")));
    }
    let nodes: usize = lo.iter().map(|(_, r)| r.nodes).sum();
    let updates: usize = lo.iter().map(|(_, r)| r.updates).sum();
    let bad: usize = lo.iter().map(|(_, r)| r.z_above_r + r.j_above_r + r.update_increase).sum();
    lines.push(check(bad == 0, format!("Loewner chain Q^Z ⪯ Q^R, Q^J ⪯ Q^R and Q⁺ ⪯ Q⁻: {nodes} nodes, {updates} updates, {bad} violations")));

    // Update identity.
    let post = update_posterior_check(1000, 4, seed).expect("posterior");
    lines.push(check(
        post.max_cov_err <= 1e-10 && post.max_mean_err <= 1e-10 && post.not_decreasing == 0,
        format!(
            "update = Gaussian posterior on {} SPD instances: cov err {:.1e}, mean err {:.1e} (tol 1e-10)",
            post.instances, post.max_cov_err, post.max_mean_err
        ),
    ));

    // Estimation lemma.
    for s in [
        DateScheme::Deterministic { n: 10 },
        DateScheme::Deterministic { n: 100 },
        DateScheme::Poisson { lambda: 10.0 },
        DateScheme::Poisson { lambda: 100.0 },
    ] {
        let r = estimation_lemma(m, &s, seed, None, ctx.cfg.numerics.stationary_tol).expect("lemma");
        lines.push(check(
            r.holds(),
            format!("estimation lemma κ={}: max ‖Q - L‖ {:.3e} ≤ bound {:.3e} (C_Q {:.3})", r.kappa, r.max_gap, r.bound, r.c_q),
        ));
    }

    // Stationary roots, against the quadratic formula computed here.
    let roots = stationary_roots(m, ctx.cfg.numerics.stationary_tol).expect("roots");
    let exact = [0.125, (-6.0 + 200f64.sqrt()) / 82.0];
    for (r, e) in roots.iter().zip(exact) {
        let err = (r.computed.get(0, 0) - e).abs();
        lines.push(check(err <= 1e-6, format!("stationary root {}: {:.9} vs {:.9} (tol 1e-6)", r.regime, r.computed.get(0, 0), e)));
    }

    // sym_sqrt round trip.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for i in 0..200 {
        let d = 1 + i % 4;
        let a: Vec<f64> = (0..d * d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let a = Matrix::from_row_major(d, d, a).unwrap().gram_t().add(&SymMatrix::identity(d).scale(1e-3));
        let s = sym_sqrt(&a).unwrap();
        let back = s.as_matrix().matmul(s.as_matrix());
        worst = worst.max(back.max_abs_diff(a.as_matrix()) / a.norm().max(1.0));
    }
    lines.push(check(worst <= 1e-10, format!("sym_sqrt round trip on 200 SPD matrices: rel err {worst:.1e}")));

    // Filter consistency and unbiasedness.
    let cons = filter_consistency(m, &DateScheme::Deterministic { n: 10 }, 10_000, seed, None, &ctx.runner).expect("consistency");
    for c in &cons {
        lines.push(check(
            c.within(4.0),
            format!(
                "{} {} at T: {:.5} vs {:.5}, {:.2} SE",
                c.regime.map_or("-".into(), |r| r.to_string()),
                c.quantity,
                c.estimate,
                c.target,
                c.z_score()
            ),
        ));
    }
    for s in [DateScheme::Deterministic { n: 10 }, DateScheme::Poisson { lambda: 10.0 }] {
        let noise = expert_noise_check(m, &s, 10_000, seed, None, &ctx.runner).expect("noise");
        for c in &noise {
            lines.push(check(
                c.within(4.0),
                format!("opinion {} under {:?}: {:.5} vs {:.5}, {:.2} SE", c.quantity, s, c.estimate, c.target, c.z_score()),
            ));
        }
    }
    for l in lines {
        out = out.detail(l);
    }
    out.pass = pass;
    out.summary = "property suite (Loewner, update identity, estimation lemma, roots, sqrt, consistency)".into();
    out
}

fn criterion_8(ctx: &Ctx) -> Outcome {
    let schemes = [10, 320].map(|n| DateScheme::Deterministic { n });
    let rep = pathwise_utility_gap(&ctx.model, &schemes, 1.0, 10_000, ctx.cfg.mc.seed, None, &ctx.runner).expect("gap");
    let ratio = rep.errors[1] / rep.errors[0];
    Outcome::new(ratio < 0.25, format!("E|log X^Z,320 - log X^J| / E|log X^Z,10 - log X^J| = {ratio:.3} (< 0.25), n_mc=10000"))
        .detail(format!(
            "gap n=10 {:.5} (se {:.1e}), n=320 {:.5} (se {:.1e})",
            rep.errors[0],
            rep.std_errors[0].unwrap(),
            rep.errors[1],
            rep.std_errors[1].unwrap()
        ))
}

fn main() {
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let cfg = parse_config(TABLE1_CFG).expect("bundled config parses");
    let model = cfg.validated_model().expect("reference config is valid");
    let ctx = Ctx { cfg, model, runner: Runner::default() };
    let criteria: [(usize, fn(&Ctx) -> Outcome); 8] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
    ];
    let mut passed = 0;
    let mut run = 0;
    for (id, f) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let o = f(&ctx);
        run += 1;
        passed += o.pass as usize;
        emit(&format!(
            "criterion {id}: {} {} [{:.1}s]",
            if o.pass { "PASS" } else { "FAIL" },
            o.summary,
            start.elapsed().as_secs_f64()
        ));
        for d in &o.details {
            emit(&format!("    {d}"));
        }
    }
    emit(&format!("acceptance: {passed}/{run} PASS"));
    if passed < run && std::env::var_os("DRIFTLAB_ACCEPTANCE_STRICT").is_some_and(|v| v == "1") {
        std::process::exit(1);
    }
}
