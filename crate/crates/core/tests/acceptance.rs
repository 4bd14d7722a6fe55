//! Acceptance suite for the analysis engine.
//!
//! Every criterion prints one line. Run with `--nocapture` to see them:
//!
//! ```text
//! cargo test -p scalelaw-core --test acceptance -- --nocapture
//! ```

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use scalelaw::accounting::training_flops;
use scalelaw::allocator::allocate_from_parametric;
use scalelaw::correlation::{pearson, BetterDirection, MetricSeries};
use scalelaw::frontier::{extract_envelope, fit_frontier_laws, DEFAULT_BINS_PER_DECADE};
use scalelaw::parametric::{fit_loss_law, fit_parametric, LossLawOptions, ParametricOptions};
use scalelaw::synth::{
    brute_force_optimal, generate_family, round_trip, RoundTripOptions,
    DEFAULT_SIZE_DECADES,
};
use scalelaw::{ComputeBudget, CurveFamily, LossSurface, NoiseModel, ParametricLaw, SyntheticSpec};

const GRID: [f64; 5] = [0.2, 0.35, 0.5, 0.65, 0.8];
const N_MIN: f64 = 1e4;
const SIZES: usize = 8;

enum Status {
    Pass,
    Fail,
    Excluded,
}

struct Outcome {
    name: &'static str,
    status: Status,
    detail: String,
}

fn check(name: &'static str, ok: bool, detail: String) -> Outcome {
    Outcome {
        name,
        status: if ok { Status::Pass } else { Status::Fail },
        detail,
    }
}

/// A surface whose model term is about 1 at the central model size and whose
/// optimum there sits at 20 tokens per parameter.
fn surface(alpha: f64, beta: f64) -> LossSurface {
    let n_center = N_MIN * 10f64.powf(DEFAULT_SIZE_DECADES / 2.0);
    let n_c = n_center.powf(alpha);
    let d_c = alpha / beta * (20.0 * n_center).powf(beta);
    LossSurface::new(alpha, beta, n_c, d_c, 1.0).unwrap()
}

fn spec(alpha: f64, beta: f64, noise: NoiseModel, seed: u64) -> SyntheticSpec {
    SyntheticSpec::with_defaults(surface(alpha, beta), N_MIN, SIZES, noise, seed)
}

/// Layout where each size trains only across the budgets it should win.
fn resolved_spec(alpha: f64, beta: f64, seed: u64) -> SyntheticSpec {
    SyntheticSpec::frontier_resolved(surface(alpha, beta), N_MIN, DEFAULT_SIZE_DECADES, SIZES, NoiseModel::None, seed)
}

fn grid() -> impl Iterator<Item = (f64, f64)> {
    GRID.iter().flat_map(|&a| GRID.iter().map(move |&b| (a, b)))
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

fn reference_flops() -> Outcome {
    let cases = [
        (200e6, 3.6e12, 4.32e21, 4.3e21),
        (200e6, 386e9, 4.632e20, 4.6e20),
        (50e6, 6.52e9, 1.956e18, 2.0e18),
    ];
    let mut worst_exact: f64 = 0.0;
    let mut worst_rounded: f64 = 0.0;
    for (n, d, exact, rounded) in cases {
        let c = training_flops(n, d).unwrap().flops();
        worst_exact = worst_exact.max(rel(c, exact));
        worst_rounded = worst_rounded.max(rel(c, rounded));
    }
    check(
        "reference FLOPs budgets",
        worst_exact < 1e-12 && worst_rounded < 0.05,
        format!("max rel err {worst_exact:.1e} exact, {worst_rounded:.3} vs rounded"),
    )
}

struct GridRun {
    worst_param: f64,
    worst_exponent: f64,
    worst_frontier: f64,
    worst_complement: f64,
    frontier_missing: usize,
}

fn noiseless_grid() -> GridRun {
    let options = RoundTripOptions::default();
    let mut run = GridRun {
        worst_param: 0.0,
        worst_exponent: 0.0,
        worst_frontier: 0.0,
        worst_complement: 0.0,
        frontier_missing: 0,
    };
    for (alpha, beta) in grid() {
        let r = round_trip(&resolved_spec(alpha, beta, 1), &options).unwrap();
        run.worst_param = run.worst_param.max(r.param_errors.max());
        run.worst_exponent = run.worst_exponent.max(r.exponent_errors.0.max(r.exponent_errors.1));
        match (&r.frontier, r.frontier_a_error) {
            (Some(f), Some(err)) => {
                run.worst_frontier = run.worst_frontier.max(err);
                run.worst_complement = run.worst_complement.max((f.b - (1.0 - f.a)).abs());
                eprintln!(
                    "  alpha={alpha:.2} beta={beta:.2}: a_true={:.4} a_frontier={:.4} a_parametric={:.4}",
                    r.truth_exponents.0,
                    f.a,
                    r.parametric.surface.allocation_exponents().0
                );
            }
            _ => run.frontier_missing += 1,
        }
    }
    run
}

fn noisy_grid() -> Outcome {
    let options = RoundTripOptions::default();
    let mut worst_grid_point = usize::MAX;
    let mut summary = String::new();
    for (alpha, beta) in grid() {
        let passing = (0..10u64)
            .filter(|&seed| {
                let r = round_trip(&spec(alpha, beta, NoiseModel::Lognormal { sigma: 0.02 }, 100 + seed), &options)
                    .unwrap();
                r.exponent_errors.0.max(r.exponent_errors.1) < 0.05
            })
            .count();
        if passing < worst_grid_point {
            worst_grid_point = passing;
            summary = format!("worst grid point alpha={alpha} beta={beta}: {passing}/10 seeds");
        }
    }
    check("parametric round-trip, sigma=0.02", worst_grid_point >= 9, summary)
}

fn closed_form_vs_brute_force() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(7);
    let (mut hits, mut drawn) = (0, 0);
    let mut worst = 0.0f64;
    while drawn < 100 {
        let alpha = rng.random_range(0.1..1.0);
        let beta = rng.random_range(0.1..1.0);
        let n_c = 10f64.powf(rng.random_range(-1.0..3.0));
        let d_c = 10f64.powf(rng.random_range(-1.0..3.0));
        let e = rng.random_range(0.0..3.0);
        let truth = LossSurface::new(alpha, beta, n_c, d_c, e).unwrap();
        let budget = ComputeBudget::new(10f64.powf(rng.random_range(12.0..24.0))).unwrap();
        let law = exact_law(truth, budget.flops());
        let plan = allocate_from_parametric(&law, budget).unwrap();
        let brute = brute_force_optimal(&truth, budget, 100_000).unwrap();
        // An argmin on the edge of [1, C/6] means the optimum is infeasible
        // (fewer than one token or parameter); the closed form does not apply.
        let (lo, hi) = (brute.grid_step_ln, (budget.flops() / 6.0).ln() - brute.grid_step_ln);
        if !(lo..=hi).contains(&brute.n_optimal.ln()) {
            continue;
        }
        drawn += 1;
        let gap = (plan.n_optimal.ln() - brute.n_optimal.ln()).abs() / brute.grid_step_ln;
        worst = worst.max(gap);
        if gap <= 1.0 {
            hits += 1;
        }
    }
    check(
        "closed-form allocation vs brute force",
        hits == 100,
        format!("{hits}/100 within one grid step, worst {worst:.2} steps"),
    )
}

fn exact_law(surface: LossSurface, flops: f64) -> ParametricLaw {
    ParametricLaw {
        surface,
        residual: 0.0,
        initial_residual: 0.0,
        n_points: 0,
        fit_space: Default::default(),
        winning_init: surface,
        starts_tried: 0,
        starts_converged: 0,
        iterations: 0,
        distinct_model_sizes: 0,
        identifiable: true,
        e_at_bound: false,
        fit_range: (flops, flops),
    }
}

fn loss_law_points(c0: f64, c: f64, e: f64) -> Vec<(f64, f64)> {
    (0..40)
        .map(|i| {
            let flops = 10f64.powf(15.0 + 6.0 * i as f64 / 39.0);
            (flops, c0 * flops.powf(-c) + e)
        })
        .collect()
}

fn loss_law_recovery() -> Vec<Outcome> {
    let mut rng = ChaCha20Rng::seed_from_u64(11);
    let opts = LossLawOptions::default();
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let c = rng.random_range(0.05..0.6);
        let e = rng.random_range(0.1..4.0);
        // Reducible term of order one at 1e18 FLOPs.
        let c0 = rng.random_range(0.2..3.0) * 1e18f64.powf(c);
        let law = fit_loss_law(&loss_law_points(c0, c, e), &opts).unwrap();
        worst = worst
            .max(rel(law.c0, c0))
            .max(rel(law.c, c))
            .max(rel(law.e_irreducible, e));
    }
    let mut flagged = 0;
    let below = [0.0, 0.03, 0.08];
    for &e in &below {
        let c0 = 2.0 * 1e18f64.powf(0.3);
        let law = fit_loss_law(&loss_law_points(c0, 0.3, e), &opts).unwrap();
        if law.flags.e_at_floor && law.e_irreducible == 0.1 {
            flagged += 1;
        }
    }
    vec![
        check(
            "loss-law recovery, noiseless",
            worst < 1e-6,
            format!("20 random laws, max rel err {worst:.1e}"),
        ),
        check(
            "loss-law floor clamping flagged",
            flagged == below.len(),
            format!("{flagged}/{} laws with E < 0.1 flagged at the floor", below.len()),
        ),
    ]
}

fn scale_family(family: &CurveFamily, n_scale: f64, d_scale: f64) -> CurveFamily {
    let mut runs = family.curves.clone();
    for run in &mut runs {
        run.n_params *= n_scale;
        for p in &mut run.points {
            p.tokens_seen *= d_scale;
            p.flops = 6.0 * run.n_params * p.tokens_seen;
        }
    }
    CurveFamily::new(family.label.clone(), family.profile.clone(), runs).unwrap()
}

fn scale_invariance() -> Vec<Outcome> {
    let base = generate_family(&spec(0.4, 0.3, NoiseModel::None, 3)).unwrap();
    let noisy = generate_family(&spec(0.4, 0.3, NoiseModel::Lognormal { sigma: 0.02 }, 3)).unwrap();
    let scales = [(1.0, 37.0), (1.0, 1e-2), (10.0, 1.0), (250.0, 4.0)];

    let frontier_a = |f: &CurveFamily| {
        let env = extract_envelope(f, DEFAULT_BINS_PER_DECADE).unwrap();
        fit_frontier_laws(&env).unwrap().a
    };
    let param_a = |f: &CurveFamily| {
        fit_parametric(f, &ParametricOptions::default())
            .unwrap()
            .surface
            .allocation_exponents()
            .0
    };

    let mut frontier_gap: f64 = 0.0;
    let mut noisy_frontier_gap: f64 = 0.0;
    let mut param_gap: f64 = 0.0;
    let (a0, a0_noisy, p0) = (frontier_a(&base), frontier_a(&noisy), param_a(&noisy));
    for (ns, ds) in scales {
        frontier_gap = frontier_gap.max((frontier_a(&scale_family(&base, ns, ds)) - a0).abs());
        noisy_frontier_gap = noisy_frontier_gap.max((frontier_a(&scale_family(&noisy, ns, ds)) - a0_noisy).abs());
        param_gap = param_gap.max((param_a(&scale_family(&noisy, ns, ds)) - p0).abs());
    }

    // Loss law: rescaling FLOPs moves c0 only.
    let opts = LossLawOptions::default();
    let c0 = 1.5 * 1e18f64.powf(0.25);
    let pts = loss_law_points(c0, 0.25, 1.7);
    let law = fit_loss_law(&pts, &opts).unwrap();
    let mut loss_gap: f64 = 0.0;
    for k in [1e-3, 42.0, 1e4] {
        let scaled: Vec<(f64, f64)> = pts.iter().map(|&(c, l)| (c * k, l)).collect();
        let s = fit_loss_law(&scaled, &opts).unwrap();
        loss_gap = loss_gap
            .max((s.c - law.c).abs())
            .max((s.e_irreducible - law.e_irreducible).abs());
    }

    vec![
        check(
            "scale invariance, noiseless",
            frontier_gap < 1e-9 && loss_gap < 1e-9,
            format!("frontier exponent shift {frontier_gap:.1e}, loss-law exponent shift {loss_gap:.1e}"),
        ),
        check(
            "scale invariance, fitted",
            noisy_frontier_gap < 5e-3 && param_gap < 5e-3,
            format!("noisy frontier shift {noisy_frontier_gap:.1e}, parametric shift {param_gap:.1e}"),
        ),
    ]
}

fn correlation_properties() -> Vec<Outcome> {
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let n = rng.random_range(3..50);
        let pairs: Vec<(f64, f64)> = (0..n)
            .map(|_| (rng.random_range(0.5..5.0), rng.random_range(-10.0..10.0)))
            .collect();
        let base = pearson(&MetricSeries::new("m", BetterDirection::Lower, pairs.clone()).unwrap()).unwrap();
        let (s, t) = (rng.random_range(0.01..100.0), rng.random_range(-100.0..100.0));
        let (u, v) = (rng.random_range(0.01..100.0), rng.random_range(-100.0..100.0));
        let moved: Vec<(f64, f64)> = pairs.iter().map(|&(x, y)| (s * x + t, u * y + v)).collect();
        let r = pearson(&MetricSeries::new("m", BetterDirection::Lower, moved).unwrap()).unwrap();
        worst = worst.max((r - base).abs());
    }
    let line = |slope: f64| {
        let pairs = (0..10).map(|i| (1.0 + i as f64 * 0.3, 5.0 + slope * i as f64)).collect();
        pearson(&MetricSeries::new("line", BetterDirection::Lower, pairs).unwrap()).unwrap()
    };
    let (up, down) = (line(2.5), line(-0.7));
    vec![
        check(
            "Pearson affine invariance",
            worst < 1e-12,
            format!("200 random series, max shift {worst:.1e}"),
        ),
        check(
            "Pearson exact lines",
            (up - 1.0).abs() < 1e-12 && (down + 1.0).abs() < 1e-12,
            format!("r = {up}, {down}"),
        ),
        Outcome {
            name: "published correlation values",
            status: Status::Excluded,
            detail: "no digitized metric fixtures available".into(),
        },
    ]
}

#[test]
fn acceptance() {
    let mut outcomes = vec![reference_flops()];

    let t = Instant::now();
    let g = noiseless_grid();
    eprintln!("noiseless grid: {:.1}s", t.elapsed().as_secs_f64());
    outcomes.push(check(
        "parametric round-trip, noiseless",
        g.worst_param < 1e-3 && g.worst_exponent < 1e-3,
        format!(
            "25 grid points, max rel param err {:.1e}, max exponent err {:.1e}",
            g.worst_param, g.worst_exponent
        ),
    ));
    let t = Instant::now();
    outcomes.push(noisy_grid());
    eprintln!("noisy grid: {:.1}s", t.elapsed().as_secs_f64());

    outcomes.push(closed_form_vs_brute_force());
    outcomes.push(check(
        "frontier exponent vs beta/(alpha+beta)",
        g.frontier_missing == 0 && g.worst_frontier < 0.03,
        format!(
            "max |a_frontier - a_true| {:.4}, {} grid points underdetermined",
            g.worst_frontier, g.frontier_missing
        ),
    ));
    outcomes.push(check(
        "frontier complementarity b = 1 - a",
        g.frontier_missing == 0 && g.worst_complement < 1e-9,
        format!("max |b - (1 - a)| {:.1e}", g.worst_complement),
    ));
    outcomes.extend(loss_law_recovery());
    outcomes.extend(scale_invariance());
    outcomes.extend(correlation_properties());

    let mut failed = Vec::new();
    for o in &outcomes {
        let tag = match o.status {
            Status::Pass => "PASS",
            Status::Fail => {
                failed.push(o.name);
                "FAIL"
            }
            Status::Excluded => "EXCLUDED",
        };
        println!("{tag:<8} {:<42} {}", o.name, o.detail);
    }
    assert!(failed.is_empty(), "failing criteria: {failed:?}");
}
