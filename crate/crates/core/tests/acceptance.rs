//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line for
//! each and exits non-zero if any failed. Uses its own `main` so the lines
//! are shown by `cargo test` without `--nocapture`.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use qrm_core::instability::{sample_on_half_period, sine_coefficients, truncated_norm_at_t, FourierProfile};
use qrm_core::ml::{gradient_check, train, Dataset, Head, MlpParams, TrainConfig, N_FEATURES};
use qrm_core::pipeline::{
    run_pipeline, synthetic_universe, write_bundle, PipelineConfig, PUBLISHED_RESULTS, PUBLISHED_SPLITS, REPORT_FILES,
};
use qrm_core::preprocess::{assemble_problem, PreprocessError};
use qrm_core::qrm::{
    convergence_experiment, manufactured_recovery, solve_problem, BoundaryData, CoefficientField, Functional, Grid,
    ManufacturedCase, EPSILON_FRAC, NOISE_LEVELS, RECOVERY_TOLERANCE,
};
use qrm_core::trading::{ConfusionCounts, MONEYNESS_STEP};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

type Outcome = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn manufactured_recovery_criterion() -> Outcome {
    let start = Instant::now();
    let report = manufactured_recovery::<f64>(&ManufacturedCase::default()).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    check(
        report.rel_l2_error <= RECOVERY_TOLERANCE && elapsed <= Duration::from_secs(10),
        format!(
            "64x64, beta 1e-6: relative L2 error {:.3e} (limit {RECOVERY_TOLERANCE}), {:.2?} (limit 10 s)",
            report.rel_l2_error, elapsed
        ),
    )
}

/// Errors recorded for seed 1 when the experiment was set up.
const CONVERGENCE_FIXTURE: [f64; 3] = [0.023000494640194526, 0.0007940067634692593, 0.0006850094991182125];

fn regularization_convergence() -> Outcome {
    let case = ManufacturedCase::convergence();
    let mut notes = Vec::new();
    let mut ok = true;
    for seed in 1..=3 {
        let rows = convergence_experiment::<f64>(&case, &NOISE_LEVELS, seed, EPSILON_FRAC).map_err(|e| e.to_string())?;
        let errors: Vec<f64> = rows.iter().map(|r| r.error).collect();
        let monotone = errors.windows(2).all(|w| w[1] <= w[0]);
        ok &= monotone;
        if seed == 1 {
            let matches = errors
                .iter()
                .zip(CONVERGENCE_FIXTURE)
                .all(|(e, f)| (e - f).abs() <= 1e-6 * f);
            ok &= matches;
            notes.push(format!("seed 1 errors {errors:?} fixture match {matches}"));
        } else {
            notes.push(format!("seed {seed} monotone {monotone}"));
        }
    }
    check(ok, notes.join("; "))
}

fn ill_posedness_demo() -> Outcome {
    let mut worst_ratio: f64 = 0.0;
    for n in 1..=5 {
        let p = FourierProfile::<f64>::single_mode(n);
        let ratio = truncated_norm_at_t(&p, 1.0).unwrap() / truncated_norm_at_t(&p, 0.0).unwrap();
        let exact = ((n * n) as f64).exp();
        worst_ratio = worst_ratio.max((ratio - exact).abs() / exact);
    }
    let order = 9;
    let samples = sample_on_half_period(|x| x * (std::f64::consts::PI - x), 8192);
    let profile = sine_coefficients(&samples, order).unwrap();
    let mut worst_coef: f64 = 0.0;
    for (k, &c) in profile.coefficients.iter().enumerate() {
        let n = k + 1;
        let exact = if n % 2 == 1 {
            8.0 / (std::f64::consts::PI * (n * n * n) as f64)
        } else {
            0.0
        };
        worst_coef = worst_coef.max((c - exact).abs());
    }
    check(
        worst_ratio <= 1e-10 && worst_coef <= 1e-8,
        format!("growth ratio rel. error {worst_ratio:.1e} (n = 1..5, T = 1), parabola coefficients error {worst_coef:.1e} (n = 1..{order})"),
    )
}

fn optimality_and_feasibility() -> Outcome {
    let cfg = PipelineConfig {
        n_options: 80,
        n_days: 4,
        seed: 4,
        ..Default::default()
    };
    let market = synthetic_universe(&cfg).map_err(|e| e.to_string())?;
    let (mut runs, mut skipped, mut worst_corner, mut failures) = (0, 0, 0.0f64, Vec::new());
    for days in market.snapshots.chunks(4) {
        if runs == 50 {
            break;
        }
        let problem = match assemble_problem::<f64>(&days[0], &days[1], &days[2], cfg.nt) {
            Ok(p) => p,
            Err(PreprocessError::InvalidBoundary { .. }) => {
                skipped += 1;
                continue;
            }
            Err(e) => return Err(e.to_string()),
        };
        let sol = solve_problem(&problem, cfg.nx, cfg.nt, &cfg.solver()).map_err(|e| e.to_string())?;
        runs += 1;
        let grid = Grid::new(cfg.nx, cfg.nt, problem.horizon()).unwrap();
        let data = BoundaryData::from_problem(&problem, &grid);
        let u = &sol.u;
        let exact_sides = (0..=cfg.nt).all(|j| u.at(0, j) == data.left[j] && u.at(cfg.nx, j) == data.right[j]);
        let exact_initial = (1..cfg.nx).all(|i| u.at(i, 0) == data.initial[i]);
        for i in [0, cfg.nx] {
            let z = data.initial[i];
            worst_corner = worst_corner.max((u.at(i, 0) - z).abs() / (1.0 + z.abs()));
        }
        let bound = sol.j_value <= sol.j_lift;
        let monotone = sol.history.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12));
        if !(exact_sides && exact_initial && bound && monotone) {
            failures.push(format!(
                "{} sides {exact_sides} initial {exact_initial} bound {bound} monotone {monotone}",
                problem.option_id
            ));
        }
    }
    check(
        runs == 50 && failures.is_empty() && worst_corner <= 4.0 * f64::EPSILON,
        format!(
            "{runs} solver runs ({skipped} options rejected before solving), corner mismatch {worst_corner:.1e}{}",
            if failures.is_empty() { String::new() } else { format!(", failures: {failures:?}") }
        ),
    )
}

fn gradient_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let grid = Grid::<f64>::new(8, 8, 0.1).unwrap();
    let coeff = CoefficientField::new(&grid, grid.sample(|x, t| 0.5 + x * (1.0 - x) + 3.0 * t)).unwrap();
    let functional = Functional::new(grid, &coeff, 0.01).unwrap();
    let u = ndarray::Array2::from_shape_fn(grid.shape(), |_| rng.gen_range(-1.0..1.0));
    let g = functional.gradient(&u);
    let h = 1e-3;
    let (mut diff, mut scale) = (0.0f64, 0.0f64);
    for idx in ndarray::indices(u.dim()) {
        let (mut up, mut down) = (u.clone(), u.clone());
        up[idx] += h;
        down[idx] -= h;
        let fd = (functional.value(&up) - functional.value(&down)) / (2.0 * h);
        diff = diff.max((g[idx] - fd).abs());
        scale = scale.max(g[idx].abs());
    }
    let solver_err = diff / scale;

    let mut mlp_err: f64 = 0.0;
    for seed in 0..4 {
        for head in [Head::Classification, Head::Regression] {
            let rows: Vec<Vec<f64>> = (0..6).map(|_| (0..N_FEATURES).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
            let ys: Vec<f64> = (0..6)
                .map(|k| match head {
                    Head::Classification => (k % 2) as f64,
                    Head::Regression => rng.gen_range(-1.5..1.5),
                })
                .collect();
            let data = Dataset::from_rows(&rows, &ys).unwrap();
            let p = MlpParams::<f64>::init(N_FEATURES, &[6, 6, 6], head, seed);
            mlp_err = mlp_err.max(gradient_check(&p, &data, 1e-3).map_err(|e| e.to_string())?);
        }
    }
    check(
        solver_err <= 1e-6 && mlp_err <= 1e-5,
        format!("functional on 8x8: {solver_err:.1e} (limit 1e-6); MLP, both heads: {mlp_err:.1e} (limit 1e-5)"),
    )
}

fn metric_exactness() -> Outcome {
    let c = ConfusionCounts { tp: 2, tn: 1, fp: 1, fn_: 1 };
    let exact = c.accuracy() == Some(0.6) && c.precision() == Some(2.0 / 3.0) && c.recall() == Some(2.0 / 3.0);
    let none_bought = ConfusionCounts { tp: 0, tn: 3, fp: 0, fn_: 2 };
    let no_positives = ConfusionCounts { tp: 0, tn: 3, fp: 2, fn_: 0 };
    let undefined = none_bought.precision().is_none()
        && no_positives.recall().is_none()
        && ConfusionCounts::default().accuracy().is_none();
    check(
        exact && undefined,
        format!(
            "accuracy {:?}, precision {:?}, recall {:?}; zero denominators give None: {undefined}",
            c.accuracy(),
            c.precision(),
            c.recall()
        ),
    )
}

/// Balanced sample labelled by a fixed hyperplane, keeping points at least
/// `margin` away from it.
fn separable(seed: u64, m: usize, margin: f64) -> Dataset<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w: Vec<f64> = (0..N_FEATURES).map(|k| if k % 2 == 0 { 1.0 } else { -0.5 }).collect();
    let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
    let (mut rows, mut ys) = (Vec::new(), Vec::new());
    while ys.len() < m {
        let want = ys.len() % 2 == 1;
        let x: Vec<f64> = (0..N_FEATURES).map(|_| StandardNormal.sample(&mut rng)).collect();
        let s = x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / norm;
        if s.abs() < margin || (s > 0.0) != want {
            continue;
        }
        rows.push(x);
        ys.push(f64::from(u8::from(want)));
    }
    Dataset::from_rows(&rows, &ys).unwrap()
}

fn ml_sanity() -> Outcome {
    let (train_set, test_set) = (separable(1, 200, 0.3), separable(2, 500, 0.3));
    let cfg = TrainConfig::default();
    let fit = train(cfg.init(N_FEATURES, Head::Classification), &train_set, &cfg).map_err(|e| e.to_string())?;
    let h = fit.params.predict(test_set.x.view()).unwrap();
    let hits = h.iter().zip(test_set.y.iter()).filter(|(h, y)| (**h > 0.5) == (**y == 1.0)).count();
    let accuracy = hits as f64 / test_set.len() as f64;

    // lr = m / lambda zeroes the weights in one step; lr * epochs = 7 then
    // shrinks any initial output bias below the tolerance
    let m = 2000;
    let heavy = TrainConfig {
        lambda: 1e6,
        learning_rate: m as f64 / 1e6,
        epochs: 3500,
        hidden_width: 8,
        ..Default::default()
    };
    let flat = train(heavy.init(N_FEATURES, Head::Classification), &separable(3, m, 0.3), &heavy)
        .map_err(|e| e.to_string())?;
    let out = flat.params.predict(test_set.x.view()).unwrap();
    let deviation = out.iter().map(|v| (v - 0.5).abs()).fold(0.0, f64::max);
    check(
        accuracy >= 0.95 && deviation <= 0.01,
        format!("test accuracy {:.1}% with the default budget; lambda 1e6 max |h - 0.5| = {deviation:.1e}", 100.0 * accuracy),
    )
}

/// Runs the default 100-option pipeline twice with different worker counts.
fn end_to_end_determinism(dirs: &[&Path; 2]) -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    for (dir, jobs) in dirs.iter().zip([1, 2]) {
        let cfg = PipelineConfig { jobs, ..Default::default() };
        let start = Instant::now();
        let bundle = run_pipeline(&cfg).map_err(|e| e.to_string())?;
        let elapsed = start.elapsed();
        write_bundle(&bundle, dir).map_err(|e| e.to_string())?;
        ok &= elapsed <= Duration::from_secs(60);
        notes.push(format!("jobs {jobs}: {elapsed:.1?}"));
    }
    let mut differing = Vec::new();
    for name in REPORT_FILES {
        let a = std::fs::read(dirs[0].join(name)).map_err(|e| e.to_string())?;
        let b = std::fs::read(dirs[1].join(name)).map_err(|e| e.to_string())?;
        if a != b {
            differing.push(name);
        }
    }
    ok &= differing.is_empty();
    notes.push(if differing.is_empty() {
        "all report files byte-identical".into()
    } else {
        format!("differing: {differing:?}")
    });
    check(ok, notes.join(", "))
}

fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>), String> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| e.to_string())?;
    let header = rdr.headers().map_err(|e| e.to_string())?.iter().map(String::from).collect();
    let rows = rdr
        .records()
        .map(|r| r.map(|r| r.iter().map(String::from).collect()))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    Ok((header, rows))
}

fn report_schema(dir: &Path) -> Outcome {
    let mut problems = Vec::new();
    let metrics: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.join("metrics.json")).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
    let methods = metrics["methods"].as_array().cloned().unwrap_or_default();
    let names: Vec<&str> = methods.iter().filter_map(|m| m["method"].as_str()).collect();
    if names != ["qrm", "classifier", "regressor"] {
        problems.push(format!("method table lists {names:?}"));
    }
    for m in &methods {
        for key in ["accuracy", "precision", "recall", "mean_relative_error", "counts"] {
            if m.get(key).is_none() {
                problems.push(format!("method row lacks {key}"));
            }
        }
    }
    let published = metrics["published"]["results"].as_array().cloned().unwrap_or_default();
    let reference = [(0.4977, 0.5577, 0.5243), (0.5636, 0.5956, 0.7022), (0.5542, 0.6032, 0.6129)];
    let shipped: Vec<(f64, f64, f64)> = published
        .iter()
        .map(|r| (r["accuracy"].as_f64().unwrap_or(f64::NAN), r["precision"].as_f64().unwrap_or(f64::NAN), r["recall"].as_f64().unwrap_or(f64::NAN)))
        .collect();
    if shipped != reference || published.first().and_then(|r| r["error"].as_f64()) != Some(0.12) {
        problems.push("published reference values differ".into());
    }
    let sizes: Vec<u64> = metrics["published"]["splits"]
        .as_array()
        .map(|a| a.iter().filter_map(|s| s["options"].as_u64()).collect())
        .unwrap_or_default();
    if sizes != [132_912, 13_401, 23_549] || PUBLISHED_SPLITS.len() != 3 || PUBLISHED_RESULTS.len() != 3 {
        problems.push(format!("published split sizes {sizes:?}"));
    }

    let (header, rows) = read_csv(&dir.join("threshold_curve.csv"))?;
    if header != ["method", "c", "accuracy", "precision", "recall", "predicted_positive"] {
        problems.push(format!("threshold curve header {header:?}"));
    }
    let curve: Vec<&Vec<String>> = rows.iter().filter(|r| r[0] == "classifier").collect();
    let grid_ok = curve.len() == 101
        && curve
            .iter()
            .enumerate()
            .all(|(k, r)| r[1].parse::<f64>().is_ok_and(|c| (c - k as f64 / 100.0).abs() < 1e-12));
    let buys: Vec<usize> = curve.iter().filter_map(|r| r[5].parse().ok()).collect();
    let monotone = buys.len() == curve.len() && buys.windows(2).all(|w| w[1] <= w[0]);
    let ends_ok = curve.first().is_some_and(|r| r[4] == "1.0" || r[4] == "1")
        && curve.last().is_some_and(|r| r[5] == "0" && r[3].is_empty());
    let qrm_row = rows.iter().filter(|r| r[0] == "qrm" && r[1].is_empty()).count() == 1;
    if !(grid_ok && monotone && ends_ok && qrm_row) {
        problems.push(format!("threshold curve: grid {grid_ok}, monotone buys {monotone}, extremes {ends_ok}, qrm point {qrm_row}"));
    }

    let (header, rows) = read_csv(&dir.join("pr_curve.csv"))?;
    if header != ["method", "c", "recall", "precision"] || rows.len() != 102 || !rows.iter().any(|r| r[0] == "qrm") {
        problems.push("precision-recall curve lacks the QRM reference point".into());
    }

    let (header, rows) = read_csv(&dir.join("moneyness_bins.csv"))?;
    let widths_ok = rows.iter().all(|r| {
        let (lo, hi) = (r[2].parse::<f64>().unwrap_or(f64::NAN), r[3].parse::<f64>().unwrap_or(f64::NAN));
        ((hi - lo) - MONEYNESS_STEP).abs() < 1e-12
    });
    let mut binned: Vec<&str> = rows.iter().map(|r| r[0].as_str()).collect();
    binned.dedup();
    if header[..4] != ["method", "bin", "lower", "upper"] || !widths_ok || binned != ["qrm", "classifier", "regressor"] {
        problems.push(format!("moneyness bins: widths {widths_ok}, methods {binned:?}"));
    }

    let ours: Vec<String> = methods
        .iter()
        .map(|m| {
            let pct = |k: &str| m[k].as_f64().map_or("n/a".into(), |v| format!("{:.1}", 100.0 * v));
            format!("{} {}/{}/{}", m["method"].as_str().unwrap_or("?"), pct("accuracy"), pct("precision"), pct("recall"))
        })
        .collect();
    check(
        problems.is_empty(),
        if problems.is_empty() {
            format!("schema complete; synthetic accuracy/precision/recall: {}", ours.join(", "))
        } else {
            problems.join("; ")
        },
    )
}

fn main() {
    let tmp = tempfile::tempdir().expect("temporary directory");
    let (a, b) = (tmp.path().join("run_a"), tmp.path().join("run_b"));
    let criteria: Vec<Criterion> = vec![
        ("manufactured-solution recovery", Box::new(manufactured_recovery_criterion)),
        ("regularization convergence", Box::new(regularization_convergence)),
        ("ill-posedness demo", Box::new(ill_posedness_demo)),
        ("optimality and feasibility", Box::new(optimality_and_feasibility)),
        ("discrete-gradient correctness", Box::new(gradient_correctness)),
        ("metric exactness", Box::new(metric_exactness)),
        ("ML sanity", Box::new(ml_sanity)),
        ("end-to-end determinism", Box::new(|| end_to_end_determinism(&[&a, &b]))),
        ("report schema", Box::new(|| report_schema(&a))),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|_| Err("panicked".into()));
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {}: {tag} {name}: {detail}", k + 1);
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
