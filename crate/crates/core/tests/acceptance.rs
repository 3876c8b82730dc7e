//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use penlearn::data::{Label, Sequence, SyntheticConfig};
use penlearn::harness::{report, run_cv, write_results, CVResult, ExperimentConfig};
use penlearn::learn::{
    linear_loss_and_gradient, mmit_leaf_value, squared_hinge, IntervalDataset, MlpModel,
    TrainOptions,
};
use penlearn::penaltypath::{
    count_label_errors, error_function, model_selection_path, target_interval, TargetInterval,
};
use penlearn::segment::{brute_force_opart, opart, segment_costs};

type Outcome = Result<String, String>;

fn random_sequence(rng: &mut ChaCha8Rng, id: &str, max_len: usize) -> Sequence {
    let n = rng.random_range(1..=max_len);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let mut mean = 0.0;
    let values = (0..n)
        .map(|_| {
            if rng.random_bool(0.2) {
                mean = rng.random_range(-5.0..5.0);
            }
            mean + noise.sample(rng)
        })
        .collect();
    Sequence::from_values(id, values).unwrap()
}

/// Random non-overlapping labels over positions `1..=n`.
fn random_labels(rng: &mut ChaCha8Rng, id: &str, n: usize) -> Vec<Label> {
    let mut labels = Vec::new();
    let mut start = 1i64;
    while start < n as i64 {
        let end = (start + rng.random_range(1..=8)).min(n as i64);
        if rng.random_bool(0.6) {
            labels.push(Label {
                sequence_id: id.to_string(),
                start,
                end,
                changes: rng.random_range(0..=1),
            });
        }
        start = end + 1;
    }
    labels
}

fn positions_of(seq: &Sequence, changepoints: &[usize]) -> Vec<f64> {
    changepoints
        .iter()
        .map(|&i| seq.changepoint_position(i))
        .collect()
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut checked = 0;
    for s in 0..200 {
        let seq = random_sequence(&mut rng, &format!("s{s}"), 12);
        for lambda in [0.1, 1.0, 10.0, 100.0] {
            let fast = opart(seq.values(), lambda).unwrap();
            let slow = brute_force_opart(seq.values(), lambda).unwrap();
            if fast.changepoints != slow.changepoints {
                return Err(format!(
                    "{:?} at λ={lambda}: opart {:?}, brute force {:?}",
                    seq.values(),
                    fast.changepoints,
                    slow.changepoints
                ));
            }
            checked += 1;
        }
    }
    Ok(format!("{checked} (sequence, λ) pairs identical"))
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let grid: Vec<f64> = (0..100)
        .map(|i| 10f64.powf(-3.0 + 7.0 * i as f64 / 99.0))
        .collect();
    for s in 0..50 {
        let id = format!("s{s}");
        let seq = random_sequence(&mut rng, &id, 60);
        let labels = random_labels(&mut rng, &id, seq.len());
        let costs = segment_costs(seq.values(), seq.len()).unwrap();
        let path = model_selection_path(&costs);
        let errfun = error_function(&seq, &labels, seq.len()).unwrap();
        for &lambda in &grid {
            let seg = opart(seq.values(), lambda).unwrap();
            if path.segments_at(lambda) != seg.segment_count() {
                return Err(format!(
                    "{id} λ={lambda}: path {} segments, opart {}",
                    path.segments_at(lambda),
                    seg.segment_count()
                ));
            }
            let direct = count_label_errors(&positions_of(&seq, &seg.changepoints), &labels);
            let lookup = errfun.errors_at(lambda.ln());
            if direct != lookup {
                return Err(format!(
                    "{id} λ={lambda}: lookup {lookup:?}, direct {direct:?}"
                ));
            }
        }
    }
    Ok("50 sequences × 100 penalties agree".into())
}

fn criterion_3() -> Outcome {
    let seq = Sequence::from_values("s1", vec![1.0, 1.0, 1.0, 5.0, 5.0, 5.0]).unwrap();
    let labels = [Label {
        sequence_id: "s1".into(),
        start: 2,
        end: 5,
        changes: 1,
    }];
    let target = target_interval(&error_function(&seq, &labels, 6).unwrap());
    // Brute-force oracle: bisect the λ where the label error flips.
    let errors = |lambda: f64| {
        let seg = brute_force_opart(seq.values(), lambda).unwrap();
        count_label_errors(&positions_of(&seq, &seg.changepoints), &labels).total()
    };
    let (mut lo, mut hi) = (1.0, 100.0);
    if errors(lo) != 0 || errors(hi) != 1 {
        return Err("oracle bracket does not straddle the flip".into());
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if errors(mid) == 0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let ok = target.lower == f64::NEG_INFINITY
        && (target.upper - 24f64.ln()).abs() <= 1e-9
        && (target.upper - hi.ln()).abs() <= 1e-9;
    let line = format!(
        "target ({}, {}), oracle flip at λ={hi}",
        target.lower, target.upper
    );
    if ok {
        Ok(line)
    } else {
        Err(line)
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-7)
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    for _ in 0..10_000 {
        let lower = if rng.random_bool(0.2) {
            f64::NEG_INFINITY
        } else {
            rng.random_range(-5.0..5.0)
        };
        let upper = if rng.random_bool(0.2) {
            f64::INFINITY
        } else {
            lower.max(-5.0) + rng.random_range(0.01..6.0)
        };
        let margin = [0.0, 0.5, 1.0][rng.random_range(0..3)];
        let yhat = rng.random_range(-10.0..10.0);
        let (loss, _) = squared_hinge(yhat, &TargetInterval { lower, upper }, margin);
        let inside = lower + margin <= yhat && yhat <= upper - margin;
        if (loss == 0.0) != inside {
            return Err(format!(
                "hinge zero region wrong at ŷ={yhat}, [{lower}, {upper}], m={margin}"
            ));
        }
    }

    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for case in 0..120 {
        let n = rng.random_range(3..12);
        let width = rng.random_range(1..5);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..width).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let targets: Vec<TargetInterval> = (0..n)
            .map(|_| {
                let lower = rng.random_range(-3.0..1.0);
                TargetInterval {
                    lower,
                    upper: lower + rng.random_range(0.5..2.0),
                }
            })
            .collect();
        let names = (0..width).map(|j| format!("x{j}")).collect();
        let data = IntervalDataset::new(&rows, targets, names).unwrap();

        let params: Vec<f64> = (0..=width).map(|_| rng.random_range(-3.0..3.0)).collect();
        let mut grad = vec![0.0; params.len()];
        linear_loss_and_gradient(&params, &data, 1.0, &mut grad);
        let mut scratch = vec![0.0; params.len()];
        for i in 0..params.len() {
            let mut p = params.clone();
            p[i] += h;
            let up = linear_loss_and_gradient(&p, &data, 1.0, &mut scratch);
            p[i] -= 2.0 * h;
            let down = linear_loss_and_gradient(&p, &data, 1.0, &mut scratch);
            worst = worst.max(rel_err(grad[i], (up - down) / (2.0 * h)));
        }

        let hidden = rng.random_range(1..=3);
        let mut sizes = vec![width];
        sizes.extend((0..hidden).map(|_| rng.random_range(2..6)));
        sizes.push(1);
        let model = MlpModel::init(sizes.clone(), case as u64);
        let mut params = model.params.clone();
        // Random nonzero biases so units sit away from their kinks.
        params
            .iter_mut()
            .for_each(|p| *p += rng.random_range(-0.5..0.5));
        let model = MlpModel::new(sizes.clone(), params.clone(), 0).unwrap();
        let (_, grad) = model.loss_and_gradient(&data, 1.0);
        for i in 0..params.len() {
            let mut p = params.clone();
            p[i] += h;
            let up = MlpModel::new(sizes.clone(), p.clone(), 0)
                .unwrap()
                .loss_and_gradient(&data, 1.0)
                .0;
            p[i] -= 2.0 * h;
            let down = MlpModel::new(sizes.clone(), p, 0)
                .unwrap()
                .loss_and_gradient(&data, 1.0)
                .0;
            worst = worst.max(rel_err(grad[i], (up - down) / (2.0 * h)));
        }
    }
    let line = format!("10⁴ hinge cases exact; max gradient relative error {worst:.2e} over 120 linear + 120 MLP problems");
    if worst < 1e-4 {
        Ok(line)
    } else {
        Err(line)
    }
}

fn leaf_loss(targets: &[TargetInterval], margin: f64, y: f64) -> f64 {
    targets.iter().map(|t| squared_hinge(y, t, margin).0).sum()
}

fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    while b - a > 1e-11 {
        if f(c) <= f(d) {
            b = d;
        } else {
            a = c;
        }
        c = b - r * (b - a);
        d = a + r * (b - a);
    }
    0.5 * (a + b)
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    for case in 0..200 {
        let n = rng.random_range(1..10);
        let targets: Vec<TargetInterval> = (0..n)
            .map(|_| {
                let lower = if rng.random_bool(0.15) {
                    f64::NEG_INFINITY
                } else {
                    rng.random_range(-10.0..10.0)
                };
                let upper = if rng.random_bool(0.15) {
                    f64::INFINITY
                } else {
                    lower.max(-10.0) + rng.random_range(0.1..5.0)
                };
                TargetInterval { lower, upper }
            })
            .collect();
        let margin = [0.0, 1.0, 2.0][rng.random_range(0..3)];
        let fit = mmit_leaf_value(&targets, margin);
        let f = |y: f64| leaf_loss(&targets, margin, y);
        let y_star = golden_section(f, -40.0, 40.0);
        let loss_star = f(y_star);
        let loss_ok =
            (fit.loss - loss_star).abs() <= 1e-8 && (f(fit.value) - fit.loss).abs() <= 1e-8;
        // A zero minimum is attained on a whole interval; otherwise the minimizer is unique.
        let value_ok = if loss_star <= 1e-12 {
            f(fit.value) == 0.0
        } else {
            (fit.value - y_star).abs() <= 1e-6
        };
        if !(loss_ok && value_ok) {
            return Err(format!(
                "case {case}: sweep ({}, {}), golden section ({y_star}, {loss_star})",
                fit.value, fit.loss
            ));
        }
    }
    Ok("200 interval sets match golden-section search".into())
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let grid: Vec<f64> = (0..60)
        .map(|i| 10f64.powf(-3.0 + i as f64 / 10.0))
        .collect();
    for s in 0..100 {
        let seq = random_sequence(&mut rng, &format!("s{s}"), 40);
        let path = model_selection_path(&segment_costs(seq.values(), seq.len()).unwrap());
        if path
            .pieces()
            .windows(2)
            .any(|w| w[0].segments <= w[1].segments)
        {
            return Err(format!("s{s}: path sizes not decreasing"));
        }
        let counts: Vec<usize> = grid
            .iter()
            .map(|&l| opart(seq.values(), l).unwrap().changepoints.len())
            .collect();
        if counts.windows(2).any(|w| w[1] > w[0]) {
            return Err(format!("s{s}: changepoint counts {counts:?}"));
        }
    }
    Ok("100 sequences monotone along the path".into())
}

fn benchmark_config() -> ExperimentConfig {
    ExperimentConfig {
        synthetic: Some(SyntheticConfig::default()),
        seed: 2024,
        keep_loss_traces: true,
        ..ExperimentConfig::default()
    }
}

fn medians(results: &[CVResult]) -> BTreeMap<String, f64> {
    report(results)
        .into_iter()
        .filter_map(|r| r.median.map(|m| (r.model, m)))
        .collect()
}

fn criterion_7(results: &[CVResult], seconds: f64) -> Outcome {
    let m = medians(results);
    let get = |name: &str| m.get(name).copied().unwrap_or(f64::NAN);
    let (mlp4, linear2, bic) = (get("mlp.4"), get("linear.2"), get("BIC.1"));
    let failures = results.iter().filter(|r| r.outcome.is_err()).count();
    let line = format!(
        "{} rows ({failures} failed), medians mlp.4={mlp4:.2} linear.2={linear2:.2} BIC.1={bic:.2}, {seconds:.0}s",
        results.len()
    );
    let ok =
        results.len() == 78 && mlp4 >= 90.0 && linear2 >= 90.0 && bic < mlp4 && seconds < 600.0;
    if ok {
        Ok(line)
    } else {
        Err(line)
    }
}

fn criterion_8(first: &PathBuf, config: &ExperimentConfig) -> Outcome {
    let mut again = config.clone();
    // A different worker count must not change the bytes either.
    again.threads = Some(config.threads.map_or(2, |t| t + 1));
    let results = run_cv(&again).map_err(|e| e.to_string())?;
    let second = first.with_file_name("results_again.csv");
    write_results(&second, &results).map_err(|e| e.to_string())?;
    let a = std::fs::read(first).unwrap();
    let b = std::fs::read(&second).unwrap();
    if a == b {
        Ok(format!("results.csv identical ({} bytes)", a.len()))
    } else {
        Err("results.csv differs between runs".into())
    }
}

/// Recompute the stopping decision from the loss trace alone.
fn check_trace(losses: &[f64], options: &TrainOptions) -> Option<String> {
    let mut best = f64::INFINITY;
    let mut best_t = 0;
    for (i, &loss) in losses.iter().enumerate() {
        let t = i + 1;
        if loss < best - options.min_improvement {
            best = loss;
            best_t = t;
        } else if t - best_t >= options.patience {
            return (t != losses.len()).then(|| format!("should have stopped at {t}"));
        }
    }
    (losses.len() != options.max_iterations)
        .then(|| format!("ran {} iterations without stopping", losses.len()))
}

fn criterion_9(results: &[CVResult], options: &TrainOptions) -> Outcome {
    let mut runs = 0;
    let mut early = 0;
    for r in results {
        for report in &r.training {
            runs += 1;
            early += report.early_stopped as usize;
            if report.stop_iteration > options.max_iterations
                || report.stop_iteration != report.losses.len()
            {
                return Err(format!(
                    "{} fold {}: stop iteration {}",
                    r.model, r.fold, report.stop_iteration
                ));
            }
            if let Some(problem) = check_trace(&report.losses, options) {
                return Err(format!("{} fold {}: {problem}", r.model, r.fold));
            }
            if report.early_stopped
                && report.stop_iteration - report.best_iteration != options.patience
            {
                return Err(format!(
                    "{} fold {}: early stop off by patience",
                    r.model, r.fold
                ));
            }
        }
    }
    if runs == 0 {
        return Err("no training runs recorded".into());
    }
    Ok(format!(
        "{runs} training runs obey the rule ({early} stopped early)"
    ))
}

fn criterion_10() -> Option<Outcome> {
    let dir = PathBuf::from(std::env::var_os("PENLEARN_BENCHMARK_DIR")?);
    let mut lines = Vec::new();
    let mut any_dataset_ok = false;
    let mut datasets: Vec<PathBuf> = std::fs::read_dir(&dir)
        .ok()?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("sequences.csv").exists() && p.join("labels.csv").exists())
        .collect();
    datasets.sort();
    for d in datasets {
        let config = ExperimentConfig {
            sequences: Some(d.join("sequences.csv")),
            labels: Some(d.join("labels.csv")),
            folds_file: d.join("folds.csv").exists().then(|| d.join("folds.csv")),
            ..ExperimentConfig::default()
        };
        let results = match run_cv(&config) {
            Ok(r) => r,
            Err(e) => return Some(Err(format!("{}: {e}", d.display()))),
        };
        let m = medians(&results);
        let mlp = m.get("mlp.4").copied().unwrap_or(f64::NAN);
        let ok = ["BIC.1", "linear.1", "mmit.1"]
            .iter()
            .all(|b| m.get(*b).is_some_and(|&v| mlp >= v));
        any_dataset_ok |= ok;
        lines.push(format!("{}: mlp.4 median {mlp:.1}", d.display()));
    }
    Some(if any_dataset_ok {
        Ok(lines.join("; "))
    } else {
        Err(format!(
            "mlp.4 not ahead on any dataset: {}",
            lines.join("; ")
        ))
    })
}

fn main() {
    let mut failed = 0;
    let mut emit = |n: u32, outcome: Outcome, seconds: f64| match outcome {
        Ok(msg) => println!("criterion {n}: PASS ({seconds:.1}s) {msg}"),
        Err(msg) => {
            failed += 1;
            println!("criterion {n}: FAIL ({seconds:.1}s) {msg}");
        }
    };
    let timed = |f: fn() -> Outcome| {
        let start = Instant::now();
        let out = f();
        (out, start.elapsed().as_secs_f64())
    };
    for (n, f) in [
        (1, criterion_1 as fn() -> Outcome),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
    ] {
        let (out, s) = timed(f);
        emit(n, out, s);
    }

    let config = benchmark_config();
    let dir = tempfile::tempdir().unwrap();
    let results_path = dir.path().join("results.csv");
    let start = Instant::now();
    match run_cv(&config) {
        Ok(results) => {
            let seconds = start.elapsed().as_secs_f64();
            write_results(&results_path, &results).unwrap();
            emit(7, criterion_7(&results, seconds), seconds);
            let start = Instant::now();
            let out = criterion_8(&results_path, &config);
            emit(8, out, start.elapsed().as_secs_f64());
            emit(9, criterion_9(&results, &config.optimizer), 0.0);
        }
        Err(e) => {
            for n in 7..=9 {
                emit(n, Err(format!("benchmark did not run: {e}")), 0.0);
            }
        }
    }

    match criterion_10() {
        Some(out) => emit(10, out, 0.0),
        None => println!(
            "criterion 10: SKIP (set PENLEARN_BENCHMARK_DIR to run it on local benchmark data)"
        ),
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
