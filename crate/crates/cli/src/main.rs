//! `benign-xor`: train single runs, verify lemma suites and sweep heatmaps.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use benign_xor::config::RunConfig;
use benign_xor::decomposition::DecompositionTracker;
use benign_xor::eval::{bayes_rate, cnn_test_error};
use benign_xor::experiments::{
    contour_slope, emit_csv, emit_svg, parse_range, read_csv, run_grid, trend_along_axis1, trend_along_axis2, truncate_heatmap, write_svg,
    FixedParams, GridMode, GridSpec, HeatGrid, Palette, FIGURE_ETA,
};
use benign_xor::report::{run_suite, LemmaReport, Suite};
use benign_xor::train::{classify_regime, train};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

/// Built-in configurations used by `verify`.
const VERIFY_CONFIGS: [(Suite, &str); 5] = [
    (Suite::Sandwich, include_str!("../../../configs/reference.toml")),
    (Suite::Virtual, include_str!("../../../configs/virtual_small_angle.toml")),
    (Suite::Concentration, include_str!("../../../configs/concentration.toml")),
    (Suite::Ratios, include_str!("../../../configs/classic_ratio.toml")),
    (Suite::Growth, include_str!("../../../configs/reference.toml")),
];

#[derive(Parser)]
#[command(name = "benign-xor", version, about = "Two-layer ReLU CNN on XOR-type data: training, lemma checks and heatmap sweeps")]
struct Cli {
    /// Worker threads for grid sweeps (defaults to all cores).
    #[arg(long, global = true, env = "BENIGN_XOR_WORKERS")]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one network and write its trace, decomposition, checkpoints and manifest.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the seed in the config file.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "run")]
        out: PathBuf,
    },
    /// Run one lemma-verification suite and write a JSON report.
    Lemmas {
        #[arg(long, value_parser = parse_suite)]
        suite: Suite,
        /// Run configuration (TOML); built-in defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Sweep a grid and render its heatmap, or truncate an existing grid.
    Heatmap(HeatmapArgs),
    /// Run lemma suites with the built-in configurations.
    Verify {
        /// Run every suite.
        #[arg(long, conflicts_with = "suite")]
        all: bool,
        #[arg(long, value_parser = parse_suite)]
        suite: Vec<Suite>,
        /// Directory for one JSON report per suite.
        #[arg(long)]
        report_dir: Option<PathBuf>,
    },
}

#[derive(Args)]
struct HeatmapArgs {
    /// fix_d_vary_n, fix_n_vary_d or custom.
    #[arg(long, default_value = "fix_d_vary_n", value_parser = parse_mode)]
    mode: GridMode,
    #[arg(long, default_value_t = 200)]
    d: usize,
    #[arg(long, default_value_t = 80)]
    n: usize,
    /// Row values `lo:hi:count` (log-spaced integers) for modes that vary n.
    #[arg(long)]
    n_range: Option<String>,
    /// Row values `lo:hi:count` (log-spaced integers) for fix_n_vary_d.
    #[arg(long)]
    d_range: Option<String>,
    /// Column values `lo:hi:count` (log-spaced); ‖μ‖ itself in custom mode.
    #[arg(long, alias = "mu-range")]
    ratio_range: Option<String>,
    #[arg(long, default_value_t = 1)]
    repeats: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 40)]
    m: usize,
    #[arg(long, default_value_t = 0.01)]
    sigma_0: f64,
    #[arg(long, default_value_t = FIGURE_ETA)]
    eta: f64,
    #[arg(long, default_value_t = 200)]
    epochs: u64,
    #[arg(long, default_value_t = 1.0)]
    sigma_p: f64,
    #[arg(long, default_value_t = 0.1)]
    flip_p: f64,
    #[arg(long, default_value_t = 0.8)]
    cos_theta: f64,
    #[arg(long, default_value_t = 1000)]
    n_test: usize,
    /// Train every repeat to loss 0.01 (with a step budget) instead of `--epochs`.
    #[arg(long)]
    converge: bool,
    /// Accuracy threshold for the truncated (two-colour) heatmap.
    #[arg(long)]
    truncate: Option<f64>,
    /// Existing grid CSV to truncate instead of running a sweep.
    #[arg(long = "in")]
    input: Option<PathBuf>,
    /// Output directory for a sweep, or the SVG path when truncating `--in`.
    #[arg(long, default_value = "heatmap")]
    out: PathBuf,
}

fn parse_suite(s: &str) -> Result<Suite, String> {
    Suite::parse(s).map_err(|e| e.to_string())
}

fn parse_mode(s: &str) -> Result<GridMode, String> {
    GridMode::parse(s).map_err(|e| e.to_string())
}

fn workers(cli: Option<usize>) -> usize {
    cli.filter(|&w| w > 0).unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("cannot create {}", path.display()))?))
}

fn cmd_train(config: &Path, seed: Option<u64>, out: &Path) -> Result<()> {
    let mut cfg = RunConfig::load(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    let t0 = Instant::now();
    let (basis, dataset, init) = cfg.instance()?;
    let regime = classify_regime(&cfg.regime_inputs()?)?;
    dataset.write_jsonl(create(&out.join("data.jsonl"))?)?;
    init.write_checkpoint(create(&out.join("init.ckpt"))?)?;

    let mut decomp = DecompositionTracker::new(cfg.m, &dataset);
    let trace = train(&dataset, init, &cfg.train_config(), &mut [&mut decomp])?;
    trace.write_csv(create(&out.join("trace.csv"))?)?;
    decomp.write_csv(create(&out.join("decomp.csv"))?)?;
    trace.weights_final.write_checkpoint(create(&out.join("final.ckpt"))?)?;

    let test = cnn_test_error(&trace.weights_final, &basis, cfg.sigma_p, cfg.flip_p, cfg.n_test, cfg.seed)?;
    let mono = decomp.monotonicity();
    let last = trace.final_row();
    let manifest = json!({
        "format": "benign-xor-run-manifest",
        "version": 1,
        "package_version": env!("CARGO_PKG_VERSION"),
        "scalar": "f64",
        "seed": cfg.seed,
        "config": cfg,
        "resolved": { "mu_norm": cfg.resolved_mu_norm()?, "sigma_0": cfg.resolved_sigma_0()?, "preset": cfg.resolved_preset() },
        "regime": regime,
        "result": {
            "final_step": trace.weights_final.step,
            "final_loss": last.loss,
            "train_accuracy": last.train_accuracy,
            "stopped_at": trace.stopped_at,
            "max_lossderiv_ratio": trace.max_lossderiv_ratio(),
            "test": test,
            "bayes_error": bayes_rate(cfg.flip_p)?,
        },
        "decomposition": {
            "max_reconstruction_error": decomp.max_reconstruction_error(),
            "containment_held": mono.containment_held,
            "max_lost_entries": mono.max_lost_entries,
            "max_u_sign_flips": decomp.max_u_sign_flips(),
            "max_v_sign_flips": decomp.max_v_sign_flips(),
        },
        "files": ["data.jsonl", "init.ckpt", "final.ckpt", "trace.csv", "decomp.csv"],
    });
    serde_json::to_writer_pretty(create(&out.join("manifest.json"))?, &manifest)?;
    println!(
        "trained {} steps: loss {:.5}, test accuracy {:.4} ± {:.4}, {:.1}s -> {}",
        trace.weights_final.step,
        last.loss,
        test.accuracy(),
        test.stderr,
        t0.elapsed().as_secs_f64(),
        out.display()
    );
    Ok(())
}

fn print_report(rep: &LemmaReport) {
    for c in &rep.checks {
        let status = if c.pass { "PASS" } else { "FAIL" };
        let cmp = serde_json::to_value(c.comparison).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
        println!("  {status}  {:<60} {:>14.6e} {cmp} {:<14.6e}", c.name, c.observed, c.threshold);
    }
    for n in &rep.notes {
        println!("  note  {n}");
    }
    println!("{}: {}", rep.suite.as_str(), if rep.pass { "PASS" } else { "FAIL" });
}

fn write_report(rep: &LemmaReport, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    rep.write(create(path)?)?;
    Ok(())
}

fn cmd_lemmas(suite: Suite, config: Option<&Path>, report: Option<&Path>) -> Result<bool> {
    let cfg = match config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let rep = run_suite(suite, &cfg)?;
    print_report(&rep);
    if let Some(p) = report {
        write_report(&rep, p)?;
    }
    Ok(rep.pass)
}

fn cmd_verify(all: bool, suites: &[Suite], report_dir: Option<&Path>) -> Result<bool> {
    if !all && suites.is_empty() {
        bail!("pass --all or at least one --suite");
    }
    let mut ok = true;
    for (suite, text) in VERIFY_CONFIGS {
        if !all && !suites.contains(&suite) {
            continue;
        }
        let t0 = Instant::now();
        let rep = run_suite(suite, &RunConfig::from_toml_str(text)?)?;
        print_report(&rep);
        println!("  ({:.1}s)", t0.elapsed().as_secs_f64());
        if let Some(dir) = report_dir {
            write_report(&rep, &dir.join(format!("{}.json", suite.as_str())))?;
        }
        ok &= rep.pass;
    }
    Ok(ok)
}

fn grid_spec(a: &HeatmapArgs) -> Result<GridSpec> {
    let axis1 = match a.mode {
        GridMode::FixDVaryN | GridMode::Custom => parse_range(a.n_range.as_deref().unwrap_or("4:598:6"), true)?,
        GridMode::FixNVaryD => parse_range(a.d_range.as_deref().context("fix_n_vary_d needs --d-range")?, true)?,
    };
    let axis2 = parse_range(a.ratio_range.as_deref().unwrap_or("0.1:10:6"), false)?;
    let fixed = FixedParams {
        d: a.d,
        n: a.n,
        sigma_p: a.sigma_p,
        flip_p: a.flip_p,
        cos_theta: a.cos_theta,
        m: a.m,
        sigma_0: a.sigma_0,
        eta: a.eta,
        epochs: a.epochs,
        n_test: a.n_test,
        converge: a.converge,
    };
    let spec = GridSpec { mode: a.mode, axis1, axis2, fixed, base_seed: a.seed, repeats: a.repeats };
    spec.validate()?;
    Ok(spec)
}

fn print_trends(grid: &HeatGrid) {
    let (row_label, col_label) = grid.mode.axis_labels();
    let col = grid.cols() / 2;
    let row = grid.rows() - 1;
    let fmt = |x: Option<f64>| x.map_or("n/a".to_string(), |v| format!("{v:.3}"));
    println!("spearman(accuracy, {row_label}) at {col_label} = {:.4}: {}", grid.axis2[col], fmt(trend_along_axis1(grid, col)));
    println!("spearman(accuracy, {col_label}) at {row_label} = {:.4}: {}", grid.axis1[row], fmt(trend_along_axis2(grid, row)));
}

fn truncated_outputs(grid_results: &[benign_xor::experiments::CellResult], threshold: f64, svg: &Path) -> Result<()> {
    let trunc = truncate_heatmap(grid_results, threshold)?;
    write_svg(&trunc, svg, Palette::Binary, &format!("test accuracy >= {threshold}"))?;
    let fit = contour_slope(&trunc);
    match fit.slope {
        Some(s) => println!("contour slope at {threshold}: {s:.3} (orthogonal fit, {} boundary points)", fit.points.len()),
        None => println!("contour slope at {threshold}: no boundary ({} points)", fit.points.len()),
    }
    Ok(())
}

fn cmd_heatmap(a: &HeatmapArgs, workers: usize) -> Result<()> {
    if let Some(input) = &a.input {
        let threshold = a.truncate.context("--in requires --truncate")?;
        let results = read_csv(File::open(input).with_context(|| format!("cannot open {}", input.display()))?)?;
        if let Some(dir) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        truncated_outputs(&results, threshold, &a.out)?;
        println!("wrote {}", a.out.display());
        return Ok(());
    }
    let spec = grid_spec(a)?;
    fs::create_dir_all(&a.out).with_context(|| format!("cannot create {}", a.out.display()))?;
    let t0 = Instant::now();
    let run = run_grid(&spec, workers)?;
    emit_csv(&run.results, &a.out.join("grid.csv"))?;
    emit_svg(&run.results, &a.out.join("heatmap.svg"), Palette::Continuous)?;
    run.manifest.write(create(&a.out.join("manifest.json"))?)?;
    println!(
        "{}x{} grid, {} repeats, {} failed cells, {:.1}s on {workers} workers -> {}",
        spec.rows(),
        spec.cols(),
        spec.repeats,
        run.manifest.failed_cells,
        t0.elapsed().as_secs_f64(),
        a.out.display()
    );
    print_trends(&HeatGrid::from_results(&run.results)?);
    if let Some(threshold) = a.truncate {
        truncated_outputs(&run.results, threshold, &a.out.join("truncated.svg"))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Train { config, seed, out } => cmd_train(config, *seed, out).map(|_| true),
        Command::Lemmas { suite, config, report } => cmd_lemmas(*suite, config.as_deref(), report.as_deref()),
        Command::Heatmap(a) => cmd_heatmap(a, workers(cli.workers)).map(|_| true),
        Command::Verify { all, suite, report_dir } => cmd_verify(*all, suite, report_dir.as_deref()),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
