//! Deterministic parameter sweeps over `(n, ‖μ‖)` or `(d, ‖μ‖)` grids, their
//! truncated (binary) views, and the CSV / SVG / manifest artifacts.
//!
//! Every cell and repeat draws its randomness from
//! `derive_seed(base_seed, [i, j, repeat])`, so results do not depend on the
//! number of workers or on the order in which cells finish.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{build_basis, sample_dataset, DataConfig, Dataset, XorBasis};
use crate::error::{domain, Error, Result};
use crate::eval::cnn_test_error;
use crate::model::{init_weights, CnnWeights};
use crate::rng::{derive_seed, stream_rng, Stream};
use crate::stats::{linear_fit, log_space, spearman, LinearFit};
use crate::train::{train, Preset, TrainConfig, TrainHook, TrainTrace};

/// Learning rate of the figure-parity preset (see the README for why it
/// differs from the literal 1e-3).
pub const FIGURE_ETA: f64 = 1.0;
/// Loss level used for the `converge` horizon.
pub const CONVERGE_EPS: f64 = 0.01;
/// Multiple of `⌈nm / (η σp² d ε)⌉` granted to `converge` runs.
pub const CONVERGE_BUDGET_FACTOR: u64 = 20;

/// How the two grid axes map to `(n, d, ‖μ‖)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridMode {
    /// Rows are `n`, columns are `σp⁴ d / ‖μ‖⁴`, `d` fixed.
    FixDVaryN,
    /// Rows are `d`, columns are `n ‖μ‖⁴ / σp⁴`, `n` fixed.
    FixNVaryD,
    /// Rows are `n`, columns are `‖μ‖` itself, `d` fixed.
    Custom,
}

impl GridMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "fix_d_vary_n" => Ok(GridMode::FixDVaryN),
            "fix_n_vary_d" => Ok(GridMode::FixNVaryD),
            "custom" => Ok(GridMode::Custom),
            other => Err(Error::Config(format!("unknown grid mode `{other}`"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            GridMode::FixDVaryN => "fix_d_vary_n",
            GridMode::FixNVaryD => "fix_n_vary_d",
            GridMode::Custom => "custom",
        }
    }

    /// `(row axis, column axis)` labels.
    pub fn axis_labels(self) -> (&'static str, &'static str) {
        match self {
            GridMode::FixDVaryN => ("n", "σp⁴d/‖μ‖⁴"),
            GridMode::FixNVaryD => ("d", "n‖μ‖⁴/σp⁴"),
            GridMode::Custom => ("n", "‖μ‖"),
        }
    }

    /// Whether accuracy is expected to rise along the column axis.
    pub fn accuracy_rises_with_axis2(self) -> bool {
        !matches!(self, GridMode::FixDVaryN)
    }
}

/// `‖μ‖` realising the column value `axis2`.
pub fn derive_mu_norm(mode: GridMode, axis2: f64, d: usize, n: usize, sigma_p: f64) -> Result<f64> {
    if !(axis2 > 0.0) || !axis2.is_finite() {
        return domain(format!("axis2 value must be positive, got {axis2}"));
    }
    if d == 0 || n == 0 || !(sigma_p > 0.0) {
        return domain("d, n and sigma_p must be positive");
    }
    let sp4 = sigma_p.powi(4);
    Ok(match mode {
        GridMode::FixDVaryN => (sp4 * d as f64 / axis2).powf(0.25),
        GridMode::FixNVaryD => (axis2 * sp4 / n as f64).powf(0.25),
        GridMode::Custom => axis2,
    })
}

/// Parameters shared by every cell of a grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedParams {
    /// Dimension for modes with fixed `d`.
    pub d: usize,
    /// Sample size for `fix_n_vary_d`.
    pub n: usize,
    pub sigma_p: f64,
    pub flip_p: f64,
    pub cos_theta: f64,
    pub m: usize,
    pub sigma_0: f64,
    pub eta: f64,
    pub epochs: u64,
    pub n_test: usize,
    /// Train to `CONVERGE_EPS` with early stopping instead of a fixed `epochs`.
    pub converge: bool,
}

impl Default for FixedParams {
    fn default() -> Self {
        Self {
            d: 200,
            n: 80,
            sigma_p: 1.0,
            flip_p: 0.1,
            cos_theta: 0.8,
            m: 40,
            sigma_0: 0.01,
            eta: FIGURE_ETA,
            epochs: 200,
            n_test: 1000,
            converge: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub mode: GridMode,
    /// Row values (`n` or `d`); must be integers.
    pub axis1: Vec<f64>,
    pub axis2: Vec<f64>,
    pub fixed: FixedParams,
    pub base_seed: u64,
    pub repeats: usize,
}

fn strictly_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] > w[0])
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.axis1.is_empty() || self.axis2.is_empty() {
            return domain("grid axes must be nonempty");
        }
        if !strictly_increasing(&self.axis1) || !strictly_increasing(&self.axis2) {
            return domain("grid axis values must be strictly increasing");
        }
        if self.axis1.iter().any(|&v| v < 1.0 || v.fract() != 0.0) {
            return domain("row axis values must be positive integers");
        }
        if self.axis2.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return domain("column axis values must be positive");
        }
        if self.repeats == 0 {
            return domain("repeats must be at least 1");
        }
        let f = &self.fixed;
        if f.m == 0 || f.n_test == 0 || f.epochs == 0 {
            return domain("m, n_test and epochs must be at least 1");
        }
        if !(f.sigma_0 > 0.0) || !(f.sigma_p > 0.0) || !(f.eta > 0.0) {
            return domain("sigma_0, sigma_p and eta must be positive");
        }
        if self.mode == GridMode::FixNVaryD && f.n == 0 || self.mode != GridMode::FixNVaryD && f.d == 0 {
            return domain("the fixed dimension or sample size must be positive");
        }
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.axis1.len()
    }

    pub fn cols(&self) -> usize {
        self.axis2.len()
    }

    /// `(n, d, ‖μ‖)` of cell `(i, j)`.
    pub fn cell_params(&self, i: usize, j: usize) -> Result<(usize, usize, f64)> {
        if i >= self.rows() || j >= self.cols() {
            return Err(Error::Index(format!("cell ({i}, {j}) outside a {}x{} grid", self.rows(), self.cols())));
        }
        let a1 = self.axis1[i] as usize;
        let (n, d) = match self.mode {
            GridMode::FixNVaryD => (self.fixed.n, a1),
            _ => (a1, self.fixed.d),
        };
        let mu = derive_mu_norm(self.mode, self.axis2[j], d, n, self.fixed.sigma_p)?;
        Ok((n, d, mu))
    }

    /// Seed of repeat `rep` of cell `(i, j)`.
    pub fn seed(&self, i: usize, j: usize, rep: usize) -> u64 {
        derive_seed(self.base_seed, &[i as u64, j as u64, rep as u64])
    }

    fn train_config(&self, n: usize, d: usize) -> TrainConfig {
        let f = &self.fixed;
        let (epochs, early_stop) = if f.converge {
            (converge_budget(n, f.m, f.eta, f.sigma_p, d, CONVERGE_EPS), true)
        } else {
            (f.epochs, false)
        };
        TrainConfig {
            eta: f.eta,
            epochs,
            target_eps: CONVERGE_EPS,
            record_every: epochs,
            preset: Preset::for_angle(f.cos_theta),
            early_stop,
            keep_snapshots: false,
        }
    }
}

/// `CONVERGE_BUDGET_FACTOR · ⌈nm / (η σp² d ε)⌉`.
pub fn converge_budget(n: usize, m: usize, eta: f64, sigma_p: f64, d: usize, eps: f64) -> u64 {
    let base = (n as f64 * m as f64 / (eta * sigma_p * sigma_p * d as f64 * eps)).ceil().max(1.0);
    CONVERGE_BUDGET_FACTOR * base as u64
}

/// Parses `lo:hi:count` into `count` log-spaced values; with `integer`, values
/// are rounded and must stay strictly increasing.
pub fn parse_range(s: &str, integer: bool) -> Result<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || Error::Config(format!("range `{s}` is not lo:hi:count"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo: f64 = parts[0].trim().parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].trim().parse().map_err(|_| bad())?;
    let k: usize = parts[2].trim().parse().map_err(|_| bad())?;
    if !(lo > 0.0) || !(hi >= lo) || k == 0 || (k > 1 && hi == lo) {
        return Err(Error::Config(format!("range `{s}` needs 0 < lo < hi and count >= 1")));
    }
    let mut v = log_space(lo, hi, k);
    if integer {
        v.iter_mut().for_each(|x| *x = x.round());
        if !strictly_increasing(&v) {
            return Err(Error::Config(format!("range `{s}` has repeated values after rounding to integers")));
        }
    }
    Ok(v)
}

/// Outcome of one grid cell, averaged over repeats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub mode: GridMode,
    pub i: usize,
    pub j: usize,
    pub axis1: f64,
    pub axis2: f64,
    pub mu_norm: f64,
    /// Mean test accuracy over repeats; NaN for a failed cell.
    pub accuracy: f64,
    /// Binomial standard error over all `repeats · n_test` test points.
    pub stderr: f64,
    /// Mean final training loss over repeats.
    pub train_loss_final: f64,
    /// Seed of the first repeat.
    pub seed: u64,
    /// Failure message; `None` for a completed cell.
    pub error: Option<String>,
    /// Seconds spent on the cell; not part of the CSV.
    #[serde(skip)]
    pub wall_time: Option<f64>,
}

impl CellResult {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }
}

/// Everything one repeat of a cell trains on.
#[derive(Debug, Clone)]
pub struct CellInstance {
    pub seed: u64,
    pub basis: XorBasis<f64>,
    pub dataset: Dataset<f64>,
    pub init: CnnWeights<f64>,
    pub train: TrainConfig,
}

/// Draws basis, data and initialization for repeat `rep` of cell `(i, j)`.
pub fn cell_instance(spec: &GridSpec, i: usize, j: usize, rep: usize) -> Result<CellInstance> {
    spec.validate()?;
    let (n, d, mu) = spec.cell_params(i, j)?;
    let f = &spec.fixed;
    let seed = spec.seed(i, j, rep);
    let basis = build_basis::<f64, _>(d, mu, f.cos_theta, &mut stream_rng(seed, Stream::Basis))?;
    let data_cfg = DataConfig { n, sigma_p: f.sigma_p, flip_p: f.flip_p, seed };
    let dataset = sample_dataset(&basis, &data_cfg, &mut stream_rng(seed, Stream::Data))?;
    let init = init_weights(f.m, d, f.sigma_0, &mut stream_rng(seed, Stream::Init))?;
    Ok(CellInstance { seed, basis, dataset, init, train: spec.train_config(n, d) })
}

/// Trains one repeat with `hooks` attached; returns the test accuracy, the
/// final training loss and the trace.
pub fn run_repeat(spec: &GridSpec, inst: &CellInstance, hooks: &mut [&mut dyn TrainHook<f64>]) -> Result<(f64, f64, TrainTrace<f64>)> {
    let f = &spec.fixed;
    let trace = train(&inst.dataset, inst.init.clone(), &inst.train, hooks)?;
    let est = cnn_test_error(&trace.weights_final, &inst.basis, f.sigma_p, f.flip_p, f.n_test, inst.seed)?;
    Ok((est.accuracy(), trace.final_row().loss, trace))
}

/// Trains and evaluates every repeat of cell `(i, j)`.
pub fn run_cell(spec: &GridSpec, i: usize, j: usize) -> Result<CellResult> {
    spec.validate()?;
    let started = Instant::now();
    let (_, _, mu) = spec.cell_params(i, j)?;
    let attach = |e: Error| Error::Cell { i, j, source: Box::new(e) };
    let mut acc_sum = 0.0;
    let mut loss_sum = 0.0;
    for rep in 0..spec.repeats {
        let inst = cell_instance(spec, i, j, rep).map_err(attach)?;
        let (acc, loss, _) = run_repeat(spec, &inst, &mut []).map_err(attach)?;
        acc_sum += acc;
        loss_sum += loss;
    }
    let reps = spec.repeats as f64;
    let accuracy = acc_sum / reps;
    let stderr = (accuracy * (1.0 - accuracy) / (reps * spec.fixed.n_test as f64)).sqrt();
    Ok(CellResult {
        mode: spec.mode,
        i,
        j,
        axis1: spec.axis1[i],
        axis2: spec.axis2[j],
        mu_norm: mu,
        accuracy,
        stderr,
        train_loss_final: loss_sum / reps,
        seed: spec.seed(i, j, 0),
        error: None,
        wall_time: Some(started.elapsed().as_secs_f64()),
    })
}

/// Everything needed to reproduce a grid CSV bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub package_version: String,
    pub scalar: String,
    pub spec: GridSpec,
    pub cells: usize,
    pub failed_cells: usize,
}

pub const MANIFEST_FORMAT: &str = "benign-xor-grid-manifest";
pub const MANIFEST_VERSION: u32 = 1;

impl Manifest {
    pub fn new(spec: &GridSpec, results: &[CellResult]) -> Self {
        Self {
            format: MANIFEST_FORMAT.to_string(),
            version: MANIFEST_VERSION,
            package_version: env!("CARGO_PKG_VERSION").to_string(),
            scalar: "f64".to_string(),
            spec: spec.clone(),
            cells: results.len(),
            failed_cells: results.iter().filter(|r| r.failed()).count(),
        }
    }

    pub fn write<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }

    pub fn read<R: Read>(r: R) -> Result<Self> {
        let m: Manifest = serde_json::from_reader(r)?;
        if m.format != MANIFEST_FORMAT || m.version != MANIFEST_VERSION {
            return Err(Error::Format(format!("unsupported manifest {} v{}", m.format, m.version)));
        }
        m.spec.validate()?;
        Ok(m)
    }
}

#[derive(Debug, Clone)]
pub struct GridRun {
    pub results: Vec<CellResult>,
    pub manifest: Manifest,
}

/// Evaluates every cell on a pool of `workers` threads. A failing cell is
/// recorded with its error message and NaN accuracy; the grid still completes.
pub fn run_grid(spec: &GridSpec, workers: usize) -> Result<GridRun> {
    spec.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?;
    let cells: Vec<(usize, usize)> = (0..spec.rows()).flat_map(|i| (0..spec.cols()).map(move |j| (i, j))).collect();
    let results: Vec<CellResult> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(i, j)| run_cell(spec, i, j).unwrap_or_else(|e| failed_cell(spec, i, j, &e)))
            .collect()
    });
    let manifest = Manifest::new(spec, &results);
    Ok(GridRun { results, manifest })
}

fn failed_cell(spec: &GridSpec, i: usize, j: usize, e: &Error) -> CellResult {
    let mu_norm = spec.cell_params(i, j).map(|p| p.2).unwrap_or(f64::NAN);
    CellResult {
        mode: spec.mode,
        i,
        j,
        axis1: spec.axis1[i],
        axis2: spec.axis2[j],
        mu_norm,
        accuracy: f64::NAN,
        stderr: f64::NAN,
        train_loss_final: f64::NAN,
        seed: spec.seed(i, j, 0),
        error: Some(e.to_string()),
        wall_time: None,
    }
}

/// Row-major `rows × cols` view of a result list.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatGrid {
    pub mode: GridMode,
    pub axis1: Vec<f64>,
    pub axis2: Vec<f64>,
    pub values: Vec<f64>,
}

impl HeatGrid {
    pub fn from_results(results: &[CellResult]) -> Result<Self> {
        let first = results.first().ok_or_else(|| Error::Data("no grid cells".into()))?;
        let rows = results.iter().map(|r| r.i).max().unwrap_or(0) + 1;
        let cols = results.iter().map(|r| r.j).max().unwrap_or(0) + 1;
        if results.len() != rows * cols {
            return Err(Error::Data(format!("{} cells do not fill a {rows}x{cols} grid", results.len())));
        }
        let mut axis1 = vec![f64::NAN; rows];
        let mut axis2 = vec![f64::NAN; cols];
        let mut values = vec![f64::NAN; rows * cols];
        let mut seen = vec![false; rows * cols];
        for r in results {
            if seen[r.i * cols + r.j] {
                return Err(Error::Data(format!("cell ({}, {}) appears twice", r.i, r.j)));
            }
            seen[r.i * cols + r.j] = true;
            axis1[r.i] = r.axis1;
            axis2[r.j] = r.axis2;
            values[r.i * cols + r.j] = r.accuracy;
        }
        Ok(Self { mode: first.mode, axis1, axis2, values })
    }

    pub fn rows(&self) -> usize {
        self.axis1.len()
    }

    pub fn cols(&self) -> usize {
        self.axis2.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.values[i * c..(i + 1) * c]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows()).map(|i| self.get(i, j)).collect()
    }
}

/// Cellwise `accuracy ≥ threshold → 1`, else 0 (failed cells are 0).
pub fn truncate_heatmap(results: &[CellResult], threshold: f64) -> Result<HeatGrid> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return domain(format!("threshold must lie in (0, 1), got {threshold}"));
    }
    let mut g = HeatGrid::from_results(results)?;
    g.values.iter_mut().for_each(|v| *v = if *v >= threshold { 1.0 } else { 0.0 });
    Ok(g)
}

/// Straight-line fit of the 0/1 boundary of a truncated grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContourFit {
    /// `(log axis2, log axis1)` midpoints of every edge between a 0 cell and a 1 cell.
    pub points: Vec<(f64, f64)>,
    /// Orthogonal (total least squares) slope of `log axis1` against `log axis2`.
    pub slope: Option<f64>,
    /// Ordinary least-squares fit of `log axis1` on `log axis2`, for reference.
    pub ols: Option<LinearFit>,
}

/// Fits a line to the boundary of a truncated grid in `(log axis2, log axis1)`.
///
/// Every pair of horizontally or vertically adjacent cells with different
/// values contributes the midpoint of their shared edge. The slope comes from
/// orthogonal regression, which treats both coordinates symmetrically; both
/// are quantized to the grid, so neither is an error-free regressor.
pub fn contour_slope(truncated: &HeatGrid) -> ContourFit {
    let (rows, cols) = (truncated.rows(), truncated.cols());
    let lx: Vec<f64> = truncated.axis2.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = truncated.axis1.iter().map(|v| v.ln()).collect();
    let high = |i: usize, j: usize| truncated.get(i, j) >= 0.5;
    let mut points = Vec::new();
    for i in 0..rows {
        for j in 0..cols {
            if j + 1 < cols && high(i, j) != high(i, j + 1) {
                points.push((0.5 * (lx[j] + lx[j + 1]), ly[i]));
            }
            if i + 1 < rows && high(i, j) != high(i + 1, j) {
                points.push((lx[j], 0.5 * (ly[i] + ly[i + 1])));
            }
        }
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    ContourFit { slope: orthogonal_slope(&xs, &ys), ols: linear_fit(&xs, &ys), points }
}

/// Slope of the first principal axis of the point cloud; `None` when it is
/// vertical, undefined, or there are fewer than two points.
pub fn orthogonal_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() < 2 || xs.len() != ys.len() {
        return None;
    }
    let k = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / k, ys.iter().sum::<f64>() / k);
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
        sxy += (x - mx) * (y - my);
    }
    if sxy == 0.0 {
        // Axis-aligned cloud: horizontal if x spreads more, otherwise undefined.
        return (sxx > syy).then_some(0.0);
    }
    Some((syy - sxx + ((syy - sxx).powi(2) + 4.0 * sxy * sxy).sqrt()) / (2.0 * sxy))
}

/// Spearman correlation of accuracy with the row axis in column `j`.
pub fn trend_along_axis1(grid: &HeatGrid, j: usize) -> Option<f64> {
    spearman(&grid.axis1, &grid.column(j))
}

/// Spearman correlation of accuracy with the column axis in row `i`.
pub fn trend_along_axis2(grid: &HeatGrid, i: usize) -> Option<f64> {
    spearman(&grid.axis2, grid.row(i))
}

/// Flat CSV record; field order is the column order.
#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    mode: GridMode,
    i: usize,
    j: usize,
    axis1: f64,
    axis2: f64,
    mu_norm: f64,
    accuracy: f64,
    stderr: f64,
    train_loss_final: f64,
    seed: u64,
    error: Option<String>,
}

/// Writes `mode,i,j,axis1,axis2,mu_norm,accuracy,stderr,train_loss_final,seed,error`.
pub fn write_csv<W: Write>(results: &[CellResult], w: W) -> Result<()> {
    if results.is_empty() {
        return Err(Error::Data("no grid cells to write".into()));
    }
    let mut out = csv::Writer::from_writer(w);
    for r in results {
        out.serialize(CsvRow {
            mode: r.mode,
            i: r.i,
            j: r.j,
            axis1: r.axis1,
            axis2: r.axis2,
            mu_norm: r.mu_norm,
            accuracy: r.accuracy,
            stderr: r.stderr,
            train_loss_final: r.train_loss_final,
            seed: r.seed,
            error: r.error.clone(),
        })?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(r: R) -> Result<Vec<CellResult>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        let row: CsvRow = row?;
        out.push(CellResult {
            mode: row.mode,
            i: row.i,
            j: row.j,
            axis1: row.axis1,
            axis2: row.axis2,
            mu_norm: row.mu_norm,
            accuracy: row.accuracy,
            stderr: row.stderr,
            train_loss_final: row.train_loss_final,
            seed: row.seed,
            error: row.error.filter(|e| !e.is_empty()),
            wall_time: None,
        });
    }
    Ok(out)
}

pub fn emit_csv(results: &[CellResult], path: &Path) -> Result<()> {
    write_csv(results, BufWriter::new(File::create(path)?))
}

/// Colour scale of a rendered heatmap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Palette {
    /// Yellow at accuracy ≤ 0.5 through blue at 1.
    Continuous,
    /// Blue for 1, yellow for 0.
    Binary,
}

const BLUE: (u8, u8, u8) = (43, 89, 195);
const YELLOW: (u8, u8, u8) = (245, 213, 71);
const MISSING: &str = "#bbbbbb";

fn fill(value: f64, palette: Palette) -> String {
    if !value.is_finite() {
        return MISSING.to_string();
    }
    let t = match palette {
        Palette::Continuous => ((value - 0.5) / 0.5).clamp(0.0, 1.0),
        Palette::Binary => {
            if value >= 0.5 {
                1.0
            } else {
                0.0
            }
        }
    };
    let mix = |a: u8, b: u8| (a as f64 + (b as f64 - a as f64) * t).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(YELLOW.0, BLUE.0), mix(YELLOW.1, BLUE.1), mix(YELLOW.2, BLUE.2))
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn tick(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e6 {
        format!("{v:.0}")
    } else {
        format!("{v:.3}")
    }
}

const CELL: usize = 36;
const LEFT: usize = 90;
const TOP: usize = 40;
const RIGHT: usize = 30;
const BOTTOM: usize = 80;

/// Renders the grid as SVG: one `<rect class="cell">` per cell, rows with
/// the smallest `axis1` at the bottom, and labelled axes.
pub fn svg_string(grid: &HeatGrid, palette: Palette, title: &str) -> String {
    let (rows, cols) = (grid.rows(), grid.cols());
    let width = LEFT + cols * CELL + RIGHT;
    let height = TOP + rows * CELL + BOTTOM;
    let (ylabel, xlabel) = grid.mode.axis_labels();
    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#);
    let _ = writeln!(s, r#"<text class="title" x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, width / 2, escape(title));
    for i in 0..rows {
        let y = TOP + (rows - 1 - i) * CELL;
        for j in 0..cols {
            let x = LEFT + j * CELL;
            let v = grid.get(i, j);
            let _ = writeln!(
                s,
                r#"<rect class="cell" x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="{}" data-i="{i}" data-j="{j}" data-value="{v}"><title>{ylabel}={}, {xlabel}={}: {v:.3}</title></rect>"#,
                fill(v, palette),
                tick(grid.axis1[i]),
                tick(grid.axis2[j]),
            );
        }
        let _ = writeln!(s, r#"<text class="tick" x="{}" y="{}" text-anchor="end" dominant-baseline="middle">{}</text>"#, LEFT - 6, y + CELL / 2, tick(grid.axis1[i]));
    }
    let base = TOP + rows * CELL;
    for j in 0..cols {
        let x = LEFT + j * CELL + CELL / 2;
        let _ = writeln!(s, r#"<text class="tick" x="{x}" y="{}" text-anchor="end" transform="rotate(-45 {x} {})">{}</text>"#, base + 14, base + 14, tick(grid.axis2[j]));
    }
    let _ = writeln!(s, r#"<text class="axis-label" x="{}" y="{}" text-anchor="middle">{}</text>"#, LEFT + cols * CELL / 2, height - 10, escape(xlabel));
    let _ = writeln!(
        s,
        r#"<text class="axis-label" x="20" y="{}" text-anchor="middle" transform="rotate(-90 20 {})">{}</text>"#,
        TOP + rows * CELL / 2,
        TOP + rows * CELL / 2,
        escape(ylabel)
    );
    s.push_str("</svg>\n");
    s
}

pub fn emit_svg(results: &[CellResult], path: &Path, palette: Palette) -> Result<()> {
    let grid = HeatGrid::from_results(results)?;
    write_svg(&grid, path, palette, "test accuracy")
}

pub fn write_svg(grid: &HeatGrid, path: &Path, palette: Palette, title: &str) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    f.write_all(svg_string(grid, palette, title).as_bytes())?;
    f.flush()?;
    Ok(())
}
