//! Empirical checks of the high-probability events about the data and the
//! initialization: activation-set sizes, signal/label cell sizes, noise norms
//! and overlaps, and the scale of the initial filters.
//!
//! Each trial draws a fresh basis, dataset and initialization and evaluates
//! every inequality once; a suite counts how many trials satisfy each one.

use serde::{Deserialize, Serialize};

use crate::data::{build_basis, sample_dataset, DataConfig, Label, SignalTag};
use crate::decomposition::{noise_projections, SignalProjections};
use crate::error::{domain, Result};
use crate::linalg::norm_sq;
use crate::model::{filter_row, init_weights};
use crate::rng::{derive_seed, stream_rng, Stream};
use crate::scalar::Scalar;

/// Problem sizes and scales for one concentration trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationParams {
    pub n: usize,
    pub d: usize,
    pub m: usize,
    pub sigma_p: f64,
    pub sigma_0: f64,
    pub mu_norm: f64,
    pub cos_theta: f64,
    pub flip_p: f64,
    pub delta: f64,
}

impl Default for ConcentrationParams {
    fn default() -> Self {
        Self { n: 2000, d: 4000, m: 400, sigma_p: 1.0, sigma_0: 0.01, mu_norm: 4.0, cos_theta: 0.8, flip_p: 0.1, delta: 0.05 }
    }
}

impl ConcentrationParams {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || self.m == 0 || self.d < 3 {
            return domain("concentration trials need n >= 2, m >= 1 and d >= 3");
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return domain(format!("delta must lie in (0, 1), got {}", self.delta));
        }
        if !(self.sigma_p > 0.0 && self.sigma_0 > 0.0 && self.mu_norm > 0.0) {
            return domain("sigma_p, sigma_0 and mu_norm must be positive");
        }
        Ok(())
    }
}

/// Which side of the bound the observed value must lie on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    /// `observed ≤ bound`
    AtMost,
    /// `observed ≥ bound`
    AtLeast,
}

/// One inequality evaluated on one trial, at its worst case over the indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Inequality {
    pub name: String,
    pub kind: BoundKind,
    pub observed: f64,
    pub bound: f64,
    pub holds: bool,
}

impl Inequality {
    fn new(name: &str, kind: BoundKind, observed: f64, bound: f64) -> Self {
        let holds = match kind {
            BoundKind::AtMost => observed <= bound,
            BoundKind::AtLeast => observed >= bound,
        };
        Self { name: name.to_string(), kind, observed, bound, holds }
    }
}

/// Names of the checked inequalities, in report order.
pub const CHECKS: [&str; 11] = [
    "activation_set_size",
    "clean_cell_size",
    "flipped_cell_size",
    "noise_norm_lower",
    "noise_norm_upper",
    "noise_overlap",
    "init_norm_lower",
    "init_norm_upper",
    "init_signal_projection",
    "init_noise_projection",
    "init_min_noise_projection",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub seed: u64,
    pub checks: Vec<Inequality>,
    /// Number of `(j, i)` pairs whose smallest `|⟨w_{j,r}, ξ_i⟩|` falls below
    /// the anti-concentration level. The per-pair event has probability at
    /// least `1 − δ`; the uniform version over all pairs is not claimed.
    pub min_projection_pairs_below: usize,
}

impl TrialOutcome {
    pub fn check(&self, name: &str) -> Option<&Inequality> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn max_abs_dev(values: impl Iterator<Item = f64>, centre: f64) -> f64 {
    values.map(|v| (v - centre).abs()).fold(0.0, f64::max)
}

/// Runs every inequality on one freshly drawn instance.
pub fn concentration_trial<S: Scalar>(p: &ConcentrationParams, seed: u64) -> Result<TrialOutcome> {
    p.validate()?;
    let (n, d, m, delta) = (p.n, p.d, p.m, p.delta);
    let (nf, df, mf) = (n as f64, d as f64, m as f64);
    let sp2 = p.sigma_p * p.sigma_p;
    let s02 = p.sigma_0 * p.sigma_0;

    let basis = build_basis(d, S::of(p.mu_norm), S::of(p.cos_theta), &mut stream_rng(seed, Stream::Basis))?;
    let cfg = DataConfig { n, sigma_p: p.sigma_p, flip_p: p.flip_p, seed };
    let ds = sample_dataset(&basis, &cfg, &mut stream_rng(seed, Stream::Data))?;
    let w0 = init_weights(m, d, S::of(p.sigma_0), &mut stream_rng(seed, Stream::Init))?;

    let mut checks = Vec::with_capacity(CHECKS.len());

    // Activation sets at initialization: S_i = {r : ⟨w_{y_i,r}, ξ_i⟩ > 0}.
    let proj = noise_projections(&w0, &ds);
    let s_sizes = ds.points.iter().enumerate().map(|(i, pt)| {
        (0..m).filter(|&r| proj[filter_row(m, pt.y, r) * n + i] > S::zero()).count() as f64
    });
    checks.push(Inequality::new(
        CHECKS[0],
        BoundKind::AtMost,
        max_abs_dev(s_sizes, mf / 2.0),
        (mf * (2.0 * nf / delta).ln() / 2.0).sqrt(),
    ));

    // Signal/label cells.
    let sets = ds.signal_label_sets();
    let cell_slack = (nf * (8.0 * nf / delta).ln() / 2.0).sqrt();
    let (clean, flipped): (Vec<_>, Vec<_>) = sets.iter().partition(|(tag, y, _)| tag.clean_label() == *y);
    checks.push(Inequality::new(
        CHECKS[1],
        BoundKind::AtMost,
        max_abs_dev(clean.iter().map(|c| c.2.len() as f64), nf * (1.0 - p.flip_p) / 4.0),
        cell_slack,
    ));
    checks.push(Inequality::new(
        CHECKS[2],
        BoundKind::AtMost,
        max_abs_dev(flipped.iter().map(|c| c.2.len() as f64), nf * p.flip_p / 4.0),
        cell_slack,
    ));

    // Noise norms and pairwise overlaps.
    let gram = ds.noise_gram();
    let norms: Vec<f64> = (0..n).map(|i| gram[i * n + i].as_f64()).collect();
    checks.push(Inequality::new(CHECKS[3], BoundKind::AtLeast, norms.iter().copied().fold(f64::INFINITY, f64::min), sp2 * df / 2.0));
    checks.push(Inequality::new(CHECKS[4], BoundKind::AtMost, norms.iter().copied().fold(0.0, f64::max), 1.5 * sp2 * df));
    let mut overlap = 0.0f64;
    for i in 0..n {
        for k in (i + 1)..n {
            overlap = overlap.max(gram[i * n + k].as_f64().abs());
        }
    }
    checks.push(Inequality::new(CHECKS[5], BoundKind::AtMost, overlap, 2.0 * sp2 * (df * (4.0 * nf * nf / delta).ln()).sqrt()));

    // Initial filters.
    let w_norms: Vec<f64> = w0.stacked().chunks_exact(d).map(|w| norm_sq(w).as_f64()).collect();
    checks.push(Inequality::new(CHECKS[6], BoundKind::AtLeast, w_norms.iter().copied().fold(f64::INFINITY, f64::min), s02 * df / 2.0));
    checks.push(Inequality::new(CHECKS[7], BoundKind::AtMost, w_norms.iter().copied().fold(0.0, f64::max), 1.5 * s02 * df));

    let sig = SignalProjections::of(&w0, &basis);
    let mut sig_max = 0.0f64;
    for j in Label::BOTH {
        for r in 0..m {
            sig_max = sig_max.max(sig.u(m, j, r).as_f64().abs()).max(sig.v(m, j, r).as_f64().abs());
        }
    }
    // ‖u‖ = ‖v‖ = ‖μ‖ because a ⊥ b.
    let u_norm = norm_sq(&basis.signal(SignalTag::PlusU)).as_f64().sqrt();
    let v_norm = norm_sq(&basis.signal(SignalTag::PlusV)).as_f64().sqrt();
    checks.push(Inequality::new(
        CHECKS[8],
        BoundKind::AtMost,
        sig_max,
        (2.0 * (12.0 * mf / delta).ln()).sqrt() * p.sigma_0 * u_norm.min(v_norm),
    ));

    let noise_scale = p.sigma_0 * p.sigma_p * df.sqrt();
    let proj_max = proj.iter().map(|v| v.as_f64().abs()).fold(0.0, f64::max);
    checks.push(Inequality::new(CHECKS[9], BoundKind::AtMost, proj_max, 2.0 * (12.0 * mf * nf / delta).ln().sqrt() * noise_scale));

    let floor = noise_scale * delta / (8.0 * mf);
    let mut below = 0usize;
    for j in Label::BOTH {
        for i in 0..n {
            let min_abs = (0..m).map(|r| proj[filter_row(m, j, r) * n + i].as_f64().abs()).fold(f64::INFINITY, f64::min);
            if min_abs < floor {
                below += 1;
            }
        }
    }
    checks.push(Inequality::new(CHECKS[10], BoundKind::AtMost, below as f64 / (2.0 * nf), delta));

    Ok(TrialOutcome { seed, checks, min_projection_pairs_below: below })
}

/// Pass count of one inequality across a suite of trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteLine {
    pub name: String,
    pub passes: usize,
    pub trials: usize,
    pub required: usize,
    pub pass: bool,
    /// Worst observed value across trials, on the failing side of the bound.
    pub worst_observed: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationSuite {
    pub params: ConcentrationParams,
    pub base_seed: u64,
    pub trials: Vec<TrialOutcome>,
    pub lines: Vec<SuiteLine>,
}

impl ConcentrationSuite {
    pub fn all_pass(&self) -> bool {
        self.lines.iter().all(|l| l.pass)
    }
}

/// Runs `trials` seeded trials (seed `derive_seed(base_seed, [k])`) and
/// requires each inequality to hold in at least `required` of them.
pub fn concentration_suite<S: Scalar>(p: &ConcentrationParams, base_seed: u64, trials: usize, required: usize) -> Result<ConcentrationSuite> {
    if trials == 0 || required > trials {
        return domain(format!("need 1 <= trials and required <= trials, got {required} of {trials}"));
    }
    let outcomes = (0..trials)
        .map(|k| concentration_trial::<S>(p, derive_seed(base_seed, &[k as u64])))
        .collect::<Result<Vec<_>>>()?;
    let lines = CHECKS
        .iter()
        .map(|&name| {
            let cs: Vec<&Inequality> = outcomes.iter().filter_map(|o| o.check(name)).collect();
            let passes = cs.iter().filter(|c| c.holds).count();
            let kind = cs[0].kind;
            let worst_observed = match kind {
                BoundKind::AtMost => cs.iter().map(|c| c.observed).fold(f64::NEG_INFINITY, f64::max),
                BoundKind::AtLeast => cs.iter().map(|c| c.observed).fold(f64::INFINITY, f64::min),
            };
            // Bounds may differ between trials only through ‖u‖, ‖v‖; report the tightest.
            let bound = match kind {
                BoundKind::AtMost => cs.iter().map(|c| c.bound).fold(f64::INFINITY, f64::min),
                BoundKind::AtLeast => cs.iter().map(|c| c.bound).fold(f64::NEG_INFINITY, f64::max),
            };
            SuiteLine { name: name.to_string(), passes, trials, required, pass: passes >= required, worst_observed, bound }
        })
        .collect();
    Ok(ConcentrationSuite { params: *p, base_seed, trials: outcomes, lines })
}
