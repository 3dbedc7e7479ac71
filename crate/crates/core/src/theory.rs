//! Closed forms and monitors from the analysis: the scalar comparison
//! sequence and its continuous envelope, the per-sample virtual sequence,
//! `κ`, `Gap`, the loss-derivative sum-ratio statistic and growth-rate fits.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Label};
use crate::decomposition::{ActivationSets, SignalProjections};
use crate::error::{domain, Error, Result};
use crate::linalg::norm;
use crate::model::{loss_derivative, CnnWeights};
use crate::scalar::Scalar;
use crate::stats::{linear_fit, LinearFit};
use crate::train::{Preset, StepContext, TrainHook};

/// `a_{t+1} = a_t + c / (1 + b·e^{a_t})`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSeq {
    pub b: f64,
    pub c: f64,
    pub a0: f64,
}

impl ComparisonSeq {
    pub fn new(b: f64, c: f64, a0: f64) -> Result<Self> {
        if !(b >= 0.0) || !b.is_finite() {
            return domain(format!("b must be a finite nonnegative number, got {b}"));
        }
        if !(0.0..=1.0).contains(&c) {
            return domain(format!("c must lie in [0, 1], got {c}"));
        }
        if !a0.is_finite() {
            return domain("a0 must be finite");
        }
        Ok(ComparisonSeq { b, c, a0 })
    }

    /// One step of the recursion.
    pub fn step(&self, a: f64) -> f64 {
        a + self.c / (1.0 + self.b * a.exp())
    }

    /// The upper-envelope slack `c / (1 + b·e^{a0})`.
    pub fn slack(&self) -> f64 {
        self.c / (1.0 + self.b * self.a0.exp())
    }
}

/// `a_t` by exact forward iteration.
pub fn iterate_discrete(seq: &ComparisonSeq, t: u64) -> f64 {
    (0..t).fold(seq.a0, |a, _| seq.step(a))
}

pub const SOLVER_TOL: f64 = 1e-12;
pub const SOLVER_MAX_ITER: usize = 200;

/// Root `x_t` of `x + b·eˣ = c·t + a0 + b·e^{a0}` by Newton's method
/// safeguarded with bisection on the bracket `[a0, a0 + c·t]`.
pub fn solve_continuous(seq: &ComparisonSeq, t: f64) -> Result<f64> {
    if !(t >= 0.0) || !t.is_finite() {
        return domain(format!("t must be a finite nonnegative number, got {t}"));
    }
    let ComparisonSeq { b, c, a0 } = *seq;
    let (mut lo, mut hi) = (a0, a0 + c * t);
    if b == 0.0 || hi == lo {
        return Ok(hi);
    }
    let target = c * t + a0 + b * a0.exp();
    let g = |x: f64| x + b * x.exp() - target;
    let mut x = 0.5 * (lo + hi);
    let mut last_step = hi - lo;
    for _ in 0..SOLVER_MAX_ITER {
        let gx = g(x);
        if gx > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        if hi - lo <= SOLVER_TOL {
            return Ok(0.5 * (lo + hi));
        }
        // Accept Newton only when it stays inside the bracket and its step is
        // at most half the previous one; otherwise bisect.
        let newton = x - gx / (1.0 + b * x.exp());
        let inside = newton.is_finite() && newton > lo && newton < hi;
        let next = if inside && (newton - x).abs() <= 0.5 * last_step { newton } else { 0.5 * (lo + hi) };
        last_step = (next - x).abs();
        if last_step <= SOLVER_TOL {
            return Ok(next);
        }
        x = next;
    }
    Err(Error::Solver { iterations: SOLVER_MAX_ITER })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandwichReport {
    pub seq: ComparisonSeq,
    pub t_max: u64,
    pub lower_violations: u64,
    pub upper_violations: u64,
    /// `min_t (a_t − x_t)`; nonnegative when the lower side holds.
    pub min_lower_slack: f64,
    /// `max_t (a_t − x_t)`.
    pub max_lower_slack: f64,
    /// `min_t (x_t + c/(1+b e^{a0}) − a_t)`; nonnegative when the upper side holds.
    pub min_upper_slack: f64,
    pub max_upper_slack: f64,
}

impl SandwichReport {
    pub fn holds(&self) -> bool {
        self.lower_violations == 0 && self.upper_violations == 0
    }
}

/// Relative floating tolerance for the sandwich comparisons.
pub const SANDWICH_TOL: f64 = 1e-9;

/// Checks `x_t ≤ a_t ≤ c/(1 + b e^{a0}) + x_t` for every integer `t ≤ t_max`.
pub fn sandwich_check(seq: &ComparisonSeq, t_max: u64) -> Result<SandwichReport> {
    if t_max == 0 {
        return domain("t_max must be at least 1");
    }
    let slack = seq.slack();
    let mut rep = SandwichReport {
        seq: *seq,
        t_max,
        lower_violations: 0,
        upper_violations: 0,
        min_lower_slack: f64::INFINITY,
        max_lower_slack: f64::NEG_INFINITY,
        min_upper_slack: f64::INFINITY,
        max_upper_slack: f64::NEG_INFINITY,
    };
    let mut a = seq.a0;
    for t in 0..=t_max {
        let x = solve_continuous(seq, t as f64)?;
        let tol = SANDWICH_TOL * (1.0 + x.abs());
        let low = a - x;
        let up = x + slack - a;
        rep.lower_violations += u64::from(low < -tol);
        rep.upper_violations += u64::from(up < -tol);
        rep.min_lower_slack = rep.min_lower_slack.min(low);
        rep.max_lower_slack = rep.max_lower_slack.max(low);
        rep.min_upper_slack = rep.min_upper_slack.min(up);
        rep.max_upper_slack = rep.max_upper_slack.max(up);
        a = seq.step(a);
    }
    Ok(rep)
}

/// Every combination of the given constants, checked independently (in parallel).
pub fn sandwich_grid(bs: &[f64], cs: &[f64], a0s: &[f64], t_max: u64) -> Result<Vec<SandwichReport>> {
    use rayon::prelude::*;
    let seqs: Vec<ComparisonSeq> = bs
        .iter()
        .flat_map(|&b| cs.iter().flat_map(move |&c| a0s.iter().map(move |&a0| (b, c, a0))))
        .map(|(b, c, a0)| ComparisonSeq::new(b, c, a0))
        .collect::<Result<_>>()?;
    seqs.par_iter().map(|s| sandwich_check(s, t_max)).collect()
}

/// Which closed form of `κ` (and which envelope constants) apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Classic,
    SmallAngle,
}

impl Regime {
    /// Classic for presets/angles with `cos θ < 1/2`, small-angle otherwise
    /// (the boundary `cos θ = 1/2` is assigned to the small-angle form).
    pub fn of(preset: Preset, cos_theta: f64) -> Self {
        match preset {
            Preset::ClassicXor => Regime::Classic,
            Preset::SmallAngle => Regime::SmallAngle,
            Preset::Custom => {
                if cos_theta < 0.5 {
                    Regime::Classic
                } else {
                    Regime::SmallAngle
                }
            }
        }
    }

    fn snr_coefficient(self) -> f64 {
        match self {
            Regime::Classic => 64.0,
            Regime::SmallAngle => 16.0,
        }
    }
}

/// Constant `C₀` of the small-angle envelope, set to 1.
pub const SMALL_ANGLE_C0: f64 = 1.0;

/// Envelope sequences `(x̄, x̲)` for the mean same-class memorisation
/// coefficient of each sample.
pub fn envelope_presets(regime: Regime, eta: f64, sigma_p: f64, d: usize, n: usize, m: usize, kappa: f64, delta: f64) -> Result<(ComparisonSeq, ComparisonSeq)> {
    let (d, n, m) = (d as f64, n as f64, m as f64);
    let base = eta * sigma_p * sigma_p * d / (n * m);
    let (c_hi, c_lo) = match regime {
        Regime::Classic => (2.0 * base, base / 3.0),
        Regime::SmallAngle => {
            let w = (2.0 * (6.0 * n / delta).ln() / m).sqrt();
            let z = SMALL_ANGLE_C0 * ((4.0 * n / delta).ln() / d).sqrt();
            (0.5 * base * (1.0 + w) * (1.0 + z), 0.5 * base * (1.0 - w).max(0.0) * (1.0 - z).max(0.0))
        }
    };
    Ok((ComparisonSeq::new((-kappa).exp(), c_hi, 0.0)?, ComparisonSeq::new(kappa.exp(), c_lo, 0.0)?))
}

/// Initialization scale of the small-angle analysis, `σ0 = nm/(σp d)`, with
/// the polylogarithmic factor set to 1.
pub fn small_angle_sigma_0(n: usize, m: usize, sigma_p: f64, d: usize) -> f64 {
    (n * m) as f64 / (sigma_p * d as f64)
}

/// `SNR = ‖μ‖ / (σp √d)`.
pub fn snr(mu_norm: f64, sigma_p: f64, d: usize) -> f64 {
    mu_norm / (sigma_p * (d as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KappaInputs {
    pub n: usize,
    pub d: usize,
    pub m: usize,
    pub delta: f64,
    pub sigma_0: f64,
    pub sigma_p: f64,
    pub snr: f64,
    pub t_star: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KappaTerms {
    /// `56 √(log(4n²/δ)/d) · n · log T*`.
    pub noise_overlap: f64,
    /// `10 √(log(12mn/δ)) · σ0 σp √d`.
    pub initialization: f64,
    /// `K · n · SNR² · log T*` with `K = 64` (classic) or `16` (small-angle).
    pub signal: f64,
    pub total: f64,
}

pub fn kappa(x: &KappaInputs, regime: Regime) -> Result<KappaTerms> {
    if x.n == 0 || x.d == 0 || x.m == 0 {
        return domain("n, d and m must be positive");
    }
    if !(x.delta > 0.0 && x.delta < 1.0) {
        return domain(format!("delta must lie in (0, 1), got {}", x.delta));
    }
    if !(x.sigma_0 >= 0.0 && x.sigma_p > 0.0 && x.snr >= 0.0 && x.t_star >= 1.0) {
        return domain("kappa needs sigma_0 >= 0, sigma_p > 0, snr >= 0 and t_star >= 1");
    }
    let (n, d, m) = (x.n as f64, x.d as f64, x.m as f64);
    let log_t = x.t_star.ln();
    let noise_overlap = 56.0 * ((4.0 * n * n / x.delta).ln() / d).sqrt() * n * log_t;
    let initialization = 10.0 * (12.0 * m * n / x.delta).ln().sqrt() * x.sigma_0 * x.sigma_p * d.sqrt();
    let signal = regime.snr_coefficient() * n * x.snr * x.snr * log_t;
    Ok(KappaTerms { noise_overlap, initialization, signal, total: noise_overlap + initialization + signal })
}

/// `Gap = 20 √(log(2n/δ)/m) · √(log(4/δ))`.
pub fn gap_bound(n: usize, m: usize, delta: f64) -> Result<f64> {
    if n == 0 || m == 0 {
        return domain("n and m must be positive");
    }
    if !(delta > 0.0 && delta < 1.0) {
        return domain(format!("delta must lie in (0, 1), got {delta}"));
    }
    Ok(20.0 * ((2.0 * n as f64 / delta).ln() / m as f64).sqrt() * (4.0 / delta).ln().sqrt())
}

/// Per-sample surrogate dynamics `A_{t+1} = A_t − η/(nm²) · ℓ̃′ · |S_i⁽⁰⁾| · ‖ξ_i‖²`.
#[derive(Debug, Clone, PartialEq)]
pub struct VirtualState {
    pub step: u64,
    pub a: Vec<f64>,
    /// `|S_i⁽⁰⁾| · ‖ξ_i‖²`; the step size `η/(nm²)` is applied in [`virtual_step`].
    pub drivers: Vec<f64>,
}

impl VirtualState {
    pub fn new(drivers: Vec<f64>) -> Self {
        VirtualState { step: 0, a: vec![0.0; drivers.len()], drivers }
    }

    /// Drivers from the initial activation pattern and the noise norms.
    pub fn from_init<S: Scalar>(w0: &CnnWeights<S>, dataset: &Dataset<S>) -> Self {
        let sets = ActivationSets::of(w0, dataset);
        let drivers = sets
            .s_i_sizes()
            .into_iter()
            .zip(&dataset.points)
            .map(|(k, p)| k as f64 * crate::linalg::norm_sq(&p.xi).as_f64())
            .collect();
        let mut s = Self::new(drivers);
        s.step = w0.step;
        s
    }

    /// `ℓ̃′_i = −1/(1 + e^{A_i})`.
    pub fn ell_tilde(&self) -> Vec<f64> {
        self.a.iter().map(|&a| loss_derivative(a)).collect()
    }
}

pub fn virtual_step(state: &VirtualState, eta: f64, n: usize, m: usize) -> VirtualState {
    let scale = eta / (n as f64 * (m * m) as f64);
    VirtualState {
        step: state.step + 1,
        a: state.a.iter().zip(&state.drivers).map(|(&a, &k)| a - scale * loss_derivative(a) * k).collect(),
        drivers: state.drivers.clone(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Divergence {
    /// `max_i |ℓ̃′_i − ℓ′_i|`.
    pub max_abs_diff: f64,
    /// `max_i max(ℓ′_i/ℓ̃′_i, ℓ̃′_i/ℓ′_i) − 1`.
    pub max_ratio_excess: f64,
}

impl Divergence {
    fn merge(self, other: Divergence) -> Divergence {
        Divergence {
            max_abs_diff: self.max_abs_diff.max(other.max_abs_diff),
            max_ratio_excess: self.max_ratio_excess.max(other.max_ratio_excess),
        }
    }
}

/// Compares the virtual derivatives with the actual ones at the same step.
pub fn virtual_vs_actual<S: Scalar>(state: &VirtualState, step: u64, lossderivs: &[S]) -> Result<Divergence> {
    if state.step != step || state.a.len() != lossderivs.len() {
        return Err(Error::Consistency(format!(
            "virtual state at step {} with {} samples, actual at step {step} with {}",
            state.step,
            state.a.len(),
            lossderivs.len()
        )));
    }
    let mut div = Divergence::default();
    for (vt, g) in state.ell_tilde().into_iter().zip(lossderivs) {
        let g = g.as_f64();
        div.max_abs_diff = div.max_abs_diff.max((vt - g).abs());
        div.max_ratio_excess = div.max_ratio_excess.max((g / vt).max(vt / g) - 1.0);
    }
    Ok(div)
}

/// Training hook that advances the virtual sequence in lock-step with the
/// network and accumulates the divergence at every step.
#[derive(Debug, Clone, Default)]
pub struct VirtualTracker {
    state: Option<VirtualState>,
    eta: f64,
    pub overall: Divergence,
    /// `(step, divergence at that step)` for recorded steps.
    pub recorded: Vec<(u64, Divergence)>,
}

impl VirtualTracker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn state(&self) -> Option<&VirtualState> {
        self.state.as_ref()
    }
}

impl<S: Scalar> TrainHook<S> for VirtualTracker {
    fn on_start(&mut self, w0: &CnnWeights<S>, dataset: &Dataset<S>) -> Result<()> {
        self.state = Some(VirtualState::from_init(w0, dataset));
        Ok(())
    }

    fn on_step(&mut self, ctx: &StepContext<'_, S>) -> Result<()> {
        let state = self.state.as_ref().expect("on_start ran");
        let div = virtual_vs_actual(state, ctx.t, &ctx.eval.lossderivs)?;
        if ctx.t == 0 || ctx.recorded {
            self.recorded.push((ctx.t, div));
        }
        self.overall = self.overall.merge(div);
        self.eta = ctx.eta.as_f64();
        let (n, m) = (ctx.dataset.n(), ctx.prev.m);
        self.state = Some(virtual_step(state, self.eta, n, m));
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SumRatio {
    /// `|Σ_{S+} ℓ′ / Σ_{S−} ℓ′ − |S+|/|S−||`.
    pub statistic: f64,
    /// `|Σ_{S+} ℓ′ / Σ_{S−} ℓ′ − c₁/c₀|` with `c₀ = c₁`, i.e. distance from 1.
    pub statistic_vs_constant: f64,
    pub count_ratio: f64,
    /// `2·Gap·(|S−|√|S+| + |S−|√|S+|)/|S−|²`, as printed.
    pub gap_rhs: f64,
    /// `(4 c₁ C / c₀²) √(log(8n/δ)/n)`.
    pub bound: f64,
}

/// Constant `C` in the cell-size concentration `||S| − c n| ≤ C √(n log(8n/δ))`.
pub const CELL_SIZE_C: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// `(4 c₁ C / c₀²) √(log(8n/δ)/n)` with `c₀ = c₁ = (1 − p)/4`.
pub fn sum_ratio_bound(n: usize, flip_p: f64, delta: f64) -> f64 {
    let c0 = (1.0 - flip_p) / 4.0;
    4.0 * c0 * CELL_SIZE_C / (c0 * c0) * ((8.0 * n as f64 / delta).ln() / n as f64).sqrt()
}

pub fn sum_ratio_monitor<S: Scalar>(
    lossderivs: &[S],
    s_plus: &[usize],
    s_minus: &[usize],
    m: usize,
    flip_p: f64,
    delta: f64,
) -> Result<SumRatio> {
    if s_minus.is_empty() {
        return domain("S_minus must be nonempty");
    }
    if s_plus.iter().any(|i| s_minus.contains(i)) {
        return domain("S_plus and S_minus must be disjoint");
    }
    let n = lossderivs.len();
    if s_plus.iter().chain(s_minus).any(|&i| i >= n) {
        return Err(Error::Index(format!("index outside 0..{n}")));
    }
    let sum = |s: &[usize]| s.iter().map(|&i| lossderivs[i].as_f64()).sum::<f64>();
    let ratio = sum(s_plus) / sum(s_minus);
    let (p, q) = (s_plus.len() as f64, s_minus.len() as f64);
    let count_ratio = p / q;
    let gap = gap_bound(n, m, delta)?;
    Ok(SumRatio {
        statistic: (ratio - count_ratio).abs(),
        statistic_vs_constant: (ratio - 1.0).abs(),
        count_ratio,
        gap_rhs: 2.0 * gap * (q * p.sqrt() + q * p.sqrt()) / (q * q),
        bound: sum_ratio_bound(n, flip_p, delta),
    })
}

/// Records signal projections and filter norms at recorded steps.
#[derive(Debug, Clone, Default)]
pub struct GrowthTracker<S> {
    pub steps: Vec<u64>,
    pub projections: Vec<SignalProjections<S>>,
    /// Mean filter norm `(1/2m) Σ_{j,r} ‖w_{j,r}‖` per recorded step.
    pub mean_norms: Vec<f64>,
}

impl<S: Scalar> GrowthTracker<S> {
    pub fn new() -> Self {
        GrowthTracker { steps: Vec::new(), projections: Vec::new(), mean_norms: Vec::new() }
    }

    fn record(&mut self, w: &CnnWeights<S>, dataset: &Dataset<S>) {
        self.steps.push(w.step);
        self.projections.push(SignalProjections::of(w, &dataset.basis));
        let rows = w.stacked().chunks_exact(w.d);
        let k = rows.len() as f64;
        self.mean_norms.push(rows.map(|r| norm(r).as_f64()).sum::<f64>() / k);
    }
}

impl<S: Scalar> TrainHook<S> for GrowthTracker<S> {
    fn on_start(&mut self, w0: &CnnWeights<S>, dataset: &Dataset<S>) -> Result<()> {
        self.record(w0, dataset);
        Ok(())
    }

    fn on_step(&mut self, ctx: &StepContext<'_, S>) -> Result<()> {
        if ctx.recorded {
            self.record(ctx.next, ctx.dataset);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthParams {
    pub n: usize,
    pub d: usize,
    pub m: usize,
    pub eta: f64,
    pub sigma_0: f64,
    pub sigma_p: f64,
    pub mu_norm: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitCheck {
    /// `None` when the regressor is constant (e.g. `η = 0`).
    pub fit: Option<LinearFit>,
    pub predicted_scale: f64,
    pub ratio: Option<f64>,
    pub points: usize,
    pub pass: bool,
}

impl FitCheck {
    fn from_points(xs: &[f64], ys: &[f64], predicted_scale: f64) -> Self {
        let fit = linear_fit(xs, ys);
        let ratio = fit.as_ref().map(|f| f.slope / predicted_scale);
        let pass = match (&fit, ratio) {
            (Some(f), Some(r)) => f.r_squared >= GROWTH_MIN_R2 && (GROWTH_RATIO_RANGE.0..=GROWTH_RATIO_RANGE.1).contains(&r),
            _ => false,
        };
        FitCheck { fit, predicted_scale, ratio, points: xs.len(), pass }
    }

    pub fn degenerate(&self) -> bool {
        self.fit.is_none()
    }
}

pub const GROWTH_MIN_R2: f64 = 0.9;
pub const GROWTH_RATIO_RANGE: (f64, f64) = (0.1, 10.0);
pub const GROWTH_MIN_STEPS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    /// `2√(log(12m/δ))·σ0‖μ‖ + η‖μ‖²/m`.
    pub cross_bound: f64,
    pub max_cross: f64,
    pub cross_violations: usize,
    /// Own-signal projection magnitude vs the log-time regressor.
    pub signal_fit: FitCheck,
    /// Mean filter norm vs the log-time regressor, after burn-in.
    pub norm_fit: FitCheck,
}

/// `log(η σp² d (t − 1)/(12 n m) + 2/3)`, or `None` where the argument is not positive.
pub fn log_time_regressor(p: &GrowthParams, t: u64) -> Option<f64> {
    let arg = p.eta * p.sigma_p * p.sigma_p * p.d as f64 * (t as f64 - 1.0) / (12.0 * (p.n * p.m) as f64) + 2.0 / 3.0;
    (arg > 0.0).then(|| arg.ln())
}

/// Checks the cross-signal bound directly and fits the two growth laws.
pub fn growth_bound_monitor<S: Scalar>(tracker: &GrowthTracker<S>, p: &GrowthParams) -> Result<GrowthReport> {
    if tracker.steps.len() < GROWTH_MIN_STEPS {
        return Err(Error::Data(format!("need at least {GROWTH_MIN_STEPS} recorded steps, got {}", tracker.steps.len())));
    }
    let m = p.m;
    let mu2 = p.mu_norm * p.mu_norm;
    let cross_bound = 2.0 * (12.0 * m as f64 / p.delta).ln().sqrt() * p.sigma_0 * p.mu_norm + p.eta * mu2 / m as f64;
    let (mut max_cross, mut cross_violations) = (0.0f64, 0usize);
    for proj in &tracker.projections {
        for r in 0..m {
            for x in [proj.u(m, Label::Neg, r), proj.v(m, Label::Pos, r)] {
                let a = x.as_f64().abs();
                max_cross = max_cross.max(a);
                cross_violations += usize::from(a > cross_bound);
            }
        }
    }

    let burn_in = (p.n * p.m) as f64 / (p.eta * p.sigma_p * p.sigma_p * p.d as f64);
    let (mut sx, mut sy, mut nx, mut ny) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for ((&t, proj), &nrm) in tracker.steps.iter().zip(&tracker.projections).zip(&tracker.mean_norms) {
        let Some(x) = (t >= 1).then(|| log_time_regressor(p, t)).flatten() else { continue };
        let own: f64 = (0..m).map(|r| proj.u(m, Label::Pos, r).as_f64().abs() + proj.v(m, Label::Neg, r).as_f64().abs()).sum::<f64>()
            / (2 * m) as f64;
        sx.push(x);
        sy.push(own);
        if t as f64 >= burn_in {
            nx.push(x);
            ny.push(nrm);
        }
    }
    let (n, d) = (p.n as f64, p.d as f64);
    Ok(GrowthReport {
        cross_bound,
        max_cross,
        cross_violations,
        signal_fit: FitCheck::from_points(&sx, &sy, n * mu2 / (p.sigma_p * p.sigma_p * d)),
        norm_fit: FitCheck::from_points(&nx, &ny, n.sqrt() / (p.sigma_p * d.sqrt())),
    })
}
