//! Full-batch gradient descent with per-step instrumentation hooks.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{domain, Error, Result};
use crate::model::{evaluate, gradient_from_eval, BatchEval, CnnWeights, Design};
use crate::scalar::Scalar;

/// Which analysis regime a run is configured for; selects monitor constants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    #[default]
    ClassicXor,
    SmallAngle,
    Custom,
}

impl Preset {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "classic_xor" => Ok(Preset::ClassicXor),
            "small_angle" => Ok(Preset::SmallAngle),
            "custom" => Ok(Preset::Custom),
            other => Err(Error::Config(format!("unknown preset `{other}`"))),
        }
    }

    /// Preset implied by the angle when none is given: `cos θ < 1/2` is classic.
    pub fn for_angle(cos_theta: f64) -> Self {
        if cos_theta < 0.5 {
            Preset::ClassicXor
        } else {
            Preset::SmallAngle
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub eta: f64,
    pub epochs: u64,
    pub target_eps: f64,
    pub record_every: u64,
    pub preset: Preset,
    pub early_stop: bool,
    /// Keep a full weight snapshot at every recorded step.
    pub keep_snapshots: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            eta: 1e-3,
            epochs: 200,
            target_eps: 1e-2,
            record_every: 10,
            preset: Preset::ClassicXor,
            early_stop: false,
            keep_snapshots: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            return domain(format!("eta must be positive, got {}", self.eta));
        }
        if self.epochs == 0 {
            return domain("epochs must be at least 1");
        }
        if !(self.target_eps > 0.0) {
            return domain(format!("target_eps must be positive, got {}", self.target_eps));
        }
        if self.record_every == 0 {
            return domain("record_every must be at least 1");
        }
        Ok(())
    }
}

/// Everything a hook may inspect after the update `W⁽ᵗ⁾ → W⁽ᵗ⁺¹⁾`.
pub struct StepContext<'a, S> {
    /// Index `t` of the weights the gradient was taken at.
    pub t: u64,
    pub prev: &'a CnnWeights<S>,
    /// Forward quantities at `W⁽ᵗ⁾` (activations, margins, `ℓ′`).
    pub eval: &'a BatchEval<S>,
    pub next: &'a CnnWeights<S>,
    pub dataset: &'a Dataset<S>,
    pub eta: S,
    /// Whether `t + 1` is a recorded step.
    pub recorded: bool,
}

/// Instrumentation invoked synchronously after every gradient step.
pub trait TrainHook<S: Scalar> {
    /// Called once with the initial weights before any update.
    fn on_start(&mut self, _w0: &CnnWeights<S>, _dataset: &Dataset<S>) -> Result<()> {
        Ok(())
    }

    fn on_step(&mut self, ctx: &StepContext<'_, S>) -> Result<()>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginStats {
    pub min: f64,
    pub median: f64,
    pub max: f64,
}

impl MarginStats {
    pub fn of<S: Scalar>(margins: &[S]) -> Self {
        let mut v: Vec<f64> = margins.iter().map(|x| x.as_f64()).collect();
        v.sort_by(|a, b| a.total_cmp(b));
        let k = v.len();
        let median = if k % 2 == 1 { v[k / 2] } else { 0.5 * (v[k / 2 - 1] + v[k / 2]) };
        MarginStats { min: v[0], median, max: v[k - 1] }
    }
}

/// `max_{i,k} ℓ′_i / ℓ′_k`; all `ℓ′` share a sign so this is `max|ℓ′| / min|ℓ′|`.
pub fn lossderiv_ratio<S: Scalar>(lossderivs: &[S]) -> f64 {
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for g in lossderivs {
        let a = g.as_f64().abs();
        lo = lo.min(a);
        hi = hi.max(a);
    }
    hi / lo
}

/// Quantities captured at one recorded step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: u64,
    pub loss: f64,
    pub margins: MarginStats,
    pub lossderiv_ratio: f64,
    /// Fraction of training points with `y_i f(W, x_i) > 0` (observed labels).
    pub train_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainTrace<S> {
    pub rows: Vec<TraceRow>,
    pub weights_final: CnnWeights<S>,
    pub snapshots: Vec<CnnWeights<S>>,
    /// Step at which the loss first reached `target_eps` (only with early stopping).
    pub stopped_at: Option<u64>,
}

impl<S: Scalar> TrainTrace<S> {
    pub fn loss_history(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.loss).collect()
    }

    pub fn final_row(&self) -> &TraceRow {
        self.rows.last().expect("a trace always records step 0")
    }

    pub fn max_lossderiv_ratio(&self) -> f64 {
        self.rows.iter().map(|r| r.lossderiv_ratio).fold(0.0, f64::max)
    }

    /// `step,loss,min_margin,median_margin,max_margin,lossderiv_ratio,train_accuracy`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["step", "loss", "min_margin", "median_margin", "max_margin", "lossderiv_ratio", "train_accuracy"])?;
        for r in &self.rows {
            out.write_record([
                r.step.to_string(),
                r.loss.to_string(),
                r.margins.min.to_string(),
                r.margins.median.to_string(),
                r.margins.max.to_string(),
                r.lossderiv_ratio.to_string(),
                r.train_accuracy.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

fn check_eta<S: Scalar>(eta: S) -> Result<()> {
    if !(eta >= S::zero()) || !eta.is_finite() {
        return domain(format!("learning rate must be non-negative, got {eta}"));
    }
    Ok(())
}

/// `W − η G`, failing if the gradient has non-finite entries.
fn apply_update<S: Scalar>(w: &CnnWeights<S>, g: &[S], eta: S, out: &mut CnnWeights<S>) -> Result<()> {
    if let Some(k) = g.iter().position(|x| !x.is_finite()) {
        return Err(Error::Numeric { step: w.step, what: format!("non-finite gradient entry {k}") });
    }
    out.clone_from(w);
    out.step = w.step + 1;
    if eta == S::zero() {
        return Ok(());
    }
    for (o, &gi) in out.stacked_mut().iter_mut().zip(g) {
        *o -= eta * gi;
    }
    Ok(())
}

/// One exact full-batch update `W⁽ᵗ⁺¹⁾ = W⁽ᵗ⁾ − η ∇L(W⁽ᵗ⁾)`.
pub fn gd_step<S: Scalar>(weights: &CnnWeights<S>, dataset: &Dataset<S>, eta: S) -> Result<CnnWeights<S>> {
    check_eta(eta)?;
    if dataset.n() == 0 {
        return domain("gradient step on an empty dataset");
    }
    let design = Design::new(dataset);
    let eval = evaluate(weights, &design)?;
    let g = gradient_from_eval(weights, &design, &eval);
    let mut out = weights.clone();
    apply_update(weights, &g.g, eta, &mut out)?;
    Ok(out)
}

fn record<S: Scalar>(step: u64, eval: &BatchEval<S>) -> Result<TraceRow> {
    let loss = eval.loss.as_f64();
    if !loss.is_finite() {
        return Err(Error::Numeric { step, what: "non-finite training loss".into() });
    }
    let correct = eval.margins.iter().filter(|&&z| z > S::zero()).count();
    Ok(TraceRow {
        step,
        loss,
        margins: MarginStats::of(&eval.margins),
        lossderiv_ratio: lossderiv_ratio(&eval.lossderivs),
        train_accuracy: correct as f64 / eval.margins.len() as f64,
    })
}

/// Runs `cfg.epochs` gradient steps from `weights`, recording every
/// `record_every` steps (and always the first and last) and calling each hook
/// after every step.
pub fn train<S: Scalar>(
    dataset: &Dataset<S>,
    weights: CnnWeights<S>,
    cfg: &TrainConfig,
    hooks: &mut [&mut dyn TrainHook<S>],
) -> Result<TrainTrace<S>> {
    cfg.validate()?;
    if dataset.n() == 0 {
        return domain("training on an empty dataset");
    }
    let design = Design::new(dataset);
    let eta = S::of(cfg.eta);
    for h in hooks.iter_mut() {
        h.on_start(&weights, dataset)?;
    }
    let start = weights.step;
    let end = start + cfg.epochs;
    let mut cur = weights;
    let mut next = cur.clone();
    let mut rows = Vec::new();
    let mut snapshots = Vec::new();
    let mut stopped_at = None;
    loop {
        let t = cur.step;
        let eval = evaluate(&cur, &design)?;
        let is_recorded = (t - start) % cfg.record_every == 0 || t == end;
        let below = eval.loss.as_f64() <= cfg.target_eps;
        let stop = t == end || (cfg.early_stop && below);
        if is_recorded || stop {
            rows.push(record(t, &eval)?);
            if cfg.keep_snapshots {
                snapshots.push(cur.clone());
            }
        }
        if stop {
            if cfg.early_stop && below {
                stopped_at = Some(t);
            }
            break;
        }
        let g = gradient_from_eval(&cur, &design, &eval);
        apply_update(&cur, &g.g, eta, &mut next)?;
        let ctx = StepContext {
            t,
            prev: &cur,
            eval: &eval,
            next: &next,
            dataset,
            eta,
            recorded: (t + 1 - start) % cfg.record_every == 0 || t + 1 == end,
        };
        for h in hooks.iter_mut() {
            h.on_step(&ctx)?;
        }
        std::mem::swap(&mut cur, &mut next);
    }
    Ok(TrainTrace { rows, weights_final: cur, snapshots, stopped_at })
}

/// Outcome of one inequality with polylog factors and hidden constants set to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clause {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

impl Clause {
    fn at_least(name: &str, lhs: f64, rhs: f64) -> Self {
        Clause { name: name.into(), lhs, rhs, pass: lhs >= rhs }
    }

    fn at_most(name: &str, lhs: f64, rhs: f64) -> Self {
        Clause { name: name.into(), lhs, rhs, pass: lhs <= rhs }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Side {
    BenignSide,
    HarmfulSide,
}

impl Side {
    fn of(value: f64) -> Self {
        if value >= 1.0 {
            Side::BenignSide
        } else {
            Side::HarmfulSide
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    pub classic: Vec<Clause>,
    pub small_angle: Vec<Clause>,
    /// `n‖μ‖⁴ / (σp⁴ d)`.
    pub classic_value: f64,
    pub classic_side: Side,
    /// `‖μ‖⁴ (1 − cos θ)² / (m² σp⁴ d)`.
    pub small_angle_value: f64,
    pub small_angle_side: Side,
    /// `η` divided by the learning-rate ceiling of each regime; reported, not judged.
    pub eta_ratio_classic: f64,
    pub eta_ratio_small_angle: f64,
}

impl RegimeReport {
    pub fn clause(&self, name: &str) -> Option<&Clause> {
        self.classic.iter().chain(&self.small_angle).find(|c| c.name == name)
    }
}

/// Upper limit on the flip probability used for the "`p ≤ c`" clause.
pub const FLIP_CEILING: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeInputs {
    pub n: usize,
    pub d: usize,
    pub m: usize,
    pub mu_norm: f64,
    pub sigma_p: f64,
    pub flip_p: f64,
    pub eta: f64,
    pub sigma_0: f64,
    pub cos_theta: f64,
    pub eps: f64,
    pub delta: f64,
}

/// Evaluates every clause of both sufficient-condition sets with unknown
/// constants and polylog factors set to 1.
pub fn classify_regime(x: &RegimeInputs) -> Result<RegimeReport> {
    let positive = [x.mu_norm, x.sigma_p, x.eta, x.sigma_0, x.eps, x.delta];
    if x.n == 0 || x.d == 0 || x.m == 0 || positive.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return domain("regime inputs must all be positive");
    }
    if !(0.0..0.5).contains(&x.flip_p) {
        return domain(format!("flip probability must lie in [0, 1/2), got {}", x.flip_p));
    }
    if !(0.0..1.0).contains(&x.cos_theta) {
        return domain(format!("cos_theta must lie in [0, 1), got {}", x.cos_theta));
    }
    let (n, d, m) = (x.n as f64, x.d as f64, x.m as f64);
    let (mu2, sp2) = (x.mu_norm * x.mu_norm, x.sigma_p * x.sigma_p);
    let gap = 1.0 - x.cos_theta;

    let eta_max_classic = 1.0 / f64::max(sp2 * d.powf(1.5) / (n * n * m.sqrt()), sp2 * d / (n * m));
    let classic = vec![
        Clause::at_least("d >= n^2", d, n * n),
        Clause::at_least("d >= n mu^2 / sigma_p^2", d, n * mu2 / sp2),
        Clause::at_least("m >= log(n/delta)", m, (n / x.delta).ln()),
        Clause::at_least("n >= log(m/delta)", n, (m / x.delta).ln()),
        Clause::at_most("sigma_0 <= sqrt(n)/(sigma_p d)", x.sigma_0, n.sqrt() / (x.sigma_p * d)),
        Clause::at_most("sigma_0 <= n mu/(sigma_p^2 d)", x.sigma_0, n * x.mu_norm / (sp2 * d)),
        Clause::at_most("p <= c", x.flip_p, FLIP_CEILING),
        Clause::at_most("cos_theta < 1/2", x.cos_theta, 0.5).strict(x.cos_theta < 0.5),
    ];

    let eta_max_small = 1.0 / f64::max(sp2 * d.powf(1.5) / (n * n * m), sp2 * d / n);
    let small_angle = vec![
        Clause::at_least("d >= n^3 m^3 mu^2 / sigma_p^2", d, n.powi(3) * m.powi(3) * mu2 / sp2),
        Clause::at_least("m >= log(n d)", m, (n * d).ln()),
        Clause::at_least("n >= log(m d)", n, (m * d).ln()),
        Clause::at_least("mu (1 - cos_theta) >= sigma_p m", x.mu_norm * gap, x.sigma_p * m),
        Clause::at_most("p <= c", x.flip_p, FLIP_CEILING),
        Clause::at_least("1 - cos_theta >= 1/sqrt(n)", gap, 1.0 / n.sqrt()),
    ];

    let classic_value = n * mu2 * mu2 / (sp2 * sp2 * d);
    let small_angle_value = mu2 * mu2 * gap * gap / (m * m * sp2 * sp2 * d);
    Ok(RegimeReport {
        classic,
        small_angle,
        classic_value,
        classic_side: Side::of(classic_value),
        small_angle_value,
        small_angle_side: Side::of(small_angle_value),
        eta_ratio_classic: x.eta / eta_max_classic,
        eta_ratio_small_angle: x.eta / eta_max_small,
    })
}

impl Clause {
    fn strict(mut self, pass: bool) -> Self {
        self.pass = pass;
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{build_basis, sample_dataset, DataConfig};
    use crate::model::{init_weights, training_loss};
    use crate::rng::{stream_rng, Stream};

    fn setup(n: usize, d: usize, m: usize, mu: f64, cos: f64, p: f64, s0: f64, seed: u64) -> (Dataset<f64>, CnnWeights<f64>) {
        let basis = build_basis(d, mu, cos, &mut stream_rng(seed, Stream::Basis)).unwrap();
        let cfg = DataConfig { n, sigma_p: 1.0, flip_p: p, seed };
        let ds = sample_dataset(&basis, &cfg, &mut stream_rng(seed, Stream::Data)).unwrap();
        let w = init_weights(m, d, s0, &mut stream_rng(seed, Stream::Init)).unwrap();
        (ds, w)
    }

    /// `‖μ‖` such that `n‖μ‖⁴/(σp⁴ d)` equals `target` with `σp = 1`.
    fn mu_for(n: usize, d: usize, target: f64) -> f64 {
        (target * d as f64 / n as f64).powf(0.25)
    }

    #[test]
    fn zero_learning_rate_is_bit_exact_identity() {
        let (ds, w) = setup(10, 20, 4, 1.0, 0.3, 0.1, 0.1, 1);
        let out = gd_step(&w, &ds, 0.0).unwrap();
        assert_eq!(out.stacked(), w.stacked());
        assert_eq!(out.step, 1);
    }

    #[test]
    fn first_step_decreases_loss_at_reference_config() {
        let (ds, w) = setup(80, 200, 40, mu_for(80, 200, 50.0), 0.8, 0.1, 0.01, 2);
        let before = training_loss(&w, &ds).unwrap();
        let after = training_loss(&gd_step(&w, &ds, 1e-3).unwrap(), &ds).unwrap();
        assert!(after < before, "{after} !< {before}");
    }

    #[test]
    fn negative_learning_rate_rejected() {
        let (ds, w) = setup(4, 10, 2, 1.0, 0.3, 0.0, 0.1, 3);
        assert!(matches!(gd_step(&w, &ds, -1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn non_finite_weights_surface_step_index() {
        let (mut ds, mut w) = setup(4, 10, 2, 1.0, 0.3, 0.0, 0.1, 4);
        w.step = 17;
        ds.points[0].patch1[0] = f64::INFINITY;
        ds.points[0].patch2[0] = f64::INFINITY;
        match gd_step(&w, &ds, 0.1) {
            Err(Error::Numeric { step, .. }) => assert_eq!(step, 17),
            other => panic!("expected numeric failure, got {other:?}"),
        }
    }

    #[test]
    fn recording_schedule_includes_first_and_last() {
        let (ds, w) = setup(8, 30, 4, 2.0, 0.3, 0.0, 0.01, 5);
        let cfg = TrainConfig { eta: 0.1, epochs: 25, record_every: 10, keep_snapshots: true, ..Default::default() };
        let tr = train(&ds, w, &cfg, &mut []).unwrap();
        let steps: Vec<u64> = tr.rows.iter().map(|r| r.step).collect();
        assert_eq!(steps, vec![0, 10, 20, 25]);
        assert_eq!(tr.snapshots.len(), 4);
        assert_eq!(tr.weights_final.step, 25);
        assert!(tr.rows.iter().all(|r| r.loss > 0.0));
    }

    #[test]
    fn separable_noiseless_case_fits() {
        let (ds, w) = setup(8, 40, 10, 3.0, 0.3, 0.0, 0.01, 6);
        let cfg = TrainConfig { eta: 1.0, epochs: 20_000, early_stop: true, ..Default::default() };
        let tr = train(&ds, w, &cfg, &mut []).unwrap();
        assert!(tr.final_row().loss < 1e-2, "loss {}", tr.final_row().loss);
    }

    #[test]
    fn early_stop_is_consistent() {
        let (ds, w) = setup(8, 40, 10, 3.0, 0.3, 0.0, 0.01, 7);
        let cfg = TrainConfig { eta: 1.0, epochs: 20_000, early_stop: true, record_every: 1, ..Default::default() };
        let tr = train(&ds, w, &cfg, &mut []).unwrap();
        let t0 = tr.stopped_at.expect("reaches target");
        let last = tr.final_row();
        assert_eq!(last.step, t0);
        assert!(last.loss <= cfg.target_eps);
        assert!(tr.rows[..tr.rows.len() - 1].iter().all(|r| r.loss > cfg.target_eps));
    }

    struct Counter(u64, u64);
    impl TrainHook<f64> for Counter {
        fn on_step(&mut self, ctx: &StepContext<'_, f64>) -> Result<()> {
            assert_eq!(ctx.next.step, ctx.t + 1);
            self.0 += 1;
            self.1 += ctx.recorded as u64;
            Ok(())
        }
    }

    #[test]
    fn hooks_see_every_step() {
        let (ds, w) = setup(6, 20, 3, 1.0, 0.3, 0.0, 0.01, 8);
        let mut c = Counter(0, 0);
        let cfg = TrainConfig { eta: 0.1, epochs: 33, record_every: 10, ..Default::default() };
        train(&ds, w, &cfg, &mut [&mut c]).unwrap();
        assert_eq!((c.0, c.1), (33, 4));
    }

    #[test]
    fn classifier_values() {
        let base = RegimeInputs {
            n: 80,
            d: 200,
            m: 40,
            mu_norm: mu_for(80, 200, 50.0),
            sigma_p: 1.0,
            flip_p: 0.1,
            eta: 1e-3,
            sigma_0: 0.01,
            cos_theta: 0.8,
            eps: 0.01,
            delta: 0.05,
        };
        let r = classify_regime(&base).unwrap();
        assert!((r.classic_value - 50.0).abs() < 1e-9);
        assert_eq!(r.classic_side, Side::BenignSide);
        let low = classify_regime(&RegimeInputs { mu_norm: mu_for(80, 200, 0.2), ..base }).unwrap();
        assert!((low.classic_value - 0.2).abs() < 1e-12);
        assert_eq!(low.classic_side, Side::HarmfulSide);
        let classic = classify_regime(&RegimeInputs { cos_theta: 0.49, ..base }).unwrap();
        assert!(classic.clause("cos_theta < 1/2").unwrap().pass);
        assert!(!r.clause("cos_theta < 1/2").unwrap().pass);
    }

    #[test]
    fn classifier_rejects_invalid_ranges() {
        let ok = RegimeInputs {
            n: 10,
            d: 100,
            m: 5,
            mu_norm: 1.0,
            sigma_p: 1.0,
            flip_p: 0.1,
            eta: 0.1,
            sigma_0: 0.01,
            cos_theta: 0.2,
            eps: 0.01,
            delta: 0.05,
        };
        assert!(classify_regime(&RegimeInputs { flip_p: 0.5, ..ok }).is_err());
        assert!(classify_regime(&RegimeInputs { cos_theta: 1.0, ..ok }).is_err());
        assert!(classify_regime(&RegimeInputs { sigma_p: 0.0, ..ok }).is_err());
    }
}
