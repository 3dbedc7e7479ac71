//! Signal–noise decomposition of the filters, tracked alongside training and
//! checked as exact identities.
//!
//! Every filter satisfies `⟨w⁽ᵗ⁾_{j,r}, ξ_i⟩ = ⟨w⁽⁰⁾_{j,r}, ξ_i⟩ + Σ_{i′} ρ⁽ᵗ⁾_{j,r,i′} ⟨ξ_{i′}, ξ_i⟩ / ‖ξ_{i′}‖²`
//! with `ρ = ρ̄ + ρ̲`, where `ρ̄` collects the updates from samples with `y_i = j`
//! and `ρ̲` those with `y_i = −j`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Label, SignalLabelSets, SignalTag, XorBasis};
use crate::error::{Error, Result};
use crate::linalg::{dot, norm_sq};
use crate::model::{filter_row, CnnWeights};
use crate::scalar::Scalar;
use crate::train::{StepContext, TrainHook};

/// Decomposition coefficients, stored split as `(ρ̄, ρ̲)`; each block is `2m × n`
/// with rows in the stacked filter order.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientTable<S> {
    pub m: usize,
    pub n: usize,
    pub step: u64,
    rho_bar: Vec<S>,
    rho_under: Vec<S>,
}

impl<S: Scalar> CoefficientTable<S> {
    /// All-zero table at step 0.
    pub fn new(m: usize, n: usize) -> Self {
        CoefficientTable { m, n, step: 0, rho_bar: vec![S::zero(); 2 * m * n], rho_under: vec![S::zero(); 2 * m * n] }
    }

    fn idx(&self, j: Label, r: usize, i: usize) -> usize {
        filter_row(self.m, j, r) * self.n + i
    }

    pub fn rho_bar(&self, j: Label, r: usize, i: usize) -> S {
        self.rho_bar[self.idx(j, r, i)]
    }

    pub fn rho_under(&self, j: Label, r: usize, i: usize) -> S {
        self.rho_under[self.idx(j, r, i)]
    }

    /// `ρ = ρ̄ + ρ̲`.
    pub fn rho(&self, j: Label, r: usize, i: usize) -> S {
        let k = self.idx(j, r, i);
        self.rho_bar[k] + self.rho_under[k]
    }

    /// Checks signs and supports: `ρ̄ ≥ 0` vanishing unless `y_i = j`, `ρ̲ ≤ 0` vanishing unless `y_i = −j`.
    pub fn support_violations(&self, labels: &[Label]) -> usize {
        let mut bad = 0;
        for j in Label::BOTH {
            for r in 0..self.m {
                for (i, &y) in labels.iter().enumerate() {
                    let (hi, lo) = (self.rho_bar(j, r, i), self.rho_under(j, r, i));
                    let own = y == j;
                    if hi < S::zero() || lo > S::zero() || (!own && hi != S::zero()) || (own && lo != S::zero()) {
                        bad += 1;
                    }
                }
            }
        }
        bad
    }

    /// Applies one step of the coefficient recursion given the noise
    /// activations `act(row, i) = ⟨w⁽ᵗ⁾_row, ξ_i⟩`.
    fn advance(&mut self, act: impl Fn(usize, usize) -> S, noise_norms_sq: &[S], labels: &[Label], eta: S, lossderivs: &[S]) {
        let scale = eta / S::of((self.n * self.m) as f64);
        for j in Label::BOTH {
            for r in 0..self.m {
                let row = filter_row(self.m, j, r);
                for i in 0..self.n {
                    if act(row, i) > S::zero() {
                        let delta = scale * lossderivs[i] * noise_norms_sq[i];
                        let k = row * self.n + i;
                        if labels[i] == j {
                            self.rho_bar[k] -= delta;
                        } else {
                            self.rho_under[k] += delta;
                        }
                    }
                }
            }
        }
        self.step += 1;
    }
}

fn noise_norms_sq<S: Scalar>(dataset: &Dataset<S>) -> Vec<S> {
    dataset.points.iter().map(|p| norm_sq(&p.xi)).collect()
}

/// `2m × n` matrix of `⟨w_row, ξ_i⟩`.
pub fn noise_projections<S: Scalar>(weights: &CnnWeights<S>, dataset: &Dataset<S>) -> Vec<S> {
    let n = dataset.n();
    let mut out = vec![S::zero(); 2 * weights.m * n];
    S::gemm(2 * weights.m, weights.d, n, S::one(), weights.stacked(), &dataset.noise_matrix(), true, S::zero(), &mut out);
    out
}

/// One step of the coefficient recursion from the weights and `ℓ′` at step `t`.
pub fn update_coefficients<S: Scalar>(
    table: &CoefficientTable<S>,
    weights: &CnnWeights<S>,
    dataset: &Dataset<S>,
    eta: S,
    lossderivs: &[S],
) -> Result<CoefficientTable<S>> {
    if table.step != weights.step {
        return Err(Error::Consistency(format!("table at step {} but weights at step {}", table.step, weights.step)));
    }
    if table.m != weights.m || table.n != dataset.n() || lossderivs.len() != dataset.n() {
        return Err(Error::Shape {
            expected: format!("m = {}, n = {}", table.m, table.n),
            got: format!("m = {}, n = {}, {} loss derivatives", weights.m, dataset.n(), lossderivs.len()),
        });
    }
    let proj = noise_projections(weights, dataset);
    let n = table.n;
    let mut out = table.clone();
    out.advance(|row, i| proj[row * n + i], &noise_norms_sq(dataset), &dataset.labels(), eta, lossderivs);
    Ok(out)
}

/// Right-hand side of the decomposition identity for one `(j, r, i)`.
pub fn reconstruct_inner_product<S: Scalar>(
    table: &CoefficientTable<S>,
    init: &CnnWeights<S>,
    dataset: &Dataset<S>,
    j: Label,
    r: usize,
    i: usize,
) -> Result<S> {
    if r >= table.m || i >= table.n || table.n != dataset.n() || table.m != init.m {
        return Err(Error::Index(format!("(r, i) = ({r}, {i}) outside m = {}, n = {}", table.m, table.n)));
    }
    let xi = &dataset.points[i].xi;
    let mut acc = dot(init.filter(j, r), xi);
    for (k, p) in dataset.points.iter().enumerate() {
        let rho = table.rho(j, r, k);
        if rho != S::zero() {
            acc += rho * dot(&p.xi, xi) / norm_sq(&p.xi);
        }
    }
    Ok(acc)
}

/// Batched reconstruction of every `⟨w_{j,r}, ξ_i⟩` from a coefficient table.
#[derive(Debug, Clone)]
pub struct Reconstructor<S> {
    m: usize,
    n: usize,
    /// `⟨w⁽⁰⁾_row, ξ_i⟩`, `2m × n`.
    init_proj: Vec<S>,
    /// `⟨ξ_k, ξ_i⟩ / ‖ξ_k‖²`, `n × n` with row `k`.
    kernel: Vec<S>,
    abs_kernel: Vec<S>,
}

impl<S: Scalar> Reconstructor<S> {
    pub fn new(init: &CnnWeights<S>, dataset: &Dataset<S>) -> Self {
        let n = dataset.n();
        let gram = dataset.noise_gram();
        let mut kernel = gram;
        for k in 0..n {
            let d = kernel[k * n + k];
            kernel[k * n..(k + 1) * n].iter_mut().for_each(|x| *x /= d);
        }
        let abs_kernel = kernel.iter().map(|x| x.abs()).collect();
        Reconstructor { m: init.m, n, init_proj: noise_projections(init, dataset), kernel, abs_kernel }
    }

    pub fn init_projections(&self) -> &[S] {
        &self.init_proj
    }

    /// Reconstructed projections and, per entry, the magnitude scale
    /// `|⟨w⁽⁰⁾, ξ_i⟩| + Σ_k |ρ_k ⟨ξ_k, ξ_i⟩| / ‖ξ_k‖²`.
    pub fn reconstruct(&self, table: &CoefficientTable<S>) -> (Vec<S>, Vec<S>) {
        let (rows, n) = (2 * self.m, self.n);
        let rho: Vec<S> = table.rho_bar.iter().zip(&table.rho_under).map(|(&a, &b)| a + b).collect();
        let rho_abs: Vec<S> = rho.iter().map(|x| x.abs()).collect();
        let mut rec = self.init_proj.clone();
        S::gemm(rows, n, n, S::one(), &rho, &self.kernel, false, S::one(), &mut rec);
        let mut scale: Vec<S> = self.init_proj.iter().map(|x| x.abs()).collect();
        S::gemm(rows, n, n, S::one(), &rho_abs, &self.abs_kernel, false, S::one(), &mut scale);
        (rec, scale)
    }

    /// `max |rec − live| / max(|live|, scale)` over every `(j, r, i)`.
    pub fn max_relative_error(&self, table: &CoefficientTable<S>, live: &[S]) -> f64 {
        let (rec, scale) = self.reconstruct(table);
        rec.iter()
            .zip(&scale)
            .zip(live)
            .map(|((&r, &s), &l)| {
                let denom = l.abs().max(s).as_f64();
                if denom == 0.0 {
                    (r - l).abs().as_f64()
                } else {
                    (r - l).abs().as_f64() / denom
                }
            })
            .fold(0.0, f64::max)
    }
}

/// `⟨w_{j,r}, u⟩` and `⟨w_{j,r}, v⟩` in stacked filter order.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalProjections<S> {
    pub step: u64,
    pub ip_u: Vec<S>,
    pub ip_v: Vec<S>,
}

impl<S: Scalar> SignalProjections<S> {
    pub fn of(weights: &CnnWeights<S>, basis: &XorBasis<S>) -> Self {
        SignalProjections { step: weights.step, ip_u: weights.project(&basis.u), ip_v: weights.project(&basis.v) }
    }

    pub fn u(&self, m: usize, j: Label, r: usize) -> S {
        self.ip_u[filter_row(m, j, r)]
    }

    pub fn v(&self, m: usize, j: Label, r: usize) -> S {
        self.ip_v[filter_row(m, j, r)]
    }

    /// `⟨w_row, μ⟩` for a signal tag.
    fn along(&self, row: usize, tag: SignalTag) -> S {
        let base = if tag.is_u() { self.ip_u[row] } else { self.ip_v[row] };
        tag.sign::<S>() * base
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignalAudit {
    pub max_abs_discrepancy: f64,
    pub max_abs_change: f64,
}

/// Recomputes the one-step change of every `⟨w_{j,r}, u⟩` and `⟨w_{j,r}, v⟩`
/// from the index sets `S_{μ,y}`, the signal indicators at step `t` and `ℓ′`,
/// and compares it with the observed change.
pub fn signal_update_audit<S: Scalar>(
    before: &SignalProjections<S>,
    after: &SignalProjections<S>,
    dataset: &Dataset<S>,
    eta: S,
    lossderivs: &[S],
) -> SignalAudit {
    let sets = dataset.signal_label_sets();
    let rows = before.ip_u.len();
    let m = rows / 2;
    let n = dataset.n();
    let (mu_sq, cross) = dataset.basis.signal_gram();
    let scale = eta / S::of((n * m) as f64);
    let mut worst = SignalAudit { max_abs_discrepancy: 0.0, max_abs_change: 0.0 };
    for row in 0..rows {
        let j = if row < m { S::one() } else { -S::one() };
        let (mut du, mut dv) = (S::zero(), S::zero());
        for (tag, y, idx) in sets.iter() {
            if idx.is_empty() || before.along(row, tag) <= S::zero() {
                continue;
            }
            let total: S = idx.iter().map(|&i| lossderivs[i]).sum();
            // ⟨μ, u⟩ and ⟨μ, v⟩ for μ = ±u or ±v.
            let s = tag.sign::<S>();
            let (with_u, with_v) = if tag.is_u() { (s * mu_sq, s * cross) } else { (s * cross, s * mu_sq) };
            let c = -scale * total * j * y.sign::<S>();
            du += c * with_u;
            dv += c * with_v;
        }
        let obs_u = after.ip_u[row] - before.ip_u[row];
        let obs_v = after.ip_v[row] - before.ip_v[row];
        let disc = (obs_u - du).abs().max((obs_v - dv).abs()).as_f64();
        worst.max_abs_discrepancy = worst.max_abs_discrepancy.max(disc);
        worst.max_abs_change = worst.max_abs_change.max(obs_u.abs().max(obs_v.abs()).as_f64());
    }
    worst
}

/// Noise-activation pattern `1{⟨w_{j,r}, ξ_i⟩ > 0}` at one step, with the
/// derived sets `S_i`, `S_{j,r}` and `S_{μ,y}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationSets {
    pub step: u64,
    pub m: usize,
    labels: Vec<Label>,
    /// `2m × n`, stacked filter order.
    active: Vec<bool>,
    signal_sets: SignalLabelSets,
}

impl ActivationSets {
    pub fn from_projections<S: Scalar>(step: u64, m: usize, proj: &[S], dataset: &Dataset<S>) -> Self {
        ActivationSets {
            step,
            m,
            labels: dataset.labels(),
            active: proj.iter().map(|&x| x > S::zero()).collect(),
            signal_sets: dataset.signal_label_sets(),
        }
    }

    pub fn of<S: Scalar>(weights: &CnnWeights<S>, dataset: &Dataset<S>) -> Self {
        Self::from_projections(weights.step, weights.m, &noise_projections(weights, dataset), dataset)
    }

    fn n(&self) -> usize {
        self.labels.len()
    }

    fn is_active(&self, j: Label, r: usize, i: usize) -> bool {
        self.active[filter_row(self.m, j, r) * self.n() + i]
    }

    /// `S_i = {r : ⟨w_{y_i,r}, ξ_i⟩ > 0}`.
    pub fn s_i(&self, i: usize) -> Vec<usize> {
        (0..self.m).filter(|&r| self.is_active(self.labels[i], r, i)).collect()
    }

    /// `S_{j,r} = {i : y_i = j, ⟨w_{j,r}, ξ_i⟩ > 0}`.
    pub fn s_jr(&self, j: Label, r: usize) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.labels[i] == j && self.is_active(j, r, i)).collect()
    }

    pub fn s_mu_y(&self, tag: SignalTag, y: Label) -> &[usize] {
        self.signal_sets.get(tag, y)
    }

    /// `|S_i|` for every sample.
    pub fn s_i_sizes(&self) -> Vec<usize> {
        (0..self.n()).map(|i| self.s_i(i).len()).collect()
    }

    /// Entries `(y_i, r, i)` active in `self` but not in `later` (containment
    /// failures) and entries whose state differs at all (equality failures).
    fn compare(&self, later: &ActivationSets) -> (usize, usize) {
        let (mut lost, mut changed) = (0, 0);
        for (i, &y) in self.labels.iter().enumerate() {
            for r in 0..self.m {
                let (a, b) = (self.is_active(y, r, i), later.is_active(y, r, i));
                lost += usize::from(a && !b);
                changed += usize::from(a != b);
            }
        }
        (lost, changed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    /// `S⁽⁰⁾ ⊆ S⁽ᵗ⁾` at every compared step.
    pub containment_held: bool,
    /// `S⁽⁰⁾ = S⁽ᵗ⁾` at every compared step.
    pub equality_held: bool,
    pub first_containment_violation: Option<u64>,
    pub first_equality_violation: Option<u64>,
    pub max_lost_entries: usize,
    pub max_changed_entries: usize,
    /// `(step, lost, changed)` per compared step.
    pub per_step: Vec<(u64, usize, usize)>,
}

/// Compares every entry of `history` against the first one.
pub fn activation_monotonicity(history: &[ActivationSets]) -> MonotonicityReport {
    let mut rep = MonotonicityReport {
        containment_held: true,
        equality_held: true,
        first_containment_violation: None,
        first_equality_violation: None,
        max_lost_entries: 0,
        max_changed_entries: 0,
        per_step: Vec::new(),
    };
    let Some(first) = history.first() else { return rep };
    for later in history {
        let (lost, changed) = first.compare(later);
        if lost > 0 && rep.first_containment_violation.is_none() {
            rep.first_containment_violation = Some(later.step);
        }
        if changed > 0 && rep.first_equality_violation.is_none() {
            rep.first_equality_violation = Some(later.step);
        }
        rep.max_lost_entries = rep.max_lost_entries.max(lost);
        rep.max_changed_entries = rep.max_changed_entries.max(changed);
        rep.per_step.push((later.step, lost, changed));
    }
    rep.containment_held = rep.first_containment_violation.is_none();
    rep.equality_held = rep.first_equality_violation.is_none();
    rep
}

/// The (filter sign, signal) pairs whose projection moves monotonically:
/// `⟨w_{+1,r}, u⟩` and `⟨w_{−1,r}, v⟩`.
fn own_signal<S: Scalar>(p: &SignalProjections<S>, m: usize, j: Label, r: usize) -> S {
    match j {
        Label::Pos => p.u(m, j, r),
        Label::Neg => p.v(m, j, r),
    }
}

/// The cross pairs bounded near initialization: `⟨w_{+1,r}, v⟩` and `⟨w_{−1,r}, u⟩`.
fn cross_signal<S: Scalar>(p: &SignalProjections<S>, m: usize, j: Label, r: usize) -> S {
    match j {
        Label::Pos => p.v(m, j, r),
        Label::Neg => p.u(m, j, r),
    }
}

/// Filters whose own-signal projection changed sign relative to step 0 or
/// shrank in magnitude since the previous recorded step.
pub fn sign_persistence_violations<S: Scalar>(
    init: &SignalProjections<S>,
    prev: &SignalProjections<S>,
    cur: &SignalProjections<S>,
) -> usize {
    let m = init.ip_u.len() / 2;
    let mut bad = 0;
    for j in Label::BOTH {
        for r in 0..m {
            let (a0, a1, a2) = (own_signal(init, m, j, r), own_signal(prev, m, j, r), own_signal(cur, m, j, r));
            let slack = S::of(1e-12) * a1.abs().max(S::one());
            let flipped = a0 != S::zero() && a2.signum() != a0.signum();
            bad += usize::from(flipped || a2.abs() < a1.abs() - slack);
        }
    }
    bad
}

/// Number of filters `w_{j,r}` whose own-signal projection has the opposite
/// sign of its (nonzero) initial value.
pub fn own_signal_sign_flips<S: Scalar>(init: &SignalProjections<S>, cur: &SignalProjections<S>, j: Label) -> usize {
    let m = init.ip_u.len() / 2;
    (0..m)
        .filter(|&r| {
            let (a0, a) = (own_signal(init, m, j, r), own_signal(cur, m, j, r));
            a0 != S::zero() && a.signum() != a0.signum()
        })
        .count()
}

/// Filters with `|cross⁽ᵗ⁾| > |cross⁽⁰⁾| + η‖μ‖²/m`.
pub fn cross_signal_violations<S: Scalar>(init: &SignalProjections<S>, cur: &SignalProjections<S>, eta: S, mu_norm_sq: S) -> usize {
    let m = init.ip_u.len() / 2;
    let allowance = eta * mu_norm_sq / S::of(m as f64);
    let mut bad = 0;
    for j in Label::BOTH {
        for r in 0..m {
            bad += usize::from(cross_signal(cur, m, j, r).abs() > cross_signal(init, m, j, r).abs() + allowance);
        }
    }
    bad
}

/// One `decomp.csv` row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompRow {
    pub t: u64,
    pub max_reconstruction_error: f64,
    pub mean_rho_bar_active: f64,
    pub min_rho_under: f64,
    pub sign_persistence_violations: usize,
    /// Filters `w_{+1,r}` with `sign⟨w_{+1,r}, u⟩` different from step 0.
    pub u_sign_flips: usize,
    /// Filters `w_{−1,r}` with `sign⟨w_{−1,r}, v⟩` different from step 0.
    pub v_sign_flips: usize,
    pub cross_signal_violations: usize,
    pub containment_violations: usize,
    /// Largest signal-audit discrepancy over the steps since the previous row.
    pub signal_audit_discrepancy: f64,
}

/// Training hook that maintains the coefficient table every step and runs
/// every decomposition check at recorded steps.
pub struct DecompositionTracker<S> {
    table: CoefficientTable<S>,
    recon: Option<Reconstructor<S>>,
    noise_norms_sq: Vec<S>,
    labels: Vec<Label>,
    proj_init: Option<SignalProjections<S>>,
    proj_cur: Option<SignalProjections<S>>,
    proj_last_recorded: Option<SignalProjections<S>>,
    audit_since_row: f64,
    pub audit_max: f64,
    pub rows: Vec<DecompRow>,
    pub activation_history: Vec<ActivationSets>,
    pub signal_history: Vec<SignalProjections<S>>,
    pub support_violations: usize,
}

impl<S: Scalar> DecompositionTracker<S> {
    pub fn new(m: usize, dataset: &Dataset<S>) -> Self {
        DecompositionTracker {
            table: CoefficientTable::new(m, dataset.n()),
            recon: None,
            noise_norms_sq: noise_norms_sq(dataset),
            labels: dataset.labels(),
            proj_init: None,
            proj_cur: None,
            proj_last_recorded: None,
            audit_since_row: 0.0,
            audit_max: 0.0,
            rows: Vec::new(),
            activation_history: Vec::new(),
            signal_history: Vec::new(),
            support_violations: 0,
        }
    }

    pub fn table(&self) -> &CoefficientTable<S> {
        &self.table
    }

    pub fn max_reconstruction_error(&self) -> f64 {
        self.rows.iter().map(|r| r.max_reconstruction_error).fold(0.0, f64::max)
    }

    pub fn total_sign_violations(&self) -> usize {
        self.rows.iter().map(|r| r.sign_persistence_violations).sum()
    }

    /// Largest number of `⟨w_{+1,r}, u⟩` sign flips at any recorded step.
    pub fn max_u_sign_flips(&self) -> usize {
        self.rows.iter().map(|r| r.u_sign_flips).max().unwrap_or(0)
    }

    pub fn max_v_sign_flips(&self) -> usize {
        self.rows.iter().map(|r| r.v_sign_flips).max().unwrap_or(0)
    }

    pub fn total_cross_violations(&self) -> usize {
        self.rows.iter().map(|r| r.cross_signal_violations).sum()
    }

    pub fn monotonicity(&self) -> MonotonicityReport {
        activation_monotonicity(&self.activation_history)
    }

    fn push_row(&mut self, t: u64, live: &[S], dataset: &Dataset<S>, eta: S) {
        let recon = self.recon.as_ref().expect("on_start sets the reconstructor");
        let err = recon.max_relative_error(&self.table, live);
        let (mut sum, mut count, mut min_under) = (0.0, 0usize, 0.0f64);
        for (&hi, &lo) in self.table.rho_bar.iter().zip(&self.table.rho_under) {
            if hi > S::zero() {
                sum += hi.as_f64();
                count += 1;
            }
            min_under = min_under.min(lo.as_f64());
        }
        let sets = ActivationSets::from_projections(t, self.table.m, live, dataset);
        let containment = self.activation_history.first().map_or(0, |s0| s0.compare(&sets).0);
        let cur = self.proj_cur.as_ref().expect("projections initialised");
        let init = self.proj_init.as_ref().expect("projections initialised");
        let prev = self.proj_last_recorded.as_ref().unwrap_or(init);
        let row = DecompRow {
            t,
            max_reconstruction_error: err,
            mean_rho_bar_active: if count == 0 { 0.0 } else { sum / count as f64 },
            min_rho_under: min_under,
            sign_persistence_violations: sign_persistence_violations(init, prev, cur),
            u_sign_flips: own_signal_sign_flips(init, cur, Label::Pos),
            v_sign_flips: own_signal_sign_flips(init, cur, Label::Neg),
            cross_signal_violations: cross_signal_violations(init, cur, eta, dataset.basis.signal_gram().0),
            containment_violations: containment,
            signal_audit_discrepancy: self.audit_since_row,
        };
        self.support_violations += self.table.support_violations(&self.labels);
        self.rows.push(row);
        self.activation_history.push(sets);
        self.signal_history.push(cur.clone());
        self.proj_last_recorded = Some(cur.clone());
        self.audit_since_row = 0.0;
    }

    /// `t,max_reconstruction_error,mean_rho_bar_active,min_rho_under,sign_persistence_violations,u_sign_flips,v_sign_flips,cross_signal_violations,containment_violations,signal_audit_discrepancy`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for row in &self.rows {
            out.serialize(row)?;
        }
        out.flush()?;
        Ok(())
    }
}

impl<S: Scalar> TrainHook<S> for DecompositionTracker<S> {
    fn on_start(&mut self, w0: &CnnWeights<S>, dataset: &Dataset<S>) -> Result<()> {
        if w0.m != self.table.m || dataset.n() != self.table.n {
            return Err(Error::Shape {
                expected: format!("m = {}, n = {}", self.table.m, self.table.n),
                got: format!("m = {}, n = {}", w0.m, dataset.n()),
            });
        }
        self.table.step = w0.step;
        let recon = Reconstructor::new(w0, dataset);
        let live = recon.init_projections().to_vec();
        self.recon = Some(recon);
        let p0 = SignalProjections::of(w0, &dataset.basis);
        self.proj_init = Some(p0.clone());
        self.proj_cur = Some(p0);
        self.push_row(w0.step, &live, dataset, S::zero());
        Ok(())
    }

    fn on_step(&mut self, ctx: &StepContext<'_, S>) -> Result<()> {
        if self.table.step != ctx.t {
            return Err(Error::Consistency(format!("tracker at step {} but training at step {}", self.table.step, ctx.t)));
        }
        let n = self.table.n;
        let cols = 2 * n;
        let slots: Vec<usize> = ctx.dataset.points.iter().map(|p| p.noise_index()).collect();
        let acts = &ctx.eval.acts;
        self.table.advance(|row, i| acts[row * cols + 2 * i + slots[i]], &self.noise_norms_sq, &self.labels, ctx.eta, &ctx.eval.lossderivs);

        let before = self.proj_cur.take().expect("on_start ran");
        let after = SignalProjections::of(ctx.next, &ctx.dataset.basis);
        let audit = signal_update_audit(&before, &after, ctx.dataset, ctx.eta, &ctx.eval.lossderivs);
        self.audit_since_row = self.audit_since_row.max(audit.max_abs_discrepancy);
        self.audit_max = self.audit_max.max(audit.max_abs_discrepancy);
        self.proj_cur = Some(after);

        if ctx.recorded {
            let live = noise_projections(ctx.next, ctx.dataset);
            self.push_row(ctx.t + 1, &live, ctx.dataset, ctx.eta);
        }
        Ok(())
    }
}
