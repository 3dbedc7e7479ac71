//! Two-layer ReLU CNN with fixed ±1/m second layer:
//! `f(W, x) = Σ_j j · (1/m) Σ_r Σ_p ReLU(⟨w_{j,r}, x⁽ᵖ⁾⟩)`.

use std::io::{Read, Write};

use rand::Rng;

use crate::data::{gaussian_vec, DataPoint, Dataset, Label};
use crate::error::{domain, Error, Result};
use crate::linalg::dot;
use crate::scalar::Scalar;

/// First-layer filters. Rows `0..m` of `w` are `w_{+1,r}`, rows `m..2m` are `w_{−1,r}`.
#[derive(Debug, Clone, PartialEq)]
pub struct CnnWeights<S> {
    pub m: usize,
    pub d: usize,
    pub sigma_0: S,
    /// Gradient-descent step these weights belong to.
    pub step: u64,
    w: Vec<S>,
}

/// Row index of filter `(j, r)` in the stacked `2m × d` layout.
pub fn filter_row(m: usize, j: Label, r: usize) -> usize {
    match j {
        Label::Pos => r,
        Label::Neg => m + r,
    }
}

impl<S: Scalar> CnnWeights<S> {
    pub fn zeros(m: usize, d: usize, sigma_0: S) -> Self {
        CnnWeights { m, d, sigma_0, step: 0, w: vec![S::zero(); 2 * m * d] }
    }

    /// Builds weights from explicit `m × d` row-major blocks.
    pub fn from_parts(m: usize, d: usize, sigma_0: S, w_pos: Vec<S>, w_neg: Vec<S>) -> Result<Self> {
        if w_pos.len() != m * d || w_neg.len() != m * d {
            return Err(Error::Shape {
                expected: format!("{m}x{d} blocks"),
                got: format!("{} and {} entries", w_pos.len(), w_neg.len()),
            });
        }
        let mut w = w_pos;
        w.extend(w_neg);
        Ok(CnnWeights { m, d, sigma_0, step: 0, w })
    }

    pub fn w_pos(&self) -> &[S] {
        &self.w[..self.m * self.d]
    }

    pub fn w_neg(&self) -> &[S] {
        &self.w[self.m * self.d..]
    }

    /// Stacked `2m × d` matrix.
    pub fn stacked(&self) -> &[S] {
        &self.w
    }

    pub fn stacked_mut(&mut self) -> &mut [S] {
        &mut self.w
    }

    pub fn filter(&self, j: Label, r: usize) -> &[S] {
        let row = filter_row(self.m, j, r);
        &self.w[row * self.d..(row + 1) * self.d]
    }

    pub fn filter_mut(&mut self, j: Label, r: usize) -> &mut [S] {
        let row = filter_row(self.m, j, r);
        &mut self.w[row * self.d..(row + 1) * self.d]
    }

    pub fn scaled(&self, c: S) -> Self {
        let mut out = self.clone();
        out.w.iter_mut().for_each(|x| *x *= c);
        out
    }

    pub fn all_finite(&self) -> bool {
        self.w.iter().all(|x| x.is_finite())
    }

    /// `⟨w_{j,r}, z⟩` for every filter, in stacked row order.
    pub fn project(&self, z: &[S]) -> Vec<S> {
        self.w.chunks_exact(self.d).map(|row| dot(row, z)).collect()
    }

    /// Writes the binary checkpoint (see `docs/FORMATS.md`).
    pub fn write_checkpoint<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        w.write_all(&(self.m as u64).to_le_bytes())?;
        w.write_all(&(self.d as u64).to_le_bytes())?;
        w.write_all(&self.sigma_0.as_f64().to_le_bytes())?;
        w.write_all(&self.step.to_le_bytes())?;
        for x in &self.w {
            w.write_all(&x.as_f64().to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Format("not a weight checkpoint".into()));
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        let version = u32::from_le_bytes(b4);
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let mut b8 = [0u8; 8];
        let mut next = |r: &mut R| -> Result<[u8; 8]> {
            r.read_exact(&mut b8)?;
            Ok(b8)
        };
        let m = u64::from_le_bytes(next(&mut r)?) as usize;
        let d = u64::from_le_bytes(next(&mut r)?) as usize;
        let sigma_0 = S::of(f64::from_le_bytes(next(&mut r)?));
        let step = u64::from_le_bytes(next(&mut r)?);
        let mut w = Vec::with_capacity(2 * m * d);
        for _ in 0..2 * m * d {
            w.push(S::of(f64::from_le_bytes(next(&mut r)?)));
        }
        Ok(CnnWeights { m, d, sigma_0, step, w })
    }
}

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"XCNN";
pub const CHECKPOINT_VERSION: u32 = 1;

/// All `2·m·d` entries i.i.d. `N(0, σ0²)`.
pub fn init_weights<S: Scalar, R: Rng + ?Sized>(m: usize, d: usize, sigma_0: S, rng: &mut R) -> Result<CnnWeights<S>> {
    if m == 0 {
        return domain("m must be at least 1");
    }
    if d < 2 {
        return Err(Error::Dimension(format!("d must be at least 2, got {d}")));
    }
    if !(sigma_0 > S::zero()) || !sigma_0.is_finite() {
        return domain(format!("sigma_0 must be positive, got {sigma_0}"));
    }
    Ok(CnnWeights { m, d, sigma_0, step: 0, w: gaussian_vec(2 * m * d, sigma_0, rng) })
}

pub fn relu<S: Scalar>(z: S) -> S {
    z.max(S::zero())
}

/// Per-input forward pass with every filter activation exposed.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace<S> {
    pub f_value: S,
    /// `acts[row][p]` = `⟨w_row, x⁽ᵖ⁾⟩`, rows in stacked order.
    pub per_filter_acts: Vec<[S; 2]>,
    pub active_mask: Vec<[bool; 2]>,
    pub f_pos: S,
    pub f_neg: S,
}

impl<S: Scalar> ForwardTrace<S> {
    /// Recomputes `f` from the stored activations.
    pub fn recompute(&self, m: usize) -> S {
        let part = |rows: &[[S; 2]]| rows.iter().map(|a| relu(a[0]) + relu(a[1])).sum::<S>() / S::of(m as f64);
        part(&self.per_filter_acts[..m]) - part(&self.per_filter_acts[m..])
    }
}

pub fn forward<S: Scalar>(weights: &CnnWeights<S>, patches: [&[S]; 2]) -> Result<ForwardTrace<S>> {
    for p in patches {
        if p.len() != weights.d {
            return Err(Error::Shape { expected: format!("patch of length {}", weights.d), got: format!("{}", p.len()) });
        }
    }
    let m = weights.m;
    let acts: Vec<[S; 2]> = weights.stacked().chunks_exact(weights.d).map(|w| [dot(w, patches[0]), dot(w, patches[1])]).collect();
    let inv_m = S::one() / S::of(m as f64);
    let part = |rows: &[[S; 2]]| rows.iter().map(|a| relu(a[0]) + relu(a[1])).sum::<S>() * inv_m;
    let f_pos = part(&acts[..m]);
    let f_neg = part(&acts[m..]);
    Ok(ForwardTrace {
        f_value: f_pos - f_neg,
        active_mask: acts.iter().map(|a| [a[0] > S::zero(), a[1] > S::zero()]).collect(),
        per_filter_acts: acts,
        f_pos,
        f_neg,
    })
}

/// `f(W, x)` for a data point.
pub fn predict<S: Scalar>(weights: &CnnWeights<S>, x: &DataPoint<S>) -> Result<S> {
    Ok(forward(weights, x.patches())?.f_value)
}

/// `ℓ(z) = log(1 + e^{−z})`, evaluated without overflow.
pub fn logistic_loss<S: Scalar>(z: S) -> S {
    if z >= S::zero() {
        (-z).exp().ln_1p()
    } else {
        -z + z.exp().ln_1p()
    }
}

/// `ℓ′(z) = −1 / (1 + e^{z})`.
pub fn loss_derivative<S: Scalar>(z: S) -> S {
    if z >= S::zero() {
        let e = (-z).exp();
        -e / (S::one() + e)
    } else {
        -S::one() / (S::one() + z.exp())
    }
}

/// Patch matrix and label signs of a dataset, laid out for batched products.
#[derive(Debug, Clone)]
pub struct Design<S> {
    pub n: usize,
    pub d: usize,
    /// `2n × d`; row `2i + p`.
    pub x: Vec<S>,
    pub y: Vec<S>,
}

impl<S: Scalar> Design<S> {
    pub fn new(ds: &Dataset<S>) -> Self {
        Design { n: ds.n(), d: ds.d(), x: ds.patch_matrix(), y: ds.points.iter().map(|p| p.y.sign()).collect() }
    }
}

/// Full-batch forward quantities at one set of weights.
#[derive(Debug, Clone)]
pub struct BatchEval<S> {
    /// `2m × 2n` activations `⟨w_row, x_i⁽ᵖ⁾⟩`, column `2i + p`.
    pub acts: Vec<S>,
    pub outputs: Vec<S>,
    pub margins: Vec<S>,
    pub lossderivs: Vec<S>,
    pub loss: S,
}

pub fn evaluate<S: Scalar>(weights: &CnnWeights<S>, design: &Design<S>) -> Result<BatchEval<S>> {
    if weights.d != design.d {
        return Err(Error::Shape { expected: format!("d = {}", weights.d), got: format!("d = {}", design.d) });
    }
    let (m, n) = (weights.m, design.n);
    let cols = 2 * n;
    let mut acts = vec![S::zero(); 2 * m * cols];
    S::gemm(2 * m, design.d, cols, S::one(), weights.stacked(), &design.x, true, S::zero(), &mut acts);
    let mut outputs = vec![S::zero(); n];
    for (row, a) in acts.chunks_exact(cols).enumerate() {
        let sign = if row < m { S::one() } else { -S::one() };
        for (i, out) in outputs.iter_mut().enumerate() {
            *out += sign * (relu(a[2 * i]) + relu(a[2 * i + 1]));
        }
    }
    let inv_m = S::one() / S::of(m as f64);
    outputs.iter_mut().for_each(|o| *o *= inv_m);
    let margins: Vec<S> = outputs.iter().zip(&design.y).map(|(&f, &y)| y * f).collect();
    let lossderivs = margins.iter().map(|&z| loss_derivative(z)).collect();
    let loss = margins.iter().map(|&z| logistic_loss(z)).sum::<S>() / S::of(n as f64);
    Ok(BatchEval { acts, outputs, margins, lossderivs, loss })
}

/// Gradient of `L` with respect to every filter, stacked like [`CnnWeights`].
#[derive(Debug, Clone, PartialEq)]
pub struct WeightGrad<S> {
    pub m: usize,
    pub d: usize,
    pub g: Vec<S>,
}

impl<S: Scalar> WeightGrad<S> {
    pub fn filter(&self, j: Label, r: usize) -> &[S] {
        let row = filter_row(self.m, j, r);
        &self.g[row * self.d..(row + 1) * self.d]
    }

    pub fn all_finite(&self) -> bool {
        self.g.iter().all(|x| x.is_finite())
    }
}

/// `∂L/∂w_{j,r} = (1/(nm)) Σ_i ℓ′_i (j y_i) Σ_p 1{⟨w_{j,r}, x_i⁽ᵖ⁾⟩ > 0} x_i⁽ᵖ⁾` from a batch evaluation.
pub fn gradient_from_eval<S: Scalar>(weights: &CnnWeights<S>, design: &Design<S>, eval: &BatchEval<S>) -> WeightGrad<S> {
    let (m, n, d) = (weights.m, design.n, design.d);
    let cols = 2 * n;
    let scale = S::one() / S::of((n * m) as f64);
    let mut coef = vec![S::zero(); 2 * m * cols];
    for (row, (c, a)) in coef.chunks_exact_mut(cols).zip(eval.acts.chunks_exact(cols)).enumerate() {
        let j = if row < m { S::one() } else { -S::one() };
        for i in 0..n {
            let base = eval.lossderivs[i] * j * design.y[i] * scale;
            for p in 0..2 {
                if a[2 * i + p] > S::zero() {
                    c[2 * i + p] = base;
                }
            }
        }
    }
    let mut g = vec![S::zero(); 2 * m * d];
    S::gemm(2 * m, cols, d, S::one(), &coef, &design.x, false, S::zero(), &mut g);
    WeightGrad { m, d, g }
}

pub fn full_gradient<S: Scalar>(weights: &CnnWeights<S>, dataset: &Dataset<S>) -> Result<WeightGrad<S>> {
    if dataset.n() == 0 {
        return domain("gradient of an empty dataset");
    }
    let design = Design::new(dataset);
    let eval = evaluate(weights, &design)?;
    Ok(gradient_from_eval(weights, &design, &eval))
}

/// Training objective `L(W) = (1/n) Σ ℓ(y_i f(W, x_i))`.
pub fn training_loss<S: Scalar>(weights: &CnnWeights<S>, dataset: &Dataset<S>) -> Result<S> {
    if dataset.n() == 0 {
        return domain("loss of an empty dataset");
    }
    Ok(evaluate(weights, &Design::new(dataset))?.loss)
}
