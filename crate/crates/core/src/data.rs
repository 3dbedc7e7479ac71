//! XOR-type data: the orthogonal basis `(a, b)`, the four signal patches
//! `±u = ±(a + b)`, `±v = ±(a − b)`, the projected Gaussian noise patch and
//! label flipping.

use std::fmt;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::linalg::{add, axpy, dot, norm, norm_sq, scaled, sub};
use crate::scalar::Scalar;

/// Observed or clean binary label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "+1")]
    Pos,
    #[serde(rename = "-1")]
    Neg,
}

impl Label {
    pub fn value(self) -> i8 {
        match self {
            Label::Pos => 1,
            Label::Neg => -1,
        }
    }

    pub fn sign<S: Scalar>(self) -> S {
        match self {
            Label::Pos => S::one(),
            Label::Neg => -S::one(),
        }
    }

    pub fn flipped(self) -> Label {
        match self {
            Label::Pos => Label::Neg,
            Label::Neg => Label::Pos,
        }
    }

    pub fn from_value(v: i64) -> Result<Label> {
        match v {
            1 => Ok(Label::Pos),
            -1 => Ok(Label::Neg),
            _ => Err(Error::Format(format!("label must be ±1, got {v}"))),
        }
    }

    pub const BOTH: [Label; 2] = [Label::Pos, Label::Neg];
}

/// Which of the four signal vectors a point carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SignalTag {
    PlusU,
    MinusU,
    PlusV,
    MinusV,
}

impl SignalTag {
    pub const ALL: [SignalTag; 4] = [SignalTag::PlusU, SignalTag::MinusU, SignalTag::PlusV, SignalTag::MinusV];

    pub fn is_u(self) -> bool {
        matches!(self, SignalTag::PlusU | SignalTag::MinusU)
    }

    /// +1 for `+u`/`+v`, −1 for `−u`/`−v`.
    pub fn sign<S: Scalar>(self) -> S {
        match self {
            SignalTag::PlusU | SignalTag::PlusV => S::one(),
            SignalTag::MinusU | SignalTag::MinusV => -S::one(),
        }
    }

    pub fn clean_label(self) -> Label {
        if self.is_u() {
            Label::Pos
        } else {
            Label::Neg
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SignalTag::PlusU => "+u",
            SignalTag::MinusU => "-u",
            SignalTag::PlusV => "+v",
            SignalTag::MinusV => "-v",
        }
    }

    pub fn parse(s: &str) -> Result<SignalTag> {
        match s {
            "+u" => Ok(SignalTag::PlusU),
            "-u" => Ok(SignalTag::MinusU),
            "+v" => Ok(SignalTag::PlusV),
            "-v" => Ok(SignalTag::MinusV),
            _ => Err(Error::Format(format!("unknown signal tag {s:?}"))),
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for SignalTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The orthogonal pair `(a, b)` and its derived quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct XorBasis<S> {
    pub d: usize,
    pub a: Vec<S>,
    pub b: Vec<S>,
    pub u: Vec<S>,
    pub v: Vec<S>,
    pub mu_norm: S,
    pub cos_theta: S,
}

fn check_basis_args<S: Scalar>(d: usize, mu_norm: S, cos_theta: S) -> Result<()> {
    if d < 2 {
        return Err(Error::Dimension(format!("basis needs d >= 2, got {d}")));
    }
    if !(mu_norm > S::zero()) || !mu_norm.is_finite() {
        return domain(format!("mu_norm must be positive, got {mu_norm}"));
    }
    if !(cos_theta >= S::zero() && cos_theta < S::one()) {
        return domain(format!("cos_theta must lie in [0, 1), got {cos_theta}"));
    }
    Ok(())
}

/// `(‖a‖, ‖b‖)` solving `‖a‖² + ‖b‖² = ‖μ‖²`, `‖a‖² − ‖b‖² = ‖μ‖² cosθ`.
fn basis_norms<S: Scalar>(mu_norm: S, cos_theta: S) -> (S, S) {
    let two = S::of(2.0);
    let mu2 = mu_norm * mu_norm;
    ((mu2 * (S::one() + cos_theta) / two).sqrt(), (mu2 * (S::one() - cos_theta) / two).sqrt())
}

impl<S: Scalar> XorBasis<S> {
    /// Assembles a basis from orthonormal directions `ea`, `eb`.
    fn from_directions(ea: &[S], eb: &[S], mu_norm: S, cos_theta: S) -> Self {
        let (na, nb) = basis_norms(mu_norm, cos_theta);
        let a = scaled(na, ea);
        let b = scaled(nb, eb);
        XorBasis {
            d: ea.len(),
            u: add(&a, &b),
            v: sub(&a, &b),
            a,
            b,
            mu_norm,
            cos_theta,
        }
    }

    /// Basis with `a = ‖a‖·e₁`, `b = ‖b‖·e₂`.
    pub fn pinned(d: usize, mu_norm: S, cos_theta: S) -> Result<Self> {
        check_basis_args(d, mu_norm, cos_theta)?;
        let mut e1 = vec![S::zero(); d];
        let mut e2 = vec![S::zero(); d];
        e1[0] = S::one();
        e2[1] = S::one();
        Ok(Self::from_directions(&e1, &e2, mu_norm, cos_theta))
    }

    /// Rebuilds a basis from explicit `a` and `b` (used when loading datasets).
    pub fn from_vectors(a: Vec<S>, b: Vec<S>) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::Shape { expected: format!("len {}", a.len()), got: format!("len {}", b.len()) });
        }
        let (na2, nb2) = (norm_sq(&a), norm_sq(&b));
        if !(na2 > S::zero() && nb2 > S::zero()) {
            return domain("basis vectors must be nonzero");
        }
        let mu2 = na2 + nb2;
        Ok(XorBasis {
            d: a.len(),
            u: add(&a, &b),
            v: sub(&a, &b),
            mu_norm: mu2.sqrt(),
            cos_theta: (na2 - nb2) / mu2,
            a,
            b,
        })
    }

    pub fn a_norm_sq(&self) -> S {
        norm_sq(&self.a)
    }

    pub fn b_norm_sq(&self) -> S {
        norm_sq(&self.b)
    }

    /// The signal vector named by `tag`.
    pub fn signal(&self, tag: SignalTag) -> Vec<S> {
        match tag {
            SignalTag::PlusU => self.u.clone(),
            SignalTag::MinusU => scaled(-S::one(), &self.u),
            SignalTag::PlusV => self.v.clone(),
            SignalTag::MinusV => scaled(-S::one(), &self.v),
        }
    }

    /// `‖μ‖² = ⟨u, u⟩ = ⟨v, v⟩` and `‖μ‖² cosθ = ⟨u, v⟩` from the nominal parameters.
    pub fn signal_gram(&self) -> (S, S) {
        let mu2 = self.mu_norm * self.mu_norm;
        (mu2, mu2 * self.cos_theta)
    }
}

/// Draws a uniformly oriented orthonormal pair by Gram–Schmidt on two
/// independent standard Gaussian vectors, then scales to the requested norms.
///
/// Nearly parallel draws are redrawn; 16 consecutive failures are an error.
pub fn build_basis<S: Scalar, R: Rng + ?Sized>(d: usize, mu_norm: S, cos_theta: S, rng: &mut R) -> Result<XorBasis<S>> {
    check_basis_args(d, mu_norm, cos_theta)?;
    const MAX_TRIES: usize = 16;
    for _ in 0..MAX_TRIES {
        let g1 = gaussian_vec::<S, R>(d, S::one(), rng);
        let g2 = gaussian_vec::<S, R>(d, S::one(), rng);
        let n1 = norm(&g1);
        if !(n1 > S::zero()) {
            continue;
        }
        let e1 = scaled(S::one() / n1, &g1);
        let mut r = g2.clone();
        axpy(-dot(&g2, &e1), &e1, &mut r);
        let nr = norm(&r);
        if !(nr > S::of(1e-8) * norm(&g2)) {
            continue;
        }
        let mut e2 = scaled(S::one() / nr, &r);
        // second pass restores orthogonality lost to rounding
        axpy(-dot(&e2, &e1), &e1, &mut e2);
        let n2 = norm(&e2);
        let e2 = scaled(S::one() / n2, &e2);
        return Ok(XorBasis::from_directions(&e1, &e2, mu_norm, cos_theta));
    }
    Err(Error::Domain(format!("Gram-Schmidt degenerate {MAX_TRIES} times in a row")))
}

pub(crate) fn gaussian_vec<S: Scalar, R: Rng + ?Sized>(d: usize, scale: S, rng: &mut R) -> Vec<S> {
    (0..d)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            scale * S::of(z)
        })
        .collect()
}

/// Uniform draw of `(μ, ȳ)` from the four XOR tuples.
pub fn sample_signal_pair<S: Scalar, R: Rng + ?Sized>(_basis: &XorBasis<S>, rng: &mut R) -> (SignalTag, Label) {
    let tag = SignalTag::ALL[rng.random_range(0..4)];
    (tag, tag.clean_label())
}

/// `ξ ~ N(0, σ_p²(I − aaᵀ/‖a‖² − bbᵀ/‖b‖²))` by projecting an isotropic draw.
pub fn sample_noise<S: Scalar, R: Rng + ?Sized>(basis: &XorBasis<S>, sigma_p: S, rng: &mut R) -> Vec<S> {
    let mut z = gaussian_vec(basis.d, sigma_p, rng);
    let ca = dot(&z, &basis.a) / basis.a_norm_sq();
    let cb = dot(&z, &basis.b) / basis.b_norm_sq();
    axpy(-ca, &basis.a, &mut z);
    axpy(-cb, &basis.b, &mut z);
    z
}

/// One labeled two-patch input with its generative bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct DataPoint<S> {
    pub patch1: Vec<S>,
    pub patch2: Vec<S>,
    pub y: Label,
    pub y_clean: Label,
    pub signal_tag: SignalTag,
    /// 1 or 2: which patch carries the signal.
    pub signal_slot: u8,
    pub xi: Vec<S>,
}

impl<S: Scalar> DataPoint<S> {
    pub fn patches(&self) -> [&[S]; 2] {
        [&self.patch1, &self.patch2]
    }

    pub fn signal_patch(&self) -> &[S] {
        if self.signal_slot == 1 {
            &self.patch1
        } else {
            &self.patch2
        }
    }

    /// Zero-based index of the signal patch.
    pub fn signal_index(&self) -> usize {
        usize::from(self.signal_slot != 1)
    }

    /// Zero-based index of the noise patch.
    pub fn noise_index(&self) -> usize {
        1 - self.signal_index()
    }

    /// Whether the clean label was flipped.
    pub fn is_flipped(&self) -> bool {
        self.y != self.y_clean
    }

    /// Concatenated input `[x⁽¹⁾; x⁽²⁾]` in ℝ^{2d}.
    pub fn concat(&self) -> Vec<S> {
        let mut x = self.patch1.clone();
        x.extend_from_slice(&self.patch2);
        x
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    pub n: usize,
    pub sigma_p: f64,
    pub flip_p: f64,
    pub seed: u64,
}

impl DataConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return domain("n must be at least 1");
        }
        if !(self.sigma_p > 0.0) || !self.sigma_p.is_finite() {
            return domain(format!("sigma_p must be positive, got {}", self.sigma_p));
        }
        if !(0.0..0.5).contains(&self.flip_p) {
            return domain(format!("flip_p must lie in [0, 0.5), got {}", self.flip_p));
        }
        Ok(())
    }
}

/// Draws a single point from the full distribution.
pub fn sample_point<S: Scalar, R: Rng + ?Sized>(basis: &XorBasis<S>, sigma_p: S, flip_p: f64, rng: &mut R) -> DataPoint<S> {
    let (tag, y_clean) = sample_signal_pair(basis, rng);
    let signal_slot: u8 = if rng.random_bool(0.5) { 1 } else { 2 };
    let xi = sample_noise(basis, sigma_p, rng);
    let y = if flip_p > 0.0 && rng.random_bool(flip_p) { y_clean.flipped() } else { y_clean };
    let signal = basis.signal(tag);
    let (patch1, patch2) = if signal_slot == 1 { (signal, xi.clone()) } else { (xi.clone(), signal) };
    DataPoint { patch1, patch2, y, y_clean, signal_tag: tag, signal_slot, xi }
}

/// A training set together with the basis it was drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<S> {
    pub basis: XorBasis<S>,
    pub config: DataConfig,
    pub points: Vec<DataPoint<S>>,
}

/// `n` independent points; fully determined by `rng`.
pub fn sample_dataset<S: Scalar, R: Rng + ?Sized>(basis: &XorBasis<S>, cfg: &DataConfig, rng: &mut R) -> Result<Dataset<S>> {
    cfg.validate()?;
    let sigma_p = S::of(cfg.sigma_p);
    let points = (0..cfg.n).map(|_| sample_point(basis, sigma_p, cfg.flip_p, rng)).collect();
    Ok(Dataset { basis: basis.clone(), config: *cfg, points })
}

impl<S: Scalar> Dataset<S> {
    pub fn n(&self) -> usize {
        self.points.len()
    }

    pub fn d(&self) -> usize {
        self.basis.d
    }

    pub fn labels(&self) -> Vec<Label> {
        self.points.iter().map(|p| p.y).collect()
    }

    /// Row-major `2n × d` matrix of patches; row `2i + p` is patch `p` of point `i`.
    pub fn patch_matrix(&self) -> Vec<S> {
        let d = self.d();
        let mut out = Vec::with_capacity(2 * self.n() * d);
        for p in &self.points {
            out.extend_from_slice(&p.patch1);
            out.extend_from_slice(&p.patch2);
        }
        out
    }

    /// Row-major `n × d` matrix of noise patches.
    pub fn noise_matrix(&self) -> Vec<S> {
        let mut out = Vec::with_capacity(self.n() * self.d());
        for p in &self.points {
            out.extend_from_slice(&p.xi);
        }
        out
    }

    /// `n × n` Gram matrix `⟨ξ_i, ξ_k⟩`.
    pub fn noise_gram(&self) -> Vec<S> {
        let n = self.n();
        let xi = self.noise_matrix();
        let mut g = vec![S::zero(); n * n];
        S::gemm(n, self.d(), n, S::one(), &xi, &xi, true, S::zero(), &mut g);
        g
    }

    /// Index sets `S_{μ,y}` for every (tag, observed label) pair.
    pub fn signal_label_sets(&self) -> SignalLabelSets {
        let mut sets = SignalLabelSets::default();
        for (i, p) in self.points.iter().enumerate() {
            sets.get_mut(p.signal_tag, p.y).push(i);
        }
        sets
    }

    /// Writes the versioned JSON-lines export.
    pub fn write_jsonl<W: Write>(&self, w: W) -> Result<()> {
        let mut w = BufWriter::new(w);
        let header = DatasetHeader {
            format: DATASET_FORMAT.to_string(),
            version: DATASET_VERSION,
            d: self.d(),
            n: self.n(),
            sigma_p: self.config.sigma_p,
            flip_p: self.config.flip_p,
            cos_theta: self.basis.cos_theta.as_f64(),
            mu_norm: self.basis.mu_norm.as_f64(),
            seed: self.config.seed,
            a: self.basis.a.iter().map(|x| x.as_f64()).collect(),
            b: self.basis.b.iter().map(|x| x.as_f64()).collect(),
        };
        serde_json::to_writer(&mut w, &header)?;
        writeln!(w)?;
        for p in &self.points {
            let rec = PointRecord {
                patch1: p.patch1.iter().map(|x| x.as_f64()).collect(),
                patch2: p.patch2.iter().map(|x| x.as_f64()).collect(),
                y: p.y.value(),
                y_clean: p.y_clean.value(),
                tag: p.signal_tag.as_str().to_string(),
                slot: p.signal_slot,
            };
            serde_json::to_writer(&mut w, &rec)?;
            writeln!(w)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_jsonl<R: Read>(r: R) -> Result<Dataset<S>> {
        let mut lines = BufReader::new(r).lines();
        let header_line = lines.next().ok_or_else(|| Error::Format("empty dataset file".into()))??;
        let header: DatasetHeader = serde_json::from_str(&header_line)?;
        if header.format != DATASET_FORMAT || header.version != DATASET_VERSION {
            return Err(Error::Format(format!("unsupported dataset format {} v{}", header.format, header.version)));
        }
        let mut basis = XorBasis::from_vectors(
            header.a.iter().map(|&x| S::of(x)).collect(),
            header.b.iter().map(|&x| S::of(x)).collect(),
        )?;
        // The vectors determine ‖μ‖ and cos θ only up to rounding; keep the
        // exact header values once they agree.
        let (mu, cos) = (basis.mu_norm.as_f64(), basis.cos_theta.as_f64());
        if (mu - header.mu_norm).abs() > 1e-6 * header.mu_norm || (cos - header.cos_theta).abs() > 1e-6 {
            return Err(Error::Format(format!(
                "header mu_norm {} / cos_theta {} disagree with the stored vectors ({mu}, {cos})",
                header.mu_norm, header.cos_theta
            )));
        }
        basis.mu_norm = S::of(header.mu_norm);
        basis.cos_theta = S::of(header.cos_theta);
        let mut points = Vec::with_capacity(header.n);
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: PointRecord = serde_json::from_str(&line)?;
            if rec.patch1.len() != header.d || rec.patch2.len() != header.d {
                return Err(Error::Format("patch length does not match header d".into()));
            }
            let patch1: Vec<S> = rec.patch1.iter().map(|&x| S::of(x)).collect();
            let patch2: Vec<S> = rec.patch2.iter().map(|&x| S::of(x)).collect();
            let xi = match rec.slot {
                1 => patch2.clone(),
                2 => patch1.clone(),
                s => return Err(Error::Format(format!("slot must be 1 or 2, got {s}"))),
            };
            points.push(DataPoint {
                patch1,
                patch2,
                y: Label::from_value(rec.y.into())?,
                y_clean: Label::from_value(rec.y_clean.into())?,
                signal_tag: SignalTag::parse(&rec.tag)?,
                signal_slot: rec.slot,
                xi,
            });
        }
        if points.len() != header.n {
            return Err(Error::Format(format!("header says n = {}, found {} records", header.n, points.len())));
        }
        Ok(Dataset {
            basis,
            config: DataConfig { n: header.n, sigma_p: header.sigma_p, flip_p: header.flip_p, seed: header.seed },
            points,
        })
    }
}

pub const DATASET_FORMAT: &str = "benign-xor-dataset";
pub const DATASET_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct DatasetHeader {
    format: String,
    version: u32,
    d: usize,
    n: usize,
    sigma_p: f64,
    flip_p: f64,
    cos_theta: f64,
    mu_norm: f64,
    seed: u64,
    a: Vec<f64>,
    b: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct PointRecord {
    patch1: Vec<f64>,
    patch2: Vec<f64>,
    y: i8,
    y_clean: i8,
    tag: String,
    slot: u8,
}

/// The eight index sets `S_{μ,y}`, `μ ∈ {±u, ±v}`, `y ∈ {±1}`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SignalLabelSets {
    cells: [Vec<usize>; 8],
}

impl SignalLabelSets {
    fn slot(tag: SignalTag, y: Label) -> usize {
        tag.index() * 2 + usize::from(y == Label::Neg)
    }

    pub fn get(&self, tag: SignalTag, y: Label) -> &[usize] {
        &self.cells[Self::slot(tag, y)]
    }

    fn get_mut(&mut self, tag: SignalTag, y: Label) -> &mut Vec<usize> {
        &mut self.cells[Self::slot(tag, y)]
    }

    pub fn iter(&self) -> impl Iterator<Item = (SignalTag, Label, &[usize])> {
        SignalTag::ALL
            .into_iter()
            .flat_map(|t| Label::BOTH.into_iter().map(move |y| (t, y)))
            .map(move |(t, y)| (t, y, self.get(t, y)))
    }
}
