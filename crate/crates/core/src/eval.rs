//! Monte-Carlo test error, the Bayes-rate reference, and the linear baseline
//! that cannot beat chance on XOR-patch data.

use serde::{Deserialize, Serialize};

use crate::data::{sample_point, DataPoint, Dataset, XorBasis};
use crate::error::{domain, Result};
use crate::linalg::{axpy, dot};
use crate::model::{logistic_loss, loss_derivative, predict, CnnWeights};
use crate::rng::{stream_rng, Stream};
use crate::scalar::Scalar;

/// Fraction of misclassified fresh points, with its binomial standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorEstimate {
    pub error_rate: f64,
    pub n_test: usize,
    pub stderr: f64,
    pub seed: u64,
}

impl ErrorEstimate {
    pub fn from_counts(errors: usize, n_test: usize, seed: u64) -> Self {
        let error_rate = errors as f64 / n_test as f64;
        let stderr = (error_rate * (1.0 - error_rate) / n_test as f64).sqrt();
        Self { error_rate, n_test, stderr, seed }
    }

    pub fn accuracy(&self) -> f64 {
        1.0 - self.error_rate
    }
}

/// Draws `n_test` points from the data distribution on the test stream of
/// `seed` and counts those with `y · f(x) ≤ 0`. A tie `f(x) = 0` is an error.
pub fn test_error_mc<S, F>(predictor: F, basis: &XorBasis<S>, sigma_p: f64, flip_p: f64, n_test: usize, seed: u64) -> Result<ErrorEstimate>
where
    S: Scalar,
    F: Fn(&DataPoint<S>) -> Result<S>,
{
    if n_test == 0 {
        return domain("n_test must be at least 1");
    }
    if !(0.0..0.5).contains(&flip_p) {
        return domain(format!("flip_p must lie in [0, 0.5), got {flip_p}"));
    }
    let mut rng = stream_rng(seed, Stream::Test);
    let sp = S::of(sigma_p);
    let mut errors = 0usize;
    for _ in 0..n_test {
        let x = sample_point(basis, sp, flip_p, &mut rng);
        let f = predictor(&x)?;
        if !(x.y.sign::<S>() * f > S::zero()) {
            errors += 1;
        }
    }
    Ok(ErrorEstimate::from_counts(errors, n_test, seed))
}

/// Test error of the CNN.
pub fn cnn_test_error<S: Scalar>(weights: &CnnWeights<S>, basis: &XorBasis<S>, sigma_p: f64, flip_p: f64, n_test: usize, seed: u64) -> Result<ErrorEstimate> {
    test_error_mc(|x| predict(weights, x), basis, sigma_p, flip_p, n_test, seed)
}

/// Bayes error of the model: the label flip probability.
pub fn bayes_rate(flip_p: f64) -> Result<f64> {
    if !(0.0..0.5).contains(&flip_p) {
        return domain(format!("flip_p must lie in [0, 0.5), got {flip_p}"));
    }
    Ok(flip_p)
}

/// Step size of the logistic-regression baseline.
pub const BASELINE_ETA: f64 = 0.1;
/// Default number of baseline iterations.
pub const BASELINE_ITERS: usize = 500;

/// Logistic regression on the concatenated input `[x⁽¹⁾; x⁽²⁾] ∈ ℝ^{2d}`,
/// fitted by full-batch gradient descent from `θ = 0`.
pub fn fit_logistic<S: Scalar>(dataset: &Dataset<S>, eta: f64, iters: usize) -> Result<Vec<S>> {
    if iters == 0 {
        return domain("iters must be at least 1");
    }
    let n = dataset.n();
    let xs: Vec<Vec<S>> = dataset.points.iter().map(|p| p.concat()).collect();
    let ys: Vec<S> = dataset.points.iter().map(|p| p.y.sign::<S>()).collect();
    let mut theta = vec![S::zero(); 2 * dataset.d()];
    let scale = S::of(eta) / S::of(n as f64);
    for _ in 0..iters {
        let mut grad = vec![S::zero(); theta.len()];
        for (x, &y) in xs.iter().zip(&ys) {
            axpy(loss_derivative(y * dot(&theta, x)) * y, x, &mut grad);
        }
        axpy(-scale, &grad, &mut theta);
    }
    Ok(theta)
}

/// Mean logistic loss of a linear predictor on the training set.
pub fn linear_training_loss<S: Scalar>(theta: &[S], dataset: &Dataset<S>) -> f64 {
    let total: f64 = dataset.points.iter().map(|p| logistic_loss(p.y.sign::<S>() * dot(theta, &p.concat())).as_f64()).sum();
    total / dataset.n() as f64
}

/// Test error of a fixed linear predictor `x ↦ ⟨θ, [x⁽¹⁾; x⁽²⁾]⟩`.
pub fn linear_test_error<S: Scalar>(theta: &[S], basis: &XorBasis<S>, sigma_p: f64, flip_p: f64, n_test: usize, seed: u64) -> Result<ErrorEstimate> {
    if theta.len() != 2 * basis.d {
        return Err(crate::error::Error::Shape { expected: format!("{}", 2 * basis.d), got: format!("{}", theta.len()) });
    }
    test_error_mc(|x| Ok(dot(&theta[..basis.d], &x.patch1) + dot(&theta[basis.d..], &x.patch2)), basis, sigma_p, flip_p, n_test, seed)
}

/// Trains the linear baseline on `dataset` and evaluates it on fresh points.
pub fn linear_baseline<S: Scalar>(dataset: &Dataset<S>, sigma_p: f64, flip_p: f64, n_test: usize, iters: usize, seed: u64) -> Result<ErrorEstimate> {
    let theta = fit_logistic(dataset, BASELINE_ETA, iters)?;
    linear_test_error(&theta, &dataset.basis, sigma_p, flip_p, n_test, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{build_basis, sample_dataset, DataConfig};
    use crate::model::init_weights;

    fn basis(d: usize) -> XorBasis<f64> {
        build_basis(d, 3.0, 0.8, &mut stream_rng(1, Stream::Basis)).unwrap()
    }

    #[test]
    fn stderr_is_binomial() {
        let e = ErrorEstimate::from_counts(25, 100, 0);
        assert_eq!(e.error_rate, 0.25);
        assert!((e.stderr - (0.25f64 * 0.75 / 100.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn oracle_classifier_errs_at_flip_rate() {
        let b = basis(20);
        let e = test_error_mc(|x: &DataPoint<f64>| Ok(x.y_clean.sign::<f64>()), &b, 1.0, 0.1, 4000, 9).unwrap();
        assert!((e.error_rate - 0.1).abs() <= 3.0 * e.stderr);
    }

    #[test]
    fn constant_classifier_is_at_chance() {
        let b = basis(20);
        let e = test_error_mc(|_: &DataPoint<f64>| Ok(1.0), &b, 1.0, 0.1, 4000, 9).unwrap();
        assert!((e.error_rate - 0.5).abs() <= 3.0 * e.stderr);
    }

    #[test]
    fn zero_weights_count_ties_as_errors() {
        let b = basis(20);
        let w = CnnWeights::<f64>::zeros(4, 20, 0.0);
        let e = cnn_test_error(&w, &b, 1.0, 0.1, 200, 3).unwrap();
        assert_eq!(e.error_rate, 1.0);
        assert_eq!(e.stderr, 0.0);
    }

    #[test]
    fn bayes_rate_is_flip_probability() {
        assert_eq!(bayes_rate(0.0).unwrap(), 0.0);
        assert_eq!(bayes_rate(0.1).unwrap(), 0.1);
        assert_eq!(bayes_rate(0.25).unwrap(), 0.25);
        assert!(bayes_rate(0.5).is_err());
    }

    #[test]
    fn rejects_zero_test_points() {
        let b = basis(10);
        assert!(test_error_mc(|_: &DataPoint<f64>| Ok(1.0), &b, 1.0, 0.1, 0, 1).is_err());
    }

    #[test]
    fn test_stream_ignores_training_randomness() {
        let b = basis(20);
        let w = init_weights(4, 20, 0.1, &mut stream_rng(2, Stream::Init)).unwrap();
        let a = cnn_test_error(&w, &b, 1.0, 0.1, 300, 5).unwrap();
        let c = cnn_test_error(&w, &b, 1.0, 0.1, 300, 5).unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn linear_baseline_stays_near_chance() {
        let b = basis(50);
        let ds = sample_dataset(&b, &DataConfig { n: 100, sigma_p: 1.0, flip_p: 0.1, seed: 4 }, &mut stream_rng(4, Stream::Data)).unwrap();
        for iters in [1, 200] {
            let e = linear_baseline(&ds, 1.0, 0.1, 2000, iters, 8).unwrap();
            assert!((e.error_rate - 0.5).abs() <= 0.05, "iters {iters}: {}", e.error_rate);
        }
    }

    #[test]
    fn logistic_fit_reduces_training_loss() {
        let b = basis(50);
        let ds = sample_dataset(&b, &DataConfig { n: 40, sigma_p: 1.0, flip_p: 0.0, seed: 4 }, &mut stream_rng(4, Stream::Data)).unwrap();
        let theta = fit_logistic(&ds, BASELINE_ETA, 100).unwrap();
        assert!(linear_training_loss(&theta, &ds) < std::f64::consts::LN_2);
        assert!(fit_logistic(&ds, BASELINE_ETA, 0).is_err());
    }
}
