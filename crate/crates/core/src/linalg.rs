//! Dense vector helpers over slices.

use crate::scalar::Scalar;

pub fn dot<S: Scalar>(x: &[S], y: &[S]) -> S {
    debug_assert_eq!(x.len(), y.len());
    let mut acc = [S::zero(); 4];
    let mut xc = x.chunks_exact(4);
    let mut yc = y.chunks_exact(4);
    for (a, b) in (&mut xc).zip(&mut yc) {
        acc[0] += a[0] * b[0];
        acc[1] += a[1] * b[1];
        acc[2] += a[2] * b[2];
        acc[3] += a[3] * b[3];
    }
    let tail: S = xc.remainder().iter().zip(yc.remainder()).map(|(&a, &b)| a * b).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

pub fn norm_sq<S: Scalar>(x: &[S]) -> S {
    dot(x, x)
}

pub fn norm<S: Scalar>(x: &[S]) -> S {
    norm_sq(x).sqrt()
}

/// `y <- y + alpha * x`
pub fn axpy<S: Scalar>(alpha: S, x: &[S], y: &mut [S]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn scaled<S: Scalar>(alpha: S, x: &[S]) -> Vec<S> {
    x.iter().map(|&v| alpha * v).collect()
}

pub fn add<S: Scalar>(x: &[S], y: &[S]) -> Vec<S> {
    x.iter().zip(y).map(|(&a, &b)| a + b).collect()
}

pub fn sub<S: Scalar>(x: &[S], y: &[S]) -> Vec<S> {
    x.iter().zip(y).map(|(&a, &b)| a - b).collect()
}

/// Residual of `x` after least-squares projection onto span(`basis`).
///
/// Modified Gram–Schmidt; basis vectors that are numerically dependent on the
/// earlier ones are skipped.
pub fn residual_after_projection<S: Scalar>(x: &[S], basis: &[Vec<S>]) -> Vec<S> {
    let mut ortho: Vec<Vec<S>> = Vec::with_capacity(basis.len());
    for b in basis {
        let mut q = b.clone();
        for e in &ortho {
            let c = dot(&q, e);
            axpy(-c, e, &mut q);
        }
        let nq = norm(&q);
        if nq > S::of(1e-12) * norm(b).max(S::one()) {
            ortho.push(scaled(S::one() / nq, &q));
        }
    }
    let mut r = x.to_vec();
    for e in &ortho {
        let c = dot(&r, e);
        axpy(-c, e, &mut r);
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dot_handles_tails() {
        let x: Vec<f64> = (1..=7).map(f64::from).collect();
        assert_eq!(dot(&x, &x), 140.0);
    }

    #[test]
    fn projection_residual_vanishes_in_span() {
        let b = vec![vec![1.0, 1.0, 0.0], vec![0.0, 1.0, 1.0], vec![1.0, 2.0, 1.0]];
        let x = vec![2.0, 5.0, 3.0];
        assert!(norm(&residual_after_projection(&x, &b)) < 1e-12);
        let off = vec![1.0, -1.0, 1.0];
        assert!(norm(&residual_after_projection(&off, &b)) > 0.5);
    }
}
