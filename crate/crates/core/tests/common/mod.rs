//! Helpers shared by the integration test targets.

#![allow(dead_code)]

use benign_xor::data::{build_basis, sample_dataset, DataConfig, Dataset};
use benign_xor::model::{evaluate, full_gradient, init_weights, training_loss, CnnWeights, Design};
use benign_xor::rng::{stream_rng, Stream};

/// Step of the central difference.
pub const FD_STEP: f64 = 1e-5;

/// Outcome of one finite-difference comparison.
#[derive(Debug, Clone, Copy)]
pub struct FdCheck {
    /// `‖g_analytic − g_fd‖ / ‖g_fd‖` over the checked coordinates.
    pub rel_error: f64,
    pub checked: usize,
    pub skipped: usize,
}

/// A small random problem: `n ≤ 8`, `d ≤ 8`, `m ≤ 3`, weights at unit scale
/// so that a good share of the activations is positive.
pub fn tiny_instance(seed: u64, n: usize, d: usize, m: usize) -> (Dataset<f64>, CnnWeights<f64>) {
    let basis = build_basis::<f64, _>(d, 2.0, 0.5, &mut stream_rng(seed, Stream::Basis)).unwrap();
    let cfg = DataConfig { n, sigma_p: 1.0, flip_p: 0.2, seed };
    let ds = sample_dataset(&basis, &cfg, &mut stream_rng(seed, Stream::Data)).unwrap();
    let w = init_weights(m, d, 1.0, &mut stream_rng(seed, Stream::Init)).unwrap();
    (ds, w)
}

/// Compares the analytic gradient with central differences of the training
/// loss. A coordinate is skipped when the step could move any activation of
/// its filter across zero.
pub fn finite_difference_check(ds: &Dataset<f64>, w: &CnnWeights<f64>) -> FdCheck {
    let (m, d) = (w.m, w.d);
    let grad = full_gradient(w, ds).unwrap();
    let design = Design::new(ds);
    let eval = evaluate(w, &design).unwrap();
    let cols = 2 * ds.n();
    let max_abs_x = design.x.iter().fold(0.0f64, |a, &x| a.max(x.abs()));
    let margin = 2.0 * FD_STEP * max_abs_x;

    let (mut diff2, mut ref2) = (0.0f64, 0.0f64);
    let (mut checked, mut skipped) = (0, 0);
    for row in 0..2 * m {
        let near_kink = eval.acts[row * cols..(row + 1) * cols].iter().any(|a| a.abs() <= margin);
        for k in 0..d {
            if near_kink {
                skipped += 1;
                continue;
            }
            let idx = row * d + k;
            let mut plus = w.clone();
            plus.stacked_mut()[idx] += FD_STEP;
            let mut minus = w.clone();
            minus.stacked_mut()[idx] -= FD_STEP;
            let fd = (training_loss(&plus, ds).unwrap() - training_loss(&minus, ds).unwrap()) / (2.0 * FD_STEP);
            diff2 += (grad.g[idx] - fd).powi(2);
            ref2 += fd * fd;
            checked += 1;
        }
    }
    let rel_error = if ref2 > 0.0 { (diff2 / ref2).sqrt() } else { diff2.sqrt() };
    FdCheck { rel_error, checked, skipped }
}
