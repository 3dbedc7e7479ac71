//! The whole pipeline runs in single precision and tracks double precision.

use benign_xor::data::{build_basis, sample_dataset, DataConfig};
use benign_xor::eval::cnn_test_error;
use benign_xor::model::init_weights;
use benign_xor::rng::{stream_rng, Stream};
use benign_xor::train::{train, TrainConfig};
use benign_xor::Scalar;

fn run<S: Scalar>(seed: u64) -> (Vec<f64>, f64) {
    let basis = build_basis::<S, _>(100, S::of(6.0), S::of(0.8), &mut stream_rng(seed, Stream::Basis)).unwrap();
    let ds = sample_dataset(&basis, &DataConfig { n: 60, sigma_p: 1.0, flip_p: 0.1, seed }, &mut stream_rng(seed, Stream::Data)).unwrap();
    let w0 = init_weights::<S, _>(10, 100, S::of(0.01), &mut stream_rng(seed, Stream::Init)).unwrap();
    let cfg = TrainConfig { eta: 1.0, epochs: 100, record_every: 10, ..TrainConfig::default() };
    let trace = train(&ds, w0, &cfg, &mut []).unwrap();
    let err = cnn_test_error(&trace.weights_final, &basis, 1.0, 0.1, 1000, seed).unwrap();
    (trace.loss_history(), err.error_rate)
}

#[test]
fn single_precision_training_tracks_double() {
    let (l64, e64) = run::<f64>(31);
    let (l32, e32) = run::<f32>(31);
    assert_eq!(l64.len(), l32.len());
    for (a, b) in l64.iter().zip(&l32) {
        assert!((a - b).abs() <= 1e-3 * a.max(1e-2), "{a} vs {b}");
    }
    assert!(l64.last().unwrap() < l64.first().unwrap());
    assert!((e64 - e32).abs() <= 0.02, "{e64} vs {e32}");
}
