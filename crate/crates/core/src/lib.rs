//! Convolutional layers viewed as model-based compressive sensing.
//!
//! A single convolutional layer with `K` filters over `M` input channels is a
//! structured `Kn x MD` matrix `W`. Its transpose acts as a sensing matrix for
//! block-sparse codes (at most one active shift per filter), and one
//! convolution + max-pooling + transposed-convolution pass is exactly one
//! iteration of model-based iterative hard thresholding.
//!
//! The crate is split into:
//!
//! * [`operator`]: filter banks, the structured operator and its adjoint,
//!   CReLU splitting and mutual coherence.
//! * [`model_sparse`]: the block-sparse signal model, max pooling with
//!   switches, upsampling and the structured projection.
//! * [`recovery`]: feedforward reconstruction, model-based IHT, ISTA and
//!   sparse activation recovery.
//! * [`diagnostics`]: empirical and exact model-RIP constants, reconstruction
//!   bounds, reconstruction experiments and histograms.

pub mod diagnostics;
pub mod error;
pub mod model_sparse;
pub mod operator;
pub mod recovery;
pub mod rng;

pub use error::{Error, Result};
pub use model_sparse::{
    BlockLayout, ModelSparseSignal, Pooling, PoolingGeometry, Switches, Upsampling,
};
pub use operator::{Dims, FilterBank, InputGeometry, StructuredOperator};

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    // four partial sums so the loop vectorises
    let mut acc = [0.0f64; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    let tail: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
