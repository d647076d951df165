//! Dense vectors, matrices, and reproducible random streams.

mod matrix;
mod rng;
mod vector;

pub use matrix::Matrix;
pub(crate) use matrix::affine;
pub use rng::{stream_id, RngStream, StreamTag};
pub use vector::{axpy, dot, gaussian_vector, mean, mix, Mean, ParamVector};

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in xs.iter().enumerate().skip(1) {
        if v > xs[best] {
            best = j;
        }
    }
    best
}
