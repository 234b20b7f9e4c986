//! Dense linear algebra, seeded random numbers, initializers and singular values.

mod init;
mod linalg;
mod mat;
mod rng;

pub use init::{gaussian_matrix, orthogonal_matrix};
pub use linalg::{householder_qr, mean_singular_value, singular_values, Qr};
pub use mat::{gemm, Mat};
pub use rng::Rng;
