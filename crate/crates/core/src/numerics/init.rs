use super::linalg::{householder_qr, Qr};
use super::mat::Mat;
use super::rng::Rng;

/// `rows x cols` matrix of i.i.d. standard normals, filled row by row.
pub fn gaussian_matrix(rng: &mut Rng, rows: usize, cols: usize) -> Mat {
    Mat::from_fn(rows, cols, |_, _| rng.normal())
}

/// Haar-distributed (semi-)orthogonal matrix.
///
/// Factors a square Gaussian of side `max(rows, cols)` and multiplies each
/// column of Q by the sign of the matching diagonal entry of R. The leading
/// `rows x cols` block has orthonormal rows or columns, whichever is shorter.
pub fn orthogonal_matrix(rng: &mut Rng, rows: usize, cols: usize) -> Mat {
    let d = rows.max(cols);
    let g = gaussian_matrix(rng, d, d);
    let Qr { mut q, r } = householder_qr(&g).expect("square factorization");
    for j in 0..d {
        if r.get(j, j) < 0.0 {
            for i in 0..d {
                q.set(i, j, -q.get(i, j));
            }
        }
    }
    if rows == d && cols == d {
        q
    } else {
        q.top_left(rows, cols)
    }
}
