use super::mat::{dot, Mat};
use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 80;
const OFF_DIAGONAL_TOL: f64 = 1e-12;

/// Thin QR factors of an `m x n` matrix with `m >= n`.
#[derive(Clone, Debug)]
pub struct Qr {
    /// `m x n`, orthonormal columns.
    pub q: Mat,
    /// `n x n`, upper triangular.
    pub r: Mat,
}

/// Householder QR. Requires `rows >= cols`.
pub fn householder_qr(a: &Mat) -> Result<Qr> {
    let (m, n) = a.shape();
    if m < n {
        return Err(Error::shape("householder_qr", "rows >= cols", format!("{m}x{n}")));
    }
    // work on columns stored as rows for contiguous access
    let mut cols = a.transpose();
    let mut reflectors: Vec<Vec<f64>> = Vec::with_capacity(n);
    for k in 0..n {
        let x = &cols.row(k)[k..];
        let norm = dot(x, x).sqrt();
        let mut v = x.to_vec();
        if norm == 0.0 {
            reflectors.push(v.iter().map(|_| 0.0).collect());
            continue;
        }
        let alpha = if v[0] >= 0.0 { -norm } else { norm };
        v[0] -= alpha;
        let vnorm = dot(&v, &v).sqrt();
        if vnorm == 0.0 {
            reflectors.push(vec![0.0; v.len()]);
            continue;
        }
        v.iter_mut().for_each(|x| *x /= vnorm);
        for j in k..n {
            let col = &mut cols.row_mut(j)[k..];
            let s = 2.0 * dot(&v, col);
            for (c, vi) in col.iter_mut().zip(&v) {
                *c -= s * vi;
            }
        }
        reflectors.push(v);
    }
    let r = Mat::from_fn(n, n, |i, j| if i <= j { cols.get(j, i) } else { 0.0 });

    // Q = H_0 H_1 ... H_{n-1} applied to the first n identity columns
    let mut qcols = Mat::from_fn(n, m, |j, i| if i == j { 1.0 } else { 0.0 });
    for (k, v) in reflectors.iter().enumerate().rev() {
        for j in 0..n {
            let col = &mut qcols.row_mut(j)[k..];
            let s = 2.0 * dot(v, col);
            if s != 0.0 {
                for (c, vi) in col.iter_mut().zip(v) {
                    *c -= s * vi;
                }
            }
        }
    }
    Ok(Qr {
        q: qcols.transpose(),
        r,
    })
}

/// Singular values in descending order, by one-sided (Hestenes) cyclic Jacobi.
///
/// Iterates until every column pair satisfies
/// `|a_p . a_q| <= 1e-12 * |a_p| |a_q|`.
pub fn singular_values(m: &Mat) -> Result<Vec<f64>> {
    let (r, c) = m.shape();
    if r == 0 || c == 0 {
        return Ok(Vec::new());
    }
    // rows of `u` are the columns being orthogonalized; use the short side
    let mut u = if r >= c { m.transpose() } else { m.clone() };
    let k = u.rows();
    let len = u.cols();
    let mut norms: Vec<f64> = (0..k).map(|i| dot(u.row(i), u.row(i))).collect();
    let scale = norms.iter().cloned().fold(0.0, f64::max);
    if scale == 0.0 {
        return Ok(vec![0.0; k]);
    }
    let negligible = scale * 1e-300;

    let mut converged = false;
    let mut last_off = 0.0;
    for _sweep in 0..MAX_SWEEPS {
        let mut max_off: f64 = 0.0;
        for p in 0..k {
            for q in (p + 1)..k {
                let alpha = norms[p];
                let beta = norms[q];
                if alpha <= negligible || beta <= negligible {
                    continue;
                }
                let (rp, rq) = two_rows(&mut u, p, q, len);
                let gamma = dot(rp, rq);
                let off = gamma.abs() / (alpha * beta).sqrt();
                max_off = max_off.max(off);
                if off <= f64::EPSILON {
                    continue;
                }
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                for (a, b) in rp.iter_mut().zip(rq.iter_mut()) {
                    let x = *a;
                    let y = *b;
                    *a = cs * x - sn * y;
                    *b = sn * x + cs * y;
                }
                norms[p] = dot(rp, rp);
                norms[q] = dot(rq, rq);
            }
        }
        last_off = max_off;
        if max_off < OFF_DIAGONAL_TOL {
            converged = true;
            break;
        }
    }
    let mut sv: Vec<f64> = (0..k).map(|i| dot(u.row(i), u.row(i)).sqrt()).collect();
    if !converged {
        let hi = sv.iter().cloned().fold(0.0, f64::max);
        let lo = sv.iter().cloned().fold(f64::INFINITY, f64::min);
        return Err(Error::NoConvergence {
            sweeps: MAX_SWEEPS,
            off_diagonal: last_off,
            condition: if lo > 0.0 { hi / lo } else { f64::INFINITY },
        });
    }
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    Ok(sv)
}

fn two_rows(u: &mut Mat, p: usize, q: usize, len: usize) -> (&mut [f64], &mut [f64]) {
    assert!(p < q);
    let data = u.as_mut_slice();
    let (head, tail) = data.split_at_mut(q * len);
    (&mut head[p * len..(p + 1) * len], &mut tail[..len])
}

/// Arithmetic mean of the singular values.
pub fn mean_singular_value(m: &Mat) -> Result<f64> {
    let sv = singular_values(m)?;
    if sv.is_empty() {
        return Ok(0.0);
    }
    Ok(sv.iter().sum::<f64>() / sv.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{gaussian_matrix, orthogonal_matrix, Rng};
    use proptest::prelude::*;

    /// Determinant via Gaussian elimination with partial pivoting.
    fn det(a: &Mat) -> f64 {
        let n = a.rows();
        let mut m = a.clone();
        let mut d = 1.0;
        for k in 0..n {
            let p = (k..n)
                .max_by(|&i, &j| m.get(i, k).abs().partial_cmp(&m.get(j, k).abs()).unwrap())
                .unwrap();
            if m.get(p, k) == 0.0 {
                return 0.0;
            }
            if p != k {
                for j in 0..n {
                    let t = m.get(k, j);
                    m.set(k, j, m.get(p, j));
                    m.set(p, j, t);
                }
                d = -d;
            }
            d *= m.get(k, k);
            for i in (k + 1)..n {
                let f = m.get(i, k) / m.get(k, k);
                for j in k..n {
                    m.set(i, j, m.get(i, j) - f * m.get(k, j));
                }
            }
        }
        d
    }

    #[test]
    fn identity_has_unit_spectrum() {
        assert_eq!(singular_values(&Mat::identity(3)).unwrap(), vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn padded_diagonal() {
        let m = Mat::from_vec(3, 3, vec![3.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let sv = singular_values(&m).unwrap();
        assert!((sv[0] - 3.0).abs() < 1e-14 && (sv[1] - 2.0).abs() < 1e-14);
        assert_eq!(sv[2], 0.0);
        let rect = Mat::from_vec(2, 3, vec![0.0, 3.0, 0.0, 2.0, 0.0, 0.0]).unwrap();
        let sv = singular_values(&rect).unwrap();
        assert_eq!(sv.len(), 2);
        assert!((sv[0] - 3.0).abs() < 1e-14 && (sv[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn scaled_orthogonal_spectrum() {
        let q = orthogonal_matrix(&mut Rng::new(3, 0), 16, 16);
        let sv = singular_values(&q.scaled(0.25)).unwrap();
        assert_eq!(sv.len(), 16);
        for s in sv {
            assert!((s - 0.25).abs() < 1e-10);
        }
    }

    #[test]
    fn mean_singular_value_examples() {
        let q = orthogonal_matrix(&mut Rng::new(9, 1), 12, 12);
        assert!((mean_singular_value(&q).unwrap() - 1.0).abs() < 1e-10);
        assert!((mean_singular_value(&q.scaled(0.5)).unwrap() - 0.5).abs() < 1e-10);
        assert_eq!(mean_singular_value(&Mat::zeros(4, 4)).unwrap(), 0.0);
    }

    #[test]
    fn product_of_singular_values_is_abs_det() {
        let mut rng = Rng::new(42, 0);
        for _ in 0..50 {
            let a = gaussian_matrix(&mut rng, 5, 5);
            let prod: f64 = singular_values(&a).unwrap().iter().product();
            let d = det(&a).abs();
            assert!((prod - d).abs() <= 1e-8 * d, "{prod} vs {d}");
        }
    }

    #[test]
    fn qr_reconstructs_input() {
        let mut rng = Rng::new(8, 0);
        let a = gaussian_matrix(&mut rng, 7, 4);
        let Qr { q, r } = householder_qr(&a).unwrap();
        assert!(q.matmul(&r).max_abs_diff(&a) < 1e-12);
        let qtq = q.transpose().matmul(&q);
        assert!(qtq.max_abs_diff(&Mat::identity(4)) < 1e-12);
        for i in 0..4 {
            for j in 0..i {
                assert_eq!(r.get(i, j), 0.0);
            }
        }
    }

    #[test]
    fn qr_rejects_wide() {
        assert!(householder_qr(&Mat::zeros(2, 3)).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn spectrum_scales_with_abs_c(seed in 0u64..10_000, c in -4.0f64..4.0, rows in 1usize..9, cols in 1usize..9) {
            let a = gaussian_matrix(&mut Rng::new(seed, 0), rows, cols);
            let s = singular_values(&a).unwrap();
            let sc = singular_values(&a.scaled(c)).unwrap();
            for (x, y) in s.iter().zip(&sc) {
                prop_assert!((x * c.abs() - y).abs() <= 1e-10 * (1.0 + x * c.abs()));
            }
        }

        #[test]
        fn frobenius_norm_is_spectral_l2(seed in 0u64..10_000, rows in 1usize..10, cols in 1usize..10) {
            let a = gaussian_matrix(&mut Rng::new(seed, 5), rows, cols);
            let s = singular_values(&a).unwrap();
            let ss: f64 = s.iter().map(|x| x * x).sum();
            prop_assert!((ss - a.sum_sq()).abs() <= 1e-10 * a.sum_sq().max(1.0));
        }
    }
}
