use super::params::ParamTensors;
use crate::numerics::{gemm, Mat};

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Hyperbolic tangent through `exp`/`exp_m1`, within a few ulp of
/// `f64::tanh` and about twice as fast.
#[inline]
pub(crate) fn tanh(x: f64) -> f64 {
    let a = x.abs();
    let t = if a < 0.625 {
        let e = (2.0 * a).exp_m1();
        e / (e + 2.0)
    } else if a < 22.0 {
        1.0 - 2.0 / ((2.0 * a).exp() + 1.0)
    } else {
        1.0
    };
    t.copysign(x)
}

/// `x W_x^T + h W_h^T + b`, one row per sample.
pub(crate) fn preact(x: &Mat, wx: &Mat, recur: Option<(&Mat, &Mat)>, b: &[f64]) -> Mat {
    let mut a = Mat::zeros(x.rows(), wx.rows());
    gemm(1.0, x, false, wx, true, 0.0, &mut a);
    if let Some((h, wh)) = recur {
        gemm(1.0, h, false, wh, true, 1.0, &mut a);
    }
    a.add_row_broadcast(b);
    a
}

pub(crate) fn map_inplace(m: &mut Mat, f: impl Fn(f64) -> f64) {
    m.as_mut_slice().iter_mut().for_each(|x| *x = f(*x));
}

/// Elementwise `out[i] = f(a[i], b[i])`.
pub(crate) fn zip_map(a: &Mat, b: &Mat, f: impl Fn(f64, f64) -> f64) -> Mat {
    assert_eq!(a.shape(), b.shape());
    let data = a.as_slice().iter().zip(b.as_slice()).map(|(&x, &y)| f(x, y)).collect();
    Mat::from_vec(a.rows(), a.cols(), data).expect("same shape")
}

/// Squared Frobenius norm of `delta^T a` without forming it.
pub(crate) fn outer_norm_sq(delta: &Mat, a: &Mat) -> f64 {
    if delta.rows() == 1 {
        return delta.sum_sq() * a.sum_sq();
    }
    let gd = delta.gram_rows();
    let ga = a.gram_rows();
    gd.as_slice().iter().zip(ga.as_slice()).map(|(x, y)| x * y).sum()
}

/// Receives per-application parameter gradients.
pub(crate) struct GradSink<'a> {
    grads: Option<&'a mut ParamTensors>,
    norm_sq: Option<f64>,
}

impl<'a> GradSink<'a> {
    pub fn new(grads: Option<&'a mut ParamTensors>, want_norm: bool) -> Self {
        GradSink {
            grads,
            norm_sq: want_norm.then_some(0.0),
        }
    }

    pub fn norm_sq(&self) -> Option<f64> {
        self.norm_sq
    }

    /// Weight `idx` multiplies `input`; its gradient is `delta^T input`.
    pub fn weight(&mut self, idx: usize, delta: &Mat, input: &Mat) {
        if let Some(g) = self.grads.as_deref_mut() {
            gemm(1.0, delta, true, input, false, 1.0, &mut g.weights[idx]);
        }
        if let Some(n) = self.norm_sq.as_mut() {
            *n += outer_norm_sq(delta, input);
        }
    }

    pub fn bias(&mut self, idx: usize, delta: &Mat) {
        if self.grads.is_none() && self.norm_sq.is_none() {
            return;
        }
        let s = delta.column_sums();
        if let Some(g) = self.grads.as_deref_mut() {
            for (a, b) in g.biases[idx].iter_mut().zip(&s) {
                *a += b;
            }
        }
        if let Some(n) = self.norm_sq.as_mut() {
            *n += s.iter().map(|x| x * x).sum::<f64>();
        }
    }
}

/// `g += delta W` (pulls a pre-activation gradient back through `W`).
#[inline]
pub(crate) fn pull_back(g: &mut Mat, delta: &Mat, w: &Mat) {
    gemm(1.0, delta, false, w, false, 1.0, g);
}
