use super::ops::{map_inplace, preact, pull_back, sigmoid, GradSink, tanh};
use super::{CellParams, CellState, Gates};
use crate::numerics::Mat;

// z = tanh(W_z x + b_z)
// k = sigmoid(W_x x + W_h h_prev + b_k)
// h = tanh((1 - k) h_prev + k z)
//
// weights [W_z, W_x, W_h], biases [b_z, b_k], gates [z, k]

pub(super) fn forward(p: &CellParams, x: &Mat, h_prev: &Mat) -> (CellState, Gates) {
    let mut z = preact(x, p.w(0), None, p.b(0));
    map_inplace(&mut z, tanh);
    let mut k = preact(x, p.w(1), Some((h_prev, p.w(2))), p.b(1));
    map_inplace(&mut k, sigmoid);
    let mut h = h_prev.clone();
    for ((hv, &zv), &kv) in h.as_mut_slice().iter_mut().zip(z.as_slice()).zip(k.as_slice()) {
        *hv = tanh((1.0 - kv) * *hv + kv * zv);
    }
    (CellState { h, c: None }, Gates { acts: vec![z, k] })
}

pub(super) fn backward(
    p: &CellParams,
    x: &Mat,
    h_prev: &Mat,
    h: &Mat,
    gates: &Gates,
    g_h: &Mat,
    sink: &mut GradSink,
) -> (Mat, Mat) {
    let (z, k) = (&gates.acts[0], &gates.acts[1]);
    let (rows, n) = h.shape();
    let mut d_z = Mat::zeros(rows, n);
    let mut d_k = Mat::zeros(rows, n);
    let mut g_hp = Mat::zeros(rows, n);
    for i in 0..rows * n {
        let hv = h.as_slice()[i];
        let zv = z.as_slice()[i];
        let kv = k.as_slice()[i];
        let hp = h_prev.as_slice()[i];
        let ds = g_h.as_slice()[i] * (1.0 - hv * hv);
        d_k.as_mut_slice()[i] = ds * (zv - hp) * kv * (1.0 - kv);
        d_z.as_mut_slice()[i] = ds * kv * (1.0 - zv * zv);
        g_hp.as_mut_slice()[i] = ds * (1.0 - kv);
    }
    let mut g_x = Mat::zeros(x.rows(), x.cols());
    pull_back(&mut g_x, &d_z, p.w(0));
    pull_back(&mut g_x, &d_k, p.w(1));
    pull_back(&mut g_hp, &d_k, p.w(2));
    sink.weight(0, &d_z, x);
    sink.weight(1, &d_k, x);
    sink.weight(2, &d_k, h_prev);
    sink.bias(0, &d_z);
    sink.bias(1, &d_k);
    (g_x, g_hp)
}
