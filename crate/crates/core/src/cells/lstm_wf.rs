use super::ops::{map_inplace, preact, pull_back, sigmoid, GradSink, tanh};
use super::{CellParams, CellState, Gates};
use crate::numerics::Mat;

// f = sigmoid(W_xf x + W_hf h_prev + b_f)
// z = tanh(W_xz x + W_hz h_prev + b_z)
// h = tanh(f h_prev + (1 - f) z)
//
// weights [W_xf, W_hf, W_xz, W_hz], biases [b_f, b_z], gates [f, z]

pub(super) fn forward(p: &CellParams, x: &Mat, h_prev: &Mat) -> (CellState, Gates) {
    let mut f = preact(x, p.w(0), Some((h_prev, p.w(1))), p.b(0));
    let mut z = preact(x, p.w(2), Some((h_prev, p.w(3))), p.b(1));
    map_inplace(&mut f, sigmoid);
    map_inplace(&mut z, tanh);
    let mut h = h_prev.clone();
    for ((hv, &fv), &zv) in h.as_mut_slice().iter_mut().zip(f.as_slice()).zip(z.as_slice()) {
        *hv = tanh(fv * *hv + (1.0 - fv) * zv);
    }
    (CellState { h, c: None }, Gates { acts: vec![f, z] })
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
    let (f, z) = (&gates.acts[0], &gates.acts[1]);
    let (rows, n) = h.shape();
    let mut d_f = Mat::zeros(rows, n);
    let mut d_z = Mat::zeros(rows, n);
    let mut g_hp = Mat::zeros(rows, n);
    for e in 0..rows * n {
        let hv = h.as_slice()[e];
        let (fv, zv) = (f.as_slice()[e], z.as_slice()[e]);
        let hp = h_prev.as_slice()[e];
        let ds = g_h.as_slice()[e] * (1.0 - hv * hv);
        d_f.as_mut_slice()[e] = ds * (hp - zv) * fv * (1.0 - fv);
        d_z.as_mut_slice()[e] = ds * (1.0 - fv) * (1.0 - zv * zv);
        g_hp.as_mut_slice()[e] = ds * fv;
    }
    let mut g_x = Mat::zeros(x.rows(), x.cols());
    pull_back(&mut g_x, &d_f, p.w(0));
    pull_back(&mut g_hp, &d_f, p.w(1));
    pull_back(&mut g_x, &d_z, p.w(2));
    pull_back(&mut g_hp, &d_z, p.w(3));
    sink.weight(0, &d_f, x);
    sink.weight(1, &d_f, h_prev);
    sink.weight(2, &d_z, x);
    sink.weight(3, &d_z, h_prev);
    sink.bias(0, &d_f);
    sink.bias(1, &d_z);
    (g_x, g_hp)
}
