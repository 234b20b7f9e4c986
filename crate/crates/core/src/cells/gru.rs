use super::ops::{map_inplace, preact, pull_back, sigmoid, zip_map, GradSink, tanh};
use super::{CellParams, CellState, Gates};
use crate::numerics::Mat;

// z = sigmoid(W_xz x + W_hz h_prev + b_z)
// r = sigmoid(W_xr x + W_hr h_prev + b_r)
// u = tanh(W_xh x + W_hh (r h_prev) + b_h)
// h = (1 - z) h_prev + z u
//
// weights [W_xz, W_hz, W_xr, W_hr, W_xh, W_hh]
// biases  [b_z, b_r, b_h], gates [z, r, u]

pub(super) fn forward(p: &CellParams, x: &Mat, h_prev: &Mat) -> (CellState, Gates) {
    let mut z = preact(x, p.w(0), Some((h_prev, p.w(1))), p.b(0));
    let mut r = preact(x, p.w(2), Some((h_prev, p.w(3))), p.b(1));
    map_inplace(&mut z, sigmoid);
    map_inplace(&mut r, sigmoid);
    let q = zip_map(&r, h_prev, |r, h| r * h);
    let mut u = preact(x, p.w(4), Some((&q, p.w(5))), p.b(2));
    map_inplace(&mut u, tanh);
    let mut h = h_prev.clone();
    for ((hv, &zv), &uv) in h.as_mut_slice().iter_mut().zip(z.as_slice()).zip(u.as_slice()) {
        *hv = (1.0 - zv) * *hv + zv * uv;
    }
    (CellState { h, c: None }, Gates { acts: vec![z, r, u] })
}

pub(super) fn backward(
    p: &CellParams,
    x: &Mat,
    h_prev: &Mat,
    gates: &Gates,
    g_h: &Mat,
    sink: &mut GradSink,
) -> (Mat, Mat) {
    let (z, r, u) = (&gates.acts[0], &gates.acts[1], &gates.acts[2]);
    let (rows, n) = h_prev.shape();
    let mut d_z = Mat::zeros(rows, n);
    let mut d_u = Mat::zeros(rows, n);
    let mut g_hp = Mat::zeros(rows, n);
    for e in 0..rows * n {
        let (zv, uv, hp) = (z.as_slice()[e], u.as_slice()[e], h_prev.as_slice()[e]);
        let gh = g_h.as_slice()[e];
        d_z.as_mut_slice()[e] = gh * (uv - hp) * zv * (1.0 - zv);
        d_u.as_mut_slice()[e] = gh * zv * (1.0 - uv * uv);
        g_hp.as_mut_slice()[e] = gh * (1.0 - zv);
    }
    // gradient reaching q = r h_prev through W_hh
    let mut g_q = Mat::zeros(rows, n);
    pull_back(&mut g_q, &d_u, p.w(5));
    let mut d_r = Mat::zeros(rows, n);
    for e in 0..rows * n {
        let (rv, hp, gq) = (r.as_slice()[e], h_prev.as_slice()[e], g_q.as_slice()[e]);
        d_r.as_mut_slice()[e] = gq * hp * rv * (1.0 - rv);
        g_hp.as_mut_slice()[e] += gq * rv;
    }
    let q = zip_map(r, h_prev, |r, h| r * h);

    let mut g_x = Mat::zeros(x.rows(), x.cols());
    pull_back(&mut g_x, &d_z, p.w(0));
    pull_back(&mut g_hp, &d_z, p.w(1));
    pull_back(&mut g_x, &d_r, p.w(2));
    pull_back(&mut g_hp, &d_r, p.w(3));
    pull_back(&mut g_x, &d_u, p.w(4));
    sink.weight(0, &d_z, x);
    sink.weight(1, &d_z, h_prev);
    sink.weight(2, &d_r, x);
    sink.weight(3, &d_r, h_prev);
    sink.weight(4, &d_u, x);
    sink.weight(5, &d_u, &q);
    sink.bias(0, &d_z);
    sink.bias(1, &d_r);
    sink.bias(2, &d_u);
    (g_x, g_hp)
}
