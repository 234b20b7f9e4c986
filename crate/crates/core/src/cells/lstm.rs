use super::ops::{map_inplace, preact, pull_back, sigmoid, GradSink, tanh};
use super::{CellParams, CellState, Gates};
use crate::numerics::Mat;

// i = sigmoid(W_xi x + W_hi h_prev + b_i)
// f = sigmoid(W_xf x + W_hf h_prev + b_f)
// o = sigmoid(W_xo x + W_ho h_prev + b_o)
// z = tanh(W_xz x + W_hz h_prev + b_z)
// c = f c_prev + i z
// h = o tanh(c)
//
// weights [W_xi, W_hi, W_xf, W_hf, W_xo, W_ho, W_xz, W_hz]
// biases  [b_i, b_f, b_o, b_z], gates [i, f, o, z]

pub(super) fn forward(p: &CellParams, x: &Mat, h_prev: &Mat, c_prev: &Mat) -> (CellState, Gates) {
    let gate = |g: usize| preact(x, p.w(2 * g), Some((h_prev, p.w(2 * g + 1))), p.b(g));
    let mut i = gate(0);
    let mut f = gate(1);
    let mut o = gate(2);
    let mut z = gate(3);
    map_inplace(&mut i, sigmoid);
    map_inplace(&mut f, sigmoid);
    map_inplace(&mut o, sigmoid);
    map_inplace(&mut z, tanh);
    let (rows, n) = h_prev.shape();
    let mut c = Mat::zeros(rows, n);
    let mut h = Mat::zeros(rows, n);
    for e in 0..rows * n {
        let cv = f.as_slice()[e] * c_prev.as_slice()[e] + i.as_slice()[e] * z.as_slice()[e];
        c.as_mut_slice()[e] = cv;
        h.as_mut_slice()[e] = o.as_slice()[e] * tanh(cv);
    }
    (CellState { h, c: Some(c) }, Gates { acts: vec![i, f, o, z] })
}

#[allow(clippy::too_many_arguments)]
pub(super) fn backward(
    p: &CellParams,
    x: &Mat,
    h_prev: &Mat,
    c_prev: &Mat,
    c: &Mat,
    gates: &Gates,
    g_h: &Mat,
    g_c: Option<&Mat>,
    sink: &mut GradSink,
) -> (Mat, Mat, Mat) {
    let [i, f, o, z] = [&gates.acts[0], &gates.acts[1], &gates.acts[2], &gates.acts[3]];
    let (rows, n) = h_prev.shape();
    let mut deltas: [Mat; 4] = std::array::from_fn(|_| Mat::zeros(rows, n));
    let mut g_cp = Mat::zeros(rows, n);
    for e in 0..rows * n {
        let (iv, fv, ov, zv) = (i.as_slice()[e], f.as_slice()[e], o.as_slice()[e], z.as_slice()[e]);
        let tc = tanh(c.as_slice()[e]);
        let gh = g_h.as_slice()[e];
        let gc = gh * ov * (1.0 - tc * tc) + g_c.map_or(0.0, |g| g.as_slice()[e]);
        deltas[0].as_mut_slice()[e] = gc * zv * iv * (1.0 - iv);
        deltas[1].as_mut_slice()[e] = gc * c_prev.as_slice()[e] * fv * (1.0 - fv);
        deltas[2].as_mut_slice()[e] = gh * tc * ov * (1.0 - ov);
        deltas[3].as_mut_slice()[e] = gc * iv * (1.0 - zv * zv);
        g_cp.as_mut_slice()[e] = gc * fv;
    }
    let mut g_x = Mat::zeros(x.rows(), x.cols());
    let mut g_hp = Mat::zeros(rows, n);
    for (g, d) in deltas.iter().enumerate() {
        pull_back(&mut g_x, d, p.w(2 * g));
        pull_back(&mut g_hp, d, p.w(2 * g + 1));
        sink.weight(2 * g, d, x);
        sink.weight(2 * g + 1, d, h_prev);
        sink.bias(g, d);
    }
    (g_x, g_hp, g_cp)
}
