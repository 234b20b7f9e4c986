use super::ops::{map_inplace, preact, pull_back, zip_map, GradSink, tanh};
use super::{CellParams, CellState, Gates};
use crate::numerics::Mat;

// h = tanh(W_x x + W_h h_prev + b)

pub(super) fn forward(p: &CellParams, x: &Mat, h_prev: &Mat) -> (CellState, Gates) {
    let mut h = preact(x, p.w(0), Some((h_prev, p.w(1))), p.b(0));
    map_inplace(&mut h, tanh);
    (CellState { h, c: None }, Gates { acts: Vec::new() })
}

pub(super) fn backward(
    p: &CellParams,
    x: &Mat,
    h_prev: &Mat,
    h: &Mat,
    g_h: &Mat,
    sink: &mut GradSink,
) -> (Mat, Mat) {
    let delta = zip_map(g_h, h, |g, h| g * (1.0 - h * h));
    let mut g_x = Mat::zeros(x.rows(), x.cols());
    let mut g_hp = Mat::zeros(h_prev.rows(), h_prev.cols());
    pull_back(&mut g_x, &delta, p.w(0));
    pull_back(&mut g_hp, &delta, p.w(1));
    sink.weight(0, &delta, x);
    sink.weight(1, &delta, h_prev);
    sink.bias(0, &delta);
    (g_x, g_hp)
}
