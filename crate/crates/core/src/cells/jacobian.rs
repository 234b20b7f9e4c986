//! Closed-form input and state Jacobians, built as sums of
//! `diag(d) * W` terms. Derivatives of gates come from post-activations:
//! `sigmoid' = s (1 - s)`, `tanh' = 1 - t^2`.

use super::ops::tanh;
use super::{CellKind, CellParams, CellState, Gates};
use crate::numerics::Mat;

/// `acc += diag(d) * w`
fn add_dw(acc: &mut Mat, d: &[f64], w: &Mat) {
    for (i, &di) in d.iter().enumerate() {
        if di == 0.0 {
            continue;
        }
        for (a, b) in acc.row_mut(i).iter_mut().zip(w.row(i)) {
            *a += di * b;
        }
    }
}

fn add_diag(acc: &mut Mat, d: &[f64]) {
    for (i, &di) in d.iter().enumerate() {
        let v = acc.get(i, i);
        acc.set(i, i, v + di);
    }
}

/// Left-multiplies by `diag(d)`.
fn scale_rows(m: &mut Mat, d: &[f64]) {
    for (i, &di) in d.iter().enumerate() {
        m.row_mut(i).iter_mut().for_each(|x| *x *= di);
    }
}

fn zip(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
}

fn dsig(s: &[f64]) -> Vec<f64> {
    s.iter().map(|s| s * (1.0 - s)).collect()
}

fn dtanh(t: &[f64]) -> Vec<f64> {
    t.iter().map(|t| 1.0 - t * t).collect()
}

pub(super) fn closed_form(p: &CellParams, x: &Mat, prev: &CellState, out: &CellState, gates: &Gates) -> (Mat, Mat) {
    let n = p.n_hidden;
    let mut jx = Mat::zeros(n, x.cols());
    let mut jh = Mat::zeros(n, n);
    let hp = prev.h.as_slice();
    let h = out.h.as_slice();
    let act = |g: usize| gates.acts[g].as_slice();
    match p.kind {
        CellKind::Vrnn => {
            // D_tanh' W_x, D_tanh' W_h
            let d = dtanh(h);
            add_dw(&mut jx, &d, p.w(0));
            add_dw(&mut jh, &d, p.w(1));
        }
        CellKind::Lstm => {
            let (i, f, o, z) = (act(0), act(1), act(2), act(3));
            let cp = prev.c.as_ref().expect("lstm").as_slice();
            let tc: Vec<f64> = out.c.as_ref().expect("lstm").as_slice().iter().map(|&c| tanh(c)).collect();
            // output gate path: D_tanh(c) D_o'
            let d_o = zip(&tc, &dsig(o), |a, b| a * b);
            // cell path prefactor: D_tanh(c)' D_o
            let pre = zip(&dtanh(&tc), o, |a, b| a * b);
            let d_f = zip(&pre, &zip(cp, &dsig(f), |a, b| a * b), |a, b| a * b);
            let d_i = zip(&pre, &zip(z, &dsig(i), |a, b| a * b), |a, b| a * b);
            let d_z = zip(&pre, &zip(i, &dtanh(z), |a, b| a * b), |a, b| a * b);
            add_dw(&mut jx, &d_o, p.w(4));
            add_dw(&mut jx, &d_f, p.w(2));
            add_dw(&mut jx, &d_i, p.w(0));
            add_dw(&mut jx, &d_z, p.w(6));
            add_dw(&mut jh, &d_o, p.w(5));
            add_dw(&mut jh, &d_f, p.w(3));
            // the input-gate term of H uses W_hi
            add_dw(&mut jh, &d_i, p.w(1));
            add_dw(&mut jh, &d_z, p.w(7));
        }
        CellKind::LstmWf => {
            let (f, z) = (act(0), act(1));
            let ds = dtanh(h);
            let d_f = zip(&ds, &zip(&zip(hp, z, |a, b| a - b), &dsig(f), |a, b| a * b), |a, b| a * b);
            let d_z = zip(&ds, &zip(f, &dtanh(z), |f, dz| (1.0 - f) * dz), |a, b| a * b);
            add_dw(&mut jx, &d_f, p.w(0));
            add_dw(&mut jx, &d_z, p.w(2));
            add_diag(&mut jh, &zip(&ds, f, |a, b| a * b));
            add_dw(&mut jh, &d_f, p.w(1));
            add_dw(&mut jh, &d_z, p.w(3));
        }
        CellKind::Gru => {
            let (z, r, u) = (act(0), act(1), act(2));
            let d_z = zip(&zip(u, hp, |a, b| a - b), &dsig(z), |a, b| a * b);
            let d_u = zip(z, &dtanh(u), |a, b| a * b);
            add_dw(&mut jx, &d_z, p.w(0));
            add_dw(&mut jx, &d_u, p.w(4));
            add_diag(&mut jh, &z.iter().map(|z| 1.0 - z).collect::<Vec<_>>());
            add_dw(&mut jh, &d_z, p.w(1));
            // q = r h_prev reaches the candidate through W_hh:
            // dq/dx = D_{h_prev} D_r' W_xr, dq/dh_prev = D_r + D_{h_prev} D_r' W_hr
            let d_r = zip(hp, &dsig(r), |a, b| a * b);
            let mut dq_dx = Mat::zeros(n, x.cols());
            add_dw(&mut dq_dx, &d_r, p.w(2));
            let mut via_q = p.w(5).matmul(&dq_dx);
            scale_rows(&mut via_q, &d_u);
            jx.add_assign(&via_q);
            let mut dq_dh = Mat::diag(r);
            add_dw(&mut dq_dh, &d_r, p.w(3));
            let mut via_q = p.w(5).matmul(&dq_dh);
            scale_rows(&mut via_q, &d_u);
            jh.add_assign(&via_q);
        }
        CellKind::Star => {
            let (z, k) = (act(0), act(1));
            let ds = dtanh(h);
            let d_k = zip(&ds, &zip(&zip(z, hp, |a, b| a - b), &dsig(k), |a, b| a * b), |a, b| a * b);
            let d_z = zip(&ds, &zip(k, &dtanh(z), |a, b| a * b), |a, b| a * b);
            add_dw(&mut jx, &d_k, p.w(1));
            add_dw(&mut jx, &d_z, p.w(0));
            // D_tanh' (I - D_k) + D_tanh' D_{z - h} D_k' W_h
            add_diag(&mut jh, &zip(&ds, k, |a, b| a * (1.0 - b)));
            add_dw(&mut jh, &d_k, p.w(2));
        }
    }
    (jx, jh)
}
