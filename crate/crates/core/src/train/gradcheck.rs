use serde::{Deserialize, Serialize};

use crate::cells::{CellKind, CellParams, CellState};
use crate::error::{Error, Result};
use crate::numerics::{gaussian_matrix, Mat, Rng};

/// Outcome of [`grad_check`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub kind: CellKind,
    pub trials: usize,
    pub eps: f64,
    pub max_rel_err: f64,
    /// Tensor (or `x`, `h_prev`, `c_prev`) where the worst error occurred.
    pub worst: String,
}

impl GradCheckReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.max_rel_err < tol
    }
}

/// `||a - b|| / max(||a||, ||b||, 1e-12)`
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let d = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    d / na.max(nb).max(1e-12)
}

/// Central differences of `f` over every coordinate of `v`; `v` is
/// restored afterwards.
pub fn central_diff(v: &mut [f64], eps: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    (0..v.len())
        .map(|i| {
            let orig = v[i];
            v[i] = orig + eps;
            let up = f(v);
            v[i] = orig - eps;
            let dn = f(v);
            v[i] = orig;
            (up - dn) / (2.0 * eps)
        })
        .collect()
}

fn dot(a: &Mat, b: &Mat) -> f64 {
    a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x * y).sum()
}

struct Probe {
    p: CellParams,
    x: Mat,
    prev: CellState,
    w_h: Mat,
    w_c: Option<Mat>,
}

impl Probe {
    fn random(kind: CellKind, rng: &mut Rng) -> Probe {
        let batch = 2;
        let n_in = 1 + rng.below(4) as usize;
        let n = 1 + rng.below(5) as usize;
        let mut p = CellParams::zeros(kind, n_in, n);
        for s in p.tensors.slices_mut() {
            s.iter_mut().for_each(|v| *v = 0.6 * rng.normal());
        }
        let x = gaussian_matrix(rng, batch, n_in);
        let prev = CellState {
            h: gaussian_matrix(rng, batch, n).map(|v| 0.8 * v.tanh()),
            c: kind.has_cell_state().then(|| gaussian_matrix(rng, batch, n)),
        };
        let w_h = gaussian_matrix(rng, batch, n);
        let w_c = kind.has_cell_state().then(|| gaussian_matrix(rng, batch, n));
        Probe { p, x, prev, w_h, w_c }
    }

    /// Random scalar projection of the cell outputs.
    fn loss(&self, p: &CellParams, x: &Mat, prev: &CellState) -> f64 {
        let (out, _) = p.step(x, prev).expect("probe shapes");
        let mut s = dot(&out.h, &self.w_h);
        if let (Some(c), Some(w)) = (&out.c, &self.w_c) {
            s += dot(c, w);
        }
        s
    }

    /// `(name, analytic, numeric)` for every parameter tensor and input.
    fn compare(&self, eps: f64, fault: bool) -> Result<Vec<(String, Vec<f64>, Vec<f64>)>> {
        let cache = self.p.forward(&self.x, &self.prev.h, self.prev.c.as_ref())?;
        let mut r = self.p.backward(&cache, &self.w_h, self.w_c.as_ref())?;
        if fault {
            if let Some(v) = r.grads.tensors.slices_mut().next().and_then(|s| s.first_mut()) {
                *v = *v * 1.01 + 1e-3;
            }
        }
        let mut out = Vec::new();
        let names = self.p.tensor_names();
        for (ti, want) in r.grads.tensors.slices().enumerate() {
            let mut q = self.p.clone();
            let mut flat = q.tensors.slices().nth(ti).expect("tensor").to_vec();
            let num = central_diff(&mut flat, eps, |v| {
                q.tensors.slices_mut().nth(ti).expect("tensor").copy_from_slice(v);
                self.loss(&q, &self.x, &self.prev)
            });
            out.push((names[ti].to_string(), want.to_vec(), num));
        }
        let (b, n_in, n) = (self.x.rows(), self.p.n_in, self.p.n_hidden);
        let mut xv = self.x.as_slice().to_vec();
        let num = central_diff(&mut xv, eps, |v| {
            let xm = Mat::from_vec(b, n_in, v.to_vec()).expect("shape");
            self.loss(&self.p, &xm, &self.prev)
        });
        out.push(("x".into(), r.g_x.as_slice().to_vec(), num));
        let mut hv = self.prev.h.as_slice().to_vec();
        let num = central_diff(&mut hv, eps, |v| {
            let st = CellState {
                h: Mat::from_vec(b, n, v.to_vec()).expect("shape"),
                c: self.prev.c.clone(),
            };
            self.loss(&self.p, &self.x, &st)
        });
        out.push(("h_prev".into(), r.g_h_prev.as_slice().to_vec(), num));
        if let (Some(c), Some(g)) = (&self.prev.c, &r.g_c_prev) {
            let mut cv = c.as_slice().to_vec();
            let num = central_diff(&mut cv, eps, |v| {
                let st = CellState {
                    h: self.prev.h.clone(),
                    c: Some(Mat::from_vec(b, n, v.to_vec()).expect("shape")),
                };
                self.loss(&self.p, &self.x, &st)
            });
            out.push(("c_prev".into(), g.as_slice().to_vec(), num));
        }
        Ok(out)
    }
}

/// Compares a cell's analytic backward pass with central differences of a
/// random scalar projection of its outputs, over every parameter and input,
/// on `trials` random small instances. Returns the worst per-tensor
/// relative error.
pub fn grad_check(kind: CellKind, trials: usize, eps: f64, seed: u64) -> Result<GradCheckReport> {
    grad_check_with_fault(kind, trials, eps, seed, false)
}

/// [`grad_check`] with an optional deliberate corruption of one analytic
/// gradient entry, for testing the harness itself.
pub fn grad_check_with_fault(kind: CellKind, trials: usize, eps: f64, seed: u64, fault: bool) -> Result<GradCheckReport> {
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(Error::InvalidConfig(format!("eps {eps:e} outside [1e-7, 1e-3]")));
    }
    if trials == 0 {
        return Err(Error::InvalidConfig("grad_check needs at least one trial".into()));
    }
    let mut rng = Rng::new(seed, kind as u64);
    let mut report = GradCheckReport {
        kind,
        trials,
        eps,
        max_rel_err: 0.0,
        worst: String::new(),
    };
    for _ in 0..trials {
        let probe = Probe::random(kind, &mut rng);
        for (name, a, n) in probe.compare(eps, fault)? {
            let e = rel_err(&a, &n);
            if e > report.max_rel_err || report.worst.is_empty() {
                report.max_rel_err = e;
                report.worst = name;
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_kinds_pass_at_default_step() {
        for kind in CellKind::ALL {
            let r = grad_check(kind, 20, 1e-5, 3).unwrap();
            assert!(r.passed(1e-6), "{kind}: {} at {}", r.max_rel_err, r.worst);
        }
    }

    #[test]
    fn single_trial_is_valid() {
        let r = grad_check(CellKind::Gru, 1, 1e-5, 0).unwrap();
        assert_eq!(r.trials, 1);
        assert!(r.passed(1e-6));
    }

    #[test]
    fn injected_fault_is_detected() {
        for kind in CellKind::ALL {
            let r = grad_check_with_fault(kind, 3, 1e-5, 0, true).unwrap();
            assert!(!r.passed(1e-5), "{kind}: {}", r.max_rel_err);
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(grad_check(CellKind::Star, 1, 1e-2, 0).is_err());
        assert!(grad_check(CellKind::Star, 1, 1e-9, 0).is_err());
        assert!(grad_check(CellKind::Star, 0, 1e-5, 0).is_err());
    }

    /// Central differences of an affine map are exact up to rounding, so
    /// the harness itself must agree to roughly `u / eps`.
    #[test]
    fn identity_activation_rnn_agrees_to_rounding() {
        let mut rng = Rng::new(9, 0);
        let (b, n_in, n, eps) = (3, 4, 5, 1e-3);
        let wx = gaussian_matrix(&mut rng, n, n_in);
        let wh = gaussian_matrix(&mut rng, n, n);
        let x = gaussian_matrix(&mut rng, b, n_in);
        let hp = gaussian_matrix(&mut rng, b, n);
        let proj = gaussian_matrix(&mut rng, b, n);
        // h = x Wx^T + h_prev Wh^T, loss = <proj, h>
        let loss = |wx: &Mat, wh: &Mat, x: &Mat, hp: &Mat| {
            let mut h = x.matmul(&wx.transpose());
            h.add_assign(&hp.matmul(&wh.transpose()));
            dot(&h, &proj)
        };
        let g_wx = proj.transpose().matmul(&x);
        let g_wh = proj.transpose().matmul(&hp);
        let g_x = proj.matmul(&wx);
        let g_hp = proj.matmul(&wh);

        let scale = loss(&wx, &wh, &x, &hp).abs().max(1.0);
        let bound = 64.0 * f64::EPSILON * scale / eps;
        let mut v = wx.as_slice().to_vec();
        let num = central_diff(&mut v, eps, |v| loss(&Mat::from_vec(n, n_in, v.to_vec()).unwrap(), &wh, &x, &hp));
        assert!(rel_err(g_wx.as_slice(), &num) < bound);
        let mut v = wh.as_slice().to_vec();
        let num = central_diff(&mut v, eps, |v| loss(&wx, &Mat::from_vec(n, n, v.to_vec()).unwrap(), &x, &hp));
        assert!(rel_err(g_wh.as_slice(), &num) < bound);
        let mut v = x.as_slice().to_vec();
        let num = central_diff(&mut v, eps, |v| loss(&wx, &wh, &Mat::from_vec(b, n_in, v.to_vec()).unwrap(), &hp));
        assert!(rel_err(g_x.as_slice(), &num) < bound);
        let mut v = hp.as_slice().to_vec();
        let num = central_diff(&mut v, eps, |v| loss(&wx, &wh, &x, &Mat::from_vec(b, n, v.to_vec()).unwrap()));
        assert!(rel_err(g_hp.as_slice(), &num) < bound, "{bound:e}");
    }

    /// Truncation error dominates at large steps and rounding at small
    /// ones, so the error is smallest in the middle of the sweep.
    #[test]
    fn step_sweep_is_convex_in_log_space() {
        for kind in CellKind::ALL {
            let e: Vec<f64> = [1e-4, 1e-5, 1e-6]
                .iter()
                .map(|&eps| grad_check(kind, 10, eps, 4).unwrap().max_rel_err.ln())
                .collect();
            assert!(2.0 * e[1] <= e[0] + e[2], "{kind}: {:?}", e.iter().map(|v| v.exp()).collect::<Vec<_>>());
        }
    }
}
