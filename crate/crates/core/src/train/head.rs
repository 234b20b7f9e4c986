use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{gemm, gaussian_matrix, Mat, Rng};
use crate::tasks::{LossKind, Targets};

/// Which top-layer states the output layer reads.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadMode {
    FinalStep,
    PerStep,
    MeanPool,
}

/// Dense output layer `y = h W^T + b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Head {
    pub mode: HeadMode,
    /// `outputs x n_hidden`
    pub w: Mat,
    pub b: Vec<f64>,
}

/// Loss contribution of a (micro-)batch and the gradients it induces.
#[derive(Clone, Debug)]
pub struct HeadLoss {
    /// Sum of per-item losses divided by the normalizer.
    pub loss: f64,
    /// Loss gradient at each top-layer state.
    pub seeds: Vec<Option<Mat>>,
    pub g_w: Mat,
    pub g_b: Vec<f64>,
    pub correct: usize,
    pub counted: usize,
}

pub fn softmax_rows(logits: &Mat) -> Mat {
    let mut p = logits.clone();
    for i in 0..p.rows() {
        let r = p.row_mut(i);
        let m = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        for v in r.iter_mut() {
            *v = (*v - m).exp();
            s += *v;
        }
        r.iter_mut().for_each(|v| *v /= s);
    }
    p
}

/// `-log softmax(logits)[class]` for one row.
pub fn cross_entropy(logits: &[f64], class: usize) -> f64 {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    lse - logits[class]
}

fn argmax(r: &[f64]) -> usize {
    r.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
        .0
}

impl Head {
    /// Gaussian weights with variance `1 / n_hidden`, zero bias.
    pub fn init(n_hidden: usize, outputs: usize, mode: HeadMode, rng: &mut Rng) -> Head {
        let w = gaussian_matrix(rng, outputs, n_hidden).scaled(1.0 / (n_hidden as f64).sqrt());
        Head {
            mode,
            w,
            b: vec![0.0; outputs],
        }
    }

    pub fn outputs(&self) -> usize {
        self.w.rows()
    }

    fn project(&self, h: &Mat) -> Mat {
        let mut y = Mat::zeros(h.rows(), self.outputs());
        gemm(1.0, h, false, &self.w, true, 0.0, &mut y);
        y.add_row_broadcast(&self.b);
        y
    }

    /// Loss and its gradients for the top states `tops`. `norm_items` is the
    /// number of samples in the full batch, so that micro-batch results add up.
    pub fn loss(&self, tops: &[&Mat], targets: &Targets, kind: LossKind, norm_items: usize) -> Result<HeadLoss> {
        let steps = tops.len();
        if steps == 0 {
            return Err(Error::InvalidConfig("empty sequence".into()));
        }
        let batch = tops.first().map_or(0, |h| h.rows());
        let n = self.w.cols();
        let mut g_w = Mat::zeros(self.outputs(), n);
        let mut g_b = vec![0.0; self.outputs()];
        let mut seeds: Vec<Option<Mat>> = vec![None; steps];
        let (mut loss, mut correct, mut counted) = (0.0, 0, 0);

        // One attachment point: its input and the per-row output gradient.
        let mut attach = |h: &Mat, y: &Mat, scale: f64, per_row: &dyn Fn(usize, &[f64], &mut [f64]) -> (f64, bool)| {
            let mut dy = Mat::zeros(y.rows(), y.cols());
            let mut l = 0.0;
            for i in 0..y.rows() {
                let (li, ok) = per_row(i, y.row(i), dy.row_mut(i));
                l += li;
                correct += usize::from(ok);
                counted += 1;
            }
            dy.scale(scale);
            gemm(1.0, &dy, true, h, false, 1.0, &mut g_w);
            for (a, s) in g_b.iter_mut().zip(dy.column_sums()) {
                *a += s;
            }
            let mut gh = Mat::zeros(h.rows(), n);
            gemm(1.0, &dy, false, &self.w, false, 0.0, &mut gh);
            (l * scale, gh)
        };

        let ce_row = |class: usize| {
            move |_: usize, y: &[f64], dy: &mut [f64]| {
                let p = softmax_rows(&Mat::row_vector(y));
                dy.copy_from_slice(p.row(0));
                dy[class] -= 1.0;
                (cross_entropy(y, class), argmax(y) == class)
            }
        };

        let mismatch = || {
            Error::InvalidConfig(format!(
                "head mode {:?} cannot compute {kind:?} loss for these targets",
                self.mode
            ))
        };
        match (self.mode, targets, kind) {
            (HeadMode::PerStep, Targets::PerStep(c), LossKind::CrossEntropy) => {
                if c.len() != steps {
                    return Err(Error::shape("per-step targets", steps, c.len()));
                }
                target_len(targets, batch)?;
                let scale = 1.0 / (norm_items * steps) as f64;
                for (t, h) in tops.iter().enumerate() {
                    let y = self.project(h);
                    let ct = &c[t];
                    let (l, gh) = attach(h, &y, scale, &|i, y, dy| ce_row(ct[i])(i, y, dy));
                    loss += l;
                    seeds[t] = Some(gh);
                }
            }
            (HeadMode::FinalStep | HeadMode::MeanPool, Targets::Scalar(_), LossKind::Mse)
            | (HeadMode::FinalStep | HeadMode::MeanPool, Targets::Class(_), LossKind::CrossEntropy) => {
                target_len(targets, batch)?;
                let pooled;
                let h = if self.mode == HeadMode::FinalStep {
                    tops[steps - 1]
                } else {
                    let mut s = Mat::zeros(batch, n);
                    tops.iter().for_each(|h| s.add_assign(h));
                    s.scale(1.0 / steps as f64);
                    pooled = s;
                    &pooled
                };
                let y = self.project(h);
                let scale = 1.0 / norm_items as f64;
                let (l, gh) = match targets {
                    Targets::Scalar(v) => attach(h, &y, scale, &|i, y, dy| {
                        let e = y[0] - v[i];
                        dy[0] = 2.0 * e;
                        (e * e, false)
                    }),
                    Targets::Class(c) => attach(h, &y, scale, &|i, y, dy| ce_row(c[i])(i, y, dy)),
                    Targets::PerStep(_) => return Err(mismatch()),
                };
                loss += l;
                if self.mode == HeadMode::FinalStep {
                    seeds[steps - 1] = Some(gh);
                } else {
                    let g = gh.scaled(1.0 / steps as f64);
                    seeds.iter_mut().for_each(|s| *s = Some(g.clone()));
                }
            }
            _ => return Err(mismatch()),
        }
        Ok(HeadLoss {
            loss,
            seeds,
            g_w,
            g_b,
            correct,
            counted,
        })
    }
}

fn target_len(targets: &Targets, batch: usize) -> Result<()> {
    let n = match targets {
        Targets::Scalar(v) => v.len(),
        Targets::Class(v) => v.len(),
        Targets::PerStep(v) => v.first().map_or(0, Vec::len),
    };
    if n != batch {
        return Err(Error::shape("head targets", batch, n));
    }
    Ok(())
}
