//! Sequence tasks: the adding problem, copy memory and (permuted) pixel MNIST.

mod mnist;
mod synthetic;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Mat;

pub use mnist::{find_mnist, load_mnist_idx, permute_pixels, unpermute, MnistSet, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC};
pub use synthetic::{
    adding_baseline_mse, copy_baseline_ce, copy_batch_from_digits, gen_adding, gen_adding_with, gen_copy,
    MarkerPlacement, COPY_ALPHABET, COPY_DIGITS,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Mse,
    CrossEntropy,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Targets {
    /// One real value per sequence.
    Scalar(Vec<f64>),
    /// One class per step and sample, indexed `[t][b]`.
    PerStep(Vec<Vec<usize>>),
    /// One class per sequence.
    Class(Vec<usize>),
}

/// A batch of sequences; `inputs[t]` is `batch x n_in`.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub inputs: Vec<Mat>,
    pub targets: Targets,
    pub loss: LossKind,
}

impl Batch {
    pub fn steps(&self) -> usize {
        self.inputs.len()
    }

    pub fn size(&self) -> usize {
        self.inputs.first().map_or(0, Mat::rows)
    }

    pub fn n_in(&self) -> usize {
        self.inputs.first().map_or(0, Mat::cols)
    }

    /// Checks shapes and, for class targets, that ids are below `classes`.
    pub fn validate(&self, classes: Option<usize>) -> Result<()> {
        let (b, n) = (self.size(), self.n_in());
        if self.inputs.iter().any(|x| x.shape() != (b, n)) {
            return Err(Error::shape("batch inputs", format!("{b}x{n} at every step"), "ragged"));
        }
        let in_range = |c: &usize| classes.is_none_or(|k| *c < k);
        match &self.targets {
            Targets::Scalar(v) if v.len() != b => Err(Error::shape("batch targets", b, v.len())),
            Targets::Class(v) if v.len() != b => Err(Error::shape("batch targets", b, v.len())),
            Targets::Class(v) if !v.iter().all(in_range) => Err(Error::InvalidConfig("class id out of range".into())),
            Targets::PerStep(v) if v.len() != self.steps() || v.iter().any(|r| r.len() != b) => {
                Err(Error::shape("batch targets", format!("{}x{b}", self.steps()), "ragged"))
            }
            Targets::PerStep(v) if !v.iter().flatten().all(in_range) => {
                Err(Error::InvalidConfig("class id out of range".into()))
            }
            _ => Ok(()),
        }
    }

    /// Samples `range` of the batch.
    pub fn slice(&self, start: usize, end: usize) -> Batch {
        Batch {
            inputs: self.inputs.iter().map(|x| x.slice_rows(start, end)).collect(),
            targets: match &self.targets {
                Targets::Scalar(v) => Targets::Scalar(v[start..end].to_vec()),
                Targets::Class(v) => Targets::Class(v[start..end].to_vec()),
                Targets::PerStep(v) => Targets::PerStep(v.iter().map(|r| r[start..end].to_vec()).collect()),
            },
            loss: self.loss,
        }
    }

    /// Long-format CSV `sample,t,x0..x{n-1},target`; sequence-level targets
    /// appear on the final step only.
    pub fn to_csv(&self) -> String {
        let n = self.n_in();
        let mut s = String::from("sample,t");
        for i in 0..n {
            let _ = write!(s, ",x{i}");
        }
        s.push_str(",target\n");
        let last = self.steps().saturating_sub(1);
        for b in 0..self.size() {
            for (t, x) in self.inputs.iter().enumerate() {
                let _ = write!(s, "{b},{t}");
                for v in x.row(b) {
                    let _ = write!(s, ",{v}");
                }
                let target = match &self.targets {
                    Targets::Scalar(v) if t == last => v[b].to_string(),
                    Targets::Class(v) if t == last => v[b].to_string(),
                    Targets::PerStep(v) => v[t][b].to_string(),
                    _ => String::new(),
                };
                let _ = writeln!(s, ",{target}");
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;

    #[test]
    fn slice_and_validate() {
        let b = gen_copy(&mut Rng::new(1, 0), 4, 3);
        b.validate(Some(10)).unwrap();
        let s = b.slice(1, 3);
        assert_eq!(s.size(), 2);
        assert_eq!(s.inputs[0].row(0), b.inputs[0].row(1));
        s.validate(Some(10)).unwrap();
        assert!(b.validate(Some(5)).is_err());
    }

    #[test]
    fn csv_has_one_row_per_sample_step() {
        let b = gen_adding(&mut Rng::new(2, 0), 2, 4);
        let csv = b.to_csv();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], "sample,t,x0,x1,target");
        assert_eq!(lines.len(), 1 + 2 * 4);
        assert!(lines[1].ends_with(','));
        assert!(!lines[4].ends_with(','));
    }
}
