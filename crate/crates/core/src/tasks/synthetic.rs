use serde::{Deserialize, Serialize};

use super::{Batch, LossKind, Targets};
use crate::numerics::{Mat, Rng};

/// Where the two adding-problem markers may fall.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarkerPlacement {
    /// One marker in each half of the sequence.
    #[default]
    Halves,
    /// Two distinct positions anywhere.
    Anywhere,
}

/// Adding problem with markers in opposite halves.
pub fn gen_adding(rng: &mut Rng, batch: usize, t: usize) -> Batch {
    gen_adding_with(rng, batch, t, MarkerPlacement::Halves)
}

/// Channel 0 holds U(0,1) values, channel 1 two unit markers; the target is
/// the sum of the two marked values.
pub fn gen_adding_with(rng: &mut Rng, batch: usize, t: usize, placement: MarkerPlacement) -> Batch {
    assert!(t >= 2, "adding problem needs T >= 2");
    let mut inputs = vec![Mat::zeros(batch, 2); t];
    let mut targets = Vec::with_capacity(batch);
    for b in 0..batch {
        for x in inputs.iter_mut() {
            x.set(b, 0, rng.uniform());
        }
        let half = (t / 2) as u64;
        let (p, q) = match placement {
            MarkerPlacement::Halves => (rng.below(half), half + rng.below(t as u64 - half)),
            MarkerPlacement::Anywhere => {
                let p = rng.below(t as u64);
                let mut q = rng.below(t as u64 - 1);
                if q >= p {
                    q += 1;
                }
                (p, q)
            }
        };
        let (p, q) = (p as usize, q as usize);
        inputs[p].set(b, 1, 1.0);
        inputs[q].set(b, 1, 1.0);
        targets.push(inputs[p].get(b, 0) + inputs[q].get(b, 0));
    }
    Batch {
        inputs,
        targets: Targets::Scalar(targets),
        loss: LossKind::Mse,
    }
}

/// Expected squared error of always predicting 1: the variance of a sum of
/// two independent U(0,1) draws.
pub fn adding_baseline_mse() -> f64 {
    1.0 / 6.0
}

pub const COPY_ALPHABET: usize = 10;
pub const COPY_DIGITS: usize = 10;
const COPY_DELIM: usize = 9;

/// Copy memory task of length `T + 20`.
pub fn gen_copy(rng: &mut Rng, batch: usize, t: usize) -> Batch {
    let digits: Vec<[usize; COPY_DIGITS]> = (0..batch)
        .map(|_| std::array::from_fn(|_| 1 + rng.below(8) as usize))
        .collect();
    copy_batch_from_digits(&digits, t)
}

/// Ten digits, `T - 1` blanks, then eleven 9s (the first is the recall cue).
/// Targets are blank except the last ten steps, which repeat the digits.
pub fn copy_batch_from_digits(digits: &[[usize; COPY_DIGITS]], t: usize) -> Batch {
    assert!(t >= 1, "copy task needs T >= 1");
    let len = t + 20;
    let batch = digits.len();
    let mut inputs = vec![Mat::zeros(batch, COPY_ALPHABET); len];
    let mut targets = vec![vec![0usize; batch]; len];
    for (b, d) in digits.iter().enumerate() {
        for step in 0..len {
            let sym = if step < COPY_DIGITS {
                d[step]
            } else if step < COPY_DIGITS + t - 1 {
                0
            } else {
                COPY_DELIM
            };
            inputs[step].set(b, sym, 1.0);
        }
        for (i, &v) in d.iter().enumerate() {
            targets[len - COPY_DIGITS + i][b] = v;
        }
    }
    Batch {
        inputs,
        targets: Targets::PerStep(targets),
        loss: LossKind::CrossEntropy,
    }
}

/// Per-step cross-entropy of the best predictor without memory: certain
/// blanks, then a uniform guess over eight digits for the last ten steps.
pub fn copy_baseline_ce(t: usize) -> f64 {
    COPY_DIGITS as f64 * 8f64.ln() / (t + 20) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adding_construction() {
        let mut b = gen_adding(&mut Rng::new(1, 0), 1, 10);
        for x in b.inputs.iter_mut() {
            x.set(0, 0, 0.5);
            x.set(0, 1, 0.0);
        }
        b.inputs[3].set(0, 1, 1.0);
        b.inputs[7].set(0, 1, 1.0);
        let marked: f64 = b.inputs.iter().filter(|x| x.get(0, 1) == 1.0).map(|x| x.get(0, 0)).sum();
        assert_eq!(marked, 1.0);

        for placement in [MarkerPlacement::Halves, MarkerPlacement::Anywhere] {
            let b = gen_adding_with(&mut Rng::new(2, 0), 50, 9, placement);
            let Targets::Scalar(y) = &b.targets else { panic!() };
            for s in 0..50 {
                let marks: Vec<usize> = (0..9).filter(|&t| b.inputs[t].get(s, 1) == 1.0).collect();
                assert_eq!(marks.len(), 2);
                assert_eq!(b.inputs.iter().map(|x| x.get(s, 1)).sum::<f64>(), 2.0);
                if placement == MarkerPlacement::Halves {
                    assert!(marks[0] < 4 && marks[1] >= 4);
                }
                let want = b.inputs[marks[0]].get(s, 0) + b.inputs[marks[1]].get(s, 0);
                assert_eq!(y[s], want);
            }
        }
    }

    #[test]
    fn adding_memoryless_baseline() {
        let b = gen_adding(&mut Rng::new(3, 0), 10_000, 20);
        let Targets::Scalar(y) = b.targets else { panic!() };
        let mse = y.iter().map(|v| (v - 1.0).powi(2)).sum::<f64>() / y.len() as f64;
        assert!((mse / adding_baseline_mse() - 1.0).abs() < 0.05, "{mse}");
    }

    #[test]
    fn copy_construction() {
        let d = [1, 2, 3, 4, 5, 6, 7, 8, 1, 2];
        for t in [1, 100, 1000] {
            let b = copy_batch_from_digits(&[d], t);
            assert_eq!(b.steps(), t + 20);
            let Targets::PerStep(y) = &b.targets else { panic!() };
            let tail: Vec<usize> = y[t + 10..].iter().map(|r| r[0]).collect();
            assert_eq!(tail, d);
            assert!(y[..t + 10].iter().all(|r| r[0] == 0));
            let sym = |s: usize| (0..10).find(|&k| b.inputs[s].get(0, k) == 1.0).unwrap();
            assert_eq!((0..10).map(sym).collect::<Vec<_>>(), d);
            assert!((10..t + 9).all(|s| sym(s) == 0));
            assert!((t + 9..t + 20).all(|s| sym(s) == 9));
            assert!(b.inputs.iter().all(|x| x.row(0).iter().sum::<f64>() == 1.0));
        }
    }

    #[test]
    fn copy_inputs_decode_to_targets() {
        let b = gen_copy(&mut Rng::new(4, 0), 64, 5);
        let Targets::PerStep(y) = &b.targets else { panic!() };
        for s in 0..64 {
            for i in 0..10 {
                let k = (0..10).find(|&k| b.inputs[i].get(s, k) == 1.0).unwrap();
                assert!((1..=8).contains(&k));
                assert_eq!(k, y[15 + i][s]);
            }
        }
    }

    #[test]
    fn copy_memoryless_baseline() {
        // uniform over 1..8 on the last ten steps, certain blank elsewhere
        let t = 30;
        let b = gen_copy(&mut Rng::new(5, 0), 10_000, t);
        let Targets::PerStep(y) = &b.targets else { panic!() };
        let mut nll = 0.0;
        for (step, row) in y.iter().enumerate() {
            for &c in row {
                let p = if step < t + 10 { f64::from(u8::from(c == 0)) } else if (1..=8).contains(&c) { 0.125 } else { 0.0 };
                nll -= p.ln();
            }
        }
        let ce = nll / (10_000 * (t + 20)) as f64;
        assert!((ce / copy_baseline_ce(t) - 1.0).abs() < 0.05);
    }

    #[test]
    fn generators_are_deterministic() {
        assert_eq!(gen_adding(&mut Rng::new(6, 2), 3, 7), gen_adding(&mut Rng::new(6, 2), 3, 7));
        assert_eq!(gen_copy(&mut Rng::new(6, 2), 3, 7), gen_copy(&mut Rng::new(6, 2), 3, 7));
        assert_ne!(gen_copy(&mut Rng::new(6, 2), 3, 7), gen_copy(&mut Rng::new(6, 3), 3, 7));
    }
}
