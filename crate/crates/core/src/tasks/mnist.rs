use std::path::{Path, PathBuf};

use super::{Batch, LossKind, Targets};
use crate::error::{Error, Result};
use crate::numerics::{Mat, Rng};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Stream reserved for the pixel permutation so it never collides with
/// training streams sharing the seed.
const PERMUTATION_STREAM: u64 = 0x7065_726d;

/// Grey-scale digit images flattened row-major, pixels in [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct MnistSet {
    /// `N x (rows * cols)`
    pub images: Mat,
    pub labels: Vec<u8>,
    pub rows: usize,
    pub cols: usize,
    /// `permuted[j] = original[permutation[j]]`
    pub permutation: Option<Vec<usize>>,
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingData(path.to_path_buf()),
        _ => Error::Io(e),
    })
}

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Truncated {
            path: path.to_path_buf(),
            expected: at + 4,
            found: bytes.len(),
        })
}

fn check_magic(bytes: &[u8], expected: u32, path: &Path) -> Result<()> {
    let found = be_u32(bytes, 0, path)?;
    if found != expected {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            expected,
            found,
        });
    }
    Ok(())
}

fn check_len(bytes: &[u8], expected: usize, path: &Path) -> Result<()> {
    if bytes.len() < expected {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected,
            found: bytes.len(),
        });
    }
    Ok(())
}

/// Reads an IDX image file (magic 0x803, dims `[N, rows, cols]`) and its
/// label file (magic 0x801, dims `[N]`).
pub fn load_mnist_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<MnistSet> {
    let (ip, lp) = (images_path.as_ref(), labels_path.as_ref());
    let img = read(ip)?;
    let lab = read(lp)?;
    check_magic(&img, IDX_IMAGES_MAGIC, ip)?;
    check_magic(&lab, IDX_LABELS_MAGIC, lp)?;
    let n = be_u32(&img, 4, ip)? as usize;
    let rows = be_u32(&img, 8, ip)? as usize;
    let cols = be_u32(&img, 12, ip)? as usize;
    let n_labels = be_u32(&lab, 4, lp)? as usize;
    let px = rows * cols;
    check_len(&img, 16 + n * px, ip)?;
    check_len(&lab, 8 + n_labels, lp)?;
    if n != n_labels {
        return Err(Error::CountMismatch {
            images: n,
            labels: n_labels,
        });
    }
    let data = img[16..16 + n * px].iter().map(|&b| f64::from(b) / 255.0).collect();
    Ok(MnistSet {
        images: Mat::from_vec(n, px, data)?,
        labels: lab[8..8 + n].to_vec(),
        rows,
        cols,
        permutation: None,
    })
}

/// Image and label paths of the train or test split under `dir`, accepting
/// both `train-images-idx3-ubyte` and `train-images.idx3-ubyte` spellings.
pub fn find_mnist(dir: impl AsRef<Path>, train: bool) -> Result<(PathBuf, PathBuf)> {
    let dir = dir.as_ref();
    let prefix = if train { "train" } else { "t10k" };
    let pick = |kind: &str, idx: &str| {
        let a = dir.join(format!("{prefix}-{kind}-{idx}-ubyte"));
        let b = dir.join(format!("{prefix}-{kind}.{idx}-ubyte"));
        if a.exists() {
            Ok(a)
        } else if b.exists() {
            Ok(b)
        } else {
            Err(Error::MissingData(a))
        }
    };
    Ok((pick("images", "idx3")?, pick("labels", "idx1")?))
}

impl MnistSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn pixels(&self) -> usize {
        self.rows * self.cols
    }

    pub fn image(&self, i: usize) -> &[f64] {
        self.images.row(i)
    }

    /// First `n` images.
    pub fn take(&self, n: usize) -> MnistSet {
        let n = n.min(self.len());
        MnistSet {
            images: self.images.slice_rows(0, n),
            labels: self.labels[..n].to_vec(),
            rows: self.rows,
            cols: self.cols,
            permutation: self.permutation.clone(),
        }
    }

    /// Pixel-by-pixel sequences (one pixel per step) for the given images.
    pub fn batch(&self, indices: &[usize]) -> Batch {
        let steps = self.pixels();
        let mut inputs = vec![Mat::zeros(indices.len(), 1); steps];
        for (b, &i) in indices.iter().enumerate() {
            for (t, &v) in self.image(i).iter().enumerate() {
                inputs[t].set(b, 0, v);
            }
        }
        Batch {
            inputs,
            targets: Targets::Class(indices.iter().map(|&i| usize::from(self.labels[i])).collect()),
            loss: LossKind::CrossEntropy,
        }
    }

    pub fn inverse_permutation(&self) -> Option<Vec<usize>> {
        self.permutation.as_ref().map(|p| {
            let mut inv = vec![0; p.len()];
            for (j, &src) in p.iter().enumerate() {
                inv[src] = j;
            }
            inv
        })
    }
}

fn reorder(set: &MnistSet, perm: &[usize]) -> Mat {
    Mat::from_fn(set.len(), perm.len(), |i, j| set.images.get(i, perm[j]))
}

/// Applies one seeded pixel permutation to every image. Permuting an already
/// permuted set composes the two.
pub fn permute_pixels(set: &MnistSet, seed: u64) -> MnistSet {
    let mut perm: Vec<usize> = (0..set.pixels()).collect();
    Rng::new(seed, PERMUTATION_STREAM).shuffle(&mut perm);
    let composed = match &set.permutation {
        Some(prev) => perm.iter().map(|&j| prev[j]).collect(),
        None => perm.clone(),
    };
    MnistSet {
        images: reorder(set, &perm),
        labels: set.labels.clone(),
        rows: set.rows,
        cols: set.cols,
        permutation: Some(composed),
    }
}

/// Undoes the stored permutation.
pub fn unpermute(set: &MnistSet) -> MnistSet {
    match set.inverse_permutation() {
        Some(inv) => MnistSet {
            images: reorder(set, &inv),
            labels: set.labels.clone(),
            rows: set.rows,
            cols: set.cols,
            permutation: None,
        },
        None => set.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn idx_images(n: u32, rows: u32, cols: u32, px: &[u8]) -> Vec<u8> {
        let mut v = Vec::new();
        for w in [IDX_IMAGES_MAGIC, n, rows, cols] {
            v.extend_from_slice(&w.to_be_bytes());
        }
        v.extend_from_slice(px);
        v
    }

    fn idx_labels(labels: &[u8]) -> Vec<u8> {
        let mut v = IDX_LABELS_MAGIC.to_be_bytes().to_vec();
        v.extend_from_slice(&(labels.len() as u32).to_be_bytes());
        v.extend_from_slice(labels);
        v
    }

    fn fixture(dir: &Path, images: &[u8], labels: &[u8]) -> (PathBuf, PathBuf) {
        let (ip, lp) = (dir.join("img"), dir.join("lab"));
        std::fs::write(&ip, images).unwrap();
        std::fs::write(&lp, labels).unwrap();
        (ip, lp)
    }

    #[test]
    fn two_image_fixture_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let px: Vec<u8> = (0..8).map(|i| (i * 36) as u8).collect();
        let (ip, lp) = fixture(dir.path(), &idx_images(2, 2, 2, &px), &idx_labels(&[7, 3]));
        let s = load_mnist_idx(&ip, &lp).unwrap();
        assert_eq!((s.len(), s.rows, s.cols), (2, 2, 2));
        assert_eq!(s.labels, vec![7, 3]);
        assert_eq!(s.image(1), &[144.0 / 255.0, 180.0 / 255.0, 216.0 / 255.0, 252.0 / 255.0]);
        let b = s.batch(&[1, 0]);
        assert_eq!(b.steps(), 4);
        assert_eq!(b.inputs[2].get(0, 0), 216.0 / 255.0);
        assert_eq!(b.targets, Targets::Class(vec![3, 7]));
    }

    #[test]
    fn distinct_errors() {
        let dir = tempfile::tempdir().unwrap();
        let good = idx_images(2, 2, 2, &[0; 8]);
        let mut bad = good.clone();
        bad[3] = 0x02;
        let (ip, lp) = fixture(dir.path(), &bad, &idx_labels(&[1, 2]));
        assert!(matches!(load_mnist_idx(&ip, &lp), Err(Error::BadMagic { found: 0x802, .. })));

        let (ip, lp) = fixture(dir.path(), &good[..20], &idx_labels(&[1, 2]));
        assert!(matches!(load_mnist_idx(&ip, &lp), Err(Error::Truncated { expected: 24, found: 20, .. })));

        let (ip, lp) = fixture(dir.path(), &good, &idx_labels(&[1, 2, 3]));
        assert!(matches!(load_mnist_idx(&ip, &lp), Err(Error::CountMismatch { images: 2, labels: 3 })));

        let missing = dir.path().join("nope");
        assert!(matches!(load_mnist_idx(&missing, &lp), Err(Error::MissingData(_))));
        assert!(matches!(find_mnist(dir.path(), true), Err(Error::MissingData(_))));
    }

    #[test]
    fn permutation_properties() {
        let mut rng = Rng::new(1, 0);
        let n = 3;
        let set = MnistSet {
            images: Mat::from_fn(n, 16, |_, _| (rng.below(256) as f64) / 255.0),
            labels: vec![1, 2, 3],
            rows: 4,
            cols: 4,
            permutation: None,
        };
        let a = permute_pixels(&set, 42);
        let b = permute_pixels(&set, 42);
        assert_eq!(a, b);
        assert_ne!(a.permutation, permute_pixels(&set, 43).permutation);
        let mut p = a.permutation.clone().unwrap();
        p.sort_unstable();
        assert_eq!(p, (0..16).collect::<Vec<_>>());
        for i in 0..n {
            let mut x = set.image(i).to_vec();
            let mut y = a.image(i).to_vec();
            x.sort_by(f64::total_cmp);
            y.sort_by(f64::total_cmp);
            assert_eq!(x, y);
        }
        assert_eq!(unpermute(&a).images, set.images);
        let twice = permute_pixels(&a, 7);
        assert_eq!(unpermute(&twice).images, set.images);
    }
}
