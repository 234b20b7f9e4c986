use std::path::PathBuf;

use starlab::tasks::{find_mnist, load_mnist_idx, permute_pixels, unpermute};
use starlab::Error;

fn subset_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist-subset")
}

#[test]
fn bundled_subset_headers_and_labels() {
    let (img, lab) = find_mnist(subset_dir(), true).unwrap();
    let bytes = std::fs::read(&img).unwrap();
    assert_eq!(&bytes[..4], &[0, 0, 8, 3]);
    assert_eq!(u32::from_be_bytes(bytes[4..8].try_into().unwrap()), 1000);
    assert_eq!(u32::from_be_bytes(bytes[8..12].try_into().unwrap()), 28);
    let train = load_mnist_idx(&img, &lab).unwrap();
    assert_eq!(train.len(), 1000);
    assert_eq!(train.pixels(), 784);
    let mut per_class = [0usize; 10];
    train.labels.iter().for_each(|&l| per_class[l as usize] += 1);
    assert_eq!(per_class, [100; 10]);
    assert!(train.images.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));

    let (img, lab) = find_mnist(subset_dir(), false).unwrap();
    assert_eq!(load_mnist_idx(img, lab).unwrap().len(), 200);
}

#[test]
fn permutation_round_trip_on_real_images() {
    let (img, lab) = find_mnist(subset_dir(), true).unwrap();
    let set = load_mnist_idx(img, lab).unwrap().take(5);
    let p = permute_pixels(&set, 11);
    assert_ne!(p.images, set.images);
    let mut a: Vec<f64> = p.image(0).to_vec();
    let mut b: Vec<f64> = set.image(0).to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    assert_eq!(a, b);
    assert_eq!(unpermute(&p).images, set.images);
}

#[test]
fn missing_and_corrupt_files_are_distinguished() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(find_mnist(dir.path(), true), Err(Error::MissingData(_))));

    let (img, lab) = find_mnist(subset_dir(), true).unwrap();
    let bytes = std::fs::read(&img).unwrap();
    let cut = dir.path().join("train-images-idx3-ubyte");
    std::fs::write(&cut, &bytes[..bytes.len() - 10]).unwrap();
    assert!(matches!(load_mnist_idx(&cut, &lab), Err(Error::Truncated { .. })));
    let mut bad = bytes.clone();
    bad[3] = 1;
    std::fs::write(&cut, &bad).unwrap();
    assert!(matches!(load_mnist_idx(&cut, &lab), Err(Error::BadMagic { .. })));
    let (timg, _) = find_mnist(subset_dir(), false).unwrap();
    assert!(matches!(load_mnist_idx(&timg, &lab), Err(Error::CountMismatch { .. })));
}
