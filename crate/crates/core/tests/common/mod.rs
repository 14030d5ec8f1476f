#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use prune_init::data::{labels_to_idx_bytes, RawImages, DATA_DIR_ENV};
use prune_init::Dataset;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `$PRUNE_INIT_DATA_DIR`, else `data/` at the workspace root.
pub fn data_dir() -> PathBuf {
    std::env::var_os(DATA_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data"))
}

/// Ten noisy class prototypes on `side × side` images.
pub fn synthetic_raw(n: usize, side: usize, seed: u64) -> (RawImages, Vec<u8>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = side * side;
    let mut pixels = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % 10;
        for f in 0..dim {
            let on = f % 10 == class || (f / 3) % 10 == class;
            let base = if on { 200.0 } else { 30.0 };
            let v: f64 = base + rng.gen_range(-30.0..30.0);
            pixels.push(v.clamp(0.0, 255.0) as u8);
        }
        labels.push(class as u8);
    }
    let raw = RawImages {
        count: n,
        rows: side,
        cols: side,
        pixels,
    };
    (raw, labels)
}

pub fn synthetic(n: usize, side: usize, seed: u64) -> Dataset {
    let (raw, labels) = synthetic_raw(n, side, seed);
    Dataset::new("synthetic", raw, labels).unwrap()
}

/// Writes train and test IDX files under `dir/mnist/`.
pub fn write_fixture(dir: &Path, n_train: usize, n_test: usize, side: usize) {
    let sub = dir.join("mnist");
    fs::create_dir_all(&sub).unwrap();
    for (prefix, n, seed) in [("train", n_train, 1), ("t10k", n_test, 2)] {
        let (raw, labels) = synthetic_raw(n, side, seed);
        fs::write(sub.join(format!("{prefix}-images-idx3-ubyte")), raw.to_idx_bytes()).unwrap();
        fs::write(
            sub.join(format!("{prefix}-labels-idx1-ubyte")),
            labels_to_idx_bytes(&labels),
        )
        .unwrap();
    }
}
