//! Digit benchmark ingestion.
//!
//! Each dataset lives under `<root>/<name>/<split>/` as a pair of IDX files
//! (the MNIST container format): `images.idx` holding `u8` pixels shaped
//! `[N, H, W]` or `[N, H, W, 3]`, and `labels.idx` holding `[N]` digits 0-9.
//! Samples come out as `3 x 32 x 32` planes with values in `[0, 1]`.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use image::imageops::{self, FilterType};
use image::{GrayImage, RgbImage};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};

pub const DIGIT_SIDE: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DigitDataset {
    Mt,
    Syn,
    Svhn,
    Mm,
    Up,
}

impl DigitDataset {
    pub const ALL: [DigitDataset; 5] = [Self::Mt, Self::Syn, Self::Svhn, Self::Mm, Self::Up];

    pub fn dir_name(self) -> &'static str {
        match self {
            Self::Mt => "mt",
            Self::Syn => "syn",
            Self::Svhn => "svhn",
            Self::Mm => "mm",
            Self::Up => "up",
        }
    }

    /// Benchmark subsample size; USPS is used whole.
    pub fn benchmark_size(self, split: Split) -> Option<usize> {
        match (self, split) {
            (Self::Up, _) => None,
            (_, Split::Train) => Some(25_000),
            (_, Split::Test) => Some(9_000),
        }
    }
}

impl FromStr for DigitDataset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|d| d.dir_name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Value(format!("unknown digits dataset `{s}` (expected mt, syn, svhn, mm or up)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn dir_name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

/// An n-dimensional `u8` array as stored in an IDX file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxArray {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

pub fn read_idx(path: &Path) -> Result<IdxArray> {
    let bytes = fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingData(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    let bad = |reason: &str| Error::MalformedData {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    if bytes.len() < 4 || bytes[0] != 0 || bytes[1] != 0 {
        return Err(bad("missing IDX magic"));
    }
    if bytes[2] != 0x08 {
        return Err(bad("only unsigned byte IDX payloads are supported"));
    }
    let ndims = bytes[3] as usize;
    let header = 4 + 4 * ndims;
    if bytes.len() < header {
        return Err(bad("truncated header"));
    }
    let dims: Vec<usize> = (0..ndims)
        .map(|i| u32::from_be_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize)
        .collect();
    let count: usize = dims.iter().product();
    if bytes.len() - header != count {
        return Err(bad(&format!("expected {count} payload bytes, found {}", bytes.len() - header)));
    }
    Ok(IdxArray {
        dims,
        data: bytes[header..].to_vec(),
    })
}

pub fn write_idx(path: &Path, array: &IdxArray) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    f.write_all(&[0, 0, 0x08, array.dims.len() as u8])?;
    for &d in &array.dims {
        f.write_all(&(d as u32).to_be_bytes())?;
    }
    f.write_all(&array.data)?;
    f.flush()?;
    Ok(())
}

fn split_dir(root: &Path, dataset: DigitDataset, split: Split) -> PathBuf {
    root.join(dataset.dir_name()).join(split.dir_name())
}

/// Loads one split of a digits dataset, subsampled deterministically under `seed`.
///
/// Without `limit` the benchmark split size is drawn (25000 train / 9000 test,
/// USPS whole). With `limit` the draw is balanced across classes.
pub fn load_digits(root: &Path, dataset: DigitDataset, split: Split, limit: Option<usize>, seed: u64) -> Result<Dataset> {
    let shape = vec![3, DIGIT_SIDE, DIGIT_SIDE];
    if limit == Some(0) {
        return Ok(Dataset::empty(shape));
    }
    let dir = split_dir(root, dataset, split);
    let images_path = dir.join("images.idx");
    let labels_path = dir.join("labels.idx");
    let images = read_idx(&images_path)?;
    let labels = read_idx(&labels_path)?;

    let n = labels.data.len();
    if labels.dims.len() != 1 {
        return Err(Error::MalformedData {
            path: labels_path,
            reason: format!("labels must be one-dimensional, got {:?}", labels.dims),
        });
    }
    let (h, w, channels) = match images.dims.as_slice() {
        [m, h, w] if *m == n => (*h, *w, 1),
        [m, h, w, 3] if *m == n => (*h, *w, 3),
        other => {
            return Err(Error::MalformedData {
                path: images_path,
                reason: format!("images shaped {other:?} do not match {n} labels"),
            })
        }
    };
    if let Some(&y) = labels.data.iter().find(|&&y| y > 9) {
        return Err(Error::MalformedData {
            path: labels_path,
            reason: format!("label {y} outside 0..=9"),
        });
    }

    let cap = dataset.benchmark_size(split).map_or(n, |s| s.min(n));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = match limit {
        Some(l) => balanced_subsample(&labels.data, l.min(cap), &mut rng),
        None => {
            let mut all: Vec<usize> = (0..n).collect();
            all.shuffle(&mut rng);
            all.truncate(cap);
            all
        }
    };
    rows.sort_unstable();

    let pixels = h * w * channels;
    let plane = DIGIT_SIDE * DIGIT_SIDE;
    let mut inputs = Vec::with_capacity(rows.len() * 3 * plane);
    let mut out_labels = Vec::with_capacity(rows.len());
    for &r in &rows {
        let raw = &images.data[r * pixels..(r + 1) * pixels];
        let rgb = to_rgb32(raw, h, w, channels);
        for c in 0..3 {
            inputs.extend(rgb.pixels().map(|p| p.0[c] as f32 / 255.0));
        }
        out_labels.push(labels.data[r] as i64);
    }
    Dataset::new(inputs, shape, out_labels)
}

fn to_rgb32(raw: &[u8], h: usize, w: usize, channels: usize) -> RgbImage {
    let side = DIGIT_SIDE as u32;
    let rgb = if channels == 1 {
        let gray = GrayImage::from_raw(w as u32, h as u32, raw.to_vec()).expect("sized buffer");
        image::DynamicImage::ImageLuma8(gray).to_rgb8()
    } else {
        RgbImage::from_raw(w as u32, h as u32, raw.to_vec()).expect("sized buffer")
    };
    if h == DIGIT_SIDE && w == DIGIT_SIDE {
        rgb
    } else {
        imageops::resize(&rgb, side, side, FilterType::Triangle)
    }
}

/// Round-robin over classes, each class visited in a seeded random order.
fn balanced_subsample(labels: &[u8], count: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut by_class: BTreeMap<u8, Vec<usize>> = BTreeMap::new();
    for (i, &y) in labels.iter().enumerate() {
        by_class.entry(y).or_default().push(i);
    }
    for rows in by_class.values_mut() {
        rows.shuffle(rng);
    }
    let mut queues: Vec<std::vec::IntoIter<usize>> = by_class.into_values().map(Vec::into_iter).collect();
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let before = out.len();
        for q in queues.iter_mut() {
            if out.len() == count {
                break;
            }
            if let Some(i) = q.next() {
                out.push(i);
            }
        }
        if out.len() == before {
            break;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fake(root: &Path, ds: DigitDataset, split: Split, n: usize, side: usize, channels: usize) {
        let dir = split_dir(root, ds, split);
        let mut dims = vec![n, side, side];
        if channels == 3 {
            dims.push(3);
        }
        let per = side * side * channels;
        let data = (0..n * per).map(|i| ((i / per) % 251) as u8).collect();
        write_idx(&dir.join("images.idx"), &IdxArray { dims, data }).unwrap();
        let labels = (0..n).map(|i| (i % 10) as u8).collect();
        write_idx(&dir.join("labels.idx"), &IdxArray { dims: vec![n], data: labels }).unwrap();
    }

    #[test]
    fn idx_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.idx");
        let arr = IdxArray {
            dims: vec![2, 3],
            data: vec![1, 2, 3, 4, 5, 6],
        };
        write_idx(&p, &arr).unwrap();
        assert_eq!(read_idx(&p).unwrap(), arr);
    }

    #[test]
    fn missing_files_name_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_digits(dir.path(), DigitDataset::Mt, Split::Train, None, 0).unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, Error::MissingData(_)));
        assert!(msg.contains("mt") && msg.contains("train") && msg.contains("images.idx"), "{msg}");
    }

    #[test]
    fn zero_limit_is_empty_without_touching_disk() {
        let dir = tempfile::tempdir().unwrap();
        let d = load_digits(dir.path(), DigitDataset::Mt, Split::Train, Some(0), 0).unwrap();
        assert!(d.is_empty());
        assert_eq!(d.sample_shape, vec![3, 32, 32]);
    }

    #[test]
    fn mnist_train_draws_benchmark_size() {
        let dir = tempfile::tempdir().unwrap();
        fake(dir.path(), DigitDataset::Mt, Split::Train, 26_000, 28, 1);
        let d = load_digits(dir.path(), DigitDataset::Mt, Split::Train, None, 1).unwrap();
        assert_eq!(d.len(), 25_000);
        assert_eq!(d.sample_shape, vec![3, 32, 32]);
        assert!(d.inputs.iter().all(|&v| (0.0..=1.0).contains(&v)));
        // grayscale replicated into all three planes
        let s = d.sample(0);
        assert_eq!(&s[..1024], &s[1024..2048]);
        assert_eq!(&s[..1024], &s[2048..]);
    }

    #[test]
    fn usps_test_is_used_whole() {
        let dir = tempfile::tempdir().unwrap();
        fake(dir.path(), DigitDataset::Up, Split::Test, 1860, 16, 1);
        let d = load_digits(dir.path(), DigitDataset::Up, Split::Test, None, 0).unwrap();
        assert_eq!(d.len(), 1860);
    }

    #[test]
    fn limit_balances_classes_and_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        fake(dir.path(), DigitDataset::Svhn, Split::Train, 500, 32, 3);
        let a = load_digits(dir.path(), DigitDataset::Svhn, Split::Train, Some(100), 5).unwrap();
        let b = load_digits(dir.path(), DigitDataset::Svhn, Split::Train, Some(100), 5).unwrap();
        assert_eq!(a, b);
        let mut counts = [0; 10];
        for &y in &a.labels {
            counts[y as usize] += 1;
        }
        assert!(counts.iter().all(|&c| c == 10));
    }

    #[test]
    fn rejects_bad_labels() {
        let dir = tempfile::tempdir().unwrap();
        let sd = split_dir(dir.path(), DigitDataset::Syn, Split::Test);
        write_idx(&sd.join("images.idx"), &IdxArray { dims: vec![1, 32, 32], data: vec![0; 1024] }).unwrap();
        write_idx(&sd.join("labels.idx"), &IdxArray { dims: vec![1], data: vec![10] }).unwrap();
        let err = load_digits(dir.path(), DigitDataset::Syn, Split::Test, None, 0).unwrap_err();
        assert!(matches!(err, Error::MalformedData { .. }));
    }

    #[test]
    fn dataset_names_parse() {
        assert_eq!("SVHN".parse::<DigitDataset>().unwrap(), DigitDataset::Svhn);
        assert!("cifar".parse::<DigitDataset>().is_err());
    }
}
