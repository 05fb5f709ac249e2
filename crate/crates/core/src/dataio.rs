//! MNIST-style IDX loading, one-hot targets and seeded minibatch plans.
//!
//! IDX files are big-endian: a `u32` magic (`0x00000803` for images,
//! `0x00000801` for labels), one `u32` per dimension, then unsigned bytes.
//! Gzip-compressed files are detected by their header and inflated first.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, IdxError, Result};
use crate::linalg::Matrix;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;
pub const NUM_CLASSES: usize = 10;
pub const IMAGE_SIDE: usize = 28;

const GZIP_HEADER: [u8; 2] = [0x1f, 0x8b];

/// Images as columns with pixel values in `[0, 1]`, plus their labels.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub name: String,
    pub images: Matrix,
    pub labels: Vec<u8>,
}

impl DatasetSplit {
    pub fn new(name: impl Into<String>, images: Matrix, labels: Vec<u8>) -> Result<Self> {
        if images.cols() != labels.len() {
            return Err(IdxError::CountMismatch {
                images: images.cols(),
                labels: labels.len(),
            }
            .into());
        }
        if let Some(v) = images.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Dataset(format!("pixel value {v} outside [0, 1]")));
        }
        if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l as usize >= NUM_CLASSES) {
            return Err(Error::Dataset(format!("label {l} at index {i} outside 0..{NUM_CLASSES}")));
        }
        Ok(DatasetSplit {
            name: name.into(),
            images,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn features(&self) -> usize {
        self.images.rows()
    }

    /// The first `n` samples (or all of them if there are fewer).
    pub fn truncated(&self, n: usize) -> Result<Self> {
        if n >= self.len() {
            return Ok(self.clone());
        }
        let idx: Vec<usize> = (0..n).collect();
        Ok(DatasetSplit {
            name: self.name.clone(),
            images: self.images.select_columns(&idx)?,
            labels: self.labels[..n].to_vec(),
        })
    }

    /// Images and one-hot targets for the given sample indices.
    pub fn batch(&self, indices: &[usize]) -> Result<(Matrix, Matrix, Vec<u8>)> {
        let x = self.images.select_columns(indices)?;
        let labels: Vec<u8> = indices.iter().map(|&i| self.labels[i]).collect();
        let y = one_hot(&labels, NUM_CLASSES)?;
        Ok((x, y, labels))
    }
}

fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    if raw.starts_with(&GZIP_HEADER) {
        let mut out = Vec::new();
        GzDecoder::new(&raw[..])
            .read_to_end(&mut out)
            .map_err(|e| Error::io(format!("decompressing {}", path.display()), e))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn u32(&mut self) -> std::result::Result<u32, IdxError> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], IdxError> {
        let avail = self.bytes.len() - self.pos;
        if avail < n {
            return Err(IdxError::Truncated {
                offset: self.bytes.len(),
                needed: n - avail,
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn finish(&self) -> std::result::Result<(), IdxError> {
        if self.pos != self.bytes.len() {
            return Err(IdxError::TrailingBytes {
                offset: self.pos,
                extra: self.bytes.len() - self.pos,
            });
        }
        Ok(())
    }
}

fn header(cur: &mut Cursor<'_>, expected: u32) -> std::result::Result<(), IdxError> {
    let found = cur.u32()?;
    if found != expected {
        return Err(IdxError::BadMagic { expected, found });
    }
    Ok(())
}

/// Decode an IDX image container into a `(rows*cols) x N` matrix scaled by
/// `1/255`, one column per image.
pub fn parse_idx_images(bytes: &[u8]) -> std::result::Result<Matrix, IdxError> {
    let mut cur = Cursor { bytes, pos: 0 };
    header(&mut cur, IMAGE_MAGIC)?;
    let n = cur.u32()? as usize;
    let rows = cur.u32()? as usize;
    let cols = cur.u32()? as usize;
    let features = rows * cols;
    let pixels = cur.take(n * features)?;
    cur.finish()?;
    if n == 0 || features == 0 {
        return Err(IdxError::Empty);
    }
    // stored image-major; transpose into feature-major columns
    let mut data = vec![0.0; features * n];
    for (i, img) in pixels.chunks_exact(features).enumerate() {
        for (f, &px) in img.iter().enumerate() {
            data[f * n + i] = f64::from(px) / 255.0;
        }
    }
    Ok(Matrix::new(features, n, data).expect("sizes checked"))
}

pub fn parse_idx_labels(bytes: &[u8]) -> std::result::Result<Vec<u8>, IdxError> {
    let mut cur = Cursor { bytes, pos: 0 };
    header(&mut cur, LABEL_MAGIC)?;
    let n = cur.u32()? as usize;
    let start = cur.pos;
    let labels = cur.take(n)?.to_vec();
    cur.finish()?;
    if n == 0 {
        return Err(IdxError::Empty);
    }
    if let Some((i, &v)) = labels.iter().enumerate().find(|(_, &v)| v as usize >= NUM_CLASSES) {
        return Err(IdxError::LabelOutOfRange {
            offset: start + i,
            value: v,
            classes: NUM_CLASSES,
        });
    }
    Ok(labels)
}

fn with_path<T>(path: &Path, r: std::result::Result<T, IdxError>) -> Result<T> {
    r.map_err(|source| Error::Idx {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_idx_images(path: impl AsRef<Path>) -> Result<Matrix> {
    let path = path.as_ref();
    let bytes = read_maybe_gz(path)?;
    with_path(path, parse_idx_images(&bytes))
}

pub fn load_idx_labels(path: impl AsRef<Path>) -> Result<Vec<u8>> {
    let path = path.as_ref();
    let bytes = read_maybe_gz(path)?;
    with_path(path, parse_idx_labels(&bytes))
}

/// Encode images (one column each, values in `[0, 1]`) as an IDX container.
/// Pixels are rounded to the nearest byte.
pub fn encode_idx_images(images: &Matrix, rows: usize, cols: usize) -> Result<Vec<u8>> {
    if rows * cols != images.rows() {
        return Err(Error::Dataset(format!(
            "{rows}x{cols} images need {} features, matrix has {}",
            rows * cols,
            images.rows()
        )));
    }
    let n = images.cols();
    let mut out = Vec::with_capacity(16 + n * rows * cols);
    for v in [IMAGE_MAGIC, n as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    for i in 0..n {
        for f in 0..rows * cols {
            out.push((images.get(f, i).clamp(0.0, 1.0) * 255.0).round() as u8);
        }
    }
    Ok(out)
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

pub fn one_hot(labels: &[u8], classes: usize) -> Result<Matrix> {
    if labels.is_empty() {
        return Err(Error::Dataset("no labels to encode".into()));
    }
    let mut m = Matrix::zeros(classes, labels.len());
    for (j, &l) in labels.iter().enumerate() {
        if l as usize >= classes {
            return Err(Error::Dataset(format!("label {l} at index {j} outside 0..{classes}")));
        }
        m.set(l as usize, j, 1.0);
    }
    Ok(m)
}

/// Standard file names inside a data directory. Each may also carry a
/// `.gz` suffix.
pub const TRAIN_IMAGES: &str = "train-images-idx3-ubyte";
pub const TRAIN_LABELS: &str = "train-labels-idx1-ubyte";
pub const TEST_IMAGES: &str = "t10k-images-idx3-ubyte";
pub const TEST_LABELS: &str = "t10k-labels-idx1-ubyte";

fn locate(dir: &Path, stem: &str) -> Result<PathBuf> {
    for cand in [dir.join(stem), dir.join(format!("{stem}.gz"))] {
        if cand.is_file() {
            return Ok(cand);
        }
    }
    Err(Error::Dataset(format!(
        "neither {stem} nor {stem}.gz found in {}",
        dir.display()
    )))
}

/// Load one split from a directory holding the standard IDX file names.
/// Images must be 28x28.
pub fn load_split(dir: impl AsRef<Path>, train: bool) -> Result<DatasetSplit> {
    let dir = dir.as_ref();
    let (img, lbl, name) = if train {
        (TRAIN_IMAGES, TRAIN_LABELS, "train")
    } else {
        (TEST_IMAGES, TEST_LABELS, "test")
    };
    let img_path = locate(dir, img)?;
    let bytes = read_maybe_gz(&img_path)?;
    if bytes.len() >= 16 {
        let rows = u32::from_be_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]) as usize;
        let cols = u32::from_be_bytes([bytes[12], bytes[13], bytes[14], bytes[15]]) as usize;
        if (rows, cols) != (IMAGE_SIDE, IMAGE_SIDE) {
            return with_path(
                &img_path,
                Err(IdxError::DimMismatch {
                    rows,
                    cols,
                    expected_rows: IMAGE_SIDE,
                    expected_cols: IMAGE_SIDE,
                }),
            );
        }
    }
    let images = with_path(&img_path, parse_idx_images(&bytes))?;
    let labels = load_idx_labels(locate(dir, lbl)?)?;
    if images.cols() != labels.len() {
        return Err(IdxError::CountMismatch {
            images: images.cols(),
            labels: labels.len(),
        }
        .into());
    }
    DatasetSplit::new(name, images, labels)
}

/// Seeded per-epoch shuffling. Epoch `k` uses ChaCha8 stream `k + 1` of
/// the run seed, so permutations are reproducible and differ across
/// epochs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchPlan {
    pub batch_size: usize,
    pub seed: u64,
}

impl BatchPlan {
    pub fn new(batch_size: usize, seed: u64) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        Ok(BatchPlan { batch_size, seed })
    }

    pub fn permutation(&self, epoch: usize, n: usize) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(epoch as u64 + 1);
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng);
        idx
    }

    /// Minibatches for one epoch; the final short batch is kept.
    pub fn batches(&self, epoch: usize, n: usize) -> Vec<Vec<usize>> {
        self.permutation(epoch, n)
            .chunks(self.batch_size)
            .map(<[usize]>::to_vec)
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image_bytes(n: u32, rows: u32, cols: u32, pixels: &[u8]) -> Vec<u8> {
        let mut b = Vec::new();
        for v in [IMAGE_MAGIC, n, rows, cols] {
            b.extend_from_slice(&v.to_be_bytes());
        }
        b.extend_from_slice(pixels);
        b
    }

    #[test]
    fn pixel_scaling() {
        let m = parse_idx_images(&image_bytes(2, 1, 2, &[255, 0, 51, 102])).unwrap();
        assert_eq!(m.shape(), (2, 2));
        assert_eq!(m.get(0, 0), 1.0);
        assert_eq!(m.get(1, 0), 0.0);
        assert_eq!(m.get(0, 1), 0.2);
        assert_eq!(m.get(1, 1), 0.4);
    }

    #[test]
    fn bad_magic_rejected() {
        let mut b = image_bytes(1, 1, 1, &[0]);
        b[3] = 0x01;
        assert_eq!(
            parse_idx_images(&b),
            Err(IdxError::BadMagic {
                expected: IMAGE_MAGIC,
                found: 0x0801
            })
        );
        b[3] = 0x05;
        assert!(matches!(parse_idx_labels(&b), Err(IdxError::BadMagic { found: 0x0805, .. })));
    }

    #[test]
    fn truncation_and_trailing_bytes_reported_with_offsets() {
        let b = image_bytes(3, 2, 2, &[1; 10]);
        assert_eq!(parse_idx_images(&b), Err(IdxError::Truncated { offset: 26, needed: 2 }));
        let b = image_bytes(1, 1, 2, &[1, 2, 3]);
        assert_eq!(parse_idx_images(&b), Err(IdxError::TrailingBytes { offset: 18, extra: 1 }));
        assert!(matches!(parse_idx_images(&[0, 0]), Err(IdxError::Truncated { .. })));
    }

    #[test]
    fn labels_parse_and_validate() {
        let ok = encode_idx_labels(&[7, 0, 9]);
        assert_eq!(parse_idx_labels(&ok).unwrap(), vec![7, 0, 9]);
        let bad = encode_idx_labels(&[1, 12]);
        assert_eq!(
            parse_idx_labels(&bad),
            Err(IdxError::LabelOutOfRange {
                offset: 9,
                value: 12,
                classes: 10
            })
        );
    }

    #[test]
    fn split_requires_matching_counts() {
        assert!(matches!(
            DatasetSplit::new("x", Matrix::zeros(4, 3), vec![1, 2]),
            Err(Error::IdxFormat(IdxError::CountMismatch { images: 3, labels: 2 }))
        ));
    }

    #[test]
    fn one_hot_examples() {
        let m = one_hot(&[0, 3, 9, 3], 10).unwrap();
        assert_eq!(m.shape(), (10, 4));
        assert_eq!(m.get(0, 0), 1.0);
        assert_eq!((0..10).map(|r| m.get(r, 0)).sum::<f64>(), 1.0);
        for c in 0..4 {
            assert_eq!((0..10).map(|r| m.get(r, c)).sum::<f64>(), 1.0);
        }
        assert_eq!(m.argmax_columns(), vec![0, 3, 9, 3]);
        assert!(one_hot(&[10], 10).is_err());
    }

    #[test]
    fn batch_plan_is_reproducible_and_covers_everything() {
        let plan = BatchPlan::new(7, 42).unwrap();
        assert_eq!(plan.permutation(3, 50), plan.permutation(3, 50));
        assert_ne!(plan.permutation(0, 50), plan.permutation(1, 50));
        let batches = plan.batches(2, 50);
        assert_eq!(batches.len(), 8);
        assert_eq!(batches.last().unwrap().len(), 1);
        let mut seen: Vec<usize> = batches.concat();
        seen.sort_unstable();
        assert_eq!(seen, (0..50).collect::<Vec<_>>());
        assert!(BatchPlan::new(0, 1).is_err());
    }
}
