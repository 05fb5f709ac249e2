mod common;

use std::io::Write;

use flate2::write::GzEncoder;
use flate2::Compression;
use pcnet::dataio::{
    encode_idx_images, encode_idx_labels, load_idx_images, load_idx_labels, load_split, parse_idx_images,
    parse_idx_labels, TRAIN_IMAGES, TRAIN_LABELS,
};
use pcnet::{Error, IdxError, Matrix};
use proptest::prelude::*;

proptest! {
    #[test]
    fn images_roundtrip(rows in 1usize..6, cols in 1usize..6, pixels in prop::collection::vec(any::<u8>(), 1..200)) {
        let n = pixels.len() / (rows * cols);
        prop_assume!(n > 0);
        let px = &pixels[..n * rows * cols];
        let m = Matrix::from_fn(rows * cols, n, |f, i| px[i * rows * cols + f] as f64 / 255.0);
        let bytes = encode_idx_images(&m, rows, cols).unwrap();
        prop_assert_eq!(&bytes[16..], px);
        let back = parse_idx_images(&bytes).unwrap();
        prop_assert_eq!(back, m);
    }

    #[test]
    fn labels_roundtrip(labels in prop::collection::vec(0u8..10, 1..300)) {
        let bytes = encode_idx_labels(&labels);
        prop_assert_eq!(parse_idx_labels(&bytes).unwrap(), labels);
    }

    #[test]
    fn truncation_always_detected(labels in prop::collection::vec(0u8..10, 1..50), cut in 1usize..8) {
        let bytes = encode_idx_labels(&labels);
        let cut = cut.min(bytes.len());
        let is_truncated = matches!(
            parse_idx_labels(&bytes[..bytes.len() - cut]),
            Err(IdxError::Truncated { .. })
        );
        prop_assert!(is_truncated);
    }
}

#[test]
fn gzip_and_plain_files_load_identically() {
    let dir = tempfile::tempdir().unwrap();
    let split = common::synthetic_split("train", 7, 3);
    let img = encode_idx_images(&split.images, 28, 28).unwrap();
    let lbl = encode_idx_labels(&split.labels);
    std::fs::write(dir.path().join("plain-img"), &img).unwrap();
    let mut gz = GzEncoder::new(Vec::new(), Compression::default());
    gz.write_all(&img).unwrap();
    std::fs::write(dir.path().join("gz-img"), gz.finish().unwrap()).unwrap();
    std::fs::write(dir.path().join("lbl"), &lbl).unwrap();
    let a = load_idx_images(dir.path().join("plain-img")).unwrap();
    let b = load_idx_images(dir.path().join("gz-img")).unwrap();
    assert_eq!(a, b);
    assert_eq!(a, split.images);
    assert_eq!(load_idx_labels(dir.path().join("lbl")).unwrap(), split.labels);
}

#[test]
fn split_directory_roundtrip_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    common::write_dataset(dir.path(), 12, 5, 9);
    let train = load_split(dir.path(), true).unwrap();
    let test = load_split(dir.path(), false).unwrap();
    assert_eq!((train.len(), test.len()), (12, 5));
    assert_eq!(train.images, common::synthetic_split("train", 12, 9).images);

    std::fs::write(dir.path().join(TRAIN_LABELS), encode_idx_labels(&[1, 2, 3])).unwrap();
    let err = load_split(dir.path(), true).unwrap_err();
    assert!(matches!(err, Error::IdxFormat(IdxError::CountMismatch { images: 12, labels: 3 })), "{err}");

    let small = Matrix::zeros(4, 2);
    std::fs::write(dir.path().join(TRAIN_IMAGES), encode_idx_images(&small, 2, 2).unwrap()).unwrap();
    let err = load_split(dir.path(), true).unwrap_err().to_string();
    assert!(err.contains("2x2") && err.contains("28x28"), "{err}");

    let empty = tempfile::tempdir().unwrap();
    assert!(matches!(load_split(empty.path(), false), Err(Error::Dataset(_))));
}
