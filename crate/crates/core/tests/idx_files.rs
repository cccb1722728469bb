use std::path::Path;

use trgp::bench::idx::{encode_images, encode_labels, load_idx, load_mnist, parse_images, IdxError};

fn write(dir: &Path, name: &str, bytes: &[u8]) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, bytes).unwrap();
    p
}

#[test]
fn two_image_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let a: Vec<u8> = (0..6).map(|i| i * 51).collect();
    let b: Vec<u8> = vec![255, 0, 255, 0, 255, 0];
    let img = write(dir.path(), "img", &encode_images(2, 3, &[a.clone(), b]));
    let lab = write(dir.path(), "lab", &encode_labels(&[7, 3]));
    let d = load_idx(&img, &lab).unwrap();
    assert_eq!((d.len(), d.dim()), (2, 6));
    assert_eq!(d.labels(), vec![7, 3]);
    let (x, _) = d.all();
    for (j, &p) in a.iter().enumerate() {
        assert_eq!(x.get(0, j), f64::from(p) / 255.0);
    }
    assert_eq!(x.row(1), &[1.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
}

#[test]
fn rejects_wrong_magic() {
    let mut bytes = encode_images(1, 1, &[vec![0]]);
    bytes[..4].copy_from_slice(&2052u32.to_be_bytes());
    match parse_images(Path::new("x"), &bytes) {
        Err(IdxError::BadMagic { found, expected, .. }) => assert_eq!((found, expected), (2052, 2051)),
        other => panic!("{other:?}"),
    }
}

#[test]
fn rejects_truncated_file() {
    let bytes = encode_images(2, 2, &[vec![1, 2, 3, 4], vec![5, 6, 7, 8]]);
    let err = parse_images(Path::new("x"), &bytes[..bytes.len() - 1]).unwrap_err();
    assert!(matches!(err, IdxError::TruncatedFile { needed: 24, have: 23, .. }), "{err:?}");
    let err = parse_images(Path::new("x"), &bytes[..10]).unwrap_err();
    assert!(matches!(err, IdxError::TruncatedFile { .. }));
}

#[test]
fn rejects_count_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let img = write(dir.path(), "img", &encode_images(1, 2, &[vec![1, 2], vec![3, 4]]));
    let lab = write(dir.path(), "lab", &encode_labels(&[1]));
    let err = load_idx(&img, &lab).unwrap_err();
    assert!(matches!(err, IdxError::CountMismatch { images: 2, labels: 1 }), "{err:?}");
}

#[test]
fn missing_directory_is_an_io_error() {
    let err = load_mnist(Path::new("/nonexistent/mnist")).unwrap_err();
    assert!(matches!(err, IdxError::Io { .. }));
    assert!(err.to_string().contains("train-images-idx3-ubyte"));
}
