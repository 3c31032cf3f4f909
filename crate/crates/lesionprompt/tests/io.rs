use std::path::Path;

use lesionprompt::error::Error;
use lesionprompt::io::{self, nifti, rawpair, Format};
use lesionprompt_core::{BinaryMask, Error as CoreError, Grid, Volume};
use proptest::prelude::*;
use tempfile::tempdir;

fn patch(path: &Path, offset: usize, bytes: &[u8]) {
    let mut data = std::fs::read(path).unwrap();
    data[offset..offset + bytes.len()].copy_from_slice(bytes);
    std::fs::write(path, data).unwrap();
}

#[test]
fn rawpair_zero_volume() {
    let dir = tempdir().unwrap();
    let p = dir.path().join("z.json");
    std::fs::write(&p, r#"{"format":"rawpair","version":1,"dims":[4,4,4],"spacing":[1,1,1],"dtype":"f32le"}"#).unwrap();
    std::fs::write(dir.path().join("z.raw"), vec![0u8; 64 * 4]).unwrap();
    let v = io::load_volume(&p, Format::Rawpair).unwrap();
    assert_eq!(v.dims(), [4, 4, 4]);
    assert_eq!(v.data(), &[0.0; 64][..]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn rawpair_round_trip_is_bit_exact(values in proptest::collection::vec(-1e6f64..1e6, 512), sx in 0.1f64..5.0) {
        let dir = tempdir().unwrap();
        let grid = Grid::new([8, 8, 8], [sx, 1.0, 2.5]).unwrap();
        let v = Volume::new(grid, values).unwrap();
        let p = dir.path().join("v.json");
        io::write_volume(&v, &p, Format::Rawpair).unwrap();
        let back = io::load_volume(&p, Format::Rawpair).unwrap();
        prop_assert_eq!(back.grid(), v.grid());
        for (a, b) in back.data().iter().zip(v.data()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn nifti_round_trip_within_f32_step(values in proptest::collection::vec(-1e4f64..1e4, 512)) {
        let dir = tempdir().unwrap();
        let v = Volume::new(Grid::new([8, 8, 8], [1.0, 1.5, 3.0]).unwrap(), values).unwrap();
        let p = dir.path().join("v.nii");
        io::write_volume(&v, &p, Format::Nifti1).unwrap();
        let back = io::load_volume(&p, Format::Nifti1).unwrap();
        prop_assert_eq!(back.dims(), v.dims());
        prop_assert_eq!(back.spacing(), [1.0, 1.5, 3.0]);
        for (a, b) in back.data().iter().zip(v.data()) {
            prop_assert!((a - b).abs() <= f64::from(f32::EPSILON) * b.abs().max(1e-30));
        }
    }
}

#[test]
fn rawpair_f32_round_trip_matches_cast() {
    let dir = tempdir().unwrap();
    let v = Volume::from_fn(Grid::cube(5).unwrap(), |x, y, z| (x as f64) * 0.1 + (y * z) as f64 / 7.0).unwrap();
    let p = dir.path().join("v.json");
    rawpair::write_volume(&v, &p, rawpair::Dtype::F32Le).unwrap();
    let back = rawpair::read_volume(&p).unwrap();
    for (a, b) in back.data().iter().zip(v.data()) {
        assert_eq!(*a, f64::from(*b as f32));
    }
}

#[test]
fn masks_round_trip_in_both_formats() {
    let dir = tempdir().unwrap();
    let m = BinaryMask::from_fn(Grid::new([7, 5, 3], [1.0, 2.0, 0.5]).unwrap(), |x, y, z| (x + y * z) % 3 == 0);
    for format in [Format::Nifti1, Format::Rawpair] {
        let p = dir.path().join(format!("m.{}", format.extension()));
        io::write_mask(&m, &p, format).unwrap();
        assert_eq!(io::load_mask(&p, format).unwrap(), m);
        let raw = io::load_volume(&p, format).unwrap();
        assert!(raw.data().iter().all(|&v| v == 0.0 || v == 1.0));
    }
    let bytes = std::fs::read(dir.path().join("m.nii")).unwrap();
    assert_eq!(i16::from_le_bytes([bytes[70], bytes[71]]), nifti::DT_UINT8);
    assert_eq!(bytes.len(), 352 + 7 * 5 * 3);
}

fn nifti_file(dir: &Path) -> std::path::PathBuf {
    let p = dir.join("v.nii");
    io::write_volume(&Volume::filled(Grid::cube(4).unwrap(), 1.0), &p, Format::Nifti1).unwrap();
    p
}

#[test]
fn nifti_bad_magic_is_malformed_header() {
    let dir = tempdir().unwrap();
    let p = nifti_file(dir.path());
    patch(&p, 344, b"ni1\0");
    assert!(matches!(io::load_volume(&p, Format::Nifti1), Err(Error::MalformedHeader { .. })));
}

#[test]
fn nifti_truncated_and_big_endian_are_malformed() {
    let dir = tempdir().unwrap();
    let p = nifti_file(dir.path());
    let data = std::fs::read(&p).unwrap();
    std::fs::write(&p, &data[..200]).unwrap();
    assert!(matches!(io::load_volume(&p, Format::Nifti1), Err(Error::MalformedHeader { .. })));
    std::fs::write(&p, &data[..400]).unwrap();
    assert!(matches!(io::load_volume(&p, Format::Nifti1), Err(Error::MalformedHeader { .. })));
    let p = nifti_file(dir.path());
    patch(&p, 0, &348i32.to_be_bytes());
    match io::load_volume(&p, Format::Nifti1) {
        Err(Error::MalformedHeader { reason, .. }) => assert!(reason.contains("big-endian")),
        other => panic!("{other:?}"),
    }
}

#[test]
fn nifti_unsupported_datatype() {
    let dir = tempdir().unwrap();
    let p = nifti_file(dir.path());
    patch(&p, 70, &4i16.to_le_bytes());
    assert!(matches!(io::load_volume(&p, Format::Nifti1), Err(Error::UnsupportedDatatype { .. })));
}

#[test]
fn nifti_nonpositive_geometry() {
    let dir = tempdir().unwrap();
    let p = nifti_file(dir.path());
    patch(&p, 42, &0i16.to_le_bytes());
    assert!(matches!(io::load_volume(&p, Format::Nifti1), Err(Error::Core(CoreError::InvalidDims(_)))));
    let p = nifti_file(dir.path());
    patch(&p, 84, &(-1.0f32).to_le_bytes());
    assert!(matches!(io::load_volume(&p, Format::Nifti1), Err(Error::Core(CoreError::InvalidSpacing(_)))));
}

#[test]
fn nifti_non_finite_values() {
    let dir = tempdir().unwrap();
    let p = nifti_file(dir.path());
    patch(&p, 352 + 4 * 5, &f32::NAN.to_le_bytes());
    assert!(matches!(io::load_volume(&p, Format::Nifti1), Err(Error::Core(CoreError::NonFinite(5)))));
}

#[test]
fn degenerate_dims_are_rejected() {
    assert!(matches!(Grid::new([0, 4, 4], [1.0; 3]), Err(CoreError::InvalidDims(_))));
    let dir = tempdir().unwrap();
    let p = dir.path().join("z.json");
    std::fs::write(&p, r#"{"format":"rawpair","version":1,"dims":[0,4,4],"spacing":[1,1,1],"dtype":"u8"}"#).unwrap();
    std::fs::write(dir.path().join("z.raw"), []).unwrap();
    assert!(matches!(io::load_volume(&p, Format::Rawpair), Err(Error::Core(CoreError::InvalidDims(_)))));
}

#[test]
fn rawpair_header_errors() {
    let dir = tempdir().unwrap();
    let p = dir.path().join("z.json");
    std::fs::write(dir.path().join("z.raw"), vec![0u8; 8]).unwrap();
    let cases = [
        (r#"{"format":"rawpair","version":1,"dims":[2,2,2],"spacing":[1,1,1],"dtype":"u8","extra":1}"#, "header"),
        (r#"{"format":"raw","version":1,"dims":[2,2,2],"spacing":[1,1,1],"dtype":"u8"}"#, "header"),
        (r#"not json"#, "header"),
        (r#"{"format":"rawpair","version":1,"dims":[2,2,2],"spacing":[1,1,1],"dtype":"i16"}"#, "dtype"),
        (r#"{"format":"rawpair","version":1,"dims":[2,2,2],"spacing":[1,0,1],"dtype":"u8"}"#, "spacing"),
        (r#"{"format":"rawpair","version":1,"dims":[2,2,3],"spacing":[1,1,1],"dtype":"u8"}"#, "length"),
    ];
    for (text, kind) in cases {
        std::fs::write(&p, text).unwrap();
        let err = io::load_volume(&p, Format::Rawpair).unwrap_err();
        let ok = match kind {
            "header" => matches!(err, Error::MalformedHeader { .. }),
            "dtype" => matches!(err, Error::UnsupportedDatatype { .. }),
            "spacing" => matches!(err, Error::Core(CoreError::InvalidSpacing(_))),
            _ => matches!(err, Error::Core(CoreError::DataLength { .. })),
        };
        assert!(ok, "{text}: {err:?}");
    }
}

#[test]
fn format_from_extension() {
    assert_eq!(Format::from_path(Path::new("a/b.nii")).unwrap(), Format::Nifti1);
    assert_eq!(Format::from_path(Path::new("b.json")).unwrap(), Format::Rawpair);
    assert!(Format::from_path(Path::new("b.nii.gz")).is_err());
}
