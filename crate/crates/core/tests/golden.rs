//! Byte-exact file formats pinned against committed files. Set
//! `REFPOSE_BLESS=1` to rewrite them after an intentional format change.

use std::path::{Path, PathBuf};

use refpose::io::bundle::{DEPTH_FILE, MASK_FILE, META_FILE, PRIOR_FILE, RGB_FILE};
use refpose::io::netpbm::{Image, Pixels};
use refpose::io::{load_bundle, write_bundle, Bundle};
use refpose::{Intrinsics, Observation, Pose, Rotation, SymmetryAxis, SymmetryPrior, Vec3};

fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/bundle")
}

/// Exact entries keep the golden JSON independent of the platform's libm.
fn quarter_turn() -> Rotation<f64> {
    Rotation::from_row_major(&[0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0], 0.0).unwrap()
}

/// A 4×3 view with a hole, a masked-out pixel and a graded prior.
fn tiny_bundle() -> Bundle {
    let k = Intrinsics::new(100.0, 100.0, 1.5, 1.0, 4, 3).unwrap();
    let rgb: Vec<[u8; 3]> = (0..12u8).map(|i| [i * 20, 255 - i * 20, i]).collect();
    let depth: Vec<Option<f64>> = (0..12).map(|i| (i != 5).then(|| 0.5 + 0.25 * i as f64)).collect();
    let mask: Vec<bool> = (0..12).map(|i| i != 0).collect();
    let prior: Vec<f64> = (0..12).map(|i| i as f64 / 11.0).collect();
    Bundle {
        observation: Observation::from_depth(&k, rgb, &depth, &mask, Some(prior)).unwrap(),
        pose: Some(Pose::new(quarter_turn(), Vec3::new(0.01, -0.02, 0.6))),
        symmetry: SymmetryPrior::new(SymmetryAxis::X, 0.0, 0.125).unwrap(),
        intrinsics: k,
    }
}

#[test]
fn writer_matches_golden_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    write_bundle(tmp.path(), &tiny_bundle()).unwrap();
    let golden = golden_dir();
    if std::env::var_os("REFPOSE_BLESS").is_some() {
        write_bundle(&golden, &tiny_bundle()).unwrap();
    }
    for f in [RGB_FILE, DEPTH_FILE, MASK_FILE, PRIOR_FILE, META_FILE] {
        let want = std::fs::read(golden.join(f)).unwrap_or_else(|e| panic!("{f}: {e}"));
        assert_eq!(std::fs::read(tmp.path().join(f)).unwrap(), want, "{f}");
    }
}

#[test]
fn golden_depth_is_big_endian_millimeters() {
    let bytes = std::fs::read(golden_dir().join(DEPTH_FILE)).unwrap();
    assert!(bytes.starts_with(b"P5\n4 3\n65535\n"));
    let raster = &bytes[bytes.len() - 24..];
    // Pixel 0 is masked out, pixel 1 holds 750 mm = 0x02ee.
    assert_eq!(&raster[..4], &[0x00, 0x00, 0x02, 0xee]);
    let img = Image::decode(&bytes, DEPTH_FILE).unwrap();
    let Pixels::Gray16(mm) = img.pixels else { panic!("16-bit depth expected") };
    assert_eq!(mm[5], 0);
    assert_eq!(mm[11], 3250);
}

#[test]
fn golden_bundle_loads() {
    let b = load_bundle(&golden_dir()).unwrap();
    let want = tiny_bundle();
    assert_eq!(b.observation.valid, want.observation.valid);
    assert_eq!(b.observation.rgb, want.observation.rgb);
    assert_eq!(b.pose, want.pose);
    assert_eq!(b.intrinsics, want.intrinsics);
    let i = b.observation.index(3, 2);
    assert_eq!(b.observation.xyz[i], Vec3::new(3.25 * 1.5 / 100.0, 3.25 * 1.0 / 100.0, 3.25));
}
