//! Scene bundle directories:
//!
//! ```text
//! rgb.ppm    P6, 8-bit
//! depth.pgm  P5, 16-bit big-endian millimeters, 0 = no reading
//! mask.pgm   P5, 8-bit, 255 = object
//! prior.pgm  optional P5, 8-bit, weight = value / 255
//! meta.json  intrinsics, optional pose, symmetry prior, units
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::netpbm::{Image, Pixels};
use super::{parse_json, read_file, to_json, write_file, IntrinsicsRecord, PoseRecord, SymmetryRecord};
use crate::error::{invalid, parse_error, Result};
use crate::geometry::{Intrinsics, Pose, SymmetryPrior};
use crate::observation::Observation;

pub const UNITS: &str = "mm-depth/m-pose";
pub const RGB_FILE: &str = "rgb.ppm";
pub const DEPTH_FILE: &str = "depth.pgm";
pub const MASK_FILE: &str = "mask.pgm";
pub const PRIOR_FILE: &str = "prior.pgm";
pub const META_FILE: &str = "meta.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleMeta {
    pub units: String,
    pub intrinsics: IntrinsicsRecord,
    /// Object-to-camera pose; query bundles leave it out.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pose: Option<PoseRecord>,
    pub symmetry: SymmetryRecord,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bundle {
    pub observation: Observation<f64>,
    pub pose: Option<Pose<f64>>,
    pub symmetry: SymmetryPrior<f64>,
    pub intrinsics: Intrinsics<f64>,
}

fn image(dir: &Path, name: &str) -> Result<Image> {
    Image::decode(&read_file(&dir.join(name))?, name)
}

fn check_size(img: &Image, k: &Intrinsics<f64>, name: &str) -> Result<()> {
    if img.width != k.width || img.height != k.height {
        return Err(parse_error(
            name,
            0,
            format!("image is {}x{}, intrinsics say {}x{}", img.width, img.height, k.width, k.height),
        ));
    }
    Ok(())
}

fn gray8(img: Image, name: &str) -> Result<Vec<u8>> {
    match img.pixels {
        Pixels::Gray8(d) if img.maxval == 255 => Ok(d),
        _ => Err(parse_error(name, 0, "expected an 8-bit graymap with maxval 255")),
    }
}

pub fn load_bundle(dir: &Path) -> Result<Bundle> {
    let text = read_file(&dir.join(META_FILE))?;
    let text = String::from_utf8(text).map_err(|e| parse_error(META_FILE, e.utf8_error().valid_up_to(), "invalid UTF-8"))?;
    let meta: BundleMeta = parse_json(&text, META_FILE)?;
    if meta.units != UNITS {
        let at = text.find(&format!("\"{}\"", meta.units)).unwrap_or(0);
        return Err(parse_error(META_FILE, at, format!("units must be \"{UNITS}\"")));
    }
    let k = meta.intrinsics.to_intrinsics()?;
    let pose = meta.pose.map(|p| p.to_pose()).transpose()?;
    let symmetry = meta.symmetry.to_prior()?;

    let rgb = image(dir, RGB_FILE)?;
    check_size(&rgb, &k, RGB_FILE)?;
    let Pixels::Rgb8(rgb) = rgb.pixels else {
        return Err(parse_error(RGB_FILE, 0, "expected a P6 pixmap"));
    };

    let depth = image(dir, DEPTH_FILE)?;
    check_size(&depth, &k, DEPTH_FILE)?;
    let depth: Vec<Option<f64>> = match depth.pixels {
        Pixels::Gray16(d) => d.iter().map(|&mm| (mm > 0).then(|| mm as f64 / 1000.0)).collect(),
        Pixels::Gray8(d) => d.iter().map(|&mm| (mm > 0).then(|| mm as f64 / 1000.0)).collect(),
        Pixels::Rgb8(_) => return Err(parse_error(DEPTH_FILE, 0, "expected a P5 graymap")),
    };

    let mask = image(dir, MASK_FILE)?;
    check_size(&mask, &k, MASK_FILE)?;
    let mask: Vec<bool> = gray8(mask, MASK_FILE)?.iter().map(|&m| m == 255).collect();

    let prior_path = dir.join(PRIOR_FILE);
    let prior = if prior_path.exists() {
        let img = image(dir, PRIOR_FILE)?;
        check_size(&img, &k, PRIOR_FILE)?;
        Some(gray8(img, PRIOR_FILE)?.iter().map(|&w| w as f64 / 255.0).collect())
    } else {
        None
    };

    let observation = Observation::from_depth(&k, rgb, &depth, &mask, prior)?;
    Ok(Bundle { observation, pose, symmetry, intrinsics: k })
}

/// Quantizes to millimeters. Valid pixels keep at least 1 mm so validity survives.
pub fn write_bundle(dir: &Path, bundle: &Bundle) -> Result<()> {
    let k = &bundle.intrinsics;
    let obs = &bundle.observation;
    if obs.width() != k.width || obs.height() != k.height {
        return Err(invalid("observation does not match intrinsics"));
    }
    let mut depth = Vec::with_capacity(k.pixel_count());
    for (p, &ok) in obs.xyz.iter().zip(&obs.valid) {
        if !ok {
            depth.push(0u16);
            continue;
        }
        let mm = (p.z * 1000.0).round();
        if !(mm <= 65535.0) {
            return Err(invalid("depth exceeds the 16-bit millimeter range"));
        }
        depth.push((mm as u16).max(1));
    }
    let mask: Vec<u8> = obs.valid.iter().map(|&v| if v { 255 } else { 0 }).collect();

    std::fs::create_dir_all(dir).map_err(|e| super::io_error(dir, e))?;
    let (w, h) = (k.width, k.height);
    write_file(&dir.join(RGB_FILE), &Image::rgb8(w, h, obs.rgb.clone()).encode())?;
    write_file(&dir.join(DEPTH_FILE), &Image::gray16(w, h, depth).encode())?;
    write_file(&dir.join(MASK_FILE), &Image::gray8(w, h, mask).encode())?;
    let prior_path = dir.join(PRIOR_FILE);
    match &obs.prior {
        Some(prior) => {
            let bytes: Vec<u8> = prior.iter().map(|&x| (x * 255.0).round().clamp(0.0, 255.0) as u8).collect();
            write_file(&prior_path, &Image::gray8(w, h, bytes).encode())?;
        }
        None if prior_path.exists() => std::fs::remove_file(&prior_path).map_err(|e| super::io_error(&prior_path, e))?,
        None => {}
    }
    let meta = BundleMeta {
        units: UNITS.to_string(),
        intrinsics: k.into(),
        pose: bundle.pose.as_ref().map(PoseRecord::from),
        symmetry: (&bundle.symmetry).into(),
    };
    write_file(&dir.join(META_FILE), to_json(&meta).as_bytes())
}
