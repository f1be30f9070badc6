//! Readers and writers for scenes (PLY), float maps (PFM), 8-bit images
//! (PNG), camera descriptors (JSON) and metric reports.
//!
//! Every multi-byte value is little-endian.

mod camera;
mod pfm;
mod ply;
mod png;
mod report;

pub use self::camera::{
    camera_from_json, camera_to_json, read_camera, read_camera_checked, write_camera,
    CameraDescriptor, RENORMALIZE_TOLERANCE,
};
pub use self::pfm::{decode_pfm, encode_pfm, read_depth_pfm, read_pfm, write_depth_pfm, write_pfm};
pub use self::ply::{
    decode_scene, encode_scene, read_scene, write_scene, SceneFileHeader, FORMAT_VERSION,
};
pub use self::png::{decode_png, encode_png, quantize, read_png, write_png};
pub use self::report::{format_report, parse_report, read_report, write_report, REPORT_HEADER};

use crate::synth::SynthScene;
use crate::{Error, Result};
use std::fs::{File, OpenOptions};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

pub(crate) fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::file(path, e))
}

/// Writes `bytes` to `path`, refusing to replace an existing file unless
/// `overwrite` is set.
pub(crate) fn write_bytes(path: &Path, bytes: &[u8], overwrite: bool) -> Result<()> {
    let mut opts = OpenOptions::new();
    opts.write(true);
    if overwrite {
        opts.create(true).truncate(true);
    } else {
        opts.create_new(true);
    }
    let f = opts.open(path).map_err(|e| Error::file(path, e))?;
    let mut w = BufWriter::new(f);
    w.write_all(bytes)
        .and_then(|_| w.flush())
        .map_err(|e| Error::file(path, e))
}

/// File names written by [`write_synth_bundle`].
pub const BUNDLE_FILES: [&str; 4] = ["depth.pfm", "camera.json", "image.png", "normals.pfm"];

/// Writes the depth map, camera, color image and ground-truth normals of a
/// synthetic scene into `dir`. Existing files are only replaced with
/// `overwrite`; in that case nothing is written if any file is present.
pub fn write_synth_bundle(scene: &SynthScene, dir: &Path, overwrite: bool) -> Result<Vec<PathBuf>> {
    let paths: Vec<PathBuf> = BUNDLE_FILES.iter().map(|f| dir.join(f)).collect();
    if !overwrite {
        if let Some(p) = paths.iter().find(|p| p.exists()) {
            return Err(Error::file(
                p,
                std::io::Error::new(
                    std::io::ErrorKind::AlreadyExists,
                    "file exists (pass --force to overwrite)",
                ),
            ));
        }
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
    write_bytes(&paths[0], &encode_pfm(&scene.depth.to_image())?, overwrite)?;
    write_bytes(
        &paths[1],
        camera_to_json(&scene.camera).as_bytes(),
        overwrite,
    )?;
    write_bytes(&paths[2], &encode_png(&scene.image)?, overwrite)?;
    write_bytes(&paths[3], &encode_pfm(&scene.normals_image())?, overwrite)?;
    Ok(paths)
}
