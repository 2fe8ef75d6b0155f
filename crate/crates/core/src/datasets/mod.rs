//! Dataset ingestion and preparation.
//!
//! A raw sequence directory holds per-frame images named by frame number and
//! an optional `poses.txt`:
//!
//! - cylindrical input: `color/000123.ppm`, optional `depth/000123.pfm`
//!   (radial depth);
//! - cube-map input: `cube/000123_front.ppm` … `cube/000123_down.ppm`,
//!   optional planar depth `cube/000123_front.pfm` …;
//! - equirectangular input: `equirect/000123.ppm`.
//!
//! [`prepare`] turns such a directory into cylindrical frames at the output
//! resolution, drops static frames, and writes a [`SequenceManifest`].

pub mod cubemap;
pub mod io;
pub mod manifest;
pub mod prep;
pub mod synthetic;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

pub use cubemap::{stitch_cubemap, CubeFace, CubeFaceSet, Stitched};
pub use io::{
    read_image, read_pfm, read_poses, read_snippet_poses, write_image, write_pfm, write_poses, write_snippet_poses,
    SnippetPoses,
};
pub use manifest::{make_sequences, FrameRecord, SequenceManifest, SnippetRecord, Split};
pub use prep::{crop_fov, equirect_to_cyl, filter_static, resize, STATIC_TAU};
pub use synthetic::{render_sequence, Scene, SceneKind, SyntheticSequence};

use crate::camera::{CylCamera, Point3};
use crate::error::{Error, Result};
use crate::synth::Pose6;
use crate::tensor::Tensor;

/// Projection of the raw frames handed to [`prepare`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SourceKind {
    Cylindrical,
    /// Cube faces with the given horizontal field of view in degrees.
    Cubemap(f64),
    Equirect,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrepareOptions {
    pub source: SourceKind,
    pub camera: CylCamera,
    pub tau: f64,
    pub fractions: [f64; 3],
    pub seed: u64,
}

fn frame_name(index: usize) -> String {
    format!("{index:06}")
}

/// Frame numbers of files `dir/<number><suffix>`, sorted.
fn list_frames(dir: &Path, suffix: &str) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(stem) = name.strip_suffix(suffix) {
            if let Ok(n) = stem.parse::<usize>() {
                out.push(n);
            }
        }
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

/// Writes a rendered sequence in the raw cylindrical layout.
pub fn write_sequence(dir: &Path, seq: &SyntheticSequence) -> Result<()> {
    for sub in ["color", "depth"] {
        fs::create_dir_all(dir.join(sub)).map_err(|e| Error::io(dir.join(sub), e))?;
    }
    seq.images
        .par_iter()
        .zip(seq.depths.par_iter())
        .enumerate()
        .try_for_each(|(k, (img, depth))| -> Result<()> {
            write_image(dir.join("color").join(format!("{}.ppm", frame_name(k))), img)?;
            write_pfm(dir.join("depth").join(format!("{}.pfm", frame_name(k))), depth)
        })?;
    let poses: Vec<(usize, Pose6)> = seq.poses.iter().copied().enumerate().collect();
    write_poses(dir.join("poses.txt"), &poses)
}

fn load_frame(input: &Path, index: usize, opts: &PrepareOptions) -> Result<(Tensor, Option<Tensor>)> {
    let cam = &opts.camera;
    let name = frame_name(index);
    match opts.source {
        SourceKind::Cylindrical => {
            let img = read_image(input.join("color").join(format!("{name}.ppm")))?;
            let depth_path = input.join("depth").join(format!("{name}.pfm"));
            let depth = depth_path.exists().then(|| read_pfm(&depth_path)).transpose()?;
            let img = if img.cols() == cam.width && img.rows() == cam.height {
                img
            } else {
                resize(&img, cam.height, cam.width, true)
            };
            let depth = depth.map(|d| {
                if d.cols() == cam.width && d.rows() == cam.height {
                    d
                } else {
                    resize(&d, cam.height, cam.width, true)
                }
            });
            Ok((img, depth))
        }
        SourceKind::Cubemap(fov) => {
            let dir = input.join("cube");
            let mut faces = Vec::with_capacity(6);
            let mut depths = Vec::with_capacity(6);
            for f in CubeFace::ALL {
                faces.push(read_image(dir.join(format!("{name}_{}.ppm", f.name())))?);
                let dp = dir.join(format!("{name}_{}.pfm", f.name()));
                if dp.exists() {
                    depths.push(read_pfm(&dp)?);
                }
            }
            let depths = match depths.len() {
                0 => None,
                6 => Some(depths),
                n => return Err(Error::LengthMismatch(format!("frame {index}: {n} of 6 depth faces"))),
            };
            let st = stitch_cubemap(&CubeFaceSet::new(faces, depths, fov)?, cam)?;
            Ok((st.image, st.depth))
        }
        SourceKind::Equirect => {
            let img = read_image(input.join("equirect").join(format!("{name}.ppm")))?;
            Ok((equirect_to_cyl(&img, cam)?, None))
        }
    }
}

/// Converts a raw sequence directory into cylindrical frames plus manifest in
/// `output`, returning the manifest.
pub fn prepare(input: &Path, output: &Path, opts: &PrepareOptions) -> Result<SequenceManifest> {
    let indices = match opts.source {
        SourceKind::Cylindrical => list_frames(&input.join("color"), ".ppm")?,
        SourceKind::Cubemap(_) => list_frames(&input.join("cube"), "_front.ppm")?,
        SourceKind::Equirect => list_frames(&input.join("equirect"), ".ppm")?,
    };
    let pose_path = input.join("poses.txt");
    let poses: Option<BTreeMap<usize, Pose6>> = if pose_path.exists() {
        Some(read_poses(&pose_path)?.into_iter().collect())
    } else {
        None
    };
    let (kept, static_filter) = match &poses {
        Some(map) => {
            let positions: Vec<Point3> = indices
                .iter()
                .map(|i| {
                    map.get(i)
                        .map(|p| p.translation_vector())
                        .ok_or_else(|| Error::format("pose file", format!("no pose for frame {i}")))
                })
                .collect::<Result<_>>()?;
            let keep = filter_static(&positions, opts.tau);
            (keep.into_iter().map(|k| indices[k]).collect::<Vec<_>>(), Some(opts.tau))
        }
        None => (indices, None),
    };
    for sub in ["color", "depth"] {
        fs::create_dir_all(output.join(sub)).map_err(|e| Error::io(output.join(sub), e))?;
    }
    let records: Vec<FrameRecord> = kept
        .par_iter()
        .map(|&idx| -> Result<FrameRecord> {
            let (img, depth) = load_frame(input, idx, opts)?;
            let color = PathBuf::from("color").join(format!("{}.ppm", frame_name(idx)));
            write_image(output.join(&color), &img)?;
            let depth = match depth {
                Some(d) => {
                    let p = PathBuf::from("depth").join(format!("{}.pfm", frame_name(idx)));
                    write_pfm(output.join(&p), &d)?;
                    Some(p)
                }
                None => None,
            };
            Ok(FrameRecord {
                index: idx,
                color,
                depth,
                pose: poses.as_ref().and_then(|m| m.get(&idx).copied()),
            })
        })
        .collect::<Result<_>>()?;
    let mut manifest = make_sequences(opts.camera, records, opts.fractions, opts.seed)?;
    manifest.static_filter = static_filter;
    manifest.save(output.join("manifest.txt"))?;
    Ok(manifest)
}

/// A snippet loaded into memory.
#[derive(Debug, Clone)]
pub struct LoadedSnippet {
    pub target: Tensor,
    pub sources: Vec<Tensor>,
    pub target_depth: Option<Tensor>,
    /// Ground-truth target-to-source motion per source.
    pub gt_poses: Option<Vec<Pose6>>,
    /// Ground-truth camera positions of the three frames in reference coordinates.
    pub gt_positions: Option<Vec<Point3>>,
    pub frame_indices: [usize; 3],
}

/// Reads the frames of one snippet; `dir` is the manifest's directory.
pub fn load_snippet(dir: &Path, m: &SequenceManifest, s: &SnippetRecord) -> Result<LoadedSnippet> {
    let recs: Vec<&FrameRecord> = s.frames.iter().map(|&k| &m.frames[k]).collect();
    let imgs: Vec<Tensor> = recs
        .iter()
        .map(|r| read_image(dir.join(&r.color)))
        .collect::<Result<_>>()?;
    for img in &imgs {
        if img.rows() != m.camera.height || img.cols() != m.camera.width {
            return Err(Error::ShapeMismatch(format!(
                "frame is {}x{}, manifest camera is {}x{}",
                img.cols(),
                img.rows(),
                m.camera.width,
                m.camera.height
            )));
        }
    }
    let target_depth = recs[1].depth.as_ref().map(|p| read_pfm(dir.join(p))).transpose()?;
    let poses: Option<Vec<Pose6>> = recs.iter().map(|r| r.pose).collect();
    let gt_poses = poses
        .as_ref()
        .map(|p| vec![Pose6::relative(&p[1], &p[0]), Pose6::relative(&p[1], &p[2])]);
    let gt_positions = poses.map(|p| p.iter().map(|q| q.translation_vector()).collect());
    let mut it = imgs.into_iter();
    let first = it.next().expect("three frames");
    let target = it.next().expect("three frames");
    let last = it.next().expect("three frames");
    Ok(LoadedSnippet {
        target,
        sources: vec![first, last],
        target_depth,
        gt_poses,
        gt_positions,
        frame_indices: [recs[0].index, recs[1].index, recs[2].index],
    })
}
