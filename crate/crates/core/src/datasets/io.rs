//! On-disk formats: 8-bit portable pixmaps, portable float maps, pose lists.

use std::fs;
use std::io::Write;
use std::path::Path;

use image::{GrayImage, ImageReader, RgbImage};

use crate::error::{Error, Result};
use crate::synth::Pose6;
use crate::tensor::Tensor;

fn image_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Image {
        path: path.display().to_string(),
        detail: e.to_string(),
    }
}

/// Reads any portable anymap as an RGB tensor with values in `[0, 1]`.
pub fn read_image(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let img = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(|e| image_err(path, e))?
        .to_rgb8();
    let (w, h) = img.dimensions();
    let data = img.into_raw().into_iter().map(|v| f64::from(v) / 255.0).collect();
    Tensor::from_vec(h as usize, w as usize, 3, data)
}

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes a 1- or 3-channel tensor as an 8-bit PGM/PPM (values clamped to `[0, 1]`).
pub fn write_image(path: impl AsRef<Path>, img: &Tensor) -> Result<()> {
    let path = path.as_ref();
    let (w, h) = (img.cols() as u32, img.rows() as u32);
    let bytes: Vec<u8> = img.data().iter().map(|&v| quantize(v)).collect();
    let encoded = match img.chans() {
        3 => RgbImage::from_raw(w, h, bytes).map(|b| b.save_with_format(path, image::ImageFormat::Pnm)),
        1 => GrayImage::from_raw(w, h, bytes).map(|b| b.save_with_format(path, image::ImageFormat::Pnm)),
        k => {
            return Err(Error::ShapeMismatch(format!(
                "cannot encode {k}-channel image as 8-bit pixmap"
            )))
        }
    };
    encoded
        .ok_or_else(|| image_err(path, "buffer size mismatch"))?
        .map_err(|e| image_err(path, e))
}

/// Writes a 1- or 3-channel float map, little-endian, rows stored bottom-up.
pub fn write_pfm(path: impl AsRef<Path>, t: &Tensor) -> Result<()> {
    let path = path.as_ref();
    let tag = match t.chans() {
        1 => "Pf",
        3 => "PF",
        k => {
            return Err(Error::ShapeMismatch(format!(
                "float map needs 1 or 3 channels, got {k}"
            )))
        }
    };
    let mut buf = format!("{tag}\n{} {}\n-1.0\n", t.cols(), t.rows()).into_bytes();
    for r in (0..t.rows()).rev() {
        for c in 0..t.cols() {
            for &v in t.pixel(r, c) {
                buf.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
    }
    write_atomic(path, &buf)
}

fn next_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a str> {
    while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::format("float map", "truncated header"));
    }
    std::str::from_utf8(&bytes[start..*pos]).map_err(|_| Error::format("float map", "non-ASCII header"))
}

pub fn read_pfm(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut pos = 0;
    let chans = match next_token(&bytes, &mut pos)? {
        "Pf" => 1,
        "PF" => 3,
        other => return Err(Error::format("float map", format!("bad magic {other:?}"))),
    };
    let parse_dim = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::format("float map", format!("bad dimension {s:?}")))
    };
    let w = parse_dim(next_token(&bytes, &mut pos)?)?;
    let h = parse_dim(next_token(&bytes, &mut pos)?)?;
    let scale: f64 = next_token(&bytes, &mut pos)?
        .parse()
        .map_err(|_| Error::format("float map", "bad scale"))?;
    // exactly one whitespace byte separates the header from the payload
    pos += 1;
    let need = w * h * chans * 4;
    let payload = bytes
        .get(pos..pos + need)
        .ok_or_else(|| Error::format("float map", format!("expected {need} payload bytes")))?;
    let little = scale < 0.0;
    let mut t = Tensor::zeros(h, w, chans);
    for (n, chunk) in payload.chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little {
            f32::from_le_bytes(raw)
        } else {
            f32::from_be_bytes(raw)
        };
        let k = n % chans;
        let c = (n / chans) % w;
        let r = h - 1 - n / (chans * w);
        t.set(r, c, k, f64::from(v));
    }
    Ok(t)
}

/// One line per frame: `frame_index, t_x, t_y, t_z, α, β, γ`.
pub fn write_poses(path: impl AsRef<Path>, poses: &[(usize, Pose6)]) -> Result<()> {
    let mut out = String::from("# frame_index, t_x, t_y, t_z, alpha, beta, gamma\n");
    for (idx, p) in poses {
        let v = p.to_array();
        out.push_str(&format!(
            "{idx}, {}, {}, {}, {}, {}, {}\n",
            v[0], v[1], v[2], v[3], v[4], v[5]
        ));
    }
    write_atomic(path.as_ref(), out.as_bytes())
}

pub fn parse_poses(text: &str) -> Result<Vec<(usize, Pose6)>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 7 {
            return Err(Error::format(
                "pose file",
                format!("line {}: expected 7 fields, got {}", lineno + 1, fields.len()),
            ));
        }
        let idx = fields[0]
            .parse()
            .map_err(|_| Error::format("pose file", format!("line {}: bad frame index", lineno + 1)))?;
        let vals = fields[1..]
            .iter()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| Error::format("pose file", format!("line {}: bad number", lineno + 1)))?;
        out.push((idx, Pose6::from_slice(&vals)));
    }
    Ok(out)
}

pub fn read_poses(path: impl AsRef<Path>) -> Result<Vec<(usize, Pose6)>> {
    let path = path.as_ref();
    parse_poses(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}

/// Per-snippet motion estimates: the target frame and, per source, its frame
/// index and the target-to-source motion.
pub type SnippetPoses = (usize, Vec<(usize, Pose6)>);

/// One line per (target, source) pair: `target, source, t_x, t_y, t_z, α, β, γ`.
pub fn write_snippet_poses(path: impl AsRef<Path>, snippets: &[SnippetPoses]) -> Result<()> {
    let mut out = String::from("# target, source, t_x, t_y, t_z, alpha, beta, gamma\n");
    for (target, sources) in snippets {
        for (src, p) in sources {
            let v = p.to_array();
            out.push_str(&format!(
                "{target}, {src}, {}, {}, {}, {}, {}, {}\n",
                v[0], v[1], v[2], v[3], v[4], v[5]
            ));
        }
    }
    write_atomic(path.as_ref(), out.as_bytes())
}

/// Inverse of [`write_snippet_poses`]; consecutive lines with the same target
/// form one snippet.
pub fn read_snippet_poses(path: impl AsRef<Path>) -> Result<Vec<SnippetPoses>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out: Vec<SnippetPoses> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |what: &str| Error::format("snippet pose file", format!("line {}: {what}", lineno + 1));
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 8 {
            return Err(bad("expected 8 fields"));
        }
        let target: usize = fields[0].parse().map_err(|_| bad("bad target index"))?;
        let src: usize = fields[1].parse().map_err(|_| bad("bad source index"))?;
        let vals = fields[2..]
            .iter()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| bad("bad number"))?;
        let pose = Pose6::from_slice(&vals);
        match out.last_mut() {
            Some((t, v)) if *t == target => v.push((src, pose)),
            _ => out.push((target, vec![(src, pose)])),
        }
    }
    Ok(out)
}

/// Writes through a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}
