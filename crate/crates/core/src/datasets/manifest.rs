//! Frame lists, three-frame snippets and their text manifest.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::io::write_atomic;
use crate::camera::CylCamera;
use crate::error::{Error, Result};
use crate::synth::Pose6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn name(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Split> {
        match s {
            "train" => Some(Split::Train),
            "val" => Some(Split::Val),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

/// One frame of the sequence. Paths are relative to the manifest directory.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    /// Frame number in the original recording.
    pub index: usize,
    pub color: PathBuf,
    pub depth: Option<PathBuf>,
    /// Camera-to-reference pose.
    pub pose: Option<Pose6>,
}

/// Three consecutive frames; `frames[1]` is the target.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SnippetRecord {
    /// Positions in [`SequenceManifest::frames`].
    pub frames: [usize; 3],
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceManifest {
    pub camera: CylCamera,
    pub frames: Vec<FrameRecord>,
    pub snippets: Vec<SnippetRecord>,
    /// Static-frame threshold that was applied, `None` when filtering was
    /// skipped (no ground-truth poses).
    pub static_filter: Option<f64>,
}

impl SequenceManifest {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &SnippetRecord> {
        self.snippets.iter().filter(move |s| s.split == split)
    }

    fn frame_set(&self, split: Split) -> HashSet<usize> {
        self.split(split).flat_map(|s| s.frames).collect()
    }

    /// Frame positions used by training snippets and by test snippets.
    pub fn train_test_frames(&self) -> (HashSet<usize>, HashSet<usize>) {
        (self.frame_set(Split::Train), self.frame_set(Split::Test))
    }

    pub fn to_text(&self) -> String {
        let c = &self.camera;
        let mut out = String::from("# cylsfm sequence manifest v1\n");
        let _ = writeln!(
            out,
            "camera width={} height={} h_max={} theta_min={} fov={} wraps={}",
            c.width, c.height, c.h_max, c.theta_min, c.fov, c.wraps
        );
        match self.static_filter {
            Some(tau) => {
                let _ = writeln!(out, "static_filter applied=true tau={tau}");
            }
            None => out.push_str("static_filter applied=false\n"),
        }
        for f in &self.frames {
            let _ = write!(out, "frame index={} color={}", f.index, f.color.display());
            if let Some(d) = &f.depth {
                let _ = write!(out, " depth={}", d.display());
            }
            if let Some(p) = &f.pose {
                let v = p.to_array();
                let _ = write!(out, " pose={},{},{},{},{},{}", v[0], v[1], v[2], v[3], v[4], v[5]);
            }
            out.push('\n');
        }
        for s in &self.snippets {
            let _ = writeln!(
                out,
                "snippet split={} frames={},{},{}",
                s.split.name(),
                s.frames[0],
                s.frames[1],
                s.frames[2]
            );
        }
        out
    }

    pub fn parse(text: &str) -> Result<SequenceManifest> {
        let bad = |line: usize, msg: String| Error::format("manifest", format!("line {line}: {msg}"));
        let mut camera = None;
        let mut frames = Vec::new();
        let mut snippets = Vec::new();
        let mut static_filter = None;
        for (n, raw) in text.lines().enumerate() {
            let lineno = n + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            let kind = parts.next().unwrap_or_default();
            let mut fields = std::collections::BTreeMap::new();
            for p in parts {
                let (k, v) = p
                    .split_once('=')
                    .ok_or_else(|| bad(lineno, format!("field {p:?} is not key=value")))?;
                fields.insert(k, v);
            }
            let get = |k: &str| {
                fields
                    .get(k)
                    .copied()
                    .ok_or_else(|| bad(lineno, format!("missing field {k:?}")))
            };
            let num = |k: &str| -> Result<f64> {
                get(k)?
                    .parse()
                    .map_err(|_| bad(lineno, format!("field {k:?} is not a number")))
            };
            let int = |k: &str| -> Result<usize> {
                get(k)?
                    .parse()
                    .map_err(|_| bad(lineno, format!("field {k:?} is not an integer")))
            };
            match kind {
                "camera" => {
                    let mut cam = CylCamera::new(int("width")?, int("height")?)?.with_h_max(num("h_max")?)?;
                    cam.theta_min = num("theta_min")?;
                    cam.fov = num("fov")?;
                    cam.wraps = get("wraps")? == "true";
                    camera = Some(cam);
                }
                "static_filter" => {
                    if get("applied")? == "true" {
                        static_filter = Some(num("tau")?);
                    }
                }
                "frame" => {
                    let pose = match fields.get("pose") {
                        Some(v) => {
                            let vals = v
                                .split(',')
                                .map(str::parse::<f64>)
                                .collect::<std::result::Result<Vec<_>, _>>()
                                .map_err(|_| bad(lineno, "bad pose".into()))?;
                            if vals.len() != 6 {
                                return Err(bad(lineno, "pose needs 6 numbers".into()));
                            }
                            Some(Pose6::from_slice(&vals))
                        }
                        None => None,
                    };
                    frames.push(FrameRecord {
                        index: int("index")?,
                        color: PathBuf::from(get("color")?),
                        depth: fields.get("depth").map(PathBuf::from),
                        pose,
                    });
                }
                "snippet" => {
                    let split = Split::parse(get("split")?).ok_or_else(|| bad(lineno, "unknown split".into()))?;
                    let idx = get("frames")?
                        .split(',')
                        .map(str::parse::<usize>)
                        .collect::<std::result::Result<Vec<_>, _>>()
                        .map_err(|_| bad(lineno, "bad frame list".into()))?;
                    let frames: [usize; 3] = idx
                        .try_into()
                        .map_err(|_| bad(lineno, "snippet needs 3 frames".into()))?;
                    snippets.push(SnippetRecord { frames, split });
                }
                other => return Err(bad(lineno, format!("unknown record {other:?}"))),
            }
        }
        let camera = camera.ok_or_else(|| Error::format("manifest", "missing camera record"))?;
        for s in &snippets {
            if s.frames.iter().any(|&f| f >= frames.len()) {
                return Err(Error::format("manifest", "snippet refers to a missing frame"));
            }
        }
        Ok(SequenceManifest {
            camera,
            frames,
            snippets,
            static_filter,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<SequenceManifest> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        for f in &self.frames {
            let paths = std::iter::once(&f.color).chain(f.depth.as_ref());
            if paths
                .map(|p| p.to_string_lossy().into_owned())
                .any(|p| p.contains(char::is_whitespace))
            {
                return Err(Error::InvalidArgument(format!(
                    "manifest paths may not contain whitespace: {}",
                    f.color.display()
                )));
            }
        }
        write_atomic(path.as_ref(), self.to_text().as_bytes())
    }
}

/// Consecutive `(k-1, k, k+1)` triples split by a seeded shuffle; test
/// snippets sharing a frame with any training snippet are dropped.
pub fn make_sequences(
    camera: CylCamera,
    frames: Vec<FrameRecord>,
    fractions: [f64; 3],
    seed: u64,
) -> Result<SequenceManifest> {
    if frames.len() < 3 {
        return Err(Error::TooFewFrames(frames.len()));
    }
    if fractions.iter().any(|f| !(*f >= 0.0)) || fractions.iter().sum::<f64>() <= 0.0 {
        return Err(Error::InvalidArgument(format!("bad split fractions {fractions:?}")));
    }
    let total: f64 = fractions.iter().sum();
    let mut triples: Vec<[usize; 3]> = (1..frames.len() - 1).map(|k| [k - 1, k, k + 1]).collect();
    let n = triples.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    triples.shuffle(&mut rng);
    let n_train = ((fractions[0] / total) * n as f64).round() as usize;
    let n_val = (((fractions[1] / total) * n as f64).round() as usize).min(n - n_train.min(n));
    let n_train = n_train.min(n);

    let mut snippets: Vec<SnippetRecord> = triples
        .iter()
        .enumerate()
        .map(|(i, &t)| SnippetRecord {
            frames: t,
            split: if i < n_train {
                Split::Train
            } else if i < n_train + n_val {
                Split::Val
            } else {
                Split::Test
            },
        })
        .collect();
    let train: HashSet<usize> = snippets
        .iter()
        .filter(|s| s.split == Split::Train)
        .flat_map(|s| s.frames)
        .collect();
    snippets.retain(|s| s.split != Split::Test || s.frames.iter().all(|f| !train.contains(f)));
    snippets.sort_by_key(|s| s.frames[1]);
    Ok(SequenceManifest {
        camera,
        frames,
        snippets,
        static_filter: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frames(n: usize) -> Vec<FrameRecord> {
        (0..n)
            .map(|i| FrameRecord {
                index: i,
                color: PathBuf::from(format!("color/{i:06}.ppm")),
                depth: Some(PathBuf::from(format!("depth/{i:06}.pfm"))),
                pose: Some(Pose6::translation(0.1 * i as f64, 0.0, 0.0)),
            })
            .collect()
    }

    fn cam() -> CylCamera {
        CylCamera::new(16, 4).unwrap()
    }

    #[test]
    fn five_frames_give_three_snippets() {
        let m = make_sequences(cam(), frames(5), [1.0, 0.0, 0.0], 1).unwrap();
        let centres: Vec<usize> = m.snippets.iter().map(|s| s.frames[1]).collect();
        assert_eq!(centres, vec![1, 2, 3]);
        assert!(m.snippets.iter().all(|s| s.split == Split::Train));
        assert!(matches!(
            make_sequences(cam(), frames(2), [1.0, 0.0, 0.0], 1),
            Err(Error::TooFewFrames(2))
        ));
    }

    #[test]
    fn deterministic_and_disjoint() {
        let a = make_sequences(cam(), frames(100), [0.8, 0.1, 0.1], 9).unwrap();
        let b = make_sequences(cam(), frames(100), [0.8, 0.1, 0.1], 9).unwrap();
        assert_eq!(a, b);
        let (train, test) = a.train_test_frames();
        assert!(train.is_disjoint(&test));
        assert!(a.split(Split::Train).count() > 70);
    }

    #[test]
    fn text_roundtrip() {
        let mut m = make_sequences(cam().without_wrap(), frames(7), [0.6, 0.2, 0.2], 3).unwrap();
        m.static_filter = Some(0.05);
        m.frames[2].depth = None;
        m.frames[3].pose = None;
        assert_eq!(SequenceManifest::parse(&m.to_text()).unwrap(), m);
        assert!(SequenceManifest::parse("frame index=0 color=a.ppm\n").is_err());
    }
}
