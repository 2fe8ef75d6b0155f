//! Binary checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic      8 bytes  "CYLSFMCK"
//! version    u32      1
//! step       u64
//! config     u32 length, UTF-8 bytes
//! count      u32
//! entries    count × { u32 name length, name bytes, u32 rank,
//!                      rank × u64 dims, product(dims) × f64 }
//! ```

use std::path::Path;

use super::adam::Adam;
use super::net::{Model, NetSpec};
use crate::datasets::io::write_atomic;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"CYLSFMCK";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub step: u64,
    /// Free-form echo of the configuration that produced the checkpoint.
    pub config: String,
    pub entries: Vec<Entry>,
}

impl Checkpoint {
    pub fn get(&self, name: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.name == name)
    }

    fn require(&self, name: &str) -> Result<&Entry> {
        self.get(name)
            .ok_or_else(|| Error::format("checkpoint", format!("missing entry {name}")))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(MAGIC);
        b.extend_from_slice(&VERSION.to_le_bytes());
        b.extend_from_slice(&self.step.to_le_bytes());
        b.extend_from_slice(&(self.config.len() as u32).to_le_bytes());
        b.extend_from_slice(self.config.as_bytes());
        b.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for e in &self.entries {
            b.extend_from_slice(&(e.name.len() as u32).to_le_bytes());
            b.extend_from_slice(e.name.as_bytes());
            b.extend_from_slice(&(e.dims.len() as u32).to_le_bytes());
            for &d in &e.dims {
                b.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in &e.data {
                b.extend_from_slice(&v.to_le_bytes());
            }
        }
        b
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { b: bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::format("checkpoint", "bad magic"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::format("checkpoint", format!("unsupported version {version}")));
        }
        let step = r.u64()?;
        let n = r.u32()? as usize;
        let config = String::from_utf8(r.take(n)?.to_vec())
            .map_err(|_| Error::format("checkpoint", "config echo is not UTF-8"))?;
        let count = r.u32()?;
        let mut entries = Vec::new();
        for _ in 0..count {
            let n = r.u32()? as usize;
            let name = String::from_utf8(r.take(n)?.to_vec())
                .map_err(|_| Error::format("checkpoint", "entry name is not UTF-8"))?;
            let rank = r.u32()?;
            let dims = (0..rank)
                .map(|_| r.u64().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let len = dims
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .filter(|&l| l <= (bytes.len() - r.pos) / 8)
                .ok_or_else(|| Error::format("checkpoint", format!("entry {name} is truncated")))?;
            let data = (0..len).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            entries.push(Entry { name, dims, data });
        }
        if r.pos != bytes.len() {
            return Err(Error::format("checkpoint", "trailing bytes"));
        }
        Ok(Self { step, config, entries })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let b = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&b)
    }

    /// Packs a model, its optimiser state and the disparity range it was
    /// trained for.
    pub fn from_model(model: &Model, adam: &Adam, depth_range: (f64, f64), step: u64, config: &str) -> Self {
        let s = &model.spec;
        let mut spec = vec![
            s.kernel as f64,
            s.num_scales as f64,
            s.num_sources as f64,
            s.masks as u8 as f64,
            s.wrap as u8 as f64,
            s.depth_widths.len() as f64,
        ];
        spec.extend(s.depth_widths.iter().map(|&w| w as f64));
        spec.push(s.pose_widths.len() as f64);
        spec.extend(s.pose_widths.iter().map(|&w| w as f64));
        let mut entries = vec![
            Entry {
                name: "net.spec".into(),
                dims: vec![spec.len()],
                data: spec,
            },
            Entry {
                name: "loss.depth_range".into(),
                dims: vec![2],
                data: vec![depth_range.0, depth_range.1],
            },
        ];
        for (name, k) in model.names.iter().zip(&model.kernels) {
            entries.push(Entry {
                name: format!("{name}.weight"),
                dims: vec![k.kh, k.kw, k.cin, k.cout],
                data: k.weights.clone(),
            });
            entries.push(Entry {
                name: format!("{name}.bias"),
                dims: vec![k.cout],
                data: k.bias.clone(),
            });
        }
        entries.push(Entry {
            name: "adam.m".into(),
            dims: vec![adam.m.len()],
            data: adam.m.clone(),
        });
        entries.push(Entry {
            name: "adam.v".into(),
            dims: vec![adam.v.len()],
            data: adam.v.clone(),
        });
        entries.push(Entry {
            name: "adam.hyper".into(),
            dims: vec![4],
            data: vec![adam.lr, adam.beta1, adam.beta2, adam.eps],
        });
        Self {
            step,
            config: config.to_string(),
            entries,
        }
    }

    pub fn depth_range(&self) -> Result<(f64, f64)> {
        let e = self.require("loss.depth_range")?;
        match e.data[..] {
            [a, b] if a > 0.0 && b > a => Ok((a, b)),
            _ => Err(Error::format("checkpoint", "bad depth range")),
        }
    }

    pub fn spec(&self) -> Result<NetSpec> {
        let v = &self.require("net.spec")?.data;
        let bad = || Error::format("checkpoint", "malformed net.spec");
        let int = |i: usize| -> Result<usize> {
            let x = *v.get(i).ok_or_else(bad)?;
            if x < 0.0 || x.fract() != 0.0 {
                return Err(bad());
            }
            Ok(x as usize)
        };
        let nd = int(5)?;
        let depth_widths = (0..nd).map(|i| int(6 + i)).collect::<Result<Vec<_>>>()?;
        let np = int(6 + nd)?;
        let pose_widths = (0..np).map(|i| int(7 + nd + i)).collect::<Result<Vec<_>>>()?;
        if v.len() != 7 + nd + np {
            return Err(bad());
        }
        let spec = NetSpec {
            depth_widths,
            pose_widths,
            kernel: int(0)?,
            num_scales: int(1)?,
            num_sources: int(2)?,
            masks: int(3)? != 0,
            wrap: int(4)? != 0,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn model(&self) -> Result<Model> {
        let mut m = Model::zeroed(self.spec()?)?;
        for (name, k) in m.names.iter().zip(m.kernels.iter_mut()) {
            let w = self.require(&format!("{name}.weight"))?;
            let b = self.require(&format!("{name}.bias"))?;
            if w.dims != [k.kh, k.kw, k.cin, k.cout] || b.dims != [k.cout] {
                return Err(Error::format("checkpoint", format!("layer {name} has the wrong shape")));
            }
            k.weights.clone_from(&w.data);
            k.bias.clone_from(&b.data);
        }
        Ok(m)
    }

    pub fn adam(&self) -> Result<Adam> {
        let m = self.require("adam.m")?;
        let v = self.require("adam.v")?;
        let h = self.require("adam.hyper")?;
        if m.data.len() != v.data.len() || h.data.len() != 4 {
            return Err(Error::format("checkpoint", "malformed optimiser state"));
        }
        let mut a = Adam::new(m.data.len(), h.data[0], h.data[1], h.data[2]);
        a.eps = h.data[3];
        a.m.clone_from(&m.data);
        a.v.clone_from(&v.data);
        a.step = self.step;
        Ok(a)
    }
}

struct Reader<'a> {
    b: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.b.len())
            .ok_or_else(|| Error::format("checkpoint", "unexpected end of file"))?;
        let s = &self.b[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let c = Checkpoint {
            step: 7,
            config: "x".into(),
            entries: vec![Entry {
                name: "a".into(),
                dims: vec![1],
                data: vec![1.5],
            }],
        };
        let b = c.to_bytes();
        assert_eq!(&b[..8], b"CYLSFMCK");
        assert_eq!(u32::from_le_bytes(b[8..12].try_into().unwrap()), 1);
        assert_eq!(u64::from_le_bytes(b[12..20].try_into().unwrap()), 7);
        assert_eq!(b.len(), 8 + 4 + 8 + 4 + 1 + 4 + 4 + 1 + 4 + 8 + 8);
        assert_eq!(f64::from_le_bytes(b[b.len() - 8..].try_into().unwrap()), 1.5);
    }

    #[test]
    fn model_roundtrip_is_exact() {
        let spec = NetSpec {
            masks: true,
            wrap: false,
            ..Default::default()
        };
        let model = Model::new(spec, 9).unwrap();
        let mut adam = Adam::new(model.param_count(), 2e-4, 0.9, 0.999);
        adam.m[3] = 0.1 + 0.2;
        adam.step = 12;
        let c = Checkpoint::from_model(&model, &adam, (0.1, 100.0), 12, "seed = 3");
        let back = Checkpoint::from_bytes(&c.to_bytes()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.model().unwrap(), model);
        assert_eq!(back.adam().unwrap(), adam);
        assert_eq!(back.depth_range().unwrap(), (0.1, 100.0));
    }

    #[test]
    fn truncation_is_detected() {
        let model = Model::new(NetSpec::default(), 1).unwrap();
        let adam = Adam::new(model.param_count(), 1e-3, 0.9, 0.999);
        let b = Checkpoint::from_model(&model, &adam, (0.1, 100.0), 0, "").to_bytes();
        for cut in [3, 20, b.len() / 2, b.len() - 1] {
            assert!(Checkpoint::from_bytes(&b[..cut]).is_err(), "cut {cut}");
        }
    }
}
