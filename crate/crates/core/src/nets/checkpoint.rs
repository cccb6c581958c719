//! Binary checkpoint format (all integers and floats little-endian):
//!
//! ```text
//! magic      8 bytes  "UAVCKPT\0"
//! version    u32
//! layout     u32 length + UTF-8 bytes   observation layout tag
//! config     u64                        hash of the environment config
//! meta       u32 length + UTF-8 bytes   free-form key=value;... string
//! episode    u64
//! rng        32-byte seed, u64 stream, u128 word position
//! tensors    u32 count, then per tensor:
//!            u32 name length, name, u32 rank, rank x u64 dims, f64 data
//! ```

use std::path::Path;

use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use sha2::{Digest, Sha256};

use super::mlp::{Activation, Dense, Mlp};
use super::NetError;
use crate::env::EnvConfig;

pub const MAGIC: &[u8; 8] = b"UAVCKPT\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub dims: Vec<u64>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub version: u32,
    pub layout: String,
    pub config_hash: u64,
    pub meta: String,
    pub episode: u64,
    pub rng: RngState,
    pub tensors: Vec<Tensor>,
}

pub fn config_hash(cfg: &EnvConfig) -> u64 {
    let digest = Sha256::digest(cfg.canonical().as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("sha256 is 32 bytes"))
}

impl Checkpoint {
    pub fn new(layout: &str, config_hash: u64, meta: &str, episode: u64, rng: RngState) -> Self {
        Self {
            version: FORMAT_VERSION,
            layout: layout.to_string(),
            config_hash,
            meta: meta.to_string(),
            episode,
            rng,
            tensors: Vec::new(),
        }
    }

    pub fn push_mlp(&mut self, name: &str, net: &Mlp) {
        for (l, layer) in net.layers.iter().enumerate() {
            self.tensors.push(Tensor {
                name: format!("{name}.w{l}"),
                dims: vec![layer.outputs as u64, layer.inputs as u64],
                data: layer.w.clone(),
            });
            self.tensors.push(Tensor {
                name: format!("{name}.b{l}"),
                dims: vec![layer.outputs as u64],
                data: layer.b.clone(),
            });
        }
        self.tensors.push(Tensor {
            name: format!("{name}.act"),
            dims: vec![1],
            data: vec![net.output.code()],
        });
    }

    fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn mlp(&self, name: &str) -> Result<Mlp, NetError> {
        let missing = || NetError::MissingTensor(name.to_string());
        let act = self.tensor(&format!("{name}.act")).ok_or_else(missing)?;
        let output = act
            .data
            .first()
            .and_then(|c| Activation::from_code(*c))
            .ok_or_else(|| NetError::Corrupt(format!("bad activation for {name}")))?;
        let mut layers = Vec::new();
        while let Some(w) = self.tensor(&format!("{name}.w{}", layers.len())) {
            let b = self
                .tensor(&format!("{name}.b{}", layers.len()))
                .ok_or_else(missing)?;
            if w.dims.len() != 2 || b.dims.len() != 1 || b.dims[0] != w.dims[0] {
                return Err(NetError::Corrupt(format!("inconsistent shapes in {name}")));
            }
            layers.push(Dense {
                inputs: w.dims[1] as usize,
                outputs: w.dims[0] as usize,
                w: w.data.clone(),
                b: b.data.clone(),
            });
        }
        if layers.is_empty() {
            return Err(missing());
        }
        Ok(Mlp { layers, output })
    }

    /// Value of `key` in the `key=value;...` meta string.
    pub fn meta_value(&self, key: &str) -> Option<&str> {
        self.meta
            .split(';')
            .filter_map(|kv| kv.split_once('='))
            .find(|(k, _)| *k == key)
            .map(|(_, v)| v)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&self.version.to_le_bytes());
        put_str(&mut out, &self.layout);
        out.extend_from_slice(&self.config_hash.to_le_bytes());
        put_str(&mut out, &self.meta);
        out.extend_from_slice(&self.episode.to_le_bytes());
        out.extend_from_slice(&self.rng.seed);
        out.extend_from_slice(&self.rng.stream.to_le_bytes());
        out.extend_from_slice(&self.rng.word_pos.to_le_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            put_str(&mut out, &t.name);
            out.extend_from_slice(&(t.dims.len() as u32).to_le_bytes());
            for d in &t.dims {
                out.extend_from_slice(&d.to_le_bytes());
            }
            for x in &t.data {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NetError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(NetError::Corrupt("bad magic".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(NetError::VersionMismatch {
                expected: FORMAT_VERSION,
                found: version,
            });
        }
        let layout = r.string()?;
        let config_hash = r.u64()?;
        let meta = r.string()?;
        let episode = r.u64()?;
        let seed: [u8; 32] = r.take(32)?.try_into().expect("32 bytes");
        let stream = r.u64()?;
        let word_pos = u128::from_le_bytes(r.take(16)?.try_into().expect("16 bytes"));
        let count = r.u32()?;
        let mut tensors = Vec::new();
        for _ in 0..count {
            let name = r.string()?;
            let rank = r.u32()? as usize;
            let dims = (0..rank).map(|_| r.u64()).collect::<Result<Vec<_>, _>>()?;
            let len = dims
                .iter()
                .try_fold(1u64, |acc, d| acc.checked_mul(*d))
                .filter(|n| *n <= (bytes.len() / 8) as u64)
                .ok_or_else(|| NetError::Corrupt(format!("tensor {name} too large")))?;
            let data = (0..len)
                .map(|_| r.take(8).map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes"))))
                .collect::<Result<Vec<_>, _>>()?;
            tensors.push(Tensor { name, dims, data });
        }
        if r.pos != bytes.len() {
            return Err(NetError::Corrupt("trailing bytes".into()));
        }
        Ok(Self {
            version,
            layout,
            config_hash,
            meta,
            episode,
            rng: RngState {
                seed,
                stream,
                word_pos,
            },
            tensors,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), NetError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, NetError> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    /// Loads and rejects a checkpoint whose observation layout differs from `layout`.
    pub fn load_expecting(path: &Path, layout: &str) -> Result<Self, NetError> {
        let ck = Self::load(path)?;
        ck.expect_layout(layout)?;
        Ok(ck)
    }

    pub fn expect_layout(&self, layout: &str) -> Result<(), NetError> {
        if self.layout != layout {
            return Err(NetError::LayoutMismatch {
                expected: layout.to_string(),
                found: self.layout.clone(),
            });
        }
        Ok(())
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NetError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|e| *e <= self.bytes.len())
            .ok_or_else(|| NetError::Corrupt(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, NetError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, NetError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String, NetError> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| NetError::Corrupt("invalid utf-8".into()))
    }
}
