use std::path::Path;

use super::{ModelConfig, ModelError, Network, ProsodyModel};
use crate::f0::NormStats;
use crate::nn::ParamStore;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"INTNCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

/// A trained model together with the normalization it was trained under.
///
/// Layout (all integers and floats little-endian): magic, `u32` version,
/// `u32` header length and a UTF-8 `key=value` header, five `f64`
/// normalization values, `u32` tensor count, then per tensor a `u32`-prefixed
/// name, `u32` rank, `u64` dims and the `f64` payload.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: ProsodyModel,
    pub stats: NormStats,
}

fn bad(msg: impl Into<String>) -> ModelError {
    ModelError::Checkpoint(msg.into())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| bad("truncated"))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, ModelError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64, ModelError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String, ModelError> {
        let len = self.u32()? as usize;
        String::from_utf8(self.take(len)?.to_vec()).map_err(|_| bad("invalid UTF-8"))
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

impl Checkpoint {
    fn header(&self) -> String {
        let c = &self.model.config;
        let lengths: Vec<String> = c.pseudo_lengths.iter().map(usize::to_string).collect();
        format!(
            "kind={}\nlatent_dim={}\nff_units={}\ngru_units={}\ngru_layers={}\npseudo_lengths={}\nphones={}\n",
            c.kind,
            c.latent_dim,
            c.ff_units,
            c.gru_units,
            c.gru_layers,
            lengths.join(","),
            self.model.phones.join(" ")
        )
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        put_str(&mut out, &self.header());
        let s = &self.stats;
        for v in [s.mean, s.std, s.global_std[0], s.global_std[1], s.global_std[2]] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let tensors = self.model.store.tensors();
        out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
        for t in tensors {
            put_str(&mut out, &t.name);
            out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
            for &dim in &t.shape {
                out.extend_from_slice(&(dim as u64).to_le_bytes());
            }
            for v in &t.values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ModelError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != CHECKPOINT_MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let header = r.string()?;
        let mut fields = std::collections::HashMap::new();
        for line in header.lines() {
            let (k, v) = line.split_once('=').ok_or_else(|| bad(format!("header line `{line}`")))?;
            fields.insert(k.to_string(), v.to_string());
        }
        let get = |k: &str| fields.get(k).cloned().ok_or_else(|| bad(format!("header lacks `{k}`")));
        let num = |k: &str| -> Result<usize, ModelError> { get(k)?.parse().map_err(|_| bad(format!("bad `{k}`"))) };
        let lengths = get("pseudo_lengths")?;
        let pseudo_lengths = if lengths.is_empty() {
            Vec::new()
        } else {
            lengths
                .split(',')
                .map(|v| v.parse().map_err(|_| bad("bad pseudo_lengths")))
                .collect::<Result<Vec<usize>, _>>()?
        };
        let config = ModelConfig {
            kind: get("kind")?.parse()?,
            latent_dim: num("latent_dim")?,
            ff_units: num("ff_units")?,
            gru_units: num("gru_units")?,
            gru_layers: num("gru_layers")?,
            pseudo_lengths,
        };
        config.validate()?;
        let phones: Vec<String> = get("phones")?.split_whitespace().map(str::to_string).collect();
        let stats = NormStats {
            mean: r.f64()?,
            std: r.f64()?,
            global_std: [r.f64()?, r.f64()?, r.f64()?],
        };
        let count = r.u32()? as usize;
        let mut store = ParamStore::new();
        for _ in 0..count {
            let name = r.string()?;
            let rank = r.u32()? as usize;
            let shape = (0..rank)
                .map(|_| r.u64().map(|d| d as usize))
                .collect::<Result<Vec<_>, _>>()?;
            let n = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or_else(|| bad("shape overflow"))?;
            if n > bytes.len() / 8 {
                return Err(bad("truncated"));
            }
            let values = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
            if store.find(&name).is_some() {
                return Err(bad(format!("duplicate tensor `{name}`")));
            }
            store.add(name, &shape, values);
        }
        if r.pos != bytes.len() {
            return Err(bad("trailing bytes"));
        }
        let net = Network::bind(&store, &config, phones.len())?;
        Ok(Self {
            model: ProsodyModel {
                config,
                phones,
                store,
                net,
            },
            stats,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        std::fs::write(path, self.to_bytes()).map_err(|e| bad(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let bytes = std::fs::read(path).map_err(|e| bad(format!("{}: {e}", path.display())))?;
        Self::from_bytes(&bytes)
    }
}
