//! `LGCK` parameter checkpoints.
//!
//! ```text
//! magic       4 bytes  "LGCK"
//! version     u16      format version (currently 1)
//! header_len  u32      byte length of the JSON header
//! header      UTF-8 JSON: model config, normalization stats, parameter
//!             names and shapes, optimizer step, free-form metadata
//! best_flag   u8       1 if a best validation score follows
//! best        f64      best validation score (always present, 0 if unset)
//! params      f64 values of every tensor, in header order
//! [m, v]      Adam moments in the same order, if the header says so
//! ```
//! Binary values are little-endian. Floats that must survive exactly
//! (including non-finite scores) live in the binary part.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::binary::{read_f64, read_f64s, read_u16, read_u32, read_u8, write_f64s};
use crate::autodiff::{OptimizerState, ParamStore, Tensor};
use crate::error::{Error, Result};
use crate::models::ModelConfig;
use crate::training::NormalizationStats;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"LGCK";
pub const CHECKPOINT_VERSION: u16 = 1;

/// Model, statistics and (optionally) optimizer state of a training run.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: ModelConfig,
    pub stats: NormalizationStats,
    pub params: ParamStore<f64>,
    pub optimizer: Option<OptimizerState<f64>>,
    pub best_valid: Option<f64>,
    /// Run configuration and provenance.
    pub metadata: Value,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorEntry {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    model: ModelConfig,
    stats: NormalizationStats,
    tensors: Vec<TensorEntry>,
    /// Optimizer step counter, present iff moments follow the parameters.
    optimizer_step: Option<u64>,
    metadata: Value,
}

impl Checkpoint {
    pub fn step(&self) -> u64 {
        self.optimizer.as_ref().map_or(0, |o| o.step)
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        if let Some(opt) = &self.optimizer {
            if !opt.matches(&self.params) {
                return Err(Error::Shape("optimizer moments do not match the parameters".into()));
            }
        }
        let header = Header {
            model: self.model.clone(),
            stats: self.stats.clone(),
            tensors: self
                .params
                .iter()
                .map(|(name, t)| TensorEntry { name: name.to_string(), rows: t.rows, cols: t.cols })
                .collect(),
            optimizer_step: self.optimizer.as_ref().map(|o| o.step),
            metadata: self.metadata.clone(),
        };
        let json = serde_json::to_vec(&header)?;
        let len = u32::try_from(json.len()).map_err(|_| Error::SizeLimit("checkpoint header exceeds u32 bytes".into()))?;
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        w.write_all(&len.to_le_bytes())?;
        w.write_all(&json)?;
        w.write_all(&[u8::from(self.best_valid.is_some())])?;
        w.write_all(&self.best_valid.unwrap_or(0.0).to_le_bytes())?;
        for t in self.params.tensors() {
            write_f64s(w, &t.data)?;
        }
        if let Some(opt) = &self.optimizer {
            for t in opt.m.iter().chain(&opt.v) {
                write_f64s(w, &t.data)?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(|_| Error::Format("truncated checkpoint header".into()))?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Format("not a checkpoint file (bad magic)".into()));
        }
        let version = read_u16(r)?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Version { found: version, supported: CHECKPOINT_VERSION });
        }
        let len = read_u32(r)? as usize;
        let mut json = vec![0u8; len];
        r.read_exact(&mut json).map_err(|_| Error::Format("truncated checkpoint header".into()))?;
        let header: Header = serde_json::from_slice(&json)?;
        let best_flag = read_u8(r)?;
        let best = read_f64(r)?;
        let best_valid = match best_flag {
            0 => None,
            1 => Some(best),
            f => return Err(Error::Format(format!("invalid best-score flag {f}"))),
        };
        let read_tensors = |r: &mut R| -> Result<Vec<Tensor<f64>>> {
            header.tensors.iter().map(|e| Tensor::new(e.rows, e.cols, read_f64s(r, e.rows * e.cols)?)).collect()
        };
        let mut params = ParamStore::new();
        for (entry, t) in header.tensors.iter().zip(read_tensors(r)?) {
            if params.id(&entry.name).is_ok() {
                return Err(Error::Format(format!("duplicate parameter `{}`", entry.name)));
            }
            params.insert(entry.name.clone(), t);
        }
        let optimizer = match header.optimizer_step {
            Some(step) => {
                let m = read_tensors(r)?;
                let v = read_tensors(r)?;
                Some(OptimizerState { step, m, v })
            }
            None => None,
        };
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(Error::Format("trailing bytes after checkpoint payload".into()));
        }
        Ok(Self { model: header.model, stats: header.stats, params, optimizer, best_valid, metadata: header.metadata })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        self.write_to(&mut out)?;
        Ok(out)
    }

    pub fn from_bytes(mut bytes: &[u8]) -> Result<Self> {
        Self::read_from(&mut bytes)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        // Write-then-rename so an interrupted save never clobbers a good file.
        let tmp = path.with_extension("ckpt.tmp");
        {
            let mut w = BufWriter::new(File::create(&tmp)?);
            self.write_to(&mut w)?;
            w.flush()?;
        }
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{HaeMode, Model};
    use crate::training::NormalizationMode;

    fn checkpoint(with_optimizer: bool) -> Checkpoint {
        let model = ModelConfig::segnn(HaeMode::Lin, 1, 4, 2);
        let (_, params) = Model::build(&model).unwrap();
        let optimizer = with_optimizer.then(|| {
            let mut o = OptimizerState::new(&params);
            o.step = 7;
            o
        });
        Checkpoint {
            model,
            stats: NormalizationStats::identity(NormalizationMode::Magnitude),
            params,
            optimizer,
            best_valid: Some(0.5),
            metadata: serde_json::json!({ "note": "unit" }),
        }
    }

    #[test]
    fn round_trips_with_and_without_optimizer() {
        for with in [false, true] {
            let c = checkpoint(with);
            let bytes = c.to_bytes().unwrap();
            assert_eq!(&bytes[..4], CHECKPOINT_MAGIC);
            let back = Checkpoint::from_bytes(&bytes).unwrap();
            assert_eq!(back, c);
            assert_eq!(back.step(), if with { 7 } else { 0 });
        }
    }

    #[test]
    fn save_replaces_atomically() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.ckpt");
        checkpoint(false).save(&path).unwrap();
        checkpoint(true).save(&path).unwrap();
        assert_eq!(Checkpoint::load(&path).unwrap().step(), 7);
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
