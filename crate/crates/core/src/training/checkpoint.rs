use std::collections::BTreeMap;
use std::path::Path;

use crate::autodiff::Tensor;
use crate::container::{write_atomic, Reader, Writer};
use crate::error::{Error, Result};
use crate::model::{ModelConfig, ModelParams};

use super::adam::Adam;
use super::config::TrainConfig;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"KLC1";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Everything needed to resume a run or to run inference.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub adam: Adam,
    /// Number of completed epochs.
    pub epoch: u64,
    pub train_config: TrainConfig,
}

impl Checkpoint {
    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut w = Writer::new();
        w.str(&serde_json::to_string(&self.params.config)?);
        w.str(&serde_json::to_string(&self.train_config)?);
        w.f64(self.params.pos_scale);
        w.u64(self.epoch);
        w.u64(self.adam.step);
        w.u32(self.params.tensors.len() as u32);
        for (name, t) in &self.params.tensors {
            w.str(name);
            w.u32(t.shape().len() as u32);
            for &d in t.shape() {
                w.u32(d as u32);
            }
            w.f64s(t.data());
            for state in [&self.adam.m, &self.adam.v] {
                let s = state
                    .get(name)
                    .ok_or_else(|| Error::Contract(format!("optimizer has no state for {name}")))?;
                w.f64s(s.data());
            }
        }
        Ok(w.finish(CHECKPOINT_MAGIC, CHECKPOINT_VERSION))
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::open(bytes, CHECKPOINT_MAGIC, CHECKPOINT_VERSION)?;
        let config: ModelConfig = serde_json::from_str(&r.str()?)?;
        let train_config: TrainConfig = serde_json::from_str(&r.str()?)?;
        let pos_scale = r.f64()?;
        let epoch = r.u64()?;
        let step = r.u64()?;
        let count = r.u32()? as usize;
        let mut tensors = BTreeMap::new();
        let mut m = BTreeMap::new();
        let mut v = BTreeMap::new();
        for _ in 0..count {
            let name = r.str()?;
            let rank = r.u32()? as usize;
            let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let n = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
            let n = n.ok_or_else(|| Error::Format(format!("tensor {name} is too large")))?;
            tensors.insert(name.clone(), Tensor::new(shape.clone(), r.f64s(n)?)?);
            m.insert(name.clone(), Tensor::new(shape.clone(), r.f64s(n)?)?);
            v.insert(name, Tensor::new(shape, r.f64s(n)?)?);
        }
        r.finish()?;
        let params = ModelParams {
            config,
            pos_scale,
            tensors,
        };
        params
            .validate()
            .map_err(|e| Error::Format(format!("checkpoint does not match its configuration: {e}")))?;
        let mut adam = Adam::new(&params);
        adam.step = step;
        adam.m = m;
        adam.v = v;
        Ok(Self {
            params,
            adam,
            epoch,
            train_config,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.encode()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::decode(&std::fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let mut params = ModelParams::init(ModelConfig::tiny(3), 9).unwrap();
        params.pos_scale = 0.123;
        let mut adam = Adam::new(&params);
        adam.step = 17;
        adam.m.get_mut("stage1.embed.b").unwrap().data_mut()[2] = 0.5;
        Checkpoint {
            params,
            adam,
            epoch: 17,
            train_config: TrainConfig::default(),
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let c = sample();
        let back = Checkpoint::decode(&c.encode().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn corruption_detected() {
        let mut bytes = sample().encode().unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x40;
        assert!(matches!(Checkpoint::decode(&bytes), Err(Error::Format(_))));
        let bytes = sample().encode().unwrap();
        assert!(Checkpoint::decode(&bytes[..bytes.len() - 9]).is_err());
        assert!(Checkpoint::decode(b"KLM1\x01\x00\x00\x00xxxx").is_err());
    }

    #[test]
    fn save_and_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.klc");
        sample().save(&path).unwrap();
        assert_eq!(Checkpoint::load(&path).unwrap(), sample());
    }
}
