//! Binary checkpoint format.
//!
//! ```text
//! offset  size  content
//! 0       8     magic "SLATCKPT"
//! 8       4     format version (u32 LE), currently 1
//! 12      4     header length H in bytes (u32 LE)
//! 16      H     UTF-8 JSON header (see `Header`)
//! 16+H    4*P   parameters, f32 LE, in the network's flat layout
//! ...     8*P   optional Adam first and second moments, f32 LE
//! ```
//!
//! The flat parameter layout is `W1 (in x hidden, row-major), b1, W2, b2,
//! W3 (hidden x C), b3`. Training keeps parameters and Adam moments on the
//! f32 grid, so saving is lossless and a resumed run continues bit-exactly.

use serde::{Deserialize, Serialize};
use std::path::Path;

use super::{AdamState, NetConfig, VectorFieldNet, POS_FEATURES, TIME_FEATURES};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"SLATCKPT";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainMeta {
    pub steps: u64,
    pub final_loss: Option<f64>,
    pub manifest_hash: Option<String>,
    pub seed: u64,
    pub lr: f64,
    pub batch: usize,
    pub voxel_subsample: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OptimizerHeader {
    step: u64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    architecture: NetConfig,
    layers: usize,
    activation: String,
    input_layout: String,
    param_count: usize,
    optimizer: Option<OptimizerHeader>,
    metadata: TrainMeta,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub net: VectorFieldNet,
    pub adam: Option<AdamState>,
    pub meta: TrainMeta,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let cfg = *self.net.config();
        let header = Header {
            architecture: cfg,
            layers: 2,
            activation: "silu".into(),
            input_layout: format!(
                "state({c}) | position({POS_FEATURES}) | time({TIME_FEATURES}) | class_onehot({k}) | pooled_state({c})",
                c = cfg.channels,
                k = cfg.classes
            ),
            param_count: cfg.param_count(),
            optimizer: self.adam.as_ref().map(|a| OptimizerHeader {
                step: a.step,
                beta1: a.beta1,
                beta2: a.beta2,
                eps: a.eps,
            }),
            metadata: self.meta.clone(),
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(16 + json.len() + 12 * cfg.param_count());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u32).to_le_bytes());
        out.extend_from_slice(&json);
        let mut put = |vals: &[f64]| {
            for &v in vals {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        };
        put(self.net.params());
        if let Some(a) = &self.adam {
            put(&a.m);
            put(&a.v);
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(Error::Format("not a checkpoint (bad magic)".into()));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let hlen = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes")) as usize;
        let body = bytes
            .get(16..16 + hlen)
            .ok_or_else(|| Error::Format("truncated header".into()))?;
        let header: Header = serde_json::from_slice(body)?;
        let cfg = header.architecture;
        if cfg.hidden == 0 || cfg.channels == 0 {
            return Err(Error::Format("degenerate architecture in header".into()));
        }
        let p = cfg.param_count();
        if header.param_count != p {
            return Err(Error::Format(format!(
                "header declares {} parameters, architecture implies {p}",
                header.param_count
            )));
        }
        let blocks = if header.optimizer.is_some() { 3 } else { 1 };
        let blob = &bytes[16 + hlen..];
        if blob.len() != 4 * p * blocks {
            return Err(Error::Format(format!(
                "parameter blob is {} bytes, expected {}",
                blob.len(),
                4 * p * blocks
            )));
        }
        let read = |block: usize| -> Vec<f64> {
            blob[4 * p * block..4 * p * (block + 1)]
                .chunks_exact(4)
                .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))))
                .collect()
        };
        let net = VectorFieldNet::from_params(cfg, read(0))?;
        let adam = header.optimizer.map(|o| AdamState {
            m: read(1),
            v: read(2),
            step: o.step,
            beta1: o.beta1,
            beta2: o.beta2,
            eps: o.eps,
        });
        Ok(Self {
            net,
            adam,
            meta: header.metadata,
        })
    }
}

pub fn save_checkpoint(path: impl AsRef<Path>, ckpt: &Checkpoint) -> Result<()> {
    std::fs::write(path, ckpt.to_bytes()?)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    Checkpoint::from_bytes(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{gaussian_grid, Stage};
    use crate::rng::Rng;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut rng = Rng::new(1);
        let net = VectorFieldNet::new(NetConfig::new(Stage::SparseStructure, 4, 5), &mut rng);
        let ckpt = Checkpoint {
            net: net.clone(),
            adam: None,
            meta: TrainMeta {
                steps: 3,
                final_loss: Some(0.25),
                manifest_hash: Some("abc".into()),
                seed: 9,
                lr: 1e-3,
                batch: 4,
                voxel_subsample: 256,
            },
        };
        let back = Checkpoint::from_bytes(&ckpt.to_bytes().unwrap()).unwrap();
        assert_eq!(back, ckpt);
        let x = gaussian_grid(&mut rng, 8, 4);
        let a = net.forward(&x, 0.3, 1).unwrap();
        let b = back.net.forward(&x, 0.3, 1).unwrap();
        assert!(a.data().iter().zip(b.data()).all(|(p, q)| p.to_bits() == q.to_bits()));
    }

    #[test]
    fn header_is_readable_json() {
        let net = VectorFieldNet::zeros(NetConfig::new(Stage::StructuredLatent, 8, 5));
        let ckpt = Checkpoint {
            net,
            adam: Some(AdamState::new(NetConfig::new(Stage::StructuredLatent, 8, 5).param_count())),
            meta: TrainMeta::default(),
        };
        let bytes = ckpt.to_bytes().unwrap();
        assert_eq!(&bytes[..8], b"SLATCKPT");
        let hlen = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        let v: serde_json::Value = serde_json::from_slice(&bytes[16..16 + hlen]).unwrap();
        assert_eq!(v["architecture"]["stage"], "structured_latent");
        assert_eq!(v["architecture"]["hidden"], 128);
        assert_eq!(v["activation"], "silu");
        assert_eq!(Checkpoint::from_bytes(&bytes).unwrap(), ckpt);
    }

    #[test]
    fn corrupt_inputs_rejected() {
        assert!(Checkpoint::from_bytes(b"nope").is_err());
        let net = VectorFieldNet::zeros(NetConfig::new(Stage::SparseStructure, 4, 5));
        let ckpt = Checkpoint {
            net,
            adam: None,
            meta: TrainMeta::default(),
        };
        let mut bytes = ckpt.to_bytes().unwrap();
        bytes.pop();
        assert!(matches!(Checkpoint::from_bytes(&bytes), Err(Error::Format(_))));
    }
}
