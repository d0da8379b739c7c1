//! Experiment drivers shared by the command line and the acceptance suite:
//! two-stage training, the inpainting benchmark, ablations, convergence
//! traces and seed diversity.
//!
//! Every child seed is derived from one global seed with
//! [`derive_seed`]/[`derive_seed_str`], so results do not depend on the
//! order in which assets are processed.

mod ablate;
mod bench;

pub use ablate::{ablate, ablation_csv, write_ablation, AblateConfig, AblationRow, Variant, ABLATION_FIELDS};
pub use bench::{
    bench, bench_items, SUMMARY_FIELDS, convergence_step, convergence_trace, diversity, run_method, BenchConfig, BenchItem, BenchReport,
    DiversityReport, InpaintMethod, MethodRun, TracePoint,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flownet::{train, Checkpoint, NetConfig, TrainConfig, TrainItem, VectorFieldNet};
use crate::grid::Stage;
use crate::rng::{derive_seed_str, Rng};
use crate::shapes::{encode_slat_target, encode_sparse_target, VoxelAsset, NUM_CLASSES, SLAT_CHANNELS, SPARSE_CHANNELS};

/// The two networks used for generation and inpainting.
#[derive(Debug, Clone)]
pub struct ModelPair {
    pub sparse: VectorFieldNet,
    pub slat: VectorFieldNet,
}

/// Training settings for both stages. The structured-latent stage uses the
/// same schedule with a seed derived from `train.seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PairTrainConfig {
    pub train: TrainConfig,
    pub hidden: usize,
}

impl Default for PairTrainConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            hidden: 128,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainedPair {
    pub sparse: Checkpoint,
    pub slat: Checkpoint,
    pub sparse_curve: Vec<f64>,
    pub slat_curve: Vec<f64>,
}

impl TrainedPair {
    pub fn models(&self) -> ModelPair {
        ModelPair {
            sparse: self.sparse.net.clone(),
            slat: self.slat.net.clone(),
        }
    }
}

pub fn stage_config(stage: Stage, train: &TrainConfig) -> TrainConfig {
    match stage {
        Stage::SparseStructure => train.clone(),
        Stage::StructuredLatent => TrainConfig {
            seed: derive_seed_str(train.seed, "slat"),
            ..train.clone()
        },
    }
}

/// Fresh network for `stage`, initialized from the training seed.
pub fn init_net(stage: Stage, hidden: usize, seed: u64) -> VectorFieldNet {
    let channels = match stage {
        Stage::SparseStructure => SPARSE_CHANNELS,
        Stage::StructuredLatent => SLAT_CHANNELS,
    };
    let cfg = NetConfig {
        hidden,
        ..NetConfig::new(stage, channels, NUM_CLASSES)
    };
    VectorFieldNet::new(cfg, &mut Rng::new(derive_seed_str(seed, stage.name())))
}

pub fn sparse_items(assets: &[VoxelAsset]) -> Vec<TrainItem<crate::grid::FeatureGrid>> {
    assets
        .iter()
        .map(|a| TrainItem {
            x0: encode_sparse_target(a),
            class_id: a.class_id(),
        })
        .collect()
}

pub fn slat_items(assets: &[VoxelAsset]) -> Vec<TrainItem<crate::grid::SparseLatent>> {
    assets
        .iter()
        .map(|a| TrainItem {
            x0: encode_slat_target(a),
            class_id: a.class_id(),
        })
        .collect()
}

/// Train both stages from scratch on `assets`.
pub fn train_pair(assets: &[VoxelAsset], config: &PairTrainConfig, manifest_hash: Option<String>) -> Result<TrainedPair> {
    if assets.is_empty() {
        return Err(Error::EmptyInput("training set"));
    }
    let cs = stage_config(Stage::SparseStructure, &config.train);
    let cl = stage_config(Stage::StructuredLatent, &config.train);
    let net_s = init_net(Stage::SparseStructure, config.hidden, cs.seed);
    let net_l = init_net(Stage::StructuredLatent, config.hidden, cl.seed);
    let (sparse, sparse_curve) = train(net_s, &sparse_items(assets), &cs, manifest_hash.clone())?;
    let (slat, slat_curve) = train(net_l, &slat_items(assets), &cl, manifest_hash)?;
    Ok(TrainedPair {
        sparse,
        slat,
        sparse_curve,
        slat_curve,
    })
}

pub(crate) fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Mean over the non-NaN entries; NaN when there are none.
pub(crate) fn finite_mean(values: &[f64]) -> f64 {
    let v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

#[cfg(test)]
mod tests;
