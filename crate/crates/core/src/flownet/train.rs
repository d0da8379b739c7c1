//! Conditional flow-matching training loop.
//!
//! Step `s` draws its minibatch from `Rng::new(derive_seed(seed, s))`, so a
//! run resumed from a checkpoint at step `s` replays exactly the batches the
//! uninterrupted run would have seen. After every Adam update the parameters
//! and moments are rounded to f32, the checkpoint storage precision.

use serde::{Deserialize, Serialize};

use super::{adam_step, cfm_loss_rows, round_to_f32, AdamState, Checkpoint, TrainMeta, VectorFieldNet};
use crate::error::{Error, Result};
use crate::grid::Latent;
use crate::rng::{derive_seed, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Total number of optimizer steps (a resumed run stops here too).
    pub steps: u64,
    pub batch: usize,
    pub lr: f64,
    pub seed: u64,
    /// Voxels per sample entering the loss; 0 uses every voxel.
    pub voxel_subsample: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 300,
            batch: 8,
            lr: 2e-3,
            seed: 0,
            voxel_subsample: 512,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainItem<S> {
    pub x0: S,
    pub class_id: usize,
}

/// Step-0 checkpoint for `net` with zeroed optimizer moments.
pub fn fresh_checkpoint(net: VectorFieldNet, config: &TrainConfig, manifest_hash: Option<String>) -> Checkpoint {
    let adam = AdamState::new(net.params().len());
    Checkpoint {
        net,
        adam: Some(adam),
        meta: TrainMeta {
            steps: 0,
            final_loss: None,
            manifest_hash,
            seed: config.seed,
            lr: config.lr,
            batch: config.batch,
            voxel_subsample: config.voxel_subsample,
        },
    }
}

/// Train a fresh network. Returns the final checkpoint (with optimizer state)
/// and the per-step loss curve.
pub fn train<S: Latent>(
    net: VectorFieldNet,
    data: &[TrainItem<S>],
    config: &TrainConfig,
    manifest_hash: Option<String>,
) -> Result<(Checkpoint, Vec<f64>)> {
    resume(fresh_checkpoint(net, config, manifest_hash), data, config)
}

/// Continue training from `ckpt.meta.steps` up to `config.steps`.
pub fn resume<S: Latent>(
    mut ckpt: Checkpoint,
    data: &[TrainItem<S>],
    config: &TrainConfig,
) -> Result<(Checkpoint, Vec<f64>)> {
    if data.is_empty() {
        return Err(Error::EmptyInput("training dataset"));
    }
    if config.batch == 0 || !(config.lr > 0.0) {
        return Err(Error::Parameter("batch must be >= 1 and lr > 0".into()));
    }
    let n_params = ckpt.net.params().len();
    let mut adam = ckpt.adam.take().unwrap_or_else(|| AdamState::new(n_params));
    let mut curve = Vec::new();
    for step in ckpt.meta.steps..config.steps {
        let mut rng = Rng::new(derive_seed(config.seed, step));
        let mut grads = vec![0.0; n_params];
        let mut loss = 0.0;
        for _ in 0..config.batch {
            let item = &data[rng.below(data.len())];
            let t = rng.uniform();
            let eps = item.x0.with_values(rng.normal_vec(item.x0.values().len()))?;
            let n = item.x0.num_voxels();
            let rows = (config.voxel_subsample > 0 && config.voxel_subsample < n)
                .then(|| rng.choose_indices(n, config.voxel_subsample));
            let (l, g) = cfm_loss_rows(&ckpt.net, &item.x0, &eps, t, item.class_id, rows.as_deref())?;
            loss += l;
            for (acc, gi) in grads.iter_mut().zip(&g) {
                *acc += gi;
            }
        }
        let scale = 1.0 / config.batch as f64;
        loss *= scale;
        if !loss.is_finite() {
            return Err(Error::Training { step: step as usize });
        }
        for g in grads.iter_mut() {
            *g *= scale;
        }
        adam_step(ckpt.net.params_mut(), &grads, &mut adam, config.lr)?;
        round_to_f32(ckpt.net.params_mut());
        round_to_f32(&mut adam.m);
        round_to_f32(&mut adam.v);
        curve.push(loss);
        ckpt.meta.steps = step + 1;
        ckpt.meta.final_loss = Some(loss);
    }
    ckpt.adam = Some(adam);
    Ok((ckpt, curve))
}

/// Trailing moving average with the given window.
pub fn smooth(curve: &[f64], window: usize) -> Vec<f64> {
    let w = window.max(1);
    let mut out = Vec::with_capacity(curve.len());
    let mut acc = 0.0;
    for i in 0..curve.len() {
        acc += curve[i];
        if i >= w {
            acc -= curve[i - w];
        }
        out.push(acc / (i + 1).min(w) as f64);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flownet::NetConfig;
    use crate::grid::Stage;
    use crate::shapes::{encode_sparse_target, generate_asset_dim, ShapeFamily};

    fn tiny_data() -> Vec<TrainItem<crate::grid::FeatureGrid>> {
        let fam = ShapeFamily::Sphere {
            center: [4.0; 3],
            radius: 3.0,
            hue: 0.1,
        };
        let asset = generate_asset_dim(&mut Rng::new(1), &fam, 8).unwrap();
        vec![TrainItem {
            x0: encode_sparse_target(&asset),
            class_id: 0,
        }]
    }

    fn tiny_net() -> VectorFieldNet {
        let cfg = NetConfig {
            hidden: 16,
            ..NetConfig::new(Stage::SparseStructure, 4, 5)
        };
        VectorFieldNet::new(cfg, &mut Rng::new(2))
    }

    fn cfg(steps: u64) -> TrainConfig {
        TrainConfig {
            steps,
            batch: 2,
            lr: 5e-3,
            seed: 3,
            voxel_subsample: 64,
        }
    }

    #[test]
    fn zero_steps_keeps_initial_parameters() {
        let net = tiny_net();
        let (ckpt, curve) = train(net.clone(), &tiny_data(), &cfg(0), None).unwrap();
        assert_eq!(ckpt.net, net);
        assert!(curve.is_empty());
    }

    #[test]
    fn same_seed_same_curve() {
        let a = train(tiny_net(), &tiny_data(), &cfg(20), None).unwrap().1;
        let b = train(tiny_net(), &tiny_data(), &cfg(20), None).unwrap().1;
        assert_eq!(a, b);
    }

    #[test]
    fn resume_matches_uninterrupted_run() {
        let data = tiny_data();
        let (full, full_curve) = train(tiny_net(), &data, &cfg(30), None).unwrap();
        let (half, mut curve) = train(tiny_net(), &data, &cfg(12), None).unwrap();
        let half = Checkpoint::from_bytes(&half.to_bytes().unwrap()).unwrap();
        let (rest, tail) = resume(half, &data, &cfg(30)).unwrap();
        curve.extend(tail);
        assert_eq!(curve, full_curve);
        assert_eq!(rest.net, full.net);
    }

    #[test]
    fn empty_dataset_rejected() {
        let data: Vec<TrainItem<crate::grid::FeatureGrid>> = vec![];
        assert!(matches!(train(tiny_net(), &data, &cfg(1), None), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn diverging_run_reports_step() {
        let mut c = cfg(50);
        c.lr = 1e30;
        match train(tiny_net(), &tiny_data(), &c, None) {
            Err(Error::Training { step }) => assert!(step > 0),
            Err(e) => panic!("unexpected error {e}"),
            Ok((_, curve)) => panic!("expected divergence, final loss {:?}", curve.last()),
        }
    }

    #[test]
    fn smoothing() {
        assert_eq!(smooth(&[1.0, 3.0, 5.0, 7.0], 2), vec![1.0, 2.0, 4.0, 6.0]);
    }
}
