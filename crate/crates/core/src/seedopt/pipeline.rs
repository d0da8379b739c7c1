use super::{optimize_slat_seed, optimize_sparse_seed_observed, ConfigSeedOpt, GridTarget, ObservationTarget, SeedState, SlatTarget};
use crate::error::Result;
use crate::flownet::{Conditioned, VectorFieldNet};
use crate::grid::{FeatureGrid, Position, SparseLatent};
use crate::sampler::{active_set, euler_sample, finish_from_slat, slat_noise, SamplerConfig};
use crate::shapes::{encode_sparse_target, RegionMask, VoxelAsset, SLAT_CHANNELS};

/// Sparse-structure target: the encoded asset, constrained on preserved voxels.
pub fn sparse_target(asset: &VoxelAsset, mask: &RegionMask) -> Result<GridTarget> {
    ObservationTarget::new(encode_sparse_target(asset), mask.preserved().to_vec())
}

/// Structured-latent target on `active`: encoded colors on voxels that are
/// preserved, occupied in the asset and active. Also returns how many
/// preserved occupied voxels are missing from the active set.
pub fn slat_target(asset: &VoxelAsset, mask: &RegionMask, active: &[Position]) -> Result<(SlatTarget, usize)> {
    let mut features = vec![0.0; active.len() * SLAT_CHANNELS];
    let mut flags = vec![false; active.len()];
    for (i, p) in active.iter().enumerate() {
        if mask.is_preserved(*p) {
            if let Some(col) = asset.color(*p) {
                flags[i] = true;
                for k in 0..3 {
                    features[i * SLAT_CHANNELS + k] = 2.0 * col[k] - 1.0;
                }
            }
        }
    }
    let kept = flags.iter().filter(|&&f| f).count();
    let wanted = asset
        .occupied_positions()
        .into_iter()
        .filter(|p| mask.is_preserved(*p))
        .count();
    let y = SparseLatent::new(asset.dim(), SLAT_CHANNELS, active.to_vec(), features)?;
    Ok((ObservationTarget::new(y, flags)?, wanted - kept))
}

#[derive(Debug, Clone)]
pub struct InpaintOutcome {
    pub asset: VoxelAsset,
    pub sparse: SeedState<FeatureGrid>,
    /// `None` when no preserved voxel of the asset survived into the
    /// generated structure; the structured latent is then sampled from the
    /// plain seed.
    pub slat: Option<SeedState<SparseLatent>>,
    /// Preserved occupied voxels absent from the generated active set.
    pub dropped_preserved: usize,
}

/// Two-stage inpainting by seed optimization. The observer sees the
/// sparse-structure seed after every number of completed updates.
pub fn inpaint_observed<O>(
    net_s: &VectorFieldNet,
    net_l: &VectorFieldNet,
    asset: &VoxelAsset,
    mask: &RegionMask,
    class_id: usize,
    config: &ConfigSeedOpt,
    observer: &mut O,
) -> Result<InpaintOutcome>
where
    O: FnMut(usize, &SeedState<FeatureGrid>) -> Result<()>,
{
    config.validate()?;
    let sampler = SamplerConfig {
        steps: config.sampling_steps,
        seed: config.seed,
        ..SamplerConfig::default()
    };
    let field_s = Conditioned::new(net_s, class_id);
    let target_s = sparse_target(asset, mask)?;
    let sparse = optimize_sparse_seed_observed(&field_s, &target_s, config, observer)?;
    let structure = euler_sample(&field_s, sparse.view(), &sampler)?;
    let active = active_set(&structure)?;

    let (target_l, dropped) = slat_target(asset, mask, &active)?;
    let field_l = Conditioned::new(net_l, class_id);
    let (z_t, slat) = if target_l.masked_entries() > 0 {
        let st = optimize_slat_seed(&field_l, &active, &target_l, config)?;
        (st.view().clone(), Some(st))
    } else {
        (slat_noise(config.seed, asset.dim(), active), None)
    };
    let result = finish_from_slat(net_l, &z_t, class_id, &sampler)?;
    Ok(InpaintOutcome {
        asset: result,
        sparse,
        slat,
        dropped_preserved: dropped,
    })
}

pub fn inpaint(
    net_s: &VectorFieldNet,
    net_l: &VectorFieldNet,
    asset: &VoxelAsset,
    mask: &RegionMask,
    class_id: usize,
    config: &ConfigSeedOpt,
) -> Result<InpaintOutcome> {
    inpaint_observed(net_s, net_l, asset, mask, class_id, config, &mut |_, _| Ok(()))
}
