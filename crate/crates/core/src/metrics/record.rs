use serde::{Deserialize, Serialize};

use super::{chamfer_l1, fscore, iou_dice, psnr, render_ortho, restrict, ssim, Axis, PointCloud, RenderKind};
use crate::error::{Error, Result};
use crate::shapes::{RegionMask, VoxelAsset};

/// Reconstruction-table columns (preserved region).
pub const RECONSTRUCTION_FIELDS: [&str; 9] = [
    "pres_iou",
    "pres_dice",
    "pres_cd_x100",
    "pres_f001",
    "pres_f002",
    "pres_psnr_normal",
    "pres_ssim_normal",
    "pres_psnr_appearance",
    "pres_ssim_appearance",
];

/// Generation-table columns (inpaint region). The count and color-histogram
/// distances compare against the ground truth's own inpaint half and stand
/// in for distribution-level scores.
pub const GENERATION_FIELDS: [&str; 5] = [
    "inp_count",
    "inp_count_gt",
    "inp_count_rel_diff",
    "inp_color_hist_l1",
    "inp_iou",
];

/// Flat per-asset metric record; field order is the CSV column order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub pres_iou: f64,
    pub pres_dice: f64,
    /// Chamfer-L1 x 100; NaN when the result has no preserved voxel.
    pub pres_cd_x100: f64,
    pub pres_f001: f64,
    pub pres_f002: f64,
    pub pres_psnr_normal: f64,
    pub pres_ssim_normal: f64,
    pub pres_psnr_appearance: f64,
    pub pres_ssim_appearance: f64,
    pub inp_count: f64,
    pub inp_count_gt: f64,
    pub inp_count_rel_diff: f64,
    pub inp_color_hist_l1: f64,
    /// 1 when both inpaint regions are empty.
    pub inp_iou: f64,
}

impl MetricRecord {
    pub fn reconstruction_values(&self) -> [f64; 9] {
        [
            self.pres_iou,
            self.pres_dice,
            self.pres_cd_x100,
            self.pres_f001,
            self.pres_f002,
            self.pres_psnr_normal,
            self.pres_ssim_normal,
            self.pres_psnr_appearance,
            self.pres_ssim_appearance,
        ]
    }

    pub fn generation_values(&self) -> [f64; 5] {
        [
            self.inp_count,
            self.inp_count_gt,
            self.inp_count_rel_diff,
            self.inp_color_hist_l1,
            self.inp_iou,
        ]
    }
}

const HIST_BINS: usize = 4;

fn color_histogram(asset: &VoxelAsset, region: &[bool]) -> Vec<f64> {
    let mut h = vec![0.0; HIST_BINS.pow(3)];
    let mut n = 0.0;
    for v in 0..region.len() {
        if !region[v] {
            continue;
        }
        if let Some(c) = asset.voxel_color(v) {
            let b = |x: f64| ((x * HIST_BINS as f64) as usize).min(HIST_BINS - 1);
            h[(b(c[0]) * HIST_BINS + b(c[1])) * HIST_BINS + b(c[2])] += 1.0;
            n += 1.0;
        }
    }
    if n > 0.0 {
        for x in h.iter_mut() {
            *x /= n;
        }
    }
    h
}

fn image_scores(result: &VoxelAsset, gt: &VoxelAsset, kind: RenderKind) -> Result<(f64, f64)> {
    let (mut p, mut s) = (0.0, 0.0);
    for axis in Axis::ALL {
        let a = render_ortho(result, axis, kind);
        let b = render_ortho(gt, axis, kind);
        p += psnr(&a, &b)?;
        s += ssim(&a, &b)?;
    }
    Ok((p / 3.0, s / 3.0))
}

/// Preserved-region reconstruction metrics and inpaint-region statistics.
pub fn evaluate_inpaint(result: &VoxelAsset, gt: &VoxelAsset, mask: &RegionMask) -> Result<MetricRecord> {
    if result.dim() != gt.dim() || gt.dim() != mask.dim() {
        return Err(Error::Dimension("result, ground truth and mask must share N".into()));
    }
    let keep = mask.preserved();
    let res_p = result.restricted(keep);
    let gt_p = gt.restricted(keep);
    let (pres_iou, pres_dice) = iou_dice(res_p.occupancy(), gt_p.occupancy())?;

    let pc_res = PointCloud::from_asset(&res_p);
    let pc_gt = PointCloud::from_asset(&gt_p);
    let (cd, f1, f2) = if pc_res.is_empty() || pc_gt.is_empty() {
        (f64::NAN, 0.0, 0.0)
    } else {
        (
            100.0 * chamfer_l1(&pc_res, &pc_gt)?,
            fscore(&pc_res, &pc_gt, 0.01)?.2,
            fscore(&pc_res, &pc_gt, 0.02)?.2,
        )
    };
    let (psnr_n, ssim_n) = image_scores(&res_p, &gt_p, RenderKind::Normal)?;
    let (psnr_a, ssim_a) = image_scores(&res_p, &gt_p, RenderKind::Appearance)?;

    let inp = mask.inpaint();
    let occ_r = restrict(result.occupancy(), &inp);
    let occ_g = restrict(gt.occupancy(), &inp);
    let n_r = occ_r.iter().filter(|&&o| o).count() as f64;
    let n_g = occ_g.iter().filter(|&&o| o).count() as f64;
    let inp_iou = match iou_dice(&occ_r, &occ_g) {
        Ok((iou, _)) => iou,
        Err(Error::EmptyInput(_)) => 1.0,
        Err(e) => return Err(e),
    };
    let hist_l1 = match (n_r > 0.0, n_g > 0.0) {
        (true, true) => color_histogram(result, &inp)
            .iter()
            .zip(color_histogram(gt, &inp))
            .map(|(a, b)| (a - b).abs())
            .sum(),
        (false, false) => 0.0,
        _ => 2.0,
    };
    Ok(MetricRecord {
        pres_iou,
        pres_dice,
        pres_cd_x100: cd,
        pres_f001: f1,
        pres_f002: f2,
        pres_psnr_normal: psnr_n,
        pres_ssim_normal: ssim_n,
        pres_psnr_appearance: psnr_a,
        pres_ssim_appearance: ssim_a,
        inp_count: n_r,
        inp_count_gt: n_g,
        inp_count_rel_diff: (n_r - n_g).abs() / n_g.max(1.0),
        inp_color_hist_l1: hist_l1,
        inp_iou,
    })
}
