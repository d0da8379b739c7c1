//! Geometry and appearance metrics for voxel assets.
//!
//! Point clouds are voxel centers `(p + 0.5) / N` in the unit cube. Chamfer
//! distance uses L1 point distances, F-scores use L2 distances with an
//! inclusive threshold.

mod nn;
mod record;
mod render;

pub use nn::{nearest_distances, nearest_distances_brute, Norm};
pub use record::{evaluate_inpaint, MetricRecord, GENERATION_FIELDS, RECONSTRUCTION_FIELDS};
pub use render::{render_ortho, Axis, RenderImage, RenderKind};

use crate::error::{Error, Result};
use crate::grid::Position;
use crate::shapes::VoxelAsset;

#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub points: Vec<[f64; 3]>,
}

impl PointCloud {
    pub fn new(points: Vec<[f64; 3]>) -> Self {
        Self { points }
    }

    pub fn from_positions(positions: &[Position], dim: usize) -> Self {
        let n = dim as f64;
        Self {
            points: positions
                .iter()
                .map(|p| [(p[0] as f64 + 0.5) / n, (p[1] as f64 + 0.5) / n, (p[2] as f64 + 0.5) / n])
                .collect(),
        }
    }

    pub fn from_asset(asset: &VoxelAsset) -> Self {
        Self::from_positions(&asset.occupied_positions(), asset.dim())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Symmetric Chamfer distance with L1 point distances (unscaled).
pub fn chamfer_l1(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyInput("point cloud"));
    }
    let ab = nearest_distances(&a.points, &b.points, Norm::L1);
    let ba = nearest_distances(&b.points, &a.points, Norm::L1);
    Ok(0.5 * (mean(&ab) + mean(&ba)))
}

/// Precision, recall and F-score of `pred` against `reference` at `tau`.
pub fn fscore(pred: &PointCloud, reference: &PointCloud, tau: f64) -> Result<(f64, f64, f64)> {
    if pred.is_empty() || reference.is_empty() {
        return Err(Error::EmptyInput("point cloud"));
    }
    if !(tau > 0.0) {
        return Err(Error::Parameter(format!("threshold {tau} must be positive")));
    }
    let frac = |d: Vec<f64>| d.iter().filter(|&&x| x <= tau).count() as f64 / d.len() as f64;
    let precision = frac(nearest_distances(&pred.points, &reference.points, Norm::L2));
    let recall = frac(nearest_distances(&reference.points, &pred.points, Norm::L2));
    let f = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok((precision, recall, f))
}

/// Intersection over union and Dice coefficient of two occupancy masks.
pub fn iou_dice(a: &[bool], b: &[bool]) -> Result<(f64, f64)> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!("occupancy sizes {} and {} differ", a.len(), b.len())));
    }
    let (mut inter, mut na, mut nb) = (0usize, 0usize, 0usize);
    for (&x, &y) in a.iter().zip(b) {
        inter += (x && y) as usize;
        na += x as usize;
        nb += y as usize;
    }
    if na + nb == 0 {
        return Err(Error::EmptyInput("both occupancy sets"));
    }
    let union = na + nb - inter;
    Ok((inter as f64 / union as f64, 2.0 * inter as f64 / (na + nb) as f64))
}

/// Occupancy mask restricted to `keep`.
pub fn restrict(occ: &[bool], keep: &[bool]) -> Vec<bool> {
    occ.iter().zip(keep).map(|(&o, &k)| o && k).collect()
}

pub const PSNR_CAP: f64 = 99.0;

fn check_same(a: &RenderImage, b: &RenderImage) -> Result<()> {
    if (a.width, a.height, a.channels) != (b.width, b.height, b.channels) {
        return Err(Error::Dimension(format!(
            "image {}x{}x{} vs {}x{}x{}",
            a.width, a.height, a.channels, b.width, b.height, b.channels
        )));
    }
    Ok(())
}

/// Peak signal-to-noise ratio for unit dynamic range, capped at 99 dB.
pub fn psnr(a: &RenderImage, b: &RenderImage) -> Result<f64> {
    check_same(a, b)?;
    let mse = a.data.iter().zip(&b.data).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.data.len() as f64;
    if mse < 1e-10 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP))
}

pub const SSIM_WINDOW: usize = 7;

/// Mean structural similarity: uniform 7x7 windows at every fully inside
/// position, population statistics, `C1 = 0.01^2`, `C2 = 0.03^2`, averaged
/// over windows and channels.
pub fn ssim(a: &RenderImage, b: &RenderImage) -> Result<f64> {
    check_same(a, b)?;
    let w = SSIM_WINDOW;
    if a.width < w || a.height < w {
        return Err(Error::Dimension(format!("SSIM needs images of at least {w}x{w}")));
    }
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let n = (w * w) as f64;
    let mut total = 0.0;
    let mut count = 0usize;
    for ch in 0..a.channels {
        for r0 in 0..=a.height - w {
            for c0 in 0..=a.width - w {
                let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for r in r0..r0 + w {
                    for c in c0..c0 + w {
                        let x = a.get(r, c, ch);
                        let y = b.get(r, c, ch);
                        sa += x;
                        sb += y;
                        saa += x * x;
                        sbb += y * y;
                        sab += x * y;
                    }
                }
                let (ma, mb) = (sa / n, sb / n);
                let va = (saa / n - ma * ma).max(0.0);
                let vb = (sbb / n - mb * mb).max(0.0);
                let cov = sab / n - ma * mb;
                total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                count += 1;
            }
        }
    }
    Ok(total / count as f64)
}

#[cfg(test)]
mod tests;
