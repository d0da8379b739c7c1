//! Orthographic voxel renders.
//!
//! The camera sits on the positive side of `axis` and looks towards the
//! origin. Image columns follow the lower-numbered remaining axis and rows
//! the higher-numbered one. The first occupied voxel along each ray sets the
//! pixel; empty rays give 0 in every channel.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::shapes::VoxelAsset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        ["x", "y", "z"][self as usize]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RenderKind {
    /// `1 - k / N` where `k` counts voxels marched before the hit.
    Depth,
    /// Surface normal from the signed distance field, mapped by `(n + 1) / 2`.
    Normal,
    /// Voxel color.
    Appearance,
}

impl RenderKind {
    pub const ALL: [RenderKind; 3] = [RenderKind::Depth, RenderKind::Normal, RenderKind::Appearance];

    pub fn name(self) -> &'static str {
        match self {
            RenderKind::Depth => "depth",
            RenderKind::Normal => "normal",
            RenderKind::Appearance => "appearance",
        }
    }

    pub fn channels(self) -> usize {
        match self {
            RenderKind::Depth => 1,
            _ => 3,
        }
    }
}

/// Row-major image with interleaved channels, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderImage {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl RenderImage {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || channels == 0 || data.len() != width * height * channels {
            return Err(Error::Dimension(format!("bad image {width}x{height}x{channels} with {} values", data.len())));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize, channels: usize) -> Self {
        Self {
            width,
            height,
            channels,
            data: vec![0.0; width * height * channels],
        }
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, ch: usize) -> f64 {
        self.data[(row * self.width + col) * self.channels + ch]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, ch: usize, v: f64) {
        let i = (row * self.width + col) * self.channels + ch;
        self.data[i] = v;
    }
}

/// Signed distance (in voxels) between voxel centers: negative inside,
/// the distance to the nearest voxel of the other kind. A grid with no
/// voxel of the other kind gets `-N` / `+N`.
pub(crate) fn signed_distance(asset: &VoxelAsset) -> Vec<f64> {
    let n = asset.dim();
    let occ = asset.occupancy();
    let pos = |v: usize| [v / (n * n), (v / n) % n, v % n];
    let (inside, outside): (Vec<usize>, Vec<usize>) = (0..occ.len()).partition(|&v| occ[v]);
    (0..occ.len())
        .map(|v| {
            let p = pos(v);
            let others = if occ[v] { &outside } else { &inside };
            let d2 = others
                .iter()
                .map(|&u| {
                    let q = pos(u);
                    (0..3).map(|a| (p[a] as f64 - q[a] as f64).powi(2)).sum::<f64>()
                })
                .fold(f64::INFINITY, f64::min);
            let d = if d2.is_finite() { d2.sqrt() } else { n as f64 };
            if occ[v] {
                -d
            } else {
                d
            }
        })
        .collect()
}

pub fn render_ortho(asset: &VoxelAsset, axis: Axis, kind: RenderKind) -> RenderImage {
    let n = asset.dim();
    let a = axis.index();
    let (ua, va) = match a {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    };
    let mut img = RenderImage::zeros(n, n, kind.channels());
    let sdf = (kind == RenderKind::Normal).then(|| signed_distance(asset));
    let idx = |p: [usize; 3]| (p[0] * n + p[1]) * n + p[2];
    for row in 0..n {
        for col in 0..n {
            let hit = (0..n).find_map(|k| {
                let mut p = [0usize; 3];
                p[a] = n - 1 - k;
                p[ua] = col;
                p[va] = row;
                asset.is_occupied(p).then_some((k, p))
            });
            let Some((k, p)) = hit else { continue };
            match kind {
                RenderKind::Depth => img.set(row, col, 0, 1.0 - k as f64 / n as f64),
                RenderKind::Appearance => {
                    let c = asset.color(p).expect("occupied");
                    for ch in 0..3 {
                        img.set(row, col, ch, c[ch]);
                    }
                }
                RenderKind::Normal => {
                    let sdf = sdf.as_ref().expect("computed");
                    let mut g = [0.0; 3];
                    for ax in 0..3 {
                        let mut hi = p;
                        let mut lo = p;
                        hi[ax] = (p[ax] + 1).min(n - 1);
                        lo[ax] = p[ax].saturating_sub(1);
                        g[ax] = (sdf[idx(hi)] - sdf[idx(lo)]) / 2.0;
                    }
                    let norm = (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt();
                    if norm > 1e-12 {
                        for v in g.iter_mut() {
                            *v /= norm;
                        }
                    } else {
                        g = [0.0; 3];
                        g[a] = 1.0;
                    }
                    for ch in 0..3 {
                        img.set(row, col, ch, (g[ch] + 1.0) / 2.0);
                    }
                }
            }
        }
    }
    img
}
