//! Procedural colored voxel shapes, their toy latent encodings, and region
//! masks.
//!
//! Shapes live on an `N^3` grid (N = 16 by default). A voxel `(i, j, k)` is
//! occupied when its center `(i + 0.5, j + 0.5, k + 0.5)` lies inside the
//! shape's implicit volume. The sparse-structure encoding is a 4-channel grid
//! (occupancy logit ±1, color mapped to [-1, 1]); the structured-latent
//! encoding attaches 8 channels per occupied voxel (color in the first three,
//! zeros in the rest).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{FeatureGrid, Position, SparseLatent};
use crate::rng::Rng;

pub const DEFAULT_DIM: usize = 16;
pub const SPARSE_CHANNELS: usize = 4;
pub const SLAT_CHANNELS: usize = 8;
pub const NUM_CLASSES: usize = 5;
pub const MIN_OCCUPIED: usize = 32;

const COLOR_JITTER: f64 = 0.03;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyKind {
    Sphere,
    Box,
    Ellipsoid,
    Torus,
    TwoLobe,
}

impl FamilyKind {
    pub const ALL: [FamilyKind; NUM_CLASSES] = [
        FamilyKind::Sphere,
        FamilyKind::Box,
        FamilyKind::Ellipsoid,
        FamilyKind::Torus,
        FamilyKind::TwoLobe,
    ];

    pub fn class_id(self) -> usize {
        self as usize
    }

    pub fn from_class_id(id: usize) -> Option<Self> {
        Self::ALL.get(id).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            FamilyKind::Sphere => "sphere",
            FamilyKind::Box => "box",
            FamilyKind::Ellipsoid => "ellipsoid",
            FamilyKind::Torus => "torus",
            FamilyKind::TwoLobe => "two-lobe",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|k| k.name() == name)
            .ok_or_else(|| Error::Parameter(format!("unknown shape family `{name}`")))
    }
}

/// A shape family together with its continuous parameters, in voxel units.
///
/// Sampling ranges (see [`ShapeFamily::sample`]) for `N = 16`:
///
/// | family    | parameters                                                   |
/// |-----------|--------------------------------------------------------------|
/// | sphere    | radius 3.0..7.0                                              |
/// | box       | half extents 2.0..6.0 per axis                               |
/// | ellipsoid | radii 2.5..7.0 per axis                                      |
/// | torus     | major 3.5..5.5, minor 1.2..2.5, axis 0..3                    |
/// | two-lobe  | lobe radii 2.5..4.0, half separation 3.0..5.0, axis 0..3     |
///
/// Centers are drawn within ±2 voxels of the grid center and hue in [0, 1).
/// Validation is looser: any finite parameters that keep sizes positive and
/// centers inside the grid are accepted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "kebab-case")]
pub enum ShapeFamily {
    Sphere {
        center: [f64; 3],
        radius: f64,
        hue: f64,
    },
    Box {
        center: [f64; 3],
        half: [f64; 3],
        hue: f64,
    },
    Ellipsoid {
        center: [f64; 3],
        radii: [f64; 3],
        hue: f64,
    },
    Torus {
        center: [f64; 3],
        axis: usize,
        major: f64,
        minor: f64,
        hue: f64,
    },
    TwoLobe {
        center: [f64; 3],
        axis: usize,
        offset: f64,
        radii: [f64; 2],
        hue: f64,
    },
}

impl ShapeFamily {
    pub fn kind(&self) -> FamilyKind {
        match self {
            ShapeFamily::Sphere { .. } => FamilyKind::Sphere,
            ShapeFamily::Box { .. } => FamilyKind::Box,
            ShapeFamily::Ellipsoid { .. } => FamilyKind::Ellipsoid,
            ShapeFamily::Torus { .. } => FamilyKind::Torus,
            ShapeFamily::TwoLobe { .. } => FamilyKind::TwoLobe,
        }
    }

    pub fn hue(&self) -> f64 {
        match *self {
            ShapeFamily::Sphere { hue, .. }
            | ShapeFamily::Box { hue, .. }
            | ShapeFamily::Ellipsoid { hue, .. }
            | ShapeFamily::Torus { hue, .. }
            | ShapeFamily::TwoLobe { hue, .. } => hue,
        }
    }

    /// Draw parameters for `kind` from the documented ranges.
    pub fn sample(kind: FamilyKind, rng: &mut Rng, dim: usize) -> Self {
        let s = dim as f64 / DEFAULT_DIM as f64;
        let mid = dim as f64 / 2.0;
        let mut center = || {
            [
                rng.uniform_range(mid - 2.0 * s, mid + 2.0 * s),
                rng.uniform_range(mid - 2.0 * s, mid + 2.0 * s),
                rng.uniform_range(mid - 2.0 * s, mid + 2.0 * s),
            ]
        };
        let c = center();
        match kind {
            FamilyKind::Sphere => ShapeFamily::Sphere {
                center: c,
                radius: rng.uniform_range(3.0, 7.0) * s,
                hue: rng.uniform(),
            },
            FamilyKind::Box => ShapeFamily::Box {
                center: c,
                half: [
                    rng.uniform_range(2.0, 6.0) * s,
                    rng.uniform_range(2.0, 6.0) * s,
                    rng.uniform_range(2.0, 6.0) * s,
                ],
                hue: rng.uniform(),
            },
            FamilyKind::Ellipsoid => ShapeFamily::Ellipsoid {
                center: c,
                radii: [
                    rng.uniform_range(2.5, 7.0) * s,
                    rng.uniform_range(2.5, 7.0) * s,
                    rng.uniform_range(2.5, 7.0) * s,
                ],
                hue: rng.uniform(),
            },
            FamilyKind::Torus => ShapeFamily::Torus {
                center: c,
                axis: rng.below(3),
                major: rng.uniform_range(3.5, 5.5) * s,
                minor: rng.uniform_range(1.2, 2.5) * s,
                hue: rng.uniform(),
            },
            FamilyKind::TwoLobe => ShapeFamily::TwoLobe {
                center: c,
                axis: rng.below(3),
                offset: rng.uniform_range(3.0, 5.0) * s,
                radii: [rng.uniform_range(2.5, 4.0) * s, rng.uniform_range(2.5, 4.0) * s],
                hue: rng.uniform(),
            },
        }
    }

    fn validate(&self, dim: usize) -> Result<()> {
        let n = dim as f64;
        let err = |what: &str| Err(Error::Parameter(format!("{}: {what}", self.kind().name())));
        let center = match self {
            ShapeFamily::Sphere { center, .. }
            | ShapeFamily::Box { center, .. }
            | ShapeFamily::Ellipsoid { center, .. }
            | ShapeFamily::Torus { center, .. }
            | ShapeFamily::TwoLobe { center, .. } => center,
        };
        if !center.iter().all(|c| c.is_finite() && (0.0..=n).contains(c)) {
            return err("center outside the grid");
        }
        let hue = self.hue();
        if !(hue.is_finite() && (0.0..=1.0).contains(&hue)) {
            return err("hue outside [0, 1]");
        }
        let positive = |v: f64| v.is_finite() && v > 0.0 && v <= n;
        let ok = match self {
            ShapeFamily::Sphere { radius, .. } => positive(*radius),
            ShapeFamily::Box { half, .. } => half.iter().all(|&h| positive(h)),
            ShapeFamily::Ellipsoid { radii, .. } => radii.iter().all(|&r| positive(r)),
            ShapeFamily::Torus {
                axis, major, minor, ..
            } => *axis < 3 && positive(*major) && positive(*minor) && minor < major,
            ShapeFamily::TwoLobe {
                axis, offset, radii, ..
            } => *axis < 3 && offset.is_finite() && *offset >= 0.0 && radii.iter().all(|&r| positive(r)),
        };
        if ok {
            Ok(())
        } else {
            err("size parameter out of range")
        }
    }

    /// Whether a continuous point lies inside the shape.
    pub fn contains(&self, p: [f64; 3]) -> bool {
        match self {
            ShapeFamily::Sphere { center, radius, .. } => dist2(p, *center) <= radius * radius,
            ShapeFamily::Box { center, half, .. } => {
                (0..3).all(|a| (p[a] - center[a]).abs() <= half[a])
            }
            ShapeFamily::Ellipsoid { center, radii, .. } => {
                (0..3)
                    .map(|a| ((p[a] - center[a]) / radii[a]).powi(2))
                    .sum::<f64>()
                    <= 1.0
            }
            ShapeFamily::Torus {
                center,
                axis,
                major,
                minor,
                ..
            } => {
                let q = [p[0] - center[0], p[1] - center[1], p[2] - center[2]];
                let along = q[*axis];
                let rho = (0..3)
                    .filter(|a| a != axis)
                    .map(|a| q[a] * q[a])
                    .sum::<f64>()
                    .sqrt();
                (rho - major).powi(2) + along * along <= minor * minor
            }
            ShapeFamily::TwoLobe {
                center,
                axis,
                offset,
                radii,
                ..
            } => {
                let mut a = *center;
                let mut b = *center;
                a[*axis] -= offset;
                b[*axis] += offset;
                dist2(p, a) <= radii[0] * radii[0] || dist2(p, b) <= radii[1] * radii[1]
            }
        }
    }
}

fn dist2(a: [f64; 3], b: [f64; 3]) -> f64 {
    (0..3).map(|i| (a[i] - b[i]).powi(2)).sum()
}

/// HSV to RGB, all components in [0, 1].
pub fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f64; 3] {
    let h6 = (h.rem_euclid(1.0)) * 6.0;
    let sector = h6.floor() as i32;
    let f = h6 - h6.floor();
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match sector {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}

/// A colored voxel asset.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelAsset {
    dim: usize,
    occupancy: Vec<bool>,
    /// Per voxel; zero wherever the voxel is empty.
    colors: Vec<[f64; 3]>,
    class_id: usize,
}

impl VoxelAsset {
    pub fn new(
        dim: usize,
        occupancy: Vec<bool>,
        mut colors: Vec<[f64; 3]>,
        class_id: usize,
    ) -> Result<Self> {
        let n = dim * dim * dim;
        if occupancy.len() != n || colors.len() != n {
            return Err(Error::Dimension(format!(
                "asset on {dim}^3 grid needs {n} voxels"
            )));
        }
        for (c, &occ) in colors.iter_mut().zip(&occupancy) {
            if occ {
                for v in c.iter_mut() {
                    *v = v.clamp(0.0, 1.0);
                }
            } else {
                *c = [0.0; 3];
            }
        }
        Ok(Self {
            dim,
            occupancy,
            colors,
            class_id,
        })
    }

    /// Asset with the given occupied voxels and per-voxel colors.
    pub fn from_voxels(
        dim: usize,
        positions: &[Position],
        colors: &[[f64; 3]],
        class_id: usize,
    ) -> Result<Self> {
        if positions.len() != colors.len() {
            return Err(Error::Dimension("one color per position required".into()));
        }
        let n = dim * dim * dim;
        let mut occ = vec![false; n];
        let mut col = vec![[0.0; 3]; n];
        for (p, c) in positions.iter().zip(colors) {
            if p.iter().any(|&x| x >= dim) {
                return Err(Error::Dimension(format!("position {p:?} outside grid")));
            }
            let v = (p[0] * dim + p[1]) * dim + p[2];
            occ[v] = true;
            col[v] = *c;
        }
        Self::new(dim, occ, col, class_id)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn class_id(&self) -> usize {
        self.class_id
    }

    pub fn occupancy(&self) -> &[bool] {
        &self.occupancy
    }

    pub fn is_occupied(&self, p: Position) -> bool {
        self.occupancy[self.index(p)]
    }

    pub fn color(&self, p: Position) -> Option<[f64; 3]> {
        let v = self.index(p);
        self.occupancy[v].then(|| self.colors[v])
    }

    pub fn voxel_color(&self, voxel: usize) -> Option<[f64; 3]> {
        self.occupancy[voxel].then(|| self.colors[voxel])
    }

    #[inline]
    pub fn index(&self, p: Position) -> usize {
        (p[0] * self.dim + p[1]) * self.dim + p[2]
    }

    #[inline]
    pub fn position(&self, voxel: usize) -> Position {
        let d = self.dim;
        [voxel / (d * d), (voxel / d) % d, voxel % d]
    }

    pub fn occupied_count(&self) -> usize {
        self.occupancy.iter().filter(|&&o| o).count()
    }

    /// Occupied positions in voxel order.
    pub fn occupied_positions(&self) -> Vec<Position> {
        (0..self.occupancy.len())
            .filter(|&v| self.occupancy[v])
            .map(|v| self.position(v))
            .collect()
    }

    /// Copy with every voxel outside `keep` cleared.
    pub fn restricted(&self, keep: &[bool]) -> VoxelAsset {
        let occupancy: Vec<bool> = self.occupancy.iter().zip(keep).map(|(&o, &k)| o && k).collect();
        VoxelAsset::new(self.dim, occupancy, self.colors.clone(), self.class_id)
            .expect("same dimensions")
    }
}

/// Rasterize a shape. `rng` drives the small per-voxel color jitter.
pub fn generate_asset_dim(rng: &mut Rng, family: &ShapeFamily, dim: usize) -> Result<VoxelAsset> {
    family.validate(dim)?;
    let n = dim * dim * dim;
    let mut occupancy = vec![false; n];
    let mut colors = vec![[0.0; 3]; n];
    let hue = family.hue();
    for v in 0..n {
        let p = [v / (dim * dim), (v / dim) % dim, v % dim];
        let c = [p[0] as f64 + 0.5, p[1] as f64 + 0.5, p[2] as f64 + 0.5];
        // Jitter is drawn for every voxel so the stream does not depend on
        // the shape's extent.
        let jitter = [rng.normal(), rng.normal(), rng.normal()];
        if family.contains(c) {
            occupancy[v] = true;
            let height = c[2] / dim as f64;
            let base = hsv_to_rgb(hue, 0.75, 0.5 + 0.4 * height);
            colors[v] = [
                (base[0] + COLOR_JITTER * jitter[0]).clamp(0.0, 1.0),
                (base[1] + COLOR_JITTER * jitter[1]).clamp(0.0, 1.0),
                (base[2] + COLOR_JITTER * jitter[2]).clamp(0.0, 1.0),
            ];
        }
    }
    let count = occupancy.iter().filter(|&&o| o).count();
    if count < MIN_OCCUPIED {
        return Err(Error::Parameter(format!(
            "{} has only {count} occupied voxels (minimum {MIN_OCCUPIED})",
            family.kind().name()
        )));
    }
    VoxelAsset::new(dim, occupancy, colors, family.kind().class_id())
}

pub fn generate_asset(rng: &mut Rng, family: &ShapeFamily) -> Result<VoxelAsset> {
    generate_asset_dim(rng, family, DEFAULT_DIM)
}

/// Sparse-structure target: channel 0 is +1 on occupied voxels and -1
/// elsewhere, channels 1-3 hold the color mapped to [-1, 1] (0 when empty).
pub fn encode_sparse_target(asset: &VoxelAsset) -> FeatureGrid {
    let mut g = FeatureGrid::zeros(asset.dim(), SPARSE_CHANNELS);
    let data = g.data_mut();
    for v in 0..asset.occupancy.len() {
        let f = &mut data[v * SPARSE_CHANNELS..(v + 1) * SPARSE_CHANNELS];
        if asset.occupancy[v] {
            f[0] = 1.0;
            for k in 0..3 {
                f[k + 1] = 2.0 * asset.colors[v][k] - 1.0;
            }
        } else {
            f[0] = -1.0;
        }
    }
    g
}

/// Positions whose channel 0 exceeds `threshold`, in voxel order.
pub fn decode_occupancy(grid: &FeatureGrid, threshold: f64) -> Vec<Position> {
    let c = grid.channels();
    (0..grid.voxels())
        .filter(|&v| grid.data()[v * c] > threshold)
        .map(|v| grid.position(v))
        .collect()
}

/// Structured-latent target on the occupied voxels.
pub fn encode_slat_target(asset: &VoxelAsset) -> SparseLatent {
    let positions = asset.occupied_positions();
    let mut features = vec![0.0; positions.len() * SLAT_CHANNELS];
    for (i, p) in positions.iter().enumerate() {
        let col = asset.colors[asset.index(*p)];
        for k in 0..3 {
            features[i * SLAT_CHANNELS + k] = 2.0 * col[k] - 1.0;
        }
    }
    SparseLatent::new(asset.dim(), SLAT_CHANNELS, positions, features).expect("consistent layout")
}

/// Fixed affine color decoder: channels 0-2 mapped from [-1, 1] to [0, 1].
pub fn decode_colors(latent: &SparseLatent) -> Vec<[f64; 3]> {
    (0..latent.len())
        .map(|i| {
            let f = latent.feature(i);
            [
                ((f[0] + 1.0) / 2.0).clamp(0.0, 1.0),
                ((f[1] + 1.0) / 2.0).clamp(0.0, 1.0),
                ((f[2] + 1.0) / 2.0).clamp(0.0, 1.0),
            ]
        })
        .collect()
}

/// Assemble an asset from a structured latent.
pub fn decode_asset(latent: &SparseLatent, class_id: usize) -> Result<VoxelAsset> {
    let colors = decode_colors(latent);
    VoxelAsset::from_voxels(latent.dim(), latent.positions(), &colors, class_id)
}

/// Preserved (conditioned) vs inpaint voxels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegionMask {
    dim: usize,
    preserved: Vec<bool>,
}

impl RegionMask {
    pub fn new(dim: usize, preserved: Vec<bool>) -> Result<Self> {
        if preserved.len() != dim * dim * dim {
            return Err(Error::Dimension("mask length must be N^3".into()));
        }
        Ok(Self { dim, preserved })
    }

    pub fn all_preserved(dim: usize) -> Self {
        Self {
            dim,
            preserved: vec![true; dim * dim * dim],
        }
    }

    pub fn none_preserved(dim: usize) -> Self {
        Self {
            dim,
            preserved: vec![false; dim * dim * dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn preserved(&self) -> &[bool] {
        &self.preserved
    }

    pub fn inpaint(&self) -> Vec<bool> {
        self.preserved.iter().map(|p| !p).collect()
    }

    pub fn is_preserved(&self, p: Position) -> bool {
        self.preserved[(p[0] * self.dim + p[1]) * self.dim + p[2]]
    }

    pub fn preserved_count(&self) -> usize {
        self.preserved.iter().filter(|&&p| p).count()
    }

    pub fn inpaint_count(&self) -> usize {
        self.preserved.len() - self.preserved_count()
    }
}

/// Axis-aligned half-space mask: `axis` and `side` drawn uniformly; the
/// inpaint half is `coord[axis] < N/2` for side 0 and `>= N/2` for side 1.
pub fn make_half_mask(rng: &mut Rng, dim: usize) -> Result<RegionMask> {
    if dim == 0 || dim % 2 != 0 {
        return Err(Error::Dimension(format!("half mask needs even N, got {dim}")));
    }
    let axis = rng.below(3);
    let side = rng.below(2);
    Ok(half_mask(dim, axis, side))
}

pub fn half_mask(dim: usize, axis: usize, side: usize) -> RegionMask {
    let h = dim / 2;
    let preserved = (0..dim * dim * dim)
        .map(|v| {
            let p = [v / (dim * dim), (v / dim) % dim, v % dim];
            let in_low = p[axis] < h;
            let inpaint = if side == 0 { in_low } else { !in_low };
            !inpaint
        })
        .collect();
    RegionMask { dim, preserved }
}

/// Cuboid inpaint region `[lo, hi)` per axis; everything else is preserved.
pub fn make_cuboid_mask(dim: usize, lo: [usize; 3], hi: [usize; 3]) -> Result<RegionMask> {
    if (0..3).any(|a| lo[a] >= hi[a] || hi[a] > dim) {
        return Err(Error::Dimension(format!("cuboid {lo:?}..{hi:?} invalid for N={dim}")));
    }
    let preserved = (0..dim * dim * dim)
        .map(|v| {
            let p = [v / (dim * dim), (v / dim) % dim, v % dim];
            !(0..3).all(|a| p[a] >= lo[a] && p[a] < hi[a])
        })
        .collect();
    Ok(RegionMask { dim, preserved })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere(radius: f64) -> ShapeFamily {
        ShapeFamily::Sphere {
            center: [8.0; 3],
            radius,
            hue: 0.3,
        }
    }

    #[test]
    fn sphere_count_matches_exhaustive_scan() {
        let asset = generate_asset(&mut Rng::new(1), &sphere(6.0)).unwrap();
        let mut expected = 0;
        for i in 0..16 {
            for j in 0..16 {
                for k in 0..16 {
                    let d2 = [i, j, k]
                        .iter()
                        .map(|&c| (c as f64 + 0.5 - 8.0).powi(2))
                        .sum::<f64>();
                    if d2.sqrt() <= 6.0 {
                        expected += 1;
                    }
                }
            }
        }
        assert_eq!(asset.occupied_count(), expected);
        assert_eq!(asset.class_id(), 0);
    }

    #[test]
    fn full_box_fills_grid() {
        let b = ShapeFamily::Box {
            center: [8.0; 3],
            half: [8.0; 3],
            hue: 0.0,
        };
        let asset = generate_asset(&mut Rng::new(0), &b).unwrap();
        assert_eq!(asset.occupied_count(), 4096);
        assert_eq!(asset.class_id(), 1);
    }

    #[test]
    fn generation_is_deterministic() {
        for kind in FamilyKind::ALL {
            let fam = ShapeFamily::sample(kind, &mut Rng::new(5), 16);
            let a = generate_asset(&mut Rng::new(77), &fam).unwrap();
            let b = generate_asset(&mut Rng::new(77), &fam).unwrap();
            assert_eq!(a, b);
            assert!(a.occupied_count() >= MIN_OCCUPIED);
            assert_eq!(a.class_id(), kind.class_id());
        }
    }

    #[test]
    fn sampled_families_are_valid() {
        let mut rng = Rng::new(3);
        for i in 0..200 {
            let kind = FamilyKind::ALL[i % 5];
            let fam = ShapeFamily::sample(kind, &mut rng, 16);
            generate_asset(&mut rng, &fam).unwrap();
        }
    }

    #[test]
    fn out_of_range_parameters_rejected() {
        assert!(matches!(
            generate_asset(&mut Rng::new(0), &sphere(-1.0)),
            Err(Error::Parameter(_))
        ));
        assert!(matches!(
            generate_asset(&mut Rng::new(0), &sphere(1.0)),
            Err(Error::Parameter(_))
        ));
        let bad_hue = ShapeFamily::Sphere {
            center: [8.0; 3],
            radius: 5.0,
            hue: 1.5,
        };
        assert!(generate_asset(&mut Rng::new(0), &bad_hue).is_err());
        assert!(FamilyKind::parse("cone").is_err());
    }

    #[test]
    fn sparse_encoding_definition() {
        let asset = VoxelAsset::from_voxels(4, &[[1, 1, 1]], &[[1.0, 1.0, 1.0]], 0).unwrap();
        let g = encode_sparse_target(&asset);
        assert_eq!(g.voxel(g.voxel_index([1, 1, 1])), &[1.0, 1.0, 1.0, 1.0]);
        assert_eq!(g.voxel(g.voxel_index([0, 0, 0])), &[-1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn occupancy_round_trip_and_thresholds() {
        let asset = generate_asset(&mut Rng::new(1), &sphere(5.0)).unwrap();
        let g = encode_sparse_target(&asset);
        assert_eq!(decode_occupancy(&g, 0.0), asset.occupied_positions());
        assert!(decode_occupancy(&g, 2.0).is_empty());
        assert!(decode_occupancy(&FeatureGrid::filled(4, 1, -1.0), 0.0).is_empty());
    }

    #[test]
    fn slat_encoding() {
        let asset = VoxelAsset::from_voxels(4, &[[0, 1, 2]], &[[0.5, 0.0, 1.0]], 2).unwrap();
        let z = encode_slat_target(&asset);
        assert_eq!(z.len(), 1);
        assert_eq!(z.feature(0), &[0.0, -1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);

        let asset = generate_asset(&mut Rng::new(2), &sphere(4.0)).unwrap();
        let z = encode_slat_target(&asset);
        assert_eq!(z.len(), asset.occupied_count());
        let decoded = decode_colors(&z);
        for (p, c) in z.positions().iter().zip(&decoded) {
            let orig = asset.color(*p).unwrap();
            for k in 0..3 {
                assert!((orig[k] - c[k]).abs() < 1e-12);
            }
        }
        let back = decode_asset(&z, asset.class_id()).unwrap();
        assert_eq!(back.occupied_positions(), asset.occupied_positions());
        for p in asset.occupied_positions() {
            let (a, b) = (asset.color(p).unwrap(), back.color(p).unwrap());
            assert!((0..3).all(|k| (a[k] - b[k]).abs() < 1e-12));
        }
    }

    #[test]
    fn half_mask_exact_volume() {
        let mut rng = Rng::new(9);
        for _ in 0..20 {
            let m = make_half_mask(&mut rng, 16).unwrap();
            assert_eq!(m.inpaint_count(), 2048);
            let inpaint = m.inpaint();
            assert!(m.preserved().iter().zip(&inpaint).all(|(&p, &i)| p != i));
        }
        assert_eq!(
            make_half_mask(&mut Rng::new(4), 16).unwrap(),
            make_half_mask(&mut Rng::new(4), 16).unwrap()
        );
        assert!(matches!(make_half_mask(&mut rng, 15), Err(Error::Dimension(_))));
    }

    #[test]
    fn cuboid_mask() {
        let m = make_cuboid_mask(8, [0, 0, 0], [4, 8, 8]).unwrap();
        assert_eq!(m.inpaint_count(), 256);
        assert!(make_cuboid_mask(8, [2, 0, 0], [2, 8, 8]).is_err());
    }

    #[test]
    fn family_serde_shape() {
        let json = serde_json::to_string(&sphere(4.0)).unwrap();
        assert!(json.starts_with(r#"{"family":"sphere","params":{"#), "{json}");
        let back: ShapeFamily = serde_json::from_str(&json).unwrap();
        assert_eq!(back, sphere(4.0));
    }
}
