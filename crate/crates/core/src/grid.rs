//! Dense feature grids and sparse voxel latents.

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Integer voxel coordinate `(x, y, z)`.
pub type Position = [usize; 3];

/// Dense `D×D×D×C` field stored row-major in `(x, y, z, c)` order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureGrid {
    dim: usize,
    channels: usize,
    data: Vec<f64>,
}

impl FeatureGrid {
    pub fn zeros(dim: usize, channels: usize) -> Self {
        Self {
            dim,
            channels,
            data: vec![0.0; dim * dim * dim * channels],
        }
    }

    pub fn filled(dim: usize, channels: usize, value: f64) -> Self {
        Self {
            dim,
            channels,
            data: vec![value; dim * dim * dim * channels],
        }
    }

    pub fn from_vec(dim: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        let want = dim * dim * dim * channels;
        if data.len() != want {
            return Err(Error::Dimension(format!(
                "grid {dim}^3 x {channels} needs {want} values, got {}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Dimension(format!("non-finite value at flat index {i}")));
        }
        Ok(Self { dim, channels, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn voxels(&self) -> usize {
        self.dim * self.dim * self.dim
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn voxel_index(&self, p: Position) -> usize {
        (p[0] * self.dim + p[1]) * self.dim + p[2]
    }

    #[inline]
    pub fn position(&self, voxel: usize) -> Position {
        let d = self.dim;
        [voxel / (d * d), (voxel / d) % d, voxel % d]
    }

    #[inline]
    pub fn get(&self, p: Position, c: usize) -> f64 {
        self.data[self.voxel_index(p) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, p: Position, c: usize, v: f64) {
        let i = self.voxel_index(p) * self.channels + c;
        self.data[i] = v;
    }

    pub fn voxel(&self, voxel: usize) -> &[f64] {
        &self.data[voxel * self.channels..(voxel + 1) * self.channels]
    }

    /// Values of one channel in voxel order.
    pub fn channel(&self, c: usize) -> Vec<f64> {
        self.data.iter().skip(c).step_by(self.channels).copied().collect()
    }

    pub fn same_shape(&self, other: &FeatureGrid) -> bool {
        self.dim == other.dim && self.channels == other.channels
    }
}

/// I.i.d. standard normal grid.
pub fn gaussian_grid(rng: &mut Rng, dim: usize, channels: usize) -> FeatureGrid {
    let data = rng.normal_vec(dim * dim * dim * channels);
    FeatureGrid { dim, channels, data }
}

/// Feature vectors attached to active voxel positions.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseLatent {
    dim: usize,
    channels: usize,
    positions: Vec<Position>,
    features: Vec<f64>,
}

impl SparseLatent {
    pub fn new(
        dim: usize,
        channels: usize,
        positions: Vec<Position>,
        features: Vec<f64>,
    ) -> Result<Self> {
        if features.len() != positions.len() * channels {
            return Err(Error::Dimension(format!(
                "{} positions x {channels} channels needs {} features, got {}",
                positions.len(),
                positions.len() * channels,
                features.len()
            )));
        }
        if let Some(p) = positions.iter().find(|p| p.iter().any(|&c| c >= dim)) {
            return Err(Error::Dimension(format!("position {p:?} outside {dim}^3 grid")));
        }
        Ok(Self {
            dim,
            channels,
            positions,
            features,
        })
    }

    pub fn zeros(dim: usize, channels: usize, positions: Vec<Position>) -> Self {
        let features = vec![0.0; positions.len() * channels];
        Self {
            dim,
            channels,
            positions,
            features,
        }
    }

    pub fn gaussian(rng: &mut Rng, dim: usize, channels: usize, positions: Vec<Position>) -> Self {
        let features = rng.normal_vec(positions.len() * channels);
        Self {
            dim,
            channels,
            positions,
            features,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[Position] {
        &self.positions
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn features_mut(&mut self) -> &mut [f64] {
        &mut self.features
    }

    pub fn feature(&self, i: usize) -> &[f64] {
        &self.features[i * self.channels..(i + 1) * self.channels]
    }

    /// Same positions, new feature values.
    pub fn with_features(&self, features: Vec<f64>) -> Result<Self> {
        Self::new(self.dim, self.channels, self.positions.clone(), features)
    }
}

/// Which generator stage a latent layout belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    SparseStructure,
    StructuredLatent,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::SparseStructure => "sparse_structure",
            Stage::StructuredLatent => "structured_latent",
        }
    }
}

/// Common view over the two latent layouts: a list of voxels, each carrying
/// `channels()` values, stored contiguously voxel by voxel.
pub trait Latent: Clone {
    const STAGE: Stage;

    fn dim(&self) -> usize;
    fn channels(&self) -> usize;
    fn num_voxels(&self) -> usize;
    fn voxel_position(&self, i: usize) -> Position;
    fn values(&self) -> &[f64];
    fn values_mut(&mut self) -> &mut [f64];

    /// Copy of `self` with the values replaced.
    fn with_values(&self, values: Vec<f64>) -> Result<Self>;
}

impl Latent for FeatureGrid {
    const STAGE: Stage = Stage::SparseStructure;

    fn dim(&self) -> usize {
        self.dim
    }
    fn channels(&self) -> usize {
        self.channels
    }
    fn num_voxels(&self) -> usize {
        self.voxels()
    }
    fn voxel_position(&self, i: usize) -> Position {
        self.position(i)
    }
    fn values(&self) -> &[f64] {
        &self.data
    }
    fn values_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
    fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        FeatureGrid::from_vec(self.dim, self.channels, values)
    }
}

impl Latent for SparseLatent {
    const STAGE: Stage = Stage::StructuredLatent;

    fn dim(&self) -> usize {
        self.dim
    }
    fn channels(&self) -> usize {
        self.channels
    }
    fn num_voxels(&self) -> usize {
        self.positions.len()
    }
    fn voxel_position(&self, i: usize) -> Position {
        self.positions[i]
    }
    fn values(&self) -> &[f64] {
        &self.features
    }
    fn values_mut(&mut self) -> &mut [f64] {
        &mut self.features
    }
    fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Dimension(format!("non-finite value at flat index {i}")));
        }
        self.with_features(values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_length_is_checked() {
        assert!(FeatureGrid::from_vec(2, 3, vec![0.0; 24]).is_ok());
        assert!(matches!(
            FeatureGrid::from_vec(2, 3, vec![0.0; 23]),
            Err(Error::Dimension(_))
        ));
        assert!(FeatureGrid::from_vec(1, 1, vec![f64::NAN]).is_err());
    }

    #[test]
    fn index_round_trip() {
        let g = FeatureGrid::zeros(5, 2);
        for v in 0..g.voxels() {
            assert_eq!(g.voxel_index(g.position(v)), v);
        }
        assert_eq!(g.voxel_index([1, 2, 3]), 25 + 10 + 3);
    }

    #[test]
    fn gaussian_grid_is_reproducible() {
        let a = gaussian_grid(&mut Rng::new(9), 4, 2);
        let b = gaussian_grid(&mut Rng::new(9), 4, 2);
        assert_eq!(a, b);
        let c = gaussian_grid(&mut Rng::new(10), 4, 2);
        let differing = a.data().iter().zip(c.data()).filter(|(x, y)| x != y).count();
        assert!(differing as f64 > 0.99 * a.data().len() as f64);
    }

    #[test]
    fn sparse_latent_validates() {
        assert!(SparseLatent::new(4, 2, vec![[0, 1, 2]], vec![1.0, 2.0]).is_ok());
        assert!(SparseLatent::new(4, 2, vec![[0, 1, 4]], vec![1.0, 2.0]).is_err());
        assert!(SparseLatent::new(4, 2, vec![[0, 1, 2]], vec![1.0]).is_err());
    }
}
