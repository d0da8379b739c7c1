//! Deterministic Euler integration of the rectified-flow ODE and the
//! two-stage generation pipeline.
//!
//! Time runs from noise at `t = 1` to data at `t = 0`; one step maps
//! `x <- x - dt * v(x, t)` with a uniform `dt`.

use serde::{Deserialize, Serialize};
use std::cell::Cell;

use crate::error::{Error, Result};
use crate::flownet::{Conditioned, VectorFieldNet, VelocityField};
use crate::grid::{gaussian_grid, FeatureGrid, Latent, Position, SparseLatent};
use crate::rng::Rng;
use crate::shapes::{decode_asset, decode_occupancy, VoxelAsset, SLAT_CHANNELS};

/// Child-stream labels used when a single seed drives both stages.
pub const SPARSE_NOISE_STREAM: u64 = 0x5351;
pub const SLAT_NOISE_STREAM: u64 = 0x4c41;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerConfig {
    pub steps: usize,
    pub t_start: f64,
    pub t_end: f64,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            steps: 12,
            t_start: 1.0,
            t_end: 0.0,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::Parameter("sampler needs at least one step".into()));
        }
        if !(0.0..=1.0).contains(&self.t_start) || !(0.0..=1.0).contains(&self.t_end) || self.t_end > self.t_start {
            return Err(Error::Parameter(format!(
                "time interval [{}, {}] must satisfy 0 <= t_end <= t_start <= 1",
                self.t_end, self.t_start
            )));
        }
        Ok(())
    }

    /// Time at the start of step `i`; `time(steps) == t_end`.
    pub fn time(&self, i: usize) -> f64 {
        if i == self.steps {
            return self.t_end;
        }
        self.t_start - (self.t_start - self.t_end) * i as f64 / self.steps as f64
    }
}

/// Euler integration with a hook called after every step with
/// `(step index, time reached, state)`. Baselines use the hook to steer.
pub fn euler_sample_with<S, F, H>(field: &F, x_t: &S, config: &SamplerConfig, mut hook: H) -> Result<S>
where
    S: Latent,
    F: VelocityField<S> + ?Sized,
    H: FnMut(usize, f64, &mut S) -> Result<()>,
{
    config.validate()?;
    let mut x = x_t.clone();
    for i in 0..config.steps {
        let (t, t_next) = (config.time(i), config.time(i + 1));
        let v = field.velocity(&x, t)?;
        let dt = t - t_next;
        let mut bad = false;
        for (xi, vi) in x.values_mut().iter_mut().zip(&v) {
            *xi -= dt * vi;
            bad |= !xi.is_finite();
        }
        if bad {
            return Err(Error::Sampling { step: i });
        }
        hook(i, t_next, &mut x)?;
    }
    Ok(x)
}

/// Plain Euler sampling from `x_t` at `config.t_start` down to `config.t_end`.
pub fn euler_sample<S: Latent, F: VelocityField<S> + ?Sized>(field: &F, x_t: &S, config: &SamplerConfig) -> Result<S> {
    euler_sample_with(field, x_t, config, |_, _, _| Ok(()))
}

/// One-step clean estimate `D(x) = x - v(x, 1)`.
pub fn denoise_once<S: Latent, F: VelocityField<S> + ?Sized>(field: &F, x_t: &S) -> Result<S> {
    let v = field.velocity(x_t, 1.0)?;
    let vals: Vec<f64> = x_t.values().iter().zip(&v).map(|(x, v)| x - v).collect();
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(Error::Sampling { step: 0 });
    }
    x_t.with_values(vals)
}

/// Wraps a field and counts velocity evaluations.
pub struct Counted<'a, F: ?Sized> {
    inner: &'a F,
    calls: Cell<usize>,
}

impl<'a, F: ?Sized> Counted<'a, F> {
    pub fn new(inner: &'a F) -> Self {
        Self {
            inner,
            calls: Cell::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.get()
    }
}

impl<S: Latent, F: VelocityField<S> + ?Sized> VelocityField<S> for Counted<'_, F> {
    fn velocity(&self, x: &S, t: f64) -> Result<Vec<f64>> {
        self.calls.set(self.calls.get() + 1);
        self.inner.velocity(x, t)
    }
}

/// Initial noise for both stages drawn from one seed.
pub fn sparse_noise(seed: u64, dim: usize, channels: usize) -> FeatureGrid {
    gaussian_grid(&mut Rng::new(seed).fork(SPARSE_NOISE_STREAM), dim, channels)
}

pub fn slat_noise(seed: u64, dim: usize, positions: Vec<Position>) -> SparseLatent {
    SparseLatent::gaussian(&mut Rng::new(seed).fork(SLAT_NOISE_STREAM), dim, SLAT_CHANNELS, positions)
}

/// Decode a sampled sparse structure to its active set, rejecting empty ones.
pub fn active_set(structure: &FeatureGrid) -> Result<Vec<Position>> {
    let active = decode_occupancy(structure, 0.0);
    if active.is_empty() {
        return Err(Error::EmptyStructure);
    }
    Ok(active)
}

/// Sample a structured latent on `positions` starting from `z_t`, then decode.
pub fn finish_from_slat(net_l: &VectorFieldNet, z_t: &SparseLatent, class_id: usize, config: &SamplerConfig) -> Result<VoxelAsset> {
    let z0 = euler_sample(&Conditioned::new(net_l, class_id), z_t, config)?;
    decode_asset(&z0, class_id)
}

/// Full two-stage generation from Gaussian seeds.
pub fn generate_asset(
    net_s: &VectorFieldNet,
    net_l: &VectorFieldNet,
    class_id: usize,
    dim: usize,
    config: &SamplerConfig,
) -> Result<VoxelAsset> {
    let s_t = sparse_noise(config.seed, dim, net_s.config().channels);
    let s0 = euler_sample(&Conditioned::new(net_s, class_id), &s_t, config)?;
    let active = active_set(&s0)?;
    let z_t = slat_noise(config.seed, dim, active);
    finish_from_slat(net_l, &z_t, class_id, config)
}
