//! Inpainting by optimizing the initial noise of the generator.
//!
//! The clean endpoint of the sampling trajectory is approximated by a single
//! denoising step with the displacement held fixed,
//!
//! ```text
//! x_hat(t) = x_T + (1 - t) * sg[D(x_T) - x_T],     D(x) = x - v(x, 1)
//! ```
//!
//! so at `t = 0` the Jacobian of `x_hat` w.r.t. `x_T` is the identity and the
//! reconstruction gradient is `2/M * mask * (x_hat - y)`. The observation
//! operator is the mask restricted identity in latent space. A penalty on the
//! first four moments of `x_T` keeps the seed close to a standard Gaussian.
//!
//! The sparse-structure seed is optimized through its Fourier coefficients;
//! the structured-latent seed is optimized directly.

mod optimize;
mod pipeline;

pub use optimize::{optimize_slat_seed, optimize_sparse_seed, optimize_sparse_seed_observed, SeedParam, SeedState, StepLog};
pub use pipeline::{inpaint, inpaint_observed, slat_target, sparse_target, InpaintOutcome};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flownet::{adam_step, AdamState, VelocityField};
use crate::grid::{FeatureGrid, Latent, SparseLatent};
use crate::sampler::denoise_once;
use crate::spectral::{rfft3, SpectralCoeffs};
use crate::stats::{central_moments, moments, MomentStats};

/// Moment weights `(mean, std, skewness, kurtosis)`.
pub const DEFAULT_LAMBDAS: [f64; 4] = [31.6, 10.0, 3.16, 1.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentScope {
    /// One set of statistics over every entry of the latent.
    #[default]
    Global,
    /// Statistics per channel, penalties summed.
    PerChannel,
}

/// How the sparse-structure seed is parameterized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SparseParam {
    #[default]
    Spectral,
    /// Voxel values directly (ablation).
    Direct,
}

/// Scale of the spectral variable relative to the orthonormal transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectralNorm {
    /// Coefficients are `rfft3(x)` (orthonormal).
    Ortho,
    /// Coefficients are the unnormalized DFT, `D^{3/2} * rfft3(x)`, so an
    /// Adam step of size `lr` moves each voxel by roughly `lr / sqrt(D^3)`.
    #[default]
    Unnormalized,
}

impl SpectralNorm {
    /// Factor `s` with `x = s * irfft3(c)`.
    pub fn grid_scale(self, dim: usize) -> f64 {
        match self {
            SpectralNorm::Ortho => 1.0,
            SpectralNorm::Unnormalized => (dim as f64).powf(-1.5),
        }
    }
}

/// How the reconstruction residual enters the combined objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReconReduction {
    /// Mean over the masked entries, as [`recon_loss`].
    #[default]
    Mean,
    /// Squared norm over the masked entries (`M` times the mean).
    Sum,
}

impl ReconReduction {
    pub fn scale(self, masked_entries: usize) -> f64 {
        match self {
            ReconReduction::Mean => 1.0,
            ReconReduction::Sum => masked_entries as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConfigSeedOpt {
    pub t_opt: usize,
    pub lr_sparse: f64,
    pub lr_slat: f64,
    pub lambdas: [f64; 4],
    pub moment_scope: MomentScope,
    pub recon_reduction: ReconReduction,
    pub sparse_param: SparseParam,
    pub spectral_norm: SpectralNorm,
    /// Euler steps for the final sampling passes.
    pub sampling_steps: usize,
    pub seed: u64,
}

impl Default for ConfigSeedOpt {
    fn default() -> Self {
        Self {
            t_opt: 15,
            lr_sparse: 5.0,
            lr_slat: 0.01,
            lambdas: DEFAULT_LAMBDAS,
            moment_scope: MomentScope::Global,
            recon_reduction: ReconReduction::default(),
            sparse_param: SparseParam::Spectral,
            spectral_norm: SpectralNorm::default(),
            sampling_steps: 12,
            seed: 0,
        }
    }
}

impl ConfigSeedOpt {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr_sparse > 0.0 && self.lr_slat > 0.0) {
            return Err(Error::Parameter("learning rates must be positive".into()));
        }
        if self.lambdas.iter().any(|l| !(*l >= 0.0)) {
            return Err(Error::Parameter("moment weights must be non-negative".into()));
        }
        if self.sampling_steps == 0 {
            return Err(Error::Parameter("sampling_steps must be >= 1".into()));
        }
        Ok(())
    }
}

/// Target values and the voxels on which they constrain the estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationTarget<S> {
    pub y: S,
    /// One flag per voxel of `y` (grid voxels or active voxels).
    pub mask: Vec<bool>,
}

impl<S: Latent> ObservationTarget<S> {
    pub fn new(y: S, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != y.num_voxels() {
            return Err(Error::Dimension(format!(
                "mask has {} flags for {} voxels",
                mask.len(),
                y.num_voxels()
            )));
        }
        Ok(Self { y, mask })
    }

    /// Number of constrained scalar entries.
    pub fn masked_entries(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count() * self.y.channels()
    }

    fn check(&self, x: &S) -> Result<()> {
        if x.values().len() != self.y.values().len() || x.num_voxels() != self.y.num_voxels() {
            return Err(Error::Dimension("estimate and target shapes differ".into()));
        }
        if self.masked_entries() == 0 {
            return Err(Error::DegenerateConstraint("mask selects no entries".into()));
        }
        Ok(())
    }
}

pub type GridTarget = ObservationTarget<FeatureGrid>;
pub type SlatTarget = ObservationTarget<SparseLatent>;

/// Linearized estimate at time `t` given the frozen displacement.
pub fn linearize_with<S: Latent>(x_t: &S, displacement: &[f64], t: f64) -> Result<S> {
    let vals = x_t
        .values()
        .iter()
        .zip(displacement)
        .map(|(x, d)| x + (1.0 - t) * d)
        .collect();
    x_t.with_values(vals)
}

/// Frozen displacement `D(x_T) - x_T`.
pub fn displacement<S: Latent, F: VelocityField<S> + ?Sized>(field: &F, x_t: &S) -> Result<Vec<f64>> {
    let d = denoise_once(field, x_t)?;
    Ok(d.values().iter().zip(x_t.values()).map(|(a, b)| a - b).collect())
}

pub fn linearized_estimate<S: Latent, F: VelocityField<S> + ?Sized>(field: &F, x_t: &S, t: f64) -> Result<S> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Parameter(format!("time {t} outside [0, 1]")));
    }
    linearize_with(x_t, &displacement(field, x_t)?, t)
}

/// Mean squared error over the masked entries.
pub fn recon_loss<S: Latent>(estimate: &S, target: &ObservationTarget<S>) -> Result<f64> {
    target.check(estimate)?;
    let c = target.y.channels();
    let (x, y) = (estimate.values(), target.y.values());
    let mut sum = 0.0;
    for (v, _) in target.mask.iter().enumerate().filter(|(_, m)| **m) {
        for k in v * c..(v + 1) * c {
            let r = x[k] - y[k];
            sum += r * r;
        }
    }
    Ok(sum / target.masked_entries() as f64)
}

/// Gradient of [`recon_loss`] w.r.t. the estimate, `2/M * mask * (x - y)`.
pub fn recon_gradient<S: Latent>(estimate: &S, target: &ObservationTarget<S>) -> Result<Vec<f64>> {
    target.check(estimate)?;
    let c = target.y.channels();
    let scale = 2.0 / target.masked_entries() as f64;
    let (x, y) = (estimate.values(), target.y.values());
    let mut g = vec![0.0; x.len()];
    for (v, _) in target.mask.iter().enumerate().filter(|(_, m)| **m) {
        for k in v * c..(v + 1) * c {
            g[k] = scale * (x[k] - y[k]);
        }
    }
    Ok(g)
}

/// Moment penalty for one group of values, with its gradient.
fn moment_group(values: &[f64], lambdas: &[f64; 4]) -> Result<(f64, Vec<f64>)> {
    moments(values)?;
    let n = values.len() as f64;
    let (mu, m2, m3, m4) = central_moments(values);
    let sigma = m2.sqrt();
    let gamma = m3 / (m2 * sigma);
    let kappa = m4 / (m2 * m2);
    let [l1, l2, l3, l4] = *lambdas;
    let loss = l1 * mu * mu + l2 * (sigma - 1.0).powi(2) + l3 * gamma * gamma + l4 * (kappa - 3.0).powi(2);

    let a_mu = 2.0 * l1 * mu;
    let a_sigma = 2.0 * l2 * (sigma - 1.0);
    let a_gamma = 2.0 * l3 * gamma;
    let a_kappa = 2.0 * l4 * (kappa - 3.0);
    // Chain through (m2, m3, m4): d sigma = d m2 / (2 sigma), etc.
    let c_m2 = a_sigma / (2.0 * sigma) - a_gamma * 1.5 * m3 / (m2 * m2 * sigma) - a_kappa * 2.0 * m4 / (m2 * m2 * m2);
    let c_m3 = a_gamma / (m2 * sigma);
    let c_m4 = a_kappa / (m2 * m2);
    let grad = values
        .iter()
        .map(|&x| {
            let d = x - mu;
            let d_m2 = 2.0 * d / n;
            let d_m3 = 3.0 * (d * d - m2) / n;
            let d_m4 = 4.0 * (d * d * d - m3) / n;
            a_mu / n + c_m2 * d_m2 + c_m3 * d_m3 + c_m4 * d_m4
        })
        .collect();
    Ok((loss, grad))
}

/// Weighted moment penalty and its gradient w.r.t. each entry. `channels`
/// gives the interleaving used by [`MomentScope::PerChannel`].
pub fn moment_loss(values: &[f64], channels: usize, lambdas: &[f64; 4], scope: MomentScope) -> Result<(f64, Vec<f64>)> {
    match scope {
        MomentScope::Global => moment_group(values, lambdas),
        MomentScope::PerChannel => {
            if channels == 0 || values.len() % channels != 0 {
                return Err(Error::Dimension("values do not split into channels".into()));
            }
            let mut total = 0.0;
            let mut grad = vec![0.0; values.len()];
            for c in 0..channels {
                let group: Vec<f64> = values.iter().skip(c).step_by(channels).copied().collect();
                let (l, g) = moment_group(&group, lambdas)?;
                total += l;
                for (i, gi) in g.into_iter().enumerate() {
                    grad[i * channels + c] = gi;
                }
            }
            Ok((total, grad))
        }
    }
}

/// Adam descent on the moment penalty alone. Returns the penalty before the
/// first update and after each of the `steps` updates.
pub fn moment_descent(
    values: &[f64],
    channels: usize,
    lambdas: &[f64; 4],
    scope: MomentScope,
    lr: f64,
    steps: usize,
) -> Result<Vec<f64>> {
    let mut x = values.to_vec();
    let mut adam = AdamState::new(x.len());
    let mut curve = Vec::with_capacity(steps + 1);
    for _ in 0..steps {
        let (loss, grad) = moment_loss(&x, channels, lambdas, scope)?;
        curve.push(loss);
        adam_step(&mut x, &grad, &mut adam, lr)?;
    }
    curve.push(moment_loss(&x, channels, lambdas, scope)?.0);
    Ok(curve)
}

/// Objective value, its components, and the gradient w.r.t. `x_T`.
#[derive(Debug, Clone)]
pub struct LossEval {
    pub recon: f64,
    pub dist: f64,
    pub stats: MomentStats,
    pub grad: Vec<f64>,
}

impl LossEval {
    pub fn total(&self) -> f64 {
        self.recon + self.dist
    }
}

/// Surrogate reconstruction plus moment penalty for a seed with a given
/// frozen displacement.
pub fn total_loss_frozen<S: Latent>(
    x_t: &S,
    displacement: &[f64],
    target: &ObservationTarget<S>,
    lambdas: &[f64; 4],
    scope: MomentScope,
    reduction: ReconReduction,
) -> Result<LossEval> {
    let est = linearize_with(x_t, displacement, 0.0)?;
    let w = reduction.scale(target.masked_entries());
    let recon = w * recon_loss(&est, target)?;
    let mut grad = recon_gradient(&est, target)?;
    if w != 1.0 {
        for g in grad.iter_mut() {
            *g *= w;
        }
    }
    let (dist, g_dist) = moment_loss(x_t.values(), x_t.channels(), lambdas, scope)?;
    for (g, d) in grad.iter_mut().zip(&g_dist) {
        *g += d;
    }
    Ok(LossEval {
        recon,
        dist,
        stats: moments(x_t.values())?,
        grad,
    })
}

/// Combined objective at `x_T`, recomputing the displacement.
pub fn total_loss<S: Latent, F: VelocityField<S> + ?Sized>(
    field: &F,
    x_t: &S,
    target: &ObservationTarget<S>,
    lambdas: &[f64; 4],
    scope: MomentScope,
    reduction: ReconReduction,
) -> Result<LossEval> {
    let disp = displacement(field, x_t)?;
    total_loss_frozen(x_t, &disp, target, lambdas, scope, reduction)
}

/// Surrogate reconstruction gradient in latent space.
pub fn seed_gradient<S: Latent, F: VelocityField<S> + ?Sized>(field: &F, x_t: &S, target: &ObservationTarget<S>) -> Result<Vec<f64>> {
    let est = linearized_estimate(field, x_t, 0.0)?;
    recon_gradient(&est, target)
}

/// Pull a grid-space gradient back to the spectral variable. The result is
/// the gradient under the weighted coefficient inner product; the partial
/// derivatives w.r.t. the real and imaginary parts of bin `k` are
/// `w(k)` times its components.
pub fn spectral_pullback(grid_grad: &FeatureGrid, norm: SpectralNorm) -> Result<SpectralCoeffs> {
    let mut g = rfft3(grid_grad)?;
    let s = norm.grid_scale(grid_grad.dim());
    if s != 1.0 {
        for c in g.coeffs_mut() {
            *c *= s;
        }
    }
    Ok(g)
}
