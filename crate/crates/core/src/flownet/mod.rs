//! Time- and class-conditioned velocity networks.
//!
//! Both generator stages use the same per-voxel MLP. Each voxel's input row is
//!
//! ```text
//! [ state (C) | position encoding (12) | time encoding (8) | class one-hot (K) | pooled state (C) ]
//! ```
//!
//! where the pooled state is the mean of the state over every voxel of the
//! latent, which is the only coupling between voxels. Two hidden layers of
//! 128 SiLU units map the row to `C` velocity channels. The backward pass is
//! written out by hand and covers both parameter and input gradients.

mod adam;
mod checkpoint;
mod train;

pub use adam::{adam_step, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, TrainMeta, CHECKPOINT_MAGIC};
pub use train::{fresh_checkpoint, resume, smooth, train, TrainConfig, TrainItem};

use ndarray::{s, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::grid::{Latent, Position, Stage};
use crate::rng::Rng;

pub const HIDDEN: usize = 128;
pub const POS_FEATURES: usize = 12;
pub const TIME_FEATURES: usize = 8;

/// Architecture hyperparameters; recorded verbatim in checkpoint headers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetConfig {
    pub stage: Stage,
    pub channels: usize,
    pub classes: usize,
    pub hidden: usize,
}

impl NetConfig {
    pub fn new(stage: Stage, channels: usize, classes: usize) -> Self {
        Self {
            stage,
            channels,
            classes,
            hidden: HIDDEN,
        }
    }

    pub fn input_dim(&self) -> usize {
        2 * self.channels + POS_FEATURES + TIME_FEATURES + self.classes
    }

    fn offsets(&self) -> Offsets {
        let (i, h, c) = (self.input_dim(), self.hidden, self.channels);
        let w1 = 0;
        let b1 = w1 + i * h;
        let w2 = b1 + h;
        let b2 = w2 + h * h;
        let w3 = b2 + h;
        let b3 = w3 + h * c;
        Offsets {
            w1,
            b1,
            w2,
            b2,
            w3,
            b3,
            end: b3 + c,
        }
    }

    pub fn param_count(&self) -> usize {
        self.offsets().end
    }
}

#[derive(Debug, Clone, Copy)]
struct Offsets {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    w3: usize,
    b3: usize,
    end: usize,
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

#[inline]
fn silu(z: f64) -> f64 {
    z * sigmoid(z)
}

#[inline]
fn silu_grad(z: f64) -> f64 {
    let s = sigmoid(z);
    s * (1.0 + z * (1.0 - s))
}

/// Sinusoidal encoding of a voxel center, two frequencies per axis.
pub fn position_encoding(p: Position, dim: usize) -> [f64; POS_FEATURES] {
    let mut out = [0.0; POS_FEATURES];
    for a in 0..3 {
        let u = (p[a] as f64 + 0.5) / dim as f64;
        out[4 * a] = (PI * u).sin();
        out[4 * a + 1] = (PI * u).cos();
        out[4 * a + 2] = (2.0 * PI * u).sin();
        out[4 * a + 3] = (2.0 * PI * u).cos();
    }
    out
}

pub fn time_encoding(t: f64) -> [f64; TIME_FEATURES] {
    let mut out = [0.0; TIME_FEATURES];
    for (k, f) in [1.0, 2.0, 4.0, 8.0].iter().enumerate() {
        out[2 * k] = (PI * f * t).sin();
        out[2 * k + 1] = (PI * f * t).cos();
    }
    out
}

/// Intermediate activations of one forward pass over a subset of voxels.
struct Cache {
    rows: Vec<usize>,
    n_pool: usize,
    x: Array2<f64>,
    z1: Array2<f64>,
    h1: Array2<f64>,
    z2: Array2<f64>,
    h2: Array2<f64>,
    out: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorFieldNet {
    config: NetConfig,
    params: Vec<f64>,
}

impl VectorFieldNet {
    /// Scaled-normal initialization, rounded to single precision so the
    /// network survives a checkpoint round trip unchanged.
    pub fn new(config: NetConfig, rng: &mut Rng) -> Self {
        let o = config.offsets();
        let mut params = vec![0.0; o.end];
        let (i, h) = (config.input_dim(), config.hidden);
        let fill = |slice: &mut [f64], std: f64, rng: &mut Rng| {
            for v in slice.iter_mut() {
                *v = rng.normal() * std;
            }
        };
        fill(&mut params[o.w1..o.b1], (2.0 / i as f64).sqrt(), rng);
        fill(&mut params[o.w2..o.b2], (2.0 / h as f64).sqrt(), rng);
        fill(&mut params[o.w3..o.b3], (1.0 / h as f64).sqrt(), rng);
        round_to_f32(&mut params);
        Self { config, params }
    }

    pub fn zeros(config: NetConfig) -> Self {
        Self {
            config,
            params: vec![0.0; config.param_count()],
        }
    }

    pub fn from_params(config: NetConfig, params: Vec<f64>) -> Result<Self> {
        if params.len() != config.param_count() {
            return Err(Error::Dimension(format!(
                "architecture needs {} parameters, got {}",
                config.param_count(),
                params.len()
            )));
        }
        Ok(Self { config, params })
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn stage(&self) -> Stage {
        self.config.stage
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn mat(&self, at: usize, rows: usize, cols: usize) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((rows, cols), &self.params[at..at + rows * cols]).expect("layout")
    }

    fn vec(&self, at: usize, len: usize) -> ArrayView1<'_, f64> {
        ArrayView1::from(&self.params[at..at + len])
    }

    fn check<S: Latent>(&self, state: &S, t: f64, class_id: usize) -> Result<()> {
        if S::STAGE != self.config.stage {
            return Err(Error::Dimension(format!(
                "{} network given a {} latent",
                self.config.stage.name(),
                S::STAGE.name()
            )));
        }
        if state.channels() != self.config.channels {
            return Err(Error::Dimension(format!(
                "network expects {} channels, latent has {}",
                self.config.channels,
                state.channels()
            )));
        }
        if !(0.0..=1.0).contains(&t) || t.is_nan() {
            return Err(Error::Parameter(format!("time {t} outside [0, 1]")));
        }
        if class_id >= self.config.classes {
            return Err(Error::Parameter(format!(
                "class {class_id} outside 0..{}",
                self.config.classes
            )));
        }
        Ok(())
    }

    fn build_inputs<S: Latent>(&self, state: &S, t: f64, class_id: usize, rows: &[usize]) -> Array2<f64> {
        let c = self.config.channels;
        let n_all = state.num_voxels();
        let vals = state.values();
        let mut pooled = vec![0.0; c];
        for v in 0..n_all {
            for k in 0..c {
                pooled[k] += vals[v * c + k];
            }
        }
        if n_all > 0 {
            for p in pooled.iter_mut() {
                *p /= n_all as f64;
            }
        }
        let temb = time_encoding(t);
        let in_dim = self.config.input_dim();
        let mut x = Array2::zeros((rows.len(), in_dim));
        for (r, &v) in rows.iter().enumerate() {
            let mut row = x.row_mut(r);
            let mut j = 0;
            for k in 0..c {
                row[j] = vals[v * c + k];
                j += 1;
            }
            for e in position_encoding(state.voxel_position(v), state.dim()) {
                row[j] = e;
                j += 1;
            }
            for e in temb {
                row[j] = e;
                j += 1;
            }
            row[j + class_id] = 1.0;
            j += self.config.classes;
            for k in 0..c {
                row[j + k] = pooled[k];
            }
        }
        x
    }

    fn forward_cache<S: Latent>(&self, state: &S, t: f64, class_id: usize, rows: Vec<usize>) -> Cache {
        let o = self.config.offsets();
        let (i, h, c) = (self.config.input_dim(), self.config.hidden, self.config.channels);
        let x = self.build_inputs(state, t, class_id, &rows);
        let mut z1 = x.dot(&self.mat(o.w1, i, h));
        z1 += &self.vec(o.b1, h);
        let h1 = z1.mapv(silu);
        let mut z2 = h1.dot(&self.mat(o.w2, h, h));
        z2 += &self.vec(o.b2, h);
        let h2 = z2.mapv(silu);
        let mut out = h2.dot(&self.mat(o.w3, h, c));
        out += &self.vec(o.b3, c);
        Cache {
            rows,
            n_pool: state.num_voxels(),
            x,
            z1,
            h1,
            z2,
            h2,
            out,
        }
    }

    /// Backpropagate `d_out` (one row per evaluated voxel). Returns parameter
    /// gradients and the gradient w.r.t. the full state (including the path
    /// through the pooled feature).
    fn backward(&self, cache: &Cache, d_out: &Array2<f64>, want_input: bool) -> (Vec<f64>, Option<Vec<f64>>) {
        let o = self.config.offsets();
        let (i, h, c) = (self.config.input_dim(), self.config.hidden, self.config.channels);
        let mut g = vec![0.0; o.end];

        let dw3 = cache.h2.t().dot(d_out);
        g[o.w3..o.b3].copy_from_slice(dw3.as_slice().expect("contiguous"));
        let db3 = d_out.sum_axis(Axis(0));
        g[o.b3..o.end].copy_from_slice(db3.as_slice().expect("contiguous"));

        let mut dz2 = d_out.dot(&self.mat(o.w3, h, c).t());
        dz2.zip_mut_with(&cache.z2, |d, &z| *d *= silu_grad(z));
        let dw2 = cache.h1.t().dot(&dz2);
        g[o.w2..o.b2].copy_from_slice(dw2.as_slice().expect("contiguous"));
        let db2 = dz2.sum_axis(Axis(0));
        g[o.b2..o.w3].copy_from_slice(db2.as_slice().expect("contiguous"));

        let mut dz1 = dz2.dot(&self.mat(o.w2, h, h).t());
        dz1.zip_mut_with(&cache.z1, |d, &z| *d *= silu_grad(z));
        let dw1 = cache.x.t().dot(&dz1);
        g[o.w1..o.b1].copy_from_slice(dw1.as_slice().expect("contiguous"));
        let db1 = dz1.sum_axis(Axis(0));
        g[o.b1..o.w2].copy_from_slice(db1.as_slice().expect("contiguous"));

        if !want_input {
            return (g, None);
        }
        let dx = dz1.dot(&self.mat(o.w1, i, h).t());
        let mut d_state = vec![0.0; cache.n_pool * c];
        let pooled_at = i - c;
        let d_pooled = dx.slice(s![.., pooled_at..]).sum_axis(Axis(0));
        for (r, &v) in cache.rows.iter().enumerate() {
            for k in 0..c {
                d_state[v * c + k] += dx[[r, k]];
            }
        }
        let share = 1.0 / cache.n_pool as f64;
        for v in 0..cache.n_pool {
            for k in 0..c {
                d_state[v * c + k] += d_pooled[k] * share;
            }
        }
        (g, Some(d_state))
    }

    /// Raw velocity values for every voxel of `state`.
    pub fn velocity_values<S: Latent>(&self, state: &S, t: f64, class_id: usize) -> Result<Vec<f64>> {
        self.check(state, t, class_id)?;
        let rows: Vec<usize> = (0..state.num_voxels()).collect();
        let cache = self.forward_cache(state, t, class_id, rows);
        Ok(cache.out.into_raw_vec_and_offset().0)
    }

    /// Velocity field `v(x, t | class)` with the same layout as `state`.
    pub fn forward<S: Latent>(&self, state: &S, t: f64, class_id: usize) -> Result<S> {
        let v = self.velocity_values(state, t, class_id)?;
        state.with_values(v)
    }

    /// Vector-Jacobian product of the velocity w.r.t. the state:
    /// `d/dx sum(cotangent * v(x, t))`.
    pub fn input_vjp<S: Latent>(&self, state: &S, t: f64, class_id: usize, cotangent: &[f64]) -> Result<Vec<f64>> {
        self.check(state, t, class_id)?;
        if cotangent.len() != state.values().len() {
            return Err(Error::Dimension("cotangent must match the state".into()));
        }
        let rows: Vec<usize> = (0..state.num_voxels()).collect();
        let cache = self.forward_cache(state, t, class_id, rows);
        let d_out = Array2::from_shape_vec(cache.out.dim(), cotangent.to_vec()).expect("shape");
        Ok(self.backward(&cache, &d_out, true).1.expect("requested"))
    }

    /// Vector-Jacobian product of the velocity w.r.t. the parameters.
    pub fn param_vjp<S: Latent>(&self, state: &S, t: f64, class_id: usize, cotangent: &[f64]) -> Result<Vec<f64>> {
        self.check(state, t, class_id)?;
        if cotangent.len() != state.values().len() {
            return Err(Error::Dimension("cotangent must match the state".into()));
        }
        let rows: Vec<usize> = (0..state.num_voxels()).collect();
        let cache = self.forward_cache(state, t, class_id, rows);
        let d_out = Array2::from_shape_vec(cache.out.dim(), cotangent.to_vec()).expect("shape");
        Ok(self.backward(&cache, &d_out, false).0)
    }
}

/// Round every value to the nearest `f32`.
pub fn round_to_f32(values: &mut [f64]) {
    for v in values.iter_mut() {
        *v = f64::from(*v as f32);
    }
}

fn interpolate<S: Latent>(x0: &S, eps: &S, t: f64) -> Result<S> {
    let vals = x0
        .values()
        .iter()
        .zip(eps.values())
        .map(|(a, e)| (1.0 - t) * a + t * e)
        .collect();
    x0.with_values(vals)
}

/// Rectified-flow interpolant `x(t) = (1 - t) x0 + t eps`.
pub fn interpolant<S: Latent>(x0: &S, eps: &S, t: f64) -> Result<S> {
    if x0.values().len() != eps.values().len() || x0.num_voxels() != eps.num_voxels() {
        return Err(Error::Dimension("x0 and eps must have the same shape".into()));
    }
    interpolate(x0, eps, t)
}

/// Conditional flow-matching loss and its parameter gradient.
///
/// `loss = mean((v(x(t), t) - (eps - x0))^2)` over all entries.
pub fn cfm_loss<S: Latent>(net: &VectorFieldNet, x0: &S, eps: &S, t: f64, class_id: usize) -> Result<(f64, Vec<f64>)> {
    cfm_loss_rows(net, x0, eps, t, class_id, None)
}

/// As [`cfm_loss`], with the squared error averaged over a subset of voxels.
/// The pooled context still sees the full state.
pub(crate) fn cfm_loss_rows<S: Latent>(
    net: &VectorFieldNet,
    x0: &S,
    eps: &S,
    t: f64,
    class_id: usize,
    rows: Option<&[usize]>,
) -> Result<(f64, Vec<f64>)> {
    let xt = interpolant(x0, eps, t)?;
    net.check(&xt, t, class_id)?;
    let rows: Vec<usize> = match rows {
        Some(r) => r.to_vec(),
        None => (0..xt.num_voxels()).collect(),
    };
    if rows.is_empty() {
        return Err(Error::EmptyInput("no voxels to evaluate"));
    }
    let c = net.config.channels;
    let cache = net.forward_cache(&xt, t, class_id, rows);
    let m = (cache.rows.len() * c) as f64;
    let mut d_out = Array2::zeros(cache.out.dim());
    let mut loss = 0.0;
    for (r, &v) in cache.rows.iter().enumerate() {
        for k in 0..c {
            let target = eps.values()[v * c + k] - x0.values()[v * c + k];
            let diff = cache.out[[r, k]] - target;
            loss += diff * diff;
            d_out[[r, k]] = 2.0 * diff / m;
        }
    }
    let (g, _) = net.backward(&cache, &d_out, false);
    Ok((loss / m, g))
}

/// Velocity field over a latent layout; implemented by conditioned networks
/// and by analytic test fields.
pub trait VelocityField<S: Latent> {
    fn velocity(&self, x: &S, t: f64) -> Result<Vec<f64>>;
}

/// A network bound to a class label.
#[derive(Debug, Clone, Copy)]
pub struct Conditioned<'a> {
    pub net: &'a VectorFieldNet,
    pub class_id: usize,
}

impl<'a> Conditioned<'a> {
    pub fn new(net: &'a VectorFieldNet, class_id: usize) -> Self {
        Self { net, class_id }
    }
}

impl<S: Latent> VelocityField<S> for Conditioned<'_> {
    fn velocity(&self, x: &S, t: f64) -> Result<Vec<f64>> {
        self.net.velocity_values(x, t, self.class_id)
    }
}
