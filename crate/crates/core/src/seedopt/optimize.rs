use serde::{Deserialize, Serialize};

use super::{spectral_pullback, total_loss, ConfigSeedOpt, GridTarget, LossEval, SlatTarget, SparseParam, SpectralNorm};
use crate::error::{Error, Result};
use crate::flownet::{adam_step, AdamState, VelocityField};
use crate::grid::{FeatureGrid, Latent, Position, SparseLatent, Stage};
use crate::sampler::{slat_noise, sparse_noise};
use crate::spectral::{irfft3, rfft3, SpectralCoeffs};

/// One line of the per-step optimization log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: usize,
    pub recon_loss: f64,
    pub dist_loss: f64,
    pub mu: f64,
    pub sigma: f64,
    pub gamma: f64,
    pub kappa: f64,
}

impl StepLog {
    fn from_eval(step: usize, e: &LossEval) -> Self {
        Self {
            step,
            recon_loss: e.recon,
            dist_loss: e.dist,
            mu: e.stats.mu,
            sigma: e.stats.sigma,
            gamma: e.stats.gamma,
            kappa: e.stats.kappa,
        }
    }
}

/// The optimization variable behind a seed.
#[derive(Debug, Clone, PartialEq)]
pub enum SeedParam {
    Spectral { coeffs: SpectralCoeffs, norm: SpectralNorm },
    Direct,
}

/// A seed under optimization: the variable, its latent view, the optimizer
/// state and the loss history (one entry per completed step).
#[derive(Debug, Clone)]
pub struct SeedState<S> {
    stage: Stage,
    param: SeedParam,
    view: S,
    adam: AdamState,
    history: Vec<StepLog>,
    final_log: Option<StepLog>,
}

impl<S: Latent> SeedState<S> {
    fn new(param: SeedParam, view: S) -> Self {
        let n = match &param {
            SeedParam::Spectral { coeffs, .. } => 2 * coeffs.coeffs().len(),
            SeedParam::Direct => view.values().len(),
        };
        Self {
            stage: S::STAGE,
            param,
            view,
            adam: AdamState::new(n),
            history: Vec::new(),
            final_log: None,
        }
    }

    pub fn stage(&self) -> Stage {
        self.stage
    }

    pub fn param(&self) -> &SeedParam {
        &self.param
    }

    /// Current seed `x_T` in latent space.
    pub fn view(&self) -> &S {
        &self.view
    }

    pub fn adam(&self) -> &AdamState {
        &self.adam
    }

    pub fn history(&self) -> &[StepLog] {
        &self.history
    }

    /// Losses at the returned seed (after the last update).
    pub fn final_log(&self) -> Option<&StepLog> {
        self.final_log.as_ref()
    }

    /// Flat real parameter vector in the order Adam sees it.
    fn flat_params(&self) -> Vec<f64> {
        match &self.param {
            SeedParam::Spectral { coeffs, .. } => coeffs.coeffs().iter().flat_map(|c| [c.re, c.im]).collect(),
            SeedParam::Direct => self.view.values().to_vec(),
        }
    }

    /// Apply one Adam update given the latent-space gradient.
    fn update(&mut self, grad: Vec<f64>, lr: f64, step: usize) -> Result<()> {
        let mut params = self.flat_params();
        let pgrad = match &self.param {
            SeedParam::Spectral { norm, .. } => {
                let dim = self.view.dim();
                let g = FeatureGrid::from_vec(dim, self.view.channels(), grad).map_err(|_| Error::Optimization { step })?;
                let gc = spectral_pullback(&g, *norm)?;
                let mut out = Vec::with_capacity(params.len());
                for (i, c) in gc.coeffs().iter().enumerate() {
                    let w = gc.weight(i);
                    out.push(w * c.re);
                    out.push(w * c.im);
                }
                out
            }
            SeedParam::Direct => grad,
        };
        adam_step(&mut params, &pgrad, &mut self.adam, lr)?;
        if params.iter().any(|v| !v.is_finite()) {
            return Err(Error::Optimization { step });
        }
        match &mut self.param {
            SeedParam::Spectral { coeffs, norm } => {
                for (c, pair) in coeffs.coeffs_mut().iter_mut().zip(params.chunks_exact(2)) {
                    c.re = pair[0];
                    c.im = pair[1];
                }
                let grid = spectral_view(coeffs, *norm)?;
                self.view = self.view.with_values(grid.into_vec())?;
            }
            SeedParam::Direct => {
                self.view = self.view.with_values(params).map_err(|_| Error::Optimization { step })?;
            }
        }
        Ok(())
    }
}

/// Grid encoded by spectral seed coefficients.
pub(crate) fn spectral_view(coeffs: &SpectralCoeffs, norm: SpectralNorm) -> Result<FeatureGrid> {
    let mut g = irfft3(coeffs)?;
    let s = norm.grid_scale(coeffs.dim());
    if s != 1.0 {
        for v in g.data_mut() {
            *v *= s;
        }
    }
    Ok(g)
}

fn spectral_init(grid: &FeatureGrid, norm: SpectralNorm) -> Result<SpectralCoeffs> {
    let mut c = rfft3(grid)?;
    let s = norm.grid_scale(grid.dim());
    if s != 1.0 {
        for v in c.coeffs_mut() {
            *v /= s;
        }
    }
    Ok(c)
}

fn run<S, F, O>(
    field: &F,
    target: &super::ObservationTarget<S>,
    config: &ConfigSeedOpt,
    lr: f64,
    mut state: SeedState<S>,
    observer: &mut O,
) -> Result<SeedState<S>>
where
    S: Latent,
    F: VelocityField<S> + ?Sized,
    O: FnMut(usize, &SeedState<S>) -> Result<()>,
{
    config.validate()?;
    let eval_at = |state: &SeedState<S>, step: usize| -> Result<LossEval> {
        let e = total_loss(field, &state.view, target, &config.lambdas, config.moment_scope, config.recon_reduction)?;
        if !e.total().is_finite() || e.grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Optimization { step });
        }
        Ok(e)
    };
    for step in 0..config.t_opt {
        let e = eval_at(&state, step)?;
        state.history.push(StepLog::from_eval(step, &e));
        observer(step, &state)?;
        state.update(e.grad, lr, step)?;
    }
    let e = eval_at(&state, config.t_opt)?;
    state.final_log = Some(StepLog::from_eval(config.t_opt, &e));
    observer(config.t_opt, &state)?;
    Ok(state)
}

/// Optimize the sparse-structure seed drawn from `config.seed`. The
/// observer sees the state after every number of completed updates,
/// `0..=t_opt`.
pub fn optimize_sparse_seed_observed<F, O>(field: &F, target: &GridTarget, config: &ConfigSeedOpt, observer: &mut O) -> Result<SeedState<FeatureGrid>>
where
    F: VelocityField<FeatureGrid> + ?Sized,
    O: FnMut(usize, &SeedState<FeatureGrid>) -> Result<()>,
{
    let init = sparse_noise(config.seed, target.y.dim(), target.y.channels());
    let state = match config.sparse_param {
        SparseParam::Spectral => {
            let coeffs = spectral_init(&init, config.spectral_norm)?;
            let view = spectral_view(&coeffs, config.spectral_norm)?;
            SeedState::new(
                SeedParam::Spectral {
                    coeffs,
                    norm: config.spectral_norm,
                },
                view,
            )
        }
        SparseParam::Direct => SeedState::new(SeedParam::Direct, init),
    };
    run(field, target, config, config.lr_sparse, state, observer)
}

pub fn optimize_sparse_seed<F: VelocityField<FeatureGrid> + ?Sized>(field: &F, target: &GridTarget, config: &ConfigSeedOpt) -> Result<SeedState<FeatureGrid>> {
    optimize_sparse_seed_observed(field, target, config, &mut |_, _| Ok(()))
}

/// Optimize the structured-latent seed on a fixed active set.
pub fn optimize_slat_seed<F: VelocityField<SparseLatent> + ?Sized>(
    field: &F,
    active: &[Position],
    target: &SlatTarget,
    config: &ConfigSeedOpt,
) -> Result<SeedState<SparseLatent>> {
    if target.y.positions() != active {
        return Err(Error::Dimension("target positions must equal the active set".into()));
    }
    if target.masked_entries() == 0 {
        return Err(Error::DegenerateConstraint("no preserved voxel is active".into()));
    }
    let init = slat_noise(config.seed, target.y.dim(), active.to_vec());
    let state = SeedState::new(SeedParam::Direct, init);
    run(field, target, config, config.lr_slat, state, &mut |_, _| Ok(()))
}
