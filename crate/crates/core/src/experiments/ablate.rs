use serde::{Deserialize, Serialize};
use std::path::Path;

use super::bench::{bench_items, BenchConfig, BenchItem};
use super::{median, ModelPair};
use crate::error::{Error, Result};
use crate::flownet::Conditioned;
use crate::io::{fmt_f64, write_csv, write_jsonl};
use crate::metrics::{iou_dice, restrict, PointCloud, fscore};
use crate::sampler::{active_set, euler_sample, SamplerConfig};
use crate::seedopt::{optimize_sparse_seed, sparse_target, ConfigSeedOpt, SparseParam, StepLog};
use crate::shapes::{FamilyKind, VoxelAsset, DEFAULT_DIM};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Spectral parameterization with the moment penalty.
    Full,
    /// Voxel-space seed at the same learning rate.
    NoSpectral,
    /// All moment weights set to zero.
    NoGauss,
    /// Full method at each learning rate in `lrs`.
    LrSweep,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Full, Variant::NoSpectral, Variant::NoGauss, Variant::LrSweep];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoSpectral => "no-spectral",
            Variant::NoGauss => "no-gauss",
            Variant::LrSweep => "lr-sweep",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == name)
            .ok_or_else(|| Error::Parameter(format!("unknown ablation variant '{name}'")))
    }

    /// Seed-optimization settings for this variant at the given rate.
    pub fn config(self, base: &ConfigSeedOpt, lr: f64) -> ConfigSeedOpt {
        let mut c = ConfigSeedOpt {
            lr_sparse: lr,
            ..base.clone()
        };
        match self {
            Variant::NoSpectral => c.sparse_param = SparseParam::Direct,
            Variant::NoGauss => c.lambdas = [0.0; 4],
            Variant::Full | Variant::LrSweep => {}
        }
        c
    }
}

/// Ablation settings. Cases are the first `assets` benchmark cases for the
/// same seed, so rows line up with the benchmark tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblateConfig {
    pub assets: usize,
    pub dim: usize,
    pub seed: u64,
    pub families: Vec<FamilyKind>,
    pub variants: Vec<Variant>,
    pub lrs: Vec<f64>,
    pub seedopt: ConfigSeedOpt,
}

impl Default for AblateConfig {
    fn default() -> Self {
        Self {
            assets: 20,
            dim: DEFAULT_DIM,
            seed: 0,
            families: FamilyKind::ALL.to_vec(),
            variants: Variant::ALL.to_vec(),
            lrs: vec![0.5, 1.0, 2.5, 5.0, 10.0, 20.0],
            seedopt: ConfigSeedOpt::default(),
        }
    }
}

/// Sparse-stage outcome of one variant on one case. Geometry only: the
/// structured-latent stage does not change occupancy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: Variant,
    pub lr: f64,
    pub asset_id: usize,
    /// `ok`, `diverged` or `empty_structure`.
    pub status: String,
    pub nan_step: Option<usize>,
    pub pres_iou: f64,
    pub pres_dice: f64,
    pub pres_f002: f64,
    pub recon_loss: f64,
    pub dist_loss: f64,
    pub mu: f64,
    pub sigma: f64,
    pub gamma: f64,
    pub kappa: f64,
    /// `|sigma - 1|` of the final seed.
    pub sigma_dev: f64,
    #[serde(skip)]
    pub history: Vec<StepLog>,
}

fn run_variant(models: &ModelPair, item: &BenchItem, variant: Variant, lr: f64, base: &ConfigSeedOpt) -> Result<AblationRow> {
    let config = ConfigSeedOpt {
        seed: item.run_seed,
        ..variant.config(base, lr)
    };
    let class = item.record.class_id;
    let field = Conditioned::new(&models.sparse, class);
    let mut row = AblationRow {
        variant,
        lr,
        asset_id: item.asset_id,
        status: "ok".into(),
        nan_step: None,
        pres_iou: 0.0,
        pres_dice: 0.0,
        pres_f002: 0.0,
        recon_loss: f64::NAN,
        dist_loss: f64::NAN,
        mu: f64::NAN,
        sigma: f64::NAN,
        gamma: f64::NAN,
        kappa: f64::NAN,
        sigma_dev: f64::NAN,
        history: Vec::new(),
    };
    let state = match optimize_sparse_seed(&field, &sparse_target(&item.asset, &item.mask)?, &config) {
        Ok(s) => s,
        Err(Error::Optimization { step }) => {
            row.status = "diverged".into();
            row.nan_step = Some(step);
            return Ok(row);
        }
        Err(e) => return Err(e),
    };
    let last = state.final_log().cloned().expect("final log after optimization");
    row.history = state.history().to_vec();
    row.recon_loss = last.recon_loss;
    row.dist_loss = last.dist_loss;
    row.mu = last.mu;
    row.sigma = last.sigma;
    row.gamma = last.gamma;
    row.kappa = last.kappa;
    row.sigma_dev = (last.sigma - 1.0).abs();
    let sampler = SamplerConfig {
        steps: config.sampling_steps,
        seed: config.seed,
        ..SamplerConfig::default()
    };
    let structure = match euler_sample(&field, state.view(), &sampler) {
        Ok(s) => s,
        Err(Error::Sampling { step }) => {
            row.status = "diverged".into();
            row.nan_step = Some(config.t_opt + step);
            return Ok(row);
        }
        Err(e) => return Err(e),
    };
    let active = match active_set(&structure) {
        Ok(a) => a,
        Err(Error::EmptyStructure) => {
            row.status = "empty_structure".into();
            return Ok(row);
        }
        Err(e) => return Err(e),
    };
    let colors = vec![[0.0; 3]; active.len()];
    let result = VoxelAsset::from_voxels(item.asset.dim(), &active, &colors, class)?;
    let keep = item.mask.preserved();
    let (a, b) = (restrict(result.occupancy(), keep), restrict(item.asset.occupancy(), keep));
    (row.pres_iou, row.pres_dice) = iou_dice(&a, &b)?;
    let pa = PointCloud::from_asset(&result.restricted(keep));
    let pb = PointCloud::from_asset(&item.asset.restricted(keep));
    if !pa.is_empty() {
        row.pres_f002 = fscore(&pa, &pb, 0.02)?.2;
    }
    Ok(row)
}

/// Run the configured variants on every case. Rows are ordered by variant,
/// then learning rate, then case.
pub fn ablate(models: &ModelPair, config: &AblateConfig) -> Result<Vec<AblationRow>> {
    config.seedopt.validate()?;
    if config.lrs.iter().any(|lr| !(*lr > 0.0)) {
        return Err(Error::Parameter("learning rates must be positive".into()));
    }
    let items = bench_items(&BenchConfig {
        assets: config.assets,
        dim: config.dim,
        seed: config.seed,
        families: config.families.clone(),
        ..BenchConfig::default()
    })?;
    let mut rows = Vec::new();
    for &v in &config.variants {
        let lrs = if v == Variant::LrSweep { config.lrs.clone() } else { vec![config.seedopt.lr_sparse] };
        for lr in lrs {
            for it in &items {
                rows.push(run_variant(models, it, v, lr, &config.seedopt)?);
            }
        }
    }
    Ok(rows)
}

pub const ABLATION_FIELDS: [&str; 16] = [
    "variant", "lr", "asset_id", "status", "nan_step", "pres_iou", "pres_dice", "pres_f002", "recon_loss", "dist_loss", "mu",
    "sigma", "gamma", "kappa", "sigma_dev", "steps_logged",
];

/// Per-run rows in CSV layout.
pub fn ablation_csv(rows: &[AblationRow]) -> Vec<Vec<String>> {
    rows.iter()
        .map(|r| {
            vec![
                r.variant.name().into(),
                fmt_f64(r.lr),
                r.asset_id.to_string(),
                r.status.clone(),
                r.nan_step.map(|s| s.to_string()).unwrap_or_default(),
                fmt_f64(r.pres_iou),
                fmt_f64(r.pres_dice),
                fmt_f64(r.pres_f002),
                fmt_f64(r.recon_loss),
                fmt_f64(r.dist_loss),
                fmt_f64(r.mu),
                fmt_f64(r.sigma),
                fmt_f64(r.gamma),
                fmt_f64(r.kappa),
                fmt_f64(r.sigma_dev),
                r.history.len().to_string(),
            ]
        })
        .collect()
}

/// Write `ablation.csv`, `ablation_summary.csv` and the per-step
/// `ablation_logs.jsonl` into `dir`.
pub fn write_ablation(dir: &Path, rows: &[AblationRow]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    write_csv(std::fs::File::create(dir.join("ablation.csv"))?, &ABLATION_FIELDS, &ablation_csv(rows))?;
    let mut groups: Vec<(Variant, f64)> = Vec::new();
    for r in rows {
        if !groups.iter().any(|g| g.0 == r.variant && g.1 == r.lr) {
            groups.push((r.variant, r.lr));
        }
    }
    let summary: Vec<Vec<String>> = groups
        .iter()
        .map(|&(v, lr)| {
            let g: Vec<&AblationRow> = rows.iter().filter(|r| r.variant == v && r.lr == lr).collect();
            vec![
                v.name().into(),
                fmt_f64(lr),
                g.len().to_string(),
                g.iter().filter(|r| r.status == "diverged").count().to_string(),
                fmt_f64(median(&g.iter().map(|r| r.pres_iou).collect::<Vec<_>>())),
                fmt_f64(median(&g.iter().map(|r| r.sigma_dev).collect::<Vec<_>>())),
            ]
        })
        .collect();
    write_csv(
        std::fs::File::create(dir.join("ablation_summary.csv"))?,
        &["variant", "lr", "runs", "diverged", "median_pres_iou", "median_sigma_dev"],
        &summary,
    )?;
    #[derive(Serialize)]
    struct Line<'a> {
        variant: &'a str,
        lr: f64,
        asset_id: usize,
        #[serde(flatten)]
        log: &'a StepLog,
    }
    let lines: Vec<Line> = rows
        .iter()
        .flat_map(|r| {
            r.history.iter().map(move |log| Line {
                variant: r.variant.name(),
                lr: r.lr,
                asset_id: r.asset_id,
                log,
            })
        })
        .collect();
    write_jsonl(std::fs::File::create(dir.join("ablation_logs.jsonl"))?, &lines)?;
    Ok(())
}
