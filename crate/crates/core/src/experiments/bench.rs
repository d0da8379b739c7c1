use serde::{Deserialize, Serialize};
use std::path::Path;
use std::time::Instant;

use super::{finite_mean, median, ModelPair};
use crate::baselines::{baseline_inpaint, BaselineConfig, BaselineMethod};
use crate::error::{Error, Result};
use crate::flownet::Conditioned;
use crate::grid::FeatureGrid;
use crate::io::{build_manifest, fmt_f64, write_csv, ManifestRecord};
use crate::metrics::{evaluate_inpaint, iou_dice, restrict, MetricRecord, GENERATION_FIELDS, RECONSTRUCTION_FIELDS};
use crate::rng::{derive_seed, derive_seed_str, Rng};
use crate::sampler::{euler_sample, SamplerConfig};
use crate::seedopt::{inpaint_observed, ConfigSeedOpt, SeedState};
use crate::shapes::{decode_occupancy, make_half_mask, FamilyKind, RegionMask, VoxelAsset, DEFAULT_DIM};

const MASK_ATTEMPTS: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InpaintMethod {
    Ours,
    Repaint,
    Sdedit,
    Ilvr,
}

impl InpaintMethod {
    pub const ALL: [InpaintMethod; 4] = [InpaintMethod::Ours, InpaintMethod::Repaint, InpaintMethod::Sdedit, InpaintMethod::Ilvr];

    pub fn name(self) -> &'static str {
        match self {
            InpaintMethod::Ours => "ours",
            InpaintMethod::Repaint => "repaint",
            InpaintMethod::Sdedit => "sdedit",
            InpaintMethod::Ilvr => "ilvr",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == name)
            .ok_or_else(|| Error::Parameter(format!("unknown method '{name}' (expected ours, repaint, sdedit or ilvr)")))
    }

    pub fn baseline(self) -> Option<BaselineMethod> {
        match self {
            InpaintMethod::Ours => None,
            InpaintMethod::Repaint => Some(BaselineMethod::Repaint),
            InpaintMethod::Sdedit => Some(BaselineMethod::Sdedit),
            InpaintMethod::Ilvr => Some(BaselineMethod::Ilvr),
        }
    }
}

/// Benchmark settings. `seedopt.seed`, `baseline.seed` and `baseline.method`
/// are replaced per run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchConfig {
    pub assets: usize,
    pub dim: usize,
    pub seed: u64,
    pub families: Vec<FamilyKind>,
    pub methods: Vec<InpaintMethod>,
    pub seedopt: ConfigSeedOpt,
    pub baseline: BaselineConfig,
    /// Record preserved-region IoU/Dice of the sampled structure after every
    /// seed update (method `ours` only).
    pub trace_convergence: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            assets: 50,
            dim: DEFAULT_DIM,
            seed: 0,
            families: FamilyKind::ALL.to_vec(),
            methods: InpaintMethod::ALL.to_vec(),
            seedopt: ConfigSeedOpt::default(),
            baseline: BaselineConfig::default(),
            trace_convergence: true,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.families.is_empty() || self.methods.is_empty() {
            return Err(Error::Parameter("families and methods must be nonempty".into()));
        }
        self.seedopt.validate()?;
        self.baseline.validate()
    }
}

/// One benchmark case: a held-out asset, its half-volume mask and the seed
/// shared by every method on this case.
#[derive(Debug, Clone)]
pub struct BenchItem {
    pub asset_id: usize,
    pub record: ManifestRecord,
    pub asset: VoxelAsset,
    pub mask: RegionMask,
    pub run_seed: u64,
}

/// Benchmark cases for `config`. Masks whose preserved half holds no
/// occupied voxel are redrawn from the same stream.
pub fn bench_items(config: &BenchConfig) -> Result<Vec<BenchItem>> {
    let recs = build_manifest(config.assets, derive_seed_str(config.seed, "bench-assets"), &config.families, config.dim)?;
    recs.into_iter()
        .enumerate()
        .map(|(i, record)| {
            let case = derive_seed(config.seed, i as u64);
            let asset = record.asset(config.dim)?;
            let mut rng = Rng::new(derive_seed_str(case, "mask"));
            let mut mask = None;
            for _ in 0..MASK_ATTEMPTS {
                let m = make_half_mask(&mut rng, config.dim)?;
                if asset.occupied_positions().iter().any(|p| m.is_preserved(*p)) {
                    mask = Some(m);
                    break;
                }
            }
            let mask = mask.ok_or_else(|| Error::DegenerateConstraint(format!("asset {i}: no half mask keeps a voxel")))?;
            Ok(BenchItem {
                asset_id: i,
                record,
                asset,
                mask,
                run_seed: derive_seed_str(case, "run"),
            })
        })
        .collect()
}

/// Preserved-region occupancy scores of a sampled structure after a given
/// number of seed updates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub step: usize,
    pub iou: f64,
    pub dice: f64,
}

fn structure_scores(structure: &FeatureGrid, gt: &VoxelAsset, mask: &RegionMask) -> Result<(f64, f64)> {
    let mut occ = vec![false; gt.occupancy().len()];
    for p in decode_occupancy(structure, 0.0) {
        occ[gt.index(p)] = true;
    }
    let a = restrict(&occ, mask.preserved());
    let b = restrict(gt.occupancy(), mask.preserved());
    match iou_dice(&a, &b) {
        Err(Error::EmptyInput(_)) => Ok((1.0, 1.0)),
        r => r,
    }
}

fn sampler_for(config: &ConfigSeedOpt) -> SamplerConfig {
    SamplerConfig {
        steps: config.sampling_steps,
        seed: config.seed,
        ..SamplerConfig::default()
    }
}

fn trace_observer<'a>(
    models: &'a ModelPair,
    item: &'a BenchItem,
    config: &'a ConfigSeedOpt,
    trace: &'a mut Vec<TracePoint>,
) -> impl FnMut(usize, &SeedState<FeatureGrid>) -> Result<()> + 'a {
    let sampler = sampler_for(config);
    move |step, state| {
        let field = Conditioned::new(&models.sparse, item.record.class_id);
        let s = euler_sample(&field, state.view(), &sampler)?;
        let (iou, dice) = structure_scores(&s, &item.asset, &item.mask)?;
        trace.push(TracePoint { step, iou, dice });
        Ok(())
    }
}

/// Preserved-region IoU/Dice of the sampled structure after each of the
/// `t_opt` seed updates (entry 0 is the unoptimized seed).
pub fn convergence_trace(models: &ModelPair, item: &BenchItem, config: &ConfigSeedOpt) -> Result<Vec<TracePoint>> {
    let config = ConfigSeedOpt {
        seed: item.run_seed,
        ..config.clone()
    };
    let field = Conditioned::new(&models.sparse, item.record.class_id);
    let target = crate::seedopt::sparse_target(&item.asset, &item.mask)?;
    let mut trace = Vec::new();
    crate::seedopt::optimize_sparse_seed_observed(&field, &target, &config, &mut trace_observer(models, item, &config, &mut trace))?;
    Ok(trace)
}

/// First step at which both thresholds are met.
pub fn convergence_step(trace: &[TracePoint], iou: f64, dice: f64) -> Option<usize> {
    trace.iter().find(|p| p.iou >= iou && p.dice >= dice).map(|p| p.step)
}

/// Outcome of one method on one benchmark case.
#[derive(Debug, Clone)]
pub struct MethodRun {
    pub method: InpaintMethod,
    pub asset_id: usize,
    pub asset: VoxelAsset,
    /// `ok` or `empty_structure`.
    pub status: &'static str,
    /// Velocity evaluations spent, excluding convergence tracing.
    pub nfe: usize,
    pub record: MetricRecord,
    pub trace: Vec<TracePoint>,
    pub seconds: f64,
}

fn empty_like(asset: &VoxelAsset) -> VoxelAsset {
    let n = asset.occupancy().len();
    VoxelAsset::new(asset.dim(), vec![false; n], vec![[0.0; 3]; n], asset.class_id()).expect("same dimensions")
}

fn sparse_stage_nfe(method: InpaintMethod, so: &ConfigSeedOpt, bc: &BaselineConfig) -> usize {
    match method {
        InpaintMethod::Ours => so.t_opt + 1 + so.sampling_steps,
        InpaintMethod::Repaint => bc.steps * bc.repaint_resamples,
        InpaintMethod::Sdedit => (bc.steps as f64 * bc.sdedit_strength).ceil() as usize,
        InpaintMethod::Ilvr => bc.steps,
    }
}

/// Run one method on one case and score it against the ground truth.
pub fn run_method(models: &ModelPair, item: &BenchItem, method: InpaintMethod, config: &BenchConfig) -> Result<MethodRun> {
    let start = Instant::now();
    let class = item.record.class_id;
    let so = ConfigSeedOpt {
        seed: item.run_seed,
        ..config.seedopt.clone()
    };
    let mut trace = Vec::new();
    let outcome: Result<(VoxelAsset, usize)> = match method.baseline() {
        None => {
            let res = if config.trace_convergence {
                inpaint_observed(&models.sparse, &models.slat, &item.asset, &item.mask, class, &so, &mut trace_observer(models, item, &so, &mut trace))
            } else {
                inpaint_observed(&models.sparse, &models.slat, &item.asset, &item.mask, class, &so, &mut |_, _| Ok(()))
            };
            res.map(|o| {
                let slat_opt = if o.slat.is_some() { so.t_opt + 1 } else { 0 };
                let nfe = sparse_stage_nfe(method, &so, &config.baseline) + slat_opt + so.sampling_steps;
                (o.asset, nfe)
            })
        }
        Some(b) => {
            let bc = BaselineConfig {
                method: b,
                seed: item.run_seed,
                ..config.baseline.clone()
            };
            baseline_inpaint(&models.sparse, &models.slat, &item.asset, &item.mask, class, &bc).map(|o| (o.asset, o.nfe))
        }
    };
    let (asset, status, nfe) = match outcome {
        Ok((a, nfe)) => (a, "ok", nfe),
        Err(Error::EmptyStructure) => (empty_like(&item.asset), "empty_structure", sparse_stage_nfe(method, &so, &config.baseline)),
        Err(e) => return Err(e),
    };
    let record = evaluate_inpaint(&asset, &item.asset, &item.mask)?;
    Ok(MethodRun {
        method,
        asset_id: item.asset_id,
        asset,
        status,
        nfe,
        record,
        trace,
        seconds: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub items: Vec<BenchItem>,
    /// Runs per method in `config.methods` order, each in asset order.
    pub runs: Vec<(InpaintMethod, Vec<MethodRun>)>,
}

/// Run every configured method on every benchmark case.
pub fn bench(models: &ModelPair, config: &BenchConfig) -> Result<BenchReport> {
    config.validate()?;
    let items = bench_items(config)?;
    let mut runs = Vec::new();
    for &m in &config.methods {
        let rs = items.iter().map(|it| run_method(models, it, m, config)).collect::<Result<Vec<_>>>()?;
        runs.push((m, rs));
    }
    Ok(BenchReport { items, runs })
}

pub const SUMMARY_FIELDS: [&str; 11] = [
    "method",
    "assets",
    "empty_structures",
    "median_pres_iou",
    "median_pres_dice",
    "median_pres_f002",
    "mean_pres_iou",
    "mean_pres_cd_x100",
    "mean_pres_psnr_normal",
    "mean_pres_ssim_normal",
    "mean_nfe",
];

impl BenchReport {
    pub fn method(&self, m: InpaintMethod) -> Option<&[MethodRun]> {
        self.runs.iter().find(|(k, _)| *k == m).map(|(_, r)| r.as_slice())
    }

    fn table(&self, runs: &[MethodRun], fields: &[&str], values: impl Fn(&MethodRun) -> Vec<f64>) -> (Vec<String>, Vec<Vec<String>>) {
        let mut header = vec!["asset_id".to_string(), "class_id".into(), "family".into(), "status".into()];
        header.extend(fields.iter().map(|s| s.to_string()));
        let mut rows = Vec::new();
        let mut cols: Vec<Vec<f64>> = vec![Vec::new(); fields.len()];
        for r in runs {
            let it = &self.items[r.asset_id];
            let vals = values(r);
            let mut row = vec![r.asset_id.to_string(), it.record.class_id.to_string(), it.record.shape.kind().name().into(), r.status.into()];
            for (c, v) in vals.iter().enumerate() {
                cols[c].push(*v);
                row.push(fmt_f64(*v));
            }
            rows.push(row);
        }
        let mut mean = vec!["mean".to_string(), String::new(), String::new(), String::new()];
        mean.extend(cols.iter().map(|c| fmt_f64(finite_mean(c))));
        rows.push(mean);
        (header, rows)
    }

    /// Per-asset preserved-region table for one method; the last row holds
    /// the column means over non-NaN entries.
    pub fn reconstruction_table(&self, m: InpaintMethod) -> (Vec<String>, Vec<Vec<String>>) {
        let runs = self.method(m).unwrap_or(&[]);
        self.table(runs, &RECONSTRUCTION_FIELDS, |r| r.record.reconstruction_values().to_vec())
    }

    /// Per-asset inpaint-region table for one method, with the NFE count.
    pub fn generation_table(&self, m: InpaintMethod) -> (Vec<String>, Vec<Vec<String>>) {
        let runs = self.method(m).unwrap_or(&[]);
        let mut fields: Vec<&str> = GENERATION_FIELDS.to_vec();
        fields.push("nfe");
        self.table(runs, &fields, |r| {
            let mut v = r.record.generation_values().to_vec();
            v.push(r.nfe as f64);
            v
        })
    }

    pub fn summary_rows(&self) -> Vec<Vec<String>> {
        self.runs
            .iter()
            .map(|(m, runs)| {
                let col = |f: fn(&MethodRun) -> f64| runs.iter().map(f).collect::<Vec<_>>();
                vec![
                    m.name().to_string(),
                    runs.len().to_string(),
                    runs.iter().filter(|r| r.status != "ok").count().to_string(),
                    fmt_f64(median(&col(|r| r.record.pres_iou))),
                    fmt_f64(median(&col(|r| r.record.pres_dice))),
                    fmt_f64(median(&col(|r| r.record.pres_f002))),
                    fmt_f64(finite_mean(&col(|r| r.record.pres_iou))),
                    fmt_f64(finite_mean(&col(|r| r.record.pres_cd_x100))),
                    fmt_f64(finite_mean(&col(|r| r.record.pres_psnr_normal))),
                    fmt_f64(finite_mean(&col(|r| r.record.pres_ssim_normal))),
                    fmt_f64(finite_mean(&col(|r| r.nfe as f64))),
                ]
            })
            .collect()
    }

    /// Write all tables into `dir`. Wall-clock times go to `timing.json`,
    /// which is the only output that differs between identical runs.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let csv = |name: String, (h, rows): (Vec<String>, Vec<Vec<String>>)| -> Result<()> {
            let header: Vec<&str> = h.iter().map(String::as_str).collect();
            write_csv(std::fs::File::create(dir.join(name))?, &header, &rows)
        };
        for (m, runs) in &self.runs {
            csv(format!("reconstruction_{}.csv", m.name()), self.reconstruction_table(*m))?;
            csv(format!("generation_{}.csv", m.name()), self.generation_table(*m))?;
            if runs.iter().any(|r| !r.trace.is_empty()) {
                let rows = runs
                    .iter()
                    .flat_map(|r| {
                        r.trace
                            .iter()
                            .map(move |p| vec![r.asset_id.to_string(), p.step.to_string(), fmt_f64(p.iou), fmt_f64(p.dice)])
                    })
                    .collect::<Vec<_>>();
                csv(
                    format!("convergence_{}.csv", m.name()),
                    (vec!["asset_id".into(), "step".into(), "pres_iou".into(), "pres_dice".into()], rows),
                )?;
            }
        }
        csv("summary.csv".into(), (SUMMARY_FIELDS.iter().map(|s| s.to_string()).collect(), self.summary_rows()))?;
        let timing: serde_json::Map<String, serde_json::Value> = self
            .runs
            .iter()
            .map(|(m, runs)| (m.name().to_string(), serde_json::json!(runs.iter().map(|r| r.seconds).sum::<f64>())))
            .collect();
        std::fs::write(dir.join("timing.json"), serde_json::to_string_pretty(&timing)?)?;
        Ok(())
    }
}

/// Preserved-region IoU of each seed's result and inpaint-region IoU of
/// every pair of results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversityReport {
    pub seeds: Vec<u64>,
    pub preserved_iou: Vec<f64>,
    /// `(i, j, iou)` for `i < j`; 1 when both inpaint regions are empty.
    pub pairwise_inpaint_iou: Vec<(usize, usize, f64)>,
}

/// Inpaint one case with several seeds using seed optimization.
pub fn diversity(models: &ModelPair, item: &BenchItem, seeds: &[u64], config: &ConfigSeedOpt) -> Result<DiversityReport> {
    let mut preserved = Vec::new();
    let mut inpainted = Vec::new();
    for &seed in seeds {
        let so = ConfigSeedOpt { seed, ..config.clone() };
        let asset = match crate::seedopt::inpaint(&models.sparse, &models.slat, &item.asset, &item.mask, item.record.class_id, &so) {
            Ok(o) => o.asset,
            Err(Error::EmptyStructure) => empty_like(&item.asset),
            Err(e) => return Err(e),
        };
        preserved.push(evaluate_inpaint(&asset, &item.asset, &item.mask)?.pres_iou);
        inpainted.push(restrict(asset.occupancy(), &item.mask.inpaint()));
    }
    let mut pairs = Vec::new();
    for i in 0..seeds.len() {
        for j in i + 1..seeds.len() {
            let iou = match iou_dice(&inpainted[i], &inpainted[j]) {
                Ok((v, _)) => v,
                Err(Error::EmptyInput(_)) => 1.0,
                Err(e) => return Err(e),
            };
            pairs.push((i, j, iou));
        }
    }
    Ok(DiversityReport {
        seeds: seeds.to_vec(),
        preserved_iou: preserved,
        pairwise_inpaint_iou: pairs,
    })
}
