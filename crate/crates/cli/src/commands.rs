//! Command bodies. Each receives a validated config and an existing output
//! directory holding the resolved-config snapshot.

use anyhow::Context;
use serde::Serialize;
use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use slatpaint::baselines::baseline_inpaint;
use slatpaint::experiments::{self, init_net, slat_items, sparse_items, stage_config, ModelPair};
use slatpaint::flownet::{fresh_checkpoint, load_checkpoint, resume, save_checkpoint, Checkpoint, TrainConfig, TrainItem};
use slatpaint::grid::Latent;
use slatpaint::io::{
    build_manifest, fmt_f64, image_extension, manifest_hash, manifest_to_string, read_csv, read_manifest, read_ply, sha256_hex,
    write_csv, write_image, write_jsonl, write_ply, write_raw_grid, ManifestRecord,
};
use slatpaint::metrics::{evaluate_inpaint, render_ortho, Axis, RenderKind, GENERATION_FIELDS, RECONSTRUCTION_FIELDS};
use slatpaint::rng::{derive_seed, derive_seed_str, Rng};
use slatpaint::sampler::{generate_asset, SamplerConfig};
use slatpaint::seedopt::{inpaint as seed_inpaint, ConfigSeedOpt, StepLog};
use slatpaint::shapes::{encode_sparse_target, half_mask, make_cuboid_mask, make_half_mask, RegionMask, VoxelAsset};
use slatpaint::{Error, Stage};

use crate::config::{
    AblateCmdConfig, BenchCmdConfig, Checkpoints, GenDataConfig, GenerateConfig, InpaintCmdConfig, MaskSpec, RenderConfig,
    TrainCmdConfig,
};
use crate::CliError;

fn create(path: impl AsRef<Path>) -> Result<File, CliError> {
    let path = path.as_ref();
    Ok(File::create(path).with_context(|| format!("cannot create {}", path.display()))?)
}

fn load_records(path: &Path) -> Result<Vec<ManifestRecord>, CliError> {
    read_manifest(path).map_err(|e| CliError::config(format!("manifest {}: {e}", path.display())))
}

fn load_models(paths: &Checkpoints) -> Result<ModelPair, CliError> {
    let load = |p: &Path, stage: Stage| -> Result<_, CliError> {
        let ckpt = load_checkpoint(p).map_err(|e| CliError::config(format!("checkpoint {}: {e}", p.display())))?;
        if ckpt.net.stage() != stage {
            return Err(CliError::config(format!("{} is a {} checkpoint", p.display(), ckpt.net.stage().name())));
        }
        Ok(ckpt.net)
    };
    Ok(ModelPair {
        sparse: load(&paths.sparse, Stage::SparseStructure)?,
        slat: load(&paths.slat, Stage::StructuredLatent)?,
    })
}

pub fn gen_data(cfg: &GenDataConfig, out: &Path) -> Result<(), CliError> {
    let records = build_manifest(cfg.count, cfg.seed, &cfg.families, cfg.dim)?;
    let text = manifest_to_string(&records)?;
    std::fs::write(out.join("manifest.jsonl"), &text)?;
    std::fs::write(out.join("manifest.sha256"), sha256_hex(text.as_bytes()) + "\n")?;
    if cfg.export_assets {
        let dir = out.join("assets");
        std::fs::create_dir_all(&dir)?;
        for (i, r) in records.iter().enumerate() {
            let asset = r.asset(cfg.dim)?;
            write_ply(create(dir.join(format!("{i:04}.ply")))?, &asset)?;
            write_raw_grid(create(dir.join(format!("{i:04}.grid")))?, &encode_sparse_target(&asset))?;
        }
    }
    Ok(())
}

fn loss_rows(path: &Path, before: u64) -> Result<Vec<Vec<String>>, CliError> {
    if !path.is_file() {
        return Ok(Vec::new());
    }
    let (_, rows) = read_csv(&std::fs::read_to_string(path)?)?;
    Ok(rows
        .into_iter()
        .filter(|r| r.first().and_then(|s| s.parse::<u64>().ok()).is_some_and(|s| s < before))
        .collect())
}

fn train_stage<S: Latent>(
    stage: Stage,
    items: &[TrainItem<S>],
    cfg: &TrainCmdConfig,
    hash: &str,
    out: &Path,
) -> Result<(), CliError> {
    let tc = stage_config(stage, &cfg.model.train);
    let ckpt_path = out.join(format!("{}.ckpt", stage.name()));
    let csv_path = out.join(format!("loss_{}.csv", stage.name()));
    let mut ckpt = if cfg.resume && ckpt_path.is_file() {
        let c = load_checkpoint(&ckpt_path)?;
        let m = &c.meta;
        if m.manifest_hash.as_deref() != Some(hash) {
            return Err(CliError::config(format!("{} was trained on a different manifest", ckpt_path.display())));
        }
        if (m.seed, m.lr, m.batch, m.voxel_subsample) != (tc.seed, tc.lr, tc.batch, tc.voxel_subsample)
            || c.net.config().hidden != cfg.model.hidden
        {
            return Err(CliError::config(format!("{} does not match the training settings", ckpt_path.display())));
        }
        c
    } else {
        fresh_checkpoint(init_net(stage, cfg.model.hidden, tc.seed), &tc, Some(hash.to_string()))
    };
    let mut rows = loss_rows(&csv_path, ckpt.meta.steps)?;
    let every = if cfg.checkpoint_every == 0 { tc.steps.max(1) } else { cfg.checkpoint_every };
    loop {
        let target = (ckpt.meta.steps + every).min(tc.steps);
        let start = ckpt.meta.steps;
        let (next, curve): (Checkpoint, Vec<f64>) = resume(ckpt, items, &TrainConfig { steps: target, ..tc.clone() })?;
        ckpt = next;
        rows.extend(curve.iter().enumerate().map(|(k, l)| vec![(start + k as u64).to_string(), fmt_f64(*l)]));
        save_checkpoint(&ckpt_path, &ckpt)?;
        write_csv(create(&csv_path)?, &["step", "loss"], &rows)?;
        if ckpt.meta.steps >= tc.steps {
            return Ok(());
        }
    }
}

pub fn train(cfg: &TrainCmdConfig, out: &Path) -> Result<(), CliError> {
    let records = load_records(&cfg.manifest)?;
    if records.is_empty() {
        return Err(CliError::config("manifest has no assets"));
    }
    let hash = manifest_hash(&records)?;
    let assets = records.iter().map(|r| r.asset(cfg.dim)).collect::<Result<Vec<_>, _>>()?;
    train_stage(Stage::SparseStructure, &sparse_items(&assets), cfg, &hash, out)?;
    train_stage(Stage::StructuredLatent, &slat_items(&assets), cfg, &hash, out)
}

pub fn generate(cfg: &GenerateConfig, out: &Path) -> Result<(), CliError> {
    let models = load_models(&cfg.checkpoints)?;
    let mut rows = Vec::new();
    for fam in &cfg.families {
        for k in 0..cfg.per_family {
            let seed = derive_seed(derive_seed(cfg.sampler.seed, fam.class_id() as u64), k as u64);
            let sc = SamplerConfig { seed, ..cfg.sampler };
            let id = format!("{}_{k:02}", fam.name());
            let (status, count) = match generate_asset(&models.sparse, &models.slat, fam.class_id(), cfg.dim, &sc) {
                Ok(asset) => {
                    write_ply(create(out.join(format!("{id}.ply")))?, &asset)?;
                    ("ok", asset.occupied_count())
                }
                Err(Error::EmptyStructure) => ("empty_structure", 0),
                Err(e) => return Err(e.into()),
            };
            rows.push(vec![id, fam.name().into(), seed.to_string(), status.into(), count.to_string()]);
        }
    }
    write_csv(create(out.join("generate.csv"))?, &["asset_id", "family", "seed", "status", "occupied"], &rows)?;
    Ok(())
}

fn build_mask(spec: &MaskSpec, dim: usize, case_seed: u64) -> Result<RegionMask, CliError> {
    match spec {
        MaskSpec::RandomHalf => Ok(make_half_mask(&mut Rng::new(derive_seed_str(case_seed, "mask")), dim)?),
        MaskSpec::Half { axis, side } => {
            if *axis > 2 || *side > 1 {
                return Err(CliError::config("half mask needs axis in 0..3 and side in 0..2"));
            }
            Ok(half_mask(dim, *axis, *side))
        }
        MaskSpec::Cuboid { lo, hi } => make_cuboid_mask(dim, *lo, *hi).map_err(CliError::config),
    }
}

#[derive(Serialize)]
struct StageLog<'a> {
    asset_id: usize,
    stage: &'a str,
    #[serde(flatten)]
    log: &'a StepLog,
}

#[derive(Serialize)]
struct BaselineLog<'a> {
    asset_id: usize,
    method: &'a str,
    nfe: usize,
}

pub fn inpaint(cfg: &InpaintCmdConfig, out: &Path) -> Result<(), CliError> {
    let records = load_records(&cfg.manifest)?;
    let models = load_models(&cfg.checkpoints)?;
    let mut header = vec!["asset_id", "method", "nfe"];
    header.extend(RECONSTRUCTION_FIELDS);
    header.extend(GENERATION_FIELDS);
    let mut rows = Vec::new();
    for &i in &cfg.assets {
        let rec = records
            .get(i)
            .ok_or_else(|| CliError::config(format!("asset index {i} outside manifest of {}", records.len())))?;
        let asset = rec.asset(cfg.dim)?;
        let case = derive_seed(cfg.seed, i as u64);
        let mask = build_mask(&cfg.mask, cfg.dim, case)?;
        let run_seed = derive_seed_str(case, "run");
        let empty = |e: Error| -> CliError {
            match e {
                Error::EmptyStructure => anyhow::anyhow!(
                    "asset {i} ({}): sampled structure has no active voxels under method {}",
                    rec.shape.kind().name(),
                    cfg.method.name()
                )
                .into(),
                e => e.into(),
            }
        };
        let log = create(out.join(format!("{i:04}_{}_steps.jsonl", cfg.method.name())))?;
        let (result, nfe) = match cfg.method.baseline() {
            None => {
                let so = ConfigSeedOpt { seed: run_seed, ..cfg.seedopt.clone() };
                let o = seed_inpaint(&models.sparse, &models.slat, &asset, &mask, rec.class_id, &so).map_err(empty)?;
                let mut lines: Vec<StageLog> =
                    o.sparse.history().iter().map(|log| StageLog { asset_id: i, stage: "sparse", log }).collect();
                if let Some(s) = &o.slat {
                    lines.extend(s.history().iter().map(|log| StageLog { asset_id: i, stage: "slat", log }));
                }
                write_jsonl(log, &lines)?;
                let slat_opt = if o.slat.is_some() { so.t_opt + 1 } else { 0 };
                let nfe = so.t_opt + 1 + so.sampling_steps + slat_opt + so.sampling_steps;
                (o.asset, nfe)
            }
            Some(method) => {
                let bc = slatpaint::baselines::BaselineConfig { method, seed: run_seed, ..cfg.baseline.clone() };
                let o = baseline_inpaint(&models.sparse, &models.slat, &asset, &mask, rec.class_id, &bc).map_err(empty)?;
                write_jsonl(log, &[BaselineLog { asset_id: i, method: cfg.method.name(), nfe: o.nfe }])?;
                (o.asset, o.nfe)
            }
        };
        write_ply(create(out.join(format!("{i:04}_{}.ply", cfg.method.name())))?, &result)?;
        let m = evaluate_inpaint(&result, &asset, &mask)?;
        let mut row = vec![i.to_string(), cfg.method.name().to_string(), nfe.to_string()];
        row.extend(m.reconstruction_values().iter().chain(&m.generation_values()).map(|v| fmt_f64(*v)));
        rows.push(row);
    }
    write_csv(create(out.join(format!("metrics_{}.csv", cfg.method.name())))?, &header, &rows)?;
    Ok(())
}

pub fn bench(cfg: &BenchCmdConfig, out: &Path) -> Result<(), CliError> {
    let models = load_models(&cfg.checkpoints)?;
    let report = experiments::bench(&models, &cfg.bench)?;
    report.write(out)?;
    Ok(())
}

pub fn ablate(cfg: &AblateCmdConfig, out: &Path) -> Result<(), CliError> {
    let models = load_models(&cfg.checkpoints)?;
    let rows = experiments::ablate(&models, &cfg.ablate)?;
    experiments::write_ablation(out, &rows)?;
    Ok(())
}

fn render_one(asset: &VoxelAsset, id: &str, out: &Path) -> Result<(), CliError> {
    for axis in Axis::ALL {
        for kind in RenderKind::ALL {
            let img = render_ortho(asset, axis, kind);
            let name = format!("{id}_{}_{}.{}", axis.name(), kind.name(), image_extension(&img));
            write_image(create(out.join(name))?, &img)?;
        }
    }
    write_ply(create(out.join(format!("{id}.ply")))?, asset)?;
    Ok(())
}

pub fn render(cfg: &RenderConfig, out: &Path) -> Result<(), CliError> {
    if let Some(m) = &cfg.manifest {
        let records = load_records(m)?;
        let picks: Vec<usize> = cfg.assets.clone().unwrap_or_else(|| (0..records.len()).collect());
        for i in picks {
            let rec = records
                .get(i)
                .ok_or_else(|| CliError::config(format!("asset index {i} outside manifest of {}", records.len())))?;
            render_one(&rec.asset(cfg.dim)?, &format!("{i:04}"), out)?;
        }
    }
    for p in &cfg.ply {
        let stem = p
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| CliError::config(format!("cannot name output for {}", p.display())))?;
        let asset = read_ply(BufReader::new(File::open(p)?), cfg.dim, 0)?;
        let dir = out.join("ply");
        std::fs::create_dir_all(&dir)?;
        render_one(&asset, stem, &dir)?;
    }
    Ok(())
}
