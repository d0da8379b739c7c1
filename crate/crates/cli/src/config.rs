//! Per-command run configurations. Every struct rejects unknown keys and
//! fills omitted ones with defaults. Relative paths are resolved against the
//! directory of the config file.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use slatpaint::baselines::BaselineConfig;
use slatpaint::experiments::{AblateConfig, BenchConfig, InpaintMethod, PairTrainConfig, Variant};
use slatpaint::sampler::SamplerConfig;
use slatpaint::seedopt::ConfigSeedOpt;
use slatpaint::shapes::{FamilyKind, DEFAULT_DIM};

use crate::CliError;

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn default_dim() -> usize {
    DEFAULT_DIM
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() && !p.as_os_str().is_empty() {
        *p = base.join(&*p);
    }
}

/// Settings shared by the command dispatcher.
pub trait RunConfig: Serialize + DeserializeOwned {
    fn out_mut(&mut self) -> &mut PathBuf;
    fn set_seed(&mut self, seed: u64);
    fn set_method(&mut self, name: &str) -> Result<(), CliError> {
        Err(CliError::config(format!("--method does not apply to this command (got '{name}')")))
    }
    fn resolve_paths(&mut self, base: &Path);
    /// Input files that must exist before any work starts.
    fn inputs(&self) -> Vec<&Path>;
    fn validate(&self) -> Result<(), CliError> {
        Ok(())
    }
}

/// Parse `text` strictly into `T`.
pub fn parse<T: RunConfig>(text: &str) -> Result<T, CliError> {
    serde_json::from_str(text).map_err(|e| CliError::config(format!("invalid config: {e}")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoints {
    pub sparse: PathBuf,
    pub slat: PathBuf,
}

impl Checkpoints {
    fn resolve(&mut self, base: &Path) {
        resolve(base, &mut self.sparse);
        resolve(base, &mut self.slat);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenDataConfig {
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub count: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "all_families")]
    pub families: Vec<FamilyKind>,
    #[serde(default = "default_dim")]
    pub dim: usize,
    /// Also write a PLY and a raw target grid per asset.
    #[serde(default = "yes")]
    pub export_assets: bool,
}

fn all_families() -> Vec<FamilyKind> {
    FamilyKind::ALL.to_vec()
}

fn yes() -> bool {
    true
}

impl RunConfig for GenDataConfig {
    fn out_mut(&mut self) -> &mut PathBuf {
        &mut self.out
    }
    fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
    }
    fn resolve_paths(&mut self, base: &Path) {
        resolve(base, &mut self.out);
    }
    fn inputs(&self) -> Vec<&Path> {
        Vec::new()
    }
    fn validate(&self) -> Result<(), CliError> {
        if self.families.is_empty() {
            return Err(CliError::config("families must be nonempty"));
        }
        if self.dim < 4 {
            return Err(CliError::config("dim must be at least 4"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainCmdConfig {
    #[serde(default = "default_out")]
    pub out: PathBuf,
    pub manifest: PathBuf,
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default)]
    pub model: PairTrainConfig,
    /// Save checkpoints every this many steps; 0 saves only at the end.
    #[serde(default)]
    pub checkpoint_every: u64,
    /// Continue from checkpoints already present in the output directory.
    #[serde(default)]
    pub resume: bool,
}

impl RunConfig for TrainCmdConfig {
    fn out_mut(&mut self) -> &mut PathBuf {
        &mut self.out
    }
    fn set_seed(&mut self, seed: u64) {
        self.model.train.seed = seed;
    }
    fn resolve_paths(&mut self, base: &Path) {
        resolve(base, &mut self.out);
        resolve(base, &mut self.manifest);
    }
    fn inputs(&self) -> Vec<&Path> {
        vec![&self.manifest]
    }
    fn validate(&self) -> Result<(), CliError> {
        let t = &self.model.train;
        if t.batch == 0 || !(t.lr > 0.0) || self.model.hidden == 0 {
            return Err(CliError::config("batch, lr and hidden must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateConfig {
    #[serde(default = "default_out")]
    pub out: PathBuf,
    pub checkpoints: Checkpoints,
    #[serde(default = "all_families")]
    pub families: Vec<FamilyKind>,
    #[serde(default = "one")]
    pub per_family: usize,
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default)]
    pub sampler: SamplerConfig,
}

fn one() -> usize {
    1
}

impl RunConfig for GenerateConfig {
    fn out_mut(&mut self) -> &mut PathBuf {
        &mut self.out
    }
    fn set_seed(&mut self, seed: u64) {
        self.sampler.seed = seed;
    }
    fn resolve_paths(&mut self, base: &Path) {
        resolve(base, &mut self.out);
        self.checkpoints.resolve(base);
    }
    fn inputs(&self) -> Vec<&Path> {
        vec![&self.checkpoints.sparse, &self.checkpoints.slat]
    }
    fn validate(&self) -> Result<(), CliError> {
        self.sampler.validate().map_err(CliError::config)
    }
}

/// Region kept from the input asset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MaskSpec {
    /// Random axis-aligned half, drawn per asset from the run seed.
    RandomHalf,
    /// Keep voxels with coordinate `< D/2` (side 0) or `>= D/2` (side 1).
    Half { axis: usize, side: usize },
    /// Keep the box `lo <= p < hi`.
    Cuboid { lo: [usize; 3], hi: [usize; 3] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InpaintCmdConfig {
    #[serde(default = "default_out")]
    pub out: PathBuf,
    pub checkpoints: Checkpoints,
    pub manifest: PathBuf,
    /// Manifest indices to inpaint.
    #[serde(default = "first")]
    pub assets: Vec<usize>,
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default = "random_half")]
    pub mask: MaskSpec,
    #[serde(default = "ours")]
    pub method: InpaintMethod,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub seedopt: ConfigSeedOpt,
    #[serde(default)]
    pub baseline: BaselineConfig,
}

fn first() -> Vec<usize> {
    vec![0]
}

fn random_half() -> MaskSpec {
    MaskSpec::RandomHalf
}

fn ours() -> InpaintMethod {
    InpaintMethod::Ours
}

impl RunConfig for InpaintCmdConfig {
    fn out_mut(&mut self) -> &mut PathBuf {
        &mut self.out
    }
    fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
    }
    fn set_method(&mut self, name: &str) -> Result<(), CliError> {
        self.method = InpaintMethod::parse(name).map_err(CliError::config)?;
        Ok(())
    }
    fn resolve_paths(&mut self, base: &Path) {
        resolve(base, &mut self.out);
        resolve(base, &mut self.manifest);
        self.checkpoints.resolve(base);
    }
    fn inputs(&self) -> Vec<&Path> {
        vec![&self.manifest, &self.checkpoints.sparse, &self.checkpoints.slat]
    }
    fn validate(&self) -> Result<(), CliError> {
        self.seedopt.validate().map_err(CliError::config)?;
        self.baseline.validate().map_err(CliError::config)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchCmdConfig {
    #[serde(default = "default_out")]
    pub out: PathBuf,
    pub checkpoints: Checkpoints,
    #[serde(default)]
    pub bench: BenchConfig,
}

impl RunConfig for BenchCmdConfig {
    fn out_mut(&mut self) -> &mut PathBuf {
        &mut self.out
    }
    fn set_seed(&mut self, seed: u64) {
        self.bench.seed = seed;
    }
    fn set_method(&mut self, name: &str) -> Result<(), CliError> {
        self.bench.methods = vec![InpaintMethod::parse(name).map_err(CliError::config)?];
        Ok(())
    }
    fn resolve_paths(&mut self, base: &Path) {
        resolve(base, &mut self.out);
        self.checkpoints.resolve(base);
    }
    fn inputs(&self) -> Vec<&Path> {
        vec![&self.checkpoints.sparse, &self.checkpoints.slat]
    }
    fn validate(&self) -> Result<(), CliError> {
        self.bench.validate().map_err(CliError::config)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblateCmdConfig {
    #[serde(default = "default_out")]
    pub out: PathBuf,
    pub checkpoints: Checkpoints,
    #[serde(default)]
    pub ablate: AblateConfig,
}

impl RunConfig for AblateCmdConfig {
    fn out_mut(&mut self) -> &mut PathBuf {
        &mut self.out
    }
    fn set_seed(&mut self, seed: u64) {
        self.ablate.seed = seed;
    }
    fn set_method(&mut self, name: &str) -> Result<(), CliError> {
        self.ablate.variants = vec![Variant::parse(name).map_err(CliError::config)?];
        Ok(())
    }
    fn resolve_paths(&mut self, base: &Path) {
        resolve(base, &mut self.out);
        self.checkpoints.resolve(base);
    }
    fn inputs(&self) -> Vec<&Path> {
        vec![&self.checkpoints.sparse, &self.checkpoints.slat]
    }
    fn validate(&self) -> Result<(), CliError> {
        if self.ablate.variants.is_empty() {
            return Err(CliError::config("variants must be nonempty"));
        }
        self.ablate.seedopt.validate().map_err(CliError::config)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenderConfig {
    #[serde(default = "default_out")]
    pub out: PathBuf,
    /// Render manifest assets, named by zero-padded index.
    #[serde(default)]
    pub manifest: Option<PathBuf>,
    /// Manifest indices; all when omitted.
    #[serde(default)]
    pub assets: Option<Vec<usize>>,
    /// PLY files written by this tool, named by file stem.
    #[serde(default)]
    pub ply: Vec<PathBuf>,
    #[serde(default = "default_dim")]
    pub dim: usize,
}

impl RunConfig for RenderConfig {
    fn out_mut(&mut self) -> &mut PathBuf {
        &mut self.out
    }
    fn set_seed(&mut self, _seed: u64) {}
    fn resolve_paths(&mut self, base: &Path) {
        resolve(base, &mut self.out);
        if let Some(m) = &mut self.manifest {
            resolve(base, m);
        }
        for p in &mut self.ply {
            resolve(base, p);
        }
    }
    fn inputs(&self) -> Vec<&Path> {
        self.manifest.iter().map(PathBuf::as_path).chain(self.ply.iter().map(PathBuf::as_path)).collect()
    }
    fn validate(&self) -> Result<(), CliError> {
        if self.manifest.is_none() && self.ply.is_empty() {
            return Err(CliError::config("render needs a manifest or PLY inputs"));
        }
        if self.manifest.is_none() && self.assets.is_some() {
            return Err(CliError::config("assets selects manifest entries; no manifest given"));
        }
        Ok(())
    }
}
