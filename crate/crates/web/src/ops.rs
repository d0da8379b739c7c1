//! Demo operations in plain Rust, shared by the wasm bindings and the native
//! tests.

use slatpaint::baselines::low_pass;
use slatpaint::flownet::{adam_step, AdamState};
use slatpaint::metrics::{render_ortho, Axis, RenderKind};
use slatpaint::rng::derive_seed;
use slatpaint::seedopt::{moment_loss, MomentScope, DEFAULT_LAMBDAS};
use slatpaint::shapes::{generate_asset_dim, half_mask, FamilyKind, ShapeFamily, DEFAULT_DIM, SPARSE_CHANNELS};
use slatpaint::stats::{moments, MomentStats};
use slatpaint::{gaussian_grid, Error, Result, Rng};

pub const DIM: usize = DEFAULT_DIM;

/// Tint applied to surfaces that lie in the region to be inpainted.
const INPAINT_TINT: [f64; 3] = [1.0, 0.35, 0.2];

fn parse_axis(name: &str) -> Result<Axis> {
    Axis::ALL
        .into_iter()
        .find(|a| a.name() == name)
        .ok_or_else(|| Error::Parameter(format!("unknown axis '{name}'")))
}

fn parse_kind(name: &str) -> Result<RenderKind> {
    RenderKind::ALL
        .into_iter()
        .find(|k| k.name() == name)
        .ok_or_else(|| Error::Parameter(format!("unknown render kind '{name}'")))
}

/// RGBA render of a procedural asset seen along `view`, with surfaces in the
/// masked-out half tinted. Row-major, `DIM x DIM`, rows flipped so that the
/// image's up direction is the positive row axis.
pub fn render_masked(family: &str, seed: u64, mask_axis: usize, mask_side: usize, view: &str, kind: &str) -> Result<Vec<u8>> {
    let fam = FamilyKind::parse(family)?;
    if mask_axis > 2 || mask_side > 1 {
        return Err(Error::Parameter("mask axis must be 0..3 and side 0..2".into()));
    }
    let (view, kind) = (parse_axis(view)?, parse_kind(kind)?);
    let mut rng = Rng::new(seed);
    let shape = ShapeFamily::sample(fam, &mut rng, DIM);
    let asset = generate_asset_dim(&mut rng, &shape, DIM)?;
    let mask = half_mask(DIM, mask_axis, mask_side);
    let keep = asset.restricted(mask.preserved());
    let fill = asset.restricted(&mask.inpaint());
    let img = render_ortho(&asset, view, kind);
    let dk = render_ortho(&keep, view, RenderKind::Depth);
    let df = render_ortho(&fill, view, RenderKind::Depth);
    let mut out = vec![0u8; DIM * DIM * 4];
    for row in 0..DIM {
        for col in 0..DIM {
            let o = ((DIM - 1 - row) * DIM + col) * 4;
            if dk.get(row, col, 0) == 0.0 && df.get(row, col, 0) == 0.0 {
                out[o..o + 4].copy_from_slice(&[24, 24, 28, 255]);
                continue;
            }
            let tinted = df.get(row, col, 0) > dk.get(row, col, 0);
            for c in 0..3 {
                let v = img.get(row, col, if img.channels == 3 { c } else { 0 });
                let v = if tinted { 0.45 * v + 0.55 * INPAINT_TINT[c] } else { v };
                out[o + c] = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
            }
            out[o + 3] = 255;
        }
    }
    Ok(out)
}

/// One `z` slice of channel 0 of a Gaussian seed grid after keeping only
/// frequencies with Chebyshev radius `<= cutoff`, as RGBA on a diverging
/// map scaled by the slice's largest magnitude. Also returns that magnitude.
pub fn low_pass_slice(seed: u64, cutoff: usize, z: usize) -> Result<(Vec<u8>, f64)> {
    if z >= DIM {
        return Err(Error::Parameter(format!("slice {z} outside 0..{DIM}")));
    }
    let grid = gaussian_grid(&mut Rng::new(seed), DIM, SPARSE_CHANNELS);
    let lp = low_pass(&grid, cutoff)?;
    let vals: Vec<f64> = (0..DIM * DIM).map(|i| lp.get([i / DIM, i % DIM, z], 0)).collect();
    let peak = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut out = vec![0u8; DIM * DIM * 4];
    for (i, v) in vals.iter().enumerate() {
        let s = if peak > 0.0 { v / peak } else { 0.0 };
        let (r, g, b) = if s >= 0.0 { (1.0, 1.0 - s, 1.0 - s) } else { (1.0 + s, 1.0 + s, 1.0) };
        out[i * 4..i * 4 + 4].copy_from_slice(&[(r * 255.0) as u8, (g * 255.0) as u8, (b * 255.0) as u8, 255]);
    }
    Ok((out, peak))
}

/// Adam on the moment penalty alone, starting from `shift + scale * N(0, 1)`
/// over a full seed grid.
#[derive(Debug, Clone)]
pub struct Pull {
    /// Penalty before the first update and after each update.
    pub curve: Vec<f64>,
    pub start: MomentStats,
    pub end: MomentStats,
}

pub fn moment_pull(seed: u64, scale: f64, shift: f64, lr: f64, steps: usize) -> Result<Pull> {
    if !(scale > 0.0) || !(lr > 0.0) {
        return Err(Error::Parameter("scale and lr must be positive".into()));
    }
    let mut rng = Rng::new(derive_seed(seed, 0x6d6f));
    let mut x: Vec<f64> = rng.normal_vec(DIM * DIM * DIM * SPARSE_CHANNELS).iter().map(|v| shift + scale * v).collect();
    let start = moments(&x)?;
    let mut adam = AdamState::new(x.len());
    let mut curve = Vec::with_capacity(steps + 1);
    for _ in 0..steps {
        let (loss, grad) = moment_loss(&x, SPARSE_CHANNELS, &DEFAULT_LAMBDAS, MomentScope::Global)?;
        curve.push(loss);
        adam_step(&mut x, &grad, &mut adam, lr)?;
    }
    curve.push(moment_loss(&x, SPARSE_CHANNELS, &DEFAULT_LAMBDAS, MomentScope::Global)?.0);
    Ok(Pull { curve, start, end: moments(&x)? })
}
