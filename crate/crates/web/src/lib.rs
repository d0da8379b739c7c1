//! Browser demo bindings. Build with
//! `wasm-pack build crates/web --target web --out-dir www/pkg` and serve
//! `crates/web/www/`.

pub mod ops;

use wasm_bindgen::prelude::*;

fn js(e: slatpaint::Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
pub fn grid_dim() -> usize {
    ops::DIM
}

/// RGBA pixels of a masked render; see [`ops::render_masked`].
#[wasm_bindgen(js_name = renderMasked)]
pub fn render_masked(family: &str, seed: u32, mask_axis: usize, mask_side: usize, view: &str, kind: &str) -> Result<Vec<u8>, JsError> {
    ops::render_masked(family, seed as u64, mask_axis, mask_side, view, kind).map_err(js)
}

#[wasm_bindgen]
pub struct Slice {
    rgba: Vec<u8>,
    peak: f64,
}

#[wasm_bindgen]
impl Slice {
    #[wasm_bindgen(getter)]
    pub fn rgba(&self) -> Vec<u8> {
        self.rgba.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn peak(&self) -> f64 {
        self.peak
    }
}

#[wasm_bindgen(js_name = lowPassSlice)]
pub fn low_pass_slice(seed: u32, cutoff: usize, z: usize) -> Result<Slice, JsError> {
    let (rgba, peak) = ops::low_pass_slice(seed as u64, cutoff, z).map_err(js)?;
    Ok(Slice { rgba, peak })
}

#[wasm_bindgen]
pub struct PullResult(ops::Pull);

#[wasm_bindgen]
impl PullResult {
    #[wasm_bindgen(getter)]
    pub fn curve(&self) -> Vec<f64> {
        self.0.curve.clone()
    }

    /// `[mu, sigma, gamma, kappa]` before optimization.
    #[wasm_bindgen(getter)]
    pub fn start(&self) -> Vec<f64> {
        let s = &self.0.start;
        vec![s.mu, s.sigma, s.gamma, s.kappa]
    }

    /// `[mu, sigma, gamma, kappa]` after the last step.
    #[wasm_bindgen(getter)]
    pub fn end(&self) -> Vec<f64> {
        let s = &self.0.end;
        vec![s.mu, s.sigma, s.gamma, s.kappa]
    }
}

#[wasm_bindgen(js_name = momentPull)]
pub fn moment_pull(seed: u32, scale: f64, shift: f64, lr: f64, steps: usize) -> Result<PullResult, JsError> {
    ops::moment_pull(seed as u64, scale, shift, lr, steps).map(PullResult).map_err(js)
}
