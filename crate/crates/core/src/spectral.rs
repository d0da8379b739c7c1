//! Orthonormal 3D real-input Fourier transform.
//!
//! Coefficients are kept in the reduced (half-spectrum) layout: the last axis
//! stores `D/2 + 1` bins, the remaining bins being implied by Hermitian
//! symmetry. Both directions carry a `D^{-3/2}` factor, so the inverse is the
//! adjoint of the forward transform under the weighted inner product
//!
//! ```text
//! <a, b>_w = sum_k w(k) Re(conj(a_k) b_k),  w(k) = 1 if kz in {0, D/2} else 2
//! ```
//!
//! which counts each interior bin once for itself and once for its implied
//! mirror.

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::FeatureGrid;

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralCoeffs {
    dim: usize,
    channels: usize,
    /// Channel-major: `((c * D + kx) * D + ky) * (D/2 + 1) + kz`.
    coeffs: Vec<Complex64>,
}

impl SpectralCoeffs {
    pub fn zeros(dim: usize, channels: usize) -> Self {
        let h = dim / 2 + 1;
        Self {
            dim,
            channels,
            coeffs: vec![Complex64::new(0.0, 0.0); channels * dim * dim * h],
        }
    }

    pub fn from_vec(dim: usize, channels: usize, coeffs: Vec<Complex64>) -> Result<Self> {
        check_pow2(dim)?;
        let want = channels * dim * dim * (dim / 2 + 1);
        if coeffs.len() != want {
            return Err(Error::Dimension(format!(
                "spectrum for {dim}^3 x {channels} needs {want} bins, got {}",
                coeffs.len()
            )));
        }
        Ok(Self {
            dim,
            channels,
            coeffs,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Stored bins along the last axis.
    pub fn half(&self) -> usize {
        self.dim / 2 + 1
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    #[inline]
    pub fn index(&self, c: usize, kx: usize, ky: usize, kz: usize) -> usize {
        ((c * self.dim + kx) * self.dim + ky) * self.half() + kz
    }

    /// `(c, kx, ky, kz)` for a flat index.
    pub fn bin(&self, i: usize) -> (usize, usize, usize, usize) {
        let h = self.half();
        let kz = i % h;
        let ky = (i / h) % self.dim;
        let kx = (i / (h * self.dim)) % self.dim;
        let c = i / (h * self.dim * self.dim);
        (c, kx, ky, kz)
    }

    /// Inner-product weight of a stored bin: 1 on the `kz = 0` and `kz = D/2`
    /// planes (their mirrors are stored too), 2 elsewhere.
    #[inline]
    pub fn weight_kz(&self, kz: usize) -> f64 {
        if kz == 0 || kz == self.dim / 2 {
            1.0
        } else {
            2.0
        }
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weight_kz(i % self.half())
    }

    /// Whether the bin equals its own Hermitian mirror.
    pub fn is_self_conjugate(&self, kx: usize, ky: usize, kz: usize) -> bool {
        let h = self.dim / 2;
        [kx, ky, kz].iter().all(|&k| k == 0 || k == h)
    }

    /// Weighted real inner product (see module docs).
    pub fn inner(&self, other: &SpectralCoeffs) -> f64 {
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .enumerate()
            .map(|(i, (a, b))| self.weight(i) * (a.conj() * b).re)
            .sum()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.inner(self)
    }
}

/// Signed frequency for an index along a full axis.
#[inline]
pub fn signed_freq(k: usize, dim: usize) -> i64 {
    if k <= dim / 2 {
        k as i64
    } else {
        k as i64 - dim as i64
    }
}

fn check_pow2(dim: usize) -> Result<()> {
    if dim == 0 || !dim.is_power_of_two() {
        return Err(Error::Dimension(format!(
            "transform size {dim} is not a power of two"
        )));
    }
    Ok(())
}

struct Plans {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

fn plans(dim: usize) -> Plans {
    let mut planner = FftPlanner::new();
    Plans {
        forward: planner.plan_fft_forward(dim),
        inverse: planner.plan_fft_inverse(dim),
    }
}

/// In-place unnormalized 3D transform of a `D^3` complex cube in (x, y, z) order.
fn fft3_inplace(buf: &mut [Complex64], dim: usize, fft: &dyn Fft<f64>) {
    let d = dim;
    // z: contiguous rows
    fft.process(buf);
    let mut line = vec![Complex64::new(0.0, 0.0); d];
    // y
    for x in 0..d {
        for z in 0..d {
            for y in 0..d {
                line[y] = buf[(x * d + y) * d + z];
            }
            fft.process(&mut line);
            for y in 0..d {
                buf[(x * d + y) * d + z] = line[y];
            }
        }
    }
    // x
    for y in 0..d {
        for z in 0..d {
            for x in 0..d {
                line[x] = buf[(x * d + y) * d + z];
            }
            fft.process(&mut line);
            for x in 0..d {
                buf[(x * d + y) * d + z] = line[x];
            }
        }
    }
}

/// Forward orthonormal transform, applied independently per channel.
pub fn rfft3(grid: &FeatureGrid) -> Result<SpectralCoeffs> {
    let d = grid.dim();
    check_pow2(d)?;
    let ch = grid.channels();
    let plan = plans(d);
    let scale = (d as f64).powf(-1.5);
    let mut out = SpectralCoeffs::zeros(d, ch);
    let h = out.half();
    let mut buf = vec![Complex64::new(0.0, 0.0); d * d * d];
    for c in 0..ch {
        for (v, b) in buf.iter_mut().enumerate() {
            *b = Complex64::new(grid.data()[v * ch + c], 0.0);
        }
        fft3_inplace(&mut buf, d, plan.forward.as_ref());
        for kx in 0..d {
            for ky in 0..d {
                for kz in 0..h {
                    let mut v = buf[(kx * d + ky) * d + kz] * scale;
                    if out.is_self_conjugate(kx, ky, kz) {
                        v.im = 0.0;
                    }
                    let i = out.index(c, kx, ky, kz);
                    out.coeffs[i] = v;
                }
            }
        }
    }
    Ok(out)
}

/// Inverse orthonormal transform. The implied half of the spectrum is the
/// Hermitian mirror of the stored half; the real part of the result is
/// returned, which makes the map well defined (and adjoint to [`rfft3`])
/// for any stored coefficients.
pub fn irfft3(coeffs: &SpectralCoeffs) -> Result<FeatureGrid> {
    let d = coeffs.dim();
    check_pow2(d)?;
    let ch = coeffs.channels();
    let h = coeffs.half();
    if coeffs.coeffs().len() != ch * d * d * h {
        return Err(Error::Dimension("inconsistent spectrum length".into()));
    }
    let plan = plans(d);
    let scale = (d as f64).powf(-1.5);
    let mut data = vec![0.0; d * d * d * ch];
    let mut buf = vec![Complex64::new(0.0, 0.0); d * d * d];
    for c in 0..ch {
        for kx in 0..d {
            for ky in 0..d {
                for kz in 0..d {
                    buf[(kx * d + ky) * d + kz] = if kz < h {
                        coeffs.coeffs[coeffs.index(c, kx, ky, kz)]
                    } else {
                        let mx = (d - kx) % d;
                        let my = (d - ky) % d;
                        coeffs.coeffs[coeffs.index(c, mx, my, d - kz)].conj()
                    };
                }
            }
        }
        fft3_inplace(&mut buf, d, plan.inverse.as_ref());
        for (v, b) in buf.iter().enumerate() {
            data[v * ch + c] = b.re * scale;
        }
    }
    FeatureGrid::from_vec(d, ch, data)
}
