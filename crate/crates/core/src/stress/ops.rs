use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::mask::ChannelMask;
use crate::data::WindowBatch;
use crate::error::{Error, Result};
use crate::hashing::derive_seed;

const NOISE_STREAM: u64 = 0x006E_6F69_7365;

/// Multiplier of the linear drift at time index `t`: `1 + k t`.
pub fn linear_multiplier(k: f64, t: f64) -> f64 {
    1.0 + k * t
}

/// Multiplier of the logarithmic drift at time index `t`: `1 + k0 ln(k1 t)`.
pub fn log_multiplier(k0: f64, k1: f64, t: f64) -> f64 {
    1.0 + k0 * (k1 * t).ln()
}

fn map_windows<F>(batch: &WindowBatch, f: F) -> Result<WindowBatch>
where
    F: Fn(usize, &mut [f64]) + Sync,
{
    let mut data = batch.data().to_vec();
    let n = batch.window_size().max(1);
    data.par_chunks_mut(n).enumerate().for_each(|(b, w)| f(b, w));
    batch.with_data(data)
}

/// Add zero-mean Gaussian noise with per-feature standard deviation
/// `(percent / 100) * ref_std[f]`, independently per feature and time step.
pub fn apply_noise(batch: &WindowBatch, percent: f64, ref_std: &[f64], seed: u64) -> Result<WindowBatch> {
    let d = batch.n_features();
    if ref_std.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: ref_std.len(),
        });
    }
    if percent < 0.0 || !percent.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "noise percent must be >= 0, got {percent}"
        )));
    }
    if percent == 0.0 {
        return Ok(batch.clone());
    }
    let scale: Vec<f64> = ref_std.iter().map(|s| percent / 100.0 * s).collect();
    map_windows(batch, |b, w| {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, NOISE_STREAM, b as u64));
        for row in w.chunks_mut(d) {
            for (f, x) in row.iter_mut().enumerate() {
                let z: f64 = StandardNormal.sample(&mut rng);
                if scale[f] != 0.0 {
                    *x += scale[f] * z;
                }
            }
        }
    })
}

fn time_index(batch: &WindowBatch, b: usize, t: usize, global_t: bool) -> f64 {
    if global_t {
        (batch.start_rows()[b] + t) as f64
    } else {
        t as f64
    }
}

/// Multiply the value at window step `t` (0-based) by `1 + k t`.
pub fn apply_linear_drift(batch: &WindowBatch, k: f64, global_t: bool) -> Result<WindowBatch> {
    if k == 0.0 {
        return Ok(batch.clone());
    }
    let d = batch.n_features();
    map_windows(batch, |b, w| {
        for (t, row) in w.chunks_mut(d).enumerate() {
            let m = linear_multiplier(k, time_index(batch, b, t, global_t));
            row.iter_mut().for_each(|x| *x *= m);
        }
    })
}

/// Multiply the value at window step `t` (1-based) by `1 + k0 ln(k1 t)`.
pub fn apply_log_drift(batch: &WindowBatch, k0: f64, k1: f64, global_t: bool) -> Result<WindowBatch> {
    if k1 <= 0.0 || !k1.is_finite() {
        return Err(Error::InvalidArgument(format!("log drift requires k1 > 0, got {k1}")));
    }
    if k0 == 0.0 {
        return Ok(batch.clone());
    }
    let d = batch.n_features();
    map_windows(batch, |b, w| {
        for (t, row) in w.chunks_mut(d).enumerate() {
            let m = log_multiplier(k0, k1, time_index(batch, b, t, global_t) + 1.0);
            row.iter_mut().for_each(|x| *x *= m);
        }
    })
}

/// Set the masked channels to exactly zero at every step.
pub fn apply_zero_channels(batch: &WindowBatch, mask: &ChannelMask) -> Result<WindowBatch> {
    let d = batch.n_features();
    if mask.d_total() != d {
        return Err(Error::InvalidArgument(format!(
            "mask covers {} channels but batch has {d}",
            mask.d_total()
        )));
    }
    if mask.is_empty() {
        return Ok(batch.clone());
    }
    let zeroed: Vec<usize> = mask.zeroed().iter().copied().collect();
    map_windows(batch, |_, w| {
        for row in w.chunks_mut(d) {
            for &c in &zeroed {
                row[c] = 0.0;
            }
        }
    })
}

/// Zero a seeded random `fraction` of channels, then multiply every other
/// channel by `scale`.
pub fn apply_failure_and_scale(batch: &WindowBatch, fraction: f64, scale: f64, seed: u64) -> Result<WindowBatch> {
    if scale <= 0.0 || !scale.is_finite() {
        return Err(Error::InvalidArgument(format!("scale must be > 0, got {scale}")));
    }
    let d = batch.n_features();
    let mask = ChannelMask::random(seed, fraction, d)?;
    if mask.is_empty() && scale == 1.0 {
        return Ok(batch.clone());
    }
    let keep: Vec<bool> = (0..d).map(|c| !mask.contains(c)).collect();
    map_windows(batch, |_, w| {
        for row in w.chunks_mut(d) {
            for (c, x) in row.iter_mut().enumerate() {
                *x = if keep[c] { *x * scale } else { 0.0 };
            }
        }
    })
}
