//! Power-law compressed spectral losses and SI-SDR.

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::spectral::{compress, ComplexSpectrogram, Waveform};

/// SI-SDR values are clamped to `[-SI_SDR_CAP, SI_SDR_CAP]` dB.
pub const SI_SDR_CAP: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    /// Compression exponent.
    pub c: f64,
    /// Weight of the magnitude term.
    pub alpha: f64,
    /// Weight of the complex term.
    pub beta: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            c: 0.3,
            alpha: 0.5,
            beta: 0.5,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c <= 1.0) {
            return Err(Error::InvalidParam(format!("loss exponent {} not in (0, 1]", self.c)));
        }
        if self.alpha < 0.0 || self.beta < 0.0 || self.alpha + self.beta <= 0.0 {
            return Err(Error::InvalidParam(format!(
                "loss weights must be nonnegative with positive sum, got {} and {}",
                self.alpha, self.beta
            )));
        }
        Ok(())
    }
}

/// Sums of squared errors, kept separate so batches can be pooled before
/// dividing by the bin count.
#[derive(Debug, Clone, Copy, Default)]
struct Sums {
    mag: f64,
    re: f64,
    im: f64,
    bins: usize,
}

fn sums(s: &ComplexSpectrogram, est: &ComplexSpectrogram, c: f64) -> Result<Sums> {
    s.check_same_shape(est, "loss operands")?;
    let cs = compress(s, c)?;
    let ce = compress(est, c)?;
    let mut out = Sums {
        bins: s.re.len(),
        ..Sums::default()
    };
    for k in 0..s.re.len() {
        let dm = cs.re[k].hypot(cs.im[k]) - ce.re[k].hypot(ce.im[k]);
        out.mag += dm * dm;
        out.re += (cs.re[k] - ce.re[k]).powi(2);
        out.im += (cs.im[k] - ce.im[k]).powi(2);
    }
    Ok(out)
}

/// `MSE(|S|^c, |S~|^c)` over all bins.
pub fn mag_loss(s: &ComplexSpectrogram, est: &ComplexSpectrogram, c: f64) -> Result<f64> {
    let k = sums(s, est, c)?;
    Ok(k.mag / k.bins as f64)
}

/// `MSE(S_r^c, S~_r^c) + MSE(S_i^c, S~_i^c)` on magnitude-compressed,
/// phase-preserving spectra.
pub fn comp_loss(s: &ComplexSpectrogram, est: &ComplexSpectrogram, c: f64) -> Result<f64> {
    let k = sums(s, est, c)?;
    Ok((k.re + k.im) / k.bins as f64)
}

/// `alpha * mag_loss + beta * comp_loss`.
pub fn total_loss(s: &ComplexSpectrogram, est: &ComplexSpectrogram, cfg: &LossConfig) -> Result<f64> {
    total_loss_batch(&[(s, est)], cfg)
}

/// Loss over a batch, averaging over every bin of every item.
pub fn total_loss_batch(
    pairs: &[(&ComplexSpectrogram, &ComplexSpectrogram)],
    cfg: &LossConfig,
) -> Result<f64> {
    cfg.validate()?;
    let mut acc = Sums::default();
    for (s, est) in pairs {
        let k = sums(s, est, cfg.c)?;
        acc.mag += k.mag;
        acc.re += k.re;
        acc.im += k.im;
        acc.bins += k.bins;
    }
    if acc.bins == 0 {
        return Err(Error::InvalidParam("loss over an empty batch".into()));
    }
    let n = acc.bins as f64;
    Ok(cfg.alpha * acc.mag / n + cfg.beta * (acc.re + acc.im) / n)
}

/// Scale-invariant SDR in dB after removing the mean of both signals,
/// clamped to +-100 dB.
pub fn si_sdr(reference: &Waveform, estimate: &Waveform) -> Result<f64> {
    if reference.len() != estimate.len() {
        return Err(shape_err("si-sdr lengths", reference.len(), estimate.len()));
    }
    if reference.is_empty() {
        return Err(Error::EmptyWaveform);
    }
    let n = reference.len() as f64;
    let mr = reference.samples.iter().sum::<f64>() / n;
    let me = estimate.samples.iter().sum::<f64>() / n;
    let r: Vec<f64> = reference.samples.iter().map(|v| v - mr).collect();
    let e: Vec<f64> = estimate.samples.iter().map(|v| v - me).collect();
    let rr: f64 = r.iter().map(|v| v * v).sum();
    if rr == 0.0 {
        return Err(Error::InvalidParam("si-sdr reference has no energy".into()));
    }
    let scale = r.iter().zip(&e).map(|(a, b)| a * b).sum::<f64>() / rr;
    let target: f64 = rr * scale * scale;
    let noise: f64 = r.iter().zip(&e).map(|(a, b)| (b - scale * a).powi(2)).sum();
    let db = if noise == 0.0 {
        SI_SDR_CAP
    } else if target == 0.0 {
        -SI_SDR_CAP
    } else {
        10.0 * (target / noise).log10()
    };
    Ok(db.clamp(-SI_SDR_CAP, SI_SDR_CAP))
}
