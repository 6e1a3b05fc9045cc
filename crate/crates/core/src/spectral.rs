//! Short-time Fourier analysis/synthesis, feature stacking and power-law
//! spectral compression.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::nn::Tensor4;

/// Sample rate of every pipeline entry point.
pub const SAMPLE_RATE: u32 = 16_000;

/// Guard used when extracting the phase of a (near) zero bin.
pub const PHASE_EPS: f64 = 1e-12;

/// Mono audio at a fixed sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite("waveform"));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    fn check_entry(&self) -> Result<()> {
        if self.sample_rate != SAMPLE_RATE {
            return Err(Error::SampleRate {
                expected: SAMPLE_RATE,
                found: self.sample_rate,
            });
        }
        if self.samples.is_empty() {
            return Err(Error::EmptyWaveform);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowKind {
    Hann,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StftParams {
    pub window_len: usize,
    pub hop: usize,
    pub fft_size: usize,
    pub window: WindowKind,
}

impl Default for StftParams {
    /// 32 ms Hann window, 16 ms hop, 512-point FFT at 16 kHz.
    fn default() -> Self {
        Self {
            window_len: 512,
            hop: 256,
            fft_size: 512,
            window: WindowKind::Hann,
        }
    }
}

impl StftParams {
    pub fn validate(&self) -> Result<()> {
        if self.hop == 0 || self.hop > self.window_len || self.window_len > self.fft_size {
            return Err(Error::InvalidParam(format!(
                "stft requires 0 < hop <= window_len <= fft_size, got hop={} window_len={} fft_size={}",
                self.hop, self.window_len, self.fft_size
            )));
        }
        if self.window_len < 2 {
            return Err(Error::InvalidParam("window_len must be at least 2".into()));
        }
        Ok(())
    }

    pub fn bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    /// Number of frames produced for a waveform of `len` samples.
    pub fn frame_count(&self, len: usize) -> usize {
        len / self.hop + 1
    }

    pub fn frames_per_second(&self) -> f64 {
        SAMPLE_RATE as f64 / self.hop as f64
    }

    /// Periodic window of `window_len` samples.
    pub fn window(&self) -> Vec<f64> {
        match self.window {
            WindowKind::Hann => hann(self.window_len),
        }
    }
}

/// Periodic Hann window; sums to a constant at 50% overlap.
pub fn hann(len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / len as f64).cos())
        .collect()
}

/// Complex time-frequency representation, `frames x bins`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram {
    frames: usize,
    bins: usize,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl ComplexSpectrogram {
    pub fn zeros(frames: usize, bins: usize) -> Self {
        Self {
            frames,
            bins,
            re: vec![0.0; frames * bins],
            im: vec![0.0; frames * bins],
        }
    }

    pub fn from_parts(frames: usize, bins: usize, re: Vec<f64>, im: Vec<f64>) -> Result<Self> {
        if re.len() != frames * bins || im.len() != frames * bins {
            return Err(shape_err(
                "spectrogram parts",
                frames * bins,
                (re.len(), im.len()),
            ));
        }
        Ok(Self {
            frames,
            bins,
            re,
            im,
        })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.frames, self.bins)
    }

    #[inline]
    pub fn idx(&self, t: usize, f: usize) -> usize {
        t * self.bins + f
    }

    #[inline]
    pub fn get(&self, t: usize, f: usize) -> Complex64 {
        let i = self.idx(t, f);
        Complex64::new(self.re[i], self.im[i])
    }

    #[inline]
    pub fn set(&mut self, t: usize, f: usize, v: Complex64) {
        let i = self.idx(t, f);
        self.re[i] = v.re;
        self.im[i] = v.im;
    }

    pub fn magnitude(&self) -> Vec<f64> {
        self.re
            .iter()
            .zip(&self.im)
            .map(|(r, i)| r.hypot(*i))
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.re.iter().chain(&self.im).all(|v| v.is_finite())
    }

    pub fn check_same_shape(&self, other: &Self, context: &'static str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(shape_err(context, self.shape(), other.shape()));
        }
        Ok(())
    }

    /// Elementwise sum.
    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other, "spectrogram add")?;
        let re = self.re.iter().zip(&other.re).map(|(a, b)| a + b).collect();
        let im = self.im.iter().zip(&other.im).map(|(a, b)| a + b).collect();
        Ok(Self {
            frames: self.frames,
            bins: self.bins,
            re,
            im,
        })
    }

    pub fn scale(&self, k: f64) -> Self {
        Self {
            frames: self.frames,
            bins: self.bins,
            re: self.re.iter().map(|v| v * k).collect(),
            im: self.im.iter().map(|v| v * k).collect(),
        }
    }
}

/// Index into a reflect-padded signal (edge sample not repeated).
fn reflect_index(i: isize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len as isize - 1);
    let m = i.rem_euclid(period);
    if m < len as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}

/// Forward STFT with centered frames: the signal is reflect-padded by
/// `window_len / 2` on both ends so that frame `t` is centered on sample
/// `t * hop`.
pub fn stft(w: &Waveform, p: &StftParams) -> Result<ComplexSpectrogram> {
    p.validate()?;
    w.check_entry()?;
    let pad = (p.window_len / 2) as isize;
    let frames = p.frame_count(w.len());
    let bins = p.bins();
    let window = p.window();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(p.fft_size);
    let mut buf = vec![Complex64::new(0.0, 0.0); p.fft_size];
    let mut out = ComplexSpectrogram::zeros(frames, bins);
    for t in 0..frames {
        buf.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
        let start = (t * p.hop) as isize - pad;
        for (n, wn) in window.iter().enumerate() {
            let s = w.samples[reflect_index(start + n as isize, w.len())];
            buf[n] = Complex64::new(s * wn, 0.0);
        }
        fft.process(&mut buf);
        for (f, v) in buf[..bins].iter().enumerate() {
            out.set(t, f, *v);
        }
    }
    Ok(out)
}

/// Inverse real FFT of one half-spectrum frame (`fft_size / 2 + 1` bins).
/// The imaginary parts of the DC and Nyquist bins are ignored.
pub fn irfft_frame(re: &[f64], im: &[f64], fft_size: usize) -> Vec<f64> {
    let bins = fft_size / 2 + 1;
    assert_eq!(re.len(), bins);
    assert_eq!(im.len(), bins);
    let ifft = FftPlanner::<f64>::new().plan_fft_inverse(fft_size);
    let mut buf = vec![Complex64::new(0.0, 0.0); fft_size];
    hermitian_fill(re, im, &mut buf);
    ifft.process(&mut buf);
    let scale = 1.0 / fft_size as f64;
    buf.iter().map(|c| c.re * scale).collect()
}

fn hermitian_fill(re: &[f64], im: &[f64], buf: &mut [Complex64]) {
    let n = buf.len();
    let bins = re.len();
    buf[0] = Complex64::new(re[0], 0.0);
    for f in 1..bins {
        let v = Complex64::new(re[f], im[f]);
        if 2 * f == n {
            buf[f] = Complex64::new(v.re, 0.0);
        } else {
            buf[f] = v;
            buf[n - f] = v.conj();
        }
    }
}

/// Inverse STFT by weighted overlap-add, normalized by the summed squared
/// synthesis window. Returns `(frames - 1) * hop` samples, i.e. the original
/// signal length whenever it was a multiple of the hop.
pub fn istft(s: &ComplexSpectrogram, p: &StftParams) -> Result<Waveform> {
    let len = s.frames().saturating_sub(1) * p.hop;
    istft_to_len(s, p, len)
}

/// Like [`istft`] but returns exactly `len` samples (zero beyond the
/// reconstructable range).
pub fn istft_to_len(s: &ComplexSpectrogram, p: &StftParams, len: usize) -> Result<Waveform> {
    p.validate()?;
    if s.bins() != p.bins() {
        return Err(shape_err("istft bins", p.bins(), s.bins()));
    }
    let pad = p.window_len / 2;
    let window = p.window();
    let total = s.frames().saturating_sub(1) * p.hop + p.window_len;
    let mut acc = vec![0.0; total];
    let mut norm = vec![0.0; total];
    let ifft = FftPlanner::<f64>::new().plan_fft_inverse(p.fft_size);
    let mut buf = vec![Complex64::new(0.0, 0.0); p.fft_size];
    let scale = 1.0 / p.fft_size as f64;
    let bins = s.bins();
    for t in 0..s.frames() {
        let row = t * bins..(t + 1) * bins;
        hermitian_fill(&s.re[row.clone()], &s.im[row], &mut buf);
        ifft.process(&mut buf);
        let start = t * p.hop;
        for (n, wn) in window.iter().enumerate() {
            acc[start + n] += buf[n].re * scale * wn;
            norm[start + n] += wn * wn;
        }
    }
    let samples = (0..len)
        .map(|i| {
            let j = i + pad;
            if j < total && norm[j] > 1e-10 {
                acc[j] / norm[j]
            } else {
                0.0
            }
        })
        .collect();
    Ok(Waveform {
        samples,
        sample_rate: SAMPLE_RATE,
    })
}

/// Real-valued network input features, shape `(1, C, T, F)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStack {
    pub tensor: Tensor4,
}

impl FeatureStack {
    pub fn channels(&self) -> usize {
        self.tensor.dims()[1]
    }
}

/// Stage-one input `(|X|, X_r, X_i)`, or stage-two input
/// `(|X|, X_i, X_r, |S1|, S1_i, S1_r)` when `s1` is given.
pub fn build_feature_stack(
    x: &ComplexSpectrogram,
    s1: Option<&ComplexSpectrogram>,
) -> Result<FeatureStack> {
    let (frames, bins) = x.shape();
    let plane = frames * bins;
    let mut data = Vec::with_capacity(plane * if s1.is_some() { 6 } else { 3 });
    match s1 {
        None => {
            data.extend(x.magnitude());
            data.extend_from_slice(&x.re);
            data.extend_from_slice(&x.im);
        }
        Some(s1) => {
            x.check_same_shape(s1, "feature stack")?;
            data.extend(x.magnitude());
            data.extend_from_slice(&x.im);
            data.extend_from_slice(&x.re);
            data.extend(s1.magnitude());
            data.extend_from_slice(&s1.im);
            data.extend_from_slice(&s1.re);
        }
    }
    let channels = data.len() / plane.max(1);
    let tensor = Tensor4::from_vec([1, channels, frames, bins], data)?;
    Ok(FeatureStack { tensor })
}

/// Power-law compression of the magnitude with the phase kept:
/// `|S|^c * S / max(|S|, eps)`.
pub fn compress(s: &ComplexSpectrogram, c: f64) -> Result<ComplexSpectrogram> {
    if !(c > 0.0 && c <= 1.0) {
        return Err(Error::InvalidParam(format!(
            "compression exponent must be in (0, 1], got {c}"
        )));
    }
    if !s.is_finite() {
        return Err(Error::NonFinite("spectrogram"));
    }
    let mut out = s.clone();
    for i in 0..s.re.len() {
        let mag = s.re[i].hypot(s.im[i]);
        let gain = mag.powf(c) / mag.max(PHASE_EPS);
        out.re[i] = s.re[i] * gain;
        out.im[i] = s.im[i] * gain;
    }
    Ok(out)
}
