//! Complex deep filtering of spectrograms and sub-band fusion.
//!
//! A filter predicts, for every output bin `(t, f)`, a small set of complex
//! taps applied to the neighbourhood `X(t - i, f - j)` with
//! `0 <= i < temporal_taps` and `-J <= j <= J`. Taps reading outside the
//! spectrogram contribute zero.
//!
//! Tap layout inside [`FilterCoeffs`] is `[t][f][n]` with
//! `n = i * (2J + 1) + (j + J)`: temporal lag major (lag 0 is the current
//! frame), frequency offset minor.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::nn::Tensor4;
use crate::spectral::ComplexSpectrogram;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterMode {
    /// Complex ratio mask, one tap.
    Crm,
    /// Temporal deep filter over the current and past frames.
    Tdf,
    /// Frequency deep filter over neighbouring bins of the current frame.
    Fdf,
    /// General time-frequency deep filter.
    Df,
}

impl FilterMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            FilterMode::Crm => "crm",
            FilterMode::Tdf => "tdf",
            FilterMode::Fdf => "fdf",
            FilterMode::Df => "df",
        }
    }
}

impl std::str::FromStr for FilterMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "crm" => Ok(FilterMode::Crm),
            "tdf" => Ok(FilterMode::Tdf),
            "fdf" => Ok(FilterMode::Fdf),
            "df" => Ok(FilterMode::Df),
            other => Err(Error::InvalidParam(format!("unknown filter mode `{other}`"))),
        }
    }
}

/// Filter geometry. `temporal_taps` is `I + 1`, `freq_halfwidth` is `J`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FilterSpec {
    pub mode: FilterMode,
    pub temporal_taps: usize,
    pub freq_halfwidth: usize,
}

impl FilterSpec {
    pub fn new(mode: FilterMode, temporal_taps: usize, freq_halfwidth: usize) -> Result<Self> {
        let ok = temporal_taps >= 1
            && match mode {
                FilterMode::Crm => temporal_taps == 1 && freq_halfwidth == 0,
                FilterMode::Tdf => freq_halfwidth == 0,
                FilterMode::Fdf => temporal_taps == 1,
                FilterMode::Df => true,
            };
        if !ok {
            return Err(Error::InvalidParam(format!(
                "{} filter cannot have {temporal_taps} temporal taps and half-width {freq_halfwidth}",
                mode.as_str()
            )));
        }
        Ok(Self {
            mode,
            temporal_taps,
            freq_halfwidth,
        })
    }

    pub fn crm() -> Self {
        Self::new(FilterMode::Crm, 1, 0).unwrap()
    }

    pub fn tdf(temporal_taps: usize) -> Result<Self> {
        Self::new(FilterMode::Tdf, temporal_taps, 0)
    }

    pub fn fdf(freq_halfwidth: usize) -> Result<Self> {
        Self::new(FilterMode::Fdf, 1, freq_halfwidth)
    }

    pub fn df(temporal_taps: usize, freq_halfwidth: usize) -> Result<Self> {
        Self::new(FilterMode::Df, temporal_taps, freq_halfwidth)
    }

    /// Geometry for a filter of `order` taps per axis: TDF uses lags
    /// `0..order`, FDF uses offsets `-(order-1)/2..=(order-1)/2`, DF both.
    pub fn for_order(mode: FilterMode, order: usize) -> Result<Self> {
        if order == 0 || order.is_multiple_of(2) {
            return Err(Error::InvalidParam(format!(
                "filter order must be odd and positive, got {order}"
            )));
        }
        let hw = (order - 1) / 2;
        match mode {
            FilterMode::Crm => Ok(Self::crm()),
            FilterMode::Tdf => Self::tdf(order),
            FilterMode::Fdf => Self::fdf(hw),
            FilterMode::Df => Self::df(order, hw),
        }
    }

    /// Number of complex taps per bin.
    pub fn taps(&self) -> usize {
        self.temporal_taps * (2 * self.freq_halfwidth + 1)
    }

    #[inline]
    pub fn tap_index(&self, lag: usize, offset: isize) -> usize {
        lag * (2 * self.freq_halfwidth + 1) + (offset + self.freq_halfwidth as isize) as usize
    }
}

/// Complex filter taps for every bin, layout `[t][f][n]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterCoeffs {
    frames: usize,
    bins: usize,
    pub spec: FilterSpec,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl FilterCoeffs {
    pub fn zeros(frames: usize, bins: usize, spec: FilterSpec) -> Self {
        let n = frames * bins * spec.taps();
        Self {
            frames,
            bins,
            spec,
            re: vec![0.0; n],
            im: vec![0.0; n],
        }
    }

    pub fn from_parts(
        frames: usize,
        bins: usize,
        spec: FilterSpec,
        re: Vec<f64>,
        im: Vec<f64>,
    ) -> Result<Self> {
        let n = frames * bins * spec.taps();
        if re.len() != n || im.len() != n {
            return Err(shape_err("filter coefficients", n, (re.len(), im.len())));
        }
        if re.iter().chain(&im).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("filter coefficients"));
        }
        Ok(Self {
            frames,
            bins,
            spec,
            re,
            im,
        })
    }

    /// Pass-through filter: `1 + 0i` on the current-frame, zero-offset tap.
    pub fn identity(frames: usize, bins: usize, spec: FilterSpec) -> Self {
        let mut c = Self::zeros(frames, bins, spec);
        let n0 = spec.tap_index(0, 0);
        for t in 0..frames {
            for f in 0..bins {
                let k = c.index(t, f, n0);
                c.re[k] = 1.0;
            }
        }
        c
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    #[inline]
    pub fn index(&self, t: usize, f: usize, n: usize) -> usize {
        (t * self.bins + f) * self.spec.taps() + n
    }

    /// Same taps, relabelled as a general deep filter of equal geometry.
    pub fn as_df(&self) -> Self {
        let mut c = self.clone();
        c.spec.mode = FilterMode::Df;
        c
    }

    fn check(&self, x: &ComplexSpectrogram, mode: FilterMode) -> Result<()> {
        if self.spec.mode != mode {
            return Err(Error::InvalidParam(format!(
                "expected {} coefficients, got {}",
                mode.as_str(),
                self.spec.mode.as_str()
            )));
        }
        if x.shape() != (self.frames, self.bins) {
            return Err(shape_err(
                "filter vs spectrogram",
                (self.frames, self.bins),
                x.shape(),
            ));
        }
        Ok(())
    }
}

/// Accumulates one output frame of the general deep filter. `past[i]` holds
/// input frame `t - i` as `(re, im)`, or `None` before the first frame.
fn df_frame(
    past: &[Option<(&[f64], &[f64])>],
    c: &FilterCoeffs,
    t: usize,
    out_re: &mut [f64],
    out_im: &mut [f64],
) {
    let bins = c.bins;
    let hw = c.spec.freq_halfwidth as isize;
    let taps = c.spec.taps();
    for f in 0..bins {
        let base = (t * bins + f) * taps;
        let (mut ar, mut ai) = (0.0, 0.0);
        for (i, frame) in past.iter().enumerate() {
            let Some((xr, xi)) = frame else { continue };
            for j in -hw..=hw {
                let fs = f as isize - j;
                if fs < 0 || fs >= bins as isize {
                    continue;
                }
                let n = base + c.spec.tap_index(i, j);
                let (cr, ci) = (c.re[n], c.im[n]);
                let (vr, vi) = (xr[fs as usize], xi[fs as usize]);
                ar += cr * vr - ci * vi;
                ai += cr * vi + ci * vr;
            }
        }
        out_re[f] = ar;
        out_im[f] = ai;
    }
}

fn frame_of(x: &ComplexSpectrogram, t: usize) -> (&[f64], &[f64]) {
    let r = t * x.bins()..(t + 1) * x.bins();
    (&x.re[r.clone()], &x.im[r])
}

/// General deep filter `S(t,f) = sum_i sum_j C(t,f,i,j) X(t-i, f-j)`.
pub fn apply_df(x: &ComplexSpectrogram, c: &FilterCoeffs) -> Result<ComplexSpectrogram> {
    c.check(x, FilterMode::Df)?;
    let (frames, bins) = x.shape();
    let mut out = ComplexSpectrogram::zeros(frames, bins);
    let mut past = Vec::with_capacity(c.spec.temporal_taps);
    for t in 0..frames {
        past.clear();
        past.extend((0..c.spec.temporal_taps).map(|i| t.checked_sub(i).map(|s| frame_of(x, s))));
        let r = t * bins..(t + 1) * bins;
        let (re, im) = (&mut out.re[r.clone()], &mut out.im[r]);
        df_frame(&past, c, t, re, im);
    }
    Ok(out)
}

/// Temporal deep filter: taps on the current and past frames of one bin.
pub fn apply_tdf(x: &ComplexSpectrogram, c: &FilterCoeffs) -> Result<ComplexSpectrogram> {
    c.check(x, FilterMode::Tdf)?;
    let (frames, bins) = x.shape();
    let lags = c.spec.temporal_taps;
    let mut out = ComplexSpectrogram::zeros(frames, bins);
    for t in 0..frames {
        for f in 0..bins {
            let base = (t * bins + f) * lags;
            let (mut ar, mut ai) = (0.0, 0.0);
            for i in 0..lags.min(t + 1) {
                let k = (t - i) * bins + f;
                let (cr, ci) = (c.re[base + i], c.im[base + i]);
                ar += cr * x.re[k] - ci * x.im[k];
                ai += cr * x.im[k] + ci * x.re[k];
            }
            let k = t * bins + f;
            out.re[k] = ar;
            out.im[k] = ai;
        }
    }
    Ok(out)
}

/// Frequency deep filter: taps on neighbouring bins of the current frame.
pub fn apply_fdf(x: &ComplexSpectrogram, c: &FilterCoeffs) -> Result<ComplexSpectrogram> {
    c.check(x, FilterMode::Fdf)?;
    let (frames, bins) = x.shape();
    let hw = c.spec.freq_halfwidth as isize;
    let taps = c.spec.taps();
    let mut out = ComplexSpectrogram::zeros(frames, bins);
    for t in 0..frames {
        let row = t * bins;
        for f in 0..bins {
            let base = (row + f) * taps;
            let (mut ar, mut ai) = (0.0, 0.0);
            let lo = (f as isize + 1 - bins as isize).max(-hw);
            let hi = (f as isize).min(hw);
            for j in lo..=hi {
                let k = row + (f as isize - j) as usize;
                let n = base + (j + hw) as usize;
                let (cr, ci) = (c.re[n], c.im[n]);
                ar += cr * x.re[k] - ci * x.im[k];
                ai += cr * x.im[k] + ci * x.re[k];
            }
            out.re[row + f] = ar;
            out.im[row + f] = ai;
        }
    }
    Ok(out)
}

/// Complex ratio mask: elementwise complex product.
pub fn apply_crm(x: &ComplexSpectrogram, c: &FilterCoeffs) -> Result<ComplexSpectrogram> {
    c.check(x, FilterMode::Crm)?;
    let mut out = x.clone();
    for k in 0..x.re.len() {
        let (cr, ci) = (c.re[k], c.im[k]);
        out.re[k] = cr * x.re[k] - ci * x.im[k];
        out.im[k] = cr * x.im[k] + ci * x.re[k];
    }
    Ok(out)
}

/// Dispatches on the coefficient mode.
pub fn apply(x: &ComplexSpectrogram, c: &FilterCoeffs) -> Result<ComplexSpectrogram> {
    match c.spec.mode {
        FilterMode::Crm => apply_crm(x, c),
        FilterMode::Tdf => apply_tdf(x, c),
        FilterMode::Fdf => apply_fdf(x, c),
        FilterMode::Df => apply_df(x, c),
    }
}

/// Frame-at-a-time deep filter keeping the last `temporal_taps - 1` input
/// frames. Produces the same values as [`apply`] on the whole spectrogram.
#[derive(Debug, Clone)]
pub struct DfStream {
    spec: FilterSpec,
    bins: usize,
    history: VecDeque<(Vec<f64>, Vec<f64>)>,
}

impl DfStream {
    pub fn new(spec: FilterSpec, bins: usize) -> Self {
        Self {
            spec,
            bins,
            history: VecDeque::with_capacity(spec.temporal_taps),
        }
    }

    /// Filters one input frame with its `bins * taps` coefficients.
    pub fn process(
        &mut self,
        x_re: &[f64],
        x_im: &[f64],
        c_re: &[f64],
        c_im: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = self.bins * self.spec.taps();
        if x_re.len() != self.bins || x_im.len() != self.bins {
            return Err(shape_err("stream frame", self.bins, (x_re.len(), x_im.len())));
        }
        if c_re.len() != n || c_im.len() != n {
            return Err(shape_err("stream coefficients", n, (c_re.len(), c_im.len())));
        }
        self.history.push_front((x_re.to_vec(), x_im.to_vec()));
        self.history.truncate(self.spec.temporal_taps);
        let coeffs = FilterCoeffs {
            frames: 1,
            bins: self.bins,
            spec: self.spec,
            re: c_re.to_vec(),
            im: c_im.to_vec(),
        };
        let past: Vec<_> = (0..self.spec.temporal_taps)
            .map(|i| self.history.get(i).map(|(r, m)| (r.as_slice(), m.as_slice())))
            .collect();
        let mut re = vec![0.0; self.bins];
        let mut im = vec![0.0; self.bins];
        df_frame(&past, &coeffs, 0, &mut re, &mut im);
        Ok((re, im))
    }

    pub fn reset(&mut self) {
        self.history.clear();
    }
}

/// Temporal comb: `n_taps` equal real taps `1 / n_taps` on lags
/// `0, period, 2 * period, ...`, all other lags zero.
pub fn comb_coeffs(frames: usize, bins: usize, period: usize, n_taps: usize) -> Result<FilterCoeffs> {
    if period == 0 || n_taps == 0 {
        return Err(Error::InvalidParam("comb needs period and taps >= 1".into()));
    }
    let spec = FilterSpec::tdf((n_taps - 1) * period + 1)?;
    let mut c = FilterCoeffs::zeros(frames, bins, spec);
    let w = 1.0 / n_taps as f64;
    for t in 0..frames {
        for f in 0..bins {
            for k in 0..n_taps {
                let idx = c.index(t, f, k * period);
                c.re[idx] = w;
            }
        }
    }
    Ok(c)
}

/// Sub-band fusion width: number of neighbouring bands gathered, odd.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SbfSpec {
    k: usize,
}

impl SbfSpec {
    pub fn new(k: usize) -> Result<Self> {
        if k == 0 || k.is_multiple_of(2) {
            return Err(Error::InvalidParam(format!("sbf width must be odd, got {k}")));
        }
        Ok(Self { k })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn half(&self) -> usize {
        (self.k - 1) / 2
    }
}

/// Replicates the `k` frequency neighbours of every band into the channel
/// axis: `C -> C * k`. Output channel `o * C + c` holds input channel `c`
/// shifted by offset `d = o - (k - 1) / 2`, i.e. `out[f] = in[f - d]`, zero
/// beyond the edges.
pub fn sbf_expand(m: &Tensor4, s: SbfSpec) -> Tensor4 {
    let [batch, ch, frames, bins] = m.dims();
    let half = s.half() as isize;
    let mut out = Tensor4::zeros([batch, ch * s.k, frames, bins]);
    for b in 0..batch {
        for o in 0..s.k {
            let d = o as isize - half;
            for c in 0..ch {
                for t in 0..frames {
                    let src = m.row(b, c, t);
                    let dst = out.row_mut(b, o * ch + c, t);
                    for (f, v) in dst.iter_mut().enumerate() {
                        let fs = f as isize - d;
                        if fs >= 0 && fs < bins as isize {
                            *v = src[fs as usize];
                        }
                    }
                }
            }
        }
    }
    out
}
