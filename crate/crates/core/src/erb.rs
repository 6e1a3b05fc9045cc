//! Linear <-> ERB band mapping.
//!
//! The lowest `n_low_kept` linear bins pass through unchanged; the remaining
//! bins are grouped into `n_erb_high` triangular bands whose centres are
//! equally spaced on the ERB-rate scale, adjacent triangles overlapping by
//! half. Analysis rows are normalized to sum to one (band = weighted mean of
//! its bins); synthesis rows are normalized so that each linear bin is a
//! convex combination of the bands covering it.

use crate::error::{shape_err, Error, Result};
use crate::nn::Tensor4;

/// ERB-rate in Cams, Glasberg & Moore approximation.
pub fn erb_rate(hz: f64) -> f64 {
    21.4 * (1.0 + 0.00437 * hz).log10()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErbFilterbank {
    n_linear: usize,
    n_low_kept: usize,
    n_erb_high: usize,
    /// `n_bands x n_linear`
    analysis: Vec<Vec<f64>>,
    /// `n_linear x n_bands`
    synthesis: Vec<Vec<f64>>,
    analysis_support: Vec<(usize, usize)>,
    synthesis_support: Vec<(usize, usize)>,
}

fn support(row: &[f64]) -> (usize, usize) {
    let start = row.iter().position(|w| *w != 0.0).unwrap_or(0);
    let end = row.iter().rposition(|w| *w != 0.0).map_or(start, |e| e + 1);
    (start, end)
}

pub fn build_erb_filterbank(
    n_fft_bins: usize,
    sample_rate: u32,
    n_low_kept: usize,
    n_erb_high: usize,
) -> Result<ErbFilterbank> {
    if n_low_kept > n_fft_bins || n_fft_bins < 2 {
        return Err(Error::InvalidParam(format!(
            "cannot keep {n_low_kept} of {n_fft_bins} bins"
        )));
    }
    let n_high = n_fft_bins - n_low_kept;
    if n_erb_high > n_high || (n_erb_high == 0 && n_high > 0) {
        return Err(Error::InvalidParam(format!(
            "cannot map {n_high} high bins onto {n_erb_high} ERB bands"
        )));
    }
    let n_bands = n_low_kept + n_erb_high;
    let bin_hz = sample_rate as f64 / (2.0 * (n_fft_bins - 1) as f64);

    let mut raw = vec![vec![0.0; n_fft_bins]; n_bands];
    for (k, row) in raw.iter_mut().enumerate().take(n_low_kept) {
        row[k] = 1.0;
    }
    if n_erb_high == 1 {
        raw[n_low_kept][n_low_kept..].fill(1.0);
    } else if n_erb_high > 1 {
        let lo = erb_rate(n_low_kept as f64 * bin_hz);
        let hi = erb_rate((n_fft_bins - 1) as f64 * bin_hz);
        let spacing = (hi - lo) / (n_erb_high - 1) as f64;
        for b in 0..n_erb_high {
            let centre = lo + b as f64 * spacing;
            let row = &mut raw[n_low_kept + b];
            for (k, w) in row.iter_mut().enumerate().skip(n_low_kept) {
                let e = erb_rate(k as f64 * bin_hz);
                *w = (1.0 - (e - centre).abs() / spacing).max(0.0);
            }
        }
    }

    let mut analysis = raw.clone();
    for (b, row) in analysis.iter_mut().enumerate() {
        let sum: f64 = row.iter().sum();
        if sum <= 0.0 {
            return Err(Error::InvalidParam(format!(
                "ERB band {b} covers no linear bin; too many bands for the resolution"
            )));
        }
        row.iter_mut().for_each(|w| *w /= sum);
    }
    let mut synthesis = vec![vec![0.0; n_bands]; n_fft_bins];
    for (k, row) in synthesis.iter_mut().enumerate() {
        let sum: f64 = raw.iter().map(|r| r[k]).sum();
        for (b, w) in row.iter_mut().enumerate() {
            *w = raw[b][k] / sum;
        }
    }
    Ok(ErbFilterbank {
        n_linear: n_fft_bins,
        n_low_kept,
        n_erb_high,
        analysis_support: analysis.iter().map(|r| support(r)).collect(),
        synthesis_support: synthesis.iter().map(|r| support(r)).collect(),
        analysis,
        synthesis,
    })
}

impl ErbFilterbank {
    /// 257 linear bins at 16 kHz: 65 kept low bins plus 64 ERB bands.
    pub fn standard() -> Self {
        build_erb_filterbank(257, 16_000, 65, 64).expect("valid default filterbank")
    }

    pub fn n_linear(&self) -> usize {
        self.n_linear
    }

    pub fn n_low_kept(&self) -> usize {
        self.n_low_kept
    }

    pub fn n_erb_high(&self) -> usize {
        self.n_erb_high
    }

    pub fn n_bands(&self) -> usize {
        self.n_low_kept + self.n_erb_high
    }

    pub fn analysis(&self) -> &[Vec<f64>] {
        &self.analysis
    }

    pub fn synthesis(&self) -> &[Vec<f64>] {
        &self.synthesis
    }

    /// Nonzero weights in the analysis and synthesis matrices.
    pub fn nonzeros(&self) -> (usize, usize) {
        let count = |s: &[(usize, usize)]| s.iter().map(|(a, b)| b - a).sum();
        (count(&self.analysis_support), count(&self.synthesis_support))
    }
}

fn apply_rows(
    m: &Tensor4,
    rows: &[Vec<f64>],
    supp: &[(usize, usize)],
    expect_in: usize,
    context: &'static str,
) -> Result<Tensor4> {
    let [batch, ch, frames, bins] = m.dims();
    if bins != expect_in {
        return Err(shape_err(context, expect_in, bins));
    }
    let mut out = Tensor4::zeros([batch, ch, frames, rows.len()]);
    for b in 0..batch {
        for c in 0..ch {
            for t in 0..frames {
                let src = m.row(b, c, t);
                let dst = out.row_mut(b, c, t);
                for (r, (row, &(s, e))) in rows.iter().zip(supp).enumerate() {
                    dst[r] = row[s..e].iter().zip(&src[s..e]).map(|(w, v)| w * v).sum();
                }
            }
        }
    }
    Ok(out)
}

/// Linear bins -> ERB bands along the last axis.
pub fn erb_analyze(m: &Tensor4, fb: &ErbFilterbank) -> Result<Tensor4> {
    apply_rows(m, &fb.analysis, &fb.analysis_support, fb.n_linear, "erb analyze")
}

/// ERB bands -> linear bins along the last axis.
pub fn erb_synthesize(m: &Tensor4, fb: &ErbFilterbank) -> Result<Tensor4> {
    apply_rows(m, &fb.synthesis, &fb.synthesis_support, fb.n_bands(), "erb synthesize")
}
