//! Encoder/decoder stage network and the two-stage enhancement pass.

use super::blocks::{ConvBlock, Dprnn, TaConv};
use super::config::{ModelConfig, StageLayout};
use super::weights::WeightBundle;
use crate::erb::{build_erb_filterbank, erb_analyze, erb_synthesize, ErbFilterbank};
use crate::error::{shape_err, Result};
use crate::filtering::{self, FilterCoeffs, FilterSpec};
use crate::nn::{conv2d, tanh_t, ConvParams, Tensor4};
use crate::spectral::{build_feature_stack, ComplexSpectrogram};

/// Coefficient head output, layout `(B, T, F, 2, taps)`: for every bin the
/// real parts of all taps followed by the imaginary parts.
#[derive(Debug, Clone, PartialEq)]
pub struct DfHeadOutput {
    pub batch: usize,
    pub frames: usize,
    pub bins: usize,
    pub spec: FilterSpec,
    pub data: Vec<f64>,
}

impl DfHeadOutput {
    pub fn dims(&self) -> [usize; 5] {
        [self.batch, self.frames, self.bins, 2, self.spec.taps()]
    }

    /// Head activations `(B, 2 * taps, T, F)` reordered to `(B, T, F, 2, taps)`.
    fn from_channels(x: &Tensor4, spec: FilterSpec) -> Result<Self> {
        let [batch, ch, frames, bins] = x.dims();
        let taps = spec.taps();
        if ch != 2 * taps {
            return Err(shape_err("head channels", 2 * taps, ch));
        }
        let mut data = Vec::with_capacity(x.data().len());
        for b in 0..batch {
            for t in 0..frames {
                for f in 0..bins {
                    for c in 0..ch {
                        data.push(x.get(b, c, t, f));
                    }
                }
            }
        }
        Ok(Self {
            batch,
            frames,
            bins,
            spec,
            data,
        })
    }

    pub fn coeffs(&self, b: usize) -> Result<FilterCoeffs> {
        let taps = self.spec.taps();
        let per = self.frames * self.bins;
        let mut re = Vec::with_capacity(per * taps);
        let mut im = Vec::with_capacity(per * taps);
        for cell in self.data[b * per * 2 * taps..(b + 1) * per * 2 * taps].chunks_exact(2 * taps) {
            re.extend_from_slice(&cell[..taps]);
            im.extend_from_slice(&cell[taps..]);
        }
        FilterCoeffs::from_parts(self.frames, self.bins, self.spec, re, im)
    }
}

/// One stage: optional band compression, conv encoder, TAConvs, DPRNNs,
/// mirrored decoder with additive skips, and a tanh coefficient head.
#[derive(Debug, Clone)]
pub struct Tacrn {
    pub layout: StageLayout,
    pub erb: Option<ErbFilterbank>,
    pub enc_convs: Vec<ConvBlock>,
    pub enc_taconvs: Vec<TaConv>,
    pub dprnns: Vec<Dprnn>,
    pub dec_taconvs: Vec<TaConv>,
    pub dec_convs: Vec<ConvBlock>,
    pub head: ConvParams,
}

impl Tacrn {
    pub fn load(cfg: &ModelConfig, layout: &StageLayout, w: &WeightBundle) -> Result<Self> {
        let p = layout.prefix();
        let c = layout.channels;
        let erb = if layout.erb {
            Some(build_erb_filterbank(
                cfg.n_bins,
                crate::spectral::SAMPLE_RATE,
                cfg.erb_low_kept,
                cfg.erb_high_bands,
            )?)
        } else {
            None
        };
        let enc_convs = (0..cfg.conv_repeats)
            .map(|i| {
                let cin = if i == 0 { layout.in_channels } else { c };
                ConvBlock::load(w, &format!("{p}/encoder/conv{i}"), cin, c, false)
            })
            .collect::<Result<_>>()?;
        let taconvs = |side: &str| -> Result<Vec<TaConv>> {
            (0..cfg.taconv_repeats)
                .map(|i| TaConv::load(w, &format!("{p}/{side}/taconv{i}"), c, layout.sbf_k))
                .collect()
        };
        let enc_taconvs = taconvs("encoder")?;
        let dec_taconvs = taconvs("decoder")?;
        let dprnns = (0..cfg.dprnn_repeats)
            .map(|i| Dprnn::load(w, &format!("{p}/dprnn/block{i}"), c, cfg.gru_groups))
            .collect::<Result<_>>()?;
        let dec_convs = (0..cfg.conv_repeats)
            .map(|i| ConvBlock::load(w, &format!("{p}/decoder/deconv{i}"), c, c, true))
            .collect::<Result<_>>()?;
        let mut head = ConvParams::new(c, layout.head_channels(), (1, 1), (1, 1), 1, false, 0)?;
        head.weight = w.f64(&format!("{p}/head/conv/weight"))?;
        head.bias = w.f64(&format!("{p}/head/conv/bias"))?;
        Ok(Self {
            layout: layout.clone(),
            erb,
            enc_convs,
            enc_taconvs,
            dprnns,
            dec_taconvs,
            dec_convs,
            head,
        })
    }

    /// Coefficients at linear resolution from a `(B, C_in, T, F)` feature stack.
    pub fn forward(&self, features: &Tensor4) -> Result<DfHeadOutput> {
        if features.dims()[1] != self.layout.in_channels {
            return Err(shape_err(
                "stage input channels",
                self.layout.in_channels,
                features.dims()[1],
            ));
        }
        let mut x = match &self.erb {
            Some(fb) => erb_analyze(features, fb)?,
            None => features.clone(),
        };
        let mut skips = Vec::with_capacity(self.enc_convs.len() + self.enc_taconvs.len());
        for block in &self.enc_convs {
            x = block.forward(&x)?;
            skips.push(x.clone());
        }
        for block in &self.enc_taconvs {
            x = block.forward(&x)?;
            skips.push(x.clone());
        }
        for block in &self.dprnns {
            x = block.forward(&x)?;
        }
        for block in &self.dec_taconvs {
            x.add_assign(&skips.pop().expect("skip per encoder block"))?;
            x = block.forward(&x)?;
        }
        for block in &self.dec_convs {
            x.add_assign(&skips.pop().expect("skip per encoder block"))?;
            x = block.forward(&x)?;
        }
        let mut coeffs = tanh_t(&conv2d(&x, &self.head)?);
        if let Some(fb) = &self.erb {
            coeffs = erb_synthesize(&coeffs, fb)?;
        }
        DfHeadOutput::from_channels(&coeffs, self.layout.filter)
    }
}

/// Intermediate and final spectra of one enhancement pass.
#[derive(Debug, Clone)]
pub struct Enhanced {
    pub stage1: ComplexSpectrogram,
    pub stage2: Option<ComplexSpectrogram>,
    pub output: ComplexSpectrogram,
}

/// A loaded, immutable model. Shareable across threads.
#[derive(Debug, Clone)]
pub struct HdfNet {
    pub config: ModelConfig,
    pub stages: Vec<Tacrn>,
}

impl HdfNet {
    pub fn new(cfg: &ModelConfig, weights: &WeightBundle) -> Result<Self> {
        weights.validate(cfg)?;
        let stages = cfg
            .stages()?
            .iter()
            .map(|l| Tacrn::load(cfg, l, weights))
            .collect::<Result<_>>()?;
        Ok(Self {
            config: cfg.clone(),
            stages,
        })
    }

    /// Stage one filters the noisy input into `S1`; stage two sees the noisy
    /// and stage-one features, filters the noisy input again, and its output
    /// is added to `S1`.
    pub fn enhance(&self, x: &ComplexSpectrogram) -> Result<Enhanced> {
        if x.bins() != self.config.n_bins {
            return Err(shape_err("input bins", self.config.n_bins, x.bins()));
        }
        if !x.is_finite() {
            return Err(crate::error::Error::NonFinite("input spectrogram"));
        }
        let first = &self.stages[0];
        let feats = build_feature_stack(x, None)?;
        let c1 = first.forward(&feats.tensor)?.coeffs(0)?;
        let s1 = filtering::apply(x, &c1)?;
        let Some(second) = self.stages.get(1) else {
            return Ok(Enhanced {
                output: s1.clone(),
                stage1: s1,
                stage2: None,
            });
        };
        let feats = build_feature_stack(x, Some(&s1))?;
        let c2 = second.forward(&feats.tensor)?.coeffs(0)?;
        let s2 = filtering::apply(x, &c2)?;
        let output = s1.add(&s2)?;
        Ok(Enhanced {
            stage1: s1,
            stage2: Some(s2),
            output,
        })
    }
}

/// Loads `weights` for `cfg` and enhances `x`.
pub fn hdf_enhance(
    x: &ComplexSpectrogram,
    weights: &WeightBundle,
    cfg: &ModelConfig,
) -> Result<ComplexSpectrogram> {
    Ok(HdfNet::new(cfg, weights)?.enhance(x)?.output)
}
