//! Network building blocks: conv blocks, the temporal-attention conv, and
//! the dual-path RNN.

use super::weights::WeightBundle;
use crate::error::{shape_err, Result};
use crate::filtering::{sbf_expand, SbfSpec};
use crate::nn::{
    avgpool_freq, conv2d, prelu, sigmoid, BatchNorm, ConvParams, Direction, GruParams, GruWeights,
    Linear, Tensor4, BN_EPS,
};

fn load_bn(w: &WeightBundle, block: &str, tag: &str) -> Result<BatchNorm> {
    Ok(BatchNorm {
        scale: w.f64(&format!("{block}/{tag}_scale"))?,
        shift: w.f64(&format!("{block}/{tag}_shift"))?,
        mean: w.f64(&format!("{block}/{tag}_mean"))?,
        var: w.f64(&format!("{block}/{tag}_var"))?,
        eps: BN_EPS,
    })
}

#[allow(clippy::too_many_arguments)]
fn load_conv(
    w: &WeightBundle,
    weight: &str,
    bias: &str,
    in_ch: usize,
    out_ch: usize,
    kernel: (usize, usize),
    stride: (usize, usize),
    groups: usize,
    transposed: bool,
    pad_f: usize,
) -> Result<ConvParams> {
    let mut p = ConvParams::new(in_ch, out_ch, kernel, stride, groups, transposed, pad_f)?;
    p.weight = w.f64(weight)?;
    p.bias = w.f64(bias)?;
    if p.weight.len() != p.weight_shape().iter().product::<usize>() {
        return Err(shape_err("conv weight", p.weight_shape(), p.weight.len()));
    }
    Ok(p)
}

fn load_gru_dir(w: &WeightBundle, block: &str, tag: &str) -> Result<GruWeights> {
    Ok(GruWeights {
        w_ih: w.f64(&format!("{block}/{tag}_w_ih"))?,
        w_hh: w.f64(&format!("{block}/{tag}_w_hh"))?,
        b_ih: w.f64(&format!("{block}/{tag}_b_ih"))?,
        b_hh: w.f64(&format!("{block}/{tag}_b_hh"))?,
    })
}

fn load_linear(w: &WeightBundle, block: &str, tag: &str, i: usize, o: usize) -> Result<Linear> {
    let mut l = Linear::zeros(i, o);
    l.weight = w.f64(&format!("{block}/{tag}_weight"))?;
    l.bias = w.f64(&format!("{block}/{tag}_bias"))?;
    Ok(l)
}

/// Conv -> batch norm -> PReLU. Frequency kernel 5, stride 2, padding 2.
#[derive(Debug, Clone)]
pub struct ConvBlock {
    pub conv: ConvParams,
    pub bn: BatchNorm,
    pub prelu: Vec<f64>,
}

impl ConvBlock {
    pub fn load(w: &WeightBundle, block: &str, in_ch: usize, out_ch: usize, transposed: bool) -> Result<Self> {
        Ok(Self {
            conv: load_conv(
                w,
                &format!("{block}/weight"),
                &format!("{block}/bias"),
                in_ch,
                out_ch,
                (1, 5),
                (1, 2),
                1,
                transposed,
                2,
            )?,
            bn: load_bn(w, block, "bn")?,
            prelu: w.f64(&format!("{block}/prelu"))?,
        })
    }

    pub fn forward(&self, x: &Tensor4) -> Result<Tensor4> {
        prelu(&self.bn.forward(&conv2d(x, &self.conv)?)?, &self.prelu)
    }
}

/// Causal temporal attention: frequency-pooled features run through a GRU
/// and a past-padded 1-D conv, giving a sigmoid gate per (channel, frame).
#[derive(Debug, Clone)]
pub struct TemporalAttention {
    pub gru: GruParams,
    /// Kernel `(3, 1)` over `(time, pooled freq)`.
    pub conv: ConvParams,
}

impl TemporalAttention {
    pub fn load(w: &WeightBundle, block: &str, c: usize) -> Result<Self> {
        let mut gru = GruParams::zeros(c, c, 1, Direction::Forward)?;
        gru.forward = load_gru_dir(w, block, "ta_gru")?;
        let conv = load_conv(
            w,
            &format!("{block}/ta_conv_weight"),
            &format!("{block}/ta_conv_bias"),
            c,
            c,
            (3, 1),
            (1, 1),
            1,
            false,
            0,
        )?;
        Ok(Self { gru, conv })
    }

    /// Gate values, shape `(B, C, T, 1)`.
    pub fn gates(&self, x: &Tensor4) -> Result<Tensor4> {
        let [batch, ch, frames, _] = x.dims();
        let pooled = avgpool_freq(x);
        let mut seq_out = Tensor4::zeros([batch, ch, frames, 1]);
        let mut seq = vec![0.0; frames * ch];
        for b in 0..batch {
            for t in 0..frames {
                for c in 0..ch {
                    seq[t * ch + c] = pooled.get(b, c, t, 0);
                }
            }
            let out = self.gru.forward(&seq, frames, None)?;
            for t in 0..frames {
                for c in 0..ch {
                    seq_out.set(b, c, t, 0, out.outputs[t * ch + c]);
                }
            }
        }
        Ok(conv2d(&seq_out, &self.conv)?.map(sigmoid))
    }

    pub fn forward(&self, x: &Tensor4) -> Result<Tensor4> {
        let gates = self.gates(x)?;
        let [batch, ch, frames, _] = x.dims();
        let mut out = x.clone();
        for b in 0..batch {
            for c in 0..ch {
                for t in 0..frames {
                    let g = gates.get(b, c, t, 0);
                    out.row_mut(b, c, t).iter_mut().for_each(|v| *v *= g);
                }
            }
        }
        Ok(out)
    }
}

/// Optional sub-band fusion -> pointwise conv -> causal depthwise 3x3 ->
/// temporal attention -> pointwise conv -> residual.
#[derive(Debug, Clone)]
pub struct TaConv {
    pub sbf: Option<SbfSpec>,
    pub pw1: ConvParams,
    pub bn1: BatchNorm,
    pub prelu1: Vec<f64>,
    pub dw: ConvParams,
    pub bn2: BatchNorm,
    pub prelu2: Vec<f64>,
    pub ta: TemporalAttention,
    pub pw2: ConvParams,
    pub bn3: BatchNorm,
}

impl TaConv {
    pub fn load(w: &WeightBundle, block: &str, c: usize, sbf_k: Option<usize>) -> Result<Self> {
        let sbf = sbf_k.map(SbfSpec::new).transpose()?;
        let k = sbf.map_or(1, |s| s.k());
        let conv = |name: &str, cin, kernel, groups, pad_f| {
            load_conv(
                w,
                &format!("{block}/{name}_weight"),
                &format!("{block}/{name}_bias"),
                cin,
                c,
                kernel,
                (1, 1),
                groups,
                false,
                pad_f,
            )
        };
        Ok(Self {
            sbf,
            pw1: conv("pw1", c * k, (1, 1), 1, 0)?,
            bn1: load_bn(w, block, "bn1")?,
            prelu1: w.f64(&format!("{block}/prelu1"))?,
            dw: conv("dw", c, (3, 3), c, 1)?,
            bn2: load_bn(w, block, "bn2")?,
            prelu2: w.f64(&format!("{block}/prelu2"))?,
            ta: TemporalAttention::load(w, block, c)?,
            pw2: conv("pw2", c, (1, 1), 1, 0)?,
            bn3: load_bn(w, block, "bn3")?,
        })
    }

    pub fn forward(&self, x: &Tensor4) -> Result<Tensor4> {
        let expanded;
        let input = match self.sbf {
            Some(s) if s.k() > 1 => {
                expanded = sbf_expand(x, s);
                &expanded
            }
            _ => x,
        };
        let h = prelu(&self.bn1.forward(&conv2d(input, &self.pw1)?)?, &self.prelu1)?;
        let h = prelu(&self.bn2.forward(&conv2d(&h, &self.dw)?)?, &self.prelu2)?;
        let h = self.ta.forward(&h)?;
        let mut h = self.bn3.forward(&conv2d(&h, &self.pw2)?)?;
        h.add_assign(x)?;
        Ok(h)
    }
}

/// Dual-path RNN: bidirectional grouped GRU across frequency within each
/// frame, then unidirectional grouped GRU across time for each band; each
/// path is projected back to `C` channels and added residually.
#[derive(Debug, Clone)]
pub struct Dprnn {
    pub intra: GruParams,
    pub intra_proj: Linear,
    pub inter: GruParams,
    pub inter_proj: Linear,
}

impl Dprnn {
    pub fn load(w: &WeightBundle, block: &str, c: usize, groups: usize) -> Result<Self> {
        let mut intra = GruParams::zeros(c, c, groups, Direction::Bidirectional)?;
        intra.forward = load_gru_dir(w, block, "intra")?;
        intra.backward = Some(load_gru_dir(w, block, "intra_rev")?);
        let mut inter = GruParams::zeros(c, c, groups, Direction::Forward)?;
        inter.forward = load_gru_dir(w, block, "inter")?;
        Ok(Self {
            intra,
            intra_proj: load_linear(w, block, "intra_proj", 2 * c, c)?,
            inter,
            inter_proj: load_linear(w, block, "inter_proj", c, c)?,
        })
    }

    pub fn forward(&self, x: &Tensor4) -> Result<Tensor4> {
        let [batch, ch, frames, bins] = x.dims();
        if ch != self.intra.input_size {
            return Err(shape_err("dprnn channels", self.intra.input_size, ch));
        }
        let mut y = x.clone();
        let mut proj = vec![0.0; ch];

        // (B, C, T, F) -> (B*T, F, C)
        let mut seq = vec![0.0; bins * ch];
        for b in 0..batch {
            for t in 0..frames {
                for f in 0..bins {
                    for c in 0..ch {
                        seq[f * ch + c] = x.get(b, c, t, f);
                    }
                }
                let out = self.intra.forward(&seq, bins, None)?;
                let width = self.intra.output_size();
                for f in 0..bins {
                    self.intra_proj.forward_into(&out.outputs[f * width..(f + 1) * width], &mut proj);
                    for c in 0..ch {
                        let i = y.idx(b, c, t, f);
                        y.data_mut()[i] += proj[c];
                    }
                }
            }
        }

        // (B, C, T, F) -> (B*F, T, C)
        let mut z = y.clone();
        let mut seq = vec![0.0; frames * ch];
        for b in 0..batch {
            for f in 0..bins {
                for t in 0..frames {
                    for c in 0..ch {
                        seq[t * ch + c] = y.get(b, c, t, f);
                    }
                }
                let out = self.inter.forward(&seq, frames, None)?;
                for t in 0..frames {
                    self.inter_proj.forward_into(&out.outputs[t * ch..(t + 1) * ch], &mut proj);
                    for c in 0..ch {
                        let i = z.idx(b, c, t, f);
                        z.data_mut()[i] += proj[c];
                    }
                }
            }
        }
        Ok(z)
    }
}
