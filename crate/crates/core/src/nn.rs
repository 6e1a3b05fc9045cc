//! Dense inference kernels: rank-4 tensors, causal (transposed) convolution,
//! grouped GRU, batch norm and activations.
//!
//! All kernels accumulate in a fixed loop order, so repeated calls on the
//! same input are bit-identical.

use crate::error::{shape_err, Error, Result};

/// Dense `(batch, channel, time, freq)` array, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor4 {
    dims: [usize; 4],
    data: Vec<f64>,
}

impl Tensor4 {
    pub fn zeros(dims: [usize; 4]) -> Self {
        Self {
            dims,
            data: vec![0.0; dims.iter().product()],
        }
    }

    pub fn from_vec(dims: [usize; 4], data: Vec<f64>) -> Result<Self> {
        if data.len() != dims.iter().product::<usize>() {
            return Err(shape_err("tensor data", dims, data.len()));
        }
        Ok(Self { dims, data })
    }

    pub fn from_fn(dims: [usize; 4], mut f: impl FnMut(usize, usize, usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(dims.iter().product());
        for b in 0..dims[0] {
            for c in 0..dims[1] {
                for t in 0..dims[2] {
                    for q in 0..dims[3] {
                        data.push(f(b, c, t, q));
                    }
                }
            }
        }
        Self { dims, data }
    }

    pub fn dims(&self) -> [usize; 4] {
        self.dims
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn idx(&self, b: usize, c: usize, t: usize, f: usize) -> usize {
        let [_, cs, ts, fs] = self.dims;
        ((b * cs + c) * ts + t) * fs + f
    }

    #[inline]
    pub fn get(&self, b: usize, c: usize, t: usize, f: usize) -> f64 {
        self.data[self.idx(b, c, t, f)]
    }

    #[inline]
    pub fn set(&mut self, b: usize, c: usize, t: usize, f: usize, v: f64) {
        let i = self.idx(b, c, t, f);
        self.data[i] = v;
    }

    /// Contiguous frequency row at `(b, c, t)`.
    pub fn row(&self, b: usize, c: usize, t: usize) -> &[f64] {
        let i = self.idx(b, c, t, 0);
        &self.data[i..i + self.dims[3]]
    }

    pub fn row_mut(&mut self, b: usize, c: usize, t: usize) -> &mut [f64] {
        let i = self.idx(b, c, t, 0);
        let fs = self.dims[3];
        &mut self.data[i..i + fs]
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        let mut out = self.clone();
        out.add_assign(other)?;
        Ok(out)
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        if self.dims != other.dims {
            return Err(shape_err("tensor add", self.dims, other.dims));
        }
        self.data
            .iter_mut()
            .zip(&other.data)
            .for_each(|(a, b)| *a += b);
        Ok(())
    }

    pub fn map(mut self, f: impl Fn(f64) -> f64) -> Self {
        self.data.iter_mut().for_each(|v| *v = f(*v));
        self
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Weights and geometry of a 2-D (optionally transposed) convolution over
/// `(time, freq)`. Time is always padded causally with `kernel.0 - 1` past
/// frames; frequency is padded symmetrically by `pad_f`.
///
/// Weight layout is `[out, in / groups, kt, kf]` for a regular convolution
/// and `[in, out / groups, kt, kf]` for a transposed one.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: (usize, usize),
    pub stride: (usize, usize),
    pub groups: usize,
    pub transposed: bool,
    pub pad_f: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ConvParams {
    pub fn new(
        in_ch: usize,
        out_ch: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
        groups: usize,
        transposed: bool,
        pad_f: usize,
    ) -> Result<Self> {
        if groups == 0 || !in_ch.is_multiple_of(groups) || !out_ch.is_multiple_of(groups) {
            return Err(Error::InvalidParam(format!(
                "channels {in_ch}->{out_ch} not divisible by {groups} groups"
            )));
        }
        if kernel.0 == 0 || kernel.1 == 0 || stride.0 == 0 || stride.1 == 0 {
            return Err(Error::InvalidParam("zero kernel or stride".into()));
        }
        let mut p = Self {
            in_ch,
            out_ch,
            kernel,
            stride,
            groups,
            transposed,
            pad_f,
            weight: Vec::new(),
            bias: vec![0.0; out_ch],
        };
        p.weight = vec![0.0; p.weight_shape().iter().product()];
        Ok(p)
    }

    pub fn causal_pad_t(&self) -> usize {
        self.kernel.0 - 1
    }

    pub fn weight_shape(&self) -> [usize; 4] {
        if self.transposed {
            [self.in_ch, self.out_ch / self.groups, self.kernel.0, self.kernel.1]
        } else {
            [self.out_ch, self.in_ch / self.groups, self.kernel.0, self.kernel.1]
        }
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    /// Output `(time, freq)` extent for an input of `(t, f)`.
    pub fn output_size(&self, t: usize, f: usize) -> Result<(usize, usize)> {
        let (kt, kf) = self.kernel;
        let (st, sf) = self.stride;
        if self.transposed {
            let full = (f.max(1) - 1) * sf + kf;
            if full <= 2 * self.pad_f {
                return Err(shape_err("deconv freq", "> 2*pad_f", full));
            }
            Ok(((t.max(1) - 1) * st + 1, full - 2 * self.pad_f))
        } else {
            if f + 2 * self.pad_f < kf {
                return Err(shape_err("conv freq", format!(">= {kf}"), f + 2 * self.pad_f));
            }
            let _ = kt;
            Ok(((t.max(1) - 1) / st + 1, (f + 2 * self.pad_f - kf) / sf + 1))
        }
    }

    /// Multiply-accumulates for one application to `(t, f)` input.
    pub fn macs(&self, t: usize, f: usize) -> Result<u64> {
        let (kt, kf) = self.kernel;
        let per = (kt * kf) as u64;
        Ok(if self.transposed {
            (self.in_ch * (self.out_ch / self.groups)) as u64 * per * (t * f) as u64
        } else {
            let (to, fo) = self.output_size(t, f)?;
            (self.out_ch * (self.in_ch / self.groups)) as u64 * per * (to * fo) as u64
        })
    }
}

fn check_input(x: &Tensor4, p: &ConvParams) -> Result<()> {
    if x.dims()[1] != p.in_ch {
        return Err(shape_err("conv input channels", p.in_ch, x.dims()[1]));
    }
    if p.weight.len() != p.weight_shape().iter().product::<usize>() {
        return Err(shape_err("conv weight", p.weight_shape(), p.weight.len()));
    }
    if p.bias.len() != p.out_ch {
        return Err(shape_err("conv bias", p.out_ch, p.bias.len()));
    }
    Ok(())
}

/// Causal 2-D convolution.
pub fn conv2d(x: &Tensor4, p: &ConvParams) -> Result<Tensor4> {
    if p.transposed {
        return deconv2d(x, p);
    }
    check_input(x, p)?;
    let [batch, _, t_in, f_in] = x.dims();
    let (t_out, f_out) = p.output_size(t_in, f_in)?;
    let (kt, kf) = p.kernel;
    let (st, sf) = p.stride;
    let in_g = p.in_ch / p.groups;
    let out_g = p.out_ch / p.groups;
    let pad_t = p.causal_pad_t() as isize;
    let pad_f = p.pad_f as isize;
    let mut out = Tensor4::zeros([batch, p.out_ch, t_out, f_out]);
    for b in 0..batch {
        for oc in 0..p.out_ch {
            let g = oc / out_g;
            for to in 0..t_out {
                let dst = out.idx(b, oc, to, 0);
                out.data[dst..dst + f_out].fill(p.bias[oc]);
            }
            for icl in 0..in_g {
                let ic = g * in_g + icl;
                for ki in 0..kt {
                    for kj in 0..kf {
                        let w = p.weight[((oc * in_g + icl) * kt + ki) * kf + kj];
                        if w == 0.0 {
                            continue;
                        }
                        for to in 0..t_out {
                            let ti = (to * st) as isize + ki as isize - pad_t;
                            if ti < 0 || ti >= t_in as isize {
                                continue;
                            }
                            let src = x.idx(b, ic, ti as usize, 0);
                            let dst = out.idx(b, oc, to, 0);
                            for fo in 0..f_out {
                                let fi = (fo * sf) as isize + kj as isize - pad_f;
                                if fi >= 0 && fi < f_in as isize {
                                    out.data[dst + fo] += w * x.data[src + fi as usize];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Causal transposed convolution: input frame `ti` scatters into output
/// frames `ti * st + k`, frequency is cropped by `pad_f` on both sides.
pub fn deconv2d(x: &Tensor4, p: &ConvParams) -> Result<Tensor4> {
    if !p.transposed {
        return Err(Error::InvalidParam("deconv2d needs transposed params".into()));
    }
    check_input(x, p)?;
    let [batch, _, t_in, f_in] = x.dims();
    let (t_out, f_out) = p.output_size(t_in, f_in)?;
    let (kt, kf) = p.kernel;
    let (st, sf) = p.stride;
    let in_g = p.in_ch / p.groups;
    let out_g = p.out_ch / p.groups;
    let pad_f = p.pad_f as isize;
    let mut out = Tensor4::zeros([batch, p.out_ch, t_out, f_out]);
    for b in 0..batch {
        for oc in 0..p.out_ch {
            for to in 0..t_out {
                let dst = out.idx(b, oc, to, 0);
                out.data[dst..dst + f_out].fill(p.bias[oc]);
            }
        }
        for ic in 0..p.in_ch {
            let g = ic / in_g;
            for ocl in 0..out_g {
                let oc = g * out_g + ocl;
                for ki in 0..kt {
                    for kj in 0..kf {
                        let w = p.weight[((ic * out_g + ocl) * kt + ki) * kf + kj];
                        if w == 0.0 {
                            continue;
                        }
                        for ti in 0..t_in {
                            let to = ti * st + ki;
                            if to >= t_out {
                                continue;
                            }
                            let src = x.idx(b, ic, ti, 0);
                            let dst = out.idx(b, oc, to, 0);
                            for fi in 0..f_in {
                                let fo = (fi * sf) as isize + kj as isize - pad_f;
                                if fo >= 0 && fo < f_out as isize {
                                    out.data[dst + fo as usize] += w * x.data[src + fi];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Inference-mode batch norm with stored statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub scale: Vec<f64>,
    pub shift: Vec<f64>,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub eps: f64,
}

pub const BN_EPS: f64 = 1e-5;

impl BatchNorm {
    pub fn identity(channels: usize) -> Self {
        Self {
            scale: vec![1.0; channels],
            shift: vec![0.0; channels],
            mean: vec![0.0; channels],
            var: vec![1.0; channels],
            eps: BN_EPS,
        }
    }

    pub fn forward(&self, x: &Tensor4) -> Result<Tensor4> {
        batchnorm_infer(x, &self.scale, &self.shift, &self.mean, &self.var, self.eps)
    }
}

pub fn batchnorm_infer(
    x: &Tensor4,
    scale: &[f64],
    shift: &[f64],
    mean: &[f64],
    var: &[f64],
    eps: f64,
) -> Result<Tensor4> {
    let [batch, ch, t, f] = x.dims();
    for len in [scale.len(), shift.len(), mean.len(), var.len()] {
        if len != ch {
            return Err(shape_err("batchnorm channels", ch, len));
        }
    }
    let mut out = x.clone();
    for c in 0..ch {
        let k = scale[c] / (var[c] + eps).sqrt();
        let m = mean[c];
        let s = shift[c];
        for b in 0..batch {
            let start = out.idx(b, c, 0, 0);
            for v in &mut out.data[start..start + t * f] {
                *v = (*v - m) * k + s;
            }
        }
    }
    Ok(out)
}

/// Channel-wise PReLU; a single slope is broadcast to all channels.
pub fn prelu(x: &Tensor4, slopes: &[f64]) -> Result<Tensor4> {
    let [batch, ch, t, f] = x.dims();
    if slopes.len() != ch && slopes.len() != 1 {
        return Err(shape_err("prelu slopes", ch, slopes.len()));
    }
    let mut out = x.clone();
    for b in 0..batch {
        for c in 0..ch {
            let a = slopes[if slopes.len() == 1 { 0 } else { c }];
            let start = out.idx(b, c, 0, 0);
            for v in &mut out.data[start..start + t * f] {
                if *v < 0.0 {
                    *v *= a;
                }
            }
        }
    }
    Ok(out)
}

#[inline]
pub fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

pub fn sigmoid_t(x: &Tensor4) -> Tensor4 {
    x.clone().map(sigmoid)
}

pub fn tanh_t(x: &Tensor4) -> Tensor4 {
    x.clone().map(f64::tanh)
}

/// Mean over frequency: `(B, C, T, F) -> (B, C, T, 1)`.
pub fn avgpool_freq(x: &Tensor4) -> Tensor4 {
    let [batch, ch, t, f] = x.dims();
    let mut out = Tensor4::zeros([batch, ch, t, 1]);
    for b in 0..batch {
        for c in 0..ch {
            for tt in 0..t {
                let mean = x.row(b, c, tt).iter().sum::<f64>() / f as f64;
                out.set(b, c, tt, 0, mean);
            }
        }
    }
    out
}

/// Fully-connected layer, weight `[out, in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub in_features: usize,
    pub out_features: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Linear {
    pub fn zeros(in_features: usize, out_features: usize) -> Self {
        Self {
            in_features,
            out_features,
            weight: vec![0.0; in_features * out_features],
            bias: vec![0.0; out_features],
        }
    }

    pub fn forward_into(&self, x: &[f64], out: &mut [f64]) {
        for (o, dst) in out.iter_mut().enumerate() {
            let row = &self.weight[o * self.in_features..(o + 1) * self.in_features];
            *dst = self.bias[o] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }
}

/// Gate weights for one GRU direction, stacked over groups. Gate order
/// within a group is (reset, update, candidate).
///
/// Shapes: `w_ih [G, 3H/G, I/G]`, `w_hh [G, 3H/G, H/G]`, biases `[G, 3H/G]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GruWeights {
    pub w_ih: Vec<f64>,
    pub w_hh: Vec<f64>,
    pub b_ih: Vec<f64>,
    pub b_hh: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Bidirectional,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GruParams {
    pub input_size: usize,
    pub hidden_size: usize,
    pub groups: usize,
    pub direction: Direction,
    pub forward: GruWeights,
    /// Present iff `direction` is bidirectional.
    pub backward: Option<GruWeights>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GruOutput {
    /// `steps x (hidden * directions)`; forward half first.
    pub outputs: Vec<f64>,
    /// `hidden * directions`.
    pub final_state: Vec<f64>,
}

impl GruParams {
    pub fn zeros(
        input_size: usize,
        hidden_size: usize,
        groups: usize,
        direction: Direction,
    ) -> Result<Self> {
        if groups == 0 || !input_size.is_multiple_of(groups) || !hidden_size.is_multiple_of(groups) {
            return Err(Error::InvalidParam(format!(
                "gru sizes {input_size}/{hidden_size} not divisible by {groups} groups"
            )));
        }
        let ig = input_size / groups;
        let hg = hidden_size / groups;
        let w = || GruWeights {
            w_ih: vec![0.0; groups * 3 * hg * ig],
            w_hh: vec![0.0; groups * 3 * hg * hg],
            b_ih: vec![0.0; groups * 3 * hg],
            b_hh: vec![0.0; groups * 3 * hg],
        };
        Ok(Self {
            input_size,
            hidden_size,
            groups,
            direction,
            forward: w(),
            backward: (direction == Direction::Bidirectional).then(w),
        })
    }

    pub fn directions(&self) -> usize {
        match self.direction {
            Direction::Forward => 1,
            Direction::Bidirectional => 2,
        }
    }

    pub fn output_size(&self) -> usize {
        self.hidden_size * self.directions()
    }

    pub fn param_count(&self) -> usize {
        let w = &self.forward;
        (w.w_ih.len() + w.w_hh.len() + w.b_ih.len() + w.b_hh.len()) * self.directions()
    }

    /// Multiply-accumulates per time step (all directions).
    pub fn macs_per_step(&self) -> u64 {
        let ig = self.input_size / self.groups;
        let hg = self.hidden_size / self.groups;
        (self.groups * 3 * hg * (ig + hg) * self.directions()) as u64
    }

    fn check(&self, w: &GruWeights) -> Result<()> {
        let ig = self.input_size / self.groups;
        let hg = self.hidden_size / self.groups;
        let g = self.groups;
        let want = [g * 3 * hg * ig, g * 3 * hg * hg, g * 3 * hg, g * 3 * hg];
        let got = [w.w_ih.len(), w.w_hh.len(), w.b_ih.len(), w.b_hh.len()];
        if want != got {
            return Err(shape_err("gru weights", want, got));
        }
        Ok(())
    }

    /// Runs the recurrence over `steps` input vectors laid out contiguously.
    pub fn forward(&self, x: &[f64], steps: usize, h0: Option<&[f64]>) -> Result<GruOutput> {
        gru_forward(x, steps, self, h0)
    }
}

struct GruScratch {
    gi: Vec<f64>,
    gh: Vec<f64>,
}

/// One grouped GRU step for a single direction, in place on `h`.
fn gru_step(p: &GruParams, w: &GruWeights, x: &[f64], h: &mut [f64], s: &mut GruScratch) {
    let ig = p.input_size / p.groups;
    let hg = p.hidden_size / p.groups;
    for g in 0..p.groups {
        let xg = &x[g * ig..(g + 1) * ig];
        let w_ih = &w.w_ih[g * 3 * hg * ig..(g + 1) * 3 * hg * ig];
        let w_hh = &w.w_hh[g * 3 * hg * hg..(g + 1) * 3 * hg * hg];
        let b_ih = &w.b_ih[g * 3 * hg..(g + 1) * 3 * hg];
        let b_hh = &w.b_hh[g * 3 * hg..(g + 1) * 3 * hg];
        let hgv = &mut h[g * hg..(g + 1) * hg];
        for r in 0..3 * hg {
            let row = &w_ih[r * ig..(r + 1) * ig];
            s.gi[r] = b_ih[r] + row.iter().zip(xg).map(|(a, b)| a * b).sum::<f64>();
            let row = &w_hh[r * hg..(r + 1) * hg];
            s.gh[r] = b_hh[r] + row.iter().zip(hgv.iter()).map(|(a, b)| a * b).sum::<f64>();
        }
        for k in 0..hg {
            let r = sigmoid(s.gi[k] + s.gh[k]);
            let z = sigmoid(s.gi[hg + k] + s.gh[hg + k]);
            let n = (s.gi[2 * hg + k] + r * s.gh[2 * hg + k]).tanh();
            hgv[k] = (1.0 - z) * n + z * hgv[k];
        }
    }
}

/// Standard GRU recurrence
/// `h' = (1 - z) * tanh(W_in x + b_in + r * (W_hn h + b_hn)) + z * h`,
/// run independently on each channel group.
pub fn gru_forward(
    x: &[f64],
    steps: usize,
    p: &GruParams,
    h0: Option<&[f64]>,
) -> Result<GruOutput> {
    if x.len() != steps * p.input_size {
        return Err(shape_err("gru input", steps * p.input_size, x.len()));
    }
    p.check(&p.forward)?;
    let hs = p.hidden_size;
    let dirs = p.directions();
    if let Some(h0) = h0 {
        if h0.len() != hs * dirs {
            return Err(shape_err("gru h0", hs * dirs, h0.len()));
        }
    }
    let width = hs * dirs;
    let mut outputs = vec![0.0; steps * width];
    let mut final_state = vec![0.0; width];
    let hg = hs / p.groups;
    let mut scratch = GruScratch {
        gi: vec![0.0; 3 * hg],
        gh: vec![0.0; 3 * hg],
    };

    let mut h: Vec<f64> = h0.map_or_else(|| vec![0.0; hs], |v| v[..hs].to_vec());
    for t in 0..steps {
        gru_step(p, &p.forward, &x[t * p.input_size..(t + 1) * p.input_size], &mut h, &mut scratch);
        outputs[t * width..t * width + hs].copy_from_slice(&h);
    }
    final_state[..hs].copy_from_slice(&h);

    if let Some(bw) = &p.backward {
        p.check(bw)?;
        let mut h: Vec<f64> = h0.map_or_else(|| vec![0.0; hs], |v| v[hs..].to_vec());
        for t in (0..steps).rev() {
            gru_step(p, bw, &x[t * p.input_size..(t + 1) * p.input_size], &mut h, &mut scratch);
            outputs[t * width + hs..(t + 1) * width].copy_from_slice(&h);
        }
        final_state[hs..].copy_from_slice(&h);
    }
    Ok(GruOutput {
        outputs,
        final_state,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    fn rand_tensor(rng: &mut ChaCha8Rng, dims: [usize; 4]) -> Tensor4 {
        Tensor4::from_vec(dims, rand_vec(rng, dims.iter().product())).unwrap()
    }

    fn rand_conv(
        rng: &mut ChaCha8Rng,
        in_ch: usize,
        out_ch: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
        groups: usize,
        transposed: bool,
        pad_f: usize,
    ) -> ConvParams {
        let mut p = ConvParams::new(in_ch, out_ch, kernel, stride, groups, transposed, pad_f).unwrap();
        p.weight = rand_vec(rng, p.weight.len());
        p.bias = rand_vec(rng, out_ch);
        p
    }

    fn assert_close(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= tol, "{x} vs {y}");
        }
    }

    #[test]
    fn pointwise_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = rand_tensor(&mut rng, [1, 2, 3, 4]);
        let mut p = ConvParams::new(2, 2, (1, 1), (1, 1), 1, false, 0).unwrap();
        p.weight = vec![1.0, 0.0, 0.0, 1.0];
        assert_eq!(conv2d(&x, &p).unwrap(), x);
    }

    #[test]
    fn strided_freq_shape() {
        let p = ConvParams::new(1, 1, (1, 5), (1, 2), 1, false, 2).unwrap();
        assert_eq!(p.output_size(10, 129).unwrap(), (10, 65));
        assert_eq!(p.output_size(10, 65).unwrap(), (10, 33));
        assert_eq!(p.output_size(10, 257).unwrap(), (10, 129));
        let d = ConvParams::new(1, 1, (1, 5), (1, 2), 1, true, 2).unwrap();
        assert_eq!(d.output_size(10, 65).unwrap(), (10, 129));
        assert_eq!(d.output_size(10, 33).unwrap(), (10, 65));
        assert_eq!(d.output_size(10, 129).unwrap(), (10, 257));
    }

    #[test]
    fn conv_matches_naive_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cases = [
            (2, 4, (3, 3), (1, 1), 1, 1),
            (4, 4, (3, 3), (1, 1), 4, 1),
            (3, 2, (1, 5), (1, 2), 1, 2),
            (4, 2, (2, 3), (2, 1), 2, 0),
        ];
        for (ci, co, k, s, g, pf) in cases {
            let x = rand_tensor(&mut rng, [2, ci, 6, 8]);
            let p = rand_conv(&mut rng, ci, co, k, s, g, false, pf);
            let got = conv2d(&x, &p).unwrap();
            let want = reference::conv2d(&x, &p);
            assert_eq!(got.dims(), want.dims());
            assert_close(got.data(), want.data(), 1e-10);
        }
    }

    #[test]
    fn deconv_matches_naive_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for (ci, co, k, s, g, pf) in [(2, 3, (1, 5), (1, 2), 1, 2), (4, 4, (2, 3), (1, 2), 2, 1)] {
            let x = rand_tensor(&mut rng, [2, ci, 5, 7]);
            let p = rand_conv(&mut rng, ci, co, k, s, g, true, pf);
            let got = deconv2d(&x, &p).unwrap();
            let want = reference::deconv2d(&x, &p);
            assert_eq!(got.dims(), want.dims());
            assert_close(got.data(), want.data(), 1e-10);
        }
    }

    #[test]
    fn deconv_identity_kernel_upsamples() {
        // single centre tap: zero-stuffed upsampling
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = rand_tensor(&mut rng, [1, 1, 2, 5]);
        let mut p = ConvParams::new(1, 1, (1, 5), (1, 2), 1, true, 2).unwrap();
        p.weight[2] = 1.0;
        let y = deconv2d(&x, &p).unwrap();
        assert_eq!(y.dims(), [1, 1, 2, 9]);
        for t in 0..2 {
            for f in 0..9 {
                let want = if f % 2 == 0 { x.get(0, 0, t, f / 2) } else { 0.0 };
                assert!((y.get(0, 0, t, f) - want).abs() < 1e-10);
            }
        }
        // all-ones kernel: each output sums the inputs whose footprint covers it
        p.weight = vec![1.0; 5];
        let y = deconv2d(&x, &p).unwrap();
        for f in 0..9isize {
            let want: f64 = (0..5isize)
                .filter(|fi| (f - 2 * fi).abs() <= 2)
                .map(|fi| x.get(0, 0, 1, fi as usize))
                .sum();
            assert!((y.get(0, 0, 1, f as usize) - want).abs() < 1e-10);
        }
    }

    #[test]
    fn deconv_zero_input_gives_bias() {
        let mut p = ConvParams::new(2, 3, (1, 5), (1, 2), 1, true, 2).unwrap();
        p.weight.iter_mut().for_each(|w| *w = 0.7);
        p.bias = vec![0.0, 1.5, -2.0];
        let y = deconv2d(&Tensor4::zeros([1, 2, 3, 33]), &p).unwrap();
        for c in 0..3 {
            assert!(y.row(0, c, 2).iter().all(|v| *v == p.bias[c]));
        }
    }

    #[test]
    fn causal_conv_ignores_future() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = rand_tensor(&mut rng, [1, 3, 6, 8]);
        let conv = rand_conv(&mut rng, 3, 2, (3, 3), (1, 1), 1, false, 1);
        let deconv = rand_conv(&mut rng, 3, 2, (2, 3), (1, 2), 1, true, 1);
        let mut y = x.clone();
        for f in 0..8 {
            for c in 0..3 {
                y.set(0, c, 4, f, 9.0);
                y.set(0, c, 5, f, -9.0);
            }
        }
        for p in [conv, deconv] {
            let a = conv2d(&x, &p).unwrap();
            let b = conv2d(&y, &p).unwrap();
            for c in 0..2 {
                for t in 0..4 {
                    assert_eq!(a.row(0, c, t), b.row(0, c, t));
                }
            }
        }
    }

    #[test]
    fn depthwise_is_per_channel() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = rand_tensor(&mut rng, [1, 3, 5, 6]);
        let p = rand_conv(&mut rng, 3, 3, (3, 3), (1, 1), 3, false, 1);
        let y = conv2d(&x, &p).unwrap();
        for c in 0..3 {
            let xc = Tensor4::from_fn([1, 1, 5, 6], |_, _, t, f| x.get(0, c, t, f));
            let mut pc = ConvParams::new(1, 1, (3, 3), (1, 1), 1, false, 1).unwrap();
            pc.weight = p.weight[c * 9..(c + 1) * 9].to_vec();
            pc.bias = vec![p.bias[c]];
            let yc = conv2d(&xc, &pc).unwrap();
            for t in 0..5 {
                assert_close(y.row(0, c, t), yc.row(0, 0, t), 1e-12);
            }
        }
    }

    #[test]
    fn conv_rejects_bad_shapes() {
        assert!(ConvParams::new(3, 4, (1, 1), (1, 1), 2, false, 0).is_err());
        let p = ConvParams::new(2, 2, (1, 1), (1, 1), 1, false, 0).unwrap();
        assert!(conv2d(&Tensor4::zeros([1, 3, 2, 2]), &p).is_err());
        assert!(deconv2d(&Tensor4::zeros([1, 2, 2, 2]), &p).is_err());
    }

    #[test]
    fn gru_zero_weights_zero_output() {
        let p = GruParams::zeros(4, 6, 2, Direction::Bidirectional).unwrap();
        let x = vec![0.3; 5 * 4];
        let out = p.forward(&x, 5, None).unwrap();
        assert_eq!(out.outputs.len(), 5 * 12);
        assert!(out.outputs.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn gru_single_step_closed_form() {
        let mut p = GruParams::zeros(1, 1, 1, Direction::Forward).unwrap();
        // r, z, n rows
        p.forward.w_ih = vec![0.0, 0.5, 2.0];
        p.forward.b_ih = vec![0.0, 0.1, -0.3];
        p.forward.b_hh = vec![0.0, 0.0, 0.4];
        let x = 0.8;
        let out = p.forward(&[x], 1, None).unwrap();
        // h0 = 0: r irrelevant except through r * b_hn, r = sigmoid(0) = 0.5
        let z = 1.0 / (1.0 + (-(0.5 * x + 0.1f64)).exp());
        let n = (2.0 * x - 0.3 + 0.5 * 0.4f64).tanh();
        let h1 = (1.0 - z) * n;
        assert!((out.outputs[0] - h1).abs() < 1e-15);
        assert_eq!(out.final_state, vec![out.outputs[0]]);
    }

    #[test]
    fn grouped_gru_is_two_independent_grus() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut p = GruParams::zeros(6, 4, 2, Direction::Bidirectional).unwrap();
        for w in [&mut p.forward, p.backward.as_mut().unwrap()] {
            w.w_ih = rand_vec(&mut rng, w.w_ih.len());
            w.w_hh = rand_vec(&mut rng, w.w_hh.len());
            w.b_ih = rand_vec(&mut rng, w.b_ih.len());
            w.b_hh = rand_vec(&mut rng, w.b_hh.len());
        }
        let steps = 5;
        let x = rand_vec(&mut rng, steps * 6);
        let full = p.forward(&x, steps, None).unwrap();

        let split = |g: usize, w: &GruWeights| GruWeights {
            w_ih: w.w_ih[g * 18..(g + 1) * 18].to_vec(),
            w_hh: w.w_hh[g * 12..(g + 1) * 12].to_vec(),
            b_ih: w.b_ih[g * 6..(g + 1) * 6].to_vec(),
            b_hh: w.b_hh[g * 6..(g + 1) * 6].to_vec(),
        };
        for g in 0..2 {
            let mut q = GruParams::zeros(3, 2, 1, Direction::Bidirectional).unwrap();
            q.forward = split(g, &p.forward);
            q.backward = Some(split(g, p.backward.as_ref().unwrap()));
            let xg: Vec<f64> = (0..steps)
                .flat_map(|t| x[t * 6 + g * 3..t * 6 + g * 3 + 3].to_vec())
                .collect();
            let part = q.forward(&xg, steps, None).unwrap();
            for t in 0..steps {
                for k in 0..2 {
                    let fwd = full.outputs[t * 8 + g * 2 + k];
                    let bwd = full.outputs[t * 8 + 4 + g * 2 + k];
                    assert!((fwd - part.outputs[t * 4 + k]).abs() < 1e-12);
                    assert!((bwd - part.outputs[t * 4 + 2 + k]).abs() < 1e-12);
                }
            }
        }
        // and against the scalar reference
        let want = reference::gru(&x, steps, &p);
        assert_close(&full.outputs, &want, 1e-12);
    }

    #[test]
    fn batchnorm_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = rand_tensor(&mut rng, [2, 3, 4, 5]);
        let bn = BatchNorm {
            eps: 0.0,
            ..BatchNorm::identity(3)
        };
        assert_eq!(bn.forward(&x).unwrap(), x);
        let flat = batchnorm_infer(&x, &[0.0; 3], &[1.0, 2.0, 3.0], &[0.5; 3], &[2.0; 3], 1e-5).unwrap();
        assert!(flat.row(1, 2, 3).iter().all(|v| *v == 3.0));

        let scale = rand_vec(&mut rng, 3);
        let shift = rand_vec(&mut rng, 3);
        let mean = rand_vec(&mut rng, 3);
        let var: Vec<f64> = rand_vec(&mut rng, 3).iter().map(|v| v.abs() + 0.1).collect();
        let got = batchnorm_infer(&x, &scale, &shift, &mean, &var, 1e-5).unwrap();
        let want = Tensor4::from_fn(x.dims(), |b, c, t, f| {
            (x.get(b, c, t, f) - mean[c]) / (var[c] + 1e-5).sqrt() * scale[c] + shift[c]
        });
        assert_close(got.data(), want.data(), 1e-12);
        assert!(batchnorm_infer(&x, &[1.0], &shift, &mean, &var, 1e-5).is_err());
    }

    #[test]
    fn activations() {
        assert_eq!(sigmoid(0.0), 0.5);
        let x = Tensor4::from_vec([1, 2, 1, 2], vec![1.0, -2.0, 0.0, -4.0]).unwrap();
        let y = prelu(&x, &[0.25, 0.5]).unwrap();
        assert_eq!(y.data(), &[1.0, -0.5, 0.0, -2.0]);
        let c = Tensor4::from_fn([1, 2, 3, 7], |_, c, _, _| c as f64 + 0.5);
        let pooled = avgpool_freq(&c);
        assert_eq!(pooled.dims(), [1, 2, 3, 1]);
        assert!((pooled.get(0, 1, 2, 0) - 1.5).abs() < 1e-15);
        assert!(tanh_t(&x).data().iter().all(|v| v.abs() < 1.0));
    }
}
