//! Naive scalar-loop reference implementations.
//!
//! These are deliberately written without sharing code with the fast paths
//! (explicit padding, gather instead of scatter, complex arithmetic through
//! `num_complex`) and are used as oracles by the test suites and by
//! `hdfnet verify`.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;

use crate::filtering::FilterCoeffs;
use crate::nn::{ConvParams, GruParams, GruWeights, Tensor4};
use crate::spectral::ComplexSpectrogram;

/// Direct-summation DFT of a real sequence; returns all `n` bins.
pub fn dft(x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = x.len();
    let mut re = vec![0.0; n];
    let mut im = vec![0.0; n];
    for k in 0..n {
        for (m, v) in x.iter().enumerate() {
            let a = -2.0 * PI * ((k * m) % n) as f64 / n as f64;
            re[k] += v * a.cos();
            im[k] += v * a.sin();
        }
    }
    (re, im)
}

/// Direct inverse DFT of a full spectrum, real part only.
pub fn idft_real(re: &[f64], im: &[f64]) -> Vec<f64> {
    let n = re.len();
    (0..n)
        .map(|m| {
            let mut acc = 0.0;
            for k in 0..n {
                let a = 2.0 * PI * ((k * m) % n) as f64 / n as f64;
                acc += re[k] * a.cos() - im[k] * a.sin();
            }
            acc / n as f64
        })
        .collect()
}

/// Relative L2 error `||a - b|| / ||b||`.
pub fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

/// Compressed bin via polar form.
pub fn compress_bin(re: f64, im: f64, c: f64) -> (f64, f64) {
    let v = Complex64::new(re, im);
    if v.norm() == 0.0 {
        return (0.0, 0.0);
    }
    let out = Complex64::from_polar(v.norm().powf(c), v.arg());
    (out.re, out.im)
}

fn coeff(c: &FilterCoeffs, t: usize, f: usize, i: usize, j: isize) -> Complex64 {
    let halfwidth = c.spec.freq_halfwidth as isize;
    let n = i * (2 * c.spec.freq_halfwidth + 1) + (j + halfwidth) as usize;
    let taps = c.spec.taps();
    let k = (t * c.bins() + f) * taps + n;
    Complex64::new(c.re[k], c.im[k])
}

/// Quadruple loop over `(t, f, i, j)` of the general deep filter.
pub fn deep_filter(x: &ComplexSpectrogram, c: &FilterCoeffs) -> ComplexSpectrogram {
    let (frames, bins) = x.shape();
    let lags = c.spec.temporal_taps;
    let hw = c.spec.freq_halfwidth as isize;
    let mut out = ComplexSpectrogram::zeros(frames, bins);
    for t in 0..frames {
        for f in 0..bins {
            let mut acc = Complex64::new(0.0, 0.0);
            for i in 0..lags {
                for j in -hw..=hw {
                    let ts = t as isize - i as isize;
                    let fs = f as isize - j;
                    if ts < 0 || fs < 0 || fs >= bins as isize {
                        continue;
                    }
                    acc += coeff(c, t, f, i, j) * x.get(ts as usize, fs as usize);
                }
            }
            out.set(t, f, acc);
        }
    }
    out
}

/// Dense matrix applied along frequency: `out[.., r] = sum_k m[r][k] x[.., k]`.
pub fn matmul_freq(x: &Tensor4, m: &[Vec<f64>]) -> Tensor4 {
    let [b, c, t, _] = x.dims();
    let rows = m.len();
    let mut out = Tensor4::zeros([b, c, t, rows]);
    for bb in 0..b {
        for cc in 0..c {
            for tt in 0..t {
                for (r, row) in m.iter().enumerate() {
                    let mut acc = 0.0;
                    for (k, w) in row.iter().enumerate() {
                        acc += w * x.get(bb, cc, tt, k);
                    }
                    out.set(bb, cc, tt, r, acc);
                }
            }
        }
    }
    out
}

/// Convolution over an explicitly padded copy of the input.
pub fn conv2d(x: &Tensor4, p: &ConvParams) -> Tensor4 {
    let [batch, cin, t_in, f_in] = x.dims();
    let (kt, kf) = p.kernel;
    let (st, sf) = p.stride;
    let pt = kt - 1;
    let pf = p.pad_f;
    let tp = t_in + pt;
    let fp = f_in + 2 * pf;
    let padded = Tensor4::from_fn([batch, cin, tp, fp], |b, c, t, f| {
        if t >= pt && f >= pf && f < pf + f_in {
            x.get(b, c, t - pt, f - pf)
        } else {
            0.0
        }
    });
    let t_out = (tp - kt) / st + 1;
    let f_out = (fp - kf) / sf + 1;
    let in_g = p.in_ch / p.groups;
    let out_g = p.out_ch / p.groups;
    Tensor4::from_fn([batch, p.out_ch, t_out, f_out], |b, oc, to, fo| {
        let g = oc / out_g;
        let mut acc = p.bias[oc];
        for icl in 0..in_g {
            for ki in 0..kt {
                for kj in 0..kf {
                    let w = p.weight[((oc * in_g + icl) * kt + ki) * kf + kj];
                    acc += w * padded.get(b, g * in_g + icl, to * st + ki, fo * sf + kj);
                }
            }
        }
        acc
    })
}

/// Transposed convolution written as a gather over contributing inputs.
pub fn deconv2d(x: &Tensor4, p: &ConvParams) -> Tensor4 {
    let [batch, _, t_in, f_in] = x.dims();
    let (kt, kf) = p.kernel;
    let (st, sf) = p.stride;
    let t_out = (t_in - 1) * st + 1;
    let f_out = (f_in - 1) * sf + kf - 2 * p.pad_f;
    let in_g = p.in_ch / p.groups;
    let out_g = p.out_ch / p.groups;
    Tensor4::from_fn([batch, p.out_ch, t_out, f_out], |b, oc, to, fo| {
        let g = oc / out_g;
        let ocl = oc % out_g;
        let mut acc = p.bias[oc];
        for icl in 0..in_g {
            let ic = g * in_g + icl;
            for ki in 0..kt {
                if to < ki || (to - ki) % st != 0 || (to - ki) / st >= t_in {
                    continue;
                }
                let ti = (to - ki) / st;
                for kj in 0..kf {
                    let num = fo as isize + p.pad_f as isize - kj as isize;
                    if num < 0 || num % sf as isize != 0 || (num / sf as isize) >= f_in as isize {
                        continue;
                    }
                    let fi = (num / sf as isize) as usize;
                    let w = p.weight[((ic * out_g + ocl) * kt + ki) * kf + kj];
                    acc += w * x.get(b, ic, ti, fi);
                }
            }
        }
        acc
    })
}

fn sig(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

fn gru_dir(x: &[f64], steps: usize, p: &GruParams, w: &GruWeights, rev: bool) -> Vec<Vec<f64>> {
    let hs = p.hidden_size;
    let ig = p.input_size / p.groups;
    let hg = hs / p.groups;
    let mut h = vec![0.0; hs];
    let mut out = vec![Vec::new(); steps];
    let order: Vec<usize> = if rev { (0..steps).rev().collect() } else { (0..steps).collect() };
    for t in order {
        let xt = &x[t * p.input_size..(t + 1) * p.input_size];
        let mut next = vec![0.0; hs];
        for u in 0..hs {
            let g = u / hg;
            let k = u % hg;
            let gate = |which: usize, use_h: bool| -> (f64, f64) {
                let row = g * 3 * hg + which * hg + k;
                let mut a = w.b_ih[row];
                for m in 0..ig {
                    a += w.w_ih[row * ig + m] * xt[g * ig + m];
                }
                let mut b = w.b_hh[row];
                if use_h {
                    for m in 0..hg {
                        b += w.w_hh[row * hg + m] * h[g * hg + m];
                    }
                }
                (a, b)
            };
            let (ri, rh) = gate(0, true);
            let (zi, zh) = gate(1, true);
            let (ni, nh) = gate(2, true);
            let r = sig(ri + rh);
            let z = sig(zi + zh);
            let n = (ni + r * nh).tanh();
            next[u] = (1.0 - z) * n + z * h[u];
        }
        h = next;
        out[t] = h.clone();
    }
    out
}

/// Per-unit scalar GRU; output rows are `[forward, backward]`.
pub fn gru(x: &[f64], steps: usize, p: &GruParams) -> Vec<f64> {
    let fwd = gru_dir(x, steps, p, &p.forward, false);
    let bwd = p.backward.as_ref().map(|w| gru_dir(x, steps, p, w, true));
    let mut out = Vec::new();
    for t in 0..steps {
        out.extend_from_slice(&fwd[t]);
        if let Some(b) = &bwd {
            out.extend_from_slice(&b[t]);
        }
    }
    out
}

/// `mean((|S|^c - |S~|^c)^2)` over all bins.
pub fn mag_loss(s: &ComplexSpectrogram, est: &ComplexSpectrogram, c: f64) -> f64 {
    let n = s.re.len();
    let mut acc = 0.0;
    for k in 0..n {
        let a = Complex64::new(s.re[k], s.im[k]).norm().powf(c);
        let b = Complex64::new(est.re[k], est.im[k]).norm().powf(c);
        acc += (a - b) * (a - b);
    }
    acc / n as f64
}

/// MSE of compressed real parts plus MSE of compressed imaginary parts.
pub fn comp_loss(s: &ComplexSpectrogram, est: &ComplexSpectrogram, c: f64) -> f64 {
    let n = s.re.len();
    let (mut re_acc, mut im_acc) = (0.0, 0.0);
    for k in 0..n {
        let (ar, ai) = compress_bin(s.re[k], s.im[k], c);
        let (br, bi) = compress_bin(est.re[k], est.im[k], c);
        re_acc += (ar - br).powi(2);
        im_acc += (ai - bi).powi(2);
    }
    re_acc / n as f64 + im_acc / n as f64
}
