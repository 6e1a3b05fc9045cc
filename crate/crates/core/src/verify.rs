//! Self-check suite: implementations against the naive oracles in
//! [`crate::reference`], structural budgets and end-to-end properties.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::erb::{erb_analyze, erb_synthesize, ErbFilterbank};
use crate::error::Result;
use crate::filtering::{self, comb_coeffs, FilterCoeffs, FilterSpec};
use crate::loss::{self, LossConfig};
use crate::model::{macs_per_second, param_count, HdfNet, ModelConfig, WeightBundle};
use crate::nn::Tensor4;
use crate::reference;
use crate::spectral::{istft_to_len, stft, ComplexSpectrogram, StftParams, Waveform, SAMPLE_RATE};

pub const PARAM_BAND: (f64, f64) = (0.10e6, 0.40e6);
pub const MACS_BAND: (f64, f64) = (0.2e9, 0.9e9);
pub const ORACLE_TOL: f64 = 1e-12;
pub const STFT_TOL: f64 = 1e-6;
pub const ERB_SMOOTH_TOL: f64 = 0.05;
pub const COMB_MIN_GAIN_DB: f64 = 5.0;

/// Outcome of one check.
#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
}

fn timed(name: &'static str, f: impl FnOnce() -> Result<(bool, String)>) -> Check {
    let start = Instant::now();
    let (passed, detail) = match f() {
        Ok(r) => r,
        Err(e) => (false, format!("error: {e}")),
    };
    Check {
        name,
        passed,
        detail,
        elapsed: start.elapsed(),
    }
}

pub fn random_spectrogram(rng: &mut ChaCha8Rng, frames: usize, bins: usize) -> ComplexSpectrogram {
    let n = frames * bins;
    let re = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let im = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    ComplexSpectrogram::from_parts(frames, bins, re, im).expect("sizes match")
}

fn random_coeffs(rng: &mut ChaCha8Rng, frames: usize, bins: usize, spec: FilterSpec) -> FilterCoeffs {
    let n = frames * bins * spec.taps();
    let re = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let im = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    FilterCoeffs::from_parts(frames, bins, spec, re, im).expect("sizes match")
}

pub fn max_abs_diff(a: &ComplexSpectrogram, b: &ComplexSpectrogram) -> f64 {
    if a.shape() != b.shape() {
        return f64::INFINITY;
    }
    a.re.iter()
        .zip(&b.re)
        .chain(a.im.iter().zip(&b.im))
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub fn param_budget() -> Check {
    timed("param_count", || {
        let n = param_count(&ModelConfig::default())? as f64;
        Ok((
            (PARAM_BAND.0..=PARAM_BAND.1).contains(&n),
            format!("params_total={n} band=[{}, {}]", PARAM_BAND.0, PARAM_BAND.1),
        ))
    })
}

pub fn mac_budget() -> Check {
    timed("macs_per_second", || {
        let m = macs_per_second(&ModelConfig::default(), &StftParams::default())?;
        Ok((
            (MACS_BAND.0..=MACS_BAND.1).contains(&m),
            format!("macs_per_second={:.4e} band=[{:e}, {:e}]", m, MACS_BAND.0, MACS_BAND.1),
        ))
    })
}

/// Every filter mode against the quadruple-loop oracle on random small
/// instances, plus the reductions of the general filter to TDF (no
/// frequency offsets), FDF (one lag) and CRM (both).
pub fn filtering_oracles(instances: usize, seed: u64) -> Check {
    timed("filtering_oracles", || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst = 0.0f64;
        for _ in 0..instances {
            let frames = rng.gen_range(1..9);
            let bins = rng.gen_range(1..12);
            let lags = rng.gen_range(1..6);
            let hw = rng.gen_range(0..4);
            let x = random_spectrogram(&mut rng, frames, bins);
            for spec in [
                FilterSpec::df(lags, hw)?,
                FilterSpec::tdf(lags)?,
                FilterSpec::fdf(hw)?,
                FilterSpec::crm(),
            ] {
                let c = random_coeffs(&mut rng, frames, bins, spec);
                let oracle = reference::deep_filter(&x, &c);
                worst = worst.max(max_abs_diff(&filtering::apply(&x, &c)?, &oracle));
                // reduction: same taps through the general filter
                worst = worst.max(max_abs_diff(&filtering::apply_df(&x, &c.as_df())?, &oracle));
            }
        }
        Ok((
            worst <= ORACLE_TOL,
            format!("instances={instances} max_abs_err={worst:.3e} tol={ORACLE_TOL:e}"),
        ))
    })
}

/// Frames strictly before `t0` of `a` and `b` are bit-identical.
fn past_identical(a: &ComplexSpectrogram, b: &ComplexSpectrogram, t0: usize) -> bool {
    let n = t0 * a.bins();
    a.re[..n].iter().zip(&b.re[..n]).all(|(x, y)| x.to_bits() == y.to_bits())
        && a.im[..n].iter().zip(&b.im[..n]).all(|(x, y)| x.to_bits() == y.to_bits())
}

/// Perturbs frames `t0..` of a random input and checks that every earlier
/// output frame is bit-identical. Returns whether the probe passed.
pub fn causality_probe(net: &HdfNet, rng: &mut ChaCha8Rng, frames: usize) -> Result<bool> {
    let x = random_spectrogram(rng, frames, net.config.n_bins);
    let base = net.enhance(&x)?.output;
    if !base.is_finite() {
        return Ok(false);
    }
    let t0 = rng.gen_range(1..frames);
    let mut y = x.clone();
    for t in t0..frames {
        for f in 0..y.bins() {
            let i = y.idx(t, f);
            y.re[i] += rng.gen_range(-2.0..2.0);
            y.im[i] += rng.gen_range(-2.0..2.0);
        }
    }
    let out = net.enhance(&y)?.output;
    Ok(past_identical(&base, &out, t0))
}

pub fn causality(draws: usize, frames: usize, seed: u64) -> Check {
    timed("causality", || {
        let cfg = ModelConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut failed = 0;
        for _ in 0..draws {
            let w = WeightBundle::random(&cfg, rng.gen())?;
            let net = HdfNet::new(&cfg, &w)?;
            if !causality_probe(&net, &mut rng, frames)? {
                failed += 1;
            }
        }
        Ok((failed == 0, format!("draws={draws} frames={frames} violations={failed}")))
    })
}

/// STFT round trip on the interior, exact transparency of the low bands
/// through the ERB filterbank, and smooth-envelope ERB round trip.
pub fn stft_erb(seed: u64) -> Check {
    timed("stft_erb", || {
        let p = StftParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let len = SAMPLE_RATE as usize;
        let w = Waveform::new((0..len).map(|_| rng.gen_range(-1.0..1.0)).collect(), SAMPLE_RATE)?;
        let back = istft_to_len(&stft(&w, &p)?, &p, len)?;
        let edge = p.window_len;
        let stft_err = w.samples[edge..len - edge]
            .iter()
            .zip(&back.samples[edge..len - edge])
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);

        let fb = ErbFilterbank::standard();
        let m = Tensor4::from_fn([1, 2, 3, fb.n_linear()], |_, _, _, _| rng.gen_range(-1.0..1.0));
        let rt = erb_synthesize(&erb_analyze(&m, &fb)?, &fb)?;
        let low = fb.n_low_kept();
        let transparent = (0..2).all(|c| {
            (0..3).all(|t| rt.row(0, c, t)[..low] == m.row(0, c, t)[..low])
        });

        let mut smooth_err = 0.0f64;
        for order in 1..=3 {
            let env = Tensor4::from_fn([1, 1, 1, fb.n_linear()], |_, _, _, f| {
                1.0 + 0.5 * (std::f64::consts::PI * order as f64 * f as f64 / 256.0).cos()
            });
            let rt = erb_synthesize(&erb_analyze(&env, &fb)?, &fb)?;
            smooth_err = smooth_err.max(reference::rel_l2(rt.data(), env.data()));
        }
        Ok((
            stft_err <= STFT_TOL && transparent && smooth_err <= ERB_SMOOTH_TOL,
            format!(
                "stft_max_err={stft_err:.3e} low_bands_exact={transparent} erb_smooth_rel_l2={smooth_err:.4}"
            ),
        ))
    })
}

/// Per-bin SNR gain, in dB, of a comb filter with `n_taps` taps spaced
/// `period` frames apart on a clean signal repeating every `period` frames
/// plus white noise. Averaged over bins carrying clean energy, interior
/// frames only.
pub fn comb_gain_db(period: usize, n_taps: usize, seed: u64) -> Result<f64> {
    let p = StftParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len = 4 * SAMPLE_RATE as usize;
    // fundamental with one cycle per `period` hops
    let f0 = SAMPLE_RATE as f64 / (period * p.hop) as f64;
    let harmonics: Vec<(f64, f64)> = (1..)
        .map(|k| k as f64 * f0)
        .take_while(|f| *f < 4000.0)
        .map(|f| (f, rng.gen_range(0.0..std::f64::consts::TAU)))
        .collect();
    let clean: Vec<f64> = (0..len)
        .map(|n| {
            let t = n as f64 / SAMPLE_RATE as f64;
            harmonics
                .iter()
                .enumerate()
                .map(|(k, (f, ph))| (std::f64::consts::TAU * f * t + ph).sin() / (1 + k) as f64)
                .sum::<f64>()
                * 0.1
        })
        .collect();
    let noise: Vec<f64> = (0..len).map(|_| rng.gen_range(-0.1..0.1)).collect();
    let s = stft(&Waveform::new(clean, SAMPLE_RATE)?, &p)?;
    let nspec = stft(&Waveform::new(noise, SAMPLE_RATE)?, &p)?;
    let x = s.add(&nspec)?;
    let c = comb_coeffs(x.frames(), x.bins(), period, n_taps)?;
    let y = filtering::apply(&x, &c)?;

    let (frames, bins) = x.shape();
    let span = (n_taps - 1) * period;
    let interior = span + 2..frames - 2;
    let energy = |a: &ComplexSpectrogram, b: Option<&ComplexSpectrogram>, f: usize| -> f64 {
        interior
            .clone()
            .map(|t| {
                let v = a.get(t, f) - b.map_or(Default::default(), |b| b.get(t, f));
                v.norm_sqr()
            })
            .sum()
    };
    let clean_e: Vec<f64> = (0..bins).map(|f| energy(&s, None, f)).collect();
    let peak = clean_e.iter().cloned().fold(0.0, f64::max);
    let mut gains = Vec::new();
    for f in 0..bins {
        if clean_e[f] < 1e-3 * peak {
            continue;
        }
        let before = energy(&x, Some(&s), f);
        let after = energy(&y, Some(&s), f);
        gains.push(10.0 * (before / after).log10());
    }
    Ok(gains.iter().sum::<f64>() / gains.len() as f64)
}

pub fn comb_demo(seed: u64) -> Check {
    timed("comb_filter", || {
        let adjacent = comb_gain_db(1, 5, seed)?;
        let spaced = comb_gain_db(2, 5, seed + 1)?;
        Ok((
            adjacent >= COMB_MIN_GAIN_DB && spaced >= COMB_MIN_GAIN_DB,
            format!("gain_db_period1={adjacent:.2} gain_db_period2={spaced:.2} min={COMB_MIN_GAIN_DB}"),
        ))
    })
}

/// The six two-stage mode pairs and the single-stage general filter all
/// build, produce finite output of the input shape, and pass a causality probe.
pub fn mode_grid(frames: usize, seed: u64) -> Check {
    timed("mode_grid", || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut configs: Vec<ModelConfig> = ModelConfig::mode_grid()
            .into_iter()
            .map(|(a, b)| ModelConfig::with_modes(a, b))
            .collect();
        configs.push(ModelConfig::single_stage_df());
        let mut failures = Vec::new();
        for cfg in &configs {
            let label = if cfg.single_stage {
                "single-df".to_string()
            } else {
                format!("{}+{}", cfg.stage1_mode.as_str(), cfg.stage2_mode.as_str())
            };
            let net = HdfNet::new(cfg, &WeightBundle::random(cfg, rng.gen())?)?;
            let x = random_spectrogram(&mut rng, frames, cfg.n_bins);
            let out = net.enhance(&x)?.output;
            let ok = out.shape() == x.shape() && out.is_finite() && causality_probe(&net, &mut rng, frames)?;
            if !ok {
                failures.push(label);
            }
        }
        Ok((
            failures.is_empty(),
            format!("configs={} failed=[{}]", configs.len(), failures.join(",")),
        ))
    })
}

/// Losses against scalar oracles, zero at equality, and the weighted sum.
pub fn loss_suite(instances: usize, seed: u64) -> Check {
    timed("loss", || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = LossConfig::default();
        let mut worst = 0.0f64;
        let mut zero_ok = true;
        for _ in 0..instances {
            let frames = rng.gen_range(1..10);
            let bins = rng.gen_range(1..20);
            let s = random_spectrogram(&mut rng, frames, bins);
            let e = random_spectrogram(&mut rng, frames, bins);
            let m = loss::mag_loss(&s, &e, cfg.c)?;
            let c = loss::comp_loss(&s, &e, cfg.c)?;
            let t = loss::total_loss(&s, &e, &cfg)?;
            let (om, oc) = (
                reference::mag_loss(&s, &e, cfg.c),
                reference::comp_loss(&s, &e, cfg.c),
            );
            worst = worst
                .max((m - om).abs())
                .max((c - oc).abs())
                .max((t - (cfg.alpha * om + cfg.beta * oc)).abs());
            zero_ok &= loss::total_loss(&s, &s, &cfg)? == 0.0;
        }
        Ok((
            worst <= ORACLE_TOL && zero_ok,
            format!("instances={instances} max_abs_err={worst:.3e} zero_at_equality={zero_ok}"),
        ))
    })
}

/// The full suite with default sizes.
pub fn run_all() -> Vec<Check> {
    vec![
        param_budget(),
        mac_budget(),
        filtering_oracles(100, 11),
        causality(20, 8, 12),
        stft_erb(13),
        comb_demo(14),
        mode_grid(8, 15),
        loss_suite(100, 16),
    ]
}
