use std::sync::Arc;

use hdfnet_core::filtering::FilterMode;
use hdfnet_core::io::{load_weights, save_weights};
use hdfnet_core::model::{hdf_enhance, HdfNet, ModelConfig, WeightBundle};
use hdfnet_core::nn::Tensor4;
use hdfnet_core::spectral::{build_feature_stack, istft_to_len, stft, StftParams, Waveform};
use hdfnet_core::verify::{causality_probe, random_spectrogram};
use hdfnet_core::{ComplexSpectrogram, Error};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn rand_tensor(r: &mut ChaCha8Rng, dims: [usize; 4]) -> Tensor4 {
    Tensor4::from_fn(dims, |_, _, _, _| r.gen_range(-1.0..1.0))
}

fn net(cfg: &ModelConfig, seed: u64) -> HdfNet {
    HdfNet::new(cfg, &WeightBundle::random(cfg, seed).unwrap()).unwrap()
}

#[test]
fn head_output_shapes() {
    let cfg = ModelConfig::default();
    let n = net(&cfg, 1);
    let x = random_spectrogram(&mut rng(2), 6, 257);
    let f1 = build_feature_stack(&x, None).unwrap();
    let h1 = n.stages[0].forward(&f1.tensor).unwrap();
    assert_eq!(h1.dims(), [1, 6, 257, 2, 5]);
    let f2 = build_feature_stack(&x, Some(&x)).unwrap();
    let h2 = n.stages[1].forward(&f2.tensor).unwrap();
    assert_eq!(h2.dims(), [1, 6, 257, 2, 5]);
    assert!(h1.data.iter().chain(&h2.data).all(|v| v.abs() <= 1.0));

    let m0 = net(&ModelConfig::single_stage_df(), 3);
    assert_eq!(m0.stages.len(), 1);
    let h = m0.stages[0].forward(&f1.tensor).unwrap();
    assert_eq!(h.dims(), [1, 6, 257, 2, 25]);
}

#[test]
fn stage_rejects_wrong_input_channels() {
    let n = net(&ModelConfig::default(), 1);
    let x = random_spectrogram(&mut rng(2), 3, 257);
    let f = build_feature_stack(&x, None).unwrap();
    assert!(matches!(n.stages[1].forward(&f.tensor), Err(Error::Shape { .. })));
}

#[test]
fn zero_weights_give_silence() {
    let cfg = ModelConfig::default();
    let w = WeightBundle::zeros(&cfg).unwrap();
    let x = random_spectrogram(&mut rng(4), 5, 257);
    let out = hdf_enhance(&x, &w, &cfg).unwrap();
    assert!(out.re.iter().chain(&out.im).all(|v| *v == 0.0));

    let p = StftParams::default();
    let mut r = rng(5);
    let wav = Waveform::new((0..4000).map(|_| r.gen_range(-0.5..0.5)).collect(), 16_000).unwrap();
    let spec = stft(&wav, &p).unwrap();
    let clean = istft_to_len(&hdf_enhance(&spec, &w, &cfg).unwrap(), &p, wav.len()).unwrap();
    assert!(clean.samples.iter().all(|v| *v == 0.0));
}

#[test]
fn output_is_sum_of_stages() {
    let n = net(&ModelConfig::default(), 6);
    let x = random_spectrogram(&mut rng(7), 5, 257);
    let e = n.enhance(&x).unwrap();
    let s2 = e.stage2.unwrap();
    for i in 0..x.re.len() {
        assert_eq!(e.output.re[i], e.stage1.re[i] + s2.re[i]);
        assert_eq!(e.output.im[i], e.stage1.im[i] + s2.im[i]);
    }
}

#[test]
fn taconv_with_zero_output_projection_is_identity() {
    let mut n = net(&ModelConfig::default(), 8);
    let block = &mut n.stages[1].enc_taconvs[0];
    block.pw2.weight.iter_mut().for_each(|w| *w = 0.0);
    block.pw2.bias.iter_mut().for_each(|w| *w = 0.0);
    block.bn3.shift.iter_mut().for_each(|w| *w = 0.0);
    block.bn3.mean.iter_mut().for_each(|w| *w = 0.0);
    let x = rand_tensor(&mut rng(9), [1, 32, 4, 65]);
    assert_eq!(block.forward(&x).unwrap(), x);
}

#[test]
fn temporal_attention_gate_is_constant_without_recurrent_drive() {
    let n = net(&ModelConfig::default(), 10);
    let mut ta = n.stages[0].enc_taconvs[0].ta.clone();
    ta.conv.weight.iter_mut().for_each(|w| *w = 0.0);
    ta.conv.bias = (0..16).map(|c| c as f64 * 0.3 - 2.0).collect();
    let x = rand_tensor(&mut rng(11), [1, 16, 5, 33]);
    let y = ta.forward(&x).unwrap();
    for c in 0..16 {
        let g = 1.0 / (1.0 + (-(c as f64 * 0.3 - 2.0)).exp());
        for t in 0..5 {
            for f in 0..33 {
                assert!((y.get(0, c, t, f) - g * x.get(0, c, t, f)).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn temporal_attention_gates_are_causal() {
    let n = net(&ModelConfig::default(), 12);
    let ta = &n.stages[0].enc_taconvs[1].ta;
    let mut r = rng(13);
    let x = rand_tensor(&mut r, [1, 16, 7, 33]);
    let mut y = x.clone();
    for c in 0..16 {
        for f in 0..33 {
            y.set(0, c, 5, f, r.gen_range(-3.0..3.0));
        }
    }
    let (gx, gy) = (ta.gates(&x).unwrap(), ta.gates(&y).unwrap());
    for c in 0..16 {
        for t in 0..5 {
            assert_eq!(gx.get(0, c, t, 0).to_bits(), gy.get(0, c, t, 0).to_bits());
        }
        assert!((0..16).any(|c| gx.get(0, c, 5, 0) != gy.get(0, c, 5, 0)));
        assert!(gx.data().iter().all(|g| *g > 0.0 && *g < 1.0));
    }
}

#[test]
fn dprnn_with_zero_projections_is_identity() {
    let mut n = net(&ModelConfig::default(), 14);
    let block = &mut n.stages[0].dprnns[0];
    for l in [&mut block.intra_proj, &mut block.inter_proj] {
        l.weight.iter_mut().for_each(|w| *w = 0.0);
        l.bias.iter_mut().for_each(|w| *w = 0.0);
    }
    let x = rand_tensor(&mut rng(15), [1, 16, 4, 33]);
    assert_eq!(block.forward(&x).unwrap(), x);
}

#[test]
fn dprnn_is_causal_in_time_and_mixes_frequency() {
    let n = net(&ModelConfig::default(), 16);
    let block = &n.stages[0].dprnns[1];
    let mut r = rng(17);
    let x = rand_tensor(&mut r, [1, 16, 6, 33]);
    let mut y = x.clone();
    y.set(0, 3, 4, 30, 5.0);
    let (a, b) = (block.forward(&x).unwrap(), block.forward(&y).unwrap());
    for c in 0..16 {
        for t in 0..4 {
            assert_eq!(a.row(0, c, t), b.row(0, c, t));
        }
    }
    // the bidirectional frequency pass reaches bin 0 in the same frame
    assert!((0..16).any(|c| a.get(0, c, 4, 0) != b.get(0, c, 4, 0)));
}

#[test]
fn probe_is_not_vacuous() {
    let cfg = ModelConfig::default();
    let n = net(&cfg, 18);
    let mut r = rng(19);
    let x = random_spectrogram(&mut r, 6, 257);
    let mut y = x.clone();
    let i = y.idx(3, 100);
    y.re[i] += 1.0;
    let (a, b) = (n.enhance(&x).unwrap().output, n.enhance(&y).unwrap().output);
    let n_changed = |t: usize| (0..257).filter(|f| a.get(t, *f) != b.get(t, *f)).count();
    assert_eq!((0..3).map(n_changed).sum::<usize>(), 0);
    assert!(n_changed(3) > 0 && n_changed(5) > 0);
    assert!(causality_probe(&n, &mut r, 6).unwrap());
}

#[test]
fn mode_grid_runs() {
    let mut r = rng(20);
    for (a, b) in ModelConfig::mode_grid() {
        let cfg = ModelConfig::with_modes(a, b);
        let n = net(&cfg, r.gen());
        let x = random_spectrogram(&mut r, 4, 257);
        let out = n.enhance(&x).unwrap().output;
        assert_eq!(out.shape(), (4, 257));
        assert!(out.is_finite());
    }
    assert_eq!(ModelConfig::mode_grid().last(), Some(&(FilterMode::Tdf, FilterMode::Fdf)));
}

#[test]
fn deterministic_across_threads() {
    let n = Arc::new(net(&ModelConfig::default(), 21));
    let x = Arc::new(random_spectrogram(&mut rng(22), 5, 257));
    let reference = n.enhance(&x).unwrap().output;
    let handles: Vec<_> = (0..4)
        .map(|_| {
            let (n, x) = (n.clone(), x.clone());
            std::thread::spawn(move || n.enhance(&x).unwrap().output)
        })
        .collect();
    for h in handles {
        let out: ComplexSpectrogram = h.join().unwrap();
        assert!(out.re.iter().zip(&reference.re).all(|(a, b)| a.to_bits() == b.to_bits()));
        assert!(out.im.iter().zip(&reference.im).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}

#[test]
fn bundle_file_drives_identical_enhancement() {
    let cfg = ModelConfig::default();
    let w = WeightBundle::random(&cfg, 23).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.hdfw");
    save_weights(&w, &path).unwrap();
    let loaded = load_weights(&path, &cfg).unwrap();
    let x = random_spectrogram(&mut rng(24), 4, 257);
    assert_eq!(hdf_enhance(&x, &w, &cfg).unwrap(), hdf_enhance(&x, &loaded, &cfg).unwrap());
}

#[test]
fn construction_errors_are_specific() {
    let cfg = ModelConfig::default();
    let mut w = WeightBundle::random(&cfg, 25).unwrap();
    w.remove("stage1/encoder/taconv2/dw_weight");
    match HdfNet::new(&cfg, &w) {
        Err(Error::MissingLayer(n)) => assert_eq!(n, "stage1/encoder/taconv2/dw_weight"),
        other => panic!("{other:?}"),
    }
    let w = WeightBundle::random(&cfg, 25).unwrap();
    let other = ModelConfig::with_modes(FilterMode::Crm, FilterMode::Crm);
    assert!(matches!(HdfNet::new(&other, &w), Err(Error::DigestMismatch { .. })));

    let n = HdfNet::new(&cfg, &w).unwrap();
    let x = random_spectrogram(&mut rng(26), 3, 129);
    assert!(matches!(n.enhance(&x), Err(Error::Shape { .. })));
    let mut x = random_spectrogram(&mut rng(26), 3, 257);
    x.re[10] = f64::NAN;
    assert!(matches!(n.enhance(&x), Err(Error::NonFinite(_))));
}
