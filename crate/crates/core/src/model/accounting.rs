//! Parameter and compute accounting.

use super::blocks::{Dprnn, TaConv};
use super::config::ModelConfig;
use super::net::{HdfNet, Tacrn};
use super::weights::{layer_schema, TensorRole, WeightBundle};
use crate::error::Result;
use crate::spectral::StftParams;

/// Trainable parameters. Batch-norm running statistics are excluded.
pub fn param_count(cfg: &ModelConfig) -> Result<usize> {
    Ok(layer_schema(cfg)?
        .iter()
        .filter(|s| s.role == TensorRole::Param)
        .map(|s| s.numel())
        .sum())
}

/// Multiply-accumulates for one block, per frame, broken out by block kind.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MacBreakdown {
    pub erb: u64,
    pub conv: u64,
    pub taconv: u64,
    pub dprnn: u64,
    pub head: u64,
    pub filtering: u64,
}

impl MacBreakdown {
    pub fn total(&self) -> u64 {
        self.erb + self.conv + self.taconv + self.dprnn + self.head + self.filtering
    }
}

fn taconv_macs(b: &TaConv, f: usize) -> Result<u64> {
    let gru = b.ta.gru.macs_per_step();
    Ok(b.pw1.macs(1, f)? + b.dw.macs(1, f)? + gru + b.ta.conv.macs(1, 1)? + b.pw2.macs(1, f)?)
}

fn dprnn_macs(b: &Dprnn, f: usize) -> u64 {
    let f = f as u64;
    let proj = |l: &crate::nn::Linear| (l.in_features * l.out_features) as u64;
    f * (b.intra.macs_per_step() + proj(&b.intra_proj) + b.inter.macs_per_step() + proj(&b.inter_proj))
}

fn stage_macs(stage: &Tacrn, bins: usize, acc: &mut MacBreakdown) -> Result<()> {
    let l = &stage.layout;
    if let Some(fb) = &stage.erb {
        let (ana, syn) = fb.nonzeros();
        acc.erb += (ana * l.in_channels + syn * l.head_channels()) as u64;
    }
    let ladder = &l.freq_ladder;
    for (block, f) in stage.enc_convs.iter().zip(ladder) {
        acc.conv += block.conv.macs(1, *f)?;
    }
    let f = l.bottleneck_freq();
    for b in stage.enc_taconvs.iter().chain(&stage.dec_taconvs) {
        acc.taconv += taconv_macs(b, f)?;
    }
    for b in &stage.dprnns {
        acc.dprnn += dprnn_macs(b, f);
    }
    for (block, f) in stage.dec_convs.iter().zip(ladder.iter().rev()) {
        acc.conv += block.conv.macs(1, *f)?;
    }
    acc.head += stage.head.macs(1, ladder[0])?;
    // one complex multiply-add = 4 real MACs per tap
    acc.filtering += 4 * (l.filter.taps() * bins) as u64;
    Ok(())
}

/// Per-frame multiply-accumulates of one full enhancement pass.
pub fn macs_per_frame(cfg: &ModelConfig) -> Result<MacBreakdown> {
    let net = HdfNet::new(cfg, &WeightBundle::zeros(cfg)?)?;
    let mut acc = MacBreakdown::default();
    for stage in &net.stages {
        stage_macs(stage, cfg.n_bins, &mut acc)?;
    }
    Ok(acc)
}

/// Multiply-accumulates per second of audio.
pub fn macs_per_second(cfg: &ModelConfig, stft: &StftParams) -> Result<f64> {
    Ok(macs_per_frame(cfg)?.total() as f64 * stft.frames_per_second())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn excludes_running_stats() {
        let cfg = ModelConfig::default();
        let all: usize = layer_schema(&cfg).unwrap().iter().map(|s| s.numel()).sum();
        let params = param_count(&cfg).unwrap();
        assert!(params < all);
        let stats: usize = layer_schema(&cfg)
            .unwrap()
            .iter()
            .filter(|s| s.name.ends_with("_mean") || s.name.ends_with("_var"))
            .map(|s| s.numel())
            .sum();
        assert_eq!(all - params, stats);
    }

    #[test]
    fn doubling_channels_grows_params_subquadratically() {
        let base = ModelConfig::default();
        let wide = ModelConfig {
            stage1_channels: 2 * base.stage1_channels,
            stage2_channels: 2 * base.stage2_channels,
            ..base.clone()
        };
        let ratio = param_count(&wide).unwrap() as f64 / param_count(&base).unwrap() as f64;
        assert!(ratio > 2.0 && ratio < 4.0, "{ratio}");
    }

    #[test]
    fn filtering_macs_scale_with_taps() {
        let crm = macs_per_frame(&ModelConfig::with_modes(
            crate::filtering::FilterMode::Crm,
            crate::filtering::FilterMode::Crm,
        ))
        .unwrap();
        assert_eq!(crm.filtering, 2 * 4 * 257);
        let proposed = macs_per_frame(&ModelConfig::default()).unwrap();
        assert_eq!(proposed.filtering, 2 * 4 * 5 * 257);
    }
}
