use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::filtering::{FilterMode, FilterSpec};

/// Architectural hyperparameters of the two-stage network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub stage1_channels: usize,
    pub stage2_channels: usize,
    /// Frequency-downsampling conv blocks per encoder (mirrored by deconvs).
    pub conv_repeats: usize,
    pub taconv_repeats: usize,
    pub dprnn_repeats: usize,
    /// Taps per filtered axis; odd.
    pub df_order: usize,
    /// Sub-band fusion width in the second stage.
    pub sbf_k: usize,
    /// Group count of the DPRNN GRUs.
    pub gru_groups: usize,
    pub stage1_mode: FilterMode,
    pub stage2_mode: FilterMode,
    /// Run a single network with the second-stage topology on the
    /// three-channel input, filtering with `stage1_mode`.
    pub single_stage: bool,
    pub erb_low_kept: usize,
    pub erb_high_bands: usize,
    pub n_bins: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            stage1_channels: 16,
            stage2_channels: 32,
            conv_repeats: 2,
            taconv_repeats: 3,
            dprnn_repeats: 2,
            df_order: 5,
            sbf_k: 5,
            gru_groups: 2,
            stage1_mode: FilterMode::Tdf,
            stage2_mode: FilterMode::Fdf,
            single_stage: false,
            erb_low_kept: 65,
            erb_high_bands: 64,
            n_bins: 257,
        }
    }
}

/// Resolved per-stage topology.
#[derive(Debug, Clone, PartialEq)]
pub struct StageLayout {
    /// 1 or 2; used in layer names.
    pub index: usize,
    pub in_channels: usize,
    pub channels: usize,
    /// Band-compress the input and expand the coefficients.
    pub erb: bool,
    pub sbf_k: Option<usize>,
    pub filter: FilterSpec,
    /// Frequency extent after each encoder conv, starting with the input.
    pub freq_ladder: Vec<usize>,
}

impl StageLayout {
    pub fn prefix(&self) -> String {
        format!("stage{}", self.index)
    }

    /// Frequency extent seen by the TAConv and DPRNN blocks.
    pub fn bottleneck_freq(&self) -> usize {
        *self.freq_ladder.last().unwrap()
    }

    /// Head output channels: real and imaginary part of every tap.
    pub fn head_channels(&self) -> usize {
        2 * self.filter.taps()
    }
}

impl ModelConfig {
    /// Six stage-mode pairs of the ablation grid, proposed system last.
    pub fn mode_grid() -> Vec<(FilterMode, FilterMode)> {
        use FilterMode::*;
        vec![(Crm, Crm), (Crm, Fdf), (Tdf, Crm), (Tdf, Tdf), (Fdf, Tdf), (Tdf, Fdf)]
    }

    pub fn with_modes(stage1: FilterMode, stage2: FilterMode) -> Self {
        Self {
            stage1_mode: stage1,
            stage2_mode: stage2,
            ..Self::default()
        }
    }

    /// Single-stage general deep filter with `df_order` taps on both axes.
    pub fn single_stage_df() -> Self {
        Self {
            stage1_mode: FilterMode::Df,
            single_stage: true,
            ..Self::default()
        }
    }

    pub fn erb_bands(&self) -> usize {
        self.erb_low_kept + self.erb_high_bands
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.stage1_channels == 0 || self.stage2_channels == 0 {
            return bad("channel counts must be positive".into());
        }
        for c in [self.stage1_channels, self.stage2_channels] {
            if c % self.gru_groups.max(1) != 0 || self.gru_groups == 0 {
                return bad(format!("{c} channels not divisible by {} GRU groups", self.gru_groups));
            }
        }
        if self.sbf_k == 0 || self.sbf_k.is_multiple_of(2) {
            return bad(format!("sbf_k must be odd, got {}", self.sbf_k));
        }
        if self.erb_bands() > self.n_bins {
            return bad("more ERB bands than linear bins".into());
        }
        for layout in self.stages_unchecked()? {
            if layout.freq_ladder.iter().any(|f| *f < 2) {
                return bad(format!("encoder of {} collapses the frequency axis", layout.prefix()));
            }
        }
        Ok(())
    }

    pub fn stages(&self) -> Result<Vec<StageLayout>> {
        self.validate()?;
        self.stages_unchecked()
    }

    fn stages_unchecked(&self) -> Result<Vec<StageLayout>> {
        let ladder = |top: usize| -> Result<Vec<usize>> {
            let mut v = vec![top];
            for _ in 0..self.conv_repeats {
                let f = *v.last().unwrap();
                if f % 2 == 0 {
                    return Err(Error::Config(format!(
                        "frequency extent {f} cannot be restored by a stride-2 deconv"
                    )));
                }
                v.push((f - 1) / 2 + 1);
            }
            Ok(v)
        };
        let s1 = FilterSpec::for_order(self.stage1_mode, self.df_order)?;
        if self.single_stage {
            return Ok(vec![StageLayout {
                index: 1,
                in_channels: 3,
                channels: self.stage2_channels,
                erb: false,
                sbf_k: Some(self.sbf_k),
                filter: s1,
                freq_ladder: ladder(self.n_bins)?,
            }]);
        }
        let s2 = FilterSpec::for_order(self.stage2_mode, self.df_order)?;
        Ok(vec![
            StageLayout {
                index: 1,
                in_channels: 3,
                channels: self.stage1_channels,
                erb: true,
                sbf_k: None,
                filter: s1,
                freq_ladder: ladder(self.erb_bands())?,
            },
            StageLayout {
                index: 2,
                in_channels: 6,
                channels: self.stage2_channels,
                erb: false,
                sbf_k: Some(self.sbf_k),
                filter: s2,
                freq_ladder: ladder(self.n_bins)?,
            },
        ])
    }

    /// Stable textual form hashed into weight bundles.
    pub fn canonical(&self) -> String {
        format!(
            "hdfnet-model/1;s1c={};s2c={};conv={};taconv={};dprnn={};df={};sbf={};groups={};m1={};m2={};single={};erb={}+{};bins={}",
            self.stage1_channels,
            self.stage2_channels,
            self.conv_repeats,
            self.taconv_repeats,
            self.dprnn_repeats,
            self.df_order,
            self.sbf_k,
            self.gru_groups,
            self.stage1_mode.as_str(),
            self.stage2_mode.as_str(),
            self.single_stage,
            self.erb_low_kept,
            self.erb_high_bands,
            self.n_bins,
        )
    }

    /// SHA-256 of [`canonical`](Self::canonical).
    pub fn digest(&self) -> [u8; 32] {
        Sha256::digest(self.canonical().as_bytes()).into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_ladders() {
        let st = ModelConfig::default().stages().unwrap();
        assert_eq!(st[0].freq_ladder, vec![129, 65, 33]);
        assert_eq!(st[1].freq_ladder, vec![257, 129, 65]);
        assert_eq!(st[0].head_channels(), 10);
        assert_eq!(st[1].filter.freq_halfwidth, 2);
        let m0 = ModelConfig::single_stage_df().stages().unwrap();
        assert_eq!(m0.len(), 1);
        assert_eq!(m0[0].head_channels(), 50);
    }

    #[test]
    fn rejects_bad_configs() {
        let c = ModelConfig { sbf_k: 4, ..Default::default() };
        assert!(c.validate().is_err());
        let c = ModelConfig { stage1_channels: 15, ..Default::default() };
        assert!(c.validate().is_err());
        let c = ModelConfig { n_bins: 256, erb_high_bands: 63, ..Default::default() };
        assert!(c.validate().is_err());
        let c = ModelConfig { df_order: 4, ..Default::default() };
        assert!(c.validate().is_err());
    }

    #[test]
    fn digest_tracks_config() {
        let a = ModelConfig::default();
        let b = ModelConfig::with_modes(FilterMode::Crm, FilterMode::Crm);
        assert_eq!(a.digest(), ModelConfig::default().digest());
        assert_ne!(a.digest(), b.digest());
    }
}
