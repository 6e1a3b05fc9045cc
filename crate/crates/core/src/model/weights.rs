//! Canonical layer schema and the in-memory weight bundle.
//!
//! Layer names follow `stage{1,2}/{encoder|decoder|dprnn|head}/<block>/<tensor>`.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{ModelConfig, StageLayout};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

/// Whether a tensor is trainable or stored statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TensorRole {
    Param,
    Buffer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub role: TensorRole,
}

impl LayerSpec {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

#[derive(Default)]
struct SchemaBuilder {
    specs: Vec<LayerSpec>,
}

impl SchemaBuilder {
    fn push(&mut self, block: &str, tensor: &str, shape: &[usize], role: TensorRole) {
        self.specs.push(LayerSpec {
            name: format!("{block}/{tensor}"),
            shape: shape.to_vec(),
            role,
        });
    }

    fn param(&mut self, block: &str, tensor: &str, shape: &[usize]) {
        self.push(block, tensor, shape, TensorRole::Param);
    }

    fn bn(&mut self, block: &str, tag: &str, c: usize) {
        self.param(block, &format!("{tag}_scale"), &[c]);
        self.param(block, &format!("{tag}_shift"), &[c]);
        self.push(block, &format!("{tag}_mean"), &[c], TensorRole::Buffer);
        self.push(block, &format!("{tag}_var"), &[c], TensorRole::Buffer);
    }

    fn conv_block(&mut self, block: &str, weight: [usize; 4], c_out: usize) {
        self.param(block, "weight", &weight);
        self.param(block, "bias", &[c_out]);
        self.bn(block, "bn", c_out);
        self.param(block, "prelu", &[c_out]);
    }

    fn gru(&mut self, block: &str, tag: &str, input: usize, hidden: usize, groups: usize) {
        let (ig, hg) = (input / groups, hidden / groups);
        self.param(block, &format!("{tag}_w_ih"), &[groups, 3 * hg, ig]);
        self.param(block, &format!("{tag}_w_hh"), &[groups, 3 * hg, hg]);
        self.param(block, &format!("{tag}_b_ih"), &[groups, 3 * hg]);
        self.param(block, &format!("{tag}_b_hh"), &[groups, 3 * hg]);
    }

    fn taconv(&mut self, block: &str, c: usize, k: usize) {
        self.param(block, "pw1_weight", &[c, c * k, 1, 1]);
        self.param(block, "pw1_bias", &[c]);
        self.bn(block, "bn1", c);
        self.param(block, "prelu1", &[c]);
        self.param(block, "dw_weight", &[c, 1, 3, 3]);
        self.param(block, "dw_bias", &[c]);
        self.bn(block, "bn2", c);
        self.param(block, "prelu2", &[c]);
        self.gru(block, "ta_gru", c, c, 1);
        self.param(block, "ta_conv_weight", &[c, c, 3, 1]);
        self.param(block, "ta_conv_bias", &[c]);
        self.param(block, "pw2_weight", &[c, c, 1, 1]);
        self.param(block, "pw2_bias", &[c]);
        self.bn(block, "bn3", c);
    }

    fn dprnn(&mut self, block: &str, c: usize, groups: usize) {
        self.gru(block, "intra", c, c, groups);
        self.gru(block, "intra_rev", c, c, groups);
        self.param(block, "intra_proj_weight", &[c, 2 * c]);
        self.param(block, "intra_proj_bias", &[c]);
        self.gru(block, "inter", c, c, groups);
        self.param(block, "inter_proj_weight", &[c, c]);
        self.param(block, "inter_proj_bias", &[c]);
    }

    fn stage(&mut self, cfg: &ModelConfig, l: &StageLayout) {
        let p = l.prefix();
        let c = l.channels;
        let k = l.sbf_k.unwrap_or(1);
        for i in 0..cfg.conv_repeats {
            let cin = if i == 0 { l.in_channels } else { c };
            self.conv_block(&format!("{p}/encoder/conv{i}"), [c, cin, 1, 5], c);
        }
        for i in 0..cfg.taconv_repeats {
            self.taconv(&format!("{p}/encoder/taconv{i}"), c, k);
        }
        for i in 0..cfg.dprnn_repeats {
            self.dprnn(&format!("{p}/dprnn/block{i}"), c, cfg.gru_groups);
        }
        for i in 0..cfg.taconv_repeats {
            self.taconv(&format!("{p}/decoder/taconv{i}"), c, k);
        }
        for i in 0..cfg.conv_repeats {
            // transposed layout: [in, out, kt, kf]
            self.conv_block(&format!("{p}/decoder/deconv{i}"), [c, c, 1, 5], c);
        }
        let h = l.head_channels();
        self.param(&format!("{p}/head/conv"), "weight", &[h, c, 1, 1]);
        self.param(&format!("{p}/head/conv"), "bias", &[h]);
    }
}

/// Every tensor the configuration implies, in canonical order.
pub fn layer_schema(cfg: &ModelConfig) -> Result<Vec<LayerSpec>> {
    let mut b = SchemaBuilder::default();
    for layout in cfg.stages()? {
        b.stage(cfg, &layout);
    }
    Ok(b.specs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightTensor {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

/// Named f32 tensors plus the digest of the config they were made for.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightBundle {
    pub version: u32,
    pub digest: [u8; 32],
    tensors: BTreeMap<String, WeightTensor>,
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn init_value(rng: &mut ChaCha8Rng, spec: &LayerSpec) -> f32 {
    let tensor = spec.name.rsplit('/').next().unwrap_or("");
    let v: f64 = if tensor.ends_with("_mean") || tensor.ends_with("_shift") {
        rng.gen_range(-0.1..0.1)
    } else if tensor.ends_with("_var") || tensor.ends_with("_scale") {
        rng.gen_range(0.9..1.2)
    } else if tensor.starts_with("prelu") {
        0.25
    } else if tensor.contains("bias") || tensor.contains("_b_") {
        rng.gen_range(-0.1..0.1)
    } else if tensor.contains("_w_") {
        // GRU: bound 1 / sqrt(hidden per group)
        let hg = (spec.shape[1] / 3).max(1) as f64;
        let b = 1.0 / hg.sqrt();
        rng.gen_range(-b..b)
    } else {
        let fan_in = spec.shape[1..].iter().product::<usize>().max(1) as f64;
        let b = 1.0 / fan_in.sqrt();
        rng.gen_range(-b..b)
    };
    v as f32
}

impl WeightBundle {
    pub fn new(digest: [u8; 32]) -> Self {
        Self {
            version: FORMAT_VERSION,
            digest,
            tensors: BTreeMap::new(),
        }
    }

    /// All-zero weights: the network outputs zero coefficients.
    pub fn zeros(cfg: &ModelConfig) -> Result<Self> {
        let mut b = Self::new(cfg.digest());
        for spec in layer_schema(cfg)? {
            let n = spec.numel();
            b.insert(spec.name, spec.shape, vec![0.0; n])?;
        }
        Ok(b)
    }

    /// Deterministic random initialization with fan-in scaled uniforms and
    /// near-identity batch norm statistics.
    pub fn random(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut b = Self::new(cfg.digest());
        for spec in layer_schema(cfg)? {
            let data = (0..spec.numel()).map(|_| init_value(&mut rng, &spec)).collect();
            b.insert(spec.name, spec.shape, data)?;
        }
        Ok(b)
    }

    pub fn insert(&mut self, name: impl Into<String>, shape: Vec<usize>, data: Vec<f32>) -> Result<()> {
        let name = name.into();
        if shape.iter().product::<usize>() != data.len() {
            return Err(Error::LayerShape {
                name,
                expected: shape,
                found: vec![data.len()],
            });
        }
        self.tensors.insert(name, WeightTensor { shape, data });
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&WeightTensor> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut WeightTensor> {
        self.tensors.get_mut(name)
    }

    pub fn remove(&mut self, name: &str) -> Option<WeightTensor> {
        self.tensors.remove(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &WeightTensor)> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut WeightTensor)> {
        self.tensors.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn total_elements(&self) -> usize {
        self.tensors.values().map(|t| t.data.len()).sum()
    }

    /// Checks digest, presence and shape of every expected layer, and that
    /// nothing else is present.
    pub fn validate(&self, cfg: &ModelConfig) -> Result<()> {
        let want = cfg.digest();
        if self.digest != want {
            return Err(Error::DigestMismatch {
                expected: hex(&want),
                found: hex(&self.digest),
            });
        }
        let schema = layer_schema(cfg)?;
        for spec in &schema {
            let t = self
                .tensors
                .get(&spec.name)
                .ok_or_else(|| Error::MissingLayer(spec.name.clone()))?;
            if t.shape != spec.shape {
                return Err(Error::LayerShape {
                    name: spec.name.clone(),
                    expected: spec.shape.clone(),
                    found: t.shape.clone(),
                });
            }
        }
        if self.tensors.len() != schema.len() {
            let known: std::collections::HashSet<&str> = schema.iter().map(|s| s.name.as_str()).collect();
            if let Some(extra) = self.tensors.keys().find(|k| !known.contains(k.as_str())) {
                return Err(Error::UnexpectedLayer(extra.clone()));
            }
        }
        Ok(())
    }

    /// Tensor converted to f64.
    pub(crate) fn f64(&self, name: &str) -> Result<Vec<f64>> {
        self.tensors
            .get(name)
            .map(|t| t.data.iter().map(|v| *v as f64).collect())
            .ok_or_else(|| Error::MissingLayer(name.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn schema_names_are_canonical_and_unique() {
        let schema = layer_schema(&ModelConfig::default()).unwrap();
        let mut seen = HashSet::new();
        for s in &schema {
            assert!(seen.insert(s.name.clone()), "duplicate {}", s.name);
            let parts: Vec<&str> = s.name.split('/').collect();
            assert_eq!(parts.len(), 4, "{}", s.name);
            assert!(parts[0] == "stage1" || parts[0] == "stage2");
            assert!(["encoder", "decoder", "dprnn", "head"].contains(&parts[1]));
        }
        assert!(seen.contains("stage2/encoder/taconv0/pw1_weight"));
        let pw1 = schema.iter().find(|s| s.name == "stage2/encoder/taconv0/pw1_weight").unwrap();
        assert_eq!(pw1.shape, vec![32, 160, 1, 1]);
    }

    #[test]
    fn validation_errors_are_distinct() {
        let cfg = ModelConfig::default();
        let good = WeightBundle::random(&cfg, 1).unwrap();
        good.validate(&cfg).unwrap();

        let mut b = good.clone();
        b.remove("stage1/head/conv/bias");
        match b.validate(&cfg) {
            Err(Error::MissingLayer(n)) => assert_eq!(n, "stage1/head/conv/bias"),
            other => panic!("{other:?}"),
        }

        let mut b = good.clone();
        b.insert("stage1/head/conv/bias", vec![2, 5], vec![0.0; 10]).unwrap();
        assert!(matches!(b.validate(&cfg), Err(Error::LayerShape { .. })));

        let mut b = good.clone();
        b.insert("stage3/head/conv/bias", vec![1], vec![0.0]).unwrap();
        assert!(matches!(b.validate(&cfg), Err(Error::UnexpectedLayer(_))));

        let mut b = good;
        b.digest[0] ^= 1;
        assert!(matches!(b.validate(&cfg), Err(Error::DigestMismatch { .. })));
    }

    #[test]
    fn random_is_deterministic() {
        let cfg = ModelConfig::default();
        assert_eq!(WeightBundle::random(&cfg, 5).unwrap(), WeightBundle::random(&cfg, 5).unwrap());
        assert_ne!(WeightBundle::random(&cfg, 5).unwrap(), WeightBundle::random(&cfg, 6).unwrap());
    }
}
