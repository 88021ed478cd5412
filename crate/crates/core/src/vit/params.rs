use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kv::KvFile;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViTConfig {
    pub image_size: usize,
    pub patch_size: usize,
    pub embed_dim: usize,
    pub depth: usize,
    pub num_heads: usize,
    pub mlp_ratio: usize,
    pub num_classes: usize,
    pub in_channels: usize,
    pub seed: u64,
}

impl Default for ViTConfig {
    fn default() -> Self {
        Self {
            image_size: 32,
            patch_size: 4,
            embed_dim: 64,
            depth: 2,
            num_heads: 4,
            mlp_ratio: 4,
            num_classes: 2,
            in_channels: 1,
            seed: 42,
        }
    }
}

impl ViTConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.image_size == 0 || self.patch_size == 0 || self.embed_dim == 0 || self.num_heads == 0 {
            return fail("image_size, patch_size, embed_dim and num_heads must be positive".into());
        }
        if self.depth == 0 || self.mlp_ratio == 0 {
            return fail("depth and mlp_ratio must be positive".into());
        }
        if self.image_size % self.patch_size != 0 {
            return fail(format!(
                "image_size {} is not divisible by patch_size {}",
                self.image_size, self.patch_size
            ));
        }
        if self.embed_dim % self.num_heads != 0 {
            return fail(format!(
                "embed_dim {} is not divisible by num_heads {}",
                self.embed_dim, self.num_heads
            ));
        }
        if self.num_classes != 2 {
            return fail(format!("num_classes must be 2, got {}", self.num_classes));
        }
        if self.in_channels != 1 {
            return fail(format!("in_channels must be 1, got {}", self.in_channels));
        }
        Ok(())
    }

    pub fn grid(&self) -> usize {
        self.image_size / self.patch_size
    }

    pub fn num_patches(&self) -> usize {
        self.grid() * self.grid()
    }

    /// Patches plus the class token.
    pub fn num_tokens(&self) -> usize {
        self.num_patches() + 1
    }

    pub fn patch_dim(&self) -> usize {
        self.patch_size * self.patch_size * self.in_channels
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.num_heads
    }

    pub fn mlp_dim(&self) -> usize {
        self.embed_dim * self.mlp_ratio
    }

    /// Reads `<prefix>image_size`, `<prefix>patch_size`, ... falling back
    /// to `base` for missing keys.
    pub fn from_kv(kv: &KvFile, prefix: &str, base: &ViTConfig) -> Result<Self> {
        let cfg = Self {
            image_size: kv.get_or(&format!("{prefix}image_size"), base.image_size)?,
            patch_size: kv.get_or(&format!("{prefix}patch_size"), base.patch_size)?,
            embed_dim: kv.get_or(&format!("{prefix}embed_dim"), base.embed_dim)?,
            depth: kv.get_or(&format!("{prefix}depth"), base.depth)?,
            num_heads: kv.get_or(&format!("{prefix}num_heads"), base.num_heads)?,
            mlp_ratio: kv.get_or(&format!("{prefix}mlp_ratio"), base.mlp_ratio)?,
            num_classes: kv.get_or(&format!("{prefix}num_classes"), base.num_classes)?,
            in_channels: kv.get_or(&format!("{prefix}in_channels"), base.in_channels)?,
            seed: kv.get_or(&format!("{prefix}seed"), base.seed)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockParams {
    pub ln1_gamma: Vec<f64>,
    pub ln1_beta: Vec<f64>,
    pub w_q: Vec<f64>,
    pub b_q: Vec<f64>,
    pub w_k: Vec<f64>,
    pub b_k: Vec<f64>,
    pub w_v: Vec<f64>,
    pub b_v: Vec<f64>,
    pub w_o: Vec<f64>,
    pub b_o: Vec<f64>,
    pub ln2_gamma: Vec<f64>,
    pub ln2_beta: Vec<f64>,
    pub w_1: Vec<f64>,
    pub b_1: Vec<f64>,
    pub w_2: Vec<f64>,
    pub b_2: Vec<f64>,
}

const BLOCK_FIELDS: [&str; 16] = [
    "ln1_gamma", "ln1_beta", "w_q", "b_q", "w_k", "b_k", "w_v", "b_v", "w_o", "b_o",
    "ln2_gamma", "ln2_beta", "w_1", "b_1", "w_2", "b_2",
];

impl BlockParams {
    fn fields(&self) -> [&Vec<f64>; 16] {
        [
            &self.ln1_gamma, &self.ln1_beta, &self.w_q, &self.b_q, &self.w_k, &self.b_k,
            &self.w_v, &self.b_v, &self.w_o, &self.b_o, &self.ln2_gamma, &self.ln2_beta,
            &self.w_1, &self.b_1, &self.w_2, &self.b_2,
        ]
    }

    fn fields_mut(&mut self) -> [&mut Vec<f64>; 16] {
        [
            &mut self.ln1_gamma, &mut self.ln1_beta, &mut self.w_q, &mut self.b_q,
            &mut self.w_k, &mut self.b_k, &mut self.w_v, &mut self.b_v, &mut self.w_o,
            &mut self.b_o, &mut self.ln2_gamma, &mut self.ln2_beta, &mut self.w_1,
            &mut self.b_1, &mut self.w_2, &mut self.b_2,
        ]
    }
}

/// Every trainable array of a [`TinyViT`](super::TinyViT). Also used, with
/// identical shapes, to hold gradients and optimizer moments.
#[derive(Debug, Clone, PartialEq)]
pub struct ViTParams {
    /// `(patch_dim, embed_dim)`
    pub patch_w: Vec<f64>,
    pub patch_b: Vec<f64>,
    pub class_token: Vec<f64>,
    /// `(num_tokens, embed_dim)`
    pub pos_embed: Vec<f64>,
    pub blocks: Vec<BlockParams>,
    pub norm_gamma: Vec<f64>,
    pub norm_beta: Vec<f64>,
    /// `(embed_dim, 2)`
    pub head_w: Vec<f64>,
    pub head_b: Vec<f64>,
}

/// Gradients of the mean loss, shape-congruent with the model parameters.
pub type GradientSet = ViTParams;

impl ViTParams {
    pub fn zeros(cfg: &ViTConfig) -> Self {
        let d = cfg.embed_dim;
        let m = cfg.mlp_dim();
        let block = || BlockParams {
            ln1_gamma: vec![0.0; d],
            ln1_beta: vec![0.0; d],
            w_q: vec![0.0; d * d],
            b_q: vec![0.0; d],
            w_k: vec![0.0; d * d],
            b_k: vec![0.0; d],
            w_v: vec![0.0; d * d],
            b_v: vec![0.0; d],
            w_o: vec![0.0; d * d],
            b_o: vec![0.0; d],
            ln2_gamma: vec![0.0; d],
            ln2_beta: vec![0.0; d],
            w_1: vec![0.0; d * m],
            b_1: vec![0.0; m],
            w_2: vec![0.0; m * d],
            b_2: vec![0.0; d],
        };
        Self {
            patch_w: vec![0.0; cfg.patch_dim() * d],
            patch_b: vec![0.0; d],
            class_token: vec![0.0; d],
            pos_embed: vec![0.0; cfg.num_tokens() * d],
            blocks: (0..cfg.depth).map(|_| block()).collect(),
            norm_gamma: vec![0.0; d],
            norm_beta: vec![0.0; d],
            head_w: vec![0.0; d * 2],
            head_b: vec![0.0; 2],
        }
    }

    /// Random init: truncated normal (std 0.02, cut at two std) for weights,
    /// class token and positional embedding; zeros for biases; unit
    /// layer-norm scales.
    pub fn init(cfg: &ViTConfig, rng: &mut impl Rng) -> Self {
        let mut p = Self::zeros(cfg);
        let mut fill = |v: &mut Vec<f64>| {
            for x in v.iter_mut() {
                *x = truncated_normal(rng, 0.02);
            }
        };
        fill(&mut p.patch_w);
        fill(&mut p.class_token);
        fill(&mut p.pos_embed);
        for b in &mut p.blocks {
            b.ln1_gamma.fill(1.0);
            b.ln2_gamma.fill(1.0);
            for w in [&mut b.w_q, &mut b.w_k, &mut b.w_v, &mut b.w_o, &mut b.w_1, &mut b.w_2] {
                fill(w);
            }
        }
        p.norm_gamma.fill(1.0);
        fill(&mut p.head_w);
        p
    }

    /// Named views of every array in a fixed canonical order.
    pub fn named(&self) -> Vec<(String, &[f64])> {
        let mut out: Vec<(String, &[f64])> = vec![
            ("patch_w".into(), &self.patch_w),
            ("patch_b".into(), &self.patch_b),
            ("class_token".into(), &self.class_token),
            ("pos_embed".into(), &self.pos_embed),
        ];
        for (i, b) in self.blocks.iter().enumerate() {
            for (name, f) in BLOCK_FIELDS.iter().zip(b.fields()) {
                out.push((format!("blocks.{i}.{name}"), f));
            }
        }
        out.push(("norm_gamma".into(), &self.norm_gamma));
        out.push(("norm_beta".into(), &self.norm_beta));
        out.push(("head_w".into(), &self.head_w));
        out.push(("head_b".into(), &self.head_b));
        out
    }

    /// Mutable views in the same order as [`named`](Self::named).
    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = vec![
            &mut self.patch_w,
            &mut self.patch_b,
            &mut self.class_token,
            &mut self.pos_embed,
        ];
        for b in &mut self.blocks {
            out.extend(b.fields_mut().into_iter().map(|f| f.as_mut_slice()));
        }
        out.push(&mut self.norm_gamma);
        out.push(&mut self.norm_beta);
        out.push(&mut self.head_w);
        out.push(&mut self.head_b);
        out
    }

    pub fn num_scalars(&self) -> usize {
        self.named().iter().map(|(_, s)| s.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.named().iter().all(|(_, s)| s.iter().all(|v| v.is_finite()))
    }

    pub fn scale(&mut self, factor: f64) {
        for s in self.slices_mut() {
            for v in s {
                *v *= factor;
            }
        }
    }

    /// Elementwise `self += other`.
    pub fn add_assign(&mut self, other: &ViTParams) {
        let theirs = other.named();
        for (mine, (_, src)) in self.slices_mut().into_iter().zip(theirs) {
            for (a, b) in mine.iter_mut().zip(src) {
                *a += b;
            }
        }
    }
}

fn truncated_normal(rng: &mut impl Rng, std: f64) -> f64 {
    loop {
        let z: f64 = rng.sample(StandardNormal);
        if z.abs() <= 2.0 {
            return z * std;
        }
    }
}
