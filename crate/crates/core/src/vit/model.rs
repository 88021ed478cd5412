use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ops::{gelu, gelu_grad, layer_norm, layer_norm_backward, linear, linear_backward, softmax_in_place};
use super::params::{BlockParams, GradientSet, ViTConfig, ViTParams};
use crate::data::{Label, NormalizedTensor};
use crate::error::{Error, Result};
use crate::rng::substream;

/// Raw two-class output of a base learner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogitPair {
    pub logit_noncancer: f64,
    pub logit_cancer: f64,
}

impl LogitPair {
    pub fn new(logit_noncancer: f64, logit_cancer: f64) -> Self {
        Self {
            logit_noncancer,
            logit_cancer,
        }
    }

    pub fn as_array(&self) -> [f64; 2] {
        [self.logit_noncancer, self.logit_cancer]
    }

    pub fn is_finite(&self) -> bool {
        self.logit_noncancer.is_finite() && self.logit_cancer.is_finite()
    }
}

/// Max-shifted two-class softmax.
pub fn softmax(logits: LogitPair) -> [f64; 2] {
    let [a, b] = logits.as_array();
    let m = a.max(b);
    let ea = (a - m).exp();
    let eb = (b - m).exp();
    let s = ea + eb;
    [ea / s, eb / s]
}

/// Argmax with ties going to class 0.
pub fn argmax(logits: LogitPair) -> Label {
    if logits.logit_cancer > logits.logit_noncancer {
        1
    } else {
        0
    }
}

/// Per-sample `-log softmax(l)[y]`, computed via log-sum-exp.
pub fn sample_cross_entropy(logits: LogitPair, label: Label) -> f64 {
    let [a, b] = logits.as_array();
    let m = a.max(b);
    let lse = m + ((a - m).exp() + (b - m).exp()).ln();
    lse - if label == 0 { a } else { b }
}

/// Mean cross-entropy over a batch.
pub fn cross_entropy(logits: &[LogitPair], labels: &[Label]) -> f64 {
    assert_eq!(logits.len(), labels.len(), "logits/labels length mismatch");
    let total: f64 = logits
        .iter()
        .zip(labels)
        .map(|(&l, &y)| sample_cross_entropy(l, y))
        .sum();
    total / logits.len() as f64
}

/// A pre-norm vision transformer with a class token and a two-logit head.
#[derive(Debug, Clone, PartialEq)]
pub struct TinyViT {
    config: ViTConfig,
    pub params: ViTParams,
}

struct BlockCache {
    ln1_xhat: Vec<f64>,
    ln1_inv: Vec<f64>,
    h1: Vec<f64>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    /// `(heads, tokens, tokens)`
    attn: Vec<f64>,
    ctx: Vec<f64>,
    ln2_xhat: Vec<f64>,
    ln2_inv: Vec<f64>,
    h2: Vec<f64>,
    pre_act: Vec<f64>,
    act: Vec<f64>,
}

struct Cache {
    patches: Vec<f64>,
    blocks: Vec<BlockCache>,
    norm_xhat: Vec<f64>,
    norm_inv: Vec<f64>,
    pooled: Vec<f64>,
}

impl TinyViT {
    /// Fresh model with weights drawn from the `init` stream of `cfg.seed`.
    pub fn new(config: ViTConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = substream(config.seed, "init");
        let params = ViTParams::init(&config, &mut rng);
        Ok(Self { config, params })
    }

    pub fn from_parts(config: ViTConfig, params: ViTParams) -> Result<Self> {
        config.validate()?;
        let expected = ViTParams::zeros(&config);
        for ((name, want), (_, got)) in expected.named().into_iter().zip(params.named()) {
            if want.len() != got.len() {
                return Err(Error::Shape(format!(
                    "parameter {name}: expected {} values, got {}",
                    want.len(),
                    got.len()
                )));
            }
        }
        if expected.blocks.len() != params.blocks.len() {
            return Err(Error::Shape("block count does not match depth".into()));
        }
        Ok(Self { config, params })
    }

    pub fn config(&self) -> &ViTConfig {
        &self.config
    }

    /// SHA-256 over the config and every parameter bit pattern.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        h.update(super::checkpoint::encode(self));
        hex::encode(h.finalize())
    }

    fn check_input(&self, x: &NormalizedTensor) -> Result<()> {
        let s = self.config.image_size;
        if x.height() != s || x.width() != s {
            return Err(Error::Shape(format!(
                "model expects {s}x{s} inputs, got {}x{}",
                x.width(),
                x.height()
            )));
        }
        Ok(())
    }

    fn patchify(&self, x: &NormalizedTensor) -> Vec<f64> {
        let p = self.config.patch_size;
        let g = self.config.grid();
        let s = self.config.image_size;
        let vals = x.values();
        let mut out = Vec::with_capacity(g * g * p * p);
        for gy in 0..g {
            for gx in 0..g {
                for py in 0..p {
                    let row = (gy * p + py) * s + gx * p;
                    out.extend_from_slice(&vals[row..row + p]);
                }
            }
        }
        out
    }

    fn forward_cached(&self, x: &NormalizedTensor) -> (LogitPair, Cache) {
        let cfg = &self.config;
        let p = &self.params;
        let d = cfg.embed_dim;
        let t = cfg.num_tokens();
        let n = cfg.num_patches();

        let patches = self.patchify(x);
        let embedded = linear(&patches, n, cfg.patch_dim(), &p.patch_w, &p.patch_b, d);
        let mut tokens = Vec::with_capacity(t * d);
        tokens.extend_from_slice(&p.class_token);
        tokens.extend_from_slice(&embedded);
        for (v, pe) in tokens.iter_mut().zip(&p.pos_embed) {
            *v += pe;
        }

        let mut blocks = Vec::with_capacity(cfg.depth);
        for bp in &p.blocks {
            let cache = self.block_forward(bp, &mut tokens);
            blocks.push(cache);
        }

        let (pooled, norm_xhat, norm_inv) = layer_norm(&tokens[..d], d, &p.norm_gamma, &p.norm_beta);
        let out = linear(&pooled, 1, d, &p.head_w, &p.head_b, 2);
        (
            LogitPair::new(out[0], out[1]),
            Cache {
                patches,
                blocks,
                norm_xhat,
                norm_inv,
                pooled,
            },
        )
    }

    fn block_forward(&self, bp: &BlockParams, x: &mut [f64]) -> BlockCache {
        let cfg = &self.config;
        let d = cfg.embed_dim;
        let t = cfg.num_tokens();
        let m = cfg.mlp_dim();

        let (h1, ln1_xhat, ln1_inv) = layer_norm(x, d, &bp.ln1_gamma, &bp.ln1_beta);
        let q = linear(&h1, t, d, &bp.w_q, &bp.b_q, d);
        let k = linear(&h1, t, d, &bp.w_k, &bp.b_k, d);
        let v = linear(&h1, t, d, &bp.w_v, &bp.b_v, d);
        let (attn, ctx) = self.attention(&q, &k, &v);
        let a = linear(&ctx, t, d, &bp.w_o, &bp.b_o, d);
        for (xi, ai) in x.iter_mut().zip(&a) {
            *xi += ai;
        }

        let (h2, ln2_xhat, ln2_inv) = layer_norm(x, d, &bp.ln2_gamma, &bp.ln2_beta);
        let pre_act = linear(&h2, t, d, &bp.w_1, &bp.b_1, m);
        let act: Vec<f64> = pre_act.iter().map(|&u| gelu(u)).collect();
        let mlp = linear(&act, t, m, &bp.w_2, &bp.b_2, d);
        for (xi, mi) in x.iter_mut().zip(&mlp) {
            *xi += mi;
        }

        BlockCache {
            ln1_xhat,
            ln1_inv,
            h1,
            q,
            k,
            v,
            attn,
            ctx,
            ln2_xhat,
            ln2_inv,
            h2,
            pre_act,
            act,
        }
    }

    /// Scaled dot-product attention over all heads; returns `(probs, context)`.
    fn attention(&self, q: &[f64], k: &[f64], v: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let cfg = &self.config;
        let (d, t, heads, dh) = (cfg.embed_dim, cfg.num_tokens(), cfg.num_heads, cfg.head_dim());
        let scale = 1.0 / (dh as f64).sqrt();
        let mut attn = vec![0.0; heads * t * t];
        let mut ctx = vec![0.0; t * d];
        for h in 0..heads {
            let off = h * dh;
            for i in 0..t {
                let row = &mut attn[(h * t + i) * t..(h * t + i + 1) * t];
                let qi = &q[i * d + off..i * d + off + dh];
                for (j, s) in row.iter_mut().enumerate() {
                    let kj = &k[j * d + off..j * d + off + dh];
                    *s = qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>() * scale;
                }
                softmax_in_place(row);
                let ci = &mut ctx[i * d + off..i * d + off + dh];
                for (j, &a) in row.iter().enumerate() {
                    let vj = &v[j * d + off..j * d + off + dh];
                    for (c, &vv) in ci.iter_mut().zip(vj) {
                        *c += a * vv;
                    }
                }
            }
        }
        (attn, ctx)
    }

    /// Logits for every input.
    pub fn forward(&self, batch: &[NormalizedTensor]) -> Result<Vec<LogitPair>> {
        batch
            .iter()
            .map(|x| {
                self.check_input(x)?;
                Ok(self.forward_cached(x).0)
            })
            .collect()
    }

    /// Attention probabilities of every block for one input, each laid out
    /// as `(heads, tokens, tokens)`.
    pub fn attention_maps(&self, x: &NormalizedTensor) -> Result<Vec<Vec<f64>>> {
        self.check_input(x)?;
        let (_, cache) = self.forward_cached(x);
        Ok(cache.blocks.into_iter().map(|b| b.attn).collect())
    }

    pub fn predict(&self, batch: &[NormalizedTensor]) -> Result<Vec<Label>> {
        Ok(self.forward(batch)?.into_iter().map(argmax).collect())
    }

    /// Mean cross-entropy over the batch and its exact gradient.
    pub fn backward(&self, batch: &[NormalizedTensor], labels: &[Label]) -> Result<(f64, GradientSet)> {
        if batch.len() != labels.len() || batch.is_empty() {
            return Err(Error::Shape(format!(
                "batch of {} inputs with {} labels",
                batch.len(),
                labels.len()
            )));
        }
        let mut grads = ViTParams::zeros(&self.config);
        let mut total = 0.0;
        let inv_n = 1.0 / batch.len() as f64;
        for (x, &y) in batch.iter().zip(labels) {
            self.check_input(x)?;
            if y > 1 {
                return Err(Error::Data(format!("label {y} is not binary")));
            }
            let (logits, cache) = self.forward_cached(x);
            total += sample_cross_entropy(logits, y);
            let probs = softmax(logits);
            let mut dlogits = [probs[0] * inv_n, probs[1] * inv_n];
            dlogits[y as usize] -= inv_n;
            self.backward_sample(&cache, dlogits, &mut grads);
        }
        Ok((total * inv_n, grads))
    }

    fn backward_sample(&self, cache: &Cache, dlogits: [f64; 2], g: &mut ViTParams) {
        let cfg = &self.config;
        let p = &self.params;
        let d = cfg.embed_dim;
        let t = cfg.num_tokens();

        let dpooled = linear_backward(&cache.pooled, &dlogits, 1, d, 2, &p.head_w, &mut g.head_w, &mut g.head_b);
        let dcls = layer_norm_backward(
            &dpooled,
            &cache.norm_xhat,
            &cache.norm_inv,
            d,
            &p.norm_gamma,
            &mut g.norm_gamma,
            &mut g.norm_beta,
        );
        let mut dx = vec![0.0; t * d];
        dx[..d].copy_from_slice(&dcls);

        for ((bp, bc), bg) in p.blocks.iter().zip(&cache.blocks).zip(g.blocks.iter_mut()).rev() {
            self.block_backward(bp, bc, bg, &mut dx);
        }

        for (gp, dv) in g.pos_embed.iter_mut().zip(&dx) {
            *gp += dv;
        }
        for (gc, dv) in g.class_token.iter_mut().zip(&dx[..d]) {
            *gc += dv;
        }
        linear_backward(
            &cache.patches,
            &dx[d..],
            cfg.num_patches(),
            cfg.patch_dim(),
            d,
            &p.patch_w,
            &mut g.patch_w,
            &mut g.patch_b,
        );
    }

    /// Propagates `dx` (gradient w.r.t. the block output) back to the block input.
    fn block_backward(&self, bp: &BlockParams, bc: &BlockCache, bg: &mut BlockParams, dx: &mut [f64]) {
        let cfg = &self.config;
        let (d, t, m) = (cfg.embed_dim, cfg.num_tokens(), cfg.mlp_dim());

        // MLP branch
        let dact = linear_backward(&bc.act, dx, t, m, d, &bp.w_2, &mut bg.w_2, &mut bg.b_2);
        let dpre: Vec<f64> = dact
            .iter()
            .zip(&bc.pre_act)
            .map(|(&da, &u)| da * gelu_grad(u))
            .collect();
        let dh2 = linear_backward(&bc.h2, &dpre, t, d, m, &bp.w_1, &mut bg.w_1, &mut bg.b_1);
        let dmid = layer_norm_backward(
            &dh2,
            &bc.ln2_xhat,
            &bc.ln2_inv,
            d,
            &bp.ln2_gamma,
            &mut bg.ln2_gamma,
            &mut bg.ln2_beta,
        );
        for (a, b) in dx.iter_mut().zip(&dmid) {
            *a += b;
        }

        // attention branch
        let dctx = linear_backward(&bc.ctx, dx, t, d, d, &bp.w_o, &mut bg.w_o, &mut bg.b_o);
        let (dq, dk, dv) = self.attention_backward(bc, &dctx);
        let mut dh1 = linear_backward(&bc.h1, &dq, t, d, d, &bp.w_q, &mut bg.w_q, &mut bg.b_q);
        let dh1k = linear_backward(&bc.h1, &dk, t, d, d, &bp.w_k, &mut bg.w_k, &mut bg.b_k);
        let dh1v = linear_backward(&bc.h1, &dv, t, d, d, &bp.w_v, &mut bg.w_v, &mut bg.b_v);
        for ((a, b), c) in dh1.iter_mut().zip(&dh1k).zip(&dh1v) {
            *a += b + c;
        }
        let din = layer_norm_backward(
            &dh1,
            &bc.ln1_xhat,
            &bc.ln1_inv,
            d,
            &bp.ln1_gamma,
            &mut bg.ln1_gamma,
            &mut bg.ln1_beta,
        );
        for (a, b) in dx.iter_mut().zip(&din) {
            *a += b;
        }
    }

    fn attention_backward(&self, bc: &BlockCache, dctx: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let cfg = &self.config;
        let (d, t, heads, dh) = (cfg.embed_dim, cfg.num_tokens(), cfg.num_heads, cfg.head_dim());
        let scale = 1.0 / (dh as f64).sqrt();
        let mut dq = vec![0.0; t * d];
        let mut dk = vec![0.0; t * d];
        let mut dv = vec![0.0; t * d];
        let mut dprob = vec![0.0; t];
        for h in 0..heads {
            let off = h * dh;
            for i in 0..t {
                let probs = &bc.attn[(h * t + i) * t..(h * t + i + 1) * t];
                let dci = &dctx[i * d + off..i * d + off + dh];
                let mut weighted = 0.0;
                for j in 0..t {
                    let vj = &bc.v[j * d + off..j * d + off + dh];
                    dprob[j] = dci.iter().zip(vj).map(|(a, b)| a * b).sum();
                    weighted += probs[j] * dprob[j];
                    let dvj = &mut dv[j * d + off..j * d + off + dh];
                    for (o, &c) in dvj.iter_mut().zip(dci) {
                        *o += probs[j] * c;
                    }
                }
                for j in 0..t {
                    let ds = probs[j] * (dprob[j] - weighted) * scale;
                    if ds == 0.0 {
                        continue;
                    }
                    for c in 0..dh {
                        dq[i * d + off + c] += ds * bc.k[j * d + off + c];
                        dk[j * d + off + c] += ds * bc.q[i * d + off + c];
                    }
                }
            }
        }
        (dq, dk, dv)
    }
}
