//! A small causal language model with hand-written backpropagation.
//!
//! Position t is predicted from the embeddings of the `window` previous
//! tokens, exponential moving averages of all previous embeddings (one per
//! decay), the mean and the element-wise max of the completion embeddings so
//! far, and the mean embedding of the prompt. One tanh hidden layer feeds a softmax over the
//! vocabulary.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub window: usize,
    /// Decay factors of the moving-average context features.
    pub decays: Vec<f64>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig { embed_dim: 32, hidden_dim: 96, window: 6, decays: vec![0.8, 0.95] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
struct Layout {
    vocab: usize,
    d: usize,
    h: usize,
    win: usize,
    ema: usize,
    emb: usize,
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    len: usize,
}

impl Layout {
    fn new(vocab: usize, cfg: &ModelConfig) -> Self {
        let (d, h, win, ema) = (cfg.embed_dim, cfg.hidden_dim, cfg.window, cfg.decays.len());
        let input = d * (win + ema + 3);
        let emb = 0;
        let w1 = emb + vocab * d;
        let b1 = w1 + h * input;
        let w2 = b1 + h;
        let b2 = w2 + vocab * h;
        Layout { vocab, d, h, win, ema, emb, w1, b1, w2, b2, len: b2 + vocab }
    }

    fn input(&self) -> usize {
        self.d * (self.win + self.ema + 3)
    }

    /// Offsets of the feature blocks after the window.
    fn ema_at(&self, k: usize) -> usize {
        (self.win + k) * self.d
    }

    fn completion_at(&self) -> usize {
        (self.win + self.ema) * self.d
    }

    fn max_at(&self) -> usize {
        (self.win + self.ema + 1) * self.d
    }

    fn prompt_at(&self) -> usize {
        (self.win + self.ema + 2) * self.d
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TinyLm {
    pub config: ModelConfig,
    layout: Layout,
    pub params: Vec<f64>,
}

/// Running sums that make the feature vector O(d) per position.
struct Context {
    ema: Vec<Vec<f64>>,
    prompt_mean: Vec<f64>,
    completion_sum: Vec<f64>,
    completion_len: usize,
    /// Per dimension, the position holding the completion maximum.
    argmax: Vec<usize>,
}

impl TinyLm {
    pub fn new(vocab: usize, config: ModelConfig, seed: u64) -> Self {
        let layout = Layout::new(vocab, &config);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = vec![0.0; layout.len];
        let mut fill = |range: std::ops::Range<usize>, scale: f64| {
            for p in &mut params[range] {
                *p = rng.gen_range(-scale..scale);
            }
        };
        fill(layout.emb..layout.w1, 0.5);
        fill(layout.w1..layout.b1, (3.0 / layout.input() as f64).sqrt());
        fill(layout.w2..layout.b2, (3.0 / layout.h as f64).sqrt());
        TinyLm { config, layout, params }
    }

    pub fn vocab_size(&self) -> usize {
        self.layout.vocab
    }

    pub fn parameter_count(&self) -> usize {
        self.params.len()
    }

    fn embedding(&self, token: u32) -> &[f64] {
        let d = self.layout.d;
        let at = self.layout.emb + token as usize * d;
        &self.params[at..at + d]
    }

    fn context(&self, ids: &[u32], prompt_len: usize) -> Context {
        let d = self.layout.d;
        let mut prompt_mean = vec![0.0; d];
        for &t in &ids[..prompt_len] {
            for (m, e) in prompt_mean.iter_mut().zip(self.embedding(t)) {
                *m += e;
            }
        }
        if prompt_len > 0 {
            prompt_mean.iter_mut().for_each(|m| *m /= prompt_len as f64);
        }
        Context {
            ema: vec![vec![0.0; d]; self.layout.ema],
            prompt_mean,
            completion_sum: vec![0.0; d],
            completion_len: 0,
            argmax: vec![0; d],
        }
    }

    /// Makes token `ids[t - 1]` visible before predicting position `t`.
    fn advance(&self, ctx: &mut Context, ids: &[u32], t: usize, prompt_len: usize) {
        let e = self.embedding(ids[t - 1]);
        for (avg, &beta) in ctx.ema.iter_mut().zip(&self.config.decays) {
            for (a, v) in avg.iter_mut().zip(e) {
                *a = beta * *a + (1.0 - beta) * v;
            }
        }
        if t > prompt_len {
            for (s, v) in ctx.completion_sum.iter_mut().zip(e) {
                *s += v;
            }
            for (i, best) in ctx.argmax.iter_mut().enumerate() {
                if ctx.completion_len == 0 || e[i] > self.embedding(ids[*best])[i] {
                    *best = t - 1;
                }
            }
            ctx.completion_len += 1;
        }
    }

    /// Feature vector for predicting position `t` (`ids[..t]` is visible).
    fn features(&self, ids: &[u32], t: usize, ctx: &Context) -> Vec<f64> {
        let l = &self.layout;
        let mut x = vec![0.0; l.input()];
        for k in 0..l.win {
            if t > k {
                x[k * l.d..(k + 1) * l.d].copy_from_slice(self.embedding(ids[t - 1 - k]));
            }
        }
        for (k, avg) in ctx.ema.iter().enumerate() {
            x[l.ema_at(k)..l.ema_at(k) + l.d].copy_from_slice(avg);
        }
        if ctx.completion_len > 0 {
            let n = ctx.completion_len as f64;
            for (dst, s) in x[l.completion_at()..l.completion_at() + l.d].iter_mut().zip(&ctx.completion_sum) {
                *dst = s / n;
            }
            for (i, &pos) in ctx.argmax.iter().enumerate() {
                x[l.max_at() + i] = self.embedding(ids[pos])[i];
            }
        }
        x[l.prompt_at()..].copy_from_slice(&ctx.prompt_mean);
        x
    }

    fn hidden(&self, x: &[f64]) -> Vec<f64> {
        let l = &self.layout;
        let n = l.input();
        (0..l.h)
            .map(|j| {
                let row = &self.params[l.w1 + j * n..l.w1 + (j + 1) * n];
                let z: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.params[l.b1 + j];
                z.tanh()
            })
            .collect()
    }

    /// Log-probabilities over the vocabulary.
    fn log_probs(&self, h: &[f64]) -> Vec<f64> {
        let l = &self.layout;
        let logits: Vec<f64> = (0..l.vocab)
            .map(|v| {
                let row = &self.params[l.w2 + v * l.h..l.w2 + (v + 1) * l.h];
                row.iter().zip(h).map(|(w, a)| w * a).sum::<f64>() + self.params[l.b2 + v]
            })
            .collect();
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
        logits.into_iter().map(|z| z - lse).collect()
    }

    /// Negative log-likelihood of every token given its prefix; entry 0 is
    /// always 0 since the first token is never predicted.
    pub fn token_losses(&self, ids: &[u32], prompt_len: usize) -> Vec<f64> {
        self.forward_backward(ids, prompt_len, None, None)
    }

    /// Adds the gradient of `sum_t weights[t] * loss_t` to `grad` and returns
    /// the per-token losses (positions with zero weight report 0).
    pub fn accumulate(&self, ids: &[u32], prompt_len: usize, weights: &[f64], grad: &mut [f64]) -> Vec<f64> {
        self.forward_backward(ids, prompt_len, Some(weights), Some(grad))
    }

    fn forward_backward(
        &self,
        ids: &[u32],
        prompt_len: usize,
        weights: Option<&[f64]>,
        mut grad: Option<&mut [f64]>,
    ) -> Vec<f64> {
        let l = self.layout;
        let prompt_len = prompt_len.min(ids.len());
        let mut ctx = self.context(ids, prompt_len);
        let mut losses = vec![0.0; ids.len()];
        // Gradients w.r.t. the averaged features, per position.
        let mut d_completion_mean: Vec<(usize, Vec<f64>)> = Vec::new();
        let mut d_ema: Vec<Option<Vec<f64>>> = vec![None; ids.len()];
        let mut d_prompt_mean = vec![0.0; l.d];
        for t in 1..ids.len() {
            self.advance(&mut ctx, ids, t, prompt_len);
            let w = weights.map_or(1.0, |w| w[t]);
            if w == 0.0 && weights.is_some() {
                continue;
            }
            let x = self.features(ids, t, &ctx);
            let h = self.hidden(&x);
            let lp = self.log_probs(&h);
            let target = ids[t] as usize;
            losses[t] = -lp[target];
            let Some(g) = grad.as_deref_mut() else { continue };

            let mut dlogit: Vec<f64> = lp.iter().map(|v| w * v.exp()).collect();
            dlogit[target] -= w;
            let mut dh = vec![0.0; l.h];
            for (v, dz) in dlogit.iter().enumerate() {
                let row = l.w2 + v * l.h;
                for j in 0..l.h {
                    g[row + j] += dz * h[j];
                    dh[j] += dz * self.params[row + j];
                }
                g[l.b2 + v] += dz;
            }
            let n = l.input();
            let mut dx = vec![0.0; n];
            for j in 0..l.h {
                let dz = dh[j] * (1.0 - h[j] * h[j]);
                if dz == 0.0 {
                    continue;
                }
                let row = l.w1 + j * n;
                for i in 0..n {
                    g[row + i] += dz * x[i];
                    dx[i] += dz * self.params[row + i];
                }
                g[l.b1 + j] += dz;
            }
            for k in 0..l.win {
                if t > k {
                    let at = l.emb + ids[t - 1 - k] as usize * l.d;
                    for i in 0..l.d {
                        g[at + i] += dx[k * l.d + i];
                    }
                }
            }
            if l.ema > 0 {
                d_ema[t] = Some(dx[l.ema_at(0)..l.ema_at(l.ema)].to_vec());
            }
            if ctx.completion_len > 0 {
                let n = ctx.completion_len as f64;
                let part = dx[l.completion_at()..l.completion_at() + l.d].iter().map(|v| v / n).collect();
                d_completion_mean.push((t, part));
                for (i, &pos) in ctx.argmax.iter().enumerate() {
                    g[l.emb + ids[pos] as usize * l.d + i] += dx[l.max_at() + i];
                }
            }
            for (acc, v) in d_prompt_mean.iter_mut().zip(&dx[l.prompt_at()..]) {
                *acc += v;
            }
        }
        if let Some(g) = grad {
            // Token s enters the average at t > s with weight
            // (1 - b) b^(t-1-s); G_s = g_(s+1) + b G_(s+1).
            for (k, &beta) in self.config.decays.iter().enumerate() {
                let mut acc = vec![0.0; l.d];
                for s in (0..ids.len().saturating_sub(1)).rev() {
                    for v in acc.iter_mut() {
                        *v *= beta;
                    }
                    if let Some(gt) = &d_ema[s + 1] {
                        for (a, v) in acc.iter_mut().zip(&gt[k * l.d..(k + 1) * l.d]) {
                            *a += v;
                        }
                    }
                    let at = l.emb + ids[s] as usize * l.d;
                    for i in 0..l.d {
                        g[at + i] += (1.0 - beta) * acc[i];
                    }
                }
            }
            // Completion token s (s >= prompt_len) enters the mean of every
            // position t > s; walk backwards with a running sum.
            let mut running = vec![0.0; l.d];
            let mut pending = d_completion_mean.into_iter().rev().peekable();
            for s in (prompt_len..ids.len()).rev() {
                while let Some((t, part)) = pending.next_if(|(t, _)| *t > s) {
                    debug_assert!(t > s);
                    running.iter_mut().zip(&part).for_each(|(r, p)| *r += p);
                }
                let at = l.emb + ids[s] as usize * l.d;
                for i in 0..l.d {
                    g[at + i] += running[i];
                }
            }
            if prompt_len > 0 {
                for &tok in &ids[..prompt_len] {
                    let at = l.emb + tok as usize * l.d;
                    for i in 0..l.d {
                        g[at + i] += d_prompt_mean[i] / prompt_len as f64;
                    }
                }
            }
        }
        losses
    }

    /// Greedy continuation of `prompt` until `stop` or `max_new` tokens.
    pub fn generate(&self, prompt: &[u32], max_new: usize, stop: u32) -> Vec<u32> {
        let mut ids = prompt.to_vec();
        let prompt_len = prompt.len();
        let mut ctx = self.context(&ids, prompt_len);
        let mut out = Vec::new();
        for t in 1..prompt_len {
            self.advance(&mut ctx, &ids, t, prompt_len);
        }
        for _ in 0..max_new {
            let t = ids.len();
            if t > 0 {
                self.advance(&mut ctx, &ids, t, prompt_len);
            }
            let x = self.features(&ids, t, &ctx);
            let lp = self.log_probs(&self.hidden(&x));
            let next = lp
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
                .0 as u32;
            if next == stop {
                break;
            }
            ids.push(next);
            out.push(next);
        }
        out
    }
}
