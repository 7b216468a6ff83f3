//! Encoder interface and the deterministic toy encoder.
//!
//! The toy encoder embeds hashed subword ids, runs one single-head
//! self-attention layer with a learned relative-position bias, adds a
//! residual connection and squashes with `tanh`:
//!
//! ```text
//! X = Emb[ids]
//! A = softmax(X Wq (X Wk)ᵀ / √H + bias[j - i])
//! Hid = tanh(X + (A · X Wv) Wo + bo)
//! ```

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng as _;

use super::math::{dot, matmul, matmul_backward, softmax_in_place, Matrix};
use crate::hash::fnv1a64;
use crate::rng::Rng;

pub const PAD_ID: u32 = 0;
pub const MASK_ID: u32 = 1;
/// First id that encodes a real subword.
pub const FIRST_REGULAR_ID: u32 = 2;

/// Contextual encoder over subword ids with an explicit backward pass.
///
/// `forward` returns per-subword hidden vectors plus whatever the encoder
/// needs to cache for `backward`, which accumulates parameter gradients
/// into `grad` (same layout as `params`).
pub trait Encoder {
    type Cache;

    fn hidden_size(&self) -> usize;
    fn vocab_size(&self) -> usize;
    fn params(&self) -> &[f64];
    fn params_mut(&mut self) -> &mut [f64];
    fn forward(&self, ids: &[u32]) -> (Matrix, Self::Cache);
    fn backward(&self, ids: &[u32], cache: &Self::Cache, d_hidden: &Matrix, grad: &mut [f64]);
}

/// Word-to-subword splitting for the toy encoder.
///
/// Words are cut into chunks of at most `max_piece_chars` characters; the
/// first chunk hashes as-is and continuations hash with a `##` prefix. Case
/// is preserved.
#[derive(Clone, Debug, PartialEq)]
pub struct ToyTokenizer {
    pub vocab_size: usize,
    pub max_piece_chars: usize,
    pub max_subwords: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Encoded {
    pub ids: Vec<u32>,
    /// Word index of each subword.
    pub subword_word: Vec<usize>,
    /// Words with at least one subword kept.
    pub n_words: usize,
    pub truncated: bool,
}

impl ToyTokenizer {
    pub fn piece_id(&self, piece: &str) -> u32 {
        let span = (self.vocab_size as u64) - u64::from(FIRST_REGULAR_ID);
        FIRST_REGULAR_ID + (fnv1a64(piece.as_bytes()) % span) as u32
    }

    pub fn encode<S: AsRef<str>>(&self, words: &[S]) -> Encoded {
        let mut ids = Vec::new();
        let mut subword_word = Vec::new();
        let mut truncated = false;
        'words: for (w, word) in words.iter().enumerate() {
            let chars: Vec<char> = word.as_ref().chars().collect();
            let pieces = chars.chunks(self.max_piece_chars.max(1)).enumerate();
            for (k, chunk) in pieces {
                if ids.len() == self.max_subwords {
                    truncated = true;
                    break 'words;
                }
                let text: String = chunk.iter().collect();
                let id = if k == 0 { self.piece_id(&text) } else { self.piece_id(&format!("##{text}")) };
                ids.push(id);
                subword_word.push(w);
            }
        }
        let n_words = subword_word.last().map_or(0, |w| w + 1);
        Encoded { ids, subword_word, n_words, truncated }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ToyEncoder {
    hidden: usize,
    vocab: usize,
    window: usize,
    params: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct ToyCache {
    x: Matrix,
    q: Matrix,
    k: Matrix,
    v: Matrix,
    attn: Matrix,
    ctx: Matrix,
    out: Matrix,
}

impl ToyEncoder {
    /// `window` bounds the relative offsets with their own attention bias;
    /// farther pairs share the edge bias.
    pub fn new(hidden: usize, vocab: usize, window: usize, rng: &mut Rng) -> Self {
        let mut enc = ToyEncoder { hidden, vocab, window, params: alloc::vec![0.0; 0] };
        enc.params = alloc::vec![0.0; enc.param_len()];
        let h = hidden;
        let emb_scale = 0.5;
        for p in &mut enc.params[..vocab * h] {
            *p = rng.gen_range(-emb_scale..emb_scale);
        }
        let limit = libm::sqrt(6.0 / (2 * h) as f64);
        let w_end = vocab * h + 4 * h * h;
        for p in &mut enc.params[vocab * h..w_end] {
            *p = rng.gen_range(-limit..limit);
        }
        enc
    }

    pub fn from_params(hidden: usize, vocab: usize, window: usize, params: Vec<f64>) -> Option<Self> {
        let enc = ToyEncoder { hidden, vocab, window, params };
        (enc.params.len() == enc.param_len()).then_some(enc)
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn param_len(&self) -> usize {
        let h = self.hidden;
        self.vocab * h + 4 * h * h + h + 2 * self.window + 1
    }

    fn offsets(&self) -> [usize; 7] {
        let h = self.hidden;
        let tok = 0;
        let wq = self.vocab * h;
        let wk = wq + h * h;
        let wv = wk + h * h;
        let wo = wv + h * h;
        let bo = wo + h * h;
        let rb = bo + h;
        [tok, wq, wk, wv, wo, bo, rb]
    }

    fn bias_index(&self, i: usize, j: usize) -> usize {
        let w = self.window as isize;
        let d = (j as isize - i as isize).clamp(-w, w);
        (d + w) as usize
    }
}

impl Encoder for ToyEncoder {
    type Cache = ToyCache;

    fn hidden_size(&self) -> usize {
        self.hidden
    }

    fn vocab_size(&self) -> usize {
        self.vocab
    }

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn forward(&self, ids: &[u32]) -> (Matrix, ToyCache) {
        let h = self.hidden;
        let n = ids.len();
        let [tok, wq, wk, wv, wo, bo, rb] = self.offsets();
        let p = &self.params;

        let mut x = Matrix::zeros(n, h);
        for (i, &id) in ids.iter().enumerate() {
            let row = id as usize * h;
            x.row_mut(i).copy_from_slice(&p[tok + row..tok + row + h]);
        }
        let q = matmul(&x, &p[wq..wq + h * h], h);
        let k = matmul(&x, &p[wk..wk + h * h], h);
        let v = matmul(&x, &p[wv..wv + h * h], h);

        let scale = 1.0 / libm::sqrt(h as f64);
        let mut attn = Matrix::zeros(n, n);
        for i in 0..n {
            let row = attn.row_mut(i);
            for (j, a) in row.iter_mut().enumerate() {
                *a = dot(q.row(i), k.row(j)) * scale + p[rb + self.bias_index(i, j)];
            }
            softmax_in_place(row);
        }
        let mut ctx = Matrix::zeros(n, h);
        for i in 0..n {
            for j in 0..n {
                let a = attn.row(i)[j];
                let vj = v.row(j);
                for (c, &vv) in ctx.row_mut(i).iter_mut().zip(vj) {
                    *c += a * vv;
                }
            }
        }
        let proj = matmul(&ctx, &p[wo..wo + h * h], h);
        let mut out = Matrix::zeros(n, h);
        for i in 0..n {
            for c in 0..h {
                out.row_mut(i)[c] = libm::tanh(x.row(i)[c] + proj.row(i)[c] + p[bo + c]);
            }
        }
        let cache = ToyCache { x, q, k, v, attn, ctx, out: out.clone() };
        (out, cache)
    }

    fn backward(&self, ids: &[u32], cache: &ToyCache, d_hidden: &Matrix, grad: &mut [f64]) {
        let h = self.hidden;
        let n = ids.len();
        let [tok, wq, wk, wv, wo, bo, rb] = self.offsets();
        let p = &self.params;

        // tanh'
        let mut du = d_hidden.clone();
        for (d, &o) in du.data.iter_mut().zip(&cache.out.data) {
            *d *= 1.0 - o * o;
        }
        let mut dx = du.clone();
        for i in 0..n {
            for c in 0..h {
                grad[bo + c] += du.row(i)[c];
            }
        }
        let dctx = matmul_backward(&cache.ctx, &p[wo..wo + h * h], &du, &mut grad[wo..wo + h * h]);

        let mut dattn = Matrix::zeros(n, n);
        let mut dv = Matrix::zeros(n, h);
        for i in 0..n {
            for j in 0..n {
                dattn.row_mut(i)[j] = dot(dctx.row(i), cache.v.row(j));
                let a = cache.attn.row(i)[j];
                for (d, &g) in dv.row_mut(j).iter_mut().zip(dctx.row(i)) {
                    *d += a * g;
                }
            }
        }
        let scale = 1.0 / libm::sqrt(h as f64);
        let mut dq = Matrix::zeros(n, h);
        let mut dk = Matrix::zeros(n, h);
        for i in 0..n {
            let a = cache.attn.row(i);
            let da = dattn.row(i);
            let inner = dot(a, da);
            for j in 0..n {
                let ds = a[j] * (da[j] - inner);
                grad[rb + self.bias_index(i, j)] += ds;
                for c in 0..h {
                    dq.row_mut(i)[c] += ds * cache.k.row(j)[c] * scale;
                    dk.row_mut(j)[c] += ds * cache.q.row(i)[c] * scale;
                }
            }
        }
        for (off, d) in [(wq, &dq), (wk, &dk), (wv, &dv)] {
            let dxi = matmul_backward(&cache.x, &p[off..off + h * h], d, &mut grad[off..off + h * h]);
            for (a, b) in dx.data.iter_mut().zip(&dxi.data) {
                *a += b;
            }
        }
        for (i, &id) in ids.iter().enumerate() {
            let row = tok + id as usize * h;
            for c in 0..h {
                grad[row + c] += dx.row(i)[c];
            }
        }
    }
}
