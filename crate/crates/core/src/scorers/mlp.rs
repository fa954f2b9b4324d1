//! Embedding feed-forward selectional-preference scorer.
//!
//! `logit = w2 . tanh(W1 [e_s; e_v; e_o] + b1) + b2`, with one embedding
//! table per argument position. Index 0 of every table is the shared
//! out-of-vocabulary row.
//!
//! All parameters live in one flat `Vec<f64>` so the optimizer and the
//! finite-difference checker can treat them uniformly; [`Layout`] maps
//! named blocks to offsets.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use rand::Rng;
use thiserror::Error;

use crate::abstraction::Event;

use super::{ScoreError, Scorer};

pub use super::train::{gradient_check, gradient_check_cells, pair_loss, relative_error, train, GradientCheck, TrainConfig, TrainError, TrainReport};

pub const OOV_TOKEN: &str = "<unk>";
pub const MODEL_MAGIC: &[u8; 5] = b"ABXN1";

/// Per-position vocabulary; index 0 is the OOV token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    /// Builds a vocabulary from words in sorted order after the OOV token.
    pub fn new<I, S>(words: I) -> Vocab
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let set: BTreeSet<String> = words
            .into_iter()
            .map(Into::into)
            .filter(|w: &String| w != OOV_TOKEN)
            .collect();
        let words: Vec<String> = std::iter::once(OOV_TOKEN.to_string()).chain(set).collect();
        let index = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        Vocab { words, index }
    }

    /// Index of `word`, or 0 for unknown words.
    pub fn lookup(&self, word: &str) -> usize {
        self.index.get(word).copied().unwrap_or(0)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word) && word != OOV_TOKEN
    }

    /// Size including the OOV row.
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }
}

/// Offsets of each parameter block in the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub dim: usize,
    pub hidden: usize,
    pub emb: [usize; 3],
    pub w1: usize,
    pub b1: usize,
    pub w2: usize,
    pub b2: usize,
    pub total: usize,
}

impl Layout {
    pub fn new(dim: usize, hidden: usize, vocab_sizes: [usize; 3]) -> Layout {
        let mut off = 0;
        let mut emb = [0; 3];
        for (p, &n) in vocab_sizes.iter().enumerate() {
            emb[p] = off;
            off += n * dim;
        }
        let w1 = off;
        off += hidden * 3 * dim;
        let b1 = off;
        off += hidden;
        let w2 = off;
        off += hidden;
        let b2 = off;
        off += 1;
        Layout {
            dim,
            hidden,
            emb,
            w1,
            b1,
            w2,
            b2,
            total: off,
        }
    }

    pub fn input_width(&self) -> usize {
        3 * self.dim
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpScorer {
    vocab: [Vocab; 3],
    layout: Layout,
    params: Vec<f64>,
}

/// Activations kept from a forward pass for backpropagation.
#[derive(Debug, Clone)]
pub struct Activations {
    pub tokens: [usize; 3],
    pub input: Vec<f64>,
    pub hidden: Vec<f64>,
    pub logit: f64,
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("not a model file (bad magic)")]
    BadMagic,
    #[error("model file truncated or inconsistent: {0}")]
    Corrupt(String),
    #[error("model contains non-finite parameter at offset {0}")]
    NonFinite(usize),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl MlpScorer {
    /// Zero-initialised network.
    pub fn zeros(vocab: [Vocab; 3], dim: usize, hidden: usize) -> MlpScorer {
        let layout = Layout::new(dim, hidden, [vocab[0].len(), vocab[1].len(), vocab[2].len()]);
        MlpScorer {
            vocab,
            layout,
            params: vec![0.0; layout.total],
        }
    }

    /// Random initialisation: embeddings uniform in +-1/sqrt(dim), dense
    /// weights uniform in +-1/sqrt(fan_in), biases zero.
    pub fn random<R: Rng + ?Sized>(vocab: [Vocab; 3], dim: usize, hidden: usize, rng: &mut R) -> MlpScorer {
        let mut m = MlpScorer::zeros(vocab, dim, hidden);
        let l = m.layout;
        let emb_scale = 1.0 / (dim as f64).sqrt();
        let w1_scale = 1.0 / (l.input_width() as f64).sqrt();
        let w2_scale = 1.0 / (hidden as f64).sqrt();
        for (i, p) in m.params.iter_mut().enumerate() {
            let scale = if i < l.w1 {
                emb_scale
            } else if i < l.b1 {
                w1_scale
            } else if i >= l.w2 && i < l.b2 {
                w2_scale
            } else {
                continue;
            };
            *p = rng.random_range(-scale..scale);
        }
        m
    }

    pub fn from_parts(vocab: [Vocab; 3], dim: usize, hidden: usize, params: Vec<f64>) -> Result<MlpScorer, ModelError> {
        let layout = Layout::new(dim, hidden, [vocab[0].len(), vocab[1].len(), vocab[2].len()]);
        if params.len() != layout.total {
            return Err(ModelError::Corrupt(format!(
                "expected {} parameters, found {}",
                layout.total,
                params.len()
            )));
        }
        if let Some(i) = params.iter().position(|p| !p.is_finite()) {
            return Err(ModelError::NonFinite(i));
        }
        Ok(MlpScorer { vocab, layout, params })
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn vocab(&self) -> &[Vocab; 3] {
        &self.vocab
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn tokens(&self, e: &Event) -> [usize; 3] {
        [
            self.vocab[0].lookup(&e.subject),
            self.vocab[1].lookup(&e.verb),
            self.vocab[2].lookup(&e.object),
        ]
    }

    pub fn forward_tokens(&self, tokens: [usize; 3]) -> Activations {
        let l = &self.layout;
        let d = l.dim;
        let mut input = Vec::with_capacity(3 * d);
        for (p, &t) in tokens.iter().enumerate() {
            let start = l.emb[p] + t * d;
            input.extend_from_slice(&self.params[start..start + d]);
        }
        let width = l.input_width();
        let w1 = &self.params[l.w1..l.b1];
        let b1 = &self.params[l.b1..l.w2];
        let w2 = &self.params[l.w2..l.b2];
        let mut hidden = Vec::with_capacity(l.hidden);
        let mut logit = self.params[l.b2];
        for k in 0..l.hidden {
            let row = &w1[k * width..(k + 1) * width];
            let a: f64 = b1[k] + row.iter().zip(&input).map(|(w, x)| w * x).sum::<f64>();
            let h = a.tanh();
            logit += w2[k] * h;
            hidden.push(h);
        }
        Activations {
            tokens,
            input,
            hidden,
            logit,
        }
    }

    pub fn forward(&self, e: &Event) -> Activations {
        self.forward_tokens(self.tokens(e))
    }

    /// Accumulates `dlogit * d(logit)/d(params)` into `grad`.
    pub fn backward(&self, act: &Activations, dlogit: f64, grad: &mut [f64]) {
        let l = &self.layout;
        let d = l.dim;
        let width = l.input_width();
        grad[l.b2] += dlogit;
        let mut dinput = vec![0.0; width];
        for k in 0..l.hidden {
            let h = act.hidden[k];
            grad[l.w2 + k] += dlogit * h;
            let da = dlogit * self.params[l.w2 + k] * (1.0 - h * h);
            if da == 0.0 {
                continue;
            }
            grad[l.b1 + k] += da;
            let row = l.w1 + k * width;
            let w_row = &self.params[row..row + width];
            let g_row = &mut grad[row..row + width];
            for j in 0..width {
                g_row[j] += da * act.input[j];
                dinput[j] += da * w_row[j];
            }
        }
        for (p, &t) in act.tokens.iter().enumerate() {
            let start = l.emb[p] + t * d;
            for (g, di) in grad[start..start + d].iter_mut().zip(&dinput[p * d..(p + 1) * d]) {
                *g += di;
            }
        }
    }

    /// Serialises to the `ABXN1` container (see `docs/model-format.md`).
    pub fn write_to<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(MODEL_MAGIC)?;
        w.write_all(&(self.layout.dim as u32).to_le_bytes())?;
        w.write_all(&(self.layout.hidden as u32).to_le_bytes())?;
        for v in &self.vocab {
            let words = &v.words[1..];
            w.write_all(&(words.len() as u32).to_le_bytes())?;
            for word in words {
                w.write_all(&(word.len() as u32).to_le_bytes())?;
                w.write_all(word.as_bytes())?;
            }
        }
        w.write_all(&(self.params.len() as u64).to_le_bytes())?;
        for p in &self.params {
            w.write_all(&p.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<MlpScorer, ModelError> {
        let mut magic = [0u8; 5];
        r.read_exact(&mut magic).map_err(|_| ModelError::BadMagic)?;
        if &magic != MODEL_MAGIC {
            return Err(ModelError::BadMagic);
        }
        let truncated = |e: io::Error| ModelError::Corrupt(e.to_string());
        let mut u32_buf = [0u8; 4];
        let mut read_u32 = |r: &mut R| -> Result<u32, ModelError> {
            r.read_exact(&mut u32_buf).map_err(truncated)?;
            Ok(u32::from_le_bytes(u32_buf))
        };
        let dim = read_u32(&mut r)? as usize;
        let hidden = read_u32(&mut r)? as usize;
        let mut vocab: Vec<Vocab> = Vec::with_capacity(3);
        for _ in 0..3 {
            let n = read_u32(&mut r)? as usize;
            let mut words = Vec::with_capacity(n.min(1 << 20));
            for _ in 0..n {
                let len = read_u32(&mut r)? as usize;
                let mut bytes = vec![0u8; len];
                r.read_exact(&mut bytes).map_err(truncated)?;
                words.push(
                    String::from_utf8(bytes).map_err(|e| ModelError::Corrupt(e.to_string()))?,
                );
            }
            let v = Vocab::new(words);
            if v.len() != n + 1 {
                return Err(ModelError::Corrupt("vocabulary has duplicate words".into()));
            }
            vocab.push(v);
        }
        let mut u64_buf = [0u8; 8];
        r.read_exact(&mut u64_buf).map_err(truncated)?;
        let count = u64::from_le_bytes(u64_buf) as usize;
        let vocab: [Vocab; 3] = vocab.try_into().expect("three vocabularies");
        let expected = Layout::new(dim, hidden, [vocab[0].len(), vocab[1].len(), vocab[2].len()]).total;
        if count != expected {
            return Err(ModelError::Corrupt(format!(
                "parameter count {count} does not match layout ({expected})"
            )));
        }
        let mut params = Vec::with_capacity(count);
        let mut f_buf = [0u8; 8];
        for _ in 0..count {
            r.read_exact(&mut f_buf).map_err(truncated)?;
            params.push(f64::from_le_bytes(f_buf));
        }
        let mut rest = Vec::new();
        r.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(ModelError::Corrupt(format!("{} trailing bytes", rest.len())));
        }
        MlpScorer::from_parts(vocab, dim, hidden, params)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<MlpScorer, ModelError> {
        let bytes = fs::read(path)?;
        MlpScorer::read_from(&bytes[..])
    }
}

/// Logit of the network for `e`.
pub fn mlp_forward(sc: &MlpScorer, e: &Event) -> f64 {
    sc.forward(e).logit
}

impl Scorer for MlpScorer {
    fn name(&self) -> String {
        format!("mlp(d={}, hidden={})", self.layout.dim, self.layout.hidden)
    }

    fn logit(&self, event: &Event) -> Result<f64, ScoreError> {
        let z = mlp_forward(self, event);
        if z.is_finite() {
            Ok(z)
        } else {
            Err(ScoreError::NonFinite(event.clone()))
        }
    }
}
