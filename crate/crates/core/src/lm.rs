//! Character n-gram language model with interpolated Witten-Bell smoothing.
//!
//! Symbols are Unicode scalar values. Every line is left-padded with
//! `order - 1` beginning-of-sequence markers; there is no end marker, so the
//! perplexity of a string of `L` characters averages over exactly `L`
//! predictions.
//!
//! For a context `h` with `c(h)` observations and `T(h)` distinct followers,
//!
//! ```text
//! P(w | h) = (c(h, w) + T(h) * P(w | h')) / (c(h) + T(h))
//! ```
//!
//! where `h'` drops the oldest symbol. Contexts never seen in training
//! defer to `h'` unchanged. The recursion bottoms out in a uniform
//! distribution over the training alphabet plus one UNK slot, so every
//! conditional distribution, UNK included, sums to one.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum number of training characters.
pub const MIN_TRAINING_CHARS: usize = 10_000;
pub const DEFAULT_ORDER: usize = 5;

/// Beginning-of-sequence marker; outside the Unicode scalar range.
const BOS: u32 = 0x11_0000;

const MAGIC: &[u8; 4] = b"TCLM";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
struct ContextCounts {
    total: u64,
    next: BTreeMap<u32, u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharLangModel {
    order: usize,
    vocab: BTreeSet<char>,
    /// `tables[k]` holds contexts of exactly `k` symbols.
    tables: Vec<BTreeMap<Vec<u32>, ContextCounts>>,
}

impl CharLangModel {
    /// Train on lines of text. Empty lines are ignored; at least
    /// [`MIN_TRAINING_CHARS`] characters are required.
    pub fn train<I, S>(lines: I, order: usize) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        if order < 2 {
            return Err(Error::validation(
                "order",
                format!("must be >= 2, got {order}"),
            ));
        }
        let mut model = CharLangModel {
            order,
            vocab: BTreeSet::new(),
            tables: vec![BTreeMap::new(); order],
        };
        let mut n_chars = 0usize;
        let mut padded: Vec<u32> = Vec::new();
        for line in lines {
            let line = line.as_ref();
            if line.is_empty() {
                continue;
            }
            padded.clear();
            padded.resize(order - 1, BOS);
            for c in line.chars() {
                model.vocab.insert(c);
                padded.push(c as u32);
                n_chars += 1;
            }
            for pos in order - 1..padded.len() {
                let sym = padded[pos];
                for (k, table) in model.tables.iter_mut().enumerate() {
                    let ctx = &padded[pos - k..pos];
                    let entry = match table.get_mut(ctx) {
                        Some(e) => e,
                        None => table.entry(ctx.to_vec()).or_default(),
                    };
                    entry.total += 1;
                    *entry.next.entry(sym).or_default() += 1;
                }
            }
        }
        if n_chars < MIN_TRAINING_CHARS {
            return Err(Error::InsufficientData {
                what: "language model".into(),
                got: n_chars,
                need: MIN_TRAINING_CHARS,
            });
        }
        Ok(model)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    /// `P(sym | history)`; `history` holds preceding characters (only the last
    /// `order - 1` matter; missing ones are BOS). `None` asks for the UNK mass.
    fn prob_sym(&self, history: &[u32], sym: Option<u32>) -> f64 {
        let mut p = 1.0 / (self.vocab.len() as f64 + 1.0);
        for (k, table) in self.tables.iter().enumerate() {
            let ctx = &history[history.len() - k..];
            if let Some(c) = table.get(ctx) {
                let count = sym.and_then(|s| c.next.get(&s)).copied().unwrap_or(0) as f64;
                let types = c.next.len() as f64;
                p = (count + types * p) / (c.total as f64 + types);
            }
        }
        p
    }

    fn history(&self, prefix: &[char]) -> Vec<u32> {
        let keep = self.order - 1;
        let mut h = vec![BOS; keep.saturating_sub(prefix.len())];
        h.extend(
            prefix[prefix.len().saturating_sub(keep)..]
                .iter()
                .map(|&c| c as u32),
        );
        h
    }

    fn symbol(&self, c: char) -> Option<u32> {
        self.vocab.contains(&c).then_some(c as u32)
    }

    /// Probability of `next` after the characters in `prefix`.
    pub fn prob(&self, prefix: &str, next: char) -> f64 {
        let prefix: Vec<char> = prefix.chars().collect();
        self.prob_sym(&self.history(&prefix), self.symbol(next))
    }

    /// Full next-character distribution after `prefix`, plus the UNK mass.
    pub fn next_distribution(&self, prefix: &str) -> (Vec<(char, f64)>, f64) {
        let prefix: Vec<char> = prefix.chars().collect();
        let h = self.history(&prefix);
        let dist = self
            .vocab
            .iter()
            .map(|&c| (c, self.prob_sym(&h, Some(c as u32))))
            .collect();
        (dist, self.prob_sym(&h, None))
    }

    /// Sum of `log2 P(x_i | context)` over the characters of `text`.
    pub fn log2_prob(&self, text: &str) -> f64 {
        let chars: Vec<char> = text.chars().collect();
        let mut h: Vec<u32> = vec![BOS; self.order - 1];
        let mut total = 0.0;
        for &c in &chars {
            let p = self.prob_sym(&h, self.symbol(c));
            total += p.log2();
            h.remove(0);
            h.push(c as u32);
        }
        total
    }

    /// Per-character perplexity `2^(-(1/L) Σ log2 p(x_i | ctx))`.
    pub fn perplexity(&self, text: &str) -> Result<f64> {
        let len = text.chars().count();
        if len == 0 {
            return Err(Error::validation("text", "perplexity of an empty string"));
        }
        Ok((-self.log2_prob(text) / len as f64).exp2())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        w.write_all(MAGIC)
            .and_then(|()| w.write_all(&FORMAT_VERSION.to_le_bytes()))
            .map_err(|e| Error::io(path, e))?;
        bincode::serialize_into(&mut w, self).map_err(|e| Error::data(e.to_string()))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut r = BufReader::new(file);
        let mut header = [0u8; 8];
        r.read_exact(&mut header).map_err(|e| Error::io(path, e))?;
        if &header[..4] != MAGIC {
            return Err(Error::data(format!(
                "{}: not a language model file",
                path.display()
            )));
        }
        let version = u32::from_le_bytes(header[4..].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(Error::data(format!(
                "{}: unsupported model version {version}",
                path.display()
            )));
        }
        let model: CharLangModel = bincode::deserialize_from(r)
            .map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
        if model.order < 2 || model.tables.len() != model.order {
            return Err(Error::data(format!(
                "{}: corrupt model tables",
                path.display()
            )));
        }
        Ok(model)
    }
}

/// Language models keyed by language tag, stored as `<dir>/<lang>.lm`.
#[derive(Debug, Clone, Default)]
pub struct ModelSet {
    models: BTreeMap<String, CharLangModel>,
}

impl ModelSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, lang: impl Into<String>, model: CharLangModel) {
        self.models.insert(lang.into(), model);
    }

    pub fn get(&self, lang: &str) -> Option<&CharLangModel> {
        self.models.get(lang)
    }

    pub fn langs(&self) -> impl Iterator<Item = &str> {
        self.models.keys().map(String::as_str)
    }

    pub fn load_dir(dir: &Path) -> Result<Self> {
        let mut set = ModelSet::new();
        let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        let mut paths: Vec<_> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "lm"))
            .collect();
        paths.sort();
        for path in paths {
            let lang = path.file_stem().unwrap().to_string_lossy().into_owned();
            set.insert(lang, CharLangModel::load(&path)?);
        }
        Ok(set)
    }
}
