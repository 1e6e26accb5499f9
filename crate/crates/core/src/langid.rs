//! Language identification and the human-language edit filter.
//!
//! Detection is character-trigram Naive Bayes with add-one smoothing over
//! lowercased text, backing off to bigrams and unigrams for contexts never
//! seen in training. A separate heuristic scores how much a line looks like
//! program source; edits where either side looks like code, where either
//! detection is unsure, or where the two sides disagree on language are
//! dropped.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Edit;

pub const MIN_CORPUS_CHARS: usize = 10_000;
pub const UNKNOWN: &str = "unknown";

const BOS: char = '\u{2}';
const PROFILE_FORMAT: &str = "typocorpus-langid";
const PROFILE_VERSION: u32 = 1;

/// Character n-gram statistics (orders 1 to 3) for one language.
/// Log-probabilities are natural logs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LangProfile {
    pub lang: String,
    pub prior: f64,
    /// Distinct characters across all training corpora plus one UNK slot.
    /// Shared by every profile trained together, so all profiles are
    /// distributions over the same symbols.
    pub vocab_size: u64,
    /// N-gram `..c` -> `ln p(c | ..)` for every n-gram seen in training.
    pub ngram_logprobs: BTreeMap<String, f64>,
    /// Context -> `ln p(c | context)` for any `c` not seen after it. The
    /// empty context holds the unigram fallback.
    pub context_unseen: BTreeMap<String, f64>,
}

const MAX_ORDER: usize = 3;

fn training_lines(text: &str) -> impl Iterator<Item = String> + '_ {
    text.lines().map(normalize).filter(|l| !l.is_empty())
}

impl LangProfile {
    fn build(lang: &str, text: &str, prior: f64, vocab_size: u64) -> Result<Self> {
        let n_chars = text.chars().count();
        if n_chars < MIN_CORPUS_CHARS {
            return Err(Error::InsufficientData {
                what: format!("language {lang:?}"),
                got: n_chars,
                need: MIN_CORPUS_CHARS,
            });
        }
        let mut grams: BTreeMap<String, u64> = BTreeMap::new();
        let mut contexts: BTreeMap<String, u64> = BTreeMap::new();
        contexts.insert(String::new(), 0);
        for norm in training_lines(text) {
            let padded: Vec<char> = [BOS, BOS].into_iter().chain(norm.chars()).collect();
            for i in MAX_ORDER - 1..padded.len() {
                for n in 1..=MAX_ORDER {
                    let gram = &padded[i + 1 - n..=i];
                    *grams.entry(gram.iter().collect()).or_default() += 1;
                    *contexts.entry(gram[..n - 1].iter().collect()).or_default() += 1;
                }
            }
        }
        let denom = |ctx: &str| (contexts[ctx] + vocab_size) as f64;
        let ngram_logprobs = grams
            .iter()
            .map(|(g, &n)| {
                let ctx: String = g.chars().take(g.chars().count() - 1).collect();
                (g.clone(), ((n + 1) as f64 / denom(&ctx)).ln())
            })
            .collect();
        let context_unseen = contexts
            .keys()
            .map(|ctx| (ctx.clone(), (1.0 / denom(ctx)).ln()))
            .collect();
        let profile = LangProfile {
            lang: lang.to_string(),
            prior,
            vocab_size,
            ngram_logprobs,
            context_unseen,
        };
        profile.validate()?;
        Ok(profile)
    }

    /// `ln p(c | a b)` for the window `[a, b, c]`, backing off to shorter
    /// contexts that were never seen in training.
    fn log_prob(&self, window: &[char]) -> f64 {
        let mut key = String::with_capacity(12);
        for start in 0..window.len() {
            key.clear();
            key.extend(&window[start..]);
            if let Some(&lp) = self.ngram_logprobs.get(&key) {
                return lp;
            }
            key.pop();
            if let Some(&lp) = self.context_unseen.get(&key) {
                return lp;
            }
        }
        -(self.vocab_size as f64).ln()
    }

    fn score(&self, padded: &[char]) -> f64 {
        padded
            .windows(MAX_ORDER)
            .fold(self.prior, |acc, w| acc + self.log_prob(w))
    }

    /// Checks that each context's next-character distribution sums to one.
    pub fn validate(&self) -> Result<()> {
        if self.vocab_size == 0 || self.prior.is_nan() || self.prior > 0.0 {
            return Err(Error::validation(
                format!("profile {}", self.lang),
                "bad vocabulary size or prior",
            ));
        }
        let mut seen: BTreeMap<String, (f64, u64)> = BTreeMap::new();
        for (g, lp) in &self.ngram_logprobs {
            let ctx: String = g
                .chars()
                .take(g.chars().count().saturating_sub(1))
                .collect();
            let e = seen.entry(ctx).or_default();
            e.0 += lp.exp();
            e.1 += 1;
        }
        for (ctx, unseen) in &self.context_unseen {
            let (mass, k) = seen.get(ctx).copied().unwrap_or_default();
            if k >= self.vocab_size {
                return Err(Error::validation(
                    format!("profile {}", self.lang),
                    format!("context {ctx:?} has more continuations than the vocabulary"),
                ));
            }
            let total = mass + (self.vocab_size - k) as f64 * unseen.exp();
            if (total - 1.0).abs() > 1e-9 {
                return Err(Error::validation(
                    format!("profile {}", self.lang),
                    format!("context {ctx:?} sums to {total}"),
                ));
            }
        }
        if seen
            .keys()
            .any(|ctx| !self.context_unseen.contains_key(ctx))
        {
            return Err(Error::validation(
                format!("profile {}", self.lang),
                "n-gram without context entry",
            ));
        }
        Ok(())
    }
}

/// Lowercase, drop control characters, collapse whitespace runs.
fn normalize(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for word in text.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.extend(
            word.chars()
                .filter(|c| !c.is_control())
                .flat_map(char::to_lowercase),
        );
    }
    out
}

/// Train one profile per language from raw text. Priors are uniform and
/// all profiles share one vocabulary.
pub fn train_profiles(corpora: &BTreeMap<String, String>) -> Result<Vec<LangProfile>> {
    if corpora.is_empty() {
        return Err(Error::data("no training corpora given"));
    }
    let prior = (1.0 / corpora.len() as f64).ln();
    let vocab: BTreeSet<char> = corpora
        .values()
        .flat_map(|text| training_lines(text).flat_map(|l| l.chars().collect::<Vec<_>>()))
        .collect();
    let vocab_size = vocab.len() as u64 + 1;
    corpora
        .iter()
        .map(|(lang, text)| LangProfile::build(lang, text, prior, vocab_size))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub lang: String,
    pub confidence: f64,
}

impl Detection {
    fn unknown() -> Self {
        Detection {
            lang: UNKNOWN.to_string(),
            confidence: 0.0,
        }
    }
}

/// Most probable language and its posterior probability. Texts shorter than
/// four characters are `("unknown", 0)`.
pub fn detect(text: &str, profiles: &[LangProfile]) -> Detection {
    let norm = normalize(text);
    if profiles.is_empty() || norm.chars().count() < 4 {
        return Detection::unknown();
    }
    let padded: Vec<char> = [BOS, BOS].into_iter().chain(norm.chars()).collect();
    let scores: Vec<f64> = profiles.iter().map(|p| p.score(&padded)).collect();
    let (best, &top) = scores
        .iter()
        .enumerate()
        .fold((0, &f64::NEG_INFINITY), |acc, (i, s)| {
            if *s > *acc.1 {
                (i, s)
            } else {
                acc
            }
        });
    if !top.is_finite() {
        return Detection::unknown();
    }
    let norm_sum: f64 = scores.iter().map(|s| (s - top).exp()).sum();
    Detection {
        lang: profiles[best].lang.clone(),
        confidence: (1.0 / norm_sum).clamp(0.0, 1.0),
    }
}

const CODE_SYMBOLS: &str = "{}();=<>[]|&#$\\/@*+~`^%";

fn identifier_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"\b(?:_*[a-z][a-z0-9]*[A-Z][A-Za-z0-9]*|_*[A-Za-z][A-Za-z0-9]*_[A-Za-z0-9_]*)\b",
        )
        .unwrap()
    })
}

/// How much a line looks like program source, in `[0, 1]`.
///
/// Three signals combined as a noisy-or: the share of operator/bracket
/// characters (saturating once one character in six is a symbol), a camelCase or snake_case identifier, and
/// a long run of text with no spaces. Monotone in the symbol share.
pub fn code_likeness(text: &str) -> f64 {
    let trimmed = text.trim();
    let n = trimmed.chars().count();
    if n == 0 {
        return 0.0;
    }
    let symbols = trimmed
        .chars()
        .filter(|c| CODE_SYMBOLS.contains(*c))
        .count();
    let symbol_score = (symbols as f64 / n as f64 * 6.0).min(1.0);
    let ident_score = if identifier_re().is_match(trimmed) {
        0.4
    } else {
        0.0
    };
    let nospace_score = if n >= 12 && !trimmed.contains(char::is_whitespace) {
        0.3
    } else {
        0.0
    };
    1.0 - (1.0 - symbol_score) * (1.0 - ident_score) * (1.0 - nospace_score)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    /// Lines scoring at or above this are treated as code.
    pub code_threshold: f64,
    pub min_confidence: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            code_threshold: 0.5,
            min_confidence: 0.5,
        }
    }
}

/// Keep an edit only if both sides are human language and agree on it.
/// The kept edit has `lang` set on both sides; text is never modified.
pub fn filter_edit(edit: &Edit, profiles: &[LangProfile], cfg: &FilterConfig) -> Option<Edit> {
    let side_ok = |text: &str| -> Option<Detection> {
        if code_likeness(text) >= cfg.code_threshold {
            return None;
        }
        let d = detect(text, profiles);
        (d.lang != UNKNOWN && d.confidence >= cfg.min_confidence).then_some(d)
    };
    let src = side_ok(&edit.src.text)?;
    let tgt = side_ok(&edit.tgt.text)?;
    if src.lang != tgt.lang {
        return None;
    }
    let mut kept = edit.clone();
    kept.src.lang = Some(src.lang);
    kept.tgt.lang = Some(tgt.lang);
    Some(kept)
}

#[derive(Serialize, Deserialize)]
struct ProfileFile {
    format: String,
    version: u32,
    profile: LangProfile,
}

pub fn save_profiles(dir: &Path, profiles: &[LangProfile]) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for p in profiles {
        let path = dir.join(format!("{}.json", p.lang));
        let file = ProfileFile {
            format: PROFILE_FORMAT.into(),
            version: PROFILE_VERSION,
            profile: p.clone(),
        };
        let json = serde_json::to_string(&file).map_err(|e| Error::data(e.to_string()))?;
        fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

/// Load every `<lang>.json` profile in `dir`, sorted by language tag.
/// Run manifests (`*.manifest.json`) are ignored.
pub fn load_profiles(dir: &Path) -> Result<Vec<LangProfile>> {
    let mut paths: Vec<_> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            let name = p.file_name().unwrap_or_default().to_string_lossy();
            name.ends_with(".json") && !name.ends_with(".manifest.json")
        })
        .collect();
    paths.sort();
    let mut profiles = Vec::with_capacity(paths.len());
    for path in paths {
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let file: ProfileFile = serde_json::from_str(&text)
            .map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
        if file.format != PROFILE_FORMAT || file.version != PROFILE_VERSION {
            return Err(Error::data(format!(
                "{}: unsupported profile format {} v{}",
                path.display(),
                file.format,
                file.version
            )));
        }
        file.profile.validate()?;
        profiles.push(file.profile);
    }
    if profiles.is_empty() {
        return Err(Error::data(format!(
            "no language profiles in {}",
            dir.display()
        )));
    }
    profiles.sort_by(|a, b| a.lang.cmp(&b.lang));
    Ok(profiles)
}
