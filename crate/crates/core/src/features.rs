//! Per-edit classifier features: perplexity ratio, normalized edit
//! distance, and the numbers-only flag.

use serde::{Deserialize, Serialize};

use crate::atomic::atomic_edits;
use crate::error::{Error, Result};
use crate::lm::ModelSet;
use crate::model::Edit;

pub const PPL_RATIO_MIN: f64 = 1e-3;
pub const PPL_RATIO_MAX: f64 = 1e3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    /// PP(target) / PP(source), clamped to `[1e-3, 1e3]`.
    pub ppl_ratio: f64,
    pub norm_dist: f64,
    #[serde(with = "bool_as_int")]
    pub numeric_only: bool,
}

impl FeatureVector {
    pub(crate) fn validate(&self) -> std::result::Result<(), String> {
        if !(PPL_RATIO_MIN..=PPL_RATIO_MAX).contains(&self.ppl_ratio) {
            return Err(format!("ppl_ratio {} outside [1e-3, 1e3]", self.ppl_ratio));
        }
        if !(0.0..=1.0).contains(&self.norm_dist) {
            return Err(format!("norm_dist {} outside [0, 1]", self.norm_dist));
        }
        Ok(())
    }

    /// Features in classifier order: ppl_ratio, norm_dist, numeric_only.
    pub fn as_array(&self) -> [f64; 3] {
        [
            self.ppl_ratio,
            self.norm_dist,
            if self.numeric_only { 1.0 } else { 0.0 },
        ]
    }
}

mod bool_as_int {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &bool, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(u8::from(*v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
        match u8::deserialize(d)? {
            0 => Ok(false),
            1 => Ok(true),
            n => Err(serde::de::Error::custom(format!(
                "numeric_only must be 0 or 1, got {n}"
            ))),
        }
    }
}

/// Levenshtein distance over Unicode scalar values with unit costs.
pub fn levenshtein(x: &str, y: &str) -> usize {
    let a: Vec<char> = x.chars().collect();
    let b: Vec<char> = y.chars().collect();
    levenshtein_chars(&a, &b)
}

pub(crate) fn levenshtein_chars(a: &[char], b: &[char]) -> usize {
    let prefix = a.iter().zip(b).take_while(|(p, q)| p == q).count();
    let (a, b) = (&a[prefix..], &b[prefix..]);
    let suffix = a
        .iter()
        .rev()
        .zip(b.iter().rev())
        .take_while(|(p, q)| p == q)
        .count();
    let (a, b) = (&a[..a.len() - suffix], &b[..b.len() - suffix]);
    if a.is_empty() || b.is_empty() {
        return a.len().max(b.len());
    }

    // Doubling band: a result within the band width is exact, because any
    // script of cost d stays within d cells of the diagonal.
    let mut band = a.len().abs_diff(b.len()).max(1);
    loop {
        if let Some(d) = banded_distance(a, b, band) {
            return d;
        }
        band *= 2;
    }
}

fn banded_distance(a: &[char], b: &[char], band: usize) -> Option<usize> {
    const INF: usize = usize::MAX / 2;
    let (n, m) = (a.len(), b.len());
    let band = band.min(n.max(m));
    let mut prev: Vec<usize> = (0..=m).map(|j| if j <= band { j } else { INF }).collect();
    let mut cur = vec![INF; m + 1];
    for i in 1..=n {
        let lo = i.saturating_sub(band);
        let hi = (i + band).min(m);
        cur[0] = if i <= band { i } else { INF };
        if lo > 1 {
            cur[lo - 1] = INF;
        }
        for j in lo.max(1)..=hi {
            let sub = prev[j - 1] + usize::from(a[i - 1] != b[j - 1]);
            let del = prev[j] + 1;
            let ins = cur[j - 1] + 1;
            cur[j] = sub.min(del).min(ins);
        }
        if hi < m {
            cur[hi + 1] = INF;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    let d = prev[m];
    (d <= band).then_some(d)
}

/// Edit distance divided by the longer string's length; 0 when both are empty.
pub fn norm_edit_distance(x: &str, y: &str) -> f64 {
    let a: Vec<char> = x.chars().collect();
    let b: Vec<char> = y.chars().collect();
    let longest = a.len().max(b.len());
    if longest == 0 {
        return 0.0;
    }
    levenshtein_chars(&a, &b) as f64 / longest as f64
}

/// True when every atomic edit between `x` and `y` touches ASCII digits only.
/// Identical strings have no edits and yield false.
pub fn numeric_only(x: &str, y: &str) -> bool {
    let edits = atomic_edits(x, y);
    let digits = |s: &str| s.chars().all(|c| c.is_ascii_digit());
    !edits.is_empty()
        && edits
            .iter()
            .all(|e| digits(&e.src_text) && digits(&e.tgt_text))
}

pub fn clamp_ratio(r: f64) -> f64 {
    r.clamp(PPL_RATIO_MIN, PPL_RATIO_MAX)
}

/// Compute features for an edit using the model for its language, storing
/// both perplexities and the feature vector on the edit.
pub fn featurize(edit: &mut Edit, models: &ModelSet) -> Result<FeatureVector> {
    let lang = edit
        .lang()
        .ok_or_else(|| Error::data("edit has no language tag; run the language filter first"))?;
    let model = models
        .get(lang)
        .ok_or_else(|| Error::data(format!("no language model for {lang:?}")))?;
    let src_ppl = model.perplexity(&edit.src.text)?;
    let tgt_ppl = model.perplexity(&edit.tgt.text)?;
    let fv = FeatureVector {
        ppl_ratio: clamp_ratio(tgt_ppl / src_ppl),
        norm_dist: norm_edit_distance(&edit.src.text, &edit.tgt.text),
        numeric_only: numeric_only(&edit.src.text, &edit.tgt.text),
    };
    edit.src.ppl = Some(src_ppl);
    edit.tgt.ppl = Some(tgt_ppl);
    edit.features = Some(fv);
    Ok(fv)
}
