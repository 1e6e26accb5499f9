//! Character alignment and atomic edits.
//!
//! An alignment is an optimal unit-cost edit script between two strings over
//! Unicode scalar values. Optimal scripts are not unique, so the backtrace
//! breaks ties in a fixed order: match, then substitute, then delete, then
//! insert. Atomic edits are the maximal runs of non-match operations in that
//! script.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::CommitRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AlignOp {
    Match,
    Substitute,
    Delete,
    Insert,
}

/// Optimal alignment of `x` onto `y` as a sequence of per-character operations.
pub fn align(x: &str, y: &str) -> Vec<AlignOp> {
    let a: Vec<char> = x.chars().collect();
    let b: Vec<char> = y.chars().collect();
    align_chars(&a, &b)
}

pub(crate) fn align_chars(a: &[char], b: &[char]) -> Vec<AlignOp> {
    let (n, m) = (a.len(), b.len());
    let w = m + 1;
    let mut dp = vec![0u32; (n + 1) * w];
    for (j, cell) in dp.iter_mut().take(w).enumerate() {
        *cell = j as u32;
    }
    for i in 1..=n {
        dp[i * w] = i as u32;
        for j in 1..=m {
            let sub = dp[(i - 1) * w + j - 1] + u32::from(a[i - 1] != b[j - 1]);
            let del = dp[(i - 1) * w + j] + 1;
            let ins = dp[i * w + j - 1] + 1;
            dp[i * w + j] = sub.min(del).min(ins);
        }
    }

    let mut ops = Vec::with_capacity(n.max(m));
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = dp[i * w + j];
        if i > 0 && j > 0 {
            let diag = dp[(i - 1) * w + j - 1];
            if a[i - 1] == b[j - 1] && diag == here {
                ops.push(AlignOp::Match);
                i -= 1;
                j -= 1;
                continue;
            }
            if a[i - 1] != b[j - 1] && diag + 1 == here {
                ops.push(AlignOp::Substitute);
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && dp[(i - 1) * w + j] + 1 == here {
            ops.push(AlignOp::Delete);
            i -= 1;
        } else {
            debug_assert!(j > 0 && dp[i * w + j - 1] + 1 == here);
            ops.push(AlignOp::Insert);
            j -= 1;
        }
    }
    ops.reverse();
    ops
}

/// Number of non-match operations in an alignment.
pub fn alignment_cost(ops: &[AlignOp]) -> usize {
    ops.iter().filter(|op| **op != AlignOp::Match).count()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AtomicKind {
    Insert,
    Delete,
    Substitute,
}

/// One contiguous inserted, deleted or substituted span. Offsets count
/// characters (Unicode scalar values), not bytes.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AtomicEdit {
    pub kind: AtomicKind,
    pub src_start: usize,
    pub src_end: usize,
    pub tgt_start: usize,
    pub tgt_end: usize,
    pub src_text: String,
    pub tgt_text: String,
}

impl AtomicEdit {
    /// Cost contribution: the longer span for a substitution, the span
    /// length otherwise.
    pub fn cost(&self) -> usize {
        (self.src_end - self.src_start).max(self.tgt_end - self.tgt_start)
    }
}

impl fmt::Display for AtomicEdit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} -> {:?}", self.src_text, self.tgt_text)
    }
}

pub fn atomic_edits(x: &str, y: &str) -> Vec<AtomicEdit> {
    let a: Vec<char> = x.chars().collect();
    let b: Vec<char> = y.chars().collect();
    let ops = align_chars(&a, &b);

    let mut edits = Vec::new();
    let (mut i, mut j) = (0, 0);
    let mut run: Option<(usize, usize, bool, bool)> = None; // start i, start j, saw src, saw tgt
    for op in ops.iter().copied().chain(std::iter::once(AlignOp::Match)) {
        if op == AlignOp::Match {
            if let Some((si, sj, has_src, has_tgt)) = run.take() {
                let kind = match (has_src, has_tgt) {
                    (true, true) => AtomicKind::Substitute,
                    (true, false) => AtomicKind::Delete,
                    _ => AtomicKind::Insert,
                };
                edits.push(AtomicEdit {
                    kind,
                    src_start: si,
                    src_end: i,
                    tgt_start: sj,
                    tgt_end: j,
                    src_text: a[si..i].iter().collect(),
                    tgt_text: b[sj..j].iter().collect(),
                });
            }
            if i < a.len() && j < b.len() {
                i += 1;
                j += 1;
            }
            continue;
        }
        let r = run.get_or_insert((i, j, false, false));
        match op {
            AlignOp::Substitute => {
                r.2 = true;
                r.3 = true;
                i += 1;
                j += 1;
            }
            AlignOp::Delete => {
                r.2 = true;
                i += 1;
            }
            AlignOp::Insert => {
                r.3 = true;
                j += 1;
            }
            AlignOp::Match => unreachable!(),
        }
    }
    edits
}

/// Apply atomic edits (sorted, non-overlapping, as produced by
/// [`atomic_edits`]) to `x`.
pub fn apply_edits(x: &str, edits: &[AtomicEdit]) -> String {
    let chars: Vec<char> = x.chars().collect();
    let mut out = String::with_capacity(x.len());
    let mut pos = 0;
    for e in edits {
        out.extend(&chars[pos..e.src_start]);
        out.push_str(&e.tgt_text);
        pos = e.src_end;
    }
    out.extend(&chars[pos..]);
    out
}

/// Visible rendering used in human-readable reports: spaces become `_`
/// and the empty string becomes `φ`.
pub fn render_visible(s: &str) -> String {
    if s.is_empty() {
        "φ".to_string()
    } else {
        s.replace(' ', "_")
    }
}

/// Ranked atomic-edit counts for one language.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrequencyRow {
    pub src_text: String,
    pub tgt_text: String,
    pub count: u64,
}

/// Count atomic edits per language (edits without a language tag fall under
/// `"unknown"`). Rows are sorted by count descending, then lexicographically
/// on (source, target); at most `top_n` rows per language are kept.
pub fn frequency_table<'a, I>(
    records: I,
    top_n: usize,
    typo_only: bool,
) -> BTreeMap<String, Vec<FrequencyRow>>
where
    I: IntoIterator<Item = &'a CommitRecord>,
{
    let mut counts: BTreeMap<String, BTreeMap<(String, String), u64>> = BTreeMap::new();
    for rec in records {
        for edit in &rec.edits {
            if typo_only && edit.is_typo != Some(true) {
                continue;
            }
            let lang = edit.lang().unwrap_or("unknown").to_string();
            let table = counts.entry(lang).or_default();
            for a in atomic_edits(&edit.src.text, &edit.tgt.text) {
                *table.entry((a.src_text, a.tgt_text)).or_default() += 1;
            }
        }
    }
    counts
        .into_iter()
        .map(|(lang, table)| {
            let mut rows: Vec<FrequencyRow> = table
                .into_iter()
                .map(|((src_text, tgt_text), count)| FrequencyRow {
                    src_text,
                    tgt_text,
                    count,
                })
                .collect();
            // BTreeMap order already gives the lexicographic tie-break; the
            // stable sort keeps it.
            rows.sort_by_key(|r| std::cmp::Reverse(r.count));
            rows.truncate(top_n);
            (lang, rows)
        })
        .collect()
}
