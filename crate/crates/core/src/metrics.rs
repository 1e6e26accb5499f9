//! Evaluation: precision/recall/F-beta, spell-checker scoring against gold
//! corrections, corpus statistics, and Welch's t-test.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::Serialize;
use statrs::function::beta::beta_reg;

use crate::atomic::{atomic_edits, AtomicEdit};
use crate::error::{Error, Result};
use crate::model::CommitRecord;

/// Category for system changes that touch no gold edit.
pub const OTHER: &str = "OTHER";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn add(&mut self, other: &ConfusionCounts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }
}

/// Precision, recall and F-beta for one set of counts.
///
/// Precision is 1 when nothing was proposed and recall is 1 when there was
/// nothing to find; F is 0 when both precision and recall are 0.
pub fn precision_recall_fbeta(c: &ConfusionCounts, beta: f64) -> (f64, f64, f64) {
    let ratio = |num: u64, den: u64| {
        if den == 0 {
            1.0
        } else {
            num as f64 / den as f64
        }
    };
    let p = ratio(c.tp, c.tp + c.fp);
    let r = ratio(c.tp, c.tp + c.fn_);
    (p, r, fbeta(p, r, beta))
}

pub fn fbeta(p: f64, r: f64, beta: f64) -> f64 {
    let b2 = beta * beta;
    let den = b2 * p + r;
    if den == 0.0 {
        0.0
    } else {
        (1.0 + b2) * p * r / den
    }
}

/// One gold correction: a source line, its corrected form and the edit type.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoldEdit {
    pub id: String,
    pub category: String,
    pub src: String,
    pub tgt: String,
}

fn parse_tsv_fields(line: &str, n: usize, line_no: usize) -> Result<Vec<String>> {
    let fields: Vec<&str> = line.splitn(n, '\t').collect();
    if fields.len() != n {
        return Err(Error::data(format!(
            "line {line_no}: expected {n} tab-separated fields, got {}",
            fields.len()
        )));
    }
    Ok(fields.into_iter().map(unescape_tsv).collect())
}

/// TSV fields use `\t`, `\n` and `\\` escapes.
pub fn unescape_tsv(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            Some('\\') => out.push('\\'),
            Some(other) => {
                out.push('\\');
                out.push(other);
            }
            None => out.push('\\'),
        }
    }
    out
}

pub fn escape_tsv(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

pub(crate) fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
}

/// Gold file: `id<TAB>category<TAB>src<TAB>tgt` per line.
pub fn parse_gold_tsv(text: &str) -> Result<Vec<GoldEdit>> {
    data_lines(text)
        .map(|(n, line)| {
            let mut f = parse_tsv_fields(line, 4, n)?.into_iter();
            Ok(GoldEdit {
                id: f.next().unwrap(),
                category: f.next().unwrap(),
                src: f.next().unwrap(),
                tgt: f.next().unwrap(),
            })
        })
        .collect()
}

/// System file: `id<TAB>hypothesis` per line.
pub fn parse_system_tsv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, line) in data_lines(text) {
        let mut f = parse_tsv_fields(line, 2, n)?.into_iter();
        let id = f.next().unwrap();
        if out.insert(id.clone(), f.next().unwrap()).is_some() {
            return Err(Error::data(format!("line {n}: duplicate id {id:?}")));
        }
    }
    Ok(out)
}

fn overlaps(a: &AtomicEdit, g: &AtomicEdit) -> bool {
    if a.src_start == a.src_end || g.src_start == g.src_end {
        // Insertions are points: they overlap a span they touch.
        let (p, q) = if a.src_start == a.src_end {
            (a, g)
        } else {
            (g, a)
        };
        q.src_start <= p.src_start && p.src_start <= q.src_end
    } else {
        a.src_start < g.src_end && g.src_start < a.src_end
    }
}

/// Per-category counts of a correction system against gold edits.
///
/// Both the gold target and the system hypothesis are reduced to atomic
/// edits against the source. A system edit with the same source span and
/// replacement as a gold edit is a true positive; other system edits are
/// false positives, charged to the line's category when they overlap a gold
/// edit and to [`OTHER`] otherwise; gold edits left unmatched are false
/// negatives.
pub fn score_system(
    gold: &[GoldEdit],
    system: &BTreeMap<String, String>,
) -> Result<BTreeMap<String, ConfusionCounts>> {
    let gold_ids: BTreeSet<&str> = gold.iter().map(|g| g.id.as_str()).collect();
    if gold_ids.len() != gold.len() {
        return Err(Error::data("gold file contains duplicate ids"));
    }
    let missing: Vec<&str> = gold_ids
        .iter()
        .copied()
        .filter(|id| !system.contains_key(*id))
        .collect();
    let extra: Vec<&str> = system
        .keys()
        .map(String::as_str)
        .filter(|id| !gold_ids.contains(id))
        .collect();
    if !missing.is_empty() || !extra.is_empty() {
        return Err(Error::data(format!(
            "gold and system ids differ; missing from system: {missing:?}; not in gold: {extra:?}"
        )));
    }

    let mut counts: BTreeMap<String, ConfusionCounts> = BTreeMap::new();
    for g in gold {
        let gold_edits = atomic_edits(&g.src, &g.tgt);
        let sys_edits = atomic_edits(&g.src, &system[&g.id]);
        let key = |e: &AtomicEdit| (e.src_start, e.src_end, e.tgt_text.clone());
        let gold_keys: BTreeSet<_> = gold_edits.iter().map(key).collect();
        let sys_keys: BTreeSet<_> = sys_edits.iter().map(key).collect();

        let entry = counts.entry(g.category.clone()).or_default();
        for ge in &gold_edits {
            if sys_keys.contains(&key(ge)) {
                entry.tp += 1;
            } else {
                entry.fn_ += 1;
            }
        }
        for se in sys_edits.iter().filter(|se| !gold_keys.contains(&key(se))) {
            let cat = if gold_edits.iter().any(|ge| overlaps(se, ge)) {
                g.category.clone()
            } else {
                OTHER.to_string()
            };
            counts.entry(cat).or_default().fp += 1;
        }
    }
    Ok(counts)
}

/// One row of corpus statistics. `n_typo_edits` is `None` when no edit in
/// the row carries a typo label.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct StatsRow {
    pub lang: String,
    pub n_commits: u64,
    pub n_typo_edits: Option<u64>,
    pub n_all_edits: u64,
    pub n_chars: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct StatsReport {
    /// Sorted by edit count descending, then language tag.
    pub rows: Vec<StatsRow>,
    pub total: StatsRow,
}

/// Corpus statistics per language. A commit counts once for every language
/// it has an edit in, so per-language commit counts can add up to more than
/// the total.
pub fn corpus_stats<'a, I>(records: I) -> StatsReport
where
    I: IntoIterator<Item = &'a CommitRecord>,
{
    let mut rows: BTreeMap<String, StatsRow> = BTreeMap::new();
    let mut total = StatsRow {
        lang: "Total".into(),
        ..Default::default()
    };
    for rec in records {
        total.n_commits += 1;
        let mut langs = BTreeSet::new();
        for e in &rec.edits {
            let lang = e.lang().unwrap_or("unknown");
            let row = rows.entry(lang.to_string()).or_insert_with(|| StatsRow {
                lang: lang.to_string(),
                ..Default::default()
            });
            let chars = (e.src.text.chars().count() + e.tgt.text.chars().count()) as u64;
            row.n_all_edits += 1;
            row.n_chars += chars;
            total.n_all_edits += 1;
            total.n_chars += chars;
            if let Some(t) = e.is_typo {
                let inc = u64::from(t);
                *row.n_typo_edits.get_or_insert(0) += inc;
                *total.n_typo_edits.get_or_insert(0) += inc;
            }
            langs.insert(lang.to_string());
        }
        for lang in langs {
            rows.get_mut(&lang).unwrap().n_commits += 1;
        }
    }
    let mut rows: Vec<StatsRow> = rows.into_values().collect();
    rows.sort_by(|a, b| {
        b.n_all_edits
            .cmp(&a.n_all_edits)
            .then_with(|| a.lang.cmp(&b.lang))
    });
    StatsReport { rows, total }
}

fn typo_cell(v: Option<u64>) -> String {
    v.map_or_else(|| "---".to_string(), |n| n.to_string())
}

impl StatsReport {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("lang\tcommits\ttypo_edits\tall_edits\tchars\n");
        for r in self.rows.iter().chain(std::iter::once(&self.total)) {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}",
                r.lang,
                r.n_commits,
                typo_cell(r.n_typo_edits),
                r.n_all_edits,
                r.n_chars
            );
        }
        out
    }

    pub fn to_table(&self) -> String {
        let header = [
            "Language",
            "# commits",
            "# typo edits",
            "# all edits",
            "# chars",
        ];
        let cells: Vec<[String; 5]> = self
            .rows
            .iter()
            .chain(std::iter::once(&self.total))
            .map(|r| {
                [
                    r.lang.clone(),
                    r.n_commits.to_string(),
                    typo_cell(r.n_typo_edits),
                    r.n_all_edits.to_string(),
                    r.n_chars.to_string(),
                ]
            })
            .collect();
        render_table(&header, &cells, cells.len().saturating_sub(1))
    }
}

/// Plain-text table: first column left-aligned, the rest right-aligned. A
/// rule is drawn before row `rule_before` (used for totals).
pub fn render_table<const N: usize>(
    header: &[&str; N],
    rows: &[[String; N]],
    rule_before: usize,
) -> String {
    let mut width = header.map(|h| h.chars().count());
    for r in rows {
        for (w, c) in width.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let fmt_row = |cells: Vec<&str>| -> String {
        let mut line = String::new();
        for (i, c) in cells.iter().enumerate() {
            let pad = width[i] - c.chars().count();
            if i == 0 {
                line.push_str(c);
                line.push_str(&" ".repeat(pad));
            } else {
                line.push_str("  ");
                line.push_str(&" ".repeat(pad));
                line.push_str(c);
            }
        }
        line.trim_end().to_string()
    };
    let rule = "-".repeat(width.iter().sum::<usize>() + 2 * (N - 1));
    let mut out = String::new();
    let _ = writeln!(out, "{}", fmt_row(header.to_vec()));
    let _ = writeln!(out, "{rule}");
    for (i, r) in rows.iter().enumerate() {
        if i == rule_before && i > 0 {
            let _ = writeln!(out, "{rule}");
        }
        let _ = writeln!(out, "{}", fmt_row(r.iter().map(String::as_str).collect()));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TTest {
    pub t: f64,
    pub df: f64,
    pub p_two_tailed: f64,
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Welch's unequal-variance t-test, with Welch–Satterthwaite degrees of
/// freedom and a two-tailed p-value from the regularized incomplete beta
/// function.
pub fn welch_ttest(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::data("each sample needs at least two values"));
    }
    if a.iter().chain(b).any(|x| !x.is_finite()) {
        return Err(Error::data("samples must be finite"));
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (sa, sb) = (va / a.len() as f64, vb / b.len() as f64);
    let se2 = sa + sb;
    if se2 <= 0.0 {
        return Err(Error::data("both samples have zero variance"));
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (sa * sa / (a.len() as f64 - 1.0) + sb * sb / (b.len() as f64 - 1.0));
    let p = beta_reg(df / 2.0, 0.5, df / (df + t * t)).clamp(0.0, 1.0);
    Ok(TTest {
        t,
        df,
        p_two_tailed: p,
    })
}
