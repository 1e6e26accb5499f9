//! Corpus data types and the JSONL line format.
//!
//! One [`CommitRecord`] is one line of a corpus file. Keys are emitted in a
//! fixed order (`repo`, `commit`, `message`, `edits`, and inside an edit
//! `src`, `tgt`, `features`, `prob_typo`, `is_typo`, `category`) and optional
//! fields are omitted when absent, so a corpus written twice from the same
//! data is byte-identical.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureVector;

/// Maximum number of edits a commit may carry before it is treated as a
/// bulk change rather than a typo fix.
pub const MAX_EDITS: usize = 10;

/// Probability at or above which an edit is labelled a typo.
pub const TYPO_THRESHOLD: f64 = 0.5;

/// Repository metadata as seen on one activity event.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepoMeta {
    pub full_name: String,
    pub stars: u64,
    pub size_bytes: u64,
    pub license_id: String,
    pub last_event_time: DateTime<Utc>,
    pub event_kind: String,
}

impl RepoMeta {
    pub fn validate(&self) -> Result<()> {
        if self.full_name.matches('/').count() != 1 {
            return Err(Error::validation(
                "full_name",
                format!("expected owner/name, got {:?}", self.full_name),
            ));
        }
        Ok(())
    }
}

/// Annotated edit category. The first three are typos; `Semantic` is not.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Mechanical,
    Spell,
    Grammatical,
    Semantic,
}

impl Category {
    pub const ALL: [Category; 4] = [
        Category::Mechanical,
        Category::Spell,
        Category::Grammatical,
        Category::Semantic,
    ];

    pub fn is_typo(self) -> bool {
        !matches!(self, Category::Semantic)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Mechanical => "mechanical",
            Category::Spell => "spell",
            Category::Grammatical => "grammatical",
            Category::Semantic => "semantic",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Category::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::validation("category", format!("unknown category {s:?}")))
    }
}

/// One side (source or target) of an edit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditSide {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lang: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ppl: Option<f64>,
}

impl EditSide {
    pub fn new(text: impl Into<String>) -> Self {
        EditSide {
            text: text.into(),
            lang: None,
            ppl: None,
        }
    }

    fn validate(&self, field: &str) -> Result<()> {
        if self.text.contains(['\n', '\r']) {
            return Err(Error::validation(
                format!("{field}.text"),
                "contains a line break",
            ));
        }
        if let Some(ppl) = self.ppl {
            if !(ppl >= 1.0 && ppl.is_finite()) {
                return Err(Error::validation(
                    format!("{field}.ppl"),
                    format!("perplexity must be finite and >= 1, got {ppl}"),
                ));
            }
        }
        Ok(())
    }
}

/// A source line and the line that replaced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edit {
    pub src: EditSide,
    pub tgt: EditSide,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<FeatureVector>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prob_typo: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub is_typo: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<Category>,
}

impl Edit {
    pub fn new(src: impl Into<String>, tgt: impl Into<String>) -> Self {
        Edit {
            src: EditSide::new(src),
            tgt: EditSide::new(tgt),
            features: None,
            prob_typo: None,
            is_typo: None,
            category: None,
        }
    }

    /// Language shared by both sides, if the edit has been through the
    /// language filter.
    pub fn lang(&self) -> Option<&str> {
        self.src.lang.as_deref()
    }

    fn validate(&self, field: &str) -> Result<()> {
        self.src.validate(&format!("{field}.src"))?;
        self.tgt.validate(&format!("{field}.tgt"))?;
        if self.src.text == self.tgt.text {
            return Err(Error::validation(
                format!("{field}.tgt.text"),
                "target is identical to source",
            ));
        }
        if let Some(f) = &self.features {
            f.validate()
                .map_err(|reason| Error::validation(format!("{field}.features"), reason))?;
        }
        if let Some(p) = self.prob_typo {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::validation(
                    format!("{field}.prob_typo"),
                    format!("{p} is outside [0, 1]"),
                ));
            }
        }
        if let Some(is_typo) = self.is_typo {
            match self.prob_typo {
                None => {
                    return Err(Error::validation(
                        format!("{field}.is_typo"),
                        "present without prob_typo",
                    ))
                }
                Some(p) if is_typo != (p >= TYPO_THRESHOLD) => {
                    return Err(Error::validation(
                        format!("{field}.is_typo"),
                        format!("{is_typo} disagrees with prob_typo {p}"),
                    ))
                }
                Some(_) => {}
            }
        }
        Ok(())
    }
}

/// A typo commit: the corpus unit, serialized as one JSONL line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommitRecord {
    pub repo: String,
    pub commit: String,
    pub message: String,
    pub edits: Vec<Edit>,
}

impl CommitRecord {
    pub fn validate(&self) -> Result<()> {
        if !is_commit_hash(&self.commit) {
            return Err(Error::validation(
                "commit",
                format!("expected 40 lowercase hex digits, got {:?}", self.commit),
            ));
        }
        if self.edits.is_empty() || self.edits.len() > MAX_EDITS {
            return Err(Error::validation(
                "edits",
                format!(
                    "a commit carries 1..={MAX_EDITS} edits, got {}",
                    self.edits.len()
                ),
            ));
        }
        for (i, edit) in self.edits.iter().enumerate() {
            edit.validate(&format!("edits[{i}]"))?;
        }
        Ok(())
    }
}

pub fn is_commit_hash(s: &str) -> bool {
    s.len() == 40 && s.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f'))
}

/// Serialize a record as a single JSON line (no trailing newline).
pub fn serialize_commit(rec: &CommitRecord) -> Result<String> {
    rec.validate()?;
    serde_json::to_string(rec).map_err(|e| Error::data(e.to_string()))
}

/// A parsed record along with the paths of any keys the schema does not know.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedCommit {
    pub record: CommitRecord,
    pub unknown_keys: Vec<String>,
}

pub fn parse_commit(line: &str) -> Result<ParsedCommit> {
    let mut unknown_keys = Vec::new();
    let mut de = serde_json::Deserializer::from_str(line);
    let record: CommitRecord =
        serde_ignored::deserialize(&mut de, |path| unknown_keys.push(path.to_string()))
            .and_then(|r| de.end().map(|()| r))
            .map_err(|e| json_error(line, &e))?;
    record.validate()?;
    Ok(ParsedCommit {
        record,
        unknown_keys,
    })
}

pub(crate) fn json_error(line: &str, e: &serde_json::Error) -> Error {
    // serde_json reports 1-based line/column; inputs here are single lines,
    // but be defensive about embedded newlines in hand-made fixtures.
    let offset = line
        .split_inclusive('\n')
        .take(e.line().saturating_sub(1))
        .map(str::len)
        .sum::<usize>()
        + e.column().saturating_sub(1);
    Error::Parse {
        offset,
        message: e.to_string(),
    }
}

/// Streaming reader over a JSONL corpus. Blank lines are skipped.
pub struct CorpusReader<R> {
    inner: R,
    line_no: usize,
    buf: String,
    unknown_keys: usize,
}

impl<R: BufRead> CorpusReader<R> {
    pub fn new(inner: R) -> Self {
        CorpusReader {
            inner,
            line_no: 0,
            buf: String::new(),
            unknown_keys: 0,
        }
    }

    /// Number of unrecognised keys seen so far.
    pub fn unknown_keys(&self) -> usize {
        self.unknown_keys
    }
}

impl<R: BufRead> Iterator for CorpusReader<R> {
    type Item = Result<CommitRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            self.buf.clear();
            match self.inner.read_line(&mut self.buf) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => return Some(Err(Error::io("<corpus>", e))),
            }
            self.line_no += 1;
            let line = self.buf.trim_end_matches(['\n', '\r']);
            if line.trim().is_empty() {
                continue;
            }
            let line_no = self.line_no;
            return Some(match parse_commit(line) {
                Ok(parsed) => {
                    if !parsed.unknown_keys.is_empty() {
                        log::warn!(
                            "line {line_no}: ignoring unknown keys {:?}",
                            parsed.unknown_keys
                        );
                        self.unknown_keys += parsed.unknown_keys.len();
                    }
                    Ok(parsed.record)
                }
                Err(e) => Err(Error::data(format!("line {line_no}: {e}"))),
            });
        }
    }
}

/// Write records as JSONL with LF line endings.
pub fn write_corpus<'a, W, I>(mut out: W, records: I) -> Result<usize>
where
    W: Write,
    I: IntoIterator<Item = &'a CommitRecord>,
{
    let mut n = 0;
    for rec in records {
        let line = serialize_commit(rec)?;
        out.write_all(line.as_bytes())
            .and_then(|()| out.write_all(b"\n"))
            .map_err(|e| Error::io("<corpus>", e))?;
        n += 1;
    }
    out.flush().map_err(|e| Error::io("<corpus>", e))?;
    Ok(n)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> CommitRecord {
        CommitRecord {
            repo: "a/b".into(),
            commit: "0".repeat(40),
            message: "fix typo".into(),
            edits: vec![Edit::new("teh", "the")],
        }
    }

    #[test]
    fn minimal_record_round_trips() {
        let rec = minimal();
        let line = serialize_commit(&rec).unwrap();
        assert!(!line.contains('\n'));
        assert_eq!(
            line,
            r#"{"repo":"a/b","commit":"0000000000000000000000000000000000000000","message":"fix typo","edits":[{"src":{"text":"teh"},"tgt":{"text":"the"}}]}"#
        );
        assert_eq!(parse_commit(&line).unwrap().record, rec);
    }

    #[test]
    fn eleven_edits_rejected() {
        let mut rec = minimal();
        rec.edits = (0..11)
            .map(|i| Edit::new(format!("a{i}"), format!("b{i}")))
            .collect();
        match serialize_commit(&rec) {
            Err(Error::Validation { field, .. }) => assert_eq!(field, "edits"),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn label_fields_preserved() {
        let mut rec = minimal();
        rec.edits[0].prob_typo = Some(0.97);
        rec.edits[0].is_typo = Some(true);
        let line = serialize_commit(&rec).unwrap();
        assert!(line.contains(r#""prob_typo":0.97"#));
        assert!(line.contains(r#""is_typo":true"#));
        let back = parse_commit(&line).unwrap().record;
        assert_eq!(back.edits[0].prob_typo, Some(0.97));
        assert_eq!(back.edits[0].is_typo, Some(true));
    }

    #[test]
    fn bad_hash_rejected() {
        let line = r#"{"repo":"a/b","commit":"XYZ","message":"m","edits":[{"src":{"text":"a"},"tgt":{"text":"b"}}]}"#;
        match parse_commit(line) {
            Err(Error::Validation { field, .. }) => assert_eq!(field, "commit"),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_key_counted() {
        let line = format!(
            r#"{{"repo":"a/b","commit":"{}","message":"m","note":"x","edits":[{{"src":{{"text":"a","extra":1}},"tgt":{{"text":"b"}}}}]}}"#,
            "a".repeat(40)
        );
        let parsed = parse_commit(&line).unwrap();
        assert_eq!(parsed.unknown_keys, vec!["note", "edits.0.src.extra"]);

        let text = format!("{line}\n\n{line}\n");
        let mut reader = CorpusReader::new(text.as_bytes());
        assert_eq!(reader.by_ref().filter(|r| r.is_ok()).count(), 2);
        assert_eq!(reader.unknown_keys(), 4);
    }

    #[test]
    fn malformed_json_reports_offset() {
        match parse_commit(r#"{"repo": "a/b", "commit": }"#) {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 26),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn edit_invariants() {
        let mut rec = minimal();
        rec.edits[0].tgt.text = "teh".into();
        assert!(rec.validate().is_err());

        let mut rec = minimal();
        rec.edits[0].src.text = "te\nh".into();
        assert!(rec.validate().is_err());

        let mut rec = minimal();
        rec.edits[0].is_typo = Some(true);
        assert!(rec.validate().is_err());

        let mut rec = minimal();
        rec.edits[0].prob_typo = Some(0.4);
        rec.edits[0].is_typo = Some(true);
        assert!(rec.validate().is_err());

        let mut rec = minimal();
        rec.edits[0].src.ppl = Some(0.5);
        assert!(rec.validate().is_err());
    }

    #[test]
    fn category_strings() {
        for c in Category::ALL {
            assert_eq!(serde_json::to_string(&c).unwrap(), format!("\"{c}\""));
            assert_eq!(c.as_str().parse::<Category>().unwrap(), c);
        }
        assert!("SPELL".parse::<Category>().is_ok());
        assert!("vandalism".parse::<Category>().is_err());
    }

    #[test]
    fn repo_meta_full_name() {
        let mut m = RepoMeta {
            full_name: "a/b".into(),
            stars: 1,
            size_bytes: 1,
            license_id: "mit".into(),
            last_event_time: Utc::now(),
            event_kind: "pull-request".into(),
        };
        assert!(m.validate().is_ok());
        m.full_name = "a/b/c".into();
        assert!(m.validate().is_err());
        m.full_name = "ab".into();
        assert!(m.validate().is_err());
    }
}
