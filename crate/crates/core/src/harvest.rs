//! Repository eligibility over local activity-event dumps.
//!
//! A dump is JSON lines, one event per line:
//!
//! ```json
//! {"repo_full_name":"owner/name","stars":120,"size_bytes":4500000,"license":"mit","event_kind":"pull-request","created_at":"2018-03-01T12:00:00Z"}
//! ```
//!
//! A repository is eligible when it has a qualifying event (right kind, inside
//! the window) and, as of its earliest qualifying event, enough stars, a size
//! in range and a permissive license.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use chrono::{DateTime, TimeZone, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::RepoMeta;

pub const DEFAULT_LICENSES: [&str; 8] = [
    "apache-2.0",
    "mit",
    "bsd-3-clause",
    "bsd-2-clause",
    "cc0-1.0",
    "unlicense",
    "cc-by-4.0",
    "bsl-1.0",
];

pub const DEFAULT_EVENT_KINDS: [&str; 2] = ["pull-request", "pull-request-review-comment"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EligibilityConfig {
    pub min_stars: u64,
    pub min_size_bytes: u64,
    pub max_size_bytes: u64,
    pub allowed_licenses: BTreeSet<String>,
    pub window_start: DateTime<Utc>,
    pub window_end: DateTime<Utc>,
    pub required_event_kinds: BTreeSet<String>,
}

impl Default for EligibilityConfig {
    fn default() -> Self {
        EligibilityConfig {
            min_stars: 50,
            min_size_bytes: 1_000_000,
            max_size_bytes: 1_000_000_000,
            allowed_licenses: DEFAULT_LICENSES.iter().map(|s| s.to_string()).collect(),
            window_start: Utc.with_ymd_and_hms(2017, 11, 1, 0, 0, 0).unwrap(),
            window_end: Utc.with_ymd_and_hms(2019, 9, 30, 23, 59, 59).unwrap(),
            required_event_kinds: DEFAULT_EVENT_KINDS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl EligibilityConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_size_bytes >= self.max_size_bytes {
            return Err(Error::validation(
                "min_size_bytes",
                "must be smaller than max_size_bytes",
            ));
        }
        if self.window_start >= self.window_end {
            return Err(Error::validation("window_start", "must precede window_end"));
        }
        Ok(())
    }

    /// The activity criterion on its own: event kind and time window.
    pub fn qualifying_event(&self, meta: &RepoMeta) -> bool {
        self.required_event_kinds.contains(&meta.event_kind)
            && self.window_start <= meta.last_event_time
            && meta.last_event_time <= self.window_end
    }
}

pub fn is_eligible(meta: &RepoMeta, cfg: &EligibilityConfig) -> bool {
    cfg.qualifying_event(meta)
        && meta.stars >= cfg.min_stars
        && (cfg.min_size_bytes..=cfg.max_size_bytes).contains(&meta.size_bytes)
        && cfg.allowed_licenses.contains(&meta.license_id)
}

#[derive(Debug, Deserialize)]
struct RawEvent {
    repo_full_name: String,
    stars: u64,
    size_bytes: u64,
    #[serde(default)]
    license: Option<String>,
    event_kind: String,
    created_at: DateTime<Utc>,
}

/// `PullRequestEvent`, `pull_request` and `pull-request` all become
/// `pull-request`.
pub fn normalize_event_kind(kind: &str) -> String {
    let kind = kind.trim();
    let kind = kind.strip_suffix("Event").unwrap_or(kind);
    let mut out = String::with_capacity(kind.len() + 4);
    for (i, c) in kind.chars().enumerate() {
        if c.is_ascii_uppercase() {
            if i > 0 && !out.ends_with('-') {
                out.push('-');
            }
            out.push(c.to_ascii_lowercase());
        } else if c == '_' || c == ' ' {
            out.push('-');
        } else {
            out.push(c);
        }
    }
    out
}

/// Parse one dump line into the metadata it carries.
pub fn parse_event(line: &str) -> Result<RepoMeta> {
    let raw: RawEvent =
        serde_json::from_str(line).map_err(|e| crate::model::json_error(line, &e))?;
    let meta = RepoMeta {
        full_name: raw.repo_full_name.trim().to_string(),
        stars: raw.stars,
        size_bytes: raw.size_bytes,
        license_id: raw
            .license
            .map(|l| l.trim().to_ascii_lowercase())
            .filter(|l| !l.is_empty())
            .unwrap_or_else(|| "none".to_string()),
        last_event_time: raw.created_at,
        event_kind: normalize_event_kind(&raw.event_kind),
    };
    meta.validate()?;
    Ok(meta)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct HarvestOutcome {
    pub repos: Vec<RepoMeta>,
    pub events: usize,
    pub malformed: usize,
}

fn read_dump(path: &Path) -> Result<(Vec<RepoMeta>, usize)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut metas = Vec::new();
    let mut malformed = 0;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_event(&line) {
            Ok(m) => metas.push(m),
            Err(e) => {
                log::warn!("{}:{}: skipping event: {e}", path.display(), i + 1);
                malformed += 1;
            }
        }
    }
    Ok((metas, malformed))
}

/// Reduce events to eligible repositories, one per name, sorted by name.
/// Each repository is judged on its earliest qualifying event.
pub fn select_eligible<I>(events: I, cfg: &EligibilityConfig) -> Vec<RepoMeta>
where
    I: IntoIterator<Item = RepoMeta>,
{
    let mut anchor: BTreeMap<String, RepoMeta> = BTreeMap::new();
    for ev in events {
        if !cfg.qualifying_event(&ev) {
            continue;
        }
        match anchor.get_mut(&ev.full_name) {
            Some(cur) if anchor_key(&ev) < anchor_key(cur) => *cur = ev,
            Some(_) => {}
            None => {
                anchor.insert(ev.full_name.clone(), ev);
            }
        }
    }
    anchor
        .into_values()
        .filter(|m| is_eligible(m, cfg))
        .collect()
}

// Earliest first; ties on time broken by the remaining fields so the choice
// does not depend on input order.
fn anchor_key(m: &RepoMeta) -> (DateTime<Utc>, u64, u64, &str, &str) {
    (
        m.last_event_time,
        m.stars,
        m.size_bytes,
        &m.license_id,
        &m.event_kind,
    )
}

pub fn harvest(dump_paths: &[PathBuf], cfg: &EligibilityConfig) -> Result<HarvestOutcome> {
    cfg.validate()?;
    let per_file: Vec<(Vec<RepoMeta>, usize)> = dump_paths
        .par_iter()
        .map(|p| read_dump(p))
        .collect::<Result<_>>()?;
    let events = per_file.iter().map(|(m, _)| m.len()).sum();
    let malformed = per_file.iter().map(|(_, n)| n).sum();
    let repos = select_eligible(per_file.into_iter().flat_map(|(m, _)| m), cfg);
    Ok(HarvestOutcome {
        repos,
        events,
        malformed,
    })
}
