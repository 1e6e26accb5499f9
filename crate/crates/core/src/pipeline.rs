//! File-to-file pipeline stages, run manifests and the config file.
//!
//! Every stage reads files and writes files, so a run can be resumed from
//! any intermediate output. Data files carry no timestamps; the manifest
//! written next to each output holds the volatile fields.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDate, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classifier::{label_edit, ClassifierWeights, LabelStats, LabeledExample};
use crate::error::{Error, Result};
use crate::extract::{extract_repo, ExtractConfig, RepoSource};
use crate::features::featurize;
use crate::harvest::EligibilityConfig;
use crate::langid::{filter_edit, FilterConfig, LangProfile};
use crate::lm::ModelSet;
use crate::metrics::{data_lines, unescape_tsv};
use crate::model::{write_corpus, Category, CommitRecord, CorpusReader, Edit, RepoMeta};

pub fn read_corpus(path: &Path) -> Result<Vec<CommitRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    CorpusReader::new(BufReader::new(file))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| match e {
            Error::Data(msg) => Error::data(format!("{}: {msg}", path.display())),
            other => other,
        })
}

/// Write through a temporary file and rename, so an interrupted run never
/// leaves a truncated output behind.
pub fn write_atomically<F>(path: &Path, body: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> Result<()>,
{
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let file = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    let mut w = BufWriter::new(file);
    body(&mut w)?;
    w.flush().map_err(|e| Error::io(&tmp, e))?;
    drop(w);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn write_records(path: &Path, records: &[CommitRecord]) -> Result<()> {
    write_atomically(path, |w| write_corpus(w, records).map(|_| ())).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

pub fn write_repos(path: &Path, repos: &[RepoMeta]) -> Result<()> {
    write_atomically(path, |w| {
        for r in repos {
            let line = serde_json::to_string(r).map_err(|e| Error::data(e.to_string()))?;
            writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
        }
        Ok(())
    })
}

pub fn read_repos(path: &Path) -> Result<Vec<RepoMeta>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    data_lines(&text)
        .map(|(n, line)| {
            let meta: RepoMeta = serde_json::from_str(line)
                .map_err(|e| Error::data(format!("{}:{n}: {e}", path.display())))?;
            meta.validate()?;
            Ok(meta)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ExtractCounts {
    pub repos: u64,
    pub failed_repos: u64,
    pub records: u64,
    pub edits: u64,
}

/// Extract typo-commit records from every source, in source order. A source
/// that cannot be read is logged and skipped.
pub fn extract_stage(
    sources: &[RepoSource],
    cfg: &ExtractConfig,
) -> Result<(Vec<CommitRecord>, ExtractCounts)> {
    cfg.validate()?;
    let per_repo: Vec<Option<Vec<CommitRecord>>> = sources
        .par_iter()
        .map(|s| match extract_repo(s, cfg, None) {
            Ok(recs) => Some(recs),
            Err(e) => {
                log::warn!("{}: skipping repository: {e}", s.path().display());
                None
            }
        })
        .collect();
    let mut counts = ExtractCounts {
        repos: sources.len() as u64,
        ..Default::default()
    };
    let mut out = Vec::new();
    for recs in per_repo {
        match recs {
            Some(recs) => out.extend(recs),
            None => counts.failed_repos += 1,
        }
    }
    counts.records = out.len() as u64;
    counts.edits = out.iter().map(|r| r.edits.len() as u64).sum();
    Ok((out, counts))
}

/// Keep only sources listed in an eligible-repository file.
pub fn restrict_to_eligible(sources: Vec<RepoSource>, eligible: &[RepoMeta]) -> Vec<RepoSource> {
    let names: BTreeSet<String> = eligible.iter().map(|m| m.full_name.clone()).collect();
    crate::extract::restrict_to(sources, &names)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct FilterCounts {
    pub records_in: u64,
    pub records_out: u64,
    pub edits_in: u64,
    pub edits_out: u64,
}

/// Language-filter every edit. Records left without edits are dropped.
pub fn langfilter_stage(
    records: Vec<CommitRecord>,
    profiles: &[LangProfile],
    cfg: &FilterConfig,
) -> (Vec<CommitRecord>, FilterCounts) {
    let mut counts = FilterCounts {
        records_in: records.len() as u64,
        edits_in: records.iter().map(|r| r.edits.len() as u64).sum(),
        ..Default::default()
    };
    let out: Vec<CommitRecord> = records
        .into_par_iter()
        .filter_map(|mut rec| {
            rec.edits = rec
                .edits
                .iter()
                .filter_map(|e| filter_edit(e, profiles, cfg))
                .collect();
            (!rec.edits.is_empty()).then_some(rec)
        })
        .collect();
    counts.records_out = out.len() as u64;
    counts.edits_out = out.iter().map(|r| r.edits.len() as u64).sum();
    (out, counts)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct FeaturizeCounts {
    pub edits: u64,
    pub featurized: u64,
    /// Edits with no language tag or no model for their language.
    pub skipped: u64,
}

/// Attach perplexities and features to every edit that has a model.
pub fn featurize_stage(records: &mut [CommitRecord], models: &ModelSet) -> Result<FeaturizeCounts> {
    let results: Vec<Result<(u64, u64)>> = records
        .par_iter_mut()
        .map(|rec| {
            let (mut done, mut skipped) = (0, 0);
            for edit in &mut rec.edits {
                let has_model = edit.lang().is_some_and(|l| models.get(l).is_some());
                if has_model {
                    featurize(edit, models)?;
                    done += 1;
                } else {
                    skipped += 1;
                }
            }
            Ok((done, skipped))
        })
        .collect();
    let mut counts = FeaturizeCounts::default();
    for r in results {
        let (done, skipped) = r?;
        counts.featurized += done;
        counts.skipped += skipped;
    }
    counts.edits = counts.featurized + counts.skipped;
    if counts.skipped > 0 {
        log::warn!(
            "{} edits left without features (no language model)",
            counts.skipped
        );
    }
    Ok(counts)
}

pub fn classify_stage(
    records: &mut [CommitRecord],
    w: &ClassifierWeights,
    threshold: f64,
) -> LabelStats {
    let mut stats = LabelStats::default();
    for rec in records.iter_mut() {
        stats.records += 1;
        for edit in &mut rec.edits {
            stats.edits += 1;
            if label_edit(edit, w, threshold) {
                stats.labelled += 1;
            } else {
                stats.unlabelled += 1;
            }
        }
    }
    if stats.unlabelled > 0 {
        log::warn!("{} edits left unlabelled (no features)", stats.unlabelled);
    }
    stats
}

/// One annotated training edit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Annotation {
    pub src: String,
    pub tgt: String,
    pub category: Category,
}

/// Annotation TSV: `src<TAB>tgt<TAB>category` per line. An optional header
/// line `src<TAB>tgt<TAB>category` is skipped.
pub fn parse_annotations(text: &str) -> Result<Vec<Annotation>> {
    let mut out = Vec::new();
    for (n, line) in data_lines(text) {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::data(format!(
                "annotations line {n}: expected 3 tab-separated fields, got {}",
                fields.len()
            )));
        }
        if n == 1 && fields == ["src", "tgt", "category"] {
            continue;
        }
        let category: Category = fields[2]
            .trim()
            .parse()
            .map_err(|e| Error::data(format!("annotations line {n}: {e}")))?;
        out.push(Annotation {
            src: unescape_tsv(fields[0]),
            tgt: unescape_tsv(fields[1]),
            category,
        });
    }
    Ok(out)
}

/// Featurize annotations with the model for `lang`.
pub fn annotations_to_examples(
    rows: &[Annotation],
    lang: &str,
    models: &ModelSet,
) -> Result<Vec<LabeledExample>> {
    rows.iter()
        .map(|a| {
            let mut e = Edit::new(a.src.clone(), a.tgt.clone());
            e.src.lang = Some(lang.to_string());
            e.tgt.lang = Some(lang.to_string());
            let features = featurize(&mut e, models)?;
            Ok(LabeledExample {
                features,
                label: a.category.is_typo(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InputEntry {
    pub path: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sha256: Option<String>,
}

impl InputEntry {
    /// Regular files are hashed; directories are recorded by path only.
    pub fn for_path(path: &Path) -> Result<Self> {
        let sha256 = if path.is_file() {
            Some(sha256_file(path)?)
        } else {
            None
        };
        Ok(InputEntry {
            path: path.display().to_string(),
            sha256,
        })
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut h = Sha256::new();
    std::io::copy(&mut file, &mut h).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(h.finalize()))
}

/// Hash of a configuration value's canonical JSON form (object keys sorted).
pub fn config_hash(config: &serde_json::Value) -> String {
    hex::encode(Sha256::digest(config.to_string().as_bytes()))
}

/// Provenance for one stage run, written as `<output>.manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub stage: String,
    pub inputs: Vec<InputEntry>,
    pub outputs: Vec<String>,
    pub config: serde_json::Value,
    pub config_hash: String,
    pub counts: BTreeMap<String, u64>,
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
}

impl Manifest {
    pub fn new(stage: &str, config: serde_json::Value, started_at: DateTime<Utc>) -> Self {
        Manifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            stage: stage.to_string(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            config_hash: config_hash(&config),
            config,
            counts: BTreeMap::new(),
            started_at,
            finished_at: started_at,
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<&mut Self> {
        self.inputs.push(InputEntry::for_path(path)?);
        Ok(self)
    }

    pub fn count(&mut self, key: &str, n: u64) -> &mut Self {
        self.counts.insert(key.to_string(), n);
        self
    }

    /// Counts from any serializable struct of integer fields.
    pub fn counts_from<T: Serialize>(&mut self, prefix: &str, counts: &T) -> &mut Self {
        if let Ok(serde_json::Value::Object(map)) = serde_json::to_value(counts) {
            for (k, v) in map {
                if let Some(n) = v.as_u64() {
                    self.counts.insert(format!("{prefix}{k}"), n);
                }
            }
        }
        self
    }

    pub fn path_for(output: &Path) -> PathBuf {
        let mut p = output.as_os_str().to_owned();
        p.push(".manifest.json");
        PathBuf::from(p)
    }

    /// Stamp the finish time and write next to `output`.
    pub fn write(&mut self, output: &Path) -> Result<PathBuf> {
        self.finished_at = Utc::now();
        if !self.outputs.iter().any(|o| Path::new(o) == output) {
            self.outputs.push(output.display().to_string());
        }
        let path = Self::path_for(output);
        let json = serde_json::to_string_pretty(self).map_err(|e| Error::data(e.to_string()))?;
        write_atomically(&path, |w| {
            w.write_all(json.as_bytes())
                .and_then(|()| w.write_all(b"\n"))
                .map_err(|e| Error::io(&path, e))
        })?;
        Ok(path)
    }
}

/// Parse a window bound: RFC 3339, or a bare date meaning the start of that
/// day (`end = false`) or its last second (`end = true`).
pub fn parse_time_bound(s: &str, end: bool) -> Result<DateTime<Utc>> {
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Ok(t.with_timezone(&Utc));
    }
    let d = NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|_| {
        Error::validation(
            "time",
            format!("expected RFC 3339 or YYYY-MM-DD, got {s:?}"),
        )
    })?;
    let t = if end {
        d.and_hms_opt(23, 59, 59)
    } else {
        d.and_hms_opt(0, 0, 0)
    };
    Ok(t.expect("valid time of day").and_utc())
}

/// Contents of a `--config` TOML file. Every key is optional and command-line
/// flags take precedence. Relative paths are resolved against the directory
/// holding the config file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub paths: PathsSection,
    pub harvest: HarvestSection,
    pub extract: ExtractSection,
    pub langfilter: LangfilterSection,
    pub classify: ClassifySection,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    pub dumps: Vec<String>,
    pub repos: Option<PathBuf>,
    pub diff_dir: Option<PathBuf>,
    pub eligible: Option<PathBuf>,
    pub profiles: Option<PathBuf>,
    pub models: Option<PathBuf>,
    pub weights: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarvestSection {
    pub min_stars: Option<u64>,
    pub min_size_bytes: Option<u64>,
    pub max_size_bytes: Option<u64>,
    pub licenses: Option<Vec<String>>,
    pub event_kinds: Option<Vec<String>>,
    pub window_start: Option<String>,
    pub window_end: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractSection {
    pub keyword: Option<String>,
    pub case_sensitive: Option<bool>,
    pub max_edits: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LangfilterSection {
    pub code_threshold: Option<f64>,
    pub min_confidence: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifySection {
    pub threshold: Option<f64>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::data(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg =
            Self::parse(&text).map_err(|e| Error::data(format!("{}: {e}", path.display())))?;
        if let Some(base) = path.parent() {
            cfg.resolve_relative_to(base);
        }
        Ok(cfg)
    }

    fn resolve_relative_to(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(path) = p.as_mut().filter(|p| p.is_relative()) {
                *path = base.join(&*path);
            }
        };
        let p = &mut self.paths;
        for opt in [
            &mut p.repos,
            &mut p.diff_dir,
            &mut p.eligible,
            &mut p.profiles,
            &mut p.models,
            &mut p.weights,
        ] {
            fix(opt);
        }
        for d in &mut p.dumps {
            if Path::new(d.as_str()).is_relative() {
                *d = base.join(&*d).to_string_lossy().into_owned();
            }
        }
    }

    /// Eligibility criteria with this file's overrides applied.
    pub fn eligibility(&self) -> Result<EligibilityConfig> {
        let h = &self.harvest;
        let mut cfg = EligibilityConfig::default();
        if let Some(v) = h.min_stars {
            cfg.min_stars = v;
        }
        if let Some(v) = h.min_size_bytes {
            cfg.min_size_bytes = v;
        }
        if let Some(v) = h.max_size_bytes {
            cfg.max_size_bytes = v;
        }
        if let Some(v) = &h.licenses {
            cfg.allowed_licenses = v.iter().map(|l| l.to_lowercase()).collect();
        }
        if let Some(v) = &h.event_kinds {
            cfg.required_event_kinds = v
                .iter()
                .map(|k| crate::harvest::normalize_event_kind(k))
                .collect();
        }
        if let Some(v) = &h.window_start {
            cfg.window_start = parse_time_bound(v, false)?;
        }
        if let Some(v) = &h.window_end {
            cfg.window_end = parse_time_bound(v, true)?;
        }
        Ok(cfg)
    }

    pub fn extract_config(&self) -> ExtractConfig {
        let e = &self.extract;
        let mut cfg = ExtractConfig::default();
        if let Some(v) = &e.keyword {
            cfg.keyword = v.clone();
        }
        if let Some(v) = e.case_sensitive {
            cfg.case_sensitive = v;
        }
        if let Some(v) = e.max_edits {
            cfg.max_edits = v;
        }
        cfg
    }

    pub fn filter_config(&self) -> FilterConfig {
        let mut cfg = FilterConfig::default();
        if let Some(v) = self.langfilter.code_threshold {
            cfg.code_threshold = v;
        }
        if let Some(v) = self.langfilter.min_confidence {
            cfg.min_confidence = v;
        }
        cfg
    }
}
