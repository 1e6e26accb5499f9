//! Typo-commit and edit extraction from repository history.
//!
//! History comes either from a local git repository (walked with the `git`
//! command-line tool) or from a saved `git log --first-parent --parents -p`
//! dump. Both go through the same parser.

mod diff;

pub use diff::{pair_edits, parse_log, DiffHunk, DiffLine, FileDiff, LineTag, LoggedCommit};

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};
use crate::model::{CommitRecord, Edit, MAX_EDITS};

/// Optional per-edit filter applied after the edit-count rule.
pub type EditFilter<'a> = &'a dyn Fn(&Edit) -> Option<Edit>;

pub const DEFAULT_KEYWORD: &str = "typo";
pub const MAX_LINE_CHARS: usize = 2_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtractConfig {
    pub keyword: String,
    pub case_sensitive: bool,
    pub max_edits: usize,
    pub max_line_chars: usize,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        ExtractConfig {
            keyword: DEFAULT_KEYWORD.to_string(),
            case_sensitive: false,
            max_edits: MAX_EDITS,
            max_line_chars: MAX_LINE_CHARS,
        }
    }
}

impl ExtractConfig {
    pub fn validate(&self) -> Result<()> {
        if self.keyword.is_empty() {
            return Err(Error::validation("keyword", "must not be empty"));
        }
        if self.max_edits == 0 || self.max_edits > MAX_EDITS {
            return Err(Error::validation(
                "max_edits",
                format!("must be in 1..={MAX_EDITS}"),
            ));
        }
        Ok(())
    }

    pub fn is_typo_commit(&self, message: &str) -> bool {
        if self.case_sensitive {
            message.contains(&self.keyword)
        } else {
            message
                .to_lowercase()
                .contains(&self.keyword.to_lowercase())
        }
    }
}

/// Whether a commit message mentions "typo" (case-insensitive).
pub fn is_typo_commit(message: &str) -> bool {
    ExtractConfig::default().is_typo_commit(message)
}

fn clean_line(text: &str, max_chars: usize) -> Option<String> {
    let text = text.strip_suffix('\r').unwrap_or(text);
    if text.contains(['\r', '\n']) {
        return None;
    }
    let norm: String = text.nfc().collect();
    (norm.chars().count() <= max_chars).then_some(norm)
}

/// All edits of one commit, after normalization and dropping over-long lines.
pub fn commit_edits(commit: &LoggedCommit, cfg: &ExtractConfig) -> Vec<Edit> {
    let mut edits = Vec::new();
    for file in &commit.files {
        if file.binary {
            continue;
        }
        if let Some(err) = &file.error {
            log::warn!("{} {}: skipping file: {err}", commit.id, file.path);
            continue;
        }
        for (src, tgt) in pair_edits(&file.hunks) {
            let (Some(src), Some(tgt)) = (
                clean_line(&src, cfg.max_line_chars),
                clean_line(&tgt, cfg.max_line_chars),
            ) else {
                continue;
            };
            if src != tgt {
                edits.push(Edit::new(src, tgt));
            }
        }
    }
    edits
}

/// Build the corpus record for a commit, or `None` when it is not a typo
/// commit, is a merge or root commit, or has no edits or too many.
///
/// The optional `langfilter` runs after the edit-count rule; a commit whose
/// edits are all rejected by it is dropped.
pub fn extract_commit(
    repo: &str,
    commit: &LoggedCommit,
    cfg: &ExtractConfig,
    langfilter: Option<EditFilter>,
) -> Option<CommitRecord> {
    if commit.parents.len() != 1 || !cfg.is_typo_commit(&commit.message) {
        return None;
    }
    let id = commit.id.to_ascii_lowercase();
    if !crate::model::is_commit_hash(&id) {
        log::warn!("{repo}: skipping commit with malformed id {:?}", commit.id);
        return None;
    }
    let mut edits = commit_edits(commit, cfg);
    if edits.is_empty() || edits.len() > cfg.max_edits {
        return None;
    }
    if let Some(filter) = langfilter {
        edits = edits.iter().filter_map(filter).collect();
        if edits.is_empty() {
            return None;
        }
    }
    Some(CommitRecord {
        repo: repo.to_string(),
        commit: id,
        message: commit.message.clone(),
        edits,
    })
}

/// A source of first-parent history for one repository.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RepoSource {
    /// A local git working copy or bare repository.
    Git { full_name: String, path: PathBuf },
    /// A saved `git log --first-parent --parents -p` dump.
    LogFile { full_name: String, path: PathBuf },
}

impl RepoSource {
    pub fn full_name(&self) -> &str {
        match self {
            RepoSource::Git { full_name, .. } | RepoSource::LogFile { full_name, .. } => full_name,
        }
    }

    pub fn path(&self) -> &Path {
        match self {
            RepoSource::Git { path, .. } | RepoSource::LogFile { path, .. } => path,
        }
    }

    /// First-parent history, newest first.
    pub fn commits(&self) -> Result<Vec<LoggedCommit>> {
        let text = match self {
            RepoSource::Git { path, .. } => git_log(path)?,
            RepoSource::LogFile { path, .. } => {
                let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
                String::from_utf8_lossy(&bytes).into_owned()
            }
        };
        parse_log(&text)
    }
}

fn git(repo: &Path, args: &[&str]) -> Result<std::process::Output> {
    Command::new("git")
        .arg("-C")
        .arg(repo)
        .args(args)
        .env("LC_ALL", "C")
        .env("GIT_CONFIG_NOSYSTEM", "1")
        .output()
        .map_err(|e| Error::io(repo, e))
}

/// The branch to walk: the remote's default branch when the repository is a
/// clone, otherwise whatever `HEAD` points at.
pub fn default_branch(repo: &Path) -> Result<String> {
    let out = git(
        repo,
        &[
            "symbolic-ref",
            "--quiet",
            "--short",
            "refs/remotes/origin/HEAD",
        ],
    )?;
    if out.status.success() {
        let name = String::from_utf8_lossy(&out.stdout).trim().to_string();
        if !name.is_empty() {
            return Ok(name);
        }
    }
    let out = git(repo, &["rev-parse", "--verify", "--quiet", "HEAD"])?;
    if !out.status.success() {
        return Err(Error::data(format!(
            "{}: not a git repository or has no commits",
            repo.display()
        )));
    }
    Ok("HEAD".to_string())
}

fn git_log(repo: &Path) -> Result<String> {
    let branch = default_branch(repo)?;
    let out = git(
        repo,
        &[
            "-c",
            "core.quotePath=false",
            "log",
            "--first-parent",
            "--parents",
            "--format=medium",
            "--no-decorate",
            "--no-color",
            "--no-ext-diff",
            "--no-textconv",
            "--encoding=UTF-8",
            "-p",
            &branch,
            "--",
        ],
    )?;
    if !out.status.success() {
        return Err(Error::data(format!(
            "{}: git log failed: {}",
            repo.display(),
            String::from_utf8_lossy(&out.stderr).trim()
        )));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

/// Typo-commit records for one repository, in history order (newest first).
pub fn extract_repo(
    source: &RepoSource,
    cfg: &ExtractConfig,
    langfilter: Option<EditFilter>,
) -> Result<Vec<CommitRecord>> {
    let commits = source.commits()?;
    Ok(commits
        .iter()
        .filter_map(|c| extract_commit(source.full_name(), c, cfg, langfilter))
        .collect())
}

fn is_git_repo(path: &Path) -> bool {
    path.join(".git").exists() || (path.join("HEAD").is_file() && path.join("objects").is_dir())
}

/// `owner/name` from the last two components of a path (extension dropped).
fn full_name_of(path: &Path) -> String {
    let file = path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let name = [".log", ".diff", ".patch", ".git"]
        .iter()
        .find_map(|ext| file.strip_suffix(ext))
        .unwrap_or(&file)
        .to_string();
    let owner = path
        .parent()
        .and_then(|p| p.file_name())
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "local".to_string());
    format!("{owner}/{name}")
}

fn sorted_children(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    v.sort();
    Ok(v)
}

/// Find repositories under `path`: the path itself if it is a repository, a
/// text file listing one repository path per line, or a directory holding
/// repositories one or two levels down (`name/` or `owner/name/`).
pub fn discover_git_repos(path: &Path) -> Result<Vec<RepoSource>> {
    let mut found = Vec::new();
    if path.is_file() {
        let list = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        for line in list
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
        {
            let p = PathBuf::from(line);
            found.push(RepoSource::Git {
                full_name: full_name_of(&p),
                path: p,
            });
        }
    } else if is_git_repo(path) {
        found.push(RepoSource::Git {
            full_name: full_name_of(path),
            path: path.to_path_buf(),
        });
    } else {
        for child in sorted_children(path)? {
            if !child.is_dir() {
                continue;
            }
            if is_git_repo(&child) {
                found.push(RepoSource::Git {
                    full_name: full_name_of(&child),
                    path: child,
                });
                continue;
            }
            for grandchild in sorted_children(&child)? {
                if grandchild.is_dir() && is_git_repo(&grandchild) {
                    found.push(RepoSource::Git {
                        full_name: full_name_of(&grandchild),
                        path: grandchild,
                    });
                }
            }
        }
    }
    found.sort_by(|a, b| a.full_name().cmp(b.full_name()));
    Ok(found)
}

/// Find saved history dumps laid out as `<dir>/<owner>/<name>.log` (also
/// `.diff` or `.patch`).
pub fn discover_log_files(dir: &Path) -> Result<Vec<RepoSource>> {
    let is_dump = |p: &Path| {
        p.is_file()
            && p.extension()
                .is_some_and(|x| x == "log" || x == "diff" || x == "patch")
    };
    let mut found = Vec::new();
    for owner in sorted_children(dir)? {
        if !owner.is_dir() {
            continue;
        }
        for file in sorted_children(&owner)? {
            if is_dump(&file) {
                found.push(RepoSource::LogFile {
                    full_name: full_name_of(&file),
                    path: file,
                });
            }
        }
    }
    found.sort_by(|a, b| a.full_name().cmp(b.full_name()));
    Ok(found)
}

/// Keep only sources whose name is in `eligible`.
pub fn restrict_to(sources: Vec<RepoSource>, eligible: &BTreeSet<String>) -> Vec<RepoSource> {
    sources
        .into_iter()
        .filter(|s| eligible.contains(s.full_name()))
        .collect()
}
