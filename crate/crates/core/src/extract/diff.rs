//! Parsing of `git log -p` output into commits, file diffs and hunks.
//!
//! The accepted text is what `git log --first-parent --parents -p` prints in
//! its default (medium) format: a `commit <id> <parent>...` line, header
//! lines, a blank line, the message indented by four spaces, then zero or
//! more `diff --git` sections.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LineTag {
    Context,
    Deletion,
    Insertion,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiffLine {
    pub tag: LineTag,
    pub text: String,
}

impl DiffLine {
    pub fn context(text: impl Into<String>) -> Self {
        DiffLine {
            tag: LineTag::Context,
            text: text.into(),
        }
    }
    pub fn deletion(text: impl Into<String>) -> Self {
        DiffLine {
            tag: LineTag::Deletion,
            text: text.into(),
        }
    }
    pub fn insertion(text: impl Into<String>) -> Self {
        DiffLine {
            tag: LineTag::Insertion,
            text: text.into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DiffHunk {
    pub lines: Vec<DiffLine>,
}

impl DiffHunk {
    pub fn new(lines: Vec<DiffLine>) -> Self {
        DiffHunk { lines }
    }

    /// Parse hunk body lines (without the `@@` header). A `\ No newline`
    /// marker is skipped; a bare empty line is read as empty context.
    pub fn parse_body<'a, I>(lines: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut hunk = DiffHunk::default();
        for (i, raw) in lines.into_iter().enumerate() {
            match parse_body_line(raw) {
                Some(BodyLine::Line(l)) => hunk.lines.push(l),
                Some(BodyLine::NoNewline) => {}
                None => {
                    return Err(Error::Parse {
                        offset: i,
                        message: format!("unexpected hunk line {raw:?}"),
                    })
                }
            }
        }
        Ok(hunk)
    }
}

enum BodyLine {
    Line(DiffLine),
    NoNewline,
}

fn parse_body_line(raw: &str) -> Option<BodyLine> {
    let mut chars = raw.chars();
    let line = match chars.next() {
        None => DiffLine::context(""),
        Some(' ') => DiffLine::context(chars.as_str()),
        Some('-') => DiffLine::deletion(chars.as_str()),
        Some('+') => DiffLine::insertion(chars.as_str()),
        Some('\\') => return Some(BodyLine::NoNewline),
        Some(_) => return None,
    };
    Some(BodyLine::Line(line))
}

/// Source and target line counts from a `@@ -a,b +c,d @@` header.
fn parse_hunk_header(line: &str) -> Option<(usize, usize)> {
    let rest = line.strip_prefix("@@ -")?;
    let end = rest.find(" @@")?;
    let (old, new) = rest[..end].split_once(" +")?;
    let count = |range: &str| -> Option<usize> {
        match range.split_once(',') {
            Some((start, n)) => {
                start.parse::<usize>().ok()?;
                n.parse().ok()
            }
            None => range.parse::<usize>().ok().map(|_| 1),
        }
    };
    Some((count(old)?, count(new)?))
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FileDiff {
    pub path: String,
    pub binary: bool,
    pub hunks: Vec<DiffHunk>,
    /// Set when a hunk in this file could not be parsed; such files
    /// contribute no edits.
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoggedCommit {
    pub id: String,
    pub parents: Vec<String>,
    pub message: String,
    pub files: Vec<FileDiff>,
}

enum State {
    Idle,
    Header,
    Message,
    FileHeader,
    Hunk { old_left: usize, new_left: usize },
    SkipFile,
}

/// Parse a full `git log -p` dump. Text before the first `commit` line is
/// an error.
pub fn parse_log(text: &str) -> Result<Vec<LoggedCommit>> {
    let mut commits: Vec<LoggedCommit> = Vec::new();
    let mut state = State::Idle;
    let mut message: Vec<&str> = Vec::new();
    let mut hunk = DiffHunk::default();

    fn finish_message(c: &mut LoggedCommit, lines: &mut Vec<&str>) {
        while lines.last().is_some_and(|l| l.trim().is_empty()) {
            lines.pop();
        }
        c.message = lines.join("\n");
        lines.clear();
    }

    for (line_no, raw) in text.lines().enumerate() {
        let line = raw;
        if let State::Hunk { old_left, new_left } = &mut state {
            if *old_left > 0 || *new_left > 0 {
                let file = commits.last_mut().and_then(|c| c.files.last_mut()).unwrap();
                match parse_body_line(line) {
                    Some(BodyLine::NoNewline) => continue,
                    Some(BodyLine::Line(l)) => {
                        let fits = match l.tag {
                            LineTag::Context => *old_left > 0 && *new_left > 0,
                            LineTag::Deletion => *old_left > 0,
                            LineTag::Insertion => *new_left > 0,
                        };
                        if fits {
                            match l.tag {
                                LineTag::Context => {
                                    *old_left -= 1;
                                    *new_left -= 1;
                                }
                                LineTag::Deletion => *old_left -= 1,
                                LineTag::Insertion => *new_left -= 1,
                            }
                            hunk.lines.push(l);
                            if *old_left == 0 && *new_left == 0 {
                                file.hunks.push(std::mem::take(&mut hunk));
                            }
                            continue;
                        }
                    }
                    None => {}
                }
                file.error = Some(format!(
                    "line {}: hunk body does not match its header",
                    line_no + 1
                ));
                hunk = DiffHunk::default();
                state = State::SkipFile;
                // The offending line may itself start the next section.
            } else if line.starts_with('\\') {
                continue;
            }
        }

        if let Some(rest) = line.strip_prefix("commit ") {
            if let Some(c) = commits.last_mut() {
                if matches!(state, State::Message | State::Header) {
                    finish_message(c, &mut message);
                }
            }
            let mut ids = rest.split_whitespace().take_while(|t| !t.starts_with('('));
            let id = ids.next().ok_or_else(|| Error::Parse {
                offset: line_no,
                message: "commit line without an id".into(),
            })?;
            commits.push(LoggedCommit {
                id: id.to_string(),
                parents: ids.map(str::to_string).collect(),
                ..Default::default()
            });
            state = State::Header;
            continue;
        }

        let Some(commit) = commits.last_mut() else {
            if line.trim().is_empty() {
                continue;
            }
            return Err(Error::Parse {
                offset: line_no,
                message: format!("expected a commit line, got {line:?}"),
            });
        };

        if line.starts_with("diff --git ")
            || line.starts_with("diff --cc ")
            || line.starts_with("diff --combined ")
        {
            if matches!(state, State::Message | State::Header) {
                finish_message(commit, &mut message);
            }
            let path = line
                .rsplit_once(" b/")
                .map(|(_, p)| p.to_string())
                .unwrap_or_else(|| line.split_whitespace().last().unwrap_or("").to_string());
            commit.files.push(FileDiff {
                path,
                ..Default::default()
            });
            state = State::FileHeader;
            continue;
        }

        match state {
            State::Idle => {}
            State::Header => {
                if line.is_empty() {
                    state = State::Message;
                }
            }
            State::Message => {
                message.push(line.strip_prefix("    ").unwrap_or(line));
            }
            State::FileHeader | State::Hunk { .. } => {
                let file = commit.files.last_mut().unwrap();
                if line.starts_with("@@") {
                    match parse_hunk_header(line) {
                        Some((old, new)) if old + new > 0 => {
                            hunk = DiffHunk::default();
                            state = State::Hunk {
                                old_left: old,
                                new_left: new,
                            };
                        }
                        Some(_) => {}
                        None => {
                            file.error = Some(format!("line {}: bad hunk header", line_no + 1));
                            state = State::SkipFile;
                        }
                    }
                } else if line.starts_with("Binary files ") || line == "GIT binary patch" {
                    file.binary = true;
                }
            }
            State::SkipFile => {}
        }
    }

    if let Some(c) = commits.last_mut() {
        match state {
            State::Message | State::Header => finish_message(c, &mut message),
            State::Hunk { old_left, new_left } if old_left > 0 || new_left > 0 => {
                if let Some(f) = c.files.last_mut() {
                    f.error = Some("truncated hunk at end of input".into());
                }
            }
            _ => {}
        }
    }
    Ok(commits)
}

/// Pair each run of deletions with the run of insertions that immediately
/// follows it, position by position. Surplus lines on either side are
/// dropped, as are pairs whose two sides are identical.
pub fn pair_edits(hunks: &[DiffHunk]) -> Vec<(String, String)> {
    let mut pairs = Vec::new();
    for hunk in hunks {
        let lines = &hunk.lines;
        let mut i = 0;
        while i < lines.len() {
            if lines[i].tag != LineTag::Deletion {
                i += 1;
                continue;
            }
            let del_start = i;
            while i < lines.len() && lines[i].tag == LineTag::Deletion {
                i += 1;
            }
            let ins_start = i;
            while i < lines.len() && lines[i].tag == LineTag::Insertion {
                i += 1;
            }
            let dels = &lines[del_start..ins_start];
            let ins = &lines[ins_start..i];
            for (d, n) in dels.iter().zip(ins) {
                if d.text != n.text {
                    pairs.push((d.text.clone(), n.text.clone()));
                }
            }
        }
    }
    pairs
}
