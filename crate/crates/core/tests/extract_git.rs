use std::path::{Path, PathBuf};
use std::process::Command;

use proptest::prelude::*;

use typocorpus::extract::{
    discover_git_repos, extract_repo, pair_edits, DiffHunk, DiffLine, ExtractConfig, LineTag,
    RepoSource,
};
use typocorpus::model::{write_corpus, CommitRecord};

struct Repo {
    path: PathBuf,
    home: PathBuf,
    tick: u32,
}

impl Repo {
    fn init(root: &Path, name: &str) -> Repo {
        let path = root.join(name);
        std::fs::create_dir_all(&path).unwrap();
        let mut repo = Repo {
            path,
            home: root.to_path_buf(),
            tick: 0,
        };
        repo.git(&["init", "-q", "-b", "main"]);
        repo
    }

    fn git(&mut self, args: &[&str]) -> String {
        self.tick += 1;
        let date = format!("2018-04-01T10:{:02}:00Z", self.tick);
        let out = Command::new("git")
            .args(args)
            .current_dir(&self.path)
            .env("HOME", &self.home)
            .env("GIT_CONFIG_NOSYSTEM", "1")
            .env("GIT_AUTHOR_NAME", "Test")
            .env("GIT_AUTHOR_EMAIL", "test@example.com")
            .env("GIT_COMMITTER_NAME", "Test")
            .env("GIT_COMMITTER_EMAIL", "test@example.com")
            .env("GIT_AUTHOR_DATE", &date)
            .env("GIT_COMMITTER_DATE", &date)
            .output()
            .unwrap();
        assert!(
            out.status.success(),
            "git {args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        String::from_utf8_lossy(&out.stdout).trim().to_string()
    }

    fn write(&self, file: &str, text: &str) {
        std::fs::write(self.path.join(file), text).unwrap();
    }

    fn commit(&mut self, file: &str, text: &str, message: &str) -> String {
        self.write(file, text);
        self.git(&["add", "-A"]);
        self.git(&["commit", "-q", "-m", message]);
        self.git(&["rev-parse", "HEAD"])
    }
}

fn source(repo: &Repo, name: &str) -> RepoSource {
    RepoSource::Git {
        full_name: name.into(),
        path: repo.path.clone(),
    }
}

fn pairs(rec: &CommitRecord) -> Vec<(&str, &str)> {
    rec.edits
        .iter()
        .map(|e| (e.src.text.as_str(), e.tgt.text.as_str()))
        .collect()
}

/// main: root (mentions typo) -> fix -> feature merge -> TYPO fix.
/// The merged branch carries its own typo commit, which is off the first
/// parent chain.
fn build_history(root: &Path) -> (Repo, String, String) {
    let mut r = Repo::init(root, "owner/docs");
    r.commit(
        "a.txt",
        "Helo world\nsecond line\n",
        "Initial import, typo and all",
    );
    let fix = r.commit(
        "a.txt",
        "Hello world\nsecond line\n",
        "Fix typo in greeting",
    );
    r.git(&["checkout", "-q", "-b", "feature"]);
    r.commit("b.txt", "teh end\n", "add b");
    r.commit("b.txt", "the end\n", "typo in b");
    r.git(&["checkout", "-q", "main"]);
    r.commit("c.txt", "cafe\u{301} menu\n", "add menu");
    r.git(&[
        "merge",
        "-q",
        "--no-ff",
        "-m",
        "Merge feature (typo fixes)",
        "feature",
    ]);
    let upper = r.commit("c.txt", "caf\u{e9} menus\n", "TYPO: plural");
    (r, fix, upper)
}

#[test]
fn walks_first_parent_history_of_main() {
    let dir = tempfile::tempdir().unwrap();
    let (repo, fix, upper) = build_history(dir.path());
    let recs = extract_repo(
        &source(&repo, "owner/docs"),
        &ExtractConfig::default(),
        None,
    )
    .unwrap();

    let ids: Vec<&str> = recs.iter().map(|r| r.commit.as_str()).collect();
    assert_eq!(
        ids,
        vec![upper.as_str(), fix.as_str()],
        "newest first, merge and root skipped"
    );
    assert_eq!(pairs(&recs[1]), vec![("Helo world", "Hello world")]);
    // the source side was committed decomposed and comes out composed
    assert_eq!(pairs(&recs[0]), vec![("caf\u{e9} menu", "caf\u{e9} menus")]);
    assert!(recs
        .iter()
        .all(|r| r.validate().is_ok() && r.repo == "owner/docs"));
}

#[test]
fn case_sensitive_keyword() {
    let dir = tempfile::tempdir().unwrap();
    let (repo, fix, _) = build_history(dir.path());
    let cfg = ExtractConfig {
        case_sensitive: true,
        ..ExtractConfig::default()
    };
    let recs = extract_repo(&source(&repo, "owner/docs"), &cfg, None).unwrap();
    assert_eq!(recs.len(), 1);
    assert_eq!(recs[0].commit, fix);
}

#[test]
fn extraction_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (repo, _, _) = build_history(dir.path());
    let run = || {
        let recs = extract_repo(
            &source(&repo, "owner/docs"),
            &ExtractConfig::default(),
            None,
        )
        .unwrap();
        let mut buf = Vec::new();
        write_corpus(&mut buf, &recs).unwrap();
        buf
    };
    assert_eq!(run(), run());
}

#[test]
fn clone_follows_the_remote_default_branch() {
    let dir = tempfile::tempdir().unwrap();
    let (mut origin, fix, upper) = build_history(dir.path());
    let clone_path = dir.path().join("clones/docs");
    std::fs::create_dir_all(clone_path.parent().unwrap()).unwrap();
    let origin_path = origin.path.display().to_string();
    origin.git(&["clone", "-q", &origin_path, clone_path.to_str().unwrap()]);
    let mut clone = Repo {
        path: clone_path,
        home: dir.path().to_path_buf(),
        tick: 50,
    };
    clone.git(&["checkout", "-q", "-b", "wip"]);
    clone.commit("a.txt", "Hello wrold\nsecond line\n", "wip typo experiment");

    let recs = extract_repo(
        &source(&clone, "clones/docs"),
        &ExtractConfig::default(),
        None,
    )
    .unwrap();
    let ids: Vec<&str> = recs.iter().map(|r| r.commit.as_str()).collect();
    assert_eq!(ids, vec![upper.as_str(), fix.as_str()]);
}

#[test]
fn too_many_edits_drop_the_commit() {
    let dir = tempfile::tempdir().unwrap();
    let mut r = Repo::init(dir.path(), "o/many");
    let before: String = (0..11).map(|i| format!("line {i} wrnog\n")).collect();
    let after: String = (0..11).map(|i| format!("line {i} wrong\n")).collect();
    r.commit("f.txt", &before, "start");
    r.commit("f.txt", &after, "fix typos everywhere");
    let ten_before: String = (0..10).map(|i| format!("row {i} wrnog\n")).collect();
    let ten_after: String = (0..10).map(|i| format!("row {i} wrong\n")).collect();
    r.commit("g.txt", &ten_before, "more");
    r.commit("g.txt", &ten_after, "typo sweep");
    let recs = extract_repo(&source(&r, "o/many"), &ExtractConfig::default(), None).unwrap();
    assert_eq!(recs.len(), 1);
    assert_eq!(recs[0].message, "typo sweep");
    assert_eq!(recs[0].edits.len(), 10);
}

#[test]
fn discovery_finds_owner_name_layout() {
    let dir = tempfile::tempdir().unwrap();
    let _history = build_history(dir.path());
    let mut other = Repo::init(dir.path(), "zeta/tool");
    other.commit("x", "x\n", "init");
    let found = discover_git_repos(dir.path()).unwrap();
    let names: Vec<&str> = found.iter().map(|s| s.full_name()).collect();
    assert_eq!(names, vec!["owner/docs", "zeta/tool"]);
}

#[test]
fn empty_repository_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let r = Repo::init(dir.path(), "o/empty");
    let err = extract_repo(&source(&r, "o/empty"), &ExtractConfig::default(), None).unwrap_err();
    assert_eq!(err.exit_code(), 2, "{err}");
}

fn tagged_line() -> impl Strategy<Value = DiffLine> {
    (0u8..3, "[ab]{0,2}").prop_map(|(tag, text)| match tag {
        0 => DiffLine::context(text),
        1 => DiffLine::deletion(text),
        _ => DiffLine::insertion(text),
    })
}

proptest! {
    #[test]
    fn pairing_follows_runs(lines in prop::collection::vec(tagged_line(), 0..30)) {
        let got = pair_edits(&[DiffHunk::new(lines.clone())]);
        prop_assert!(got.iter().all(|(s, t)| s != t));

        // independent reading: tag string, regex for "-+ followed by +*"
        let tags: String = lines
            .iter()
            .map(|l| match l.tag {
                LineTag::Context => ' ',
                LineTag::Deletion => '-',
                LineTag::Insertion => '+',
            })
            .collect();
        let re = regex::Regex::new(r"-+\+*").unwrap();
        let mut expected = Vec::new();
        for m in re.find_iter(&tags) {
            let k = m.as_str().matches('-').count();
            let n = m.as_str().len() - k;
            for i in 0..k.min(n) {
                let (d, a) = (&lines[m.start() + i], &lines[m.start() + k + i]);
                if d.text != a.text {
                    expected.push((d.text.clone(), a.text.clone()));
                }
            }
        }
        prop_assert_eq!(got, expected);
    }
}
