#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use typocorpus::langid::{train_profiles, LangProfile};
use typocorpus::lm::CharLangModel;

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(rel)
}

pub fn read_fixture(rel: &str) -> String {
    std::fs::read_to_string(fixture(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
}

pub fn lines(rel: &str) -> Vec<String> {
    read_fixture(rel)
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(str::to_string)
        .collect()
}

pub fn eng_jpn_profiles() -> Vec<LangProfile> {
    let mut corpora = BTreeMap::new();
    corpora.insert("eng".to_string(), read_fixture("text/eng_train.txt"));
    corpora.insert("jpn".to_string(), read_fixture("text/jpn_train.txt"));
    train_profiles(&corpora).unwrap()
}

pub fn eng_lm() -> CharLangModel {
    CharLangModel::train(lines("text/eng_train.txt"), 5).unwrap()
}

/// `(label, text)` rows of a two-column TSV fixture.
pub fn labelled_rows(rel: &str) -> Vec<(String, String)> {
    read_fixture(rel)
        .lines()
        .filter(|l| !l.is_empty())
        .map(|l| {
            let (a, b) = l.split_once('\t').expect("two columns");
            (a.to_string(), b.to_string())
        })
        .collect()
}

pub mod oracles;

/// Run the `typocorpus` binary; returns (exit code, stdout, stderr).
pub fn run_cli<I, S>(args: I) -> (i32, String, String)
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_typocorpus"))
        .args(args)
        .env_remove("TYPOCORPUS_LOG")
        .output()
        .expect("spawn typocorpus");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

/// Train language-id profiles and eng/jpn language models from the text
/// fixtures into `dir/profiles` and `dir/models`.
pub fn train_fixture_models(dir: &std::path::Path) {
    let eng = fixture("text/eng_train.txt");
    let jpn = fixture("text/jpn_train.txt");
    for (cmd, sub) in [("train-langid", "profiles"), ("train-lm", "models")] {
        let out_dir = dir.join(sub);
        let (code, _, err) = run_cli([
            cmd.to_string(),
            "--quiet".into(),
            "--corpus".into(),
            format!("eng={}", eng.display()),
            "--corpus".into(),
            format!("jpn={}", jpn.display()),
            "--out-dir".into(),
            out_dir.display().to_string(),
        ]);
        assert_eq!(code, 0, "{cmd}: {err}");
    }
}
