//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Run with `cargo test --test acceptance`.

mod common;

use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use chrono::{Duration, TimeZone, Utc};
use typocorpus::atomic::{align, alignment_cost, apply_edits, atomic_edits};
use typocorpus::classifier::{
    cross_validate, gradient, mean_log_likelihood, ClassifierWeights, LabeledExample, TrainConfig,
    DEFAULT_SEED,
};
use typocorpus::features::{levenshtein, FeatureVector};
use typocorpus::harvest::{is_eligible, EligibilityConfig};
use typocorpus::lm::CharLangModel;
use typocorpus::metrics::{fbeta, welch_ttest};
use typocorpus::model::RepoMeta;

use common::oracles;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn metric_reproduction() -> Outcome {
    let f05 = fbeta(0.563, 0.643, 0.5);
    let f1 = fbeta(0.874, 0.969, 1.0);
    check(
        (f05 - 0.577).abs() <= 0.001 && (f1 - 0.917).abs() <= 0.003,
        format!("F0.5 = {f05:.4}, F1 = {f1:.4}"),
    )
}

const UNICODE_POOL: &[char] = &[
    'a', 'b', 'e', 's', 't', ' ', '.', '0', '7', 'é', 'ß', 'Ω', 'ж', 'ع', 'न', 'あ', 'ア', '漢',
    '字', '한', '\u{301}', '\u{200d}', '😀', '🎉', '👍', '\t',
];

fn random_unicode(rng: &mut ChaCha8Rng, max_len: usize) -> String {
    let len = rng.gen_range(0..=max_len);
    (0..len)
        .map(|_| UNICODE_POOL[rng.gen_range(0..UNICODE_POOL.len())])
        .collect()
}

/// Either an unrelated string or a few random mutations of `x`, so that both
/// near and far pairs are exercised.
fn random_partner(rng: &mut ChaCha8Rng, x: &str, max_len: usize) -> String {
    if rng.gen_bool(0.3) {
        return random_unicode(rng, max_len);
    }
    let mut chars: Vec<char> = x.chars().collect();
    for _ in 0..rng.gen_range(0..=4) {
        let c = UNICODE_POOL[rng.gen_range(0..UNICODE_POOL.len())];
        match rng.gen_range(0..3) {
            0 if chars.len() < max_len => chars.insert(rng.gen_range(0..=chars.len()), c),
            1 if !chars.is_empty() => {
                chars.remove(rng.gen_range(0..chars.len()));
            }
            _ if !chars.is_empty() => {
                let i = rng.gen_range(0..chars.len());
                chars[i] = c;
            }
            _ => {}
        }
    }
    chars.into_iter().collect()
}

fn edit_distance_oracle() -> Outcome {
    let strings = oracles::all_strings(&['a', 'b', 'c'], 6);
    let mut compared = 0usize;
    for x in &strings {
        for y in &strings {
            if levenshtein(x, y) != oracles::edit_distance(x, y) {
                return Err(format!("mismatch on ({x:?}, {y:?})"));
            }
            compared += 1;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..1_000 {
        let x = random_unicode(&mut rng, 20);
        let y = random_partner(&mut rng, &x, 20);
        if levenshtein(&x, &y) != oracles::edit_distance(&x, &y) {
            return Err(format!("mismatch on ({x:?}, {y:?})"));
        }
    }
    Ok(format!(
        "{compared} exhaustive pairs over {{a,b,c}} and 1000 Unicode pairs agree"
    ))
}

fn atomic_round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..1_000 {
        let x = random_unicode(&mut rng, 20);
        let y = random_partner(&mut rng, &x, 20);
        let rebuilt = apply_edits(&x, &atomic_edits(&x, &y));
        if rebuilt != y {
            return Err(format!("({x:?}, {y:?}) rebuilt as {rebuilt:?}"));
        }
        let cost = alignment_cost(&align(&x, &y));
        let d = oracles::edit_distance(&x, &y);
        if cost != d {
            return Err(format!(
                "({x:?}, {y:?}): alignment cost {cost}, distance {d}"
            ));
        }
    }
    Ok("1000 random pairs reconstruct; alignment cost equals distance".into())
}

fn lm_sanity() -> Outcome {
    let alphabet = ['a', 'b', 'c', 'd'];
    let lines: Vec<String> = oracles::all_strings(&alphabet, 5)
        .into_iter()
        .filter(|s| s.chars().count() == 5)
        .collect();
    let doubled: Vec<&String> = lines.iter().chain(&lines).collect();
    let uniform = CharLangModel::train(doubled, 5).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst_pp = 0.0f64;
    for _ in 0..100 {
        let len = rng.gen_range(1..=30);
        let s: String = (0..len).map(|_| alphabet[rng.gen_range(0..4)]).collect();
        let pp = uniform.perplexity(&s).map_err(|e| e.to_string())?;
        worst_pp = worst_pp.max((pp - 4.0).abs());
    }

    let eng = common::eng_lm();
    let text = common::read_fixture("text/eng_train.txt");
    let chars: Vec<char> = text.chars().filter(|c| *c != '\n').collect();
    let mut worst_sum = 0.0f64;
    for i in 0..100 {
        let prefix: String = if i % 4 == 0 {
            random_unicode(&mut rng, 6)
        } else {
            let start = rng.gen_range(0..chars.len() - 8);
            chars[start..start + rng.gen_range(0..8)].iter().collect()
        };
        let (dist, unk) = eng.next_distribution(&prefix);
        let total: f64 = dist.iter().map(|(_, p)| p).sum::<f64>() + unk;
        worst_sum = worst_sum.max((total - 1.0).abs());
    }
    check(
        worst_pp <= 1e-6 && worst_sum <= 1e-9,
        format!("max |PP - 4| = {worst_pp:.2e}, max |sum - 1| = {worst_sum:.2e}"),
    )
}

fn random_example(rng: &mut ChaCha8Rng) -> LabeledExample {
    LabeledExample {
        features: FeatureVector {
            ppl_ratio: rng.gen_range(0.05..5.0),
            norm_dist: rng.gen_range(0.0..1.0),
            numeric_only: rng.gen_bool(0.2),
        },
        label: rng.gen_bool(0.5),
    }
}

/// 400 examples: typos have a perplexity drop and a small edit, the rest a
/// perplexity rise or a large rewrite.
fn separable_dataset(seed: u64) -> Vec<LabeledExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..400)
        .map(|i| {
            let label = i % 2 == 0;
            let features = if label {
                FeatureVector {
                    ppl_ratio: rng.gen_range(0.4..0.95),
                    norm_dist: rng.gen_range(0.01..0.25),
                    numeric_only: false,
                }
            } else {
                FeatureVector {
                    ppl_ratio: rng.gen_range(1.05..3.0),
                    norm_dist: rng.gen_range(0.35..1.0),
                    numeric_only: rng.gen_bool(0.1),
                }
            };
            LabeledExample { features, label }
        })
        .collect()
}

fn classifier_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let data: Vec<LabeledExample> = (0..60).map(|_| random_example(&mut rng)).collect();
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let w: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-3.0..3.0));
        let g = gradient(&ClassifierWeights::from_array(w), &data);
        let h = 1e-5;
        let fd: Vec<f64> = (0..4)
            .map(|k| {
                let (mut hi, mut lo) = (w, w);
                hi[k] += h;
                lo[k] -= h;
                (mean_log_likelihood(&ClassifierWeights::from_array(hi), &data)
                    - mean_log_likelihood(&ClassifierWeights::from_array(lo), &data))
                    / (2.0 * h)
            })
            .collect();
        let diff = g
            .iter()
            .zip(&fd)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        let scale = g.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-8);
        worst = worst.max(diff / scale);
    }
    let cv = cross_validate(
        &separable_dataset(6),
        10,
        DEFAULT_SEED,
        &TrainConfig::default(),
    )
    .map_err(|e| e.to_string())?;
    check(
        worst <= 1e-4 && cv.f1 >= 0.95,
        format!(
            "max relative gradient error {worst:.2e}, 10-fold CV F1 {:.4}",
            cv.f1
        ),
    )
}

fn cli(args: &[&str]) -> Result<String, String> {
    let (code, out, err) = common::run_cli(args);
    if code == 0 {
        Ok(out)
    } else {
        Err(format!(
            "`typocorpus {}` exited {code}: {err}",
            args.join(" ")
        ))
    }
}

fn pipeline_golden() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dir = tmp.path();
    common::train_fixture_models(dir);
    let p = |name: &str| dir.join(name).display().to_string();
    let fx = |rel: &str| common::fixture(rel).display().to_string();

    cli(&[
        "-q",
        "harvest",
        "--dump",
        &fx("pipeline/events.jsonl"),
        "--out",
        &p("eligible.jsonl"),
    ])?;
    cli(&[
        "-q",
        "extract",
        "--diff-dir",
        &fx("pipeline/diffs"),
        "--eligible",
        &p("eligible.jsonl"),
        "--out",
        &p("typo.jsonl"),
    ])?;
    cli(&[
        "-q",
        "langfilter",
        "--in",
        &p("typo.jsonl"),
        "--profiles",
        &p("profiles"),
        "--out",
        &p("filtered.jsonl"),
    ])?;
    cli(&[
        "-q",
        "featurize",
        "--in",
        &p("filtered.jsonl"),
        "--models",
        &p("models"),
        "--out",
        &p("features.jsonl"),
    ])?;
    cli(&[
        "-q",
        "classify",
        "--in",
        &p("features.jsonl"),
        "--weights",
        &fx("pipeline/weights.json"),
        "--out",
        &p("final.jsonl"),
    ])?;

    let got = std::fs::read(dir.join("final.jsonl")).map_err(|e| e.to_string())?;
    let want =
        std::fs::read(common::fixture("pipeline/golden.jsonl")).map_err(|e| e.to_string())?;
    if got != want {
        return Err("final JSONL differs from golden.jsonl".into());
    }

    let tsv = cli(&["-q", "stats", "--in", &p("final.jsonl"), "--format", "tsv"])?;
    let rows: Vec<&str> = tsv.lines().skip(1).collect();
    let expected = [
        "eng\t2\t5\t5\t544",
        "jpn\t1\t0\t1\t30",
        "Total\t2\t5\t6\t574",
    ];
    check(
        rows == expected,
        format!("golden bytes match; stats rows {rows:?}"),
    )
}

fn perplexity_direction() -> Outcome {
    let lm = common::eng_lm();
    let pairs = common::labelled_rows("text/corrupted_clean.tsv");
    let (mut src_pp, mut tgt_pp) = (Vec::new(), Vec::new());
    for (corrupted, clean) in &pairs {
        src_pp.push(lm.perplexity(corrupted).map_err(|e| e.to_string())?);
        tgt_pp.push(lm.perplexity(clean).map_err(|e| e.to_string())?);
    }
    let lower = src_pp.iter().zip(&tgt_pp).filter(|(s, t)| t < s).count();
    let share = lower as f64 / pairs.len() as f64;
    let test = welch_ttest(&src_pp, &tgt_pp).map_err(|e| e.to_string())?;
    check(
        pairs.len() == 200 && share >= 0.8 && test.p_two_tailed < 0.01,
        format!(
            "PP(target) < PP(source) in {lower}/{} pairs; Welch t = {:.3}, p = {:.2e}",
            pairs.len(),
            test.t,
            test.p_two_tailed
        ),
    )
}

fn filter_conjunction() -> Outcome {
    let cfg = EligibilityConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let licenses = [
        "mit",
        "apache-2.0",
        "gpl-3.0",
        "bsd-3-clause",
        "unlicense",
        "",
        "MIT",
    ];
    let kinds = [
        "pull-request",
        "pull-request-review-comment",
        "push",
        "watch",
        "fork",
    ];
    let near = |rng: &mut ChaCha8Rng, edge: u64| -> u64 {
        match rng.gen_range(0..3) {
            0 => edge.saturating_add_signed(rng.gen_range(-2..=2)),
            1 => rng.gen_range(0..edge.saturating_mul(2).max(1)),
            _ => rng.gen(),
        }
    };
    let mut eligible = 0;
    for _ in 0..10_000 {
        let edge_time = if rng.gen_bool(0.5) {
            cfg.window_start
        } else {
            cfg.window_end
        };
        let meta = RepoMeta {
            full_name: "owner/name".into(),
            stars: near(&mut rng, cfg.min_stars),
            size_bytes: if rng.gen_bool(0.5) {
                near(&mut rng, cfg.min_size_bytes)
            } else {
                near(&mut rng, cfg.max_size_bytes)
            },
            license_id: licenses[rng.gen_range(0..licenses.len())].into(),
            last_event_time: if rng.gen_bool(0.5) {
                edge_time + Duration::seconds(rng.gen_range(-2..=2))
            } else {
                Utc.with_ymd_and_hms(2016, 1, 1, 0, 0, 0).unwrap()
                    + Duration::days(rng.gen_range(0..5 * 365))
            },
            event_kind: kinds[rng.gen_range(0..kinds.len())].into(),
        };
        let stars = meta.stars >= cfg.min_stars;
        let size = cfg.min_size_bytes <= meta.size_bytes && meta.size_bytes <= cfg.max_size_bytes;
        let license = cfg.allowed_licenses.iter().any(|l| *l == meta.license_id);
        let activity = cfg
            .required_event_kinds
            .iter()
            .any(|k| *k == meta.event_kind)
            && cfg.window_start <= meta.last_event_time
            && meta.last_event_time <= cfg.window_end;
        let expected = stars && size && license && activity;
        if is_eligible(&meta, &cfg) != expected {
            return Err(format!("disagreement on {meta:?}"));
        }
        eligible += usize::from(expected);
    }
    Ok(format!("10000 cases agree ({eligible} eligible)"))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("metric reproduction", metric_reproduction),
        ("edit-distance oracle", edit_distance_oracle),
        ("atomic-edit round trip", atomic_round_trip),
        ("LM sanity", lm_sanity),
        ("classifier correctness", classifier_correctness),
        ("pipeline golden", pipeline_golden),
        ("perplexity direction", perplexity_direction),
        ("filter conjunction", filter_conjunction),
    ];
    assert!(Path::new(env!("CARGO_BIN_EXE_typocorpus")).exists());
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {}. {name}: {detail} ({secs:.2}s)", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {}. {name}: {detail} ({secs:.2}s)", i + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
