//! Logistic-regression typo classifier over the three edit features.
//!
//! The model is `P(typo | f) = σ(w_ppl·ppl_ratio + w_dist·norm_dist +
//! w_num·numeric_only + bias)`, fit by maximizing the unregularized mean
//! log-likelihood with full-batch gradient ascent and a backtracking
//! (Armijo) line search. Training runs in standardized feature coordinates
//! and maps the result back, which leaves the optimum unchanged but makes
//! the step size independent of feature scale.

use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::metrics::{precision_recall_fbeta, ConfusionCounts};
use crate::model::{serialize_commit, CorpusReader, Edit, TYPO_THRESHOLD};

pub const MIN_TRAINING_EXAMPLES: usize = 10;
pub const DEFAULT_FOLDS: usize = 10;
pub const DEFAULT_SEED: u64 = 20_200_511;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassifierWeights {
    pub w_ppl: f64,
    pub w_dist: f64,
    pub w_num: f64,
    pub bias: f64,
}

impl ClassifierWeights {
    /// `[w_ppl, w_dist, w_num, bias]`
    pub fn to_array(self) -> [f64; 4] {
        [self.w_ppl, self.w_dist, self.w_num, self.bias]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        ClassifierWeights {
            w_ppl: a[0],
            w_dist: a[1],
            w_num: a[2],
            bias: a[3],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    pub fn logit(&self, f: &FeatureVector) -> f64 {
        let x = f.as_array();
        self.w_ppl * x[0] + self.w_dist * x[1] + self.w_num * x[2] + self.bias
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledExample {
    pub features: FeatureVector,
    /// True for typo edits (mechanical, spell, grammatical).
    pub label: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub max_iter: usize,
    /// Stop once an accepted step improves the mean loss by less than this.
    pub tol: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_iter: 10_000,
            tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub weights: ClassifierWeights,
    pub iterations: usize,
    pub loss: f64,
    /// False when training stopped at `max_iter`.
    pub converged: bool,
    /// Mean loss after every accepted step, starting with the initial loss.
    pub loss_history: Vec<f64>,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Typo probability, strictly inside (0, 1).
pub fn predict(w: &ClassifierWeights, f: &FeatureVector) -> f64 {
    sigmoid(w.logit(f)).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

fn example_nll(z: f64, label: bool) -> f64 {
    if label {
        softplus(-z)
    } else {
        softplus(z)
    }
}

/// Mean log-likelihood of `data` under `w`.
pub fn mean_log_likelihood(w: &ClassifierWeights, data: &[LabeledExample]) -> f64 {
    let total: f64 = data
        .iter()
        .map(|ex| -example_nll(w.logit(&ex.features), ex.label))
        .sum();
    total / data.len() as f64
}

/// Gradient of [`mean_log_likelihood`] with respect to
/// `[w_ppl, w_dist, w_num, bias]`.
pub fn gradient(w: &ClassifierWeights, data: &[LabeledExample]) -> [f64; 4] {
    let mut g = [0.0; 4];
    for ex in data {
        let x = ex.features.as_array();
        let y = if ex.label { 1.0 } else { 0.0 };
        let r = y - sigmoid(w.logit(&ex.features));
        for j in 0..3 {
            g[j] += r * x[j];
        }
        g[3] += r;
    }
    let n = data.len() as f64;
    g.map(|v| v / n)
}

struct Standardized {
    rows: Vec<([f64; 3], bool)>,
    mean: [f64; 3],
    scale: [f64; 3],
}

impl Standardized {
    fn new(data: &[LabeledExample]) -> Self {
        let n = data.len() as f64;
        let mut mean = [0.0; 3];
        for ex in data {
            for (m, x) in mean.iter_mut().zip(ex.features.as_array()) {
                *m += x / n;
            }
        }
        let mut scale = [0.0; 3];
        for ex in data {
            for j in 0..3 {
                scale[j] += (ex.features.as_array()[j] - mean[j]).powi(2) / n;
            }
        }
        for j in 0..3 {
            scale[j] = scale[j].sqrt();
            if scale[j].is_nan() || scale[j] <= 0.0 || !scale[j].is_finite() {
                // Constant column: leave it as is.
                scale[j] = 1.0;
                mean[j] = 0.0;
            }
        }
        let rows = data
            .iter()
            .map(|ex| {
                let x = ex.features.as_array();
                ([0, 1, 2].map(|j| (x[j] - mean[j]) / scale[j]), ex.label)
            })
            .collect();
        Standardized { rows, mean, scale }
    }

    fn loss_and_grad(&self, theta: &[f64; 4]) -> (f64, [f64; 4]) {
        let n = self.rows.len() as f64;
        let mut loss = 0.0;
        let mut g = [0.0; 4];
        for (x, label) in &self.rows {
            let z = theta[0] * x[0] + theta[1] * x[1] + theta[2] * x[2] + theta[3];
            loss += example_nll(z, *label);
            let r = sigmoid(z) - if *label { 1.0 } else { 0.0 };
            for j in 0..3 {
                g[j] += r * x[j];
            }
            g[3] += r;
        }
        (loss / n, g.map(|v| v / n))
    }

    fn loss(&self, theta: &[f64; 4]) -> f64 {
        self.loss_and_grad(theta).0
    }

    fn unscale(&self, theta: &[f64; 4]) -> ClassifierWeights {
        let w = [0, 1, 2].map(|j| theta[j] / self.scale[j]);
        let bias = theta[3] - (0..3).map(|j| w[j] * self.mean[j]).sum::<f64>();
        ClassifierWeights::from_array([w[0], w[1], w[2], bias])
    }
}

fn check_training_data(data: &[LabeledExample]) -> Result<()> {
    if data.len() < MIN_TRAINING_EXAMPLES {
        return Err(Error::data(format!(
            "need at least {MIN_TRAINING_EXAMPLES} training examples, got {}",
            data.len()
        )));
    }
    let positives = data.iter().filter(|e| e.label).count();
    if positives == 0 || positives == data.len() {
        return Err(Error::data("training data contains a single class"));
    }
    Ok(())
}

pub fn train(data: &[LabeledExample], cfg: &TrainConfig) -> Result<ClassifierWeights> {
    train_with_report(data, cfg).map(|r| r.weights)
}

pub fn train_with_report(data: &[LabeledExample], cfg: &TrainConfig) -> Result<TrainReport> {
    check_training_data(data)?;
    let std = Standardized::new(data);
    let mut theta = [0.0; 4];
    let (mut loss, mut grad) = std.loss_and_grad(&theta);
    let mut history = vec![loss];
    let mut step: f64 = 1.0;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < cfg.max_iter {
        let gnorm2: f64 = grad.iter().map(|g| g * g).sum();
        if gnorm2 == 0.0 {
            converged = true;
            break;
        }
        step = (step * 2.0).min(1e3);
        let accepted = loop {
            let cand = [0, 1, 2, 3].map(|j| theta[j] - step * grad[j]);
            let cand_loss = std.loss(&cand);
            if cand_loss.is_finite() && cand_loss <= loss - 1e-4 * step * gnorm2 {
                break Some((cand, cand_loss));
            }
            step *= 0.5;
            if step < 1e-16 {
                break None;
            }
        };
        iterations += 1;
        let Some((cand, cand_loss)) = accepted else {
            converged = true;
            break;
        };
        let improvement = loss - cand_loss;
        theta = cand;
        let (l, g) = std.loss_and_grad(&theta);
        loss = l;
        grad = g;
        history.push(loss);
        if improvement < cfg.tol {
            converged = true;
            break;
        }
    }

    if !loss.is_finite() {
        return Err(Error::data("training loss became non-finite"));
    }
    if !converged {
        log::warn!(
            "logistic regression stopped at max_iter = {} (loss {loss:.3e}); data may be separable",
            cfg.max_iter
        );
    }
    let weights = std.unscale(&theta);
    if !weights.is_finite() {
        return Err(Error::data("trained weights are not finite"));
    }
    Ok(TrainReport {
        weights,
        iterations,
        loss,
        converged,
        loss_history: history,
    })
}

/// Stratified fold assignment: positives and negatives are shuffled
/// separately with a seeded RNG and dealt round-robin into `k` folds.
/// Returns the fold index of every example.
pub fn stratified_folds(labels: &[bool], k: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i]).collect();
    let mut neg: Vec<usize> = (0..labels.len()).filter(|&i| !labels[i]).collect();
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    let mut fold = vec![0; labels.len()];
    for (slot, idx) in pos.into_iter().chain(neg).enumerate() {
        fold[idx] = slot % k;
    }
    fold
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FoldMetrics {
    pub counts: ConfusionCounts,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub folds: Vec<FoldMetrics>,
    /// Seed that produced these folds (the given one, or its retry).
    pub seed: u64,
}

/// k-fold cross-validation of the logistic-regression classifier.
pub fn cross_validate(
    data: &[LabeledExample],
    k: usize,
    seed: u64,
    cfg: &TrainConfig,
) -> Result<CvResult> {
    let positives = data.iter().filter(|e| e.label).count();
    if positives == 0 || positives == data.len() {
        return Err(Error::data("cross-validation needs both classes"));
    }
    cross_validate_with(data, k, seed, |train_set| {
        let w = train(train_set, cfg)?;
        Ok(move |f: &FeatureVector| predict(&w, f) >= TYPO_THRESHOLD)
    })
}

/// Cross-validation with an arbitrary learner. `fit` builds a decision
/// function from a training split. If fitting fails on some fold, the whole
/// run is retried once with the next seed.
pub fn cross_validate_with<F, P>(
    data: &[LabeledExample],
    k: usize,
    seed: u64,
    fit: F,
) -> Result<CvResult>
where
    F: Fn(&[LabeledExample]) -> Result<P>,
    P: Fn(&FeatureVector) -> bool,
{
    if k < 2 {
        return Err(Error::validation("k", "need at least 2 folds"));
    }
    if data.len() < k {
        return Err(Error::data(format!(
            "{} examples cannot fill {k} folds",
            data.len()
        )));
    }
    match run_folds(data, k, seed, &fit) {
        Ok(r) => Ok(r),
        Err(first) => {
            let retry = seed.wrapping_add(1);
            log::warn!("cross-validation failed with seed {seed} ({first}); retrying with {retry}");
            run_folds(data, k, retry, &fit)
        }
    }
}

fn run_folds<F, P>(data: &[LabeledExample], k: usize, seed: u64, fit: &F) -> Result<CvResult>
where
    F: Fn(&[LabeledExample]) -> Result<P>,
    P: Fn(&FeatureVector) -> bool,
{
    let labels: Vec<bool> = data.iter().map(|e| e.label).collect();
    let fold_of = stratified_folds(&labels, k, seed);
    let mut folds = Vec::with_capacity(k);
    for fold in 0..k {
        let train_set: Vec<LabeledExample> = data
            .iter()
            .zip(&fold_of)
            .filter(|(_, &f)| f != fold)
            .map(|(e, _)| *e)
            .collect();
        let decide = fit(&train_set)?;
        let mut counts = ConfusionCounts::default();
        for (ex, _) in data.iter().zip(&fold_of).filter(|(_, &f)| f == fold) {
            match (decide(&ex.features), ex.label) {
                (true, true) => counts.tp += 1,
                (true, false) => counts.fp += 1,
                (false, true) => counts.fn_ += 1,
                (false, false) => {}
            }
        }
        let (precision, recall, f1) = precision_recall_fbeta(&counts, 1.0);
        folds.push(FoldMetrics {
            counts,
            precision,
            recall,
            f1,
        });
    }
    let mean = |g: fn(&FoldMetrics) -> f64| folds.iter().map(g).sum::<f64>() / k as f64;
    Ok(CvResult {
        precision: mean(|f| f.precision),
        recall: mean(|f| f.recall),
        f1: mean(|f| f.f1),
        seed,
        folds,
    })
}

/// Weights as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightsFile {
    pub w_ppl: f64,
    pub w_dist: f64,
    pub w_num: f64,
    pub bias: f64,
    pub trained_on: String,
    pub seed: u64,
}

impl WeightsFile {
    pub fn new(w: ClassifierWeights, trained_on: impl Into<String>, seed: u64) -> Self {
        WeightsFile {
            w_ppl: w.w_ppl,
            w_dist: w.w_dist,
            w_num: w.w_num,
            bias: w.bias,
            trained_on: trained_on.into(),
            seed,
        }
    }

    pub fn weights(&self) -> ClassifierWeights {
        ClassifierWeights::from_array([self.w_ppl, self.w_dist, self.w_num, self.bias])
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LabelStats {
    pub records: usize,
    pub edits: usize,
    pub labelled: usize,
    pub unlabelled: usize,
}

/// Set `prob_typo` and `is_typo` on one edit. Edits without features are
/// left untouched and `false` is returned.
pub fn label_edit(edit: &mut Edit, w: &ClassifierWeights, threshold: f64) -> bool {
    let Some(f) = edit.features else {
        return false;
    };
    let p = predict(w, &f);
    edit.prob_typo = Some(p);
    edit.is_typo = Some(p >= threshold);
    true
}

/// Label every featurized edit of a corpus, preserving record and edit order.
///
/// Corpus records require `is_typo == (prob_typo >= 0.5)`, so a threshold
/// other than 0.5 makes writing fail with a validation error.
pub fn label_corpus<R: BufRead, W: Write>(
    input: R,
    mut output: W,
    w: &ClassifierWeights,
    threshold: f64,
) -> Result<LabelStats> {
    let mut stats = LabelStats::default();
    for rec in CorpusReader::new(input) {
        let mut rec = rec?;
        for edit in &mut rec.edits {
            stats.edits += 1;
            if label_edit(edit, w, threshold) {
                stats.labelled += 1;
            } else {
                stats.unlabelled += 1;
            }
        }
        let line = serialize_commit(&rec)?;
        writeln!(output, "{line}").map_err(|e| Error::io("<output>", e))?;
        stats.records += 1;
    }
    output.flush().map_err(|e| Error::io("<output>", e))?;
    Ok(stats)
}
