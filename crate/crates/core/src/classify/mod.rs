//! Supervised text classification for relevance filtering and damage assessment.
//!
//! A logistic-regression model over hashed unigram/bigram features, trained by
//! online gradient descent with L2 regularization. The decision threshold is
//! chosen on the validation split to maximize F1.

pub mod auc;
pub mod features;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use auc::{auc, AucError};
pub use features::{featurize, tokenize, FeatureVector, NUM_BUCKETS};

use crate::rng::{substream, Stream};
use crate::types::DamageLabel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Relevance,
    DamagePresence,
    DamageInfo,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Relevance => "relevance",
            Task::DamagePresence => "damage_presence",
            Task::DamageInfo => "damage_info",
        })
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "relevance" => Ok(Task::Relevance),
            "damage_presence" => Ok(Task::DamagePresence),
            "damage_info" => Ok(Task::DamageInfo),
            other => Err(format!("unknown task {other:?}")),
        }
    }
}

/// One labeled corpus row (`{text, label, task}` in JSON Lines).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Example {
    pub text: String,
    pub label: bool,
    pub task: Task,
}

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("corpus line {line}: {reason}")]
    Corpus { line: usize, reason: String },
    #[error("corpus has no examples of class {0}")]
    SingleClass(bool),
    #[error("training diverged at epoch {epoch}: non-finite loss")]
    Diverged { epoch: usize },
    #[error("invalid hyperparameters: {0}")]
    Hyperparams(String),
    #[error("model task is {actual}, expected {expected}")]
    WrongTask { expected: Task, actual: Task },
    #[error("model file: {0}")]
    ModelFile(String),
    #[error(transparent)]
    Auc(#[from] AucError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub fn parse_corpus(text: &str) -> Result<Vec<Example>, ClassifyError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| ClassifyError::Corpus { line: i + 1, reason: e.to_string() })
        })
        .collect()
}

pub fn load_corpus(path: &Path) -> Result<Vec<Example>, ClassifyError> {
    parse_corpus(&std::fs::read_to_string(path)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split<T> {
    pub train: Vec<T>,
    pub validation: Vec<T>,
    pub test: Vec<T>,
}

/// Stratified 64/16/20 split. Per class, 20% (rounded) goes to test, 16% to
/// validation and the remainder to training.
pub fn split_dataset<T: Clone>(
    examples: &[T],
    label: impl Fn(&T) -> bool,
    seed: u64,
) -> Result<Split<T>, ClassifyError> {
    let mut rng = substream(seed, Stream::Split);
    let mut split = Split { train: Vec::new(), validation: Vec::new(), test: Vec::new() };
    for class in [true, false] {
        let mut idx: Vec<usize> = (0..examples.len()).filter(|&i| label(&examples[i]) == class).collect();
        if idx.is_empty() {
            return Err(ClassifyError::SingleClass(class));
        }
        idx.shuffle(&mut rng);
        let n = idx.len() as f64;
        let n_test = (0.20 * n).round() as usize;
        let n_val = (0.16 * n).round() as usize;
        for (k, &i) in idx.iter().enumerate() {
            let bucket = if k < n_test {
                &mut split.test
            } else if k < n_test + n_val {
                &mut split.validation
            } else {
                &mut split.train
            };
            bucket.push(examples[i].clone());
        }
    }
    Ok(split)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Hyperparams {
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams { epochs: 8, learning_rate: 0.5, l2: 1e-5, seed: 2015 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    pub task: Task,
    pub weights: Vec<f64>,
    pub bias: f64,
    threshold: f64,
}

impl ClassifierModel {
    pub fn zero(task: Task) -> Self {
        ClassifierModel { task, weights: vec![0.0; NUM_BUCKETS], bias: 0.0, threshold: 0.5 }
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// Thresholds are clamped into [0, 1].
    pub fn set_threshold(&mut self, threshold: f64) {
        self.threshold = if threshold.is_nan() { 0.5 } else { threshold.clamp(0.0, 1.0) };
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.set_threshold(threshold);
        self
    }

    pub fn score_features(&self, x: &FeatureVector) -> f64 {
        sigmoid(x.dot_dense(&self.weights) + self.bias)
    }

    pub fn score(&self, text: &str) -> f64 {
        self.score_features(&featurize(text))
    }

    pub fn predict(&self, text: &str) -> bool {
        self.score(text) >= self.threshold
    }

    pub fn expect_task(&self, expected: Task) -> Result<(), ClassifyError> {
        if self.task == expected {
            Ok(())
        } else {
            Err(ClassifyError::WrongTask { expected, actual: self.task })
        }
    }

    pub fn to_json(&self) -> String {
        let file = ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            task: self.task,
            threshold: self.threshold,
            bias: self.bias,
            buckets: self.weights.len(),
            weights: self
                .weights
                .iter()
                .enumerate()
                .filter(|(_, w)| **w != 0.0)
                .map(|(i, w)| (i as u32, *w))
                .collect(),
        };
        serde_json::to_string(&file).expect("model is serializable")
    }

    pub fn from_json(text: &str) -> Result<Self, ClassifyError> {
        let file: ModelFile =
            serde_json::from_str(text).map_err(|e| ClassifyError::ModelFile(e.to_string()))?;
        if file.format != MODEL_FORMAT || file.version != MODEL_VERSION {
            return Err(ClassifyError::ModelFile(format!(
                "unsupported model format {} v{}",
                file.format, file.version
            )));
        }
        if file.buckets != NUM_BUCKETS {
            return Err(ClassifyError::ModelFile(format!("expected {NUM_BUCKETS} buckets")));
        }
        let mut weights = vec![0.0; NUM_BUCKETS];
        for (i, w) in file.weights {
            let slot = weights
                .get_mut(i as usize)
                .ok_or_else(|| ClassifyError::ModelFile(format!("weight index {i} out of range")))?;
            if !w.is_finite() {
                return Err(ClassifyError::ModelFile(format!("non-finite weight at {i}")));
            }
            *slot = w;
        }
        if !file.bias.is_finite() || !(0.0..=1.0).contains(&file.threshold) {
            return Err(ClassifyError::ModelFile("bias or threshold out of range".into()));
        }
        Ok(ClassifierModel { task: file.task, weights, bias: file.bias, threshold: file.threshold })
    }
}

const MODEL_FORMAT: &str = "hysense-linear-text";
const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format: String,
    version: u32,
    task: Task,
    threshold: f64,
    bias: f64,
    buckets: usize,
    weights: Vec<(u32, f64)>,
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub r#fn: usize,
}

impl Confusion {
    pub fn from_predictions(predicted: &[bool], labels: &[bool]) -> Self {
        let mut c = Confusion::default();
        for (&p, &l) in predicted.iter().zip(labels) {
            match (p, l) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.r#fn += 1,
            }
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: Task,
    pub auc: f64,
    pub threshold: f64,
    pub train_size: usize,
    pub validation_size: usize,
    pub test_size: usize,
    pub confusion: Confusion,
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "task: {}", self.task)?;
        writeln!(
            f,
            "split: train={} validation={} test={}",
            self.train_size, self.validation_size, self.test_size
        )?;
        writeln!(f, "threshold: {:.4}", self.threshold)?;
        writeln!(f, "auc: {:.4}", self.auc)?;
        write!(
            f,
            "confusion: tp={} fp={} tn={} fn={}",
            self.confusion.tp, self.confusion.fp, self.confusion.tn, self.confusion.r#fn
        )
    }
}

/// Examples of `task` from a mixed corpus.
pub fn examples_for(corpus: &[Example], task: Task) -> Vec<Example> {
    corpus.iter().filter(|e| e.task == task).cloned().collect()
}

/// Fits weights on `train` only. Threshold is left at 0.5.
pub fn fit(train: &[Example], task: Task, hp: &Hyperparams) -> Result<ClassifierModel, ClassifyError> {
    if !(hp.learning_rate > 0.0) || !(hp.l2 >= 0.0) || hp.learning_rate * hp.l2 >= 1.0 {
        return Err(ClassifyError::Hyperparams(format!(
            "learning_rate={} l2={}",
            hp.learning_rate, hp.l2
        )));
    }
    let xs: Vec<FeatureVector> = train.iter().map(|e| featurize(&e.text)).collect();
    let mut rng = substream(hp.seed, Stream::Training);
    let mut order: Vec<usize> = (0..xs.len()).collect();
    // true weights are scale * v; lets the L2 shrink touch one number per step
    let mut v = vec![0.0f64; NUM_BUCKETS];
    let mut scale = 1.0f64;
    let mut bias = 0.0f64;
    let decay = 1.0 - hp.learning_rate * hp.l2;
    for epoch in 1..=hp.epochs {
        order.shuffle(&mut rng);
        let mut loss = 0.0;
        for &i in &order {
            let x = &xs[i];
            let y = if train[i].label { 1.0 } else { 0.0 };
            let z = scale * x.dot_dense(&v) + bias;
            loss += if train[i].label { softplus(-z) } else { softplus(z) };
            let g = sigmoid(z) - y;
            scale *= decay;
            if scale < 1e-9 {
                v.iter_mut().for_each(|w| *w *= scale);
                scale = 1.0;
            }
            let step = hp.learning_rate * g / scale;
            for &(j, xj) in &x.entries {
                v[j as usize] -= step * xj;
            }
            bias -= hp.learning_rate * g;
        }
        if !loss.is_finite() || !bias.is_finite() {
            return Err(ClassifyError::Diverged { epoch });
        }
    }
    let weights: Vec<f64> = v.iter().map(|w| w * scale).collect();
    if weights.iter().any(|w| !w.is_finite()) {
        return Err(ClassifyError::Diverged { epoch: hp.epochs });
    }
    Ok(ClassifierModel { task, weights, bias, threshold: 0.5 })
}

/// Threshold maximizing F1 on (score, label) pairs; ties go to the higher
/// threshold. Falls back to 0.5 when no positive is present.
pub fn best_f1_threshold(scores: &[f64], labels: &[bool]) -> f64 {
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 {
        return 0.5;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut tp, mut fp) = (0usize, 0usize);
    let (mut best_f1, mut best_t) = (-1.0, 0.5);
    let mut i = 0;
    while i < order.len() {
        let t = scores[order[i]];
        while i < order.len() && scores[order[i]] == t {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let f1 = 2.0 * tp as f64 / (2 * tp + fp + (positives - tp)) as f64;
        if f1 > best_f1 {
            best_f1 = f1;
            best_t = t;
        }
    }
    best_t
}

/// Full protocol: stratified split, fit on train, threshold on validation,
/// AUC and confusion on test.
pub fn train(
    corpus: &[Example],
    task: Task,
    hp: &Hyperparams,
) -> Result<(ClassifierModel, EvalReport), ClassifyError> {
    let examples = examples_for(corpus, task);
    let split = split_dataset(&examples, |e| e.label, hp.seed)?;
    let mut model = fit(&split.train, task, hp)?;

    let val_scores: Vec<f64> = split.validation.iter().map(|e| model.score(&e.text)).collect();
    let val_labels: Vec<bool> = split.validation.iter().map(|e| e.label).collect();
    model.set_threshold(best_f1_threshold(&val_scores, &val_labels));

    let test_scores: Vec<f64> = split.test.iter().map(|e| model.score(&e.text)).collect();
    let test_labels: Vec<bool> = split.test.iter().map(|e| e.label).collect();
    let predicted: Vec<bool> = test_scores.iter().map(|&s| s >= model.threshold()).collect();
    let report = EvalReport {
        task,
        auc: auc(&test_scores, &test_labels)?,
        threshold: model.threshold(),
        train_size: split.train.len(),
        validation_size: split.validation.len(),
        test_size: split.test.len(),
        confusion: Confusion::from_predictions(&predicted, &test_labels),
    };
    Ok((model, report))
}

pub trait Textual {
    fn text(&self) -> &str;
}

impl Textual for String {
    fn text(&self) -> &str {
        self
    }
}

impl<T: Textual + ?Sized> Textual for &T {
    fn text(&self) -> &str {
        (**self).text()
    }
}

impl Textual for str {
    fn text(&self) -> &str {
        self
    }
}

/// Messages scoring at or above the model threshold, in input order.
pub fn filter_relevant<'a, T: Textual>(
    model: &ClassifierModel,
    messages: &'a [T],
) -> Result<Vec<&'a T>, ClassifyError> {
    model.expect_task(Task::Relevance)?;
    Ok(messages.iter().filter(|m| model.predict(m.text())).collect())
}

pub fn classify_damage(
    presence: &ClassifierModel,
    info: &ClassifierModel,
    text: &str,
) -> Result<DamageLabel, ClassifyError> {
    presence.expect_task(Task::DamagePresence)?;
    info.expect_task(Task::DamageInfo)?;
    Ok(damage_label(presence, info, &featurize(text)))
}

/// The three-way label from already featurized text. Callers check the model
/// tasks once up front.
pub fn damage_label(presence: &ClassifierModel, info: &ClassifierModel, x: &FeatureVector) -> DamageLabel {
    if x.is_zero() {
        DamageLabel::NoInfo
    } else if presence.score_features(x) >= presence.threshold() {
        DamageLabel::Present
    } else if info.score_features(x) >= info.threshold() {
        DamageLabel::AbsentReported
    } else {
        DamageLabel::NoInfo
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn ex(text: &str, label: bool) -> Example {
        Example { text: text.into(), label, task: Task::Relevance }
    }

    #[test]
    fn stratified_split_arithmetic() {
        let corpus: Vec<Example> = (0..100).map(|i| ex(&format!("t{i}"), i % 2 == 0)).collect();
        let s = split_dataset(&corpus, |e| e.label, 1).unwrap();
        assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (64, 16, 20));
        let pos = |v: &[Example]| v.iter().filter(|e| e.label).count();
        assert_eq!((pos(&s.train), pos(&s.validation), pos(&s.test)), (32, 8, 10));
        assert_eq!(s, split_dataset(&corpus, |e| e.label, 1).unwrap());

        let mut all: Vec<String> =
            s.train.iter().chain(&s.validation).chain(&s.test).map(|e| e.text.clone()).collect();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), 100);
    }

    #[test]
    fn split_rejects_single_class() {
        let corpus: Vec<Example> = (0..10).map(|i| ex(&format!("t{i}"), false)).collect();
        assert!(matches!(
            split_dataset(&corpus, |e| e.label, 1),
            Err(ClassifyError::SingleClass(true))
        ));
    }

    fn separable_corpus() -> Vec<Example> {
        let pos = ["alpha", "bravo", "charlie", "delta", "echo"];
        let neg = ["kilo", "lima", "mike", "november", "oscar"];
        let mut rng = substream(3, Stream::Text);
        (0..400)
            .map(|i| {
                let vocab = if i % 2 == 0 { &pos } else { &neg };
                let words: Vec<&str> = (0..4).map(|_| vocab[rng.random_range(0..5)]).collect();
                ex(&words.join(" "), i % 2 == 0)
            })
            .collect()
    }

    #[test]
    fn separable_corpus_reaches_perfect_auc() {
        let (_, report) = train(&separable_corpus(), Task::Relevance, &Hyperparams::default()).unwrap();
        assert_eq!(report.auc, 1.0);
        assert_eq!((report.train_size, report.validation_size, report.test_size), (256, 64, 80));
    }

    #[test]
    fn shuffled_labels_give_chance_auc() {
        let mut corpus = separable_corpus();
        let mut rng = substream(11, Stream::Text);
        let mut labels: Vec<bool> = corpus.iter().map(|e| e.label).collect();
        labels.shuffle(&mut rng);
        for (e, l) in corpus.iter_mut().zip(labels) {
            e.label = l;
        }
        let (_, report) = train(&corpus, Task::Relevance, &Hyperparams::default()).unwrap();
        assert!((0.4..=0.6).contains(&report.auc), "auc {}", report.auc);
    }

    #[test]
    fn training_is_bit_reproducible() {
        let hp = Hyperparams::default();
        let (a, _) = train(&separable_corpus(), Task::Relevance, &hp).unwrap();
        let (b, _) = train(&separable_corpus(), Task::Relevance, &hp).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn divergence_names_epoch() {
        let hp = Hyperparams { learning_rate: f64::MAX, l2: 0.0, ..Hyperparams::default() };
        match fit(&separable_corpus(), Task::Relevance, &hp) {
            Err(ClassifyError::Diverged { epoch }) => assert!(epoch >= 1),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn zero_model_scores_half() {
        let m = ClassifierModel::zero(Task::Relevance);
        assert_eq!(m.score("anything at all"), 0.5);
        assert_eq!(m.score(""), 0.5);
    }

    #[test]
    fn score_monotone_in_bias() {
        let (mut m, _) = train(&separable_corpus(), Task::Relevance, &Hyperparams::default()).unwrap();
        let mut last = 0.0;
        for b in [-5.0, -1.0, 0.0, 0.3, 2.0, 9.0] {
            m.bias = b;
            let s = m.score("alpha kilo");
            assert!(s >= last);
            last = s;
        }
    }

    #[test]
    fn threshold_edges() {
        let texts: Vec<String> = vec!["a".into(), "b c".into(), "".into()];
        let m = ClassifierModel::zero(Task::Relevance).with_threshold(0.0);
        assert_eq!(filter_relevant(&m, &texts).unwrap().len(), 3);

        let mut m = ClassifierModel::zero(Task::Relevance).with_threshold(1.0 + 1e-9);
        assert_eq!(m.threshold(), 1.0);
        assert!(filter_relevant(&m, &texts).unwrap().is_empty());
        m.bias = 1e3; // sigmoid saturates to exactly 1
        assert_eq!(filter_relevant(&m, &texts).unwrap().len(), 3);

        let wrong = ClassifierModel::zero(Task::DamageInfo);
        assert!(matches!(filter_relevant(&wrong, &texts), Err(ClassifyError::WrongTask { .. })));
    }

    #[test]
    fn filter_preserves_order() {
        let (m, _) = train(&separable_corpus(), Task::Relevance, &Hyperparams::default()).unwrap();
        let texts: Vec<String> =
            ["alpha bravo", "kilo lima", "echo delta", "oscar"].iter().map(|s| s.to_string()).collect();
        let kept: Vec<&str> = filter_relevant(&m, &texts).unwrap().into_iter().map(|s| s.as_str()).collect();
        assert_eq!(kept, ["alpha bravo", "echo delta"]);
    }

    #[test]
    fn empty_text_is_no_info() {
        let p = ClassifierModel::zero(Task::DamagePresence).with_threshold(0.1);
        let i = ClassifierModel::zero(Task::DamageInfo).with_threshold(0.1);
        assert_eq!(classify_damage(&p, &i, "").unwrap(), DamageLabel::NoInfo);
        assert_eq!(classify_damage(&p, &i, "walls").unwrap(), DamageLabel::Present);
        assert!(classify_damage(&i, &p, "x").is_err());
    }

    #[test]
    fn best_threshold_picks_max_f1() {
        let scores = [0.9, 0.8, 0.7, 0.2, 0.1];
        let labels = [true, true, false, true, false];
        // t=0.8: tp2 fp0 fn1 -> 0.8 ; t=0.2: tp3 fp1 -> 0.857
        assert_eq!(best_f1_threshold(&scores, &labels), 0.2);
    }

    #[test]
    fn model_json_roundtrip() {
        let (m, _) = train(&separable_corpus(), Task::Relevance, &Hyperparams::default()).unwrap();
        let again = ClassifierModel::from_json(&m.to_json()).unwrap();
        assert_eq!(m, again);
        assert!(ClassifierModel::from_json("{}").is_err());
    }
}
