//! Witness scoring and contact selection.
//!
//! Each message is reduced to eight features in five groups (linguistic,
//! lexical similarity to a witness centroid, sentiment, entity count, user
//! metadata) and scored by a linear model. The selection keeps one message per
//! user and takes the best-scored users up to a budget.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::features::{featurize, tokenize, FeatureVector};
use crate::geoparse::Geoparser;
use crate::rng::{substream, Stream};
use crate::types::{MsgId, QuestionKind, Timestamp, UserId};
use crate::world::RawMessage;

pub const FEATURE_NAMES: [&str; 8] = [
    "first_person_rate",
    "exclamation_rate",
    "token_count",
    "witness_similarity",
    "sentiment",
    "entity_count",
    "geotag",
    "account_age_bucket",
];

const FIRST_PERSON: &[&str] = &["i", "me", "my", "mine", "myself", "we", "us", "our", "ours", "im"];

const POSITIVE: &[&str] = &[
    "safe", "fine", "ok", "okay", "good", "thanks", "thank", "glad", "lucky", "calm", "relief", "well",
];

const NEGATIVE: &[&str] = &[
    "scary", "scared", "terrifying", "afraid", "panic", "bad", "damage", "damaged", "collapsed",
    "hurt", "injured", "dead", "crack", "cracked", "broken", "fear", "worst", "destroyed", "omg",
];

#[derive(Debug, Error)]
pub enum WitnessError {
    #[error("unknown feature {0:?} in scorer weights")]
    UnknownFeature(String),
    #[error("non-finite weight for {0}")]
    NonFinite(String),
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("training set must contain both classes")]
    SingleClass,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct WitnessFeatures {
    pub first_person_rate: f64,
    pub exclamation_rate: f64,
    pub token_count: f64,
    pub witness_similarity: f64,
    pub sentiment: f64,
    pub entity_count: f64,
    pub geotag: f64,
    pub account_age_bucket: f64,
}

impl WitnessFeatures {
    pub fn as_array(&self) -> [f64; 8] {
        [
            self.first_person_rate,
            self.exclamation_rate,
            self.token_count,
            self.witness_similarity,
            self.sentiment,
            self.entity_count,
            self.geotag,
            self.account_age_bucket,
        ]
    }

    pub fn from_array(a: [f64; 8]) -> Self {
        WitnessFeatures {
            first_person_rate: a[0],
            exclamation_rate: a[1],
            token_count: a[2],
            witness_similarity: a[3],
            sentiment: a[4],
            entity_count: a[5],
            geotag: a[6],
            account_age_bucket: a[7],
        }
    }
}

/// 0: under a month, 1: under a year, 2: under five years, 3: older.
pub fn account_age_bucket(days: u32) -> u8 {
    match days {
        0..30 => 0,
        30..365 => 1,
        365..1825 => 2,
        _ => 3,
    }
}

/// Unit-norm mean of the feature vectors of witness-written texts.
pub fn centroid<'a>(texts: impl IntoIterator<Item = &'a str>) -> FeatureVector {
    let mut sum: BTreeMap<u32, f64> = BTreeMap::new();
    for t in texts {
        for &(i, w) in &featurize(t).entries {
            *sum.entry(i).or_default() += w;
        }
    }
    let norm = sum.values().map(|w| w * w).sum::<f64>().sqrt();
    if norm == 0.0 {
        return FeatureVector::default();
    }
    FeatureVector { entries: sum.into_iter().map(|(i, w)| (i, w / norm)).collect() }
}

pub fn centroid_to_json(c: &FeatureVector) -> String {
    serde_json::to_string(&c.entries).expect("vector serializes")
}

pub fn centroid_from_json(text: &str) -> Result<FeatureVector, WitnessError> {
    let mut entries: Vec<(u32, f64)> = serde_json::from_str(text)?;
    entries.sort_by_key(|e| e.0);
    Ok(FeatureVector { entries })
}

pub struct FeatureExtractor<'g> {
    geoparser: &'g Geoparser<'g>,
    centroid: FeatureVector,
}

impl<'g> FeatureExtractor<'g> {
    pub fn new(geoparser: &'g Geoparser<'g>, centroid: FeatureVector) -> Self {
        FeatureExtractor { geoparser, centroid }
    }

    pub fn extract_text(&self, text: &str, geotagged: bool, account_age_days: Option<u32>) -> WitnessFeatures {
        let tokens = tokenize(text);
        let n = tokens.len();
        let mut f = WitnessFeatures {
            geotag: if geotagged { 1.0 } else { 0.0 },
            account_age_bucket: account_age_days.map_or(0.0, |d| account_age_bucket(d) as f64),
            ..Default::default()
        };
        if n == 0 {
            return f;
        }
        let count = |lex: &[&str]| tokens.iter().filter(|t| lex.contains(&t.as_str())).count();
        f.first_person_rate = count(FIRST_PERSON) as f64 / n as f64;
        f.exclamation_rate = (text.matches('!').count() as f64 / n as f64).min(1.0);
        f.token_count = n as f64;
        f.witness_similarity = featurize(text).dot(&self.centroid).clamp(-1.0, 1.0);
        let (pos, neg) = (count(POSITIVE) as f64, count(NEGATIVE) as f64);
        if pos + neg > 0.0 {
            f.sentiment = (pos - neg) / (pos + neg);
        }
        f.entity_count = self.geoparser.parse(text, None).len() as f64;
        f
    }

    pub fn extract(&self, message: &RawMessage, account_age_days: Option<u32>) -> WitnessFeatures {
        self.extract_text(&message.text, message.geo.is_some(), account_age_days)
    }
}

/// Linear witness scorer. Serialized as `{feature_name: weight, ..., "bias": b}`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WitnessScorer {
    pub weights: [f64; 8],
    pub bias: f64,
}

impl WitnessScorer {
    pub fn score(&self, f: &WitnessFeatures) -> f64 {
        self.weights.iter().zip(f.as_array()).map(|(w, x)| w * x).sum::<f64>() + self.bias
    }

    pub fn scaled(&self, c: f64) -> Self {
        WitnessScorer { weights: self.weights.map(|w| w * c), bias: self.bias * c }
    }

    pub fn to_json(&self) -> String {
        let mut map: BTreeMap<&str, f64> = FEATURE_NAMES.iter().copied().zip(self.weights).collect();
        map.insert("bias", self.bias);
        serde_json::to_string_pretty(&map).expect("map serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, WitnessError> {
        let map: BTreeMap<String, f64> = serde_json::from_str(text)?;
        let mut scorer = WitnessScorer::default();
        for (name, w) in map {
            if !w.is_finite() {
                return Err(WitnessError::NonFinite(name));
            }
            if name == "bias" {
                scorer.bias = w;
            } else {
                let i = FEATURE_NAMES
                    .iter()
                    .position(|f| *f == name)
                    .ok_or(WitnessError::UnknownFeature(name))?;
                scorer.weights[i] = w;
            }
        }
        Ok(scorer)
    }

    pub fn load(path: &Path) -> Result<Self, WitnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| WitnessError::Io { path: path.display().to_string(), source })?;
        Self::from_json(&text)
    }
}

/// Hinge-loss linear training with L2 regularization and iterate averaging.
pub fn train_scorer(
    examples: &[(WitnessFeatures, bool)],
    epochs: usize,
    lambda: f64,
    seed: u64,
) -> Result<WitnessScorer, WitnessError> {
    if !examples.iter().any(|e| e.1) || !examples.iter().any(|e| !e.1) {
        return Err(WitnessError::SingleClass);
    }
    let mut rng = substream(seed, Stream::Training);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut w = [0.0; 8];
    let mut b = 0.0;
    let mut avg = [0.0; 8];
    let mut avg_b = 0.0;
    let mut t = 0usize;
    for _ in 0..epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            t += 1;
            let eta = 0.1 / (1.0 + 0.1 * lambda * t as f64).max(1.0).sqrt();
            let (f, label) = &examples[i];
            let x = f.as_array();
            let y = if *label { 1.0 } else { -1.0 };
            let margin = y * (w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + b);
            for (wj, xj) in w.iter_mut().zip(x) {
                *wj -= eta * lambda * *wj;
                if margin < 1.0 {
                    *wj += eta * y * xj;
                }
            }
            if margin < 1.0 {
                b += eta * y;
            }
            let k = t as f64;
            for (aj, wj) in avg.iter_mut().zip(w) {
                *aj += (wj - *aj) / k;
            }
            avg_b += (b - avg_b) / k;
        }
    }
    Ok(WitnessScorer { weights: avg, bias: avg_b })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredMessage {
    pub msg_id: MsgId,
    pub user_id: UserId,
    pub ts: Timestamp,
    pub geotagged: bool,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContactTarget {
    pub user_id: UserId,
    pub source_msg_id: MsgId,
    pub witness_score: f64,
    pub question_kind: QuestionKind,
}

fn rank(a: &ScoredMessage, b: &ScoredMessage) -> std::cmp::Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.ts.cmp(&b.ts))
        .then(a.user_id.cmp(&b.user_id))
        .then(a.msg_id.cmp(&b.msg_id))
}

/// One target per user (their best message), highest scores first, skipping
/// anyone already contacted. Geotagged sources get a damage question.
pub fn select_candidates(
    scored: &[ScoredMessage],
    budget: usize,
    already_contacted: &HashSet<UserId>,
) -> Vec<ContactTarget> {
    let mut best: HashMap<&str, &ScoredMessage> = HashMap::new();
    for m in scored {
        if already_contacted.contains(&m.user_id) {
            continue;
        }
        best.entry(&m.user_id)
            .and_modify(|cur| {
                if rank(m, cur).is_lt() {
                    *cur = m;
                }
            })
            .or_insert(m);
    }
    let mut reps: Vec<&ScoredMessage> = best.into_values().collect();
    reps.sort_by(|a, b| rank(a, b));
    reps.into_iter()
        .take(budget)
        .map(|m| ContactTarget {
            user_id: m.user_id.clone(),
            source_msg_id: m.msg_id.clone(),
            witness_score: m.score,
            question_kind: if m.geotagged { QuestionKind::AskDamage } else { QuestionKind::AskGeo },
        })
        .collect()
}
