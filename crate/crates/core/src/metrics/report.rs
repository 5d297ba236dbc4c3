//! The per-event report: event summary counts and ratios, per-set place
//! statistics and significance tests.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::stats::{welch_t_test, SignificanceResult};
use super::{
    collaborative_rate, coverage_gain, crisis_map, damage_info_ratio, damage_ratio, distinct_places,
    granularity_distribution, mean_reply_latency, message_gain, place_density, place_variety,
    CollaborativeMode, EventLog, MetricError, TaggedMessage, VarietyMode,
};
use crate::dispatch::SendStatus;
use crate::types::{DamageLabel, Granularity, QuestionKind};

/// A metric value, or the reason it could not be computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Metric<T> {
    Value { value: T },
    Undefined { undefined: String },
}

impl<T> Metric<T> {
    pub fn value(&self) -> Option<&T> {
        match self {
            Metric::Value { value } => Some(value),
            Metric::Undefined { .. } => None,
        }
    }

    pub fn is_defined(&self) -> bool {
        matches!(self, Metric::Value { .. })
    }

    pub fn map<U>(&self, f: impl FnOnce(&T) -> U) -> Metric<U> {
        match self {
            Metric::Value { value } => Metric::Value { value: f(value) },
            Metric::Undefined { undefined } => Metric::Undefined { undefined: undefined.clone() },
        }
    }
}

impl<T, E: std::fmt::Display> From<Result<T, E>> for Metric<T> {
    fn from(r: Result<T, E>) -> Self {
        match r {
            Ok(value) => Metric::Value { value },
            Err(e) => Metric::Undefined { undefined: e.to_string() },
        }
    }
}

/// Whole percent, rounded half to even.
pub fn format_percent(ratio: f64) -> String {
    format!("{}%", (ratio * 100.0).round_ties_even() as i64)
}

pub fn format_signed_percent(ratio: f64) -> String {
    let p = (ratio * 100.0).round_ties_even() as i64;
    if p >= 0 {
        format!("+{p}%")
    } else {
        format!("{p}%")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Counts {
    pub collected: usize,
    pub relevant: usize,
    pub replies: usize,
    pub reply2damage: usize,
    pub reply2geo: usize,
    pub questions_sent: usize,
    pub contacts_suppressed: usize,
    pub contacts_expired: usize,
    pub crawl_dropped: usize,
    pub duplicates: usize,
    pub late_replies: usize,
    pub orphan_replies: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub event_id: String,
    pub place_name: String,
    pub magnitude: f64,
    pub depth_km: f64,
    pub date: String,
    pub counts: Counts,
    pub message_gain: Metric<f64>,
    pub message_gain_display: Metric<String>,
    pub collaborative_rate: Metric<f64>,
    pub collaborative_display: Metric<String>,
    pub collaborative_mode: CollaborativeMode,
    pub mean_reply_latency_min: Metric<f64>,
    pub damage_ratio: BTreeMap<String, Metric<f64>>,
    pub damage_info_ratio: BTreeMap<String, Metric<f64>>,
    pub place_density: BTreeMap<String, Metric<f64>>,
    pub place_variety: BTreeMap<String, Metric<f64>>,
    pub variety_mode: VarietyMode,
    pub coverage_gain: Metric<f64>,
    pub granularity_distribution: BTreeMap<String, Metric<BTreeMap<Granularity, f64>>>,
    pub significance: BTreeMap<String, Metric<SignificanceResult>>,
    pub crisis_cells: usize,
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub const CSV_HEADER: [&'static str; 11] = [
        "event_id",
        "place",
        "magnitude",
        "depth_km",
        "date",
        "collected",
        "relevant",
        "replies",
        "collaborative",
        "gain",
        "latency_min",
    ];

    pub fn csv_row(&self) -> Vec<String> {
        let undefined = || "undefined".to_string();
        vec![
            self.event_id.clone(),
            self.place_name.clone(),
            format!("{:.1}", self.magnitude),
            format!("{:.0}", self.depth_km),
            self.date.clone(),
            self.counts.collected.to_string(),
            self.counts.relevant.to_string(),
            self.counts.replies.to_string(),
            self.collaborative_display.value().cloned().unwrap_or_else(undefined),
            self.message_gain_display.value().cloned().unwrap_or_else(undefined),
            self.mean_reply_latency_min.value().map_or_else(undefined, |v| format!("{v:.0}")),
        ]
    }
}

/// One-row-per-event summary CSV for a set of reports.
pub fn summary_csv(reports: &[MetricsReport]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(MetricsReport::CSV_HEADER).expect("in-memory write");
    for r in reports {
        w.write_record(r.csv_row()).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is UTF-8")
}

fn format_date(epoch_ms: i64) -> String {
    chrono::DateTime::from_timestamp_millis(epoch_ms)
        .map(|d| d.format("%d/%m/%Y").to_string())
        .unwrap_or_default()
}

fn per_message(set: &[&TaggedMessage], f: impl Fn(&TaggedMessage) -> f64) -> Vec<f64> {
    set.iter().map(|m| f(m)).collect()
}

fn t_test(a: Vec<f64>, b: Vec<f64>) -> Metric<SignificanceResult> {
    welch_t_test(&a, &b).into()
}

pub fn build_report(log: &EventLog) -> MetricsReport {
    let relevant = log.relevant();
    let replies = log.all_replies();
    let r2d = log.replies_of(QuestionKind::AskDamage);
    let r2g = log.replies_of(QuestionKind::AskGeo);
    let sets: [(&str, &[&TaggedMessage]); 3] =
        [("relevant", &relevant), ("reply2damage", &r2d), ("reply2geo", &r2g)];

    let status_count = |s: SendStatus| log.dispatch.iter().filter(|r| r.status == s).count();
    let counts = Counts {
        collected: log.collected.len(),
        relevant: relevant.len(),
        replies: replies.len(),
        reply2damage: r2d.len(),
        reply2geo: r2g.len(),
        questions_sent: status_count(SendStatus::Sent),
        contacts_suppressed: status_count(SendStatus::DuplicateContactSuppressed),
        contacts_expired: status_count(SendStatus::Expired),
        crawl_dropped: log.counters.crawl_dropped,
        duplicates: log.counters.duplicates,
        late_replies: log.counters.late_replies,
        orphan_replies: log.counters.orphan_replies,
    };

    let gain: Metric<f64> = message_gain(replies.len(), relevant.len()).into();
    let collab: Metric<f64> = collaborative_rate(&replies).into();
    let per_set = |f: &dyn Fn(&[&TaggedMessage]) -> Result<f64, MetricError>| -> BTreeMap<String, Metric<f64>> {
        sets.iter().map(|(name, set)| (name.to_string(), f(set).into())).collect()
    };

    let mut significance = BTreeMap::new();
    let count = |m: &TaggedMessage| m.tags.len() as f64;
    significance.insert(
        "place_density:reply2geo_vs_relevant".to_string(),
        t_test(per_message(&r2g, count), per_message(&relevant, count)),
    );
    let distinct = |m: &TaggedMessage| distinct_places(m) as f64;
    significance.insert(
        "place_variety:reply2geo_vs_relevant".to_string(),
        t_test(per_message(&r2g, distinct), per_message(&relevant, distinct)),
    );
    let damage = |m: &TaggedMessage| f64::from(u8::from(m.damage == DamageLabel::Present));
    significance.insert(
        "damage_ratio:reply2damage_vs_relevant".to_string(),
        t_test(per_message(&r2d, damage), per_message(&relevant, damage)),
    );
    for g in Granularity::ALL {
        let at_level = |m: &TaggedMessage| m.tags.iter().filter(|t| t.granularity == g).count() as f64;
        significance.insert(
            format!("granularity_{g}:reply2geo_vs_relevant"),
            t_test(per_message(&r2g, at_level), per_message(&relevant, at_level)),
        );
    }

    let mut mapped: Vec<&TaggedMessage> = relevant.clone();
    mapped.extend(&replies);

    MetricsReport {
        event_id: log.event.event_id.clone(),
        place_name: log.event.place_name.clone(),
        magnitude: log.event.magnitude,
        depth_km: log.event.depth_km,
        date: format_date(log.event.origin_time),
        counts,
        message_gain_display: gain.map(|g| format_signed_percent(*g)),
        message_gain: gain,
        collaborative_display: collab.map(|c| format_percent(*c)),
        collaborative_rate: collab,
        collaborative_mode: log.collaborative_mode,
        mean_reply_latency_min: mean_reply_latency(&replies).into(),
        damage_ratio: per_set(&damage_ratio),
        damage_info_ratio: per_set(&damage_info_ratio),
        place_density: per_set(&place_density),
        place_variety: per_set(&|s| place_variety(s, log.variety_mode)),
        variety_mode: log.variety_mode,
        coverage_gain: coverage_gain(&r2g, &relevant).into(),
        granularity_distribution: sets
            .iter()
            .map(|(name, set)| (name.to_string(), granularity_distribution(set).into()))
            .collect(),
        significance,
        crisis_cells: crisis_map(&mapped, log.grid_cell_deg).len(),
    }
}
