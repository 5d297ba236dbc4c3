//! Measures computed over one event's log, plus significance tests and the
//! crisis map.
//!
//! Message sets are passed as slices of [`TaggedMessage`] references so the same
//! functions serve collected, relevant and reply sets.

pub mod crisis_map;
pub mod report;
pub mod stats;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use crisis_map::{crisis_map, crisis_map_geojson, CrisisCell};
pub use report::{build_report, format_percent, format_signed_percent, summary_csv, Metric, MetricsReport};
pub use stats::{welch_t_test, SignificanceResult};

use crate::dispatch::DispatchRecord;
use crate::event_feed::EarthquakeEvent;
use crate::geo::LatLon;
use crate::geoparse::PlaceTag;
use crate::types::{DamageLabel, Granularity, MsgId, PlaceId, QuestionKind, Timestamp, UserId};

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("undefined: {0}")]
    Undefined(&'static str),
}

use MetricError::Undefined;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplyInfo {
    pub question_id: String,
    pub kind: QuestionKind,
    pub delta_t_min: f64,
    pub collaborative: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaggedMessage {
    pub msg_id: MsgId,
    pub author_id: UserId,
    pub ts: Timestamp,
    pub text: String,
    pub geo: Option<LatLon>,
    pub tags: Vec<PlaceTag>,
    pub damage: DamageLabel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relevant: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reply: Option<ReplyInfo>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarietyMode {
    #[default]
    PerMessage,
    EventLevel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CollaborativeMode {
    #[default]
    GroundTruth,
    Classifier,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LogCounters {
    pub crawl_dropped: usize,
    pub duplicates: usize,
    pub late_replies: usize,
    pub orphan_replies: usize,
}

/// Everything one pipeline run observed about one event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventLog {
    pub event: EarthquakeEvent,
    /// Collected messages; `relevant` holds the classifier verdict.
    pub collected: Vec<TaggedMessage>,
    pub replies: Vec<TaggedMessage>,
    pub dispatch: Vec<DispatchRecord>,
    pub counters: LogCounters,
    pub collaborative_mode: CollaborativeMode,
    pub variety_mode: VarietyMode,
    pub grid_cell_deg: f64,
}

impl EventLog {
    pub fn empty(event: EarthquakeEvent) -> Self {
        EventLog {
            event,
            collected: Vec::new(),
            replies: Vec::new(),
            dispatch: Vec::new(),
            counters: LogCounters::default(),
            collaborative_mode: CollaborativeMode::default(),
            variety_mode: VarietyMode::default(),
            grid_cell_deg: 0.1,
        }
    }

    pub fn relevant(&self) -> Vec<&TaggedMessage> {
        self.collected.iter().filter(|m| m.relevant == Some(true)).collect()
    }

    pub fn replies_of(&self, kind: QuestionKind) -> Vec<&TaggedMessage> {
        self.replies
            .iter()
            .filter(|m| m.reply.as_ref().is_some_and(|r| r.kind == kind))
            .collect()
    }

    pub fn all_replies(&self) -> Vec<&TaggedMessage> {
        self.replies.iter().collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("log serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn load(path: &Path) -> Result<Self, Box<dyn std::error::Error + Send + Sync>> {
        Ok(Self::from_json(&std::fs::read_to_string(path)?)?)
    }
}

/// `replies / relevant`.
pub fn message_gain(replies: usize, relevant: usize) -> Result<f64, MetricError> {
    if relevant == 0 {
        return Err(Undefined("no relevant messages"));
    }
    Ok(replies as f64 / relevant as f64)
}

pub fn collaborative_rate(replies: &[&TaggedMessage]) -> Result<f64, MetricError> {
    if replies.is_empty() {
        return Err(Undefined("no replies"));
    }
    let n = replies.iter().filter(|m| m.reply.as_ref().is_some_and(|r| r.collaborative)).count();
    Ok(n as f64 / replies.len() as f64)
}

pub fn mean_reply_latency(replies: &[&TaggedMessage]) -> Result<f64, MetricError> {
    let dts: Vec<f64> = replies.iter().filter_map(|m| m.reply.as_ref().map(|r| r.delta_t_min)).collect();
    if dts.is_empty() {
        return Err(Undefined("no replies"));
    }
    Ok(dts.iter().sum::<f64>() / dts.len() as f64)
}

fn fraction(set: &[&TaggedMessage], pred: impl Fn(&TaggedMessage) -> bool) -> Result<f64, MetricError> {
    if set.is_empty() {
        return Err(Undefined("empty message set"));
    }
    Ok(set.iter().filter(|m| pred(m)).count() as f64 / set.len() as f64)
}

pub fn damage_ratio(set: &[&TaggedMessage]) -> Result<f64, MetricError> {
    fraction(set, |m| m.damage == DamageLabel::Present)
}

pub fn damage_info_ratio(set: &[&TaggedMessage]) -> Result<f64, MetricError> {
    fraction(set, |m| m.damage.carries_info())
}

pub fn place_density(set: &[&TaggedMessage]) -> Result<f64, MetricError> {
    if set.is_empty() {
        return Err(Undefined("empty message set"));
    }
    Ok(set.iter().map(|m| m.tags.len()).sum::<usize>() as f64 / set.len() as f64)
}

pub fn distinct_places(m: &TaggedMessage) -> usize {
    m.tags.iter().map(|t| t.place_id.as_str()).collect::<BTreeSet<_>>().len()
}

pub fn place_variety(set: &[&TaggedMessage], mode: VarietyMode) -> Result<f64, MetricError> {
    if set.is_empty() {
        return Err(Undefined("empty message set"));
    }
    let n = set.len() as f64;
    Ok(match mode {
        VarietyMode::PerMessage => set.iter().map(|m| distinct_places(m)).sum::<usize>() as f64 / n,
        VarietyMode::EventLevel => places(set).len() as f64 / n,
    })
}

pub fn places<'a>(set: &[&'a TaggedMessage]) -> BTreeSet<&'a PlaceId> {
    set.iter().flat_map(|m| m.tags.iter().map(|t| &t.place_id)).collect()
}

/// New places named in geo replies, relative to the places already known from
/// relevant messages.
pub fn coverage_gain(reply2geo: &[&TaggedMessage], relevant: &[&TaggedMessage]) -> Result<f64, MetricError> {
    let known = places(relevant);
    if known.is_empty() {
        return Err(Undefined("relevant messages mention no places"));
    }
    let new = places(reply2geo).into_iter().filter(|p| !known.contains(p)).count();
    Ok(new as f64 / known.len() as f64)
}

pub fn granularity_counts(set: &[&TaggedMessage]) -> BTreeMap<Granularity, usize> {
    let mut counts: BTreeMap<Granularity, usize> = Granularity::ALL.iter().map(|&g| (g, 0)).collect();
    for t in set.iter().flat_map(|m| &m.tags) {
        *counts.entry(t.granularity).or_default() += 1;
    }
    counts
}

pub fn granularity_distribution(set: &[&TaggedMessage]) -> Result<BTreeMap<Granularity, f64>, MetricError> {
    let counts = granularity_counts(set);
    let total: usize = counts.values().sum();
    if total == 0 {
        return Err(Undefined("no place tags"));
    }
    Ok(counts.into_iter().map(|(g, c)| (g, c as f64 / total as f64)).collect())
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn tag(place: &str, g: Granularity, lat: f64, lon: f64) -> PlaceTag {
        PlaceTag { surface: place.into(), span: (0, 1), place_id: place.into(), lat, lon, granularity: g }
    }

    pub(crate) fn m(id: &str, tags: Vec<PlaceTag>, damage: DamageLabel) -> TaggedMessage {
        TaggedMessage {
            msg_id: id.into(),
            author_id: "u".into(),
            ts: 0,
            text: String::new(),
            geo: None,
            tags,
            damage,
            relevant: Some(true),
            reply: None,
        }
    }

    fn reply(id: &str, dt: f64, collaborative: bool) -> TaggedMessage {
        let mut r = m(id, vec![], DamageLabel::NoInfo);
        r.relevant = None;
        r.reply = Some(ReplyInfo {
            question_id: format!("q{id}"),
            kind: QuestionKind::AskGeo,
            delta_t_min: dt,
            collaborative,
        });
        r
    }

    fn city(p: &str) -> PlaceTag {
        tag(p, Granularity::City, 0.0, 0.0)
    }

    #[test]
    fn gain() {
        assert!((message_gain(164, 836).unwrap() - 0.196).abs() < 5e-4);
        assert!((message_gain(160, 8545).unwrap() - 0.0187).abs() < 5e-5);
        assert_eq!(message_gain(0, 5).unwrap(), 0.0);
        assert!(message_gain(3, 0).is_err());
    }

    #[test]
    fn reply_rates() {
        let rs: Vec<TaggedMessage> = (0..164).map(|i| reply(&i.to_string(), 5.0, i < 128)).collect();
        let refs: Vec<&TaggedMessage> = rs.iter().collect();
        assert_eq!(format_percent(collaborative_rate(&refs).unwrap()), "78%");
        assert_eq!(mean_reply_latency(&refs).unwrap(), 5.0);
        let two = [reply("a", 10.0, true), reply("b", 20.0, true)];
        let refs: Vec<&TaggedMessage> = two.iter().collect();
        assert_eq!(mean_reply_latency(&refs).unwrap(), 15.0);
        assert_eq!(collaborative_rate(&refs).unwrap(), 1.0);
        assert!(collaborative_rate(&[]).is_err());
        assert!(mean_reply_latency(&[]).is_err());
    }

    #[test]
    fn damage_ratios() {
        let labels = [DamageLabel::Present; 3].into_iter().chain([DamageLabel::NoInfo; 9]);
        let set: Vec<TaggedMessage> = labels.enumerate().map(|(i, d)| m(&i.to_string(), vec![], d)).collect();
        let refs: Vec<&TaggedMessage> = set.iter().collect();
        assert_eq!(damage_ratio(&refs).unwrap(), 0.25);
        let labels = [DamageLabel::Present; 4]
            .into_iter()
            .chain([DamageLabel::AbsentReported; 4])
            .chain([DamageLabel::NoInfo; 2]);
        let set: Vec<TaggedMessage> = labels.enumerate().map(|(i, d)| m(&i.to_string(), vec![], d)).collect();
        let refs: Vec<&TaggedMessage> = set.iter().collect();
        assert_eq!(damage_info_ratio(&refs).unwrap(), 0.8);
        assert!(damage_ratio(&[]).is_err());
    }

    #[test]
    fn density_and_variety() {
        let a = m("a", vec![city("A"), city("B"), city("C")], DamageLabel::NoInfo);
        let b = m("b", vec![city("A")], DamageLabel::NoInfo);
        assert_eq!(place_density(&[&a, &b]).unwrap(), 2.0);
        let paris = m("p", vec![city("Paris"), city("Paris")], DamageLabel::NoInfo);
        assert_eq!(place_variety(&[&paris], VarietyMode::PerMessage).unwrap(), 1.0);
        let x = m("x", vec![city("S")], DamageLabel::NoInfo);
        let y = m("y", vec![city("S")], DamageLabel::NoInfo);
        assert_eq!(place_variety(&[&x, &y], VarietyMode::PerMessage).unwrap(), 1.0);
        assert_eq!(place_variety(&[&x, &y], VarietyMode::EventLevel).unwrap(), 0.5);
        let none = m("n", vec![], DamageLabel::NoInfo);
        assert_eq!(place_density(&[&none]).unwrap(), 0.0);
    }

    #[test]
    fn coverage() {
        let rel = m("r", vec![city("A"), city("B")], DamageLabel::NoInfo);
        let rep = m("g", vec![city("B"), city("C")], DamageLabel::NoInfo);
        assert_eq!(coverage_gain(&[&rep], &[&rel]).unwrap(), 0.5);
        let sub = m("s", vec![city("A")], DamageLabel::NoInfo);
        assert_eq!(coverage_gain(&[&sub], &[&rel]).unwrap(), 0.0);
        let empty = m("e", vec![], DamageLabel::NoInfo);
        assert!(coverage_gain(&[&rep], &[&empty]).is_err());
    }

    #[test]
    fn granularity() {
        let t = |g| tag("p", g, 0.0, 0.0);
        let set = m(
            "a",
            vec![t(Granularity::City), t(Granularity::City), t(Granularity::Country), t(Granularity::Other)],
            DamageLabel::NoInfo,
        );
        let d = granularity_distribution(&[&set]).unwrap();
        assert_eq!(d[&Granularity::City], 0.5);
        assert_eq!(d[&Granularity::Country], 0.25);
        assert_eq!(d[&Granularity::Other], 0.25);
        assert_eq!(d[&Granularity::Region], 0.0);
        assert_eq!(d[&Granularity::Building], 0.0);
        assert!(granularity_distribution(&[&m("e", vec![], DamageLabel::NoInfo)]).is_err());
    }
}
