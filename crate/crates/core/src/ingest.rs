//! Keyword and geotag collection of the simulated stream under a crawl limit.

use std::collections::{HashSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event_feed::EarthquakeEvent;
use crate::geo::haversine_km;
use crate::types::Timestamp;
use crate::world::RawMessage;

pub const DEFAULT_KEYWORDS: [&str; 4] = ["earthquake", "quake", "tremor", "seism"];

#[derive(Debug, Error, PartialEq)]
pub enum FilterError {
    #[error("collection filter has no keywords and geotag matching is off")]
    NoCriterion,
    #[error("empty keyword at position {0}")]
    EmptyKeyword(usize),
    #[error("radius_km must be positive, got {0}")]
    BadRadius(f64),
    #[error("crawl limit needs a positive window")]
    BadWindow,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollectionFilter {
    keywords: Vec<Vec<char>>,
    pub match_geotagged_in_radius: bool,
    pub radius_km: f64,
}

impl CollectionFilter {
    pub fn new<S: AsRef<str>>(
        keywords: &[S],
        match_geotagged_in_radius: bool,
        radius_km: f64,
    ) -> Result<Self, FilterError> {
        let mut kw = Vec::with_capacity(keywords.len());
        for (i, k) in keywords.iter().enumerate() {
            let k = k.as_ref().trim();
            if k.is_empty() {
                return Err(FilterError::EmptyKeyword(i));
            }
            kw.push(k.chars().flat_map(char::to_lowercase).collect());
        }
        if kw.is_empty() && !match_geotagged_in_radius {
            return Err(FilterError::NoCriterion);
        }
        if match_geotagged_in_radius && !(radius_km > 0.0 && radius_km.is_finite()) {
            return Err(FilterError::BadRadius(radius_km));
        }
        Ok(CollectionFilter { keywords: kw, match_geotagged_in_radius, radius_km })
    }

    pub fn keywords(&self) -> Vec<String> {
        self.keywords.iter().map(|k| k.iter().collect()).collect()
    }

    fn keyword_hit(&self, text: &str) -> bool {
        let chars: Vec<char> = text.chars().flat_map(char::to_lowercase).collect();
        self.keywords.iter().any(|k| contains_word(&chars, k))
    }

    pub fn matches(&self, message: &RawMessage, event: &EarthquakeEvent) -> bool {
        self.keyword_hit(&message.text)
            || (self.match_geotagged_in_radius
                && message
                    .geo
                    .is_some_and(|g| haversine_km(g, event.epicenter()) <= self.radius_km))
    }
}

fn contains_word(text: &[char], word: &[char]) -> bool {
    if word.len() > text.len() {
        return false;
    }
    (0..=text.len() - word.len()).any(|i| {
        text[i..i + word.len()] == *word
            && (i == 0 || !text[i - 1].is_alphanumeric())
            && text.get(i + word.len()).is_none_or(|c| !c.is_alphanumeric())
    })
}

/// At most `limit` collected messages in any window `(t - window_ms, t]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrawlLimit {
    pub limit: usize,
    pub window_ms: i64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Collection {
    pub messages: Vec<RawMessage>,
    /// Matching messages shed by the crawl limit.
    pub dropped: usize,
    pub duplicates: usize,
}

/// Keeps matching messages in stream order, dropping repeated ids and any
/// message that would push the crawl window over its quota.
pub fn collect(
    stream: &[RawMessage],
    filter: &CollectionFilter,
    event: &EarthquakeEvent,
    crawl: Option<CrawlLimit>,
) -> Result<Collection, FilterError> {
    if crawl.is_some_and(|c| c.window_ms <= 0) {
        return Err(FilterError::BadWindow);
    }
    let mut out = Collection::default();
    let mut seen = HashSet::new();
    let mut recent: VecDeque<Timestamp> = VecDeque::new();
    for m in stream {
        if !filter.matches(m, event) {
            continue;
        }
        if seen.contains(m.msg_id.as_str()) {
            out.duplicates += 1;
            continue;
        }
        if let Some(c) = crawl {
            while recent.front().is_some_and(|&t| t <= m.ts - c.window_ms) {
                recent.pop_front();
            }
            if recent.len() >= c.limit {
                out.dropped += 1;
                continue;
            }
            recent.push_back(m.ts);
        }
        seen.insert(m.msg_id.as_str());
        out.messages.push(m.clone());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::{destination, LatLon};
    use proptest::prelude::*;

    fn event() -> EarthquakeEvent {
        EarthquakeEvent {
            event_id: "e".into(),
            magnitude: 4.0,
            depth_km: 10.0,
            epicenter_lat: 10.0,
            epicenter_lon: 124.0,
            origin_time: 0,
            place_name: "x".into(),
        }
    }

    fn msg(id: &str, ts: i64, text: &str, geo: Option<LatLon>) -> RawMessage {
        RawMessage {
            msg_id: id.into(),
            author_id: "u".into(),
            ts,
            text: text.into(),
            geo,
            in_reply_to: None,
            truth: Default::default(),
        }
    }

    fn kw(words: &[&str]) -> CollectionFilter {
        CollectionFilter::new(words, false, 0.0).unwrap()
    }

    #[test]
    fn keyword_matching() {
        let ev = event();
        assert!(kw(&["earthquake"]).matches(&msg("1", 0, "Felt an EARTHQUAKE just now", None), &ev));
        assert!(!kw(&["quake"]).matches(&msg("1", 0, "quakes", None), &ev));
        assert!(kw(&["quake"]).matches(&msg("1", 0, "#quake!", None), &ev));
        assert!(!kw(&["quake"]).matches(&msg("1", 0, "earthquake", None), &ev));
    }

    #[test]
    fn geotag_radius() {
        let ev = event();
        let near = destination(ev.epicenter(), 45.0, 5.0);
        let far = destination(ev.epicenter(), 45.0, 80.0);
        let f = CollectionFilter::new(&["quake"], true, 50.0).unwrap();
        assert!(f.matches(&msg("1", 0, "lunch", Some(near)), &ev));
        assert!(!f.matches(&msg("1", 0, "lunch", Some(far)), &ev));
        assert!(!kw(&["quake"]).matches(&msg("1", 0, "lunch", Some(near)), &ev));
    }

    #[test]
    fn filter_validation() {
        let none: [&str; 0] = [];
        assert_eq!(CollectionFilter::new(&none, false, 1.0), Err(FilterError::NoCriterion));
        assert_eq!(CollectionFilter::new(&["a", " "], false, 1.0), Err(FilterError::EmptyKeyword(1)));
        assert!(CollectionFilter::new(&none, true, 10.0).is_ok());
        assert_eq!(CollectionFilter::new(&none, true, 0.0), Err(FilterError::BadRadius(0.0)));
    }

    #[test]
    fn unlimited_keeps_all_matches() {
        let stream: Vec<RawMessage> = (0..2266).map(|i| msg(&format!("m{i}"), i, "quake", None)).collect();
        let c = collect(&stream, &kw(&["quake"]), &event(), None).unwrap();
        assert_eq!((c.messages.len(), c.dropped), (2266, 0));
        assert!(collect(&[], &kw(&["quake"]), &event(), None).unwrap().messages.is_empty());
    }

    #[test]
    fn window_quota() {
        let stream: Vec<RawMessage> = (0..100).map(|i| msg(&format!("m{i}"), i * 10, "quake", None)).collect();
        let c = collect(&stream, &kw(&["quake"]), &event(), Some(CrawlLimit { limit: 60, window_ms: 60_000 })).unwrap();
        assert_eq!((c.messages.len(), c.dropped), (60, 40));
        assert_eq!(c.messages.last().unwrap().msg_id, "m59");
    }

    #[test]
    fn duplicates_removed() {
        let stream = vec![msg("a", 0, "quake", None), msg("a", 1, "quake", None), msg("b", 2, "quake", None)];
        let c = collect(&stream, &kw(&["quake"]), &event(), None).unwrap();
        assert_eq!(c.messages.len(), 2);
        assert_eq!(c.duplicates, 1);
    }

    /// Distinct messages, some delivered twice in a row (same id, same content).
    fn arb_stream() -> impl Strategy<Value = Vec<RawMessage>> {
        prop::collection::vec((0i64..40, any::<bool>(), prop::bool::weighted(0.2)), 0..80).prop_map(|mut v| {
            v.sort_by_key(|x| x.0);
            let mut out = Vec::new();
            for (i, (ts, hit, redeliver)) in v.into_iter().enumerate() {
                let m = msg(&format!("m{i}"), ts, if hit { "quake" } else { "other" }, None);
                if redeliver {
                    out.push(m.clone());
                }
                out.push(m);
            }
            out
        })
    }

    fn ids(c: &Collection) -> Vec<String> {
        c.messages.iter().map(|m| m.msg_id.clone()).collect()
    }

    proptest! {
        #[test]
        fn idempotent(stream in arb_stream(), limit in 1usize..6, window in 1i64..15) {
            let crawl = Some(CrawlLimit { limit, window_ms: window });
            let f = kw(&["quake"]);
            let once = collect(&stream, &f, &event(), crawl).unwrap();
            let twice = collect(&once.messages, &f, &event(), crawl).unwrap();
            prop_assert_eq!(ids(&once), ids(&twice));
        }

        #[test]
        fn relaxing_limit_never_shrinks(stream in arb_stream(), limit in 1usize..6, window in 1i64..15) {
            let f = kw(&["quake"]);
            let tight = collect(&stream, &f, &event(), Some(CrawlLimit { limit, window_ms: window })).unwrap();
            let loose = collect(&stream, &f, &event(), Some(CrawlLimit { limit: limit + 1, window_ms: window })).unwrap();
            let unlimited = collect(&stream, &f, &event(), None).unwrap();
            let l: HashSet<String> = ids(&loose).into_iter().collect();
            let u: HashSet<String> = ids(&unlimited).into_iter().collect();
            prop_assert!(ids(&tight).iter().all(|id| l.contains(id)));
            prop_assert!(l.iter().all(|id| u.contains(id)));
        }

        #[test]
        fn sliding_window_respected(stream in arb_stream(), limit in 1usize..6, window in 1i64..15) {
            let c = collect(&stream, &kw(&["quake"]), &event(), Some(CrawlLimit { limit, window_ms: window })).unwrap();
            for m in &c.messages {
                let n = c.messages.iter().filter(|o| o.ts > m.ts - window && o.ts <= m.ts).count();
                prop_assert!(n <= limit);
            }
        }
    }
}
