//! Earthquake notifications in the USGS GeoJSON summary layout.
//!
//! Only the fields the pipeline needs are read: `id`, `properties.mag`,
//! `properties.time`, `properties.place` and `geometry.coordinates`
//! (`[lon, lat, depth_km]`). Anything else in the document is ignored.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::LatLon;

pub const DEFAULT_MIN_MAGNITUDE: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EarthquakeEvent {
    pub event_id: String,
    pub magnitude: f64,
    pub depth_km: f64,
    pub epicenter_lat: f64,
    pub epicenter_lon: f64,
    /// Epoch milliseconds.
    pub origin_time: i64,
    pub place_name: String,
}

#[derive(Debug, Error, PartialEq)]
pub enum FeedError {
    #[error("malformed feed document: {0}")]
    Document(String),
    #[error("malformed feature at index {index}: {reason}")]
    Feature { index: usize, reason: String },
    #[error("invalid event at index {index}: {reason}")]
    Validation { index: usize, reason: String },
}

impl EarthquakeEvent {
    pub fn epicenter(&self) -> LatLon {
        LatLon::new(self.epicenter_lat, self.epicenter_lon)
    }

    /// Checks the per-event invariants. Uniqueness of ids is a feed-level check.
    pub fn validate(&self) -> Result<(), String> {
        if self.event_id.trim().is_empty() {
            return Err("event_id is empty".into());
        }
        if !(-90.0..=90.0).contains(&self.epicenter_lat) {
            return Err(format!("latitude {} out of range", self.epicenter_lat));
        }
        if !(-180.0..=180.0).contains(&self.epicenter_lon) {
            return Err(format!("longitude {} out of range", self.epicenter_lon));
        }
        if !(0.0..=10.0).contains(&self.magnitude) {
            return Err(format!("magnitude {} out of range", self.magnitude));
        }
        if !(self.depth_km >= 0.0 && self.depth_km.is_finite()) {
            return Err(format!("depth {} must be >= 0", self.depth_km));
        }
        if self.origin_time <= 0 {
            return Err(format!("origin time {} must be positive", self.origin_time));
        }
        Ok(())
    }
}

#[derive(Deserialize)]
struct RawFeed {
    features: Vec<serde_json::Value>,
}

#[derive(Deserialize)]
struct RawFeature {
    id: String,
    properties: RawProperties,
    geometry: RawGeometry,
}

#[derive(Deserialize)]
struct RawProperties {
    mag: f64,
    time: i64,
    #[serde(default)]
    place: Option<String>,
}

#[derive(Deserialize)]
struct RawGeometry {
    coordinates: Vec<f64>,
}

pub fn parse_usgs_feed(document: &str) -> Result<Vec<EarthquakeEvent>, FeedError> {
    let feed: RawFeed =
        serde_json::from_str(document).map_err(|e| FeedError::Document(e.to_string()))?;
    let mut seen = BTreeSet::new();
    let mut events = Vec::with_capacity(feed.features.len());
    for (index, value) in feed.features.into_iter().enumerate() {
        let raw: RawFeature = serde_json::from_value(value).map_err(|e| FeedError::Feature {
            index,
            reason: e.to_string(),
        })?;
        let [lon, lat, depth] = raw.geometry.coordinates[..] else {
            return Err(FeedError::Feature {
                index,
                reason: format!(
                    "geometry.coordinates must be [lon, lat, depth], got {} values",
                    raw.geometry.coordinates.len()
                ),
            });
        };
        let event = EarthquakeEvent {
            event_id: raw.id,
            magnitude: raw.properties.mag,
            depth_km: depth,
            epicenter_lat: lat,
            epicenter_lon: lon,
            origin_time: raw.properties.time,
            place_name: raw.properties.place.unwrap_or_default(),
        };
        event
            .validate()
            .map_err(|reason| FeedError::Validation { index, reason })?;
        if !seen.insert(event.event_id.clone()) {
            return Err(FeedError::Validation {
                index,
                reason: format!("duplicate event id {}", event.event_id),
            });
        }
        events.push(event);
    }
    Ok(events)
}

/// Renders events back into a minimal USGS-layout feature collection.
pub fn to_usgs_feed(events: &[EarthquakeEvent]) -> String {
    let features: Vec<serde_json::Value> = events
        .iter()
        .map(|e| {
            serde_json::json!({
                "type": "Feature",
                "id": e.event_id,
                "properties": {
                    "mag": e.magnitude,
                    "time": e.origin_time,
                    "place": e.place_name,
                    "type": "earthquake",
                },
                "geometry": {
                    "type": "Point",
                    "coordinates": [e.epicenter_lon, e.epicenter_lat, e.depth_km],
                },
            })
        })
        .collect();
    let doc = serde_json::json!({ "type": "FeatureCollection", "features": features });
    serde_json::to_string_pretty(&doc).expect("feed values are always serializable")
}

/// Inclusive magnitude threshold.
pub fn should_trigger(event: &EarthquakeEvent, min_magnitude: f64) -> bool {
    event.magnitude >= min_magnitude
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn feature(id: &str, mag: f64, lat: f64, lon: f64, depth: f64, place: &str) -> String {
        format!(
            r#"{{"type":"Feature","id":"{id}","properties":{{"mag":{mag},"time":1429942251000,"place":"{place}","tsunami":0}},"geometry":{{"type":"Point","coordinates":[{lon},{lat},{depth}]}}}}"#
        )
    }

    #[test]
    fn parses_lamjung() {
        let doc = format!(
            r#"{{"type":"FeatureCollection","metadata":{{"count":1}},"features":[{}]}}"#,
            feature("us20002926", 7.5, 28.147, 84.708, 12.0, "Lamjung, Nepal")
        );
        let events = parse_usgs_feed(&doc).unwrap();
        assert_eq!(events.len(), 1);
        assert_eq!(events[0].magnitude, 7.5);
        assert_eq!(events[0].depth_km, 12.0);
        assert_eq!(events[0].place_name, "Lamjung, Nepal");
        assert_eq!(events[0].epicenter_lon, 84.708);
    }

    #[test]
    fn empty_collection() {
        assert!(parse_usgs_feed(r#"{"features":[]}"#).unwrap().is_empty());
    }

    #[test]
    fn latitude_out_of_range() {
        let doc = format!(r#"{{"features":[{}]}}"#, feature("x", 4.0, 95.0, 0.0, 5.0, "p"));
        assert!(matches!(
            parse_usgs_feed(&doc),
            Err(FeedError::Validation { index: 0, .. })
        ));
    }

    #[test]
    fn malformed_feature_names_index() {
        let doc = format!(
            r#"{{"features":[{},{{"id":"b","properties":{{}}}}]}}"#,
            feature("a", 4.0, 10.0, 0.0, 5.0, "p")
        );
        match parse_usgs_feed(&doc) {
            Err(FeedError::Feature { index, .. }) => assert_eq!(index, 1),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse_usgs_feed("not json"), Err(FeedError::Document(_))));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let f = feature("a", 4.0, 10.0, 0.0, 5.0, "p");
        let doc = format!(r#"{{"features":[{f},{f}]}}"#);
        assert!(matches!(
            parse_usgs_feed(&doc),
            Err(FeedError::Validation { index: 1, .. })
        ));
    }

    #[test]
    fn trigger_threshold() {
        let mut e = EarthquakeEvent {
            event_id: "e".into(),
            magnitude: 3.3,
            depth_km: 6.0,
            epicenter_lat: 32.8,
            epicenter_lon: -96.9,
            origin_time: 1,
            place_name: "Irving, Texas".into(),
        };
        assert!(should_trigger(&e, 3.0));
        e.magnitude = 2.9;
        assert!(!should_trigger(&e, 3.0));
        e.magnitude = 3.0;
        assert!(should_trigger(&e, 3.0));
    }

    fn arb_event() -> impl Strategy<Value = EarthquakeEvent> {
        (
            "[a-z0-9]{1,10}",
            0.0f64..=10.0,
            0.0f64..700.0,
            -90.0f64..=90.0,
            -180.0f64..=180.0,
            1i64..4_000_000_000_000,
            "[A-Za-z ,]{0,20}",
        )
            .prop_map(|(id, m, d, lat, lon, t, p)| EarthquakeEvent {
                event_id: id,
                magnitude: m,
                depth_km: d,
                epicenter_lat: lat,
                epicenter_lon: lon,
                origin_time: t,
                place_name: p,
            })
    }

    proptest! {
        #[test]
        fn reserialize_is_fixed_point(events in proptest::collection::vec(arb_event(), 0..6)) {
            let mut uniq = events;
            uniq.sort_by(|a, b| a.event_id.cmp(&b.event_id));
            uniq.dedup_by(|a, b| a.event_id == b.event_id);
            let parsed = parse_usgs_feed(&to_usgs_feed(&uniq)).unwrap();
            prop_assert_eq!(&parsed, &uniq);
            prop_assert_eq!(parse_usgs_feed(&to_usgs_feed(&parsed)).unwrap(), parsed);
        }

        #[test]
        fn trigger_is_monotone(m1 in 0.0f64..10.0, m2 in 0.0f64..10.0, thr in 0.0f64..10.0) {
            let mk = |m| EarthquakeEvent {
                event_id: "e".into(), magnitude: m, depth_km: 1.0,
                epicenter_lat: 0.0, epicenter_lon: 0.0, origin_time: 1, place_name: String::new(),
            };
            let (lo, hi) = if m1 <= m2 { (m1, m2) } else { (m2, m1) };
            prop_assert!(!should_trigger(&mk(lo), thr) || should_trigger(&mk(hi), thr));
        }
    }
}
