//! Grid aggregation of tagged messages for crisis mapping.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::TaggedMessage;
use crate::geoparse::PlaceTag;
use crate::types::DamageLabel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrisisCell {
    pub row: i64,
    pub col: i64,
    pub damage_count: usize,
    pub message_count: usize,
}

impl CrisisCell {
    pub fn bounds(&self, cell_deg: f64) -> (f64, f64, f64, f64) {
        let south = self.row as f64 * cell_deg;
        let west = self.col as f64 * cell_deg;
        (south, west, south + cell_deg, west + cell_deg)
    }
}

/// First tag of the finest granularity present.
pub fn finest_tag(tags: &[PlaceTag]) -> Option<&PlaceTag> {
    tags.iter().reduce(|best, t| if t.granularity < best.granularity { t } else { best })
}

pub fn cell_of(lat: f64, lon: f64, cell_deg: f64) -> (i64, i64) {
    ((lat / cell_deg).floor() as i64, (lon / cell_deg).floor() as i64)
}

/// Bins every tagged message at its finest tag. `message_count` counts all of
/// them, `damage_count` those reporting damage. Cells are in (row, col) order.
pub fn crisis_map(messages: &[&TaggedMessage], cell_deg: f64) -> Vec<CrisisCell> {
    let mut cells: BTreeMap<(i64, i64), (usize, usize)> = BTreeMap::new();
    for m in messages {
        let Some(t) = finest_tag(&m.tags) else { continue };
        let c = cells.entry(cell_of(t.lat, t.lon, cell_deg)).or_default();
        c.1 += 1;
        if m.damage == DamageLabel::Present {
            c.0 += 1;
        }
    }
    cells
        .into_iter()
        .map(|((row, col), (damage_count, message_count))| CrisisCell { row, col, damage_count, message_count })
        .collect()
}

pub fn crisis_map_geojson(cells: &[CrisisCell], cell_deg: f64) -> Value {
    let features: Vec<Value> = cells
        .iter()
        .map(|c| {
            let (s, w, n, e) = c.bounds(cell_deg);
            json!({
                "type": "Feature",
                "geometry": {
                    "type": "Polygon",
                    "coordinates": [[[w, s], [e, s], [e, n], [w, n], [w, s]]],
                },
                "properties": {
                    "row": c.row,
                    "col": c.col,
                    "damage_count": c.damage_count,
                    "message_count": c.message_count,
                },
            })
        })
        .collect();
    json!({ "type": "FeatureCollection", "features": features })
}
