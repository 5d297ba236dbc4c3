//! Gazetteer loading and validation.
//!
//! File layout is UTF-8 TSV with the columns
//! `place_id, name, aliases, lat, lon, granularity, population, admin_parent`.
//! Aliases are `|`-separated; `admin_parent` may be empty. A first line starting
//! with `place_id` is treated as a header. Blank lines and lines starting with `#`
//! are skipped.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use thiserror::Error;

use crate::geo::{haversine_km, LatLon};
use crate::types::{Granularity, PlaceId};

#[derive(Debug, Clone, PartialEq)]
pub struct GazetteerEntry {
    pub place_id: PlaceId,
    pub name: String,
    pub aliases: Vec<String>,
    pub lat: f64,
    pub lon: f64,
    pub granularity: Granularity,
    pub population: u64,
    pub admin_parent: Option<PlaceId>,
}

impl GazetteerEntry {
    pub fn location(&self) -> LatLon {
        LatLon::new(self.lat, self.lon)
    }

    /// Canonical name followed by aliases.
    pub fn surface_forms(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.name.as_str()).chain(self.aliases.iter().map(String::as_str))
    }

    pub fn to_tsv_row(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            self.place_id,
            self.name,
            self.aliases.join("|"),
            self.lat,
            self.lon,
            self.granularity,
            self.population,
            self.admin_parent.as_deref().unwrap_or("")
        )
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum GazetteerError {
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("line {line}: {reason}")]
    Validation { line: usize, reason: String },
    #[error("admin_parent chain through {place_id} is cyclic")]
    Cycle { place_id: PlaceId },
    #[error("unknown place id {0}")]
    UnknownPlace(PlaceId),
    #[error("reading gazetteer: {0}")]
    Io(String),
}

pub const TSV_HEADER: &str =
    "place_id\tname\taliases\tlat\tlon\tgranularity\tpopulation\tadmin_parent";

/// A validated gazetteer. Entries are kept sorted by `place_id`, so lookups and
/// iteration do not depend on the row order of the source file.
#[derive(Debug, Clone, Default)]
pub struct Gazetteer {
    entries: Vec<GazetteerEntry>,
    by_id: BTreeMap<PlaceId, usize>,
}

impl Gazetteer {
    pub fn from_entries(mut entries: Vec<GazetteerEntry>) -> Result<Self, GazetteerError> {
        // Line numbers for validation errors refer to the input order.
        let mut lines: BTreeMap<PlaceId, usize> = BTreeMap::new();
        for (i, e) in entries.iter().enumerate() {
            validate_entry(e).map_err(|reason| GazetteerError::Validation { line: i + 1, reason })?;
            if lines.insert(e.place_id.clone(), i + 1).is_some() {
                return Err(GazetteerError::Validation {
                    line: i + 1,
                    reason: format!("duplicate place_id {}", e.place_id),
                });
            }
        }
        entries.sort_by(|a, b| a.place_id.cmp(&b.place_id));
        let by_id = entries
            .iter()
            .enumerate()
            .map(|(i, e)| (e.place_id.clone(), i))
            .collect();
        let gaz = Gazetteer { entries, by_id };
        gaz.check_hierarchy(&lines)?;
        Ok(gaz)
    }

    fn check_hierarchy(&self, lines: &BTreeMap<PlaceId, usize>) -> Result<(), GazetteerError> {
        for e in &self.entries {
            let Some(parent_id) = &e.admin_parent else { continue };
            let line = lines[&e.place_id];
            let Some(parent) = self.get(parent_id) else {
                return Err(GazetteerError::Validation {
                    line,
                    reason: format!("admin_parent {parent_id} does not exist"),
                });
            };
            let coarsens = e.granularity == Granularity::Other
                || parent.granularity == Granularity::Other
                || parent.granularity > e.granularity;
            if !coarsens {
                return Err(GazetteerError::Validation {
                    line,
                    reason: format!(
                        "{} ({}) has parent {} ({}) that is not coarser",
                        e.place_id, e.granularity, parent.place_id, parent.granularity
                    ),
                });
            }
        }
        for e in &self.entries {
            let mut seen = BTreeSet::new();
            let mut cur = e;
            while let Some(pid) = &cur.admin_parent {
                if !seen.insert(cur.place_id.as_str()) {
                    return Err(GazetteerError::Cycle { place_id: cur.place_id.clone() });
                }
                cur = &self.entries[self.by_id[pid]];
            }
        }
        Ok(())
    }

    pub fn parse_tsv(text: &str) -> Result<Self, GazetteerError> {
        let mut entries = Vec::new();
        let mut line_of = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let row = raw.trim_end_matches('\r');
            if row.trim().is_empty() || row.starts_with('#') || (i == 0 && row.starts_with("place_id"))
            {
                continue;
            }
            entries.push(parse_row(row).map_err(|reason| GazetteerError::Malformed { line, reason })?);
            line_of.push(line);
        }
        Gazetteer::from_entries(entries).map_err(|e| match e {
            GazetteerError::Validation { line, reason } => GazetteerError::Validation {
                line: line_of[line - 1],
                reason,
            },
            other => other,
        })
    }

    pub fn load(path: &Path) -> Result<Self, GazetteerError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GazetteerError::Io(format!("{}: {e}", path.display())))?;
        Self::parse_tsv(&text)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from(TSV_HEADER);
        out.push('\n');
        for e in &self.entries {
            out.push_str(&e.to_tsv_row());
            out.push('\n');
        }
        out
    }

    pub fn entries(&self) -> &[GazetteerEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, place_id: &str) -> Option<&GazetteerEntry> {
        self.by_id.get(place_id).map(|&i| &self.entries[i])
    }

    pub fn granularity_of(&self, place_id: &str) -> Result<Granularity, GazetteerError> {
        self.get(place_id)
            .map(|e| e.granularity)
            .ok_or_else(|| GazetteerError::UnknownPlace(place_id.to_string()))
    }

    /// Parent chain of `place_id`, nearest first, excluding the place itself.
    pub fn ancestors(&self, place_id: &str) -> Vec<&GazetteerEntry> {
        let mut out = Vec::new();
        let mut cur = self.get(place_id);
        while let Some(e) = cur {
            cur = e.admin_parent.as_deref().and_then(|p| self.get(p));
            if let Some(p) = cur {
                out.push(p);
            }
        }
        out
    }

    pub fn within_radius(&self, center: LatLon, radius_km: f64) -> Vec<&GazetteerEntry> {
        self.entries
            .iter()
            .filter(|e| haversine_km(center, e.location()) <= radius_km)
            .collect()
    }
}

fn validate_entry(e: &GazetteerEntry) -> Result<(), String> {
    if e.place_id.trim().is_empty() {
        return Err("empty place_id".into());
    }
    if e.name.trim().is_empty() {
        return Err(format!("{}: empty name", e.place_id));
    }
    if e.aliases.iter().any(|a| a.trim().is_empty()) {
        return Err(format!("{}: empty alias", e.place_id));
    }
    if !LatLon::new(e.lat, e.lon).is_valid() {
        return Err(format!("{}: coordinates ({}, {}) out of range", e.place_id, e.lat, e.lon));
    }
    if e.admin_parent.as_deref() == Some(e.place_id.as_str()) {
        return Err(format!("{}: is its own parent", e.place_id));
    }
    Ok(())
}

fn parse_row(row: &str) -> Result<GazetteerEntry, String> {
    let cols: Vec<&str> = row.split('\t').collect();
    if cols.len() != 8 {
        return Err(format!("expected 8 tab-separated columns, found {}", cols.len()));
    }
    let num = |name: &str, s: &str| -> Result<f64, String> {
        s.trim().parse::<f64>().map_err(|_| format!("{name} {s:?} is not a number"))
    };
    let aliases = if cols[2].trim().is_empty() {
        Vec::new()
    } else {
        cols[2].split('|').map(|a| a.trim().to_string()).collect()
    };
    let population = cols[6]
        .trim()
        .parse::<u64>()
        .map_err(|_| format!("population {:?} is not a non-negative integer", cols[6]))?;
    let parent = cols[7].trim();
    Ok(GazetteerEntry {
        place_id: cols[0].trim().to_string(),
        name: cols[1].trim().to_string(),
        aliases,
        lat: num("lat", cols[3])?,
        lon: num("lon", cols[4])?,
        granularity: Granularity::normalize(cols[5]),
        population,
        admin_parent: (!parent.is_empty()).then(|| parent.to_string()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = "place_id\tname\taliases\tlat\tlon\tgranularity\tpopulation\tadmin_parent
np\tNepal\t\t28.2\t84.0\tcountry\t29000000\t
np-bag\tBagmati\t\t27.7\t85.3\tregion\t5500000\tnp
np-ktm\tKathmandu\tKTM|Kantipur\t27.7172\t85.324\tcity\t1400000\tnp-bag
np-ktm-bir\tBir Hospital\t\t27.7049\t85.3137\tbuilding\t0\tnp-ktm
x-1\tMount Thing\t\t27.9\t86.0\tvolcano\t0\tnp
";

    #[test]
    fn empty_file() {
        assert!(Gazetteer::parse_tsv("").unwrap().is_empty());
    }

    #[test]
    fn loads_small_hierarchy() {
        let g = Gazetteer::parse_tsv(SMALL).unwrap();
        assert_eq!(g.len(), 5);
        assert_eq!(g.granularity_of("np").unwrap(), Granularity::Country);
        assert_eq!(g.get("np-ktm").unwrap().aliases, vec!["KTM", "Kantipur"]);
        let chain: Vec<_> = g.ancestors("np-ktm-bir").iter().map(|e| e.place_id.as_str()).collect();
        assert_eq!(chain, ["np-ktm", "np-bag", "np"]);
        assert_eq!(g.granularity_of("np-ktm-bir").unwrap(), Granularity::Building);
        assert_eq!(g.granularity_of(&g.ancestors("np-ktm-bir")[0].place_id).unwrap(), Granularity::City);
    }

    #[test]
    fn unknown_level_normalizes_to_other() {
        let g = Gazetteer::parse_tsv(SMALL).unwrap();
        assert_eq!(g.granularity_of("x-1").unwrap(), Granularity::Other);
        assert!(matches!(g.granularity_of("nope"), Err(GazetteerError::UnknownPlace(_))));
    }

    #[test]
    fn bad_latitude_reports_line() {
        let text = format!("{SMALL}bad\tBad\t\t100\t0\tcity\t1\t\n");
        assert_eq!(
            Gazetteer::parse_tsv(&text).unwrap_err(),
            GazetteerError::Validation {
                line: 7,
                reason: "bad: coordinates (100, 0) out of range".into()
            }
        );
    }

    #[test]
    fn malformed_row_reports_line() {
        let err = Gazetteer::parse_tsv("a\tA\t\t1\t2\tcity\n").unwrap_err();
        assert!(matches!(err, GazetteerError::Malformed { line: 1, .. }));
        let err = Gazetteer::parse_tsv("a\tA\t\tx\t2\tcity\t1\t\n").unwrap_err();
        assert!(matches!(err, GazetteerError::Malformed { line: 1, .. }));
    }

    #[test]
    fn cycle_detected() {
        let text = "a\tA\t\t1\t1\tother\t1\tb\nb\tB\t\t1\t1\tother\t1\ta\n";
        assert!(matches!(Gazetteer::parse_tsv(text), Err(GazetteerError::Cycle { .. })));
    }

    #[test]
    fn non_coarsening_parent_rejected() {
        let text = "c\tC\t\t1\t1\tcity\t1\t\nr\tR\t\t1\t1\tregion\t1\tc\n";
        assert!(matches!(
            Gazetteer::parse_tsv(text),
            Err(GazetteerError::Validation { line: 2, .. })
        ));
    }

    #[test]
    fn duplicate_names_allowed() {
        let text = "a\tSpringfield\t\t39.8\t-89.6\tcity\t114000\t\nb\tSpringfield\t\t37.2\t-93.3\tcity\t169000\t\n";
        assert_eq!(Gazetteer::parse_tsv(text).unwrap().len(), 2);
    }

    #[test]
    fn tsv_roundtrip() {
        let g = Gazetteer::parse_tsv(SMALL).unwrap();
        let again = Gazetteer::parse_tsv(&g.to_tsv()).unwrap();
        assert_eq!(g.entries(), again.entries());
    }
}
