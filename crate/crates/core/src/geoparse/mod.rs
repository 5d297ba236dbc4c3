//! Place-mention extraction and resolution.
//!
//! Surface forms from the gazetteer are compiled into one Aho-Corasick automaton
//! over case-folded, whitespace-collapsed text. Matches must sit on word
//! boundaries; overlapping matches are resolved leftmost-first, longest at a
//! given start. An ambiguous surface form is resolved by, in order: distance to
//! the epicenter (when known), population, granularity (finest first), place id.

pub mod gazetteer;

use std::cmp::Ordering;
use std::collections::BTreeMap;

use aho_corasick::{AhoCorasick, MatchKind};
use serde::{Deserialize, Serialize};

pub use gazetteer::{Gazetteer, GazetteerEntry, GazetteerError};

use crate::geo::{haversine_km, LatLon};
use crate::types::{Granularity, PlaceId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaceTag {
    pub surface: String,
    /// Character offsets `[start, end)` into the original text.
    pub span: (usize, usize),
    pub place_id: PlaceId,
    pub lat: f64,
    pub lon: f64,
    pub granularity: Granularity,
}

/// Case-folded text with whitespace runs collapsed to one space. `origin[k]` is
/// the character index in the source text that produced normalized char `k`.
#[derive(Debug, Clone)]
pub struct NormalizedText {
    pub text: String,
    pub chars: Vec<char>,
    pub byte_offsets: Vec<usize>,
    pub origin: Vec<usize>,
}

pub fn normalize(text: &str) -> NormalizedText {
    let mut out = NormalizedText {
        text: String::with_capacity(text.len()),
        chars: Vec::with_capacity(text.len()),
        byte_offsets: Vec::with_capacity(text.len()),
        origin: Vec::with_capacity(text.len()),
    };
    for (i, c) in text.chars().enumerate() {
        if c.is_whitespace() {
            if out.chars.last() != Some(&' ') {
                out.push(' ', i);
            }
        } else {
            for lc in c.to_lowercase() {
                out.push(lc, i);
            }
        }
    }
    out
}

impl NormalizedText {
    fn push(&mut self, c: char, origin: usize) {
        self.byte_offsets.push(self.text.len());
        self.text.push(c);
        self.chars.push(c);
        self.origin.push(origin);
    }

    /// Normalized form of a gazetteer surface (outer whitespace trimmed).
    pub fn key(surface: &str) -> String {
        normalize(surface.trim()).text
    }

    /// Whether normalized chars `[start, end)` sit on word boundaries.
    pub fn on_word_boundary(&self, start: usize, end: usize) -> bool {
        let before_ok = start == 0 || !self.chars[start - 1].is_alphanumeric();
        let after_ok = end >= self.chars.len() || !self.chars[end].is_alphanumeric();
        before_ok && after_ok
    }

    /// Maps a normalized char range back to original char offsets.
    pub fn original_span(&self, start: usize, end: usize) -> (usize, usize) {
        (self.origin[start], self.origin[end - 1] + 1)
    }
}

/// How ties among same-named gazetteer entries are broken. Only the standard rule
/// is meant for use; the inverted variant exists as a negative control for the
/// oracle harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TieRule {
    #[default]
    Standard,
    #[doc(hidden)]
    InvertedPopulation,
}

pub struct Geoparser<'g> {
    gazetteer: &'g Gazetteer,
    automaton: Option<AhoCorasick>,
    /// Candidate entry indices per pattern, in `place_id` order.
    candidates: Vec<Vec<usize>>,
    tie_rule: TieRule,
}

impl<'g> Geoparser<'g> {
    pub fn new(gazetteer: &'g Gazetteer) -> Self {
        Self::with_tie_rule(gazetteer, TieRule::Standard)
    }

    pub fn with_tie_rule(gazetteer: &'g Gazetteer, tie_rule: TieRule) -> Self {
        let mut by_key: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (idx, entry) in gazetteer.entries().iter().enumerate() {
            for form in entry.surface_forms() {
                let key = NormalizedText::key(form);
                if key.is_empty() {
                    continue;
                }
                let list = by_key.entry(key).or_default();
                if list.last() != Some(&idx) {
                    list.push(idx);
                }
            }
        }
        let (patterns, candidates): (Vec<String>, Vec<Vec<usize>>) = by_key.into_iter().unzip();
        let automaton = (!patterns.is_empty()).then(|| {
            AhoCorasick::builder()
                .match_kind(MatchKind::Standard)
                .build(&patterns)
                .expect("gazetteer patterns fit in the automaton")
        });
        Geoparser { gazetteer, automaton, candidates, tie_rule }
    }

    pub fn gazetteer(&self) -> &'g Gazetteer {
        self.gazetteer
    }

    pub fn parse(&self, text: &str, context: Option<LatLon>) -> Vec<PlaceTag> {
        let Some(automaton) = &self.automaton else { return Vec::new() };
        let norm = normalize(text);
        let char_at_byte = |b: usize| norm.byte_offsets.binary_search(&b).ok();

        // (start, end, pattern) in normalized char offsets
        let mut found: Vec<(usize, usize, usize)> = automaton
            .find_overlapping_iter(&norm.text)
            .filter_map(|m| {
                let start = char_at_byte(m.start())?;
                let end = if m.end() == norm.text.len() {
                    norm.chars.len()
                } else {
                    char_at_byte(m.end())?
                };
                norm.on_word_boundary(start, end)
                    .then_some((start, end, m.pattern().as_usize()))
            })
            .collect();
        found.sort_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)));

        let original: Vec<char> = text.chars().collect();
        let mut tags = Vec::new();
        let mut cursor = 0;
        for (start, end, pattern) in found {
            if start < cursor {
                continue;
            }
            cursor = end;
            let entry = &self.gazetteer.entries()[self.resolve(&self.candidates[pattern], context)];
            let span = norm.original_span(start, end);
            tags.push(PlaceTag {
                surface: original[span.0..span.1].iter().collect(),
                span,
                place_id: entry.place_id.clone(),
                lat: entry.lat,
                lon: entry.lon,
                granularity: entry.granularity,
            });
        }
        tags
    }

    fn resolve(&self, candidates: &[usize], context: Option<LatLon>) -> usize {
        let entries = self.gazetteer.entries();
        let key = |&i: &usize| {
            let e = &entries[i];
            (context.map(|c| haversine_km(c, e.location())), e)
        };
        let mut best = candidates[0];
        for &c in &candidates[1..] {
            if self.prefer(key(&c), key(&best)) == Ordering::Less {
                best = c;
            }
        }
        best
    }

    fn prefer(
        &self,
        (da, a): (Option<f64>, &GazetteerEntry),
        (db, b): (Option<f64>, &GazetteerEntry),
    ) -> Ordering {
        let by_distance = match (da, db) {
            (Some(x), Some(y)) => x.partial_cmp(&y).unwrap_or(Ordering::Equal),
            _ => Ordering::Equal,
        };
        let by_population = match self.tie_rule {
            TieRule::Standard => b.population.cmp(&a.population),
            TieRule::InvertedPopulation => a.population.cmp(&b.population),
        };
        by_distance
            .then(by_population)
            .then(a.granularity.cmp(&b.granularity))
            .then(a.place_id.cmp(&b.place_id))
    }
}

/// Convenience wrapper compiling a one-off parser.
pub fn geoparse(text: &str, gazetteer: &Gazetteer, context: Option<LatLon>) -> Vec<PlaceTag> {
    Geoparser::new(gazetteer).parse(text, context)
}

pub fn granularity_of(place_id: &str, gazetteer: &Gazetteer) -> Result<Granularity, GazetteerError> {
    gazetteer.granularity_of(place_id)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaz() -> Gazetteer {
        Gazetteer::parse_tsv(
            "np\tNepal\t\t28.2\t84.0\tcountry\t29000000\t
np-ktm\tKathmandu\tKTM\t27.7172\t85.324\tcity\t1400000\tnp
np-ktm-u\tUniversity of Kathmandu\t\t27.72\t85.33\tbuilding\t0\tnp-ktm
us\tUnited States\tUSA\t39.8\t-98.6\tcountry\t330000000\t
us-ny\tNew York\tNYC|New  York City\t40.71\t-74.0\tcity\t8300000\tus
us-il-spr\tSpringfield\t\t39.78\t-89.65\tcity\t114000\tus
us-mo-spr\tSpringfield\t\t37.21\t-93.29\tcity\t169000\tus
",
        )
        .unwrap()
    }

    #[test]
    fn empty_text() {
        assert!(geoparse("", &gaz(), None).is_empty());
    }

    #[test]
    fn two_places_with_spans() {
        let text = "Kathmandu and New York";
        let tags = geoparse(text, &gaz(), None);
        assert_eq!(tags.len(), 2);
        assert_eq!((tags[0].place_id.as_str(), tags[0].span), ("np-ktm", (0, 9)));
        assert_eq!((tags[1].place_id.as_str(), tags[1].span), ("us-ny", (14, 22)));
        assert_eq!(tags[1].surface, "New York");
    }

    #[test]
    fn springfield_nearest_to_epicenter() {
        let g = gaz();
        let near_mo = LatLon::new(37.0, -93.0);
        let near_il = LatLon::new(40.0, -89.0);
        assert_eq!(geoparse("Springfield", &g, Some(near_mo))[0].place_id, "us-mo-spr");
        assert_eq!(geoparse("Springfield", &g, Some(near_il))[0].place_id, "us-il-spr");
        // without context the larger population wins
        assert_eq!(geoparse("Springfield", &g, None)[0].place_id, "us-mo-spr");
    }

    #[test]
    fn longest_match_and_boundaries() {
        let g = gaz();
        let tags = geoparse("at the University of Kathmandu today", &g, None);
        assert_eq!(tags.len(), 1);
        assert_eq!(tags[0].place_id, "np-ktm-u");
        assert!(geoparse("Kathmandus", &g, None).is_empty());
        assert!(geoparse("xNepal", &g, None).is_empty());
        let tags = geoparse("KATHMANDU!!! nepal.", &g, None);
        assert_eq!(tags.iter().map(|t| t.place_id.as_str()).collect::<Vec<_>>(), ["np-ktm", "np"]);
    }

    #[test]
    fn whitespace_collapsed_aliases() {
        let text = "shaking in new \t york   city now";
        let tags = geoparse(text, &gaz(), None);
        assert_eq!(tags.len(), 1);
        let chars: Vec<char> = text.chars().collect();
        let (s, e) = tags[0].span;
        assert_eq!(chars[s..e].iter().collect::<String>(), "new \t york   city");
    }

    #[test]
    fn non_ascii_offsets_are_char_based() {
        let text = "Ça tremble à Kathmandu";
        let tags = geoparse(text, &gaz(), None);
        assert_eq!(tags[0].span, (13, 22));
        assert_eq!(tags[0].surface, "Kathmandu");
    }

    #[test]
    fn inverted_rule_differs() {
        let g = gaz();
        let p = Geoparser::with_tie_rule(&g, TieRule::InvertedPopulation);
        assert_eq!(p.parse("Springfield", None)[0].place_id, "us-il-spr");
    }
}
