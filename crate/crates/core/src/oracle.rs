//! Independent reference implementations and the randomized equivalence harness
//! behind `oracle-check`.
//!
//! The references are deliberately naive: the geoparser reference compares every
//! gazetteer surface form against every text position, and the metric references
//! recount everything from the raw log with nested loops.

use std::cmp::Ordering;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::classify::auc;
use crate::event_feed::EarthquakeEvent;
use crate::geo::{haversine_km, LatLon};
use crate::geoparse::{normalize, Gazetteer, GazetteerEntry, Geoparser, NormalizedText, PlaceTag, TieRule};
use crate::metrics::{
    build_report, crisis_map, CollaborativeMode, EventLog, LogCounters, ReplyInfo, TaggedMessage, VarietyMode,
};
use crate::types::{DamageLabel, Granularity, QuestionKind};

/// Reference geoparser: all boundary-respecting occurrences of every surface
/// form, then leftmost, longest-first greedy selection, then a full sort of the
/// candidates under the tie rule.
pub fn naive_geoparse(text: &str, gazetteer: &Gazetteer, context: Option<LatLon>, rule: TieRule) -> Vec<PlaceTag> {
    NaiveScanner::new(gazetteer).parse(text, context, rule)
}

/// The reference geoparser with its normalized surface keys computed once, so
/// the harness can run it over many texts. Matching is still a scan of every
/// key at every text position, and candidate lookup a pass over every entry.
pub struct NaiveScanner<'g> {
    gazetteer: &'g Gazetteer,
    /// Distinct keys, as chars.
    keys: Vec<Vec<char>>,
    /// Normalized surface keys of each entry, parallel to `gazetteer.entries()`.
    entry_keys: Vec<Vec<String>>,
}

impl<'g> NaiveScanner<'g> {
    pub fn new(gazetteer: &'g Gazetteer) -> Self {
        let entry_keys: Vec<Vec<String>> = gazetteer
            .entries()
            .iter()
            .map(|e| e.surface_forms().map(NormalizedText::key).filter(|k| !k.is_empty()).collect())
            .collect();
        let distinct: std::collections::BTreeSet<&String> = entry_keys.iter().flatten().collect();
        let keys = distinct.into_iter().map(|k| k.chars().collect()).collect();
        NaiveScanner { gazetteer, keys, entry_keys }
    }

    pub fn parse(&self, text: &str, context: Option<LatLon>, rule: TieRule) -> Vec<PlaceTag> {
        let norm = normalize(text);
        let n = norm.chars.len();
        let mut occurrences: Vec<(usize, usize, String)> = Vec::new();
        for k in &self.keys {
            if k.len() > n {
                continue;
            }
            for s in 0..=n - k.len() {
                if norm.chars[s..s + k.len()] == k[..] && norm.on_word_boundary(s, s + k.len()) {
                    occurrences.push((s, s + k.len(), k.iter().collect()));
                }
            }
        }
        occurrences.sort_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)));

        let original: Vec<char> = text.chars().collect();
        let mut tags = Vec::new();
        let mut cursor = 0;
        for (s, e, key) in occurrences {
            if s < cursor {
                continue;
            }
            cursor = e;
            let mut candidates: Vec<&GazetteerEntry> = self
                .gazetteer
                .entries()
                .iter()
                .zip(&self.entry_keys)
                .filter(|(_, keys)| keys.contains(&key))
                .map(|(g, _)| g)
                .collect();
            candidates.sort_by(|a, b| reference_order(a, b, context, rule));
            let best = candidates[0];
            let span = (norm.origin[s], norm.origin[e - 1] + 1);
            tags.push(PlaceTag {
                surface: original[span.0..span.1].iter().collect(),
                span,
                place_id: best.place_id.clone(),
                lat: best.lat,
                lon: best.lon,
                granularity: best.granularity,
            });
        }
        tags
    }
}

fn reference_order(a: &GazetteerEntry, b: &GazetteerEntry, context: Option<LatLon>, rule: TieRule) -> Ordering {
    if let Some(c) = context {
        let (da, db) = (haversine_km(c, a.location()), haversine_km(c, b.location()));
        match da.partial_cmp(&db) {
            Some(Ordering::Equal) | None => {}
            Some(o) => return o,
        }
    }
    let population = match rule {
        TieRule::Standard => b.population.cmp(&a.population),
        TieRule::InvertedPopulation => a.population.cmp(&b.population),
    };
    if population != Ordering::Equal {
        return population;
    }
    a.granularity.cmp(&b.granularity).then_with(|| a.place_id.cmp(&b.place_id))
}

/// Pairwise concordance: positives scoring above negatives, ties count half.
pub fn pairwise_auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &li) in labels.iter().enumerate() {
        if !li {
            continue;
        }
        for (j, &lj) in labels.iter().enumerate() {
            if lj {
                continue;
            }
            pairs += 1.0;
            if scores[i] > scores[j] {
                wins += 1.0;
            } else if scores[i] == scores[j] {
                wins += 0.5;
            }
        }
    }
    (pairs > 0.0).then(|| wins / pairs)
}

const FILLER: &[&str] = &[
    "felt", "the", "earthquake", "in", "near", "at", "shaking", "from", "we", "are", "ok", "house", "quake", "road",
    "people", "street", "and", "city", "Ça", "très", "İstanbul", "ß", "!!", "#", "...", "@user", "5.0",
];

/// Random text mixing gazetteer surface forms (re-cased, re-spaced, truncated,
/// glued to letters) with filler words.
pub fn random_text(rng: &mut impl Rng, gazetteer: &Gazetteer) -> String {
    let entries = gazetteer.entries();
    let mut parts: Vec<String> = Vec::new();
    for _ in 0..rng.random_range(0..8) {
        let piece = if !entries.is_empty() && rng.random_bool(0.5) {
            let e = entries.choose(rng).unwrap();
            let forms: Vec<&str> = e.surface_forms().collect();
            let mut s = forms.choose(rng).unwrap().to_string();
            match rng.random_range(0..8) {
                0 => s = s.to_uppercase(),
                1 => s = s.to_lowercase(),
                2 => s = s.replace(' ', "  \t"),
                3 => {
                    let chars: Vec<char> = s.chars().collect();
                    let cut = rng.random_range(0..=chars.len());
                    s = chars[..cut].iter().collect();
                }
                4 => s.push('x'),
                5 => s.insert(0, 'a'),
                _ => {}
            }
            s
        } else {
            FILLER.choose(rng).unwrap().to_string()
        };
        parts.push(piece);
    }
    let mut out = String::new();
    for p in parts {
        let sep = *[" ", " ", ", ", "!", "\n", "", "-"].choose(rng).unwrap();
        if !out.is_empty() {
            out.push_str(sep);
        }
        out.push_str(&p);
    }
    out
}

fn random_context(rng: &mut impl Rng, gazetteer: &Gazetteer) -> Option<LatLon> {
    if gazetteer.is_empty() || rng.random_bool(0.4) {
        return None;
    }
    let e = gazetteer.entries().choose(rng).unwrap();
    Some(LatLon::new((e.lat + rng.random_range(-1.0..1.0)).clamp(-90.0, 90.0), e.lon))
}

fn random_tags(rng: &mut impl Rng) -> Vec<PlaceTag> {
    (0..rng.random_range(0..4))
        .map(|_| {
            let p = rng.random_range(0..12);
            PlaceTag {
                surface: format!("p{p}"),
                span: (0, 2),
                place_id: format!("p{p}"),
                lat: p as f64 * 0.37 - 2.0,
                lon: p as f64 * 0.71 + 100.0,
                granularity: Granularity::ALL[p % 5],
            }
        })
        .collect()
}

fn random_damage(rng: &mut impl Rng) -> DamageLabel {
    *[DamageLabel::Present, DamageLabel::AbsentReported, DamageLabel::NoInfo].choose(rng).unwrap()
}

/// Random event log with messages drawn from a 12-place pool.
pub fn random_log(rng: &mut impl Rng, max_messages: usize) -> EventLog {
    let event = EarthquakeEvent {
        event_id: "oracle".into(),
        magnitude: 5.0,
        depth_km: 10.0,
        epicenter_lat: 0.0,
        epicenter_lon: 100.0,
        origin_time: 0,
        place_name: "oracle".into(),
    };
    let mut log = EventLog::empty(event);
    log.grid_cell_deg = *[0.1, 0.5, 1.0].choose(rng).unwrap();
    log.variety_mode = if rng.random_bool(0.5) { VarietyMode::PerMessage } else { VarietyMode::EventLevel };
    log.collaborative_mode = CollaborativeMode::GroundTruth;
    log.counters = LogCounters::default();
    let message = |rng: &mut ChaCha8Rng, id: String| TaggedMessage {
        msg_id: id,
        author_id: "u".into(),
        ts: 0,
        text: String::new(),
        geo: None,
        tags: random_tags(rng),
        damage: random_damage(rng),
        relevant: None,
        reply: None,
    };
    let mut local = ChaCha8Rng::seed_from_u64(rng.random());
    for i in 0..rng.random_range(0..=max_messages) {
        let mut m = message(&mut local, format!("m{i}"));
        m.relevant = Some(local.random_bool(0.6));
        log.collected.push(m);
    }
    for i in 0..rng.random_range(0..=max_messages / 2) {
        let mut m = message(&mut local, format!("r{i}"));
        m.reply = Some(ReplyInfo {
            question_id: format!("q{i}"),
            kind: if local.random_bool(0.5) { QuestionKind::AskDamage } else { QuestionKind::AskGeo },
            delta_t_min: local.random_range(1..600) as f64 / 10.0,
            collaborative: local.random_bool(0.7),
        });
        log.replies.push(m);
    }
    log
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mismatch {
    pub check: &'static str,
    pub instance_seed: u64,
    pub detail: String,
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

fn brute_ratio(set: &[&TaggedMessage], pred: impl Fn(&TaggedMessage) -> bool) -> Option<f64> {
    if set.is_empty() {
        return None;
    }
    let mut hit = 0;
    for m in set {
        if pred(m) {
            hit += 1;
        }
    }
    Some(hit as f64 / set.len() as f64)
}

fn distinct_ids(set: &[&TaggedMessage]) -> Vec<String> {
    let mut ids: Vec<String> = Vec::new();
    for m in set {
        for t in &m.tags {
            if !ids.contains(&t.place_id) {
                ids.push(t.place_id.clone());
            }
        }
    }
    ids
}

fn expect(errors: &mut Vec<String>, name: String, got: Option<f64>, want: Option<f64>) {
    let ok = match (got, want) {
        (Some(g), Some(w)) => close(g, w),
        (None, None) => true,
        _ => false,
    };
    if !ok {
        errors.push(format!("{name}: report {got:?}, reference {want:?}"));
    }
}

/// Recomputes report fields from the raw log and lists the disagreements.
pub fn check_metrics(log: &EventLog) -> Vec<String> {
    let report = build_report(log);
    let mut errors = Vec::new();

    let relevant: Vec<&TaggedMessage> = log.collected.iter().filter(|m| m.relevant == Some(true)).collect();
    let replies: Vec<&TaggedMessage> = log.replies.iter().collect();
    let of_kind = |k: QuestionKind| -> Vec<&TaggedMessage> {
        log.replies.iter().filter(|m| m.reply.as_ref().map(|r| r.kind) == Some(k)).collect()
    };
    let r2d = of_kind(QuestionKind::AskDamage);
    let r2g = of_kind(QuestionKind::AskGeo);

    expect(

        &mut errors,
        "message_gain".into(),
        report.message_gain.value().copied(),
        (!relevant.is_empty()).then(|| replies.len() as f64 / relevant.len() as f64),
    );
    expect(
        &mut errors,
        "collaborative_rate".into(),
        report.collaborative_rate.value().copied(),
        brute_ratio(&replies, |m| m.reply.as_ref().unwrap().collaborative),
    );
    let mut total_dt = 0.0;
    for r in &replies {
        total_dt += r.reply.as_ref().unwrap().delta_t_min;
    }
    expect(
        &mut errors,
        "mean_reply_latency".into(),
        report.mean_reply_latency_min.value().copied(),
        (!replies.is_empty()).then(|| total_dt / replies.len() as f64),
    );

    for (name, set) in [("relevant", &relevant), ("reply2damage", &r2d), ("reply2geo", &r2g)] {
        expect(
            &mut errors,
            format!("damage_ratio[{name}]"),
            report.damage_ratio[name].value().copied(),
            brute_ratio(set, |m| m.damage == DamageLabel::Present),
        );
        expect(
            &mut errors,
            format!("damage_info_ratio[{name}]"),
            report.damage_info_ratio[name].value().copied(),
            brute_ratio(set, |m| m.damage != DamageLabel::NoInfo),
        );
        let mut tags = 0;
        let mut distinct_sum = 0;
        for m in set.iter() {
            tags += m.tags.len();
            let mut seen: Vec<&str> = Vec::new();
            for t in &m.tags {
                if !seen.contains(&t.place_id.as_str()) {
                    seen.push(&t.place_id);
                }
            }
            distinct_sum += seen.len();
        }
        let n = set.len() as f64;
        expect(
            &mut errors,
            format!("place_density[{name}]"),
            report.place_density[name].value().copied(),
            (!set.is_empty()).then(|| tags as f64 / n),
        );
        let variety = match log.variety_mode {
            VarietyMode::PerMessage => distinct_sum as f64 / n,
            VarietyMode::EventLevel => distinct_ids(set).len() as f64 / n,
        };
        expect(
            &mut errors,
            format!("place_variety[{name}]"),
            report.place_variety[name].value().copied(),
            (!set.is_empty()).then_some(variety),
        );
        if !set.is_empty() && report.place_variety[name].is_defined() {
            let (d, v) = (distinct_sum as f64 / n, tags as f64 / n);
            if d > v {
                errors.push(format!("per-message variety {d} above density {v} for {name}"));
            }
        }
        let dist = report.granularity_distribution[name].value();
        for g in Granularity::ALL {
            let level = set.iter().flat_map(|m| &m.tags).filter(|t| t.granularity == g).count();
            expect(
                &mut errors,
                format!("granularity[{name}][{g}]"),
                dist.map(|d| d[&g]),
                (tags > 0).then(|| level as f64 / tags as f64),
            );
        }
        if let Some(d) = dist {
            let s: f64 = d.values().sum();
            if (s - 1.0).abs() > 1e-9 {
                errors.push(format!("granularity[{name}] sums to {s}"));
            }
        }
    }

    let known = distinct_ids(&relevant);
    let new = distinct_ids(&r2g).into_iter().filter(|p| !known.contains(p)).count();
    expect(
        &mut errors,
        "coverage_gain".into(),
        report.coverage_gain.value().copied(),
        (!known.is_empty()).then(|| new as f64 / known.len() as f64),
    );

    let mut mapped = relevant.clone();
    mapped.extend(&replies);
    let cells = crisis_map(&mapped, log.grid_cell_deg);
    let mut reference: Vec<((i64, i64), usize, usize)> = Vec::new();
    for m in &mapped {
        let mut finest: Option<&PlaceTag> = None;
        for g in Granularity::ALL {
            finest = m.tags.iter().find(|t| t.granularity == g);
            if finest.is_some() {
                break;
            }
        }
        let Some(t) = finest else { continue };
        let cell = ((t.lat / log.grid_cell_deg).floor() as i64, (t.lon / log.grid_cell_deg).floor() as i64);
        let damage = usize::from(m.damage == DamageLabel::Present);
        match reference.iter_mut().find(|c| c.0 == cell) {
            Some(c) => {
                c.1 += damage;
                c.2 += 1;
            }
            None => reference.push((cell, damage, 1)),
        }
    }
    reference.sort();
    let got: Vec<((i64, i64), usize, usize)> =
        cells.iter().map(|c| ((c.row, c.col), c.damage_count, c.message_count)).collect();
    if got != reference {
        errors.push(format!("crisis map: report {got:?}, reference {reference:?}"));
    }
    if report.crisis_cells != reference.len() {
        errors.push(format!("crisis cell count {} vs {}", report.crisis_cells, reference.len()));
    }
    errors
}

#[derive(Debug, Clone, Default)]
pub struct OracleOutcome {
    pub instances: usize,
    pub mismatches: Vec<Mismatch>,
}

/// Runs `n` random instances. Instance `i` is generated from seed `seed + i`, so
/// any mismatch reproduces with `n = 1` and that seed.
pub fn oracle_check(gazetteer: &Gazetteer, n: usize, seed: u64, rule: TieRule) -> OracleOutcome {
    let parser = Geoparser::with_tie_rule(gazetteer, TieRule::Standard);
    let scanner = NaiveScanner::new(gazetteer);
    let mut out = OracleOutcome { instances: n, mismatches: Vec::new() };
    for i in 0..n {
        let instance_seed = seed.wrapping_add(i as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(instance_seed);

        let text = random_text(&mut rng, gazetteer);
        let context = random_context(&mut rng, gazetteer);
        let main = parser.parse(&text, context);
        let reference = scanner.parse(&text, context, rule);
        if main != reference {
            out.mismatches.push(Mismatch {
                check: "geoparse",
                instance_seed,
                detail: format!("text {text:?} context {context:?}: matcher {main:?}, reference {reference:?}"),
            });
        }

        // metrics and AUC are cheaper; checking them on every 10th instance keeps
        // the harness dominated by the geoparser comparison it exists for
        if i % 10 == 0 {
            let log = random_log(&mut rng, 40);
            for e in check_metrics(&log) {
                out.mismatches.push(Mismatch { check: "metrics", instance_seed, detail: e });
            }
            let k = rng.random_range(2..60);
            let scores: Vec<f64> = (0..k).map(|_| rng.random_range(0..10) as f64 / 10.0).collect();
            let labels: Vec<bool> = (0..k).map(|_| rng.random_bool(0.5)).collect();
            let fast = auc(&scores, &labels).ok();
            let slow = pairwise_auc(&scores, &labels);
            let agree = match (fast, slow) {
                (Some(a), Some(b)) => (a - b).abs() <= 1e-9,
                (None, None) => true,
                _ => false,
            };
            if !agree {
                out.mismatches.push(Mismatch {
                    check: "auc",
                    instance_seed,
                    detail: format!("scores {scores:?} labels {labels:?}: {fast:?} vs {slow:?}"),
                });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaz() -> Gazetteer {
        Gazetteer::parse_tsv(
            "us\tUnited States\tUSA\t39.8\t-98.6\tcountry\t330000000\t
us-ny\tNew York\tNYC|New York City\t40.71\t-74.0\tcity\t8300000\tus
us-il-spr\tSpringfield\t\t39.78\t-89.65\tcity\t114000\tus
us-mo-spr\tSpringfield\t\t37.21\t-93.29\tcity\t169000\tus
us-ny-york\tYork\t\t40.0\t-76.7\tcity\t44000\tus
",
        )
        .unwrap()
    }

    #[test]
    fn naive_matches_known_cases() {
        let g = gaz();
        let tags = naive_geoparse("from New York City to york", &g, None, TieRule::Standard);
        let ids: Vec<&str> = tags.iter().map(|t| t.place_id.as_str()).collect();
        assert_eq!(ids, ["us-ny", "us-ny-york"]);
        assert_eq!(tags[0].span, (5, 18));
        let spr = naive_geoparse("Springfield", &g, None, TieRule::Standard);
        assert_eq!(spr[0].place_id, "us-mo-spr");
        let inv = naive_geoparse("Springfield", &g, None, TieRule::InvertedPopulation);
        assert_eq!(inv[0].place_id, "us-il-spr");
    }

    #[test]
    fn pairwise_auc_values() {
        assert_eq!(pairwise_auc(&[0.9, 0.8, 0.3], &[true, false, true]), Some(0.5));
        assert_eq!(pairwise_auc(&[0.5, 0.5], &[true, false]), Some(0.5));
        assert_eq!(pairwise_auc(&[0.1], &[true]), None);
    }

    #[test]
    fn harness_passes_and_negative_control_fails() {
        let g = gaz();
        let ok = oracle_check(&g, 2_000, 11, TieRule::Standard);
        assert!(ok.mismatches.is_empty(), "{:?}", ok.mismatches.first());
        let bad = oracle_check(&g, 2_000, 11, TieRule::InvertedPopulation);
        assert!(bad.mismatches.iter().any(|m| m.check == "geoparse"));
        let again = oracle_check(&g, 1, bad.mismatches[0].instance_seed, TieRule::InvertedPopulation);
        assert!(!again.mismatches.is_empty());
    }

    #[test]
    fn zero_instances() {
        assert!(oracle_check(&gaz(), 0, 1, TieRule::Standard).mismatches.is_empty());
    }
}
