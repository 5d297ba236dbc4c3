//! Regenerates the bundled data files under `data/`.
//!
//!     cargo run -p hysense --example gen_fixtures
//!
//! Output is a pure function of the constants below, so rerunning it leaves the
//! files unchanged.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use hysense::classify::{Example, Task};
use hysense::event_feed::{to_usgs_feed, EarthquakeEvent};
use hysense::geo::{destination, haversine_km, LatLon};
use hysense::geoparse::{Gazetteer, GazetteerEntry, Geoparser, NormalizedText};
use hysense::types::{DamageLabel, Granularity, QuestionKind};
use hysense::witness::{centroid, centroid_to_json, train_scorer, FeatureExtractor};
use hysense::world::templates::{render_post, render_reply, vocabulary, Mention, PostKind};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

const GAZETTEER_SIZE: usize = 5000;
const SEED: u64 = 20150425;

struct Spot {
    event: EarthquakeEvent,
    region: &'static str,
}

fn ev(id: &str, m: f64, depth: f64, lat: f64, lon: f64, iso: &str, place: &str) -> EarthquakeEvent {
    let t = chrono::DateTime::parse_from_rfc3339(iso).unwrap().timestamp_millis();
    EarthquakeEvent {
        event_id: id.into(),
        magnitude: m,
        depth_km: depth,
        epicenter_lat: lat,
        epicenter_lon: lon,
        origin_time: t,
        place_name: place.into(),
    }
}

fn events() -> Vec<Spot> {
    vec![
        Spot {
            event: ev("sanramon", 3.5, 11.0, 37.78, -121.97, "2015-04-02T13:21:50Z", "San Ramon, California"),
            region: "us-ca",
        },
        Spot {
            event: ev("lila", 4.8, 81.0, 9.59, 124.10, "2015-03-30T08:47:12Z", "Lila, Philippines"),
            region: "ph-bohol",
        },
        Spot {
            event: ev("lamjung", 7.5, 12.0, 28.15, 84.71, "2015-04-25T06:11:25Z", "Lamjung, Nepal"),
            region: "np-lamjung",
        },
        Spot {
            event: ev("kokopo", 7.7, 66.0, -4.73, 152.56, "2015-03-29T23:48:31Z", "Kokopo, Papua New Guinea"),
            region: "pg-enb",
        },
        Spot {
            event: ev("irving", 3.3, 6.0, 32.84, -96.98, "2015-04-02T21:36:04Z", "Irving, Texas"),
            region: "us-tx",
        },
    ]
}

type Row = (&'static str, &'static str, &'static str, f64, f64, &'static str, u64, &'static str);

/// Real places around the five events, plus a few well-known ambiguous names.
const REAL: &[Row] = &[
    ("us", "United States", "USA", 39.8, -98.6, "country", 321_000_000, ""),
    ("us-ca", "California", "Calif", 37.2, -119.4, "region", 39_000_000, "us"),
    ("us-ca-sr", "San Ramon", "", 37.78, -121.98, "city", 75_000, "us-ca"),
    ("us-ca-dv", "Danville", "", 37.82, -122.0, "city", 44_000, "us-ca"),
    ("us-ca-db", "Dublin", "", 37.70, -121.94, "city", 52_000, "us-ca"),
    ("us-ca-pl", "Pleasanton", "", 37.66, -121.87, "city", 74_000, "us-ca"),
    ("us-ca-wc", "Walnut Creek", "", 37.91, -122.06, "city", 66_000, "us-ca"),
    ("us-ca-lv", "Livermore", "", 37.68, -121.77, "city", 86_000, "us-ca"),
    ("us-ca-ok", "Oakland", "", 37.80, -122.27, "city", 420_000, "us-ca"),
    ("us-ca-sf", "San Francisco", "SF", 37.77, -122.42, "city", 850_000, "us-ca"),
    ("us-ca-sj", "San Jose", "", 37.34, -121.89, "city", 1_000_000, "us-ca"),
    ("us-ca-md", "Mount Diablo", "Mt Diablo", 37.88, -121.91, "other", 0, "us-ca"),
    ("us-ca-sr-med", "San Ramon Regional Medical Center", "", 37.77, -121.96, "building", 0, "us-ca-sr"),
    ("us-ca-sr-br", "Bishop Ranch", "", 37.77, -121.97, "building", 0, "us-ca-sr"),
    ("us-ca-dv-lib", "Danville Library", "", 37.82, -122.0, "building", 0, "us-ca-dv"),
    ("us-tx", "Texas", "TX", 31.0, -99.0, "region", 27_000_000, "us"),
    ("us-tx-irv", "Irving", "", 32.81, -96.95, "city", 230_000, "us-tx"),
    ("us-tx-dal", "Dallas", "", 32.78, -96.80, "city", 1_300_000, "us-tx"),
    ("us-tx-fw", "Fort Worth", "", 32.75, -97.33, "city", 810_000, "us-tx"),
    ("us-tx-arl", "Arlington", "", 32.74, -97.11, "city", 380_000, "us-tx"),
    ("us-tx-gp", "Grand Prairie", "", 32.75, -97.00, "city", 185_000, "us-tx"),
    ("us-tx-lc", "Las Colinas", "", 32.88, -96.94, "city", 30_000, "us-tx"),
    ("us-tx-dfw", "DFW Airport", "DFW", 32.90, -97.04, "building", 0, "us-tx-irv"),
    ("us-tx-att", "AT&T Stadium", "", 32.75, -97.09, "building", 0, "us-tx-arl"),
    ("us-tx-lkc", "Lake Carolyn", "", 32.87, -96.94, "other", 0, "us-tx"),
    ("us-ny", "New York", "NYC|New York City", 40.71, -74.0, "city", 8_400_000, "us"),
    ("us-il-spr", "Springfield", "", 39.78, -89.65, "city", 116_000, "us"),
    ("us-mo-spr", "Springfield", "", 37.21, -93.29, "city", 165_000, "us"),
    ("ie", "Ireland", "", 53.4, -8.2, "country", 4_600_000, ""),
    ("ie-dub", "Dublin", "", 53.35, -6.26, "city", 530_000, "ie"),
    ("ph", "Philippines", "", 12.9, 121.8, "country", 101_000_000, ""),
    ("ph-bohol", "Bohol", "", 9.85, 124.14, "region", 1_300_000, "ph"),
    ("ph-lila", "Lila", "", 9.59, 124.10, "city", 11_000, "ph-bohol"),
    ("ph-tag", "Tagbilaran", "Tagbilaran City", 9.65, 123.85, "city", 105_000, "ph-bohol"),
    ("ph-loboc", "Loboc", "", 9.64, 124.03, "city", 17_000, "ph-bohol"),
    ("ph-loay", "Loay", "", 9.60, 124.01, "city", 17_000, "ph-bohol"),
    ("ph-dimiao", "Dimiao", "", 9.61, 124.17, "city", 15_000, "ph-bohol"),
    ("ph-jagna", "Jagna", "", 9.65, 124.37, "city", 33_000, "ph-bohol"),
    ("ph-cebu", "Cebu", "", 10.3, 123.9, "region", 2_900_000, "ph"),
    ("ph-cebu-c", "Cebu City", "", 10.32, 123.89, "city", 920_000, "ph-cebu"),
    ("ph-ncr", "Metro Manila", "", 14.6, 121.0, "region", 12_900_000, "ph"),
    ("ph-mnl", "Manila", "", 14.60, 120.98, "city", 1_780_000, "ph-ncr"),
    ("ph-choc", "Chocolate Hills", "", 9.83, 124.17, "other", 0, "ph-bohol"),
    ("ph-loboc-ch", "Loboc Church", "", 9.64, 124.03, "building", 0, "ph-loboc"),
    ("ph-bac-ch", "Baclayon Church", "", 9.62, 123.91, "building", 0, "ph-bohol"),
    ("np", "Nepal", "", 28.2, 84.0, "country", 28_000_000, ""),
    ("np-gandaki", "Gandaki", "", 28.3, 84.0, "region", 1_500_000, "np"),
    ("np-bagmati", "Bagmati", "", 27.7, 85.4, "region", 3_800_000, "np"),
    ("np-lamjung", "Lamjung", "", 28.28, 84.35, "region", 170_000, "np"),
    ("np-ktm", "Kathmandu", "KTM", 27.7172, 85.324, "city", 1_000_000, "np-bagmati"),
    ("np-pkr", "Pokhara", "", 28.21, 83.99, "city", 260_000, "np-gandaki"),
    ("np-bes", "Besisahar", "", 28.23, 84.38, "city", 20_000, "np-lamjung"),
    ("np-gor", "Gorkha", "", 28.00, 84.63, "city", 33_000, "np-gandaki"),
    ("np-bkt", "Bhaktapur", "", 27.67, 85.43, "city", 81_000, "np-bagmati"),
    ("np-ltp", "Lalitpur", "Patan", 27.67, 85.32, "city", 220_000, "np-bagmati"),
    ("np-brp", "Bharatpur", "", 27.68, 84.43, "city", 200_000, "np"),
    ("np-bar", "Barpak", "", 28.20, 84.73, "city", 12_000, "np-gandaki"),
    ("np-dhar", "Dharahara Tower", "Dharahara", 27.70, 85.31, "building", 0, "np-ktm"),
    ("np-bir", "Bir Hospital", "", 27.70, 85.31, "building", 0, "np-ktm"),
    ("np-tia", "Tribhuvan International Airport", "", 27.70, 85.36, "building", 0, "np-ktm"),
    ("np-durbar", "Durbar Square", "", 27.70, 85.31, "building", 0, "np-ktm"),
    ("np-annap", "Annapurna", "", 28.60, 83.82, "other", 0, "np-gandaki"),
    ("np-lang", "Langtang", "", 28.21, 85.56, "other", 0, "np-bagmati"),
    ("np-ever", "Mount Everest", "Everest", 27.99, 86.93, "other", 0, "np"),
    ("in", "India", "", 21.0, 78.0, "country", 1_300_000_000, ""),
    ("in-del", "Delhi", "New Delhi", 28.61, 77.21, "city", 16_000_000, "in"),
    ("in-pat", "Patna", "", 25.59, 85.14, "city", 1_700_000, "in"),
    ("in-luc", "Lucknow", "", 26.85, 80.95, "city", 2_800_000, "in"),
    ("bd", "Bangladesh", "", 23.7, 90.4, "country", 160_000_000, ""),
    ("bd-dhk", "Dhaka", "", 23.81, 90.41, "city", 8_900_000, "bd"),
    ("pg", "Papua New Guinea", "PNG", -6.3, 143.9, "country", 7_600_000, ""),
    ("pg-enb", "East New Britain", "", -4.6, 152.0, "region", 330_000, "pg"),
    ("pg-wnb", "West New Britain", "", -5.6, 150.2, "region", 260_000, "pg"),
    ("pg-kok", "Kokopo", "", -4.34, 152.27, "city", 26_000, "pg-enb"),
    ("pg-rab", "Rabaul", "", -4.20, 152.17, "city", 8_000, "pg-enb"),
    ("pg-kim", "Kimbe", "", -5.55, 150.14, "city", 18_000, "pg-wnb"),
    ("pg-ncd", "Port Moresby", "", -9.44, 147.18, "city", 360_000, "pg"),
    ("pg-lae", "Lae", "", -6.72, 146.99, "city", 100_000, "pg"),
    ("pg-tav", "Mount Tavurvur", "Tavurvur", -4.27, 152.20, "other", 0, "pg-enb"),
    ("pg-vun", "Vunapope Hospital", "", -4.35, 152.28, "building", 0, "pg-kok"),
];

const SYLLABLES: &[&str] = &[
    "ka", "lo", "mi", "ra", "ten", "bu", "sa", "vo", "ri", "an", "del", "mar", "po", "zu", "ne", "gi", "har",
    "lin", "to", "ve", "qui", "or", "ba", "su", "el", "tor", "ko", "dra", "sen", "u", "ya", "nor", "pel", "ist",
];

const BUILDING_SUFFIX: &[&str] = &["Hospital", "Tower", "Station", "Stadium", "Hall", "College", "Plaza"];
const OTHER_PREFIX: &[&str] = &["Mount", "Lake", "Cape"];
const OTHER_SUFFIX: &[&str] = &["River", "Valley", "Bay"];

struct Names {
    used: BTreeSet<String>,
    vocab: BTreeSet<String>,
}

impl Names {
    fn fresh(&mut self, rng: &mut impl Rng) -> String {
        loop {
            let n = rng.random_range(2..=3);
            let raw: String = (0..n).map(|_| *SYLLABLES.choose(rng).unwrap()).collect();
            let mut name = raw[..1].to_uppercase();
            name.push_str(&raw[1..]);
            let key = name.to_lowercase();
            if key.len() >= 4 && !self.vocab.contains(&key) && self.used.insert(key) {
                return name;
            }
        }
    }
}

fn entry(
    id: String,
    name: String,
    aliases: Vec<String>,
    at: LatLon,
    g: Granularity,
    population: u64,
    parent: Option<String>,
) -> GazetteerEntry {
    GazetteerEntry {
        place_id: id,
        name,
        aliases,
        lat: (at.lat * 1e4).round() / 1e4,
        lon: (at.lon * 1e4).round() / 1e4,
        granularity: g,
        population,
        admin_parent: parent,
    }
}

fn log_uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> u64 {
    (lo.ln() + rng.random::<f64>() * (hi.ln() - lo.ln())).exp() as u64
}

fn gazetteer(rng: &mut ChaCha8Rng) -> Vec<GazetteerEntry> {
    let vocab: BTreeSet<String> = vocabulary().into_iter().collect();
    let mut out: Vec<GazetteerEntry> = REAL
        .iter()
        .map(|&(id, name, aliases, lat, lon, g, pop, parent)| GazetteerEntry {
            place_id: id.into(),
            name: name.into(),
            aliases: aliases.split('|').filter(|a| !a.is_empty()).map(String::from).collect(),
            lat,
            lon,
            granularity: g.parse().unwrap(),
            population: pop,
            admin_parent: (!parent.is_empty()).then(|| parent.to_string()),
        })
        .collect();
    let mut names = Names { used: BTreeSet::new(), vocab };
    for e in &out {
        for f in e.surface_forms() {
            names.used.insert(f.to_lowercase());
        }
    }
    let mut city_names: Vec<String> = Vec::new();

    // synthetic neighbourhood of every event: cities, buildings and landmarks
    for (k, spot) in events().iter().enumerate() {
        let center = spot.event.epicenter();
        let reach = if spot.event.magnitude > 7.0 { 250.0 } else { 120.0 };
        let mut cities = Vec::new();
        for i in 0..40 {
            let at = destination(center, rng.random_range(0.0..360.0), reach * rng.random::<f64>().sqrt());
            let name = names.fresh(rng);
            let id = format!("x{k}-c{i:02}");
            city_names.push(name.clone());
            out.push(entry(id.clone(), name, vec![], at, Granularity::City, log_uniform(rng, 2e3, 3e5), Some(spot.region.into())));
            cities.push((id, at));
        }
        for i in 0..30 {
            let (city, at) = cities.choose(rng).unwrap().clone();
            let name = format!("{} {}", names.fresh(rng), BUILDING_SUFFIX.choose(rng).unwrap());
            let at = destination(at, rng.random_range(0.0..360.0), rng.random_range(0.0..3.0));
            out.push(entry(format!("x{k}-b{i:02}"), name, vec![], at, Granularity::Building, 0, Some(city)));
        }
        for i in 0..12 {
            let at = destination(center, rng.random_range(0.0..360.0), reach * rng.random::<f64>().sqrt());
            let base = names.fresh(rng);
            let name = if rng.random_bool(0.5) {
                format!("{} {base}", OTHER_PREFIX.choose(rng).unwrap())
            } else {
                format!("{base} {}", OTHER_SUFFIX.choose(rng).unwrap())
            };
            out.push(entry(format!("x{k}-o{i:02}"), name, vec![], at, Granularity::Other, 0, Some(spot.region.into())));
        }
        for i in 0..4 {
            let at = destination(center, rng.random_range(0.0..360.0), rng.random_range(60.0..reach * 1.5));
            let parent = out.iter().find(|e| e.place_id == spot.region).unwrap().admin_parent.clone();
            let name = names.fresh(rng);
            out.push(entry(format!("x{k}-r{i}"), name, vec![], at, Granularity::Region, log_uniform(rng, 2e5, 4e6), parent));
        }
    }

    // the rest of the world: synthetic countries, regions, cities, buildings
    let mut c = 0;
    'fill: while out.len() < GAZETTEER_SIZE {
        let center = LatLon::new(rng.random_range(-55.0..65.0), rng.random_range(-180.0..180.0));
        let country = format!("g{c:02}");
        c += 1;
        out.push(entry(country.clone(), names.fresh(rng), vec![], center, Granularity::Country, log_uniform(rng, 1e6, 2e8), None));
        for r in 0..rng.random_range(3..8) {
            if out.len() >= GAZETTEER_SIZE {
                break 'fill;
            }
            let rc = destination(center, rng.random_range(0.0..360.0), rng.random_range(20.0..600.0));
            let region = format!("{country}-r{r}");
            out.push(entry(region.clone(), names.fresh(rng), vec![], rc, Granularity::Region, log_uniform(rng, 1e5, 2e7), Some(country.clone())));
            for ci in 0..rng.random_range(8..25) {
                if out.len() >= GAZETTEER_SIZE {
                    break 'fill;
                }
                let at = destination(rc, rng.random_range(0.0..360.0), rng.random_range(0.0..150.0));
                // a few names repeat across the world, so resolution has to choose
                let name = if !city_names.is_empty() && rng.random_bool(0.04) {
                    city_names.choose(rng).unwrap().clone()
                } else {
                    names.fresh(rng)
                };
                city_names.push(name.clone());
                let city = format!("{region}-c{ci:02}");
                let alias = if rng.random_bool(0.05) { vec![format!("{name} City")] } else { vec![] };
                out.push(entry(city.clone(), name, alias, at, Granularity::City, log_uniform(rng, 1e3, 5e6), Some(region.clone())));
                if rng.random_bool(0.25) && out.len() < GAZETTEER_SIZE {
                    let bname = format!("{} {}", names.fresh(rng), BUILDING_SUFFIX.choose(rng).unwrap());
                    out.push(entry(format!("{city}-b"), bname, vec![], at, Granularity::Building, 0, Some(city.clone())));
                }
                if rng.random_bool(0.05) && out.len() < GAZETTEER_SIZE {
                    let oname = format!("{} {}", OTHER_PREFIX.choose(rng).unwrap(), names.fresh(rng));
                    out.push(entry(format!("{city}-o"), oname, vec![], at, Granularity::Other, 0, Some(region.clone())));
                }
            }
        }
    }
    out
}

/// Up to `k` distinct places within `radius` km of the epicenter.
fn mentions(rng: &mut impl Rng, near: &[&GazetteerEntry], k: usize) -> Vec<Mention> {
    let mut out: Vec<Mention> = Vec::new();
    for _ in 0..k {
        let e = near.choose(rng).unwrap();
        if out.iter().any(|m| m.place_id == e.place_id) {
            continue;
        }
        let surface = if !e.aliases.is_empty() && rng.random_bool(0.2) {
            e.aliases.choose(rng).unwrap().clone()
        } else {
            e.name.clone()
        };
        out.push(Mention { place_id: e.place_id.clone(), surface });
    }
    out
}

fn random_damage(rng: &mut impl Rng, p_present: f64, p_absent: f64) -> DamageLabel {
    let x: f64 = rng.random();
    if x < p_present {
        DamageLabel::Present
    } else if x < p_present + p_absent {
        DamageLabel::AbsentReported
    } else {
        DamageLabel::NoInfo
    }
}

const FLIP: f64 = 0.06;

fn flipped(rng: &mut impl Rng, label: bool) -> bool {
    label ^ rng.random_bool(FLIP)
}

fn jsonl<T: Serialize>(rows: &[T]) -> String {
    rows.iter().map(|r| serde_json::to_string(r).unwrap() + "\n").collect()
}

#[derive(Serialize)]
struct WitnessRow {
    text: String,
    witness: bool,
    kind: PostKind,
}

fn main() {
    let data = Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
    fs::create_dir_all(&data).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);

    let entries = gazetteer(&mut rng);
    assert_eq!(entries.len(), GAZETTEER_SIZE);
    let gaz = Gazetteer::from_entries(entries).expect("generated gazetteer is valid");
    let vocab: BTreeSet<String> = vocabulary().into_iter().collect();
    for e in gaz.entries() {
        for f in e.surface_forms() {
            assert!(!vocab.contains(&NormalizedText::key(f)), "{f} collides with template vocabulary");
        }
    }
    fs::write(data.join("gazetteer.tsv"), gaz.to_tsv()).unwrap();

    let spots = events();
    let pools: Vec<Vec<&GazetteerEntry>> = spots
        .iter()
        .map(|s| gaz.within_radius(s.event.epicenter(), 200.0))
        .collect();
    let parser = Geoparser::new(&gaz);
    let pick_pool = |rng: &mut ChaCha8Rng| rng.random_range(0..spots.len());

    // relevance corpus
    let mut rel = Vec::new();
    for _ in 0..4000 {
        let kind = *[PostKind::FirstHand, PostKind::SecondHand, PostKind::OffTopic, PostKind::Chatter]
            .choose_weighted(&mut rng, |k| match k {
                PostKind::FirstHand => 0.3,
                PostKind::SecondHand => 0.25,
                PostKind::OffTopic => 0.35,
                PostKind::Chatter => 0.1,
            })
            .unwrap();
        let p = pick_pool(&mut rng);
        let k = rng.random_range(0..3);
        let m = mentions(&mut rng, &pools[p], k);
        let dmg = random_damage(&mut rng, 0.15, 0.2);
        let noise = rng.random_range(0.0..0.15);
        let r = render_post(&mut rng, kind, dmg, &m, spots[p].event.magnitude, noise);
        let label = flipped(&mut rng, r.truth.relevant);
        rel.push(Example { text: r.text, label, task: Task::Relevance });
    }
    fs::write(data.join("relevance.jsonl"), jsonl(&rel)).unwrap();

    // damage corpus: one row per task for every text
    let mut dmg_rows = Vec::new();
    for _ in 0..2500 {
        let p = pick_pool(&mut rng);
        let k = rng.random_range(0..3);
        let m = mentions(&mut rng, &pools[p], k);
        let noise = rng.random_range(0.0..0.15);
        let r = if rng.random_bool(0.6) {
            let kind = if rng.random_bool(0.6) { PostKind::FirstHand } else { PostKind::SecondHand };
            let d = random_damage(&mut rng, 0.33, 0.33);
            render_post(&mut rng, kind, d, &m, spots[p].event.magnitude, noise)
        } else {
            let kind = if rng.random_bool(0.6) { QuestionKind::AskDamage } else { QuestionKind::AskGeo };
            let d = if rng.random_bool(0.4) { DamageLabel::Present } else { DamageLabel::AbsentReported };
            let collaborative = rng.random_bool(0.8);
            render_reply(&mut rng, kind, collaborative, true, d, &m, noise)
        };
        let present = r.truth.damage == DamageLabel::Present;
        let info = r.truth.damage != DamageLabel::NoInfo;
        let l1 = flipped(&mut rng, present);
        let l2 = flipped(&mut rng, info);
        dmg_rows.push(Example { text: r.text.clone(), label: l1, task: Task::DamagePresence });
        dmg_rows.push(Example { text: r.text, label: l2, task: Task::DamageInfo });
    }
    fs::write(data.join("damage.jsonl"), jsonl(&dmg_rows)).unwrap();

    // witness corpus, centroid and scorer
    let mut witness = Vec::new();
    for i in 0..2000 {
        let kind = match i % 4 {
            0 | 1 => PostKind::FirstHand,
            2 => PostKind::SecondHand,
            _ => PostKind::OffTopic,
        };
        let p = pick_pool(&mut rng);
        let k = rng.random_range(0..3);
        let m = mentions(&mut rng, &pools[p], k);
        let d = random_damage(&mut rng, 0.1, 0.2);
        let noise = rng.random_range(0.0..0.15);
        let r = render_post(&mut rng, kind, d, &m, spots[p].event.magnitude, noise);
        witness.push(WitnessRow { text: r.text, witness: kind == PostKind::FirstHand, kind });
    }
    fs::write(data.join("witness.jsonl"), jsonl(&witness)).unwrap();
    let half = witness.len() / 2;
    let center = centroid(witness[..half].iter().filter(|w| w.witness).map(|w| w.text.as_str()));
    fs::write(data.join("witness_centroid.json"), centroid_to_json(&center)).unwrap();
    let extractor = FeatureExtractor::new(&parser, center);
    let train: Vec<_> = witness[half..]
        .iter()
        .map(|w| {
            let geo = rng.random_bool(0.02);
            let age = rng.random_range(1..4000);
            (extractor.extract_text(&w.text, geo, Some(age)), w.witness)
        })
        .collect();
    let scorer = train_scorer(&train, 30, 1e-3, SEED).unwrap();
    fs::write(data.join("witness_weights.json"), scorer.to_json() + "\n").unwrap();

    let feed: Vec<EarthquakeEvent> = spots.iter().map(|s| s.event.clone()).collect();
    fs::write(data.join("feed.json"), to_usgs_feed(&feed)).unwrap();

    let near = pools.iter().map(|p| p.len()).collect::<Vec<_>>();
    let far = spots
        .iter()
        .map(|s| gaz.entries().iter().filter(|e| haversine_km(e.location(), s.event.epicenter()) > 200.0).count())
        .collect::<Vec<_>>();
    println!(
        "wrote {} gazetteer entries (near events {near:?}, elsewhere {far:?}), {} relevance rows, {} damage rows, {} witness rows",
        gaz.len(),
        rel.len(),
        dmg_rows.len(),
        witness.len()
    );
}
