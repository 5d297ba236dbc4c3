//! Labeled template bank used to render simulated posts and replies.
//!
//! Every rendered text comes with the ground truth fixed by the template it was
//! built from. Place names are inserted as protected segments so that token
//! noise never garbles a mention.

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::types::{DamageLabel, PlaceId, QuestionKind};

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruth {
    pub relevant: bool,
    pub witness: bool,
    pub damage: DamageLabel,
    pub mentioned_place_ids: Vec<PlaceId>,
    /// Only set on replies.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub collaborative: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PostKind {
    /// Witness describing what they experienced.
    FirstHand,
    /// On-topic but second-hand: news, prayers, relayed reports.
    SecondHand,
    /// Uses an earthquake keyword in an unrelated sense.
    OffTopic,
    /// Ordinary traffic with no keyword.
    Chatter,
}

impl PostKind {
    pub fn is_relevant(self) -> bool {
        matches!(self, PostKind::FirstHand | PostKind::SecondHand)
    }
}

/// A place to mention: its id and the surface form to print.
#[derive(Debug, Clone, PartialEq)]
pub struct Mention {
    pub place_id: PlaceId,
    pub surface: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rendered {
    pub text: String,
    pub truth: GroundTruth,
}

const FIRST_HAND_OPENERS: &[&str] = &[
    "I just felt a strong earthquake",
    "wow we felt the quake",
    "my whole house is shaking, earthquake",
    "I felt the tremor",
    "we felt it here, big quake",
    "earthquake!! I felt it",
    "I was sleeping and the quake woke me up",
    "my bed moved, definitely an earthquake",
    "felt a strong quake",
    "that earthquake shook my apartment",
    "my desk was shaking, earthquake",
    "the ground is shaking here",
    "everything is moving, my windows rattled",
];

const SECOND_HAND_OPENERS: &[&str] = &[
    "earthquake reported",
    "M{mag} earthquake hits",
    "breaking: strong quake strikes",
    "praying for everyone affected by the earthquake",
    "thoughts with the people after the quake",
    "news says a tremor was recorded",
    "magnitude {mag} earthquake recorded",
    "hope everyone is safe after the earthquake",
    "my cousin says the earthquake was felt",
    "usgs: earthquake of magnitude {mag}",
    "stay safe everyone, earthquake alert",
];

const OFF_TOPIC: &[&str] = &[
    "huge earthquake sale at the store this weekend",
    "this new album is an earthquake",
    "political earthquake in parliament today",
    "my stomach had a tremor after that coffee",
    "quake champions tournament tonight",
    "the team caused a quake in the league",
    "earthquake cake recipe is amazing",
    "that goal was a quake for the fans",
    "my voice had a tremor during the speech",
    "the earthquake movie on tv tonight is so bad",
    "new quake game mod released",
    "an earthquake of emotions watching this show",
    "market earthquake as shares fall",
    "earthquake burger challenge at the diner",
];

const CHATTER: &[&str] = &[
    "stuck in traffic again",
    "lunch with friends",
    "watching the game tonight",
    "new phone who dis",
    "coffee time",
    "cannot sleep",
    "happy birthday to my sister",
    "rainy day today",
    "gym then pizza",
    "best tacos in town",
];

const FIRST_HAND_PRESENT: &[&str] = &[
    "things fell off the shelves and broke",
    "cracks in our walls",
    "buildings collapsed on my street",
    "people hurt in my building",
    "the roof came down",
    "our windows shattered",
    "our house is damaged",
    "the bridge collapsed",
    "my neighbors are injured",
];

const SECOND_HAND_PRESENT: &[&str] = &[
    "reports of collapsed buildings",
    "many people injured says the news",
    "damage reported to buildings",
    "rescue teams searching the rubble",
    "houses destroyed according to reports",
];

const FIRST_HAND_ABSENT: &[&str] = &[
    "no damage here",
    "we are all fine, no damage here",
    "everyone is ok, nothing broken",
    "no damage at all, just scared",
    "all good here, nothing fell",
];

const SECOND_HAND_ABSENT: &[&str] = &[
    "no damage reported so far",
    "officials say no injuries",
    "no damage reported by police",
];

const EMOTIVE: &[&str] = &["so scary!", "still shaking!!", "that was long!", "scary!!", "omg!", "wow!"];

const CALM: &[&str] = &["stay safe", "more updates soon", "details to follow", "via local news"];

const REPLY_DAMAGE_PRESENT: &[&str] = &[
    "yes, {damage}",
    "{damage}, please send help",
    "it was bad here, {damage}",
    "yes we have damage, {damage}",
];

const REPLY_DAMAGE_ABSENT: &[&str] = &[
    "no damage here, we are fine",
    "all good, nothing broken",
    "we are ok, no damage at all, thanks",
    "no injuries here, just a scare",
    "everyone is fine, no damage",
];

const REPLY_GEO: &[&str] = &["I was", "we felt it", "I am", "felt it", "I live", "we were"];

const REPLY_UNHELPFUL: &[&str] = &[
    "who are you?",
    "no idea",
    "not sure, sorry",
    "why do you ask?",
    "thanks for asking",
    "lol",
    "ok",
    "leave me alone",
];

const PREPOSITIONS: &[&str] = &["in", "near", "at", "around", "from"];

/// Filler words substituted by token noise.
pub const NOISE_WORDS: &[&str] = &[
    "lol", "omg", "the", "really", "just", "now", "wow", "ok", "today", "so", "like", "people",
    "here", "this", "that", "news", "feel", "very", "what", "all",
];

pub const DEFAULT_ASK_DAMAGE: &str =
    "Hi @{user}, we saw your post about the earthquake. Did you notice any damage to buildings or injured people near you?";
pub const DEFAULT_ASK_GEO: &str =
    "Hi @{user}, we saw your post about the earthquake. Could you tell us where you were when you felt it?";

/// Every template word, lowercased. Gazetteer generation avoids these so that
/// template text never produces spurious place tags.
pub fn vocabulary() -> Vec<String> {
    let banks: &[&[&str]] = &[
        FIRST_HAND_OPENERS,
        SECOND_HAND_OPENERS,
        OFF_TOPIC,
        CHATTER,
        FIRST_HAND_PRESENT,
        SECOND_HAND_PRESENT,
        FIRST_HAND_ABSENT,
        SECOND_HAND_ABSENT,
        EMOTIVE,
        CALM,
        REPLY_DAMAGE_PRESENT,
        REPLY_DAMAGE_ABSENT,
        REPLY_GEO,
        REPLY_UNHELPFUL,
        PREPOSITIONS,
        NOISE_WORDS,
        &[DEFAULT_ASK_DAMAGE, DEFAULT_ASK_GEO, "and"],
    ];
    let mut words: Vec<String> = banks
        .iter()
        .flat_map(|b| b.iter())
        .flat_map(|t| crate::classify::tokenize(t))
        .collect();
    words.sort();
    words.dedup();
    words
}

#[derive(Default)]
struct Builder {
    segments: Vec<(String, bool)>,
}

impl Builder {
    fn text(&mut self, s: impl Into<String>) -> &mut Self {
        self.segments.push((s.into(), false));
        self
    }

    fn place(&mut self, s: &str) -> &mut Self {
        self.segments.push((s.to_string(), true));
        self
    }

    fn places(&mut self, rng: &mut impl Rng, mentions: &[Mention]) -> &mut Self {
        if mentions.is_empty() {
            return self;
        }
        self.text(format!(" {} ", PREPOSITIONS.choose(rng).unwrap()));
        for (i, m) in mentions.iter().enumerate() {
            if i > 0 {
                self.text(if i + 1 == mentions.len() { " and " } else { ", " });
            }
            self.place(&m.surface);
        }
        self
    }

    /// Applies token noise to unprotected segments: each word is replaced by a
    /// filler word or dropped with total probability `noise`.
    fn finish(&self, rng: &mut impl Rng, noise: f64) -> String {
        let mut out = String::new();
        for (seg, protected) in &self.segments {
            if *protected || noise <= 0.0 {
                out.push_str(seg);
                continue;
            }
            let mut first = true;
            for word in seg.split(' ') {
                if !first {
                    out.push(' ');
                }
                first = false;
                if word.is_empty() || !rng.random_bool(noise.min(1.0)) {
                    out.push_str(word);
                } else if rng.random_bool(0.7) {
                    out.push_str(NOISE_WORDS.choose(rng).unwrap());
                }
            }
        }
        out.split_whitespace().collect::<Vec<_>>().join(" ")
    }
}

fn pick<'a>(rng: &mut impl Rng, bank: &[&'a str]) -> &'a str {
    bank.choose(rng).expect("template banks are non-empty")
}

fn ids(mentions: &[Mention]) -> Vec<PlaceId> {
    mentions.iter().map(|m| m.place_id.clone()).collect()
}

/// Renders a spontaneous post. `damage` is only honored for relevant kinds.
pub fn render_post(
    rng: &mut impl Rng,
    kind: PostKind,
    damage: DamageLabel,
    mentions: &[Mention],
    magnitude: f64,
    noise: f64,
) -> Rendered {
    let mut b = Builder::default();
    let damage = if kind.is_relevant() { damage } else { DamageLabel::NoInfo };
    match kind {
        PostKind::FirstHand | PostKind::SecondHand => {
            let first = kind == PostKind::FirstHand;
            let opener = pick(rng, if first { FIRST_HAND_OPENERS } else { SECOND_HAND_OPENERS });
            b.text(opener.replace("{mag}", &format!("{magnitude:.1}")));
            b.places(rng, mentions);
            let detail = match (damage, first) {
                (DamageLabel::Present, true) => Some(pick(rng, FIRST_HAND_PRESENT)),
                (DamageLabel::Present, false) => Some(pick(rng, SECOND_HAND_PRESENT)),
                (DamageLabel::AbsentReported, true) => Some(pick(rng, FIRST_HAND_ABSENT)),
                (DamageLabel::AbsentReported, false) => Some(pick(rng, SECOND_HAND_ABSENT)),
                (DamageLabel::NoInfo, _) => None,
            };
            if let Some(d) = detail {
                b.text(format!(", {d}"));
            }
            let tail = if first { pick(rng, EMOTIVE) } else { pick(rng, CALM) };
            if rng.random_bool(0.6) {
                b.text(format!(" {tail}"));
            }
        }
        PostKind::OffTopic => {
            b.text(pick(rng, OFF_TOPIC));
            b.places(rng, mentions);
        }
        PostKind::Chatter => {
            b.text(pick(rng, CHATTER));
            b.places(rng, mentions);
        }
    }
    Rendered {
        text: b.finish(rng, noise),
        truth: GroundTruth {
            relevant: kind.is_relevant(),
            witness: kind == PostKind::FirstHand,
            damage,
            mentioned_place_ids: ids(mentions),
            collaborative: None,
        },
    }
}

/// Renders the answer to a targeted question. Collaborative damage replies carry
/// `damage` (present or absent); collaborative geo replies carry `mentions`.
/// Unhelpful replies carry neither.
pub fn render_reply(
    rng: &mut impl Rng,
    kind: QuestionKind,
    collaborative: bool,
    witness: bool,
    damage: DamageLabel,
    mentions: &[Mention],
    noise: f64,
) -> Rendered {
    let mut b = Builder::default();
    let (damage, mentions) = match (collaborative, kind) {
        (false, _) => {
            b.text(pick(rng, REPLY_UNHELPFUL));
            (DamageLabel::NoInfo, &[][..])
        }
        (true, QuestionKind::AskDamage) => {
            if damage == DamageLabel::Present {
                let t = pick(rng, REPLY_DAMAGE_PRESENT);
                b.text(t.replace("{damage}", pick(rng, FIRST_HAND_PRESENT)));
                b.places(rng, mentions);
                (DamageLabel::Present, mentions)
            } else {
                b.text(pick(rng, REPLY_DAMAGE_ABSENT));
                b.places(rng, mentions);
                (DamageLabel::AbsentReported, mentions)
            }
        }
        (true, QuestionKind::AskGeo) => {
            b.text(pick(rng, REPLY_GEO));
            b.places(rng, mentions);
            (DamageLabel::NoInfo, mentions)
        }
    };
    Rendered {
        text: b.finish(rng, noise),
        truth: GroundTruth {
            relevant: collaborative,
            witness,
            damage,
            mentioned_place_ids: ids(mentions),
            collaborative: Some(collaborative),
        },
    }
}

pub fn render_question(template: &str, user_id: &str) -> String {
    template.replace("{user}", user_id)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{substream, Stream};

    fn kathmandu() -> Vec<Mention> {
        vec![Mention { place_id: "np-ktm".into(), surface: "Kathmandu".into() }]
    }

    #[test]
    fn witness_post_truth() {
        let mut rng = substream(1, Stream::Text);
        let r = render_post(&mut rng, PostKind::FirstHand, DamageLabel::Present, &kathmandu(), 7.5, 0.0);
        assert!(r.text.contains("Kathmandu"));
        assert_eq!(
            r.truth,
            GroundTruth {
                relevant: true,
                witness: true,
                damage: DamageLabel::Present,
                mentioned_place_ids: vec!["np-ktm".into()],
                collaborative: None
            }
        );
    }

    #[test]
    fn off_topic_is_irrelevant_and_damage_free() {
        let mut rng = substream(1, Stream::Text);
        let r = render_post(&mut rng, PostKind::OffTopic, DamageLabel::Present, &[], 3.0, 0.0);
        assert!(!r.truth.relevant);
        assert_eq!(r.truth.damage, DamageLabel::NoInfo);
    }

    #[test]
    fn noise_never_touches_places() {
        let mut rng = substream(2, Stream::Text);
        for _ in 0..200 {
            let r = render_post(&mut rng, PostKind::SecondHand, DamageLabel::NoInfo, &kathmandu(), 7.5, 1.0);
            assert!(r.text.contains("Kathmandu"), "{}", r.text);
        }
    }

    #[test]
    fn geo_reply_mentions_places_when_collaborative() {
        let mut rng = substream(3, Stream::Text);
        let r = render_reply(&mut rng, QuestionKind::AskGeo, true, true, DamageLabel::NoInfo, &kathmandu(), 0.0);
        assert_eq!(r.truth.mentioned_place_ids, ["np-ktm"]);
        assert_eq!(r.truth.collaborative, Some(true));
        let r = render_reply(&mut rng, QuestionKind::AskGeo, false, true, DamageLabel::NoInfo, &kathmandu(), 0.0);
        assert!(r.truth.mentioned_place_ids.is_empty());
        assert!(!r.text.contains("Kathmandu"));
    }

    #[test]
    fn vocabulary_is_lowercase_and_sorted() {
        let v = vocabulary();
        assert!(v.windows(2).all(|w| w[0] < w[1]));
        assert!(v.iter().all(|w| w.chars().all(|c| !c.is_uppercase())));
        assert!(v.contains(&"earthquake".to_string()));
    }
}
