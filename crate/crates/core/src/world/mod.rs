//! Discrete-event simulation of a social-network population around an earthquake.
//!
//! The world owns the user population, a time-ordered queue of pending messages
//! and three independent random streams (posting, text, replies). Spontaneous
//! posts are scheduled by [`World::simulate_stream`]; targeted questions are
//! answered through [`World::deliver_question`], which schedules the reply on the
//! same queue. All output is a pure function of the parameters and the seed.

pub mod queue;
pub mod templates;

use std::collections::HashMap;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use queue::EventQueue;
pub use templates::{GroundTruth, Mention, PostKind};

use crate::classify::Textual;
use crate::dispatch::Question;
use crate::event_feed::EarthquakeEvent;
use crate::geo::{destination, haversine_km, LatLon};
use crate::geoparse::{Gazetteer, GazetteerEntry};
use crate::rng::{substream, Stream};
use crate::types::{DamageLabel, Granularity, MsgId, QuestionKind, Timestamp, UserId, MS_PER_MINUTE};

#[derive(Debug, Error, PartialEq)]
pub enum WorldError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("cannot deliver question {question_id}: unknown user {user_id}")]
    UnknownUser { question_id: String, user_id: UserId },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeltRadiusParams {
    /// Radius in km at magnitude zero.
    pub r0: f64,
    /// Growth per magnitude unit, in log10 km.
    pub c: f64,
}

impl Default for FeltRadiusParams {
    fn default() -> Self {
        FeltRadiusParams { r0: 0.5, c: 0.45 }
    }
}

/// `r0 * 10^(c * M)` kilometers.
pub fn felt_radius(magnitude: f64, params: FeltRadiusParams) -> Result<f64, WorldError> {
    if !(params.r0 > 0.0 && params.c > 0.0) || !params.r0.is_finite() || !params.c.is_finite() {
        return Err(WorldError::Config(format!(
            "felt radius needs r0 > 0 and c > 0, got r0={} c={}",
            params.r0, params.c
        )));
    }
    if !(magnitude >= 0.0) {
        return Err(WorldError::Config(format!("magnitude {magnitude} must be >= 0")));
    }
    Ok(params.r0 * 10f64.powf(params.c * magnitude))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Geography {
    /// Share of the population living inside the felt area.
    pub p_local: f64,
    /// Everyone else lives in the annulus between the felt radius and this radius.
    pub outer_radius_km: f64,
}

impl Default for Geography {
    fn default() -> Self {
        Geography { p_local: 0.3, outer_radius_km: 500.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Probabilities {
    /// A user posts at least once during the collection window.
    pub p_post: f64,
    #[serde(default = "default_p_geotag")]
    pub p_geotag: f64,
    pub p_reply: f64,
    pub p_collaborative: f64,
    /// A post is about the earthquake (first-hand for witnesses, second-hand otherwise).
    pub p_on_topic: f64,
    /// Share of off-topic posts that carry no earthquake keyword at all.
    #[serde(default = "default_p_chatter")]
    pub p_chatter: f64,
}

fn default_p_geotag() -> f64 {
    0.02
}

fn default_p_chatter() -> f64 {
    0.1
}

impl Probabilities {
    pub fn validate(&self) -> Result<(), WorldError> {
        for (name, p) in [
            ("p_post", self.p_post),
            ("p_geotag", self.p_geotag),
            ("p_reply", self.p_reply),
            ("p_collaborative", self.p_collaborative),
            ("p_on_topic", self.p_on_topic),
            ("p_chatter", self.p_chatter),
        ] {
            check_probability(name, p)?;
        }
        Ok(())
    }
}

fn check_probability(name: &str, p: f64) -> Result<(), WorldError> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(WorldError::Config(format!("{name}={p} is not a probability")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Posting {
    /// Length of the opportunistic collection window.
    pub window_min: f64,
    /// Mean of the (truncated) exponential delay between origin time and a post.
    pub decay_min: f64,
    /// Posters write `1 + Poisson(extra_posts_mean)` messages.
    pub extra_posts_mean: f64,
}

impl Default for Posting {
    fn default() -> Self {
        Posting { window_min: 360.0, decay_min: 90.0, extra_posts_mean: 0.1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TextParams {
    /// Per-token probability of substitution or deletion.
    pub noise: f64,
    /// Mean place mentions per spontaneous post.
    pub place_mean: f64,
    /// Places within this distance of the epicenter (plus their admin parents)
    /// are the ones users talk about.
    pub place_radius_km: f64,
    /// Probability of printing an alias instead of the canonical name.
    pub alias_prob: f64,
}

impl Default for TextParams {
    fn default() -> Self {
        TextParams { noise: 0.05, place_mean: 0.5, place_radius_km: 150.0, alias_prob: 0.2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DamageParams {
    pub p_witness_present: f64,
    pub p_witness_absent: f64,
    pub p_secondhand_present: f64,
    pub p_secondhand_absent: f64,
}

impl Default for DamageParams {
    fn default() -> Self {
        DamageParams {
            p_witness_present: 0.05,
            p_witness_absent: 0.25,
            p_secondhand_present: 0.03,
            p_secondhand_absent: 0.05,
        }
    }
}

/// Log-normal reply latency, parameters of the underlying normal in ln(minutes).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatencyParams {
    pub mu_log: f64,
    pub sigma_log: f64,
}

impl LatencyParams {
    pub fn mean_minutes(&self) -> f64 {
        (self.mu_log + self.sigma_log * self.sigma_log / 2.0).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GranularityWeights {
    pub building: f64,
    pub city: f64,
    pub region: f64,
    pub country: f64,
    pub other: f64,
}

impl GranularityWeights {
    pub fn weight(&self, g: Granularity) -> f64 {
        match g {
            Granularity::Building => self.building,
            Granularity::City => self.city,
            Granularity::Region => self.region,
            Granularity::Country => self.country,
            Granularity::Other => self.other,
        }
    }

    fn validate(&self) -> Result<(), WorldError> {
        let all = Granularity::ALL.map(|g| self.weight(g));
        if all.iter().any(|w| !(*w >= 0.0 && w.is_finite())) || all.iter().sum::<f64>() <= 0.0 {
            return Err(WorldError::Config("granularity weights must be >= 0 and not all zero".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Enrichment {
    /// Collaborative location replies carry this many times the mean place
    /// mentions of a spontaneous post.
    pub place_density_factor: f64,
    pub spontaneous_granularity: GranularityWeights,
    pub reply_granularity: GranularityWeights,
}

impl Default for Enrichment {
    fn default() -> Self {
        Enrichment {
            place_density_factor: 3.0,
            spontaneous_granularity: GranularityWeights {
                building: 0.05,
                city: 0.5,
                region: 0.2,
                country: 0.15,
                other: 0.1,
            },
            reply_granularity: GranularityWeights {
                building: 0.2,
                city: 0.5,
                region: 0.15,
                country: 0.05,
                other: 0.1,
            },
        }
    }
}

/// Everything the simulator needs from a scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldParams {
    pub population: usize,
    pub felt_radius: FeltRadiusParams,
    pub geography: Geography,
    pub probabilities: Probabilities,
    pub posting: Posting,
    pub text: TextParams,
    pub damage: DamageParams,
    pub latency: LatencyParams,
    pub enrichment: Enrichment,
}

impl WorldParams {
    pub fn validate(&self) -> Result<(), WorldError> {
        self.probabilities.validate()?;
        check_probability("p_local", self.geography.p_local)?;
        check_probability("noise", self.text.noise)?;
        check_probability("alias_prob", self.text.alias_prob)?;
        let d = &self.damage;
        for (n, p) in [
            ("p_witness_present", d.p_witness_present),
            ("p_witness_absent", d.p_witness_absent),
            ("p_secondhand_present", d.p_secondhand_present),
            ("p_secondhand_absent", d.p_secondhand_absent),
        ] {
            check_probability(n, p)?;
        }
        if d.p_witness_present + d.p_witness_absent > 1.0
            || d.p_secondhand_present + d.p_secondhand_absent > 1.0
        {
            return Err(WorldError::Config("damage probabilities sum above 1".into()));
        }
        let positive = [
            ("outer_radius_km", self.geography.outer_radius_km),
            ("window_min", self.posting.window_min),
            ("decay_min", self.posting.decay_min),
            ("place_radius_km", self.text.place_radius_km),
            ("sigma_log", self.latency.sigma_log),
        ];
        for (n, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(WorldError::Config(format!("{n}={v} must be positive")));
            }
        }
        let non_negative = [
            ("extra_posts_mean", self.posting.extra_posts_mean),
            ("place_mean", self.text.place_mean),
            ("place_density_factor", self.enrichment.place_density_factor),
        ];
        for (n, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(WorldError::Config(format!("{n}={v} must be >= 0")));
            }
        }
        if !self.latency.mu_log.is_finite() {
            return Err(WorldError::Config("mu_log must be finite".into()));
        }
        self.enrichment.spontaneous_granularity.validate()?;
        self.enrichment.reply_granularity.validate()?;
        felt_radius(0.0, self.felt_radius).map(|_| ())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserProfile {
    pub user_id: UserId,
    pub home_lat: f64,
    pub home_lon: f64,
    pub is_witness: bool,
    pub geotag_enabled: bool,
    pub collaboration_prob: f64,
    pub reply_prob: f64,
    pub account_age_days: u32,
}

impl UserProfile {
    pub fn home(&self) -> LatLon {
        LatLon::new(self.home_lat, self.home_lon)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawMessage {
    pub msg_id: MsgId,
    pub author_id: UserId,
    pub ts: Timestamp,
    pub text: String,
    pub geo: Option<LatLon>,
    pub in_reply_to: Option<MsgId>,
    pub truth: GroundTruth,
}

impl Textual for RawMessage {
    fn text(&self) -> &str {
        &self.text
    }
}

/// A reply the world has scheduled in answer to a question.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduledReply {
    pub msg_id: MsgId,
    pub question_id: String,
    pub due: Timestamp,
    pub delta_t_ms: i64,
}

pub fn generate_population(
    params: &WorldParams,
    event: &EarthquakeEvent,
    seed: u64,
) -> Result<Vec<UserProfile>, WorldError> {
    params.validate()?;
    let radius = felt_radius(event.magnitude, params.felt_radius)?;
    let outer = params.geography.outer_radius_km.max(radius);
    let epicenter = event.epicenter();
    let mut rng = substream(seed, Stream::Population);
    let width = digits(params.population);
    let users = (0..params.population)
        .map(|i| {
            let local = rng.random_bool(params.geography.p_local);
            let u: f64 = rng.random();
            // uniform over area
            let distance = if local {
                radius * u.sqrt()
            } else {
                (radius * radius + u * (outer * outer - radius * radius)).sqrt()
            };
            let bearing = rng.random_range(0.0..360.0);
            let home = destination(epicenter, bearing, distance);
            UserProfile {
                user_id: format!("u{i:0width$}"),
                home_lat: home.lat,
                home_lon: home.lon,
                is_witness: haversine_km(home, epicenter) <= radius,
                geotag_enabled: rng.random_bool(params.probabilities.p_geotag),
                collaboration_prob: params.probabilities.p_collaborative,
                reply_prob: params.probabilities.p_reply,
                account_age_days: rng.random_range(1..=4000),
            }
        })
        .collect();
    Ok(users)
}

fn digits(n: usize) -> usize {
    n.max(1).to_string().len()
}

/// Places users of one scenario talk about, bucketed by granularity.
struct PlacePool<'g> {
    by_level: [Vec<&'g GazetteerEntry>; 5],
}

impl<'g> PlacePool<'g> {
    fn new(gazetteer: &'g Gazetteer, center: LatLon, radius_km: f64) -> Self {
        let mut ids = std::collections::BTreeSet::new();
        for e in gazetteer.within_radius(center, radius_km) {
            ids.insert(e.place_id.as_str());
            ids.extend(gazetteer.ancestors(&e.place_id).iter().map(|a| a.place_id.as_str()));
        }
        let mut by_level: [Vec<&GazetteerEntry>; 5] = Default::default();
        for id in ids {
            let e = gazetteer.get(id).expect("ids come from the gazetteer");
            by_level[e.granularity as usize].push(e);
        }
        PlacePool { by_level }
    }

    fn is_empty(&self) -> bool {
        self.by_level.iter().all(Vec::is_empty)
    }

    /// Up to `k` distinct places; granularity drawn by `weights` among non-empty levels.
    fn sample(
        &self,
        rng: &mut impl Rng,
        weights: &GranularityWeights,
        k: usize,
        alias_prob: f64,
    ) -> Vec<Mention> {
        let levels: Vec<(usize, f64)> = Granularity::ALL
            .iter()
            .map(|&g| (g as usize, weights.weight(g)))
            .filter(|&(i, w)| w > 0.0 && !self.by_level[i].is_empty())
            .collect();
        let total: f64 = levels.iter().map(|l| l.1).sum();
        let mut out: Vec<Mention> = Vec::with_capacity(k);
        if levels.is_empty() {
            return out;
        }
        let mut attempts = 0;
        while out.len() < k && attempts < 20 * k {
            attempts += 1;
            let mut x = rng.random::<f64>() * total;
            let mut level = levels[levels.len() - 1].0;
            for &(i, w) in &levels {
                if x < w {
                    level = i;
                    break;
                }
                x -= w;
            }
            let entry = self.by_level[level].choose(rng).expect("level is non-empty");
            if out.iter().any(|m| m.place_id == entry.place_id) {
                continue;
            }
            let surface = if !entry.aliases.is_empty() && rng.random_bool(alias_prob) {
                entry.aliases.choose(rng).unwrap().clone()
            } else {
                entry.name.clone()
            };
            out.push(Mention { place_id: entry.place_id.clone(), surface });
        }
        out
    }
}

fn poisson(rng: &mut impl Rng, mean: f64) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).map(|d| d.sample(rng) as usize).unwrap_or(0)
}

enum Pending {
    Post(RawMessage),
    Reply(RawMessage),
}

pub struct World<'g> {
    event: EarthquakeEvent,
    params: WorldParams,
    users: Vec<UserProfile>,
    user_index: HashMap<UserId, usize>,
    places: PlacePool<'g>,
    queue: EventQueue<Pending>,
    posting_rng: ChaCha8Rng,
    text_rng: ChaCha8Rng,
    reply_rng: ChaCha8Rng,
    next_post: u64,
    latency: LogNormal<f64>,
    felt_radius_km: f64,
}

impl<'g> World<'g> {
    pub fn new(
        params: WorldParams,
        event: EarthquakeEvent,
        gazetteer: &'g Gazetteer,
        seed: u64,
    ) -> Result<Self, WorldError> {
        let users = generate_population(&params, &event, seed)?;
        let user_index = users.iter().enumerate().map(|(i, u)| (u.user_id.clone(), i)).collect();
        let places = PlacePool::new(gazetteer, event.epicenter(), params.text.place_radius_km);
        let latency = LogNormal::new(params.latency.mu_log, params.latency.sigma_log)
            .map_err(|e| WorldError::Config(format!("latency: {e}")))?;
        let felt_radius_km = felt_radius(event.magnitude, params.felt_radius)?;
        Ok(World {
            event,
            params,
            users,
            user_index,
            places,
            queue: EventQueue::default(),
            posting_rng: substream(seed, Stream::Posting),
            text_rng: substream(seed, Stream::Text),
            reply_rng: substream(seed, Stream::Replies),
            next_post: 0,
            latency,
            felt_radius_km,
        })
    }

    pub fn event(&self) -> &EarthquakeEvent {
        &self.event
    }

    pub fn params(&self) -> &WorldParams {
        &self.params
    }

    pub fn users(&self) -> &[UserProfile] {
        &self.users
    }

    pub fn user(&self, user_id: &str) -> Option<&UserProfile> {
        self.user_index.get(user_id).map(|&i| &self.users[i])
    }

    pub fn felt_radius_km(&self) -> f64 {
        self.felt_radius_km
    }

    pub fn has_places(&self) -> bool {
        !self.places.is_empty()
    }

    fn post_delay_ms(&mut self, window_ms: f64) -> i64 {
        let mean = self.params.posting.decay_min * MS_PER_MINUTE;
        let u: f64 = self.posting_rng.random();
        // inverse CDF of an exponential truncated to [0, window)
        let t = -mean * (1.0 - u * (1.0 - (-window_ms / mean).exp())).ln();
        (t as i64).clamp(0, (window_ms as i64 - 1).max(0))
    }

    /// Schedules every spontaneous post of the collection window and returns them
    /// in timestamp order. `time_window_ms` is measured from the origin time.
    pub fn simulate_stream(&mut self, time_window_ms: i64) -> Vec<RawMessage> {
        let origin = self.event.origin_time;
        let p = self.params.probabilities;
        let dmg = self.params.damage;
        let text = self.params.text;
        let weights = self.params.enrichment.spontaneous_granularity;
        let window = time_window_ms.max(1) as f64;
        for ui in 0..self.users.len() {
            if !self.posting_rng.random_bool(p.p_post) {
                continue;
            }
            let n = 1 + poisson(&mut self.posting_rng, self.params.posting.extra_posts_mean);
            for _ in 0..n {
                let delay = self.post_delay_ms(window);
                let user = &self.users[ui];
                let kind = if self.posting_rng.random_bool(p.p_on_topic) {
                    if user.is_witness {
                        PostKind::FirstHand
                    } else {
                        PostKind::SecondHand
                    }
                } else if self.posting_rng.random_bool(p.p_chatter) {
                    PostKind::Chatter
                } else {
                    PostKind::OffTopic
                };
                let (p_present, p_absent) = match kind {
                    PostKind::FirstHand => (dmg.p_witness_present, dmg.p_witness_absent),
                    _ => (dmg.p_secondhand_present, dmg.p_secondhand_absent),
                };
                let x: f64 = self.posting_rng.random();
                let damage = if x < p_present {
                    DamageLabel::Present
                } else if x < p_present + p_absent {
                    DamageLabel::AbsentReported
                } else {
                    DamageLabel::NoInfo
                };
                let k = poisson(&mut self.posting_rng, text.place_mean).min(5);
                let mentions = self.places.sample(&mut self.text_rng, &weights, k, text.alias_prob);
                let rendered = templates::render_post(
                    &mut self.text_rng,
                    kind,
                    damage,
                    &mentions,
                    self.event.magnitude,
                    text.noise,
                );
                let msg = RawMessage {
                    msg_id: String::new(),
                    author_id: user.user_id.clone(),
                    ts: origin + delay,
                    text: rendered.text,
                    geo: user.geotag_enabled.then(|| user.home()),
                    in_reply_to: None,
                    truth: rendered.truth,
                };
                self.queue.push(msg.ts, Pending::Post(msg));
            }
        }
        let mut out = Vec::new();
        for (_, pending) in self.queue.pop_until(origin + time_window_ms) {
            match pending {
                Pending::Post(mut m) => {
                    self.next_post += 1;
                    m.msg_id = format!("m{:07}", self.next_post);
                    out.push(m);
                }
                Pending::Reply(r) => self.queue.push(r.ts, Pending::Reply(r)),
            }
        }
        out
    }

    /// Hands a question to its target. With the target's reply probability a reply
    /// is scheduled after a log-normal latency; otherwise nothing happens.
    pub fn deliver_question(&mut self, question: &Question) -> Result<Option<ScheduledReply>, WorldError> {
        let Some(&ui) = self.user_index.get(&question.target_user) else {
            return Err(WorldError::UnknownUser {
                question_id: question.question_id.clone(),
                user_id: question.target_user.clone(),
            });
        };
        let user = &self.users[ui];
        let rng = &mut self.reply_rng;
        if !rng.random_bool(user.reply_prob) {
            return Ok(None);
        }
        let minutes = self.latency.sample(rng);
        let delta_t_ms = ((minutes * MS_PER_MINUTE).round() as i64).max(1);
        let collaborative = rng.random_bool(user.collaboration_prob);
        let text = self.params.text;
        let enrichment = self.params.enrichment;
        let (damage, mentions) = match question.kind {
            QuestionKind::AskDamage => {
                let present = user.is_witness && rng.random_bool(self.params.damage.p_witness_present);
                let k = poisson(rng, text.place_mean).min(5);
                let mentions =
                    self.places.sample(rng, &enrichment.spontaneous_granularity, k, text.alias_prob);
                let damage = if present { DamageLabel::Present } else { DamageLabel::AbsentReported };
                (damage, mentions)
            }
            QuestionKind::AskGeo => {
                let target = enrichment.place_density_factor * text.place_mean;
                let k = if target > 1.0 { 1 + poisson(rng, target - 1.0) } else { 1 };
                let mentions = self.places.sample(rng, &enrichment.reply_granularity, k.min(8), text.alias_prob);
                (DamageLabel::NoInfo, mentions)
            }
        };
        let rendered = templates::render_reply(
            rng,
            question.kind,
            collaborative,
            user.is_witness,
            damage,
            &mentions,
            text.noise,
        );
        let msg = RawMessage {
            msg_id: format!("r-{}", question.question_id),
            author_id: user.user_id.clone(),
            ts: question.sent_time + delta_t_ms,
            text: rendered.text,
            geo: user.geotag_enabled.then(|| user.home()),
            in_reply_to: Some(question.question_id.clone()),
            truth: rendered.truth,
        };
        let scheduled = ScheduledReply {
            msg_id: msg.msg_id.clone(),
            question_id: question.question_id.clone(),
            due: msg.ts,
            delta_t_ms,
        };
        self.queue.push(msg.ts, Pending::Reply(msg));
        Ok(Some(scheduled))
    }

    /// Pushes an externally produced message (e.g. a stray reply) onto the queue.
    pub fn inject(&mut self, msg: RawMessage) {
        self.queue.push(msg.ts, Pending::Reply(msg));
    }

    /// Delivers every queued reply with `ts <= horizon`, in time order.
    pub fn drain_replies(&mut self, horizon: Timestamp) -> Vec<RawMessage> {
        self.queue
            .pop_until(horizon)
            .into_iter()
            .filter_map(|(_, p)| match p {
                Pending::Reply(m) => Some(m),
                Pending::Post(_) => None,
            })
            .collect()
    }

    /// Replies still queued (i.e. due after every horizon drained so far).
    pub fn pending_replies(&self) -> usize {
        self.queue.len()
    }
}
