//! Scenario configuration: one JSON document per simulated event.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::Hyperparams;
use crate::dispatch::QuestionTemplates;
use crate::event_feed::{parse_usgs_feed, EarthquakeEvent, DEFAULT_MIN_MAGNITUDE};
use crate::ingest::DEFAULT_KEYWORDS;
use crate::metrics::{CollaborativeMode, VarietyMode};
use crate::world::{
    DamageParams, Enrichment, FeltRadiusParams, Geography, LatencyParams, Posting, Probabilities, TextParams,
    WorldParams,
};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: String, source: serde_json::Error },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedRef {
    pub path: PathBuf,
    pub event_id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CrawlConfig {
    /// Messages per window; absent means unlimited.
    pub limit: Option<usize>,
    pub window_s: f64,
    pub match_geotagged_in_radius: bool,
    pub radius_km: f64,
}

impl Default for CrawlConfig {
    fn default() -> Self {
        CrawlConfig { limit: None, window_s: 60.0, match_geotagged_in_radius: false, radius_km: 50.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BotsConfig {
    pub count: usize,
    pub max_sends: usize,
    pub window_s: f64,
    /// Sends planned this many minutes after dispatch starts (or later) expire.
    #[serde(default)]
    pub deadline_min: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierConfig {
    pub relevance_corpus: Option<PathBuf>,
    pub damage_corpus: Option<PathBuf>,
    pub relevance_threshold: Option<f64>,
    pub presence_threshold: Option<f64>,
    pub info_threshold: Option<f64>,
    pub hyperparams: Hyperparams,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LedgerScope {
    /// One ledger for every scenario of a `run` invocation.
    #[default]
    Campaign,
    /// A fresh ledger per scenario.
    Event,
}

fn default_min_magnitude() -> f64 {
    DEFAULT_MIN_MAGNITUDE
}

fn default_keywords() -> Vec<String> {
    DEFAULT_KEYWORDS.iter().map(|s| s.to_string()).collect()
}

fn default_grid() -> f64 {
    0.1
}

fn default_horizon() -> f64 {
    24.0 * 60.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub seed: u64,
    #[serde(default)]
    pub event: Option<EarthquakeEvent>,
    #[serde(default)]
    pub feed: Option<FeedRef>,
    #[serde(default = "default_min_magnitude")]
    pub min_magnitude: f64,
    pub population: usize,
    #[serde(default)]
    pub felt_radius: FeltRadiusParams,
    #[serde(default)]
    pub geography: Geography,
    pub probabilities: Probabilities,
    #[serde(default)]
    pub posting: Posting,
    #[serde(default)]
    pub text: TextParams,
    #[serde(default)]
    pub damage: DamageParams,
    pub latency: LatencyParams,
    #[serde(default)]
    pub enrichment: Enrichment,
    #[serde(default = "default_keywords")]
    pub keywords: Vec<String>,
    #[serde(default)]
    pub crawl: CrawlConfig,
    pub bots: BotsConfig,
    pub contact_budget: usize,
    /// Minutes after origin when questions start going out; defaults to the end
    /// of the posting window.
    #[serde(default)]
    pub dispatch_delay_min: Option<f64>,
    #[serde(default = "default_horizon")]
    pub reply_horizon_min: f64,
    #[serde(default)]
    pub question_templates: QuestionTemplates,
    #[serde(default)]
    pub classifiers: ClassifierConfig,
    #[serde(default)]
    pub witness_weights: Option<PathBuf>,
    #[serde(default)]
    pub witness_centroid: Option<PathBuf>,
    #[serde(default)]
    pub gazetteer: Option<PathBuf>,
    #[serde(default = "default_grid")]
    pub grid_cell_deg: f64,
    #[serde(default)]
    pub variety_mode: VarietyMode,
    #[serde(default)]
    pub collaborative_mode: CollaborativeMode,
    #[serde(default)]
    pub ledger: LedgerScope,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Parses and validates a config file; relative paths inside it are resolved
    /// against the file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        let mut cfg = Self::from_json(&text)
            .map_err(|source| ConfigError::Json { path: path.display().to_string(), source })?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(f) = &mut self.feed {
            fix(&mut f.path);
        }
        for p in [
            &mut self.classifiers.relevance_corpus,
            &mut self.classifiers.damage_corpus,
            &mut self.witness_weights,
            &mut self.witness_centroid,
            &mut self.gazetteer,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }

    pub fn world_params(&self) -> WorldParams {
        WorldParams {
            population: self.population,
            felt_radius: self.felt_radius,
            geography: self.geography,
            probabilities: self.probabilities,
            posting: self.posting,
            text: self.text,
            damage: self.damage,
            latency: self.latency,
            enrichment: self.enrichment,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if self.event.is_some() == self.feed.is_some() {
            return invalid("exactly one of `event` and `feed` must be given".into());
        }
        if let Some(e) = &self.event {
            e.validate().map_err(|r| ConfigError::Invalid(format!("event: {r}")))?;
        }
        self.world_params().validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.keywords.iter().any(|k| k.trim().is_empty()) {
            return invalid("keywords must be non-empty strings".into());
        }
        if self.keywords.is_empty() && !self.crawl.match_geotagged_in_radius {
            return invalid("no collection criterion: empty keywords and geotag matching off".into());
        }
        let positive = [
            ("crawl.window_s", self.crawl.window_s),
            ("crawl.radius_km", self.crawl.radius_km),
            ("bots.window_s", self.bots.window_s),
            ("grid_cell_deg", self.grid_cell_deg),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return invalid(format!("{name}={v} must be positive"));
            }
        }
        let non_negative = [
            ("reply_horizon_min", Some(self.reply_horizon_min)),
            ("dispatch_delay_min", self.dispatch_delay_min),
            ("bots.deadline_min", self.bots.deadline_min),
        ];
        for (name, v) in non_negative {
            if let Some(v) = v {
                if !(v >= 0.0 && v.is_finite()) {
                    return invalid(format!("{name}={v} must be >= 0"));
                }
            }
        }
        if self.bots.max_sends == 0 && self.contact_budget > 0 {
            return invalid("bots.max_sends must be positive".into());
        }
        if self.bots.count == 0 && self.contact_budget > 0 {
            return invalid("bots.count is 0 but contact_budget is positive".into());
        }
        let c = &self.classifiers;
        for (name, t) in [
            ("relevance_threshold", c.relevance_threshold),
            ("presence_threshold", c.presence_threshold),
            ("info_threshold", c.info_threshold),
        ] {
            if let Some(t) = t {
                if !(0.0..=1.0).contains(&t) {
                    return invalid(format!("classifiers.{name}={t} must be in [0, 1]"));
                }
            }
        }
        if c.hyperparams.epochs == 0 || !(c.hyperparams.learning_rate > 0.0) || !(c.hyperparams.l2 >= 0.0) {
            return invalid("classifier hyperparameters must be positive".into());
        }
        Ok(())
    }

    /// The configured event, read from the feed when given by reference.
    pub fn resolve_event(&self) -> Result<EarthquakeEvent, ConfigError> {
        if let Some(e) = &self.event {
            return Ok(e.clone());
        }
        let feed = self.feed.as_ref().expect("validated: event or feed");
        let text = std::fs::read_to_string(&feed.path)
            .map_err(|source| ConfigError::Io { path: feed.path.display().to_string(), source })?;
        let events = parse_usgs_feed(&text).map_err(|e| ConfigError::Invalid(format!("feed: {e}")))?;
        events
            .into_iter()
            .find(|e| e.event_id == feed.event_id)
            .ok_or_else(|| ConfigError::Invalid(format!("event {} not in feed", feed.event_id)))
    }

    pub fn dispatch_start(&self, event: &EarthquakeEvent) -> i64 {
        let delay = self.dispatch_delay_min.unwrap_or(self.posting.window_min);
        event.origin_time + minutes_ms(delay)
    }
}

pub fn minutes_ms(minutes: f64) -> i64 {
    (minutes * 60_000.0).round() as i64
}
