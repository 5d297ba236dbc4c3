//! End-to-end run of one scenario: simulate, collect, filter, select witnesses,
//! ask, collect replies, measure.

use std::path::Path;

use thiserror::Error;

use crate::bundled;
use crate::classify::{
    damage_label, featurize, load_corpus, parse_corpus, train, ClassifierModel, ClassifyError, EvalReport, Example,
    Hyperparams, Task,
};
use crate::config::{minutes_ms, ConfigError, ScenarioConfig};
use crate::dispatch::{Bot, ContactLedger, DispatchError, Dispatcher, ReplyBatch};
use crate::event_feed::{should_trigger, EarthquakeEvent};
use crate::geoparse::{Gazetteer, GazetteerError, Geoparser};
use crate::ingest::{collect, CollectionFilter, CrawlLimit, FilterError};
use crate::metrics::{
    build_report, crisis_map, CollaborativeMode, CrisisCell, EventLog, LogCounters, MetricsReport, ReplyInfo,
    TaggedMessage,
};
use crate::types::{DamageLabel, QuestionKind};
use crate::classify::FeatureVector;
use crate::witness::{centroid_from_json, select_candidates, FeatureExtractor, ScoredMessage, WitnessError, WitnessScorer};
use crate::world::{RawMessage, World, WorldError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("gazetteer: {0}")]
    Gazetteer(#[from] GazetteerError),
    #[error("classifier: {0}")]
    Classify(#[from] ClassifyError),
    #[error("witness scorer: {0}")]
    Witness(#[from] WitnessError),
    #[error("collection filter: {0}")]
    Filter(#[from] FilterError),
    #[error("simulation: {0}")]
    World(#[from] WorldError),
    #[error("dispatch: {0}")]
    Dispatch(#[from] DispatchError),
    #[error("event {event_id} (M{magnitude}) is below the trigger magnitude {min}")]
    NotTriggered { event_id: String, magnitude: f64, min: f64 },
}

impl PipelineError {
    /// Errors caused by the configuration or its input files, as opposed to
    /// failures while running.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            PipelineError::Config(_)
                | PipelineError::Gazetteer(_)
                | PipelineError::Classify(ClassifyError::Corpus { .. } | ClassifyError::Io(_))
                | PipelineError::Witness(_)
                | PipelineError::Filter(_)
        )
    }
}

/// Models and reference data a run needs. Building them trains three
/// classifiers, so callers running many seeds should build once and reuse.
pub struct Resources {
    pub gazetteer: Gazetteer,
    pub relevance: ClassifierModel,
    pub presence: ClassifierModel,
    pub info: ClassifierModel,
    pub scorer: WitnessScorer,
    pub centroid: FeatureVector,
    pub evaluations: Vec<EvalReport>,
}

fn corpus_from(path: Option<&Path>, bundled: &str) -> Result<Vec<Example>, ClassifyError> {
    match path {
        Some(p) => load_corpus(p),
        None => parse_corpus(bundled),
    }
}

impl Resources {
    pub fn bundled() -> Result<Self, PipelineError> {
        Self::build(None, None, None, None, None, &Hyperparams::default())
    }

    pub fn for_config(cfg: &ScenarioConfig) -> Result<Self, PipelineError> {
        let c = &cfg.classifiers;
        let mut r = Self::build(
            cfg.gazetteer.as_deref(),
            c.relevance_corpus.as_deref(),
            c.damage_corpus.as_deref(),
            cfg.witness_weights.as_deref(),
            cfg.witness_centroid.as_deref(),
            &c.hyperparams,
        )?;
        if let Some(t) = c.relevance_threshold {
            r.relevance.set_threshold(t);
        }
        if let Some(t) = c.presence_threshold {
            r.presence.set_threshold(t);
        }
        if let Some(t) = c.info_threshold {
            r.info.set_threshold(t);
        }
        Ok(r)
    }

    pub fn build(
        gazetteer: Option<&Path>,
        relevance_corpus: Option<&Path>,
        damage_corpus: Option<&Path>,
        witness_weights: Option<&Path>,
        witness_centroid: Option<&Path>,
        hp: &Hyperparams,
    ) -> Result<Self, PipelineError> {
        let gazetteer = match gazetteer {
            Some(p) => Gazetteer::load(p)?,
            None => Gazetteer::parse_tsv(bundled::GAZETTEER_TSV)?,
        };
        let rel = corpus_from(relevance_corpus, bundled::RELEVANCE_CORPUS)?;
        let dmg = corpus_from(damage_corpus, bundled::DAMAGE_CORPUS)?;
        let (relevance, e1) = train(&rel, Task::Relevance, hp)?;
        let (presence, e2) = train(&dmg, Task::DamagePresence, hp)?;
        let (info, e3) = train(&dmg, Task::DamageInfo, hp)?;
        let scorer = match witness_weights {
            Some(p) => WitnessScorer::load(p)?,
            None => WitnessScorer::from_json(bundled::WITNESS_WEIGHTS)?,
        };
        let centroid = match witness_centroid {
            Some(p) => centroid_from_json(&std::fs::read_to_string(p).map_err(|source| {
                WitnessError::Io { path: p.display().to_string(), source }
            })?)?,
            None => centroid_from_json(bundled::WITNESS_CENTROID)?,
        };
        Ok(Resources { gazetteer, relevance, presence, info, scorer, centroid, evaluations: vec![e1, e2, e3] })
    }
}

/// Everything one scenario run produced.
pub struct RunOutput {
    pub event: EarthquakeEvent,
    /// Collected messages followed by replies, as raw simulator output.
    pub messages: Vec<RawMessage>,
    pub log: EventLog,
    pub report: MetricsReport,
    pub crisis_cells: Vec<CrisisCell>,
    pub replies: ReplyBatch,
}

pub fn run_scenario(
    cfg: &ScenarioConfig,
    res: &Resources,
    ledger: &mut ContactLedger,
) -> Result<RunOutput, PipelineError> {
    cfg.validate()?;
    let event = cfg.resolve_event()?;
    if !should_trigger(&event, cfg.min_magnitude) {
        return Err(PipelineError::NotTriggered {
            event_id: event.event_id.clone(),
            magnitude: event.magnitude,
            min: cfg.min_magnitude,
        });
    }
    res.relevance.expect_task(Task::Relevance)?;
    res.presence.expect_task(Task::DamagePresence)?;
    res.info.expect_task(Task::DamageInfo)?;

    // 1. simulate the opportunistic stream
    let mut world = World::new(cfg.world_params(), event.clone(), &res.gazetteer, cfg.seed)?;
    let stream = world.simulate_stream(minutes_ms(cfg.posting.window_min));

    // 2. keyword/metadata collection under the crawl limit
    let filter = CollectionFilter::new(&cfg.keywords, cfg.crawl.match_geotagged_in_radius, cfg.crawl.radius_km)?;
    let crawl = cfg.crawl.limit.map(|limit| CrawlLimit { limit, window_ms: (cfg.crawl.window_s * 1000.0) as i64 });
    let collection = collect(&stream, &filter, &event, crawl)?;
    drop(stream);

    // 3. relevance, damage labels and place tags
    let geoparser = Geoparser::new(&res.gazetteer);
    let context = Some(event.epicenter());
    let collected: Vec<TaggedMessage> = collection
        .messages
        .iter()
        .map(|m| {
            let x = featurize(&m.text);
            let relevant = res.relevance.score_features(&x) >= res.relevance.threshold();
            let damage = if relevant { damage_label(&res.presence, &res.info, &x) } else { DamageLabel::NoInfo };
            TaggedMessage {
                msg_id: m.msg_id.clone(),
                author_id: m.author_id.clone(),
                ts: m.ts,
                text: m.text.clone(),
                geo: m.geo,
                tags: geoparser.parse(&m.text, context),
                damage,
                relevant: Some(relevant),
                reply: None,
            }
        })
        .collect();

    // 4. witness scoring and contact selection
    let extractor = FeatureExtractor::new(&geoparser, res.centroid.clone());
    let scored: Vec<ScoredMessage> = collection
        .messages
        .iter()
        .zip(&collected)
        .filter(|(_, t)| t.relevant == Some(true))
        .map(|(m, _)| {
            let age = world.user(&m.author_id).map(|u| u.account_age_days);
            ScoredMessage {
                msg_id: m.msg_id.clone(),
                user_id: m.author_id.clone(),
                ts: m.ts,
                geotagged: m.geo.is_some(),
                score: res.scorer.score(&extractor.extract(m, age)),
            }
        })
        .collect();
    let targets = select_candidates(&scored, cfg.contact_budget, ledger.members());

    // 5. targeted questions through the bot pool
    let bots = (0..cfg.bots.count)
        .map(|i| Bot::new(format!("bot{i}"), cfg.bots.max_sends, (cfg.bots.window_s * 1000.0) as i64))
        .collect::<Result<Vec<_>, _>>()?;
    let mut dispatcher = Dispatcher::new(bots, cfg.question_templates.clone());
    let start = cfg.dispatch_start(&event);
    let plan = dispatcher.schedule(&targets, start, &format!("{}-", event.event_id))?;
    let deadline = cfg.bots.deadline_min.map(|d| start + minutes_ms(d));
    dispatcher.send(&plan, &mut world, ledger, deadline)?;

    // 6. replies
    let batch = dispatcher.collect_replies(&mut world, start + minutes_ms(cfg.reply_horizon_min));
    let replies: Vec<TaggedMessage> = batch
        .replies
        .iter()
        .map(|r| {
            let x = featurize(&r.message.text);
            let damage = damage_label(&res.presence, &res.info, &x);
            let tags = geoparser.parse(&r.message.text, context);
            let collaborative = match cfg.collaborative_mode {
                CollaborativeMode::GroundTruth => r.collaborative,
                CollaborativeMode::Classifier => match r.kind {
                    QuestionKind::AskDamage => damage.carries_info(),
                    QuestionKind::AskGeo => !tags.is_empty(),
                },
            };
            TaggedMessage {
                msg_id: r.msg_id.clone(),
                author_id: r.message.author_id.clone(),
                ts: r.message.ts,
                text: r.message.text.clone(),
                geo: r.message.geo,
                tags,
                damage,
                relevant: None,
                reply: Some(ReplyInfo {
                    question_id: r.question_id.clone(),
                    kind: r.kind,
                    delta_t_min: r.delta_t_min,
                    collaborative,
                }),
            }
        })
        .collect();

    let log = EventLog {
        event: event.clone(),
        collected,
        replies,
        dispatch: dispatcher.log().to_vec(),
        counters: LogCounters {
            crawl_dropped: collection.dropped,
            duplicates: collection.duplicates,
            late_replies: batch.late,
            orphan_replies: batch.orphans.len(),
        },
        collaborative_mode: cfg.collaborative_mode,
        variety_mode: cfg.variety_mode,
        grid_cell_deg: cfg.grid_cell_deg,
    };
    let report = build_report(&log);
    let mut mapped = log.relevant();
    mapped.extend(log.replies.iter());
    let crisis_cells = crisis_map(&mapped, log.grid_cell_deg);
    let mut messages = collection.messages;
    messages.extend(batch.replies.iter().map(|r| r.message.clone()));
    Ok(RunOutput { event, messages, log, report, crisis_cells, replies: batch })
}
