//! Targeted questions sent through a pool of rate-limited bots.
//!
//! A [`Dispatcher`] owns the bots, the contact ledger and the record of every
//! question it has sent. Scheduling is a pure function of the bots' send
//! histories; sending consults the ledger so that nobody is ever asked twice.

use std::collections::{HashMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{self, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{MsgId, QuestionKind, Timestamp, UserId, MS_PER_MINUTE};
use crate::witness::ContactTarget;
use crate::world::templates::{render_question, DEFAULT_ASK_DAMAGE, DEFAULT_ASK_GEO};
use crate::world::{RawMessage, World, WorldError};

#[derive(Debug, Error)]
pub enum DispatchError {
    #[error("no bots available for {0} targets")]
    NoBots(usize),
    #[error("bot {bot_id}: max_sends and window must be positive")]
    BadRateLimit { bot_id: String },
    #[error("ledger {path}: {source}")]
    Ledger { path: String, source: io::Error },
    #[error("ledger {path} line {line}: {reason}")]
    LedgerFormat { path: String, line: usize, reason: String },
    #[error(transparent)]
    World(#[from] WorldError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bot {
    pub bot_id: String,
    pub max_sends: usize,
    pub window_ms: i64,
    history: Vec<Timestamp>,
}

impl Bot {
    pub fn new(bot_id: impl Into<String>, max_sends: usize, window_ms: i64) -> Result<Self, DispatchError> {
        let bot_id = bot_id.into();
        if max_sends == 0 || window_ms <= 0 {
            return Err(DispatchError::BadRateLimit { bot_id });
        }
        Ok(Bot { bot_id, max_sends, window_ms, history: Vec::new() })
    }

    pub fn history(&self) -> &[Timestamp] {
        &self.history
    }

    /// Earliest time at or after `now` when one more send stays within the limit,
    /// given the sends in `history` (sorted).
    fn next_slot(max_sends: usize, window_ms: i64, history: &[Timestamp], now: Timestamp) -> Timestamp {
        let earliest = history.last().map_or(now, |&t| t.max(now));
        if history.len() < max_sends {
            return earliest;
        }
        earliest.max(history[history.len() - max_sends] + window_ms)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuestionTemplates {
    pub ask_damage: String,
    pub ask_geo: String,
}

impl Default for QuestionTemplates {
    fn default() -> Self {
        QuestionTemplates { ask_damage: DEFAULT_ASK_DAMAGE.into(), ask_geo: DEFAULT_ASK_GEO.into() }
    }
}

impl QuestionTemplates {
    pub fn render(&self, kind: QuestionKind, user_id: &str) -> String {
        let template = match kind {
            QuestionKind::AskDamage => &self.ask_damage,
            QuestionKind::AskGeo => &self.ask_geo,
        };
        render_question(template, user_id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Question {
    pub question_id: String,
    pub bot_id: String,
    pub target_user: UserId,
    pub kind: QuestionKind,
    pub text: String,
    pub sent_time: Timestamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SendStatus {
    #[serde(rename = "sent")]
    Sent,
    #[serde(rename = "duplicate-contact-suppressed")]
    DuplicateContactSuppressed,
    #[serde(rename = "expired")]
    Expired,
}

/// One line of the dispatch log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchRecord {
    pub question_id: String,
    pub bot_id: String,
    pub target: UserId,
    pub kind: QuestionKind,
    pub sent_time: Timestamp,
    pub status: SendStatus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reply {
    pub msg_id: MsgId,
    pub question_id: String,
    pub delta_t_min: f64,
    pub kind: QuestionKind,
    /// Ground truth from the simulator; evaluation mode overrides it.
    pub collaborative: bool,
    pub message: RawMessage,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReplyBatch {
    pub replies: Vec<Reply>,
    /// Replies that will arrive after the horizon.
    pub late: usize,
    /// Messages claiming to answer a question this dispatcher never sent, or
    /// answering one that already has a reply.
    pub orphans: Vec<MsgId>,
}

/// Append-only set of contacted users. With a backing file every append is
/// flushed before the question goes out.
#[derive(Debug, Default)]
pub struct ContactLedger {
    entries: Vec<(UserId, Timestamp)>,
    members: HashSet<UserId>,
    file: Option<(PathBuf, File)>,
}

impl ContactLedger {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens or creates a ledger file of `user_id<TAB>epoch_ms` lines. A trailing
    /// line without newline is an interrupted append and is discarded.
    pub fn open(path: &Path) -> Result<Self, DispatchError> {
        let err = |source| DispatchError::Ledger { path: path.display().to_string(), source };
        let mut file = OpenOptions::new().create(true).read(true).append(true).open(path).map_err(err)?;
        let mut text = String::new();
        file.read_to_string(&mut text).map_err(err)?;
        let complete = text.rfind('\n').map_or(0, |i| i + 1);
        if complete < text.len() {
            file.set_len(complete as u64).map_err(err)?;
            file.seek(SeekFrom::End(0)).map_err(err)?;
        }
        let mut ledger = ContactLedger::default();
        for (i, line) in text[..complete].lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let bad = |reason: &str| DispatchError::LedgerFormat {
                path: path.display().to_string(),
                line: i + 1,
                reason: reason.into(),
            };
            let (user, ts) = line.split_once('\t').ok_or_else(|| bad("expected user_id<TAB>timestamp"))?;
            let ts: Timestamp = ts.trim().parse().map_err(|_| bad("bad timestamp"))?;
            if user.is_empty() {
                return Err(bad("empty user id"));
            }
            if ledger.members.insert(user.to_string()) {
                ledger.entries.push((user.to_string(), ts));
            }
        }
        ledger.file = Some((path.to_path_buf(), file));
        Ok(ledger)
    }

    pub fn contains(&self, user_id: &str) -> bool {
        self.members.contains(user_id)
    }

    /// Records a contact. Returns false (and writes nothing) for a known user.
    pub fn record(&mut self, user_id: &str, ts: Timestamp) -> Result<bool, DispatchError> {
        if self.members.contains(user_id) {
            return Ok(false);
        }
        if let Some((path, file)) = &mut self.file {
            let err = |source| DispatchError::Ledger { path: path.display().to_string(), source };
            file.write_all(format!("{user_id}\t{ts}\n").as_bytes()).map_err(err)?;
            file.sync_data().map_err(err)?;
        }
        self.members.insert(user_id.to_string());
        self.entries.push((user_id.to_string(), ts));
        Ok(true)
    }

    pub fn entries(&self) -> &[(UserId, Timestamp)] {
        &self.entries
    }

    pub fn members(&self) -> &HashSet<UserId> {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_text(&self) -> String {
        self.entries.iter().map(|(u, t)| format!("{u}\t{t}\n")).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannedSend {
    pub question: Question,
    pub planned_time: Timestamp,
}

/// Plans every target on the bot that can send soonest (ties: first bot in the
/// pool). Each bot sends in bursts of `max_sends` at the start of each window.
pub fn schedule(
    targets: &[ContactTarget],
    bots: &[Bot],
    now: Timestamp,
    templates: &QuestionTemplates,
    id_prefix: &str,
    first_seq: usize,
) -> Result<Vec<PlannedSend>, DispatchError> {
    if targets.is_empty() {
        return Ok(Vec::new());
    }
    if bots.is_empty() {
        return Err(DispatchError::NoBots(targets.len()));
    }
    let mut histories: Vec<Vec<Timestamp>> = bots.iter().map(|b| b.history.clone()).collect();
    let mut plan = Vec::with_capacity(targets.len());
    for (k, target) in targets.iter().enumerate() {
        let (bi, slot) = bots
            .iter()
            .enumerate()
            .map(|(i, b)| (i, Bot::next_slot(b.max_sends, b.window_ms, &histories[i], now)))
            .min_by_key(|&(i, t)| (t, i))
            .expect("bots is non-empty");
        histories[bi].push(slot);
        let question_id = format!("{id_prefix}q{:05}", first_seq + k);
        plan.push(PlannedSend {
            question: Question {
                question_id,
                bot_id: bots[bi].bot_id.clone(),
                target_user: target.user_id.clone(),
                kind: target.question_kind,
                text: templates.render(target.question_kind, &target.user_id),
                sent_time: slot,
            },
            planned_time: slot,
        });
    }
    Ok(plan)
}

pub struct Dispatcher {
    bots: Vec<Bot>,
    templates: QuestionTemplates,
    sent: HashMap<String, Question>,
    answered: HashSet<String>,
    log: Vec<DispatchRecord>,
    next_seq: usize,
}

impl Dispatcher {
    pub fn new(bots: Vec<Bot>, templates: QuestionTemplates) -> Self {
        Dispatcher {
            bots,
            templates,
            sent: HashMap::new(),
            answered: HashSet::new(),
            log: Vec::new(),
            next_seq: 0,
        }
    }

    pub fn bots(&self) -> &[Bot] {
        &self.bots
    }

    pub fn log(&self) -> &[DispatchRecord] {
        &self.log
    }

    pub fn schedule(
        &self,
        targets: &[ContactTarget],
        now: Timestamp,
        id_prefix: &str,
    ) -> Result<Vec<PlannedSend>, DispatchError> {
        schedule(targets, &self.bots, now, &self.templates, id_prefix, self.next_seq)
    }

    /// Executes a plan. Targets already in the ledger are suppressed; sends
    /// planned at or after `deadline` expire. Returns the new log records.
    pub fn send(
        &mut self,
        plan: &[PlannedSend],
        world: &mut World<'_>,
        ledger: &mut ContactLedger,
        deadline: Option<Timestamp>,
    ) -> Result<Vec<DispatchRecord>, DispatchError> {
        let mut records = Vec::with_capacity(plan.len());
        for p in plan {
            let q = &p.question;
            self.next_seq += 1;
            let status = if ledger.contains(&q.target_user) {
                SendStatus::DuplicateContactSuppressed
            } else if deadline.is_some_and(|d| p.planned_time >= d) {
                SendStatus::Expired
            } else {
                ledger.record(&q.target_user, p.planned_time)?;
                world.deliver_question(q)?;
                if let Some(bot) = self.bots.iter_mut().find(|b| b.bot_id == q.bot_id) {
                    let at = bot.history.partition_point(|&t| t <= p.planned_time);
                    bot.history.insert(at, p.planned_time);
                }
                self.sent.insert(q.question_id.clone(), q.clone());
                SendStatus::Sent
            };
            records.push(DispatchRecord {
                question_id: q.question_id.clone(),
                bot_id: q.bot_id.clone(),
                target: q.target_user.clone(),
                kind: q.kind,
                sent_time: p.planned_time,
                status,
            });
        }
        self.log.extend(records.iter().cloned());
        Ok(records)
    }

    /// Drains replies due at or before `horizon` (epoch ms) and pairs each with
    /// its question.
    pub fn collect_replies(&mut self, world: &mut World<'_>, horizon: Timestamp) -> ReplyBatch {
        let mut batch = ReplyBatch::default();
        for msg in world.drain_replies(horizon) {
            let question = msg.in_reply_to.as_ref().and_then(|id| self.sent.get(id));
            let Some(q) = question else {
                batch.orphans.push(msg.msg_id.clone());
                continue;
            };
            if !self.answered.insert(q.question_id.clone()) || msg.ts <= q.sent_time {
                batch.orphans.push(msg.msg_id.clone());
                continue;
            }
            batch.replies.push(Reply {
                msg_id: msg.msg_id.clone(),
                question_id: q.question_id.clone(),
                delta_t_min: (msg.ts - q.sent_time) as f64 / MS_PER_MINUTE,
                kind: q.kind,
                collaborative: msg.truth.collaborative.unwrap_or(false),
                message: msg,
            });
        }
        batch.late = world.pending_replies();
        batch
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateViolation {
    pub bot_id: String,
    pub window_start: Timestamp,
    pub sends: usize,
}

/// Brute force: for every sent record, counts the same bot's sends in
/// `[t, t + window)`.
pub fn verify_rate_safety(log: &[DispatchRecord], bots: &[Bot]) -> Vec<RateViolation> {
    let mut out = Vec::new();
    for bot in bots {
        let times: Vec<Timestamp> = log
            .iter()
            .filter(|r| r.status == SendStatus::Sent && r.bot_id == bot.bot_id)
            .map(|r| r.sent_time)
            .collect();
        for &t in &times {
            let n = times.iter().filter(|&&s| s >= t && s < t + bot.window_ms).count();
            if n > bot.max_sends {
                out.push(RateViolation { bot_id: bot.bot_id.clone(), window_start: t, sends: n });
            }
        }
    }
    out
}

/// Users with more than one `sent` record across the given logs.
pub fn verify_politeness<'a>(logs: impl IntoIterator<Item = &'a [DispatchRecord]>) -> Vec<UserId> {
    let mut seen = HashSet::new();
    let mut dup = Vec::new();
    for log in logs {
        for r in log.iter().filter(|r| r.status == SendStatus::Sent) {
            if !seen.insert(r.target.as_str()) {
                dup.push(r.target.clone());
            }
        }
    }
    dup
}

pub fn log_to_jsonl(log: &[DispatchRecord]) -> String {
    log.iter()
        .map(|r| serde_json::to_string(r).expect("record serializes") + "\n")
        .collect()
}
