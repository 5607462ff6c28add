//! Process engine: drives a session through setup, development,
//! re-prioritization, assessment and conclusion.
//!
//! Every command validates against the current state, then emits one or more
//! [`EventPayload`]s. State is only ever changed by folding those payloads
//! (see [`SessionState::apply`]), so replaying the journal from empty always
//! reproduces the live state.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::atomic::{AtomicI64, Ordering};
use std::sync::Arc;

use chrono::{Duration, SubsecRound, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::metrics::{self, HarmonyReport, PriorityTable};
use crate::model::{
    Annotation, AdjustmentRecord, CardId, CoverageAssessment, Deck, LikertScore, Phase,
    PhaseEvent, PrioritizationRound, RoundStatus, SessionConfig, SessionId, SessionState,
    SprintRecord, Stakeholder, StakeholderId, Timestamp, TokenAllocation, Trigger,
    TriggerCategory, TriggerId, TriggerStatus, Verdict, VerdictOutcome,
};
use crate::picture::{self, DeltaReport, RenderMode, SituationalPicture};

pub trait Clock: Send + Sync {
    fn now(&self) -> Timestamp;
}

/// Wall clock in UTC, truncated to microseconds.
#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> Timestamp {
        Utc::now().trunc_subsecs(6)
    }
}

/// Deterministic clock for tests and replays: each call advances by `step`.
#[derive(Debug)]
pub struct SteppingClock {
    start: Timestamp,
    step: Duration,
    ticks: AtomicI64,
}

impl SteppingClock {
    pub fn new(start: Timestamp, step: Duration) -> Self {
        SteppingClock {
            start,
            step,
            ticks: AtomicI64::new(0),
        }
    }
}

impl Clock for SteppingClock {
    fn now(&self) -> Timestamp {
        let n = self.ticks.fetch_add(1, Ordering::SeqCst);
        self.start + self.step * (n as i32)
    }
}

/// Who issued a command: a registered stakeholder or the local operator.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub enum Actor {
    System,
    Stakeholder(StakeholderId),
}

impl From<String> for Actor {
    fn from(s: String) -> Self {
        if s == "system" {
            Actor::System
        } else {
            Actor::Stakeholder(StakeholderId(s))
        }
    }
}

impl From<Actor> for String {
    fn from(a: Actor) -> String {
        a.to_string()
    }
}

impl fmt::Display for Actor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Actor::System => f.write_str("system"),
            Actor::Stakeholder(id) => f.write_str(id.as_str()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    SessionCreated,
    StakeholderRegistered,
    RoundOpened,
    AllocationSubmitted,
    RoundClosed,
    BaselineCaptured,
    TriggerRegistered,
    TriggerFired,
    TriggerResolved,
    SprintRecorded,
    AssessmentOpened,
    ScoresSubmitted,
    AssessmentCompleted,
    PictureBuilt,
    VerdictRecorded,
    PhaseChanged,
    AnnotationRecorded,
    AdjustmentRecorded,
    PictureExported,
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("kind serializes");
        f.write_str(s.as_str().unwrap_or_default())
    }
}

/// Full record carried by an audit event. Replaying these from empty
/// rebuilds the session.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum EventPayload {
    SessionCreated {
        session_id: SessionId,
        deck: Deck,
        config: SessionConfig,
    },
    StakeholderRegistered {
        stakeholder: Stakeholder,
    },
    RoundOpened {
        round_index: u32,
        trigger_ref: Option<TriggerId>,
    },
    AllocationSubmitted {
        round_index: u32,
        allocation: TokenAllocation,
        replaced: bool,
    },
    RoundClosed {
        round_index: u32,
        priorities: PriorityTable,
    },
    BaselineCaptured {
        picture: SituationalPicture,
    },
    TriggerRegistered {
        trigger_id: TriggerId,
        description: String,
        category: TriggerCategory,
    },
    TriggerFired {
        trigger_id: TriggerId,
    },
    TriggerResolved {
        trigger_id: TriggerId,
    },
    SprintRecorded {
        sprint: SprintRecord,
    },
    AssessmentOpened {
        assessment_index: u32,
        round_ref: u32,
    },
    ScoresSubmitted {
        assessment_index: u32,
        stakeholder_id: StakeholderId,
        scores: BTreeMap<CardId, LikertScore>,
    },
    AssessmentCompleted {
        assessment_index: u32,
    },
    PictureBuilt {
        picture: SituationalPicture,
    },
    VerdictRecorded {
        outcome: VerdictOutcome,
        rationale: String,
        picture_ref: String,
    },
    PhaseChanged {
        from: Phase,
        to: Phase,
        cause: PhaseEvent,
    },
    AnnotationRecorded {
        activity: String,
        minutes: String,
    },
    AdjustmentRecorded {
        round_ref: u32,
        text: String,
    },
    PictureExported {
        picture_id: String,
        format: String,
        content_digest: String,
    },
}

impl EventPayload {
    pub fn kind(&self) -> EventKind {
        match self {
            EventPayload::SessionCreated { .. } => EventKind::SessionCreated,
            EventPayload::StakeholderRegistered { .. } => EventKind::StakeholderRegistered,
            EventPayload::RoundOpened { .. } => EventKind::RoundOpened,
            EventPayload::AllocationSubmitted { .. } => EventKind::AllocationSubmitted,
            EventPayload::RoundClosed { .. } => EventKind::RoundClosed,
            EventPayload::BaselineCaptured { .. } => EventKind::BaselineCaptured,
            EventPayload::TriggerRegistered { .. } => EventKind::TriggerRegistered,
            EventPayload::TriggerFired { .. } => EventKind::TriggerFired,
            EventPayload::TriggerResolved { .. } => EventKind::TriggerResolved,
            EventPayload::SprintRecorded { .. } => EventKind::SprintRecorded,
            EventPayload::AssessmentOpened { .. } => EventKind::AssessmentOpened,
            EventPayload::ScoresSubmitted { .. } => EventKind::ScoresSubmitted,
            EventPayload::AssessmentCompleted { .. } => EventKind::AssessmentCompleted,
            EventPayload::PictureBuilt { .. } => EventKind::PictureBuilt,
            EventPayload::VerdictRecorded { .. } => EventKind::VerdictRecorded,
            EventPayload::PhaseChanged { .. } => EventKind::PhaseChanged,
            EventPayload::AnnotationRecorded { .. } => EventKind::AnnotationRecorded,
            EventPayload::AdjustmentRecorded { .. } => EventKind::AdjustmentRecorded,
            EventPayload::PictureExported { .. } => EventKind::PictureExported,
        }
    }
}

pub const GENESIS_DIGEST: &str =
    "0000000000000000000000000000000000000000000000000000000000000000";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// One entry of the append-only journal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditEvent {
    pub sequence: u64,
    pub timestamp: Timestamp,
    pub actor: Actor,
    pub kind: EventKind,
    /// SHA-256 of the serialized payload.
    pub payload_ref: String,
    pub payload: EventPayload,
    pub prev_digest: String,
    /// SHA-256 over `prev_digest` and every field above.
    pub digest: String,
}

#[derive(Serialize)]
struct DigestInput<'a> {
    sequence: u64,
    timestamp: &'a Timestamp,
    actor: &'a Actor,
    kind: EventKind,
    payload_ref: &'a str,
    payload: &'a EventPayload,
}

impl AuditEvent {
    fn compute_digest(&self) -> String {
        let body = serde_json::to_vec(&DigestInput {
            sequence: self.sequence,
            timestamp: &self.timestamp,
            actor: &self.actor,
            kind: self.kind,
            payload_ref: &self.payload_ref,
            payload: &self.payload,
        })
        .expect("event serializes");
        let mut hasher = Sha256::new();
        hasher.update(self.prev_digest.as_bytes());
        hasher.update(b"\n");
        hasher.update(&body);
        hex::encode(hasher.finalize())
    }

    fn payload_digest(payload: &EventPayload) -> String {
        sha256_hex(&serde_json::to_vec(payload).expect("payload serializes"))
    }
}

/// Hash-chained, append-only list of audit events.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Journal {
    events: Vec<AuditEvent>,
}

impl Journal {
    pub fn events(&self) -> &[AuditEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn head_digest(&self) -> &str {
        self.events.last().map_or(GENESIS_DIGEST, |e| &e.digest)
    }

    fn append(&mut self, timestamp: Timestamp, actor: Actor, payload: EventPayload) -> &AuditEvent {
        let mut event = AuditEvent {
            sequence: self.events.len() as u64 + 1,
            timestamp,
            actor,
            kind: payload.kind(),
            payload_ref: AuditEvent::payload_digest(&payload),
            payload,
            prev_digest: self.head_digest().to_string(),
            digest: String::new(),
        };
        event.digest = event.compute_digest();
        self.events.push(event);
        self.events.last().expect("just pushed")
    }

    /// Checks sequence numbers and the digest chain.
    pub fn from_events(events: Vec<AuditEvent>) -> Result<Self> {
        let mut prev = GENESIS_DIGEST.to_string();
        for (i, e) in events.iter().enumerate() {
            let expected = i as u64 + 1;
            let corrupt = |reason: &str| Error::CorruptJournal {
                sequence: expected,
                reason: reason.to_string(),
            };
            if e.sequence != expected {
                return Err(corrupt(&format!("found sequence {}", e.sequence)));
            }
            if e.kind != e.payload.kind() {
                return Err(corrupt("kind does not match payload"));
            }
            if e.payload_ref != AuditEvent::payload_digest(&e.payload) {
                return Err(corrupt("payload digest mismatch"));
            }
            if e.prev_digest != prev {
                return Err(corrupt("broken hash chain"));
            }
            if e.digest != e.compute_digest() {
                return Err(corrupt("event digest mismatch"));
            }
            prev = e.digest.clone();
        }
        Ok(Journal { events })
    }
}

fn divergence(msg: impl Into<String>) -> Error {
    Error::ReplayDivergence(msg.into())
}

impl SessionState {
    /// State right after the first journal event.
    pub fn genesis(timestamp: Timestamp, payload: &EventPayload) -> Result<Self> {
        match payload {
            EventPayload::SessionCreated {
                session_id,
                deck,
                config,
            } => Ok(SessionState {
                session_id: session_id.clone(),
                created_at: timestamp,
                config: config.clone(),
                phase: Phase::Setup,
                deck: deck.clone(),
                stakeholders: Vec::new(),
                rounds: Vec::new(),
                triggers: Vec::new(),
                sprints: Vec::new(),
                baseline_picture: None,
                outcome_pictures: Vec::new(),
                assessments: Vec::new(),
                verdicts: Vec::new(),
                annotations: Vec::new(),
                adjustments: Vec::new(),
            }),
            other => Err(divergence(format!(
                "journal must start with session_created, found {}",
                other.kind()
            ))),
        }
    }

    /// Folds one event into the state.
    pub fn apply(&mut self, timestamp: Timestamp, payload: &EventPayload) -> Result<()> {
        match payload {
            EventPayload::SessionCreated { .. } => {
                return Err(divergence("session_created after genesis"));
            }
            EventPayload::StakeholderRegistered { stakeholder } => {
                if self.stakeholder(&stakeholder.stakeholder_id).is_some() {
                    return Err(divergence("stakeholder registered twice"));
                }
                self.stakeholders.push(stakeholder.clone());
            }
            EventPayload::RoundOpened {
                round_index,
                trigger_ref,
            } => {
                if *round_index as usize != self.rounds.len() {
                    return Err(divergence("round index out of order"));
                }
                self.rounds.push(PrioritizationRound::open(
                    *round_index,
                    timestamp,
                    trigger_ref.clone(),
                ));
            }
            EventPayload::AllocationSubmitted {
                round_index,
                allocation,
                ..
            } => {
                let round = self.round_mut(*round_index)?;
                if round.is_closed() {
                    return Err(divergence("allocation for a closed round"));
                }
                round
                    .allocations
                    .insert(allocation.stakeholder_id.clone(), allocation.clone());
            }
            EventPayload::RoundClosed { round_index, .. } => {
                let round = self.round_mut(*round_index)?;
                if round.is_closed() {
                    return Err(divergence("round closed twice"));
                }
                round.status = RoundStatus::Closed;
                round.closed_at = Some(timestamp);
            }
            EventPayload::BaselineCaptured { picture } => {
                if self.baseline_picture.is_some() {
                    return Err(divergence("second baseline"));
                }
                self.baseline_picture = Some(picture.clone());
            }
            EventPayload::TriggerRegistered {
                trigger_id,
                description,
                category,
            } => {
                if self.trigger(trigger_id).is_some() {
                    return Err(divergence("trigger registered twice"));
                }
                self.triggers.push(Trigger {
                    trigger_id: trigger_id.clone(),
                    description: description.clone(),
                    category: *category,
                    status: TriggerStatus::Registered,
                    registered_at: timestamp,
                    fired_at: None,
                    resolved_at: None,
                });
            }
            EventPayload::TriggerFired { trigger_id } => {
                let t = self.trigger_mut(trigger_id)?;
                if t.status != TriggerStatus::Registered {
                    return Err(divergence("trigger fired out of order"));
                }
                t.status = TriggerStatus::Fired;
                t.fired_at = Some(timestamp);
            }
            EventPayload::TriggerResolved { trigger_id } => {
                let t = self.trigger_mut(trigger_id)?;
                if t.status != TriggerStatus::Fired {
                    return Err(divergence("trigger resolved out of order"));
                }
                t.status = TriggerStatus::Resolved;
                t.resolved_at = Some(timestamp);
            }
            EventPayload::SprintRecorded { sprint } => self.sprints.push(sprint.clone()),
            EventPayload::AssessmentOpened {
                assessment_index,
                round_ref,
            } => {
                if *assessment_index as usize != self.assessments.len() {
                    return Err(divergence("assessment index out of order"));
                }
                self.assessments.push(CoverageAssessment::new(
                    *assessment_index,
                    *round_ref,
                    timestamp,
                ));
            }
            EventPayload::ScoresSubmitted {
                assessment_index,
                stakeholder_id,
                scores,
            } => {
                let a = self.assessment_mut(*assessment_index)?;
                a.scores
                    .entry(stakeholder_id.clone())
                    .or_default()
                    .extend(scores.iter().map(|(&c, &s)| (c, s)));
            }
            EventPayload::AssessmentCompleted { assessment_index } => {
                self.assessment_mut(*assessment_index)?.completed_at = Some(timestamp);
            }
            EventPayload::PictureBuilt { picture } => self.outcome_pictures.push(picture.clone()),
            EventPayload::VerdictRecorded {
                outcome,
                rationale,
                picture_ref,
            } => self.verdicts.push(Verdict {
                decided_at: timestamp,
                outcome: *outcome,
                rationale: rationale.clone(),
                picture_ref: picture_ref.clone(),
            }),
            EventPayload::PhaseChanged { from, to, cause } => {
                if self.phase != *from || from.transition(*cause).ok() != Some(*to) {
                    return Err(divergence(format!(
                        "phase change {from} -> {to} on {cause} from {}",
                        self.phase
                    )));
                }
                self.phase = *to;
            }
            EventPayload::AnnotationRecorded { activity, minutes } => {
                self.annotations.push(Annotation {
                    activity: activity.clone(),
                    minutes: minutes.clone(),
                    recorded_at: timestamp,
                })
            }
            EventPayload::AdjustmentRecorded { round_ref, text } => {
                self.adjustments.push(AdjustmentRecord {
                    round_ref: *round_ref,
                    text: text.clone(),
                    recorded_at: timestamp,
                })
            }
            EventPayload::PictureExported { .. } => {}
        }
        Ok(())
    }

    /// Rebuilds a session state from journal events.
    pub fn replay(events: &[AuditEvent]) -> Result<Self> {
        let (first, rest) = events
            .split_first()
            .ok_or_else(|| divergence("empty journal"))?;
        let mut state = SessionState::genesis(first.timestamp, &first.payload)?;
        for e in rest {
            state.apply(e.timestamp, &e.payload)?;
        }
        Ok(state)
    }

    fn round_mut(&mut self, index: u32) -> Result<&mut PrioritizationRound> {
        self.rounds
            .get_mut(index as usize)
            .ok_or_else(|| divergence(format!("unknown round {index}")))
    }

    fn trigger_mut(&mut self, id: &TriggerId) -> Result<&mut Trigger> {
        self.triggers
            .iter_mut()
            .find(|t| &t.trigger_id == id)
            .ok_or_else(|| divergence(format!("unknown trigger {id}")))
    }

    fn assessment_mut(&mut self, index: u32) -> Result<&mut CoverageAssessment> {
        self.assessments
            .get_mut(index as usize)
            .ok_or_else(|| divergence(format!("unknown assessment {index}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmissionAck {
    pub round_index: u32,
    pub stakeholder_id: StakeholderId,
    pub replaced: bool,
    /// Required stakeholders that have not submitted yet.
    pub awaiting: Vec<StakeholderId>,
    pub phase: Phase,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoresAck {
    pub assessment_index: u32,
    pub stakeholder_id: StakeholderId,
    pub missing: usize,
    pub complete: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundStatusView {
    pub round_index: u32,
    pub open: bool,
    pub trigger_ref: Option<TriggerId>,
    pub submitted: Vec<StakeholderId>,
    pub awaiting: Vec<StakeholderId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionStatus {
    pub session_id: SessionId,
    pub phase: Phase,
    pub token_budget: u32,
    pub rounds: Vec<RoundStatusView>,
    pub baseline_captured: bool,
    pub assessment_missing: Option<usize>,
    pub outcome_picture: Option<String>,
    pub events: usize,
}

/// A live session: current state plus its journal.
#[derive(Clone)]
pub struct Session {
    state: SessionState,
    journal: Journal,
    clock: Arc<dyn Clock>,
}

impl fmt::Debug for Session {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Session")
            .field("state", &self.state)
            .field("events", &self.journal.len())
            .finish()
    }
}

impl Session {
    /// Starts a session in `Setup` with the given deck and stakeholders.
    pub fn create(
        session_id: SessionId,
        deck: Deck,
        stakeholders: Vec<Stakeholder>,
        config: SessionConfig,
        clock: Arc<dyn Clock>,
    ) -> Result<Self> {
        deck.validate()?;
        if stakeholders.is_empty() {
            return Err(Error::NoStakeholders);
        }
        let mut payloads = vec![EventPayload::SessionCreated {
            session_id,
            deck,
            config,
        }];
        let mut seen = std::collections::BTreeSet::new();
        for s in stakeholders {
            check_stakeholder_id(&s.stakeholder_id)?;
            if !seen.insert(s.stakeholder_id.clone()) {
                return Err(Error::DuplicateStakeholder(s.stakeholder_id));
            }
            payloads.push(EventPayload::StakeholderRegistered { stakeholder: s });
        }
        let now = clock.now();
        let state = SessionState::genesis(now, &payloads[0])?;
        let mut session = Session {
            state,
            journal: Journal::default(),
            clock,
        };
        session.journal.append(now, Actor::System, payloads.remove(0));
        session.commit(&Actor::System, now, payloads)?;
        Ok(session)
    }

    /// Rebuilds a session from a verified journal.
    pub fn from_journal(journal: Journal, clock: Arc<dyn Clock>) -> Result<Self> {
        let state = SessionState::replay(journal.events())?;
        Ok(Session {
            state,
            journal,
            clock,
        })
    }

    pub fn state(&self) -> &SessionState {
        &self.state
    }

    pub fn journal(&self) -> &Journal {
        &self.journal
    }

    pub fn phase(&self) -> Phase {
        self.state.phase
    }

    pub fn set_clock(&mut self, clock: Arc<dyn Clock>) {
        self.clock = clock;
    }

    fn commit(&mut self, actor: &Actor, now: Timestamp, payloads: Vec<EventPayload>) -> Result<()> {
        let mut next = self.state.clone();
        for p in &payloads {
            next.apply(now, p)?;
        }
        for p in payloads {
            self.journal.append(now, actor.clone(), p);
        }
        self.state = next;
        Ok(())
    }

    fn phase_change(&self, from: Phase, cause: PhaseEvent) -> Result<EventPayload> {
        let to = from.transition(cause)?;
        Ok(EventPayload::PhaseChanged { from, to, cause })
    }

    fn wrong_phase(&self, action: &str) -> Error {
        Error::WrongPhase {
            action: action.to_string(),
            phase: self.state.phase,
        }
    }

    /// Permission check. Facilitator-only actions reject ordinary
    /// stakeholders; acting for someone else requires facilitator rights.
    fn authorize(
        &self,
        actor: &Actor,
        action: &str,
        facilitator_only: bool,
        on_behalf_of: Option<&StakeholderId>,
    ) -> Result<()> {
        let id = match actor {
            Actor::System => return Ok(()),
            Actor::Stakeholder(id) => id,
        };
        let who = self
            .state
            .stakeholder(id)
            .ok_or_else(|| Error::UnknownStakeholder(id.clone()))?;
        let denied = || Error::NotPermitted {
            actor: id.to_string(),
            action: action.to_string(),
        };
        if facilitator_only && !who.facilitator {
            return Err(denied());
        }
        if let Some(target) = on_behalf_of {
            if target != id && !who.facilitator {
                return Err(denied());
            }
        }
        Ok(())
    }

    pub fn add_stakeholder(&mut self, actor: &Actor, stakeholder: Stakeholder) -> Result<()> {
        self.authorize(actor, "register stakeholders", true, None)?;
        if self.state.phase == Phase::Concluded {
            return Err(self.wrong_phase("register stakeholders"));
        }
        check_stakeholder_id(&stakeholder.stakeholder_id)?;
        if self.state.stakeholder(&stakeholder.stakeholder_id).is_some() {
            return Err(Error::DuplicateStakeholder(stakeholder.stakeholder_id));
        }
        let now = self.clock.now();
        self.commit(actor, now, vec![EventPayload::StakeholderRegistered { stakeholder }])
    }

    /// Opens round 0 during setup, or a re-prioritization round citing a
    /// fired trigger.
    pub fn open_round(&mut self, actor: &Actor, trigger_ref: Option<TriggerId>) -> Result<u32> {
        self.authorize(actor, "open rounds", true, None)?;
        if let Some(open) = self.state.open_round() {
            return Err(Error::RoundAlreadyOpen(open.round_index));
        }
        let round_index = self.state.rounds.len() as u32;
        match self.state.phase {
            Phase::Setup => {
                if trigger_ref.is_some() {
                    return Err(self.wrong_phase("cite a trigger for the baseline round"));
                }
            }
            Phase::Reprioritization => {
                let id = trigger_ref.as_ref().ok_or(Error::MissingTrigger)?;
                let trigger = self
                    .state
                    .trigger(id)
                    .ok_or_else(|| Error::UnknownTrigger(id.clone()))?;
                if trigger.status != TriggerStatus::Fired {
                    return Err(Error::InvalidTriggerState {
                        trigger: id.clone(),
                        status: trigger.status.to_string(),
                    });
                }
            }
            _ => return Err(self.wrong_phase("open a round")),
        }
        let now = self.clock.now();
        self.commit(
            actor,
            now,
            vec![EventPayload::RoundOpened {
                round_index,
                trigger_ref,
            }],
        )?;
        Ok(round_index)
    }

    fn awaiting(&self, round: &PrioritizationRound) -> Vec<StakeholderId> {
        self.state
            .required_stakeholders()
            .filter(|s| !round.allocations.contains_key(*s))
            .cloned()
            .collect()
    }

    pub fn submit_allocation(
        &mut self,
        actor: &Actor,
        round_index: u32,
        allocation: TokenAllocation,
    ) -> Result<SubmissionAck> {
        self.authorize(actor, "submit for another stakeholder", false, Some(&allocation.stakeholder_id))?;
        if self.state.stakeholder(&allocation.stakeholder_id).is_none() {
            return Err(Error::UnknownStakeholder(allocation.stakeholder_id));
        }
        let round = self
            .state
            .round(round_index)
            .ok_or(Error::UnknownRound(round_index))?;
        if round.is_closed() {
            return Err(Error::RoundClosed(round_index));
        }
        crate::model::validate_allocation(&allocation, &self.state.deck)?;
        let replaced = round.allocations.contains_key(&allocation.stakeholder_id);
        if replaced && !self.state.config.allow_resubmission {
            return Err(Error::DuplicateSubmission {
                stakeholder: allocation.stakeholder_id,
                round: round_index,
            });
        }
        let stakeholder_id = allocation.stakeholder_id.clone();
        let now = self.clock.now();
        self.commit(
            actor,
            now,
            vec![EventPayload::AllocationSubmitted {
                round_index,
                allocation,
                replaced,
            }],
        )?;
        let round = self.state.round(round_index).expect("round exists");
        Ok(SubmissionAck {
            round_index,
            stakeholder_id,
            replaced,
            awaiting: self.awaiting(round),
            phase: self.state.phase,
        })
    }

    /// Closes a round once every required stakeholder has submitted. Closing
    /// round 0 captures the target state and starts development.
    pub fn close_round(&mut self, actor: &Actor, round_index: u32) -> Result<PriorityTable> {
        self.authorize(actor, "close rounds", true, None)?;
        let round = self
            .state
            .round(round_index)
            .ok_or(Error::UnknownRound(round_index))?;
        if round.is_closed() {
            return Err(Error::RoundClosed(round_index));
        }
        let missing = self.awaiting(round);
        if !missing.is_empty() {
            return Err(Error::MissingAllocations(missing));
        }
        if round.allocations.is_empty() {
            return Err(Error::EmptyRound(round_index));
        }
        let now = self.clock.now();
        let mut closed = round.clone();
        closed.status = RoundStatus::Closed;
        closed.closed_at = Some(now);
        let priorities = metrics::card_priorities(&closed, &self.state.deck)?;

        let mut payloads = vec![EventPayload::RoundClosed {
            round_index,
            priorities: priorities.clone(),
        }];
        if round_index == 0 {
            if self.state.baseline_picture.is_some() {
                return Err(Error::BaselineAlreadyExists);
            }
            let picture = picture::build_target_state(&closed, &self.state.deck, now)?;
            payloads.push(EventPayload::BaselineCaptured { picture });
            payloads.push(self.phase_change(self.state.phase, PhaseEvent::BaselineCaptured)?);
        } else {
            if let Some(trigger_id) = closed.trigger_ref.clone() {
                payloads.push(EventPayload::TriggerResolved { trigger_id });
            }
            payloads.push(self.phase_change(self.state.phase, PhaseEvent::ReprioritizationClosed)?);
        }
        self.commit(actor, now, payloads)?;
        Ok(priorities)
    }

    pub fn register_trigger(
        &mut self,
        actor: &Actor,
        trigger_id: Option<TriggerId>,
        description: impl Into<String>,
        category: TriggerCategory,
    ) -> Result<TriggerId> {
        self.authorize(actor, "register triggers", true, None)?;
        if self.state.phase == Phase::Concluded {
            return Err(self.wrong_phase("register triggers"));
        }
        let trigger_id = trigger_id.unwrap_or_else(|| self.next_trigger_id("t"));
        if self.state.trigger(&trigger_id).is_some() {
            return Err(Error::DuplicateTrigger(trigger_id));
        }
        let now = self.clock.now();
        self.commit(
            actor,
            now,
            vec![EventPayload::TriggerRegistered {
                trigger_id: trigger_id.clone(),
                description: description.into(),
                category,
            }],
        )?;
        Ok(trigger_id)
    }

    fn next_trigger_id(&self, prefix: &str) -> TriggerId {
        (self.state.triggers.len() + 1..)
            .map(|n| TriggerId(format!("{prefix}{n}")))
            .find(|id| self.state.trigger(id).is_none())
            .expect("unbounded range")
    }

    /// Fires a registered trigger, moving development into re-prioritization.
    pub fn fire_trigger(&mut self, actor: &Actor, trigger_id: &TriggerId) -> Result<TriggerStatus> {
        self.authorize(actor, "fire triggers", true, None)?;
        if self.state.phase != Phase::Development {
            return Err(self.wrong_phase("fire a trigger"));
        }
        let trigger = self
            .state
            .trigger(trigger_id)
            .ok_or_else(|| Error::UnknownTrigger(trigger_id.clone()))?;
        if trigger.status != TriggerStatus::Registered {
            return Err(Error::InvalidTriggerState {
                trigger: trigger_id.clone(),
                status: trigger.status.to_string(),
            });
        }
        let now = self.clock.now();
        let payloads = vec![
            EventPayload::TriggerFired {
                trigger_id: trigger_id.clone(),
            },
            self.phase_change(Phase::Development, PhaseEvent::TriggerFired)?,
        ];
        self.commit(actor, now, payloads)?;
        Ok(TriggerStatus::Fired)
    }

    pub fn record_sprint(&mut self, actor: &Actor, sprint: SprintRecord) -> Result<()> {
        self.authorize(actor, "record sprints", false, None)?;
        if self.state.phase != Phase::Development {
            return Err(self.wrong_phase("record a sprint"));
        }
        if let Some(&bad) = sprint
            .selected_card_ids
            .iter()
            .find(|c| !self.state.deck.contains(**c))
        {
            return Err(Error::UnknownCard(bad));
        }
        let now = self.clock.now();
        self.commit(actor, now, vec![EventPayload::SprintRecorded { sprint }])
    }

    /// Moves development into assessment against the latest closed round.
    pub fn begin_assessment(&mut self, actor: &Actor) -> Result<u32> {
        self.authorize(actor, "start assessments", true, None)?;
        if self.state.phase != Phase::Development {
            return Err(self.wrong_phase("start an assessment"));
        }
        let round_ref = self
            .state
            .latest_closed_round()
            .ok_or(Error::NoBaseline)?
            .round_index;
        let assessment_index = self.state.assessments.len() as u32;
        let now = self.clock.now();
        let payloads = vec![
            EventPayload::AssessmentOpened {
                assessment_index,
                round_ref,
            },
            self.phase_change(Phase::Development, PhaseEvent::AssessmentStarted)?,
        ];
        self.commit(actor, now, payloads)?;
        Ok(assessment_index)
    }

    fn open_assessment(&self, action: &str) -> Result<&CoverageAssessment> {
        if self.state.phase != Phase::Assessment {
            return Err(self.wrong_phase(action));
        }
        self.state
            .current_assessment()
            .ok_or_else(|| self.wrong_phase(action))
    }

    fn completion_payloads(&self, assessment: &CoverageAssessment, now: Timestamp) -> Result<Vec<EventPayload>> {
        let round = self
            .state
            .round(assessment.round_ref)
            .ok_or(Error::UnknownRound(assessment.round_ref))?;
        let picture = picture::build_outcome_picture(
            &self.state.deck,
            self.state.required_stakeholders(),
            round,
            assessment,
            self.state.baseline_picture.as_ref(),
            RenderMode::SizeCoding,
            now,
        )?;
        Ok(vec![
            EventPayload::AssessmentCompleted {
                assessment_index: assessment.assessment_index,
            },
            EventPayload::PictureBuilt { picture },
        ])
    }

    /// Records one stakeholder's 1-5 coverage scores. When the last required
    /// score arrives the assessment completes and the outcome picture is built.
    pub fn submit_scores(
        &mut self,
        actor: &Actor,
        stakeholder_id: &StakeholderId,
        scores: &BTreeMap<CardId, i64>,
    ) -> Result<ScoresAck> {
        self.authorize(actor, "score for another stakeholder", false, Some(stakeholder_id))?;
        let assessment = self.open_assessment("submit scores")?;
        if assessment.is_complete() {
            return Err(self.wrong_phase("change scores of a completed assessment"));
        }
        if self.state.stakeholder(stakeholder_id).is_none() {
            return Err(Error::UnknownStakeholder(stakeholder_id.clone()));
        }
        let mut checked = BTreeMap::new();
        for (&card, &value) in scores {
            if !self.state.deck.contains(card) {
                return Err(Error::UnknownCard(card));
            }
            checked.insert(card, LikertScore::new(value)?);
        }
        let assessment_index = assessment.assessment_index;
        let mut merged = assessment.clone();
        merged
            .scores
            .entry(stakeholder_id.clone())
            .or_default()
            .extend(checked.iter().map(|(&c, &s)| (c, s)));
        let missing = merged
            .missing(self.state.required_stakeholders(), &self.state.deck)
            .len();

        let now = self.clock.now();
        let mut payloads = vec![EventPayload::ScoresSubmitted {
            assessment_index,
            stakeholder_id: stakeholder_id.clone(),
            scores: checked,
        }];
        if missing == 0 {
            payloads.extend(self.completion_payloads(&merged, now)?);
        }
        self.commit(actor, now, payloads)?;
        Ok(ScoresAck {
            assessment_index,
            stakeholder_id: stakeholder_id.clone(),
            missing,
            complete: missing == 0,
        })
    }

    /// Finalizes the current assessment, failing while scores are missing.
    pub fn complete_assessment(&mut self, actor: &Actor) -> Result<CoverageAssessment> {
        self.authorize(actor, "complete assessments", true, None)?;
        let assessment = self.open_assessment("complete an assessment")?;
        if assessment.is_complete() {
            return Ok(assessment.clone());
        }
        let missing = assessment.missing(self.state.required_stakeholders(), &self.state.deck);
        if !missing.is_empty() {
            return Err(Error::IncompleteAssessment { missing });
        }
        let now = self.clock.now();
        let payloads = self.completion_payloads(assessment, now)?;
        self.commit(actor, now, payloads)?;
        Ok(self.state.current_assessment().expect("assessment exists").clone())
    }

    /// Records the conclusion of the review: sufficient ends the process,
    /// return loops back to re-prioritization through an automatic trigger.
    pub fn record_verdict(
        &mut self,
        actor: &Actor,
        outcome: VerdictOutcome,
        rationale: impl Into<String>,
    ) -> Result<Phase> {
        self.authorize(actor, "record verdicts", true, None)?;
        if self.state.phase != Phase::Assessment {
            return Err(self.wrong_phase("record a verdict"));
        }
        let picture = self
            .state
            .current_outcome_picture()
            .ok_or(Error::NoOutcomePicture)?;
        let rationale = rationale.into();
        let mut payloads = vec![EventPayload::VerdictRecorded {
            outcome,
            rationale: rationale.clone(),
            picture_ref: picture.picture_id.clone(),
        }];
        match outcome {
            VerdictOutcome::Sufficient => {
                payloads.push(self.phase_change(Phase::Assessment, PhaseEvent::VerdictSufficient)?);
            }
            VerdictOutcome::ReturnToReprioritization => {
                let trigger_id = self.next_trigger_id("verdict-");
                payloads.push(EventPayload::TriggerRegistered {
                    trigger_id: trigger_id.clone(),
                    description: format!("assessment verdict: {rationale}"),
                    category: TriggerCategory::Other,
                });
                payloads.push(EventPayload::TriggerFired { trigger_id });
                payloads.push(self.phase_change(Phase::Assessment, PhaseEvent::VerdictReturn)?);
            }
        }
        let now = self.clock.now();
        self.commit(actor, now, payloads)?;
        Ok(self.state.phase)
    }

    /// Journals minutes of a human activity (workshop, communication session,
    /// ethical impact review).
    pub fn record_annotation(
        &mut self,
        actor: &Actor,
        activity: impl Into<String>,
        minutes: impl Into<String>,
    ) -> Result<()> {
        self.authorize(actor, "record annotations", false, None)?;
        let now = self.clock.now();
        self.commit(
            actor,
            now,
            vec![EventPayload::AnnotationRecorded {
                activity: activity.into(),
                minutes: minutes.into(),
            }],
        )
    }

    pub fn record_adjustment(&mut self, actor: &Actor, round_ref: u32, text: impl Into<String>) -> Result<()> {
        self.authorize(actor, "record adjustments", false, None)?;
        self.state.round(round_ref).ok_or(Error::UnknownRound(round_ref))?;
        let now = self.clock.now();
        self.commit(
            actor,
            now,
            vec![EventPayload::AdjustmentRecorded {
                round_ref,
                text: text.into(),
            }],
        )
    }

    pub fn record_export(
        &mut self,
        actor: &Actor,
        picture_id: &str,
        format: &str,
        content: &[u8],
    ) -> Result<()> {
        self.authorize(actor, "export pictures", false, None)?;
        let now = self.clock.now();
        self.commit(
            actor,
            now,
            vec![EventPayload::PictureExported {
                picture_id: picture_id.to_string(),
                format: format.to_string(),
                content_digest: sha256_hex(content),
            }],
        )
    }

    pub fn target_picture(&self) -> Result<&SituationalPicture> {
        self.state.baseline_picture.as_ref().ok_or(Error::NoBaseline)
    }

    /// Latest outcome picture, optionally switched to connector mode.
    pub fn outcome_picture(&self, mode: RenderMode) -> Result<SituationalPicture> {
        let picture = self
            .state
            .outcome_pictures
            .last()
            .ok_or(Error::NoOutcomePicture)?;
        Ok(match mode {
            RenderMode::SizeCoding => picture.clone(),
            RenderMode::Connector => picture::with_connectors(picture, self.target_picture()?),
        })
    }

    pub fn delta_report(&self) -> Result<DeltaReport> {
        picture::delta_report(
            &self.state.deck,
            self.target_picture()?,
            &self.state.rounds,
            &self.state.triggers,
        )
    }

    pub fn priorities(&self, round_index: u32) -> Result<PriorityTable> {
        let round = self
            .state
            .round(round_index)
            .ok_or(Error::UnknownRound(round_index))?;
        metrics::card_priorities(round, &self.state.deck)
    }

    pub fn harmony(&self, round_index: u32) -> Result<HarmonyReport> {
        let round = self
            .state
            .round(round_index)
            .ok_or(Error::UnknownRound(round_index))?;
        metrics::harmony_report(round, &self.state.deck)
    }

    pub fn status(&self) -> SessionStatus {
        let rounds = self
            .state
            .rounds
            .iter()
            .map(|r| RoundStatusView {
                round_index: r.round_index,
                open: !r.is_closed(),
                trigger_ref: r.trigger_ref.clone(),
                submitted: r.allocations.keys().cloned().collect(),
                awaiting: if r.is_closed() { Vec::new() } else { self.awaiting(r) },
            })
            .collect();
        let assessment_missing = match (self.state.phase, self.state.current_assessment()) {
            (Phase::Assessment, Some(a)) => Some(
                a.missing(self.state.required_stakeholders(), &self.state.deck)
                    .len(),
            ),
            _ => None,
        };
        SessionStatus {
            session_id: self.state.session_id.clone(),
            phase: self.state.phase,
            token_budget: self.state.deck.token_budget,
            rounds,
            baseline_captured: self.state.baseline_picture.is_some(),
            assessment_missing,
            outcome_picture: self
                .state
                .current_outcome_picture()
                .map(|p| p.picture_id.clone()),
            events: self.journal.len(),
        }
    }

    /// Looks up the stakeholder whose bearer token hashes to `digest`.
    pub fn stakeholder_by_token_digest(&self, digest: &str) -> Option<&Stakeholder> {
        self.state
            .stakeholders
            .iter()
            .find(|s| s.token_digest.as_deref() == Some(digest))
    }
}

fn check_stakeholder_id(id: &StakeholderId) -> Result<()> {
    let s = id.as_str();
    let ok = !s.is_empty()
        && s != "system"
        && s.chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
    if ok {
        Ok(())
    } else {
        Err(Error::OutOfRange(format!(
            "stakeholder id {s:?} must be [A-Za-z0-9._-]+ and not \"system\""
        )))
    }
}

/// Phase sequence recorded in a journal, starting from `Setup`.
pub fn phase_history(events: &[AuditEvent]) -> Vec<(Phase, PhaseEvent, Phase)> {
    events
        .iter()
        .filter_map(|e| match &e.payload {
            EventPayload::PhaseChanged { from, to, cause } => Some((*from, *cause, *to)),
            _ => None,
        })
        .collect()
}
