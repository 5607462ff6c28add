//! Domain types shared by every other module.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::picture::SituationalPicture;

pub type Timestamp = DateTime<Utc>;

/// Card number within a deck. Displayed as `#8`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CardId(pub u32);

impl fmt::Display for CardId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

macro_rules! string_id {
    ($name:ident) => {
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn new(s: impl Into<String>) -> Self {
                Self(s.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_string())
            }
        }
    };
}

string_id!(StakeholderId);
string_id!(TriggerId);
string_id!(SessionId);

/// The eight ECCOLA themes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Theme {
    Analyze,
    Data,
    Transparency,
    AgencyAndOversight,
    SafetyAndSecurity,
    Wellbeing,
    Fairness,
    Accountability,
}

impl Theme {
    pub const ALL: [Theme; 8] = [
        Theme::Analyze,
        Theme::Data,
        Theme::Transparency,
        Theme::AgencyAndOversight,
        Theme::SafetyAndSecurity,
        Theme::Wellbeing,
        Theme::Fairness,
        Theme::Accountability,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            Theme::Analyze => "analyze",
            Theme::Data => "data",
            Theme::Transparency => "transparency",
            Theme::AgencyAndOversight => "agency & oversight",
            Theme::SafetyAndSecurity => "safety & security",
            Theme::Wellbeing => "wellbeing",
            Theme::Fairness => "fairness",
            Theme::Accountability => "accountability",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Card {
    pub card_id: CardId,
    pub name: String,
    pub theme: Theme,
}

/// Ordered cards plus the number of tokens each stakeholder distributes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Deck {
    pub cards: Vec<Card>,
    pub token_budget: u32,
}

/// Default card table: number, name, theme. Editable configuration data,
/// only card #8 (data quality) is fixed by the method description.
const DEFAULT_CARDS: [(u32, &str, Theme); 21] = [
    (1, "stakeholder analysis", Theme::Analyze),
    (2, "types of transparency", Theme::Transparency),
    (3, "explainability", Theme::Transparency),
    (4, "communication", Theme::Transparency),
    (5, "documenting trade-offs", Theme::Transparency),
    (6, "traceability", Theme::Transparency),
    (7, "privacy and data", Theme::Data),
    (8, "data quality", Theme::Data),
    (9, "access to data", Theme::Data),
    (10, "human agency", Theme::AgencyAndOversight),
    (11, "human oversight", Theme::AgencyAndOversight),
    (12, "system reliability", Theme::SafetyAndSecurity),
    (13, "system security", Theme::SafetyAndSecurity),
    (14, "system safety", Theme::SafetyAndSecurity),
    (15, "accessibility", Theme::Fairness),
    (16, "stakeholder participation", Theme::Fairness),
    (17, "environmental impact", Theme::Wellbeing),
    (18, "societal effects", Theme::Wellbeing),
    (19, "auditability", Theme::Accountability),
    (20, "ability to redress", Theme::Accountability),
    (21, "minimizing negative impacts", Theme::Accountability),
];

impl Deck {
    /// Builds a deck whose token budget equals its card count.
    pub fn new(cards: Vec<Card>) -> Result<Self> {
        let deck = Deck {
            token_budget: cards.len() as u32,
            cards,
        };
        deck.validate()?;
        Ok(deck)
    }

    /// The 21-card ECCOLA deck.
    pub fn eccola() -> Self {
        let cards = DEFAULT_CARDS
            .iter()
            .map(|&(id, name, theme)| Card {
                card_id: CardId(id),
                name: name.to_string(),
                theme,
            })
            .collect();
        Deck::new(cards).expect("default deck is valid")
    }

    pub fn validate(&self) -> Result<()> {
        if self.cards.is_empty() {
            return Err(Error::EmptyDeck);
        }
        let mut seen = BTreeSet::new();
        for card in &self.cards {
            if card.card_id.0 == 0 {
                return Err(Error::InvalidDeck("card ids start at 1".into()));
            }
            if !seen.insert(card.card_id) {
                return Err(Error::InvalidDeck(format!(
                    "duplicate card id {}",
                    card.card_id
                )));
            }
        }
        if self.token_budget as usize != self.cards.len() {
            return Err(Error::InvalidDeck(format!(
                "token budget {} must equal card count {}",
                self.token_budget,
                self.cards.len()
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.cards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cards.is_empty()
    }

    pub fn card(&self, id: CardId) -> Option<&Card> {
        self.cards.iter().find(|c| c.card_id == id)
    }

    pub fn contains(&self, id: CardId) -> bool {
        self.card(id).is_some()
    }

    pub fn card_ids(&self) -> impl Iterator<Item = CardId> + '_ {
        self.cards.iter().map(|c| c.card_id)
    }
}

impl Default for Deck {
    fn default() -> Self {
        Deck::eccola()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stakeholder {
    pub stakeholder_id: StakeholderId,
    pub display_name: String,
    /// Free text, e.g. "compliance" or "product manager".
    pub role_label: String,
    /// Rounds and assessments cannot complete without this stakeholder.
    pub required: bool,
    /// May steer rounds, triggers, assessments and verdicts.
    pub facilitator: bool,
    /// SHA-256 of the bearer token issued at registration, if any.
    pub token_digest: Option<String>,
}

impl Stakeholder {
    pub fn new(id: impl Into<String>, display_name: impl Into<String>, role: impl Into<String>) -> Self {
        Stakeholder {
            stakeholder_id: StakeholderId::new(id),
            display_name: display_name.into(),
            role_label: role.into(),
            required: true,
            facilitator: false,
            token_digest: None,
        }
    }

    pub fn facilitator(mut self) -> Self {
        self.facilitator = true;
        self
    }

    pub fn optional(mut self) -> Self {
        self.required = false;
        self
    }
}

/// One stakeholder's distribution of the token budget over the deck.
/// Cards missing from `tokens` hold zero tokens.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TokenAllocation {
    pub stakeholder_id: StakeholderId,
    pub tokens: BTreeMap<CardId, i64>,
    pub rationale: Option<String>,
}

impl TokenAllocation {
    pub fn new(stakeholder: impl Into<String>, tokens: impl IntoIterator<Item = (u32, i64)>) -> Self {
        TokenAllocation {
            stakeholder_id: StakeholderId::new(stakeholder),
            tokens: tokens.into_iter().map(|(c, t)| (CardId(c), t)).collect(),
            rationale: None,
        }
    }

    pub fn with_rationale(mut self, rationale: impl Into<String>) -> Self {
        self.rationale = Some(rationale.into());
        self
    }

    pub fn tokens_on(&self, card: CardId) -> i64 {
        self.tokens.get(&card).copied().unwrap_or(0)
    }

    pub fn total(&self) -> i64 {
        self.tokens.values().sum()
    }
}

/// Checks an allocation against the deck: known cards, no negative values and
/// an exact spend of the token budget.
pub fn validate_allocation(alloc: &TokenAllocation, deck: &Deck) -> Result<()> {
    for (&card, &tokens) in &alloc.tokens {
        if !deck.contains(card) {
            return Err(Error::UnknownCard(card));
        }
        if tokens < 0 {
            return Err(Error::NegativeTokens { card, tokens });
        }
    }
    let sum = alloc.total();
    if sum != i64::from(deck.token_budget) {
        return Err(Error::BudgetMismatch {
            stakeholder: Some(alloc.stakeholder_id.clone()),
            actual: sum,
            expected: deck.token_budget,
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoundStatus {
    Open,
    Closed,
}

/// A prioritization round. Round 0 is the baseline, later rounds are
/// re-prioritizations started by a trigger.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrioritizationRound {
    pub round_index: u32,
    pub opened_at: Timestamp,
    pub closed_at: Option<Timestamp>,
    pub trigger_ref: Option<TriggerId>,
    pub allocations: BTreeMap<StakeholderId, TokenAllocation>,
    pub status: RoundStatus,
}

impl PrioritizationRound {
    pub fn open(round_index: u32, opened_at: Timestamp, trigger_ref: Option<TriggerId>) -> Self {
        PrioritizationRound {
            round_index,
            opened_at,
            closed_at: None,
            trigger_ref,
            allocations: BTreeMap::new(),
            status: RoundStatus::Open,
        }
    }

    pub fn is_closed(&self) -> bool {
        self.status == RoundStatus::Closed
    }

    /// Token values of every submitted allocation for one card.
    pub fn tokens_for(&self, card: CardId) -> Vec<i64> {
        self.allocations.values().map(|a| a.tokens_on(card)).collect()
    }
}

/// A 1-5 Likert agreement score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "i64")]
pub struct LikertScore(u8);

impl LikertScore {
    pub const LABELS: [&'static str; 5] = [
        "strongly disagree",
        "disagree",
        "neither agree nor disagree",
        "agree",
        "agree strongly",
    ];

    pub fn new(value: i64) -> Result<Self> {
        if (1..=5).contains(&value) {
            Ok(LikertScore(value as u8))
        } else {
            Err(Error::ScoreOutOfRange(value))
        }
    }

    pub fn value(&self) -> u8 {
        self.0
    }

    pub fn label(&self) -> &'static str {
        Self::LABELS[usize::from(self.0) - 1]
    }
}

impl TryFrom<i64> for LikertScore {
    type Error = Error;
    fn try_from(v: i64) -> Result<Self> {
        LikertScore::new(v)
    }
}

impl From<LikertScore> for i64 {
    fn from(s: LikertScore) -> i64 {
        i64::from(s.0)
    }
}

/// Per-stakeholder coverage scores for every card.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoverageAssessment {
    pub assessment_index: u32,
    /// Round whose priorities the scores are given against.
    pub round_ref: u32,
    pub assessed_at: Timestamp,
    pub completed_at: Option<Timestamp>,
    pub scores: BTreeMap<StakeholderId, BTreeMap<CardId, LikertScore>>,
}

impl CoverageAssessment {
    pub fn new(assessment_index: u32, round_ref: u32, assessed_at: Timestamp) -> Self {
        CoverageAssessment {
            assessment_index,
            round_ref,
            assessed_at,
            completed_at: None,
            scores: BTreeMap::new(),
        }
    }

    pub fn score(&self, stakeholder: &StakeholderId, card: CardId) -> Option<LikertScore> {
        self.scores.get(stakeholder).and_then(|m| m.get(&card)).copied()
    }

    pub fn scores_for(&self, card: CardId) -> Vec<LikertScore> {
        self.scores.values().filter_map(|m| m.get(&card)).copied().collect()
    }

    /// (stakeholder, card) pairs still unscored, in stakeholder then card order.
    pub fn missing<'a>(
        &self,
        required: impl IntoIterator<Item = &'a StakeholderId>,
        deck: &Deck,
    ) -> Vec<(StakeholderId, CardId)> {
        let mut out = Vec::new();
        for s in required {
            for card in deck.card_ids() {
                if self.score(s, card).is_none() {
                    out.push((s.clone(), card));
                }
            }
        }
        out
    }

    pub fn is_complete(&self) -> bool {
        self.completed_at.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriggerCategory {
    Regulation,
    StakeholderRequest,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriggerStatus {
    Registered,
    Fired,
    Resolved,
}

impl fmt::Display for TriggerStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TriggerStatus::Registered => "registered",
            TriggerStatus::Fired => "fired",
            TriggerStatus::Resolved => "resolved",
        })
    }
}

/// A pre-agreed event that starts a re-prioritization.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Trigger {
    pub trigger_id: TriggerId,
    pub description: String,
    pub category: TriggerCategory,
    pub status: TriggerStatus,
    pub registered_at: Timestamp,
    pub fired_at: Option<Timestamp>,
    pub resolved_at: Option<Timestamp>,
}

/// Journal entry for one development sprint's card work.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SprintRecord {
    pub sprint_id: String,
    pub selected_card_ids: Vec<CardId>,
    pub justification: String,
    pub review_notes: String,
}

/// Free-text minutes of a human activity such as a workshop or a
/// communication session.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Annotation {
    pub activity: String,
    pub minutes: String,
    pub recorded_at: Timestamp,
}

/// Requirement, user story or plan adjustments that follow a round.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdjustmentRecord {
    pub round_ref: u32,
    pub text: String,
    pub recorded_at: Timestamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictOutcome {
    Sufficient,
    ReturnToReprioritization,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Verdict {
    pub decided_at: Timestamp,
    pub outcome: VerdictOutcome,
    pub rationale: String,
    pub picture_ref: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Phase {
    Setup,
    Development,
    Reprioritization,
    Assessment,
    Concluded,
}

impl Phase {
    pub const ALL: [Phase; 5] = [
        Phase::Setup,
        Phase::Development,
        Phase::Reprioritization,
        Phase::Assessment,
        Phase::Concluded,
    ];

    /// The legal transition relation of the deployment process.
    pub fn transition(self, event: PhaseEvent) -> Result<Phase> {
        use Phase::*;
        use PhaseEvent::*;
        match (self, event) {
            (Setup, BaselineCaptured) => Ok(Development),
            (Development, TriggerFired) => Ok(Reprioritization),
            (Reprioritization, ReprioritizationClosed) => Ok(Development),
            (Development, AssessmentStarted) => Ok(Assessment),
            (Assessment, VerdictSufficient) => Ok(Concluded),
            (Assessment, VerdictReturn) => Ok(Reprioritization),
            (from, event) => Err(Error::IllegalTransition { from, event }),
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Events that move a session between phases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseEvent {
    BaselineCaptured,
    TriggerFired,
    ReprioritizationClosed,
    AssessmentStarted,
    VerdictSufficient,
    VerdictReturn,
}

impl PhaseEvent {
    pub const ALL: [PhaseEvent; 6] = [
        PhaseEvent::BaselineCaptured,
        PhaseEvent::TriggerFired,
        PhaseEvent::ReprioritizationClosed,
        PhaseEvent::AssessmentStarted,
        PhaseEvent::VerdictSufficient,
        PhaseEvent::VerdictReturn,
    ];
}

impl fmt::Display for PhaseEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PhaseEvent::BaselineCaptured => "baseline_captured",
            PhaseEvent::TriggerFired => "trigger_fired",
            PhaseEvent::ReprioritizationClosed => "reprioritization_closed",
            PhaseEvent::AssessmentStarted => "assessment_started",
            PhaseEvent::VerdictSufficient => "verdict=sufficient",
            PhaseEvent::VerdictReturn => "verdict=return",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionConfig {
    /// Allow a stakeholder to replace their allocation while a round is open.
    pub allow_resubmission: bool,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            allow_resubmission: true,
        }
    }
}

/// Materialized state of one deployment session.
///
/// Only ever produced by folding audit events, see [`crate::engine`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionState {
    pub session_id: SessionId,
    pub created_at: Timestamp,
    pub config: SessionConfig,
    pub phase: Phase,
    pub deck: Deck,
    pub stakeholders: Vec<Stakeholder>,
    pub rounds: Vec<PrioritizationRound>,
    pub triggers: Vec<Trigger>,
    pub sprints: Vec<SprintRecord>,
    pub baseline_picture: Option<SituationalPicture>,
    pub outcome_pictures: Vec<SituationalPicture>,
    pub assessments: Vec<CoverageAssessment>,
    pub verdicts: Vec<Verdict>,
    pub annotations: Vec<Annotation>,
    pub adjustments: Vec<AdjustmentRecord>,
}

impl SessionState {
    pub fn stakeholder(&self, id: &StakeholderId) -> Option<&Stakeholder> {
        self.stakeholders.iter().find(|s| &s.stakeholder_id == id)
    }

    pub fn required_stakeholders(&self) -> impl Iterator<Item = &StakeholderId> {
        self.stakeholders
            .iter()
            .filter(|s| s.required)
            .map(|s| &s.stakeholder_id)
    }

    pub fn round(&self, index: u32) -> Option<&PrioritizationRound> {
        self.rounds.get(index as usize)
    }

    pub fn open_round(&self) -> Option<&PrioritizationRound> {
        self.rounds.iter().find(|r| !r.is_closed())
    }

    pub fn latest_closed_round(&self) -> Option<&PrioritizationRound> {
        self.rounds.iter().rev().find(|r| r.is_closed())
    }

    pub fn trigger(&self, id: &TriggerId) -> Option<&Trigger> {
        self.triggers.iter().find(|t| &t.trigger_id == id)
    }

    pub fn current_assessment(&self) -> Option<&CoverageAssessment> {
        self.assessments.last()
    }

    /// Outcome picture built from the most recent assessment, if any.
    pub fn current_outcome_picture(&self) -> Option<&SituationalPicture> {
        let assessment = self.current_assessment()?;
        self.outcome_pictures
            .iter()
            .rev()
            .find(|p| p.assessment_ref == Some(assessment.assessment_index))
    }
}
