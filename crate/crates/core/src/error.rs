use thiserror::Error;

use crate::model::{CardId, Phase, PhaseEvent, StakeholderId, TriggerId};

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the engine can report.
///
/// The variant name doubles as the machine code surfaced by the HTTP API and
/// the CLI, see [`Error::machine_code`].
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("BudgetMismatch: {actual} tokens allocated{}, budget is {expected}", for_stakeholder(.stakeholder))]
    BudgetMismatch {
        stakeholder: Option<StakeholderId>,
        actual: i64,
        expected: u32,
    },
    #[error("UnknownCard: {0}")]
    UnknownCard(CardId),
    #[error("NegativeTokens: card {card} has {tokens} tokens")]
    NegativeTokens { card: CardId, tokens: i64 },
    #[error("IllegalTransition: {event} is not allowed in phase {from}")]
    IllegalTransition { from: Phase, event: PhaseEvent },

    #[error("RoundNotClosed: round {0} is still open")]
    RoundNotClosed(u32),
    #[error("EmptyRound: round {0} has no allocations")]
    EmptyRound(u32),
    #[error("NoScores: card {0} has no coverage scores")]
    NoScores(CardId),
    #[error("OutOfRange: {0}")]
    OutOfRange(String),

    #[error("BaselineAlreadyExists: the target state was already captured")]
    BaselineAlreadyExists,
    #[error("NoBaseline: no target state has been captured")]
    NoBaseline,
    #[error("IncompleteAssessment: {} score(s) missing", .missing.len())]
    IncompleteAssessment { missing: Vec<(StakeholderId, CardId)> },

    #[error("EmptyDeck: a deck needs at least one card")]
    EmptyDeck,
    #[error("InvalidDeck: {0}")]
    InvalidDeck(String),
    #[error("NoStakeholders: a session needs at least one stakeholder")]
    NoStakeholders,
    #[error("DuplicateStakeholder: {0}")]
    DuplicateStakeholder(StakeholderId),
    #[error("UnknownStakeholder: {0}")]
    UnknownStakeholder(StakeholderId),
    #[error("NotPermitted: {actor} may not {action}")]
    NotPermitted { actor: String, action: String },

    #[error("WrongPhase: cannot {action} during {phase}")]
    WrongPhase { action: String, phase: Phase },
    #[error("RoundAlreadyOpen: round {0} is open")]
    RoundAlreadyOpen(u32),
    #[error("MissingTrigger: re-prioritization rounds need a fired trigger")]
    MissingTrigger,
    #[error("UnknownRound: {0}")]
    UnknownRound(u32),
    #[error("RoundClosed: round {0} is closed")]
    RoundClosed(u32),
    #[error("DuplicateSubmission: {stakeholder} already submitted to round {round}")]
    DuplicateSubmission { stakeholder: StakeholderId, round: u32 },
    #[error("MissingAllocations: {}", join(.0))]
    MissingAllocations(Vec<StakeholderId>),
    #[error("UnknownTrigger: {0}")]
    UnknownTrigger(TriggerId),
    #[error("DuplicateTrigger: {0}")]
    DuplicateTrigger(TriggerId),
    #[error("InvalidTriggerState: trigger {trigger} is {status}")]
    InvalidTriggerState { trigger: TriggerId, status: String },
    #[error("ScoreOutOfRange: {0} is not on the 1-5 scale")]
    ScoreOutOfRange(i64),
    #[error("NoOutcomePicture: the current assessment has no outcome picture")]
    NoOutcomePicture,

    #[error("SchemaVersionMismatch: file has {found}, expected {expected}")]
    SchemaVersionMismatch { found: u32, expected: u32 },
    #[error("CorruptJournal: event {sequence}: {reason}")]
    CorruptJournal { sequence: u64, reason: String },
    #[error("ReplayDivergence: {0}")]
    ReplayDivergence(String),
    #[error("MalformedFile: {0}")]
    MalformedFile(String),
    #[error("MalformedRow: line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("UnsupportedFormat: {0}")]
    UnsupportedFormat(String),
    #[error("Io: {0}")]
    Io(String),
}

fn for_stakeholder(s: &Option<StakeholderId>) -> String {
    match s {
        Some(id) => format!(" by {id}"),
        None => String::new(),
    }
}

fn join(ids: &[StakeholderId]) -> String {
    ids.iter()
        .map(|s| s.as_str())
        .collect::<Vec<_>>()
        .join(", ")
}

/// Coarse grouping of errors, used by the API for status codes and by the
/// CLI for exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Validation,
    Forbidden,
    NotFound,
    Conflict,
    Storage,
}

impl Error {
    pub fn machine_code(&self) -> &'static str {
        match self {
            Error::BudgetMismatch { .. } => "BudgetMismatch",
            Error::UnknownCard(_) => "UnknownCard",
            Error::NegativeTokens { .. } => "NegativeTokens",
            Error::IllegalTransition { .. } => "IllegalTransition",
            Error::RoundNotClosed(_) => "RoundNotClosed",
            Error::EmptyRound(_) => "EmptyRound",
            Error::NoScores(_) => "NoScores",
            Error::OutOfRange(_) => "OutOfRange",
            Error::BaselineAlreadyExists => "BaselineAlreadyExists",
            Error::NoBaseline => "NoBaseline",
            Error::IncompleteAssessment { .. } => "IncompleteAssessment",
            Error::EmptyDeck => "EmptyDeck",
            Error::InvalidDeck(_) => "InvalidDeck",
            Error::NoStakeholders => "NoStakeholders",
            Error::DuplicateStakeholder(_) => "DuplicateStakeholder",
            Error::UnknownStakeholder(_) => "UnknownStakeholder",
            Error::NotPermitted { .. } => "NotPermitted",
            Error::WrongPhase { .. } => "WrongPhase",
            Error::RoundAlreadyOpen(_) => "RoundAlreadyOpen",
            Error::MissingTrigger => "MissingTrigger",
            Error::UnknownRound(_) => "UnknownRound",
            Error::RoundClosed(_) => "RoundClosed",
            Error::DuplicateSubmission { .. } => "DuplicateSubmission",
            Error::MissingAllocations(_) => "MissingAllocations",
            Error::UnknownTrigger(_) => "UnknownTrigger",
            Error::DuplicateTrigger(_) => "DuplicateTrigger",
            Error::InvalidTriggerState { .. } => "InvalidTriggerState",
            Error::ScoreOutOfRange(_) => "ScoreOutOfRange",
            Error::NoOutcomePicture => "NoOutcomePicture",
            Error::SchemaVersionMismatch { .. } => "SchemaVersionMismatch",
            Error::CorruptJournal { .. } => "CorruptJournal",
            Error::ReplayDivergence(_) => "ReplayDivergence",
            Error::MalformedFile(_) => "MalformedFile",
            Error::MalformedRow { .. } => "MalformedRow",
            Error::UnsupportedFormat(_) => "UnsupportedFormat",
            Error::Io(_) => "Io",
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::BudgetMismatch { .. }
            | Error::UnknownCard(_)
            | Error::NegativeTokens { .. }
            | Error::OutOfRange(_)
            | Error::EmptyDeck
            | Error::InvalidDeck(_)
            | Error::NoStakeholders
            | Error::ScoreOutOfRange(_)
            | Error::MissingTrigger
            | Error::MalformedRow { .. }
            | Error::UnsupportedFormat(_)
            | Error::NoScores(_)
            | Error::EmptyRound(_) => ErrorClass::Validation,
            Error::NotPermitted { .. } => ErrorClass::Forbidden,
            Error::UnknownStakeholder(_) | Error::UnknownRound(_) | Error::UnknownTrigger(_) => {
                ErrorClass::NotFound
            }
            Error::IllegalTransition { .. }
            | Error::RoundNotClosed(_)
            | Error::BaselineAlreadyExists
            | Error::NoBaseline
            | Error::IncompleteAssessment { .. }
            | Error::DuplicateStakeholder(_)
            | Error::WrongPhase { .. }
            | Error::RoundAlreadyOpen(_)
            | Error::RoundClosed(_)
            | Error::DuplicateSubmission { .. }
            | Error::MissingAllocations(_)
            | Error::DuplicateTrigger(_)
            | Error::InvalidTriggerState { .. }
            | Error::NoOutcomePicture => ErrorClass::Conflict,
            Error::SchemaVersionMismatch { .. }
            | Error::CorruptJournal { .. }
            | Error::ReplayDivergence(_)
            | Error::MalformedFile(_)
            | Error::Io(_) => ErrorClass::Storage,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
