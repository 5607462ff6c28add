//! Deployment process engine for ECCOLA ethics workshops.
//!
//! Stakeholders distribute tokens over the ECCOLA cards, the engine turns
//! the rounds into priorities, harmony scores and a situational picture, and
//! every decision lands in a hash-chained audit journal.

pub mod engine;
pub mod error;
pub mod fraction;
pub mod metrics;
pub mod model;
pub mod persistence;
pub mod picture;
pub mod scenario;

pub use engine::{Actor, AuditEvent, Clock, EventKind, EventPayload, Session, SystemClock};
pub use error::{Error, ErrorClass, Result};
pub use fraction::Fraction;
pub use model::{CardId, Deck, Phase, PhaseEvent, SessionId, Stakeholder, StakeholderId};
pub use picture::{ChartModel, RenderConfig, RenderMode, SituationalPicture};
