//! Reference workshop used by the demo, the CLI walkthrough and the
//! acceptance suite: four stakeholders on the 21-card deck, one regulatory
//! re-prioritization and a full coverage assessment.

use std::sync::Arc;

use chrono::{Duration, TimeZone, Utc};

use crate::engine::{Actor, Clock, Session, SteppingClock};
use crate::error::Result;
use crate::model::{
    Deck, SessionConfig, SessionId, Stakeholder, TriggerCategory, TriggerId, VerdictOutcome,
};
use crate::persistence::{import_allocations_csv, import_scores_csv};

pub const ROUND0_CSV: &str = include_str!("../data/reference/round0.csv");
pub const ROUND1_CSV: &str = include_str!("../data/reference/round1.csv");
pub const SCORES_CSV: &str = include_str!("../data/reference/scores.csv");

pub fn stakeholders() -> Vec<Stakeholder> {
    vec![
        Stakeholder::new("s1", "Product manager", "product manager"),
        Stakeholder::new("s2", "Lead developer", "developer"),
        Stakeholder::new("s3", "Compliance officer", "compliance"),
        Stakeholder::new("s4", "Risk manager", "corporate risk management"),
    ]
}

/// Non-voting facilitator who steers the workshop.
pub fn facilitator() -> Stakeholder {
    Stakeholder::new("fac", "Workshop facilitator", "facilitator")
        .facilitator()
        .optional()
}

pub fn reference_clock() -> Arc<dyn Clock> {
    Arc::new(SteppingClock::new(
        Utc.with_ymd_and_hms(2026, 3, 2, 9, 0, 0).unwrap(),
        Duration::minutes(1),
    ))
}

/// Runs the scenario up to and including the given stop point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stop {
    Baseline,
    Reprioritized,
    Assessed,
    Concluded,
}

pub fn run(clock: Arc<dyn Clock>, stop: Stop) -> Result<Session> {
    let sys = Actor::System;
    let mut session = Session::create(
        SessionId::new("reference"),
        Deck::eccola(),
        vec![facilitator()],
        SessionConfig::default(),
        clock,
    )?;
    for s in stakeholders() {
        session.add_stakeholder(&sys, s)?;
    }
    session.record_annotation(
        &sys,
        "stakeholder workshop",
        "Shared vision of the product's ethical goals; triggers agreed.",
    )?;
    let r0 = session.open_round(&sys, None)?;
    import_allocations_csv(&mut session, &sys, ROUND0_CSV.as_bytes(), r0)?;
    session.close_round(&sys, r0)?;
    if stop == Stop::Baseline {
        return Ok(session);
    }

    let trigger = session.register_trigger(
        &sys,
        Some(TriggerId::new("ai-act")),
        "new transparency obligations for AI systems",
        TriggerCategory::Regulation,
    )?;
    session.record_sprint(
        &sys,
        crate::model::SprintRecord {
            sprint_id: "sprint-1".into(),
            selected_card_ids: vec![crate::model::CardId(8), crate::model::CardId(12)],
            justification: "training data pipeline and model serving are built this sprint".into(),
            review_notes: "data quality checks added to ingestion".into(),
        },
    )?;
    session.fire_trigger(&sys, &trigger)?;
    let r1 = session.open_round(&sys, Some(trigger))?;
    import_allocations_csv(&mut session, &sys, ROUND1_CSV.as_bytes(), r1)?;
    session.close_round(&sys, r1)?;
    session.record_adjustment(&sys, r1, "Explainability user stories added to the backlog.")?;
    if stop == Stop::Reprioritized {
        return Ok(session);
    }

    session.begin_assessment(&sys)?;
    import_scores_csv(&mut session, &sys, SCORES_CSV.as_bytes())?;
    if stop == Stop::Assessed {
        return Ok(session);
    }

    session.record_verdict(
        &sys,
        VerdictOutcome::Sufficient,
        "Red cards accepted with documented mitigations for the next release.",
    )?;
    Ok(session)
}
