#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::Arc;

use chrono::{Duration, TimeZone, Utc};
use eccola_deploy::engine::{Actor, Session, SteppingClock};
use eccola_deploy::model::{
    Card, CardId, Deck, SessionConfig, SessionId, SprintRecord, Stakeholder, StakeholderId,
    Theme, TokenAllocation, TriggerCategory, TriggerStatus, VerdictOutcome,
};
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::Rng;

pub fn clock() -> Arc<SteppingClock> {
    Arc::new(SteppingClock::new(
        Utc.with_ymd_and_hms(2026, 6, 1, 12, 0, 0).unwrap(),
        Duration::milliseconds(1500),
    ))
}

/// Spreads `budget` tokens over `cards` cards at random.
pub fn random_tokens(rng: &mut StdRng, cards: u32, budget: u32) -> BTreeMap<CardId, i64> {
    let mut tokens = BTreeMap::new();
    for _ in 0..budget {
        *tokens.entry(CardId(rng.gen_range(1..=cards))).or_insert(0) += 1;
    }
    tokens
}

pub fn small_deck(cards: u32) -> Deck {
    let cards = (1..=cards)
        .map(|i| Card {
            card_id: CardId(i),
            name: format!("card {i}"),
            theme: Theme::ALL[(i as usize - 1) % Theme::ALL.len()],
        })
        .collect();
    Deck::new(cards).unwrap()
}

/// Drives a session through `steps` random commands. Most commands are
/// chosen to make progress in the current phase; some are arbitrary and
/// may be rejected, which must leave the session untouched.
pub fn random_session(rng: &mut StdRng, steps: usize) -> Session {
    let cards = rng.gen_range(3..=8);
    let people: Vec<Stakeholder> = (1..=rng.gen_range(2..=4))
        .map(|i| {
            let s = Stakeholder::new(format!("s{i}"), format!("S{i}"), "member");
            if i == 1 {
                s.facilitator()
            } else {
                s
            }
        })
        .collect();
    let mut session = Session::create(
        SessionId::new(format!("rand-{}", rng.gen::<u16>())),
        small_deck(cards),
        people,
        SessionConfig {
            allow_resubmission: rng.gen_bool(0.8),
        },
        clock(),
    )
    .unwrap();
    for _ in 0..steps {
        step(&mut session, rng);
    }
    session
}

fn step(session: &mut Session, rng: &mut StdRng) {
    let sys = Actor::System;
    let state = session.state();
    let cards = state.deck.cards.len() as u32;
    let ids: Vec<StakeholderId> = state.stakeholders.iter().map(|s| s.stakeholder_id.clone()).collect();
    let who = ids.choose(rng).unwrap().clone();
    let actor = if rng.gen_bool(0.9) {
        sys.clone()
    } else {
        Actor::Stakeholder(who.clone())
    };
    let before = session.journal().len();
    let snapshot = session.state().clone();

    let open = state.open_round().map(|r| r.round_index);
    let fired = state
        .triggers
        .iter()
        .find(|t| t.status == TriggerStatus::Fired)
        .map(|t| t.trigger_id.clone());
    let ok = match rng.gen_range(0..12) {
        0 => session.open_round(&actor, fired).is_ok(),
        1..=3 => {
            let round = open.unwrap_or(0);
            let budget = if rng.gen_bool(0.9) { cards } else { cards + 1 };
            let alloc = TokenAllocation {
                stakeholder_id: who,
                tokens: random_tokens(rng, cards, budget),
                rationale: rng.gen_bool(0.3).then(|| "shifted".to_string()),
            };
            session.submit_allocation(&actor, round, alloc).is_ok()
        }
        4 => session.close_round(&actor, open.unwrap_or(0)).is_ok(),
        5 => session
            .register_trigger(&actor, None, "change", TriggerCategory::Other)
            .is_ok(),
        6 => {
            let t = state.triggers.choose(rng).map(|t| t.trigger_id.clone());
            t.is_some_and(|t| session.fire_trigger(&actor, &t).is_ok())
        }
        7 => session
            .record_sprint(
                &actor,
                SprintRecord {
                    sprint_id: format!("sp{}", rng.gen::<u8>()),
                    selected_card_ids: vec![CardId(rng.gen_range(1..=cards + 1))],
                    justification: "work".into(),
                    review_notes: String::new(),
                },
            )
            .is_ok(),
        8 => session.begin_assessment(&actor).is_ok(),
        9 => {
            let scores = (1..=cards).map(|c| (CardId(c), rng.gen_range(1..=5))).collect();
            session.submit_scores(&actor, &who, &scores).is_ok()
        }
        10 => {
            let outcome = if rng.gen_bool(0.5) {
                VerdictOutcome::Sufficient
            } else {
                VerdictOutcome::ReturnToReprioritization
            };
            session.record_verdict(&actor, outcome, "review").is_ok()
        }
        _ => session.record_annotation(&actor, "discussion", "5").is_ok(),
    };
    if !ok {
        assert_eq!(session.journal().len(), before, "rejected command appended events");
        assert_eq!(*session.state(), snapshot, "rejected command changed state");
    }
}
