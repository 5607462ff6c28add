//! WebAssembly bindings for the browser demo in `www/`.
//!
//! The plain functions return `Result<String, String>` so they can be tested
//! natively; the `#[wasm_bindgen]` wrappers turn errors into JS exceptions.

use std::collections::BTreeSet;

use eccola_deploy::engine::Actor;
use eccola_deploy::persistence::import_allocations_csv;
use eccola_deploy::picture::render_svg;
use eccola_deploy::scenario::{self, Stop};
use eccola_deploy::{Deck, RenderConfig, RenderMode, Session, SessionId, Stakeholder};
use serde_json::json;
use wasm_bindgen::prelude::*;

/// Closes a round 0 built from a `stakeholder_id,card_id,tokens` CSV over
/// the default deck. Every stakeholder id in the file becomes a participant.
fn baseline_from_csv(csv: &str) -> Result<Session, String> {
    let ids: BTreeSet<&str> = csv
        .lines()
        .skip(1)
        .filter_map(|l| l.split(',').next())
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect();
    let people = ids
        .into_iter()
        .map(|id| Stakeholder::new(id, id, "participant"))
        .collect();
    let run = || {
        let mut session = Session::create(
            SessionId::new("demo"),
            Deck::eccola(),
            people,
            Default::default(),
            scenario::reference_clock(),
        )?;
        let round = session.open_round(&Actor::System, None)?;
        import_allocations_csv(&mut session, &Actor::System, csv.as_bytes(), round)?;
        session.close_round(&Actor::System, round)?;
        Ok::<_, eccola_deploy::Error>(session)
    };
    run().map_err(|e| e.to_string())
}

/// Per-card totals, medians and deviation counts as a JSON array.
pub fn harmony_table(csv: &str) -> Result<String, String> {
    let session = baseline_from_csv(csv)?;
    let priorities = session.priorities(0).map_err(|e| e.to_string())?;
    let harmony = session.harmony(0).map_err(|e| e.to_string())?;
    let rows: Vec<_> = session
        .state()
        .deck
        .cards
        .iter()
        .map(|card| {
            let h = &harmony.cards[&card.card_id];
            json!({
                "card": card.card_id.to_string(),
                "name": card.name,
                "total": priorities.total(card.card_id),
                "median": h.median_tokens.to_string(),
                "deviations": h.deviation_count,
            })
        })
        .collect();
    Ok(serde_json::Value::from(rows).to_string())
}

/// Target-state SVG for the allocations in `csv`.
pub fn target_chart(csv: &str) -> Result<String, String> {
    let session = baseline_from_csv(csv)?;
    let picture = session.target_picture().map_err(|e| e.to_string())?;
    String::from_utf8(render_svg(picture, &RenderConfig::default())).map_err(|e| e.to_string())
}

/// Outcome SVG of the bundled reference workshop, in `size_coding` or
/// `connector` mode.
pub fn reference_outcome_chart(mode: &str) -> Result<String, String> {
    let mode = match mode {
        "size_coding" => RenderMode::SizeCoding,
        "connector" => RenderMode::Connector,
        other => return Err(format!("unknown mode {other:?}")),
    };
    let session = scenario::run(scenario::reference_clock(), Stop::Concluded).map_err(|e| e.to_string())?;
    let picture = session.outcome_picture(mode).map_err(|e| e.to_string())?;
    String::from_utf8(render_svg(&picture, &RenderConfig::default())).map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn harmony(csv: &str) -> Result<String, JsError> {
    harmony_table(csv).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = targetSvg)]
pub fn target_svg(csv: &str) -> Result<String, JsError> {
    target_chart(csv).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = referenceOutcomeSvg)]
pub fn reference_outcome_svg(mode: &str) -> Result<String, JsError> {
    reference_outcome_chart(mode).map_err(|e| JsError::new(&e))
}

/// Round 0 allocations of the reference workshop, used to prefill the page.
#[wasm_bindgen(js_name = referenceRound0)]
pub fn reference_round0() -> String {
    scenario::ROUND0_CSV.to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmony_table_covers_the_deck() {
        let rows: serde_json::Value = serde_json::from_str(&harmony_table(scenario::ROUND0_CSV).unwrap()).unwrap();
        let rows = rows.as_array().unwrap();
        assert_eq!(rows.len(), 21);
        assert_eq!(rows[7]["name"], "data quality");
        let total: i64 = rows.iter().map(|r| r["total"].as_i64().unwrap()).sum();
        assert_eq!(total, 84);
    }

    #[test]
    fn target_chart_is_gray() {
        let svg = target_chart(scenario::ROUND0_CSV).unwrap();
        assert_eq!(svg.matches("<g class=\"bubble\"").count(), 21);
        assert_eq!(svg.matches("fill=\"#a6a6a6\" fill-opacity=\"0.85\"").count(), 21);
    }

    #[test]
    fn bad_input_reports_the_engine_error() {
        let err = target_chart("stakeholder_id,card_id,tokens\na,1,20\n").unwrap_err();
        assert!(err.starts_with("BudgetMismatch"), "{err}");
        assert!(reference_outcome_chart("pie").is_err());
    }

    #[test]
    fn connector_mode_draws_ghosts() {
        let plain = reference_outcome_chart("size_coding").unwrap();
        let ghosts = reference_outcome_chart("connector").unwrap();
        assert!(!plain.contains("<line data-card="));
        assert!(ghosts.contains("<line data-card="));
    }
}
