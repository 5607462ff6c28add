use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use chrono::{Duration, TimeZone, Utc};
use eccola_deploy::engine::{Actor, SteppingClock};
use eccola_deploy::model::{SessionConfig, TokenAllocation};
use eccola_deploy::persistence::session_to_bytes;
use eccola_deploy::{Deck, Session, SessionId, Stakeholder};
use eccola_facilitation::api::{router, AppState};
use eccola_facilitation::auth::{attach_token, SequentialTokens};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn clock() -> Arc<SteppingClock> {
    Arc::new(SteppingClock::new(
        Utc.with_ymd_and_hms(2026, 4, 1, 10, 0, 0).unwrap(),
        Duration::seconds(5),
    ))
}

fn state() -> AppState {
    AppState::ephemeral(clock(), Arc::new(SequentialTokens::new("tok")))
}

async fn call(app: &Router, method: Method, uri: &str, token: Option<&str>, body: Option<Value>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(t) = token {
        req = req.header("authorization", format!("Bearer {t}"));
    }
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = serde_json::from_slice(&bytes).unwrap_or(Value::String(String::from_utf8_lossy(&bytes).into()));
    (status, value)
}

fn people() -> Value {
    json!([
        {"stakeholder_id": "fac", "display_name": "Fay", "role_label": "facilitator", "facilitator": true, "required": false},
        {"stakeholder_id": "s1", "display_name": "Ana", "role_label": "product manager"},
        {"stakeholder_id": "s2", "display_name": "Ben", "role_label": "developer"},
        {"stakeholder_id": "s3", "display_name": "Chi", "role_label": "compliance"},
        {"stakeholder_id": "s4", "display_name": "Dee", "role_label": "corporate risk management"}
    ])
}

fn uniform() -> Value {
    json!({"tokens": (1..=21).map(|c| (c.to_string(), json!(1))).collect::<serde_json::Map<_, _>>()})
}

/// Creates session `w` and returns the app with tokens for fac, s1..s4
/// (`tok-1` .. `tok-5`).
async fn setup() -> Router {
    let app = router(state());
    let (status, body) = call(&app, Method::POST, "/sessions", None, Some(json!({"session_id": "w", "stakeholders": people()}))).await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    assert_eq!(body["tokens"]["s4"], "tok-5");
    app
}

async fn baseline(app: &Router) {
    let (status, body) = call(app, Method::POST, "/sessions/w/rounds", Some("tok-1"), None).await;
    assert_eq!((status, body["round_index"].clone()), (StatusCode::OK, json!(0)));
    for (i, s) in ["s1", "s2", "s3", "s4"].iter().enumerate() {
        let token = format!("tok-{}", i + 2);
        let uri = format!("/sessions/w/rounds/0/allocations/{s}");
        let (status, _) = call(app, Method::PUT, &uri, Some(&token), Some(uniform())).await;
        assert_eq!(status, StatusCode::OK);
    }
    let (status, _) = call(app, Method::POST, "/sessions/w/rounds/0/close", Some("tok-1"), None).await;
    assert_eq!(status, StatusCode::OK);
}

#[tokio::test]
async fn full_budget_is_accepted_with_status() {
    let app = setup().await;
    call(&app, Method::POST, "/sessions/w/rounds", Some("tok-1"), None).await;
    let (status, body) = call(&app, Method::PUT, "/sessions/w/rounds/0/allocations/s1", Some("tok-2"), Some(uniform())).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["phase"], "Setup");
    assert_eq!(body["awaiting"], json!(["s2", "s3", "s4"]));
    let (_, status_view) = call(&app, Method::GET, "/sessions/w", Some("tok-3"), None).await;
    assert_eq!(status_view["rounds"][0]["submitted"], json!(["s1"]));
    assert_eq!(status_view["token_budget"], 21);
}

#[tokio::test]
async fn short_budget_is_a_400() {
    let app = setup().await;
    call(&app, Method::POST, "/sessions/w/rounds", Some("tok-1"), None).await;
    let mut body = uniform();
    body["tokens"]["21"] = json!(0);
    let (status, err) = call(&app, Method::PUT, "/sessions/w/rounds/0/allocations/s1", Some("tok-2"), Some(body)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(err["machine_code"], "BudgetMismatch");
    assert_eq!(err["http_status"], 400);
    let (status, err) = call(&app, Method::PUT, "/sessions/w/rounds/0/allocations/s1", Some("tok-2"), Some(json!({"tokens": 3}))).await;
    assert_eq!((status, err["machine_code"].as_str()), (StatusCode::BAD_REQUEST, Some("MalformedRequest")));
}

#[tokio::test]
async fn verdict_in_development_is_a_409() {
    let app = setup().await;
    baseline(&app).await;
    let (status, err) = call(
        &app,
        Method::POST,
        "/sessions/w/verdict",
        Some("tok-1"),
        Some(json!({"outcome": "sufficient", "rationale": "done"})),
    )
    .await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(err["machine_code"], "WrongPhase");
}

#[tokio::test]
async fn roles_and_unknown_ids() {
    let app = setup().await;
    let (status, err) = call(&app, Method::POST, "/sessions/w/rounds", Some("tok-2"), None).await;
    assert_eq!((status, err["machine_code"].as_str()), (StatusCode::FORBIDDEN, Some("NotPermitted")));
    call(&app, Method::POST, "/sessions/w/rounds", Some("tok-1"), None).await;
    let (status, _) = call(&app, Method::PUT, "/sessions/w/rounds/0/allocations/s2", Some("tok-2"), Some(uniform())).await;
    assert_eq!(status, StatusCode::FORBIDDEN);
    let (status, err) = call(&app, Method::PUT, "/sessions/w/rounds/4/allocations/s1", Some("tok-2"), Some(uniform())).await;
    assert_eq!((status, err["machine_code"].as_str()), (StatusCode::NOT_FOUND, Some("UnknownRound")));
    let (status, err) = call(&app, Method::GET, "/sessions/nope", Some("tok-1"), None).await;
    assert_eq!((status, err["machine_code"].as_str()), (StatusCode::NOT_FOUND, Some("UnknownSession")));
    let (status, _) = call(&app, Method::GET, "/sessions/w", Some("bogus"), None).await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);
    let (status, _) = call(&app, Method::GET, "/sessions/w", None, None).await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);
    let (status, err) = call(&app, Method::POST, "/sessions", None, Some(json!({"session_id": "w", "stakeholders": people()}))).await;
    assert_eq!((status, err["machine_code"].as_str()), (StatusCode::CONFLICT, Some("SessionExists")));
}

#[tokio::test]
async fn registered_stakeholders_get_tokens() {
    let app = setup().await;
    let newcomer = json!({"stakeholder_id": "s5", "display_name": "Eve", "role_label": "ethics board", "required": false});
    let (status, body) = call(&app, Method::POST, "/sessions/w/stakeholders", Some("tok-1"), Some(newcomer.clone())).await;
    assert_eq!(status, StatusCode::OK);
    let token = body["token"].as_str().unwrap().to_string();
    let (status, _) = call(&app, Method::GET, "/sessions/w", Some(&token), None).await;
    assert_eq!(status, StatusCode::OK);
    let (status, err) = call(&app, Method::POST, "/sessions/w/stakeholders", Some(&token), Some(newcomer)).await;
    assert_eq!((status, err["machine_code"].as_str()), (StatusCode::FORBIDDEN, Some("NotPermitted")));
}

#[tokio::test]
async fn pictures_delta_and_audit() {
    let app = setup().await;
    let (status, err) = call(&app, Method::GET, "/sessions/w/picture?kind=target", Some("tok-1"), None).await;
    assert_eq!((status, err["machine_code"].as_str()), (StatusCode::CONFLICT, Some("NoBaseline")));
    baseline(&app).await;
    let (status, chart) = call(&app, Method::GET, "/sessions/w/picture?kind=target", Some("tok-2"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(chart["kind"], "target_state");
    assert_eq!(chart["bubbles"].as_array().unwrap().len(), 21);
    assert!(chart["bubbles"].as_array().unwrap().iter().all(|b| b["color"] == "gray"));
    let (status, svg) = call(&app, Method::GET, "/sessions/w/picture.svg?kind=target", Some("tok-2"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert!(svg.as_str().unwrap().starts_with("<?xml"));
    let (status, err) = call(&app, Method::GET, "/sessions/w/picture?kind=outcome&mode=connector", Some("tok-2"), None).await;
    assert_eq!((status, err["machine_code"].as_str()), (StatusCode::CONFLICT, Some("NoOutcomePicture")));

    let (status, t) = call(
        &app,
        Method::POST,
        "/sessions/w/triggers",
        Some("tok-1"),
        Some(json!({"description": "new regulation", "category": "regulation"})),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    let fire = format!("/sessions/w/triggers/{}/fire", t["trigger_id"].as_str().unwrap());
    let (_, fired) = call(&app, Method::POST, &fire, Some("tok-1"), None).await;
    assert_eq!(fired["phase"], "Reprioritization");
    let (status, delta) = call(&app, Method::GET, "/sessions/w/delta", Some("tok-3"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(delta["rows"].as_array().unwrap().len(), 21);

    let (_, audit) = call(&app, Method::GET, "/sessions/w/audit", Some("tok-3"), None).await;
    let seqs: Vec<u64> = audit.as_array().unwrap().iter().map(|e| e["sequence"].as_u64().unwrap()).collect();
    assert_eq!(seqs, (1..=seqs.len() as u64).collect::<Vec<_>>());
}

#[tokio::test]
async fn assessment_and_verdict_over_http() {
    let app = setup().await;
    baseline(&app).await;
    let (status, body) = call(&app, Method::POST, "/sessions/w/assessments", Some("tok-1"), None).await;
    assert_eq!((status, body["assessment_index"].clone()), (StatusCode::OK, json!(0)));
    let scores = json!({"scores": (1..=21).map(|c| (c.to_string(), json!(3))).collect::<serde_json::Map<_, _>>()});
    for (i, s) in ["s1", "s2", "s3", "s4"].iter().enumerate() {
        let uri = format!("/sessions/w/scores/{s}");
        let (status, ack) = call(&app, Method::PUT, &uri, Some(&format!("tok-{}", i + 2)), Some(scores.clone())).await;
        assert_eq!(status, StatusCode::OK);
        assert_eq!(ack["complete"], i == 3);
    }
    let (status, chart) = call(&app, Method::GET, "/sessions/w/picture?kind=outcome&mode=connector", Some("tok-2"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(chart["mode"], "connector");
    let (status, body) = call(
        &app,
        Method::POST,
        "/sessions/w/verdict",
        Some("tok-1"),
        Some(json!({"outcome": "sufficient", "rationale": "covered"})),
    )
    .await;
    assert_eq!((status, body["phase"].as_str()), (StatusCode::OK, Some("Concluded")));
}

#[tokio::test]
async fn api_and_engine_produce_identical_session_files() {
    let dir = tempfile::tempdir().unwrap();
    let state = AppState::with_storage(dir.path(), clock(), Arc::new(SequentialTokens::new("tok"))).unwrap();
    let app = router(state);
    let (status, _) = call(&app, Method::POST, "/sessions", None, Some(json!({"session_id": "w", "stakeholders": people()}))).await;
    assert_eq!(status, StatusCode::CREATED);
    baseline(&app).await;
    call(&app, Method::POST, "/sessions/w/sprints", Some("tok-1"), Some(json!({
        "sprint_id": "sp1", "selected_card_ids": [8, 12], "justification": "ingestion", "review_notes": ""
    }))).await;
    let via_api = std::fs::read(dir.path().join("w.json")).unwrap();

    let issuer = SequentialTokens::new("tok");
    let people: Vec<Stakeholder> = vec![
        Stakeholder::new("fac", "Fay", "facilitator").facilitator().optional(),
        Stakeholder::new("s1", "Ana", "product manager"),
        Stakeholder::new("s2", "Ben", "developer"),
        Stakeholder::new("s3", "Chi", "compliance"),
        Stakeholder::new("s4", "Dee", "corporate risk management"),
    ]
    .into_iter()
    .map(|mut s| {
        attach_token(&mut s, &issuer);
        s
    })
    .collect();
    let mut s = Session::create(SessionId::new("w"), Deck::eccola(), people, SessionConfig::default(), clock()).unwrap();
    let fac = Actor::Stakeholder("fac".into());
    s.open_round(&fac, None).unwrap();
    for id in ["s1", "s2", "s3", "s4"] {
        let actor = Actor::Stakeholder(id.into());
        s.submit_allocation(&actor, 0, TokenAllocation::new(id, (1..=21).map(|c| (c, 1)))).unwrap();
    }
    s.close_round(&fac, 0).unwrap();
    s.record_sprint(
        &fac,
        eccola_deploy::model::SprintRecord {
            sprint_id: "sp1".into(),
            selected_card_ids: vec![eccola_deploy::model::CardId(8), eccola_deploy::model::CardId(12)],
            justification: "ingestion".into(),
            review_notes: String::new(),
        },
    )
    .unwrap();
    assert_eq!(session_to_bytes(&s), via_api);
}

#[tokio::test]
async fn concurrent_submissions_keep_the_journal_gapless() {
    let state = state();
    let app = router(state.clone());
    let mut people = vec![json!({"stakeholder_id": "fac", "display_name": "Fay", "role_label": "facilitator", "facilitator": true, "required": false})];
    for i in 1..=24 {
        people.push(json!({"stakeholder_id": format!("p{i}"), "display_name": format!("P{i}"), "role_label": "member"}));
    }
    call(&app, Method::POST, "/sessions", None, Some(json!({"session_id": "c", "stakeholders": people}))).await;
    call(&app, Method::POST, "/sessions/c/rounds", Some("tok-1"), None).await;
    let mut tasks = Vec::new();
    for i in 1..=24 {
        let app = app.clone();
        tasks.push(tokio::spawn(async move {
            let uri = format!("/sessions/c/rounds/0/allocations/p{i}");
            let token = format!("tok-{}", i + 1);
            call(&app, Method::PUT, &uri, Some(&token), Some(uniform())).await.0
        }));
    }
    for t in tasks {
        assert_eq!(t.await.unwrap(), StatusCode::OK);
    }
    let session = state.snapshot("c").await.unwrap();
    let seqs: Vec<u64> = session.journal().events().iter().map(|e| e.sequence).collect();
    assert_eq!(seqs, (1..=seqs.len() as u64).collect::<Vec<_>>());
    assert_eq!(session.state().rounds[0].allocations.len(), 24);
}
