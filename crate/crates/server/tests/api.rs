use std::sync::Arc;

use axum::body::Body;
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use chrono::Utc;
use cueguard_core::classifier::{train, Featurizer, Hyperparams, LabeledExample, LinearModel, Origin};
use cueguard_core::feedback::ReviewStore;
use cueguard_core::gateway::{Gateway, GatewayOptions, MemoryDecisionLog};
use cueguard_core::simulator::SignatureOracle;
use cueguard_core::Category;
use cueguard_server::{router, AppState, ServerConfig};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn app_with(config: ServerConfig, ready: bool) -> Router {
    let gw = Gateway::new(Arc::new(MemoryDecisionLog::new()), GatewayOptions::default()).unwrap();
    if ready {
        gw.load_model(Arc::new(SignatureOracle::default())).unwrap();
    }
    router(Arc::new(AppState::with_gateway(Arc::new(gw), config, ReviewStore::new())))
}

fn app() -> Router {
    app_with(ServerConfig::default(), true)
}

struct Reply {
    status: StatusCode,
    content_type: String,
    body: Value,
    text: String,
}

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>, token: Option<&str>) -> Reply {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(t) = token {
        req = req.header(header::AUTHORIZATION, format!("Bearer {t}"));
    }
    let req = match body {
        Some(b) => req.header(header::CONTENT_TYPE, "application/json").body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let content_type = resp.headers().get(header::CONTENT_TYPE).map(|v| v.to_str().unwrap().to_string()).unwrap_or_default();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let text = String::from_utf8(bytes.to_vec()).unwrap();
    let body = serde_json::from_str(&text).unwrap_or(Value::Null);
    Reply { status, content_type, body, text }
}

async fn get(app: &Router, uri: &str) -> Reply {
    call(app, Method::GET, uri, None, None).await
}

async fn post(app: &Router, uri: &str, body: Value) -> Reply {
    call(app, Method::POST, uri, Some(body), None).await
}

#[tokio::test]
async fn not_ready_without_model() {
    let app = app_with(ServerConfig::default(), false);
    let h = get(&app, "/v1/healthz").await;
    assert_eq!(h.body["ready"], false);
    assert_eq!(h.body["ruleset_version"], 0);
    let r = post(&app, "/v1/decide", json!({"text": "hello"})).await;
    assert_eq!(r.status, StatusCode::SERVICE_UNAVAILABLE);
    assert_eq!(r.body["error"], "not_ready");
}

#[tokio::test]
async fn decide_returns_decision_view() {
    let app = app();
    let r = post(&app, "/v1/decide", json!({"query_id": "a1", "text": "주소 알려줘"})).await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(r.body["query_id"], "a1");
    assert_eq!(r.body["label"], "privacy");
    assert_eq!(r.body["source"], "model");
    assert_eq!(r.body["blocked"], true);
    assert_eq!(r.body["cue_prefix"], "[CATEGORY:privacy]");
    assert!(r.body["block_reason"].is_string());

    let r = post(&app, "/v1/decide", json!({"text": "오늘 날씨"})).await;
    assert_eq!(r.body["label"], "safe");
    assert_eq!(r.body["blocked"], false);
    assert!(r.body.get("block_reason").is_none());
    assert!(!r.body["query_id"].as_str().unwrap().is_empty());

    let r = post(&app, "/v1/decide", json!({"text": "   "})).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    assert_eq!(r.body["error"], "invalid_query");
}

#[tokio::test]
async fn feedback_requires_known_query() {
    let app = app();
    let r = post(&app, "/v1/feedback", json!({"query_id": "nope", "report_type": "over_blocked"})).await;
    assert_eq!(r.status, StatusCode::NOT_FOUND);
    post(&app, "/v1/decide", json!({"query_id": "q", "text": "정치 이야기"})).await;
    for expected in 1..=2 {
        let r = post(&app, "/v1/feedback", json!({"query_id": "q", "report_type": "over_blocked", "note": "fine"})).await;
        assert_eq!(r.status, StatusCode::OK);
        assert_eq!(r.body["accepted"], true);
        assert_eq!(r.body["queue_len"], expected);
    }
    let r = post(&app, "/v1/feedback", json!({"query_id": "q", "report_type": "angry"})).await;
    assert!(r.status.is_client_error());
}

#[tokio::test]
async fn staged_rules_apply_after_reload() {
    let app = app();
    let bad = post(&app, "/v1/rules", json!({"id": "w", "kind": "whitelist", "pattern": "("})).await;
    assert_eq!(bad.status, StatusCode::UNPROCESSABLE_ENTITY);

    let r = post(&app, "/v1/rules", json!({"id": "w", "kind": "whitelist", "pattern": "^정치 퀴즈"})).await;
    assert_eq!(r.status, StatusCode::CREATED);
    let before = post(&app, "/v1/decide", json!({"text": "정치 퀴즈 내줘"})).await;
    assert_eq!(before.body["label"], "controversial_factuality");

    let listed = get(&app, "/v1/rules").await;
    assert_eq!(listed.body["active"].as_array().unwrap().len(), 0);
    assert_eq!(listed.body["staged"].as_array().unwrap().len(), 1);

    let v = call(&app, Method::POST, "/v1/reload", None, None).await;
    assert_eq!(v.status, StatusCode::OK);
    assert_eq!(v.body["ruleset_version"], 1);
    let after = post(&app, "/v1/decide", json!({"text": "정치 퀴즈 내줘"})).await;
    assert_eq!(after.body["label"], "safe");
    assert_eq!(after.body["source"], "whitelist_override");
    assert_eq!(after.body["ruleset_version"], 1);

    let gone = call(&app, Method::DELETE, "/v1/rules/w", None, None).await;
    assert_eq!(gone.status, StatusCode::NO_CONTENT);
    let missing = call(&app, Method::DELETE, "/v1/rules/w", None, None).await;
    assert_eq!(missing.status, StatusCode::NOT_FOUND);
    let v = call(&app, Method::POST, "/v1/reload", Some(json!({"rules": true})), None).await;
    assert_eq!(v.body["ruleset_version"], 2);
    let h = get(&app, "/v1/healthz").await;
    assert_eq!(h.body["ruleset_version"], 2);
    assert_eq!(h.body["model_version"], "signature-oracle");

    let no_model = call(&app, Method::POST, "/v1/reload", Some(json!({"rules": false, "model": true})), None).await;
    assert_eq!(no_model.status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn operator_token_guards_mutations() {
    let config = ServerConfig { operator_token: Some("tok".into()), ..Default::default() };
    let app = app_with(config, true);
    let rule = json!({"id": "b", "kind": "blacklist", "pattern": "x", "category": "privacy"});
    assert_eq!(call(&app, Method::POST, "/v1/rules", Some(rule.clone()), None).await.status, StatusCode::UNAUTHORIZED);
    assert_eq!(call(&app, Method::POST, "/v1/rules", Some(rule.clone()), Some("wrong")).await.status, StatusCode::UNAUTHORIZED);
    assert_eq!(call(&app, Method::POST, "/v1/rules", Some(rule), Some("tok")).await.status, StatusCode::CREATED);
    assert_eq!(call(&app, Method::POST, "/v1/reload", None, None).await.status, StatusCode::UNAUTHORIZED);
    assert_eq!(get(&app, "/v1/review/samples").await.status, StatusCode::UNAUTHORIZED);
    // user-facing endpoints stay open
    assert_eq!(post(&app, "/v1/decide", json!({"text": "hi"})).await.status, StatusCode::OK);
    assert_eq!(get(&app, "/v1/healthz").await.status, StatusCode::OK);
}

#[tokio::test]
async fn analytics_endpoints() {
    let app = app();
    for (i, text) in ["주소 찾기", "주소 조회", "욕설 모음", "날씨", "정치 뉴스"].iter().enumerate() {
        post(&app, "/v1/decide", json!({"query_id": format!("x{i}"), "text": text, "user_pseudonym": "enc:0011"})).await;
    }
    let today = Utc::now().date_naive();

    let daily = get(&app, "/v1/analytics/daily").await;
    assert_eq!(daily.body.as_array().unwrap().len(), 1);
    let day = get(&app, &format!("/v1/analytics/daily?date={today}")).await;
    assert_eq!(day.body["bucket"]["total_queries"], 5);
    assert_eq!(day.body["bucket"]["sensitive_queries"], 4);
    assert_eq!(get(&app, "/v1/analytics/daily?date=1999-01-01").await.status, StatusCode::NOT_FOUND);

    let overall = get(&app, "/v1/analytics/overall").await;
    assert_eq!(overall.body["sensitive_queries"], 4);
    let privacy = Category::Privacy.ordinal();
    assert_eq!(overall.body["shares"][privacy], 50.0);
    let csv = get(&app, "/v1/analytics/overall?format=csv").await;
    assert!(csv.content_type.starts_with("text/csv"));
    assert!(!csv.text.contains("enc:"));

    let cumulative = get(&app, &format!("/v1/analytics/cumulative?upto={today}")).await;
    assert_eq!(cumulative.body["counts"], overall.body["counts"]);
    assert_eq!(get(&app, "/v1/analytics/cumulative").await.body.as_array().unwrap().len(), 1);

    let events = get(&app, &format!("/v1/analytics/events?start={today}&days=1")).await;
    assert_eq!(events.status, StatusCode::OK);
    let beyond = get(&app, &format!("/v1/analytics/events?start={today}&days=3")).await;
    assert_eq!(beyond.status, StatusCode::NOT_FOUND);
    assert!(events.body["delta"].is_array());

    let corr = get(&app, "/v1/analytics/correlation").await;
    assert_eq!(corr.status, StatusCode::UNPROCESSABLE_ENTITY);

    let kw = get(&app, "/v1/analytics/keywords?category=privacy&k=5").await;
    assert_eq!(kw.body["category"], "privacy");
    assert_eq!(kw.body["ranked"][0]["term"], "주소");
    assert_eq!(kw.body["ranked"][0]["count"], 2);
    assert_eq!(get(&app, "/v1/analytics/keywords?category=weather").await.status, StatusCode::BAD_REQUEST);

    let vol = get(&app, "/v1/analytics/volume").await;
    assert_eq!(vol.body["sensitive"][0]["percent"], 80.0);

    let recent = get(&app, "/v1/queries/recent?n=2").await;
    assert_eq!(recent.body.as_array().unwrap().len(), 2);
    assert_eq!(recent.body[0]["query_id"], "x4");
}

/// Four verdicts move the precision endpoint, and a proposal activated
/// through the rules API flips a blocked query to safe.
#[tokio::test]
async fn review_loop_through_the_api() {
    let app = app();
    let texts = ["범죄 수법", "성인 영상", "대화 상대", "전망 알려줘", "날씨 어때"];
    for (i, t) in texts.iter().enumerate() {
        post(&app, "/v1/decide", json!({"query_id": format!("r{i}"), "text": t})).await;
    }
    let today = Utc::now().date_naive();
    let samples = get(&app, &format!("/v1/review/samples?date={today}")).await;
    let samples = samples.body.as_array().unwrap().clone();
    assert_eq!(samples.len(), 4, "safe decisions are never sampled");
    let again = get(&app, &format!("/v1/review/samples?date={today}")).await;
    assert_eq!(again.body.as_array().unwrap().len(), 4);

    let empty = get(&app, "/v1/metrics/precision").await;
    assert_eq!(empty.body["overall"], Value::Null);

    let id_of = |qid: &str| samples.iter().find(|s| s["query_id"] == qid).unwrap()["sample_id"].as_str().unwrap().to_string();
    for (qid, verdict) in [("r0", "Harm"), ("r1", "Harm"), ("r2", "LookSafe"), ("r3", "MustSafe")] {
        let r = post(&app, "/v1/review/verdicts", json!({"sample_id": id_of(qid), "verdict": verdict, "reviewer": "kim"})).await;
        assert_eq!(r.status, StatusCode::CREATED, "{}", r.text);
    }
    let p = get(&app, "/v1/metrics/precision?group=day").await;
    assert_eq!(p.body["overall"], 50.0);
    assert_eq!(p.body["periods"][0]["precision"], 50.0);
    assert_eq!(p.body["counts"]["harm"], 2);
    let weekly = get(&app, "/v1/metrics/precision?group=week").await;
    assert!(weekly.body["periods"][0]["period"].as_str().unwrap().contains("-W"));
    assert_eq!(get(&app, "/v1/metrics/precision?group=year").await.status, StatusCode::BAD_REQUEST);

    let dup = post(&app, "/v1/review/verdicts", json!({"sample_id": id_of("r0"), "verdict": "Harm", "reviewer": "lee"})).await;
    assert_eq!(dup.status, StatusCode::CONFLICT);
    let bad = post(&app, "/v1/review/verdicts", json!({"sample_id": id_of("r0"), "verdict": "harmful", "reviewer": "kim"})).await;
    assert_eq!(bad.status, StatusCode::BAD_REQUEST);
    let unknown = post(&app, "/v1/review/verdicts", json!({"sample_id": "nope", "verdict": "Harm", "reviewer": "kim"})).await;
    assert_eq!(unknown.status, StatusCode::NOT_FOUND);

    let csv = get(&app, "/v1/review/verdicts?format=csv").await;
    assert_eq!(csv.text.lines().count(), 5);

    let proposals = get(&app, "/v1/review/proposals").await;
    let rules = proposals.body["rules"].as_array().unwrap();
    assert_eq!(rules.len(), 1);
    assert_eq!(rules[0]["enabled"], false);
    assert_eq!(proposals.body["examples"].as_array().unwrap().len(), 3);

    let mut rule = rules[0].clone();
    rule["enabled"] = json!(true);
    assert_eq!(post(&app, "/v1/rules", rule).await.status, StatusCode::CREATED);
    assert_eq!(call(&app, Method::POST, "/v1/reload", None, None).await.status, StatusCode::OK);
    let flipped = post(&app, "/v1/decide", json!({"text": "전망 알려줘"})).await;
    assert_eq!(flipped.body["label"], "safe");
    assert_eq!(flipped.body["source"], "whitelist_override");
}

#[tokio::test]
async fn reported_over_blocks_join_the_sample() {
    let config = ServerConfig { sample_size: 1, ..Default::default() };
    let app = app_with(config, true);
    for i in 0..6 {
        post(&app, "/v1/decide", json!({"query_id": format!("q{i}"), "text": "욕설"})).await;
    }
    post(&app, "/v1/feedback", json!({"query_id": "q4", "report_type": "over_blocked"})).await;
    post(&app, "/v1/feedback", json!({"query_id": "q5", "report_type": "other"})).await;
    let today = Utc::now().date_naive();
    let samples = get(&app, &format!("/v1/review/samples?date={today}")).await;
    let ids: Vec<&str> = samples.body.as_array().unwrap().iter().map(|s| s["query_id"].as_str().unwrap()).collect();
    assert!(ids.contains(&"q4"));
    assert!(ids.len() <= 2);
}

#[tokio::test]
async fn state_persists_across_restarts() {
    let dir = tempfile::tempdir().unwrap();
    let featurizer = Featurizer::hashing(256);
    let examples: Vec<LabeledExample> = [("주소 알려줘", Category::Privacy), ("날씨 알려줘", Category::Safe)]
        .iter()
        .map(|(t, c)| LabeledExample::new(*t, *c, Origin::InternalAnnotation).unwrap())
        .collect();
    let hp = Hyperparams { epochs: 50, model_version: "tiny".into(), ..Default::default() };
    let model = LinearModel::new(train::<f32>(&examples, &featurizer, &hp).unwrap(), featurizer).unwrap();
    let model_path = dir.path().join("model.bin");
    std::fs::write(&model_path, model.to_bytes()).unwrap();

    let config = ServerConfig {
        log_path: dir.path().join("log.jsonl"),
        model_path: Some(model_path),
        rules_path: Some(dir.path().join("rules.json")),
        review_path: Some(dir.path().join("review.json")),
        ..Default::default()
    };
    let start = || router(Arc::new(AppState::from_config(config.clone()).unwrap()));

    let app = start();
    assert_eq!(get(&app, "/v1/healthz").await.body["model_version"], "tiny");
    let d = post(&app, "/v1/decide", json!({"query_id": "p1", "text": "주소 알려줘"})).await;
    assert_eq!(d.body["label"], "privacy");
    post(&app, "/v1/rules", json!({"id": "b", "kind": "blacklist", "pattern": "날씨", "category": "high_stakes"})).await;
    call(&app, Method::POST, "/v1/reload", Some(json!({"rules": true, "model": true})), None).await;
    let today = Utc::now().date_naive();
    let s = get(&app, &format!("/v1/review/samples?date={today}")).await;
    let sid = s.body[0]["sample_id"].as_str().unwrap().to_string();
    post(&app, "/v1/review/verdicts", json!({"sample_id": sid, "verdict": "Harm", "reviewer": "kim"})).await;
    drop(app);

    let app = start();
    let h = get(&app, "/v1/healthz").await;
    assert_eq!(h.body["ruleset_version"], 1);
    let d = post(&app, "/v1/decide", json!({"text": "날씨 알려줘"})).await;
    assert_eq!(d.body["label"], "high_stakes");
    assert_eq!(get(&app, "/v1/metrics/precision").await.body["overall"], 100.0);
    let f = post(&app, "/v1/feedback", json!({"query_id": "p1", "report_type": "other"})).await;
    assert_eq!(f.status, StatusCode::OK, "ids from the previous run are known");
}

#[tokio::test]
async fn taxonomy_document_served() {
    let t = get(&app(), "/v1/taxonomy").await;
    assert_eq!(t.body["categories"].as_object().unwrap().len(), 13);
    assert_eq!(t.body["reference_distribution"].as_object().unwrap().len(), 12);
}
