use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use epikit_core::Compartment;
use epikit_service::{router, Created, ErrorBody, HistoryResponse, InterventionAck, NodeHistory, SessionLog, StateView, StepResponse};
use http_body_util::BodyExt;
use serde::de::DeserializeOwned;
use serde_json::{json, Value};
use tower::ServiceExt;

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header("content-type", "application/json")
            .body(Body::from(b.to_string()))
            .unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes)
}

async fn ok<T: DeserializeOwned>(app: &Router, method: &str, uri: &str, body: Option<Value>) -> T {
    let (status, bytes) = call(app, method, uri, body).await;
    assert!(status.is_success(), "{status}: {}", String::from_utf8_lossy(&bytes));
    serde_json::from_slice(&bytes).unwrap()
}

async fn err(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, ErrorBody) {
    let (status, bytes) = call(app, method, uri, body).await;
    assert!(status.is_client_error(), "{status}");
    (status, serde_json::from_slice(&bytes).unwrap())
}

fn path_graph(n: usize) -> Value {
    let edges: Vec<Value> = (0..n - 1).map(|i| json!([i, i + 1, 1.0])).collect();
    json!({"n_nodes": n, "edges": edges})
}

fn create_body(beta: f64, gamma: f64, infected: &[usize], seed: u64) -> Value {
    json!({
        "random_graph": {"nodes": 60, "edge_prob": 0.08},
        "config": {"beta": beta, "gamma": gamma, "dt": 1.0, "initial_infected": infected},
        "seed": seed
    })
}

async fn create(app: &Router, body: Value) -> Created {
    ok(app, "POST", "/sessions", Some(body)).await
}

async fn history(app: &Router, id: &str) -> Vec<Vec<Compartment>> {
    ok::<HistoryResponse>(app, "GET", &format!("/sessions/{id}/history"), None).await.frames
}

#[tokio::test]
async fn create_returns_initial_frame() {
    let app = router();
    let c = create(&app, create_body(0.3, 0.1, &[0, 5], 1)).await;
    assert_eq!(c.graph.n_nodes(), 60);
    assert_eq!(c.state.current_step, 0);
    let infected = c.state.states.iter().filter(|s| **s == Compartment::I).count();
    assert_eq!(infected, 2);
    assert_eq!(history(&app, &c.id).await.len(), 1);
}

#[tokio::test]
async fn invalid_create_names_the_field() {
    let app = router();
    let (status, e) = err(&app, "POST", "/sessions", Some(create_body(0.3, 0.1, &[99], 1))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(e.field.as_deref(), Some("config.initial_infected"));

    let (_, e) = err(&app, "POST", "/sessions", Some(create_body(-1.0, 0.1, &[0], 1))).await;
    assert_eq!(e.field.as_deref(), Some("config.beta"));

    let (_, e) = err(&app, "POST", "/sessions", Some(json!({"config": {}}))).await;
    assert_eq!(e.code, "invalid_json");
}

#[tokio::test]
async fn same_seed_same_history() {
    let app = router();
    let a = create(&app, create_body(0.4, 0.1, &[3], 9)).await;
    let b = create(&app, create_body(0.4, 0.1, &[3], 9)).await;
    assert_ne!(a.id, b.id);
    for id in [&a.id, &b.id] {
        let _: StepResponse = ok(&app, "POST", &format!("/sessions/{id}/step"), Some(json!({"k": 30}))).await;
    }
    assert_eq!(history(&app, &a.id).await, history(&app, &b.id).await);
}

#[tokio::test]
async fn step_by_one_five_times_equals_step_by_five() {
    let app = router();
    let a = create(&app, create_body(0.5, 0.1, &[1], 4)).await;
    let b = create(&app, create_body(0.5, 0.1, &[1], 4)).await;
    for _ in 0..5 {
        let _: StepResponse = ok(&app, "POST", &format!("/sessions/{}/step", a.id), Some(json!({"k": 1}))).await;
    }
    let r: StepResponse = ok(&app, "POST", &format!("/sessions/{}/step", b.id), Some(json!({"k": 5}))).await;
    assert_eq!(r.state.current_step, 5);
    let ha = history(&app, &a.id).await;
    assert_eq!(ha.len(), 6);
    assert_eq!(ha, history(&app, &b.id).await);
}

#[tokio::test]
async fn zero_steps_rejected() {
    let app = router();
    let c = create(&app, create_body(0.5, 0.1, &[1], 4)).await;
    let (status, e) = err(&app, "POST", &format!("/sessions/{}/step", c.id), Some(json!({"k": 0}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(e.field.as_deref(), Some("k"));
}

#[tokio::test]
async fn unknown_session_and_node_are_404() {
    let app = router();
    let (status, e) = err(&app, "GET", "/sessions/nope/state", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(e.field.as_deref(), Some("id"));
    let c = create(&app, create_body(0.5, 0.1, &[1], 4)).await;
    let (status, e) = err(&app, "GET", &format!("/sessions/{}/nodes/60/history", c.id), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(e.field.as_deref(), Some("node"));
    let (status, _) = err(
        &app,
        "POST",
        &format!("/sessions/{}/intervene", c.id),
        Some(json!({"action": "vaccinate", "node": 1000})),
    )
    .await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn finished_session_stepping_is_a_noop() {
    let app = router();
    // Recovery is near certain each step with gamma this large.
    let c = create(
        &app,
        json!({"graph": path_graph(3), "config": {"beta": 0.0, "gamma": 50.0, "dt": 1.0, "initial_infected": [1]}, "seed": 2}),
    )
    .await;
    let r: StepResponse = ok(&app, "POST", &format!("/sessions/{}/step", c.id), Some(json!({"k": 10}))).await;
    assert_eq!(r.state.status, epikit_service::Status::Finished);
    assert_eq!(r.state.current_step, 1);
    let again: StepResponse = ok(&app, "POST", &format!("/sessions/{}/step", c.id), Some(json!({"k": 10}))).await;
    assert!(again.frames.is_empty());
    assert_eq!(again.state, r.state);
}

#[tokio::test]
async fn quarantining_the_only_infected_finishes() {
    let app = router();
    let c = create(
        &app,
        json!({"graph": path_graph(5), "config": {"beta": 100.0, "gamma": 0.0, "dt": 1.0, "initial_infected": [2]}, "seed": 2}),
    )
    .await;
    let ack: InterventionAck = ok(
        &app,
        "POST",
        &format!("/sessions/{}/intervene", c.id),
        Some(json!({"action": "quarantine", "node": 2})),
    )
    .await;
    assert!(ack.changed);
    assert_eq!(ack.state, Compartment::Q);
    assert_eq!(ack.status, epikit_service::Status::Finished);
    let s: StateView = ok(&app, "GET", &format!("/sessions/{}/state", c.id), None).await;
    assert_eq!(s.states.iter().filter(|x| **x == Compartment::S).count(), 4);
}

#[tokio::test]
async fn vaccinated_node_is_never_infected() {
    let app = router();
    let c = create(
        &app,
        json!({"graph": path_graph(6), "config": {"beta": 1e6, "gamma": 0.0, "dt": 1.0, "initial_infected": [0]}, "seed": 5}),
    )
    .await;
    let uri = format!("/sessions/{}/intervene", c.id);
    let ack: InterventionAck = ok(&app, "POST", &uri, Some(json!({"action": "vaccinate", "node": 3}))).await;
    assert!(ack.changed);
    // Idempotent.
    let ack: InterventionAck = ok(&app, "POST", &uri, Some(json!({"action": "vaccinate", "node": 3}))).await;
    assert!(!ack.changed);
    assert_eq!(ack.state, Compartment::V);
    let _: StepResponse = ok(&app, "POST", &format!("/sessions/{}/step", c.id), Some(json!({"k": 20}))).await;
    let h: NodeHistory = ok(&app, "GET", &format!("/sessions/{}/nodes/3/history", c.id), None).await;
    assert!(h.timeline.iter().all(|s| *s == Compartment::V));
    assert!(h.infection.is_none());
    let s: StateView = ok(&app, "GET", &format!("/sessions/{}/state", c.id), None).await;
    assert_eq!(&s.states[..3], &[Compartment::I; 3]);
    assert_eq!(&s.states[4..], &[Compartment::S; 2]);
}

#[tokio::test]
async fn infection_sources_were_infected_neighbours() {
    let app = router();
    let c = create(&app, create_body(0.6, 0.15, &[0], 11)).await;
    let _: StepResponse = ok(&app, "POST", &format!("/sessions/{}/step", c.id), Some(json!({"k": 40}))).await;
    let frames = history(&app, &c.id).await;
    let mut attributed = 0;
    for v in 0..60 {
        let h: NodeHistory = ok(&app, "GET", &format!("/sessions/{}/nodes/{v}/history", c.id), None).await;
        assert_eq!(h.timeline.len(), frames.len());
        let Some(rec) = h.infection else {
            assert!(h.timeline.iter().all(|s| *s == Compartment::S));
            continue;
        };
        assert_eq!(h.timeline[rec.step], Compartment::I);
        match rec.source {
            None => assert_eq!(rec.step, 0),
            Some(u) => {
                attributed += 1;
                assert!(rec.step >= 1);
                assert_eq!(frames[rec.step - 1][u], Compartment::I);
                assert_eq!(frames[rec.step - 1][v], Compartment::S);
                assert!(c.graph.neighbors(v).any(|(x, _)| x == u));
            }
        }
    }
    assert!(attributed > 0);
}

#[tokio::test]
async fn log_replay_on_a_fresh_server_is_identical() {
    let app = router();
    let c = create(&app, create_body(0.5, 0.1, &[0, 7], 21)).await;
    let step = format!("/sessions/{}/step", c.id);
    let inter = format!("/sessions/{}/intervene", c.id);
    let _: StepResponse = ok(&app, "POST", &step, Some(json!({"k": 3}))).await;
    let _: InterventionAck = ok(&app, "POST", &inter, Some(json!({"action": "vaccinate", "node": 12}))).await;
    let _: StepResponse = ok(&app, "POST", &step, Some(json!({"k": 1}))).await;
    let _: InterventionAck = ok(&app, "POST", &inter, Some(json!({"action": "quarantine", "node": 7}))).await;
    let _: StepResponse = ok(&app, "POST", &step, Some(json!({"k": 25}))).await;
    let original = history(&app, &c.id).await;
    let log: SessionLog = ok(&app, "GET", &format!("/sessions/{}/log", c.id), None).await;
    assert_eq!(log.commands.len(), 5);

    let fresh = router();
    let r = create(&fresh, serde_json::to_value(&log.create).unwrap()).await;
    for cmd in &log.commands {
        let mut body = serde_json::to_value(cmd).unwrap();
        let op = body.as_object_mut().unwrap().remove("op").unwrap();
        let path = if op == "step" { "step" } else { "intervene" };
        let (status, _) = call(&fresh, "POST", &format!("/sessions/{}/{path}", r.id), Some(body)).await;
        assert!(status.is_success());
    }
    assert_eq!(history(&fresh, &r.id).await, original);
}
