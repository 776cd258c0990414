use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;

use objdisc_core::dataset::{
    make_split, synth_generate, write_candidates, write_ground_truth, Dataset, MatchConfig,
    SynthConfig,
};
use objdisc_core::engine::{majority_vote, Checkpoint, DiscoverySession, EngineConfig, MajorityVoteOracle};
use objdisc_core::evaluation::EvaluationReport;
use objdisc_core::svm::{train_binary_svm, KernelParams, ModelFile, SvmModel};
use objdisc_service::{router, AppState, LabelResponse, Problem, ProposalView, SessionHandle};
use reqwest::{Client, StatusCode};
use serde_json::{json, Value};

struct Server {
    base: String,
    client: Client,
    dir: tempfile::TempDir,
}

fn synth() -> SynthConfig {
    SynthConfig {
        n_classes: 4,
        samples_per_class: 15,
        dim: 6,
        no_object_fraction: 0.5,
        ..SynthConfig::default()
    }
}

fn write_dataset(dir: &Path) {
    let (c, g) = synth_generate(&synth(), 4).unwrap();
    write_candidates(dir.join("cands.jsonl"), &c).unwrap();
    write_ground_truth(dir.join("gt.jsonl"), &g).unwrap();
}

fn load(dir: &Path) -> Dataset {
    Dataset::load(dir.join("cands.jsonl"), Some(&dir.join("gt.jsonl")), &MatchConfig::default()).unwrap()
}

async fn start_on(dir: tempfile::TempDir) -> Server {
    let app = AppState::open(dir.path()).unwrap();
    let listener = tokio::net::TcpListener::bind(SocketAddr::from(([127, 0, 0, 1], 0))).await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, router(app)).await.unwrap() });
    Server {
        base: format!("http://{addr}"),
        client: Client::new(),
        dir,
    }
}

async fn start() -> Server {
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path());
    start_on(dir).await
}

fn engine(max_iterations: usize) -> EngineConfig {
    EngineConfig {
        k_clusters: 5,
        max_iterations,
        seed: 7,
        ..EngineConfig::default()
    }
}

impl Server {
    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    async fn create(&self, body: Value) -> reqwest::Response {
        self.client.post(self.url("/sessions")).json(&body).send().await.unwrap()
    }

    async fn session(&self, max_iterations: usize) -> String {
        let res = self
            .create(json!({
                "candidates": "cands.jsonl",
                "ground_truth": "gt.jsonl",
                "config": engine(max_iterations),
            }))
            .await;
        assert_eq!(res.status(), StatusCode::CREATED);
        res.json::<SessionHandle>().await.unwrap().session_id
    }

    async fn post(&self, path: &str, key: Option<&str>, body: Option<Value>) -> reqwest::Response {
        let mut req = self.client.post(self.url(path));
        if let Some(k) = key {
            req = req.header("Idempotency-Key", k);
        }
        if let Some(b) = body {
            req = req.json(&b);
        }
        req.send().await.unwrap()
    }

    async fn get_text(&self, path: &str) -> (StatusCode, String) {
        let res = self.client.get(self.url(path)).send().await.unwrap();
        (res.status(), res.text().await.unwrap())
    }

    async fn advance(&self, id: &str) -> Value {
        let res = self.post(&format!("/sessions/{id}/advance"), None, None).await;
        assert_eq!(res.status(), StatusCode::OK);
        res.json().await.unwrap()
    }

    async fn label(&self, id: &str, proposal: &str, label: &str, key: Option<&str>) -> reqwest::Response {
        self.post(
            &format!("/sessions/{id}/label"),
            key,
            Some(json!({ "proposal_id": proposal, "label": label })),
        )
        .await
    }
}

async fn problem(res: reqwest::Response) -> (StatusCode, Problem) {
    let status = res.status();
    assert_eq!(res.headers()["content-type"], "application/problem+json");
    (status, res.json().await.unwrap())
}

fn proposal(v: &Value) -> ProposalView {
    assert_eq!(v["status"], "awaiting_label", "{v}");
    serde_json::from_value(v["proposal"].clone()).unwrap()
}

#[tokio::test]
async fn create_and_reject() {
    let s = start().await;
    let res = s.create(json!({ "candidates": "cands.jsonl", "ground_truth": "gt.jsonl" })).await;
    assert_eq!(res.status(), StatusCode::CREATED);
    let h: SessionHandle = res.json().await.unwrap();
    assert_eq!(h.status, objdisc_core::engine::SessionStatus::Running);
    for f in ["session.json", "checkpoint.json", "history.jsonl"] {
        assert!(s.dir.path().join("sessions").join(&h.session_id).join(f).is_file());
    }

    let (st, p) = problem(s.create(json!({ "candidates": "missing.jsonl" })).await).await;
    assert_eq!((st, p.code.as_str()), (StatusCode::NOT_FOUND, "dataset_not_found"));

    let bad = json!({ "candidates": "cands.jsonl", "ground_truth": "gt.jsonl", "config": { "k_clusters": 1 } });
    let (st, p) = problem(s.create(bad).await).await;
    assert_eq!((st, p.code.as_str()), (StatusCode::BAD_REQUEST, "invalid_config"));

    let (st, p) = problem(s.client.post(s.url("/sessions")).body("{").header("content-type", "application/json").send().await.unwrap()).await;
    assert_eq!((st, p.code.as_str()), (StatusCode::BAD_REQUEST, "invalid_request"));

    let (st, p) = problem(s.client.get(s.url("/sessions/nope")).send().await.unwrap()).await;
    assert_eq!((st, p.code.as_str()), (StatusCode::NOT_FOUND, "session_not_found"));
}

#[tokio::test]
async fn filter_model_dimension_is_checked() {
    let s = start().await;
    let x = ndarray::array![[0.0, 0.0, 0.0], [5.0, 5.0, 5.0]];
    let m = train_binary_svm(x.view(), &[1, -1], 1.0, KernelParams::new(1.0).unwrap(), 1e-3).unwrap();
    ModelFile::new(SvmModel::Binary(m)).write(s.dir.path().join("model.json")).unwrap();
    let body = json!({
        "candidates": "cands.jsonl",
        "ground_truth": "gt.jsonl",
        "filter_model": "model.json",
        "config": { "use_filter": true },
    });
    let (st, p) = problem(s.create(body).await).await;
    assert_eq!((st, p.code.as_str()), (StatusCode::BAD_REQUEST, "dimension_mismatch"));
}

#[tokio::test]
async fn same_inputs_same_initial_checkpoint() {
    let s = start().await;
    let a = s.session(5).await;
    let b = s.session(5).await;
    assert_ne!(a, b);
    let (_, ca) = s.get_text(&format!("/sessions/{a}")).await;
    let (_, cb) = s.get_text(&format!("/sessions/{b}")).await;
    assert_eq!(ca, cb);
}

#[tokio::test]
async fn advance_label_and_state_conflicts() {
    let s = start().await;
    let id = s.session(10).await;
    let p = proposal(&s.advance(&id).await);
    assert!(!p.members.is_empty());
    assert_eq!(p.iteration, 1);
    assert_eq!(p.points.len(), p.n_easy + p.n_refill);
    assert!(p.refill_members.len() <= p.n_refill);
    assert!(p.points.iter().any(|pt| pt.role == objdisc_service::PointRole::Proposal));

    let (st, pr) = problem(s.post(&format!("/sessions/{id}/advance"), None, None).await).await;
    assert_eq!((st, pr.code.as_str()), (StatusCode::CONFLICT, "state_conflict"));

    let (st, current) = s.get_text(&format!("/sessions/{id}/clusters/current")).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(serde_json::from_str::<ProposalView>(&current).unwrap(), p);

    let (st, pr) = problem(s.label(&id, &p.proposal_id, "  ", None).await).await;
    assert_eq!((st, pr.code.as_str()), (StatusCode::BAD_REQUEST, "invalid_label"));
    let (st, pr) = problem(s.label(&id, "p9999", "car", None).await).await;
    assert_eq!((st, pr.code.as_str()), (StatusCode::CONFLICT, "stale_proposal"));

    let before = p.pool_size;
    let res = s.label(&id, &p.proposal_id, "car", Some("k1")).await;
    assert_eq!(res.status(), StatusCode::OK);
    let first: LabelResponse = res.json().await.unwrap();
    assert!(first.pool_size + p.members.len() <= before);
    assert_eq!(first.record.iteration, 1);

    let replay: LabelResponse = s.label(&id, &p.proposal_id, "car", Some("k1")).await.json().await.unwrap();
    assert_eq!(replay, first);
    let (_, cp) = s.get_text(&format!("/sessions/{id}")).await;
    assert_eq!(Checkpoint::from_json(&cp).unwrap().state.history.len(), 1);

    let (st, pr) = problem(s.label(&id, &p.proposal_id, "dog", Some("k1")).await).await;
    assert_eq!((st, pr.code.as_str()), (StatusCode::UNPROCESSABLE_ENTITY, "idempotency_key_reused"));
    let (st, pr) = problem(s.label(&id, &p.proposal_id, "car", None).await).await;
    assert_eq!((st, pr.code.as_str()), (StatusCode::CONFLICT, "state_conflict"));
    let (st, pr) = problem(s.client.get(s.url(&format!("/sessions/{id}/clusters/current"))).send().await.unwrap()).await;
    assert_eq!((st, pr.code.as_str()), (StatusCode::CONFLICT, "no_pending_proposal"));

    let p2 = proposal(&s.advance(&id).await);
    let skip: LabelResponse = s.label(&id, &p2.proposal_id, "skip", None).await.json().await.unwrap();
    assert_eq!(skip.pool_size, first.pool_size);
    assert_eq!(skip.record.iteration, 2);
    assert!(skip.record.labeled_ids.is_empty());
}

#[tokio::test]
async fn advance_replay_returns_the_same_proposal() {
    let s = start().await;
    let id = s.session(5).await;
    let a: Value = s.post(&format!("/sessions/{id}/advance"), Some("adv-1"), None).await.json().await.unwrap();
    let b: Value = s.post(&format!("/sessions/{id}/advance"), Some("adv-1"), None).await.json().await.unwrap();
    assert_eq!(a, b);
}

#[tokio::test]
async fn snapshot_and_reads_are_pure() {
    let s = start().await;
    let id = s.session(5).await;
    let p = proposal(&s.advance(&id).await);
    s.label(&id, &p.proposal_id, "car", None).await;
    proposal(&s.advance(&id).await);

    let file = s.dir.path().join("sessions").join(&id).join("checkpoint.json");
    let (_, snap) = s.get_text(&format!("/sessions/{id}")).await;
    assert_eq!(snap, std::fs::read_to_string(&file).unwrap());
    let (_, r1) = s.get_text(&format!("/sessions/{id}/report")).await;
    let (_, c1) = s.get_text(&format!("/sessions/{id}/clusters/current")).await;
    let (_, r2) = s.get_text(&format!("/sessions/{id}/report")).await;
    let (_, c2) = s.get_text(&format!("/sessions/{id}/clusters/current")).await;
    let (_, snap2) = s.get_text(&format!("/sessions/{id}")).await;
    assert_eq!((r1, c1, &snap), (r2, c2, &snap2));
    assert_eq!(snap2, std::fs::read_to_string(&file).unwrap());
}

#[tokio::test]
async fn report_tracks_labels() {
    let s = start().await;
    let id = s.session(10).await;
    let (_, text) = s.get_text(&format!("/sessions/{id}/report")).await;
    let fresh: EvaluationReport = serde_json::from_str(&text).unwrap();
    assert!(fresh.iteration_curve.is_empty());
    let ds = load(s.dir.path());
    for n in 1..=3 {
        let p = proposal(&s.advance(&id).await);
        let labels: Vec<&str> = p
            .members
            .iter()
            .map(|m| ds.get(&m.id).unwrap().gt_class.as_deref().unwrap())
            .collect();
        let answer = majority_vote(&labels).unwrap();
        assert_eq!(s.label(&id, &p.proposal_id, answer.as_str(), None).await.status(), StatusCode::OK);
        let (_, text) = s.get_text(&format!("/sessions/{id}/report")).await;
        let r: EvaluationReport = serde_json::from_str(&text).unwrap();
        assert_eq!(r.iteration_curve.len(), n);
    }
}

#[tokio::test]
async fn finished_notice_after_last_iteration() {
    let s = start().await;
    let id = s.session(1).await;
    let p = proposal(&s.advance(&id).await);
    let res: LabelResponse = s.label(&id, &p.proposal_id, "skip", None).await.json().await.unwrap();
    assert_eq!(res.status, objdisc_core::engine::SessionStatus::Finished);
    let v = s.advance(&id).await;
    assert_eq!(v["status"], "finished");
    assert_eq!(v["iterations"], 1);
}

/// Drive a session over HTTP with a client-side majority vote.
async fn drive(s: &Server, id: &str, ds: &Dataset) -> usize {
    let mut n = 0;
    loop {
        let v = s.advance(id).await;
        if v["status"] == "finished" {
            return n;
        }
        let p = proposal(&v);
        let labels: Vec<&str> = p
            .members
            .iter()
            .map(|m| ds.get(&m.id).unwrap().gt_class.as_deref().unwrap())
            .collect();
        let answer = majority_vote(&labels).unwrap();
        let key = format!("label-{}", p.proposal_id);
        assert_eq!(s.label(id, &p.proposal_id, answer.as_str(), Some(&key)).await.status(), StatusCode::OK);
        n += 1;
    }
}

#[tokio::test]
async fn http_client_reproduces_in_process_run() {
    let s = start().await;
    let ds = load(s.dir.path());
    let split = make_split(ds.candidates(), 0.5, 0.4, 3).unwrap();
    split.write(s.dir.path().join("split.json")).unwrap();
    let config = engine(30);
    let res = s
        .create(json!({
            "candidates": "cands.jsonl",
            "ground_truth": "gt.jsonl",
            "split": "split.json",
            "config": config,
        }))
        .await;
    let id = res.json::<SessionHandle>().await.unwrap().session_id;
    let n = drive(&s, &id, &ds).await;
    assert!(n > 0);

    let ds = Arc::new(ds);
    let mut local = DiscoverySession::new(Arc::clone(&ds), &split, config, None).unwrap();
    local.run(&mut MajorityVoteOracle).unwrap();
    let (_, cp) = s.get_text(&format!("/sessions/{id}")).await;
    let remote = Checkpoint::from_json(&cp).unwrap();
    assert_eq!(remote.state.history, local.state().history);
    assert_eq!(cp, local.checkpoint().to_json().unwrap());
    let hist = std::fs::read_to_string(s.dir.path().join("sessions").join(&id).join("history.jsonl")).unwrap();
    assert_eq!(hist.lines().count(), n);
}

#[tokio::test]
async fn sessions_survive_a_restart() {
    let s = start().await;
    let id = s.session(10).await;
    let p = proposal(&s.advance(&id).await);
    let (_, before) = s.get_text(&format!("/sessions/{id}")).await;
    let dir: tempfile::TempDir = s.dir;
    let s2 = start_on(dir).await;
    let (st, after) = s2.get_text(&format!("/sessions/{id}")).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(before, after);
    assert_eq!(s2.label(&id, &p.proposal_id, "car", None).await.status(), StatusCode::OK);
    let listed: Vec<SessionHandle> = s2.client.get(s2.url("/sessions")).send().await.unwrap().json().await.unwrap();
    assert_eq!(listed.len(), 1);
}

#[tokio::test]
async fn concurrent_advances_on_one_session_serialize() {
    let s = Arc::new(start().await);
    let id = s.session(10).await;
    let tasks: Vec<_> = (0..4)
        .map(|_| {
            let s = Arc::clone(&s);
            let id = id.clone();
            tokio::spawn(async move { s.post(&format!("/sessions/{id}/advance"), None, None).await.status() })
        })
        .collect();
    let mut ok = 0;
    let mut conflict = 0;
    for t in tasks {
        match t.await.unwrap() {
            StatusCode::OK => ok += 1,
            StatusCode::CONFLICT => conflict += 1,
            other => panic!("unexpected {other}"),
        }
    }
    assert_eq!((ok, conflict), (1, 3));
}

#[tokio::test]
async fn crops_are_served_when_present() {
    let dir = tempfile::tempdir().unwrap();
    let (mut c, g) = synth_generate(&synth(), 4).unwrap();
    std::fs::create_dir_all(dir.path().join("crops")).unwrap();
    for cand in &mut c {
        let name = format!("{}.png", cand.id);
        std::fs::write(dir.path().join("crops").join(&name), cand.id.as_bytes()).unwrap();
        cand.crop_uri = Some(name);
    }
    write_candidates(dir.path().join("cands.jsonl"), &c).unwrap();
    write_ground_truth(dir.path().join("gt.jsonl"), &g).unwrap();
    let s = start_on(dir).await;
    let id = s.session(5).await;
    let p = proposal(&s.advance(&id).await);
    let m = &p.members[0];
    let url = m.crop_url.as_ref().expect("served crop");
    let (st, body) = s.get_text(url).await;
    assert_eq!((st, body.as_str()), (StatusCode::OK, m.id.as_str()));
    let (st, _) = s.get_text("/crops/../gt.jsonl").await;
    assert_ne!(st, StatusCode::OK);
}
