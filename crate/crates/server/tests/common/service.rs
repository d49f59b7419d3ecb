//! Pieces of the service-contract checks shared by the contract suite and
//! the acceptance run.

use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Child, Command, Stdio};
use std::time::Duration;

use axum::http::{Method, StatusCode};
use framepick::dataset::{ScoredDataset, DATASET_FILE};
use framepick::ingest::DatasetBundle;
use serde_json::{json, Value};

use super::*;

/// A recorded review session: reads, searches, a user keyword, selections
/// and a few rejected requests.
pub fn session(root: &Path) -> Vec<(Method, String, Option<Value>)> {
    let cands = candidates(root);
    let pick = |suffix: &str, nth: usize| {
        cands
            .iter()
            .filter(|c| c.candidate_id.ends_with(suffix))
            .nth(nth)
            .unwrap()
            .candidate_id
            .clone()
    };
    let manifest = DatasetBundle::open(root).unwrap().load_manifest().unwrap();
    let emb = manifest.keywords[1].embedding.clone().unwrap().values;
    let v = format!("/videos/{VIDEO}");
    let g = |p: &str| (Method::GET, format!("{v}{p}"), None);
    let p = |p: &str, b: Value| (Method::POST, format!("{v}{p}"), Some(b));
    vec![
        (Method::GET, "/videos".into(), None),
        g(""),
        g("/proposals"),
        g("/proposals?preset=per-emotion&aspect=2:3"),
        g("/proposals?preset=per-keyword&aspect=16:9"),
        p("/search", json!({})),
        p("/search", json!({"filters": {"eyes_open_only": true, "emotions": ["happiness", "fear"]}})),
        p("/search", json!({"filters": {"aspect": "2:3", "face_count": {"min": 1, "max": 2}}, "reverse": true})),
        p("/search", json!({"weights": {"aesthetic": 0.0, "semantic": 1.0, "logo": 0.2, "face_position": 0.0, "on_face_focus": 0.0}, "group_dedup": false, "page": 1, "page_size": 10})),
        g("/groups/1"),
        g("/groups/2"),
        g("/score-distributions"),
        g("/score-distributions?aspect=2:3&bins=7"),
        g(&format!("/images/{}?aspect=2:3", pick("-original", 3))),
        p("/keywords", json!({"text": "woodland", "embedding": emb})),
        p("/keywords", json!({"text": "sky"})),
        p("/search", json!({"filters": {"keywords": ["woodland"]}, "page_size": 5})),
        p("/selections", json!({"candidate_id": pick("-original", 2), "chosen_by": "ana", "chosen_at": "2024-05-01T10:00:00Z", "request_id": "s1"})),
        p("/selections", json!({"candidate_id": pick("-2x3", 4), "chosen_by": "ben", "note": "vertical", "chosen_at": "2024-05-01T10:01:00Z"})),
        p("/selections", json!({"candidate_id": pick("-original", 2), "chosen_by": "ana", "chosen_at": "2024-05-01T10:02:00Z", "request_id": "s1"})),
        p("/selections", json!({"candidate_id": pick("-2x3", 5), "chosen_by": "cy", "chosen_at": "2024-05-01T10:03:00Z", "expected_current": ""})),
        p("/selections", json!({"candidate_id": pick("-16x9", 0), "aspect": "2:3", "chosen_by": "cy", "chosen_at": "2024-05-01T10:04:00Z"})),
        g("/selections"),
        g("/groups/999"),
        g("/proposals?preset=nope"),
    ]
}

pub async fn replay(root: &Path) -> Vec<(StatusCode, Vec<u8>)> {
    let app = app(root);
    let mut out = Vec::new();
    for (method, uri, body) in session(root) {
        out.push(call(&app, method, &uri, body.as_ref()).await);
    }
    out
}

pub struct Server {
    pub child: Child,
    pub base: String,
}

impl Server {
    pub fn start(root: &Path, fault: bool) -> Self {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_framepick"));
        cmd.args(["serve", "--port", "0", "--bundle"])
            .arg(root)
            .env("RUST_LOG", "warn")
            .env_remove("FRAMEPICK_PORT")
            .stdout(Stdio::piped())
            .stderr(Stdio::null());
        if fault {
            cmd.env("FRAMEPICK_FAULT", "abort-after-append");
        } else {
            cmd.env_remove("FRAMEPICK_FAULT");
        }
        let mut child = cmd.spawn().unwrap();
        let mut line = String::new();
        BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
        let addr = line.trim().strip_prefix("listening on ").unwrap_or_else(|| panic!("{line:?}"));
        Self {
            base: format!("http://{addr}/videos/{VIDEO}"),
            child,
        }
    }

    pub fn post(&self, path: &str, body: &Value) -> Result<(u16, Value), String> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(10)))
            .build()
            .into();
        let mut resp = agent.post(format!("{}{path}", self.base)).send_json(body).map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        let v: Value = resp.body_mut().read_json().map_err(|e| e.to_string())?;
        Ok((status, v))
    }

    pub fn get(&self, path: &str) -> Value {
        let mut resp = ureq::get(format!("{}{path}", self.base)).call().unwrap();
        resp.body_mut().read_json().unwrap()
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        self.child.kill().ok();
        self.child.wait().ok();
    }
}

/// Grow the synthetic dataset to `n` candidates by cloning candidates into
/// new frames and groups with perturbed scores.
pub fn inflate(root: &Path, n: usize) {
    let path = DatasetBundle::open(root).unwrap().output_dir().join(DATASET_FILE);
    let mut ds = ScoredDataset::load(&path).unwrap();
    let base = ds.candidates.clone();
    let groups = ds.groups.clone();
    let mut copy = 1u64;
    while ds.candidates.len() < n {
        for c in &base {
            let mut c = c.clone();
            c.frame_id += copy * 1000;
            c.group_id += copy * 100;
            c.candidate_id = framepick::dataset::Candidate::id_for(c.frame_id, c.aspect);
            let jitter = ((copy * 7919 + c.frame_id) % 97) as f64 / 970.0;
            c.raw.aesthetic = (c.raw.aesthetic + jitter).min(1.0);
            c.raw.logo = (c.raw.logo * (1.0 - jitter)).max(0.0);
            ds.candidates.push(c);
        }
        for g in &groups {
            let mut g = g.clone();
            g.group_id += copy * 100;
            g.members = g.members.iter().map(|m| m + copy * 1000).collect();
            g.representative = g.representative.map(|r| r + copy * 1000);
            ds.groups.push(g);
        }
        copy += 1;
    }
    ds.candidates.truncate(n);
    std::fs::write(&path, ds.to_json().unwrap()).unwrap();
}

/// Crash a server between log append and acknowledgement `rounds` times,
/// checking after each restart that the record is there exactly once and
/// that the client's retry is recognized rather than logged again.
pub fn crash_and_recover(root: &Path, rounds: usize) -> Result<(), String> {
    let ids: Vec<String> = candidates(root)
        .iter()
        .filter(|c| c.candidate_id.ends_with("-original"))
        .take(rounds)
        .map(|c| c.candidate_id.clone())
        .collect();
    for (n, id) in ids.iter().enumerate() {
        let body = json!({"candidate_id": id, "chosen_by": "ana", "request_id": format!("req-{n}")});
        let mut crashing = Server::start(root, true);
        if let Ok(reply) = crashing.post("/selections", &body) {
            return Err(format!("round {n}: crashing server acknowledged {reply:?}"));
        }
        let status = crashing.child.wait().map_err(|e| e.to_string())?;
        if status.success() {
            return Err(format!("round {n}: server exited cleanly instead of aborting"));
        }

        let server = Server::start(root, false);
        let view = server.get("/selections");
        if view["logged"] != n + 1 || view["current"][0]["candidate_id"] != id.as_str() {
            return Err(format!("round {n}: after restart {view}"));
        }
        let (status, rec) = server.post("/selections", &body)?;
        if status != 200 {
            return Err(format!("round {n}: retry got {status} {rec}"));
        }
        let logged = &server.get("/selections")["logged"];
        if *logged != n + 1 {
            return Err(format!("round {n}: retry was logged again ({logged} records)"));
        }
    }
    Ok(())
}

/// Sorted wall times of a mixed batch of search requests.
pub async fn search_latencies(app: &axum::Router, requests: usize) -> Result<Vec<Duration>, String> {
    let queries = [
        json!({}),
        json!({"filters": {"eyes_open_only": true, "emotions": ["happiness"]}}),
        json!({"filters": {"aspect": "2:3"}, "group_dedup": false, "page_size": 100}),
        json!({"weights": {"aesthetic": 2.0, "semantic": 0.5, "logo": 1.0, "face_position": 1.0, "on_face_focus": 0.5}}),
        json!({"filters": {"keywords": ["night", "forest"], "face_count": {"min": 0, "max": 1}}, "reverse": true, "page": 3}),
        json!({"filters": {"clusters": [0], "shot_scales": ["close-up", "medium"]}, "group_dedup": false}),
    ];
    let uri = format!("/videos/{VIDEO}/search");
    let mut times = Vec::with_capacity(requests);
    for i in 0..requests {
        let q = &queries[i % queries.len()];
        let t = std::time::Instant::now();
        let (s, _) = call(app, Method::POST, &uri, Some(q)).await;
        times.push(t.elapsed());
        if s != StatusCode::OK {
            return Err(format!("query {q} returned {s}"));
        }
    }
    times.sort();
    Ok(times)
}

pub fn percentile(sorted: &[Duration], p: usize) -> Duration {
    sorted[(sorted.len() * p / 100).min(sorted.len() - 1)]
}
