//! A built synthetic video shared by the service suites, plus request helpers.
#![allow(dead_code)]

pub mod service;

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use framepick::ingest::DatasetBundle;
use framepick::pipeline::Pipeline;
use framepick::synthetic::{generate, recommended_config, SyntheticSpec};
use framepick_server::{router, Library, LibraryOptions};
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;

pub const VIDEO: &str = "synthetic";

struct Template {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

/// Generate and build the synthetic video once per test binary.
pub fn template() -> &'static Path {
    static T: OnceLock<Template> = OnceLock::new();
    &T.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().join(VIDEO);
        generate(&root, &SyntheticSpec::default()).unwrap();
        Pipeline::new(DatasetBundle::open(&root).unwrap(), recommended_config())
            .unwrap()
            .run()
            .unwrap_or_else(|e| panic!("{e}"));
        Template { _dir: dir, root }
    })
    .root
}

pub fn copy_dir(from: &Path, to: &Path) {
    fs::create_dir_all(to).unwrap();
    for entry in fs::read_dir(from).unwrap() {
        let entry = entry.unwrap();
        let target = to.join(entry.file_name());
        if entry.file_type().unwrap().is_dir() {
            copy_dir(&entry.path(), &target);
        } else {
            fs::copy(entry.path(), target).unwrap();
        }
    }
}

/// A private copy of the built video, so logs start empty.
pub fn fresh_bundle() -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join(VIDEO);
    copy_dir(template(), &root);
    (dir, root)
}

pub fn app_with(root: &Path, options: LibraryOptions) -> Router {
    router(Arc::new(Library::open(&[root.to_path_buf()], options).unwrap()))
}

pub fn app(root: &Path) -> Router {
    app_with(root, LibraryOptions::default())
}

pub async fn call(app: &Router, method: Method, uri: &str, body: Option<&Value>) -> (StatusCode, Vec<u8>) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(serde_json::to_vec(v).unwrap())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes)
}

pub async fn get_json(app: &Router, uri: &str) -> (StatusCode, Value) {
    let (s, b) = call(app, Method::GET, uri, None).await;
    (s, serde_json::from_slice(&b).unwrap_or(Value::Null))
}

pub async fn post_json(app: &Router, uri: &str, body: &Value) -> (StatusCode, Value) {
    let (s, b) = call(app, Method::POST, uri, Some(body)).await;
    (s, serde_json::from_slice(&b).unwrap_or(Value::Null))
}

pub fn candidates(root: &Path) -> Vec<framepick::dataset::Candidate> {
    let bundle = DatasetBundle::open(root).unwrap();
    framepick::dataset::ScoredDataset::load(&bundle.output_dir().join(framepick::dataset::DATASET_FILE))
        .unwrap()
        .candidates
}
