//! Videos served by one process: lazily loaded dataset snapshots plus the
//! per-video selection and keyword logs.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};
use std::time::SystemTime;

use chrono::{DateTime, Utc};
use framepick::config::AspectTag;
use framepick::dataset::{
    load_candidate_embeddings, KeywordInfo, ScoredDataset, DATASET_FILE, EMBEDDINGS_FILE, PROPOSALS_FILE,
};
use framepick::ingest::DatasetBundle;
use framepick::model::KeywordSource;
use framepick::scoring::semantic_cosines;
use framepick::selection::ProposalSet;
use serde::{Deserialize, Serialize};
use tracing::{info, warn};

use crate::embed::EmbeddingClient;
use crate::error::{ApiError, ApiResult};
use crate::log::AppendLog;

pub const FAULT_ENV: &str = "FRAMEPICK_FAULT";
const REVIEW_DIR: &str = "review";
const SELECTIONS_LOG: &str = "selections.jsonl";
const KEYWORDS_LOG: &str = "keywords.jsonl";

/// Deliberate failure points for crash testing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Abort the process after a selection is durable but before the reply.
    AbortAfterAppend,
}

impl Fault {
    pub fn from_env() -> Option<Self> {
        match std::env::var(FAULT_ENV).ok()?.as_str() {
            "abort-after-append" => Some(Fault::AbortAfterAppend),
            other => {
                warn!(value = other, "ignoring unknown {FAULT_ENV}");
                None
            }
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct LibraryOptions {
    pub embedder: Option<EmbeddingClient>,
    pub fault: Option<Fault>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRecord {
    pub video_id: String,
    pub candidate_id: String,
    pub aspect: AspectTag,
    pub chosen_by: String,
    pub chosen_at: DateTime<Utc>,
    #[serde(default)]
    pub note: String,
    /// Client-chosen idempotency key; a retried request is not logged twice.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionRequest {
    pub candidate_id: String,
    /// Defaults to the candidate's own aspect; any other value conflicts.
    #[serde(default)]
    pub aspect: Option<AspectTag>,
    pub chosen_by: String,
    #[serde(default)]
    pub note: String,
    /// Server time when absent.
    #[serde(default)]
    pub chosen_at: Option<DateTime<Utc>>,
    #[serde(default)]
    pub request_id: Option<String>,
    /// Optimistic check: the candidate the client believes is currently
    /// selected for this aspect, or `""` for none.
    #[serde(default)]
    pub expected_current: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserKeyword {
    pub text: String,
    pub embedding: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeywordRequest {
    pub text: String,
    #[serde(default)]
    pub embedding: Option<Vec<f32>>,
}

/// Latest selection per aspect, in aspect order.
pub fn latest_wins(records: &[SelectionRecord]) -> Vec<SelectionRecord> {
    let mut view: BTreeMap<AspectTag, &SelectionRecord> = BTreeMap::new();
    for r in records {
        view.insert(r.aspect, r);
    }
    view.into_values().cloned().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Stamp {
    len: u64,
    modified: Option<SystemTime>,
}

fn stamp(path: &Path) -> Option<Stamp> {
    let m = fs::metadata(path).ok()?;
    Some(Stamp {
        len: m.len(),
        modified: m.modified().ok(),
    })
}

/// Immutable in-memory view of one built dataset.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub dataset: ScoredDataset,
    pub embeddings: BTreeMap<String, Vec<f32>>,
    pub proposals: Vec<ProposalSet>,
    pub frame_files: BTreeMap<u64, PathBuf>,
    stamp: Stamp,
}

impl Snapshot {
    pub fn embedding_dim(&self) -> Option<usize> {
        self.embeddings.values().next().map(Vec::len)
    }

    fn apply_keyword(&mut self, kw: &UserKeyword) -> ApiResult<()> {
        let pair = [(kw.text.clone(), kw.embedding.clone())];
        for c in &mut self.dataset.candidates {
            let emb = self
                .embeddings
                .get(&c.candidate_id)
                .ok_or_else(|| ApiError::Internal(format!("no embedding for candidate {}", c.candidate_id)))?;
            c.raw.semantic.extend(semantic_cosines(emb, &pair)?);
        }
        self.dataset.keywords.push(KeywordInfo {
            text: kw.text.clone(),
            source: KeywordSource::UserAdded,
        });
        Ok(())
    }

    pub fn has_keyword(&self, text: &str) -> bool {
        self.dataset.keywords.iter().any(|k| k.text.eq_ignore_ascii_case(text))
    }
}

struct Writer {
    selections: AppendLog<SelectionRecord>,
    keywords: AppendLog<UserKeyword>,
}

pub struct Video {
    pub id: String,
    pub title: String,
    pub duration_s: f64,
    bundle: DatasetBundle,
    snapshot: RwLock<Option<Arc<Snapshot>>>,
    selections: RwLock<Vec<SelectionRecord>>,
    keywords: RwLock<Vec<UserKeyword>>,
    writer: tokio::sync::Mutex<Writer>,
}

impl Video {
    fn open(bundle: DatasetBundle) -> ApiResult<Self> {
        let manifest = bundle.load_manifest()?;
        let review = bundle.root().join(REVIEW_DIR);
        let (selections_log, selections) = AppendLog::open(review.join(SELECTIONS_LOG))?;
        let (keywords_log, keywords) = AppendLog::open(review.join(KEYWORDS_LOG))?;
        Ok(Self {
            id: manifest.video_id,
            title: manifest.title,
            duration_s: manifest.duration_s,
            bundle,
            snapshot: RwLock::new(None),
            selections: RwLock::new(selections),
            keywords: RwLock::new(keywords),
            writer: tokio::sync::Mutex::new(Writer {
                selections: selections_log,
                keywords: keywords_log,
            }),
        })
    }

    pub fn bundle(&self) -> &DatasetBundle {
        &self.bundle
    }

    fn dataset_path(&self) -> PathBuf {
        self.bundle.output_dir().join(DATASET_FILE)
    }

    pub fn is_ready(&self) -> bool {
        self.dataset_path().is_file()
    }

    pub fn crop_cache_dir(&self) -> PathBuf {
        self.bundle.cache_dir().join("crops")
    }

    /// Current dataset, loaded on first use and reloaded when the pipeline
    /// rewrites it; in-flight readers keep the snapshot they hold.
    pub fn snapshot(&self) -> ApiResult<Arc<Snapshot>> {
        let path = self.dataset_path();
        let current = stamp(&path).ok_or_else(|| {
            ApiError::NotReady(format!("video {:?} has no built dataset; run the pipeline first", self.id))
        })?;
        if let Some(s) = self.snapshot.read().expect("snapshot lock").as_ref() {
            if s.stamp == current {
                return Ok(s.clone());
            }
        }
        let loaded = Arc::new(self.load(current)?);
        *self.snapshot.write().expect("snapshot lock") = Some(loaded.clone());
        Ok(loaded)
    }

    fn load(&self, stamp: Stamp) -> ApiResult<Snapshot> {
        let out = self.bundle.output_dir();
        let dataset = ScoredDataset::load(&out.join(DATASET_FILE))?;
        let embeddings = load_candidate_embeddings(&out.join(EMBEDDINGS_FILE))?;
        let proposals_path = out.join(PROPOSALS_FILE);
        let proposals = match fs::read(&proposals_path) {
            Ok(bytes) => serde_json::from_slice(&bytes)
                .map_err(|e| ApiError::Internal(format!("{}: {e}", proposals_path.display())))?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(e.into()),
        };
        let frame_files = self
            .bundle
            .load_frame_index()?
            .iter()
            .map(|e| (e.frame_id, self.bundle.frame_path(e)))
            .collect();
        let mut snap = Snapshot {
            dataset,
            embeddings,
            proposals,
            frame_files,
            stamp,
        };
        for kw in self.keywords.read().expect("keyword lock").iter() {
            if snap.has_keyword(&kw.text) {
                warn!(video = %self.id, keyword = %kw.text, "user keyword now part of the dataset");
                continue;
            }
            snap.apply_keyword(kw)?;
        }
        info!(video = %self.id, candidates = snap.dataset.candidates.len(), "dataset loaded");
        Ok(snap)
    }

    pub fn selections(&self) -> Vec<SelectionRecord> {
        self.selections.read().expect("selection lock").clone()
    }

    /// Validate, log durably, then publish. Returns whether a new record was
    /// written (false for a replayed request id).
    pub async fn select(&self, req: SelectionRequest, fault: Option<Fault>) -> ApiResult<(bool, SelectionRecord)> {
        let mut errs = Vec::new();
        if req.chosen_by.trim().is_empty() {
            errs.push(crate::error::FieldError::new("chosen_by", "must not be blank"));
        }
        if req.candidate_id.trim().is_empty() {
            errs.push(crate::error::FieldError::new("candidate_id", "must not be blank"));
        }
        if !errs.is_empty() {
            return Err(ApiError::BadRequest(errs));
        }
        let snap = self.snapshot()?;
        let cand = snap
            .dataset
            .candidate(&req.candidate_id)
            .ok_or_else(|| ApiError::not_found("candidate", &req.candidate_id))?;
        let aspect = req.aspect.unwrap_or(cand.aspect);
        if aspect != cand.aspect {
            return Err(ApiError::Conflict(format!(
                "candidate {} is a {} crop, not {aspect}",
                cand.candidate_id, cand.aspect
            )));
        }

        let mut writer = self.writer.lock().await;
        let log = self.selections();
        if let Some(rid) = &req.request_id {
            if let Some(prev) = log.iter().find(|r| r.request_id.as_ref() == Some(rid)) {
                return Ok((false, prev.clone()));
            }
        }
        if let Some(expected) = &req.expected_current {
            let current = log.iter().rev().find(|r| r.aspect == aspect).map(|r| r.candidate_id.as_str());
            if current.unwrap_or("") != expected {
                return Err(ApiError::Conflict(format!(
                    "current {aspect} selection is {}, not {}",
                    current.map_or("none".to_string(), |c| format!("{c:?}")),
                    if expected.is_empty() { "none".to_string() } else { format!("{expected:?}") }
                )));
            }
        }
        let record = SelectionRecord {
            video_id: self.id.clone(),
            candidate_id: req.candidate_id,
            aspect,
            chosen_by: req.chosen_by.trim().to_string(),
            chosen_at: req.chosen_at.unwrap_or_else(Utc::now),
            note: req.note,
            request_id: req.request_id,
        };
        writer.selections.append(&record)?;
        if fault == Some(Fault::AbortAfterAppend) {
            std::process::abort();
        }
        self.selections.write().expect("selection lock").push(record.clone());
        Ok((true, record))
    }

    /// Register a user keyword and recompute its similarity for every
    /// candidate.
    pub async fn add_keyword(&self, req: KeywordRequest, embedder: Option<&EmbeddingClient>) -> ApiResult<KeywordInfo> {
        let text = req.text.trim().to_string();
        if text.is_empty() {
            return Err(ApiError::field("text", "must not be blank"));
        }
        let snap = self.snapshot()?;
        if snap.has_keyword(&text) {
            return Err(ApiError::Conflict(format!("keyword {text:?} already exists")));
        }
        let embedding = match (req.embedding, embedder) {
            (Some(e), _) => e,
            (None, Some(client)) => {
                let client = client.clone();
                let t = text.clone();
                tokio::task::spawn_blocking(move || client.embed(&t))
                    .await
                    .map_err(|e| ApiError::Internal(e.to_string()))?
                    .map_err(ApiError::Upstream)?
            }
            (None, None) => {
                return Err(ApiError::Unprocessable(format!(
                    "keyword {text:?} needs an embedding: include \"embedding\" in the request body, \
                     or start the server with an embedding endpoint ({})",
                    crate::embed::ENDPOINT_ENV
                )))
            }
        };
        if let Some(dim) = snap.embedding_dim() {
            if embedding.len() != dim {
                return Err(ApiError::field(
                    "embedding",
                    format!("expected {dim} values, got {}", embedding.len()),
                ));
            }
        }
        if embedding.iter().any(|v| !v.is_finite()) || embedding.iter().all(|v| *v == 0.0) {
            return Err(ApiError::field("embedding", "must be finite and non-zero"));
        }

        let mut writer = self.writer.lock().await;
        let snap = self.snapshot()?;
        if snap.has_keyword(&text) {
            return Err(ApiError::Conflict(format!("keyword {text:?} already exists")));
        }
        let kw = UserKeyword { text, embedding };
        let mut next = (*snap).clone();
        next.apply_keyword(&kw)?;
        writer.keywords.append(&kw)?;
        self.keywords.write().expect("keyword lock").push(kw.clone());
        *self.snapshot.write().expect("snapshot lock") = Some(Arc::new(next));
        Ok(KeywordInfo {
            text: kw.text,
            source: KeywordSource::UserAdded,
        })
    }
}

pub struct Library {
    videos: BTreeMap<String, Arc<Video>>,
    options: LibraryOptions,
}

impl Library {
    /// Each path is either a bundle or a directory of bundles.
    pub fn open(paths: &[PathBuf], options: LibraryOptions) -> ApiResult<Self> {
        let mut videos = BTreeMap::new();
        for path in paths {
            for root in discover(path)? {
                let video = Video::open(DatasetBundle::open(&root)?)?;
                if videos.contains_key(&video.id) {
                    return Err(ApiError::Conflict(format!(
                        "video id {:?} appears twice (second at {})",
                        video.id,
                        root.display()
                    )));
                }
                info!(video = %video.id, root = %root.display(), ready = video.is_ready(), "registered");
                videos.insert(video.id.clone(), Arc::new(video));
            }
        }
        Ok(Self { videos, options })
    }

    pub fn videos(&self) -> impl Iterator<Item = &Arc<Video>> {
        self.videos.values()
    }

    pub fn video(&self, id: &str) -> ApiResult<Arc<Video>> {
        self.videos.get(id).cloned().ok_or_else(|| ApiError::not_found("video", id))
    }

    pub fn options(&self) -> &LibraryOptions {
        &self.options
    }
}

fn discover(path: &Path) -> ApiResult<Vec<PathBuf>> {
    if DatasetBundle::open(path).is_ok() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut roots: Vec<PathBuf> = fs::read_dir(path)
        .map_err(|e| ApiError::Internal(format!("{}: {e}", path.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir() && DatasetBundle::open(p).is_ok())
        .collect();
    roots.sort();
    if roots.is_empty() {
        return Err(ApiError::not_found("bundle", path.display().to_string()));
    }
    Ok(roots)
}
