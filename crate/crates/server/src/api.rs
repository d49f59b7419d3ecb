//! HTTP+JSON routes for the review front end.

use std::collections::{BTreeMap, HashMap};
use std::path::Path as FsPath;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use framepick::config::{AspectTag, WeightConfig};
use framepick::dataset::{FaceClusterSummary, KeywordInfo, VideoInfo};
use framepick::model::Rect;
use framepick::scoring::ScoreVector;
use framepick::selection::{score_aspect, search, Preset, ProposalSet, SearchPage, SearchQuery};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{ApiError, ApiResult, FieldError};
use crate::images::crop_png;
use crate::library::{latest_wins, KeywordRequest, Library, SelectionRecord, SelectionRequest};

type AppState = Arc<Library>;
type Params = Query<HashMap<String, String>>;

pub fn router(library: Arc<Library>) -> Router {
    Router::new()
        .route("/videos", get(list_videos))
        .route("/videos/{id}", get(get_video))
        .route("/videos/{id}/proposals", get(get_proposals))
        .route("/videos/{id}/search", post(post_search))
        .route("/videos/{id}/groups/{gid}", get(get_group))
        .route("/videos/{id}/images/{candidate}", get(get_image))
        .route("/videos/{id}/score-distributions", get(get_distributions))
        .route("/videos/{id}/selections", get(get_selections).post(post_selection))
        .route("/videos/{id}/keywords", post(post_keyword))
        .with_state(library)
}

/// Parse a JSON body, reporting the failing field path.
fn parse_body<T: DeserializeOwned>(bytes: &[u8]) -> ApiResult<T> {
    let de = &mut serde_json::Deserializer::from_slice(bytes);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let field = if path == "." { "body".to_string() } else { path };
        ApiError::field(field, e.into_inner().to_string())
    })
}

fn check_params(params: &HashMap<String, String>, allowed: &[&str]) -> Vec<FieldError> {
    let mut unknown: Vec<&String> = params.keys().filter(|k| !allowed.contains(&k.as_str())).collect();
    unknown.sort();
    unknown
        .into_iter()
        .map(|k| FieldError::new(k.clone(), "unknown query parameter"))
        .collect()
}

fn parse_aspect(params: &HashMap<String, String>, errs: &mut Vec<FieldError>) -> Option<AspectTag> {
    params.get("aspect").and_then(|s| match s.parse() {
        Ok(a) => Some(a),
        Err(_) => {
            errs.push(FieldError::new("aspect", format!("{s:?} is not \"original\" or \"w:h\"")));
            None
        }
    })
}

fn finish(errs: Vec<FieldError>) -> ApiResult<()> {
    if errs.is_empty() {
        Ok(())
    } else {
        Err(ApiError::BadRequest(errs))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoSummary {
    pub video_id: String,
    pub title: String,
    pub duration_s: f64,
    /// Whether the dataset has been built.
    pub ready: bool,
}

async fn list_videos(State(lib): State<AppState>) -> Json<Vec<VideoSummary>> {
    Json(
        lib.videos()
            .map(|v| VideoSummary {
                video_id: v.id.clone(),
                title: v.title.clone(),
                duration_s: v.duration_s,
                ready: v.is_ready(),
            })
            .collect(),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoDetail {
    pub video: VideoInfo,
    /// Changes whenever the pipeline output changes.
    pub dataset_digest: String,
    pub keywords: Vec<KeywordInfo>,
    pub aspects: Vec<AspectTag>,
    pub presets: Vec<Preset>,
    pub candidates: usize,
    pub groups: usize,
    pub keyframes: usize,
    pub face_clusters: FaceClusterSummary,
    pub default_weights: WeightConfig,
}

async fn get_video(State(lib): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<VideoDetail>> {
    let snap = lib.video(&id)?.snapshot()?;
    let ds = &snap.dataset;
    Ok(Json(VideoDetail {
        video: ds.video.clone(),
        dataset_digest: ds.config_digest.clone(),
        keywords: ds.keywords.clone(),
        aspects: ds.aspects(),
        presets: Preset::ALL.to_vec(),
        candidates: ds.candidates.len(),
        groups: ds.groups.len(),
        keyframes: ds.frames.iter().filter(|f| f.is_keyframe).count(),
        face_clusters: ds.face_clusters.clone(),
        default_weights: ds.default_weights.clone(),
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalsResponse {
    pub video_id: String,
    pub aspect: AspectTag,
    pub proposals: Vec<ProposalSet>,
}

async fn get_proposals(
    State(lib): State<AppState>,
    Path(id): Path<String>,
    Query(params): Params,
) -> ApiResult<Json<ProposalsResponse>> {
    let mut errs = check_params(&params, &["preset", "aspect"]);
    let aspect = parse_aspect(&params, &mut errs).unwrap_or(AspectTag::Original);
    let preset: Option<Preset> = params.get("preset").and_then(|s| match s.parse() {
        Ok(p) => Some(p),
        Err(_) => {
            let names: Vec<&str> = Preset::ALL.iter().map(|p| p.as_str()).collect();
            errs.push(FieldError::new("preset", format!("{s:?} is not one of {}", names.join(", "))));
            None
        }
    });
    finish(errs)?;
    let video = lib.video(&id)?;
    let snap = video.snapshot()?;
    if !snap.dataset.aspects().contains(&aspect) {
        return Err(ApiError::not_found("aspect", aspect.to_string()));
    }
    let proposals = snap
        .proposals
        .iter()
        .filter(|p| p.aspect == aspect && preset.is_none_or(|want| p.preset == want))
        .cloned()
        .collect();
    Ok(Json(ProposalsResponse {
        video_id: video.id.clone(),
        aspect,
        proposals,
    }))
}

async fn post_search(State(lib): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult<Json<SearchPage>> {
    let video = lib.video(&id)?;
    let query: SearchQuery = if body.is_empty() { SearchQuery::default() } else { parse_body(&body)? };
    let errs: Vec<FieldError> = query
        .field_errors()
        .into_iter()
        .map(|(f, m)| FieldError::new(f, m))
        .collect();
    finish(errs)?;
    let snap = video.snapshot()?;
    if let Some(a) = query.filters.aspect {
        if !snap.dataset.aspects().contains(&a) {
            return Err(ApiError::field("filters.aspect", format!("no {a} candidates in this video")));
        }
    }
    search(&snap.dataset, &query).map(Json).map_err(|e| match e {
        framepick::Error::Validation(m) => ApiError::field("filters.keywords", m),
        other => other.into(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variant {
    pub aspect: AspectTag,
    pub candidate_id: String,
    pub rect: Rect,
    pub scores: ScoreVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMember {
    pub frame_id: u64,
    pub shot_id: u64,
    pub is_representative: bool,
    pub variants: Vec<Variant>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupView {
    pub video_id: String,
    pub group_id: u64,
    pub representative: Option<u64>,
    pub members: Vec<GroupMember>,
}

async fn get_group(
    State(lib): State<AppState>,
    Path((id, gid)): Path<(String, String)>,
) -> ApiResult<Json<GroupView>> {
    let gid: u64 = gid
        .parse()
        .map_err(|_| ApiError::field("gid", format!("{gid:?} is not a group number")))?;
    let video = lib.video(&id)?;
    let snap = video.snapshot()?;
    let ds = &snap.dataset;
    let group = ds.group(gid).ok_or_else(|| ApiError::not_found("group", gid.to_string()))?;

    let mut scores: BTreeMap<&str, ScoreVector> = BTreeMap::new();
    for aspect in ds.aspects() {
        for r in score_aspect(ds, aspect, &ds.default_weights)? {
            if r.candidate.group_id == gid {
                scores.insert(r.candidate.candidate_id.as_str(), r.scores);
            }
        }
    }
    let members = group
        .members
        .iter()
        .map(|&frame_id| {
            let mut variants: Vec<Variant> = ds
                .candidates
                .iter()
                .filter(|c| c.frame_id == frame_id)
                .map(|c| Variant {
                    aspect: c.aspect,
                    candidate_id: c.candidate_id.clone(),
                    rect: c.rect,
                    scores: scores[c.candidate_id.as_str()].clone(),
                })
                .collect();
            variants.sort_by_key(|v| v.aspect);
            GroupMember {
                frame_id,
                shot_id: ds.frames.iter().find(|f| f.frame_id == frame_id).map_or(0, |f| f.shot_id),
                is_representative: group.representative == Some(frame_id),
                variants,
            }
        })
        .collect();
    Ok(Json(GroupView {
        video_id: video.id.clone(),
        group_id: gid,
        representative: group.representative,
        members,
    }))
}

async fn get_image(
    State(lib): State<AppState>,
    Path((id, candidate)): Path<(String, String)>,
    Query(params): Params,
) -> ApiResult<Response> {
    let mut errs = check_params(&params, &["aspect"]);
    let aspect = parse_aspect(&params, &mut errs);
    finish(errs)?;
    let video = lib.video(&id)?;
    let snap = video.snapshot()?;
    let base = snap
        .dataset
        .candidate(&candidate)
        .ok_or_else(|| ApiError::not_found("candidate", &candidate))?;
    let cand = match aspect {
        Some(a) if a != base.aspect => {
            let sibling = framepick::dataset::Candidate::id_for(base.frame_id, a);
            snap.dataset
                .candidate(&sibling)
                .ok_or_else(|| ApiError::not_found("candidate", sibling))?
        }
        _ => base,
    };
    let frame = snap
        .frame_files
        .get(&cand.frame_id)
        .cloned()
        .ok_or_else(|| ApiError::not_found("frame", cand.frame_id.to_string()))?;
    let (rect, cid, dir) = (cand.rect, cand.candidate_id.clone(), video.crop_cache_dir());
    let bytes = tokio::task::spawn_blocking(move || crop_png(FsPath::new(&frame), rect, &dir, &cid))
        .await
        .map_err(|e| ApiError::Internal(e.to_string()))??;
    Ok(([(header::CONTENT_TYPE, "image/png")], bytes).into_response())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub column: String,
    /// `bins + 1` edges over [0, 1].
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    /// Candidates for which the score does not apply.
    pub missing: usize,
}

impl Histogram {
    fn new(column: impl Into<String>, bins: usize, values: impl Iterator<Item = Option<f64>>) -> Self {
        let mut counts = vec![0; bins];
        let mut missing = 0;
        for v in values {
            match v {
                Some(v) => {
                    let i = ((v.clamp(0.0, 1.0) * bins as f64) as usize).min(bins - 1);
                    counts[i] += 1;
                }
                None => missing += 1,
            }
        }
        Self {
            column: column.into(),
            edges: (0..=bins).map(|i| i as f64 / bins as f64).collect(),
            counts,
            missing,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distributions {
    pub video_id: String,
    pub aspect: AspectTag,
    pub candidates: usize,
    pub columns: Vec<Histogram>,
}

const DEFAULT_BINS: usize = 20;
const MAX_BINS: usize = 200;

async fn get_distributions(
    State(lib): State<AppState>,
    Path(id): Path<String>,
    Query(params): Params,
) -> ApiResult<Json<Distributions>> {
    let mut errs = check_params(&params, &["aspect", "bins"]);
    let aspect = parse_aspect(&params, &mut errs).unwrap_or(AspectTag::Original);
    let bins = match params.get("bins").map(|s| s.parse::<usize>()) {
        None => DEFAULT_BINS,
        Some(Ok(b)) if (1..=MAX_BINS).contains(&b) => b,
        Some(_) => {
            errs.push(FieldError::new("bins", format!("must be an integer in 1..={MAX_BINS}")));
            DEFAULT_BINS
        }
    };
    finish(errs)?;
    let video = lib.video(&id)?;
    let snap = video.snapshot()?;
    let ds = &snap.dataset;
    if !ds.aspects().contains(&aspect) {
        return Err(ApiError::not_found("aspect", aspect.to_string()));
    }
    let ranked = score_aspect(ds, aspect, &ds.default_weights)?;
    let s: Vec<&ScoreVector> = ranked.iter().map(|r| &r.scores).collect();
    let mut columns = vec![
        Histogram::new("aesthetic", bins, s.iter().map(|v| Some(v.aesthetic))),
        Histogram::new("semantic", bins, s.iter().map(|v| Some(v.semantic))),
        Histogram::new("logo", bins, s.iter().map(|v| Some(v.logo))),
        Histogram::new("face_position", bins, s.iter().map(|v| v.face_position)),
        Histogram::new("on_face_focus", bins, s.iter().map(|v| v.on_face_focus)),
        Histogram::new("final", bins, s.iter().map(|v| Some(v.final_score))),
    ];
    let keywords: Vec<&String> = s.first().map(|v| v.semantic_by_keyword.keys().collect()).unwrap_or_default();
    for k in keywords {
        columns.push(Histogram::new(
            format!("semantic:{k}"),
            bins,
            s.iter().map(|v| v.semantic_by_keyword.get(k).copied()),
        ));
    }
    Ok(Json(Distributions {
        video_id: video.id.clone(),
        aspect,
        candidates: s.len(),
        columns,
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionsView {
    pub video_id: String,
    /// Latest selection per aspect.
    pub current: Vec<SelectionRecord>,
    /// Records in the log, superseded ones included.
    pub logged: usize,
}

async fn get_selections(State(lib): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<SelectionsView>> {
    let video = lib.video(&id)?;
    let log = video.selections();
    Ok(Json(SelectionsView {
        video_id: video.id.clone(),
        current: latest_wins(&log),
        logged: log.len(),
    }))
}

async fn post_selection(
    State(lib): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<SelectionRecord>)> {
    let video = lib.video(&id)?;
    let req: SelectionRequest = parse_body(&body)?;
    let (created, record) = video.select(req, lib.options().fault).await?;
    let status = if created { StatusCode::CREATED } else { StatusCode::OK };
    Ok((status, Json(record)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeywordCreated {
    /// Use this in `filters.keywords` or the weights' keyword list.
    pub id: String,
    #[serde(flatten)]
    pub keyword: KeywordInfo,
}

async fn post_keyword(
    State(lib): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<KeywordCreated>)> {
    let video = lib.video(&id)?;
    let req: KeywordRequest = parse_body(&body)?;
    let keyword = video.add_keyword(req, lib.options().embedder.as_ref()).await?;
    Ok((
        StatusCode::CREATED,
        Json(KeywordCreated {
            id: keyword.text.clone(),
            keyword,
        }),
    ))
}
