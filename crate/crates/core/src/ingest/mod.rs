//! Dataset bundle layout and artifact loading.
//!
//! ```text
//! <bundle>/
//!   manifest.json
//!   frames/index.jsonl          {"frame_id", "timestamp_s", "file"}
//!   frames/frame_<id>.png       (or .ppm)
//!   artifacts/frame_embeddings.fpk     row id = frame id
//!   artifacts/crop_embeddings.fpk      row id = "<frame id>:<aspect>" (optional)
//!   artifacts/keyword_embeddings.fpk   row id = keyword text
//!   artifacts/prompt_embeddings.fpk    rows "good" and "bad"
//!   artifacts/face_embeddings.fpk      row id = face id, or "<face id>#<n>" per extra appearance
//!   artifacts/faces.jsonl       {"face_id", "frame_id", "bbox": {x,y,w,h}, "attributes"?}
//!   artifacts/landmarks.jsonl   {"face_id", "frame_id", "scheme", "left", "right"}
//!   artifacts/emotions.jsonl    {"face_id", "emotion"}
//!   artifacts/shot_scale.jsonl  {"frame_id", "label"}
//!   artifacts/saliency/frame_<id>.pgm
//!   artifacts/logo_prior.pgm
//!   cache/                      stage cache (the only directory ingest writes)
//! ```
//!
//! Face boxes and landmarks are in original (letterboxed) frame pixels.
//! Landmark lists hold the contour points of one eye in clockwise order
//! from the left extreme, with the pupil appended for the nine-point scheme.

pub mod cache;
pub mod keywords;
pub mod tensor;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    Emotion, EmbeddingKind, EmbeddingVector, Grid, Keyword, KeywordSource, LandmarkScheme,
    LogoPriorMap, Rect, SaliencyMap, ShotScale, VideoManifest,
};
pub use tensor::{read_tensor_file, write_tensor_file, NamedMatrix};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetBundle {
    root: PathBuf,
}

impl DatasetBundle {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        let b = Self { root };
        if !b.manifest_path().is_file() {
            return Err(Error::ArtifactMissing {
                artifact: "manifest.json".into(),
                ids: vec![b.root.display().to_string()],
            });
        }
        Ok(b)
    }

    /// Wrap a directory without checking it; used when writing new bundles.
    pub fn at(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.root.join("manifest.json")
    }

    pub fn frames_dir(&self) -> PathBuf {
        self.root.join("frames")
    }

    pub fn frames_index_path(&self) -> PathBuf {
        self.frames_dir().join("index.jsonl")
    }

    pub fn artifacts_dir(&self) -> PathBuf {
        self.root.join("artifacts")
    }

    pub fn artifact(&self, name: &str) -> PathBuf {
        self.artifacts_dir().join(name)
    }

    pub fn saliency_path(&self, frame_id: u64) -> PathBuf {
        self.artifacts_dir()
            .join("saliency")
            .join(format!("frame_{frame_id}.pgm"))
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.root.join("cache")
    }

    /// Where the pipeline publishes the dataset consumed by the service.
    pub fn output_dir(&self) -> PathBuf {
        self.cache_dir().join("output")
    }

    pub fn frame_path(&self, entry: &FrameIndexEntry) -> PathBuf {
        self.frames_dir().join(&entry.file)
    }

    pub fn load_manifest(&self) -> Result<VideoManifest> {
        let mut manifest = load_manifest(&self.manifest_path())?;
        let sidecar = self.artifact("keyword_embeddings.fpk");
        if sidecar.is_file() {
            attach_keyword_embeddings(&mut manifest, &read_tensor_file(&sidecar)?);
        }
        Ok(manifest)
    }

    pub fn load_frame_index(&self) -> Result<Vec<FrameIndexEntry>> {
        let mut entries: Vec<FrameIndexEntry> = read_jsonl(&self.frames_index_path())?;
        entries.sort_by(|a, b| {
            a.timestamp_s
                .total_cmp(&b.timestamp_s)
                .then(a.frame_id.cmp(&b.frame_id))
        });
        Ok(entries)
    }

    pub fn load_artifacts(&self, manifest: &VideoManifest) -> Result<ArtifactSet> {
        let optional_tensor = |name: &str| -> Result<Option<NamedMatrix>> {
            let p = self.artifact(name);
            if p.is_file() {
                read_tensor_file(&p).map(Some)
            } else {
                Ok(None)
            }
        };
        let optional_jsonl = |name: &str| -> Result<Option<PathBuf>> {
            let p = self.artifact(name);
            Ok(p.is_file().then_some(p))
        };

        let frame_embeddings = optional_tensor("frame_embeddings.fpk")?;
        let crop_embeddings = optional_tensor("crop_embeddings.fpk")?;
        let keyword_embeddings = optional_tensor("keyword_embeddings.fpk")?;
        let prompt_embeddings = optional_tensor("prompt_embeddings.fpk")?;
        let face_embeddings = optional_tensor("face_embeddings.fpk")?;

        let faces: Vec<FaceDetection> = match optional_jsonl("faces.jsonl")? {
            Some(p) => read_jsonl(&p)?,
            None => Vec::new(),
        };
        let landmarks: Vec<LandmarkRecord> = match optional_jsonl("landmarks.jsonl")? {
            Some(p) => read_jsonl(&p)?,
            None => Vec::new(),
        };
        let emotions: Vec<EmotionRecord> = match optional_jsonl("emotions.jsonl")? {
            Some(p) => read_jsonl(&p)?,
            None => Vec::new(),
        };
        let shot_scales: Vec<ShotScaleRecord> = match optional_jsonl("shot_scale.jsonl")? {
            Some(p) => read_jsonl(&p)?,
            None => Vec::new(),
        };
        let logo_path = self.artifact("logo_prior.pgm");
        let logo_prior = if logo_path.is_file() {
            Some(LogoPriorMap::new(load_pgm_grid(&logo_path)?)?)
        } else {
            None
        };

        Ok(ArtifactSet {
            embedding_dim: manifest.embedding_dim,
            frame_embeddings: frame_embeddings.map(to_map).unwrap_or_default(),
            crop_embeddings: crop_embeddings.map(to_map).unwrap_or_default(),
            keyword_embeddings: keyword_embeddings.map(to_map).unwrap_or_default(),
            prompt_embeddings: prompt_embeddings.map(to_map).unwrap_or_default(),
            face_embeddings: face_embeddings.map(to_map).unwrap_or_default(),
            faces,
            landmarks,
            emotions,
            shot_scales,
            logo_prior,
        })
    }

    pub fn load_saliency(&self, frame_id: u64) -> Result<SaliencyMap> {
        let path = self.saliency_path(frame_id);
        if !path.is_file() {
            return Err(Error::ArtifactMissing {
                artifact: "saliency".into(),
                ids: vec![frame_id.to_string()],
            });
        }
        SaliencyMap::new(frame_id, load_pgm_grid(&path)?)
    }
}

fn to_map(m: NamedMatrix) -> BTreeMap<String, Vec<f32>> {
    m.iter().map(|(id, row)| (id.to_owned(), row.to_vec())).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameIndexEntry {
    pub frame_id: u64,
    pub timestamp_s: f64,
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceDetection {
    pub face_id: String,
    pub frame_id: u64,
    pub bbox: Rect,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub attributes: BTreeMap<String, serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandmarkRecord {
    pub face_id: String,
    pub frame_id: u64,
    pub scheme: LandmarkScheme,
    #[serde(default)]
    pub left: Option<Vec<[f64; 2]>>,
    #[serde(default)]
    pub right: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmotionRecord {
    pub face_id: String,
    pub emotion: Emotion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotScaleRecord {
    pub frame_id: u64,
    pub label: ShotScale,
}

/// All non-image artifacts of a bundle, loaded into memory.
#[derive(Debug, Clone, Default)]
pub struct ArtifactSet {
    pub embedding_dim: usize,
    pub frame_embeddings: BTreeMap<String, Vec<f32>>,
    pub crop_embeddings: BTreeMap<String, Vec<f32>>,
    pub keyword_embeddings: BTreeMap<String, Vec<f32>>,
    pub prompt_embeddings: BTreeMap<String, Vec<f32>>,
    pub face_embeddings: BTreeMap<String, Vec<f32>>,
    pub faces: Vec<FaceDetection>,
    pub landmarks: Vec<LandmarkRecord>,
    pub emotions: Vec<EmotionRecord>,
    pub shot_scales: Vec<ShotScaleRecord>,
    pub logo_prior: Option<LogoPriorMap>,
}

impl ArtifactSet {
    pub fn frame_embedding(&self, frame_id: u64) -> Option<&[f32]> {
        self.frame_embeddings
            .get(&frame_id.to_string())
            .map(Vec::as_slice)
    }

    /// Embedding rows belonging to a face: its own row first, then
    /// `"<face id>#<n>"` appearance rows in id order.
    pub fn face_appearances(&self, face_id: &str) -> Vec<(&str, &[f32])> {
        let mut out = Vec::new();
        if let Some((k, v)) = self.face_embeddings.get_key_value(face_id) {
            out.push((k.as_str(), v.as_slice()));
        }
        let prefix = format!("{face_id}#");
        for (k, v) in self.face_embeddings.range(prefix.clone()..) {
            if !k.starts_with(&prefix) {
                break;
            }
            out.push((k.as_str(), v.as_slice()));
        }
        out
    }

    pub fn prompt(&self, name: &str) -> Option<EmbeddingVector> {
        self.prompt_embeddings
            .get(name)
            .map(|v| EmbeddingVector::new(name, EmbeddingKind::Prompt, v.clone()))
    }
}

#[derive(Debug, Deserialize)]
struct ManifestFile {
    video_id: String,
    fps: f64,
    frame_count: u64,
    #[serde(default)]
    duration_s: Option<f64>,
    #[serde(default)]
    title: String,
    #[serde(default)]
    summary: String,
    #[serde(default)]
    keywords: Vec<String>,
    embedding_dim: usize,
}

/// Parse `manifest.json`. Keywords come back without embeddings.
pub fn load_manifest(path: &Path) -> Result<VideoManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let raw: ManifestFile = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })?;
    let manifest = VideoManifest {
        duration_s: raw
            .duration_s
            .unwrap_or(raw.frame_count as f64 / raw.fps.max(f64::MIN_POSITIVE)),
        video_id: raw.video_id,
        fps: raw.fps,
        frame_count: raw.frame_count,
        title: raw.title,
        summary: raw.summary,
        keywords: raw
            .keywords
            .into_iter()
            .map(|text| Keyword {
                text,
                embedding: None,
                source: KeywordSource::Metadata,
            })
            .collect(),
        embedding_dim: raw.embedding_dim,
    };
    manifest.validate()?;
    Ok(manifest)
}

fn attach_keyword_embeddings(manifest: &mut VideoManifest, sidecar: &NamedMatrix) {
    let rows: HashMap<&str, &[f32]> = sidecar.iter().collect();
    for kw in &mut manifest.keywords {
        if let Some(v) = rows.get(kw.text.as_str()) {
            kw.embedding = Some(EmbeddingVector::new(
                kw.text.clone(),
                EmbeddingKind::Keyword,
                v.to_vec(),
            ));
        }
    }
}

/// Read one JSON record per non-blank line.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut text = String::new();
    for r in records {
        text.push_str(&serde_json::to_string(r).expect("record serializes"));
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Load an 8-bit grayscale image as a grid scaled to `[0, 1]`.
pub fn load_pgm_grid(path: &Path) -> Result<Grid> {
    let img = image::open(path)?.to_luma8();
    let (w, h) = img.dimensions();
    let data = img.pixels().map(|p| f64::from(p.0[0]) / 255.0).collect();
    Grid::new(w as usize, h as usize, data)
}

pub fn save_pgm_grid(path: &Path, grid: &Grid) -> Result<()> {
    let bytes: Vec<u8> = grid
        .data
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let img = image::GrayImage::from_raw(grid.width as u32, grid.height as u32, bytes)
        .ok_or_else(|| Error::Domain("grid size mismatch".into()))?;
    img.save_with_format(path, image::ImageFormat::Pnm)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IssueKind {
    DanglingReference,
    DimensionMismatch,
    MissingArtifact,
    InvalidValue,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationIssue {
    pub kind: IssueKind,
    pub severity: Severity,
    pub item: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub issues: Vec<ValidationIssue>,
}

impl ValidationReport {
    /// No error-severity issues. Warnings (e.g. optional artifacts) do not block.
    pub fn usable(&self) -> bool {
        !self.issues.iter().any(|i| i.severity == Severity::Error)
    }

    pub fn is_empty(&self) -> bool {
        self.issues.is_empty()
    }

    fn push(&mut self, kind: IssueKind, severity: Severity, item: impl Into<String>, message: impl Into<String>) {
        self.issues.push(ValidationIssue {
            kind,
            severity,
            item: item.into(),
            message: message.into(),
        });
    }
}

/// Cross-check the manifest, frame index and artifacts.
///
/// `saliency_present` lists frames whose saliency map exists on disk;
/// missing maps are warnings since only keyframes need one.
pub fn validate_dataset(
    manifest: &VideoManifest,
    frames: &[FrameIndexEntry],
    artifacts: &ArtifactSet,
    saliency_present: &BTreeSet<u64>,
) -> ValidationReport {
    use IssueKind::*;
    use Severity::*;

    let mut report = ValidationReport::default();
    let dim = manifest.embedding_dim;
    let frame_ids: BTreeSet<u64> = frames.iter().map(|f| f.frame_id).collect();

    if frame_ids.len() != frames.len() {
        report.push(InvalidValue, Error, "frames/index.jsonl", "duplicate frame ids");
    }

    let check_dims = |report: &mut ValidationReport, what: &str, map: &BTreeMap<String, Vec<f32>>| {
        for (id, v) in map {
            if v.len() != dim {
                report.push(
                    DimensionMismatch,
                    Error,
                    format!("{what}:{id}"),
                    format!("dimension {} but manifest declares {dim}", v.len()),
                );
            }
        }
    };
    check_dims(&mut report, "frame_embedding", &artifacts.frame_embeddings);
    check_dims(&mut report, "crop_embedding", &artifacts.crop_embeddings);
    check_dims(&mut report, "keyword_embedding", &artifacts.keyword_embeddings);
    check_dims(&mut report, "prompt_embedding", &artifacts.prompt_embeddings);
    check_dims(&mut report, "face_embedding", &artifacts.face_embeddings);

    for kw in &manifest.keywords {
        match &kw.embedding {
            None => report.push(
                MissingArtifact,
                Error,
                format!("keyword:{}", kw.text),
                "keyword has no embedding",
            ),
            Some(e) if e.dim() != dim && !artifacts.keyword_embeddings.contains_key(&kw.text) => {
                report.push(
                    DimensionMismatch,
                    Error,
                    format!("keyword:{}", kw.text),
                    format!("dimension {} but manifest declares {dim}", e.dim()),
                )
            }
            Some(_) => {}
        }
    }

    for id in artifacts.frame_embeddings.keys() {
        let known = id.parse::<u64>().is_ok_and(|f| frame_ids.contains(&f));
        if !known {
            report.push(
                DanglingReference,
                Error,
                format!("frame_embedding:{id}"),
                "embedding references no frame",
            );
        }
    }
    for f in &frame_ids {
        if !artifacts.frame_embeddings.contains_key(&f.to_string()) {
            report.push(
                MissingArtifact,
                Error,
                format!("frame:{f}"),
                "frame has no embedding",
            );
        }
    }
    for name in ["good", "bad"] {
        if !artifacts.prompt_embeddings.contains_key(name) {
            report.push(
                MissingArtifact,
                Error,
                format!("prompt:{name}"),
                "prompt embedding missing",
            );
        }
    }

    let face_ids: BTreeSet<&str> = artifacts.faces.iter().map(|f| f.face_id.as_str()).collect();
    for face in &artifacts.faces {
        if !frame_ids.contains(&face.frame_id) {
            report.push(
                DanglingReference,
                Error,
                format!("face:{}", face.face_id),
                format!("references unknown frame {}", face.frame_id),
            );
        }
        if face.bbox.is_empty() {
            report.push(
                InvalidValue,
                Error,
                format!("face:{}", face.face_id),
                "empty bounding box",
            );
        }
        if artifacts.face_appearances(&face.face_id).is_empty() {
            report.push(
                MissingArtifact,
                Warning,
                format!("face:{}", face.face_id),
                "face has no embedding and will not be clustered",
            );
        }
    }
    for lm in &artifacts.landmarks {
        if !face_ids.contains(lm.face_id.as_str()) {
            report.push(
                DanglingReference,
                Error,
                format!("landmarks:{}", lm.face_id),
                "references unknown face",
            );
        }
    }
    for em in &artifacts.emotions {
        if !face_ids.contains(em.face_id.as_str()) {
            report.push(
                DanglingReference,
                Error,
                format!("emotion:{}", em.face_id),
                "references unknown face",
            );
        }
    }
    for s in &artifacts.shot_scales {
        if !frame_ids.contains(&s.frame_id) {
            report.push(
                DanglingReference,
                Error,
                format!("shot_scale:{}", s.frame_id),
                "references unknown frame",
            );
        }
    }
    for f in &frame_ids {
        if !saliency_present.contains(f) {
            report.push(
                MissingArtifact,
                Warning,
                format!("saliency:{f}"),
                "no saliency map; frame cannot be scored if selected as keyframe",
            );
        }
    }
    if artifacts.logo_prior.is_none() {
        report.push(MissingArtifact, Error, "logo_prior.pgm", "logo prior missing");
    }
    report
}

impl DatasetBundle {
    /// Load everything needed for validation and produce the report.
    pub fn validate(&self) -> Result<ValidationReport> {
        let manifest = self.load_manifest()?;
        let frames = self.load_frame_index()?;
        let artifacts = self.load_artifacts(&manifest)?;
        let saliency: BTreeSet<u64> = frames
            .iter()
            .map(|f| f.frame_id)
            .filter(|id| self.saliency_path(*id).is_file())
            .collect();
        let mut report = validate_dataset(&manifest, &frames, &artifacts, &saliency);
        for f in &frames {
            if !self.frame_path(f).is_file() {
                report.push(
                    IssueKind::MissingArtifact,
                    Severity::Error,
                    format!("frame:{}", f.frame_id),
                    format!("image file {} missing", f.file),
                );
            }
        }
        Ok(report)
    }
}
