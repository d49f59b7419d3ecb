//! The scored dataset: the pipeline's final product and the service's input.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::{AspectTag, WeightConfig};
use crate::cropper::RejectReason;
use crate::error::{Error, Result};
use crate::grouping::{FaceCluster, GridPoint, Group};
use crate::ingest::tensor::{read_tensor_file, NamedMatrix};
use crate::model::{Emotion, FaceRecord, FrameRecord, KeywordSource, Rect, ShotScale};
use crate::scoring::RawScores;

pub const DATASET_FILE: &str = "dataset.json";
pub const EMBEDDINGS_FILE: &str = "candidate_embeddings.fpk";
pub const PROPOSALS_FILE: &str = "proposals.json";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoInfo {
    pub video_id: String,
    pub title: String,
    pub summary: String,
    pub fps: f64,
    pub frame_count: u64,
    pub duration_s: f64,
    pub frame_width: u32,
    pub frame_height: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeywordInfo {
    pub text: String,
    pub source: KeywordSource,
}

/// A face as it appears in a candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateFace {
    pub face_id: String,
    pub cluster_id: i64,
    pub emotion: Emotion,
    pub eyes_closed: bool,
}

/// One thumbnail proposal: the best crop of a keyframe for one aspect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub candidate_id: String,
    pub frame_id: u64,
    pub shot_id: u64,
    pub group_id: u64,
    pub aspect: AspectTag,
    /// Crop in original frame pixels.
    pub rect: Rect,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub alternates: Vec<Rect>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub face_centered_rect: Option<Rect>,
    /// Set when every crop was rejected and the mildest one was kept.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crop_fallback: Option<RejectReason>,
    pub faces: Vec<CandidateFace>,
    pub shot_scale: Option<ShotScale>,
    pub raw: RawScores,
}

impl Candidate {
    pub fn id_for(frame_id: u64, aspect: AspectTag) -> String {
        match aspect {
            AspectTag::Original => format!("f{frame_id:06}-original"),
            AspectTag::Ratio(a, b) => format!("f{frame_id:06}-{a}x{b}"),
        }
    }

    pub fn eyes_open(&self) -> bool {
        self.faces.iter().all(|f| !f.eyes_closed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceClusterSummary {
    pub clusters: Vec<FaceCluster>,
    pub base_k: usize,
    pub chosen_k: usize,
    pub score: f64,
    pub score_curve: Vec<GridPoint>,
    pub manual_parameters_needed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredDataset {
    pub format_version: u32,
    pub config_digest: String,
    pub video: VideoInfo,
    pub keywords: Vec<KeywordInfo>,
    pub frames: Vec<FrameRecord>,
    pub groups: Vec<Group>,
    pub faces: Vec<FaceRecord>,
    pub face_clusters: FaceClusterSummary,
    pub candidates: Vec<Candidate>,
    pub default_weights: WeightConfig,
}

impl ScoredDataset {
    pub fn keyword_names(&self) -> Vec<String> {
        self.keywords.iter().map(|k| k.text.clone()).collect()
    }

    pub fn aspects(&self) -> Vec<AspectTag> {
        let mut a: Vec<AspectTag> = self.candidates.iter().map(|c| c.aspect).collect();
        a.sort();
        a.dedup();
        a
    }

    pub fn candidate(&self, id: &str) -> Option<&Candidate> {
        self.candidates.iter().find(|c| c.candidate_id == id)
    }

    pub fn group(&self, gid: u64) -> Option<&Group> {
        self.groups.iter().find(|g| g.group_id == gid)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ds: ScoredDataset = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })?;
        if ds.format_version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "dataset format {} is not supported (expected {FORMAT_VERSION})",
                ds.format_version
            )));
        }
        Ok(ds)
    }

    /// Stable, pretty JSON; map keys are ordered so output is byte-stable.
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))
    }
}

/// Candidate embeddings keyed by candidate id.
pub fn load_candidate_embeddings(path: &Path) -> Result<BTreeMap<String, Vec<f32>>> {
    let m: NamedMatrix = read_tensor_file(path)?;
    Ok(m.iter().map(|(id, row)| (id.to_string(), row.to_vec())).collect())
}
