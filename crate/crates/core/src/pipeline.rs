//! Stage orchestration: downsample → group → crop → faces → face-cluster →
//! score → propose, each stage cached under a digest of its configuration
//! chained with the digests of the stages it reads.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::str::FromStr;
use std::time::Instant;

use image::RgbImage;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tracing::{info, warn};

use crate::config::{AspectTag, CropConfig, EngineConfig};
use crate::cropper::{
    detect_letterbox, filter_crops, generate_crop_candidates, letterbox_sample, rank_crops,
    strip_letterbox, FaceBox, LetterboxEstimate, RankedCrops, SaliencyCropScorer,
};
use crate::dataset::{
    self, Candidate, FaceClusterSummary, KeywordInfo, ScoredDataset, VideoInfo, DATASET_FILE,
    EMBEDDINGS_FILE, FORMAT_VERSION, PROPOSALS_FILE,
};
use crate::error::{Error, Result};
use crate::faceproc::{build_face_records, face_center, smooth_shot_scale, FrameGeometry};
use crate::grouping::{cluster_faces, group_keyframes, FaceClustering, FacePoint, GroupingResult, KeyframeEmbedding};
use crate::ingest::cache::{atomic_write, chain_digest, config_digest, hex, StageCache};
use crate::ingest::{ArtifactSet, DatasetBundle, FrameIndexEntry, NamedMatrix};
use crate::keyframe::{compute_features, downsample, DownsampleResult};
use crate::model::{FaceRecord, FrameRecord, Grid, Rect, ShotScale, VideoManifest, NOISE};
use crate::scoring::{self, peak_normalize, saliency_window, CandidateInput, Scorer};
use crate::selection::{pick_group_representatives, propose_all, score_aspect};

/// Flat per-candidate score table for distribution plots.
pub const SCORES_FILE: &str = "scores.csv";

const CHUNK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Downsample,
    Group,
    Crop,
    Faces,
    FaceCluster,
    Score,
    Propose,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Downsample,
        Stage::Group,
        Stage::Crop,
        Stage::Faces,
        Stage::FaceCluster,
        Stage::Score,
        Stage::Propose,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Downsample => "downsample",
            Stage::Group => "group",
            Stage::Crop => "crop",
            Stage::Faces => "faces",
            Stage::FaceCluster => "face-cluster",
            Stage::Score => "score",
            Stage::Propose => "propose",
        }
    }

    /// Stages whose outputs this stage reads.
    pub fn dependencies(self) -> &'static [Stage] {
        match self {
            Stage::Downsample => &[],
            Stage::Group => &[Stage::Downsample],
            Stage::Crop => &[Stage::Downsample],
            Stage::Faces => &[Stage::Downsample],
            Stage::FaceCluster => &[Stage::Faces],
            Stage::Score => &[Stage::Downsample, Stage::Group, Stage::Crop, Stage::Faces, Stage::FaceCluster],
            Stage::Propose => &[Stage::Downsample, Stage::Group, Stage::Faces, Stage::FaceCluster, Stage::Score],
        }
    }

    fn own_digest(self, cfg: &EngineConfig) -> u64 {
        match self {
            Stage::Downsample => config_digest(&(
                &cfg.downsample,
                cfg.ingest.working_short_edge,
                LetterboxParams::from(&cfg.crop),
            )),
            Stage::Group => config_digest(&cfg.grouping),
            Stage::Crop => config_digest(&(&cfg.crop, &cfg.faces)),
            Stage::Faces => config_digest(&cfg.faces),
            Stage::FaceCluster => config_digest(&cfg.face_cluster),
            Stage::Score => config_digest(&cfg.scoring),
            Stage::Propose => config_digest(&(&cfg.selection, FORMAT_VERSION)),
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown stage {s:?}")))
    }
}

impl Serialize for Stage {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

#[derive(Serialize)]
struct LetterboxParams {
    sample_size: usize,
    nonblack_fraction: f64,
    black_level: u8,
    seed: u64,
}

impl From<&CropConfig> for LetterboxParams {
    fn from(c: &CropConfig) -> Self {
        Self {
            sample_size: c.letterbox_sample_size,
            nonblack_fraction: c.letterbox_nonblack_fraction,
            black_level: c.black_level,
            seed: c.letterbox_seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum StageStatus {
    Pending,
    Cached,
    Done,
    Failed,
}

#[derive(Debug, Clone, Serialize)]
pub struct StageReport {
    pub stage: Stage,
    pub status: StageStatus,
    pub digest: String,
    pub elapsed_ms: u128,
}

#[derive(Debug, Clone, Serialize)]
pub struct PipelineRun {
    pub video_id: String,
    /// Digest of the final stage, which covers every input and setting.
    pub config_digest: String,
    pub stages: Vec<StageReport>,
}

impl PipelineRun {
    pub fn status(&self, stage: Stage) -> Option<StageStatus> {
        self.stages.iter().find(|r| r.stage == stage).map(|r| r.status)
    }

    pub fn count(&self, status: StageStatus) -> usize {
        self.stages.iter().filter(|r| r.status == status).count()
    }
}

impl fmt::Display for PipelineRun {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "video {} (digest {})", self.video_id, self.config_digest)?;
        for r in &self.stages {
            let status = match r.status {
                StageStatus::Pending => "pending",
                StageStatus::Cached => "cached",
                StageStatus::Done => "done",
                StageStatus::Failed => "FAILED",
            };
            writeln!(f, "  {:<13} {:<8} {:>8} ms", r.stage.as_str(), status, r.elapsed_ms)?;
        }
        Ok(())
    }
}

/// A stage error together with the state of the run when it happened.
#[derive(Debug, thiserror::Error)]
#[error("stage {stage} failed: {source}")]
pub struct StageFailure {
    pub stage: Stage,
    pub run: PipelineRun,
    #[source]
    pub source: Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DownsampleOutput {
    pub frame_width: u32,
    pub frame_height: u32,
    pub letterbox: LetterboxEstimate,
    pub result: DownsampleResult,
}

impl DownsampleOutput {
    pub fn content_height(&self) -> u32 {
        self.letterbox.content_height(self.frame_height)
    }

    fn geometry(&self) -> FrameGeometry {
        FrameGeometry {
            width: self.frame_width,
            height: self.content_height(),
            letterbox_top: self.letterbox.top_rows,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AspectCrops {
    pub aspect: AspectTag,
    pub ranked: RankedCrops,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameCrops {
    pub frame_id: u64,
    pub crops: Vec<AspectCrops>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FacesOutput {
    pub faces: Vec<FaceRecord>,
    /// Smoothed shot scale per keyframe.
    pub shot_scales: BTreeMap<u64, ShotScale>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreOutput {
    pub candidates: Vec<Candidate>,
    pub embeddings: Vec<(String, Vec<f32>)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ProposeOutput {
    /// sha256 of every published file.
    files: BTreeMap<String, String>,
}

struct Inputs {
    manifest: VideoManifest,
    index: Vec<FrameIndexEntry>,
    artifacts: ArtifactSet,
}

/// Runs stages against one bundle, using `<bundle>/cache` for results.
pub struct Pipeline {
    bundle: DatasetBundle,
    config: EngineConfig,
    cache: StageCache,
}

impl Pipeline {
    pub fn new(bundle: DatasetBundle, config: EngineConfig) -> Result<Self> {
        config.validate()?;
        let cache = StageCache::open(bundle.cache_dir().join("stages"))?;
        Ok(Self { bundle, config, cache })
    }

    pub fn bundle(&self) -> &DatasetBundle {
        &self.bundle
    }

    /// Run every stage.
    pub fn run(&self) -> std::result::Result<PipelineRun, Box<StageFailure>> {
        self.run_until(Stage::Propose)
    }

    /// Run stages up to and including `last`.
    pub fn run_until(&self, last: Stage) -> std::result::Result<PipelineRun, Box<StageFailure>> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.config.pipeline.workers)
            .build()
            .map_err(|e| self.early_failure(Error::Config(format!("worker pool: {e}"))))?;
        pool.install(|| self.run_inner(last))
    }

    fn early_failure(&self, source: Error) -> Box<StageFailure> {
        Box::new(StageFailure {
            stage: Stage::Downsample,
            run: PipelineRun {
                video_id: String::new(),
                config_digest: String::new(),
                stages: Vec::new(),
            },
            source,
        })
    }

    fn run_inner(&self, last: Stage) -> std::result::Result<PipelineRun, Box<StageFailure>> {
        let inputs = self.load_inputs().map_err(|e| self.early_failure(e))?;
        let fingerprint = self.fingerprint(&inputs).map_err(|e| self.early_failure(e))?;
        let digests = stage_digests(&self.config, fingerprint);
        let stages: Vec<Stage> = Stage::ALL.into_iter().filter(|s| *s <= last).collect();
        let mut run = PipelineRun {
            video_id: inputs.manifest.video_id.clone(),
            config_digest: format!("{:016x}", digests[&Stage::Propose]),
            stages: stages
                .iter()
                .map(|&stage| StageReport {
                    stage,
                    status: StageStatus::Pending,
                    digest: format!("{:016x}", digests[&stage]),
                    elapsed_ms: 0,
                })
                .collect(),
        };
        let mut ctx = Context {
            pipeline: self,
            inputs,
            digests,
            payloads: BTreeMap::new(),
        };
        for (i, &stage) in stages.iter().enumerate() {
            let started = Instant::now();
            let outcome = if ctx.cached(stage) {
                Ok(StageStatus::Cached)
            } else {
                ctx.compute(stage).map(|bytes| {
                    ctx.payloads.insert(stage, bytes);
                    StageStatus::Done
                })
            };
            run.stages[i].elapsed_ms = started.elapsed().as_millis();
            match outcome {
                Ok(status) => {
                    info!(stage = stage.as_str(), ?status, "stage finished");
                    run.stages[i].status = status;
                }
                Err(source) => {
                    run.stages[i].status = StageStatus::Failed;
                    return Err(Box::new(StageFailure { stage, run, source }));
                }
            }
        }
        Ok(run)
    }

    fn load_inputs(&self) -> Result<Inputs> {
        let manifest = self.bundle.load_manifest()?;
        let index = self.bundle.load_frame_index()?;
        if index.is_empty() {
            return Err(Error::Validation("frame index is empty".into()));
        }
        let artifacts = self.bundle.load_artifacts(&manifest)?;
        Ok(Inputs {
            manifest,
            index,
            artifacts,
        })
    }

    /// Digest of the bundle contents. Frame images contribute name and
    /// size only; every other input contributes its bytes.
    fn fingerprint(&self, inputs: &Inputs) -> Result<u64> {
        let mut h = Sha256::new();
        let feed = |path: &std::path::Path, h: &mut Sha256| -> Result<()> {
            h.update(path.strip_prefix(self.bundle.root()).unwrap_or(path).to_string_lossy().as_bytes());
            match fs::read(path) {
                Ok(bytes) => h.update(&bytes),
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => h.update(b"<absent>"),
                Err(e) => return Err(Error::io(path, e)),
            }
            Ok(())
        };
        feed(&self.bundle.manifest_path(), &mut h)?;
        feed(&self.bundle.frames_index_path(), &mut h)?;
        for name in [
            "frame_embeddings.fpk",
            "crop_embeddings.fpk",
            "keyword_embeddings.fpk",
            "prompt_embeddings.fpk",
            "face_embeddings.fpk",
            "faces.jsonl",
            "landmarks.jsonl",
            "emotions.jsonl",
            "shot_scale.jsonl",
            "logo_prior.pgm",
        ] {
            feed(&self.bundle.artifact(name), &mut h)?;
        }
        for e in &inputs.index {
            feed(&self.bundle.saliency_path(e.frame_id), &mut h)?;
            let path = self.bundle.frame_path(e);
            let len = fs::metadata(&path).map(|m| m.len()).unwrap_or(u64::MAX);
            h.update(e.file.as_bytes());
            h.update(len.to_le_bytes());
        }
        let out = h.finalize();
        Ok(u64::from_le_bytes(out[..8].try_into().expect("8 bytes")))
    }
}

fn stage_digests(cfg: &EngineConfig, fingerprint: u64) -> BTreeMap<Stage, u64> {
    let mut out: BTreeMap<Stage, u64> = BTreeMap::new();
    for stage in Stage::ALL {
        let mut upstream: Vec<u64> = stage.dependencies().iter().map(|d| out[d]).collect();
        if stage == Stage::Downsample {
            upstream.push(fingerprint);
        }
        out.insert(stage, chain_digest(stage.own_digest(cfg), &upstream));
    }
    out
}

struct Context<'a> {
    pipeline: &'a Pipeline,
    inputs: Inputs,
    digests: BTreeMap<Stage, u64>,
    payloads: BTreeMap<Stage, Vec<u8>>,
}

impl Context<'_> {
    fn cfg(&self) -> &EngineConfig {
        &self.pipeline.config
    }

    fn bundle(&self) -> &DatasetBundle {
        &self.pipeline.bundle
    }

    /// Load the stage's payload from the cache; false on a miss.
    fn cached(&mut self, stage: Stage) -> bool {
        match self.cached_payload(stage) {
            Some(bytes) => {
                self.payloads.insert(stage, bytes);
                true
            }
            None => false,
        }
    }

    fn cached_payload(&self, stage: Stage) -> Option<Vec<u8>> {
        let bytes = self.pipeline.cache.get(stage.as_str(), self.digests[&stage])?;
        if stage == Stage::Propose {
            let out: ProposeOutput = serde_json::from_slice(&bytes).ok()?;
            let dir = self.bundle().output_dir();
            for (name, sha) in &out.files {
                let on_disk = fs::read(dir.join(name)).ok()?;
                if &hex(&Sha256::digest(&on_disk)) != sha {
                    warn!(file = %name, "published output changed; republishing");
                    return None;
                }
            }
        }
        Some(bytes)
    }

    fn load<T: DeserializeOwned>(&self, stage: Stage) -> Result<T> {
        let bytes = self
            .payloads
            .get(&stage)
            .ok_or_else(|| Error::Validation(format!("stage {stage} has not run")))?;
        serde_json::from_slice(bytes).map_err(|e| Error::Format(format!("stage {stage} payload: {e}")))
    }

    fn compute(&mut self, stage: Stage) -> Result<Vec<u8>> {
        let bytes = match stage {
            Stage::Downsample => to_bytes(&self.downsample()?),
            Stage::Group => to_bytes(&self.group()?),
            Stage::Crop => to_bytes(&self.crop()?),
            Stage::Faces => to_bytes(&self.faces()?),
            Stage::FaceCluster => to_bytes(&self.face_cluster()?),
            Stage::Score => to_bytes(&self.score()?),
            Stage::Propose => to_bytes(&self.propose()?),
        };
        self.pipeline.cache.put(stage.as_str(), self.digests[&stage], &bytes)?;
        Ok(bytes)
    }

    fn load_frame(&self, entry: &FrameIndexEntry) -> Result<RgbImage> {
        let path = self.bundle().frame_path(entry);
        if !path.is_file() {
            return Err(Error::ArtifactMissing {
                artifact: "frame image".into(),
                ids: vec![entry.frame_id.to_string()],
            });
        }
        Ok(image::open(&path)?.to_rgb8())
    }

    fn downsample(&self) -> Result<DownsampleOutput> {
        let cfg = self.cfg();
        let index = &self.inputs.index;
        let sample = letterbox_sample(index.len(), cfg.crop.letterbox_sample_size, cfg.crop.letterbox_seed);
        let sampled: Vec<(u64, RgbImage)> = sample
            .par_iter()
            .map(|&i| Ok((index[i].frame_id, self.load_frame(&index[i])?)))
            .collect::<Result<_>>()?;
        let (frame_width, frame_height) = sampled
            .first()
            .map(|(_, img)| img.dimensions())
            .ok_or_else(|| Error::Validation("no frames to sample".into()))?;
        let refs: Vec<(u64, &RgbImage)> = sampled.iter().map(|(id, img)| (*id, img)).collect();
        let letterbox = detect_letterbox(&refs, &cfg.crop)?;
        drop(sampled);

        let short_edge = cfg.ingest.working_short_edge;
        let prepare = |entry: &FrameIndexEntry| -> Result<RgbImage> {
            let img = self.load_frame(entry)?;
            if img.dimensions() != (frame_width, frame_height) {
                return Err(Error::Validation(format!(
                    "frame {} is {}x{}, expected {frame_width}x{frame_height}",
                    entry.frame_id,
                    img.width(),
                    img.height()
                )));
            }
            Ok(working_resolution(strip_letterbox(&img, &letterbox), short_edge))
        };
        let mut features = Vec::with_capacity(index.len());
        let mut previous: Option<RgbImage> = None;
        for chunk in index.chunks(CHUNK) {
            let mut images: Vec<RgbImage> = chunk.par_iter().map(prepare).collect::<Result<_>>()?;
            let feats: Vec<_> = (0..images.len())
                .into_par_iter()
                .map(|i| {
                    let prev = if i == 0 { previous.as_ref() } else { Some(&images[i - 1]) };
                    compute_features(chunk[i].frame_id, &images[i], prev, &cfg.downsample)
                })
                .collect::<Result<_>>()?;
            features.extend(feats);
            previous = images.pop();
        }
        let result = downsample(&features, &cfg.downsample)?;
        info!(
            frames = index.len(),
            kept = result.kept.len(),
            shots = result.shots.len(),
            keyframes = result.keyframes.len(),
            "downsampled"
        );
        Ok(DownsampleOutput {
            frame_width,
            frame_height,
            letterbox,
            result,
        })
    }

    fn group(&self) -> Result<GroupingResult> {
        let ds: DownsampleOutput = self.load(Stage::Downsample)?;
        let shot_of = shot_index(&ds.result);
        let keyframes: Vec<KeyframeEmbedding> = ds
            .result
            .keyframes
            .iter()
            .map(|&f| KeyframeEmbedding {
                frame_id: f,
                shot_id: shot_of[&f],
                embedding: self.inputs.artifacts.frame_embedding(f).map(<[f32]>::to_vec).unwrap_or_default(),
            })
            .collect();
        group_keyframes(&keyframes, &self.cfg().grouping)
    }

    fn keyframe_faces(&self, ds: &DownsampleOutput) -> Vec<FaceRecord> {
        let geo = ds.geometry();
        let frames: BTreeMap<u64, FrameGeometry> = ds.result.keyframes.iter().map(|&f| (f, geo)).collect();
        build_face_records(&self.inputs.artifacts, &frames, &self.cfg().faces)
    }

    fn crop(&self) -> Result<Vec<FrameCrops>> {
        let ds: DownsampleOutput = self.load(Stage::Downsample)?;
        let cfg = &self.cfg().crop;
        let (w, h) = (ds.frame_width, ds.content_height());
        let content = Rect::new(0, i64::from(ds.letterbox.top_rows), i64::from(w), i64::from(h));
        let faces = self.keyframe_faces(&ds);
        let mut by_frame: BTreeMap<u64, Vec<FaceBox>> = BTreeMap::new();
        for f in &faces {
            by_frame.entry(f.frame_id).or_default().push(FaceBox {
                bbox: f.bbox,
                center: face_center(f).point,
            });
        }
        ds.result
            .keyframes
            .par_iter()
            .map(|&frame_id| {
                let saliency = match self.bundle().load_saliency(frame_id) {
                    Ok(map) => peak_normalize(&saliency_window(&map.grid, &content, w, ds.frame_height)),
                    Err(Error::ArtifactMissing { .. }) => {
                        warn!(frame_id, "no saliency map; crops ranked on a flat map");
                        Grid::filled(1, 1, 1.0)
                    }
                    Err(e) => return Err(e),
                };
                let scorer = SaliencyCropScorer::new(&saliency, w, h, cfg);
                let boxes = by_frame.get(&frame_id).map(Vec::as_slice).unwrap_or(&[]);
                let mut crops = Vec::new();
                for &aspect in &cfg.aspects {
                    let mut candidates = generate_crop_candidates(w, h, aspect, cfg)?;
                    filter_crops(&mut candidates, boxes, cfg);
                    match rank_crops(&candidates, &scorer, cfg.alternates) {
                        Some(ranked) => crops.push(AspectCrops { aspect, ranked }),
                        None => warn!(frame_id, %aspect, "no crop candidate could be scored"),
                    }
                }
                Ok(FrameCrops { frame_id, crops })
            })
            .collect()
    }

    fn faces(&self) -> Result<FacesOutput> {
        let ds: DownsampleOutput = self.load(Stage::Downsample)?;
        let faces = self.keyframe_faces(&ds);
        let labels: BTreeMap<u64, ShotScale> = self
            .inputs
            .artifacts
            .shot_scales
            .iter()
            .map(|r| (r.frame_id, r.label))
            .collect();
        let shots: Vec<Vec<u64>> = ds
            .result
            .shots
            .iter()
            .map(|s| s.frames.iter().copied().filter(|f| labels.contains_key(f)).collect())
            .collect();
        let smoothed = smooth_shot_scale(&labels, &shots)?;
        let keyframes: BTreeSet<u64> = ds.result.keyframes.iter().copied().collect();
        let shot_scales: BTreeMap<u64, ShotScale> = smoothed
            .iter()
            .filter(|l| keyframes.contains(&l.frame_id))
            .map(|l| (l.frame_id, l.label))
            .collect();
        let unlabeled = keyframes.iter().filter(|f| !shot_scales.contains_key(f)).count();
        if unlabeled > 0 {
            warn!(unlabeled, "keyframes without a shot-scale label");
        }
        Ok(FacesOutput { faces, shot_scales })
    }

    fn face_cluster(&self) -> Result<FaceClustering> {
        let faces: FacesOutput = self.load(Stage::Faces)?;
        let cfg = &self.cfg().face_cluster;
        let mut points = Vec::new();
        for f in faces.faces.iter().filter(|f| f.area_fraction >= cfg.min_area) {
            let appearances = self.inputs.artifacts.face_appearances(&f.face_id);
            if appearances.is_empty() {
                warn!(face = %f.face_id, "face has no embedding; left unclustered");
            }
            points.extend(appearances.into_iter().map(|(_, e)| FacePoint {
                face_id: f.face_id.clone(),
                embedding: e.to_vec(),
            }));
        }
        cluster_faces(&points, cfg)
    }

    fn scorer(&self) -> Result<Scorer> {
        let art = &self.inputs.artifacts;
        let prompt = |name: &str| {
            art.prompt_embeddings.get(name).cloned().ok_or_else(|| Error::ArtifactMissing {
                artifact: "prompt_embeddings.fpk".into(),
                ids: vec![name.to_string()],
            })
        };
        let mut keywords = Vec::new();
        for kw in &self.inputs.manifest.keywords {
            match &kw.embedding {
                Some(e) => keywords.push((kw.text.clone(), e.values.clone())),
                None => warn!(keyword = %kw.text, "keyword has no embedding; skipped"),
            }
        }
        let logo_prior = art.logo_prior.clone().ok_or_else(|| Error::ArtifactMissing {
            artifact: "logo_prior.pgm".into(),
            ids: vec![self.inputs.manifest.video_id.clone()],
        })?;
        Ok(Scorer {
            good_prompt: prompt("good")?,
            bad_prompt: prompt("bad")?,
            keywords,
            logo_prior,
            config: self.cfg().scoring.clone(),
        })
    }

    fn score(&self) -> Result<ScoreOutput> {
        let ds: DownsampleOutput = self.load(Stage::Downsample)?;
        let grouping: GroupingResult = self.load(Stage::Group)?;
        let crops: Vec<FrameCrops> = self.load(Stage::Crop)?;
        let faces: FacesOutput = self.load(Stage::Faces)?;
        let clustering: FaceClustering = self.load(Stage::FaceCluster)?;
        let scorer = self.scorer()?;

        let missing: Vec<String> = ds
            .result
            .keyframes
            .iter()
            .filter(|f| !self.bundle().saliency_path(**f).is_file())
            .map(u64::to_string)
            .collect();
        if !missing.is_empty() {
            return Err(Error::ArtifactMissing {
                artifact: "saliency".into(),
                ids: missing,
            });
        }
        let missing: Vec<String> = ds
            .result
            .keyframes
            .iter()
            .filter(|f| self.inputs.artifacts.frame_embedding(**f).is_none())
            .map(u64::to_string)
            .collect();
        if !missing.is_empty() {
            return Err(Error::ArtifactMissing {
                artifact: "frame embedding".into(),
                ids: missing,
            });
        }

        let shot_of = shot_index(&ds.result);
        let group_of = grouping.group_of();
        let top = i64::from(ds.letterbox.top_rows);
        let mut faces_by_frame: BTreeMap<u64, Vec<&FaceRecord>> = BTreeMap::new();
        for f in &faces.faces {
            faces_by_frame.entry(f.frame_id).or_default().push(f);
        }
        let art = &self.inputs.artifacts;

        let per_frame: Vec<Vec<(Candidate, Vec<f32>)>> = crops
            .par_iter()
            .map(|fc| {
                let frame_id = fc.frame_id;
                let saliency = peak_normalize(&self.bundle().load_saliency(frame_id)?.grid);
                let frame_faces = faces_by_frame.get(&frame_id).map(Vec::as_slice).unwrap_or(&[]);
                let frame_embedding = art.frame_embedding(frame_id).expect("checked above");
                let mut out = Vec::new();
                for ac in &fc.crops {
                    let rect = ac.ranked.best.rect;
                    let inside: Vec<&&FaceRecord> = frame_faces
                        .iter()
                        .filter(|f| rect.contains_point(face_center(f).point))
                        .collect();
                    let cand_faces: Vec<scoring::CandidateFace> = inside
                        .iter()
                        .filter_map(|f| {
                            let clipped = f.bbox.intersection(&rect)?;
                            let c = face_center(f).point;
                            Some(scoring::CandidateFace {
                                bbox: clipped.translate(-rect.x, -rect.y),
                                center: crate::model::Point::new(c.x - rect.x as f64, c.y - rect.y as f64),
                            })
                        })
                        .collect();
                    let embedding = match ac.aspect {
                        AspectTag::Original => frame_embedding,
                        aspect => art
                            .crop_embeddings
                            .get(&format!("{frame_id}:{aspect}"))
                            .map(Vec::as_slice)
                            .unwrap_or(frame_embedding),
                    };
                    let original = rect.translate(0, top);
                    let window = saliency_window(&saliency, &original, ds.frame_width, ds.frame_height);
                    let raw = scorer.raw_scores(&CandidateInput {
                        embedding,
                        saliency: &window,
                        width: rect.w as u32,
                        height: rect.h as u32,
                        faces: cand_faces,
                    })?;
                    let candidate = Candidate {
                        candidate_id: Candidate::id_for(frame_id, ac.aspect),
                        frame_id,
                        shot_id: shot_of[&frame_id],
                        group_id: group_of[&frame_id],
                        aspect: ac.aspect,
                        rect: original,
                        alternates: ac.ranked.alternates.iter().map(|c| c.rect.translate(0, top)).collect(),
                        face_centered_rect: ac.ranked.face_centered.as_ref().map(|c| c.rect.translate(0, top)),
                        crop_fallback: ac.ranked.fallback_reason,
                        faces: inside
                            .iter()
                            .map(|f| dataset::CandidateFace {
                                face_id: f.face_id.clone(),
                                cluster_id: clustering.face_labels.get(&f.face_id).copied().unwrap_or(NOISE),
                                emotion: f.emotion,
                                eyes_closed: f.eyes_closed,
                            })
                            .collect(),
                        shot_scale: faces.shot_scales.get(&frame_id).copied(),
                        raw,
                    };
                    out.push((candidate, embedding.to_vec()));
                }
                Ok(out)
            })
            .collect::<Result<_>>()?;
        let (candidates, embeddings) = per_frame
            .into_iter()
            .flatten()
            .map(|(c, e)| {
                let id = c.candidate_id.clone();
                (c, (id, e))
            })
            .unzip();
        Ok(ScoreOutput { candidates, embeddings })
    }

    fn propose(&self) -> Result<ProposeOutput> {
        let ds_out: DownsampleOutput = self.load(Stage::Downsample)?;
        let grouping: GroupingResult = self.load(Stage::Group)?;
        let faces: FacesOutput = self.load(Stage::Faces)?;
        let clustering: FaceClustering = self.load(Stage::FaceCluster)?;
        let scored: ScoreOutput = self.load(Stage::Score)?;
        let cfg = self.cfg();
        let m = &self.inputs.manifest;

        let mut dataset = ScoredDataset {
            format_version: FORMAT_VERSION,
            config_digest: format!("{:016x}", self.digests[&Stage::Propose]),
            video: VideoInfo {
                video_id: m.video_id.clone(),
                title: m.title.clone(),
                summary: m.summary.clone(),
                fps: m.fps,
                frame_count: m.frame_count,
                duration_s: m.duration_s,
                frame_width: ds_out.frame_width,
                frame_height: ds_out.frame_height,
            },
            keywords: m
                .keywords
                .iter()
                .filter(|k| k.embedding.is_some())
                .map(|k| KeywordInfo {
                    text: k.text.clone(),
                    source: k.source,
                })
                .collect(),
            frames: frame_records(&self.inputs.index, &ds_out, &grouping),
            groups: grouping.groups.clone(),
            faces: faces
                .faces
                .iter()
                .map(|f| FaceRecord {
                    cluster_id: clustering.face_labels.get(&f.face_id).copied().unwrap_or(NOISE),
                    ..f.clone()
                })
                .collect(),
            face_clusters: FaceClusterSummary {
                clusters: clustering.clusters.clone(),
                base_k: clustering.base_k,
                chosen_k: clustering.chosen_k,
                score: clustering.score,
                score_curve: clustering.score_curve.clone(),
                manual_parameters_needed: clustering.manual_parameters_needed,
            },
            candidates: scored.candidates,
            default_weights: cfg.scoring.weights.clone(),
        };
        fill_representatives(&mut dataset)?;
        let proposals = propose_all(&dataset, &dataset.default_weights, &cfg.selection)?;

        let files: Vec<(&str, Vec<u8>)> = vec![
            (DATASET_FILE, dataset.to_json()?.into_bytes()),
            (
                PROPOSALS_FILE,
                serde_json::to_vec_pretty(&proposals).map_err(|e| Error::Format(e.to_string()))?,
            ),
            (
                EMBEDDINGS_FILE,
                NamedMatrix::from_rows(scored.embeddings, self.inputs.manifest.embedding_dim)?.to_bytes(),
            ),
            (SCORES_FILE, score_table(&dataset)?),
        ];
        let dir = self.bundle().output_dir();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let mut out = ProposeOutput { files: BTreeMap::new() };
        for (name, bytes) in files {
            atomic_write(&dir.join(name), &bytes)?;
            out.files.insert(name.to_string(), hex(&Sha256::digest(&bytes)));
        }
        Ok(out)
    }
}

fn to_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    serde_json::to_vec(value).expect("stage payload serializes")
}

fn shot_index(r: &DownsampleResult) -> BTreeMap<u64, u64> {
    r.shots
        .iter()
        .flat_map(|s| s.frames.iter().map(move |&f| (f, s.shot_id)))
        .collect()
}

/// Shrink so the shorter side equals `short_edge`; smaller frames are kept
/// as they are.
pub fn working_resolution(img: RgbImage, short_edge: u32) -> RgbImage {
    let (w, h) = img.dimensions();
    let short = w.min(h);
    if short_edge == 0 || short <= short_edge {
        return img;
    }
    let scale = f64::from(short_edge) / f64::from(short);
    let nw = ((f64::from(w) * scale).round() as u32).max(1);
    let nh = ((f64::from(h) * scale).round() as u32).max(1);
    image::imageops::resize(&img, nw, nh, image::imageops::FilterType::Triangle)
}

/// Frame records for every indexed frame. Frames dropped by filtering
/// inherit the shot and subshot of the closest earlier surviving frame.
fn frame_records(index: &[FrameIndexEntry], ds: &DownsampleOutput, grouping: &GroupingResult) -> Vec<FrameRecord> {
    let shot_of = shot_index(&ds.result);
    let metrics: BTreeMap<u64, _> = ds.result.metrics.iter().copied().collect();
    let mut subshot_of = BTreeMap::new();
    let mut keyframe_of_subshot = BTreeMap::new();
    for s in &ds.result.subshots {
        keyframe_of_subshot.insert(s.subshot_id, s.keyframe);
        for &f in &s.members {
            subshot_of.insert(f, s.subshot_id);
        }
    }
    let group_of = grouping.group_of();
    let keyframes: BTreeSet<u64> = ds.result.keyframes.iter().copied().collect();
    let first_shot = ds.result.shots.first().map_or(0, |s| s.shot_id);
    let first_subshot = ds.result.subshots.first().map_or(0, |s| s.subshot_id);
    let (mut shot, mut subshot) = (first_shot, first_subshot);
    index
        .iter()
        .map(|e| {
            if let Some(&s) = shot_of.get(&e.frame_id) {
                shot = s;
            }
            if let Some(&s) = subshot_of.get(&e.frame_id) {
                subshot = s;
            }
            let group_id = keyframe_of_subshot
                .get(&subshot)
                .and_then(|k| group_of.get(k))
                .copied()
                .unwrap_or(0);
            FrameRecord {
                frame_id: e.frame_id,
                timestamp_s: e.timestamp_s,
                width: ds.frame_width,
                height: ds.frame_height,
                letterbox_top: ds.letterbox.top_rows,
                letterbox_bottom: ds.letterbox.bottom_rows,
                shot_id: shot,
                subshot_id: subshot,
                group_id,
                is_keyframe: keyframes.contains(&e.frame_id),
                metrics: metrics.get(&e.frame_id).copied().unwrap_or_default(),
            }
        })
        .collect()
}

/// Mark each group's best candidate of the unchanged frame aspect (or the
/// first aspect available) as its representative.
fn fill_representatives(ds: &mut ScoredDataset) -> Result<()> {
    let aspects = ds.aspects();
    let Some(&aspect) = aspects.iter().find(|a| **a == AspectTag::Original).or(aspects.first()) else {
        return Ok(());
    };
    let reps: BTreeMap<u64, u64> = {
        let ranked = score_aspect(ds, aspect, &ds.default_weights)?;
        pick_group_representatives(&ranked)
            .iter()
            .map(|r| (r.best.candidate.group_id, r.best.candidate.frame_id))
            .collect()
    };
    for g in &mut ds.groups {
        g.representative = reps.get(&g.group_id).copied();
    }
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

/// Raw and normalized score columns per candidate, per aspect.
fn score_table(ds: &ScoredDataset) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Format(e.to_string());
    w.write_record([
        "candidate_id",
        "aspect",
        "frame_id",
        "group_id",
        "faces",
        "raw_aesthetic",
        "raw_logo",
        "aesthetic",
        "semantic",
        "logo",
        "face_position",
        "on_face_focus",
        "final",
    ])
    .map_err(csv_err)?;
    for aspect in ds.aspects() {
        let mut ranked = score_aspect(ds, aspect, &ds.default_weights)?;
        ranked.sort_by_key(|r| r.candidate.frame_id);
        for r in ranked {
            let c = r.candidate;
            let s = &r.scores;
            w.write_record([
                c.candidate_id.clone(),
                aspect.to_string(),
                c.frame_id.to_string(),
                c.group_id.to_string(),
                c.faces.len().to_string(),
                format!("{}", c.raw.aesthetic),
                format!("{}", c.raw.logo),
                format!("{}", s.aesthetic),
                format!("{}", s.semantic),
                format!("{}", s.logo),
                fmt_opt(s.face_position),
                fmt_opt(s.on_face_focus),
                format!("{}", s.final_score),
            ])
            .map_err(csv_err)?;
        }
    }
    w.into_inner().map_err(|e| Error::Format(e.to_string()))
}

/// Convenience wrapper: run every stage of the bundle at `root`.
pub fn run_pipeline(bundle: &DatasetBundle, config: &EngineConfig) -> std::result::Result<PipelineRun, Box<StageFailure>> {
    let p = Pipeline::new(bundle.clone(), config.clone()).map_err(|source| {
        Box::new(StageFailure {
            stage: Stage::Downsample,
            run: PipelineRun {
                video_id: String::new(),
                config_digest: String::new(),
                stages: Vec::new(),
            },
            source,
        })
    })?;
    p.run()
}
