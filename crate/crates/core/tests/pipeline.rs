//! End-to-end runs over the generated synthetic video.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use framepick::config::EngineConfig;
use framepick::dataset::{ScoredDataset, DATASET_FILE, EMBEDDINGS_FILE, PROPOSALS_FILE};
use framepick::error::Error;
use framepick::ingest::DatasetBundle;
use framepick::pipeline::{Pipeline, PipelineRun, Stage, StageStatus, SCORES_FILE};
use framepick::synthetic::{generate, recommended_config, SyntheticSpec, SyntheticTruth};

const OUTPUTS: [&str; 4] = [DATASET_FILE, PROPOSALS_FILE, EMBEDDINGS_FILE, SCORES_FILE];

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
    truth: SyntheticTruth,
    first: PipelineRun,
    first_time: Duration,
    rerun: PipelineRun,
    rerun_time: Duration,
}

fn config(workers: usize) -> EngineConfig {
    let mut cfg = recommended_config();
    cfg.pipeline.workers = workers;
    cfg
}

fn run(root: &Path, cfg: EngineConfig) -> (PipelineRun, Duration) {
    let p = Pipeline::new(DatasetBundle::open(root).unwrap(), cfg).unwrap();
    let t = Instant::now();
    let r = p.run().unwrap_or_else(|e| panic!("{e}"));
    (r, t.elapsed())
}

/// One generated video, run twice single-threaded and shared by the tests.
fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().join("video");
        let truth = generate(&root, &SyntheticSpec::default()).unwrap();
        let (first, first_time) = run(&root, config(1));
        let (rerun, rerun_time) = run(&root, config(1));
        Fixture { _dir: dir, root, truth, first, first_time, rerun, rerun_time }
    })
}

fn copy_dir(from: &Path, to: &Path, with_cache: bool) {
    fs::create_dir_all(to).unwrap();
    for entry in fs::read_dir(from).unwrap() {
        let entry = entry.unwrap();
        let target = to.join(entry.file_name());
        if entry.file_type().unwrap().is_dir() {
            if !with_cache && entry.file_name() == "cache" {
                continue;
            }
            copy_dir(&entry.path(), &target, with_cache);
        } else {
            fs::copy(entry.path(), target).unwrap();
        }
    }
}

fn dataset(root: &Path) -> ScoredDataset {
    ScoredDataset::load(&DatasetBundle::open(root).unwrap().output_dir().join(DATASET_FILE)).unwrap()
}

fn outputs(root: &Path) -> BTreeMap<&'static str, Vec<u8>> {
    let out = DatasetBundle::open(root).unwrap().output_dir();
    OUTPUTS.iter().map(|n| (*n, fs::read(out.join(n)).unwrap())).collect()
}

#[test]
fn first_run_computes_everything_within_budget() {
    let f = fixture();
    assert_eq!(f.first.count(StageStatus::Done), Stage::ALL.len(), "{}", f.first);
    assert!(f.first_time < Duration::from_secs(60), "first run took {:?}", f.first_time);
}

#[test]
fn rerun_is_fully_cached_and_fast() {
    let f = fixture();
    assert_eq!(f.rerun.count(StageStatus::Cached), Stage::ALL.len(), "{}", f.rerun);
    assert_eq!(f.rerun.config_digest, f.first.config_digest);
    assert!(
        f.rerun_time.as_secs_f64() < 0.05 * f.first_time.as_secs_f64(),
        "rerun {:?} vs first {:?}",
        f.rerun_time,
        f.first_time
    );
}

#[test]
fn parallel_run_produces_identical_files() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let copy = dir.path().join("video");
    copy_dir(&f.root, &copy, false);
    let (r, _) = run(&copy, config(4));
    assert_eq!(r.count(StageStatus::Done), Stage::ALL.len());
    assert_eq!(r.config_digest, f.first.config_digest);
    let a = outputs(&f.root);
    let b = outputs(&copy);
    for name in OUTPUTS {
        assert!(a[name] == b[name], "{name} differs between 1 and 4 workers");
    }
}

#[test]
fn regenerating_the_video_is_deterministic() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let truth = generate(dir.path(), &SyntheticSpec::default()).unwrap();
    assert_eq!(truth, f.truth);
    for name in ["manifest.json", "frames/index.jsonl"] {
        assert_eq!(
            fs::read(dir.path().join(name)).unwrap(),
            fs::read(f.root.join(name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn planted_letterbox_and_shots_are_recovered() {
    let f = fixture();
    let ds = dataset(&f.root);
    let frame = &ds.frames[0];
    assert_eq!((frame.letterbox_top, frame.letterbox_bottom), (f.truth.letterbox_top, f.truth.letterbox_bottom));

    assert!(!f.truth.dark_frames.is_empty());
    for fr in &ds.frames {
        if f.truth.dark_frames.contains(&fr.frame_id) {
            assert!(!fr.is_keyframe, "dark frame {} chosen as keyframe", fr.frame_id);
            continue;
        }
        assert_eq!(fr.shot_id as usize, f.truth.shot_of(fr.frame_id), "frame {}", fr.frame_id);
    }
    let shots = ds.frames.iter().map(|f| f.shot_id).max().unwrap() + 1;
    assert_eq!(shots as usize, f.truth.shot_bounds.len() - 1);
}

#[test]
fn groups_follow_planted_scenes() {
    let f = fixture();
    let ds = dataset(&f.root);
    let mut found: Vec<Vec<usize>> = ds
        .groups
        .iter()
        .map(|g| {
            let mut shots: Vec<usize> = g.members.iter().map(|&m| f.truth.shot_of(m)).collect();
            shots.dedup();
            shots
        })
        .collect();
    found.sort();
    assert_eq!(found, f.truth.shot_groups());
    for g in &ds.groups {
        assert!(g.representative.is_some_and(|r| g.members.contains(&r)));
    }
}

#[test]
fn face_clusters_match_identities() {
    let f = fixture();
    let ds = dataset(&f.root);
    let mut by_cluster: BTreeMap<i64, BTreeMap<usize, usize>> = BTreeMap::new();
    let mut noise = 0;
    for face in &ds.faces {
        let id = f.truth.identity[&face.face_id];
        if face.cluster_id < 0 {
            noise += 1;
            continue;
        }
        *by_cluster.entry(face.cluster_id).or_default().entry(id).or_default() += 1;
    }
    let clustered: usize = by_cluster.values().flat_map(|m| m.values()).sum();
    let majority: usize = by_cluster.values().map(|m| *m.values().max().unwrap()).sum();
    let purity = majority as f64 / clustered as f64;
    assert!(purity >= 0.95, "purity {purity:.3}");
    assert!(noise * 10 <= ds.faces.len(), "{noise} of {} faces unclustered", ds.faces.len());
    let identities = f.truth.identity.values().collect::<std::collections::BTreeSet<_>>().len();
    assert_eq!(by_cluster.len(), identities);
}

#[test]
fn closed_eyes_are_flagged() {
    let f = fixture();
    let ds = dataset(&f.root);
    let mut flagged = 0;
    for face in &ds.faces {
        let closed = f.truth.closed_eyes.contains(&face.face_id);
        assert_eq!(face.eyes_closed, closed, "{}", face.face_id);
        flagged += usize::from(closed);
    }
    assert!(flagged > 0, "no closed-eye face reached a keyframe");
    for c in &ds.candidates {
        let closed = c.faces.iter().any(|cf| f.truth.closed_eyes.contains(&cf.face_id));
        assert_eq!(c.eyes_open(), !closed, "{}", c.candidate_id);
    }
}

#[test]
fn scoring_change_recomputes_only_downstream_stages() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let copy = dir.path().join("video");
    copy_dir(&f.root, &copy, true);
    let mut cfg = config(1);
    cfg.scoring.temperature = 2.0;
    let (r, _) = run(&copy, cfg);
    for stage in [Stage::Downsample, Stage::Group, Stage::Crop, Stage::Faces, Stage::FaceCluster] {
        assert_eq!(r.status(stage), Some(StageStatus::Cached), "{stage}\n{r}");
    }
    for stage in [Stage::Score, Stage::Propose] {
        assert_eq!(r.status(stage), Some(StageStatus::Done), "{stage}\n{r}");
    }
    assert_ne!(r.config_digest, f.first.config_digest);
}

#[test]
fn missing_saliency_fails_scoring_with_frame_ids() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let copy = dir.path().join("video");
    copy_dir(&f.root, &copy, true);
    let bundle = DatasetBundle::open(&copy).unwrap();
    let ds = dataset(&f.root);
    let victim = ds.frames.iter().find(|fr| fr.is_keyframe).unwrap().frame_id;
    fs::remove_file(bundle.saliency_path(victim)).unwrap();

    let p = Pipeline::new(bundle, config(1)).unwrap();
    let err = p.run().expect_err("scoring without saliency must fail");
    assert_eq!(err.stage, Stage::Score);
    assert_eq!(err.run.status(Stage::Crop), Some(StageStatus::Done));
    match &err.source {
        Error::ArtifactMissing { artifact, ids } => {
            assert_eq!(artifact, "saliency");
            assert_eq!(ids, &vec![victim.to_string()]);
        }
        other => panic!("unexpected error {other}"),
    }
}
