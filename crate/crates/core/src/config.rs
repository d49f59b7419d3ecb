//! Engine configuration. Every tunable lives here with its default; the
//! whole struct round-trips through TOML.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub ingest: IngestConfig,
    pub downsample: DownsampleConfig,
    pub grouping: GroupingConfig,
    pub faces: FaceConfig,
    pub face_cluster: FaceClusterConfig,
    pub crop: CropConfig,
    pub scoring: ScoringConfig,
    pub selection: SelectionConfig,
    pub pipeline: PipelineConfig,
}

impl EngineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: EngineConfig = toml::from_str(&text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start].matches('\n').count() + 1)
                .unwrap_or(0);
            Error::Parse {
                path: path.to_path_buf(),
                line,
                message: e.message().to_string(),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.downsample.validate()?;
        self.grouping.validate()?;
        self.face_cluster.validate()?;
        self.crop.validate()?;
        self.scoring.validate()?;
        if self.selection.per_section == 0 {
            return Err(Error::Config("selection.per_section must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestConfig {
    /// Whole-frame metrics run on frames downscaled so the short edge is at most this.
    pub working_short_edge: u32,
    pub keyword_max: usize,
    pub keyword_retries: u32,
    pub keyword_max_tokens: u32,
    pub keyword_timeout_ms: u64,
    /// Directory holding `role_prompt.txt` / `user_prompt.txt`; built-in templates when unset.
    pub prompt_template_dir: Option<String>,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            working_short_edge: 336,
            keyword_max: 10,
            keyword_retries: 3,
            keyword_max_tokens: 200,
            keyword_timeout_ms: 10_000,
            prompt_template_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DownsampleConfig {
    pub min_luminance: f64,
    pub min_sharpness: f64,
    pub max_uniformity: f64,
    /// Fraction of most-populated histogram bins summed for uniformity.
    pub uniformity_top_fraction: f64,
    /// Boundary when the histogram distance exceeds mean + k·std of the window.
    pub shot_threshold_k: f64,
    pub shot_window: usize,
    /// Absolute floor on histogram-intersection distance for a boundary.
    pub shot_min_distance: f64,
    pub min_shot_len: usize,
    pub transition_radius: usize,
    pub target_subshot_len: usize,
    pub kmeans_seed: u64,
    pub kmeans_max_iter: usize,
}

impl Default for DownsampleConfig {
    fn default() -> Self {
        Self {
            min_luminance: 15.0,
            min_sharpness: 2.0,
            max_uniformity: 0.98,
            uniformity_top_fraction: 0.05,
            shot_threshold_k: 3.0,
            shot_window: 30,
            shot_min_distance: 0.25,
            min_shot_len: 2,
            transition_radius: 1,
            target_subshot_len: 24,
            kmeans_seed: 0x5eed,
            kmeans_max_iter: 50,
        }
    }
}

impl DownsampleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=255.0).contains(&self.min_luminance) {
            return Err(Error::Config("downsample.min_luminance must lie in [0,255]".into()));
        }
        if !(self.min_sharpness >= 0.0 && self.min_sharpness.is_finite()) {
            return Err(Error::Config("downsample.min_sharpness must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.max_uniformity) {
            return Err(Error::Config("downsample.max_uniformity must lie in [0,1]".into()));
        }
        if !(self.uniformity_top_fraction > 0.0 && self.uniformity_top_fraction <= 1.0) {
            return Err(Error::Config(
                "downsample.uniformity_top_fraction must lie in (0,1]".into(),
            ));
        }
        if self.target_subshot_len == 0 || self.min_shot_len == 0 || self.shot_window == 0 {
            return Err(Error::Config(
                "downsample lengths and windows must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GroupingConfig {
    pub variance_target: f64,
    pub eps: f64,
    pub min_pts: usize,
    /// Maximum shot-id distance for two same-cluster keyframes to be joined.
    pub max_shot_gap: u64,
    pub l2_normalize: bool,
}

impl Default for GroupingConfig {
    fn default() -> Self {
        Self {
            variance_target: 0.43,
            eps: 0.5,
            min_pts: 1,
            max_shot_gap: 1,
            l2_normalize: true,
        }
    }
}

impl GroupingConfig {
    fn validate(&self) -> Result<()> {
        validate_variance(self.variance_target, "grouping.variance_target")?;
        validate_eps(self.eps, "grouping.eps")?;
        if self.min_pts == 0 {
            return Err(Error::Config("grouping.min_pts must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FaceConfig {
    pub expand_factor: f64,
    pub ear_threshold: f64,
}

impl Default for FaceConfig {
    fn default() -> Self {
        Self {
            expand_factor: 1.2,
            ear_threshold: 0.2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreSpace {
    Original,
    Projected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FaceClusterConfig {
    pub variance_target: f64,
    pub eps: f64,
    pub min_pts: usize,
    pub min_area: f64,
    pub grid_halfwidth: usize,
    pub score_space: ScoreSpace,
    /// Replace the variance-derived base component count.
    pub base_k_override: Option<usize>,
}

impl Default for FaceClusterConfig {
    fn default() -> Self {
        Self {
            variance_target: 0.74,
            eps: 0.5,
            min_pts: 50,
            min_area: 0.05,
            grid_halfwidth: 10,
            score_space: ScoreSpace::Original,
            base_k_override: None,
        }
    }
}

impl FaceClusterConfig {
    fn validate(&self) -> Result<()> {
        validate_variance(self.variance_target, "face_cluster.variance_target")?;
        validate_eps(self.eps, "face_cluster.eps")?;
        if self.min_pts == 0 {
            return Err(Error::Config("face_cluster.min_pts must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.min_area) {
            return Err(Error::Config("face_cluster.min_area must lie in [0,1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CropConfig {
    pub aspects: Vec<AspectTag>,
    pub grid: usize,
    pub min_area_ratio: f64,
    pub letterbox_sample_size: usize,
    pub letterbox_nonblack_fraction: f64,
    pub black_level: u8,
    pub letterbox_seed: u64,
    /// Width fraction of the central band a lone face must sit in (vertical crops).
    pub center_band: f64,
    pub face_centered_band: f64,
    pub small_face_ratio: f64,
    pub border_fraction: f64,
    pub border_penalty: f64,
    /// Alternates kept per (frame, aspect) besides the best crop.
    pub alternates: usize,
}

impl Default for CropConfig {
    fn default() -> Self {
        Self {
            aspects: vec![
                AspectTag::Original,
                AspectTag::Ratio(16, 9),
                AspectTag::Ratio(2, 3),
            ],
            grid: 12,
            min_area_ratio: 0.5,
            letterbox_sample_size: 200,
            letterbox_nonblack_fraction: 0.30,
            black_level: 16,
            letterbox_seed: 0x1e77e4,
            center_band: 0.40,
            face_centered_band: 0.20,
            small_face_ratio: 1.5,
            border_fraction: 0.05,
            border_penalty: 0.1,
            alternates: 2,
        }
    }
}

impl CropConfig {
    fn validate(&self) -> Result<()> {
        if self.aspects.is_empty() {
            return Err(Error::Config("crop.aspects must not be empty".into()));
        }
        if self.grid < 1 {
            return Err(Error::Config("crop.grid must be >= 1".into()));
        }
        for (name, v) in [
            ("crop.min_area_ratio", self.min_area_ratio),
            ("crop.letterbox_nonblack_fraction", self.letterbox_nonblack_fraction),
            ("crop.center_band", self.center_band),
            ("crop.face_centered_band", self.face_centered_band),
            ("crop.border_fraction", self.border_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must lie in [0,1]")));
            }
        }
        if self.small_face_ratio < 1.0 {
            return Err(Error::Config("crop.small_face_ratio must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum FaceAggregation {
    #[default]
    Max,
    Mean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightConfig {
    pub aesthetic: f64,
    pub semantic: f64,
    pub logo: f64,
    pub face_position: f64,
    pub on_face_focus: f64,
    pub face_aggregation: FaceAggregation,
    /// Keyword texts averaged into the semantic column. Empty means all keywords.
    pub keywords: Vec<String>,
}

impl Default for WeightConfig {
    fn default() -> Self {
        Self {
            aesthetic: 1.0,
            semantic: 1.0,
            logo: 1.0,
            face_position: 1.0,
            on_face_focus: 1.0,
            face_aggregation: FaceAggregation::Max,
            keywords: Vec::new(),
        }
    }
}

impl WeightConfig {
    pub fn validate(&self) -> Result<()> {
        let ws = [
            self.aesthetic,
            self.semantic,
            self.logo,
            self.face_position,
            self.on_face_focus,
        ];
        if ws.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::Config("weights must be finite and >= 0".into()));
        }
        if ws.iter().all(|w| *w == 0.0) {
            return Err(Error::Config("at least one weight must be > 0".into()));
        }
        Ok(())
    }
}

/// Face position weights: `rows[r]` applies to centres with y in
/// `(r·Y/6, (r+1)·Y/6]` inside the central column band; `side` applies
/// outside it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FacePositionTable {
    pub band_left: f64,
    pub band_right: f64,
    pub rows: [f64; 6],
    pub side: [f64; 6],
}

impl Default for FacePositionTable {
    fn default() -> Self {
        Self {
            band_left: 0.2,
            band_right: 0.8,
            rows: [0.5, 0.75, 1.0, 0.75, 0.5, 0.25],
            side: [0.1; 6],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoringConfig {
    pub temperature: f64,
    pub weights: WeightConfig,
    pub face_position: FacePositionTable,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        Self {
            temperature: 1.0,
            weights: WeightConfig::default(),
            face_position: FacePositionTable::default(),
        }
    }
}

impl ScoringConfig {
    fn validate(&self) -> Result<()> {
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(Error::Config("scoring.temperature must be > 0".into()));
        }
        self.weights.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionConfig {
    pub per_section: usize,
    /// Largest face clusters covering this fraction of clustered faces are main characters.
    pub main_cluster_coverage: f64,
    pub exact_match_threshold: f64,
    pub similar_match_threshold: f64,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            per_section: 4,
            main_cluster_coverage: 0.6,
            exact_match_threshold: 0.886,
            similar_match_threshold: 0.799,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Worker threads for parallel stages; 0 uses all cores.
    pub workers: usize,
}

fn validate_variance(v: f64, name: &str) -> Result<()> {
    if !(v > 0.0 && v <= 1.0) {
        return Err(Error::Config(format!("{name} must lie in (0,1]")));
    }
    Ok(())
}

fn validate_eps(v: f64, name: &str) -> Result<()> {
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::Config(format!("{name} must be > 0")));
    }
    Ok(())
}

/// Target aspect of a crop: the untouched frame, or a `w:h` ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AspectTag {
    Original,
    Ratio(u32, u32),
}

impl AspectTag {
    pub const LANDSCAPE: AspectTag = AspectTag::Ratio(16, 9);
    pub const PORTRAIT: AspectTag = AspectTag::Ratio(2, 3);

    /// Width over height; `None` for [`AspectTag::Original`].
    pub fn ratio(&self) -> Option<f64> {
        match *self {
            AspectTag::Original => None,
            AspectTag::Ratio(w, h) => Some(f64::from(w) / f64::from(h)),
        }
    }

    pub fn is_portrait(&self) -> bool {
        self.ratio().is_some_and(|r| r < 1.0)
    }
}

impl fmt::Display for AspectTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AspectTag::Original => f.write_str("original"),
            AspectTag::Ratio(w, h) => write!(f, "{w}:{h}"),
        }
    }
}

impl FromStr for AspectTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("original") {
            return Ok(AspectTag::Original);
        }
        let (w, h) = s
            .split_once(':')
            .ok_or_else(|| Error::Config(format!("bad aspect tag {s:?}")))?;
        let w: u32 = w
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("bad aspect tag {s:?}")))?;
        let h: u32 = h
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("bad aspect tag {s:?}")))?;
        if w == 0 || h == 0 {
            return Err(Error::Config(format!("bad aspect tag {s:?}")));
        }
        Ok(AspectTag::Ratio(w, h))
    }
}

impl Serialize for AspectTag {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for AspectTag {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = EngineConfig::default();
        let text = cfg.to_toml();
        let back: EngineConfig = toml::from_str(&text).unwrap();
        assert_eq!(cfg, back);
        assert!(text.contains("variance_target = 0.43"));
        assert!(text.contains("\"2:3\""));
    }

    #[test]
    fn aspect_tags_parse() {
        assert_eq!("original".parse::<AspectTag>().unwrap(), AspectTag::Original);
        assert_eq!("16:9".parse::<AspectTag>().unwrap(), AspectTag::Ratio(16, 9));
        assert!("16x9".parse::<AspectTag>().is_err());
        assert!("0:9".parse::<AspectTag>().is_err());
        assert!(AspectTag::PORTRAIT.is_portrait());
    }

    #[test]
    fn bad_thresholds_are_config_errors() {
        let mut cfg = EngineConfig::default();
        cfg.downsample.max_uniformity = 1.5;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let mut cfg = EngineConfig::default();
        cfg.scoring.weights = WeightConfig {
            aesthetic: 0.0,
            semantic: 0.0,
            logo: 0.0,
            face_position: 0.0,
            on_face_focus: 0.0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let cfg: EngineConfig = toml::from_str("[grouping]\neps = 0.7\n").unwrap();
        assert_eq!(cfg.grouping.eps, 0.7);
        assert_eq!(cfg.grouping.variance_target, 0.43);
        assert_eq!(cfg.face_cluster.min_pts, 50);
    }
}
