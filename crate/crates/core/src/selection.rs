//! Proposal presets, filtered search and reference matching over a scored
//! dataset.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::config::{AspectTag, SelectionConfig, WeightConfig};
use crate::dataset::{Candidate, ScoredDataset};
use crate::error::{Error, Result};
use crate::model::{cosine_slices, Emotion, Rect, ShotScale, NOISE};
use crate::scoring::{score_candidates, ScoreVector};

/// A candidate together with its scores under some weighting.
#[derive(Debug, Clone, PartialEq)]
pub struct Ranked<'a> {
    pub candidate: &'a Candidate,
    pub scores: ScoreVector,
}

fn rank_order(a: &Ranked<'_>, b: &Ranked<'_>) -> std::cmp::Ordering {
    b.scores
        .final_score
        .total_cmp(&a.scores.final_score)
        .then(a.candidate.frame_id.cmp(&b.candidate.frame_id))
}

/// Score every candidate of one aspect; normalization spans that set.
pub fn score_aspect<'a>(ds: &'a ScoredDataset, aspect: AspectTag, weights: &WeightConfig) -> Result<Vec<Ranked<'a>>> {
    let cands: Vec<&Candidate> = ds.candidates.iter().filter(|c| c.aspect == aspect).collect();
    let known = ds.keyword_names();
    for k in &weights.keywords {
        if !known.contains(k) {
            return Err(Error::Validation(format!(
                "keyword {k:?} has no embedding; register it with an embedding before searching"
            )));
        }
    }
    let raws: Vec<_> = cands.iter().map(|c| &c.raw).collect();
    let scores = score_candidates(&raws, &known, weights)?;
    let mut out: Vec<Ranked<'a>> = cands
        .into_iter()
        .zip(scores)
        .map(|(candidate, scores)| Ranked { candidate, scores })
        .collect();
    out.sort_by(rank_order);
    Ok(out)
}

/// Best member of a group plus the rest, all ranked.
#[derive(Debug, Clone, PartialEq)]
pub struct Representative<'a> {
    pub best: Ranked<'a>,
    pub expansion: Vec<Ranked<'a>>,
}

/// Keep the top-ranked candidate per group; input order need not be sorted.
pub fn pick_group_representatives<'a>(ranked: &[Ranked<'a>]) -> Vec<Representative<'a>> {
    let mut sorted = ranked.to_vec();
    sorted.sort_by(rank_order);
    let mut by_group: BTreeMap<u64, Vec<Ranked<'a>>> = BTreeMap::new();
    let mut order = Vec::new();
    for r in sorted {
        let g = r.candidate.group_id;
        if !by_group.contains_key(&g) {
            order.push(g);
        }
        by_group.entry(g).or_default().push(r);
    }
    order
        .into_iter()
        .map(|g| {
            let mut members = by_group.remove(&g).expect("group seen");
            let best = members.remove(0);
            Representative {
                best,
                expansion: members,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    MainCharacters,
    PerEmotion,
    PerKeyword,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::MainCharacters, Preset::PerEmotion, Preset::PerKeyword];

    pub fn as_str(self) -> &'static str {
        match self {
            Preset::MainCharacters => "main-characters",
            Preset::PerEmotion => "per-emotion",
            Preset::PerKeyword => "per-keyword",
        }
    }
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::Validation(format!("unknown preset {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalEntry {
    pub candidate_id: String,
    pub frame_id: u64,
    pub group_id: u64,
    pub rect: Rect,
    pub scores: ScoreVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Section {
    pub key: String,
    pub entries: Vec<ProposalEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalSet {
    pub preset: Preset,
    pub aspect: AspectTag,
    pub sections: Vec<Section>,
    /// Why the set is empty, when it is.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

fn entry(r: &Ranked<'_>) -> ProposalEntry {
    ProposalEntry {
        candidate_id: r.candidate.candidate_id.clone(),
        frame_id: r.candidate.frame_id,
        group_id: r.candidate.group_id,
        rect: r.candidate.rect,
        scores: r.scores.clone(),
    }
}

/// Top `k` of an already ranked list, at most one per group.
fn top_k_dedup<'a, 'b>(ranked: impl Iterator<Item = &'b Ranked<'a>>, k: usize) -> Vec<ProposalEntry>
where
    'a: 'b,
{
    let mut seen = BTreeSet::new();
    ranked
        .filter(|r| seen.insert(r.candidate.group_id))
        .take(k)
        .map(entry)
        .collect()
}

/// Portrait-friendly candidates: has faces, nobody's eyes closed, not a
/// long shot. Frames without a framing label are not excluded.
pub fn character_filter(c: &Candidate) -> bool {
    !c.faces.is_empty() && c.eyes_open() && c.shot_scale != Some(ShotScale::Long)
}

/// Clusters that together cover `coverage` of clustered faces, largest
/// first (at least one).
pub fn main_clusters(ds: &ScoredDataset, coverage: f64) -> Vec<i64> {
    let mut clusters: Vec<(i64, usize)> = ds
        .face_clusters
        .clusters
        .iter()
        .map(|c| (c.cluster_id, c.size))
        .collect();
    clusters.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let total: usize = clusters.iter().map(|c| c.1).sum();
    let mut out = Vec::new();
    let mut acc = 0usize;
    for (id, size) in clusters {
        if !out.is_empty() && acc as f64 >= coverage * total as f64 {
            break;
        }
        out.push(id);
        acc += size;
    }
    out
}

fn without_semantic(w: &WeightConfig) -> WeightConfig {
    let mut w = w.clone();
    w.semantic = 0.0;
    if [w.aesthetic, w.logo, w.face_position, w.on_face_focus].iter().all(|v| *v == 0.0) {
        w.aesthetic = 1.0;
    }
    w
}

pub fn preset_main_characters(ds: &ScoredDataset, aspect: AspectTag, weights: &WeightConfig, cfg: &SelectionConfig) -> Result<ProposalSet> {
    let ranked = score_aspect(ds, aspect, &without_semantic(weights))?;
    let eligible: Vec<&Ranked<'_>> = ranked.iter().filter(|r| character_filter(r.candidate)).collect();
    let mut set = ProposalSet {
        preset: Preset::MainCharacters,
        aspect,
        sections: Vec::new(),
        reason: None,
    };
    if eligible.is_empty() {
        set.reason = Some("no candidates with open-eyed faces in medium or close-up shots".into());
        return Ok(set);
    }
    let main = main_clusters(ds, cfg.main_cluster_coverage);
    let has_cluster = |r: &Ranked<'_>, ids: &dyn Fn(i64) -> bool| r.candidate.faces.iter().any(|f| ids(f.cluster_id));
    for &cid in &main {
        let entries = top_k_dedup(
            eligible.iter().copied().filter(|r| has_cluster(r, &|c| c == cid)),
            cfg.per_section,
        );
        set.sections.push(Section {
            key: format!("character-{cid}"),
            entries,
        });
    }
    let secondary = top_k_dedup(
        eligible
            .iter()
            .copied()
            .filter(|r| has_cluster(r, &|c| c != NOISE && !main.contains(&c))),
        cfg.per_section,
    );
    set.sections.push(Section {
        key: "secondary".into(),
        entries: secondary,
    });
    if set.sections.iter().all(|s| s.entries.is_empty()) {
        set.reason = Some("no face identities were clustered".into());
    }
    Ok(set)
}

pub fn preset_per_emotion(ds: &ScoredDataset, aspect: AspectTag, weights: &WeightConfig, cfg: &SelectionConfig) -> Result<ProposalSet> {
    let ranked = score_aspect(ds, aspect, &without_semantic(weights))?;
    let eligible: Vec<&Ranked<'_>> = ranked.iter().filter(|r| character_filter(r.candidate)).collect();
    let mut set = ProposalSet {
        preset: Preset::PerEmotion,
        aspect,
        sections: Vec::new(),
        reason: None,
    };
    for emotion in Emotion::ALL {
        let matching = eligible
            .iter()
            .copied()
            .filter(|r| r.candidate.faces.iter().all(|f| f.emotion == emotion));
        let entries = top_k_dedup(matching, cfg.per_section);
        if !entries.is_empty() {
            set.sections.push(Section {
                key: emotion.as_str().into(),
                entries,
            });
        }
    }
    if set.sections.is_empty() {
        set.reason = Some("no candidates with open-eyed faces in medium or close-up shots".into());
    }
    Ok(set)
}

pub fn preset_per_keyword(ds: &ScoredDataset, aspect: AspectTag, weights: &WeightConfig, cfg: &SelectionConfig) -> Result<ProposalSet> {
    let keywords = ds.keyword_names();
    if keywords.is_empty() {
        return Err(Error::Config("per-keyword proposals need at least one keyword".into()));
    }
    let mut set = ProposalSet {
        preset: Preset::PerKeyword,
        aspect,
        sections: Vec::new(),
        reason: None,
    };
    for kw in keywords {
        let w = WeightConfig {
            aesthetic: if weights.aesthetic > 0.0 { weights.aesthetic } else { 1.0 },
            semantic: if weights.semantic > 0.0 { weights.semantic } else { 1.0 },
            logo: if weights.logo > 0.0 { weights.logo } else { 1.0 },
            face_position: 0.0,
            on_face_focus: 0.0,
            face_aggregation: weights.face_aggregation,
            keywords: vec![kw.clone()],
        };
        let ranked = score_aspect(ds, aspect, &w)?;
        set.sections.push(Section {
            key: kw,
            entries: top_k_dedup(ranked.iter(), cfg.per_section),
        });
    }
    Ok(set)
}

pub fn propose(ds: &ScoredDataset, preset: Preset, aspect: AspectTag, weights: &WeightConfig, cfg: &SelectionConfig) -> Result<ProposalSet> {
    match preset {
        Preset::MainCharacters => preset_main_characters(ds, aspect, weights, cfg),
        Preset::PerEmotion => preset_per_emotion(ds, aspect, weights, cfg),
        Preset::PerKeyword => preset_per_keyword(ds, aspect, weights, cfg),
    }
}

/// Every preset for every aspect present in the dataset.
pub fn propose_all(ds: &ScoredDataset, weights: &WeightConfig, cfg: &SelectionConfig) -> Result<Vec<ProposalSet>> {
    let mut out = Vec::new();
    for aspect in ds.aspects() {
        for preset in Preset::ALL {
            if preset == Preset::PerKeyword && ds.keywords.is_empty() {
                continue;
            }
            out.push(propose(ds, preset, aspect, weights, cfg)?);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountRange {
    pub min: usize,
    pub max: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchFilters {
    pub face_count: Option<CountRange>,
    /// Keep candidates showing at least one of these emotions.
    pub emotions: Option<Vec<Emotion>>,
    pub eyes_open_only: bool,
    /// Keep candidates containing at least one of these identities.
    pub clusters: Option<Vec<i64>>,
    pub shot_scales: Option<Vec<ShotScale>>,
    pub aspect: Option<AspectTag>,
    /// Keyword set for the semantic score; overrides the weights' set.
    pub keywords: Option<Vec<String>>,
}

impl SearchFilters {
    pub fn matches(&self, c: &Candidate) -> bool {
        if let Some(r) = self.face_count {
            if c.faces.len() < r.min || c.faces.len() > r.max {
                return false;
            }
        }
        if let Some(es) = &self.emotions {
            if !c.faces.iter().any(|f| es.contains(&f.emotion)) {
                return false;
            }
        }
        if self.eyes_open_only && !c.eyes_open() {
            return false;
        }
        if let Some(ids) = &self.clusters {
            if !c.faces.iter().any(|f| ids.contains(&f.cluster_id)) {
                return false;
            }
        }
        if let Some(ss) = &self.shot_scales {
            if !c.shot_scale.is_some_and(|s| ss.contains(&s)) {
                return false;
            }
        }
        true
    }
}

fn default_page_size() -> usize {
    24
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchQuery {
    #[serde(default)]
    pub filters: SearchFilters,
    #[serde(default)]
    pub weights: Option<WeightConfig>,
    #[serde(default)]
    pub page: usize,
    #[serde(default = "default_page_size")]
    pub page_size: usize,
    #[serde(default)]
    pub reverse: bool,
    /// Show only the best candidate of each group.
    #[serde(default = "default_true")]
    pub group_dedup: bool,
}

impl Default for SearchQuery {
    fn default() -> Self {
        Self {
            filters: SearchFilters::default(),
            weights: None,
            page: 0,
            page_size: default_page_size(),
            reverse: false,
            group_dedup: true,
        }
    }
}

impl SearchQuery {
    /// Field-level problems, empty when the query is well formed.
    pub fn field_errors(&self) -> Vec<(String, String)> {
        let mut errs = Vec::new();
        if self.page_size == 0 {
            errs.push(("page_size".into(), "must be >= 1".into()));
        }
        if let Some(r) = self.filters.face_count {
            if r.min > r.max {
                errs.push(("filters.face_count".into(), "min exceeds max".into()));
            }
        }
        if let Some(w) = &self.weights {
            if let Err(e) = w.validate() {
                errs.push(("weights".into(), e.to_string()));
            }
        }
        errs
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub candidate_id: String,
    pub frame_id: u64,
    pub group_id: u64,
    pub group_size: usize,
    pub aspect: AspectTag,
    pub rect: Rect,
    pub face_count: usize,
    pub scores: ScoreVector,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Facets {
    pub face_count: BTreeMap<usize, usize>,
    pub emotions: BTreeMap<String, usize>,
    pub eyes_open: usize,
    pub eyes_closed: usize,
    pub clusters: BTreeMap<i64, usize>,
    pub shot_scales: BTreeMap<String, usize>,
}

impl Facets {
    fn add(&mut self, c: &Candidate) {
        *self.face_count.entry(c.faces.len()).or_default() += 1;
        let emotions: BTreeSet<&str> = c.faces.iter().map(|f| f.emotion.as_str()).collect();
        for e in emotions {
            *self.emotions.entry(e.to_string()).or_default() += 1;
        }
        if !c.faces.is_empty() {
            if c.eyes_open() {
                self.eyes_open += 1;
            } else {
                self.eyes_closed += 1;
            }
        }
        let clusters: BTreeSet<i64> = c.faces.iter().map(|f| f.cluster_id).collect();
        for id in clusters {
            *self.clusters.entry(id).or_default() += 1;
        }
        if let Some(s) = c.shot_scale {
            *self.shot_scales.entry(s.as_str().to_string()).or_default() += 1;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchPage {
    pub total: usize,
    pub page: usize,
    pub page_size: usize,
    pub hits: Vec<SearchHit>,
    pub facets: Facets,
}

/// Filter, reweight, group-deduplicate and paginate.
pub fn search(ds: &ScoredDataset, q: &SearchQuery) -> Result<SearchPage> {
    if let Some((field, msg)) = q.field_errors().into_iter().next() {
        return Err(Error::Validation(format!("{field}: {msg}")));
    }
    let mut weights = q.weights.clone().unwrap_or_else(|| ds.default_weights.clone());
    if let Some(k) = &q.filters.keywords {
        weights.keywords = k.clone();
    }
    let aspect = q.filters.aspect.unwrap_or(AspectTag::Original);
    let ranked = score_aspect(ds, aspect, &weights)?;
    let filtered: Vec<Ranked<'_>> = ranked.into_iter().filter(|r| q.filters.matches(r.candidate)).collect();
    let mut facets = Facets::default();
    for r in &filtered {
        facets.add(r.candidate);
    }
    let mut group_sizes: BTreeMap<u64, usize> = BTreeMap::new();
    for r in &filtered {
        *group_sizes.entry(r.candidate.group_id).or_default() += 1;
    }
    let mut rows: Vec<Ranked<'_>> = if q.group_dedup {
        pick_group_representatives(&filtered).into_iter().map(|r| r.best).collect()
    } else {
        filtered
    };
    if q.reverse {
        rows.reverse();
    }
    let total = rows.len();
    let hits = rows
        .iter()
        .skip(q.page.saturating_mul(q.page_size))
        .take(q.page_size)
        .map(|r| SearchHit {
            candidate_id: r.candidate.candidate_id.clone(),
            frame_id: r.candidate.frame_id,
            group_id: r.candidate.group_id,
            group_size: group_sizes[&r.candidate.group_id],
            aspect: r.candidate.aspect,
            rect: r.candidate.rect,
            face_count: r.candidate.faces.len(),
            scores: r.scores.clone(),
        })
        .collect();
    Ok(SearchPage {
        total,
        page: q.page,
        page_size: q.page_size,
        hits,
        facets,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchTier {
    Exact,
    Similar,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    pub best_similarity: f64,
    pub candidate_id: String,
    pub tier: MatchTier,
    pub exact_threshold: f64,
    pub similar_threshold: f64,
}

/// Closest candidate to a reference thumbnail embedding.
pub fn evaluate_against_reference<'a, I>(candidates: I, reference: &[f32], cfg: &SelectionConfig) -> Result<MatchReport>
where
    I: IntoIterator<Item = (&'a str, &'a [f32])>,
{
    let mut best: Option<(f64, &str)> = None;
    for (id, emb) in candidates {
        let s = cosine_slices(emb, reference)?;
        if best.is_none_or(|(b, _)| s > b) {
            best = Some((s, id));
        }
    }
    let (s, id) = best.ok_or_else(|| Error::Validation("no candidates to compare against".into()))?;
    let tier = if s >= cfg.exact_match_threshold {
        MatchTier::Exact
    } else if s >= cfg.similar_match_threshold {
        MatchTier::Similar
    } else {
        MatchTier::None
    };
    Ok(MatchReport {
        best_similarity: s,
        candidate_id: id.to_string(),
        tier,
        exact_threshold: cfg.exact_match_threshold,
        similar_threshold: cfg.similar_match_threshold,
    })
}

/// Match statistics over several videos. Reported, not asserted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusReport {
    pub videos: usize,
    pub mean_best_similarity: f64,
    pub exact_rate: f64,
    /// Share of videos matched at least at the similar tier.
    pub similar_or_better_rate: f64,
}

pub fn corpus_report(reports: &[MatchReport]) -> Option<CorpusReport> {
    if reports.is_empty() {
        return None;
    }
    let n = reports.len() as f64;
    Some(CorpusReport {
        videos: reports.len(),
        mean_best_similarity: reports.iter().map(|r| r.best_similarity).sum::<f64>() / n,
        exact_rate: reports.iter().filter(|r| r.tier == MatchTier::Exact).count() as f64 / n,
        similar_or_better_rate: reports.iter().filter(|r| r.tier != MatchTier::None).count() as f64 / n,
    })
}
