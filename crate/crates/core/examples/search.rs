//! Build the synthetic video, then query its dataset the way the review
//! front end does: filtered search, reweighting and the variety presets.
//!
//! Usage: cargo run --release --example search

use framepick::config::{AspectTag, SelectionConfig, WeightConfig};
use framepick::dataset::{ScoredDataset, DATASET_FILE};
use framepick::ingest::DatasetBundle;
use framepick::pipeline::Pipeline;
use framepick::selection::{propose_all, search, CountRange, SearchFilters, SearchQuery};
use framepick::synthetic::{generate, recommended_config, SyntheticSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let root = dir.path().join("video");
    generate(&root, &SyntheticSpec::default())?;
    let pipeline = Pipeline::new(DatasetBundle::open(&root)?, recommended_config())?;
    pipeline.run()?;
    let ds = ScoredDataset::load(&pipeline.bundle().output_dir().join(DATASET_FILE))?;
    println!("{} candidates in {} groups", ds.candidates.len(), ds.groups.len());

    let queries = [
        ("best overall", SearchQuery { page_size: 5, ..Default::default() }),
        (
            "portrait, one face, eyes open",
            SearchQuery {
                filters: SearchFilters {
                    aspect: Some(AspectTag::Ratio(2, 3)),
                    face_count: Some(CountRange { min: 1, max: 1 }),
                    eyes_open_only: true,
                    ..Default::default()
                },
                page_size: 5,
                ..Default::default()
            },
        ),
        (
            "night scenes",
            SearchQuery {
                filters: SearchFilters { keywords: Some(vec!["night".into()]), ..Default::default() },
                weights: Some(WeightConfig { semantic: 3.0, ..Default::default() }),
                page_size: 5,
                ..Default::default()
            },
        ),
    ];
    for (name, q) in queries {
        let page = search(&ds, &q)?;
        println!("{name}: {} matches", page.total);
        for h in &page.hits {
            println!("  {} group {} ({} members) final {:.3}", h.candidate_id, h.group_id, h.group_size, h.scores.final_score);
        }
    }

    for set in propose_all(&ds, &ds.default_weights, &SelectionConfig::default())? {
        let sections: Vec<String> = set.sections.iter().map(|s| format!("{}: {}", s.key, s.entries.len())).collect();
        println!("{} {}: [{}]{}", set.preset.as_str(), set.aspect, sections.join(", "), set.reason.map(|r| format!(" ({r})")).unwrap_or_default());
    }
    Ok(())
}
