//! Compare published thumbnails against the candidates: each reference
//! embedding is matched to its nearest candidate and graded exact, similar
//! or none, and the grades are summarized over a small corpus.
//!
//! Usage: cargo run --release --example reference_match

use framepick::config::SelectionConfig;
use framepick::dataset::{load_candidate_embeddings, EMBEDDINGS_FILE};
use framepick::ingest::DatasetBundle;
use framepick::pipeline::Pipeline;
use framepick::selection::{corpus_report, evaluate_against_reference};
use framepick::synthetic::{generate, recommended_config, SyntheticSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let root = dir.path().join("video");
    generate(&root, &SyntheticSpec::default())?;
    let pipeline = Pipeline::new(DatasetBundle::open(&root)?, recommended_config())?;
    pipeline.run()?;
    let embeddings = load_candidate_embeddings(&pipeline.bundle().output_dir().join(EMBEDDINGS_FILE))?;
    let ids: Vec<&String> = embeddings.keys().collect();
    let cfg = SelectionConfig::default();

    // stand-in references: candidate embeddings disturbed by growing noise
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut reports = Vec::new();
    for i in 0..12 {
        let source = &embeddings[ids[rng.random_range(0..ids.len())]];
        let noise = 0.04 * f64::from(i);
        let reference: Vec<f32> = source.iter().map(|v| v + (noise * rng.random_range(-1.0..1.0)) as f32).collect();
        let r = evaluate_against_reference(embeddings.iter().map(|(k, v)| (k.as_str(), v.as_slice())), &reference, &cfg)?;
        println!("reference {i:2} (noise {noise:.2}): best {} cos {:.3} -> {:?}", r.candidate_id, r.best_similarity, r.tier);
        reports.push(r);
    }
    if let Some(rep) = corpus_report(&reports) {
        println!(
            "{} references: exact {:.0}%, similar or better {:.0}%, mean best cos {:.3} (tiers {}/{})",
            rep.videos,
            rep.exact_rate * 100.0,
            rep.similar_or_better_rate * 100.0,
            rep.mean_best_similarity,
            cfg.exact_match_threshold,
            cfg.similar_match_threshold
        );
    }
    Ok(())
}
