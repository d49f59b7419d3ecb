//! Generate a synthetic 500-frame video and run every pipeline stage on it
//! twice, showing the second run served entirely from the stage cache.
//!
//! Usage: cargo run --release --example pipeline [-- <bundle dir>]

use std::time::Instant;

use framepick::ingest::DatasetBundle;
use framepick::pipeline::Pipeline;
use framepick::synthetic::{generate, recommended_config, SyntheticSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    tracing_subscriber::fmt().with_env_filter("warn").init();
    let root = std::env::args()
        .nth(1)
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("framepick-synthetic"));
    if !root.join("manifest.json").exists() {
        let t = Instant::now();
        let truth = generate(&root, &SyntheticSpec::default())?;
        println!("generated {} in {:?}; planted shot starts {:?}", root.display(), t.elapsed(), truth.shot_bounds);
    }
    let pipeline = Pipeline::new(DatasetBundle::open(&root)?, recommended_config())?;
    for attempt in ["first", "second"] {
        let t = Instant::now();
        let run = pipeline.run()?;
        println!("{attempt} run took {:?}\n{run}", t.elapsed());
    }
    println!("outputs in {}", pipeline.bundle().output_dir().display());
    Ok(())
}
