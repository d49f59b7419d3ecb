//! Group near-duplicate keyframes: PCA projection, density clustering, and
//! joining same-cluster keyframes from neighbouring shots.
//!
//! Usage: cargo run --example grouping

use framepick::config::GroupingConfig;
use framepick::grouping::{group_keyframes, KeyframeEmbedding};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    // three recurring scenes; the script says which scene each shot shows
    let scenes: Vec<Vec<f32>> = (0..3)
        .map(|s| (0..16).map(|d| if d == s { 1.0 } else { 0.0 }).collect())
        .collect();
    let script = [0, 0, 1, 1, 1, 0, 2, 2, 0, 1];
    let mut keyframes = Vec::new();
    for (shot, &scene) in script.iter().enumerate() {
        for k in 0..3u64 {
            let embedding = scenes[scene].iter().map(|v| v + rng.random_range(-0.03..0.03)).collect();
            keyframes.push(KeyframeEmbedding {
                frame_id: shot as u64 * 100 + k * 10,
                shot_id: shot as u64,
                embedding,
            });
        }
    }
    let result = group_keyframes(&keyframes, &GroupingConfig::default())?;
    println!("{} keyframes, {} principal components", keyframes.len(), result.components);
    for g in &result.groups {
        let shots: Vec<u64> = g.members.iter().map(|f| f / 100).collect();
        println!("group {}: frames {:?} (shots {:?})", g.group_id, g.members, shots);
    }
    Ok(())
}
