//! Downsample an in-memory clip: drop dark frames, find shot boundaries,
//! split shots into subshots and pick one keyframe per subshot.
//!
//! Usage: cargo run --example keyframes

use framepick::config::DownsampleConfig;
use framepick::keyframe::{compute_features, downsample};
use image::{Rgb, RgbImage};

/// Three scenes of 40 frames with a drifting diagonal ramp; the first
/// frames of the second scene fade up from black.
fn clip() -> Vec<RgbImage> {
    let palettes = [[200u8, 80, 40], [40, 120, 200], [90, 200, 90]];
    (0..120u32)
        .map(|i| {
            let scene = (i / 40) as usize;
            let fade = if scene == 1 && i % 40 < 4 { 0.02 } else { 1.0 };
            let p = palettes[scene];
            RgbImage::from_fn(160, 90, |x, y| {
                let shade = 0.4 + 0.6 * f64::from((x * 3 + y * 5 + i * 2) % 97) / 97.0;
                let c = |v: u8| (f64::from(v) * shade * fade) as u8;
                Rgb([c(p[0]), c(p[1]), c(p[2])])
            })
        })
        .collect()
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = DownsampleConfig::default();
    let frames = clip();
    let features = frames
        .iter()
        .enumerate()
        .map(|(i, img)| compute_features(i as u64, img, i.checked_sub(1).map(|p| &frames[p]), &cfg))
        .collect::<Result<Vec<_>, _>>()?;
    let r = downsample(&features, &cfg)?;

    let dropped: Vec<u64> = (0..frames.len() as u64).filter(|f| !r.kept.contains(f)).collect();
    println!("{} frames, dropped as low quality: {dropped:?}", frames.len());
    for shot in &r.shots {
        println!(
            "shot {}: frames {}..={} ({} kept, boundary distance {:.3})",
            shot.shot_id,
            shot.first_id,
            shot.last_id,
            shot.frames.len(),
            shot.boundary_confidence
        );
    }
    for s in &r.subshots {
        println!("  subshot {} of shot {}: {} frames, keyframe {}", s.subshot_id, s.shot_id, s.members.len(), s.keyframe);
    }
    println!("keyframes: {:?}", r.keyframes);
    Ok(())
}
