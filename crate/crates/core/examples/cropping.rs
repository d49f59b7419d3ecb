//! Remove letterbox bars, enumerate crops for each target aspect, apply the
//! face rules and rank the survivors by saliency.
//!
//! Usage: cargo run --example cropping

use framepick::config::{AspectTag, CropConfig};
use framepick::cropper::{
    detect_letterbox, filter_crops, generate_crop_candidates, rank_crops, strip_letterbox, FaceBox, SaliencyCropScorer,
};
use framepick::model::{Grid, Point, Rect};
use image::{Rgb, RgbImage};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = CropConfig::default();
    let (w, h, bar) = (320u32, 180u32, 20u32);
    let frame = RgbImage::from_fn(w, h, |x, y| {
        if y < bar || y >= h - bar {
            Rgb([0, 0, 0])
        } else {
            Rgb([(x % 200) as u8 + 40, 100, 140])
        }
    });
    let est = detect_letterbox(&[(0, &frame)], &cfg)?;
    let content = strip_letterbox(&frame, &est);
    let (cw, ch) = content.dimensions();
    println!("letterbox {}/{} rows, content {cw}x{ch}", est.top_rows, est.bottom_rows);

    // one face right of centre; saliency peaks on it
    let face = FaceBox {
        bbox: Rect::new(190, 40, 40, 40),
        center: Point::new(210.0, 60.0),
    };
    let (gw, gh) = (32usize, 14usize);
    let saliency = Grid::new(
        gw,
        gh,
        (0..gw * gh)
            .map(|i| {
                let (x, y) = ((i % gw) as f64 + 0.5, (i / gw) as f64 + 0.5);
                let (fx, fy) = (210.0 / f64::from(cw) * gw as f64, 60.0 / f64::from(ch) * gh as f64);
                (-((x - fx).powi(2) + (y - fy).powi(2)) / 8.0).exp()
            })
            .collect(),
    )?;
    let scorer = SaliencyCropScorer::new(&saliency, cw, ch, &cfg);
    for aspect in [AspectTag::Ratio(2, 3), AspectTag::Ratio(16, 9), AspectTag::Ratio(1, 1)] {
        let mut cands = generate_crop_candidates(cw, ch, aspect, &cfg)?;
        filter_crops(&mut cands, &[face], &cfg);
        let rejected = cands.iter().filter(|c| c.rejected_reason.is_some()).count();
        let Some(ranked) = rank_crops(&cands, &scorer, 2) else { continue };
        println!(
            "{aspect}: {} candidates, {rejected} rejected; best {} (score {:.3}), alternates {:?}",
            cands.len(),
            ranked.best.rect,
            ranked.best.score,
            ranked.alternates.iter().map(|c| c.rect.to_string()).collect::<Vec<_>>()
        );
    }
    Ok(())
}
