//! The scoring building blocks: eye state, face position, per-column
//! normalization and the weighted final score.
//!
//! Usage: cargo run --example scoring

use std::collections::BTreeMap;

use framepick::config::{FacePositionTable, WeightConfig};
use framepick::faceproc::{classify_eyes, compute_ear};
use framepick::model::{EyePoints, LandmarkScheme, Point};
use framepick::scoring::{face_position_score, score_candidates, RawScores};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let p = Point::new;
    let open = EyePoints {
        contour: vec![p(0.0, 0.0), p(1.0, 1.0), p(3.0, 1.0), p(4.0, 0.0), p(3.0, -1.0), p(1.0, -1.0)],
        pupil: None,
    };
    let shut = EyePoints {
        contour: vec![p(0.0, 0.0), p(1.0, 0.3), p(3.0, 0.3), p(4.0, 0.0), p(3.0, -0.3), p(1.0, -0.3)],
        pupil: None,
    };
    let (a, b) = (compute_ear(&open, LandmarkScheme::SixPoint)?, compute_ear(&shut, LandmarkScheme::SixPoint)?);
    println!("EAR open {a:.3}, nearly shut {b:.3}; closed: {}", classify_eyes(Some(a), Some(b), 0.2).closed);

    let table = FacePositionTable::default();
    for (x, y) in [(0.5, 0.45), (0.5, 0.1), (0.05, 0.5), (0.5, 0.95)] {
        let s = face_position_score(p(x * 1280.0, y * 720.0), 1280, 720, &table);
        println!("face at ({x}, {y}) of the frame -> {s}");
    }

    let raw = |aes: f64, harbour: f64, logo: f64, faces: &[f64]| RawScores {
        aesthetic: aes,
        semantic: BTreeMap::from([("harbour".to_string(), harbour)]),
        logo,
        face_position: faces.to_vec(),
        on_face: faces.iter().map(|v| v * 0.4).collect(),
        on_face_union: None,
    };
    let table = [
        raw(0.62, 0.31, 0.9, &[1.0]),
        raw(0.55, 0.12, 0.4, &[]),
        raw(0.71, 0.27, 0.7, &[0.25, 0.5]),
    ];
    let keywords = vec!["harbour".to_string()];
    for (name, w) in [
        ("default weights", WeightConfig::default()),
        ("semantic only", WeightConfig { aesthetic: 0.0, logo: 0.0, face_position: 0.0, on_face_focus: 0.0, semantic: 1.0, ..Default::default() }),
    ] {
        println!("{name}:");
        for (i, s) in score_candidates(&table.iter().collect::<Vec<_>>(), &keywords, &w)?.iter().enumerate() {
            println!(
                "  candidate {i}: aesthetic {:.2} semantic {:.2} logo {:.2} face {:?} final {:.3}",
                s.aesthetic, s.semantic, s.logo, s.face_position, s.final_score
            );
        }
    }
    Ok(())
}
