//! Cluster face appearances into identities with the neighbourhood grid
//! search over the number of principal components.
//!
//! Usage: cargo run --example faces

use framepick::config::FaceClusterConfig;
use framepick::grouping::{cluster_faces, FacePoint};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

fn unit(v: Vec<f64>) -> Vec<f32> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| (x / n) as f32).collect()
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let noise = Normal::new(0.0, 0.03)?;
    let identities: Vec<Vec<f64>> = (0..4)
        .map(|_| (0..64).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect();
    let mut points = Vec::new();
    for (who, centre) in identities.iter().enumerate() {
        let n = centre.iter().map(|x| x * x).sum::<f64>().sqrt();
        for i in 0..(60 + 20 * who) {
            points.push(FacePoint {
                face_id: format!("id{who}-{i:03}"),
                embedding: unit(centre.iter().map(|x| x / n + noise.sample(&mut rng)).collect()),
            });
        }
    }
    let r = cluster_faces(&points, &FaceClusterConfig::default())?;
    println!("{} faces; base k {}, chosen k {}, score {:.2}", points.len(), r.base_k, r.chosen_k, r.score);
    for p in &r.score_curve {
        println!("  {p:?}");
    }
    for c in &r.clusters {
        println!("cluster {} (rank {}): {} faces, e.g. {}", c.cluster_id, c.rank, c.size, c.member_faces[0]);
    }
    Ok(())
}
