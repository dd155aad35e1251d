use nalgebra::Vector3;

use super::{KBest, MapPoint, Neighbor};

/// Exact k-NN by linear scan, ties broken by insertion index.
pub fn brute_force_knn(points: &[MapPoint], query: &Vector3<f64>, k: usize) -> Vec<Neighbor> {
    let mut best = KBest::new(k);
    for pt in points {
        best.offer(query, pt);
    }
    best.into_vec()
}
