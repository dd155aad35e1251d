//! Robocentric voxel map: insert, query, move the window, query again.
//!
//! cargo run --release --example rcvox_knn

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rcvox_lio::map::{brute_force_knn, KdTree, RcVoxConfig, RcVoxMap};

fn main() -> rcvox_lio::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cfg = RcVoxConfig::default();
    println!(
        "window edge {:.1} m, {}³ grids of {} m, {}³ voxels each",
        2.0 * cfg.lambda * cfg.lidar_range,
        cfg.tla_dim(),
        cfg.grid_size,
        cfg.bla_dim()
    );
    let mut map = RcVoxMap::initialize(cfg, Vector3::zeros())?;
    let mut uniform = |r: f64| Vector3::from_fn(|_, _| rng.random_range(-r..r));
    let cloud: Vec<_> = (0..50_000).map(|_| uniform(5.0)).collect();
    let stats = map.insert(&cloud);
    println!(
        "inserted {} of {} points ({} too close to a neighbour, {} in full voxels)",
        stats.inserted,
        cloud.len(),
        stats.dropped_close,
        stats.dropped_full
    );

    let q = Vector3::new(1.3, -0.4, 2.2);
    let found = map.knn(&q, 5)?;
    let stored = map.points();
    let tree = KdTree::build(&stored);
    println!("5 nearest to {:?}:", q.as_slice());
    for n in &found {
        println!("  id {:>6}  d = {:.4} m", n.id, n.dist2.sqrt());
    }
    println!(
        "same as kd-tree: {}, same as brute force: {}",
        found == tree.knn(&q, 5),
        found == brute_force_knn(&stored, &q, 5)
    );
    let queries = 1000;
    let agree = (0..queries)
        .filter(|_| {
            let q = uniform(5.0);
            map.knn(&q, 5).ok() == Some(tree.knn(&q, 5))
        })
        .count();
    println!("{agree} of {queries} random queries match the kd-tree exactly");

    let before = map.point_count();
    let evicted = map.update_origin(Vector3::new(28.0, 0.0, 0.0));
    let (lo, hi) = map.window_bounds();
    println!(
        "moved 28 m along x: {evicted} grids reset, {} of {before} points kept, window x in [{:.1}, {:.1})",
        map.point_count(),
        lo.x,
        hi.x
    );
    match map.knn(&Vector3::new(2.0, 0.0, 0.0), 5) {
        Ok(n) => println!("query at the old origin: {} results", n.len()),
        Err(e) => println!("query at the old origin: {e}"),
    }
    Ok(())
}
