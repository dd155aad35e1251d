//! Local map structures: the robocentric two-layer voxel array and the exact
//! baselines it is checked and benchmarked against.

mod brute;
mod kdtree;
mod rcvox;

use std::cmp::Ordering;

use nalgebra::Vector3;

pub use brute::brute_force_knn;
pub use kdtree::KdTree;
pub use rcvox::{InsertStats, NeighborMode, RcVoxConfig, RcVoxMap, VoxelKey, VoxelSnapshot};

/// A point stored in a map, tagged with its insertion index.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MapPoint {
    pub id: u64,
    pub p: Vector3<f64>,
}

/// One k-NN result.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Neighbor {
    pub id: u64,
    pub p: Vector3<f64>,
    pub dist2: f64,
}

impl Neighbor {
    /// Total order by `(distance, insertion index)`.
    pub fn rank(&self, other: &Self) -> Ordering {
        self.dist2
            .total_cmp(&other.dist2)
            .then(self.id.cmp(&other.id))
    }
}

/// Bounded, sorted accumulator of the k best candidates.
pub(crate) struct KBest {
    k: usize,
    items: Vec<Neighbor>,
}

impl KBest {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            items: Vec::with_capacity(k + 1),
        }
    }

    /// Squared distance a candidate must beat (or tie) to be considered.
    pub fn bound(&self) -> f64 {
        if self.items.len() < self.k {
            f64::INFINITY
        } else {
            self.items[self.k - 1].dist2
        }
    }

    pub fn offer(&mut self, query: &Vector3<f64>, pt: &MapPoint) {
        if self.k == 0 {
            return;
        }
        let cand = Neighbor {
            id: pt.id,
            p: pt.p,
            dist2: (pt.p - query).norm_squared(),
        };
        if self.items.len() == self.k && cand.rank(&self.items[self.k - 1]) != Ordering::Less {
            return;
        }
        let pos = self
            .items
            .partition_point(|n| n.rank(&cand) == Ordering::Less);
        self.items.insert(pos, cand);
        self.items.truncate(self.k);
    }

    pub fn into_vec(self) -> Vec<Neighbor> {
        self.items
    }
}
