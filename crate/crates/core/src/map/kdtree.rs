//! Static median-split 3-d tree, rebuilt from scratch for each scan.

use nalgebra::Vector3;

use super::{KBest, MapPoint, Neighbor};

const LEAF_SIZE: usize = 8;

#[derive(Debug)]
enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        axis: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Default)]
pub struct KdTree {
    points: Vec<MapPoint>,
    nodes: Vec<Node>,
}

impl KdTree {
    pub fn build(points: &[MapPoint]) -> Self {
        let mut tree = Self {
            points: points.to_vec(),
            nodes: Vec::with_capacity(2 * points.len() / LEAF_SIZE + 1),
        };
        if !tree.points.is_empty() {
            tree.build_node(0, tree.points.len());
        }
        tree
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let idx = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return idx;
        }
        let slice = &mut self.points[start..end];
        let mut lo = slice[0].p;
        let mut hi = slice[0].p;
        for pt in slice.iter() {
            lo = lo.inf(&pt.p);
            hi = hi.sup(&pt.p);
        }
        let axis = (hi - lo).imax();
        let mid = slice.len() / 2;
        slice.select_nth_unstable_by(mid, |a, b| a.p[axis].total_cmp(&b.p[axis]));
        let value = slice[mid].p[axis];
        self.nodes.push(Node::Leaf { start, end });
        let left = self.build_node(start, start + mid);
        let right = self.build_node(start + mid, end);
        self.nodes[idx] = Node::Split {
            axis,
            value,
            left,
            right,
        };
        idx
    }

    /// Exact k nearest neighbours, ties broken by insertion index.
    pub fn knn(&self, query: &Vector3<f64>, k: usize) -> Vec<Neighbor> {
        let mut best = KBest::new(k);
        if !self.nodes.is_empty() && k > 0 {
            self.search(0, query, &mut best);
        }
        best.into_vec()
    }

    fn search(&self, node: usize, q: &Vector3<f64>, best: &mut KBest) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for pt in &self.points[start..end] {
                    best.offer(q, pt);
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let d = q[axis] - value;
                let (near, far) = if d < 0.0 {
                    (left, right)
                } else {
                    (right, left)
                };
                self.search(near, q, best);
                if d * d <= best.bound() {
                    self.search(far, q, best);
                }
            }
        }
    }

    pub fn memory_bytes(&self) -> usize {
        self.points.capacity() * std::mem::size_of::<MapPoint>()
            + self.nodes.capacity() * std::mem::size_of::<Node>()
    }
}
