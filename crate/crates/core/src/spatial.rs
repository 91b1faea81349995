//! 3-d kd-tree over unit vectors, used for exact spherical kNN.
//!
//! Candidates are ranked by `(great_circle_distance, index)` so results agree
//! bit-for-bit with an exhaustive sort. The tree itself prunes with chord
//! lengths, which are monotone in arc length; a small slack absorbs rounding
//! differences between the two formulas.

use crate::geo::{great_circle_distance, GeoCoord};

const LEAF_SIZE: usize = 8;
const PRUNE_SLACK: f64 = 1e-12;

enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        dim: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

pub(crate) struct KdTree<'a> {
    coords: &'a [GeoCoord],
    points: Vec<[f64; 3]>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl<'a> KdTree<'a> {
    pub(crate) fn new(coords: &'a [GeoCoord]) -> Self {
        let points: Vec<[f64; 3]> = coords.iter().map(|c| c.to_unit_vec()).collect();
        let mut tree = KdTree {
            coords,
            points,
            order: (0..coords.len()).collect(),
            nodes: Vec::new(),
        };
        if !coords.is_empty() {
            tree.build(0, coords.len());
        }
        tree
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let dim = self.widest_dim(start, end);
        let mid = start + (end - start) / 2;
        let points = &self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            points[a][dim].total_cmp(&points[b][dim])
        });
        let value = self.points[self.order[mid]][dim];
        self.nodes.push(Node::Leaf { start, end: start });
        let left = self.build(start, mid);
        let right = self.build(mid, end);
        self.nodes[id] = Node::Split {
            dim,
            value,
            left,
            right,
        };
        id
    }

    fn widest_dim(&self, start: usize, end: usize) -> usize {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for &i in &self.order[start..end] {
            for d in 0..3 {
                lo[d] = lo[d].min(self.points[i][d]);
                hi[d] = hi[d].max(self.points[i][d]);
            }
        }
        (0..3)
            .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
            .unwrap_or(0)
    }

    /// The `k` nearest points to `target` as `(distance, index)`, nearest
    /// first. `exclude` removes one index from consideration.
    pub(crate) fn nearest(
        &self,
        target: GeoCoord,
        k: usize,
        exclude: Option<usize>,
    ) -> Vec<(f64, usize)> {
        let mut best = Vec::with_capacity(k + 1);
        if k == 0 || self.nodes.is_empty() {
            return best;
        }
        let q = target.to_unit_vec();
        self.search(0, target, &q, k, exclude, &mut best);
        best
    }

    fn search(
        &self,
        node: usize,
        target: GeoCoord,
        q: &[f64; 3],
        k: usize,
        exclude: Option<usize>,
        best: &mut Vec<(f64, usize)>,
    ) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    if exclude == Some(i) {
                        continue;
                    }
                    let cand = (great_circle_distance(self.coords[i], target), i);
                    if best.len() == k {
                        if cand >= best[k - 1] {
                            continue;
                        }
                        best.pop();
                    }
                    let pos = best.partition_point(|b| *b < cand);
                    best.insert(pos, cand);
                }
            }
            Node::Split {
                dim,
                value,
                left,
                right,
            } => {
                let diff = q[dim] - value;
                let (near, far) = if diff < 0.0 {
                    (left, right)
                } else {
                    (right, left)
                };
                self.search(near, target, q, k, exclude, best);
                let visit_far = best.len() < k || {
                    let worst_chord = 2.0 * (best[k - 1].0 * 0.5).sin();
                    diff.abs() <= worst_chord + PRUNE_SLACK
                };
                if visit_far {
                    self.search(far, target, q, k, exclude, best);
                }
            }
        }
    }
}
