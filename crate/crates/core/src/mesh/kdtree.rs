use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::geom::{self, Vec3};
use crate::scalar::Real;

const LEAF_SIZE: usize = 8;

#[derive(Debug, Clone)]
enum Node<T> {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        axis: usize,
        value: T,
        left: usize,
        right: usize,
    },
}

/// Exact k-nearest-neighbour index (kd-tree) over a fixed point set.
///
/// Results are ordered by `(squared distance, source index)`, so ties always
/// resolve to the smaller index and match a sorted linear scan exactly.
#[derive(Debug, Clone)]
pub struct SpatialIndex<T> {
    points: Vec<Vec3<T>>,
    order: Vec<usize>,
    nodes: Vec<Node<T>>,
}

fn cmp_key<T: Real>(a: (T, usize), b: (T, usize)) -> Ordering {
    a.0.partial_cmp(&b.0)
        .unwrap_or(Ordering::Equal)
        .then(a.1.cmp(&b.1))
}

impl<T: Real> SpatialIndex<T> {
    pub fn build(points: &[Vec3<T>]) -> Self {
        let mut index = Self {
            points: points.to_vec(),
            order: (0..points.len()).collect(),
            nodes: Vec::new(),
        };
        if !points.is_empty() {
            index.build_node(0, points.len());
        }
        index
    }

    pub fn source_count(&self) -> usize {
        self.points.len()
    }

    pub fn points(&self) -> &[Vec3<T>] {
        &self.points
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mut lo = self.points[self.order[start]];
        let mut hi = lo;
        for &i in &self.order[start..end] {
            let p = self.points[i];
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        let axis = (0..3)
            .max_by(|&a, &b| {
                (hi[a] - lo[a])
                    .partial_cmp(&(hi[b] - lo[b]))
                    .unwrap_or(Ordering::Equal)
            })
            .unwrap_or(0);
        if hi[axis] - lo[axis] == T::zero() {
            // All remaining points coincide.
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mid = start + (end - start) / 2;
        let points = &self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            cmp_key((points[a][axis], a), (points[b][axis], b))
        });
        let value = self.points[self.order[mid]][axis];
        self.nodes.push(Node::Leaf { start, end });
        let left = self.build_node(start, mid);
        let right = self.build_node(mid, end);
        self.nodes[id] = Node::Split {
            axis,
            value,
            left,
            right,
        };
        id
    }

    /// The `min(k, source_count)` nearest sources as `(index, squared distance)`.
    pub fn knn(&self, query: Vec3<T>, k: usize) -> Result<Vec<(usize, T)>> {
        if self.points.is_empty() {
            return Err(Error::Invalid("nearest-neighbour query on an empty index".into()));
        }
        if k == 0 {
            return Err(Error::Invalid("k must be at least 1".into()));
        }
        let k = k.min(self.points.len());
        let mut best: Vec<(T, usize)> = Vec::with_capacity(k + 1);
        self.search(0, query, k, &mut best);
        Ok(best.into_iter().map(|(d, i)| (i, d)).collect())
    }

    /// Single nearest source; panics on an empty index.
    pub fn nearest(&self, query: Vec3<T>) -> (usize, T) {
        let mut best: Vec<(T, usize)> = Vec::with_capacity(2);
        self.search(0, query, 1, &mut best);
        (best[0].1, best[0].0)
    }

    fn search(&self, node: usize, q: Vec3<T>, k: usize, best: &mut Vec<(T, usize)>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let cand = (geom::dist2(q, self.points[i]), i);
                    if best.len() == k && cmp_key(cand, best[k - 1]) != Ordering::Less {
                        continue;
                    }
                    let pos = best.partition_point(|&b| cmp_key(b, cand) == Ordering::Less);
                    best.insert(pos, cand);
                    best.truncate(k);
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < T::zero() {
                    (left, right)
                } else {
                    (right, left)
                };
                self.search(near, q, k, best);
                // Equal plane distance must still be visited: a point on the
                // far side at exactly the current worst distance may have a
                // smaller index.
                if best.len() < k || diff * diff <= best[k - 1].0 {
                    self.search(far, q, k, best);
                }
            }
        }
    }
}

/// Sorted linear scan; the reference the index is tested against.
#[cfg(test)]
pub fn knn_brute_force<T: Real>(points: &[Vec3<T>], query: Vec3<T>, k: usize) -> Vec<(usize, T)> {
    let mut all: Vec<(T, usize)> = points
        .iter()
        .enumerate()
        .map(|(i, &p)| (geom::dist2(query, p), i))
        .collect();
    all.sort_by(|&a, &b| cmp_key(a, b));
    all.truncate(k);
    all.into_iter().map(|(d, i)| (i, d)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_points(n: usize, seed: u64) -> Vec<[f64; 3]> {
        let mut r = rng::seeded(seed);
        (0..n)
            .map(|_| [r.random::<f64>(), r.random::<f64>(), r.random::<f64>()])
            .collect()
    }

    #[test]
    fn query_on_indexed_point_returns_it() {
        let pts = random_points(50, 1);
        let idx = SpatialIndex::build(&pts);
        let r = idx.knn(pts[17], 1).unwrap();
        assert_eq!(r, vec![(17, 0.0)]);
    }

    #[test]
    fn matches_brute_force_on_random_sets() {
        let pts = random_points(100, 2);
        let idx = SpatialIndex::build(&pts);
        let mut r = rng::seeded(3);
        for _ in 0..200 {
            let q = [r.random::<f64>(), r.random::<f64>(), r.random::<f64>()];
            assert_eq!(idx.knn(q, 5).unwrap(), knn_brute_force(&pts, q, 5));
        }
    }

    #[test]
    fn k_is_clamped_to_source_count() {
        let pts = random_points(7, 4);
        let idx = SpatialIndex::build(&pts);
        let r = idx.knn([0.5; 3], 50).unwrap();
        assert_eq!(r.len(), 7);
        assert!(r.windows(2).all(|w| w[0].1 <= w[1].1));
    }

    #[test]
    fn ties_resolve_to_smaller_index() {
        // Grid with many equidistant neighbours and duplicated points.
        let mut pts = Vec::new();
        for i in 0..6 {
            for j in 0..6 {
                pts.push([i as f64, j as f64, 0.0]);
                pts.push([i as f64, j as f64, 0.0]);
            }
        }
        let idx = SpatialIndex::build(&pts);
        for q in [[2.5, 2.5, 0.0], [3.0, 3.0, 0.0], [0.0, 5.0, 1.0]] {
            for k in [1, 3, 4, 9, 16] {
                assert_eq!(idx.knn(q, k).unwrap(), knn_brute_force(&pts, q, k));
            }
        }
    }

    #[test]
    fn empty_index_and_zero_k_error() {
        let idx = SpatialIndex::<f64>::build(&[]);
        assert!(idx.knn([0.0; 3], 1).is_err());
        let idx = SpatialIndex::build(&random_points(3, 0));
        assert!(idx.knn([0.0; 3], 0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn knn_equals_sorted_scan(seed in any::<u64>(), n in 1usize..120, k in 1usize..12) {
            let pts = random_points(n, seed);
            // Quantize to create ties.
            let pts: Vec<[f64; 3]> = pts.iter().map(|p| p.map(|x| (x * 8.0).round() / 8.0)).collect();
            let idx = SpatialIndex::build(&pts);
            let mut r = rng::seeded(seed ^ 0xabc);
            let q = [r.random::<f64>(), r.random::<f64>(), r.random::<f64>()];
            prop_assert_eq!(idx.knn(q, k).unwrap(), knn_brute_force(&pts, q, k));
        }
    }
}
