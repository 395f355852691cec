use crate::error::{Error, Result};
use crate::geom::{self, Vec3};
use crate::scalar::Real;

use super::kdtree::SpatialIndex;

/// Chamfer value together with the nearest-neighbour maps that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct ChamferMatch<T> {
    pub value: T,
    /// For each point of `a`, the index of its nearest point in `b`.
    pub a_to_b: Vec<usize>,
    /// For each point of `b`, the index of its nearest point in `a`.
    pub b_to_a: Vec<usize>,
}

impl<T: Real> ChamferMatch<T> {
    /// Re-evaluates the loss with these correspondences held fixed.
    pub fn frozen_value(&self, a: &[Vec3<T>], b: &[Vec3<T>]) -> T {
        let fwd: T = a
            .iter()
            .zip(&self.a_to_b)
            .map(|(&p, &j)| geom::dist2(p, b[j]))
            .sum();
        let bwd: T = b
            .iter()
            .zip(&self.b_to_a)
            .map(|(&p, &j)| geom::dist2(p, a[j]))
            .sum();
        fwd + bwd
    }

    /// Gradient of the (frozen-correspondence) loss with respect to `a`.
    pub fn grad_a(&self, a: &[Vec3<T>], b: &[Vec3<T>]) -> Vec<Vec3<T>> {
        let two = T::one() + T::one();
        let mut g: Vec<Vec3<T>> = a
            .iter()
            .zip(&self.a_to_b)
            .map(|(&p, &j)| geom::scale(geom::sub(p, b[j]), two))
            .collect();
        for (&q, &i) in b.iter().zip(&self.b_to_a) {
            g[i] = geom::add(g[i], geom::scale(geom::sub(a[i], q), two));
        }
        g
    }
}

fn check<T>(a: &[Vec3<T>], b: &[Vec3<T>]) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Invalid("chamfer distance of an empty point set".into()));
    }
    Ok(())
}

/// Sum of squared nearest-neighbour distances, `a → b` plus `b → a`.
pub fn chamfer<T: Real>(a: &[Vec3<T>], b: &[Vec3<T>]) -> Result<T> {
    chamfer_with_matches(a, b).map(|m| m.value)
}

pub fn chamfer_with_matches<T: Real>(a: &[Vec3<T>], b: &[Vec3<T>]) -> Result<ChamferMatch<T>> {
    check(a, b)?;
    let index_b = SpatialIndex::build(b);
    let index_a = SpatialIndex::build(a);
    let mut fwd = T::zero();
    let a_to_b = a
        .iter()
        .map(|&p| {
            let (j, d) = index_b.nearest(p);
            fwd += d;
            j
        })
        .collect();
    let mut bwd = T::zero();
    let b_to_a = b
        .iter()
        .map(|&p| {
            let (j, d) = index_a.nearest(p);
            bwd += d;
            j
        })
        .collect();
    Ok(ChamferMatch {
        value: fwd + bwd,
        a_to_b,
        b_to_a,
    })
}

/// O(n·m) reference implementation with the same summation order and
/// tie-breaking as [`chamfer_with_matches`].
pub fn chamfer_brute_force<T: Real>(a: &[Vec3<T>], b: &[Vec3<T>]) -> Result<ChamferMatch<T>> {
    check(a, b)?;
    fn scan<T: Real>(p: Vec3<T>, set: &[Vec3<T>]) -> (usize, T) {
        let mut best = (0, geom::dist2(p, set[0]));
        for (i, &q) in set.iter().enumerate().skip(1) {
            let d = geom::dist2(p, q);
            if d < best.1 {
                best = (i, d);
            }
        }
        best
    }
    let mut fwd = T::zero();
    let a_to_b = a
        .iter()
        .map(|&p| {
            let (j, d) = scan(p, b);
            fwd += d;
            j
        })
        .collect();
    let mut bwd = T::zero();
    let b_to_a = b
        .iter()
        .map(|&p| {
            let (j, d) = scan(p, a);
            bwd += d;
            j
        })
        .collect();
    Ok(ChamferMatch {
        value: fwd + bwd,
        a_to_b,
        b_to_a,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn worked_examples() {
        assert_eq!(chamfer(&[[0.0, 0.0, 0.0]], &[[1.0, 0.0, 0.0f64]]).unwrap(), 2.0);
        // Both points of `a` are at distance 1 from the single point of `b`,
        // and `b` is at distance 1 from either: 1 + 1 + 1.
        let a = [[0.0, 0.0, 0.0], [2.0, 0.0, 0.0f64]];
        let b = [[1.0, 0.0, 0.0f64]];
        assert_eq!(chamfer_brute_force(&a, &b).unwrap().value, 3.0);
        assert_eq!(chamfer(&a, &b).unwrap(), 3.0);
        let a = [[0.3, 0.1, -0.2], [1.0, 2.0, 3.0f64]];
        assert_eq!(chamfer(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn empty_inputs_error() {
        assert!(chamfer::<f64>(&[], &[[0.0; 3]]).is_err());
        assert!(chamfer::<f64>(&[[0.0; 3]], &[]).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences_with_frozen_matches() {
        let mut r = rng::seeded(8);
        let a: Vec<[f64; 3]> = (0..20).map(|_| [r.random(), r.random(), r.random()]).collect();
        let b: Vec<[f64; 3]> = (0..15).map(|_| [r.random(), r.random(), r.random()]).collect();
        let m = chamfer_with_matches(&a, &b).unwrap();
        let g = m.grad_a(&a, &b);
        let h = 1e-6;
        for i in 0..a.len() {
            for k in 0..3 {
                let mut ap = a.clone();
                let mut am = a.clone();
                ap[i][k] += h;
                am[i][k] -= h;
                let fd = (m.frozen_value(&ap, &b) - m.frozen_value(&am, &b)) / (2.0 * h);
                assert!((fd - g[i][k]).abs() < 1e-7);
            }
        }
    }

    proptest! {
        #[test]
        fn symmetric_and_nonnegative(seed in any::<u64>(), n in 1usize..40, m in 1usize..40) {
            let mut r = rng::seeded(seed);
            let a: Vec<[f64; 3]> = (0..n).map(|_| [r.random(), r.random(), r.random()]).collect();
            let b: Vec<[f64; 3]> = (0..m).map(|_| [r.random(), r.random(), r.random()]).collect();
            let ab = chamfer(&a, &b).unwrap();
            let ba = chamfer(&b, &a).unwrap();
            prop_assert!(ab >= 0.0);
            prop_assert!((ab - ba).abs() <= 1e-12 * ab.max(1.0));
            prop_assert_eq!(chamfer(&a, &a).unwrap(), 0.0);
        }

        #[test]
        fn indexed_equals_brute_force(seed in any::<u64>(), n in 1usize..256, m in 1usize..256) {
            let mut r = rng::seeded(seed);
            let a: Vec<[f32; 3]> = (0..n).map(|_| [r.random(), r.random(), r.random()]).collect();
            let b: Vec<[f32; 3]> = (0..m).map(|_| [r.random(), r.random(), r.random()]).collect();
            let fast = chamfer_with_matches(&a, &b).unwrap();
            let slow = chamfer_brute_force(&a, &b).unwrap();
            prop_assert_eq!(fast.value.to_bits(), slow.value.to_bits());
            prop_assert_eq!(fast, slow);
        }
    }
}
