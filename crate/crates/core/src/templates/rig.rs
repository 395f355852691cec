//! Building blocks for analytic templates: coordinates expressed as linear
//! combinations of parameters, and the primitive surfaces built from them.

use std::collections::HashMap;
use std::ops::{Add, Mul, Neg, Sub};

use crate::geom::Vec3;
use crate::scalar::{lit, Real};

/// `Σ cᵢ · p[idx_i]` with terms sorted by parameter index.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Lin(Vec<(usize, f64)>);

impl Lin {
    pub fn zero() -> Self {
        Lin(Vec::new())
    }

    pub fn param(index: usize, coeff: f64) -> Self {
        if coeff == 0.0 {
            Lin::zero()
        } else {
            Lin(vec![(index, coeff)])
        }
    }

    pub fn terms(&self) -> &[(usize, f64)] {
        &self.0
    }

    pub fn coeff(&self, index: usize) -> f64 {
        self.0
            .iter()
            .find(|(i, _)| *i == index)
            .map(|(_, c)| *c)
            .unwrap_or(0.0)
    }

    pub fn eval<T: Real>(&self, p: &[T]) -> T {
        let mut acc = T::zero();
        for &(i, c) in &self.0 {
            acc += if c == 1.0 { p[i] } else { lit::<T>(c) * p[i] };
        }
        acc
    }

    /// Default-parameter value, in `f64`.
    pub fn eval_f64(&self, p: &[f64]) -> f64 {
        self.eval(p)
    }
}

impl Add for &Lin {
    type Output = Lin;
    fn add(self, rhs: &Lin) -> Lin {
        let mut out: Vec<(usize, f64)> = Vec::with_capacity(self.0.len() + rhs.0.len());
        let (mut i, mut j) = (0, 0);
        while i < self.0.len() || j < rhs.0.len() {
            let take_left = j >= rhs.0.len() || (i < self.0.len() && self.0[i].0 < rhs.0[j].0);
            let take_right = i >= self.0.len() || (j < rhs.0.len() && rhs.0[j].0 < self.0[i].0);
            if take_left {
                out.push(self.0[i]);
                i += 1;
            } else if take_right {
                out.push(rhs.0[j]);
                j += 1;
            } else {
                let c = self.0[i].1 + rhs.0[j].1;
                if c != 0.0 {
                    out.push((self.0[i].0, c));
                }
                i += 1;
                j += 1;
            }
        }
        Lin(out)
    }
}

impl Add for Lin {
    type Output = Lin;
    fn add(self, rhs: Lin) -> Lin {
        &self + &rhs
    }
}

impl Sub for Lin {
    type Output = Lin;
    fn sub(self, rhs: Lin) -> Lin {
        &self + &(-rhs)
    }
}

impl Sub for &Lin {
    type Output = Lin;
    fn sub(self, rhs: &Lin) -> Lin {
        self + &(rhs * -1.0)
    }
}

impl Neg for Lin {
    type Output = Lin;
    fn neg(self) -> Lin {
        self * -1.0
    }
}

impl Mul<f64> for &Lin {
    type Output = Lin;
    fn mul(self, k: f64) -> Lin {
        if k == 0.0 {
            return Lin::zero();
        }
        Lin(self.0.iter().map(|&(i, c)| (i, c * k)).collect())
    }
}

impl Mul<f64> for Lin {
    type Output = Lin;
    fn mul(self, k: f64) -> Lin {
        &self * k
    }
}

pub type Lin3 = [Lin; 3];

pub fn lin3_zero() -> Lin3 {
    [Lin::zero(), Lin::zero(), Lin::zero()]
}

pub fn eval3<T: Real>(v: &Lin3, p: &[T]) -> Vec3<T> {
    [v[0].eval(p), v[1].eval(p), v[2].eval(p)]
}

pub fn add3(a: &Lin3, b: &Lin3) -> Lin3 {
    [&a[0] + &b[0], &a[1] + &b[1], &a[2] + &b[2]]
}

pub fn scale3(a: &Lin3, k: f64) -> Lin3 {
    [&a[0] * k, &a[1] * k, &a[2] * k]
}

/// `(1-t)·a + t·b`, exact at `t ∈ {0, 1}`.
pub fn lerp3(a: &Lin3, b: &Lin3, t: f64) -> Lin3 {
    if t == 0.0 {
        return a.clone();
    }
    if t == 1.0 {
        return b.clone();
    }
    add3(&scale3(a, 1.0 - t), &scale3(b, t))
}

/// Surface piece produced by a primitive builder.
#[derive(Debug, Clone, Default)]
pub struct Piece {
    pub coords: Vec<Lin3>,
    pub faces: Vec<[u32; 3]>,
}

impl Piece {
    /// Appends `other`, offsetting its indices.
    pub fn append(&mut self, other: Piece) -> std::ops::Range<usize> {
        let base = self.coords.len();
        self.faces.extend(
            other
                .faces
                .iter()
                .map(|f| [f[0] + base as u32, f[1] + base as u32, f[2] + base as u32]),
        );
        self.coords.extend(other.coords);
        base..self.coords.len()
    }
}

/// Hexahedron surface with an `n × n` vertex grid on every face (shared edges
/// deduplicated, `n³ - (n-2)³` vertices). `corners[i][j][k]` is the corner at
/// the low (0) or high (1) end of the x, y and z directions respectively; the
/// corner frame must be right-handed for faces to wind outward.
pub fn hexahedron(corners: &[[[Lin3; 2]; 2]; 2], n: usize) -> Piece {
    assert!(n >= 2, "grid resolution must be at least 2");
    let m = n - 1;
    let frac = |a: usize| a as f64 / m as f64;
    let mut index: HashMap<(usize, usize, usize), u32> = HashMap::new();
    let mut coords = Vec::new();
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                let boundary = a == 0 || a == m || b == 0 || b == m || c == 0 || c == m;
                if !boundary {
                    continue;
                }
                let (u, v, w) = (frac(a), frac(b), frac(c));
                let along_z = |i: usize, j: usize| lerp3(&corners[i][j][0], &corners[i][j][1], w);
                let y0 = lerp3(&along_z(0, 0), &along_z(0, 1), v);
                let y1 = lerp3(&along_z(1, 0), &along_z(1, 1), v);
                index.insert((a, b, c), coords.len() as u32);
                coords.push(lerp3(&y0, &y1, u));
            }
        }
    }
    let mut faces = Vec::new();
    let mut quad = |p: [(usize, usize, usize); 4]| {
        let q = p.map(|k| index[&k]);
        faces.push([q[0], q[1], q[2]]);
        faces.push([q[0], q[2], q[3]]);
    };
    for s in 0..m {
        for t in 0..m {
            // x = 0 (u = z, v = y), x = 1 (u = y, v = z)
            quad([(0, t, s), (0, t, s + 1), (0, t + 1, s + 1), (0, t + 1, s)]);
            quad([(m, s, t), (m, s + 1, t), (m, s + 1, t + 1), (m, s, t + 1)]);
            // y = 0 (u = x, v = z), y = 1 (u = z, v = x)
            quad([(s, 0, t), (s + 1, 0, t), (s + 1, 0, t + 1), (s, 0, t + 1)]);
            quad([(t, m, s), (t, m, s + 1), (t + 1, m, s + 1), (t + 1, m, s)]);
            // z = 0 (u = y, v = x), z = 1 (u = x, v = y)
            quad([(t, s, 0), (t, s + 1, 0), (t + 1, s + 1, 0), (t + 1, s, 0)]);
            quad([(s, t, m), (s + 1, t, m), (s + 1, t + 1, m), (s, t + 1, m)]);
        }
    }
    Piece { coords, faces }
}

/// Axis-aligned box `[lo, hi]` per axis.
pub fn cuboid(lo: &Lin3, hi: &Lin3, n: usize) -> Piece {
    let pick = |i: usize, j: usize, k: usize| -> Lin3 {
        [
            if i == 0 { lo[0].clone() } else { hi[0].clone() },
            if j == 0 { lo[1].clone() } else { hi[1].clone() },
            if k == 0 { lo[2].clone() } else { hi[2].clone() },
        ]
    };
    let corners = [
        [[pick(0, 0, 0), pick(0, 0, 1)], [pick(0, 1, 0), pick(0, 1, 1)]],
        [[pick(1, 0, 0), pick(1, 0, 1)], [pick(1, 1, 0), pick(1, 1, 1)]],
    ];
    hexahedron(&corners, n)
}

/// Cross-section of a tapered box at one end of its span.
pub struct Section {
    /// Center in the two cross-section axes.
    pub center: [Lin; 2],
    /// Full extents in the two cross-section axes.
    pub size: [Lin; 2],
}

/// Box whose cross-section varies linearly along `span_axis` between
/// `low` (at coordinate `span.0`) and `high` (at `span.1`, with
/// `span.1 > span.0` at default parameters). Cross-section axes are the
/// remaining two axes in increasing order.
pub fn tapered_box(span_axis: usize, span: (Lin, Lin), low: &Section, high: &Section, n: usize) -> Piece {
    let cross: Vec<usize> = (0..3).filter(|&a| a != span_axis).collect();
    let corner = |end: usize, side: [usize; 2]| -> Lin3 {
        let sec = if end == 0 { low } else { high };
        let mut p = lin3_zero();
        p[span_axis] = if end == 0 { span.0.clone() } else { span.1.clone() };
        for (slot, &axis) in cross.iter().enumerate() {
            let half = &sec.size[slot] * if side[slot] == 0 { -0.5 } else { 0.5 };
            p[axis] = &sec.center[slot] + &half;
        }
        p
    };
    // Map (i, j, k) along (x, y, z) onto (end, side) along (span, cross).
    let at = |ijk: [usize; 3]| -> Lin3 {
        let end = ijk[span_axis];
        corner(end, [ijk[cross[0]], ijk[cross[1]]])
    };
    let corners = [
        [[at([0, 0, 0]), at([0, 0, 1])], [at([0, 1, 0]), at([0, 1, 1])]],
        [[at([1, 0, 0]), at([1, 0, 1])], [at([1, 1, 0]), at([1, 1, 1])]],
    ];
    hexahedron(&corners, n)
}

/// UV ellipsoid with its poles on `pole_axis`. `segments` vertices per ring,
/// `rings` latitude bands. Faces are oriented outward using `defaults`.
pub fn ellipsoid(
    center: &Lin3,
    semi_axes: &[Lin; 3],
    pole_axis: usize,
    segments: usize,
    rings: usize,
    defaults: &[f64],
) -> Piece {
    assert!(segments >= 3 && rings >= 2);
    let q = (pole_axis + 1) % 3;
    let r = (pole_axis + 2) % 3;
    let point = |cos_phi: f64, sin_phi: f64, cos_t: f64, sin_t: f64| -> Lin3 {
        let mut offset = lin3_zero();
        offset[pole_axis] = &semi_axes[pole_axis] * cos_phi;
        offset[q] = &semi_axes[q] * (sin_phi * cos_t);
        offset[r] = &semi_axes[r] * (sin_phi * sin_t);
        add3(center, &offset)
    };
    let mut coords = vec![point(1.0, 0.0, 1.0, 0.0)];
    for ring in 1..rings {
        let phi = std::f64::consts::PI * ring as f64 / rings as f64;
        for s in 0..segments {
            let theta = 2.0 * std::f64::consts::PI * s as f64 / segments as f64;
            coords.push(point(phi.cos(), phi.sin(), theta.cos(), theta.sin()));
        }
    }
    coords.push(point(-1.0, 0.0, 1.0, 0.0));
    let south = (coords.len() - 1) as u32;
    let ring_at = |ring: usize, s: usize| (1 + (ring - 1) * segments + s % segments) as u32;
    let mut faces = Vec::new();
    for s in 0..segments {
        faces.push([0, ring_at(1, s), ring_at(1, s + 1)]);
        faces.push([south, ring_at(rings - 1, s + 1), ring_at(rings - 1, s)]);
    }
    for ring in 1..rings - 1 {
        for s in 0..segments {
            let (a, b) = (ring_at(ring, s), ring_at(ring, s + 1));
            let (c, d) = (ring_at(ring + 1, s + 1), ring_at(ring + 1, s));
            faces.push([a, d, c]);
            faces.push([a, c, b]);
        }
    }
    let c0 = eval3(center, defaults);
    for f in faces.iter_mut() {
        let p = f.map(|i| eval3(&coords[i as usize], defaults));
        let e1 = crate::geom::sub(p[1], p[0]);
        let e2 = crate::geom::sub(p[2], p[0]);
        let n = crate::geom::cross(e1, e2);
        let centroid = crate::geom::scale(
            crate::geom::add(crate::geom::add(p[0], p[1]), p[2]),
            1.0 / 3.0,
        );
        if crate::geom::dot(n, crate::geom::sub(centroid, c0)) < 0.0 {
            f.swap(1, 2);
        }
    }
    Piece { coords, faces }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom;
    use crate::mesh::Mesh;

    fn bake(piece: &Piece, p: &[f64]) -> Mesh<f64> {
        Mesh::new(piece.coords.iter().map(|c| eval3(c, p)).collect(), piece.faces.clone()).unwrap()
    }

    fn signed_volume(m: &Mesh<f64>) -> f64 {
        m.faces
            .iter()
            .map(|f| {
                let [a, b, c] = f.map(|i| m.vertices[i as usize]);
                geom::dot(a, geom::cross(b, c)) / 6.0
            })
            .sum()
    }

    #[test]
    fn lin_arithmetic() {
        let a = Lin::param(0, 2.0) + Lin::param(2, 1.0);
        let b = Lin::param(0, -2.0) + Lin::param(1, 3.0);
        let s = &a + &b;
        assert_eq!(s.terms(), &[(1, 3.0), (2, 1.0)]);
        assert_eq!(s.eval(&[5.0, 1.0, 2.0f64]), 5.0);
    }

    #[test]
    fn cuboid_grid_counts_and_orientation() {
        let lo = [Lin::zero(), Lin::zero(), Lin::zero()];
        let hi = [Lin::param(0, 1.0), Lin::param(1, 1.0), Lin::param(2, 1.0)];
        for n in 2..6 {
            let piece = cuboid(&lo, &hi, n);
            assert_eq!(piece.coords.len(), n * n * n - (n - 2) * (n - 2) * (n - 2));
            assert_eq!(piece.faces.len(), 12 * (n - 1) * (n - 1));
            let m = bake(&piece, &[2.0, 3.0, 4.0]);
            assert!((signed_volume(&m) - 24.0).abs() < 1e-12, "n={n}");
        }
    }

    #[test]
    fn tapered_box_is_outward_and_closed() {
        let sec = |c: f64, s: f64| Section {
            center: [Lin::param(0, c), Lin::zero()],
            size: [Lin::param(0, s), Lin::param(0, s)],
        };
        for axis in 0..3 {
            let piece = tapered_box(axis, (Lin::zero(), Lin::param(1, 1.0)), &sec(0.0, 1.0), &sec(0.2, 0.5), 4);
            let m = bake(&piece, &[1.0, 2.0]);
            // Frustum of square sections 1 and 0.25 over length 2.
            let want = 2.0 / 3.0 * (1.0 + 0.25 + 0.5);
            assert!((signed_volume(&m) - want).abs() < 1e-12, "axis {axis}");
        }
    }

    #[test]
    fn ellipsoid_is_outward() {
        let center = [Lin::param(0, 1.0), Lin::zero(), Lin::zero()];
        let axes = [Lin::param(1, 1.0), Lin::param(1, 0.5), Lin::param(1, 2.0)];
        for pole in 0..3 {
            let piece = ellipsoid(&center, &axes, pole, 24, 12, &[0.3, 1.0]);
            assert_eq!(piece.coords.len(), 2 + 11 * 24);
            let m = bake(&piece, &[0.3, 1.0]);
            let v = signed_volume(&m);
            let exact = 4.0 / 3.0 * std::f64::consts::PI;
            assert!(v > 0.9 * exact && v < exact, "pole {pole}: {v}");
        }
    }
}
