//! Fixed-size vector and matrix helpers over `[T; 3]`.

use crate::scalar::{cast, Real};

pub type Vec3<T> = [T; 3];
pub type Mat3<T> = [[T; 3]; 3];

#[inline]
pub fn zero<T: Real>() -> Vec3<T> {
    [T::zero(); 3]
}

#[inline]
pub fn add<T: Real>(a: Vec3<T>, b: Vec3<T>) -> Vec3<T> {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn sub<T: Real>(a: Vec3<T>, b: Vec3<T>) -> Vec3<T> {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn scale<T: Real>(a: Vec3<T>, s: T) -> Vec3<T> {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
pub fn dot<T: Real>(a: Vec3<T>, b: Vec3<T>) -> T {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn cross<T: Real>(a: Vec3<T>, b: Vec3<T>) -> Vec3<T> {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Squared Euclidean distance, summed in x, y, z order.
///
/// Every nearest-neighbour routine uses this function so indexed and
/// brute-force searches agree bit for bit.
#[inline]
pub fn dist2<T: Real>(a: Vec3<T>, b: Vec3<T>) -> T {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

#[inline]
pub fn norm2<T: Real>(a: Vec3<T>) -> T {
    dot(a, a)
}

#[inline]
pub fn norm<T: Real>(a: Vec3<T>) -> T {
    norm2(a).sqrt()
}

/// Returns `None` for (near) zero vectors.
#[inline]
pub fn normalized<T: Real>(a: Vec3<T>) -> Option<Vec3<T>> {
    let n = norm(a);
    if n > T::min_positive_value() && n.is_finite() {
        Some(scale(a, T::one() / n))
    } else {
        None
    }
}

#[inline]
pub fn is_finite<T: Real>(a: Vec3<T>) -> bool {
    a.iter().all(|x| x.is_finite())
}

#[inline]
pub fn cast3<A: Real, B: Real>(a: Vec3<A>) -> Vec3<B> {
    [cast(a[0]), cast(a[1]), cast(a[2])]
}

pub fn identity<T: Real>() -> Mat3<T> {
    let (o, z) = (T::one(), T::zero());
    [[o, z, z], [z, o, z], [z, z, o]]
}

pub fn mat_zero<T: Real>() -> Mat3<T> {
    [[T::zero(); 3]; 3]
}

/// Cross-product matrix: `skew(a) * b == cross(a, b)`.
pub fn skew<T: Real>(a: Vec3<T>) -> Mat3<T> {
    let z = T::zero();
    [[z, -a[2], a[1]], [a[2], z, -a[0]], [-a[1], a[0], z]]
}

#[inline]
pub fn mat_vec<T: Real>(m: &Mat3<T>, v: Vec3<T>) -> Vec3<T> {
    [dot(m[0], v), dot(m[1], v), dot(m[2], v)]
}

/// `mᵀ v`
#[inline]
pub fn mat_t_vec<T: Real>(m: &Mat3<T>, v: Vec3<T>) -> Vec3<T> {
    [
        m[0][0] * v[0] + m[1][0] * v[1] + m[2][0] * v[2],
        m[0][1] * v[0] + m[1][1] * v[1] + m[2][1] * v[2],
        m[0][2] * v[0] + m[1][2] * v[1] + m[2][2] * v[2],
    ]
}

pub fn mat_mul<T: Real>(a: &Mat3<T>, b: &Mat3<T>) -> Mat3<T> {
    let mut out = mat_zero();
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
        }
    }
    out
}

pub fn transpose<T: Real>(m: &Mat3<T>) -> Mat3<T> {
    let mut out = mat_zero();
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = m[j][i];
        }
    }
    out
}

pub fn mat_add<T: Real>(a: &Mat3<T>, b: &Mat3<T>) -> Mat3<T> {
    let mut out = *a;
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] += b[i][j];
        }
    }
    out
}

pub fn mat_scale<T: Real>(a: &Mat3<T>, s: T) -> Mat3<T> {
    let mut out = *a;
    for row in out.iter_mut() {
        for x in row.iter_mut() {
            *x *= s;
        }
    }
    out
}
