//! Axis-angle rotations: exponential and logarithm maps and their derivatives.
//!
//! All trigonometric ratios switch to Taylor series below
//! [`Real::small_angle`], so derivatives stay finite at the identity.

use crate::geom::{self, Mat3, Vec3};
use crate::scalar::{lit, Real};

/// Rodrigues coefficients for one angle.
struct Coeffs<T> {
    /// sin θ / θ
    a: T,
    /// (1 - cos θ) / θ²
    b: T,
    /// (dA/dθ) / θ
    c: T,
    /// (dB/dθ) / θ
    d: T,
    /// (θ - sin θ) / θ³
    e: T,
}

fn series<T: Real>(t2: T, k: [f64; 4]) -> T {
    lit::<T>(k[0]) + t2 * (lit::<T>(k[1]) + t2 * (lit::<T>(k[2]) + t2 * lit::<T>(k[3])))
}

fn coeffs<T: Real>(theta: T) -> Coeffs<T> {
    let t2 = theta * theta;
    if theta < T::small_angle() {
        Coeffs {
            a: series(t2, [1.0, -1.0 / 6.0, 1.0 / 120.0, -1.0 / 5040.0]),
            b: series(t2, [0.5, -1.0 / 24.0, 1.0 / 720.0, -1.0 / 40320.0]),
            c: series(t2, [-1.0 / 3.0, 1.0 / 30.0, -1.0 / 840.0, 1.0 / 45360.0]),
            d: series(t2, [-1.0 / 12.0, 1.0 / 180.0, -1.0 / 6720.0, 1.0 / 453600.0]),
            e: series(t2, [1.0 / 6.0, -1.0 / 120.0, 1.0 / 5040.0, -1.0 / 362880.0]),
        }
    } else {
        let (s, c) = theta.sin_cos();
        let t3 = t2 * theta;
        let t4 = t2 * t2;
        let two = lit::<T>(2.0);
        Coeffs {
            a: s / theta,
            b: (T::one() - c) / t2,
            c: (theta * c - s) / t3,
            d: (theta * s - two * (T::one() - c)) / t4,
            e: (theta - s) / t3,
        }
    }
}

/// `R(r) - I`, computed without cancellation.
pub fn exp_minus_identity<T: Real>(r: Vec3<T>) -> Mat3<T> {
    let theta = geom::norm(r);
    let k = coeffs(theta);
    let kx = geom::skew(r);
    let kx2 = geom::mat_mul(&kx, &kx);
    geom::mat_add(&geom::mat_scale(&kx, k.a), &geom::mat_scale(&kx2, k.b))
}

/// Rotation matrix of an axis-angle vector. Exactly the identity for `r = 0`.
pub fn exp<T: Real>(r: Vec3<T>) -> Mat3<T> {
    geom::mat_add(&geom::identity(), &exp_minus_identity(r))
}

/// Partial derivatives `∂R/∂r_i` for `i = 0, 1, 2`.
pub fn d_exp<T: Real>(r: Vec3<T>) -> [Mat3<T>; 3] {
    let theta = geom::norm(r);
    let k = coeffs(theta);
    let kx = geom::skew(r);
    let kx2 = geom::mat_mul(&kx, &kx);
    let mut out = [geom::mat_zero(); 3];
    for (i, slot) in out.iter_mut().enumerate() {
        let mut e = geom::zero::<T>();
        e[i] = T::one();
        let ex = geom::skew(e);
        let sym = geom::mat_add(&geom::mat_mul(&ex, &kx), &geom::mat_mul(&kx, &ex));
        let mut m = geom::mat_scale(&ex, k.a);
        m = geom::mat_add(&m, &geom::mat_scale(&sym, k.b));
        m = geom::mat_add(&m, &geom::mat_scale(&kx, k.c * r[i]));
        m = geom::mat_add(&m, &geom::mat_scale(&kx2, k.d * r[i]));
        *slot = m;
    }
    out
}

/// Right Jacobian: `exp(r + δ) ≈ exp(r) · exp(J_r(r) δ)`.
pub fn right_jacobian<T: Real>(r: Vec3<T>) -> Mat3<T> {
    let theta = geom::norm(r);
    let k = coeffs(theta);
    let kx = geom::skew(r);
    let kx2 = geom::mat_mul(&kx, &kx);
    let m = geom::mat_add(&geom::mat_scale(&kx, -k.b), &geom::mat_scale(&kx2, k.e));
    geom::mat_add(&geom::identity(), &m)
}

/// Inverse of [`right_jacobian`]. Singular at θ = π.
pub fn right_jacobian_inv<T: Real>(r: Vec3<T>) -> Mat3<T> {
    let theta = geom::norm(r);
    let f = if theta < T::small_angle() {
        series(theta * theta, [1.0 / 12.0, 1.0 / 720.0, 1.0 / 30240.0, 1.0 / 1209600.0])
    } else {
        let (s, c) = theta.sin_cos();
        T::one() / (theta * theta) - (T::one() + c) / (lit::<T>(2.0) * theta * s)
    };
    let kx = geom::skew(r);
    let kx2 = geom::mat_mul(&kx, &kx);
    let m = geom::mat_add(&geom::mat_scale(&kx, lit(0.5)), &geom::mat_scale(&kx2, f));
    geom::mat_add(&geom::identity(), &m)
}

/// Logarithm map: rotation matrix to axis-angle with angle in [0, π].
pub fn log<T: Real>(m: &Mat3<T>) -> Vec3<T> {
    let half = lit::<T>(0.5);
    let trace = m[0][0] + m[1][1] + m[2][2];
    let cos = ((trace - T::one()) * half).max(-T::one()).min(T::one());
    let s = [
        (m[2][1] - m[1][2]) * half,
        (m[0][2] - m[2][0]) * half,
        (m[1][0] - m[0][1]) * half,
    ];
    let sin = geom::norm(s);
    let theta = sin.atan2(cos);
    if theta < T::small_angle() {
        let t2 = theta * theta;
        let factor = T::one() + t2 / lit(6.0) + lit::<T>(7.0 / 360.0) * t2 * t2;
        return geom::scale(s, factor);
    }
    if cos > lit(-0.9) {
        return geom::scale(s, theta / sin);
    }
    // Near π the antisymmetric part vanishes; recover the axis from the
    // symmetric part n nᵀ = ((R + Rᵀ)/2 - cos I) / (1 - cos).
    let denom = T::one() - cos;
    let mut nn = [[T::zero(); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let id = if i == j { cos } else { T::zero() };
            nn[i][j] = ((m[i][j] + m[j][i]) * half - id) / denom;
        }
    }
    let mut best = 0;
    for i in 1..3 {
        if nn[i][i] > nn[best][best] {
            best = i;
        }
    }
    let d = nn[best][best].max(T::zero()).sqrt();
    let mut axis = [nn[0][best] / d, nn[1][best] / d, nn[2][best] / d];
    if let Some(a) = geom::normalized(axis) {
        axis = a;
    }
    if geom::dot(axis, s) < T::zero() {
        axis = geom::scale(axis, -T::one());
    }
    geom::scale(axis, theta)
}

/// `log(exp(a) · exp(b))`
pub fn compose<T: Real>(a: Vec3<T>, b: Vec3<T>) -> Vec3<T> {
    log(&geom::mat_mul(&exp(a), &exp(b)))
}

/// Angle of the relative rotation `R(a)ᵀ R(b)`.
pub fn geodesic<T: Real>(a: Vec3<T>, b: Vec3<T>) -> T {
    geom::norm(relative(a, b))
}

/// `log(R(a)ᵀ R(b))`
pub fn relative<T: Real>(a: Vec3<T>, b: Vec3<T>) -> Vec3<T> {
    log(&geom::mat_mul(&geom::transpose(&exp(a)), &exp(b)))
}

/// Rescales `r` so its angle does not exceed `bound`.
pub fn clamp_angle<T: Real>(r: Vec3<T>, bound: T) -> Vec3<T> {
    let theta = geom::norm(r);
    if theta > bound {
        geom::scale(r, bound / theta)
    } else {
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn max_abs(a: &Mat3<f64>, b: &Mat3<f64>) -> f64 {
        let mut m: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                m = m.max((a[i][j] - b[i][j]).abs());
            }
        }
        m
    }

    #[test]
    fn exp_of_zero_is_exact_identity() {
        assert_eq!(exp([0.0f64; 3]), geom::identity::<f64>());
        assert_eq!(exp([0.0f32; 3]), geom::identity::<f32>());
    }

    #[test]
    fn exp_about_z_matches_planar_rotation() {
        let t = 0.7f64;
        let r = exp([0.0, 0.0, t]);
        let want = [[t.cos(), -t.sin(), 0.0], [t.sin(), t.cos(), 0.0], [0.0, 0.0, 1.0]];
        assert!(max_abs(&r, &want) < 1e-15);
    }

    #[test]
    fn log_inverts_exp_across_angle_range() {
        for &t in &[0.0, 1e-9, 1e-3, 0.019, 0.021, 0.5, 2.0, 2.8, 3.1, 3.13] {
            let axis = geom::normalized([0.3f64, -0.5, 0.8]).unwrap();
            let r = geom::scale(axis, t);
            let back = log(&exp(r));
            for i in 0..3 {
                assert!((back[i] - r[i]).abs() < 1e-9, "angle {t}: {back:?} vs {r:?}");
            }
        }
    }

    #[test]
    fn d_exp_matches_central_differences() {
        let h = 1e-6;
        for r in [[0.0f64, 0.0, 0.0], [1e-4, -2e-4, 5e-5], [0.3, -0.2, 0.9], [1.5, 0.7, -1.1]] {
            let d = d_exp(r);
            for i in 0..3 {
                let mut rp = r;
                let mut rm = r;
                rp[i] += h;
                rm[i] -= h;
                let (ep, em) = (exp(rp), exp(rm));
                for a in 0..3 {
                    for b in 0..3 {
                        let fd = (ep[a][b] - em[a][b]) / (2.0 * h);
                        assert!((fd - d[i][a][b]).abs() < 1e-8, "r={r:?} i={i}");
                    }
                }
            }
        }
    }

    #[test]
    fn right_jacobian_pair_is_inverse() {
        for r in [[0.0, 0.0, 0.0], [0.01, 0.0, 0.005], [0.4, -1.0, 0.3]] {
            let p = geom::mat_mul(&right_jacobian(r), &right_jacobian_inv(r));
            assert!(max_abs(&p, &geom::identity()) < 1e-12);
        }
    }

    #[test]
    fn same_axis_composition_adds_angles() {
        let c = compose([0.0, 0.0, 0.4f64], [0.0, 0.0, 0.9]);
        assert!((c[2] - 1.3).abs() < 1e-12 && c[0].abs() < 1e-12 && c[1].abs() < 1e-12);
    }

    #[test]
    fn geodesic_of_z_rotation_is_its_angle() {
        let g = geodesic([0.0f64; 3], [0.0, 0.0, 1.2]);
        assert!((g - 1.2).abs() < 1e-12);
    }
}
