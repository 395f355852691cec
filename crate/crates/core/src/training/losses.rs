use rand::Rng;

use crate::error::{Error, Result};
use crate::geom::{self, Vec3};
use crate::mesh::{self, Mesh, SurfaceSamples};
use crate::rng;
use crate::scalar::{lit, Real};
use crate::so3;
use crate::templates::{ParamKind, TemplateSpec};

/// Largest rotation angle drawn by [`sample_edit`].
pub const EDIT_ROTATION_ANGLE: f64 = std::f64::consts::FRAC_PI_6;

fn triple<T: Real>(p: &[T], o: usize) -> Vec3<T> {
    [p[o], p[o + 1], p[o + 2]]
}

/// Squared L2 over scale and translation components plus the squared
/// geodesic angle of every rotation, with its gradient in `pred`.
pub fn loss_semantic<T: Real>(spec: &TemplateSpec, pred: &[T], gt: &[T]) -> Result<(T, Vec<T>)> {
    if pred.len() != spec.len() || gt.len() != spec.len() {
        return Err(Error::Invalid(format!(
            "semantic loss needs {} values, got {} and {}",
            spec.len(),
            pred.len(),
            gt.len()
        )));
    }
    let two = lit::<T>(2.0);
    let mut loss = T::zero();
    let mut grad = vec![T::zero(); pred.len()];
    let kinds = spec.kinds();
    let mut i = 0;
    while i < kinds.len() {
        if kinds[i] == ParamKind::Rotation {
            let (l, g) = geodesic_sq(triple(pred, i), triple(gt, i));
            loss += l;
            grad[i..i + 3].copy_from_slice(&g);
            i += 3;
        } else {
            let e = pred[i] - gt[i];
            loss += e * e;
            grad[i] = two * e;
            i += 1;
        }
    }
    Ok((loss, grad))
}

/// `θ²` of `R(gt)ᵀ R(pred)` and its gradient `2 J_r(pred)ᵀ φ`, where
/// `φ = log(R(gt)ᵀ R(pred))`.
fn geodesic_sq<T: Real>(pred: Vec3<T>, gt: Vec3<T>) -> (T, [T; 3]) {
    let phi = so3::relative(gt, pred);
    let g = geom::mat_t_vec(&so3::right_jacobian(pred), phi);
    (geom::norm2(phi), geom::scale(g, lit(2.0)))
}

/// Sum of squared per-vertex distances and its gradient `2(ṽ − v)`.
pub fn loss_reconstruction<T: Real>(pred: &[Vec3<T>], gt: &[Vec3<T>]) -> Result<(T, Vec<Vec3<T>>)> {
    if pred.len() != gt.len() {
        return Err(Error::Invalid(format!(
            "reconstruction loss needs matching vertex counts, got {} and {}",
            pred.len(),
            gt.len()
        )));
    }
    let mut loss = T::zero();
    let grad = pred
        .iter()
        .zip(gt)
        .map(|(&a, &b)| {
            let e = geom::sub(a, b);
            loss += geom::norm2(e);
            geom::scale(e, lit(2.0))
        })
        .collect();
    Ok((loss, grad))
}

/// Chamfer distance between `sample_count` fresh surface samples of `pred`
/// and the realistic cloud, with the gradient in `pred`'s vertices (sample
/// locations and correspondences held fixed).
pub fn loss_similarity<T: Real>(
    pred: &Mesh<T>,
    realistic: &[Vec3<T>],
    sample_count: usize,
    seed: u64,
) -> Result<(T, Vec<Vec3<T>>)> {
    let samples = SurfaceSamples::draw(pred, sample_count, seed)?;
    loss_similarity_at(pred, realistic, &samples)
}

/// [`loss_similarity`] at given sample locations.
pub fn loss_similarity_at<T: Real>(
    pred: &Mesh<T>,
    realistic: &[Vec3<T>],
    samples: &SurfaceSamples,
) -> Result<(T, Vec<Vec3<T>>)> {
    if realistic.is_empty() {
        return Err(Error::Invalid("similarity loss against an empty cloud".into()));
    }
    let points = samples.positions(pred);
    let matches = mesh::chamfer_with_matches(&points, realistic)?;
    let grad_points = matches.grad_a(&points, realistic);
    let mut grad = vec![geom::zero::<T>(); pred.vertices.len()];
    samples.scatter_gradient(pred, &grad_points, &mut grad);
    Ok((matches.value, grad))
}

/// One sampled edit of a single semantic parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SampledEdit {
    /// Overwrite scale component `index` with `value`.
    Scale { index: usize, value: f64 },
    /// Left-compose the rotation at `offset` with `rotation`.
    Rotation { offset: usize, rotation: Vec3<f64> },
}

/// Picks one descriptor uniformly. A scale is resampled uniformly in its
/// bounds; a rotation is composed with a rotation about a uniform random
/// axis by an angle uniform in `[−π/6, π/6]`.
pub fn sample_edit(spec: &TemplateSpec, seed: u64) -> SampledEdit {
    let mut r = rng::seeded(seed);
    let k = r.random_range(0..spec.params.len());
    let desc = &spec.params[k];
    let offset = spec.offsets()[k];
    match desc.kind {
        ParamKind::Rotation => {
            let axis = loop {
                let c: Vec3<f64> = std::array::from_fn(|_| r.random_range(-1.0..=1.0));
                let n2 = geom::norm2(c);
                if n2 <= 1.0 && n2 > 1e-6 {
                    break geom::scale(c, 1.0 / n2.sqrt());
                }
            };
            let angle = r.random_range(-EDIT_ROTATION_ANGLE..=EDIT_ROTATION_ANGLE);
            SampledEdit::Rotation {
                offset,
                rotation: geom::scale(axis, angle),
            }
        }
        _ => SampledEdit::Scale {
            index: offset,
            value: r.random_range(desc.bounds[0]..=desc.bounds[1]),
        },
    }
}

impl SampledEdit {
    pub fn apply<T: Real>(&self, p: &[T]) -> Vec<T> {
        let mut out = p.to_vec();
        match *self {
            SampledEdit::Scale { index, value } => out[index] = lit(value),
            SampledEdit::Rotation { offset, rotation } => {
                let r = so3::compose(geom::cast3(rotation), triple(p, offset));
                out[offset..offset + 3].copy_from_slice(&r);
            }
        }
        out
    }

    /// Pulls a gradient in the edited vector back to the original `p`.
    pub fn vjp<T: Real>(&self, p: &[T], grad_edited: &[T]) -> Vec<T> {
        let mut out = grad_edited.to_vec();
        match *self {
            SampledEdit::Scale { index, .. } => out[index] = T::zero(),
            SampledEdit::Rotation { offset, rotation } => {
                // r' = log(E exp(r)) ⇒ ∂r'/∂r = J_r(r')⁻¹ J_r(r).
                let r = triple(p, offset);
                let edited = so3::compose(geom::cast3(rotation), r);
                let m = geom::mat_mul(&so3::right_jacobian_inv(edited), &so3::right_jacobian(r));
                let g = geom::mat_t_vec(&m, triple(grad_edited, offset));
                out[offset..offset + 3].copy_from_slice(&g);
            }
        }
        out
    }

    /// Offsets of the components this edit changes.
    pub fn components(&self) -> std::ops::Range<usize> {
        match *self {
            SampledEdit::Scale { index, .. } => index..index + 1,
            SampledEdit::Rotation { offset, .. } => offset..offset + 3,
        }
    }
}
