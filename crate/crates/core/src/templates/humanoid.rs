//! Articulated humanoid: ellipsoid body segments skinned to an eight-joint
//! skeleton (shoulders, elbows, hips, knees) with linear blend skinning.
//!
//! Frame: y up (feet at 0), x towards the body's left, z forward; the rest
//! pose is a T-pose. Rest geometry and joint positions are linear in the
//! three shape scales, so shape is applied before posing.
//!
//! A bone's world transform is `G_b(y) = G_parent(y + (R_b - I)(y - J_b))`
//! and a vertex moves by `x + Σ w_b (G_b(x) - x)`. Both forms reduce to the
//! identity exactly when the rotations are zero, which keeps unaffected
//! vertices bit-identical under a joint rotation.

use ndarray::Array2;

use super::rig::{add3, ellipsoid, eval3, lin3_zero, Lin, Lin3, Piece};
use super::{Built, Geometry, ParamDescriptor, TemplateSpec};
use crate::geom::{self, Mat3, Vec3};
use crate::scalar::{lit, Real};
use crate::so3;

pub const JOINT_NAMES: [&str; 8] = [
    "left_shoulder",
    "left_elbow",
    "right_shoulder",
    "right_elbow",
    "left_hip",
    "left_knee",
    "right_hip",
    "right_knee",
];
pub const HEIGHT: usize = 24;
pub const WIDTH: usize = 25;
pub const LIMB_LENGTH: usize = 26;

pub const PART_NAMES: [&str; 10] = [
    "torso",
    "head",
    "left_upper_arm",
    "left_forearm",
    "right_upper_arm",
    "right_forearm",
    "left_thigh",
    "left_shin",
    "right_thigh",
    "right_shin",
];

/// Reference body dimensions multiplied by the unit shape scales.
const BODY_HEIGHT: f64 = 1.0;
const BODY_WIDTH: f64 = 0.36;
const LIMB: f64 = 0.5;
/// Half-width of the band around a joint over which weights blend.
pub const BLEND_RADIUS: f64 = 0.05;

pub(super) fn descriptors() -> Vec<ParamDescriptor> {
    let mut out: Vec<_> = JOINT_NAMES.iter().map(|n| ParamDescriptor::rotation(n)).collect();
    out.extend(["height", "width", "limb_length"].map(|n| ParamDescriptor::scale(n, 1.0)));
    out
}

#[derive(Debug, Clone)]
pub struct Bone {
    pub name: &'static str,
    pub parent: Option<usize>,
    /// Pivot, shared with the parent.
    pub joint: Lin3,
    /// Offset of the joint rotation in the parameter vector.
    pub rotation: Option<usize>,
    /// Unit direction from the joint into this bone, at rest.
    pub axis: Vec3<f64>,
}

/// Rest geometry, skeleton and skinning weights.
#[derive(Debug, Clone)]
pub struct Skeleton {
    rest: Vec<Lin3>,
    bones: Vec<Bone>,
    /// Non-zero `(bone, weight)` pairs per vertex.
    weights: Vec<Vec<(usize, f64)>>,
    d: usize,
}

fn h(c: f64) -> Lin {
    Lin::param(HEIGHT, c * BODY_HEIGHT)
}

fn w(c: f64) -> Lin {
    Lin::param(WIDTH, c * BODY_WIDTH)
}

fn l(c: f64) -> Lin {
    Lin::param(LIMB_LENGTH, c * LIMB)
}

fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

pub(super) fn build(spec: &TemplateSpec) -> Built {
    let r = spec.resolution;
    let defaults = spec.defaults();
    let shoulder_y = l(1.0) + h(0.32);
    let mut bones = vec![Bone {
        name: "torso",
        parent: None,
        joint: lin3_zero(),
        rotation: None,
        axis: [0.0, 1.0, 0.0],
    }];
    let mut pieces: Vec<(Piece, usize)> = Vec::new();
    pieces.push((
        ellipsoid(
            &[Lin::zero(), l(1.0) + h(0.17), Lin::zero()],
            &[w(0.5), h(0.2), w(0.28)],
            1,
            r.sphere_segments,
            r.sphere_rings,
            &defaults,
        ),
        0,
    ));
    pieces.push((
        ellipsoid(
            &[Lin::zero(), l(1.0) + h(0.47), Lin::zero()],
            &[h(0.09), h(0.11), h(0.1)],
            1,
            r.sphere_segments,
            r.sphere_rings,
            &defaults,
        ),
        0,
    ));
    let limb = |center: Lin3, semi: [Lin; 3], pole: usize| {
        ellipsoid(&center, &semi, pole, r.limb_segments, r.limb_rings, &defaults)
    };
    // Arms, left (+x) then right.
    for (k, side) in [1.0, -1.0].into_iter().enumerate() {
        let shoulder = [w(0.5 * side), shoulder_y.clone(), Lin::zero()];
        let elbow = add3(&shoulder, &[l(0.34 * side), Lin::zero(), Lin::zero()]);
        let upper = bones.len();
        bones.push(Bone {
            name: PART_NAMES[2 + 2 * k],
            parent: Some(0),
            joint: shoulder.clone(),
            rotation: Some(3 * (2 * k)),
            axis: [side, 0.0, 0.0],
        });
        bones.push(Bone {
            name: PART_NAMES[3 + 2 * k],
            parent: Some(upper),
            joint: elbow.clone(),
            rotation: Some(3 * (2 * k + 1)),
            axis: [side, 0.0, 0.0],
        });
        pieces.push((
            limb(
                add3(&shoulder, &[l(0.17 * side), Lin::zero(), Lin::zero()]),
                [l(0.17), w(0.125), w(0.125)],
                0,
            ),
            upper,
        ));
        pieces.push((
            limb(
                add3(&elbow, &[l(0.17 * side), Lin::zero(), Lin::zero()]),
                [l(0.17), w(0.1), w(0.1)],
                0,
            ),
            upper + 1,
        ));
    }
    // Legs, left then right.
    for (k, side) in [1.0, -1.0].into_iter().enumerate() {
        let hip = [w(0.25 * side), l(1.0), Lin::zero()];
        let knee = [w(0.25 * side), l(0.5), Lin::zero()];
        let thigh = bones.len();
        bones.push(Bone {
            name: PART_NAMES[6 + 2 * k],
            parent: Some(0),
            joint: hip,
            rotation: Some(3 * (4 + 2 * k)),
            axis: [0.0, -1.0, 0.0],
        });
        bones.push(Bone {
            name: PART_NAMES[7 + 2 * k],
            parent: Some(thigh),
            joint: knee,
            rotation: Some(3 * (5 + 2 * k)),
            axis: [0.0, -1.0, 0.0],
        });
        pieces.push((limb([w(0.25 * side), l(0.75), Lin::zero()], [w(0.18), l(0.25), w(0.18)], 1), thigh));
        pieces.push((limb([w(0.25 * side), l(0.25), Lin::zero()], [w(0.14), l(0.25), w(0.14)], 1), thigh + 1));
    }

    let mut all = Piece::default();
    let mut labels = Vec::new();
    let mut owner = Vec::new();
    for (part, (piece, bone)) in pieces.into_iter().enumerate() {
        let range = all.append(piece);
        labels.extend(std::iter::repeat_n(part as u16, range.len()));
        owner.extend(std::iter::repeat_n(bone, range.len()));
    }
    let weights = all
        .coords
        .iter()
        .zip(&owner)
        .map(|(c, &b)| skin(&bones, b, eval3(c, &defaults), &defaults))
        .collect();
    Built {
        geometry: Geometry::Skinned(Skeleton {
            rest: all.coords,
            bones,
            weights,
            d: spec.d(),
        }),
        faces: all.faces,
        labels,
        part_names: PART_NAMES.to_vec(),
    }
}

/// Weights of a vertex owned by `bone`: blend across whichever adjacent
/// joint is nearest, by signed distance along the child bone's axis.
fn skin(bones: &[Bone], bone: usize, x: Vec3<f64>, defaults: &[f64]) -> Vec<(usize, f64)> {
    let mut candidates: Vec<(usize, usize)> = Vec::new();
    if let Some(parent) = bones[bone].parent {
        candidates.push((parent, bone));
    }
    for (c, b) in bones.iter().enumerate() {
        if b.parent == Some(bone) {
            candidates.push((bone, c));
        }
    }
    let nearest = candidates.into_iter().min_by(|a, b| {
        let da = geom::dist2(x, eval3(&bones[a.1].joint, defaults));
        let db = geom::dist2(x, eval3(&bones[b.1].joint, defaults));
        da.total_cmp(&db)
    });
    let Some((parent, child)) = nearest else {
        return vec![(bone, 1.0)];
    };
    let j = eval3(&bones[child].joint, defaults);
    let s = geom::dot(geom::sub(x, j), bones[child].axis);
    let wc = smoothstep((s + BLEND_RADIUS) / (2.0 * BLEND_RADIUS));
    [(parent, 1.0 - wc), (child, wc)]
        .into_iter()
        .filter(|&(_, w)| w != 0.0)
        .collect()
}

/// World transform of every bone as `y ↦ A y + c`, with partials over the
/// semantic parameters.
struct Pose<T> {
    a: Vec<Mat3<T>>,
    c: Vec<Vec3<T>>,
    /// `da[b][q]`, `dc[b][q]`; `None` where identically zero.
    da: Vec<Vec<Option<Mat3<T>>>>,
    dc: Vec<Vec<Option<Vec3<T>>>>,
}

fn mat_vec_add<T: Real>(acc: Option<Vec3<T>>, v: Vec3<T>) -> Option<Vec3<T>> {
    Some(match acc {
        Some(a) => geom::add(a, v),
        None => v,
    })
}

impl Skeleton {
    pub fn bones(&self) -> &[Bone] {
        &self.bones
    }

    pub fn weights(&self, vertex: usize) -> &[(usize, f64)] {
        &self.weights[vertex]
    }

    pub fn bone_index(&self, name: &str) -> Option<usize> {
        self.bones.iter().position(|b| b.name == name)
    }

    /// Bone driven by the named joint rotation.
    pub fn bone_of_joint(&self, joint: &str) -> Option<usize> {
        let k = JOINT_NAMES.iter().position(|&n| n == joint)?;
        self.bones.iter().position(|b| b.rotation == Some(3 * k))
    }

    /// `bone` and every bone below it.
    pub fn chain(&self, bone: usize) -> Vec<usize> {
        let mut out = vec![bone];
        let mut i = 0;
        while i < out.len() {
            let b = out[i];
            out.extend((0..self.bones.len()).filter(|&c| self.bones[c].parent == Some(b)));
            i += 1;
        }
        out
    }

    pub fn joint_position<T: Real>(&self, bone: usize, p: &[T]) -> Vec3<T> {
        eval3(&self.bones[bone].joint, p)
    }

    pub fn rest_vertices<T: Real>(&self, p: &[T]) -> Vec<Vec3<T>> {
        self.rest.iter().map(|c| eval3(c, p)).collect()
    }

    fn rotation<T: Real>(&self, bone: usize, p: &[T]) -> Option<Vec3<T>> {
        self.bones[bone].rotation.map(|o| [p[o], p[o + 1], p[o + 2]])
    }

    /// Posed vertices before translation.
    pub fn decode<T: Real>(&self, p: &[T]) -> Vec<Vec3<T>> {
        let joints: Vec<Vec3<T>> = (0..self.bones.len()).map(|b| self.joint_position(b, p)).collect();
        let e: Vec<Option<Mat3<T>>> = (0..self.bones.len())
            .map(|b| self.rotation(b, p).map(so3::exp_minus_identity))
            .collect();
        let apply = |mut b: usize, mut y: Vec3<T>| -> Vec3<T> {
            loop {
                if let Some(e) = &e[b] {
                    y = geom::add(y, geom::mat_vec(e, geom::sub(y, joints[b])));
                }
                match self.bones[b].parent {
                    Some(parent) => b = parent,
                    None => return y,
                }
            }
        };
        self.rest
            .iter()
            .zip(&self.weights)
            .map(|(c, ws)| {
                let x = eval3(c, p);
                let mut v = x;
                for &(b, wt) in ws {
                    let moved = geom::sub(apply(b, x), x);
                    v = geom::add(v, geom::scale(moved, lit(wt)));
                }
                v
            })
            .collect()
    }

    fn pose<T: Real>(&self, p: &[T]) -> Pose<T> {
        let n = self.bones.len();
        let d = self.d;
        let mut pose = Pose {
            a: Vec::with_capacity(n),
            c: Vec::with_capacity(n),
            da: Vec::with_capacity(n),
            dc: Vec::with_capacity(n),
        };
        for b in 0..n {
            let Some(parent) = self.bones[b].parent else {
                pose.a.push(geom::identity());
                pose.c.push(geom::zero());
                pose.da.push(vec![None; d]);
                pose.dc.push(vec![None; d]);
                continue;
            };
            let r = self.rotation(b, p).unwrap_or([T::zero(); 3]);
            let rot = so3::exp(r);
            let e = so3::exp_minus_identity(r);
            let dr = so3::d_exp(r);
            let j = self.joint_position(b, p);
            let ap = pose.a[parent];
            let cp = pose.c[parent];
            let a = geom::mat_mul(&ap, &rot);
            let ej = geom::mat_vec(&e, j);
            let c = geom::sub(cp, geom::mat_vec(&ap, ej));
            let mut da = vec![None; d];
            let mut dc = vec![None; d];
            for q in 0..d {
                let mut dq: Option<Mat3<T>> = None;
                let mut cq: Option<Vec3<T>> = pose.dc[parent][q];
                if let Some(dap) = pose.da[parent][q] {
                    dq = Some(geom::mat_mul(&dap, &rot));
                    cq = mat_vec_add(cq, geom::scale(geom::mat_vec(&dap, ej), -T::one()));
                }
                if let Some(o) = self.bones[b].rotation {
                    if (o..o + 3).contains(&q) {
                        let local = geom::mat_mul(&ap, &dr[q - o]);
                        dq = Some(match dq {
                            Some(m) => geom::mat_add(&m, &local),
                            None => local,
                        });
                        cq = mat_vec_add(cq, geom::scale(geom::mat_vec(&local, j), -T::one()));
                    }
                }
                let dj: Vec3<T> = std::array::from_fn(|k| lit(self.bones[b].joint[k].coeff(q)));
                if dj != [T::zero(); 3] {
                    let term = geom::mat_vec(&ap, geom::mat_vec(&e, dj));
                    cq = mat_vec_add(cq, geom::scale(term, -T::one()));
                }
                da[q] = dq;
                dc[q] = cq;
            }
            pose.a.push(a);
            pose.c.push(c);
            pose.da.push(da);
            pose.dc.push(dc);
        }
        pose
    }

    /// Fills the semantic columns of a dense Jacobian.
    pub(super) fn jacobian_into(&self, p: &[f64], jac: &mut Array2<f64>) {
        let pose = self.pose(p);
        for (i, (c, ws)) in self.rest.iter().zip(&self.weights).enumerate() {
            let x = eval3(c, p);
            let wsum: f64 = ws.iter().map(|&(_, w)| w).sum();
            for q in 0..self.d {
                let dx: Vec3<f64> = std::array::from_fn(|k| c[k].coeff(q));
                let mut col = geom::scale(dx, 1.0 - wsum);
                for &(b, wt) in ws {
                    let mut t = geom::mat_vec(&pose.a[b], dx);
                    if let Some(da) = &pose.da[b][q] {
                        t = geom::add(t, geom::mat_vec(da, x));
                    }
                    if let Some(dc) = pose.dc[b][q] {
                        t = geom::add(t, dc);
                    }
                    col = geom::add(col, geom::scale(t, wt));
                }
                for k in 0..3 {
                    jac[[3 * i + k, q]] = col[k];
                }
            }
        }
    }

    /// Adds `Jᵀ g` over the semantic parameters into `out`.
    pub(super) fn vjp_into<T: Real>(&self, p: &[T], grad: &[Vec3<T>], out: &mut [T]) {
        let pose = self.pose(p);
        let nb = self.bones.len();
        // Per bone: M_b = Σ w g xᵀ and s_b = Σ w g.
        let mut m = vec![geom::mat_zero::<T>(); nb];
        let mut s = vec![geom::zero::<T>(); nb];
        for ((c, ws), g) in self.rest.iter().zip(&self.weights).zip(grad) {
            let x = eval3(c, p);
            let mut wsum = T::zero();
            let mut back = geom::zero::<T>();
            for &(b, wt) in ws {
                let wt: T = lit(wt);
                wsum += wt;
                let wg = geom::scale(*g, wt);
                for r in 0..3 {
                    for k in 0..3 {
                        m[b][r][k] += wg[r] * x[k];
                    }
                }
                s[b] = geom::add(s[b], wg);
                back = geom::add(back, geom::mat_t_vec(&pose.a[b], wg));
            }
            back = geom::add(back, geom::scale(*g, T::one() - wsum));
            for k in 0..3 {
                for &(q, coeff) in c[k].terms() {
                    out[q] += back[k] * lit::<T>(coeff);
                }
            }
        }
        for b in 0..nb {
            for q in 0..self.d {
                if let Some(da) = &pose.da[b][q] {
                    let mut acc = T::zero();
                    for r in 0..3 {
                        for k in 0..3 {
                            acc += da[r][k] * m[b][r][k];
                        }
                    }
                    out[q] += acc;
                }
                if let Some(dc) = pose.dc[b][q] {
                    out[q] += geom::dot(dc, s[b]);
                }
            }
        }
    }
}
