//! Analytic parametric templates.
//!
//! A [`TemplateSpec`] names the semantic parameters of a class; compiling it
//! gives a [`Template`] whose decoder maps a parameter vector (semantic values
//! followed by a global translation) to a mesh with fixed topology, so vertex
//! `i` denotes the same template location for every parameter vector.

mod airplane;
mod chair;
mod humanoid;
pub mod rig;

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution as _, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geom::{self, Vec3};
use crate::mesh::{Mesh, NormalizeTransform};
use crate::rng;
use crate::scalar::{lit, Real};
use crate::so3;

pub use humanoid::Skeleton;
use rig::{eval3, Lin3};

/// Half-width of the range translations are sampled from.
pub const TRANSLATION_RANGE: f64 = 0.05;
/// Scale bounds are `[SCALE_LO, SCALE_HI] · default`.
pub const SCALE_LO: f64 = 0.3;
pub const SCALE_HI: f64 = 2.5;
/// Largest joint rotation angle.
pub const ROTATION_BOUND: f64 = 2.0 * std::f64::consts::FRAC_PI_3;
/// Standard deviation of Gaussian joint-rotation components (radians).
pub const GAUSSIAN_ROTATION_SIGMA: f64 = 0.3;
/// Standard deviation of Gaussian log shape scales.
pub const GAUSSIAN_LOG_SCALE_SIGMA: f64 = 0.15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassId {
    Chair,
    Airplane,
    Humanoid,
}

impl ClassId {
    pub const ALL: [ClassId; 3] = [ClassId::Chair, ClassId::Airplane, ClassId::Humanoid];

    pub fn as_str(self) -> &'static str {
        match self {
            ClassId::Chair => "chair",
            ClassId::Airplane => "airplane",
            ClassId::Humanoid => "humanoid",
        }
    }
}

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ClassId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ClassId::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown class `{s}` (expected chair, airplane or humanoid)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamKind {
    Scale,
    Rotation,
    Translation,
}

impl ParamKind {
    pub fn arity(self) -> usize {
        match self {
            ParamKind::Scale => 1,
            ParamKind::Rotation | ParamKind::Translation => 3,
        }
    }
}

/// One named semantic parameter.
///
/// For scales `bounds` is the allowed interval; for rotations `bounds[1]` is
/// the largest angle and `bounds[0]` is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamDescriptor {
    pub name: String,
    pub kind: ParamKind,
    /// Scale value of the reference shape; zero for rotations.
    pub default: f64,
    pub bounds: [f64; 2],
}

impl ParamDescriptor {
    pub fn scale(name: &str, default: f64) -> Self {
        Self {
            name: name.into(),
            kind: ParamKind::Scale,
            default,
            bounds: [SCALE_LO * default, SCALE_HI * default],
        }
    }

    pub fn rotation(name: &str) -> Self {
        Self {
            name: name.into(),
            kind: ParamKind::Rotation,
            default: 0.0,
            bounds: [0.0, ROTATION_BOUND],
        }
    }

    pub fn arity(&self) -> usize {
        self.kind.arity()
    }
}

/// Tessellation constants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Resolution {
    /// Vertices along each edge of a box face.
    pub box_grid: usize,
    pub sphere_segments: usize,
    pub sphere_rings: usize,
    pub limb_segments: usize,
    pub limb_rings: usize,
}

impl Default for Resolution {
    fn default() -> Self {
        Self {
            box_grid: 4,
            sphere_segments: 24,
            sphere_rings: 12,
            limb_segments: 12,
            limb_rings: 8,
        }
    }
}

/// Semantic parameter metadata of one template class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplateSpec {
    pub class: ClassId,
    #[serde(default)]
    pub resolution: Resolution,
    pub params: Vec<ParamDescriptor>,
}

/// Location of a parameter inside a flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Slot<'a> {
    pub offset: usize,
    pub kind: ParamKind,
    pub descriptor: Option<&'a ParamDescriptor>,
}

pub const TRANSLATION_NAME: &str = "translation";

impl TemplateSpec {
    pub fn builtin(class: ClassId) -> Self {
        let params = match class {
            ClassId::Chair => chair::descriptors(),
            ClassId::Airplane => airplane::descriptors(),
            ClassId::Humanoid => humanoid::descriptors(),
        };
        Self {
            class,
            resolution: Resolution::default(),
            params,
        }
    }

    /// Number of semantic values.
    pub fn d(&self) -> usize {
        self.params.iter().map(ParamDescriptor::arity).sum()
    }

    /// Length of a full parameter vector (semantic values plus translation).
    pub fn len(&self) -> usize {
        self.d() + 3
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn offsets(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.params.len());
        let mut o = 0;
        for p in &self.params {
            out.push(o);
            o += p.arity();
        }
        out
    }

    pub fn names(&self) -> Vec<String> {
        self.params
            .iter()
            .map(|p| p.name.clone())
            .chain(std::iter::once(TRANSLATION_NAME.to_string()))
            .collect()
    }

    pub fn slot(&self, name: &str) -> Result<Slot<'_>> {
        if name == TRANSLATION_NAME {
            return Ok(Slot {
                offset: self.d(),
                kind: ParamKind::Translation,
                descriptor: None,
            });
        }
        let offsets = self.offsets();
        self.params
            .iter()
            .zip(offsets)
            .find(|(p, _)| p.name == name)
            .map(|(p, offset)| Slot {
                offset,
                kind: p.kind,
                descriptor: Some(p),
            })
            .ok_or_else(|| Error::UnknownParam {
                name: name.into(),
                valid: self.names(),
            })
    }

    /// Kind of every entry of a full parameter vector.
    pub fn kinds(&self) -> Vec<ParamKind> {
        let mut out = Vec::with_capacity(self.len());
        for p in &self.params {
            out.extend(std::iter::repeat_n(p.kind, p.arity()));
        }
        out.extend([ParamKind::Translation; 3]);
        out
    }

    /// Reference shape: default scales, zero rotations and translation.
    pub fn defaults(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        for p in &self.params {
            match p.kind {
                ParamKind::Scale => out.push(p.default),
                _ => out.extend([0.0; 3]),
            }
        }
        out.extend([0.0; 3]);
        out
    }

    /// Checks descriptor invariants and that the names match the class
    /// geometry, which addresses parameters by position.
    pub fn validate(&self) -> Result<()> {
        let builtin = Self::builtin(self.class);
        let got: Vec<_> = self.params.iter().map(|p| (&p.name, p.kind)).collect();
        let want: Vec<_> = builtin.params.iter().map(|p| (&p.name, p.kind)).collect();
        if got != want {
            return Err(Error::Config(format!(
                "{} template expects parameters {:?}",
                self.class,
                builtin.params.iter().map(|p| p.name.as_str()).collect::<Vec<_>>()
            )));
        }
        for p in &self.params {
            let [lo, hi] = p.bounds;
            let ok = match p.kind {
                ParamKind::Scale => 0.0 < lo && lo < hi && p.default > 0.0,
                ParamKind::Rotation => lo == 0.0 && hi > 0.0 && hi <= std::f64::consts::PI,
                ParamKind::Translation => false,
            };
            if !ok {
                return Err(Error::Config(format!(
                    "parameter `{}` has invalid bounds [{lo}, {hi}]",
                    p.name
                )));
            }
        }
        let r = &self.resolution;
        if r.box_grid < 2 || r.sphere_segments < 3 || r.sphere_rings < 2 || r.limb_segments < 3 || r.limb_rings < 2 {
            return Err(Error::Config("resolution constants too small".into()));
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("spec serializes");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("spec serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }
}

/// Parameter vector tagged with its class, as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub class: ClassId,
    pub values: Vec<f64>,
}

/// Decoder output.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticMesh<T> {
    pub mesh: Mesh<T>,
    /// Index into [`Template::part_names`] for every vertex.
    pub part_labels: Vec<u16>,
}

#[derive(Debug, Clone)]
enum Geometry {
    /// Every coordinate is linear in the semantic parameters.
    Rigid(Vec<Lin3>),
    Skinned(Skeleton),
}

/// Output of a class builder.
struct Built {
    geometry: Geometry,
    faces: Vec<[u32; 3]>,
    labels: Vec<u16>,
    part_names: Vec<&'static str>,
}

/// Compiled template.
#[derive(Debug, Clone)]
pub struct Template {
    spec: TemplateSpec,
    geometry: Geometry,
    faces: Vec<[u32; 3]>,
    labels: Vec<u16>,
    part_names: Vec<&'static str>,
    hash: String,
}

impl Template {
    pub fn new(spec: TemplateSpec) -> Result<Self> {
        spec.validate()?;
        let built = match spec.class {
            ClassId::Chair => chair::build(&spec),
            ClassId::Airplane => airplane::build(&spec),
            ClassId::Humanoid => humanoid::build(&spec),
        };
        let hash = spec.hash();
        Ok(Self {
            spec,
            geometry: built.geometry,
            faces: built.faces,
            labels: built.labels,
            part_names: built.part_names,
            hash,
        })
    }

    pub fn builtin(class: ClassId) -> Self {
        Self::new(TemplateSpec::builtin(class)).expect("builtin spec is valid")
    }

    pub fn spec(&self) -> &TemplateSpec {
        &self.spec
    }

    pub fn class(&self) -> ClassId {
        self.spec.class
    }

    pub fn spec_hash(&self) -> &str {
        &self.hash
    }

    pub fn vertex_count(&self) -> usize {
        self.labels.len()
    }

    pub fn faces(&self) -> &[[u32; 3]] {
        &self.faces
    }

    pub fn part_labels(&self) -> &[u16] {
        &self.labels
    }

    pub fn part_names(&self) -> &[&'static str] {
        &self.part_names
    }

    pub fn part_name(&self, vertex: usize) -> &'static str {
        self.part_names[self.labels[vertex] as usize]
    }

    pub fn skeleton(&self) -> Option<&Skeleton> {
        match &self.geometry {
            Geometry::Skinned(s) => Some(s),
            Geometry::Rigid(_) => None,
        }
    }

    /// Rejects vectors the decoder is not defined for.
    pub fn check_params<T: Real>(&self, p: &[T]) -> Result<()> {
        if p.len() != self.spec.len() {
            return Err(Error::Invalid(format!(
                "{} parameter vector must have {} values, got {}",
                self.spec.class,
                self.spec.len(),
                p.len()
            )));
        }
        if p.iter().any(|x| !x.is_finite()) {
            return Err(Error::Invalid("parameter vector has non-finite values".into()));
        }
        for (desc, offset) in self.spec.params.iter().zip(self.spec.offsets()) {
            match desc.kind {
                ParamKind::Scale => {
                    if !(p[offset] > T::zero()) {
                        return Err(Error::OutOfBounds {
                            name: desc.name.clone(),
                            message: format!("scale must be positive, got {}", p[offset]),
                        });
                    }
                }
                ParamKind::Rotation => {
                    let angle = geom::norm([p[offset], p[offset + 1], p[offset + 2]]).as_f64();
                    if angle > desc.bounds[1] * (1.0 + 1e-9) {
                        return Err(Error::OutOfBounds {
                            name: desc.name.clone(),
                            message: format!("rotation angle {angle} exceeds {}", desc.bounds[1]),
                        });
                    }
                }
                ParamKind::Translation => {}
            }
        }
        Ok(())
    }

    pub fn decode<T: Real>(&self, p: &[T]) -> Result<SyntheticMesh<T>> {
        self.check_params(p)?;
        Ok(SyntheticMesh {
            mesh: Mesh {
                vertices: self.decode_vertices(p),
                faces: self.faces.clone(),
                normals: None,
            },
            part_labels: self.labels.clone(),
        })
    }

    /// Vertex positions without argument checks; `p` must have the right
    /// length.
    pub fn decode_vertices<T: Real>(&self, p: &[T]) -> Vec<Vec3<T>> {
        let d = self.spec.d();
        let t = [p[d], p[d + 1], p[d + 2]];
        match &self.geometry {
            Geometry::Rigid(coords) => coords.iter().map(|c| geom::add(eval3(c, p), t)).collect(),
            Geometry::Skinned(s) => s.decode(p).into_iter().map(|v| geom::add(v, t)).collect(),
        }
    }

    /// Mesh with the decoded vertices and this template's faces.
    pub fn mesh_from_vertices<T: Real>(&self, vertices: Vec<Vec3<T>>) -> Mesh<T> {
        Mesh {
            vertices,
            faces: self.faces.clone(),
            normals: None,
        }
    }

    /// Dense `3V × (d+3)` matrix of vertex-coordinate partials; row
    /// `3i + a` is coordinate `a` of vertex `i`.
    pub fn jacobian(&self, p: &[f64]) -> Result<Array2<f64>> {
        self.check_params(p)?;
        let n = self.vertex_count();
        let d = self.spec.d();
        let mut j = Array2::zeros((3 * n, d + 3));
        match &self.geometry {
            Geometry::Rigid(coords) => {
                for (i, c) in coords.iter().enumerate() {
                    for a in 0..3 {
                        for &(k, coeff) in c[a].terms() {
                            j[[3 * i + a, k]] = coeff;
                        }
                    }
                }
            }
            Geometry::Skinned(s) => s.jacobian_into(p, &mut j),
        }
        for i in 0..n {
            for a in 0..3 {
                j[[3 * i + a, d + a]] = 1.0;
            }
        }
        Ok(j)
    }

    /// `Jᵀ g`: pulls per-vertex gradients back to the parameters.
    pub fn vjp<T: Real>(&self, p: &[T], grad_vertices: &[Vec3<T>]) -> Vec<T> {
        let d = self.spec.d();
        let mut out = vec![T::zero(); d + 3];
        match &self.geometry {
            Geometry::Rigid(coords) => {
                for (c, g) in coords.iter().zip(grad_vertices) {
                    for a in 0..3 {
                        for &(k, coeff) in c[a].terms() {
                            out[k] += lit::<T>(coeff) * g[a];
                        }
                    }
                }
            }
            Geometry::Skinned(s) => s.vjp_into(p, grad_vertices, &mut out),
        }
        for g in grad_vertices {
            for a in 0..3 {
                out[d + a] += g[a];
            }
        }
        out
    }
}

/// Parameter sampling distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Distribution {
    Uniform,
    Gaussian,
}

impl Distribution {
    pub fn default_for(class: ClassId) -> Self {
        match class {
            ClassId::Humanoid => Distribution::Gaussian,
            _ => Distribution::Uniform,
        }
    }
}

/// Draws a random parameter vector inside the spec bounds.
///
/// Uniform: scales uniform in their bounds, rotations uniform in the ball of
/// the angle bound. Gaussian (humanoid only): rotation components
/// `N(0, 0.3²)` and log shape scales `N(log default, 0.15²)`, clipped.
/// Translation is uniform in `[-0.05, 0.05]³` either way.
pub fn sample_params(spec: &TemplateSpec, seed: u64, distribution: Distribution) -> Result<Vec<f64>> {
    if distribution == Distribution::Gaussian && spec.class != ClassId::Humanoid {
        return Err(Error::Invalid(format!(
            "gaussian sampling is only defined for the humanoid template, not {}",
            spec.class
        )));
    }
    let mut r = rng::seeded(seed);
    let rot = Normal::new(0.0, GAUSSIAN_ROTATION_SIGMA).expect("valid sigma");
    let log_scale = Normal::new(0.0, GAUSSIAN_LOG_SCALE_SIGMA).expect("valid sigma");
    let mut out = Vec::with_capacity(spec.len());
    for p in &spec.params {
        let [lo, hi] = p.bounds;
        match (p.kind, distribution) {
            (ParamKind::Scale, Distribution::Uniform) => out.push(r.random_range(lo..=hi)),
            (ParamKind::Scale, Distribution::Gaussian) => {
                let v = p.default * log_scale.sample(&mut r).exp();
                out.push(v.clamp(lo, hi));
            }
            (ParamKind::Rotation, Distribution::Uniform) => {
                let v = loop {
                    let c: [f64; 3] = std::array::from_fn(|_| r.random_range(-1.0..=1.0));
                    if geom::norm2(c) <= 1.0 {
                        break geom::scale(c, hi);
                    }
                };
                out.extend(v);
            }
            (ParamKind::Rotation, Distribution::Gaussian) => {
                let c: [f64; 3] = std::array::from_fn(|_| rot.sample(&mut r));
                out.extend(so3::clamp_angle(c, hi));
            }
            (ParamKind::Translation, _) => unreachable!("translation is not a descriptor"),
        }
    }
    for _ in 0..3 {
        out.push(r.random_range(-TRANSLATION_RANGE..=TRANSLATION_RANGE));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EditOp {
    Set,
    Delta,
}

/// A scalar applied to one component, or a whole 3-vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EditValue {
    Scalar(f64),
    Vector([f64; 3]),
}

/// One parameter edit.
///
/// Scales: `set`/`delta` then clamp to bounds. Rotations: `set` overwrites
/// (one component, or the whole axis-angle vector); `delta` composes
/// `log(R_edit · R_current)` where `R_edit` is the rotation by `value` about
/// axis `component`, or the axis-angle `value` itself. Rotation results are
/// clamped to the angle bound. Translations: `set`/`delta`, unclamped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Edit {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub component: Option<usize>,
    pub op: EditOp,
    pub value: EditValue,
}

impl Edit {
    pub fn set(name: &str, value: f64) -> Self {
        Self {
            name: name.into(),
            component: None,
            op: EditOp::Set,
            value: EditValue::Scalar(value),
        }
    }

    pub fn delta(name: &str, value: f64) -> Self {
        Self {
            op: EditOp::Delta,
            ..Self::set(name, value)
        }
    }

    pub fn rotate(name: &str, axis_angle: [f64; 3]) -> Self {
        Self {
            name: name.into(),
            component: None,
            op: EditOp::Delta,
            value: EditValue::Vector(axis_angle),
        }
    }
}

pub fn edit_params(spec: &TemplateSpec, p: &[f64], edits: &[Edit]) -> Result<Vec<f64>> {
    let mut out = p.to_vec();
    for e in edits {
        let slot = spec.slot(&e.name)?;
        let bad = |message: String| Error::OutOfBounds {
            name: e.name.clone(),
            message,
        };
        if let Some(c) = e.component {
            if c >= slot.kind.arity() {
                return Err(bad(format!("component {c} out of range for a {:?} parameter", slot.kind)));
            }
        }
        let o = slot.offset;
        match (slot.kind, e.value) {
            (ParamKind::Scale, EditValue::Scalar(v)) => {
                let desc = slot.descriptor.expect("scale has a descriptor");
                let raw = match e.op {
                    EditOp::Set => v,
                    EditOp::Delta => out[o] + v,
                };
                if !raw.is_finite() {
                    return Err(bad("non-finite value".into()));
                }
                out[o] = raw.clamp(desc.bounds[0], desc.bounds[1]);
            }
            (ParamKind::Scale, EditValue::Vector(_)) => {
                return Err(bad("scale edits take a single value".into()));
            }
            (ParamKind::Rotation, value) => {
                let bound = slot.descriptor.expect("rotation has a descriptor").bounds[1];
                let current = [out[o], out[o + 1], out[o + 2]];
                let next = match (e.op, value, e.component) {
                    (EditOp::Set, EditValue::Vector(v), None) => v,
                    (EditOp::Set, EditValue::Scalar(v), Some(c)) => {
                        let mut r = current;
                        r[c] = v;
                        r
                    }
                    (EditOp::Delta, EditValue::Vector(v), None) => so3::compose(v, current),
                    (EditOp::Delta, EditValue::Scalar(v), Some(c)) => {
                        let mut axis = [0.0; 3];
                        axis[c] = v;
                        so3::compose(axis, current)
                    }
                    _ => {
                        return Err(bad(
                            "rotation edits take a scalar with a component or a 3-vector without one".into(),
                        ))
                    }
                };
                if !geom::is_finite(next) {
                    return Err(bad("non-finite value".into()));
                }
                out[o..o + 3].copy_from_slice(&so3::clamp_angle(next, bound));
            }
            (ParamKind::Translation, value) => {
                let updates: Vec<(usize, f64)> = match (value, e.component) {
                    (EditValue::Vector(v), None) => v.into_iter().enumerate().collect(),
                    (EditValue::Scalar(v), Some(c)) => vec![(c, v)],
                    _ => return Err(bad("translation edits take a scalar with a component or a 3-vector".into())),
                };
                for (a, v) in updates {
                    if !v.is_finite() {
                        return Err(bad("non-finite value".into()));
                    }
                    out[o + a] = match e.op {
                        EditOp::Set => v,
                        EditOp::Delta => out[o + a] + v,
                    };
                }
            }
        }
    }
    Ok(out)
}

/// Parameters of the shape `tf.apply(decode(p))`. Every template is
/// homogeneous of degree one in its scales, so scaling the shape scales them
/// and the translation maps like a point.
pub fn rescale_params<T: Real>(spec: &TemplateSpec, p: &[T], tf: &NormalizeTransform<T>) -> Vec<T> {
    let mut out = p.to_vec();
    let kinds = spec.kinds();
    for (v, k) in out.iter_mut().zip(&kinds) {
        if *k == ParamKind::Scale {
            *v *= tf.scale;
        }
    }
    let d = spec.d();
    let t = tf.apply([p[d], p[d + 1], p[d + 2]]);
    out[d..d + 3].copy_from_slice(&t);
    out
}
