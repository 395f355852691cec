//! Deformation transfer from a pair of decoded synthetic shapes to a
//! realistic mesh.
//!
//! Each input vertex moves by a weighted average of the displacements of its
//! `k` nearest source-synthetic vertices, so detail that the template does
//! not model is carried along unchanged.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoder::Encoder;
use crate::error::{Error, Result};
use crate::geom::{self, Vec3};
use crate::mesh::{self, Mesh, SpatialIndex};
use crate::templates::{self, ClassId, Edit, ParamKind, Template};

/// Weight below which [`apply_field`] falls back to the plain mean.
pub const MIN_WEIGHT_SUM: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightMode {
    /// `(1 + ⟨n_x, n_v⟩)^k_n · exp(−‖v − x‖² / σ²)`
    Rigid,
    /// Constant 1.
    Nonrigid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightConfig {
    pub k: usize,
    pub mode: WeightMode,
    pub k_n: i32,
    pub sigma: f64,
}

impl WeightConfig {
    pub fn rigid() -> Self {
        Self {
            k: 8,
            mode: WeightMode::Rigid,
            k_n: 2,
            sigma: 0.03,
        }
    }

    pub fn nonrigid() -> Self {
        Self {
            k: 4,
            mode: WeightMode::Nonrigid,
            k_n: 2,
            sigma: 0.03,
        }
    }

    /// Rigid weights for man-made classes, constant weights for bodies.
    pub fn for_class(class: ClassId) -> Self {
        match class {
            ClassId::Humanoid => Self::nonrigid(),
            _ => Self::rigid(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::Config("sigma must be positive".into()));
        }
        if self.k_n < 0 {
            return Err(Error::Config("k_n must be non-negative".into()));
        }
        Ok(())
    }
}

/// Weight of synthetic vertex `v` (normal `n_v`) for input point `x`
/// (normal `n_x`).
pub fn weight(x: Vec3<f64>, n_x: Vec3<f64>, v: Vec3<f64>, n_v: Vec3<f64>, config: &WeightConfig) -> f64 {
    match config.mode {
        WeightMode::Nonrigid => 1.0,
        WeightMode::Rigid => {
            let align = (1.0 + geom::dot(n_x, n_v)).max(0.0);
            align.powi(config.k_n) * (-geom::dist2(v, x) / (config.sigma * config.sigma)).exp()
        }
    }
}

/// Displacements of the source synthetic shape, ready to be queried.
#[derive(Debug, Clone)]
pub struct DeformationField {
    pub source: Vec<Vec3<f64>>,
    pub source_normals: Vec<Vec3<f64>>,
    pub displacements: Vec<Vec3<f64>>,
    pub config: WeightConfig,
    index: SpatialIndex<f64>,
}

impl DeformationField {
    /// Field from explicit source vertices, normals and displacements.
    pub fn new(
        source: Vec<Vec3<f64>>,
        source_normals: Vec<Vec3<f64>>,
        displacements: Vec<Vec3<f64>>,
        config: WeightConfig,
    ) -> Result<Self> {
        config.validate()?;
        if source.is_empty() {
            return Err(Error::Invalid("deformation field has no source vertices".into()));
        }
        if source_normals.len() != source.len() || displacements.len() != source.len() {
            return Err(Error::Invalid(format!(
                "field has {} sources, {} normals and {} displacements",
                source.len(),
                source_normals.len(),
                displacements.len()
            )));
        }
        let index = SpatialIndex::build(&source);
        Ok(Self {
            source,
            source_normals,
            displacements,
            config,
            index,
        })
    }

    /// The `k` nearest source vertices of `x` as `(index, squared distance)`.
    pub fn neighbors(&self, x: Vec3<f64>) -> Vec<(usize, f64)> {
        self.index.knn(x, self.config.k).expect("index is non-empty and k ≥ 1")
    }

    /// Displacement `D_r(x)` of one point with normal `n_x`: the weighted
    /// mean of the neighbour displacements, evaluated as an offset from the
    /// nearest one so that equal displacements reproduce exactly.
    pub fn displacement(&self, x: Vec3<f64>, n_x: Vec3<f64>) -> Vec3<f64> {
        let nbrs = self.neighbors(x);
        let base = self.displacements[nbrs[0].0];
        let mut sum = geom::zero::<f64>();
        let mut total = 0.0;
        for &(i, _) in &nbrs {
            let w = weight(x, n_x, self.source[i], self.source_normals[i], &self.config);
            sum = geom::add(sum, geom::scale(geom::sub(self.displacements[i], base), w));
            total += w;
        }
        if total >= MIN_WEIGHT_SUM {
            return geom::add(base, geom::scale(sum, 1.0 / total));
        }
        let mut mean = geom::zero::<f64>();
        for &(i, _) in &nbrs {
            mean = geom::add(mean, geom::sub(self.displacements[i], base));
        }
        geom::add(base, geom::scale(mean, 1.0 / nbrs.len() as f64))
    }

    /// Per-vertex displacements of `input` (same order as its vertices).
    pub fn displacements_for(&self, input: &Mesh<f64>) -> Vec<Vec3<f64>> {
        let normals = match self.config.mode {
            WeightMode::Rigid => input.normals_or_compute(),
            WeightMode::Nonrigid => vec![geom::zero(); input.vertices.len()],
        };
        input
            .vertices
            .par_iter()
            .zip(&normals)
            .map(|(&x, &n)| self.displacement(x, n))
            .collect()
    }
}

/// Decodes `f` and `f_edited` and records the per-vertex displacement.
/// Shape and translation parts are differenced separately, so a pure
/// translation edit displaces every vertex by exactly the same vector.
pub fn build_field(template: &Template, f: &[f64], f_edited: &[f64], config: WeightConfig) -> Result<DeformationField> {
    template.check_params(f)?;
    template.check_params(f_edited)?;
    let d = template.spec().d();
    let untranslated = |p: &[f64]| {
        let mut q = p.to_vec();
        q[d..].fill(0.0);
        template.decode_vertices(&q)
    };
    let shape = untranslated(f);
    let shape_edited = untranslated(f_edited);
    let dt = [f_edited[d] - f[d], f_edited[d + 1] - f[d + 1], f_edited[d + 2] - f[d + 2]];
    let displacements = shape_edited
        .iter()
        .zip(&shape)
        .map(|(&b, &a)| geom::add(geom::sub(b, a), dt))
        .collect();
    let source = template.mesh_from_vertices(template.decode_vertices(f));
    let normals = source.compute_vertex_normals();
    DeformationField::new(source.vertices, normals, displacements, config)
}

/// `x' = x + D_r(x)` for every vertex; faces are copied verbatim.
pub fn apply_field(field: &DeformationField, input: &Mesh<f64>) -> Mesh<f64> {
    let d = field.displacements_for(input);
    Mesh {
        vertices: input.vertices.iter().zip(&d).map(|(&x, &t)| geom::add(x, t)).collect(),
        faces: input.faces.clone(),
        normals: None,
    }
}

/// Settings of [`edit_shape`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EditConfig {
    /// Points sampled from the input for the encoder.
    pub points: usize,
    pub seed: u64,
    pub weights: WeightConfig,
}

impl EditConfig {
    pub fn for_class(class: ClassId) -> Self {
        Self {
            points: 512,
            seed: 0,
            weights: WeightConfig::for_class(class),
        }
    }
}

/// Input normalized for the encoder, with the transform and the encoding.
#[derive(Debug, Clone)]
pub struct EncodedShape {
    pub normalized: Mesh<f64>,
    pub transform: mesh::NormalizeTransform<f64>,
    /// Parameters in the normalized frame, rotations clamped to their bounds.
    pub params: Vec<f64>,
}

/// Normalizes `input`, samples it and encodes the sample.
pub fn encode_shape(encoder: &Encoder, input: &Mesh<f64>, config: &EditConfig) -> Result<EncodedShape> {
    input.validate()?;
    let (mut normalized, transform) = input.normalized()?;
    if normalized.normals.is_none() {
        normalized.normals = Some(normalized.compute_vertex_normals());
    }
    let cloud = mesh::sample_points(&normalized, config.points, config.seed)?;
    let points: Vec<Vec3<f32>> = cloud.points.iter().map(|&p| geom::cast3(p)).collect();
    let raw = encoder.encode(&points)?;
    let params = clamp_params(&encoder.template, raw.iter().map(|&x| x as f64).collect());
    Ok(EncodedShape {
        normalized,
        transform,
        params,
    })
}

/// Clamps rotation angles to their bounds; other values pass through.
pub fn clamp_params(template: &Template, mut p: Vec<f64>) -> Vec<f64> {
    let spec = template.spec();
    for (desc, o) in spec.params.iter().zip(spec.offsets()) {
        if desc.kind == ParamKind::Rotation {
            let r = crate::so3::clamp_angle([p[o], p[o + 1], p[o + 2]], desc.bounds[1]);
            p[o..o + 3].copy_from_slice(&r);
        }
    }
    p
}

/// Applies `edits` to an encoded shape and deforms the original mesh.
/// Displacements are computed in the normalized frame and scaled back, so
/// the input's vertices are only ever offset.
pub fn deform_encoded(
    template: &Template,
    input: &Mesh<f64>,
    encoded: &EncodedShape,
    edits: &[Edit],
    weights: WeightConfig,
) -> Result<Mesh<f64>> {
    if input.vertices.len() != encoded.normalized.vertices.len() {
        return Err(Error::Invalid("encoded shape does not belong to this mesh".into()));
    }
    let edited = templates::edit_params(template.spec(), &encoded.params, edits)?;
    let field = build_field(template, &encoded.params, &edited, weights)?;
    let d = field.displacements_for(&encoded.normalized);
    let inv = 1.0 / encoded.transform.scale;
    Ok(Mesh {
        vertices: input
            .vertices
            .iter()
            .zip(&d)
            .map(|(&x, &t)| geom::add(x, geom::scale(t, inv)))
            .collect(),
        faces: input.faces.clone(),
        normals: None,
    })
}

/// Encode, edit, build the field and deform, end to end.
pub fn edit_shape(encoder: &Encoder, input: &Mesh<f64>, edits: &[Edit], config: &EditConfig) -> Result<Mesh<f64>> {
    let encoded = encode_shape(encoder, input, config)?;
    deform_encoded(&encoder.template, input, &encoded, edits, config.weights)
}
