//! Geometry carriers and the operations the rest of the pipeline builds on:
//! normals, area-uniform surface sampling, unit-sphere normalization,
//! exact k-nearest-neighbour search and chamfer distance.

mod chamfer;
pub mod io;
mod kdtree;

use rand::Rng;

pub use chamfer::{chamfer, chamfer_brute_force, chamfer_with_matches, ChamferMatch};
pub use kdtree::SpatialIndex;

use crate::error::{Error, Result};
use crate::geom::{self, Vec3};
use crate::rng;
use crate::scalar::{cast, lit, Real};

/// Radius of the sphere every shape is scaled into before encoding.
pub const NORMALIZED_RADIUS: f64 = 0.6;

/// Normal assigned to vertices with no usable incident face.
pub const FALLBACK_NORMAL: [f64; 3] = [0.0, 0.0, 1.0];

/// Indexed triangle mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh<T> {
    pub vertices: Vec<Vec3<T>>,
    pub faces: Vec<[u32; 3]>,
    /// Unit per-vertex normals, when computed or loaded.
    pub normals: Option<Vec<Vec3<T>>>,
}

impl<T: Real> Mesh<T> {
    /// Builds a mesh after checking face indices and coordinates.
    pub fn new(vertices: Vec<Vec3<T>>, faces: Vec<[u32; 3]>) -> Result<Self> {
        let mesh = Self {
            vertices,
            faces,
            normals: None,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len();
        if let Some(i) = self.vertices.iter().position(|v| !geom::is_finite(*v)) {
            return Err(Error::Invalid(format!("vertex {i} has a non-finite coordinate")));
        }
        for (fi, f) in self.faces.iter().enumerate() {
            if f.iter().any(|&i| i as usize >= n) {
                return Err(Error::Invalid(format!(
                    "face {fi} references vertex {:?} but the mesh has {n} vertices",
                    f
                )));
            }
        }
        if let Some(normals) = &self.normals {
            if normals.len() != n {
                return Err(Error::Invalid(format!(
                    "{} normals for {n} vertices",
                    normals.len()
                )));
            }
        }
        Ok(())
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    #[inline]
    pub fn triangle(&self, face: usize) -> [Vec3<T>; 3] {
        let [a, b, c] = self.faces[face];
        [
            self.vertices[a as usize],
            self.vertices[b as usize],
            self.vertices[c as usize],
        ]
    }

    /// Twice-area-weighted face normal (unnormalized cross product).
    #[inline]
    pub fn face_cross(&self, face: usize) -> Vec3<T> {
        let [a, b, c] = self.triangle(face);
        geom::cross(geom::sub(b, a), geom::sub(c, a))
    }

    pub fn face_area(&self, face: usize) -> T {
        geom::norm(self.face_cross(face)) * lit(0.5)
    }

    /// Area-weighted vertex normals. Vertices with no non-degenerate
    /// incident face get [`FALLBACK_NORMAL`].
    pub fn compute_vertex_normals(&self) -> Vec<Vec3<T>> {
        let mut acc = vec![geom::zero::<T>(); self.vertices.len()];
        for fi in 0..self.faces.len() {
            let c = self.face_cross(fi);
            for &v in &self.faces[fi] {
                acc[v as usize] = geom::add(acc[v as usize], c);
            }
        }
        let fallback = geom::cast3(FALLBACK_NORMAL);
        acc.into_iter()
            .map(|n| geom::normalized(n).unwrap_or(fallback))
            .collect()
    }

    /// Returns the mesh with `normals` filled in.
    pub fn with_normals(mut self) -> Self {
        self.normals = Some(self.compute_vertex_normals());
        self
    }

    /// Normals if present, otherwise freshly computed ones.
    pub fn normals_or_compute(&self) -> Vec<Vec3<T>> {
        match &self.normals {
            Some(n) => n.clone(),
            None => self.compute_vertex_normals(),
        }
    }

    pub fn cast<U: Real>(&self) -> Mesh<U> {
        Mesh {
            vertices: self.vertices.iter().map(|&v| geom::cast3(v)).collect(),
            faces: self.faces.clone(),
            normals: self
                .normals
                .as_ref()
                .map(|n| n.iter().map(|&v| geom::cast3(v)).collect()),
        }
    }

    /// Rescales into the unit-radius-0.6 frame. Normals are unaffected by a
    /// positive uniform scale and translation, so they carry over.
    pub fn normalized(&self) -> Result<(Mesh<T>, NormalizeTransform<T>)> {
        let tf = NormalizeTransform::fit(&self.vertices)?;
        let mesh = Mesh {
            vertices: self.vertices.iter().map(|&v| tf.apply(v)).collect(),
            faces: self.faces.clone(),
            normals: self.normals.clone(),
        };
        Ok((mesh, tf))
    }

    pub fn total_area(&self) -> T {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    /// Appends another mesh, offsetting its face indices.
    pub fn append(&mut self, other: &Mesh<T>) {
        let base = self.vertices.len() as u32;
        self.vertices.extend_from_slice(&other.vertices);
        self.faces
            .extend(other.faces.iter().map(|f| [f[0] + base, f[1] + base, f[2] + base]));
        self.normals = None;
    }
}

/// Unordered point set, optionally with unit normals.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud<T> {
    pub points: Vec<Vec3<T>>,
    pub normals: Option<Vec<Vec3<T>>>,
}

impl<T: Real> PointCloud<T> {
    pub fn new(points: Vec<Vec3<T>>) -> Self {
        Self {
            points,
            normals: None,
        }
    }

    pub fn count(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn cast<U: Real>(&self) -> PointCloud<U> {
        PointCloud {
            points: self.points.iter().map(|&v| geom::cast3(v)).collect(),
            normals: self
                .normals
                .as_ref()
                .map(|n| n.iter().map(|&v| geom::cast3(v)).collect()),
        }
    }

    pub fn normalized(&self) -> Result<(PointCloud<T>, NormalizeTransform<T>)> {
        let tf = NormalizeTransform::fit(&self.points)?;
        Ok((
            PointCloud {
                points: self.points.iter().map(|&v| tf.apply(v)).collect(),
                normals: self.normals.clone(),
            },
            tf,
        ))
    }
}

/// `x ↦ (x - center) · scale`
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizeTransform<T> {
    pub center: Vec3<T>,
    pub scale: T,
}

impl<T: Real> NormalizeTransform<T> {
    pub fn identity() -> Self {
        Self {
            center: geom::zero(),
            scale: T::one(),
        }
    }

    /// Centers on the mean and scales the farthest point to radius 0.6.
    pub fn fit(points: &[Vec3<T>]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Invalid("cannot normalize an empty point set".into()));
        }
        let n = lit::<T>(points.len() as f64);
        let mut sum = geom::zero::<T>();
        for p in points {
            sum = geom::add(sum, *p);
        }
        let center = geom::scale(sum, T::one() / n);
        let max_r2 = points
            .iter()
            .map(|&p| geom::dist2(p, center))
            .fold(T::zero(), T::max);
        let max_r = max_r2.sqrt();
        if !(max_r > T::zero()) || !max_r.is_finite() {
            return Err(Error::Degenerate(
                "all points coincide; nothing to normalize".into(),
            ));
        }
        Ok(Self {
            center,
            scale: lit::<T>(NORMALIZED_RADIUS) / max_r,
        })
    }

    #[inline]
    pub fn apply(&self, p: Vec3<T>) -> Vec3<T> {
        geom::scale(geom::sub(p, self.center), self.scale)
    }

    #[inline]
    pub fn invert(&self, p: Vec3<T>) -> Vec3<T> {
        geom::add(geom::scale(p, T::one() / self.scale), self.center)
    }

    pub fn cast<U: Real>(&self) -> NormalizeTransform<U> {
        NormalizeTransform {
            center: geom::cast3(self.center),
            scale: cast(self.scale),
        }
    }
}

/// Face index and barycentric weights of one surface sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfacePoint {
    pub face: u32,
    pub bary: [f64; 3],
}

/// Area-uniform sample locations on a mesh, independent of its vertex
/// positions once drawn. Re-evaluating them on a deformed copy of the same
/// topology gives positions that are linear in the vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceSamples {
    pub samples: Vec<SurfacePoint>,
}

impl SurfaceSamples {
    /// Draws `count` samples: face proportional to area, then a uniform
    /// point in the triangle (`s = √u₁`, weights `(1-s, s(1-u₂), s·u₂)`).
    pub fn draw<T: Real>(mesh: &Mesh<T>, count: usize, seed: u64) -> Result<Self> {
        if count == 0 {
            return Err(Error::Invalid("sample count must be at least 1".into()));
        }
        let mut cdf = Vec::with_capacity(mesh.faces.len());
        let mut total = 0.0f64;
        for f in 0..mesh.faces.len() {
            total += mesh.face_area(f).as_f64();
            cdf.push(total);
        }
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::Degenerate(
                "mesh has no face with positive area to sample".into(),
            ));
        }
        let mut rng = rng::seeded(seed);
        let samples = (0..count)
            .map(|_| {
                let target = rng.random::<f64>() * total;
                let mut face = cdf.partition_point(|&c| c <= target);
                face = face.min(cdf.len() - 1);
                // Skip zero-area faces that share the cumulative value.
                while mesh.face_area(face).as_f64() == 0.0 && face + 1 < cdf.len() {
                    face += 1;
                }
                let s = rng.random::<f64>().sqrt();
                let u2 = rng.random::<f64>();
                SurfacePoint {
                    face: face as u32,
                    bary: [1.0 - s, s * (1.0 - u2), s * u2],
                }
            })
            .collect();
        Ok(Self { samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Sample positions on `mesh`, which must share the topology the samples
    /// were drawn on.
    pub fn positions<T: Real>(&self, mesh: &Mesh<T>) -> Vec<Vec3<T>> {
        self.samples
            .iter()
            .map(|s| {
                let [a, b, c] = mesh.triangle(s.face as usize);
                let w: [T; 3] = [lit(s.bary[0]), lit(s.bary[1]), lit(s.bary[2])];
                [
                    w[0] * a[0] + w[1] * b[0] + w[2] * c[0],
                    w[0] * a[1] + w[1] * b[1] + w[2] * c[1],
                    w[0] * a[2] + w[1] * b[2] + w[2] * c[2],
                ]
            })
            .collect()
    }

    /// Pulls per-sample gradients back onto the mesh vertices.
    pub fn scatter_gradient<T: Real>(
        &self,
        mesh: &Mesh<T>,
        grad_points: &[Vec3<T>],
        grad_vertices: &mut [Vec3<T>],
    ) {
        for (s, g) in self.samples.iter().zip(grad_points) {
            let f = mesh.faces[s.face as usize];
            for (corner, &w) in f.iter().zip(&s.bary) {
                let gv = &mut grad_vertices[*corner as usize];
                *gv = geom::add(*gv, geom::scale(*g, lit(w)));
            }
        }
    }
}

/// Area-uniform random points with interpolated unit normals.
pub fn sample_points<T: Real>(mesh: &Mesh<T>, count: usize, seed: u64) -> Result<PointCloud<T>> {
    let samples = SurfaceSamples::draw(mesh, count, seed)?;
    let points = samples.positions(mesh);
    let vertex_normals = mesh.normals_or_compute();
    let normals = samples
        .samples
        .iter()
        .map(|s| {
            let f = mesh.faces[s.face as usize];
            let mut n = geom::zero::<T>();
            for (corner, &w) in f.iter().zip(&s.bary) {
                n = geom::add(n, geom::scale(vertex_normals[*corner as usize], lit(w)));
            }
            geom::normalized(n)
                .or_else(|| geom::normalized(mesh.face_cross(s.face as usize)))
                .unwrap_or(geom::cast3(FALLBACK_NORMAL))
        })
        .collect();
    Ok(PointCloud {
        points,
        normals: Some(normals),
    })
}
