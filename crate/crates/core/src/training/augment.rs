//! Procedural detail for decoded templates, standing in for realistic
//! shapes: one midpoint subdivision, bevelled creases, low-amplitude
//! surface displacement and a few small attached boxes.

use std::collections::HashMap;

use rand::Rng;

use crate::geom::{self, Vec3};
use crate::mesh::{self, Mesh};
use crate::rng;

/// Splits every triangle into four at its edge midpoints.
pub fn subdivide(mesh: &Mesh<f64>) -> Mesh<f64> {
    let mut vertices = mesh.vertices.clone();
    let mut midpoints: HashMap<(u32, u32), u32> = HashMap::new();
    let mut mid = |a: u32, b: u32, vertices: &mut Vec<Vec3<f64>>| {
        let key = (a.min(b), a.max(b));
        *midpoints.entry(key).or_insert_with(|| {
            let m = geom::scale(geom::add(vertices[a as usize], vertices[b as usize]), 0.5);
            vertices.push(m);
            (vertices.len() - 1) as u32
        })
    };
    let mut faces = Vec::with_capacity(mesh.faces.len() * 4);
    for &[a, b, c] in &mesh.faces {
        let ab = mid(a, b, &mut vertices);
        let bc = mid(b, c, &mut vertices);
        let ca = mid(c, a, &mut vertices);
        faces.extend([[a, ab, ca], [ab, b, bc], [ca, bc, c], [ab, bc, ca]]);
    }
    Mesh {
        vertices,
        faces,
        normals: None,
    }
}

/// Pulls crease vertices inward along their normals by `amount` times the
/// crease sharpness `1 − min dot(n_vertex, n_face)`.
pub fn bevel(mesh: &mut Mesh<f64>, amount: f64) {
    let normals = mesh.compute_vertex_normals();
    let mut sharpness = vec![0.0f64; mesh.vertices.len()];
    for f in 0..mesh.faces.len() {
        let Some(n) = geom::normalized(mesh.face_cross(f)) else {
            continue;
        };
        for &v in &mesh.faces[f] {
            let s = 1.0 - geom::dot(n, normals[v as usize]);
            sharpness[v as usize] = sharpness[v as usize].max(s);
        }
    }
    for ((v, n), s) in mesh.vertices.iter_mut().zip(&normals).zip(&sharpness) {
        *v = geom::sub(*v, geom::scale(*n, amount * s.min(1.0)));
    }
}

/// Sum of random plane waves, in `[-1, 1]`.
struct Waves {
    waves: Vec<(Vec3<f64>, f64)>,
}

impl Waves {
    fn new(r: &mut impl Rng, count: usize, frequency: (f64, f64)) -> Self {
        let waves = (0..count)
            .map(|_| {
                let dir = loop {
                    let c: Vec3<f64> = std::array::from_fn(|_| r.random_range(-1.0..=1.0));
                    if let Some(d) = geom::normalized(c).filter(|_| geom::norm2(c) <= 1.0) {
                        break d;
                    }
                };
                let k = r.random_range(frequency.0..frequency.1);
                (geom::scale(dir, k), r.random_range(0.0..std::f64::consts::TAU))
            })
            .collect();
        Self { waves }
    }

    fn eval(&self, x: Vec3<f64>) -> f64 {
        let n = self.waves.len() as f64;
        self.waves.iter().map(|(k, phase)| (geom::dot(*k, x) + phase).sin()).sum::<f64>() / n
    }
}

fn displace(mesh: &mut Mesh<f64>, waves: &Waves, amplitude: f64) {
    let normals = mesh.compute_vertex_normals();
    for (v, n) in mesh.vertices.iter_mut().zip(&normals) {
        let h = amplitude * waves.eval(*v);
        *v = geom::add(*v, geom::scale(*n, h));
    }
}

/// Closed axis-aligned box with outward winding.
pub fn small_box(center: Vec3<f64>, half: Vec3<f64>) -> Mesh<f64> {
    let vertices = (0..8)
        .map(|i| {
            std::array::from_fn(|a| {
                let sign = if (i >> a) & 1 == 1 { 1.0 } else { -1.0 };
                center[a] + sign * half[a]
            })
        })
        .collect();
    let faces = vec![
        [0, 2, 3],
        [0, 3, 1],
        [4, 5, 7],
        [4, 7, 6],
        [0, 1, 5],
        [0, 5, 4],
        [2, 6, 7],
        [2, 7, 3],
        [0, 4, 6],
        [0, 6, 2],
        [1, 3, 7],
        [1, 7, 5],
    ];
    Mesh {
        vertices,
        faces,
        normals: None,
    }
}

fn extent(mesh: &Mesh<f64>) -> f64 {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for v in &mesh.vertices {
        for a in 0..3 {
            lo[a] = lo[a].min(v[a]);
            hi[a] = hi[a].max(v[a]);
        }
    }
    geom::norm(geom::sub(hi, lo))
}

/// Deterministic detail augmentation of a decoded template mesh.
pub fn augment(mesh: &Mesh<f64>, seed: u64) -> crate::Result<Mesh<f64>> {
    let mut r = rng::seeded(seed);
    let size = extent(mesh);
    let mut out = subdivide(mesh);
    bevel(&mut out, size * r.random_range(0.005..0.015));
    let waves = Waves::new(&mut r, 6, (8.0 / size, 30.0 / size));
    displace(&mut out, &waves, size * r.random_range(0.002..0.006));
    let features = r.random_range(2..=4);
    let anchors = mesh::sample_points(mesh, features, r.random())?;
    for p in &anchors.points {
        let half: Vec3<f64> = std::array::from_fn(|_| size * r.random_range(0.008..0.025));
        out.append(&small_box(*p, half));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subdivision_quadruples_faces_and_keeps_area() {
        let b = small_box([0.0; 3], [0.5, 1.0, 1.5]);
        let s = subdivide(&b);
        assert_eq!(s.faces.len(), 48);
        assert_eq!(s.vertices.len(), 8 + 18);
        assert!((s.total_area() - b.total_area()).abs() < 1e-12);
        assert!((b.total_area() - 2.0 * (1.0 * 2.0 + 1.0 * 3.0 + 2.0 * 3.0)).abs() < 1e-12);
    }

    #[test]
    fn box_winding_is_outward() {
        let b = small_box([1.0, 2.0, 3.0], [0.1, 0.2, 0.3]);
        for f in 0..b.faces.len() {
            let [a, bb, c] = b.triangle(f);
            let centroid = geom::scale(geom::add(geom::add(a, bb), c), 1.0 / 3.0);
            assert!(geom::dot(b.face_cross(f), geom::sub(centroid, [1.0, 2.0, 3.0])) > 0.0);
        }
    }

    #[test]
    fn augment_is_deterministic_and_close() {
        let b = small_box([0.0; 3], [0.3, 0.2, 0.1]);
        let a1 = augment(&b, 3).unwrap();
        assert_eq!(a1, augment(&b, 3).unwrap());
        assert_ne!(a1, augment(&b, 4).unwrap());
        let size = extent(&b);
        let sub = subdivide(&b);
        for (x, y) in a1.vertices.iter().zip(&sub.vertices) {
            assert!(geom::dist2(*x, *y).sqrt() < 0.03 * size);
        }
    }
}
