use proptest::prelude::*;
use rand::Rng;
use semedit::deform::{
    self, apply_field, build_field, weight, DeformationField, EditConfig, WeightConfig, WeightMode, MIN_WEIGHT_SUM,
};
use semedit::encoder::Encoder;
use semedit::geom::{self, Vec3};
use semedit::mesh::Mesh;
use semedit::rng;
use semedit::templates::{self, ClassId, Distribution, Edit, Template};
use semedit::training::{augment, augmented_shape};

const ALL: [ClassId; 3] = [ClassId::Chair, ClassId::Airplane, ClassId::Humanoid];

fn random_params(template: &Template, seed: u64) -> Vec<f64> {
    let spec = template.spec();
    templates::sample_params(spec, seed, Distribution::default_for(spec.class)).unwrap()
}

/// A detail-augmented chair in the normalized frame with its rescaled
/// ground-truth parameters.
fn test_chair(template: &Template, seed: u64) -> (Mesh<f64>, Vec<f64>) {
    let p = random_params(template, rng::derive(seed, 0));
    let decoded = template.decode(&p).unwrap();
    let detailed = augment::augment(&decoded.mesh, rng::derive(seed, 1)).unwrap();
    let (mesh, tf) = detailed.normalized().unwrap();
    (mesh, templates::rescale_params(template.spec(), &p, &tf))
}

fn random_field(seed: u64, n: usize, k: usize) -> DeformationField {
    let mut r = rng::seeded(seed);
    let mut v = || -> Vec3<f64> { std::array::from_fn(|_| r.random_range(-1.0..1.0)) };
    let source: Vec<_> = (0..n).map(|_| v()).collect();
    let normals: Vec<_> = (0..n).map(|_| geom::normalized(v()).unwrap_or([0.0, 0.0, 1.0])).collect();
    let disp: Vec<_> = (0..n).map(|_| geom::scale(v(), 0.1)).collect();
    let config = WeightConfig {
        k,
        sigma: 0.3,
        ..WeightConfig::rigid()
    };
    DeformationField::new(source, normals, disp, config).unwrap()
}

fn cloud_mesh(seed: u64, n: usize) -> Mesh<f64> {
    let mut r = rng::seeded(seed);
    let vertices = (0..n).map(|_| std::array::from_fn(|_| r.random_range(-1.0..1.0))).collect();
    let normals = (0..n)
        .map(|_| geom::normalized(std::array::from_fn(|_| r.random_range(-1.0..1.0))).unwrap_or([0.0, 0.0, 1.0]))
        .collect();
    Mesh {
        vertices,
        faces: vec![[0, 1, 2]],
        normals: Some(normals),
    }
}

#[test]
fn weight_examples() {
    let rigid = WeightConfig::rigid();
    let p = [0.1, 0.2, 0.3];
    let n = [0.0, 0.0, 1.0];
    assert_eq!(weight(p, n, p, n, &rigid), 4.0);
    let w = weight(p, [1.0, 0.0, 0.0], geom::add(p, [0.0, 0.03, 0.0]), n, &rigid);
    assert!((w - (-1.0f64).exp()).abs() < 1e-12);
    assert!((w - 0.367879).abs() < 1e-6);
    let anti = weight(p, n, p, [0.0, 0.0, -1.0], &rigid);
    assert_eq!(anti, 0.0);
    let nonrigid = WeightConfig::nonrigid();
    assert_eq!(weight(p, n, [5.0, 5.0, 5.0], [0.0, 0.0, -1.0], &nonrigid), 1.0);
}

#[test]
fn default_weight_configs() {
    let r = WeightConfig::rigid();
    assert_eq!((r.k, r.mode, r.k_n, r.sigma), (8, WeightMode::Rigid, 2, 0.03));
    let n = WeightConfig::nonrigid();
    assert_eq!((n.k, n.mode), (4, WeightMode::Nonrigid));
    assert_eq!(WeightConfig::for_class(ClassId::Humanoid).mode, WeightMode::Nonrigid);
    assert_eq!(WeightConfig::for_class(ClassId::Chair).mode, WeightMode::Rigid);
    assert!(WeightConfig { k: 0, ..r }.validate().is_err());
    assert!(WeightConfig { sigma: 0.0, ..r }.validate().is_err());
}

#[test]
fn identical_parameters_give_zero_field() {
    for class in ALL {
        let t = Template::builtin(class);
        let f = random_params(&t, 3);
        let field = build_field(&t, &f, &f, WeightConfig::for_class(class)).unwrap();
        assert_eq!(field.displacements.len(), t.vertex_count());
        assert!(field.displacements.iter().all(|d| *d == [0.0; 3]));
    }
}

#[test]
fn distinct_parameters_give_nonzero_field() {
    for class in ALL {
        let t = Template::builtin(class);
        let f = random_params(&t, 4);
        for i in 0..f.len() {
            let mut g = f.clone();
            g[i] += 0.05;
            let field = build_field(&t, &f, &g, WeightConfig::for_class(class)).unwrap();
            assert!(field.displacements.iter().any(|d| *d != [0.0; 3]), "{class:?} component {i}");
        }
    }
}

#[test]
fn translation_edit_moves_every_vertex_by_t() {
    for class in ALL {
        let t = Template::builtin(class);
        let d = t.spec().d();
        let mut f = random_params(&t, 5);
        f[d..].fill(0.0);
        let shift = [0.125, -0.3, 0.07];
        let mut g = f.clone();
        g[d..].copy_from_slice(&shift);
        let field = build_field(&t, &f, &g, WeightConfig::for_class(class)).unwrap();
        assert!(field.displacements.iter().all(|&x| x == shift));

        let mut f2 = f.clone();
        f2[d..].copy_from_slice(&[0.3, 0.1, -0.2]);
        let mut g2 = f2.clone();
        g2[d] += 0.01;
        let field = build_field(&t, &f2, &g2, WeightConfig::for_class(class)).unwrap();
        let first = field.displacements[0];
        assert!(field.displacements.iter().all(|&x| x == first));
    }
}

#[test]
fn back_height_leaves_legs_exactly_fixed() {
    let t = Template::builtin(ClassId::Chair);
    let f = random_params(&t, 6);
    let g = templates::edit_params(t.spec(), &f, &[Edit::delta("back_height", 0.2)]).unwrap();
    let field = build_field(&t, &f, &g, WeightConfig::rigid()).unwrap();
    let mut legs = 0;
    for (v, d) in field.displacements.iter().enumerate() {
        if t.part_name(v).starts_with("leg") {
            legs += 1;
            assert_eq!(*d, [0.0; 3]);
        }
    }
    assert!(legs > 0);
}

#[test]
fn identity_field_is_bit_identical() {
    let t = Template::builtin(ClassId::Chair);
    let (input, f) = test_chair(&t, 1);
    let field = build_field(&t, &f, &f, WeightConfig::rigid()).unwrap();
    let out = apply_field(&field, &input);
    assert_eq!(out.vertices, input.vertices);
    assert_eq!(out.faces, input.faces);
}

#[test]
fn uniform_field_translates_exactly() {
    let mut field = random_field(2, 200, 8);
    let t = [0.01, -0.02, 0.3];
    field.displacements.iter_mut().for_each(|d| *d = t);
    let input = cloud_mesh(3, 300);
    let out = apply_field(&field, &input);
    for (a, b) in input.vertices.iter().zip(&out.vertices) {
        assert_eq!(*b, geom::add(*a, t));
    }
}

#[test]
fn single_neighbor_matches_brute_force() {
    let field = random_field(7, 500, 1);
    let input = cloud_mesh(8, 400);
    let out = apply_field(&field, &input);
    for (x, y) in input.vertices.iter().zip(&out.vertices) {
        let nearest = (0..field.source.len())
            .min_by(|&a, &b| {
                geom::dist2(field.source[a], *x)
                    .partial_cmp(&geom::dist2(field.source[b], *x))
                    .unwrap()
            })
            .unwrap();
        assert_eq!(*y, geom::add(*x, field.displacements[nearest]));
    }
}

#[test]
fn zero_weight_sum_falls_back_to_mean() {
    let source = vec![[0.0, 0.0, 0.0], [0.01, 0.0, 0.0]];
    let normals = vec![[0.0, 0.0, 1.0]; 2];
    let disp = vec![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
    let config = WeightConfig {
        k: 2,
        ..WeightConfig::rigid()
    };
    let field = DeformationField::new(source, normals, disp, config).unwrap();
    let d = field.displacement([0.0, 0.0, 0.0], [0.0, 0.0, -1.0]);
    assert!(d.iter().all(|c| c.is_finite()));
    assert!(geom::dist2(d, [0.5, 0.5, 0.0]) < 1e-24);
    // far away: Gaussian underflows below the threshold
    let far = field.displacement([5.0, 0.0, 0.0], [0.0, 0.0, 1.0]);
    assert!(weight([5.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0; 3], [0.0, 0.0, 1.0], &config) < MIN_WEIGHT_SUM);
    assert!(geom::dist2(far, [0.5, 0.5, 0.0]) < 1e-24);
}

#[test]
fn field_errors() {
    assert!(DeformationField::new(vec![], vec![], vec![], WeightConfig::rigid()).is_err());
    assert!(DeformationField::new(vec![[0.0; 3]], vec![], vec![[0.0; 3]], WeightConfig::rigid()).is_err());
    let t = Template::builtin(ClassId::Chair);
    let f = random_params(&t, 1);
    assert!(build_field(&t, &f, &f[..5], WeightConfig::rigid()).is_err());
}

#[test]
fn empty_edit_returns_input() {
    for class in ALL {
        let t = Template::builtin(class);
        let encoder = Encoder::new(t.clone(), 11);
        let config = EditConfig::for_class(class);
        for s in 0..5 {
            let normalized = augmented_shape(&t, rng::derive(20, s)).unwrap();
            let input = Mesh {
                vertices: normalized
                    .vertices
                    .iter()
                    .map(|&v| geom::add(geom::scale(v, 3.7), [10.0, -2.0, 0.5]))
                    .collect(),
                ..normalized.clone()
            };
            let encoded = deform::encode_shape(&encoder, &input, &config).unwrap();
            let out = deform::deform_encoded(&t, &input, &encoded, &[], config.weights).unwrap();
            assert_eq!(out.vertices, input.vertices);
            assert_eq!(out.faces, input.faces);
            for (a, b) in encoded.normalized.vertices.iter().zip(&normalized.vertices) {
                assert!(geom::dist2(*a, *b).sqrt() < 1e-9);
            }
            let direct = deform::edit_shape(&encoder, &input, &[], &config).unwrap();
            assert_eq!(direct.vertices, input.vertices);
        }
    }
}

#[test]
fn encoded_rotations_are_clamped() {
    let t = Template::builtin(ClassId::Humanoid);
    let mut p = t.spec().defaults();
    p[0..3].copy_from_slice(&[10.0, 0.0, 0.0]);
    let q = deform::clamp_params(&t, p.clone());
    let spec = t.spec();
    let bound = spec.params[0].bounds[1];
    assert!(geom::norm([q[0], q[1], q[2]]) <= bound + 1e-12);
    assert_eq!(&q[3..], &p[3..]);
}

#[test]
fn back_height_edit_is_local_on_test_chairs() {
    let t = Template::builtin(ClassId::Chair);
    let mut checked = 0;
    for s in 0..5 {
        let (input, f) = test_chair(&t, 100 + s);
        let g = templates::edit_params(t.spec(), &f, &[Edit::delta("back_height", 0.15)]).unwrap();
        let field = build_field(&t, &f, &g, WeightConfig::rigid()).unwrap();
        let out = apply_field(&field, &input);
        let mut back_moved = false;
        for (i, x) in input.vertices.iter().enumerate() {
            let nbrs = field.neighbors(*x);
            let moved = geom::dist2(out.vertices[i], *x).sqrt();
            if nbrs.iter().all(|&(v, _)| t.part_name(v).starts_with("leg")) {
                assert!(moved < 1e-6);
                checked += 1;
            }
            if nbrs.iter().all(|&(v, _)| t.part_name(v) == "back") && moved > 1e-3 {
                back_moved = true;
            }
        }
        assert!(back_moved);
    }
    assert!(checked > 100);
}

#[test]
fn leg_height_edit_moves_all_four_legs() {
    let t = Template::builtin(ClassId::Chair);
    let (input, f) = test_chair(&t, 9);
    let g = templates::edit_params(t.spec(), &f, &[Edit::delta("leg_height", 0.1)]).unwrap();
    let field = build_field(&t, &f, &g, WeightConfig::rigid()).unwrap();
    let out = apply_field(&field, &input);
    for leg in ["leg_front_left", "leg_front_right", "leg_back_left", "leg_back_right"] {
        let moved = input.vertices.iter().zip(&out.vertices).any(|(x, y)| {
            field.neighbors(*x).iter().all(|&(v, _)| t.part_name(v) == leg) && geom::dist2(*x, *y) > 1e-8
        });
        assert!(moved, "{leg} did not move");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn displacement_is_convex(seed in any::<u64>(), k in 1usize..12) {
        let field = random_field(seed, 100, k);
        let input = cloud_mesh(seed ^ 1, 50);
        let out = apply_field(&field, &input);
        for (x, y) in input.vertices.iter().zip(&out.vertices) {
            let bound = field
                .neighbors(*x)
                .iter()
                .map(|&(v, _)| geom::norm(field.displacements[v]))
                .fold(0.0, f64::max);
            prop_assert!(geom::norm(geom::sub(*y, *x)) <= bound + 1e-9);
        }
    }

    #[test]
    fn commutes_with_translation(seed in any::<u64>(), t in prop::array::uniform3(-2.0f64..2.0)) {
        let field = random_field(seed, 80, 6);
        let input = cloud_mesh(seed ^ 2, 40);
        let out = apply_field(&field, &input);
        let moved_field = DeformationField::new(
            field.source.iter().map(|&v| geom::add(v, t)).collect(),
            field.source_normals.clone(),
            field.displacements.clone(),
            field.config,
        )
        .unwrap();
        let moved_input = Mesh {
            vertices: input.vertices.iter().map(|&v| geom::add(v, t)).collect(),
            ..input.clone()
        };
        let moved_out = apply_field(&moved_field, &moved_input);
        for (a, b) in out.vertices.iter().zip(&moved_out.vertices) {
            prop_assert!(geom::dist2(geom::add(*a, t), *b).sqrt() < 1e-9);
        }
    }

    #[test]
    fn topology_is_preserved(seed in any::<u64>()) {
        let t = Template::builtin(ClassId::Chair);
        let (input, f) = test_chair(&t, seed);
        let g = templates::edit_params(t.spec(), &f, &[Edit::delta("seat_depth", 0.05)]).unwrap();
        let field = build_field(&t, &f, &g, WeightConfig::rigid()).unwrap();
        let out = apply_field(&field, &input);
        prop_assert_eq!(out.faces, input.faces);
        prop_assert_eq!(out.vertices.len(), input.vertices.len());
    }
}
