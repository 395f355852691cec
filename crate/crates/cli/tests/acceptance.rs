//! Acceptance suite: one pass/fail line per criterion.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::Rng;
use semedit::deform::{self, apply_field, build_field, DeformationField, EditConfig, WeightConfig};
use semedit::encoder::{Encoder, EncoderWeights};
use semedit::geom::{self, Vec3};
use semedit::mesh::{self, chamfer_brute_force, chamfer_with_matches, Mesh};
use semedit::rng;
use semedit::so3;
use semedit::templates::{self, ClassId, Distribution, Edit, ParamKind, Template};
use semedit::training::{self, augment, augmented_shape, BatchItem, LossWeights, RealisticSource, TrainConfig};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn random_params(template: &Template, seed: u64) -> Vec<f64> {
    let spec = template.spec();
    templates::sample_params(spec, seed, Distribution::default_for(spec.class)).unwrap()
}

fn bbox<'a>(points: impl Iterator<Item = &'a Vec3<f64>>) -> (Vec3<f64>, Vec3<f64>) {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in points {
        for a in 0..3 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    (lo, hi)
}

/// Per-part extents of 1,000 decoded chairs against their parameters.
fn decoder_oracle() -> Outcome {
    let t = Template::builtin(ClassId::Chair);
    let part = |name: &str| t.part_names().iter().position(|&n| n == name).unwrap() as u16;
    let mut worst: f64 = 0.0;
    for seed in 0..1000 {
        let p = random_params(&t, seed);
        let (bh, bd, st, sd, w, lh, ld, lw) = (p[0], p[1], p[2], p[3], p[4], p[5], p[6], p[7]);
        let v = t.decode(&p).unwrap().mesh.vertices;
        let mut check = |label: u16, want: [f64; 3]| {
            let (lo, hi) = bbox(v.iter().zip(t.part_labels()).filter(|(_, &l)| l == label).map(|(x, _)| x));
            for a in 0..3 {
                worst = worst.max((hi[a] - lo[a] - want[a]).abs());
            }
        };
        check(part("back"), [w, bh, bd]);
        check(part("seat"), [w, st, sd]);
        for leg in ["leg_front_left", "leg_front_right", "leg_back_left", "leg_back_right"] {
            check(part(leg), [lw, lh, ld]);
        }
    }
    outcome(worst < 1e-6, format!("1000 chairs, max extent error {worst:.1e} (tol 1e-6)"))
}

/// Worst column-relative error of the decoder Jacobian against central
/// differences.
fn jacobian_error(t: &Template, p: &[f64]) -> f64 {
    let jac = t.jacobian(p).unwrap();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for q in 0..p.len() {
        let mut pp = p.to_vec();
        let mut pm = p.to_vec();
        pp[q] += h;
        pm[q] -= h;
        let vp = t.decode_vertices(&pp);
        let vm = t.decode_vertices(&pm);
        let scale = (0..jac.nrows()).map(|r| jac[[r, q]].abs()).fold(1e-3, f64::max);
        for i in 0..vp.len() {
            for a in 0..3 {
                let fd = (vp[i][a] - vm[i][a]) / (2.0 * h);
                worst = worst.max((fd - jac[[3 * i + a, q]]).abs() / scale);
            }
        }
    }
    worst
}

/// Decoder Jacobians and the end-to-end training gradient against central
/// differences in 64-bit.
fn gradient_suite() -> Outcome {
    let mut jac_worst: f64 = 0.0;
    let mut columns = 0;
    for class in ClassId::ALL {
        let t = Template::builtin(class);
        for seed in 0..5 {
            let p = random_params(&t, 500 + seed);
            jac_worst = jac_worst.max(jacobian_error(&t, &p));
            columns += p.len();
        }
    }
    let mut probes = 0;
    let mut worst: f64 = 0.0;
    for class in ClassId::ALL {
        let t = Template::builtin(class);
        let d = training::build_dataset(&t, 10, RealisticSource { augmented: 5, dir: None }, 31).unwrap();
        let examples = d.train.synthetic[..1].iter().chain(&d.train.realistic[..1]);
        let batch: Vec<BatchItem<'_, f64>> = examples
            .map(|e| BatchItem {
                cloud: e.pool[..64].iter().map(|&p| geom::cast3(p)).collect(),
                labels: e.labels.as_ref(),
            })
            .collect();
        let lw = LossWeights {
            sample_count: 64,
            ..LossWeights::from(&TrainConfig::for_class(class))
        };
        let w = EncoderWeights::<f64>::init(&t, 32);
        let bg = training::batch_gradient(&w, &t, &batch, &lw, 3).unwrap();
        let total = |w: &EncoderWeights<f64>| {
            training::batch_gradient_with_samples(w, &t, &batch, &lw, 3, Some(&bg.samples))
                .unwrap()
                .losses
                .total
        };
        let analytic: Vec<Vec<f64>> = bg.grads.tensors().iter().map(|x| x.to_vec()).collect();
        let floor = 1e-9 * bg.losses.total.abs();
        let h = 1e-5;
        let mut r = rng::seeded(33);
        for (ti, tensor) in analytic.iter().enumerate() {
            for _ in 0..3 {
                let k = r.random_range(0..tensor.len());
                let mut wp = w.clone();
                wp.trainable_mut()[ti][k] += h;
                let mut wm = w.clone();
                wm.trainable_mut()[ti][k] -= h;
                let fd = (total(&wp) - total(&wm)) / (2.0 * h);
                let an = tensor[k];
                let err = ((fd - an).abs() - floor).max(0.0) / fd.abs().max(an.abs()).max(f64::MIN_POSITIVE);
                worst = worst.max(err);
                probes += 1;
            }
        }
    }
    outcome(
        jac_worst < 1e-3 && worst < 1e-3 && probes >= 200,
        format!(
            "decoder {columns} columns max rel {jac_worst:.1e}; end-to-end {probes} probes max rel {worst:.1e} (tol 1e-3, >= 200 probes)"
        ),
    )
}

/// Indexed chamfer against the brute-force reference, bit for bit.
fn chamfer_oracle() -> Outcome {
    let mut r = rng::seeded(3);
    let mut mismatches = 0;
    for _ in 0..500 {
        let n = r.random_range(1..=256);
        let m = r.random_range(1..=256);
        let a: Vec<Vec3<f32>> = (0..n).map(|_| [r.random(), r.random(), r.random()]).collect();
        let b: Vec<Vec3<f32>> = (0..m).map(|_| [r.random(), r.random(), r.random()]).collect();
        let fast = chamfer_with_matches(&a, &b).unwrap();
        let slow = chamfer_brute_force(&a, &b).unwrap();
        if fast.value.to_bits() != slow.value.to_bits() || fast != slow {
            mismatches += 1;
        }
    }
    outcome(mismatches == 0, format!("500 pairs, n <= 256, {mismatches} bitwise mismatches"))
}

/// With and without the editing branch on the full chair dataset.
fn ablation() -> Outcome {
    let t = Template::builtin(ClassId::Chair);
    let base = TrainConfig {
        eval_every: 0,
        ..TrainConfig::for_class(ClassId::Chair)
    };
    let data = training::dataset_for(&base, &t).unwrap();
    let run = |edit_branch: bool| {
        let config = TrainConfig { edit_branch, ..base.clone() };
        let out = training::train(&config, &t, &data, |_| {}).unwrap();
        out.evaluations.last().unwrap().1.fraction_at(0.02).unwrap()
    };
    let with = run(true);
    let without = run(false);
    outcome(
        with > without && with >= 0.70,
        format!(
            "{} + {} shapes, {} steps: <0.02 with branch {:.1}%, without {:.1}% (need with > without and with >= 70%)",
            base.synthetic,
            base.realistic,
            base.steps,
            100.0 * with,
            100.0 * without
        ),
    )
}

/// Empty edits on 50 inputs per class, in a non-trivial original frame.
fn identity_edit() -> Outcome {
    let mut norm_worst: f64 = 0.0;
    let mut orig_worst: f64 = 0.0;
    for class in ClassId::ALL {
        let t = Template::builtin(class);
        let encoder = Encoder::new(t.clone(), 40);
        let config = EditConfig::for_class(class);
        for s in 0..50 {
            let normalized = augmented_shape(&t, rng::derive(41, s)).unwrap();
            let input = Mesh {
                vertices: normalized
                    .vertices
                    .iter()
                    .map(|&v| geom::add(geom::scale(v, 2.5), [4.0, -1.0, 0.25]))
                    .collect(),
                ..normalized.clone()
            };
            let encoded = deform::encode_shape(&encoder, &input, &config).unwrap();
            let field = build_field(&t, &encoded.params, &encoded.params, config.weights).unwrap();
            let same = apply_field(&field, &encoded.normalized);
            for (a, b) in same.vertices.iter().zip(&encoded.normalized.vertices) {
                for k in 0..3 {
                    norm_worst = norm_worst.max((a[k] - b[k]).abs());
                }
            }
            let out = deform::edit_shape(&encoder, &input, &[], &config).unwrap();
            for (a, b) in out.vertices.iter().zip(&input.vertices) {
                for k in 0..3 {
                    orig_worst = orig_worst.max((a[k] - b[k]).abs());
                }
            }
        }
    }
    outcome(
        norm_worst <= 1e-9 && orig_worst <= 1e-6,
        format!("150 inputs, normalized max {norm_worst:.1e} (tol 1e-9), original max {orig_worst:.1e} (tol 1e-6)"),
    )
}

/// A detail-augmented test chair in the normalized frame with its rescaled
/// parameters.
fn test_chair(t: &Template, seed: u64) -> (Mesh<f64>, Vec<f64>) {
    let p = random_params(t, rng::derive(seed, 0));
    let decoded = t.decode(&p).unwrap();
    let detailed = augment::augment(&decoded.mesh, rng::derive(seed, 1)).unwrap();
    let (mesh, tf) = detailed.normalized().unwrap();
    (mesh, templates::rescale_params(t.spec(), &p, &tf))
}

/// Largest movement among vertices whose neighbourhood lies entirely in
/// `fixed` parts, and how many such vertices there were.
fn fixed_motion(t: &Template, input: &Mesh<f64>, f: &[f64], edit: Edit, fixed: impl Fn(&str) -> bool) -> (f64, usize) {
    let g = templates::edit_params(t.spec(), f, &[edit]).unwrap();
    let field = build_field(t, f, &g, WeightConfig::rigid()).unwrap();
    let out = apply_field(&field, input);
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for (x, y) in input.vertices.iter().zip(&out.vertices) {
        if field.neighbors(*x).iter().all(|&(v, _)| fixed(t.part_name(v))) {
            worst = worst.max(geom::norm(geom::sub(*y, *x)));
            count += 1;
        }
    }
    (worst, count)
}

fn locality() -> Outcome {
    let t = Template::builtin(ClassId::Chair);
    let (mut legs, mut legs_n, mut upper, mut upper_n) = (0.0f64, 0, 0.0f64, 0);
    for s in 0..20 {
        let (input, f) = test_chair(&t, 600 + s);
        let (w, n) = fixed_motion(&t, &input, &f, Edit::delta("back_height", 0.15), |p| p.starts_with("leg"));
        legs = legs.max(w);
        legs_n += n;
        let (w, n) = fixed_motion(&t, &input, &f, Edit::delta("leg_width", 0.02), |p| p == "seat" || p == "back");
        upper = upper.max(w);
        upper_n += n;
    }
    outcome(
        legs < 1e-6 && upper < 1e-6 && legs_n > 0 && upper_n > 0,
        format!(
            "20 chairs: back_height moves {legs_n} leg vertices by <= {legs:.1e}; leg_width moves {upper_n} seat/back vertices by <= {upper:.1e} (tol 1e-6)"
        ),
    )
}

/// Elbow rotations from poses with every joint at rest and random shape
/// parameters.
fn humanoid_rigidity() -> Outcome {
    let t = Template::builtin(ClassId::Humanoid);
    let spec = t.spec();
    let skel = t.skeleton().unwrap();
    let mut r = rng::seeded(7);
    let mut worst: f64 = 0.0;
    let (mut fixed, mut rigid, mut changed) = (0, 0, 0);
    for s in 0..10 {
        let joint = ["left_elbow", "right_elbow"][s % 2];
        let mut rest_p = random_params(&t, 700 + s as u64);
        for (v, kind) in rest_p.iter_mut().zip(spec.kinds()) {
            if kind == ParamKind::Rotation {
                *v = 0.0;
            }
        }
        let rest = t.decode_vertices(&rest_p);
        let angle: Vec3<f64> = std::array::from_fn(|_| r.random_range(-0.8..0.8));
        let p = templates::edit_params(spec, &rest_p, &[Edit::rotate(joint, angle)]).unwrap();
        let posed = t.decode_vertices(&p);
        let bone = skel.bone_of_joint(joint).unwrap();
        let chain = skel.chain(bone);
        let n = p.len();
        let pivot = geom::add(skel.joint_position(bone, &p), [p[n - 3], p[n - 2], p[n - 1]]);
        let inverse = geom::transpose(&so3::exp(angle));
        for i in 0..t.vertex_count() {
            let ws = skel.weights(i);
            if ws.iter().all(|(b, _)| !chain.contains(b)) {
                if posed[i] != rest[i] {
                    changed += 1;
                }
                fixed += 1;
            } else if ws.len() == 1 {
                let back = geom::add(geom::mat_vec(&inverse, geom::sub(posed[i], pivot)), pivot);
                worst = worst.max(geom::norm(geom::sub(back, rest[i])));
                rigid += 1;
            }
        }
    }
    outcome(
        changed == 0 && worst < 1e-9 && rigid > 0,
        format!(
            "10 elbow rotations: {changed} of {fixed} unbound vertices changed (need 0); {rigid} fully bound vertices, max error {worst:.1e} (tol 1e-9)"
        ),
    )
}

/// Random fields applied to random query sets.
fn convexity() -> Outcome {
    let mut r = rng::seeded(8);
    let mut worst = f64::NEG_INFINITY;
    let mut applications = 0;
    for s in 0..10_000u64 {
        let mut v = || -> Vec3<f64> { std::array::from_fn(|_| r.random_range(-1.0..1.0)) };
        let n = 32;
        let source: Vec<_> = (0..n).map(|_| v()).collect();
        let normals: Vec<_> = (0..n).map(|_| geom::normalized(v()).unwrap_or([0.0, 0.0, 1.0])).collect();
        let disp: Vec<_> = (0..n).map(|_| geom::scale(v(), 0.1)).collect();
        let config = match s % 2 {
            0 => WeightConfig {
                k: 1 + (s as usize / 2) % 12,
                sigma: 0.3,
                ..WeightConfig::rigid()
            },
            _ => WeightConfig::nonrigid(),
        };
        let field = DeformationField::new(source, normals, disp, config).unwrap();
        let x = v();
        let n_x = geom::normalized(v()).unwrap_or([0.0, 0.0, 1.0]);
        let d = field.displacement(x, n_x);
        let bound = field
            .neighbors(x)
            .iter()
            .map(|&(i, _)| geom::norm(field.displacements[i]))
            .fold(0.0, f64::max);
        worst = worst.max(geom::norm(d) - bound);
        applications += 1;
    }
    outcome(
        worst <= 1e-9,
        format!("{applications} applications, max (|D| - max neighbour |d|) = {worst:.1e} (tol 1e-9)"),
    )
}

/// Eval-mode encoding of a 2,840-point cloud on one thread.
fn encode_latency() -> Outcome {
    let t = Template::builtin(ClassId::Chair);
    let encoder = Encoder::new(t.clone(), 9);
    let shape = augmented_shape(&t, 9).unwrap();
    let cloud = mesh::sample_points(&shape, 2840, 9).unwrap().cast::<f32>().points;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let mut times: Vec<Duration> = pool.install(|| {
        encoder.encode(&cloud).unwrap();
        (0..100)
            .map(|_| {
                let start = Instant::now();
                std::hint::black_box(encoder.encode(std::hint::black_box(&cloud)).unwrap());
                start.elapsed()
            })
            .collect()
    });
    times.sort();
    let median = (times[49] + times[50]) / 2;
    let ms = median.as_secs_f64() * 1e3;
    outcome(ms <= 50.0, format!("median of 100 runs {ms:.2} ms (budget 50 ms, one thread)"))
}

fn run_pipeline(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let run = |args: &[&str]| {
        let out = Command::new(env!("CARGO_BIN_EXE_semedit"))
            .current_dir(dir)
            .args(args)
            .output()
            .expect("binary runs");
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    };
    run(&["gen-data", "--class", "chair", "--synthetic", "100", "--realistic", "20", "--seed", "5", "--out", "data"]);
    run(&["train", "--data", "data", "--out", "run", "steps=200", "eval_every=100", "seed=5"]);
    let input = "data/meshes/realistic_00001.obj";
    run(&["encode", "--in", input, "--ckpt", "run/checkpoint.bin", "--out", "params.json"]);
    fs::write(dir.join("edits.json"), r#"[{"name": "back_height", "op": "delta", "value": 0.1}]"#).unwrap();
    run(&["deform", "--in", input, "--params", "params.json", "--edits", "edits.json", "--out", "edited.obj"]);
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let name = path.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                files.push((name, fs::read(&path).unwrap()));
            }
        }
    }
    files.sort();
    files
}

/// gen-data, train, encode and deform twice with the same seeds.
fn determinism() -> Outcome {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let first = run_pipeline(a.path());
    let second = run_pipeline(b.path());
    let names: Vec<&str> = first.iter().map(|(n, _)| n.as_str()).collect();
    let differing: Vec<&str> = first
        .iter()
        .zip(&second)
        .filter(|(x, y)| x != y)
        .map(|(x, _)| x.0.as_str())
        .collect();
    let same_set = first.len() == second.len() && first.iter().zip(&second).all(|(x, y)| x.0 == y.0);
    outcome(
        same_set && differing.is_empty(),
        format!("{} artifacts compared, {} differ {:?}", names.len(), differing.len(), differing),
    )
}

type Criterion = (u32, &'static str, f64, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 10] = [
        (1, "decoder oracle", 10.0, decoder_oracle),
        (2, "gradient suite", 300.0, gradient_suite),
        (3, "chamfer oracle", 30.0, chamfer_oracle),
        (4, "editing-branch ablation", 2700.0, ablation),
        (5, "identity edit", 60.0, identity_edit),
        (6, "edit locality", 60.0, locality),
        (7, "humanoid rigidity", 10.0, humanoid_rigidity),
        (8, "convexity bound", 60.0, convexity),
        (9, "encode latency", f64::INFINITY, encode_latency),
        (10, "determinism", f64::INFINITY, determinism),
    ];
    let only: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (id, name, budget, check) in criteria {
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let result = check();
        let secs = start.elapsed().as_secs_f64();
        let in_time = secs <= budget;
        let pass = result.pass && in_time;
        if !pass {
            failed += 1;
        }
        let limit = if budget.is_finite() { format!(", budget {budget:.0} s") } else { String::new() };
        println!(
            "criterion {id:>2} {}: {name}: {} [{secs:.1} s{limit}]",
            if pass { "PASS" } else { "FAIL" },
            result.detail
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
