//! Airplane: ellipsoid fuselage, two wings and three tail stabilizers.
//!
//! Frame: x spanwise (+ is the right wing), y up, z nose (+) to tail (-).
//! Chord positions and thicknesses are fixed fractions of the fuselage
//! dimensions; only the span of each lifting surface has its own parameter.

use super::rig::{ellipsoid, tapered_box, Lin, Piece, Section};
use super::{Built, Geometry, ParamDescriptor, TemplateSpec};

pub const FUSELAGE_LENGTH: usize = 0;
pub const FUSELAGE_WIDTH: usize = 1;
pub const FUSELAGE_HEIGHT: usize = 2;
pub const WING_LENGTH: usize = 3;
pub const VERTICAL_STABILIZER_LENGTH: usize = 4;
pub const HORIZONTAL_STABILIZER_LENGTH: usize = 5;

pub const PART_NAMES: [&str; 6] = [
    "fuselage",
    "wing_left",
    "wing_right",
    "stabilizer_vertical",
    "stabilizer_left",
    "stabilizer_right",
];

pub(super) fn descriptors() -> Vec<ParamDescriptor> {
    [
        ("fuselage_length", 1.0),
        ("fuselage_width", 0.14),
        ("fuselage_height", 0.14),
        ("wing_length", 0.5),
        ("vertical_stabilizer_length", 0.18),
        ("horizontal_stabilizer_length", 0.2),
    ]
    .into_iter()
    .map(|(n, d)| ParamDescriptor::scale(n, d))
    .collect()
}

fn p(i: usize, c: f64) -> Lin {
    Lin::param(i, c)
}

/// Section centered at `(a, b)` with full sizes `(sa, sb)`.
fn section(a: Lin, b: Lin, sa: Lin, sb: Lin) -> Section {
    Section {
        center: [a, b],
        size: [sa, sb],
    }
}

/// Spanwise surface along x: root at x = 0, tip at `side · span`.
fn spanwise(side: f64, span: Lin, root: Section, tip: Section, n: usize) -> Piece {
    if side > 0.0 {
        tapered_box(0, (Lin::zero(), span), &root, &tip, n)
    } else {
        tapered_box(0, (-span, Lin::zero()), &tip, &root, n)
    }
}

pub(super) fn build(spec: &TemplateSpec) -> Built {
    let r = spec.resolution;
    let n = r.box_grid;
    let (l, w, h) = (FUSELAGE_LENGTH, FUSELAGE_WIDTH, FUSELAGE_HEIGHT);
    let defaults = spec.defaults();
    let mut pieces = Vec::new();
    pieces.push(ellipsoid(
        &[Lin::zero(), Lin::zero(), Lin::zero()],
        &[p(w, 0.5), p(h, 0.5), p(l, 0.5)],
        2,
        r.sphere_segments,
        r.sphere_rings,
        &defaults,
    ));
    // Cross-section axes of a spanwise box are (y, z).
    let wing_root = || section(p(h, -0.1), p(l, 0.05), p(h, 0.3), p(l, 0.22));
    let wing_tip = || section(p(h, -0.1), p(l, -0.07), p(h, 0.15), p(l, 0.088));
    for side in [-1.0, 1.0] {
        pieces.push(spanwise(side, p(WING_LENGTH, 1.0), wing_root(), wing_tip(), n));
    }
    // Vertical stabilizer spans y from inside the fuselage; cross axes (x, z).
    let base = p(h, 0.3);
    pieces.push(tapered_box(
        1,
        (base.clone(), base + p(VERTICAL_STABILIZER_LENGTH, 1.0)),
        &section(Lin::zero(), p(l, -0.40), p(w, 0.25), p(l, 0.16)),
        &section(Lin::zero(), p(l, -0.44), p(w, 0.125), p(l, 0.08)),
        n,
    ));
    let tail_root = || section(Lin::zero(), p(l, -0.42), p(h, 0.2), p(l, 0.12));
    let tail_tip = || section(Lin::zero(), p(l, -0.45), p(h, 0.1), p(l, 0.06));
    for side in [-1.0, 1.0] {
        pieces.push(spanwise(side, p(HORIZONTAL_STABILIZER_LENGTH, 1.0), tail_root(), tail_tip(), n));
    }
    // PART_NAMES lists left before right, matching the loops above.
    let mut all = Piece::default();
    let mut labels = Vec::new();
    for (part, piece) in pieces.into_iter().enumerate() {
        let range = all.append(piece);
        labels.extend(std::iter::repeat_n(part as u16, range.len()));
    }
    Built {
        geometry: Geometry::Rigid(all.coords),
        faces: all.faces,
        labels,
        part_names: PART_NAMES.to_vec(),
    }
}
