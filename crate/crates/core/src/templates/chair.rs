//! Chair: six cuboids (back, seat, four legs) with eight scale parameters.
//!
//! Frame: x across the seat, y up (floor at 0), z front (+) to back (-).
//!
//! | part | x | y | z |
//! |------|---|---|---|
//! | seat | ±W/2 | [LH-ST, LH] | ±SD/2 |
//! | back | ±W/2 | [LH, LH+BH] | [-SD/2, -SD/2+BD] |
//! | leg  | [W/2-LW, W/2] or mirrored | [0, LH] | [SD/2-LD, SD/2] or mirrored |

use super::rig::{cuboid, Lin, Lin3, Piece};
use super::{Built, Geometry, ParamDescriptor, TemplateSpec};

pub const BACK_HEIGHT: usize = 0;
pub const BACK_DEPTH: usize = 1;
pub const SEAT_THICKNESS: usize = 2;
pub const SEAT_DEPTH: usize = 3;
pub const WIDTH: usize = 4;
pub const LEG_HEIGHT: usize = 5;
pub const LEG_DEPTH: usize = 6;
pub const LEG_WIDTH: usize = 7;

pub const PART_NAMES: [&str; 6] = [
    "back",
    "seat",
    "leg_front_left",
    "leg_front_right",
    "leg_back_left",
    "leg_back_right",
];

pub(super) fn descriptors() -> Vec<ParamDescriptor> {
    [
        ("back_height", 0.45),
        ("back_depth", 0.06),
        ("seat_thickness", 0.06),
        ("seat_depth", 0.45),
        ("width", 0.45),
        ("leg_height", 0.42),
        ("leg_depth", 0.05),
        ("leg_width", 0.05),
    ]
    .into_iter()
    .map(|(n, d)| ParamDescriptor::scale(n, d))
    .collect()
}

fn p(i: usize, c: f64) -> Lin {
    Lin::param(i, c)
}

pub(super) fn build(spec: &TemplateSpec) -> Built {
    let n = spec.resolution.box_grid;
    let half_w = p(WIDTH, 0.5);
    let half_d = p(SEAT_DEPTH, 0.5);
    let mut boxes: Vec<(Lin3, Lin3)> = Vec::new();
    // back
    boxes.push((
        [-half_w.clone(), p(LEG_HEIGHT, 1.0), -half_d.clone()],
        [half_w.clone(), p(LEG_HEIGHT, 1.0) + p(BACK_HEIGHT, 1.0), -half_d.clone() + p(BACK_DEPTH, 1.0)],
    ));
    // seat
    boxes.push((
        [-half_w.clone(), p(LEG_HEIGHT, 1.0) - p(SEAT_THICKNESS, 1.0), -half_d.clone()],
        [half_w.clone(), p(LEG_HEIGHT, 1.0), half_d.clone()],
    ));
    // legs: (x side, z side) with +1 = right/front
    for (zs, xs) in [(1.0, -1.0), (1.0, 1.0), (-1.0, -1.0), (-1.0, 1.0)] {
        let outer_x = &half_w * xs;
        let inner_x = &outer_x - &p(LEG_WIDTH, xs);
        let outer_z = &half_d * zs;
        let inner_z = &outer_z - &p(LEG_DEPTH, zs);
        let (x0, x1) = if xs > 0.0 { (inner_x, outer_x) } else { (outer_x, inner_x) };
        let (z0, z1) = if zs > 0.0 { (inner_z, outer_z) } else { (outer_z, inner_z) };
        boxes.push(([x0, Lin::zero(), z0], [x1, p(LEG_HEIGHT, 1.0), z1]));
    }
    let mut piece = Piece::default();
    let mut labels = Vec::new();
    for (part, (lo, hi)) in boxes.iter().enumerate() {
        let range = piece.append(cuboid(lo, hi, n));
        labels.extend(std::iter::repeat_n(part as u16, range.len()));
    }
    Built {
        geometry: Geometry::Rigid(piece.coords),
        faces: piece.faces,
        labels,
        part_names: PART_NAMES.to_vec(),
    }
}
