//! Wavefront OBJ and Stanford PLY readers and writers.
//!
//! Polygons are fan-triangulated on load; vertex order is preserved. Only
//! geometry is read (`v`/`f` records in OBJ, `vertex`/`face` elements in
//! PLY); everything else is skipped.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Real;

use super::Mesh;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    Obj,
    Ply,
}

impl MeshFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        match path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .as_deref()
        {
            Some("obj") => Ok(MeshFormat::Obj),
            Some("ply") => Ok(MeshFormat::Ply),
            _ => Err(Error::Invalid(format!(
                "{}: expected a .obj or .ply file",
                path.display()
            ))),
        }
    }
}

/// Reads an OBJ or PLY file, chosen by extension.
pub fn load_mesh(path: impl AsRef<Path>) -> Result<Mesh<f64>> {
    let path = path.as_ref();
    let format = MeshFormat::from_path(path)?;
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let name = path.display().to_string();
    match format {
        MeshFormat::Obj => {
            let text = String::from_utf8_lossy(&bytes);
            parse_obj(&text, &name)
        }
        MeshFormat::Ply => parse_ply(&bytes, &name),
    }
}

pub fn save_mesh<T: Real>(mesh: &Mesh<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = match MeshFormat::from_path(path)? {
        MeshFormat::Obj => write_obj(mesh).into_bytes(),
        MeshFormat::Ply => write_ply_binary(mesh),
    };
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &str, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_string(),
        line,
        message: message.into(),
    }
}

fn fan(poly: &[u32], faces: &mut Vec<[u32; 3]>) {
    for i in 1..poly.len().saturating_sub(1) {
        faces.push([poly[0], poly[i], poly[i + 1]]);
    }
}

pub fn parse_obj(text: &str, name: &str) -> Result<Mesh<f64>> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    let mut poly = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let mut xyz = [0.0f64; 3];
                for c in xyz.iter_mut() {
                    let tok = tokens
                        .next()
                        .ok_or_else(|| parse_err(name, line_no, "vertex needs three coordinates"))?;
                    *c = tok
                        .parse()
                        .map_err(|_| parse_err(name, line_no, format!("bad coordinate `{tok}`")))?;
                    if !c.is_finite() {
                        return Err(parse_err(name, line_no, "non-finite coordinate"));
                    }
                }
                vertices.push(xyz);
            }
            Some("f") => {
                poly.clear();
                for tok in tokens {
                    let idx_str = tok.split('/').next().unwrap_or("");
                    let idx: i64 = idx_str
                        .parse()
                        .map_err(|_| parse_err(name, line_no, format!("bad face index `{tok}`")))?;
                    let n = vertices.len() as i64;
                    let resolved = match idx {
                        0 => return Err(parse_err(name, line_no, "face index 0 is invalid")),
                        i if i > 0 => i - 1,
                        i => n + i,
                    };
                    if resolved < 0 || resolved >= n {
                        return Err(parse_err(
                            name,
                            line_no,
                            format!("face index {idx} out of range ({n} vertices so far)"),
                        ));
                    }
                    poly.push(resolved as u32);
                }
                if poly.len() < 3 {
                    return Err(parse_err(name, line_no, "face needs at least three vertices"));
                }
                fan(&poly, &mut faces);
            }
            _ => {}
        }
    }
    Ok(Mesh {
        vertices,
        faces,
        normals: None,
    })
}

/// Formats like C's `%.6g`.
pub fn format_g6(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.5e}", x);
    let (mantissa, exp) = sci.split_once('e').unwrap_or((&sci, "0"));
    let exp: i32 = exp.parse().unwrap_or(0);
    if (-4..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        let s = format!("{:.*}", decimals, x);
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        let m = if mantissa.contains('.') {
            mantissa.trim_end_matches('0').trim_end_matches('.')
        } else {
            mantissa
        };
        format!("{m}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

pub fn write_obj<T: Real>(mesh: &Mesh<T>) -> String {
    let mut out = String::with_capacity(mesh.vertices.len() * 32 + mesh.faces.len() * 16);
    for v in &mesh.vertices {
        out.push_str(&format!(
            "v {} {} {}\n",
            format_g6(v[0].as_f64()),
            format_g6(v[1].as_f64()),
            format_g6(v[2].as_f64())
        ));
    }
    for f in &mesh.faces {
        out.push_str(&format!("f {} {} {}\n", f[0] + 1, f[1] + 1, f[2] + 1));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar { name: String, ty: Scalar },
    List { name: String, count: Scalar, item: Scalar },
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PlyEncoding {
    Ascii,
    BinaryLe,
}

/// Cursor over either whitespace tokens (ASCII) or raw bytes (binary).
struct PlyBody<'a> {
    data: &'a [u8],
    pos: usize,
    encoding: PlyEncoding,
    line: usize,
    name: &'a str,
}

impl PlyBody<'_> {
    fn next(&mut self, ty: Scalar) -> Result<f64> {
        match self.encoding {
            PlyEncoding::BinaryLe => {
                let n = ty.size();
                if self.pos + n > self.data.len() {
                    return Err(Error::Parse {
                        path: self.name.to_string(),
                        line: self.line,
                        message: format!("unexpected end of binary data at byte offset {}", self.pos),
                    });
                }
                let v = ty.read_le(&self.data[self.pos..self.pos + n]);
                self.pos += n;
                Ok(v)
            }
            PlyEncoding::Ascii => {
                while self.pos < self.data.len() && self.data[self.pos].is_ascii_whitespace() {
                    if self.data[self.pos] == b'\n' {
                        self.line += 1;
                    }
                    self.pos += 1;
                }
                let start = self.pos;
                while self.pos < self.data.len() && !self.data[self.pos].is_ascii_whitespace() {
                    self.pos += 1;
                }
                if start == self.pos {
                    return Err(parse_err(self.name, self.line, "unexpected end of file"));
                }
                let tok = std::str::from_utf8(&self.data[start..self.pos]).unwrap_or("");
                tok.parse::<f64>()
                    .map_err(|_| parse_err(self.name, self.line, format!("bad number `{tok}`")))
            }
        }
    }
}

pub fn parse_ply(bytes: &[u8], name: &str) -> Result<Mesh<f64>> {
    // Header is ASCII terminated by "end_header\n".
    let marker = b"end_header";
    let header_end = bytes
        .windows(marker.len())
        .position(|w| w == marker)
        .ok_or_else(|| parse_err(name, 1, "missing end_header"))?;
    let mut body_start = header_end + marker.len();
    if bytes.get(body_start) == Some(&b'\r') {
        body_start += 1;
    }
    if bytes.get(body_start) == Some(&b'\n') {
        body_start += 1;
    }
    let header = String::from_utf8_lossy(&bytes[..header_end]);
    let mut lines = header.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l.trim() == "ply" => {}
        _ => return Err(parse_err(name, 1, "missing `ply` magic")),
    }
    let mut encoding = None;
    let mut elements: Vec<Element> = Vec::new();
    let mut header_lines = 1;
    for (i, line) in lines {
        header_lines = i + 1;
        let line_no = i + 1;
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            ["format", "ascii", _] => encoding = Some(PlyEncoding::Ascii),
            ["format", "binary_little_endian", _] => encoding = Some(PlyEncoding::BinaryLe),
            ["format", other, ..] => {
                return Err(parse_err(name, line_no, format!("unsupported PLY format `{other}`")))
            }
            ["element", ename, count] => elements.push(Element {
                name: ename.to_string(),
                count: count
                    .parse()
                    .map_err(|_| parse_err(name, line_no, "bad element count"))?,
                props: Vec::new(),
            }),
            ["property", "list", count, item, pname] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| parse_err(name, line_no, "property before element"))?;
                let (count, item) = Scalar::parse(count)
                    .zip(Scalar::parse(item))
                    .ok_or_else(|| parse_err(name, line_no, "unknown list property type"))?;
                el.props.push(Property::List {
                    name: pname.to_string(),
                    count,
                    item,
                });
            }
            ["property", ty, pname] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| parse_err(name, line_no, "property before element"))?;
                let ty = Scalar::parse(ty)
                    .ok_or_else(|| parse_err(name, line_no, format!("unknown property type `{ty}`")))?;
                el.props.push(Property::Scalar {
                    name: pname.to_string(),
                    ty,
                });
            }
            ["comment", ..] | ["obj_info", ..] | [] => {}
            _ => return Err(parse_err(name, line_no, format!("unrecognized header line `{line}`"))),
        }
    }
    let encoding = encoding.ok_or_else(|| parse_err(name, 2, "missing format line"))?;
    let mut body = PlyBody {
        data: bytes,
        pos: body_start,
        encoding,
        line: header_lines + 2,
        name,
    };
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    let mut poly = Vec::new();
    for el in &elements {
        for _ in 0..el.count {
            let mut xyz = [0.0f64; 3];
            poly.clear();
            for p in &el.props {
                match p {
                    Property::Scalar { name: pname, ty } => {
                        let v = body.next(*ty)?;
                        if el.name == "vertex" {
                            match pname.as_str() {
                                "x" => xyz[0] = v,
                                "y" => xyz[1] = v,
                                "z" => xyz[2] = v,
                                _ => {}
                            }
                        }
                    }
                    Property::List {
                        name: pname,
                        count,
                        item,
                    } => {
                        let n = body.next(*count)?;
                        if !(n >= 0.0) || n.fract() != 0.0 {
                            return Err(parse_err(name, body.line, "bad list length"));
                        }
                        let is_faces = el.name == "face"
                            && (pname == "vertex_indices" || pname == "vertex_index");
                        for _ in 0..n as usize {
                            let v = body.next(*item)?;
                            if is_faces {
                                poly.push(v as i64);
                            }
                        }
                    }
                }
            }
            if el.name == "vertex" {
                if !xyz.iter().all(|c| c.is_finite()) {
                    return Err(parse_err(name, body.line, "non-finite coordinate"));
                }
                vertices.push(xyz);
            } else if el.name == "face" && !poly.is_empty() {
                if poly.len() < 3 {
                    return Err(parse_err(name, body.line, "face needs at least three vertices"));
                }
                let mut idx = Vec::with_capacity(poly.len());
                for &i in &poly {
                    if i < 0 || i as usize >= vertices.len() {
                        return Err(parse_err(
                            name,
                            body.line,
                            format!("face index {i} out of range"),
                        ));
                    }
                    idx.push(i as u32);
                }
                fan(&idx, &mut faces);
            }
        }
    }
    Ok(Mesh {
        vertices,
        faces,
        normals: None,
    })
}

pub fn write_ply_ascii<T: Real>(mesh: &Mesh<T>) -> String {
    let mut out = format!(
        "ply\nformat ascii 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\nelement face {}\nproperty list uchar int vertex_indices\nend_header\n",
        mesh.vertices.len(),
        mesh.faces.len()
    );
    for v in &mesh.vertices {
        out.push_str(&format!("{} {} {}\n", v[0].as_f64(), v[1].as_f64(), v[2].as_f64()));
    }
    for f in &mesh.faces {
        out.push_str(&format!("3 {} {} {}\n", f[0], f[1], f[2]));
    }
    out
}

/// Binary little-endian PLY with `double` coordinates (lossless for `f64`).
pub fn write_ply_binary<T: Real>(mesh: &Mesh<T>) -> Vec<u8> {
    let mut out = Vec::new();
    write!(
        out,
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\nelement face {}\nproperty list uchar int vertex_indices\nend_header\n",
        mesh.vertices.len(),
        mesh.faces.len()
    )
    .expect("writing to a Vec cannot fail");
    for v in &mesh.vertices {
        for c in v {
            out.extend_from_slice(&c.as_f64().to_le_bytes());
        }
    }
    for f in &mesh.faces {
        out.push(3u8);
        for &i in f {
            out.extend_from_slice(&(i as i32).to_le_bytes());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const CUBE_OBJ: &str = "\
# unit cube
v 0 0 0
v 1 0 0
v 1 1 0
v 0 1 0
v 0 0 1
v 1 0 1
v 1 1 1
v 0 1 1
f 1 4 3
f 1 3 2
f 5 6 7
f 5 7 8
f 1 2 6
f 1 6 5
f 4 8 7
f 4 7 3
f 1 5 8
f 1 8 4
f 2 3 7
f 2 7 6
";

    #[test]
    fn obj_cube_counts() {
        let m = parse_obj(CUBE_OBJ, "cube.obj").unwrap();
        assert_eq!(m.vertex_count(), 8);
        assert_eq!(m.face_count(), 12);
        m.validate().unwrap();
    }

    #[test]
    fn obj_quad_is_fan_triangulated() {
        let m = parse_obj("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1/1/1 2/2/2 3/3/3 4/4/4\n", "q").unwrap();
        assert_eq!(m.faces, vec![[0, 1, 2], [0, 2, 3]]);
    }

    #[test]
    fn obj_negative_indices_are_relative() {
        let m = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf -3 -2 -1\n", "n").unwrap();
        assert_eq!(m.faces, vec![[0, 1, 2]]);
    }

    #[test]
    fn obj_errors_name_the_line() {
        let err = parse_obj("v 0 0 0\nv 1 0 zz\n", "bad.obj").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            e => panic!("unexpected {e}"),
        }
        let err = parse_obj("v 0 0 0\nf 1 2 3\n", "bad.obj").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn g6_formatting() {
        assert_eq!(format_g6(0.0), "0");
        assert_eq!(format_g6(1.0), "1");
        assert_eq!(format_g6(0.1234567), "0.123457");
        assert_eq!(format_g6(-123456.7), "-123457");
        assert_eq!(format_g6(1234567.0), "1.23457e+06");
        assert_eq!(format_g6(0.00001234), "1.234e-05");
        assert_eq!(format_g6(9.9999996), "10");
        assert_eq!(format_g6(2.5e-4), "0.00025");
    }

    #[test]
    fn binary_ply_matches_ascii_and_reference_decoder() {
        let cube = parse_obj(CUBE_OBJ, "cube.obj").unwrap();
        let ascii = parse_ply(write_ply_ascii(&cube).as_bytes(), "a.ply").unwrap();
        let bin_bytes = write_ply_binary(&cube);
        let bin = parse_ply(&bin_bytes, "b.ply").unwrap();
        assert_eq!(ascii.vertices, bin.vertices);
        assert_eq!(ascii.faces, bin.faces);

        // Independent decode: fixed header, then 8 * 3 little-endian doubles.
        let start = bin_bytes
            .windows(11)
            .position(|w| w == b"end_header\n")
            .unwrap()
            + 11;
        for (i, v) in bin.vertices.iter().enumerate() {
            for k in 0..3 {
                let off = start + (i * 3 + k) * 8;
                let x = f64::from_le_bytes(bin_bytes[off..off + 8].try_into().unwrap());
                assert_eq!(x, v[k]);
            }
        }
    }

    #[test]
    fn ply_float_vertices_and_extra_properties() {
        let mut bytes = b"ply\nformat binary_little_endian 1.0\ncomment test\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\nproperty uchar red\nelement face 1\nproperty list uchar uint vertex_indices\nend_header\n".to_vec();
        for (i, v) in [[0.0f32, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.5]].iter().enumerate() {
            for c in v {
                bytes.extend_from_slice(&c.to_le_bytes());
            }
            bytes.push(i as u8);
        }
        bytes.push(3);
        for i in [0u32, 1, 2] {
            bytes.extend_from_slice(&i.to_le_bytes());
        }
        let m = parse_ply(&bytes, "f.ply").unwrap();
        assert_eq!(m.vertices[2], [0.0, 1.0, 0.5]);
        assert_eq!(m.faces, vec![[0, 1, 2]]);
    }

    #[test]
    fn truncated_binary_ply_reports_offset() {
        let cube = parse_obj(CUBE_OBJ, "cube.obj").unwrap();
        let bytes = write_ply_binary(&cube);
        let err = parse_ply(&bytes[..bytes.len() - 5], "t.ply").unwrap_err();
        assert!(err.to_string().contains("byte offset"), "{err}");
    }

    #[test]
    fn obj_round_trip_through_writer() {
        let cube = parse_obj(CUBE_OBJ, "cube.obj").unwrap();
        let again = parse_obj(&write_obj(&cube), "again.obj").unwrap();
        assert_eq!(cube, again);
    }
}
