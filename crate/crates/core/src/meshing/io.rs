//! Mesh files: binary little-endian PLY and Wavefront OBJ, vertices and faces only.

use std::fmt::Write as _;
use std::path::Path;

use super::TriMesh;
use crate::error::{Error, Result};
use crate::geometry::Vec3;

pub fn write_mesh(mesh: &TriMesh, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    match path.extension().and_then(|e| e.to_str()) {
        Some("obj") => write_obj(mesh, path),
        _ => write_ply(mesh, path),
    }
}

pub fn read_mesh(path: impl AsRef<Path>) -> Result<TriMesh> {
    let path = path.as_ref();
    match path.extension().and_then(|e| e.to_str()) {
        Some("obj") => read_obj(path),
        _ => read_ply(path),
    }
}

pub fn write_ply(mesh: &TriMesh, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let header = format!(
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\nelement face {}\nproperty list uchar int vertex_indices\nend_header\n",
        mesh.num_vertices(),
        mesh.num_faces()
    );
    let mut out = header.into_bytes();
    for v in mesh.vertices() {
        for c in v.iter() {
            out.extend_from_slice(&c.to_le_bytes());
        }
    }
    for f in mesh.faces() {
        out.push(3);
        for &i in f {
            let i = i32::try_from(i)
                .map_err(|_| Error::Validation(format!("vertex index {i} too large for PLY")))?;
            out.extend_from_slice(&i.to_le_bytes());
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[derive(Clone, Copy)]
enum Scalar {
    F32,
    F64,
    I32,
    U32,
    U8,
}

impl Scalar {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "uchar" | "uint8" => Scalar::U8,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::F32 | Scalar::I32 | Scalar::U32 => 4,
            Scalar::F64 => 8,
            Scalar::U8 => 1,
        }
    }

    fn read(self, b: &[u8]) -> f64 {
        match self {
            Scalar::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()).into(),
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
            Scalar::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()).into(),
            Scalar::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()).into(),
            Scalar::U8 => b[0].into(),
        }
    }
}

/// Reads binary little-endian PLY with `x y z` vertex properties (extra
/// scalar properties are skipped) and a `vertex_indices` face list.
pub fn read_ply(path: impl AsRef<Path>) -> Result<TriMesh> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let end = find_subslice(&bytes, b"end_header\n")
        .ok_or_else(|| Error::parse(path, 0, "missing end_header"))?;
    let header = std::str::from_utf8(&bytes[..end])
        .map_err(|_| Error::parse(path, 0, "header is not UTF-8"))?;
    let mut body = &bytes[end + b"end_header\n".len()..];

    let mut n_vertices = 0usize;
    let mut n_faces = 0usize;
    let mut vertex_props: Vec<(String, Scalar)> = Vec::new();
    let mut face_list: Option<(Scalar, Scalar)> = None;
    let mut current = "";
    for (i, line) in header.lines().enumerate() {
        let lineno = i + 1;
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok.as_slice() {
            ["ply"] | [] => {}
            ["format", fmt, _] => {
                if *fmt != "binary_little_endian" {
                    return Err(Error::parse(path, lineno, format!("unsupported PLY format {fmt}")));
                }
            }
            ["comment", ..] | ["obj_info", ..] => {}
            ["element", name, count] => {
                let count = count
                    .parse()
                    .map_err(|_| Error::parse(path, lineno, "bad element count"))?;
                current = match *name {
                    "vertex" => {
                        n_vertices = count;
                        "vertex"
                    }
                    "face" => {
                        n_faces = count;
                        "face"
                    }
                    other => {
                        return Err(Error::parse(path, lineno, format!("unsupported element {other}")))
                    }
                };
            }
            ["property", "list", cnt, idx, _] if current == "face" => {
                let c = Scalar::parse(cnt).ok_or_else(|| Error::parse(path, lineno, "bad list count type"))?;
                let x = Scalar::parse(idx).ok_or_else(|| Error::parse(path, lineno, "bad list index type"))?;
                face_list = Some((c, x));
            }
            ["property", ty, name] if current == "vertex" => {
                let s = Scalar::parse(ty).ok_or_else(|| Error::parse(path, lineno, format!("bad type {ty}")))?;
                vertex_props.push((name.to_string(), s));
            }
            _ => return Err(Error::parse(path, lineno, format!("unsupported header line {line:?}"))),
        }
    }
    let axis_slot = |axis: &str| vertex_props.iter().position(|(n, _)| n == axis);
    let slots = [axis_slot("x"), axis_slot("y"), axis_slot("z")];
    if slots.iter().any(Option::is_none) {
        return Err(Error::parse(path, 0, "vertex element lacks x/y/z"));
    }
    let stride: usize = vertex_props.iter().map(|(_, s)| s.size()).sum();
    let offsets: Vec<usize> = vertex_props
        .iter()
        .scan(0, |acc, (_, s)| {
            let o = *acc;
            *acc += s.size();
            Some(o)
        })
        .collect();

    let truncated = || Error::parse(path, 0, "truncated PLY body");
    let mut vertices = Vec::with_capacity(n_vertices);
    for _ in 0..n_vertices {
        if body.len() < stride {
            return Err(truncated());
        }
        let mut v = Vec3::zeros();
        for (a, slot) in slots.iter().enumerate() {
            let k = slot.unwrap();
            v[a] = vertex_props[k].1.read(&body[offsets[k]..]);
        }
        vertices.push(v);
        body = &body[stride..];
    }
    let (cnt_ty, idx_ty) = face_list.unwrap_or((Scalar::U8, Scalar::I32));
    let mut faces = Vec::with_capacity(n_faces);
    for _ in 0..n_faces {
        if body.len() < cnt_ty.size() {
            return Err(truncated());
        }
        let n = cnt_ty.read(body) as usize;
        body = &body[cnt_ty.size()..];
        if n != 3 {
            return Err(Error::parse(path, 0, format!("non-triangle face with {n} vertices")));
        }
        if body.len() < 3 * idx_ty.size() {
            return Err(truncated());
        }
        let mut f = [0usize; 3];
        for slot in &mut f {
            *slot = idx_ty.read(body) as usize;
            body = &body[idx_ty.size()..];
        }
        faces.push(f);
    }
    TriMesh::new(vertices, faces)
}

fn find_subslice(hay: &[u8], needle: &[u8]) -> Option<usize> {
    hay.windows(needle.len()).position(|w| w == needle)
}

pub fn write_obj(mesh: &TriMesh, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for v in mesh.vertices() {
        let _ = writeln!(out, "v {:?} {:?} {:?}", v.x, v.y, v.z);
    }
    for f in mesh.faces() {
        let _ = writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads `v` and `f` records; face entries may carry `/vt/vn` suffixes,
/// polygons are fan-triangulated.
pub fn read_obj(path: impl AsRef<Path>) -> Result<TriMesh> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("v") => {
                let c: Vec<f64> = tok
                    .take(3)
                    .map(str::parse)
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| Error::parse(path, lineno, format!("{e}")))?;
                if c.len() != 3 {
                    return Err(Error::parse(path, lineno, "vertex needs 3 coordinates"));
                }
                vertices.push(Vec3::new(c[0], c[1], c[2]));
            }
            Some("f") => {
                let idx: Vec<usize> = tok
                    .map(|t| {
                        let first = t.split('/').next().unwrap_or("");
                        let k: i64 = first
                            .parse()
                            .map_err(|_| Error::parse(path, lineno, format!("bad index {t}")))?;
                        let resolved = if k < 0 { vertices.len() as i64 + k } else { k - 1 };
                        usize::try_from(resolved)
                            .map_err(|_| Error::parse(path, lineno, format!("bad index {t}")))
                    })
                    .collect::<Result<_>>()?;
                if idx.len() < 3 {
                    return Err(Error::parse(path, lineno, "face needs 3 indices"));
                }
                for k in 1..idx.len() - 1 {
                    faces.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    TriMesh::new(vertices, faces)
}
