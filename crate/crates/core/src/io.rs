//! OBJ and PLY readers plus an OBJ writer for debug exports.
//!
//! OBJ is ASCII only; polygonal faces are fan-triangulated. PLY supports
//! ASCII and binary little-endian bodies; a file without a `face` element
//! loads as a point cloud. Indices are converted to 0-based on load and back
//! to 1-based only when writing.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::mesh::{PointCloud, TriangleMesh};
use crate::vec3::Vec3;

/// Result of loading a surface file: connectivity decides the type.
#[derive(Clone, Debug)]
pub enum LoadedSurface {
    Mesh(TriangleMesh),
    Cloud(PointCloud),
}

/// Loads a mesh or point cloud, dispatching on the file extension.
pub fn load_surface(path: &Path) -> Result<LoadedSurface> {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .as_deref()
    {
        Some("obj") => Ok(LoadedSurface::Mesh(load_obj(path)?)),
        Some("ply") => load_ply(path),
        other => Err(Error::InvalidParameter(format!(
            "unsupported input extension {:?} for {}",
            other,
            path.display()
        ))),
    }
}

/// Loads an ASCII OBJ file. Normals, texture coordinates, and grouping
/// records are ignored; polygonal faces are fan-triangulated.
pub fn load_obj(path: &Path) -> Result<TriangleMesh> {
    let file = File::open(path)?;
    let reader = BufReader::new(file);
    let path_str = path.display().to_string();

    let mut positions: Vec<Vec3> = Vec::new();
    let mut faces: Vec<[usize; 3]> = Vec::new();

    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let mut coord = [0.0f64; 3];
                for c in &mut coord {
                    *c = tokens
                        .next()
                        .and_then(|t| t.parse().ok())
                        .ok_or_else(|| Error::Parse {
                            path: path_str.clone(),
                            line: lineno,
                            msg: "vertex record needs three coordinates".into(),
                        })?;
                }
                positions.push(coord);
            }
            Some("f") => {
                let mut indices: Vec<usize> = Vec::new();
                for token in tokens {
                    let first = token.split('/').next().unwrap_or("");
                    let raw: i64 = first.parse().map_err(|_| Error::Parse {
                        path: path_str.clone(),
                        line: lineno,
                        msg: format!("bad face index '{token}'"),
                    })?;
                    let resolved = if raw < 0 {
                        positions.len() as i64 + raw
                    } else {
                        raw - 1
                    };
                    if resolved < 0 || resolved as usize >= positions.len() {
                        return Err(Error::IndexOutOfRange {
                            path: path_str.clone(),
                            line: lineno,
                            index: raw,
                            count: positions.len(),
                        });
                    }
                    indices.push(resolved as usize);
                }
                if indices.len() < 3 {
                    return Err(Error::Parse {
                        path: path_str.clone(),
                        line: lineno,
                        msg: "face record needs at least three indices".into(),
                    });
                }
                for i in 1..indices.len() - 1 {
                    let tri = [indices[0], indices[i], indices[i + 1]];
                    if tri[0] != tri[1] && tri[1] != tri[2] && tri[0] != tri[2] {
                        faces.push(tri);
                    }
                }
            }
            _ => {}
        }
    }
    TriangleMesh::new(positions, faces)
}

/// Writes positions and faces as ASCII OBJ (1-based indices). Faces may be
/// empty, which yields a point-only OBJ.
pub fn write_obj(path: &Path, positions: &[Vec3], faces: &[[usize; 3]]) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    for p in positions {
        writeln!(w, "v {} {} {}", p[0], p[1], p[2])?;
    }
    for f in faces {
        writeln!(w, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1)?;
    }
    Ok(())
}

pub fn write_obj_mesh(path: &Path, mesh: &TriangleMesh) -> Result<()> {
    write_obj(path, &mesh.positions, &mesh.faces)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum ScalarType {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl ScalarType {
    fn parse(token: &str) -> Option<Self> {
        match token {
            "char" | "int8" => Some(Self::I8),
            "uchar" | "uint8" => Some(Self::U8),
            "short" | "int16" => Some(Self::I16),
            "ushort" | "uint16" => Some(Self::U16),
            "int" | "int32" => Some(Self::I32),
            "uint" | "uint32" => Some(Self::U32),
            "float" | "float32" => Some(Self::F32),
            "double" | "float64" => Some(Self::F64),
            _ => None,
        }
    }

    fn size(self) -> usize {
        match self {
            Self::I8 | Self::U8 => 1,
            Self::I16 | Self::U16 => 2,
            Self::I32 | Self::U32 | Self::F32 => 4,
            Self::F64 => 8,
        }
    }
}

#[derive(Clone, Debug)]
enum PropertyKind {
    Scalar(ScalarType),
    List(ScalarType, ScalarType),
}

#[derive(Clone, Debug)]
struct PlyProperty {
    name: String,
    kind: PropertyKind,
}

#[derive(Clone, Debug)]
struct PlyElement {
    name: String,
    count: usize,
    properties: Vec<PlyProperty>,
}

enum PlyFormat {
    Ascii,
    BinaryLittleEndian,
}

/// Loads a PLY file. Returns a point cloud when the file has no `face`
/// element and a triangle mesh otherwise.
pub fn load_ply(path: &Path) -> Result<LoadedSurface> {
    let file = File::open(path)?;
    let mut reader = BufReader::new(file);
    let path_str = path.display().to_string();
    let header_err = |msg: String| Error::MalformedHeader {
        path: path_str.clone(),
        msg,
    };

    let mut line = String::new();
    reader.read_line(&mut line)?;
    if line.trim_end() != "ply" {
        return Err(header_err("missing 'ply' magic".into()));
    }

    let mut format: Option<PlyFormat> = None;
    let mut elements: Vec<PlyElement> = Vec::new();
    loop {
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            return Err(header_err("unexpected end of header".into()));
        }
        let trimmed = line.trim();
        let mut tokens = trimmed.split_whitespace();
        match tokens.next() {
            Some("comment") | Some("obj_info") | None => {}
            Some("format") => {
                format = Some(match tokens.next() {
                    Some("ascii") => PlyFormat::Ascii,
                    Some("binary_little_endian") => PlyFormat::BinaryLittleEndian,
                    Some(other) => {
                        return Err(header_err(format!("unsupported format '{other}'")));
                    }
                    None => return Err(header_err("format line without a type".into())),
                });
            }
            Some("element") => {
                let name = tokens
                    .next()
                    .ok_or_else(|| header_err("element line without a name".into()))?
                    .to_string();
                let count: usize = tokens
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| header_err(format!("bad count for element '{name}'")))?;
                elements.push(PlyElement {
                    name,
                    count,
                    properties: Vec::new(),
                });
            }
            Some("property") => {
                let element = elements
                    .last_mut()
                    .ok_or_else(|| header_err("property before any element".into()))?;
                let first = tokens
                    .next()
                    .ok_or_else(|| header_err("property line without a type".into()))?;
                let kind = if first == "list" {
                    let count_type = tokens
                        .next()
                        .and_then(ScalarType::parse)
                        .ok_or_else(|| header_err("bad list count type".into()))?;
                    let elem_type = tokens
                        .next()
                        .and_then(ScalarType::parse)
                        .ok_or_else(|| header_err("bad list element type".into()))?;
                    PropertyKind::List(count_type, elem_type)
                } else {
                    PropertyKind::Scalar(ScalarType::parse(first).ok_or_else(|| {
                        Error::UnsupportedProperty {
                            path: path_str.clone(),
                            msg: format!("unknown property type '{first}'"),
                        }
                    })?)
                };
                let name = tokens
                    .next()
                    .ok_or_else(|| header_err("property line without a name".into()))?
                    .to_string();
                element.properties.push(PlyProperty { name, kind });
            }
            Some("end_header") => break,
            Some(other) => {
                return Err(header_err(format!("unrecognized header line '{other}'")));
            }
        }
    }
    let format = format.ok_or_else(|| header_err("missing format line".into()))?;

    let vertex_element = elements
        .iter()
        .find(|e| e.name == "vertex")
        .ok_or_else(|| header_err("missing vertex element".into()))?;
    for axis in ["x", "y", "z"] {
        let ok = vertex_element.properties.iter().any(
            |p| p.name == axis && matches!(p.kind, PropertyKind::Scalar(_)),
        );
        if !ok {
            return Err(Error::UnsupportedProperty {
                path: path_str.clone(),
                msg: format!("vertex element lacks scalar property '{axis}'"),
            });
        }
    }
    let has_face_element = elements.iter().any(|e| e.name == "face");

    let mut positions: Vec<Vec3> = Vec::new();
    let mut faces: Vec<[usize; 3]> = Vec::new();
    match format {
        PlyFormat::Ascii => read_ply_ascii(
            &mut reader,
            &path_str,
            &elements,
            &mut positions,
            &mut faces,
        )?,
        PlyFormat::BinaryLittleEndian => read_ply_binary(
            &mut reader,
            &path_str,
            &elements,
            &mut positions,
            &mut faces,
        )?,
    }

    if positions.iter().any(|p| p.iter().any(|c| !c.is_finite())) {
        return Err(Error::Malformed {
            path: path_str,
            msg: "non-finite vertex coordinates".into(),
        });
    }
    if has_face_element {
        Ok(LoadedSurface::Mesh(TriangleMesh::new(positions, faces)?))
    } else {
        Ok(LoadedSurface::Cloud(PointCloud::new(positions)?))
    }
}

fn push_fan(
    indices: &[i64],
    vertex_count: usize,
    path: &str,
    faces: &mut Vec<[usize; 3]>,
) -> Result<()> {
    if indices.len() < 3 {
        return Err(Error::Malformed {
            path: path.to_string(),
            msg: format!("face with {} indices", indices.len()),
        });
    }
    let resolve = |raw: i64| -> Result<usize> {
        if raw < 0 || raw as usize >= vertex_count {
            return Err(Error::IndexOutOfRange {
                path: path.to_string(),
                line: 0,
                index: raw,
                count: vertex_count,
            });
        }
        Ok(raw as usize)
    };
    let v0 = resolve(indices[0])?;
    for i in 1..indices.len() - 1 {
        let v1 = resolve(indices[i])?;
        let v2 = resolve(indices[i + 1])?;
        if v0 != v1 && v1 != v2 && v0 != v2 {
            faces.push([v0, v1, v2]);
        }
    }
    Ok(())
}

fn read_ply_ascii<R: BufRead>(
    reader: &mut R,
    path: &str,
    elements: &[PlyElement],
    positions: &mut Vec<Vec3>,
    faces: &mut Vec<[usize; 3]>,
) -> Result<()> {
    // one token stream over the remaining lines
    let mut tokens: Vec<String> = Vec::new();
    for line in reader.lines() {
        let line = line?;
        tokens.extend(line.split_whitespace().map(|t| t.to_string()));
    }
    let mut cursor = 0usize;
    let mut next_token = |what: &str| -> Result<String> {
        if cursor >= tokens.len() {
            return Err(Error::Malformed {
                path: path.to_string(),
                msg: format!("unexpected end of file while reading {what}"),
            });
        }
        cursor += 1;
        Ok(tokens[cursor - 1].clone())
    };
    let mut next_f64 = |what: &str| -> Result<f64> {
        let t = next_token(what)?;
        t.parse().map_err(|_| Error::Malformed {
            path: path.to_string(),
            msg: format!("bad numeric token '{t}' in {what}"),
        })
    };

    for element in elements {
        let is_vertex = element.name == "vertex";
        let is_face = element.name == "face";
        for _ in 0..element.count {
            let mut coord = [0.0f64; 3];
            let mut face_indices: Vec<i64> = Vec::new();
            for prop in &element.properties {
                match &prop.kind {
                    PropertyKind::Scalar(_) => {
                        let v = next_f64(&format!("{}.{}", element.name, prop.name))?;
                        if is_vertex {
                            match prop.name.as_str() {
                                "x" => coord[0] = v,
                                "y" => coord[1] = v,
                                "z" => coord[2] = v,
                                _ => {}
                            }
                        }
                    }
                    PropertyKind::List(_, _) => {
                        let count =
                            next_f64(&format!("{}.{} count", element.name, prop.name))? as usize;
                        let is_index_list = is_face
                            && (prop.name == "vertex_indices" || prop.name == "vertex_index");
                        for _ in 0..count {
                            let v = next_f64(&format!("{}.{}", element.name, prop.name))?;
                            if is_index_list {
                                face_indices.push(v as i64);
                            }
                        }
                    }
                }
            }
            if is_vertex {
                positions.push(coord);
            }
            if is_face && !face_indices.is_empty() {
                push_fan(&face_indices, positions.len(), path, faces)?;
            }
        }
    }
    Ok(())
}

fn read_ply_binary<R: Read>(
    reader: &mut R,
    path: &str,
    elements: &[PlyElement],
    positions: &mut Vec<Vec3>,
    faces: &mut Vec<[usize; 3]>,
) -> Result<()> {
    let mut read_scalar = |t: ScalarType, what: &str| -> Result<f64> {
        let mut buf = [0u8; 8];
        let slice = &mut buf[..t.size()];
        if let Err(e) = reader.read_exact(slice) {
            return if e.kind() == std::io::ErrorKind::UnexpectedEof {
                Err(Error::Malformed {
                    path: path.to_string(),
                    msg: format!("unexpected end of file while reading {what}"),
                })
            } else {
                Err(Error::Io(e))
            };
        }
        Ok(match t {
            ScalarType::I8 => i8::from_le_bytes([buf[0]]) as f64,
            ScalarType::U8 => buf[0] as f64,
            ScalarType::I16 => i16::from_le_bytes([buf[0], buf[1]]) as f64,
            ScalarType::U16 => u16::from_le_bytes([buf[0], buf[1]]) as f64,
            ScalarType::I32 => i32::from_le_bytes([buf[0], buf[1], buf[2], buf[3]]) as f64,
            ScalarType::U32 => u32::from_le_bytes([buf[0], buf[1], buf[2], buf[3]]) as f64,
            ScalarType::F32 => f32::from_le_bytes([buf[0], buf[1], buf[2], buf[3]]) as f64,
            ScalarType::F64 => f64::from_le_bytes(buf),
        })
    };

    for element in elements {
        let is_vertex = element.name == "vertex";
        let is_face = element.name == "face";
        for _ in 0..element.count {
            let mut coord = [0.0f64; 3];
            let mut face_indices: Vec<i64> = Vec::new();
            for prop in &element.properties {
                let what = format!("{}.{}", element.name, prop.name);
                match &prop.kind {
                    PropertyKind::Scalar(t) => {
                        let v = read_scalar(*t, &what)?;
                        if is_vertex {
                            match prop.name.as_str() {
                                "x" => coord[0] = v,
                                "y" => coord[1] = v,
                                "z" => coord[2] = v,
                                _ => {}
                            }
                        }
                    }
                    PropertyKind::List(count_type, elem_type) => {
                        let count = read_scalar(*count_type, &what)? as usize;
                        let is_index_list = is_face
                            && (prop.name == "vertex_indices" || prop.name == "vertex_index");
                        for _ in 0..count {
                            let v = read_scalar(*elem_type, &what)?;
                            if is_index_list {
                                face_indices.push(v as i64);
                            }
                        }
                    }
                }
            }
            if is_vertex {
                positions.push(coord);
            }
            if is_face && !face_indices.is_empty() {
                push_fan(&face_indices, positions.len(), path, faces)?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_temp(content: &[u8], ext: &str) -> tempfile::NamedTempFile {
        let file = tempfile::Builder::new()
            .suffix(&format!(".{ext}"))
            .tempfile()
            .unwrap();
        std::fs::write(file.path(), content).unwrap();
        file
    }

    #[test]
    fn obj_minimal_triangle() {
        let f = write_temp(b"v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n", "obj");
        let mesh = load_obj(f.path()).unwrap();
        assert_eq!(mesh.vertex_count(), 3);
        assert_eq!(mesh.face_count(), 1);
        assert_eq!(mesh.faces[0], [0, 1, 2]);
    }

    #[test]
    fn obj_quad_fan_triangulates() {
        let f = write_temp(
            b"v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n",
            "obj",
        );
        let mesh = load_obj(f.path()).unwrap();
        assert_eq!(mesh.faces, vec![[0, 1, 2], [0, 2, 3]]);
    }

    #[test]
    fn obj_index_out_of_range_names_line() {
        let f = write_temp(b"v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n", "obj");
        match load_obj(f.path()) {
            Err(Error::IndexOutOfRange { line, index, .. }) => {
                assert_eq!(line, 4);
                assert_eq!(index, 9);
            }
            other => panic!("expected index error, got {other:?}"),
        }
    }

    #[test]
    fn obj_ignores_normals_and_comments() {
        let f = write_temp(
            b"# comment\nvn 0 0 1\nv 0 0 0\nv 1 0 0\nv 0 1 0\nvt 0 0\nf 1/1/1 2/2/1 3/3/1\n",
            "obj",
        );
        let mesh = load_obj(f.path()).unwrap();
        assert_eq!(mesh.vertex_count(), 3);
        assert_eq!(mesh.face_count(), 1);
    }

    #[test]
    fn obj_round_trip_preserves_geometry() {
        let mesh = crate::shapes::icosphere(1);
        let f = tempfile::Builder::new().suffix(".obj").tempfile().unwrap();
        write_obj_mesh(f.path(), &mesh).unwrap();
        let back = load_obj(f.path()).unwrap();
        assert_eq!(back.vertex_count(), mesh.vertex_count());
        assert_eq!(back.face_count(), mesh.face_count());
        for (a, b) in mesh.positions.iter().zip(&back.positions) {
            for d in 0..3 {
                assert!((a[d] - b[d]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn ply_ascii_cloud_when_no_face_element() {
        let body = b"ply\nformat ascii 1.0\nelement vertex 4\nproperty float x\nproperty float y\nproperty float z\nend_header\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n";
        let f = write_temp(body, "ply");
        match load_ply(f.path()).unwrap() {
            LoadedSurface::Cloud(c) => assert_eq!(c.len(), 4),
            LoadedSurface::Mesh(_) => panic!("expected point cloud"),
        }
    }

    #[test]
    fn ply_ascii_mesh_with_faces() {
        let body = b"ply\nformat ascii 1.0\nelement vertex 4\nproperty float x\nproperty float y\nproperty float z\nelement face 2\nproperty list uchar int vertex_indices\nend_header\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n3 0 1 2\n3 0 2 3\n";
        let f = write_temp(body, "ply");
        match load_ply(f.path()).unwrap() {
            LoadedSurface::Mesh(m) => {
                assert_eq!(m.vertex_count(), 4);
                assert_eq!(m.face_count(), 2);
            }
            LoadedSurface::Cloud(_) => panic!("expected mesh"),
        }
    }

    #[test]
    fn ply_truncated_body_is_malformed() {
        let body = b"ply\nformat ascii 1.0\nelement vertex 10\nproperty float x\nproperty float y\nproperty float z\nend_header\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n0 0 0\n1 0 0\n0 1 0\n0 0 1\n1 1 1\n";
        let f = write_temp(body, "ply");
        assert!(matches!(
            load_ply(f.path()),
            Err(Error::Malformed { .. })
        ));
    }

    #[test]
    fn ply_binary_little_endian_round_trip() {
        let mut body: Vec<u8> = Vec::new();
        body.extend_from_slice(
            b"ply\nformat binary_little_endian 1.0\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n",
        );
        for p in [[0.0f32, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]] {
            for c in p {
                body.extend_from_slice(&c.to_le_bytes());
            }
        }
        body.push(3u8);
        for idx in [0i32, 1, 2] {
            body.extend_from_slice(&idx.to_le_bytes());
        }
        let f = write_temp(&body, "ply");
        match load_ply(f.path()).unwrap() {
            LoadedSurface::Mesh(m) => {
                assert_eq!(m.vertex_count(), 3);
                assert_eq!(m.faces, vec![[0, 1, 2]]);
            }
            LoadedSurface::Cloud(_) => panic!("expected mesh"),
        }
    }

    #[test]
    fn ply_skips_extra_vertex_properties() {
        let body = b"ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\nproperty uchar red\nend_header\n0 0 0 255\n1 0 0 128\n";
        let f = write_temp(body, "ply");
        match load_ply(f.path()).unwrap() {
            LoadedSurface::Cloud(c) => {
                assert_eq!(c.len(), 2);
                assert_eq!(c.positions[1], [1.0, 0.0, 0.0]);
            }
            LoadedSurface::Mesh(_) => panic!("expected point cloud"),
        }
    }

    #[test]
    fn ply_missing_coordinate_property_is_unsupported() {
        let body = b"ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\nend_header\n0 0\n";
        let f = write_temp(body, "ply");
        assert!(matches!(
            load_ply(f.path()),
            Err(Error::UnsupportedProperty { .. })
        ));
    }

    #[test]
    fn ply_rejects_big_endian() {
        let body = b"ply\nformat binary_big_endian 1.0\nelement vertex 0\nproperty float x\nproperty float y\nproperty float z\nend_header\n";
        let f = write_temp(body, "ply");
        assert!(matches!(
            load_ply(f.path()),
            Err(Error::MalformedHeader { .. })
        ));
    }
}
