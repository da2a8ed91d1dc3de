//! Mesh and grid file formats.
//!
//! * Meshes: ASCII OBJ (`v`/`f` records only) and binary little-endian PLY.
//! * Grids (depth maps, projection maps, voxel grids): raw 32-bit
//!   little-endian floats, x fastest, with a JSON sidecar of the same stem.
//!   Masks are stored the same way as 0/1 floats in `<stem>_mask.raw`.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{Aabb, Vec3};
use crate::types::{DepthMap, FieldKind, ProjectionMap, TriangleMesh, VoxelGrid};

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Loads an `.obj` or `.ply` mesh, chosen by extension.
pub fn read_mesh(path: &Path) -> Result<TriangleMesh> {
    match extension(path).as_deref() {
        Some("obj") => read_obj(path),
        Some("ply") => read_ply(path),
        _ => Err(Error::parse(path, "unsupported mesh extension (expected .obj or .ply)")),
    }
}

pub fn write_mesh(path: &Path, mesh: &TriangleMesh) -> Result<()> {
    match extension(path).as_deref() {
        Some("obj") => write_obj(path, mesh),
        Some("ply") => write_ply(path, mesh),
        _ => Err(Error::parse(path, "unsupported mesh extension (expected .obj or .ply)")),
    }
}

fn extension(path: &Path) -> Option<String> {
    path.extension().map(|e| e.to_string_lossy().to_ascii_lowercase())
}

pub fn read_obj(path: &Path) -> Result<TriangleMesh> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let mut tok = line.split_whitespace();
        let bad = |what: &str| Error::parse(path, format!("line {}: {what}", lineno + 1));
        match tok.next() {
            Some("v") => {
                let mut c = [0.0; 3];
                for slot in &mut c {
                    *slot = tok
                        .next()
                        .and_then(|t| t.parse().ok())
                        .ok_or_else(|| bad("malformed vertex"))?;
                }
                vertices.push(Vec3::from(c));
            }
            Some("f") => {
                let idx: Vec<usize> = tok
                    .map(|t| {
                        let first = t.split('/').next().unwrap_or("");
                        let i: i64 = first.parse().map_err(|_| bad("malformed face index"))?;
                        let n = vertices.len() as i64;
                        let resolved = if i > 0 { i - 1 } else { n + i };
                        if i == 0 || resolved < 0 {
                            return Err(bad("face index out of range"));
                        }
                        Ok(resolved as usize)
                    })
                    .collect::<Result<_>>()?;
                if idx.len() < 3 {
                    return Err(bad("face with fewer than 3 vertices"));
                }
                for k in 1..idx.len() - 1 {
                    faces.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    TriangleMesh::new(vertices, faces).map_err(|e| Error::parse(path, e.to_string()))
}

pub fn write_obj(path: &Path, mesh: &TriangleMesh) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let res: std::io::Result<()> = (|| {
        for v in mesh.vertices() {
            writeln!(w, "v {} {} {}", v.x, v.y, v.z)?;
        }
        for f in mesh.faces() {
            writeln!(w, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1)?;
        }
        w.flush()
    })();
    res.map_err(|e| Error::io(path, e))
}

pub fn write_ply(path: &Path, mesh: &TriangleMesh) -> Result<()> {
    let mut buf = Vec::new();
    write!(
        buf,
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\nelement face {}\nproperty list uchar int vertex_indices\nend_header\n",
        mesh.vertices().len(),
        mesh.faces().len()
    )
    .expect("writing to a Vec cannot fail");
    for v in mesh.vertices() {
        for c in v.iter() {
            buf.extend_from_slice(&c.to_le_bytes());
        }
    }
    for f in mesh.faces() {
        buf.push(3);
        for &i in f {
            buf.extend_from_slice(&(i as i32).to_le_bytes());
        }
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy)]
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

    fn read(self, data: &[u8], pos: &mut usize) -> Option<f64> {
        let size = match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        };
        let b = data.get(*pos..*pos + size)?;
        *pos += size;
        Some(match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes(b.try_into().ok()?) as f64,
            Scalar::U32 => u32::from_le_bytes(b.try_into().ok()?) as f64,
            Scalar::F32 => f32::from_le_bytes(b.try_into().ok()?) as f64,
            Scalar::F64 => f64::from_le_bytes(b.try_into().ok()?),
        })
    }
}

enum Property {
    Scalar(String, Scalar),
    List(String, Scalar, Scalar),
}

struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

pub fn read_ply(path: &Path) -> Result<TriangleMesh> {
    let mut data = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut data))
        .map_err(|e| Error::io(path, e))?;
    let bad = |m: &str| Error::parse(path, m.to_string());
    let marker = b"end_header";
    let end = data
        .windows(marker.len())
        .position(|w| w == marker)
        .ok_or_else(|| bad("missing end_header"))?;
    let mut body = end + marker.len();
    if data.get(body) == Some(&b'\r') {
        body += 1;
    }
    if data.get(body) != Some(&b'\n') {
        return Err(bad("malformed end_header line"));
    }
    body += 1;
    let header = std::str::from_utf8(&data[..end]).map_err(|_| bad("header is not UTF-8"))?;
    let mut lines = header.lines();
    if lines.next().map(str::trim) != Some("ply") {
        return Err(bad("missing ply magic"));
    }
    let mut elements: Vec<Element> = Vec::new();
    for line in lines {
        let t: Vec<&str> = line.split_whitespace().collect();
        match t.as_slice() {
            ["format", "binary_little_endian", _] => {}
            ["format", other, _] => return Err(bad(&format!("unsupported PLY format {other}"))),
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count.parse().map_err(|_| bad("bad element count"))?,
                props: Vec::new(),
            }),
            ["property", "list", ct, it, name] => {
                let el = elements.last_mut().ok_or_else(|| bad("property before element"))?;
                let ct = Scalar::parse(ct).ok_or_else(|| bad("unknown list count type"))?;
                let it = Scalar::parse(it).ok_or_else(|| bad("unknown list item type"))?;
                el.props.push(Property::List(name.to_string(), ct, it));
            }
            ["property", ty, name] => {
                let el = elements.last_mut().ok_or_else(|| bad("property before element"))?;
                let ty = Scalar::parse(ty).ok_or_else(|| bad("unknown property type"))?;
                el.props.push(Property::Scalar(name.to_string(), ty));
            }
            _ => {}
        }
    }
    let mut pos = body;
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    let truncated = || bad("truncated PLY body");
    for el in &elements {
        for _ in 0..el.count {
            let mut v = [0.0; 3];
            for p in &el.props {
                match p {
                    Property::Scalar(name, ty) => {
                        let x = ty.read(&data, &mut pos).ok_or_else(truncated)?;
                        match name.as_str() {
                            "x" => v[0] = x,
                            "y" => v[1] = x,
                            "z" => v[2] = x,
                            _ => {}
                        }
                    }
                    Property::List(name, ct, it) => {
                        let n = ct.read(&data, &mut pos).ok_or_else(truncated)? as usize;
                        let mut idx = Vec::with_capacity(n);
                        for _ in 0..n {
                            idx.push(it.read(&data, &mut pos).ok_or_else(truncated)?);
                        }
                        if el.name == "face" && (name == "vertex_indices" || name == "vertex_index") {
                            if n < 3 || idx.iter().any(|&i| i < 0.0) {
                                return Err(bad("invalid face"));
                            }
                            for k in 1..n - 1 {
                                faces.push([idx[0] as usize, idx[k] as usize, idx[k + 1] as usize]);
                            }
                        }
                    }
                }
            }
            if el.name == "vertex" {
                vertices.push(Vec3::from(v));
            }
        }
    }
    TriangleMesh::new(vertices, faces).map_err(|e| Error::parse(path, e.to_string()))
}

/// What a raw grid file holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridContent {
    Occupancy,
    Sdf,
    Depth,
    Projection,
}

/// JSON sidecar describing a raw float grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSidecar {
    /// `[nx, ny, nz]`; images use `[width, height, 1]`.
    pub resolution: [usize; 3],
    pub bounds: Option<Aabb>,
    pub channels: usize,
    pub mask: bool,
    pub kind: GridContent,
    /// Raw data file name, relative to the sidecar.
    pub data: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_data: Option<String>,
}

fn raw_paths(raw: &Path) -> (PathBuf, PathBuf) {
    let stem = raw.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    (raw.with_extension("json"), raw.with_file_name(format!("{stem}_mask.raw")))
}

fn write_f32s(path: &Path, values: impl Iterator<Item = f64>) -> Result<()> {
    let mut buf = Vec::new();
    for v in values {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

fn read_f32s(path: &Path, expected: usize) -> Result<Vec<f64>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != expected * 4 {
        return Err(Error::parse(
            path,
            format!("expected {} bytes, found {}", expected * 4, bytes.len()),
        ));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn write_grid_files(raw: &Path, sidecar: GridSidecar, values: impl Iterator<Item = f64>, mask: Option<&[bool]>) -> Result<()> {
    let (json, mask_path) = raw_paths(raw);
    write_f32s(raw, values)?;
    let mut sidecar = sidecar;
    sidecar.data = file_name(raw);
    if let Some(mask) = mask {
        write_f32s(&mask_path, mask.iter().map(|&m| if m { 1.0 } else { 0.0 }))?;
        sidecar.mask = true;
        sidecar.mask_data = Some(file_name(&mask_path));
    }
    write_json(&json, &sidecar)
}

/// Reads a sidecar given either the `.json` or the `.raw` path.
pub fn read_sidecar(path: &Path) -> Result<(GridSidecar, PathBuf)> {
    let json = path.with_extension("json");
    let sc: GridSidecar = read_json(&json)?;
    let dir = json.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((sc, dir))
}

fn read_mask(dir: &Path, sc: &GridSidecar, n: usize) -> Result<Vec<bool>> {
    match (&sc.mask_data, sc.mask) {
        (Some(name), true) => Ok(read_f32s(&dir.join(name), n)?.into_iter().map(|v| v != 0.0).collect()),
        _ => Ok(vec![true; n]),
    }
}

pub fn write_voxel_grid(raw: &Path, grid: &VoxelGrid) -> Result<()> {
    let sidecar = GridSidecar {
        resolution: grid.resolution(),
        bounds: Some(*grid.bounds()),
        channels: 1,
        mask: false,
        kind: match grid.kind() {
            FieldKind::Occupancy => GridContent::Occupancy,
            FieldKind::Sdf => GridContent::Sdf,
        },
        data: String::new(),
        mask_data: None,
    };
    write_grid_files(raw, sidecar, grid.values().iter().copied(), None)
}

pub fn read_voxel_grid(path: &Path) -> Result<VoxelGrid> {
    let (sc, dir) = read_sidecar(path)?;
    let kind = match sc.kind {
        GridContent::Occupancy => FieldKind::Occupancy,
        GridContent::Sdf => FieldKind::Sdf,
        other => return Err(Error::parse(path, format!("expected a voxel grid, found {other:?}"))),
    };
    let bounds = sc.bounds.ok_or_else(|| Error::parse(path, "voxel grid sidecar lacks bounds"))?;
    let n = sc.resolution.iter().product();
    let values = read_f32s(&dir.join(&sc.data), n)?;
    VoxelGrid::new(sc.resolution, bounds, kind, values)
}

pub fn write_depth_map(raw: &Path, depth: &DepthMap) -> Result<()> {
    let sidecar = GridSidecar {
        resolution: [depth.width(), depth.height(), 1],
        bounds: None,
        channels: 1,
        mask: true,
        kind: GridContent::Depth,
        data: String::new(),
        mask_data: None,
    };
    write_grid_files(raw, sidecar, depth.values().iter().copied(), Some(depth.mask()))
}

pub fn read_depth_map(path: &Path) -> Result<DepthMap> {
    let (sc, dir) = read_sidecar(path)?;
    if sc.kind != GridContent::Depth || sc.channels != 1 {
        return Err(Error::parse(path, "not a depth map sidecar"));
    }
    let [w, h, _] = sc.resolution;
    let values = read_f32s(&dir.join(&sc.data), w * h)?;
    let mask = read_mask(&dir, &sc, w * h)?;
    DepthMap::new(w, h, values, mask)
}

pub fn write_projection_map(raw: &Path, p: &ProjectionMap) -> Result<()> {
    let sidecar = GridSidecar {
        resolution: [p.width(), p.height(), 1],
        bounds: None,
        channels: 3,
        mask: true,
        kind: GridContent::Projection,
        data: String::new(),
        mask_data: None,
    };
    write_grid_files(raw, sidecar, p.points().iter().flat_map(|v| [v.x, v.y, v.z]), Some(p.mask()))
}

pub fn read_projection_map(path: &Path) -> Result<ProjectionMap> {
    let (sc, dir) = read_sidecar(path)?;
    if sc.kind != GridContent::Projection || sc.channels != 3 {
        return Err(Error::parse(path, "not a projection map sidecar"));
    }
    let [w, h, _] = sc.resolution;
    let flat = read_f32s(&dir.join(&sc.data), w * h * 3)?;
    let points = flat.chunks_exact(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect();
    let mask = read_mask(&dir, &sc, w * h)?;
    ProjectionMap::new(w, h, points, mask)
}
