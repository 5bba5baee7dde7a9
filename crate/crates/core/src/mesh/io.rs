//! OFF (read/write), ASCII PLY (read) and the CSV feature sidecar.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{FeatureMatrix, TriangleMesh, Vec3};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    Off,
    PlyAscii,
}

impl MeshFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "off" => Some(MeshFormat::Off),
            "ply" => Some(MeshFormat::PlyAscii),
            _ => None,
        }
    }
}

/// Loads a mesh, picking the format from the file extension.
pub fn load(path: impl AsRef<Path>) -> Result<TriangleMesh> {
    let path = path.as_ref();
    let format = MeshFormat::from_path(path).ok_or_else(|| Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        message: "unknown mesh extension (expected .off or .ply)".into(),
    })?;
    load_mesh(path, format)
}

pub fn load_mesh(path: impl AsRef<Path>, format: MeshFormat) -> Result<TriangleMesh> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    match format {
        MeshFormat::Off => parse_off(&text, path),
        MeshFormat::PlyAscii => parse_ply(&text, path),
    }
}

/// Writes the mesh; a mesh carrying features also gets a feature sidecar.
pub fn save_mesh(mesh: &TriangleMesh, path: impl AsRef<Path>, format: MeshFormat) -> Result<()> {
    let path = path.as_ref();
    if mesh.is_empty() {
        return Err(Error::EmptyMesh);
    }
    if format != MeshFormat::Off {
        return Err(Error::InvalidInput(
            "PLY output is not supported; use OFF".into(),
        ));
    }
    fs::write(path, format_off(mesh)).map_err(|e| Error::io(path, e))?;
    if let Some(features) = mesh.features() {
        save_features(features, feature_sidecar_path(path))?;
    }
    Ok(())
}

pub fn format_off(mesh: &TriangleMesh) -> String {
    let mut out = String::with_capacity(mesh.vertex_count() * 48 + mesh.face_count() * 24);
    out.push_str("OFF\n");
    let _ = writeln!(out, "{} {} 0", mesh.vertex_count(), mesh.face_count());
    // `{}` on f64 prints the shortest string that parses back to the same bits
    for v in mesh.vertices() {
        let _ = writeln!(out, "{} {} {}", v.x, v.y, v.z);
    }
    for [a, b, c] in mesh.faces() {
        let _ = writeln!(out, "3 {a} {b} {c}");
    }
    out
}

/// `lh.white.off` → `lh.white.features.csv`
pub fn feature_sidecar_path(mesh_path: &Path) -> PathBuf {
    mesh_path.with_extension("features.csv")
}

pub fn save_features(features: &FeatureMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    let header: Vec<String> = (0..features.cols()).map(|k| format!("f{k}")).collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for r in 0..features.rows() {
        let row: Vec<String> = features.row(r).iter().map(|x| x.to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn load_features(path: impl AsRef<Path>, vertex_count: usize) -> Result<FeatureMatrix> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let headers = reader.headers().map_err(|e| Error::csv(path, e))?.clone();
    for (k, h) in headers.iter().enumerate() {
        if h != format!("f{k}") {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 1,
                message: format!("expected header column f{k}, found {h:?}"),
            });
        }
    }
    let cols = headers.len();
    let mut data = Vec::with_capacity(vertex_count * cols);
    let mut rows = 0;
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::csv(path, e))?;
        for field in record.iter() {
            data.push(field.trim().parse::<f64>().map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 2,
                message: e.to_string(),
            })?);
        }
        rows += 1;
    }
    if rows != vertex_count {
        return Err(Error::ShapeMismatch(format!(
            "{}: {rows} feature rows for {vertex_count} vertices",
            path.display()
        )));
    }
    FeatureMatrix::from_row_major(rows, cols, data)
}

/// Content lines with their 1-based line numbers, comments and blanks removed.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, line)| {
        let line = line.split('#').next().unwrap_or("").trim();
        (!line.is_empty()).then_some((i + 1, line))
    })
}

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn parse_num<T: std::str::FromStr>(
    tok: Option<&str>,
    path: &Path,
    line: usize,
    what: &str,
) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    let tok = tok.ok_or_else(|| parse_error(path, line, format!("missing {what}")))?;
    tok.parse::<T>()
        .map_err(|e| parse_error(path, line, format!("bad {what} {tok:?}: {e}")))
}

pub fn parse_off(text: &str, path: &Path) -> Result<TriangleMesh> {
    let mut lines = content_lines(text);
    let (hline, header) = lines
        .next()
        .ok_or_else(|| parse_error(path, 1, "missing OFF header"))?;
    let mut header_tokens = header.split_whitespace();
    if header_tokens.next() != Some("OFF") {
        return Err(parse_error(path, hline, "expected OFF header"));
    }
    // counts may trail the keyword on the same line
    let rest: Vec<&str> = header_tokens.collect();
    let (cline, counts) = if rest.is_empty() {
        let (l, c) = lines
            .next()
            .ok_or_else(|| parse_error(path, hline + 1, "missing counts line"))?;
        (l, c.split_whitespace().collect::<Vec<_>>())
    } else {
        (hline, rest)
    };
    let mut it = counts.into_iter();
    let nv: usize = parse_num(it.next(), path, cline, "vertex count")?;
    let nf: usize = parse_num(it.next(), path, cline, "face count")?;

    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (l, line) = lines
            .next()
            .ok_or_else(|| parse_error(path, 0, "unexpected end of file in vertex block"))?;
        let mut t = line.split_whitespace();
        let x = parse_num(t.next(), path, l, "x coordinate")?;
        let y = parse_num(t.next(), path, l, "y coordinate")?;
        let z = parse_num(t.next(), path, l, "z coordinate")?;
        vertices.push(Vec3::new(x, y, z));
    }

    let mut faces = Vec::with_capacity(nf);
    for fi in 0..nf {
        let (l, line) = lines
            .next()
            .ok_or_else(|| parse_error(path, 0, "unexpected end of file in face block"))?;
        let mut t = line.split_whitespace();
        let arity: usize = parse_num(t.next(), path, l, "face arity")?;
        if arity != 3 {
            return Err(Error::NonTriangleFace { line: l, arity });
        }
        let mut f = [0u32; 3];
        for slot in &mut f {
            let idx: usize = parse_num(t.next(), path, l, "vertex index")?;
            if idx >= nv {
                return Err(Error::IndexOutOfRange {
                    face: fi,
                    index: idx,
                    vertex_count: nv,
                });
            }
            *slot = idx as u32;
        }
        faces.push(f);
    }
    TriangleMesh::new(vertices, faces)
}

pub fn parse_ply(text: &str, path: &Path) -> Result<TriangleMesh> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    match lines.next() {
        Some((_, "ply")) => {}
        _ => return Err(parse_error(path, 1, "expected ply magic")),
    }

    struct Element {
        name: String,
        count: usize,
        props: Vec<String>,
    }
    let mut elements: Vec<Element> = Vec::new();
    loop {
        let (l, line) = lines
            .next()
            .ok_or_else(|| parse_error(path, 0, "missing end_header"))?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            ["end_header"] => break,
            ["format", fmt, ..] => {
                if *fmt != "ascii" {
                    return Err(parse_error(
                        path,
                        l,
                        format!("unsupported PLY format {fmt}"),
                    ));
                }
            }
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: parse_num(Some(count), path, l, "element count")?,
                props: Vec::new(),
            }),
            ["property", "list", _, _, name] | ["property", _, name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| parse_error(path, l, "property before element"))?;
                el.props.push(name.to_string());
            }
            _ => {
                return Err(parse_error(
                    path,
                    l,
                    format!("unrecognized header line {line:?}"),
                ))
            }
        }
    }

    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    let mut nv = 0;
    for el in &elements {
        let pos = |name: &str| el.props.iter().position(|p| p == name);
        for _ in 0..el.count {
            let (l, line) = lines.next().ok_or_else(|| {
                parse_error(path, 0, format!("unexpected end of {} block", el.name))
            })?;
            let toks: Vec<&str> = line.split_whitespace().collect();
            match el.name.as_str() {
                "vertex" => {
                    let coord = |axis: &str| -> Result<f64> {
                        let k = pos(axis)
                            .ok_or_else(|| parse_error(path, l, format!("vertex lacks {axis}")))?;
                        parse_num(toks.get(k).copied(), path, l, axis)
                    };
                    vertices.push(Vec3::new(coord("x")?, coord("y")?, coord("z")?));
                    nv = vertices.len();
                }
                "face" => {
                    let arity: usize = parse_num(toks.first().copied(), path, l, "face arity")?;
                    if arity != 3 {
                        return Err(Error::NonTriangleFace { line: l, arity });
                    }
                    let mut f = [0u32; 3];
                    for (k, slot) in f.iter_mut().enumerate() {
                        let idx: usize =
                            parse_num(toks.get(k + 1).copied(), path, l, "vertex index")?;
                        if idx >= nv {
                            return Err(Error::IndexOutOfRange {
                                face: faces.len(),
                                index: idx,
                                vertex_count: nv,
                            });
                        }
                        *slot = idx as u32;
                    }
                    faces.push(f);
                }
                _ => {}
            }
        }
    }
    TriangleMesh::new(vertices, faces)
}
