//! Readers for PQR charge files and OFF / MSMS triangle meshes, plus the
//! per-node potential output.
//!
//! Potential file layout (plain text, one node per line, global node order):
//!
//! ```text
//! # pbbem potential v1
//! # index x y z nx ny nz f h
//! 0 1.0e1 ...
//! ```
//!
//! Positions are in Å, `f` in e/Å and `h` in e/Å² (the solver's internal
//! units, where a unit charge in vacuum produces `1/(4πr)`).

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::surface::NodePatch;
use crate::Vec3;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("no ATOM/HETATM records found")]
    NoAtoms,
    #[error("line {line}: face with {arity} vertices is unsupported (triangles only)")]
    UnsupportedFace { line: usize, arity: usize },
    #[error("{what}: declared {declared}, found {found}")]
    CountMismatch {
        what: &'static str,
        declared: usize,
        found: usize,
    },
    #[error("triangle {triangle} references vertex {index} but only {count} vertices exist")]
    IndexOutOfRange {
        triangle: usize,
        index: usize,
        count: usize,
    },
    #[error("triangle {0} is degenerate (repeated vertex or zero area)")]
    DegenerateTriangle(usize),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// One point charge from a PQR file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AtomRecord {
    /// Position in Å.
    pub center: Vec3,
    /// Charge in units of e.
    pub charge: f64,
    /// Radius in Å.
    pub radius: f64,
}

/// Triangle mesh as read from disk, before topology checks.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[usize; 3]>,
    /// Per-vertex normals, when the format carries them (MSMS).
    pub normals: Option<Vec<Vec3>>,
}

impl RawMesh {
    fn check(&self) -> Result<(), FormatError> {
        let count = self.vertices.len();
        for (t, tri) in self.triangles.iter().enumerate() {
            for &index in tri {
                if index >= count {
                    return Err(FormatError::IndexOutOfRange {
                        triangle: t,
                        index,
                        count,
                    });
                }
            }
            let [a, b, c] = tri.map(|i| self.vertices[i]);
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] || (b - a).cross(&(c - a)).norm() == 0.0 {
                return Err(FormatError::DegenerateTriangle(t));
            }
        }
        Ok(())
    }
}

fn parse_f64(token: &str, line: usize) -> Result<f64, FormatError> {
    let value: f64 = token.parse().map_err(|_| FormatError::Parse {
        line,
        message: format!("malformed number {token:?}"),
    })?;
    if !value.is_finite() {
        return Err(FormatError::Parse {
            line,
            message: format!("non-finite number {token:?}"),
        });
    }
    Ok(value)
}

fn parse_usize(token: &str, line: usize) -> Result<usize, FormatError> {
    token.parse().map_err(|_| FormatError::Parse {
        line,
        message: format!("malformed integer {token:?}"),
    })
}

/// Parse whitespace-delimited PQR text. The last five tokens of each
/// ATOM/HETATM line are read as `x y z q r`.
pub fn parse_pqr(text: &str) -> Result<Vec<AtomRecord>, FormatError> {
    let mut atoms = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let tokens: Vec<&str> = raw.split_whitespace().collect();
        match tokens.first() {
            Some(&"ATOM") | Some(&"HETATM") => {}
            _ => continue,
        }
        if tokens.len() < 6 {
            return Err(FormatError::Parse {
                line,
                message: "expected x y z charge radius fields".into(),
            });
        }
        let tail = &tokens[tokens.len() - 5..];
        let mut v = [0.0; 5];
        for (slot, token) in v.iter_mut().zip(tail) {
            *slot = parse_f64(token, line)?;
        }
        if v[4] < 0.0 {
            return Err(FormatError::Parse {
                line,
                message: format!("negative radius {}", v[4]),
            });
        }
        atoms.push(AtomRecord {
            center: Vec3::new(v[0], v[1], v[2]),
            charge: v[3],
            radius: v[4],
        });
    }
    if atoms.is_empty() {
        return Err(FormatError::NoAtoms);
    }
    Ok(atoms)
}

/// Non-empty lines with `#` comments stripped, paired with 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, raw)| {
        let body = raw.split('#').next().unwrap_or("").trim();
        (!body.is_empty()).then_some((i + 1, body))
    })
}

/// Parse an OFF triangle mesh.
pub fn parse_off(text: &str) -> Result<RawMesh, FormatError> {
    let mut lines = content_lines(text);
    let (line, first) = lines.next().ok_or(FormatError::Parse {
        line: 1,
        message: "empty OFF file".into(),
    })?;
    let mut header: Vec<&str> = first.split_whitespace().collect();
    if header.first() != Some(&"OFF") {
        return Err(FormatError::Parse {
            line,
            message: "missing OFF keyword".into(),
        });
    }
    header.remove(0);
    let (count_line, counts) = if header.is_empty() {
        let (l, body) = lines.next().ok_or(FormatError::Parse {
            line,
            message: "missing counts line".into(),
        })?;
        (l, body.split_whitespace().collect::<Vec<_>>())
    } else {
        (line, header)
    };
    if counts.len() < 2 {
        return Err(FormatError::Parse {
            line: count_line,
            message: "counts line needs vertex and face counts".into(),
        });
    }
    let nv = parse_usize(counts[0], count_line)?;
    let nf = parse_usize(counts[1], count_line)?;

    let mut mesh = RawMesh::default();
    for _ in 0..nv {
        let Some((l, body)) = lines.next() else {
            return Err(FormatError::CountMismatch {
                what: "OFF vertices",
                declared: nv,
                found: mesh.vertices.len(),
            });
        };
        let t: Vec<&str> = body.split_whitespace().collect();
        if t.len() < 3 {
            return Err(FormatError::Parse {
                line: l,
                message: "vertex needs three coordinates".into(),
            });
        }
        mesh.vertices.push(Vec3::new(
            parse_f64(t[0], l)?,
            parse_f64(t[1], l)?,
            parse_f64(t[2], l)?,
        ));
    }
    for _ in 0..nf {
        let Some((l, body)) = lines.next() else {
            return Err(FormatError::CountMismatch {
                what: "OFF faces",
                declared: nf,
                found: mesh.triangles.len(),
            });
        };
        let t: Vec<&str> = body.split_whitespace().collect();
        let arity = parse_usize(t[0], l)?;
        if arity != 3 {
            return Err(FormatError::UnsupportedFace { line: l, arity });
        }
        if t.len() < 4 {
            return Err(FormatError::Parse {
                line: l,
                message: "triangle needs three indices".into(),
            });
        }
        mesh.triangles
            .push([parse_usize(t[1], l)?, parse_usize(t[2], l)?, parse_usize(t[3], l)?]);
    }
    if let Some((l, _)) = lines.next() {
        return Err(FormatError::Parse {
            line: l,
            message: "trailing data after declared faces".into(),
        });
    }
    mesh.check()?;
    Ok(mesh)
}

/// Serialize a mesh as OFF. Coordinates use the shortest round-trip
/// representation, so `parse_off(&write_off(m))` reproduces them bit-exactly.
pub fn write_off(mesh: &RawMesh) -> String {
    let mut out = String::new();
    writeln!(out, "OFF").unwrap();
    writeln!(out, "{} {} 0", mesh.vertices.len(), mesh.triangles.len()).unwrap();
    for v in &mesh.vertices {
        writeln!(out, "{:?} {:?} {:?}", v.x, v.y, v.z).unwrap();
    }
    for t in &mesh.triangles {
        writeln!(out, "3 {} {} {}", t[0], t[1], t[2]).unwrap();
    }
    out
}

/// Data lines of an MSMS file: `#` lines skipped, first remaining line is
/// the counts line whose first token is the record count.
fn msms_records<'a>(text: &'a str, what: &'static str) -> Result<Vec<(usize, Vec<&'a str>)>, FormatError> {
    let mut rows = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim_start().starts_with('#') && !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l.split_whitespace().collect::<Vec<_>>()));
    let (line, counts) = rows.next().ok_or(FormatError::Parse {
        line: 1,
        message: format!("{what}: missing counts line"),
    })?;
    let declared = parse_usize(counts[0], line)?;
    let records: Vec<_> = rows.collect();
    if records.len() != declared {
        return Err(FormatError::CountMismatch {
            what,
            declared,
            found: records.len(),
        });
    }
    Ok(records)
}

/// Parse an MSMS `.vert` / `.face` pair. Face indices are 1-based on disk.
pub fn parse_msms(vert_text: &str, face_text: &str) -> Result<RawMesh, FormatError> {
    let mut mesh = RawMesh::default();
    let mut normals = Vec::new();
    for (l, t) in msms_records(vert_text, "MSMS vertices")? {
        if t.len() < 6 {
            return Err(FormatError::Parse {
                line: l,
                message: "vertex needs position and normal".into(),
            });
        }
        let mut v = [0.0; 6];
        for (slot, token) in v.iter_mut().zip(&t) {
            *slot = parse_f64(token, l)?;
        }
        mesh.vertices.push(Vec3::new(v[0], v[1], v[2]));
        normals.push(Vec3::new(v[3], v[4], v[5]));
    }
    for (l, t) in msms_records(face_text, "MSMS faces")? {
        if t.len() < 3 {
            return Err(FormatError::Parse {
                line: l,
                message: "face needs three indices".into(),
            });
        }
        let mut tri = [0usize; 3];
        for (slot, token) in tri.iter_mut().zip(&t) {
            let one_based = parse_usize(token, l)?;
            if one_based == 0 || one_based > mesh.vertices.len() {
                return Err(FormatError::IndexOutOfRange {
                    triangle: mesh.triangles.len(),
                    index: one_based,
                    count: mesh.vertices.len(),
                });
            }
            *slot = one_based - 1;
        }
        mesh.triangles.push(tri);
    }
    mesh.normals = Some(normals);
    mesh.check()?;
    Ok(mesh)
}

fn read(path: &Path) -> Result<String, FormatError> {
    fs::read_to_string(path).map_err(|source| FormatError::Io {
        path: path.to_owned(),
        source,
    })
}

pub fn read_pqr(path: impl AsRef<Path>) -> Result<Vec<AtomRecord>, FormatError> {
    parse_pqr(&read(path.as_ref())?)
}

pub fn read_off(path: impl AsRef<Path>) -> Result<RawMesh, FormatError> {
    parse_off(&read(path.as_ref())?)
}

/// Read an MSMS pair. `path` may name the `.vert` file, the `.face` file, or
/// the common stem.
pub fn read_msms(path: impl AsRef<Path>) -> Result<RawMesh, FormatError> {
    let path = path.as_ref();
    let stem = match path.extension().and_then(|e| e.to_str()) {
        Some("vert") | Some("face") => path.with_extension(""),
        _ => path.to_owned(),
    };
    let vert = read(&stem.with_extension("vert"))?;
    let face = read(&stem.with_extension("face"))?;
    parse_msms(&vert, &face)
}

/// Write one line per node: index, position, normal, `f`, `h`.
/// An existing file is truncated.
pub fn write_potential_file(
    nodes: &[NodePatch],
    f: &[f64],
    h: &[f64],
    path: impl AsRef<Path>,
) -> Result<(), FormatError> {
    let path = path.as_ref();
    if f.len() != nodes.len() || h.len() != nodes.len() {
        return Err(FormatError::CountMismatch {
            what: "potential values per node",
            declared: nodes.len(),
            found: f.len().min(h.len()),
        });
    }
    let mut out = String::with_capacity(nodes.len() * 160);
    out.push_str("# pbbem potential v1\n# index x y z nx ny nz f h\n");
    for (i, node) in nodes.iter().enumerate() {
        let (p, n) = (node.position, node.normal);
        writeln!(
            out,
            "{i} {:.10e} {:.10e} {:.10e} {:.10e} {:.10e} {:.10e} {:.12e} {:.12e}",
            p.x, p.y, p.z, n.x, n.y, n.z, f[i], h[i]
        )
        .unwrap();
    }
    fs::write(path, out).map_err(|source| FormatError::Io {
        path: path.to_owned(),
        source,
    })
}
