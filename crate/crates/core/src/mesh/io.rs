//! Plain-text mesh format.
//!
//! ```text
//! mesh2d v1
//! nodes N
//! x y shape_flag
//! triangles M
//! i j k region
//! boundary B
//! i j marker
//! field <name> <arity>
//! v            (or "vx vy", one line per node)
//! ```
//!
//! Floats are written in scientific notation with 17 significant digits, which reads
//! back bit-exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{BoundaryEdge, Marker, Mesh};
use crate::error::MeshError;
use crate::field::{Arity, NodalField};

const HEADER: &str = "mesh2d v1";

fn fmt_f64(out: &mut String, v: f64) {
    let _ = write!(out, "{v:.16e}");
}

pub(crate) fn format_mesh(mesh: &Mesh, fields: &[(&str, &NodalField)]) -> Result<String, MeshError> {
    let mut out = String::with_capacity(64 * mesh.node_count());
    out.push_str(HEADER);
    out.push('\n');
    let _ = writeln!(out, "nodes {}", mesh.node_count());
    for (p, &shape) in mesh.nodes().iter().zip(mesh.node_is_shape()) {
        fmt_f64(&mut out, p[0]);
        out.push(' ');
        fmt_f64(&mut out, p[1]);
        let _ = writeln!(out, " {}", shape as u8);
    }
    let _ = writeln!(out, "triangles {}", mesh.triangle_count());
    for (t, r) in mesh.triangles().iter().zip(mesh.cell_region()) {
        let _ = writeln!(out, "{} {} {} {}", t[0], t[1], t[2], r);
    }
    let _ = writeln!(out, "boundary {}", mesh.boundary_edges().len());
    for e in mesh.boundary_edges() {
        let _ = writeln!(out, "{} {} {}", e.nodes[0], e.nodes[1], e.marker.name());
    }
    for (name, field) in fields {
        if name.is_empty() || name.contains(char::is_whitespace) {
            return Err(MeshError::InvalidInput(format!("invalid field name {name:?}")));
        }
        if field.node_count() != mesh.node_count() {
            return Err(MeshError::InvalidInput(format!(
                "field {name} has {} nodes, mesh has {}",
                field.node_count(),
                mesh.node_count()
            )));
        }
        let _ = writeln!(out, "field {} {}", name, field.arity().name());
        let k = field.arity().components();
        for chunk in field.values().chunks(k) {
            for (c, v) in chunk.iter().enumerate() {
                if c > 0 {
                    out.push(' ');
                }
                fmt_f64(&mut out, *v);
            }
            out.push('\n');
        }
    }
    Ok(out)
}

pub fn write_mesh(mesh: &Mesh, path: impl AsRef<Path>) -> Result<(), MeshError> {
    write_mesh_with_fields(mesh, &[], path)
}

/// Writes the mesh followed by one `field` section per entry.
pub fn write_mesh_with_fields(
    mesh: &Mesh,
    fields: &[(&str, &NodalField)],
    path: impl AsRef<Path>,
) -> Result<(), MeshError> {
    let text = format_mesh(mesh, fields)?;
    fs::write(path, text)?;
    Ok(())
}

pub fn read_mesh(path: impl AsRef<Path>) -> Result<Mesh, MeshError> {
    read_mesh_with_fields(path).map(|(m, _)| m)
}

pub fn read_mesh_with_fields(
    path: impl AsRef<Path>,
) -> Result<(Mesh, Vec<(String, NodalField)>), MeshError> {
    let text = fs::read_to_string(path)?;
    parse_mesh(&text)
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn next_tokens(&mut self) -> Option<Vec<&'a str>> {
        for (i, l) in self.inner.by_ref() {
            let t: Vec<&str> = l.split_whitespace().collect();
            if !t.is_empty() {
                self.line = i + 1;
                return Some(t);
            }
        }
        None
    }

    fn expect(&mut self, what: &str) -> Result<Vec<&'a str>, MeshError> {
        self.next_tokens().ok_or_else(|| MeshError::Parse {
            line: self.line + 1,
            msg: format!("unexpected end of file, expected {what}"),
        })
    }

    fn err(&self, msg: impl Into<String>) -> MeshError {
        MeshError::Parse {
            line: self.line,
            msg: msg.into(),
        }
    }

    fn section(&mut self, name: &str) -> Result<usize, MeshError> {
        let t = self.expect(name)?;
        if t.len() != 2 || t[0] != name {
            return Err(self.err(format!("expected `{name} <count>`")));
        }
        t[1].parse().map_err(|_| self.err(format!("bad count {:?}", t[1])))
    }

    fn float(&self, s: &str) -> Result<f64, MeshError> {
        s.parse().map_err(|_| self.err(format!("bad number {s:?}")))
    }

    fn index(&self, s: &str) -> Result<usize, MeshError> {
        s.parse().map_err(|_| self.err(format!("bad index {s:?}")))
    }
}

pub(crate) fn parse_mesh(text: &str) -> Result<(Mesh, Vec<(String, NodalField)>), MeshError> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        line: 0,
    };
    let header = lines.expect("header")?;
    if header.join(" ") != HEADER {
        return Err(lines.err(format!("expected header `{HEADER}`")));
    }
    let n = lines.section("nodes")?;
    let mut nodes = Vec::with_capacity(n);
    let mut flags = Vec::with_capacity(n);
    for _ in 0..n {
        let t = lines.expect("node")?;
        if t.len() != 3 {
            return Err(lines.err("node line needs `x y shape_flag`"));
        }
        nodes.push([lines.float(t[0])?, lines.float(t[1])?]);
        flags.push(match t[2] {
            "0" => false,
            "1" => true,
            other => return Err(lines.err(format!("bad shape flag {other:?}"))),
        });
    }
    let m = lines.section("triangles")?;
    let mut triangles = Vec::with_capacity(m);
    let mut regions = Vec::with_capacity(m);
    for _ in 0..m {
        let t = lines.expect("triangle")?;
        if t.len() != 4 {
            return Err(lines.err("triangle line needs `i j k region`"));
        }
        triangles.push([lines.index(t[0])?, lines.index(t[1])?, lines.index(t[2])?]);
        regions.push(t[3].parse().map_err(|_| lines.err(format!("bad region {:?}", t[3])))?);
    }
    let b = lines.section("boundary")?;
    let mut boundary = Vec::with_capacity(b);
    for _ in 0..b {
        let t = lines.expect("boundary edge")?;
        if t.len() != 3 {
            return Err(lines.err("boundary line needs `i j marker`"));
        }
        let marker = Marker::parse(t[2]).ok_or_else(|| lines.err(format!("unknown marker {:?}", t[2])))?;
        boundary.push(BoundaryEdge {
            nodes: [lines.index(t[0])?, lines.index(t[1])?],
            marker,
        });
    }
    let mesh = Mesh::new(nodes, triangles, regions, boundary)?;
    if mesh.node_is_shape() != flags.as_slice() {
        return Err(MeshError::InvalidInput(
            "shape flags disagree with the shape-marked edges".into(),
        ));
    }

    let mut fields = Vec::new();
    while let Some(t) = lines.next_tokens() {
        if t.len() != 3 || t[0] != "field" {
            return Err(lines.err("expected `field <name> <arity>`"));
        }
        let arity = Arity::parse(t[2]).ok_or_else(|| lines.err(format!("unknown arity {:?}", t[2])))?;
        let name = t[1].to_string();
        let k = arity.components();
        let mut values = Vec::with_capacity(k * n);
        for _ in 0..n {
            let row = lines.expect("field value")?;
            if row.len() != k {
                return Err(lines.err(format!("field row needs {k} values")));
            }
            for s in row {
                values.push(lines.float(s)?);
            }
        }
        fields.push((name, NodalField::from_values(arity, values)));
    }
    Ok((mesh, fields))
}
