//! OFF and ASCII PLY readers and writers.
//!
//! OFF: a header token `OFF`, a counts line `nv nf ne`, `nv` lines of
//! `x y z`, then `nf` lines of `3 i j k`. The counts may share the header
//! line (`OFF nv nf ne`), which some writers emit. `#` starts a comment.
//!
//! PLY: `ply` / `format ascii 1.0` header declaring `element vertex` with
//! `x y z` properties (extra scalar properties are skipped) and
//! `element face` with one list property. Binary PLY is rejected.

use std::str::FromStr;

use super::vec3::Point3;
use super::{MeshError, TriangleMesh};

/// Mesh file dialects understood by [`load_mesh`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    Off,
    PlyAscii,
}

struct Lines<'a> {
    inner: std::str::Lines<'a>,
    line_no: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Self { inner: text.lines(), line_no: 0 }
    }

    /// Next line with content, comments stripped.
    fn next_content(&mut self) -> Option<(usize, &'a str)> {
        loop {
            let line = self.inner.next()?;
            self.line_no += 1;
            let line = match line.find('#') {
                Some(pos) => &line[..pos],
                None => line,
            };
            let trimmed = line.trim();
            if !trimmed.is_empty() {
                return Some((self.line_no, trimmed));
            }
        }
    }
}

fn parse<T: FromStr>(token: &str, line: usize, what: &str) -> Result<T, MeshError> {
    token.parse().map_err(|_| MeshError::Parse {
        line,
        message: format!("cannot parse {what} from {token:?}"),
    })
}

pub fn load_mesh(bytes: &[u8], format: MeshFormat) -> Result<TriangleMesh, MeshError> {
    let text = std::str::from_utf8(bytes)
        .map_err(|_| MeshError::Parse { line: 0, message: "file is not valid UTF-8 text".into() })?;
    match format {
        MeshFormat::Off => load_off(text),
        MeshFormat::PlyAscii => load_ply(text),
    }
}

fn load_off(text: &str) -> Result<TriangleMesh, MeshError> {
    let mut lines = Lines::new(text);
    let (line, header) = lines
        .next_content()
        .ok_or(MeshError::Parse { line: 0, message: "empty file".into() })?;
    let mut tokens: Vec<&str> = header.split_whitespace().collect();
    if tokens.first().copied() != Some("OFF") {
        return Err(MeshError::Parse { line, message: format!("expected OFF header, found {:?}", tokens.first().unwrap_or(&"")) });
    }
    tokens.remove(0);
    let (counts_line, counts): (usize, Vec<&str>) = if tokens.is_empty() {
        let (l, c) = lines
            .next_content()
            .ok_or(MeshError::Parse { line, message: "missing counts line".into() })?;
        (l, c.split_whitespace().collect())
    } else {
        (line, tokens)
    };
    if counts.len() < 2 {
        return Err(MeshError::Parse { line: counts_line, message: "counts line needs vertex and face counts".into() });
    }
    let nv: usize = parse(counts[0], counts_line, "vertex count")?;
    let nf: usize = parse(counts[1], counts_line, "face count")?;

    let mut vertices = Vec::with_capacity(nv);
    for k in 0..nv {
        let (l, content) = lines.next_content().ok_or(MeshError::Parse {
            line: counts_line,
            message: format!("declared {nv} vertices but file ends after {k}"),
        })?;
        vertices.push(parse_vertex_line(content, l)?);
    }
    let mut faces = Vec::with_capacity(nf);
    for k in 0..nf {
        let (l, content) = lines.next_content().ok_or(MeshError::Parse {
            line: counts_line,
            message: format!("declared {nf} faces but file ends after {k}"),
        })?;
        faces.push(parse_face_line(content, l, nv)?);
    }
    Ok(TriangleMesh { vertices, faces })
}

fn parse_vertex_line(content: &str, line: usize) -> Result<Point3, MeshError> {
    let toks: Vec<&str> = content.split_whitespace().collect();
    if toks.len() < 3 {
        return Err(MeshError::Parse { line, message: format!("vertex line needs 3 coordinates, found {}", toks.len()) });
    }
    Ok([
        parse(toks[0], line, "x coordinate")?,
        parse(toks[1], line, "y coordinate")?,
        parse(toks[2], line, "z coordinate")?,
    ])
}

fn parse_face_line(content: &str, line: usize, nv: usize) -> Result<[usize; 3], MeshError> {
    let toks: Vec<&str> = content.split_whitespace().collect();
    if toks.is_empty() {
        return Err(MeshError::Parse { line, message: "empty face line".into() });
    }
    let arity: usize = parse(toks[0], line, "face vertex count")?;
    if arity != 3 {
        return Err(MeshError::Parse { line, message: format!("only triangles are supported, face has {arity} vertices") });
    }
    if toks.len() < 4 {
        return Err(MeshError::Parse { line, message: "triangle face needs 3 indices".into() });
    }
    let mut idx = [0usize; 3];
    for (slot, tok) in idx.iter_mut().zip(&toks[1..4]) {
        let i: usize = parse(tok, line, "vertex index")?;
        if i >= nv {
            return Err(MeshError::Parse { line, message: format!("vertex index {i} out of range (vertex count {nv})") });
        }
        *slot = i;
    }
    Ok(idx)
}

fn load_ply(text: &str) -> Result<TriangleMesh, MeshError> {
    let mut lines = Lines::new(text);
    let (l, magic) = lines
        .next_content()
        .ok_or(MeshError::Parse { line: 0, message: "empty file".into() })?;
    if magic != "ply" {
        return Err(MeshError::Parse { line: l, message: format!("expected 'ply' header, found {magic:?}") });
    }

    // Header scan: track per-element property layouts until end_header.
    let mut nv = 0usize;
    let mut nf = 0usize;
    let mut vertex_props: Vec<String> = Vec::new();
    let mut current: Option<&str> = None;
    let mut saw_format = false;
    loop {
        let (l, content) = lines
            .next_content()
            .ok_or(MeshError::Parse { line: 0, message: "header never ends (missing end_header)".into() })?;
        let toks: Vec<&str> = content.split_whitespace().collect();
        match toks[0] {
            "format" => {
                if toks.get(1) != Some(&"ascii") {
                    return Err(MeshError::Parse { line: l, message: "only ascii PLY is supported".into() });
                }
                saw_format = true;
            }
            "comment" | "obj_info" => {}
            "element" => {
                let count: usize = parse(toks.get(2).copied().unwrap_or(""), l, "element count")?;
                match toks.get(1) {
                    Some(&"vertex") => {
                        nv = count;
                        current = Some("vertex");
                    }
                    Some(&"face") => {
                        nf = count;
                        current = Some("face");
                    }
                    _ => current = Some("other"),
                }
            }
            "property" => {
                if current == Some("vertex") {
                    if toks.get(1) == Some(&"list") {
                        return Err(MeshError::Parse { line: l, message: "list property on vertices is not supported".into() });
                    }
                    vertex_props.push(toks.last().unwrap_or(&"").to_string());
                }
            }
            "end_header" => break,
            other => {
                return Err(MeshError::Parse { line: l, message: format!("unexpected header keyword {other:?}") });
            }
        }
    }
    if !saw_format {
        return Err(MeshError::Parse { line: l, message: "missing format declaration".into() });
    }
    let coord_pos = |name: &str| -> Result<usize, MeshError> {
        vertex_props
            .iter()
            .position(|p| p == name)
            .ok_or_else(|| MeshError::Parse { line: l, message: format!("vertex element lacks property {name:?}") })
    };
    let (px, py, pz) = (coord_pos("x")?, coord_pos("y")?, coord_pos("z")?);

    let mut vertices = Vec::with_capacity(nv);
    for k in 0..nv {
        let (l, content) = lines.next_content().ok_or(MeshError::Parse {
            line: 0,
            message: format!("declared {nv} vertices but file ends after {k}"),
        })?;
        let toks: Vec<&str> = content.split_whitespace().collect();
        if toks.len() < vertex_props.len() {
            return Err(MeshError::Parse { line: l, message: format!("vertex line has {} fields, header declares {}", toks.len(), vertex_props.len()) });
        }
        vertices.push([
            parse(toks[px], l, "x coordinate")?,
            parse(toks[py], l, "y coordinate")?,
            parse(toks[pz], l, "z coordinate")?,
        ]);
    }
    let mut faces = Vec::with_capacity(nf);
    for k in 0..nf {
        let (l, content) = lines.next_content().ok_or(MeshError::Parse {
            line: 0,
            message: format!("declared {nf} faces but file ends after {k}"),
        })?;
        faces.push(parse_face_line(content, l, nv)?);
    }
    Ok(TriangleMesh { vertices, faces })
}

/// Serialize as OFF text; the inverse of [`load_mesh`] with [`MeshFormat::Off`].
pub fn write_off(mesh: &TriangleMesh) -> String {
    let mut out = String::from("OFF\n");
    out.push_str(&format!("{} {} 0\n", mesh.vertices.len(), mesh.faces.len()));
    for v in &mesh.vertices {
        out.push_str(&format!("{} {} {}\n", v[0], v[1], v[2]));
    }
    for f in &mesh.faces {
        out.push_str(&format!("3 {} {} {}\n", f[0], f[1], f[2]));
    }
    out
}
