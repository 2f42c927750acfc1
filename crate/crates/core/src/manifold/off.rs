use std::fmt::Write as _;
use std::path::Path;

use super::TriMesh;
use crate::error::{Error, Result};

/// Reads an ASCII OFF file. Polygons with more than three corners are fanned
/// into triangles.
pub fn read_off(path: &Path) -> Result<TriMesh> {
    let text = std::fs::read_to_string(path)?;
    parse_off(&text, path)
}

pub(crate) fn parse_off(text: &str, path: &Path) -> Result<TriMesh> {
    let err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());

    let (line, header) = lines.next().ok_or_else(|| err(1, "empty file".into()))?;
    let Some(rest) = header.strip_prefix("OFF") else {
        return Err(err(line, "missing OFF header".into()));
    };
    let rest = rest.trim();
    let (counts_line, counts_src) = if rest.is_empty() {
        lines.next().ok_or_else(|| err(line, "missing counts".into()))?
    } else {
        (line, rest)
    };
    let counts: Vec<usize> = counts_src
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| err(counts_line, format!("bad count {t:?}"))))
        .collect::<Result<_>>()?;
    if counts.len() < 2 {
        return Err(err(counts_line, "expected vertex and face counts".into()));
    }
    let (nv, nf) = (counts[0], counts[1]);

    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let (l, src) = lines.next().ok_or_else(|| err(counts_line, "truncated vertex list".into()))?;
        let vals: Vec<f64> = src
            .split_whitespace()
            .take(3)
            .map(|t| t.parse().map_err(|_| err(l, format!("bad coordinate {t:?}"))))
            .collect::<Result<_>>()?;
        if vals.len() != 3 {
            return Err(err(l, "vertex needs three coordinates".into()));
        }
        vertices.push([vals[0], vals[1], vals[2]]);
    }

    let mut faces = Vec::with_capacity(nf);
    for _ in 0..nf {
        let (l, src) = lines.next().ok_or_else(|| err(counts_line, "truncated face list".into()))?;
        let vals: Vec<usize> = src
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| err(l, format!("bad index {t:?}"))))
            .collect::<Result<_>>()?;
        let n = *vals.first().ok_or_else(|| err(l, "empty face".into()))?;
        if n < 3 || vals.len() < n + 1 {
            return Err(err(l, format!("face declares {n} corners")));
        }
        let idx = &vals[1..=n];
        if let Some(&bad) = idx.iter().find(|&&v| v >= nv) {
            return Err(err(l, format!("vertex index {bad} out of range")));
        }
        for j in 1..n - 1 {
            faces.push([idx[0], idx[j], idx[j + 1]]);
        }
    }
    TriMesh::new(vertices, faces)
}

pub fn write_off(path: &Path, mesh: &TriMesh) -> Result<()> {
    let mut out = String::new();
    let _ = writeln!(out, "OFF\n{} {} 0", mesh.vertices().len(), mesh.faces().len());
    for v in mesh.vertices() {
        let _ = writeln!(out, "{:?} {:?} {:?}", v[0], v[1], v[2]);
    }
    for f in mesh.faces() {
        let _ = writeln!(out, "3 {} {} {}", f[0], f[1], f[2]);
    }
    std::fs::write(path, out)?;
    Ok(())
}
