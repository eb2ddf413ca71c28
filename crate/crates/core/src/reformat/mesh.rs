use std::collections::HashSet;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::io::write_atomic;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("refusing to write an empty mesh")]
    Empty,
    #[error("invalid mesh: {0}")]
    Invalid(String),
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

/// Indexed triangle mesh with vertices in millimetres.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<[f64; 3]>,
    pub triangles: Vec<[u32; 3]>,
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

impl TriangleMesh {
    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    /// Checks index bounds and that no triangle repeats an index.
    pub fn validate(&self) -> Result<(), MeshError> {
        let n = self.vertices.len() as u64;
        for (t, tri) in self.triangles.iter().enumerate() {
            if tri.iter().any(|&i| i as u64 >= n) {
                return Err(MeshError::Invalid(format!("triangle {t} indexes past {n} vertices")));
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(MeshError::Invalid(format!("triangle {t} is degenerate: {tri:?}")));
            }
        }
        Ok(())
    }

    fn corners(&self, tri: &[u32; 3]) -> [[f64; 3]; 3] {
        tri.map(|i| self.vertices[i as usize])
    }

    pub fn surface_area(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| {
                let [a, b, c] = self.corners(t);
                let n = cross(sub(b, a), sub(c, a));
                0.5 * (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt()
            })
            .sum()
    }

    /// Signed enclosed volume; positive when triangles wind outward.
    pub fn signed_volume(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| {
                let [a, b, c] = self.corners(t);
                let n = cross(b, c);
                (a[0] * n[0] + a[1] * n[1] + a[2] * n[2]) / 6.0
            })
            .sum()
    }

    /// `V − E + F` over referenced vertices and unique undirected edges.
    pub fn euler_characteristic(&self) -> i64 {
        let mut edges = HashSet::new();
        let mut used = HashSet::new();
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                edges.insert((a.min(b), a.max(b)));
                used.insert(a);
            }
        }
        used.len() as i64 - edges.len() as i64 + self.triangles.len() as i64
    }
}

fn write_obj<W: Write + ?Sized>(w: &mut W, m: &TriangleMesh) -> io::Result<()> {
    for v in &m.vertices {
        writeln!(w, "v {:.6} {:.6} {:.6}", v[0], v[1], v[2])?;
    }
    for t in &m.triangles {
        writeln!(w, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1)?;
    }
    Ok(())
}

/// Writes `v x y z` lines, then `f a b c` lines with 1-based indices.
pub fn write_mesh_obj(m: &TriangleMesh, path: impl AsRef<Path>) -> Result<(), MeshError> {
    let path = path.as_ref();
    if m.is_empty() {
        return Err(MeshError::Empty);
    }
    m.validate()?;
    write_atomic(path, |w| write_obj(w, m)).map_err(|source| MeshError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads the `v` / `f` subset of OBJ written by [`write_mesh_obj`].
///
/// Faces with more than three vertices are fan-triangulated; `f a/b/c`
/// texture and normal references are ignored.
pub fn read_mesh_obj(path: impl AsRef<Path>) -> Result<TriangleMesh, MeshError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| MeshError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut mesh = TriangleMesh::default();
    for (n, line) in text.lines().enumerate() {
        let err = |message: String| MeshError::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            message,
        };
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("v") => {
                let xyz: Vec<f64> = parts
                    .take(3)
                    .map(|s| s.parse().map_err(|_| err(format!("bad coordinate `{s}`"))))
                    .collect::<Result<_, _>>()?;
                let xyz: [f64; 3] = xyz.try_into().map_err(|_| err("vertex needs 3 coordinates".into()))?;
                mesh.vertices.push(xyz);
            }
            Some("f") => {
                let idx: Vec<u32> = parts
                    .map(|s| {
                        let head = s.split('/').next().unwrap_or(s);
                        head.parse::<u32>()
                            .ok()
                            .filter(|&i| i >= 1)
                            .map(|i| i - 1)
                            .ok_or_else(|| err(format!("bad face index `{s}`")))
                    })
                    .collect::<Result<_, _>>()?;
                if idx.len() < 3 {
                    return Err(err("face needs at least 3 vertices".into()));
                }
                for k in 1..idx.len() - 1 {
                    mesh.triangles.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    mesh.validate()?;
    Ok(mesh)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_triangle() -> TriangleMesh {
        TriangleMesh {
            vertices: vec![[0.0, 0.0, 0.0], [1.5, 0.0, 0.0], [0.0, 2.0, 0.125]],
            triangles: vec![[0, 1, 2]],
        }
    }

    #[test]
    fn single_triangle_obj() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.obj");
        write_mesh_obj(&one_triangle(), &p).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.iter().filter(|l| l.starts_with("v ")).count(), 3);
        assert_eq!(lines.last().unwrap(), &"f 1 2 3");
        assert_eq!(read_mesh_obj(&p).unwrap(), one_triangle());
    }

    #[test]
    fn empty_mesh_refused() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.obj");
        assert!(matches!(write_mesh_obj(&TriangleMesh::default(), &p), Err(MeshError::Empty)));
        assert!(!p.exists());
    }

    #[test]
    fn validation() {
        let mut m = one_triangle();
        m.triangles.push([0, 0, 1]);
        assert!(m.validate().is_err());
        let mut m = one_triangle();
        m.triangles.push([0, 1, 3]);
        assert!(m.validate().is_err());
    }

    #[test]
    fn tetrahedron_measures() {
        let m = TriangleMesh {
            vertices: vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            triangles: vec![[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]],
        };
        assert_eq!(m.euler_characteristic(), 2);
        assert!((m.signed_volume() - 1.0 / 6.0).abs() < 1e-12);
        let area = 1.5 + 3f64.sqrt() / 2.0;
        assert!((m.surface_area() - area).abs() < 1e-12);
    }
}
