//! Marching cubes over the voxel grid.
//!
//! The 256-entry triangle table is derived once from the cube topology
//! rather than transcribed: on every cube face the threshold crossings are
//! paired so that each run of "inside" corners (value >= threshold) is cut
//! off by one segment, the segments chain into closed loops around the cube,
//! and each loop is fanned into triangles. A face's pairing depends only on
//! its four corners, so neighbouring cells always agree on the shared face
//! and the surface is watertight. On ambiguous faces (diagonal corners
//! inside) the inside corners are kept apart.

use std::collections::HashMap;
use std::sync::OnceLock;

use super::mesh::TriangleMesh;
use super::ReformatError;
use crate::volume::Volume;

/// Corner offsets, in the usual ordering (bottom face counter-clockwise,
/// then the top face).
const CORNERS: [[usize; 3]; 8] = [
    [0, 0, 0],
    [1, 0, 0],
    [1, 1, 0],
    [0, 1, 0],
    [0, 0, 1],
    [1, 0, 1],
    [1, 1, 1],
    [0, 1, 1],
];

const EDGES: [[usize; 2]; 12] = [
    [0, 1],
    [1, 2],
    [2, 3],
    [3, 0],
    [4, 5],
    [5, 6],
    [6, 7],
    [7, 4],
    [0, 4],
    [1, 5],
    [2, 6],
    [3, 7],
];

const FACES: [[usize; 4]; 6] = [
    [0, 1, 2, 3],
    [4, 5, 6, 7],
    [0, 1, 5, 4],
    [3, 2, 6, 7],
    [0, 3, 7, 4],
    [1, 2, 6, 5],
];

fn edge_between(a: usize, b: usize) -> usize {
    EDGES
        .iter()
        .position(|e| (e[0] == a && e[1] == b) || (e[0] == b && e[1] == a))
        .expect("adjacent corners")
}

/// Face corner cycles ordered counter-clockwise seen from outside the cube.
fn outward_faces() -> [[usize; 4]; 6] {
    FACES.map(|f| {
        let p = f.map(|c| CORNERS[c].map(|x| x as f64));
        let u = [p[1][0] - p[0][0], p[1][1] - p[0][1], p[1][2] - p[0][2]];
        let v = [p[2][0] - p[1][0], p[2][1] - p[1][1], p[2][2] - p[1][2]];
        let n = [
            u[1] * v[2] - u[2] * v[1],
            u[2] * v[0] - u[0] * v[2],
            u[0] * v[1] - u[1] * v[0],
        ];
        let center: Vec<f64> = (0..3).map(|a| p.iter().map(|q| q[a]).sum::<f64>() / 4.0 - 0.5).collect();
        let outward = n[0] * center[0] + n[1] * center[1] + n[2] * center[2];
        if outward > 0.0 {
            f
        } else {
            [f[0], f[3], f[2], f[1]]
        }
    })
}

/// Triangles (as cube-edge triples) for one corner configuration.
fn triangulate(config: u8) -> Vec<[u8; 3]> {
    let inside = |c: usize| config & (1 << c) != 0;
    let mut next = [None::<usize>; 12];
    for face in outward_faces() {
        // Walk the face boundary; an entering crossing (outside -> inside)
        // starts a segment that ends at the next exiting crossing.
        let mut open = None;
        let mut first_exit = None;
        for k in 0..4 {
            let (a, b) = (face[k], face[(k + 1) % 4]);
            match (inside(a), inside(b)) {
                (false, true) => open = Some(edge_between(a, b)),
                (true, false) => {
                    let exit = edge_between(a, b);
                    match open.take() {
                        Some(entry) => next[entry] = Some(exit),
                        None => first_exit = Some(exit),
                    }
                }
                _ => {}
            }
        }
        if let (Some(entry), Some(exit)) = (open, first_exit) {
            next[entry] = Some(exit);
        }
    }

    let mut seen = [false; 12];
    let mut tris = Vec::new();
    for start in 0..12 {
        if seen[start] || next[start].is_none() {
            continue;
        }
        let mut lp = Vec::new();
        let mut e = start;
        while !seen[e] {
            seen[e] = true;
            lp.push(e as u8);
            e = next[e].expect("crossings chain into closed loops");
        }
        // Loops run counter-clockwise seen from the low-valued side.
        for k in 1..lp.len() - 1 {
            tris.push([lp[0], lp[k], lp[k + 1]]);
        }
    }
    tris
}

fn table() -> &'static [Vec<[u8; 3]>; 256] {
    static TABLE: OnceLock<[Vec<[u8; 3]>; 256]> = OnceLock::new();
    TABLE.get_or_init(|| std::array::from_fn(|c| triangulate(c as u8)))
}

/// Extracts the `threshold` isosurface, in physical millimetres.
///
/// Vertices sit on cell edges at the linearly interpolated crossing and are
/// shared between neighbouring cells. Triangles wind so their normals point
/// from values above the threshold toward values below it.
pub fn extract_isosurface(v: &Volume, threshold: f64) -> Result<TriangleMesh, ReformatError> {
    let g = *v.geometry();
    let [nx, ny, nz] = g.dims();
    let table = table();
    let mut mesh = TriangleMesh::default();
    let mut vertex_of_edge: HashMap<(usize, u8), u32> = HashMap::new();
    if nx < 2 || ny < 2 || nz < 2 {
        return Err(ReformatError::EmptySurface(threshold));
    }
    for k in 0..nz - 1 {
        for j in 0..ny - 1 {
            for i in 0..nx - 1 {
                let corner = |c: usize| {
                    let o = CORNERS[c];
                    [i + o[0], j + o[1], k + o[2]]
                };
                let vals: [f64; 8] = std::array::from_fn(|c| {
                    let [a, b, d] = corner(c);
                    v.get(a, b, d) as f64
                });
                let config = (0..8).fold(0u8, |acc, c| acc | (((vals[c] >= threshold) as u8) << c));
                let tris = &table[config as usize];
                if tris.is_empty() {
                    continue;
                }
                let mut vertex = |edge: u8| {
                    let [ca, cb] = EDGES[edge as usize];
                    let (pa, pb) = (corner(ca), corner(cb));
                    // Key by the lower end point and the edge axis.
                    let low = if pa <= pb { pa } else { pb };
                    let axis = (0..3).find(|&a| pa[a] != pb[a]).expect("edge spans one axis") as u8;
                    let key = (g.linear_index(low[0], low[1], low[2]), axis);
                    *vertex_of_edge.entry(key).or_insert_with(|| {
                        let (va, vb) = (vals[ca], vals[cb]);
                        let t = (threshold - va) / (vb - va);
                        let idx: [f64; 3] =
                            std::array::from_fn(|a| pa[a] as f64 + t * (pb[a] as f64 - pa[a] as f64));
                        mesh.vertices.push(g.voxel_to_physical(idx));
                        (mesh.vertices.len() - 1) as u32
                    })
                };
                let resolved: Vec<[u32; 3]> = tris.iter().map(|t| t.map(&mut vertex)).collect();
                mesh.triangles.extend(resolved);
            }
        }
    }
    if mesh.is_empty() {
        return Err(ReformatError::EmptySurface(threshold));
    }
    Ok(mesh)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::VolumeGeometry;

    #[test]
    fn trivial_configs_are_empty() {
        assert!(table()[0].is_empty());
        assert!(table()[255].is_empty());
    }

    #[test]
    fn single_corner_is_one_triangle() {
        for c in 0..8 {
            assert_eq!(table()[1 << c].len(), 1);
            assert_eq!(table()[255 ^ (1 << c)].len(), 1);
        }
    }

    #[test]
    fn every_crossing_edge_used() {
        for config in 0..=255u8 {
            let inside = |c: usize| config & (1 << c) != 0;
            let crossing: Vec<usize> = (0..12)
                .filter(|&e| inside(EDGES[e][0]) != inside(EDGES[e][1]))
                .collect();
            let mut used: Vec<usize> = table()[config as usize]
                .iter()
                .flatten()
                .map(|&e| e as usize)
                .collect();
            used.sort_unstable();
            used.dedup();
            assert_eq!(used, crossing, "config {config}");
        }
    }

    #[test]
    fn uniform_volume_has_no_surface() {
        let g = VolumeGeometry::isotropic([6, 6, 6], 1.0).unwrap();
        let v = Volume::filled(g, 40);
        assert!(matches!(extract_isosurface(&v, 100.0), Err(ReformatError::EmptySurface(_))));
        assert!(matches!(extract_isosurface(&v, -100.0), Err(ReformatError::EmptySurface(_))));
    }

    #[test]
    fn single_voxel_blob_is_closed_octahedron() {
        let g = VolumeGeometry::isotropic([3, 3, 3], 1.0).unwrap();
        let v = Volume::from_fn(g, |i, j, k| if (i, j, k) == (1, 1, 1) { 1000 } else { 0 });
        let m = extract_isosurface(&v, 500.0).unwrap();
        assert_eq!(m.vertices.len(), 6);
        assert_eq!(m.triangles.len(), 8);
        assert_eq!(m.euler_characteristic(), 2);
        m.validate().unwrap();
        // Octahedron with vertex distance 0.5: volume 4/3 * 0.5^3.
        assert!((m.signed_volume() - 4.0 / 3.0 * 0.125).abs() < 1e-12, "{}", m.signed_volume());
    }

    #[test]
    fn diagonal_pair_stays_separate() {
        let g = VolumeGeometry::isotropic([2, 2, 2], 1.0).unwrap();
        let v = Volume::from_fn(g, |i, j, k| if (i, j, k) == (0, 0, 0) || (i, j, k) == (1, 1, 0) { 10 } else { 0 });
        let m = extract_isosurface(&v, 5.0).unwrap();
        assert_eq!(m.triangles.len(), 2);
    }
}
