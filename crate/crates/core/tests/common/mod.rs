//! Independent oracles built from cube geometry alone.
#![allow(dead_code)]

use std::collections::{HashMap, VecDeque};

use dycore_perf::CubedSphereMesh;

/// Face cells of the cube `[-N, N]^3`, found by enumerating cell centres
/// (odd offsets on the two tangent axes) and linked by shared edges.
pub struct GeoMesh {
    pub n: i64,
    pub centres: Vec<[i64; 3]>,
    pub index: HashMap<[i64; 3], usize>,
    pub adj: Vec<Vec<usize>>,
}

fn face_axis(n: i64, c: &[i64; 3]) -> usize {
    (0..3).find(|&k| c[k].abs() == n).expect("centre lies on a face")
}

impl GeoMesh {
    pub fn new(n: u32) -> Self {
        let n = i64::from(n);
        let coords: Vec<i64> = (0..n).map(|k| 2 * k + 1 - n).collect();
        let mut centres = Vec::new();
        for axis in 0..3 {
            for sign in [-1, 1] {
                for &a in &coords {
                    for &b in &coords {
                        let mut c = [0; 3];
                        c[axis] = sign * n;
                        c[(axis + 1) % 3] = a;
                        c[(axis + 2) % 3] = b;
                        centres.push(c);
                    }
                }
            }
        }
        let index: HashMap<_, _> = centres.iter().enumerate().map(|(k, c)| (*c, k)).collect();

        let mut offsets = Vec::new();
        for k in 0..3 {
            for s in [-2, 2] {
                let mut d = [0; 3];
                d[k] = s;
                offsets.push(d);
            }
            for l in k + 1..3 {
                for s in [-1, 1] {
                    for t in [-1, 1] {
                        let mut d = [0; 3];
                        d[k] = s;
                        d[l] = t;
                        offsets.push(d);
                    }
                }
            }
        }

        let adj = centres
            .iter()
            .map(|c| {
                let fa = face_axis(n, c);
                let mut nbrs: Vec<usize> = offsets
                    .iter()
                    .filter_map(|d| {
                        let q = [c[0] + d[0], c[1] + d[1], c[2] + d[2]];
                        let &k = index.get(&q)?;
                        let same_face = face_axis(n, &q) == fa && q[fa] == c[fa];
                        let straight = d.iter().any(|x| x.abs() == 2);
                        // Straight steps stay on a face, diagonal ones cross an edge.
                        (same_face == straight).then_some(k)
                    })
                    .collect();
                nbrs.sort_unstable();
                nbrs
            })
            .collect();
        GeoMesh { n, centres, index, adj }
    }

    /// Oracle index of the mesh cell with linear index `idx`.
    pub fn of(&self, mesh: &CubedSphereMesh, idx: u32) -> usize {
        self.index[&mesh.centre(mesh.cell(idx))]
    }

    /// Mesh linear index for every oracle cell.
    pub fn to_mesh(&self, mesh: &CubedSphereMesh) -> Vec<u32> {
        let mut map = vec![u32::MAX; self.centres.len()];
        for idx in 0..mesh.total_horizontal_cells() as u32 {
            map[self.of(mesh, idx)] = idx;
        }
        map
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }
}

/// Rings of cells at BFS distance 1..=depth from `owned`, as sorted mesh
/// indices.
pub fn bfs_rings(
    geo: &GeoMesh,
    mesh: &CubedSphereMesh,
    owned: &[u32],
    depth: u32,
) -> Vec<Vec<u32>> {
    let to_mesh = geo.to_mesh(mesh);
    let mut dist = vec![u32::MAX; geo.centres.len()];
    let mut queue = VecDeque::new();
    for &idx in owned {
        let k = geo.of(mesh, idx);
        dist[k] = 0;
        queue.push_back(k);
    }
    while let Some(k) = queue.pop_front() {
        if dist[k] == depth {
            continue;
        }
        for &nb in &geo.adj[k] {
            if dist[nb] == u32::MAX {
                dist[nb] = dist[k] + 1;
                queue.push_back(nb);
            }
        }
    }
    let mut rings = vec![Vec::new(); depth as usize];
    for (k, &d) in dist.iter().enumerate() {
        if d >= 1 && d <= depth {
            rings[d as usize - 1].push(to_mesh[k]);
        }
    }
    for r in &mut rings {
        r.sort_unstable();
    }
    rings
}
