use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Uniform triangulation of the unit square carrying P2 nodes.
///
/// Nodes are numbered vertices first, then one midpoint per edge. Triangles
/// list their six nodes as `[v0, v1, v2, m01, m12, m20]`, counter-clockwise.
#[derive(Debug, Clone)]
pub struct TriMeshP2 {
    n: usize,
    nodes: Vec<[f64; 2]>,
    num_vertices: usize,
    edges: Vec<[usize; 2]>,
    triangles: Vec<[usize; 6]>,
    boundary: Vec<bool>,
    h: f64,
}

impl TriMeshP2 {
    /// `n x n` grid of squares, each split along the diagonal from its
    /// lower-left to its upper-right corner.
    pub fn uniform(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::Config(format!(
                "mesh needs at least 2 subdivisions per side, got {n}"
            )));
        }
        let nv = (n + 1) * (n + 1);
        let mut nodes = Vec::with_capacity((2 * n + 1) * (2 * n + 1));
        for j in 0..=n {
            for i in 0..=n {
                nodes.push([i as f64 / n as f64, j as f64 / n as f64]);
            }
        }
        let vid = |i: usize, j: usize| j * (n + 1) + i;

        let mut edge_ids: HashMap<(usize, usize), usize> = HashMap::new();
        let mut edges = Vec::new();
        let mut triangles = Vec::with_capacity(2 * n * n);
        let mut midpoint = |a: usize, b: usize, nodes: &mut Vec<[f64; 2]>| -> usize {
            let key = (a.min(b), a.max(b));
            *edge_ids.entry(key).or_insert_with(|| {
                let (pa, pb) = (nodes[a], nodes[b]);
                nodes.push([0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]);
                edges.push([key.0, key.1]);
                nodes.len() - 1
            })
        };
        for j in 0..n {
            for i in 0..n {
                let (v00, v10, v01, v11) = (vid(i, j), vid(i + 1, j), vid(i, j + 1), vid(i + 1, j + 1));
                for tri in [[v00, v10, v11], [v00, v11, v01]] {
                    let m01 = midpoint(tri[0], tri[1], &mut nodes);
                    let m12 = midpoint(tri[1], tri[2], &mut nodes);
                    let m20 = midpoint(tri[2], tri[0], &mut nodes);
                    triangles.push([tri[0], tri[1], tri[2], m01, m12, m20]);
                }
            }
        }
        let boundary = nodes
            .iter()
            .map(|p| p[0] == 0.0 || p[0] == 1.0 || p[1] == 0.0 || p[1] == 1.0)
            .collect();
        Ok(TriMeshP2 {
            n,
            nodes,
            num_vertices: nv,
            edges,
            triangles,
            boundary,
            h: std::f64::consts::SQRT_2 / n as f64,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Maximum element diameter.
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.nodes[..self.num_vertices]
    }

    pub fn num_vertices(&self) -> usize {
        self.num_vertices
    }

    /// Vertex pairs of each edge; the midpoint of edge `k` is node `num_vertices + k`.
    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    pub fn triangles(&self) -> &[[usize; 6]] {
        &self.triangles
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        self.boundary[node]
    }

    pub fn boundary_mask(&self) -> &[bool] {
        &self.boundary
    }

    pub fn corners(&self, t: usize) -> [[f64; 2]; 3] {
        let tri = &self.triangles[t];
        [self.nodes[tri[0]], self.nodes[tri[1]], self.nodes[tri[2]]]
    }

    pub fn area(&self, t: usize) -> f64 {
        let [a, b, c] = self.corners(t);
        0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
    }

    /// Barycentric coordinates of `x` with respect to triangle `t`.
    pub fn barycentric(&self, t: usize, x: [f64; 2]) -> [f64; 3] {
        let [a, b, c] = self.corners(t);
        let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
        let l1 = ((x[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (x[1] - a[1])) / det;
        let l2 = ((b[0] - a[0]) * (x[1] - a[1]) - (x[0] - a[0]) * (b[1] - a[1])) / det;
        [1.0 - l1 - l2, l1, l2]
    }

    /// Element containing `x`; on shared edges and vertices the lowest
    /// element index wins.
    pub fn locate(&self, x: [f64; 2]) -> Result<usize> {
        if !(0.0..=1.0).contains(&x[0]) || !(0.0..=1.0).contains(&x[1]) {
            return Err(Error::Input(format!(
                "point ({}, {}) lies outside the unit square",
                x[0], x[1]
            )));
        }
        let n = self.n;
        let scaled = [x[0] * n as f64, x[1] * n as f64];
        let ci = (scaled[0].floor() as usize).min(n - 1);
        let cj = (scaled[1].floor() as usize).min(n - 1);
        let mut candidates = Vec::with_capacity(8);
        for j in cj.saturating_sub(1)..=(cj + 1).min(n - 1) {
            for i in ci.saturating_sub(1)..=(ci + 1).min(n - 1) {
                candidates.push(2 * (j * n + i));
                candidates.push(2 * (j * n + i) + 1);
            }
        }
        candidates.sort_unstable();
        const TOL: f64 = 1e-12;
        candidates
            .into_iter()
            .find(|&t| self.barycentric(t, x).iter().all(|&l| l >= -TOL))
            .ok_or_else(|| Error::Input(format!("no element contains ({}, {})", x[0], x[1])))
    }

    /// Plain-text dump: vertex count, vertices, triangle count, vertex triples.
    pub fn write_text(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        out.push_str(&format!("{}\n", self.num_vertices));
        for v in self.vertices() {
            out.push_str(&format!("{:.17e} {:.17e}\n", v[0], v[1]));
        }
        out.push_str(&format!("{}\n", self.triangles.len()));
        for t in &self.triangles {
            out.push_str(&format!("{} {} {}\n", t[0], t[1], t[2]));
        }
        std::fs::File::create(path)
            .and_then(|mut f| f.write_all(out.as_bytes()))
            .map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_for_small_meshes() {
        let m = TriMeshP2::uniform(2).unwrap();
        assert_eq!(m.triangles().len(), 8);
        assert_eq!(m.num_vertices(), 9);
        assert_eq!(m.edges().len(), 16);
        let m = TriMeshP2::uniform(4).unwrap();
        assert_eq!(m.triangles().len(), 32);
        assert_eq!(m.num_vertices(), 25);
        assert_eq!(m.nodes().len(), 81);
    }

    #[test]
    fn rejects_coarse_mesh() {
        assert!(matches!(TriMeshP2::uniform(1), Err(Error::Config(_))));
    }

    #[test]
    fn areas_positive_equal_and_sum_to_one() {
        for n in [2, 3, 7, 16] {
            let m = TriMeshP2::uniform(n).unwrap();
            let a0 = m.area(0);
            let mut total = 0.0;
            for t in 0..m.triangles().len() {
                let a = m.area(t);
                assert!(a > 0.0);
                assert!((a - a0).abs() < 1e-15);
                total += a;
            }
            assert!((total - 1.0).abs() < 1e-14);
            assert!((m.h() - 2f64.sqrt() / n as f64).abs() < 1e-15);
        }
    }

    #[test]
    fn boundary_flags() {
        let m = TriMeshP2::uniform(5).unwrap();
        for (k, p) in m.nodes().iter().enumerate() {
            let on = p[0] < 1e-14 || p[0] > 1.0 - 1e-14 || p[1] < 1e-14 || p[1] > 1.0 - 1e-14;
            assert_eq!(m.is_boundary(k), on, "node {k} at {p:?}");
        }
        // 4 * 2n boundary nodes on the P2 lattice
        assert_eq!(m.boundary_mask().iter().filter(|&&b| b).count(), 40);
    }

    #[test]
    fn midpoints_sit_between_their_vertices() {
        let m = TriMeshP2::uniform(3).unwrap();
        for t in m.triangles() {
            for (k, (a, b)) in [(0, 1), (1, 2), (2, 0)].into_iter().enumerate() {
                let (pa, pb, pm) = (m.nodes()[t[a]], m.nodes()[t[b]], m.nodes()[t[3 + k]]);
                assert_eq!(pm, [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]);
            }
        }
    }

    #[test]
    fn locate_prefers_lowest_index_on_shared_edges() {
        let m = TriMeshP2::uniform(4).unwrap();
        // vertical grid line x = 0.5 separates cells 1 and 2 of each row
        let t = m.locate([0.5, 0.1]).unwrap();
        let b = m.barycentric(t, [0.5, 0.1]);
        assert!(b.iter().all(|&l| l >= -1e-12));
        for other in 0..t {
            assert!(m.barycentric(other, [0.5, 0.1]).iter().any(|&l| l < -1e-12));
        }
        assert!(m.locate([1.0, 1.0]).is_ok());
        assert!(m.locate([1.0 + 1e-9, 0.5]).is_err());
    }
}
