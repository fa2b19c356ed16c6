//! Structured tetrahedral meshes of the unit cube.
//!
//! Every subcube is split into six tetrahedra sharing the (0,0,0)-(1,1,1)
//! diagonal (Kuhn subdivision). Entities are stored as ascending vertex
//! tuples, which fixes a global orientation: an edge points from its lower to
//! its higher vertex, a face is oriented by the right-hand rule on its sorted
//! vertices. Tetrahedra carry an extra orientation sign so that the cell
//! incidences always use the outward normal.

use crate::error::{invalid, Result};
use crate::geom::{det3, sub, Vec3};

/// Local edges of a tetrahedron as pairs of local vertex indices.
pub const TET_EDGES: [[usize; 2]; 6] = [[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]];

/// Local faces of a tetrahedron; face `i` is opposite local vertex `i`.
pub const TET_FACES: [[usize; 3]; 4] = [[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]];

/// Local edges of a triangle `(a, b, c)` in boundary order `[bc, ac, ab]`.
pub const TRI_EDGES: [[usize; 2]; 3] = [[1, 2], [0, 2], [0, 1]];

/// Boundary-operator signs of the triangle edges in [`TRI_EDGES`] order.
pub const TRI_EDGE_SIGNS: [i8; 3] = [1, -1, 1];

#[derive(Debug, Clone)]
pub struct Mesh {
    n: usize,
    vertices: Vec<Vec3>,
    edges: Vec<[usize; 2]>,
    faces: Vec<[usize; 3]>,
    tets: Vec<[usize; 4]>,
    tet_edges: Vec<[usize; 6]>,
    tet_faces: Vec<[usize; 4]>,
    tet_orientation: Vec<i8>,
    face_edges: Vec<[usize; 3]>,
    face_tet_count: Vec<u8>,
    boundary: [Vec<bool>; 3],
}

/// Local-to-global maps of one tetrahedron.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TetAdjacency {
    pub vertices: [usize; 4],
    /// Global edge index and the sign of the local traversal (always +1 with
    /// ascending storage).
    pub edges: [(usize, i8); 6],
    /// Global face index and its incidence in the outward boundary of the tet.
    pub faces: [(usize, i8); 4],
}

/// Affine geometry of one cell: vertex coordinates, barycentric gradients and
/// (unsigned) volume.
#[derive(Debug, Clone, Copy)]
pub struct TetGeometry {
    pub vertices: [Vec3; 4],
    pub grad_lambda: [Vec3; 4],
    pub volume: f64,
}

impl TetGeometry {
    pub fn from_vertices(vertices: [Vec3; 4]) -> Self {
        let e1 = sub(vertices[1], vertices[0]);
        let e2 = sub(vertices[2], vertices[0]);
        let e3 = sub(vertices[3], vertices[0]);
        let det = det3(e1, e2, e3);
        // rows of the inverse Jacobian are the gradients of lambda_1..3
        let g1 = crate::geom::scale(1.0 / det, crate::geom::cross(e2, e3));
        let g2 = crate::geom::scale(1.0 / det, crate::geom::cross(e3, e1));
        let g3 = crate::geom::scale(1.0 / det, crate::geom::cross(e1, e2));
        let g0 = [
            -(g1[0] + g2[0] + g3[0]),
            -(g1[1] + g2[1] + g3[1]),
            -(g1[2] + g2[2] + g3[2]),
        ];
        TetGeometry {
            vertices,
            grad_lambda: [g0, g1, g2, g3],
            volume: det.abs() / 6.0,
        }
    }

    /// Physical point from barycentric coordinates.
    pub fn point(&self, bary: &[f64; 4]) -> Vec3 {
        let mut x = [0.0; 3];
        for (l, v) in bary.iter().zip(&self.vertices) {
            crate::geom::axpy(*l, *v, &mut x);
        }
        x
    }
}

impl Mesh {
    /// Kuhn-subdivided `n x n x n` grid of the unit cube.
    pub fn structured(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(invalid("mesh subdivision count must be at least 1"));
        }
        let np = n + 1;
        let vid = |i: usize, j: usize, k: usize| i + np * (j + np * k);
        let h = 1.0 / n as f64;

        let mut vertices = Vec::with_capacity(np * np * np);
        for k in 0..np {
            for j in 0..np {
                for i in 0..np {
                    vertices.push([i as f64 * h, j as f64 * h, k as f64 * h]);
                }
            }
        }

        const PERMS: [[usize; 3]; 6] = [
            [0, 1, 2],
            [0, 2, 1],
            [1, 0, 2],
            [1, 2, 0],
            [2, 0, 1],
            [2, 1, 0],
        ];
        let mut tets = Vec::with_capacity(6 * n * n * n);
        for k in 0..n {
            for j in 0..n {
                for i in 0..n {
                    for perm in PERMS {
                        let mut c = [i, j, k];
                        let mut tet = [vid(c[0], c[1], c[2]); 4];
                        for (step, axis) in perm.iter().enumerate() {
                            c[*axis] += 1;
                            tet[step + 1] = vid(c[0], c[1], c[2]);
                        }
                        // walking +x, +y, +z only increases the index, so the
                        // path is already ascending
                        debug_assert!(tet.windows(2).all(|w| w[0] < w[1]));
                        tets.push(tet);
                    }
                }
            }
        }

        let mut edges: Vec<[usize; 2]> = tets
            .iter()
            .flat_map(|t| TET_EDGES.iter().map(move |e| [t[e[0]], t[e[1]]]))
            .collect();
        edges.sort_unstable();
        edges.dedup();

        let mut faces: Vec<[usize; 3]> = tets
            .iter()
            .flat_map(|t| TET_FACES.iter().map(move |f| [t[f[0]], t[f[1]], t[f[2]]]))
            .collect();
        faces.sort_unstable();
        faces.dedup();

        let edge_index = |a: usize, b: usize| {
            edges
                .binary_search(&[a, b])
                .expect("edge of a known entity is in the table")
        };
        let face_index = |f: [usize; 3]| {
            faces
                .binary_search(&f)
                .expect("face of a known entity is in the table")
        };

        let mut tet_edges = Vec::with_capacity(tets.len());
        let mut tet_faces = Vec::with_capacity(tets.len());
        let mut tet_orientation = Vec::with_capacity(tets.len());
        let mut face_tet_count = vec![0u8; faces.len()];
        for t in &tets {
            let mut te = [0; 6];
            for (slot, e) in te.iter_mut().zip(TET_EDGES) {
                *slot = edge_index(t[e[0]], t[e[1]]);
            }
            let mut tf = [0; 4];
            for (slot, f) in tf.iter_mut().zip(TET_FACES) {
                *slot = face_index([t[f[0]], t[f[1]], t[f[2]]]);
                face_tet_count[*slot] += 1;
            }
            let x: [Vec3; 4] = [
                vertices[t[0]],
                vertices[t[1]],
                vertices[t[2]],
                vertices[t[3]],
            ];
            let det = det3(sub(x[1], x[0]), sub(x[2], x[0]), sub(x[3], x[0]));
            tet_edges.push(te);
            tet_faces.push(tf);
            tet_orientation.push(if det > 0.0 { 1 } else { -1 });
        }

        let face_edges: Vec<[usize; 3]> = faces
            .iter()
            .map(|f| {
                let mut fe = [0; 3];
                for (slot, e) in fe.iter_mut().zip(TRI_EDGES) {
                    *slot = edge_index(f[e[0]], f[e[1]]);
                }
                fe
            })
            .collect();

        let boundary_faces: Vec<bool> = face_tet_count.iter().map(|&c| c == 1).collect();
        let mut boundary_edges = vec![false; edges.len()];
        let mut boundary_vertices = vec![false; vertices.len()];
        for (f, fe) in face_edges.iter().enumerate() {
            if boundary_faces[f] {
                for &e in fe {
                    boundary_edges[e] = true;
                }
                for &v in &faces[f] {
                    boundary_vertices[v] = true;
                }
            }
        }

        Ok(Mesh {
            n,
            vertices,
            edges,
            faces,
            tets,
            tet_edges,
            tet_faces,
            tet_orientation,
            face_edges,
            face_tet_count,
            boundary: [boundary_vertices, boundary_edges, boundary_faces],
        })
    }

    pub fn subdivisions(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn tets(&self) -> &[[usize; 4]] {
        &self.tets
    }

    pub fn face_edges(&self) -> &[[usize; 3]] {
        &self.face_edges
    }

    pub fn tet_edges(&self) -> &[[usize; 6]] {
        &self.tet_edges
    }

    pub fn tet_faces(&self) -> &[[usize; 4]] {
        &self.tet_faces
    }

    /// +1 if the ascending vertex order is right-handed, -1 otherwise.
    pub fn tet_orientation(&self, t: usize) -> i8 {
        self.tet_orientation[t]
    }

    /// Number of tetrahedra sharing face `f` (1 or 2).
    pub fn face_cell_count(&self, f: usize) -> usize {
        self.face_tet_count[f] as usize
    }

    /// Number of entities of dimension `dim` (0..=3).
    pub fn entity_count(&self, dim: usize) -> usize {
        match dim {
            0 => self.vertices.len(),
            1 => self.edges.len(),
            2 => self.faces.len(),
            3 => self.tets.len(),
            _ => 0,
        }
    }

    /// Boundary flags for entities of dimension 0, 1 or 2.
    pub fn boundary_flags(&self, dim: usize) -> Result<&[bool]> {
        match dim {
            0..=2 => Ok(&self.boundary[dim]),
            _ => Err(invalid(format!(
                "boundary flags exist for dimensions 0..=2, got {dim}"
            ))),
        }
    }

    /// Indices of the entities of dimension `dim` lying on the cube boundary.
    pub fn boundary_entities(&self, dim: usize) -> Result<Vec<usize>> {
        Ok(self
            .boundary_flags(dim)?
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
            .collect())
    }

    pub fn entity_adjacency(&self, t: usize) -> Result<TetAdjacency> {
        if t >= self.tets.len() {
            return Err(invalid(format!(
                "cell index {t} out of range ({} cells)",
                self.tets.len()
            )));
        }
        let s = self.tet_orientation[t];
        let mut edges = [(0, 1); 6];
        for (slot, &e) in edges.iter_mut().zip(&self.tet_edges[t]) {
            *slot = (e, 1);
        }
        let mut faces = [(0, 1); 4];
        for (i, (slot, &f)) in faces.iter_mut().zip(&self.tet_faces[t]).enumerate() {
            let alt = if i % 2 == 0 { 1 } else { -1 };
            *slot = (f, alt * s);
        }
        Ok(TetAdjacency {
            vertices: self.tets[t],
            edges,
            faces,
        })
    }

    pub fn geometry(&self, t: usize) -> TetGeometry {
        let v = &self.tets[t];
        TetGeometry::from_vertices([
            self.vertices[v[0]],
            self.vertices[v[1]],
            self.vertices[v[2]],
            self.vertices[v[3]],
        ])
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.vertices.len() as i64 - self.edges.len() as i64 + self.faces.len() as i64
            - self.tets.len() as i64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_cube_counts() {
        let m = Mesh::structured(1).unwrap();
        assert_eq!(m.entity_count(0), 8);
        assert_eq!(m.entity_count(1), 19);
        assert_eq!(m.entity_count(2), 18);
        assert_eq!(m.entity_count(3), 6);
        assert_eq!(m.euler_characteristic(), 1);
    }

    #[test]
    fn closed_form_counts_n2() {
        let m = Mesh::structured(2).unwrap();
        let n = 2usize;
        let e = 3 * n * (n + 1).pow(2) + 3 * n * n * (n + 1) + n.pow(3);
        assert_eq!(e, 98);
        assert_eq!(m.entity_count(0), 27);
        assert_eq!(m.entity_count(1), e);
        assert_eq!(m.entity_count(2), 120);
        assert_eq!(m.entity_count(3), 48);
    }

    #[test]
    fn zero_subdivisions_rejected() {
        assert!(matches!(
            Mesh::structured(0),
            Err(crate::Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn boundary_sets() {
        let m = Mesh::structured(1).unwrap();
        assert_eq!(m.boundary_entities(0).unwrap().len(), 8);
        assert_eq!(m.boundary_entities(2).unwrap().len(), 12);
        assert!(m.boundary_entities(3).is_err());

        let m = Mesh::structured(2).unwrap();
        let interior: Vec<usize> = (0..27)
            .filter(|v| !m.boundary_flags(0).unwrap()[*v])
            .collect();
        assert_eq!(interior, vec![13]);
        assert_eq!(m.vertices()[13], [0.5, 0.5, 0.5]);
    }

    #[test]
    fn adjacency_edges_are_vertex_pairs() {
        let m = Mesh::structured(2).unwrap();
        for t in 0..m.entity_count(3) {
            let adj = m.entity_adjacency(t).unwrap();
            for (k, (e, s)) in adj.edges.iter().enumerate() {
                let [a, b] = TET_EDGES[k];
                assert_eq!(m.edges()[*e], [adj.vertices[a], adj.vertices[b]]);
                assert_eq!(*s, 1);
            }
        }
        assert!(m.entity_adjacency(48).is_err());
    }

    #[test]
    fn interior_faces_get_opposite_signs() {
        let m = Mesh::structured(1).unwrap();
        let mut seen: Vec<Vec<i8>> = vec![Vec::new(); m.entity_count(2)];
        for t in 0..6 {
            for (f, s) in m.entity_adjacency(t).unwrap().faces {
                seen[f].push(s);
            }
        }
        let body_diag = [0usize, 7];
        let mut interior = 0;
        for (f, signs) in seen.iter().enumerate() {
            if signs.len() == 2 {
                interior += 1;
                assert_eq!(signs[0], -signs[1]);
                let verts = m.faces()[f];
                assert!(body_diag.iter().all(|v| verts.contains(v)));
            }
        }
        assert_eq!(interior, 6);
    }

    #[test]
    fn volumes_and_invariants_up_to_n4() {
        for n in 1..=4 {
            let m = Mesh::structured(n).unwrap();
            assert_eq!(m.euler_characteristic(), 1);
            let vol: f64 = (0..m.entity_count(3)).map(|t| m.geometry(t).volume).sum();
            assert!((vol - 1.0).abs() < 1e-14, "n={n} vol={vol}");
            for t in 0..m.entity_count(3) {
                assert!(m.geometry(t).volume > 0.0);
                assert!(m.tets()[t].windows(2).all(|w| w[0] < w[1]));
            }
            assert_eq!(m.boundary_entities(2).unwrap().len(), 12 * n * n);
            for f in 0..m.entity_count(2) {
                let c = m.face_cell_count(f);
                assert!(c == 1 || c == 2);
                assert_eq!(c == 1, m.boundary_flags(2).unwrap()[f]);
            }
        }
    }
}
