//! Lowest-order Whitney forms on one tetrahedron.
//!
//! With vertices in ascending global order, local edge `(i, j)` and local
//! face `(i, j, k)` agree with the global orientation, so no sign flips are
//! needed when scattering local contributions.

use crate::geom::{axpy, cross, dot, scale, Vec3};
use crate::mesh::{TetGeometry, TET_EDGES, TET_FACES};

#[derive(Debug, Clone, Copy)]
pub struct CellBasis {
    pub geometry: TetGeometry,
    edge_curl: [Vec3; 6],
    /// For face `(i, j, k)`: `[∇λj×∇λk, ∇λk×∇λi, ∇λi×∇λj]`.
    face_cross: [[Vec3; 3]; 4],
    face_div: [f64; 4],
}

impl CellBasis {
    pub fn new(geometry: TetGeometry) -> Self {
        let g = &geometry.grad_lambda;
        let mut edge_curl = [[0.0; 3]; 6];
        for (c, [i, j]) in edge_curl.iter_mut().zip(TET_EDGES) {
            *c = scale(2.0, cross(g[i], g[j]));
        }
        let mut face_cross = [[[0.0; 3]; 3]; 4];
        let mut face_div = [0.0; 4];
        for (f, [i, j, k]) in TET_FACES.iter().copied().enumerate() {
            face_cross[f] = [cross(g[j], g[k]), cross(g[k], g[i]), cross(g[i], g[j])];
            face_div[f] = 6.0 * dot(g[i], cross(g[j], g[k]));
        }
        CellBasis {
            geometry,
            edge_curl,
            face_cross,
            face_div,
        }
    }

    pub fn volume(&self) -> f64 {
        self.geometry.volume
    }

    /// Values of the six edge functions `λi∇λj − λj∇λi`.
    #[inline]
    pub fn edge_values(&self, bary: &[f64; 4]) -> [Vec3; 6] {
        let g = &self.geometry.grad_lambda;
        let mut out = [[0.0; 3]; 6];
        for (o, [i, j]) in out.iter_mut().zip(TET_EDGES) {
            for d in 0..3 {
                o[d] = bary[i] * g[j][d] - bary[j] * g[i][d];
            }
        }
        out
    }

    /// Constant curls of the edge functions.
    #[inline]
    pub fn edge_curls(&self) -> &[Vec3; 6] {
        &self.edge_curl
    }

    /// Values of the four face functions
    /// `2(λi ∇λj×∇λk + λj ∇λk×∇λi + λk ∇λi×∇λj)`.
    #[inline]
    pub fn face_values(&self, bary: &[f64; 4]) -> [Vec3; 4] {
        let mut out = [[0.0; 3]; 4];
        for (f, [i, j, k]) in TET_FACES.iter().copied().enumerate() {
            let c = &self.face_cross[f];
            let mut v = [0.0; 3];
            axpy(2.0 * bary[i], c[0], &mut v);
            axpy(2.0 * bary[j], c[1], &mut v);
            axpy(2.0 * bary[k], c[2], &mut v);
            out[f] = v;
        }
        out
    }

    /// Constant divergences of the face functions.
    #[inline]
    pub fn face_divs(&self) -> &[f64; 4] {
        &self.face_div
    }

    /// Field with edge coefficients `c` at `bary`.
    #[inline]
    pub fn eval_edge_field(&self, c: &[f64; 6], bary: &[f64; 4]) -> Vec3 {
        let mut v = [0.0; 3];
        for (ci, w) in c.iter().zip(self.edge_values(bary)) {
            axpy(*ci, w, &mut v);
        }
        v
    }

    #[inline]
    pub fn eval_edge_curl(&self, c: &[f64; 6]) -> Vec3 {
        let mut v = [0.0; 3];
        for (ci, w) in c.iter().zip(self.edge_curl) {
            axpy(*ci, w, &mut v);
        }
        v
    }

    #[inline]
    pub fn eval_face_field(&self, c: &[f64; 4], bary: &[f64; 4]) -> Vec3 {
        let mut v = [0.0; 3];
        for (ci, w) in c.iter().zip(self.face_values(bary)) {
            axpy(*ci, w, &mut v);
        }
        v
    }

    #[inline]
    pub fn eval_face_div(&self, c: &[f64; 4]) -> f64 {
        c.iter().zip(self.face_div).map(|(a, b)| a * b).sum()
    }

    /// Gradient of the P1 function with vertex values `c`.
    #[inline]
    pub fn eval_vertex_grad(&self, c: &[f64; 4]) -> Vec3 {
        let mut v = [0.0; 3];
        for (ci, g) in c.iter().zip(self.geometry.grad_lambda) {
            axpy(*ci, g, &mut v);
        }
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::sub;
    use crate::mesh::Mesh;

    fn reference() -> CellBasis {
        CellBasis::new(TetGeometry::from_vertices([
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
        ]))
    }

    #[test]
    fn edge_functions_have_unit_circulation() {
        let b = reference();
        let x = b.geometry.vertices;
        for (e, [i, j]) in TET_EDGES.iter().copied().enumerate() {
            for (other, [p, q]) in TET_EDGES.iter().copied().enumerate() {
                // tangential component is constant along an edge for Whitney forms
                let mut bary = [0.0; 4];
                bary[p] = 0.5;
                bary[q] = 0.5;
                let t = sub(x[q], x[p]);
                let circ = dot(b.edge_values(&bary)[e], t);
                let expect = if (i, j) == (p, q) { 1.0 } else { 0.0 };
                assert!((circ - expect).abs() < 1e-14, "edge {e} on {other}");
            }
        }
    }

    #[test]
    fn face_functions_have_unit_flux() {
        let b = reference();
        let x = b.geometry.vertices;
        for (f, _) in TET_FACES.iter().enumerate() {
            for (g, [p, q, r]) in TET_FACES.iter().copied().enumerate() {
                let mut bary = [0.0; 4];
                bary[p] = 1.0 / 3.0;
                bary[q] = 1.0 / 3.0;
                bary[r] = 1.0 / 3.0;
                // normal flux is constant on a face; area of the parallelogram / 2
                let n = cross(sub(x[q], x[p]), sub(x[r], x[p]));
                let flux = 0.5 * dot(b.face_values(&bary)[f], n);
                let expect = if f == g { 1.0 } else { 0.0 };
                assert!((flux - expect).abs() < 1e-14, "face {f} through {g}: {flux}");
            }
        }
    }

    #[test]
    fn derivatives_follow_incidence() {
        // curl of each edge function = sum of incident face functions, and
        // div of face i = (-1)^i s / |T| on every cell of a small mesh
        let m = Mesh::structured(2).unwrap();
        for t in 0..m.entity_count(3) {
            let b = CellBasis::new(m.geometry(t));
            let s = m.tet_orientation(t) as f64;
            for (f, d) in b.face_divs().iter().enumerate() {
                let sign = if f % 2 == 0 { 1.0 } else { -1.0 };
                assert!((d - sign * s / b.volume()).abs() < 1e-10 / b.volume());
            }
            let bary = [0.1, 0.2, 0.3, 0.4];
            let faces = b.face_values(&bary);
            for (e, [i, j]) in TET_EDGES.iter().copied().enumerate() {
                let mut sum = [0.0; 3];
                for (f, fv) in TET_FACES.iter().enumerate() {
                    // face containing (i, j): sign from the triangle boundary
                    if let (Some(pi), Some(pj)) = (
                        fv.iter().position(|&v| v == i),
                        fv.iter().position(|&v| v == j),
                    ) {
                        let sign = match (pi, pj) {
                            (1, 2) => 1.0,
                            (0, 2) => -1.0,
                            (0, 1) => 1.0,
                            _ => unreachable!(),
                        };
                        axpy(sign, faces[f], &mut sum);
                    }
                }
                let c = b.edge_curls()[e];
                for d in 0..3 {
                    assert!((c[d] - sum[d]).abs() < 1e-10 * (1.0 + c[d].abs()));
                }
            }
        }
    }
}
