//! Bilinear and trilinear forms assembled over the cells of a mesh.

use super::basis::CellBasis;
use super::quadrature::TetRule;
use super::sparse::SparseMatrix;
use crate::error::{invalid, Result};
use crate::feec::SpaceKind;
use crate::geom::{cross, dot, Vec3};
use crate::mesh::Mesh;
use crate::par;

/// An analytic field given as a closure of the position.
#[derive(Clone, Copy)]
pub enum AnalyticField<'a> {
    Scalar(&'a (dyn Fn(Vec3) -> f64 + Sync)),
    Vector(&'a (dyn Fn(Vec3) -> Vec3 + Sync)),
}

/// A discrete field entering a trilinear form, evaluated cell by cell.
#[derive(Clone, Copy, Debug)]
pub enum FieldRef<'a> {
    /// Edge (Nédélec) coefficients.
    Edge(&'a [f64]),
    /// Face (Raviart-Thomas) coefficients.
    Face(&'a [f64]),
    /// Curl of an edge field, cellwise constant.
    EdgeCurl(&'a [f64]),
}

/// How the edge test functions enter a trilinear form.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TestOp {
    Value,
    Curl,
}

fn gather<const K: usize>(global: &[f64], idx: &[usize; K]) -> [f64; K] {
    let mut out = [0.0; K];
    for (o, &i) in out.iter_mut().zip(idx) {
        *o = global[i];
    }
    out
}

impl FieldRef<'_> {
    fn check(&self, mesh: &Mesh) -> Result<()> {
        let (len, want, what) = match self {
            FieldRef::Edge(c) | FieldRef::EdgeCurl(c) => (c.len(), mesh.entity_count(1), "edge"),
            FieldRef::Face(c) => (c.len(), mesh.entity_count(2), "face"),
        };
        if len != want {
            return Err(invalid(format!(
                "{what} field has {len} coefficients, mesh has {want}"
            )));
        }
        Ok(())
    }

    /// Values at the quadrature points of cell `t`.
    fn eval_cell(&self, mesh: &Mesh, t: usize, basis: &CellBasis, rule: &TetRule) -> Vec<Vec3> {
        match self {
            FieldRef::Edge(c) => {
                let lc = gather(c, &mesh.tet_edges()[t]);
                rule.points()
                    .iter()
                    .map(|p| basis.eval_edge_field(&lc, p))
                    .collect()
            }
            FieldRef::Face(c) => {
                let lc = gather(c, &mesh.tet_faces()[t]);
                rule.points()
                    .iter()
                    .map(|p| basis.eval_face_field(&lc, p))
                    .collect()
            }
            FieldRef::EdgeCurl(c) => {
                let lc = gather(c, &mesh.tet_edges()[t]);
                vec![basis.eval_edge_curl(&lc); rule.len()]
            }
        }
    }
}

fn cell_bases(mesh: &Mesh) -> Vec<CellBasis> {
    par::map_indexed(mesh.entity_count(3), |t| CellBasis::new(mesh.geometry(t)))
}

/// Local mass matrix of `kind` on one cell, row-major `k x k`.
fn local_mass(kind: SpaceKind, basis: &CellBasis, rule: &TetRule) -> Vec<f64> {
    let jac = 6.0 * basis.volume();
    match kind {
        SpaceKind::Grad => {
            let mut m = vec![0.0; 16];
            for (p, w) in rule.iter() {
                for i in 0..4 {
                    for j in 0..4 {
                        m[4 * i + j] += w * jac * p[i] * p[j];
                    }
                }
            }
            m
        }
        SpaceKind::Curl => {
            let mut m = vec![0.0; 36];
            for (p, w) in rule.iter() {
                let v = basis.edge_values(p);
                for i in 0..6 {
                    for j in 0..6 {
                        m[6 * i + j] += w * jac * dot(v[i], v[j]);
                    }
                }
            }
            m
        }
        SpaceKind::Div => {
            let mut m = vec![0.0; 16];
            for (p, w) in rule.iter() {
                let v = basis.face_values(p);
                for i in 0..4 {
                    for j in 0..4 {
                        m[4 * i + j] += w * jac * dot(v[i], v[j]);
                    }
                }
            }
            m
        }
        SpaceKind::L2 => vec![basis.volume()],
    }
}

fn cell_dofs(mesh: &Mesh, kind: SpaceKind, t: usize) -> Vec<usize> {
    match kind {
        SpaceKind::Grad => mesh.tets()[t].to_vec(),
        SpaceKind::Curl => mesh.tet_edges()[t].to_vec(),
        SpaceKind::Div => mesh.tet_faces()[t].to_vec(),
        SpaceKind::L2 => vec![t],
    }
}

/// Global mass matrix of one of the four spaces (all DOFs, no boundary
/// elimination).
pub fn mass_matrix(mesh: &Mesh, kind: SpaceKind, rule: &TetRule) -> SparseMatrix {
    let bases = cell_bases(mesh);
    let locals = par::map_indexed(bases.len(), |t| local_mass(kind, &bases[t], rule));
    let ndof = mesh.entity_count(kind.entity_dim());
    let mut trip = Vec::with_capacity(locals.iter().map(Vec::len).sum());
    for (t, m) in locals.iter().enumerate() {
        let dofs = cell_dofs(mesh, kind, t);
        let k = dofs.len();
        for i in 0..k {
            for j in 0..k {
                trip.push((dofs[i], dofs[j], m[k * i + j]));
            }
        }
    }
    SparseMatrix::from_triplets(ndof, ndof, &trip)
}

/// Mixed mass `K[e, f] = ∫ w_e · w_f` between edge and face functions.
pub fn mixed_mass_matrix(mesh: &Mesh, rule: &TetRule) -> SparseMatrix {
    let bases = cell_bases(mesh);
    let locals = par::map_indexed(bases.len(), |t| {
        let b = &bases[t];
        let jac = 6.0 * b.volume();
        let mut m = [[0.0; 4]; 6];
        for (p, w) in rule.iter() {
            let ev = b.edge_values(p);
            let fv = b.face_values(p);
            for i in 0..6 {
                for j in 0..4 {
                    m[i][j] += w * jac * dot(ev[i], fv[j]);
                }
            }
        }
        m
    });
    let mut trip = Vec::with_capacity(24 * locals.len());
    for (t, m) in locals.iter().enumerate() {
        let e = &mesh.tet_edges()[t];
        let f = &mesh.tet_faces()[t];
        for i in 0..6 {
            for j in 0..4 {
                trip.push((e[i], f[j], m[i][j]));
            }
        }
    }
    SparseMatrix::from_triplets(mesh.entity_count(1), mesh.entity_count(2), &trip)
}

fn scatter<const K: usize>(out: &mut [f64], idx: &[usize; K], local: &[f64; K]) {
    for (&i, v) in idx.iter().zip(local) {
        out[i] += v;
    }
}

/// Trilinear vector `r_k = ∫ (a × b) · T(ψ_k)` over all edge functions `ψ_k`,
/// with `T` the identity or the curl.
pub fn cross_form(
    mesh: &Mesh,
    a: FieldRef<'_>,
    b: FieldRef<'_>,
    test: TestOp,
    rule: &TetRule,
) -> Result<Vec<f64>> {
    a.check(mesh)?;
    b.check(mesh)?;
    let locals = par::map_indexed(mesh.entity_count(3), |t| {
        let basis = CellBasis::new(mesh.geometry(t));
        let jac = 6.0 * basis.volume();
        let av = a.eval_cell(mesh, t, &basis, rule);
        let bv = b.eval_cell(mesh, t, &basis, rule);
        let mut r = [0.0; 6];
        match test {
            TestOp::Value => {
                for (q, (p, w)) in rule.iter().enumerate() {
                    let c = cross(av[q], bv[q]);
                    let psi = basis.edge_values(p);
                    for k in 0..6 {
                        r[k] += w * jac * dot(c, psi[k]);
                    }
                }
            }
            TestOp::Curl => {
                let mut c = [0.0; 3];
                for (q, (_, w)) in rule.iter().enumerate() {
                    crate::geom::axpy(w * jac, cross(av[q], bv[q]), &mut c);
                }
                for (rk, curl) in r.iter_mut().zip(basis.edge_curls()) {
                    *rk = dot(c, *curl);
                }
            }
        }
        r
    });
    let mut out = vec![0.0; mesh.entity_count(1)];
    for (t, r) in locals.iter().enumerate() {
        scatter(&mut out, &mesh.tet_edges()[t], r);
    }
    Ok(out)
}

/// Load vector `r_k = ∫ f · ψ_k` (or `∫ f ψ_k` for scalar spaces).
pub fn load_vector(
    mesh: &Mesh,
    kind: SpaceKind,
    f: AnalyticField<'_>,
    rule: &TetRule,
) -> Result<Vec<f64>> {
    match (kind, f) {
        (SpaceKind::Curl | SpaceKind::Div, AnalyticField::Vector(_))
        | (SpaceKind::Grad | SpaceKind::L2, AnalyticField::Scalar(_)) => {}
        _ => {
            return Err(invalid(format!(
                "field rank does not match the {kind:?} space"
            )))
        }
    }
    let ntet = mesh.entity_count(3);
    let locals = par::map_indexed(ntet, |t| {
        let basis = CellBasis::new(mesh.geometry(t));
        let jac = 6.0 * basis.volume();
        let mut r = [0.0; 6];
        for (p, w) in rule.iter() {
            let x = basis.geometry.point(p);
            let wj = w * jac;
            match (kind, f) {
                (SpaceKind::Curl, AnalyticField::Vector(g)) => {
                    let v = g(x);
                    for (rk, psi) in r.iter_mut().zip(basis.edge_values(p)) {
                        *rk += wj * dot(v, psi);
                    }
                }
                (SpaceKind::Div, AnalyticField::Vector(g)) => {
                    let v = g(x);
                    for (rk, psi) in r.iter_mut().zip(basis.face_values(p)) {
                        *rk += wj * dot(v, psi);
                    }
                }
                (SpaceKind::Grad, AnalyticField::Scalar(g)) => {
                    let v = g(x);
                    for k in 0..4 {
                        r[k] += wj * v * p[k];
                    }
                }
                (SpaceKind::L2, AnalyticField::Scalar(g)) => r[0] += wj * g(x),
                _ => unreachable!(),
            }
        }
        r
    });
    let mut out = vec![0.0; mesh.entity_count(kind.entity_dim())];
    for (t, r) in locals.iter().enumerate() {
        for (k, dof) in cell_dofs(mesh, kind, t).into_iter().enumerate() {
            out[dof] += r[k];
        }
    }
    Ok(out)
}
