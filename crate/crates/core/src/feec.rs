//! The four lowest-order discrete de Rham spaces on a mesh and the maps
//! between them.
//!
//! Homogeneous boundary conditions are imposed by dropping boundary DOFs.
//! Every public operation takes and returns full-length coefficient vectors
//! with constrained entries held at zero; the reduced matrices on free DOFs
//! are exposed through [`Reduced`] for the time steppers.

use std::sync::Arc;

use crate::assembly::{
    load_vector, mass_matrix, mixed_mass_matrix, AnalyticField, CellBasis, QuadratureSet,
    SparseMatrix,
};
use crate::error::{invalid, Error, Result};
use crate::geom::{cross, dot, sub, Vec3};
use crate::linalg::{cg, Jacobi, MASS_TOL};
use crate::mesh::{Mesh, TRI_EDGE_SIGNS};

const MASS_MAXIT: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SpaceKind {
    /// Continuous P1, vertex DOFs.
    Grad,
    /// Lowest-order Nédélec, edge DOFs.
    Curl,
    /// Lowest-order Raviart-Thomas, face DOFs.
    Div,
    /// Piecewise constants, cell DOFs.
    L2,
}

impl SpaceKind {
    pub const ALL: [SpaceKind; 4] = [SpaceKind::Grad, SpaceKind::Curl, SpaceKind::Div, SpaceKind::L2];

    /// Dimension of the mesh entities carrying the DOFs.
    pub fn entity_dim(self) -> usize {
        match self {
            SpaceKind::Grad => 0,
            SpaceKind::Curl => 1,
            SpaceKind::Div => 2,
            SpaceKind::L2 => 3,
        }
    }

    fn next(self) -> Option<SpaceKind> {
        match self {
            SpaceKind::Grad => Some(SpaceKind::Curl),
            SpaceKind::Curl => Some(SpaceKind::Div),
            SpaceKind::Div => Some(SpaceKind::L2),
            SpaceKind::L2 => None,
        }
    }
}

/// Free and constrained DOF bookkeeping for one space.
#[derive(Debug, Clone)]
pub struct DofMap {
    ndof: usize,
    free: Vec<usize>,
    constrained: Vec<usize>,
}

impl DofMap {
    fn new(mesh: &Mesh, kind: SpaceKind) -> Self {
        let ndof = mesh.entity_count(kind.entity_dim());
        let (free, constrained) = match kind {
            SpaceKind::L2 => ((0..ndof).collect(), Vec::new()),
            _ => {
                let flags = mesh
                    .boundary_flags(kind.entity_dim())
                    .expect("dims 0..2 carry boundary flags");
                (0..ndof).partition(|&i| !flags[i])
            }
        };
        DofMap {
            ndof,
            free,
            constrained,
        }
    }

    pub fn ndof(&self) -> usize {
        self.ndof
    }

    pub fn free(&self) -> &[usize] {
        &self.free
    }

    pub fn constrained(&self) -> &[usize] {
        &self.constrained
    }

    /// Free entries of a full vector.
    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        debug_assert_eq!(full.len(), self.ndof);
        self.free.iter().map(|&i| full[i]).collect()
    }

    /// Full vector with the given free entries and zero constrained entries.
    pub fn extend(&self, reduced: &[f64]) -> Vec<f64> {
        debug_assert_eq!(reduced.len(), self.free.len());
        let mut out = vec![0.0; self.ndof];
        for (&i, v) in self.free.iter().zip(reduced) {
            out[i] = *v;
        }
        out
    }

    /// Zeroes the constrained entries in place.
    pub fn pin(&self, full: &mut [f64]) {
        for &i in &self.constrained {
            full[i] = 0.0;
        }
    }
}

#[derive(Debug, Clone)]
pub struct FeSpace {
    kind: SpaceKind,
    mesh: Arc<Mesh>,
    dofs: DofMap,
}

impl FeSpace {
    pub fn new(mesh: Arc<Mesh>, kind: SpaceKind) -> Self {
        let dofs = DofMap::new(&mesh, kind);
        FeSpace { kind, mesh, dofs }
    }

    pub fn kind(&self) -> SpaceKind {
        self.kind
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn dim(&self) -> usize {
        self.dofs.ndof
    }

    pub fn dofs(&self) -> &DofMap {
        &self.dofs
    }
}

/// Coefficients of a discrete field, tagged with their space.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldVector {
    pub kind: SpaceKind,
    pub coeffs: Vec<f64>,
}

impl FieldVector {
    pub fn new(kind: SpaceKind, coeffs: Vec<f64>) -> Self {
        FieldVector { kind, coeffs }
    }

    pub fn zeros(kind: SpaceKind, len: usize) -> Self {
        FieldVector {
            kind,
            coeffs: vec![0.0; len],
        }
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }
}

/// Operators restricted to free DOFs.
#[derive(Debug, Clone)]
pub struct Reduced {
    /// Free edges x free vertices.
    pub grad: SparseMatrix,
    /// Free faces x free edges.
    pub curl: SparseMatrix,
    /// Cells x free faces.
    pub div: SparseMatrix,
    /// Mass matrices indexed by [`SpaceKind::entity_dim`].
    pub mass: [SparseMatrix; 4],
    /// Free edges x free faces.
    pub mixed: SparseMatrix,
    /// `Cᵀ M_div C` on free edges.
    pub curl_curl: SparseMatrix,
    /// `Gᵀ M_curl G` on free vertices.
    pub grad_stiffness: SparseMatrix,
}

/// Source of an L² projection.
#[derive(Clone, Copy)]
pub enum ProjectionSource<'a> {
    Analytic(AnalyticField<'a>),
    Field(&'a FieldVector),
}

/// The discrete complex `Grad -> Curl -> Div -> L2` on one mesh.
pub struct DeRham {
    mesh: Arc<Mesh>,
    quad: QuadratureSet,
    spaces: [FeSpace; 4],
    derivative: [SparseMatrix; 3],
    mass: [SparseMatrix; 4],
    mixed: SparseMatrix,
    reduced: Reduced,
    mass_precond: [Jacobi; 4],
}

impl std::fmt::Debug for DeRham {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DeRham")
            .field("n", &self.mesh.subdivisions())
            .field("dims", &self.spaces.iter().map(FeSpace::dim).collect::<Vec<_>>())
            .finish()
    }
}

fn incidence_grad(mesh: &Mesh) -> SparseMatrix {
    let trip: Vec<_> = mesh
        .edges()
        .iter()
        .enumerate()
        .flat_map(|(e, &[a, b])| [(e, a, -1.0), (e, b, 1.0)])
        .collect();
    SparseMatrix::from_triplets(mesh.entity_count(1), mesh.entity_count(0), &trip)
}

fn incidence_curl(mesh: &Mesh) -> SparseMatrix {
    let trip: Vec<_> = mesh
        .face_edges()
        .iter()
        .enumerate()
        .flat_map(|(f, fe)| {
            fe.iter()
                .zip(TRI_EDGE_SIGNS)
                .map(move |(&e, s)| (f, e, s as f64))
        })
        .collect();
    SparseMatrix::from_triplets(mesh.entity_count(2), mesh.entity_count(1), &trip)
}

fn incidence_div(mesh: &Mesh) -> SparseMatrix {
    let mut trip = Vec::with_capacity(4 * mesh.entity_count(3));
    for t in 0..mesh.entity_count(3) {
        let s = mesh.tet_orientation(t) as f64;
        for (i, &f) in mesh.tet_faces()[t].iter().enumerate() {
            let sign = if i % 2 == 0 { s } else { -s };
            trip.push((t, f, sign));
        }
    }
    SparseMatrix::from_triplets(mesh.entity_count(3), mesh.entity_count(2), &trip)
}

impl DeRham {
    pub fn new(mesh: Arc<Mesh>, quad: QuadratureSet) -> Result<Self> {
        let spaces = SpaceKind::ALL.map(|k| FeSpace::new(mesh.clone(), k));
        let derivative = [incidence_grad(&mesh), incidence_curl(&mesh), incidence_div(&mesh)];
        let mass = SpaceKind::ALL.map(|k| mass_matrix(&mesh, k, &quad.mass));
        let mixed = mixed_mass_matrix(&mesh, &quad.mass);

        let free = |k: usize| spaces[k].dofs.free();
        let grad = derivative[0].submatrix(free(1), free(0));
        let curl = derivative[1].submatrix(free(2), free(1));
        let div = derivative[2].submatrix(free(3), free(2));
        let rmass: [SparseMatrix; 4] = std::array::from_fn(|k| mass[k].submatrix(free(k), free(k)));
        let rmixed = mixed.submatrix(free(1), free(2));
        let curl_curl = curl.transpose().matmul(&rmass[2].matmul(&curl));
        let grad_stiffness = grad.transpose().matmul(&rmass[1].matmul(&grad));
        let mass_precond = [
            Jacobi::new(&rmass[0])?,
            Jacobi::new(&rmass[1])?,
            Jacobi::new(&rmass[2])?,
            Jacobi::new(&rmass[3])?,
        ];
        Ok(DeRham {
            mesh,
            quad,
            spaces,
            derivative,
            mass,
            mixed,
            reduced: Reduced {
                grad,
                curl,
                div,
                mass: rmass,
                mixed: rmixed,
                curl_curl,
                grad_stiffness,
            },
            mass_precond,
        })
    }

    /// Complex on the structured `n x n x n` mesh with default quadrature.
    pub fn structured(n: usize) -> Result<Self> {
        Self::new(Arc::new(Mesh::structured(n)?), QuadratureSet::default())
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn mesh_arc(&self) -> Arc<Mesh> {
        self.mesh.clone()
    }

    pub fn quadrature(&self) -> &QuadratureSet {
        &self.quad
    }

    pub fn space(&self, kind: SpaceKind) -> &FeSpace {
        &self.spaces[kind.entity_dim()]
    }

    pub fn dofs(&self, kind: SpaceKind) -> &DofMap {
        &self.spaces[kind.entity_dim()].dofs
    }

    pub fn mass(&self, kind: SpaceKind) -> &SparseMatrix {
        &self.mass[kind.entity_dim()]
    }

    /// Edge x face mass matrix `∫ w_e · w_f`.
    pub fn mixed_mass(&self) -> &SparseMatrix {
        &self.mixed
    }

    pub fn reduced(&self) -> &Reduced {
        &self.reduced
    }

    /// Signed incidence matrix from `from` into the next space: G, C or D.
    pub fn exterior_derivative_matrix(&self, from: SpaceKind) -> Result<&SparseMatrix> {
        match from {
            SpaceKind::L2 => Err(invalid("the L2 space has no exterior derivative")),
            k => Ok(&self.derivative[k.entity_dim()]),
        }
    }

    pub fn zeros(&self, kind: SpaceKind) -> FieldVector {
        FieldVector::zeros(kind, self.space(kind).dim())
    }

    fn check(&self, f: &FieldVector, kind: SpaceKind) -> Result<()> {
        if f.kind != kind {
            return Err(invalid(format!("expected a {kind:?} field, got {:?}", f.kind)));
        }
        if f.len() != self.space(kind).dim() {
            return Err(invalid(format!(
                "{kind:?} field has {} coefficients, space has {}",
                f.len(),
                self.space(kind).dim()
            )));
        }
        Ok(())
    }

    /// Applies the exterior derivative to a field.
    pub fn derivative(&self, f: &FieldVector) -> Result<FieldVector> {
        let d = self.exterior_derivative_matrix(f.kind)?;
        self.check(f, f.kind)?;
        let next = f.kind.next().expect("L2 rejected above");
        Ok(FieldVector::new(next, d.mul_vec(&f.coeffs)))
    }

    /// `(a, b)` in the L² inner product of their common space, or the mixed
    /// pairing for a Curl/Div pair.
    pub fn inner(&self, a: &FieldVector, b: &FieldVector) -> Result<f64> {
        self.check(a, a.kind)?;
        self.check(b, b.kind)?;
        match (a.kind, b.kind) {
            (x, y) if x == y => Ok(dot_slices(&a.coeffs, &self.mass(x).mul_vec(&b.coeffs))),
            (SpaceKind::Curl, SpaceKind::Div) => {
                Ok(dot_slices(&a.coeffs, &self.mixed.mul_vec(&b.coeffs)))
            }
            (SpaceKind::Div, SpaceKind::Curl) => {
                Ok(dot_slices(&b.coeffs, &self.mixed.mul_vec(&a.coeffs)))
            }
            (x, y) => Err(invalid(format!("no L2 pairing between {x:?} and {y:?}"))),
        }
    }

    /// Solves the reduced mass system of `kind` for a reduced right-hand side.
    pub fn solve_mass_reduced(&self, kind: SpaceKind, rhs: &[f64]) -> Result<Vec<f64>> {
        let k = kind.entity_dim();
        if kind == SpaceKind::L2 {
            // diagonal: cell volumes
            let d = self.reduced.mass[k].diagonal();
            return Ok(rhs.iter().zip(&d).map(|(r, v)| r / v).collect());
        }
        let (x, report) = cg(
            &self.reduced.mass[k],
            rhs,
            MASS_TOL,
            MASS_MAXIT,
            &self.mass_precond[k],
        );
        if !report.converged {
            return Err(Error::SolverFailure {
                solver: "cg (mass)",
                report,
            });
        }
        Ok(x)
    }

    /// Solves `M x = rhs` on free DOFs; `rhs` is full length and its
    /// constrained entries are ignored.
    pub fn solve_mass(&self, kind: SpaceKind, rhs: &[f64]) -> Result<FieldVector> {
        let dofs = self.dofs(kind);
        let x = self.solve_mass_reduced(kind, &dofs.restrict(rhs))?;
        Ok(FieldVector::new(kind, dofs.extend(&x)))
    }

    /// Canonical interpolant: vertex values, edge circulations, face fluxes
    /// or cell averages. Constrained DOFs are pinned to zero afterwards.
    pub fn canonical_interpolate(&self, f: AnalyticField<'_>, kind: SpaceKind) -> Result<FieldVector> {
        let mut out = self.canonical_interpolate_unpinned(f, kind)?;
        self.dofs(kind).pin(&mut out.coeffs);
        Ok(out)
    }

    /// Canonical interpolant including boundary DOFs.
    pub fn canonical_interpolate_unpinned(
        &self,
        f: AnalyticField<'_>,
        kind: SpaceKind,
    ) -> Result<FieldVector> {
        let mesh = &*self.mesh;
        let x = mesh.vertices();
        let coeffs = match (kind, f) {
            (SpaceKind::Grad, AnalyticField::Scalar(g)) => crate::par::map_indexed(x.len(), |v| g(x[v])),
            (SpaceKind::Curl, AnalyticField::Vector(g)) => {
                let rule = &self.quad.edge;
                crate::par::map_indexed(mesh.entity_count(1), |e| {
                    let [a, b] = mesh.edges()[e];
                    let t = sub(x[b], x[a]);
                    rule.iter()
                        .map(|(p, w)| {
                            let y = combine(&[x[a], x[b]], p);
                            w * dot(g(y), t)
                        })
                        .sum()
                })
            }
            (SpaceKind::Div, AnalyticField::Vector(g)) => {
                let rule = &self.quad.face;
                crate::par::map_indexed(mesh.entity_count(2), |fi| {
                    let [a, b, c] = mesh.faces()[fi];
                    // oriented area vector times 2 (reference triangle area 1/2)
                    let n = cross(sub(x[b], x[a]), sub(x[c], x[a]));
                    rule.iter()
                        .map(|(p, w)| {
                            let y = combine(&[x[a], x[b], x[c]], p);
                            w * dot(g(y), n)
                        })
                        .sum()
                })
            }
            (SpaceKind::L2, AnalyticField::Scalar(g)) => {
                let rule = &self.quad.cell;
                crate::par::map_indexed(mesh.entity_count(3), |t| {
                    let geo = mesh.geometry(t);
                    // weights sum to 1/6 on the reference cell
                    6.0 * rule.iter().map(|(p, w)| w * g(geo.point(p))).sum::<f64>()
                })
            }
            _ => {
                return Err(invalid(format!(
                    "field rank does not match the {kind:?} space"
                )))
            }
        };
        Ok(FieldVector::new(kind, coeffs))
    }

    /// L² projection onto the free DOFs of `target`.
    pub fn l2_project(&self, source: ProjectionSource<'_>, target: SpaceKind) -> Result<FieldVector> {
        let rhs = match source {
            ProjectionSource::Analytic(f) => load_vector(&self.mesh, target, f, &self.quad.source)?,
            ProjectionSource::Field(v) => {
                self.check(v, v.kind)?;
                match (v.kind, target) {
                    (a, b) if a == b => self.mass(a).mul_vec(&v.coeffs),
                    (SpaceKind::Div, SpaceKind::Curl) => self.mixed.mul_vec(&v.coeffs),
                    (SpaceKind::Curl, SpaceKind::Div) => self.mixed.mul_vec_transposed(&v.coeffs),
                    (a, b) => {
                        return Err(invalid(format!("no L2 projection from {a:?} to {b:?}")))
                    }
                }
            }
        };
        self.solve_mass(target, &rhs)
    }

    /// Weak curl of a Div field: `(j, v) = (B, ∇×v)` for every free edge
    /// function `v`.
    pub fn discrete_curl(&self, b: &FieldVector) -> Result<FieldVector> {
        self.check(b, SpaceKind::Div)?;
        let c = &self.derivative[1];
        let rhs = c.mul_vec_transposed(&self.mass[2].mul_vec(&b.coeffs));
        self.solve_mass(SpaceKind::Curl, &rhs)
    }

    /// Weak divergence of a Curl field: `(φ, q) = −(v, ∇q)` for every free
    /// vertex function `q`.
    pub fn discrete_div(&self, v: &FieldVector) -> Result<FieldVector> {
        self.check(v, SpaceKind::Curl)?;
        let g = &self.derivative[0];
        let mut rhs = g.mul_vec_transposed(&self.mass[1].mul_vec(&v.coeffs));
        rhs.iter_mut().for_each(|r| *r = -*r);
        self.solve_mass(SpaceKind::Grad, &rhs)
    }

    /// Cellwise divergence `(D B)_T / |T|` of a Div field.
    pub fn cell_divergence(&self, b: &FieldVector) -> Result<Vec<f64>> {
        self.check(b, SpaceKind::Div)?;
        let db = self.derivative[2].mul_vec(&b.coeffs);
        let vol = self.mass[3].diagonal();
        Ok(db.iter().zip(&vol).map(|(d, v)| d / v).collect())
    }

    /// Cell bases of every tetrahedron, in cell order.
    pub fn cell_bases(&self) -> Vec<CellBasis> {
        crate::par::map_indexed(self.mesh.entity_count(3), |t| CellBasis::new(self.mesh.geometry(t)))
    }
}

fn combine<const K: usize>(x: &[Vec3; K], w: &[f64; K]) -> Vec3 {
    let mut y = [0.0; 3];
    for (xi, wi) in x.iter().zip(w) {
        crate::geom::axpy(*wi, *xi, &mut y);
    }
    y
}

fn dot_slices(a: &[f64], b: &[f64]) -> f64 {
    crate::linalg::vector::dot(a, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::SparseMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    fn random_field(d: &DeRham, kind: SpaceKind, rng: &mut ChaCha8Rng) -> FieldVector {
        let dofs = d.dofs(kind);
        FieldVector::new(kind, dofs.extend(&random_vec(rng, dofs.free().len())))
    }

    /// Rank by Gaussian elimination with partial pivoting; exact for the
    /// small integer matrices used here.
    fn rank(m: &SparseMatrix) -> usize {
        let mut a = m.to_dense();
        let (rows, cols) = (m.nrows(), m.ncols());
        let mut r = 0;
        for c in 0..cols {
            let Some(p) = (r..rows).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())) else {
                break;
            };
            if a[p][c].abs() < 1e-9 {
                continue;
            }
            a.swap(r, p);
            for i in r + 1..rows {
                let f = a[i][c] / a[r][c];
                if f != 0.0 {
                    for j in c..cols {
                        a[i][j] -= f * a[r][j];
                    }
                }
            }
            r += 1;
            if r == rows {
                break;
            }
        }
        r
    }

    #[test]
    fn derivative_of_derivative_vanishes() {
        for n in 1..=3 {
            let d = DeRham::structured(n).unwrap();
            let g = d.exterior_derivative_matrix(SpaceKind::Grad).unwrap();
            let c = d.exterior_derivative_matrix(SpaceKind::Curl).unwrap();
            let dv = d.exterior_derivative_matrix(SpaceKind::Div).unwrap();
            assert_eq!(c.matmul(g).max_abs(), 0.0);
            assert_eq!(dv.matmul(c).max_abs(), 0.0);
        }
    }

    #[test]
    fn incidence_entries_are_signed_units() {
        let d = DeRham::structured(1).unwrap();
        let g = d.exterior_derivative_matrix(SpaceKind::Grad).unwrap();
        for e in 0..g.nrows() {
            let mut row: Vec<f64> = g.row(e).map(|(_, v)| v).collect();
            row.sort_by(f64::total_cmp);
            assert_eq!(row, vec![-1.0, 1.0]);
        }
        assert!(d.exterior_derivative_matrix(SpaceKind::L2).is_err());
    }

    #[test]
    fn reduced_sequence_is_exact() {
        for n in 1..=3 {
            let d = DeRham::structured(n).unwrap();
            let r = d.reduced();
            let nv = d.dofs(SpaceKind::Grad).free().len();
            let ne = d.dofs(SpaceKind::Curl).free().len();
            let nf = d.dofs(SpaceKind::Div).free().len();
            let nt = d.mesh().entity_count(3);
            let (rg, rc, rd) = (rank(&r.grad), rank(&r.curl), rank(&r.div));
            assert_eq!(rg, nv, "gradient injective on H0, n={n}");
            assert_eq!(rg + rc, ne, "ker curl = range grad, n={n}");
            assert_eq!(rc + rd, nf, "ker div = range curl, n={n}");
            // div onto mean-free cell functions
            assert_eq!(rd, nt - 1, "n={n}");
        }
    }

    #[test]
    fn constant_field_is_reproduced_by_edge_interpolant() {
        let d = DeRham::structured(2).unwrap();
        let f = |_: Vec3| [1.0, 0.0, 0.0];
        let x = d.canonical_interpolate_unpinned(AnalyticField::Vector(&f), SpaceKind::Curl).unwrap();
        for (t, basis) in d.cell_bases().iter().enumerate() {
            let lc = d.mesh().tet_edges()[t].map(|e| x.coeffs[e]);
            let v = basis.eval_edge_field(&lc, &[0.1, 0.2, 0.3, 0.4]);
            assert!((v[0] - 1.0).abs() < 1e-13 && v[1].abs() < 1e-13 && v[2].abs() < 1e-13);
        }
        // unit-cube L2 norm of (1,0,0)
        let m = d.mass(SpaceKind::Curl);
        let e = dot_slices(&x.coeffs, &m.mul_vec(&x.coeffs));
        assert!((e - 1.0).abs() < 1e-12);
    }

    #[test]
    fn interpolation_commutes_with_derivatives() {
        let d = DeRham::structured(3).unwrap();
        let phi = |p: Vec3| (PI * p[0]).sin() * (PI * p[1]).sin() * (PI * p[2]).sin();
        let grad_phi = |p: Vec3| {
            let (s, c) = (p.map(|v| (PI * v).sin()), p.map(|v| (PI * v).cos()));
            [PI * c[0] * s[1] * s[2], PI * s[0] * c[1] * s[2], PI * s[0] * s[1] * c[2]]
        };
        let ip = d.canonical_interpolate(AnalyticField::Scalar(&phi), SpaceKind::Grad).unwrap();
        let iv = d.canonical_interpolate(AnalyticField::Vector(&grad_phi), SpaceKind::Curl).unwrap();
        let gp = d.derivative(&ip).unwrap();
        let err = gp.coeffs.iter().zip(&iv.coeffs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-10, "G·Iφ vs I∇φ: {err}");
        let ci = d.derivative(&iv).unwrap();
        assert!(crate::linalg::vector::max_abs(&ci.coeffs) < 1e-10);

        // degree-1 field: the face/cell diagram is exact up to rounding
        let f = |p: Vec3| [2.0 * p[0] + p[1], -p[2], 3.0 * p[2] - p[0]];
        let div_f = |_: Vec3| 5.0;
        let fb = d.canonical_interpolate_unpinned(AnalyticField::Vector(&f), SpaceKind::Div).unwrap();
        let fc = d.canonical_interpolate(AnalyticField::Scalar(&div_f), SpaceKind::L2).unwrap();
        let cd = d.cell_divergence(&fb).unwrap();
        for (a, b) in cd.iter().zip(&fc.coeffs) {
            assert!((a - b).abs() < 1e-11, "{a} vs {b}");
        }
    }

    #[test]
    fn solenoidal_face_interpolant_has_quadrature_level_divergence() {
        let d = DeRham::structured(4).unwrap();
        let b0 = |p: Vec3| {
            let (s, c) = (p.map(|v| (PI * v).sin()), p.map(|v| (PI * v).cos()));
            [-s[0] * c[1], c[0] * s[1], 0.0]
        };
        let b = d.canonical_interpolate(AnalyticField::Vector(&b0), SpaceKind::Div).unwrap();
        let db = d.derivative(&b).unwrap();
        assert!(crate::linalg::vector::max_abs(&db.coeffs) <= 1e-10);
    }

    #[test]
    fn discrete_divergence_of_gradient_is_negative_stiffness() {
        let d = DeRham::structured(2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let phi = random_field(&d, SpaceKind::Grad, &mut rng);
        let v = d.derivative(&phi).unwrap();
        let dv = d.discrete_div(&v).unwrap();
        let lhs = d.inner(&dv, &phi).unwrap();
        let norm = d.inner(&v, &v).unwrap();
        assert!((lhs + norm).abs() < 1e-10 * norm.max(1.0));
        assert_eq!(d.discrete_div(&d.zeros(SpaceKind::Curl)).unwrap().coeffs, vec![0.0; 27]);
    }

    #[test]
    fn discrete_curl_adjointness() {
        let d = DeRham::structured(2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let b = random_field(&d, SpaceKind::Div, &mut rng);
            let v = random_field(&d, SpaceKind::Curl, &mut rng);
            let j = d.discrete_curl(&b).unwrap();
            let lhs = d.inner(&j, &v).unwrap();
            let rhs = d.inner(&b, &d.derivative(&v).unwrap()).unwrap();
            assert!((lhs - rhs).abs() < 1e-10, "{lhs} vs {rhs}");
        }
        // B = curl w: (curl_h B, w) = |curl w|²
        let w = random_field(&d, SpaceKind::Curl, &mut rng);
        let b = d.derivative(&w).unwrap();
        let j = d.discrete_curl(&b).unwrap();
        let lhs = d.inner(&j, &w).unwrap();
        let rhs = d.inner(&b, &b).unwrap();
        assert!((lhs - rhs).abs() < 1e-10 * rhs.max(1.0));
    }

    #[test]
    fn curl_projection_is_self_adjoint() {
        let d = DeRham::structured(2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let nf = d.space(SpaceKind::Div).dim();
        for _ in 0..20 {
            // unconstrained Div fields: boundary fluxes are nonzero
            let a = FieldVector::new(SpaceKind::Div, random_vec(&mut rng, nf));
            let b = FieldVector::new(SpaceKind::Div, random_vec(&mut rng, nf));
            let qa = d.l2_project(ProjectionSource::Field(&a), SpaceKind::Curl).unwrap();
            let qb = d.l2_project(ProjectionSource::Field(&b), SpaceKind::Curl).unwrap();
            let lhs = d.inner(&qa, &b).unwrap();
            let rhs = d.inner(&a, &qb).unwrap();
            assert!((lhs - rhs).abs() < 1e-12, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn projection_is_idempotent() {
        let d = DeRham::structured(2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for kind in [SpaceKind::Grad, SpaceKind::Curl, SpaceKind::Div, SpaceKind::L2] {
            let a = random_field(&d, kind, &mut rng);
            let p = d.l2_project(ProjectionSource::Field(&a), kind).unwrap();
            let err = crate::linalg::vector::max_abs(&crate::linalg::vector::sub(&p.coeffs, &a.coeffs));
            assert!(err < 1e-12, "{kind:?}: {err}");
        }
        let zero = |_: Vec3| [0.0; 3];
        let z = d.l2_project(ProjectionSource::Analytic(AnalyticField::Vector(&zero)), SpaceKind::Curl).unwrap();
        assert!(z.coeffs.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mass_matrices_are_positive_definite() {
        let d = DeRham::structured(2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for k in 0..4 {
            let m = &d.reduced().mass[k];
            assert!(m.max_asymmetry() <= 1e-14 * m.max_abs());
            for _ in 0..20 {
                let x = random_vec(&mut rng, m.nrows());
                assert!(dot_slices(&x, &m.mul_vec(&x)) > 0.0);
            }
        }
    }

    #[test]
    fn boundary_dofs_are_pinned() {
        let d = DeRham::structured(2).unwrap();
        let f = |_: Vec3| [1.0, 2.0, 3.0];
        let b = d.canonical_interpolate(AnalyticField::Vector(&f), SpaceKind::Div).unwrap();
        for &i in d.dofs(SpaceKind::Div).constrained() {
            assert_eq!(b.coeffs[i], 0.0);
        }
        assert!(d.dofs(SpaceKind::L2).constrained().is_empty());
        assert_eq!(d.dofs(SpaceKind::Grad).free(), &[13]);
    }
}
