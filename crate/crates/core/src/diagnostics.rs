//! Energy, helicities, divergence norms and the per-step balance laws.
//!
//! The magnetic helicity needs a vector potential. It comes from the
//! curl-curl system `(∇×A, ∇×C) = (B, ∇×C)` in Coulomb gauge, solved by
//! GMRES. The value `(A, B)` does not depend on the gauge because
//! `(B, ∇φ) = 0` for exactly solenoidal `B`.

use crate::assembly::{load_vector, AnalyticField, SparseMatrix};
use crate::error::{invalid, Error, Result};
use crate::feec::{DeRham, FieldVector, SpaceKind};
use crate::geom::Vec3;
use crate::linalg::vector::{dot, lin_comb, max_abs};
use crate::linalg::{gmres, SolverReport, Ssor, GMRES_RESTART, SSOR_OMEGA};
use crate::timestepper::{MhdState, PicardReport, Scheme, SimParams, Sources};

/// Relative tolerance of the potential solve.
pub const POTENTIAL_TOL: f64 = 1e-12;
const POTENTIAL_MAXIT: usize = 20_000;
/// Largest `|D·B|` accepted by [`magnetic_helicity`], relative to `max |B|`.
pub const SOLENOIDAL_THRESHOLD: f64 = 1e-9;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DiagnosticsRecord {
    pub step: usize,
    pub time: f64,
    /// `½‖u‖² + ½c‖B‖²`.
    pub energy: f64,
    pub helicity_magnetic: f64,
    pub helicity_cross: f64,
    pub div_b_l2: f64,
    pub div_b_max: f64,
    pub energy_identity_residual: f64,
    pub hm_identity_residual: f64,
    pub hc_identity_residual: f64,
    /// `‖ū‖² + ‖B̄‖²` over the step ending here; 0 for the first record.
    pub field_scale: f64,
    pub picard_iters: usize,
    pub inner_iters: usize,
}

/// GMRES solver for the potential system on free edges.
///
/// The curl-curl matrix is singular on gradients, so the solver works with
/// `CᵀMC + τ (MG)(MG)ᵀ`, which is SPD. For right-hand sides in the range of
/// `Cᵀ` its solution is the Coulomb-gauge solution of the singular system.
pub struct PotentialSolver<'a> {
    complex: &'a DeRham,
    matrix: SparseMatrix,
    precond: Ssor,
}

impl<'a> PotentialSolver<'a> {
    pub fn new(complex: &'a DeRham) -> Result<Self> {
        let r = complex.reduced();
        let mg = r.mass[1].matmul(&r.grad);
        let gauge = mg.matmul(&mg.transpose());
        // balance the two parts by their diagonals
        let tau = r.curl_curl.diagonal().iter().sum::<f64>() / gauge.diagonal().iter().sum::<f64>();
        let matrix = r.curl_curl.add_scaled(1.0, &gauge, tau);
        let precond = Ssor::new(matrix.clone(), SSOR_OMEGA, 1)?;
        Ok(PotentialSolver {
            complex,
            matrix,
            precond,
        })
    }

    /// Solves `CᵀMC a = rhs` on free edges for `rhs` in the range of `Cᵀ`.
    fn solve_reduced(&self, rhs: &[f64]) -> Result<(Vec<f64>, SolverReport)> {
        let (a, report) = gmres(&self.matrix, rhs, POTENTIAL_TOL, POTENTIAL_MAXIT, GMRES_RESTART, &self.precond);
        if !report.converged {
            return Err(Error::SolverFailure {
                solver: "gmres (potential)",
                report,
            });
        }
        Ok((a, report))
    }

    /// A potential of the solenoidal face field `b`.
    pub fn potential(&self, b: &FieldVector) -> Result<(FieldVector, SolverReport)> {
        let c = self.complex;
        if b.kind != SpaceKind::Div {
            return Err(invalid("the potential is defined for face fields"));
        }
        let scale = max_abs(&b.coeffs).max(1.0);
        let div = max_abs(&c.derivative(b)?.coeffs);
        if div > SOLENOIDAL_THRESHOLD * scale {
            return Err(Error::PreconditionViolation(format!(
                "magnetic helicity needs a solenoidal field, max |D·B| = {div:.3e}"
            )));
        }
        let r = c.reduced();
        let br = c.dofs(SpaceKind::Div).restrict(&b.coeffs);
        let rhs = r.curl.mul_vec_transposed(&r.mass[2].mul_vec(&br));
        let (a, report) = self.solve_reduced(&rhs)?;
        Ok((FieldVector::new(SpaceKind::Curl, c.dofs(SpaceKind::Curl).extend(&a)), report))
    }

    /// `∫ A·B` for a solenoidal face field.
    pub fn helicity(&self, b: &FieldVector) -> Result<f64> {
        let (a, _) = self.potential(b)?;
        self.complex.inner(&a, b)
    }

    /// L² projection of an edge field onto solenoidal face fields, which is
    /// the range of the curl. Returns the projection and its helicity.
    pub fn divfree_project(&self, b: &FieldVector) -> Result<(FieldVector, f64)> {
        let c = self.complex;
        if b.kind != SpaceKind::Curl {
            return Err(invalid("divfree_project acts on edge fields"));
        }
        let r = c.reduced();
        let d1 = c.dofs(SpaceKind::Curl);
        let rhs = r.curl.mul_vec_transposed(&r.mixed.mul_vec_transposed(&d1.restrict(&b.coeffs)));
        let (a, _) = self.solve_reduced(&rhs)?;
        let p = r.curl.mul_vec(&a);
        let hm = dot(&a, &r.mixed.mul_vec(&p));
        Ok((FieldVector::new(SpaceKind::Div, c.dofs(SpaceKind::Div).extend(&p)), hm))
    }
}

/// `∫ A·B` with `∇×A = B`.
pub fn magnetic_helicity(complex: &DeRham, b: &FieldVector) -> Result<f64> {
    PotentialSolver::new(complex)?.helicity(b)
}

/// L² projection of an edge field onto the solenoidal face fields.
pub fn divfree_project(complex: &DeRham, b: &FieldVector) -> Result<FieldVector> {
    Ok(PotentialSolver::new(complex)?.divfree_project(b)?.0)
}

/// `∫ u·B` for an edge field `u` and a face or edge field `B`.
pub fn cross_helicity(complex: &DeRham, u: &FieldVector, b: &FieldVector) -> Result<f64> {
    if u.kind != SpaceKind::Curl {
        return Err(invalid("cross helicity takes an edge velocity"));
    }
    complex.inner(u, b)
}

/// `(H_m, ‖B‖², H_m/‖B‖²)`; the ratio is 0 for `B = 0`.
pub fn helicity_energy_bound(complex: &DeRham, b: &FieldVector) -> Result<(f64, f64, f64)> {
    let hm = magnetic_helicity(complex, b)?;
    let b2 = complex.inner(b, b)?;
    let ratio = if b2 > 0.0 { hm / b2 } else { 0.0 };
    Ok((hm, b2, ratio))
}

/// L² norm and max norm of the cellwise divergence `(D B)_T / |T|`.
pub fn div_norms(complex: &DeRham, b: &FieldVector) -> Result<(f64, f64)> {
    let div = complex.cell_divergence(b)?;
    let vol = complex.mass(SpaceKind::L2).diagonal();
    let l2 = div.iter().zip(&vol).map(|(d, v)| d * d * v).sum::<f64>().sqrt();
    Ok((l2, max_abs(&div)))
}

/// `max_T |(D B)_T|`, the net flux out of each cell.
pub fn div_flux_max(complex: &DeRham, b: &FieldVector) -> Result<f64> {
    Ok(max_abs(&complex.derivative(b)?.coeffs))
}

/// Kinetic plus magnetic energy `½‖u‖² + ½c‖B‖²`.
pub fn energy(complex: &DeRham, state: &MhdState, coupling: f64) -> Result<f64> {
    Ok(0.5 * complex.inner(&state.u, &state.u)? + 0.5 * coupling * complex.inner(&state.b, &state.b)?)
}

/// Midpoint quantities of one step in reduced coordinates, recomputed from
/// the two time nodes.
struct Midpoint {
    ubar: Vec<f64>,
    bbar: Vec<f64>,
    du: Vec<f64>,
    db: Vec<f64>,
    /// `H`: `Q(B̄)` (main) or `B̄` itself (reference).
    h: Vec<f64>,
    /// `j`: weak curl of `B̄` (main) or `Q(∇×B̄)` (reference).
    j: Vec<f64>,
    /// `Q(∇×ū)`.
    omega: Vec<f64>,
    /// `(f, ·)` at the midpoint on free edges, if a momentum source is present.
    f_load: Option<Vec<f64>>,
    scheme: Scheme,
}

fn midpoint(
    complex: &DeRham,
    s0: &MhdState,
    s1: &MhdState,
    src: &Sources<'_>,
) -> Result<Midpoint> {
    let c = complex;
    let r = c.reduced();
    let scheme = match (s0.b.kind, s1.b.kind) {
        (SpaceKind::Div, SpaceKind::Div) => Scheme::Main,
        (SpaceKind::Curl, SpaceKind::Curl) => Scheme::Reference,
        _ => return Err(invalid("states carry different magnetic spaces")),
    };
    let dt = s1.t - s0.t;
    if !(dt > 0.0) {
        return Err(invalid("states must be consecutive in time"));
    }
    let d1 = c.dofs(SpaceKind::Curl);
    let db_map = c.dofs(s0.b.kind);
    let (u0, u1) = (d1.restrict(&s0.u.coeffs), d1.restrict(&s1.u.coeffs));
    let (b0, b1) = (db_map.restrict(&s0.b.coeffs), db_map.restrict(&s1.b.coeffs));
    let ubar = lin_comb(0.5, &u0, 0.5, &u1);
    let bbar = lin_comb(0.5, &b0, 0.5, &b1);
    let du = lin_comb(1.0 / dt, &u1, -1.0 / dt, &u0);
    let db = lin_comb(1.0 / dt, &b1, -1.0 / dt, &b0);
    let omega = c.solve_mass_reduced(SpaceKind::Curl, &r.mixed.mul_vec(&r.curl.mul_vec(&ubar)))?;
    let (h, j) = match scheme {
        Scheme::Main => (
            c.solve_mass_reduced(SpaceKind::Curl, &r.mixed.mul_vec(&bbar))?,
            c.solve_mass_reduced(SpaceKind::Curl, &r.curl.mul_vec_transposed(&r.mass[2].mul_vec(&bbar)))?,
        ),
        Scheme::Reference => (
            bbar.clone(),
            c.solve_mass_reduced(SpaceKind::Curl, &r.mixed.mul_vec(&r.curl.mul_vec(&bbar)))?,
        ),
    };
    let f_load = match src.momentum {
        Some(f) => {
            let t_half = s0.t + 0.5 * dt;
            let g = move |x: Vec3| f(x, t_half);
            let full = load_vector(c.mesh(), SpaceKind::Curl, AnalyticField::Vector(&g), &c.quadrature().source)?;
            Some(d1.restrict(&full))
        }
        None => None,
    };
    Ok(Midpoint {
        ubar,
        bbar,
        du,
        db,
        h,
        j,
        omega,
        f_load,
        scheme,
    })
}

/// `‖ū‖² + ‖B̄‖²`, the scale the identity residuals are measured against.
pub fn field_scale(complex: &DeRham, s0: &MhdState, s1: &MhdState) -> Result<f64> {
    let avg = |a: &FieldVector, b: &FieldVector| {
        FieldVector::new(a.kind, lin_comb(0.5, &a.coeffs, 0.5, &b.coeffs))
    };
    let (u, b) = (avg(&s0.u, &s1.u), avg(&s0.b, &s1.b));
    Ok(complex.inner(&u, &u)? + complex.inner(&b, &b)?)
}

/// `|(D_t u, ū) + c(D_t B, B̄) + Re⁻¹‖∇×ū‖² + cRm⁻¹‖j‖² − (f, ū)|`.
///
/// For the reference scheme the magnetic dissipation is `Rm⁻¹‖∇×B̄‖²`.
pub fn energy_identity_residual(
    complex: &DeRham,
    s0: &MhdState,
    s1: &MhdState,
    params: &SimParams,
    src: &Sources<'_>,
) -> Result<f64> {
    let mp = midpoint(complex, s0, s1, src)?;
    Ok(energy_residual_from(complex, &mp, params).abs())
}

fn energy_residual_from(complex: &DeRham, mp: &Midpoint, params: &SimParams) -> f64 {
    let r = complex.reduced();
    let m1 = &r.mass[1];
    let kinetic = dot(&mp.du, &m1.mul_vec(&mp.ubar));
    let (magnetic, resistive) = match mp.scheme {
        Scheme::Main => (
            dot(&mp.db, &r.mass[2].mul_vec(&mp.bbar)),
            dot(&mp.j, &m1.mul_vec(&mp.j)),
        ),
        Scheme::Reference => (
            dot(&mp.db, &m1.mul_vec(&mp.bbar)),
            dot(&mp.bbar, &r.curl_curl.mul_vec(&mp.bbar)),
        ),
    };
    let viscous = dot(&mp.ubar, &r.curl_curl.mul_vec(&mp.ubar));
    let work = mp.f_load.as_ref().map_or(0.0, |f| dot(f, &mp.ubar));
    kinetic + params.coupling * magnetic + params.re_inv * viscous
        + params.coupling * params.rm_inv * resistive
        - work
}

/// Both sides of the two helicity balance laws over one step.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct HelicityBalance {
    pub hm0: f64,
    pub hm1: f64,
    /// `−2Rm⁻¹(H, j)`.
    pub hm_rate: f64,
    pub hc0: f64,
    pub hc1: f64,
    /// `−Re⁻¹(∇×ū, ∇×H) − Rm⁻¹(∇×ū, j) + (f, H)`.
    pub hc_rate: f64,
    /// `(ω, j)`, equal to `(∇×ū, j)` because `j` is an edge field.
    pub omega_j: f64,
    /// `(∇×ū, j)`.
    pub curl_u_j: f64,
    pub dt: f64,
}

impl HelicityBalance {
    pub fn hm_residual(&self) -> f64 {
        ((self.hm1 - self.hm0) / self.dt - self.hm_rate).abs()
    }

    pub fn hc_residual(&self) -> f64 {
        ((self.hc1 - self.hc0) / self.dt - self.hc_rate).abs()
    }
}

/// Helicity of the magnetic field of a state: the potential helicity for
/// face fields, the helicity of the solenoidal projection for edge fields.
pub fn state_helicity(solver: &PotentialSolver<'_>, state: &MhdState) -> Result<f64> {
    match state.b.kind {
        SpaceKind::Div => solver.helicity(&state.b),
        _ => Ok(solver.divfree_project(&state.b)?.1),
    }
}

fn balance_from(
    complex: &DeRham,
    mp: &Midpoint,
    params: &SimParams,
    hm: (f64, f64),
    hc: (f64, f64),
    dt: f64,
) -> HelicityBalance {
    let r = complex.reduced();
    let m1 = &r.mass[1];
    let curl_u = r.curl.mul_vec(&mp.ubar);
    let mj = m1.mul_vec(&mp.j);
    let h_j = dot(&mp.h, &mj);
    let omega_j = dot(&mp.omega, &mj);
    let curl_u_j = dot(&mp.j, &r.mixed.mul_vec(&curl_u));
    let curl_u_curl_h = dot(&mp.ubar, &r.curl_curl.mul_vec(&mp.h));
    let work = mp.f_load.as_ref().map_or(0.0, |f| dot(f, &mp.h));
    HelicityBalance {
        hm0: hm.0,
        hm1: hm.1,
        hm_rate: -2.0 * params.rm_inv * h_j,
        hc0: hc.0,
        hc1: hc.1,
        hc_rate: -params.re_inv * curl_u_curl_h - params.rm_inv * curl_u_j + work,
        omega_j,
        curl_u_j,
        dt,
    }
}

/// Evaluates both helicity balance laws between consecutive states, with
/// potentials computed independently at each node.
pub fn helicity_balance(
    complex: &DeRham,
    s0: &MhdState,
    s1: &MhdState,
    params: &SimParams,
    src: &Sources<'_>,
) -> Result<HelicityBalance> {
    let solver = PotentialSolver::new(complex)?;
    let mp = midpoint(complex, s0, s1, src)?;
    let hm = (state_helicity(&solver, s0)?, state_helicity(&solver, s1)?);
    let hc = (
        cross_helicity(complex, &s0.u, &s0.b)?,
        cross_helicity(complex, &s1.u, &s1.b)?,
    );
    Ok(balance_from(complex, &mp, params, hm, hc, s1.t - s0.t))
}

/// `(r_m, r_c)`: absolute imbalance of the magnetic and cross helicity laws.
pub fn helicity_identity_residuals(
    complex: &DeRham,
    s0: &MhdState,
    s1: &MhdState,
    params: &SimParams,
    src: &Sources<'_>,
) -> Result<(f64, f64)> {
    let b = helicity_balance(complex, s0, s1, params, src)?;
    Ok((b.hm_residual(), b.hc_residual()))
}

/// Builds one [`DiagnosticsRecord`] per observed state, reusing the
/// helicity of the previous state.
pub struct Monitor<'a> {
    complex: &'a DeRham,
    params: SimParams,
    sources: Sources<'a>,
    solver: PotentialSolver<'a>,
    prev: Option<(MhdState, f64, f64)>,
}

impl<'a> Monitor<'a> {
    pub fn new(complex: &'a DeRham, params: SimParams, sources: Sources<'a>) -> Result<Self> {
        Ok(Monitor {
            complex,
            params,
            sources,
            solver: PotentialSolver::new(complex)?,
            prev: None,
        })
    }

    pub fn observe(&mut self, state: &MhdState, picard: Option<&PicardReport>) -> Result<DiagnosticsRecord> {
        let c = self.complex;
        let hm = state_helicity(&self.solver, state)?;
        let hc = cross_helicity(c, &state.u, &state.b)?;
        let (div_l2, div_max) = match state.b.kind {
            SpaceKind::Div => (div_norms(c, &state.b)?.0, div_flux_max(c, &state.b)?),
            _ => {
                // weak divergence of an edge field, a vertex field
                let w = c.discrete_div(&state.b)?;
                (c.inner(&w, &w)?.sqrt(), max_abs(&w.coeffs))
            }
        };
        let mut rec = DiagnosticsRecord {
            step: state.step,
            time: state.t,
            energy: energy(c, state, self.params.coupling)?,
            helicity_magnetic: hm,
            helicity_cross: hc,
            div_b_l2: div_l2,
            div_b_max: div_max,
            picard_iters: picard.map_or(0, |p| p.iterations),
            inner_iters: picard.map_or(0, |p| p.inner_iterations),
            ..Default::default()
        };
        if let Some((prev, hm0, hc0)) = &self.prev {
            let mp = midpoint(c, prev, state, &self.sources)?;
            rec.energy_identity_residual = energy_residual_from(c, &mp, &self.params).abs();
            let bal = balance_from(c, &mp, &self.params, (*hm0, hm), (*hc0, hc), state.t - prev.t);
            rec.hm_identity_residual = bal.hm_residual();
            rec.hc_identity_residual = bal.hc_residual();
            rec.field_scale = field_scale(c, prev, state)?;
        }
        self.prev = Some((state.clone(), hm, hc));
        Ok(rec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::AnalyticField;
    use crate::geom::Vec3;
    use crate::timestepper::Stepper;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_field(d: &DeRham, kind: SpaceKind, rng: &mut ChaCha8Rng) -> FieldVector {
        let dofs = d.dofs(kind);
        let v: Vec<f64> = (0..dofs.free().len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        FieldVector::new(kind, dofs.extend(&v))
    }

    fn u0(p: Vec3) -> Vec3 {
        let s = |t: f64| (PI * t).sin();
        [s(p[1]) * s(p[2]), 0.5 * s(p[0]) * s(p[2]) * p[2], s(p[0]) * s(p[1]) * (1.0 - p[0])]
    }

    fn b0(p: Vec3) -> Vec3 {
        let s = |t: f64| (PI * t).sin();
        let c = |t: f64| (PI * t).cos();
        let [x, y, z] = p;
        [
            PI * s(x) * c(y) * (1.0 + z),
            -PI * c(x) * s(y) * (1.0 + z) + PI * x * x * s(y) * c(z),
            -PI * x * x * c(y) * s(z),
        ]
    }

    #[test]
    fn helicity_of_a_curl_is_its_potential_pairing() {
        let d = DeRham::structured(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let solver = PotentialSolver::new(&d).unwrap();
        for _ in 0..3 {
            let a = random_field(&d, SpaceKind::Curl, &mut rng);
            let b = d.derivative(&a).unwrap();
            let direct = d.inner(&a, &b).unwrap();
            let hm = solver.helicity(&b).unwrap();
            assert!((hm - direct).abs() <= 1e-10 * direct.abs().max(1.0), "{hm} {direct}");
            // the recovered potential reproduces B
            let (ar, _) = solver.potential(&b).unwrap();
            let br = d.derivative(&ar).unwrap();
            let err: f64 = br.coeffs.iter().zip(&b.coeffs).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            assert!(err < 1e-10);
        }
    }

    #[test]
    fn helicity_is_gauge_invariant() {
        let d = DeRham::structured(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..20 {
            let a = random_field(&d, SpaceKind::Curl, &mut rng);
            let phi = random_field(&d, SpaceKind::Grad, &mut rng);
            let b = d.derivative(&a).unwrap();
            let ga = d.derivative(&phi).unwrap();
            let shifted = FieldVector::new(SpaceKind::Curl, lin_comb(1.0, &a.coeffs, 1.0, &ga.coeffs));
            let h0 = d.inner(&a, &b).unwrap();
            let h1 = d.inner(&shifted, &b).unwrap();
            assert!((h0 - h1).abs() < 1e-11, "{}", (h0 - h1).abs());
        }
    }

    #[test]
    fn helicity_is_quadratic() {
        let d = DeRham::structured(3).unwrap();
        let a = d.canonical_interpolate(AnalyticField::Vector(&b0), SpaceKind::Curl).unwrap();
        let b = d.derivative(&a).unwrap();
        let solver = PotentialSolver::new(&d).unwrap();
        let h1 = solver.helicity(&b).unwrap();
        let b2 = FieldVector::new(SpaceKind::Div, b.coeffs.iter().map(|x| 2.0 * x).collect());
        let h2 = solver.helicity(&b2).unwrap();
        assert!(h1.abs() > 1e-3);
        assert!((h2 - 4.0 * h1).abs() < 1e-10 * h1.abs());
        let (hm, b2n, ratio) = helicity_energy_bound(&d, &b).unwrap();
        assert!((ratio - hm / b2n).abs() < 1e-15);
        assert_eq!(helicity_energy_bound(&d, &d.zeros(SpaceKind::Div)).unwrap().2, 0.0);
    }

    #[test]
    fn non_solenoidal_field_is_rejected() {
        let d = DeRham::structured(2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let b = random_field(&d, SpaceKind::Div, &mut rng);
        assert!(matches!(magnetic_helicity(&d, &b), Err(crate::Error::PreconditionViolation(_))));
    }

    #[test]
    fn cross_helicity_of_orthogonal_constants_vanishes() {
        let d = DeRham::structured(2).unwrap();
        let ex = |_: Vec3| [1.0, 0.0, 0.0];
        let ey = |_: Vec3| [0.0, 1.0, 0.0];
        let u = d.canonical_interpolate_unpinned(AnalyticField::Vector(&ex), SpaceKind::Curl).unwrap();
        let b = d.canonical_interpolate_unpinned(AnalyticField::Vector(&ey), SpaceKind::Div).unwrap();
        assert!(cross_helicity(&d, &u, &b).unwrap().abs() < 1e-14);
        let bx = d.canonical_interpolate_unpinned(AnalyticField::Vector(&ex), SpaceKind::Div).unwrap();
        assert!((cross_helicity(&d, &u, &bx).unwrap() - 1.0).abs() < 1e-13);
        assert!(cross_helicity(&d, &b, &u).is_err());
    }

    #[test]
    fn divfree_projection_is_orthogonal_and_kills_gradients() {
        let d = DeRham::structured(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let solver = PotentialSolver::new(&d).unwrap();
        let b = random_field(&d, SpaceKind::Curl, &mut rng);
        let (p, _) = solver.divfree_project(&b).unwrap();
        assert!(max_abs(&d.derivative(&p).unwrap().coeffs) < 1e-12);
        // b − P is orthogonal to every curl
        for _ in 0..5 {
            let a = random_field(&d, SpaceKind::Curl, &mut rng);
            let ca = d.derivative(&a).unwrap();
            let lhs = d.inner(&b, &ca).unwrap();
            let rhs = d.inner(&p, &ca).unwrap();
            assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0));
        }
        let phi = random_field(&d, SpaceKind::Grad, &mut rng);
        let g = d.derivative(&phi).unwrap();
        let (pg, hg) = solver.divfree_project(&g).unwrap();
        assert!(max_abs(&pg.coeffs) < 1e-10);
        assert!(hg.abs() < 1e-12);
    }

    #[test]
    fn div_norms_see_only_sources() {
        let d = DeRham::structured(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let a = random_field(&d, SpaceKind::Curl, &mut rng);
        let b = d.derivative(&a).unwrap();
        let (l2, mx) = div_norms(&d, &b).unwrap();
        assert!(l2 < 1e-12 && mx < 1e-10);
        let r = random_field(&d, SpaceKind::Div, &mut rng);
        assert!(div_flux_max(&d, &r).unwrap() > 1e-3);
    }

    fn trajectory(params: SimParams, steps: usize) -> Vec<DiagnosticsRecord> {
        let d = DeRham::structured(3).unwrap();
        let st = Stepper::new(&d, params.clone()).unwrap();
        let src = Sources::none();
        let mut s = st
            .initial_state(AnalyticField::Vector(&u0), AnalyticField::Vector(&b0), 0.0, &src)
            .unwrap();
        let mut mon = Monitor::new(&d, params, src).unwrap();
        let mut out = vec![mon.observe(&s, None).unwrap()];
        for _ in 0..steps {
            let (s1, rep) = st.step(&s, &src).unwrap();
            out.push(mon.observe(&s1, Some(&rep)).unwrap());
            s = s1;
        }
        out
    }

    #[test]
    fn ideal_trajectory_conserves_energy_and_helicities() {
        let params = SimParams { dt: 0.01, ..Default::default() };
        let rec = trajectory(params, 3);
        assert_eq!(rec[0].energy_identity_residual, 0.0);
        assert!(rec[0].helicity_magnetic.abs() > 1e-3);
        for r in &rec[1..] {
            assert!(r.picard_iters >= 1 && r.inner_iters >= 1);
            assert!(r.energy_identity_residual < 1e-9 * rec[0].energy, "{r:?}");
            assert!((r.energy - rec[0].energy).abs() < 1e-8 * rec[0].energy);
            assert!((r.helicity_magnetic - rec[0].helicity_magnetic).abs() < 1e-8);
            assert!((r.helicity_cross - rec[0].helicity_cross).abs() < 1e-8);
        }
    }

    #[test]
    fn resistive_trajectory_satisfies_balance_laws() {
        let d = DeRham::structured(3).unwrap();
        let params = SimParams { dt: 0.01, re_inv: 0.05, rm_inv: 0.05, ..Default::default() };
        let st = Stepper::new(&d, params.clone()).unwrap();
        let src = Sources::none();
        let s0 = st
            .initial_state(AnalyticField::Vector(&u0), AnalyticField::Vector(&b0), 0.0, &src)
            .unwrap();
        let (s1, _) = st.step(&s0, &src).unwrap();
        let scale = field_scale(&d, &s0, &s1).unwrap();
        let bal = helicity_balance(&d, &s0, &s1, &params, &src).unwrap();
        // both helicities change, and the discrete laws account for it
        assert!((bal.hm1 - bal.hm0).abs() > 1e-6);
        assert!((bal.hc1 - bal.hc0).abs() > 1e-6);
        assert!(bal.hm_residual() < 1e-7 * scale, "{bal:?}");
        assert!(bal.hc_residual() < 1e-7 * scale, "{bal:?}");
        assert!((bal.omega_j - bal.curl_u_j).abs() < 1e-12 * scale);
        let e0 = energy(&d, &s0, params.coupling).unwrap();
        let e1 = energy(&d, &s1, params.coupling).unwrap();
        assert!(e1 < e0);
        assert!(energy_identity_residual(&d, &s0, &s1, &params, &src).unwrap() < 1e-9 * e0);
        let (rm, rc) = helicity_identity_residuals(&d, &s0, &s1, &params, &src).unwrap();
        assert_eq!((rm, rc), (bal.hm_residual(), bal.hc_residual()));
    }

    #[test]
    fn reference_trajectory_reports_weak_divergence() {
        let params = SimParams { dt: 0.01, re_inv: 0.01, rm_inv: 0.01, scheme: Scheme::Reference, ..Default::default() };
        let rec = trajectory(params, 2);
        for r in &rec {
            assert!(r.div_b_max < 1e-7);
            assert!(r.energy > 0.0);
        }
        assert!(rec[2].energy_identity_residual < 1e-9 * rec[0].energy);
    }
}
