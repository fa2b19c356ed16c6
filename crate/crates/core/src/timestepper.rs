//! Crank-Nicolson time stepping with an outer Picard iteration.
//!
//! [`Scheme::Main`] keeps `B` in the face space and advances it by the
//! strong curl of the electric field, so `D·B` never changes. [`Scheme::Reference`]
//! keeps `B` in the edge space with curl-curl resistivity, the classical
//! non-conservative discretization used for comparison.
//!
//! All solves work on free DOFs; states store full-length vectors with zero
//! boundary entries.

use crate::assembly::{cross_form, load_vector, AnalyticField, FieldRef, SparseMatrix, TestOp};
use crate::error::{invalid, Error, Result};
use crate::feec::{DeRham, FieldVector, SpaceKind};
use crate::geom::Vec3;
use crate::linalg::vector::{axpy, dot, lin_comb};
use crate::linalg::{
    cg_with_guess, make_preconditioner, minres_with_guess, Jacobi, Preconditioner,
    PreconditionerInput, PreconditionerKind, SolverReport, INNER_TOL,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// Helicity-preserving scheme, `B` in the face space.
    Main,
    /// Edge-space magnetic field with curl-curl resistivity.
    Reference,
}

#[derive(Debug, Clone)]
pub struct SimParams {
    pub dt: f64,
    /// Inverse fluid Reynolds number; 0 is the ideal limit.
    pub re_inv: f64,
    /// Inverse magnetic Reynolds number; 0 is the ideal limit.
    pub rm_inv: f64,
    pub coupling: f64,
    /// Bound on `(‖δu‖ + ‖δB‖) / Δt` between Picard sweeps.
    pub picard_tol: f64,
    pub picard_max: usize,
    pub krylov_tol: f64,
    pub krylov_maxit: usize,
    pub scheme: Scheme,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            dt: 1e-3,
            re_inv: 0.0,
            rm_inv: 0.0,
            coupling: 1.0,
            picard_tol: 1e-10,
            picard_max: 50,
            krylov_tol: INNER_TOL,
            krylov_maxit: 2000,
            scheme: Scheme::Main,
        }
    }
}

impl SimParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(invalid(format!("time step must be positive, got {}", self.dt)));
        }
        for (name, v) in [
            ("re_inv", self.re_inv),
            ("rm_inv", self.rm_inv),
            ("coupling", self.coupling),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(format!("{name} must be finite and non-negative, got {v}")));
            }
        }
        if !(self.picard_tol > 0.0) || self.picard_max == 0 {
            return Err(invalid("Picard tolerance and sweep limit must be positive"));
        }
        if !(self.krylov_tol > 0.0) || self.krylov_maxit == 0 {
            return Err(invalid("Krylov tolerance and iteration limit must be positive"));
        }
        Ok(())
    }
}

/// A vector field depending on position and time.
pub type TimeField<'a> = &'a (dyn Fn(Vec3, f64) -> Vec3 + Sync);

/// Optional data for manufactured-solution runs.
#[derive(Clone, Copy, Default)]
pub struct Sources<'a> {
    /// Momentum source `f`, sampled at the midpoint.
    pub momentum: Option<TimeField<'a>>,
    /// Induction source `G`, sampled at the midpoint.
    pub induction: Option<TimeField<'a>>,
    /// Field `w` fixing the divergence constraint `(u, ∇Q) = (w, ∇Q)` at the
    /// new time level. Without it the constraint is homogeneous.
    pub velocity_data: Option<TimeField<'a>>,
}

impl Sources<'_> {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.momentum.is_none() && self.induction.is_none() && self.velocity_data.is_none()
    }
}

/// Fields at a time node plus the midpoint auxiliaries of the step that
/// produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct MhdState {
    pub u: FieldVector,
    /// Face field for the main scheme, edge field for the reference scheme.
    pub b: FieldVector,
    /// `Q(∇×ū)`.
    pub omega: FieldVector,
    /// Weak curl of `B̄` (main) or `Q(∇×B̄)` (reference).
    pub j: FieldVector,
    /// `Rm⁻¹ j − Q(ū×H)`; zero for the reference scheme.
    pub e: FieldVector,
    /// `Q(B̄)`.
    pub h: FieldVector,
    /// Total pressure at the midpoint.
    pub p: FieldVector,
    pub t: f64,
    pub step: usize,
}

impl MhdState {
    pub fn zero(complex: &DeRham, scheme: Scheme) -> Self {
        let b_kind = match scheme {
            Scheme::Main => SpaceKind::Div,
            Scheme::Reference => SpaceKind::Curl,
        };
        let e = || complex.zeros(SpaceKind::Curl);
        MhdState {
            u: e(),
            b: complex.zeros(b_kind),
            omega: e(),
            j: e(),
            e: e(),
            h: e(),
            p: complex.zeros(SpaceKind::Grad),
            t: 0.0,
            step: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PicardReport {
    pub iterations: usize,
    /// Final `(‖δu‖ + ‖δB‖) / Δt`.
    pub increment: f64,
    /// MINRES iterations summed over sweeps.
    pub inner_iterations: usize,
    /// Largest final relative residual among the inner solves.
    pub inner_residual: f64,
}

/// The velocity-pressure system
/// `[[M/Δt + ½Re⁻¹ CᵀMC, M G], [Gᵀ M, 0]]` on free DOFs with its
/// block-diagonal preconditioner.
pub struct SaddleSystem {
    matrix: SparseMatrix,
    precond: Box<dyn Preconditioner>,
    n_u: usize,
    n_p: usize,
}

impl SaddleSystem {
    pub fn new(complex: &DeRham, dt: f64, re_inv: f64) -> Result<Self> {
        let r = complex.reduced();
        let m1 = &r.mass[1];
        let a = m1.add_scaled(1.0 / dt, &r.curl_curl, 0.5 * re_inv);
        let lower = m1.matmul(&r.grad).transpose();
        let matrix = SparseMatrix::block_2x2(&a, &lower, None);
        // A⁻¹ M G = Δt G exactly, so the Schur complement is Δt Gᵀ M G
        let precond = make_preconditioner(
            PreconditionerKind::BlockDiag,
            PreconditionerInput::Blocks {
                velocity: &a,
                schur: &r.grad_stiffness,
                schur_scale: 1.0 / dt,
            },
        )?;
        Ok(SaddleSystem {
            matrix,
            precond,
            n_u: a.nrows(),
            n_p: lower.nrows(),
        })
    }

    pub fn matrix(&self) -> &SparseMatrix {
        &self.matrix
    }

    /// Solves for `(u, P)` given the momentum load `f` and constraint data
    /// `g`, starting from `guess` when given.
    pub fn solve(
        &self,
        f: &[f64],
        g: &[f64],
        guess: Option<(&[f64], &[f64])>,
        tol: f64,
        maxit: usize,
    ) -> Result<(Vec<f64>, Vec<f64>, SolverReport)> {
        if f.len() != self.n_u || g.len() != self.n_p {
            return Err(invalid("velocity-pressure right-hand side has the wrong length"));
        }
        let mut rhs = f.to_vec();
        rhs.extend_from_slice(g);
        let mut x = vec![0.0; self.n_u + self.n_p];
        if let Some((u0, p0)) = guess {
            x[..self.n_u].copy_from_slice(u0);
            x[self.n_u..].copy_from_slice(p0);
        }
        let report = minres_with_guess(&self.matrix, &rhs, &mut x, tol, maxit, &*self.precond);
        if !report.converged {
            return Err(Error::SolverFailure {
                solver: "minres (velocity-pressure)",
                report,
            });
        }
        let p = x.split_off(self.n_u);
        Ok((x, p, report))
    }
}

/// Closest edge field to `v` (in L²) whose weak divergence equals the
/// constraint data `g`, i.e. `(w, ∇Q) = g(Q)` for all free vertex functions.
/// Without `g` the result is discretely divergence free.
pub fn helmholtz_project(complex: &DeRham, v: &FieldVector, g: Option<&[f64]>) -> Result<FieldVector> {
    if v.kind != SpaceKind::Curl {
        return Err(invalid("Helmholtz projection acts on edge fields"));
    }
    let sys = SaddleSystem::new(complex, 1.0, 0.0)?;
    let d1 = complex.dofs(SpaceKind::Curl);
    let f = complex.reduced().mass[1].mul_vec(&d1.restrict(&v.coeffs));
    let zero = vec![0.0; sys.n_p];
    let (u, _, _) = sys.solve(&f, g.unwrap_or(&zero), None, 1e-13, 20_000)?;
    Ok(FieldVector::new(SpaceKind::Curl, d1.extend(&u)))
}

fn mass_norm(m: &SparseMatrix, v: &[f64]) -> f64 {
    dot(v, &m.mul_vec(v)).max(0.0).sqrt()
}

fn avg(a: &[f64], b: &[f64]) -> Vec<f64> {
    lin_comb(0.5, a, 0.5, b)
}

/// Midpoint auxiliaries in reduced coordinates.
struct Aux {
    omega: Vec<f64>,
    h: Vec<f64>,
    j: Vec<f64>,
}

pub struct Stepper<'a> {
    complex: &'a DeRham,
    params: SimParams,
    saddle: SaddleSystem,
    /// `M/Δt − ½Re⁻¹ CᵀMC` applied to `uⁿ`.
    velocity_explicit: SparseMatrix,
    /// Edge-space magnetic system of the reference scheme.
    magnetic: Option<(SparseMatrix, SparseMatrix, Jacobi)>,
}

impl<'a> Stepper<'a> {
    pub fn new(complex: &'a DeRham, params: SimParams) -> Result<Self> {
        params.validate()?;
        let r = complex.reduced();
        let dt = params.dt;
        let saddle = SaddleSystem::new(complex, dt, params.re_inv)?;
        let velocity_explicit = r.mass[1].add_scaled(1.0 / dt, &r.curl_curl, -0.5 * params.re_inv);
        let magnetic = match params.scheme {
            Scheme::Main => None,
            Scheme::Reference => {
                let lhs = r.mass[1].add_scaled(1.0 / dt, &r.curl_curl, 0.5 * params.rm_inv);
                let rhs = r.mass[1].add_scaled(1.0 / dt, &r.curl_curl, -0.5 * params.rm_inv);
                let pc = Jacobi::new(&lhs)?;
                Some((lhs, rhs, pc))
            }
        };
        Ok(Stepper {
            complex,
            params,
            saddle,
            velocity_explicit,
            magnetic,
        })
    }

    pub fn params(&self) -> &SimParams {
        &self.params
    }

    pub fn complex(&self) -> &DeRham {
        self.complex
    }

    fn edge_full(&self, v: &[f64]) -> Vec<f64> {
        self.complex.dofs(SpaceKind::Curl).extend(v)
    }

    /// `∫ (a×b)·ψ` (or `·∇×ψ`) for reduced edge fields `a`, `b`, restricted
    /// to free edges.
    fn cross(&self, a: FieldRef<'_>, b: FieldRef<'_>, test: TestOp) -> Result<Vec<f64>> {
        let c = self.complex;
        let full = cross_form(c.mesh(), a, b, test, &c.quadrature().trilinear)?;
        Ok(c.dofs(SpaceKind::Curl).restrict(&full))
    }

    fn load(&self, kind: SpaceKind, f: TimeField<'_>, t: f64) -> Result<Vec<f64>> {
        let c = self.complex;
        let g = move |x: Vec3| f(x, t);
        let full = load_vector(c.mesh(), kind, AnalyticField::Vector(&g), &c.quadrature().source)?;
        Ok(c.dofs(kind).restrict(&full))
    }

    /// Constraint data `(w(t), ∇Q)` on free vertices, or zeros.
    fn constraint_data(&self, src: &Sources<'_>, t: f64) -> Result<Vec<f64>> {
        let r = self.complex.reduced();
        match src.velocity_data {
            Some(w) => Ok(r.grad.mul_vec_transposed(&self.load(SpaceKind::Curl, w, t)?)),
            None => Ok(vec![0.0; r.grad.ncols()]),
        }
    }

    fn auxiliaries(&self, ubar: &[f64], bbar: &[f64]) -> Result<Aux> {
        let c = self.complex;
        let r = c.reduced();
        let omega = c.solve_mass_reduced(SpaceKind::Curl, &r.mixed.mul_vec(&r.curl.mul_vec(ubar)))?;
        let h = c.solve_mass_reduced(SpaceKind::Curl, &r.mixed.mul_vec(bbar))?;
        let j = c.solve_mass_reduced(
            SpaceKind::Curl,
            &r.curl.mul_vec_transposed(&r.mass[2].mul_vec(bbar)),
        )?;
        Ok(Aux { omega, h, j })
    }

    /// `E = Rm⁻¹ j − Q(ū×H)` in reduced coordinates.
    fn electric_field(&self, ubar: &[f64], aux: &Aux) -> Result<Vec<f64>> {
        let (uf, hf) = (self.edge_full(ubar), self.edge_full(&aux.h));
        let x = self.cross(FieldRef::Edge(&uf), FieldRef::Edge(&hf), TestOp::Value)?;
        let mut e = self.complex.solve_mass_reduced(SpaceKind::Curl, &x)?;
        e.iter_mut().for_each(|v| *v = -*v);
        axpy(self.params.rm_inv, &aux.j, &mut e);
        Ok(e)
    }

    /// Velocity and midpoint pressure from the momentum load `f` and the
    /// divergence data `g` (both on free DOFs).
    pub fn solve_velocity_pressure(
        &self,
        f: &[f64],
        g: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>, SolverReport)> {
        self.saddle
            .solve(f, g, None, self.params.krylov_tol, self.params.krylov_maxit)
    }

    /// `Bⁿ⁺¹ = Bⁿ − Δt C E (+ Δt Q_div G)` on free faces. `induction` is the
    /// already projected source.
    pub fn advance_magnetic(&self, b_n: &[f64], e: &[f64], induction: Option<&[f64]>) -> Vec<f64> {
        let dt = self.params.dt;
        let mut b = b_n.to_vec();
        axpy(-dt, &self.complex.reduced().curl.mul_vec(e), &mut b);
        if let Some(g) = induction {
            axpy(dt, g, &mut b);
        }
        b
    }

    /// Initial state: `u` is interpolated and then projected onto the
    /// constraint set, `B` is interpolated into its space (and for the
    /// reference scheme projected onto weakly solenoidal edge fields).
    pub fn initial_state(
        &self,
        u0: AnalyticField<'_>,
        b0: AnalyticField<'_>,
        t0: f64,
        src: &Sources<'_>,
    ) -> Result<MhdState> {
        let c = self.complex;
        let g = self.constraint_data(src, t0)?;
        let u_int = c.canonical_interpolate(u0, SpaceKind::Curl)?;
        let u = helmholtz_project(c, &u_int, Some(&g))?;
        let mut state = MhdState::zero(c, self.params.scheme);
        state.t = t0;
        state.u = u;
        state.b = match self.params.scheme {
            Scheme::Main => c.canonical_interpolate(b0, SpaceKind::Div)?,
            Scheme::Reference => {
                let b_int = c.canonical_interpolate(b0, SpaceKind::Curl)?;
                helmholtz_project(c, &b_int, None)?
            }
        };
        let ur = c.dofs(SpaceKind::Curl).restrict(&state.u.coeffs);
        match self.params.scheme {
            Scheme::Main => {
                let br = c.dofs(SpaceKind::Div).restrict(&state.b.coeffs);
                let aux = self.auxiliaries(&ur, &br)?;
                let e = self.electric_field(&ur, &aux)?;
                self.store_aux(&mut state, aux, e);
            }
            Scheme::Reference => {
                let br = c.dofs(SpaceKind::Curl).restrict(&state.b.coeffs);
                self.store_reference_aux(&mut state, &ur, &br)?;
            }
        }
        Ok(state)
    }

    fn store_aux(&self, state: &mut MhdState, aux: Aux, e: Vec<f64>) {
        state.omega = FieldVector::new(SpaceKind::Curl, self.edge_full(&aux.omega));
        state.h = FieldVector::new(SpaceKind::Curl, self.edge_full(&aux.h));
        state.j = FieldVector::new(SpaceKind::Curl, self.edge_full(&aux.j));
        state.e = FieldVector::new(SpaceKind::Curl, self.edge_full(&e));
    }

    fn store_reference_aux(&self, state: &mut MhdState, ubar: &[f64], bbar: &[f64]) -> Result<()> {
        let c = self.complex;
        let r = c.reduced();
        let omega = c.solve_mass_reduced(SpaceKind::Curl, &r.mixed.mul_vec(&r.curl.mul_vec(ubar)))?;
        let j = c.solve_mass_reduced(SpaceKind::Curl, &r.mixed.mul_vec(&r.curl.mul_vec(bbar)))?;
        state.omega = FieldVector::new(SpaceKind::Curl, self.edge_full(&omega));
        state.j = FieldVector::new(SpaceKind::Curl, self.edge_full(&j));
        state.h = FieldVector::new(SpaceKind::Curl, self.edge_full(bbar));
        state.e = c.zeros(SpaceKind::Curl);
        Ok(())
    }

    /// Advances one step with the configured scheme.
    pub fn step(&self, state: &MhdState, src: &Sources<'_>) -> Result<(MhdState, PicardReport)> {
        match self.params.scheme {
            Scheme::Main => self.step_main(state, src),
            Scheme::Reference => self.step_reference(state, src),
        }
    }

    fn check_state(&self, state: &MhdState, b_kind: SpaceKind) -> Result<()> {
        let c = self.complex;
        if state.u.kind != SpaceKind::Curl
            || state.u.len() != c.space(SpaceKind::Curl).dim()
            || state.b.kind != b_kind
            || state.b.len() != c.space(b_kind).dim()
        {
            return Err(invalid("state does not match the scheme's spaces"));
        }
        Ok(())
    }

    /// One step of the helicity-preserving scheme.
    pub fn step_main(&self, state: &MhdState, src: &Sources<'_>) -> Result<(MhdState, PicardReport)> {
        self.check_state(state, SpaceKind::Div)?;
        let c = self.complex;
        let r = c.reduced();
        let prm = &self.params;
        let dt = prm.dt;
        let (d0, d1, d2) = (
            c.dofs(SpaceKind::Grad),
            c.dofs(SpaceKind::Curl),
            c.dofs(SpaceKind::Div),
        );
        let un = d1.restrict(&state.u.coeffs);
        let bn = d2.restrict(&state.b.coeffs);
        let t_half = state.t + 0.5 * dt;
        let t_new = state.t + dt;

        let mut base = self.velocity_explicit.mul_vec(&un);
        if let Some(f) = src.momentum {
            axpy(1.0, &self.load(SpaceKind::Curl, f, t_half)?, &mut base);
        }
        let g = self.constraint_data(src, t_new)?;
        let induction = match src.induction {
            Some(gf) => Some(c.solve_mass_reduced(SpaceKind::Div, &self.load(SpaceKind::Div, gf, t_half)?)?),
            None => None,
        };

        let mut uk = un.clone();
        let mut bk = bn.clone();
        let mut pk = d0.restrict(&state.p.coeffs);
        let mut report = PicardReport::default();
        for it in 1..=prm.picard_max {
            let ubar = avg(&uk, &un);
            let bbar = avg(&bk, &bn);
            let aux = self.auxiliaries(&ubar, &bbar)?;
            let uf = self.edge_full(&ubar);
            let mut f = base.clone();
            let of = self.edge_full(&aux.omega);
            axpy(1.0, &self.cross(FieldRef::Edge(&uf), FieldRef::Edge(&of), TestOp::Value)?, &mut f);
            if prm.coupling != 0.0 {
                let (jf, hf) = (self.edge_full(&aux.j), self.edge_full(&aux.h));
                let lorentz = self.cross(FieldRef::Edge(&jf), FieldRef::Edge(&hf), TestOp::Value)?;
                axpy(prm.coupling, &lorentz, &mut f);
            }
            let (u_new, p_new, inner) =
                self.saddle
                    .solve(&f, &g, Some((&uk, &pk)), prm.krylov_tol, prm.krylov_maxit)?;
            report.inner_iterations += inner.iterations;
            report.inner_residual = report.inner_residual.max(inner.relative_residual);

            let e = self.electric_field(&avg(&u_new, &un), &aux)?;
            let b_new = self.advance_magnetic(&bn, &e, induction.as_deref());

            let du = lin_comb(1.0, &u_new, -1.0, &uk);
            let db = lin_comb(1.0, &b_new, -1.0, &bk);
            let incr = (mass_norm(&r.mass[1], &du) + mass_norm(&r.mass[2], &db)) / dt;
            uk = u_new;
            bk = b_new;
            pk = p_new;
            report.iterations = it;
            report.increment = incr;
            if incr < prm.picard_tol {
                let ubar = avg(&uk, &un);
                let bbar = avg(&bk, &bn);
                let aux = self.auxiliaries(&ubar, &bbar)?;
                let e = self.electric_field(&ubar, &aux)?;
                let mut next = MhdState {
                    u: FieldVector::new(SpaceKind::Curl, d1.extend(&uk)),
                    b: FieldVector::new(SpaceKind::Div, d2.extend(&bk)),
                    p: FieldVector::new(SpaceKind::Grad, d0.extend(&pk)),
                    t: t_new,
                    step: state.step + 1,
                    ..MhdState::zero(c, Scheme::Main)
                };
                self.store_aux(&mut next, aux, e);
                return Ok((next, report));
            }
        }
        Err(Error::PicardFailure {
            iterations: report.iterations,
            increment: report.increment,
        })
    }

    /// One step of the reference scheme with `B` in the edge space.
    pub fn step_reference(
        &self,
        state: &MhdState,
        src: &Sources<'_>,
    ) -> Result<(MhdState, PicardReport)> {
        self.check_state(state, SpaceKind::Curl)?;
        if src.induction.is_some() {
            return Err(invalid("the reference scheme takes no induction source"));
        }
        let (mag_lhs, mag_rhs, mag_pc) = self
            .magnetic
            .as_ref()
            .expect("reference stepper builds the magnetic system");
        let c = self.complex;
        let r = c.reduced();
        let prm = &self.params;
        let dt = prm.dt;
        let (d0, d1) = (c.dofs(SpaceKind::Grad), c.dofs(SpaceKind::Curl));
        let un = d1.restrict(&state.u.coeffs);
        let bn = d1.restrict(&state.b.coeffs);
        let t_half = state.t + 0.5 * dt;
        let t_new = state.t + dt;

        let mut base = self.velocity_explicit.mul_vec(&un);
        if let Some(f) = src.momentum {
            axpy(1.0, &self.load(SpaceKind::Curl, f, t_half)?, &mut base);
        }
        let g = self.constraint_data(src, t_new)?;
        let b_explicit = mag_rhs.mul_vec(&bn);

        let mut uk = un.clone();
        let mut bk = bn.clone();
        let mut pk = d0.restrict(&state.p.coeffs);
        let mut report = PicardReport::default();
        for it in 1..=prm.picard_max {
            let ubar = avg(&uk, &un);
            let bbar = avg(&bk, &bn);
            let omega =
                c.solve_mass_reduced(SpaceKind::Curl, &r.mixed.mul_vec(&r.curl.mul_vec(&ubar)))?;
            let (uf, of, bf) = (self.edge_full(&ubar), self.edge_full(&omega), self.edge_full(&bbar));
            let mut f = base.clone();
            axpy(1.0, &self.cross(FieldRef::Edge(&uf), FieldRef::Edge(&of), TestOp::Value)?, &mut f);
            if prm.coupling != 0.0 {
                let lorentz =
                    self.cross(FieldRef::EdgeCurl(&bf), FieldRef::Edge(&bf), TestOp::Value)?;
                axpy(prm.coupling, &lorentz, &mut f);
            }
            let (u_new, p_new, inner) =
                self.saddle
                    .solve(&f, &g, Some((&uk, &pk)), prm.krylov_tol, prm.krylov_maxit)?;
            report.inner_iterations += inner.iterations;
            report.inner_residual = report.inner_residual.max(inner.relative_residual);

            let unf = self.edge_full(&avg(&u_new, &un));
            let mut rhs = b_explicit.clone();
            axpy(1.0, &self.cross(FieldRef::Edge(&unf), FieldRef::Edge(&bf), TestOp::Curl)?, &mut rhs);
            let mut b_new = bk.clone();
            let mrep = cg_with_guess(mag_lhs, &rhs, &mut b_new, prm.krylov_tol, prm.krylov_maxit, mag_pc);
            if !mrep.converged {
                return Err(Error::SolverFailure {
                    solver: "cg (magnetic)",
                    report: mrep,
                });
            }
            report.inner_iterations += mrep.iterations;

            let du = lin_comb(1.0, &u_new, -1.0, &uk);
            let db = lin_comb(1.0, &b_new, -1.0, &bk);
            let incr = (mass_norm(&r.mass[1], &du) + mass_norm(&r.mass[1], &db)) / dt;
            uk = u_new;
            bk = b_new;
            pk = p_new;
            report.iterations = it;
            report.increment = incr;
            if incr < prm.picard_tol {
                let mut next = MhdState {
                    u: FieldVector::new(SpaceKind::Curl, d1.extend(&uk)),
                    b: FieldVector::new(SpaceKind::Curl, d1.extend(&bk)),
                    p: FieldVector::new(SpaceKind::Grad, d0.extend(&pk)),
                    t: t_new,
                    step: state.step + 1,
                    ..MhdState::zero(c, Scheme::Reference)
                };
                self.store_reference_aux(&mut next, &avg(&uk, &un), &avg(&bk, &bn))?;
                return Ok((next, report));
            }
        }
        Err(Error::PicardFailure {
            iterations: report.iterations,
            increment: report.increment,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::vector::max_abs;
    use std::f64::consts::PI;

    fn u0(p: Vec3) -> Vec3 {
        let z = p[2] * (p[2] - 1.0);
        [
            -(PI * (p[0] - 0.5)).sin() * (PI * (p[1] - 0.5)).cos() * z,
            (PI * (p[0] - 0.5)).cos() * (PI * (p[1] - 0.5)).sin() * z,
            0.0,
        ]
    }

    /// Curl of `ψ e_z + χ e_x` with `ψ = sin πx sin πy (1 + z)` and
    /// `χ = x² sin πy sin πz`: solenoidal, `B·n = 0`, and without mirror
    /// symmetry so helicity and coupling terms are all active.
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

    fn start(d: &DeRham, params: SimParams) -> (Stepper<'_>, MhdState) {
        let st = Stepper::new(d, params).unwrap();
        let s = st
            .initial_state(AnalyticField::Vector(&u0), AnalyticField::Vector(&b0), 0.0, &Sources::none())
            .unwrap();
        (st, s)
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        let bad = [
            SimParams { dt: 0.0, ..Default::default() },
            SimParams { re_inv: -1.0, ..Default::default() },
            SimParams { coupling: f64::NAN, ..Default::default() },
            SimParams { picard_max: 0, ..Default::default() },
            SimParams { krylov_tol: 0.0, ..Default::default() },
        ];
        for p in bad {
            assert!(matches!(p.validate(), Err(Error::InvalidArgument(_))));
        }
        assert!(SimParams::default().validate().is_ok());
    }

    #[test]
    fn zero_data_stays_zero() {
        let d = DeRham::structured(2).unwrap();
        for scheme in [Scheme::Main, Scheme::Reference] {
            let st = Stepper::new(&d, SimParams { scheme, re_inv: 0.1, rm_inv: 0.1, ..Default::default() }).unwrap();
            let s0 = MhdState::zero(&d, scheme);
            let (s1, rep) = st.step(&s0, &Sources::none()).unwrap();
            assert_eq!(rep.iterations, 1);
            assert_eq!(s1.step, 1);
            assert!((s1.t - 1e-3).abs() < 1e-18);
            for v in [&s1.u, &s1.b, &s1.p, &s1.omega, &s1.j, &s1.e, &s1.h] {
                assert_eq!(max_abs(&v.coeffs), 0.0);
            }
        }
    }

    #[test]
    fn gradient_load_is_absorbed_by_pressure() {
        let d = DeRham::structured(3).unwrap();
        let st = Stepper::new(&d, SimParams { dt: 0.5, re_inv: 0.2, ..Default::default() }).unwrap();
        let r = d.reduced();
        let nv = r.grad.ncols();
        let phi: Vec<f64> = (0..nv).map(|i| ((i * 7 % 11) as f64 - 5.0) / 5.0).collect();
        let f = r.mass[1].mul_vec(&r.grad.mul_vec(&phi));
        let (u, p, rep) = st.solve_velocity_pressure(&f, &vec![0.0; nv]).unwrap();
        assert!(rep.converged);
        assert!(max_abs(&u) < 1e-9, "{}", max_abs(&u));
        let dp: Vec<f64> = p.iter().zip(&phi).map(|(a, b)| a - b).collect();
        assert!(max_abs(&dp) < 1e-8);
    }

    #[test]
    fn unit_step_saddle_solve_converges_with_monotone_residual() {
        for n in [2, 4] {
            let d = DeRham::structured(n).unwrap();
            let sys = SaddleSystem::new(&d, 1.0, 0.0).unwrap();
            let u = d.canonical_interpolate(AnalyticField::Vector(&u0), SpaceKind::Curl).unwrap();
            let f = d.reduced().mass[1].mul_vec(&d.dofs(SpaceKind::Curl).restrict(&u.coeffs));
            let g = vec![0.0; d.reduced().grad.ncols()];
            let (_, _, rep) = sys.solve(&f, &g, None, 1e-10, 600).unwrap();
            assert!(rep.converged && rep.iterations <= 600);
            assert!(rep.history.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
        }
    }

    #[test]
    fn helmholtz_projection_meets_constraint_and_is_idempotent() {
        let d = DeRham::structured(3).unwrap();
        let v = d.canonical_interpolate(AnalyticField::Vector(&b0), SpaceKind::Curl).unwrap();
        let r = d.reduced();
        let d1 = d.dofs(SpaceKind::Curl);
        let g: Vec<f64> = (0..r.grad.ncols()).map(|i| 1e-3 * (i as f64).sin()).collect();
        let w = helmholtz_project(&d, &v, Some(&g)).unwrap();
        let wr = d1.restrict(&w.coeffs);
        let cons = r.grad.mul_vec_transposed(&r.mass[1].mul_vec(&wr));
        let err: Vec<f64> = cons.iter().zip(&g).map(|(a, b)| a - b).collect();
        assert!(max_abs(&err) < 1e-12);
        let p1 = helmholtz_project(&d, &v, None).unwrap();
        let p2 = helmholtz_project(&d, &p1, None).unwrap();
        let diff: Vec<f64> = p1.coeffs.iter().zip(&p2.coeffs).map(|(a, b)| a - b).collect();
        assert!(max_abs(&diff) < 1e-10);
    }

    #[test]
    fn gauss_law_is_exact_along_the_trajectory() {
        let d = DeRham::structured(3).unwrap();
        let params = SimParams { dt: 0.01, re_inv: 0.01, rm_inv: 0.01, ..Default::default() };
        let (st, mut s) = start(&d, params);
        // B⁰ as the curl of an edge potential is solenoidal up to rounding
        let a = d.canonical_interpolate(AnalyticField::Vector(&b0), SpaceKind::Curl).unwrap();
        s.b = d.derivative(&a).unwrap();
        let d0 = max_abs(&d.derivative(&s.b).unwrap().coeffs);
        assert!(d0 < 1e-14, "{d0}");
        for _ in 0..3 {
            s = st.step(&s, &Sources::none()).unwrap().0;
            let dn = max_abs(&d.derivative(&s.b).unwrap().coeffs);
            assert!(dn - d0 <= 1e-13, "{dn}");
        }
    }

    #[test]
    fn main_step_satisfies_its_equations() {
        let d = DeRham::structured(3).unwrap();
        let params = SimParams { dt: 0.01, re_inv: 0.05, rm_inv: 0.02, coupling: 0.7, ..Default::default() };
        let (st, s0) = start(&d, params.clone());
        let (s1, rep) = st.step(&s0, &Sources::none()).unwrap();
        assert!(rep.increment <= params.picard_tol);
        let r = d.reduced();
        let (d1, d2) = (d.dofs(SpaceKind::Curl), d.dofs(SpaceKind::Div));
        // Faraday: (Bⁿ⁺¹ − Bⁿ)/Δt + C E = 0
        let db = lin_comb(1.0, &d2.restrict(&s1.b.coeffs), -1.0, &d2.restrict(&s0.b.coeffs));
        let ce = r.curl.mul_vec(&d1.restrict(&s1.e.coeffs));
        let res = lin_comb(1.0 / params.dt, &db, 1.0, &ce);
        assert!(max_abs(&res) < 1e-9 * max_abs(&ce).max(1.0));
        // the velocity is weakly divergence free
        let gu = r.grad.mul_vec_transposed(&r.mass[1].mul_vec(&d1.restrict(&s1.u.coeffs)));
        assert!(max_abs(&gu) < 1e-10);
    }

    #[test]
    fn reference_scheme_keeps_weak_divergence_to_solver_tolerance() {
        let d = DeRham::structured(3).unwrap();
        let params = SimParams { dt: 0.01, re_inv: 0.01, rm_inv: 0.01, scheme: Scheme::Reference, ..Default::default() };
        let (st, s0) = start(&d, params);
        assert_eq!(s0.b.kind, SpaceKind::Curl);
        let w0 = max_abs(&d.discrete_div(&s0.b).unwrap().coeffs);
        assert!(w0 < 1e-10, "{w0}");
        let (s1, _) = st.step(&s0, &Sources::none()).unwrap();
        let w1 = max_abs(&d.discrete_div(&s1.b).unwrap().coeffs);
        assert!(w1 < 1e-7, "{w1}");
    }

    #[test]
    fn mismatched_state_is_rejected() {
        let d = DeRham::structured(2).unwrap();
        let st = Stepper::new(&d, SimParams::default()).unwrap();
        let s = MhdState::zero(&d, Scheme::Reference);
        assert!(st.step(&s, &Sources::none()).is_err());
    }
}
