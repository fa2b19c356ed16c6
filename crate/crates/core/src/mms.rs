//! Manufactured solution, its source terms, a finite-difference check of
//! those sources, and the spatial convergence study.
//!
//! With `h(μ) = (μ² − μ)²` every field is a sum of separable terms
//! `c(t) h⁽ᵃ⁾(x) h⁽ᵇ⁾(y) h⁽ᶜ⁾(z)`, so first derivatives are written by
//! raising one derivative index.

use crate::assembly::{AnalyticField, CellBasis};
use crate::error::{Error, Result};
use crate::feec::{DeRham, FieldVector, SpaceKind};
use crate::geom::{add, cross, dot, scale, sub, Vec3};
use crate::timestepper::{MhdState, Scheme, SimParams, Sources, Stepper};

/// `h⁽ᵏ⁾(μ)` for `h(μ) = (μ² − μ)²`.
pub fn hk(k: usize, m: f64) -> f64 {
    match k {
        0 => (m * m - m).powi(2),
        1 => 2.0 * (m * m - m) * (2.0 * m - 1.0),
        2 => 12.0 * m * m - 12.0 * m + 2.0,
        3 => 24.0 * m - 12.0,
        4 => 24.0,
        _ => 0.0,
    }
}

/// `h⁽ᵃ⁾(x) h⁽ᵇ⁾(y) h⁽ᶜ⁾(z)`.
fn sep(d: [usize; 3], x: Vec3) -> f64 {
    hk(d[0], x[0]) * hk(d[1], x[1]) * hk(d[2], x[2])
}

fn raise(mut d: [usize; 3], axis: usize) -> [usize; 3] {
    d[axis] += 1;
    d
}

/// One vector component as a sum of `coef · sep(d)`.
type Component = Vec<(f64, [usize; 3])>;

fn eval_component(c: &Component, x: Vec3) -> f64 {
    c.iter().map(|(k, d)| k * sep(*d, x)).sum()
}

fn partial(c: &Component, axis: usize) -> Component {
    c.iter().map(|(k, d)| (*k, raise(*d, axis))).collect()
}

/// The manufactured velocity `u = −(g₁ h'hh, g₂ hh'h, g₃ hhh')` with
/// `gᵢ(t) = aᵢ + bᵢ t`, magnetic field `B = ∇×u`, pressure `p = hhh`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactSolution {
    pub g_const: [f64; 3],
    pub g_slope: [f64; 3],
    pub re_inv: f64,
    pub rm_inv: f64,
    pub coupling: f64,
}

/// Point values of the exact fields.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactValues {
    pub u: Vec3,
    pub b: Vec3,
    pub omega: Vec3,
    /// Total pressure `p + ½|u|²`.
    pub p: f64,
}

impl ExactSolution {
    pub fn new(re_inv: f64, rm_inv: f64, coupling: f64) -> Self {
        ExactSolution {
            g_const: [4.0, 1.0, 1.0],
            g_slope: [-2.0, 1.0, -1.0],
            re_inv,
            rm_inv,
            coupling,
        }
    }

    fn g(&self, t: f64) -> [f64; 3] {
        std::array::from_fn(|i| self.g_const[i] + self.g_slope[i] * t)
    }

    /// Components of `u` with coefficients `g` (pass the slopes for `∂ₜu`).
    fn u_terms(g: [f64; 3]) -> [Component; 3] {
        [
            vec![(-g[0], [1, 0, 0])],
            vec![(-g[1], [0, 1, 0])],
            vec![(-g[2], [0, 0, 1])],
        ]
    }

    /// Components of `∇×u`.
    fn omega_terms(g: [f64; 3]) -> [Component; 3] {
        [
            vec![(g[1] - g[2], [0, 1, 1])],
            vec![(g[2] - g[0], [1, 0, 1])],
            vec![(g[0] - g[1], [1, 1, 0])],
        ]
    }

    /// Components of `∇×∇×u`.
    fn j_terms(g: [f64; 3]) -> [Component; 3] {
        let (a, b, c) = (g[1] - g[2], g[2] - g[0], g[0] - g[1]);
        [
            vec![(c, [1, 2, 0]), (-b, [1, 0, 2])],
            vec![(a, [0, 1, 2]), (-c, [2, 1, 0])],
            vec![(b, [2, 0, 1]), (-a, [0, 2, 1])],
        ]
    }

    /// Components of `∇×∇×∇×u = −Δω`.
    fn curl_j_terms(g: [f64; 3]) -> [Component; 3] {
        let w = [g[1] - g[2], g[2] - g[0], g[0] - g[1]];
        let base = [[0, 1, 1], [1, 0, 1], [1, 1, 0]];
        std::array::from_fn(|i| {
            (0..3)
                .map(|ax| (-w[i], raise(raise(base[i], ax), ax)))
                .collect()
        })
    }

    fn eval(terms: &[Component; 3], x: Vec3) -> Vec3 {
        std::array::from_fn(|i| eval_component(&terms[i], x))
    }

    /// Jacobian `J[i][k] = ∂ₖ vᵢ`.
    fn jacobian(terms: &[Component; 3], x: Vec3) -> [Vec3; 3] {
        std::array::from_fn(|i| std::array::from_fn(|k| eval_component(&partial(&terms[i], k), x)))
    }

    pub fn velocity(&self, x: Vec3, t: f64) -> Vec3 {
        Self::eval(&Self::u_terms(self.g(t)), x)
    }

    pub fn magnetic(&self, x: Vec3, t: f64) -> Vec3 {
        Self::eval(&Self::omega_terms(self.g(t)), x)
    }

    /// `∇×B`.
    pub fn current(&self, x: Vec3, t: f64) -> Vec3 {
        Self::eval(&Self::j_terms(self.g(t)), x)
    }

    pub fn kinematic_pressure(&self, x: Vec3) -> f64 {
        sep([0, 0, 0], x)
    }

    pub fn total_pressure(&self, x: Vec3, t: f64) -> f64 {
        let u = self.velocity(x, t);
        self.kinematic_pressure(x) + 0.5 * dot(u, u)
    }

    /// Gradient of the total pressure.
    pub fn total_pressure_gradient(&self, x: Vec3, t: f64) -> Vec3 {
        let ut = Self::u_terms(self.g(t));
        let u = Self::eval(&ut, x);
        let ju = Self::jacobian(&ut, x);
        std::array::from_fn(|k| {
            let mut grad_p = [0usize; 3];
            grad_p[k] = 1;
            sep(grad_p, x) + (0..3).map(|i| ju[i][k] * u[i]).sum::<f64>()
        })
    }

    pub fn values(&self, x: Vec3, t: f64) -> ExactValues {
        let b = self.magnetic(x, t);
        ExactValues {
            u: self.velocity(x, t),
            b,
            omega: b,
            p: self.total_pressure(x, t),
        }
    }

    /// Momentum source
    /// `f = ∂ₜu − u×ω + Re⁻¹∇×∇×u − c(∇×B)×B + ∇P`.
    pub fn momentum_source(&self, x: Vec3, t: f64) -> Vec3 {
        let g = self.g(t);
        let u = self.velocity(x, t);
        let w = self.magnetic(x, t);
        let j = self.current(x, t);
        let dudt = Self::eval(&Self::u_terms(self.g_slope), x);
        let mut f = sub(dudt, cross(u, w));
        f = add(f, scale(self.re_inv, j));
        f = sub(f, scale(self.coupling, cross(j, w)));
        let _ = g;
        add(f, self.total_pressure_gradient(x, t))
    }

    /// Induction source `G = ∂ₜB + ∇×(Rm⁻¹∇×B − u×B)`.
    pub fn induction_source(&self, x: Vec3, t: f64) -> Vec3 {
        let g = self.g(t);
        let ut = Self::u_terms(g);
        let bt = Self::omega_terms(g);
        let (u, b) = (Self::eval(&ut, x), Self::eval(&bt, x));
        let (ju, jb) = (Self::jacobian(&ut, x), Self::jacobian(&bt, x));
        let div_u: f64 = (0..3).map(|i| ju[i][i]).sum();
        // ∇×(u×B) = (B·∇)u − (u·∇)B − B(∇·u), using ∇·B = 0
        let transport: Vec3 = std::array::from_fn(|i| {
            (0..3).map(|k| b[k] * ju[i][k] - u[k] * jb[i][k]).sum::<f64>() - b[i] * div_u
        });
        let dbdt = Self::eval(&Self::omega_terms(self.g_slope), x);
        let curl_j = Self::eval(&Self::curl_j_terms(g), x);
        sub(add(dbdt, scale(self.rm_inv, curl_j)), transport)
    }

    /// `(f, G)` at one point.
    pub fn source_terms(&self, x: Vec3, t: f64) -> (Vec3, Vec3) {
        (self.momentum_source(x, t), self.induction_source(x, t))
    }
}

/// Sixth-order central difference of `f` at `x` with step `d`.
pub fn central_diff(f: impl Fn(f64) -> f64, x: f64, d: f64) -> f64 {
    const W: [f64; 3] = [3.0 / 4.0, -3.0 / 20.0, 1.0 / 60.0];
    W.iter()
        .enumerate()
        .map(|(k, w)| {
            let s = (k + 1) as f64 * d;
            w * (f(x + s) - f(x - s))
        })
        .sum::<f64>()
        / d
}

fn shifted(x: Vec3, axis: usize, s: f64) -> Vec3 {
    let mut y = x;
    y[axis] += s;
    y
}

/// Curl of a vector field by central differences.
fn fd_curl(f: &dyn Fn(Vec3) -> Vec3, x: Vec3, d: f64) -> Vec3 {
    let df = |comp: usize, axis: usize| central_diff(|s| f(shifted(x, axis, s))[comp], 0.0, d);
    [df(2, 1) - df(1, 2), df(0, 2) - df(2, 0), df(1, 0) - df(0, 1)]
}

fn fd_grad(f: &dyn Fn(Vec3) -> f64, x: Vec3, d: f64) -> Vec3 {
    std::array::from_fn(|axis| central_diff(|s| f(shifted(x, axis, s)), 0.0, d))
}

/// Outcome of the finite-difference check of the source terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceValidation {
    pub samples: usize,
    pub max_momentum_residual: f64,
    pub max_induction_residual: f64,
    pub threshold: f64,
}

impl SourceValidation {
    pub fn max_residual(&self) -> f64 {
        self.max_momentum_residual.max(self.max_induction_residual)
    }

    pub fn passed(&self) -> bool {
        self.max_residual() <= self.threshold
    }
}

pub const SOURCE_THRESHOLD: f64 = 1e-6;
pub const FD_SPACE_STEP: f64 = 1e-3;
pub const FD_TIME_STEP: f64 = 1e-4;
const SOURCE_SAMPLES: usize = 200;

/// Deterministic sample points in `[0.05, 0.95]³ × [0, 1]` from a fixed
/// low-discrepancy sequence.
fn sample_points(count: usize) -> Vec<(Vec3, f64)> {
    const A: [f64; 4] = [0.8566748838545029, 0.7338918566271260, 0.6287067210378086, 0.5385972572236101];
    (1..=count)
        .map(|k| {
            let v: [f64; 4] = std::array::from_fn(|i| (0.5 + A[i] * k as f64).fract());
            ([0.05 + 0.9 * v[0], 0.05 + 0.9 * v[1], 0.05 + 0.9 * v[2]], v[3])
        })
        .collect()
}

/// Residuals of the MHD equations for `exact` with the given sources, every
/// derivative replaced by finite differences with steps `(dx, dt)`.
pub fn validate_sources_with(
    exact: &ExactSolution,
    sources: &dyn Fn(Vec3, f64) -> (Vec3, Vec3),
    dx: f64,
    dt: f64,
) -> SourceValidation {
    let mut out = SourceValidation {
        samples: SOURCE_SAMPLES,
        max_momentum_residual: 0.0,
        max_induction_residual: 0.0,
        threshold: SOURCE_THRESHOLD,
    };
    for (x, t) in sample_points(SOURCE_SAMPLES) {
        let u = |y: Vec3| exact.velocity(y, t);
        let b = |y: Vec3| exact.magnetic(y, t);
        let p = |y: Vec3| exact.total_pressure(y, t);
        let uv = u(x);
        let bv = b(x);
        let du_dt: Vec3 = std::array::from_fn(|i| central_diff(|s| exact.velocity(x, t + s)[i], 0.0, dt));
        let db_dt: Vec3 = std::array::from_fn(|i| central_diff(|s| exact.magnetic(x, t + s)[i], 0.0, dt));
        let omega = fd_curl(&u, x, dx);
        let curl_curl_u = fd_curl(&|y| fd_curl(&u, y, dx), x, dx);
        let curl_b = fd_curl(&b, x, dx);
        let grad_p = fd_grad(&p, x, dx);
        let e_field = |y: Vec3| {
            let by = b(y);
            sub(scale(exact.rm_inv, fd_curl(&b, y, dx)), cross(u(y), by))
        };
        let curl_e = fd_curl(&e_field, x, dx);
        let (f, g) = sources(x, t);

        let mut mom = sub(du_dt, cross(uv, omega));
        mom = add(mom, scale(exact.re_inv, curl_curl_u));
        mom = sub(mom, scale(exact.coupling, cross(curl_b, bv)));
        mom = sub(add(mom, grad_p), f);
        let ind = sub(add(db_dt, curl_e), g);
        let norm = |v: Vec3| dot(v, v).sqrt();
        out.max_momentum_residual = out.max_momentum_residual.max(norm(mom));
        out.max_induction_residual = out.max_induction_residual.max(norm(ind));
    }
    out
}

/// Checks the hand-derived sources of `exact` against finite differences.
pub fn validate_sources(exact: &ExactSolution) -> SourceValidation {
    validate_sources_with(exact, &|x, t| exact.source_terms(x, t), FD_SPACE_STEP, FD_TIME_STEP)
}

/// Parameters of a convergence study.
#[derive(Debug, Clone)]
pub struct ConvergenceParams {
    pub sim: SimParams,
    pub t_end: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorRow {
    pub h: f64,
    pub err_b: f64,
    pub order_b: Option<f64>,
    pub err_u: f64,
    pub order_u: Option<f64>,
    pub err_p: f64,
    pub order_p: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ErrorTable {
    pub rows: Vec<ErrorRow>,
}

fn order(prev: Option<&ErrorRow>, h: f64, e: f64, pick: fn(&ErrorRow) -> f64) -> Option<f64> {
    prev.map(|r| (pick(r) / e).ln() / (r.h / h).ln())
}

impl ErrorTable {
    /// Appends a row, computing orders against the previous one.
    pub fn push(&mut self, h: f64, err_b: f64, err_u: f64, err_p: f64) {
        let prev = self.rows.last();
        let row = ErrorRow {
            h,
            err_b,
            order_b: order(prev, h, err_b, |r| r.err_b),
            err_u,
            order_u: order(prev, h, err_u, |r| r.err_u),
            err_p,
            order_p: order(prev, h, err_p, |r| r.err_p),
        };
        self.rows.push(row);
    }
}

/// `‖v − v_h‖₀` for an edge or face field.
pub fn l2_error_vector(complex: &DeRham, field: &FieldVector, exact: &(dyn Fn(Vec3) -> Vec3 + Sync)) -> f64 {
    let mesh = complex.mesh();
    let rule = &complex.quadrature().source;
    let per_cell = crate::par::map_indexed(mesh.entity_count(3), |t| {
        let basis = CellBasis::new(mesh.geometry(t));
        let jac = 6.0 * basis.volume();
        rule.iter()
            .map(|(p, w)| {
                let vh = match field.kind {
                    SpaceKind::Curl => {
                        basis.eval_edge_field(&mesh.tet_edges()[t].map(|e| field.coeffs[e]), p)
                    }
                    _ => basis.eval_face_field(&mesh.tet_faces()[t].map(|f| field.coeffs[f]), p),
                };
                let d = sub(exact(basis.geometry.point(p)), vh);
                w * jac * dot(d, d)
            })
            .sum::<f64>()
    });
    per_cell.iter().sum::<f64>().sqrt()
}

/// `‖q − q_h‖₁` (full H¹ norm) for a vertex field.
pub fn h1_error_scalar(
    complex: &DeRham,
    field: &FieldVector,
    exact: &(dyn Fn(Vec3) -> f64 + Sync),
    exact_grad: &(dyn Fn(Vec3) -> Vec3 + Sync),
) -> f64 {
    let mesh = complex.mesh();
    let rule = &complex.quadrature().source;
    let per_cell = crate::par::map_indexed(mesh.entity_count(3), |t| {
        let basis = CellBasis::new(mesh.geometry(t));
        let jac = 6.0 * basis.volume();
        let lc = mesh.tets()[t].map(|v| field.coeffs[v]);
        let grad_h = basis.eval_vertex_grad(&lc);
        rule.iter()
            .map(|(p, w)| {
                let x = basis.geometry.point(p);
                let qh: f64 = lc.iter().zip(p).map(|(c, l)| c * l).sum();
                let dg = sub(exact_grad(x), grad_h);
                w * jac * ((exact(x) - qh).powi(2) + dot(dg, dg))
            })
            .sum::<f64>()
    });
    per_cell.iter().sum::<f64>().sqrt()
}

/// Runs the scheme from the exact initial data to `t_end` and returns the
/// final state.
pub fn run_manufactured(complex: &DeRham, exact: &ExactSolution, params: &ConvergenceParams) -> Result<MhdState> {
    let sim = SimParams {
        re_inv: exact.re_inv,
        rm_inv: exact.rm_inv,
        coupling: exact.coupling,
        scheme: Scheme::Main,
        ..params.sim.clone()
    };
    let stepper = Stepper::new(complex, sim.clone())?;
    let f = |x: Vec3, t: f64| exact.momentum_source(x, t);
    let g = |x: Vec3, t: f64| exact.induction_source(x, t);
    let w = |x: Vec3, t: f64| exact.velocity(x, t);
    let src = Sources {
        momentum: Some(&f),
        induction: Some(&g),
        velocity_data: Some(&w),
    };
    let u0 = |x: Vec3| exact.velocity(x, 0.0);
    let b0 = |x: Vec3| exact.magnetic(x, 0.0);
    let mut state = stepper.initial_state(AnalyticField::Vector(&u0), AnalyticField::Vector(&b0), 0.0, &src)?;
    let steps = (params.t_end / sim.dt).round() as usize;
    for _ in 0..steps {
        state = stepper.step(&state, &src)?.0;
    }
    Ok(state)
}

/// Errors of one manufactured run: `(‖B−B_h‖₀, ‖u−u_h‖₀, ‖P−P_h‖₁)` with
/// the pressure compared at the last midpoint.
pub fn manufactured_errors(complex: &DeRham, exact: &ExactSolution, state: &MhdState, dt: f64) -> (f64, f64, f64) {
    let t = state.t;
    let tp = t - 0.5 * dt;
    let eb = l2_error_vector(complex, &state.b, &|x| exact.magnetic(x, t));
    let eu = l2_error_vector(complex, &state.u, &|x| exact.velocity(x, t));
    let ep = h1_error_scalar(
        complex,
        &state.p,
        &|x| exact.total_pressure(x, tp),
        &|x| exact.total_pressure_gradient(x, tp),
    );
    (eb, eu, ep)
}

/// Source validation followed by one manufactured run per mesh.
pub fn run_convergence(exact: &ExactSolution, params: &ConvergenceParams, meshes: &[usize]) -> Result<ErrorTable> {
    let gate = validate_sources(exact);
    if !gate.passed() {
        return Err(Error::OracleGate {
            max_residual: gate.max_residual(),
            threshold: gate.threshold,
        });
    }
    let mut table = ErrorTable::default();
    for &n in meshes {
        let complex = DeRham::structured(n)?;
        let state = run_manufactured(&complex, exact, params)?;
        let (eb, eu, ep) = manufactured_errors(&complex, exact, &state, params.sim.dt);
        table.push(1.0 / n as f64, eb, eu, ep);
    }
    Ok(table)
}
