use crate::assembly::SparseMatrix;
use crate::error::{invalid, Result};

/// Approximate inverse applied as `z = P r`.
pub trait Preconditioner: Send + Sync {
    fn apply(&self, r: &[f64], z: &mut [f64]);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PreconditionerKind {
    Identity,
    Jacobi,
    Ssor,
    BlockDiag,
}

pub struct Identity;

impl Preconditioner for Identity {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        z.copy_from_slice(r);
    }
}

pub struct Jacobi {
    inv_diag: Vec<f64>,
}

impl Jacobi {
    pub fn new(a: &SparseMatrix) -> Result<Self> {
        Self::from_diagonal(&a.diagonal())
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        let inv_diag = diag
            .iter()
            .enumerate()
            .map(|(i, &d)| {
                if d == 0.0 || !d.is_finite() {
                    Err(invalid(format!("zero or non-finite diagonal at row {i}")))
                } else {
                    Ok(1.0 / d)
                }
            })
            .collect::<Result<_>>()?;
        Ok(Jacobi { inv_diag })
    }
}

impl Preconditioner for Jacobi {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        for ((zi, ri), d) in z.iter_mut().zip(r).zip(&self.inv_diag) {
            *zi = ri * d;
        }
    }
}

/// Symmetric SOR: `sweeps` forward/backward Gauss-Seidel passes of the
/// stationary iteration on `A z = r` from `z = 0`, scaled by `scale`. The
/// resulting operator is symmetric positive definite for SPD `A` and
/// `0 < omega < 2`.
pub struct Ssor {
    a: SparseMatrix,
    diag: Vec<f64>,
    omega: f64,
    sweeps: usize,
    scale: f64,
}

impl Ssor {
    pub fn new(a: SparseMatrix, omega: f64, sweeps: usize) -> Result<Self> {
        if !(omega > 0.0 && omega < 2.0) {
            return Err(invalid(format!("SSOR relaxation {omega} outside (0, 2)")));
        }
        let diag = a.diagonal();
        if let Some(i) = diag.iter().position(|&d| d == 0.0 || !d.is_finite()) {
            return Err(invalid(format!("zero or non-finite diagonal at row {i}")));
        }
        Ok(Ssor {
            a,
            diag,
            omega,
            sweeps: sweeps.max(1),
            scale: 1.0,
        })
    }

    /// Multiplies the preconditioner output by `scale`.
    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    fn sweep(&self, r: &[f64], z: &mut [f64], forward: bool) {
        let n = z.len();
        let w = self.omega;
        let mut step = |i: usize| {
            let mut s = r[i];
            let mut d = 0.0;
            for (j, v) in self.a.row(i) {
                if j == i {
                    d = v;
                } else {
                    s -= v * z[j];
                }
            }
            z[i] = (1.0 - w) * z[i] + w * s / d;
        };
        if forward {
            (0..n).for_each(&mut step);
        } else {
            (0..n).rev().for_each(&mut step);
        }
    }
}

impl Preconditioner for Ssor {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        debug_assert_eq!(self.diag.len(), r.len());
        z.iter_mut().for_each(|v| *v = 0.0);
        for _ in 0..self.sweeps {
            self.sweep(r, z, true);
            self.sweep(r, z, false);
        }
        if self.scale != 1.0 {
            z.iter_mut().for_each(|v| *v *= self.scale);
        }
    }
}

/// Block-diagonal preconditioner for a 2x2 block system: the first `split`
/// unknowns use `first`, the rest use `second`.
pub struct BlockDiag {
    split: usize,
    first: Box<dyn Preconditioner>,
    second: Box<dyn Preconditioner>,
}

impl BlockDiag {
    pub fn new(
        split: usize,
        first: Box<dyn Preconditioner>,
        second: Box<dyn Preconditioner>,
    ) -> Self {
        BlockDiag {
            split,
            first,
            second,
        }
    }
}

impl Preconditioner for BlockDiag {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        let (r1, r2) = r.split_at(self.split);
        let (z1, z2) = z.split_at_mut(self.split);
        self.first.apply(r1, z1);
        self.second.apply(r2, z2);
    }
}

/// Operands for [`make_preconditioner`].
pub enum PreconditionerInput<'a> {
    Matrix(&'a SparseMatrix),
    /// Saddle point blocks: the (1,1) block and an SPD approximation of the
    /// Schur complement.
    Blocks {
        velocity: &'a SparseMatrix,
        schur: &'a SparseMatrix,
        schur_scale: f64,
    },
}

/// SSOR relaxation used by the factory.
pub const SSOR_OMEGA: f64 = 1.0;
/// SSOR sweeps used for the Schur block of the saddle preconditioner.
pub const SCHUR_SWEEPS: usize = 2;

pub fn make_preconditioner(
    kind: PreconditionerKind,
    input: PreconditionerInput<'_>,
) -> Result<Box<dyn Preconditioner>> {
    match (kind, input) {
        (PreconditionerKind::Identity, _) => Ok(Box::new(Identity)),
        (PreconditionerKind::Jacobi, PreconditionerInput::Matrix(a)) => {
            Ok(Box::new(Jacobi::new(a)?))
        }
        (PreconditionerKind::Ssor, PreconditionerInput::Matrix(a)) => {
            Ok(Box::new(Ssor::new(a.clone(), SSOR_OMEGA, 1)?))
        }
        (
            PreconditionerKind::BlockDiag,
            PreconditionerInput::Blocks {
                velocity,
                schur,
                schur_scale,
            },
        ) => {
            // lumped velocity block: diagonal approximation
            let first = Jacobi::new(velocity)?;
            let second = Ssor::new(schur.clone(), SSOR_OMEGA, SCHUR_SWEEPS)?.with_scale(schur_scale);
            Ok(Box::new(BlockDiag::new(
                velocity.nrows(),
                Box::new(first),
                Box::new(second),
            )))
        }
        (kind, _) => Err(invalid(format!(
            "{kind:?} preconditioner does not accept these operands"
        ))),
    }
}
