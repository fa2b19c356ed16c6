//! Quadrature, sparse storage and finite element assembly.

mod basis;
mod forms;
mod quadrature;
mod sparse;

pub use basis::CellBasis;
pub use forms::{
    cross_form, load_vector, mass_matrix, mixed_mass_matrix, AnalyticField, FieldRef, TestOp,
};
pub use quadrature::{QuadratureRule, SegmentRule, TetRule, TriangleRule};
pub use sparse::SparseMatrix;

/// Quadrature degrees used for each kind of term.
#[derive(Debug, Clone)]
pub struct QuadratureSet {
    /// Mass and mixed-mass matrices.
    pub mass: TetRule,
    /// Cross-product (trilinear) terms.
    pub trilinear: TetRule,
    /// Analytic right-hand sides and error norms.
    pub source: TetRule,
    /// Edge moments in canonical interpolation.
    pub edge: SegmentRule,
    /// Face fluxes in canonical interpolation.
    pub face: TriangleRule,
    /// Cell averages in canonical interpolation.
    pub cell: TetRule,
}

impl Default for QuadratureSet {
    fn default() -> Self {
        QuadratureSet {
            mass: TetRule::tet(2),
            trilinear: TetRule::tet(4),
            source: TetRule::tet(5),
            edge: SegmentRule::gauss_legendre(8),
            face: TriangleRule::collapsed_gauss(10),
            cell: TetRule::tet(8),
        }
    }
}
