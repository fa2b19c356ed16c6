//! Structure-preserving finite element solver for incompressible MHD on
//! tetrahedral meshes of the unit cube.

pub mod assembly;
pub mod diagnostics;
pub mod error;
pub mod feec;
pub mod geom;
pub mod io;
pub mod linalg;
pub mod mesh;
pub mod mms;
pub mod par;
pub mod timestepper;

pub use error::{Error, Result};
pub use feec::{DeRham, FieldVector, SpaceKind};
pub use mesh::Mesh;
