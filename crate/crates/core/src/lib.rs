//! Zero roots and Bethe roots of the open XXX spin-1/2 chain with generic
//! boundary fields, computed from transfer-matrix eigenvalues of a ground
//! state obtained by exact diagonalisation or DMRG.

pub mod algebra;
pub mod betheroots;
pub mod groundstate;
pub mod linalg;
pub mod model;
pub mod spectral;
pub mod tensor;
pub mod zeroroots;

pub use algebra::ComplexPoint;
pub use model::ModelParams;
