//! Dense complex tensor algebra.

pub mod decomp;
pub mod density;
pub mod linalg;
pub mod tensor;

pub use decomp::{isometrize, isometry_defect, svd_split, SvdSplit};
pub use density::{partial_trace, DensityMatrix};
pub use tensor::{contract, ComplexTensor, C64, ONE, ZERO};
