//! Small self-contained linear-algebra kernels used by assembly and the
//! eigensolver: CSR symmetric sparse matrices and an envelope (variable-band)
//! LDLᵀ factorization with reverse Cuthill–McKee ordering.

mod envelope;
mod sparse;

pub use envelope::{EnvelopeFactor, FactorKind};
pub use sparse::{CsrMatrix, Triplets};
