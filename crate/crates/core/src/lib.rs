//! Exact computer algebra for finitely supported elements, derivations and
//! unital endomorphisms of infinite tensor products of matrix algebras, and
//! for pattern matrices over `M∞(F)`.

pub mod dense;
pub mod derivations;
pub mod endomorphisms;
pub mod error;
pub mod field;
pub mod minf;
pub mod tensor;

pub use dense::{solve_kernel, DenseMatrix};
pub use error::{Error, Result};
pub use field::{FieldSpec, Scalar};
pub use tensor::{Element, Label, Monomial, SiteShape};
