//! Dense `f64` linear algebra with tape-based reverse-mode differentiation
//! and a central-difference gradient checker.

mod gradcheck;
mod param;
mod tape;
mod tensor;

pub use gradcheck::{gradient_check, GradCheckReport};
pub use param::{Gradients, ParamId, ParamStore, Parameter};
pub use tape::{NodeId, Tape};
pub use tensor::{sigmoid, PoolKind, Tensor};
