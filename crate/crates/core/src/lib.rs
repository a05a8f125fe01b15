//! Jet-based local-minimum certification.
//!
//! Given a smooth function `f`, a point `x̄` and a reference set `Σ`
//! containing the critical points of `f` near `x̄`, the crate computes Taylor
//! jets, estimates or certifies Łojasiewicz-type inequalities relative to
//! `Σ`, and decides whether `x̄` is a local minimum, reporting the verdict as
//! certified, empirical or undecided.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod decide;
pub mod error;
pub mod expr;
pub mod jets;
pub mod loja;
pub mod sampling;
pub mod sigma;

pub use error::{Error, ParseError, Result};
pub use expr::{Expression, Point};
pub use jets::{taylor_jet, Jet, MultiIndex, SparsePolynomial};
pub use sampling::ShellSampler;
pub use sigma::SigmaSet;
pub use decide::{decide_local_min, DecideConfig, Status, Verdict};
