//! Shell-sampled estimates of the Łojasiewicz-type conditions (ii)–(v) and
//! interval certificates for polynomial gradient bounds.

pub mod bnb;
mod estimate;
pub mod interval;

pub use bnb::{
    certified_gradient_lower_bound, certified_gradient_lower_bound_with, certified_sphere_sign, BnbConfig,
    BoundScope, GradientBound, SphereSign,
};
pub use estimate::{
    estimate_condition, estimate_condition_with_floor, fit_exponent, horn_sweep, in_horn, pointwise_ratios,
    Condition, ExponentFit, HornParams, LojaEstimate, SampleRatios, ShellEstimate, DEFAULT_C_FLOOR, DEFAULT_W_BAR,
    W_BAR_SWEEP,
};
pub use interval::Interval;
