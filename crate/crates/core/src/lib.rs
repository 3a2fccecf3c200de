//! Evaluation framework for location-privacy preserving mechanisms.
//!
//! An experiment chains four layers: a [`datasets`] layer producing traces,
//! an obfuscation [`mechanisms`] layer, an optional de-obfuscation
//! [`attacks`] layer, and a [`metrics`] layer scoring the result against
//! the original. The [`harness`] runs the cartesian product of configured
//! layer elements.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attacks;
pub mod datasets;
pub mod geo;
pub mod harness;
pub mod mechanisms;
pub mod metrics;
