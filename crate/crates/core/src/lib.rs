//! Preconditioned discrete-loss training for neural PDE surrogates.
//!
//! A PDE is discretized by finite differences into `A·u = b`; a network
//! `u_θ` evaluated on the mesh is trained on `‖P⁻¹(A·u_θ − b)‖²` with
//! `P = L̂Û` an incomplete LU factorization of `A`. The [`conditioning`]
//! module estimates `‖b‖/‖u‖·‖A⁻¹‖` before and after preconditioning.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assembly;
pub mod conditioning;
pub mod neural;
pub mod parallel;
pub mod sparse;
pub mod training;
