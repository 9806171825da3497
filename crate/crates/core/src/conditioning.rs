//! Condition-number estimates `‖b‖/‖u‖·‖A⁻¹‖` for assembled systems,
//! with and without an ILU preconditioner.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assembly::{AssemblyError, BvpSystem};
use crate::sparse::{ilu_factorize, norm2, CsrMatrix, IluFactors, SparseError, DENSE_SIZE_LIMIT};

pub const POWER_TOL: f64 = 1e-8;
pub const POWER_MAX_ITER: usize = 5000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConditionError {
    #[error(transparent)]
    Sparse(#[from] SparseError),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error("{0} has zero norm; the relative condition number is undefined (an absolute variant would be needed)")]
    ZeroNorm(&'static str),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(
        "power iteration did not converge in {iterations} iterations (last estimate {estimate})"
    )]
    NoConvergence { iterations: usize, estimate: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InverseNormMethod {
    /// Smallest singular value from a dense SVD.
    DenseSvd,
    /// Power iteration on `A⁻ᵀA⁻¹` through complete sparse LU solves.
    PowerSolves,
}

impl InverseNormMethod {
    pub fn name(self) -> &'static str {
        match self {
            Self::DenseSvd => "dense_svd",
            Self::PowerSolves => "power_solves",
        }
    }
}

/// Which vector stands in for `b` in the numerator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BiasNorm {
    /// The assembled bias, boundary and initial data included.
    #[default]
    Full,
    /// The PDE source only, with substituted data left out.
    Source,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormEstimate {
    pub value: f64,
    pub iterations: usize,
    /// Relative change of the last power step; zero for direct methods.
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionEstimate {
    pub inverse_norm: f64,
    pub bias_norm: f64,
    pub solution_norm: f64,
    pub cond: f64,
    pub method: &'static str,
    pub iterations: usize,
    pub tolerance: f64,
}

/// Largest singular value of a linear operator given its action and
/// adjoint action, by power iteration on `MᵀM`.
///
/// Starts from the normalized all-ones vector and stops once the Rayleigh
/// quotient changes by less than `tol` relative.
pub fn operator_norm<F, G>(
    n: usize,
    forward: F,
    adjoint: G,
    tol: f64,
    max_iter: usize,
) -> Result<NormEstimate, ConditionError>
where
    F: Fn(&[f64]) -> Result<Vec<f64>, ConditionError>,
    G: Fn(&[f64]) -> Result<Vec<f64>, ConditionError>,
{
    if n == 0 {
        return Ok(NormEstimate {
            value: 0.0,
            iterations: 0,
            tolerance: 0.0,
        });
    }
    let mut v = vec![1.0 / (n as f64).sqrt(); n];
    let mut lambda = 0.0;
    for it in 1..=max_iter {
        let mv = forward(&v)?;
        let next = norm2(&mv).powi(2);
        let mut w = adjoint(&mv)?;
        let wn = norm2(&w);
        if wn == 0.0 {
            return Ok(NormEstimate {
                value: 0.0,
                iterations: it,
                tolerance: 0.0,
            });
        }
        w.iter_mut().for_each(|x| *x /= wn);
        let change = (next - lambda).abs() / next;
        lambda = next;
        v = w;
        if change <= tol {
            return Ok(NormEstimate {
                value: lambda.sqrt(),
                iterations: it,
                tolerance: change,
            });
        }
    }
    Err(ConditionError::NoConvergence {
        iterations: max_iter,
        estimate: lambda.sqrt(),
    })
}

fn to_nalgebra(a: &CsrMatrix) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(a.n_rows(), a.n_cols());
    for i in 0..a.n_rows() {
        let (cols, vals) = a.row(i);
        for (&j, &v) in cols.iter().zip(vals) {
            m[(i, j)] = v;
        }
    }
    m
}

/// `‖A⁻¹‖₂`.
pub fn inverse_norm_estimate(
    a: &CsrMatrix,
    method: InverseNormMethod,
) -> Result<NormEstimate, ConditionError> {
    if !a.is_square() {
        return Err(SparseError::NotSquare {
            rows: a.n_rows(),
            cols: a.n_cols(),
        }
        .into());
    }
    match method {
        InverseNormMethod::DenseSvd => {
            let n = a.n_rows();
            if n > DENSE_SIZE_LIMIT {
                return Err(SparseError::TooLarge {
                    n,
                    max: DENSE_SIZE_LIMIT,
                }
                .into());
            }
            let sv = to_nalgebra(a).singular_values();
            let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
            let smax = sv.iter().copied().fold(0.0, f64::max);
            if !(smin > smax * f64::EPSILON * n as f64) {
                return Err(SparseError::Singular { col: n }.into());
            }
            Ok(NormEstimate {
                value: 1.0 / smin,
                iterations: 0,
                tolerance: 0.0,
            })
        }
        InverseNormMethod::PowerSolves => {
            let lu = ilu_factorize(a, 0.0)?;
            operator_norm(
                a.n_rows(),
                |x| {
                    let mut y = x.to_vec();
                    lu.precondition_in_place(&mut y)?;
                    Ok(y)
                },
                |x| {
                    let mut y = x.to_vec();
                    lu.precondition_transpose_in_place(&mut y)?;
                    Ok(y)
                },
                POWER_TOL,
                POWER_MAX_ITER,
            )
        }
    }
}

/// `‖A⁻¹P‖₂` for `P = L̂Û`, with `A` solved through its complete LU.
pub fn preconditioned_inverse_norm(
    a: &CsrMatrix,
    f: &IluFactors,
) -> Result<NormEstimate, ConditionError> {
    if f.dim() != a.n_rows() {
        return Err(SparseError::DimensionMismatch {
            expected: a.n_rows(),
            got: f.dim(),
        }
        .into());
    }
    let lu = ilu_factorize(a, 0.0)?;
    operator_norm(
        a.n_rows(),
        |x| {
            let mut y = f.apply_preconditioner(x)?;
            lu.precondition_in_place(&mut y)?;
            Ok(y)
        },
        |x| {
            let mut y = x.to_vec();
            lu.precondition_transpose_in_place(&mut y)?;
            Ok(f.apply_preconditioner_transpose(&y)?)
        },
        POWER_TOL,
        POWER_MAX_ITER,
    )
}

fn numerator(system: &BvpSystem, bias: BiasNorm) -> &[f64] {
    match bias {
        BiasNorm::Full => system.bias(),
        BiasNorm::Source => system.source(),
    }
}

/// `‖b‖/‖u‖·‖A⁻¹‖` with `u = A⁻¹b`, the exact solution of the discrete
/// system (so the error-control bound is tight for the system itself).
pub fn condition_number(
    system: &BvpSystem,
    method: InverseNormMethod,
) -> Result<ConditionEstimate, ConditionError> {
    condition_number_with(system, method, BiasNorm::Full)
}

pub fn condition_number_with(
    system: &BvpSystem,
    method: InverseNormMethod,
    bias: BiasNorm,
) -> Result<ConditionEstimate, ConditionError> {
    let b = norm2(numerator(system, bias));
    if system.bias().iter().all(|&x| x == 0.0) {
        return Err(ConditionError::ZeroNorm("bias"));
    }
    let u = norm2(&system.discrete_solution()?);
    if u == 0.0 {
        return Err(ConditionError::ZeroNorm("solution"));
    }
    let inv = inverse_norm_estimate(system.matrix(), method)?;
    Ok(ConditionEstimate {
        inverse_norm: inv.value,
        bias_norm: b,
        solution_norm: u,
        cond: b / u * inv.value,
        method: method.name(),
        iterations: inv.iterations,
        tolerance: inv.tolerance,
    })
}

/// `‖P⁻¹b‖/‖u‖·‖A⁻¹P‖`.
pub fn preconditioned_condition_number(
    system: &BvpSystem,
    f: &IluFactors,
) -> Result<ConditionEstimate, ConditionError> {
    let mut pb = system.bias().to_vec();
    f.precondition_in_place(&mut pb)?;
    let b = norm2(&pb);
    if b == 0.0 {
        return Err(ConditionError::ZeroNorm("bias"));
    }
    let u = norm2(&system.discrete_solution()?);
    if u == 0.0 {
        return Err(ConditionError::ZeroNorm("solution"));
    }
    let inv = preconditioned_inverse_norm(system.matrix(), f)?;
    Ok(ConditionEstimate {
        inverse_norm: inv.value,
        bias_norm: b,
        solution_norm: u,
        cond: b / u * inv.value,
        method: "power_solves",
        iterations: inv.iterations,
        tolerance: inv.tolerance,
    })
}

/// `4/P²`, the norm of the inverse Poisson operator on `(0, 2π/P)`.
pub fn poisson1d_theory_norm(p: f64) -> Result<f64, ConditionError> {
    if !(p.is_finite() && p > 0.0) {
        return Err(ConditionError::InvalidParameter(format!(
            "P must be positive, got {p}"
        )));
    }
    Ok(4.0 / (p * p))
}
