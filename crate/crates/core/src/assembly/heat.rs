use std::f64::consts::PI;

use super::system::{NodeRole, StencilBuilder};
use super::{AssemblyError, BvpSystem, Problem, UniformMesh};
use crate::sparse::CsrMatrix;

/// `sin(πx)·exp(−κπ²t)`, the exact solution for initial data `sin(πx)`.
pub fn heat_exact(kappa: f64, x: f64, t: f64) -> f64 {
    (PI * x).sin() * (-kappa * PI * PI * t).exp()
}

/// One backward-Euler step of `u_t = κu_xx` on `(0, 1)` with zero Dirichlet
/// data: matrix `I − dt·κ·D`. The bias is zero; callers add the previous
/// state with [`BvpSystem::with_bias`].
pub fn assemble_heat_step(kappa: f64, nx: usize, dt: f64) -> Result<BvpSystem, AssemblyError> {
    if !(kappa.is_finite() && kappa > 0.0) {
        return Err(AssemblyError::InvalidParameter(format!(
            "kappa must be positive, got {kappa}"
        )));
    }
    if !(dt.is_finite() && dt >= 0.0) {
        return Err(AssemblyError::InvalidParameter(format!(
            "dt must be non-negative, got {dt}"
        )));
    }
    let mesh = UniformMesh::new(&[(0.0, 1.0)], &[nx])?;
    let h = mesh.spacing(0);
    let roles: Vec<NodeRole> = (0..nx)
        .map(|i| {
            if i == 0 || i == nx - 1 {
                NodeRole::Boundary(0.0)
            } else {
                NodeRole::Unknown(i - 1)
            }
        })
        .collect();
    let n = nx - 2;
    let r = dt * kappa / (h * h);
    let mut sb = StencilBuilder::new(&roles, n);
    for i in 1..nx - 1 {
        if r != 0.0 {
            sb.add(i - 1, i - 1, -r);
            sb.add(i - 1, i + 1, -r);
        }
        sb.add(i - 1, i, 1.0 + 2.0 * r);
    }
    let matrix = CsrMatrix::from_triplets(n, n, &sb.triplets)?;
    BvpSystem::from_parts(
        Problem::HeatStep { kappa, dt },
        matrix,
        vec![0.0; n],
        mesh,
        roles,
        None,
    )
}
