use serde::{Deserialize, Serialize};

use super::system::{poisson_forcing_value, NodeRole, StencilBuilder};
use super::{AssemblyError, BvpSystem, Problem, UniformMesh};
use crate::sparse::CsrMatrix;

/// Right-hand side of `u'' = f` on `(0, 2π/P)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PoissonForcing {
    /// `f(x) = sin(Px)` with zero boundary values; `u(x) = −sin(Px)/P²`.
    Sine,
    /// `f ≡ 0` with both ends held at `boundary`; `u ≡ boundary`.
    Homogeneous { boundary: f64 },
}

/// Assembles `u'' = f` on `(0, 2π/P)` with the standard 3-point stencil.
pub fn assemble_poisson_1d(
    p: f64,
    count: usize,
    forcing: PoissonForcing,
) -> Result<BvpSystem, AssemblyError> {
    if !(p.is_finite() && p > 0.0) {
        return Err(AssemblyError::InvalidParameter(format!(
            "P must be positive, got {p}"
        )));
    }
    let mesh = UniformMesh::new(&[(0.0, 2.0 * std::f64::consts::PI / p)], &[count])?;
    let h = mesh.spacing(0);
    let xs = mesh.axis_coords(0);
    let edge = match forcing {
        PoissonForcing::Sine => 0.0,
        PoissonForcing::Homogeneous { boundary } => boundary,
    };
    let roles: Vec<NodeRole> = (0..count)
        .map(|i| {
            if i == 0 || i == count - 1 {
                NodeRole::Boundary(edge)
            } else {
                NodeRole::Unknown(i - 1)
            }
        })
        .collect();
    let n = count - 2;
    let inv = 1.0 / (h * h);
    let mut sb = StencilBuilder::new(&roles, n);
    let mut source = vec![0.0; n];
    for (row, &x) in xs[1..count - 1].iter().enumerate() {
        let i = row + 1;
        sb.add(row, i - 1, inv);
        sb.add(row, i, -2.0 * inv);
        sb.add(row, i + 1, inv);
        source[row] = poisson_forcing_value(forcing, p, x);
    }
    let bias: Vec<f64> = sb.bias.iter().zip(&source).map(|(b, f)| b + f).collect();
    let matrix = CsrMatrix::from_triplets(n, n, &sb.triplets)?;
    let reference = (1..count - 1)
        .map(|i| match forcing {
            PoissonForcing::Sine => -(p * xs[i]).sin() / (p * p),
            PoissonForcing::Homogeneous { boundary } => boundary,
        })
        .collect();
    BvpSystem::with_source(
        Problem::Poisson1d { p, forcing },
        matrix,
        bias,
        source,
        mesh,
        roles,
        Some(reference),
    )
}

pub(crate) fn stencil_residual(
    mesh: &UniformMesh,
    p: f64,
    forcing: PoissonForcing,
    grid: &[f64],
) -> Vec<f64> {
    let h = mesh.spacing(0);
    (1..mesh.count(0) - 1)
        .map(|i| {
            let x = mesh.axis(0).coord(i);
            (grid[i - 1] - 2.0 * grid[i] + grid[i + 1]) / (h * h)
                - poisson_forcing_value(forcing, p, x)
        })
        .collect()
}
