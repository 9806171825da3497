//! Space-time Burgers' equation `u_t + u·u_x − ν·u_xx = sin(πx)` on
//! `[−1, 1] × [0, 1]`, `u(x, 0) = −sin(πx)`, zero Dirichlet data in `x`.
//!
//! Backward difference in `t`, central differences in `x`. Axis 0 is `x`,
//! axis 1 is `t`; the initial row and both `x` ends are substituted.

use std::f64::consts::PI;

use super::system::{NodeRole, NonlinearKind, NonlinearSystem};
use super::{AssemblyError, UniformMesh};
use crate::sparse::CsrMatrix;

pub fn burgers_initial(x: f64) -> f64 {
    -(PI * x).sin()
}

pub fn assemble_burgers_1d(
    nu: f64,
    nx: usize,
    nt: usize,
) -> Result<NonlinearSystem, AssemblyError> {
    if !(nu.is_finite() && nu > 0.0) {
        return Err(AssemblyError::InvalidParameter(format!(
            "nu must be positive, got {nu}"
        )));
    }
    let mesh = UniformMesh::new(&[(-1.0, 1.0), (0.0, 1.0)], &[nx, nt])?;
    let mut next = 0;
    let roles = (0..mesh.n_nodes())
        .map(|id| {
            let (i, j) = (id % nx, id / nx);
            if i == 0 || i == nx - 1 {
                NodeRole::Boundary(0.0)
            } else if j == 0 {
                NodeRole::Boundary(burgers_initial(mesh.axis(0).coord(i)))
            } else {
                next += 1;
                NodeRole::Unknown(next - 1)
            }
        })
        .collect();
    Ok(NonlinearSystem::new(
        NonlinearKind::Burgers { nu },
        mesh,
        roles,
    ))
}

struct Stencil {
    h: f64,
    k: f64,
    nx: usize,
}

impl Stencil {
    fn of(mesh: &UniformMesh) -> Self {
        Self {
            h: mesh.spacing(0),
            k: mesh.spacing(1),
            nx: mesh.count(0),
        }
    }
}

pub(crate) fn residual(sys: &NonlinearSystem, nu: f64, u: &[f64]) -> Vec<f64> {
    let s = Stencil::of(sys.mesh());
    let g = |node: usize| sys.grid_value(u, node);
    sys.unknown_nodes()
        .iter()
        .map(|&id| {
            let x = sys.mesh().axis(0).coord(id % s.nx);
            let (c, e, w, p) = (g(id), g(id + 1), g(id - 1), g(id - s.nx));
            (c - p) / s.k + c * (e - w) / (2.0 * s.h)
                - nu * (e - 2.0 * c + w) / (s.h * s.h)
                - (PI * x).sin()
        })
        .collect()
}

pub(crate) fn jacobian(
    sys: &NonlinearSystem,
    nu: f64,
    u: &[f64],
) -> Result<CsrMatrix, AssemblyError> {
    let s = Stencil::of(sys.mesh());
    let g = |node: usize| sys.grid_value(u, node);
    let roles = sys.roles();
    let mut trip = Vec::with_capacity(4 * sys.n());
    for (row, &id) in sys.unknown_nodes().iter().enumerate() {
        let (c, e, w) = (g(id), g(id + 1), g(id - 1));
        let diffusion = nu / (s.h * s.h);
        let entries = [
            (id - s.nx, -1.0 / s.k),
            (id - 1, -c / (2.0 * s.h) - diffusion),
            (id, 1.0 / s.k + (e - w) / (2.0 * s.h) + 2.0 * diffusion),
            (id + 1, c / (2.0 * s.h) - diffusion),
        ];
        for (node, v) in entries {
            if let NodeRole::Unknown(col) = roles[node] {
                trip.push((row, col, v));
            }
        }
    }
    Ok(CsrMatrix::from_triplets(sys.n(), sys.n(), &trip)?)
}

pub(crate) fn initial_guess(sys: &NonlinearSystem) -> Vec<f64> {
    let nx = sys.mesh().count(0);
    sys.unknown_nodes()
        .iter()
        .map(|&id| burgers_initial(sys.mesh().axis(0).coord(id % nx)))
        .collect()
}
