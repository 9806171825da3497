//! Space-time assembly of `u_tt − C²u_xx = f` on `[0, 8] × [0, 8]`.
//!
//! Axis 0 is `x`, axis 1 is `t`. The scheme is the θ-weighted implicit
//! central difference
//!
//! ```text
//! (u[j+1] − 2u[j] + u[j−1]) / k² − C²·D(θu[j+1] + (1−2θ)u[j] + θu[j−1]) = f[j]
//! ```
//!
//! with `θ = 1/4`, which is unconditionally stable; the explicit scheme
//! (`θ = 0`) blows up on square grids once `C > 1`. The equation centred at
//! time row `j` determines row `j + 1`. At `j = 0` the zero initial
//! velocity enters through the mirror relation `u[−1] = u[1]`.

use std::f64::consts::PI;

use super::system::{NodeRole, StencilBuilder};
use super::{AssemblyError, BvpSystem, Problem, UniformMesh};
use crate::sparse::CsrMatrix;

/// Spatial and temporal extent of the wave problem.
pub const WAVE_DOMAIN: (f64, f64) = (0.0, 8.0);

/// Time weight θ of the implicit scheme.
pub const WAVE_TIME_WEIGHT: f64 = 0.25;

/// `sin(πx/8)cos(πt/8) + ½sin(πx/2)cos(Cπt/2)`.
pub fn wave_reference(c: f64, x: f64, t: f64) -> f64 {
    (PI * x / 8.0).sin() * (PI * t / 8.0).cos()
        + 0.5 * (PI * x / 2.0).sin() * (c * PI * t / 2.0).cos()
}

/// `(π/8)²(C² − 1)sin(πx/8)cos(πt/8)`.
pub fn wave_forcing(c: f64, x: f64, t: f64) -> f64 {
    (PI / 8.0).powi(2) * (c * c - 1.0) * (PI * x / 8.0).sin() * (PI * t / 8.0).cos()
}

/// Stencil weights `(time row offset, time coefficient, spatial weight)`
/// for the equation centred at row `j`, relative to `j`.
fn row_weights(j: usize, k: f64) -> Vec<(isize, f64, f64)> {
    let th = WAVE_TIME_WEIGHT;
    let k2 = k * k;
    if j == 0 {
        vec![(1, 2.0 / k2, 2.0 * th), (0, -2.0 / k2, 1.0 - 2.0 * th)]
    } else {
        vec![
            (1, 1.0 / k2, th),
            (0, -2.0 / k2, 1.0 - 2.0 * th),
            (-1, 1.0 / k2, th),
        ]
    }
}

/// Assembles the wave problem on an `nx × nt` space-time grid.
pub fn assemble_wave_1d(c: f64, nx: usize, nt: usize) -> Result<BvpSystem, AssemblyError> {
    if !(c.is_finite() && c > 0.0) {
        return Err(AssemblyError::InvalidParameter(format!(
            "C must be positive, got {c}"
        )));
    }
    let mesh = UniformMesh::new(&[WAVE_DOMAIN, WAVE_DOMAIN], &[nx, nt])?;
    let (h, k) = (mesh.spacing(0), mesh.spacing(1));
    let mut next = 0;
    let roles: Vec<NodeRole> = (0..mesh.n_nodes())
        .map(|id| {
            let (i, j) = (id % nx, id / nx);
            if i == 0 || i == nx - 1 || j == 0 {
                let xy = mesh.node_coords(id);
                NodeRole::Boundary(wave_reference(c, xy[0], xy[1]))
            } else {
                next += 1;
                NodeRole::Unknown(next - 1)
            }
        })
        .collect();
    let n = (nx - 2) * (nt - 1);
    let c2 = c * c / (h * h);
    let mut sb = StencilBuilder::new(&roles, n);
    let mut source = vec![0.0; n];
    for j in 0..nt - 1 {
        let weights = row_weights(j, k);
        for i in 1..nx - 1 {
            let row = j * (nx - 2) + (i - 1);
            for &(dj, tc, w) in &weights {
                let jj = (j as isize + dj) as usize;
                let id = mesh.node_id(&[i, jj]);
                sb.add(row, id, tc + 2.0 * c2 * w);
                sb.add(row, id - 1, -c2 * w);
                sb.add(row, id + 1, -c2 * w);
            }
            source[row] = wave_forcing(c, mesh.axis(0).coord(i), mesh.axis(1).coord(j));
        }
    }
    let bias: Vec<f64> = sb.bias.iter().zip(&source).map(|(b, f)| b + f).collect();
    let matrix = CsrMatrix::from_triplets(n, n, &sb.triplets)?;
    let reference = roles
        .iter()
        .enumerate()
        .filter(|(_, r)| matches!(r, NodeRole::Unknown(_)))
        .map(|(id, _)| {
            let xy = mesh.node_coords(id);
            wave_reference(c, xy[0], xy[1])
        })
        .collect();
    BvpSystem::with_source(
        Problem::Wave1d { c },
        matrix,
        bias,
        source,
        mesh,
        roles,
        Some(reference),
    )
}

pub(crate) fn stencil_residual(mesh: &UniformMesh, c: f64, grid: &[f64]) -> Vec<f64> {
    let (nx, nt) = (mesh.count(0), mesh.count(1));
    let (h, k) = (mesh.spacing(0), mesh.spacing(1));
    let at = |i: usize, j: usize| grid[j * nx + i];
    let mut out = Vec::with_capacity((nx - 2) * (nt - 1));
    for j in 0..nt - 1 {
        for i in 1..nx - 1 {
            let d = |jj: usize| (at(i - 1, jj) - 2.0 * at(i, jj) + at(i + 1, jj)) / (h * h);
            let th = WAVE_TIME_WEIGHT;
            let lhs = if j == 0 {
                (2.0 * at(i, 1) - 2.0 * at(i, 0)) / (k * k)
                    - c * c * (2.0 * th * d(1) + (1.0 - 2.0 * th) * d(0))
            } else {
                (at(i, j + 1) - 2.0 * at(i, j) + at(i, j - 1)) / (k * k)
                    - c * c * (th * d(j + 1) + (1.0 - 2.0 * th) * d(j) + th * d(j - 1))
            };
            out.push(lhs - wave_forcing(c, mesh.axis(0).coord(i), mesh.axis(1).coord(j)));
        }
    }
    out
}
