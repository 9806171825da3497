use std::f64::consts::PI;

use super::system::{NodeRole, StencilBuilder};
use super::{AssemblyError, BvpSystem, Problem, UniformMesh};
use crate::sparse::CsrMatrix;

/// `sin(aπx)·sin(aπy)`.
pub fn helmholtz_reference(a: u32, x: f64, y: f64) -> f64 {
    let k = a as f64 * PI;
    (k * x).sin() * (k * y).sin()
}

fn forcing(a: u32, x: f64, y: f64) -> f64 {
    let a = a as f64;
    (1.0 - 2.0 * PI * PI * a * a) * helmholtz_reference(a as u32, x, y)
}

pub(crate) fn interior_roles(mesh: &UniformMesh) -> Vec<NodeRole> {
    let (nx, ny) = (mesh.count(0), mesh.count(1));
    let mut next = 0;
    (0..mesh.n_nodes())
        .map(|id| {
            let (i, j) = (id % nx, id / nx);
            if i == 0 || j == 0 || i == nx - 1 || j == ny - 1 {
                NodeRole::Boundary(0.0)
            } else {
                next += 1;
                NodeRole::Unknown(next - 1)
            }
        })
        .collect()
}

/// Assembles `Δu + u = f` on the unit square with zero Dirichlet data and
/// `count` nodes per axis.
pub fn assemble_helmholtz_2d(a: u32, count: usize) -> Result<BvpSystem, AssemblyError> {
    if a == 0 {
        return Err(AssemblyError::InvalidParameter(
            "A must be at least 1".into(),
        ));
    }
    let mesh = UniformMesh::new(&[(0.0, 1.0), (0.0, 1.0)], &[count, count])?;
    let roles = interior_roles(&mesh);
    let n = (count - 2) * (count - 2);
    let h = mesh.spacing(0);
    let inv = 1.0 / (h * h);
    let mut sb = StencilBuilder::new(&roles, n);
    let mut source = vec![0.0; n];
    let mut reference = vec![0.0; n];
    for j in 1..count - 1 {
        for i in 1..count - 1 {
            let id = mesh.node_id(&[i, j]);
            let NodeRole::Unknown(row) = roles[id] else {
                unreachable!()
            };
            sb.add(row, id - count, inv);
            sb.add(row, id - 1, inv);
            sb.add(row, id, 1.0 - 4.0 * inv);
            sb.add(row, id + 1, inv);
            sb.add(row, id + count, inv);
            let (x, y) = (mesh.axis(0).coord(i), mesh.axis(1).coord(j));
            source[row] = forcing(a, x, y);
            reference[row] = helmholtz_reference(a, x, y);
        }
    }
    let bias: Vec<f64> = sb.bias.iter().zip(&source).map(|(b, f)| b + f).collect();
    let matrix = CsrMatrix::from_triplets(n, n, &sb.triplets)?;
    let mut sys = BvpSystem::with_source(
        Problem::Helmholtz2d { a },
        matrix,
        bias,
        source,
        mesh,
        roles,
        Some(reference),
    )?;
    if count < 10 * a as usize {
        sys.push_warning(format!(
            "count {count} under-resolves frequency A = {a}; use at least {}",
            10 * a
        ));
    }
    Ok(sys)
}

pub(crate) fn stencil_residual(mesh: &UniformMesh, a: u32, grid: &[f64]) -> Vec<f64> {
    let n = mesh.count(0);
    let h = mesh.spacing(0);
    let mut out = Vec::with_capacity((n - 2) * (n - 2));
    for j in 1..n - 1 {
        for i in 1..n - 1 {
            let c = j * n + i;
            let lap =
                (grid[c - 1] + grid[c + 1] + grid[c - n] + grid[c + n] - 4.0 * grid[c]) / (h * h);
            out.push(lap + grid[c] - forcing(a, mesh.axis(0).coord(i), mesh.axis(1).coord(j)));
        }
    }
    out
}
