use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{burgers, helmholtz, poisson, wave, AssemblyError, PoissonForcing, UniformMesh};
use crate::sparse::{ilu_factorize, write_matrix_market, write_vector, CsrMatrix, SparseError};

/// The PDE a system was assembled from, with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Problem {
    Poisson1d {
        p: f64,
        forcing: PoissonForcing,
    },
    Helmholtz2d {
        a: u32,
    },
    Wave1d {
        c: f64,
    },
    HeatStep {
        kappa: f64,
        dt: f64,
    },
    /// A linear system handed in directly, e.g. a Newton tangent system.
    Linear,
}

/// Role of a grid node after substitution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NodeRole {
    Unknown(usize),
    Boundary(f64),
}

/// An assembled linear system `A·u = b` over the unknown nodes of a mesh.
#[derive(Debug, Clone)]
pub struct BvpSystem {
    problem: Problem,
    matrix: CsrMatrix,
    bias: Vec<f64>,
    source: Vec<f64>,
    mesh: UniformMesh,
    roles: Vec<NodeRole>,
    unknown_nodes: Vec<usize>,
    reference: Option<Vec<f64>>,
    warnings: Vec<String>,
}

impl BvpSystem {
    /// Builds a system from already-assembled parts.
    ///
    /// `roles` assigns every mesh node; unknown indices must be
    /// `0..n` in increasing node order.
    pub fn from_parts(
        problem: Problem,
        matrix: CsrMatrix,
        bias: Vec<f64>,
        mesh: UniformMesh,
        roles: Vec<NodeRole>,
        reference: Option<Vec<f64>>,
    ) -> Result<Self, AssemblyError> {
        let source = bias.clone();
        Self::with_source(problem, matrix, bias, source, mesh, roles, reference)
    }

    pub(crate) fn with_source(
        problem: Problem,
        matrix: CsrMatrix,
        bias: Vec<f64>,
        source: Vec<f64>,
        mesh: UniformMesh,
        roles: Vec<NodeRole>,
        reference: Option<Vec<f64>>,
    ) -> Result<Self, AssemblyError> {
        if roles.len() != mesh.n_nodes() {
            return Err(AssemblyError::DimensionMismatch {
                expected: mesh.n_nodes(),
                got: roles.len(),
            });
        }
        let mut unknown_nodes = Vec::new();
        for (node, role) in roles.iter().enumerate() {
            if let NodeRole::Unknown(k) = *role {
                if k != unknown_nodes.len() {
                    return Err(AssemblyError::InvalidParameter(
                        "unknowns must be numbered in node order".into(),
                    ));
                }
                unknown_nodes.push(node);
            }
        }
        let n = unknown_nodes.len();
        if !matrix.is_square() || matrix.n_rows() != n {
            return Err(SparseError::NotSquare {
                rows: matrix.n_rows(),
                cols: matrix.n_cols(),
            }
            .into());
        }
        for v in [&bias, &source].into_iter().chain(reference.as_ref()) {
            if v.len() != n {
                return Err(AssemblyError::DimensionMismatch {
                    expected: n,
                    got: v.len(),
                });
            }
        }
        Ok(Self {
            problem,
            matrix,
            bias,
            source,
            mesh,
            roles,
            unknown_nodes,
            reference,
            warnings: Vec::new(),
        })
    }

    pub fn problem(&self) -> &Problem {
        &self.problem
    }

    /// Number of unknowns.
    pub fn n(&self) -> usize {
        self.unknown_nodes.len()
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    /// The PDE source sampled at each equation, before boundary terms
    /// were folded into the bias.
    pub fn source(&self) -> &[f64] {
        &self.source
    }

    pub fn mesh(&self) -> &UniformMesh {
        &self.mesh
    }

    pub fn roles(&self) -> &[NodeRole] {
        &self.roles
    }

    /// Grid node of each unknown.
    pub fn unknown_nodes(&self) -> &[usize] {
        &self.unknown_nodes
    }

    /// Prescribed `(node, value)` pairs.
    pub fn boundary_values(&self) -> Vec<(usize, f64)> {
        self.roles
            .iter()
            .enumerate()
            .filter_map(|(i, r)| match r {
                NodeRole::Boundary(v) => Some((i, *v)),
                NodeRole::Unknown(_) => None,
            })
            .collect()
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub(crate) fn push_warning(&mut self, w: String) {
        self.warnings.push(w);
    }

    pub fn has_reference(&self) -> bool {
        self.reference.is_some()
    }

    /// Reference solution aligned with the unknown ordering.
    pub fn reference(&self) -> Result<&[f64], AssemblyError> {
        self.reference.as_deref().ok_or(AssemblyError::NoReference)
    }

    /// Same system with a different bias (and no reference), e.g. one
    /// implicit time step with the previous state folded in.
    pub fn with_bias(&self, bias: Vec<f64>) -> Result<Self, AssemblyError> {
        if bias.len() != self.n() {
            return Err(AssemblyError::DimensionMismatch {
                expected: self.n(),
                got: bias.len(),
            });
        }
        let mut s = self.clone();
        s.bias = bias;
        s.reference = None;
        Ok(s)
    }

    pub fn with_reference(mut self, reference: Vec<f64>) -> Result<Self, AssemblyError> {
        if reference.len() != self.n() {
            return Err(AssemblyError::DimensionMismatch {
                expected: self.n(),
                got: reference.len(),
            });
        }
        self.reference = Some(reference);
        Ok(self)
    }

    /// Physical coordinates of the unknowns, `n × dims` row-major.
    pub fn unknown_coords(&self) -> Vec<f64> {
        self.unknown_nodes
            .iter()
            .flat_map(|&id| self.mesh.node_coords(id))
            .collect()
    }

    /// Unknown coordinates with each axis mapped affinely onto `[0, 1]`.
    pub fn normalized_coords(&self) -> Vec<f64> {
        let axes = self.mesh.axes();
        self.unknown_nodes
            .iter()
            .flat_map(|&id| {
                self.mesh
                    .node_index(id)
                    .into_iter()
                    .zip(axes)
                    .map(|(i, a)| i as f64 / (a.count - 1) as f64)
            })
            .collect()
    }

    /// Full grid function: unknown values plus prescribed boundary values.
    pub fn embed(&self, u: &[f64]) -> Result<Vec<f64>, AssemblyError> {
        if u.len() != self.n() {
            return Err(AssemblyError::DimensionMismatch {
                expected: self.n(),
                got: u.len(),
            });
        }
        Ok(self
            .roles
            .iter()
            .map(|r| match *r {
                NodeRole::Unknown(k) => u[k],
                NodeRole::Boundary(v) => v,
            })
            .collect())
    }

    /// `‖A·reference − b‖∞`.
    pub fn truncation_error(&self) -> Result<f64, AssemblyError> {
        let r = self.matrix.spmv(self.reference()?)?;
        Ok(r.iter()
            .zip(&self.bias)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// Truncation error divided by `h²` (largest spacing).
    pub fn consistency_constant(&self) -> Result<f64, AssemblyError> {
        let h = self.mesh.max_spacing();
        Ok(self.truncation_error()? / (h * h))
    }

    /// Solution of `A·u = b` through a complete sparse LU.
    pub fn discrete_solution(&self) -> Result<Vec<f64>, AssemblyError> {
        let lu = ilu_factorize(&self.matrix, 0.0)?;
        let mut u = self.bias.clone();
        lu.precondition_in_place(&mut u)?;
        Ok(u)
    }

    /// Evaluates the finite-difference stencil directly on a full grid
    /// function, without going through the assembled matrix.
    ///
    /// Entry `k` is the residual of equation `k`. Used to confirm that
    /// substitution loses nothing.
    pub fn stencil_residual(&self, grid: &[f64]) -> Result<Vec<f64>, AssemblyError> {
        if grid.len() != self.mesh.n_nodes() {
            return Err(AssemblyError::DimensionMismatch {
                expected: self.mesh.n_nodes(),
                got: grid.len(),
            });
        }
        Ok(match &self.problem {
            Problem::Poisson1d { p, forcing } => {
                poisson::stencil_residual(&self.mesh, *p, *forcing, grid)
            }
            Problem::Helmholtz2d { a } => helmholtz::stencil_residual(&self.mesh, *a, grid),
            Problem::Wave1d { c } => wave::stencil_residual(&self.mesh, *c, grid),
            Problem::HeatStep { kappa, dt } => {
                let h = self.mesh.spacing(0);
                let nx = self.mesh.count(0);
                (1..nx - 1)
                    .map(|i| {
                        let lap = (grid[i - 1] - 2.0 * grid[i] + grid[i + 1]) / (h * h);
                        grid[i] - dt * kappa * lap - self.bias[i - 1]
                    })
                    .collect()
            }
            Problem::Linear => {
                let u: Vec<f64> = self.unknown_nodes.iter().map(|&id| grid[id]).collect();
                let au = self.matrix.spmv(&u)?;
                au.iter().zip(&self.bias).map(|(a, b)| a - b).collect()
            }
        })
    }

    /// Writes `matrix.mtx`, `bias.txt` and (when known) `reference.txt`.
    pub fn export(&self, dir: &Path) -> Result<(), AssemblyError> {
        let io = |e: std::io::Error| AssemblyError::Io(e.to_string());
        fs::create_dir_all(dir).map_err(io)?;
        fs::write(dir.join("matrix.mtx"), write_matrix_market(&self.matrix)).map_err(io)?;
        fs::write(dir.join("bias.txt"), write_vector(&self.bias)).map_err(io)?;
        if let Some(r) = &self.reference {
            fs::write(dir.join("reference.txt"), write_vector(r)).map_err(io)?;
        }
        Ok(())
    }
}

/// Collects matrix triplets row by row, folding known nodal values into the
/// bias.
pub(crate) struct StencilBuilder<'a> {
    roles: &'a [NodeRole],
    pub triplets: Vec<(usize, usize, f64)>,
    pub bias: Vec<f64>,
}

impl<'a> StencilBuilder<'a> {
    pub fn new(roles: &'a [NodeRole], n: usize) -> Self {
        Self {
            roles,
            triplets: Vec::with_capacity(5 * n),
            bias: vec![0.0; n],
        }
    }

    /// Adds `coeff · u(node)` to the left-hand side of equation `row`.
    pub fn add(&mut self, row: usize, node: usize, coeff: f64) {
        match self.roles[node] {
            NodeRole::Unknown(k) => self.triplets.push((row, k, coeff)),
            NodeRole::Boundary(v) => self.bias[row] -= coeff * v,
        }
    }
}

/// Which nonlinear residual a [`NonlinearSystem`] evaluates.
#[derive(Debug, Clone, PartialEq)]
pub enum NonlinearKind {
    /// Space-time Burgers' equation with viscosity `nu`.
    Burgers { nu: f64 },
    /// `F(u) = A·u − b`.
    Linear { matrix: CsrMatrix, bias: Vec<f64> },
}

/// A discrete nonlinear system `F(u) = 0` with an analytic sparse Jacobian.
#[derive(Debug, Clone)]
pub struct NonlinearSystem {
    kind: NonlinearKind,
    mesh: UniformMesh,
    roles: Vec<NodeRole>,
    unknown_nodes: Vec<usize>,
    reference: Option<Vec<f64>>,
}

impl NonlinearSystem {
    pub(crate) fn new(kind: NonlinearKind, mesh: UniformMesh, roles: Vec<NodeRole>) -> Self {
        let unknown_nodes = roles
            .iter()
            .enumerate()
            .filter_map(|(i, r)| matches!(r, NodeRole::Unknown(_)).then_some(i))
            .collect();
        Self {
            kind,
            mesh,
            roles,
            unknown_nodes,
            reference: None,
        }
    }

    /// Wraps a linear system as `F(u) = A·u − b`.
    pub fn linear(system: &BvpSystem) -> Self {
        Self {
            kind: NonlinearKind::Linear {
                matrix: system.matrix().clone(),
                bias: system.bias().to_vec(),
            },
            mesh: system.mesh().clone(),
            roles: system.roles().to_vec(),
            unknown_nodes: system.unknown_nodes().to_vec(),
            reference: system.reference.clone(),
        }
    }

    pub fn kind(&self) -> &NonlinearKind {
        &self.kind
    }

    pub fn n(&self) -> usize {
        self.unknown_nodes.len()
    }

    pub fn mesh(&self) -> &UniformMesh {
        &self.mesh
    }

    pub fn roles(&self) -> &[NodeRole] {
        &self.roles
    }

    pub fn unknown_nodes(&self) -> &[usize] {
        &self.unknown_nodes
    }

    pub fn reference(&self) -> Result<&[f64], AssemblyError> {
        self.reference.as_deref().ok_or(AssemblyError::NoReference)
    }

    pub fn set_reference(&mut self, reference: Vec<f64>) -> Result<(), AssemblyError> {
        if reference.len() != self.n() {
            return Err(AssemblyError::DimensionMismatch {
                expected: self.n(),
                got: reference.len(),
            });
        }
        self.reference = Some(reference);
        Ok(())
    }

    fn check(&self, u: &[f64]) -> Result<(), AssemblyError> {
        if u.len() != self.n() {
            return Err(AssemblyError::DimensionMismatch {
                expected: self.n(),
                got: u.len(),
            });
        }
        Ok(())
    }

    pub fn residual(&self, u: &[f64]) -> Result<Vec<f64>, AssemblyError> {
        self.check(u)?;
        match &self.kind {
            NonlinearKind::Burgers { nu } => Ok(burgers::residual(self, *nu, u)),
            NonlinearKind::Linear { matrix, bias } => {
                let mut r = matrix.spmv(u)?;
                r.iter_mut().zip(bias).for_each(|(a, b)| *a -= b);
                Ok(r)
            }
        }
    }

    pub fn jacobian(&self, u: &[f64]) -> Result<CsrMatrix, AssemblyError> {
        self.check(u)?;
        match &self.kind {
            NonlinearKind::Burgers { nu } => burgers::jacobian(self, *nu, u),
            NonlinearKind::Linear { matrix, .. } => Ok(matrix.clone()),
        }
    }

    /// Default Newton start: the initial condition copied along time for
    /// space-time problems, zero otherwise.
    pub fn initial_guess(&self) -> Vec<f64> {
        match &self.kind {
            NonlinearKind::Burgers { .. } => burgers::initial_guess(self),
            NonlinearKind::Linear { .. } => vec![0.0; self.n()],
        }
    }

    /// The Newton tangent system at `u_prev`:
    /// `J(u_prev)·u = J(u_prev)·u_prev − F(u_prev)`.
    pub fn tangent_system(&self, u_prev: &[f64]) -> Result<BvpSystem, AssemblyError> {
        let jac = self.jacobian(u_prev)?;
        let f = self.residual(u_prev)?;
        let mut bias = jac.spmv(u_prev)?;
        bias.iter_mut().zip(&f).for_each(|(b, r)| *b -= r);
        let mut sys = BvpSystem::from_parts(
            Problem::Linear,
            jac,
            bias,
            self.mesh.clone(),
            self.roles.clone(),
            None,
        )?;
        if let Some(r) = &self.reference {
            sys = sys.with_reference(r.clone())?;
        }
        Ok(sys)
    }

    /// Unknown coordinates mapped onto `[0, 1]` per axis.
    pub fn normalized_coords(&self) -> Vec<f64> {
        let axes = self.mesh.axes();
        self.unknown_nodes
            .iter()
            .flat_map(|&id| {
                self.mesh
                    .node_index(id)
                    .into_iter()
                    .zip(axes)
                    .map(|(i, a)| i as f64 / (a.count - 1) as f64)
            })
            .collect()
    }

    pub(crate) fn grid_value(&self, u: &[f64], node: usize) -> f64 {
        match self.roles[node] {
            NodeRole::Unknown(k) => u[k],
            NodeRole::Boundary(v) => v,
        }
    }
}

pub(crate) fn poisson_forcing_value(forcing: PoissonForcing, p: f64, x: f64) -> f64 {
    match forcing {
        PoissonForcing::Sine => (p * x).sin(),
        PoissonForcing::Homogeneous { .. } => 0.0,
    }
}
