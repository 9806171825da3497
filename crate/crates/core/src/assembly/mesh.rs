use serde::{Deserialize, Serialize};

use super::AssemblyError;

/// One axis of a uniform tensor-product mesh, endpoints included.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub low: f64,
    pub high: f64,
    pub count: usize,
}

impl Axis {
    pub fn spacing(&self) -> f64 {
        (self.high - self.low) / (self.count - 1) as f64
    }

    pub fn coord(&self, i: usize) -> f64 {
        self.low + i as f64 * self.spacing()
    }
}

/// Uniform mesh on a 1D interval or 2D rectangle.
///
/// Nodes are numbered row-major with axis 0 varying fastest: node
/// `(i, j)` has id `j * count_0 + i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformMesh {
    axes: Vec<Axis>,
}

impl UniformMesh {
    pub fn new(bounds: &[(f64, f64)], counts: &[usize]) -> Result<Self, AssemblyError> {
        if bounds.is_empty() || bounds.len() > 2 || bounds.len() != counts.len() {
            return Err(AssemblyError::InvalidMesh(format!(
                "need 1 or 2 axes with matching bounds and counts, got {} bounds and {} counts",
                bounds.len(),
                counts.len()
            )));
        }
        let mut axes = Vec::with_capacity(bounds.len());
        for (axis, (&(low, high), &count)) in bounds.iter().zip(counts).enumerate() {
            if count < 3 {
                return Err(AssemblyError::InvalidMesh(format!(
                    "axis {axis}: count {count} < 3"
                )));
            }
            if !(low.is_finite() && high.is_finite() && high > low) {
                return Err(AssemblyError::InvalidMesh(format!(
                    "axis {axis}: degenerate bounds ({low}, {high})"
                )));
            }
            axes.push(Axis { low, high, count });
        }
        Ok(Self { axes })
    }

    pub fn dims(&self) -> usize {
        self.axes.len()
    }

    pub fn axis(&self, a: usize) -> &Axis {
        &self.axes[a]
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn count(&self, a: usize) -> usize {
        self.axes[a].count
    }

    pub fn spacing(&self, a: usize) -> f64 {
        self.axes[a].spacing()
    }

    /// Largest spacing over all axes.
    pub fn max_spacing(&self) -> f64 {
        self.axes.iter().map(Axis::spacing).fold(0.0, f64::max)
    }

    pub fn n_nodes(&self) -> usize {
        self.axes.iter().map(|a| a.count).product()
    }

    pub fn node_id(&self, idx: &[usize]) -> usize {
        match idx {
            [i] => *i,
            [i, j] => j * self.axes[0].count + i,
            _ => unreachable!("meshes have one or two axes"),
        }
    }

    /// Multi-index of a node id.
    pub fn node_index(&self, id: usize) -> Vec<usize> {
        match self.dims() {
            1 => vec![id],
            _ => vec![id % self.axes[0].count, id / self.axes[0].count],
        }
    }

    pub fn node_coords(&self, id: usize) -> Vec<f64> {
        self.node_index(id)
            .iter()
            .zip(&self.axes)
            .map(|(&i, a)| a.coord(i))
            .collect()
    }

    /// Coordinates of every node along one axis.
    pub fn axis_coords(&self, a: usize) -> Vec<f64> {
        let ax = self.axes[a];
        (0..ax.count).map(|i| ax.coord(i)).collect()
    }
}
