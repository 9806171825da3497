//! Reverse-mode autodiff over [`Tensor`]s.
//!
//! Every operation appends a node holding its forward value. [`Tape::backward`]
//! consumes the tape and returns the gradient of a scalar root with respect
//! to every leaf registered with `requires_grad`.

use super::tensor::{gemm, Tensor};
use super::NeuralError;
use crate::parallel::zip_map;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    /// `x·W + 1·b`.
    Linear(Var, Var, Var),
    AddRowBias(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Tanh(Var),
    /// Keeps `σ(x)` for the backward pass.
    Silu(Var, Vec<f64>),
    Sum(Var),
    SumSquares(Var),
    /// Scalar whose gradient with respect to `x` is supplied from outside.
    External(Var, Vec<f64>),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients returned by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the root with respect to `v`; `None` when `v` does not
    /// require a gradient or does not influence the root.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

/// `eˣ` without branches, so loops over it vectorize.
///
/// Cody-Waite reduction `x = n·ln2 + r` with `|r| ≤ ln2/2`, then a
/// degree-13 Taylor polynomial; relative error below 3e-16. Inputs are
/// clamped to `[−708, 708]`.
#[inline(always)]
pub fn exp_fast(x: f64) -> f64 {
    const LN2_HI: f64 = 6.931_471_803_691_238e-1;
    const LN2_LO: f64 = 1.908_214_929_270_587_7e-10;
    // adding 1.5·2⁵² rounds to an integer held in the low mantissa bits
    const SHIFT: f64 = 6_755_399_441_055_744.0;
    const COEFFS: [f64; 13] = [
        1.0 / 479_001_600.0,
        1.0 / 39_916_800.0,
        1.0 / 3_628_800.0,
        1.0 / 362_880.0,
        1.0 / 40_320.0,
        1.0 / 5_040.0,
        1.0 / 720.0,
        1.0 / 120.0,
        1.0 / 24.0,
        1.0 / 6.0,
        0.5,
        1.0,
        1.0,
    ];
    let x = x.clamp(-708.0, 708.0);
    let t = x * std::f64::consts::LOG2_E + SHIFT;
    let n = t - SHIFT;
    let r = x - n * LN2_HI - n * LN2_LO;
    let mut p = 1.0 / 6_227_020_800.0;
    for c in COEFFS {
        p = horner_step(p, r, c);
    }
    p * f64::from_bits(t.to_bits().wrapping_add(1023) << 52)
}

#[cfg(target_feature = "fma")]
#[inline(always)]
fn horner_step(p: f64, r: f64, c: f64) -> f64 {
    p.mul_add(r, c)
}

#[cfg(not(target_feature = "fma"))]
#[inline(always)]
fn horner_step(p: f64, r: f64, c: f64) -> f64 {
    p * r + c
}

#[inline(always)]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + exp_fast(-x))
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// A trainable leaf.
    pub fn param(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    /// A constant leaf.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NeuralError> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.cols() != bv.rows() {
            return Err(NeuralError::Shape(format!(
                "matmul {}×{} by {}×{}",
                av.rows(),
                av.cols(),
                bv.rows(),
                bv.cols()
            )));
        }
        let (m, k, n) = (av.rows(), av.cols(), bv.cols());
        let mut out = Tensor::zeros(m, n);
        gemm(
            m,
            k,
            n,
            av.data(),
            false,
            bv.data(),
            false,
            0.0,
            out.data_mut(),
        );
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::MatMul(a, b), rg))
    }

    /// Affine layer `x·w + 1·bias`, `bias` of shape `1 × cols(w)`.
    pub fn linear(&mut self, x: Var, w: Var, bias: Var) -> Result<Var, NeuralError> {
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(bias));
        if xv.cols() != wv.rows() || bv.len() != wv.cols() {
            return Err(NeuralError::Shape(format!(
                "linear {}×{} by {}×{} plus {}",
                xv.rows(),
                xv.cols(),
                wv.rows(),
                wv.cols(),
                bv.len()
            )));
        }
        let (m, k, n) = (xv.rows(), xv.cols(), wv.cols());
        let mut out = Tensor::zeros(m, n);
        gemm(
            m,
            k,
            n,
            xv.data(),
            false,
            wv.data(),
            false,
            0.0,
            out.data_mut(),
        );
        for row in out.data_mut().chunks_mut(n) {
            row.iter_mut().zip(bv.data()).for_each(|(o, b)| *o += b);
        }
        let rg = self.rg(x) || self.rg(w) || self.rg(bias);
        Ok(self.push(out, Op::Linear(x, w, bias), rg))
    }

    /// `x + 1·bias` for `x` of shape `n × m` and `bias` of shape `1 × m`.
    pub fn add_row_bias(&mut self, x: Var, bias: Var) -> Result<Var, NeuralError> {
        let (xv, bv) = (self.value(x), self.value(bias));
        if bv.len() != xv.cols() {
            return Err(NeuralError::Shape(format!(
                "bias of length {} for {} columns",
                bv.len(),
                xv.cols()
            )));
        }
        let mut out = xv.clone();
        let m = xv.cols();
        for row in out.data_mut().chunks_mut(m) {
            row.iter_mut().zip(bv.data()).for_each(|(o, b)| *o += b);
        }
        let rg = self.rg(x) || self.rg(bias);
        Ok(self.push(out, Op::AddRowBias(x, bias), rg))
    }

    fn check_same(&self, a: Var, b: Var) -> Result<(), NeuralError> {
        if !self.value(a).same_shape(self.value(b)) {
            return Err(NeuralError::Shape(format!(
                "elementwise operands {:?} and {:?}",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NeuralError> {
        self.check_same(a, b)?;
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Add(a, b), rg))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NeuralError> {
        self.check_same(a, b)?;
        let mut out = self.value(a).clone();
        out.data_mut()
            .iter_mut()
            .zip(self.value(b).data())
            .for_each(|(x, y)| *x *= y);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let mut out = self.value(x).clone();
        out.data_mut().iter_mut().for_each(|v| *v *= c);
        let rg = self.rg(x);
        self.push(out, Op::Scale(x, c), rg)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let mut out = Tensor::zeros_like(xv);
        zip_map(out.data_mut(), xv.data(), f64::tanh);
        let rg = self.rg(x);
        self.push(out, Op::Tanh(x), rg)
    }

    /// `x·σ(x)`.
    pub fn silu(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let mut sig = vec![0.0; xv.len()];
        zip_map(&mut sig, xv.data(), sigmoid);
        let mut out = Tensor::zeros_like(xv);
        out.data_mut()
            .iter_mut()
            .zip(&sig)
            .zip(xv.data())
            .for_each(|((o, s), x)| *o = x * s);
        let rg = self.rg(x);
        self.push(out, Op::Silu(x, sig), rg)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        let rg = self.rg(x);
        self.push(Tensor::scalar(s), Op::Sum(x), rg)
    }

    pub fn sum_squares(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().map(|v| v * v).sum();
        let rg = self.rg(x);
        self.push(Tensor::scalar(s), Op::SumSquares(x), rg)
    }

    /// A scalar with value `value` whose gradient with respect to `x` is
    /// `grad`. Used to chain a loss computed off-tape into the graph.
    pub fn external(&mut self, x: Var, value: f64, grad: Vec<f64>) -> Result<Var, NeuralError> {
        if grad.len() != self.value(x).len() {
            return Err(NeuralError::Shape(format!(
                "gradient of length {} for {} values",
                grad.len(),
                self.value(x).len()
            )));
        }
        let rg = self.rg(x);
        Ok(self.push(Tensor::scalar(value), Op::External(x, grad), rg))
    }

    /// Gradients of the scalar `root` with respect to all leaves.
    pub fn backward(self, root: Var) -> Result<Gradients, NeuralError> {
        let n = self.nodes.len();
        if root.0 >= n {
            return Err(NeuralError::Shape(format!(
                "root {} outside tape of {n} nodes",
                root.0
            )));
        }
        if self.nodes[root.0].value.len() != 1 {
            return Err(NeuralError::NonScalarRoot(self.nodes[root.0].value.shape()));
        }
        let mut grads: Vec<Option<Tensor>> = (0..n).map(|_| None).collect();
        grads[root.0] = Some(Tensor::scalar(1.0));
        let nodes = self.nodes;
        for i in (0..=root.0).rev() {
            let node = &nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            let mut leaf_grad = None;
            let mut send = |v: Var, t: Tensor| accumulate(&nodes, &mut grads, v, t);
            match &node.op {
                Op::Leaf => {
                    leaf_grad = Some(g);
                }
                Op::MatMul(a, b) => {
                    let (av, bv) = (&nodes[a.0].value, &nodes[b.0].value);
                    let (m, k, nn) = (av.rows(), av.cols(), bv.cols());
                    if nodes[a.0].requires_grad {
                        let mut ga = Tensor::zeros(m, k);
                        gemm(
                            m,
                            nn,
                            k,
                            g.data(),
                            false,
                            bv.data(),
                            true,
                            0.0,
                            ga.data_mut(),
                        );
                        send(*a, ga);
                    }
                    if nodes[b.0].requires_grad {
                        let mut gb = Tensor::zeros(k, nn);
                        gemm(
                            k,
                            m,
                            nn,
                            av.data(),
                            true,
                            g.data(),
                            false,
                            0.0,
                            gb.data_mut(),
                        );
                        send(*b, gb);
                    }
                }
                Op::Linear(x, w, bias) => {
                    let (xv, wv) = (&nodes[x.0].value, &nodes[w.0].value);
                    let (m, k, nn) = (xv.rows(), xv.cols(), wv.cols());
                    if nodes[bias.0].requires_grad {
                        send(*bias, column_sums(&g, nn));
                    }
                    if nodes[w.0].requires_grad {
                        let mut gw = Tensor::zeros(k, nn);
                        gemm(
                            k,
                            m,
                            nn,
                            xv.data(),
                            true,
                            g.data(),
                            false,
                            0.0,
                            gw.data_mut(),
                        );
                        send(*w, gw);
                    }
                    if nodes[x.0].requires_grad {
                        let mut gx = Tensor::zeros(m, k);
                        gemm(
                            m,
                            nn,
                            k,
                            g.data(),
                            false,
                            wv.data(),
                            true,
                            0.0,
                            gx.data_mut(),
                        );
                        send(*x, gx);
                    }
                }
                Op::AddRowBias(x, bias) => {
                    if nodes[bias.0].requires_grad {
                        send(*bias, column_sums(&g, nodes[bias.0].value.len()));
                    }
                    send(*x, g);
                }
                Op::Add(a, b) => {
                    send(*a, g.clone());
                    send(*b, g);
                }
                Op::Mul(a, b) => {
                    let mut ga = g.clone();
                    ga.data_mut()
                        .iter_mut()
                        .zip(nodes[b.0].value.data())
                        .for_each(|(o, y)| *o *= y);
                    let mut gb = g;
                    gb.data_mut()
                        .iter_mut()
                        .zip(nodes[a.0].value.data())
                        .for_each(|(o, x)| *o *= x);
                    send(*a, ga);
                    send(*b, gb);
                }
                Op::Scale(x, c) => {
                    let mut gx = g;
                    gx.data_mut().iter_mut().for_each(|v| *v *= c);
                    send(*x, gx);
                }
                Op::Tanh(x) => {
                    let mut gx = g;
                    gx.data_mut()
                        .iter_mut()
                        .zip(node.value.data())
                        .for_each(|(o, y)| *o *= 1.0 - y * y);
                    send(*x, gx);
                }
                Op::Silu(x, sig) => {
                    // d(xσ)/dx = σ + xσ(1 − σ) = σ + y(1 − σ)
                    let mut gx = g;
                    for ((o, &s), &y) in gx.data_mut().iter_mut().zip(sig).zip(node.value.data()) {
                        *o *= s + y * (1.0 - s);
                    }
                    send(*x, gx);
                }
                Op::Sum(x) => {
                    let xv = &nodes[x.0].value;
                    let mut gx = Tensor::zeros_like(xv);
                    gx.data_mut().iter_mut().for_each(|v| *v = g.data()[0]);
                    send(*x, gx);
                }
                Op::SumSquares(x) => {
                    let xv = &nodes[x.0].value;
                    let mut gx = xv.clone();
                    let s = 2.0 * g.data()[0];
                    gx.data_mut().iter_mut().for_each(|v| *v *= s);
                    send(*x, gx);
                }
                Op::External(x, grad) => {
                    let xv = &nodes[x.0].value;
                    let s = g.data()[0];
                    let mut gx = Tensor::zeros_like(xv);
                    gx.data_mut()
                        .iter_mut()
                        .zip(grad)
                        .for_each(|(o, d)| *o = s * d);
                    send(*x, gx);
                }
            }
            if leaf_grad.is_some() {
                grads[i] = leaf_grad;
            }
        }
        Ok(Gradients { grads })
    }
}

fn column_sums(g: &Tensor, cols: usize) -> Tensor {
    let mut out = vec![0.0; cols];
    for row in g.data().chunks(cols) {
        out.iter_mut().zip(row).for_each(|(o, r)| *o += r);
    }
    Tensor::matrix(1, cols, out).expect("1 × cols")
}

fn accumulate(nodes: &[Node], grads: &mut [Option<Tensor>], v: Var, t: Tensor) {
    if !nodes[v.0].requires_grad {
        return;
    }
    match &mut grads[v.0] {
        Some(acc) => acc.add_assign(&t),
        slot => *slot = Some(t),
    }
}
