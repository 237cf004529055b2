//! Reverse-mode gradient tape over a fixed set of matrix primitives.
//!
//! Each primitive stores its forward value and whatever its hand-derived
//! adjoint needs. A tape is built for one scalar objective on one thread;
//! [`Tape::backward`] walks it in reverse and returns gradients for every
//! parameter block that was recorded.

use crate::error::{Error, Result};
use crate::numeric::linalg::{self, spd_inverse};
use crate::numeric::{Matrix, ParamId};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Constant,
    Param(ParamId),
    MatMul(Var, Var),
    MatMulBt(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Scale(Var, f64),
    AddRowBias(Var, Var),
    AddColBias(Var, Var),
    ScaleRows(Var, Vec<f64>),
    SoftmaxRows(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        normalized: Matrix,
        inv_std: Vec<f64>,
    },
    ColSlice {
        x: Var,
        start: usize,
    },
    ConcatCols(Vec<Var>),
    Square(Var),
    Mean(Var),
    Sum(Var),
    LogDet {
        s: Var,
        inverse: Matrix,
    },
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
    needs_grad: bool,
}

/// Gradients keyed by [`ParamId`].
#[derive(Debug, Clone, Default)]
pub struct Gradients {
    blocks: Vec<Option<Matrix>>,
}

impl Gradients {
    pub fn get(&self, id: ParamId) -> Result<&Matrix> {
        self.blocks
            .get(id.0)
            .and_then(Option::as_ref)
            .ok_or_else(|| Error::MissingGradient(format!("#{}", id.0)))
    }

    pub fn contains(&self, id: ParamId) -> bool {
        matches!(self.blocks.get(id.0), Some(Some(_)))
    }

    pub fn into_blocks(self) -> Vec<Option<Matrix>> {
        self.blocks
    }

    pub fn from_blocks(blocks: Vec<Option<Matrix>>) -> Self {
        Self { blocks }
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Matrix)> {
        self.blocks
            .iter()
            .enumerate()
            .filter_map(|(i, g)| g.as_ref().map(|g| (ParamId(i), g)))
    }
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
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

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    /// Scalar value of a 1x1 node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v)[(0, 0)]
    }

    fn push(&mut self, value: Matrix, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Constant, false)
    }

    pub fn param(&mut self, id: ParamId, value: &Matrix) -> Var {
        self.push(value.clone(), Op::Param(id), true)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::MatMul(a, b), ng))
    }

    /// `a · bᵀ`.
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul_bt(self.value(b))?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::MatMulBt(a, b), ng))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).add(self.value(b))?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::Add(a, b), ng))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).sub(self.value(b))?;
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::Sub(a, b), ng))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let value = self.value(a).scale(s);
        let ng = self.needs(a);
        self.push(value, Op::Scale(a, s), ng)
    }

    /// `x + 1·b` for a `1 x n` bias row.
    pub fn add_row_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(b));
        if bv.rows() != 1 || bv.cols() != xv.cols() {
            return Err(Error::shape(
                "add_row_bias",
                format!("{:?} + {:?}", xv.shape(), bv.shape()),
            ));
        }
        let mut value = xv.clone();
        for i in 0..value.rows() {
            for (o, &bb) in value.row_mut(i).iter_mut().zip(bv.row(0)) {
                *o += bb;
            }
        }
        let ng = self.needs(x) || self.needs(b);
        Ok(self.push(value, Op::AddRowBias(x, b), ng))
    }

    /// `x + b·1ᵀ` for an `m x 1` bias column.
    pub fn add_col_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(b));
        if bv.cols() != 1 || bv.rows() != xv.rows() {
            return Err(Error::shape(
                "add_col_bias",
                format!("{:?} + {:?}", xv.shape(), bv.shape()),
            ));
        }
        let mut value = xv.clone();
        for i in 0..value.rows() {
            let bi = bv[(i, 0)];
            value.row_mut(i).iter_mut().for_each(|o| *o += bi);
        }
        let ng = self.needs(x) || self.needs(b);
        Ok(self.push(value, Op::AddColBias(x, b), ng))
    }

    /// Multiplies row `i` by the constant `factors[i]`.
    pub fn scale_rows(&mut self, x: Var, factors: Vec<f64>) -> Result<Var> {
        let xv = self.value(x);
        if factors.len() != xv.rows() {
            return Err(Error::shape(
                "scale_rows",
                format!("{} factors for {} rows", factors.len(), xv.rows()),
            ));
        }
        let mut value = xv.clone();
        for (i, &f) in factors.iter().enumerate() {
            value.row_mut(i).iter_mut().for_each(|o| *o *= f);
        }
        let ng = self.needs(x);
        Ok(self.push(value, Op::ScaleRows(x, factors), ng))
    }

    pub fn softmax_rows(&mut self, x: Var) -> Result<Var> {
        let value = linalg::softmax_rows(self.value(x))?;
        let ng = self.needs(x);
        Ok(self.push(value, Op::SoftmaxRows(x), ng))
    }

    /// Row layer norm; `gain` and `bias` are `1 x d` nodes.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let out = linalg::layer_norm(
            self.value(x),
            self.value(gain).as_slice(),
            self.value(bias).as_slice(),
            eps,
        )?;
        let ng = self.needs(x) || self.needs(gain) || self.needs(bias);
        Ok(self.push(
            out.output,
            Op::LayerNorm {
                x,
                gain,
                bias,
                normalized: out.normalized,
                inv_std: out.inv_std,
            },
            ng,
        ))
    }

    pub fn col_slice(&mut self, x: Var, start: usize, width: usize) -> Result<Var> {
        let value = self.value(x).col_slice(start, width)?;
        let ng = self.needs(x);
        Ok(self.push(value, Op::ColSlice { x, start }, ng))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let mats: Vec<&Matrix> = parts.iter().map(|&p| self.value(p)).collect();
        let value = Matrix::hconcat(&mats)?;
        let ng = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(value, Op::ConcatCols(parts.to_vec()), ng))
    }

    pub fn square(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| v * v);
        let ng = self.needs(x);
        self.push(value, Op::Square(x), ng)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let value = Matrix::filled(1, 1, self.value(x).mean());
        let ng = self.needs(x);
        self.push(value, Op::Mean(x), ng)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let value = Matrix::filled(1, 1, self.value(x).sum());
        let ng = self.needs(x);
        self.push(value, Op::Sum(x), ng)
    }

    /// `log det(s)` by Cholesky. The adjoint uses the closed form
    /// `∂ log det S / ∂S = S⁻¹` rather than differentiating the factorization.
    pub fn logdet(&mut self, s: Var) -> Result<Var> {
        let sv = self.value(s);
        let l = linalg::cholesky(sv)?;
        let value = Matrix::filled(1, 1, linalg::logdet_from_factor(&l));
        let ng = self.needs(s);
        let inverse = if ng { spd_inverse(sv)? } else { Matrix::zeros(0, 0) };
        Ok(self.push(value, Op::LogDet { s, inverse }, ng))
    }

    /// Sum of several 1x1 nodes.
    pub fn add_scalars(&mut self, terms: &[Var]) -> Result<Var> {
        let (first, rest) = terms
            .split_first()
            .ok_or_else(|| Error::shape("add_scalars", "no terms"))?;
        let mut acc = *first;
        for &t in rest {
            acc = self.add(acc, t)?;
        }
        Ok(acc)
    }

    /// Reverse sweep from a 1x1 `loss` node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).shape() != (1, 1) {
            return Err(Error::shape(
                "backward",
                format!("loss must be 1x1, got {:?}", self.value(loss).shape()),
            ));
        }
        let mut adj: Vec<Option<Matrix>> = vec![None; loss.0 + 1];
        adj[loss.0] = Some(Matrix::filled(1, 1, 1.0));
        let mut blocks: Vec<Option<Matrix>> = Vec::new();

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if let Op::Param(id) = node.op {
                if blocks.len() <= id.0 {
                    blocks.resize(id.0 + 1, None);
                }
                let g = adj[i]
                    .take()
                    .unwrap_or_else(|| Matrix::zeros(node.value.rows(), node.value.cols()));
                match &mut blocks[id.0] {
                    Some(acc) => acc.add_assign(&g)?,
                    slot => *slot = Some(g),
                }
                continue;
            }
            if !node.needs_grad {
                continue;
            }
            let Some(g) = adj[i].take() else { continue };
            self.propagate(&node.op, &node.value, &g, &mut adj)?;
        }
        Ok(Gradients { blocks })
    }

    fn accumulate(&self, adj: &mut [Option<Matrix>], v: Var, g: Matrix) -> Result<()> {
        if !self.needs(v) {
            return Ok(());
        }
        match &mut adj[v.0] {
            Some(acc) => acc.add_assign(&g)?,
            slot => *slot = Some(g),
        }
        Ok(())
    }

    fn propagate(&self, op: &Op, out: &Matrix, g: &Matrix, adj: &mut [Option<Matrix>]) -> Result<()> {
        match op {
            Op::Constant | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                if self.needs(*a) {
                    self.accumulate(adj, *a, g.matmul_bt(self.value(*b))?)?;
                }
                if self.needs(*b) {
                    self.accumulate(adj, *b, self.value(*a).matmul_at(g)?)?;
                }
            }
            Op::MatMulBt(a, b) => {
                // C = A Bᵀ: dA = dC B, dB = dCᵀ A.
                if self.needs(*a) {
                    self.accumulate(adj, *a, g.matmul(self.value(*b))?)?;
                }
                if self.needs(*b) {
                    self.accumulate(adj, *b, g.matmul_at(self.value(*a))?)?;
                }
            }
            Op::Add(a, b) => {
                self.accumulate(adj, *a, g.clone())?;
                self.accumulate(adj, *b, g.clone())?;
            }
            Op::Sub(a, b) => {
                self.accumulate(adj, *a, g.clone())?;
                self.accumulate(adj, *b, g.scale(-1.0))?;
            }
            Op::Scale(a, s) => self.accumulate(adj, *a, g.scale(*s))?,
            Op::AddRowBias(x, b) => {
                self.accumulate(adj, *x, g.clone())?;
                if self.needs(*b) {
                    let mut gb = Matrix::zeros(1, g.cols());
                    for i in 0..g.rows() {
                        for (o, &v) in gb.row_mut(0).iter_mut().zip(g.row(i)) {
                            *o += v;
                        }
                    }
                    self.accumulate(adj, *b, gb)?;
                }
            }
            Op::AddColBias(x, b) => {
                self.accumulate(adj, *x, g.clone())?;
                if self.needs(*b) {
                    let gb = Matrix::from_fn(g.rows(), 1, |i, _| g.row(i).iter().sum());
                    self.accumulate(adj, *b, gb)?;
                }
            }
            Op::ScaleRows(x, factors) => {
                let mut gx = g.clone();
                for (i, &f) in factors.iter().enumerate() {
                    gx.row_mut(i).iter_mut().for_each(|o| *o *= f);
                }
                self.accumulate(adj, *x, gx)?;
            }
            Op::SoftmaxRows(x) => {
                // dx = y ⊙ (dy − rowsum(dy ⊙ y))
                let mut gx = Matrix::zeros(out.rows(), out.cols());
                for i in 0..out.rows() {
                    let (y, dy) = (out.row(i), g.row(i));
                    let inner: f64 = y.iter().zip(dy).map(|(a, b)| a * b).sum();
                    for (j, o) in gx.row_mut(i).iter_mut().enumerate() {
                        *o = y[j] * (dy[j] - inner);
                    }
                }
                self.accumulate(adj, *x, gx)?;
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                normalized,
                inv_std,
            } => {
                let d = out.cols();
                let gain_v = self.value(*gain).as_slice();
                if self.needs(*gain) {
                    let mut gg = Matrix::zeros(1, d);
                    for i in 0..g.rows() {
                        for j in 0..d {
                            gg[(0, j)] += g[(i, j)] * normalized[(i, j)];
                        }
                    }
                    self.accumulate(adj, *gain, gg)?;
                }
                if self.needs(*bias) {
                    let mut gb = Matrix::zeros(1, d);
                    for i in 0..g.rows() {
                        for (o, &v) in gb.row_mut(0).iter_mut().zip(g.row(i)) {
                            *o += v;
                        }
                    }
                    self.accumulate(adj, *bias, gb)?;
                }
                if self.needs(*x) {
                    let mut gx = Matrix::zeros(out.rows(), d);
                    for (i, &inv) in inv_std.iter().enumerate() {
                        let z = normalized.row(i);
                        let dz: Vec<f64> = g.row(i).iter().zip(gain_v).map(|(a, b)| a * b).collect();
                        let mean_dz = dz.iter().sum::<f64>() / d as f64;
                        let mean_dz_z = dz.iter().zip(z).map(|(a, b)| a * b).sum::<f64>() / d as f64;
                        for (j, o) in gx.row_mut(i).iter_mut().enumerate() {
                            *o = inv * (dz[j] - mean_dz - z[j] * mean_dz_z);
                        }
                    }
                    self.accumulate(adj, *x, gx)?;
                }
            }
            Op::ColSlice { x, start } => {
                let src = self.value(*x);
                let mut gx = Matrix::zeros(src.rows(), src.cols());
                for i in 0..g.rows() {
                    gx.row_mut(i)[*start..*start + g.cols()].copy_from_slice(g.row(i));
                }
                self.accumulate(adj, *x, gx)?;
            }
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for &p in parts {
                    let w = self.value(p).cols();
                    if self.needs(p) {
                        self.accumulate(adj, p, g.col_slice(off, w)?)?;
                    }
                    off += w;
                }
            }
            Op::Square(x) => {
                let gx = self.value(*x).hadamard(g)?.scale(2.0);
                self.accumulate(adj, *x, gx)?;
            }
            Op::Mean(x) => {
                let xv = self.value(*x);
                let gx = Matrix::filled(xv.rows(), xv.cols(), g[(0, 0)] / xv.len() as f64);
                self.accumulate(adj, *x, gx)?;
            }
            Op::Sum(x) => {
                let xv = self.value(*x);
                self.accumulate(adj, *x, Matrix::filled(xv.rows(), xv.cols(), g[(0, 0)]))?;
            }
            Op::LogDet { s, inverse } => {
                self.accumulate(adj, *s, inverse.scale(g[(0, 0)]))?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::ParamSet;

    #[test]
    fn linear_map_gradient_is_outer_product() {
        let mut ps = ParamSet::new();
        let w = ps.add("w", Matrix::from_rows(&[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]));
        let x = Matrix::from_rows(&[[0.5], [-1.0], [2.0]]);
        let mut tape = Tape::new();
        let wv = tape.param(w, ps.get(w));
        let xv = tape.constant(x.clone());
        let y = tape.matmul(wv, xv).unwrap();
        let loss = tape.sum(y);
        let g = tape.backward(loss).unwrap();
        let expected = Matrix::from_rows(&[[0.5, -1.0, 2.0], [0.5, -1.0, 2.0]]);
        assert_eq!(g.get(w).unwrap(), &expected);
    }

    #[test]
    fn missing_gradient_is_an_error() {
        let mut tape = Tape::new();
        let c = tape.constant(Matrix::filled(1, 1, 2.0));
        let loss = tape.square(c);
        let g = tape.backward(loss).unwrap();
        assert!(matches!(g.get(ParamId(0)), Err(Error::MissingGradient(_))));
    }

    #[test]
    fn reused_parameter_accumulates() {
        let mut ps = ParamSet::new();
        let w = ps.add("w", Matrix::filled(1, 1, 3.0));
        let mut tape = Tape::new();
        let a = tape.param(w, ps.get(w));
        let b = tape.param(w, ps.get(w));
        let p = tape.matmul(a, b).unwrap();
        let g = tape.backward(p).unwrap();
        assert_eq!(g.get(w).unwrap()[(0, 0)], 6.0);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut tape = Tape::new();
        let c = tape.constant(Matrix::zeros(2, 2));
        assert!(tape.backward(c).is_err());
    }
}
