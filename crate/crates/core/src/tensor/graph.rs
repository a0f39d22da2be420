//! Tape of differentiable operations.
//!
//! A [`Graph`] records every operation applied during one forward pass and
//! replays them in reverse in [`Graph::backward`]. Parameters are read from a
//! borrowed [`ParameterStore`] without copying; their gradients come back as a
//! separate [`Gradients`] buffer so several tapes can share one store.

use super::value::{matmul, matmul_nt, matmul_tn};
use super::{Gradients, ParamId, ParameterStore, Tensor, TensorError};

/// Epsilon added to the row variance in [`Graph::layer_norm`].
pub const LAYER_NORM_EPS: f64 = 1e-9;

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Constant,
    Param(ParamId),
    MatMul(usize, usize),
    MatMulNt(usize, usize),
    Add(usize, usize),
    Scale(usize, f64),
    MaskedSoftmax(usize),
    LayerNorm {
        x: usize,
        gamma: usize,
        beta: usize,
        xhat: Tensor,
        inv_std: Vec<f64>,
    },
    Relu(usize),
    Embedding {
        table: usize,
        idx: Vec<usize>,
    },
    ConcatRows(Vec<usize>),
    ConcatCols(Vec<usize>),
    SliceCols {
        x: usize,
        start: usize,
    },
    SliceRows {
        x: usize,
        start: usize,
    },
    SumRows(usize),
    SumAll(usize),
    Log(usize),
    Gather {
        x: usize,
        idx: Vec<usize>,
    },
}

#[derive(Debug)]
struct Node {
    op: Op,
    /// `None` only for parameters, whose value lives in the store.
    value: Option<Tensor>,
    requires_grad: bool,
}

/// Forward tape bound to one parameter snapshot.
pub struct Graph<'s> {
    store: &'s ParameterStore,
    nodes: Vec<Node>,
}

impl<'s> Graph<'s> {
    pub fn new(store: &'s ParameterStore) -> Self {
        Self {
            store,
            nodes: Vec::with_capacity(256),
        }
    }

    pub fn store(&self) -> &'s ParameterStore {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        self.val(v.0)
    }

    fn val(&self, i: usize) -> &Tensor {
        let node = &self.nodes[i];
        match (&node.value, &node.op) {
            (Some(t), _) => t,
            (None, Op::Param(id)) => self.store.value(*id),
            (None, _) => unreachable!("non-parameter node without a value"),
        }
    }

    fn push(&mut self, op: Op, value: Tensor, parents: &[usize]) -> Var {
        let requires_grad = parents.iter().any(|&p| self.nodes[p].requires_grad);
        self.nodes.push(Node {
            op,
            value: Some(value),
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node {
            op: Op::Constant,
            value: Some(t),
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        self.nodes.push(Node {
            op: Op::Param(id),
            value: None,
            requires_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (ta, tb) = (self.val(a.0), self.val(b.0));
        if ta.cols() != tb.rows() {
            return Err(TensorError::shape("matmul", ta, tb));
        }
        let out = matmul(ta, tb);
        Ok(self.push(Op::MatMul(a.0, b.0), out, &[a.0, b.0]))
    }

    /// `a · bᵀ`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (ta, tb) = (self.val(a.0), self.val(b.0));
        if ta.cols() != tb.cols() {
            return Err(TensorError::shape("matmul_nt", ta, tb));
        }
        let out = matmul_nt(ta, tb);
        Ok(self.push(Op::MatMulNt(a.0, b.0), out, &[a.0, b.0]))
    }

    /// Elementwise sum; `b` may be a single row broadcast over the rows of `a`.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (ta, tb) = (self.val(a.0), self.val(b.0));
        let out = if ta.shape() == tb.shape() {
            let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x + y).collect();
            Tensor::new(ta.rows(), ta.cols(), data)?
        } else if tb.rows() == 1 && tb.cols() == ta.cols() {
            let c = ta.cols();
            let data = ta
                .data()
                .iter()
                .enumerate()
                .map(|(i, x)| x + tb.data()[i % c])
                .collect();
            Tensor::new(ta.rows(), c, data)?
        } else {
            return Err(TensorError::shape("add", ta, tb));
        };
        Ok(self.push(Op::Add(a.0, b.0), out, &[a.0, b.0]))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let ta = self.val(a.0);
        let data = ta.data().iter().map(|x| x * s).collect();
        let out = Tensor::new(ta.rows(), ta.cols(), data).expect("same shape");
        self.push(Op::Scale(a.0, s), out, &[a.0])
    }

    /// Row-wise softmax restricted to the columns where `mask` is true.
    ///
    /// Masked columns come out exactly zero. `mask`, when given, has one flag
    /// per column and applies to every row.
    pub fn masked_softmax(&mut self, a: Var, mask: Option<&[bool]>) -> Result<Var, TensorError> {
        let ta = self.val(a.0);
        let (rows, cols) = (ta.rows(), ta.cols());
        if let Some(m) = mask {
            if m.len() != cols {
                return Err(TensorError::MaskLength {
                    expected: cols,
                    got: m.len(),
                });
            }
        }
        let valid = |j: usize| mask.is_none_or(|m| m[j]);
        let mut out = vec![0.0; rows * cols];
        for r in 0..rows {
            let x = ta.row_slice(r);
            let max = (0..cols)
                .filter(|&j| valid(j))
                .map(|j| x[j])
                .fold(f64::NEG_INFINITY, f64::max);
            if max == f64::NEG_INFINITY {
                return Err(TensorError::FullyMasked { row: r });
            }
            let o = &mut out[r * cols..(r + 1) * cols];
            let mut sum = 0.0;
            for j in 0..cols {
                if valid(j) {
                    o[j] = (x[j] - max).exp();
                    sum += o[j];
                }
            }
            o.iter_mut().for_each(|v| *v /= sum);
        }
        let out = Tensor::new(rows, cols, out)?;
        Ok(self.push(Op::MaskedSoftmax(a.0), out, &[a.0]))
    }

    /// Row-wise normalization followed by the affine map `gamma ⊙ x̂ + beta`,
    /// with `gamma` and `beta` single rows.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var, TensorError> {
        let (tx, tg, tb) = (self.val(x.0), self.val(gamma.0), self.val(beta.0));
        let (rows, cols) = (tx.rows(), tx.cols());
        if tg.shape() != [1, cols] || tb.shape() != [1, cols] {
            return Err(TensorError::shape("layer_norm", tx, tg));
        }
        let mut xhat = vec![0.0; rows * cols];
        let mut out = vec![0.0; rows * cols];
        let mut inv_std = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = tx.row_slice(r);
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
            let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            inv_std.push(inv);
            for j in 0..cols {
                let h = (row[j] - mean) * inv;
                xhat[r * cols + j] = h;
                out[r * cols + j] = tg.data()[j] * h + tb.data()[j];
            }
        }
        let out = Tensor::new(rows, cols, out)?;
        let xhat = Tensor::new(rows, cols, xhat)?;
        Ok(self.push(
            Op::LayerNorm {
                x: x.0,
                gamma: gamma.0,
                beta: beta.0,
                xhat,
                inv_std,
            },
            out,
            &[x.0, gamma.0, beta.0],
        ))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let ta = self.val(a.0);
        let data = ta.data().iter().map(|x| x.max(0.0)).collect();
        let out = Tensor::new(ta.rows(), ta.cols(), data).expect("same shape");
        self.push(Op::Relu(a.0), out, &[a.0])
    }

    /// Rows of `table` picked by `idx`, in order.
    pub fn embedding(&mut self, table: Var, idx: &[usize]) -> Result<Var, TensorError> {
        let t = self.val(table.0);
        let cols = t.cols();
        let mut data = Vec::with_capacity(idx.len() * cols);
        for &i in idx {
            if i >= t.rows() {
                return Err(TensorError::IndexOutOfRange {
                    op: "embedding",
                    index: i,
                    bound: t.rows(),
                });
            }
            data.extend_from_slice(t.row_slice(i));
        }
        let out = Tensor::new(idx.len(), cols, data)?;
        Ok(self.push(
            Op::Embedding {
                table: table.0,
                idx: idx.to_vec(),
            },
            out,
            &[table.0],
        ))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        let cols = self.val(parts[0].0).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for p in parts {
            let t = self.val(p.0);
            if t.cols() != cols {
                return Err(TensorError::shape("concat_rows", self.val(parts[0].0), t));
            }
            rows += t.rows();
            data.extend_from_slice(t.data());
        }
        let out = Tensor::new(rows, cols, data)?;
        let ids: Vec<usize> = parts.iter().map(|p| p.0).collect();
        Ok(self.push(Op::ConcatRows(ids.clone()), out, &ids))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        let rows = self.val(parts[0].0).rows();
        let mut cols = 0;
        for p in parts {
            let t = self.val(p.0);
            if t.rows() != rows {
                return Err(TensorError::shape("concat_cols", self.val(parts[0].0), t));
            }
            cols += t.cols();
        }
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for p in parts {
                data.extend_from_slice(self.val(p.0).row_slice(r));
            }
        }
        let out = Tensor::new(rows, cols, data)?;
        let ids: Vec<usize> = parts.iter().map(|p| p.0).collect();
        Ok(self.push(Op::ConcatCols(ids.clone()), out, &ids))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var, TensorError> {
        let t = self.val(x.0);
        if start + len > t.cols() {
            return Err(TensorError::IndexOutOfRange {
                op: "slice_cols",
                index: start + len,
                bound: t.cols(),
            });
        }
        let mut data = Vec::with_capacity(t.rows() * len);
        for r in 0..t.rows() {
            data.extend_from_slice(&t.row_slice(r)[start..start + len]);
        }
        let out = Tensor::new(t.rows(), len, data)?;
        Ok(self.push(Op::SliceCols { x: x.0, start }, out, &[x.0]))
    }

    /// Rows `start..start + len` of `x`.
    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var, TensorError> {
        let t = self.val(x.0);
        if start + len > t.rows() {
            return Err(TensorError::IndexOutOfRange {
                op: "slice_rows",
                index: start + len,
                bound: t.rows(),
            });
        }
        let c = t.cols();
        let data = t.data()[start * c..(start + len) * c].to_vec();
        let out = Tensor::new(len, c, data)?;
        Ok(self.push(Op::SliceRows { x: x.0, start }, out, &[x.0]))
    }

    /// Column sums as a single row.
    pub fn sum_rows(&mut self, x: Var) -> Var {
        let t = self.val(x.0);
        let mut out = vec![0.0; t.cols()];
        for r in 0..t.rows() {
            for (o, v) in out.iter_mut().zip(t.row_slice(r)) {
                *o += v;
            }
        }
        let out = Tensor::row(&out);
        self.push(Op::SumRows(x.0), out, &[x.0])
    }

    pub fn sum_all(&mut self, x: Var) -> Var {
        let s = self.val(x.0).data().iter().sum();
        self.push(Op::SumAll(x.0), Tensor::scalar(s), &[x.0])
    }

    pub fn log(&mut self, x: Var) -> Var {
        let t = self.val(x.0);
        let data = t.data().iter().map(|v| v.ln()).collect();
        let out = Tensor::new(t.rows(), t.cols(), data).expect("same shape");
        self.push(Op::Log(x.0), out, &[x.0])
    }

    /// Picks column `idx[r]` from each row `r`, giving an `n×1` column.
    pub fn gather(&mut self, x: Var, idx: &[usize]) -> Result<Var, TensorError> {
        let t = self.val(x.0);
        if idx.len() != t.rows() {
            return Err(TensorError::MaskLength {
                expected: t.rows(),
                got: idx.len(),
            });
        }
        let mut data = Vec::with_capacity(idx.len());
        for (r, &c) in idx.iter().enumerate() {
            if c >= t.cols() {
                return Err(TensorError::IndexOutOfRange {
                    op: "gather",
                    index: c,
                    bound: t.cols(),
                });
            }
            data.push(t.get(r, c));
        }
        let out = Tensor::new(idx.len(), 1, data)?;
        Ok(self.push(
            Op::Gather {
                x: x.0,
                idx: idx.to_vec(),
            },
            out,
            &[x.0],
        ))
    }

    /// Reverse sweep from a scalar `loss`, returning d loss / d parameter for
    /// every parameter reachable from it. The tape is left intact.
    pub fn backward(&self, loss: Var) -> Result<Gradients, TensorError> {
        let shape = self.val(loss.0).shape();
        if shape != [1, 1] {
            return Err(TensorError::NotScalar { shape });
        }
        let mut out = Gradients::new(self.store.len());
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            match &node.op {
                Op::Constant => {}
                Op::Param(id) => out.add(*id, &g),
                Op::MatMul(a, b) => {
                    let da = matmul_nt(&g, self.val(*b));
                    let db = matmul_tn(self.val(*a), &g);
                    self.send(&mut grads, *a, da);
                    self.send(&mut grads, *b, db);
                }
                Op::MatMulNt(a, b) => {
                    let da = matmul(&g, self.val(*b));
                    let db = matmul_tn(&g, self.val(*a));
                    self.send(&mut grads, *a, da);
                    self.send(&mut grads, *b, db);
                }
                Op::Add(a, b) => {
                    let tb = self.val(*b);
                    let db = if tb.shape() == g.shape() {
                        g.clone()
                    } else {
                        column_sums(&g)
                    };
                    self.send(&mut grads, *b, db);
                    self.send(&mut grads, *a, g);
                }
                Op::Scale(a, s) => {
                    let mut d = g;
                    d.data_mut().iter_mut().for_each(|v| *v *= s);
                    self.send(&mut grads, *a, d);
                }
                Op::MaskedSoftmax(a) => {
                    let y = node.value.as_ref().expect("owned value");
                    let cols = y.cols();
                    let mut d = vec![0.0; y.len()];
                    for r in 0..y.rows() {
                        let yr = y.row_slice(r);
                        let gr = g.row_slice(r);
                        let dot: f64 = yr.iter().zip(gr).map(|(p, q)| p * q).sum();
                        for j in 0..cols {
                            d[r * cols + j] = yr[j] * (gr[j] - dot);
                        }
                    }
                    let d = Tensor::new(y.rows(), cols, d)?;
                    self.send(&mut grads, *a, d);
                }
                Op::LayerNorm {
                    x,
                    gamma,
                    beta,
                    xhat,
                    inv_std,
                } => {
                    let tg = self.val(*gamma);
                    let (rows, cols) = (xhat.rows(), xhat.cols());
                    let n = cols as f64;
                    let mut dgamma = vec![0.0; cols];
                    let mut dbeta = vec![0.0; cols];
                    let mut dx = vec![0.0; rows * cols];
                    let mut dxhat = vec![0.0; cols];
                    for r in 0..rows {
                        let gr = g.row_slice(r);
                        let hr = xhat.row_slice(r);
                        for j in 0..cols {
                            dgamma[j] += gr[j] * hr[j];
                            dbeta[j] += gr[j];
                            dxhat[j] = gr[j] * tg.data()[j];
                        }
                        let s1: f64 = dxhat.iter().sum();
                        let s2: f64 = dxhat.iter().zip(hr).map(|(a, b)| a * b).sum();
                        for j in 0..cols {
                            dx[r * cols + j] = inv_std[r] / n * (n * dxhat[j] - s1 - hr[j] * s2);
                        }
                    }
                    self.send(&mut grads, *gamma, Tensor::row(&dgamma));
                    self.send(&mut grads, *beta, Tensor::row(&dbeta));
                    self.send(&mut grads, *x, Tensor::new(rows, cols, dx)?);
                }
                Op::Relu(a) => {
                    let ta = self.val(*a);
                    let mut d = g;
                    for (dv, xv) in d.data_mut().iter_mut().zip(ta.data()) {
                        if *xv <= 0.0 {
                            *dv = 0.0;
                        }
                    }
                    self.send(&mut grads, *a, d);
                }
                Op::Embedding { table, idx } => {
                    let tt = self.val(*table);
                    let cols = tt.cols();
                    let mut d = Tensor::zeros(tt.rows(), cols);
                    for (r, &i) in idx.iter().enumerate() {
                        let dst = &mut d.data_mut()[i * cols..(i + 1) * cols];
                        for (o, v) in dst.iter_mut().zip(g.row_slice(r)) {
                            *o += v;
                        }
                    }
                    self.send(&mut grads, *table, d);
                }
                Op::ConcatRows(parts) => {
                    let cols = g.cols();
                    let mut offset = 0;
                    for &p in parts {
                        let rows = self.val(p).rows();
                        let data = g.data()[offset * cols..(offset + rows) * cols].to_vec();
                        offset += rows;
                        self.send(&mut grads, p, Tensor::new(rows, cols, data)?);
                    }
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let pc = self.val(p).cols();
                        let mut data = Vec::with_capacity(g.rows() * pc);
                        for r in 0..g.rows() {
                            data.extend_from_slice(&g.row_slice(r)[offset..offset + pc]);
                        }
                        offset += pc;
                        self.send(&mut grads, p, Tensor::new(g.rows(), pc, data)?);
                    }
                }
                Op::SliceCols { x, start } => {
                    let tx = self.val(*x);
                    let mut d = Tensor::zeros(tx.rows(), tx.cols());
                    let (c, len) = (tx.cols(), g.cols());
                    for r in 0..g.rows() {
                        d.data_mut()[r * c + start..r * c + start + len]
                            .copy_from_slice(g.row_slice(r));
                    }
                    self.send(&mut grads, *x, d);
                }
                Op::SliceRows { x, start } => {
                    let tx = self.val(*x);
                    let mut d = Tensor::zeros(tx.rows(), tx.cols());
                    let c = tx.cols();
                    d.data_mut()[start * c..start * c + g.len()].copy_from_slice(g.data());
                    self.send(&mut grads, *x, d);
                }
                Op::SumRows(x) => {
                    let rows = self.val(*x).rows();
                    let mut data = Vec::with_capacity(rows * g.cols());
                    for _ in 0..rows {
                        data.extend_from_slice(g.data());
                    }
                    self.send(&mut grads, *x, Tensor::new(rows, g.cols(), data)?);
                }
                Op::SumAll(x) => {
                    let [r, c] = self.val(*x).shape();
                    self.send(&mut grads, *x, Tensor::filled(r, c, g.data()[0]));
                }
                Op::Log(x) => {
                    let tx = self.val(*x);
                    let mut d = g;
                    for (dv, xv) in d.data_mut().iter_mut().zip(tx.data()) {
                        // log(0) entries that nothing downstream reads stay at 0.
                        if *dv != 0.0 {
                            *dv /= xv;
                        }
                    }
                    self.send(&mut grads, *x, d);
                }
                Op::Gather { x, idx } => {
                    let [r, c] = self.val(*x).shape();
                    let mut d = Tensor::zeros(r, c);
                    for (row, &col) in idx.iter().enumerate() {
                        d.data_mut()[row * c + col] = g.data()[row];
                    }
                    self.send(&mut grads, *x, d);
                }
            }
        }
        Ok(out)
    }

    fn send(&self, grads: &mut [Option<Tensor>], to: usize, g: Tensor) {
        if !self.nodes[to].requires_grad {
            return;
        }
        match &mut grads[to] {
            Some(acc) => acc.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }
}

fn column_sums(g: &Tensor) -> Tensor {
    let mut out = vec![0.0; g.cols()];
    for r in 0..g.rows() {
        for (o, v) in out.iter_mut().zip(g.row_slice(r)) {
            *o += v;
        }
    }
    Tensor::row(&out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store_with(name: &str, t: Tensor) -> (ParameterStore, ParamId) {
        let mut s = ParameterStore::new();
        let id = s.insert(name, t).unwrap();
        (s, id)
    }

    #[test]
    fn uniform_logits_give_uniform_probs() {
        let s = ParameterStore::new();
        let mut g = Graph::new(&s);
        let x = g.constant(Tensor::row(&[0.0, 0.0, 0.0]));
        let y = g.masked_softmax(x, Some(&[true, true, true])).unwrap();
        for p in g.value(y).data() {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn single_feasible_entry_gets_all_mass() {
        let s = ParameterStore::new();
        let mut g = Graph::new(&s);
        let x = g.constant(Tensor::row(&[5.0, 9.0, 2.0]));
        let y = g.masked_softmax(x, Some(&[true, false, false])).unwrap();
        assert_eq!(g.value(y).data(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn fully_masked_row_is_an_error() {
        let s = ParameterStore::new();
        let mut g = Graph::new(&s);
        let x = g.constant(Tensor::row(&[1.0, 2.0]));
        assert!(matches!(
            g.masked_softmax(x, Some(&[false, false])),
            Err(TensorError::FullyMasked { row: 0 })
        ));
    }

    #[test]
    fn matmul_of_ones_counts() {
        let s = ParameterStore::new();
        let mut g = Graph::new(&s);
        let a = g.constant(Tensor::filled(2, 3, 1.0));
        let b = g.constant(Tensor::filled(3, 2, 1.0));
        let c = g.matmul(a, b).unwrap();
        assert_eq!(g.value(c), &Tensor::filled(2, 2, 3.0));
        assert!(g.matmul(a, a).is_err());
    }

    #[test]
    fn sum_gives_unit_gradient() {
        let (s, id) = store_with("w", Tensor::filled(2, 3, 0.3));
        let mut g = Graph::new(&s);
        let w = g.param(id);
        let loss = g.sum_all(w);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(id).unwrap(), &Tensor::filled(2, 3, 1.0));
    }

    #[test]
    fn repeated_backward_accumulates() {
        let (mut s, id) = store_with("w", Tensor::row(&[0.1, -0.4, 0.9]));
        let grads = {
            let mut g = Graph::new(&s);
            let w = g.param(id);
            let p = g.masked_softmax(w, None).unwrap();
            let lp = g.log(p);
            let pick = g.gather(lp, &[1]).unwrap();
            let loss = g.sum_all(pick);
            (g.backward(loss).unwrap(), g.backward(loss).unwrap())
        };
        s.accumulate(&grads.0);
        let once = s.grad(id).clone();
        s.accumulate(&grads.1);
        for (a, b) in s.grad(id).data().iter().zip(once.data()) {
            assert_eq!(*a, 2.0 * b);
        }
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let (s, id) = store_with("w", Tensor::filled(2, 2, 1.0));
        let mut g = Graph::new(&s);
        let w = g.param(id);
        assert!(matches!(
            g.backward(w),
            Err(TensorError::NotScalar { shape: [2, 2] })
        ));
    }

    #[test]
    fn masked_entries_receive_zero_gradient() {
        let (s, id) = store_with("w", Tensor::row(&[0.3, 1.2, -0.7, 0.0]));
        let mut g = Graph::new(&s);
        let w = g.param(id);
        let p = g.masked_softmax(w, Some(&[true, false, true, false])).unwrap();
        let lp = g.log(p);
        let pick = g.gather(lp, &[2]).unwrap();
        let loss = g.sum_all(pick);
        let grads = g.backward(loss).unwrap();
        let d = grads.get(id).unwrap().data();
        assert_eq!(d[1], 0.0);
        assert_eq!(d[3], 0.0);
        assert!(d[0] != 0.0);
    }

    #[test]
    fn layer_norm_is_standardized_before_affine() {
        let s = ParameterStore::new();
        let mut g = Graph::new(&s);
        let x = g.constant(Tensor::from_rows(&[vec![1.0, 5.0, -2.0, 0.5], vec![10.0, 11.0, 9.0, 30.0]]).unwrap());
        let gamma = g.constant(Tensor::filled(1, 4, 1.0));
        let beta = g.constant(Tensor::zeros(1, 4));
        let y = g.layer_norm(x, gamma, beta).unwrap();
        let t = g.value(y);
        for r in 0..2 {
            let row = t.row_slice(r);
            let mean = row.iter().sum::<f64>() / 4.0;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0;
            assert!(mean.abs() < 1e-9);
            assert!((var - 1.0).abs() < 1e-6);
        }
    }
}
