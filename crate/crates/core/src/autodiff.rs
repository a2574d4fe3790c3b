//! Reverse-mode automatic differentiation on a Wengert tape.
//!
//! Every primitive evaluates eagerly, stores its value on the tape and
//! records its inputs. Because nodes are appended in evaluation order the
//! tape is already topologically sorted, so [`Tape::backward`] is a single
//! reverse sweep.

use crate::tensor::{ShapeError, Tensor};

/// Lower and upper clip applied to probabilities before taking logs.
pub const PROB_CLAMP: f64 = 1e-7;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    AddRowBias(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Sigmoid(Var),
    SumRows(Var),
    GatherRows(Var, Vec<usize>),
    ScaleRows(Var, Vec<f64>),
    Reshape(Var),
    Sum(Var),
    Mean(Var),
    LogSumExp(Var),
    Pick(Var, usize, usize),
    Bce(Var, Vec<f64>),
    BceLogits(Var, Vec<f64>),
    ToggleGains {
        u: Var,
        base: Var,
        weight: Var,
        masks: Tensor,
    },
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Tensor,
}

/// A single-owner record of primitive evaluations.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar loss with respect to every node of a tape.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    /// Gradient for `v`; nodes the loss does not depend on get zeros.
    pub fn wrt(&self, v: Var) -> Tensor {
        match self.grads.get(v.0).and_then(Option::as_ref) {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.shapes[v.0];
                Tensor::zeros(r, c)
            }
        }
    }

    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }
}

fn mismatch(op: &'static str, a: &Tensor, b: &Tensor) -> ShapeError {
    ShapeError::Mismatch {
        op,
        lhs: a.shape(),
        rhs: b.shape(),
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Lexicographic order on rows, used for order-free row sums.
fn canonical_row_order(t: &Tensor) -> Vec<usize> {
    let mut order: Vec<usize> = (0..t.rows()).collect();
    order.sort_by(|&a, &b| {
        t.row(a)
            .iter()
            .zip(t.row(b))
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    order
}

/// Sum of the rows of `t` as a `1 × cols` tensor.
///
/// Rows are accumulated in lexicographic order of their contents, so the
/// result is bitwise identical for every permutation of the rows.
pub fn pooled_row_sum(t: &Tensor) -> Tensor {
    let mut out = Tensor::zeros(1, t.cols());
    for r in canonical_row_order(t) {
        for (o, v) in out.data_mut().iter_mut().zip(t.row(r)) {
            *o += v;
        }
    }
    out
}

pub fn bce_value(p: f64, t: f64) -> f64 {
    let pc = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    -(t * pc.ln() + (1.0 - t) * (1.0 - pc).ln())
}

/// Value of `Σ_k Σ_j w_j [relu(base_kj − m_ki u_ij + u_ij) − relu(base_kj − m_ki u_ij)] / m`
/// for every element `i`: the mean energy change from toggling `i` into
/// each sampled subset.
fn toggle_gains_forward(u: &Tensor, base: &Tensor, weight: &Tensor, masks: &Tensor) -> Tensor {
    let (n, hd) = u.shape();
    let m = base.rows();
    let w = weight.data();
    let mut out = vec![0.0; n];
    for k in 0..m {
        let b = base.row(k);
        for (i, o) in out.iter_mut().enumerate() {
            let ui = u.row(i);
            let in_set = masks.get(k, i);
            let mut acc = 0.0;
            for j in 0..hd {
                let minus = b[j] - in_set * ui[j];
                let plus = minus + ui[j];
                acc += w[j] * (plus.max(0.0) - minus.max(0.0));
            }
            *o += acc;
        }
    }
    let inv_m = 1.0 / m as f64;
    Tensor::row_vector(out.into_iter().map(|v| v * inv_m).collect())
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

    fn push(&mut self, op: Op, value: Tensor) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    /// Records a parameter or constant input.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(Op::Leaf, value)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, ShapeError> {
        let v = self.value(a).matmul(self.value(b))?;
        Ok(self.push(Op::MatMul(a, b), v))
    }

    /// `a + bias`, with a `1 × cols` bias added to every row.
    pub fn add_row_bias(&mut self, a: Var, bias: Var) -> Result<Var, ShapeError> {
        let (av, bv) = (self.value(a), self.value(bias));
        if bv.rows() != 1 || bv.cols() != av.cols() {
            return Err(mismatch("add_row_bias", av, bv));
        }
        let mut out = av.clone();
        for r in 0..out.rows() {
            for (o, b) in out.row_mut(r).iter_mut().zip(bv.data()) {
                *o += b;
            }
        }
        Ok(self.push(Op::AddRowBias(a, bias), out))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, ShapeError> {
        let v = self.value(a).zip_map(self.value(b), "add", |x, y| x + y)?;
        Ok(self.push(Op::Add(a, b), v))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, ShapeError> {
        let v = self.value(a).zip_map(self.value(b), "sub", |x, y| x - y)?;
        Ok(self.push(Op::Sub(a, b), v))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, ShapeError> {
        let v = self.value(a).zip_map(self.value(b), "mul", |x, y| x * y)?;
        Ok(self.push(Op::Mul(a, b), v))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a).map(|x| x * s);
        self.push(Op::Scale(a, s), v)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.max(0.0));
        self.push(Op::Relu(a), v)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(sigmoid);
        self.push(Op::Sigmoid(a), v)
    }

    /// Sum pooling over rows: `r × c → 1 × c`, see [`pooled_row_sum`].
    pub fn sum_rows(&mut self, a: Var) -> Var {
        let v = pooled_row_sum(self.value(a));
        self.push(Op::SumRows(a), v)
    }

    pub fn gather_rows(&mut self, a: Var, index: Vec<usize>) -> Result<Var, ShapeError> {
        let v = self.value(a).gather_rows(&index)?;
        Ok(self.push(Op::GatherRows(a, index), v))
    }

    /// Multiplies row `r` by the constant `scales[r]`.
    pub fn scale_rows(&mut self, a: Var, scales: Vec<f64>) -> Result<Var, ShapeError> {
        let av = self.value(a);
        if scales.len() != av.rows() {
            return Err(ShapeError::Mismatch {
                op: "scale_rows",
                lhs: av.shape(),
                rhs: (scales.len(), 1),
            });
        }
        let mut out = av.clone();
        for (r, s) in scales.iter().enumerate() {
            out.row_mut(r).iter_mut().for_each(|x| *x *= s);
        }
        Ok(self.push(Op::ScaleRows(a, scales), out))
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var, ShapeError> {
        let v = self.value(a).reshape(rows, cols)?;
        Ok(self.push(Op::Reshape(a), v))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s: f64 = self.value(a).data().iter().sum();
        self.push(Op::Sum(a), Tensor::scalar(s))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let s = t.data().iter().sum::<f64>() / t.len().max(1) as f64;
        self.push(Op::Mean(a), Tensor::scalar(s))
    }

    /// `log Σ exp(a)` over all entries, stabilised by the maximum.
    pub fn logsumexp(&mut self, a: Var) -> Result<Var, ShapeError> {
        let t = self.value(a);
        if t.is_empty() {
            return Err(ShapeError::NotScalar {
                op: "logsumexp",
                shape: t.shape(),
            });
        }
        let v = logsumexp(t.data());
        Ok(self.push(Op::LogSumExp(a), Tensor::scalar(v)))
    }

    /// The single entry `a[r, c]` as a scalar.
    pub fn pick(&mut self, a: Var, r: usize, c: usize) -> Result<Var, ShapeError> {
        let t = self.value(a);
        if r >= t.rows() || c >= t.cols() {
            return Err(ShapeError::Index {
                op: "pick",
                index: r * t.cols() + c,
                len: t.len(),
            });
        }
        let v = t.get(r, c);
        Ok(self.push(Op::Pick(a, r, c), Tensor::scalar(v)))
    }

    /// Summed binary cross-entropy of probabilities `p` against constant
    /// targets, with `p` clipped to `[PROB_CLAMP, 1 − PROB_CLAMP]`.
    pub fn bce(&mut self, p: Var, targets: Vec<f64>) -> Result<Var, ShapeError> {
        let pv = self.value(p);
        if targets.len() != pv.len() {
            return Err(ShapeError::Mismatch {
                op: "bce",
                lhs: pv.shape(),
                rhs: (targets.len(), 1),
            });
        }
        let s: f64 = pv
            .data()
            .iter()
            .zip(&targets)
            .map(|(&p, &t)| bce_value(p, t))
            .sum();
        Ok(self.push(Op::Bce(p, targets), Tensor::scalar(s)))
    }

    /// Summed binary cross-entropy of `sigmoid(z)` against constant targets,
    /// evaluated in the logit domain.
    pub fn bce_logits(&mut self, z: Var, targets: Vec<f64>) -> Result<Var, ShapeError> {
        let zv = self.value(z);
        if targets.len() != zv.len() {
            return Err(ShapeError::Mismatch {
                op: "bce_logits",
                lhs: zv.shape(),
                rhs: (targets.len(), 1),
            });
        }
        let s: f64 = zv
            .data()
            .iter()
            .zip(&targets)
            .map(|(&z, &t)| softplus(z) - t * z)
            .sum();
        Ok(self.push(Op::BceLogits(z, targets), Tensor::scalar(s)))
    }

    /// Monte-Carlo marginal gains of a sum-pooled ReLU energy.
    ///
    /// `u` holds per-element pre-activation contributions (`n × h_d`),
    /// `base` the pre-activation of each sampled subset (`m × h_d`),
    /// `weight` the output head (`h_d × 1`) and `masks` the sampled
    /// membership indicators (`m × n`, constant). Output is `1 × n`.
    pub fn toggle_gains(
        &mut self,
        u: Var,
        base: Var,
        weight: Var,
        masks: Tensor,
    ) -> Result<Var, ShapeError> {
        let (uv, bv, wv) = (self.value(u), self.value(base), self.value(weight));
        if bv.cols() != uv.cols() {
            return Err(mismatch("toggle_gains", uv, bv));
        }
        if wv.shape() != (uv.cols(), 1) {
            return Err(mismatch("toggle_gains", uv, wv));
        }
        if masks.shape() != (bv.rows(), uv.rows()) || bv.rows() == 0 {
            return Err(mismatch("toggle_gains", bv, &masks));
        }
        let v = toggle_gains_forward(uv, bv, wv, &masks);
        Ok(self.push(
            Op::ToggleGains {
                u,
                base,
                weight,
                masks,
            },
            v,
        ))
    }

    /// Gradients of the scalar `loss` with respect to every node.
    pub fn backward(&self, loss: Var) -> Result<Gradients, ShapeError> {
        let lv = self.value(loss);
        if lv.shape() != (1, 1) {
            return Err(ShapeError::NotScalar {
                op: "backward",
                shape: lv.shape(),
            });
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::scalar(1.0));
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.propagate(idx, &g, &mut grads)?;
            grads[idx] = Some(g);
        }
        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape()).collect(),
        })
    }

    fn propagate(
        &self,
        idx: usize,
        g: &Tensor,
        grads: &mut [Option<Tensor>],
    ) -> Result<(), ShapeError> {
        let node = &self.nodes[idx];
        let mut acc = |v: Var, contrib: Tensor| -> Result<(), ShapeError> {
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&contrib),
                slot @ None => {
                    *slot = Some(contrib);
                    Ok(())
                }
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                acc(*a, g.matmul_nt(self.value(*b))?)?;
                acc(*b, self.value(*a).matmul_tn(g)?)?;
            }
            Op::AddRowBias(a, bias) => {
                acc(*a, g.clone())?;
                let mut db = Tensor::zeros(1, g.cols());
                for r in 0..g.rows() {
                    for (d, x) in db.data_mut().iter_mut().zip(g.row(r)) {
                        *d += x;
                    }
                }
                acc(*bias, db)?;
            }
            Op::Add(a, b) => {
                acc(*a, g.clone())?;
                acc(*b, g.clone())?;
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone())?;
                acc(*b, g.map(|x| -x))?;
            }
            Op::Mul(a, b) => {
                acc(*a, g.zip_map(self.value(*b), "mul", |x, y| x * y)?)?;
                acc(*b, g.zip_map(self.value(*a), "mul", |x, y| x * y)?)?;
            }
            Op::Scale(a, s) => acc(*a, g.map(|x| x * s))?,
            Op::Relu(a) => {
                let d = g.zip_map(self.value(*a), "relu", |x, y| if y > 0.0 { x } else { 0.0 })?;
                acc(*a, d)?;
            }
            Op::Sigmoid(a) => {
                let d = g.zip_map(&node.value, "sigmoid", |x, y| x * y * (1.0 - y))?;
                acc(*a, d)?;
            }
            Op::SumRows(a) => {
                let (r, c) = self.value(*a).shape();
                let mut d = Tensor::zeros(r, c);
                for i in 0..r {
                    d.row_mut(i).copy_from_slice(g.data());
                }
                acc(*a, d)?;
            }
            Op::GatherRows(a, index) => {
                let (r, c) = self.value(*a).shape();
                let mut d = Tensor::zeros(r, c);
                for (j, &i) in index.iter().enumerate() {
                    for (x, y) in d.row_mut(i).iter_mut().zip(g.row(j)) {
                        *x += y;
                    }
                }
                acc(*a, d)?;
            }
            Op::ScaleRows(a, scales) => {
                let mut d = g.clone();
                for (r, s) in scales.iter().enumerate() {
                    d.row_mut(r).iter_mut().for_each(|x| *x *= s);
                }
                acc(*a, d)?;
            }
            Op::Reshape(a) => {
                let (r, c) = self.value(*a).shape();
                acc(*a, g.reshape(r, c)?)?;
            }
            Op::Sum(a) => {
                let (r, c) = self.value(*a).shape();
                acc(*a, Tensor::filled(r, c, g.item()?))?;
            }
            Op::Mean(a) => {
                let (r, c) = self.value(*a).shape();
                let n = (r * c).max(1) as f64;
                acc(*a, Tensor::filled(r, c, g.item()? / n))?;
            }
            Op::LogSumExp(a) => {
                let out = node.value.item()?;
                let gs = g.item()?;
                acc(*a, self.value(*a).map(|x| gs * (x - out).exp()))?;
            }
            Op::Pick(a, r, c) => {
                let (rows, cols) = self.value(*a).shape();
                let mut d = Tensor::zeros(rows, cols);
                d.set(*r, *c, g.item()?);
                acc(*a, d)?;
            }
            Op::Bce(p, targets) => {
                let gs = g.item()?;
                let pv = self.value(*p);
                let data = pv
                    .data()
                    .iter()
                    .zip(targets)
                    .map(|(&p, &t)| {
                        if p < PROB_CLAMP || p > 1.0 - PROB_CLAMP {
                            0.0
                        } else {
                            gs * (p - t) / (p * (1.0 - p))
                        }
                    })
                    .collect();
                acc(*p, Tensor::from_vec(pv.rows(), pv.cols(), data)?)?;
            }
            Op::BceLogits(z, targets) => {
                let gs = g.item()?;
                let zv = self.value(*z);
                let data = zv
                    .data()
                    .iter()
                    .zip(targets)
                    .map(|(&z, &t)| gs * (sigmoid(z) - t))
                    .collect();
                acc(*z, Tensor::from_vec(zv.rows(), zv.cols(), data)?)?;
            }
            Op::ToggleGains {
                u,
                base,
                weight,
                masks,
            } => {
                let (uv, bv, wv) = (self.value(*u), self.value(*base), self.value(*weight));
                let (n, hd) = uv.shape();
                let m = bv.rows();
                let w = wv.data();
                let mut du = Tensor::zeros(n, hd);
                let mut dbase = Tensor::zeros(m, hd);
                let mut dw = vec![0.0; hd];
                let inv_m = 1.0 / m as f64;
                for k in 0..m {
                    let b = bv.row(k);
                    for i in 0..n {
                        let s = g.data()[i] * inv_m;
                        if s == 0.0 {
                            continue;
                        }
                        let in_set = masks.get(k, i);
                        let ui = uv.row(i);
                        let db = dbase.row_mut(k);
                        let mut dui = vec![0.0; hd];
                        for j in 0..hd {
                            let minus = b[j] - in_set * ui[j];
                            let plus = minus + ui[j];
                            dw[j] += s * (plus.max(0.0) - minus.max(0.0));
                            let d_plus = if plus > 0.0 { s * w[j] } else { 0.0 };
                            let d_minus = if minus > 0.0 { -s * w[j] } else { 0.0 };
                            let d_pre = d_plus + d_minus;
                            db[j] += d_pre;
                            dui[j] += d_plus - in_set * d_pre;
                        }
                        for (x, y) in du.row_mut(i).iter_mut().zip(&dui) {
                            *x += y;
                        }
                    }
                }
                acc(*u, du)?;
                acc(*base, dbase)?;
                acc(*weight, Tensor::column_vector(dw))?;
            }
        }
        Ok(())
    }
}

/// Numerically stable `log Σ exp(xs)`.
pub fn logsumexp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

pub fn sigmoid_scalar(x: f64) -> f64 {
    sigmoid(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_values() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::row_vector(vec![-2.0, 0.0, 3.0]));
        let y = t.relu(x);
        assert_eq!(t.value(y).data(), &[0.0, 0.0, 3.0]);
    }

    #[test]
    fn sigmoid_at_zero_is_half() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::scalar(0.0));
        let y = t.sigmoid(x);
        assert_eq!(t.value(y).item().unwrap(), 0.5);
    }

    #[test]
    fn sum_rows_pools_columns() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap());
        let y = t.sum_rows(x);
        assert_eq!(t.value(y).data(), &[9.0, 12.0]);
    }

    #[test]
    fn relu_sum_gradient_is_piecewise() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::row_vector(vec![-1.0, 2.0]));
        let r = t.relu(x);
        let loss = t.sum(r);
        let g = t.backward(loss).unwrap();
        assert_eq!(g.wrt(x).data(), &[0.0, 1.0]);
    }

    #[test]
    fn sigmoid_gradient_at_origin_is_quarter() {
        let mut t = Tape::new();
        let w = t.leaf(Tensor::scalar(0.0));
        let x = t.leaf(Tensor::scalar(1.0));
        let wx = t.matmul(w, x).unwrap();
        let loss = t.sigmoid(wx);
        let g = t.backward(loss).unwrap();
        assert_eq!(g.wrt(w).item().unwrap(), 0.25);
    }

    #[test]
    fn backward_rejects_non_scalar_loss() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::row_vector(vec![1.0, 2.0]));
        assert!(matches!(
            t.backward(x),
            Err(ShapeError::NotScalar { .. })
        ));
    }

    #[test]
    fn unreached_leaf_gets_zero_gradient() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::row_vector(vec![1.0, 2.0]));
        let unused = t.leaf(Tensor::zeros(2, 3));
        let loss = t.sum(x);
        let g = t.backward(loss).unwrap();
        assert_eq!(g.wrt(unused), Tensor::zeros(2, 3));
        assert!(g.get(unused).is_none());
    }

    #[test]
    fn shape_errors_name_the_op() {
        let mut t = Tape::new();
        let a = t.leaf(Tensor::zeros(2, 3));
        let b = t.leaf(Tensor::zeros(3, 2));
        let err = t.add(a, b).unwrap_err();
        assert_eq!(err.to_string(), "add: incompatible shapes (2, 3) and (3, 2)");
        let bias = t.leaf(Tensor::zeros(1, 2));
        assert!(t.add_row_bias(a, bias).is_err());
    }

    #[test]
    fn bce_clamps_probabilities() {
        let mut t = Tape::new();
        let p = t.leaf(Tensor::row_vector(vec![1.0, 0.0]));
        let l = t.bce(p, vec![0.0, 1.0]).unwrap();
        let expected = -2.0 * PROB_CLAMP.ln();
        assert!((t.value(l).item().unwrap() - expected).abs() < 1e-9);
    }

    #[test]
    fn logsumexp_is_stable() {
        assert!((logsumexp(&[1000.0, 1000.0]) - (1000.0 + 2f64.ln())).abs() < 1e-9);
        assert_eq!(logsumexp(&[f64::NEG_INFINITY]), f64::NEG_INFINITY);
    }
}
