//! Reverse-mode automatic differentiation over [`Tensor`] values.
//!
//! A [`Tape`] evaluates operations eagerly and records each one. Parameters
//! enter as borrowed leaves of a [`ParamSet`]; everything else is owned by
//! the tape. [`Tape::backprop`] replays the record in reverse creation
//! order, which is a valid reverse topological order because an operation
//! can only refer to values created before it.
//!
//! The primitive set is deliberately small: matrix multiply, add and
//! elementwise multiply (both broadcasting a `[1, n]` row over the leading
//! dimension), tanh, sigmoid, ReLU, exp, log, row-wise softmax,
//! concatenation, row lookup and sum/mean. Everything else in
//! [`Tape`]'s convenience methods is composed from these.

use crate::error::{Error, Result};
use crate::numcore::tensor::{gemm, softmax_in_place};
use crate::numcore::{Gradients, ParamId, ParamSet, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Rows,
    Cols,
}

#[derive(Debug)]
enum Op {
    Constant,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    Tanh(Var),
    Sigmoid(Var),
    Relu(Var),
    Exp(Var),
    Log(Var),
    Softmax(Var),
    Concat(Vec<Var>, Axis),
    Lookup(Var, Vec<usize>),
    Sum(Var),
    Mean(Var),
    Reshape(Var),
}

enum Value<'p> {
    Borrowed(&'p Tensor),
    Owned(Tensor),
}

impl Value<'_> {
    fn get(&self) -> &Tensor {
        match self {
            Value::Borrowed(t) => t,
            Value::Owned(t) => t,
        }
    }
}

struct Node<'p> {
    value: Value<'p>,
    op: Op,
    needs_grad: bool,
}

/// Forward-evaluating operation recorder.
pub struct Tape<'p> {
    params: &'p ParamSet,
    nodes: Vec<Node<'p>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Broadcast {
    Same,
    Row,
}

fn broadcast_kind(op: &'static str, a: &Tensor, b: &Tensor) -> Result<Broadcast> {
    if a.shape() == b.shape() {
        Ok(Broadcast::Same)
    } else if b.rows() == 1 && b.cols() == a.cols() && b.shape().len() <= 2 && a.shape().len() == 2
    {
        Ok(Broadcast::Row)
    } else {
        Err(Error::shape(
            op,
            format!("{:?} with {:?}", a.shape(), b.shape()),
        ))
    }
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamSet) -> Self {
        Tape {
            params,
            nodes: Vec::new(),
        }
    }

    pub fn params(&self) -> &'p ParamSet {
        self.params
    }

    /// Number of recorded operations.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        self.nodes[v.0].value.get()
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        self.nodes.push(Node {
            value: Value::Owned(value),
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node {
            value: Value::Owned(t),
            op: Op::Constant,
            needs_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        self.nodes.push(Node {
            value: Value::Borrowed(self.params.get(id)),
            op: Op::Param(id),
            needs_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        Ok(self.push(out, Op::MatMul(a, b), &[a, b]))
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor> {
        let (ta, tb) = (self.value(a), self.value(b));
        let kind = broadcast_kind(name, ta, tb)?;
        let mut out = ta.clone();
        match kind {
            Broadcast::Same => {
                for (o, &y) in out.data_mut().iter_mut().zip(tb.data()) {
                    *o = f(*o, y);
                }
            }
            Broadcast::Row => {
                let n = tb.cols();
                for row in out.data_mut().chunks_mut(n) {
                    for (o, &y) in row.iter_mut().zip(tb.data()) {
                        *o = f(*o, y);
                    }
                }
            }
        }
        Ok(out)
    }

    /// `a + b`; `b` may be a `[1, n]` row broadcast over the rows of `a`.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.binary("add", a, b, |x, y| x + y)?;
        Ok(self.push(out, Op::Add(a, b), &[a, b]))
    }

    /// Elementwise `a * b` with the same broadcasting rule as [`Tape::add`].
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.binary("mul", a, b, |x, y| x * y)?;
        Ok(self.push(out, Op::Mul(a, b), &[a, b]))
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let out = self.value(a).map(f);
        self.push(out, op, &[a])
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, f64::tanh, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, |x| 1.0 / (1.0 + (-x).exp()), Op::Sigmoid(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, |x| if x > 0.0 { x } else { 0.0 }, Op::Relu(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, f64::exp, Op::Exp(a))
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.unary(a, f64::ln, Op::Log(a))
    }

    /// Softmax over the last axis, independently per row.
    pub fn softmax(&mut self, a: Var) -> Var {
        let mut out = self.value(a).clone();
        let n = out.cols();
        for row in out.data_mut().chunks_mut(n) {
            softmax_in_place(row);
        }
        self.push(out, Op::Softmax(a), &[a])
    }

    pub fn concat(&mut self, parts: &[Var], axis: Axis) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::invalid("concat of zero tensors"))?;
        let out = match axis {
            Axis::Rows => {
                let cols = self.value(first).cols();
                let mut data = Vec::new();
                let mut rows = 0;
                for &p in parts {
                    let t = self.value(p);
                    if t.cols() != cols {
                        return Err(Error::shape("concat", "column counts differ"));
                    }
                    rows += t.rows();
                    data.extend_from_slice(t.data());
                }
                Tensor::new(&[rows, cols], data)?
            }
            Axis::Cols => {
                let rows = self.value(first).rows();
                if parts.iter().any(|&p| self.value(p).rows() != rows) {
                    return Err(Error::shape("concat", "row counts differ"));
                }
                let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
                let mut data = Vec::with_capacity(rows * cols);
                for r in 0..rows {
                    for &p in parts {
                        data.extend_from_slice(self.value(p).row_slice(r));
                    }
                }
                Tensor::new(&[rows, cols], data)?
            }
        };
        Ok(self.push(out, Op::Concat(parts.to_vec(), axis), parts))
    }

    /// Gathers rows of `table` (one output row per id).
    pub fn lookup(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let t = self.value(table);
        let rows = t.rows();
        if ids.is_empty() {
            return Err(Error::invalid("lookup with no ids"));
        }
        if let Some(&bad) = ids.iter().find(|&&i| i >= rows) {
            return Err(Error::invalid(format!(
                "lookup id {bad} out of range for {rows} rows"
            )));
        }
        let mut data = Vec::with_capacity(ids.len() * t.cols());
        for &i in ids {
            data.extend_from_slice(t.row_slice(i));
        }
        let out = Tensor::new(&[ids.len(), t.cols()], data)?;
        Ok(self.push(out, Op::Lookup(table, ids.to_vec()), &[table]))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        self.push(Tensor::scalar(s), Op::Sum(a), &[a])
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let s = t.sum() / t.len() as f64;
        self.push(Tensor::scalar(s), Op::Mean(a), &[a])
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(a).clone().reshaped(shape)?;
        Ok(self.push(out, Op::Reshape(a), &[a]))
    }

    // Composites.

    /// `a * c` for a constant `c`.
    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let k = self.constant(Tensor::full(&[1, self.value(a).cols()], c));
        self.mul(a, k)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let neg = self.scale(b, -1.0)?;
        self.add(a, neg)
    }

    pub fn add_const(&mut self, a: Var, c: f64) -> Result<Var> {
        let k = self.constant(Tensor::full(&[1, self.value(a).cols()], c));
        self.add(a, k)
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        self.mul(a, a)
    }

    /// `x w + b` with `b` a `[1, n]` bias row.
    pub fn affine(&mut self, x: Var, w: ParamId, b: ParamId) -> Result<Var> {
        let w = self.param(w);
        let b = self.param(b);
        let xw = self.matmul(x, w)?;
        self.add(xw, b)
    }

    /// Clamps into `[lo, hi]` as `lo + relu(x - lo) - relu(x - hi)`.
    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Result<Var> {
        let below = self.add_const(x, -lo)?;
        let below = self.relu(below);
        let above = self.add_const(x, -hi)?;
        let above = self.relu(above);
        let inner = self.sub(below, above)?;
        self.add_const(inner, lo)
    }

    /// Gradients of the scalar `loss` with respect to every parameter of the
    /// tape's [`ParamSet`]. Parameters not reached by the loss get zeros.
    pub fn backprop(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(Error::shape(
                "backprop",
                format!("loss must be scalar, got {:?}", lv.shape()),
            ));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::full(lv.shape(), 1.0));
        let mut out = Gradients::zeros_like(self.params);

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let y = node.value.get();
            match &node.op {
                Op::Constant => {}
                Op::Param(id) => {
                    out.get_mut(*id).add_scaled(&g, 1.0);
                }
                Op::MatMul(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                    if self.nodes[a.0].needs_grad {
                        let mut da = vec![0.0; m * k];
                        gemm(m, n, k, g.data(), false, tb.data(), true, &mut da, 0.0);
                        accumulate(&mut grads, *a, Tensor::new(ta.shape(), da)?);
                    }
                    if self.nodes[b.0].needs_grad {
                        let mut db = vec![0.0; k * n];
                        gemm(k, m, n, ta.data(), true, g.data(), false, &mut db, 0.0);
                        accumulate(&mut grads, *b, Tensor::new(tb.shape(), db)?);
                    }
                }
                Op::Add(a, b) => {
                    let tb = self.value(*b);
                    if self.nodes[a.0].needs_grad {
                        accumulate(&mut grads, *a, g.clone());
                    }
                    if self.nodes[b.0].needs_grad {
                        let gb = reduce_to(&g, tb);
                        accumulate(&mut grads, *b, gb);
                    }
                }
                Op::Mul(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let row = ta.shape() != tb.shape();
                    if self.nodes[a.0].needs_grad {
                        let mut ga = g.clone();
                        let n = tb.len();
                        for (i, v) in ga.data_mut().iter_mut().enumerate() {
                            *v *= tb.data()[if row { i % n } else { i }];
                        }
                        accumulate(&mut grads, *a, ga);
                    }
                    if self.nodes[b.0].needs_grad {
                        let mut prod = g.clone();
                        for (v, x) in prod.data_mut().iter_mut().zip(ta.data()) {
                            *v *= x;
                        }
                        accumulate(&mut grads, *b, reduce_to(&prod, tb));
                    }
                }
                Op::Tanh(a) => {
                    let ga = zip_map(&g, y, |g, y| g * (1.0 - y * y));
                    accumulate(&mut grads, *a, ga);
                }
                Op::Sigmoid(a) => {
                    let ga = zip_map(&g, y, |g, y| g * y * (1.0 - y));
                    accumulate(&mut grads, *a, ga);
                }
                Op::Relu(a) => {
                    let ga = zip_map(&g, self.value(*a), |g, x| if x > 0.0 { g } else { 0.0 });
                    accumulate(&mut grads, *a, ga);
                }
                Op::Exp(a) => {
                    let ga = zip_map(&g, y, |g, y| g * y);
                    accumulate(&mut grads, *a, ga);
                }
                Op::Log(a) => {
                    let ga = zip_map(&g, self.value(*a), |g, x| g / x);
                    accumulate(&mut grads, *a, ga);
                }
                Op::Softmax(a) => {
                    let n = y.cols();
                    let mut ga = g.clone();
                    for (grow, yrow) in ga.data_mut().chunks_mut(n).zip(y.data().chunks(n)) {
                        let dot: f64 = grow.iter().zip(yrow).map(|(g, y)| g * y).sum();
                        for (gv, yv) in grow.iter_mut().zip(yrow) {
                            *gv = yv * (*gv - dot);
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::Concat(parts, axis) => match axis {
                    Axis::Rows => {
                        let mut offset = 0;
                        for &p in parts {
                            let t = self.value(p);
                            let len = t.len();
                            if self.nodes[p.0].needs_grad {
                                let gp = Tensor::new(
                                    t.shape(),
                                    g.data()[offset..offset + len].to_vec(),
                                )?;
                                accumulate(&mut grads, p, gp);
                            }
                            offset += len;
                        }
                    }
                    Axis::Cols => {
                        let total = g.cols();
                        let mut offset = 0;
                        for &p in parts {
                            let t = self.value(p);
                            let c = t.cols();
                            if self.nodes[p.0].needs_grad {
                                let mut data = Vec::with_capacity(t.len());
                                for r in 0..t.rows() {
                                    let start = r * total + offset;
                                    data.extend_from_slice(&g.data()[start..start + c]);
                                }
                                accumulate(&mut grads, p, Tensor::new(t.shape(), data)?);
                            }
                            offset += c;
                        }
                    }
                },
                Op::Lookup(table, ids) => {
                    let t = self.value(*table);
                    let c = t.cols();
                    let mut gt = Tensor::zeros(t.shape());
                    for (r, &i) in ids.iter().enumerate() {
                        let src = &g.data()[r * c..(r + 1) * c];
                        for (d, s) in gt.data_mut()[i * c..(i + 1) * c].iter_mut().zip(src) {
                            *d += s;
                        }
                    }
                    accumulate(&mut grads, *table, gt);
                }
                Op::Sum(a) => {
                    let ta = self.value(*a);
                    accumulate(&mut grads, *a, Tensor::full(ta.shape(), g.item()));
                }
                Op::Mean(a) => {
                    let ta = self.value(*a);
                    let v = g.item() / ta.len() as f64;
                    accumulate(&mut grads, *a, Tensor::full(ta.shape(), v));
                }
                Op::Reshape(a) => {
                    let shape = self.value(*a).shape().to_vec();
                    accumulate(&mut grads, *a, g.reshaped(&shape)?);
                }
            }
        }
        Ok(out)
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_scaled(&g, 1.0),
        slot @ None => *slot = Some(g),
    }
}

fn zip_map(g: &Tensor, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let mut out = g.clone();
    for (o, &x) in out.data_mut().iter_mut().zip(other.data()) {
        *o = f(*o, x);
    }
    out
}

/// Sums `g` down to the shape of `target` (identity unless `target` was a
/// broadcast row).
fn reduce_to(g: &Tensor, target: &Tensor) -> Tensor {
    if g.shape() == target.shape() {
        return g.clone();
    }
    let n = target.len();
    let mut out = Tensor::zeros(target.shape());
    for row in g.data().chunks(n) {
        for (o, v) in out.data_mut().iter_mut().zip(row) {
            *o += v;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::finite_difference_check;

    fn single(value: Tensor) -> (ParamSet, ParamId) {
        let mut p = ParamSet::new();
        let id = p.insert("w", value).unwrap();
        (p, id)
    }

    #[test]
    fn linear_gradient() {
        let (p, id) = single(Tensor::scalar(2.0));
        let mut tape = Tape::new(&p);
        let w = tape.param(id);
        let loss = tape.scale(w, 3.0).unwrap();
        assert_eq!(tape.value(loss).item(), 6.0);
        let g = tape.backprop(loss).unwrap();
        assert_eq!(g.get(id).item(), 3.0);
    }

    #[test]
    fn tanh_gradient_at_zero() {
        let (p, id) = single(Tensor::scalar(0.0));
        let mut tape = Tape::new(&p);
        let w = tape.param(id);
        let loss = tape.tanh(w);
        let g = tape.backprop(loss).unwrap();
        assert_eq!(g.get(id).item(), 1.0);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let (p, id) = single(Tensor::row(&[1.0, 2.0]));
        let mut tape = Tape::new(&p);
        let w = tape.param(id);
        assert!(matches!(tape.backprop(w), Err(Error::Shape { .. })));
    }

    #[test]
    fn unused_parameters_get_zero() {
        let mut p = ParamSet::new();
        let a = p.insert("a", Tensor::row(&[1.0, 2.0])).unwrap();
        let b = p.insert("b", Tensor::row(&[5.0, 6.0, 7.0])).unwrap();
        let mut tape = Tape::new(&p);
        let va = tape.param(a);
        let loss = tape.sum(va);
        let g = tape.backprop(loss).unwrap();
        assert_eq!(g.get(a).data(), &[1.0, 1.0]);
        assert_eq!(g.get(b).data(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn clamp_matches_definition() {
        let (p, id) = single(Tensor::row(&[-10.0, -1.0, 0.5, 3.0, 9.0]));
        let mut tape = Tape::new(&p);
        let w = tape.param(id);
        let c = tape.clamp(w, -8.0, 8.0).unwrap();
        assert_eq!(tape.value(c).data(), &[-8.0, -1.0, 0.5, 3.0, 8.0]);
    }

    /// Exercises every primitive in one expression and compares against
    /// central differences.
    #[test]
    fn every_primitive_matches_finite_differences() {
        let mut p = ParamSet::new();
        let mut rng = crate::numcore::SeedTree::new(11).rng();
        use rand::Rng;
        let mut rand_t = |r: usize, c: usize| {
            Tensor::new(&[r, c], (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
        };
        let x = p.insert("x", rand_t(3, 4)).unwrap();
        let w = p.insert("w", rand_t(4, 5)).unwrap();
        let b = p.insert("b", rand_t(1, 5)).unwrap();
        let s = p.insert("s", rand_t(1, 5)).unwrap();
        let e = p.insert("e", rand_t(6, 2)).unwrap();

        let f = |ps: &ParamSet| -> Result<(f64, Gradients)> {
            let mut t = Tape::new(ps);
            let xv = t.param(x);
            let h = t.affine(xv, w, b)?;
            let sv = t.param(s);
            let h = t.mul(h, sv)?;
            let a1 = t.tanh(h);
            let a2 = t.sigmoid(h);
            let a3 = t.relu(h);
            let mix = t.add(a1, a2)?;
            let mix = t.add(mix, a3)?;
            let sm = t.softmax(mix);
            let lg = t.log(sm);
            let ev = t.param(e);
            let rows = t.lookup(ev, &[0, 3, 3, 5])?;
            let ex = t.exp(rows);
            let flat = t.reshape(ex, &[1, 8])?;
            let lgr = t.reshape(lg, &[1, 15])?;
            let cat = t.concat(&[lgr, flat], Axis::Cols)?;
            let stacked = t.concat(&[cat, cat], Axis::Rows)?;
            let sq = t.square(stacked)?;
            let m = t.mean(sq);
            let s2 = t.sum(stacked);
            let loss = t.add(m, s2)?;
            let g = t.backprop(loss)?;
            Ok((t.value(loss).item(), g))
        };
        let report = finite_difference_check(f, &mut p, 1e-5).unwrap();
        assert!(report.max_relative_error < 1e-6, "{report:?}");
    }
}
