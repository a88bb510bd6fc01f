//! Define-by-run reverse-mode differentiation.
//!
//! A [`Graph`] records every operation applied to its [`Var`] handles. After
//! building a scalar loss, [`Graph::backward`] walks the record in reverse
//! creation order and fills in the gradient of every node that depends on a
//! parameter leaf. A graph is built fresh for each forward pass and is not
//! `Sync`; distinct graphs may live on distinct threads.

use std::cell::{Ref, RefCell};

use super::array::{
    broadcast_offsets, broadcast_shape, gemm_nt_acc, gemm_tn_acc, Array,
};
use super::ArrayError;

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum UnaryOp {
    LeakyRelu(f64),
    Softplus,
    Tanh,
    Sine,
    Exp,
    Log,
}

impl UnaryOp {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            UnaryOp::LeakyRelu(slope) => leaky_relu(x, slope),
            UnaryOp::Softplus => softplus(x),
            UnaryOp::Tanh => x.tanh(),
            UnaryOp::Sine => x.sin(),
            UnaryOp::Exp => x.exp(),
            UnaryOp::Log => x.ln(),
        }
    }

    /// Derivative given the input `x` and the output `y = f(x)`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            UnaryOp::LeakyRelu(slope) => {
                if x >= 0.0 {
                    1.0
                } else {
                    slope
                }
            }
            UnaryOp::Softplus => sigmoid(x),
            UnaryOp::Tanh => 1.0 - y * y,
            UnaryOp::Sine => x.cos(),
            UnaryOp::Exp => y,
            UnaryOp::Log => 1.0 / x,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
}

/// `x` for `x ≥ 0`, `slope·x` otherwise.
pub fn leaky_relu(x: f64, slope: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        slope * x
    }
}

/// `log(1 + eˣ)`, evaluated as `x + log(1 + e⁻ˣ)` for positive `x`.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// One term of a sparse convolution: output row `out` reads input row `input`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvPair {
    pub out: usize,
    pub input: usize,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Binary(BinaryOp, Var, Var),
    Unary(UnaryOp, Var),
    Scale(Var, f64),
    ClampMin(Var, f64),
    SumAll(Var),
    SumLastAxis(Var),
    Reshape(Var),
    GatherRows(Var, Vec<usize>),
    PickPerRow(Var, Vec<usize>),
    LogSoftmaxRows(Var),
    PairOuterSum {
        hidden: Var,
        feats: Var,
        pairs: Vec<ConvPair>,
    },
}

/// A recorded value together with the rule that produced it.
#[derive(Debug)]
pub struct DiffNode {
    value: Array,
    op: Op,
    requires_grad: bool,
}

impl DiffNode {
    pub fn value(&self) -> &Array {
        &self.value
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: RefCell<Vec<DiffNode>>,
    grads: RefCell<Vec<Option<Array>>>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Array, op: Op, requires_grad: bool) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(DiffNode {
            value,
            op,
            requires_grad,
        });
        Var(nodes.len() - 1)
    }

    /// Leaf whose gradient is tracked.
    pub fn param(&self, value: Array) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf treated as a constant.
    pub fn constant(&self, value: Array) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn scalar(&self, value: f64) -> Var {
        self.constant(Array::scalar(value))
    }

    pub fn node(&self, v: Var) -> Ref<'_, DiffNode> {
        Ref::map(self.nodes.borrow(), |n| &n[v.0])
    }

    pub fn value(&self, v: Var) -> Array {
        self.nodes.borrow()[v.0].value.clone()
    }

    pub fn value_ref(&self, v: Var) -> Ref<'_, Array> {
        Ref::map(self.nodes.borrow(), |n| &n[v.0].value)
    }

    pub fn item(&self, v: Var) -> Result<f64, ArrayError> {
        self.nodes.borrow()[v.0].value.item()
    }

    pub fn shape(&self, v: Var) -> Vec<usize> {
        self.nodes.borrow()[v.0].value.shape().to_vec()
    }

    fn needs(&self, vars: &[Var]) -> bool {
        let nodes = self.nodes.borrow();
        vars.iter().any(|v| nodes[v.0].requires_grad)
    }

    pub fn matmul(&self, a: Var, b: Var) -> Result<Var, ArrayError> {
        let value = {
            let nodes = self.nodes.borrow();
            nodes[a.0].value.matmul(&nodes[b.0].value)?
        };
        let rg = self.needs(&[a, b]);
        Ok(self.push(value, Op::MatMul(a, b), rg))
    }

    pub fn binary(&self, op: BinaryOp, a: Var, b: Var) -> Result<Var, ArrayError> {
        let value = {
            let nodes = self.nodes.borrow();
            let (x, y) = (&nodes[a.0].value, &nodes[b.0].value);
            let shape = broadcast_shape(x.shape(), y.shape())?;
            let (xd, yd) = (x.data(), y.data());
            let data: Vec<f64> = if x.shape() == y.shape() {
                xd.iter()
                    .zip(yd)
                    .map(|(&p, &q)| apply_binary(op, p, q))
                    .collect()
            } else {
                let xo = broadcast_offsets(x.shape(), &shape);
                let yo = broadcast_offsets(y.shape(), &shape);
                xo.iter()
                    .zip(&yo)
                    .map(|(&i, &j)| apply_binary(op, xd[i], yd[j]))
                    .collect()
            };
            Array::new(shape, data)?
        };
        let rg = self.needs(&[a, b]);
        Ok(self.push(value, Op::Binary(op, a, b), rg))
    }

    pub fn add(&self, a: Var, b: Var) -> Result<Var, ArrayError> {
        self.binary(BinaryOp::Add, a, b)
    }

    pub fn sub(&self, a: Var, b: Var) -> Result<Var, ArrayError> {
        self.binary(BinaryOp::Sub, a, b)
    }

    pub fn mul(&self, a: Var, b: Var) -> Result<Var, ArrayError> {
        self.binary(BinaryOp::Mul, a, b)
    }

    pub fn div(&self, a: Var, b: Var) -> Result<Var, ArrayError> {
        self.binary(BinaryOp::Div, a, b)
    }

    pub fn unary(&self, op: UnaryOp, a: Var) -> Result<Var, ArrayError> {
        let value = {
            let nodes = self.nodes.borrow();
            let x = &nodes[a.0].value;
            if op == UnaryOp::Log {
                if let Some(bad) = x.data().iter().find(|&&v| !(v > 0.0)) {
                    return Err(ArrayError::Domain(format!("log of non-positive value {bad}")));
                }
            }
            x.map(|v| op.apply(v))
        };
        let rg = self.needs(&[a]);
        Ok(self.push(value, Op::Unary(op, a), rg))
    }

    pub fn leaky_relu(&self, a: Var, slope: f64) -> Result<Var, ArrayError> {
        self.unary(UnaryOp::LeakyRelu(slope), a)
    }

    pub fn softplus(&self, a: Var) -> Result<Var, ArrayError> {
        self.unary(UnaryOp::Softplus, a)
    }

    pub fn tanh(&self, a: Var) -> Result<Var, ArrayError> {
        self.unary(UnaryOp::Tanh, a)
    }

    pub fn sin(&self, a: Var) -> Result<Var, ArrayError> {
        self.unary(UnaryOp::Sine, a)
    }

    pub fn exp(&self, a: Var) -> Result<Var, ArrayError> {
        self.unary(UnaryOp::Exp, a)
    }

    pub fn log(&self, a: Var) -> Result<Var, ArrayError> {
        self.unary(UnaryOp::Log, a)
    }

    pub fn scale(&self, a: Var, c: f64) -> Var {
        let value = self.nodes.borrow()[a.0].value.map(|v| v * c);
        let rg = self.needs(&[a]);
        self.push(value, Op::Scale(a, c), rg)
    }

    /// `max(x, floor)` elementwise; no gradient flows where the floor is active.
    pub fn clamp_min(&self, a: Var, floor: f64) -> Var {
        let value = self.nodes.borrow()[a.0].value.map(|v| v.max(floor));
        let rg = self.needs(&[a]);
        self.push(value, Op::ClampMin(a, floor), rg)
    }

    pub fn sum(&self, a: Var) -> Var {
        let value = Array::scalar(self.nodes.borrow()[a.0].value.sum());
        let rg = self.needs(&[a]);
        self.push(value, Op::SumAll(a), rg)
    }

    /// Sum divided by the element count.
    pub fn mean(&self, a: Var) -> Result<Var, ArrayError> {
        let n = self.nodes.borrow()[a.0].value.len();
        if n == 0 {
            return Err(ArrayError::Contract("mean of an empty array".into()));
        }
        let s = self.sum(a);
        let count = self.scalar(n as f64);
        self.div(s, count)
    }

    /// Sums a `[.., m]` array over its last axis.
    pub fn sum_last_axis(&self, a: Var) -> Result<Var, ArrayError> {
        let value = {
            let nodes = self.nodes.borrow();
            let x = &nodes[a.0].value;
            let shape = x.shape();
            let Some((&m, lead)) = shape.split_last() else {
                return Err(ArrayError::Shape("sum over last axis of a scalar".into()));
            };
            let data = if m == 0 {
                vec![0.0; lead.iter().product()]
            } else {
                x.data().chunks(m).map(|c| c.iter().sum()).collect()
            };
            Array::new(lead.to_vec(), data)?
        };
        let rg = self.needs(&[a]);
        Ok(self.push(value, Op::SumLastAxis(a), rg))
    }

    pub fn reshape(&self, a: Var, shape: &[usize]) -> Result<Var, ArrayError> {
        let value = self.nodes.borrow()[a.0].value.reshape(shape)?;
        let rg = self.needs(&[a]);
        Ok(self.push(value, Op::Reshape(a), rg))
    }

    /// Selects rows of a matrix; rows may repeat.
    pub fn gather_rows(&self, a: Var, rows: &[usize]) -> Result<Var, ArrayError> {
        let value = {
            let nodes = self.nodes.borrow();
            let x = &nodes[a.0].value;
            let (r, c) = x.dims2()?;
            let mut data = Vec::with_capacity(rows.len() * c);
            for &i in rows {
                if i >= r {
                    return Err(ArrayError::Domain(format!("row {i} out of range for {r} rows")));
                }
                data.extend_from_slice(x.row(i));
            }
            Array::matrix(rows.len(), c, data)?
        };
        let rg = self.needs(&[a]);
        Ok(self.push(value, Op::GatherRows(a, rows.to_vec()), rg))
    }

    /// `out[i] = x[i, cols[i]]` for an `n × m` matrix.
    pub fn pick_per_row(&self, a: Var, cols: &[usize]) -> Result<Var, ArrayError> {
        let value = {
            let nodes = self.nodes.borrow();
            let x = &nodes[a.0].value;
            let (r, c) = x.dims2()?;
            if cols.len() != r {
                return Err(ArrayError::Shape(format!(
                    "{} column picks for {r} rows",
                    cols.len()
                )));
            }
            let mut data = Vec::with_capacity(r);
            for (i, &j) in cols.iter().enumerate() {
                if j >= c {
                    return Err(ArrayError::Domain(format!("column {j} out of range for {c}")));
                }
                data.push(x.get2(i, j));
            }
            Array::vector(data)
        };
        let rg = self.needs(&[a]);
        Ok(self.push(value, Op::PickPerRow(a, cols.to_vec()), rg))
    }

    /// Row-wise `x - logsumexp(x)` with max subtraction.
    pub fn log_softmax_rows(&self, a: Var) -> Result<Var, ArrayError> {
        let value = {
            let nodes = self.nodes.borrow();
            let x = &nodes[a.0].value;
            let (r, c) = x.dims2()?;
            let mut data = Vec::with_capacity(r * c);
            for i in 0..r {
                let row = x.row(i);
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
                data.extend(row.iter().map(|v| v - lse));
            }
            Array::matrix(r, c, data)?
        };
        let rg = self.needs(&[a]);
        Ok(self.push(value, Op::LogSoftmaxRows(a), rg))
    }

    /// Sums of outer products over sparse pairs.
    ///
    /// `hidden` is `P × r` with row `p` belonging to `pairs[p]`; `feats` is
    /// `n_in × d_in`. The result is `n_out × (r·d_in)` where row `o` is
    /// `Σ_{p: pairs[p].out = o} hidden[p] ⊗ feats[pairs[p].input]`, summed in
    /// pair order. Multiplying it by a reshaped `r·d_in × d_out` weight gives
    /// a convolution whose kernel is linear in `hidden`.
    pub fn pair_outer_sum(
        &self,
        hidden: Var,
        feats: Var,
        pairs: Vec<ConvPair>,
        n_out: usize,
    ) -> Result<Var, ArrayError> {
        let value = {
            let nodes = self.nodes.borrow();
            let h = &nodes[hidden.0].value;
            let f = &nodes[feats.0].value;
            let (p, r) = h.dims2()?;
            let (n_in, d_in) = f.dims2()?;
            if p != pairs.len() {
                return Err(ArrayError::Shape(format!("{p} hidden rows for {} pairs", pairs.len())));
            }
            let width = r * d_in;
            let mut out = vec![0.0; n_out * width];
            for (k, pair) in pairs.iter().enumerate() {
                if pair.out >= n_out || pair.input >= n_in {
                    return Err(ArrayError::Domain(format!("conv pair {pair:?} out of range")));
                }
                let x = f.row(pair.input);
                let z = &mut out[pair.out * width..(pair.out + 1) * width];
                for (a, &ha) in h.row(k).iter().enumerate() {
                    if ha == 0.0 {
                        continue;
                    }
                    for (dst, &xv) in z[a * d_in..(a + 1) * d_in].iter_mut().zip(x) {
                        *dst += ha * xv;
                    }
                }
            }
            Array::matrix(n_out, width, out)?
        };
        let rg = self.needs(&[hidden, feats]);
        Ok(self.push(value, Op::PairOuterSum { hidden, feats, pairs }, rg))
    }

    /// Gradient of `root` with respect to every node that requires one.
    pub fn backward(&self, root: Var) -> Result<(), ArrayError> {
        let nodes = self.nodes.borrow();
        let root_node = &nodes[root.0];
        if !root_node.value.is_scalar() {
            return Err(ArrayError::Contract(format!(
                "backward needs a scalar root, got shape {:?}",
                root_node.value.shape()
            )));
        }
        let mut grads: Vec<Option<Array>> = vec![None; nodes.len()];
        grads[root.0] = Some(Array::full(root_node.value.shape(), 1.0));

        for i in (0..=root.0).rev() {
            let node = &nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            propagate(&nodes, node, &g, &mut grads);
            grads[i] = Some(g);
        }
        *self.grads.borrow_mut() = grads;
        Ok(())
    }

    /// Gradient after [`Graph::backward`]; zeros for tracked nodes the root
    /// does not depend on, `None` for constants.
    pub fn grad(&self, v: Var) -> Option<Array> {
        let nodes = self.nodes.borrow();
        if !nodes[v.0].requires_grad {
            return None;
        }
        let grads = self.grads.borrow();
        Some(
            grads
                .get(v.0)
                .and_then(|g| g.clone())
                .unwrap_or_else(|| Array::zeros(nodes[v.0].value.shape())),
        )
    }
}

fn apply_binary(op: BinaryOp, a: f64, b: f64) -> f64 {
    match op {
        BinaryOp::Add => a + b,
        BinaryOp::Sub => a - b,
        BinaryOp::Mul => a * b,
        BinaryOp::Div => a / b,
    }
}

fn accumulate(grads: &mut [Option<Array>], nodes: &[DiffNode], v: Var, g: Array) {
    if !nodes[v.0].requires_grad {
        return;
    }
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

/// Reduces a broadcast gradient back onto an operand's shape.
fn unbroadcast(g_data: &[f64], offsets: &[usize], shape: &[usize]) -> Array {
    let mut out = Array::zeros(shape);
    let d = out.data_mut();
    for (&o, &gv) in offsets.iter().zip(g_data) {
        d[o] += gv;
    }
    out
}

fn propagate(nodes: &[DiffNode], node: &DiffNode, g: &Array, grads: &mut [Option<Array>]) {
    match &node.op {
        Op::Leaf => {}
        Op::MatMul(a, b) => {
            let (av, bv) = (&nodes[a.0].value, &nodes[b.0].value);
            let (m, k) = (av.shape()[0], av.shape()[1]);
            let n = bv.shape()[1];
            if nodes[a.0].requires_grad {
                let mut ga = vec![0.0; m * k];
                gemm_nt_acc(g.data(), bv.data(), &mut ga, m, n, k);
                accumulate(grads, nodes, *a, Array::new(vec![m, k], ga).unwrap());
            }
            if nodes[b.0].requires_grad {
                let mut gb = vec![0.0; k * n];
                gemm_tn_acc(av.data(), g.data(), &mut gb, m, k, n);
                accumulate(grads, nodes, *b, Array::new(vec![k, n], gb).unwrap());
            }
        }
        Op::Binary(op, a, b) => {
            let (av, bv) = (&nodes[a.0].value, &nodes[b.0].value);
            let out_shape = node.value.shape();
            let ao = broadcast_offsets(av.shape(), out_shape);
            let bo = broadcast_offsets(bv.shape(), out_shape);
            let (ad, bd, gd) = (av.data(), bv.data(), g.data());
            if nodes[a.0].requires_grad {
                let local: Vec<f64> = match op {
                    BinaryOp::Add | BinaryOp::Sub => gd.to_vec(),
                    BinaryOp::Mul => gd.iter().zip(&bo).map(|(gv, &j)| gv * bd[j]).collect(),
                    BinaryOp::Div => gd.iter().zip(&bo).map(|(gv, &j)| gv / bd[j]).collect(),
                };
                accumulate(grads, nodes, *a, unbroadcast(&local, &ao, av.shape()));
            }
            if nodes[b.0].requires_grad {
                let local: Vec<f64> = match op {
                    BinaryOp::Add => gd.to_vec(),
                    BinaryOp::Sub => gd.iter().map(|gv| -gv).collect(),
                    BinaryOp::Mul => gd.iter().zip(&ao).map(|(gv, &i)| gv * ad[i]).collect(),
                    BinaryOp::Div => gd
                        .iter()
                        .zip(ao.iter().zip(&bo))
                        .map(|(gv, (&i, &j))| -gv * ad[i] / (bd[j] * bd[j]))
                        .collect(),
                };
                accumulate(grads, nodes, *b, unbroadcast(&local, &bo, bv.shape()));
            }
        }
        Op::Unary(op, a) => {
            let x = &nodes[a.0].value;
            let data = x
                .data()
                .iter()
                .zip(node.value.data())
                .zip(g.data())
                .map(|((&xv, &yv), &gv)| gv * op.derivative(xv, yv))
                .collect();
            accumulate(grads, nodes, *a, Array::new(x.shape().to_vec(), data).unwrap());
        }
        Op::Scale(a, c) => accumulate(grads, nodes, *a, g.map(|v| v * c)),
        Op::ClampMin(a, floor) => {
            let x = &nodes[a.0].value;
            let data = x
                .data()
                .iter()
                .zip(g.data())
                .map(|(&xv, &gv)| if xv > *floor { gv } else { 0.0 })
                .collect();
            accumulate(grads, nodes, *a, Array::new(x.shape().to_vec(), data).unwrap());
        }
        Op::SumAll(a) => {
            let shape = nodes[a.0].value.shape();
            accumulate(grads, nodes, *a, Array::full(shape, g.data()[0]));
        }
        Op::SumLastAxis(a) => {
            let shape = nodes[a.0].value.shape().to_vec();
            let m = *shape.last().unwrap();
            let mut data = Vec::with_capacity(shape.iter().product());
            for &gv in g.data() {
                data.extend(std::iter::repeat_n(gv, m));
            }
            accumulate(grads, nodes, *a, Array::new(shape, data).unwrap());
        }
        Op::Reshape(a) => {
            let shape = nodes[a.0].value.shape();
            accumulate(grads, nodes, *a, g.reshape(shape).unwrap());
        }
        Op::GatherRows(a, rows) => {
            let shape = nodes[a.0].value.shape();
            let c = shape[1];
            let mut out = Array::zeros(shape);
            let d = out.data_mut();
            for (k, &i) in rows.iter().enumerate() {
                for j in 0..c {
                    d[i * c + j] += g.data()[k * c + j];
                }
            }
            accumulate(grads, nodes, *a, out);
        }
        Op::PickPerRow(a, cols) => {
            let shape = nodes[a.0].value.shape();
            let c = shape[1];
            let mut out = Array::zeros(shape);
            let d = out.data_mut();
            for (i, &j) in cols.iter().enumerate() {
                d[i * c + j] += g.data()[i];
            }
            accumulate(grads, nodes, *a, out);
        }
        Op::LogSoftmaxRows(a) => {
            let y = &node.value;
            let (r, c) = (y.shape()[0], y.shape()[1]);
            let mut data = Vec::with_capacity(r * c);
            for i in 0..r {
                let yrow = y.row(i);
                let grow = &g.data()[i * c..(i + 1) * c];
                let gsum: f64 = grow.iter().sum();
                data.extend(yrow.iter().zip(grow).map(|(yv, gv)| gv - yv.exp() * gsum));
            }
            accumulate(grads, nodes, *a, Array::matrix(r, c, data).unwrap());
        }
        Op::PairOuterSum { hidden, feats, pairs } => {
            let h = &nodes[hidden.0].value;
            let f = &nodes[feats.0].value;
            let (r, d_in) = (h.shape()[1], f.shape()[1]);
            let width = r * d_in;
            let gd = g.data();
            if nodes[hidden.0].requires_grad {
                let mut gh = Array::zeros(h.shape());
                let ghd = gh.data_mut();
                for (k, pair) in pairs.iter().enumerate() {
                    let gz = &gd[pair.out * width..(pair.out + 1) * width];
                    let x = f.row(pair.input);
                    for a in 0..r {
                        ghd[k * r + a] += gz[a * d_in..(a + 1) * d_in]
                            .iter()
                            .zip(x)
                            .map(|(u, v)| u * v)
                            .sum::<f64>();
                    }
                }
                accumulate(grads, nodes, *hidden, gh);
            }
            if nodes[feats.0].requires_grad {
                let mut gf = Array::zeros(f.shape());
                let gfd = gf.data_mut();
                for (k, pair) in pairs.iter().enumerate() {
                    let gz = &gd[pair.out * width..(pair.out + 1) * width];
                    let dst = &mut gfd[pair.input * d_in..(pair.input + 1) * d_in];
                    for (a, &ha) in h.row(k).iter().enumerate() {
                        if ha == 0.0 {
                            continue;
                        }
                        for (dv, &gv) in dst.iter_mut().zip(&gz[a * d_in..(a + 1) * d_in]) {
                            *dv += ha * gv;
                        }
                    }
                }
                accumulate(grads, nodes, *feats, gf);
            }
        }
    }
}
