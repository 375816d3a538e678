//! Reverse-mode automatic differentiation over 2-D `f64` arrays.
//!
//! Every operation records a node on a [`Tape`]. Backward rules are themselves
//! expressed as tape operations, so the gradient returned by [`Tape::grad`] is
//! an ordinary differentiable node. Differentiating through a gradient (as the
//! critic's gradient penalty requires) is therefore just a second call to
//! [`Tape::grad`].

use ndarray::{concatenate, s, Array2, Axis};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    MatMul(Var, Var),
    Transpose(Var),
    Neg(Var),
    Scale(Var, f64),
    AddScalar(Var),
    Tanh(Var),
    Sigmoid(Var),
    Exp(Var),
    Ln(Var),
    Sqrt(Var),
    /// Element-wise product with a constant array.
    MulConst(Var, Array2<f64>),
    /// Sum over columns, `m x n -> m x 1`.
    SumRows(Var),
    /// Sum over rows, `m x n -> 1 x n`.
    SumCols(Var),
    Broadcast(Var),
    SliceCols(Var, usize),
    PadCols(Var, usize),
    ConcatCols(Vec<Var>),
}

impl Op {
    fn parents(&self) -> Vec<Var> {
        match self {
            Op::Leaf => vec![],
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::Div(a, b) | Op::MatMul(a, b) => {
                vec![*a, *b]
            }
            Op::Transpose(a)
            | Op::Neg(a)
            | Op::Scale(a, _)
            | Op::AddScalar(a)
            | Op::Tanh(a)
            | Op::Sigmoid(a)
            | Op::Exp(a)
            | Op::Ln(a)
            | Op::Sqrt(a)
            | Op::MulConst(a, _)
            | Op::SumRows(a)
            | Op::SumCols(a)
            | Op::Broadcast(a)
            | Op::SliceCols(a, _)
            | Op::PadCols(a, _) => vec![*a],
            Op::ConcatCols(parts) => parts.clone(),
        }
    }
}

#[derive(Debug)]
struct Node {
    value: Array2<f64>,
    op: Op,
    requires_grad: bool,
}

/// Append-only computation record. Node indices are a topological order.
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

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.dim()
    }

    /// Scalar value of a `1 x 1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        let value = self.value(v);
        debug_assert_eq!(value.dim(), (1, 1));
        value[[0, 0]]
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> Var {
        let requires_grad = op.parents().iter().any(|p| self.nodes[p.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Array2<f64>) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// Constant leaf; never receives a gradient.
    pub fn constant(&mut self, value: Array2<f64>) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn zeros(&mut self, rows: usize, cols: usize) -> Var {
        self.constant(Array2::zeros((rows, cols)))
    }

    /// Broadcast `a` to `shape`. Rows and columns of extent 1 may be stretched.
    pub fn broadcast(&mut self, a: Var, shape: (usize, usize)) -> Var {
        let from = self.shape(a);
        if from == shape {
            return a;
        }
        assert!(
            (from.0 == shape.0 || from.0 == 1) && (from.1 == shape.1 || from.1 == 1),
            "cannot broadcast {from:?} to {shape:?}"
        );
        let value = self
            .value(a)
            .broadcast(shape)
            .expect("broadcast shape checked")
            .to_owned();
        self.push(value, Op::Broadcast(a))
    }

    fn binary_shapes(&mut self, a: Var, b: Var) -> (Var, Var) {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa == sb {
            return (a, b);
        }
        let shape = (sa.0.max(sb.0), sa.1.max(sb.1));
        (self.broadcast(a, shape), self.broadcast(b, shape))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (a, b) = self.binary_shapes(a, b);
        let value = self.value(a) + self.value(b);
        self.push(value, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let (a, b) = self.binary_shapes(a, b);
        let value = self.value(a) - self.value(b);
        self.push(value, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (a, b) = self.binary_shapes(a, b);
        let value = self.value(a) * self.value(b);
        self.push(value, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        let (a, b) = self.binary_shapes(a, b);
        let value = self.value(a) / self.value(b);
        self.push(value, Op::Div(a, b))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (sa, sb) = (self.shape(a), self.shape(b));
        assert_eq!(sa.1, sb.0, "matmul {sa:?} x {sb:?}");
        let value = self.value(a).dot(self.value(b));
        self.push(value, Op::MatMul(a, b))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.value(a).t().as_standard_layout().into_owned();
        self.push(value, Op::Transpose(a))
    }

    pub fn neg(&mut self, a: Var) -> Var {
        let value = -self.value(a);
        self.push(value, Op::Neg(a))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a) * c;
        self.push(value, Op::Scale(a, c))
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a) + c;
        self.push(value, Op::AddScalar(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(f64::tanh);
        self.push(value, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(sigmoid);
        self.push(value, Op::Sigmoid(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(f64::exp);
        self.push(value, Op::Exp(a))
    }

    pub fn ln(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(f64::ln);
        self.push(value, Op::Ln(a))
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(f64::sqrt);
        self.push(value, Op::Sqrt(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.mul(a, a)
    }

    pub fn mul_const(&mut self, a: Var, c: Array2<f64>) -> Var {
        assert_eq!(self.shape(a), c.dim());
        let value = self.value(a) * &c;
        self.push(value, Op::MulConst(a, c))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let mask = self.value(a).mapv(|x| if x > 0.0 { 1.0 } else { slope });
        self.mul_const(a, mask)
    }

    pub fn sum_rows(&mut self, a: Var) -> Var {
        let value = self.value(a).sum_axis(Axis(1)).insert_axis(Axis(1));
        self.push(value, Op::SumRows(a))
    }

    pub fn sum_cols(&mut self, a: Var) -> Var {
        let value = self.value(a).sum_axis(Axis(0)).insert_axis(Axis(0));
        self.push(value, Op::SumCols(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let rows = self.sum_rows(a);
        self.sum_cols(rows)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let (m, n) = self.shape(a);
        let total = self.sum(a);
        self.scale(total, 1.0 / (m * n) as f64)
    }

    /// Row-wise mean, `m x n -> m x 1`.
    pub fn mean_rows(&mut self, a: Var) -> Var {
        let n = self.shape(a).1;
        let total = self.sum_rows(a);
        self.scale(total, 1.0 / n as f64)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        let n = self.shape(a).1;
        assert!(start <= end && end <= n, "slice {start}..{end} of {n} columns");
        if start == 0 && end == n {
            return a;
        }
        let value = self.value(a).slice(s![.., start..end]).to_owned();
        self.push(value, Op::SliceCols(a, start))
    }

    /// Place `a` at column offset `start` inside a zero matrix of `total` columns.
    pub fn pad_cols(&mut self, a: Var, start: usize, total: usize) -> Var {
        let (m, n) = self.shape(a);
        assert!(start + n <= total);
        let mut value = Array2::zeros((m, total));
        value.slice_mut(s![.., start..start + n]).assign(self.value(a));
        self.push(value, Op::PadCols(a, start))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        if parts.len() == 1 {
            return parts[0];
        }
        let views: Vec<_> = parts.iter().map(|p| self.value(*p).view()).collect();
        let value = concatenate(Axis(1), &views).expect("concat rows agree");
        self.push(value, Op::ConcatCols(parts.to_vec()))
    }

    /// Row-wise softmax. The row maximum enters as a constant, which leaves the
    /// gradient unchanged because softmax is shift invariant.
    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let max = self
            .value(a)
            .map_axis(Axis(1), |row| row.fold(f64::NEG_INFINITY, |m, &x| m.max(x)))
            .insert_axis(Axis(1));
        let max = self.constant(max);
        let shifted = self.sub(a, max);
        let e = self.exp(shifted);
        let total = self.sum_rows(e);
        self.div(e, total)
    }

    /// Gradients of the `1 x 1` node `output` with respect to `wrt`.
    ///
    /// Entries are `None` when `output` does not depend on that node. The
    /// returned nodes live on this tape and may themselves be differentiated.
    pub fn grad(&mut self, output: Var, wrt: &[Var]) -> Vec<Option<Var>> {
        assert_eq!(self.shape(output), (1, 1), "grad needs a scalar output");
        let end = output.0 + 1;

        // Only nodes that depend on a requested input need a gradient.
        let mut relevant = vec![false; end];
        for w in wrt {
            if w.0 < end {
                relevant[w.0] = true;
            }
        }
        for i in 0..end {
            if !relevant[i] && self.nodes[i].requires_grad {
                relevant[i] = self.nodes[i].op.parents().iter().any(|p| relevant[p.0]);
            }
        }

        let mut grads: Vec<Option<Var>> = vec![None; end];
        if !relevant[output.0] {
            return vec![None; wrt.len()];
        }
        grads[output.0] = Some(self.constant(Array2::ones((1, 1))));

        for i in (0..end).rev() {
            let Some(g) = grads[i] else { continue };
            if !relevant[i] {
                continue;
            }
            let op = self.nodes[i].op.clone();
            let out = Var(i);
            for (parent, contribution) in self.backward(&op, out, g) {
                if !relevant[parent.0] {
                    continue;
                }
                grads[parent.0] = Some(match grads[parent.0] {
                    Some(prev) => self.add(prev, contribution),
                    None => contribution,
                });
            }
        }
        wrt.iter()
            .map(|w| if w.0 < end { grads[w.0] } else { None })
            .collect()
    }

    fn backward(&mut self, op: &Op, out: Var, g: Var) -> Vec<(Var, Var)> {
        match op {
            Op::Leaf => vec![],
            Op::Add(a, b) => vec![(*a, g), (*b, g)],
            Op::Sub(a, b) => {
                let gb = self.neg(g);
                vec![(*a, g), (*b, gb)]
            }
            Op::Mul(a, b) => {
                let ga = self.mul(g, *b);
                let gb = self.mul(g, *a);
                vec![(*a, ga), (*b, gb)]
            }
            Op::Div(a, b) => {
                let ga = self.div(g, *b);
                let ratio = self.div(out, *b);
                let gb = self.mul(g, ratio);
                let gb = self.neg(gb);
                vec![(*a, ga), (*b, gb)]
            }
            Op::MatMul(a, b) => {
                let bt = self.transpose(*b);
                let ga = self.matmul(g, bt);
                let at = self.transpose(*a);
                let gb = self.matmul(at, g);
                vec![(*a, ga), (*b, gb)]
            }
            Op::Transpose(a) => vec![(*a, self.transpose(g))],
            Op::Neg(a) => vec![(*a, self.neg(g))],
            Op::Scale(a, c) => vec![(*a, self.scale(g, *c))],
            Op::AddScalar(a) => vec![(*a, g)],
            Op::Tanh(a) => {
                let sq = self.square(out);
                let neg = self.neg(sq);
                let d = self.add_scalar(neg, 1.0);
                vec![(*a, self.mul(g, d))]
            }
            Op::Sigmoid(a) => {
                let neg = self.neg(out);
                let one_minus = self.add_scalar(neg, 1.0);
                let d = self.mul(out, one_minus);
                vec![(*a, self.mul(g, d))]
            }
            Op::Exp(a) => vec![(*a, self.mul(g, out))],
            Op::Ln(a) => vec![(*a, self.div(g, *a))],
            Op::Sqrt(a) => {
                let half = self.scale(g, 0.5);
                vec![(*a, self.div(half, out))]
            }
            Op::MulConst(a, c) => vec![(*a, self.mul_const(g, c.clone()))],
            Op::SumRows(a) | Op::SumCols(a) => {
                let shape = self.shape(*a);
                vec![(*a, self.broadcast(g, shape))]
            }
            Op::Broadcast(a) => {
                let (from, to) = (self.shape(*a), self.shape(out));
                let mut reduced = g;
                if from.0 == 1 && to.0 != 1 {
                    reduced = self.sum_cols(reduced);
                }
                if from.1 == 1 && to.1 != 1 {
                    reduced = self.sum_rows(reduced);
                }
                vec![(*a, reduced)]
            }
            Op::SliceCols(a, start) => {
                let total = self.shape(*a).1;
                vec![(*a, self.pad_cols(g, *start, total))]
            }
            Op::PadCols(a, start) => {
                let n = self.shape(*a).1;
                vec![(*a, self.slice_cols(g, *start, start + n))]
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                let mut out = Vec::with_capacity(parts.len());
                for p in parts {
                    let n = self.shape(*p).1;
                    out.push((*p, self.slice_cols(g, offset, offset + n)));
                    offset += n;
                }
                out
            }
        }
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
