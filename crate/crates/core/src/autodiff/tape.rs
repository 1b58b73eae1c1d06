use std::cell::{Cell, Ref, RefCell};

use crate::error::{Error, ShapeError};
use crate::tensor::Tensor;

use super::Var;

/// Operation that produced a node. Operands are node ids, which always
/// precede the node itself.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    AddScalar(usize),
    MatMul(usize, usize),
    Transpose(usize),
    SumRows(usize),
    SumCols(usize),
    ExpandRows(usize),
    ExpandCols(usize),
    ConcatCols(usize, usize),
    SliceCols { src: usize, start: usize },
    PadCols { src: usize, start: usize },
    SliceRows { src: usize, start: usize },
    PadRows { src: usize, start: usize },
    Tanh(usize),
    Elu(usize),
    EluDeriv(usize),
    EluDeriv2(usize),
    Softplus(usize),
    Sigmoid(usize),
    Exp(usize),
    Sqrt(usize),
    Recip(usize),
    Abs(usize),
    Clamp(usize, f64, f64),
    Minimum(usize, usize),
}

impl Op {
    pub(crate) fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::AddScalar(..) => "add_scalar",
            Op::MatMul(..) => "matmul",
            Op::Transpose(..) => "transpose",
            Op::SumRows(..) => "sum_rows",
            Op::SumCols(..) => "sum_cols",
            Op::ExpandRows(..) => "expand_rows",
            Op::ExpandCols(..) => "expand_cols",
            Op::ConcatCols(..) => "concat_cols",
            Op::SliceCols { .. } => "slice_cols",
            Op::PadCols { .. } => "pad_cols",
            Op::SliceRows { .. } => "slice_rows",
            Op::PadRows { .. } => "pad_rows",
            Op::Tanh(..) => "tanh",
            Op::Elu(..) => "elu",
            Op::EluDeriv(..) => "elu_deriv",
            Op::EluDeriv2(..) => "elu_deriv2",
            Op::Softplus(..) => "softplus",
            Op::Sigmoid(..) => "sigmoid",
            Op::Exp(..) => "exp",
            Op::Sqrt(..) => "sqrt",
            Op::Recip(..) => "recip",
            Op::Abs(..) => "abs",
            Op::Clamp(..) => "clamp",
            Op::Minimum(..) => "minimum",
        }
    }

    fn operands(&self, out: &mut Vec<usize>) {
        out.clear();
        match *self {
            Op::Leaf => {}
            Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::MatMul(a, b)
            | Op::ConcatCols(a, b)
            | Op::Minimum(a, b) => out.extend([a, b]),
            Op::Scale(a, _)
            | Op::AddScalar(a)
            | Op::Transpose(a)
            | Op::SumRows(a)
            | Op::SumCols(a)
            | Op::ExpandRows(a)
            | Op::ExpandCols(a)
            | Op::SliceCols { src: a, .. }
            | Op::PadCols { src: a, .. }
            | Op::SliceRows { src: a, .. }
            | Op::PadRows { src: a, .. }
            | Op::Tanh(a)
            | Op::Elu(a)
            | Op::EluDeriv(a)
            | Op::EluDeriv2(a)
            | Op::Softplus(a)
            | Op::Sigmoid(a)
            | Op::Exp(a)
            | Op::Sqrt(a)
            | Op::Recip(a)
            | Op::Abs(a)
            | Op::Clamp(a, _, _) => out.push(a),
        }
    }
}

pub(crate) struct Node {
    pub(crate) value: Tensor,
    pub(crate) op: Op,
    /// True when the node depends on a differentiable leaf through recorded ops.
    pub(crate) tracked: bool,
}

/// Append-only record of tensor operations supporting reverse-mode
/// differentiation, including differentiation of recorded gradients.
///
/// A tape is single-threaded. Build one per forward/backward pass and drop it
/// afterwards; parameters live outside the tape and are bound as leaves.
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    recording: Cell<bool>,
    fault: Cell<Option<(usize, &'static str)>>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self { nodes: RefCell::new(Vec::with_capacity(256)), recording: Cell::new(true), fault: Cell::new(None) }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.borrow().is_empty()
    }

    /// A differentiable leaf.
    pub fn var(&self, value: Tensor) -> Var<'_> {
        self.push_node(value, Op::Leaf, true)
    }

    /// A leaf gradients never flow into.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push_node(value, Op::Leaf, false)
    }

    pub fn scalar(&self, value: f64) -> Var<'_> {
        self.constant(Tensor::scalar(value))
    }

    /// First non-finite value produced on this tape, if any.
    pub fn check_finite(&self) -> Result<(), Error> {
        match self.fault.get() {
            None => Ok(()),
            Some((node, op)) => Err(Error::NonFinite { op, node }),
        }
    }

    pub(crate) fn value_ref(&self, id: usize) -> Ref<'_, Tensor> {
        Ref::map(self.nodes.borrow(), |n| &n[id].value)
    }

    pub(crate) fn is_tracked(&self, id: usize) -> bool {
        self.nodes.borrow()[id].tracked
    }

    fn push_node(&self, value: Tensor, op: Op, tracked: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        let id = nodes.len();
        if self.fault.get().is_none() && !value.is_finite() {
            self.fault.set(Some((id, op.name())));
        }
        nodes.push(Node { value, op, tracked });
        Var { tape: self, id }
    }

    /// Push the result of `op`. The node keeps its operands only when
    /// recording is on and some operand is tracked; otherwise it is a constant.
    pub(crate) fn push_op(&self, value: Tensor, op: Op) -> Var<'_> {
        let tracked = self.recording.get() && {
            let nodes = self.nodes.borrow();
            let mut ops = Vec::with_capacity(2);
            op.operands(&mut ops);
            ops.iter().any(|&i| nodes[i].tracked)
        };
        if tracked {
            self.push_node(value, op, true)
        } else {
            self.push_node(value, Op::Leaf, false)
        }
    }

    /// Gradients of the scalar `output` with respect to each of `inputs`.
    ///
    /// With `create_graph` the gradient computation is itself recorded, so a
    /// function of the returned gradients can be differentiated again. Inputs
    /// that `output` does not depend on get a zero tensor of their shape.
    pub fn grad<'t>(&'t self, output: Var<'t>, inputs: &[Var<'t>], create_graph: bool) -> Result<Vec<Var<'t>>, Error> {
        let out_shape = output.shape();
        if out_shape != [1, 1] {
            return Err(ShapeError::Mismatch { op: "grad", left: out_shape, right: vec![1, 1] }.into());
        }
        let zeros = |v: &Var<'t>| {
            let shape = v.shape();
            self.constant(Tensor::zeros(shape[0], shape[1]))
        };
        let Some(lo) = inputs.iter().map(|v| v.id).min() else {
            return Ok(Vec::new());
        };
        if lo > output.id {
            return Ok(inputs.iter().map(zeros).collect());
        }
        let hi = output.id;

        // Nodes in [lo, hi] that depend on some input.
        let mut relevant = vec![false; hi - lo + 1];
        for v in inputs {
            if v.id <= hi {
                relevant[v.id - lo] = true;
            }
        }
        {
            let nodes = self.nodes.borrow();
            let mut ops = Vec::with_capacity(2);
            for id in lo..=hi {
                if relevant[id - lo] || !nodes[id].tracked {
                    continue;
                }
                nodes[id].op.operands(&mut ops);
                relevant[id - lo] = ops.iter().any(|&p| p >= lo && relevant[p - lo]);
            }
        }

        let saved = self.recording.replace(create_graph);
        let mut adjoint: Vec<Option<usize>> = vec![None; hi - lo + 1];
        adjoint[hi - lo] = Some(self.constant(Tensor::scalar(1.0)).id);

        let mut operands = Vec::with_capacity(2);
        for id in (lo..=hi).rev() {
            let Some(g) = adjoint[id - lo] else { continue };
            if !relevant[id - lo] {
                continue;
            }
            let op = self.nodes.borrow()[id].op;
            op.operands(&mut operands);
            let need: Vec<bool> = operands.iter().map(|&p| p >= lo && relevant[p - lo]).collect();
            if !need.iter().any(|&n| n) {
                continue;
            }
            let g = Var { tape: self, id: g };
            let y = Var { tape: self, id };
            let contribs = self.backward_rule(op, y, g, &need);
            for (&p, c) in operands.iter().zip(contribs) {
                let Some(c) = c else { continue };
                let slot = &mut adjoint[p - lo];
                *slot = Some(match *slot {
                    None => c.id,
                    Some(prev) => (Var { tape: self, id: prev } + c).id,
                });
            }
        }
        self.recording.set(saved);

        Ok(inputs
            .iter()
            .map(|v| {
                if v.id >= lo && v.id <= hi {
                    if let Some(g) = adjoint[v.id - lo] {
                        return Var { tape: self, id: g };
                    }
                }
                zeros(v)
            })
            .collect())
    }

    /// Plain gradient values, without recording the backward pass.
    pub fn gradients<'t>(&'t self, output: Var<'t>, inputs: &[Var<'t>]) -> Result<Vec<Tensor>, Error> {
        Ok(self.grad(output, inputs, false)?.into_iter().map(|v| v.value()).collect())
    }

    /// Vector-Jacobian products for one node: contributions to each operand
    /// flagged in `need`, expressed as tape operations.
    fn backward_rule<'t>(&'t self, op: Op, y: Var<'t>, g: Var<'t>, need: &[bool]) -> Vec<Option<Var<'t>>> {
        let v = |id: usize| Var { tape: self, id };
        let want = |i: usize| need.get(i).copied().unwrap_or(false);
        let mask = |id: usize, f: &dyn Fn(f64) -> f64| {
            let m = self.value_ref(id).map(f);
            self.constant(m)
        };
        match op {
            Op::Leaf => vec![],
            Op::Add(..) => vec![want(0).then_some(g), want(1).then_some(g)],
            Op::Sub(..) => vec![want(0).then_some(g), want(1).then(|| g.scale(-1.0))],
            Op::Mul(a, b) => vec![want(0).then(|| g * v(b)), want(1).then(|| g * v(a))],
            Op::Scale(_, s) => vec![Some(g.scale(s))],
            Op::AddScalar(..) => vec![Some(g)],
            Op::MatMul(a, b) => vec![want(0).then(|| g.matmul(v(b).t())), want(1).then(|| v(a).t().matmul(g))],
            Op::Transpose(_) => vec![Some(g.t())],
            Op::SumRows(a) => {
                let rows = self.value_ref(a).rows();
                vec![Some(g.expand_rows(rows))]
            }
            Op::SumCols(a) => {
                let cols = self.value_ref(a).cols();
                vec![Some(g.expand_cols(cols))]
            }
            Op::ExpandRows(..) => vec![Some(g.sum_rows())],
            Op::ExpandCols(..) => vec![Some(g.sum_cols())],
            Op::ConcatCols(a, b) => {
                let ca = self.value_ref(a).cols();
                let cb = self.value_ref(b).cols();
                vec![want(0).then(|| g.slice_cols(0, ca)), want(1).then(|| g.slice_cols(ca, cb))]
            }
            Op::SliceCols { src, start, .. } => {
                let total = self.value_ref(src).cols();
                vec![Some(g.pad_cols(start, total))]
            }
            Op::PadCols { src, start, .. } => {
                let len = self.value_ref(src).cols();
                vec![Some(g.slice_cols(start, len))]
            }
            Op::SliceRows { src, start } => {
                let total = self.value_ref(src).rows();
                vec![Some(g.pad_rows(start, total))]
            }
            Op::PadRows { src, start } => {
                let len = self.value_ref(src).rows();
                vec![Some(g.slice_rows(start, len))]
            }
            Op::Tanh(_) => vec![Some(g * (y * y).scale(-1.0).add_scalar(1.0))],
            Op::Elu(a) => vec![Some(g * v(a).elu_deriv())],
            Op::EluDeriv(a) => vec![Some(g * v(a).elu_deriv2())],
            Op::EluDeriv2(_) => vec![Some(g * y)],
            Op::Softplus(a) => vec![Some(g * v(a).sigmoid())],
            Op::Sigmoid(_) => vec![Some(g * y * y.scale(-1.0).add_scalar(1.0))],
            Op::Exp(_) => vec![Some(g * y)],
            Op::Sqrt(_) => vec![Some(g * y.recip().scale(0.5))],
            Op::Recip(_) => vec![Some((g * y * y).scale(-1.0))],
            Op::Abs(a) => vec![Some(
                g * mask(a, &|x| {
                    if x > 0.0 {
                        1.0
                    } else if x < 0.0 {
                        -1.0
                    } else {
                        0.0
                    }
                }),
            )],
            Op::Clamp(a, lo, hi) => {
                vec![Some(g * mask(a, &|x| if x >= lo && x <= hi { 1.0 } else { 0.0 }))]
            }
            Op::Minimum(a, b) => {
                let pick_a = {
                    let (va, vb) = (self.value_ref(a), self.value_ref(b));
                    va.zip_map(&vb, |x, y| if x <= y { 1.0 } else { 0.0 })
                };
                let pick_b = pick_a.map(|m| 1.0 - m);
                vec![want(0).then(|| g * self.constant(pick_a)), want(1).then(|| g * self.constant(pick_b))]
            }
        }
    }
}
