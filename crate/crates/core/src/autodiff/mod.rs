//! Reverse-mode automatic differentiation over dense `f64` matrices.
//!
//! Operations are recorded on a [`Tape`] and addressed through copyable
//! [`Var`] handles. [`Tape::grad`] walks the tape backwards; every
//! vector-Jacobian product is itself expressed with tape operations, so with
//! `create_graph = true` the returned gradients can be differentiated again.
//! That is what makes penalties on input gradients (Jacobian norms) trainable.
//!
//! All tape arithmetic is rank 2: a batch is `[rows, cols]` with one sample
//! per row, and a scalar is `[1, 1]`.

mod jacobian;
mod tape;

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

pub use jacobian::{jacobian_2norm, jacobian_rows, JACOBIAN_POWER_ITERS};
pub use tape::Tape;

use crate::error::ShapeError;
use crate::tensor::{matmul_into, Tensor};
use tape::Op;

/// Elementwise nonlinearities used by the policy networks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    /// ELU with alpha = 1.
    Elu,
    Softplus,
    Linear,
}

/// Overflow-safe `ln(1 + e^x)`.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Inverse of [`softplus`] for `y > 0`.
pub fn softplus_inv(y: f64) -> f64 {
    // ln(e^y - 1) = y + ln(1 - e^{-y})
    y + (-(-y).exp()).ln_1p()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

/// Apply an activation to a plain slice.
pub fn activate(kind: Activation, x: f64) -> f64 {
    match kind {
        Activation::Tanh => x.tanh(),
        Activation::Elu => elu(x),
        Activation::Softplus => softplus(x),
        Activation::Linear => x,
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    pub(crate) tape: &'t Tape,
    pub(crate) id: usize,
}

impl PartialEq for Var<'_> {
    fn eq(&self, other: &Self) -> bool {
        std::ptr::eq(self.tape, other.tape) && self.id == other.id
    }
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var#{}{:?}", self.id, self.tape.value_ref(self.id))
    }
}

fn shape2(t: &Tensor, op: &'static str) -> Result<(usize, usize), ShapeError> {
    match *t.shape() {
        [r, c] => Ok((r, c)),
        _ => Err(ShapeError::Rank { op, shape: t.shape().to_vec() }),
    }
}

impl<'t> Var<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn value(&self) -> Tensor {
        self.tape.value_ref(self.id).clone()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.tape.value_ref(self.id).shape().to_vec()
    }

    pub fn rows(&self) -> usize {
        self.tape.value_ref(self.id).rows()
    }

    pub fn cols(&self) -> usize {
        self.tape.value_ref(self.id).cols()
    }

    /// Value of a `[1, 1]` node.
    pub fn item(&self) -> f64 {
        self.tape.value_ref(self.id).item()
    }

    /// Whether gradients can flow from this node to a differentiable leaf.
    pub fn is_tracked(&self) -> bool {
        self.tape.is_tracked(self.id)
    }

    /// Same value, cut from the graph.
    pub fn detach(self) -> Var<'t> {
        self.tape.constant(self.value())
    }

    /// `self` if tracked, otherwise a fresh differentiable leaf with the same
    /// value (so gradients with respect to data inputs can be taken).
    pub fn ensure_tracked(self) -> Var<'t> {
        if self.is_tracked() {
            self
        } else {
            self.tape.var(self.value())
        }
    }

    fn unary(self, op: Op, f: impl Fn(f64) -> f64) -> Var<'t> {
        let out = self.tape.value_ref(self.id).map(f);
        self.tape.push_op(out, op)
    }

    fn elementwise(
        self,
        other: Var<'t>,
        name: &'static str,
        op: Op,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Var<'t>, ShapeError> {
        let out = {
            let a = self.tape.value_ref(self.id);
            let b = self.tape.value_ref(other.id);
            if a.shape() != b.shape() {
                return Err(ShapeError::Mismatch { op: name, left: a.shape().to_vec(), right: b.shape().to_vec() });
            }
            a.zip_map(&b, f)
        };
        Ok(self.tape.push_op(out, op))
    }

    pub fn try_add(self, other: Var<'t>) -> Result<Var<'t>, ShapeError> {
        self.elementwise(other, "add", Op::Add(self.id, other.id), |a, b| a + b)
    }

    pub fn try_sub(self, other: Var<'t>) -> Result<Var<'t>, ShapeError> {
        self.elementwise(other, "sub", Op::Sub(self.id, other.id), |a, b| a - b)
    }

    pub fn try_mul(self, other: Var<'t>) -> Result<Var<'t>, ShapeError> {
        self.elementwise(other, "mul", Op::Mul(self.id, other.id), |a, b| a * b)
    }

    pub fn try_minimum(self, other: Var<'t>) -> Result<Var<'t>, ShapeError> {
        self.elementwise(other, "minimum", Op::Minimum(self.id, other.id), f64::min)
    }

    pub fn minimum(self, other: Var<'t>) -> Var<'t> {
        self.try_minimum(other).unwrap_or_else(|e| panic!("{e}"))
    }

    pub fn try_matmul(self, other: Var<'t>) -> Result<Var<'t>, ShapeError> {
        let out = {
            let a = self.tape.value_ref(self.id);
            let b = self.tape.value_ref(other.id);
            let (n, k) = shape2(&a, "matmul")?;
            let (k2, m) = shape2(&b, "matmul")?;
            if k != k2 {
                return Err(ShapeError::Mismatch { op: "matmul", left: a.shape().to_vec(), right: b.shape().to_vec() });
            }
            let mut out = vec![0.0; n * m];
            matmul_into(a.data(), b.data(), &mut out, n, k, m);
            Tensor::matrix(n, m, out)
        };
        Ok(self.tape.push_op(out, Op::MatMul(self.id, other.id)))
    }

    pub fn matmul(self, other: Var<'t>) -> Var<'t> {
        self.try_matmul(other).unwrap_or_else(|e| panic!("{e}"))
    }

    /// Transpose.
    pub fn t(self) -> Var<'t> {
        let out = self.tape.value_ref(self.id).transpose();
        self.tape.push_op(out, Op::Transpose(self.id))
    }

    pub fn scale(self, s: f64) -> Var<'t> {
        self.unary(Op::Scale(self.id, s), |x| x * s)
    }

    pub fn add_scalar(self, s: f64) -> Var<'t> {
        self.unary(Op::AddScalar(self.id), |x| x + s)
    }

    /// `[r, c] -> [1, c]`
    pub fn sum_rows(self) -> Var<'t> {
        let out = {
            let a = self.tape.value_ref(self.id);
            let (r, c) = (a.rows(), a.cols());
            let mut out = vec![0.0; c];
            for i in 0..r {
                for (o, x) in out.iter_mut().zip(&a.data()[i * c..(i + 1) * c]) {
                    *o += x;
                }
            }
            Tensor::matrix(1, c, out)
        };
        self.tape.push_op(out, Op::SumRows(self.id))
    }

    /// `[r, c] -> [r, 1]`
    pub fn sum_cols(self) -> Var<'t> {
        let out = {
            let a = self.tape.value_ref(self.id);
            let c = a.cols();
            Tensor::column(&a.data().chunks(c).map(|row| row.iter().sum()).collect::<Vec<_>>())
        };
        self.tape.push_op(out, Op::SumCols(self.id))
    }

    /// Sum of every entry, as `[1, 1]`.
    pub fn sum(self) -> Var<'t> {
        self.sum_rows().sum_cols()
    }

    pub fn mean(self) -> Var<'t> {
        let n = self.tape.value_ref(self.id).len() as f64;
        self.sum().scale(1.0 / n)
    }

    /// `[1, c] -> [rows, c]`
    pub fn expand_rows(self, rows: usize) -> Var<'t> {
        let out = {
            let a = self.tape.value_ref(self.id);
            assert_eq!(a.rows(), 1, "expand_rows expects one row, got {:?}", a.shape());
            Tensor::matrix(rows, a.cols(), a.data().repeat(rows))
        };
        self.tape.push_op(out, Op::ExpandRows(self.id))
    }

    /// `[r, 1] -> [r, cols]`
    pub fn expand_cols(self, cols: usize) -> Var<'t> {
        let out = {
            let a = self.tape.value_ref(self.id);
            assert_eq!(a.cols(), 1, "expand_cols expects one column, got {:?}", a.shape());
            let data = a.data().iter().flat_map(|&x| std::iter::repeat_n(x, cols)).collect();
            Tensor::matrix(a.rows(), cols, data)
        };
        self.tape.push_op(out, Op::ExpandCols(self.id))
    }

    /// Broadcast a `[1, 1]` node to `[rows, cols]`.
    pub fn expand(self, rows: usize, cols: usize) -> Var<'t> {
        self.expand_cols(cols).expand_rows(rows)
    }

    /// Add a `[1, c]` row to every row.
    pub fn add_row(self, row: Var<'t>) -> Var<'t> {
        let r = self.rows();
        self + row.expand_rows(r)
    }

    /// Multiply every column by a `[r, 1]` column.
    pub fn mul_col(self, col: Var<'t>) -> Var<'t> {
        let c = self.cols();
        self * col.expand_cols(c)
    }

    pub fn try_concat_cols(self, other: Var<'t>) -> Result<Var<'t>, ShapeError> {
        let out = {
            let a = self.tape.value_ref(self.id);
            let b = self.tape.value_ref(other.id);
            let (ra, ca) = shape2(&a, "concat_cols")?;
            let (rb, cb) = shape2(&b, "concat_cols")?;
            if ra != rb {
                return Err(ShapeError::Mismatch {
                    op: "concat_cols",
                    left: a.shape().to_vec(),
                    right: b.shape().to_vec(),
                });
            }
            let mut out = Vec::with_capacity(ra * (ca + cb));
            for i in 0..ra {
                out.extend_from_slice(a.row_slice(i));
                out.extend_from_slice(b.row_slice(i));
            }
            Tensor::matrix(ra, ca + cb, out)
        };
        Ok(self.tape.push_op(out, Op::ConcatCols(self.id, other.id)))
    }

    pub fn concat_cols(self, other: Var<'t>) -> Var<'t> {
        self.try_concat_cols(other).unwrap_or_else(|e| panic!("{e}"))
    }

    /// Columns `start..start + len`.
    pub fn slice_cols(self, start: usize, len: usize) -> Var<'t> {
        let out = {
            let a = self.tape.value_ref(self.id);
            let c = a.cols();
            assert!(start + len <= c, "slice {start}+{len} out of {c} columns");
            let data = a.data().chunks(c).flat_map(|row| &row[start..start + len]).copied().collect();
            Tensor::matrix(a.rows(), len, data)
        };
        self.tape.push_op(out, Op::SliceCols { src: self.id, start })
    }

    /// Zero-pad columns so the result has `total` columns with `self` at `start`.
    pub fn pad_cols(self, start: usize, total: usize) -> Var<'t> {
        let out = {
            let a = self.tape.value_ref(self.id);
            let (r, c) = (a.rows(), a.cols());
            assert!(start + c <= total, "pad {start}+{c} exceeds {total} columns");
            let mut data = vec![0.0; r * total];
            for i in 0..r {
                data[i * total + start..i * total + start + c].copy_from_slice(a.row_slice(i));
            }
            Tensor::matrix(r, total, data)
        };
        self.tape.push_op(out, Op::PadCols { src: self.id, start })
    }

    /// Rows `start..start + len`.
    pub fn slice_rows(self, start: usize, len: usize) -> Var<'t> {
        let out = {
            let a = self.tape.value_ref(self.id);
            let (r, c) = (a.rows(), a.cols());
            assert!(start + len <= r, "slice {start}+{len} out of {r} rows");
            Tensor::matrix(len, c, a.data()[start * c..(start + len) * c].to_vec())
        };
        self.tape.push_op(out, Op::SliceRows { src: self.id, start })
    }

    /// Zero-pad rows so the result has `total` rows with `self` at `start`.
    pub fn pad_rows(self, start: usize, total: usize) -> Var<'t> {
        let out = {
            let a = self.tape.value_ref(self.id);
            let (r, c) = (a.rows(), a.cols());
            assert!(start + r <= total, "pad {start}+{r} exceeds {total} rows");
            let mut data = vec![0.0; total * c];
            data[start * c..(start + r) * c].copy_from_slice(a.data());
            Tensor::matrix(total, c, data)
        };
        self.tape.push_op(out, Op::PadRows { src: self.id, start })
    }

    pub fn tanh(self) -> Var<'t> {
        self.unary(Op::Tanh(self.id), f64::tanh)
    }

    pub fn elu(self) -> Var<'t> {
        self.unary(Op::Elu(self.id), elu)
    }

    /// Derivative of ELU: 1 for x > 0, e^x otherwise.
    pub fn elu_deriv(self) -> Var<'t> {
        self.unary(Op::EluDeriv(self.id), |x| if x > 0.0 { 1.0 } else { x.exp() })
    }

    /// Second derivative of ELU: 0 for x > 0, e^x otherwise.
    pub fn elu_deriv2(self) -> Var<'t> {
        self.unary(Op::EluDeriv2(self.id), |x| if x > 0.0 { 0.0 } else { x.exp() })
    }

    pub fn softplus(self) -> Var<'t> {
        self.unary(Op::Softplus(self.id), softplus)
    }

    pub fn sigmoid(self) -> Var<'t> {
        self.unary(Op::Sigmoid(self.id), sigmoid)
    }

    pub fn exp(self) -> Var<'t> {
        self.unary(Op::Exp(self.id), f64::exp)
    }

    /// Square root; its derivative at 0 is taken as 0.
    pub fn sqrt(self) -> Var<'t> {
        self.unary(Op::Sqrt(self.id), f64::sqrt)
    }

    /// `1/x`, with `1/0` defined as 0. Callers that can hit zero must guard
    /// the denominator themselves (e.g. add an epsilon) when 0 is wrong.
    pub fn recip(self) -> Var<'t> {
        self.unary(Op::Recip(self.id), |x| if x == 0.0 { 0.0 } else { 1.0 / x })
    }

    pub fn abs(self) -> Var<'t> {
        self.unary(Op::Abs(self.id), f64::abs)
    }

    pub fn clamp(self, lo: f64, hi: f64) -> Var<'t> {
        self.unary(Op::Clamp(self.id, lo, hi), |x| x.clamp(lo, hi))
    }

    pub fn square(self) -> Var<'t> {
        self * self
    }

    /// Row-wise Euclidean norm, `[r, c] -> [r, 1]`.
    pub fn row_norms(self) -> Var<'t> {
        self.square().sum_cols().sqrt()
    }

    pub fn activation(self, kind: Activation) -> Var<'t> {
        match kind {
            Activation::Tanh => self.tanh(),
            Activation::Elu => self.elu(),
            Activation::Softplus => self.softplus(),
            Activation::Linear => self,
        }
    }
}

impl<'t> Add for Var<'t> {
    type Output = Var<'t>;
    fn add(self, rhs: Var<'t>) -> Var<'t> {
        self.try_add(rhs).unwrap_or_else(|e| panic!("{e}"))
    }
}

impl<'t> Sub for Var<'t> {
    type Output = Var<'t>;
    fn sub(self, rhs: Var<'t>) -> Var<'t> {
        self.try_sub(rhs).unwrap_or_else(|e| panic!("{e}"))
    }
}

impl<'t> Mul for Var<'t> {
    type Output = Var<'t>;
    fn mul(self, rhs: Var<'t>) -> Var<'t> {
        self.try_mul(rhs).unwrap_or_else(|e| panic!("{e}"))
    }
}

impl<'t> Neg for Var<'t> {
    type Output = Var<'t>;
    fn neg(self) -> Var<'t> {
        self.scale(-1.0)
    }
}
