use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::Var;

/// Power iterations on `JᵀJ` used by [`jacobian_2norm`].
pub const JACOBIAN_POWER_ITERS: usize = 15;

/// Per-sample Jacobian rows of a batched map `x [B, n] -> y [B, m]`.
///
/// Returns `m` nodes of shape `[B, n]`; row `b` of entry `k` is
/// `∂y[b, k] / ∂x[b, :]`. Samples must not interact (row `b` of `y` depends on
/// row `b` of `x` only), which holds for every network here. The result is
/// recorded on the tape and can be differentiated again.
pub fn jacobian_rows<'t>(y: Var<'t>, x: Var<'t>) -> Result<Vec<Var<'t>>> {
    if !x.is_tracked() {
        return Err(Error::Input("Jacobian input must be a tracked node".into()));
    }
    if y.rows() != x.rows() {
        return Err(Error::Input(format!(
            "Jacobian needs matching batch sizes, got {} outputs for {} inputs",
            y.rows(),
            x.rows()
        )));
    }
    let tape = x.tape();
    (0..y.cols())
        .map(|k| {
            let s = y.slice_cols(k, 1).sum();
            Ok(tape.grad(s, &[x], true)?.remove(0))
        })
        .collect()
}

/// Spectral norm `‖J(x_b)‖₂` of each sample's Jacobian, as a `[B, 1]` node.
///
/// The top right-singular vector is found by power iteration on `JᵀJ`
/// (outside the graph); the norm is then `‖J v‖` on the tape, whose gradient
/// at the converged `v` is the gradient of the spectral norm. A zero Jacobian
/// gives 0.
pub fn jacobian_2norm<'t>(y: Var<'t>, x: Var<'t>) -> Result<Var<'t>> {
    let rows = jacobian_rows(y, x)?;
    let tape = x.tape();
    let (batch, n) = (x.rows(), x.cols());
    let values: Vec<Tensor> = rows.iter().map(|r| r.value()).collect();

    let mut dirs = Vec::with_capacity(batch * n);
    for b in 0..batch {
        let jac: Vec<&[f64]> = values.iter().map(|t| t.row_slice(b)).collect();
        dirs.extend(top_right_singular(&jac, n, JACOBIAN_POWER_ITERS));
    }
    let dirs = tape.constant(Tensor::matrix(batch, n, dirs));

    let mut sq: Option<Var<'t>> = None;
    for r in rows {
        let u = (r * dirs).sum_cols().square();
        sq = Some(match sq {
            None => u,
            Some(acc) => acc + u,
        });
    }
    Ok(sq.expect("network has at least one output").sqrt())
}

/// Unit vector approximating the top right-singular vector of the `m × n`
/// matrix whose rows are `jac`. Zero matrix gives the zero vector.
fn top_right_singular(jac: &[&[f64]], n: usize, iters: usize) -> Vec<f64> {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    // Start from the largest row: exact for a single output.
    let Some(start) = jac.iter().max_by(|a, b| norm(a).total_cmp(&norm(b))) else {
        return vec![0.0; n];
    };
    let s = norm(start);
    if s == 0.0 {
        return vec![0.0; n];
    }
    let mut v: Vec<f64> = start.iter().map(|x| x / s).collect();
    let mut next = vec![0.0; n];
    for _ in 0..iters {
        next.iter_mut().for_each(|x| *x = 0.0);
        for row in jac {
            let proj: f64 = row.iter().zip(&v).map(|(a, b)| a * b).sum();
            for (o, a) in next.iter_mut().zip(row.iter()) {
                *o += proj * a;
            }
        }
        let s = norm(&next);
        if s == 0.0 {
            break;
        }
        for (vi, ni) in v.iter_mut().zip(&next) {
            *vi = ni / s;
        }
    }
    v
}
