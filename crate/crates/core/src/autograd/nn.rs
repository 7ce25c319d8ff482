//! Network blocks composed from tape primitives.

use super::{Tape, TensorError, Var};

type Result<T> = std::result::Result<T, TensorError>;

/// `x W + b` with `b` a `1 x out` row.
pub fn linear(tape: &mut Tape, x: Var, w: Var, b: Var) -> Result<Var> {
    let xw = tape.matmul(x, w)?;
    tape.add(xw, b)
}

/// LSTM weights with the four gates stacked column-wise in the order
/// input, forget, cell, output: `w_x: (d_in, 4h)`, `w_h: (h, 4h)`,
/// `b: (1, 4h)`.
#[derive(Debug, Clone, Copy)]
pub struct LstmParams {
    pub w_x: Var,
    pub w_h: Var,
    pub b: Var,
}

/// One LSTM step over a batch of rows.
///
/// `i = σ(x W_i + h U_i + b_i)`, `f = σ(..)`, `g = tanh(..)`, `o = σ(..)`,
/// `c' = f ⊙ c + i ⊙ g`, `h' = o ⊙ tanh(c')`.
pub fn lstm_cell(tape: &mut Tape, x: Var, h: Var, c: Var, p: &LstmParams) -> Result<(Var, Var)> {
    let hidden = tape.value(h).cols();
    let gates_shape = tape.value(p.w_h).shape().to_vec();
    if gates_shape != [hidden, 4 * hidden] || tape.value(c).shape() != tape.value(h).shape() {
        return Err(TensorError::Shape {
            op: "lstm_cell",
            lhs: tape.value(h).shape().to_vec(),
            rhs: gates_shape,
        });
    }
    let xw = tape.matmul(x, p.w_x)?;
    let hu = tape.matmul(h, p.w_h)?;
    let pre = tape.add(xw, hu)?;
    let pre = tape.add(pre, p.b)?;
    let i = tape.slice_cols(pre, 0, hidden)?;
    let f = tape.slice_cols(pre, hidden, 2 * hidden)?;
    let g = tape.slice_cols(pre, 2 * hidden, 3 * hidden)?;
    let o = tape.slice_cols(pre, 3 * hidden, 4 * hidden)?;
    let i = tape.sigmoid(i)?;
    let f = tape.sigmoid(f)?;
    let g = tape.tanh(g)?;
    let o = tape.sigmoid(o)?;
    let fc = tape.mul(f, c)?;
    let ig = tape.mul(i, g)?;
    let c_next = tape.add(fc, ig)?;
    let tc = tape.tanh(c_next)?;
    let h_next = tape.mul(o, tc)?;
    Ok((h_next, c_next))
}

/// `softmax(Q K^T / sqrt(d)) V` for a single block.
pub fn scaled_dot_attention(tape: &mut Tape, q: Var, k: Var, v: Var) -> Result<Var> {
    tape.attention(q, k, v, 1)
}
