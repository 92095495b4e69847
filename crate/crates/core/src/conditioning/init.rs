//! Data-dependent starting point for training.
//!
//! Each ReLU layer starts as `[V; −V]`, so `relu(V·e) − relu(−V·e) = V·e` and
//! the network is exactly linear on the leading principal subspace of its
//! input. Read-out weights are the ridge least-squares fit to the targets.

use super::interface::{ConditioningInterface, EncoderKind, TRANSFER_HIDDEN};
use super::train::TrainingPair;
use crate::error::{Error, Result};
use crate::linalg::{svd, Cholesky, Matrix};

const RIDGE: f64 = 1e-10;

pub(crate) fn spectral_init(
    kind: EncoderKind,
    rank: usize,
    use_bias: bool,
    pairs: &[TrainingPair],
) -> Result<ConditioningInterface> {
    let dim = pairs[0].0.len();
    let mut iface = ConditioningInterface::zeros(kind, rank, dim, use_bias);
    if rank == 0 || rank > dim {
        return Err(Error::InvalidRank { rank, dim });
    }

    let x = rows_of(pairs.iter().map(|(x, _)| x.as_slice()), dim);
    let dirs = principal_directions(&x, rank)?;
    iface.w1 = match kind {
        EncoderKind::Linear => dirs,
        EncoderKind::Mlp => paired(&dirs),
    };
    let hidden = x.matmul(&iface.w1.transpose())?.map(|v| match kind {
        EncoderKind::Linear => v,
        EncoderKind::Mlp => v.max(0.0),
    });
    let t_enc = rows_of(pairs.iter().map(|(_, b)| b.b_enc.as_slice()), dim);
    iface.w2 = least_squares(&hidden, &t_enc)?;

    let e = hidden.matmul(&iface.w2.transpose())?;
    iface.t_in = paired(&principal_directions(&e, TRANSFER_HIDDEN / 2)?);
    let transfer = e.matmul(&iface.t_in.transpose())?.map(|v| v.max(0.0));
    let t_dec = rows_of(pairs.iter().map(|(_, b)| b.b_dec.as_slice()), dim);
    iface.t_out = least_squares(&transfer, &t_dec)?;
    Ok(iface)
}

fn rows_of<'a>(rows: impl Iterator<Item = &'a [f64]>, dim: usize) -> Matrix {
    let data: Vec<f64> = rows.flat_map(|r| r.iter().copied()).collect();
    let n = data.len() / dim;
    Matrix::from_vec(n, dim, data).expect("training rows are finite and rectangular")
}

/// Leading `k` right singular vectors of `samples` (one sample per row), as rows.
fn principal_directions(samples: &Matrix, k: usize) -> Result<Matrix> {
    let k = k.min(samples.cols());
    let v = svd(samples)?.v;
    let cols: Vec<Vec<f64>> = (0..k.min(v.cols())).map(|j| v.column(j)).collect();
    let mut out = Matrix::from_columns(&cols).transpose();
    if out.rows() < k {
        let mut padded = Matrix::zeros(k, samples.cols());
        padded.set_block(0, 0, &out);
        out = padded;
    }
    Ok(out)
}

fn paired(v: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(2 * v.rows(), v.cols());
    out.set_block(0, 0, v);
    out.set_block(v.rows(), 0, &v.scale(-1.0));
    out
}

/// `W` minimizing `‖F·Wᵀ − T‖²` plus a vanishing ridge term; `W` is `targets×features`.
fn least_squares(features: &Matrix, targets: &Matrix) -> Result<Matrix> {
    let mut gram = features.t_matmul(features)?;
    let h = gram.rows();
    let trace: f64 = gram.diag().iter().sum();
    let ridge = RIDGE * (trace / h as f64).max(f64::MIN_POSITIVE) + f64::MIN_POSITIVE;
    for i in 0..h {
        gram[(i, i)] += ridge;
    }
    let cross = features.t_matmul(targets)?;
    let chol = Cholesky::factor(&gram)?;
    let cols = (0..cross.cols())
        .map(|j| chol.solve(&cross.column(j)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Matrix::from_columns(&cols).transpose())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conditioning::BiasPair;
    use crate::rng::{normal_vec, stream};

    #[test]
    fn recovers_a_low_rank_linear_pair_exactly() {
        let mut r = stream(11, 0);
        let dim = 6;
        let g = normal_vec(&mut r, dim * 2, 1.0);
        let pairs: Vec<TrainingPair> = (0..40)
            .map(|_| {
                let z = normal_vec(&mut r, 2, 1.0);
                let x: Vec<f64> = (0..dim).map(|i| g[2 * i] * z[0] + g[2 * i + 1] * z[1]).collect();
                let b_enc = x.iter().map(|v| 0.5 * v).collect();
                let b_dec = x.iter().rev().map(|v| -0.3 * v).collect();
                (x, BiasPair { b_enc, b_dec })
            })
            .collect();
        for kind in [EncoderKind::Linear, EncoderKind::Mlp] {
            let iface = spectral_init(kind, 2, false, &pairs).unwrap();
            for (x, b) in &pairs {
                let out = iface.forward(x).unwrap();
                for (p, q) in out.b_enc.iter().zip(&b.b_enc).chain(out.b_dec.iter().zip(&b.b_dec)) {
                    assert!((p - q).abs() < 1e-6, "{kind:?}: {p} vs {q}");
                }
            }
        }
    }

    #[test]
    fn paired_rows_are_linear_through_relu() {
        let v = Matrix::from_rows(&[&[1.0, -2.0], &[0.5, 0.25]]);
        let p = paired(&v);
        let e = [0.3, 0.7];
        let h: Vec<f64> = p.matvec(&e).unwrap().iter().map(|u| u.max(0.0)).collect();
        let lin = v.matvec(&e).unwrap();
        for i in 0..2 {
            assert!((h[i] - h[i + 2] - lin[i]).abs() < 1e-15);
        }
    }
}
