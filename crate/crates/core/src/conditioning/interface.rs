use rand::Rng;
use serde::{Deserialize, Serialize};

use super::BiasPair;
use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, Matrix};
use crate::rng::normal_vec;

/// Hidden width of the transfer network.
pub const TRANSFER_HIDDEN: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EncoderKind {
    /// `b_enc = W₂·W₁·x`, `W₁: k×D`.
    Linear,
    /// `b_enc = W₂·relu(W₁·x)` with `2k` hidden units, enough to represent any
    /// rank-`k` linear map.
    Mlp,
}

impl EncoderKind {
    pub fn hidden(self, k: usize) -> usize {
        match self {
            EncoderKind::Linear => k,
            EncoderKind::Mlp => 2 * k,
        }
    }
}

/// Bottleneck encoder `E_k` followed by the transfer network
/// `T(e) = T_out·relu(T_in·e)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditioningInterface {
    pub kind: EncoderKind,
    pub rank: usize,
    pub w1: Matrix,
    pub w2: Matrix,
    pub t_in: Matrix,
    pub t_out: Matrix,
    pub t_in_bias: Option<Vec<f64>>,
    pub t_out_bias: Option<Vec<f64>>,
}

/// Exact parameter count of a `(k, D)` interface with a linear encoder.
pub fn count_parameters(rank: usize, dim: usize, use_bias: bool) -> usize {
    let base = 2 * rank * dim + 2 * TRANSFER_HIDDEN * dim;
    if use_bias {
        base + TRANSFER_HIDDEN + dim
    } else {
        base
    }
}

fn gaussian(rng: &mut impl Rng, rows: usize, cols: usize) -> Matrix {
    let std = (cols as f64).recip().sqrt();
    Matrix::from_vec(rows, cols, normal_vec(rng, rows * cols, std)).expect("finite gaussian")
}

/// Intermediate activations of one forward pass.
pub(crate) struct Trace {
    pub pre_hidden: Vec<f64>,
    pub hidden: Vec<f64>,
    pub b_enc: Vec<f64>,
    pub pre_transfer: Vec<f64>,
    pub transfer: Vec<f64>,
    pub b_dec: Vec<f64>,
}

/// Gradients with the same shapes as the interface parameters.
#[derive(Clone, Debug)]
pub struct Gradients {
    pub w1: Matrix,
    pub w2: Matrix,
    pub t_in: Matrix,
    pub t_out: Matrix,
    pub t_in_bias: Option<Vec<f64>>,
    pub t_out_bias: Option<Vec<f64>>,
}

impl ConditioningInterface {
    /// Weights i.i.d. Gaussian with std `1/√fan_in`, biases zero.
    pub fn init(
        kind: EncoderKind,
        rank: usize,
        dim: usize,
        use_bias: bool,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if rank == 0 || rank > dim {
            return Err(Error::InvalidRank { rank, dim });
        }
        let h = kind.hidden(rank);
        Ok(Self {
            kind,
            rank,
            w1: gaussian(rng, h, dim),
            w2: gaussian(rng, dim, h),
            t_in: gaussian(rng, TRANSFER_HIDDEN, dim),
            t_out: gaussian(rng, dim, TRANSFER_HIDDEN),
            t_in_bias: use_bias.then(|| vec![0.0; TRANSFER_HIDDEN]),
            t_out_bias: use_bias.then(|| vec![0.0; dim]),
        })
    }

    pub fn zeros(kind: EncoderKind, rank: usize, dim: usize, use_bias: bool) -> Self {
        let h = kind.hidden(rank);
        Self {
            kind,
            rank,
            w1: Matrix::zeros(h, dim),
            w2: Matrix::zeros(dim, h),
            t_in: Matrix::zeros(TRANSFER_HIDDEN, dim),
            t_out: Matrix::zeros(dim, TRANSFER_HIDDEN),
            t_in_bias: use_bias.then(|| vec![0.0; TRANSFER_HIDDEN]),
            t_out_bias: use_bias.then(|| vec![0.0; dim]),
        }
    }

    pub fn dim(&self) -> usize {
        self.w1.cols()
    }

    pub fn use_bias(&self) -> bool {
        self.t_in_bias.is_some()
    }

    pub fn parameter_count(&self) -> usize {
        self.w1.as_slice().len()
            + self.w2.as_slice().len()
            + self.t_in.as_slice().len()
            + self.t_out.as_slice().len()
            + self.t_in_bias.as_ref().map_or(0, Vec::len)
            + self.t_out_bias.as_ref().map_or(0, Vec::len)
    }

    /// Parameters of the encoder alone (`W₁`, `W₂`).
    pub fn encoder_parameter_count(&self) -> usize {
        self.w1.as_slice().len() + self.w2.as_slice().len()
    }

    pub(crate) fn trace(&self, x: &[f64]) -> Result<Trace> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "interface input",
                expected: self.dim(),
                found: x.len(),
            });
        }
        let pre_hidden = self.w1.matvec(x)?;
        let hidden = match self.kind {
            EncoderKind::Linear => pre_hidden.clone(),
            EncoderKind::Mlp => pre_hidden.iter().map(|v| v.max(0.0)).collect(),
        };
        let b_enc = self.w2.matvec(&hidden)?;
        let mut pre_transfer = self.t_in.matvec(&b_enc)?;
        if let Some(c) = &self.t_in_bias {
            axpy(1.0, c, &mut pre_transfer);
        }
        let transfer: Vec<f64> = pre_transfer.iter().map(|v| v.max(0.0)).collect();
        let mut b_dec = self.t_out.matvec(&transfer)?;
        if let Some(c) = &self.t_out_bias {
            axpy(1.0, c, &mut b_dec);
        }
        Ok(Trace {
            pre_hidden,
            hidden,
            b_enc,
            pre_transfer,
            transfer,
            b_dec,
        })
    }

    pub fn forward(&self, x_enc: &[f64]) -> Result<BiasPair> {
        let t = self.trace(x_enc)?;
        Ok(BiasPair {
            b_enc: t.b_enc,
            b_dec: t.b_dec,
        })
    }

    /// Encoder output only.
    pub fn encode(&self, x_enc: &[f64]) -> Result<Vec<f64>> {
        Ok(self.trace(x_enc)?.b_enc)
    }

    pub(crate) fn zero_gradients(&self) -> Gradients {
        Gradients {
            w1: Matrix::zeros(self.w1.rows(), self.w1.cols()),
            w2: Matrix::zeros(self.w2.rows(), self.w2.cols()),
            t_in: Matrix::zeros(self.t_in.rows(), self.t_in.cols()),
            t_out: Matrix::zeros(self.t_out.rows(), self.t_out.cols()),
            t_in_bias: self.t_in_bias.as_ref().map(|c| vec![0.0; c.len()]),
            t_out_bias: self.t_out_bias.as_ref().map(|c| vec![0.0; c.len()]),
        }
    }

    /// Accumulates the gradient of `w_enc·‖b̂_enc − t_enc‖² + w_dec·‖b̂_dec − t_dec‖²`.
    pub(crate) fn accumulate_gradient(
        &self,
        x: &[f64],
        target: &BiasPair,
        w_enc: f64,
        w_dec: f64,
        grad: &mut Gradients,
    ) -> Result<f64> {
        let t = self.trace(x)?;
        let r_dec: Vec<f64> = t.b_dec.iter().zip(&target.b_dec).map(|(a, b)| a - b).collect();
        let r_enc: Vec<f64> = t.b_enc.iter().zip(&target.b_enc).map(|(a, b)| a - b).collect();
        let loss = w_enc * dot(&r_enc, &r_enc) + w_dec * dot(&r_dec, &r_dec);

        let g_dec: Vec<f64> = r_dec.iter().map(|r| 2.0 * w_dec * r).collect();
        outer_add(&mut grad.t_out, &g_dec, &t.transfer);
        if let Some(gb) = &mut grad.t_out_bias {
            axpy(1.0, &g_dec, gb);
        }
        let g_transfer = self.t_out.t_matvec(&g_dec)?;
        let g_pre_transfer: Vec<f64> = g_transfer
            .iter()
            .zip(&t.pre_transfer)
            .map(|(g, p)| if *p > 0.0 { *g } else { 0.0 })
            .collect();
        outer_add(&mut grad.t_in, &g_pre_transfer, &t.b_enc);
        if let Some(gb) = &mut grad.t_in_bias {
            axpy(1.0, &g_pre_transfer, gb);
        }
        let mut g_enc = self.t_in.t_matvec(&g_pre_transfer)?;
        axpy(2.0 * w_enc, &r_enc, &mut g_enc);
        outer_add(&mut grad.w2, &g_enc, &t.hidden);
        let g_hidden = self.w2.t_matvec(&g_enc)?;
        let g_pre_hidden: Vec<f64> = match self.kind {
            EncoderKind::Linear => g_hidden,
            EncoderKind::Mlp => g_hidden
                .iter()
                .zip(&t.pre_hidden)
                .map(|(g, p)| if *p > 0.0 { *g } else { 0.0 })
                .collect(),
        };
        outer_add(&mut grad.w1, &g_pre_hidden, x);
        Ok(loss)
    }

    /// Flat view of every parameter, in the order
    /// `w1, w2, t_in, t_out, t_in_bias, t_out_bias`.
    pub fn parameters(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.parameter_count());
        p.extend_from_slice(self.w1.as_slice());
        p.extend_from_slice(self.w2.as_slice());
        p.extend_from_slice(self.t_in.as_slice());
        p.extend_from_slice(self.t_out.as_slice());
        if let Some(c) = &self.t_in_bias {
            p.extend_from_slice(c);
        }
        if let Some(c) = &self.t_out_bias {
            p.extend_from_slice(c);
        }
        p
    }

    pub fn set_parameters(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.parameter_count() {
            return Err(Error::DimensionMismatch {
                context: "interface parameter vector",
                expected: self.parameter_count(),
                found: p.len(),
            });
        }
        let mut rest = p;
        for m in [&mut self.w1, &mut self.w2, &mut self.t_in, &mut self.t_out] {
            let n = m.as_slice().len();
            m.data_mut().copy_from_slice(&rest[..n]);
            rest = &rest[n..];
        }
        for c in [&mut self.t_in_bias, &mut self.t_out_bias].into_iter().flatten() {
            let n = c.len();
            c.copy_from_slice(&rest[..n]);
            rest = &rest[n..];
        }
        Ok(())
    }

    /// `self += alpha·grad`.
    pub(crate) fn apply(&mut self, alpha: f64, grad: &Gradients) {
        axpy(alpha, grad.w1.as_slice(), self.w1.data_mut());
        axpy(alpha, grad.w2.as_slice(), self.w2.data_mut());
        axpy(alpha, grad.t_in.as_slice(), self.t_in.data_mut());
        axpy(alpha, grad.t_out.as_slice(), self.t_out.data_mut());
        if let (Some(c), Some(g)) = (&mut self.t_in_bias, &grad.t_in_bias) {
            axpy(alpha, g, c);
        }
        if let (Some(c), Some(g)) = (&mut self.t_out_bias, &grad.t_out_bias) {
            axpy(alpha, g, c);
        }
    }
}

impl Gradients {
    pub fn flatten(&self) -> Vec<f64> {
        let mut p = Vec::new();
        for m in [&self.w1, &self.w2, &self.t_in, &self.t_out] {
            p.extend_from_slice(m.as_slice());
        }
        for c in [&self.t_in_bias, &self.t_out_bias].into_iter().flatten() {
            p.extend_from_slice(c);
        }
        p
    }
}

fn outer_add(m: &mut Matrix, left: &[f64], right: &[f64]) {
    let cols = m.cols();
    let data = m.data_mut();
    for (i, &l) in left.iter().enumerate() {
        if l != 0.0 {
            axpy(l, right, &mut data[i * cols..(i + 1) * cols]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn parameter_counts() {
        assert_eq!(count_parameters(4, 64, false), 2560);
        assert_eq!(count_parameters(1, 1, false), 34);
        assert_eq!(count_parameters(4, 64, true), 2640);
        let iface = ConditioningInterface::zeros(EncoderKind::Linear, 4, 64, false);
        assert_eq!(iface.parameter_count(), 2560);
        let iface = ConditioningInterface::zeros(EncoderKind::Linear, 4, 64, true);
        assert_eq!(iface.parameter_count(), 2640);
        assert_eq!(iface.encoder_parameter_count(), 512);
    }

    #[test]
    fn zero_weights_and_zero_input_give_zero_biases() {
        let iface = ConditioningInterface::zeros(EncoderKind::Linear, 2, 5, false);
        let out = iface.forward(&[1.0, -2.0, 3.0, 0.5, 1.0]).unwrap();
        assert_eq!(out.b_enc, vec![0.0; 5]);
        assert_eq!(out.b_dec, vec![0.0; 5]);

        let iface =
            ConditioningInterface::init(EncoderKind::Linear, 2, 5, false, &mut stream(3, 0)).unwrap();
        let out = iface.forward(&[0.0; 5]).unwrap();
        assert_eq!(out.b_enc, vec![0.0; 5]);
        assert_eq!(out.b_dec, vec![0.0; 5]);
        assert!(iface.forward(&[0.0; 4]).is_err());
    }

    #[test]
    fn projector_encoder_matches_direct_projection() {
        // W₂W₁ = P, the projector onto span(e0, e2)
        let dim = 4;
        let mut iface = ConditioningInterface::zeros(EncoderKind::Linear, 2, dim, false);
        iface.w1[(0, 0)] = 1.0;
        iface.w1[(1, 2)] = 1.0;
        iface.w2 = iface.w1.transpose();
        let x = [0.3, -1.2, 2.5, 0.7];
        let got = iface.encode(&x).unwrap();
        assert_eq!(got, vec![0.3, 0.0, 2.5, 0.0]);
    }

    #[test]
    fn parameters_round_trip() {
        let mut iface =
            ConditioningInterface::init(EncoderKind::Mlp, 3, 6, true, &mut stream(1, 0)).unwrap();
        let mut p = iface.parameters();
        assert_eq!(p.len(), iface.parameter_count());
        p.iter_mut().for_each(|v| *v += 1.0);
        iface.set_parameters(&p).unwrap();
        assert_eq!(iface.parameters(), p);
        assert!(iface.set_parameters(&p[1..]).is_err());
    }

    #[test]
    fn rank_must_fit_dimension() {
        assert!(ConditioningInterface::init(EncoderKind::Linear, 5, 4, false, &mut stream(0, 0)).is_err());
    }
}
