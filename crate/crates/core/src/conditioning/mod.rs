//! Input conditioning: oracle and naive biases, the signal-deficit analysis,
//! and the small digital interface that predicts both biases from an encoder
//! activation.

mod deficit;
mod init;
mod interface;
mod train;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::substrate::CouplingMatrix;

pub use deficit::{deficit_analysis, DeficitReport};
pub use interface::{count_parameters, ConditioningInterface, EncoderKind, Gradients, TRANSFER_HIDDEN};
pub use train::{
    loss, loss_and_gradient, train_interface, InitScheme, TrainConfig, TrainOutcome, TrainingPair,
};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BiasPair {
    pub b_enc: Vec<f64>,
    pub b_dec: Vec<f64>,
}

/// Drive `A·x*` that places the uncoupled block's equilibrium at `x*`.
pub fn oracle_bias(x_target: &[f64], block: &Matrix) -> Result<Vec<f64>> {
    block.matvec(x_target)
}

/// The drive available from the coupling constants alone, `J_encᵀ·x`.
pub fn naive_bias(x: &[f64], j_enc: &CouplingMatrix) -> Result<Vec<f64>> {
    if x.len() != j_enc.dim() {
        return Err(Error::DimensionMismatch {
            context: "naive_bias",
            expected: j_enc.dim(),
            found: x.len(),
        });
    }
    j_enc.j.t_matvec(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::substrate::{assemble_block, solve_equilibrium, SubstrateConfig};

    #[test]
    fn oracle_bias_examples() {
        let x = [1.0, -2.0, 0.5];
        assert_eq!(oracle_bias(&x, &Matrix::identity(3)).unwrap(), x.to_vec());
        let b = oracle_bias(&[1.0; 4], &Matrix::identity(4).scale(0.2)).unwrap();
        assert_eq!(b, vec![0.2; 4]);
        assert!(oracle_bias(&[1.0; 2], &Matrix::identity(3)).is_err());
    }

    #[test]
    fn oracle_bias_round_trips_through_the_solver() {
        let cfg = SubstrateConfig::linear(3);
        let j = CouplingMatrix {
            j: Matrix::from_rows(&[&[0.3, 0.1, 0.0], &[0.1, 0.2, 0.05], &[0.0, 0.05, 0.4]]),
        };
        let x = [0.7, -1.3, 2.1];
        let y = [0.2, 0.4, -0.9];
        let a = j.diagonal_block(&cfg);
        let b_enc = oracle_bias(&x, &a).unwrap();
        let b_dec = oracle_bias(&y, &a).unwrap();
        let sys = assemble_block(&j, &j, None, &b_enc, &b_dec, &cfg).unwrap();
        let eq = solve_equilibrium(&sys).unwrap();
        for (got, want) in eq.x_star.iter().zip(&x).chain(eq.y_star.iter().zip(&y)) {
            assert!((got - want).abs() < 1e-10);
        }
    }

    #[test]
    fn naive_bias_of_zero_coupling_is_zero() {
        let j = CouplingMatrix {
            j: Matrix::zeros(3, 3),
        };
        assert_eq!(naive_bias(&[1.0, 2.0, 3.0], &j).unwrap(), vec![0.0; 3]);
        assert!(naive_bias(&[1.0], &j).is_err());
    }

    #[test]
    fn scalar_naive_to_oracle_ratio() {
        // λ/(2J₂ + 2λ) at λ = 0.034, J₂ = 0.1
        let cfg = SubstrateConfig {
            dim: 1,
            ..SubstrateConfig::linear(2)
        };
        let j = CouplingMatrix {
            j: Matrix::from_diag(&[0.034]),
        };
        let naive = naive_bias(&[1.0], &j).unwrap()[0];
        let oracle = oracle_bias(&[1.0], &j.diagonal_block(&cfg)).unwrap()[0];
        assert!((naive / oracle - 0.034 / 0.268).abs() < 1e-15);
        assert!((naive / oracle - 0.127).abs() < 1e-3);
    }
}
