//! The coupled encoder/decoder substrate.
//!
//! Two modules of `D` units each interact through Gram couplings built from
//! layer weights, with a rank-`k` bilinear skip coupling between them. In the
//! linear regime the equilibrium is the solution of the `2D×2D` block system
//!
//! ```text
//! [ A      S ] [x*]   [b_enc]
//! [ Sᵀ     B ] [y*] = [b_dec],   A = 2·J₂·I + J_enc + J_encᵀ,  B likewise.
//! ```

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, sym_eig, Cholesky, Matrix, SvdResult};

const SYMMETRY_TOL: f64 = 1e-12;
const DEGENERATE_SIGMA: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SubstrateConfig {
    /// Thermal energy k_BT.
    pub kbt: f64,
    /// Self-coupling J₂.
    pub j2: f64,
    /// Quartic coefficient J₄; zero in the linear regime.
    pub j4: f64,
    pub dim: usize,
}

impl SubstrateConfig {
    pub fn new(dim: usize, kbt: f64, j2: f64, j4: f64) -> Result<Self> {
        let cfg = Self { kbt, j2, j4, dim };
        cfg.validate()?;
        Ok(cfg)
    }

    /// `k_BT = 1`, `J₂ = 0.1`, `J₄ = 0`.
    pub fn linear(dim: usize) -> Self {
        Self {
            kbt: 1.0,
            j2: 0.1,
            j4: 0.0,
            dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kbt > 0.0) || !(self.j2 > 0.0) || !(self.j4 >= 0.0) || self.dim < 2 {
            return Err(Error::InvalidArgument(format!(
                "substrate config requires kbt > 0, j2 > 0, j4 >= 0, dim >= 2 (got {self:?})"
            )));
        }
        Ok(())
    }
}

/// Symmetric PSD interaction `J = WᵀW / (4·k_BT)`.
#[derive(Clone, Debug)]
pub struct CouplingMatrix {
    pub j: Matrix,
}

impl CouplingMatrix {
    pub fn dim(&self) -> usize {
        self.j.rows()
    }

    /// Self-coupled diagonal block `2·J₂·I + J + Jᵀ`.
    pub fn diagonal_block(&self, cfg: &SubstrateConfig) -> Matrix {
        let mut a = self.j.add(&self.j.transpose()).expect("square coupling");
        for i in 0..a.rows() {
            a[(i, i)] += 2.0 * cfg.j2;
        }
        a
    }

    pub fn svd(&self) -> Result<SvdResult> {
        linalg::svd(&self.j)
    }
}

pub fn gram_coupling(w: &Matrix, cfg: &SubstrateConfig) -> Result<CouplingMatrix> {
    if w.cols() != cfg.dim {
        return Err(Error::DimensionMismatch {
            context: "gram_coupling weight columns",
            expected: cfg.dim,
            found: w.cols(),
        });
    }
    let j = w.t_matmul(w)?.scale(1.0 / (4.0 * cfg.kbt));
    debug_assert!(j.asymmetry() <= SYMMETRY_TOL * j.frobenius_norm().max(1.0));
    Ok(CouplingMatrix { j })
}

/// Rank-`k` skip coupling built from the leading singular structure of the
/// encoder and decoder Gram matrices.
///
/// `left_factor = U_e Σ_e^{1/2}` and `right_factor = U_d Σ_d^{1/2}` are kept
/// unnormalized; `dense = left·rightᵀ / (normalizer · 4·k_BT)` with
/// `normalizer = ‖left·rightᵀ‖_F`.
#[derive(Clone, Debug)]
pub struct SkipCoupling {
    pub rank: usize,
    pub left_factor: Matrix,
    pub right_factor: Matrix,
    pub normalizer: f64,
    pub dense: Matrix,
}

impl SkipCoupling {
    /// Number of physical couplings in factored form, `2·D·k`.
    pub fn connection_count(&self) -> usize {
        2 * self.left_factor.rows() * self.rank
    }

    /// Builds the coupling from precomputed SVDs of `J_enc` and `J_dec`.
    pub fn from_svds(
        enc: &SvdResult,
        dec: &SvdResult,
        rank: usize,
        cfg: &SubstrateConfig,
    ) -> Result<Self> {
        let dim = enc.u.rows();
        if dec.u.rows() != dim {
            return Err(Error::DimensionMismatch {
                context: "skip_coupling decoder dimension",
                expected: dim,
                found: dec.u.rows(),
            });
        }
        if rank == 0 || rank > dim {
            return Err(Error::InvalidRank { rank, dim });
        }
        for (which, s) in [("encoder", enc), ("decoder", dec)] {
            let sigma_max = s.sigma.first().copied().unwrap_or(0.0);
            if sigma_max < DEGENERATE_SIGMA {
                return Err(Error::DegenerateSpectrum { which, sigma_max });
            }
        }
        let left = scaled_leading(enc, rank);
        let right = scaled_leading(dec, rank);
        let product = left.matmul(&right.transpose())?;
        let normalizer = product.frobenius_norm();
        if normalizer < DEGENERATE_SIGMA {
            return Err(Error::DegenerateSpectrum {
                which: "skip product",
                sigma_max: normalizer,
            });
        }
        let dense = product.scale(1.0 / (normalizer * 4.0 * cfg.kbt));
        Ok(Self {
            rank,
            left_factor: left,
            right_factor: right,
            normalizer,
            dense,
        })
    }
}

fn scaled_leading(s: &SvdResult, k: usize) -> Matrix {
    let mut u = s.u_leading(k);
    for j in 0..k {
        let r = s.sigma[j].max(0.0).sqrt();
        for i in 0..u.rows() {
            u[(i, j)] *= r;
        }
    }
    u
}

pub fn skip_coupling(
    j_enc: &CouplingMatrix,
    j_dec: &CouplingMatrix,
    rank: usize,
    cfg: &SubstrateConfig,
) -> Result<SkipCoupling> {
    if j_enc.dim() != j_dec.dim() {
        return Err(Error::DimensionMismatch {
            context: "skip_coupling",
            expected: j_enc.dim(),
            found: j_dec.dim(),
        });
    }
    if rank == 0 || rank > j_enc.dim() {
        return Err(Error::InvalidRank {
            rank,
            dim: j_enc.dim(),
        });
    }
    SkipCoupling::from_svds(&j_enc.svd()?, &j_dec.svd()?, rank, cfg)
}

#[derive(Clone, Debug)]
pub struct BlockSystem {
    pub m: Matrix,
    /// `b_enc ‖ b_dec`.
    pub bias: Vec<f64>,
    pub a_block: Matrix,
    pub b_block: Matrix,
}

impl BlockSystem {
    pub fn dim(&self) -> usize {
        self.a_block.rows()
    }

    pub fn b_enc(&self) -> &[f64] {
        &self.bias[..self.dim()]
    }

    pub fn b_dec(&self) -> &[f64] {
        &self.bias[self.dim()..]
    }

    /// Same couplings, new drive.
    pub fn with_bias(&self, b_enc: &[f64], b_dec: &[f64]) -> Result<BlockSystem> {
        let d = self.dim();
        check_len("b_enc", d, b_enc.len())?;
        check_len("b_dec", d, b_dec.len())?;
        let mut sys = self.clone();
        sys.bias = [b_enc, b_dec].concat();
        Ok(sys)
    }

    /// Off-diagonal skip block.
    pub fn skip_block(&self) -> Matrix {
        let d = self.dim();
        self.m.block(0, d, d, d)
    }

    pub fn factor(&self) -> Result<EquilibriumSolver> {
        Ok(EquilibriumSolver {
            chol: Cholesky::factor(&self.m)?,
            dim: self.dim(),
        })
    }
}

fn check_len(context: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch {
            context,
            expected,
            found,
        });
    }
    Ok(())
}

pub fn assemble_block(
    j_enc: &CouplingMatrix,
    j_dec: &CouplingMatrix,
    skip: Option<&SkipCoupling>,
    b_enc: &[f64],
    b_dec: &[f64],
    cfg: &SubstrateConfig,
) -> Result<BlockSystem> {
    let d = j_enc.dim();
    check_len("assemble_block J_dec", d, j_dec.dim())?;
    check_len("assemble_block b_enc", d, b_enc.len())?;
    check_len("assemble_block b_dec", d, b_dec.len())?;
    let a_block = j_enc.diagonal_block(cfg);
    let b_block = j_dec.diagonal_block(cfg);
    let mut m = Matrix::zeros(2 * d, 2 * d);
    m.set_block(0, 0, &a_block);
    m.set_block(d, d, &b_block);
    if let Some(s) = skip {
        check_len("assemble_block skip", d, s.dense.rows())?;
        m.set_block(0, d, &s.dense);
        m.set_block(d, 0, &s.dense.transpose());
    }
    Ok(BlockSystem {
        m,
        bias: [b_enc, b_dec].concat(),
        a_block,
        b_block,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SpectralReport {
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// Spectral gap, `λ_min(M)`.
    pub gamma: f64,
}

pub fn validate_pd(sys: &BlockSystem) -> Result<SpectralReport> {
    let eig = sym_eig(&sys.m)?;
    let (lambda_min, lambda_max) = (eig.lambda_min(), eig.lambda_max());
    if lambda_min <= 0.0 {
        return Err(Error::UnstableSubstrate { lambda_min });
    }
    Ok(SpectralReport {
        lambda_min,
        lambda_max,
        gamma: lambda_min,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Equilibrium {
    pub x_star: Vec<f64>,
    pub y_star: Vec<f64>,
}

impl Equilibrium {
    pub fn stacked(&self) -> Vec<f64> {
        [self.x_star.as_slice(), self.y_star.as_slice()].concat()
    }
}

/// Cholesky factor of `M`, reusable across many bias vectors.
#[derive(Clone, Debug)]
pub struct EquilibriumSolver {
    chol: Cholesky,
    dim: usize,
}

impl EquilibriumSolver {
    pub fn solve(&self, b_enc: &[f64], b_dec: &[f64]) -> Result<Equilibrium> {
        check_len("equilibrium b_enc", self.dim, b_enc.len())?;
        check_len("equilibrium b_dec", self.dim, b_dec.len())?;
        let mut z = self.chol.solve(&[b_enc, b_dec].concat())?;
        let y_star = z.split_off(self.dim);
        Ok(Equilibrium { x_star: z, y_star })
    }
}

pub fn solve_equilibrium(sys: &BlockSystem) -> Result<Equilibrium> {
    sys.factor()?.solve(sys.b_enc(), sys.b_dec())
}

/// Encoder/decoder target activations.
pub type TargetPair = (Vec<f64>, Vec<f64>);

#[derive(Clone, Debug, Serialize)]
pub struct RhoSkip {
    pub mean_rho: f64,
    /// Sample standard deviation over mean.
    pub cv: f64,
    /// Mean over samples of `y* − y*₀`, per decoder unit.
    pub per_dim_shift: Vec<f64>,
    pub per_dim_shift_std: Vec<f64>,
    pub per_sample: Vec<f64>,
}

/// Relative decoder shift `‖y* − y*₀‖/‖y*₀‖` produced by inserting the skip
/// coupling, with oracle biases computed from the no-skip blocks.
pub fn rho_skip(
    j_enc: &CouplingMatrix,
    j_dec: &CouplingMatrix,
    skip: Option<&SkipCoupling>,
    samples: &[TargetPair],
    cfg: &SubstrateConfig,
) -> Result<RhoSkip> {
    if samples.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "rho_skip needs at least 2 samples, got {}",
            samples.len()
        )));
    }
    let d = j_enc.dim();
    let zero = vec![0.0; d];
    let baseline = assemble_block(j_enc, j_dec, None, &zero, &zero, cfg)?.factor()?;
    let coupled = assemble_block(j_enc, j_dec, skip, &zero, &zero, cfg)?;
    let coupled_solver = coupled.factor()?;

    let mut per_sample = Vec::with_capacity(samples.len());
    let mut shifts: Vec<Vec<f64>> = Vec::with_capacity(samples.len());
    for (idx, (x_t, y_t)) in samples.iter().enumerate() {
        let b_enc = coupled.a_block.matvec(x_t)?;
        let b_dec = coupled.b_block.matvec(y_t)?;
        let y0 = baseline.solve(&b_enc, &b_dec)?.y_star;
        let base_norm = linalg::norm(&y0);
        if base_norm < 1e-14 {
            return Err(Error::DegenerateBaseline {
                sample: idx,
                norm: base_norm,
            });
        }
        let y = coupled_solver.solve(&b_enc, &b_dec)?.y_star;
        let shift = linalg::sub(&y, &y0);
        per_sample.push(linalg::norm(&shift) / base_norm);
        shifts.push(shift);
    }

    let n = per_sample.len() as f64;
    let mean_rho = linalg::mean(&per_sample);
    let sample_std = (per_sample
        .iter()
        .map(|r| (r - mean_rho).powi(2))
        .sum::<f64>()
        / (n - 1.0))
        .sqrt();
    let cv = if mean_rho > 0.0 {
        sample_std / mean_rho
    } else {
        0.0
    };
    let per_dim_shift: Vec<f64> = (0..d)
        .map(|j| shifts.iter().map(|s| s[j]).sum::<f64>() / n)
        .collect();
    let per_dim_shift_std = (0..d)
        .map(|j| {
            let m = per_dim_shift[j];
            (shifts.iter().map(|s| (s[j] - m).powi(2)).sum::<f64>() / n).sqrt()
        })
        .collect();
    Ok(RhoSkip {
        mean_rho,
        cv,
        per_dim_shift,
        per_dim_shift_std,
        per_sample,
    })
}
