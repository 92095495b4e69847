//! Overdamped Langevin dynamics of the coupled substrate.
//!
//! The potential is `V(z) = ½·zᵀMz − bᵀz + J₄·Σᵢ zᵢ⁴` over the stacked state
//! `z = (x, y)`, integrated with Euler-Maruyama:
//! `z ← z − μ·∇V(z)·dt + √(2μ·k_BT·dt)·ξ`.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, sym_eig};
use crate::rng::{self, normal};
use crate::substrate::{solve_equilibrium, BlockSystem, SubstrateConfig};

pub const RELAXATION_CAP: usize = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LangevinConfig {
    pub mobility: f64,
    pub dt: f64,
    pub n_steps: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub n_replicas: usize,
}

impl LangevinConfig {
    /// `dt = 0.01/(μ·λ_max(M))`, half the steps discarded as burn-in, 64 replicas.
    pub fn defaults_for(sys: &BlockSystem, mobility: f64, n_steps: usize, seed: u64) -> Result<Self> {
        let lambda_max = sym_eig(&sys.m)?.lambda_max();
        if !(lambda_max > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "cannot derive a time step from lambda_max = {lambda_max}"
            )));
        }
        Ok(Self {
            mobility,
            dt: 0.01 / (mobility * lambda_max),
            n_steps,
            burn_in: n_steps / 2,
            seed,
            n_replicas: 64,
        })
    }

    fn validate(&self) -> Result<()> {
        if !(self.mobility > 0.0) || !(self.dt > 0.0) || self.n_steps == 0 || self.n_replicas == 0 {
            return Err(Error::InvalidArgument(format!(
                "Langevin config requires mobility > 0, dt > 0, n_steps > 0, n_replicas > 0 (got {self:?})"
            )));
        }
        if self.burn_in >= self.n_steps {
            return Err(Error::InvalidArgument(format!(
                "burn_in {} leaves no samples out of {} steps",
                self.burn_in, self.n_steps
            )));
        }
        Ok(())
    }

    fn check_stability(&self, sys: &BlockSystem) -> Result<()> {
        self.check_step(sym_eig(&sys.m)?.lambda_max())
    }

    fn check_step(&self, lambda_max: f64) -> Result<()> {
        let product = self.dt * self.mobility * lambda_max;
        if product >= 2.0 {
            return Err(Error::UnstableStep { product });
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TrajectoryStats {
    pub mean: Vec<f64>,
    pub covariance_diag: Vec<f64>,
    /// Standard error of each mean coordinate, from the spread of replica means.
    pub standard_error: Vec<f64>,
    /// Smallest per-coordinate effective sample size, `var / (R·SE²)·R`.
    pub n_effective_samples: usize,
    pub n_samples: usize,
}

pub fn potential(z: &[f64], sys: &BlockSystem, cfg: &SubstrateConfig) -> Result<f64> {
    let mz = sys.m.matvec(z)?;
    let quad = 0.5 * linalg::dot(z, &mz) - linalg::dot(&sys.bias, z);
    Ok(quad + cfg.j4 * z.iter().map(|v| v.powi(4)).sum::<f64>())
}

/// `∇V(z) = M·z − b + 4·J₄·z³`.
pub fn potential_gradient(z: &[f64], sys: &BlockSystem, cfg: &SubstrateConfig) -> Result<Vec<f64>> {
    if z.len() != sys.bias.len() {
        return Err(Error::DimensionMismatch {
            context: "potential_gradient state",
            expected: sys.bias.len(),
            found: z.len(),
        });
    }
    let mut g = sys.m.matvec(z)?;
    for ((gi, bi), zi) in g.iter_mut().zip(&sys.bias).zip(z) {
        *gi += 4.0 * cfg.j4 * zi * zi * zi - bi;
    }
    Ok(g)
}

struct ReplicaMoments {
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
    count: usize,
}

fn run_replica(
    sys: &BlockSystem,
    cfg: &SubstrateConfig,
    lcfg: &LangevinConfig,
    replica: usize,
) -> Result<ReplicaMoments> {
    let n = sys.bias.len();
    let mut rng = rng::stream(lcfg.seed, replica as u64);
    let drift = lcfg.mobility * lcfg.dt;
    let kick = (2.0 * lcfg.mobility * cfg.kbt * lcfg.dt).sqrt();
    let mut z = vec![0.0; n];
    let mut sum = vec![0.0; n];
    let mut sum_sq = vec![0.0; n];
    for step in 0..lcfg.n_steps {
        let g = potential_gradient(&z, sys, cfg)?;
        for (zi, gi) in z.iter_mut().zip(&g) {
            *zi += -drift * gi + kick * normal(&mut rng);
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::DivergedSimulation { step });
        }
        if step >= lcfg.burn_in {
            for i in 0..n {
                sum[i] += z[i];
                sum_sq[i] += z[i] * z[i];
            }
        }
    }
    Ok(ReplicaMoments {
        sum,
        sum_sq,
        count: lcfg.n_steps - lcfg.burn_in,
    })
}

/// Runs `n_replicas` independent trajectories from `z = 0` and pools their
/// post-burn-in moments. Replica `r` draws its noise from stream `seed + r`.
pub fn simulate(
    sys: &BlockSystem,
    cfg: &SubstrateConfig,
    lcfg: &LangevinConfig,
) -> Result<TrajectoryStats> {
    lcfg.validate()?;
    lcfg.check_stability(sys)?;
    let replicas: Vec<ReplicaMoments> = (0..lcfg.n_replicas)
        .into_par_iter()
        .map(|r| run_replica(sys, cfg, lcfg, r))
        .collect::<Result<_>>()?;

    let n = sys.bias.len();
    let per = replicas[0].count as f64;
    let total = per * replicas.len() as f64;
    let r_count = replicas.len() as f64;
    let mut mean = vec![0.0; n];
    let mut second = vec![0.0; n];
    for rep in &replicas {
        for i in 0..n {
            mean[i] += rep.sum[i];
            second[i] += rep.sum_sq[i];
        }
    }
    mean.iter_mut().for_each(|m| *m /= total);
    let covariance_diag: Vec<f64> = second
        .iter()
        .zip(&mean)
        .map(|(s, m)| (s / total - m * m) * total / (total - 1.0))
        .collect();

    let standard_error: Vec<f64> = if replicas.len() > 1 {
        (0..n)
            .map(|i| {
                let spread = replicas
                    .iter()
                    .map(|rep| (rep.sum[i] / per - mean[i]).powi(2))
                    .sum::<f64>()
                    / (r_count - 1.0);
                (spread / r_count).sqrt()
            })
            .collect()
    } else {
        covariance_diag.iter().map(|v| (v / total).sqrt()).collect()
    };
    let n_effective_samples = (0..n)
        .map(|i| {
            let se2 = standard_error[i] * standard_error[i];
            if se2 > 0.0 {
                (covariance_diag[i] / se2).min(total)
            } else {
                total
            }
        })
        .fold(f64::INFINITY, f64::min)
        .max(1.0) as usize;

    Ok(TrajectoryStats {
        mean,
        covariance_diag,
        standard_error,
        n_effective_samples,
        n_samples: total as usize,
    })
}

/// `‖mean(J₄) − mean(0)‖ / ‖mean(0)‖` with both runs sharing noise streams.
pub fn quartic_perturbation(
    sys: &BlockSystem,
    cfg: &SubstrateConfig,
    lcfg: &LangevinConfig,
) -> Result<f64> {
    if !(cfg.j4 > 0.0) {
        return Err(Error::InvalidArgument(
            "quartic_perturbation needs j4 > 0".into(),
        ));
    }
    let linear = SubstrateConfig { j4: 0.0, ..*cfg };
    let base = simulate(sys, &linear, lcfg)?.mean;
    let quartic = simulate(sys, cfg, lcfg)?.mean;
    let base_norm = linalg::norm(&base);
    if base_norm < 1e-14 {
        return Err(Error::DegenerateBaseline {
            sample: 0,
            norm: base_norm,
        });
    }
    Ok(linalg::norm(&linalg::sub(&quartic, &base)) / base_norm)
}

/// How relaxation progress toward `z*` is measured.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MixingCriterion {
    /// `‖z − z*‖ / ‖z*‖`.
    RelativeNorm,
    /// `maxᵢ |zᵢ − z*ᵢ| / |z*ᵢ|`: every unit within ε of its own target.
    PerUnit,
}

impl MixingCriterion {
    fn error(self, z: &[f64], target: &[f64]) -> f64 {
        match self {
            MixingCriterion::RelativeNorm => {
                linalg::norm(&linalg::sub(z, target)) / linalg::norm(target)
            }
            MixingCriterion::PerUnit => z
                .iter()
                .zip(target)
                .map(|(a, b)| (a - b).abs() / b.abs())
                .fold(0.0, f64::max),
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct MixingEstimate {
    pub steps: usize,
    pub gamma: f64,
    /// `γ⁻¹·log(D/ε)` expressed in integrator steps (divided by `μ·dt`).
    pub theoretical_steps: f64,
    pub criterion: MixingCriterion,
}

/// Noise-free gradient relaxation `z ← z − μ·dt·(Mz − b)` from `z0`, counting
/// steps until the criterion drops to `epsilon`.
pub fn relaxation_steps(
    sys: &BlockSystem,
    lcfg: &LangevinConfig,
    z0: &[f64],
    target: &[f64],
    epsilon: f64,
    criterion: MixingCriterion,
) -> Result<usize> {
    let step = lcfg.mobility * lcfg.dt;
    let mut z = z0.to_vec();
    for k in 0..=RELAXATION_CAP {
        if criterion.error(&z, target) <= epsilon {
            return Ok(k);
        }
        let mut g = sys.m.matvec(&z)?;
        linalg::axpy(-1.0, &sys.bias, &mut g);
        linalg::axpy(-step, &g, &mut z);
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::DivergedSimulation { step: k });
        }
    }
    Err(Error::RelaxationCap {
        cap: RELAXATION_CAP,
    })
}

pub fn mixing_estimate(
    sys: &BlockSystem,
    cfg: &SubstrateConfig,
    lcfg: &LangevinConfig,
    epsilon: f64,
    criterion: MixingCriterion,
) -> Result<MixingEstimate> {
    if cfg.j4 != 0.0 {
        return Err(Error::InvalidArgument(
            "mixing_estimate is defined for the linear regime (j4 = 0)".into(),
        ));
    }
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon must be > 0, got {epsilon}")));
    }
    let eig = sym_eig(&sys.m)?;
    lcfg.check_step(eig.lambda_max())?;
    let target = solve_equilibrium(sys)?.stacked();
    let gamma = eig.lambda_min();
    let z0 = vec![0.0; target.len()];
    let steps = relaxation_steps(sys, lcfg, &z0, &target, epsilon, criterion)?;
    let theoretical_steps =
        (sys.dim() as f64 / epsilon).ln() / (gamma * lcfg.mobility * lcfg.dt);
    Ok(MixingEstimate {
        steps,
        gamma,
        theoretical_steps,
        criterion,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;

    fn scalar_sys(m: f64, b: f64) -> BlockSystem {
        BlockSystem {
            m: Matrix::from_diag(&[m, m]),
            bias: vec![b, b],
            a_block: Matrix::from_diag(&[m]),
            b_block: Matrix::from_diag(&[m]),
        }
    }

    fn cfg(j4: f64) -> SubstrateConfig {
        SubstrateConfig {
            kbt: 1.0,
            j2: 0.1,
            j4,
            dim: 1,
        }
    }

    #[test]
    fn gradient_vanishes_at_exact_solution() {
        let sys = BlockSystem {
            m: Matrix::from_rows(&[&[0.2, 0.1], &[0.1, 0.2]]),
            bias: vec![0.3, 0.3],
            a_block: Matrix::from_diag(&[0.2]),
            b_block: Matrix::from_diag(&[0.2]),
        };
        let g = potential_gradient(&[1.0, 1.0], &sys, &cfg(0.0)).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn scalar_gradient() {
        let g = potential_gradient(&[1.0, 0.0], &scalar_sys(0.2, 0.0), &cfg(0.0)).unwrap();
        assert_eq!(g, vec![0.2, 0.0]);
        let g = potential_gradient(&[1.0, 0.0], &scalar_sys(0.2, 0.0), &cfg(0.5)).unwrap();
        assert_eq!(g, vec![2.2, 0.0]);
        assert!(potential_gradient(&[1.0], &scalar_sys(0.2, 0.0), &cfg(0.0)).is_err());
    }

    #[test]
    fn unstable_step_is_rejected() {
        let sys = scalar_sys(0.2, 0.0);
        let lcfg = LangevinConfig {
            mobility: 1.0,
            dt: 10.0,
            n_steps: 10,
            burn_in: 0,
            seed: 0,
            n_replicas: 1,
        };
        assert!(matches!(
            simulate(&sys, &cfg(0.0), &lcfg),
            Err(Error::UnstableStep { .. })
        ));
    }

    #[test]
    fn quartic_blow_up_is_reported() {
        // Linear part stable, but a huge quartic term explodes from the first kick.
        let sys = scalar_sys(0.2, 50.0);
        let lcfg = LangevinConfig {
            mobility: 1.0,
            dt: 1.0,
            n_steps: 100,
            burn_in: 0,
            seed: 0,
            n_replicas: 1,
        };
        assert!(matches!(
            simulate(&sys, &cfg(100.0), &lcfg),
            Err(Error::DivergedSimulation { .. })
        ));
    }

    #[test]
    fn relaxation_from_the_answer_takes_zero_steps() {
        let sys = scalar_sys(0.2, 0.2);
        let lcfg = LangevinConfig::defaults_for(&sys, 1.0, 10, 0).unwrap();
        let z = [1.0, 1.0];
        for c in [MixingCriterion::RelativeNorm, MixingCriterion::PerUnit] {
            assert_eq!(relaxation_steps(&sys, &lcfg, &z, &z, 1.0, c).unwrap(), 0);
        }
    }

    #[test]
    fn scalar_relaxation_is_geometric() {
        // error_k = (1 − μ·dt·0.2)^k from z0 = 0
        let sys = scalar_sys(0.2, 0.2);
        let lcfg = LangevinConfig {
            mobility: 1.0,
            dt: 0.5,
            n_steps: 1,
            burn_in: 0,
            seed: 0,
            n_replicas: 1,
        };
        let est = mixing_estimate(&sys, &cfg(0.0), &lcfg, 0.05, MixingCriterion::RelativeNorm)
            .unwrap();
        let expected = (0.05f64.ln() / 0.9f64.ln()).ceil() as usize;
        assert_eq!(est.steps, expected);
        assert!((est.gamma - 0.2).abs() < 1e-15);
        assert!(mixing_estimate(&sys, &cfg(0.1), &lcfg, 0.05, MixingCriterion::RelativeNorm).is_err());
    }

    #[test]
    fn zero_quartic_is_rejected() {
        let sys = scalar_sys(0.2, 0.2);
        let lcfg = LangevinConfig::defaults_for(&sys, 1.0, 10, 0).unwrap();
        assert!(quartic_perturbation(&sys, &cfg(0.0), &lcfg).is_err());
    }
}
