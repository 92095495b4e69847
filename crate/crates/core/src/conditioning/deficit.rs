use serde::Serialize;

use super::{naive_bias, oracle_bias};
use crate::error::{Error, Result};
use crate::linalg::{dot, std_dev, sym_eig};
use crate::substrate::{CouplingMatrix, SubstrateConfig};

const POSITIVE_FLOOR: f64 = 1e-14;

/// How far the coupling-only drive falls short of the oracle drive.
///
/// The leading-mode ratio (`empirical_ratio`) is the quantity approximated by
/// `λ_max/(2J₂)`. The pooled ratio over every unit and sample, and the
/// geometric mean of per-eigenmode ratios, describe how eigenvalue
/// concentration compounds the deficit.
#[derive(Clone, Debug, Serialize)]
pub struct DeficitReport {
    /// Pooled standard deviation of naive biases over all units and samples.
    pub sigma_naive: f64,
    /// Same for oracle biases.
    pub sigma_oracle: f64,
    /// σ-ratio measured along the leading eigenvector of `J_enc`.
    pub empirical_ratio: f64,
    pub predicted_ratio: f64,
    /// `sigma_naive / sigma_oracle`.
    pub aggregate_ratio: f64,
    /// Geometric mean of per-eigenmode σ-ratios over modes with λ > 1e-14.
    pub geometric_mean_ratio: f64,
    /// `1 / geometric_mean_ratio`.
    pub compounded_deficit: f64,
    pub spectrum: Vec<f64>,
    /// `log10(λ_max / λ_min⁺)`.
    pub spectral_span_decades: f64,
}

pub fn deficit_analysis(
    j_enc: &CouplingMatrix,
    targets: &[Vec<f64>],
    cfg: &SubstrateConfig,
) -> Result<DeficitReport> {
    if targets.len() < 16 {
        return Err(Error::InvalidArgument(format!(
            "deficit analysis needs at least 16 samples, got {}",
            targets.len()
        )));
    }
    let eig = sym_eig(&j_enc.j.symmetrized()?)?;
    let lambda_max = eig.lambda_max();
    if lambda_max <= POSITIVE_FLOOR {
        return Err(Error::DegenerateSpectrum {
            which: "encoder",
            sigma_max: lambda_max,
        });
    }
    let lambda_min_pos = eig
        .values
        .iter()
        .copied()
        .filter(|&v| v > POSITIVE_FLOOR)
        .fold(f64::INFINITY, f64::min);

    let a = j_enc.diagonal_block(cfg);
    let mut naive_all = Vec::new();
    let mut oracle_all = Vec::new();
    let mut naive_b = Vec::with_capacity(targets.len());
    let mut oracle_b = Vec::with_capacity(targets.len());
    for x in targets {
        let n = naive_bias(x, j_enc)?;
        let o = oracle_bias(x, &a)?;
        naive_all.extend_from_slice(&n);
        oracle_all.extend_from_slice(&o);
        naive_b.push(n);
        oracle_b.push(o);
    }
    let sigma_naive = std_dev(&naive_all);
    let sigma_oracle = std_dev(&oracle_all);

    let mode_ratio = |mode: usize| -> f64 {
        let v = eig.vectors.column(mode);
        let pn: Vec<f64> = naive_b.iter().map(|b| dot(b, &v)).collect();
        let po: Vec<f64> = oracle_b.iter().map(|b| dot(b, &v)).collect();
        std_dev(&pn) / std_dev(&po)
    };
    let empirical_ratio = mode_ratio(0);
    let positive_modes: Vec<usize> = (0..eig.values.len())
        .filter(|&i| eig.values[i] > POSITIVE_FLOOR)
        .collect();
    let log_mean = positive_modes
        .iter()
        .map(|&i| mode_ratio(i).ln())
        .sum::<f64>()
        / positive_modes.len() as f64;
    let geometric_mean_ratio = log_mean.exp();

    Ok(DeficitReport {
        sigma_naive,
        sigma_oracle,
        empirical_ratio,
        predicted_ratio: lambda_max / (2.0 * cfg.j2),
        aggregate_ratio: sigma_naive / sigma_oracle,
        geometric_mean_ratio,
        compounded_deficit: geometric_mean_ratio.recip(),
        spectral_span_decades: (lambda_max / lambda_min_pos).log10(),
        spectrum: eig.values,
    })
}
