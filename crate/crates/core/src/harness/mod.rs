//! Experiment orchestration behind the `thermo-diffuse` CLI.
//!
//! Every runner takes the shared [`HarnessConfig`] plus its own options and
//! returns an [`ExperimentReport`] whose `config` field echoes both, together
//! with every derived seed.

mod checks;
pub mod energy;
mod experiments;
pub mod report;

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::conditioning::ConditioningInterface;
use crate::data_io::{
    gen_gaussian_targets, gen_random_weights, ActivationSet, Manifest, Provenance, ROLE_W_DEC,
    ROLE_W_ENC, ROLE_X_DEC_TARGET, ROLE_X_ENC,
};
use crate::error::{Error, Result};
use crate::linalg::{sym_eig, Matrix};
use crate::substrate::{gram_coupling, CouplingMatrix, SubstrateConfig};

pub use checks::{
    fit_log_linear, gen_data, run_deficit, run_energy, run_langevin_check, DataKind,
    DeficitOptions, GenDataOptions, LangevinOptions, LogFit,
};
pub use energy::{energy_chain, interface_overhead, EnergyChain, EnergyModel, HOST_MACS_PER_STEP};
pub use experiments::{
    run_experiment_a, run_experiment_b, run_experiment_c, InterfaceOptions, ProductionOptions,
    SkipSweepOptions, TrainSweepOptions,
};
pub use report::{ExperimentReport, PrngInfo, Table, REPORT_SCHEMA, REPORT_SCHEMA_VERSION};

/// Largest coupling eigenvalue the analytical weights are rescaled to.
pub const DEFAULT_LAMBDA_MAX: f64 = 0.034;

/// Options shared by every subcommand.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarnessConfig {
    pub dim: usize,
    pub seed: u64,
    pub samples: usize,
    pub j2: f64,
    pub kbt: f64,
    pub j4: f64,
    /// Target `λ_max(WᵀW/(4k_BT))` for generated weights; `<= 0` keeps the
    /// raw `N(0, 1/D)` draw.
    pub lambda_max: f64,
    pub manifest: Option<PathBuf>,
    pub parallel: bool,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        Self {
            dim: 128,
            seed: 1,
            samples: 64,
            j2: 0.1,
            kbt: 1.0,
            j4: 0.0,
            lambda_max: DEFAULT_LAMBDA_MAX,
            manifest: None,
            parallel: false,
        }
    }
}

impl HarnessConfig {
    pub fn substrate(&self, dim: usize) -> Result<SubstrateConfig> {
        SubstrateConfig::new(dim, self.kbt, self.j2, self.j4)
    }
}

/// Where weights and activations come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    Analytical,
    Ingested,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Analytical => "analytical",
            Regime::Ingested => "ingested",
        }
    }
}

/// Purposes that receive their own seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SeedRole {
    EncoderWeights = 1,
    DecoderWeights = 2,
    Targets = 3,
    Activations = 4,
    Training = 5,
    Langevin = 6,
    Bias = 7,
    Spectral = 8,
    Mixing = 9,
}

/// `seed·2³² + role·2¹⁶`: generators add small stream indices to their seed,
/// so roles (and nearby user seeds) never share a stream.
pub fn sub_seed(seed: u64, role: SeedRole) -> u64 {
    (seed << 32).wrapping_add((role as u64) << 16)
}

fn seed_echo(seed: u64, roles: &[SeedRole]) -> Value {
    let map: serde_json::Map<String, Value> = roles
        .iter()
        .map(|r| (format!("{r:?}"), json!(sub_seed(seed, *r))))
        .collect();
    Value::Object(map)
}

/// `N(0, 1/D)` weights rescaled so the Gram coupling has `λ_max = lambda_max`.
pub fn analytical_weights(dim: usize, seed: u64, lambda_max: f64, kbt: f64) -> Result<Matrix> {
    let w = gen_random_weights(dim, seed)?;
    if lambda_max <= 0.0 {
        return Ok(w);
    }
    let top = sym_eig(&w.t_matmul(&w)?)?.lambda_max() / (4.0 * kbt);
    if !(top > 0.0) {
        return Err(Error::DegenerateSpectrum {
            which: "random weights",
            sigma_max: top,
        });
    }
    Ok(w.scale((lambda_max / top).sqrt()))
}

/// Couplings and optional activations for one run.
pub(crate) struct Source {
    pub regime: Regime,
    pub cfg: SubstrateConfig,
    pub j_enc: CouplingMatrix,
    pub j_dec: CouplingMatrix,
    pub activations: Option<ActivationSet>,
    pub warnings: Vec<String>,
}

impl Source {
    pub fn load(h: &HarnessConfig) -> Result<Self> {
        match &h.manifest {
            Some(path) => Self::ingest(h, path),
            None => {
                let cfg = h.substrate(h.dim)?;
                let seed = |r| sub_seed(h.seed, r);
                let we = analytical_weights(h.dim, seed(SeedRole::EncoderWeights), h.lambda_max, h.kbt)?;
                let wd = analytical_weights(h.dim, seed(SeedRole::DecoderWeights), h.lambda_max, h.kbt)?;
                Ok(Self {
                    regime: Regime::Analytical,
                    j_enc: gram_coupling(&we, &cfg)?,
                    j_dec: gram_coupling(&wd, &cfg)?,
                    cfg,
                    activations: None,
                    warnings: Vec::new(),
                })
            }
        }
    }

    fn ingest(h: &HarnessConfig, path: &Path) -> Result<Self> {
        let manifest = Manifest::load(path)?;
        let we = manifest.read_role(path, ROLE_W_ENC)?;
        let wd = manifest.read_role(path, ROLE_W_DEC)?;
        let dim = we.cols();
        let cfg = h.substrate(dim)?;
        let mut warnings = Vec::new();
        if dim != h.dim {
            warnings.push(format!("--dim {} ignored: manifest weights have {dim} columns", h.dim));
        }
        let activations = match (manifest.entry(ROLE_X_ENC), manifest.entry(ROLE_X_DEC_TARGET)) {
            (Some(_), Some(_)) => Some(ActivationSet::from_matrices(
                &manifest.read_role(path, ROLE_X_ENC)?,
                &manifest.read_role(path, ROLE_X_DEC_TARGET)?,
                Provenance::Ingested,
            )?),
            _ => None,
        };
        Ok(Self {
            regime: Regime::Ingested,
            j_enc: gram_coupling(&we, &cfg)?,
            j_dec: gram_coupling(&wd, &cfg)?,
            cfg,
            activations,
            warnings,
        })
    }

    pub fn dim(&self) -> usize {
        self.cfg.dim
    }

    /// Ingested activations when present (first `n`), else fresh Gaussian targets.
    pub fn targets(&self, h: &HarnessConfig, n: usize) -> ActivationSet {
        match &self.activations {
            Some(a) => a.split(n).0,
            None => gen_gaussian_targets(self.dim(), n, sub_seed(h.seed, SeedRole::Targets)),
        }
    }
}

pub(crate) fn map_cells<T, R, F>(parallel: bool, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    if parallel {
        items.par_iter().map(f).collect()
    } else {
        items.iter().map(f).collect()
    }
}

pub(crate) fn num(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::Null
    }
}

/// Writes an interface as TDIF tensors plus `manifest.json` in `dir`.
pub fn save_interface(iface: &ConditioningInterface, dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest = Manifest::default();
    for (role, m) in [
        ("iface_w1", &iface.w1),
        ("iface_w2", &iface.w2),
        ("iface_t_in", &iface.t_in),
        ("iface_t_out", &iface.t_out),
    ] {
        manifest.add_tensor(dir, role, m)?;
    }
    for (role, c) in [("iface_t_in_bias", &iface.t_in_bias), ("iface_t_out_bias", &iface.t_out_bias)] {
        if let Some(c) = c {
            manifest.add_tensor(dir, role, &Matrix::from_vec(1, c.len(), c.clone())?)?;
        }
    }
    let path = dir.join("manifest.json");
    manifest.save(&path)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sub_seeds_do_not_collide_across_roles_or_nearby_seeds() {
        let mut seen = std::collections::BTreeSet::new();
        for seed in 0..8 {
            for role in [SeedRole::EncoderWeights, SeedRole::DecoderWeights, SeedRole::Targets] {
                for stream in 0..64 {
                    assert!(seen.insert(sub_seed(seed, role) + stream));
                }
            }
        }
    }

    #[test]
    fn analytical_weights_hit_the_target_eigenvalue() {
        let w = analytical_weights(24, 5, 0.034, 1.0).unwrap();
        let cfg = SubstrateConfig::linear(24);
        let j = gram_coupling(&w, &cfg).unwrap();
        let top = sym_eig(&j.j).unwrap().lambda_max();
        assert!((top - 0.034).abs() < 1e-12);
        let raw = analytical_weights(24, 5, 0.0, 1.0).unwrap();
        assert_eq!(raw, gen_random_weights(24, 5).unwrap());
    }
}
