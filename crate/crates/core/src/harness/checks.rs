use std::path::PathBuf;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::energy::{energy_chain, EnergyModel};
use super::report::{ExperimentReport, Table};
use super::{analytical_weights, num, seed_echo, sub_seed, HarnessConfig, SeedRole, Source, DEFAULT_LAMBDA_MAX};
use crate::conditioning::{deficit_analysis, DeficitReport};
use crate::data_io::{
    gen_correlated_activations, gen_gaussian_targets, gen_spectral_weights, ActivationSet, Manifest,
    ROLE_W_DEC, ROLE_W_ENC, ROLE_X_DEC_TARGET, ROLE_X_ENC,
};
use crate::error::{Error, Result};
use crate::langevin::{mixing_estimate, quartic_perturbation, simulate, LangevinConfig, MixingCriterion};
use crate::linalg::{mean, norm, std_dev, sym_eig, Cholesky, Matrix};
use crate::rng::{normal_vec, stream};
use crate::substrate::{assemble_block, gram_coupling, skip_coupling, solve_equilibrium, CouplingMatrix};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeficitOptions {
    /// Spectral span of the trained-style synthetic weights.
    pub decades: f64,
}

impl Default for DeficitOptions {
    fn default() -> Self {
        Self { decades: 6.0 }
    }
}

/// Naive-versus-oracle bias deficit for a rank-1 coupling, the analytical
/// random weights, a log-spaced synthetic spectrum and (when a manifest is
/// given) the ingested encoder weights.
pub fn run_deficit(h: &HarnessConfig, opts: &DeficitOptions) -> Result<ExperimentReport> {
    let lambda = if h.lambda_max > 0.0 { h.lambda_max } else { DEFAULT_LAMBDA_MAX };
    let dim = h.dim;
    let cfg = h.substrate(dim)?;
    let targets = gen_gaussian_targets(dim, h.samples, sub_seed(h.seed, SeedRole::Targets)).x_enc;
    let spectral_seed = sub_seed(h.seed, SeedRole::Spectral);

    let mut v = normal_vec(&mut stream(spectral_seed, 7), dim, 1.0);
    let vn = norm(&v);
    v.iter_mut().for_each(|x| *x /= vn);
    let mut w1 = Matrix::zeros(dim, dim);
    let s = (4.0 * h.kbt * lambda).sqrt();
    for (j, vj) in v.iter().enumerate() {
        w1[(0, j)] = s * vj;
    }
    let mut cases: Vec<(String, CouplingMatrix, Vec<Vec<f64>>)> = vec![
        ("rank-1".into(), gram_coupling(&w1, &cfg)?, targets.clone()),
        (
            "random".into(),
            gram_coupling(
                &analytical_weights(dim, sub_seed(h.seed, SeedRole::EncoderWeights), lambda, h.kbt)?,
                &cfg,
            )?,
            targets.clone(),
        ),
        (
            "spectral".into(),
            gram_coupling(&gen_spectral_weights(dim, lambda, opts.decades, h.kbt, spectral_seed)?, &cfg)?,
            targets,
        ),
    ];
    let mut warnings = Vec::new();
    if h.manifest.is_some() {
        let src = Source::load(h)?;
        let t = match &src.activations {
            Some(a) => a.x_enc.clone(),
            None => gen_gaussian_targets(src.dim(), h.samples, sub_seed(h.seed, SeedRole::Targets)).x_enc,
        };
        warnings.extend(src.warnings.iter().cloned());
        cases.push(("ingested".into(), src.j_enc, t));
    }

    let mut table = Table::new(
        "deficit",
        &[
            "case", "lambda_max", "predicted_ratio", "empirical_ratio", "empirical_over_predicted",
            "aggregate_ratio", "geometric_mean_ratio", "compounded_deficit", "spectral_span_decades",
        ],
    );
    let mut spectrum = Table::new("spectrum", &["case", "index", "eigenvalue"]);
    let mut reports: Vec<(String, DeficitReport)> = Vec::new();
    for (name, j, t) in &cases {
        let ccfg = h.substrate(j.dim())?;
        let r = deficit_analysis(j, t, &ccfg)?;
        table.push(vec![
            json!(name),
            num(r.spectrum[0]),
            num(r.predicted_ratio),
            num(r.empirical_ratio),
            num(r.empirical_ratio / r.predicted_ratio),
            num(r.aggregate_ratio),
            num(r.geometric_mean_ratio),
            num(r.compounded_deficit),
            num(r.spectral_span_decades),
        ]);
        for (i, e) in r.spectrum.iter().enumerate() {
            spectrum.push(vec![json!(name), json!(i), num(*e)]);
        }
        reports.push((name.clone(), r));
    }

    let config = json!({
        "harness": h,
        "options": opts,
        "lambda_max": lambda,
        "seeds": seed_echo(h.seed, &[SeedRole::Targets, SeedRole::EncoderWeights, SeedRole::Spectral]),
    });
    let regime = if h.manifest.is_some() { "ingested" } else { "analytical" };
    let mut report = ExperimentReport::new("deficit", regime, config, table);
    for (name, r) in &reports {
        let key = name.replace('-', "_");
        report.metric(&format!("{key}_empirical_ratio"), num(r.empirical_ratio));
        report.metric(&format!("{key}_compounded_deficit"), num(r.compounded_deficit));
        report.metric(&format!("{key}_span_decades"), num(r.spectral_span_decades));
    }
    report.metric("predicted_ratio", num(lambda / (2.0 * h.j2)));
    let mut reference = Table::new("published_deficit", &["quantity", "value"]);
    reference.push(vec![json!("predicted_ratio"), json!(0.17)]);
    reference.push(vec![json!("compounded_deficit_trained"), json!(2600.0)]);
    reference.push(vec![json!("spectral_span_decades_trained"), json!(6.0)]);
    report.reference = Some(reference);
    report.plotdata = vec![spectrum];
    report.warnings = warnings;
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LangevinOptions {
    /// Post-burn-in samples pooled over all replicas.
    pub n_samples: usize,
    pub n_replicas: usize,
    pub mobility: f64,
    /// `dt·μ·λ_max(M)`.
    pub step_fraction: f64,
    /// Burn-in in relaxation times `1/(μ·dt·γ)`.
    pub burn_in_relaxations: f64,
    pub skip_rank: usize,
    pub mixing_dims: Vec<usize>,
    pub mixing_trials: usize,
    pub mixing_epsilon: f64,
    /// `μ·dt` for the relaxation runs.
    pub mixing_step: f64,
}

impl Default for LangevinOptions {
    fn default() -> Self {
        Self {
            n_samples: 1 << 20,
            n_replicas: 64,
            mobility: 1.0,
            step_fraction: 0.01,
            burn_in_relaxations: 20.0,
            skip_rank: 2,
            mixing_dims: vec![16, 32, 64, 128],
            mixing_trials: 16,
            mixing_epsilon: 1e-3,
            mixing_step: 0.1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LogFit {
    pub a: f64,
    pub b: f64,
    pub r2: f64,
}

/// Least-squares `y = a + b·ln x`.
pub fn fit_log_linear(x: &[f64], y: &[f64]) -> Result<LogFit> {
    if x.len() != y.len() || x.len() < 2 || x.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::InvalidArgument(
            "log-linear fit needs >= 2 paired points with x > 0".into(),
        ));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let (mx, my) = (mean(&lx), mean(y));
    let sxy: f64 = lx.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("log-linear fit needs distinct x values".into()));
    }
    let b = sxy / sxx;
    let a = my - b * mx;
    let ss_res: f64 = lx.iter().zip(y).map(|(l, v)| (v - a - b * l).powi(2)).sum();
    let ss_tot: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok(LogFit { a, b, r2 })
}

/// Stationary Langevin moments against the exact Gaussian equilibrium, the
/// optional quartic perturbation, and the noise-free relaxation scaling in D.
pub fn run_langevin_check(h: &HarnessConfig, opts: &LangevinOptions) -> Result<ExperimentReport> {
    let started = Instant::now();
    let dim = h.dim;
    let cfg = h.substrate(dim)?;
    let linear = crate::substrate::SubstrateConfig { j4: 0.0, ..cfg };
    let we = analytical_weights(dim, sub_seed(h.seed, SeedRole::EncoderWeights), h.lambda_max, h.kbt)?;
    let wd = analytical_weights(dim, sub_seed(h.seed, SeedRole::DecoderWeights), h.lambda_max, h.kbt)?;
    let (je, jd) = (gram_coupling(&we, &cfg)?, gram_coupling(&wd, &cfg)?);
    let skip = if opts.skip_rank > 0 {
        Some(skip_coupling(&je, &jd, opts.skip_rank.min(dim), &cfg)?)
    } else {
        None
    };
    let b = normal_vec(&mut stream(sub_seed(h.seed, SeedRole::Bias), 0), 2 * dim, 1.0);
    let sys = assemble_block(&je, &jd, skip.as_ref(), &b[..dim], &b[dim..], &cfg)?;
    let eig = sym_eig(&sys.m)?;
    let (lmin, lmax) = (eig.lambda_min(), eig.lambda_max());
    if lmin <= 0.0 {
        return Err(Error::UnstableSubstrate { lambda_min: lmin });
    }
    let dt = opts.step_fraction / (opts.mobility * lmax);
    let burn_in = (opts.burn_in_relaxations / (opts.mobility * dt * lmin)).ceil() as usize;
    let per_replica = opts.n_samples.div_ceil(opts.n_replicas);
    let lcfg = LangevinConfig {
        mobility: opts.mobility,
        dt,
        n_steps: burn_in + per_replica,
        burn_in,
        seed: sub_seed(h.seed, SeedRole::Langevin),
        n_replicas: opts.n_replicas,
    };
    let stats = simulate(&sys, &linear, &lcfg)?;
    let exact = solve_equilibrium(&sys)?.stacked();
    let chol = Cholesky::factor(&sys.m)?;
    let mut table = Table::new(
        "langevin_moments",
        &[
            "coordinate", "exact_mean", "mean", "standard_error", "z_score", "exact_variance",
            "variance", "variance_rel_error",
        ],
    );
    let (mut max_z, mut max_var_err) = (0.0f64, 0.0f64);
    for i in 0..2 * dim {
        let mut e = vec![0.0; 2 * dim];
        e[i] = 1.0;
        let exact_var = h.kbt * chol.solve(&e)?[i];
        let z = (stats.mean[i] - exact[i]) / stats.standard_error[i];
        let rel = (stats.covariance_diag[i] - exact_var).abs() / exact_var;
        max_z = max_z.max(z.abs());
        max_var_err = max_var_err.max(rel);
        table.push(vec![
            json!(i),
            num(exact[i]),
            num(stats.mean[i]),
            num(stats.standard_error[i]),
            num(z),
            num(exact_var),
            num(stats.covariance_diag[i]),
            num(rel),
        ]);
    }
    let sim_seconds = started.elapsed().as_secs_f64();

    let quartic = if cfg.j4 > 0.0 {
        Some(quartic_perturbation(&sys, &cfg, &lcfg)?)
    } else {
        None
    };

    let mut mixing = Table::new(
        "mixing",
        &["dim", "mean_steps", "std_steps", "mean_gamma", "theoretical_steps"],
    );
    let mut fit = None;
    if !opts.mixing_dims.is_empty() && opts.mixing_trials > 0 {
        let base = sub_seed(h.seed, SeedRole::Mixing);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for &d in &opts.mixing_dims {
            let dcfg = h.substrate(d)?;
            let dcfg = crate::substrate::SubstrateConfig { j4: 0.0, ..dcfg };
            let mut steps = Vec::with_capacity(opts.mixing_trials);
            let mut gammas = Vec::with_capacity(opts.mixing_trials);
            let mut theory = Vec::with_capacity(opts.mixing_trials);
            for t in 0..opts.mixing_trials as u64 {
                let s = base + 4 * t;
                let je = gram_coupling(&analytical_weights(d, s, h.lambda_max, h.kbt)?, &dcfg)?;
                let jd = gram_coupling(&analytical_weights(d, s + 1, h.lambda_max, h.kbt)?, &dcfg)?;
                let bias = normal_vec(&mut stream(s + 2, 0), 2 * d, 1.0);
                let msys = assemble_block(&je, &jd, None, &bias[..d], &bias[d..], &dcfg)?;
                let mcfg = LangevinConfig {
                    mobility: 1.0,
                    dt: opts.mixing_step,
                    n_steps: 1,
                    burn_in: 0,
                    seed: s,
                    n_replicas: 1,
                };
                let est = mixing_estimate(&msys, &dcfg, &mcfg, opts.mixing_epsilon, MixingCriterion::PerUnit)?;
                steps.push(est.steps as f64);
                gammas.push(est.gamma);
                theory.push(est.theoretical_steps);
            }
            mixing.push(vec![
                json!(d),
                num(mean(&steps)),
                num(std_dev(&steps)),
                num(mean(&gammas)),
                num(mean(&theory)),
            ]);
            xs.push(d as f64);
            ys.push(mean(&steps));
        }
        if xs.len() >= 2 {
            fit = Some(fit_log_linear(&xs, &ys)?);
        }
    }

    let config = json!({
        "harness": h,
        "options": opts,
        "langevin": lcfg,
        "seeds": seed_echo(h.seed, &[
            SeedRole::EncoderWeights, SeedRole::DecoderWeights, SeedRole::Bias, SeedRole::Langevin, SeedRole::Mixing,
        ]),
        "mixing_criterion": MixingCriterion::PerUnit,
    });
    let mut report = ExperimentReport::new("langevin-check", "analytical", config, table);
    report.metric("n_samples", stats.n_samples);
    report.metric("n_effective_samples", stats.n_effective_samples);
    report.metric("max_abs_z", num(max_z));
    report.metric("max_variance_rel_error", num(max_var_err));
    report.metric("mean_within_3se", max_z <= 3.0);
    report.metric("variance_within_10pct", max_var_err <= 0.1);
    report.metric("lambda_min", num(lmin));
    report.metric("lambda_max", num(lmax));
    report.metric("dt", num(dt));
    report.metric("burn_in", burn_in);
    report.metric("simulation_seconds", num(sim_seconds));
    if let Some(q) = quartic {
        report.metric("quartic_perturbation", num(q));
    }
    if let Some(f) = fit {
        report.metric("mixing_fit_a", num(f.a));
        report.metric("mixing_fit_b", num(f.b));
        report.metric("mixing_fit_r2", num(f.r2));
    }
    report.plotdata = vec![mixing];
    Ok(report)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataKind {
    /// Rescaled Gaussian weights, independent Gaussian targets.
    Random,
    /// Rescaled Gaussian weights, rank-`r` correlated activations.
    Correlated,
    /// Log-spaced Gram spectra, rank-`r` correlated activations.
    Spectral,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenDataOptions {
    pub kind: DataKind,
    pub out: PathBuf,
    pub activation_rank: usize,
    pub noise: f64,
    pub decades: f64,
}

/// Writes weights and activations as TDIF files plus `manifest.json` in `opts.out`.
pub fn gen_data(h: &HarnessConfig, opts: &GenDataOptions) -> Result<ExperimentReport> {
    let dim = h.dim;
    let lambda = if h.lambda_max > 0.0 { h.lambda_max } else { DEFAULT_LAMBDA_MAX };
    let seed = |r| sub_seed(h.seed, r);
    let (we, wd) = match opts.kind {
        DataKind::Random | DataKind::Correlated => (
            analytical_weights(dim, seed(SeedRole::EncoderWeights), h.lambda_max, h.kbt)?,
            analytical_weights(dim, seed(SeedRole::DecoderWeights), h.lambda_max, h.kbt)?,
        ),
        DataKind::Spectral => (
            gen_spectral_weights(dim, lambda, opts.decades, h.kbt, seed(SeedRole::EncoderWeights))?,
            gen_spectral_weights(dim, lambda, opts.decades, h.kbt, seed(SeedRole::DecoderWeights))?,
        ),
    };
    let acts: ActivationSet = match opts.kind {
        DataKind::Random => gen_gaussian_targets(dim, h.samples, seed(SeedRole::Targets)),
        _ => gen_correlated_activations(dim, h.samples, opts.activation_rank, opts.noise, seed(SeedRole::Activations))?,
    };
    let (xe, xd) = acts.to_matrices()?;
    std::fs::create_dir_all(&opts.out).map_err(|e| Error::io(&opts.out, e))?;
    let mut manifest = Manifest::default();
    for (role, m) in [(ROLE_W_ENC, &we), (ROLE_W_DEC, &wd), (ROLE_X_ENC, &xe), (ROLE_X_DEC_TARGET, &xd)] {
        manifest.add_tensor(&opts.out, role, m)?;
    }
    let path = opts.out.join("manifest.json");
    manifest.save(&path)?;

    let mut table = Table::new("manifest", &["role", "path", "rows", "cols"]);
    for e in &manifest.entries {
        table.push(vec![
            json!(e.role),
            json!(opts.out.join(&e.path).display().to_string()),
            json!(e.rows),
            json!(e.cols),
        ]);
    }
    let config = json!({
        "harness": h,
        "options": opts,
        "seeds": seed_echo(h.seed, &[SeedRole::EncoderWeights, SeedRole::DecoderWeights, SeedRole::Targets, SeedRole::Activations]),
    });
    let mut report = ExperimentReport::new("gen-data", "generated", config, table);
    report.metric("manifest", path.display().to_string());
    report.metric("provenance", serde_json::to_value(acts.provenance)?);
    Ok(report)
}

pub fn run_energy(model: &EnergyModel) -> Result<ExperimentReport> {
    let chain = energy_chain(model)?;
    let mut table = Table::new("energy_chain", &["e_thermo", "raw_gain", "derated_gain", "net_gain"]);
    table.push(vec![
        num(chain.e_thermo),
        num(chain.raw_gain),
        num(chain.derated_gain),
        num(chain.net_gain),
    ]);
    let mut report = ExperimentReport::new("energy", "model", json!({ "model": model }), table);
    for (k, v) in [
        ("e_thermo", chain.e_thermo),
        ("raw_gain", chain.raw_gain),
        ("derated_gain", chain.derated_gain),
        ("net_gain", chain.net_gain),
    ] {
        report.metric(k, num(v));
    }
    let mut reference = Table::new("published_energy_chain", &["quantity", "value"]);
    for (k, v) in [("e_thermo", 4.2e-16), ("raw_gain", 2e13), ("derated_gain", 1e10), ("net_gain", 1e7)] {
        reference.push(vec![json!(k), json!(v)]);
    }
    report.reference = Some(reference);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_fit_recovers_exact_law() {
        let x = [16.0, 32.0, 64.0, 128.0];
        let y: Vec<f64> = x.iter().map(|d: &f64| 3.0 + 2.0 * d.ln()).collect();
        let f = fit_log_linear(&x, &y).unwrap();
        assert!((f.a - 3.0).abs() < 1e-12 && (f.b - 2.0).abs() < 1e-12 && (f.r2 - 1.0).abs() < 1e-12);
        assert!(fit_log_linear(&[1.0], &[1.0]).is_err());
        assert!(fit_log_linear(&[2.0, 2.0], &[1.0, 3.0]).is_err());
    }

    #[test]
    fn energy_report_has_one_row() {
        let r = run_energy(&EnergyModel::default()).unwrap();
        assert_eq!(r.table.rows.len(), 1);
        assert!((r.metric_f64("e_thermo").unwrap() - 4.24e-16).abs() < 1e-18);
    }

    #[test]
    fn gen_data_round_trips_through_the_manifest() {
        let tmp = tempfile::tempdir().unwrap();
        let h = HarnessConfig {
            dim: 6,
            samples: 10,
            ..HarnessConfig::default()
        };
        let opts = GenDataOptions {
            kind: DataKind::Correlated,
            out: tmp.path().to_path_buf(),
            activation_rank: 2,
            noise: 0.1,
            decades: 3.0,
        };
        gen_data(&h, &opts).unwrap();
        let ingest = HarnessConfig {
            manifest: Some(tmp.path().join("manifest.json")),
            ..h.clone()
        };
        let src = Source::load(&ingest).unwrap();
        assert_eq!(src.dim(), 6);
        assert_eq!(src.activations.unwrap().len(), 10);
    }
}
