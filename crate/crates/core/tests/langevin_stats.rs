use thermo_diffuse_core::langevin::{
    mixing_estimate, quartic_perturbation, simulate, LangevinConfig, MixingCriterion,
};
use thermo_diffuse_core::substrate::{BlockSystem, SubstrateConfig};
use thermo_diffuse_core::Matrix;

/// Two decoupled units with curvature `m` and drive `b`.
fn scalar_pair(m: f64, b: f64) -> BlockSystem {
    BlockSystem {
        m: Matrix::from_diag(&[m, m]),
        bias: vec![b, b],
        a_block: Matrix::from_diag(&[m]),
        b_block: Matrix::from_diag(&[m]),
    }
}

fn scalar_cfg(kbt: f64, j2: f64, j4: f64) -> SubstrateConfig {
    SubstrateConfig { dim: 1, kbt, j2, j4 }
}

fn lcfg(dt: f64, n_steps: usize, seed: u64) -> LangevinConfig {
    LangevinConfig {
        mobility: 1.0,
        dt,
        n_steps,
        burn_in: n_steps / 10,
        seed,
        n_replicas: 8,
    }
}

#[test]
fn scalar_variance_is_kbt_over_m() {
    let sys = scalar_pair(0.2, 0.0);
    let cfg = scalar_cfg(1.0, 0.1, 0.0);
    let stats = simulate(&sys, &cfg, &lcfg(0.05, 400_000, 3)).unwrap();
    for v in &stats.covariance_diag {
        assert!((v - 5.0).abs() <= 0.25, "variance {v}");
    }
    for (m, se) in stats.mean.iter().zip(&stats.standard_error) {
        assert!(m.abs() <= 4.0 * se, "mean {m} se {se}");
    }
}

#[test]
fn identical_seeds_give_identical_statistics() {
    let sys = scalar_pair(0.5, 0.3);
    let cfg = scalar_cfg(1.0, 0.25, 0.02);
    let a = simulate(&sys, &cfg, &lcfg(0.02, 20_000, 11)).unwrap();
    let b = simulate(&sys, &cfg, &lcfg(0.02, 20_000, 11)).unwrap();
    assert_eq!(a.mean, b.mean);
    assert_eq!(a.covariance_diag, b.covariance_diag);
    let c = simulate(&sys, &cfg, &lcfg(0.02, 20_000, 12)).unwrap();
    assert_ne!(a.mean, c.mean);
}

#[test]
fn quartic_shift_is_linear_in_small_j4() {
    let sys = scalar_pair(0.5, 0.5);
    let shift = |j4: f64| {
        let cfg = scalar_cfg(0.05, 0.25, j4);
        quartic_perturbation(&sys, &cfg, &lcfg(0.05, 100_000, 21)).unwrap()
    };
    let (s1, s2) = (shift(1e-4), shift(2e-4));
    let ratio = s2 / s1;
    assert!((ratio - 2.0).abs() <= 0.5, "slope ratio {ratio} ({s1:e}, {s2:e})");
}

#[test]
fn halving_dt_reduces_the_stationary_bias() {
    let (m, b) = (1.0, 0.7);
    let sys = scalar_pair(m, b);
    let cfg = scalar_cfg(1.0, 0.5, 0.0);
    let bias_at = |dt: f64| {
        // a fixed simulated time per dt keeps the Monte-Carlo error comparable
        let steps = (40_000.0 / dt) as usize;
        let s = simulate(&sys, &cfg, &lcfg(dt, steps, 5)).unwrap();
        for (mu, se) in s.mean.iter().zip(&s.standard_error) {
            assert!((mu - b / m).abs() <= 4.0 * se, "dt {dt}: mean {mu}");
        }
        s.covariance_diag.iter().map(|v| (v - 1.0 / m).abs()).sum::<f64>() / 2.0
    };
    let (coarse, fine) = (bias_at(0.4), bias_at(0.2));
    assert!(fine < coarse, "variance bias {coarse} -> {fine}");
}

#[test]
fn relaxation_from_zero_reaches_tolerance() {
    let sys = scalar_pair(0.2, 0.2);
    let cfg = scalar_cfg(1.0, 0.1, 0.0);
    let l = lcfg(0.5, 10, 0);
    let est = mixing_estimate(&sys, &cfg, &l, 0.05, MixingCriterion::RelativeNorm).unwrap();
    // (1 - 0.1)^n <= 0.05
    let expect = (0.05f64.ln() / 0.9f64.ln()).ceil() as usize;
    assert_eq!(est.steps, expect);
    assert!((est.gamma - 0.2).abs() < 1e-12);
}
