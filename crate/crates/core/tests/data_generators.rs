mod common;

use common::corr;
use thermo_diffuse_core::data_io::{
    gen_correlated_activations, gen_gaussian_targets, gen_random_weights, read_matrix, write_matrix,
};
use thermo_diffuse_core::linalg::{svd, sym_eig};
use thermo_diffuse_core::substrate::{gram_coupling, SubstrateConfig};
use thermo_diffuse_core::Matrix;

#[test]
fn random_gram_edge_sits_at_marchenko_pastur() {
    // square N(0, 1/D): WᵀW has support [0, 4], so J = WᵀW/4 tops out near 1
    let d = 256;
    let cfg = SubstrateConfig::linear(d);
    let j = gram_coupling(&gen_random_weights(d, 17).unwrap(), &cfg).unwrap();
    let e = sym_eig(&j.j).unwrap();
    assert!((e.lambda_max() - 1.0).abs() <= 0.1, "edge {}", e.lambda_max());
    let mean = e.values.iter().sum::<f64>() / d as f64;
    assert!((mean - 0.25).abs() <= 0.025, "mean eigenvalue {mean}");
    // fraction of eigenvalues below a quarter of the edge, from the quarter-circle law
    let below = e.values.iter().filter(|&&v| v < 0.25).count() as f64 / d as f64;
    let oracle = mp_cdf(1.0);
    assert!((below - oracle).abs() <= 0.1 * oracle, "{below} vs {oracle}");
}

/// CDF of the ratio-one Marchenko–Pastur law (support [0, 4]) by midpoint quadrature.
fn mp_cdf(x: f64) -> f64 {
    let n = 200_000;
    let h = x / n as f64;
    (0..n)
        .map(|i| {
            let t = (i as f64 + 0.5) * h;
            (t * (4.0 - t)).sqrt() / (2.0 * std::f64::consts::PI * t) * h
        })
        .sum()
}

fn covariance(a: &Matrix, b: &Matrix) -> Matrix {
    let n = a.rows() as f64;
    let center = |m: &Matrix| {
        let mut c = m.clone();
        for j in 0..m.cols() {
            let mu = m.column(j).iter().sum::<f64>() / n;
            for i in 0..m.rows() {
                c[(i, j)] -= mu;
            }
        }
        c
    };
    center(a).t_matmul(&center(b)).unwrap().scale(1.0 / (n - 1.0))
}

fn inverse_sqrt(c: &Matrix) -> Matrix {
    let e = sym_eig(c).unwrap();
    let mut v = e.vectors.clone();
    for j in 0..v.cols() {
        let s = e.values[j].powf(-0.5);
        for i in 0..v.rows() {
            v[(i, j)] *= s;
        }
    }
    v.matmul(&e.vectors.transpose()).unwrap()
}

#[test]
fn correlated_activations_share_a_rank_r_latent() {
    let (d, r) = (16, 4);
    let set = gen_correlated_activations(d, 4000, r, 0.1, 8).unwrap();
    let (x, y) = set.to_matrices().unwrap();
    let k = inverse_sqrt(&covariance(&x, &x))
        .matmul(&covariance(&x, &y))
        .unwrap()
        .matmul(&inverse_sqrt(&covariance(&y, &y)))
        .unwrap();
    let cc = svd(&k).unwrap().sigma;
    assert!(cc[..r].iter().all(|&c| c > 0.9), "{cc:?}");
    assert!(cc[r] < 0.2, "{cc:?}");
}

#[test]
fn distinct_seeds_are_uncorrelated() {
    let n = 4096;
    let a = gen_gaussian_targets(n, 1, 1).x_enc.remove(0);
    let b = gen_gaussian_targets(n, 1, 2).x_enc.remove(0);
    let bound = 3.0 / (n as f64).sqrt();
    assert!(corr(&a, &b).abs() < bound);
    let wa = gen_random_weights(64, 1).unwrap().into_vec();
    let wb = gen_random_weights(64, 2).unwrap().into_vec();
    assert!(corr(&wa, &wb).abs() < 3.0 / (wa.len() as f64).sqrt());
    let ca = gen_correlated_activations(8, 512, 2, 0.1, 1).unwrap();
    let cb = gen_correlated_activations(8, 512, 2, 0.1, 2).unwrap();
    let fa: Vec<f64> = ca.x_enc.concat();
    let fb: Vec<f64> = cb.x_enc.concat();
    assert!(corr(&fa, &fb).abs() < 0.1);
}

#[test]
fn tdif_files_are_header_plus_payload() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.tdif");
    let m = Matrix::from_vec(2, 3, (1..=6).map(f64::from).collect()).unwrap();
    write_matrix(&m, &path).unwrap();
    assert_eq!(std::fs::metadata(&path).unwrap().len(), 62);
    let back = read_matrix(&path).unwrap();
    assert!(back.as_slice().iter().zip(m.as_slice()).all(|(a, b)| a.to_bits() == b.to_bits()));
}
