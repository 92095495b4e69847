#![allow(dead_code)]

use thermo_diffuse_core::rng::{normal_vec, stream};
use thermo_diffuse_core::Matrix;

pub fn gaussian(rows: usize, cols: usize, seed: u64) -> Matrix {
    Matrix::from_vec(rows, cols, normal_vec(&mut stream(seed, 0), rows * cols, 1.0)).unwrap()
}

/// `GᵀG + shift·I` for a random square `G`.
pub fn random_spd(n: usize, shift: f64, seed: u64) -> Matrix {
    let g = gaussian(n, n, seed);
    g.t_matmul(&g).unwrap().add(&Matrix::identity(n).scale(shift)).unwrap()
}

/// Dense Gaussian elimination with partial pivoting.
pub fn gauss_solve(m: &Matrix, b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut a: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut r = m.row(i).to_vec();
            r.push(b[i]);
            r
        })
        .collect();
    for c in 0..n {
        let p = (c..n)
            .max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))
            .unwrap();
        a.swap(c, p);
        let (top, rest) = a.split_at_mut(c + 1);
        let pivot = &top[c];
        for row in rest {
            let f = row[c] / pivot[c];
            for (v, p) in row[c..].iter_mut().zip(&pivot[c..]) {
                *v -= f * p;
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| a[i][k] * x[k]).sum();
        x[i] = (a[i][n] - s) / a[i][i];
    }
    x
}

pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den.max(f64::MIN_POSITIVE)
}

/// Pearson correlation.
pub fn corr(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    sab / (saa * sbb).sqrt()
}

pub mod checks {
    //! Oracle comparisons shared by the property tests and the acceptance run.
    //! Each returns the worst error seen and how many cases were checked.

    use super::{gauss_solve, gaussian, random_spd, rel_err};
    use thermo_diffuse_core::conditioning::{
        loss, loss_and_gradient, BiasPair, ConditioningInterface, EncoderKind, TrainingPair,
    };
    use thermo_diffuse_core::langevin::{potential, potential_gradient};
    use thermo_diffuse_core::linalg::{solve_spd, svd};
    use thermo_diffuse_core::rng::stream;
    use thermo_diffuse_core::substrate::{assemble_block, gram_coupling, skip_coupling, SubstrateConfig};

    pub fn cholesky_vs_elimination() -> (f64, usize) {
        let mut worst: f64 = 0.0;
        let mut n_cases = 0;
        for n in 1..=8 {
            for seed in 0..25 {
                let m = random_spd(n, 0.1, 1000 * n as u64 + seed);
                let b = gaussian(n, 1, 77 + seed).into_vec();
                worst = worst.max(rel_err(&solve_spd(&m, &b).unwrap(), &gauss_solve(&m, &b)));
                n_cases += 1;
            }
        }
        (worst, n_cases)
    }

    pub fn svd_reconstruction() -> (f64, usize) {
        let mut worst: f64 = 0.0;
        for case in 0..200u64 {
            let rows = 1 + (case * 37 % 64) as usize;
            let cols = 1 + (case * 53 % 64) as usize;
            let m = gaussian(rows, cols, 5000 + case);
            let s = svd(&m).unwrap();
            assert!(s.sigma.windows(2).all(|w| w[0] >= w[1]), "case {case} unsorted");
            worst = worst.max(s.reconstruct().sub(&m).unwrap().frobenius_norm() / m.frobenius_norm());
        }
        (worst, 200)
    }

    fn pairs(d: usize, n: usize, seed: u64) -> Vec<TrainingPair> {
        (0..n)
            .map(|i| {
                let s = seed + 3 * i as u64;
                let b = BiasPair {
                    b_enc: gaussian(d, 1, s + 1).into_vec(),
                    b_dec: gaussian(d, 1, s + 2).into_vec(),
                };
                (gaussian(d, 1, s).into_vec(), b)
            })
            .collect()
    }

    /// Smallest |pre-activation| over every ReLU in the batch.
    fn relu_margin(iface: &ConditioningInterface, data: &[TrainingPair]) -> f64 {
        let mut m = f64::INFINITY;
        for (x, _) in data {
            if iface.kind == EncoderKind::Mlp {
                m = iface.w1.matvec(x).unwrap().iter().fold(m, |a, v| a.min(v.abs()));
            }
            let mut t = iface.t_in.matvec(&iface.encode(x).unwrap()).unwrap();
            if let Some(c) = &iface.t_in_bias {
                t.iter_mut().zip(c).for_each(|(a, b)| *a += b);
            }
            m = t.iter().fold(m, |a, v| a.min(v.abs()));
        }
        m
    }

    /// Relative error of analytic interface gradients against central
    /// differences, over every coordinate of interfaces whose ReLU inputs all
    /// stay at least 1e-3 from the kink.
    pub fn interface_gradients() -> (f64, usize) {
        let (d, k, h) = (6, 2, 1e-6);
        let mut worst: f64 = 0.0;
        let mut checked = 0;
        for (i, kind) in [EncoderKind::Linear, EncoderKind::Mlp].into_iter().enumerate() {
            for use_bias in [false, true] {
                for seed in 1..=6u64 {
                    let seed = 10 * i as u64 + seed;
                    let data = pairs(d, 5, 100 * seed);
                    let mut iface =
                        ConditioningInterface::init(kind, k, d, use_bias, &mut stream(seed, 0)).unwrap();
                    if let Some(c) = &mut iface.t_in_bias {
                        c.iter_mut().enumerate().for_each(|(i, v)| *v = 0.05 * (i as f64 - 7.5));
                    }
                    if relu_margin(&iface, &data) < 1e-3 {
                        continue;
                    }
                    let g = loss_and_gradient(&iface, &data).unwrap().1.flatten();
                    let p0 = iface.parameters();
                    let mut probe = iface.clone();
                    for (j, &analytic) in g.iter().enumerate() {
                        let mut p = p0.clone();
                        p[j] = p0[j] + h;
                        probe.set_parameters(&p).unwrap();
                        let up = loss(&probe, &data).unwrap();
                        p[j] = p0[j] - h;
                        probe.set_parameters(&p).unwrap();
                        let down = loss(&probe, &data).unwrap();
                        let fd = (up - down) / (2.0 * h);
                        let scale = analytic.abs().max(fd.abs()).max(1e-4);
                        worst = worst.max((fd - analytic).abs() / scale);
                        checked += 1;
                    }
                }
            }
        }
        (worst, checked)
    }

    /// Same for `∇V`, at 100 random states each for `J₄ = 0` and `J₄ > 0`.
    pub fn potential_gradients() -> (f64, usize) {
        let (d, h) = (4, 1e-5);
        let mut worst: f64 = 0.0;
        let mut points = 0;
        for j4 in [0.0, 0.05] {
            let cfg = SubstrateConfig::new(d, 1.0, 0.1, j4).unwrap();
            let je = gram_coupling(&gaussian(d, d, 1).scale(0.3), &cfg).unwrap();
            let jd = gram_coupling(&gaussian(d, d, 2).scale(0.3), &cfg).unwrap();
            let skip = skip_coupling(&je, &jd, 2, &cfg).unwrap();
            let b = gaussian(d, 1, 3).into_vec();
            let sys = assemble_block(&je, &jd, Some(&skip), &b, &b, &cfg).unwrap();
            for p in 0..100u64 {
                let z = gaussian(2 * d, 1, 1000 + p).into_vec();
                let g = potential_gradient(&z, &sys, &cfg).unwrap();
                for i in 0..2 * d {
                    let mut zp = z.clone();
                    zp[i] += h;
                    let mut zm = z.clone();
                    zm[i] -= h;
                    let v = |z: &[f64]| potential(z, &sys, &cfg).unwrap();
                    let fd = (v(&zp) - v(&zm)) / (2.0 * h);
                    worst = worst.max((fd - g[i]).abs() / g[i].abs().max(1e-3));
                }
                points += 1;
            }
        }
        (worst, points)
    }
}
