mod common;

use common::checks::{cholesky_vs_elimination, svd_reconstruction};
use common::{gaussian, random_spd};
use proptest::prelude::*;
use thermo_diffuse_core::linalg::{svd, sym_eig, Cholesky};
use thermo_diffuse_core::substrate::{assemble_block, gram_coupling, skip_coupling, SubstrateConfig};

#[test]
fn cholesky_agrees_with_gaussian_elimination_up_to_8x8() {
    let (worst, n) = cholesky_vs_elimination();
    assert_eq!(n, 200);
    assert!(worst <= 1e-9, "worst relative error {worst:e}");
}

#[test]
fn svd_reconstructs_200_random_matrices() {
    let (worst, _) = svd_reconstruction();
    assert!(worst <= 1e-10, "worst relative reconstruction error {worst:e}");
}

#[test]
fn svd_is_bit_reproducible() {
    let m = gaussian(40, 31, 9);
    let (a, b) = (svd(&m).unwrap(), svd(&m).unwrap());
    assert_eq!(a.u, b.u);
    assert_eq!(a.v, b.v);
    assert_eq!(a.sigma, b.sigma);
}

#[test]
fn cholesky_rejects_an_indefinite_matrix() {
    let m = thermo_diffuse_core::Matrix::from_rows(&[&[1.0, 2.0], &[2.0, 1.0]]);
    assert!(Cholesky::factor(&m).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn eigen_decomposition_reconstructs(n in 2usize..24, seed in any::<u32>()) {
        let m = random_spd(n, 0.0, seed as u64);
        let e = sym_eig(&m).unwrap();
        let mut vd = e.vectors.clone();
        for i in 0..n {
            for j in 0..n {
                vd[(i, j)] *= e.values[j];
            }
        }
        let back = vd.matmul(&e.vectors.transpose()).unwrap();
        prop_assert!(back.sub(&m).unwrap().frobenius_norm() <= 1e-10 * m.frobenius_norm());
    }

    // λ_min(M) ≥ 2J₂ − ‖J_skip‖₂ − ε for Gram couplings, which are PSD.
    #[test]
    fn block_spectrum_respects_the_skip_bound(
        d in 3usize..16,
        k in 1usize..3,
        scale in 0.05f64..1.0,
        seed in any::<u32>(),
    ) {
        let cfg = SubstrateConfig::new(d, 1.0, 0.1, 0.0).unwrap();
        let seed = seed as u64;
        let je = gram_coupling(&gaussian(d, d, seed).scale(scale / d as f64), &cfg).unwrap();
        let jd = gram_coupling(&gaussian(d, d, seed + 1).scale(scale / d as f64), &cfg).unwrap();
        let skip = skip_coupling(&je, &jd, k.min(d), &cfg).unwrap();
        let zero = vec![0.0; d];
        let sys = assemble_block(&je, &jd, Some(&skip), &zero, &zero, &cfg).unwrap();
        let lmin = sym_eig(&sys.m).unwrap().lambda_min();
        let skip_norm = svd(&skip.dense).unwrap().sigma[0];
        prop_assert!(lmin >= 2.0 * cfg.j2 - skip_norm - 1e-12, "{lmin} vs {}", 2.0 * cfg.j2 - skip_norm);
    }
}
