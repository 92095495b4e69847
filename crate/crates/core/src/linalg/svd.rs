//! One-sided (Hestenes) Jacobi SVD.

use super::{dot, norm, Matrix};
use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 100;
const ORTHOGONALITY_TOL: f64 = 1e-12;

/// Thin SVD `input = u · diag(sigma) · vᵀ`.
///
/// `u` is `m×p`, `v` is `n×p` with `p = min(m, n)`. Singular values are sorted
/// non-increasing; within each pair the largest-magnitude component of the left
/// vector is non-negative (lowest index wins ties).
#[derive(Clone, Debug)]
pub struct SvdResult {
    pub u: Matrix,
    pub sigma: Vec<f64>,
    pub v: Matrix,
}

impl SvdResult {
    pub fn reconstruct(&self) -> Matrix {
        let mut us = self.u.clone();
        for i in 0..us.rows() {
            for (j, s) in self.sigma.iter().enumerate() {
                us[(i, j)] *= s;
            }
        }
        us.matmul(&self.v.transpose())
            .expect("svd factors are conformant")
    }

    /// Leading `k` columns of `u`.
    pub fn u_leading(&self, k: usize) -> Matrix {
        self.u.block(0, 0, self.u.rows(), k)
    }
}

pub fn svd(m: &Matrix) -> Result<SvdResult> {
    if m.rows() >= m.cols() {
        jacobi_tall(m)
    } else {
        let t = jacobi_tall(&m.transpose())?;
        let mut res = SvdResult {
            u: t.v,
            sigma: t.sigma,
            v: t.u,
        };
        fix_signs(&mut res);
        Ok(res)
    }
}

fn jacobi_tall(m: &Matrix) -> Result<SvdResult> {
    let (rows, n) = (m.rows(), m.cols());
    let mut a: Vec<Vec<f64>> = (0..n).map(|j| m.column(j)).collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect();

    let mut converged = n < 2;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for i in 0..n.saturating_sub(1) {
            for j in (i + 1)..n {
                let alpha = dot(&a[i], &a[i]);
                let beta = dot(&a[j], &a[j]);
                let gamma = dot(&a[i], &a[j]);
                if gamma == 0.0 || gamma.abs() <= ORTHOGONALITY_TOL * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut a, i, j, c, s);
                rotate(&mut v, i, j, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NonConvergence {
            algorithm: "one-sided Jacobi SVD",
            rows,
            cols: n,
            sweeps: MAX_SWEEPS,
        });
    }

    let mut order: Vec<(usize, f64)> = a.iter().map(|c| norm(c)).enumerate().collect();
    order.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));

    let sigma_max = order.first().map_or(0.0, |o| o.1);
    let null_floor = sigma_max * f64::EPSILON * rows as f64;
    let mut u_cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut v_cols = Vec::with_capacity(n);
    let mut sigma = Vec::with_capacity(n);
    let mut pending_null = Vec::new();
    for (slot, &(idx, s)) in order.iter().enumerate() {
        sigma.push(s);
        v_cols.push(v[idx].clone());
        if s > null_floor && s > 0.0 {
            u_cols.push(a[idx].iter().map(|x| x / s).collect());
        } else {
            u_cols.push(vec![0.0; rows]);
            pending_null.push(slot);
        }
    }
    for slot in pending_null {
        u_cols[slot] = complete_basis(&u_cols, slot, rows);
    }

    let mut res = SvdResult {
        u: Matrix::from_columns(&u_cols),
        sigma,
        v: Matrix::from_columns(&v_cols),
    };
    fix_signs(&mut res);
    Ok(res)
}

fn rotate(cols: &mut [Vec<f64>], i: usize, j: usize, c: f64, s: f64) {
    let (lo, hi) = cols.split_at_mut(j);
    let (ci, cj) = (&mut lo[i], &mut hi[0]);
    for (x, y) in ci.iter_mut().zip(cj.iter_mut()) {
        let (xi, yj) = (*x, *y);
        *x = c * xi - s * yj;
        *y = s * xi + c * yj;
    }
}

/// Unit vector orthogonal to every non-zero column except `skip`, found by
/// Gram-Schmidt over the standard basis.
fn complete_basis(cols: &[Vec<f64>], skip: usize, rows: usize) -> Vec<f64> {
    for e in 0..rows {
        let mut cand = vec![0.0; rows];
        cand[e] = 1.0;
        for _ in 0..2 {
            for (k, c) in cols.iter().enumerate() {
                if k == skip {
                    continue;
                }
                let p = dot(&cand, c);
                if p != 0.0 {
                    super::axpy(-p, c, &mut cand);
                }
            }
        }
        let nrm = norm(&cand);
        if nrm > 1e-8 {
            cand.iter_mut().for_each(|x| *x /= nrm);
            return cand;
        }
    }
    unreachable!("a thin factor always has room for another orthonormal column")
}

pub(crate) fn leading_sign_negative(col: &[f64]) -> bool {
    let mut best = 0usize;
    for (i, x) in col.iter().enumerate() {
        if x.abs() > col[best].abs() {
            best = i;
        }
    }
    col.get(best).is_some_and(|&x| x < 0.0)
}

fn fix_signs(res: &mut SvdResult) {
    for j in 0..res.sigma.len() {
        if leading_sign_negative(&res.u.column(j)) {
            for i in 0..res.u.rows() {
                res.u[(i, j)] = -res.u[(i, j)];
            }
            for i in 0..res.v.rows() {
                res.v[(i, j)] = -res.v[(i, j)];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel_recon_error(m: &Matrix, r: &SvdResult) -> f64 {
        r.reconstruct().sub(m).unwrap().frobenius_norm() / m.frobenius_norm().max(1.0)
    }

    #[test]
    fn diagonal_matrix() {
        let r = svd(&Matrix::from_diag(&[3.0, 2.0])).unwrap();
        assert_eq!(r.sigma, vec![3.0, 2.0]);
        assert_eq!(r.u, Matrix::identity(2));
        assert_eq!(r.v, Matrix::identity(2));
    }

    #[test]
    fn identity_has_unit_singular_values() {
        let r = svd(&Matrix::identity(4)).unwrap();
        assert_eq!(r.sigma, vec![1.0; 4]);
    }

    #[test]
    fn hand_computed_two_by_two() {
        // [[0,2],[1,0]] = e1·2·e2ᵀ + e2·1·e1ᵀ
        let m = Matrix::from_rows(&[&[0.0, 2.0], &[1.0, 0.0]]);
        let r = svd(&m).unwrap();
        assert!((r.sigma[0] - 2.0).abs() < 1e-15);
        assert!((r.sigma[1] - 1.0).abs() < 1e-15);
        assert!(rel_recon_error(&m, &r) < 1e-14);
        assert!((r.u[(0, 0)] - 1.0).abs() < 1e-15);
        assert!((r.v[(1, 0)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rank_deficient_and_wide_inputs() {
        let ones = Matrix::from_vec(3, 3, vec![1.0; 9]).unwrap();
        let r = svd(&ones).unwrap();
        assert!((r.sigma[0] - 3.0).abs() < 1e-14);
        assert!(r.sigma[1].abs() < 1e-14);
        let utu = r.u.t_matmul(&r.u).unwrap();
        assert!(utu.sub(&Matrix::identity(3)).unwrap().max_abs() < 1e-12);

        let wide = Matrix::from_rows(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]]);
        let r = svd(&wide).unwrap();
        assert_eq!((r.u.rows(), r.u.cols(), r.v.rows()), (2, 2, 3));
        assert!(rel_recon_error(&wide, &r) < 1e-13);
        assert!(r.u.column(0).iter().fold(0.0f64, |m, x| if x.abs() > m.abs() { *x } else { m }) >= 0.0);
    }
}
