//! Cyclic Jacobi eigensolver for real symmetric matrices.

use super::svd::leading_sign_negative;
use super::Matrix;
use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 100;
const SYMMETRY_TOL: f64 = 1e-12;

/// `values` non-increasing; `vectors` holds the matching orthonormal columns.
#[derive(Clone, Debug)]
pub struct EigResult {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

impl EigResult {
    pub fn lambda_max(&self) -> f64 {
        self.values[0]
    }

    pub fn lambda_min(&self) -> f64 {
        *self.values.last().expect("non-empty spectrum")
    }
}

pub fn sym_eig(m: &Matrix) -> Result<EigResult> {
    if !m.is_square() {
        return Err(Error::NotSquare {
            rows: m.rows(),
            cols: m.cols(),
        });
    }
    let fro = m.frobenius_norm();
    if m.asymmetry() > SYMMETRY_TOL * fro {
        return Err(Error::InvalidArgument(format!(
            "sym_eig input asymmetric: |M - Mt|_F = {:e}",
            m.asymmetry()
        )));
    }
    let n = m.rows();
    let sym = m.symmetrized()?;
    let mut a: Vec<Vec<f64>> = (0..n).map(|i| sym.row(i).to_vec()).collect();
    // Rows of `vt` are the eigenvector estimates.
    let mut vt: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut e = vec![0.0; n];
            e[i] = 1.0;
            e
        })
        .collect();
    let tol = 1e-15 * fro;

    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                let apq = a[p][q];
                if apq.abs() <= tol || apq == 0.0 {
                    continue;
                }
                rotated = true;
                let theta = (a[q][q] - a[p][p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                a[p][p] -= t * apq;
                a[q][q] += t * apq;
                a[p][q] = 0.0;
                a[q][p] = 0.0;
                #[allow(clippy::needless_range_loop)]
                for k in 0..n {
                    if k == p || k == q {
                        continue;
                    }
                    let (akp, akq) = (a[p][k], a[q][k]);
                    let (np, nq) = (c * akp - s * akq, s * akp + c * akq);
                    a[p][k] = np;
                    a[q][k] = nq;
                    a[k][p] = np;
                    a[k][q] = nq;
                }
                let (vp, vq) = two_rows(&mut vt, p, q);
                for (x, y) in vp.iter_mut().zip(vq.iter_mut()) {
                    let (xp, xq) = (*x, *y);
                    *x = c * xp - s * xq;
                    *y = s * xp + c * xq;
                }
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NonConvergence {
            algorithm: "cyclic Jacobi eigensolver",
            rows: n,
            cols: n,
            sweeps: MAX_SWEEPS,
        });
    }

    let mut order: Vec<(usize, f64)> = (0..n).map(|i| (i, a[i][i])).collect();
    order.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
    let values = order.iter().map(|o| o.1).collect();
    let cols: Vec<Vec<f64>> = order
        .iter()
        .map(|&(idx, _)| {
            let c = vt[idx].clone();
            if leading_sign_negative(&c) {
                c.into_iter().map(|x| -x).collect()
            } else {
                c
            }
        })
        .collect();
    Ok(EigResult {
        values,
        vectors: Matrix::from_columns(&cols),
    })
}

fn two_rows(rows: &mut [Vec<f64>], p: usize, q: usize) -> (&mut Vec<f64>, &mut Vec<f64>) {
    let (head, tail) = rows.split_at_mut(q);
    (&mut head[p], &mut tail[0])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_spectrum() {
        let r = sym_eig(&Matrix::from_diag(&[0.009, 0.034])).unwrap();
        assert_eq!(r.values, vec![0.034, 0.009]);
    }

    #[test]
    fn zero_matrix() {
        let r = sym_eig(&Matrix::zeros(3, 3)).unwrap();
        assert_eq!(r.values, vec![0.0; 3]);
    }

    #[test]
    fn hand_computed_two_by_two() {
        let r = sym_eig(&Matrix::from_rows(&[&[2.0, 1.0], &[1.0, 2.0]])).unwrap();
        assert!((r.values[0] - 3.0).abs() < 1e-14);
        assert!((r.values[1] - 1.0).abs() < 1e-14);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((r.vectors[(0, 0)] - h).abs() < 1e-14);
        assert!((r.vectors[(1, 0)] - h).abs() < 1e-14);
        // (1,-1)/sqrt2 up to the sign rule: first component wins the tie
        assert!((r.vectors[(0, 1)] - h).abs() < 1e-14);
        assert!((r.vectors[(1, 1)] + h).abs() < 1e-14);
    }

    #[test]
    fn rejects_non_square_and_asymmetric() {
        assert!(matches!(
            sym_eig(&Matrix::zeros(2, 3)),
            Err(Error::NotSquare { .. })
        ));
        let asym = Matrix::from_rows(&[&[1.0, 2.0], &[0.0, 1.0]]);
        assert!(matches!(sym_eig(&asym), Err(Error::InvalidArgument(_))));
    }
}
