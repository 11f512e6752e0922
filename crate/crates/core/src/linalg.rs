//! Dense SVD helpers on nalgebra matrices, computed with faer.
//!
//! nalgebra's own SVD loses accuracy on rank-deficient matrices with
//! clustered zero singular values (reconstruction errors up to 1e-1 were
//! seen on small Jacobians), which is exactly the regime rank tests live in.

use faer::Mat;
use nalgebra::{DMatrix, DVector};

/// Thin SVD `a = u diag(s) v_t`, singular values in nonincreasing order.
#[derive(Debug, Clone)]
pub struct Svd {
    pub singular_values: DVector<f64>,
    pub u: DMatrix<f64>,
    pub v_t: DMatrix<f64>,
}

fn to_faer(a: &DMatrix<f64>) -> Mat<f64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

pub fn svd(a: &DMatrix<f64>) -> Svd {
    let (m, n) = a.shape();
    let k = m.min(n);
    if k == 0 {
        return Svd {
            singular_values: DVector::zeros(0),
            u: DMatrix::zeros(m, 0),
            v_t: DMatrix::zeros(0, n),
        };
    }
    match to_faer(a).thin_svd() {
        Ok(s) => {
            let (u, v, d) = (s.U(), s.V(), s.S().column_vector());
            Svd {
                singular_values: DVector::from_fn(k, |i, _| d[i]),
                u: DMatrix::from_fn(m, k, |i, j| u[(i, j)]),
                v_t: DMatrix::from_fn(k, n, |i, j| v[(j, i)]),
            }
        }
        Err(e) => {
            log::warn!("faer SVD failed ({e:?}); falling back to nalgebra");
            let s = a.clone().svd(true, true);
            let mut order: Vec<usize> = (0..k).collect();
            order.sort_by(|&x, &y| s.singular_values[y].total_cmp(&s.singular_values[x]));
            let (u, v_t) = (s.u.expect("requested"), s.v_t.expect("requested"));
            Svd {
                singular_values: DVector::from_fn(k, |i, _| s.singular_values[order[i]]),
                u: DMatrix::from_fn(m, k, |i, j| u[(i, order[j])]),
                v_t: DMatrix::from_fn(k, n, |i, j| v_t[(order[i], j)]),
            }
        }
    }
}

/// Singular values in nonincreasing order.
pub fn singular_values(a: &DMatrix<f64>) -> DVector<f64> {
    if a.is_empty() {
        return DVector::zeros(0);
    }
    match to_faer(a).singular_values() {
        Ok(s) => DVector::from_vec(s),
        Err(_) => svd(a).singular_values,
    }
}

/// Moore-Penrose pseudoinverse, dropping singular values at or below
/// `rel * sigma_max`.
pub fn pseudo_inverse(a: &DMatrix<f64>, rel: f64) -> DMatrix<f64> {
    let s = svd(a);
    let max = s.singular_values.iter().copied().fold(0.0, f64::max);
    let mut out = DMatrix::zeros(a.ncols(), a.nrows());
    for (k, &sk) in s.singular_values.iter().enumerate() {
        if sk > rel * max && sk > 0.0 {
            out += s.v_t.row(k).transpose() * s.u.column(k).transpose() / sk;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_deficient_reconstruction() {
        // rank one outer product plus a zero column block
        let a = DMatrix::from_fn(5, 8, |i, j| if j < 6 { (i + 1) as f64 * (j as f64 - 2.5) } else { 0.0 });
        let s = svd(&a);
        let back = &s.u * DMatrix::from_diagonal(&s.singular_values) * &s.v_t;
        assert!((back - &a).amax() < 1e-12);
        assert!(s.singular_values[1] < 1e-12 * s.singular_values[0]);
        let p = pseudo_inverse(&a, 1e-12);
        assert!((&a * &p * &a - &a).amax() < 1e-12);
        let sv = singular_values(&a);
        assert!((sv[0] - s.singular_values[0]).abs() < 1e-12);
    }

    #[test]
    fn empty_shapes() {
        let s = svd(&DMatrix::zeros(3, 0));
        assert_eq!((s.u.shape(), s.v_t.shape()), ((3, 0), (0, 0)));
        assert_eq!(singular_values(&DMatrix::zeros(0, 4)).len(), 0);
    }
}
