//! Small dense linear-algebra helpers shared by the estimators.
//!
//! Everything here works on symmetric matrices, so eigen-based routines go
//! through `SymmetricEigen` and report eigenvalues in descending order.

use nalgebra::{DMatrix, DVector};

use crate::error::{CssError, Result};

/// Eigenvalues larger than this multiple of `λ_max` count as nonzero when a
/// symmetric matrix is inverted outright.
pub const SIGMA_COND_LIMIT: f64 = 1e12;

/// Conditioning policy for Gram matrices that may be nearly singular.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RidgePolicy {
    /// Ridge added to the diagonal is `rel * trace / dim`.
    pub rel: f64,
    /// Ridge is only applied when the condition number exceeds this.
    pub cond_limit: f64,
}

impl RidgePolicy {
    /// Policy for the H(y) Gram behind the ρ kernel.
    pub const RHO: RidgePolicy = RidgePolicy {
        rel: 1e-10,
        cond_limit: 1e12,
    };
    /// Policy for the G(ηᵀx) feature Gram behind f̂.
    pub const FEATURES: RidgePolicy = RidgePolicy {
        rel: 1e-8,
        cond_limit: 1e12,
    };
}

/// Symmetric eigendecomposition sorted by descending eigenvalue.
pub fn sym_eigen_desc(a: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let sym = symmetrize(a);
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    // stable sort keeps the solver's order on exact ties
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Condition number `λ_max / λ_min` of a symmetric PSD matrix; infinite when
/// the smallest eigenvalue is not positive.
pub fn condition_number(a: &DMatrix<f64>) -> f64 {
    let (vals, _) = sym_eigen_desc(a);
    let max = vals[0];
    let min = vals[vals.len() - 1];
    if min <= 0.0 || max <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Inverse of a symmetric positive-definite matrix via its eigendecomposition.
/// Fails when the condition number reaches [`SIGMA_COND_LIMIT`].
pub fn spd_inverse(a: &DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>> {
    let (vals, vecs) = sym_eigen_desc(a);
    let max = vals[0];
    let min = vals[vals.len() - 1];
    let condition = if min > 0.0 { max / min } else { f64::INFINITY };
    if !(max > 0.0) || condition >= SIGMA_COND_LIMIT {
        return Err(CssError::Singular { what, condition });
    }
    let inv_vals = vals.map(|v| 1.0 / v);
    Ok(&vecs * DMatrix::from_diagonal(&inv_vals) * vecs.transpose())
}

/// Inverse square root of a symmetric positive-definite matrix.
pub fn spd_inv_sqrt(a: &DMatrix<f64>, what: &'static str) -> Result<DMatrix<f64>> {
    let (vals, vecs) = sym_eigen_desc(a);
    let max = vals[0];
    let min = vals[vals.len() - 1];
    let condition = if min > 0.0 { max / min } else { f64::INFINITY };
    if !(max > 0.0) || condition >= SIGMA_COND_LIMIT {
        return Err(CssError::Singular { what, condition });
    }
    let d = vals.map(|v| 1.0 / v.sqrt());
    Ok(&vecs * DMatrix::from_diagonal(&d) * vecs.transpose())
}

/// Moore–Penrose inverse of a symmetric matrix. Eigenvalues with magnitude
/// below `rel_cut * max|λ|` are treated as zero. Returns the inverse and rank.
pub fn pinv_sym(a: &DMatrix<f64>, rel_cut: f64) -> (DMatrix<f64>, usize) {
    let (vals, vecs) = sym_eigen_desc(a);
    let scale = vals.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let cut = rel_cut * scale;
    let mut rank = 0;
    let inv = vals.map(|v| {
        if scale > 0.0 && v.abs() > cut {
            rank += 1;
            1.0 / v
        } else {
            0.0
        }
    });
    (
        &vecs * DMatrix::from_diagonal(&inv) * vecs.transpose(),
        rank,
    )
}

/// A factored symmetric positive-definite Gram matrix, possibly ridged.
#[derive(Debug, Clone)]
pub struct GramFactor {
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    pub ridge: f64,
}

impl GramFactor {
    /// Factor `gram`, adding a ridge when it is too ill-conditioned.
    pub fn new(gram: &DMatrix<f64>, policy: RidgePolicy, what: &'static str) -> Result<Self> {
        let k = gram.nrows();
        if let Some(chol) = gram.clone().cholesky() {
            // (max Lii / min Lii)^2 bounds the condition number from below;
            // when it is comfortably small the matrix is well conditioned.
            let diag = chol.l_dirty().diagonal();
            let hi = diag.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            let lo = diag.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
            if lo > 0.0 && (hi / lo).powi(2) * 1e2 < policy.cond_limit {
                return Ok(Self { chol, ridge: 0.0 });
            }
            if condition_number(gram) < policy.cond_limit {
                return Ok(Self { chol, ridge: 0.0 });
            }
        }
        let trace = gram.trace();
        if !(trace > 0.0) || !trace.is_finite() {
            return Err(CssError::Singular {
                what,
                condition: f64::INFINITY,
            });
        }
        let ridge = policy.rel * trace / k as f64;
        let mut ridged = gram.clone();
        for i in 0..k {
            ridged[(i, i)] += ridge;
        }
        match ridged.clone().cholesky() {
            Some(chol) => Ok(Self { chol, ridge }),
            None => Err(CssError::Singular {
                what,
                condition: condition_number(&ridged),
            }),
        }
    }

    pub fn solve(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(rhs)
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }

    /// Lower-triangular factor `L` with `Gram (+ ridge) = L Lᵀ`.
    pub fn l(&self) -> DMatrix<f64> {
        self.chol.l()
    }
}

pub fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_is_descending() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 3.0, 2.0]));
        let (vals, vecs) = sym_eigen_desc(&a);
        assert_eq!(vals.as_slice(), &[3.0, 2.0, 1.0]);
        assert!((vecs[(1, 0)].abs() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn pinv_satisfies_penrose_identities() {
        let v = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 2.0, 1.0, 0.0, 3.0]);
        let w = &v * v.transpose();
        let (wp, rank) = pinv_sym(&w, 1e-8);
        assert_eq!(rank, 2);
        assert!(max_abs(&(&w * &wp * &w - &w)) < 1e-10);
        assert!(max_abs(&(&wp * &w * &wp - &wp)) < 1e-10);
        let p = &wp * &w;
        assert!(max_abs(&(&p - p.transpose())) < 1e-10);
    }

    #[test]
    fn singular_inverse_errors() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(
            spd_inverse(&a, "test"),
            Err(CssError::Singular { .. })
        ));
    }

    #[test]
    fn ridge_kicks_in_for_singular_gram() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let f = GramFactor::new(&a, RidgePolicy::FEATURES, "test").unwrap();
        assert!(f.ridge > 0.0);
        let b = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]);
        let f = GramFactor::new(&b, RidgePolicy::FEATURES, "test").unwrap();
        assert_eq!(f.ridge, 0.0);
    }
}
