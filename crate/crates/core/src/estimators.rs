//! Classical inverse-regression estimators through the unified candidate
//! matrix `Σ⁻¹ E{E[X g(Y,Ỹ)|Ỹ] E[Xᵀ g(Y,Ỹ)|Ỹ]} Σ⁻¹`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{covariance, Dataset};
use crate::error::{CssError, Result};
use crate::kernels::{g_matrix, make_slices, GKernel, PreparedKernel};
use crate::linalg::{spd_inv_sqrt, spd_inverse, sym_eigen_desc, symmetrize};
use crate::rotations::{AngleVector, BasisMatrix};

#[derive(Debug, Clone)]
pub struct CandidateMatrix {
    pub a: DMatrix<f64>,
    /// Predictor covariance used in the sandwich.
    pub sigma: DMatrix<f64>,
    pub kernel: GKernel,
}

/// How the leading directions are read off the candidate matrix.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Eigenform {
    /// Leading eigenvectors of `Σ⁻¹ M Σ⁻¹` itself.
    Sandwich,
    /// Leading eigenvectors `u` of `Σ^{-1/2} M Σ^{-1/2}`, mapped to `Σ^{-1/2} u`.
    /// These solve `M β = λ Σ β` with `βᵀ Σ β = I`.
    #[default]
    Whitened,
}

#[derive(Debug, Clone)]
pub struct ClassicalFit {
    pub beta: BasisMatrix,
    /// All eigenvalues of the candidate matrix, descending.
    pub eigenvalues: DVector<f64>,
    /// Set when `λ_d` and `λ_{d+1}` coincide, so the span is not determined.
    pub tied: bool,
}

fn centered(ds: &Dataset) -> Dataset {
    if ds.is_centered() {
        ds.clone()
    } else {
        ds.center()
    }
}

fn sandwich(ds: &Dataset, inner: DMatrix<f64>, kernel: GKernel) -> Result<CandidateMatrix> {
    let sigma = covariance(ds).sigma;
    let sigma_inv = spd_inverse(&sigma, "predictor covariance")?;
    let a = symmetrize(&(&sigma_inv * inner * &sigma_inv));
    Ok(CandidateMatrix { a, sigma, kernel })
}

/// Sample candidate matrix for `kernel`. Uncentered data are centered first.
pub fn candidate_matrix(ds: &Dataset, kernel: &GKernel) -> Result<CandidateMatrix> {
    let ds = centered(ds);
    let prepared = PreparedKernel::new(kernel, ds.y())?;
    candidate_matrix_prepared(&ds, &prepared)
}

/// Candidate matrix with an already prepared kernel on centered data.
pub fn candidate_matrix_prepared(
    ds: &Dataset,
    prepared: &PreparedKernel,
) -> Result<CandidateMatrix> {
    let inner = prepared.moment_matrix(ds.x());
    sandwich(ds, inner, *prepared.kernel())
}

/// Candidate matrix from the explicit `n × n` kernel matrix:
/// `Σ̂⁻¹ [n⁻¹ Σ_j v_j v_jᵀ] Σ̂⁻¹` with `v_j = n⁻¹ Σ_i X_i g(Y_i, Y_j)`.
pub fn candidate_matrix_explicit(ds: &Dataset, kernel: &GKernel) -> Result<CandidateMatrix> {
    let ds = centered(ds);
    let n = ds.n() as f64;
    let g = g_matrix(kernel, ds.y())?;
    let v = ds.x().transpose() * g / n;
    let inner = &v * v.transpose() / n;
    sandwich(&ds, inner, *kernel)
}

/// Sliced inverse regression from slice proportions and slice means:
/// `Σ̂⁻¹ [Σ_ℓ p̂_ℓ m̂_ℓ m̂_ℓᵀ] Σ̂⁻¹`.
pub fn sir_slice_matrix(ds: &Dataset, slices: usize) -> Result<CandidateMatrix> {
    let ds = centered(ds);
    let part = make_slices(ds.y(), slices)?;
    let p = ds.p();
    let n = ds.n() as f64;
    let mut inner = DMatrix::zeros(p, p);
    for l in 0..part.k {
        let mut mean = DVector::zeros(p);
        for (i, &lab) in part.labels.iter().enumerate() {
            if lab == l {
                mean += ds.x().row(i).transpose();
            }
        }
        mean /= part.sizes[l] as f64;
        inner += &mean * mean.transpose() * (part.sizes[l] as f64 / n);
    }
    sandwich(&ds, inner, GKernel::Sir { slices })
}

/// Top-`d` eigenvectors of the candidate matrix.
pub fn leading_span(cm: &CandidateMatrix, d: usize) -> Result<ClassicalFit> {
    leading_span_with(cm, d, Eigenform::default())
}

pub fn leading_span_with(cm: &CandidateMatrix, d: usize, form: Eigenform) -> Result<ClassicalFit> {
    let p = cm.a.nrows();
    if d == 0 || d > p {
        return Err(CssError::InvalidParameter(format!(
            "dimension d = {d} must lie in 1..={p}"
        )));
    }
    let (vals, beta) = match form {
        Eigenform::Sandwich => {
            let (vals, vecs) = sym_eigen_desc(&cm.a);
            (vals, vecs.columns(0, d).into_owned())
        }
        Eigenform::Whitened => {
            let inv_half = spd_inv_sqrt(&cm.sigma, "predictor covariance")?;
            let half = &cm.sigma * &inv_half;
            let (vals, vecs) = sym_eigen_desc(&symmetrize(&(&half * &cm.a * &half)));
            (vals, inv_half * vecs.columns(0, d))
        }
    };
    // orthonormalize without changing the span or column signs
    let qr = beta.clone().qr();
    let q = qr.q();
    let r = qr.r();
    let mut beta = beta;
    for c in 0..d {
        let sign = if r[(c, c)] < 0.0 { -1.0 } else { 1.0 };
        beta.set_column(c, &(q.column(c) * sign));
    }
    let scale = vals.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let tied = d < p && (vals[d - 1] - vals[d]).abs() <= 1e-12 * scale.max(f64::MIN_POSITIVE);
    Ok(ClassicalFit {
        beta: BasisMatrix(beta),
        eigenvalues: vals,
        tied,
    })
}

/// Centered-data classical fit in one call.
pub fn classical_fit(ds: &Dataset, kernel: &GKernel, d: usize) -> Result<ClassicalFit> {
    leading_span(&candidate_matrix(ds, kernel)?, d)
}

/// Angles reproducing the span of a classical fit, used to start CSS.
pub fn classical_to_angles(fit: &ClassicalFit) -> AngleVector {
    fit.beta.to_angles()
}
