//! The `g(Y, Ỹ)` kernels that unify the inverse-regression estimators.
//!
//! Every estimator in this crate works with the empirical kernel matrix
//! `G[i, j] = g(Y_i, Y_j)` through the moment
//! `n⁻¹ Σ_j v_j v_jᵀ` with `v_j = n⁻¹ Σ_i Z_i G[i, j]`. That moment only
//! depends on `G Gᵀ`, so each kernel is prepared once into a thin factor
//! `L` with `G Gᵀ = L Lᵀ`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{CssError, Result};
use crate::linalg::{sym_eigen_desc, GramFactor, RidgePolicy};

/// Monomial basis `H(y) = (1, y, …, y^degree)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HBasis {
    pub degree: usize,
}

impl HBasis {
    pub fn new(degree: usize) -> Self {
        Self { degree }
    }

    /// Number of basis functions, `s = degree + 1`.
    pub fn size(&self) -> usize {
        self.degree + 1
    }

    pub fn eval(&self, y: f64) -> DVector<f64> {
        let mut out = DVector::zeros(self.size());
        let mut v = 1.0;
        for k in 0..self.size() {
            out[k] = v;
            v *= y;
        }
        out
    }

    /// `n × s` matrix with row `i` equal to `H(y_i)ᵀ`.
    pub fn matrix(&self, y: &DVector<f64>) -> DMatrix<f64> {
        let s = self.size();
        let mut out = DMatrix::zeros(y.len(), s);
        for (i, &yi) in y.iter().enumerate() {
            let mut v = 1.0;
            for k in 0..s {
                out[(i, k)] = v;
                v *= yi;
            }
        }
        out
    }
}

impl Default for HBasis {
    fn default() -> Self {
        Self { degree: 2 }
    }
}

/// The kernel defining an inverse-regression estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum GKernel {
    /// `g(y, ỹ) = y`.
    Ols,
    /// Equal-count slicing into `slices` groups.
    Sir { slices: usize },
    /// Gaussian smoothing kernel with bandwidth `bandwidth`.
    Kir { bandwidth: f64 },
    /// Basis kernel `ρ(y, ỹ) = H(y)ᵀ E[H Hᵀ]⁻¹ H(ỹ)`.
    Pir { basis: HBasis },
}

impl GKernel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            GKernel::Sir { slices } if slices < 2 => Err(CssError::InvalidParameter(format!(
                "need at least 2 slices, got {slices}"
            ))),
            GKernel::Kir { bandwidth } if !(bandwidth > 0.0) || !bandwidth.is_finite() => Err(
                CssError::InvalidParameter(format!("bandwidth must be positive, got {bandwidth}")),
            ),
            _ => Ok(()),
        }
    }
}

/// Partition of the sample into slices of the ordered response.
#[derive(Debug, Clone, PartialEq)]
pub struct SlicePartition {
    pub k: usize,
    /// Largest response value in each of the first `k − 1` slices.
    pub boundaries: Vec<f64>,
    /// Slice label (0-based) of every observation.
    pub labels: Vec<usize>,
    pub sizes: Vec<usize>,
}

/// Equal-count slices by the order statistics of `y`; ties keep sample order.
pub fn make_slices(y: &DVector<f64>, k: usize) -> Result<SlicePartition> {
    let n = y.len();
    if k < 2 {
        return Err(CssError::InvalidParameter(format!(
            "need at least 2 slices, got {k}"
        )));
    }
    if k > n {
        return Err(CssError::InvalidParameter(format!(
            "{k} slices for {n} observations"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| y[a].total_cmp(&y[b]));
    let (base, extra) = (n / k, n % k);
    let sizes: Vec<usize> = (0..k).map(|l| base + usize::from(l < extra)).collect();
    let mut labels = vec![0; n];
    let mut boundaries = Vec::with_capacity(k - 1);
    let mut start = 0;
    for (l, &size) in sizes.iter().enumerate() {
        for &i in &order[start..start + size] {
            labels[i] = l;
        }
        start += size;
        if l + 1 < k {
            boundaries.push(y[order[start - 1]]);
        }
    }
    Ok(SlicePartition {
        k,
        boundaries,
        labels,
        sizes,
    })
}

fn std_normal_pdf(t: f64) -> f64 {
    (-0.5 * t * t).exp() / (2.0 * PI).sqrt()
}

/// Smoothing kernel `κ(y_i, y_j)`: `ψ(|y_i − y_j| / h)` divided by the sample
/// mean of `ψ(|Y − y_j| / h)`, with `ψ` the standard normal density.
pub fn kappa(yi: f64, yj: f64, h: f64, y_sample: &DVector<f64>) -> Result<f64> {
    let denom = y_sample
        .iter()
        .map(|&y| std_normal_pdf((y - yj).abs() / h))
        .sum::<f64>()
        / y_sample.len() as f64;
    if !(denom > f64::MIN_POSITIVE) {
        return Err(CssError::BandwidthUnderflow { bandwidth: h });
    }
    Ok(std_normal_pdf((yi - yj).abs() / h) / denom)
}

/// `n × n` matrix of `κ(y_i, y_j)`.
pub fn kappa_matrix(y: &DVector<f64>, h: f64) -> Result<DMatrix<f64>> {
    let n = y.len();
    let mut g = DMatrix::from_fn(n, n, |i, j| std_normal_pdf((y[i] - y[j]).abs() / h));
    for j in 0..n {
        let denom = g.column(j).sum() / n as f64;
        if !(denom > f64::MIN_POSITIVE) {
            return Err(CssError::BandwidthUnderflow { bandwidth: h });
        }
        g.column_mut(j).scale_mut(1.0 / denom);
    }
    Ok(g)
}

/// Inverse of the sample Gram `Eₙ[H(Y) H(Y)ᵀ]`, ridged when ill-conditioned.
pub fn h_gram_inverse(hb: &HBasis, y_sample: &DVector<f64>) -> Result<DMatrix<f64>> {
    let h = hb.matrix(y_sample);
    let gram = h.transpose() * &h / y_sample.len() as f64;
    Ok(GramFactor::new(&gram, RidgePolicy::RHO, "response basis Gram")?.inverse())
}

/// Basis kernel `ρ(y_i, y_j)`.
pub fn rho_kernel(yi: f64, yj: f64, hb: &HBasis, y_sample: &DVector<f64>) -> Result<f64> {
    let inv = h_gram_inverse(hb, y_sample)?;
    Ok((hb.eval(yi).transpose() * inv * hb.eval(yj))[(0, 0)])
}

/// `n × n` matrix of `ρ(y_i, y_j)`.
pub fn rho_matrix(hb: &HBasis, y: &DVector<f64>) -> Result<DMatrix<f64>> {
    let h = hb.matrix(y);
    let inv = h_gram_inverse(hb, y)?;
    Ok(&h * inv * h.transpose())
}

/// A kernel evaluated on a particular response sample.
#[derive(Debug, Clone)]
pub struct PreparedKernel {
    kernel: GKernel,
    n: usize,
    /// `n × r` factor with `G Gᵀ = L Lᵀ`.
    factor: DMatrix<f64>,
    slices: Option<SlicePartition>,
}

/// Relative eigenvalue cutoff when factoring `G Gᵀ` for the smoothing kernel.
const KERNEL_RANK_CUT: f64 = 1e-14;

impl PreparedKernel {
    pub fn new(kernel: &GKernel, y: &DVector<f64>) -> Result<Self> {
        kernel.validate()?;
        let n = y.len();
        let nf = n as f64;
        let (factor, slices) = match *kernel {
            GKernel::Ols => (
                DMatrix::from_column_slice(y.len(), 1, (y * nf.sqrt()).as_slice()),
                None,
            ),
            GKernel::Sir { slices } => {
                let part = make_slices(y, slices)?;
                let mut l = DMatrix::zeros(n, part.k);
                for (i, &lab) in part.labels.iter().enumerate() {
                    l[(i, lab)] = nf / (part.sizes[lab] as f64).sqrt();
                }
                (l, Some(part))
            }
            GKernel::Kir { bandwidth } => {
                let g = kappa_matrix(y, bandwidth)?;
                let ggt = &g * g.transpose();
                let (vals, vecs) = sym_eigen_desc(&ggt);
                let cut = vals[0] * KERNEL_RANK_CUT;
                let r = vals.iter().take_while(|&&v| v > cut).count().max(1);
                let mut l = vecs.columns(0, r).into_owned();
                for c in 0..r {
                    l.column_mut(c).scale_mut(vals[c].max(0.0).sqrt());
                }
                (l, None)
            }
            GKernel::Pir { basis } => {
                let h = basis.matrix(y);
                let gram = h.transpose() * &h / nf;
                let fac = GramFactor::new(&gram, RidgePolicy::RHO, "response basis Gram")?;
                // ρ = H Γ⁻¹ Hᵀ and ρ ρᵀ = n H Γ⁻¹ Hᵀ (up to the ridge), so
                // L = √n H L_Γ⁻ᵀ with Γ = L_Γ L_Γᵀ
                let lg = fac.l();
                let inv_lt = lg.transpose().try_inverse().ok_or(CssError::Singular {
                    what: "response basis Gram",
                    condition: f64::INFINITY,
                })?;
                let mut l = &h * inv_lt * nf.sqrt();
                if fac.ridge > 0.0 {
                    // with a ridge the identity ρ ρᵀ = n ρ no longer holds;
                    // factor the exact product instead
                    let rho = &h * fac.inverse() * h.transpose();
                    let ggt = &rho * rho.transpose();
                    let (vals, vecs) = sym_eigen_desc(&ggt);
                    let cut = vals[0] * KERNEL_RANK_CUT;
                    let r = vals.iter().take_while(|&&v| v > cut).count().max(1);
                    l = vecs.columns(0, r).into_owned();
                    for c in 0..r {
                        l.column_mut(c).scale_mut(vals[c].max(0.0).sqrt());
                    }
                }
                (l, None)
            }
        };
        Ok(Self {
            kernel: *kernel,
            n,
            factor,
            slices,
        })
    }

    pub fn kernel(&self) -> &GKernel {
        &self.kernel
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    pub fn slices(&self) -> Option<&SlicePartition> {
        self.slices.as_ref()
    }

    /// `n⁻¹ Σ_j ‖n⁻¹ Σ_i Z_i g(Y_i, Y_j)‖²` for an `n × q` matrix `Z`.
    pub fn moment_norm(&self, z: &DMatrix<f64>) -> f64 {
        let n = self.n as f64;
        (z.transpose() * &self.factor).norm_squared() / (n * n * n)
    }

    /// `n⁻¹ Σ_j v_j v_jᵀ` with `v_j = n⁻¹ Σ_i Z_i g(Y_i, Y_j)`.
    pub fn moment_matrix(&self, z: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.n as f64;
        let zl = z.transpose() * &self.factor;
        &zl * zl.transpose() / (n * n * n)
    }
}

/// Explicit `n × n` kernel matrix `G[i, j] = g(Y_i, Y_j)`.
///
/// For slicing, `g(y, ỹ) = I(δ(y) = δ(ỹ)) / P̂[δ(Y) = δ(ỹ)]` with the empirical
/// slice proportion in the denominator.
pub fn g_matrix(kernel: &GKernel, y: &DVector<f64>) -> Result<DMatrix<f64>> {
    kernel.validate()?;
    let n = y.len();
    match *kernel {
        GKernel::Ols => Ok(DMatrix::from_fn(n, n, |i, _| y[i])),
        GKernel::Sir { slices } => {
            let part = make_slices(y, slices)?;
            Ok(DMatrix::from_fn(n, n, |i, j| {
                let (a, b) = (part.labels[i], part.labels[j]);
                if a == b {
                    n as f64 / part.sizes[b] as f64
                } else {
                    0.0
                }
            }))
        }
        GKernel::Kir { bandwidth } => kappa_matrix(y, bandwidth),
        GKernel::Pir { basis } => rho_matrix(&basis, y),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn normals(n: usize, seed: u64) -> DVector<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DVector::from_fn(n, |_, _| -> f64 { StandardNormal.sample(&mut rng) })
    }

    #[test]
    fn slices_equal_count() {
        let y = normals(100, 1);
        let part = make_slices(&y, 10).unwrap();
        assert_eq!(part.sizes, vec![10; 10]);
        for l in 0..10 {
            assert_eq!(part.labels.iter().filter(|&&x| x == l).count(), 10);
        }
        // slices follow the order statistics
        for i in 0..100 {
            for j in 0..100 {
                if part.labels[i] < part.labels[j] {
                    assert!(y[i] <= y[j]);
                }
            }
        }
        let five = make_slices(&DVector::from_vec(vec![5.0, 1.0, 4.0, 2.0, 3.0]), 2).unwrap();
        assert_eq!(five.sizes, vec![3, 2]);
        assert_eq!(five.labels, vec![1, 0, 1, 0, 0]);
        assert_eq!(five.boundaries, vec![3.0]);
    }

    #[test]
    fn slices_with_ties_follow_sample_order() {
        let y = DVector::from_element(7, 2.0);
        let part = make_slices(&y, 3).unwrap();
        assert_eq!(part.labels, vec![0, 0, 0, 1, 1, 2, 2]);
    }

    #[test]
    fn slice_errors() {
        let y = normals(5, 2);
        assert!(make_slices(&y, 6).is_err());
        assert!(make_slices(&y, 1).is_err());
    }

    #[test]
    fn kappa_equal_points() {
        let y = DVector::from_element(6, 0.7);
        assert!((kappa(0.7, 0.7, 0.4, &y).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn kappa_columns_average_to_one() {
        let y = normals(40, 3);
        let g = kappa_matrix(&y, 0.4).unwrap();
        for j in 0..40 {
            assert!((g.column(j).mean() - 1.0).abs() < 1e-14);
            assert!((kappa(y[5], y[j], 0.4, &y).unwrap() - g[(5, j)]).abs() < 1e-13);
        }
    }

    #[test]
    fn kappa_hand_evaluation() {
        let y = DVector::from_vec(vec![0.0, 0.3, -0.5, 1.2]);
        let h = 0.4;
        let psi = |t: f64| (-(t * t) / 2.0).exp() / (2.0 * PI).sqrt();
        for &yi in y.iter() {
            let yi: f64 = yi;
            for &yj in y.iter() {
                let denom = (psi((0.0_f64 - yj).abs() / h)
                    + psi((0.3_f64 - yj).abs() / h)
                    + psi((-0.5_f64 - yj).abs() / h)
                    + psi((1.2_f64 - yj).abs() / h))
                    / 4.0;
                let expect = psi((yi - yj).abs() / h) / denom;
                assert!((kappa(yi, yj, h, &y).unwrap() - expect).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn kappa_underflow_is_reported() {
        let y = DVector::from_vec(vec![0.0, 1e6]);
        assert!(matches!(
            kappa(0.0, 5e5, 1e-3, &y),
            Err(CssError::BandwidthUnderflow { .. })
        ));
    }

    #[test]
    fn rho_constant_basis_is_one() {
        let y = normals(10, 4);
        let hb = HBasis::new(0);
        assert!((rho_kernel(y[0], y[3], &hb, &y).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn rho_linear_basis_formula() {
        let mut y = normals(30, 5);
        let mean = y.mean();
        y.add_scalar_mut(-mean);
        let m2 = y.norm_squared() / 30.0;
        let hb = HBasis::new(1);
        for &(i, j) in &[(0, 1), (4, 4), (7, 20)] {
            let expect = 1.0 + y[i] * y[j] / m2;
            assert!((rho_kernel(y[i], y[j], &hb, &y).unwrap() - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn rho_matrix_is_psd_low_rank_and_symmetric() {
        let y = normals(25, 6);
        let hb = HBasis::new(2);
        let rho = rho_matrix(&hb, &y).unwrap();
        assert!(max_abs(&(&rho - rho.transpose())) < 1e-12);
        let (vals, _) = sym_eigen_desc(&rho);
        assert!(vals.iter().all(|&v| v > -1e-10));
        assert_eq!(vals.iter().filter(|&&v| v > 1e-8).count(), 3);
        // reconstruction through the H-space
        let h = hb.matrix(&y);
        let gram = h.transpose() * &h / 25.0;
        let recon = &h * gram.try_inverse().unwrap() * h.transpose();
        assert!(max_abs(&(recon - rho)) < 1e-10);
    }

    #[test]
    fn slice_kernel_reproduces_slice_means() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 23;
        let x = DMatrix::from_fn(n, 3, |_, _| -> f64 { StandardNormal.sample(&mut rng) });
        let y = normals(n, 8);
        let g = g_matrix(&GKernel::Sir { slices: 4 }, &y).unwrap();
        let part = make_slices(&y, 4).unwrap();
        for j in 0..n {
            let v = x.transpose() * g.column(j) / n as f64;
            let lab = part.labels[j];
            let mut mean = DVector::zeros(3);
            for i in 0..n {
                if part.labels[i] == lab {
                    mean += x.row(i).transpose();
                }
            }
            mean /= part.sizes[lab] as f64;
            assert!((v - mean).amax() < 1e-12);
        }
    }

    #[test]
    fn factor_matches_explicit_kernel_matrix() {
        let y = normals(30, 9);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let z = DMatrix::from_fn(30, 3, |_, _| -> f64 { StandardNormal.sample(&mut rng) });
        for kernel in [
            GKernel::Ols,
            GKernel::Sir { slices: 5 },
            GKernel::Kir { bandwidth: 0.4 },
            GKernel::Pir {
                basis: HBasis::new(2),
            },
        ] {
            let prepared = PreparedKernel::new(&kernel, &y).unwrap();
            let g = g_matrix(&kernel, &y).unwrap();
            let n = 30.0;
            let mut direct = 0.0;
            let mut direct_m = DMatrix::zeros(3, 3);
            for j in 0..30 {
                let v = z.transpose() * g.column(j) / n;
                direct += v.norm_squared() / n;
                direct_m += &v * v.transpose() / n;
            }
            let fast = prepared.moment_norm(&z);
            assert!(
                (fast - direct).abs() < 1e-10 * direct.max(1.0),
                "{kernel:?}"
            );
            assert!(
                max_abs(&(prepared.moment_matrix(&z) - direct_m)) < 1e-10,
                "{kernel:?}"
            );
        }
    }

    #[test]
    fn kernel_validation() {
        assert!(GKernel::Sir { slices: 1 }.validate().is_err());
        assert!(GKernel::Kir { bandwidth: 0.0 }.validate().is_err());
        assert!(GKernel::Kir { bandwidth: 0.4 }.validate().is_ok());
    }
}
