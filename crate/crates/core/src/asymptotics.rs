//! Plug-in asymptotics for CSS-PIR: moment matrices `R1..R5`, the Hessian
//! `W`, the influence function `g*` and the sandwich covariance of the angles.
//!
//! Everything is computed on the data as given (no centering), with monomial
//! bases that contain the constant. Moments can be taken under arbitrary
//! observation weights, which is how the influence function is checked
//! against a numeric Gateaux derivative.

use nalgebra::{DMatrix, DVector};

use crate::data::Dataset;
use crate::error::{CssError, Result};
use crate::kernels::HBasis;
use crate::linalg::{pinv_sym, symmetrize, GramFactor, RidgePolicy};
use crate::objective::GBasis;
use crate::rotations::AngleVector;

/// Relative singular-value cutoff of the Moore–Penrose inverse of `W`.
pub const PINV_CUTOFF: f64 = 1e-8;

/// `R1 = E[X Hᵀ]`, `R2 = E[X Gᵀ]`, `R3 = E[G Gᵀ]`, `R4 = E[G Hᵀ]`,
/// `R5 = E[H Hᵀ]` and `R = R1 − R2 R3⁻¹ R4`.
#[derive(Debug, Clone)]
pub struct GramBundle {
    pub r1: DMatrix<f64>,
    pub r2: DMatrix<f64>,
    pub r3: DMatrix<f64>,
    pub r4: DMatrix<f64>,
    pub r5: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub r3_inv: DMatrix<f64>,
    pub r5_inv: DMatrix<f64>,
}

impl GramBundle {
    /// `ℓ = tr(R R5⁻¹ Rᵀ)`.
    pub fn ell(&self) -> f64 {
        (&self.r * &self.r5_inv * self.r.transpose()).trace()
    }
}

#[derive(Debug, Clone)]
pub struct Partials {
    pub dr2: DMatrix<f64>,
    pub dr3: DMatrix<f64>,
    pub dr4: DMatrix<f64>,
    pub dr: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct HessianBundle {
    pub w: DMatrix<f64>,
    pub w_pinv: DMatrix<f64>,
    pub rank: usize,
    /// Projection onto the column space of `W`.
    pub p_w: DMatrix<f64>,
    /// `‖R‖_F` at the evaluation point; the formula for `W` assumes it is 0.
    pub residual_norm: f64,
}

#[derive(Debug, Clone)]
pub struct CovarianceEstimate {
    pub lambda: DMatrix<f64>,
    /// `√(diag Λ̂ / n)`.
    pub se: DVector<f64>,
    pub hessian: HessianBundle,
}

/// `Σ_i w_i a_i b_iᵀ` for row-stacked `a`, `b`.
fn wmoment(a: &DMatrix<f64>, b: &DMatrix<f64>, w: &DVector<f64>) -> DMatrix<f64> {
    let mut aw = a.clone();
    for (i, mut row) in aw.row_iter_mut().enumerate() {
        row *= w[i];
    }
    aw.transpose() * b
}

/// Everything at one `φ` under one weighting of the sample.
struct Eval {
    x: DMatrix<f64>,
    w: DVector<f64>,
    g: DMatrix<f64>,
    h: DMatrix<f64>,
    jac: Vec<DMatrix<f64>>,
    eta_dots: Vec<DMatrix<f64>>,
    bundle: GramBundle,
}

impl Eval {
    fn new(
        phi: &AngleVector,
        x: &DMatrix<f64>,
        y: &DVector<f64>,
        w: &DVector<f64>,
        hb: &HBasis,
        gb: &GBasis,
    ) -> Result<Self> {
        let n = x.nrows();
        if y.len() != n || w.len() != n {
            return Err(CssError::Dimension(
                "rows, responses and weights differ in length".into(),
            ));
        }
        if phi.p() != x.ncols() || gb.d() != phi.d() {
            return Err(CssError::Dimension(format!(
                "angles for p = {}, d = {} do not fit data with {} columns and a basis in {} variables",
                phi.p(),
                phi.d(),
                x.ncols(),
                gb.d()
            )));
        }
        let eta = phi.eta();
        let u = x * eta.as_matrix();
        let g = gb.features(&u);
        let h = hb.matrix(y);
        let jac = (0..n)
            .map(|i| gb.jacobian(u.row(i).transpose().as_slice()))
            .collect();
        let r1 = wmoment(x, &h, w);
        let r2 = wmoment(x, &g, w);
        let r3 = symmetrize(&wmoment(&g, &g, w));
        let r4 = wmoment(&g, &h, w);
        let r5 = symmetrize(&wmoment(&h, &h, w));
        let r3_inv = GramFactor::new(&r3, RidgePolicy::FEATURES, "feature Gram")?.inverse();
        let r5_inv = GramFactor::new(&r5, RidgePolicy::FEATURES, "response basis Gram")?.inverse();
        let r = &r1 - &r2 * &r3_inv * &r4;
        Ok(Self {
            x: x.clone(),
            w: w.clone(),
            g,
            h,
            jac,
            eta_dots: phi.eta_dots(),
            bundle: GramBundle {
                r1,
                r2,
                r3,
                r4,
                r5,
                r,
                r3_inv,
                r5_inv,
            },
        })
    }

    /// Row-stacked `∂G_i = Ġ_i η̇_tᵀ x_i`.
    fn dg(&self, t: usize) -> DMatrix<f64> {
        let v = &self.x * &self.eta_dots[t];
        let k = self.g.ncols();
        let mut out = DMatrix::zeros(self.x.nrows(), k);
        for (i, jac) in self.jac.iter().enumerate() {
            let row = jac * v.row(i).transpose();
            for c in 0..k {
                out[(i, c)] = row[c];
            }
        }
        out
    }

    fn partials(&self, t: usize) -> Partials {
        let b = &self.bundle;
        let dg = self.dg(t);
        let dr2 = wmoment(&self.x, &dg, &self.w);
        let gdg = wmoment(&dg, &self.g, &self.w);
        let dr3 = &gdg + gdg.transpose();
        let dr4 = wmoment(&dg, &self.h, &self.w);
        let a = &b.r3_inv * &b.r4;
        let bm = &b.r2 * &b.r3_inv;
        let dr = -(&dr2 * &a) + &bm * &dr3 * &a - &bm * &dr4;
        Partials { dr2, dr3, dr4, dr }
    }

    fn all_dr(&self) -> Vec<DMatrix<f64>> {
        (0..self.eta_dots.len())
            .map(|t| self.partials(t).dr)
            .collect()
    }

    fn gradient(&self) -> DVector<f64> {
        let b = &self.bundle;
        let rt = &b.r5_inv * b.r.transpose();
        DVector::from_iterator(
            self.eta_dots.len(),
            self.all_dr().iter().map(|dr| 2.0 * (dr * &rt).trace()),
        )
    }

    /// `R*` for observation `i`, product-rule form.
    fn r_star(&self, i: usize) -> DMatrix<f64> {
        let b = &self.bundle;
        let xi = self.x.row(i).transpose();
        let gi = self.g.row(i).transpose();
        let hi = self.h.row(i).transpose();
        let r1s = &xi * hi.transpose() - &b.r1;
        let r2s = &xi * gi.transpose() - &b.r2;
        let r3s = &gi * gi.transpose() - &b.r3;
        let r4s = &gi * hi.transpose() - &b.r4;
        let a = &b.r3_inv * &b.r4;
        let bm = &b.r2 * &b.r3_inv;
        r1s - r2s * &a + &bm * r3s * &a - bm * r4s
    }
}

fn uniform(n: usize) -> DVector<f64> {
    DVector::from_element(n, 1.0 / n as f64)
}

fn eval(phi: &AngleVector, ds: &Dataset, hb: &HBasis, gb: &GBasis) -> Result<Eval> {
    Eval::new(phi, ds.x(), ds.y(), &uniform(ds.n()), hb, gb)
}

pub fn gram_bundle(
    phi: &AngleVector,
    ds: &Dataset,
    hb: &HBasis,
    gb: &GBasis,
) -> Result<GramBundle> {
    Ok(eval(phi, ds, hb, gb)?.bundle)
}

/// Moments under observation weights `w` (summing to one).
pub fn gram_bundle_weighted(
    phi: &AngleVector,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    w: &DVector<f64>,
    hb: &HBasis,
    gb: &GBasis,
) -> Result<GramBundle> {
    Ok(Eval::new(phi, x, y, w, hb, gb)?.bundle)
}

/// `ℓ(φ, Fₙ) = tr(R R5⁻¹ Rᵀ)`.
pub fn ell(phi: &AngleVector, ds: &Dataset, hb: &HBasis, gb: &GBasis) -> Result<f64> {
    Ok(gram_bundle(phi, ds, hb, gb)?.ell())
}

/// Derivatives of `R2`, `R3`, `R4` and `R` in the angle `φ_t`.
pub fn partials(
    phi: &AngleVector,
    ds: &Dataset,
    hb: &HBasis,
    gb: &GBasis,
    t: usize,
) -> Result<Partials> {
    if t >= phi.m() {
        return Err(CssError::IndexOutOfRange(format!(
            "angle {t} of {}",
            phi.m()
        )));
    }
    Ok(eval(phi, ds, hb, gb)?.partials(t))
}

/// Exact gradient of `ℓ(·, Fₙ)`.
pub fn gradient(phi: &AngleVector, ds: &Dataset, hb: &HBasis, gb: &GBasis) -> Result<DVector<f64>> {
    Ok(eval(phi, ds, hb, gb)?.gradient())
}

/// Gradient of `ℓ(·, F)` for the weighted empirical distribution `F`.
pub fn gradient_weighted(
    phi: &AngleVector,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    w: &DVector<f64>,
    hb: &HBasis,
    gb: &GBasis,
) -> Result<DVector<f64>> {
    Ok(Eval::new(phi, x, y, w, hb, gb)?.gradient())
}

fn hessian_from(ev: &Eval) -> HessianBundle {
    let drs = ev.all_dr();
    let m = drs.len();
    let r5_inv = &ev.bundle.r5_inv;
    let mut w = DMatrix::zeros(m, m);
    for t in 0..m {
        let left = &drs[t] * r5_inv;
        for u in t..m {
            let v = 2.0 * (&left * drs[u].transpose()).trace();
            w[(t, u)] = v;
            w[(u, t)] = v;
        }
    }
    let (w_pinv, rank) = pinv_sym(&w, PINV_CUTOFF);
    let p_w = symmetrize(&(&w_pinv * &w));
    HessianBundle {
        w,
        w_pinv,
        rank,
        p_w,
        residual_norm: ev.bundle.r.norm(),
    }
}

/// `W_tu = 2 tr[(∂_t R) R5⁻¹ (∂_u R)ᵀ]`, its pseudo-inverse and rank.
pub fn hessian_w(
    phi: &AngleVector,
    ds: &Dataset,
    hb: &HBasis,
    gb: &GBasis,
) -> Result<HessianBundle> {
    Ok(hessian_from(&eval(phi, ds, hb, gb)?))
}

fn g_star_from(ev: &Eval, drs: &[DMatrix<f64>], i: usize) -> DVector<f64> {
    let rs = ev.r_star(i);
    let rt = &ev.bundle.r5_inv * rs.transpose();
    DVector::from_iterator(drs.len(), drs.iter().map(|dr| 2.0 * (dr * &rt).trace()))
}

/// Influence function `g*_t = 2 tr[(∂_t R) R5⁻¹ R*ᵀ]` at observation `i`.
pub fn influence_g_star(
    phi: &AngleVector,
    ds: &Dataset,
    hb: &HBasis,
    gb: &GBasis,
    i: usize,
) -> Result<DVector<f64>> {
    influence_g_star_weighted(phi, ds.x(), ds.y(), &uniform(ds.n()), hb, gb, i)
}

/// Influence function under the weighted empirical distribution.
pub fn influence_g_star_weighted(
    phi: &AngleVector,
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    w: &DVector<f64>,
    hb: &HBasis,
    gb: &GBasis,
    i: usize,
) -> Result<DVector<f64>> {
    if i >= x.nrows() {
        return Err(CssError::IndexOutOfRange(format!(
            "row {i} of {}",
            x.nrows()
        )));
    }
    let ev = Eval::new(phi, x, y, w, hb, gb)?;
    Ok(g_star_from(&ev, &ev.all_dr(), i))
}

/// Row `i` holds `g*` of observation `i`.
pub fn influence_matrix(
    phi: &AngleVector,
    ds: &Dataset,
    hb: &HBasis,
    gb: &GBasis,
) -> Result<DMatrix<f64>> {
    let ev = eval(phi, ds, hb, gb)?;
    let drs = ev.all_dr();
    let mut out = DMatrix::zeros(ds.n(), phi.m());
    for i in 0..ds.n() {
        out.set_row(i, &g_star_from(&ev, &drs, i).transpose());
    }
    Ok(out)
}

/// `Λ̂ = W† [n⁻¹ Σ g*_i g*_iᵀ] W†` and per-angle standard errors.
pub fn covariance_lambda(
    phi: &AngleVector,
    ds: &Dataset,
    hb: &HBasis,
    gb: &GBasis,
) -> Result<CovarianceEstimate> {
    let ev = eval(phi, ds, hb, gb)?;
    let hessian = hessian_from(&ev);
    let drs = ev.all_dr();
    let mut gstar = DMatrix::zeros(ds.n(), phi.m());
    for i in 0..ds.n() {
        gstar.set_row(i, &g_star_from(&ev, &drs, i).transpose());
    }
    Ok(sandwich(hessian, &gstar))
}

/// Sandwich covariance from a Hessian and row-stacked influence vectors.
pub fn sandwich(hessian: HessianBundle, gstar: &DMatrix<f64>) -> CovarianceEstimate {
    let n = gstar.nrows() as f64;
    let m = gstar.ncols();
    let meat = gstar.transpose() * gstar / n;
    let lambda = symmetrize(&(&hessian.w_pinv * meat * &hessian.w_pinv));
    let se = DVector::from_iterator(m, (0..m).map(|t| (lambda[(t, t)].max(0.0) / n).sqrt()));
    CovarianceEstimate {
        lambda,
        se,
        hessian,
    }
}
