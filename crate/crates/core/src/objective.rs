//! Central-solution-space objectives `L_n(η)` and the CSS fit.
//!
//! For a candidate frame `η` the conditional mean `E(X | ηᵀX)` is modelled by
//! least squares on polynomial features `G(ηᵀX)`; the objective is the kernel
//! moment of the residual `X̂ − f̂(ηᵀX̂)`:
//!
//! ```text
//! L_n(η) = n⁻¹ Σ_j ‖ n⁻¹ Σ_i [X̂_i − f̂(ηᵀX̂_i)] g(Ŷ_i, Ŷ_j) ‖²
//! ```

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{CssError, Result};
use crate::estimators::{
    candidate_matrix_prepared, classical_to_angles, leading_span_with, ClassicalFit, Eigenform,
};
use crate::kernels::{GKernel, PreparedKernel};
use crate::linalg::{GramFactor, RidgePolicy};
use crate::optimizer::{multistart, MinimizeResult, OptimOptions};
use crate::rotations::{AngleVector, BasisMatrix};

/// Which monomials of `u = ηᵀx` enter `G(u)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GBasisKind {
    /// Every monomial of total degree `≤ degree`.
    Full,
    /// All monomials of total degree `≤ 2`, plus pure powers `u_i^r`,
    /// `3 ≤ r ≤ degree`.
    PurePower,
}

/// Polynomial features `G(u)` in the `d` reduced coordinates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GBasis {
    d: usize,
    degree: usize,
    kind: GBasisKind,
    /// Exponent vectors, constant first, ordered by total degree.
    terms: Vec<Vec<u32>>,
}

impl GBasis {
    pub fn new(d: usize, degree: usize, kind: GBasisKind) -> Self {
        let mut terms = Vec::new();
        let full_to = match kind {
            GBasisKind::Full => degree,
            GBasisKind::PurePower => degree.min(2),
        };
        for total in 0..=full_to {
            push_compositions(d, total as u32, &mut vec![0; d], 0, &mut terms);
        }
        if kind == GBasisKind::PurePower {
            for r in 3..=degree {
                for i in 0..d {
                    let mut e = vec![0; d];
                    e[i] = r as u32;
                    terms.push(e);
                }
            }
        }
        Self {
            d,
            degree,
            kind,
            terms,
        }
    }

    pub fn full(d: usize, degree: usize) -> Self {
        Self::new(d, degree, GBasisKind::Full)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn kind(&self) -> GBasisKind {
        self.kind
    }

    pub fn terms(&self) -> &[Vec<u32>] {
        &self.terms
    }

    /// Number of features `k`.
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// `n × k` feature matrix for reduced data `u` (`n × d`).
    pub fn features(&self, u: &DMatrix<f64>) -> DMatrix<f64> {
        let n = u.nrows();
        let maxdeg = self.degree.max(1);
        let mut out = DMatrix::zeros(n, self.len());
        let mut powers = vec![0.0; self.d * (maxdeg + 1)];
        for i in 0..n {
            for c in 0..self.d {
                let mut v = 1.0;
                for e in 0..=maxdeg {
                    powers[c * (maxdeg + 1) + e] = v;
                    v *= u[(i, c)];
                }
            }
            for (t, term) in self.terms.iter().enumerate() {
                let mut v = 1.0;
                for (c, &e) in term.iter().enumerate() {
                    v *= powers[c * (maxdeg + 1) + e as usize];
                }
                out[(i, t)] = v;
            }
        }
        out
    }

    /// Jacobian `∂G/∂u` (`k × d`) at a single point.
    pub fn jacobian(&self, u: &[f64]) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.len(), self.d);
        for (t, term) in self.terms.iter().enumerate() {
            for c in 0..self.d {
                if term[c] == 0 {
                    continue;
                }
                let mut v = term[c] as f64;
                for (cc, &e) in term.iter().enumerate() {
                    let pow = if cc == c { e - 1 } else { e };
                    v *= u[cc].powi(pow as i32);
                }
                out[(t, c)] = v;
            }
        }
        out
    }
}

fn push_compositions(d: usize, left: u32, cur: &mut Vec<u32>, pos: usize, out: &mut Vec<Vec<u32>>) {
    if pos + 1 == d {
        cur[pos] = left;
        out.push(cur.clone());
        cur[pos] = 0;
        return;
    }
    for e in (0..=left).rev() {
        cur[pos] = e;
        push_compositions(d, left - e, cur, pos + 1, out);
    }
    cur[pos] = 0;
}

/// Least-squares projection of the columns of `x` onto `features`:
/// `Eₙ[X Gᵀ] Eₙ[G Gᵀ]⁻¹ G`, row by row.
pub fn project_onto_features(x: &DMatrix<f64>, features: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = x.nrows() as f64;
    let gram = features.transpose() * features / n;
    let cross = features.transpose() * x / n;
    let fac = GramFactor::new(&gram, RidgePolicy::FEATURES, "feature Gram")?;
    Ok(features * fac.solve(&cross))
}

/// Fitted conditional mean `f̂(ηᵀX̂)` (`n × p`).
pub fn fhat(eta: &DMatrix<f64>, ds: &Dataset, gb: &GBasis) -> Result<DMatrix<f64>> {
    let u = ds.x() * eta;
    project_onto_features(ds.x(), &gb.features(&u))
}

/// The sample objective `L_n` for one kernel and feature basis.
#[derive(Debug, Clone)]
pub struct CssObjective {
    x: DMatrix<f64>,
    kernel: PreparedKernel,
    gbasis: GBasis,
}

impl CssObjective {
    /// Build from a dataset; it is centered first when necessary.
    pub fn new(ds: &Dataset, kernel: &GKernel, gbasis: GBasis) -> Result<Self> {
        let ds = if ds.is_centered() {
            ds.clone()
        } else {
            ds.center()
        };
        let prepared = PreparedKernel::new(kernel, ds.y())?;
        Ok(Self::from_prepared(&ds, prepared, gbasis))
    }

    pub(crate) fn from_prepared(ds: &Dataset, kernel: PreparedKernel, gbasis: GBasis) -> Self {
        Self {
            x: ds.x().clone(),
            kernel,
            gbasis,
        }
    }

    pub fn gbasis(&self) -> &GBasis {
        &self.gbasis
    }

    pub fn kernel(&self) -> &PreparedKernel {
        &self.kernel
    }

    /// Residual `X̂ − f̂(ηᵀX̂)`.
    pub fn residual(&self, eta: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let u = &self.x * eta;
        let fitted = project_onto_features(&self.x, &self.gbasis.features(&u))?;
        Ok(&self.x - fitted)
    }

    pub fn value_eta(&self, eta: &DMatrix<f64>) -> Result<f64> {
        Ok(self.kernel.moment_norm(&self.residual(eta)?))
    }

    pub fn value(&self, phi: &AngleVector) -> Result<f64> {
        self.value_eta(phi.eta().as_matrix())
    }
}

/// Settings for a CSS fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CssOptions {
    pub g_degree: usize,
    pub g_kind: GBasisKind,
    /// Eigen-step of the classical starting value.
    pub eigenform: Eigenform,
    pub optim: OptimOptions,
}

impl Default for CssOptions {
    fn default() -> Self {
        Self {
            g_degree: 2,
            g_kind: GBasisKind::Full,
            eigenform: Eigenform::default(),
            optim: OptimOptions::default(),
        }
    }
}

/// Result of minimizing `L_n` from the classical starting value.
#[derive(Debug, Clone)]
pub struct CssFit {
    pub beta: BasisMatrix,
    pub phi: AngleVector,
    pub objective: f64,
    pub initial_objective: f64,
    pub trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub evaluations: usize,
    pub classical: ClassicalFit,
    pub warnings: Vec<String>,
}

/// Jittered copies of `phi0`, drawn from a generator seeded with `seed`.
pub fn jittered_inits(phi0: &AngleVector, count: usize, scale: f64, seed: u64) -> Vec<AngleVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, scale).expect("finite jitter scale");
    (0..count)
        .map(|_| {
            let phi = phi0
                .phi()
                .iter()
                .map(|a| a + normal.sample(&mut rng))
                .collect();
            phi0.with_phi(phi)
        })
        .collect()
}

/// Minimize `L_n(η(φ))` starting from the classical estimator with the same
/// kernel. The dataset is centered first when necessary.
pub fn fit_css(ds: &Dataset, kernel: &GKernel, d: usize, opts: &CssOptions) -> Result<CssFit> {
    let ds = if ds.is_centered() {
        ds.clone()
    } else {
        ds.center()
    };
    let p = ds.p();
    if d == 0 || d > p {
        return Err(CssError::InvalidParameter(format!(
            "dimension d = {d} must lie in 1..={p}"
        )));
    }
    let prepared = PreparedKernel::new(kernel, ds.y())?;
    let classical = leading_span_with(
        &candidate_matrix_prepared(&ds, &prepared)?,
        d,
        opts.eigenform,
    )?;
    let gbasis = GBasis::new(d, opts.g_degree, opts.g_kind);
    let objective = CssObjective::from_prepared(&ds, prepared, gbasis);

    let mut warnings = Vec::new();
    if classical.tied {
        warnings.push("classical eigenvalues tied at the cut-off; start is arbitrary".into());
    }
    let phi0 = classical_to_angles(&classical);
    let start = objective.value(&phi0)?;
    if !start.is_finite() {
        return Err(CssError::NonFiniteObjective);
    }
    if d == p {
        let phi = AngleVector::zeros(p, d)?;
        return Ok(CssFit {
            beta: phi.eta(),
            phi,
            objective: start,
            initial_objective: start,
            trace: vec![start],
            converged: true,
            iterations: 0,
            evaluations: 1,
            classical,
            warnings,
        });
    }

    let mut inits = vec![phi0.clone()];
    inits.extend(jittered_inits(
        &phi0,
        opts.optim.restarts,
        opts.optim.jitter,
        opts.optim.seed,
    ));
    let f = |phi: &AngleVector| objective.value(phi).unwrap_or(f64::INFINITY);
    let MinimizeResult {
        phi,
        value,
        trace,
        iterations,
        evaluations,
        converged,
        ..
    } = multistart(f, &inits, &opts.optim)?;
    let (phi, value) = if value <= start {
        (phi, value)
    } else {
        // a jittered start can only win with a lower value, so this means
        // the classical start itself was never improved on
        (phi0, start)
    };
    if !converged {
        warnings.push(format!(
            "optimizer stopped after {iterations} iterations without meeting tolerances"
        ));
    }
    Ok(CssFit {
        beta: phi.eta(),
        phi,
        objective: value,
        initial_objective: start,
        trace,
        converged,
        iterations,
        evaluations,
        classical,
        warnings,
    })
}
