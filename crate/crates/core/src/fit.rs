//! End-to-end fits: preprocessing, classical or CSS estimation, and mapping
//! the basis back to the input coordinates.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::asymptotics::covariance_lambda;
use crate::data::Dataset;
use crate::error::{CssError, Result};
use crate::estimators::{candidate_matrix, leading_span_with, Eigenform};
use crate::kernels::{make_slices, GKernel, HBasis};
use crate::objective::{fit_css, CssOptions, GBasis, GBasisKind};
use crate::optimizer::OptimOptions;
use crate::rotations::AngleVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    Ols,
    Sir,
    Kir,
    Pir,
    CssOls,
    CssSir,
    CssKir,
    CssPir,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::Ols,
        Method::Sir,
        Method::Kir,
        Method::Pir,
        Method::CssOls,
        Method::CssSir,
        Method::CssKir,
        Method::CssPir,
    ];

    pub fn is_css(self) -> bool {
        matches!(
            self,
            Method::CssOls | Method::CssSir | Method::CssKir | Method::CssPir
        )
    }

    /// The classical method with the same kernel.
    pub fn classical(self) -> Method {
        match self {
            Method::CssOls => Method::Ols,
            Method::CssSir => Method::Sir,
            Method::CssKir => Method::Kir,
            Method::CssPir => Method::Pir,
            m => m,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Ols => "ols",
            Method::Sir => "sir",
            Method::Kir => "kir",
            Method::Pir => "pir",
            Method::CssOls => "css-ols",
            Method::CssSir => "css-sir",
            Method::CssKir => "css-kir",
            Method::CssPir => "css-pir",
        }
    }

    /// Display label in the style of the comparison tables.
    pub fn label(self) -> &'static str {
        match self {
            Method::Ols => "OLS",
            Method::Sir => "SIR",
            Method::Kir => "KIR",
            Method::Pir => "PIR",
            Method::CssOls => "CSS-OLS",
            Method::CssSir => "CSS-SIR",
            Method::CssKir => "CSS-KIR",
            Method::CssPir => "CSS-PIR",
        }
    }

    pub fn kernel(self, params: &KernelParams) -> GKernel {
        match self.classical() {
            Method::Ols => GKernel::Ols,
            Method::Sir => GKernel::Sir {
                slices: params.slices,
            },
            Method::Kir => GKernel::Kir {
                bandwidth: params.bandwidth,
            },
            _ => GKernel::Pir {
                basis: HBasis::new(params.h_degree),
            },
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = CssError;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('_', "-");
        Method::ALL
            .into_iter()
            .find(|m| m.name() == key)
            .ok_or_else(|| {
                let names: Vec<_> = Method::ALL.iter().map(|m| m.name()).collect();
                CssError::InvalidParameter(format!(
                    "unknown method `{s}`; expected one of {}",
                    names.join(", ")
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KernelParams {
    pub slices: usize,
    pub bandwidth: f64,
    pub h_degree: usize,
}

impl KernelParams {
    /// KIR bandwidth schedule by sample size: 0.4 below 200 observations,
    /// then 0.3, 0.2 and 0.1 from 200, 300 and 400 observations on.
    pub fn bandwidth_for(n: usize) -> f64 {
        match n {
            0..200 => 0.4,
            200..300 => 0.3,
            300..400 => 0.2,
            _ => 0.1,
        }
    }
}

impl Default for KernelParams {
    fn default() -> Self {
        Self {
            slices: 10,
            bandwidth: 0.4,
            h_degree: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub method: Method,
    pub d: usize,
    pub kernel: KernelParams,
    pub g_degree: usize,
    pub g_kind: GBasisKind,
    pub eigenform: Eigenform,
    /// Scale predictors to unit variance before fitting.
    pub standardize: bool,
    /// Scale the response to unit variance before building the kernel.
    pub scale_response: bool,
    pub optim: OptimOptions,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            method: Method::CssPir,
            d: 1,
            kernel: KernelParams::default(),
            g_degree: 2,
            g_kind: GBasisKind::Full,
            eigenform: Eigenform::default(),
            standardize: true,
            scale_response: false,
            optim: OptimOptions {
                restarts: 4,
                jitter: 1.0,
                ..OptimOptions::default()
            },
        }
    }
}

impl FitConfig {
    pub fn css_options(&self) -> CssOptions {
        CssOptions {
            g_degree: self.g_degree,
            g_kind: self.g_kind,
            eigenform: self.eigenform,
            optim: self.optim.clone(),
        }
    }

    pub fn gkernel(&self) -> GKernel {
        self.method.kernel(&self.kernel)
    }
}

#[derive(Debug, Clone)]
pub struct FitReport {
    pub method: Method,
    pub n: usize,
    pub p: usize,
    pub d: usize,
    /// Orthonormal basis in the working (centered, possibly standardized)
    /// coordinates.
    pub beta_working: DMatrix<f64>,
    /// Basis of the same span in the input coordinates, columns normalized.
    pub beta: DMatrix<f64>,
    pub phi: Vec<f64>,
    pub objective: Option<f64>,
    pub initial_objective: Option<f64>,
    pub trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub eigenvalues: Vec<f64>,
    /// Sizes of the response slices, for sliced methods.
    pub slice_sizes: Option<Vec<usize>>,
    /// Plug-in standard errors of the angles (CSS-PIR only).
    pub angle_se: Option<Vec<f64>>,
    pub warnings: Vec<String>,
}

/// Centered working copy of `ds` according to the config.
pub fn working_data(ds: &Dataset, cfg: &FitConfig) -> Result<Dataset> {
    let mut work = if cfg.standardize {
        ds.standardize()?
    } else {
        ds.center()
    };
    if cfg.scale_response {
        let n = work.n() as f64;
        let sd = (work.y().norm_squared() / n).sqrt();
        if !(sd > 0.0) {
            return Err(CssError::ConstantResponse);
        }
        let y = work.y() / sd;
        work = work.with_response(y)?;
    }
    Ok(work)
}

/// Normalize the columns of a back-mapped basis.
fn unit_columns(mut b: DMatrix<f64>) -> DMatrix<f64> {
    for mut c in b.column_iter_mut() {
        let norm = c.norm();
        if norm > 0.0 {
            c /= norm;
        }
    }
    b
}

/// Plug-in standard errors of the CSS-PIR angles on the working data.
pub fn angle_standard_errors(
    work: &Dataset,
    phi: &AngleVector,
    cfg: &FitConfig,
) -> Result<Vec<f64>> {
    let hb = HBasis::new(cfg.kernel.h_degree);
    let gb = GBasis::new(cfg.d, cfg.g_degree, cfg.g_kind);
    let cov = covariance_lambda(phi, work, &hb, &gb)?;
    Ok(cov.se.iter().copied().collect())
}

/// Fit `cfg.method` on `ds`.
pub fn fit(ds: &Dataset, cfg: &FitConfig) -> Result<FitReport> {
    let p = ds.p();
    if cfg.d == 0 || cfg.d > p {
        return Err(CssError::InvalidParameter(format!(
            "dimension d = {} must lie in 1..={p}",
            cfg.d
        )));
    }
    let work = working_data(ds, cfg)?;
    let kernel = cfg.gkernel();
    let slice_sizes = match kernel {
        GKernel::Sir { slices } => Some(make_slices(work.y(), slices)?.sizes),
        _ => None,
    };
    let mut report = if cfg.method.is_css() {
        let css = fit_css(&work, &kernel, cfg.d, &cfg.css_options())?;
        let mut warnings = css.warnings;
        let angle_se = if cfg.method == Method::CssPir && cfg.d < p {
            match angle_standard_errors(&work, &css.phi, cfg) {
                Ok(se) => Some(se),
                Err(e) => {
                    warnings.push(format!("standard errors unavailable: {e}"));
                    None
                }
            }
        } else {
            None
        };
        FitReport {
            method: cfg.method,
            n: ds.n(),
            p,
            d: cfg.d,
            beta_working: css.beta.as_matrix().clone(),
            beta: DMatrix::zeros(0, 0),
            phi: css.phi.phi().to_vec(),
            objective: Some(css.objective),
            initial_objective: Some(css.initial_objective),
            trace: css.trace,
            converged: css.converged,
            iterations: css.iterations,
            eigenvalues: css.classical.eigenvalues.iter().copied().collect(),
            slice_sizes,
            angle_se,
            warnings,
        }
    } else {
        let cl = leading_span_with(&candidate_matrix(&work, &kernel)?, cfg.d, cfg.eigenform)?;
        let mut warnings = Vec::new();
        if cl.tied {
            warnings.push("eigenvalues tied at the cut-off; the span is not determined".into());
        }
        FitReport {
            method: cfg.method,
            n: ds.n(),
            p,
            d: cfg.d,
            phi: cl.beta.to_angles().phi().to_vec(),
            beta_working: cl.beta.into_matrix(),
            beta: DMatrix::zeros(0, 0),
            objective: None,
            initial_objective: None,
            trace: Vec::new(),
            converged: true,
            iterations: 0,
            eigenvalues: cl.eigenvalues.iter().copied().collect(),
            slice_sizes,
            angle_se: None,
            warnings,
        }
    };
    report.beta = unit_columns(work.back_map(&report.beta_working));
    Ok(report)
}
