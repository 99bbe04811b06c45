//! Accuracy metrics and the simulation study.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{CssError, Result};
use crate::fit::{fit, FitConfig, Method};
use crate::linalg::{spd_inv_sqrt, spd_inverse};
use crate::objective::GBasisKind;

fn centered_cols(a: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = a.clone();
    for mut c in out.column_iter_mut() {
        let m = c.mean();
        c.add_scalar_mut(-m);
    }
    out
}

/// Squared trace correlation between the samples `u` and `v` (rows are
/// observations): `tr[Σ_U^{-1/2} Σ_UV Σ_V^{-1} Σ_VU Σ_U^{-1/2}]`.
///
/// Identical arguments return the column count without rounding.
pub fn trace_correlation(u: &DMatrix<f64>, v: &DMatrix<f64>) -> Result<f64> {
    if u.nrows() != v.nrows() {
        return Err(CssError::Dimension(format!(
            "samples have {} and {} rows",
            u.nrows(),
            v.nrows()
        )));
    }
    let n = u.nrows() as f64;
    let uc = centered_cols(u);
    let vc = centered_cols(v);
    let su = uc.transpose() * &uc / n;
    let sv = vc.transpose() * &vc / n;
    let suv = uc.transpose() * &vc / n;
    let su_half = spd_inv_sqrt(&su, "covariance of the first sample")?;
    let sv_inv = spd_inverse(&sv, "covariance of the second sample")?;
    if u == v {
        return Ok(u.ncols() as f64);
    }
    let m = &su_half * &suv * sv_inv * suv.transpose() * &su_half;
    Ok(m.trace())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Model {
    I,
    II,
    III,
}

impl Model {
    pub const ALL: [Model; 3] = [Model::I, Model::II, Model::III];

    /// Regression function at `(x3, x4)` plus noise `eps ~ N(0, 1)`.
    pub fn response(self, x3: f64, x4: f64, eps: f64) -> f64 {
        match self {
            Model::I => x3.exp() + (x4 + 1.5).powi(2) + eps,
            Model::II => 0.4 * x3 * x3 + 3.0 * (x4 / 4.0).sin() + 0.5 * eps,
            Model::III => x3 / (0.5 + (x4 + 1.5).powi(2)) + 0.1 * eps,
        }
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Model::I => "I",
            Model::II => "II",
            Model::III => "III",
        })
    }
}

impl FromStr for Model {
    type Err = CssError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "I" | "1" => Ok(Model::I),
            "II" | "2" => Ok(Model::II),
            "III" | "3" => Ok(Model::III),
            _ => Err(CssError::InvalidParameter(format!(
                "unknown model `{s}`; expected one of I, II, III"
            ))),
        }
    }
}

/// `(X3, X4)` from `X1`, `X2` and the shared noise `δ`.
pub fn design_pair(x1: f64, x2: f64, delta: f64) -> (f64, f64) {
    let x3 = 0.2 * x1 + 0.2 * (x2 + 2.0).powi(2) + 0.2 * delta;
    let x4 = 0.1 + 0.1 * (x1 + x2) + 0.3 * (x1 + 1.5).powi(2) + 0.2 * delta;
    (x3, x4)
}

/// How the noise terms of `X3` and `X4` are drawn.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DesignNoise {
    /// One `δ` per observation enters both columns.
    Shared,
    /// `X3` and `X4` receive independent draws.
    #[default]
    Independent,
}

/// Nonelliptical predictors: `X1, X2, δ` standard normal, `X3, X4` quadratic
/// in them, remaining columns independent standard normal.
pub fn gen_design(n: usize, p: usize, seed: u64) -> Result<DMatrix<f64>> {
    gen_design_with(n, p, seed, DesignNoise::Shared)
}

pub fn gen_design_with(n: usize, p: usize, seed: u64, noise: DesignNoise) -> Result<DMatrix<f64>> {
    if p < 4 {
        return Err(CssError::InvalidParameter(format!(
            "the design needs p >= 4, got {p}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = DMatrix::zeros(n, p);
    for i in 0..n {
        let x1: f64 = StandardNormal.sample(&mut rng);
        let x2: f64 = StandardNormal.sample(&mut rng);
        let d3: f64 = StandardNormal.sample(&mut rng);
        let (x3, mut x4) = design_pair(x1, x2, d3);
        if noise == DesignNoise::Independent {
            let d4: f64 = StandardNormal.sample(&mut rng);
            x4 = design_pair(x1, x2, d4).1;
        }
        x[(i, 0)] = x1;
        x[(i, 1)] = x2;
        x[(i, 2)] = x3;
        x[(i, 3)] = x4;
        for j in 4..p {
            x[(i, j)] = StandardNormal.sample(&mut rng);
        }
    }
    Ok(x)
}

pub fn gen_response(x: &DMatrix<f64>, model: Model, seed: u64) -> Result<DVector<f64>> {
    if x.ncols() < 4 {
        return Err(CssError::Dimension(format!(
            "the models read columns 3 and 4, got {} columns",
            x.ncols()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(DVector::from_fn(x.nrows(), |i, _| {
        let eps: f64 = StandardNormal.sample(&mut rng);
        model.response(x[(i, 2)], x[(i, 3)], eps)
    }))
}

/// Basis `(e3, e4)` of the central space of every model.
pub fn true_basis(p: usize) -> DMatrix<f64> {
    DMatrix::from_fn(p, 2, |r, c| if r == c + 2 { 1.0 } else { 0.0 })
}

/// Design and response seeds of replicate `r`.
pub fn replicate_seeds(master: u64, r: usize) -> (u64, u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(r as u64);
    (rng.next_u64(), rng.next_u64())
}

/// Simulate one dataset of the study.
pub fn simulate(
    model: Model,
    p: usize,
    n: usize,
    seed: u64,
    noise: DesignNoise,
) -> Result<Dataset> {
    let (ds, rs) = replicate_seeds(seed, 0);
    let x = gen_design_with(n, p, ds, noise)?;
    let y = gen_response(&x, model, rs)?;
    Dataset::new(x, y)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub model: Model,
    pub p: usize,
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
    pub noise: DesignNoise,
    pub methods: Vec<Method>,
    /// Settings shared by all methods; `method` is overridden.
    pub fit: FitConfig,
    pub threads: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            model: Model::I,
            p: 4,
            n: 100,
            reps: 100,
            seed: 7,
            noise: DesignNoise::default(),
            methods: vec![
                Method::Pir,
                Method::CssPir,
                Method::Sir,
                Method::CssSir,
                Method::Kir,
                Method::CssKir,
            ],
            fit: FitConfig {
                d: 2,
                g_degree: 3,
                g_kind: GBasisKind::PurePower,
                ..FitConfig::default()
            },
            threads: 1,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 20 {
            return Err(CssError::InvalidParameter(format!(
                "n must be >= 20, got {}",
                self.n
            )));
        }
        if self.reps == 0 {
            return Err(CssError::InvalidParameter(
                "at least one replicate is needed".into(),
            ));
        }
        if self.p < 4 {
            return Err(CssError::InvalidParameter(format!(
                "p must be >= 4, got {}",
                self.p
            )));
        }
        if self.methods.is_empty() {
            return Err(CssError::InvalidParameter("no methods selected".into()));
        }
        if self.threads == 0 {
            return Err(CssError::InvalidParameter("threads must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodSummary {
    pub method: Method,
    pub mean: f64,
    pub se: f64,
    pub n_success: usize,
    pub n_failed: usize,
    /// Trace correlation per replicate; `None` marks a failed replicate.
    pub values: Vec<Option<f64>>,
    /// Set when fewer than two replicates succeeded, so `se` is reported as 0.
    pub se_degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchResult {
    pub model: Model,
    pub p: usize,
    pub n: usize,
    pub reps: usize,
    pub summaries: Vec<MethodSummary>,
}

impl BenchResult {
    pub fn summary(&self, method: Method) -> Option<&MethodSummary> {
        self.summaries.iter().find(|s| s.method == method)
    }

    pub fn mean(&self, method: Method) -> Option<f64> {
        self.summary(method).map(|s| s.mean)
    }
}

fn summarize(method: Method, values: Vec<Option<f64>>) -> MethodSummary {
    let ok: Vec<f64> = values.iter().flatten().copied().collect();
    let k = ok.len();
    let mean = if k == 0 {
        f64::NAN
    } else {
        ok.iter().sum::<f64>() / k as f64
    };
    let se = if k < 2 {
        0.0
    } else {
        let var = ok.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
        (var / k as f64).sqrt()
    };
    MethodSummary {
        method,
        mean,
        se,
        n_success: k,
        n_failed: values.len() - k,
        values,
        se_degenerate: k < 2,
    }
}

/// Trace correlation of every configured method on replicate `r`.
pub fn run_replicate(cfg: &SimConfig, r: usize) -> Vec<Result<f64>> {
    let (dseed, rseed) = replicate_seeds(cfg.seed, r);
    let data = gen_design_with(cfg.n, cfg.p, dseed, cfg.noise)
        .and_then(|x| gen_response(&x, cfg.model, rseed).map(|y| (x, y)))
        .and_then(|(x, y)| Dataset::new(x, y));
    let ds = match data {
        Ok(ds) => ds,
        Err(e) => {
            let msg = e.to_string();
            return cfg
                .methods
                .iter()
                .map(|_| Err(CssError::InvalidParameter(msg.clone())))
                .collect();
        }
    };
    let ds = &ds;
    let truth = true_basis(cfg.p);
    cfg.methods
        .iter()
        .map(|&method| {
            let fc = FitConfig {
                method,
                ..cfg.fit.clone()
            };
            let rep = fit(ds, &fc)?;
            trace_correlation(&(ds.x() * &rep.beta), &(ds.x() * &truth))
        })
        .collect()
}

/// Run the simulation study. Replicates run on `cfg.threads` threads; the
/// aggregates do not depend on the thread count.
pub fn run_benchmark(cfg: &SimConfig) -> Result<BenchResult> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| CssError::InvalidParameter(format!("thread pool: {e}")))?;
    let per_rep: Vec<Vec<Result<f64>>> = pool.install(|| {
        (0..cfg.reps)
            .into_par_iter()
            .map(|r| run_replicate(cfg, r))
            .collect()
    });
    let summaries = cfg
        .methods
        .iter()
        .enumerate()
        .map(|(k, &m)| {
            let values = per_rep
                .iter()
                .map(|rep| rep[k].as_ref().ok().copied().filter(|v| v.is_finite()))
                .collect();
            summarize(m, values)
        })
        .collect();
    Ok(BenchResult {
        model: cfg.model,
        p: cfg.p,
        n: cfg.n,
        reps: cfg.reps,
        summaries,
    })
}

/// CSV with columns `model,p,method,mean,se,n_success,n_failed`.
pub fn bench_csv(results: &[BenchResult]) -> String {
    let mut out = String::from("model,p,method,mean,se,n_success,n_failed\n");
    for r in results {
        for s in &r.summaries {
            let _ = writeln!(
                out,
                "{},{},{},{:.6},{:.6},{},{}",
                r.model,
                r.p,
                s.method.label(),
                s.mean,
                s.se,
                s.n_success,
                s.n_failed
            );
        }
    }
    out
}

/// Aligned text table with one `mean (se)` column per dimension `p`.
pub fn bench_table(results: &[BenchResult]) -> String {
    let mut ps: Vec<usize> = results.iter().map(|r| r.p).collect();
    ps.sort_unstable();
    ps.dedup();
    let mut out = format!("{:<6} {:<8}", "Model", "Method");
    for p in &ps {
        let _ = write!(out, " {:>15}", format!("p = {p}"));
    }
    out.push('\n');
    let mut notes = Vec::new();
    for model in Model::ALL {
        let cells: Vec<&BenchResult> = results.iter().filter(|r| r.model == model).collect();
        if cells.is_empty() {
            continue;
        }
        let mut methods: Vec<Method> = Vec::new();
        for c in &cells {
            for s in &c.summaries {
                if !methods.contains(&s.method) {
                    methods.push(s.method);
                }
            }
        }
        for (row, m) in methods.iter().enumerate() {
            let label = if row == 0 {
                model.to_string()
            } else {
                String::new()
            };
            let _ = write!(out, "{label:<6} {:<8}", m.label());
            for p in &ps {
                let cell = cells
                    .iter()
                    .find(|c| c.p == *p)
                    .and_then(|c| c.summary(*m).map(|s| (c, s)));
                let text = match cell {
                    Some((c, s)) => {
                        if s.n_failed > 0 {
                            notes.push(format!(
                                "{} {} p = {}: {} of {} replicates failed",
                                model,
                                m.label(),
                                c.p,
                                s.n_failed,
                                c.reps
                            ));
                        }
                        if s.se_degenerate {
                            notes.push(format!(
                                "{} {} p = {}: standard error undefined with {} success(es)",
                                model,
                                m.label(),
                                c.p,
                                s.n_success
                            ));
                        }
                        format!("{:.3} ({:.3})", s.mean, s.se)
                    }
                    None => "-".to_string(),
                };
                let _ = write!(out, " {text:>15}");
            }
            out.push('\n');
        }
    }
    for note in notes {
        let _ = writeln!(out, "note: {note}");
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LooResult {
    /// Sum of squared prediction errors over the successful folds.
    pub sse: f64,
    pub failed_folds: Vec<usize>,
}

/// Leave-one-out prediction error: refit on `n − 1` rows, regress Y linearly
/// on the estimated predictors and predict the held-out response.
pub fn loo_cv(ds: &Dataset, cfg: &FitConfig) -> Result<LooResult> {
    let n = ds.n();
    if n < 10 {
        return Err(CssError::TooFewRows {
            needed: 10,
            found: n,
        });
    }
    let mut sse = 0.0;
    let mut failed = Vec::new();
    for k in 0..n {
        let idx: Vec<usize> = (0..n).filter(|&i| i != k).collect();
        match loo_fold(ds, &idx, k, cfg) {
            Ok(err) => sse += err * err,
            Err(_) => failed.push(k),
        }
    }
    if failed.len() == n {
        return Err(CssError::InvalidParameter("every fold failed".into()));
    }
    Ok(LooResult {
        sse,
        failed_folds: failed,
    })
}

fn loo_fold(ds: &Dataset, idx: &[usize], k: usize, cfg: &FitConfig) -> Result<f64> {
    let train = ds.select_rows(idx)?;
    let rep = fit(&train, cfg)?;
    let z = train.x() * &rep.beta;
    let design = DMatrix::from_fn(z.nrows(), z.ncols() + 1, |i, j| {
        if j == 0 {
            1.0
        } else {
            z[(i, j - 1)]
        }
    });
    let coef = design
        .clone()
        .svd(true, true)
        .solve(train.y(), 1e-12)
        .map_err(|e| CssError::InvalidParameter(e.to_string()))?;
    let zk = ds.x().row(k) * &rep.beta;
    let pred = coef[0] + (0..zk.ncols()).map(|j| coef[j + 1] * zk[j]).sum::<f64>();
    let err = ds.y()[k] - pred;
    if err.is_finite() {
        Ok(err)
    } else {
        Err(CssError::NonFiniteObjective)
    }
}
