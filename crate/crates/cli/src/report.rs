//! Text reports and JSON sidecars.

use cssdr::asymptotics::{covariance_lambda, gradient, CovarianceEstimate};
use cssdr::data::fmt17;
use cssdr::fit::{FitConfig, FitReport};
use cssdr::kernels::HBasis;
use cssdr::linalg::sym_eigen_desc;
use cssdr::objective::GBasis;
use cssdr::rotations::AngleVector;
use cssdr::Dataset;
use nalgebra::DMatrix;
use serde_json::{json, Value};
use std::fmt::Write;

pub fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values serialize");
    s.push('\n');
    s
}

/// Columns as nested arrays: `m[c][r]`.
fn columns(m: &DMatrix<f64>) -> Value {
    Value::from(
        m.column_iter()
            .map(|c| c.iter().copied().collect::<Vec<f64>>())
            .collect::<Vec<_>>(),
    )
}

fn rows(m: &DMatrix<f64>) -> Value {
    Value::from(
        m.row_iter()
            .map(|r| r.iter().copied().collect::<Vec<f64>>())
            .collect::<Vec<_>>(),
    )
}

fn basis_block(out: &mut String, title: &str, names: &[String], b: &DMatrix<f64>) {
    let _ = writeln!(out, "{title}");
    let width = names.iter().map(|n| n.len()).max().unwrap_or(0).max(4);
    for (r, name) in names.iter().enumerate() {
        let _ = write!(out, "  {name:<width$}");
        for c in 0..b.ncols() {
            let _ = write!(out, "  {:>24}", fmt17(b[(r, c)]));
        }
        out.push('\n');
    }
}

pub fn fit_text(ds: &Dataset, rep: &FitReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "method       {}", rep.method.label());
    let _ = writeln!(out, "observations {}", rep.n);
    let _ = writeln!(out, "predictors   {}", rep.p);
    let _ = writeln!(out, "dimension    {}", rep.d);
    if let Some(sizes) = &rep.slice_sizes {
        let s: Vec<String> = sizes.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(out, "slices       {} ({})", sizes.len(), s.join(" "));
    }
    if let (Some(init), Some(fin)) = (rep.initial_objective, rep.objective) {
        let _ = writeln!(out, "objective    {} -> {}", fmt17(init), fmt17(fin));
        let _ = writeln!(
            out,
            "optimizer    {} after {} iterations, {} trace values",
            if rep.converged {
                "converged"
            } else {
                "stopped"
            },
            rep.iterations,
            rep.trace.len()
        );
    }
    let ev: Vec<String> = rep.eigenvalues.iter().map(|v| format!("{v:.6e}")).collect();
    let _ = writeln!(out, "eigenvalues  {}", ev.join(" "));
    out.push('\n');
    basis_block(&mut out, "basis (input coordinates)", ds.names(), &rep.beta);
    basis_block(
        &mut out,
        "basis (working coordinates)",
        ds.names(),
        &rep.beta_working,
    );
    if !rep.phi.is_empty() {
        out.push('\n');
        let _ = writeln!(out, "angles");
        for (t, a) in rep.phi.iter().enumerate() {
            let _ = write!(out, "  phi[{t}] {:>24}", fmt17(*a));
            if let Some(se) = &rep.angle_se {
                let _ = write!(out, "  se {:>24}", fmt17(se[t]));
            }
            out.push('\n');
        }
    }
    for w in &rep.warnings {
        let _ = writeln!(out, "warning: {w}");
    }
    out
}

fn fit_fields(ds: &Dataset, cfg: &FitConfig, rep: &FitReport) -> Value {
    json!({
        "method": rep.method.name(),
        "n": rep.n,
        "p": rep.p,
        "d": rep.d,
        "predictors": ds.names(),
        "response": ds.response_name(),
        "beta": columns(&rep.beta),
        "beta_working": columns(&rep.beta_working),
        "phi": rep.phi,
        "angle_se": rep.angle_se,
        "objective": rep.objective,
        "initial_objective": rep.initial_objective,
        "trace": rep.trace,
        "converged": rep.converged,
        "iterations": rep.iterations,
        "eigenvalues": rep.eigenvalues,
        "slice_sizes": rep.slice_sizes,
        "warnings": rep.warnings,
        "config": cfg,
    })
}

pub fn fit_json(ds: &Dataset, cfg: &FitConfig, rep: &FitReport) -> Value {
    fit_fields(ds, cfg, rep)
}

pub struct Asymptotics {
    pub cov: CovarianceEstimate,
    pub gradient: Vec<f64>,
    pub w_eigenvalues: Vec<f64>,
}

impl Asymptotics {
    /// Plug-in quantities at the fitted angles on the working data.
    pub fn compute(work: &Dataset, rep: &FitReport, cfg: &FitConfig) -> cssdr::Result<Self> {
        let phi = AngleVector::new(rep.phi.clone(), rep.p, rep.d)?;
        let hb = HBasis::new(cfg.kernel.h_degree);
        let gb = GBasis::new(cfg.d, cfg.g_degree, cfg.g_kind);
        let cov = covariance_lambda(&phi, work, &hb, &gb)?;
        let grad = gradient(&phi, work, &hb, &gb)?;
        let (ev, _) = sym_eigen_desc(&cov.hessian.w);
        Ok(Self {
            cov,
            gradient: grad.iter().copied().collect(),
            w_eigenvalues: ev.iter().copied().collect(),
        })
    }
}

pub fn asym_text(rep: &FitReport, a: &Asymptotics) -> String {
    let mut out = String::new();
    let h = &a.cov.hessian;
    let _ = writeln!(out, "method        {}", rep.method.label());
    let _ = writeln!(out, "observations  {}", rep.n);
    let _ = writeln!(out, "angles        {}", rep.phi.len());
    let _ = writeln!(out, "rank of W     {}", h.rank);
    let _ = writeln!(out, "residual norm {}", fmt17(h.residual_norm));
    let ev: Vec<String> = a.w_eigenvalues.iter().map(|v| format!("{v:.6e}")).collect();
    let _ = writeln!(out, "W eigenvalues {}", ev.join(" "));
    out.push('\n');
    let _ = writeln!(
        out,
        "  {:<8} {:>24} {:>24} {:>24}",
        "angle", "estimate", "se", "gradient"
    );
    for (t, phi) in rep.phi.iter().enumerate() {
        let _ = writeln!(
            out,
            "  phi[{t}]{:pad$} {:>24} {:>24} {:>24}",
            "",
            fmt17(*phi),
            fmt17(a.cov.se[t]),
            fmt17(a.gradient[t]),
            pad = 8usize.saturating_sub(5 + t.to_string().len()),
        );
    }
    for w in &rep.warnings {
        let _ = writeln!(out, "warning: {w}");
    }
    out
}

pub fn asym_json(ds: &Dataset, cfg: &FitConfig, rep: &FitReport, a: &Asymptotics) -> Value {
    let h = &a.cov.hessian;
    json!({
        "fit": fit_fields(ds, cfg, rep),
        "w": rows(&h.w),
        "w_pinv": rows(&h.w_pinv),
        "w_rank": h.rank,
        "w_eigenvalues": a.w_eigenvalues,
        "projection": rows(&h.p_w),
        "residual_norm": h.residual_norm,
        "lambda": rows(&a.cov.lambda),
        "se": a.cov.se.iter().copied().collect::<Vec<f64>>(),
        "gradient": a.gradient,
    })
}
