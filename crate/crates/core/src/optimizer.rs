//! Derivative-free minimization over the angle vector.
//!
//! Nelder–Mead runs on `ℝ^m` without constraints; the objective is
//! `π`-periodic up to column signs, so only the final point is wrapped.

use serde::{Deserialize, Serialize};

use crate::error::{CssError, Result};
use crate::rotations::AngleVector;

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimOptions {
    /// Iteration cap; `None` means `500·m`.
    pub max_iter: Option<usize>,
    /// Relative spread of simplex values at convergence.
    pub f_tol: f64,
    /// Largest vertex distance (max-norm) at convergence.
    pub x_tol: f64,
    /// Offset of the initial simplex vertices.
    pub step: f64,
    /// Extra jittered starts on top of the given one.
    pub restarts: usize,
    /// Standard deviation of the restart jitter.
    pub jitter: f64,
    pub seed: u64,
}

impl Default for OptimOptions {
    fn default() -> Self {
        Self {
            max_iter: None,
            f_tol: 1e-8,
            x_tol: 1e-6,
            step: 0.05,
            restarts: 0,
            jitter: 0.3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MinimizeResult {
    pub phi: AngleVector,
    pub value: f64,
    pub start_value: f64,
    /// Best value after each iteration, starting with the initial simplex.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

struct Counted<F> {
    f: F,
    evals: usize,
}

impl<F: FnMut(&AngleVector) -> f64> Counted<F> {
    fn eval(&mut self, proto: &AngleVector, x: &[f64]) -> f64 {
        self.evals += 1;
        let v = (self.f)(&proto.with_phi(x.to_vec()));
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    }
}

/// Nelder–Mead from `phi0`. The best value never increases along the trace
/// and the result is never worse than `f(phi0)`.
pub fn minimize<F>(f: F, phi0: &AngleVector, opts: &OptimOptions) -> Result<MinimizeResult>
where
    F: FnMut(&AngleVector) -> f64,
{
    let m = phi0.m();
    let mut f = Counted { f, evals: 0 };
    let start: Vec<f64> = phi0.phi().to_vec();
    let start_value = f.eval(phi0, &start);
    if !start_value.is_finite() {
        return Err(CssError::NonFiniteObjective);
    }
    if m == 0 {
        return Ok(MinimizeResult {
            phi: phi0.clone(),
            value: start_value,
            start_value,
            trace: vec![start_value],
            iterations: 0,
            evaluations: f.evals,
            converged: true,
        });
    }
    let max_iter = opts.max_iter.unwrap_or(500 * m);

    let mut simplex: Vec<(Vec<f64>, f64)> = vec![(start.clone(), start_value)];
    for t in 0..m {
        let mut x = start.clone();
        x[t] += opts.step;
        let v = f.eval(phi0, &x);
        simplex.push((x, v));
    }

    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    loop {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        trace.push(simplex[0].1);
        let best = simplex[0].1;
        let spread = simplex[m].1 - best;
        let size = simplex[1..]
            .iter()
            .flat_map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if spread <= opts.f_tol * best.abs().max(f64::MIN_POSITIVE) && size <= opts.x_tol {
            converged = true;
            break;
        }
        if iterations >= max_iter {
            break;
        }
        iterations += 1;

        let mut centroid = vec![0.0; m];
        for (x, _) in &simplex[..m] {
            for (c, xi) in centroid.iter_mut().zip(x) {
                *c += xi / m as f64;
            }
        }
        let toward = |coef: f64, target: &[f64]| -> Vec<f64> {
            centroid
                .iter()
                .zip(target)
                .map(|(c, t)| c + coef * (t - c))
                .collect()
        };
        let worst = simplex[m].clone();
        let xr = toward(-REFLECT, &worst.0);
        let fr = f.eval(phi0, &xr);
        if fr < best {
            let xe = toward(EXPAND, &xr);
            let fe = f.eval(phi0, &xe);
            simplex[m] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[m - 1].1 {
            simplex[m] = (xr, fr);
            continue;
        }
        let (xc, fc, accept) = if fr < worst.1 {
            let xc = toward(CONTRACT, &xr);
            let fc = f.eval(phi0, &xc);
            (xc, fc, fc <= fr)
        } else {
            let xc = toward(CONTRACT, &worst.0);
            let fc = f.eval(phi0, &xc);
            (xc, fc, fc < worst.1)
        };
        if accept {
            simplex[m] = (xc, fc);
            continue;
        }
        let x0 = simplex[0].0.clone();
        for vertex in simplex.iter_mut().skip(1) {
            let x: Vec<f64> = x0
                .iter()
                .zip(&vertex.0)
                .map(|(a, b)| a + SHRINK * (b - a))
                .collect();
            let v = f.eval(phi0, &x);
            *vertex = (x, v);
        }
    }

    let (best_x, best_value) = simplex.swap_remove(0);
    let raw = phi0.with_phi(best_x);
    let wrapped = raw.wrap();
    let wrapped_value = f.eval(phi0, wrapped.phi());
    let slack = 1e-12 * (best_value.abs() + start_value.abs()) + f64::MIN_POSITIVE;
    let (phi, value) = if wrapped_value <= best_value + slack && wrapped_value <= start_value {
        (wrapped, wrapped_value)
    } else {
        (raw, best_value)
    };
    Ok(MinimizeResult {
        phi,
        value,
        start_value,
        trace,
        iterations,
        evaluations: f.evals,
        converged,
    })
}

/// Runs `minimize` from each start and keeps the lowest value; earlier starts
/// win ties. The returned `start_value` and the trace's first entry refer to
/// the first start.
pub fn multistart<F>(f: F, inits: &[AngleVector], opts: &OptimOptions) -> Result<MinimizeResult>
where
    F: Fn(&AngleVector) -> f64,
{
    let first = inits
        .first()
        .ok_or_else(|| CssError::InvalidParameter("no starting values".into()))?;
    let mut best = minimize(&f, first, opts)?;
    let mut evaluations = best.evaluations;
    for init in &inits[1..] {
        // a jittered start may land where the objective is undefined
        let Ok(run) = minimize(&f, init, opts) else {
            continue;
        };
        evaluations += run.evaluations;
        if run.value < best.value {
            let mut trace = best.trace.clone();
            let last = *trace.last().unwrap_or(&run.value);
            if run.value < last {
                trace.push(run.value);
            }
            best = MinimizeResult {
                start_value: best.start_value,
                trace,
                ..run
            };
        }
    }
    best.evaluations = evaluations;
    Ok(best)
}
