//! Acceptance suite. Prints one PASS/FAIL line per criterion and fails if any
//! criterion fails. The simulation criteria dominate the running time.

use cssdr::asymptotics::{gradient_weighted, hessian_w, influence_g_star, partials};
use cssdr::estimators::{candidate_matrix_explicit, sir_slice_matrix};
use cssdr::evaluation::{run_benchmark, trace_correlation, BenchResult, Model, SimConfig};
use cssdr::fit::{FitConfig, KernelParams, Method};
use cssdr::kernels::{GKernel, HBasis};
use cssdr::linalg::{max_abs, sym_eigen_desc};
use cssdr::objective::{fit_css, jittered_inits, CssObjective, GBasis, GBasisKind};
use cssdr::optimizer::minimize;
use cssdr::rotations::{orthonormality_error, AngleVector};
use cssdr::{asymptotics, Dataset};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::f64::consts::PI;
use std::time::Instant;

struct Outcome {
    pass: bool,
    detail: String,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn normal_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| normal(rng))
}

fn within(value: f64, target: f64, tol: f64) -> bool {
    (value - target).abs() <= tol
}

fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm()
}

// ---------------------------------------------------------------- simulations

fn table_cells() -> Vec<BenchResult> {
    let mut out = Vec::new();
    for model in [Model::I, Model::II, Model::III] {
        for p in [4, 6, 8] {
            let cfg = SimConfig {
                model,
                p,
                ..SimConfig::default()
            };
            let t = Instant::now();
            let res = run_benchmark(&cfg).expect("benchmark cell");
            eprintln!(
                "  cell model {model}, p = {p}: {:.0}s",
                t.elapsed().as_secs_f64()
            );
            out.push(res);
        }
    }
    out
}

fn cell(cells: &[BenchResult], model: Model, p: usize) -> &BenchResult {
    cells
        .iter()
        .find(|c| c.model == model && c.p == p)
        .expect("cell present")
}

fn mean(c: &BenchResult, m: Method) -> f64 {
    c.mean(m).unwrap_or(f64::NAN)
}

fn criterion_1(cells: &[BenchResult]) -> Outcome {
    let c = cell(cells, Model::I, 4);
    let checks = [
        (Method::Sir, 1.112),
        (Method::CssSir, 1.735),
        (Method::Kir, 1.701),
        (Method::CssKir, 1.832),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (m, target) in checks {
        let v = mean(c, m);
        pass &= within(v, target, 0.10);
        parts.push(format!("{} {v:.3} (target {target})", m.label()));
    }
    Outcome {
        pass,
        detail: parts.join(", "),
    }
}

fn criterion_2(cells: &[BenchResult]) -> Outcome {
    let c = cell(cells, Model::III, 4);
    let pairs = [
        (Method::Kir, 1.146, Method::CssKir, 1.862),
        (Method::Pir, 1.149, Method::CssPir, 1.839),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (cm, ct, sm, st) in pairs {
        let (cv, sv) = (mean(c, cm), mean(c, sm));
        pass &= within(cv, ct, 0.10) && within(sv, st, 0.10) && sv - cv > 0.4;
        parts.push(format!(
            "{} {cv:.3} (target {ct}) vs {} {sv:.3} (target {st}), gap {:.3}",
            cm.label(),
            sm.label(),
            sv - cv
        ));
    }
    Outcome {
        pass,
        detail: parts.join("; "),
    }
}

fn criterion_3(cells: &[BenchResult]) -> Outcome {
    let mut pass = true;
    let mut smallest = f64::INFINITY;
    let mut worst = String::new();
    for c in cells {
        for m in [Method::CssPir, Method::CssSir, Method::CssKir] {
            let gap = mean(c, m) - mean(c, m.classical());
            if gap.is_nan() || gap <= 0.0 {
                pass = false;
            }
            if gap < smallest || gap.is_nan() {
                smallest = gap;
                worst = format!("{} model {} p = {}", m.label(), c.model, c.p);
            }
        }
    }
    Outcome {
        pass,
        detail: format!("27 pairs, smallest gap {smallest:.3} ({worst})"),
    }
}

fn criterion_4() -> Outcome {
    let mut cfg = SimConfig {
        model: Model::I,
        p: 6,
        n: 500,
        methods: vec![Method::Kir, Method::CssKir],
        ..SimConfig::default()
    };
    cfg.fit.kernel.bandwidth = KernelParams::bandwidth_for(500);
    cfg.fit.kernel.h_degree = 3;
    cfg.fit.g_degree = 3;
    cfg.fit.g_kind = GBasisKind::Full;
    let res = run_benchmark(&cfg).expect("large-n cell");
    let v = mean(&res, Method::CssKir);
    Outcome {
        pass: within(v, 1.861, 0.05),
        detail: format!(
            "CSS-KIR {v:.3} (target 1.861 ± 0.05), KIR {:.3}",
            mean(&res, Method::Kir)
        ),
    }
}

// ---------------------------------------------------------------- properties

fn random_angles(rng: &mut ChaCha8Rng, p: usize, d: usize) -> AngleVector {
    let m = p * d - d * (d + 1) / 2;
    let phi = (0..m)
        .map(|_| rng.random_range(-2.0 * PI..2.0 * PI))
        .collect();
    AngleVector::new(phi, p, d).expect("valid angles")
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let p = rng.random_range(2..=10);
        let d = rng.random_range(1..=p);
        let phi = random_angles(&mut rng, p, d);
        worst = worst.max(orthonormality_error(phi.eta().as_matrix()));
    }
    Outcome {
        pass: worst < 1e-10,
        detail: format!("1000 frames, max |ηᵀη - I| = {worst:.2e}"),
    }
}

/// Data where `X` minus its projection on `G(e1ᵀX)` is orthogonal to `H(Y)`,
/// so the Gram residual vanishes at `φ = 0`.
fn zero_residual_design(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x1 = DVector::from_fn(n, |_, _| normal(&mut rng));
    let y = DVector::from_fn(n, |i, _| {
        x1[i] + 0.3 * x1[i] * x1[i] + 0.5 * normal(&mut rng)
    });
    let span = DMatrix::from_fn(n, 5, |i, c| match c {
        0 => 1.0,
        1 => x1[i],
        2 => x1[i] * x1[i],
        3 => y[i],
        _ => y[i] * y[i],
    });
    let noise = normal_matrix(&mut rng, n, 2);
    let svd = span.clone().svd(true, false);
    let u = svd.u.expect("left vectors");
    let e = &noise - &u * (u.transpose() * &noise);
    let x = DMatrix::from_fn(n, 3, |i, c| match c {
        0 => x1[i],
        1 => x1[i] * x1[i] - 1.0 + 0.5 * e[(i, 0)],
        _ => 0.5 * x1[i] - 0.4 * x1[i] * x1[i] + 0.5 * e[(i, 1)],
    });
    Dataset::new(x, y).expect("dataset")
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let h = 1e-6;

    let mut eta_err: f64 = 0.0;
    for _ in 0..50 {
        let p = rng.random_range(2..=8);
        let d = rng.random_range(1..p);
        let phi = random_angles(&mut rng, p, d);
        for t in 0..phi.m() {
            let mut plus = phi.phi().to_vec();
            let mut minus = plus.clone();
            plus[t] += h;
            minus[t] -= h;
            let fp = AngleVector::new(plus, p, d).unwrap().eta().into_matrix();
            let fm = AngleVector::new(minus, p, d).unwrap().eta().into_matrix();
            let fd = (fp - fm) / (2.0 * h);
            eta_err = eta_err.max(rel_err(&fd, &phi.eta_dot(t).unwrap()));
        }
    }

    let hb = HBasis::new(2);
    let gb = GBasis::full(2, 2);
    let mut dr_err: f64 = 0.0;
    for s in 0..5 {
        let ds = cssdr::evaluation::simulate(Model::I, 4, 100, 60 + s, Default::default())
            .unwrap()
            .center();
        let phi = random_angles(&mut rng, 4, 2);
        for t in 0..phi.m() {
            let r_at = |delta: f64| {
                let mut v = phi.phi().to_vec();
                v[t] += delta;
                asymptotics::gram_bundle(&AngleVector::new(v, 4, 2).unwrap(), &ds, &hb, &gb)
                    .unwrap()
                    .r
            };
            let fd = (r_at(h) - r_at(-h)) / (2.0 * h);
            let an = partials(&phi, &ds, &hb, &gb, t).unwrap().dr;
            dr_err = dr_err.max(rel_err(&fd, &an));
        }
    }

    let ds = zero_residual_design(50, 61);
    let gb1 = GBasis::full(1, 2);
    let phi0 = AngleVector::zeros(3, 1).unwrap();
    let w = hessian_w(&phi0, &ds, &hb, &gb1).unwrap();
    let hh = 1e-3;
    let ell_at = |a: f64, b: f64| {
        asymptotics::ell(&AngleVector::new(vec![a, b], 3, 1).unwrap(), &ds, &hb, &gb1).unwrap()
    };
    let mut numeric = DMatrix::zeros(2, 2);
    for t in 0..2 {
        for u in 0..2 {
            let step = |st: f64, su: f64| {
                let mut v = [0.0; 2];
                v[t] += st * hh;
                v[u] += su * hh;
                ell_at(v[0], v[1])
            };
            numeric[(t, u)] = (step(1.0, 1.0) - step(1.0, -1.0) - step(-1.0, 1.0)
                + step(-1.0, -1.0))
                / (4.0 * hh * hh);
        }
    }
    let (ew, _) = sym_eigen_desc(&w.w);
    let (en, _) = sym_eigen_desc(&numeric);
    let top = ew[0];
    let mut w_err: f64 = 0.0;
    for k in 0..ew.len() {
        if ew[k] > 1e-6 * top {
            w_err = w_err.max((en[k] - ew[k]).abs() / ew[k]);
        }
    }

    Outcome {
        pass: eta_err < 1e-5 && dr_err < 1e-5 && w_err < 1e-3,
        detail: format!(
            "η̇ rel err {eta_err:.1e}, ∂R rel err {dr_err:.1e}, W eigenvalue rel err {w_err:.1e} (residual norm {:.1e})",
            w.residual_norm
        ),
    }
}

fn criterion_7() -> Outcome {
    let n = 50;
    let ds = zero_residual_design(n, 71);
    let hb = HBasis::new(2);
    let gb = GBasis::full(1, 2);
    let phi0 = AngleVector::zeros(3, 1).unwrap();
    let alpha = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let i = rng.random_range(0..n);
        let grad_at = |a: f64| {
            let mut w = DVector::from_element(n, (1.0 - a) / n as f64);
            w[i] += a;
            gradient_weighted(&phi0, ds.x(), ds.y(), &w, &hb, &gb).unwrap()
        };
        let numeric = (grad_at(alpha) - grad_at(-alpha)) / (2.0 * alpha);
        let g = influence_g_star(&phi0, &ds, &hb, &gb, i).unwrap();
        worst = worst.max((numeric - &g).norm() / g.norm());
    }
    Outcome {
        pass: worst < 1e-3,
        detail: format!("20 observations, max rel err {worst:.1e}"),
    }
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let p = rng.random_range(2..=5);
        let x = normal_matrix(&mut rng, 20, p);
        let y = DVector::from_fn(20, |i, _| {
            x[(i, 0)] + x[(i, 1)].powi(2) + 0.3 * normal(&mut rng)
        });
        let ds = Dataset::new(x, y).unwrap();
        let slices = rng.random_range(2..=5);
        let a = sir_slice_matrix(&ds, slices).unwrap().a;
        let b = candidate_matrix_explicit(&ds, &GKernel::Sir { slices })
            .unwrap()
            .a;
        worst = worst.max(max_abs(&(a - b)));
    }
    Outcome {
        pass: worst <= 1e-10,
        detail: format!("50 datasets, max entry difference {worst:.1e}"),
    }
}

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut exact = true;
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let d = rng.random_range(1..=3);
        let u = normal_matrix(&mut rng, 200, d);
        let v = &u * normal_matrix(&mut rng, d, d) + normal_matrix(&mut rng, 200, d);
        exact &= trace_correlation(&u, &u).unwrap() == d as f64;
        let base = trace_correlation(&u, &v).unwrap();
        let a = normal_matrix(&mut rng, d, d) + DMatrix::identity(d, d) * 2.0;
        let b = normal_matrix(&mut rng, d, d) + DMatrix::identity(d, d) * 2.0;
        let mapped = trace_correlation(&(&u * a), &(&v * b)).unwrap();
        worst = worst.max((mapped - base).abs());
    }
    Outcome {
        pass: exact && worst < 1e-8,
        detail: format!(
            "self-correlation exact: {exact}, max change under linear maps {worst:.1e}"
        ),
    }
}

fn criterion_10() -> Outcome {
    let mut runs = 0;
    let mut monotone = true;
    let kernels = [
        GKernel::Ols,
        GKernel::Sir { slices: 10 },
        GKernel::Kir { bandwidth: 0.4 },
        GKernel::Pir {
            basis: HBasis::new(2),
        },
    ];
    for s in 0..3 {
        let ds = cssdr::evaluation::simulate(Model::II, 4, 100, 100 + s, Default::default())
            .unwrap()
            .standardize()
            .unwrap();
        for kernel in &kernels {
            let obj = CssObjective::new(&ds, kernel, GBasis::full(2, 3)).unwrap();
            let mut inits = vec![AngleVector::zeros(4, 2).unwrap()];
            inits.extend(jittered_inits(&inits[0], 3, 1.0, s));
            for init in &inits {
                let res = minimize(
                    |phi: &AngleVector| obj.value(phi).unwrap_or(f64::INFINITY),
                    init,
                    &Default::default(),
                )
                .unwrap();
                runs += 1;
                monotone &= res.trace.windows(2).all(|w| w[1] <= w[0]);
                monotone &= res.value <= res.start_value;
            }
        }
    }

    // X2 and X3 are exact cubic polynomials of the index, on a rotated frame
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let n = 200;
    let z = DMatrix::from_fn(n, 3, |_, _| normal(&mut rng));
    let base = DMatrix::from_fn(n, 3, |i, c| {
        let u = z[(i, 0)];
        match c {
            0 => u,
            1 => u * u - 1.0,
            _ => u.powi(3) - 2.0 * u,
        }
    });
    let q = normal_matrix(&mut rng, 3, 3).qr().q();
    let x = &base * q.transpose();
    let y = DVector::from_fn(n, |i, _| z[(i, 0)] + 0.5 * normal(&mut rng));
    let ds = Dataset::new(x, y).unwrap();
    let truth = q.column(0).into_owned();
    let mut largest: f64 = 0.0;
    for kernel in &kernels {
        let obj = CssObjective::new(&ds, kernel, GBasis::full(1, 3)).unwrap();
        let eta = DMatrix::from_column_slice(3, 1, truth.as_slice());
        largest = largest.max(obj.value_eta(&eta).unwrap());
    }
    let zero = largest < 1e-20;
    Outcome {
        pass: monotone && zero,
        detail: format!(
            "{runs} runs monotone: {monotone}; objective at the true index {largest:.1e}"
        ),
    }
}

fn criterion_11() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 200;
    let x = DMatrix::from_fn(n, 3, |_, _| normal(&mut rng));
    let mut x = x;
    for i in 0..n {
        x[(i, 2)] = 0.6 * x[(i, 0)].powi(2) + 0.4 * x[(i, 1)] + 0.5 * x[(i, 2)];
    }
    let y = DVector::from_fn(n, |i, _| {
        x[(i, 0)] + 0.5 * x[(i, 2)] + 0.5 * normal(&mut rng)
    });
    let ds = Dataset::new(x, y).unwrap().standardize().unwrap();
    let opts = FitConfig::default().css_options();
    let fit = fit_css(&ds, &GKernel::Ols, 1, &opts).unwrap();
    let obj = CssObjective::new(
        &ds,
        &GKernel::Ols,
        GBasis::new(1, opts.g_degree, opts.g_kind),
    )
    .unwrap();
    let mut grid = f64::INFINITY;
    let steps = 200;
    for a in 0..steps {
        for b in 0..steps {
            let phi = vec![
                PI * a as f64 / (steps - 1) as f64,
                PI * b as f64 / (steps - 1) as f64,
            ];
            grid = grid.min(obj.value(&AngleVector::new(phi, 3, 1).unwrap()).unwrap());
        }
    }
    Outcome {
        pass: (fit.objective - grid).abs() < 1e-3,
        detail: format!(
            "Nelder-Mead {:.6e}, grid {grid:.6e}, difference {:.1e}",
            fit.objective,
            (fit.objective - grid).abs()
        ),
    }
}

fn main() {
    let started = Instant::now();
    let mut outcomes: Vec<(usize, Outcome)> = vec![
        (5, criterion_5()),
        (6, criterion_6()),
        (7, criterion_7()),
        (8, criterion_8()),
        (9, criterion_9()),
        (10, criterion_10()),
        (11, criterion_11()),
    ];
    eprintln!("property criteria: {:.1}s", started.elapsed().as_secs_f64());
    let cells = table_cells();
    outcomes.push((1, criterion_1(&cells)));
    outcomes.push((2, criterion_2(&cells)));
    outcomes.push((3, criterion_3(&cells)));
    outcomes.push((4, criterion_4()));
    outcomes.sort_by_key(|(k, _)| *k);

    println!();
    print!("{}", cssdr::evaluation::bench_table(&cells));
    println!();
    let mut failed = 0;
    for (k, o) in &outcomes {
        let tag = if o.pass { "PASS" } else { "FAIL" };
        if !o.pass {
            failed += 1;
        }
        println!("criterion {k:>2}: {tag}  {}", o.detail);
    }
    println!(
        "acceptance finished in {:.0}s",
        started.elapsed().as_secs_f64()
    );
    if failed > 0 {
        eprintln!("{failed} criteria failed");
        std::process::exit(1);
    }
}
