//! Acceptance criteria 1–10, one PASS/FAIL line each.
//!
//! Runs as a plain binary so that the summary is printed under `cargo test`.
//! Exits nonzero when any criterion fails.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use num_complex::Complex64;
use rand::Rng;

use fmlab::conditions::{check_condition_4_1, default_xi_sample, EllipticCoefficients, ParabolicCoefficients};
use fmlab::kernels::{numeric_transform_oracle, Kernel};
use fmlab::linalg::CVector;
use fmlab::multiplier::{apply_multiplier, dft, idft, lp_norm, spectral_l2_norm, ENorm, Grid, GridFunction};
use fmlab::rbound::{check_calculus_d_e, check_kahane, estimate_r_bound, OperatorFamily};
use fmlab::rng::{complex_normal, stream};
use fmlab::sectorial::{log_spaced, SectorialOperator};
use fmlab::solver::{
    causal_pulse, demo_fading_memory, negative_test_m1, solve_cauchy, solve_elliptic, solve_elliptic_doe,
    solve_parabolic, verify_sobolev, CauchyOptions, FadingMemoryParams, OperatorPolynomial,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

fn rel(a: &GridFunction, b: &GridFunction) -> f64 {
    lp_norm(&a.sub(b).unwrap(), 2.0) / lp_norm(b, 2.0)
}

fn stencil(shift: f64) -> Arc<SectorialOperator> {
    Arc::new(SectorialOperator::dirichlet_laplacian(32, std::f64::consts::PI, shift).unwrap())
}

fn scratch(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance").join(name);
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

fn fmlab(args: &[&str], out: &Path, threads: usize) -> (i32, String) {
    let o = Command::new(env!("CARGO_BIN_EXE_fmlab"))
        .args(args)
        .arg("--out")
        .arg(out)
        .arg("--threads")
        .arg(threads.to_string())
        .output()
        .expect("binary runs");
    let text = String::from_utf8_lossy(&o.stdout).into_owned() + &String::from_utf8_lossy(&o.stderr);
    (o.status.code().unwrap_or(-1), text)
}

/// Closed-form transforms against composite Gauss quadrature on 200 log-spaced frequencies.
fn transform_fidelity() -> Outcome {
    let start = Instant::now();
    let mut kernels: Vec<Kernel> = [0.5, 1.0, 2.0].iter().map(|&m| Kernel::exponential(1, m).unwrap()).collect();
    kernels.push(Kernel::gaussian(1, 1.0).unwrap());
    let xis = log_spaced(1e-3, 1e2, 200);
    let mut worst = 0.0f64;
    for k in &kernels {
        let h = k.tail_halfwidth(1e-12);
        for &xi in &xis {
            // panels short against the oscillation period
            let panels = ((2.0 * h * xi.max(1.0)) as usize).max(4096);
            let err = (numeric_transform_oracle(k, &[xi], h, panels) - k.transform(&[xi])).norm();
            worst = worst.max(err);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(worst <= 1e-6 && secs < 5.0, format!("max |error| = {worst:.2e} over 4 kernels x 200 xi in {secs:.2} s"))
}

/// Roundtrip, Parseval and Hölder on seeded random trigonometric data.
fn discrete_core() -> Outcome {
    let mut roundtrip = 0.0f64;
    let mut parseval = 0.0f64;
    let mut holder_ok = true;
    for draw in 0..100u64 {
        let mut rng = stream(2024, draw);
        let n = 1usize << rng.random_range(3..11);
        let l = rng.random_range(0.5..20.0);
        let e = rng.random_range(1..4);
        let g = Grid::new(1, n, l).unwrap();
        let f = GridFunction::random_trig(g, e, n / 2 - 1, &mut rng);
        let spec = dft(&f);
        let back = idft(&spec);
        roundtrip = roundtrip.max(back.sub(&f).unwrap().max_abs() / f.max_abs());
        let n2 = lp_norm(&f, 2.0);
        parseval = parseval.max((spectral_l2_norm(&spec) - n2).abs() / n2);
        let q = rng.random_range(1.0..6.0);
        let p = q + rng.random_range(0.0..6.0);
        let bound = (2.0 * l).powf(1.0 / q - 1.0 / p) * lp_norm(&f, p);
        holder_ok &= lp_norm(&f, q) <= bound * (1.0 + 1e-12);
    }
    outcome(
        roundtrip <= 1e-12 && parseval <= 1e-12 && holder_ok,
        format!("roundtrip {roundtrip:.1e}, Parseval {parseval:.1e}, Hölder holds on 100 draws: {holder_ok}"),
    )
}

/// Band-limited (elliptic, parabolic, DOE) and smooth causal (Cauchy) manufactured solutions.
fn manufactured() -> Outcome {
    let op = stencil(1.0);
    let e = op.dim();
    let mut lines = Vec::new();
    let mut pass = true;
    let mut record = |name: &str, err: f64, secs: f64| {
        pass &= err <= 1e-8 && secs < 10.0;
        lines.push(format!("{name} {err:.1e} ({secs:.2} s)"));
    };

    let t = Instant::now();
    let mut coeffs = EllipticCoefficients::constant_laplacian(1);
    coeffs.b1 = Kernel::exponential(1, 1.0).unwrap();
    let g = Grid::new(1, 4096, 32.0).unwrap();
    let u_star = GridFunction::random_trig(g.clone(), e, 512, &mut stream(3, 0));
    let f = apply_multiplier(&OperatorPolynomial::elliptic(&coeffs, op.clone()), &u_star).unwrap();
    let s = solve_elliptic(&coeffs, &op, &f, 2.0, 2.0).unwrap();
    record("elliptic", rel(&s.solution.u, &u_star), t.elapsed().as_secs_f64());

    let t = Instant::now();
    let pc = ParabolicCoefficients::fading_memory(1.0, 1.0).unwrap();
    let u_star = GridFunction::random_trig(g.clone(), e, 512, &mut stream(3, 1));
    let f = apply_multiplier(&OperatorPolynomial::parabolic(&pc, op.clone()), &u_star).unwrap();
    let (s, _) = solve_parabolic(&pc, &op, &f, 2.0, &ENorm::Euclidean).unwrap();
    record("parabolic", rel(&s.u, &u_star), t.elapsed().as_secs_f64());

    let t = Instant::now();
    let u_star = GridFunction::random_trig(g.clone(), e, 512, &mut stream(3, 2));
    let f = apply_multiplier(&OperatorPolynomial::doe(op.clone()), &u_star).unwrap();
    let s = solve_elliptic_doe(&op, &f).unwrap();
    record("doe", rel(&s.u, &u_star), t.elapsed().as_secs_f64());

    // causal u* = t^10 e^{-t} v, f = u*' + Au*
    let t = Instant::now();
    let gc = Grid::new(1, 4096, 64.0).unwrap();
    let v = CVector::from_iterator(e, (0..e).map(|i| c(1.0 / (1.0 + i as f64))));
    let av = op.apply(&v);
    let profile = |x: f64| if x > 0.0 { x.powi(10) * (-x).exp() } else { 0.0 };
    let slope = |x: f64| if x > 0.0 { (10.0 * x.powi(9) - x.powi(10)) * (-x).exp() } else { 0.0 };
    let u_star = GridFunction::from_fn(gc.clone(), e, |x, o| {
        for (i, z) in o.iter_mut().enumerate() {
            *z = v[i] * profile(x[0]);
        }
    });
    let f = GridFunction::from_fn(gc, e, |x, o| {
        for (i, z) in o.iter_mut().enumerate() {
            *z = v[i] * slope(x[0]) + av[i] * profile(x[0]);
        }
    });
    let s = solve_cauchy(&op, &f, 2.0, CauchyOptions { semigroup_check: false }).unwrap();
    record("cauchy", rel(&s.solution.u, &u_star), t.elapsed().as_secs_f64());

    outcome(pass, format!("relative errors at N = 4096: {}", lines.join(", ")))
}

fn fading_memory(n: usize) -> fmlab::solver::FadingMemoryReport {
    demo_fading_memory(&FadingMemoryParams::with_rates(1.0, 1.0, 1.0, n).unwrap()).unwrap()
}

/// Fading-memory coercive ratio over 50 members at two resolutions.
fn coercive() -> Outcome {
    let coarse = fading_memory(1024);
    let fine = fading_memory(4096);
    let all_ok = |r: &fmlab::solver::FadingMemoryReport| {
        r.rows.len() == 50 && r.rows.iter().all(|m| m.residual <= 1e-9 && m.ratio_c.is_some_and(f64::is_finite))
    };
    let change = (fine.max_ratio - coarse.max_ratio).abs() / coarse.max_ratio;
    outcome(
        all_ok(&coarse) && all_ok(&fine) && change < 0.05,
        format!(
            "max ratio_C {:.6} (N=1024) vs {:.6} (N=4096), change {:.2e}; max residual {:.1e}",
            coarse.max_ratio,
            fine.max_ratio,
            change,
            coarse.max_residual.max(fine.max_residual)
        ),
    )
}

/// Sobolev ratio at (q, p, d) = (2, 4, 1) and refusal of a gap violation.
fn sobolev() -> Outcome {
    let mut coeffs = EllipticCoefficients::constant_laplacian(1);
    coeffs.b1 = Kernel::exponential(1, 1.0).unwrap();
    let op = stencil(1.0);
    let g = Grid::new(1, 512, 32.0).unwrap();
    let r = verify_sobolev(&coeffs, &op, 2.0, 4.0, 50, 11, &g).unwrap();
    let out = scratch("sobolev");
    let (code, text) = fmlab(&["solve-elliptic", "--d", "5", "--q", "1.1", "--p", "10"], &out, 0);
    let refused = code == 2 && text.contains("gap");
    outcome(
        r.stable() && r.ratios.len() == 50 && refused,
        format!(
            "max ratio {:.6e}, drift grid {:.1e}, drift box {:.1e}; gap violation exit code {code}",
            r.max_ratio, r.drift_grid, r.drift_box
        ),
    )
}

/// Multiplier path against semigroup quadrature for 10 seeded causal pulses.
fn dual_path() -> Outcome {
    let op = stencil(1.0);
    let g = Grid::new(1, 2048, 32.0).unwrap();
    let worst = (0..10u64)
        .map(|i| {
            let f = causal_pulse(&g, op.dim(), &mut stream(99, i));
            solve_cauchy(&op, &f, 2.0, CauchyOptions::default()).unwrap().discrepancy.unwrap()
        })
        .fold(0.0f64, f64::max);
    outcome(worst <= 1e-6, format!("max relative discrepancy {worst:.2e}"))
}

/// Weighted sup growth of itR(it, A) for A = [1].
fn negative_m1() -> Outcome {
    let op = SectorialOperator::scalar(c(1.0)).unwrap();
    let ts = [1e2, 1e3, 1e4, 1e5];
    let growing = negative_test_m1(&op, 2.0, 4.0, &ts).unwrap();
    let flat = negative_test_m1(&op, 2.0, 2.0, &ts).unwrap();
    outcome(
        (growing.slope - 0.25).abs() <= 0.05 && flat.bounded(),
        format!("slope {:.4} (q=2, theta=4); variation {:.2e} (q=theta=2)", growing.slope, flat.variation),
    )
}

fn random_diagonals(seed: u64) -> OperatorFamily {
    let mut rng = stream(seed, 0);
    let members = rng.random_range(2..6);
    let diags: Vec<Vec<Complex64>> = (0..members).map(|_| (0..3).map(|_| complex_normal(&mut rng)).collect()).collect();
    OperatorFamily::diagonals(&diags).unwrap()
}

/// Estimator anchors, properties (b)–(e) on random diagonal families and Kahane.
fn rbound_suite() -> Outcome {
    let id = OperatorFamily::scalars(&[c(1.0)], 3).unwrap();
    let one = estimate_r_bound(&id, 2.0, 200, 2, 1).unwrap().value;
    let pair = OperatorFamily::scalars(&[c(1.0), c(2.0)], 3).unwrap();
    let two = estimate_r_bound(&pair, 2.0, 200, 4, 1).unwrap().value;
    let mut props = true;
    for s in 0..20u64 {
        let (f1, f2) = (random_diagonals(2 * s), random_diagonals(2 * s + 1));
        let e = estimate_r_bound(&f1, 2.0, 200, 4, s).unwrap();
        // (b) domination of the sup norm, (c) Hilbert equality at p = 2
        props &= e.value >= e.sup_norm * 0.95 && (e.value - e.sup_norm).abs() <= 0.05 * e.sup_norm;
        let calc = check_calculus_d_e(&f1, &f2, 2.0, 200, s).unwrap();
        props &= calc.sum_pass && calc.product_pass;
    }
    let mut kahane = true;
    let mut worst = [0.0f64; 2];
    for len in 1..=10usize {
        let mut rng = stream(77, len as u64);
        let vectors: Vec<CVector> =
            (0..len).map(|_| CVector::from_iterator(3, (0..3).map(|_| complex_normal(&mut rng)))).collect();
        let betas: Vec<Complex64> = (0..len).map(|_| complex_normal(&mut rng)).collect();
        let complex_alphas: Vec<Complex64> = betas
            .iter()
            .map(|b| Complex64::from_polar(b.norm() * rng.random_range(0.0..=1.0), rng.random_range(0.0..6.3)))
            .collect();
        let real_betas: Vec<Complex64> = betas.iter().map(|b| c(b.re)).collect();
        let real_alphas: Vec<Complex64> = real_betas.iter().map(|b| c(b.re * rng.random_range(-1.0..=1.0))).collect();
        for p in [1.0, 2.0, 3.0] {
            let k = check_kahane(&complex_alphas, &betas, &vectors, p).unwrap();
            let r = check_kahane(&real_alphas, &real_betas, &vectors, p).unwrap();
            kahane &= k.pass && k.constant == 2.0 && r.pass && r.constant == 1.0;
            worst[0] = worst[0].max(k.ratio);
            worst[1] = worst[1].max(r.ratio);
        }
    }
    outcome(
        one == 1.0 && (two - 2.0).abs() <= 0.1 && props && kahane,
        format!(
            "R({{I}}) = {one}, R({{I,2I}}) = {two:.4}, (b)-(e) on 20 families: {props}, Kahane worst ratio {:.3} (complex), {:.3} (real)",
            worst[0], worst[1]
        ),
    )
}

/// Parabolic coefficient condition on the fading-memory data and on b0 = 0.
fn conditions() -> Outcome {
    let report = check_condition_4_1(
        &ParabolicCoefficients::fading_memory(1.0, 1.0).unwrap(),
        fmlab::sectorial::DEFAULT_PHI,
        &default_xi_sample(1),
        1e3,
    )
    .unwrap();
    let cb = report.constant("C_b").unwrap();
    let out = scratch("conditions");
    let args = ["check", "--problem", "parabolic", "--a1", "exp(m=1)", "--b1", "exp(m=1)", "--b0", "0"];
    let (code, text) = fmlab(&args, &out, 0);
    let names_item = text.lines().any(|l| l.contains("(1)") && l.contains("FAIL"));
    outcome(
        report.overall && (cb - 1.0).abs() <= 0.01 && code == 2 && names_item,
        format!(
            "fading memory passes: {}, C_b = {cb:.6}; b0 = 0 exit code {code}, names item (1): {names_item}",
            report.overall
        ),
    )
}

/// Thread-count independence of CSVs, caching speedup and total runtime.
fn determinism_and_performance(suite_start: Instant) -> Outcome {
    let runs: [&[&str]; 5] = [
        &["demo-fading-memory", "--ensemble", "8", "--n", "512"],
        &["solve-parabolic", "--a1", "exp(m=1)", "--b1", "exp(m=2)", "--n", "2048"],
        &["rbound", "--family", "diag(1, 2i; 0.5, 1+i; 0.1, 0.3)", "--draw-size", "10", "--trials", "300"],
        &["demo-diffusion", "--n", "512"],
        &["estimate-norm", "--symbol", "m3", "--a1", "exp(m=1)", "--n", "512"],
    ];
    let mut identical = true;
    for args in runs {
        let mut csvs = Vec::new();
        for threads in [1usize, 4] {
            let out = scratch(&format!("det-{}-{threads}", args[0]));
            let (code, text) = fmlab(args, &out, threads);
            assert_eq!(code, 0, "{args:?}: {text}");
            csvs.push(std::fs::read(out.join(format!("{}.csv", args[0]))).unwrap());
        }
        identical &= csvs[0] == csvs[1];
    }

    let time = |caching: bool| -> Duration {
        let mut p = FadingMemoryParams::with_rates(1.0, 1.0, 1.0, 1024).unwrap();
        p.ensemble_size = 4;
        p.caching = caching;
        let t = Instant::now();
        demo_fading_memory(&p).unwrap();
        t.elapsed()
    };
    let cached = time(true);
    let uncached = time(false);
    let speedup = uncached.as_secs_f64() / cached.as_secs_f64();
    let total = suite_start.elapsed().as_secs_f64();
    outcome(
        identical && speedup >= 3.0 && total < 300.0,
        format!("CSVs identical across 1 and 4 threads: {identical}; caching speedup {speedup:.1}x; suite time {total:.1} s"),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let start = Instant::now();
    let criteria: [Criterion; 9] = [
        ("transform fidelity", transform_fidelity),
        ("discrete analysis core", discrete_core),
        ("manufactured solutions", manufactured),
        ("coercive estimate", coercive),
        ("Sobolev estimate", sobolev),
        ("dual-path Cauchy", dual_path),
        ("negative m1 result", negative_m1),
        ("R-boundedness suite", rbound_suite),
        ("condition checkers", conditions),
    ];
    let mut failures = 0;
    let mut report = |i: usize, name: &str, o: Outcome, secs: f64| {
        failures += usize::from(!o.pass);
        println!("criterion {i:>2} {:<4} {name}: {} [{secs:.1} s]", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    };
    for (i, (name, run)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let o = run();
        report(i + 1, name, o, t.elapsed().as_secs_f64());
    }
    let t = Instant::now();
    let o = determinism_and_performance(start);
    report(10, "determinism and performance", o, t.elapsed().as_secs_f64());
    println!("acceptance: {} of 10 criteria passed", 10 - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
