//! Executable hypothesis checks: the gap condition, the elliptic and
//! parabolic coefficient conditions, and weighted Mikhlin functionals.
//!
//! Every infimum or supremum is taken over a finite frequency sample and
//! reported together with the frequency that attains it.

use std::f64::consts::PI;
use std::fmt;
use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::linalg::{op_norm, CMatrix};
use crate::multiplier::{MultiplierSymbol, ScalarSymbol};
use crate::rbound::{estimate_r_bound, OperatorFamily};
use crate::sectorial::{log_spaced, Sector};

/// Quantities at or below this are treated as zero by the positivity items.
pub const POSITIVITY_TOL: f64 = 1e-8;

/// Lower edge of the tail used for `lim inf` items.
pub const DEFAULT_TAIL_THRESHOLD: f64 = 1e3;

/// A tail supremum counts as divergent when the outermost decade exceeds the
/// previous one by this factor.
const DIVERGENCE_GROWTH: f64 = 1.01;

/// Coefficients of `Σ (c_kj + a_kj∗)∂_k∂_j u`-type elliptic equations:
/// constants `c`, kernels `a` (row-major, d×d), `b₀` and `b₁`.
#[derive(Debug, Clone, PartialEq)]
pub struct EllipticCoefficients {
    pub c: CMatrix,
    pub a: Vec<Kernel>,
    pub b0: Complex64,
    pub b1: Kernel,
}

impl EllipticCoefficients {
    pub fn new(c: CMatrix, a: Vec<Kernel>, b0: Complex64, b1: Kernel) -> Result<Self> {
        let d = c.nrows();
        if !(1..=2).contains(&d) || c.ncols() != d {
            return Err(Error::invalid(format!("c must be a 1×1 or 2×2 matrix, got {}×{}", c.nrows(), c.ncols())));
        }
        if a.len() != d * d {
            return Err(Error::DimensionMismatch { expected: d * d, got: a.len() });
        }
        if let Some(k) = a.iter().chain(std::iter::once(&b1)).find(|k| k.dim() != d) {
            return Err(Error::DimensionMismatch { expected: d, got: k.dim() });
        }
        Ok(Self { c, a, b0, b1 })
    }

    /// `c = I`, zero kernels, `b₀ = 1`: the realized operator is `−Δu + Au`.
    pub fn constant_laplacian(d: usize) -> Self {
        Self {
            c: CMatrix::identity(d, d),
            a: vec![Kernel::zero(d); d * d],
            b0: Complex64::new(1.0, 0.0),
            b1: Kernel::zero(d),
        }
    }

    pub fn dim(&self) -> usize {
        self.c.nrows()
    }

    /// `b₀ + b̂₁(ξ)`.
    pub fn b_symbol(&self, xi: &[f64]) -> Complex64 {
        self.b0 + self.b1.transform(xi)
    }

    /// `μ(ξ) = 1/(b₀ + b̂₁(ξ))`.
    pub fn mu(&self, xi: &[f64]) -> Complex64 {
        1.0 / self.b_symbol(xi)
    }

    pub fn mu_gradient(&self, xi: &[f64], axis: usize) -> Complex64 {
        let mu = self.mu(xi);
        -mu * mu * self.b1.transform_derivative(xi, &unit(self.dim(), axis)).expect("valid multi-index")
    }

    /// `N(ξ) = Σ (c_kj + â_kj(ξ)) ξ_k ξ_j`.
    pub fn n_symbol(&self, xi: &[f64]) -> Complex64 {
        let d = self.dim();
        let mut s = Complex64::new(0.0, 0.0);
        for k in 0..d {
            for j in 0..d {
                s += (self.c[(k, j)] + self.a[k * d + j].transform(xi)) * xi[k] * xi[j];
            }
        }
        s
    }

    pub fn n_symbol_gradient(&self, xi: &[f64], axis: usize) -> Complex64 {
        let d = self.dim();
        let e = unit(d, axis);
        let mut s = Complex64::new(0.0, 0.0);
        for k in 0..d {
            for j in 0..d {
                let kern = &self.a[k * d + j];
                let coeff = self.c[(k, j)] + kern.transform(xi);
                let dcoeff = kern.transform_derivative(xi, &e).expect("valid multi-index");
                let dk = if k == axis { 1.0 } else { 0.0 };
                let dj = if j == axis { 1.0 } else { 0.0 };
                s += dcoeff * xi[k] * xi[j] + coeff * (dk * xi[j] + xi[k] * dj);
            }
        }
        s
    }

    /// `η(ξ) = N(ξ)/(b₀ + b̂₁(ξ))`.
    pub fn eta(&self, xi: &[f64]) -> Complex64 {
        self.n_symbol(xi) * self.mu(xi)
    }

    /// Smallest exponential rate among the kernels, if any kernel is nonzero.
    pub fn min_decay_rate(&self) -> Option<f64> {
        self.a.iter().chain(std::iter::once(&self.b1)).filter_map(Kernel::min_decay_rate).reduce(f64::min)
    }
}

fn unit(d: usize, axis: usize) -> Vec<u8> {
    (0..d).map(|a| u8::from(a == axis)).collect()
}

/// Coefficients of `a₀u' + a₁∗u' + b₀Au + b₁∗Au = f` on the line.
#[derive(Debug, Clone, PartialEq)]
pub struct ParabolicCoefficients {
    pub a0: Complex64,
    pub a1: Kernel,
    pub b0: Complex64,
    pub b1: Kernel,
}

impl ParabolicCoefficients {
    pub fn new(a0: Complex64, a1: Kernel, b0: Complex64, b1: Kernel) -> Result<Self> {
        for k in [&a1, &b1] {
            if k.dim() != 1 {
                return Err(Error::DimensionMismatch { expected: 1, got: k.dim() });
            }
        }
        Ok(Self { a0, a1, b0, b1 })
    }

    /// Kernel-free coefficients.
    pub fn constant(a0: Complex64, b0: Complex64) -> Self {
        Self { a0, a1: Kernel::zero(1), b0, b1: Kernel::zero(1) }
    }

    /// Fading-memory coefficients `a₀ = b₀ = 1`, `a₁ = e^{-m|t|}`, `b₁ = e^{-k|t|}`.
    pub fn fading_memory(m: f64, k: f64) -> Result<Self> {
        Self::new(
            Complex64::new(1.0, 0.0),
            Kernel::exponential(1, m)?,
            Complex64::new(1.0, 0.0),
            Kernel::exponential(1, k)?,
        )
    }

    pub fn mu(&self, xi: f64) -> Complex64 {
        1.0 / (self.b0 + self.b1.transform(&[xi]))
    }

    pub fn mu_derivative(&self, xi: f64) -> Complex64 {
        let mu = self.mu(xi);
        -mu * mu * self.b1.transform_derivative(&[xi], &[1]).expect("valid multi-index")
    }

    /// `η(ξ) = iξ(a₀ + â₁(ξ))μ(ξ)`.
    pub fn eta(&self, xi: f64) -> Complex64 {
        Complex64::new(0.0, xi) * (self.a0 + self.a1.transform(&[xi])) * self.mu(xi)
    }

    pub fn eta_derivative(&self, xi: f64) -> Complex64 {
        let i = Complex64::new(0.0, 1.0);
        let a = self.a0 + self.a1.transform(&[xi]);
        let da = self.a1.transform_derivative(&[xi], &[1]).expect("valid multi-index");
        let mu = self.mu(xi);
        i * a * mu + i * xi * da * mu + i * xi * a * self.mu_derivative(xi)
    }

    pub fn min_decay_rate(&self) -> Option<f64> {
        [&self.a1, &self.b1].into_iter().filter_map(|k| k.min_decay_rate()).reduce(f64::min)
    }
}

/// `1/q − 1/p ≤ 2/d` for `1 < q ≤ p < ∞`.
pub fn check_gap(q: f64, p: f64, d: usize) -> Result<bool> {
    if !(q > 1.0 && q.is_finite() && p.is_finite()) {
        return Err(Error::invalid(format!("exponents must satisfy 1 < q ≤ p < ∞, got q={q}, p={p}")));
    }
    if q > p {
        return Err(Error::invalid(format!("q ≤ p violated: q={q}, p={p}")));
    }
    if d == 0 {
        return Err(Error::invalid("dimension must be positive"));
    }
    Ok(1.0 / q - 1.0 / p <= 2.0 / d as f64)
}

/// Radial log grid `r ∈ [lo, hi]` with `per_decade` points per decade.
/// For `d = 1` both signs are taken; for `d = 2` each radius is paired with
/// `directions` equally spaced unit vectors.
pub fn xi_sample(d: usize, lo: f64, hi: f64, per_decade: usize, directions: usize) -> Vec<Vec<f64>> {
    let decades = (hi / lo).log10();
    let count = ((decades * per_decade as f64).round() as usize).max(1) + 1;
    let radii = log_spaced(lo, hi, count);
    match d {
        1 => radii.iter().rev().map(|r| vec![-r]).chain(radii.iter().map(|r| vec![*r])).collect(),
        _ => {
            let mut out = Vec::with_capacity(radii.len() * directions);
            for r in &radii {
                for j in 0..directions {
                    let theta = 2.0 * PI * j as f64 / directions as f64;
                    out.push(vec![r * theta.cos(), r * theta.sin()]);
                }
            }
            out
        }
    }
}

/// 400 points per decade on `|ξ| ∈ [1e-6, 1e6]`; 16 directions in `d = 2`.
pub fn default_xi_sample(d: usize) -> Vec<Vec<f64>> {
    xi_sample(d, 1e-6, 1e6, 400, 16)
}

/// Coarser sample for operator-valued sweeps.
pub fn coarse_xi_sample(d: usize) -> Vec<Vec<f64>> {
    xi_sample(d, 1e-6, 1e6, 40, 8)
}

fn norm(xi: &[f64]) -> f64 {
    xi.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionItem {
    pub label: String,
    pub pass: bool,
    /// Measured extremal constant.
    pub constant: f64,
    /// Frequency attaining it.
    pub worst_xi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionReport {
    pub problem: String,
    pub phi: f64,
    pub items: Vec<ConditionItem>,
    pub overall: bool,
    /// Named constants (`C_b`, `C`, `C0`, …).
    pub constants: Vec<(String, f64)>,
}

impl ConditionReport {
    fn assemble(problem: &str, phi: f64, items: Vec<ConditionItem>, constants: Vec<(String, f64)>) -> Self {
        let overall = items.iter().all(|i| i.pass);
        Self { problem: problem.into(), phi, items, overall, constants }
    }

    pub fn failing_items(&self) -> Vec<String> {
        self.items.iter().filter(|i| !i.pass).map(|i| i.label.clone()).collect()
    }

    pub fn constant(&self, name: &str) -> Option<f64> {
        self.constants.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    /// Columns `item,pass,constant,worst_xi`; `worst_xi` components are `;`-separated.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "item,pass,constant,worst_xi")?;
        for i in &self.items {
            let xi: Vec<String> = i.worst_xi.iter().map(|x| format!("{x:e}")).collect();
            writeln!(out, "\"{}\",{},{:e},{}", i.label, i.pass, i.constant, xi.join(";"))?;
        }
        Ok(())
    }
}

impl fmt::Display for ConditionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "condition check: {} (phi = {})", self.problem, self.phi)?;
        let width = self.items.iter().map(|i| i.label.len()).max().unwrap_or(0);
        for i in &self.items {
            let xi: Vec<String> = i.worst_xi.iter().map(|x| format!("{x:.4e}")).collect();
            writeln!(
                f,
                "  {:<width$}  {}  constant = {:<12.6e}  at xi = [{}]",
                i.label,
                if i.pass { "PASS" } else { "FAIL" },
                i.constant,
                xi.join(", ")
            )?;
        }
        for (name, v) in &self.constants {
            writeln!(f, "  {name} = {v:.6e}")?;
        }
        write!(f, "  overall: {}", if self.overall { "PASS" } else { "FAIL" })
    }
}

/// Extremum of `value` over `sample`; ties keep the earliest sample point.
fn extremum(sample: &[Vec<f64>], values: &[f64], want_max: bool) -> (f64, Vec<f64>) {
    let mut best = if want_max { f64::NEG_INFINITY } else { f64::INFINITY };
    let mut at = 0;
    for (i, &v) in values.iter().enumerate() {
        let better = if v.is_nan() {
            true
        } else if want_max {
            v > best
        } else {
            v < best
        };
        if better {
            best = v;
            at = i;
            if v.is_nan() {
                break;
            }
        }
    }
    (best, sample.get(at).cloned().unwrap_or_default())
}

/// True when the supremum over the outermost decade of `|ξ|` exceeds the
/// supremum over the decade below it by more than 1%.
fn tail_grows(sample: &[Vec<f64>], values: &[f64]) -> bool {
    let rmax = sample.iter().map(|x| norm(x)).fold(0.0, f64::max);
    let (mut outer, mut inner) = (0.0f64, 0.0f64);
    for (x, &v) in sample.iter().zip(values) {
        let r = norm(x);
        if r >= rmax / 10.0 {
            outer = outer.max(v);
        } else if r >= rmax / 100.0 {
            inner = inner.max(v);
        }
    }
    outer > DIVERGENCE_GROWTH * inner && outer > 1e-12
}

fn bounded_item(label: String, sample: &[Vec<f64>], values: &[f64]) -> ConditionItem {
    let (sup, at) = extremum(sample, values, true);
    ConditionItem { label, pass: sup.is_finite() && !tail_grows(sample, values), constant: sup, worst_xi: at }
}

fn sector_item(
    label: &str,
    sector: Sector,
    sample: &[Vec<f64>],
    symbol: impl Fn(&[f64]) -> Complex64 + Sync,
) -> ConditionItem {
    let args: Vec<(f64, bool)> = sample
        .par_iter()
        .map(|x| {
            let z = symbol(x);
            (if z == Complex64::new(0.0, 0.0) { 0.0 } else { z.arg().abs() }, z.is_finite() && sector.contains(z))
        })
        .collect();
    let angles: Vec<f64> = args.iter().map(|a| a.0).collect();
    let (worst, at) = extremum(sample, &angles, true);
    ConditionItem { label: label.into(), pass: args.iter().all(|a| a.1), constant: worst, worst_xi: at }
}

/// All `β ∈ {0,1}^d`.
pub fn multi_indices(d: usize) -> Vec<Vec<u8>> {
    (0..1usize << d).map(|m| (0..d).map(|a| ((m >> a) & 1) as u8).collect()).collect()
}

fn format_alpha(alpha: &[u8]) -> String {
    let parts: Vec<String> = alpha.iter().map(u8::to_string).collect();
    format!("({})", parts.join(","))
}

/// Evaluates the four items of the elliptic coefficient condition on `sample`.
pub fn check_condition_3_1(coeffs: &EllipticCoefficients, phi: f64, sample: &[Vec<f64>]) -> Result<ConditionReport> {
    let sector = Sector::new(phi)?;
    let d = coeffs.dim();
    if let Some(x) = sample.iter().find(|x| x.len() != d || norm(x) == 0.0) {
        return Err(Error::invalid(format!("frequency sample must be nonzero points of R^{d}, found {x:?}")));
    }
    let b_abs: Vec<f64> = sample.par_iter().map(|x| coeffs.b_symbol(x).norm()).collect();
    let (cb, cb_at) = extremum(sample, &b_abs, false);
    let ell: Vec<f64> = sample.par_iter().map(|x| coeffs.n_symbol(x).norm() / norm(x).powi(2)).collect();
    let (ce, ce_at) = extremum(sample, &ell, false);

    let mut items = vec![
        ConditionItem {
            label: "(1) C_b = inf |b0 + b1^| > 0".into(),
            pass: cb > POSITIVITY_TOL,
            constant: cb,
            worst_xi: cb_at,
        },
        ConditionItem {
            label: "(2) |N(xi)| >= C |xi|^2".into(),
            pass: ce > POSITIVITY_TOL,
            constant: ce,
            worst_xi: ce_at,
        },
        sector_item("(3) eta(xi) in S_phi", sector, sample, |x| coeffs.eta(x)),
    ];
    let mut constants = vec![("C_b".to_string(), cb), ("C".to_string(), ce)];

    let betas = multi_indices(d);
    let weighted = |k: &Kernel, beta: &[u8]| -> Result<Vec<f64>> {
        let order = beta.iter().map(|&b| b as i32).sum::<i32>();
        sample.par_iter().map(|x| Ok(norm(x).powi(order) * k.transform_derivative(x, beta)?.norm())).collect()
    };
    let mut c0 = 0.0f64;
    for (idx, k) in coeffs.a.iter().enumerate() {
        for beta in &betas {
            let vals = weighted(k, beta)?;
            let item = bounded_item(
                format!("(4) |xi|^|b| |D^b a^_{}{}| <= C0, b = {}", idx / d + 1, idx % d + 1, format_alpha(beta)),
                sample,
                &vals,
            );
            c0 = c0.max(item.constant);
            items.push(item);
        }
    }
    let mut c1 = 0.0f64;
    for beta in &betas {
        let vals = weighted(&coeffs.b1, beta)?;
        let item = bounded_item(format!("(4) |xi|^|b| |D^b b1^| <= C1, b = {}", format_alpha(beta)), sample, &vals);
        c1 = c1.max(item.constant);
        items.push(item);
    }
    constants.push(("C0".into(), c0));
    constants.push(("C1".into(), c1));
    Ok(ConditionReport::assemble("elliptic", phi, items, constants))
}

/// Evaluates the three items of the parabolic coefficient condition; the
/// `lim inf` of item (1) is the infimum over `|ξ| >= tail_threshold`.
pub fn check_condition_4_1(
    coeffs: &ParabolicCoefficients,
    phi: f64,
    sample: &[Vec<f64>],
    tail_threshold: f64,
) -> Result<ConditionReport> {
    let sector = Sector::new(phi)?;
    if let Some(x) = sample.iter().find(|x| x.len() != 1 || x[0] == 0.0) {
        return Err(Error::invalid(format!("frequency sample must be nonzero reals, found {x:?}")));
    }
    let tail: Vec<Vec<f64>> = sample.iter().filter(|x| x[0].abs() >= tail_threshold).cloned().collect();
    let a_abs: Vec<f64> = tail.par_iter().map(|x| (coeffs.a0 + coeffs.a1.transform(x)).norm()).collect();
    let (a_inf, a_at) = extremum(&tail, &a_abs, false);
    let b_abs: Vec<f64> = sample.par_iter().map(|x| (coeffs.b0 + coeffs.b1.transform(x)).norm()).collect();
    let (cb, cb_at) = extremum(sample, &b_abs, false);

    let mut items = vec![
        ConditionItem {
            label: format!("(1) lim inf |a0 + a1^| > 0 (|xi| >= {tail_threshold:e})"),
            pass: !tail.is_empty() && a_inf > POSITIVITY_TOL,
            constant: a_inf,
            worst_xi: a_at,
        },
        ConditionItem {
            label: "(1) C_b = inf |b0 + b1^| > 0".into(),
            pass: cb > POSITIVITY_TOL,
            constant: cb,
            worst_xi: cb_at,
        },
        sector_item("(2) i xi (a1^ + a0)/(b1^ + b0) in S_phi", sector, sample, |x| coeffs.eta(x[0])),
    ];
    let mut constants = vec![("C_b".to_string(), cb), ("tail_inf_a".to_string(), a_inf)];
    let names = [("C0", "|a1^|"), ("C1", "|xi a1^'|"), ("C2", "|b1^|"), ("C3", "|xi b1^'|")];
    for (i, (name, what)) in names.iter().enumerate() {
        let k = if i < 2 { &coeffs.a1 } else { &coeffs.b1 };
        let vals: Vec<f64> = sample
            .par_iter()
            .map(|x| {
                if i % 2 == 0 {
                    k.transform(x).norm()
                } else {
                    (x[0] * k.transform_derivative(x, &[1]).expect("valid multi-index")).norm()
                }
            })
            .collect();
        let item = bounded_item(format!("(3) {what} <= {name}"), sample, &vals);
        constants.push((name.to_string(), item.constant));
        items.push(item);
    }
    Ok(ConditionReport::assemble("parabolic", phi, items, constants))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MikhlinEntry {
    pub alpha: Vec<u8>,
    /// `sup |ξ|^{|α| + d(1/q − 1/p)} ‖D^α M(ξ)‖` over the sample.
    pub sup: f64,
    pub worst_xi: Vec<f64>,
    /// The supremum is still growing at the edge of the sample.
    pub diverging: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MikhlinReport {
    pub q: f64,
    pub p: f64,
    pub d: usize,
    pub per_alpha: Vec<MikhlinEntry>,
    pub overall_sup: f64,
}

impl MikhlinReport {
    fn assemble(q: f64, p: f64, d: usize, per_alpha: Vec<MikhlinEntry>) -> Self {
        let overall_sup = per_alpha.iter().map(|e| e.sup).fold(0.0, |a: f64, b| if b.is_nan() { b } else { a.max(b) });
        Self { q, p, d, per_alpha, overall_sup }
    }

    pub fn entry(&self, alpha: &[u8]) -> Option<&MikhlinEntry> {
        self.per_alpha.iter().find(|e| e.alpha == alpha)
    }

    pub fn diverging(&self) -> bool {
        self.per_alpha.iter().any(|e| e.diverging)
    }

    pub fn passes(&self) -> bool {
        self.overall_sup.is_finite() && !self.diverging()
    }
}

impl fmt::Display for MikhlinReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "mikhlin functional (q = {}, p = {}, d = {})", self.q, self.p, self.d)?;
        for e in &self.per_alpha {
            let xi: Vec<String> = e.worst_xi.iter().map(|x| format!("{x:.4e}")).collect();
            writeln!(
                f,
                "  alpha = {:<6} sup = {:<12.6e} at xi = [{}]{}",
                format_alpha(&e.alpha),
                e.sup,
                xi.join(", "),
                if e.diverging { "  DIVERGING" } else { "" }
            )?;
        }
        write!(f, "  overall sup = {:.6e}  {}", self.overall_sup, if self.passes() { "PASS" } else { "FAIL" })
    }
}

/// Weight exponent `d(1/q − 1/p)`.
fn weight_exponent(q: f64, p: f64, d: usize) -> Result<f64> {
    if !(q > 1.0 && p >= q && p.is_finite()) {
        return Err(Error::invalid(format!("exponents must satisfy 1 < q ≤ p < ∞, got q={q}, p={p}")));
    }
    Ok(d as f64 * (1.0 / q - 1.0 / p))
}

fn check_sample(sample: &[Vec<f64>], d: usize) -> Result<()> {
    match sample.iter().find(|x| x.len() != d || norm(x) == 0.0) {
        Some(x) => Err(Error::invalid(format!("frequency sample must be nonzero points of R^{d}, found {x:?}"))),
        None if sample.is_empty() => Err(Error::invalid("empty frequency sample")),
        None => Ok(()),
    }
}

/// Central-difference step used when no closed-form derivative exists.
pub fn difference_step(xi: &[f64]) -> f64 {
    1e-4 * norm(xi).max(1.0)
}

/// Nested central differences of `f` over the axes where `alpha` is 1.
fn nested_difference<T: Differenced>(f: &dyn Fn(&[f64]) -> Result<T>, xi: &[f64], alpha: &[u8]) -> Result<T> {
    let Some(axis) = alpha.iter().position(|&a| a == 1) else {
        return f(xi);
    };
    let h = difference_step(xi);
    let mut rest = alpha.to_vec();
    rest[axis] = 0;
    let mut plus = xi.to_vec();
    plus[axis] += h;
    let mut minus = xi.to_vec();
    minus[axis] -= h;
    Ok(nested_difference(f, &plus, &rest)?.quotient(nested_difference(f, &minus, &rest)?, 2.0 * h))
}

trait Differenced: Sized {
    /// `(self − other)/h`.
    fn quotient(self, other: Self, h: f64) -> Self;
}

impl Differenced for Complex64 {
    fn quotient(self, other: Self, h: f64) -> Self {
        (self - other) / h
    }
}

impl Differenced for CMatrix {
    fn quotient(self, other: Self, h: f64) -> Self {
        (self - other) / Complex64::new(h, 0.0)
    }
}

fn entries(
    sample: &[Vec<f64>],
    d: usize,
    w: f64,
    eval: impl Fn(&[f64], &[u8]) -> Result<f64> + Sync,
) -> Result<Vec<MikhlinEntry>> {
    multi_indices(d)
        .into_iter()
        .map(|alpha| {
            let order = alpha.iter().map(|&a| a as f64).sum::<f64>();
            let vals: Vec<f64> =
                sample.par_iter().map(|x| Ok(norm(x).powf(order + w) * eval(x, &alpha)?)).collect::<Result<_>>()?;
            let (sup, at) = extremum(sample, &vals, true);
            let diverging = !sup.is_finite() || tail_grows(sample, &vals);
            Ok(MikhlinEntry { alpha, sup, worst_xi: at, diverging })
        })
        .collect()
}

/// Weighted Mikhlin functional of a scalar symbol. Uses the symbol's
/// closed-form derivatives when present, central differences otherwise.
pub fn mikhlin_functional_scalar(psi: &ScalarSymbol, q: f64, p: f64, sample: &[Vec<f64>]) -> Result<MikhlinReport> {
    let d = psi.space_dim();
    let w = weight_exponent(q, p, d)?;
    check_sample(sample, d)?;
    let value = |x: &[f64]| -> Result<Complex64> {
        let v = psi.value(x);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Symbol { xi: x.to_vec(), source: Box::new(Error::invalid("non-finite symbol value")) })
        }
    };
    let per_alpha = entries(sample, d, w, |x, alpha| {
        let z = match psi.scalar_derivative(x, alpha) {
            Some(z) => z,
            None => nested_difference(&value, x, alpha)?,
        };
        Ok(z.norm())
    })?;
    Ok(MikhlinReport::assemble(q, p, d, per_alpha))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MikhlinMode {
    /// Supremum of weighted operator norms.
    NormSup,
    /// Monte-Carlo R-bound of the weighted family on at most 64 frequencies.
    RBoundSample { trials: usize, draw_size: usize, seed: u64 },
}

fn symbol_derivative(m: &dyn MultiplierSymbol, x: &[f64], alpha: &[u8]) -> Result<CMatrix> {
    match m.derivative(x, alpha) {
        Some(r) => r,
        None => nested_difference(&|y: &[f64]| m.evaluate(y), x, alpha),
    }
}

/// Weighted Mikhlin functional of an operator-valued symbol.
pub fn mikhlin_functional_operator(
    m: &dyn MultiplierSymbol,
    q: f64,
    p: f64,
    sample: &[Vec<f64>],
    mode: MikhlinMode,
) -> Result<MikhlinReport> {
    let d = m.space_dim();
    let w = weight_exponent(q, p, d)?;
    check_sample(sample, d)?;
    let per_alpha = match mode {
        MikhlinMode::NormSup => entries(sample, d, w, |x, alpha| Ok(op_norm(&symbol_derivative(m, x, alpha)?)))?,
        MikhlinMode::RBoundSample { trials, draw_size, seed } => {
            let stride = sample.len().div_ceil(64);
            let sub: Vec<Vec<f64>> = sample.iter().step_by(stride).cloned().collect();
            multi_indices(d)
                .into_iter()
                .map(|alpha| {
                    let order = alpha.iter().map(|&a| a as f64).sum::<f64>();
                    let members: Vec<CMatrix> = sub
                        .par_iter()
                        .map(|x| Ok(symbol_derivative(m, x, &alpha)? * Complex64::new(norm(x).powf(order + w), 0.0)))
                        .collect::<Result<_>>()?;
                    let family = OperatorFamily::new(members, sub.clone())?;
                    let est = estimate_r_bound(&family, 2.0, trials, draw_size.min(family.len() * 4), seed)?;
                    let norms: Vec<f64> = family.members().iter().map(op_norm).collect();
                    let (_, at) = extremum(&sub, &norms, true);
                    Ok(MikhlinEntry { alpha, sup: est.value, worst_xi: at, diverging: !est.value.is_finite() })
                })
                .collect::<Result<_>>()?
        }
    };
    Ok(MikhlinReport::assemble(q, p, d, per_alpha))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    use crate::multiplier::{cauchy_symbol, elliptic_symbol, CauchyTerm, ConstantSymbol};
    use crate::sectorial::SectorialOperator;
    use proptest::prelude::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn gap_examples() {
        assert!(check_gap(2.0, 2.0, 1).unwrap());
        assert!(check_gap(2.0, 4.0, 1).unwrap());
        assert!(!check_gap(1.1, 10.0, 30).unwrap());
        assert!(check_gap(4.0, 2.0, 1).is_err());
        assert!(check_gap(1.0, 2.0, 1).is_err());
    }

    #[test]
    fn elliptic_condition_examples() {
        let s = default_xi_sample(1);
        let mut k = EllipticCoefficients::constant_laplacian(1);
        let r = check_condition_3_1(&k, PI / 4.0, &s).unwrap();
        assert!(r.overall, "{r}");
        assert!((r.constant("C_b").unwrap() - 1.0).abs() < 1e-12);
        assert!((r.constant("C").unwrap() - 1.0).abs() < 1e-12);

        k.b1 = Kernel::exponential(1, 1.0).unwrap();
        let r = check_condition_3_1(&k, PI / 4.0, &s).unwrap();
        assert!(r.overall, "{r}");
        assert!((r.constant("C_b").unwrap() - 1.0).abs() < 1e-10);

        k.b0 = c(0.0);
        let r = check_condition_3_1(&k, PI / 4.0, &s).unwrap();
        assert!(!r.overall);
        assert!(r.failing_items()[0].starts_with("(1)"));
    }

    #[test]
    fn elliptic_condition_in_two_dimensions() {
        let mut k = EllipticCoefficients::constant_laplacian(2);
        k.a[0] = Kernel::gaussian(2, 1.0).unwrap();
        let r = check_condition_3_1(&k, PI / 4.0, &coarse_xi_sample(2)).unwrap();
        assert!(r.overall, "{r}");
        // an indefinite principal part fails ellipticity
        k.c[(1, 1)] = c(-1.0);
        let r = check_condition_3_1(&k, PI / 4.0, &coarse_xi_sample(2)).unwrap();
        assert!(!r.overall);
    }

    #[test]
    fn parabolic_condition_examples() {
        let s = default_xi_sample(1);
        let pure = ParabolicCoefficients::constant(c(1.0), c(1.0));
        let r = check_condition_4_1(&pure, PI / 2.0, &s, DEFAULT_TAIL_THRESHOLD).unwrap();
        assert!(r.overall, "{r}");

        let (m, k) = (1.5, 0.5);
        let fm = ParabolicCoefficients::fading_memory(m, k).unwrap();
        let r = check_condition_4_1(&fm, PI / 2.0, &s, DEFAULT_TAIL_THRESHOLD).unwrap();
        assert!(r.overall, "{r}");
        assert!((r.constant("C_b").unwrap() - 1.0).abs() < 1e-10);
        assert!((r.constant("C0").unwrap() - 2.0 / m).abs() < 1e-9);
        assert!((r.constant("C2").unwrap() - 2.0 / k).abs() < 1e-9);
        let r = check_condition_4_1(&fm, 1.4, &s, DEFAULT_TAIL_THRESHOLD).unwrap();
        assert!(!r.overall);
    }

    #[test]
    fn sign_changing_memory_stays_on_imaginary_axis() {
        let s = default_xi_sample(1);
        let k =
            ParabolicCoefficients::new(c(-1.0), Kernel::exponential(1, 1.0).unwrap(), c(1.0), Kernel::zero(1)).unwrap();
        let r = check_condition_4_1(&k, PI / 2.0, &s, DEFAULT_TAIL_THRESHOLD).unwrap();
        assert!(r.items[0].pass);
        assert!(r.items[2].pass);
        let r = check_condition_4_1(&k, PI / 2.0 - 0.01, &s, DEFAULT_TAIL_THRESHOLD).unwrap();
        assert!(!r.overall);
        assert_eq!(r.failing_items().len(), 1);
    }

    #[test]
    fn refinement_stability_of_constants() {
        let fm = ParabolicCoefficients::fading_memory(1.0, 1.0).unwrap();
        let a = check_condition_4_1(&fm, PI / 2.0, &xi_sample(1, 1e-6, 1e6, 100, 1), 1e3).unwrap();
        let b = check_condition_4_1(&fm, PI / 2.0, &xi_sample(1, 1e-6, 1e6, 400, 1), 1e3).unwrap();
        for ((n, x), (_, y)) in a.constants.iter().zip(&b.constants) {
            assert!((x - y).abs() <= 0.01 * y.abs().max(1e-300), "{n}: {x} vs {y}");
        }
    }

    #[test]
    fn scalar_mikhlin_examples() {
        let s = default_xi_sample(1);
        let one = ScalarSymbol::new("1", 1, 1, |_| c(1.0));
        let r = mikhlin_functional_scalar(&one, 2.0, 2.0, &s).unwrap();
        assert!((r.entry(&[0]).unwrap().sup - 1.0).abs() < 1e-12);
        assert!(r.entry(&[1]).unwrap().sup < 1e-6);
        assert!(r.passes());

        let psi =
            ScalarSymbol::new("x2/(1+x2)", 1, 1, |x| c(x[0] * x[0] / (1.0 + x[0] * x[0]))).with_derivative(|x, a| {
                let t = x[0];
                if a[0] == 0 {
                    c(t * t / (1.0 + t * t))
                } else {
                    c(2.0 * t / (1.0 + t * t).powi(2))
                }
            });
        let r = mikhlin_functional_scalar(&psi, 2.0, 2.0, &s).unwrap();
        assert!((r.entry(&[0]).unwrap().sup - 1.0).abs() < 1e-10);
        assert!((r.entry(&[1]).unwrap().sup - 0.5).abs() < 1e-5);
        assert!((r.overall_sup - 1.0).abs() < 1e-10);

        let grow = ScalarSymbol::new("|x|^0.3", 1, 1, |x| c(x[0].abs().powf(0.3)));
        let r = mikhlin_functional_scalar(&grow, 2.0, 2.0, &s).unwrap();
        assert!(r.entry(&[0]).unwrap().diverging);
        assert!(!r.passes());
    }

    #[test]
    fn weight_reduction_for_values() {
        let s = xi_sample(1, 1e-3, 1e3, 50, 1);
        let (q, p) = (2.0, 4.0);
        let w = 1.0 / q - 1.0 / p;
        let psi = ScalarSymbol::new("psi", 1, 1, |x| c(1.0 / (1.0 + x[0] * x[0])));
        let weighted = ScalarSymbol::new("s psi", 1, 1, move |x| c(x[0].abs().powf(w) / (1.0 + x[0] * x[0])));
        let a = mikhlin_functional_scalar(&psi, q, p, &s).unwrap();
        let b = mikhlin_functional_scalar(&weighted, q, q, &s).unwrap();
        let (ea, eb) = (a.entry(&[0]).unwrap(), b.entry(&[0]).unwrap());
        assert!((ea.sup - eb.sup).abs() <= 1e-14 * ea.sup);
        // first derivatives obey the product rule bound instead of equality
        let (da, db) = (a.entry(&[1]).unwrap().sup, b.entry(&[1]).unwrap().sup);
        assert!(db <= da + w * ea.sup + 1e-9);
    }

    #[test]
    fn operator_mikhlin_examples() {
        let s = coarse_xi_sample(1);
        let id = ConstantSymbol::identity(3, 1);
        let r = mikhlin_functional_operator(&id, 2.0, 2.0, &s, MikhlinMode::NormSup).unwrap();
        assert!((r.overall_sup - 1.0).abs() < 1e-12);

        let op = Arc::new(SectorialOperator::dirichlet_laplacian(3, PI, 0.0).unwrap());
        let sigma = elliptic_symbol(&EllipticCoefficients::constant_laplacian(1), op.clone());
        let ns = mikhlin_functional_operator(&sigma, 2.0, 2.0, &s, MikhlinMode::NormSup).unwrap();
        assert!(ns.passes(), "{ns}");
        let rb = mikhlin_functional_operator(
            &sigma,
            2.0,
            2.0,
            &s,
            MikhlinMode::RBoundSample { trials: 100, draw_size: 8, seed: 5 },
        )
        .unwrap();
        assert!(rb.overall_sup <= 2.0 * ns.overall_sup && rb.overall_sup >= 0.5 * ns.overall_sup, "{rb} vs {ns}");

        let it_r = cauchy_symbol(op, CauchyTerm::ItResolvent);
        let r = mikhlin_functional_operator(&it_r, 2.0, 4.0, &s, MikhlinMode::NormSup).unwrap();
        assert!(r.entry(&[0]).unwrap().diverging);
    }

    #[test]
    fn fading_memory_ratio_symbol_is_bounded() {
        let fm = ParabolicCoefficients::fading_memory(1.0, 1.0).unwrap();
        let b1 = fm.b1.clone();
        let psi = ScalarSymbol::new("b1/(1+b1)", 1, 1, move |x| {
            let b = b1.transform(x);
            b / (1.0 + b)
        });
        let r = mikhlin_functional_scalar(&psi, 2.0, 2.0, &default_xi_sample(1)).unwrap();
        assert!(r.passes(), "{r}");
    }

    proptest! {
        #[test]
        fn gap_is_monotone_in_p(q in 1.01f64..8.0, dp in 0.0f64..20.0, extra in 0.0f64..20.0, d in 1usize..40) {
            let p = q + dp;
            if check_gap(q, p + extra, d).unwrap() {
                prop_assert!(check_gap(q, p, d).unwrap());
            }
        }
    }
}
