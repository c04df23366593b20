//! End-to-end solves on the periodic box, coercive and Sobolev-type
//! estimate measurements, and the worked demos.

mod cauchy;
mod demos;

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;

pub use cauchy::{
    causal_pulse, negative_test_m1, semigroup_convolution, solve_cauchy, CauchyOptions, CauchySolution, M1Row, M1Table,
    NormPair,
};
pub use demos::{
    demo_diffusion_system, demo_fading_memory, DiffusionForcing, DiffusionParams, DiffusionReport, FadingMemoryParams,
    FadingMemoryReport, MemberRow, MAX_UNKNOWNS,
};

use crate::conditions::{
    check_condition_3_1, check_condition_4_1, check_gap, default_xi_sample, EllipticCoefficients,
    ParabolicCoefficients, DEFAULT_TAIL_THRESHOLD,
};
use crate::error::{Error, Result};
use crate::linalg::{CMatrix, CVector};
use crate::multiplier::{
    apply_multiplier, apply_multipliers, doe_symbol, elliptic_symbol, lp_norm, lp_norm_with, parabolic_symbols,
    wave_packet, DoeTerm, ENorm, Grid, GridFunction, MultiplierSymbol, ScalarSymbol, ZeroRule,
};
use crate::sectorial::SectorialOperator;

/// A solution with named derived terms.
#[derive(Debug, Clone)]
pub struct Solution {
    pub u: GridFunction,
    pub derived: BTreeMap<String, GridFunction>,
    /// Relative residual `‖Lu − f‖/‖f‖`; zero when `f = 0`.
    pub residual: f64,
    /// The `ξ = 0` mode of `f` was dropped because `A` is not invertible.
    pub mean_projected: bool,
}

impl Solution {
    pub fn derived(&self, name: &str) -> Option<&GridFunction> {
        self.derived.get(name)
    }
}

/// Norms of the four terms of the parabolic equation and of `f`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoerciveReport {
    pub norm_u_prime: f64,
    pub norm_conv_u_prime: f64,
    pub norm_au: f64,
    pub norm_conv_au: f64,
    pub norm_f: f64,
    /// Sum of the four term norms over `‖f‖`; `None` when `f = 0`.
    pub ratio_c: Option<f64>,
}

impl fmt::Display for CoerciveReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "|u'| = {:.6e}, |a1*u'| = {:.6e}, |Au| = {:.6e}, |b1*Au| = {:.6e}, |f| = {:.6e}, ratio_C = {}",
            self.norm_u_prime,
            self.norm_conv_u_prime,
            self.norm_au,
            self.norm_conv_au,
            self.norm_f,
            self.ratio_c.map_or("undefined".to_string(), |r| format!("{r:.6e}"))
        )
    }
}

/// `‖a − b‖/‖b‖`, or `‖a‖` when `b = 0`.
fn relative(a: &GridFunction, b: &GridFunction, p: f64, enorm: &ENorm) -> Result<f64> {
    let diff = lp_norm_with(&a.sub(b)?, p, enorm);
    let nb = lp_norm_with(b, p, enorm);
    Ok(if nb > 0.0 { diff / nb } else { diff })
}

type Coefficients = Box<dyn Fn(&[f64]) -> (Complex64, Complex64) + Send + Sync>;

/// Symbol `α(ξ)A + β(ξ)I`, the transform of the forward operators.
pub struct OperatorPolynomial {
    op: Arc<SectorialOperator>,
    space_dim: usize,
    coeffs: Coefficients,
}

impl OperatorPolynomial {
    pub fn new(
        op: Arc<SectorialOperator>,
        space_dim: usize,
        coeffs: impl Fn(&[f64]) -> (Complex64, Complex64) + Send + Sync + 'static,
    ) -> Self {
        Self { op, space_dim, coeffs: Box::new(coeffs) }
    }

    /// `(b₀ + b̂₁)A + N(ξ)`.
    pub fn elliptic(coeffs: &EllipticCoefficients, op: Arc<SectorialOperator>) -> Self {
        let c = coeffs.clone();
        Self::new(op, coeffs.dim(), move |xi| (c.b_symbol(xi), c.n_symbol(xi)))
    }

    /// `(b₀ + b̂₁)A + iξ(a₀ + â₁)`.
    pub fn parabolic(coeffs: &ParabolicCoefficients, op: Arc<SectorialOperator>) -> Self {
        let c = coeffs.clone();
        Self::new(op, 1, move |xi| {
            (c.b0 + c.b1.transform(xi), Complex64::new(0.0, xi[0]) * (c.a0 + c.a1.transform(xi)))
        })
    }

    /// `A + ξ²`, the transform of `−u'' + Au`.
    pub fn doe(op: Arc<SectorialOperator>) -> Self {
        Self::new(op, 1, |xi| (Complex64::new(1.0, 0.0), Complex64::new(xi[0] * xi[0], 0.0)))
    }

    /// `A + iξ`, the transform of `u' + Au`.
    pub fn cauchy(op: Arc<SectorialOperator>) -> Self {
        Self::new(op, 1, |xi| (Complex64::new(1.0, 0.0), Complex64::new(0.0, xi[0])))
    }
}

impl MultiplierSymbol for OperatorPolynomial {
    fn name(&self) -> String {
        "forward".into()
    }

    fn e_dim(&self) -> usize {
        self.op.dim()
    }

    fn space_dim(&self) -> usize {
        self.space_dim
    }

    fn evaluate(&self, xi: &[f64]) -> Result<CMatrix> {
        let (a, b) = (self.coeffs)(xi);
        let n = self.op.dim();
        Ok(self.op.matrix() * a + CMatrix::identity(n, n) * b)
    }

    fn apply(&self, xi: &[f64], v: &CVector) -> Result<CVector> {
        let (a, b) = (self.coeffs)(xi);
        Ok(self.op.apply(v) * a + v * b)
    }

    fn zero_rule(&self) -> Result<ZeroRule> {
        Ok(ZeroRule::Value(self.evaluate(&vec![0.0; self.space_dim])?))
    }
}

/// `F^{-1}[ψ(ξ) f̂]` for a scalar `ψ`, applied componentwise.
pub fn scalar_multiply(
    f: &GridFunction,
    psi: impl Fn(&[f64]) -> Complex64 + Send + Sync + 'static,
) -> Result<GridFunction> {
    apply_multiplier(&ScalarSymbol::new("scalar", f.e_dim(), f.grid().dim(), psi), f)
}

fn check_operand(op: &SectorialOperator, f: &GridFunction, d: usize) -> Result<()> {
    if f.e_dim() != op.dim() {
        return Err(Error::DimensionMismatch { expected: op.dim(), got: f.e_dim() });
    }
    if f.grid().dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: f.grid().dim() });
    }
    Ok(())
}

/// Solution of the elliptic equation together with `‖u‖_p/‖f‖_q`.
#[derive(Debug, Clone)]
pub struct EllipticSolution {
    pub solution: Solution,
    /// `None` when `f = 0`.
    pub sobolev_ratio: Option<f64>,
}

/// Verifies the gap and coefficient conditions for the elliptic equation.
pub fn check_elliptic_problem(coeffs: &EllipticCoefficients, op: &SectorialOperator, q: f64, p: f64) -> Result<()> {
    let d = coeffs.dim();
    if !check_gap(q, p, d)? {
        return Err(Error::GapViolated { q, p, d });
    }
    let report = check_condition_3_1(coeffs, op.phi(), &default_xi_sample(d))?;
    if !report.overall {
        return Err(Error::ConditionFailed(Box::new(report)));
    }
    Ok(())
}

/// `u = F^{-1}[σ(ξ) f̂]` after checking the gap and coefficient conditions.
pub fn solve_elliptic(
    coeffs: &EllipticCoefficients,
    op: &Arc<SectorialOperator>,
    f: &GridFunction,
    q: f64,
    p: f64,
) -> Result<EllipticSolution> {
    check_operand(op, f, coeffs.dim())?;
    check_elliptic_problem(coeffs, op, q, p)?;
    solve_elliptic_unchecked(coeffs, op, f, q, p)
}

fn solve_elliptic_unchecked(
    coeffs: &EllipticCoefficients,
    op: &Arc<SectorialOperator>,
    f: &GridFunction,
    q: f64,
    p: f64,
) -> Result<EllipticSolution> {
    let d = coeffs.dim();
    let sigma = elliptic_symbol(coeffs, op.clone());
    let out = apply_multipliers(&[&sigma], f)?;
    let mean_projected = out.mean_projected;
    let u = out.outputs.into_iter().next().expect("one output");

    let mut derived = BTreeMap::new();
    derived.insert("Au".to_string(), u.map_pointwise(|v| op.apply(v)));
    for k in 0..d {
        for j in k..d {
            let d2 = scalar_multiply(&u, move |xi| Complex64::new(-xi[k] * xi[j], 0.0))?;
            let kern = coeffs.a[k * d + j].clone();
            if !kern.is_zero() {
                let conv = scalar_multiply(&u, move |xi| kern.transform(xi) * (-xi[k] * xi[j]))?;
                derived.insert(format!("a{}{}*d2u", k + 1, j + 1), conv);
            }
            derived.insert(format!("d2u_{}{}", k + 1, j + 1), d2);
        }
    }
    let lu = apply_multiplier(&OperatorPolynomial::elliptic(coeffs, op.clone()), &u)?;
    let residual = relative(&lu, f, q, &ENorm::Euclidean)?;
    let nf = lp_norm(f, q);
    let sobolev_ratio = (nf > 0.0).then(|| lp_norm(&u, p) / nf);
    Ok(EllipticSolution { solution: Solution { u, derived, residual, mean_projected }, sobolev_ratio })
}

/// Verifies the parabolic coefficient condition at the operator's angle.
pub fn check_parabolic_problem(coeffs: &ParabolicCoefficients, op: &SectorialOperator) -> Result<()> {
    let report = check_condition_4_1(coeffs, op.phi(), &default_xi_sample(1), DEFAULT_TAIL_THRESHOLD)?;
    if !report.overall {
        return Err(Error::ConditionFailed(Box::new(report)));
    }
    Ok(())
}

/// `u = T_{m₀}f` with `u' = T_{m₁}f`, `a₁∗u' = T_{m₂}f`, `Au = T_{m₃}f`,
/// `b₁∗Au = T_{m₄}f`. Norms use `L_p` with the pointwise norm `enorm`.
pub fn solve_parabolic(
    coeffs: &ParabolicCoefficients,
    op: &Arc<SectorialOperator>,
    f: &GridFunction,
    p: f64,
    enorm: &ENorm,
) -> Result<(Solution, CoerciveReport)> {
    check_operand(op, f, 1)?;
    check_parabolic_problem(coeffs, op)?;
    solve_parabolic_unchecked(coeffs, op, f, p, enorm)
}

pub(crate) fn solve_parabolic_unchecked(
    coeffs: &ParabolicCoefficients,
    op: &Arc<SectorialOperator>,
    f: &GridFunction,
    p: f64,
    enorm: &ENorm,
) -> Result<(Solution, CoerciveReport)> {
    let ms = parabolic_symbols(coeffs, op.clone());
    let refs: Vec<&dyn MultiplierSymbol> = ms.iter().map(|m| m as &dyn MultiplierSymbol).collect();
    let out = apply_multipliers(&refs, f)?;
    let mean_projected = out.mean_projected;
    let mut terms = out.outputs.into_iter();
    let u = terms.next().expect("five outputs");
    let names = ["u'", "a1*u'", "Au", "b1*Au"];
    let derived: BTreeMap<String, GridFunction> = names.iter().map(|n| n.to_string()).zip(terms).collect();

    let one = Complex64::new(1.0, 0.0);
    let lu = derived["u'"]
        .scale(coeffs.a0)
        .axpy(one, &derived["a1*u'"])?
        .axpy(one, &derived["Au"].scale(coeffs.b0))?
        .axpy(one, &derived["b1*Au"])?;
    let residual = relative(&lu, f, p, enorm)?;

    let norm = |g: &GridFunction| lp_norm_with(g, p, enorm);
    let norm_f = norm(f);
    let mut report = CoerciveReport {
        norm_u_prime: norm(&derived["u'"]),
        norm_conv_u_prime: norm(&derived["a1*u'"]),
        norm_au: norm(&derived["Au"]),
        norm_conv_au: norm(&derived["b1*Au"]),
        norm_f,
        ratio_c: None,
    };
    if norm_f > 0.0 {
        report.ratio_c =
            Some((report.norm_u_prime + report.norm_conv_u_prime + report.norm_au + report.norm_conv_au) / norm_f);
    }
    Ok((Solution { u, derived, residual, mean_projected }, report))
}

/// `−u'' + Au = f`: `u = F^{-1}[(A+ξ²)^{-1} f̂]`, with `u'`, `u''`, `Au`.
pub fn solve_elliptic_doe(op: &Arc<SectorialOperator>, f: &GridFunction) -> Result<Solution> {
    check_operand(op, f, 1)?;
    let terms = [DoeTerm::Sigma0, DoeTerm::FirstDerivative, DoeTerm::SecondDerivative, DoeTerm::Sigma3];
    let syms: Vec<_> = terms.iter().map(|t| doe_symbol(op.clone(), *t)).collect();
    let refs: Vec<&dyn MultiplierSymbol> = syms.iter().map(|m| m as &dyn MultiplierSymbol).collect();
    let out = apply_multipliers(&refs, f)?;
    let mean_projected = out.mean_projected;
    let mut it = out.outputs.into_iter();
    let u = it.next().expect("four outputs");
    let derived: BTreeMap<String, GridFunction> = ["u'", "u''", "Au"].iter().map(|n| n.to_string()).zip(it).collect();
    let lu = derived["u''"].axpy(Complex64::new(-1.0, 0.0), &derived["Au"])?;
    let residual = relative(&lu, f, 2.0, &ENorm::Euclidean)?;
    Ok(Solution { u, derived, residual, mean_projected })
}

/// Largest `‖u*‖_p/‖Lu*‖_q` over an ensemble and its drift under refinement.
#[derive(Debug, Clone, PartialEq)]
pub struct SobolevReport {
    pub q: f64,
    pub p: f64,
    pub ratios: Vec<f64>,
    pub max_ratio: f64,
    /// Same ensemble on the grid with twice the points per axis.
    pub max_ratio_refined: f64,
    /// Same ensemble on the box of twice the size.
    pub max_ratio_enlarged: f64,
    pub drift_grid: f64,
    pub drift_box: f64,
}

/// Drift tolerance for [`SobolevReport::stable`].
pub const REFINEMENT_TOL: f64 = 0.05;

impl SobolevReport {
    pub fn stable(&self) -> bool {
        self.max_ratio.is_finite() && self.drift_grid < REFINEMENT_TOL && self.drift_box < REFINEMENT_TOL
    }
}

impl fmt::Display for SobolevReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "sobolev ratio |u|_{}/|Lu|_{}: max = {:.6e}, 2x grid = {:.6e} (drift {:.3e}), 2x box = {:.6e} (drift {:.3e}), {}",
            self.p,
            self.q,
            self.max_ratio,
            self.max_ratio_refined,
            self.drift_grid,
            self.max_ratio_enlarged,
            self.drift_box,
            if self.stable() { "stable" } else { "UNSTABLE" }
        )
    }
}

/// Ratios `‖u*‖_p/‖Lu*‖_q` for seeded wave packets `u*` on `grid`.
fn sobolev_ratios(
    coeffs: &EllipticCoefficients,
    op: &Arc<SectorialOperator>,
    q: f64,
    p: f64,
    ensemble_size: usize,
    seed: u64,
    grid: &Grid,
) -> Result<Vec<f64>> {
    let forward = OperatorPolynomial::elliptic(coeffs, op.clone());
    (0..ensemble_size as u64)
        .into_par_iter()
        .map(|i| {
            let u = wave_packet(grid, op.dim(), &mut crate::rng::stream(seed, i));
            let f = apply_multiplier(&forward, &u)?;
            let nf = lp_norm(&f, q);
            Ok(if nf > 0.0 { lp_norm(&u, p) / nf } else { f64::NAN })
        })
        .collect::<Result<Vec<f64>>>()
        .map(|v| v.into_iter().filter(|r| !r.is_nan()).collect())
}

/// Measures the Sobolev-type constant on `grid`, on its 2× refinement and
/// on the 2× larger box.
pub fn verify_sobolev(
    coeffs: &EllipticCoefficients,
    op: &Arc<SectorialOperator>,
    q: f64,
    p: f64,
    ensemble_size: usize,
    seed: u64,
    grid: &Grid,
) -> Result<SobolevReport> {
    if grid.dim() != coeffs.dim() {
        return Err(Error::DimensionMismatch { expected: coeffs.dim(), got: grid.dim() });
    }
    check_elliptic_problem(coeffs, op, q, p)?;
    let max = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
    let ratios = sobolev_ratios(coeffs, op, q, p, ensemble_size, seed, grid)?;
    let refined = sobolev_ratios(coeffs, op, q, p, ensemble_size, seed, &grid.refined(2)?)?;
    let enlarged = sobolev_ratios(coeffs, op, q, p, ensemble_size, seed, &grid.enlarged(2)?)?;
    let (m, mr, me) = (max(&ratios), max(&refined), max(&enlarged));
    Ok(SobolevReport {
        q,
        p,
        max_ratio: m,
        max_ratio_refined: mr,
        max_ratio_enlarged: me,
        drift_grid: (mr - m).abs() / m,
        drift_box: (me - m).abs() / m,
        ratios,
    })
}

/// Half-length making kernel tails `e^{-rate·L}` negligible.
pub fn default_half_length(min_rate: Option<f64>) -> f64 {
    32.0 / min_rate.unwrap_or(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    use crate::kernels::Kernel;
    use crate::multiplier::single_mode;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn scalar_op(a: f64) -> Arc<SectorialOperator> {
        Arc::new(SectorialOperator::scalar(c(a)).unwrap())
    }

    /// Applies `L` by direct rectangle-rule convolution with the kernel on
    /// a periodic grid.
    fn direct_convolution(k: &Kernel, g: &GridFunction) -> GridFunction {
        let grid = g.grid();
        let n = grid.n() as i64;
        let h = grid.spacing();
        let l2 = 2.0 * grid.half_length();
        let mut out = GridFunction::zeros(grid.clone(), g.e_dim());
        for i in 0..n {
            for j in 0..n {
                let mut t = (i - j) as f64 * h;
                // nearest periodic image
                t -= l2 * (t / l2).round();
                let w = k.eval(&[t]) * h;
                for e in 0..g.e_dim() {
                    let add = w * g.at(j as usize)[e];
                    out.at_mut(i as usize)[e] += add;
                }
            }
        }
        out
    }

    #[test]
    fn elliptic_single_mode_and_zero() {
        let (a, l) = (2.0, 4.0);
        let g = Grid::new(1, 64, l).unwrap();
        let f = single_mode(&g, &[1], &[c(1.0)]);
        let coeffs = EllipticCoefficients::constant_laplacian(1);
        let s = solve_elliptic(&coeffs, &scalar_op(a), &f, 2.0, 2.0).unwrap();
        let expect = f.scale(c(1.0 / (a + (PI / l).powi(2))));
        assert!(s.solution.u.sub(&expect).unwrap().max_abs() < 1e-13);
        assert!(s.solution.residual < 1e-13);

        let zero = GridFunction::zeros(g, 1);
        let s = solve_elliptic(&coeffs, &scalar_op(a), &zero, 2.0, 2.0).unwrap();
        assert!(s.solution.u.is_zero() && s.solution.residual == 0.0 && s.sobolev_ratio.is_none());
    }

    #[test]
    fn elliptic_refuses_failing_conditions() {
        let mut coeffs = EllipticCoefficients::constant_laplacian(1);
        coeffs.b0 = c(0.0);
        coeffs.b1 = Kernel::exponential(1, 1.0).unwrap();
        let g = Grid::new(1, 16, 4.0).unwrap();
        let f = GridFunction::zeros(g, 1);
        let err = solve_elliptic(&coeffs, &scalar_op(1.0), &f, 2.0, 2.0).unwrap_err();
        assert!(matches!(err, Error::ConditionFailed(_)) && err.is_hypothesis_failure());
    }

    #[test]
    fn elliptic_manufactured_two_dimensional() {
        let mut coeffs = EllipticCoefficients::constant_laplacian(2);
        coeffs.a[0] = Kernel::gaussian(2, 0.5).unwrap();
        coeffs.b1 = Kernel::exponential(2, 2.0).unwrap();
        let op = Arc::new(SectorialOperator::dirichlet_laplacian(3, PI, 0.5).unwrap());
        let g = Grid::new(2, 32, 8.0).unwrap();
        let u_star = GridFunction::random_trig(g, 3, 8, &mut crate::rng::stream(5, 0));
        let f = apply_multiplier(&OperatorPolynomial::elliptic(&coeffs, op.clone()), &u_star).unwrap();
        let s = solve_elliptic(&coeffs, &op, &f, 2.0, 3.0).unwrap();
        assert!(relative(&s.solution.u, &u_star, 2.0, &ENorm::Euclidean).unwrap() < 1e-10);
        assert!(s.solution.derived("a11*d2u").is_some());
    }

    #[test]
    fn parabolic_scalar_manufactured() {
        let (a, l) = (1.3, 5.0);
        let g = Grid::new(1, 128, l).unwrap();
        let w = PI / l;
        let f = GridFunction::from_fn(g.clone(), 1, |x, o| o[0] = c(w * (w * x[0]).cos() + a * (w * x[0]).sin()));
        let u_star = GridFunction::from_fn(g, 1, |x, o| o[0] = c((w * x[0]).sin()));
        let coeffs = ParabolicCoefficients::constant(c(1.0), c(1.0));
        let (s, rep) = solve_parabolic(&coeffs, &scalar_op(a), &f, 2.0, &ENorm::Euclidean).unwrap();
        assert!(s.u.sub(&u_star).unwrap().max_abs() < 1e-10);
        assert!(rep.ratio_c.unwrap().is_finite());

        let zero = GridFunction::zeros(s.u.grid().clone(), 1);
        let (s, rep) = solve_parabolic(&coeffs, &scalar_op(a), &zero, 2.0, &ENorm::Euclidean).unwrap();
        assert!(s.u.is_zero() && rep.ratio_c.is_none());
    }

    #[test]
    fn parabolic_derived_terms_match_direct_convolution() {
        let coeffs = ParabolicCoefficients::fading_memory(1.0, 2.0).unwrap();
        let op = Arc::new(SectorialOperator::dirichlet_laplacian(3, PI, 1.0).unwrap());
        let g = Grid::new(1, 2048, 32.0).unwrap();
        let f = wave_packet(&g, 3, &mut crate::rng::stream(8, 0));
        let (s, _) = solve_parabolic(&coeffs, &op, &f, 2.0, &ENorm::Euclidean).unwrap();
        let conv_up = direct_convolution(&coeffs.a1, &s.derived["u'"]);
        let conv_au = direct_convolution(&coeffs.b1, &s.derived["Au"]);
        // the rectangle rule is second order at the kernel's kink
        assert!(relative(&conv_up, &s.derived["a1*u'"], 2.0, &ENorm::Euclidean).unwrap() < 1e-3);
        assert!(relative(&conv_au, &s.derived["b1*Au"], 2.0, &ENorm::Euclidean).unwrap() < 1e-3);
        let au = s.u.map_pointwise(|v| op.apply(v));
        assert!(relative(&au, &s.derived["Au"], 2.0, &ENorm::Euclidean).unwrap() < 1e-12);
        let up = scalar_multiply(&s.u, |xi| Complex64::new(0.0, xi[0])).unwrap();
        assert!(relative(&up, &s.derived["u'"], 2.0, &ENorm::Euclidean).unwrap() < 1e-12);
    }

    #[test]
    fn parabolic_term_identity() {
        let coeffs = ParabolicCoefficients::fading_memory(0.5, 1.5).unwrap();
        let op = Arc::new(SectorialOperator::dirichlet_laplacian(4, PI, 1.0).unwrap());
        let g = Grid::new(1, 256, 64.0).unwrap();
        let f = GridFunction::random_trig(g, 4, 64, &mut crate::rng::stream(2, 0));
        let (s, _) = solve_parabolic(&coeffs, &op, &f, 3.0, &ENorm::Euclidean).unwrap();
        assert!(s.residual < 1e-9);
    }

    #[test]
    fn doe_single_mode_and_identity() {
        let l = 6.0;
        let g = Grid::new(1, 64, l).unwrap();
        let f = single_mode(&g, &[1], &[c(1.0)]);
        let s = solve_elliptic_doe(&scalar_op(1.0), &f).unwrap();
        let xi = PI / l;
        assert!(s.u.sub(&f.scale(c(1.0 / (1.0 + xi * xi)))).unwrap().max_abs() < 1e-13);
        let lhs = s.derived["u''"].clone();
        let rhs = s.derived["Au"].sub(&f).unwrap().scale(c(-1.0));
        assert!(lhs.axpy(c(1.0), &rhs).unwrap().max_abs() < 1e-12, "u'' = Au - f");
        assert!(s.residual < 1e-13, "{}", s.residual);
    }

    #[test]
    fn sobolev_constant_case_bounded_by_symbol() {
        let coeffs = EllipticCoefficients::constant_laplacian(1);
        let g = Grid::new(1, 256, 16.0).unwrap();
        let r = verify_sobolev(&coeffs, &scalar_op(1.0), 2.0, 2.0, 6, 1, &g).unwrap();
        assert!(r.ratios.iter().all(|x| *x <= 1.0 + 1e-12));
        assert!(r.stable(), "{r}");
    }

    #[test]
    fn sobolev_gap_violation_is_refused() {
        let coeffs = EllipticCoefficients::constant_laplacian(1);
        let g = Grid::new(1, 64, 16.0).unwrap();
        assert!(verify_sobolev(&coeffs, &scalar_op(1.0), 3.0, 2.0, 2, 1, &g).is_err());
    }
}
