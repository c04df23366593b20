//! Operator-valued symbols `ξ ↦ M(ξ) ∈ B(C^n)`.
//!
//! Every symbol built from `A` has the shape
//! `M(ξ) = s(ξ)·(A + λ(ξ))^{-1} + c(ξ)·I` for scalar functions `λ, s, c`,
//! so one resolvent factorization per distinct `λ(ξ)` serves every symbol
//! that shares `λ`, and derivatives follow from
//! `∂M = ∂s·R − s·∂λ·R² + ∂c·I`.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;

use crate::conditions::{EllipticCoefficients, ParabolicCoefficients};
use crate::error::{Error, Result};
use crate::linalg::{CMatrix, CVector};
use crate::sectorial::SectorialOperator;

/// Value used at `ξ = 0`, where the continuum symbols are not defined.
#[derive(Debug, Clone)]
pub enum ZeroRule {
    /// Explicit limit value.
    Value(CMatrix),
    /// No finite limit is available; the mean of the input is projected out.
    ProjectMean,
}

pub trait MultiplierSymbol: Send + Sync {
    fn name(&self) -> String;

    /// Dimension `n` of `E = C^n`.
    fn e_dim(&self) -> usize;

    /// Dimension `d` of the frequency variable.
    fn space_dim(&self) -> usize;

    /// `M(ξ)` for `ξ ≠ 0`.
    fn evaluate(&self, xi: &[f64]) -> Result<CMatrix>;

    /// `M(ξ) v`, which implementations may compute with a single solve.
    fn apply(&self, xi: &[f64], v: &CVector) -> Result<CVector> {
        Ok(self.evaluate(xi)? * v)
    }

    /// Closed-form `∂^α M(ξ)` for `α ∈ {0,1}^d`, when available.
    fn derivative(&self, _xi: &[f64], _alpha: &[u8]) -> Option<Result<CMatrix>> {
        None
    }

    fn zero_rule(&self) -> Result<ZeroRule>;
}

/// `M(ξ) ≡ C`.
#[derive(Debug, Clone)]
pub struct ConstantSymbol {
    matrix: CMatrix,
    space_dim: usize,
}

impl ConstantSymbol {
    pub fn new(matrix: CMatrix, space_dim: usize) -> Self {
        Self { matrix, space_dim }
    }

    pub fn identity(n: usize, space_dim: usize) -> Self {
        Self::new(CMatrix::identity(n, n), space_dim)
    }

    pub fn scaled_identity(n: usize, space_dim: usize, a: Complex64) -> Self {
        Self::new(CMatrix::identity(n, n) * a, space_dim)
    }
}

impl MultiplierSymbol for ConstantSymbol {
    fn name(&self) -> String {
        "constant".into()
    }

    fn e_dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn space_dim(&self) -> usize {
        self.space_dim
    }

    fn evaluate(&self, _xi: &[f64]) -> Result<CMatrix> {
        Ok(self.matrix.clone())
    }

    fn derivative(&self, _xi: &[f64], alpha: &[u8]) -> Option<Result<CMatrix>> {
        let n = self.matrix.nrows();
        Some(Ok(if alpha.iter().all(|&a| a == 0) { self.matrix.clone() } else { CMatrix::zeros(n, n) }))
    }

    fn zero_rule(&self) -> Result<ZeroRule> {
        Ok(ZeroRule::Value(self.matrix.clone()))
    }
}

type ScalarFn = Arc<dyn Fn(&[f64]) -> Complex64 + Send + Sync>;
type ScalarDerivFn = Arc<dyn Fn(&[f64], &[u8]) -> Complex64 + Send + Sync>;

/// `M(ξ) = ψ(ξ)·I_n` for a scalar function `ψ`.
#[derive(Clone)]
pub struct ScalarSymbol {
    name: String,
    e_dim: usize,
    space_dim: usize,
    value: ScalarFn,
    derivative: Option<ScalarDerivFn>,
}

impl fmt::Debug for ScalarSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarSymbol").field("name", &self.name).field("e_dim", &self.e_dim).finish()
    }
}

impl ScalarSymbol {
    pub fn new(
        name: impl Into<String>,
        e_dim: usize,
        space_dim: usize,
        value: impl Fn(&[f64]) -> Complex64 + Send + Sync + 'static,
    ) -> Self {
        Self { name: name.into(), e_dim, space_dim, value: Arc::new(value), derivative: None }
    }

    /// Attaches a closed-form `∂^α ψ`.
    pub fn with_derivative(mut self, d: impl Fn(&[f64], &[u8]) -> Complex64 + Send + Sync + 'static) -> Self {
        self.derivative = Some(Arc::new(d));
        self
    }

    pub fn value(&self, xi: &[f64]) -> Complex64 {
        (self.value)(xi)
    }

    pub fn scalar_derivative(&self, xi: &[f64], alpha: &[u8]) -> Option<Complex64> {
        self.derivative.as_ref().map(|d| d(xi, alpha))
    }

    /// `iξ_axis · I`, the symbol of `∂/∂x_axis`.
    pub fn partial(e_dim: usize, space_dim: usize, axis: usize) -> Self {
        Self::new(format!("i*xi_{axis}"), e_dim, space_dim, move |xi| Complex64::new(0.0, xi[axis])).with_derivative(
            move |xi, alpha| {
                let ones: Vec<usize> = (0..alpha.len()).filter(|&a| alpha[a] == 1).collect();
                match ones.as_slice() {
                    [] => Complex64::new(0.0, xi[axis]),
                    [a] if *a == axis => Complex64::new(0.0, 1.0),
                    _ => Complex64::new(0.0, 0.0),
                }
            },
        )
    }
}

impl MultiplierSymbol for ScalarSymbol {
    fn name(&self) -> String {
        self.name.clone()
    }

    fn e_dim(&self) -> usize {
        self.e_dim
    }

    fn space_dim(&self) -> usize {
        self.space_dim
    }

    fn evaluate(&self, xi: &[f64]) -> Result<CMatrix> {
        let v = self.value(xi);
        if !v.is_finite() {
            return Err(Error::Symbol { xi: xi.to_vec(), source: Box::new(Error::invalid("non-finite symbol value")) });
        }
        Ok(CMatrix::identity(self.e_dim, self.e_dim) * v)
    }

    fn apply(&self, xi: &[f64], v: &CVector) -> Result<CVector> {
        Ok(v * self.value(xi))
    }

    fn derivative(&self, xi: &[f64], alpha: &[u8]) -> Option<Result<CMatrix>> {
        self.scalar_derivative(xi, alpha).map(|d| Ok(CMatrix::identity(self.e_dim, self.e_dim) * d))
    }

    fn zero_rule(&self) -> Result<ZeroRule> {
        let v = self.value(&vec![0.0; self.space_dim]);
        Ok(if v.is_finite() {
            ZeroRule::Value(CMatrix::identity(self.e_dim, self.e_dim) * v)
        } else {
            ZeroRule::ProjectMean
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParabolicTerm {
    /// `μ(A+η)^{-1}`: the solution `u`.
    M0,
    /// `iξμ(A+η)^{-1}`: `u'`.
    M1,
    /// `iξâ₁μ(A+η)^{-1}`: `a₁∗u'`.
    M2,
    /// `μA(A+η)^{-1} = μ(I − η(A+η)^{-1})`: `Au`.
    M3,
    /// `b̂₁μA(A+η)^{-1}`: `b₁∗Au`.
    M4,
}

impl ParabolicTerm {
    pub const ALL: [ParabolicTerm; 5] = [Self::M0, Self::M1, Self::M2, Self::M3, Self::M4];
}

/// Symbols of the Cauchy problem `u' + Au = f`, in the variable `t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CauchyTerm {
    /// `R(it, A) = (A + it)^{-1}`.
    M0,
    /// `itR(it, A) − I`.
    M1,
    /// `itR(it, A)`, the symbol of `f ↦ u'`.
    ItResolvent,
    /// `AR(it, A) = I − itR(it, A)`, the symbol of `f ↦ Au`.
    AResolvent,
}

/// Symbols of the elliptic equation `−u'' + Au = f`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DoeTerm {
    /// `σ₀ = (A + ξ²)^{-1}`
    Sigma0,
    /// `σ₁ = ξ(A + ξ²)^{-1}`
    Sigma1,
    /// `σ₂ = ξ²(A + ξ²)^{-1}`
    Sigma2,
    /// `σ₃ = A(A + ξ²)^{-1} = I − ξ²(A + ξ²)^{-1}`
    Sigma3,
    /// `iξ(A + ξ²)^{-1}`: `u'`.
    FirstDerivative,
    /// `−ξ²(A + ξ²)^{-1}`: `u''`.
    SecondDerivative,
}

#[derive(Debug, Clone)]
enum Shape {
    Elliptic(Arc<EllipticCoefficients>),
    Parabolic(Arc<ParabolicCoefficients>, ParabolicTerm),
    Cauchy(CauchyTerm),
    Doe(DoeTerm),
}

/// Values (or partial derivatives) of `λ`, `s`, `c` at one frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Parts {
    pub lambda: Complex64,
    pub scale: Complex64,
    pub shift: Complex64,
}

impl Parts {
    fn is_finite(&self) -> bool {
        self.lambda.is_finite() && self.scale.is_finite() && self.shift.is_finite()
    }
}

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

/// `s(ξ)(A + λ(ξ))^{-1} + c(ξ)I`.
#[derive(Debug, Clone)]
pub struct ResolventSymbol {
    op: Arc<SectorialOperator>,
    shape: Shape,
}

impl ResolventSymbol {
    pub fn operator(&self) -> &Arc<SectorialOperator> {
        &self.op
    }

    /// `λ, s, c` at `ξ`.
    pub fn parts(&self, xi: &[f64]) -> Parts {
        match &self.shape {
            Shape::Elliptic(c) => {
                let mu = c.mu(xi);
                let eta = c.n_symbol(xi) * mu;
                Parts { lambda: eta, scale: mu, shift: ZERO }
            }
            Shape::Parabolic(c, term) => {
                let x = xi[0];
                let mu = c.mu(x);
                let eta = c.eta(x);
                let a1 = c.a1.transform(&[x]);
                let b1 = c.b1.transform(&[x]);
                let ix = Complex64::new(0.0, x);
                let (scale, shift) = match term {
                    ParabolicTerm::M0 => (mu, ZERO),
                    ParabolicTerm::M1 => (ix * mu, ZERO),
                    ParabolicTerm::M2 => (ix * a1 * mu, ZERO),
                    ParabolicTerm::M3 => (-mu * eta, mu),
                    ParabolicTerm::M4 => (-b1 * mu * eta, b1 * mu),
                };
                Parts { lambda: eta, scale, shift }
            }
            Shape::Cauchy(term) => {
                let it = Complex64::new(0.0, xi[0]);
                let (scale, shift) = match term {
                    CauchyTerm::M0 => (ONE, ZERO),
                    CauchyTerm::M1 => (it, -ONE),
                    CauchyTerm::ItResolvent => (it, ZERO),
                    CauchyTerm::AResolvent => (-it, ONE),
                };
                Parts { lambda: it, scale, shift }
            }
            Shape::Doe(term) => {
                let x = xi[0];
                let x2 = Complex64::new(x * x, 0.0);
                let (scale, shift) = match term {
                    DoeTerm::Sigma0 => (ONE, ZERO),
                    DoeTerm::Sigma1 => (Complex64::new(x, 0.0), ZERO),
                    DoeTerm::Sigma2 => (x2, ZERO),
                    DoeTerm::Sigma3 => (-x2, ONE),
                    DoeTerm::FirstDerivative => (Complex64::new(0.0, x), ZERO),
                    DoeTerm::SecondDerivative => (-x2, ZERO),
                };
                Parts { lambda: x2, scale, shift }
            }
        }
    }

    /// `∂λ/∂ξ_axis`, `∂s/∂ξ_axis`, `∂c/∂ξ_axis`.
    pub fn parts_gradient(&self, xi: &[f64], axis: usize) -> Parts {
        match &self.shape {
            Shape::Elliptic(c) => {
                let mu = c.mu(xi);
                let dmu = c.mu_gradient(xi, axis);
                let n = c.n_symbol(xi);
                let dn = c.n_symbol_gradient(xi, axis);
                Parts { lambda: dn * mu + n * dmu, scale: dmu, shift: ZERO }
            }
            Shape::Parabolic(c, term) => {
                let x = xi[0];
                let mu = c.mu(x);
                let dmu = c.mu_derivative(x);
                let eta = c.eta(x);
                let deta = c.eta_derivative(x);
                let a1 = c.a1.transform(&[x]);
                let da1 = c.a1.transform_derivative(&[x], &[1]).expect("valid multi-index");
                let b1 = c.b1.transform(&[x]);
                let db1 = c.b1.transform_derivative(&[x], &[1]).expect("valid multi-index");
                let ix = Complex64::new(0.0, x);
                let (scale, shift) = match term {
                    ParabolicTerm::M0 => (dmu, ZERO),
                    ParabolicTerm::M1 => (I * mu + ix * dmu, ZERO),
                    ParabolicTerm::M2 => (I * a1 * mu + ix * da1 * mu + ix * a1 * dmu, ZERO),
                    ParabolicTerm::M3 => (-(dmu * eta + mu * deta), dmu),
                    ParabolicTerm::M4 => (-(db1 * mu * eta + b1 * dmu * eta + b1 * mu * deta), db1 * mu + b1 * dmu),
                };
                Parts { lambda: deta, scale, shift }
            }
            Shape::Cauchy(term) => {
                let scale = match term {
                    CauchyTerm::M0 => ZERO,
                    CauchyTerm::M1 | CauchyTerm::ItResolvent => I,
                    CauchyTerm::AResolvent => -I,
                };
                Parts { lambda: I, scale, shift: ZERO }
            }
            Shape::Doe(term) => {
                let x = xi[0];
                let scale = match term {
                    DoeTerm::Sigma0 => ZERO,
                    DoeTerm::Sigma1 => ONE,
                    DoeTerm::Sigma2 => Complex64::new(2.0 * x, 0.0),
                    DoeTerm::Sigma3 | DoeTerm::SecondDerivative => Complex64::new(-2.0 * x, 0.0),
                    DoeTerm::FirstDerivative => I,
                };
                Parts { lambda: Complex64::new(2.0 * x, 0.0), scale, shift: ZERO }
            }
        }
    }

    fn checked_parts(&self, xi: &[f64]) -> Result<Parts> {
        let p = self.parts(xi);
        if !p.is_finite() {
            return Err(Error::Symbol {
                xi: xi.to_vec(),
                source: Box::new(Error::invalid("symbol coefficients are not finite (b0 + b̂1 vanishes?)")),
            });
        }
        Ok(p)
    }

    fn at(&self, xi: &[f64], e: Result<CMatrix>) -> Result<CMatrix> {
        e.map_err(|source| Error::Symbol { xi: xi.to_vec(), source: Box::new(source) })
    }
}

impl MultiplierSymbol for ResolventSymbol {
    fn name(&self) -> String {
        match &self.shape {
            Shape::Elliptic(_) => "sigma".into(),
            Shape::Parabolic(_, t) => format!("parabolic:{t:?}").to_lowercase(),
            Shape::Cauchy(t) => format!("cauchy:{t:?}").to_lowercase(),
            Shape::Doe(t) => format!("doe:{t:?}").to_lowercase(),
        }
    }

    fn e_dim(&self) -> usize {
        self.op.dim()
    }

    fn space_dim(&self) -> usize {
        match &self.shape {
            Shape::Elliptic(c) => c.dim(),
            _ => 1,
        }
    }

    fn evaluate(&self, xi: &[f64]) -> Result<CMatrix> {
        let p = self.checked_parts(xi)?;
        let n = self.op.dim();
        let mut m = CMatrix::identity(n, n) * p.shift;
        if p.scale != ZERO {
            let r = self.at(xi, self.op.resolvent_matrix(p.lambda))?;
            m += r * p.scale;
        }
        Ok(m)
    }

    fn apply(&self, xi: &[f64], v: &CVector) -> Result<CVector> {
        let p = self.checked_parts(xi)?;
        let mut out = v * p.shift;
        if p.scale != ZERO {
            let x = self
                .op
                .resolvent_apply_unchecked(p.lambda, v)
                .map_err(|source| Error::Symbol { xi: xi.to_vec(), source: Box::new(source) })?;
            out += x * p.scale;
        }
        Ok(out)
    }

    fn derivative(&self, xi: &[f64], alpha: &[u8]) -> Option<Result<CMatrix>> {
        let ones: Vec<usize> = (0..alpha.len()).filter(|&a| alpha[a] == 1).collect();
        match ones.as_slice() {
            [] => Some(self.evaluate(xi)),
            [axis] => Some((|| {
                let p = self.checked_parts(xi)?;
                let g = self.parts_gradient(xi, *axis);
                let n = self.op.dim();
                let r = self.at(xi, self.op.resolvent_matrix(p.lambda))?;
                let r2 = &r * &r;
                Ok(r * g.scale - r2 * (p.scale * g.lambda) + CMatrix::identity(n, n) * g.shift)
            })()),
            _ => None,
        }
    }

    fn zero_rule(&self) -> Result<ZeroRule> {
        let zero = vec![0.0; self.space_dim()];
        let p = self.checked_parts(&zero)?;
        let n = self.op.dim();
        if p.scale == ZERO {
            return Ok(ZeroRule::Value(CMatrix::identity(n, n) * p.shift));
        }
        if p.lambda == ZERO && !self.op.is_invertible() {
            return Ok(ZeroRule::ProjectMean);
        }
        let r = self.op.resolvent_matrix(p.lambda)?;
        Ok(ZeroRule::Value(r * p.scale + CMatrix::identity(n, n) * p.shift))
    }
}

/// `σ(ξ) = (b̂₁+b₀)^{-1}(A + η(ξ))^{-1}`, `η = N(ξ)/(b̂₁+b₀)`.
pub fn elliptic_symbol(coeffs: &EllipticCoefficients, op: Arc<SectorialOperator>) -> ResolventSymbol {
    ResolventSymbol { op, shape: Shape::Elliptic(Arc::new(coeffs.clone())) }
}

pub fn parabolic_symbol(
    coeffs: &ParabolicCoefficients,
    op: Arc<SectorialOperator>,
    term: ParabolicTerm,
) -> ResolventSymbol {
    ResolventSymbol { op, shape: Shape::Parabolic(Arc::new(coeffs.clone()), term) }
}

/// `m₀ … m₄`, sharing the coefficient data and the operator's factorization cache.
pub fn parabolic_symbols(coeffs: &ParabolicCoefficients, op: Arc<SectorialOperator>) -> [ResolventSymbol; 5] {
    let shared = Arc::new(coeffs.clone());
    ParabolicTerm::ALL.map(|t| ResolventSymbol { op: op.clone(), shape: Shape::Parabolic(shared.clone(), t) })
}

pub fn cauchy_symbol(op: Arc<SectorialOperator>, term: CauchyTerm) -> ResolventSymbol {
    ResolventSymbol { op, shape: Shape::Cauchy(term) }
}

pub fn doe_symbol(op: Arc<SectorialOperator>, term: DoeTerm) -> ResolventSymbol {
    ResolventSymbol { op, shape: Shape::Doe(term) }
}

/// The Cauchy-problem pair `m₀, m₁` and the elliptic family `σ₀ … σ₃`.
#[derive(Debug, Clone)]
pub struct CauchySymbols {
    pub m0: ResolventSymbol,
    pub m1: ResolventSymbol,
    pub sigma: [ResolventSymbol; 4],
}

pub fn cauchy_symbols(op: Arc<SectorialOperator>) -> CauchySymbols {
    CauchySymbols {
        m0: cauchy_symbol(op.clone(), CauchyTerm::M0),
        m1: cauchy_symbol(op.clone(), CauchyTerm::M1),
        sigma: [DoeTerm::Sigma0, DoeTerm::Sigma1, DoeTerm::Sigma2, DoeTerm::Sigma3].map(|t| doe_symbol(op.clone(), t)),
    }
}
