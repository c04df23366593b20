//! Finite-dimensional realizations of the positive operator `A`, resolvent
//! solves with factorization reuse, sampled certification of φ-positivity,
//! and the semigroup `e^{-At}`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::SymmetricEigen;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grammar::{format_complex, parse_complex, parse_f64, Call};
use crate::linalg::{is_hermitian, min_singular_value, CMatrix, CVector, Factorization, MAX_CONDITION};
use crate::multiplier::{lp_norm_with, ENorm, GridFunction};

/// Angular tolerance for sector membership, so boundary rays are accepted.
pub const SECTOR_TOL: f64 = 1e-10;

/// Closed sector `S_φ = {λ : |arg λ| <= φ}` with `0 <= φ < π`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sector {
    phi: f64,
}

impl Sector {
    pub fn new(phi: f64) -> Result<Self> {
        if !(0.0..PI).contains(&phi) {
            return Err(Error::invalid(format!("sector angle must lie in [0, π), got {phi}")));
        }
        Ok(Self { phi })
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn contains(&self, z: Complex64) -> bool {
        z == Complex64::new(0.0, 0.0) || z.arg().abs() <= self.phi + SECTOR_TOL
    }
}

/// Outcome of a sampled φ-positivity check.
#[derive(Debug, Clone)]
pub struct PositivityReport {
    pub phi: f64,
    pub sampled_lambdas: Vec<Complex64>,
    /// `max (1+|λ|)·‖(A+λ)^{-1}‖` over the successful part of the sample.
    pub measured_m: f64,
    pub failures: Vec<Complex64>,
    pub pass: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CacheStats {
    pub hits: u64,
    pub misses: u64,
    pub entries: usize,
}

/// Default cache capacity, enough for one factorization per frequency of a
/// 4096-point or 64×64 grid.
pub const DEFAULT_CACHE_CAPACITY: usize = 8192;

#[derive(Debug)]
struct ResolventCache {
    enabled: AtomicBool,
    capacity: usize,
    map: Mutex<HashMap<(u64, u64), Arc<Factorization>>>,
    hits: AtomicU64,
    misses: AtomicU64,
}

impl ResolventCache {
    fn new(capacity: usize) -> Self {
        Self {
            enabled: AtomicBool::new(true),
            capacity,
            map: Mutex::new(HashMap::new()),
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
        }
    }
}

fn key(lambda: Complex64) -> (u64, u64) {
    // +0.0 folds -0.0 onto 0.0
    ((lambda.re + 0.0).to_bits(), (lambda.im + 0.0).to_bits())
}

/// Dense n×n complex matrix standing in for `A`, with its sector angle.
#[derive(Debug)]
pub struct SectorialOperator {
    matrix: CMatrix,
    sector: Sector,
    bound_m: Option<f64>,
    invertible: bool,
    hermitian: bool,
    cache: ResolventCache,
    eigen: OnceLock<(Vec<f64>, CMatrix)>,
}

impl Clone for SectorialOperator {
    fn clone(&self) -> Self {
        let mut op = Self::assemble(self.matrix.clone(), self.sector);
        op.bound_m = self.bound_m;
        op.set_caching(self.cache.enabled.load(Ordering::Relaxed));
        op
    }
}

/// Default sector angle for constructed operators. Hermitian positive
/// definite matrices are φ-positive for every φ < π.
pub const DEFAULT_PHI: f64 = 0.75 * PI;

impl SectorialOperator {
    fn assemble(matrix: CMatrix, sector: Sector) -> Self {
        let invertible = matrix.nrows() > 0 && min_singular_value(&matrix) > 1e-12;
        let hermitian = is_hermitian(&matrix, 1e-14);
        Self {
            matrix,
            sector,
            bound_m: None,
            invertible,
            hermitian,
            cache: ResolventCache::new(DEFAULT_CACHE_CAPACITY),
            eigen: OnceLock::new(),
        }
    }

    pub fn from_matrix(matrix: CMatrix, phi: f64) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() || matrix.nrows() == 0 {
            return Err(Error::invalid(format!(
                "operator matrix must be square and nonempty, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        if matrix.iter().any(|z| !z.is_finite()) {
            return Err(Error::invalid("operator matrix has non-finite entries"));
        }
        Ok(Self::assemble(matrix, Sector::new(phi)?))
    }

    /// Three-point `-d²/dx² + c` on `n` interior points of `[0, length]`
    /// with homogeneous Dirichlet boundary values.
    pub fn dirichlet_laplacian(n: usize, length: f64, shift: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid(format!("laplacian needs n >= 2, got {n}")));
        }
        if !(length > 0.0) || !(shift >= 0.0) {
            return Err(Error::invalid("laplacian needs length > 0 and c >= 0"));
        }
        let h = length / (n as f64 + 1.0);
        let diag = 2.0 / (h * h) + shift;
        let off = -1.0 / (h * h);
        let m = CMatrix::from_fn(n, n, |i, j| {
            let v = if i == j {
                diag
            } else if i.abs_diff(j) == 1 {
                off
            } else {
                0.0
            };
            Complex64::new(v, 0.0)
        });
        Self::from_matrix(m, DEFAULT_PHI)
    }

    pub fn diagonal(values: &[Complex64]) -> Result<Self> {
        let m = CMatrix::from_diagonal(&CVector::from_column_slice(values));
        Self::from_matrix(m, DEFAULT_PHI)
    }

    pub fn scalar(value: Complex64) -> Result<Self> {
        Self::diagonal(&[value])
    }

    pub fn identity(n: usize) -> Result<Self> {
        Self::diagonal(&vec![Complex64::new(1.0, 0.0); n])
    }

    pub fn with_phi(mut self, phi: f64) -> Result<Self> {
        self.sector = Sector::new(phi)?;
        self.bound_m = None;
        Ok(self)
    }

    /// Enables or disables factorization reuse. Disabling also drops cached entries.
    pub fn set_caching(&self, enabled: bool) {
        self.cache.enabled.store(enabled, Ordering::Relaxed);
        if !enabled {
            self.cache.map.lock().unwrap().clear();
        }
    }

    pub fn cache_stats(&self) -> CacheStats {
        CacheStats {
            hits: self.cache.hits.load(Ordering::Relaxed),
            misses: self.cache.misses.load(Ordering::Relaxed),
            entries: self.cache.map.lock().unwrap().len(),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn sector(&self) -> Sector {
        self.sector
    }

    pub fn phi(&self) -> f64 {
        self.sector.phi
    }

    pub fn bound_m(&self) -> Option<f64> {
        self.bound_m
    }

    pub fn is_invertible(&self) -> bool {
        self.invertible
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn apply(&self, v: &CVector) -> CVector {
        &self.matrix * v
    }

    /// Factorization of `A + λ`, shared through the cache when enabled.
    pub fn factorization(&self, lambda: Complex64) -> Result<Arc<Factorization>> {
        let caching = self.cache.enabled.load(Ordering::Relaxed);
        if caching {
            if let Some(f) = self.cache.map.lock().unwrap().get(&key(lambda)) {
                self.cache.hits.fetch_add(1, Ordering::Relaxed);
                return Ok(f.clone());
            }
        }
        self.cache.misses.fetch_add(1, Ordering::Relaxed);
        let mut shifted = self.matrix.clone();
        for i in 0..shifted.nrows() {
            shifted[(i, i)] += lambda;
        }
        let fact = match Factorization::new(shifted) {
            Some(f) if f.condition() <= MAX_CONDITION => Arc::new(f),
            Some(f) => return Err(Error::SingularResolvent { lambda, condition: f.condition() }),
            None => return Err(Error::SingularResolvent { lambda, condition: f64::INFINITY }),
        };
        if caching {
            let mut map = self.cache.map.lock().unwrap();
            if map.len() >= self.cache.capacity {
                map.clear();
            }
            map.entry(key(lambda)).or_insert_with(|| fact.clone());
        }
        Ok(fact)
    }

    /// Solves `(A + λ) x = b` for `λ` in the operator's sector.
    pub fn resolvent_apply(&self, lambda: Complex64, b: &CVector) -> Result<CVector> {
        if !self.sector.contains(lambda) {
            return Err(Error::OutsideSector { lambda, phi: self.sector.phi });
        }
        self.resolvent_apply_unchecked(lambda, b)
    }

    /// As [`Self::resolvent_apply`] without the sector precondition.
    pub fn resolvent_apply_unchecked(&self, lambda: Complex64, b: &CVector) -> Result<CVector> {
        if b.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: b.len() });
        }
        Ok(self.factorization(lambda)?.solve(b))
    }

    /// `(A + λ)^{-1}` as a dense matrix.
    pub fn resolvent_matrix(&self, lambda: Complex64) -> Result<CMatrix> {
        Ok(self.factorization(lambda)?.inverse())
    }

    pub fn inverse(&self) -> Result<CMatrix> {
        if !self.invertible {
            return Err(Error::ZeroFrequency);
        }
        self.resolvent_matrix(Complex64::new(0.0, 0.0))
    }

    /// Samples `λ = r e^{iθ}`, `|θ| <= φ`, and measures
    /// `max (1+|λ|)‖(A+λ)^{-1}‖`.
    pub fn check_positivity(&self, phi: f64, radii: &[f64], angles_per_radius: usize) -> Result<PositivityReport> {
        let sector = Sector::new(phi)?;
        if angles_per_radius < 8 {
            return Err(Error::invalid(format!("need at least 8 angles per radius, got {angles_per_radius}")));
        }
        if radii.is_empty() || radii.iter().any(|r| !(*r >= 0.0 && r.is_finite())) {
            return Err(Error::invalid("radii must be nonnegative and finite"));
        }
        let mut sampled = Vec::with_capacity(radii.len() * angles_per_radius);
        let mut failures = Vec::new();
        let mut measured: f64 = 0.0;
        for &r in radii {
            for j in 0..angles_per_radius {
                let theta = -sector.phi + 2.0 * sector.phi * j as f64 / (angles_per_radius - 1) as f64;
                let lambda = Complex64::from_polar(r, theta);
                sampled.push(lambda);
                let mut shifted = self.matrix.clone();
                for i in 0..shifted.nrows() {
                    shifted[(i, i)] += lambda;
                }
                let smin = min_singular_value(&shifted);
                let scale = crate::linalg::op_norm(&shifted).max(f64::MIN_POSITIVE);
                if !(smin > scale / MAX_CONDITION) {
                    failures.push(lambda);
                    continue;
                }
                measured = measured.max((1.0 + lambda.norm()) / smin);
            }
        }
        let pass = failures.is_empty();
        Ok(PositivityReport { phi, sampled_lambdas: sampled, measured_m: measured, failures, pass })
    }

    /// Records `measured_m` as the operator's bound when the report passed
    /// for this operator's sector.
    pub fn certify(&mut self, report: &PositivityReport) -> bool {
        if report.pass && report.phi >= self.sector.phi - SECTOR_TOL {
            self.bound_m = Some(report.measured_m);
            true
        } else {
            false
        }
    }

    /// `(‖u‖_p^p + ‖Au‖_p^p)^{1/p}`.
    pub fn graph_norm(&self, u: &GridFunction, p: f64) -> Result<f64> {
        if u.e_dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: u.e_dim() });
        }
        let au = u.map_pointwise(|v| self.apply(v));
        let a = lp_norm_with(u, p, &ENorm::Euclidean);
        let b = lp_norm_with(&au, p, &ENorm::Euclidean);
        Ok((a.powf(p) + b.powf(p)).powf(1.0 / p))
    }

    fn eigen(&self) -> Option<&(Vec<f64>, CMatrix)> {
        if !self.hermitian {
            return None;
        }
        Some(self.eigen.get_or_init(|| {
            let e = SymmetricEigen::new(self.matrix.clone());
            (e.eigenvalues.iter().copied().collect(), e.eigenvectors)
        }))
    }

    /// Eigenvalues in ascending order, for Hermitian operators.
    pub fn eigenvalues(&self) -> Option<Vec<f64>> {
        self.eigen().map(|(v, _)| {
            let mut v = v.clone();
            v.sort_by(f64::total_cmp);
            v
        })
    }

    /// `e^{-At}` as a dense matrix.
    pub fn semigroup_matrix(&self, t: f64) -> Result<CMatrix> {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::invalid(format!("semigroup time must be >= 0, got {t}")));
        }
        if let Some((vals, vecs)) = self.eigen() {
            let scaled = CMatrix::from_fn(vecs.nrows(), vecs.ncols(), |i, j| vecs[(i, j)] * (-vals[j] * t).exp());
            Ok(scaled * vecs.adjoint())
        } else {
            Ok((&self.matrix * Complex64::new(-t, 0.0)).exp())
        }
    }

    /// `e^{-At} b`.
    pub fn semigroup_apply(&self, t: f64, b: &CVector) -> Result<CVector> {
        if b.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: b.len() });
        }
        if let Some((vals, vecs)) = self.eigen() {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(Error::invalid(format!("semigroup time must be >= 0, got {t}")));
            }
            let mut coeffs = vecs.adjoint() * b;
            for (c, l) in coeffs.iter_mut().zip(vals) {
                *c *= (-l * t).exp();
            }
            Ok(vecs * coeffs)
        } else {
            Ok(self.semigroup_matrix(t)? * b)
        }
    }

    /// Parses `laplacian(n=, length=, c=)`, `diag(v, ...)`, `scalar(z)`, `identity(n=)`.
    pub fn parse(input: &str) -> Result<Self> {
        let call = Call::parse(input)?;
        match call.name {
            "laplacian" => {
                call.reject_unknown_keywords(input, &["n", "length", "c"])?;
                let n = call.keyword_f64(input, &["n"])?;
                if n.fract() != 0.0 || n < 0.0 {
                    return Err(Error::parse(input, "n must be a nonnegative integer"));
                }
                let length = call
                    .keyword(&["length"])
                    .map(parse_f64)
                    .transpose()
                    .map_err(|_| Error::parse(input, "bad length"))?
                    .unwrap_or(PI);
                let c = call
                    .keyword(&["c"])
                    .map(parse_f64)
                    .transpose()
                    .map_err(|_| Error::parse(input, "bad c"))?
                    .unwrap_or(0.0);
                Self::dirichlet_laplacian(n as usize, length, c)
            }
            "diag" => {
                let values = call.args.iter().map(|a| parse_complex(a)).collect::<Result<Vec<_>>>()?;
                if values.is_empty() {
                    return Err(Error::parse(input, "diag needs at least one entry"));
                }
                Self::diagonal(&values)
            }
            "scalar" => match call.args.as_slice() {
                [z] => Self::scalar(parse_complex(z)?),
                _ => Err(Error::parse(input, "scalar takes exactly one value")),
            },
            "identity" => {
                call.reject_unknown_keywords(input, &["n"])?;
                let n = call.keyword_f64(input, &["n"])?;
                Self::identity(n as usize)
            }
            other => Err(Error::parse(input, format!("unknown operator `{other}`"))),
        }
    }
}

impl fmt::Display for SectorialOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = self.dim();
        let diag_only = (0..n).all(|i| (0..n).all(|j| i == j || self.matrix[(i, j)] == Complex64::new(0.0, 0.0)));
        if n == 1 {
            write!(f, "scalar({})", format_complex(self.matrix[(0, 0)]))
        } else if diag_only {
            let entries: Vec<String> = (0..n).map(|i| format_complex(self.matrix[(i, i)])).collect();
            write!(f, "diag({})", entries.join(","))
        } else {
            write!(f, "matrix({n}x{n})")
        }
    }
}

/// 40 log-spaced radii covering `[1e-4, 1e6]`.
pub fn default_radii() -> Vec<f64> {
    log_spaced(1e-4, 1e6, 40)
}

pub const DEFAULT_ANGLES: usize = 17;

pub fn log_spaced(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let (a, b) = (lo.log10(), hi.log10());
    (0..count).map(|i| 10f64.powf(a + (b - a) * i as f64 / (count.max(2) - 1) as f64)).collect()
}
