//! Closed-form convolution kernels and their Fourier transforms.
//!
//! The transform convention is `k̂(ξ) = ∫ e^{-i t·ξ} k(t) dt` with no
//! normalization; the inverse carries `(2π)^{-d}`. Every kernel in the
//! catalog is radial, so its transform is a function `G(|ξ|²)` and each
//! mixed partial with multi-index `α ∈ {0,1}^d` is
//! `G^{(|α|)}(|ξ|²) · Π_{j ∈ α} 2ξ_j`.

use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grammar::{format_complex, parse_complex, split_top_level, Call};
use crate::linalg::gauss_legendre;

/// Radial profile of a single kernel term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Profile {
    /// `e^{-m|t|}`
    Exponential { rate: f64 },
    /// `e^{-|t|²/(2s²)}`
    Gaussian { width: f64 },
}

/// A finite linear combination of catalog profiles on `R^d`.
///
/// `Zero` is the empty sum, a plain exponential is a one-term sum with
/// coefficient one. Sums are always kept flat.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    dim: usize,
    terms: Vec<(Complex64, Profile)>,
}

impl Kernel {
    pub fn zero(dim: usize) -> Self {
        assert!(dim == 1 || dim == 2, "kernel dimension must be 1 or 2");
        Self { dim, terms: Vec::new() }
    }

    pub fn exponential(dim: usize, rate: f64) -> Result<Self> {
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(Error::invalid(format!("exponential rate must be positive, got {rate}")));
        }
        check_dim(dim)?;
        Ok(Self { dim, terms: vec![(Complex64::new(1.0, 0.0), Profile::Exponential { rate })] })
    }

    pub fn gaussian(dim: usize, width: f64) -> Result<Self> {
        if !(width > 0.0 && width.is_finite()) {
            return Err(Error::invalid(format!("gaussian width must be positive, got {width}")));
        }
        check_dim(dim)?;
        Ok(Self { dim, terms: vec![(Complex64::new(1.0, 0.0), Profile::Gaussian { width })] })
    }

    /// `Σ c_i k_i`, flattened.
    pub fn scaled_sum(parts: Vec<(Complex64, Kernel)>) -> Result<Self> {
        let dim = parts.first().map(|(_, k)| k.dim).ok_or_else(|| Error::invalid("empty sum"))?;
        let mut terms = Vec::new();
        for (c, k) in parts {
            if k.dim != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: k.dim });
            }
            terms.extend(k.terms.into_iter().map(|(ci, p)| (c * ci, p)));
        }
        Ok(Self { dim, terms })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_zero(&self) -> bool {
        self.terms.iter().all(|(c, _)| *c == Complex64::new(0.0, 0.0))
    }

    pub fn terms(&self) -> &[(Complex64, Profile)] {
        &self.terms
    }

    /// Smallest decay rate among the terms (`m` for exponentials, `1/s` for
    /// Gaussians); `None` for the zero kernel.
    pub fn min_decay_rate(&self) -> Option<f64> {
        self.terms
            .iter()
            .map(|(_, p)| match *p {
                Profile::Exponential { rate } => rate,
                Profile::Gaussian { width } => 1.0 / width,
            })
            .reduce(f64::min)
    }

    pub fn eval(&self, t: &[f64]) -> Complex64 {
        debug_assert_eq!(t.len(), self.dim);
        let r2: f64 = t.iter().map(|x| x * x).sum();
        self.terms
            .iter()
            .map(|(c, p)| {
                c * match *p {
                    Profile::Exponential { rate } => (-rate * r2.sqrt()).exp(),
                    Profile::Gaussian { width } => (-r2 / (2.0 * width * width)).exp(),
                }
            })
            .sum()
    }

    pub fn transform(&self, xi: &[f64]) -> Complex64 {
        let zeros = vec![0u8; self.dim];
        self.transform_derivative(xi, &zeros).expect("zero multi-index is always admissible")
    }

    /// `∂^α k̂(ξ)` for `α ∈ {0,1}^d`.
    pub fn transform_derivative(&self, xi: &[f64], alpha: &[u8]) -> Result<Complex64> {
        if alpha.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: alpha.len() });
        }
        if alpha.iter().any(|&a| a > 1) {
            return Err(Error::invalid(format!("multi-index {alpha:?} has a component above 1")));
        }
        debug_assert_eq!(xi.len(), self.dim);
        let order = alpha.iter().filter(|&&a| a == 1).count();
        let chain: f64 = xi.iter().zip(alpha).filter(|(_, &a)| a == 1).map(|(x, _)| 2.0 * x).product();
        let s: f64 = xi.iter().map(|x| x * x).sum();
        let d = self.dim as f64;
        let value = self.terms.iter().map(|(c, p)| c * radial_derivative(*p, d, s, order)).sum::<Complex64>();
        Ok(value * chain)
    }

    /// Halfwidth beyond which the absolute kernel mass is below `tol`.
    pub fn tail_halfwidth(&self, tol: f64) -> f64 {
        let weight: f64 = self.terms.iter().map(|(c, _)| c.norm()).sum::<f64>().max(1.0);
        let tol = tol / weight;
        self.terms
            .iter()
            .map(|(_, p)| {
                let mut h: f64 = 1.0;
                while tail_mass(*p, self.dim, h) > tol {
                    h *= 1.1;
                }
                h
            })
            .fold(0.0, f64::max)
    }
}

fn check_dim(dim: usize) -> Result<()> {
    if dim == 1 || dim == 2 {
        Ok(())
    } else {
        Err(Error::invalid(format!("kernel dimension must be 1 or 2, got {dim}")))
    }
}

/// k-th derivative of the radial transform `G(s)`, `s = |ξ|²`.
fn radial_derivative(p: Profile, d: f64, s: f64, k: usize) -> f64 {
    match p {
        Profile::Exponential { rate: m } => {
            // G(s) = c_d m (m² + s)^{-(d+1)/2}, c_1 = 2, c_2 = 2π
            let c = if d == 1.0 { 2.0 } else { 2.0 * PI };
            let e = (d + 1.0) / 2.0;
            let base = m * m + s;
            let falling: f64 = (0..k).map(|j| -(e + j as f64)).product();
            c * m * falling * base.powf(-(e + k as f64))
        }
        Profile::Gaussian { width: w } => {
            let g = ((2.0 * PI).sqrt() * w).powf(d) * (-w * w * s / 2.0).exp();
            g * (-w * w / 2.0).powi(k as i32)
        }
    }
}

fn tail_mass(p: Profile, dim: usize, h: f64) -> f64 {
    match (p, dim) {
        (Profile::Exponential { rate: m }, 1) => 2.0 * (-m * h).exp() / m,
        (Profile::Exponential { rate: m }, _) => 2.0 * PI * (-m * h).exp() * (h / m + 1.0 / (m * m)),
        (Profile::Gaussian { width: w }, 1) => {
            // Mills-ratio bound on the Gaussian tail
            2.0 * w * w / h * (-h * h / (2.0 * w * w)).exp()
        }
        (Profile::Gaussian { width: w }, _) => 2.0 * PI * w * w * (-h * h / (2.0 * w * w)).exp(),
    }
}

/// Composite Gauss-Legendre quadrature of `∫_{[-H,H]^d} e^{-i t·ξ} k(t) dt`.
///
/// `panels` is rounded up to an even count so that `t = 0`, where the
/// exponential profile has its kink, is a panel boundary. Intended for tests
/// and cross-checks only.
pub fn numeric_transform_oracle(k: &Kernel, xi: &[f64], halfwidth: f64, panels: usize) -> Complex64 {
    assert!(halfwidth > 0.0, "halfwidth must be positive");
    let panels = panels.max(16).next_multiple_of(2);
    if k.is_zero() {
        return Complex64::new(0.0, 0.0);
    }
    let (gx, gw) = gauss_legendre(8);
    let width = 2.0 * halfwidth / panels as f64;
    let nodes: Vec<(f64, f64)> = (0..panels)
        .flat_map(|p| {
            let a = -halfwidth + p as f64 * width;
            gx.iter().zip(&gw).map(move |(x, w)| (a + 0.5 * width * (x + 1.0), 0.5 * width * w))
        })
        .collect();
    match k.dim() {
        1 => nodes.iter().map(|&(t, w)| k.eval(&[t]) * Complex64::from_polar(w, -t * xi[0])).sum(),
        _ => {
            let mut total = Complex64::new(0.0, 0.0);
            for &(t1, w1) in &nodes {
                let mut row = Complex64::new(0.0, 0.0);
                for &(t2, w2) in &nodes {
                    row += k.eval(&[t1, t2]) * Complex64::from_polar(w2, -t2 * xi[1]);
                }
                total += row * Complex64::from_polar(w1, -t1 * xi[0]);
            }
            total
        }
    }
}

impl Kernel {
    /// Parses the literal grammar `zero`, `exp(m=..)`, `gauss(s=..)`,
    /// `sum(<coef>*<kernel>, ...)`.
    pub fn parse(input: &str, dim: usize) -> Result<Self> {
        check_dim(dim)?;
        let call = Call::parse(input)?;
        match call.name {
            "zero" if call.args.is_empty() => Ok(Kernel::zero(dim)),
            "exp" => {
                call.reject_unknown_keywords(input, &["m", "k"])?;
                Kernel::exponential(dim, call.keyword_f64(input, &["m", "k"])?)
            }
            "gauss" => {
                call.reject_unknown_keywords(input, &["s"])?;
                Kernel::gaussian(dim, call.keyword_f64(input, &["s"])?)
            }
            "sum" => {
                let mut parts = Vec::new();
                for arg in &call.args {
                    let pieces = split_top_level(arg, '*').map_err(|m| Error::parse(input, m))?;
                    let (coef, kernel) = match pieces.as_slice() {
                        [k] => (Complex64::new(1.0, 0.0), *k),
                        [c, k] => (parse_complex(c)?, *k),
                        _ => return Err(Error::parse(input, format!("bad sum term `{arg}`"))),
                    };
                    parts.push((coef, Kernel::parse(kernel, dim)?));
                }
                if parts.is_empty() {
                    return Ok(Kernel::zero(dim));
                }
                Kernel::scaled_sum(parts)
            }
            other => Err(Error::parse(input, format!("unknown kernel `{other}`"))),
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Profile::Exponential { rate } => write!(f, "exp(m={rate})"),
            Profile::Gaussian { width } => write!(f, "gauss(s={width})"),
        }
    }
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.terms.as_slice() {
            [] => write!(f, "zero"),
            [(c, p)] if *c == Complex64::new(1.0, 0.0) => write!(f, "{p}"),
            terms => {
                write!(f, "sum(")?;
                for (i, (c, p)) in terms.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "({})*{p}", format_complex(*c))?;
                }
                write!(f, ")")
            }
        }
    }
}
