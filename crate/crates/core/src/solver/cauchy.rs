//! `u' + Au = f`, `u(0) = 0`, by the resolvent multiplier on a doubled box
//! and, independently, by quadrature of `u(t) = ∫₀ᵗ e^{-(t-s)A} f(s) ds`.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;

use super::{relative, Solution};
use crate::error::{Error, Result};
use crate::linalg::{gauss_legendre, op_norm, CMatrix, CVector};
use crate::multiplier::{
    apply_multipliers, cauchy_symbol, lp_norm, CauchyTerm, ENorm, Grid, GridFunction, MultiplierSymbol,
};
use crate::sectorial::{log_spaced, SectorialOperator};

/// `f` may not exceed this fraction of its maximum on `t < 0`.
const CAUSALITY_TOL: f64 = 1e-12;

/// Interpolation stencil width of the quadrature path.
const STENCIL: usize = 8;

/// Gauss points per step of the quadrature path.
const GAUSS_POINTS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CauchyOptions {
    /// Also run the semigroup quadrature and report the discrepancy.
    pub semigroup_check: bool,
}

impl Default for CauchyOptions {
    fn default() -> Self {
        Self { semigroup_check: true }
    }
}

/// `‖u‖_θ/‖f‖_q`, `‖u'‖_θ/‖f‖_q` and `‖Au‖_θ/‖f‖_q` on `t >= 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormPair {
    pub theta: f64,
    pub u: f64,
    pub u_prime: f64,
    pub au: f64,
}

#[derive(Debug, Clone)]
pub struct CauchySolution {
    /// Multiplier-path solution with `u'` and `Au`.
    pub solution: Solution,
    pub semigroup_u: Option<GridFunction>,
    /// `‖u_multiplier − u_semigroup‖₂/‖u_semigroup‖₂`.
    pub discrepancy: Option<f64>,
    /// Entries for `θ = q` and `θ = 2q`; empty when `f = 0`.
    pub norm_pairs: Vec<NormPair>,
}

/// Index of the node `t = 0`.
fn origin(grid: &Grid) -> usize {
    grid.n() / 2
}

fn check_causal(f: &GridFunction) -> Result<()> {
    let o = origin(f.grid());
    let before = (0..o).flat_map(|j| f.at(j).iter()).map(|z| z.norm()).fold(0.0, f64::max);
    if before > CAUSALITY_TOL * f.max_abs() {
        return Err(Error::NotCausal { max_abs: before });
    }
    Ok(())
}

/// Solves on `[−2L, 2L)` with `f` extended by zero, restricts to `[−L, L)`
/// and zeroes `t < 0`.
pub fn solve_cauchy(
    op: &Arc<SectorialOperator>,
    f: &GridFunction,
    q: f64,
    options: CauchyOptions,
) -> Result<CauchySolution> {
    let grid = f.grid().clone();
    if grid.dim() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, got: grid.dim() });
    }
    if f.e_dim() != op.dim() {
        return Err(Error::DimensionMismatch { expected: op.dim(), got: f.e_dim() });
    }
    if !op.is_invertible() {
        return Err(Error::ZeroFrequency);
    }
    if !(q > 1.0 && q.is_finite()) {
        return Err(Error::invalid(format!("q must lie in (1, ∞), got {q}")));
    }
    check_causal(f)?;

    let n = grid.n();
    let big = grid.enlarged(2)?;
    let shift = n / 2;
    let mut fe = GridFunction::zeros(big.clone(), f.e_dim());
    for j in 0..n {
        fe.at_mut(j + shift).copy_from_slice(f.at(j));
    }
    let syms = [CauchyTerm::M0, CauchyTerm::ItResolvent, CauchyTerm::AResolvent].map(|t| cauchy_symbol(op.clone(), t));
    let refs: Vec<&dyn MultiplierSymbol> = syms.iter().map(|m| m as &dyn MultiplierSymbol).collect();
    let out = apply_multipliers(&refs, &fe)?;
    let restrict = |g: &GridFunction| {
        let mut r = GridFunction::zeros(grid.clone(), g.e_dim());
        for j in origin(&grid)..n {
            r.at_mut(j).copy_from_slice(g.at(j + shift));
        }
        r
    };
    let mut parts = out.outputs.iter().map(restrict);
    let u = parts.next().expect("three outputs");
    let u_prime = parts.next().expect("three outputs");
    let au = parts.next().expect("three outputs");
    let residual = relative(&u_prime.axpy(Complex64::new(1.0, 0.0), &au)?, f, q, &ENorm::Euclidean)?;

    let nf = lp_norm(f, q);
    let norm_pairs = if nf > 0.0 {
        [q, 2.0 * q]
            .iter()
            .map(|&theta| NormPair {
                theta,
                u: lp_norm(&u, theta) / nf,
                u_prime: lp_norm(&u_prime, theta) / nf,
                au: lp_norm(&au, theta) / nf,
            })
            .collect()
    } else {
        Vec::new()
    };

    let (semigroup_u, discrepancy) = if options.semigroup_check {
        let s = semigroup_convolution(op, f)?;
        let d = relative(&u, &s, 2.0, &ENorm::Euclidean)?;
        (Some(s), Some(d))
    } else {
        (None, None)
    };
    let mut derived = std::collections::BTreeMap::new();
    derived.insert("u'".to_string(), u_prime);
    derived.insert("Au".to_string(), au);
    Ok(CauchySolution {
        solution: Solution { u, derived, residual, mean_projected: out.mean_projected },
        semigroup_u,
        discrepancy,
        norm_pairs,
    })
}

/// Lagrange basis polynomial `i` on `nodes`, evaluated at `s`.
fn lagrange(nodes: &[f64], i: usize, s: f64) -> f64 {
    nodes.iter().enumerate().filter(|(m, _)| *m != i).map(|(_, &tm)| (s - tm) / (nodes[i] - tm)).product()
}

/// Exponential integrator on the grid samples of `f`:
/// `u_{j+1} = e^{-hA}u_j + Σ_i W_i f_{s+i}` with
/// `W_i = ∫₀ʰ e^{-(h-s)A} ℓ_i(s) ds` for the 8-point interpolant of `f`
/// around `[t_j, t_{j+1}]`.
pub fn semigroup_convolution(op: &SectorialOperator, f: &GridFunction) -> Result<GridFunction> {
    let grid = f.grid().clone();
    let n = grid.n();
    let h = grid.spacing();
    let (gx, gw) = gauss_legendre(GAUSS_POINTS);
    let nodes_s: Vec<f64> = gx.iter().map(|x| 0.5 * h * (x + 1.0)).collect();
    let weights_s: Vec<f64> = gw.iter().map(|w| 0.5 * h * w).collect();
    let kernels: Vec<CMatrix> = nodes_s.iter().map(|s| op.semigroup_matrix(h - s)).collect::<Result<_>>()?;
    let step = op.semigroup_matrix(h)?;

    // the stencil starts 3 nodes before t_j except near the right edge
    let weights_for = |offset: i64| -> Vec<CMatrix> {
        let nodes: Vec<f64> = (0..STENCIL as i64).map(|m| (offset + m) as f64 * h).collect();
        (0..STENCIL)
            .map(|i| {
                let mut w = CMatrix::zeros(op.dim(), op.dim());
                for g in 0..GAUSS_POINTS {
                    w += &kernels[g] * Complex64::new(weights_s[g] * lagrange(&nodes, i, nodes_s[g]), 0.0);
                }
                w
            })
            .collect()
    };
    let offsets: HashMap<i64, Vec<CMatrix>> = (-(STENCIL as i64) + 1..=-3).map(|o| (o, weights_for(o))).collect();

    let mut u = GridFunction::zeros(grid.clone(), f.e_dim());
    let mut current = CVector::zeros(f.e_dim());
    for j in origin(&grid)..n - 1 {
        let start = (j as i64 - 3).clamp(0, (n - STENCIL) as i64);
        let w = &offsets[&(start - j as i64)];
        let mut next = &step * &current;
        for (i, wi) in w.iter().enumerate() {
            next += wi * f.vector_at(start as usize + i);
        }
        u.at_mut(j + 1).copy_from_slice(next.as_slice());
        current = next;
    }
    Ok(u)
}

/// Seeded smooth causal test function `v·(t−s₀)₊⁶e^{−β(t−s₀)}`, scaled to
/// unit maximum, with `s₀ ∈ [0, L/8]` and `β ∈ [1.5, 3]`.
pub fn causal_pulse<R: Rng + ?Sized>(grid: &Grid, e_dim: usize, rng: &mut R) -> GridFunction {
    let s0: f64 = rng.random_range(0.0..=grid.half_length() / 8.0);
    let beta: f64 = rng.random_range(1.5..=3.0);
    let v = crate::rng::unit_vector(rng, e_dim);
    let peak = (6.0 / beta).powi(6) * (-6.0f64).exp();
    GridFunction::from_fn(grid.clone(), e_dim, |x, out| {
        let t = x[0] - s0;
        let a = if t > 0.0 { t.powi(6) * (-beta * t).exp() / peak } else { 0.0 };
        for (o, vi) in out.iter_mut().zip(&v) {
            *o = vi * a;
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct M1Row {
    pub t_max: f64,
    /// `sup_{|t|<=T} |t|^{1/q−1/θ}‖itR(it,A)‖`.
    pub weighted_sup: f64,
    /// `sup_{|t|<=T} |t|^{1/q−1/θ}‖itR(it,A) − I‖`.
    pub literal_sup: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct M1Table {
    pub q: f64,
    pub theta: f64,
    pub exponent: f64,
    pub rows: Vec<M1Row>,
    /// Least-squares slope of `log weighted_sup` against `log T`.
    pub slope: f64,
    /// `(max − min)/max` of the weighted sups across `T`.
    pub variation: f64,
}

impl M1Table {
    /// Bounded-control verdict for `q = θ`: variation below 1%.
    pub fn bounded(&self) -> bool {
        self.variation < 0.01
    }
}

impl fmt::Display for M1Table {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "weighted sup of |t|^{:.6} |m(t)| (q = {}, theta = {})", self.exponent, self.q, self.theta)?;
        writeln!(f, "  {:>12}  {:>16}  {:>16}", "T", "it R(it,A)", "it R(it,A) - I")?;
        for r in &self.rows {
            writeln!(f, "  {:>12.4e}  {:>16.8e}  {:>16.8e}", r.t_max, r.weighted_sup, r.literal_sup)?;
        }
        write!(f, "  fitted slope = {:.6}, variation = {:.3e}", self.slope, self.variation)
    }
}

/// Growth of the weighted Cauchy symbols on `|t| <= T` for each `T`.
pub fn negative_test_m1(op: &SectorialOperator, q: f64, theta: f64, t_list: &[f64]) -> Result<M1Table> {
    if !(q > 1.0 && theta >= q && theta.is_finite()) {
        return Err(Error::invalid(format!("need 1 < q <= theta < ∞, got q={q}, theta={theta}")));
    }
    if t_list.len() < 2 || t_list.windows(2).any(|w| !(w[1] > w[0])) || t_list[0] <= 1e-3 {
        return Err(Error::invalid("T list must hold at least two increasing values above 1e-3"));
    }
    let w = 1.0 / q - 1.0 / theta;
    let n = op.dim();
    let eval = |t: f64| -> Result<(f64, f64)> {
        let it = Complex64::new(0.0, t);
        let m = op.resolvent_matrix(it)? * it;
        let lit = &m - CMatrix::identity(n, n);
        let s = t.abs().powf(w);
        Ok((s * op_norm(&m), s * op_norm(&lit)))
    };
    let t_max = *t_list.last().expect("nonempty");
    let decades = (t_max / 1e-3).log10();
    let ts = log_spaced(1e-3, t_max, (decades * 200.0).ceil() as usize + 1);
    let values: Vec<(f64, f64, f64)> =
        ts.iter().flat_map(|&t| [t, -t]).map(|t| eval(t).map(|(a, b)| (t.abs(), a, b))).collect::<Result<_>>()?;
    let rows: Vec<M1Row> = t_list
        .iter()
        .map(|&tm| {
            // include the endpoint exactly
            let (ea, eb) = eval(tm).unwrap_or((0.0, 0.0));
            let (a, b) = values.iter().filter(|v| v.0 <= tm).fold((ea, eb), |acc, v| (acc.0.max(v.1), acc.1.max(v.2)));
            M1Row { t_max: tm, weighted_sup: a, literal_sup: b }
        })
        .collect();
    let xs: Vec<f64> = rows.iter().map(|r| r.t_max.ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.weighted_sup.ln()).collect();
    let mx = xs.iter().sum::<f64>() / xs.len() as f64;
    let my = ys.iter().sum::<f64>() / ys.len() as f64;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sups: Vec<f64> = rows.iter().map(|r| r.weighted_sup).collect();
    let hi = sups.iter().copied().fold(0.0, f64::max);
    let lo = sups.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(M1Table { q, theta, exponent: w, rows, slope: sxy / sxx, variation: (hi - lo) / hi })
}
