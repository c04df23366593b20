//! Uniform periodic grids on `[-L, L)^d`, E-valued grid functions, the
//! discrete transform pair, and rectangle-rule `L_p` norms.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::fmt;
use std::io::{BufRead, Write};

use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::grammar::Call;
use crate::linalg::CVector;

/// Uniform periodic grid with `n` points per axis on `[-L, L)^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    dim: usize,
    n: usize,
    half_length: f64,
}

impl Grid {
    pub fn new(dim: usize, n: usize, half_length: f64) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::invalid(format!("grid dimension must be 1 or 2, got {dim}")));
        }
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::invalid(format!("points per axis must be a power of two >= 8, got {n}")));
        }
        if !(half_length > 0.0 && half_length.is_finite()) {
            return Err(Error::invalid(format!("half-length must be positive, got {half_length}")));
        }
        Ok(Self { dim, n, half_length })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Points per axis.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn half_length(&self) -> f64 {
        self.half_length
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_length / self.n as f64
    }

    pub fn cell_measure(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    /// Measure of the whole box, `(2L)^d`.
    pub fn measure(&self) -> f64 {
        (2.0 * self.half_length).powi(self.dim as i32)
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn axis_indices(&self, flat: usize) -> [usize; 2] {
        if self.dim == 1 {
            [flat, 0]
        } else {
            [flat / self.n, flat % self.n]
        }
    }

    /// Coordinates of node `flat`.
    pub fn node(&self, flat: usize) -> Vec<f64> {
        let idx = self.axis_indices(flat);
        (0..self.dim).map(|a| -self.half_length + idx[a] as f64 * self.spacing()).collect()
    }

    /// Signed mode numbers `k ∈ {-N/2, ..., N/2-1}` of spectral slot `flat`
    /// (FFT ordering per axis).
    pub fn mode(&self, flat: usize) -> Vec<i64> {
        let idx = self.axis_indices(flat);
        (0..self.dim).map(|a| signed_mode(idx[a], self.n)).collect()
    }

    /// Frequencies `ξ_k = πk/L` of spectral slot `flat`.
    pub fn frequency(&self, flat: usize) -> Vec<f64> {
        self.mode(flat).into_iter().map(|k| PI * k as f64 / self.half_length).collect()
    }

    /// Spectral slot of the signed mode vector `k`.
    pub fn slot(&self, modes: &[i64]) -> Option<usize> {
        if modes.len() != self.dim {
            return None;
        }
        let half = (self.n / 2) as i64;
        let mut flat = 0;
        for &k in modes {
            if k < -half || k >= half {
                return None;
            }
            let i = if k < 0 { (k + self.n as i64) as usize } else { k as usize };
            flat = flat * self.n + i;
        }
        Some(flat)
    }

    /// Same box with `factor` times more points per axis.
    pub fn refined(&self, factor: usize) -> Result<Self> {
        Grid::new(self.dim, self.n * factor, self.half_length)
    }

    /// Box scaled by `factor` at the same spacing.
    pub fn enlarged(&self, factor: usize) -> Result<Self> {
        Grid::new(self.dim, self.n * factor, self.half_length * factor as f64)
    }

    /// Parses `grid(d=, N=, L=)`.
    pub fn parse(input: &str) -> Result<Self> {
        let call = Call::parse(input)?;
        if call.name != "grid" {
            return Err(Error::parse(input, "expected grid(d=, N=, L=)"));
        }
        call.reject_unknown_keywords(input, &["d", "N", "L"])?;
        let d = call.keyword(&["d"]).map(|_| call.keyword_f64(input, &["d"])).transpose()?.unwrap_or(1.0);
        let n = call.keyword_f64(input, &["N"])?;
        let l = call.keyword_f64(input, &["L"])?;
        if d.fract() != 0.0 || n.fract() != 0.0 || d < 1.0 || n < 1.0 {
            return Err(Error::parse(input, "d and N must be positive integers"));
        }
        Grid::new(d as usize, n as usize, l)
    }
}

impl fmt::Display for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "grid(d={}, N={}, L={})", self.dim, self.n, self.half_length)
    }
}

fn signed_mode(i: usize, n: usize) -> i64 {
    if i < n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

/// `C^n`-valued samples on a grid, stored node-major: `values[node * n + component]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: Grid,
    e_dim: usize,
    values: Vec<Complex64>,
}

/// Transform coefficients in the same layout as [`GridFunction`], indexed by
/// spectral slot (FFT ordering).
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralData {
    grid: Grid,
    e_dim: usize,
    values: Vec<Complex64>,
}

macro_rules! layout_accessors {
    ($t:ty) => {
        impl $t {
            pub fn grid(&self) -> &Grid {
                &self.grid
            }

            pub fn e_dim(&self) -> usize {
                self.e_dim
            }

            pub fn values(&self) -> &[Complex64] {
                &self.values
            }

            pub fn values_mut(&mut self) -> &mut [Complex64] {
                &mut self.values
            }

            pub fn at(&self, flat: usize) -> &[Complex64] {
                &self.values[flat * self.e_dim..(flat + 1) * self.e_dim]
            }

            pub fn at_mut(&mut self, flat: usize) -> &mut [Complex64] {
                &mut self.values[flat * self.e_dim..(flat + 1) * self.e_dim]
            }

            pub fn from_values(grid: Grid, e_dim: usize, values: Vec<Complex64>) -> Result<Self> {
                if e_dim == 0 {
                    return Err(Error::invalid("E-dimension must be positive"));
                }
                let expected = grid.len() * e_dim;
                if values.len() != expected {
                    return Err(Error::DimensionMismatch { expected, got: values.len() });
                }
                if values.iter().any(|z| !z.is_finite()) {
                    return Err(Error::invalid("non-finite entry"));
                }
                Ok(Self { grid, e_dim, values })
            }

            pub fn zeros(grid: Grid, e_dim: usize) -> Self {
                let len = grid.len() * e_dim;
                Self { grid, e_dim, values: vec![Complex64::new(0.0, 0.0); len] }
            }
        }
    };
}

layout_accessors!(GridFunction);
layout_accessors!(SpectralData);

impl GridFunction {
    /// Samples `fill(x, out)` at every node.
    pub fn from_fn(grid: Grid, e_dim: usize, mut fill: impl FnMut(&[f64], &mut [Complex64])) -> Self {
        let mut f = Self::zeros(grid, e_dim);
        for node in 0..f.grid.len() {
            let x = f.grid.node(node);
            fill(&x, f.at_mut(node));
        }
        f
    }

    pub fn vector_at(&self, flat: usize) -> CVector {
        DVector::from_column_slice(self.at(flat))
    }

    /// Applies `op` to the E-value at each node.
    pub fn map_pointwise(&self, op: impl Fn(&CVector) -> CVector + Sync) -> Self {
        let n = self.e_dim;
        let mut out = self.clone();
        out.values.par_chunks_mut(n).zip(self.values.par_chunks(n)).for_each(|(o, v)| {
            let r = op(&DVector::from_column_slice(v));
            o.copy_from_slice(r.as_slice());
        });
        out
    }

    /// Restricts to components `start..start+len` of E.
    pub fn components(&self, start: usize, len: usize) -> Self {
        let mut out = Self::zeros(self.grid.clone(), len);
        for node in 0..self.grid.len() {
            out.at_mut(node).copy_from_slice(&self.at(node)[start..start + len]);
        }
        out
    }

    fn check_same_layout(&self, other: &Self) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::invalid("grid functions live on different grids"));
        }
        if self.e_dim != other.e_dim {
            return Err(Error::DimensionMismatch { expected: self.e_dim, got: other.e_dim });
        }
        Ok(())
    }

    /// `a·self + other`.
    pub fn axpy(&self, a: Complex64, other: &Self) -> Result<Self> {
        self.check_same_layout(other)?;
        let values = self.values.iter().zip(&other.values).map(|(x, y)| a * x + y).collect();
        Ok(Self { grid: self.grid.clone(), e_dim: self.e_dim, values })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        other.axpy(Complex64::new(-1.0, 0.0), self)
    }

    pub fn scale(&self, a: Complex64) -> Self {
        Self { grid: self.grid.clone(), e_dim: self.e_dim, values: self.values.iter().map(|x| a * x).collect() }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|z| *z == Complex64::new(0.0, 0.0))
    }

    /// Random trigonometric polynomial with modes `|k_a| <= max_mode` on every axis.
    pub fn random_trig<R: Rng + ?Sized>(grid: Grid, e_dim: usize, max_mode: usize, rng: &mut R) -> Self {
        let mut spec = SpectralData::zeros(grid.clone(), e_dim);
        for slot in 0..grid.len() {
            if grid.mode(slot).iter().all(|k| k.unsigned_abs() as usize <= max_mode) {
                for z in spec.at_mut(slot) {
                    *z = crate::rng::complex_normal(rng);
                }
            }
        }
        idft(&spec)
    }
}

impl SpectralData {
    pub fn vector_at(&self, flat: usize) -> CVector {
        DVector::from_column_slice(self.at(flat))
    }
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plans(n: usize) -> (std::sync::Arc<dyn Fft<f64>>, std::sync::Arc<dyn Fft<f64>>) {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        (p.plan_fft_forward(n), p.plan_fft_inverse(n))
    })
}

/// Unscaled FFT of every E-component, forward or inverse, in place.
fn fft_components(grid: &Grid, e_dim: usize, values: &mut [Complex64], inverse: bool) {
    let n = grid.n();
    let len = grid.len();
    let dim = grid.dim();
    let columns: Vec<Vec<Complex64>> = (0..e_dim)
        .into_par_iter()
        .map(|c| {
            let (fwd, inv) = plans(n);
            let plan = if inverse { inv } else { fwd };
            let mut col: Vec<Complex64> = (0..len).map(|i| values[i * e_dim + c]).collect();
            if dim == 1 {
                plan.process(&mut col);
            } else {
                // rows are contiguous along axis 1
                for row in col.chunks_mut(n) {
                    plan.process(row);
                }
                let mut buf = vec![Complex64::new(0.0, 0.0); n];
                for j in 0..n {
                    for i in 0..n {
                        buf[i] = col[i * n + j];
                    }
                    plan.process(&mut buf);
                    for i in 0..n {
                        col[i * n + j] = buf[i];
                    }
                }
            }
            col
        })
        .collect();
    for (c, col) in columns.into_iter().enumerate() {
        for (i, z) in col.into_iter().enumerate() {
            values[i * e_dim + c] = z;
        }
    }
}

/// `(-1)^{Σ k_a}` for the phase shift from the box origin `-L`.
fn parity(grid: &Grid, slot: usize) -> f64 {
    if grid.mode(slot).iter().sum::<i64>().rem_euclid(2) == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Coefficients `F̂(ξ_k) = h^d Σ_j f(x_j) e^{-i ξ_k·x_j}`, which approximate
/// the continuum transform at the grid frequencies.
pub fn dft(f: &GridFunction) -> SpectralData {
    let grid = f.grid.clone();
    let mut values = f.values.clone();
    fft_components(&grid, f.e_dim, &mut values, false);
    let h = grid.cell_measure();
    for slot in 0..grid.len() {
        let s = h * parity(&grid, slot);
        for z in &mut values[slot * f.e_dim..(slot + 1) * f.e_dim] {
            *z *= s;
        }
    }
    SpectralData { grid, e_dim: f.e_dim, values }
}

/// Exact inverse of [`dft`]: the Riemann sum of the inverse transform,
/// `f(x_j) = (2π)^{-d} Σ_k F̂(ξ_k) e^{i ξ_k·x_j} (π/L)^d`.
pub fn idft(spec: &SpectralData) -> GridFunction {
    let grid = spec.grid.clone();
    let mut values = spec.values.clone();
    let scale = 1.0 / grid.measure();
    for slot in 0..grid.len() {
        let s = scale * parity(&grid, slot);
        for z in &mut values[slot * spec.e_dim..(slot + 1) * spec.e_dim] {
            *z *= s;
        }
    }
    fft_components(&grid, spec.e_dim, &mut values, true);
    GridFunction { grid, e_dim: spec.e_dim, values }
}

/// Coefficient-side 2-norm matching the grid `L_2` norm under the transform scaling.
pub fn spectral_l2_norm(spec: &SpectralData) -> f64 {
    let terms: Vec<f64> = spec.values.iter().map(|z| z.norm_sqr()).collect();
    (pairwise_sum(&terms) / spec.grid.measure()).sqrt()
}

/// Pointwise norm used on `E`.
#[derive(Debug, Clone, PartialEq)]
pub enum ENorm {
    /// Euclidean norm on `C^n`.
    Euclidean,
    /// `(Σ_i weight·|v_i|^exponent)^{1/exponent}`, the rectangle-rule norm of
    /// `L_exponent` over a spatial grid (with `l_p` structure for stacked
    /// components).
    Lp { exponent: f64, weight: f64 },
}

impl ENorm {
    pub fn eval(&self, v: &[Complex64]) -> f64 {
        match *self {
            ENorm::Euclidean => crate::linalg::vector_norm(v),
            ENorm::Lp { exponent, weight } => {
                let s: f64 = v.iter().map(|z| weight * z.norm().powf(exponent)).sum();
                s.powf(1.0 / exponent)
            }
        }
    }
}

/// Fixed-shape pairwise summation; the result is independent of thread count.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const LEAF: usize = 64;
    if xs.len() <= LEAF {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Rectangle-rule `(Σ h^d ‖f(x)‖^p)^{1/p}` with the Euclidean E-norm.
pub fn lp_norm(f: &GridFunction, p: f64) -> f64 {
    lp_norm_with(f, p, &ENorm::Euclidean)
}

pub fn lp_norm_with(f: &GridFunction, p: f64, enorm: &ENorm) -> f64 {
    assert!(p >= 1.0 && p.is_finite(), "exponent must lie in [1, ∞), got {p}");
    let h = f.grid.cell_measure();
    let terms: Vec<f64> = f.values.par_chunks(f.e_dim).map(|v| enorm.eval(v).powf(p)).collect();
    (h * pairwise_sum(&terms)).powf(1.0 / p)
}

/// Writes `k0[,k1],re_0,im_0,...` rows, one per spectral slot, with a header.
pub fn write_spectral_csv<W: Write>(spec: &SpectralData, mut out: W) -> std::io::Result<()> {
    let grid = &spec.grid;
    let mut header: Vec<String> = (0..grid.dim()).map(|a| format!("k{a}")).collect();
    for c in 0..spec.e_dim {
        header.push(format!("re_{c}"));
        header.push(format!("im_{c}"));
    }
    writeln!(out, "{}", header.join(","))?;
    for slot in 0..grid.len() {
        let mut row: Vec<String> = grid.mode(slot).iter().map(|k| k.to_string()).collect();
        for z in spec.at(slot) {
            row.push(format!("{:e}", z.re));
            row.push(format!("{:e}", z.im));
        }
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

/// Reads the format of [`write_spectral_csv`]; slots not listed are zero.
pub fn read_spectral_csv<R: BufRead>(grid: Grid, input: R) -> Result<SpectralData> {
    let mut lines = input.lines();
    let header = lines.next().ok_or_else(|| Error::parse("<csv>", "empty input"))??;
    let cols = header.split(',').count();
    let d = grid.dim();
    if cols < d + 2 || !(cols - d).is_multiple_of(2) {
        return Err(Error::parse(&header, "expected k-index columns then re/im pairs"));
    }
    let e_dim = (cols - d) / 2;
    let mut spec = SpectralData::zeros(grid, e_dim);
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != cols {
            return Err(Error::parse(&line, format!("expected {cols} columns")));
        }
        let modes = fields[..d]
            .iter()
            .map(|s| s.parse::<i64>().map_err(|_| Error::parse(&line, "bad k-index")))
            .collect::<Result<Vec<_>>>()?;
        let slot = spec.grid.slot(&modes).ok_or_else(|| Error::parse(&line, "k-index out of range"))?;
        let nums = fields[d..]
            .iter()
            .map(|s| s.parse::<f64>().map_err(|_| Error::parse(&line, "bad number")))
            .collect::<Result<Vec<_>>>()?;
        for (c, pair) in nums.chunks(2).enumerate() {
            spec.at_mut(slot)[c] = Complex64::new(pair[0], pair[1]);
        }
    }
    Ok(spec)
}
