//! Fading-memory heat conduction and a truncated system of diffusion
//! equations.

use std::f64::consts::PI;
use std::fmt;
use std::io::Write;
use std::sync::Arc;

use super::cauchy::{causal_pulse, solve_cauchy, CauchyOptions};
use super::{default_half_length, solve_parabolic_unchecked};
use crate::conditions::{
    check_condition_4_1, default_xi_sample, ConditionReport, ParabolicCoefficients, DEFAULT_TAIL_THRESHOLD,
};
use crate::error::{Error, Result};
use crate::multiplier::{lp_norm_with, wave_packet, ENorm, Grid, GridFunction};
use crate::sectorial::{CacheStats, SectorialOperator};

/// Largest number of unknowns `K·n_x·N` accepted by the diffusion demo.
pub const MAX_UNKNOWNS: usize = 10_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct FadingMemoryParams {
    /// Rate of `a₁(t) = e^{-m|t|}`.
    pub m: f64,
    /// Rate of `b₁(t) = e^{-k|t|}`.
    pub k: f64,
    /// Shift in `A = −∂_xx + c`.
    pub c: f64,
    pub n_x: usize,
    pub grid: Grid,
    /// Time exponent of `X = L_p(R; L_q(Ω))`.
    pub p: f64,
    /// Space exponent of `X`.
    pub q_spatial: f64,
    pub ensemble_size: usize,
    pub seed: u64,
    /// Reuse resolvent factorizations across symbols and members.
    pub caching: bool,
}

impl FadingMemoryParams {
    /// `m = k = c = 1`, `n_x = 32`, `N = 1024`, `L = 32/min(m,k)`, `p = q = 2`, 50 members.
    pub fn defaults() -> Self {
        Self::with_rates(1.0, 1.0, 1.0, 1024).expect("default parameters are valid")
    }

    pub fn with_rates(m: f64, k: f64, c: f64, n_t: usize) -> Result<Self> {
        if !(m > 0.0 && k > 0.0) {
            return Err(Error::invalid("kernel rates must be positive"));
        }
        Ok(Self {
            m,
            k,
            c,
            n_x: 32,
            grid: Grid::new(1, n_t, default_half_length(Some(m.min(k))))?,
            p: 2.0,
            q_spatial: 2.0,
            ensemble_size: 50,
            seed: 1,
            caching: true,
        })
    }
}

/// One ensemble member of the coercive-estimate study.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MemberRow {
    pub member_seed: u64,
    pub residual: f64,
    pub norm_u_prime: f64,
    pub norm_conv_u_prime: f64,
    pub norm_au: f64,
    pub norm_conv_au: f64,
    pub norm_f: f64,
    pub ratio_c: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct FadingMemoryReport {
    pub params: FadingMemoryParams,
    pub condition: ConditionReport,
    pub rows: Vec<MemberRow>,
    pub max_ratio: f64,
    pub median_ratio: f64,
    pub max_residual: f64,
    /// Members with `f = 0`, left out of the ratio statistics.
    pub excluded: usize,
    pub cache: CacheStats,
}

impl FadingMemoryReport {
    pub const CSV_HEADER: &'static str =
        "member_seed,residual,norm_u_prime,norm_conv_u_prime,norm_Au,norm_conv_Au,norm_f,ratio_C";

    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        Self::write_rows(&self.rows, out)
    }

    /// Writes `rows` under [`Self::CSV_HEADER`].
    pub fn write_rows<W: Write>(rows: &[MemberRow], mut out: W) -> std::io::Result<()> {
        writeln!(out, "{}", Self::CSV_HEADER)?;
        for r in rows {
            writeln!(
                out,
                "{},{:e},{:e},{:e},{:e},{:e},{:e},{}",
                r.member_seed,
                r.residual,
                r.norm_u_prime,
                r.norm_conv_u_prime,
                r.norm_au,
                r.norm_conv_au,
                r.norm_f,
                r.ratio_c.map_or("undefined".to_string(), |x| format!("{x:e}"))
            )?;
        }
        Ok(())
    }
}

impl fmt::Display for FadingMemoryReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = &self.params;
        writeln!(
            f,
            "fading memory: m = {}, k = {}, c = {}, n_x = {}, {}, X = L_{}(R; L_{}(0, pi))",
            p.m, p.k, p.c, p.n_x, p.grid, p.p, p.q_spatial
        )?;
        writeln!(f, "{}", self.condition)?;
        writeln!(f, "members: {} ({} excluded with f = 0)", self.rows.len(), self.excluded)?;
        writeln!(f, "ratio_C: max = {:.6e}, median = {:.6e}", self.max_ratio, self.median_ratio)?;
        writeln!(f, "max residual = {:.3e}", self.max_residual)?;
        write!(f, "factorization cache: {} hits, {} misses", self.cache.hits, self.cache.misses)
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Coercive-estimate study for `u' + e^{-m|·|}∗u' + Au + e^{-k|·|}∗Au = f`
/// with `A = −∂_xx + c` on `(0, π)` under Dirichlet conditions.
pub fn demo_fading_memory(params: &FadingMemoryParams) -> Result<FadingMemoryReport> {
    if !(params.c > 0.0) {
        return Err(Error::invalid("c must be positive"));
    }
    if params.grid.dim() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, got: params.grid.dim() });
    }
    let coeffs = ParabolicCoefficients::fading_memory(params.m, params.k)?;
    let op = Arc::new(SectorialOperator::dirichlet_laplacian(params.n_x, PI, params.c)?);
    op.set_caching(params.caching);
    let condition = check_condition_4_1(&coeffs, op.phi(), &default_xi_sample(1), DEFAULT_TAIL_THRESHOLD)?;
    if !condition.overall {
        return Err(Error::ConditionFailed(Box::new(condition)));
    }
    let h_x = PI / (params.n_x + 1) as f64;
    let enorm = ENorm::Lp { exponent: params.q_spatial, weight: h_x };
    let mut rows = Vec::with_capacity(params.ensemble_size);
    for i in 0..params.ensemble_size as u64 {
        let f = wave_packet(&params.grid, params.n_x, &mut crate::rng::stream(params.seed, i));
        let (sol, rep) = solve_parabolic_unchecked(&coeffs, &op, &f, params.p, &enorm)?;
        rows.push(MemberRow {
            member_seed: crate::rng::member_seed(params.seed, i),
            residual: sol.residual,
            norm_u_prime: rep.norm_u_prime,
            norm_conv_u_prime: rep.norm_conv_u_prime,
            norm_au: rep.norm_au,
            norm_conv_au: rep.norm_conv_au,
            norm_f: rep.norm_f,
            ratio_c: rep.ratio_c,
        });
    }
    let ratios: Vec<f64> = rows.iter().filter_map(|r| r.ratio_c).collect();
    Ok(FadingMemoryReport {
        params: params.clone(),
        condition,
        excluded: rows.len() - ratios.len(),
        max_ratio: ratios.iter().copied().fold(0.0, f64::max),
        median_ratio: median(ratios),
        max_residual: rows.iter().map(|r| r.residual).fold(0.0, f64::max),
        rows,
        cache: op.cache_stats(),
    })
}

/// Which components of the diffusion system are forced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiffusionForcing {
    /// The same pulse in every component.
    Identical,
    /// Independently seeded pulses.
    Distinct,
    /// A pulse in the first component only.
    FirstOnly,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionParams {
    /// Number of retained components.
    pub components: usize,
    /// Shift `c' > 0` in `A = −Δ_h + c'`.
    pub c: f64,
    pub grid: Grid,
    pub n_x: usize,
    /// Exponent of the `l_p(L_p(G))` structure on `E`.
    pub p_inner: f64,
    /// Time exponent.
    pub q: f64,
    pub seed: u64,
    pub forcing: DiffusionForcing,
    pub semigroup_check: bool,
}

impl DiffusionParams {
    pub fn defaults() -> Self {
        Self {
            components: 4,
            c: 1.0,
            grid: Grid::new(1, 1024, 32.0).expect("valid grid"),
            n_x: 16,
            p_inner: 2.0,
            q: 2.0,
            seed: 1,
            forcing: DiffusionForcing::Distinct,
            semigroup_check: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DiffusionReport {
    pub params: DiffusionParams,
    /// `u_k` on the time grid, one per component.
    pub solutions: Vec<GridFunction>,
    /// `‖u_k‖` in `L_q(R₊; L_p(G))`.
    pub component_norms: Vec<f64>,
    /// Norms of the stacked `u`, `u'`, `Au`, `f` in `L_q(R₊; l_p(L_p(G)))`.
    pub norm_u: f64,
    pub norm_u_prime: f64,
    pub norm_au: f64,
    pub norm_f: f64,
    pub max_residual: f64,
    pub max_discrepancy: Option<f64>,
}

impl DiffusionReport {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "component,norm_u")?;
        for (k, n) in self.component_norms.iter().enumerate() {
            writeln!(out, "{},{:e}", k + 1, n)?;
        }
        Ok(())
    }
}

impl fmt::Display for DiffusionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = &self.params;
        writeln!(
            f,
            "diffusion system: K = {}, c' = {}, n_x = {}, {}, E = l_{}(L_{}), time exponent {}",
            p.components, p.c, p.n_x, p.grid, p.p_inner, p.p_inner, p.q
        )?;
        let ratio = |x: f64| if self.norm_f > 0.0 { format!("{:.6e}", x / self.norm_f) } else { "undefined".into() };
        writeln!(
            f,
            "|u| = {:.6e}, |u'| = {:.6e}, |Au| = {:.6e}, |f| = {:.6e}",
            self.norm_u, self.norm_u_prime, self.norm_au, self.norm_f
        )?;
        writeln!(f, "|u'|/|f| = {}, |Au|/|f| = {}", ratio(self.norm_u_prime), ratio(self.norm_au))?;
        write!(
            f,
            "max residual = {:.3e}, max dual-path discrepancy = {}",
            self.max_residual,
            self.max_discrepancy.map_or("not computed".to_string(), |d| format!("{d:.3e}"))
        )
    }
}

fn stack(parts: &[GridFunction], grid: &Grid, n_x: usize) -> GridFunction {
    let mut out = GridFunction::zeros(grid.clone(), n_x * parts.len());
    for node in 0..grid.len() {
        for (k, p) in parts.iter().enumerate() {
            out.at_mut(node)[k * n_x..(k + 1) * n_x].copy_from_slice(p.at(node));
        }
    }
    out
}

/// `∂u_k/∂t + (−Δ + c')u_k = f_k`, `u_k(0) = 0`, for `k = 1..K`, solved
/// component by component.
pub fn demo_diffusion_system(params: &DiffusionParams) -> Result<DiffusionReport> {
    let k_count = params.components;
    if k_count == 0 {
        return Err(Error::invalid("need at least one component"));
    }
    if !(params.c > 0.0) {
        return Err(Error::invalid("c' must be positive so that A is positive definite"));
    }
    let unknowns = k_count.saturating_mul(params.n_x).saturating_mul(params.grid.len());
    if unknowns > MAX_UNKNOWNS {
        return Err(Error::TooLarge { unknowns, budget: MAX_UNKNOWNS });
    }
    let op = Arc::new(SectorialOperator::dirichlet_laplacian(params.n_x, PI, params.c)?);
    let grid = &params.grid;
    let options = CauchyOptions { semigroup_check: params.semigroup_check };
    let h_x = PI / (params.n_x + 1) as f64;
    let inner = ENorm::Lp { exponent: params.p_inner, weight: h_x };

    let mut fs = Vec::with_capacity(k_count);
    let mut us = Vec::with_capacity(k_count);
    let mut ups = Vec::with_capacity(k_count);
    let mut aus = Vec::with_capacity(k_count);
    let mut max_residual: f64 = 0.0;
    let mut max_discrepancy: Option<f64> = None;
    for k in 0..k_count {
        let f = match (params.forcing, k) {
            (DiffusionForcing::Identical, _) => causal_pulse(grid, params.n_x, &mut crate::rng::stream(params.seed, 0)),
            (DiffusionForcing::Distinct, _) => {
                causal_pulse(grid, params.n_x, &mut crate::rng::stream(params.seed, k as u64))
            }
            (DiffusionForcing::FirstOnly, 0) => causal_pulse(grid, params.n_x, &mut crate::rng::stream(params.seed, 0)),
            (DiffusionForcing::FirstOnly, _) => GridFunction::zeros(grid.clone(), params.n_x),
        };
        if f.is_zero() {
            for v in [&mut us, &mut ups, &mut aus] {
                v.push(GridFunction::zeros(grid.clone(), params.n_x));
            }
        } else {
            let s = solve_cauchy(&op, &f, params.q, options)?;
            max_residual = max_residual.max(s.solution.residual);
            if let Some(d) = s.discrepancy {
                max_discrepancy = Some(max_discrepancy.map_or(d, |m: f64| m.max(d)));
            }
            ups.push(s.solution.derived["u'"].clone());
            aus.push(s.solution.derived["Au"].clone());
            us.push(s.solution.u);
        }
        fs.push(f);
    }
    let component_norms = us.iter().map(|u| lp_norm_with(u, params.q, &inner)).collect();
    let norm = |parts: &[GridFunction]| lp_norm_with(&stack(parts, grid, params.n_x), params.q, &inner);
    Ok(DiffusionReport {
        params: params.clone(),
        component_norms,
        norm_u: norm(&us),
        norm_u_prime: norm(&ups),
        norm_au: norm(&aus),
        norm_f: norm(&fs),
        max_residual,
        max_discrepancy,
        solutions: us,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fading_memory_small_ensemble() {
        let mut p = FadingMemoryParams::with_rates(1.0, 1.0, 1.0, 512).unwrap();
        p.n_x = 8;
        p.ensemble_size = 4;
        let r = demo_fading_memory(&p).unwrap();
        assert!((r.condition.constant("C_b").unwrap() - 1.0).abs() < 0.01);
        assert_eq!(r.rows.len(), 4);
        assert!(r.max_residual < 1e-9);
        assert!(r.max_ratio.is_finite() && r.median_ratio <= r.max_ratio);
        let mut csv = Vec::new();
        r.write_csv(&mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 5);
    }

    #[test]
    fn diffusion_single_component_matches_cauchy() {
        let mut p = DiffusionParams::defaults();
        p.components = 1;
        p.n_x = 6;
        p.grid = Grid::new(1, 512, 32.0).unwrap();
        let r = demo_diffusion_system(&p).unwrap();
        let op = Arc::new(SectorialOperator::dirichlet_laplacian(6, PI, 1.0).unwrap());
        let f = causal_pulse(&p.grid, 6, &mut crate::rng::stream(p.seed, 0));
        let s = solve_cauchy(&op, &f, 2.0, CauchyOptions { semigroup_check: false }).unwrap();
        assert_eq!(r.solutions[0].values(), s.solution.u.values());
    }

    #[test]
    fn diffusion_decoupling_and_symmetry() {
        let mut p = DiffusionParams::defaults();
        p.n_x = 4;
        p.grid = Grid::new(1, 256, 32.0).unwrap();
        p.semigroup_check = false;
        p.forcing = DiffusionForcing::FirstOnly;
        let r = demo_diffusion_system(&p).unwrap();
        assert!(r.solutions[1..].iter().all(GridFunction::is_zero));

        p.components = 16;
        p.p_inner = 3.0;
        p.forcing = DiffusionForcing::Identical;
        let r = demo_diffusion_system(&p).unwrap();
        assert!(r.solutions.windows(2).all(|w| w[0].values() == w[1].values()));
        // with p_inner = q the l_p sum over components factors out
        p.q = 3.0;
        let r = demo_diffusion_system(&p).unwrap();
        let single = r.component_norms[0];
        assert!((r.norm_u - 16f64.powf(1.0 / 3.0) * single).abs() <= 1e-12 * r.norm_u);
    }

    #[test]
    fn diffusion_budget() {
        let mut p = DiffusionParams::defaults();
        p.components = 100_000;
        assert!(matches!(demo_diffusion_system(&p), Err(Error::TooLarge { .. })));
    }
}
