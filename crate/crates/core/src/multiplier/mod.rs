//! Fourier multipliers on the periodic box: transform, multiply frequency by
//! frequency, transform back.

mod grid;
mod symbols;

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

pub use grid::{
    dft, idft, lp_norm, lp_norm_with, pairwise_sum, read_spectral_csv, spectral_l2_norm, write_spectral_csv, ENorm,
    Grid, GridFunction, SpectralData,
};
pub use symbols::{
    cauchy_symbol, cauchy_symbols, doe_symbol, elliptic_symbol, parabolic_symbol, parabolic_symbols, CauchySymbols,
    CauchyTerm, ConstantSymbol, DoeTerm, MultiplierSymbol, ParabolicTerm, Parts, ResolventSymbol, ScalarSymbol,
    ZeroRule,
};

use crate::error::{Error, Result};
use crate::linalg::CVector;

/// Results of [`apply_multipliers`].
#[derive(Debug, Clone)]
pub struct MultiplierOutput {
    /// `T_{M_i} f`, in input order.
    pub outputs: Vec<GridFunction>,
    /// True when some symbol had no limit at `ξ = 0` and the mean of `f` was dropped.
    pub mean_projected: bool,
}

/// `F^{-1}[M(·) f̂(·)]`.
pub fn apply_multiplier(symbol: &dyn MultiplierSymbol, f: &GridFunction) -> Result<GridFunction> {
    Ok(apply_multipliers(&[symbol], f)?.outputs.pop().expect("one symbol in, one output out"))
}

/// Applies several symbols to `f` with one forward transform.
///
/// Frequencies are processed in parallel; every output slot is written by
/// exactly one task, so results do not depend on the thread count.
pub fn apply_multipliers(symbols: &[&dyn MultiplierSymbol], f: &GridFunction) -> Result<MultiplierOutput> {
    let grid = f.grid().clone();
    let n = f.e_dim();
    for s in symbols {
        if s.e_dim() != n {
            return Err(Error::DimensionMismatch { expected: s.e_dim(), got: n });
        }
        if s.space_dim() != grid.dim() {
            return Err(Error::DimensionMismatch { expected: s.space_dim(), got: grid.dim() });
        }
    }
    let zero_rules: Vec<ZeroRule> = symbols.iter().map(|s| s.zero_rule()).collect::<Result<_>>()?;
    let spec = dft(f);

    let per_slot: Vec<Result<Vec<CVector>>> = (0..grid.len())
        .into_par_iter()
        .map(|slot| {
            let v = spec.vector_at(slot);
            if grid.mode(slot).iter().all(|&k| k == 0) {
                return Ok(zero_rules
                    .iter()
                    .map(|rule| match rule {
                        ZeroRule::Value(m) => m * &v,
                        ZeroRule::ProjectMean => CVector::zeros(n),
                    })
                    .collect());
            }
            let xi = grid.frequency(slot);
            symbols.iter().map(|s| s.apply(&xi, &v)).collect()
        })
        .collect();

    let mut outs: Vec<SpectralData> = symbols.iter().map(|_| SpectralData::zeros(grid.clone(), n)).collect();
    for (slot, r) in per_slot.into_iter().enumerate() {
        for (out, v) in outs.iter_mut().zip(r?) {
            out.at_mut(slot).copy_from_slice(v.as_slice());
        }
    }
    let mean_projected = zero_rules.iter().any(|r| matches!(r, ZeroRule::ProjectMean))
        && spec.at(0).iter().any(|z| *z != Complex64::new(0.0, 0.0));
    Ok(MultiplierOutput { outputs: outs.iter().map(idft).collect(), mean_projected })
}

/// Smooth localized test function `v·e^{-|x-c|²/(2w²)}·e^{iω·x}` with seeded
/// center `c ∈ [-L/4, L/4]^d`, width `w ∈ [0.5, 2]`, `ω ∈ [-4, 4]^d` and unit `v`.
///
/// These are spectrally concentrated and spatially localized, so grid and
/// box refinements see the same continuum function.
pub fn wave_packet<R: Rng + ?Sized>(grid: &Grid, e_dim: usize, rng: &mut R) -> GridFunction {
    let d = grid.dim();
    let l = grid.half_length();
    let center: Vec<f64> = (0..d).map(|_| rng.random_range(-0.25 * l..=0.25 * l)).collect();
    let width: f64 = rng.random_range(0.5..=2.0);
    let omega: Vec<f64> = (0..d).map(|_| rng.random_range(-4.0..=4.0)).collect();
    let v = crate::rng::unit_vector(rng, e_dim);
    GridFunction::from_fn(grid.clone(), e_dim, |x, out| {
        let r2: f64 = x.iter().zip(&center).map(|(a, c)| (a - c) * (a - c)).sum();
        let phase: f64 = x.iter().zip(&omega).map(|(a, w)| a * w).sum();
        let s = Complex64::from_polar((-r2 / (2.0 * width * width)).exp(), phase);
        for (o, vi) in out.iter_mut().zip(&v) {
            *o = s * vi;
        }
    })
}

/// Band-limited discrete delta at node `at`: all modes `|k_a| <= max_mode`
/// with unit coefficient vector `v`.
pub fn band_limited_delta(grid: &Grid, at: usize, max_mode: usize, v: &[Complex64]) -> GridFunction {
    let x0 = grid.node(at);
    let mut spec = SpectralData::zeros(grid.clone(), v.len());
    for slot in 0..grid.len() {
        if grid.mode(slot).iter().all(|k| k.unsigned_abs() as usize <= max_mode) {
            let phase: f64 = grid.frequency(slot).iter().zip(&x0).map(|(xi, x)| -xi * x).sum();
            let e = Complex64::from_polar(1.0, phase);
            for (z, vi) in spec.at_mut(slot).iter_mut().zip(v) {
                *z = e * vi;
            }
        }
    }
    idft(&spec)
}

/// Member `index` of the norm-estimation ensemble: a constant for member 0,
/// random trigonometric polynomials for odd members, band-limited deltas for
/// the rest. All spectral content lies in `|k| <= N/4`.
pub fn norm_ensemble_member(grid: &Grid, e_dim: usize, seed: u64, index: u64) -> GridFunction {
    let mut rng = crate::rng::stream(seed, index);
    let max_mode = grid.n() / 4;
    match index {
        0 => {
            let v = crate::rng::unit_vector(&mut rng, e_dim);
            GridFunction::from_fn(grid.clone(), e_dim, |_, out| out.copy_from_slice(&v))
        }
        i if i % 2 == 1 => GridFunction::random_trig(grid.clone(), e_dim, max_mode, &mut rng),
        _ => {
            let at = rng.random_range(0..grid.len());
            let v = crate::rng::unit_vector(&mut rng, e_dim);
            band_limited_delta(grid, at, max_mode, &v)
        }
    }
}

/// Empirical lower bound for `‖T_M‖_{L_q → L_p}`: the largest ratio
/// `‖T_M f‖_p / ‖f‖_q` over a seeded ensemble.
pub fn estimate_lq_to_lp_norm(
    symbol: &dyn MultiplierSymbol,
    q: f64,
    p: f64,
    grid: &Grid,
    ensemble_size: usize,
    seed: u64,
) -> Result<f64> {
    if !crate::conditions::check_gap(q, p, grid.dim())? {
        return Err(Error::GapViolated { q, p, d: grid.dim() });
    }
    if ensemble_size == 0 {
        return Err(Error::invalid("ensemble size must be positive"));
    }
    let ratios: Vec<f64> = (0..ensemble_size as u64)
        .map(|i| {
            let f = norm_ensemble_member(grid, symbol.e_dim(), seed, i);
            let tf = apply_multiplier(symbol, &f)?;
            let nf = lp_norm(&f, q);
            Ok(if nf > 0.0 { lp_norm(&tf, p) / nf } else { 0.0 })
        })
        .collect::<Result<_>>()?;
    Ok(ratios.into_iter().fold(0.0, f64::max))
}

/// `e^{iπ k·x/L}` times `v`, the grid mode with index `k`.
pub fn single_mode(grid: &Grid, k: &[i64], v: &[Complex64]) -> GridFunction {
    let scale = PI / grid.half_length();
    GridFunction::from_fn(grid.clone(), v.len(), |x, out| {
        let phase: f64 = x.iter().zip(k).map(|(a, &kk)| a * kk as f64 * scale).sum();
        let e = Complex64::from_polar(1.0, phase);
        for (o, vi) in out.iter_mut().zip(v) {
            *o = e * vi;
        }
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::linalg::CMatrix;
    use crate::sectorial::SectorialOperator;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn grid1(n: usize, l: f64) -> Grid {
        Grid::new(1, n, l).unwrap()
    }

    #[test]
    fn identity_and_zero_symbols() {
        let g = grid1(64, 4.0);
        let f = GridFunction::random_trig(g.clone(), 2, 16, &mut crate::rng::stream(1, 0));
        let id = ConstantSymbol::identity(2, 1);
        let u = apply_multiplier(&id, &f).unwrap();
        assert!(u.sub(&f).unwrap().max_abs() <= 1e-12 * f.max_abs());
        let zero = ConstantSymbol::new(CMatrix::zeros(2, 2), 1);
        assert!(apply_multiplier(&zero, &f).unwrap().max_abs() == 0.0);
    }

    #[test]
    fn derivative_of_single_mode() {
        let l = 3.0;
        let g = grid1(64, l);
        let f = GridFunction::from_fn(g.clone(), 1, |x, out| out[0] = c((PI * x[0] / l).sin(), 0.0));
        let d = ScalarSymbol::partial(1, 1, 0);
        let u = apply_multiplier(&d, &f).unwrap();
        for node in 0..g.len() {
            let x = g.node(node)[0];
            let exact = PI / l * (PI * x / l).cos();
            assert!((u.at(node)[0] - c(exact, 0.0)).norm() < 1e-10);
        }
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let g = grid1(16, 1.0);
        let f = GridFunction::zeros(g, 3);
        let id = ConstantSymbol::identity(2, 1);
        assert!(matches!(apply_multiplier(&id, &f), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn norm_estimate_isometry_and_scaling() {
        let g = grid1(64, 8.0);
        let id = ConstantSymbol::identity(1, 1);
        let e = estimate_lq_to_lp_norm(&id, 2.0, 2.0, &g, 8, 3).unwrap();
        assert!((e - 1.0).abs() <= 1e-10);
        let two = ConstantSymbol::scaled_identity(1, 1, c(2.0, 0.0));
        let e = estimate_lq_to_lp_norm(&two, 3.0, 3.0, &g, 8, 3).unwrap();
        assert!((e - 2.0).abs() <= 1e-10);
    }

    #[test]
    fn it_resolvent_norm_grows_under_refinement() {
        let op = Arc::new(SectorialOperator::scalar(c(1.0, 0.0)).unwrap());
        let m = cauchy_symbol(op, CauchyTerm::ItResolvent);
        let est: Vec<f64> = [256usize, 1024, 4096]
            .iter()
            .map(|&n| estimate_lq_to_lp_norm(&m, 2.0, 4.0, &grid1(n, 16.0), 6, 9).unwrap())
            .collect();
        assert!(est[1] > 1.2 * est[0] && est[2] > 1.2 * est[1], "{est:?}");
    }

    #[test]
    fn elliptic_scalar_symbol() {
        use crate::conditions::EllipticCoefficients;
        use crate::kernels::Kernel;
        let op = Arc::new(SectorialOperator::scalar(c(2.0, 0.0)).unwrap());
        let coeffs = EllipticCoefficients::constant_laplacian(1);
        let s = elliptic_symbol(&coeffs, op.clone());
        for xi in [0.1, 1.0, 7.5] {
            let v = s.evaluate(&[xi]).unwrap()[(0, 0)];
            assert!((v - c(1.0 / (2.0 + xi * xi), 0.0)).norm() < 1e-14);
        }
        let ZeroRule::Value(z) = s.zero_rule().unwrap() else { panic!() };
        assert!((z[(0, 0)] - c(0.5, 0.0)).norm() < 1e-15);

        let mut coeffs = coeffs;
        coeffs.b1 = Kernel::exponential(1, 1.0).unwrap();
        let s = elliptic_symbol(&coeffs, op);
        for xi in [0.3, 2.0] {
            let mu = 1.0 / (1.0 + 2.0 / (1.0 + xi * xi));
            let expect = mu / (2.0 + xi * xi * mu);
            assert!((s.evaluate(&[xi]).unwrap()[(0, 0)] - c(expect, 0.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn parabolic_scalar_reduction() {
        use crate::conditions::ParabolicCoefficients;
        let a = 1.7;
        let op = Arc::new(SectorialOperator::scalar(c(a, 0.0)).unwrap());
        let ms = parabolic_symbols(&ParabolicCoefficients::constant(c(1.0, 0.0), c(1.0, 0.0)), op);
        for xi in [-3.0, 0.2, 5.0] {
            let d = c(a, xi);
            let v: Vec<Complex64> = ms.iter().map(|m| m.evaluate(&[xi]).unwrap()[(0, 0)]).collect();
            assert!((v[0] - 1.0 / d).norm() < 1e-14);
            assert!((v[1] - c(0.0, xi) / d).norm() < 1e-14);
            assert!(v[2].norm() < 1e-14);
            assert!((v[3] - a / d).norm() < 1e-14);
            assert!(v[4].norm() < 1e-14);
            assert!((v[1] + a * v[0] - 1.0).norm() < 1e-14);
        }
    }

    #[test]
    fn cauchy_and_doe_identities() {
        let op = Arc::new(SectorialOperator::dirichlet_laplacian(3, PI, 0.5).unwrap());
        let s = cauchy_symbols(op.clone());
        let one = Arc::new(SectorialOperator::scalar(c(1.0, 0.0)).unwrap());
        let m1 = cauchy_symbol(one, CauchyTerm::M1);
        for t in [0.5, 3.0, 40.0] {
            let v = m1.evaluate(&[t]).unwrap()[(0, 0)];
            assert!((v + 1.0 / c(1.0, t)).norm() < 1e-14);
            assert!((v.norm() - 1.0 / (1.0 + t * t).sqrt()).abs() < 1e-14);
            let sum = s.sigma[2].evaluate(&[t]).unwrap() + s.sigma[3].evaluate(&[t]).unwrap();
            assert!((sum - CMatrix::identity(3, 3)).norm() < 1e-12);
        }
        let ZeroRule::Value(z) = s.sigma[0].zero_rule().unwrap() else { panic!() };
        assert!((z - op.inverse().unwrap()).norm() < 1e-13);
    }

    #[test]
    fn analytic_derivatives_match_differences() {
        use crate::conditions::ParabolicCoefficients;
        use crate::kernels::Kernel;
        let op = Arc::new(SectorialOperator::dirichlet_laplacian(4, PI, 1.0).unwrap());
        let coeffs = ParabolicCoefficients {
            a0: c(1.0, 0.0),
            a1: Kernel::exponential(1, 1.5).unwrap(),
            b0: c(1.0, 0.0),
            b1: Kernel::exponential(1, 0.7).unwrap(),
        };
        let mut syms: Vec<ResolventSymbol> = parabolic_symbols(&coeffs, op.clone()).into();
        syms.push(cauchy_symbol(op.clone(), CauchyTerm::M1));
        syms.push(doe_symbol(op.clone(), DoeTerm::Sigma3));
        for s in &syms {
            for xi in [0.3, 2.0, 11.0] {
                let h = 1e-5 * xi;
                let fd = (s.evaluate(&[xi + h]).unwrap() - s.evaluate(&[xi - h]).unwrap()) / c(2.0 * h, 0.0);
                let an = s.derivative(&[xi], &[1]).unwrap().unwrap();
                assert!((fd - &an).norm() <= 1e-6 * (1.0 + an.norm()), "{} at {xi}", s.name());
            }
        }
    }

    #[test]
    fn shared_factorization_reuse_is_bitwise_neutral() {
        use crate::conditions::ParabolicCoefficients;
        use crate::kernels::Kernel;
        let coeffs = ParabolicCoefficients {
            a0: c(1.0, 0.0),
            a1: Kernel::exponential(1, 1.0).unwrap(),
            b0: c(1.0, 0.0),
            b1: Kernel::exponential(1, 1.0).unwrap(),
        };
        let g = grid1(128, 16.0);
        let f = wave_packet(&g, 6, &mut crate::rng::stream(4, 0));
        let cached = Arc::new(SectorialOperator::dirichlet_laplacian(6, PI, 1.0).unwrap());
        let plain = Arc::new(SectorialOperator::dirichlet_laplacian(6, PI, 1.0).unwrap());
        plain.set_caching(false);
        let a = parabolic_symbols(&coeffs, cached);
        let b = parabolic_symbols(&coeffs, plain);
        let refs_a: Vec<&dyn MultiplierSymbol> = a.iter().map(|s| s as &dyn MultiplierSymbol).collect();
        let ua = apply_multipliers(&refs_a, &f).unwrap();
        let ub = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| b.iter().map(|s| apply_multiplier(s, &f).unwrap()).collect::<Vec<_>>());
        for (x, y) in ua.outputs.iter().zip(&ub) {
            assert_eq!(x.values(), y.values());
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn multiplier_is_linear(seed in 0u64..1000, re in -3.0f64..3.0, im in -3.0f64..3.0) {
            let g = grid1(32, 2.0);
            let op = Arc::new(SectorialOperator::dirichlet_laplacian(2, PI, 0.3).unwrap());
            let m = doe_symbol(op, DoeTerm::Sigma1);
            let f = GridFunction::random_trig(g.clone(), 2, 8, &mut crate::rng::stream(seed, 0));
            let h = GridFunction::random_trig(g, 2, 8, &mut crate::rng::stream(seed, 1));
            let a = c(re, im);
            let lhs = apply_multiplier(&m, &f.axpy(a, &h).unwrap()).unwrap();
            let rhs = apply_multiplier(&m, &f).unwrap().axpy(a, &apply_multiplier(&m, &h).unwrap()).unwrap();
            let scale = 1.0 + lhs.max_abs();
            prop_assert!(lhs.sub(&rhs).unwrap().max_abs() <= 1e-12 * scale);
        }
    }
}
