//! Monte-Carlo R-bounds: ratios of Rademacher averages
//! `(E‖Σ r_j T_j x_j‖^p)^{1/p} / (E‖Σ r_j x_j‖^p)^{1/p}` maximized over
//! seeded draws. The result is a lower bound for the true R-bound.

use std::fmt;
use std::io::Write;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grammar::{parse_complex, split_top_level, Call};
use crate::linalg::{op_norm, CMatrix, CVector};
use crate::sectorial::{log_spaced, Sector, SectorialOperator};

/// Sign patterns are enumerated exactly up to this many terms.
pub const MAX_EXHAUSTIVE: usize = 12;

/// Number of sampled sign patterns above [`MAX_EXHAUSTIVE`].
pub const SAMPLED_SIGNS: usize = 4096;

/// Finite family of n×n matrices with the parameters that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorFamily {
    members: Vec<CMatrix>,
    labels: Vec<Vec<f64>>,
}

impl OperatorFamily {
    /// `labels` may be empty, in which case members are labeled by index.
    pub fn new(members: Vec<CMatrix>, labels: Vec<Vec<f64>>) -> Result<Self> {
        let Some(first) = members.first() else {
            return Err(Error::invalid("operator family must be nonempty"));
        };
        let n = first.nrows();
        for m in &members {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::DimensionMismatch { expected: n, got: m.nrows().max(m.ncols()) });
            }
        }
        let labels = if labels.is_empty() {
            (0..members.len()).map(|i| vec![i as f64]).collect()
        } else if labels.len() == members.len() {
            labels
        } else {
            return Err(Error::DimensionMismatch { expected: members.len(), got: labels.len() });
        };
        Ok(Self { members, labels })
    }

    /// `{z_i · I_n}`.
    pub fn scalars(values: &[Complex64], n: usize) -> Result<Self> {
        Self::new(values.iter().map(|z| CMatrix::identity(n, n) * *z).collect(), Vec::new())
    }

    pub fn diagonals(diagonals: &[Vec<Complex64>]) -> Result<Self> {
        Self::new(
            diagonals.iter().map(|d| CMatrix::from_diagonal(&CVector::from_column_slice(d))).collect(),
            Vec::new(),
        )
    }

    /// `{(1+|λ|)(A+λ)^{-1}}` for `count` log-spaced radii in `[1e-3, 1e3]`
    /// times 8 angles in `[-φ, φ]`.
    pub fn scaled_resolvents(op: &SectorialOperator, phi: f64, count: usize) -> Result<Self> {
        let sector = Sector::new(phi)?;
        let mut members = Vec::new();
        let mut labels = Vec::new();
        for r in log_spaced(1e-3, 1e3, count.max(1)) {
            for j in 0..8 {
                let theta = -sector.phi() + 2.0 * sector.phi() * j as f64 / 7.0;
                let lambda = Complex64::from_polar(r, theta);
                members.push(op.resolvent_matrix(lambda)? * Complex64::new(1.0 + r, 0.0));
                labels.push(vec![lambda.re, lambda.im]);
            }
        }
        Self::new(members, labels)
    }

    pub fn members(&self) -> &[CMatrix] {
        &self.members
    }

    pub fn labels(&self) -> &[Vec<f64>] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.members[0].nrows()
    }

    pub fn sup_norm(&self) -> f64 {
        self.members.iter().map(op_norm).fold(0.0, f64::max)
    }

    /// `{T + S : T ∈ self, S ∈ other}`.
    pub fn sum(&self, other: &Self) -> Result<Self> {
        self.combine(other, |a, b| a + b)
    }

    /// `{T S : T ∈ self, S ∈ other}`.
    pub fn product(&self, other: &Self) -> Result<Self> {
        self.combine(other, |a, b| a * b)
    }

    fn combine(&self, other: &Self, op: impl Fn(&CMatrix, &CMatrix) -> CMatrix) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: other.dim() });
        }
        let mut members = Vec::with_capacity(self.len() * other.len());
        for a in &self.members {
            for b in &other.members {
                members.push(op(a, b));
            }
        }
        Self::new(members, Vec::new())
    }

    /// Grammar: `scalars(z, ..., n=k)`, `diag(a, b; c, d)`,
    /// `resolvent(op=<operator>, phi=<angle>, count=<k>)`.
    pub fn parse(input: &str) -> Result<Self> {
        let call = Call::parse(input)?;
        match call.name {
            "scalars" => {
                call.reject_unknown_keywords(input, &["n"])?;
                let n = match call.keyword(&["n"]) {
                    Some(v) => v.parse::<usize>().map_err(|_| Error::parse(input, "n must be a positive integer"))?,
                    None => 1,
                };
                if n == 0 {
                    return Err(Error::parse(input, "n must be a positive integer"));
                }
                let values = call
                    .args
                    .iter()
                    .filter(|a| !a.contains('='))
                    .map(|a| parse_complex(a))
                    .collect::<Result<Vec<_>>>()?;
                Self::scalars(&values, n)
            }
            "diag" => {
                let s = input.trim();
                let inner = &s[s.find('(').unwrap_or(0) + 1..s.len() - 1];
                let groups = split_top_level(inner, ';').map_err(|m| Error::parse(input, m))?;
                let diags = groups
                    .iter()
                    .map(|g| g.split(',').map(parse_complex).collect::<Result<Vec<_>>>())
                    .collect::<Result<Vec<_>>>()?;
                Self::diagonals(&diags)
            }
            "resolvent" => {
                call.reject_unknown_keywords(input, &["op", "phi", "count"])?;
                let op = SectorialOperator::parse(
                    call.keyword(&["op"]).ok_or_else(|| Error::parse(input, "missing `op=`"))?,
                )?;
                let phi = match call.keyword(&["phi"]) {
                    Some(_) => call.keyword_f64(input, &["phi"])?,
                    None => op.phi(),
                };
                let count = match call.keyword(&["count"]) {
                    Some(v) => v.parse::<usize>().map_err(|_| Error::parse(input, "count must be an integer"))?,
                    None => 8,
                };
                Self::scaled_resolvents(&op, phi, count)
            }
            other => Err(Error::parse(input, format!("unknown family `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RBoundEstimate {
    /// Largest observed ratio; a lower bound for the R-bound.
    pub value: f64,
    pub p: f64,
    pub trials: usize,
    pub draw_size: usize,
    pub seed: u64,
    /// `max ‖T‖` over the family.
    pub sup_norm: f64,
    /// Sign averages were exact rather than sampled.
    pub exhaustive: bool,
    /// Ratio observed in each random trial, in trial order.
    pub trial_ratios: Vec<f64>,
}

impl RBoundEstimate {
    /// Columns `trial,ratio`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "trial,ratio")?;
        for (i, r) in self.trial_ratios.iter().enumerate() {
            writeln!(out, "{i},{r:e}")?;
        }
        Ok(())
    }
}

impl fmt::Display for RBoundEstimate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "R-bound estimate (lower bound) = {:.6} | sup norm = {:.6} | p = {} | trials = {} | N = {} | seed = {} | signs = {}",
            self.value,
            self.sup_norm,
            self.p,
            self.trials,
            self.draw_size,
            self.seed,
            if self.exhaustive { "exhaustive" } else { "sampled" }
        )
    }
}

/// Sign patterns used for an average over `count` terms.
fn sign_patterns<R: Rng + ?Sized>(count: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let sign = |b: bool| if b { -1.0 } else { 1.0 };
    if count <= MAX_EXHAUSTIVE {
        (0..1u32 << count).map(|m| (0..count).map(|j| sign((m >> j) & 1 == 1)).collect()).collect()
    } else {
        (0..SAMPLED_SIGNS).map(|_| (0..count).map(|_| sign(rng.random::<bool>())).collect()).collect()
    }
}

/// `(mean over patterns of ‖Σ_j s_j v_j‖^p)^{1/p}`.
fn rademacher_norm(vectors: &[CVector], patterns: &[Vec<f64>], p: f64) -> f64 {
    let n = vectors.first().map_or(0, |v| v.len());
    let terms: Vec<f64> = patterns
        .iter()
        .map(|s| {
            let mut acc = CVector::zeros(n);
            for (sj, v) in s.iter().zip(vectors) {
                acc.axpy(Complex64::new(*sj, 0.0), v, Complex64::new(1.0, 0.0));
            }
            acc.norm().powf(p)
        })
        .collect();
    (crate::multiplier::pairwise_sum(&terms) / patterns.len() as f64).powf(1.0 / p)
}

fn rademacher_ratio(members: &[&CMatrix], xs: &[CVector], patterns: &[Vec<f64>], p: f64) -> f64 {
    let images: Vec<CVector> = members.iter().zip(xs).map(|(t, x)| *t * x).collect();
    let den = rademacher_norm(xs, patterns, p);
    if den > 0.0 {
        rademacher_norm(&images, patterns, p) / den
    } else {
        0.0
    }
}

/// Seeded Monte-Carlo R-bound. Each trial draws `draw_size` members with
/// replacement and unit vectors on the sphere of `C^n`; a deterministic
/// pass additionally tests every member against its top singular vector.
pub fn estimate_r_bound(
    family: &OperatorFamily,
    p: f64,
    trials: usize,
    draw_size: usize,
    seed: u64,
) -> Result<RBoundEstimate> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(Error::invalid(format!("p must lie in [1, ∞), got {p}")));
    }
    if trials < 100 {
        return Err(Error::invalid(format!("need at least 100 trials, got {trials}")));
    }
    if draw_size == 0 || draw_size > 4 * family.len() {
        return Err(Error::invalid(format!(
            "draw size must lie in 1..={} for a family of {}, got {draw_size}",
            4 * family.len(),
            family.len()
        )));
    }
    let n = family.dim();
    let trial_ratios: Vec<f64> = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let mut rng = crate::rng::stream(seed, t);
            let picks: Vec<&CMatrix> =
                (0..draw_size).map(|_| &family.members[rng.random_range(0..family.len())]).collect();
            let xs: Vec<CVector> =
                (0..draw_size).map(|_| CVector::from_vec(crate::rng::unit_vector(&mut rng, n))).collect();
            let patterns = sign_patterns(draw_size, &mut rng);
            rademacher_ratio(&picks, &xs, &patterns, p)
        })
        .collect();
    // single-member draws with the maximizing vector realize ‖T‖ exactly
    let witnesses: Vec<f64> = family.members.par_iter().map(op_norm).collect();
    let sup_norm = witnesses.iter().copied().fold(0.0, f64::max);
    let value = trial_ratios.iter().copied().fold(sup_norm, f64::max);
    Ok(RBoundEstimate {
        value,
        p,
        trials,
        draw_size,
        seed,
        sup_norm,
        exhaustive: draw_size <= MAX_EXHAUSTIVE,
        trial_ratios,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KahaneCheck {
    /// `‖Σ α_j r_j x_j‖ / ‖Σ β_j r_j x_j‖`.
    pub ratio: f64,
    /// 1 when every coefficient is real, 2 otherwise.
    pub constant: f64,
    pub pass: bool,
}

/// Contraction principle over all sign patterns.
pub fn check_kahane(alphas: &[Complex64], betas: &[Complex64], vectors: &[CVector], p: f64) -> Result<KahaneCheck> {
    let len = alphas.len();
    if betas.len() != len || vectors.len() != len {
        return Err(Error::DimensionMismatch { expected: len, got: betas.len().min(vectors.len()) });
    }
    if len == 0 || len > MAX_EXHAUSTIVE {
        return Err(Error::invalid(format!("need 1..={MAX_EXHAUSTIVE} terms for exhaustive enumeration, got {len}")));
    }
    if let Some(j) = (0..len).find(|&j| alphas[j].norm() > betas[j].norm() * (1.0 + 1e-14)) {
        return Err(Error::invalid(format!("premise |alpha_j| <= |beta_j| violated at j = {j}")));
    }
    let real = alphas.iter().chain(betas).all(|z| z.im == 0.0);
    let constant = if real { 1.0 } else { 2.0 };
    let patterns = sign_patterns(len, &mut crate::rng::stream(0, 0));
    let scaled = |c: &[Complex64]| -> Vec<CVector> { c.iter().zip(vectors).map(|(a, x)| x * *a).collect() };
    let num = rademacher_norm(&scaled(alphas), &patterns, p);
    let den = rademacher_norm(&scaled(betas), &patterns, p);
    let ratio = if den > 0.0 {
        num / den
    } else if num == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(KahaneCheck { ratio, constant, pass: ratio <= constant * (1.0 + 1e-12) })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalculusReport {
    pub r1: f64,
    pub r2: f64,
    pub r_sum: f64,
    pub r_product: f64,
    /// `R(τ₁+τ₂) <= R(τ₁) + R(τ₂)` within the tolerance.
    pub sum_pass: bool,
    /// `R(τ₁τ₂) <= R(τ₁)R(τ₂)` within the tolerance.
    pub product_pass: bool,
}

/// Relative Monte-Carlo tolerance of the calculus checks.
pub const CALCULUS_TOL: f64 = 0.05;

/// Estimates R-bounds of both families, their sum family and their product family.
pub fn check_calculus_d_e(
    family1: &OperatorFamily,
    family2: &OperatorFamily,
    p: f64,
    trials: usize,
    seed: u64,
) -> Result<CalculusReport> {
    let sum = family1.sum(family2)?;
    let product = family1.product(family2)?;
    let est = |f: &OperatorFamily, s: u64| estimate_r_bound(f, p, trials, f.len().clamp(1, 8), s).map(|e| e.value);
    let r1 = est(family1, seed)?;
    let r2 = est(family2, seed.wrapping_add(1))?;
    let r_sum = est(&sum, seed.wrapping_add(2))?;
    let r_product = est(&product, seed.wrapping_add(3))?;
    Ok(CalculusReport {
        r1,
        r2,
        r_sum,
        r_product,
        sum_pass: r_sum <= (r1 + r2) * (1.0 + CALCULUS_TOL) + 1e-300,
        product_pass: r_product <= r1 * r2 * (1.0 + CALCULUS_TOL) + 1e-300,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn trivial_families() {
        let id = OperatorFamily::scalars(&[c(1.0, 0.0)], 3).unwrap();
        let e = estimate_r_bound(&id, 2.0, 100, 4, 1).unwrap();
        assert_eq!(e.value, 1.0);
        let zero = OperatorFamily::scalars(&[c(0.0, 0.0)], 2).unwrap();
        assert_eq!(estimate_r_bound(&zero, 2.0, 100, 4, 1).unwrap().value, 0.0);
    }

    #[test]
    fn hilbert_scalar_family() {
        let f = OperatorFamily::parse("scalars(1, 2)").unwrap();
        let e = estimate_r_bound(&f, 2.0, 200, 6, 7).unwrap();
        assert!((e.value - 2.0).abs() <= 0.05 * 2.0, "{e}");
        for p in [1.0, 4.0] {
            let ep = estimate_r_bound(&f, p, 200, 6, 7).unwrap();
            assert!((ep.value - e.value).abs() <= 0.1 * e.value);
        }
    }

    #[test]
    fn sampled_signs_above_threshold() {
        let f = OperatorFamily::parse("diag(1, 0.5; 0.25, 1; 0.5, 0.5; 1, 1)").unwrap();
        let e = estimate_r_bound(&f, 2.0, 100, 16, 3).unwrap();
        assert!(!e.exhaustive);
        assert!(e.value >= e.sup_norm && e.value <= e.sup_norm * 1.05);
    }

    #[test]
    fn argument_validation() {
        let f = OperatorFamily::parse("scalars(1)").unwrap();
        assert!(estimate_r_bound(&f, 2.0, 99, 1, 0).is_err());
        assert!(estimate_r_bound(&f, 2.0, 100, 5, 0).is_err());
        assert!(OperatorFamily::new(vec![], vec![]).is_err());
        assert!(OperatorFamily::new(vec![CMatrix::identity(2, 2), CMatrix::identity(3, 3)], vec![]).is_err());
    }

    #[test]
    fn resolvent_family_grammar() {
        let f = OperatorFamily::parse("resolvent(op=laplacian(n=3), phi=pi/2, count=4)").unwrap();
        assert_eq!(f.len(), 32);
        assert_eq!(f.dim(), 3);
        let e = estimate_r_bound(&f, 2.0, 100, 8, 2).unwrap();
        assert!(e.value >= e.sup_norm);
    }

    #[test]
    fn kahane_examples() {
        let mut rng = crate::rng::stream(11, 0);
        let xs: Vec<CVector> = (0..2).map(|_| CVector::from_vec(crate::rng::unit_vector(&mut rng, 3))).collect();
        let k = check_kahane(&[c(1.0, 0.0), c(0.0, 0.0)], &[c(1.0, 0.0), c(1.0, 0.0)], &xs, 2.0).unwrap();
        assert!(k.pass && k.ratio <= 1.0 && k.constant == 1.0);
        let a = [c(0.3, 0.0), c(-2.0, 0.0)];
        let k = check_kahane(&a, &a, &xs, 3.0).unwrap();
        assert!((k.ratio - 1.0).abs() < 1e-15);
        let k = check_kahane(&[c(0.5, 0.0), c(0.0, 0.5)], &[c(1.0, 0.0), c(1.0, 0.0)], &xs, 2.0).unwrap();
        assert!(k.pass && k.constant == 2.0 && k.ratio <= 2.0);
        assert!(check_kahane(&[c(2.0, 0.0)], &[c(1.0, 0.0)], &xs[..1], 2.0).is_err());
    }

    #[test]
    fn calculus_examples() {
        let id = OperatorFamily::scalars(&[c(1.0, 0.0)], 2).unwrap();
        let r = check_calculus_d_e(&id, &id, 2.0, 100, 1).unwrap();
        assert!(r.sum_pass && r.product_pass && r.r_sum <= 2.0 + 1e-12 && r.r_product <= 1.0 + 1e-12);
        let two = OperatorFamily::scalars(&[c(2.0, 0.0)], 2).unwrap();
        let three = OperatorFamily::scalars(&[c(3.0, 0.0)], 2).unwrap();
        let r = check_calculus_d_e(&two, &three, 2.0, 100, 1).unwrap();
        assert!((r.r_product - 6.0).abs() < 1e-12 && r.product_pass);
        let zero = OperatorFamily::scalars(&[c(0.0, 0.0)], 2).unwrap();
        let r = check_calculus_d_e(&zero, &three, 2.0, 100, 1).unwrap();
        assert_eq!(r.r_product, 0.0);
        assert!(r.product_pass);
    }

    #[test]
    fn determinism() {
        let f = OperatorFamily::parse("diag(1, 2i; -0.5, 1+i; 0.1, 0.2)").unwrap();
        let a = estimate_r_bound(&f, 2.0, 150, 5, 42).unwrap();
        let b = estimate_r_bound(&f, 2.0, 150, 5, 42).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn estimate_dominates_sup_norm(seed in 0u64..10_000, entries in proptest::collection::vec(-3.0f64..3.0, 6)) {
            let diags: Vec<Vec<Complex64>> = entries.chunks(2).map(|p| vec![c(p[0], 0.0), c(0.0, p[1])]).collect();
            let f = OperatorFamily::diagonals(&diags).unwrap();
            let e = estimate_r_bound(&f, 2.0, 100, 4, seed).unwrap();
            prop_assert!(e.value >= e.sup_norm * 0.98);
            // diagonal families in Hilbert space at p = 2: R-bound equals sup norm
            prop_assert!(e.value <= e.sup_norm * 1.05 + 1e-12);
        }
    }
}
