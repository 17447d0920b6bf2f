//! Exact functional-level ICEA for a zero-mean, unit-variance bivariate
//! Gaussian with correlation `rho`.
//!
//! Every quantity is an exact rational. The conditional law used throughout is
//! `X_a | X_b = y ~ N(rho·y, 1 − rho²)`, which makes conditional expectations of
//! polynomials polynomials again. [`hermite`] holds a second, independent
//! route to the double projection and to the Gaussian-weighted norm.

mod hermite;
mod poly;

use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

pub use hermite::{hermite_transform, weighted_norm_sq};
pub use poly::{
    format_rational, int, parse_rational, ratio, to_decimal, Axis, BivarPoly, Rational, UniPoly,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExactError {
    #[error("correlation must satisfy |rho| < 1, got {0}")]
    InvalidCorrelation(String),
    #[error("polynomial on axis {found:?} where {expected:?} was required")]
    AxisMismatch { expected: Axis, found: Axis },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("no convergence after {rounds} rounds (last decrease {last_decrease})")]
    NotConverged { rounds: usize, last_decrease: String, run: Box<ExactRun> },
}

/// Standard bivariate Gaussian with correlation `rho`, `|rho| < 1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GaussPair {
    rho: Rational,
}

impl GaussPair {
    pub fn new(rho: Rational) -> Result<Self, ExactError> {
        if rho.abs() >= Rational::one() {
            return Err(ExactError::InvalidCorrelation(format_rational(&rho)));
        }
        Ok(GaussPair { rho })
    }

    pub fn rho(&self) -> &Rational {
        &self.rho
    }

    /// `1 − rho²`, the conditional variance.
    pub fn cond_var(&self) -> Rational {
        Rational::one() - &self.rho * &self.rho
    }
}

/// `E[Z^n]` for standard normal `Z`: zero for odd `n`, `(n−1)!!` for even `n`.
pub fn std_normal_moment(n: u32) -> Rational {
    if n % 2 == 1 {
        return Rational::zero();
    }
    let mut acc = BigInt::one();
    let mut k = n as i64 - 1;
    while k > 1 {
        acc *= k;
        k -= 2;
    }
    Rational::from_integer(acc)
}

fn binomial(n: u32, k: u32) -> BigInt {
    let mut acc = BigInt::one();
    for i in 0..k {
        acc = acc * BigInt::from(n - i) / BigInt::from(i + 1);
    }
    acc
}

/// `E[X^n | Y = y]` as a polynomial in `y` on `target_axis` (the conditioning
/// coordinate), by expanding `(rho·y + Z)^n` with `Z ~ N(0, 1 − rho²)`.
pub fn conditional_moment_poly(n: u32, gp: &GaussPair, target_axis: Axis) -> UniPoly {
    let var = gp.cond_var();
    let mut coeffs = vec![Rational::zero(); n as usize + 1];
    // term k of the expansion: C(n,k) rho^(n−k) y^(n−k) E[Z^k], odd k vanish
    for k in (0..=n).step_by(2) {
        let z_moment = std_normal_moment(k) * num_traits::pow(var.clone(), (k / 2) as usize);
        let c = Rational::from_integer(binomial(n, k))
            * num_traits::pow(gp.rho.clone(), (n - k) as usize)
            * z_moment;
        coeffs[(n - k) as usize] += c;
    }
    UniPoly::new(target_axis, coeffs)
}

/// `E[p(X1, X2) | X_onto = x]` as an exact polynomial in `x`.
pub fn project(p: &BivarPoly, gp: &GaussPair, onto: Axis) -> UniPoly {
    let mut out = UniPoly::zero(onto);
    let mut cache: Vec<Option<UniPoly>> = Vec::new();
    for (&(a, b), c) in p.terms() {
        let (kept, integrated) = match onto {
            Axis::X1 => (a, b),
            Axis::X2 => (b, a),
        };
        let idx = integrated as usize;
        if cache.len() <= idx {
            cache.resize(idx + 1, None);
        }
        let cond = cache[idx]
            .get_or_insert_with(|| conditional_moment_poly(integrated, gp, onto))
            .clone();
        let shifted = &UniPoly::monomial(onto, kept as usize, c.clone()) * &cond;
        out = &out + &shifted;
    }
    out
}

/// `E[X1^a X2^b]`, reduced to standard-normal moments via `E[X2^b · E[X1^a | X2]]`.
pub fn joint_moment(a: u32, b: u32, gp: &GaussPair) -> Rational {
    let cond = conditional_moment_poly(a, gp, Axis::X2);
    cond.coeffs()
        .iter()
        .enumerate()
        .map(|(j, c)| c * std_normal_moment(b + j as u32))
        .fold(Rational::zero(), |acc, t| acc + t)
}

/// `E[p(X1, X2)]`.
pub fn expect(p: &BivarPoly, gp: &GaussPair) -> Rational {
    p.terms()
        .iter()
        .map(|(&(a, b), c)| c * joint_moment(a, b, gp))
        .fold(Rational::zero(), |acc, t| acc + t)
}

/// `E[p(X1, X2)²]`.
pub fn expect_sq(p: &BivarPoly, gp: &GaussPair) -> Rational {
    expect(&(p * p), gp)
}

/// `E[g(X)]` for `X` standard normal.
pub fn gaussian_mean(g: &UniPoly) -> Rational {
    g.coeffs()
        .iter()
        .enumerate()
        .map(|(k, c)| c * std_normal_moment(k as u32))
        .fold(Rational::zero(), |acc, t| acc + t)
}

fn require_axis(p: &UniPoly, expected: Axis) -> Result<(), ExactError> {
    if p.axis() != expected && !p.is_zero() {
        return Err(ExactError::AxisMismatch { expected, found: p.axis() });
    }
    Ok(())
}

/// State after one exact round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundResult {
    pub g1: UniPoly,
    pub g2: UniPoly,
    /// `E[ζ²]` for the residual left after both agents updated.
    pub error: Rational,
}

/// One full round: agent 1 projects the residual onto `X1`, then agent 2
/// projects the updated residual onto `X2`.
pub fn icea_exact_round(
    phi: &BivarPoly,
    g1: &UniPoly,
    g2: &UniPoly,
    gp: &GaussPair,
) -> Result<RoundResult, ExactError> {
    require_axis(g1, Axis::X1)?;
    require_axis(g2, Axis::X2)?;
    let g1 = g1.clone().on_axis(Axis::X1);
    let g2 = g2.clone().on_axis(Axis::X2);

    let mut residual = &(phi - &g1.lift()) - &g2.lift();
    let delta1 = project(&residual, gp, Axis::X1);
    let g1 = &g1 + &delta1;
    residual = &residual - &delta1.lift();

    let delta2 = project(&residual, gp, Axis::X2);
    let g2 = &g2 + &delta2;
    residual = &residual - &delta2.lift();

    Ok(RoundResult { g1, g2, error: expect_sq(&residual, gp) })
}

/// Outcome of [`run_exact_to_limit`].
#[derive(Debug, Clone, PartialEq)]
pub struct ExactRun {
    pub g1: UniPoly,
    pub g2: UniPoly,
    /// `E[ζ²]` after each round, one entry per round.
    pub errors: Vec<Rational>,
    /// Per-round `(g1, g2)` snapshots, aligned with `errors`.
    pub trajectory: Vec<(UniPoly, UniPoly)>,
}

pub const DEFAULT_MAX_ROUNDS: usize = 100;

/// `10^-12`, the default stopping threshold for exact runs.
pub fn default_eps() -> Rational {
    Rational::new(BigInt::one(), num_traits::pow(BigInt::from(10), 12))
}

/// Iterates [`icea_exact_round`] from zero functions until the error decrease
/// is at most `eps`, or fails with [`ExactError::NotConverged`] carrying the
/// partial run once `max_rounds` is exhausted.
pub fn run_exact_to_limit(
    phi: &BivarPoly,
    gp: &GaussPair,
    eps: &Rational,
    max_rounds: usize,
) -> Result<ExactRun, ExactError> {
    if !eps.is_positive() {
        return Err(ExactError::InvalidArgument("eps must be positive".into()));
    }
    if max_rounds == 0 {
        return Err(ExactError::InvalidArgument("max_rounds must be at least 1".into()));
    }
    let mut run = ExactRun {
        g1: UniPoly::zero(Axis::X1),
        g2: UniPoly::zero(Axis::X2),
        errors: Vec::new(),
        trajectory: Vec::new(),
    };
    let mut err_old = expect_sq(phi, gp);
    let mut decrease = Rational::zero();
    for _ in 0..max_rounds {
        let step = icea_exact_round(phi, &run.g1, &run.g2, gp)?;
        decrease = (&err_old - &step.error).abs();
        err_old = step.error.clone();
        run.g1 = step.g1;
        run.g2 = step.g2;
        run.errors.push(step.error);
        run.trajectory.push((run.g1.clone(), run.g2.clone()));
        if decrease <= *eps {
            return Ok(run);
        }
    }
    Err(ExactError::NotConverged {
        rounds: max_rounds,
        last_decrease: to_decimal(&decrease, 15),
        run: Box::new(run),
    })
}

/// The full-round map on agent 1's function:
/// `T g = E[φ − E[φ − g(X1) | X2] | X1]`.
pub fn apply_t(g: &UniPoly, phi: &BivarPoly, gp: &GaussPair) -> Result<UniPoly, ExactError> {
    require_axis(g, Axis::X1)?;
    let g = g.clone().on_axis(Axis::X1);
    let inner = project(&(phi - &g.lift()), gp, Axis::X2);
    Ok(project(&(phi - &inner.lift()), gp, Axis::X1))
}

/// `E[E[g(X) | Y] | X = x]` computed by two conditional-moment projections.
pub fn double_projection(g: &UniPoly, gp: &GaussPair) -> UniPoly {
    let axis = g.axis();
    let lifted = g.clone().on_axis(Axis::X1).lift();
    let inner = project(&lifted, gp, Axis::X2);
    project(&inner.lift(), gp, Axis::X1).on_axis(axis)
}

/// `E[g(X)²]` for standard normal `X` by direct moment expansion
/// `Σ_ij a_i a_j E[X^(i+j)]`.
pub fn norm_sq_by_moments(g: &UniPoly) -> Rational {
    let c = g.coeffs();
    let mut acc = Rational::zero();
    for (i, a) in c.iter().enumerate() {
        for (j, b) in c.iter().enumerate() {
            acc += a * b * std_normal_moment((i + j) as u32);
        }
    }
    acc
}

/// Least-squares slope of `ln(errors[r] − limit)` against the round number
/// over the inclusive 1-based round range `first..=last`. Rounds whose surplus
/// is not positive are skipped.
pub fn log_surplus_slope(errors: &[Rational], limit: &Rational, first: usize, last: usize) -> Option<f64> {
    let points: Vec<(f64, f64)> = (first..=last)
        .filter_map(|round| {
            let e = errors.get(round.checked_sub(1)?)?;
            let surplus = (e - limit).to_f64()?;
            (surplus > 0.0).then(|| (round as f64, surplus.ln()))
        })
        .collect();
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(sxy / sxx)
}

/// `x1·x2² + x1² + 2`, the two-agent demonstration target.
pub fn demo_phi() -> BivarPoly {
    BivarPoly::from_terms([(1, 2, int(1)), (2, 0, int(1)), (0, 0, int(2))])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn half() -> GaussPair {
        GaussPair::new(ratio(1, 2)).unwrap()
    }

    #[test]
    fn rejects_degenerate_correlation() {
        assert!(GaussPair::new(int(1)).is_err());
        assert!(GaussPair::new(ratio(-3, 2)).is_err());
        assert!(GaussPair::new(ratio(-99, 100)).is_ok());
    }

    #[test]
    fn std_normal_moments() {
        assert_eq!(std_normal_moment(0), int(1));
        assert_eq!(std_normal_moment(1), int(0));
        assert_eq!(std_normal_moment(2), int(1));
        assert_eq!(std_normal_moment(3), int(0));
        assert_eq!(std_normal_moment(4), int(3));
        assert_eq!(std_normal_moment(8), int(105));
    }

    /// Composite Simpson quadrature of `z^n φ(z)` on [-12, 12].
    fn quad_moment(n: i32) -> f64 {
        let (a, b, steps) = (-12.0f64, 12.0f64, 20_000);
        let h = (b - a) / steps as f64;
        let f = |z: f64| z.powi(n) * (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let mut s = f(a) + f(b);
        for i in 1..steps {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(a + i as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn sixth_moment_matches_quadrature() {
        let q = quad_moment(6);
        assert!((q - 15.0).abs() < 1e-9, "quadrature gave {q}");
        assert_eq!(std_normal_moment(6), int(15));
    }

    #[test]
    fn conditional_moments_at_half() {
        let gp = half();
        assert_eq!(
            conditional_moment_poly(1, &gp, Axis::X2),
            UniPoly::new(Axis::X2, vec![int(0), ratio(1, 2)])
        );
        assert_eq!(
            conditional_moment_poly(2, &gp, Axis::X2),
            UniPoly::new(Axis::X2, vec![ratio(3, 4), int(0), ratio(1, 4)])
        );
        assert_eq!(
            conditional_moment_poly(3, &gp, Axis::X2),
            UniPoly::new(Axis::X2, vec![int(0), ratio(9, 8), int(0), ratio(1, 8)])
        );
        assert_eq!(conditional_moment_poly(0, &gp, Axis::X1), UniPoly::from_ints(Axis::X1, &[1]));
    }

    #[test]
    fn project_examples() {
        let gp = half();
        let g1 = project(&demo_phi(), &gp, Axis::X1);
        assert_eq!(
            g1,
            UniPoly::new(Axis::X1, vec![int(2), ratio(3, 4), int(1), ratio(1, 4)])
        );

        let indep = GaussPair::new(int(0)).unwrap();
        let x1x2 = BivarPoly::from_terms([(1, 1, int(1))]);
        assert!(project(&x1x2, &indep, Axis::X1).is_zero());

        let resid: BivarPoly = "x1*x2^2 - 1/4*x1^3 - 3/4*x1".parse().unwrap();
        assert_eq!(
            project(&resid, &gp, Axis::X2),
            UniPoly::new(Axis::X2, vec![int(0), ratio(-21, 32), int(0), ratio(15, 32)])
        );
    }

    #[test]
    fn expect_sq_basics() {
        let gp = half();
        assert_eq!(expect_sq(&BivarPoly::constant(int(3)), &gp), int(9));
        assert_eq!(expect_sq(&BivarPoly::from_terms([(1, 0, int(1))]), &gp), int(1));
        // E[X1 X2] = rho
        assert_eq!(joint_moment(1, 1, &gp), ratio(1, 2));
        // E[X1² X2²] = 1 + 2 rho²
        assert_eq!(joint_moment(2, 2, &gp), ratio(3, 2));
    }

    #[test]
    fn first_two_rounds_of_demo() {
        let gp = half();
        let phi = demo_phi();
        let r1 = icea_exact_round(&phi, &UniPoly::zero(Axis::X1), &UniPoly::zero(Axis::X2), &gp).unwrap();
        assert_eq!(to_decimal(&r1.error, 10), "1.4941406250");
        assert_eq!(r1.g2, UniPoly::new(Axis::X2, vec![int(0), ratio(-21, 32), int(0), ratio(15, 32)]));
        let r2 = icea_exact_round(&phi, &r1.g1, &r1.g2, &gp).unwrap();
        assert_eq!(to_decimal(&r2.error, 10), "1.2974381447");
        assert_eq!(to_decimal(&r2.g1.coeff(1), 4), "0.5508");
        assert_eq!(to_decimal(&r2.g1.coeff(3), 4), "0.1914");
    }

    #[test]
    fn axis_mismatch_is_reported() {
        let gp = half();
        let wrong = UniPoly::from_ints(Axis::X2, &[0, 1]);
        let err = icea_exact_round(&demo_phi(), &wrong, &UniPoly::zero(Axis::X2), &gp).unwrap_err();
        assert_eq!(err, ExactError::AxisMismatch { expected: Axis::X1, found: Axis::X2 });
        assert!(apply_t(&wrong, &demo_phi(), &gp).is_err());
    }

    #[test]
    fn independence_reaches_fixed_point_after_one_round() {
        let gp = GaussPair::new(int(0)).unwrap();
        let phi = demo_phi();
        let r1 = icea_exact_round(&phi, &UniPoly::zero(Axis::X1), &UniPoly::zero(Axis::X2), &gp).unwrap();
        let r2 = icea_exact_round(&phi, &r1.g1, &r1.g2, &gp).unwrap();
        assert_eq!(r1.g1, r2.g1);
        assert_eq!(r1.g2, r2.g2);
        assert_eq!(r1.error, r2.error);
    }

    #[test]
    fn additive_target_converges_to_zero_error() {
        for rho in [ratio(0, 1), ratio(1, 3), ratio(-3, 4)] {
            let gp = GaussPair::new(rho).unwrap();
            let phi: BivarPoly = "x1 + x2".parse().unwrap();
            let run = run_exact_to_limit(&phi, &gp, &default_eps(), 200).unwrap();
            let last = run.errors.last().unwrap();
            assert!(*last < default_eps(), "final error {last}");
        }
    }

    #[test]
    fn not_converged_carries_partial_run() {
        let gp = half();
        match run_exact_to_limit(&demo_phi(), &gp, &default_eps(), 2) {
            Err(ExactError::NotConverged { rounds, run, .. }) => {
                assert_eq!(rounds, 2);
                assert_eq!(run.errors.len(), 2);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
        assert!(run_exact_to_limit(&demo_phi(), &gp, &int(0), 5).is_err());
        assert!(run_exact_to_limit(&demo_phi(), &gp, &default_eps(), 0).is_err());
    }

    #[test]
    fn apply_t_examples() {
        let gp = half();
        let zero = BivarPoly::zero();
        let rho2 = ratio(1, 4);
        let rho4 = ratio(1, 16);
        assert_eq!(
            apply_t(&UniPoly::from_ints(Axis::X1, &[0, 1]), &zero, &gp).unwrap(),
            UniPoly::new(Axis::X1, vec![int(0), rho2])
        );
        assert_eq!(
            apply_t(&UniPoly::from_ints(Axis::X1, &[0, 0, 1]), &zero, &gp).unwrap(),
            UniPoly::new(Axis::X1, vec![int(1) - &rho4, int(0), rho4])
        );
        let phi = demo_phi();
        let composed = project(&(&phi - &project(&phi, &gp, Axis::X2).lift()), &gp, Axis::X1);
        assert_eq!(apply_t(&UniPoly::zero(Axis::X1), &phi, &gp).unwrap(), composed);
    }

    #[test]
    fn surplus_slope_on_geometric_sequence() {
        let limit = int(1);
        let errors: Vec<Rational> = (1..=8)
            .map(|r| int(1) + Rational::new(BigInt::one(), num_traits::pow(BigInt::from(16), r)))
            .collect();
        let slope = log_surplus_slope(&errors, &limit, 2, 8).unwrap();
        assert!((slope - (1.0f64 / 16.0).ln()).abs() < 1e-12);
    }
}
