//! Closed forms from the Hermite expansion of the Gaussian kernel.
//!
//! Both functions here avoid conditional moments entirely so they can be
//! checked against the projection path in `super`.

use num_bigint::BigInt;
use num_traits::{One, Zero};

use super::{GaussPair, Rational, UniPoly};

fn factorial(n: usize) -> BigInt {
    (1..=n).fold(BigInt::one(), |acc, k| acc * BigInt::from(k))
}

/// Double conditional expectation `g'(x) = E[E[g(X) | Y] | X = x]`:
///
/// `g'(x) = Σ_n a_n Σ_k n! / (k! (n−2k)!) · ((1 − rho⁴)/2)^k · (rho² x)^(n−2k)`.
pub fn hermite_transform(g: &UniPoly, gp: &GaussPair) -> UniPoly {
    let rho2 = gp.rho() * gp.rho();
    let rho4 = &rho2 * &rho2;
    let half_spread = (Rational::one() - rho4) / Rational::from_integer(BigInt::from(2));
    let len = g.coeffs().len();
    let mut out = vec![Rational::zero(); len];
    for (n, a) in g.coeffs().iter().enumerate() {
        if a.is_zero() {
            continue;
        }
        for k in 0..=n / 2 {
            let p = n - 2 * k;
            let comb = Rational::new(factorial(n), factorial(k) * factorial(p));
            out[p] += a
                * comb
                * num_traits::pow(half_spread.clone(), k)
                * num_traits::pow(rho2.clone(), p);
        }
    }
    UniPoly::new(g.axis(), out)
}

/// `E[g(X)²]` for standard normal `X` via the Hermite-coefficient formula
///
/// `Σ_n n! · (Σ_k a_(n+2k) (n+2k)! / (2^k n! k!))²`.
///
/// The inner sum is the coefficient of the probabilists' Hermite polynomial
/// `He_n` in `g`.
pub fn weighted_norm_sq(g: &UniPoly) -> Rational {
    let a = g.coeffs();
    let order = a.len();
    let mut total = Rational::zero();
    for n in 0..order {
        let mut c = Rational::zero();
        let mut k = 0;
        while n + 2 * k < order {
            let m = n + 2 * k;
            if !a[m].is_zero() {
                let den = num_traits::pow(BigInt::from(2), k) * factorial(n) * factorial(k);
                c += &a[m] * Rational::new(factorial(m), den);
            }
            k += 1;
        }
        total += Rational::from_integer(factorial(n)) * &c * &c;
    }
    total
}
