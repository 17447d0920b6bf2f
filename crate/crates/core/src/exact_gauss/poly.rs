//! Exact-rational polynomials in one and two variables.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use super::ExactError;

/// Reduced fraction with a positive denominator.
pub type Rational = BigRational;

/// Builds `num / den` as an exact rational. Panics if `den == 0`.
pub fn ratio(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

pub fn int(v: i64) -> Rational {
    Rational::from_integer(BigInt::from(v))
}

/// Which of the two Gaussian coordinates a univariate polynomial lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Axis {
    X1,
    X2,
}

impl Axis {
    pub fn other(self) -> Axis {
        match self {
            Axis::X1 => Axis::X2,
            Axis::X2 => Axis::X1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Axis::X1 => "x1",
            Axis::X2 => "x2",
        }
    }
}

/// Dense univariate polynomial `Σ coeffs[k] · x^k` on a fixed axis.
///
/// Canonical form: no trailing zero coefficients, so the zero polynomial has
/// an empty coefficient list.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct UniPoly {
    axis: Axis,
    coeffs: Vec<Rational>,
}

impl UniPoly {
    pub fn zero(axis: Axis) -> Self {
        UniPoly { axis, coeffs: Vec::new() }
    }

    pub fn constant(axis: Axis, c: Rational) -> Self {
        Self::new(axis, vec![c])
    }

    /// `x^k` on the given axis.
    pub fn monomial(axis: Axis, power: usize, c: Rational) -> Self {
        let mut coeffs = vec![Rational::zero(); power + 1];
        coeffs[power] = c;
        Self::new(axis, coeffs)
    }

    pub fn new(axis: Axis, mut coeffs: Vec<Rational>) -> Self {
        while coeffs.last().is_some_and(Zero::is_zero) {
            coeffs.pop();
        }
        UniPoly { axis, coeffs }
    }

    pub fn from_ints(axis: Axis, coeffs: &[i64]) -> Self {
        Self::new(axis, coeffs.iter().map(|&c| int(c)).collect())
    }

    pub fn axis(&self) -> Axis {
        self.axis
    }

    pub fn coeffs(&self) -> &[Rational] {
        &self.coeffs
    }

    /// Coefficient of `x^k`, zero past the order.
    pub fn coeff(&self, k: usize) -> Rational {
        self.coeffs.get(k).cloned().unwrap_or_else(Rational::zero)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Highest power with a nonzero coefficient; `None` for the zero polynomial.
    pub fn order(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    /// Same coefficients, relabelled onto another axis.
    pub fn on_axis(mut self, axis: Axis) -> Self {
        self.axis = axis;
        self
    }

    pub fn scale(&self, c: &Rational) -> Self {
        Self::new(self.axis, self.coeffs.iter().map(|a| a * c).collect())
    }

    pub fn eval(&self, x: &Rational) -> Rational {
        self.coeffs
            .iter()
            .rev()
            .fold(Rational::zero(), |acc, a| acc * x + a)
    }

    pub fn eval_f64(&self, x: f64) -> f64 {
        self.coeffs
            .iter()
            .rev()
            .fold(0.0, |acc, a| acc * x + a.to_f64().unwrap_or(f64::NAN))
    }

    /// Embeds the polynomial into the bivariate ring on its own axis.
    pub fn lift(&self) -> BivarPoly {
        let mut out = BivarPoly::zero();
        for (k, c) in self.coeffs.iter().enumerate() {
            let key = match self.axis {
                Axis::X1 => (k as u32, 0),
                Axis::X2 => (0, k as u32),
            };
            out.add_term(key, c.clone());
        }
        out
    }

    fn check_axis(&self, other: &UniPoly) {
        assert_eq!(
            self.axis, other.axis,
            "arithmetic between polynomials on different axes"
        );
    }

    /// Renders `c0 + c1*x^1 + ...` with exact `p/q` coefficients; zero terms are omitted.
    pub fn to_text(&self) -> String {
        if self.is_zero() {
            return "0".to_string();
        }
        let terms: Vec<String> = self
            .coeffs
            .iter()
            .enumerate()
            .filter(|(_, c)| !c.is_zero())
            .map(|(k, c)| {
                if k == 0 {
                    format_rational(c)
                } else {
                    format!("{}*x^{}", format_rational(c), k)
                }
            })
            .collect();
        terms.join(" + ")
    }

    /// Parses the text form produced by [`UniPoly::to_text`]. The variable may be
    /// written `x`, `x1`, or `x2`; the result is placed on `axis`.
    pub fn parse(axis: Axis, s: &str) -> Result<Self, ExactError> {
        let bivar: BivarPoly = s.parse()?;
        let mut coeffs = Vec::new();
        for (&(a, b), c) in bivar.terms() {
            if a != 0 && b != 0 {
                return Err(ExactError::Parse(format!(
                    "mixed monomial in univariate polynomial: {s}"
                )));
            }
            let k = (a + b) as usize;
            if coeffs.len() <= k {
                coeffs.resize(k + 1, Rational::zero());
            }
            coeffs[k] += c;
        }
        Ok(UniPoly::new(axis, coeffs))
    }
}

impl fmt::Display for UniPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

impl Add for &UniPoly {
    type Output = UniPoly;
    fn add(self, rhs: &UniPoly) -> UniPoly {
        self.check_axis(rhs);
        let len = self.coeffs.len().max(rhs.coeffs.len());
        let coeffs = (0..len).map(|k| self.coeff(k) + rhs.coeff(k)).collect();
        UniPoly::new(self.axis, coeffs)
    }
}

impl Sub for &UniPoly {
    type Output = UniPoly;
    fn sub(self, rhs: &UniPoly) -> UniPoly {
        self.check_axis(rhs);
        let len = self.coeffs.len().max(rhs.coeffs.len());
        let coeffs = (0..len).map(|k| self.coeff(k) - rhs.coeff(k)).collect();
        UniPoly::new(self.axis, coeffs)
    }
}

impl Mul for &UniPoly {
    type Output = UniPoly;
    fn mul(self, rhs: &UniPoly) -> UniPoly {
        self.check_axis(rhs);
        if self.is_zero() || rhs.is_zero() {
            return UniPoly::zero(self.axis);
        }
        let mut coeffs = vec![Rational::zero(); self.coeffs.len() + rhs.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in rhs.coeffs.iter().enumerate() {
                coeffs[i + j] += a * b;
            }
        }
        UniPoly::new(self.axis, coeffs)
    }
}

/// Sparse bivariate polynomial `Σ c_ab · x1^a · x2^b`. Zero coefficients are never stored.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct BivarPoly {
    terms: BTreeMap<(u32, u32), Rational>,
}

impl BivarPoly {
    pub fn zero() -> Self {
        BivarPoly::default()
    }

    pub fn constant(c: Rational) -> Self {
        let mut p = BivarPoly::zero();
        p.add_term((0, 0), c);
        p
    }

    /// Builds from `(x1 power, x2 power, coefficient)` triples; like terms are summed.
    pub fn from_terms<I>(terms: I) -> Self
    where
        I: IntoIterator<Item = (u32, u32, Rational)>,
    {
        let mut p = BivarPoly::zero();
        for (a, b, c) in terms {
            p.add_term((a, b), c);
        }
        p
    }

    pub fn terms(&self) -> &BTreeMap<(u32, u32), Rational> {
        &self.terms
    }

    pub fn coeff(&self, a: u32, b: u32) -> Rational {
        self.terms.get(&(a, b)).cloned().unwrap_or_else(Rational::zero)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Largest `a + b` over stored monomials; `None` for zero.
    pub fn total_degree(&self) -> Option<u32> {
        self.terms.keys().map(|&(a, b)| a + b).max()
    }

    pub fn add_term(&mut self, key: (u32, u32), c: Rational) {
        if c.is_zero() {
            return;
        }
        let slot = self.terms.entry(key).or_insert_with(Rational::zero);
        *slot += c;
        if slot.is_zero() {
            self.terms.remove(&key);
        }
    }

    pub fn scale(&self, c: &Rational) -> Self {
        BivarPoly::from_terms(self.terms.iter().map(|(&(a, b), v)| (a, b, v * c)))
    }

    pub fn eval_f64(&self, x1: f64, x2: f64) -> f64 {
        self.terms
            .iter()
            .map(|(&(a, b), c)| c.to_f64().unwrap_or(f64::NAN) * x1.powi(a as i32) * x2.powi(b as i32))
            .sum()
    }

    pub fn to_text(&self) -> String {
        if self.is_zero() {
            return "0".to_string();
        }
        let terms: Vec<String> = self
            .terms
            .iter()
            .map(|(&(a, b), c)| {
                let mut s = format_rational(c);
                if a > 0 {
                    s.push_str(&format!("*x1^{a}"));
                }
                if b > 0 {
                    s.push_str(&format!("*x2^{b}"));
                }
                s
            })
            .collect();
        terms.join(" + ")
    }
}

impl fmt::Display for BivarPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

impl From<&UniPoly> for BivarPoly {
    fn from(p: &UniPoly) -> Self {
        p.lift()
    }
}

impl Add for &BivarPoly {
    type Output = BivarPoly;
    fn add(self, rhs: &BivarPoly) -> BivarPoly {
        let mut out = self.clone();
        for (&k, c) in &rhs.terms {
            out.add_term(k, c.clone());
        }
        out
    }
}

impl Sub for &BivarPoly {
    type Output = BivarPoly;
    fn sub(self, rhs: &BivarPoly) -> BivarPoly {
        let mut out = self.clone();
        for (&k, c) in &rhs.terms {
            out.add_term(k, -c.clone());
        }
        out
    }
}

impl Neg for &BivarPoly {
    type Output = BivarPoly;
    fn neg(self) -> BivarPoly {
        self.scale(&-Rational::one())
    }
}

impl Mul for &BivarPoly {
    type Output = BivarPoly;
    fn mul(self, rhs: &BivarPoly) -> BivarPoly {
        let mut out = BivarPoly::zero();
        for (&(a1, b1), c1) in &self.terms {
            for (&(a2, b2), c2) in &rhs.terms {
                out.add_term((a1 + a2, b1 + b2), c1 * c2);
            }
        }
        out
    }
}

/// Accepts terms joined by `+`/`-`; each term is an optional rational
/// coefficient (`3`, `-3/7`, `0.75`) followed by `*`-separated factors
/// `x`, `x^k`, `x1^a`, `x2^b`. A bare `x` counts as `x1`.
impl FromStr for BivarPoly {
    type Err = ExactError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let compact: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        if compact.is_empty() {
            return Err(ExactError::Parse("empty polynomial".into()));
        }
        let mut out = BivarPoly::zero();
        for (negative, body) in split_terms(&compact)? {
            let (key, mut c) = parse_term(body)?;
            if negative {
                c = -c;
            }
            out.add_term(key, c);
        }
        Ok(out)
    }
}

fn split_terms(s: &str) -> Result<Vec<(bool, &str)>, ExactError> {
    let bytes = s.as_bytes();
    let mut out = Vec::new();
    let mut start = 0;
    let mut negative = false;
    let mut i = 0;
    // leading sign
    if i < bytes.len() && (bytes[i] == b'+' || bytes[i] == b'-') {
        negative = bytes[i] == b'-';
        i += 1;
        start = i;
    }
    while i < bytes.len() {
        let b = bytes[i];
        // a sign splits terms unless it follows `^`, `*`, `/` or another sign
        if (b == b'+' || b == b'-') && i > start && !matches!(bytes[i - 1], b'^' | b'*' | b'/') {
            out.push((negative, &s[start..i]));
            negative = b == b'-';
            start = i + 1;
            // `+ -3/7` style: fold a second sign into this term
            if start < bytes.len() && (bytes[start] == b'+' || bytes[start] == b'-') {
                if bytes[start] == b'-' {
                    negative = !negative;
                }
                start += 1;
            }
            i = start;
            continue;
        }
        i += 1;
    }
    if start >= bytes.len() {
        return Err(ExactError::Parse(format!("dangling sign in `{s}`")));
    }
    out.push((negative, &s[start..]));
    Ok(out)
}

fn parse_term(term: &str) -> Result<((u32, u32), Rational), ExactError> {
    let mut coeff = Rational::one();
    let mut key = (0u32, 0u32);
    for factor in term.split('*') {
        if factor.is_empty() {
            return Err(ExactError::Parse(format!("empty factor in `{term}`")));
        }
        if factor.starts_with('x') {
            let (var, power) = match factor.split_once('^') {
                Some((v, p)) => (
                    v,
                    p.parse::<u32>()
                        .map_err(|_| ExactError::Parse(format!("bad exponent in `{factor}`")))?,
                ),
                None => (factor, 1),
            };
            match var {
                "x" | "x1" => key.0 += power,
                "x2" => key.1 += power,
                _ => return Err(ExactError::Parse(format!("unknown variable `{var}`"))),
            }
        } else {
            coeff *= parse_rational(factor)?;
        }
    }
    Ok((key, coeff))
}

/// Parses `p`, `p/q`, or a finite decimal such as `-0.75` into an exact rational.
pub fn parse_rational(s: &str) -> Result<Rational, ExactError> {
    let err = || ExactError::Parse(format!("bad rational `{s}`"));
    let s = s.trim();
    if let Some((p, q)) = s.split_once('/') {
        let p: BigInt = p.parse().map_err(|_| err())?;
        let q: BigInt = q.parse().map_err(|_| err())?;
        if q.is_zero() {
            return Err(err());
        }
        return Ok(Rational::new(p, q));
    }
    if let Some((whole, frac)) = s.split_once('.') {
        let negative = whole.starts_with('-');
        let digits = format!("{}{}", whole.trim_start_matches(['-', '+']), frac);
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return Err(err());
        }
        let num: BigInt = digits.parse().map_err(|_| err())?;
        let den = num_traits::pow(BigInt::from(10), frac.len());
        let r = Rational::new(num, den);
        return Ok(if negative { -r } else { r });
    }
    s.parse::<BigInt>().map(Rational::from_integer).map_err(|_| err())
}

pub fn format_rational(r: &Rational) -> String {
    if r.is_integer() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Decimal rendering at `places` digits, computed exactly. Ties round away
/// from zero, which is how the reference trajectory tables print `±x.xxxx5`.
pub fn to_decimal(r: &Rational, places: usize) -> String {
    let scale = num_traits::pow(BigInt::from(10), places);
    let scaled = r.abs() * Rational::from_integer(scale);
    let n = (scaled + ratio(1, 2)).floor().to_integer();
    let negative = r.is_negative() && !n.is_zero();
    let digits = n.to_string();
    let padded = if digits.len() <= places {
        format!("{}{}", "0".repeat(places - digits.len() + 1), digits)
    } else {
        digits
    };
    let split = padded.len() - places;
    let mut out = String::new();
    if negative {
        out.push('-');
    }
    out.push_str(&padded[..split]);
    if places > 0 {
        out.push('.');
        out.push_str(&padded[split..]);
    }
    out
}
