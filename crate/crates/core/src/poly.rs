//! Sparse multivariate polynomials over a fixed number of real variables.
//!
//! Every downstream structure (moment matrices, localizing matrices, the
//! truncated moment index) is laid out in the graded order implemented by
//! [`Monomial`]'s `Ord`: total degree first, ties broken lexicographically
//! with `z1 > z2 > ... > zn`. With this order the monomials of degree `<= d`
//! form a prefix of the monomials of degree `<= d + 1`, so a lower-order
//! moment matrix is always a leading principal submatrix of a higher one.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use crate::error::{Error, Result};

/// Coefficients below this magnitude are dropped after every operation.
pub const ZERO_TOL: f64 = 1e-14;

/// Exponent vector `alpha` of the monomial `z^alpha`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Monomial(Vec<u32>);

impl Monomial {
    pub fn new(exponents: Vec<u32>) -> Self {
        Monomial(exponents)
    }

    /// The constant monomial `1` in `n` variables.
    pub fn one(n: usize) -> Self {
        Monomial(vec![0; n])
    }

    /// The monomial `z_i` (zero-based `i`).
    pub fn var(n: usize, i: usize) -> Self {
        let mut e = vec![0; n];
        e[i] = 1;
        Monomial(e)
    }

    pub fn exponents(&self) -> &[u32] {
        &self.0
    }

    pub fn n_vars(&self) -> usize {
        self.0.len()
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }

    pub fn is_one(&self) -> bool {
        self.0.iter().all(|&e| e == 0)
    }

    /// Product of monomials, i.e. the sum of exponent vectors.
    pub fn times(&self, other: &Monomial) -> Monomial {
        debug_assert_eq!(self.0.len(), other.0.len());
        Monomial(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn eval(&self, z: &[f64]) -> f64 {
        self.0
            .iter()
            .zip(z)
            .filter(|(&e, _)| e > 0)
            .map(|(&e, &x)| x.powi(e as i32))
            .product()
    }

    /// Pads the exponent vector with zeros up to `n` variables.
    pub fn embed(&self, n: usize) -> Monomial {
        let mut e = self.0.clone();
        e.resize(n, 0);
        Monomial(e)
    }
}

impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree()
            .cmp(&other.degree())
            // larger leading exponents come first within a degree
            .then_with(|| other.0.cmp(&self.0))
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc as usize
}

/// All monomials in `n` variables of total degree `<= d`, in graded order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MonomialBasis {
    n: usize,
    degree: usize,
    monomials: Vec<Monomial>,
}

impl MonomialBasis {
    pub fn n_vars(&self) -> usize {
        self.n
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.monomials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.monomials.is_empty()
    }

    pub fn monomials(&self) -> &[Monomial] {
        &self.monomials
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Monomial> {
        self.monomials.iter()
    }
}

impl std::ops::Index<usize> for MonomialBasis {
    type Output = Monomial;
    fn index(&self, i: usize) -> &Monomial {
        &self.monomials[i]
    }
}

/// Enumerates `N^n_d` in graded order.
pub fn basis(n: usize, d: usize) -> MonomialBasis {
    let mut monomials = Vec::with_capacity(binomial(n + d, d));
    let mut scratch = vec![0u32; n];
    for t in 0..=d {
        exact_degree(n, 0, t as u32, &mut scratch, &mut monomials);
    }
    MonomialBasis {
        n,
        degree: d,
        monomials,
    }
}

fn exact_degree(n: usize, pos: usize, rest: u32, scratch: &mut [u32], out: &mut Vec<Monomial>) {
    if n == 0 {
        if rest == 0 {
            out.push(Monomial(Vec::new()));
        }
        return;
    }
    if pos == n - 1 {
        scratch[pos] = rest;
        out.push(Monomial(scratch.to_vec()));
        return;
    }
    for e in (0..=rest).rev() {
        scratch[pos] = e;
        exact_degree(n, pos + 1, rest - e, scratch, out);
    }
}

/// Real polynomial in a fixed number of variables, stored as a sparse
/// `Monomial -> coefficient` map without zero entries.
#[derive(Clone, Debug, PartialEq)]
pub struct Polynomial {
    n: usize,
    terms: BTreeMap<Monomial, f64>,
}

impl Polynomial {
    pub fn zero(n: usize) -> Self {
        Polynomial {
            n,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(n: usize, c: f64) -> Self {
        Self::term(Monomial::one(n), c)
    }

    /// The polynomial `z_i` (zero-based `i`).
    pub fn variable(n: usize, i: usize) -> Self {
        Self::term(Monomial::var(n, i), 1.0)
    }

    pub fn term(m: Monomial, coef: f64) -> Self {
        let mut p = Polynomial::zero(m.n_vars());
        if coef.abs() >= ZERO_TOL {
            p.terms.insert(m, coef);
        }
        p
    }

    /// Builds a polynomial from `(exponents, coefficient)` pairs, summing
    /// repeated exponents.
    pub fn from_terms<I>(n: usize, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Vec<u32>, f64)>,
    {
        let mut p = Polynomial::zero(n);
        for (e, c) in terms {
            if e.len() != n {
                return Err(Error::DimensionMismatch {
                    context: "polynomial term",
                    expected: n,
                    found: e.len(),
                });
            }
            *p.terms.entry(Monomial(e)).or_insert(0.0) += c;
        }
        p.canonicalize();
        Ok(p)
    }

    pub fn n_vars(&self) -> usize {
        self.n
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Total degree; the zero polynomial has degree 0.
    pub fn degree(&self) -> u32 {
        self.terms.keys().map(Monomial::degree).max().unwrap_or(0)
    }

    /// Terms in ascending graded order.
    pub fn terms(&self) -> impl DoubleEndedIterator<Item = (&Monomial, f64)> + '_ {
        self.terms.iter().map(|(m, &c)| (m, c))
    }

    pub fn coefficient(&self, m: &Monomial) -> f64 {
        self.terms.get(m).copied().unwrap_or(0.0)
    }

    pub fn max_abs_coefficient(&self) -> f64 {
        self.terms.values().fold(0.0, |acc, c| acc.max(c.abs()))
    }

    fn canonicalize(&mut self) {
        self.terms.retain(|_, c| c.abs() >= ZERO_TOL);
    }

    fn check_same(&self, other: &Polynomial) -> Result<()> {
        if self.n != other.n {
            return Err(Error::DimensionMismatch {
                context: "polynomial arithmetic",
                expected: self.n,
                found: other.n,
            });
        }
        Ok(())
    }

    /// `self += scale * other`, canonicalized.
    pub fn add_scaled(&mut self, other: &Polynomial, scale: f64) -> Result<()> {
        self.check_same(other)?;
        if scale == 0.0 {
            return Ok(());
        }
        for (m, c) in &other.terms {
            *self.terms.entry(m.clone()).or_insert(0.0) += scale * c;
        }
        self.canonicalize();
        Ok(())
    }

    pub fn checked_add(&self, other: &Polynomial) -> Result<Polynomial> {
        let mut out = self.clone();
        out.add_scaled(other, 1.0)?;
        Ok(out)
    }

    pub fn checked_sub(&self, other: &Polynomial) -> Result<Polynomial> {
        let mut out = self.clone();
        out.add_scaled(other, -1.0)?;
        Ok(out)
    }

    pub fn checked_mul(&self, other: &Polynomial) -> Result<Polynomial> {
        self.check_same(other)?;
        let mut terms: BTreeMap<Monomial, f64> = BTreeMap::new();
        for (a, ca) in &self.terms {
            for (b, cb) in &other.terms {
                *terms.entry(a.times(b)).or_insert(0.0) += ca * cb;
            }
        }
        let mut p = Polynomial { n: self.n, terms };
        p.canonicalize();
        Ok(p)
    }

    pub fn scale(&self, s: f64) -> Polynomial {
        let mut p = Polynomial {
            n: self.n,
            terms: self.terms.iter().map(|(m, c)| (m.clone(), c * s)).collect(),
        };
        p.canonicalize();
        p
    }

    pub fn pow(&self, e: u32) -> Polynomial {
        let mut acc = Polynomial::constant(self.n, 1.0);
        for _ in 0..e {
            acc = &acc * self;
        }
        acc
    }

    pub fn eval(&self, z: &[f64]) -> Result<f64> {
        if z.len() != self.n {
            return Err(Error::DimensionMismatch {
                context: "polynomial evaluation",
                expected: self.n,
                found: z.len(),
            });
        }
        Ok(self.terms.iter().map(|(m, c)| c * m.eval(z)).sum())
    }

    /// Partial derivative with respect to variable `var`.
    pub fn derivative(&self, var: usize) -> Polynomial {
        assert!(var < self.n, "variable index out of range");
        let mut terms = BTreeMap::new();
        for (m, &c) in &self.terms {
            let e = m.exponents()[var];
            if e > 0 {
                let mut exps = m.exponents().to_vec();
                exps[var] -= 1;
                terms.insert(Monomial::new(exps), c * e as f64);
            }
        }
        Polynomial { n: self.n, terms }
    }

    pub fn gradient(&self, z: &[f64]) -> Result<Vec<f64>> {
        (0..self.n).map(|i| self.derivative(i).eval(z)).collect()
    }

    /// Reinterprets the polynomial in `n >= self.n` variables; the extra
    /// variables are appended and do not occur.
    pub fn embed(&self, n: usize) -> Polynomial {
        assert!(n >= self.n, "cannot embed into fewer variables");
        Polynomial {
            n,
            terms: self.terms.iter().map(|(m, &c)| (m.embed(n), c)).collect(),
        }
    }

    /// Renders terms from highest to lowest graded order using the given
    /// variable names, e.g. `29*c12*c21 + 3*c21 - 52`.
    pub fn render(&self, names: &[String]) -> String {
        if self.terms.is_empty() {
            return "0".to_string();
        }
        let mut out = String::new();
        for (i, (m, &c)) in self.terms.iter().rev().enumerate() {
            let mag = c.abs();
            if i == 0 {
                if c < 0.0 {
                    out.push('-');
                }
            } else {
                out.push_str(if c < 0.0 { " - " } else { " + " });
            }
            let factors: Vec<String> = m
                .exponents()
                .iter()
                .enumerate()
                .filter(|(_, &e)| e > 0)
                .map(|(v, &e)| {
                    let name = names.get(v).cloned().unwrap_or_else(|| format!("z{}", v + 1));
                    if e == 1 {
                        name
                    } else {
                        format!("{name}^{e}")
                    }
                })
                .collect();
            if factors.is_empty() {
                out.push_str(&format_coef(mag));
            } else {
                if mag != 1.0 {
                    out.push_str(&format_coef(mag));
                    out.push('*');
                }
                out.push_str(&factors.join("*"));
            }
        }
        out
    }
}

fn format_coef(c: f64) -> String {
    if c.fract() == 0.0 && c.abs() < 1e15 {
        format!("{}", c as i64)
    } else {
        format!("{c}")
    }
}

impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<String> = (1..=self.n).map(|i| format!("z{i}")).collect();
        f.write_str(&self.render(&names))
    }
}

// Operator forms panic on a variable-count mismatch; use the `checked_*`
// methods where the operands come from user input.

impl Add for &Polynomial {
    type Output = Polynomial;
    fn add(self, rhs: &Polynomial) -> Polynomial {
        self.checked_add(rhs).expect("polynomial variable count mismatch")
    }
}

impl Sub for &Polynomial {
    type Output = Polynomial;
    fn sub(self, rhs: &Polynomial) -> Polynomial {
        self.checked_sub(rhs).expect("polynomial variable count mismatch")
    }
}

impl Mul for &Polynomial {
    type Output = Polynomial;
    fn mul(self, rhs: &Polynomial) -> Polynomial {
        self.checked_mul(rhs).expect("polynomial variable count mismatch")
    }
}

impl Neg for &Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        self.scale(-1.0)
    }
}

/// Evaluates `sum_j coeffs[j] * t^(d - j)` at `t = arg` by Horner's rule, where
/// the coefficients are themselves polynomials (highest degree first).
pub fn compose_polynomial(coeffs: &[Polynomial], arg: &Polynomial) -> Result<Polynomial> {
    let (first, rest) = coeffs.split_first().ok_or(Error::EmptyCoefficients)?;
    let mut acc = first.clone();
    for c in rest {
        acc = acc.checked_mul(arg)?;
        acc.add_scaled(c, 1.0)?;
    }
    Ok(acc)
}

/// Applies the univariate polynomial `u(t) = u[0] t^d + ... + u[d]` to every
/// argument.
pub fn compose_affine(u: &[f64], args: &[Polynomial]) -> Result<Vec<Polynomial>> {
    if u.is_empty() {
        return Err(Error::EmptyCoefficients);
    }
    let n = match args.first() {
        Some(a) => a.n_vars(),
        None => return Err(Error::InvalidArgument("no arguments to compose".into())),
    };
    let coeffs: Vec<Polynomial> = u.iter().map(|&c| Polynomial::constant(n, c)).collect();
    args.iter().map(|a| compose_polynomial(&coeffs, a)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(n: usize, terms: &[(&[u32], f64)]) -> Polynomial {
        Polynomial::from_terms(n, terms.iter().map(|(e, c)| (e.to_vec(), *c))).unwrap()
    }

    #[test]
    fn basis_small_cases() {
        let b = basis(1, 2);
        let got: Vec<_> = b.iter().map(|m| m.exponents().to_vec()).collect();
        assert_eq!(got, vec![vec![0], vec![1], vec![2]]);

        let b = basis(2, 2);
        let got: Vec<_> = b.iter().map(|m| m.exponents().to_vec()).collect();
        assert_eq!(
            got,
            vec![vec![0, 0], vec![1, 0], vec![0, 1], vec![2, 0], vec![1, 1], vec![0, 2]]
        );
        assert_eq!(basis(5, 2).len(), 21);
    }

    #[test]
    fn basis_sizes_and_prefixes() {
        for n in 1..=8 {
            for d in 0..=6 {
                let b = basis(n, d);
                assert_eq!(b.len(), binomial(n + d, d), "n={n} d={d}");
                assert!(b.monomials().windows(2).all(|w| w[0] < w[1]));
                if d > 0 {
                    let lower = basis(n, d - 1);
                    assert_eq!(lower.monomials(), &b.monomials()[..lower.len()]);
                }
            }
        }
    }

    #[test]
    fn add_examples() {
        let a = p(2, &[(&[2, 0], 1.0), (&[0, 0], 1.0)]);
        let b = p(2, &[(&[1, 1], 2.0), (&[0, 0], -1.0)]);
        assert_eq!(&a + &b, p(2, &[(&[2, 0], 1.0), (&[1, 1], 2.0)]));
        assert_eq!(&a + &Polynomial::zero(2), a);
        assert!((&a + &(-&a)).is_zero());
        assert!(a.checked_add(&Polynomial::zero(3)).is_err());
    }

    #[test]
    fn mul_examples() {
        let z1 = Polynomial::variable(2, 0);
        let z2 = Polynomial::variable(2, 1);
        let one = Polynomial::constant(2, 1.0);
        let s = &z1 + &z2;
        assert_eq!(&s * &one, s);
        assert_eq!(&s * &s, p(2, &[(&[2, 0], 1.0), (&[1, 1], 2.0), (&[0, 2], 1.0)]));

        // z1^2 + (1 - z1^2 + z1 z2)^2
        let inner = &(&one - &(&z1 * &z1)) + &(&z1 * &z2);
        let sos = &(&z1 * &z1) + &(&inner * &inner);
        // z1^4 - z1^2 (1 + 2 z1 z2) + z1^2 z2^2 + 2 z1 z2 + 1
        let expected = p(
            2,
            &[
                (&[4, 0], 1.0),
                (&[2, 0], -1.0),
                (&[3, 1], -2.0),
                (&[2, 2], 1.0),
                (&[1, 1], 2.0),
                (&[0, 0], 1.0),
            ],
        );
        assert_eq!(sos, expected);
        assert_eq!(sos.degree(), 4);
        assert!(z1.checked_mul(&Polynomial::zero(1)).is_err());
    }

    #[test]
    fn eval_examples() {
        assert_eq!(Polynomial::zero(3).eval(&[1.0, 2.0, 3.0]).unwrap(), 0.0);
        let q = p(2, &[(&[2, 0], 1.0), (&[1, 1], 2.0), (&[0, 0], 1.0)]);
        assert_eq!(q.eval(&[1.0, 2.0]).unwrap(), 6.0);
        assert_eq!(Polynomial::constant(2, 7.0).eval(&[-3.0, 0.5]).unwrap(), 7.0);
        assert!(q.eval(&[1.0]).is_err());
    }

    #[test]
    fn compose_examples() {
        let z1 = Polynomial::variable(2, 0);
        let z2 = Polynomial::variable(2, 1);
        let s = &z1 + &z2;
        assert_eq!(
            compose_affine(&[1.0, 0.0], std::slice::from_ref(&s)).unwrap(),
            vec![s.clone()]
        );
        let c = compose_affine(&[0.0, 0.0, 3.5], std::slice::from_ref(&s)).unwrap();
        assert_eq!(c, vec![Polynomial::constant(2, 3.5)]);
        let sq = compose_affine(&[1.0, 0.0, 1.0], &[s]).unwrap();
        assert_eq!(
            sq[0],
            p(2, &[(&[2, 0], 1.0), (&[1, 1], 2.0), (&[0, 2], 1.0), (&[0, 0], 1.0)])
        );
        assert!(matches!(compose_affine(&[], &[z1]), Err(Error::EmptyCoefficients)));
    }

    #[test]
    fn zero_polynomial_has_degree_zero() {
        assert_eq!(Polynomial::zero(4).degree(), 0);
    }

    #[test]
    fn tiny_coefficients_are_dropped() {
        let a = p(1, &[(&[1], 1.0)]);
        let b = p(1, &[(&[1], -1.0 + 1e-16)]);
        assert!((&a + &b).is_zero());
    }

    #[test]
    fn render_uses_descending_order() {
        let names: Vec<String> = ["c12", "c21"].iter().map(|s| s.to_string()).collect();
        let q = p(2, &[(&[0, 1], 3.0), (&[1, 1], 29.0), (&[0, 0], -52.0)]);
        assert_eq!(q.render(&names), "29*c12*c21 + 3*c21 - 52");
        assert_eq!(Polynomial::zero(2).render(&names), "0");
        assert_eq!(p(2, &[(&[2, 0], -1.0)]).to_string(), "-z1^2");
    }

    #[test]
    fn embed_keeps_terms() {
        let q = p(2, &[(&[1, 1], 2.0), (&[0, 0], 1.0)]);
        let e = q.embed(3);
        assert_eq!(e.n_vars(), 3);
        assert_eq!(e.eval(&[2.0, 3.0, 100.0]).unwrap(), q.eval(&[2.0, 3.0]).unwrap());
    }

    #[test]
    fn derivative_by_hand() {
        // d/dz1 (3 z1^2 z2 - z2 + 4) = 6 z1 z2
        let p = Polynomial::from_terms(2, vec![(vec![2, 1], 3.0), (vec![0, 1], -1.0), (vec![0, 0], 4.0)]).unwrap();
        let d = p.derivative(0);
        assert_eq!(d, Polynomial::from_terms(2, vec![(vec![1, 1], 6.0)]).unwrap());
        assert_eq!(p.gradient(&[1.0, 2.0]).unwrap(), vec![12.0, 2.0]);
        assert!(Polynomial::constant(2, 5.0).derivative(1).is_zero());
    }
}
