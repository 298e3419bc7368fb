//! Sparse multivariate polynomials with complex coefficients.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use num_complex::Complex64;

use crate::error::{Error, Result};

type C = Complex64;

/// Exponent vector ordered graded-lexicographically: total degree first,
/// then the exponents compared left to right.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Monomial(pub Vec<u32>);

impl Monomial {
    pub fn one(nvars: usize) -> Self {
        Monomial(vec![0; nvars])
    }

    pub fn var(nvars: usize, i: usize) -> Self {
        let mut e = vec![0; nvars];
        e[i] = 1;
        Monomial(e)
    }

    pub fn degree(&self) -> u32 {
        self.0.iter().sum()
    }
}

impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree().cmp(&other.degree()).then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Behaviour under `x -> -x` for all variables at once.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Zero,
    Even,
    Odd,
    Mixed,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Poly {
    nvars: usize,
    terms: BTreeMap<Monomial, C>,
}

impl Poly {
    pub fn zero(nvars: usize) -> Self {
        Self { nvars, terms: BTreeMap::new() }
    }

    pub fn constant(nvars: usize, c: C) -> Self {
        let mut p = Self::zero(nvars);
        p.add_term(Monomial::one(nvars), c);
        p
    }

    pub fn var(nvars: usize, i: usize) -> Self {
        let mut p = Self::zero(nvars);
        p.add_term(Monomial::var(nvars, i), C::new(1.0, 0.0));
        p
    }

    pub fn monomial(exps: Vec<u32>, c: C) -> Self {
        let mut p = Self::zero(exps.len());
        p.add_term(Monomial(exps), c);
        p
    }

    pub fn nvars(&self) -> usize {
        self.nvars
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

    /// Terms in graded-lex order.
    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, &C)> {
        self.terms.iter()
    }

    pub fn coeff(&self, m: &Monomial) -> C {
        self.terms.get(m).copied().unwrap_or_default()
    }

    /// Adds `c * m`; exact zeros are never stored.
    pub fn add_term(&mut self, m: Monomial, c: C) {
        assert_eq!(m.0.len(), self.nvars, "monomial length");
        if c == C::new(0.0, 0.0) {
            return;
        }
        let cancelled = {
            let e = self.terms.entry(m.clone()).or_default();
            *e += c;
            *e == C::new(0.0, 0.0)
        };
        if cancelled {
            self.terms.remove(&m);
        }
    }

    pub fn degree(&self) -> u32 {
        self.terms.keys().map(Monomial::degree).max().unwrap_or(0)
    }

    fn check(&self, other: &Self) -> Result<()> {
        if self.nvars != other.nvars {
            return Err(Error::DimensionMismatch { expected: self.nvars, got: other.nvars });
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check(other)?;
        let mut out = self.clone();
        for (m, c) in &other.terms {
            out.add_term(m.clone(), *c);
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scale(C::new(-1.0, 0.0)))
    }

    pub fn scale(&self, s: C) -> Self {
        let mut out = Self::zero(self.nvars);
        for (m, c) in &self.terms {
            out.add_term(m.clone(), c * s);
        }
        out
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.check(other)?;
        let mut acc: BTreeMap<Monomial, C> = BTreeMap::new();
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                let e: Vec<u32> = ma.0.iter().zip(&mb.0).map(|(a, b)| a + b).collect();
                *acc.entry(Monomial(e)).or_default() += ca * cb;
            }
        }
        acc.retain(|_, c| *c != C::new(0.0, 0.0));
        Ok(Self { nvars: self.nvars, terms: acc })
    }

    pub fn eval(&self, x: &[f64]) -> C {
        assert_eq!(x.len(), self.nvars, "point length");
        self.terms
            .iter()
            .map(|(m, c)| c * m.0.iter().zip(x).map(|(&e, &v)| v.powi(e as i32)).product::<f64>())
            .sum()
    }

    pub fn eval_complex(&self, x: &[C]) -> C {
        assert_eq!(x.len(), self.nvars, "point length");
        self.terms
            .iter()
            .map(|(m, c)| c * m.0.iter().zip(x).map(|(&e, v)| v.powu(e)).product::<C>())
            .sum()
    }

    /// Flip the sign of every variable with `mask[i]` set.
    pub fn negate_vars(&self, mask: &[bool]) -> Result<Self> {
        if mask.len() != self.nvars {
            return Err(Error::DimensionMismatch { expected: self.nvars, got: mask.len() });
        }
        let mut out = Self::zero(self.nvars);
        for (m, c) in &self.terms {
            let odd = m.0.iter().zip(mask).filter(|(&e, &f)| f && e % 2 == 1).count();
            out.add_term(m.clone(), if odd % 2 == 1 { -c } else { *c });
        }
        Ok(out)
    }

    /// Affine shift `x -> x + shift`.
    pub fn shift(&self, shift: &[C]) -> Result<Self> {
        if shift.len() != self.nvars {
            return Err(Error::DimensionMismatch { expected: self.nvars, got: shift.len() });
        }
        let images: Vec<Poly> = (0..self.nvars)
            .map(|i| {
                let mut p = Poly::var(self.nvars, i);
                p.add_term(Monomial::one(self.nvars), shift[i]);
                p
            })
            .collect();
        self.substitute(&images)
    }

    /// Replace variable `i` by the polynomial `images[i]`; the result lives in
    /// the variables of the images.
    pub fn substitute(&self, images: &[Poly]) -> Result<Self> {
        if images.len() != self.nvars {
            return Err(Error::DimensionMismatch { expected: self.nvars, got: images.len() });
        }
        let target = images.first().map_or(0, |p| p.nvars);
        if images.iter().any(|p| p.nvars != target) {
            return Err(crate::error::invalid("substitution images disagree on variable count"));
        }
        let mut powers: Vec<Vec<Poly>> = images.iter().map(|p| vec![Poly::constant(target, C::new(1.0, 0.0)), p.clone()]).collect();
        let mut out = Poly::zero(target);
        for (m, c) in &self.terms {
            let mut term = Poly::constant(target, *c);
            for (i, &e) in m.0.iter().enumerate() {
                let e = e as usize;
                while powers[i].len() <= e {
                    let next = powers[i].last().unwrap().mul(&images[i])?;
                    powers[i].push(next);
                }
                if e > 0 {
                    term = term.mul(&powers[i][e])?;
                }
            }
            out = out.add(&term)?;
        }
        Ok(out)
    }

    pub fn parity(&self) -> Parity {
        let even = self.terms.keys().any(|m| m.degree() % 2 == 0);
        let odd = self.terms.keys().any(|m| m.degree() % 2 == 1);
        match (even, odd) {
            (false, false) => Parity::Zero,
            (true, false) => Parity::Even,
            (false, true) => Parity::Odd,
            (true, true) => Parity::Mixed,
        }
    }

    /// Drop coefficients with modulus below `threshold`.
    pub fn prune(&self, threshold: f64) -> Self {
        let mut out = self.clone();
        out.terms.retain(|_, c| c.norm() >= threshold);
        out
    }

    /// Largest coefficient modulus.
    pub fn max_coeff(&self) -> f64 {
        self.terms.values().map(|c| c.norm()).fold(0.0, f64::max)
    }

    /// Max coefficient modulus of the difference.
    pub fn distance(&self, other: &Self) -> Result<f64> {
        Ok(self.sub(other)?.max_coeff())
    }

    /// Embed into a larger variable set: variable `i` goes to `offset + i`.
    pub fn embed(&self, nvars: usize, offset: usize) -> Self {
        assert!(offset + self.nvars <= nvars);
        let mut out = Poly::zero(nvars);
        for (m, c) in &self.terms {
            let mut e = vec![0; nvars];
            e[offset..offset + self.nvars].copy_from_slice(&m.0);
            out.add_term(Monomial(e), *c);
        }
        out
    }
}
