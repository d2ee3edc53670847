//! Truncated multivariate Taylor series ("jets") with complex coefficients.
//!
//! A [`MultiJet`] stores every coefficient of a polynomial in a small set of
//! named formal variables, up to a per-variable cap on the exponent. Products
//! drop every term whose exponent exceeds a cap, so composing analytic
//! functions on jets yields the exact truncated Taylor expansion, and mixed
//! partial derivatives at the origin are read off as `coeff(k) * prod(k_i!)`.
//!
//! Storage is dense in mixed radix (last variable fastest). Shapes in this
//! crate stay below a few thousand coefficients.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Ordered set of named formal variables with per-variable exponent caps.
#[derive(Clone, PartialEq, Eq)]
pub struct JetShape {
    names: Vec<String>,
    caps: Vec<usize>,
    strides: Vec<usize>,
    len: usize,
    /// `exponents[flat * nvars + v]` is the exponent of variable `v` at `flat`.
    exponents: Vec<usize>,
}

impl JetShape {
    pub fn new(vars: &[(&str, usize)]) -> Result<Arc<JetShape>> {
        let mut names: Vec<String> = Vec::with_capacity(vars.len());
        for (name, _) in vars {
            if names.iter().any(|n| n == name) {
                return Err(Error::DuplicateVariable(name.to_string()));
            }
            names.push(name.to_string());
        }
        let caps: Vec<usize> = vars.iter().map(|&(_, c)| c).collect();
        let nvars = caps.len();
        let mut strides = vec![1; nvars];
        for v in (0..nvars.saturating_sub(1)).rev() {
            strides[v] = strides[v + 1] * (caps[v + 1] + 1);
        }
        let len: usize = caps.iter().map(|c| c + 1).product();
        let mut exponents = vec![0; len * nvars];
        for flat in 0..len {
            let mut rest = flat;
            for v in 0..nvars {
                exponents[flat * nvars + v] = rest / strides[v];
                rest %= strides[v];
            }
        }
        Ok(Arc::new(JetShape {
            names,
            caps,
            strides,
            len,
            exponents,
        }))
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn caps(&self) -> &[usize] {
        &self.caps
    }

    /// Number of stored coefficients, `prod(cap_i + 1)`.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn num_vars(&self) -> usize {
        self.caps.len()
    }

    /// Highest total degree that survives truncation.
    pub fn total_degree(&self) -> usize {
        self.caps.iter().sum()
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownVariable(name.to_string()))
    }

    fn flat_index(&self, k: &[usize]) -> Result<usize> {
        if k.len() != self.caps.len() || k.iter().zip(&self.caps).any(|(ki, ci)| ki > ci) {
            return Err(Error::IndexOutOfCaps {
                index: k.to_vec(),
                caps: self.caps.clone(),
            });
        }
        Ok(k.iter().zip(&self.strides).map(|(ki, si)| ki * si).sum())
    }

    fn exponents_at(&self, flat: usize) -> &[usize] {
        let n = self.caps.len();
        &self.exponents[flat * n..(flat + 1) * n]
    }
}

impl fmt::Debug for JetShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut m = f.debug_map();
        for (n, c) in self.names.iter().zip(&self.caps) {
            m.entry(n, c);
        }
        m.finish()
    }
}

/// Analytic functions that can be composed with a jet.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Analytic {
    Exp,
    Recip,
    Sqrt,
}

/// Truncated multivariate power series over [`JetShape`].
#[derive(Clone, PartialEq)]
pub struct MultiJet {
    shape: Arc<JetShape>,
    coeffs: Vec<Complex64>,
}

impl fmt::Debug for MultiJet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MultiJet")
            .field("shape", &self.shape)
            .field("coeffs", &self.coeffs)
            .finish()
    }
}

fn same_shape(a: &Arc<JetShape>, b: &Arc<JetShape>) -> bool {
    Arc::ptr_eq(a, b) || **a == **b
}

impl MultiJet {
    pub fn zero(shape: &Arc<JetShape>) -> Self {
        MultiJet {
            shape: shape.clone(),
            coeffs: vec![Complex64::new(0.0, 0.0); shape.len()],
        }
    }

    pub fn constant(shape: &Arc<JetShape>, c: impl Into<Complex64>) -> Self {
        let mut j = Self::zero(shape);
        j.coeffs[0] = c.into();
        j
    }

    /// The formal variable `name` itself (coefficient 1 on its unit index).
    pub fn variable(shape: &Arc<JetShape>, name: &str) -> Result<Self> {
        let v = shape.index_of(name)?;
        if shape.caps[v] == 0 {
            return Err(Error::CapTooSmall(name.to_string()));
        }
        let mut j = Self::zero(shape);
        j.coeffs[shape.strides[v]] = Complex64::new(1.0, 0.0);
        Ok(j)
    }

    /// Builds a jet from raw coefficients in the shape's flat layout.
    pub fn from_coeffs(shape: &Arc<JetShape>, coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.len() != shape.len() {
            return Err(Error::ShapeMismatch);
        }
        Ok(MultiJet {
            shape: shape.clone(),
            coeffs,
        })
    }

    pub fn shape(&self) -> &Arc<JetShape> {
        &self.shape
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn constant_term(&self) -> Complex64 {
        self.coeffs[0]
    }

    pub fn coeff(&self, k: &[usize]) -> Result<Complex64> {
        Ok(self.coeffs[self.shape.flat_index(k)?])
    }

    /// Mixed partial derivative at the origin: `coeff(k) * prod(k_i!)`.
    pub fn derivative(&self, k: &[usize]) -> Result<Complex64> {
        let c = self.coeff(k)?;
        let fact: f64 = k.iter().map(|&ki| factorial(ki)).product();
        Ok(c * fact)
    }

    pub fn checked_add(&self, other: &MultiJet) -> Result<MultiJet> {
        if !same_shape(&self.shape, &other.shape) {
            return Err(Error::ShapeMismatch);
        }
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + b).collect();
        Ok(MultiJet {
            shape: self.shape.clone(),
            coeffs,
        })
    }

    pub fn checked_sub(&self, other: &MultiJet) -> Result<MultiJet> {
        if !same_shape(&self.shape, &other.shape) {
            return Err(Error::ShapeMismatch);
        }
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a - b).collect();
        Ok(MultiJet {
            shape: self.shape.clone(),
            coeffs,
        })
    }

    /// Truncated convolution.
    pub fn checked_mul(&self, other: &MultiJet) -> Result<MultiJet> {
        if !same_shape(&self.shape, &other.shape) {
            return Err(Error::ShapeMismatch);
        }
        let shape = &self.shape;
        let mut out = vec![Complex64::new(0.0, 0.0); shape.len()];
        let nz_b: Vec<usize> = (0..shape.len())
            .filter(|&j| other.coeffs[j] != Complex64::new(0.0, 0.0))
            .collect();
        for (i, &a) in self.coeffs.iter().enumerate() {
            if a == Complex64::new(0.0, 0.0) {
                continue;
            }
            let ei = shape.exponents_at(i);
            for &j in &nz_b {
                let ej = shape.exponents_at(j);
                let fits = ei
                    .iter()
                    .zip(ej)
                    .zip(&shape.caps)
                    .all(|((x, y), c)| x + y <= *c);
                if fits {
                    // Mixed-radix offsets add without carry when every digit fits.
                    out[i + j] += a * other.coeffs[j];
                }
            }
        }
        Ok(MultiJet {
            shape: shape.clone(),
            coeffs: out,
        })
    }

    pub fn scale(&self, c: impl Into<Complex64>) -> MultiJet {
        let c = c.into();
        MultiJet {
            shape: self.shape.clone(),
            coeffs: self.coeffs.iter().map(|x| x * c).collect(),
        }
    }

    pub fn add_scalar(&self, c: impl Into<Complex64>) -> MultiJet {
        let mut out = self.clone();
        out.coeffs[0] += c.into();
        out
    }

    /// Coefficient-wise complex conjugate. This is the conjugate of the
    /// represented function only when every formal variable is real.
    pub fn conj(&self) -> MultiJet {
        MultiJet {
            shape: self.shape.clone(),
            coeffs: self.coeffs.iter().map(|x| x.conj()).collect(),
        }
    }

    /// Splits off the constant term: returns `(c, self - c)`.
    fn split_constant(&self) -> (Complex64, MultiJet) {
        let mut n = self.clone();
        let c = n.coeffs[0];
        n.coeffs[0] = Complex64::new(0.0, 0.0);
        (c, n)
    }

    /// Evaluates `sum_k series[k] * n^k` by Horner's rule, where `n` has a zero
    /// constant term (so `n^(K+1)` vanishes for `K` the total degree).
    fn nilpotent_series(n: &MultiJet, series: &[Complex64]) -> MultiJet {
        let mut acc = MultiJet::constant(&n.shape, series[series.len() - 1]);
        for &s in series.iter().rev().skip(1) {
            acc = (&acc * n).add_scalar(s);
        }
        acc
    }

    pub fn exp(&self) -> MultiJet {
        let (c, n) = self.split_constant();
        let k = self.shape.total_degree();
        let mut series = Vec::with_capacity(k + 1);
        let mut term = 1.0;
        for i in 0..=k {
            if i > 0 {
                term /= i as f64;
            }
            series.push(Complex64::new(term, 0.0));
        }
        Self::nilpotent_series(&n, &series).scale(c.exp())
    }

    pub fn recip(&self) -> Result<MultiJet> {
        let (c, n) = self.split_constant();
        if c == Complex64::new(0.0, 0.0) {
            return Err(Error::SingularConstantTerm("recip"));
        }
        // 1/(c + n) = (1/c) sum_k (-n/c)^k
        let k = self.shape.total_degree();
        let inv = c.inv();
        let series: Vec<Complex64> = (0..=k).map(|i| (-inv).powu(i as u32)).collect();
        Ok(Self::nilpotent_series(&n, &series).scale(inv))
    }

    /// Principal-branch square root.
    pub fn sqrt(&self) -> Result<MultiJet> {
        let (c, n) = self.split_constant();
        if c == Complex64::new(0.0, 0.0) {
            return Err(Error::SingularConstantTerm("sqrt"));
        }
        // sqrt(c + n) = sqrt(c) sum_k binom(1/2, k) (n/c)^k
        let k = self.shape.total_degree();
        let inv = c.inv();
        let mut series = Vec::with_capacity(k + 1);
        let mut binom = 1.0;
        for i in 0..=k {
            if i > 0 {
                binom *= (0.5 - (i as f64 - 1.0)) / i as f64;
            }
            series.push(inv.powu(i as u32) * binom);
        }
        Ok(Self::nilpotent_series(&n, &series).scale(c.sqrt()))
    }

    pub fn apply(&self, f: Analytic) -> Result<MultiJet> {
        match f {
            Analytic::Exp => Ok(self.exp()),
            Analytic::Recip => self.recip(),
            Analytic::Sqrt => self.sqrt(),
        }
    }

    pub fn checked_div(&self, other: &MultiJet) -> Result<MultiJet> {
        self.checked_mul(&other.recip()?)
    }

    /// Largest coefficient magnitude of the imaginary parts.
    pub fn max_imag(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.im.abs()))
    }
}

pub(crate) fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

macro_rules! forward_binop {
    ($trait:ident, $method:ident, $checked:ident) => {
        impl $trait<&MultiJet> for &MultiJet {
            type Output = MultiJet;
            /// Panics on shape mismatch; use the `checked_*` form to recover.
            fn $method(self, rhs: &MultiJet) -> MultiJet {
                self.$checked(rhs).expect("jet shapes differ")
            }
        }
        impl $trait<MultiJet> for MultiJet {
            type Output = MultiJet;
            fn $method(self, rhs: MultiJet) -> MultiJet {
                (&self).$method(&rhs)
            }
        }
        impl $trait<&MultiJet> for MultiJet {
            type Output = MultiJet;
            fn $method(self, rhs: &MultiJet) -> MultiJet {
                (&self).$method(rhs)
            }
        }
        impl $trait<MultiJet> for &MultiJet {
            type Output = MultiJet;
            fn $method(self, rhs: MultiJet) -> MultiJet {
                self.$method(&rhs)
            }
        }
    };
}

forward_binop!(Add, add, checked_add);
forward_binop!(Sub, sub, checked_sub);
forward_binop!(Mul, mul, checked_mul);

impl Neg for MultiJet {
    type Output = MultiJet;
    fn neg(self) -> MultiJet {
        self.scale(-1.0)
    }
}

impl Neg for &MultiJet {
    type Output = MultiJet;
    fn neg(self) -> MultiJet {
        self.scale(-1.0)
    }
}
