//! Finite-field arithmetic for GF(p) with `p < 2^32` and GF(2^m) with
//! `2 <= m <= 64`, plus dense polynomials over either.
//!
//! Elements are canonical integers in `[0, q)`. For binary fields bit `i` of
//! the representative is the coefficient of `x^i`.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Low 64 coefficients of `x^64 + x^4 + x^3 + x + 1`, the reduction
/// polynomial of [`Field::gf2_64`].
pub const GF2_64_REDUCTION: u64 = 0x1b;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FieldElement(u64);

impl FieldElement {
    pub const ZERO: FieldElement = FieldElement(0);
    pub const ONE: FieldElement = FieldElement(1);

    /// Wraps a representative without range checking.
    #[inline]
    pub(crate) const fn from_raw(value: u64) -> Self {
        FieldElement(value)
    }

    #[inline]
    pub fn value(self) -> u64 {
        self.0
    }

    #[inline]
    pub fn is_zero(self) -> bool {
        self.0 == 0
    }
}

impl fmt::Display for FieldElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FieldKind {
    Prime { modulus: u64 },
    /// GF(2^degree) modulo `x^degree + reduction`.
    Binary { degree: u32, reduction: u64 },
}

/// A validated finite field. Cheap to copy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Field {
    kind: FieldKind,
}

impl Field {
    /// GF(p). `p` must be prime and below `2^32`.
    pub fn prime(p: u64) -> Result<Self> {
        if p > u64::from(u32::MAX) {
            return Err(Error::parameter(format!("prime modulus {p} exceeds 2^32")));
        }
        if !is_prime(p) {
            return Err(Error::parameter(format!("modulus {p} is not prime")));
        }
        Ok(Field { kind: FieldKind::Prime { modulus: p } })
    }

    /// GF(2^degree) with reduction polynomial `x^degree + reduction`.
    pub fn binary(degree: u32, reduction: u64) -> Result<Self> {
        if !(2..=64).contains(&degree) {
            return Err(Error::parameter(format!("binary field degree {degree} outside 2..=64")));
        }
        if degree < 64 && reduction >> degree != 0 {
            return Err(Error::parameter(format!(
                "reduction term {reduction:#x} has degree >= {degree}"
            )));
        }
        if !is_irreducible_gf2(degree, reduction) {
            return Err(Error::parameter(format!(
                "x^{degree} + {reduction:#x} is not irreducible over GF(2)"
            )));
        }
        Ok(Field { kind: FieldKind::Binary { degree, reduction } })
    }

    /// GF(2^64) modulo `x^64 + x^4 + x^3 + x + 1`.
    pub fn gf2_64() -> Self {
        Field {
            kind: FieldKind::Binary { degree: 64, reduction: GF2_64_REDUCTION },
        }
    }

    /// The field of order `q`: a prime field when `q` is prime, GF(2^m) when `q = 2^m`.
    ///
    /// Binary fields other than GF(2^64) use the numerically smallest irreducible
    /// reduction polynomial of their degree.
    pub fn with_order(q: u128) -> Result<Self> {
        if q < 2 {
            return Err(Error::parameter(format!("field order {q} < 2")));
        }
        if q == 1u128 << 64 {
            return Ok(Self::gf2_64());
        }
        if q.is_power_of_two() && q > 2 {
            let degree = q.trailing_zeros();
            let reduction = (1..u64::MAX)
                .step_by(2)
                .find(|&r| is_irreducible_gf2(degree, r))
                .expect("an irreducible polynomial exists in every degree");
            return Self::binary(degree, reduction);
        }
        match u64::try_from(q) {
            Ok(p) if is_prime(p) && p <= u64::from(u32::MAX) => Self::prime(p),
            _ => Err(Error::parameter(format!(
                "unsupported field order {q}: expected a prime below 2^32 or a power of two up to 2^64"
            ))),
        }
    }

    pub fn kind(&self) -> FieldKind {
        self.kind
    }

    /// Number of elements `q`.
    pub fn order(&self) -> u128 {
        match self.kind {
            FieldKind::Prime { modulus } => u128::from(modulus),
            FieldKind::Binary { degree, .. } => 1u128 << degree,
        }
    }

    pub fn log2_order(&self) -> f64 {
        match self.kind {
            FieldKind::Prime { modulus } => (modulus as f64).log2(),
            FieldKind::Binary { degree, .. } => f64::from(degree),
        }
    }

    /// Largest canonical representative, `q - 1`.
    #[inline]
    pub fn max_value(&self) -> u64 {
        match self.kind {
            FieldKind::Prime { modulus } => modulus - 1,
            FieldKind::Binary { degree: 64, .. } => u64::MAX,
            FieldKind::Binary { degree, .. } => (1u64 << degree) - 1,
        }
    }

    /// Checked conversion from a canonical representative.
    pub fn element(&self, value: u64) -> Result<FieldElement> {
        if value > self.max_value() {
            return Err(Error::Domain(format!(
                "{value} is not a canonical element of a field of order {}",
                self.order()
            )));
        }
        Ok(FieldElement(value))
    }

    #[inline]
    pub fn add(&self, a: FieldElement, b: FieldElement) -> FieldElement {
        match self.kind {
            FieldKind::Prime { modulus } => {
                let s = a.0 + b.0;
                FieldElement(if s >= modulus { s - modulus } else { s })
            }
            FieldKind::Binary { .. } => FieldElement(a.0 ^ b.0),
        }
    }

    #[inline]
    pub fn neg(&self, a: FieldElement) -> FieldElement {
        match self.kind {
            FieldKind::Prime { modulus } => FieldElement(if a.0 == 0 { 0 } else { modulus - a.0 }),
            FieldKind::Binary { .. } => a,
        }
    }

    #[inline]
    pub fn sub(&self, a: FieldElement, b: FieldElement) -> FieldElement {
        self.add(a, self.neg(b))
    }

    #[inline]
    pub fn mul(&self, a: FieldElement, b: FieldElement) -> FieldElement {
        match self.kind {
            FieldKind::Prime { modulus } => FieldElement(a.0 * b.0 % modulus),
            FieldKind::Binary { degree, reduction } => {
                FieldElement(reduce_gf2(clmul(a.0, b.0), degree, reduction) as u64)
            }
        }
    }

    pub fn pow(&self, base: FieldElement, mut exp: u128) -> FieldElement {
        let mut acc = FieldElement::ONE;
        let mut sq = base;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = self.mul(acc, sq);
            }
            sq = self.mul(sq, sq);
            exp >>= 1;
        }
        acc
    }

    /// Multiplicative inverse via `a^(q-2)`.
    pub fn inv(&self, a: FieldElement) -> Result<FieldElement> {
        if a.is_zero() {
            return Err(Error::Domain("inversion of zero".into()));
        }
        Ok(self.pow(a, self.order() - 2))
    }

    pub fn div(&self, a: FieldElement, b: FieldElement) -> Result<FieldElement> {
        Ok(self.mul(a, self.inv(b)?))
    }

    pub fn random_element<R: Rng + ?Sized>(&self, rng: &mut R) -> FieldElement {
        match self.kind {
            FieldKind::Binary { degree: 64, .. } => FieldElement(rng.gen()),
            _ => FieldElement(rng.gen_range(0..=self.max_value())),
        }
    }

    /// Uniform element among the `q - 1` values different from `avoid`.
    pub fn random_other_element<R: Rng + ?Sized>(&self, avoid: FieldElement, rng: &mut R) -> FieldElement {
        let v = rng.gen_range(0..self.max_value());
        FieldElement(if v >= avoid.0 { v + 1 } else { v })
    }

    /// Uniform polynomial with exactly `k` coefficients (formal degree `< k`).
    pub fn random_poly<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Polynomial {
        Polynomial::new((0..k).map(|_| self.random_element(rng)).collect())
    }

    /// All elements in increasing order. Only sensible for small fields.
    pub fn elements(&self) -> impl Iterator<Item = FieldElement> {
        (0..=self.max_value()).map(FieldElement)
    }

    /// Width of the fixed-width little-endian encoding of an element.
    pub fn byte_width(&self) -> usize {
        let bits = 64 - self.max_value().leading_zeros() as usize;
        bits.div_ceil(8).max(1)
    }

    pub fn to_le_bytes(&self, a: FieldElement) -> Vec<u8> {
        a.0.to_le_bytes()[..self.byte_width()].to_vec()
    }

    pub fn from_le_bytes(&self, bytes: &[u8]) -> Result<FieldElement> {
        if bytes.len() != self.byte_width() {
            return Err(Error::Domain(format!(
                "expected {} bytes, got {}",
                self.byte_width(),
                bytes.len()
            )));
        }
        let mut buf = [0u8; 8];
        buf[..bytes.len()].copy_from_slice(bytes);
        self.element(u64::from_le_bytes(buf))
    }
}

/// A polynomial with a fixed number of coefficients `x_0, ..., x_{k-1}`.
/// High zero coefficients are kept, so the length is the message dimension `k`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Polynomial {
    coeffs: Vec<FieldElement>,
}

impl Polynomial {
    pub fn new(coeffs: Vec<FieldElement>) -> Self {
        Polynomial { coeffs }
    }

    pub fn zero(k: usize) -> Self {
        Polynomial { coeffs: vec![FieldElement::ZERO; k] }
    }

    pub fn constant(c: FieldElement, k: usize) -> Self {
        let mut p = Self::zero(k.max(1));
        p.coeffs[0] = c;
        p
    }

    /// Monic `prod (X - r)` padded to `k` coefficients. Needs `roots.len() < k`.
    pub fn from_roots(field: &Field, roots: &[FieldElement], k: usize) -> Result<Self> {
        if roots.len() >= k {
            return Err(Error::parameter(format!(
                "{} roots do not fit in a polynomial of dimension {k}",
                roots.len()
            )));
        }
        let mut coeffs = vec![FieldElement::ZERO; k];
        coeffs[0] = FieldElement::ONE;
        for (deg, &r) in roots.iter().enumerate() {
            let neg_r = field.neg(r);
            // multiply by (X - r); current degree is `deg`
            for i in (0..=deg + 1).rev() {
                let shifted = if i > 0 { coeffs[i - 1] } else { FieldElement::ZERO };
                coeffs[i] = field.add(shifted, field.mul(coeffs[i], neg_r));
            }
        }
        Ok(Polynomial { coeffs })
    }

    pub fn coeffs(&self) -> &[FieldElement] {
        &self.coeffs
    }

    /// Number of coefficients `k`.
    pub fn dimension(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_zero())
    }

    /// Horner evaluation of `sum x_j alpha^j`.
    pub fn eval(&self, field: &Field, alpha: FieldElement) -> FieldElement {
        self.coeffs
            .iter()
            .rev()
            .fold(FieldElement::ZERO, |acc, &c| field.add(field.mul(acc, alpha), c))
    }

    pub fn add(&self, field: &Field, other: &Polynomial) -> Polynomial {
        let len = self.coeffs.len().max(other.coeffs.len());
        let get = |p: &Polynomial, i: usize| p.coeffs.get(i).copied().unwrap_or_default();
        Polynomial {
            coeffs: (0..len).map(|i| field.add(get(self, i), get(other, i))).collect(),
        }
    }
}

/// Evaluates at `x` the unique polynomial of degree `< xs.len()` through the
/// points `(xs[i], ys[i])`. The `xs` must be pairwise distinct.
pub fn lagrange_eval(field: &Field, xs: &[FieldElement], ys: &[FieldElement], x: FieldElement) -> Result<FieldElement> {
    debug_assert_eq!(xs.len(), ys.len());
    let mut acc = FieldElement::ZERO;
    for (i, (&xi, &yi)) in xs.iter().zip(ys).enumerate() {
        let mut num = FieldElement::ONE;
        let mut den = FieldElement::ONE;
        for (j, &xj) in xs.iter().enumerate() {
            if i != j {
                num = field.mul(num, field.sub(x, xj));
                den = field.mul(den, field.sub(xi, xj));
            }
        }
        acc = field.add(acc, field.mul(yi, field.div(num, den)?));
    }
    Ok(acc)
}

/// Carry-less 64x64 -> 128 bit product.
#[inline]
pub fn clmul(a: u64, b: u64) -> u128 {
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("pclmulqdq") && std::arch::is_x86_feature_detected!("sse2") {
            // SAFETY: the required CPU features were detected at runtime.
            return unsafe { clmul_pclmulqdq(a, b) };
        }
    }
    clmul_portable(a, b)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "pclmulqdq,sse2")]
unsafe fn clmul_pclmulqdq(a: u64, b: u64) -> u128 {
    use std::arch::x86_64::{_mm_clmulepi64_si128, _mm_cvtsi64_si128, _mm_extract_epi64, _mm_srli_si128};
    let x = _mm_cvtsi64_si128(a as i64);
    let y = _mm_cvtsi64_si128(b as i64);
    let p = _mm_clmulepi64_si128(x, y, 0);
    let lo = _mm_extract_epi64(p, 0) as u64;
    let hi = _mm_extract_epi64(_mm_srli_si128(p, 8), 0) as u64;
    (u128::from(hi) << 64) | u128::from(lo)
}

/// Shift-and-xor carry-less product, 4 bits of `b` at a time.
pub fn clmul_portable(a: u64, b: u64) -> u128 {
    let a = u128::from(a);
    let mut table = [0u128; 16];
    for i in 1..16 {
        table[i] = if i & 1 == 1 { table[i - 1] ^ a } else { table[i >> 1] << 1 };
    }
    let mut acc = 0u128;
    for nibble in (0..16).rev() {
        acc = (acc << 4) ^ table[((b >> (nibble * 4)) & 0xf) as usize];
    }
    acc
}

/// Reduces `value` modulo `x^degree + reduction`.
#[inline]
fn reduce_gf2(mut value: u128, degree: u32, reduction: u64) -> u128 {
    let mask = if degree == 64 { u128::from(u64::MAX) } else { (1u128 << degree) - 1 };
    // each fold lowers the degree by at least degree - deg(reduction) >= 1
    while value >> degree != 0 {
        let high = value >> degree;
        let low = value & mask;
        let folded = if high >> 64 == 0 {
            clmul(high as u64, reduction)
        } else {
            clmul(high as u64, reduction) ^ (clmul((high >> 64) as u64, reduction) << 64)
        };
        value = low ^ folded;
    }
    value
}

fn gf2_degree(p: u128) -> i32 {
    127 - p.leading_zeros() as i32
}

fn gf2_rem(mut a: u128, b: u128) -> u128 {
    let db = gf2_degree(b);
    while a != 0 && gf2_degree(a) >= db {
        a ^= b << (gf2_degree(a) - db);
    }
    a
}

fn gf2_gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        let r = gf2_rem(a, b);
        a = b;
        b = r;
    }
    a
}

/// Rabin's irreducibility test for `x^degree + reduction` over GF(2).
pub fn is_irreducible_gf2(degree: u32, reduction: u64) -> bool {
    if !(2..=64).contains(&degree) || reduction & 1 == 0 {
        return false;
    }
    if degree < 64 && reduction >> degree != 0 {
        return false;
    }
    let modulus = (1u128 << degree) | u128::from(reduction);
    // x^(2^i) mod f by repeated squaring
    let frobenius = |times: u32| {
        let mut x = 2u128;
        for _ in 0..times {
            x = reduce_gf2(clmul(x as u64, x as u64), degree, reduction);
        }
        x
    };
    if frobenius(degree) != 2 {
        return false;
    }
    prime_factors(u64::from(degree)).into_iter().all(|d| {
        let h = frobenius(degree / d as u32) ^ 2;
        gf2_gcd(modulus, h) == 1
    })
}

fn prime_factors(mut n: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut d = 2;
    while d * d <= n {
        if n % d == 0 {
            out.push(d);
            while n % d == 0 {
                n /= d;
            }
        }
        d += 1;
    }
    if n > 1 {
        out.push(n);
    }
    out
}

fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2u64;
    while d * d <= n {
        if n % d == 0 {
            return false;
        }
        d += 1;
    }
    true
}
