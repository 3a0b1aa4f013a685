//! Arithmetic in GF(2)\[x\] with polynomials packed into a machine word.
//!
//! Bit `i` of the word is the coefficient of `x^i`. Degrees up to 63 are
//! representable, which covers every product of two residues modulo a
//! tabulated modulus (degree at most 32).

use std::fmt;
use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Largest modulus degree shipped in the built-in table.
pub const MAX_MODULUS_DEGREE: u32 = 32;

/// A polynomial over GF(2).
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Poly2(pub u64);

impl Poly2 {
    pub const ZERO: Poly2 = Poly2(0);
    pub const ONE: Poly2 = Poly2(1);
    pub const X: Poly2 = Poly2(2);

    /// Builds a polynomial from the exponents of its nonzero terms.
    pub fn from_exponents(exponents: &[u32]) -> Self {
        Poly2(exponents.iter().fold(0u64, |acc, &e| acc ^ (1u64 << e)))
    }

    pub fn mask(self) -> u64 {
        self.0
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    /// Degree, or `None` for the zero polynomial.
    pub fn degree(self) -> Option<u32> {
        if self.0 == 0 {
            None
        } else {
            Some(63 - self.0.leading_zeros())
        }
    }

    /// Degree with `-1` standing in for the zero polynomial.
    pub fn degree_or_neg(self) -> i32 {
        self.degree().map_or(-1, |d| d as i32)
    }

    pub fn weight(self) -> u32 {
        self.0.count_ones()
    }

    /// Carry-less product.
    ///
    /// The product must fit in 64 coefficients, i.e. `deg a + deg b <= 63`.
    pub fn mul(self, other: Poly2) -> Poly2 {
        debug_assert!(
            self.degree_or_neg() + other.degree_or_neg() <= 63,
            "product degree exceeds the word size"
        );
        let a = self.0;
        let mut b = other.0;
        let mut acc = 0u64;
        while b != 0 {
            acc ^= a << b.trailing_zeros();
            b &= b - 1;
        }
        Poly2(acc)
    }

    /// Remainder of division by a nonzero `divisor`.
    pub fn rem(self, divisor: Poly2) -> Poly2 {
        let d = divisor.degree().expect("division by the zero polynomial");
        let mut r = self.0;
        while r != 0 {
            let dr = 63 - r.leading_zeros();
            if dr < d {
                break;
            }
            r ^= divisor.0 << (dr - d);
        }
        Poly2(r)
    }

    pub fn gcd(self, other: Poly2) -> Poly2 {
        let (mut a, mut b) = (self, other);
        while !b.is_zero() {
            let r = a.rem(b);
            a = b;
            b = r;
        }
        a
    }
}

impl std::ops::Add for Poly2 {
    type Output = Poly2;
    fn add(self, rhs: Poly2) -> Poly2 {
        Poly2(self.0 ^ rhs.0)
    }
}

impl std::ops::Mul for Poly2 {
    type Output = Poly2;
    fn mul(self, rhs: Poly2) -> Poly2 {
        Poly2::mul(self, rhs)
    }
}

impl fmt::Debug for Poly2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Poly2({self})")
    }
}

impl fmt::Display for Poly2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0 == 0 {
            return write!(f, "0");
        }
        let mut first = true;
        for e in (0..64).rev() {
            if self.0 >> e & 1 == 1 {
                if !first {
                    write!(f, "+")?;
                }
                first = false;
                match e {
                    0 => write!(f, "1")?,
                    1 => write!(f, "x")?,
                    _ => write!(f, "x^{e}")?,
                }
            }
        }
        Ok(())
    }
}

/// `a * b mod p` for residues of degree below `deg p <= 32`.
#[inline]
pub fn mul_mod(a: Poly2, b: Poly2, p: Poly2) -> Poly2 {
    a.mul(b).rem(p)
}

fn pow_mod(base: Poly2, mut exp: u64, p: Poly2) -> Poly2 {
    let mut result = Poly2::ONE.rem(p);
    let mut b = base.rem(p);
    while exp > 0 {
        if exp & 1 == 1 {
            result = mul_mod(result, b, p);
        }
        b = mul_mod(b, b, p);
        exp >>= 1;
    }
    result
}

/// Ben-Or irreducibility test for polynomials of degree `1..=32`.
///
/// Degree-zero input (constants) is reported as not irreducible.
pub fn is_irreducible(p: Poly2) -> bool {
    let d = match p.degree() {
        None | Some(0) => return false,
        Some(d) => d,
    };
    assert!(d <= MAX_MODULUS_DEGREE, "irreducibility test supports degree <= 32");
    if d == 1 {
        return true;
    }
    // x^(2^i) mod p, iterated by squaring
    let mut power = Poly2::X.rem(p);
    for _ in 1..=d / 2 {
        power = mul_mod(power, power, p);
        let diff = power + Poly2::X;
        if p.gcd(diff).degree() != Some(0) {
            return false;
        }
    }
    true
}

/// An irreducible modulus `P` of degree `m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Modulus {
    poly: Poly2,
    m: u32,
}

impl Modulus {
    /// Validates irreducibility and wraps `poly`.
    pub fn new(poly: Poly2) -> Result<Self> {
        let m = match poly.degree() {
            Some(d) if (1..=MAX_MODULUS_DEGREE).contains(&d) => d,
            Some(d) => return Err(Error::UnsupportedDegree(d)),
            None => return Err(Error::Reducible(0)),
        };
        if !is_irreducible(poly) {
            return Err(Error::Reducible(poly.0));
        }
        Ok(Modulus { poly, m })
    }

    /// The shipped modulus of degree `m`: the lowest-weight irreducible
    /// polynomial with nonzero constant term, smallest mask among ties.
    pub fn for_degree(m: u32) -> Result<Self> {
        if !(1..=MAX_MODULUS_DEGREE).contains(&m) {
            return Err(Error::UnsupportedDegree(m));
        }
        Ok(modulus_table()[(m - 1) as usize])
    }

    pub fn poly(&self) -> Poly2 {
        self.poly
    }

    pub fn degree(&self) -> u32 {
        self.m
    }

    /// Number of residues `2^m`.
    pub fn order(&self) -> u64 {
        1u64 << self.m
    }

    /// The smallest (as a mask) generator of the multiplicative group of
    /// GF(2)\[x\]/(P).
    pub fn primitive_element(&self) -> Poly2 {
        let group = self.order() - 1;
        if group == 1 {
            return Poly2::ONE;
        }
        let factors = prime_factors(group);
        (2..self.order())
            .map(Poly2)
            .find(|&g| {
                factors
                    .iter()
                    .all(|&q| pow_mod(g, group / q, self.poly) != Poly2::ONE)
            })
            .expect("the multiplicative group of a finite field is cyclic")
    }
}

fn prime_factors(mut n: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut q = 2u64;
    while q * q <= n {
        if n % q == 0 {
            out.push(q);
            while n % q == 0 {
                n /= q;
            }
        }
        q += 1;
    }
    if n > 1 {
        out.push(n);
    }
    out
}

fn modulus_table() -> &'static [Modulus] {
    static TABLE: OnceLock<Vec<Modulus>> = OnceLock::new();
    TABLE.get_or_init(|| {
        (1..=MAX_MODULUS_DEGREE)
            .map(|m| {
                let poly = search_modulus(m);
                Modulus::new(poly).expect("search only returns irreducible polynomials")
            })
            .collect()
    })
}

/// Enumerates polynomials `x^m + (middle) + 1` by increasing weight and,
/// within a weight, by increasing mask.
fn search_modulus(m: u32) -> Poly2 {
    if m == 1 {
        return Poly2(0b11);
    }
    let middle_bits = m - 1;
    for middle_weight in 1..=middle_bits {
        // Gosper's hack walks all masks of a given popcount in ascending order.
        let mut middle: u64 = (1u64 << middle_weight) - 1;
        let limit = 1u64 << middle_bits;
        while middle < limit {
            let candidate = Poly2((1u64 << m) | (middle << 1) | 1);
            if is_irreducible(candidate) {
                return candidate;
            }
            let c = middle & middle.wrapping_neg();
            let r = middle + c;
            middle = (((r ^ middle) >> 2) / c) | r;
        }
    }
    unreachable!("an irreducible polynomial exists in every degree")
}

/// The first `count` coefficients `t_1, t_2, ...` of the expansion of
/// `numerator / P` in powers of `x^{-1}`.
pub fn laurent_digits(numerator: Poly2, modulus: &Modulus, count: usize) -> Result<Vec<u8>> {
    check_numerator(numerator, modulus)?;
    let m = modulus.degree();
    let p = modulus.poly().0;
    let mut r = numerator.0;
    let mut digits = Vec::with_capacity(count);
    for _ in 0..count {
        r <<= 1;
        if r >> m & 1 == 1 {
            digits.push(1);
            r ^= p;
        } else {
            digits.push(0);
        }
    }
    Ok(digits)
}

/// The first `count <= 64` Laurent digits packed into an integer, `t_1` in
/// the most significant of the `count` bits. With `count = m` this is
/// `2^m * v_m(numerator / P)`.
pub fn laurent_bits(numerator: Poly2, modulus: &Modulus, count: u32) -> Result<u64> {
    check_numerator(numerator, modulus)?;
    assert!(count <= 64);
    let m = modulus.degree();
    let p = modulus.poly().0;
    let mut r = numerator.0;
    let mut bits = 0u64;
    for _ in 0..count {
        r <<= 1;
        bits <<= 1;
        if r >> m & 1 == 1 {
            bits |= 1;
            r ^= p;
        }
    }
    Ok(bits)
}

fn check_numerator(numerator: Poly2, modulus: &Modulus) -> Result<()> {
    if numerator.degree_or_neg() >= modulus.degree() as i32 {
        return Err(Error::NumeratorDegree {
            numerator: numerator.degree_or_neg(),
            modulus: modulus.degree(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schoolbook(a: u64, b: u64) -> u64 {
        let mut acc = 0u64;
        for i in 0..32 {
            for j in 0..32 {
                let ai = a >> i & 1;
                let bj = b >> j & 1;
                acc ^= (ai & bj) << (i + j);
            }
        }
        acc
    }

    fn trial_division_irreducible(p: u64) -> bool {
        let d = Poly2(p).degree().unwrap();
        (2u64..(1 << (d / 2 + 1)))
            .filter(|&q| Poly2(q).degree().unwrap() <= d / 2)
            .all(|q| !Poly2(p).rem(Poly2(q)).is_zero())
    }

    #[test]
    fn small_products() {
        let xp1 = Poly2(0b11);
        assert_eq!(xp1 * xp1, Poly2(0b101));
        assert_eq!(Poly2(0b10110) * Poly2::ZERO, Poly2::ZERO);
        assert_eq!(Poly2(0b111) * Poly2(0b11), Poly2(0b1001));
        assert_eq!(Poly2(0b111) * Poly2(0b11), Poly2(schoolbook(0b111, 0b11)));
    }

    #[test]
    fn product_degree_adds() {
        for a in 1u64..64 {
            for b in 1u64..64 {
                let p = Poly2(a) * Poly2(b);
                assert_eq!(
                    p.degree().unwrap(),
                    Poly2(a).degree().unwrap() + Poly2(b).degree().unwrap()
                );
            }
        }
    }

    #[test]
    fn commutative_and_distributive_up_to_degree_8() {
        for a in 0u64..512 {
            for b in (0u64..512).step_by(7) {
                let ab = Poly2(a) * Poly2(b);
                assert_eq!(ab, Poly2(b) * Poly2(a));
                assert_eq!(ab.0, schoolbook(a, b));
                let c = Poly2((a * 31 + 5) & 511);
                assert_eq!(Poly2(a) * (Poly2(b) + c), ab + Poly2(a) * c);
            }
        }
    }

    #[test]
    fn irreducibility_examples() {
        assert!(is_irreducible(Poly2(0b111)));
        assert!(!is_irreducible(Poly2(0b101)));
        assert!(is_irreducible(Poly2(0b10011)));
        assert!(trial_division_irreducible(0b10011));
    }

    #[test]
    fn irreducibility_matches_trial_division_to_degree_10() {
        for p in 2u64..(1 << 11) {
            assert_eq!(is_irreducible(Poly2(p)), trial_division_irreducible(p), "p = {p:#b}");
        }
    }

    #[test]
    fn modulus_table_is_valid() {
        for m in 1..=MAX_MODULUS_DEGREE {
            let modulus = Modulus::for_degree(m).unwrap();
            assert_eq!(modulus.degree(), m);
            assert!(is_irreducible(modulus.poly()));
            assert_eq!(modulus.poly().0 & 1, 1);
        }
        assert_eq!(Modulus::for_degree(1).unwrap().poly(), Poly2(0b11));
        assert_eq!(Modulus::for_degree(2).unwrap().poly(), Poly2(0b111));
        assert_eq!(Modulus::for_degree(4).unwrap().poly(), Poly2(0b10011));
        // no irreducible trinomial of degree 8
        assert_eq!(Modulus::for_degree(8).unwrap().poly().weight(), 5);
        assert!(Modulus::for_degree(0).is_err());
        assert!(Modulus::for_degree(33).is_err());
    }

    #[test]
    fn modulus_rejects_reducible() {
        assert!(matches!(Modulus::new(Poly2(0b101)), Err(Error::Reducible(5))));
    }

    #[test]
    fn laurent_long_division() {
        // 1/(x^2+x+1) = x^-2 + x^-3 + x^-5 + x^-6 + ...
        let p = Modulus::new(Poly2(0b111)).unwrap();
        assert_eq!(laurent_digits(Poly2::ONE, &p, 6).unwrap(), vec![0, 1, 1, 0, 1, 1]);
        assert_eq!(laurent_digits(Poly2::ZERO, &p, 5).unwrap(), vec![0; 5]);
        assert_eq!(laurent_digits(Poly2(0b111).rem(Poly2(0b111)), &p, 3).unwrap(), vec![0; 3]);
        let q = Modulus::new(Poly2(0b11)).unwrap();
        assert_eq!(laurent_digits(Poly2::ONE, &q, 4).unwrap(), vec![1, 1, 1, 1]);
        assert!(laurent_digits(Poly2(0b100), &p, 4).is_err());
    }

    #[test]
    fn laurent_bits_pack_digits() {
        let p = Modulus::for_degree(5).unwrap();
        for a in 0..32 {
            let digits = laurent_digits(Poly2(a), &p, 12).unwrap();
            let packed = digits.iter().fold(0u64, |acc, &d| acc << 1 | d as u64);
            assert_eq!(laurent_bits(Poly2(a), &p, 12).unwrap(), packed);
        }
    }

    #[test]
    fn laurent_division_identity() {
        // P * sum t_l x^{-l} reproduces the numerator in the nonnegative powers
        let p = Modulus::for_degree(6).unwrap();
        let count = 40;
        for a in 0..64u64 {
            let digits = laurent_digits(Poly2(a), &p, count).unwrap();
            // series as integer S = sum t_l x^{count-l}; P*S = a*x^count + tail with degree < m + ...
            let series = digits.iter().fold(0u64, |acc, &d| acc << 1 | d as u64);
            let product = {
                let mut acc = 0u128;
                for i in 0..64 {
                    if series >> i & 1 == 1 {
                        acc ^= (p.poly().0 as u128) << i;
                    }
                }
                acc
            };
            assert_eq!((product >> count) as u64, a, "numerator {a}");
            assert!(product & ((1u128 << count) - 1) < (1u128 << p.degree()));
        }
    }

    #[test]
    fn primitive_element_generates_group() {
        for m in 1..=10 {
            let p = Modulus::for_degree(m).unwrap();
            let g = p.primitive_element();
            let mut seen = std::collections::HashSet::new();
            let mut e = Poly2::ONE;
            for _ in 0..p.order() - 1 {
                assert!(seen.insert(e.0));
                e = mul_mod(e, g, p.poly());
            }
            assert_eq!(e, Poly2::ONE);
        }
    }

    #[test]
    fn display() {
        assert_eq!(Poly2(0b1011).to_string(), "x^3+x+1");
        assert_eq!(Poly2::ZERO.to_string(), "0");
    }
}
