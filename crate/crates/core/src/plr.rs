//! Polynomial lattice rules and digit interlacing.
//!
//! A classical rule with modulus `P` of degree `m` and generating vector
//! `(g_1, ..., g_d)` has the `N = 2^m` points
//! `y_n = (v_m(n(x) g_j(x) / P(x)))_j`, where `n(x)` carries the binary
//! digits of `n` and `v_m` keeps the first `m` digits of the expansion in
//! `x^{-1}`. The map `n -> y_n` is GF(2)-linear, so each coordinate is
//! produced from `m` generator columns by XOR.
//!
//! An interlaced rule of order `alpha` in `s` dimensions takes a classical
//! rule in `alpha * s` dimensions and merges each consecutive block of
//! `alpha` coordinates digit by digit: digit `a` of block member `j` lands at
//! position `j + (a - 1) * alpha`.
//!
//! All points are stored as integers; coordinate value = integer / 2^precision.

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gf2poly::{laurent_bits, mul_mod, Modulus, Poly2};
use crate::sum::CompensatedSum;

/// A generating vector for an interlaced polynomial lattice rule.
///
/// Components are stored block by block: component `j * alpha + i` is the
/// `i`-th interlacing partner of output coordinate `j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratingVector {
    modulus: Modulus,
    alpha: u32,
    s: usize,
    components: Vec<Poly2>,
}

impl GeneratingVector {
    pub fn new(modulus: Modulus, alpha: u32, s: usize, components: Vec<Poly2>) -> Result<Self> {
        if alpha == 0 || s == 0 {
            return Err(Error::MalformedVector(format!(
                "alpha and s must be positive (alpha = {alpha}, s = {s})"
            )));
        }
        if components.len() != alpha as usize * s {
            return Err(Error::DimensionMismatch {
                expected: alpha as usize * s,
                got: components.len(),
            });
        }
        if let Some(bad) = components
            .iter()
            .find(|g| g.degree_or_neg() >= modulus.degree() as i32)
        {
            return Err(Error::MalformedVector(format!(
                "component {bad} has degree >= m = {}",
                modulus.degree()
            )));
        }
        Ok(GeneratingVector { modulus, alpha, s, components })
    }

    pub fn modulus(&self) -> &Modulus {
        &self.modulus
    }

    pub fn m(&self) -> u32 {
        self.modulus.degree()
    }

    pub fn alpha(&self) -> u32 {
        self.alpha
    }

    pub fn dimension(&self) -> usize {
        self.s
    }

    pub fn components(&self) -> &[Poly2] {
        &self.components
    }

    pub fn n_points(&self) -> usize {
        1usize << self.m()
    }

    /// The first `s` output coordinates of this rule.
    pub fn truncated(&self, s: usize) -> Result<Self> {
        if s > self.s {
            return Err(Error::DimensionMismatch { expected: self.s, got: s });
        }
        let keep = s * self.alpha as usize;
        GeneratingVector::new(self.modulus, self.alpha, s, self.components[..keep].to_vec())
    }

    /// Serializes to the line-oriented text format:
    /// `b m alpha s` followed by one hexadecimal mask per component.
    /// Lines starting with `#` are comments.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# modulus {:#x}", self.modulus.poly().mask());
        let _ = writeln!(out, "2 {} {} {}", self.m(), self.alpha, self.s);
        for g in &self.components {
            let _ = writeln!(out, "{:x}", g.mask());
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let parse_err = |message: String| Error::Parse {
            context: "generating vector".into(),
            message,
        };
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header = lines.next().ok_or_else(|| parse_err("empty file".into()))?;
        let fields: Vec<u64> = header
            .split_whitespace()
            .map(|t| t.parse::<u64>().map_err(|e| parse_err(format!("header field {t:?}: {e}"))))
            .collect::<Result<_>>()?;
        let [b, m, alpha, s] = fields[..] else {
            return Err(parse_err(format!("header must have 4 fields, found {}", fields.len())));
        };
        if b != 2 {
            return Err(parse_err(format!("only base 2 is supported, found {b}")));
        }
        let modulus = Modulus::for_degree(m as u32)?;
        let components = lines
            .map(|l| {
                let digits = l.trim_start_matches("0x");
                u64::from_str_radix(digits, 16)
                    .map(Poly2)
                    .map_err(|e| parse_err(format!("component {l:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        GeneratingVector::new(modulus, alpha as u32, s as usize, components)
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_text().as_bytes())?;
        Ok(())
    }

    pub fn read_file(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let mut text = String::new();
        for line in std::io::BufReader::new(file).lines() {
            text.push_str(&line?);
            text.push('\n');
        }
        Self::from_text(&text)
    }
}

/// `N` points in `[0,1)^s`, each coordinate an integer numerator over
/// `2^precision_bits`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PointSet {
    n_points: usize,
    s: usize,
    precision_bits: u32,
    data: Vec<u64>,
}

impl PointSet {
    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn dimension(&self) -> usize {
        self.s
    }

    pub fn precision_bits(&self) -> u32 {
        self.precision_bits
    }

    /// Integer coordinates of point `n`.
    pub fn raw(&self, n: usize) -> &[u64] {
        &self.data[n * self.s..(n + 1) * self.s]
    }

    /// Point `n` as floating point values in `[0,1)`.
    pub fn point(&self, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.s];
        self.point_into(n, &mut out);
        out
    }

    pub fn point_into(&self, n: usize, out: &mut [f64]) {
        let scale = (-(self.precision_bits as f64)).exp2();
        for (o, &v) in out.iter_mut().zip(self.raw(n)) {
            *o = v as f64 * scale;
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for n in 0..self.n_points {
            let row: Vec<String> = self.point(n).iter().map(|v| v.to_string()).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Generator columns for one coordinate: column `r` is `2^m v_m(x^r g / P)`.
fn generator_columns(modulus: &Modulus, g: Poly2) -> Vec<u64> {
    let m = modulus.degree();
    let mut columns = Vec::with_capacity(m as usize);
    let mut shifted = g;
    for _ in 0..m {
        columns.push(laurent_bits(shifted, modulus, m).expect("residue has degree < m"));
        shifted = mul_mod(shifted, Poly2::X, modulus.poly());
    }
    columns
}

/// Classical polynomial lattice rule with `2^m` points in `d = g.len()`
/// dimensions, precision `m` bits.
pub fn classical_points(modulus: &Modulus, g: &[Poly2], m: u32, d: usize) -> Result<PointSet> {
    if g.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: g.len() });
    }
    if modulus.degree() != m {
        return Err(Error::MalformedVector(format!(
            "modulus degree {} differs from m = {m}",
            modulus.degree()
        )));
    }
    if let Some(bad) = g.iter().find(|c| c.degree_or_neg() >= m as i32) {
        return Err(Error::MalformedVector(format!("component {bad} has degree >= m = {m}")));
    }
    let n_points = 1usize << m;
    let columns: Vec<Vec<u64>> = g.iter().map(|&gj| generator_columns(modulus, gj)).collect();
    let mut data = vec![0u64; n_points * d];
    // Gray-code walk: consecutive codes differ in one bit, so each point is
    // one XOR away from the previous one.
    let mut current = vec![0u64; d];
    for k in 1..n_points {
        let bit = k.trailing_zeros() as usize;
        let gray = k ^ (k >> 1);
        for (j, col) in columns.iter().enumerate() {
            current[j] ^= col[bit];
        }
        data[gray * d..(gray + 1) * d].copy_from_slice(&current);
    }
    Ok(PointSet { n_points, s: d, precision_bits: m, data })
}

/// Interlaces the `m`-bit integers in `x` (one per block member) into a
/// single `alpha * m`-bit integer.
pub fn interlace_scalar(x: &[u64], m: u32) -> u64 {
    let alpha = x.len() as u32;
    let total = alpha * m;
    assert!(total <= 64, "interlaced precision exceeds 64 bits");
    let mut out = 0u64;
    for a in 1..=m {
        for (j, &xj) in x.iter().enumerate() {
            let digit = xj >> (m - a) & 1;
            let position = j as u32 + 1 + (a - 1) * alpha;
            out |= digit << (total - position);
        }
    }
    out
}

/// The interlaced rule `D_alpha(S_{P,2,m,alpha s}(g))` in `s` dimensions.
pub fn interlaced_points(gv: &GeneratingVector) -> Result<PointSet> {
    let alpha = gv.alpha() as usize;
    let m = gv.m();
    let classical = classical_points(gv.modulus(), gv.components(), m, alpha * gv.dimension())?;
    if alpha == 1 {
        return Ok(classical);
    }
    let s = gv.dimension();
    let mut data = vec![0u64; classical.n_points * s];
    for n in 0..classical.n_points {
        let row = classical.raw(n);
        for j in 0..s {
            data[n * s + j] = interlace_scalar(&row[j * alpha..(j + 1) * alpha], m);
        }
    }
    Ok(PointSet {
        n_points: classical.n_points,
        s,
        precision_bits: alpha as u32 * m,
        data,
    })
}

/// Equal-weight quadrature `(1/N) sum_n f(y_n)` of a vector-valued integrand
/// with `outputs` components.
///
/// Evaluations may run in parallel; the reduction is a compensated sum in
/// ascending `n`, so the result does not depend on the thread count.
pub fn qmc_average<F>(points: &PointSet, outputs: usize, f: F) -> Vec<f64>
where
    F: Fn(&[f64]) -> Vec<f64> + Sync,
{
    let values: Vec<Vec<f64>> = (0..points.n_points())
        .into_par_iter()
        .map(|n| f(&points.point(n)))
        .collect();
    let mut sums = vec![CompensatedSum::new(); outputs];
    for v in &values {
        debug_assert_eq!(v.len(), outputs);
        for (acc, &x) in sums.iter_mut().zip(v) {
            acc.add(x);
        }
    }
    let n = points.n_points() as f64;
    sums.iter().map(|acc| acc.value() / n).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gf2poly::laurent_digits;

    fn modulus(mask: u64) -> Modulus {
        Modulus::new(Poly2(mask)).unwrap()
    }

    /// Direct evaluation of v_m(n(x) g(x) / P(x)) by long division.
    fn direct_point(p: &Modulus, g: Poly2, n: u64) -> f64 {
        let numerator = mul_mod(Poly2(n), g, p.poly());
        laurent_digits(numerator, p, p.degree() as usize)
            .unwrap()
            .iter()
            .enumerate()
            .map(|(l, &t)| t as f64 * (-(l as f64 + 1.0)).exp2())
            .sum()
    }

    #[test]
    fn one_point_rule() {
        let p = modulus(0b11);
        let ps = classical_points(&p, &[Poly2::ONE], 1, 1).unwrap();
        assert_eq!(ps.point(0), vec![0.0]);
        assert_eq!(ps.point(1), vec![0.5]);
    }

    #[test]
    fn four_point_rule_is_a_permutation() {
        let p = modulus(0b111);
        let ps = classical_points(&p, &[Poly2::ONE], 2, 1).unwrap();
        let mut values: Vec<f64> = (0..4).map(|n| ps.point(n)[0]).collect();
        for n in 0..4u64 {
            assert_eq!(values[n as usize], direct_point(&p, Poly2::ONE, n));
        }
        values.sort_by(f64::total_cmp);
        assert_eq!(values, vec![0.0, 0.25, 0.5, 0.75]);
    }

    #[test]
    fn generator_matrix_matches_direct_division() {
        let p = Modulus::for_degree(7).unwrap();
        let g = [Poly2(1), Poly2(0b1011011), Poly2(0b100101)];
        let ps = classical_points(&p, &g, 7, 3).unwrap();
        for n in 0..128 {
            for (j, &gj) in g.iter().enumerate() {
                assert_eq!(ps.point(n)[j], direct_point(&p, gj, n as u64));
            }
        }
    }

    #[test]
    fn rejects_bad_shapes() {
        let p = Modulus::for_degree(3).unwrap();
        assert!(classical_points(&p, &[Poly2::ONE], 3, 2).is_err());
        assert!(classical_points(&p, &[Poly2(0b1000)], 3, 1).is_err());
        assert!(classical_points(&p, &[Poly2::ONE], 4, 1).is_err());
    }

    #[test]
    fn interlacing_digit_placement() {
        // m = 1: inputs are single digits
        assert_eq!(interlace_scalar(&[0, 0], 1), 0);
        assert_eq!(interlace_scalar(&[1, 1], 1), 0b11); // 3/4
        assert_eq!(interlace_scalar(&[1, 0], 1), 0b10); // 1/2
        assert_eq!(interlace_scalar(&[0, 1], 1), 0b01); // 1/4
        // digits of x1 = 0.101, x2 = 0.011 alternate: 0.10 01 11
        assert_eq!(interlace_scalar(&[0b101, 0b011], 3), 0b100111);
        assert_eq!(interlace_scalar(&[0b1011], 4), 0b1011);
    }

    #[test]
    fn interlaced_four_point_set() {
        // alpha = 2, s = 1, P = x^2+x+1, g = (1, x)
        let p = modulus(0b111);
        let gv = GeneratingVector::new(p, 2, 1, vec![Poly2::ONE, Poly2::X]).unwrap();
        let ps = interlaced_points(&gv).unwrap();
        assert_eq!(ps.precision_bits(), 4);
        // hand computation: n -> (v(n/P), v(n x/P)) -> interlace
        let expected: Vec<u64> = (0..4u64)
            .map(|n| {
                let a = laurent_bits(mul_mod(Poly2(n), Poly2::ONE, p.poly()), &p, 2).unwrap();
                let b = laurent_bits(mul_mod(Poly2(n), Poly2::X, p.poly()), &p, 2).unwrap();
                interlace_scalar(&[a, b], 2)
            })
            .collect();
        let got: Vec<u64> = (0..4).map(|n| ps.raw(n)[0]).collect();
        assert_eq!(got, expected);
        // 1/P = 0.0110.., x/P = 0.1101..; n=1 -> (0.01, 0.11) -> 0.0111
        assert_eq!(got[1], 0b0111);
        assert_eq!(ps.point(0), vec![0.0]);
    }

    #[test]
    fn alpha_one_is_classical() {
        let p = Modulus::for_degree(5).unwrap();
        let comps = vec![Poly2(1), Poly2(7), Poly2(19)];
        let gv = GeneratingVector::new(p, 1, 3, comps.clone()).unwrap();
        assert_eq!(interlaced_points(&gv).unwrap(), classical_points(&p, &comps, 5, 3).unwrap());
    }

    #[test]
    fn qmc_average_basics() {
        let p = modulus(0b111);
        let ps = classical_points(&p, &[Poly2::ONE], 2, 1).unwrap();
        assert_eq!(qmc_average(&ps, 1, |_| vec![3.5]), vec![3.5]);
        assert_eq!(qmc_average(&ps, 2, |y| vec![y[0], 1.0]), vec![0.375, 1.0]);
    }

    #[test]
    fn vector_file_round_trip_and_errors() {
        let p = Modulus::for_degree(6).unwrap();
        let gv = GeneratingVector::new(p, 2, 2, vec![Poly2(1), Poly2(0x2b), Poly2(0x11), Poly2(5)]).unwrap();
        let text = gv.to_text();
        assert!(text.contains("2 6 2 2"));
        assert_eq!(GeneratingVector::from_text(&text).unwrap(), gv);
        assert!(GeneratingVector::from_text("3 6 1 1\n1\n").is_err());
        assert!(GeneratingVector::from_text("2 6 1 2\n1\n").is_err());
        assert!(GeneratingVector::from_text("2 6 1 1\n40\n").is_err());
        assert!(GeneratingVector::from_text("").is_err());
    }

    #[test]
    fn truncation_keeps_leading_blocks() {
        let p = Modulus::for_degree(4).unwrap();
        let gv = GeneratingVector::new(p, 2, 3, (1..=6).map(Poly2).collect()).unwrap();
        let t = gv.truncated(2).unwrap();
        assert_eq!(t.components(), &[Poly2(1), Poly2(2), Poly2(3), Poly2(4)]);
        let full = interlaced_points(&gv).unwrap();
        let part = interlaced_points(&t).unwrap();
        for n in 0..16 {
            assert_eq!(&full.raw(n)[..2], part.raw(n));
        }
        assert!(gv.truncated(4).is_err());
    }
}
