//! Fast component-by-component construction of interlaced polynomial
//! lattice rules for SPOD weights.
//!
//! # Criterion
//!
//! An interlaced rule of order `alpha` in `s` dimensions is built from a
//! classical rule in `alpha * s` dimensions. Index the classical coordinates
//! as pairs `(j, i)`: output coordinate `j`, interlacing partner
//! `i = 1..alpha`. For a set `v` of classical coordinates write `v_j` for
//! the partners of `j` present in `v`, `nu_j = |v_j|` and `|nu| = sum nu_j`.
//! The construction minimizes
//!
//! ```text
//! E(g) = (1/N) sum_n sum_{v nonempty} |nu|! prod_j 2^{delta(nu_j, alpha)}
//!        prod_{(j,i) in v} C beta_j 2^{alpha - i} omega(y_{n,(j,i)})
//! ```
//!
//! where `y_{n,(j,i)}` are the classical points and
//! `omega(x) = sum_{k >= 1} 2^{-kappa mu_1(k)} wal_k(x)` with `mu_1(k)` the
//! position of the leading binary digit of `k` and `kappa = max(alpha, 2)`.
//! The factor `2^{alpha - i}` comes from the leading-digit position
//! `i + (mu_1 - 1) alpha` that partner `i` occupies after interlacing, and the
//! bracket with `|nu|!` and `2^{delta}` is the SPOD weight of the
//! corresponding multi-index.
//!
//! # Algorithm
//!
//! Components are chosen in the order `(1,1), (1,2), ..., (s, alpha)`. The
//! criterion is a polynomial in the per-coordinate factors, so it is carried
//! as order-resolved sums over the points (`O(orders * N)` memory). For
//! `n != 0` write `n = rho^a` and candidate `g = rho^b` for a primitive
//! element `rho` of GF(2^m); the candidate scores then form a cyclic
//! correlation of length `N - 1`, evaluated with one FFT pair per step.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::enumerate_modes;
use crate::gf2poly::{laurent_bits, mul_mod, Modulus, Poly2};
use crate::plr::{classical_points, GeneratingVector};
use crate::sum::CompensatedSum;

/// Orders whose largest magnitude falls this far below the largest order are
/// dropped from the running sums.
const ORDER_CUTOFF: f64 = 1e-30;

/// Default Walsh constant.
pub const DEFAULT_WALSH_CONSTANT: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LevelClass {
    /// Coarsest level: `beta_j = mu_j`.
    Base,
    /// Increment levels: `beta_j = mu_j pi max(k1, k2)`.
    Increment,
}

impl std::str::FromStr for LevelClass {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "base" => Ok(LevelClass::Base),
            "increment" => Ok(LevelClass::Increment),
            _ => Err(Error::Config(format!("unknown level class {s:?}"))),
        }
    }
}

impl std::fmt::Display for LevelClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LevelClass::Base => "base",
            LevelClass::Increment => "increment",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpodWeights {
    alpha: u32,
    beta: Vec<f64>,
    walsh_constant: f64,
}

impl SpodWeights {
    pub fn new(alpha: u32, beta: Vec<f64>, walsh_constant: f64) -> Result<Self> {
        if alpha == 0 {
            return Err(Error::Config("interlacing factor must be at least 1".into()));
        }
        if !(walsh_constant > 0.0) {
            return Err(Error::Config(format!("Walsh constant must be positive, got {walsh_constant}")));
        }
        if beta.iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
            return Err(Error::Config("weights must be finite and non-negative".into()));
        }
        Ok(SpodWeights { alpha, beta, walsh_constant })
    }

    /// Weights of the diffusion test problem for `s` coordinates.
    pub fn for_level(class: LevelClass, s: usize, alpha: u32, walsh_constant: f64) -> Result<Self> {
        let beta = enumerate_modes(s)
            .iter()
            .map(|mode| match class {
                LevelClass::Base => mode.base_weight(),
                LevelClass::Increment => mode.increment_weight(),
            })
            .collect();
        Self::new(alpha, beta, walsh_constant)
    }

    pub fn alpha(&self) -> u32 {
        self.alpha
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn walsh_constant(&self) -> f64 {
        self.walsh_constant
    }

    /// Factor multiplying `omega` for classical coordinate `(j, i)`, both
    /// zero-based.
    fn coordinate_factor(&self, j: usize, i: u32) -> f64 {
        self.walsh_constant * self.beta[j] * ((self.alpha - 1 - i) as f64).exp2()
    }
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

/// SPOD weight `|nu|! prod_{j in u} 2^{delta(nu_j, alpha)} beta_j^{nu_j}` for
/// coordinates `u` (zero-based) and orders `nu` in `1..=alpha`.
pub fn spod_weight(u: &[usize], nu: &[u32], w: &SpodWeights) -> Result<f64> {
    if u.len() != nu.len() {
        return Err(Error::DimensionMismatch { expected: u.len(), got: nu.len() });
    }
    if let Some(&bad) = nu.iter().find(|&&n| n == 0 || n > w.alpha) {
        return Err(Error::Config(format!("order {bad} outside 1..={}", w.alpha)));
    }
    let order: u32 = nu.iter().sum();
    let product: f64 = u
        .iter()
        .zip(nu)
        .map(|(&j, &n)| {
            let doubling = if n == w.alpha { 2.0 } else { 1.0 };
            doubling * w.beta[j].powi(n as i32)
        })
        .product();
    Ok(factorial(order) * product)
}

/// Exponent of the Walsh kernel for interlacing factor `alpha`.
pub fn kernel_exponent(alpha: u32) -> u32 {
    alpha.max(2)
}

/// `omega(x) = sum_{k>=1} 2^{-kappa mu_1(k)} wal_k(x)` for `x = bits / 2^m`.
pub fn walsh_kernel(bits: u64, m: u32, kappa: u32) -> f64 {
    let r = (1.0 - kappa as f64).exp2();
    if bits == 0 {
        return 0.5 * r / (1.0 - r);
    }
    // position (1-based, from the most significant) of the first nonzero digit
    let t = (m - (63 - bits.leading_zeros())) as i32;
    0.5 * r * (1.0 - r.powi(t - 1)) / (1.0 - r) - 0.5 * r.powi(t)
}

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct QualityScore(pub f64);

/// Order-resolved sums for the current state of the construction.
///
/// `p[l]` holds configurations whose current block is not "all partners so
/// far", `f[l]` those where it is. Entry `l` carries the factor `l!`.
struct OrderSums {
    p: Vec<Vec<f64>>,
    f: Vec<Vec<f64>>,
}

impl OrderSums {
    fn start(len: usize) -> Self {
        OrderSums { p: vec![vec![0.0; len]], f: vec![vec![1.0; len]] }
    }

    fn orders(&self) -> usize {
        self.p.len()
    }

    /// Includes a coordinate with factor values `x`.
    fn include(&mut self, x: &[f64]) {
        let len = x.len();
        let top = self.orders();
        self.p.push(vec![0.0; len]);
        self.f.push(vec![0.0; len]);
        for l in (1..=top).rev() {
            let lf = l as f64;
            let (p_lo, p_hi) = self.p.split_at_mut(l);
            let (f_lo, f_hi) = self.f.split_at_mut(l);
            let (p_prev, p_cur) = (&p_lo[l - 1], &mut p_hi[0]);
            let (f_prev, f_cur) = (&f_lo[l - 1], &mut f_hi[0]);
            for n in 0..len {
                let xn = lf * x[n];
                // excluding the new partner moves "all so far" into p
                p_cur[n] += xn * p_prev[n] + f_cur[n];
                f_cur[n] = xn * f_prev[n];
            }
        }
        let (p0, f0) = (&mut self.p[0], &mut self.f[0]);
        for n in 0..len {
            p0[n] += f0[n];
            f0[n] = 0.0;
        }
        self.trim();
    }

    /// Closes a block: the full block receives the factor 2.
    fn close_block(&mut self) {
        for (p, f) in self.p.iter_mut().zip(self.f.iter_mut()) {
            for (pn, fn_) in p.iter_mut().zip(f.iter_mut()) {
                *fn_ = *pn + 2.0 * *fn_;
                *pn = 0.0;
            }
        }
    }

    fn trim(&mut self) {
        let magnitude = |v: &Vec<f64>| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let peak = (1..self.orders())
            .map(|l| magnitude(&self.p[l]).max(magnitude(&self.f[l])))
            .fold(0.0, f64::max);
        while self.orders() > 2 {
            let l = self.orders() - 1;
            if magnitude(&self.p[l]).max(magnitude(&self.f[l])) < ORDER_CUTOFF * peak {
                self.p.pop();
                self.f.pop();
            } else {
                break;
            }
        }
    }

    /// Criterion contribution at point `n` with the open block weighted by
    /// `closing` (2 if the block is complete, 1 otherwise).
    fn value_at(&self, n: usize, closing: f64) -> f64 {
        (1..self.orders())
            .map(|l| self.p[l][n] + closing * self.f[l][n])
            .sum()
    }

    /// `sum_l l (p[l-1] + closing f[l-1])` at every point.
    fn marginal(&self, closing: f64) -> Vec<f64> {
        let len = self.p[0].len();
        let mut out = vec![0.0; len];
        for l in 1..=self.orders() {
            let lf = l as f64;
            for n in 0..len {
                out[n] += lf * (self.p[l - 1][n] + closing * self.f[l - 1][n]);
            }
        }
        out
    }
}

/// Kernel values along the cyclic group, with their FFT.
struct CyclicKernel {
    /// powers[c] = rho^c
    powers: Vec<Poly2>,
    /// omega(v_m(rho^c / P))
    omega: Vec<f64>,
    spectrum: Vec<Complex64>,
    omega_zero: f64,
}

impl CyclicKernel {
    fn new(modulus: &Modulus, kappa: u32) -> Self {
        let m = modulus.degree();
        let len = (modulus.order() - 1) as usize;
        let rho = modulus.primitive_element();
        let mut powers = Vec::with_capacity(len);
        let mut e = Poly2::ONE;
        for _ in 0..len {
            powers.push(e);
            e = mul_mod(e, rho, modulus.poly());
        }
        let omega: Vec<f64> = powers
            .iter()
            .map(|&p| walsh_kernel(laurent_bits(p, modulus, m).expect("residue"), m, kappa))
            .collect();
        let mut spectrum: Vec<Complex64> = omega.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        FftPlanner::new().plan_fft_forward(len).process(&mut spectrum);
        CyclicKernel { powers, omega, spectrum, omega_zero: walsh_kernel(0, m, kappa) }
    }

    fn shared(modulus: &Modulus, kappa: u32) -> Arc<CyclicKernel> {
        type Cache = Mutex<HashMap<(u64, u32), Arc<CyclicKernel>>>;
        static CACHE: OnceLock<Cache> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let key = (modulus.poly().mask(), kappa);
        if let Some(k) = cache.lock().unwrap().get(&key) {
            return k.clone();
        }
        let kernel = Arc::new(CyclicKernel::new(modulus, kappa));
        cache.lock().unwrap().insert(key, kernel.clone());
        kernel
    }

    /// `scores[b] = sum_a omega[(a + b) mod M] w[a]`.
    fn correlate(&self, w: &[f64], planner: &mut FftPlanner<f64>) -> Vec<f64> {
        let len = w.len();
        let mut buf: Vec<Complex64> = (0..len)
            .map(|a| Complex64::new(w[(len - a) % len], 0.0))
            .collect();
        planner.plan_fft_forward(len).process(&mut buf);
        for (b, k) in buf.iter_mut().zip(&self.spectrum) {
            *b *= k;
        }
        planner.plan_fft_inverse(len).process(&mut buf);
        buf.iter().map(|c| c.re / len as f64).collect()
    }
}

/// Builds a generating vector with `alpha * s` components by greedy
/// minimization of the criterion, ties resolved to the smallest mask.
pub fn cbc_construct(m: u32, s: usize, weights: &SpodWeights) -> Result<GeneratingVector> {
    Ok(cbc_construct_with_scores(m, s, weights)?.0)
}

/// As [`cbc_construct`], also returning the criterion after each step.
pub fn cbc_construct_with_scores(
    m: u32,
    s: usize,
    weights: &SpodWeights,
) -> Result<(GeneratingVector, Vec<QualityScore>)> {
    let modulus = Modulus::for_degree(m)?;
    if s == 0 || weights.beta().len() < s {
        return Err(Error::DimensionMismatch { expected: s.max(1), got: weights.beta().len() });
    }
    let alpha = weights.alpha();
    let kernel = CyclicKernel::shared(&modulus, kernel_exponent(alpha));
    let len = kernel.powers.len();
    let n_points = len + 1;
    let mut planner = FftPlanner::new();
    // index 0..len-1: n = rho^a; index len: n = 0
    let mut sums = OrderSums::start(n_points);
    let mut components = Vec::with_capacity(alpha as usize * s);
    let mut scores = Vec::with_capacity(alpha as usize * s);
    for j in 0..s {
        for i in 0..alpha {
            let factor = weights.coordinate_factor(j, i);
            let closing = if i + 1 == alpha { 2.0 } else { 1.0 };
            let v = sums.marginal(closing);
            let w: Vec<f64> = v[..len].iter().map(|x| x * factor).collect();
            let correlation = kernel.correlate(&w, &mut planner);
            let b = pick_candidate(&correlation, &w, &kernel);
            components.push(kernel.powers[b]);
            let x: Vec<f64> = (0..n_points)
                .map(|a| {
                    if a == len {
                        factor * kernel.omega_zero
                    } else {
                        factor * kernel.omega[(a + b) % len]
                    }
                })
                .collect();
            sums.include(&x);
            if closing == 2.0 {
                sums.close_block();
            }
            let total: CompensatedSum = (0..n_points).map(|n| sums.value_at(n, 1.0)).collect();
            scores.push(QualityScore(total.value() / n_points as f64));
        }
    }
    let gv = GeneratingVector::new(modulus, alpha, s, components)?;
    Ok((gv, scores))
}

fn pick_candidate(correlation: &[f64], w: &[f64], kernel: &CyclicKernel) -> usize {
    let min = correlation.iter().copied().fold(f64::INFINITY, f64::min);
    let scale = w.iter().map(|x| x.abs()).sum::<f64>()
        * kernel.omega.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let tolerance = 1e-10 * scale;
    (0..correlation.len())
        .filter(|&b| correlation[b] <= min + tolerance)
        .min_by_key(|&b| kernel.powers[b].mask())
        .expect("at least one candidate")
}

/// Direct evaluation of the criterion for a given generating vector.
pub fn quality(gv: &GeneratingVector, weights: &SpodWeights) -> Result<QualityScore> {
    if gv.alpha() != weights.alpha() {
        return Err(Error::Config(format!(
            "vector has alpha = {}, weights have alpha = {}",
            gv.alpha(),
            weights.alpha()
        )));
    }
    if weights.beta().len() < gv.dimension() {
        return Err(Error::DimensionMismatch { expected: gv.dimension(), got: weights.beta().len() });
    }
    let m = gv.m();
    let alpha = gv.alpha();
    let kappa = kernel_exponent(alpha);
    let points = classical_points(gv.modulus(), gv.components(), m, gv.components().len())?;
    let mut total = CompensatedSum::new();
    for n in 0..points.n_points() {
        let row = points.raw(n);
        // order-resolved sums for a single point, factor l! carried along
        let mut done = vec![1.0];
        for j in 0..gv.dimension() {
            let mut p: Vec<f64> = vec![0.0; done.len()];
            let mut f = done.clone();
            for i in 0..alpha {
                let x = weights.coordinate_factor(j, i)
                    * walsh_kernel(row[j * alpha as usize + i as usize], m, kappa);
                p.push(0.0);
                f.push(0.0);
                for l in (1..p.len()).rev() {
                    p[l] += l as f64 * x * p[l - 1] + f[l];
                    f[l] = l as f64 * x * f[l - 1];
                }
                p[0] += f[0];
                f[0] = 0.0;
            }
            done = p.iter().zip(&f).map(|(a, b)| a + 2.0 * b).collect();
        }
        total.add(done[1..].iter().sum());
    }
    Ok(QualityScore(total.value() / points.n_points() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn weights(alpha: u32, beta: Vec<f64>) -> SpodWeights {
        SpodWeights::new(alpha, beta, 1.0).unwrap()
    }

    /// Truncated Walsh series, independent of the closed form.
    fn walsh_series(bits: u64, m: u32, kappa: u32, depth: u32) -> f64 {
        let mut total = 0.0;
        for k in 1u64..(1 << depth) {
            let mu = 64 - k.leading_zeros();
            // wal_k(x) = (-1)^{sum kappa_i xi_{i+1}}, xi_{i+1} = digit i+1 of x
            let mut parity = 0;
            for i in 0..depth {
                if k >> i & 1 == 1 && i < m {
                    parity ^= bits >> (m - 1 - i) & 1;
                }
            }
            let sign = if parity == 0 { 1.0 } else { -1.0 };
            total += sign * (-(kappa as f64) * mu as f64).exp2();
        }
        total
    }

    /// Brute-force criterion: enumerate every subset of classical coordinates.
    fn brute_force_quality(gv: &GeneratingVector, w: &SpodWeights) -> f64 {
        let alpha = gv.alpha() as usize;
        let d = gv.components().len();
        let m = gv.m();
        let kappa = kernel_exponent(gv.alpha());
        let pts = classical_points(gv.modulus(), gv.components(), m, d).unwrap();
        let mut total = 0.0;
        for n in 0..pts.n_points() {
            for v in 1u64..(1 << d) {
                let mut counts = vec![0u32; gv.dimension()];
                let mut prod = 1.0;
                for k in 0..d {
                    if v >> k & 1 == 1 {
                        let (j, i) = (k / alpha, (k % alpha) as u32);
                        counts[j] += 1;
                        prod *= w.walsh_constant
                            * w.beta[j]
                            * ((gv.alpha() - 1 - i) as f64).exp2()
                            * walsh_kernel(pts.raw(n)[k], m, kappa);
                    }
                }
                let order: u32 = counts.iter().sum();
                let doubling: f64 = counts
                    .iter()
                    .map(|&c| if c == gv.alpha() { 2.0 } else { 1.0 })
                    .product();
                total += factorial(order) * doubling * prod;
            }
        }
        total / pts.n_points() as f64
    }

    #[test]
    fn spod_weight_examples() {
        let w = weights(2, vec![0.25, 0.04]);
        assert_eq!(spod_weight(&[], &[], &w).unwrap(), 1.0);
        assert_eq!(spod_weight(&[0], &[1], &w).unwrap(), 0.25);
        // 2! * 2 * (1/4)^2
        assert_eq!(spod_weight(&[0], &[2], &w).unwrap(), 0.25);
        // 3! * 2 * (1/4)^2 * (1/25)
        let v = spod_weight(&[0, 1], &[2, 1], &w).unwrap();
        assert!((v - 6.0 * 2.0 / 16.0 / 25.0).abs() < 1e-15);
        assert!(spod_weight(&[0], &[3], &w).is_err());
        assert!(spod_weight(&[0], &[0], &w).is_err());
    }

    #[test]
    fn kernel_matches_walsh_series() {
        for kappa in [2u32, 3] {
            for m in [3u32, 6] {
                for bits in 0..(1u64 << m) {
                    let closed = walsh_kernel(bits, m, kappa);
                    let series = walsh_series(bits, m, kappa, 22);
                    let tail = 2.0 * (-((kappa - 1) as f64) * 22.0).exp2();
                    assert!((closed - series).abs() <= tail + 1e-10, "bits {bits} m {m}: {closed} vs {series}");
                }
            }
        }
    }

    #[test]
    fn kernel_integrates_to_zero() {
        let m = 10;
        let mean: f64 = (0..1u64 << m).map(|b| walsh_kernel(b, m, 2)).sum::<f64>() / 1024.0;
        assert!(mean.abs() < 1e-3);
    }

    #[test]
    fn quality_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &(m, s, alpha) in &[(2u32, 1usize, 2u32), (3, 2, 2), (4, 2, 1), (4, 1, 3), (3, 3, 2)] {
            let w = SpodWeights::new(alpha, vec![0.6, 0.3, 0.2], 0.7).unwrap();
            let modulus = Modulus::for_degree(m).unwrap();
            for _ in 0..3 {
                let comps = (0..alpha as usize * s)
                    .map(|_| Poly2(rng.gen_range(1..1u64 << m)))
                    .collect();
                let gv = GeneratingVector::new(modulus, alpha, s, comps).unwrap();
                let direct = quality(&gv, &w).unwrap().0;
                let brute = brute_force_quality(&gv, &w);
                assert!((direct - brute).abs() <= 1e-12 * brute.abs().max(1.0), "{direct} vs {brute}");
            }
        }
    }

    #[test]
    fn zero_weights_give_zero_score() {
        let w = SpodWeights::new(2, vec![0.0; 3], 0.1).unwrap();
        let gv = cbc_construct(5, 3, &w).unwrap();
        assert_eq!(quality(&gv, &w).unwrap().0, 0.0);
    }

    #[test]
    fn construction_scores_agree_with_direct_quality() {
        let w = SpodWeights::for_level(LevelClass::Base, 5, 2, 0.1).unwrap();
        let (gv, scores) = cbc_construct_with_scores(7, 5, &w).unwrap();
        let direct = quality(&gv, &w).unwrap().0;
        let last = scores.last().unwrap().0;
        assert!((direct - last).abs() <= 1e-10 * direct, "{direct} vs {last}");
        // intermediate scores are the criterion of the truncated vectors
        let three = gv.truncated(3).unwrap();
        let expected = quality(&three, &w).unwrap().0;
        assert!((scores[5].0 - expected).abs() <= 1e-10 * expected);
    }

    #[test]
    fn greedy_step_is_optimal() {
        let w = SpodWeights::for_level(LevelClass::Increment, 3, 2, 0.1).unwrap();
        let m = 5;
        let gv = cbc_construct(m, 3, &w).unwrap();
        let modulus = Modulus::for_degree(m).unwrap();
        let comps = gv.components().to_vec();
        for k in 0..comps.len() {
            let j = k / 2;
            // criterion of the prefix up to k with later partners of block j absent
            let score = |candidate: Poly2| {
                let mut prefix = comps[..k].to_vec();
                prefix.push(candidate);
                partial_quality(&modulus, &prefix, &w)
            };
            let chosen = score(comps[k]);
            for c in 1..(1u64 << m) {
                assert!(score(Poly2(c)) >= chosen * (1.0 - 1e-9), "step {k} (block {j}) candidate {c}");
            }
        }
    }

    /// Brute-force criterion for a prefix of classical coordinates (possibly
    /// ending mid-block).
    fn partial_quality(modulus: &Modulus, comps: &[Poly2], w: &SpodWeights) -> f64 {
        let alpha = w.alpha() as usize;
        let d = comps.len();
        let m = modulus.degree();
        let pts = classical_points(modulus, comps, m, d).unwrap();
        let mut total = 0.0;
        for n in 0..pts.n_points() {
            for v in 1u64..(1 << d) {
                let mut counts = vec![0u32; d.div_ceil(alpha)];
                let mut prod = 1.0;
                for k in 0..d {
                    if v >> k & 1 == 1 {
                        let (j, i) = (k / alpha, (k % alpha) as u32);
                        counts[j] += 1;
                        prod *= w.coordinate_factor(j, i) * walsh_kernel(pts.raw(n)[k], m, 2);
                    }
                }
                let order: u32 = counts.iter().sum();
                let doubling: f64 = counts
                    .iter()
                    .map(|&c| if c == w.alpha() { 2.0 } else { 1.0 })
                    .product();
                total += factorial(order) * doubling * prod;
            }
        }
        total / pts.n_points() as f64
    }

    #[test]
    fn one_dimensional_matches_exhaustive_search() {
        for alpha in [1u32, 2] {
            for m in 1..=6 {
                let w = SpodWeights::for_level(LevelClass::Base, 1, alpha, 0.1).unwrap();
                let gv = cbc_construct(m, 1, &w).unwrap();
                let modulus = Modulus::for_degree(m).unwrap();
                // exhaustive over all vectors (alpha components), lexicographic ties
                let mut best: Option<(f64, Vec<Poly2>)> = None;
                let candidates: Vec<Vec<Poly2>> = if alpha == 1 {
                    (1..1u64 << m).map(|a| vec![Poly2(a)]).collect()
                } else {
                    (1..1u64 << m)
                        .flat_map(|a| (1..1u64 << m).map(move |b| vec![Poly2(a), Poly2(b)]))
                        .collect()
                };
                for c in candidates {
                    let q = brute_force_quality(&GeneratingVector::new(modulus, alpha, 1, c.clone()).unwrap(), &w);
                    match &best {
                        Some((bq, _)) if q >= *bq * (1.0 - 1e-9) => {}
                        _ => best = Some((q, c)),
                    }
                }
                let (best_q, _) = best.unwrap();
                let got = brute_force_quality(&gv, &w);
                assert!((got - best_q).abs() <= 1e-9 * best_q, "alpha {alpha} m {m}: {got} vs {best_q}");
                if alpha == 1 {
                    // all one-dimensional rules coincide as point sets: smallest mask wins
                    assert_eq!(gv.components(), &[Poly2::ONE]);
                }
            }
        }
    }

    #[test]
    fn deterministic() {
        let w = SpodWeights::for_level(LevelClass::Increment, 6, 2, 0.1).unwrap();
        assert_eq!(cbc_construct(8, 6, &w).unwrap(), cbc_construct(8, 6, &w).unwrap());
    }

    #[test]
    fn rejects_bad_inputs() {
        let w = SpodWeights::for_level(LevelClass::Base, 2, 2, 0.1).unwrap();
        assert!(cbc_construct(0, 2, &w).is_err());
        assert!(cbc_construct(33, 2, &w).is_err());
        assert!(cbc_construct(4, 3, &w).is_err());
        assert!(SpodWeights::new(0, vec![1.0], 0.1).is_err());
        assert!(SpodWeights::new(2, vec![1.0], 0.0).is_err());
    }
}
