//! Karhunen-Loève parametrization of the diffusion coefficient on `(0,1)^2`.
//!
//! Mode `j` is the pair `(k1, k2)` with amplitude `mu_j = (k1^2 + k2^2)^{-2}`
//! and shape `sin(k1 pi x1) sin(k2 pi x2)`. Modes are enumerated by
//! increasing `k1^2 + k2^2`, ties by `(k1, k2)` ascending.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KlMode {
    pub k1: u32,
    pub k2: u32,
    pub mu: f64,
}

impl KlMode {
    pub fn new(k1: u32, k2: u32) -> Self {
        let norm = (k1 * k1 + k2 * k2) as f64;
        KlMode { k1, k2, mu: 1.0 / (norm * norm) }
    }

    pub fn norm_sq(&self) -> u32 {
        self.k1 * self.k1 + self.k2 * self.k2
    }

    /// Weight parameter used for the coarsest level's rules.
    pub fn base_weight(&self) -> f64 {
        self.mu
    }

    /// Weight parameter used for the rules on increment levels.
    pub fn increment_weight(&self) -> f64 {
        self.mu * PI * self.k1.max(self.k2) as f64
    }

    pub fn shape(&self, x1: f64, x2: f64) -> f64 {
        (self.k1 as f64 * PI * x1).sin() * (self.k2 as f64 * PI * x2).sin()
    }
}

/// The first `s` modes in enumeration order.
pub fn enumerate_modes(s: usize) -> Vec<KlMode> {
    if s == 0 {
        return Vec::new();
    }
    // Grow the radius until the disc holds s lattice points; every pair
    // inside the disc is then present, so sorting yields the true prefix.
    let mut radius_sq: u64 = 2;
    loop {
        let r = (radius_sq as f64).sqrt() as u32 + 1;
        let mut modes: Vec<KlMode> = (1..=r)
            .flat_map(|k1| (1..=r).map(move |k2| (k1, k2)))
            .filter(|&(k1, k2)| (k1 * k1 + k2 * k2) as u64 <= radius_sq)
            .map(|(k1, k2)| KlMode::new(k1, k2))
            .collect();
        if modes.len() >= s {
            modes.sort_by_key(|m| (m.norm_sq(), m.k1, m.k2));
            modes.truncate(s);
            return modes;
        }
        radius_sq *= 2;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Law {
    /// `u = u0 + sum_j y_j psi_j`
    #[default]
    Affine,
    /// `u = exp(sum_j y_j psi_j)`
    #[serde(alias = "log-affine")]
    LogAffine,
}

impl std::str::FromStr for Law {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "affine" => Ok(Law::Affine),
            "logaffine" | "log-affine" => Ok(Law::LogAffine),
            _ => Err(Error::Config(format!("unknown coefficient law {s:?}"))),
        }
    }
}

impl std::fmt::Display for Law {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Law::Affine => "affine",
            Law::LogAffine => "logaffine",
        })
    }
}

#[derive(Debug, Clone)]
pub struct FieldSpec {
    modes: Vec<KlMode>,
    u0: f64,
    law: Law,
}

impl FieldSpec {
    pub fn new(s_max: usize, u0: f64, law: Law) -> Self {
        FieldSpec { modes: enumerate_modes(s_max), u0, law }
    }

    /// Affine law with nominal value 1/2.
    pub fn affine(s_max: usize) -> Self {
        Self::new(s_max, 0.5, Law::Affine)
    }

    pub fn log_affine(s_max: usize) -> Self {
        Self::new(s_max, 0.0, Law::LogAffine)
    }

    pub fn modes(&self) -> &[KlMode] {
        &self.modes
    }

    pub fn s_max(&self) -> usize {
        self.modes.len()
    }

    pub fn law(&self) -> Law {
        self.law
    }

    pub fn u0(&self) -> f64 {
        self.u0
    }

    /// Nominal value `u(0)`.
    pub fn nominal(&self) -> f64 {
        match self.law {
            Law::Affine => self.u0,
            Law::LogAffine => 1.0,
        }
    }

    fn finish(&self, expansion: f64) -> f64 {
        match self.law {
            Law::Affine => self.u0 + expansion,
            Law::LogAffine => expansion.exp(),
        }
    }

    pub fn eval_coefficient(&self, y: &[f64], x1: f64, x2: f64) -> Result<f64> {
        if y.len() > self.modes.len() {
            return Err(Error::DimensionMismatch { expected: self.modes.len(), got: y.len() });
        }
        let expansion: f64 = y
            .iter()
            .zip(&self.modes)
            .map(|(&yj, mode)| yj * mode.mu * mode.shape(x1, x2))
            .sum();
        let value = self.finish(expansion);
        if value > 0.0 && value.is_finite() {
            Ok(value)
        } else {
            Err(Error::NonPositiveCoefficient { value, x1, x2 })
        }
    }
}

/// Drops parameter coordinates beyond `s_target`, which is the same as
/// setting them to zero.
pub fn truncate(y: &[f64], s_target: usize) -> &[f64] {
    &y[..s_target.min(y.len())]
}

/// Coefficient evaluation on a tensor grid of points `xs x xs`, with the
/// sine values of every mode cached.
///
/// Evaluation exploits separability: modes are grouped by `k1`, so the cost
/// per call is `O(s * n + K1 * n^2)` for `n` grid coordinates and `K1`
/// distinct values of `k1`.
#[derive(Debug, Clone)]
pub struct GridCoefficient {
    spec: FieldSpec,
    coords: Vec<f64>,
    /// sines[k - 1][q] = sin(k pi coords[q])
    sines: Vec<Vec<f64>>,
}

impl GridCoefficient {
    pub fn new(spec: &FieldSpec, coords: Vec<f64>) -> Self {
        let k_max = spec.modes.iter().map(|m| m.k1.max(m.k2)).max().unwrap_or(0);
        let sines = (1..=k_max)
            .map(|k| coords.iter().map(|&x| (k as f64 * PI * x).sin()).collect())
            .collect();
        GridCoefficient { spec: spec.clone(), coords, sines }
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    /// Fills `out[q1 * n + q2]` with `u(y)(coords[q1], coords[q2])`.
    pub fn evaluate(&self, y: &[f64], out: &mut [f64]) -> Result<()> {
        let n = self.coords.len();
        debug_assert_eq!(out.len(), n * n);
        if y.len() > self.spec.modes.len() {
            return Err(Error::DimensionMismatch { expected: self.spec.modes.len(), got: y.len() });
        }
        let k1_max = self.spec.modes[..y.len()].iter().map(|m| m.k1).max().unwrap_or(0) as usize;
        // partial[k1 - 1][q2] = sum over modes with this k1 of y mu sin(k2 pi x2)
        let mut partial = vec![0.0; k1_max * n];
        let mut used = vec![false; k1_max];
        for (&yj, mode) in y.iter().zip(&self.spec.modes) {
            if yj == 0.0 {
                continue;
            }
            let row = &mut partial[(mode.k1 as usize - 1) * n..mode.k1 as usize * n];
            used[mode.k1 as usize - 1] = true;
            let scale = yj * mode.mu;
            for (p, &sv) in row.iter_mut().zip(&self.sines[mode.k2 as usize - 1]) {
                *p += scale * sv;
            }
        }
        out.fill(0.0);
        for k1 in 0..k1_max {
            if !used[k1] {
                continue;
            }
            let row = &partial[k1 * n..(k1 + 1) * n];
            for (q1, &s1) in self.sines[k1].iter().enumerate() {
                let dst = &mut out[q1 * n..(q1 + 1) * n];
                for (d, &p) in dst.iter_mut().zip(row) {
                    *d += s1 * p;
                }
            }
        }
        for (idx, v) in out.iter_mut().enumerate() {
            *v = self.spec.finish(*v);
            if !(*v > 0.0 && v.is_finite()) {
                return Err(Error::NonPositiveCoefficient {
                    value: *v,
                    x1: self.coords[idx / n],
                    x2: self.coords[idx % n],
                });
            }
        }
        Ok(())
    }
}
