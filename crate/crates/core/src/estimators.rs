//! Posterior expectations by single-level and multilevel quadrature.
//!
//! A multilevel run visits each level once. At every sample it solves on the
//! level itself and, for `l >= 1`, on level `l - 1` with the parameter
//! truncated to `s_{l-1}`, and accumulates the four averages
//! `phi_l Theta_l`, `Theta_l`, `phi_{l-1} Theta_{l-1}`, `Theta_{l-1}`.
//! The ratio and splitting estimators are both formed from these sums, so
//! one pass yields both.

use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{LevelSolver, MeshLevel, SolverOptions, Workspace, LEVEL_OFFSET, MAX_LEVEL};
use crate::field::{truncate, FieldSpec};
use crate::plr::{interlaced_points, GeneratingVector, PointSet};
use crate::sum::CompensatedSum;

/// Default floor on normalization constants.
pub const DEFAULT_EPS_Z: f64 = 1e-300;

/// Samples per parallel work item. Fixed so that reductions do not depend on
/// the thread count.
const CHUNK: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    gamma: f64,
    delta: f64,
}

impl NoiseModel {
    pub fn new(gamma: f64, delta: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::Config(format!("noise covariance must be positive, got {gamma}")));
        }
        if !delta.is_finite() {
            return Err(Error::Config(format!("observation must be finite, got {delta}")));
        }
        Ok(NoiseModel { gamma, delta })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }
}

/// `Phi = (delta - g)^2 / (2 Gamma)`
pub fn potential(g_value: f64, noise: &NoiseModel) -> f64 {
    let r = noise.delta - g_value;
    0.5 * r * r / noise.gamma
}

/// What is averaged against the posterior.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Observable {
    /// The integral of the solution over `(1/2, 1)^2`.
    #[default]
    Qoi,
    /// The constant 1; every estimator must return exactly 1.
    Unit,
}

/// Forward model with one lazily built solver per level.
#[derive(Debug)]
pub struct ForwardModel {
    spec: FieldSpec,
    options: SolverOptions,
    solvers: Vec<OnceLock<LevelSolver>>,
}

impl ForwardModel {
    pub fn new(spec: FieldSpec, options: SolverOptions) -> Self {
        ForwardModel {
            spec,
            options,
            solvers: (0..=MAX_LEVEL).map(|_| OnceLock::new()).collect(),
        }
    }

    pub fn spec(&self) -> &FieldSpec {
        &self.spec
    }

    pub fn solver(&self, level: u32) -> Result<&LevelSolver> {
        let mesh = MeshLevel::new(level)?;
        Ok(self.solvers[level as usize].get_or_init(|| LevelSolver::new(&self.spec, mesh, self.options)))
    }
}

/// Prior (`noise = None`) or posterior expectation of an observable.
#[derive(Debug, Clone, Copy)]
pub struct Posterior<'a> {
    pub model: &'a ForwardModel,
    pub noise: Option<NoiseModel>,
    pub observable: Observable,
    pub eps_z: f64,
}

impl<'a> Posterior<'a> {
    pub fn new(model: &'a ForwardModel, noise: Option<NoiseModel>) -> Self {
        Posterior { model, noise, observable: Observable::Qoi, eps_z: DEFAULT_EPS_Z }
    }

    pub fn with_observable(mut self, observable: Observable) -> Self {
        self.observable = observable;
        self
    }

    pub fn with_eps_z(mut self, eps_z: f64) -> Self {
        self.eps_z = eps_z;
        self
    }

    /// `(Theta_l(y), phi(q_l(y)))` for a parameter already truncated to the
    /// level's dimension.
    pub fn theta(&self, y: &[f64], level: u32) -> Result<(f64, f64)> {
        let solver = self.model.solver(level)?;
        let mut ws = solver.workspace();
        self.evaluate(solver, y, &mut ws)
    }

    fn evaluate(&self, solver: &LevelSolver, y: &[f64], ws: &mut Workspace) -> Result<(f64, f64)> {
        let out = solver.solve_with(y, ws)?;
        let density = match &self.noise {
            Some(noise) => (-potential(out.observation, noise)).exp(),
            None => 1.0,
        };
        let phi = match self.observable {
            Observable::Qoi => out.qoi,
            Observable::Unit => 1.0,
        };
        Ok((density, phi))
    }
}

/// Averages over one level's samples.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LevelSums {
    /// `Z'_{l,l}`
    pub phi_theta: f64,
    /// `Z_{l,l}`
    pub theta: f64,
    /// `Z'_{l-1,l}` (zero on level 0)
    pub phi_theta_coarse: f64,
    /// `Z_{l-1,l}` (zero on level 0)
    pub theta_coarse: f64,
}

enum Samples<'p> {
    Qmc(&'p PointSet),
    Mc { seed: u64, stream: u64, n: usize },
}

impl Samples<'_> {
    fn len(&self) -> usize {
        match self {
            Samples::Qmc(points) => points.n_points(),
            Samples::Mc { n, .. } => *n,
        }
    }
}

impl Posterior<'_> {
    fn integrate_level(&self, level: u32, s: usize, s_coarse: Option<usize>, samples: &Samples) -> Result<LevelSums> {
        let fine = self.model.solver(level)?;
        let coarse = match s_coarse {
            Some(_) => Some(self.model.solver(level - 1)?),
            None => None,
        };
        let n = samples.len();
        let chunks = n.div_ceil(CHUNK);
        let partial: Vec<Result<[f64; 4]>> = (0..chunks)
            .into_par_iter()
            .map_init(
                || (fine.workspace(), coarse.map(|c| c.workspace()), vec![0.0; s]),
                |(ws_f, ws_c, y), chunk| {
                    let start = chunk * CHUNK;
                    let end = (start + CHUNK).min(n);
                    let mut rng = match samples {
                        Samples::Mc { seed, stream, .. } => {
                            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                            rng.set_stream(stream.wrapping_add(chunk as u64));
                            Some(rng)
                        }
                        Samples::Qmc(_) => None,
                    };
                    let mut acc = [CompensatedSum::new(); 4];
                    for k in start..end {
                        match (samples, rng.as_mut()) {
                            (Samples::Qmc(points), _) => {
                                points.point_into(k, y);
                                for v in y.iter_mut() {
                                    *v -= 0.5;
                                }
                            }
                            (_, Some(rng)) => {
                                for v in y.iter_mut() {
                                    *v = rng.gen::<f64>() - 0.5;
                                }
                            }
                            _ => unreachable!(),
                        }
                        let (t, phi) = self.evaluate(fine, y, ws_f)?;
                        acc[0].add(phi * t);
                        acc[1].add(t);
                        if let (Some(solver), Some(ws), Some(sc)) = (coarse, ws_c.as_mut(), s_coarse) {
                            let (tc, phic) = self.evaluate(solver, truncate(y, sc), ws)?;
                            acc[2].add(phic * tc);
                            acc[3].add(tc);
                        }
                    }
                    Ok(acc.map(|a| a.value()))
                },
            )
            .collect();
        let mut totals = [CompensatedSum::new(); 4];
        for p in partial {
            let p = p?;
            for (t, v) in totals.iter_mut().zip(p) {
                t.add(v);
            }
        }
        let nf = n as f64;
        let v = totals.map(|t| t.value() / nf);
        Ok(LevelSums { phi_theta: v[0], theta: v[1], phi_theta_coarse: v[2], theta_coarse: v[3] })
    }

    fn check_floor(&self, value: f64, level: usize) -> Result<()> {
        if value < self.eps_z || !value.is_finite() {
            return Err(Error::ZFloor { value, floor: self.eps_z, level });
        }
        Ok(())
    }

    fn ratio(&self, sums: &[LevelSums]) -> Result<f64> {
        let numerator: CompensatedSum = sums.iter().flat_map(|s| [s.phi_theta, -s.phi_theta_coarse]).collect();
        let denominator: CompensatedSum = sums.iter().flat_map(|s| [s.theta, -s.theta_coarse]).collect();
        self.check_floor(denominator.value(), sums.len() - 1)?;
        Ok(numerator.value() / denominator.value())
    }

    fn split(&self, sums: &[LevelSums]) -> Result<f64> {
        let mut total = CompensatedSum::new();
        for (l, s) in sums.iter().enumerate() {
            self.check_floor(s.theta, l)?;
            total.add(s.phi_theta / s.theta);
            if l > 0 {
                self.check_floor(s.theta_coarse, l)?;
                total.add(-(s.phi_theta_coarse / s.theta_coarse));
            }
        }
        Ok(total.value())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EstimatorKind {
    #[serde(rename = "sl-ratio")]
    SlRatio,
    #[serde(rename = "ml-ratio")]
    MlRatio,
    #[serde(rename = "ml-split")]
    MlSplit,
    #[serde(rename = "mc-sl")]
    McSl,
    #[serde(rename = "mlmc-ratio")]
    MlmcRatio,
    #[serde(rename = "mlmc-split")]
    MlmcSplit,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 6] = [
        EstimatorKind::SlRatio,
        EstimatorKind::MlRatio,
        EstimatorKind::MlSplit,
        EstimatorKind::McSl,
        EstimatorKind::MlmcRatio,
        EstimatorKind::MlmcSplit,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::SlRatio => "sl-ratio",
            EstimatorKind::MlRatio => "ml-ratio",
            EstimatorKind::MlSplit => "ml-split",
            EstimatorKind::McSl => "mc-sl",
            EstimatorKind::MlmcRatio => "mlmc-ratio",
            EstimatorKind::MlmcSplit => "mlmc-split",
        }
    }

    pub fn is_monte_carlo(self) -> bool {
        matches!(self, EstimatorKind::McSl | EstimatorKind::MlmcRatio | EstimatorKind::MlmcSplit)
    }

    pub fn is_multilevel(self) -> bool {
        !matches!(self, EstimatorKind::SlRatio | EstimatorKind::McSl)
    }
}

impl std::str::FromStr for EstimatorKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        EstimatorKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown estimator kind {s:?}")))
    }
}

impl std::fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelRecord {
    pub n: u64,
    pub s: usize,
    pub h: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorRun {
    pub kind: EstimatorKind,
    /// Mean over repetitions (a single value for QMC kinds).
    pub value: f64,
    pub work: f64,
    pub per_level: Vec<LevelRecord>,
    /// One value per repetition.
    pub repetitions: Vec<f64>,
}

impl EstimatorRun {
    /// Root mean square deviation of the repetitions from `reference`.
    pub fn rms_error(&self, reference: f64) -> f64 {
        let sq: CompensatedSum = self.repetitions.iter().map(|v| (v - reference).powi(2)).collect();
        (sq.value() / self.repetitions.len() as f64).sqrt()
    }
}

/// Work `sum_l N_l h_l^{-2} s_l`, evaluated in integers.
pub fn work(per_level: &[LevelRecord]) -> f64 {
    per_level
        .iter()
        .map(|r| {
            let inv_h = (1.0 / r.h).round() as u128;
            r.n as u128 * inv_h * inv_h * r.s as u128
        })
        .sum::<u128>() as f64
}

fn level_h(level: u32) -> f64 {
    (-((level + LEVEL_OFFSET) as f64)).exp2()
}

// ---------------------------------------------------------------------------
// Schedules

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleParams {
    pub tau: f64,
    pub d: f64,
    pub theta: f64,
    pub t: f64,
    pub ell0: u32,
    pub p0: f64,
    pub pt: f64,
    /// `None`: cap `s` at `2^{p0 tau (L + ell0) / (theta (1 - p0))}`.
    /// `Some(e)`: cap at `2^{L + e}`.
    pub cap_exponent: Option<i32>,
}

impl Default for ScheduleParams {
    fn default() -> Self {
        ScheduleParams { tau: 2.0, d: 2.0, theta: 2.0, t: 1.0, ell0: LEVEL_OFFSET, p0: 0.5, pt: 2.0 / 3.0, cap_exponent: None }
    }
}

impl ScheduleParams {
    fn check(&self) -> Result<()> {
        if self.ell0 != LEVEL_OFFSET {
            return Err(Error::Config(format!("only ell0 = {LEVEL_OFFSET} is supported by the mesh hierarchy")));
        }
        if !(self.p0 > 0.0 && self.p0 < 1.0 && self.pt > 0.0 && self.pt < 1.0) {
            return Err(Error::Config("summability exponents must lie in (0, 1)".into()));
        }
        if !(self.tau > 0.0 && self.d > 0.0 && self.theta > 0.0 && self.t > 0.0) {
            return Err(Error::Config("rate parameters must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sampling {
    Qmc,
    Mc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSchedule {
    pub l: u32,
    pub ell0: u32,
    pub sampling: Sampling,
    pub h: Vec<f64>,
    pub s: Vec<usize>,
    /// `m_l` for QMC, `floor(log2 N_l)` for MC.
    pub log2_n: Vec<u32>,
    pub n: Vec<u64>,
    pub params: ScheduleParams,
}

impl LevelSchedule {
    pub fn levels(&self) -> usize {
        self.h.len()
    }

    pub fn per_level(&self) -> Vec<LevelRecord> {
        (0..self.levels()).map(|l| LevelRecord { n: self.n[l], s: self.s[l], h: self.h[l] }).collect()
    }

    pub fn work(&self) -> f64 {
        work(&self.per_level())
    }
}

/// Truncation dimensions `s_l = ceil(min(2^{tau d (l + ell0) / (theta t)}, cap))`.
pub fn truncation_dimensions(l_max: u32, params: &ScheduleParams) -> Vec<usize> {
    let p = params;
    let cap_exp = match p.cap_exponent {
        None => p.p0 * p.tau * (l_max + p.ell0) as f64 / (p.theta * (1.0 - p.p0)),
        Some(e) => l_max as f64 + e as f64,
    };
    (0..=l_max)
        .map(|l| {
            let growth = p.tau * p.d * (l + p.ell0) as f64 / (p.theta * p.t);
            growth.min(cap_exp).exp2().ceil().max(1.0) as usize
        })
        .collect()
}

/// `m_l` evaluated from the ceiling formulas without adjustment.
pub fn qmc_log2_samples_formula(l_max: u32, params: &ScheduleParams) -> Vec<u32> {
    let p = params;
    let s = truncation_dimensions(l_max, p);
    let h: Vec<f64> = (0..=l_max).map(level_h).collect();
    let q = p.pt / (1.0 + p.pt);
    let e: f64 = (0..=l_max as usize)
        .map(|l| (s[l] as f64 * h[l].powf(p.tau * p.pt - p.d)).powf(1.0 / (1.0 + p.pt)))
        .sum();
    let s0 = s[0] as f64;
    let m0 = (p.pt * (p.tau * (l_max + p.ell0) as f64 + e.log2())
        - q * (p.ell0 as f64 * (p.tau + p.d) + s0.log2()))
    .ceil();
    (0..=l_max as usize)
        .map(|l| {
            let m = if l == 0 {
                m0
            } else {
                (m0 - q * (l as f64 * (p.tau + p.d) + (s[l] as f64 / s0).log2())).ceil()
            };
            m.max(1.0) as u32
        })
        .collect()
}

/// Sample exponents actually used for the default parameters.
const QMC_TABLE: [&[u32]; 9] = [
    &[1],
    &[3, 1],
    &[5, 3, 1],
    &[7, 5, 3, 1],
    &[9, 7, 5, 3, 1],
    &[11, 9, 6, 5, 3, 2],
    &[13, 11, 8, 6, 5, 3, 2],
    &[15, 13, 10, 8, 6, 5, 3, 2],
    &[17, 15, 12, 10, 8, 6, 5, 3, 2],
];

/// QMC schedule. For the default parameters and `L <= 8` the sample
/// exponents are pinned to the published table; otherwise they follow the
/// ceiling formulas.
pub fn schedule_qmc(l_max: u32, params: &ScheduleParams) -> Result<LevelSchedule> {
    params.check()?;
    let log2_n = if *params == ScheduleParams::default() && (l_max as usize) < QMC_TABLE.len() {
        QMC_TABLE[l_max as usize].to_vec()
    } else {
        qmc_log2_samples_formula(l_max, params)
    };
    Ok(LevelSchedule {
        l: l_max,
        ell0: params.ell0,
        sampling: Sampling::Qmc,
        h: (0..=l_max).map(level_h).collect(),
        s: truncation_dimensions(l_max, params),
        n: log2_n.iter().map(|&m| 1u64 << m).collect(),
        log2_n,
        params: *params,
    })
}

/// MLMC sample numbers
/// `N_0 = ceil(h_L^{-2 tau} (C E)^2)`, `N_l = max(2, ceil(N_0 r_l^{2/3}))`
/// with `r_l = h_l^{tau+d} h_0^{-tau-d} s_0 / s_l`,
/// `E = sum_l (s_l h_l^{2 tau - d})^{1/3}`, `C = (h_0^{tau+d} / s_0)^{1/3}`.
pub fn schedule_mc(l_max: u32, params: &ScheduleParams) -> Result<LevelSchedule> {
    params.check()?;
    let p = params;
    let s = truncation_dimensions(l_max, p);
    let h: Vec<f64> = (0..=l_max).map(level_h).collect();
    let e: f64 = (0..=l_max as usize)
        .map(|l| (s[l] as f64 * h[l].powf(2.0 * p.tau - p.d)).cbrt())
        .sum();
    let c = (h[0].powf(p.tau + p.d) / s[0] as f64).cbrt();
    let n0 = (h[l_max as usize].powf(-2.0 * p.tau) * (c * e).powi(2)).ceil().max(2.0);
    let n: Vec<u64> = (0..=l_max as usize)
        .map(|l| {
            let r = (h[l] / h[0]).powf(p.tau + p.d) * s[0] as f64 / s[l] as f64;
            (n0 * r.powf(2.0 / 3.0)).ceil().max(2.0) as u64
        })
        .collect();
    Ok(LevelSchedule {
        l: l_max,
        ell0: p.ell0,
        sampling: Sampling::Mc,
        h,
        s,
        log2_n: n.iter().map(|&v| 63 - v.leading_zeros()).collect(),
        n,
        params: *p,
    })
}

// ---------------------------------------------------------------------------
// Estimators

/// Single-level QMC ratio estimator on level `l` with the points of `gv`
/// (truncated to `s` dimensions).
pub fn sl_ratio(post: &Posterior, level: u32, s: usize, gv: &GeneratingVector) -> Result<EstimatorRun> {
    if gv.dimension() < s {
        return Err(Error::DimensionMismatch { expected: s, got: gv.dimension() });
    }
    let points = interlaced_points(&gv.truncated(s)?)?;
    let sums = post.integrate_level(level, s, None, &Samples::Qmc(&points))?;
    let value = post.ratio(&[sums])?;
    let per_level = vec![LevelRecord { n: points.n_points() as u64, s, h: level_h(level) }];
    Ok(EstimatorRun { kind: EstimatorKind::SlRatio, value, work: work(&per_level), per_level, repetitions: vec![value] })
}

/// Single-level QMC parameters at level `L`: `s = N = h_L^{-1}`.
pub fn sl_parameters(level: u32) -> (usize, u32) {
    let e = level + LEVEL_OFFSET;
    (1 << e, e)
}

/// Per-level averages of a multilevel QMC run.
pub fn ml_sums(post: &Posterior, schedule: &LevelSchedule, gvs: &[GeneratingVector]) -> Result<Vec<LevelSums>> {
    if gvs.len() < schedule.levels() {
        return Err(Error::DimensionMismatch { expected: schedule.levels(), got: gvs.len() });
    }
    (0..schedule.levels())
        .map(|l| {
            let s = schedule.s[l];
            let gv = &gvs[l];
            if gv.dimension() < s {
                return Err(Error::DimensionMismatch { expected: s, got: gv.dimension() });
            }
            if gv.n_points() as u64 != schedule.n[l] {
                return Err(Error::Config(format!(
                    "level {l} needs {} points, vector has {}",
                    schedule.n[l],
                    gv.n_points()
                )));
            }
            let points = interlaced_points(&gv.truncated(s)?)?;
            let coarse = (l > 0).then(|| schedule.s[l - 1]);
            post.integrate_level(l as u32, s, coarse, &Samples::Qmc(&points))
        })
        .collect()
}

/// Multilevel QMC ratio and splitting estimators from a single pass.
pub fn ml_both(post: &Posterior, schedule: &LevelSchedule, gvs: &[GeneratingVector]) -> Result<(EstimatorRun, EstimatorRun)> {
    let sums = ml_sums(post, schedule, gvs)?;
    let per_level = schedule.per_level();
    let w = work(&per_level);
    let ratio = post.ratio(&sums)?;
    let split = post.split(&sums)?;
    let run = |kind, value| EstimatorRun { kind, value, work: w, per_level: per_level.clone(), repetitions: vec![value] };
    Ok((run(EstimatorKind::MlRatio, ratio), run(EstimatorKind::MlSplit, split)))
}

pub fn ml_ratio(post: &Posterior, schedule: &LevelSchedule, gvs: &[GeneratingVector]) -> Result<EstimatorRun> {
    let sums = ml_sums(post, schedule, gvs)?;
    let value = post.ratio(&sums)?;
    let per_level = schedule.per_level();
    Ok(EstimatorRun { kind: EstimatorKind::MlRatio, value, work: work(&per_level), per_level, repetitions: vec![value] })
}

pub fn ml_split(post: &Posterior, schedule: &LevelSchedule, gvs: &[GeneratingVector]) -> Result<EstimatorRun> {
    let sums = ml_sums(post, schedule, gvs)?;
    let value = post.split(&sums)?;
    let per_level = schedule.per_level();
    Ok(EstimatorRun { kind: EstimatorKind::MlSplit, value, work: work(&per_level), per_level, repetitions: vec![value] })
}

fn mc_stream(rep: u32, level: usize) -> u64 {
    ((rep as u64) << 48) | ((level as u64) << 40)
}

/// Multilevel Monte Carlo ratio and splitting estimators, `repetitions`
/// independent runs each.
pub fn mc_estimators(
    post: &Posterior,
    schedule: &LevelSchedule,
    seed: u64,
    repetitions: u32,
) -> Result<(EstimatorRun, EstimatorRun)> {
    if repetitions == 0 {
        return Err(Error::Config("at least one repetition is required".into()));
    }
    let mut ratios = Vec::with_capacity(repetitions as usize);
    let mut splits = Vec::with_capacity(repetitions as usize);
    for rep in 0..repetitions {
        let sums = (0..schedule.levels())
            .map(|l| {
                let samples = Samples::Mc { seed, stream: mc_stream(rep, l), n: schedule.n[l] as usize };
                let coarse = (l > 0).then(|| schedule.s[l - 1]);
                post.integrate_level(l as u32, schedule.s[l], coarse, &samples)
            })
            .collect::<Result<Vec<_>>>()?;
        ratios.push(post.ratio(&sums)?);
        splits.push(post.split(&sums)?);
    }
    let per_level = schedule.per_level();
    let w = work(&per_level);
    let run = |kind, reps: Vec<f64>| EstimatorRun {
        kind,
        value: crate::sum::mean(&reps),
        work: w,
        per_level: per_level.clone(),
        repetitions: reps,
    };
    Ok((run(EstimatorKind::MlmcRatio, ratios), run(EstimatorKind::MlmcSplit, splits)))
}

/// Single-level Monte Carlo ratio estimator on level `L` with
/// `s = h_L^{-1}` and `N = h_L^{-2 tau}` samples, so that sampling and
/// discretization errors balance.
pub fn mc_sl(post: &Posterior, level: u32, seed: u64, repetitions: u32) -> Result<EstimatorRun> {
    let (s, e) = sl_parameters(level);
    let n = 1u64 << (4 * e);
    let mut values = Vec::with_capacity(repetitions as usize);
    for rep in 0..repetitions {
        let samples = Samples::Mc { seed, stream: mc_stream(rep, 0), n: n as usize };
        let sums = post.integrate_level(level, s, None, &samples)?;
        values.push(post.ratio(&[sums])?);
    }
    let per_level = vec![LevelRecord { n, s, h: level_h(level) }];
    Ok(EstimatorRun {
        kind: EstimatorKind::McSl,
        value: crate::sum::mean(&values),
        work: work(&per_level),
        per_level,
        repetitions: values,
    })
}

/// Quadrature of `phi Theta` and `Theta` over a given point set on one level
/// (points in `[0,1)^s`, shifted to the parameter box).
pub fn single_level_sums(post: &Posterior, level: u32, points: &PointSet) -> Result<LevelSums> {
    post.integrate_level(level, points.dimension(), None, &Samples::Qmc(points))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn potential_examples() {
        let n = NoiseModel::new(1.0, 2.0).unwrap();
        assert_eq!(potential(2.0, &n), 0.0);
        assert_eq!(potential(1.0, &n), 0.5);
        let n = NoiseModel::new(0.01, 2.0).unwrap();
        assert!((potential(1.0, &n) - 50.0).abs() < 1e-12);
        assert!(NoiseModel::new(0.0, 1.0).is_err());
    }

    #[test]
    fn table_schedules() {
        let p = ScheduleParams::default();
        assert_eq!(schedule_qmc(5, &p).unwrap().log2_n, vec![11, 9, 6, 5, 3, 2]);
        assert_eq!(schedule_qmc(8, &p).unwrap().s, vec![4, 16, 64, 256, 512, 512, 512, 512, 512]);
        assert_eq!(schedule_mc(2, &p).unwrap().log2_n, vec![10, 7, 4]);
        assert_eq!(schedule_mc(6, &p).unwrap().log2_n, vec![28, 24, 20, 17, 14, 11, 9]);
        assert_eq!(schedule_mc(5, &p).unwrap().n, vec![19179620, 1198727, 74921, 11800, 1859, 293]);
        // the coarsest exponent agrees with the formula; finer ones may differ by one
        for l in 0..=8 {
            let formula = qmc_log2_samples_formula(l, &p);
            let pinned = schedule_qmc(l, &p).unwrap().log2_n;
            assert_eq!(formula[0], pinned[0]);
            assert!(formula.iter().zip(&pinned).all(|(a, b)| a.abs_diff(*b) <= 1));
        }
    }

    #[test]
    fn literal_cap() {
        let p = ScheduleParams { cap_exponent: Some(0), ..Default::default() };
        assert_eq!(truncation_dimensions(8, &p), vec![4, 16, 64, 256, 256, 256, 256, 256, 256]);
        // a non-default parameter set falls back to the formulas
        assert_eq!(schedule_qmc(3, &p).unwrap().log2_n, qmc_log2_samples_formula(3, &p));
    }

    #[test]
    fn work_counts() {
        let records = [LevelRecord { n: 8, s: 4, h: 0.5 }, LevelRecord { n: 2, s: 16, h: 0.25 }];
        assert_eq!(work(&records), (8 * 4 * 4 + 2 * 16 * 16) as f64);
    }

    #[test]
    fn kind_names_round_trip() {
        for k in EstimatorKind::ALL {
            assert_eq!(k.name().parse::<EstimatorKind>().unwrap(), k);
        }
    }
}
