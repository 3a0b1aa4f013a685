//! TOML run configuration.
//!
//! Every section and key is optional; missing values take the defaults of
//! the reference study.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cbc::DEFAULT_WALSH_CONSTANT;
use crate::error::{Error, Result};
use crate::estimators::{EstimatorKind, ScheduleParams, DEFAULT_EPS_Z};
use crate::fem::{QuadOrder, SolverOptions, DEFAULT_TOLERANCE};
use crate::field::{FieldSpec, Law};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub field: FieldConfig,
    pub fem: FemConfig,
    pub noise: NoiseConfig,
    pub schedule: ScheduleConfig,
    pub estimator: EstimatorConfig,
    pub mc: McConfig,
    pub cbc: CbcConfig,
    pub study: StudyConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldConfig {
    pub law: Law,
    /// Nominal value of the affine law; ignored for the log-affine law.
    pub u0: f64,
    pub s_max: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FemConfig {
    pub tol: f64,
    pub quad_order: u32,
    pub max_level: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub gamma: f64,
    /// Observed datum; required unless `generate` is set.
    pub delta: Option<f64>,
    pub generate: bool,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    #[serde(rename = "L")]
    pub l: u32,
    pub p0: f64,
    pub pt: f64,
    pub cap_exponent: Option<i32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    pub kind: EstimatorKind,
    pub eps_z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McConfig {
    pub repetitions: u32,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CbcConfig {
    pub alpha: u32,
    pub walsh_c: f64,
    /// Directory holding generating vector files, relative to the output
    /// directory unless absolute.
    pub dir: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Forward,
    Bayes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub mode: Mode,
    pub gammas: Vec<f64>,
    pub levels: Vec<u32>,
    pub kinds: Vec<EstimatorKind>,
    pub reference_level: u32,
    pub reference_kind: EstimatorKind,
}

impl Default for FieldConfig {
    fn default() -> Self {
        FieldConfig { law: Law::Affine, u0: 0.5, s_max: 1024 }
    }
}

impl Default for FemConfig {
    fn default() -> Self {
        FemConfig { tol: DEFAULT_TOLERANCE, quad_order: 2, max_level: 7 }
    }
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig { gamma: 1.0, delta: None, generate: true, seed: 1 }
    }
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        let p = ScheduleParams::default();
        ScheduleConfig { l: 5, p0: p.p0, pt: p.pt, cap_exponent: None }
    }
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig { kind: EstimatorKind::MlSplit, eps_z: DEFAULT_EPS_Z }
    }
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig { repetitions: 5, seed: 2024 }
    }
}

impl Default for CbcConfig {
    fn default() -> Self {
        CbcConfig { alpha: 2, walsh_c: DEFAULT_WALSH_CONSTANT, dir: "vectors".into() }
    }
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            mode: Mode::Bayes,
            gammas: vec![1.0],
            levels: (0..=5).collect(),
            kinds: vec![EstimatorKind::SlRatio, EstimatorKind::MlRatio, EstimatorKind::MlSplit],
            reference_level: 6,
            reference_kind: EstimatorKind::MlSplit,
        }
    }
}

impl Default for Config {
    fn default() -> Self {
        Config {
            field: FieldConfig::default(),
            fem: FemConfig::default(),
            noise: NoiseConfig::default(),
            schedule: ScheduleConfig::default(),
            estimator: EstimatorConfig::default(),
            mc: McConfig::default(),
            cbc: CbcConfig::default(),
            study: StudyConfig::default(),
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Config = toml::from_str(text)
            .map_err(|e| Error::Config(e.to_string().trim_end().to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.solver_options()?;
        self.schedule_params()?;
        if self.field.s_max == 0 {
            return Err(Error::Config("field.s_max must be positive".into()));
        }
        if self.field.law == Law::Affine && !(self.field.u0 > 0.0) {
            return Err(Error::Config("field.u0 must be positive".into()));
        }
        if self.fem.max_level > crate::fem::MAX_LEVEL {
            return Err(Error::Config(format!("fem.max_level must not exceed {}", crate::fem::MAX_LEVEL)));
        }
        if !(self.noise.gamma > 0.0) {
            return Err(Error::Config("noise.gamma must be positive".into()));
        }
        if !self.noise.generate && self.noise.delta.is_none() {
            return Err(Error::Config("noise.delta is required when noise.generate = false".into()));
        }
        if !(self.estimator.eps_z >= 0.0) {
            return Err(Error::Config("estimator.eps_z must be non-negative".into()));
        }
        if self.mc.repetitions == 0 {
            return Err(Error::Config("mc.repetitions must be at least 1".into()));
        }
        if self.cbc.alpha == 0 || !(self.cbc.walsh_c > 0.0) {
            return Err(Error::Config("cbc.alpha must be >= 1 and cbc.walsh_c positive".into()));
        }
        if self.study.gammas.iter().any(|g| !(*g > 0.0)) {
            return Err(Error::Config("study.gammas must be positive".into()));
        }
        if let Some(&top) = self.study.levels.iter().max() {
            if top >= self.study.reference_level {
                return Err(Error::Config(format!(
                    "study.reference_level ({}) must exceed every studied level (max {top})",
                    self.study.reference_level
                )));
            }
        }
        if self.study.reference_level > self.fem.max_level {
            return Err(Error::Config("study.reference_level exceeds fem.max_level".into()));
        }
        Ok(())
    }

    pub fn field_spec(&self) -> FieldSpec {
        FieldSpec::new(self.field.s_max, self.field.u0, self.field.law)
    }

    pub fn solver_options(&self) -> Result<SolverOptions> {
        if !(self.fem.tol > 0.0 && self.fem.tol < 1.0) {
            return Err(Error::Config("fem.tol must lie in (0, 1)".into()));
        }
        Ok(SolverOptions { tolerance: self.fem.tol, quad: QuadOrder::from_points(self.fem.quad_order)? })
    }

    pub fn schedule_params(&self) -> Result<ScheduleParams> {
        let p = ScheduleParams {
            p0: self.schedule.p0,
            pt: self.schedule.pt,
            cap_exponent: self.schedule.cap_exponent,
            ..ScheduleParams::default()
        };
        if !(p.p0 > 0.0 && p.p0 < 1.0 && p.pt > 0.0 && p.pt < 1.0) {
            return Err(Error::Config("schedule.p0 and schedule.pt must lie in (0, 1)".into()));
        }
        Ok(p)
    }
}
