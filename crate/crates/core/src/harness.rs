//! Convergence studies: data generation, reference values, error versus
//! work records, slope fits and their on-disk artifacts.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cbc::{cbc_construct, LevelClass, SpodWeights};
use crate::config::{Config, Mode};
use crate::error::{Error, Result};
use crate::estimators::{
    mc_estimators, mc_sl, ml_both, schedule_mc, schedule_qmc, sl_parameters, sl_ratio, EstimatorKind,
    EstimatorRun, ForwardModel, NoiseModel, Posterior, ScheduleParams,
};
use crate::field::Law;
use crate::plr::GeneratingVector;

/// Number of leading (pre-asymptotic) records left out of slope fits.
pub const DEFAULT_SKIP: usize = 3;

/// Nonzero entries of the truth parameter used to synthesize data.
pub const TRUTH_ENTRIES: usize = 16;

/// Magnitude of the truth parameter entries.
pub const TRUTH_AMPLITUDE: f64 = 0.3;

// ---------------------------------------------------------------------------
// Generating vectors

/// Generating vectors by `(m, s, level class)`, read from a directory or
/// built on demand.
#[derive(Debug)]
pub struct VectorStore {
    dir: Option<PathBuf>,
    build: bool,
    alpha: u32,
    walsh_constant: f64,
    memo: Mutex<HashMap<(u32, LevelClass), GeneratingVector>>,
    digests: Mutex<BTreeMap<String, String>>,
}

impl VectorStore {
    /// Builds every vector in memory.
    pub fn in_memory(alpha: u32, walsh_constant: f64) -> Self {
        Self::new(None, true, alpha, walsh_constant)
    }

    /// Reads vectors from `dir`; missing files are constructed and written
    /// when `build` is set and are an error otherwise.
    pub fn on_disk(dir: PathBuf, build: bool, alpha: u32, walsh_constant: f64) -> Self {
        Self::new(Some(dir), build, alpha, walsh_constant)
    }

    fn new(dir: Option<PathBuf>, build: bool, alpha: u32, walsh_constant: f64) -> Self {
        VectorStore {
            dir,
            build,
            alpha,
            walsh_constant,
            memo: Mutex::new(HashMap::new()),
            digests: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn file_name(&self, m: u32, s: usize, class: LevelClass) -> String {
        format!("plr_m{m}_s{s}_a{}_c{}_{class}.txt", self.alpha, self.walsh_constant)
    }

    /// SHA-256 of every vector file read or written so far.
    pub fn digests(&self) -> BTreeMap<String, String> {
        self.digests.lock().unwrap().clone()
    }

    pub fn get(&self, m: u32, s: usize, class: LevelClass) -> Result<GeneratingVector> {
        // component-by-component vectors are prefix-stable, so a longer one
        // serves every shorter request
        if let Some(gv) = self.memo.lock().unwrap().get(&(m, class)) {
            if gv.dimension() >= s {
                let gv = gv.truncated(s)?;
                self.record(m, s, class, &gv);
                return Ok(gv);
            }
        }
        let path = self.dir.as_ref().map(|d| d.join(self.file_name(m, s, class)));
        let gv = match &path {
            Some(p) if p.exists() => {
                let gv = GeneratingVector::read_file(p)?;
                if gv.m() != m || gv.alpha() != self.alpha || gv.dimension() < s {
                    return Err(Error::MalformedVector(format!("{} does not match its name", p.display())));
                }
                gv.truncated(s)?
            }
            Some(p) if !self.build => return Err(Error::MissingVector(p.clone())),
            _ => {
                let weights = SpodWeights::for_level(class, s, self.alpha, self.walsh_constant)?;
                let gv = cbc_construct(m, s, &weights)?;
                if let Some(p) = &path {
                    if let Some(parent) = p.parent() {
                        std::fs::create_dir_all(parent)?;
                    }
                    gv.write_file(p)?;
                }
                gv
            }
        };
        self.record(m, s, class, &gv);
        let mut memo = self.memo.lock().unwrap();
        let keep = memo.get(&(m, class)).map_or(true, |old| old.dimension() < gv.dimension());
        if keep {
            memo.insert((m, class), gv.clone());
        }
        Ok(gv)
    }

    fn record(&self, m: u32, s: usize, class: LevelClass, gv: &GeneratingVector) {
        let digest = hex_digest(gv.to_text().as_bytes());
        self.digests.lock().unwrap().insert(self.file_name(m, s, class), digest);
    }
}

fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

// ---------------------------------------------------------------------------
// Records and fits

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRecord {
    pub kind: EstimatorKind,
    #[serde(rename = "L")]
    pub l: u32,
    pub work: f64,
    pub error: f64,
    pub value: f64,
}

pub const CSV_HEADER: &str = "kind,L,work,error,value";

pub fn records_to_csv(records: &[ConvergenceRecord]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(out, "{},{},{},{},{}", r.kind, r.l, r.work, r.error, r.value);
    }
    out
}

pub fn records_from_csv(text: &str) -> Result<Vec<ConvergenceRecord>> {
    let parse_err = |line: usize, message: String| Error::Parse { context: format!("CSV line {line}"), message };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, header)) if header.trim() == CSV_HEADER => {}
        Some((i, header)) => return Err(parse_err(i + 1, format!("expected header {CSV_HEADER:?}, got {header:?}"))),
        None => return Err(parse_err(1, "empty file".into())),
    }
    lines
        .map(|(i, line)| {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 5 {
                return Err(parse_err(i + 1, format!("expected 5 fields, got {}", fields.len())));
            }
            let num = |k: usize| fields[k].parse::<f64>().map_err(|e| parse_err(i + 1, format!("{}: {e}", fields[k])));
            Ok(ConvergenceRecord {
                kind: fields[0].parse().map_err(|e: Error| parse_err(i + 1, e.to_string()))?,
                l: fields[1].parse().map_err(|e| parse_err(i + 1, format!("{}: {e}", fields[1])))?,
                work: num(2)?,
                error: num(3)?,
                value: num(4)?,
            })
        })
        .collect()
}

/// Least-squares slope of `log y` against `log x`.
pub fn fit_log_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), got: y.len() });
    }
    if x.len() < 2 {
        return Err(Error::InsufficientPoints(x.len()));
    }
    if x.iter().chain(y).any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::Config("slope fits need positive finite data".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = crate::sum::mean(&lx);
    let my = crate::sum::mean(&ly);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientPoints(1));
    }
    Ok(sxy / sxx)
}

/// Slope of error against work after dropping the `skip` cheapest records.
pub fn fit_slope(records: &[ConvergenceRecord], skip: usize) -> Result<f64> {
    let mut sorted: Vec<&ConvergenceRecord> = records.iter().collect();
    sorted.sort_by(|a, b| a.work.total_cmp(&b.work));
    let kept = sorted.get(skip..).unwrap_or_default();
    if kept.len() < 2 {
        return Err(Error::InsufficientPoints(kept.len()));
    }
    let work: Vec<f64> = kept.iter().map(|r| r.work).collect();
    let error: Vec<f64> = kept.iter().map(|r| r.error).collect();
    fit_log_slope(&work, &error)
}

// ---------------------------------------------------------------------------
// Data

/// Parameter used to synthesize observations: alternating `+-0.3` in the
/// first 16 coordinates.
pub fn truth_parameter() -> Vec<f64> {
    (0..TRUTH_ENTRIES)
        .map(|j| if j % 2 == 0 { TRUTH_AMPLITUDE } else { -TRUTH_AMPLITUDE })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedData {
    pub gamma: f64,
    pub delta: f64,
    /// Observation of the truth on `level`, before noise.
    pub observation: f64,
    /// Standard normal draw scaled by `sqrt(gamma)`.
    pub noise_draw: f64,
    pub seed: u64,
    pub level: u32,
    pub truth: Vec<f64>,
}

impl GeneratedData {
    pub fn noise_model(&self) -> Result<NoiseModel> {
        NoiseModel::new(self.gamma, self.delta)
    }
}

/// `delta = observation(y*) + sqrt(gamma) z`, `z` standard normal from `seed`.
/// `gamma = 0` yields the noise-free observation.
pub fn generate_data(model: &ForwardModel, gamma: f64, seed: u64, level: u32) -> Result<GeneratedData> {
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(Error::Config(format!("noise covariance must be non-negative, got {gamma}")));
    }
    let truth = truth_parameter();
    if model.spec().s_max() < truth.len() {
        return Err(Error::DimensionMismatch { expected: truth.len(), got: model.spec().s_max() });
    }
    let solution = model.solver(level)?.solve(&truth)?;
    let z: f64 = StandardNormal.sample(&mut ChaCha8Rng::seed_from_u64(seed));
    let noise_draw = gamma.sqrt() * z;
    Ok(GeneratedData {
        gamma,
        delta: solution.observation + noise_draw,
        observation: solution.observation,
        noise_draw,
        seed,
        level,
        truth,
    })
}

// ---------------------------------------------------------------------------
// Studies

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyPlan {
    pub mode: Mode,
    pub law: Law,
    pub gammas: Vec<f64>,
    pub levels: Vec<u32>,
    pub kinds: Vec<EstimatorKind>,
    pub reference_level: u32,
    pub reference_kind: EstimatorKind,
    pub schedule: ScheduleParams,
    pub mc_seed: u64,
    pub mc_repetitions: u32,
    pub noise_seed: u64,
    /// Observed datum; synthesized when absent.
    pub delta: Option<f64>,
    pub eps_z: f64,
    pub out_dir: Option<PathBuf>,
}

impl StudyPlan {
    pub fn from_config(config: &Config, out_dir: Option<PathBuf>) -> Result<Self> {
        config.validate()?;
        Ok(StudyPlan {
            mode: config.study.mode,
            law: config.field.law,
            gammas: config.study.gammas.clone(),
            levels: config.study.levels.clone(),
            kinds: config.study.kinds.clone(),
            reference_level: config.study.reference_level,
            reference_kind: config.study.reference_kind,
            schedule: config.schedule_params()?,
            mc_seed: config.mc.seed,
            mc_repetitions: config.mc.repetitions,
            noise_seed: config.noise.seed,
            delta: if config.noise.generate { None } else { config.noise.delta },
            eps_z: config.estimator.eps_z,
            out_dir,
        })
    }

    fn validate(&self) -> Result<()> {
        if let Some(&top) = self.levels.iter().max() {
            if top >= self.reference_level {
                return Err(Error::Config(format!(
                    "reference level {} must exceed every studied level (max {top})",
                    self.reference_level
                )));
            }
        }
        if self.mode == Mode::Bayes && self.gammas.is_empty() {
            return Err(Error::Config("a Bayesian study needs at least one noise covariance".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyPart {
    /// `None` in forward mode.
    pub gamma: Option<f64>,
    pub data: Option<GeneratedData>,
    pub reference: f64,
    pub records: Vec<ConvergenceRecord>,
    /// Fitted slopes per kind (absent when too few records).
    pub slopes: BTreeMap<String, f64>,
    pub csv_file: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyOutcome {
    pub parts: Vec<StudyPart>,
}

/// Runs one estimator kind at level `l`.
pub fn run_estimator(
    kind: EstimatorKind,
    l: u32,
    post: &Posterior,
    params: &ScheduleParams,
    store: &VectorStore,
    mc_seed: u64,
    mc_repetitions: u32,
) -> Result<EstimatorRun> {
    match kind {
        EstimatorKind::SlRatio => {
            let (s, m) = sl_parameters(l);
            sl_ratio(post, l, s, &store.get(m, s, LevelClass::Base)?)
        }
        EstimatorKind::MlRatio | EstimatorKind::MlSplit => {
            let (ratio, split) = run_ml_qmc(l, post, params, store)?;
            Ok(if kind == EstimatorKind::MlRatio { ratio } else { split })
        }
        EstimatorKind::McSl => mc_sl(post, l, mc_seed, mc_repetitions),
        EstimatorKind::MlmcRatio | EstimatorKind::MlmcSplit => {
            let (ratio, split) = mc_estimators(post, &schedule_mc(l, params)?, mc_seed, mc_repetitions)?;
            Ok(if kind == EstimatorKind::MlmcRatio { ratio } else { split })
        }
    }
}

/// Multilevel QMC ratio and splitting runs sharing one set of solves.
pub fn run_ml_qmc(
    l: u32,
    post: &Posterior,
    params: &ScheduleParams,
    store: &VectorStore,
) -> Result<(EstimatorRun, EstimatorRun)> {
    let schedule = schedule_qmc(l, params)?;
    let gvs = (0..schedule.levels())
        .map(|k| {
            let class = if k == 0 { LevelClass::Base } else { LevelClass::Increment };
            store.get(schedule.log2_n[k], schedule.s[k], class)
        })
        .collect::<Result<Vec<_>>>()?;
    ml_both(post, &schedule, &gvs)
}

fn error_of(run: &EstimatorRun, reference: f64) -> f64 {
    if run.kind.is_monte_carlo() {
        run.rms_error(reference)
    } else {
        (run.value - reference).abs()
    }
}

/// Error versus work records for every requested kind and level.
pub fn study_records(
    plan: &StudyPlan,
    post: &Posterior,
    reference: f64,
    store: &VectorStore,
) -> Result<Vec<ConvergenceRecord>> {
    let mut records = Vec::new();
    let mut shared: HashMap<(bool, u32), (EstimatorRun, EstimatorRun)> = HashMap::new();
    for &kind in &plan.kinds {
        for &l in &plan.levels {
            let run = match kind {
                EstimatorKind::MlRatio | EstimatorKind::MlSplit | EstimatorKind::MlmcRatio | EstimatorKind::MlmcSplit => {
                    let mc = kind.is_monte_carlo();
                    if !shared.contains_key(&(mc, l)) {
                        let pair = if mc {
                            mc_estimators(post, &schedule_mc(l, &plan.schedule)?, plan.mc_seed, plan.mc_repetitions)?
                        } else {
                            run_ml_qmc(l, post, &plan.schedule, store)?
                        };
                        shared.insert((mc, l), pair);
                    }
                    let (ratio, split) = &shared[&(mc, l)];
                    if matches!(kind, EstimatorKind::MlRatio | EstimatorKind::MlmcRatio) {
                        ratio.clone()
                    } else {
                        split.clone()
                    }
                }
                _ => run_estimator(kind, l, post, &plan.schedule, store, plan.mc_seed, plan.mc_repetitions)?,
            };
            records.push(ConvergenceRecord { kind, l, work: run.work, error: error_of(&run, reference), value: run.value });
        }
    }
    Ok(records)
}

fn slopes_by_kind(records: &[ConvergenceRecord]) -> BTreeMap<String, f64> {
    let mut kinds: Vec<EstimatorKind> = records.iter().map(|r| r.kind).collect();
    kinds.dedup();
    kinds
        .into_iter()
        .filter_map(|k| {
            let subset: Vec<ConvergenceRecord> = records.iter().filter(|r| r.kind == k).cloned().collect();
            fit_slope(&subset, DEFAULT_SKIP).ok().map(|s| (k.name().to_string(), s))
        })
        .collect()
}

#[derive(Serialize)]
struct Manifest<'a> {
    plan: &'a StudyPlan,
    config: Option<&'a Config>,
    parts: Vec<ManifestPart<'a>>,
    vector_files: BTreeMap<String, String>,
    wall_clock_seconds: f64,
}

#[derive(Serialize)]
struct ManifestPart<'a> {
    gamma: Option<f64>,
    data: &'a Option<GeneratedData>,
    reference: f64,
    slopes: &'a BTreeMap<String, f64>,
    csv_file: &'a Option<String>,
}

/// Runs a study; with an output directory, writes one CSV per noise level
/// and `manifest.json`.
pub fn run_study(plan: &StudyPlan, model: &ForwardModel, store: &VectorStore, config: Option<&Config>) -> Result<StudyOutcome> {
    plan.validate()?;
    let started = Instant::now();
    let gammas: Vec<Option<f64>> = match plan.mode {
        Mode::Forward => vec![None],
        Mode::Bayes => plan.gammas.iter().map(|&g| Some(g)).collect(),
    };
    let mut parts = Vec::with_capacity(gammas.len());
    for gamma in gammas {
        let data = match gamma {
            Some(g) => Some(match plan.delta {
                Some(delta) => GeneratedData {
                    gamma: g,
                    delta,
                    observation: f64::NAN,
                    noise_draw: f64::NAN,
                    seed: plan.noise_seed,
                    level: plan.reference_level,
                    truth: Vec::new(),
                },
                None => generate_data(model, g, plan.noise_seed, plan.reference_level)?,
            }),
            None => None,
        };
        let noise = data.as_ref().map(|d| d.noise_model()).transpose()?;
        let post = Posterior::new(model, noise).with_eps_z(plan.eps_z);
        let reference = run_estimator(
            plan.reference_kind,
            plan.reference_level,
            &post,
            &plan.schedule,
            store,
            plan.mc_seed,
            plan.mc_repetitions,
        )?
        .value;
        let records = study_records(plan, &post, reference, store)?;
        let csv_file = match &plan.out_dir {
            Some(dir) => {
                let name = match gamma {
                    Some(g) => format!("study_gamma_{g}.csv"),
                    None => "study_forward.csv".to_string(),
                };
                std::fs::create_dir_all(dir)?;
                std::fs::write(dir.join(&name), records_to_csv(&records))?;
                Some(name)
            }
            None => None,
        };
        parts.push(StudyPart { gamma, data, reference, slopes: slopes_by_kind(&records), records, csv_file });
    }
    if let Some(dir) = &plan.out_dir {
        let manifest = Manifest {
            plan,
            config,
            parts: parts
                .iter()
                .map(|p| ManifestPart {
                    gamma: p.gamma,
                    data: &p.data,
                    reference: p.reference,
                    slopes: &p.slopes,
                    csv_file: &p.csv_file,
                })
                .collect(),
            vector_files: store.digests(),
            wall_clock_seconds: started.elapsed().as_secs_f64(),
        };
        write_json(&dir.join("manifest.json"), &manifest)?;
    }
    Ok(StudyOutcome { parts })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Parse { context: "JSON".into(), message: e.to_string() })?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::SolverOptions;
    use crate::field::FieldSpec;
    use rand::Rng;

    fn record(work: f64, error: f64) -> ConvergenceRecord {
        ConvergenceRecord { kind: EstimatorKind::MlSplit, l: 0, work, error, value: 0.0 }
    }

    #[test]
    fn exact_power_law_slope() {
        let records: Vec<_> = (0..8).map(|k| {
            let w = 4f64.powi(k);
            record(w, w.powf(-2.0 / 3.0))
        }).collect();
        assert!((fit_slope(&records, 3).unwrap() + 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn constant_error_has_zero_slope() {
        let records: Vec<_> = (0..6).map(|k| record(2f64.powi(k), 0.1)).collect();
        assert!(fit_slope(&records, 3).unwrap().abs() < 1e-12);
    }

    #[test]
    fn noisy_half_slope() {
        // multiplicative noise of 5% around work^{-1/2}
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let records: Vec<_> = (0..12).map(|k| {
            let w = 2f64.powi(2 * k);
            record(w, w.powf(-0.5) * (1.0 + 0.05 * rng.gen_range(-1.0..1.0)))
        }).collect();
        assert!((fit_slope(&records, 3).unwrap() + 0.5).abs() < 0.05);
    }

    #[test]
    fn too_few_points() {
        let records: Vec<_> = (0..4).map(|k| record(2f64.powi(k), 1.0)).collect();
        assert!(matches!(fit_slope(&records, 3), Err(Error::InsufficientPoints(1))));
    }

    #[test]
    fn csv_round_trip() {
        let records = vec![
            ConvergenceRecord { kind: EstimatorKind::SlRatio, l: 2, work: 4096.0, error: 1.25e-3, value: 0.3333333333333333 },
            ConvergenceRecord { kind: EstimatorKind::MlmcSplit, l: 5, work: 1e9, error: 2e-7, value: -0.1 },
        ];
        let text = records_to_csv(&records);
        assert!(text.starts_with("kind,L,work,error,value\n"));
        assert_eq!(records_from_csv(&text).unwrap(), records);
        assert!(records_from_csv("kind,work\n").is_err());
        assert!(records_from_csv("kind,L,work,error,value\nfoo,1,2,3,4\n").is_err());
    }

    #[test]
    fn data_generation() {
        let model = ForwardModel::new(FieldSpec::affine(32), SolverOptions::default());
        let clean = generate_data(&model, 0.0, 5, 3).unwrap();
        let exact = model.solver(3).unwrap().solve(&truth_parameter()).unwrap().observation;
        assert_eq!(clean.delta, exact);
        let a = generate_data(&model, 1.0, 5, 3).unwrap();
        let b = generate_data(&model, 1.0, 5, 3).unwrap();
        assert_eq!(a, b);
        let c = generate_data(&model, 0.01, 5, 3).unwrap();
        assert!(((a.delta - exact) * 0.1 - (c.delta - exact)).abs() < 1e-12);
    }

    #[test]
    fn vector_store_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let missing = VectorStore::on_disk(dir.path().to_path_buf(), false, 2, 0.1);
        assert!(matches!(missing.get(4, 3, LevelClass::Base), Err(Error::MissingVector(_))));
        let building = VectorStore::on_disk(dir.path().to_path_buf(), true, 2, 0.1);
        let built = building.get(4, 3, LevelClass::Base).unwrap();
        let reader = VectorStore::on_disk(dir.path().to_path_buf(), false, 2, 0.1);
        assert_eq!(reader.get(4, 3, LevelClass::Base).unwrap(), built);
        assert_eq!(building.digests(), reader.digests());
        // prefix of a longer vector
        let long = building.get(4, 6, LevelClass::Base).unwrap();
        assert_eq!(long.truncated(3).unwrap(), built);
    }
}
