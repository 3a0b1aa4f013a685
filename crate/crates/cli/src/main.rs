use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mlhoqmc::cbc::{cbc_construct_with_scores, LevelClass, SpodWeights, DEFAULT_WALSH_CONSTANT};
use mlhoqmc::config::Config;
use mlhoqmc::error::{Error, Result};
use mlhoqmc::estimators::ForwardModel;
use mlhoqmc::harness::{
    fit_slope, generate_data, records_from_csv, run_study, write_json, StudyPlan, VectorStore, DEFAULT_SKIP,
};
use mlhoqmc::plr::{interlaced_points, GeneratingVector};

#[derive(Parser)]
#[command(name = "mlhoqmc", version, about = "Multilevel higher-order QMC for parametric diffusion")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// TOML configuration file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Directory for generated files
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// Construct generating vectors that are not on disk
    #[arg(long, global = true)]
    build_cbc: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Construct a generating vector by fast CBC
    Cbc {
        #[arg(long)]
        m: u32,
        #[arg(long)]
        s: usize,
        #[arg(long, default_value_t = 2)]
        alpha: u32,
        #[arg(long, default_value_t = DEFAULT_WALSH_CONSTANT)]
        walsh_c: f64,
        #[arg(long, default_value = "base")]
        level_class: LevelClass,
        /// Output file (default: stdout)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the points of an interlaced rule as CSV
    Points {
        /// Generating vector file
        #[arg(long)]
        vector: PathBuf,
        /// Only the first N points
        #[arg(long)]
        count: Option<usize>,
    },
    /// Solve the forward problem for one parameter
    Forward {
        #[arg(long, default_value_t = 3)]
        level: u32,
        /// Comma separated parameter values in [-1/2, 1/2]
        #[arg(long, default_value = "")]
        y: String,
    },
    /// Run an error versus work study (CSV and manifest in --out-dir)
    Study,
    /// Fit error versus work slopes from a study CSV
    Fit {
        csv: PathBuf,
        #[arg(long, default_value_t = DEFAULT_SKIP)]
        skip: usize,
    },
    /// Synthesize an observation from the truth parameter
    GenData {
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Solve level (default: the study's reference level)
        #[arg(long)]
        level: Option<u32>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 3 } else { 2 })
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let config = match &cli.global.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    if let Some(threads) = cli.global.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::Config(e.to_string()))?;
    }
    let out_dir = &cli.global.out_dir;
    match cli.command {
        Command::Cbc { m, s, alpha, walsh_c, level_class, out } => {
            let weights = SpodWeights::for_level(level_class, s, alpha, walsh_c)?;
            let (gv, scores) = cbc_construct_with_scores(m, s, &weights)?;
            match out {
                Some(path) => {
                    gv.write_file(&path)?;
                    let score = scores.last().map_or(0.0, |q| q.0);
                    println!("wrote {} (criterion {score:e})", path.display());
                }
                None => print!("{}", gv.to_text()),
            }
        }
        Command::Points { vector, count } => {
            let gv = GeneratingVector::read_file(&vector)?;
            let points = interlaced_points(&gv)?;
            let limit = count.unwrap_or(points.n_points()).min(points.n_points());
            for n in 0..limit {
                let row: Vec<String> = points.point(n).iter().map(f64::to_string).collect();
                println!("{}", row.join(","));
            }
        }
        Command::Forward { level, y } => {
            let y = parse_vector(&y)?;
            let model = ForwardModel::new(config.field_spec(), config.solver_options()?);
            let solution = model.solver(level)?.solve(&y)?;
            let report = serde_json::json!({
                "level": level,
                "h": solution.level.h(),
                "qoi": solution.qoi,
                "observation": solution.observation,
                "iterations": solution.iterations,
            });
            println!("{}", serde_json::to_string_pretty(&report).expect("json"));
        }
        Command::Study => {
            let store = vector_store(&config, out_dir, cli.global.build_cbc);
            let model = ForwardModel::new(config.field_spec(), config.solver_options()?);
            let plan = StudyPlan::from_config(&config, Some(out_dir.clone()))?;
            let outcome = run_study(&plan, &model, &store, Some(&config))?;
            for part in &outcome.parts {
                let label = part.gamma.map_or("forward".to_string(), |g| format!("gamma = {g}"));
                println!("{label}: reference {}", part.reference);
                for (kind, slope) in &part.slopes {
                    println!("  {kind:<11} slope {slope:.3}");
                }
                if let Some(file) = &part.csv_file {
                    println!("  wrote {}", out_dir.join(file).display());
                }
            }
        }
        Command::Fit { csv, skip } => {
            let text = std::fs::read_to_string(&csv)?;
            let records = records_from_csv(&text)?;
            let mut kinds: Vec<_> = records.iter().map(|r| r.kind).collect();
            kinds.dedup();
            for kind in kinds {
                let subset: Vec<_> = records.iter().filter(|r| r.kind == kind).cloned().collect();
                match fit_slope(&subset, skip) {
                    Ok(slope) => println!("{kind},{slope}"),
                    Err(e) => println!("{kind},n/a ({e})"),
                }
            }
        }
        Command::GenData { gamma, seed, level } => {
            let model = ForwardModel::new(config.field_spec(), config.solver_options()?);
            let data = generate_data(
                &model,
                gamma.unwrap_or(config.noise.gamma),
                seed.unwrap_or(config.noise.seed),
                level.unwrap_or(config.study.reference_level),
            )?;
            std::fs::create_dir_all(out_dir)?;
            let path = out_dir.join("data.json");
            write_json(&path, &data)?;
            println!("{}", serde_json::to_string_pretty(&data).expect("json"));
        }
    }
    Ok(())
}

fn vector_store(config: &Config, out_dir: &Path, build: bool) -> VectorStore {
    let dir = Path::new(&config.cbc.dir);
    let dir = if dir.is_absolute() { dir.to_path_buf() } else { out_dir.join(dir) };
    VectorStore::on_disk(dir, build, config.cbc.alpha, config.cbc.walsh_c)
}

fn parse_vector(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            let v = s
                .parse::<f64>()
                .map_err(|e| Error::Config(format!("bad parameter value {s:?}: {e}")))?;
            if v.abs() > 0.5 {
                return Err(Error::Config(format!("parameter value {v} is outside [-1/2, 1/2]")));
            }
            Ok(v)
        })
        .collect()
}
