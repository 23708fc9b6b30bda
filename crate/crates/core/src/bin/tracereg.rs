use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use tracereg::experiments::{
    run_alignment_study, run_glm_vs_linear, run_rate_study, AlignmentStudy, ExperimentReport, GlmVsLinearStudy,
    RateStudy, SampleGrid, StudyKind,
};
use tracereg::expfam::lambda_default;
use tracereg::io::{read_config, read_matrix_csv, read_triplets, write_matrix_csv};
use tracereg::{
    fit, fit_onebit, fit_rrr, Design, Error, ExpFamily, GeneralDesign, OneBitConfig, Problem, RrrDesign,
    SingletonDesign, SolverConfig,
};

#[derive(Parser)]
#[command(name = "tracereg", version, about = "Nuclear-norm regularized generalized trace regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit one model to data files.
    Fit(FitArgs),
    /// Run a replication study and write report.json and results.csv.
    Simulate(SimulateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Model {
    GlmTrace,
    Rrr,
    Onebit,
}

#[derive(Clone, Copy, ValueEnum)]
enum Family {
    Logit,
    Gaussian,
}

#[derive(clap::Args)]
struct FitArgs {
    #[arg(long, value_enum)]
    model: Model,
    #[arg(long, value_enum, default_value = "logit")]
    family: Family,
    /// glm-trace: one flattened (row-major) design matrix per line.
    /// rrr: one covariate vector per line. onebit: `i,j,y` triplets.
    #[arg(long)]
    design: PathBuf,
    /// glm-trace: one response per line. rrr: one row of responses per sample.
    #[arg(long)]
    response: Option<PathBuf>,
    #[arg(long)]
    lambda: Option<f64>,
    /// Use `c * lambda_default` with this constant `c`.
    #[arg(long = "lambda-auto")]
    lambda_auto: Option<f64>,
    /// Box level for onebit (bound on |<Θ, X_i>|).
    #[arg(long = "R")]
    r: Option<f64>,
    /// Shorthand for the outer tolerance.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    inner_tol: Option<f64>,
    #[arg(long)]
    admm_tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Coefficient shape `d1,d2` for glm-trace (default: square).
    #[arg(long)]
    shape: Option<String>,
    /// Side length for onebit (default: largest index + 1).
    #[arg(long)]
    dim: Option<usize>,
    /// `key = value` file; command-line flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Where to write the estimate as CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Study {
    Rate,
    Alignment,
    GlmVsLinear,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    MatrixReg,
    Rrr,
    Onebit,
}

#[derive(clap::Args)]
struct SimulateArgs {
    #[arg(long, value_enum)]
    study: Study,
    #[arg(long, value_enum, default_value = "matrix-reg")]
    kind: Kind,
    /// Falls back to TRACEREG_SEED, then 0.
    #[arg(long)]
    seed: Option<u64>,
    /// Full grids and 100 replications.
    #[arg(long)]
    paper_scale: bool,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    reps: Option<usize>,
    /// Comma-separated dimensions.
    #[arg(long)]
    dims: Option<String>,
    /// Comma-separated sample sizes (rate) or ratios n/(d log d).
    #[arg(long)]
    grid: Option<String>,
    #[arg(long)]
    lambda_c: Option<f64>,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

enum Failure {
    Usage(String),
    Solver(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Solver { .. } => Failure::Solver(e.to_string()),
            _ => Failure::Usage(e.to_string()),
        }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn usage<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(Failure::Usage(msg.into()))
}

/// Flag value, else config value, else `None`.
fn setting<T: FromStr>(flag: Option<T>, cfg: &BTreeMap<String, String>, key: &str) -> CliResult<Option<T>> {
    if flag.is_some() {
        return Ok(flag);
    }
    match cfg.get(key) {
        Some(v) => v.parse().map(Some).or_else(|_| usage(format!("config key {key}: cannot parse {v:?}"))),
        None => Ok(None),
    }
}

fn parse_list<T: FromStr>(s: &str, what: &str) -> CliResult<Vec<T>> {
    s.split(',')
        .map(|x| x.trim().parse().or_else(|_| usage(format!("{what}: cannot parse {x:?}"))))
        .collect()
}

fn response_vector(path: &Path) -> CliResult<Vec<f64>> {
    Ok(read_matrix_csv(path)?.into_vec())
}

fn cmd_fit(a: FitArgs) -> CliResult<()> {
    let cfg = match &a.config {
        Some(p) => read_config(p)?,
        None => BTreeMap::new(),
    };
    let family = match a.family {
        Family::Logit => ExpFamily::BernoulliLogit,
        Family::Gaussian => ExpFamily::GaussianIdentity,
    };
    let problem = match a.model {
        Model::GlmTrace => {
            let x = read_matrix_csv(&a.design)?;
            let (d1, d2) = match &a.shape {
                Some(s) => match parse_list::<usize>(s, "--shape")?.as_slice() {
                    [d1, d2] => (*d1, *d2),
                    _ => return usage("--shape expects d1,d2"),
                },
                None => {
                    let d = (x.cols() as f64).sqrt().round() as usize;
                    if d * d != x.cols() {
                        return usage(format!("{} columns is not a square shape; pass --shape", x.cols()));
                    }
                    (d, d)
                }
            };
            if d1 * d2 != x.cols() {
                return usage(format!("--shape {d1},{d2} does not match {} design columns", x.cols()));
            }
            let Some(resp) = &a.response else { return usage("glm-trace needs --response") };
            let design = GeneralDesign::from_flat(d1, d2, x.into_vec())?;
            Problem::new(Design::General(design), response_vector(resp)?, family)?
        }
        Model::Rrr => {
            let x = read_matrix_csv(&a.design)?;
            let Some(resp) = &a.response else { return usage("rrr needs --response") };
            let y = read_matrix_csv(resp)?;
            if y.rows() != x.rows() {
                return usage(format!("design has {} samples but response has {} rows", x.rows(), y.rows()));
            }
            let q = y.cols();
            Problem::new(Design::Rrr(RrrDesign::new(x, q)?), y.into_vec(), family)?
        }
        Model::Onebit => {
            let dims = a.dim.map(|d| (d, d));
            let t = read_triplets(&a.design, dims)?;
            let d = match a.dim {
                Some(d) => d,
                None => t.cells.iter().map(|&(i, j)| i.max(j)).max().unwrap_or(0) + 1,
            };
            Problem::new(Design::Singleton(SingletonDesign::square(d, t.cells)?), t.responses, family)?
        }
    };

    let lambda = match (setting(a.lambda, &cfg, "lambda")?, setting(a.lambda_auto, &cfg, "lambda_auto")?) {
        (Some(l), _) => l,
        (None, Some(c)) => lambda_default(&problem, c)?,
        (None, None) => return usage("one of --lambda or --lambda-auto is required"),
    };
    let seed = setting(a.seed, &cfg, "seed")?.unwrap_or(0);

    let (result, model) = match a.model {
        Model::GlmTrace | Model::Rrr => {
            let mut sc = SolverConfig::new(lambda);
            sc.seed = seed;
            if let Some(v) = setting(None, &cfg, "alpha")? {
                sc.alpha = v;
            }
            if let Some(v) = setting(None, &cfg, "beta")? {
                sc.beta = v;
            }
            if let Some(v) = setting(a.tol, &cfg, "outer_tol")? {
                sc.outer_tol = v;
            }
            if let Some(v) = setting(a.max_iter, &cfg, "outer_max_iter")? {
                sc.outer_max_iter = v;
            }
            if let Some(v) = setting(a.inner_tol, &cfg, "inner_tol")? {
                sc.inner_tol = v;
            }
            if let Some(v) = setting(None, &cfg, "inner_max_iter")? {
                sc.inner_max_iter = v;
            }
            if let Some(v) = setting(None, &cfg, "dense_limit")? {
                sc.dense_limit = v;
            }
            if let Some(v) = setting(None, &cfg, "paper_literal_scaling")? {
                sc.paper_literal_scaling = v;
            }
            match a.model {
                Model::GlmTrace => (fit(&problem, &sc)?, "glm-trace"),
                _ => (fit_rrr(&problem, &sc)?, "rrr"),
            }
        }
        Model::Onebit => {
            let Some(r) = setting(a.r, &cfg, "R")? else { return usage("onebit needs --R") };
            let mut oc = OneBitConfig::new(lambda, r);
            oc.seed = seed;
            if let Some(v) = setting(a.tol, &cfg, "outer_tol")? {
                oc.outer_tol = v;
            }
            if let Some(v) = setting(a.max_iter, &cfg, "outer_max_iter")? {
                oc.outer_max_iter = v;
            }
            if let Some(v) = setting(a.admm_tol, &cfg, "admm_tol")? {
                oc.admm_tol = v;
            }
            if let Some(v) = setting(None, &cfg, "admm_max_iter")? {
                oc.admm_max_iter = v;
            }
            if let Some(v) = setting(None, &cfg, "rho_admm")? {
                oc.rho_admm = v;
            }
            if let Some(v) = setting(None, &cfg, "gamma_step")? {
                oc.gamma_step = v;
            }
            (fit_onebit(&problem, &oc)?, "onebit")
        }
    };

    write_matrix_csv(&a.out, &result.theta_hat)
        .map_err(|e| Failure::Usage(format!("cannot write {}: {e}", a.out.display())))?;
    let diag = result.diagnostics()?;
    let out = json!({
        "model": model,
        "family": family.name(),
        "lambda": lambda,
        "shape": result.theta_hat.shape(),
        "diagnostics": diag,
    });
    println!("{}", serde_json::to_string_pretty(&out).expect("json values are finite"));
    Ok(())
}

fn cmd_simulate(a: SimulateArgs) -> CliResult<()> {
    let seed = match a.seed {
        Some(s) => s,
        None => match std::env::var("TRACEREG_SEED") {
            Ok(v) => v.trim().parse().or_else(|_| usage(format!("TRACEREG_SEED={v:?} is not an integer")))?,
            Err(_) => 0,
        },
    };
    std::fs::create_dir_all(&a.out_dir)
        .map_err(|e| Failure::Usage(format!("cannot create {}: {e}", a.out_dir.display())))?;
    let kind = match a.kind {
        Kind::MatrixReg => StudyKind::MatrixReg,
        Kind::Rrr => StudyKind::Rrr,
        Kind::Onebit => StudyKind::Onebit,
    };
    let dims = a.dims.as_deref().map(|s| parse_list::<usize>(s, "--dims")).transpose()?;
    let report: ExperimentReport = match a.study {
        Study::Rate => {
            let mut s = RateStudy::preset(kind, a.paper_scale, seed);
            if let Some(g) = &a.grid {
                s.grid = match s.grid {
                    SampleGrid::Counts(_) => {
                        SampleGrid::Counts(parse_list(g, "--grid")?)
                    }
                    SampleGrid::Ratios(_) => {
                        SampleGrid::Ratios(parse_list(g, "--grid")?)
                    }
                };
            }
            s.dims = dims.unwrap_or(s.dims);
            s.reps = a.reps.unwrap_or(s.reps);
            s.lambda_c = a.lambda_c.unwrap_or(s.lambda_c);
            s.jobs = a.jobs;
            run_rate_study(&s)?
        }
        Study::Alignment => {
            let mut s = AlignmentStudy::preset(kind, a.paper_scale, seed)?;
            if let Some(g) = &a.grid {
                s.ratio_grid = parse_list(g, "--grid")?;
            }
            s.dims = dims.unwrap_or(s.dims);
            s.reps = a.reps.unwrap_or(s.reps);
            s.jobs = a.jobs;
            run_alignment_study(&s)?
        }
        Study::GlmVsLinear => {
            let mut s = GlmVsLinearStudy::preset(a.paper_scale, seed);
            if let Some(g) = &a.grid {
                s.ratio_grid = parse_list(g, "--grid")?;
            }
            s.dims = dims.unwrap_or(s.dims);
            s.reps = a.reps.unwrap_or(s.reps);
            s.jobs = a.jobs;
            run_glm_vs_linear(&s)?
        }
    };
    let write = |name: &str, body: String| {
        let path = a.out_dir.join(name);
        std::fs::write(&path, body).map_err(|e| Failure::Usage(format!("cannot write {}: {e}", path.display())))
    };
    write("report.json", report.to_json()?)?;
    write("results.csv", report.to_csv())?;
    print!("{}", report.summary_table());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Simulate(a) => cmd_simulate(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Solver(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
    }
}
