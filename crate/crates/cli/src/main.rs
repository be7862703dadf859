use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gbht::{
    anomaly_scores, arithmetic_grid, auc, contamination_threshold, cross_validate, evaluate, fit_gbht, load_csv,
    load_model, save_model, write_csv, CvRow, Dataset, GbhtConfig, LearnerMode, Matrix, SyntheticKind, SyntheticType,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

const REPORT_FORMAT: u32 = 1;

#[derive(Parser)]
#[command(
    name = "gbht",
    version,
    about = "Gradient boosted histogram-transform density estimation"
)]
struct Cli {
    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads; 0 picks the number of cores.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a synthetic dataset.
    Synth(SynthArgs),
    /// Fit a model and save it as JSON.
    Fit(FitArgs),
    /// Cross-validate the stretching range over a grid.
    Cv(CvArgs),
    /// Score a saved model on test data.
    Eval(EvalArgs),
    /// Anomaly scores and flags for each row.
    Score(ScoreArgs),
    /// Density of a 1-D model on an even grid.
    Curve(CurveArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long = "type")]
    kind: SyntheticType,
    #[arg(long)]
    d: usize,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long = "T")]
    iterations: usize,
    #[arg(long, allow_negative_numbers = true)]
    smin: f64,
    #[arg(long, allow_negative_numbers = true)]
    smax: f64,
    #[arg(long)]
    mode: Option<LearnerMode>,
    #[arg(long)]
    shrinkage: Option<f64>,
    #[arg(long)]
    floor: Option<f64>,
    #[arg(long)]
    model: PathBuf,
}

#[derive(Args)]
struct CvArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long = "T")]
    iterations: usize,
    /// `start:step:stop`, inclusive.
    #[arg(long, allow_hyphen_values = true)]
    smin_grid: String,
    #[arg(long, allow_hyphen_values = true)]
    gap_grid: String,
    #[arg(long, default_value_t = 3)]
    folds: usize,
    #[arg(long)]
    report: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    test: PathBuf,
    /// Synthetic type the test data came from; enables MAE.
    #[arg(long, requires = "truth_d")]
    truth_type: Option<SyntheticType>,
    #[arg(long, requires = "truth_type")]
    truth_d: Option<usize>,
    #[arg(long)]
    report: PathBuf,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Flag rows whose density is at most this level.
    #[arg(long, conflicts_with = "contamination", required_unless_present = "contamination")]
    rho: Option<f64>,
    /// Flag this fraction of rows with the lowest density.
    #[arg(long)]
    contamination: Option<f64>,
    /// Label column (header name or zero-based index); enables AUC.
    #[arg(long)]
    labels: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CurveArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, allow_negative_numbers = true)]
    lo: f64,
    #[arg(long, allow_negative_numbers = true)]
    hi: f64,
    #[arg(long)]
    res: usize,
    #[arg(long)]
    out: PathBuf,
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<gbht::Error> for Failure {
    fn from(e: gbht::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build_global()
        .map_err(|e| Failure::Runtime(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cli.seed);
    match cli.command {
        Command::Synth(a) => synth(a, &mut rng),
        Command::Fit(a) => fit(a, cli.seed, &mut rng),
        Command::Cv(a) => cv(a, cli.seed, &mut rng),
        Command::Eval(a) => eval(a),
        Command::Score(a) => score(a),
        Command::Curve(a) => curve(a),
    }
}

fn synth(a: SynthArgs, rng: &mut ChaCha8Rng) -> Result<(), Failure> {
    let kind = SyntheticKind::new(a.kind, a.d).map_err(|e| usage(e.to_string()))?;
    if a.n == 0 {
        return Err(usage("--n must be positive"));
    }
    let data = kind.sample(a.n, rng);
    write_csv(&a.out, &Dataset::unlabeled(data))?;
    println!("rows {}", a.n);
    println!("columns {}", a.d);
    Ok(())
}

fn fit(a: FitArgs, seed: u64, rng: &mut ChaCha8Rng) -> Result<(), Failure> {
    let defaults = GbhtConfig::default();
    let cfg = GbhtConfig {
        iterations: a.iterations,
        s_min: a.smin,
        s_max: a.smax,
        learner_mode: a.mode.unwrap_or(defaults.learner_mode),
        shrinkage: a.shrinkage.unwrap_or(defaults.shrinkage),
        density_floor: a.floor.unwrap_or(defaults.density_floor),
        seed,
        ..defaults
    };
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let data = load_csv(&a.data, None)?.matrix;
    let model = fit_gbht(&data, &cfg, rng)?;
    save_model(&model, &a.model)?;
    let trace = model.train_nll_trace();
    println!("train_nll_initial {}", trace[0]);
    println!("train_nll_final {}", trace[trace.len() - 1]);
    Ok(())
}

fn parse_grid(flag: &str, text: &str) -> Result<Vec<f64>, Failure> {
    let parts: Vec<&str> = text.split(':').collect();
    let bad = || usage(format!("{flag} expects start:step:stop, got {text:?}"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let mut v = [0.0; 3];
    for (slot, p) in v.iter_mut().zip(&parts) {
        *slot = p.trim().parse().map_err(|_| bad())?;
    }
    arithmetic_grid(v[0], v[1], v[2]).map_err(|e| usage(format!("{flag}: {e}")))
}

#[derive(Serialize)]
struct CvReport<'a> {
    chosen_s_min: f64,
    chosen_s_max: f64,
    chosen_anll: f64,
    folds: usize,
    rows: &'a [CvRow],
    config: GbhtConfig,
    format: u32,
}

fn cv(a: CvArgs, seed: u64, rng: &mut ChaCha8Rng) -> Result<(), Failure> {
    let smin_grid = parse_grid("--smin-grid", &a.smin_grid)?;
    let gap_grid = parse_grid("--gap-grid", &a.gap_grid)?;
    if a.folds < 2 {
        return Err(usage("--folds must be at least 2"));
    }
    let base = GbhtConfig {
        iterations: a.iterations,
        seed,
        ..GbhtConfig::default()
    };
    base.validate().map_err(|e| usage(e.to_string()))?;
    let data = load_csv(&a.data, None)?.matrix;
    let result = cross_validate(&data, &base, &smin_grid, &gap_grid, a.folds, rng)?;
    let best = result.chosen_row();
    let report = CvReport {
        chosen_s_min: result.chosen_s_min,
        chosen_s_max: result.chosen_s_max,
        chosen_anll: best.mean_anll,
        folds: result.folds,
        rows: &result.rows,
        config: base,
        format: REPORT_FORMAT,
    };
    write_json(&a.report, &report)?;
    println!("s_min {}", result.chosen_s_min);
    println!("s_max {}", result.chosen_s_max);
    println!("cv_anll {}", best.mean_anll);
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::Runtime(e.to_string()))?;
    write_text(path, &text)
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

fn eval(a: EvalArgs) -> Result<(), Failure> {
    let truth = match (a.truth_type, a.truth_d) {
        (Some(t), Some(d)) => Some(SyntheticKind::new(t, d).map_err(|e| usage(e.to_string()))?),
        _ => None,
    };
    let model = load_model(&a.model)?;
    let test = load_csv(&a.test, None)?.matrix;
    let report = evaluate(&model, &test, truth.as_ref())?;
    write_text(&a.report, &report.to_json())?;
    println!("anll {}", report.anll);
    if let Some(m) = report.mae {
        println!("mae {m}");
    }
    println!("n_test {}", report.n_test);
    Ok(())
}

fn score(a: ScoreArgs) -> Result<(), Failure> {
    if let Some(rho) = a.rho {
        if !(rho >= 0.0 && rho.is_finite()) {
            return Err(usage("--rho must be a nonnegative number"));
        }
    }
    if let Some(q) = a.contamination {
        if !(0.0..=1.0).contains(&q) {
            return Err(usage("--contamination must lie in [0, 1]"));
        }
    }
    let model = load_model(&a.model)?;
    let ds = load_csv(&a.data, a.labels.as_deref())?;
    let scores = anomaly_scores(&model, &ds.matrix)?;
    let densities: Vec<f64> = scores.iter().map(|s| -s).collect();
    let threshold = match (a.rho, a.contamination) {
        (Some(rho), _) => rho,
        (None, Some(q)) => contamination_threshold(&densities, q)?,
        (None, None) => unreachable!("clap requires one of --rho/--contamination"),
    };
    let mut out = String::from("score,flag\n");
    let mut flagged = 0;
    for (s, f) in scores.iter().zip(&densities) {
        let flag = *f <= threshold;
        flagged += flag as usize;
        let _ = writeln!(out, "{s},{}", flag as u8);
    }
    write_text(&a.out, &out)?;
    println!("threshold {threshold}");
    println!("flagged {flagged}");
    if let Some(labels) = &ds.labels {
        println!("auc {}", auc(&scores, labels)?);
    }
    Ok(())
}

fn curve(a: CurveArgs) -> Result<(), Failure> {
    if !(a.lo.is_finite() && a.hi.is_finite() && a.lo < a.hi) {
        return Err(usage("--lo must be below --hi"));
    }
    if a.res == 0 {
        return Err(usage("--res must be positive"));
    }
    let model = load_model(&a.model)?;
    if model.dim() != 1 {
        return Err(Failure::Runtime(format!(
            "density curves need a 1-D model, got dimension {}",
            model.dim()
        )));
    }
    let xs: Vec<f64> = (0..=a.res)
        .map(|i| a.lo + (a.hi - a.lo) * i as f64 / a.res as f64)
        .collect();
    let densities = model.densities(&Matrix::new(xs.len(), 1, xs.clone())?)?;
    let mut out = String::from("x,density\n");
    for (x, f) in xs.iter().zip(&densities) {
        let _ = writeln!(out, "{x},{f}");
    }
    write_text(&a.out, &out)?;
    let peak = densities.iter().copied().fold(0.0, f64::max);
    println!("points {}", xs.len());
    println!("peak_density {peak}");
    Ok(())
}
