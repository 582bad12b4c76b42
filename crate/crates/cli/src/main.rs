//! Command-line runner: reproducible experiment presets plus the `project`
//! and `gap` utilities over saved network checkpoints.

mod presets;
mod table;

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use injflow::geometry::{read_points_csv, sample_box, SamplingLaw};
use injflow::metrics::{estimate_embedding_gap, wasserstein_bound_check, CandidateFamily};
use injflow::{project_to_range, Error, InjectiveNetwork};
use nalgebra::DVector;
use serde::de::DeserializeOwned;
use serde_json::{json, Value};

use presets::{BenchConfig, GapConfig, PresetOutput};
use table::{Cell, Format, Table};

#[derive(Debug)]
pub enum CliError {
    Usage { message: String, line: Option<usize>, column: Option<usize> },
    Io(String),
    Core(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

fn usage(message: impl Into<String>) -> CliError {
    CliError::Usage { message: message.into(), line: None, column: None }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage { .. } => 2,
            CliError::Io(_) => 1,
            CliError::Core(e) => match e {
                Error::Numeric { .. } | Error::Internal(_) | Error::Io(_) | Error::BudgetExceeded { .. } => 1,
                _ => 2,
            },
        }
    }

    fn record(&self) -> Value {
        let mut rec = json!({ "exit_code": self.exit_code() });
        match self {
            CliError::Usage { message, line, column } => {
                rec["kind"] = json!("usage");
                rec["message"] = json!(message);
                if let (Some(l), Some(c)) = (line, column) {
                    rec["line"] = json!(l);
                    rec["column"] = json!(c);
                }
            }
            CliError::Io(m) => {
                rec["kind"] = json!("io");
                rec["message"] = json!(m);
            }
            CliError::Core(e) => {
                rec["kind"] = json!(core_kind(e));
                rec["message"] = json!(e.to_string());
                if let Error::Numeric { stage: Some(s), .. } = e {
                    rec["stage"] = json!(s);
                }
            }
        }
        json!({ "error": rec })
    }
}

fn core_kind(e: &Error) -> &'static str {
    match e {
        Error::InvalidArgument(_) => "invalid_argument",
        Error::InvalidLayer(_) => "invalid_layer",
        Error::UnsupportedLayer(_) => "unsupported_layer",
        Error::InvalidCandidate(_) => "invalid_candidate",
        Error::InvalidConfig(_) => "invalid_config",
        Error::BudgetExceeded { .. } => "budget_exceeded",
        Error::Numeric { .. } => "numeric",
        Error::Internal(_) => "internal",
        Error::Io(_) => "io",
        Error::Parse(_) => "parse",
    }
}

#[derive(Parser, Debug)]
#[command(name = "injflow", version, about = "Injective flow experiments and utilities")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Preset {
    GapVisualization,
    LayerwiseToy,
    TrefoilObstruction,
    ProjectionBench,
}

impl Preset {
    fn name(self) -> &'static str {
        match self {
            Preset::GapVisualization => "gap-visualization",
            Preset::LayerwiseToy => "layerwise-toy",
            Preset::TrefoilObstruction => "trefoil-obstruction",
            Preset::ProjectionBench => "projection-bench",
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Family {
    Affine,
    SmallFlow,
}

impl From<Family> for CandidateFamily {
    fn from(f: Family) -> Self {
        match f {
            Family::Affine => CandidateFamily::Affine,
            Family::SmallFlow => CandidateFamily::SmallFlow,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run an experiment preset and write CSV/JSON data plus summary.json.
    Run {
        preset: Preset,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// JSON or TOML file with preset settings; flags take precedence.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Where layerwise-toy writes the trained network (default OUT/network.json).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        /// Latent dimension for projection-bench.
        #[arg(long)]
        n: Option<usize>,
        /// Trial count for projection-bench.
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Project query points onto the range of a checkpointed network.
    Project {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Headered CSV with one query per row.
        #[arg(long)]
        queries: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Embedding-gap interval between sampled f and a checkpointed model g.
    Gap {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Samples x of K, one per row.
        #[arg(long)]
        k_samples: PathBuf,
        /// Values f(x), row-aligned with --k-samples.
        #[arg(long)]
        f_samples: PathBuf,
        /// Samples of W; defaults to a grid over the checkpoint's latent domain.
        #[arg(long)]
        w_samples: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "affine")]
        family: Family,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T, CliError> {
    let Some(path) = path else { return Ok(T::default()) };
    let text = fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let is_toml = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml"));
    if is_toml {
        toml::from_str(&text).map_err(|e| {
            let (line, column) = e.span().map_or((None, None), |s| {
                let (l, c) = line_col(&text, s.start);
                (Some(l), Some(c))
            });
            CliError::Usage { message: format!("{}: {}", path.display(), e.message()), line, column }
        })
    } else {
        serde_json::from_str(&text).map_err(|e| CliError::Usage {
            message: format!("{}: {e}", path.display()),
            line: Some(e.line()),
            column: Some(e.column()),
        })
    }
}

/// 1-based line and column of a byte offset.
fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

fn read_rows(path: &Path) -> Result<Vec<DVector<f64>>, CliError> {
    let file = fs::File::open(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let rows = read_points_csv(BufReader::new(file))
        .map_err(|e| usage(format!("{}: {e}", path.display())))?;
    Ok(rows.into_iter().map(DVector::from_vec).collect())
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))
}

fn write_json(path: &Path, value: &Value) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

#[allow(clippy::too_many_arguments)]
fn run_preset(
    preset: Preset,
    seed: Option<u64>,
    out: &Path,
    config: Option<&Path>,
    checkpoint: Option<&Path>,
    format: Format,
    n: Option<usize>,
    trials: Option<usize>,
) -> Result<Value, CliError> {
    if preset != Preset::ProjectionBench && (n.is_some() || trials.is_some()) {
        return Err(usage(format!("--n and --trials only apply to projection-bench, not {}", preset.name())));
    }
    if preset != Preset::LayerwiseToy && checkpoint.is_some() {
        return Err(usage(format!("--checkpoint only applies to layerwise-toy, not {}", preset.name())));
    }
    create_dir(out)?;
    let started = Instant::now();
    let (seed, output): (u64, PresetOutput) = match preset {
        Preset::GapVisualization => {
            let mut c: GapConfig = load_config(config)?;
            c.seed = seed.unwrap_or(c.seed);
            (c.seed, presets::run_gap(&c)?)
        }
        Preset::LayerwiseToy => {
            let mut c: injflow::training::TrainingConfig = load_config(config)?;
            c.seed = seed.unwrap_or(c.seed);
            let c = presets::toy_defaults(c);
            let ck = checkpoint.map_or_else(|| out.join("network.json"), Path::to_path_buf);
            (c.seed, presets::run_toy(&c, &ck)?)
        }
        Preset::TrefoilObstruction => {
            let mut c: injflow::training::ObstructionConfig = load_config(config)?;
            c.seed = seed.unwrap_or(c.seed);
            (c.seed, presets::run_obstruction(&c)?)
        }
        Preset::ProjectionBench => {
            let mut c: BenchConfig = load_config(config)?;
            c.seed = seed.unwrap_or(c.seed);
            c.n = n.unwrap_or(c.n);
            c.trials = trials.unwrap_or(c.trials);
            (c.seed, presets::run_bench(&c)?)
        }
    };
    let mut files = Vec::new();
    for t in &output.tables {
        let p = t.write(out, format)?;
        files.push(p.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default());
    }
    let summary = json!({
        "preset": preset.name(),
        "seed": seed,
        "wall_time": started.elapsed().as_secs_f64(),
        "metrics": output.metrics.into_value(),
        "files": files,
    });
    write_json(&out.join("summary.json"), &summary)?;
    Ok(summary)
}

fn run_project(checkpoint: &Path, queries: &Path, out: &Path, format: Format) -> Result<Value, CliError> {
    let net = InjectiveNetwork::load(checkpoint)?;
    let ys = read_rows(queries)?;
    let (m, n) = (net.out_dim(), net.in_dim());
    let mut columns: Vec<String> = (0..m).map(|i| format!("query_{i}")).collect();
    columns.extend((0..n).map(|i| format!("preimage_{i}")));
    columns.extend((0..m).map(|i| format!("rangepoint_{i}")));
    columns.extend(["residual".to_string(), "tie_flag".to_string()]);
    let mut t = Table::new("projection", columns);
    let mut max_residual: f64 = 0.0;
    let mut ties = 0;
    for y in &ys {
        let r = project_to_range(&net, y)?;
        max_residual = max_residual.max(r.residual);
        ties += usize::from(r.tie_flag);
        let mut row: Vec<Cell> = y.iter().map(|&v| Cell::Num(v)).collect();
        row.extend(r.x.iter().map(|&v| Cell::Num(v)));
        row.extend(r.y_hat.iter().map(|&v| Cell::Num(v)));
        row.push(Cell::Num(r.residual));
        row.push(Cell::Int(i64::from(r.tie_flag)));
        t.push(row);
    }
    create_dir(out)?;
    let path = t.write(out, format)?;
    Ok(json!({
        "queries": ys.len(),
        "max_residual": max_residual,
        "ties": ties,
        "output": path.display().to_string(),
    }))
}

fn run_gap(
    checkpoint: &Path,
    k_samples: &Path,
    f_samples: &Path,
    w_samples: Option<&Path>,
    family: CandidateFamily,
    out: &Path,
) -> Result<Value, CliError> {
    let g = InjectiveNetwork::load(checkpoint)?;
    let ks = read_rows(k_samples)?;
    let fs_ = read_rows(f_samples)?;
    if ks.len() != fs_.len() {
        return Err(usage(format!("{} K samples but {} f samples", ks.len(), fs_.len())));
    }
    let pairs: Vec<(DVector<f64>, DVector<f64>)> = ks.into_iter().zip(fs_).collect();
    let ws = match (w_samples, g.latent_domain()) {
        (Some(p), _) => read_rows(p)?,
        (None, Some(dom)) => sample_box(&dom.lo, &dom.hi, 201usize.pow(g.in_dim().min(2) as u32), SamplingLaw::Grid)?
            .into_points(),
        (None, None) => pairs.iter().map(|p| p.0.clone()).collect(),
    };
    let gap = estimate_embedding_gap(&pairs, &g, &ws, family)?;
    let check = wasserstein_bound_check(&pairs, &g, &gap, 0.01)?;
    let w2_key = if check.method == "exact" { "w2_exact" } else { "w2_sliced" };
    let mut v = json!({
        "lower": gap.lower,
        "upper": gap.upper,
        "candidate": gap.candidate.describe(),
        "samples": gap.samples,
        "bound_check": check,
    });
    v[w2_key] = json!(check.w2);
    create_dir(out)?;
    write_json(&out.join("gap.json"), &v)?;
    Ok(v)
}

fn dispatch(cli: Cli) -> Result<Value, CliError> {
    match cli.command {
        Command::Run { preset, seed, out, config, checkpoint, format, n, trials } => {
            run_preset(preset, seed, &out, config.as_deref(), checkpoint.as_deref(), format, n, trials)
        }
        Command::Project { checkpoint, queries, out, format } => run_project(&checkpoint, &queries, &out, format),
        Command::Gap { checkpoint, k_samples, f_samples, w_samples, family, out } => {
            run_gap(&checkpoint, &k_samples, &f_samples, w_samples.as_deref(), family.into(), &out)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = usage(e.to_string().trim_end());
            eprintln!("{}", err.record());
            return ExitCode::from(2);
        }
    };
    match dispatch(cli) {
        Ok(summary) => {
            println!("{}", serde_json::to_string_pretty(&summary).unwrap_or_default());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.record());
            ExitCode::from(e.exit_code())
        }
    }
}
