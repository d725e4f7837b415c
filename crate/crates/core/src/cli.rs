//! Command-line front end.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 invalid usage or input.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{ArgGroup, Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::estimate::{anova_estimate, read_gmatrix, Design, FamilyDataset};
use crate::gmatrix::{clip_negative_eigenvalues, GMatrix};
use crate::grid::TraitGrid;
use crate::par;
use crate::report::{
    read_report, render_partition_figure, render_study_figure, report_bytes, write_atomic, EstimationSummary,
    FigureSpec, PartitionReport, Provenance, StudyReport, SOFTWARE,
};
use crate::rng::RNG_DESCRIPTION;
use crate::simplicity::MeasureKind;
use crate::simulate::{replicate_dataset, run_study, StudyConfig, StudySummary, GENERATIVE_MODEL};
use crate::spaces::partition;

pub const THREADS_ENV: &str = "GENECON_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "genecon",
    version,
    about = "Model / nearly null space analysis of genetic covariance matrices"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Partition G at one model-space dimension J.
    Analyze(AnalyzeArgs),
    /// Partition G at every J from 0 to K.
    Sweep(SweepArgs),
    /// Run the replicated estimation study.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
#[group(skip)]
#[command(group = ArgGroup::new("source").required(true).multiple(false))]
pub struct InputArgs {
    /// G-matrix JSON: {"dim": K, "entries": [...]}.
    #[arg(long, value_name = "FILE", group = "source")]
    pub g: Option<PathBuf>,
    /// Family CSV (family,individual,t1..tK) to estimate G from.
    #[arg(long, value_name = "FILE", group = "source")]
    pub data: Option<PathBuf>,
    /// Trait grid JSON: {"points": [...]}.
    #[arg(long, value_name = "FILE")]
    pub grid: PathBuf,
    /// Simplicity measure: d1, d2 or sparse.
    #[arg(long, default_value = "d1")]
    pub measure: MeasureKind,
    /// Breeding design of --data: halfsib or fullsib.
    #[arg(long, default_value = "halfsib")]
    pub design: Design,
    /// Relatedness coefficient c overriding the design (G = c * family component).
    #[arg(long = "c", value_name = "C", allow_negative_numbers = true)]
    pub relatedness: Option<f64>,
    /// Eigenvalues below this are reset to zero.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub clip_tol: f64,
    /// Validate inputs without computing.
    #[arg(long)]
    pub dry_run: bool,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Model-space dimension.
    #[arg(long = "J", value_name = "J")]
    pub model_dim: usize,
    /// Report JSON path.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Figure SVG path.
    #[arg(long, value_name = "FILE")]
    pub svg: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Directory for report_JNN.json / figure_JNN.svg; created if absent.
    #[arg(long, value_name = "DIR")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Study config JSON (simulation parameters, reps, null_dim, measure).
    #[arg(long, value_name = "FILE")]
    pub config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the replicate count.
    #[arg(long)]
    pub reps: Option<usize>,
    /// Overrides the nearly-null dimension K - J.
    #[arg(long)]
    pub null_dim: Option<usize>,
    /// Overrides the simplicity measure: d1, d2 or sparse.
    #[arg(long)]
    pub measure: Option<MeasureKind>,
    /// Summary JSON path.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Study figure SVG path.
    #[arg(long, value_name = "FILE")]
    pub svg: Option<PathBuf>,
    /// Replicate whose dataset is written to --dump-csv.
    #[arg(long, value_name = "INDEX", requires = "dump_csv")]
    pub dump_replicate: Option<usize>,
    /// Family CSV for the replicate named by --dump-replicate.
    #[arg(long, value_name = "FILE", requires = "dump_replicate")]
    pub dump_csv: Option<PathBuf>,
    /// Validate the config without running.
    #[arg(long)]
    pub dry_run: bool,
}

/// Parses `args` (including the program name), runs, and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    if let Err(e) = configure_threads_from_env() {
        eprintln!("error: {e}");
        return 2;
    }
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_usage() {
                2
            } else {
                1
            }
        }
    }
}

fn configure_threads_from_env() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .map_err(|_| Error::InvalidParameter(format!("{THREADS_ENV} must be a non-negative integer, got '{raw}'")))?;
    par::configure_threads(threads);
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Analyze(a) => analyze(&a),
        Command::Sweep(s) => sweep(&s),
        Command::Simulate(s) => simulate(&s),
    }
}

struct Loaded {
    grid: TraitGrid,
    g: GMatrix,
    provenance: Provenance,
    estimation: Option<EstimationSummary>,
}

fn read_grid(path: &Path) -> Result<TraitGrid> {
    read_report(path).map_err(|e| match e {
        Error::Parse { message, .. } => Error::Parse {
            path: path.to_path_buf(),
            message: format!("--grid: {message}"),
        },
        other => other,
    })
}

fn validate_input(input: &InputArgs) -> Result<()> {
    if input.clip_tol < 0.0 || !input.clip_tol.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "--clip-tol must be >= 0, got {}",
            input.clip_tol
        )));
    }
    if let Some(c) = input.relatedness {
        if c <= 0.0 || !c.is_finite() {
            return Err(Error::InvalidParameter(format!("--c must be > 0, got {c}")));
        }
    }
    Ok(())
}

fn load(input: &InputArgs) -> Result<Loaded> {
    validate_input(input)?;
    let grid_path = input.grid.as_path();
    let grid = read_grid(grid_path)?;
    let mut provenance = Provenance::new(input.measure, input.clip_tol).input("grid", grid_path.display().to_string());
    let (g, estimation) = match (&input.g, &input.data) {
        (Some(path), None) => {
            provenance = provenance.input("g", path.display().to_string());
            (read_gmatrix(path, Some(&grid), input.clip_tol)?, None)
        }
        (None, Some(path)) => {
            provenance = provenance.input("data", path.display().to_string());
            let data = FamilyDataset::read_csv(path, grid.clone(), input.design, input.relatedness)?;
            let vc = anova_estimate(&data)?;
            provenance.design = Some(data.design());
            provenance.relatedness = Some(data.relatedness());
            let g = clip_negative_eigenvalues(&vc.g_hat_raw, input.clip_tol)?.with_grid(grid.clone())?;
            (g, Some(EstimationSummary::new(&data, &vc)?))
        }
        _ => unreachable!("clap enforces exactly one of --g / --data"),
    };
    Ok(Loaded {
        grid,
        g,
        provenance,
        estimation,
    })
}

fn check_model_dim(j: usize, k: usize) -> Result<()> {
    if j > k {
        return Err(Error::InvalidParameter(format!(
            "--J must be between 0 and K = {k}, got {j}"
        )));
    }
    Ok(())
}

/// Report and figure for one J; shared by analyze and sweep so their outputs agree.
fn partition_outputs(loaded: &Loaded, measure: MeasureKind, j: usize) -> Result<(Vec<u8>, String)> {
    let m = measure.build(&loaded.grid)?;
    let part = partition(&loaded.g, j, &m)?;
    let report = PartitionReport {
        provenance: loaded.provenance.clone(),
        grid: loaded.grid.clone(),
        g: loaded.g.matrix().clone(),
        rank: loaded.g.rank(),
        clipped: loaded.g.clipped().to_vec(),
        estimation: loaded.estimation.clone(),
        partition: part.clone(),
    };
    let title = format!(
        "J = {j}, {} measure, {} {}",
        measure,
        SOFTWARE,
        env!("CARGO_PKG_VERSION")
    );
    let svg = render_partition_figure(&FigureSpec::new(part, loaded.grid.clone()).title(title))?;
    Ok((report_bytes(&report)?, svg))
}

fn analyze(a: &AnalyzeArgs) -> Result<()> {
    let loaded = load(&a.input)?;
    check_model_dim(a.model_dim, loaded.grid.len())?;
    if a.input.dry_run {
        println!("ok: K = {}, J = {}", loaded.grid.len(), a.model_dim);
        return Ok(());
    }
    let (json, svg) = partition_outputs(&loaded, a.input.measure, a.model_dim)?;
    write_atomic(&a.out, &json)?;
    if let Some(path) = &a.svg {
        write_atomic(path, svg.as_bytes())?;
    }
    Ok(())
}

fn sweep(s: &SweepArgs) -> Result<()> {
    let loaded = load(&s.input)?;
    let k = loaded.grid.len();
    if s.input.dry_run {
        println!("ok: K = {k}, {} partitions", k + 1);
        return Ok(());
    }
    std::fs::create_dir_all(&s.out_dir).map_err(|source| Error::Io {
        path: s.out_dir.clone(),
        source,
    })?;
    let outputs = par::try_map_indexed(par::Execution::default(), k + 1, |j| {
        partition_outputs(&loaded, s.input.measure, j)
    })?;
    for (j, (json, svg)) in outputs.iter().enumerate() {
        write_atomic(&s.out_dir.join(format!("report_J{j:02}.json")), json)?;
        write_atomic(&s.out_dir.join(format!("figure_J{j:02}.svg")), svg.as_bytes())?;
    }
    Ok(())
}

fn load_study_config(s: &SimulateArgs) -> Result<StudyConfig> {
    let mut config: StudyConfig = read_report(&s.config)?;
    if let Some(seed) = s.seed {
        config.params.seed = seed;
    }
    if let Some(reps) = s.reps {
        config.reps = reps;
    }
    if let Some(null_dim) = s.null_dim {
        config.null_dim = null_dim;
    }
    if let Some(measure) = s.measure {
        config.measure = measure;
    }
    config.params.validate()?;
    let k = config.params.dim();
    if config.reps == 0 {
        return Err(Error::InvalidParameter("--reps must be at least 1".into()));
    }
    if config.null_dim == 0 || config.null_dim >= k {
        return Err(Error::InvalidParameter(format!(
            "--null-dim must be between 1 and {}, got {}",
            k - 1,
            config.null_dim
        )));
    }
    if let Some(r) = s.dump_replicate {
        if r >= config.reps {
            return Err(Error::InvalidParameter(format!(
                "--dump-replicate must be below reps = {}, got {r}",
                config.reps
            )));
        }
    }
    config.measure.build(&config.params.grid)?;
    Ok(config)
}

fn study_line(summary: &StudySummary) -> String {
    let a = &summary.aggregates;
    let mut line = format!(
        "reps={} negative_min={}/{} ({:.3}) simplest |Gw| mean={:.4} sd={:.4}",
        summary.options.reps,
        a.negative_min_count,
        summary.options.reps,
        a.negative_min_fraction,
        a.simplest_response_norm.mean,
        a.simplest_response_norm.sd
    );
    for (m, s) in a.null_eigenvector_response_norms.iter().enumerate() {
        line.push_str(&format!(
            "; PC{} |Gv| mean={:.4} sd={:.4}",
            summary.model_dim + m + 1,
            s.mean,
            s.sd
        ));
    }
    line.push_str(&format!("; distance mean={:.4}", a.canonical_distance.mean));
    line
}

fn simulate(s: &SimulateArgs) -> Result<()> {
    let config = load_study_config(s)?;
    if s.dry_run {
        println!(
            "ok: K = {}, reps = {}, null_dim = {}, {} families of {}",
            config.params.dim(),
            config.reps,
            config.null_dim,
            config.params.n_families,
            config.params.family_size
        );
        return Ok(());
    }
    let summary = run_study(&config.params, &config.options())?;
    let mut provenance = Provenance::new(config.measure, 0.0).input("config", s.config.display().to_string());
    provenance.seed = Some(config.params.seed);
    provenance.design = Some(config.params.design);
    provenance.relatedness = Some(summary.relatedness);
    provenance.rng = Some(RNG_DESCRIPTION.to_string());
    provenance.generative_model = Some(GENERATIVE_MODEL.to_string());

    let line = study_line(&summary);
    let svg = match &s.svg {
        Some(_) => Some(render_study_figure(&summary)?),
        None => None,
    };
    let report = StudyReport { provenance, summary };
    write_atomic(&s.out, &report_bytes(&report)?)?;
    if let (Some(path), Some(svg)) = (&s.svg, svg) {
        write_atomic(path, svg.as_bytes())?;
    }
    if let (Some(r), Some(path)) = (s.dump_replicate, &s.dump_csv) {
        replicate_dataset(&config.params, r)?.write_csv(path)?;
    }
    println!("{line}");
    Ok(())
}
