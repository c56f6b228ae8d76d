use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fbm_core::appendix::{verify_appendix_range, AppendixReport};
use fbm_core::collocation::gauss_tableau;
use fbm_core::diagnostics::{write_ledger_csv, EnergySummary};
use fbm_core::error::Error;
use fbm_core::ics::load_initial_state;
use fbm_core::model::GeneratorModel;
use fbm_core::params::PhysicalParams;
use fbm_core::sim::{
    compare_runs, convergence_study, run, run_into, thread_cap, CompareMetric, ConvergenceSpec, CsvFrameWriter,
    DiagnosticFlags, Method, PcStart, RunConfig, RunSummary,
};

#[derive(Parser)]
#[command(name = "fbm-sim", version, about = "Synchronous generator simulations with structure-preserving integrators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one trajectory and write its frames as CSV.
    Simulate(SimulateArgs),
    /// Observed orders of convergence against a fine Gauss reference.
    Convergence(ConvergenceArgs),
    /// Run two configurations and write their frame-by-frame discrepancy.
    Compare(CompareArgs),
    /// Print a Gauss collocation tableau.
    Tableau {
        #[arg(long)]
        stages: usize,
    },
    /// Check the Legendre, determinant and stability-limit identities.
    VerifyAppendix {
        #[arg(long, default_value_t = 6)]
        max_stages: usize,
    },
}

#[derive(Args)]
struct SimulateArgs {
    /// Run configuration file; replaces the individual run flags.
    #[arg(long, conflicts_with_all = ["method", "h", "t_end"])]
    config: Option<PathBuf>,
    /// pc1, pc2 or gauss:S
    #[arg(long, required_unless_present = "config")]
    method: Option<Method>,
    #[arg(long, required_unless_present = "config")]
    h: Option<f64>,
    #[arg(long, required_unless_present = "config")]
    t_end: Option<f64>,
    #[arg(long, default_value_t = 1)]
    stride: u64,
    /// `paper-ics` or an initial-state file.
    #[arg(long, default_value = "paper-ics")]
    ics: String,
    /// Parameter preset name or parameter file.
    #[arg(long, default_value = "fbm-ssr")]
    params: String,
    /// Start predictor-corrector runs from the expanded reduced state.
    #[arg(long)]
    reconstructed_start: bool,
    /// Frame CSV path, `-` for standard output.
    #[arg(long, default_value = "-")]
    out: String,
    /// Record the energy ledger.
    #[arg(long)]
    ledger: bool,
    /// Ledger CSV path (default: next to the frame file).
    #[arg(long)]
    ledger_out: Option<PathBuf>,
    /// Track Dirac membership residuals at the stage points.
    #[arg(long)]
    dirac: bool,
    /// Report the largest constraint residual.
    #[arg(long)]
    constraint: bool,
    /// Allow horizons beyond 10 s.
    #[arg(long)]
    long: bool,
}

#[derive(Args)]
struct ConvergenceArgs {
    #[arg(long)]
    method: Method,
    /// Comma-separated step sizes.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    h_list: Vec<f64>,
    #[arg(long)]
    t_end: f64,
    #[arg(long, default_value_t = 3)]
    ref_stages: usize,
    #[arg(long)]
    ref_h: f64,
    #[arg(long, default_value = "paper-ics")]
    ics: String,
    #[arg(long, default_value = "fbm-ssr")]
    params: String,
    /// Report path (default: standard output).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// omega or shared
    #[arg(long, default_value = "omega")]
    metric: CompareMetric,
}

enum Failure {
    Usage(String),
    Numerical(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidInput(_)
            | Error::Parse(_)
            | Error::UnsupportedStages { .. }
            | Error::InvalidParameter { .. }
            | Error::SchemaMismatch(_) => Failure::Usage(e.to_string()),
            _ => Failure::Numerical(e.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Numerical(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Convergence(a) => convergence(a),
        Command::Compare(a) => compare(a),
        Command::Tableau { stages } => tableau(stages),
        Command::VerifyAppendix { max_stages } => verify(max_stages),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn simulate(a: SimulateArgs) -> Result<(), Failure> {
    let config = match &a.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig {
            stride: a.stride,
            params: a.params.clone(),
            initial_state: a.ics.clone(),
            pc_start: if a.reconstructed_start { PcStart::Reconstructed } else { PcStart::Given },
            diagnostics: DiagnosticFlags { ledger: a.ledger, dirac: a.dirac, constraint: a.constraint },
            long: a.long,
            ..RunConfig::new(a.method.expect("required"), a.h.expect("required"), a.t_end.expect("required"))
        },
    };
    config.validate()?;

    let (summary, ledger, dirac) = if a.out == "-" {
        let mut w = CsvFrameWriter::new(BufWriter::new(io::stdout().lock()));
        let r = run_into(&config, &mut w)?;
        w.into_inner().flush()?;
        r
    } else {
        let mut w = CsvFrameWriter::new(BufWriter::new(File::create(&a.out)?));
        let r = run_into(&config, &mut w)?;
        w.into_inner().flush()?;
        r
    };

    report_summary(&summary);
    if config.diagnostics.constraint {
        match summary.max_constraint {
            Some(c) => eprintln!("max relative constraint residual: {c:.3e}"),
            None => eprintln!("max relative constraint residual: n/a (full-model run)"),
        }
    }
    if let Some(d) = dirac {
        eprintln!("max Dirac membership residual: {d:.3e}");
    }
    if let Some(ledger) = ledger {
        let path = a.ledger_out.clone().unwrap_or_else(|| ledger_path(&a.out));
        let mut w = BufWriter::new(File::create(&path)?);
        write_ledger_csv(&mut w, &ledger.entries)?;
        w.flush()?;
        report_ledger(&ledger, &path);
    }
    Ok(())
}

fn ledger_path(out: &str) -> PathBuf {
    if out == "-" {
        return PathBuf::from("ledger.csv");
    }
    let p = Path::new(out);
    let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
    p.with_file_name(format!("{stem}.ledger.csv"))
}

fn report_summary(s: &RunSummary) {
    eprintln!("{}: {} steps of h = {:e}, {} frames", s.method, s.steps, s.h, s.frames);
    if s.method.is_reduced() {
        eprintln!(
            "newton iterations: max {}, total {}; max stage residual {:.3e}",
            s.max_newton_iterations, s.total_newton_iterations, s.max_stage_residual
        );
    } else {
        eprintln!("max linear-solve residual: {:.3e}", s.max_solve_residual);
    }
}

fn report_ledger(l: &EnergySummary, path: &Path) {
    let r = &l.step_residuals;
    eprintln!(
        "energy ledger -> {}: per-step residual max {:.3e}, mean {:.3e}, rms {:.3e}; inequality violations {} (worst margin {:.3e}, tolerance {:.3e})",
        path.display(),
        r.max_abs,
        r.mean_abs,
        r.rms,
        l.violations,
        l.worst_margin,
        l.tolerance
    );
}

fn convergence(a: ConvergenceArgs) -> Result<(), Failure> {
    let model = GeneratorModel::new(PhysicalParams::from_source(&a.params)?)?;
    let ics = load_initial_state(&a.ics)?;
    let spec = ConvergenceSpec {
        method: a.method,
        h_list: a.h_list,
        t_end: a.t_end,
        ref_stages: a.ref_stages,
        ref_h: a.ref_h,
    };
    let report = convergence_study(&model, &ics, &spec, thread_cap())?;
    let text = report.to_text();
    match &a.out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn compare(a: CompareArgs) -> Result<(), Failure> {
    let ca = RunConfig::from_file(&a.a)?;
    let cb = RunConfig::from_file(&a.b)?;
    let ra = run(&ca)?;
    let rb = run(&cb)?;
    let cmp = compare_runs(&ra.frames, &rb.frames, a.metric)?;
    std::fs::write(&a.out, cmp.to_csv())?;
    let t_half = 0.5 * ca.t_end;
    let trend = cmp
        .log_trend_slope(t_half)
        .map_or_else(|| "n/a".to_string(), |s| format!("{s:.4e}"));
    eprintln!(
        "{} vs {}: max discrepancy {:.6e}, mean {:.6e}, log-trend slope for t > {} s: {}",
        ca.method, cb.method, cmp.max, cmp.mean, t_half, trend
    );
    Ok(())
}

fn tableau(stages: usize) -> Result<(), Failure> {
    print!("{}", gauss_tableau(stages)?.to_text());
    Ok(())
}

fn verify(max_stages: usize) -> Result<(), Failure> {
    let reports = verify_appendix_range(max_stages)?;
    println!("{}", AppendixReport::HEADER);
    for r in &reports {
        println!("{}", r.to_row());
    }
    let failed: Vec<usize> = reports.iter().filter(|r| !r.passed()).map(|r| r.s).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Numerical(format!("identity checks failed for s = {failed:?}")))
    }
}
