use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use polbell::experiment::{
    run_analytic, run_calibrate, run_mc, run_sweep, run_validate, sweep_csv, to_json, SweepReport,
};
use polbell::scenario::{load_config, parse_config, Format, ScenarioConfig};
use polbell::{Error, Exec};

const EXIT_CONFIG: u8 = 3;
const EXIT_VALIDATION: u8 = 4;
const EXIT_RUNTIME: u8 = 5;

const DEFAULT_CALIBRATION: &str = "[source]\nkind = \"coherent\"\ntarget_s0 = 1e6\n";

#[derive(Parser)]
#[command(name = "polbell", version, about = "Macroscopic polarization Bell states: analytics, sweeps, Monte Carlo, oracle checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML)
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides [mc] seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides [mc] pulses
    #[arg(long, global = true)]
    pulses: Option<usize>,
    /// Output file; stdout when absent
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<FormatArg>,
    /// Run single-threaded (output is identical either way)
    #[arg(long, global = true)]
    sequential: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Stokes means, variances, NRF bounds and uncertainty margins
    Analytic,
    /// NRF versus wave-plate angle
    Sweep {
        /// Add Monte Carlo columns regardless of [sweep] mc
        #[arg(long)]
        mc: bool,
    },
    /// Monte Carlo NRF of S1, S2, S3
    Mc,
    /// Gaussian engine against the Fock-space oracle
    Validate {
        #[arg(long, default_value_t = 0.4)]
        max_gamma: f64,
        #[arg(long, default_value_t = 14)]
        cutoff: usize,
    },
    /// Shot-noise calibration with laser light
    Calibrate,
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) => EXIT_CONFIG,
            _ => EXIT_RUNTIME,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("polbell: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let c = &cli.common;
    let exec = if c.sequential { Exec::Sequential } else { Exec::default() };
    match cli.command {
        Command::Analytic => {
            let cfg = scenario(c, None)?;
            let report = run_analytic(&cfg)?;
            let text = match format(c, &cfg) {
                Format::Json => to_json(&report)?,
                Format::Csv => report.to_csv()?,
            };
            emit(output(c, &cfg), &text)
        }
        Command::Sweep { mc } => {
            let mut cfg = scenario(c, None)?;
            cfg.sweep.mc |= mc;
            let report = run_sweep(&cfg, exec)?;
            write_sweep(&report, format(c, &cfg), output(c, &cfg))
        }
        Command::Mc => {
            let cfg = scenario(c, None)?;
            let report = run_mc(&cfg, exec)?;
            let text = match format(c, &cfg) {
                Format::Json => to_json(&report)?,
                Format::Csv => report.to_csv()?,
            };
            emit(output(c, &cfg), &text)
        }
        Command::Validate { max_gamma, cutoff } => {
            let report = run_validate(max_gamma, cutoff, exec)?;
            let text = match c.format.map(Format::from).unwrap_or(Format::Json) {
                Format::Json => to_json(&report)?,
                Format::Csv => validation_csv(&report),
            };
            emit(c.out.clone(), &text)?;
            eprintln!(
                "validate: {} ({} checks, max deviation {:.3e})",
                if report.passed { "PASS" } else { "FAIL" },
                report.checks.len(),
                report.max_deviation
            );
            if report.passed {
                Ok(())
            } else {
                Err(Failure {
                    code: EXIT_VALIDATION,
                    message: "oracle validation failed".into(),
                })
            }
        }
        Command::Calibrate => {
            let cfg = scenario(c, Some(DEFAULT_CALIBRATION))?;
            let report = run_calibrate(&cfg, exec)?;
            let text = match format(c, &cfg) {
                Format::Json => to_json(&report)?,
                Format::Csv => report.to_csv()?,
            };
            emit(output(c, &cfg), &text)
        }
    }
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
        }
    }
}

fn scenario(c: &Common, fallback: Option<&str>) -> Result<ScenarioConfig, Failure> {
    let mut cfg = match (&c.config, fallback) {
        (Some(path), _) => load_config(path).map_err(|e| Failure {
            code: EXIT_CONFIG,
            message: e.to_string(),
        })?,
        (None, Some(text)) => parse_config(text)?,
        (None, None) => {
            return Err(Failure {
                code: EXIT_CONFIG,
                message: "this subcommand needs --config PATH".into(),
            })
        }
    };
    if let Some(seed) = c.seed {
        cfg.mc.seed = seed;
    }
    if let Some(pulses) = c.pulses {
        if pulses < 100 {
            return Err(Failure {
                code: EXIT_CONFIG,
                message: format!("--pulses must be >= 100, got {pulses}"),
            });
        }
        cfg.mc.pulses = pulses;
    }
    Ok(cfg)
}

fn format(c: &Common, cfg: &ScenarioConfig) -> Format {
    c.format.map(Format::from).unwrap_or(cfg.format)
}

fn output(c: &Common, cfg: &ScenarioConfig) -> Option<PathBuf> {
    c.out.clone().or_else(|| cfg.output_path.clone())
}

fn emit(path: Option<PathBuf>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => write_file(&p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
    }
    fs::write(path, text).map_err(|e| io_failure(path, e))
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure {
        code: EXIT_RUNTIME,
        message: format!("{}: {e}", path.display()),
    }
}

/// CSV is one file per plate; with several plates a file path gains a
/// `_hwp` / `_qwp` suffix and stdout gets `# plate=...` separators.
fn write_sweep(report: &SweepReport, fmt: Format, out: Option<PathBuf>) -> Result<(), Failure> {
    if fmt == Format::Json {
        return emit(out, &to_json(report)?);
    }
    let several = report.blocks.len() > 1;
    let mut stdout = String::new();
    for block in &report.blocks {
        let text = sweep_csv(&block.rows)?;
        match (&out, several) {
            (Some(p), true) => write_file(&suffixed(p, &block.plate.to_string().to_lowercase()), &text)?,
            (Some(p), false) => write_file(p, &text)?,
            (None, true) => {
                stdout.push_str(&format!("# plate={}\n", block.plate));
                stdout.push_str(&text);
            }
            (None, false) => stdout.push_str(&text),
        }
    }
    if out.is_none() {
        print!("{stdout}");
    }
    Ok(())
}

fn suffixed(path: &Path, tag: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}_{tag}.{}", ext.to_string_lossy()),
        None => format!("{stem}_{tag}"),
    };
    path.with_file_name(name)
}

fn validation_csv(report: &polbell::experiment::ValidationReport) -> String {
    let mut s = String::from("check,deviation,bound,pass\n");
    for c in &report.checks {
        s.push_str(&format!("{},{:.8e},{:.8e},{}\n", c.name, c.deviation, c.bound, c.pass));
    }
    s
}
