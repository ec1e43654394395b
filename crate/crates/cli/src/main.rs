use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nlse_pdf::qpsk::{run_demo, DemoConfig, ForwardOptions};
use nlse_pdf_cli::demo_out::{write_histograms, write_symbols};
use nlse_pdf_cli::{run, CliError, Result, RunConfig};

#[derive(Parser)]
#[command(name = "nlse-pdf", version, about = "Conditional PDFs of the noisy NLSE channel")]
struct Cli {
    /// Override the seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 picks one per core).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Output file (run, sweep) or directory (demo-qpsk); stdout when absent.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate one config and emit a JSON result document.
    Run { config: PathBuf },
    /// Repeat a run over values of one numeric field and emit CSV.
    Sweep {
        config: PathBuf,
        /// Dotted path of the field, e.g. `channel.gamma` or `grid.steps`.
        #[arg(long)]
        axis: String,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
    },
    /// Forward-simulate the QPSK example and compare with the per-symbol law.
    DemoQpsk {
        /// Optional TOML file with demo settings.
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 100_000)]
        runs: u64,
    },
    /// Check a config without running it.
    ValidateConfig { config: PathBuf },
}

fn base_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn load(path: &Path, seed: Option<u64>) -> Result<RunConfig> {
    let mut cfg = RunConfig::from_path(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn emit(output: Option<&Path>, inputs: &[&Path], bytes: &[u8]) -> Result<()> {
    match output {
        Some(p) => {
            let same = |a: &Path| a.canonicalize().ok().is_some_and(|a| Some(a) == p.canonicalize().ok());
            if inputs.iter().any(|i| same(i)) {
                return Err(CliError::Config(format!("refusing to overwrite input file {}", p.display())));
            }
            std::fs::write(p, bytes).map_err(|e| CliError::io(p, e))
        }
        None => std::io::stdout().write_all(bytes).map_err(|e| CliError::io("<stdout>", e)),
    }
}

fn execute(cli: Cli) -> Result<()> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    let out = cli.output.as_deref();
    match &cli.command {
        Command::Run { config } => {
            let cfg = load(config, cli.seed)?;
            let doc = run(&cfg, &base_dir(config))?;
            emit(out, &[config], doc.to_json()?.as_bytes())
        }
        Command::Sweep { config, axis, values } => {
            let cfg = load(config, cli.seed)?;
            let mut buf = Vec::new();
            nlse_pdf_cli::sweep::sweep(&cfg, &base_dir(config), axis, values, &mut buf)?;
            emit(out, &[config], &buf)
        }
        Command::DemoQpsk { config, runs } => {
            let demo: DemoConfig = match config {
                Some(p) => {
                    let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
                    toml::from_str(&text)?
                }
                None => DemoConfig::default(),
            };
            let opts = ForwardOptions {
                n_runs: *runs,
                seed: cli.seed.unwrap_or(0),
                ..Default::default()
            };
            let report = run_demo(&demo, &opts)?;
            match out {
                Some(dir) => {
                    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
                    let file = |name: &str| {
                        let p = dir.join(name);
                        std::fs::File::create(&p).map_err(|e| CliError::io(p, e))
                    };
                    serde_json::to_writer_pretty(file("report.json")?, &report)?;
                    write_symbols(&report, file("symbols.csv")?)?;
                    write_histograms(&report, file("histograms.csv")?)
                }
                None => write_symbols(&report, std::io::stdout()),
            }
        }
        Command::ValidateConfig { config } => {
            let cfg = load(config, cli.seed)?;
            let p = cfg.prepare(&base_dir(config))?;
            println!(
                "ok: method {:?}, {} modes x {} steps",
                cfg.method,
                p.grid.modes(),
                p.grid.steps()
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
