use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use unmix_cli::eval::{run_eval, summary_table, EvalRequest};
use unmix_cli::sweep::{means, run_sweep_command, SweepPlan};
use unmix_cli::synth::{load_scene_spec, run_synth};
use unmix_cli::unmix::{load_config, run_unmix};
use unmix_cli::{replay, CliError, Method, Result, LOG_ENV};

#[derive(Parser)]
#[command(name = "unmix", version, about = "Hyperspectral unmixing with multilayer sparse NMF")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scene from a TOML scene spec.
    Synth {
        spec: PathBuf,
        /// Output directory, created if missing.
        #[arg(long)]
        out: PathBuf,
        /// Spectral library CSV; defaults to the bundled fixture.
        #[arg(long)]
        library: Option<PathBuf>,
    },
    /// Unmix a cube into P endmembers.
    Unmix {
        /// Cube header (`.json`) or payload (`.bin`).
        cube: PathBuf,
        /// Number of endmembers P.
        endmembers: usize,
        /// Solver configuration TOML; omitted keys take their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Method::Mlnmf)]
        method: Method,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score unmixing results against a synthetic truth or a reference library.
    Eval {
        /// Output directories of `unmix` runs.
        #[arg(long = "est", required = true, num_args = 1..)]
        estimates: Vec<PathBuf>,
        /// Output directory of `synth`; scores endmembers and abundances.
        #[arg(long, conflicts_with = "reference", required_unless_present = "reference")]
        truth: Option<PathBuf>,
        /// Spectral library CSV; scores endmembers only.
        #[arg(long)]
        reference: Option<PathBuf>,
        /// Reference library columns to use, comma separated.
        #[arg(long, value_delimiter = ',', requires = "reference")]
        select: Option<Vec<String>>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every method over a grid of SNRs and repeats.
    Sweep {
        spec: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        snr: Vec<f64>,
        #[arg(long, value_delimiter = ',', value_enum, default_values_t = Method::ALL)]
        methods: Vec<Method>,
        #[arg(long, default_value_t = 1)]
        repeats: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        library: Option<PathBuf>,
        /// Write 0 in the `seconds` column so reruns are byte-identical.
        #[arg(long)]
        no_timing: bool,
        /// Worker threads; defaults to the number of cores.
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rerun the command recorded in a manifest.
    Replay {
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { spec, out, library } => {
            let spec = load_scene_spec(&spec)?;
            run_synth(&spec, library.as_deref(), &out)?;
        }
        Command::Unmix {
            cube,
            endmembers,
            config,
            method,
            out,
        } => {
            let cfg = load_config(config.as_deref())?;
            run_unmix(&cube, endmembers, method, &cfg, &out)?;
        }
        Command::Eval {
            estimates,
            truth,
            reference,
            select,
            out,
        } => {
            let req = EvalRequest {
                estimates,
                truth,
                reference,
                select,
            };
            let (_, result) = run_eval(&req, &out)?;
            print!("{}", summary_table(&result));
        }
        Command::Sweep {
            spec,
            snr,
            methods,
            repeats,
            seed,
            config,
            library,
            no_timing,
            jobs,
            out,
        } => {
            let plan = SweepPlan {
                scene: load_scene_spec(&spec)?,
                library,
                snr_db: snr,
                methods,
                repeats,
                master_seed: seed,
                config: load_config(config.as_deref())?,
                timing: !no_timing,
            };
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(jobs.unwrap_or(0))
                .build()
                .map_err(|e| CliError::Usage(e.to_string()))?;
            let result = pool.install(|| run_sweep_command(&plan, &out));
            if let Ok((_, rows)) = &result {
                println!("{:<10} {:>8} {:>10} {:>10}", "method", "snr_db", "rms_sad", "rms_aad");
                for ((m, snr_bits), c) in means(rows) {
                    println!(
                        "{:<10} {:>8} {:>10.4} {:>10.4}",
                        m.name(),
                        f64::from_bits(snr_bits),
                        c.rms_sad,
                        c.rms_aad
                    );
                }
            }
            result?;
        }
        Command::Replay { manifest, out } => {
            replay(&manifest, &out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::FAILURE
        }
    }
}
