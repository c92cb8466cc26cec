use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mbthp::expcli::{parse_config, run_baselines, run_error_sweep, run_snr_sweep, write_csv, RunOptions, ScenarioConfig};
use mbthp::multibranch::pattern;
use mbthp::oracle::{deviation_sweep, write_deviation_csv};
use mbthp::rsrates::LinkBudget;
use mbthp::thp::ThpScheme;
use mbthp::{Error, Result};

#[derive(Parser)]
#[command(name = "mbthp", version, about = "Multi-branch rate-splitting THP link simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// key=value scenario file
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides the master seed
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Output CSV (stdout when omitted)
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Per-key override, repeatable
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Worker threads
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// ESR over the configured SNR list
    SnrSweep {
        #[command(flatten)]
        common: Common,
    },
    /// ESR over a list of error variances at a fixed SNR
    ErrorSweep {
        #[command(flatten)]
        common: Common,
        #[arg(long = "sigma-e2", value_delimiter = ',', default_value = "0.01,0.03,0.06,0.1,0.2")]
        sigma_e2: Vec<f64>,
        #[arg(long, default_value_t = 20.0, allow_negative_numbers = true)]
        snr: f64,
    },
    /// Configured scheme plus RS-THP, MB-THP and THP on paired seeds
    Baselines {
        #[command(flatten)]
        common: Common,
    },
    /// Closed-form versus oracle SINR deviation report
    Validate {
        #[command(flatten)]
        common: Common,
        #[arg(long = "sigma-e2", value_delimiter = ',', default_value = "0.000001,0.0001,0.01")]
        sigma_e2: Vec<f64>,
        #[arg(long, default_value_t = 20.0, allow_negative_numbers = true)]
        snr: f64,
        #[arg(long, default_value_t = 0.3)]
        delta: f64,
        #[arg(long, default_value_t = 200)]
        instances: usize,
    },
}

fn load(common: &Common) -> Result<ScenarioConfig> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::config("config", format!("cannot read {}: {e}", path.display())))?;
            parse_config(&text)?
        }
        None => ScenarioConfig::default(),
    };
    for assignment in &common.set {
        cfg.apply_override(assignment)?;
    }
    if let Some(seed) = common.seed {
        cfg.master_seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn emit(common: &Common, write: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    match &common.out {
        Some(path) => {
            let mut file = io::BufWriter::new(fs::File::create(path)?);
            write(&mut file)
        }
        None => write(&mut io::stdout().lock()),
    }
}

fn validate(cfg: &ScenarioConfig, sigma_e2: &[f64], snr: f64, delta: f64, instances: usize) -> Result<Vec<mbthp::oracle::DeviationSummary>> {
    if let Some(bad) = sigma_e2.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
        return Err(Error::config("sigma_e2", format!("must be finite and >= 0, got {bad}")));
    }
    let link = LinkBudget::from_snr_db(snr, cfg.sigma_n2);
    let identity = pattern(1, cfg.k)?;
    let mut rows = Vec::new();
    for scheme in [ThpScheme::Centralized, ThpScheme::Decentralized] {
        for (i, &s) in sigma_e2.iter().enumerate() {
            let mut rng = mbthp::expcli::stream(cfg.master_seed, i as u64, mbthp::expcli::Purpose::Error);
            rows.push(deviation_sweep(cfg.k, cfg.nt, scheme, s, delta, &identity, link, instances, &mut rng)?);
        }
    }
    Ok(rows)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::SnrSweep { common } => {
            let cfg = load(&common)?;
            let rows = RunOptions { threads: common.threads }.install(|| run_snr_sweep(&cfg))??;
            emit(&common, |w| write_csv(&rows, w))
        }
        Command::ErrorSweep { common, sigma_e2, snr } => {
            let cfg = load(&common)?;
            let rows = RunOptions { threads: common.threads }.install(|| run_error_sweep(&cfg, &sigma_e2, snr))??;
            emit(&common, |w| write_csv(&rows, w))
        }
        Command::Baselines { common } => {
            let cfg = load(&common)?;
            let rows = RunOptions { threads: common.threads }.install(|| run_baselines(&cfg))??;
            emit(&common, |w| write_csv(&rows, w))
        }
        Command::Validate {
            common,
            sigma_e2,
            snr,
            delta,
            instances,
        } => {
            let cfg = load(&common)?;
            let rows = validate(&cfg, &sigma_e2, snr, delta, instances)?;
            emit(&common, |w| write_deviation_csv(&rows, w))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::ConfigInvalid { .. } => ExitCode::from(2),
                Error::IoFailure(_) => ExitCode::from(1),
                _ => ExitCode::from(3),
            }
        }
    }
}
