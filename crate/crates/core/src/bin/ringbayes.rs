use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ringbayes::codebook::coherence_histogram;
use ringbayes::estimators::run_estimator;
use ringbayes::harness::{
    child_seed, draw_trial, emit_results, run_ber_sweep, run_frames_sweep, run_nmse_sweep, Execution,
    ExperimentConfig, Metric, SweepResult,
};
use ringbayes::harness::sweep::nmse;
use ringbayes::{Error, Result};

#[derive(Parser)]
#[command(name = "ringbayes", version, about = "Near-field UCA channel learning simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Preset used when no configuration file is given: full or desk.
    #[arg(long, default_value = "full")]
    preset: String,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::from_file(p)?,
            None => ExperimentConfig::preset(&self.preset)?,
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Build the BS codebook and print its header and coherence histogram.
    Codebook {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Histogram bins over [0, 1].
        #[arg(long, default_value_t = 10)]
        bins: usize,
        /// Also write codebook.json and codebook.csv into this directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every configured estimator on one random realization.
    Estimate {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Pilot SNR in dB; defaults to the first grid point.
        #[arg(long)]
        snr: Option<f64>,
        /// Trial index used to derive the realization seed.
        #[arg(long, default_value_t = 0)]
        trial: usize,
        /// Write the diagnostics of every estimator as JSON.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Monte-Carlo sweep over the SNR grid (or over frame counts).
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value = "nmse")]
        metric: String,
        /// Comma-separated frame counts for an NMSE-vs-M sweep.
        #[arg(long, value_delimiter = ',')]
        frames: Option<Vec<usize>>,
        /// Output directory; defaults to output_path from the config, then ./results.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run trials on the current thread only.
        #[arg(long)]
        serial: bool,
    },
}

fn codebook(cfg: &ExperimentConfig, bins: usize, out: Option<&Path>) -> Result<()> {
    let setup = cfg.build_setup()?;
    let cb = &setup.codebook;
    let header = serde_json::to_string_pretty(&cb.header()).map_err(|e| Error::Config(e.to_string()))?;
    println!("{header}");
    println!("columns: {}", cb.n_columns());
    println!("adjacent-angle coherence: {:.6}", cb.adjacent_angle_coherence());
    println!("mutual coherence: {:.6}", cb.mutual_coherence());
    println!("coherence histogram (off-diagonal |a_i^H a_j|):");
    for (lo, hi, count) in coherence_histogram(cb.matrix(), bins.max(1)) {
        println!("  [{lo:.2}, {hi:.2}) {count}");
    }
    if let Some(dir) = out {
        cb.export(dir)?;
        println!("wrote {}", dir.display());
    }
    Ok(())
}

fn estimate(cfg: &ExperimentConfig, snr: Option<f64>, trial: usize, trace: Option<&Path>) -> Result<()> {
    let setup = cfg.build_setup()?;
    let snr_db = snr.unwrap_or(cfg.snr_grid_db[0]);
    let mut rng = ChaCha8Rng::seed_from_u64(child_seed(cfg.seed, 0, trial));
    let draw = draw_trial(cfg, &setup, snr_db, &mut rng)?;
    let settings = cfg.estimator_settings();
    println!(
        "measurements {} x atoms {}, snr {snr_db} dB, sigma2 {:.4e}",
        draw.model.n_measurements(),
        draw.model.omega_beamspace().ncols(),
        draw.model.sigma2()
    );
    let mut traces = serde_json::Map::new();
    for kind in cfg.estimator_kinds()? {
        let t0 = std::time::Instant::now();
        let est = run_estimator(kind, &draw.y, &draw.model, &settings)?;
        let secs = t0.elapsed().as_secs_f64();
        let d = &est.diagnostics;
        println!(
            "{:<10} nmse {:>8.3} dB  iterations {:>3}  residual {:.4e}  converged {}  {:.2}s",
            kind.name(),
            10.0 * nmse(&est.h_matrix, &draw.channel.matrix).log10(),
            d.iterations,
            d.residual_norm,
            d.converged,
            secs
        );
        traces.insert(
            kind.name().to_string(),
            serde_json::to_value(d).map_err(|e| Error::Config(e.to_string()))?,
        );
    }
    if let Some(path) = trace {
        let text = serde_json::to_string_pretty(&traces).map_err(|e| Error::Config(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })?;
    }
    Ok(())
}

fn print_rows(result: &SweepResult) {
    println!(
        "{:>8} {:>6} {:<10} {:>9} {:>7} {:>10}",
        "snr_db", "frames", "estimator", "nmse_db", "ci", "ber"
    );
    for r in &result.rows {
        let ber = r.ber.map(|b| format!("{b:.3e}")).unwrap_or_default();
        println!(
            "{:>8.2} {:>6} {:<10} {:>9.3} {:>7.3} {:>10}",
            r.snr_db, r.frames, r.estimator, r.nmse_db, r.nmse_ci, ber
        );
    }
}

fn sweep(
    cfg: &ExperimentConfig,
    metric: Metric,
    frames: Option<&[usize]>,
    out: Option<&Path>,
    exec: Execution,
) -> Result<()> {
    let (result, frames_values) = match (metric, frames) {
        (Metric::Nmse, Some(m)) => (run_frames_sweep(cfg, m, exec)?, m.to_vec()),
        (Metric::Nmse, None) => (run_nmse_sweep(cfg, exec)?, vec![]),
        (Metric::Ber, None) => (run_ber_sweep(cfg, exec)?, vec![]),
        (Metric::Ber, Some(_)) => {
            return Err(Error::Config("--frames applies to the nmse metric only".into()))
        }
    };
    print_rows(&result);
    let dir = out
        .map(Path::to_path_buf)
        .or_else(|| cfg.output_path.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("results"));
    let files = emit_results(&result, cfg, &frames_values, &dir)?;
    println!("wrote {}", files.summary.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Codebook { cfg, bins, out } => codebook(&cfg.load()?, bins, out.as_deref()),
        Command::Estimate { cfg, snr, trial, trace } => estimate(&cfg.load()?, snr, trial, trace.as_deref()),
        Command::Sweep {
            cfg,
            metric,
            frames,
            out,
            serial,
        } => {
            let exec = if serial { Execution::Serial } else { Execution::Parallel };
            sweep(&cfg.load()?, metric.parse()?, frames.as_deref(), out.as_deref(), exec)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
