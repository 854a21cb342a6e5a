//! `birefsense`: phase sweeps, sensitivity maps, working-point optimization
//! and Fock-oracle validation from a TOML experiment file.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use log::info;

use birefsense_core::sweep::output;
use birefsense_core::{run_map, run_phase_sweep, run_phi_optimization, run_validation, ExperimentConfig, SweepError};

const EXIT_CONFIG: u8 = 2;
const EXIT_MISMATCH: u8 = 3;
const EXIT_UNCONVERGED: u8 = 4;

#[derive(Parser, Debug)]
#[command(
    name = "birefsense",
    version,
    about = "Birefringence sensing with a dual-polarization SU(1,1) interferometer"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment file (TOML). Built-in defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,

    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,

    /// Also write the map as a binary graymap.
    #[arg(long, global = true)]
    pgm: bool,

    /// Optimize phi_su at every point instead of using the configured value.
    #[arg(long, global = true)]
    optimize_phi_su: bool,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// S² against phi_b; writes sweep.csv / sweep.json.
    Sweep,
    /// S² over (phi_b, delta); writes map.csv / map.json / map.pgm.
    Map,
    /// Compare the Gaussian engine with the Fock oracle; writes validation.json.
    Validate,
    /// Best phi_su at the configured phi_b; writes optimize_phi.json.
    OptimizePhi,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Csv,
    Json,
    Both,
}

impl Format {
    fn csv(self) -> bool {
        self != Format::Json
    }

    fn json(self) -> bool {
        self != Format::Csv
    }
}

fn create(dir: &Path, name: &str) -> anyhow::Result<BufWriter<File>> {
    let path = dir.join(name);
    info!("writing {}", path.display());
    let f = File::create(&path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn run(cli: &Cli) -> anyhow::Result<u8> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if cli.optimize_phi_su {
        cfg.optimizer.optimize_phi_su = true;
    }
    fs::create_dir_all(&cli.out).with_context(|| format!("cannot create {}", cli.out.display()))?;
    let out = cli.out.as_path();

    match cli.command {
        Command::Sweep => {
            let table = run_phase_sweep(&cfg.sweep_request())?;
            if cli.format.csv() {
                output::write_sweep_csv(&table, create(out, "sweep.csv")?)?;
            }
            if cli.format.json() {
                output::write_sweep_json(&table, create(out, "sweep.json")?)?;
            }
            match table.best() {
                Some(r) => println!(
                    "min S2 = {:.4} dB at phi_b = {:.6}, phi_su = {:.6}",
                    r.s2_db, r.phi_b, r.phi_su
                ),
                None => println!("no phase-sensitive point on the sweep"),
            }
        }
        Command::Map => {
            let map = run_map(&cfg.map_request())?;
            if cli.format.csv() {
                output::write_map_csv(&map, create(out, "map.csv")?)?;
            }
            if cli.format.json() {
                output::write_map_json(&map, create(out, "map.json")?)?;
            }
            if cli.pgm {
                output::write_map_pgm(&map, create(out, "map.pgm")?)?;
            }
            println!("min S2 = {:.4} dB over {} points", map.min_db(), map.s2_db.len());
        }
        Command::OptimizePhi => {
            let req = cfg.sweep_request();
            let opt = run_phi_optimization(&req)?;
            output::write_optimization_json(&opt, &req, create(out, "optimize_phi.json")?)?;
            println!(
                "phi_b = {:.6}: best phi_su = {:.6}, S2 = {:.4} dB",
                opt.phi_b, opt.phi_su, opt.result.s2_db
            );
        }
        Command::Validate => {
            let report = run_validation(&cfg.interferometer, &cfg.validation)?;
            output::write_validation_json(&report, create(out, "validation.json")?)?;
            println!(
                "{:<16} {:>14} {:>14} {:>14} {:>14} {:>10}",
                "modes", "mean (G)", "mean (F)", "var (G)", "var (F)", "rel err"
            );
            for r in &report.rows {
                let modes: Vec<String> = r.modes.iter().map(|m| m.to_string()).collect();
                println!(
                    "{:<16} {:>14.8e} {:>14.8e} {:>14.8e} {:>14.8e} {:>10.2e}",
                    modes.join("+"),
                    r.gaussian_mean,
                    r.fock_mean,
                    r.gaussian_variance,
                    r.fock_variance,
                    r.relative_error
                );
            }
            let c = &report.certificate;
            println!(
                "cutoff {} (vs {}), leakage {:.2e}, converged {}; max relative error {:.3e} (tolerance {:e})",
                c.cutoff, c.previous_cutoff, c.max_leakage, c.converged, report.max_relative_error, report.tolerance
            );
            if !report.converged() {
                eprintln!("error: Fock oracle did not converge within the amplitude budget");
                return Ok(EXIT_UNCONVERGED);
            }
            if !report.agrees() {
                eprintln!("error: Gaussian and Fock results differ beyond the tolerance");
                return Ok(EXIT_MISMATCH);
            }
        }
    }
    Ok(0)
}

fn is_config_error(e: &anyhow::Error) -> bool {
    e.downcast_ref::<birefsense_core::ConfigError>().is_some()
        || matches!(e.downcast_ref::<SweepError>(), Some(SweepError::Config(_)))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} threads: {e}");
            return ExitCode::FAILURE;
        }
    }
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            if is_config_error(&e) {
                ExitCode::from(EXIT_CONFIG)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
