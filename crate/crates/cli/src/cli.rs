//! Command-line parsing and dispatch.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;

use conquer_core::data::format_float;
use conquer_core::datagen::{derive_seed, generate_federated, make_truth, DgpKind, DgpSpec, Noise};
use conquer_core::federation::scaling_diagnostic;
use conquer_core::FederatedDataset;

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::experiment::{
    run_fit, run_infer, summarize_fit, summarize_infer, write_fit_summary, write_fit_trials, write_infer_summary,
    write_infer_trials, DataSource,
};
use crate::reproduce::{pinned_runs, Target};

pub const TRUTH_HEADER: [&str; 2] = ["coef_index", "value"];

#[derive(Debug, Parser)]
#[command(name = "conquer", version, about = "Distributed smoothed quantile regression experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Experiment configuration (TOML). Defaults to a small built-in example.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Top-level seed; overrides the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of Monte Carlo trials; overrides the configuration.
    #[arg(long)]
    pub trials: Option<u64>,
    /// Output directory; overrides the configuration.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads for trial-level parallelism.
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct DataArgs {
    /// Manifest of an existing shard directory, used instead of simulation.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Truth file matching `--data`, enabling errors and coverage.
    #[arg(long, requires = "data")]
    pub truth: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the shards of one trial, a manifest and the true coefficients.
    Generate {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value_t = 0)]
        trial: u64,
    },
    /// Run the configured estimators over all trials.
    Fit {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Run the configured confidence-set methods over all trials.
    Infer {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Print u(m, N)/m and whether the number of machines is permissible.
    Diag {
        #[arg(long)]
        m: usize,
        /// Total sample size N.
        #[arg(long = "total")]
        total: usize,
        #[arg(long)]
        p: usize,
    },
    /// Run the pinned configurations behind a published exhibit.
    Reproduce {
        /// One of table1, table2, table3, fig2, fig3, appendixE.
        target: String,
        /// Use the published trial counts and full sweeps.
        #[arg(long)]
        full: bool,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Inspect data generating processes.
    Dgp {
        #[command(subcommand)]
        command: DgpCommand,
    },
}

#[derive(Debug, Subcommand)]
pub enum DgpCommand {
    /// Print the true coefficients and noise setup of a process.
    Describe {
        #[arg(long)]
        kind: String,
        #[arg(long, default_value_t = 10)]
        p: usize,
        #[arg(long, default_value_t = 0.5)]
        tau: f64,
        #[arg(long, default_value_t = 2.0)]
        nu: f64,
    },
}

/// Process exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Success,
    PartialFailure,
    ConfigError,
}

impl Exit {
    pub fn code(self) -> i32 {
        match self {
            Exit::Success => 0,
            Exit::ConfigError => 1,
            Exit::PartialFailure => 2,
        }
    }
}

/// Runs a parsed command, writing human-readable output to `out`.
pub fn run(cli: Cli, out: &mut dyn Write) -> Exit {
    match dispatch(cli, out) {
        Ok(exit) => exit,
        Err(e) => {
            let _ = writeln!(out, "error: {e}");
            Exit::ConfigError
        }
    }
}

fn dispatch(cli: Cli, out: &mut dyn Write) -> CliResult<Exit> {
    match cli.command {
        Command::Generate { common, trial } => {
            let cfg = resolve(&common)?;
            set_threads(common.threads)?;
            generate(&cfg, trial, out)
        }
        Command::Fit { common, data } => {
            let cfg = resolve(&common)?;
            set_threads(common.threads)?;
            let source = source(&cfg, &data)?;
            print_seed_tree(&cfg, out)?;
            fit(&cfg, &source, &cfg.output_dir, out)
        }
        Command::Infer { common, data } => {
            let cfg = resolve(&common)?;
            set_threads(common.threads)?;
            let source = source(&cfg, &data)?;
            print_seed_tree(&cfg, out)?;
            infer(&cfg, &source, &cfg.output_dir, out)
        }
        Command::Diag { m, total, p } => {
            writeln!(out, "{}", diag_text(m, total, p)?)?;
            Ok(Exit::Success)
        }
        Command::Reproduce { target, full, common } => {
            let target: Target = target.parse()?;
            set_threads(common.threads)?;
            reproduce(target, full, &common, out)
        }
        Command::Dgp {
            command: DgpCommand::Describe { kind, p, tau, nu },
        } => {
            let kind: DgpKind = kind.parse().map_err(|e| CliError::Config(format!("{e}")))?;
            let spec = DgpSpec::new(kind, p, 1, 1, tau, nu, 0).map_err(|e| CliError::Config(format!("{e}")))?;
            write!(out, "{}", describe(&spec))?;
            Ok(Exit::Success)
        }
    }
}

fn resolve(common: &CommonArgs) -> CliResult<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::example(),
    };
    apply_overrides(&mut cfg, common);
    cfg.validate()?;
    Ok(cfg)
}

fn apply_overrides(cfg: &mut ExperimentConfig, common: &CommonArgs) {
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(trials) = common.trials {
        cfg.trials = trials;
    }
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
}

#[cfg(feature = "parallel")]
fn set_threads(threads: Option<usize>) -> CliResult<()> {
    if let Some(t) = threads {
        if t == 0 {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        // A second call in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    Ok(())
}

#[cfg(not(feature = "parallel"))]
fn set_threads(threads: Option<usize>) -> CliResult<()> {
    match threads {
        Some(0) => Err(CliError::Config("--threads must be positive".into())),
        _ => Ok(()),
    }
}

fn source(cfg: &ExperimentConfig, data: &DataArgs) -> CliResult<DataSource> {
    match &data.data {
        None => Ok(DataSource::Generated(cfg.dgp_spec()?)),
        Some(manifest) => {
            let fed = FederatedDataset::read_manifest(manifest)?;
            let truth = data.truth.as_deref().map(read_truth).transpose()?;
            if let Some(t) = &truth {
                if t.len() != fed.p() {
                    return Err(CliError::Config(format!(
                        "truth has {} entries but the shards have {} columns",
                        t.len(),
                        fed.p()
                    )));
                }
            }
            Ok(DataSource::Fixed { fed, truth })
        }
    }
}

/// Prints how every random stream is derived from the top-level seed.
pub fn print_seed_tree(cfg: &ExperimentConfig, out: &mut dyn Write) -> CliResult<()> {
    let s = cfg.seed;
    writeln!(out, "seed {s}")?;
    let shown = cfg.trials.min(3);
    for t in 0..shown {
        writeln!(out, "  trial {t}")?;
        writeln!(
            out,
            "    shard j          <- derive({s}, [{t}, j])    j = 0 -> {:#018x}",
            derive_seed(s, &[t, 0])
        )?;
        writeln!(
            out,
            "    initializer      <- derive({s}, [{t}, MAX, 1]) -> {:#018x}",
            derive_seed(s, &[t, u64::MAX, 1])
        )?;
        writeln!(
            out,
            "    validation       <- derive({s}, [{t}, MAX, 2]) -> {:#018x}",
            derive_seed(s, &[t, u64::MAX, 2])
        )?;
        writeln!(
            out,
            "    bootstrap rep r  <- derive(derive({s}, [{t}, 0xB007]), [r])"
        )?;
    }
    if cfg.trials > shown {
        writeln!(out, "  ... {} more trials", cfg.trials - shown)?;
    }
    Ok(())
}

fn generate(cfg: &ExperimentConfig, trial: u64, out: &mut dyn Write) -> CliResult<Exit> {
    let spec = cfg.dgp_spec()?;
    let fed = generate_federated(&spec, trial)?;
    let dir = cfg.output_dir.join("data");
    let manifest = fed.write_dir(&dir)?;
    write_truth(&dir.join("truth.csv"), &make_truth(&spec))?;
    fs::write(cfg.output_dir.join("config.toml"), cfg.to_toml())?;
    writeln!(out, "wrote {} shards to {}", fed.num_machines(), dir.display())?;
    writeln!(out, "manifest {}", manifest.display())?;
    Ok(Exit::Success)
}

pub fn write_truth(path: &Path, truth: &DVector<f64>) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(TRUTH_HEADER)?;
    for (k, v) in truth.iter().enumerate() {
        w.write_record([k.to_string(), format_float(*v)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_truth(path: &Path) -> CliResult<DVector<f64>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut values = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let k: usize = rec
            .get(0)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| CliError::Config(format!("bad index on truth row {}", i + 1)))?;
        let v: f64 = rec
            .get(1)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| CliError::Config(format!("bad value on truth row {}", i + 1)))?;
        if k != i {
            return Err(CliError::Config(format!("truth rows must be in order, found index {k} at row {}", i + 1)));
        }
        values.push(v);
    }
    Ok(DVector::from_vec(values))
}

fn fit(cfg: &ExperimentConfig, source: &DataSource, dir: &Path, out: &mut dyn Write) -> CliResult<Exit> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("config.toml"), cfg.to_toml())?;
    let records = run_fit(cfg, source)?;
    let summary = summarize_fit(&records);
    write_fit_trials(fs::File::create(dir.join("fit_trials.csv"))?, &records)?;
    write_fit_summary(fs::File::create(dir.join("fit_summary.csv"))?, &summary)?;
    write_fit_summary(&mut *out, &summary)?;
    let failed = summary.iter().map(|s| s.trials_failed).sum::<usize>();
    Ok(exit_for(failed, out)?)
}

fn infer(cfg: &ExperimentConfig, source: &DataSource, dir: &Path, out: &mut dyn Write) -> CliResult<Exit> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("config.toml"), cfg.to_toml())?;
    let records = run_infer(cfg, source)?;
    let summary = summarize_infer(&records);
    write_infer_trials(fs::File::create(dir.join("infer_trials.csv"))?, &records)?;
    write_infer_summary(fs::File::create(dir.join("infer_summary.csv"))?, &summary)?;
    write_infer_summary(&mut *out, &summary)?;
    let failed = summary.iter().map(|s| s.trials_failed).sum::<usize>();
    Ok(exit_for(failed, out)?)
}

fn exit_for(failed: usize, out: &mut dyn Write) -> CliResult<Exit> {
    if failed > 0 {
        writeln!(out, "{failed} trial results failed; see the status column")?;
        Ok(Exit::PartialFailure)
    } else {
        Ok(Exit::Success)
    }
}

fn reproduce(target: Target, full: bool, common: &CommonArgs, out: &mut dyn Write) -> CliResult<Exit> {
    let root = common.out.clone().unwrap_or_else(|| PathBuf::from("results")).join(target.to_string());
    let mut exit = Exit::Success;
    for run in pinned_runs(target, full) {
        let mut cfg = run.config;
        apply_overrides(&mut cfg, &CommonArgs { out: None, ..common.clone() });
        cfg.output_dir = root.join(&run.label);
        cfg.validate()?;
        writeln!(out, "== {target} {} ({} trials)", run.label, cfg.trials)?;
        print_seed_tree(&cfg, out)?;
        let source = DataSource::Generated(cfg.dgp_spec()?);
        let dir = cfg.output_dir.clone();
        let result = if target.is_inference() {
            infer(&cfg, &source, &dir, out)?
        } else {
            fit(&cfg, &source, &dir, out)?
        };
        if result == Exit::PartialFailure {
            exit = Exit::PartialFailure;
        }
    }
    Ok(exit)
}

/// The text printed by `diag`.
pub fn diag_text(m: usize, total: usize, p: usize) -> CliResult<String> {
    let ratio = scaling_diagnostic(m, total, p)?;
    let verdict = if ratio >= 1.0 { "PERMISSIBLE" } else { "EXCESSIVE" };
    Ok(format!("m={m} N={total} p={p} u(m,N)/m={ratio:.3} {verdict}"))
}

fn describe(spec: &DgpSpec) -> String {
    let truth = make_truth(spec);
    let mut s = format!("kind {}\n", spec.kind.name());
    s.push_str(&format!("columns {} (intercept first)\n", spec.dim()));
    s.push_str(&format!("tau {} noise t({}) centred at its tau-quantile\n", spec.tau, match spec.noise {
        Noise::StudentT(nu) => nu,
    }));
    s.push_str("truth");
    for v in truth.iter() {
        s.push(' ');
        s.push_str(&format_float(*v));
    }
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diag_matches_hand_evaluation() {
        assert_eq!(diag_text(100, 30_000, 30).unwrap(), "m=100 N=30000 p=30 u(m,N)/m=8.058 PERMISSIBLE");
        assert!(diag_text(5000, 30_000, 30).unwrap().ends_with("EXCESSIVE"));
        assert!(diag_text(2, 30_000, 30).is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(Exit::Success.code(), 0);
        assert_eq!(Exit::ConfigError.code(), 1);
        assert_eq!(Exit::PartialFailure.code(), 2);
    }

    #[test]
    fn truth_file_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("truth.csv");
        let v = DVector::from_vec(vec![1.0, -0.25, 3.5]);
        write_truth(&path, &v).unwrap();
        assert_eq!(read_truth(&path).unwrap(), v);
    }

    #[test]
    fn flags_parse() {
        let cli = Cli::try_parse_from([
            "conquer", "fit", "--seed", "7", "--trials", "3", "--out", "x", "--threads", "2",
        ])
        .unwrap();
        match cli.command {
            Command::Fit { common, .. } => {
                assert_eq!(common.seed, Some(7));
                assert_eq!(common.trials, Some(3));
                assert_eq!(common.threads, Some(2));
            }
            _ => panic!("wrong subcommand"),
        }
        assert!(Cli::try_parse_from(["conquer", "fit", "--truth", "t.csv"]).is_err());
    }

    #[test]
    fn bad_config_exits_with_one() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.toml");
        fs::write(&path, "trials = 0\n").unwrap();
        let cli = Cli::try_parse_from(["conquer", "fit", "--config", path.to_str().unwrap()]).unwrap();
        let mut buf = Vec::new();
        assert_eq!(run(cli, &mut buf), Exit::ConfigError);
    }
}
