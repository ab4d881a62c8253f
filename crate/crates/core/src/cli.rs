//! Command-line interface. Exit codes: 0 success, 1 verification or run
//! failure, 2 configuration error.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::{Config, Overrides};
use crate::domain::{Action, LoggedDataset};
use crate::error::{Error, Result};
use crate::experiments::{emit_plot_data, emit_svg, emit_table, run_experiment, ExperimentReport, RunFailure};
use crate::policies::PolicyKind;
use crate::preprocess::dataset::write_csv;
use crate::rng::run_seed;
use crate::sim::log::{read_result_log, write_result_log};
use crate::sim::{collect_logged_data, replay_verify, simulate, CollectionScenario, SimulationConfig};
use crate::world::{ConversionScenario, ReferencePool, World, WorldBase, WorldSnapshot};

#[derive(Debug, Parser)]
#[command(name = "salesim", version, about = "Simulate sales-channel allocation policies under delayed rewards")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Experiment config (TOML); built-in defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ScenarioArgs {
    /// observational | partial | random
    #[arg(long)]
    pub collection: Option<CollectionScenario>,
    /// historical | uniform | fhat_adjusted
    #[arg(long)]
    pub conversion: Option<ConversionScenario>,
    #[arg(long)]
    pub delay_lambda: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic reference dataset.
    Generate {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        pool_size: Option<usize>,
    },
    /// Build a world (preprocessing, clusters, conversion table, delays).
    FitWorld {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the data-collection phase.
    Collect {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// World snapshot from `fit-world`; built from the config otherwise.
        #[arg(long)]
        world: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate one policy and write its event log.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long)]
        world: Option<PathBuf>,
        /// Logged data from `collect`; collected on the fly otherwise.
        #[arg(long)]
        logged: Option<PathBuf>,
        /// Policy label from the config, or a policy kind.
        #[arg(long)]
        policy: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the full scenario grid and write tables and plot data.
    Experiment {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        workers: Option<usize>,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recount a simulation log and check its consistency.
    Verify { log: PathBuf },
    /// Re-render tables and plot data from a saved report.
    Report {
        report: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::MissingKey(_) => 2,
        _ => 1,
    }
}

pub fn main_entry() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn load_config(common: &CommonArgs, overrides: Overrides) -> Result<Config> {
    let mut cfg = match &common.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    cfg.apply(&Overrides {
        seed: common.seed,
        ..overrides
    });
    cfg.validate()?;
    Ok(cfg)
}

fn scenario_overrides(s: &ScenarioArgs) -> Overrides {
    Overrides {
        collection: s.collection,
        conversion: s.conversion,
        delay_lambda: s.delay_lambda,
        ..Overrides::default()
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    serde_json::to_string_pretty(v).map_err(|e| Error::Internal(e.to_string()))
}

/// Standalone stages use run 0 of the configured seed, so their artifacts
/// match the first run of an experiment's base cell.
fn stage_seed(cfg: &Config) -> u64 {
    run_seed(cfg.experiment.seed, 0)
}

fn build_world(cfg: &Config, snapshot: Option<&Path>) -> Result<World> {
    match snapshot {
        Some(p) => WorldSnapshot::from_json(&read_file(p)?, &p.display().to_string())?.into_world(),
        None => {
            let base = WorldBase::fit(cfg.load_pool()?, &cfg.world, cfg.experiment.seed)?;
            base.realize(&cfg.world, stage_seed(cfg))
        }
    }
}

/// Per-channel conversion rates and per-(channel, outcome) delay means.
pub fn pool_summary(pool: &ReferencePool) -> String {
    let mut n = [0usize; 3];
    let mut conv = [0usize; 3];
    let mut delay_sum = [[0f64; 2]; 3];
    let mut delay_n = [[0usize; 2]; 3];
    for h in pool.history.iter().flatten() {
        let a = h.action.index();
        n[a] += 1;
        conv[a] += usize::from(h.reward);
        delay_sum[a][usize::from(h.reward)] += f64::from(h.delay_days);
        delay_n[a][usize::from(h.reward)] += 1;
    }
    let mut out = format!("leads: {}\n", pool.len());
    for a in Action::ALL {
        let i = a.index();
        let rate = if n[i] > 0 { conv[i] as f64 / n[i] as f64 } else { 0.0 };
        let mean = |r: usize| {
            if delay_n[i][r] > 0 {
                format!("{:.1}", delay_sum[i][r] / delay_n[i][r] as f64)
            } else {
                "NA".into()
            }
        };
        let _ = writeln!(
            out,
            "channel {a}: n={} conversion={:.4} delay_converted={} delay_unconverted={}",
            n[i],
            rate,
            mean(1),
            mean(0)
        );
    }
    out
}

/// Files written by an experiment.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub report: ExperimentReport,
    pub files: Vec<PathBuf>,
}

pub const TABLE_FILE: &str = "lift_table.csv";
pub const REPORT_FILE: &str = "report.json";
pub const PLOT_FILE: &str = "plot_data.csv";
pub const SVG_FILE: &str = "lift_plot.svg";
pub const CONFIG_FILE: &str = "config.toml";
pub const FAILURE_FILE: &str = "failures.json";

fn write_report_files(report: &ExperimentReport, out: &Path, svg: bool) -> Result<Vec<PathBuf>> {
    let mut files = vec![
        (out.join(TABLE_FILE), emit_table(report)),
        (out.join(PLOT_FILE), emit_plot_data(report)),
        (out.join(REPORT_FILE), report.to_json()?),
    ];
    if svg {
        files.push((out.join(SVG_FILE), emit_svg(report)));
    }
    for (path, text) in &files {
        write_file(path, text)?;
    }
    Ok(files.into_iter().map(|(p, _)| p).collect())
}

#[derive(Serialize)]
struct FailureManifest<'a> {
    error: Option<String>,
    failures: &'a [RunFailure],
}

/// Run the configured experiment grid and write every output into
/// `cfg.experiment.out_dir`. Run failures are preserved in a manifest and
/// reported as `Error::Verification` after the partial outputs are written.
pub fn cmd_experiment(cfg: &Config) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let out = cfg.experiment.out_dir.clone();
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    write_file(&out.join(CONFIG_FILE), &cfg.to_toml_string()?)?;
    let spec = cfg.experiment_spec();
    let result = cfg
        .load_pool()
        .and_then(|pool| run_experiment(pool, &spec, cfg.experiment.workers));
    let mut report = match result {
        Ok(r) => r,
        Err(e) => {
            let manifest = FailureManifest {
                error: Some(e.to_string()),
                failures: &[],
            };
            write_file(&out.join(FAILURE_FILE), &to_json(&manifest)?)?;
            return Err(e);
        }
    };
    report.config = Some(serde_json::to_value(cfg).map_err(|e| Error::Internal(e.to_string()))?);
    let mut files = vec![out.join(CONFIG_FILE)];
    files.extend(write_report_files(&report, &out, cfg.experiment.svg)?);
    if !report.failures.is_empty() {
        let manifest = FailureManifest {
            error: None,
            failures: &report.failures,
        };
        write_file(&out.join(FAILURE_FILE), &to_json(&manifest)?)?;
        return Err(Error::Verification(format!(
            "{} run(s) failed; see {}",
            report.failures.len(),
            out.join(FAILURE_FILE).display()
        )));
    }
    Ok(ExperimentOutput { report, files })
}

/// Replay-verify a result log. `Ok(false)` when the log is inconsistent.
pub fn cmd_verify(path: &Path) -> Result<bool> {
    let result = read_result_log(&read_file(path)?, &path.display().to_string())?;
    match replay_verify(&result) {
        Ok(()) => {
            println!(
                "ok: {} events, R(T) = {} over {} days",
                result.events.len(),
                result.cumulative_reward,
                result.horizon_days
            );
            Ok(true)
        }
        Err(e) => {
            println!("FAILED: {e}");
            Ok(false)
        }
    }
}

pub fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Generate { common, out, pool_size } => {
            let mut cfg = load_config(&CommonArgs { seed: None, ..common.clone() }, Overrides::default())?;
            if let Some(s) = common.seed {
                cfg.data.generator.seed = s;
            }
            if let Some(n) = pool_size {
                cfg.data.generator.pool_size = n;
            }
            let pool = crate::world::generate_reference_dataset(&cfg.data.generator)?;
            write_file(&out, &write_csv(&pool.schema, &pool.rows())?)?;
            let schema_path = out.with_extension("schema");
            write_file(&schema_path, &pool.schema.render())?;
            print!("{}", pool_summary(&pool));
            println!("wrote {} and {}", out.display(), schema_path.display());
            Ok(0)
        }
        Command::FitWorld { common, scenario, out } => {
            let cfg = load_config(&common, scenario_overrides(&scenario))?;
            let base = WorldBase::fit(cfg.load_pool()?, &cfg.world, cfg.experiment.seed)?;
            let world = base.realize(&cfg.world, stage_seed(&cfg))?;
            write_file(&out, &WorldSnapshot::from_world(&world).to_json()?)?;
            let (lo, hi) = world.conversion.min_max();
            println!(
                "k-means: {} clusters after {} iterations; {} table range [{lo:.4}, {hi:.4}]; delay lambda {}",
                world.clusters.k(),
                base.kmeans_iterations,
                cfg.world.conversion,
                cfg.world.delay_lambda
            );
            println!("wrote {}", out.display());
            Ok(0)
        }
        Command::Collect {
            common,
            scenario,
            world,
            out,
        } => {
            let cfg = load_config(&common, scenario_overrides(&scenario))?;
            let world = build_world(&cfg, world.as_deref())?;
            let logged = collect_logged_data(
                cfg.collection.scenario,
                &world,
                cfg.collection.days,
                cfg.simulation.leads_per_day,
                stage_seed(&cfg),
            )?;
            write_file(&out, &to_json(&logged)?)?;
            let mut counts = [0usize; 3];
            for e in &logged.entries {
                counts[e.action.index()] += 1;
            }
            println!(
                "{} entries ({} observed) under {}; A/B/C = {}/{}/{}",
                logged.len(),
                logged.observed().count(),
                cfg.collection.scenario,
                counts[0],
                counts[1],
                counts[2]
            );
            Ok(0)
        }
        Command::Simulate {
            common,
            scenario,
            world,
            logged,
            policy,
            out,
        } => {
            let cfg = load_config(&common, scenario_overrides(&scenario))?;
            let world = build_world(&cfg, world.as_deref())?;
            let logged: LoggedDataset = match logged {
                Some(p) => serde_json::from_str(&read_file(&p)?).map_err(|e| Error::parse(p.display().to_string(), e.to_string()))?,
                None => collect_logged_data(
                    cfg.collection.scenario,
                    &world,
                    cfg.collection.days,
                    cfg.simulation.leads_per_day,
                    stage_seed(&cfg),
                )?,
            };
            let spec = match cfg.policies.iter().find(|p| p.label() == policy) {
                Some(s) => s.clone(),
                None => crate::policies::PolicySpec::new(policy.parse::<PolicyKind>()?),
            };
            let mut p = spec.build(world.context_dim())?;
            let sim_cfg =
                SimulationConfig::new(cfg.simulation.horizon_days, cfg.simulation.leads_per_day, stage_seed(&cfg));
            let result = simulate(p.as_mut(), &world, Some(&logged), &sim_cfg)?;
            replay_verify(&result)?;
            write_file(&out, &write_result_log(&result))?;
            println!("{}: R(T) = {} over {} days", result.policy, result.cumulative_reward, result.horizon_days);
            Ok(0)
        }
        Command::Experiment {
            common,
            scenario,
            runs,
            workers,
            out,
        } => {
            let cfg = load_config(
                &common,
                Overrides {
                    runs,
                    workers,
                    out_dir: out,
                    ..scenario_overrides(&scenario)
                },
            )?;
            eprintln!(
                "running {} cells x {} runs x {} policies",
                cfg.experiment_spec().cells().len(),
                cfg.experiment.runs,
                cfg.experiment_spec().policies.len()
            );
            let output = cmd_experiment(&cfg)?;
            print!("{}", emit_table(&output.report));
            for f in &output.files {
                eprintln!("wrote {}", f.display());
            }
            Ok(0)
        }
        Command::Verify { log } => Ok(if cmd_verify(&log)? { 0 } else { 1 }),
        Command::Report { report, out } => {
            let r = ExperimentReport::from_json(&read_file(&report)?, &report.display().to_string())?;
            let dir = out.unwrap_or_else(|| report.parent().map(Path::to_path_buf).unwrap_or_default());
            std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            write_file(&dir.join(TABLE_FILE), &emit_table(&r))?;
            write_file(&dir.join(PLOT_FILE), &emit_plot_data(&r))?;
            write_file(&dir.join(SVG_FILE), &emit_svg(&r))?;
            print!("{}", emit_table(&r));
            Ok(0)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::config("x")), 2);
        assert_eq!(exit_code(&Error::Verification("x".into())), 1);
        assert_eq!(exit_code(&Error::invalid("x")), 1);
    }

    #[test]
    fn parses_flags() {
        let cli = Cli::try_parse_from([
            "salesim",
            "experiment",
            "--runs",
            "2",
            "--collection",
            "random",
            "--conversion",
            "uniform",
            "--delay-lambda",
            "0.5",
            "--workers",
            "1",
        ])
        .unwrap();
        match cli.command {
            Command::Experiment {
                runs,
                scenario,
                workers,
                ..
            } => {
                assert_eq!(runs, Some(2));
                assert_eq!(workers, Some(1));
                assert_eq!(scenario.collection, Some(CollectionScenario::FullyRandomized));
                assert_eq!(scenario.conversion, Some(ConversionScenario::Uniform));
                assert_eq!(scenario.delay_lambda, Some(0.5));
            }
            _ => panic!("wrong subcommand"),
        }
        assert!(Cli::try_parse_from(["salesim", "experiment", "--collection", "sometimes"]).is_err());
    }
}
