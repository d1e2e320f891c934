use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use aif_nav::harness::config::{CheckConfig, ScenarioConfig};
use aif_nav::harness::report::{
    all_passed, check_run_dir, coverage_report, evaluate_checks, tolman_report,
};
use aif_nav::harness::scenario::{load_run_dir, run_scenario, write_artifacts, write_atomic};
use aif_nav::model::export::{export_map, from_json, MapFormat};
use clap::{Parser, Subcommand};

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_CHECK: u8 = 3;

#[derive(Parser)]
#[command(
    name = "aif-nav",
    version,
    about = "Active-inference navigation experiments"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario file and write records under the output directory.
    Run {
        config: PathBuf,
        /// Replace the scenario's seeds; repeatable.
        #[arg(long = "seed")]
        seeds: Vec<u64>,
        /// Defaults to runs/<scenario name>.
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Evaluate the scenario's [check] section; exit 3 on failure.
        #[arg(long)]
        check: bool,
    },
    /// Summarise a run directory.
    Report {
        #[command(subcommand)]
        kind: ReportKind,
    },
    /// Convert a saved map to JSON or Graphviz DOT on stdout.
    ExportMap {
        model: PathBuf,
        #[arg(long, default_value = "dot")]
        format: String,
    },
}

#[derive(Subcommand)]
enum ReportKind {
    /// Route counts and shares per condition, plus a visitation heatmap.
    Tolman { dir: PathBuf },
    /// Distance to a coverage target, with median/min/max curves.
    Coverage {
        dir: PathBuf,
        /// Defaults to the scenario's check target, else 0.9.
        #[arg(long)]
        target: Option<f64>,
        #[arg(long, default_value_t = 50)]
        checkpoints: usize,
    },
    /// Re-evaluate the scenario's checks against saved records.
    Check { dir: PathBuf },
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}

type Outcome = Result<u8, (u8, String)>;

fn fail(e: aif_nav::Error) -> (u8, String) {
    (EXIT_FAILURE, e.to_string())
}

fn config_err(e: aif_nav::Error) -> (u8, String) {
    (EXIT_CONFIG, e.to_string())
}

fn dispatch(cli: Cli) -> Outcome {
    match cli.cmd {
        Cmd::Run {
            config,
            seeds,
            out_dir,
            check,
        } => run(&config, seeds, out_dir, check),
        Cmd::Report { kind } => report(kind),
        Cmd::ExportMap { model, format } => {
            let format: MapFormat = format.parse().map_err(config_err)?;
            let text = std::fs::read_to_string(&model).map_err(|e| fail(e.into()))?;
            let m = from_json(&text).map_err(config_err)?;
            let mut out = std::io::stdout().lock();
            match out.write_all(export_map(&m, format).as_bytes()) {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(fail(e.into())),
                _ => Ok(0),
            }
        }
    }
}

fn run(path: &Path, seeds: Vec<u64>, out_dir: Option<PathBuf>, check: bool) -> Outcome {
    let mut cfg = ScenarioConfig::load(path).map_err(config_err)?;
    if !seeds.is_empty() {
        cfg.seeds = seeds;
    }
    cfg.validate().map_err(config_err)?;
    if check && cfg.check.is_none() {
        return Err((
            EXIT_CONFIG,
            format!("{} declares no [check] section", path.display()),
        ));
    }
    let out = out_dir.unwrap_or_else(|| Path::new("runs").join(&cfg.name));
    let started = std::time::Instant::now();
    let res = run_scenario(&cfg).map_err(fail)?;
    let manifest = write_artifacts(&out, &cfg, &res).map_err(fail)?;
    println!(
        "{}: {} runs, {} models, {:.1}s -> {}",
        cfg.name,
        manifest.records.len(),
        manifest.models.len(),
        started.elapsed().as_secs_f64(),
        out.display()
    );
    if !check {
        return Ok(0);
    }
    let env = aif_nav::sim::GridEnv::parse(
        &std::fs::read_to_string(&cfg.map).map_err(|e| fail(e.into()))?,
    )
    .map_err(config_err)?;
    let lines = evaluate_checks(
        cfg.check.as_ref().unwrap(),
        &env,
        &res.records,
        &res.obstacle,
    )
    .map_err(config_err)?;
    for l in &lines {
        println!("{l}");
    }
    Ok(if all_passed(&lines) { 0 } else { EXIT_CHECK })
}

fn report(kind: ReportKind) -> Outcome {
    match kind {
        ReportKind::Tolman { dir } => {
            let run = load_run_dir(&dir).map_err(fail)?;
            let rep = tolman_report(&run.env, &run.records).map_err(fail)?;
            write_atomic(&dir.join("report/routes.csv"), rep.routes_csv().as_bytes())
                .map_err(fail)?;
            write_atomic(
                &dir.join("report/heatmap.csv"),
                rep.heatmap_csv().as_bytes(),
            )
            .map_err(fail)?;
            print!("{}", rep.routes_csv());
            Ok(0)
        }
        ReportKind::Coverage {
            dir,
            target,
            checkpoints,
        } => {
            let run = load_run_dir(&dir).map_err(fail)?;
            let target = target.unwrap_or(match run.manifest.config.check {
                Some(CheckConfig::Coverage { target, .. }) => target,
                _ => 0.9,
            });
            let rep = coverage_report(&run.records, target, checkpoints);
            write_atomic(
                &dir.join("report/coverage_runs.csv"),
                rep.runs_csv().as_bytes(),
            )
            .map_err(fail)?;
            write_atomic(
                &dir.join("report/coverage_bands.csv"),
                rep.bands_csv().as_bytes(),
            )
            .map_err(fail)?;
            write_atomic(&dir.join("report/coverage.svg"), rep.svg().as_bytes()).map_err(fail)?;
            print!("{}", rep.runs_csv());
            for a in &rep.agents {
                println!(
                    "{} median distance: {:?}",
                    a.agent.as_str(),
                    a.median_distance
                );
            }
            Ok(0)
        }
        ReportKind::Check { dir } => {
            let run = load_run_dir(&dir).map_err(fail)?;
            let lines = check_run_dir(&run).map_err(config_err)?;
            for l in &lines {
                println!("{l}");
            }
            Ok(if all_passed(&lines) { 0 } else { EXIT_CHECK })
        }
    }
}
