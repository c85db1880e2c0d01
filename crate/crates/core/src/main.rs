use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use swbound::analyze::{analyze, Overrides, EXIT_ERROR, EXIT_OK, EXIT_VIOLATION};
use swbound::config::{AnalysisConfig, Pipeline};
use swbound::report::ReportDocument;
use swbound::sim::{falsify, ContainmentBounds, FalsifyConfig, FalsifyTarget};
use swbound::system::SwitchingSystem;
use swbound::{reproduce, Error, Result};

#[derive(Parser)]
#[command(name = "swbound", version, about = "Componentwise bounds for switching systems with delayed perturbations")]
struct Cli {
    /// Output directory (overrides the config file).
    #[arg(long, global = true, env = "SWBOUND_OUT_DIR")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an analysis and write report.json.
    Analyze {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        pipeline: Option<Pipeline>,
        #[arg(long, conflicts_with = "search")]
        v_file: Option<PathBuf>,
        #[arg(long)]
        search: bool,
        #[arg(long)]
        seed: Option<u64>,
        /// Include wall-clock timings (makes reports differ between runs).
        #[arg(long)]
        timings: bool,
    },
    /// Compare an embedded example against its reference values.
    ReproduceExample {
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(reproduce::names()))]
        name: String,
        /// Also write the table as JSON to the output directory.
        #[arg(long)]
        json: bool,
    },
    /// Simulate against the bounds of an existing report.
    Simulate {
        #[arg(long)]
        report: PathBuf,
        #[arg(long, default_value_t = 200)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 50.0)]
        tf: f64,
        #[arg(long, default_value_t = 0.01)]
        dt: f64,
    },
}

fn out_dir(cli: &Option<PathBuf>, cfg: Option<&AnalysisConfig>) -> PathBuf {
    cli.clone()
        .or_else(|| cfg.and_then(|c| c.output_dir.as_ref().map(|d| c.resolve(d))))
        .unwrap_or_else(|| PathBuf::from("."))
}

fn write(dir: &Path, name: &str, text: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    std::fs::write(&path, text)?;
    Ok(path)
}

fn cmd_analyze(out: &Option<PathBuf>, config: &Path, ov: Overrides, timings: bool) -> Result<i32> {
    let mut cfg = AnalysisConfig::load(config)?;
    ov.apply(&mut cfg);
    cfg.validate()?;
    let doc = analyze(&cfg, timings)?;
    let dir = out_dir(out, Some(&cfg));
    let path = write(&dir, "report.json", &doc.to_json()?)?;
    if let Some(s) = &doc.search {
        write(&dir, "search_log.jsonl", &swbound::search::log_jsonl(&s.log)?)?;
    }
    for d in &doc.diagnostics {
        eprintln!("[{}] exit {}: {}", d.stage, d.exit_code, d.message);
    }
    if let Some(b) = &doc.combined_box {
        println!("combined box: {b:?}");
    }
    println!("report written to {}", path.display());
    Ok(doc.exit_code)
}

fn cmd_reproduce(out: &Option<PathBuf>, name: &str, json: bool) -> Result<i32> {
    let table = reproduce::run(name)?;
    println!("{table}");
    if json {
        let dir = out_dir(out, None);
        write(&dir, &format!("{name}.json"), &serde_json::to_string_pretty(&table)?)?;
    }
    Ok(if table.pass() { EXIT_OK } else { EXIT_ERROR })
}

/// Ultimate bound to test: `b̃` of the affine report if present, otherwise
/// the nonlinear `b` with its transient bound and admissible histories.
fn target_of(doc: &ReportDocument) -> Result<FalsifyTarget> {
    let v = doc
        .transform
        .as_ref()
        .ok_or_else(|| Error::Config("report has no transform".into()))?
        .v
        .clone();
    if let Some(b) = doc.affine.as_ref().and_then(|a| a.b_tilde.clone()) {
        return Ok(FalsifyTarget {
            v,
            bounds: ContainmentBounds {
                b: Some(b),
                ..Default::default()
            },
        });
    }
    if let Some(r) = &doc.nonlinear {
        return Ok(FalsifyTarget {
            v,
            bounds: ContainmentBounds {
                beta: Some(r.beta.clone()),
                b: Some(r.b.clone()),
                admissible_init: Some(r.margin.admissible_init.clone()),
            },
        });
    }
    Err(Error::Config("report has no affine or nonlinear bound to test".into()))
}

fn cmd_simulate(out: &Option<PathBuf>, report: &Path, cfg: FalsifyConfig) -> Result<i32> {
    let doc = ReportDocument::load(report)?;
    let system = SwitchingSystem::from_config(&doc.system)?;
    let target = target_of(&doc)?;
    let summary = falsify(&system, &target, &cfg)?;
    let dir = out_dir(out, None);
    let path = write(&dir, "falsify.json", &serde_json::to_string_pretty(&summary)?)?;
    println!(
        "{} trials, {} violations, max ultimate ratio {:.4}; summary in {}",
        summary.trials,
        summary.violations,
        summary.max_ultimate_ratio,
        path.display()
    );
    for r in summary.records.iter().filter(|r| r.violated) {
        eprintln!("violation: trial {} seed {}", r.trial, r.seed);
    }
    Ok(if summary.violations == 0 { EXIT_OK } else { EXIT_VIOLATION })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Analyze {
            config,
            pipeline,
            v_file,
            search,
            seed,
            timings,
        } => cmd_analyze(
            &cli.out,
            &config,
            Overrides {
                pipeline,
                v_file,
                search,
                seed,
            },
            timings,
        ),
        Command::ReproduceExample { name, json } => cmd_reproduce(&cli.out, &name, json),
        Command::Simulate {
            report,
            trials,
            seed,
            tf,
            dt,
        } => cmd_simulate(
            &cli.out,
            &report,
            FalsifyConfig {
                trials,
                seed,
                tf,
                dt,
                ..Default::default()
            },
        ),
    };
    match res {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_ERROR as u8)
        }
    }
}
