//! Command-line entry point of the testbed.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use testbed::defect::activation::read_activation_file;
use testbed::defect::deploy::{build_clone, launch, BuildOptions, LaunchOptions};
use testbed::defect::seed::{default_created_at, find_lockfile, seed_clone};
use testbed::defect::spec::load_catalog;
use testbed::eval::experiment::{run_experiment, ExperimentDef, ExperimentOptions};
use testbed::eval::matrix::{compute_detection_matrix, DetectionMatrix};
use testbed::eval::metrics::compute_effectiveness_metrics;
use testbed::eval::pair::{pair_activation_logs, PairedReport};
use testbed::eval::report::{run_suite, RunLabel, Selection, TestReport};
use testbed::harness::coverage::{element_coverage_check, page_inventory};
use testbed::harness::registry::Category;
use testbed::harness::transport::{HttpTransport, InProcess};
use testbed::process_model::{load_paths, transition_coverage, validate_path, ProcessModel};

fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data")
}

fn default_experiment() -> PathBuf {
    data_dir().join("experiments").join("catalog.toml")
}

#[derive(Parser)]
#[command(
    name = "testbed",
    about = "Defect-injection testbed for the university information system"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Seed one defect clone from the baseline tree.
    Seed {
        #[arg(long)]
        baseline: PathBuf,
        #[arg(long, default_value_os_t = data_dir().join("defects"))]
        defects: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        clone_id: String,
        #[arg(long)]
        created_at: Option<String>,
        /// Defect ids to inject.
        defect_ids: Vec<String>,
    },
    /// Compile a seeded clone.
    Build {
        clone_dir: PathBuf,
        #[arg(long)]
        target_dir: Option<PathBuf>,
    },
    /// Launch a built clone and keep it running.
    Serve {
        clone_dir: PathBuf,
        #[arg(long, default_value_t = 0)]
        port: u16,
        #[arg(long, default_value = "baseline-small")]
        fixture: String,
        #[arg(long)]
        log_dir: Option<PathBuf>,
    },
    /// Run the suite against a server and write a report.
    Run(RunArgs),
    /// Annotate a report with the activations of its run window.
    Pair {
        report: PathBuf,
        activation_log: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compute the detection matrix from a baseline report and clone reports.
    Matrix {
        #[arg(long)]
        baseline: PathBuf,
        /// Clone report; pair each with a `--paired` file in the same order.
        #[arg(long = "report")]
        reports: Vec<PathBuf>,
        #[arg(long = "paired")]
        paired: Vec<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Compute effectiveness metrics from a matrix document.
    Metrics {
        matrix: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// End-to-end experiments.
    Eval {
        #[command(subcommand)]
        command: EvalCommand,
    },
    /// Process-model utilities.
    Model {
        #[command(subcommand)]
        command: ModelCommand,
        #[arg(long, global = true, default_value_os_t = data_dir().join("model").join("uis.toml"))]
        model: PathBuf,
    },
    /// Element coverage of the atomic tests over the reference pages.
    Elements {
        #[arg(long, default_value_os_t = default_experiment())]
        experiment: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Base URL of the server under test.
    #[arg(long)]
    url: String,
    /// Experiment document providing the test inputs.
    #[arg(long, default_value_os_t = default_experiment())]
    experiment: PathBuf,
    #[arg(long = "category")]
    categories: Vec<Category>,
    #[arg(long = "id")]
    ids: Vec<String>,
    #[arg(long, default_value = "r1")]
    run_prefix: String,
    #[arg(long, default_value = "target")]
    target: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum EvalCommand {
    /// Seed, build, deploy and test every clone, then evaluate.
    Run {
        #[arg(default_value_os_t = default_experiment())]
        experiment: PathBuf,
        #[arg(long, default_value = "out/experiment")]
        out: PathBuf,
        #[arg(long)]
        target_dir: Option<PathBuf>,
        #[arg(long)]
        created_at: Option<String>,
    },
}

#[derive(Subcommand)]
enum ModelCommand {
    /// Check the model and a set of path files.
    Validate {
        #[arg(default_values_os_t = vec![data_dir().join("paths").join("valid.toml")])]
        paths: Vec<PathBuf>,
    },
    /// List transitions no valid path covers.
    Coverage {
        #[arg(default_values_os_t = vec![data_dir().join("paths").join("valid.toml")])]
        paths: Vec<PathBuf>,
    },
    /// Print the model as Graphviz DOT.
    Dot,
}

type Outcome = Result<ExitCode, String>;

fn write_or_print(out: Option<&Path>, text: &str) -> Result<(), String> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| format!("{}: {e}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn seed(
    baseline: &Path,
    defects: &Path,
    out: &Path,
    clone_id: &str,
    created_at: Option<String>,
    ids: &[String],
) -> Outcome {
    let catalog = load_catalog(defects).map_err(|e| e.to_string())?;
    let specs = ids
        .iter()
        .map(|id| {
            catalog
                .iter()
                .find(|s| s.defect_id == *id)
                .ok_or_else(|| format!("unknown defect {id}"))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let created_at = created_at.unwrap_or_else(default_created_at);
    let lock = find_lockfile(baseline);
    let seeded = seed_clone(
        baseline,
        &specs,
        out,
        clone_id,
        &created_at,
        lock.as_deref(),
    )
    .map_err(|e| e.to_string())?;
    println!("{}", seeded.dir.display());
    Ok(ExitCode::SUCCESS)
}

fn serve(clone_dir: &Path, port: u16, fixture: String, log_dir: Option<PathBuf>) -> Outcome {
    let mut opts = LaunchOptions::new(log_dir.unwrap_or_else(|| clone_dir.join("logs")));
    opts.port = port;
    opts.fixture = fixture;
    let mut deployment = launch(clone_dir, &opts).map_err(|e| e.to_string())?;
    println!("{} serving at {}", deployment.clone_id, deployment.base_url);
    while deployment.is_running() {
        std::thread::sleep(Duration::from_millis(500));
    }
    Ok(ExitCode::SUCCESS)
}

fn run(args: RunArgs) -> Outcome {
    let def = ExperimentDef::load(&args.experiment).map_err(|e| e.to_string())?;
    let suite = def.suite().map_err(|e| e.to_string())?;
    let selection = Selection {
        categories: args.categories,
        ids: args.ids,
    };
    let label = RunLabel {
        suite_id: def.id.clone(),
        target: args.target,
        run_prefix: args.run_prefix,
        started_at: default_created_at(),
    };
    let transport = HttpTransport::new(&args.url);
    let report = run_suite(&transport, &suite, &selection, &label).map_err(|e| e.to_string())?;
    std::fs::write(&args.out, report.to_json()).map_err(|e| e.to_string())?;
    for (verdict, n) in report.verdict_counts() {
        println!("{verdict:?}: {n}");
    }
    Ok(ExitCode::SUCCESS)
}

fn matrix(baseline: &Path, reports: &[PathBuf], paired: &[PathBuf], out_dir: &Path) -> Outcome {
    if reports.len() != paired.len() {
        return Err("every --report needs a --paired file".into());
    }
    let base = TestReport::load(baseline)?;
    let reports = reports
        .iter()
        .map(|p| TestReport::load(p))
        .collect::<Result<Vec<_>, _>>()?;
    let paired = paired
        .iter()
        .map(|p| {
            let text = std::fs::read_to_string(p).map_err(|e| e.to_string())?;
            serde_json::from_str::<PairedReport>(&text).map_err(|e| e.to_string())
        })
        .collect::<Result<Vec<_>, _>>()?;
    let pairs: Vec<_> = reports.iter().zip(&paired).collect();
    let m = compute_detection_matrix(&base, &pairs).map_err(|e| e.to_string())?;
    std::fs::create_dir_all(out_dir).map_err(|e| e.to_string())?;
    std::fs::write(out_dir.join("matrix.csv"), m.to_csv()).map_err(|e| e.to_string())?;
    std::fs::write(out_dir.join("matrix.json"), m.to_json()).map_err(|e| e.to_string())?;
    for w in &m.warnings {
        eprintln!("warning: {w}");
    }
    Ok(ExitCode::SUCCESS)
}

fn eval_run(
    experiment: &Path,
    out: PathBuf,
    target_dir: Option<PathBuf>,
    created_at: Option<String>,
) -> Outcome {
    let mut opts = ExperimentOptions::new(out);
    if let Some(t) = target_dir {
        opts.target_dir = t;
    }
    opts.created_at = created_at;
    let outcome = run_experiment(experiment, &opts).map_err(|e| e.to_string())?;
    println!(
        "detection rate {:.3} ({} of {} clones), outputs in {}",
        outcome.metrics.overall_detection_rate,
        outcome.metrics.detected_clones,
        outcome.metrics.clones,
        outcome.out_dir.display()
    );
    for c in &outcome.self_checks {
        println!(
            "{} {}: {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
    }
    Ok(if outcome.self_checks_pass() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn model(command: ModelCommand, model: &Path) -> Outcome {
    let m = ProcessModel::load(model).map_err(|e| e.to_string())?;
    match command {
        ModelCommand::Dot => print!("{}", m.to_dot()),
        ModelCommand::Validate { paths } => {
            let (states, transitions) = m.counts();
            println!("model ok: {states} states, {transitions} transitions");
            let mut bad = 0;
            for file in paths {
                for entry in load_paths(&file).map_err(|e| e.to_string())? {
                    let got = validate_path(&m, &entry.path).err();
                    let expected = entry.expect_error.as_deref();
                    let ok = match (&got, expected) {
                        (None, None) => true,
                        (Some(e), Some(kind)) => {
                            e.kind() == kind
                                && (entry.expect_index.is_none() || e.index() == entry.expect_index)
                        }
                        _ => false,
                    };
                    if !ok {
                        bad += 1;
                    }
                    let what = got.map(|e| e.to_string()).unwrap_or_else(|| "valid".into());
                    println!(
                        "{} {}: {what}",
                        if ok { "ok  " } else { "FAIL" },
                        entry.path.id
                    );
                }
            }
            if bad > 0 {
                return Ok(ExitCode::from(1));
            }
        }
        ModelCommand::Coverage { paths } => {
            let mut all = Vec::new();
            for file in paths {
                let entries = load_paths(&file).map_err(|e| e.to_string())?;
                all.extend(
                    entries
                        .into_iter()
                        .filter(|e| e.expect_error.is_none())
                        .map(|e| e.path),
                );
            }
            let uncovered = transition_coverage(&m, &all).map_err(|e| e.to_string())?;
            println!(
                "{} of {} transitions covered",
                m.transitions.len() - uncovered.len(),
                m.transitions.len()
            );
            for t in &uncovered {
                println!("uncovered {t}");
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn elements(experiment: &Path) -> Outcome {
    let def = ExperimentDef::load(experiment).map_err(|e| e.to_string())?;
    let suite = def.suite().map_err(|e| e.to_string())?;
    let transport = InProcess::shipped(&def.fixture).ok_or("unknown fixture")?;
    let inventory = page_inventory(&transport).map_err(|e| e.to_string())?;
    let report = element_coverage_check(&suite.tests, &inventory).map_err(|e| e.to_string())?;
    println!(
        "active {}/{} covered, passive {}/{} covered",
        report.active_total - report.uncovered_active.len(),
        report.active_total,
        report.passive_total - report.uncovered_passive.len(),
        report.passive_total
    );
    for (view, id) in &report.uncovered_active {
        println!("uncovered active {view} {id}");
    }
    for (view, id) in &report.uncovered_passive {
        println!("uncovered passive {view} {id}");
    }
    Ok(if report.uncovered_active.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn dispatch(cli: Cli) -> Outcome {
    match cli.command {
        Command::Seed {
            baseline,
            defects,
            out,
            clone_id,
            created_at,
            defect_ids,
        } => seed(
            &baseline,
            &defects,
            &out,
            &clone_id,
            created_at,
            &defect_ids,
        ),
        Command::Build {
            clone_dir,
            target_dir,
        } => {
            let target = target_dir.unwrap_or_else(|| clone_dir.join("target"));
            let bin =
                build_clone(&clone_dir, &BuildOptions::new(target)).map_err(|e| e.to_string())?;
            println!("{}", bin.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Serve {
            clone_dir,
            port,
            fixture,
            log_dir,
        } => serve(&clone_dir, port, fixture, log_dir),
        Command::Run(args) => run(args),
        Command::Pair {
            report,
            activation_log,
            out,
        } => {
            let report = TestReport::load(&report)?;
            let activations = read_activation_file(&activation_log).map_err(|e| e.to_string())?;
            let paired = pair_activation_logs(&report, &activations);
            let text = serde_json::to_string_pretty(&paired).map_err(|e| e.to_string())? + "\n";
            write_or_print(out.as_deref(), &text)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Matrix {
            baseline,
            reports,
            paired,
            out_dir,
        } => matrix(&baseline, &reports, &paired, &out_dir),
        Command::Metrics { matrix, out } => {
            let text = std::fs::read_to_string(&matrix).map_err(|e| e.to_string())?;
            let m: DetectionMatrix = serde_json::from_str(&text).map_err(|e| e.to_string())?;
            let metrics = compute_effectiveness_metrics(&m).map_err(|e| e.to_string())?;
            write_or_print(out.as_deref(), &metrics.to_json())?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Eval {
            command:
                EvalCommand::Run {
                    experiment,
                    out,
                    target_dir,
                    created_at,
                },
        } => eval_run(&experiment, out, target_dir, created_at),
        Command::Model { command, model: m } => model(command, &m),
        Command::Elements { experiment } => elements(&experiment),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(message) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
    }
}
