//! Command-line front end. Settings resolve as defaults, then `--config`
//! file, then flags. Exit codes: 0 success, 1 run failure, 2 config error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::operators::ScaleFactor;
use crate::problems::{serialize_graph, Graph};
use crate::qaoa::QaoaInstance;
use crate::report;
use crate::selection::{baseline_argmax, exhaustive_depth_baseline, run_lambda_sweep, SweepOutcome};
use crate::verify::{format_table, run_checks, VerifySettings};

#[derive(Debug, Parser)]
#[command(name = "noisy-qaoa", version, about = "Noisy QAOA depth selection on weighted Max-Cut")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Plain gradient descent at every depth in p-min..=p
    Baseline(Flags),
    /// Proximal gradient descent over a shrinking lambda grid
    Sweep(Flags),
    /// Proximal phase, merge, then plain descent, over the lambda grid
    Hybrid(Flags),
    /// Run the numerical self-checks
    Verify(Flags),
    /// Write the seeded random graph
    GenGraph(Flags),
}

/// Every flag is optional; unset flags fall back to the config file and
/// then to the defaults.
#[derive(Debug, Args, Default)]
pub struct Flags {
    /// key = value file
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Graph file (first line node count, then "i j weight" lines)
    #[arg(long, value_name = "PATH")]
    pub graph: Option<String>,
    #[arg(long, value_name = "U64")]
    pub seed: Option<String>,
    /// none, relaxation or dephasing
    #[arg(long)]
    pub noise: Option<String>,
    #[arg(long, value_name = "FLOAT")]
    pub coupling: Option<String>,
    #[arg(long, value_name = "INT")]
    pub p: Option<String>,
    #[arg(long = "p-min", value_name = "INT")]
    pub p_min: Option<String>,
    #[arg(long, value_name = "INT")]
    pub nodes: Option<String>,
    #[arg(long, value_name = "INT")]
    pub edges: Option<String>,
    #[arg(long = "weight-min", value_name = "FLOAT")]
    pub weight_min: Option<String>,
    #[arg(long = "weight-max", value_name = "FLOAT")]
    pub weight_max: Option<String>,
    /// Initial value of every duration
    #[arg(long, value_name = "FLOAT")]
    pub x0: Option<String>,
    #[arg(long, value_name = "FLOAT")]
    pub eta: Option<String>,
    #[arg(long, value_name = "FLOAT")]
    pub epsilon: Option<String>,
    #[arg(long, value_name = "INT")]
    pub iters: Option<String>,
    #[arg(long = "hybrid-pg", value_name = "INT")]
    pub hybrid_pg: Option<String>,
    #[arg(long = "hybrid-gd", value_name = "INT")]
    pub hybrid_gd: Option<String>,
    #[arg(long = "lambda-init", value_name = "FLOAT")]
    pub lambda_init: Option<String>,
    #[arg(long = "lambda-factor", value_name = "FLOAT")]
    pub lambda_factor: Option<String>,
    #[arg(long, value_name = "INT")]
    pub rounds: Option<String>,
    /// Early-stop threshold on consecutive ratios ("inf" stops after one round)
    #[arg(long = "plateau-tol", value_name = "FLOAT")]
    pub plateau_tol: Option<String>,
    #[arg(long, value_name = "FLOAT")]
    pub scale: Option<String>,
    /// Integrator step, in scaled-Hamiltonian time
    #[arg(long, value_name = "FLOAT")]
    pub dt: Option<String>,
    /// rk4 or factorized
    #[arg(long)]
    pub integrator: Option<String>,
    #[arg(long, value_name = "DIR")]
    pub out: Option<String>,
    #[arg(long, value_name = "INT")]
    pub jobs: Option<String>,
}

impl Flags {
    fn pairs(&self) -> Vec<(&'static str, &Option<String>)> {
        vec![
            ("graph", &self.graph),
            ("seed", &self.seed),
            ("noise", &self.noise),
            ("coupling", &self.coupling),
            ("p", &self.p),
            ("p-min", &self.p_min),
            ("nodes", &self.nodes),
            ("edges", &self.edges),
            ("weight-min", &self.weight_min),
            ("weight-max", &self.weight_max),
            ("x0", &self.x0),
            ("eta", &self.eta),
            ("epsilon", &self.epsilon),
            ("iters", &self.iters),
            ("hybrid-pg", &self.hybrid_pg),
            ("hybrid-gd", &self.hybrid_gd),
            ("lambda-init", &self.lambda_init),
            ("lambda-factor", &self.lambda_factor),
            ("rounds", &self.rounds),
            ("plateau-tol", &self.plateau_tol),
            ("scale", &self.scale),
            ("dt", &self.dt),
            ("integrator", &self.integrator),
            ("out", &self.out),
            ("jobs", &self.jobs),
        ]
    }

    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        for (key, value) in self.pairs() {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidConfig(_)
        | Error::Parse { .. }
        | Error::EmptyRange
        | Error::InfeasibleEdgeCount { .. }
        | Error::InvalidGraph(_)
        | Error::SelfLoop(_)
        | Error::DuplicateEdge(..)
        | Error::TooManyQubits { .. }
        | Error::QubitOutOfRange { .. }
        | Error::DegenerateExtrema(_) => 2,
        _ => 1,
    }
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

struct Prepared {
    cfg: RunConfig,
    graph: Graph,
    hash: String,
}

/// Loads the graph, creates the output directory and persists the config
/// and graph so the run can be repeated with `--config <out>/<name>.config.txt`.
fn prepare(flags: &Flags, name: &str) -> Result<Prepared> {
    let cfg = flags.resolve()?;
    let graph = cfg.load_graph()?;
    let hash = cfg.hash(&graph);
    std::fs::create_dir_all(&cfg.out).map_err(|e| Error::Io(format!("{}: {e}", cfg.out.display())))?;
    let graph_file = format!("{name}.graph.txt");
    write_file(&cfg.out.join(&graph_file), &serialize_graph(&graph))?;
    let mut persisted = cfg.clone();
    persisted.graph = Some(PathBuf::from(graph_file));
    let text = format!("{}{}", report::header_comment(&hash), persisted.to_canonical());
    write_file(&cfg.out.join(format!("{name}.config.txt")), &text)?;
    // the global pool can only be built once per process
    let _ = rayon::ThreadPoolBuilder::new().num_threads(cfg.jobs).build_global();
    Ok(Prepared { cfg, graph, hash })
}

fn instance(p: &Prepared) -> Result<QaoaInstance> {
    QaoaInstance::new(
        p.graph.clone(),
        p.cfg.noise_model()?,
        ScaleFactor::new(p.cfg.scale)?,
        p.cfg.integrator_config()?,
    )
}

pub fn run(command: &Command) -> Result<ExitCode> {
    let start = Instant::now();
    let code = match command {
        Command::Baseline(flags) => cmd_baseline(flags)?,
        Command::Sweep(flags) => cmd_sweep(flags, false)?,
        Command::Hybrid(flags) => cmd_sweep(flags, true)?,
        Command::Verify(flags) => cmd_verify(flags)?,
        Command::GenGraph(flags) => cmd_gen_graph(flags)?,
    };
    eprintln!("elapsed {:.1} s", start.elapsed().as_secs_f64());
    Ok(code)
}

fn cmd_baseline(flags: &Flags) -> Result<ExitCode> {
    let prep = prepare(flags, "baseline")?;
    let range = prep.cfg.p_range()?;
    let inst = instance(&prep)?;
    let opt = prep.cfg.optimizer(false);
    let rows = exhaustive_depth_baseline(&inst, &opt, &range, prep.cfg.x0, prep.cfg.jobs > 1)?;
    let path = prep.cfg.out.join("baseline.csv");
    write_file(&path, &report::baseline_csv(&rows, &prep.hash))?;
    for r in &rows {
        println!("p={} ratio={:.6} objective={:.6}", r.p, r.ratio, r.objective);
    }
    if let Some(i) = baseline_argmax(&rows) {
        println!("best depth p={} ratio={:.6}", rows[i].p, rows[i].ratio);
    }
    println!("wrote {}", path.display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_sweep(flags: &Flags, hybrid: bool) -> Result<ExitCode> {
    let name = if hybrid { "hybrid" } else { "sweep" };
    let prep = prepare(flags, name)?;
    let inst = instance(&prep)?;
    let opt = prep.cfg.optimizer(hybrid);
    opt.validate()?;
    let x0 = vec![prep.cfg.x0; 2 * prep.cfg.p];
    let outcome: SweepOutcome =
        run_lambda_sweep(&inst, &x0, &opt, &prep.cfg.lambda_schedule(), prep.cfg.jobs > 1)?;
    let csv = prep.cfg.out.join(format!("{name}.csv"));
    let json = prep.cfg.out.join(format!("{name}.json"));
    write_file(&csv, &report::sweep_csv(&outcome.records, &prep.hash, hybrid))?;
    write_file(&json, &report::sweep_json(&outcome, &prep.hash)?)?;
    for r in &outcome.records {
        match &r.failure {
            Some(msg) => println!("lambda={:.6} failed: {msg}", r.lambda),
            None => println!(
                "lambda={:.6} selected_params={} effective_depth={} ratio={:.6}{}",
                r.lambda,
                r.selected_params,
                r.effective_depth,
                r.ratio,
                r.phase2_ratio.map_or(String::new(), |v| format!(" phase2_ratio={v:.6}"))
            ),
        }
    }
    println!("wrote {} and {}", csv.display(), json.display());
    match outcome.best {
        Some(i) => {
            let b = &outcome.records[i];
            println!(
                "best lambda={:.6} selected_params={} effective_depth={} ratio={:.6}",
                b.lambda,
                b.selected_params,
                b.effective_depth,
                b.score()
            );
            Ok(ExitCode::SUCCESS)
        }
        None => {
            eprintln!("error: every arm failed");
            Ok(ExitCode::from(1))
        }
    }
}

fn cmd_verify(flags: &Flags) -> Result<ExitCode> {
    let cfg = flags.resolve()?;
    let settings = VerifySettings {
        integrator: cfg.integrator_config()?,
        scale: ScaleFactor::new(cfg.scale)?,
        seed: cfg.seed,
    };
    let results = run_checks(&settings);
    print!("{}", format_table(&results));
    Ok(if results.iter().all(|r| r.passed) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn cmd_gen_graph(flags: &Flags) -> Result<ExitCode> {
    let cfg = flags.resolve()?;
    let graph = cfg.load_graph()?;
    let text = serialize_graph(&graph);
    std::fs::create_dir_all(&cfg.out).map_err(|e| Error::Io(format!("{}: {e}", cfg.out.display())))?;
    let path = cfg.out.join("graph.txt");
    write_file(&path, &text)?;
    print!("{text}");
    eprintln!("wrote {}", path.display());
    Ok(ExitCode::SUCCESS)
}
