use std::path::PathBuf;
use std::process::ExitCode;

use bcast_consensus::experiment::{self, ExperimentConfig, Figure};
use bcast_consensus::graph::{erdos_renyi, DEFAULT_MAX_RETRIES};
use bcast_consensus::{Error, Result};
use clap::{Args, Parser, Subcommand};

/// Average consensus with probabilistic broadcast scheduling.
#[derive(Parser)]
#[command(name = "bcast", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a connected Erdos-Renyi graph and write it as an edge list.
    Generate {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        edge_prob: f64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_MAX_RETRIES)]
        max_retries: usize,
        /// Output edge-list file.
        #[arg(short, long, default_value = "graph.txt")]
        output: PathBuf,
    },
    /// Consensus runs with the configured probability design.
    Run {
        #[command(flatten)]
        opts: ConfigArgs,
        /// Also write `schedule.txt` with the first ROUNDS schedules of realization 0.
        #[arg(long, value_name = "ROUNDS")]
        log_schedule: Option<u64>,
    },
    /// Calibrated, pre-compensated consensus runs.
    CorrectedRun {
        #[command(flatten)]
        opts: ConfigArgs,
    },
    /// Optimize broadcast probabilities with SPSA.
    OptimizeP {
        #[command(flatten)]
        opts: ConfigArgs,
    },
    /// Regenerate the CSV bundle for one reference figure.
    Reproduce {
        /// fig1, fig2 or fig3.
        figure: String,
        #[command(flatten)]
        opts: ConfigArgs,
    },
    /// Print the convergence conditions for a graph and step size.
    Verify {
        #[command(flatten)]
        opts: ConfigArgs,
    },
}

/// Shared configuration: `--config` file, then explicit flags, then `--set`.
#[derive(Args)]
struct ConfigArgs {
    /// Flat key=value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Extra `key=value` overrides, applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    edge_prob: Option<f64>,
    /// Graph generation seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_retries: Option<usize>,
    /// Edge-list file to use instead of generating a graph.
    #[arg(long)]
    graph: Option<PathBuf>,
    /// Expected number of broadcasters per round.
    #[arg(long, short = 'k')]
    k: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// full, uniform, degree, pagerank, betweenness, spsa or file:<path>.
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    realizations: Option<usize>,
    /// Stop after this many cumulative slots ("none" to disable).
    #[arg(long)]
    slot_budget: Option<String>,
    /// Stop once max-min spread falls below this ("none" to disable).
    #[arg(long)]
    spread_tol: Option<String>,
    #[arg(long)]
    max_rounds: Option<usize>,
    #[arg(long)]
    grid_step: Option<u64>,
    #[arg(long)]
    init_seed: Option<u64>,
    #[arg(long)]
    schedule_seed: Option<u64>,
    /// Calibrate on a different schedule seed than the run (negative control).
    #[arg(long)]
    calibration_seed: Option<u64>,
    #[arg(long)]
    spsa_iterations: Option<usize>,
    #[arg(long)]
    spsa_seed: Option<u64>,
    #[arg(long)]
    spsa_init: Option<String>,
    #[arg(long)]
    p_min: Option<f64>,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::default();
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        let flags: [(&str, Option<String>); 22] = [
            ("n", self.n.map(|v| v.to_string())),
            ("edge_prob", self.edge_prob.map(|v| v.to_string())),
            ("graph_seed", self.seed.map(|v| v.to_string())),
            ("max_retries", self.max_retries.map(|v| v.to_string())),
            ("graph_file", self.graph.as_ref().map(|p| p.display().to_string())),
            ("k", self.k.map(|v| v.to_string())),
            ("epsilon", self.epsilon.map(|v| v.to_string())),
            ("method", self.method.clone()),
            ("beta", self.beta.map(|v| v.to_string())),
            ("realizations", self.realizations.map(|v| v.to_string())),
            ("slot_budget", self.slot_budget.clone()),
            ("spread_tol", self.spread_tol.clone()),
            ("max_rounds", self.max_rounds.map(|v| v.to_string())),
            ("grid_step", self.grid_step.map(|v| v.to_string())),
            ("init_seed", self.init_seed.map(|v| v.to_string())),
            ("schedule_seed", self.schedule_seed.map(|v| v.to_string())),
            ("calibration_seed", self.calibration_seed.map(|v| v.to_string())),
            ("spsa_iterations", self.spsa_iterations.map(|v| v.to_string())),
            ("spsa_seed", self.spsa_seed.map(|v| v.to_string())),
            ("spsa_init", self.spsa_init.clone()),
            ("p_min", self.p_min.map(|v| v.to_string())),
            ("output", self.output.as_ref().map(|p| p.display().to_string())),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, &v)?;
            }
        }
        for item in &self.set {
            let (key, value) = item
                .split_once('=')
                .ok_or_else(|| Error::InvalidParameter(format!("--set expects KEY=VALUE, got `{item}`")))?;
            cfg.set(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn print_files(files: &[PathBuf]) {
    for f in files {
        println!("wrote {}", f.display());
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { n, edge_prob, seed, max_retries, output } => {
            let g = erdos_renyi(n, edge_prob, seed, max_retries)?;
            g.write_edge_list(&output)?;
            println!("nodes: {}", g.node_count());
            println!("edges: {}", g.edge_count());
            println!("max_degree: {}", g.max_degree());
            println!("connected: {}", g.is_connected());
            println!("wrote {}", output.display());
        }
        Command::Run { opts, log_schedule } => {
            let cfg = opts.resolve()?;
            let mut files = experiment::cmd_run(&cfg)?;
            if let Some(rounds) = log_schedule {
                let path = cfg.output.join("schedule.txt");
                std::fs::write(&path, experiment::schedule_log(&cfg, 0, rounds)?)
                    .map_err(|e| Error::Io { path: path.clone(), source: e })?;
                files.push(path);
            }
            print_files(&files);
        }
        Command::CorrectedRun { opts } => print_files(&experiment::cmd_corrected_run(&opts.resolve()?)?),
        Command::OptimizeP { opts } => {
            let (trace, files) = experiment::cmd_optimize(&opts.resolve()?)?;
            println!("best_objective: {:?}", trace.best_objective);
            print_files(&files);
        }
        Command::Reproduce { figure, opts } => {
            let figure: Figure = figure.parse()?;
            print_files(&experiment::cmd_reproduce(&opts.resolve()?, figure)?);
        }
        Command::Verify { opts } => print!("{}", experiment::cmd_verify(&opts.resolve()?)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}: {}", e.class(), e.to_string().replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
