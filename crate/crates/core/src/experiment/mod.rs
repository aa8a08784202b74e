//! Experiment pipelines behind the command line: graph setup, probability
//! design, multi-realization runs, bias-corrected runs, SPSA design and the
//! three reference figure bundles.

mod config;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

pub use config::{ExperimentConfig, GraphSource, Method};

use crate::calibrate::{corrected_run_with_alpha, estimate_alpha, AlphaKey, AlphaStore, AlphaWeights};
use crate::centrality::{
    betweenness_probabilities, degree_probabilities, pagerank_probabilities, ProbabilityVector,
};
use crate::engine::{
    aggregate, aggregated_csv, checkpoint_grid, mean, metrics_csv, metrics_series, run_consensus, spread,
    initial_values, MetricsRow, StopRule, Termination,
};
use crate::graph::{erdos_renyi, Graph};
use crate::mixing::{base_mixing_matrix, default_epsilon, expected_matrix, verify_convergence_conditions, MixingMatrix};
use crate::optimizer::{objective, project_capped_simplex, spsa_optimize, OptimizationTrace};
use crate::scheduler::{ScheduleStream, SCHEDULE_LABEL};
use crate::{Error, Result};

/// A graph with its base mixing matrix.
#[derive(Clone, Debug)]
pub struct Setup {
    pub graph: Graph,
    pub epsilon: f64,
    pub w: MixingMatrix,
}

impl Setup {
    pub fn new(graph: Graph, epsilon: Option<f64>) -> Result<Self> {
        graph.require_connected()?;
        let epsilon = epsilon.unwrap_or_else(|| default_epsilon(&graph));
        let w = base_mixing_matrix(&graph, epsilon)?;
        Ok(Self { graph, epsilon, w })
    }

    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        let graph = match &cfg.graph {
            GraphSource::Generate { n, edge_prob, seed, max_retries } => erdos_renyi(*n, *edge_prob, *seed, *max_retries)?,
            GraphSource::File(path) => Graph::read_edge_list(path)?,
        };
        Self::new(graph, cfg.epsilon)
    }

    pub fn n(&self) -> usize {
        self.graph.node_count()
    }
}

/// Probability vector for `method`. SPSA also returns its trace.
pub fn resolve_probabilities(
    setup: &Setup,
    cfg: &ExperimentConfig,
    method: &Method,
) -> Result<(ProbabilityVector, Option<OptimizationTrace>)> {
    let n = setup.n();
    let budget = cfg.budget;
    let p = match method {
        Method::Full => ProbabilityVector::ones(n),
        Method::Uniform => ProbabilityVector::uniform(n, budget)?,
        Method::Degree => degree_probabilities(&setup.graph, budget)?,
        Method::PageRank => pagerank_probabilities(&setup.graph, budget, cfg.damping)?,
        Method::Betweenness => betweenness_probabilities(&setup.graph, budget, cfg.beta)?,
        Method::File(path) => {
            let p = ProbabilityVector::read(path)?;
            if p.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: p.len() });
            }
            p
        }
        Method::Spsa => {
            if matches!(cfg.spsa_init, Method::Spsa) {
                return Err(Error::InvalidParameter("spsa_init cannot itself be spsa".into()));
            }
            let (init, _) = resolve_probabilities(setup, cfg, &cfg.spsa_init)?;
            let (p, trace) = optimize(setup, cfg, &init)?;
            return Ok((p, Some(trace)));
        }
    };
    Ok((p, None))
}

/// SPSA from `init`, first projected onto the floor-constrained feasible set
/// if it dips below `p_min`.
pub fn optimize(
    setup: &Setup,
    cfg: &ExperimentConfig,
    init: &ProbabilityVector,
) -> Result<(ProbabilityVector, OptimizationTrace)> {
    if cfg.budget > setup.n() as f64 {
        return Err(Error::BudgetExceedsNodes { budget: cfg.budget, n: setup.n() });
    }
    let spsa = cfg.spsa_config();
    let start = if init.as_slice().iter().all(|&v| v >= spsa.p_min) {
        init.clone()
    } else {
        project_capped_simplex(init.as_slice(), cfg.budget, spsa.p_min, 1.0)?
    };
    spsa_optimize(&setup.w, cfg.budget, &start, &spsa)
}

/// Outcome of one realization.
#[derive(Clone, Debug)]
pub struct Realization {
    pub index: usize,
    pub schedule_seed: u64,
    /// True average of the original initial values.
    pub target: f64,
    pub final_state: Vec<f64>,
    pub termination: Termination,
    pub series: Vec<MetricsRow>,
    pub calibration: Option<AlphaWeights>,
}

impl Realization {
    pub fn final_spread(&self) -> f64 {
        spread(&self.final_state)
    }

    pub fn final_rmse(&self) -> f64 {
        self.series.last().map_or(f64::NAN, |r| r.rmse)
    }

    pub fn consensus_slots(&self) -> u64 {
        self.series.last().map_or(0, |r| r.cumulative_slots)
    }
}

/// One plotted curve: per-realization series and their average on the slot grid.
#[derive(Clone, Debug)]
pub struct Curve {
    pub name: String,
    pub p: ProbabilityVector,
    pub realizations: Vec<Realization>,
    pub aggregated: Vec<MetricsRow>,
}

impl Curve {
    pub fn mean_final_rmse(&self) -> f64 {
        self.realizations.iter().map(Realization::final_rmse).sum::<f64>() / self.realizations.len() as f64
    }

    /// Per-realization slots until the stddev drops below `threshold`, averaged;
    /// `None` if some realization never gets there.
    pub fn mean_slots_to_threshold(&self, threshold: f64) -> Option<f64> {
        let slots: Option<Vec<u64>> =
            self.realizations.iter().map(|r| crate::engine::slots_to_threshold(&r.series, threshold)).collect();
        slots.map(|s| s.iter().sum::<u64>() as f64 / s.len() as f64)
    }

    pub fn realizations_csv(&self) -> String {
        metrics_csv(&self.realizations.iter().map(|r| r.series.clone()).collect::<Vec<_>>())
    }

    pub fn aggregated_csv(&self) -> String {
        aggregated_csv(&self.aggregated)
    }

    /// Per-realization terminal values and slot costs.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from(
            "realization,schedule_seed,termination,consensus_slots,final_spread,final_rmse,true_average,final_mean,\
             calibration_rounds,calibration_slots,calibration_slots_separate_runs\n",
        );
        for r in &self.realizations {
            let (rounds, slots, separate) = r
                .calibration
                .as_ref()
                .map_or((String::new(), String::new(), String::new()), |a| {
                    (a.rounds.to_string(), a.slots.to_string(), a.separate_runs_slots().to_string())
                });
            let _ = writeln!(
                out,
                "{},{},{:?},{},{:?},{:?},{:?},{:?},{},{},{}",
                r.index,
                r.schedule_seed,
                r.termination,
                r.consensus_slots(),
                r.final_spread(),
                r.final_rmse(),
                r.target,
                mean(&r.final_state),
                rounds,
                slots,
                separate
            );
        }
        out
    }
}

fn stop_rule(cfg: &ExperimentConfig) -> StopRule {
    StopRule { spread_tol: cfg.spread_tol, max_rounds: cfg.max_rounds, max_slots: cfg.slot_budget }
}

fn grid(cfg: &ExperimentConfig, realizations: &[Realization]) -> Vec<u64> {
    let end = cfg
        .slot_budget
        .unwrap_or_else(|| realizations.iter().map(Realization::consensus_slots).max().unwrap_or(0));
    checkpoint_grid(cfg.grid_step, end)
}

fn finish(name: &str, cfg: &ExperimentConfig, p: ProbabilityVector, realizations: Vec<Realization>) -> Result<Curve> {
    let series: Vec<Vec<MetricsRow>> = realizations.iter().map(|r| r.series.clone()).collect();
    let aggregated = aggregate(&series, &grid(cfg, &realizations))?;
    Ok(Curve { name: name.to_string(), p, realizations, aggregated })
}

fn realization_inputs(setup: &Setup, cfg: &ExperimentConfig, r: usize) -> (Vec<f64>, u64) {
    (initial_values(cfg.init_seed, r as u64, setup.n()), cfg.schedule_seed.wrapping_add(r as u64))
}

/// Plain (biased) consensus runs, one per realization. Realizations run in
/// parallel; results are ordered by realization index.
pub fn simulate(setup: &Setup, cfg: &ExperimentConfig, p: &ProbabilityVector, name: &str) -> Result<Curve> {
    cfg.validate()?;
    let stop = stop_rule(cfg);
    let realizations = (0..cfg.realizations)
        .into_par_iter()
        .map(|r| {
            let (x0, seed) = realization_inputs(setup, cfg, r);
            let target = mean(&x0);
            let traj = run_consensus(&setup.w, &x0, p, &ScheduleStream::new(seed, SCHEDULE_LABEL), &stop)?;
            Ok(Realization {
                index: r,
                schedule_seed: seed,
                target,
                final_state: traj.final_state().to_vec(),
                termination: traj.termination,
                series: metrics_series(&traj, target),
                calibration: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    finish(name, cfg, p.clone(), realizations)
}

/// Pre-compensated runs. Each realization calibrates on its own schedule
/// stream (or `cfg.calibration_seed` when set) and then runs on its own
/// stream. When `store` is given, weights are looked up there first and
/// saved after calibration.
pub fn simulate_corrected(
    setup: &Setup,
    cfg: &ExperimentConfig,
    p: &ProbabilityVector,
    name: &str,
    store: Option<&AlphaStore>,
) -> Result<Curve> {
    cfg.validate()?;
    let stop = stop_rule(cfg);
    let calibration_stop = StopRule::spread(cfg.calibration_tol, cfg.calibration_max_rounds);
    let graph_hash = setup.graph.content_hash();
    let p_hash = p.content_hash();
    let realizations = (0..cfg.realizations)
        .into_par_iter()
        .map(|r| {
            let (x0, seed) = realization_inputs(setup, cfg, r);
            let target = mean(&x0);
            let run_stream = ScheduleStream::new(seed, SCHEDULE_LABEL);
            let calib_stream = ScheduleStream::new(cfg.calibration_seed.unwrap_or(seed), SCHEDULE_LABEL);
            let key = AlphaKey {
                graph_hash: graph_hash.clone(),
                epsilon_bits: setup.epsilon.to_bits(),
                p_hash: p_hash.clone(),
                seed: calib_stream.seed(),
                label: calib_stream.label().to_string(),
            };
            let cached = match store {
                Some(s) => s.load(&key)?,
                None => None,
            };
            let alpha = match cached {
                Some(a) => a,
                None => {
                    let a = estimate_alpha(&setup.w, p, &calib_stream, &calibration_stop)?;
                    if let Some(s) = store {
                        s.save(&key, &a)?;
                    }
                    a
                }
            };
            let run = corrected_run_with_alpha(&setup.w, &x0, p, alpha, &run_stream, &stop)?;
            Ok(Realization {
                index: r,
                schedule_seed: seed,
                target,
                final_state: run.trajectory.final_state().to_vec(),
                termination: run.trajectory.termination,
                series: metrics_series(&run.trajectory, target),
                calibration: Some(run.alpha),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    finish(name, cfg, p.clone(), realizations)
}

fn write(path: PathBuf, text: &str) -> Result<PathBuf> {
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Writes `<name>_realizations.csv`, `<name>_aggregated.csv` and `<name>_summary.csv`.
pub fn write_curve(dir: &Path, curve: &Curve) -> Result<Vec<PathBuf>> {
    ensure_dir(dir)?;
    Ok(vec![
        write(dir.join(format!("{}_realizations.csv", curve.name)), &curve.realizations_csv())?,
        write(dir.join(format!("{}_aggregated.csv", curve.name)), &curve.aggregated_csv())?,
        write(dir.join(format!("{}_summary.csv", curve.name)), &curve.summary_csv())?,
    ])
}

fn manifest_text(cfg: &ExperimentConfig, setup: &Setup, extra: &[(String, String)]) -> String {
    let mut out = String::from("# parameters (feed back with --config to regenerate)\n");
    out.push_str(&cfg.to_manifest());
    let _ = writeln!(out, "# graph_hash: {}", setup.graph.content_hash());
    let _ = writeln!(out, "# nodes: {} edges: {} max_degree: {}", setup.n(), setup.graph.edge_count(), setup.graph.max_degree());
    let _ = writeln!(out, "# epsilon_used: {:?}", setup.epsilon);
    for (k, v) in extra {
        let _ = writeln!(out, "# {k}: {v}");
    }
    out
}

/// `run`: plain runs with the configured method.
pub fn cmd_run(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let setup = Setup::from_config(cfg)?;
    let (p, trace) = resolve_probabilities(&setup, cfg, &cfg.method)?;
    let curve = simulate(&setup, cfg, &p, cfg.method.name())?;
    let mut files = write_curve(&cfg.output, &curve)?;
    if let Some(trace) = trace {
        files.push(write(cfg.output.join("spsa_trace.csv"), &trace.to_csv())?);
        files.push(write(cfg.output.join("spsa_probabilities.txt"), &p.to_text())?);
    }
    files.push(write(cfg.output.join(format!("{}_manifest.txt", curve.name)), &manifest_text(cfg, &setup, &[]))?);
    Ok(files)
}

/// `corrected-run`: calibrated, pre-compensated runs; alpha files go to `<output>/alpha`.
pub fn cmd_corrected_run(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let setup = Setup::from_config(cfg)?;
    let (p, _) = resolve_probabilities(&setup, cfg, &cfg.method)?;
    let store = AlphaStore::new(cfg.output.join("alpha"));
    let name = format!("{}_corrected", cfg.method.name());
    let curve = simulate_corrected(&setup, cfg, &p, &name, Some(&store))?;
    let mut files = write_curve(&cfg.output, &curve)?;
    files.push(write(cfg.output.join(format!("{name}_manifest.txt")), &manifest_text(cfg, &setup, &[]))?);
    Ok(files)
}

/// `optimize-p`: SPSA from `spsa_init`; writes the optimized vector and the trace.
pub fn cmd_optimize(cfg: &ExperimentConfig) -> Result<(OptimizationTrace, Vec<PathBuf>)> {
    let setup = Setup::from_config(cfg)?;
    if cfg.budget > setup.n() as f64 {
        return Err(Error::BudgetExceedsNodes { budget: cfg.budget, n: setup.n() });
    }
    let (init, _) = resolve_probabilities(&setup, cfg, &cfg.spsa_init)?;
    let (p, trace) = optimize(&setup, cfg, &init)?;
    ensure_dir(&cfg.output)?;
    let initial = objective(&setup.w, &init)?;
    let extra = [
        ("initial_objective".to_string(), format!("{initial:?}")),
        ("best_objective".to_string(), format!("{:?}", trace.best_objective)),
    ];
    let files = vec![
        write(cfg.output.join("spsa_probabilities.txt"), &p.to_text())?,
        write(cfg.output.join("spsa_trace.csv"), &trace.to_csv())?,
        write(cfg.output.join("spsa_manifest.txt"), &manifest_text(cfg, &setup, &extra))?,
    ];
    Ok((trace, files))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Figure {
    /// Heuristic designs against full communication.
    Fig1,
    /// Bias and its removal with betweenness-based probabilities.
    Fig2,
    /// SPSA-optimized probabilities against betweenness.
    Fig3,
}

impl std::str::FromStr for Figure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fig1" => Ok(Figure::Fig1),
            "fig2" => Ok(Figure::Fig2),
            "fig3" => Ok(Figure::Fig3),
            other => Err(Error::InvalidParameter(format!("unknown figure `{other}` (fig1|fig2|fig3)"))),
        }
    }
}

impl Figure {
    pub fn name(&self) -> &'static str {
        match self {
            Figure::Fig1 => "fig1",
            Figure::Fig2 => "fig2",
            Figure::Fig3 => "fig3",
        }
    }
}

/// All curves of one figure, computed but not yet written.
#[derive(Clone, Debug)]
pub struct FigureBundle {
    pub figure: Figure,
    pub curves: Vec<Curve>,
    pub spsa_trace: Option<OptimizationTrace>,
    pub manifest: String,
}

impl FigureBundle {
    pub fn curve(&self, name: &str) -> Option<&Curve> {
        self.curves.iter().find(|c| c.name == name)
    }
}

pub fn compute_figure(cfg: &ExperimentConfig, figure: Figure) -> Result<FigureBundle> {
    let setup = Setup::from_config(cfg)?;
    let full = ProbabilityVector::ones(setup.n());
    let mut curves = vec![simulate(&setup, cfg, &full, "full")?];
    let mut spsa_trace = None;
    let mut extra = Vec::new();
    match figure {
        Figure::Fig1 => {
            for method in [Method::Degree, Method::PageRank, Method::Betweenness] {
                let (p, _) = resolve_probabilities(&setup, cfg, &method)?;
                curves.push(simulate(&setup, cfg, &p, method.name())?);
            }
        }
        Figure::Fig2 => {
            let (p, _) = resolve_probabilities(&setup, cfg, &Method::Betweenness)?;
            curves.push(simulate(&setup, cfg, &p, "betweenness_uncorrected")?);
            curves.push(simulate_corrected(&setup, cfg, &p, "betweenness_corrected", None)?);
        }
        Figure::Fig3 => {
            let (pb, _) = resolve_probabilities(&setup, cfg, &Method::Betweenness)?;
            let (ps, trace) = optimize(&setup, cfg, &pb)?;
            extra.push(("betweenness_objective".to_string(), format!("{:?}", objective(&setup.w, &pb)?)));
            extra.push(("spsa_objective".to_string(), format!("{:?}", trace.best_objective)));
            curves.push(simulate(&setup, cfg, &pb, "betweenness")?);
            curves.push(simulate(&setup, cfg, &ps, "spsa")?);
            spsa_trace = Some(trace);
        }
    }
    extra.insert(0, ("figure".to_string(), figure.name().to_string()));
    let manifest = manifest_text(cfg, &setup, &extra);
    Ok(FigureBundle { figure, curves, spsa_trace, manifest })
}

/// Writes `<fig>_<curve>.csv` (aggregated) for every curve plus
/// `<fig>_manifest.txt`, and the SPSA vector and trace for fig3.
pub fn write_figure(dir: &Path, bundle: &FigureBundle) -> Result<Vec<PathBuf>> {
    ensure_dir(dir)?;
    let fig = bundle.figure.name();
    let mut files = Vec::new();
    for curve in &bundle.curves {
        files.push(write(dir.join(format!("{fig}_{}.csv", curve.name)), &curve.aggregated_csv())?);
    }
    if let Some(trace) = &bundle.spsa_trace {
        files.push(write(dir.join(format!("{fig}_spsa_trace.csv")), &trace.to_csv())?);
        files.push(write(dir.join(format!("{fig}_spsa_probabilities.txt")), &trace.best.to_text())?);
    }
    files.push(write(dir.join(format!("{fig}_manifest.txt")), &bundle.manifest)?);
    Ok(files)
}

pub fn cmd_reproduce(cfg: &ExperimentConfig, figure: Figure) -> Result<Vec<PathBuf>> {
    let bundle = compute_figure(cfg, figure)?;
    write_figure(&cfg.output, &bundle)
}

/// `verify`: spectrum report for the base matrix and for the expected
/// matrix under the configured method.
pub fn cmd_verify(cfg: &ExperimentConfig) -> Result<String> {
    let setup = Setup::from_config(cfg)?;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "nodes: {}\nedges: {}\nmax_degree: {}\nepsilon: {:?}\nconnected: true",
        setup.n(),
        setup.graph.edge_count(),
        setup.graph.max_degree(),
        setup.epsilon
    );
    out.push_str("[base]\n");
    out.push_str(&verify_convergence_conditions(&setup.w)?.to_string());
    if cfg.method != Method::Full {
        let (p, _) = resolve_probabilities(&setup, cfg, &cfg.method)?;
        let expected = expected_matrix(&setup.w, &p)?;
        let _ = writeln!(out, "[expected method={}]", cfg.method.name());
        out.push_str(&verify_convergence_conditions(&expected)?.to_string());
    }
    Ok(out)
}

/// `t: bitstring` lines for the first `rounds` rounds of realization
/// `realization` under the configured method, for auditing a run.
pub fn schedule_log(cfg: &ExperimentConfig, realization: usize, rounds: u64) -> Result<String> {
    let setup = Setup::from_config(cfg)?;
    let (p, _) = resolve_probabilities(&setup, cfg, &cfg.method)?;
    let (_, seed) = realization_inputs(&setup, cfg, realization);
    let stream = ScheduleStream::new(seed, SCHEDULE_LABEL);
    let mut out = String::new();
    for t in 0..rounds {
        let _ = writeln!(out, "{}", crate::scheduler::schedule(&stream, &p, t));
    }
    Ok(out)
}
