//! Flat `key=value` experiment configuration.
//!
//! Precedence is command-line overrides, then a config file, then the
//! built-in defaults (the reference setup: 100 nodes, K = 80,
//! eps = 1 / (max_degree + 1), 10 realizations).

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::calibrate::{DEFAULT_CALIBRATION_MAX_ROUNDS, DEFAULT_CALIBRATION_TOL};
use crate::centrality::DEFAULT_DAMPING;
use crate::engine::{DEFAULT_MAX_ROUNDS, DEFAULT_SPREAD_TOL};
use crate::graph::DEFAULT_MAX_RETRIES;
use crate::optimizer::SpsaConfig;
use crate::{Error, Result};

/// How the broadcast-probability vector is chosen.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Method {
    /// Every node broadcasts every round (`p = 1`).
    Full,
    Uniform,
    Degree,
    PageRank,
    Betweenness,
    Spsa,
    File(PathBuf),
}

impl Method {
    /// Short name used for output files.
    pub fn name(&self) -> &str {
        match self {
            Method::Full => "full",
            Method::Uniform => "uniform",
            Method::Degree => "degree",
            Method::PageRank => "pagerank",
            Method::Betweenness => "betweenness",
            Method::Spsa => "spsa",
            Method::File(_) => "file",
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "full" => Method::Full,
            "uniform" => Method::Uniform,
            "degree" => Method::Degree,
            "pagerank" => Method::PageRank,
            "betweenness" => Method::Betweenness,
            "spsa" => Method::Spsa,
            other => match other.strip_prefix("file:") {
                Some(path) if !path.is_empty() => Method::File(PathBuf::from(path)),
                _ => {
                    return Err(Error::InvalidParameter(format!(
                        "unknown method `{other}` (expected degree|pagerank|betweenness|uniform|spsa|full|file:<path>)"
                    )))
                }
            },
        })
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::File(path) => write!(f, "file:{}", path.display()),
            other => f.write_str(other.name()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum GraphSource {
    Generate { n: usize, edge_prob: f64, seed: u64, max_retries: usize },
    File(PathBuf),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub graph: GraphSource,
    pub budget: f64,
    pub epsilon: Option<f64>,
    pub method: Method,
    pub beta: Option<f64>,
    pub damping: f64,
    pub realizations: usize,
    pub slot_budget: Option<u64>,
    pub spread_tol: Option<f64>,
    pub max_rounds: usize,
    pub grid_step: u64,
    pub init_seed: u64,
    pub schedule_seed: u64,
    /// Schedule seed used for calibration; `None` means the run's own seed.
    /// Setting it differently is only useful as a negative control.
    pub calibration_seed: Option<u64>,
    pub calibration_tol: f64,
    pub calibration_max_rounds: usize,
    pub spsa: SpsaConfig,
    /// `A` for SPSA; `None` means 10% of the iterations.
    pub spsa_big_a: Option<f64>,
    pub spsa_init: Method,
    pub output: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            graph: GraphSource::Generate { n: 100, edge_prob: 0.1, seed: 7, max_retries: DEFAULT_MAX_RETRIES },
            budget: 80.0,
            epsilon: None,
            method: Method::Betweenness,
            beta: None,
            damping: DEFAULT_DAMPING,
            realizations: 10,
            slot_budget: Some(20_000),
            spread_tol: Some(DEFAULT_SPREAD_TOL),
            max_rounds: DEFAULT_MAX_ROUNDS,
            grid_step: 100,
            init_seed: 1,
            schedule_seed: 1000,
            calibration_seed: None,
            calibration_tol: DEFAULT_CALIBRATION_TOL,
            calibration_max_rounds: DEFAULT_CALIBRATION_MAX_ROUNDS,
            spsa: SpsaConfig::new(500, 2024),
            spsa_big_a: None,
            spsa_init: Method::Betweenness,
            output: PathBuf::from("out"),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.trim().parse().map_err(|_| Error::InvalidParameter(format!("bad value `{value}` for `{key}`")))
}

/// `none` clears an optional setting.
fn parse_opt<T: FromStr>(key: &str, value: &str) -> Result<Option<T>> {
    if value.trim() == "none" {
        Ok(None)
    } else {
        parse(key, value).map(Some)
    }
}

fn show_opt<T: fmt::Debug>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "none".to_string(), |v| format!("{v:?}"))
}

impl ExperimentConfig {
    /// Sets one key. Unknown keys are errors so that typos surface.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim();
        let value = value.trim();
        match key {
            "n" | "edge_prob" | "graph_seed" | "max_retries" => {
                let (mut n, mut edge_prob, mut seed, mut max_retries) = match &self.graph {
                    GraphSource::Generate { n, edge_prob, seed, max_retries } => (*n, *edge_prob, *seed, *max_retries),
                    GraphSource::File(_) => (100, 0.1, 7, DEFAULT_MAX_RETRIES),
                };
                match key {
                    "n" => n = parse(key, value)?,
                    "edge_prob" => edge_prob = parse(key, value)?,
                    "graph_seed" => seed = parse(key, value)?,
                    _ => max_retries = parse(key, value)?,
                }
                self.graph = GraphSource::Generate { n, edge_prob, seed, max_retries };
            }
            "graph_file" => self.graph = GraphSource::File(PathBuf::from(value)),
            "k" | "budget" => self.budget = parse(key, value)?,
            "epsilon" => self.epsilon = parse_opt(key, value)?,
            "method" => self.method = value.parse()?,
            "beta" => self.beta = parse_opt(key, value)?,
            "damping" => self.damping = parse(key, value)?,
            "realizations" => self.realizations = parse(key, value)?,
            "slot_budget" => self.slot_budget = parse_opt(key, value)?,
            "spread_tol" => self.spread_tol = parse_opt(key, value)?,
            "max_rounds" => self.max_rounds = parse(key, value)?,
            "grid_step" => self.grid_step = parse(key, value)?,
            "init_seed" => self.init_seed = parse(key, value)?,
            "schedule_seed" => self.schedule_seed = parse(key, value)?,
            "calibration_seed" => self.calibration_seed = parse_opt(key, value)?,
            "calibration_tol" => self.calibration_tol = parse(key, value)?,
            "calibration_max_rounds" => self.calibration_max_rounds = parse(key, value)?,
            "spsa_iterations" => self.spsa.iterations = parse(key, value)?,
            "spsa_a" => self.spsa.a = parse(key, value)?,
            "spsa_big_a" => self.spsa_big_a = parse_opt(key, value)?,
            "spsa_c" => self.spsa.c = parse(key, value)?,
            "spsa_alpha" => self.spsa.alpha_gain = parse(key, value)?,
            "spsa_gamma" => self.spsa.gamma_gain = parse(key, value)?,
            "p_min" => self.spsa.p_min = parse(key, value)?,
            "spsa_seed" => self.spsa.seed = parse(key, value)?,
            "spsa_init" => self.spsa_init = value.parse()?,
            "output" => self.output = PathBuf::from(value),
            other => return Err(Error::InvalidParameter(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Applies `key=value` lines; blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str, source: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Parse { path: source.into(), line: lineno + 1, message: "expected key=value".into() });
            };
            self.set(key, value).map_err(|e| Error::Parse {
                path: source.into(),
                line: lineno + 1,
                message: e.to_string(),
            })?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_text(&text, &path.display().to_string())
    }

    /// SPSA settings with `A` resolved.
    pub fn spsa_config(&self) -> SpsaConfig {
        let mut cfg = self.spsa.clone();
        cfg.big_a = self.spsa_big_a.unwrap_or(0.1 * cfg.iterations as f64);
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        if self.realizations == 0 {
            return Err(Error::InvalidParameter("realizations must be at least 1".into()));
        }
        if !(self.budget > 0.0) {
            return Err(Error::InvalidParameter(format!("K must be positive, got {}", self.budget)));
        }
        if self.grid_step == 0 {
            return Err(Error::InvalidParameter("grid_step must be positive".into()));
        }
        if self.spread_tol.is_none() && self.slot_budget.is_none() && self.max_rounds == 0 {
            return Err(Error::InvalidParameter("stop rule never stops".into()));
        }
        Ok(())
    }

    /// Every parameter except the output directory, in `key=value` form.
    /// Feeding this back through [`ExperimentConfig::apply_text`] reproduces the run.
    pub fn to_manifest(&self) -> String {
        let mut lines = Vec::new();
        match &self.graph {
            GraphSource::Generate { n, edge_prob, seed, max_retries } => {
                lines.push(format!("n={n}"));
                lines.push(format!("edge_prob={edge_prob:?}"));
                lines.push(format!("graph_seed={seed}"));
                lines.push(format!("max_retries={max_retries}"));
            }
            GraphSource::File(path) => lines.push(format!("graph_file={}", path.display())),
        }
        lines.push(format!("k={:?}", self.budget));
        lines.push(format!("epsilon={}", show_opt(&self.epsilon)));
        lines.push(format!("method={}", self.method));
        lines.push(format!("beta={}", show_opt(&self.beta)));
        lines.push(format!("damping={:?}", self.damping));
        lines.push(format!("realizations={}", self.realizations));
        lines.push(format!("slot_budget={}", show_opt(&self.slot_budget)));
        lines.push(format!("spread_tol={}", show_opt(&self.spread_tol)));
        lines.push(format!("max_rounds={}", self.max_rounds));
        lines.push(format!("grid_step={}", self.grid_step));
        lines.push(format!("init_seed={}", self.init_seed));
        lines.push(format!("schedule_seed={}", self.schedule_seed));
        lines.push(format!("calibration_seed={}", show_opt(&self.calibration_seed)));
        lines.push(format!("calibration_tol={:?}", self.calibration_tol));
        lines.push(format!("calibration_max_rounds={}", self.calibration_max_rounds));
        lines.push(format!("spsa_iterations={}", self.spsa.iterations));
        lines.push(format!("spsa_a={:?}", self.spsa.a));
        lines.push(format!("spsa_big_a={}", show_opt(&self.spsa_big_a)));
        lines.push(format!("spsa_c={:?}", self.spsa.c));
        lines.push(format!("spsa_alpha={:?}", self.spsa.alpha_gain));
        lines.push(format!("spsa_gamma={:?}", self.spsa.gamma_gain));
        lines.push(format!("p_min={:?}", self.spsa.p_min));
        lines.push(format!("spsa_seed={}", self.spsa.seed));
        lines.push(format!("spsa_init={}", self.spsa_init));
        lines.join("\n") + "\n"
    }
}
