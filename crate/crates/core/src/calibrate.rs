//! Pre-compensation of initial values.
//!
//! Under biased compensation the product of round matrices tends to a random
//! rank-one matrix `u alpha^T`, so a plain run converges to `alpha^T x(0)`
//! rather than the average. Calibrating `alpha` on the same schedule sequence
//! and starting from `x_i(0) / (alpha_i N)` makes the run land on the average.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::centrality::ProbabilityVector;
use crate::engine::{apply_round, mean, run_consensus, spread, StopRule, Trajectory};
use crate::graph::hex;
use crate::mixing::MixingMatrix;
use crate::scheduler::{schedule, ScheduleStream};
use crate::{Error, Result};

pub const DEFAULT_CALIBRATION_TOL: f64 = 1e-12;
pub const DEFAULT_CALIBRATION_MAX_ROUNDS: usize = 100_000;
pub const DEFAULT_ALPHA_THRESHOLD: f64 = 1e-12;

pub fn default_calibration_stop() -> StopRule {
    StopRule::spread(DEFAULT_CALIBRATION_TOL, DEFAULT_CALIBRATION_MAX_ROUNDS)
}

/// Limit weights `alpha` and the schedule stream they belong to.
#[derive(Clone, Debug, PartialEq)]
pub struct AlphaWeights {
    pub alpha: Vec<f64>,
    pub seed: u64,
    pub label: String,
    /// Calibration rounds `J`.
    pub rounds: usize,
    /// Largest column spread of the final product; bounds `|alpha_i - alpha_i(inf)|`.
    pub spread: f64,
    /// Slots consumed by the calibration schedules, counted once.
    pub slots: u64,
}

impl AlphaWeights {
    /// Slot cost when calibration is run as `N` separate consensus processes
    /// over the same schedules, as a deployed network would have to.
    pub fn separate_runs_slots(&self) -> u64 {
        self.slots * self.alpha.len() as u64
    }

    pub fn sum(&self) -> f64 {
        self.alpha.iter().sum()
    }
}

/// Runs the `N` unit-vector consensus processes at once as the matrix
/// iteration `M(t+1) = Wbar(t) M(t)`, `M(0) = I`. Column `i` of `M(t)` is
/// exactly the state of the run started from `e_i`.
pub fn estimate_alpha(
    w: &MixingMatrix,
    p: &ProbabilityVector,
    stream: &ScheduleStream,
    stop: &StopRule,
) -> Result<AlphaWeights> {
    let n = w.dim();
    if p.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: p.len() });
    }
    if let Some((i, v)) = p.as_slice().iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(Error::InvalidParameter(format!("calibration needs p_i > 0, but p[{i}] = {v}")));
    }
    let tol = stop.spread_tol.unwrap_or(DEFAULT_CALIBRATION_TOL);
    let links = w.links();
    let mut columns: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut e = vec![0.0; n];
            e[i] = 1.0;
            e
        })
        .collect();
    let mut scratch = vec![0.0; n];
    let mut slots = 0u64;
    let mut t = 0usize;
    loop {
        let worst = columns.iter().map(|c| spread(c)).fold(0.0, f64::max);
        if worst < tol {
            return Ok(AlphaWeights {
                alpha: columns.iter().map(|c| mean(c)).collect(),
                seed: stream.seed(),
                label: stream.label().to_string(),
                rounds: t,
                spread: worst,
                slots,
            });
        }
        if t >= stop.max_rounds {
            return Err(Error::CalibrationFailed { rounds: t, spread: worst });
        }
        let v = schedule(stream, p, t as u64);
        for col in &mut columns {
            apply_round(&links, &v.active, col, &mut scratch);
            std::mem::swap(col, &mut scratch);
        }
        slots += v.slots();
        t += 1;
    }
}

/// `x_i(0) / (alpha_i N)`.
pub fn precompensate(x0: &[f64], alpha: &AlphaWeights) -> Result<Vec<f64>> {
    precompensate_with_threshold(x0, alpha, DEFAULT_ALPHA_THRESHOLD)
}

pub fn precompensate_with_threshold(x0: &[f64], alpha: &AlphaWeights, threshold: f64) -> Result<Vec<f64>> {
    let n = alpha.alpha.len();
    if x0.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: x0.len() });
    }
    if let Some((index, &value)) = alpha.alpha.iter().enumerate().find(|(_, a)| !(**a > threshold)) {
        return Err(Error::DegenerateAlpha { index, value });
    }
    Ok(x0.iter().zip(&alpha.alpha).map(|(x, a)| x / (a * n as f64)).collect())
}

#[derive(Clone, Debug)]
pub struct CorrectedRun {
    pub alpha: AlphaWeights,
    pub precompensated: Vec<f64>,
    pub trajectory: Trajectory,
}

/// Calibrate, pre-compensate, then run on the very same schedule stream.
pub fn corrected_run(
    w: &MixingMatrix,
    x0: &[f64],
    p: &ProbabilityVector,
    stream: &ScheduleStream,
    calibration: &StopRule,
    stop: &StopRule,
) -> Result<CorrectedRun> {
    let alpha = estimate_alpha(w, p, stream, calibration)?;
    corrected_run_with_alpha(w, x0, p, alpha, stream, stop)
}

/// Pre-compensates with an existing `alpha` and runs on `stream`. Only a
/// stream identical to the calibration stream removes the bias.
pub fn corrected_run_with_alpha(
    w: &MixingMatrix,
    x0: &[f64],
    p: &ProbabilityVector,
    alpha: AlphaWeights,
    stream: &ScheduleStream,
    stop: &StopRule,
) -> Result<CorrectedRun> {
    let precompensated = precompensate(x0, &alpha)?;
    let trajectory = run_consensus(w, &precompensated, p, stream, stop)?;
    Ok(CorrectedRun { alpha, precompensated, trajectory })
}

/// Everything alpha depends on. Stored weights are only valid for an exact match.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AlphaKey {
    pub graph_hash: String,
    pub epsilon_bits: u64,
    pub p_hash: String,
    pub seed: u64,
    pub label: String,
}

impl AlphaKey {
    pub fn file_name(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.header_fields().as_bytes());
        format!("alpha-{}.txt", &hex(&h.finalize())[..16])
    }

    fn header_fields(&self) -> String {
        format!(
            "graph={} epsilon={:?} p={} seed={} label={}",
            self.graph_hash,
            f64::from_bits(self.epsilon_bits),
            self.p_hash,
            self.seed,
            self.label
        )
    }
}

/// Alpha file: `# alpha <key fields> rounds=J spread=s slots=k`, then `index alpha` lines.
pub fn alpha_file_text(key: &AlphaKey, alpha: &AlphaWeights) -> String {
    let mut out = format!(
        "# alpha {} rounds={} spread={:?} slots={}\n",
        key.header_fields(),
        alpha.rounds,
        alpha.spread,
        alpha.slots
    );
    for (i, a) in alpha.alpha.iter().enumerate() {
        let _ = writeln!(out, "{i} {a:?}");
    }
    out
}

pub fn parse_alpha_file(text: &str, source: &str) -> Result<(AlphaKey, AlphaWeights)> {
    let err = |line: usize, message: String| Error::Parse { path: source.to_string(), line, message };
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| err(1, "empty alpha file".into()))?;
    let body = header.strip_prefix("# alpha ").ok_or_else(|| err(1, "missing `# alpha` header".into()))?;
    let field = |name: &str| {
        body.split_whitespace()
            .find_map(|kv| kv.strip_prefix(name).and_then(|r| r.strip_prefix('=')))
            .ok_or_else(|| err(1, format!("header lacks `{name}=`")))
    };
    let num = |name: &str| -> Result<f64> { field(name)?.parse().map_err(|_| err(1, format!("bad `{name}`"))) };
    let int = |name: &str| -> Result<u64> { field(name)?.parse().map_err(|_| err(1, format!("bad `{name}`"))) };
    let key = AlphaKey {
        graph_hash: field("graph")?.to_string(),
        epsilon_bits: num("epsilon")?.to_bits(),
        p_hash: field("p")?.to_string(),
        seed: int("seed")?,
        label: field("label")?.to_string(),
    };
    let mut alpha = Vec::new();
    for (k, raw) in lines.enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let mut it = line.split_whitespace();
        let (Some(i), Some(a)) = (it.next(), it.next()) else {
            return Err(err(k + 2, "expected `index alpha`".into()));
        };
        if i.parse::<usize>().ok() != Some(alpha.len()) {
            return Err(err(k + 2, format!("expected index {}", alpha.len())));
        }
        alpha.push(a.parse::<f64>().map_err(|_| err(k + 2, format!("bad alpha `{a}`")))?);
    }
    let weights = AlphaWeights {
        alpha,
        seed: key.seed,
        label: key.label.clone(),
        rounds: int("rounds")? as usize,
        spread: num("spread")?,
        slots: int("slots")?,
    };
    Ok((key, weights))
}

/// Content-addressed store of calibrated weights in a directory.
/// Writers of the same key produce the same bytes, so the last writer wins harmlessly.
#[derive(Clone, Debug)]
pub struct AlphaStore {
    dir: PathBuf,
}

impl AlphaStore {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn path(&self, key: &AlphaKey) -> PathBuf {
        self.dir.join(key.file_name())
    }

    pub fn save(&self, key: &AlphaKey, alpha: &AlphaWeights) -> Result<PathBuf> {
        std::fs::create_dir_all(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        let path = self.path(key);
        std::fs::write(&path, alpha_file_text(key, alpha)).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    /// Weights stored under `key`, if present and written for exactly that key.
    pub fn load(&self, key: &AlphaKey) -> Result<Option<AlphaWeights>> {
        let path = self.path(key);
        if !path.exists() {
            return Ok(None);
        }
        read_alpha_file(&path).map(|(stored, w)| (stored == *key).then_some(w))
    }
}

pub fn read_alpha_file(path: &Path) -> Result<(AlphaKey, AlphaWeights)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_alpha_file(&text, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::initial_values;
    use crate::graph::{erdos_renyi, Graph};
    use crate::mixing::{base_mixing_matrix, default_epsilon};
    use crate::scheduler::SCHEDULE_LABEL;

    fn path3() -> MixingMatrix {
        base_mixing_matrix(&Graph::path(3), 1.0 / 3.0).unwrap()
    }

    fn weights(alpha: Vec<f64>) -> AlphaWeights {
        AlphaWeights { alpha, seed: 0, label: SCHEDULE_LABEL.into(), rounds: 0, spread: 0.0, slots: 0 }
    }

    #[test]
    fn full_broadcast_gives_uniform_alpha() {
        let g = erdos_renyi(12, 0.4, 4, 100).unwrap();
        let w = base_mixing_matrix(&g, default_epsilon(&g)).unwrap();
        let s = ScheduleStream::new(3, SCHEDULE_LABEL);
        let a = estimate_alpha(&w, &ProbabilityVector::ones(12), &s, &default_calibration_stop()).unwrap();
        assert!(a.alpha.iter().all(|v| (v - 1.0 / 12.0).abs() < 1e-10));
        assert_eq!(a.slots, 12 * a.rounds as u64);
        assert_eq!(a.separate_runs_slots(), 144 * a.rounds as u64);
    }

    #[test]
    fn single_node_alpha_is_one() {
        let w = base_mixing_matrix(&Graph::path(1), 0.5).unwrap();
        let s = ScheduleStream::new(0, SCHEDULE_LABEL);
        let a = estimate_alpha(&w, &ProbabilityVector::ones(1), &s, &default_calibration_stop()).unwrap();
        assert_eq!(a.alpha, vec![1.0]);
        assert_eq!(a.rounds, 0);
    }

    #[test]
    fn path_three_matches_separate_vector_runs() {
        let w = path3();
        let p = ProbabilityVector::new(vec![0.5, 1.0, 0.5]).unwrap();
        let s = ScheduleStream::new(21, SCHEDULE_LABEL);
        let stop = default_calibration_stop();
        let a = estimate_alpha(&w, &p, &s, &stop).unwrap();
        assert!((a.sum() - 1.0).abs() < 1e-8);
        assert!(a.alpha.iter().all(|&v| v > 0.0));
        // Replay: each e_i run for exactly J rounds on the same schedules.
        let fixed = StopRule { spread_tol: None, max_rounds: a.rounds, max_slots: None };
        for i in 0..3 {
            let mut e = vec![0.0; 3];
            e[i] = 1.0;
            let traj = run_consensus(&w, &e, &p, &s, &fixed).unwrap();
            assert_eq!(mean(traj.final_state()), a.alpha[i]);
        }
    }

    #[test]
    fn calibration_failure_and_zero_probability() {
        let w = path3();
        let p = ProbabilityVector::new(vec![0.5, 1.0, 0.5]).unwrap();
        let s = ScheduleStream::new(21, SCHEDULE_LABEL);
        match estimate_alpha(&w, &p, &s, &StopRule::spread(1e-12, 3)) {
            Err(Error::CalibrationFailed { rounds: 3, spread }) => assert!(spread > 1e-12),
            other => panic!("unexpected {other:?}"),
        }
        let p0 = ProbabilityVector::new(vec![0.0, 1.0, 1.0]).unwrap();
        assert!(estimate_alpha(&w, &p0, &s, &default_calibration_stop()).is_err());
    }

    #[test]
    fn precompensate_examples() {
        let x0 = vec![1.5, -2.0, 0.25, 4.0];
        assert_eq!(precompensate(&x0, &weights(vec![0.25; 4])).unwrap(), x0);
        let x = precompensate(&[2.0, 4.0], &weights(vec![0.25, 0.75])).unwrap();
        assert_eq!(x[0], 4.0);
        assert!((x[1] - 8.0 / 3.0).abs() < 1e-15);
        let e = precompensate(&[1.0, 1.0], &weights(vec![0.0, 1.0])).unwrap_err();
        assert!(matches!(e, Error::DegenerateAlpha { index: 0, .. }));
    }

    #[test]
    fn corrected_runs_hit_the_average() {
        let s = ScheduleStream::new(8, SCHEDULE_LABEL);
        let single = base_mixing_matrix(&Graph::path(2), 0.5).unwrap();
        let r = corrected_run(&single, &[0.0, 2.0], &ProbabilityVector::ones(2), &s, &default_calibration_stop(), &StopRule::default())
            .unwrap();
        assert_eq!(r.trajectory.final_state(), &[1.0, 1.0]);

        let p = ProbabilityVector::new(vec![0.5, 1.0, 0.5]).unwrap();
        let r = corrected_run(&path3(), &[3.0, 0.0, 0.0], &p, &s, &default_calibration_stop(), &StopRule::default()).unwrap();
        assert!(r.trajectory.final_state().iter().all(|v| (v - 1.0).abs() < 1e-6));
    }

    #[test]
    fn mismatched_stream_leaves_bias() {
        let g = erdos_renyi(20, 0.25, 5, 100).unwrap();
        let w = base_mixing_matrix(&g, default_epsilon(&g)).unwrap();
        let p = ProbabilityVector::uniform(20, 8.0).unwrap();
        let x0 = initial_values(2, 0, 20);
        let avg = mean(&x0);
        let calib = ScheduleStream::new(100, SCHEDULE_LABEL);
        let alpha = estimate_alpha(&w, &p, &calib, &default_calibration_stop()).unwrap();
        let mut biased = 0;
        for seed in 0..10 {
            let other = ScheduleStream::new(200 + seed, SCHEDULE_LABEL);
            let r = corrected_run_with_alpha(&w, &x0, &p, alpha.clone(), &other, &StopRule::default()).unwrap();
            if (mean(r.trajectory.final_state()) - avg).abs() > 1e-6 {
                biased += 1;
            }
        }
        assert!(biased >= 9, "{biased}");
    }

    #[test]
    fn alpha_store_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let store = AlphaStore::new(dir.path().join("alpha"));
        let key = AlphaKey {
            graph_hash: "abc".into(),
            epsilon_bits: 0.1f64.to_bits(),
            p_hash: "def".into(),
            seed: 9,
            label: SCHEDULE_LABEL.into(),
        };
        assert_eq!(store.load(&key).unwrap(), None);
        let mut a = weights(vec![0.2, 0.3, 0.5]);
        a.seed = 9;
        a.rounds = 17;
        a.spread = 3.5e-13;
        a.slots = 40;
        let path = store.save(&key, &a).unwrap();
        let text = std::fs::read_to_string(path).unwrap();
        assert!(text.starts_with("# alpha graph=abc epsilon=0.1 p=def seed=9 label=schedule rounds=17"));
        assert_eq!(store.load(&key).unwrap(), Some(a));
        let other = AlphaKey { seed: 10, ..key };
        assert_eq!(store.load(&other).unwrap(), None);
    }
}
