//! Consensus runs under random broadcast schedules, and the metrics plotted
//! against cumulative transmission slots.

use std::fmt::Write as _;

use rand_distr::{Distribution, StandardNormal};

use crate::centrality::ProbabilityVector;
use crate::mixing::MixingMatrix;
use crate::scheduler::{schedule, ScheduleStream, INIT_VALUES_LABEL};
use crate::{Error, Result};

pub const DEFAULT_SPREAD_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ROUNDS: usize = 10_000;

/// When a run stops. Whichever limit is hit first wins.
#[derive(Clone, Debug, PartialEq)]
pub struct StopRule {
    /// Stop once `max(x) - min(x)` falls below this.
    pub spread_tol: Option<f64>,
    pub max_rounds: usize,
    /// Stop once cumulative slots reach this budget.
    pub max_slots: Option<u64>,
}

impl Default for StopRule {
    fn default() -> Self {
        Self { spread_tol: Some(DEFAULT_SPREAD_TOL), max_rounds: DEFAULT_MAX_ROUNDS, max_slots: None }
    }
}

impl StopRule {
    pub fn spread(tol: f64, max_rounds: usize) -> Self {
        Self { spread_tol: Some(tol), max_rounds, max_slots: None }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    Converged,
    RoundCap,
    SlotBudget,
}

/// Snapshot after `t` rounds. `slots` is what round `t - 1` consumed.
#[derive(Clone, Debug, PartialEq)]
pub struct RoundRecord {
    pub t: usize,
    pub state: Vec<f64>,
    pub slots: u64,
    pub cumulative_slots: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub rounds: Vec<RoundRecord>,
    pub termination: Termination,
}

impl Trajectory {
    pub fn final_state(&self) -> &[f64] {
        &self.rounds.last().expect("trajectory holds the initial state").state
    }

    pub fn total_slots(&self) -> u64 {
        self.rounds.last().map_or(0, |r| r.cumulative_slots)
    }

    /// Number of rounds executed.
    pub fn len_rounds(&self) -> usize {
        self.rounds.len() - 1
    }
}

/// One sparse compensated round: `x_i + sum over broadcasting neighbors j of w_ij (x_j - x_i)`.
///
/// Algebraically the same as multiplying by the round matrix; shared by the
/// engine and the calibration so both perform bit-identical arithmetic.
pub(crate) fn apply_round(links: &[Vec<(usize, f64)>], active: &[bool], x: &[f64], out: &mut [f64]) {
    for (i, row) in links.iter().enumerate() {
        let xi = x[i];
        let mut acc = 0.0;
        for &(j, w) in row {
            if active[j] {
                acc += w * (x[j] - xi);
            }
        }
        out[i] = xi + acc;
    }
}

/// Iterates `x(t+1) = Wbar(t) x(t)` with schedules drawn from `stream`.
pub fn run_consensus(
    w: &MixingMatrix,
    x0: &[f64],
    p: &ProbabilityVector,
    stream: &ScheduleStream,
    stop: &StopRule,
) -> Result<Trajectory> {
    let n = w.dim();
    for len in [x0.len(), p.len()] {
        if len != n {
            return Err(Error::DimensionMismatch { expected: n, got: len });
        }
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalFailure { round: 0 });
    }
    let links = w.links();
    let mut rounds = vec![RoundRecord { t: 0, state: x0.to_vec(), slots: 0, cumulative_slots: 0 }];
    let mut next = vec![0.0; n];
    let termination = loop {
        let last = rounds.last().expect("nonempty");
        if stop.spread_tol.is_some_and(|tol| spread(&last.state) < tol) {
            break Termination::Converged;
        }
        if last.t >= stop.max_rounds {
            break Termination::RoundCap;
        }
        if stop.max_slots.is_some_and(|budget| last.cumulative_slots >= budget) {
            break Termination::SlotBudget;
        }
        let t = last.t;
        let v = schedule(stream, p, t as u64);
        apply_round(&links, &v.active, &last.state, &mut next);
        if next.iter().any(|x| !x.is_finite()) {
            return Err(Error::NumericalFailure { round: t });
        }
        let slots = v.slots();
        let cumulative_slots = last.cumulative_slots + slots;
        rounds.push(RoundRecord { t: t + 1, state: next.clone(), slots, cumulative_slots });
    };
    Ok(Trajectory { rounds, termination })
}

/// Standard-normal initial values for one realization.
pub fn initial_values(seed: u64, realization: u64, n: usize) -> Vec<f64> {
    let mut rng = ScheduleStream::new(seed, INIT_VALUES_LABEL).rng(realization);
    (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

pub fn spread(x: &[f64]) -> f64 {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = x.iter().copied().fold(f64::INFINITY, f64::min);
    max - min
}

/// Population standard deviation around the current mean.
pub fn stddev(x: &[f64]) -> f64 {
    let m = mean(x);
    (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / x.len() as f64).sqrt()
}

/// Root-mean-square distance of the node values from `target`.
pub fn rmse(x: &[f64], target: f64) -> f64 {
    (x.iter().map(|v| (v - target).powi(2)).sum::<f64>() / x.len() as f64).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricsRow {
    pub cumulative_slots: u64,
    pub stddev: f64,
    pub rmse: f64,
}

pub fn metrics_series(traj: &Trajectory, target: f64) -> Vec<MetricsRow> {
    traj.rounds
        .iter()
        .map(|r| MetricsRow { cumulative_slots: r.cumulative_slots, stddev: stddev(&r.state), rmse: rmse(&r.state, target) })
        .collect()
}

/// `0, step, 2 step, ...` up to and including `budget`.
pub fn checkpoint_grid(step: u64, budget: u64) -> Vec<u64> {
    (0..=budget / step.max(1)).map(|k| k * step.max(1)).collect()
}

/// Averages several series on a common slot grid.
///
/// Cumulative slots differ between realizations, so each series is read at
/// a checkpoint as its last row at or before it (last value carried
/// forward, including past the end of the run).
pub fn aggregate(runs: &[Vec<MetricsRow>], grid: &[u64]) -> Result<Vec<MetricsRow>> {
    if runs.is_empty() {
        return Err(Error::Empty("no metric series to aggregate"));
    }
    if runs.iter().any(Vec::is_empty) {
        return Err(Error::Empty("metric series without rows"));
    }
    let count = runs.len() as f64;
    let mut cursors = vec![0usize; runs.len()];
    let mut out = Vec::with_capacity(grid.len());
    for &checkpoint in grid {
        let (mut sd, mut err) = (0.0, 0.0);
        for (series, cursor) in runs.iter().zip(cursors.iter_mut()) {
            while *cursor + 1 < series.len() && series[*cursor + 1].cumulative_slots <= checkpoint {
                *cursor += 1;
            }
            sd += series[*cursor].stddev;
            err += series[*cursor].rmse;
        }
        out.push(MetricsRow { cumulative_slots: checkpoint, stddev: sd / count, rmse: err / count });
    }
    Ok(out)
}

/// First cumulative slot count at which the stddev drops below `threshold`.
pub fn slots_to_threshold(series: &[MetricsRow], threshold: f64) -> Option<u64> {
    series.iter().find(|r| r.stddev < threshold).map(|r| r.cumulative_slots)
}

pub const METRICS_CSV_HEADER: &str = "realization,round,cumulative_slots,stddev,rmse";
pub const AGGREGATED_CSV_HEADER: &str = "cumulative_slots,mean_stddev,mean_rmse";

pub fn metrics_csv(series: &[Vec<MetricsRow>]) -> String {
    let mut out = format!("{METRICS_CSV_HEADER}\n");
    for (realization, rows) in series.iter().enumerate() {
        for (round, r) in rows.iter().enumerate() {
            let _ = writeln!(out, "{realization},{round},{},{:?},{:?}", r.cumulative_slots, r.stddev, r.rmse);
        }
    }
    out
}

pub fn aggregated_csv(rows: &[MetricsRow]) -> String {
    let mut out = format!("{AGGREGATED_CSV_HEADER}\n");
    for r in rows {
        let _ = writeln!(out, "{},{:?},{:?}", r.cumulative_slots, r.stddev, r.rmse);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{erdos_renyi, Graph};
    use crate::mixing::{base_mixing_matrix, default_epsilon, round_matrix};
    use crate::scheduler::SCHEDULE_LABEL;
    use proptest::prelude::*;

    fn stream() -> ScheduleStream {
        ScheduleStream::new(1, SCHEDULE_LABEL)
    }

    #[test]
    fn single_edge_converges_in_one_round() {
        let w = base_mixing_matrix(&Graph::path(2), 0.5).unwrap();
        let traj = run_consensus(&w, &[0.0, 2.0], &ProbabilityVector::ones(2), &stream(), &StopRule::default()).unwrap();
        assert_eq!(traj.termination, Termination::Converged);
        assert_eq!(traj.rounds[1].state, vec![1.0, 1.0]);
        assert_eq!(traj.rounds[1].slots, 2);
        assert_eq!(traj.len_rounds(), 1);

        let rows = metrics_series(&traj, 1.0);
        let want = vec![
            MetricsRow { cumulative_slots: 0, stddev: 1.0, rmse: 1.0 },
            MetricsRow { cumulative_slots: 2, stddev: 0.0, rmse: 0.0 },
        ];
        assert_eq!(rows, want);
    }

    #[test]
    fn path_three_full_broadcast_reaches_average() {
        let w = base_mixing_matrix(&Graph::path(3), 1.0 / 3.0).unwrap();
        let stop = StopRule::spread(1e-9, 10_000);
        let traj = run_consensus(&w, &[3.0, 0.0, 0.0], &ProbabilityVector::ones(3), &stream(), &stop).unwrap();
        assert_eq!(traj.termination, Termination::Converged);
        assert!(spread(traj.final_state()) < 1e-9);
        assert!(traj.final_state().iter().all(|v| (v - 1.0).abs() < 1e-9));

        // Dense W^t x0 oracle for every round.
        let mut x = vec![3.0, 0.0, 0.0];
        for r in &traj.rounds {
            assert!(r.state.iter().zip(&x).all(|(a, b)| (a - b).abs() < 1e-12));
            x = w.entries().mul_vec(&x);
        }
        assert_eq!(traj.total_slots(), 3 * traj.len_rounds() as u64);
    }

    #[test]
    fn silent_network_never_moves() {
        let g = erdos_renyi(10, 0.4, 2, 100).unwrap();
        let w = base_mixing_matrix(&g, default_epsilon(&g)).unwrap();
        let x0 = initial_values(3, 0, 10);
        let traj = run_consensus(&w, &x0, &ProbabilityVector::zeros(10), &stream(), &StopRule::spread(1e-8, 50)).unwrap();
        assert_eq!(traj.termination, Termination::RoundCap);
        assert!(traj.rounds.iter().all(|r| r.state == x0 && r.cumulative_slots == 0));
        let rows = metrics_series(&traj, mean(&x0));
        assert!(rows.iter().all(|r| *r == rows[0]));
    }

    #[test]
    fn slot_budget_stops_run() {
        let g = erdos_renyi(20, 0.3, 2, 100).unwrap();
        let w = base_mixing_matrix(&g, default_epsilon(&g)).unwrap();
        let stop = StopRule { spread_tol: None, max_rounds: 1000, max_slots: Some(95) };
        let traj = run_consensus(&w, &initial_values(1, 0, 20), &ProbabilityVector::ones(20), &stream(), &stop).unwrap();
        assert_eq!(traj.termination, Termination::SlotBudget);
        assert_eq!(traj.total_slots(), 100);
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let w = base_mixing_matrix(&Graph::path(2), 0.5).unwrap();
        let e = run_consensus(&w, &[f64::NAN, 1.0], &ProbabilityVector::ones(2), &stream(), &StopRule::default());
        assert!(matches!(e, Err(Error::NumericalFailure { round: 0 })));
    }

    #[test]
    fn metric_examples() {
        let x = [1.0, 2.0, 3.0];
        assert_eq!(spread(&x), 2.0);
        assert!((stddev(&x) - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!((rmse(&x, 2.0) - 0.816_496_580_927_726).abs() < 1e-12);
        let c = [4.5; 6];
        assert_eq!((spread(&c), stddev(&c)), (0.0, 0.0));
        assert!((rmse(&c, 1.5) - 3.0).abs() < 1e-15);
        assert_eq!(rmse(&[0.0, 2.0], 1.0), 1.0);
    }

    #[test]
    fn aggregate_examples() {
        let series: Vec<MetricsRow> = [(0, 1.0, 2.0), (80, 0.5, 1.0), (170, 0.25, 0.5)]
            .iter()
            .map(|&(s, sd, e)| MetricsRow { cumulative_slots: s, stddev: sd, rmse: e })
            .collect();
        let grid: Vec<u64> = series.iter().map(|r| r.cumulative_slots).collect();
        assert_eq!(aggregate(&[series.clone()], &grid).unwrap(), series);
        assert_eq!(aggregate(&[series.clone(), series.clone()], &grid).unwrap(), series);

        let constant = |e: f64| vec![MetricsRow { cumulative_slots: 0, stddev: 0.0, rmse: e }];
        let avg = aggregate(&[constant(0.2), constant(0.4)], &checkpoint_grid(100, 300)).unwrap();
        assert_eq!(avg.len(), 4);
        assert!(avg.iter().all(|r| (r.rmse - 0.3).abs() < 1e-15));

        // Carry-forward between and beyond recorded checkpoints.
        let at = aggregate(&[series], &[50, 100, 1000]).unwrap();
        assert_eq!(at.iter().map(|r| r.stddev).collect::<Vec<_>>(), vec![1.0, 0.5, 0.25]);
        assert!(matches!(aggregate(&[], &[0]), Err(Error::Empty(_))));
    }

    #[test]
    fn csv_headers() {
        let rows = vec![MetricsRow { cumulative_slots: 0, stddev: 1.0, rmse: 0.5 }];
        assert_eq!(metrics_csv(&[rows.clone()]), "realization,round,cumulative_slots,stddev,rmse\n0,0,0,1.0,0.5\n");
        assert_eq!(aggregated_csv(&rows), "cumulative_slots,mean_stddev,mean_rmse\n0,1.0,0.5\n");
    }

    #[test]
    fn initial_values_are_standard_normal_ish() {
        let x = initial_values(17, 0, 20_000);
        assert!(mean(&x).abs() < 0.03);
        assert!((stddev(&x) - 1.0).abs() < 0.03);
        assert_eq!(x, initial_values(17, 0, 20_000));
        assert_ne!(x[..10], initial_values(17, 1, 10)[..]);
    }

    proptest! {
        #[test]
        fn extremes_are_monotone_and_sparse_matches_dense(
            n in 2usize..20, edge_prob in 0.15f64..1.0, seed in any::<u64>(), q in 0.05f64..1.0
        ) {
            let g = erdos_renyi(n, edge_prob, seed, 10_000).unwrap();
            let w = base_mixing_matrix(&g, default_epsilon(&g)).unwrap();
            let p = ProbabilityVector::uniform(n, q * n as f64).unwrap();
            let s = ScheduleStream::new(seed, SCHEDULE_LABEL);
            let x0 = initial_values(seed, 0, n);
            let traj = run_consensus(&w, &x0, &p, &s, &StopRule::spread(1e-10, 60)).unwrap();
            let mut dense = x0.clone();
            for pair in traj.rounds.windows(2) {
                let (a, b) = (&pair[0].state, &pair[1].state);
                let max = |x: &[f64]| x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let min = |x: &[f64]| x.iter().copied().fold(f64::INFINITY, f64::min);
                prop_assert!(max(b) <= max(a) + 1e-15);
                prop_assert!(min(b) >= min(a) - 1e-15);
                let v = schedule(&s, &p, pair[0].t as u64);
                prop_assert_eq!(pair[1].slots, v.slots());
                dense = round_matrix(&w, &v).unwrap().entries().mul_vec(&dense);
                prop_assert!(b.iter().zip(&dense).all(|(x, y)| (x - y).abs() <= 1e-12));
            }
        }
    }
}
