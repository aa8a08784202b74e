//! SPSA search for broadcast probabilities that minimize the projected
//! spectral radius of the expected mixing matrix, subject to `sum(p) = K`
//! and `p_min <= p_i <= 1`.

use std::fmt::Write as _;

use crate::centrality::{ProbabilityVector, BUDGET_TOL};
use crate::mixing::{expected_matrix, projected_spectral_radius, MixingMatrix};
use crate::scheduler::{ScheduleStream, SPSA_LABEL};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct SpsaConfig {
    pub iterations: usize,
    /// Step-size scale `a` in `a_k = a / (k + 1 + A)^alpha_gain`.
    pub a: f64,
    /// Stability offset `A`.
    pub big_a: f64,
    /// Perturbation scale `c` in `c_k = c / (k + 1)^gamma_gain`.
    pub c: f64,
    pub alpha_gain: f64,
    pub gamma_gain: f64,
    /// Lower bound on every probability.
    pub p_min: f64,
    pub seed: u64,
}

impl SpsaConfig {
    pub fn new(iterations: usize, seed: u64) -> Self {
        Self {
            iterations,
            a: 0.05,
            big_a: 0.1 * iterations as f64,
            c: 0.05,
            alpha_gain: 0.602,
            gamma_gain: 0.101,
            p_min: 0.01,
            seed,
        }
    }

    fn validate(&self, n: usize, budget: f64) -> Result<()> {
        let bad = |what: String| Err(Error::InvalidParameter(what));
        if !(self.a > 0.0 && self.c > 0.0 && self.big_a >= 0.0) {
            return bad(format!("SPSA gains must be positive (a={}, A={}, c={})", self.a, self.big_a, self.c));
        }
        for (name, e) in [("alpha_gain", self.alpha_gain), ("gamma_gain", self.gamma_gain)] {
            if !(e > 0.0 && e <= 1.0) {
                return bad(format!("{name} must lie in (0, 1], got {e}"));
            }
        }
        if !(self.p_min >= 0.0 && self.p_min * n as f64 <= budget) {
            return bad(format!("p_min = {} incompatible with K = {budget} over {n} nodes", self.p_min));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizationTrace {
    /// Iterate after each step; entry 0 is the starting point.
    pub iterates: Vec<Vec<f64>>,
    /// `(iteration, objective)` for every exact evaluation of an iterate.
    pub objectives: Vec<(usize, f64)>,
    pub best: ProbabilityVector,
    pub best_objective: f64,
}

impl OptimizationTrace {
    /// `iteration,objective` CSV.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,objective\n");
        for (k, f) in &self.objectives {
            let _ = writeln!(out, "{k},{f:?}");
        }
        out
    }

    /// Best objective seen up to and including each logged evaluation.
    pub fn best_so_far(&self) -> Vec<f64> {
        self.objectives
            .iter()
            .scan(f64::INFINITY, |best, &(_, f)| {
                *best = best.min(f);
                Some(*best)
            })
            .collect()
    }
}

/// `rho(E[Wbar] - u u^T / N)`.
pub fn objective(w: &MixingMatrix, p: &ProbabilityVector) -> Result<f64> {
    projected_spectral_radius(&expected_matrix(w, p)?)
}

/// Euclidean projection onto `{p : sum(p) = K, lo <= p_i <= hi}`.
///
/// The projection is `clip(y_i - lambda, lo, hi)` for the shift `lambda`
/// solving the sum constraint; the sum is nonincreasing in `lambda`, so
/// bisection brackets it. Once the clipped set is known the free
/// coordinates fix `lambda` in closed form.
pub fn project_capped_simplex(y: &[f64], budget: f64, lo: f64, hi: f64) -> Result<ProbabilityVector> {
    let n = y.len();
    if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
        return Err(Error::InvalidParameter(format!("bounds [{lo}, {hi}] must lie within [0, 1]")));
    }
    if n == 0 || !(n as f64 * lo <= budget + BUDGET_TOL && budget <= n as f64 * hi + BUDGET_TOL) {
        return Err(Error::Infeasible(format!("K = {budget} outside [{}, {}]", n as f64 * lo, n as f64 * hi)));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("projection input has non-finite entries".into()));
    }
    let clip = |lambda: f64| -> Vec<f64> { y.iter().map(|v| (v - lambda).clamp(lo, hi)).collect() };
    let total = |lambda: f64| -> f64 { y.iter().map(|v| (v - lambda).clamp(lo, hi)).sum() };

    let mut left = y.iter().copied().fold(f64::INFINITY, f64::min) - hi;
    let mut right = y.iter().copied().fold(f64::NEG_INFINITY, f64::max) - lo;
    for _ in 0..200 {
        let mid = 0.5 * (left + right);
        if total(mid) > budget {
            left = mid;
        } else {
            right = mid;
        }
        if right - left <= 1e-15 * (1.0 + mid.abs()) {
            break;
        }
    }
    let mut lambda = 0.5 * (left + right);

    // Closed-form shift on the free set, kept only if the active set is unchanged.
    let free: Vec<usize> = (0..n).filter(|&i| lo < y[i] - lambda && y[i] - lambda < hi).collect();
    if !free.is_empty() {
        let fixed: f64 = (0..n).filter(|i| !free.contains(i)).map(|i| (y[i] - lambda).clamp(lo, hi)).sum();
        let exact = (free.iter().map(|&i| y[i]).sum::<f64>() + fixed - budget) / free.len() as f64;
        let same = (0..n).all(|i| {
            let before = lo < y[i] - lambda && y[i] - lambda < hi;
            let after = lo <= y[i] - exact && y[i] - exact <= hi;
            !before || after
        });
        if same && (total(exact) - budget).abs() <= (total(lambda) - budget).abs() {
            lambda = exact;
        }
    }
    let p = clip(lambda);
    let sum: f64 = p.iter().sum();
    ProbabilityVector::with_budget(p, budget).map_err(|_| Error::Infeasible(format!("projection sums to {sum}, not {budget}")))
}

fn check_feasible(p: &ProbabilityVector, budget: f64, lo: f64) -> Result<()> {
    let sum: f64 = p.as_slice().iter().sum();
    if (sum - budget).abs() > BUDGET_TOL * budget.max(1.0) {
        return Err(Error::Infeasible(format!("initial point sums to {sum}, not K = {budget}")));
    }
    if let Some((i, v)) = p.as_slice().iter().enumerate().find(|(_, v)| !(lo - 1e-12..=1.0).contains(*v)) {
        return Err(Error::Infeasible(format!("initial p[{i}] = {v} outside [{lo}, 1]")));
    }
    Ok(())
}

/// Projected two-sided SPSA on [`objective`].
///
/// Each step perturbs all coordinates at once by `+-c_k` (Rademacher signs
/// from the `spsa` stream), projects both probes back onto the feasible set
/// before evaluating them, forms the simultaneous-perturbation gradient and
/// takes a projected step. The returned vector is the best iterate seen.
pub fn spsa_optimize(
    w: &MixingMatrix,
    budget: f64,
    p_init: &ProbabilityVector,
    cfg: &SpsaConfig,
) -> Result<(ProbabilityVector, OptimizationTrace)> {
    let n = w.dim();
    if p_init.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: p_init.len() });
    }
    cfg.validate(n, budget)?;
    check_feasible(p_init, budget, cfg.p_min)?;
    let at = |iteration: usize, context: &'static str| {
        move |e: Error| Error::Optimization { iteration, context, source: Box::new(e) }
    };

    let stream = ScheduleStream::new(cfg.seed, SPSA_LABEL);
    let mut p = p_init.as_slice().to_vec();
    let f0 = objective(w, p_init).map_err(at(0, "objective"))?;
    let mut trace = OptimizationTrace {
        iterates: vec![p.clone()],
        objectives: vec![(0, f0)],
        best: p_init.clone(),
        best_objective: f0,
    };

    for k in 0..cfg.iterations {
        let ak = cfg.a / (k as f64 + 1.0 + cfg.big_a).powf(cfg.alpha_gain);
        let ck = cfg.c / (k as f64 + 1.0).powf(cfg.gamma_gain);
        let delta: Vec<f64> = (0..n).map(|i| if stream.bits(k as u64, i as u64) & 1 == 1 { 1.0 } else { -1.0 }).collect();

        let probe = |sign: f64| -> Result<f64> {
            let y: Vec<f64> = p.iter().zip(&delta).map(|(pi, d)| pi + sign * ck * d).collect();
            objective(w, &project_capped_simplex(&y, budget, cfg.p_min, 1.0)?)
        };
        let f_plus = probe(1.0).map_err(at(k + 1, "positive probe"))?;
        let f_minus = probe(-1.0).map_err(at(k + 1, "negative probe"))?;
        let diff = (f_plus - f_minus) / (2.0 * ck);

        let y: Vec<f64> = p.iter().zip(&delta).map(|(pi, d)| pi - ak * diff / d).collect();
        let next = project_capped_simplex(&y, budget, cfg.p_min, 1.0).map_err(at(k + 1, "projection"))?;
        let f = objective(w, &next).map_err(at(k + 1, "objective"))?;
        p = next.as_slice().to_vec();
        trace.iterates.push(p.clone());
        trace.objectives.push((k + 1, f));
        if f < trace.best_objective {
            trace.best_objective = f;
            trace.best = next;
        }
    }
    Ok((trace.best.clone(), trace))
}
