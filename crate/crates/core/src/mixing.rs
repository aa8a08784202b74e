//! Mixing matrices: the base `W = I - eps L`, the per-round compensated
//! matrix, its expectation under the broadcast probabilities, and the
//! projected spectral radius `rho(M - u u^T / N)`.

use std::fmt;

use crate::centrality::ProbabilityVector;
use crate::graph::Graph;
use crate::matrix::{eigenvalues, DenseMatrix, Eigenvalue};
use crate::scheduler::ScheduleVector;
use crate::{Error, Result};

/// Tolerance used when checking the fixed-point conditions `W u = u` and `u^T W = u^T`.
pub const CONDITION_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MatrixKind {
    Base,
    Round,
    Expected,
    General,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MixingMatrix {
    entries: DenseMatrix,
    epsilon: Option<f64>,
    kind: MatrixKind,
}

impl MixingMatrix {
    /// Wraps an arbitrary square matrix, e.g. for spectrum checks.
    pub fn from_dense(entries: DenseMatrix) -> Self {
        Self { entries, epsilon: None, kind: MatrixKind::General }
    }

    pub fn entries(&self) -> &DenseMatrix {
        &self.entries
    }

    pub fn dim(&self) -> usize {
        self.entries.dim()
    }

    /// Step size, for base matrices only.
    pub fn epsilon(&self) -> Option<f64> {
        self.epsilon
    }

    pub fn kind(&self) -> MatrixKind {
        self.kind
    }

    /// Off-diagonal nonzeros per row as `(j, w_ij)`, ascending in `j`.
    pub fn links(&self) -> Vec<Vec<(usize, f64)>> {
        let n = self.dim();
        (0..n)
            .map(|i| {
                self.entries
                    .row(i)
                    .iter()
                    .enumerate()
                    .filter(|&(j, &w)| j != i && w != 0.0)
                    .map(|(j, &w)| (j, w))
                    .collect()
            })
            .collect()
    }
}

/// `1 / (max_degree + 1)`, the step size used for the reference experiments.
pub fn default_epsilon(g: &Graph) -> f64 {
    1.0 / (g.max_degree() as f64 + 1.0)
}

/// `W = I - eps L`, requiring `0 < eps < 1 / max_degree`.
pub fn base_mixing_matrix(g: &Graph, epsilon: f64) -> Result<MixingMatrix> {
    let bound = 1.0 / g.max_degree() as f64;
    if !(epsilon > 0.0 && epsilon < bound) {
        return Err(Error::EpsilonOutOfRange { epsilon, bound });
    }
    let n = g.node_count();
    let mut w = DenseMatrix::identity(n);
    for i in 0..n {
        for &j in g.neighbors(i)? {
            w[(i, j)] = epsilon;
        }
        w[(i, i)] = 1.0 - epsilon * g.neighbors(i)?.len() as f64;
    }
    Ok(MixingMatrix { entries: w, epsilon: Some(epsilon), kind: MatrixKind::Base })
}

/// Biased compensation for one round: off-diagonal `w_ij v_j`, and the weight
/// of every silent neighbor moved onto the diagonal.
pub fn round_matrix(w: &MixingMatrix, v: &ScheduleVector) -> Result<MixingMatrix> {
    let n = w.dim();
    if v.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: v.len() });
    }
    let weights: Vec<f64> = v.active.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    Ok(MixingMatrix { entries: compensate(w.entries(), &weights), epsilon: None, kind: MatrixKind::Round })
}

/// Entrywise expectation of [`round_matrix`] when node `j` broadcasts with probability `p_j`.
pub fn expected_matrix(w: &MixingMatrix, p: &ProbabilityVector) -> Result<MixingMatrix> {
    let n = w.dim();
    if p.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: p.len() });
    }
    Ok(MixingMatrix { entries: compensate(w.entries(), p.as_slice()), epsilon: None, kind: MatrixKind::Expected })
}

fn compensate(w: &DenseMatrix, weights: &[f64]) -> DenseMatrix {
    let n = w.dim();
    let mut out = DenseMatrix::zeros(n);
    for i in 0..n {
        let mut off = 0.0;
        for j in 0..n {
            if j != i {
                let v = w[(i, j)] * weights[j];
                out[(i, j)] = v;
                off += v;
            }
        }
        out[(i, i)] = 1.0 - off;
    }
    out
}

/// Eigenvalue moduli in descending order.
pub fn spectrum_moduli(m: &DenseMatrix) -> Result<Vec<f64>> {
    let mut moduli: Vec<f64> = eigenvalues(m)?.iter().map(Eigenvalue::modulus).collect();
    moduli.sort_by(|a, b| b.total_cmp(a));
    Ok(moduli)
}

/// `rho(M - u u^T / N)` over all (possibly complex) eigenvalues.
pub fn projected_spectral_radius(m: &MixingMatrix) -> Result<f64> {
    let n = m.dim();
    if n == 0 {
        return Ok(0.0);
    }
    let projected = m.entries().minus_constant(1.0 / n as f64);
    Ok(spectrum_moduli(&projected)?.first().copied().unwrap_or(0.0))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumReport {
    /// Moduli of the eigenvalues of `M`, descending.
    pub moduli: Vec<f64>,
    /// `rho(M - u u^T / N)`.
    pub projected_radius: f64,
    /// `M u = u`.
    pub row_stochastic: bool,
    /// `u^T M = u^T`.
    pub column_stochastic: bool,
    /// `rho(M - u u^T / N) < 1`.
    pub contracting: bool,
}

impl SpectrumReport {
    pub fn all_hold(&self) -> bool {
        self.row_stochastic && self.column_stochastic && self.contracting
    }
}

impl fmt::Display for SpectrumReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "condition_1_row_sums_one: {}", self.row_stochastic)?;
        writeln!(f, "condition_2_column_sums_one: {}", self.column_stochastic)?;
        writeln!(f, "condition_3_projected_radius_below_one: {}", self.contracting)?;
        writeln!(f, "projected_spectral_radius: {:?}", self.projected_radius)?;
        let shown: Vec<String> = self.moduli.iter().take(5).map(|m| format!("{m:?}")).collect();
        writeln!(f, "leading_moduli: {}", shown.join(" "))
    }
}

pub fn verify_convergence_conditions(w: &MixingMatrix) -> Result<SpectrumReport> {
    let ones = |sums: Vec<f64>| sums.iter().all(|s| (s - 1.0).abs() <= CONDITION_TOL);
    let projected_radius = projected_spectral_radius(w)?;
    Ok(SpectrumReport {
        moduli: spectrum_moduli(w.entries())?,
        projected_radius,
        row_stochastic: ones(w.entries().row_sums()),
        column_stochastic: ones(w.entries().col_sums()),
        contracting: projected_radius < 1.0,
    })
}
