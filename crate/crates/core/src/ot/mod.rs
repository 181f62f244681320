//! Entropic optimal transport between two discrete measures on fragments.
//!
//! The solvers here operate on a [`CostMatrix`] and a pair of
//! [`MarginalWeights`]. Two iteration forms are provided that produce the same
//! plan: alternating row/column projections of the Gibbs kernel
//! ([`sinkhorn_bregman`]) and dual scaling vectors ([`sinkhorn_matrix_scaling`]).
//! Both switch to log-sum-exp updates when the kernel would underflow.
//!
//! [`exact_emd_oracle`] solves small unregularized instances exactly and is used
//! to validate the regularized solvers.

mod oracle;
mod sinkhorn;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fragments::FragmentSet;

pub use oracle::{exact_emd_oracle, ORACLE_MAX_CELLS, ORACLE_MAX_PERMUTATION};
pub use sinkhorn::{sinkhorn_bregman, sinkhorn_matrix_scaling, solve, SinkhornState};

/// Tolerance on the total mass of a [`MarginalWeights`] vector.
pub const MARGIN_SUM_TOL: f64 = 1e-9;

/// A discrete probability vector over the fragments of one set.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalWeights(Array1<f64>);

impl MarginalWeights {
    pub fn new(weights: Array1<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::invalid("marginal weights are empty"));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::invalid(format!(
                "marginal weight {w} is not a non-negative real"
            )));
        }
        let total: f64 = weights.sum();
        if (total - 1.0).abs() > MARGIN_SUM_TOL {
            return Err(Error::invalid(format!("marginal weights sum to {total}, expected 1")));
        }
        Ok(MarginalWeights(weights))
    }

    /// Uniform weights `1/n` over `n` fragments.
    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("cannot build uniform weights over zero fragments"));
        }
        Ok(MarginalWeights(Array1::from_elem(n, 1.0 / n as f64)))
    }

    /// Normalizes arbitrary non-negative scores into weights.
    pub fn from_unnormalized(scores: Array1<f64>) -> Result<Self> {
        let total: f64 = scores.sum();
        if !(total.is_finite() && total > 0.0) {
            return Err(Error::invalid(format!("cannot normalize scores with total {total}")));
        }
        MarginalWeights::new(scores / total)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn view(&self) -> ArrayView1<'_, f64> {
        self.0.view()
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice().expect("weights are contiguous")
    }

    pub fn is_uniform(&self) -> bool {
        let expected = 1.0 / self.len() as f64;
        self.0.iter().all(|w| (w - expected).abs() <= 1e-12)
    }

    pub fn into_inner(self) -> Array1<f64> {
        self.0
    }
}

/// Pairwise transport costs between the fragments of two sets.
///
/// Costs built from fragments are `1 - cos(v_i, t_j)`, clamped into `[0, 2]`.
/// Matrices constructed directly only need finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix(Array2<f64>);

impl CostMatrix {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("cost matrix is empty"));
        }
        if values.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("cost matrix contains a non-finite entry"));
        }
        Ok(CostMatrix(values))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let ncols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != ncols) {
            return Err(Error::shape(
                format!("{ncols} columns"),
                format!("row with {} columns", bad.len()),
            ));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let values = Array2::from_shape_vec((rows.len(), ncols), flat).map_err(|e| Error::invalid(e.to_string()))?;
        CostMatrix::new(values)
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows(), self.cols())
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    pub fn transposed(&self) -> CostMatrix {
        CostMatrix(self.0.t().to_owned())
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }
}

/// A coupling between two marginals, as returned by the solvers.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransportPlan {
    #[serde(serialize_with = "serialize_matrix")]
    pub values: Array2<f64>,
    pub converged: bool,
    pub iterations_used: usize,
}

impl TransportPlan {
    pub fn new(values: Array2<f64>, converged: bool, iterations_used: usize) -> Self {
        TransportPlan {
            values,
            converged,
            iterations_used,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.values.dim()
    }

    pub fn total_mass(&self) -> f64 {
        self.values.sum()
    }

    pub fn row_sums(&self) -> Array1<f64> {
        self.values.sum_axis(ndarray::Axis(1))
    }

    pub fn col_sums(&self) -> Array1<f64> {
        self.values.sum_axis(ndarray::Axis(0))
    }

    /// Largest absolute deviation of the row and column sums from the margins.
    pub fn marginal_error(&self, alpha: &MarginalWeights, beta: &MarginalWeights) -> (f64, f64) {
        let max_dev = |sums: Array1<f64>, target: ArrayView1<f64>| {
            sums.iter()
                .zip(target.iter())
                .map(|(s, t)| (s - t).abs())
                .fold(0.0_f64, f64::max)
        };
        (
            max_dev(self.row_sums(), alpha.view()),
            max_dev(self.col_sums(), beta.view()),
        )
    }

    /// Number of entries strictly above `threshold`.
    pub fn support_size(&self, threshold: f64) -> usize {
        self.values.iter().filter(|&&w| w > threshold).count()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.values.outer_iter().map(|r| r.to_vec()).collect()
    }
}

pub(crate) fn serialize_matrix<S: serde::Serializer>(m: &Array2<f64>, s: S) -> Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(m.nrows()))?;
    for row in m.outer_iter() {
        seq.serialize_element(&row.to_vec())?;
    }
    seq.end()
}

/// When the solvers use log-sum-exp iterations instead of the linear kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogDomain {
    /// Log-domain below [`SolverConfig::AUTO_LOG_LAMBDA`].
    #[default]
    Auto,
    On,
    Off,
}

impl std::str::FromStr for LogDomain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(LogDomain::Auto),
            "on" => Ok(LogDomain::On),
            "off" => Ok(LogDomain::Off),
            other => Err(Error::invalid(format!("unknown log-domain mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Entropic weight; smaller values approach the unregularized optimum.
    pub lambda: f64,
    pub max_iterations: usize,
    /// Threshold on the relative Frobenius change of the plan per sweep.
    pub convergence_tol: f64,
    pub log_domain: LogDomain,
}

impl SolverConfig {
    pub const DEFAULT_LAMBDA: f64 = 0.02;
    pub const DEFAULT_MAX_ITERATIONS: usize = 3;
    pub const DEFAULT_CONVERGENCE_TOL: f64 = 1e-6;
    /// `LogDomain::Auto` switches to log-sum-exp below this lambda.
    pub const AUTO_LOG_LAMBDA: f64 = 0.01;

    pub fn new(lambda: f64, max_iterations: usize, convergence_tol: f64) -> Result<Self> {
        let cfg = SolverConfig {
            lambda,
            max_iterations,
            convergence_tol,
            log_domain: LogDomain::Auto,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_log_domain(mut self, mode: LogDomain) -> Self {
        self.log_domain = mode;
        self
    }

    pub fn with_max_iterations(mut self, max_iterations: usize) -> Self {
        self.max_iterations = max_iterations;
        self
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn with_tolerance(mut self, tol: f64) -> Self {
        self.convergence_tol = tol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(Error::invalid(format!("lambda must be positive, got {}", self.lambda)));
        }
        if self.max_iterations == 0 {
            return Err(Error::invalid("max_iterations must be at least 1"));
        }
        if !(self.convergence_tol.is_finite() && self.convergence_tol > 0.0) {
            return Err(Error::invalid(format!(
                "convergence_tol must be positive, got {}",
                self.convergence_tol
            )));
        }
        Ok(())
    }

    pub fn uses_log_domain(&self) -> bool {
        match self.log_domain {
            LogDomain::On => true,
            LogDomain::Off => false,
            LogDomain::Auto => self.lambda < Self::AUTO_LOG_LAMBDA,
        }
    }
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            lambda: Self::DEFAULT_LAMBDA,
            max_iterations: Self::DEFAULT_MAX_ITERATIONS,
            convergence_tol: Self::DEFAULT_CONVERGENCE_TOL,
            log_domain: LogDomain::Auto,
        }
    }
}

/// Cosine cost `1 - v_i . t_j` between the unit fragments of two sets.
pub fn build_cost_matrix(a: &FragmentSet, b: &FragmentSet) -> Result<CostMatrix> {
    let sims = similarity_matrix(a, b)?;
    Ok(CostMatrix(sims.mapv(|s| (1.0 - s).clamp(0.0, 2.0))))
}

/// Cross-set cosine similarities `V T^T` of the unit fragments.
pub fn similarity_matrix(a: &FragmentSet, b: &FragmentSet) -> Result<Array2<f64>> {
    if a.dim() != b.dim() {
        return Err(Error::shape(
            format!("dimension {}", a.dim()),
            format!("dimension {}", b.dim()),
        ));
    }
    Ok(a.unit().dot(&b.unit().t()))
}

/// `<plan, cost>`.
pub fn transport_cost(plan: &TransportPlan, cost: &CostMatrix) -> Result<f64> {
    frobenius_inner(plan.values.view(), cost.view())
}

pub(crate) fn frobenius_inner(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::shape(format!("{:?}", a.dim()), format!("{:?}", b.dim())));
    }
    Ok(a.iter().zip(b.iter()).map(|(x, y)| x * y).sum())
}

/// Entropy `-sum w (log w - 1)`; zero entries contribute nothing.
pub fn plan_entropy(plan: &TransportPlan) -> f64 {
    -plan
        .values
        .iter()
        .filter(|&&w| w > 0.0)
        .map(|&w| w * (w.ln() - 1.0))
        .sum::<f64>()
}

/// Similarity `<plan*, V T^T>` under uniform margins.
pub fn sinkhorn_similarity(a: &FragmentSet, b: &FragmentSet, cfg: &SolverConfig) -> Result<f64> {
    let alpha = MarginalWeights::uniform(a.len())?;
    let beta = MarginalWeights::uniform(b.len())?;
    sinkhorn_similarity_with_margins(a, b, &alpha, &beta, cfg)
}

pub fn sinkhorn_similarity_with_margins(
    a: &FragmentSet,
    b: &FragmentSet,
    alpha: &MarginalWeights,
    beta: &MarginalWeights,
    cfg: &SolverConfig,
) -> Result<f64> {
    let sims = similarity_matrix(a, b)?;
    let cost = build_cost_matrix(a, b)?;
    let plan = solve(&cost, alpha, beta, cfg)?;
    frobenius_inner(plan.values.view(), sims.view())
}
