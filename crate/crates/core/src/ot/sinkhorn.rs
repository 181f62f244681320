use ndarray::{Array1, Array2, Axis, Zip};

use super::{CostMatrix, LogDomain, MarginalWeights, SolverConfig, TransportPlan};
use crate::error::{Error, Result};

/// Default solver entry point: the alternating-projection form.
pub fn solve(
    cost: &CostMatrix,
    alpha: &MarginalWeights,
    beta: &MarginalWeights,
    cfg: &SolverConfig,
) -> Result<TransportPlan> {
    sinkhorn_bregman(cost, alpha, beta, cfg)
}

/// Alternating KL projections onto the row and column constraint sets.
///
/// Starts from the Gibbs kernel `exp(-C / lambda)` and rescales rows to `alpha`
/// then columns to `beta` once per sweep. Stops when the relative Frobenius
/// change of the plan over a sweep drops below the tolerance and the row sums
/// are within the same tolerance of `alpha` (column sums are exact after each
/// sweep), or after `max_iterations` sweeps.
pub fn sinkhorn_bregman(
    cost: &CostMatrix,
    alpha: &MarginalWeights,
    beta: &MarginalWeights,
    cfg: &SolverConfig,
) -> Result<TransportPlan> {
    check_problem(cost, alpha, beta, cfg)?;
    if cfg.uses_log_domain() {
        bregman_log(cost, alpha, beta, cfg)
    } else {
        bregman_linear(cost, alpha, beta, cfg)
    }
}

/// Sinkhorn-Knopp matrix scaling: `mu <- alpha / (K theta)`, `theta <- beta / (K^T mu)`.
///
/// The plan is `diag(mu) K diag(theta)`. Uses the same stopping rule as
/// [`sinkhorn_bregman`] and yields the same iterates up to rounding.
pub fn sinkhorn_matrix_scaling(
    cost: &CostMatrix,
    alpha: &MarginalWeights,
    beta: &MarginalWeights,
    cfg: &SolverConfig,
) -> Result<TransportPlan> {
    check_problem(cost, alpha, beta, cfg)?;
    let schedule = warm_start_schedule(cfg);
    let mut state = SinkhornState::new(cost, &stage_config(cfg, schedule.first().copied()))?;
    for (stage, &lambda) in schedule.iter().enumerate() {
        scaling_sweeps(
            &mut state,
            alpha,
            beta,
            Stop::Feasible(WARM_START_TOL),
            WARM_START_SWEEPS,
        )?;
        let next = schedule.get(stage + 1).copied().unwrap_or(cfg.lambda);
        state.rescale(cost, lambda, next);
    }
    let stop = Stop::Change(cfg.convergence_tol);
    let (plan, converged, used) = scaling_sweeps(&mut state, alpha, beta, stop, cfg.max_iterations)?;
    Ok(TransportPlan::new(plan, converged, used))
}

fn scaling_sweeps(
    state: &mut SinkhornState,
    alpha: &MarginalWeights,
    beta: &MarginalWeights,
    stop: Stop,
    max_sweeps: usize,
) -> Result<(Array2<f64>, bool, usize)> {
    let mut prev = state.plan();
    for t in 1..=max_sweeps {
        state.update(alpha, beta)?;
        let plan = state.plan();
        if stop.reached(&plan, &prev, alpha) {
            return Ok((plan, true, t));
        }
        prev = plan;
    }
    Ok((prev, false, max_sweeps))
}

/// When a run of sweeps ends early.
#[derive(Debug, Clone, Copy)]
enum Stop {
    /// Relative Frobenius change of the plan over one sweep below the value,
    /// with the row marginals also within the value. The second condition
    /// keeps a stalled iteration, whose plan barely moves while rows are still
    /// far from `alpha`, from being reported as converged.
    Change(f64),
    /// Largest row-marginal deviation below the value; column sums are exact
    /// after every sweep.
    Feasible(f64),
}

impl Stop {
    fn reached(self, plan: &Array2<f64>, prev: &Array2<f64>, alpha: &MarginalWeights) -> bool {
        match self {
            Stop::Change(tol) => relative_change(plan, prev) < tol && rows_within(plan, alpha, tol),
            Stop::Feasible(tol) => rows_within(plan, alpha, tol),
        }
    }
}

fn stage_config(cfg: &SolverConfig, lambda: Option<f64>) -> SolverConfig {
    // warm-start stages exist only in log-domain mode and must stay there
    lambda.map_or(*cfg, |l| SolverConfig {
        lambda: l,
        log_domain: LogDomain::On,
        ..*cfg
    })
}

/// Start lambda of the log-domain warm start.
const WARM_START_LAMBDA: f64 = 1.0;
const WARM_START_FACTOR: f64 = 0.5;
/// Warm-start stages run until the row marginals are this close; the target
/// stage uses the configured relative-change test.
const WARM_START_TOL: f64 = 1e-9;
/// Sweep cap per warm-start stage; these do not count toward `max_iterations`.
const WARM_START_SWEEPS: usize = 20_000;

/// Decreasing lambdas solved before the target one in log-domain mode.
///
/// Small-lambda Sinkhorn started from poor potentials can stall in a state
/// whose per-sweep change is negligible while the row marginals are far off:
/// the entries that would move the mass have underflowed relative to the rest.
/// Solving a sequence of larger lambdas to feasibility first and carrying the
/// potentials over avoids it. Empty in linear mode.
fn warm_start_schedule(cfg: &SolverConfig) -> Vec<f64> {
    if !cfg.uses_log_domain() {
        return Vec::new();
    }
    let mut stages = Vec::new();
    let mut lambda = WARM_START_LAMBDA;
    while lambda > cfg.lambda {
        stages.push(lambda);
        lambda *= WARM_START_FACTOR;
    }
    stages
}

/// Gibbs kernel and dual scaling vectors of the matrix-scaling iteration.
///
/// In log-domain mode `gibbs_kernel` holds `-C / lambda` and the duals hold
/// log-potentials; nothing is exponentiated until [`SinkhornState::plan`].
#[derive(Debug, Clone)]
pub struct SinkhornState {
    pub gibbs_kernel: Array2<f64>,
    pub dual_row: Array1<f64>,
    pub dual_col: Array1<f64>,
    pub log_domain: bool,
}

impl SinkhornState {
    pub fn new(cost: &CostMatrix, cfg: &SolverConfig) -> Result<Self> {
        let (k, l) = cost.shape();
        let log_domain = cfg.uses_log_domain();
        let scaled = cost.view().mapv(|c| -c / cfg.lambda);
        if log_domain {
            Ok(SinkhornState {
                gibbs_kernel: scaled,
                dual_row: Array1::zeros(k),
                dual_col: Array1::zeros(l),
                log_domain,
            })
        } else {
            let kernel = scaled.mapv(f64::exp);
            check_kernel(&kernel)?;
            Ok(SinkhornState {
                gibbs_kernel: kernel,
                dual_row: Array1::ones(k),
                dual_col: Array1::ones(l),
                log_domain,
            })
        }
    }

    /// One full sweep: row duals then column duals.
    pub fn update(&mut self, alpha: &MarginalWeights, beta: &MarginalWeights) -> Result<()> {
        if self.log_domain {
            let row_lse = lse_axis(&self.gibbs_kernel, None, Some(&self.dual_col), Axis(1));
            Zip::from(&mut self.dual_row)
                .and(&alpha.view())
                .and(&row_lse)
                .for_each(|f, &a, &z| *f = a.ln() - z);
            let col_lse = lse_axis(&self.gibbs_kernel, Some(&self.dual_row), None, Axis(0));
            Zip::from(&mut self.dual_col)
                .and(&beta.view())
                .and(&col_lse)
                .for_each(|g, &b, &z| *g = b.ln() - z);
        } else {
            let k_theta = self.gibbs_kernel.dot(&self.dual_col);
            self.dual_row = scale_ratio(&alpha.view(), &k_theta, "row")?;
            let kt_mu = self.gibbs_kernel.t().dot(&self.dual_row);
            self.dual_col = scale_ratio(&beta.view(), &kt_mu, "column")?;
        }
        Ok(())
    }

    /// Moves a log-domain state from `from` to `to`, keeping the potentials
    /// fixed in cost units. No-op in linear mode.
    pub fn rescale(&mut self, cost: &CostMatrix, from: f64, to: f64) {
        if !self.log_domain {
            return;
        }
        let ratio = from / to;
        self.dual_row *= ratio;
        self.dual_col *= ratio;
        self.gibbs_kernel = cost.view().mapv(|c| -c / to);
    }

    pub fn plan(&self) -> Array2<f64> {
        let mut plan = self.gibbs_kernel.clone();
        if self.log_domain {
            Zip::indexed(&mut plan).for_each(|(i, j), w| {
                *w = (self.dual_row[i] + *w + self.dual_col[j]).exp();
            });
        } else {
            Zip::indexed(&mut plan).for_each(|(i, j), w| {
                *w *= self.dual_row[i] * self.dual_col[j];
            });
        }
        plan
    }
}

fn bregman_linear(
    cost: &CostMatrix,
    alpha: &MarginalWeights,
    beta: &MarginalWeights,
    cfg: &SolverConfig,
) -> Result<TransportPlan> {
    let mut plan = cost.view().mapv(|c| (-c / cfg.lambda).exp());
    check_kernel(&plan)?;
    for t in 1..=cfg.max_iterations {
        let prev = plan.clone();
        let rows = scale_ratio(&alpha.view(), &plan.sum_axis(Axis(1)), "row")?;
        plan *= &rows.insert_axis(Axis(1));
        let cols = scale_ratio(&beta.view(), &plan.sum_axis(Axis(0)), "column")?;
        plan *= &cols.insert_axis(Axis(0));
        if Stop::Change(cfg.convergence_tol).reached(&plan, &prev, alpha) {
            return Ok(TransportPlan::new(plan, true, t));
        }
    }
    Ok(TransportPlan::new(plan, false, cfg.max_iterations))
}

fn bregman_log(
    cost: &CostMatrix,
    alpha: &MarginalWeights,
    beta: &MarginalWeights,
    cfg: &SolverConfig,
) -> Result<TransportPlan> {
    let schedule = warm_start_schedule(cfg);
    let first = schedule.first().copied().unwrap_or(cfg.lambda);
    let mut log_plan = cost.view().mapv(|c| -c / first);
    for (stage, &lambda) in schedule.iter().enumerate() {
        log_projection_sweeps(
            &mut log_plan,
            alpha,
            beta,
            Stop::Feasible(WARM_START_TOL),
            WARM_START_SWEEPS,
        );
        // plan entries are exp((u_i + v_j - c_ij) / lambda); keep u, v and change lambda
        let next = schedule.get(stage + 1).copied().unwrap_or(cfg.lambda);
        log_plan *= lambda / next;
    }
    let stop = Stop::Change(cfg.convergence_tol);
    let (plan, converged, used) = log_projection_sweeps(&mut log_plan, alpha, beta, stop, cfg.max_iterations);
    Ok(TransportPlan::new(plan, converged, used))
}

fn log_projection_sweeps(
    log_plan: &mut Array2<f64>,
    alpha: &MarginalWeights,
    beta: &MarginalWeights,
    stop: Stop,
    max_sweeps: usize,
) -> (Array2<f64>, bool, usize) {
    let log_alpha = alpha.view().mapv(f64::ln);
    let log_beta = beta.view().mapv(f64::ln);
    let mut prev = log_plan.mapv(f64::exp);
    for t in 1..=max_sweeps {
        let row_shift = &log_alpha - &lse_axis(log_plan, None, None, Axis(1));
        *log_plan += &row_shift.insert_axis(Axis(1));
        let col_shift = &log_beta - &lse_axis(log_plan, None, None, Axis(0));
        *log_plan += &col_shift.insert_axis(Axis(0));
        let plan = log_plan.mapv(f64::exp);
        let done = stop.reached(&plan, &prev, alpha);
        prev = plan;
        if done {
            return (prev, true, t);
        }
    }
    (prev, false, max_sweeps)
}

fn rows_within(plan: &Array2<f64>, alpha: &MarginalWeights, tol: f64) -> bool {
    plan.sum_axis(Axis(1))
        .iter()
        .zip(alpha.as_slice())
        .all(|(r, a)| (r - a).abs() < tol)
}

/// Log-sum-exp of `m[i, j] + row[i] + col[j]` reduced along `axis`.
fn lse_axis(m: &Array2<f64>, row: Option<&Array1<f64>>, col: Option<&Array1<f64>>, axis: Axis) -> Array1<f64> {
    let term = |i: usize, j: usize| m[[i, j]] + row.map_or(0.0, |r| r[i]) + col.map_or(0.0, |c| c[j]);
    let (k, l) = m.dim();
    let (outer, inner) = if axis == Axis(1) { (k, l) } else { (l, k) };
    Array1::from_shape_fn(outer, |o| {
        let at = |n: usize| if axis == Axis(1) { term(o, n) } else { term(n, o) };
        let max = (0..inner).map(at).fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return max;
        }
        max + (0..inner).map(|n| (at(n) - max).exp()).sum::<f64>().ln()
    })
}

fn scale_ratio(target: &ndarray::ArrayView1<f64>, sums: &Array1<f64>, what: &str) -> Result<Array1<f64>> {
    if let Some((idx, s)) = sums.iter().enumerate().find(|(_, s)| !(s.is_finite() && **s > 0.0)) {
        return Err(Error::NumericalUnderflow(format!("{what} {idx} has mass {s}")));
    }
    Ok(target.to_owned() / sums)
}

fn check_kernel(kernel: &Array2<f64>) -> Result<()> {
    for (i, row) in kernel.outer_iter().enumerate() {
        if row.iter().all(|&w| w == 0.0) {
            return Err(Error::NumericalUnderflow(format!("Gibbs kernel row {i} is all zero")));
        }
    }
    for (j, col) in kernel.axis_iter(Axis(1)).enumerate() {
        if col.iter().all(|&w| w == 0.0) {
            return Err(Error::NumericalUnderflow(format!(
                "Gibbs kernel column {j} is all zero"
            )));
        }
    }
    Ok(())
}

/// `||a - b||_F / ||b||_F`, infinite when `b` vanishes.
fn relative_change(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let diff: f64 = a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum();
    let base: f64 = b.iter().map(|y| y * y).sum();
    if base > 0.0 {
        (diff / base).sqrt()
    } else {
        f64::INFINITY
    }
}

fn check_problem(cost: &CostMatrix, alpha: &MarginalWeights, beta: &MarginalWeights, cfg: &SolverConfig) -> Result<()> {
    cfg.validate()?;
    let (k, l) = cost.shape();
    if alpha.len() != k {
        return Err(Error::shape(format!("{k} row weights"), alpha.len()));
    }
    if beta.len() != l {
        return Err(Error::shape(format!("{l} column weights"), beta.len()));
    }
    if alpha.view().iter().chain(beta.view().iter()).any(|&w| w <= 0.0) {
        return Err(Error::invalid("marginal weights must be strictly positive"));
    }
    Ok(())
}
