//! Partial matching: each set's global embedding is added as a "dustbin"
//! fragment that can absorb mass from fragments with no good counterpart.
//!
//! The extended cost matrix has the dustbin in row 0 and column 0:
//!
//! ```text
//! [ C_g   C_gv ]     C_g  = tau (1 - a.global . b.global)
//! [ C_gt  C    ]     C_gv = tau (1 - a.global . t_j),  C_gt = tau (1 - b.global . v_i)
//! ```
//!
//! Only the local block of the solved plan contributes to the similarity; the
//! mass routed through dustbins is discarded rather than renormalized.

use ndarray::{s, Array1, Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::fragments::FragmentSet;
use crate::ot::{self, CostMatrix, MarginalWeights, SolverConfig, TransportPlan};

pub const DEFAULT_DUSTBIN_SCALE: f64 = 0.1;

/// How much marginal mass each dustbin carries.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum DustbinMass {
    /// The dustbin counts as one more fragment: `1 / (K + 1)`.
    #[default]
    Uniform,
    /// A fixed share in `(0, 1)` on both sides.
    Fixed(f64),
}

impl DustbinMass {
    fn share(&self, fragments: usize) -> Result<f64> {
        match *self {
            DustbinMass::Uniform => Ok(1.0 / (fragments + 1) as f64),
            DustbinMass::Fixed(m) if m > 0.0 && m < 1.0 => Ok(m),
            DustbinMass::Fixed(m) => Err(Error::invalid(format!("dustbin mass must lie in (0, 1), got {m}"))),
        }
    }
}

/// A transport problem extended with one dustbin row and column.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialProblem {
    pub extended_cost: CostMatrix,
    pub extended_alpha: MarginalWeights,
    pub extended_beta: MarginalWeights,
    pub dustbin_scale: f64,
}

impl PartialProblem {
    /// The unextended `K x L` block.
    pub fn local_cost(&self) -> ArrayView2<'_, f64> {
        self.extended_cost.view().slice_move(s![1.., 1..])
    }
}

/// Mass of the four blocks of an extended plan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockMasses {
    pub corner: f64,
    pub dustbin_row: f64,
    pub dustbin_col: f64,
    pub local: f64,
}

impl BlockMasses {
    pub fn of(plan: &TransportPlan) -> Self {
        let v = &plan.values;
        BlockMasses {
            corner: v[[0, 0]],
            dustbin_row: v.slice(s![0, 1..]).sum(),
            dustbin_col: v.slice(s![1.., 0]).sum(),
            local: v.slice(s![1.., 1..]).sum(),
        }
    }

    pub fn total(&self) -> f64 {
        self.corner + self.dustbin_row + self.dustbin_col + self.local
    }
}

/// Extends `(a, b)` with dustbins under uniform fragment margins.
pub fn extend_problem(a: &FragmentSet, b: &FragmentSet, tau: f64) -> Result<PartialProblem> {
    let alpha = MarginalWeights::uniform(a.len())?;
    let beta = MarginalWeights::uniform(b.len())?;
    extend_problem_with(a, b, tau, &alpha, &beta, DustbinMass::Uniform)
}

/// Extends `(a, b)` with dustbins, scaling the given local margins to make room
/// for the dustbin mass.
pub fn extend_problem_with(
    a: &FragmentSet,
    b: &FragmentSet,
    tau: f64,
    alpha: &MarginalWeights,
    beta: &MarginalWeights,
    dustbin: DustbinMass,
) -> Result<PartialProblem> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::invalid(format!("dustbin scale must be positive, got {tau}")));
    }
    if alpha.len() != a.len() || beta.len() != b.len() {
        return Err(Error::shape(
            format!("{}x{} margins", a.len(), b.len()),
            format!("{}x{}", alpha.len(), beta.len()),
        ));
    }
    let local = ot::build_cost_matrix(a, b)?.into_inner();
    let (k, l) = local.dim();
    let a_global = a.global();
    let b_global = b.global();

    let mut cost = Array2::zeros((k + 1, l + 1));
    cost[[0, 0]] = tau * (1.0 - a_global.dot(&b_global));
    for (j, t) in b.unit().outer_iter().enumerate() {
        cost[[0, j + 1]] = tau * (1.0 - a_global.dot(&t));
    }
    for (i, v) in a.unit().outer_iter().enumerate() {
        cost[[i + 1, 0]] = tau * (1.0 - b_global.dot(&v));
    }
    cost.slice_mut(s![1.., 1..]).assign(&local);

    Ok(PartialProblem {
        extended_cost: CostMatrix::new(cost)?,
        extended_alpha: extend_margin(alpha, dustbin.share(k)?)?,
        extended_beta: extend_margin(beta, dustbin.share(l)?)?,
        dustbin_scale: tau,
    })
}

fn extend_margin(local: &MarginalWeights, dustbin: f64) -> Result<MarginalWeights> {
    let mut w = Array1::zeros(local.len() + 1);
    w[0] = dustbin;
    w.slice_mut(s![1..]).assign(&(&local.view() * (1.0 - dustbin)));
    MarginalWeights::new(w)
}

/// Solves the extended problem; the plan is `(K+1) x (L+1)`.
pub fn solve_partial(problem: &PartialProblem, cfg: &SolverConfig) -> Result<TransportPlan> {
    ot::solve(
        &problem.extended_cost,
        &problem.extended_alpha,
        &problem.extended_beta,
        cfg,
    )
}

/// `<local block of the extended plan, V T^T>`, without renormalizing the block.
pub fn partial_similarity(a: &FragmentSet, b: &FragmentSet, cfg: &SolverConfig, tau: f64) -> Result<f64> {
    let problem = extend_problem(a, b, tau)?;
    local_similarity(a, b, &solve_partial(&problem, cfg)?)
}

/// Similarity carried by the local block of an already solved extended plan.
pub fn local_similarity(a: &FragmentSet, b: &FragmentSet, extended: &TransportPlan) -> Result<f64> {
    let sims = ot::similarity_matrix(a, b)?;
    let (k, l) = sims.dim();
    if extended.shape() != (k + 1, l + 1) {
        return Err(Error::shape(
            format!("{}x{} extended plan", k + 1, l + 1),
            format!("{:?}", extended.shape()),
        ));
    }
    ot::frobenius_inner(extended.values.slice(s![1.., 1..]), sims.view())
}
