//! Similarity between sets of embedding fragments via entropic optimal
//! transport, with dustbin-based partial matching, reference baselines and a
//! retrieval evaluation harness.
//!
//! ```
//! use sinkmatch_core::{FragmentSet, SolverConfig, sinkhorn_similarity};
//!
//! let image = FragmentSet::from_rows(&[vec![1.0, 0.0], vec![0.6, 0.8]], None, 0).unwrap();
//! let caption = FragmentSet::from_rows(&[vec![0.0, 1.0]], None, 1).unwrap();
//! let s = sinkhorn_similarity(&image, &caption, &SolverConfig::default()).unwrap();
//! assert!((s - 0.4).abs() < 1e-12);
//! ```

pub mod baselines;
pub mod config;
pub mod error;
pub mod fragments;
pub mod io;
pub mod ot;
pub mod partial;
pub mod retrieval;
pub mod synthetic;

pub use baselines::{cam_similarity, pem_wasserstein, vse_similarity, CamConfig, GaussianEmbedding};
pub use config::RunConfig;
pub use error::{Error, Result};
pub use fragments::{compute_margins, FragmentSet, MarginKind, MarginStrategy};
pub use ot::{
    build_cost_matrix, exact_emd_oracle, plan_entropy, sinkhorn_bregman, sinkhorn_matrix_scaling, sinkhorn_similarity,
    transport_cost, CostMatrix, LogDomain, MarginalWeights, SinkhornState, SolverConfig, TransportPlan,
};
pub use partial::{extend_problem, partial_similarity, solve_partial, DustbinMass, PartialProblem};
pub use retrieval::{
    batch_similarity, recall_report, triplet_loss, GroundTruth, LossConfig, Method, RetrievalReport, SimilarityMatrix,
};
