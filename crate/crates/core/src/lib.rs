//! Communication-efficient distributed dual coordinate ascent over a
//! simulated multi-worker runtime.
//!
//! The crate solves l2-regularized loss minimization (hinge, smoothed hinge,
//! logistic) through its dual, one coordinate block per worker. Each outer
//! round broadcasts the shared primal vector, runs an inner dual solver on
//! every block in parallel, and merges the K update vectors on the master —
//! one vector up and one down per worker per round, which the communication
//! ledger counts exactly. Mini-batch and locally-updating subgradient
//! baselines share the same runtime so communication comparisons are
//! apples-to-apples, and the `theory` module computes the constants
//! (`sigma_min`, `theta`, per-round rate) that certify the dual convergence
//! rate of the averaging variant on smooth losses.

// Validation uses negated float comparisons so NaN parameters are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod cocoa;
pub mod data;
pub mod error;
pub mod loss;
pub mod objective;
pub mod runtime;
pub mod solver;
pub mod theory;
pub mod trace;

pub use baselines::{
    run_local_sgd, run_minibatch_cd, run_minibatch_sgd, BaselineConfig, StepSizeIndex,
};
pub use cocoa::{run_cocoa, run_cocoa_with_state, suboptimality_series, CocoaConfig};
pub use data::{
    gen_orthogonal_blocks, gen_synthetic, parse_libsvm, parse_libsvm_str, scale_to_unit_norm,
    write_libsvm, Dataset, Partition, SparseVector,
};
pub use error::{CoreError, Result};
pub use loss::LossModel;
pub use objective::{
    dual_value, duality_gap, local_dual_value, local_primal_value, primal_from_dual, primal_value,
    DualState,
};
pub use runtime::{
    ledger_report, worker_seed, CommLedger, CostModel, CountDirection, ExecutionMode,
    LedgerSummary, Message, MessageKind, Runtime,
};
pub use solver::{
    coordinate_update, exact_block_solver, local_sdca, reference_solve, LocalSolverConfig,
    LocalUpdate, RefSolution, SolverMode, DEFAULT_MAX_EPOCHS,
};
pub use theory::{
    local_suboptimality, rate_bound, sigma_min, theory_report, theta_local_sdca, TheoryReport,
    EIGEN_CAP,
};
pub use trace::{Trace, TraceRecord};
