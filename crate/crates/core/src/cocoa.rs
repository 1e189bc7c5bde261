//! Outer loop of communication-efficient distributed dual coordinate ascent:
//! per round, every worker improves its own dual block starting from the same
//! broadcast primal vector, and the master merges the K updates scaled by
//! beta_k / K.
//!
//! With beta_k = 1 the merged point is an average of per-block ascent points,
//! so by concavity the dual objective never decreases; a guard aborts the run
//! if it ever does by more than 1e-6 (which would indicate a bug, not a
//! property of the method).

use crate::data::{Dataset, Partition};
use crate::error::{CoreError, Result};
use crate::loss::LossModel;
use crate::objective::{dual_value, primal_value, DualState};
use crate::runtime::{ledger_report, worker_seed, CostModel, Runtime};
use crate::solver::{
    exact_block_solver, local_sdca, LocalSolverConfig, LocalUpdate, SolverMode, DEFAULT_MAX_EPOCHS,
};
use crate::trace::{Trace, TraceRecord};

/// Outer-loop configuration.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CocoaConfig {
    /// Number of outer rounds T.
    pub rounds: u32,
    /// Merge scaling in [1, K]; 1 averages (the analyzed default), K adds.
    pub beta_k: f64,
    pub local: LocalSolverConfig,
    pub lambda: f64,
    /// Objective evaluation cadence in rounds (1 = every round).
    pub eval_every: u32,
    pub cost: CostModel,
}

impl CocoaConfig {
    pub fn new(rounds: u32, beta_k: f64, local: LocalSolverConfig, lambda: f64) -> Self {
        Self {
            rounds,
            beta_k,
            local,
            lambda,
            eval_every: 1,
            cost: CostModel::default(),
        }
    }

    fn validate(&self, k: usize) -> Result<()> {
        if self.rounds == 0 {
            return Err(CoreError::InvalidConfig("rounds must be at least 1".into()));
        }
        if !(self.lambda > 0.0) {
            return Err(CoreError::InvalidConfig(format!(
                "lambda {} must be > 0",
                self.lambda
            )));
        }
        if !(self.beta_k >= 1.0 && self.beta_k <= k as f64) {
            return Err(CoreError::InvalidConfig(format!(
                "beta_k {} not in [1, K = {k}]",
                self.beta_k
            )));
        }
        if self.eval_every == 0 {
            return Err(CoreError::InvalidConfig(
                "eval_every must be at least 1".into(),
            ));
        }
        self.local.validate()
    }
}

/// Runs the outer loop from alpha = 0, w = 0 and returns the trace of
/// evaluated rounds (round 0 and every `eval_every`-th round thereafter, plus
/// the final round). The dual objective is checked at every evaluated round.
pub fn run_cocoa(
    ds: &Dataset,
    partition: &Partition,
    model: LossModel,
    cfg: &CocoaConfig,
    rt: &mut Runtime,
) -> Result<Trace> {
    run_cocoa_with_state(ds, partition, model, cfg, rt).map(|(trace, _)| trace)
}

/// Same as [`run_cocoa`], additionally returning the final dual state (for
/// consistency checks and warm restarts).
pub fn run_cocoa_with_state(
    ds: &Dataset,
    partition: &Partition,
    model: LossModel,
    cfg: &CocoaConfig,
    rt: &mut Runtime,
) -> Result<(Trace, DualState)> {
    let k = partition.num_blocks();
    cfg.validate(k)?;
    if partition.n() != ds.n() {
        return Err(CoreError::InvalidConfig(format!(
            "partition covers {} indices but dataset has {}",
            partition.n(),
            ds.n()
        )));
    }
    ds.require_binary_labels()?;

    let n = ds.n();
    let dim = ds.dim();
    let lambda = cfg.lambda;
    let scale = cfg.beta_k / k as f64;
    let mut state = DualState::zero(n, dim, lambda);
    let mut records = Vec::new();
    let mut last_dual = f64::NEG_INFINITY;

    let mut record = |state: &DualState, rt: &Runtime, round: u32| -> (f64, f64) {
        let primal = primal_value(&state.w, ds, lambda, model);
        let dual = dual_value(&state.alpha, ds, lambda, model);
        let updates = rt.ledger().coordinate_updates;
        records.push(TraceRecord {
            round,
            epochs: updates as f64 / n as f64,
            primal,
            dual: Some(dual),
            gap: Some(primal - dual),
            vectors: rt.vectors(),
            updates,
            synth_time: cfg.cost.synth_time(rt.vectors(), updates),
        });
        (primal, dual)
    };

    let (_, dual0) = record(&state, rt, 0);
    last_dual = last_dual.max(dual0);

    for t in 1..=cfg.rounds {
        let w_snapshot = state.w.clone();
        let alpha_snapshot: Vec<Vec<f64>> = partition
            .blocks()
            .iter()
            .map(|block| block.iter().map(|&i| state.alpha[i]).collect())
            .collect();

        let tasks: Vec<_> = (0..k)
            .map(|worker| {
                let block = partition.block(worker);
                let alpha_blk = &alpha_snapshot[worker];
                let w_ref = &w_snapshot;
                let local = cfg.local;
                let seed = worker_seed(cfg.local.seed, t, worker);
                move || -> Result<LocalUpdate> {
                    match local.mode {
                        SolverMode::Sdca => Ok(local_sdca(
                            ds, block, alpha_blk, w_ref, model, lambda, local.h, seed,
                        )),
                        SolverMode::Exact { tol } => exact_block_solver(
                            ds,
                            block,
                            alpha_blk,
                            w_ref,
                            model,
                            lambda,
                            tol,
                            DEFAULT_MAX_EPOCHS,
                        ),
                    }
                }
            })
            .collect();

        let steps = rt.execute_round(t, dim, tasks, |updates: Vec<LocalUpdate>| {
            let mut steps = 0u64;
            for (worker, update) in updates.iter().enumerate() {
                state.apply_block_update(
                    partition.block(worker),
                    &update.delta_alpha,
                    &update.delta_w,
                    scale,
                );
                steps += update.steps;
            }
            steps
        })?;
        rt.add_updates(steps);
        state.refresh_w(ds, steps, n as u64);

        if t % cfg.eval_every == 0 || t == cfg.rounds {
            let (_, dual) = record(&state, rt, t);
            if cfg.beta_k == 1.0 && dual < last_dual - 1e-6 {
                return Err(CoreError::DualDecrease {
                    round: t,
                    drop: last_dual - dual,
                });
            }
            last_dual = dual;
        }
    }

    let trace = Trace {
        records,
        ledger: ledger_report(rt.ledger(), rt.count_direction),
        diverged: false,
    };
    Ok((trace, state))
}

/// Primal suboptimality series P(w_t) - P* for each evaluated round, given a
/// reference optimum from a high-accuracy solve.
pub fn suboptimality_series(trace: &Trace, p_star: f64) -> Result<Vec<f64>> {
    if !p_star.is_finite() {
        return Err(CoreError::InvalidConfig(format!(
            "p_star {p_star} is not finite"
        )));
    }
    Ok(trace.records.iter().map(|r| r.primal - p_star).collect())
}
