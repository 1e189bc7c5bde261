//! Comparison methods sharing the bulk-synchronous runtime and ledger:
//! mini-batch dual coordinate ascent, mini-batch Pegasos, and the
//! locally-updating Pegasos variant. Equal K means equal per-round traffic, so
//! communication comparisons reduce to rounds-to-target.
//!
//! The defining difference from the locally-updating methods: mini-batch
//! workers compute every update of a round against the same stale vector and
//! never see each other's intra-round progress.

use crate::data::{Dataset, Partition};
use crate::error::{CoreError, Result};
use crate::loss::LossModel;
use crate::objective::{dual_value, primal_value, DualState};
use crate::runtime::{ledger_report, worker_seed, CostModel, Runtime};
use crate::solver::coordinate_update;
use crate::trace::{Trace, TraceRecord};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Which counter drives the 1/(lambda t) step size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepSizeIndex {
    /// Outer round number (mini-batch default: the merged step is the unit).
    Round,
    /// Global inner step count (local default: each local step is the unit).
    GlobalStep,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BaselineConfig {
    /// Per-worker batch / inner-iteration size.
    pub h: usize,
    /// Merge scaling: in [1, K*H] for the mini-batch methods (1 averages the
    /// b = K*H updates, b adds them), in [1, K] for local SGD.
    pub beta: f64,
    pub rounds: u32,
    pub lambda: f64,
    pub seed: u64,
    pub eval_every: u32,
    /// Overrides the per-method default step-size indexing.
    pub step_index: Option<StepSizeIndex>,
    pub cost: CostModel,
}

impl BaselineConfig {
    pub fn new(h: usize, beta: f64, rounds: u32, lambda: f64, seed: u64) -> Self {
        Self {
            h,
            beta,
            rounds,
            lambda,
            seed,
            eval_every: 1,
            step_index: None,
            cost: CostModel::default(),
        }
    }

    fn validate(&self, beta_cap: f64) -> Result<()> {
        if self.rounds == 0 || self.h == 0 || self.eval_every == 0 {
            return Err(CoreError::InvalidConfig(
                "rounds, h, and eval_every must be at least 1".into(),
            ));
        }
        if !(self.lambda > 0.0) {
            return Err(CoreError::InvalidConfig(format!(
                "lambda {} must be > 0",
                self.lambda
            )));
        }
        if !(self.beta >= 1.0 && self.beta <= beta_cap) {
            return Err(CoreError::InvalidConfig(format!(
                "beta {} not in [1, {beta_cap}]",
                self.beta
            )));
        }
        Ok(())
    }
}

fn check_shapes(ds: &Dataset, partition: &Partition) -> Result<()> {
    if partition.n() != ds.n() {
        return Err(CoreError::InvalidConfig(format!(
            "partition covers {} indices but dataset has {}",
            partition.n(),
            ds.n()
        )));
    }
    ds.require_binary_labels()
}

fn require_batch_fits(partition: &Partition, h: usize) -> Result<()> {
    let min_block = partition.sizes().into_iter().min().unwrap_or(0);
    if h > min_block {
        return Err(CoreError::InvalidConfig(format!(
            "batch size {h} exceeds smallest block size {min_block} (sampling is without replacement)"
        )));
    }
    Ok(())
}

/// Draws `count` distinct positions from `0..pool_len` by partial
/// Fisher-Yates; the first draw consumes one uniform index, matching a single
/// with-replacement draw.
fn sample_without_replacement(rng: &mut ChaCha8Rng, pool_len: usize, count: usize) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..pool_len).collect();
    for t in 0..count {
        let j = rng.random_range(t..pool_len);
        pool.swap(t, j);
    }
    pool.truncate(count);
    pool
}

/// Per-worker mini-batch result: global-index coordinate deltas plus the
/// block's aggregated primal image change.
type BatchUpdate = (Vec<(usize, f64)>, Vec<f64>);

/// Tracks persistent dual decrease across evaluated rounds.
struct DivergenceMonitor {
    last_dual: f64,
    consecutive_drops: u32,
    flagged: bool,
}

impl DivergenceMonitor {
    fn new() -> Self {
        Self {
            last_dual: f64::NEG_INFINITY,
            consecutive_drops: 0,
            flagged: false,
        }
    }

    /// Returns true when the run should stop (non-finite objective).
    fn observe(&mut self, dual: f64) -> bool {
        if !dual.is_finite() {
            self.flagged = true;
            return true;
        }
        if dual < self.last_dual - 1e-12 {
            self.consecutive_drops += 1;
            if self.consecutive_drops > 5 {
                self.flagged = true;
            }
        } else {
            self.consecutive_drops = 0;
        }
        self.last_dual = dual;
        false
    }
}

/// Mini-batch dual coordinate ascent: every worker computes `h` coordinate
/// maximizations of the dual, all against the same broadcast `w` and the
/// round-start alpha, and the master merges them scaled by beta / (K*H).
/// Persistent dual decrease is flagged in the trace rather than fatal
/// (expected for aggressive beta).
pub fn run_minibatch_cd(
    ds: &Dataset,
    partition: &Partition,
    model: LossModel,
    cfg: &BaselineConfig,
    rt: &mut Runtime,
) -> Result<Trace> {
    let k = partition.num_blocks();
    cfg.validate((k * cfg.h) as f64)?;
    check_shapes(ds, partition)?;
    require_batch_fits(partition, cfg.h)?;

    let n = ds.n();
    let lambda = cfg.lambda;
    let scale = cfg.beta / (k * cfg.h) as f64;
    let mut state = DualState::zero(n, ds.dim(), lambda);
    let mut records = Vec::new();
    let mut monitor = DivergenceMonitor::new();

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
    monitor.observe(dual0);

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
                let h = cfg.h;
                let seed = worker_seed(cfg.seed, t, worker);
                move || -> Result<BatchUpdate> {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    let picks = sample_without_replacement(&mut rng, block.len(), h);
                    let inv = 1.0 / (lambda * n as f64);
                    let mut deltas = Vec::with_capacity(h);
                    let mut delta_w = vec![0.0; w_ref.len()];
                    for j in picks {
                        let i = block[j];
                        let delta = coordinate_update(
                            model,
                            lambda,
                            n,
                            ds.point(i),
                            ds.label(i),
                            alpha_blk[j],
                            w_ref,
                        );
                        if delta != 0.0 {
                            deltas.push((i, delta));
                            ds.point(i).add_scaled_into(delta * inv, &mut delta_w);
                        }
                    }
                    Ok((deltas, delta_w))
                }
            })
            .collect();

        rt.execute_round(t, ds.dim(), tasks, |results: Vec<BatchUpdate>| {
            for (deltas, delta_w) in results {
                for (i, delta) in deltas {
                    state.alpha[i] += scale * delta;
                }
                for (wi, dw) in state.w.iter_mut().zip(&delta_w) {
                    *wi += scale * dw;
                }
            }
        })?;
        rt.add_updates((k * cfg.h) as u64);
        state.refresh_w(ds, (k * cfg.h) as u64, n as u64);

        if t % cfg.eval_every == 0 || t == cfg.rounds {
            let (_, dual) = record(&state, rt, t);
            if monitor.observe(dual) {
                break;
            }
        }
    }

    Ok(Trace {
        records,
        ledger: ledger_report(rt.ledger(), rt.count_direction),
        diverged: monitor.flagged,
    })
}

fn hinge_only(model: LossModel) -> Result<()> {
    if model != LossModel::Hinge {
        return Err(CoreError::InvalidConfig(format!(
            "{} is not supported by the subgradient baselines (hinge only)",
            model.name()
        )));
    }
    Ok(())
}

fn record_primal_only(
    records: &mut Vec<TraceRecord>,
    w: &[f64],
    ds: &Dataset,
    lambda: f64,
    rt: &Runtime,
    round: u32,
    cost: &CostModel,
) -> f64 {
    let primal = primal_value(w, ds, lambda, LossModel::Hinge);
    let updates = rt.ledger().coordinate_updates;
    records.push(TraceRecord {
        round,
        epochs: updates as f64 / ds.n() as f64,
        primal,
        dual: None,
        gap: None,
        vectors: rt.vectors(),
        updates,
        synth_time: cost.synth_time(rt.vectors(), updates),
    });
    primal
}

/// Mini-batch Pegasos: per round every worker gathers hinge subgradients of
/// `h` sampled points against the broadcast `w`, and the master takes one
/// step with size 1/(lambda t), averaging the K*H contributions scaled by
/// beta. No projection step.
pub fn run_minibatch_sgd(
    ds: &Dataset,
    partition: &Partition,
    model: LossModel,
    cfg: &BaselineConfig,
    rt: &mut Runtime,
) -> Result<Trace> {
    hinge_only(model)?;
    let k = partition.num_blocks();
    cfg.validate((k * cfg.h) as f64)?;
    check_shapes(ds, partition)?;
    require_batch_fits(partition, cfg.h)?;

    let lambda = cfg.lambda;
    let step_index = cfg.step_index.unwrap_or(StepSizeIndex::Round);
    let mut w = vec![0.0; ds.dim()];
    let mut records = Vec::new();

    record_primal_only(&mut records, &w, ds, lambda, rt, 0, &cfg.cost);

    for t in 1..=cfg.rounds {
        let w_snapshot = w.clone();
        let tasks: Vec<_> = (0..k)
            .map(|worker| {
                let block = partition.block(worker);
                let w_ref = &w_snapshot;
                let h = cfg.h;
                let seed = worker_seed(cfg.seed, t, worker);
                move || -> Result<Vec<f64>> {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    let picks = sample_without_replacement(&mut rng, block.len(), h);
                    let mut grad = vec![0.0; w_ref.len()];
                    for j in picks {
                        let i = block[j];
                        let y = ds.label(i);
                        if y * ds.point(i).dot_dense(w_ref) < 1.0 {
                            ds.point(i).add_scaled_into(-y, &mut grad);
                        }
                    }
                    Ok(grad)
                }
            })
            .collect();

        let step_count = match step_index {
            StepSizeIndex::Round => t as f64,
            StepSizeIndex::GlobalStep => (t as f64) * cfg.h as f64,
        };
        let eta = 1.0 / (lambda * step_count);
        let merge_scale = eta * cfg.beta / (k * cfg.h) as f64;
        rt.execute_round(t, ds.dim(), tasks, |grads: Vec<Vec<f64>>| {
            for wi in w.iter_mut() {
                *wi *= 1.0 - eta * lambda;
            }
            for grad in grads {
                for (wi, g) in w.iter_mut().zip(&grad) {
                    *wi -= merge_scale * g;
                }
            }
        })?;
        rt.add_updates((k * cfg.h) as u64);

        if t % cfg.eval_every == 0 || t == cfg.rounds {
            record_primal_only(&mut records, &w, ds, lambda, rt, t, &cfg.cost);
        }
    }

    Ok(Trace {
        records,
        ledger: ledger_report(rt.ledger(), rt.count_direction),
        diverged: false,
    })
}

/// Locally-updating Pegasos: every worker runs `h` sequential subgradient
/// steps on its own evolving copy of `w` (sampling its block with
/// replacement), and the master merges the K displacement vectors scaled by
/// beta / K. Step sizes default to 1/(lambda g) with g the global inner step
/// count.
pub fn run_local_sgd(
    ds: &Dataset,
    partition: &Partition,
    model: LossModel,
    cfg: &BaselineConfig,
    rt: &mut Runtime,
) -> Result<Trace> {
    hinge_only(model)?;
    let k = partition.num_blocks();
    cfg.validate(k as f64)?;
    check_shapes(ds, partition)?;

    let lambda = cfg.lambda;
    let step_index = cfg.step_index.unwrap_or(StepSizeIndex::GlobalStep);
    let merge_scale = cfg.beta / k as f64;
    let mut w = vec![0.0; ds.dim()];
    let mut records = Vec::new();

    record_primal_only(&mut records, &w, ds, lambda, rt, 0, &cfg.cost);

    for t in 1..=cfg.rounds {
        let w_snapshot = w.clone();
        let tasks: Vec<_> = (0..k)
            .map(|worker| {
                let block = partition.block(worker);
                let w_ref = &w_snapshot;
                let h = cfg.h;
                let seed = worker_seed(cfg.seed, t, worker);
                move || -> Result<Vec<f64>> {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    let mut w_loc = w_ref.clone();
                    for step in 1..=h {
                        let j = rng.random_range(0..block.len());
                        let i = block[j];
                        let count = match step_index {
                            StepSizeIndex::GlobalStep => (t as u64 - 1) * h as u64 + step as u64,
                            StepSizeIndex::Round => t as u64,
                        };
                        let eta = 1.0 / (lambda * count as f64);
                        let y = ds.label(i);
                        let active = y * ds.point(i).dot_dense(&w_loc) < 1.0;
                        for wi in w_loc.iter_mut() {
                            *wi *= 1.0 - eta * lambda;
                        }
                        if active {
                            ds.point(i).add_scaled_into(eta * y, &mut w_loc);
                        }
                    }
                    let delta: Vec<f64> =
                        w_loc.iter().zip(w_ref.iter()).map(|(a, b)| a - b).collect();
                    Ok(delta)
                }
            })
            .collect();

        rt.execute_round(t, ds.dim(), tasks, |deltas: Vec<Vec<f64>>| {
            for delta in deltas {
                for (wi, dv) in w.iter_mut().zip(&delta) {
                    *wi += merge_scale * dv;
                }
            }
        })?;
        rt.add_updates((k * cfg.h) as u64);

        if t % cfg.eval_every == 0 || t == cfg.rounds {
            record_primal_only(&mut records, &w, ds, lambda, rt, t, &cfg.cost);
        }
    }

    Ok(Trace {
        records,
        ledger: ledger_report(rt.ledger(), rt.count_direction),
        diverged: false,
    })
}
