//! Per-block dual solvers: the single-coordinate exact maximization step,
//! randomized coordinate ascent over a block (LocalSDCA), and an exact block
//! solver that iterates epochs until the local duality gap closes.
//!
//! Every solver returns a `LocalUpdate` satisfying the output contract
//! `delta_w = A_[k] * delta_alpha` (up to accumulation round-off). A solver
//! invocation owns its block's alpha segment and a private copy of `w`, so
//! invocations on different blocks may run concurrently.

use crate::data::{Dataset, SparseVector};
use crate::error::{CoreError, Result};
use crate::loss::LossModel;
use crate::objective::{dual_value, local_dual_value, local_primal_value, primal_value};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Accumulated block update: `delta_w = A_[k] * delta_alpha`, plus the number
/// of coordinate steps performed (for the communication/computation ledger).
#[derive(Debug, Clone, PartialEq)]
pub struct LocalUpdate {
    pub delta_alpha: Vec<f64>,
    pub delta_w: Vec<f64>,
    pub steps: u64,
}

impl LocalUpdate {
    pub fn zero(block_len: usize, dim: usize) -> Self {
        Self {
            delta_alpha: vec![0.0; block_len],
            delta_w: vec![0.0; dim],
            steps: 0,
        }
    }
}

/// Inner solver selection for one outer round.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SolverMode {
    /// `h` uniformly random coordinate steps per round.
    Sdca,
    /// Epochs of coordinate steps until the local duality gap is at most
    /// `tol` (the h-to-infinity limit of the randomized solver).
    Exact { tol: f64 },
}

/// Configuration of the per-worker inner solver.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LocalSolverConfig {
    /// Inner iterations per round (ignored in exact mode).
    pub h: usize,
    /// Master seed; per-round worker seeds are derived from it.
    pub seed: u64,
    pub mode: SolverMode,
}

impl LocalSolverConfig {
    pub fn sdca(h: usize, seed: u64) -> Self {
        Self {
            h,
            seed,
            mode: SolverMode::Sdca,
        }
    }

    pub fn exact(tol: f64, seed: u64) -> Self {
        Self {
            h: 1,
            seed,
            mode: SolverMode::Exact { tol },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.h == 0 {
            return Err(CoreError::InvalidConfig("h must be at least 1".into()));
        }
        if let SolverMode::Exact { tol } = self.mode {
            if !(tol > 0.0) {
                return Err(CoreError::InvalidConfig(format!(
                    "exact tol {tol} must be > 0"
                )));
            }
        }
        Ok(())
    }
}

/// Default epoch cap for the exact block solver.
pub const DEFAULT_MAX_EPOCHS: usize = 10_000;

/// Exact scalar maximizer `delta` of the single-coordinate dual subproblem
///
///   -(lambda n / 2) ||w + delta x_i / (lambda n)||^2 - l_i*(-(alpha_i + delta))
///
/// Hinge and smoothed hinge admit closed forms (a clipped quadratic maximum);
/// logistic uses a bisection-safeguarded Newton solve on the derivative with
/// tolerance 1e-10. A zero-norm point degenerates to maximizing the conjugate
/// term alone, which the same expressions cover.
pub fn coordinate_update(
    model: LossModel,
    lambda: f64,
    n: usize,
    x: &SparseVector,
    y: f64,
    alpha_i: f64,
    w: &[f64],
) -> f64 {
    let ln = lambda * n as f64;
    let q = x.norm_sq();
    let m = x.dot_dense(w);
    let u0 = alpha_i * y;
    match model {
        LossModel::Hinge => {
            let u_new = if q == 0.0 {
                1.0
            } else {
                (u0 + ln * (1.0 - y * m) / q).clamp(0.0, 1.0)
            };
            y * u_new - alpha_i
        }
        LossModel::SmoothedHinge { gamma } => {
            let denom = q + gamma * ln;
            let u_new = (u0 + ln * (1.0 - y * m - gamma * u0) / denom).clamp(0.0, 1.0);
            y * u_new - alpha_i
        }
        LossModel::Logistic => {
            // Root of g(u) = -y m - (u - u0) q / (lambda n) - log(u/(1-u)),
            // strictly decreasing on (0, 1) from +inf to -inf.
            let g = |u: f64| -y * m - (u - u0) * q / ln - (u.ln() - (1.0 - u).ln());
            let g_prime = |u: f64| -q / ln - 1.0 / u - 1.0 / (1.0 - u);
            let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
            let mut u = if u0 > 0.0 && u0 < 1.0 { u0 } else { 0.5 };
            for _ in 0..200 {
                let gu = g(u);
                if gu.abs() <= 1e-10 {
                    break;
                }
                if gu > 0.0 {
                    lo = u;
                } else {
                    hi = u;
                }
                let newton = u - gu / g_prime(u);
                u = if newton > lo && newton < hi {
                    newton
                } else {
                    0.5 * (lo + hi)
                };
                if hi - lo <= f64::EPSILON * u.max(1e-3) {
                    break;
                }
            }
            y * u - alpha_i
        }
    }
}

/// Randomized coordinate ascent on one block: `h` uniformly random coordinate
/// steps (with replacement), each an exact scalar maximization, with the
/// primal image applied locally and immediately. The block's local dual value
/// is non-decreasing over the steps. Deterministic given `seed`.
#[allow(clippy::too_many_arguments)]
pub fn local_sdca(
    ds: &Dataset,
    block: &[usize],
    alpha_blk: &[f64],
    w: &[f64],
    model: LossModel,
    lambda: f64,
    h: usize,
    seed: u64,
) -> LocalUpdate {
    if block.is_empty() {
        return LocalUpdate::zero(0, ds.dim());
    }
    let inv = 1.0 / (lambda * ds.n() as f64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut alpha = alpha_blk.to_vec();
    let mut w_loc = w.to_vec();
    let mut update = LocalUpdate::zero(block.len(), ds.dim());
    for _ in 0..h {
        let j = rng.random_range(0..block.len());
        let i = block[j];
        let delta = coordinate_update(
            model,
            lambda,
            ds.n(),
            ds.point(i),
            ds.label(i),
            alpha[j],
            &w_loc,
        );
        if delta != 0.0 {
            alpha[j] += delta;
            update.delta_alpha[j] += delta;
            ds.point(i).add_scaled_into(delta * inv, &mut w_loc);
            ds.point(i)
                .add_scaled_into(delta * inv, &mut update.delta_w);
        }
    }
    update.steps = h as u64;
    update
}

/// Solves the block subproblem to local duality gap at most `tol` by repeated
/// epochs of coordinate steps (randomly permuted order, fixed internal seed,
/// so the result is deterministic for given inputs). Errors when `max_epochs`
/// epochs do not reach the tolerance, carrying the last gap.
#[allow(clippy::too_many_arguments)]
pub fn exact_block_solver(
    ds: &Dataset,
    block: &[usize],
    alpha_blk: &[f64],
    w: &[f64],
    model: LossModel,
    lambda: f64,
    tol: f64,
    max_epochs: usize,
) -> Result<LocalUpdate> {
    if !(tol > 0.0) {
        return Err(CoreError::InvalidConfig(format!("tol {tol} must be > 0")));
    }
    if block.is_empty() {
        return Ok(LocalUpdate::zero(0, ds.dim()));
    }
    let n = ds.n() as f64;
    let inv = 1.0 / (lambda * n);

    // Frozen contribution of the other blocks: w_bar = w - A_[k] alpha_[k].
    let mut w_bar = w.to_vec();
    for (j, &i) in block.iter().enumerate() {
        if alpha_blk[j] != 0.0 {
            ds.point(i).add_scaled_into(-alpha_blk[j] * inv, &mut w_bar);
        }
    }

    let mut alpha = alpha_blk.to_vec();
    let mut w_loc = w.to_vec();
    let mut steps = 0u64;
    let mut order: Vec<usize> = (0..block.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_b10c);
    let mut gap = f64::INFINITY;

    for _ in 0..max_epochs {
        rand::seq::SliceRandom::shuffle(&mut order[..], &mut rng);
        for &j in &order {
            let i = block[j];
            let delta = coordinate_update(
                model,
                lambda,
                ds.n(),
                ds.point(i),
                ds.label(i),
                alpha[j],
                &w_loc,
            );
            if delta != 0.0 {
                alpha[j] += delta;
                ds.point(i).add_scaled_into(delta * inv, &mut w_loc);
            }
        }
        steps += block.len() as u64;

        // Rebuild the block image exactly to keep drift out of the gap check.
        let mut w_k = vec![0.0; ds.dim()];
        for (j, &i) in block.iter().enumerate() {
            if alpha[j] != 0.0 {
                ds.point(i).add_scaled_into(alpha[j] * inv, &mut w_k);
            }
        }
        for ((loc, bar), blk) in w_loc.iter_mut().zip(&w_bar).zip(&w_k) {
            *loc = bar + blk;
        }
        gap = local_primal_value(&w_k, &w_bar, block, ds, lambda, model)
            - local_dual_value(&alpha, &w_bar, block, ds, lambda, model);
        if gap <= tol {
            let mut update = LocalUpdate::zero(block.len(), ds.dim());
            for (j, (&a_new, &a_old)) in alpha.iter().zip(alpha_blk).enumerate() {
                let delta = a_new - a_old;
                update.delta_alpha[j] = delta;
                if delta != 0.0 {
                    ds.point(block[j])
                        .add_scaled_into(delta * inv, &mut update.delta_w);
                }
            }
            update.steps = steps;
            return Ok(update);
        }
    }
    Err(CoreError::NoConvergence {
        gap,
        epochs: max_epochs,
        tol,
    })
}

/// High-accuracy solution of the full problem (single block covering all
/// coordinates, solved from zero to global duality gap at most `tol`).
#[derive(Debug, Clone)]
pub struct RefSolution {
    pub alpha: Vec<f64>,
    pub w: Vec<f64>,
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
}

pub fn reference_solve(
    ds: &Dataset,
    model: LossModel,
    lambda: f64,
    tol: f64,
    max_epochs: usize,
) -> Result<RefSolution> {
    if ds.is_empty() {
        return Err(CoreError::InvalidData("empty dataset".into()));
    }
    let block: Vec<usize> = (0..ds.n()).collect();
    let zero_alpha = vec![0.0; ds.n()];
    let zero_w = vec![0.0; ds.dim()];
    let update = exact_block_solver(
        ds,
        &block,
        &zero_alpha,
        &zero_w,
        model,
        lambda,
        tol,
        max_epochs,
    )?;
    let alpha = update.delta_alpha;
    let w = crate::objective::primal_from_dual(&alpha, ds, lambda);
    let primal = primal_value(&w, ds, lambda, model);
    let dual = dual_value(&alpha, ds, lambda, model);
    Ok(RefSolution {
        alpha,
        w,
        gap: primal - dual,
        primal,
        dual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_synthetic, Dataset, Partition, SparseVector};
    use crate::objective::primal_from_dual;

    const LOSSES: [LossModel; 3] = [
        LossModel::Hinge,
        LossModel::SmoothedHinge { gamma: 1.0 },
        LossModel::Logistic,
    ];

    // Golden-section maximization of the displayed single-coordinate
    // objective, used as the independent oracle for the closed forms. The
    // objective is taken relative to delta = 0 so the search is not starved
    // of precision by the constant -lambda n |w|^2 / 2 term.
    fn oracle_update(
        model: LossModel,
        lambda: f64,
        n: usize,
        x: &SparseVector,
        y: f64,
        alpha_i: f64,
        w: &[f64],
    ) -> f64 {
        let ln = lambda * n as f64;
        let q = x.norm_sq();
        let m = x.dot_dense(w);
        let conj_at_start = model.conj(alpha_i, y);
        let objective = |delta: f64| {
            let c = delta / ln;
            -0.5 * ln * (2.0 * c * m + c * c * q) - model.conj(alpha_i + delta, y) + conj_at_start
        };
        // The feasible range in u = (alpha_i + delta) y is [0, 1].
        let u0 = alpha_i * y;
        let (mut lo, mut hi) = (-y * u0, y * (1.0 - u0)); // delta at u = 0 and u = 1
        if lo > hi {
            std::mem::swap(&mut lo, &mut hi);
        }
        let phi = (5.0_f64.sqrt() - 1.0) / 2.0;
        let mut x1 = hi - phi * (hi - lo);
        let mut x2 = lo + phi * (hi - lo);
        let (mut f1, mut f2) = (objective(x1), objective(x2));
        for _ in 0..120 {
            if f1 < f2 {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + phi * (hi - lo);
                f2 = objective(x2);
            } else {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - phi * (hi - lo);
                f1 = objective(x1);
            }
        }
        0.5 * (lo + hi)
    }

    fn random_unit_vector(rng: &mut ChaCha8Rng, d: usize) -> SparseVector {
        use rand_distr::StandardNormal;
        let coords: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let norm: f64 = coords.iter().map(|v| v * v).sum::<f64>().sqrt();
        let scale = rng.random_range(0.5..1.0) / norm;
        SparseVector::from_dense(&coords.iter().map(|v| v * scale).collect::<Vec<_>>())
    }

    #[test]
    fn hinge_clips_at_upper_bound() {
        // alpha = 0, w = 0, y = 1, ||x|| = 1, lambda n = 10: the unclipped
        // step is 10, so the update clips to the box edge.
        let x = SparseVector::new(vec![0], vec![1.0], 1).unwrap();
        let delta = coordinate_update(LossModel::Hinge, 1.0, 10, &x, 1.0, 0.0, &[0.0]);
        assert_eq!(delta, 1.0);
    }

    #[test]
    fn closed_forms_match_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for model in LOSSES {
            for trial in 0..100 {
                let d = 4;
                let x = random_unit_vector(&mut rng, d);
                let y = if rng.random::<bool>() { 1.0 } else { -1.0 };
                let u0: f64 = rng.random_range(0.0..1.0);
                let alpha_i = u0 * y;
                let w: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
                let lambda = rng.random_range(0.01..1.0);
                let n = rng.random_range(10..100);
                let fast = coordinate_update(model, lambda, n, &x, y, alpha_i, &w);
                let slow = oracle_update(model, lambda, n, &x, y, alpha_i, &w);
                assert!(
                    (fast - slow).abs() < 1e-6,
                    "{model:?} trial {trial}: {fast} vs {slow}"
                );
            }
        }
    }

    #[test]
    fn update_is_idempotent_at_maximizer() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for model in LOSSES {
            for _ in 0..50 {
                let x = random_unit_vector(&mut rng, 3);
                let y = if rng.random::<bool>() { 1.0 } else { -1.0 };
                let alpha_i = rng.random_range(0.0..1.0) * y;
                let mut w: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
                let lambda = 0.1;
                let n = 20;
                let delta = coordinate_update(model, lambda, n, &x, y, alpha_i, &w);
                x.add_scaled_into(delta / (lambda * n as f64), &mut w);
                let again = coordinate_update(model, lambda, n, &x, y, alpha_i + delta, &w);
                assert!(again.abs() <= 1e-8, "{model:?}: re-update {again}");
            }
        }
    }

    #[test]
    fn zero_norm_point_maximizes_conjugate_alone() {
        let x = SparseVector::new(vec![], vec![], 2).unwrap();
        let w = vec![0.7, -0.3];
        let d_hinge = coordinate_update(LossModel::Hinge, 0.5, 10, &x, -1.0, 0.0, &w);
        assert_eq!(d_hinge, -1.0); // pushes alpha * y to 1
        let d_smooth = coordinate_update(
            LossModel::SmoothedHinge { gamma: 2.0 },
            0.5,
            10,
            &x,
            1.0,
            0.0,
            &w,
        );
        assert!((d_smooth - 0.5).abs() < 1e-12); // argmax of u - gamma u^2 / 2
        let d_log = coordinate_update(LossModel::Logistic, 0.5, 10, &x, 1.0, 0.25, &w);
        assert!((0.25 + d_log - 0.5).abs() < 1e-9); // u* = 1/2
    }

    fn sdca_setup() -> (Dataset, Partition) {
        let ds = gen_synthetic(40, 8, 0.8, 0.1, 13).unwrap();
        let part = Partition::uniform(40, 4, 5).unwrap();
        (ds, part)
    }

    #[test]
    fn sdca_single_step_matches_coordinate_update() {
        let (ds, part) = sdca_setup();
        let block = part.block(0);
        let alpha_blk = vec![0.0; block.len()];
        let w = vec![0.0; ds.dim()];
        let lambda = 0.1;
        let seed = 99;
        let update = local_sdca(
            &ds,
            block,
            &alpha_blk,
            &w,
            LossModel::Hinge,
            lambda,
            1,
            seed,
        );
        // Replicate the single draw.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let j = rng.random_range(0..block.len());
        let i = block[j];
        let delta = coordinate_update(
            LossModel::Hinge,
            lambda,
            ds.n(),
            ds.point(i),
            ds.label(i),
            0.0,
            &w,
        );
        assert_eq!(update.delta_alpha[j], delta);
        assert_eq!(update.steps, 1);
        let nonzero = update.delta_alpha.iter().filter(|v| **v != 0.0).count();
        assert!(nonzero <= 1);
    }

    #[test]
    fn sdca_never_decreases_local_dual() {
        let (ds, part) = sdca_setup();
        let lambda = 0.1;
        let model = LossModel::SmoothedHinge { gamma: 1.0 };
        let block = part.block(1);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let alpha: Vec<f64> = (0..ds.n())
            .map(|i| ds.label(i) * rng.random::<f64>())
            .collect();
        let w = primal_from_dual(&alpha, &ds, lambda);
        let alpha_blk: Vec<f64> = block.iter().map(|&i| alpha[i]).collect();
        let mut w_bar = w.clone();
        let inv = 1.0 / (lambda * ds.n() as f64);
        for (j, &i) in block.iter().enumerate() {
            ds.point(i).add_scaled_into(-alpha_blk[j] * inv, &mut w_bar);
        }
        let mut prev = local_dual_value(&alpha_blk, &w_bar, block, &ds, lambda, model);
        let mut current = alpha_blk.clone();
        let mut w_now = w.clone();
        for step in 0..30 {
            let update = local_sdca(&ds, block, &current, &w_now, model, lambda, 1, 1000 + step);
            for (c, d) in current.iter_mut().zip(&update.delta_alpha) {
                *c += d;
            }
            for (wi, dw) in w_now.iter_mut().zip(&update.delta_w) {
                *wi += dw;
            }
            let now = local_dual_value(&current, &w_bar, block, &ds, lambda, model);
            assert!(now >= prev - 1e-12, "step {step}: {now} < {prev}");
            prev = now;
        }
    }

    #[test]
    fn sdca_deterministic_and_contract_holds() {
        let (ds, part) = sdca_setup();
        let lambda = 0.2;
        let block = part.block(2);
        let alpha_blk = vec![0.0; block.len()];
        let w = vec![0.0; ds.dim()];
        for model in LOSSES {
            let a = local_sdca(&ds, block, &alpha_blk, &w, model, lambda, 50, 7);
            let b = local_sdca(&ds, block, &alpha_blk, &w, model, lambda, 50, 7);
            assert_eq!(a, b);
            // delta_w == A_[k] delta_alpha up to accumulation round-off
            let mut exact = vec![0.0; ds.dim()];
            let inv = 1.0 / (lambda * ds.n() as f64);
            for (j, &i) in block.iter().enumerate() {
                ds.point(i)
                    .add_scaled_into(a.delta_alpha[j] * inv, &mut exact);
            }
            let norm: f64 = a.delta_w.iter().map(|v| v * v).sum::<f64>().sqrt();
            let err: f64 = a
                .delta_w
                .iter()
                .zip(&exact)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt();
            assert!(
                err <= 1e-10 * (1.0 + norm),
                "{model:?}: contract error {err}"
            );
        }
    }

    #[test]
    fn sdca_empty_block_returns_zero() {
        let (ds, _) = sdca_setup();
        let w0 = vec![0.0; ds.dim()];
        let update = local_sdca(&ds, &[], &[], &w0, LossModel::Hinge, 0.1, 10, 1);
        assert_eq!(update.steps, 0);
        assert!(update.delta_w.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn exact_solver_single_point_block() {
        let x = SparseVector::new(vec![0], vec![1.0], 1).unwrap();
        let ds = Dataset::new(vec![x], vec![1.0]).unwrap();
        let update = exact_block_solver(
            &ds,
            &[0],
            &[0.0],
            &[0.0],
            LossModel::SmoothedHinge { gamma: 1.0 },
            0.5,
            1e-10,
            DEFAULT_MAX_EPOCHS,
        )
        .unwrap();
        assert_eq!(update.steps, 1); // one closed-form update reaches tol
    }

    #[test]
    fn exact_solver_whole_problem_closes_global_gap() {
        let ds = gen_synthetic(30, 6, 1.0, 0.1, 4).unwrap();
        for model in LOSSES {
            let sol = reference_solve(&ds, model, 0.1, 1e-8, DEFAULT_MAX_EPOCHS).unwrap();
            assert!(sol.gap <= 1e-8, "{model:?}: gap {}", sol.gap);
            assert!(sol.gap >= -1e-12);
        }
    }

    #[test]
    fn exact_solver_reports_cap_exhaustion() {
        let ds = gen_synthetic(30, 6, 1.0, 0.1, 4).unwrap();
        let block: Vec<usize> = (0..30).collect();
        let alpha0 = vec![0.0; 30];
        let w0 = vec![0.0; 6];
        let err = exact_block_solver(
            &ds,
            &block,
            &alpha0,
            &w0,
            LossModel::Logistic,
            0.1,
            1e-14,
            1,
        )
        .unwrap_err();
        match err {
            CoreError::NoConvergence { gap, epochs, .. } => {
                assert_eq!(epochs, 1);
                assert!(gap > 0.0);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn reference_primal_lower_bounds_random_points() {
        let ds = gen_synthetic(25, 5, 1.0, 0.1, 10).unwrap();
        let lambda = 0.2;
        let model = LossModel::Logistic;
        let tol = 1e-9;
        let sol = reference_solve(&ds, model, lambda, tol, DEFAULT_MAX_EPOCHS).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..100 {
            let w: Vec<f64> = (0..ds.dim()).map(|_| rng.random_range(-2.0..2.0)).collect();
            assert!(primal_value(&w, &ds, lambda, model) >= sol.primal - tol);
        }
    }
}
