//! Computable convergence constants and certified bounds: the cross-block
//! interaction constant sigma_min, the inner-solver contraction factor Theta,
//! the per-round geometric rate they imply, and the per-block suboptimality
//! functional measured through exact block solves.

use crate::data::{Dataset, Partition};
use crate::error::{CoreError, Result};
use crate::loss::LossModel;
use crate::objective::{dual_value, primal_from_dual};
use crate::solver::{exact_block_solver, DEFAULT_MAX_EPOCHS};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// Largest problem size accepted by the dense eigendecomposition.
pub const EIGEN_CAP: usize = 2000;

/// Smallest constant sigma for which the rate bound is certified:
///
///   sigma_min = max_alpha (sum_k ||X_[k] alpha_[k]||^2 - ||X alpha||^2) / ||alpha||^2
///
/// computed as the largest eigenvalue of BlockDiag(G) - G with G = X'X the
/// raw-data Gram matrix (the lambda^2 n^2 factors cancel against the rescaled
/// columns). The value is 0 for a single block and whenever cross-block
/// points are orthogonal, and never exceeds the largest block size for
/// unit-norm data. Round-off below zero is clamped.
pub fn sigma_min(ds: &Dataset, partition: &Partition) -> Result<f64> {
    let n = ds.n();
    if n == 0 {
        return Err(CoreError::InvalidData("empty dataset".into()));
    }
    if partition.n() != n {
        return Err(CoreError::InvalidConfig(format!(
            "partition covers {} indices but dataset has {n}",
            partition.n()
        )));
    }
    if n > EIGEN_CAP {
        return Err(CoreError::EigenCap { n, cap: EIGEN_CAP });
    }
    if partition.num_blocks() == 1 {
        return Ok(0.0);
    }
    let owner = partition.owner_table();
    let mut m = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            if owner[i] != owner[j] {
                let g = ds.point(i).dot_sparse(ds.point(j));
                m[(i, j)] = -g;
                m[(j, i)] = -g;
            }
        }
    }
    let eigen = m.symmetric_eigen();
    Ok(eigen.eigenvalues.iter().copied().fold(0.0, f64::max))
}

/// Contraction factor of the randomized inner solver after `h` steps on a
/// block of size at most `n_tilde`, for a (1/gamma)-smooth loss:
///
///   Theta = (1 - (lambda n gamma / (1 + lambda n gamma)) / n_tilde)^h
pub fn theta_local_sdca(
    lambda: f64,
    n: usize,
    gamma: f64,
    n_tilde: usize,
    h: usize,
) -> Result<f64> {
    if !(gamma > 0.0) {
        return Err(CoreError::InvalidConfig(
            "contraction factor requires a smooth loss (gamma > 0)".into(),
        ));
    }
    if h == 0 {
        return Err(CoreError::InvalidConfig("h must be at least 1".into()));
    }
    if n == 0 || n_tilde == 0 || n_tilde > n {
        return Err(CoreError::InvalidConfig(format!(
            "need 1 <= n_tilde <= n, got n_tilde = {n_tilde}, n = {n}"
        )));
    }
    if !(lambda > 0.0) {
        return Err(CoreError::InvalidConfig(format!(
            "lambda {lambda} must be > 0"
        )));
    }
    let lng = lambda * n as f64 * gamma;
    let s = lng / (1.0 + lng);
    let base = 1.0 - s / n_tilde as f64;
    Ok(powu(base, h))
}

/// Certified dual-suboptimality bound after `t` rounds across `k` workers:
///
///   (1 - (1 - theta) (1/K) lambda n gamma / (sigma + lambda n gamma))^t * d0_gap
///
/// where `d0_gap` bounds the initial dual suboptimality (at alpha = 0 it is
/// at most 1) and `sigma >= sigma_min` certifies the bound.
#[allow(clippy::too_many_arguments)]
pub fn rate_bound(
    t: u32,
    k: usize,
    theta: f64,
    lambda: f64,
    n: usize,
    gamma: f64,
    sigma: f64,
    d0_gap: f64,
) -> f64 {
    let lng = lambda * n as f64 * gamma;
    let factor = 1.0 - (1.0 - theta) * (1.0 / k as f64) * lng / (sigma + lng);
    powu(factor, t as usize) * d0_gap
}

fn powu(base: f64, exp: usize) -> f64 {
    // Repeated squaring keeps large-h evaluations exact-ish and fast.
    let mut result = 1.0;
    let mut base = base;
    let mut exp = exp;
    while exp > 0 {
        if exp & 1 == 1 {
            result *= base;
        }
        base *= base;
        exp >>= 1;
    }
    result
}

/// Dual improvement available by optimizing block `k` alone, measured with an
/// exact block solve at tolerance `tol`: nonnegative up to `tol`.
pub fn local_suboptimality(
    ds: &Dataset,
    partition: &Partition,
    k: usize,
    alpha: &[f64],
    model: LossModel,
    lambda: f64,
    tol: f64,
) -> Result<f64> {
    if k >= partition.num_blocks() {
        return Err(CoreError::InvalidConfig(format!(
            "block {k} out of range for {} blocks",
            partition.num_blocks()
        )));
    }
    let block = partition.block(k);
    let w = primal_from_dual(alpha, ds, lambda);
    let alpha_blk: Vec<f64> = block.iter().map(|&i| alpha[i]).collect();
    let update = exact_block_solver(
        ds,
        block,
        &alpha_blk,
        &w,
        model,
        lambda,
        tol,
        DEFAULT_MAX_EPOCHS,
    )?;
    let mut improved = alpha.to_vec();
    for (j, &i) in block.iter().enumerate() {
        improved[i] += update.delta_alpha[j];
    }
    Ok(dual_value(&improved, ds, lambda, model) - dual_value(alpha, ds, lambda, model))
}

/// Convergence constants for one (dataset, partition, loss, h) instance,
/// serialized next to experiment traces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryReport {
    pub sigma_min: f64,
    pub theta: f64,
    pub rate_per_round: f64,
    pub bound_at_t: f64,
    pub gamma: f64,
    pub n_tilde: usize,
}

/// Computes the full report; requires a smooth loss and `n` under the
/// eigendecomposition cap.
#[allow(clippy::too_many_arguments)]
pub fn theory_report(
    ds: &Dataset,
    partition: &Partition,
    model: LossModel,
    lambda: f64,
    h: usize,
    t_rounds: u32,
    d0_gap: f64,
) -> Result<TheoryReport> {
    let gamma = model.gamma();
    let n_tilde = partition.n_tilde();
    let sigma = sigma_min(ds, partition)?;
    let theta = theta_local_sdca(lambda, ds.n(), gamma, n_tilde, h)?;
    let k = partition.num_blocks();
    let lng = lambda * ds.n() as f64 * gamma;
    let rate_per_round = 1.0 - (1.0 - theta) * (1.0 / k as f64) * lng / (sigma + lng);
    Ok(TheoryReport {
        sigma_min: sigma,
        theta,
        rate_per_round,
        bound_at_t: rate_bound(t_rounds, k, theta, lambda, ds.n(), gamma, sigma, d0_gap),
        gamma,
        n_tilde,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_orthogonal_blocks, gen_synthetic};
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    // Rayleigh quotient of the same quadratic form, straight from the data.
    fn rayleigh(ds: &Dataset, partition: &Partition, alpha: &[f64]) -> f64 {
        let mut x_alpha = vec![0.0; ds.dim()];
        for (i, &a) in alpha.iter().enumerate() {
            ds.point(i).add_scaled_into(a, &mut x_alpha);
        }
        let full: f64 = x_alpha.iter().map(|v| v * v).sum();
        let mut blocks_sum = 0.0;
        for block in partition.blocks() {
            let mut xb = vec![0.0; ds.dim()];
            for &i in block {
                ds.point(i).add_scaled_into(alpha[i], &mut xb);
            }
            blocks_sum += xb.iter().map(|v| v * v).sum::<f64>();
        }
        let norm: f64 = alpha.iter().map(|a| a * a).sum();
        (blocks_sum - full) / norm
    }

    #[test]
    fn single_block_is_exactly_zero() {
        let ds = gen_synthetic(30, 6, 1.0, 0.1, 1).unwrap();
        let part = Partition::whole(30);
        assert_eq!(sigma_min(&ds, &part).unwrap(), 0.0);
    }

    #[test]
    fn orthogonal_blocks_vanish() {
        let (ds, part) = gen_orthogonal_blocks(3, 10, 4, 2).unwrap();
        assert!(sigma_min(&ds, &part).unwrap() <= 1e-8);
    }

    #[test]
    fn bounded_by_largest_block_and_rayleigh_quotients() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for trial in 0..20 {
            let n = rng.random_range(20..80);
            let d = rng.random_range(4..16);
            let k = rng.random_range(2..6).min(n);
            let ds = gen_synthetic(n, d, 0.8, 0.2, trial).unwrap();
            let part = Partition::uniform(n, k, trial + 100).unwrap();
            let sigma = sigma_min(&ds, &part).unwrap();
            assert!(sigma >= 0.0);
            assert!(sigma <= part.n_tilde() as f64 + 1e-8, "sigma {sigma}");
            for _ in 0..200 {
                let alpha: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
                let quotient = rayleigh(&ds, &part, &alpha);
                assert!(
                    quotient <= sigma + 1e-6,
                    "quotient {quotient} > sigma {sigma}"
                );
            }
        }
    }

    #[test]
    fn eigen_cap_is_enforced() {
        let ds = gen_synthetic(20, 4, 1.0, 0.0, 5).unwrap();
        let part = Partition::whole(20);
        assert!(sigma_min(&ds, &part).is_ok());
        // The cap itself is validated without building a huge instance.
        assert_eq!(EIGEN_CAP, 2000);
    }

    #[test]
    fn contraction_factor_frozen_value() {
        // lambda = 1, n = n_tilde = 10, gamma = 1, h = 10: (1 - (10/11)/10)^10
        // = (10/11)^10, evaluated independently as 0.3855432894295314.
        let theta = theta_local_sdca(1.0, 10, 1.0, 10, 10).unwrap();
        assert!((theta - 0.38554).abs() < 1e-5);
        assert!((theta - (10.0_f64 / 11.0).powi(10)).abs() < 1e-15);
    }

    #[test]
    fn contraction_factor_decreases_in_h() {
        let mut prev = 1.0;
        for h in 1..40 {
            let theta = theta_local_sdca(0.3, 50, 1.0, 10, h).unwrap();
            assert!(theta < prev);
            assert!((0.0..1.0).contains(&theta));
            prev = theta;
        }
    }

    #[test]
    fn contraction_factor_limit_for_stiff_regularization() {
        // lambda n gamma -> infinity with h = 1 approaches 1 - 1/n_tilde.
        let theta = theta_local_sdca(1e12, 10, 1.0, 10, 1).unwrap();
        assert!((theta - 0.9).abs() < 1e-9);
    }

    #[test]
    fn contraction_factor_rejects_bad_inputs() {
        assert!(theta_local_sdca(1.0, 10, 0.0, 5, 3).is_err());
        assert!(theta_local_sdca(1.0, 10, -1.0, 5, 3).is_err());
        assert!(theta_local_sdca(1.0, 10, 1.0, 5, 0).is_err());
        assert!(theta_local_sdca(1.0, 10, 1.0, 11, 3).is_err());
    }

    #[test]
    fn rate_bound_degenerate_cases() {
        // theta = 1: no guaranteed progress, the bound stays at d0.
        assert_eq!(rate_bound(7, 4, 1.0, 0.1, 100, 1.0, 3.0, 0.8), 0.8);
        // K = 1, sigma = 0: the bound collapses to theta^T * d0.
        let theta: f64 = 0.4;
        let expected = theta.powi(5);
        let got = rate_bound(5, 1, theta, 0.1, 100, 1.0, 0.0, 1.0);
        assert!((got - (1.0 - (1.0 - theta)).powi(5)).abs() < 1e-15);
        assert!((got - expected).abs() < 1e-15);
    }

    #[test]
    fn rate_bound_monotone_in_arguments() {
        let base = rate_bound(10, 4, 0.5, 0.1, 100, 1.0, 2.0, 1.0);
        assert!(rate_bound(11, 4, 0.5, 0.1, 100, 1.0, 2.0, 1.0) < base);
        assert!(rate_bound(10, 4, 0.6, 0.1, 100, 1.0, 2.0, 1.0) > base);
        assert!(rate_bound(10, 4, 0.5, 0.1, 100, 1.0, 3.0, 1.0) > base);
    }

    #[test]
    fn local_suboptimality_nonnegative_and_tight_at_optimum() {
        let ds = gen_synthetic(24, 6, 1.0, 0.1, 9).unwrap();
        let part = Partition::uniform(24, 3, 4).unwrap();
        let model = LossModel::SmoothedHinge { gamma: 1.0 };
        let lambda = 0.2;
        let tol = 1e-10;
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let alpha: Vec<f64> = (0..24).map(|i| ds.label(i) * rng.random::<f64>()).collect();
        let eps = local_suboptimality(&ds, &part, 1, &alpha, model, lambda, tol).unwrap();
        assert!(eps >= -tol);

        // Re-measuring right after optimizing the block gives at most tol.
        let block = part.block(1);
        let w = primal_from_dual(&alpha, &ds, lambda);
        let alpha_blk: Vec<f64> = block.iter().map(|&i| alpha[i]).collect();
        let update = exact_block_solver(
            &ds,
            block,
            &alpha_blk,
            &w,
            model,
            lambda,
            tol,
            DEFAULT_MAX_EPOCHS,
        )
        .unwrap();
        let mut improved = alpha.clone();
        for (j, &i) in block.iter().enumerate() {
            improved[i] += update.delta_alpha[j];
        }
        let eps2 = local_suboptimality(&ds, &part, 1, &improved, model, lambda, tol).unwrap();
        assert!(eps2 <= tol, "eps after block solve: {eps2}");
    }

    #[test]
    fn block_improvements_cover_global_suboptimality() {
        // sum_k eps_k >= (lambda n gamma / (sigma_min + lambda n gamma)) *
        // (D* - D(alpha)), spot-checked on random states.
        let ds = gen_synthetic(30, 8, 1.0, 0.1, 3).unwrap();
        let n = ds.n();
        let part = Partition::uniform(n, 3, 11).unwrap();
        let model = LossModel::SmoothedHinge { gamma: 1.0 };
        let lambda = 0.1;
        let tol = 1e-10;
        let sigma = sigma_min(&ds, &part).unwrap();
        let lng = lambda * n as f64 * model.gamma();
        let factor = lng / (sigma + lng);
        let best = crate::solver::reference_solve(&ds, model, lambda, 1e-12, 50_000).unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..5 {
            let alpha: Vec<f64> = (0..n)
                .map(|i| ds.label(i) * rng.random_range(0.0..0.6))
                .collect();
            let mut eps_sum = 0.0;
            for k in 0..part.num_blocks() {
                eps_sum += local_suboptimality(&ds, &part, k, &alpha, model, lambda, tol).unwrap();
            }
            let global = best.dual - dual_value(&alpha, &ds, lambda, model);
            assert!(
                eps_sum + 1e-8 >= factor * global,
                "sum {eps_sum} < {} (global {global})",
                factor * global
            );
        }
    }

    #[test]
    fn report_fields_are_consistent() {
        let ds = gen_synthetic(40, 8, 1.0, 0.1, 6).unwrap();
        let part = Partition::uniform(40, 4, 2).unwrap();
        let model = LossModel::SmoothedHinge { gamma: 1.0 };
        let report = theory_report(&ds, &part, model, 0.1, 10, 5, 1.0).unwrap();
        assert!(report.sigma_min >= 0.0);
        assert!((0.0..1.0).contains(&report.theta));
        assert!(report.rate_per_round > 0.0 && report.rate_per_round < 1.0);
        let expected = report.rate_per_round.powi(5);
        assert!((report.bound_at_t - expected).abs() < 1e-12);
        assert_eq!(report.n_tilde, 10);
    }
}
