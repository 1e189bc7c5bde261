//! Statistical checks of the inner solver's expected progress, with the exact
//! block solver as the suboptimality oracle. Bounds on expectations are
//! tested as means over seeded runs with three standard errors of slack, so
//! individual-run violations are expected and not failures.

use cocoa_core::{
    exact_block_solver, local_dual_value, local_primal_value, local_sdca, primal_from_dual,
    Dataset, LossModel, Partition, DEFAULT_MAX_EPOCHS,
};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct BlockInstance {
    ds: Dataset,
    block: Vec<usize>,
    alpha_blk: Vec<f64>,
    w: Vec<f64>,
    w_bar: Vec<f64>,
    lambda: f64,
    model: LossModel,
}

/// A fixed feasible state on one block of a partitioned instance, with the
/// frozen remainder w_bar of the other blocks.
fn fixed_state(state_seed: u64) -> BlockInstance {
    let ds = cocoa_core::gen_synthetic(60, 10, 1.0, 0.1, 23).unwrap();
    let part = Partition::uniform(60, 3, 6).unwrap();
    let block = part.block(0).to_vec();
    let lambda = 0.1;
    let model = LossModel::SmoothedHinge { gamma: 1.0 };
    let mut rng = ChaCha8Rng::seed_from_u64(state_seed);
    let alpha: Vec<f64> = (0..ds.n())
        .map(|i| ds.label(i) * rng.random_range(0.0..0.8))
        .collect();
    let w = primal_from_dual(&alpha, &ds, lambda);
    let alpha_blk: Vec<f64> = block.iter().map(|&i| alpha[i]).collect();
    let mut w_bar = w.clone();
    let inv = 1.0 / (lambda * ds.n() as f64);
    for (j, &i) in block.iter().enumerate() {
        ds.point(i).add_scaled_into(-alpha_blk[j] * inv, &mut w_bar);
    }
    BlockInstance {
        ds,
        block,
        alpha_blk,
        w,
        w_bar,
        lambda,
        model,
    }
}

fn mean_and_stderr(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[test]
fn expected_single_step_improvement_covers_gap_fraction() {
    // For a gamma-strongly-convex conjugate, one random coordinate step
    // improves the block dual in expectation by at least (s/n_k) times the
    // local gap, with s = lambda n gamma / (1 + lambda n gamma).
    let inst = fixed_state(81);
    let n = inst.ds.n() as f64;
    let gamma = inst.model.gamma();
    let s = inst.lambda * n * gamma / (1.0 + inst.lambda * n * gamma);
    let n_k = inst.block.len() as f64;

    let d_before = local_dual_value(
        &inst.alpha_blk,
        &inst.w_bar,
        &inst.block,
        &inst.ds,
        inst.lambda,
        inst.model,
    );
    let inv = 1.0 / (inst.lambda * n);
    let mut w_k = vec![0.0; inst.ds.dim()];
    for (j, &i) in inst.block.iter().enumerate() {
        inst.ds
            .point(i)
            .add_scaled_into(inst.alpha_blk[j] * inv, &mut w_k);
    }
    let gap = local_primal_value(
        &w_k,
        &inst.w_bar,
        &inst.block,
        &inst.ds,
        inst.lambda,
        inst.model,
    ) - d_before;
    assert!(gap > 0.0);

    let improvements: Vec<f64> = (0..600)
        .map(|seed| {
            let update = local_sdca(
                &inst.ds,
                &inst.block,
                &inst.alpha_blk,
                &inst.w,
                inst.model,
                inst.lambda,
                1,
                seed,
            );
            let mut alpha_after = inst.alpha_blk.clone();
            for (a, d) in alpha_after.iter_mut().zip(&update.delta_alpha) {
                *a += d;
            }
            local_dual_value(
                &alpha_after,
                &inst.w_bar,
                &inst.block,
                &inst.ds,
                inst.lambda,
                inst.model,
            ) - d_before
        })
        .collect();

    let (mean, stderr) = mean_and_stderr(&improvements);
    let required = s / n_k * gap;
    assert!(
        mean >= required - 3.0 * stderr,
        "mean improvement {mean} +- {stderr} below {required}"
    );
}

#[test]
fn multi_step_suboptimality_contracts_at_expected_rate() {
    // After h steps the expected remaining block suboptimality is at most
    // (1 - s/n_k)^h times the initial one; the exact block solve defines the
    // suboptimality on both sides.
    let h = 25;
    let mut ratios = Vec::new();
    for state_seed in [3, 17, 29] {
        let inst = fixed_state(state_seed);
        let n = inst.ds.n() as f64;

        let optimum = exact_block_solver(
            &inst.ds,
            &inst.block,
            &inst.alpha_blk,
            &inst.w,
            inst.model,
            inst.lambda,
            1e-12,
            DEFAULT_MAX_EPOCHS,
        )
        .unwrap();
        let mut alpha_best = inst.alpha_blk.clone();
        for (a, d) in alpha_best.iter_mut().zip(&optimum.delta_alpha) {
            *a += d;
        }
        let d_best = local_dual_value(
            &alpha_best,
            &inst.w_bar,
            &inst.block,
            &inst.ds,
            inst.lambda,
            inst.model,
        );
        let d_start = local_dual_value(
            &inst.alpha_blk,
            &inst.w_bar,
            &inst.block,
            &inst.ds,
            inst.lambda,
            inst.model,
        );
        let eps_before = d_best - d_start;
        assert!(eps_before > 1e-10);

        for seed in 0..100 {
            let update = local_sdca(
                &inst.ds,
                &inst.block,
                &inst.alpha_blk,
                &inst.w,
                inst.model,
                inst.lambda,
                h,
                9000 + seed,
            );
            let mut alpha_after = inst.alpha_blk.clone();
            for (a, d) in alpha_after.iter_mut().zip(&update.delta_alpha) {
                *a += d;
            }
            let d_after = local_dual_value(
                &alpha_after,
                &inst.w_bar,
                &inst.block,
                &inst.ds,
                inst.lambda,
                inst.model,
            );
            ratios.push((d_best - d_after) / eps_before);
        }

        let gamma = inst.model.gamma();
        let s = inst.lambda * n * gamma / (1.0 + inst.lambda * n * gamma);
        let bound = (1.0 - s / inst.block.len() as f64).powi(h as i32);
        let (mean, stderr) = mean_and_stderr(&ratios);
        assert!(
            mean <= bound + 3.0 * stderr,
            "state {state_seed}: mean ratio {mean} +- {stderr} above {bound}"
        );
        ratios.clear();
    }
}
