//! Primal and dual objectives, the dual-to-primal map w = A*alpha, the duality
//! gap certificate, and the per-block local primal/dual subproblems.
//!
//! Throughout, the rescaled data matrix A has columns `A_i = x_i / (lambda n)`:
//!
//!   P(w)     = (lambda/2) ||w||^2 + (1/n) sum_i l_i(w'x_i)
//!   D(alpha) = -(lambda/2) ||A alpha||^2 - (1/n) sum_i l_i*(-alpha_i)
//!
//! All evaluations are pure functions of immutable inputs; `DualState`
//! mutation is owned by exactly one caller at a time.

use crate::data::Dataset;
use crate::loss::LossModel;

/// Exact evaluation of the primal objective at `w`.
pub fn primal_value(w: &[f64], ds: &Dataset, lambda: f64, model: LossModel) -> f64 {
    debug_assert_eq!(w.len(), ds.dim());
    let n = ds.n() as f64;
    let reg = 0.5 * lambda * dot(w, w);
    let loss_sum: f64 = (0..ds.n())
        .map(|i| model.eval(ds.point(i).dot_dense(w), ds.label(i)))
        .sum();
    reg + loss_sum / n
}

/// Dual objective at `alpha`; `-inf` when any conjugate term is infeasible.
pub fn dual_value(alpha: &[f64], ds: &Dataset, lambda: f64, model: LossModel) -> f64 {
    debug_assert_eq!(alpha.len(), ds.n());
    let n = ds.n() as f64;
    let mut conj_sum = 0.0;
    for (i, &a) in alpha.iter().enumerate() {
        let c = model.conj(a, ds.label(i));
        if c == f64::INFINITY {
            return f64::NEG_INFINITY;
        }
        conj_sum += c;
    }
    let w = primal_from_dual(alpha, ds, lambda);
    -0.5 * lambda * dot(&w, &w) - conj_sum / n
}

/// Dual-to-primal map: w(alpha) = A alpha = (1/(lambda n)) sum_i alpha_i x_i.
pub fn primal_from_dual(alpha: &[f64], ds: &Dataset, lambda: f64) -> Vec<f64> {
    debug_assert_eq!(alpha.len(), ds.n());
    let inv = 1.0 / (lambda * ds.n() as f64);
    let mut w = vec![0.0; ds.dim()];
    for (i, &a) in alpha.iter().enumerate() {
        if a != 0.0 {
            ds.point(i).add_scaled_into(a * inv, &mut w);
        }
    }
    w
}

/// Local dual objective on block `k` given the frozen contribution `w_bar` of
/// the other blocks:
///
///   D_k(a; w_bar) = -(lambda/2) ||w_bar + A_[k] a||^2
///                   - (1/n) sum_{i in block} l_i*(-a_i)
///                   + (lambda/2) ||w_bar||^2
///
/// With `w_bar = sum_{k' != k} A_[k'] alpha_[k']` this equals the global dual
/// objective as a function of the block variables, up to a constant.
pub fn local_dual_value(
    alpha_blk: &[f64],
    w_bar: &[f64],
    block: &[usize],
    ds: &Dataset,
    lambda: f64,
    model: LossModel,
) -> f64 {
    debug_assert_eq!(alpha_blk.len(), block.len());
    let n = ds.n() as f64;
    let inv = 1.0 / (lambda * n);
    let mut v = w_bar.to_vec();
    let mut conj_sum = 0.0;
    for (j, &i) in block.iter().enumerate() {
        let c = model.conj(alpha_blk[j], ds.label(i));
        if c == f64::INFINITY {
            return f64::NEG_INFINITY;
        }
        conj_sum += c;
        if alpha_blk[j] != 0.0 {
            ds.point(i).add_scaled_into(alpha_blk[j] * inv, &mut v);
        }
    }
    -0.5 * lambda * dot(&v, &v) - conj_sum / n + 0.5 * lambda * dot(w_bar, w_bar)
}

/// Local primal objective on block `k`:
///
///   P_k(w_k; w_bar) = (1/n) sum_{i in block} l_i((w_bar + w_k)'x_i)
///                     + (lambda/2) ||w_k||^2
pub fn local_primal_value(
    w_k: &[f64],
    w_bar: &[f64],
    block: &[usize],
    ds: &Dataset,
    lambda: f64,
    model: LossModel,
) -> f64 {
    let n = ds.n() as f64;
    let total: Vec<f64> = w_bar.iter().zip(w_k).map(|(a, b)| a + b).collect();
    let loss_sum: f64 = block
        .iter()
        .map(|&i| model.eval(ds.point(i).dot_dense(&total), ds.label(i)))
        .sum();
    loss_sum / n + 0.5 * lambda * dot(w_k, w_k)
}

/// Dual vector together with its maintained primal image `w ~= A alpha`.
///
/// `w` is updated incrementally by block updates and recomputed from `alpha`
/// once enough coordinate steps have accumulated, bounding the drift to keep
/// `||w - A alpha||_inf <= 1e-8 (1 + ||w||_inf)`.
#[derive(Debug, Clone)]
pub struct DualState {
    pub alpha: Vec<f64>,
    pub w: Vec<f64>,
    pub lambda: f64,
    updates_since_recompute: u64,
}

impl DualState {
    pub fn zero(n: usize, d: usize, lambda: f64) -> Self {
        Self {
            alpha: vec![0.0; n],
            w: vec![0.0; d],
            lambda,
            updates_since_recompute: 0,
        }
    }

    /// Applies `alpha[block[j]] += scale * delta_alpha[j]` and
    /// `w += scale * delta_w`.
    pub fn apply_block_update(
        &mut self,
        block: &[usize],
        delta_alpha: &[f64],
        delta_w: &[f64],
        scale: f64,
    ) {
        for (j, &i) in block.iter().enumerate() {
            self.alpha[i] += scale * delta_alpha[j];
        }
        for (wi, dw) in self.w.iter_mut().zip(delta_w) {
            *wi += scale * dw;
        }
    }

    /// Recomputes `w = A alpha` from scratch when at least `threshold`
    /// coordinate steps accumulated since the last recomputation.
    pub fn refresh_w(&mut self, ds: &Dataset, steps: u64, threshold: u64) {
        self.updates_since_recompute += steps;
        if self.updates_since_recompute >= threshold {
            self.w = primal_from_dual(&self.alpha, ds, self.lambda);
            self.updates_since_recompute = 0;
        }
    }

    /// `||w - A alpha||_inf`, the consistency residual of the maintained image.
    pub fn consistency_residual(&self, ds: &Dataset) -> f64 {
        let exact = primal_from_dual(&self.alpha, ds, self.lambda);
        self.w
            .iter()
            .zip(&exact)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Duality gap certificate `P(w) - D(alpha)`; nonnegative up to round-off for
/// any state whose `w` satisfies the consistency invariant.
pub fn duality_gap(state: &DualState, ds: &Dataset, model: LossModel) -> f64 {
    primal_value(&state.w, ds, state.lambda, model)
        - dual_value(&state.alpha, ds, state.lambda, model)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
