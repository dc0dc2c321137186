use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::auc::roc_auc;
use crate::error::{Result, TractError};

pub const DEFAULT_C: f64 = 1.0;
const GRAD_TOL: f64 = 1e-8;
const MAX_ITER: usize = 1000;

/// Fold index (0-based) of every example, stratified by label.
///
/// Examples are ordered by `ids` first, so the assignment does not depend on
/// input order. Each class is shuffled with the seeded RNG and dealt round
/// robin.
pub fn stratified_folds(ids: &[&str], labels: &[bool], folds: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.sort_by(|&a, &b| ids[a].cmp(ids[b]));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![0; ids.len()];
    for class in [true, false] {
        let mut members: Vec<usize> = order.iter().copied().filter(|&i| labels[i] == class).collect();
        members.shuffle(&mut rng);
        for (j, i) in members.into_iter().enumerate() {
            assignment[i] = j % folds;
        }
    }
    assignment
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// log(1 + e^z) without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Class-weighted, L2-regularized logistic regression on two standardized
/// features. The intercept is not penalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub mean: [f64; 2],
    pub std: [f64; 2],
    /// `[intercept, w1, w2]`
    pub coef: [f64; 3],
    pub iterations: usize,
    pub grad_norm: f64,
    /// A training feature had zero variance and was left unscaled.
    pub zero_variance: bool,
}

impl LogisticModel {
    /// Minimizes `Σ c_i · nll_i + ||w||² / (2C)` with damped Newton steps
    /// until the gradient norm drops to 1e-8 or 1000 iterations pass.
    pub fn fit(x: &[[f64; 2]], y: &[bool], c: f64) -> Result<Self> {
        let n = x.len();
        let n_pos = y.iter().filter(|&&l| l).count();
        if n_pos == 0 || n_pos == n {
            return Err(TractError::SingleClass);
        }
        if !(c > 0.0) {
            return Err(TractError::InvalidParameter(format!("C must be positive, got {c}")));
        }
        let mut mean = [0.0; 2];
        let mut std = [0.0; 2];
        let mut zero_variance = false;
        for j in 0..2 {
            mean[j] = x.iter().map(|r| r[j]).sum::<f64>() / n as f64;
            let var = x.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n as f64;
            std[j] = var.sqrt();
            if !(std[j] > 0.0) {
                std[j] = 1.0;
                zero_variance = true;
            }
        }
        let z: Vec<[f64; 3]> = x
            .iter()
            .map(|r| [1.0, (r[0] - mean[0]) / std[0], (r[1] - mean[1]) / std[1]])
            .collect();
        let w_pos = n as f64 / (2.0 * n_pos as f64);
        let w_neg = n as f64 / (2.0 * (n - n_pos) as f64);
        let cw: Vec<f64> = y.iter().map(|&l| if l { w_pos } else { w_neg }).collect();
        let lambda = 1.0 / c;

        let objective = |beta: &[f64; 3]| -> f64 {
            let mut f = 0.5 * lambda * (beta[1] * beta[1] + beta[2] * beta[2]);
            for ((zi, &yi), &wi) in z.iter().zip(y).zip(&cw) {
                let m = dot(beta, zi);
                f += wi * (softplus(m) - if yi { m } else { 0.0 });
            }
            f
        };

        let mut beta = [0.0; 3];
        let mut f = objective(&beta);
        let mut iterations = 0;
        let mut grad_norm;
        loop {
            let mut g = [0.0, lambda * beta[1], lambda * beta[2]];
            let mut h = [[0.0; 3]; 3];
            h[1][1] = lambda;
            h[2][2] = lambda;
            for ((zi, &yi), &wi) in z.iter().zip(y).zip(&cw) {
                let p = sigmoid(dot(&beta, zi));
                let r = wi * (p - if yi { 1.0 } else { 0.0 });
                let s = wi * p * (1.0 - p);
                for a in 0..3 {
                    g[a] += r * zi[a];
                    for b in 0..3 {
                        h[a][b] += s * zi[a] * zi[b];
                    }
                }
            }
            grad_norm = dot(&g, &g).sqrt();
            if grad_norm <= GRAD_TOL || iterations >= MAX_ITER {
                break;
            }
            let mut dir = solve3(h, g).unwrap_or(g);
            // fall back to steepest descent if Newton does not descend
            if dot(&dir, &g) <= 0.0 {
                dir = g;
            }
            let slope = dot(&dir, &g);
            let mut step = 1.0;
            let mut accepted = false;
            while step > 1e-12 {
                let cand = [
                    beta[0] - step * dir[0],
                    beta[1] - step * dir[1],
                    beta[2] - step * dir[2],
                ];
                let fc = objective(&cand);
                if fc <= f - 1e-4 * step * slope {
                    beta = cand;
                    f = fc;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            iterations += 1;
            if !accepted {
                break;
            }
        }
        Ok(Self {
            mean,
            std,
            coef: beta,
            iterations,
            grad_norm,
            zero_variance,
        })
    }

    pub fn predict_proba(&self, x: &[f64; 2]) -> f64 {
        let z = [
            1.0,
            (x[0] - self.mean[0]) / self.std[0],
            (x[1] - self.mean[1]) / self.std[1],
        ];
        sigmoid(dot(&self.coef, &z))
    }
}

fn dot(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Solves `h · x = g` by Gaussian elimination with partial pivoting.
fn solve3(mut h: [[f64; 3]; 3], mut g: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let piv = (col..3).max_by(|&a, &b| h[a][col].abs().total_cmp(&h[b][col].abs()))?;
        if h[piv][col].abs() < 1e-300 {
            return None;
        }
        h.swap(col, piv);
        g.swap(col, piv);
        for row in col + 1..3 {
            let pivot = h[col];
            let f = h[row][col] / pivot[col];
            for (v, p) in h[row].iter_mut().zip(pivot).skip(col) {
                *v -= f * p;
            }
            g[row] -= f * g[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let mut s = g[row];
        for k in row + 1..3 {
            s -= h[row][k] * x[k];
        }
        x[row] = s / h[row][row];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionResult {
    pub folds: usize,
    pub seed: u64,
    /// AUC of the pooled out-of-fold probabilities.
    pub auc: f64,
    pub primary_auc: f64,
    pub partner_auc: f64,
    /// Folds whose training split had a zero-variance feature.
    pub zero_variance_folds: Vec<usize>,
}

/// Out-of-fold AUC of a logistic fusion of two scores.
pub fn fuse(
    primary: &[f64],
    partner: &[f64],
    labels: &[bool],
    ids: &[&str],
    folds: usize,
    seed: u64,
) -> Result<FusionResult> {
    let n = labels.len();
    for len in [primary.len(), partner.len(), ids.len()] {
        if len != n {
            return Err(TractError::LengthMismatch { left: len, right: n });
        }
    }
    if folds < 2 {
        return Err(TractError::InvalidParameter(format!("need at least 2 folds, got {folds}")));
    }
    if primary.iter().chain(partner).any(|v| !v.is_finite()) {
        return Err(TractError::InvalidParameter("non-finite score".into()));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    if n_pos == 0 || n_pos == n {
        return Err(TractError::SingleClass);
    }

    // Work in id order so summation order is independent of input order.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| ids[a].cmp(ids[b]));
    let x: Vec<[f64; 2]> = order.iter().map(|&i| [primary[i], partner[i]]).collect();
    let y: Vec<bool> = order.iter().map(|&i| labels[i]).collect();
    let sorted_ids: Vec<&str> = order.iter().map(|&i| ids[i]).collect();
    let fold_of = stratified_folds(&sorted_ids, &y, folds, seed);

    let mut oof = vec![0.0; n];
    let mut zero_variance_folds = Vec::new();
    for f in 0..folds {
        let (train, test): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| fold_of[i] != f);
        let tx: Vec<[f64; 2]> = train.iter().map(|&i| x[i]).collect();
        let ty: Vec<bool> = train.iter().map(|&i| y[i]).collect();
        let model = LogisticModel::fit(&tx, &ty, DEFAULT_C)?;
        if model.zero_variance {
            zero_variance_folds.push(f);
        }
        for i in test {
            oof[i] = model.predict_proba(&x[i]);
        }
    }
    let p: Vec<f64> = x.iter().map(|r| r[0]).collect();
    let q: Vec<f64> = x.iter().map(|r| r[1]).collect();
    Ok(FusionResult {
        folds,
        seed,
        auc: roc_auc(&oof, &y)?,
        primary_auc: roc_auc(&p, &y)?,
        partner_auc: roc_auc(&q, &y)?,
        zero_variance_folds,
    })
}
