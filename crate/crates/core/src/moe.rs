//! Mixture-of-experts routing math.
//!
//! Experts are affine maps `h -> W h + b`. They stand in for the feed-forward
//! blocks of a transformer: the gating, sparsification and load-balancing
//! arithmetic does not depend on what the experts compute, and affine experts
//! keep every oracle exact.

use serde::{Deserialize, Serialize};

use crate::error::{arg, Result};

/// `B x P x d` token features, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenBatch {
    pub batch: usize,
    pub tokens: usize,
    pub dim: usize,
    pub values: Vec<f64>,
}

impl TokenBatch {
    pub fn new(batch: usize, tokens: usize, dim: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != batch * tokens * dim {
            return arg("token batch length does not match B x P x d");
        }
        if values.iter().any(|v| !v.is_finite()) {
            return arg("token values must be finite");
        }
        Ok(Self {
            batch,
            tokens,
            dim,
            values,
        })
    }

    pub fn num_tokens(&self) -> usize {
        self.batch * self.tokens
    }

    /// Feature vector of flat token `t` (`t = sample * P + position`).
    pub fn token(&self, t: usize) -> &[f64] {
        &self.values[t * self.dim..(t + 1) * self.dim]
    }
}

/// One affine expert: `out = weight * h + bias` with `weight` stored row-major `d x d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineExpert {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl AffineExpert {
    pub fn dim(&self) -> usize {
        self.bias.len()
    }

    pub fn apply(&self, h: &[f64], out: &mut [f64]) {
        let d = self.dim();
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.bias[i]
                + self.weight[i * d..(i + 1) * d]
                    .iter()
                    .zip(h)
                    .map(|(w, x)| w * x)
                    .sum::<f64>();
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertSet {
    pub experts: Vec<AffineExpert>,
}

impl ExpertSet {
    pub fn len(&self) -> usize {
        self.experts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.experts.is_empty()
    }

    fn validate(&self, dim: usize) -> Result<()> {
        if self.experts.is_empty() {
            return arg("expert set is empty");
        }
        for e in &self.experts {
            if e.bias.len() != dim || e.weight.len() != dim * dim {
                return arg("expert dimensions do not match token dimension");
            }
            if e.weight.iter().chain(&e.bias).any(|v| !v.is_finite()) {
                return arg("expert parameters must be finite");
            }
        }
        Ok(())
    }
}

/// Linear gate producing `K` logits per token: `logits = weight * h + bias`,
/// `weight` row-major `K x d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateParams {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl GateParams {
    pub fn num_experts(&self) -> usize {
        self.bias.len()
    }

    /// All-zero gate (uniform routing).
    pub fn zeros(num_experts: usize, dim: usize) -> Self {
        Self {
            weight: vec![0.0; num_experts * dim],
            bias: vec![0.0; num_experts],
        }
    }

    pub fn logits(&self, h: &[f64]) -> Vec<f64> {
        let d = h.len();
        self.bias
            .iter()
            .enumerate()
            .map(|(k, b)| {
                b + self.weight[k * d..(k + 1) * d]
                    .iter()
                    .zip(h)
                    .map(|(w, x)| w * x)
                    .sum::<f64>()
            })
            .collect()
    }
}

/// Per-token routing weights, `B x P x K` row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingWeights {
    pub batch: usize,
    pub tokens: usize,
    pub experts: usize,
    pub values: Vec<f64>,
}

impl RoutingWeights {
    pub fn new(batch: usize, tokens: usize, experts: usize, values: Vec<f64>) -> Result<Self> {
        if experts == 0 || values.len() != batch * tokens * experts {
            return arg("routing weight length does not match B x P x K");
        }
        Ok(Self {
            batch,
            tokens,
            experts,
            values,
        })
    }

    pub fn num_tokens(&self) -> usize {
        self.batch * self.tokens
    }

    pub fn token(&self, t: usize) -> &[f64] {
        &self.values[t * self.experts..(t + 1) * self.experts]
    }
}

/// Numerically stable softmax (max subtracted before exponentiation).
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// `alpha(h) = softmax(G(h))` for every token.
pub fn gate(tokens: &TokenBatch, g: &GateParams) -> Result<RoutingWeights> {
    let k = g.num_experts();
    if k == 0 || g.weight.len() != k * tokens.dim {
        return arg("gate dimensions do not match token dimension");
    }
    let mut values = Vec::with_capacity(tokens.num_tokens() * k);
    for t in 0..tokens.num_tokens() {
        values.extend(softmax(&g.logits(tokens.token(t))));
    }
    RoutingWeights::new(tokens.batch, tokens.tokens, k, values)
}

/// Indices of the `k` largest entries; ties go to the lower index.
fn top_indices(weights: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&i, &j| weights[j].total_cmp(&weights[i]).then(i.cmp(&j)));
    order.truncate(k);
    order
}

/// Keeps the `k` largest weights per token, zeroes the rest and renormalizes
/// the survivors to sum to one.
pub fn top_k_route(alpha: &RoutingWeights, k: usize) -> Result<RoutingWeights> {
    if k == 0 || k > alpha.experts {
        return arg(format!("top-k needs 1 <= k <= {}", alpha.experts));
    }
    let mut values = vec![0.0; alpha.values.len()];
    for t in 0..alpha.num_tokens() {
        let row = alpha.token(t);
        let keep = top_indices(row, k);
        let total: f64 = keep.iter().map(|&i| row[i]).sum();
        let out = &mut values[t * alpha.experts..(t + 1) * alpha.experts];
        for &i in &keep {
            out[i] = if total > 0.0 { row[i] / total } else { 1.0 / k as f64 };
        }
    }
    RoutingWeights::new(alpha.batch, alpha.tokens, alpha.experts, values)
}

/// Result of [`moe_forward`], with a count of expert evaluations.
#[derive(Debug, Clone, PartialEq)]
pub struct MoeOutput {
    pub output: TokenBatch,
    pub routing: RoutingWeights,
    pub expert_calls: usize,
}

/// `MoE(h) = sum_k alpha_k(h) FFN_k(h)` with top-k sparsified gate weights.
/// Experts whose weight is zero for a token are not evaluated for it.
pub fn moe_forward(tokens: &TokenBatch, experts: &ExpertSet, g: &GateParams, k: usize) -> Result<MoeOutput> {
    experts.validate(tokens.dim)?;
    if g.num_experts() != experts.len() {
        return arg("gate and expert set disagree on the number of experts");
    }
    let routing = top_k_route(&gate(tokens, g)?, k)?;
    let d = tokens.dim;
    let mut values = vec![0.0; tokens.values.len()];
    let mut scratch = vec![0.0; d];
    let mut calls = 0;
    for t in 0..tokens.num_tokens() {
        let h = tokens.token(t);
        let out = &mut values[t * d..(t + 1) * d];
        for (e, &w) in routing.token(t).iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            experts.experts[e].apply(h, &mut scratch);
            calls += 1;
            for (o, s) in out.iter_mut().zip(&scratch) {
                *o += w * s;
            }
        }
    }
    Ok(MoeOutput {
        output: TokenBatch::new(tokens.batch, tokens.tokens, d, values)?,
        routing,
        expert_calls: calls,
    })
}

/// Batch-averaged expert usage `mean_{i,t} alpha_{i,t,k}`.
pub fn mean_usage(alpha: &RoutingWeights) -> Vec<f64> {
    let n = alpha.num_tokens() as f64;
    let mut usage = vec![0.0; alpha.experts];
    for t in 0..alpha.num_tokens() {
        for (u, a) in usage.iter_mut().zip(alpha.token(t)) {
            *u += a;
        }
    }
    usage.iter().map(|u| u / n).collect()
}

/// `K sum_k mean_usage_k^2`; 1 for perfectly balanced routing, `K` when every
/// token goes to the same expert.
pub fn load_balance_loss(alpha: &RoutingWeights) -> Result<f64> {
    if alpha.num_tokens() == 0 {
        return arg("routing weights are empty");
    }
    let usage = mean_usage(alpha);
    Ok(alpha.experts as f64 * usage.iter().map(|u| u * u).sum::<f64>())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_reference_values() {
        let p = softmax(&[0.1, 0.7, 0.2]);
        let want = [0.2546, 0.4640, 0.2814];
        for (a, b) in p.iter().zip(want) {
            assert!((a - b).abs() < 5e-5);
        }
        let shifted = softmax(&[100.1, 100.7, 100.2]);
        for (a, b) in p.iter().zip(&shifted) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_gate_is_uniform() {
        let tokens = TokenBatch::new(2, 3, 4, (0..24).map(|i| i as f64 * 0.1).collect()).unwrap();
        let alpha = gate(&tokens, &GateParams::zeros(5, 4)).unwrap();
        assert!(alpha.values.iter().all(|&a| (a - 0.2).abs() < 1e-15));
        assert!((load_balance_loss(&alpha).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn top_k_cases() {
        let alpha = RoutingWeights::new(1, 1, 3, vec![0.2546, 0.4640, 0.2814]).unwrap();
        assert_eq!(top_k_route(&alpha, 1).unwrap().values, vec![0.0, 1.0, 0.0]);
        let all = top_k_route(&alpha, 3).unwrap();
        let total: f64 = alpha.values.iter().sum();
        for (a, b) in all.values.iter().zip(&alpha.values) {
            assert!((a - b / total).abs() < 1e-15);
        }
        let tie = RoutingWeights::new(1, 1, 3, vec![0.5, 0.5, 0.0]).unwrap();
        assert_eq!(top_k_route(&tie, 1).unwrap().values, vec![1.0, 0.0, 0.0]);
        assert!(top_k_route(&alpha, 0).is_err());
        assert!(top_k_route(&alpha, 4).is_err());
    }

    #[test]
    fn load_balance_hand_value() {
        // K = 8, four tokens: two one-hot on expert 0, two on expert 1.
        let mut v = vec![0.0; 32];
        v[0] = 1.0;
        v[8] = 1.0;
        v[17] = 1.0;
        v[25] = 1.0;
        let alpha = RoutingWeights::new(1, 4, 8, v).unwrap();
        assert!((load_balance_loss(&alpha).unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn single_expert_mixture() {
        let tokens = TokenBatch::new(1, 2, 2, vec![1.0, 2.0, -1.0, 0.5]).unwrap();
        let expert = AffineExpert {
            weight: vec![2.0, 0.0, 1.0, 1.0],
            bias: vec![0.5, -0.5],
        };
        let set = ExpertSet {
            experts: vec![expert.clone()],
        };
        let g = GateParams {
            weight: vec![3.0, -1.0],
            bias: vec![0.2],
        };
        let out = moe_forward(&tokens, &set, &g, 1).unwrap();
        assert_eq!(out.output.values, vec![2.5, 2.5, -1.5, -1.0]);
    }

    #[test]
    fn dimension_mismatch() {
        let tokens = TokenBatch::new(1, 1, 2, vec![1.0, 2.0]).unwrap();
        assert!(gate(&tokens, &GateParams::zeros(3, 4)).is_err());
        assert!(TokenBatch::new(1, 1, 2, vec![1.0]).is_err());
    }
}
