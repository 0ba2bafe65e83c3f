use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Block, Decision, Episode, PolicyError, PolicyParams, PpoConfig};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveParts {
    /// Masked clipped surrogate (to maximize).
    pub surrogate: f64,
    /// Mean `KL(π_old ‖ π)` per masked-in token.
    pub kl: f64,
    pub critic_loss: f64,
    /// `−surrogate + β·kl + c·critic_loss` (to minimize).
    pub loss: f64,
    pub mean_ratio: f64,
    pub clip_fraction: f64,
}

pub type UpdateStats = ObjectiveParts;

/// Current log-probs of a decision's candidates and their feature mean.
fn evaluate(params: &PolicyParams, d: &Decision, temperature: f64) -> (Vec<f64>, Vec<f64>) {
    let lp = params.log_probs(d.block, &d.candidates, temperature);
    let mean = feature_mean(&d.candidates, &lp, d.block.dim());
    (lp, mean)
}

fn feature_mean(candidates: &[Vec<f64>], log_probs: &[f64], dim: usize) -> Vec<f64> {
    let mut mean = vec![0.0; dim];
    for (x, l) in candidates.iter().zip(log_probs) {
        let p = l.exp();
        for (m, xi) in mean.iter_mut().zip(x) {
            *m += p * xi;
        }
    }
    mean
}

fn add_to(grad: &mut PolicyParams, block: Block, v: &[f64], scale: f64) {
    for (g, x) in grad.block_mut(block).iter_mut().zip(v) {
        *g += scale * x;
    }
}

struct Terms {
    surrogate: bool,
    kl: bool,
    critic: bool,
}

const ALL_TERMS: Terms = Terms { surrogate: true, kl: true, critic: true };

fn objective(params: &PolicyParams, batch: &[&Episode], cfg: &PpoConfig, terms: &Terms) -> Result<(ObjectiveParts, PolicyParams), PolicyError> {
    let active: Vec<&&Episode> = batch.iter().filter(|e| e.masked_in() > 0).collect();
    if active.is_empty() {
        return Err(PolicyError::NoMaskedTokens);
    }
    let n_ep = active.len() as f64;
    let tau = cfg.temperature;
    let mut grad = PolicyParams::zeros();
    let mut parts = ObjectiveParts::default();
    let (mut ratio_sum, mut clipped, mut decisions) = (0.0, 0usize, 0usize);

    for ep in &active {
        let w = 1.0 / (ep.masked_in() as f64 * n_ep);
        for tok in ep.tokens.iter().filter(|t| t.masked_in) {
            let a = tok.advantage;
            let Some(d) = &tok.decision else {
                parts.surrogate += w * a;
                continue;
            };
            let (lp, mean_new) = evaluate(params, d, tau);
            let r = (lp[d.chosen] - d.old_log_prob()).exp();
            let rc = r.clamp(1.0 - cfg.clip, 1.0 + cfg.clip);
            parts.surrogate += w * (r * a).min(rc * a);
            ratio_sum += r;
            decisions += 1;
            if (r - 1.0).abs() > cfg.clip {
                clipped += 1;
            }
            let clip_active = (a > 0.0 && r > 1.0 + cfg.clip) || (a < 0.0 && r < 1.0 - cfg.clip);
            if terms.surrogate && !clip_active {
                // ∇ log π(chosen) = (φ_chosen − E_π φ) / τ
                let s = -w * a * r / tau;
                add_to(&mut grad, d.block, &d.candidates[d.chosen], s);
                add_to(&mut grad, d.block, &mean_new, -s);
            }
            let kl: f64 = d.old_log_probs.iter().zip(&lp).map(|(o, n)| o.exp() * (o - n)).sum();
            parts.kl += w * kl;
            if terms.kl {
                let mean_old = feature_mean(&d.candidates, &d.old_log_probs, d.block.dim());
                let s = cfg.kl_coef * w / tau;
                add_to(&mut grad, d.block, &mean_new, s);
                add_to(&mut grad, d.block, &mean_old, -s);
            }
        }
    }

    let critic_eps: Vec<&&Episode> = active.iter().copied().filter(|e| !e.returns.is_empty()).collect();
    for ep in &critic_eps {
        let w = 1.0 / (ep.returns.len() as f64 * critic_eps.len() as f64);
        for (state, ret) in ep.critic_states.iter().zip(&ep.returns) {
            let err = params.value(state) - ret;
            parts.critic_loss += w * 0.5 * err * err;
            if terms.critic {
                for (g, x) in grad.critic.iter_mut().zip(state) {
                    *g += cfg.critic_coef * w * err * x;
                }
            }
        }
    }

    parts.loss = -parts.surrogate + cfg.kl_coef * parts.kl + cfg.critic_coef * parts.critic_loss;
    parts.mean_ratio = if decisions > 0 { ratio_sum / decisions as f64 } else { 1.0 };
    parts.clip_fraction = if decisions > 0 { clipped as f64 / decisions as f64 } else { 0.0 };
    Ok((parts, grad))
}

/// Objective value and the gradient of `loss` with respect to all weights.
pub fn ppo_objective(params: &PolicyParams, batch: &[Episode], cfg: &PpoConfig) -> Result<(ObjectiveParts, PolicyParams), PolicyError> {
    let refs: Vec<&Episode> = batch.iter().collect();
    objective(params, &refs, cfg, &ALL_TERMS)
}

/// Gradient of the surrogate alone (ascent direction).
pub fn surrogate_gradient(params: &PolicyParams, batch: &[Episode], cfg: &PpoConfig) -> Result<PolicyParams, PolicyError> {
    let refs: Vec<&Episode> = batch.iter().collect();
    let terms = Terms { surrogate: true, kl: false, critic: false };
    let (_, g) = objective(params, &refs, cfg, &terms)?;
    let mut ascent = PolicyParams::zeros();
    ascent.add_scaled(&g, -1.0);
    Ok(ascent)
}

/// Several epochs of minibatch descent on the PPO loss.
pub fn ppo_update<R: Rng + ?Sized>(
    params: &PolicyParams,
    batch: &[Episode],
    cfg: &PpoConfig,
    rng: &mut R,
) -> Result<(PolicyParams, UpdateStats), PolicyError> {
    cfg.validate()?;
    if batch.iter().all(|e| e.masked_in() == 0) {
        return Err(PolicyError::NoMaskedTokens);
    }
    let mut new = params.clone();
    let mut order: Vec<usize> = (0..batch.len()).collect();
    for _ in 0..cfg.ppo_epochs {
        order.shuffle(rng);
        for chunk in order.chunks(cfg.minibatch_size) {
            let mb: Vec<&Episode> = chunk.iter().map(|&i| &batch[i]).collect();
            let (_, mut grad) = match objective(&new, &mb, cfg, &ALL_TERMS) {
                Ok(v) => v,
                Err(PolicyError::NoMaskedTokens) => continue,
                Err(e) => return Err(e),
            };
            if cfg.max_grad_norm > 0.0 {
                let norm = grad.norm_sq(true).sqrt();
                if norm > cfg.max_grad_norm {
                    let s = cfg.max_grad_norm / norm;
                    let copy = grad.clone();
                    grad = PolicyParams::zeros();
                    grad.add_scaled(&copy, s);
                }
            }
            let critic = std::mem::take(&mut grad.critic);
            new.add_scaled(&grad, -cfg.policy_lr);
            for (w, g) in new.critic.iter_mut().zip(&critic) {
                *w -= cfg.critic_lr * g;
            }
        }
    }
    let refs: Vec<&Episode> = batch.iter().collect();
    let (stats, _) = objective(&new, &refs, cfg, &ALL_TERMS)?;
    Ok((new, stats))
}

#[cfg(test)]
mod tests {
    use super::super::{TokenSample, STATE_DIM};
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_decision(rng: &mut ChaCha8Rng, params: &PolicyParams, block: Block) -> Decision {
        let n = rng.gen_range(2..5);
        let candidates: Vec<Vec<f64>> =
            (0..n).map(|_| (0..block.dim()).map(|_| f64::from(rng.gen_range(0..3u8)) * 0.5).collect()).collect();
        let old_log_probs = params.log_probs(block, &candidates, 1.0);
        Decision { block, candidates, chosen: rng.gen_range(0..n), old_log_probs }
    }

    fn random_episode(rng: &mut ChaCha8Rng, params: &PolicyParams) -> Episode {
        let tokens = (0..rng.gen_range(3..12))
            .map(|_| {
                let masked_in = rng.gen_bool(0.7);
                let block = Block::ALL[rng.gen_range(0..4)];
                let decision = rng.gen_bool(0.6).then(|| random_decision(rng, params, block));
                TokenSample { masked_in, advantage: rng.gen_range(-1.5..1.5), decision }
            })
            .collect();
        let turns = rng.gen_range(1..4);
        Episode {
            tokens,
            critic_states: (0..turns).map(|_| (0..STATE_DIM).map(|_| rng.gen_range(0.0..1.0)).collect()).collect(),
            returns: (0..turns).map(|_| rng.gen_range(-1.0..2.0)).collect(),
        }
    }

    #[test]
    fn ratio_one_at_rollout_params() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let params = PolicyParams::zeros();
        let batch: Vec<Episode> = (0..6).map(|_| random_episode(&mut rng, &params)).collect();
        let cfg = PpoConfig::default();
        let (parts, _) = ppo_objective(&params, &batch, &cfg).unwrap();
        assert!((parts.mean_ratio - 1.0).abs() < 1e-15);
        assert_eq!(parts.clip_fraction, 0.0);
        assert!(parts.kl.abs() < 1e-15);
    }

    /// One masked-in token whose ratio is 1.5 under zero weights.
    fn high_ratio_episode(advantage: f64) -> Episode {
        let candidates = vec![vec![0.0; 4], vec![1.0, 0.0, 0.0, 0.0]];
        let old = vec![(0.5f64 / 1.5).ln(), (1.0f64 - 0.5 / 1.5).ln()];
        let d = Decision { block: Block::SearchRelation, candidates, chosen: 0, old_log_probs: old };
        Episode { tokens: vec![TokenSample { masked_in: true, advantage, decision: Some(d) }], critic_states: vec![], returns: vec![] }
    }

    #[test]
    fn clipped_branch_uses_bounded_ratio() {
        let params = PolicyParams::zeros();
        let cfg = PpoConfig::default();
        let (parts, _) = ppo_objective(&params, &[high_ratio_episode(2.0)], &cfg).unwrap();
        assert!((parts.mean_ratio - 1.5).abs() < 1e-12);
        assert!((parts.surrogate - 1.2 * 2.0).abs() < 1e-12);
        assert_eq!(parts.clip_fraction, 1.0);
        let g = surrogate_gradient(&params, &[high_ratio_episode(2.0)], &cfg).unwrap();
        assert!(g.search_relation.iter().all(|&x| x == 0.0));
        // A negative advantage keeps the unclipped branch and its gradient.
        let (parts, _) = ppo_objective(&params, &[high_ratio_episode(-2.0)], &cfg).unwrap();
        assert!((parts.surrogate + 1.5 * 2.0).abs() < 1e-12);
        let g = surrogate_gradient(&params, &[high_ratio_episode(-2.0)], &cfg).unwrap();
        assert!(g.search_relation.iter().any(|&x| x != 0.0));
    }

    #[test]
    fn masked_out_tokens_contribute_nothing() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cfg = PpoConfig::default();
        for _ in 0..20 {
            let mut params = PolicyParams::zeros();
            for i in 0..params.num_params() {
                params.set(i, rng.gen_range(-1.0..1.0));
            }
            let old = PolicyParams::zeros();
            let batch: Vec<Episode> = (0..5).map(|_| random_episode(&mut rng, &old)).collect();
            let g = surrogate_gradient(&params, &batch, &cfg).unwrap();
            // Scramble everything carried by I=0 tokens.
            let mut scrambled = batch.clone();
            for ep in &mut scrambled {
                for t in ep.tokens.iter_mut().filter(|t| !t.masked_in) {
                    t.advantage *= -7.0;
                    t.decision = Some(random_decision(&mut rng, &old, Block::AnswerEntity));
                }
            }
            assert_eq!(g, surrogate_gradient(&params, &scrambled, &cfg).unwrap());
        }
    }

    #[test]
    fn empty_mask_is_an_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let params = PolicyParams::zeros();
        let mut ep = random_episode(&mut rng, &params);
        ep.tokens.iter_mut().for_each(|t| t.masked_in = false);
        let err = ppo_update(&params, &[ep], &PpoConfig::default(), &mut rng);
        assert!(matches!(err, Err(PolicyError::NoMaskedTokens)));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cfg = PpoConfig { kl_coef: 0.05, ..Default::default() };
        for _ in 0..20 {
            let old = {
                let mut p = PolicyParams::zeros();
                for i in 0..p.num_params() {
                    p.set(i, rng.gen_range(-0.5..0.5));
                }
                p
            };
            let batch: Vec<Episode> = (0..4).map(|_| random_episode(&mut rng, &old)).collect();
            let mut p = old.clone();
            for i in 0..p.num_params() {
                p.set(i, p.get(i) + rng.gen_range(-0.1..0.1));
            }
            let (_, grad) = ppo_objective(&p, &batch, &cfg).unwrap();
            for i in 0..p.num_params() {
                let w = p.get(i);
                let h = 1e-6;
                p.set(i, w + h);
                let up = ppo_objective(&p, &batch, &cfg).unwrap().0.loss;
                p.set(i, w - h);
                let down = ppo_objective(&p, &batch, &cfg).unwrap().0.loss;
                p.set(i, w);
                let fd = (up - down) / (2.0 * h);
                let a = grad.get(i);
                let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-6);
                assert!(rel < 1e-4, "coord {i}: {a} vs {fd}");
            }
        }
    }

    #[test]
    fn zero_advantages_keep_argmax() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut params = PolicyParams::zeros();
        for i in 0..params.num_params() {
            params.set(i, rng.gen_range(-1.0..1.0));
        }
        let mut batch: Vec<Episode> = (0..8).map(|_| random_episode(&mut rng, &params)).collect();
        batch.iter_mut().flat_map(|e| e.tokens.iter_mut()).for_each(|t| t.advantage = 0.0);
        let (new, _) = ppo_update(&params, &batch, &PpoConfig::default(), &mut rng).unwrap();
        for ep in &batch {
            for d in ep.tokens.iter().filter_map(|t| t.decision.as_ref()) {
                let argmax = |p: &PolicyParams| {
                    let lp = p.log_probs(d.block, &d.candidates, 1.0);
                    (0..lp.len()).fold(0, |b, i| if lp[i] > lp[b] { i } else { b })
                };
                assert_eq!(argmax(&params), argmax(&new));
                let total: f64 = new.log_probs(d.block, &d.candidates, 1.0).iter().map(|l| l.exp()).sum();
                assert!((total - 1.0).abs() < 1e-12);
            }
        }
    }
}
