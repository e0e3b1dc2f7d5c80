//! Scalarized multi-objective PPO: vector GAE, the preference-weighted
//! advantage, the clipped-surrogate gradient in policy space, and a
//! preference-conditioned critic.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::momdp::{Preference, Trajectory};
use crate::nn::{FlatParams, MlpLayout, PolicyLayout};
use crate::optim::{AdamConfig, AdamState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CriticMode {
    /// One critic conditioned on `state ‖ w`, shared by every preference.
    #[default]
    Shared,
    /// One conditioned critic per preference slot `i = 0..K`.
    PerSlot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub clip_eps: f64,
    pub lambda: f64,
    pub epochs: usize,
    pub normalize_adv: bool,
    pub critic_hidden: Vec<usize>,
    pub critic_lr: f64,
    pub critic_epochs: usize,
    pub critic_mode: CriticMode,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            clip_eps: 0.2,
            lambda: 0.95,
            epochs: 4,
            normalize_adv: true,
            critic_hidden: vec![32, 32],
            critic_lr: 1e-3,
            critic_epochs: 10,
            critic_mode: CriticMode::Shared,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.clip_eps > 0.0) {
            return Err(Error::Config(format!(
                "ppo.clip_eps must be positive, got {}",
                self.clip_eps
            )));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Config(format!(
                "ppo.lambda must lie in [0, 1], got {}",
                self.lambda
            )));
        }
        if self.epochs == 0 {
            return Err(Error::Config("ppo.epochs must be at least 1".into()));
        }
        if !(self.critic_lr > 0.0 && self.critic_lr.is_finite()) {
            return Err(Error::Config(format!(
                "ppo.critic_lr must be positive, got {}",
                self.critic_lr
            )));
        }
        Ok(())
    }
}

/// Per-step vector advantages and value targets for one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct AdvantageBatch {
    pub advantages: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
    pub log_probs: Vec<f64>,
}

/// Generalized advantage estimation, one objective at a time. `values` has
/// one entry per state plus the bootstrap value of the final next state.
pub fn gae(traj: &Trajectory, values: &[Vec<f64>], gamma: f64, lambda: f64) -> Result<AdvantageBatch> {
    let t_len = traj.len();
    check_dim("gae values (T + 1)", t_len + 1, values.len())?;
    let m = traj.num_objectives().unwrap_or(0);
    for v in values {
        check_dim("gae value vector", m, v.len())?;
    }
    for r in &traj.rewards {
        check_dim("gae reward vector", m, r.len())?;
    }
    let mut advantages = vec![vec![0.0; m]; t_len];
    let mut running = vec![0.0; m];
    for t in (0..t_len).rev() {
        for i in 0..m {
            let delta = traj.rewards[t][i] + gamma * values[t + 1][i] - values[t][i];
            running[i] = delta + gamma * lambda * running[i];
            advantages[t][i] = running[i];
        }
    }
    let targets = advantages
        .iter()
        .zip(values)
        .map(|(a, v)| a.iter().zip(v).map(|(x, y)| x + y).collect())
        .collect();
    Ok(AdvantageBatch {
        advantages,
        targets,
        log_probs: traj.log_probs.clone(),
    })
}

/// `w^T A_t` for every step, optionally standardized across the batch.
pub fn scalar_advantages(batches: &[&AdvantageBatch], w: &Preference, normalize: bool) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(batches.len());
    for b in batches {
        let mut s = Vec::with_capacity(b.advantages.len());
        for a in &b.advantages {
            check_dim("advantage vs preference", w.dim(), a.len())?;
            s.push(a.iter().zip(w.weights()).map(|(x, y)| x * y).sum::<f64>());
        }
        out.push(s);
    }
    if normalize {
        let n = out.iter().map(Vec::len).sum::<usize>() as f64;
        if n > 0.0 {
            let mean = out.iter().flatten().sum::<f64>() / n;
            let var = out.iter().flatten().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            let sd = var.sqrt() + 1e-8;
            out.iter_mut().flatten().for_each(|x| *x = (*x - mean) / sd);
        }
    }
    Ok(out)
}

/// Gradient of the clipped surrogate `sum_t min(r_t A_t, clip(r_t) A_t)`
/// over several trajectories that share one policy and preference.
pub fn clipped_surrogate_gradient(
    layout: &PolicyLayout,
    theta: &[f64],
    trajs: &[&Trajectory],
    scalar_adv: &[Vec<f64>],
    clip_eps: f64,
) -> Result<FlatParams> {
    check_dim("policy parameters", layout.num_params(), theta.len())?;
    check_dim("trajectories vs advantages", trajs.len(), scalar_adv.len())?;
    let mut grad = vec![0.0; theta.len()];
    for (traj, adv) in trajs.iter().zip(scalar_adv) {
        check_dim("advantages vs trajectory", traj.len(), adv.len())?;
        for t in 0..traj.len() {
            let a = adv[t];
            if a == 0.0 {
                continue;
            }
            let lp = layout.log_prob_unchecked(theta, &traj.states[t], &traj.actions[t]);
            let ratio = (lp - traj.log_probs[t]).exp();
            // The min picks the clipped branch, whose gradient is zero.
            if (a > 0.0 && ratio > 1.0 + clip_eps) || (a < 0.0 && ratio < 1.0 - clip_eps) {
                continue;
            }
            layout.accumulate_grad_log_prob(theta, &traj.states[t], &traj.actions[t], a * ratio, &mut grad);
        }
    }
    let g = FlatParams(grad);
    g.ensure_finite("policy gradient")?;
    Ok(g)
}

/// Ascent direction of the clipped surrogate with scalar advantage `w^T A_t`.
pub fn scalarized_policy_gradient(
    layout: &PolicyLayout,
    theta: &[f64],
    traj: &Trajectory,
    adv: &AdvantageBatch,
    w: &Preference,
    clip_eps: f64,
    normalize: bool,
) -> Result<FlatParams> {
    check_dim("advantage batch length", traj.len(), adv.advantages.len())?;
    let scalar = scalar_advantages(&[adv], w, normalize)?;
    clipped_surrogate_gradient(layout, theta, &[traj], &scalar, clip_eps)
}

/// Regression sample for the critic: input `state ‖ w`, vector target.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticSample {
    pub input: Vec<f64>,
    pub target: Vec<f64>,
}

/// Vector-valued critic `V(s, w)` with its own Adam state.
#[derive(Debug, Clone)]
pub struct CriticNet {
    pub layout: MlpLayout,
    pub params: FlatParams,
    adam: AdamState,
}

impl CriticNet {
    pub fn new<R: Rng + ?Sized>(
        rng: &mut R,
        state_dim: usize,
        num_objectives: usize,
        hidden: &[usize],
        lr: f64,
    ) -> Result<Self> {
        let mut sizes = vec![state_dim + num_objectives];
        sizes.extend_from_slice(hidden);
        sizes.push(num_objectives);
        let layout = MlpLayout::new(&sizes)?;
        let params = FlatParams(layout.init_params(rng));
        let adam = AdamState::new(lr, &[params.len()], AdamConfig::default())?;
        Ok(Self { layout, params, adam })
    }

    pub fn num_objectives(&self) -> usize {
        self.layout.output_dim()
    }

    pub fn value(&self, state: &[f64], w: &Preference) -> Vec<f64> {
        self.layout.forward(&self.params, &input(state, w))
    }

    /// Values of every visited state plus a zero bootstrap: episodes only
    /// end at the horizon, where nothing is left to collect.
    pub fn trajectory_values(&self, traj: &Trajectory, w: &Preference) -> Vec<Vec<f64>> {
        let mut v: Vec<Vec<f64>> = traj.states.iter().map(|s| self.value(s, w)).collect();
        v.push(vec![0.0; self.num_objectives()]);
        v
    }

    /// Mean squared error over samples and objectives.
    pub fn loss(&self, batch: &[CriticSample]) -> Result<f64> {
        self.check_batch(batch)?;
        let mut total = 0.0;
        for s in batch {
            let out = self.layout.forward(&self.params, &s.input);
            total += squared_error(&out, &s.target);
        }
        Ok(total / (batch.len() * self.num_objectives()) as f64)
    }

    fn check_batch(&self, batch: &[CriticSample]) -> Result<()> {
        if batch.is_empty() {
            return Err(Error::InvalidArgument("empty critic batch".into()));
        }
        for s in batch {
            check_dim("critic input", self.layout.input_dim(), s.input.len())?;
            check_dim("critic target", self.num_objectives(), s.target.len())?;
        }
        Ok(())
    }

    /// Loss and its gradient from one pass over the batch.
    fn loss_and_gradient(&self, batch: &[CriticSample]) -> (f64, Vec<f64>) {
        let count = (batch.len() * self.num_objectives()) as f64;
        let scale = 2.0 / count;
        let mut grad = vec![0.0; self.params.len()];
        let mut total = 0.0;
        for s in batch {
            let cache = self.layout.forward_cached(&self.params, &s.input);
            total += squared_error(cache.output(), &s.target);
            let d_out: Vec<f64> = cache
                .output()
                .iter()
                .zip(&s.target)
                .map(|(o, t)| scale * (o - t))
                .collect();
            self.layout.backward(&self.params, &cache, &d_out, &mut grad);
        }
        (total / count, grad)
    }
}

fn squared_error(out: &[f64], target: &[f64]) -> f64 {
    out.iter().zip(target).map(|(o, t)| (o - t).powi(2)).sum()
}

fn input(state: &[f64], w: &Preference) -> Vec<f64> {
    let mut x = Vec::with_capacity(state.len() + w.dim());
    x.extend_from_slice(state);
    x.extend_from_slice(w.weights());
    x
}

/// Builds critic regression samples from a trajectory and its targets.
pub fn critic_samples(traj: &Trajectory, w: &Preference, adv: &AdvantageBatch) -> Vec<CriticSample> {
    traj.states
        .iter()
        .zip(&adv.targets)
        .map(|(s, t)| CriticSample {
            input: input(s, w),
            target: t.clone(),
        })
        .collect()
}

/// Full-batch Adam regression of the critic onto `batch`. Returns the loss
/// before the first epoch followed by the loss after each epoch.
pub fn critic_update(critic: &mut CriticNet, batch: &[CriticSample], epochs: usize) -> Result<Vec<f64>> {
    // Each gradient pass yields the loss before its step, so only the final
    // loss needs a separate pass.
    critic.check_batch(batch)?;
    let mut trace = Vec::with_capacity(epochs + 1);
    for _ in 0..epochs {
        let (loss, grad) = critic.loss_and_gradient(batch);
        trace.push(loss);
        let grad: Vec<f64> = grad.into_iter().map(|g| -g).collect();
        let CriticNet { params, adam, .. } = critic;
        adam.ascend(&mut [&mut params.0[..]], &[&grad])?;
    }
    trace.push(critic.loss(batch)?);
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn traj_from(rewards: &[Vec<f64>]) -> Trajectory {
        let mut t = Trajectory::new();
        for r in rewards {
            t.push(vec![0.0], vec![0.0], 0.0, r.clone());
        }
        t
    }

    /// Plain scalar GAE, written independently as a forward double sum.
    fn scalar_gae(r: &[f64], v: &[f64], gamma: f64, lambda: f64) -> Vec<f64> {
        let n = r.len();
        (0..n)
            .map(|t| {
                (t..n)
                    .map(|k| {
                        let delta = r[k] + gamma * v[k + 1] - v[k];
                        (gamma * lambda).powi((k - t) as i32) * delta
                    })
                    .sum()
            })
            .collect()
    }

    #[test]
    fn gae_with_zero_lambda_is_td_residual() {
        let tr = traj_from(&[vec![1.0, 2.0], vec![0.5, -1.0]]);
        let v = vec![vec![0.3, 0.1], vec![0.2, 0.4], vec![0.0, 0.0]];
        let b = gae(&tr, &v, 0.9, 0.0).unwrap();
        assert_abs_diff_eq!(b.advantages[0][0], 1.0 + 0.9 * 0.2 - 0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(b.advantages[0][1], 2.0 + 0.9 * 0.4 - 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(b.advantages[1][1], -1.0 - 0.4, epsilon = 1e-15);
        assert_abs_diff_eq!(b.targets[0][0], b.advantages[0][0] + 0.3, epsilon = 1e-15);
    }

    #[test]
    fn gae_with_unit_lambda_and_zero_values_is_reward_to_go() {
        let tr = traj_from(&[vec![1.0, 0.0], vec![2.0, 1.0], vec![3.0, 5.0]]);
        let v = vec![vec![0.0; 2]; 4];
        let b = gae(&tr, &v, 1.0, 1.0).unwrap();
        assert_eq!(b.advantages, vec![vec![6.0, 6.0], vec![5.0, 6.0], vec![3.0, 5.0]]);
    }

    #[test]
    fn gae_three_step_hand_unrolled() {
        let (g, l) = (0.9, 0.95);
        let r = [1.0, -0.5, 2.0];
        let v = [0.2, 0.4, -0.1, 0.0];
        let d: Vec<f64> = (0..3).map(|t| r[t] + g * v[t + 1] - v[t]).collect();
        let a2 = d[2];
        let a1 = d[1] + g * l * d[2];
        let a0 = d[0] + g * l * d[1] + (g * l) * (g * l) * d[2];
        let tr = traj_from(&r.iter().map(|x| vec![*x]).collect::<Vec<_>>());
        let vv: Vec<Vec<f64>> = v.iter().map(|x| vec![*x]).collect();
        let b = gae(&tr, &vv, g, l).unwrap();
        for (got, want) in b.advantages.iter().zip([a0, a1, a2]) {
            assert_abs_diff_eq!(got[0], want, epsilon = 1e-14);
        }
    }

    #[test]
    fn gae_rejects_length_mismatch() {
        let tr = traj_from(&[vec![1.0, 0.0]]);
        assert!(gae(&tr, &[vec![0.0, 0.0]], 0.9, 0.9).is_err());
        assert!(gae(&tr, &[vec![0.0], vec![0.0]], 0.9, 0.9).is_err());
    }

    fn one_param_setup() -> (PolicyLayout, Vec<f64>, Trajectory) {
        // Linear policy a = k * s with a single weight, a bias and a log-std.
        let layout = PolicyLayout::new(1, &[], 1).unwrap();
        let theta = vec![0.5, 0.1, -0.2];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut tr = Trajectory::new();
        for s in [1.0, -2.0, 0.7] {
            let (mean, std) = layout.forward(&theta, &[s]).unwrap();
            let a = mean[0] + std[0] * rng.random_range(-1.0..1.0);
            let lp = layout.log_prob_unchecked(&theta, &[s], &[a]);
            tr.push(
                vec![s],
                vec![a],
                lp,
                vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
            );
        }
        (layout, theta, tr)
    }

    fn adv_batch(tr: &Trajectory, adv: Vec<Vec<f64>>) -> AdvantageBatch {
        AdvantageBatch {
            targets: adv.clone(),
            advantages: adv,
            log_probs: tr.log_probs.clone(),
        }
    }

    #[test]
    fn zero_advantages_give_zero_gradient() {
        let (layout, theta, tr) = one_param_setup();
        let adv = adv_batch(&tr, vec![vec![0.0, 0.0]; 3]);
        let w = Preference::new(vec![0.3, 0.7]).unwrap();
        let g = scalarized_policy_gradient(&layout, &theta, &tr, &adv, &w, 0.2, false).unwrap();
        assert!(g.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn one_step_gradient_matches_hand_value() {
        let layout = PolicyLayout::new(1, &[], 1).unwrap();
        let theta = vec![0.5, 0.1, 0.0];
        let (s, a) = (2.0, 1.5);
        let mut tr = Trajectory::new();
        tr.push(
            vec![s],
            vec![a],
            layout.log_prob_unchecked(&theta, &[s], &[a]),
            vec![0.0, 0.0],
        );
        let adv = adv_batch(&tr, vec![vec![2.0, -1.0]]);
        let w = Preference::new(vec![0.25, 0.75]).unwrap();
        let g = scalarized_policy_gradient(&layout, &theta, &tr, &adv, &w, 0.2, false).unwrap();
        let scalar = 0.25 * 2.0 - 0.75 * 1.0;
        let resid = a - (0.5 * s + 0.1);
        // d log pi / d k = resid * s, d/d bias = resid, d/d log_std = resid^2 - 1 (sigma = 1).
        assert_abs_diff_eq!(g[0], scalar * resid * s, epsilon = 1e-14);
        assert_abs_diff_eq!(g[1], scalar * resid, epsilon = 1e-14);
        assert_abs_diff_eq!(g[2], scalar * (resid * resid - 1.0), epsilon = 1e-14);
    }

    #[test]
    fn corner_preference_is_single_objective_ppo() {
        let (layout, theta, tr) = one_param_setup();
        let adv = adv_batch(&tr, vec![vec![1.0, 5.0], vec![-2.0, 3.0], vec![0.5, -4.0]]);
        let w = Preference::new(vec![1.0, 0.0]).unwrap();
        let g = scalarized_policy_gradient(&layout, &theta, &tr, &adv, &w, 0.2, true).unwrap();
        let single = adv_batch(&tr, vec![vec![1.0, 1.0], vec![-2.0, -2.0], vec![0.5, 0.5]]);
        let g1 = scalarized_policy_gradient(&layout, &theta, &tr, &single, &w, 0.2, true).unwrap();
        assert_eq!(g, g1);
    }

    #[test]
    fn first_epoch_is_exact_score_function_form() {
        let (layout, theta, tr) = one_param_setup();
        let adv = adv_batch(&tr, vec![vec![1.0, 5.0], vec![-2.0, 3.0], vec![0.5, -4.0]]);
        let w = Preference::new(vec![0.4, 0.6]).unwrap();
        let g = scalarized_policy_gradient(&layout, &theta, &tr, &adv, &w, 0.2, false).unwrap();
        let mut want = vec![0.0; theta.len()];
        for t in 0..3 {
            let s = 0.4 * adv.advantages[t][0] + 0.6 * adv.advantages[t][1];
            layout.accumulate_grad_log_prob(&theta, &tr.states[t], &tr.actions[t], s, &mut want);
        }
        assert_eq!(g.0, want);
    }

    #[test]
    fn clipping_zeroes_out_of_range_terms() {
        let (layout, theta, tr) = one_param_setup();
        let adv = adv_batch(&tr, vec![vec![-1.0, -1.0]; 3]);
        let w = Preference::new(vec![0.5, 0.5]).unwrap();
        // A much narrower policy makes every sampled action unlikely, so all
        // ratios fall below 1 - eps and every negative-advantage term clips.
        let mut moved = theta.clone();
        moved[2] = -3.0;
        for t in 0..3 {
            let r = (layout.log_prob_unchecked(&moved, &tr.states[t], &tr.actions[t]) - tr.log_probs[t]).exp();
            assert!(r < 0.8);
        }
        let g = scalarized_policy_gradient(&layout, &moved, &tr, &adv, &w, 0.2, false).unwrap();
        assert!(g.iter().all(|x| *x == 0.0));
        let g_wide = scalarized_policy_gradient(&layout, &moved, &tr, &adv, &w, 1e9, false).unwrap();
        assert!(g_wide.iter().any(|x| *x != 0.0));
    }

    #[test]
    fn critic_rejects_empty_batch() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut c = CriticNet::new(&mut rng, 2, 2, &[8], 1e-2).unwrap();
        assert!(critic_update(&mut c, &[], 5).is_err());
    }

    fn constant_batch(seed: u64) -> Vec<CriticSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..64)
            .map(|_| CriticSample {
                input: (0..4).map(|_| rng.random_range(-1.0..1.0)).collect(),
                target: vec![1.5, -0.7],
            })
            .collect()
    }

    #[test]
    fn critic_regresses_to_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut c = CriticNet::new(&mut rng, 2, 2, &[16], 1e-2).unwrap();
        let batch = constant_batch(2);
        let trace = critic_update(&mut c, &batch, 600).unwrap();
        assert!(trace.last().unwrap() <= &trace[0]);
        for s in &batch {
            let out = c.layout.forward(&c.params, &s.input);
            assert!((out[0] - 1.5).abs() < 0.1 && (out[1] + 0.7).abs() < 0.1);
        }
    }

    #[test]
    fn critic_loss_trace_is_reproducible() {
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            let mut c = CriticNet::new(&mut rng, 2, 2, &[8], 1e-2).unwrap();
            critic_update(&mut c, &constant_batch(4), 20).unwrap()
        };
        assert_eq!(run(), run());
    }

    proptest! {
        #[test]
        fn scalar_advantage_is_linear_in_preference(
            a in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 2), 1..10),
            p in 0.0f64..1.0, q in 0.0f64..1.0,
        ) {
            let tr = traj_from(&vec![vec![0.0, 0.0]; a.len()]);
            let b = adv_batch(&tr, a);
            let w1 = Preference::new(vec![p, 1.0 - p]).unwrap();
            let w2 = Preference::new(vec![q, 1.0 - q]).unwrap();
            let mid = Preference::new(vec![(p + q) / 2.0, 1.0 - (p + q) / 2.0]).unwrap();
            let s1 = scalar_advantages(&[&b], &w1, false).unwrap();
            let s2 = scalar_advantages(&[&b], &w2, false).unwrap();
            let sm = scalar_advantages(&[&b], &mid, false).unwrap();
            for t in 0..s1[0].len() {
                prop_assert!((sm[0][t] - 0.5 * (s1[0][t] + s2[0][t])).abs() < 1e-12);
            }
        }

        #[test]
        fn single_objective_gae_matches_scalar_oracle(
            r in prop::collection::vec(-3.0f64..3.0, 1..12),
            seed in any::<u64>(),
            gamma in 0.5f64..1.0, lambda in 0.0f64..1.0,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let v: Vec<f64> = (0..=r.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let tr = traj_from(&r.iter().map(|x| vec![*x]).collect::<Vec<_>>());
            let vv: Vec<Vec<f64>> = v.iter().map(|x| vec![*x]).collect();
            let b = gae(&tr, &vv, gamma, lambda).unwrap();
            for (got, want) in b.advantages.iter().zip(scalar_gae(&r, &v, gamma, lambda)) {
                prop_assert!((got[0] - want).abs() < 1e-9);
            }
        }

        #[test]
        fn huge_clip_equals_unclipped_form(seed in any::<u64>()) {
            let (layout, theta, tr) = one_param_setup();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let adv = adv_batch(&tr, (0..3).map(|_| vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)]).collect());
            let w = Preference::new(vec![0.5, 0.5]).unwrap();
            let g = scalarized_policy_gradient(&layout, &theta, &tr, &adv, &w, f64::INFINITY, false).unwrap();
            let mut want = vec![0.0; theta.len()];
            for t in 0..3 {
                let s = 0.5 * adv.advantages[t][0] + 0.5 * adv.advantages[t][1];
                layout.accumulate_grad_log_prob(&theta, &tr.states[t], &tr.actions[t], s, &mut want);
            }
            prop_assert_eq!(g.0, want);
        }
    }
}
