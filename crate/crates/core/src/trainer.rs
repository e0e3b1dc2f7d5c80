//! Two-stage training: a warm-up that improves the shared bias `b` at the
//! centre preference, then Pareto set learning over sampled preferences.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::envs::{AnyEnv, EnvConfig};
use crate::error::{check_dim, Error, Result};
use crate::hypernet::{
    bias_hyper_init, embedding_layout, hypernet_forward, hypernet_vjp_into, HypernetGrad, HypernetParams,
};
use crate::metrics::{
    evaluate_hypernet, hypervolume_report, reference_from_points, EvalSettings, HvReport, ParetoFront,
};
use crate::momdp::{
    discounted_return, preference_grid, sample_preference, scalarize, uniform_preference, Environment, Preference,
    Trajectory,
};
use crate::nn::{reset_exploration, FlatParams, PolicyLayout};
use crate::optim::{AdamConfig, AdamState};
use crate::ppo::{
    clipped_surrogate_gradient, critic_samples, critic_update, gae, scalar_advantages, AdvantageBatch, CriticMode,
    CriticNet, PpoConfig,
};
use crate::rollout::{evaluate_policy, rollout};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HypernetConfig {
    /// Reduced dimension: columns of `W` and width of the embedding output.
    pub d: usize,
    pub embedding_hidden: Vec<usize>,
    pub policy_hidden: Vec<usize>,
    /// Lower bound on the policy's effective `log_std`; `None` leaves it free.
    pub log_std_floor: Option<f64>,
    /// Squashes the policy mean to `bound * tanh(out)`; `None` leaves it linear.
    pub mean_bound: Option<f64>,
}

impl Default for HypernetConfig {
    fn default() -> Self {
        Self {
            d: 10,
            embedding_hidden: vec![32],
            policy_hidden: vec![16, 16],
            log_std_floor: None,
            mean_bound: None,
        }
    }
}

fn default_rollouts() -> usize {
    1
}

/// Step-size schedule applied within each stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LrSchedule {
    /// `eta` throughout.
    #[default]
    Constant,
    /// `eta * (1 - i / G)` at iteration `i` of a stage with `G` iterations.
    Linear,
}

impl LrSchedule {
    pub fn lr(self, eta: f64, iteration: u64, iterations: u64) -> f64 {
        match self {
            Self::Constant => eta,
            Self::Linear => eta * (1.0 - iteration as f64 / iterations.max(1) as f64),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    /// Environment-step budget `T`.
    pub total_steps: u64,
    pub alpha: f64,
    /// Preferences sampled per Pareto-set-learning iteration.
    pub k: usize,
    pub eta: f64,
    #[serde(default)]
    pub lr_schedule: LrSchedule,
    pub seed: u64,
    #[serde(default = "default_rollouts")]
    pub rollouts_per_preference: usize,
    /// Optional per-objective multiplier applied to rewards before GAE.
    #[serde(default)]
    pub reward_scale: Option<Vec<f64>>,
    /// Rollout threads; 0 lets the runtime decide.
    #[serde(default)]
    pub workers: usize,
    #[serde(default)]
    pub adam: AdamConfig,
    #[serde(default)]
    pub ppo: PpoConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub grid_resolution: usize,
    pub episodes: usize,
    pub seed: u64,
    /// Hypervolume reference point. When absent it is placed 10% of the
    /// range below the oracle front's per-objective minima.
    pub reference_point: Option<Vec<f64>>,
    /// Evaluate and emit snapshots during Pareto set learning.
    pub snapshots: bool,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        let e = EvalSettings::default();
        Self {
            grid_resolution: 100,
            episodes: e.episodes,
            seed: e.seed,
            reference_point: None,
            snapshots: true,
        }
    }
}

impl EvaluationConfig {
    pub fn settings(&self) -> EvalSettings {
        EvalSettings {
            episodes: self.episodes,
            seed: self.seed,
        }
    }
}

/// Everything a run needs; this is also the on-disk config schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub schema_version: u32,
    pub environment: EnvConfig,
    #[serde(default)]
    pub hypernet: HypernetConfig,
    pub training: TrainingConfig,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
}

impl TrainConfig {
    /// Checks every invariant that can be checked without rolling out.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let env = self.environment.build().map_err(config_err)?;
        let spec = env.spec();
        let t = &self.training;
        if !(0.0..1.0).contains(&t.alpha) {
            return Err(Error::Config(format!(
                "training.alpha must lie in [0, 1), got {}",
                t.alpha
            )));
        }
        if t.k == 0 {
            return Err(Error::Config("training.k must be at least 1".into()));
        }
        if !(t.eta > 0.0 && t.eta.is_finite()) {
            return Err(Error::Config(format!("training.eta must be positive, got {}", t.eta)));
        }
        if t.rollouts_per_preference == 0 {
            return Err(Error::Config(
                "training.rollouts_per_preference must be at least 1".into(),
            ));
        }
        if let Some(s) = &t.reward_scale {
            if s.len() != spec.num_objectives || s.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(Error::Config(format!(
                    "training.reward_scale needs {} positive entries",
                    spec.num_objectives
                )));
            }
        }
        t.ppo.validate()?;
        let (g_w, g_psl) =
            compute_stage_iterations(t.total_steps, t.alpha, t.k, self.trajectory_steps()).map_err(config_err)?;
        if t.alpha > 0.0 && g_w == 0 {
            return Err(Error::Config(format!(
                "training.alpha * total_steps leaves no warm-up iteration (trajectory length {})",
                self.trajectory_steps()
            )));
        }
        if g_psl == 0 {
            return Err(Error::Config(format!(
                "training.total_steps too small for one Pareto-set-learning iteration (needs {})",
                t.k as u64 * self.trajectory_steps()
            )));
        }
        let h = &self.hypernet;
        if h.d == 0 {
            return Err(Error::Config("hypernet.d must be at least 1".into()));
        }
        let policy = self.policy_layout()?;
        if h.d > policy.num_params() {
            return Err(Error::Config(format!(
                "hypernet.d = {} exceeds the policy size {}",
                h.d,
                policy.num_params()
            )));
        }
        let e = &self.evaluation;
        if e.grid_resolution == 0 || e.episodes == 0 {
            return Err(Error::Config(
                "evaluation.grid_resolution and episodes must be positive".into(),
            ));
        }
        if let Some(r) = &e.reference_point {
            check_dim("evaluation.reference_point", spec.num_objectives, r.len()).map_err(config_err)?;
        }
        Ok(())
    }

    pub fn policy_layout(&self) -> Result<PolicyLayout> {
        let env = self.environment.build()?;
        let spec = env.spec();
        PolicyLayout::new(spec.state_dim, &self.hypernet.policy_hidden, spec.action_dim)?
            .with_log_std_floor(self.hypernet.log_std_floor)
            .and_then(|p| p.with_mean_bound(self.hypernet.mean_bound))
            .map_err(config_err)
    }

    pub fn num_objectives(&self) -> Result<usize> {
        Ok(self.environment.build()?.spec().num_objectives)
    }

    /// `T_tra`: environment steps behind one preference's gradient estimate.
    pub fn trajectory_steps(&self) -> u64 {
        let horizon = match &self.environment {
            EnvConfig::Lqr(p) => p.horizon,
            EnvConfig::PointNav(p) => p.horizon,
        };
        (horizon * self.training.rollouts_per_preference) as u64
    }

    pub fn evaluation_grid(&self) -> Result<Vec<Preference>> {
        preference_grid(self.num_objectives()?, self.evaluation.grid_resolution)
    }

    /// Configured reference point, or the oracle-derived default.
    pub fn reference_point(&self) -> Result<Vec<f64>> {
        if let Some(r) = &self.evaluation.reference_point {
            return Ok(r.clone());
        }
        let oracle = self.environment.oracle_front(&self.evaluation_grid()?)?;
        reference_from_points(&oracle.objectives(), 0.1)
    }
}

fn config_err(e: Error) -> Error {
    match e {
        Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    }
}

/// `(G_W, G_PSL) = (floor(alpha T / T_tra), floor((1 - alpha) T / (K T_tra)))`.
pub fn compute_stage_iterations(total: u64, alpha: f64, k: usize, t_tra: u64) -> Result<(u64, u64)> {
    if t_tra == 0 {
        return Err(Error::InvalidArgument("trajectory length must be positive".into()));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!("alpha must lie in [0, 1), got {alpha}")));
    }
    // The guard absorbs products like 0.15 * 1000 landing just below an integer.
    let floor = |x: f64| (x + 1e-9).floor() as u64;
    let t = total as f64;
    let g_w = floor(alpha * t / t_tra as f64);
    let g_psl = floor((1.0 - alpha) * t / (k as f64 * t_tra as f64));
    Ok((g_w, g_psl))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Warmup,
    Psl,
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogRecord {
    Iteration {
        stage: Stage,
        iteration: u64,
        env_steps: u64,
        preferences: Vec<Vec<f64>>,
        scalarized_returns: Vec<f64>,
        wall_time_s: f64,
    },
    /// Deterministic scalarized return of `b` at the centre preference.
    Warmup {
        iterations: u64,
        initial_return: f64,
        final_return: f64,
        improvement: f64,
    },
    Snapshot {
        iteration: u64,
        env_steps: u64,
        hypervolume: f64,
        counted: usize,
        excluded: usize,
        non_dominated: usize,
    },
}

pub enum TrainEvent<'a> {
    Log(&'a LogRecord),
    Snapshot {
        iteration: u64,
        env_steps: u64,
        phi: &'a HypernetParams,
        front: &'a ParetoFront,
        hv: HvReport,
        rng_digest: &'a str,
    },
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub phi: HypernetParams,
    pub policy: PolicyLayout,
    pub log: Vec<LogRecord>,
    pub front: ParetoFront,
    pub hv: HvReport,
    pub reference_point: Vec<f64>,
    pub env_steps: u64,
    pub stage_iterations: (u64, u64),
    pub rng_digest: String,
}

/// Independent per-(iteration, preference, rollout) seed.
fn stream_seed(seed: u64, parts: &[u64]) -> u64 {
    fn splitmix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    parts.iter().fold(splitmix(seed), |h, p| splitmix(h ^ splitmix(*p)))
}

const WARMUP_STREAM: u64 = 1;
const PSL_STREAM: u64 = 2;

/// Rollouts and advantages for one preference.
struct PreferenceBatch {
    trajs: Vec<Trajectory>,
    advs: Vec<AdvantageBatch>,
    scalar_adv: Vec<Vec<f64>>,
    mean_return: Vec<f64>,
}

pub struct Trainer {
    cfg: TrainConfig,
    env: AnyEnv,
    policy: PolicyLayout,
    phi: HypernetParams,
    critics: Vec<CriticNet>,
    pref_rng: ChaCha8Rng,
    env_steps: u64,
    iteration: u64,
    pool: rayon::ThreadPool,
}

impl Trainer {
    pub fn new(cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let env = cfg.environment.build()?;
        let spec = env.spec().clone();
        let policy = cfg.policy_layout()?;
        let embedding = embedding_layout(spec.num_objectives, &cfg.hypernet.embedding_hidden, cfg.hypernet.d)?;
        let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.training.seed);
        let phi = bias_hyper_init(&mut init_rng, &policy, &embedding)?;
        let ppo = &cfg.training.ppo;
        let n_critics = match ppo.critic_mode {
            CriticMode::Shared => 1,
            CriticMode::PerSlot => cfg.training.k,
        };
        let critics = (0..n_critics)
            .map(|_| {
                CriticNet::new(
                    &mut init_rng,
                    spec.state_dim,
                    spec.num_objectives,
                    &ppo.critic_hidden,
                    ppo.critic_lr,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.training.workers)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
        Ok(Self {
            pref_rng: ChaCha8Rng::seed_from_u64(stream_seed(cfg.training.seed, &[0xbeef])),
            cfg,
            env,
            policy,
            phi,
            critics,
            env_steps: 0,
            iteration: 0,
            pool,
        })
    }

    pub fn phi(&self) -> &HypernetParams {
        &self.phi
    }

    pub fn policy(&self) -> &PolicyLayout {
        &self.policy
    }

    pub fn env_steps(&self) -> u64 {
        self.env_steps
    }

    pub fn stage_iterations(&self) -> Result<(u64, u64)> {
        let t = &self.cfg.training;
        compute_stage_iterations(t.total_steps, t.alpha, t.k, self.cfg.trajectory_steps())
    }

    /// SHA-256 over the preference sampler's seed, stream and position.
    pub fn rng_digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.pref_rng.get_seed());
        h.update(self.pref_rng.get_stream().to_le_bytes());
        h.update(self.pref_rng.get_word_pos().to_le_bytes());
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    fn critic_for(&self, slot: usize) -> &CriticNet {
        &self.critics[slot % self.critics.len()]
    }

    /// Rolls out `thetas[i]` for `prefs[i]` and estimates advantages.
    fn collect(&mut self, stream: u64, prefs: &[Preference], thetas: &[FlatParams]) -> Result<Vec<PreferenceBatch>> {
        let spec = self.env.spec().clone();
        let rollouts = self.cfg.training.rollouts_per_preference;
        let seed = self.cfg.training.seed;
        let iteration = self.iteration;
        let ppo = &self.cfg.training.ppo;
        let scale = self.cfg.training.reward_scale.clone();
        let env = &self.env;
        let policy = &self.policy;
        let this = &*self;
        let batches = self.pool.install(|| {
            prefs
                .par_iter()
                .zip(thetas)
                .enumerate()
                .map(|(i, (w, theta))| {
                    let mut env = env.clone();
                    let critic = this.critic_for(i);
                    let mut trajs = Vec::with_capacity(rollouts);
                    let mut advs = Vec::with_capacity(rollouts);
                    let mut mean_return = vec![0.0; spec.num_objectives];
                    for r in 0..rollouts {
                        let s = stream_seed(seed, &[stream, iteration, i as u64, r as u64]);
                        env.seed(s);
                        let mut rng = ChaCha8Rng::seed_from_u64(s);
                        let mut traj = rollout(&mut env, policy, theta, &mut rng, None)?;
                        let ret = discounted_return(&traj, spec.gamma)?;
                        for (acc, v) in mean_return.iter_mut().zip(ret) {
                            *acc += v / rollouts as f64;
                        }
                        if let Some(sc) = &scale {
                            for rew in &mut traj.rewards {
                                rew.iter_mut().zip(sc).for_each(|(x, c)| *x *= c);
                            }
                        }
                        let values = critic.trajectory_values(&traj, w);
                        advs.push(gae(&traj, &values, spec.gamma, ppo.lambda)?);
                        trajs.push(traj);
                    }
                    let refs: Vec<&AdvantageBatch> = advs.iter().collect();
                    let scalar_adv = scalar_advantages(&refs, w, ppo.normalize_adv)?;
                    Ok(PreferenceBatch {
                        trajs,
                        advs,
                        scalar_adv,
                        mean_return,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })?;
        self.env_steps += batches
            .iter()
            .flat_map(|b| &b.trajs)
            .map(|t| t.len() as u64)
            .sum::<u64>();
        Ok(batches)
    }

    /// Policy-space gradient for each batch, averaged over its rollouts.
    fn policy_gradients(&self, thetas: &[FlatParams], batches: &[PreferenceBatch]) -> Result<Vec<FlatParams>> {
        let clip = self.cfg.training.ppo.clip_eps;
        let policy = &self.policy;
        self.pool.install(|| {
            thetas
                .par_iter()
                .zip(batches)
                .map(|(theta, b)| {
                    let trajs: Vec<&Trajectory> = b.trajs.iter().collect();
                    let mut g = clipped_surrogate_gradient(policy, theta, &trajs, &b.scalar_adv, clip)?;
                    let inv = 1.0 / b.trajs.len() as f64;
                    g.iter_mut().for_each(|x| *x *= inv);
                    Ok(g)
                })
                .collect()
        })
    }

    fn fit_critics(&mut self, prefs: &[Preference], batches: &[PreferenceBatch]) -> Result<()> {
        let epochs = self.cfg.training.ppo.critic_epochs;
        if epochs == 0 {
            return Ok(());
        }
        let n = self.critics.len();
        for c in 0..n {
            let mut samples = Vec::new();
            for (i, (w, b)) in prefs.iter().zip(batches).enumerate() {
                if i % n != c {
                    continue;
                }
                for (t, a) in b.trajs.iter().zip(&b.advs) {
                    samples.extend(critic_samples(t, w, a));
                }
            }
            if !samples.is_empty() {
                critic_update(&mut self.critics[c], &samples, epochs)?;
            }
        }
        Ok(())
    }

    fn scalarized(prefs: &[Preference], batches: &[PreferenceBatch]) -> Result<Vec<f64>> {
        prefs
            .iter()
            .zip(batches)
            .map(|(w, b)| scalarize(&b.mean_return, w))
            .collect()
    }

    /// Deterministic scalarized return of `theta` at `w`.
    fn evaluate_scalarized(&self, theta: &[f64], w: &Preference) -> Result<f64> {
        let e = &self.cfg.evaluation;
        let starts = self.env.evaluation_starts(e.episodes, e.seed);
        let mut env = self.env.clone();
        scalarize(&evaluate_policy(&mut env, &self.policy, theta, &starts)?, w)
    }

    /// Trains `b` alone at the centre preference for `g_w` iterations, then
    /// resets its exploration slice. `W` and `mu` are never touched.
    pub fn warmup(&mut self, g_w: u64, on_event: &mut dyn FnMut(TrainEvent<'_>) -> Result<()>) -> Result<()> {
        let m = self.env.spec().num_objectives;
        let w = uniform_preference(m)?;
        let initial_return = self.evaluate_scalarized(&self.phi.b, &w)?;
        if g_w > 0 {
            let mut adam = AdamState::new(self.cfg.training.eta, &[self.phi.n], self.cfg.training.adam)?;
            let started = Instant::now();
            let t = &self.cfg.training;
            let (eta, schedule) = (t.eta, t.lr_schedule);
            for it in 0..g_w {
                adam.lr = schedule.lr(eta, it, g_w);
                let prefs = vec![w.clone()];
                let batches = self.collect(WARMUP_STREAM, &prefs, &[self.phi.b.clone()])?;
                for _ in 0..self.cfg.training.ppo.epochs {
                    let g = self.policy_gradients(std::slice::from_ref(&self.phi.b), &batches)?;
                    adam.ascend(&mut [&mut self.phi.b.0[..]], &[&g[0]])?;
                }
                self.fit_critics(&prefs, &batches)?;
                let rec = LogRecord::Iteration {
                    stage: Stage::Warmup,
                    iteration: it,
                    env_steps: self.env_steps,
                    preferences: vec![w.weights().to_vec()],
                    scalarized_returns: Self::scalarized(&prefs, &batches)?,
                    wall_time_s: started.elapsed().as_secs_f64(),
                };
                on_event(TrainEvent::Log(&rec))?;
                self.iteration += 1;
            }
        }
        let final_return = self.evaluate_scalarized(&self.phi.b, &w)?;
        self.phi.b = reset_exploration(&self.phi.b, &self.policy)?;
        let rec = LogRecord::Warmup {
            iterations: g_w,
            initial_return,
            final_return,
            improvement: final_return - initial_return,
        };
        on_event(TrainEvent::Log(&rec))
    }

    /// One Pareto-set-learning iteration: sample `K` preferences, roll out
    /// their generated policies, pull the surrogate gradients back through
    /// the hypernet and take Adam steps on their mean.
    pub fn psl_step(&mut self, adam: &mut AdamState) -> Result<LogRecord> {
        let started = Instant::now();
        let m = self.env.spec().num_objectives;
        let k = self.cfg.training.k;
        let prefs = (0..k)
            .map(|_| sample_preference(&mut self.pref_rng, m))
            .collect::<Result<Vec<_>>>()?;
        let thetas = self.generate(&prefs)?;
        let batches = self.collect(PSL_STREAM, &prefs, &thetas)?;
        for epoch in 0..self.cfg.training.ppo.epochs {
            let thetas = if epoch == 0 {
                thetas.clone()
            } else {
                self.generate(&prefs)?
            };
            let g_theta = self.policy_gradients(&thetas, &batches)?;
            let mut total = HypernetGrad::zeros_like(&self.phi);
            // Reduced in index order, independent of the worker count.
            for (w, g) in prefs.iter().zip(&g_theta) {
                hypernet_vjp_into(&self.phi, w, g, &mut total)?;
            }
            total.scale(1.0 / k as f64);
            let HypernetParams { w, mu, b, .. } = &mut self.phi;
            adam.ascend(
                &mut [&mut w[..], &mut mu.0[..], &mut b.0[..]],
                &[&total.w, &total.mu, &total.b],
            )?;
        }
        self.phi
            .w
            .iter()
            .chain(self.phi.mu.iter())
            .chain(self.phi.b.iter())
            .try_for_each(|v| {
                if v.is_finite() {
                    Ok(())
                } else {
                    Err(Error::NonFinite(format!(
                        "hypernet parameters after iteration {}",
                        self.iteration
                    )))
                }
            })?;
        self.fit_critics(&prefs, &batches)?;
        let rec = LogRecord::Iteration {
            stage: Stage::Psl,
            iteration: self.iteration,
            env_steps: self.env_steps,
            preferences: prefs.iter().map(|w| w.weights().to_vec()).collect(),
            scalarized_returns: Self::scalarized(&prefs, &batches)?,
            wall_time_s: started.elapsed().as_secs_f64(),
        };
        self.iteration += 1;
        Ok(rec)
    }

    fn generate(&self, prefs: &[Preference]) -> Result<Vec<FlatParams>> {
        prefs.iter().map(|w| hypernet_forward(&self.phi, w)).collect()
    }

    /// Front of the current hypernet on the evaluation grid.
    pub fn evaluate(&self, reference: &[f64]) -> Result<(ParetoFront, HvReport)> {
        let grid = self.cfg.evaluation_grid()?;
        let front = self.pool.install(|| {
            evaluate_hypernet(
                &self.phi,
                &self.policy,
                &self.env,
                &grid,
                self.cfg.evaluation.settings(),
            )
        })?;
        let hv = hypervolume_report(&front.non_dominated_points(), reference)?;
        Ok((front, hv))
    }

    /// Runs both stages and a final evaluation.
    pub fn run(mut self, on_event: &mut dyn FnMut(TrainEvent<'_>) -> Result<()>) -> Result<TrainOutcome> {
        let mut log = Vec::new();
        let mut record = |ev: TrainEvent<'_>, log: &mut Vec<LogRecord>| -> Result<()> {
            if let TrainEvent::Log(r) = &ev {
                log.push((*r).clone());
            }
            on_event(ev)
        };
        let reference = self.cfg.reference_point()?;
        let (g_w, g_psl) = self.stage_iterations()?;
        self.warmup(g_w, &mut |ev| record(ev, &mut log))?;
        let t = &self.cfg.training;
        let mut adam = AdamState::new(t.eta, &[self.phi.w.len(), self.phi.mu.len(), self.phi.b.len()], t.adam)?;
        let every = (g_psl / 20).max(1);
        let mut last: Option<(ParetoFront, HvReport)> = None;
        let (eta, schedule) = (t.eta, t.lr_schedule);
        for it in 0..g_psl {
            adam.lr = schedule.lr(eta, it, g_psl);
            let rec = self.psl_step(&mut adam)?;
            record(TrainEvent::Log(&rec), &mut log)?;
            let is_last = it + 1 == g_psl;
            if is_last || (self.cfg.evaluation.snapshots && (it + 1) % every == 0) {
                let (front, hv) = self.evaluate(&reference)?;
                let snap = LogRecord::Snapshot {
                    iteration: self.iteration,
                    env_steps: self.env_steps,
                    hypervolume: hv.hypervolume,
                    counted: hv.counted,
                    excluded: hv.excluded,
                    non_dominated: front.non_dominated().count(),
                };
                record(TrainEvent::Log(&snap), &mut log)?;
                let digest = self.rng_digest();
                record(
                    TrainEvent::Snapshot {
                        iteration: self.iteration,
                        env_steps: self.env_steps,
                        phi: &self.phi,
                        front: &front,
                        hv,
                        rng_digest: &digest,
                    },
                    &mut log,
                )?;
                last = Some((front, hv));
            }
        }
        let (front, hv) = match last {
            Some(x) => x,
            None => self.evaluate(&reference)?,
        };
        Ok(TrainOutcome {
            rng_digest: self.rng_digest(),
            phi: self.phi,
            policy: self.policy,
            log,
            front,
            hv,
            reference_point: reference,
            env_steps: self.env_steps,
            stage_iterations: (g_w, g_psl),
        })
    }
}

/// Validates `cfg`, trains, and evaluates the final hypernet.
pub fn train(cfg: &TrainConfig, on_event: &mut dyn FnMut(TrainEvent<'_>) -> Result<()>) -> Result<TrainOutcome> {
    Trainer::new(cfg.clone())?.run(on_event)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::MoLqrParams;

    pub(crate) fn small_config(total_steps: u64, alpha: f64) -> TrainConfig {
        TrainConfig {
            schema_version: SCHEMA_VERSION,
            environment: EnvConfig::Lqr(MoLqrParams {
                horizon: 10,
                ..MoLqrParams::default()
            }),
            hypernet: HypernetConfig {
                d: 3,
                embedding_hidden: vec![8],
                policy_hidden: vec![4],
                log_std_floor: None,
                mean_bound: None,
            },
            training: TrainingConfig {
                total_steps,
                alpha,
                k: 3,
                eta: 1e-3,
                lr_schedule: LrSchedule::Constant,
                seed: 7,
                rollouts_per_preference: 1,
                reward_scale: None,
                workers: 1,
                adam: AdamConfig::default(),
                ppo: PpoConfig {
                    critic_hidden: vec![8],
                    ..PpoConfig::default()
                },
            },
            evaluation: EvaluationConfig {
                grid_resolution: 10,
                episodes: 4,
                snapshots: false,
                ..EvaluationConfig::default()
            },
        }
    }

    #[test]
    fn linear_schedule_decays_to_last_step() {
        assert_eq!(LrSchedule::Constant.lr(0.1, 7, 10), 0.1);
        assert_eq!(LrSchedule::Linear.lr(0.1, 0, 4), 0.1);
        assert_eq!(LrSchedule::Linear.lr(0.1, 2, 4), 0.05);
        assert_eq!(LrSchedule::Linear.lr(0.1, 3, 4), 0.025);
        let cfg: LrSchedule = serde_json::from_str("\"linear\"").unwrap();
        assert_eq!(cfg, LrSchedule::Linear);
    }

    #[test]
    fn stage_iteration_examples() {
        assert_eq!(compute_stage_iterations(1000, 0.15, 5, 10).unwrap(), (15, 17));
        assert_eq!(compute_stage_iterations(1000, 0.0, 5, 10).unwrap().0, 0);
        assert!(compute_stage_iterations(1000, 0.15, 5, 0).is_err());
        assert!(compute_stage_iterations(1000, 1.0, 5, 10).is_err());
    }

    #[test]
    fn stream_seeds_differ_per_part() {
        let a = stream_seed(1, &[2, 0, 0]);
        assert_ne!(a, stream_seed(1, &[2, 0, 1]));
        assert_ne!(a, stream_seed(1, &[2, 1, 0]));
        assert_ne!(a, stream_seed(2, &[2, 0, 0]));
        assert_eq!(a, stream_seed(1, &[2, 0, 0]));
    }

    #[test]
    fn validation_rejects_bad_configs() {
        let mut c = small_config(2000, 0.15);
        c.validate().unwrap();
        c.training.k = 0;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = small_config(2000, 0.15);
        c.training.total_steps = 20;
        assert!(c.validate().is_err());
        let mut c = small_config(2000, 0.15);
        c.hypernet.d = 1000;
        assert!(c.validate().is_err());
        let mut c = small_config(2000, 0.15);
        c.schema_version = 9;
        assert!(c.validate().is_err());
    }

    #[test]
    fn warmup_only_touches_b() {
        let cfg = small_config(2000, 0.5);
        let mut tr = Trainer::new(cfg).unwrap();
        let before = tr.phi().clone();
        tr.warmup(5, &mut |_| Ok(())).unwrap();
        assert!(tr.phi().w_is_zero());
        assert_eq!(tr.phi().mu, before.mu);
        assert_ne!(tr.phi().b, before.b);
        assert!(tr.phi().b[tr.policy().log_std_slice().range()]
            .iter()
            .all(|v| *v == 0.0));
        assert_eq!(tr.env_steps(), 50);
    }

    #[test]
    fn first_psl_step_leaves_mu_when_w_is_zero() {
        let mut cfg = small_config(2000, 0.0);
        cfg.training.ppo.epochs = 1;
        let mut tr = Trainer::new(cfg).unwrap();
        let mu = tr.phi().mu.clone();
        let sizes = [tr.phi().w.len(), tr.phi().mu.len(), tr.phi().b.len()];
        let mut adam = AdamState::new(1e-3, &sizes, AdamConfig::default()).unwrap();
        tr.psl_step(&mut adam).unwrap();
        assert_eq!(tr.phi().mu, mu);
        assert!(!tr.phi().w_is_zero());
    }
}
