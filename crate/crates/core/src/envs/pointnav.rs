//! Planar point navigation towards several goals at once.
//!
//! The agent moves by its action, clipped to a maximum speed, and objective
//! `i` rewards closeness to goal `g_i` after every move.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::OracleFront;
use crate::error::{check_dim, Error, Result};
use crate::metrics::dominated_flags;
use crate::momdp::{Environment, MomdpSpec, Preference, Step};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMetric {
    /// `r_i = -|p - g_i|`.
    #[default]
    Euclidean,
    /// `r_i = -|p - g_i|^2`.
    Squared,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MoPointNavParams {
    pub goals: Vec<[f64; 2]>,
    pub start: [f64; 2],
    pub max_speed: f64,
    pub horizon: usize,
    pub gamma: f64,
    pub metric: DistanceMetric,
}

impl Default for MoPointNavParams {
    /// Three goals on the unit circle, start at their centroid.
    fn default() -> Self {
        Self::triangle()
    }
}

impl MoPointNavParams {
    pub fn triangle() -> Self {
        let s = 3f64.sqrt() / 2.0;
        Self {
            goals: vec![[0.0, 1.0], [-s, -0.5], [s, -0.5]],
            start: [0.0, 0.0],
            max_speed: 0.25,
            horizon: 30,
            gamma: 0.99,
            metric: DistanceMetric::Euclidean,
        }
    }

    /// Two goals symmetric about the origin, start at the origin.
    pub fn segment() -> Self {
        Self {
            goals: vec![[-1.0, 0.0], [1.0, 0.0]],
            ..Self::triangle()
        }
    }
}

#[derive(Debug, Clone)]
pub struct MoPointNavEnv {
    params: MoPointNavParams,
    spec: MomdpSpec,
    position: [f64; 2],
    t: usize,
    // Resets are deterministic; kept to satisfy the seeding contract.
    _rng: ChaCha8Rng,
}

impl MoPointNavEnv {
    pub fn new(params: MoPointNavParams) -> Result<Self> {
        if !(params.max_speed > 0.0 && params.max_speed.is_finite()) {
            return Err(Error::InvalidArgument("max_speed must be positive".into()));
        }
        if params
            .goals
            .iter()
            .flatten()
            .chain(&params.start)
            .any(|v| !v.is_finite())
        {
            return Err(Error::InvalidArgument("goals and start must be finite".into()));
        }
        let spec = MomdpSpec {
            state_dim: 2,
            action_dim: 2,
            num_objectives: params.goals.len(),
            gamma: params.gamma,
            horizon: params.horizon,
        };
        spec.validate()?;
        Ok(Self {
            position: params.start,
            params,
            spec,
            t: 0,
            _rng: ChaCha8Rng::seed_from_u64(0),
        })
    }

    pub fn params(&self) -> &MoPointNavParams {
        &self.params
    }

    fn rewards(&self, p: [f64; 2]) -> Vec<f64> {
        self.params
            .goals
            .iter()
            .map(|g| {
                let d2 = (p[0] - g[0]).powi(2) + (p[1] - g[1]).powi(2);
                match self.params.metric {
                    DistanceMetric::Euclidean => -d2.sqrt(),
                    DistanceMetric::Squared => -d2,
                }
            })
            .collect()
    }
}

/// Scales `a` down to norm `max` if it is longer.
fn clip_norm(a: [f64; 2], max: f64) -> [f64; 2] {
    let norm = a[0].hypot(a[1]);
    if norm > max {
        [a[0] * max / norm, a[1] * max / norm]
    } else {
        a
    }
}

impl Environment for MoPointNavEnv {
    fn spec(&self) -> &MomdpSpec {
        &self.spec
    }

    fn seed(&mut self, seed: u64) {
        self._rng = ChaCha8Rng::seed_from_u64(seed);
    }

    fn reset(&mut self) -> Vec<f64> {
        self.position = self.params.start;
        self.t = 0;
        self.position.to_vec()
    }

    fn reset_to(&mut self, state: &[f64]) -> Result<Vec<f64>> {
        check_dim("pointnav start", 2, state.len())?;
        self.position = [state[0], state[1]];
        self.t = 0;
        Ok(self.position.to_vec())
    }

    fn step(&mut self, action: &[f64]) -> Result<Step> {
        check_dim("pointnav action", 2, action.len())?;
        if action.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("action {action:?}")));
        }
        if self.t >= self.spec.horizon {
            return Err(Error::InvalidArgument("step called after episode end".into()));
        }
        let a = clip_norm([action[0], action[1]], self.params.max_speed);
        self.position = [self.position[0] + a[0], self.position[1] + a[1]];
        self.t += 1;
        Ok(Step {
            state: self.position.to_vec(),
            reward: self.rewards(self.position),
            done: self.t >= self.spec.horizon,
        })
    }

    /// The start is fixed, so one episode is exact.
    fn evaluation_starts(&self, _episodes: usize, _seed: u64) -> Vec<Vec<f64>> {
        vec![self.params.start.to_vec()]
    }
}

/// Target points `sum_i lambda_i g_i` for every `lambda` in `grid`.
pub fn targets_from_grid(params: &MoPointNavParams, grid: &[Preference]) -> Result<Vec<(Preference, [f64; 2])>> {
    grid.iter()
        .map(|w| {
            check_dim("pointnav target weights", params.goals.len(), w.dim())?;
            let mut c = [0.0; 2];
            for (wi, g) in w.weights().iter().zip(&params.goals) {
                c[0] += wi * g[0];
                c[1] += wi * g[1];
            }
            Ok((w.clone(), c))
        })
        .collect()
}

/// Discounted returns of "head for `target` at full speed, then hold".
pub fn go_to_target_returns(params: &MoPointNavParams, target: [f64; 2]) -> Result<Vec<f64>> {
    let mut env = MoPointNavEnv::new(params.clone())?;
    let mut p = env.reset();
    let mut total = vec![0.0; params.goals.len()];
    let mut discount = 1.0;
    loop {
        let a = clip_norm([target[0] - p[0], target[1] - p[1]], params.max_speed);
        let step = env.step(&a)?;
        for (acc, r) in total.iter_mut().zip(&step.reward) {
            *acc += discount * r;
        }
        discount *= params.gamma;
        p = step.state;
        if step.done {
            return Ok(total);
        }
    }
}

/// Grid oracle over the go-to-target policy family, dominance-filtered.
/// Targets are tagged with the simplex weights that generated them.
pub fn pointnav_oracle_front(params: &MoPointNavParams, targets: &[(Preference, [f64; 2])]) -> Result<OracleFront> {
    if targets.is_empty() {
        return Err(Error::InvalidArgument("empty target grid".into()));
    }
    let returns = targets
        .iter()
        .map(|(_, c)| go_to_target_returns(params, *c))
        .collect::<Result<Vec<_>>>()?;
    let dominated = dominated_flags(&returns)?;
    let entries = targets
        .iter()
        .zip(returns)
        .zip(dominated)
        .filter(|(_, d)| !d)
        .map(|(((w, _), j), _)| (w.clone(), j))
        .collect();
    Ok(OracleFront {
        entries,
        method: "go-to-target-grid".into(),
    })
}
