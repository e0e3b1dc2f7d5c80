//! Multi-objective MDP primitives: preferences on the simplex, trajectories,
//! discounted vector returns and the environment contract.

use rand::Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Absolute tolerance on `sum(weights) == 1`.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// A trade-off vector on the probability simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Preference(Vec<f64>);

impl Preference {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidArgument("empty preference".into()));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::InvalidArgument(format!(
                "preference component {w} is not a finite non-negative number"
            )));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::InvalidArgument(format!(
                "preference components sum to {sum}, expected 1"
            )));
        }
        Ok(Self(weights))
    }

    pub fn weights(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

impl TryFrom<Vec<f64>> for Preference {
    type Error = Error;

    fn try_from(value: Vec<f64>) -> Result<Self> {
        Self::new(value)
    }
}

impl From<Preference> for Vec<f64> {
    fn from(p: Preference) -> Self {
        p.0
    }
}

impl AsRef<[f64]> for Preference {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Static description of a multi-objective MDP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomdpSpec {
    pub state_dim: usize,
    pub action_dim: usize,
    pub num_objectives: usize,
    pub gamma: f64,
    pub horizon: usize,
}

impl MomdpSpec {
    pub fn validate(&self) -> Result<()> {
        if self.state_dim == 0 || self.action_dim == 0 {
            return Err(Error::InvalidArgument(
                "state and action dimensions must be positive".into(),
            ));
        }
        if self.num_objectives < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least 2 objectives, got {}",
                self.num_objectives
            )));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "gamma must lie in (0, 1], got {}",
                self.gamma
            )));
        }
        if self.horizon == 0 {
            return Err(Error::InvalidArgument("horizon must be at least 1".into()));
        }
        Ok(())
    }
}

/// One episode. Slot `t` holds the state the action was taken in, the action,
/// its log-probability under the behaviour policy and the reward that action
/// produced.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub log_probs: Vec<f64>,
    pub rewards: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, state: Vec<f64>, action: Vec<f64>, log_prob: f64, reward: Vec<f64>) {
        self.states.push(state);
        self.actions.push(action);
        self.log_probs.push(log_prob);
        self.rewards.push(reward);
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    /// Number of objectives, taken from the first reward.
    pub fn num_objectives(&self) -> Option<usize> {
        self.rewards.first().map(Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.rewards.len();
        if t == 0 {
            return Err(Error::InvalidArgument("empty trajectory".into()));
        }
        check_dim("trajectory states", t, self.states.len())?;
        check_dim("trajectory actions", t, self.actions.len())?;
        check_dim("trajectory log-probs", t, self.log_probs.len())?;
        let m = self.rewards[0].len();
        for r in &self.rewards {
            check_dim("trajectory reward vector", m, r.len())?;
        }
        Ok(())
    }
}

/// Per-step result of [`Environment::step`].
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub state: Vec<f64>,
    pub reward: Vec<f64>,
    pub done: bool,
}

/// A multi-objective environment. Implementations own a seeded RNG used only
/// by [`Environment::reset`]; stepping is deterministic.
pub trait Environment {
    fn spec(&self) -> &MomdpSpec;

    fn seed(&mut self, seed: u64);

    /// Draws an initial state from the environment's own RNG.
    fn reset(&mut self) -> Vec<f64>;

    /// Starts an episode from the given state.
    fn reset_to(&mut self, state: &[f64]) -> Result<Vec<f64>>;

    fn step(&mut self, action: &[f64]) -> Result<Step>;

    /// Initial states for evaluation episodes. May return fewer than
    /// `episodes` entries when the start distribution is deterministic.
    fn evaluation_starts(&self, episodes: usize, seed: u64) -> Vec<Vec<f64>>;
}

/// Single-trajectory estimate of the discounted vector return.
pub fn discounted_return(traj: &Trajectory, gamma: f64) -> Result<Vec<f64>> {
    if traj.rewards.is_empty() {
        return Err(Error::InvalidArgument("empty trajectory".into()));
    }
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::InvalidArgument(format!("gamma must lie in (0, 1], got {gamma}")));
    }
    let m = traj.rewards[0].len();
    let mut out = vec![0.0; m];
    let mut discount = 1.0;
    for r in &traj.rewards {
        check_dim("reward vector", m, r.len())?;
        for (o, ri) in out.iter_mut().zip(r) {
            *o += discount * ri;
        }
        discount *= gamma;
    }
    Ok(out)
}

pub fn uniform_preference(m: usize) -> Result<Preference> {
    if m < 2 {
        return Err(Error::InvalidArgument(format!(
            "a preference needs at least 2 objectives, got {m}"
        )));
    }
    // Exact for any m: the sum of m copies of 1/m is within 1 ulp-ish of 1.
    Preference::new(vec![1.0 / m as f64; m])
}

/// Draws from the flat Dirichlet distribution (uniform density on the simplex).
pub fn sample_preference<R: Rng + ?Sized>(rng: &mut R, m: usize) -> Result<Preference> {
    if m < 2 {
        return Err(Error::InvalidArgument(format!(
            "a preference needs at least 2 objectives, got {m}"
        )));
    }
    let mut w: Vec<f64> = (0..m).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let sum: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= sum);
    Preference::new(w)
}

/// Simplex-lattice design: every `(k_1/H, ..., k_m/H)` with non-negative
/// integers summing to `H`, ordered lexicographically by `k`.
pub fn preference_grid(m: usize, resolution: usize) -> Result<Vec<Preference>> {
    if resolution == 0 {
        return Err(Error::InvalidArgument("grid resolution must be >= 1".into()));
    }
    if m < 2 {
        return Err(Error::InvalidArgument(format!(
            "a preference needs at least 2 objectives, got {m}"
        )));
    }
    let mut out = Vec::new();
    let mut counts = vec![0usize; m];
    lattice(&mut counts, 0, resolution, resolution, &mut out)?;
    Ok(out)
}

fn lattice(counts: &mut [usize], idx: usize, remaining: usize, h: usize, out: &mut Vec<Preference>) -> Result<()> {
    if idx + 1 == counts.len() {
        counts[idx] = remaining;
        let w = counts.iter().map(|&k| k as f64 / h as f64).collect();
        out.push(Preference::new(w)?);
        return Ok(());
    }
    for k in 0..=remaining {
        counts[idx] = k;
        lattice(counts, idx + 1, remaining - k, h, out)?;
    }
    Ok(())
}

/// Binomial coefficient `C(n, k)` as used for lattice sizes.
pub fn lattice_size(m: usize, resolution: usize) -> usize {
    let n = resolution + m - 1;
    let k = (m - 1).min(resolution);
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

/// Linear scalarization `w . j`.
pub fn scalarize(j: &[f64], w: &Preference) -> Result<f64> {
    check_dim("scalarize", w.dim(), j.len())?;
    Ok(j.iter().zip(w.weights()).map(|(a, b)| a * b).sum())
}
