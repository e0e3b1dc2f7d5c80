//! Multi-objective linear-quadratic regulator.
//!
//! `x' = A x + B a`, with one quadratic cost per objective. The reward for
//! objective `i` is `-(x^T Q_i x + a^T R_i a)`, evaluated at the state the
//! action was taken in.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::OracleFront;
use crate::error::{check_dim, Error, Result};
use crate::metrics::dominated_flags;
use crate::momdp::{Environment, MomdpSpec, Preference, Step};

type Matrix = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MoLqrParams {
    pub a: Matrix,
    pub b: Matrix,
    pub q: Vec<Matrix>,
    pub r: Vec<Matrix>,
    pub sigma_init: f64,
    pub horizon: usize,
    pub gamma: f64,
}

impl Default for MoLqrParams {
    /// Two-state, two-action, two-objective instance. Objective `i` weighs
    /// state `i` and action `j != i` heavily (0.9) and the rest lightly (0.1),
    /// so regulating one coordinate cheaply is expensive for the other
    /// objective.
    fn default() -> Self {
        let xi = 0.1;
        Self {
            a: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            b: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            q: vec![
                vec![vec![1.0 - xi, 0.0], vec![0.0, xi]],
                vec![vec![xi, 0.0], vec![0.0, 1.0 - xi]],
            ],
            r: vec![
                vec![vec![xi, 0.0], vec![0.0, 1.0 - xi]],
                vec![vec![1.0 - xi, 0.0], vec![0.0, xi]],
            ],
            sigma_init: 1.0,
            horizon: 50,
            gamma: 0.95,
        }
    }
}

fn to_matrix(name: &str, rows: &Matrix) -> Result<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || c == 0 || rows.iter().any(|row| row.len() != c) {
        return Err(Error::InvalidArgument(format!(
            "matrix `{name}` must be a non-empty rectangular array"
        )));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

fn check_symmetric(name: &str, m: &DMatrix<f64>) -> Result<()> {
    if !m.is_square() {
        return Err(Error::InvalidArgument(format!("`{name}` must be square")));
    }
    let asym = (m - m.transpose()).abs().max();
    if asym > 1e-12 * m.abs().max().max(1.0) {
        return Err(Error::InvalidArgument(format!("`{name}` must be symmetric")));
    }
    Ok(())
}

fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.clone().symmetric_eigen().eigenvalues.min()
}

#[derive(Debug, Clone)]
struct Model {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    q: Vec<DMatrix<f64>>,
    r: Vec<DMatrix<f64>>,
}

impl Model {
    fn from_params(p: &MoLqrParams) -> Result<Self> {
        let a = to_matrix("a", &p.a)?;
        let b = to_matrix("b", &p.b)?;
        let n = a.nrows();
        if !a.is_square() {
            return Err(Error::InvalidArgument("`a` must be square".into()));
        }
        check_dim("lqr B rows", n, b.nrows())?;
        let k = b.ncols();
        if p.q.len() != p.r.len() {
            return Err(Error::InvalidArgument(format!(
                "{} state-cost matrices but {} action-cost matrices",
                p.q.len(),
                p.r.len()
            )));
        }
        if p.q.len() < 2 {
            return Err(Error::InvalidArgument("MO-LQR needs at least two objectives".into()));
        }
        let mut q = Vec::new();
        let mut r = Vec::new();
        for (i, (qi, ri)) in p.q.iter().zip(&p.r).enumerate() {
            let qm = to_matrix("q", qi)?;
            let rm = to_matrix("r", ri)?;
            check_dim("lqr Q size", n, qm.nrows())?;
            check_dim("lqr R size", k, rm.nrows())?;
            check_symmetric("q", &qm)?;
            check_symmetric("r", &rm)?;
            if min_eigenvalue(&qm) < -1e-12 {
                return Err(Error::InvalidArgument(format!(
                    "state cost Q_{i} is not positive semi-definite"
                )));
            }
            if min_eigenvalue(&rm) <= 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "action cost R_{i} is not positive definite"
                )));
            }
            q.push(qm);
            r.push(rm);
        }
        Ok(Self { a, b, q, r })
    }

    fn scalarized(&self, pref: &Preference) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        check_dim("lqr preference", self.q.len(), pref.dim())?;
        let mut q = DMatrix::zeros(self.a.nrows(), self.a.nrows());
        let mut r = DMatrix::zeros(self.b.ncols(), self.b.ncols());
        for ((w, qi), ri) in pref.weights().iter().zip(&self.q).zip(&self.r) {
            q += qi * *w;
            r += ri * *w;
        }
        Ok((q, r))
    }
}

#[derive(Debug, Clone)]
pub struct MoLqrEnv {
    params: MoLqrParams,
    model: Model,
    spec: MomdpSpec,
    state: Vec<f64>,
    t: usize,
    rng: ChaCha8Rng,
}

impl MoLqrEnv {
    pub fn new(params: MoLqrParams) -> Result<Self> {
        let model = Model::from_params(&params)?;
        if !(params.sigma_init > 0.0) {
            return Err(Error::InvalidArgument("sigma_init must be positive".into()));
        }
        let spec = MomdpSpec {
            state_dim: model.a.nrows(),
            action_dim: model.b.ncols(),
            num_objectives: model.q.len(),
            gamma: params.gamma,
            horizon: params.horizon,
        };
        spec.validate()?;
        Ok(Self {
            state: vec![0.0; spec.state_dim],
            params,
            model,
            spec,
            t: 0,
            rng: ChaCha8Rng::seed_from_u64(0),
        })
    }

    pub fn params(&self) -> &MoLqrParams {
        &self.params
    }

    pub fn state(&self) -> &[f64] {
        &self.state
    }

    /// Costs `x^T Q_i x + a^T R_i a` for every objective.
    fn costs(&self, x: &[f64], a: &[f64]) -> Vec<f64> {
        let quad = |m: &DMatrix<f64>, v: &[f64]| -> f64 {
            let mut s = 0.0;
            for i in 0..v.len() {
                for j in 0..v.len() {
                    s += v[i] * m[(i, j)] * v[j];
                }
            }
            s
        };
        self.model
            .q
            .iter()
            .zip(&self.model.r)
            .map(|(q, r)| quad(q, x) + quad(r, a))
            .collect()
    }
}

impl Environment for MoLqrEnv {
    fn spec(&self) -> &MomdpSpec {
        &self.spec
    }

    fn seed(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }

    fn reset(&mut self) -> Vec<f64> {
        let sigma = self.params.sigma_init;
        let rng = &mut self.rng;
        self.state = (0..self.spec.state_dim)
            .map(|_| sigma * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
            .collect();
        self.t = 0;
        self.state.clone()
    }

    fn reset_to(&mut self, state: &[f64]) -> Result<Vec<f64>> {
        check_dim("lqr initial state", self.spec.state_dim, state.len())?;
        self.state = state.to_vec();
        self.t = 0;
        Ok(self.state.clone())
    }

    fn step(&mut self, action: &[f64]) -> Result<Step> {
        check_dim("lqr action", self.spec.action_dim, action.len())?;
        if action.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("action {action:?}")));
        }
        if self.t >= self.spec.horizon {
            return Err(Error::InvalidArgument("step called after episode end".into()));
        }
        let reward = self.costs(&self.state, action).into_iter().map(|c| -c).collect();
        let (a, b) = (&self.model.a, &self.model.b);
        let next: Vec<f64> = (0..self.spec.state_dim)
            .map(|i| {
                let ax: f64 = (0..a.ncols()).map(|j| a[(i, j)] * self.state[j]).sum();
                let bu: f64 = (0..b.ncols()).map(|j| b[(i, j)] * action[j]).sum();
                ax + bu
            })
            .collect();
        self.state = next;
        self.t += 1;
        Ok(Step {
            state: self.state.clone(),
            reward,
            done: self.t >= self.spec.horizon,
        })
    }

    /// Antithetic Gaussian starts whitened so their second moment equals
    /// `sigma_init^2 I` exactly. Any policy whose return is quadratic in the
    /// initial state (every linear controller) is then evaluated without
    /// sampling error.
    fn evaluation_starts(&self, episodes: usize, seed: u64) -> Vec<Vec<f64>> {
        let p = self.spec.state_dim;
        let half = episodes.div_ceil(2).max(p);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut samples: Vec<DVector<f64>> = Vec::with_capacity(2 * half);
        for _ in 0..half {
            let z = DVector::from_fn(p, |_, _| {
                <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)
            });
            samples.push(-&z);
            samples.push(z);
        }
        let n = samples.len() as f64;
        let second = samples
            .iter()
            .fold(DMatrix::zeros(p, p), |acc, z| acc + z * z.transpose())
            / n;
        let chol = second
            .cholesky()
            .expect("sample second moment of >= p antithetic draws is positive definite");
        let l = chol.l();
        samples
            .iter()
            .map(|z| {
                let w = l.solve_lower_triangular(z).expect("cholesky factor is invertible");
                w.iter().map(|v| v * self.params.sigma_init).collect()
            })
            .collect()
    }
}

/// Optimal time-varying controller for one preference and its exact
/// per-objective returns.
#[derive(Debug, Clone)]
pub struct LqrOracleEntry {
    pub preference: Preference,
    /// Feedback gains `K_t`, `a_t = -K_t x_t`, for `t = 0..T`.
    pub gains: Vec<DMatrix<f64>>,
    /// Expected discounted returns (negative costs), one per objective.
    pub returns: Vec<f64>,
}

impl LqrOracleEntry {
    pub fn action(&self, t: usize, x: &[f64]) -> Vec<f64> {
        let k = &self.gains[t];
        (0..k.nrows())
            .map(|i| -(0..k.ncols()).map(|j| k[(i, j)] * x[j]).sum::<f64>())
            .collect()
    }
}

/// Finite-horizon discounted Riccati recursion for the scalarized costs
/// `Q(w) = sum w_i Q_i`, `R(w) = sum w_i R_i`, followed by exact propagation
/// of each objective's quadratic value under the resulting gains.
pub fn lqr_scalarized_solution(params: &MoLqrParams, pref: &Preference) -> Result<LqrOracleEntry> {
    let model = Model::from_params(params)?;
    let (qw, rw) = model.scalarized(pref)?;
    if rw.clone().cholesky().is_none() {
        return Err(Error::InvalidArgument(format!(
            "scalarized action cost is not positive definite for preference {:?}",
            pref.weights()
        )));
    }
    let (a, b, gamma) = (&model.a, &model.b, params.gamma);
    let horizon = params.horizon;
    let mut p = DMatrix::zeros(a.nrows(), a.nrows());
    let mut gains = vec![DMatrix::zeros(b.ncols(), a.nrows()); horizon];
    for t in (0..horizon).rev() {
        let s = &rw + b.transpose() * &p * b * gamma;
        let rhs = b.transpose() * &p * a * gamma;
        let k = s
            .cholesky()
            .ok_or_else(|| Error::NonFinite("Riccati gain system is not positive definite".into()))?
            .solve(&rhs);
        let closed = a - b * &k;
        p = &qw + k.transpose() * &rw * &k + closed.transpose() * &p * &closed * gamma;
        p = (&p + p.transpose()) * 0.5;
        gains[t] = k;
    }
    let sigma2 = params.sigma_init * params.sigma_init;
    let returns = model
        .q
        .iter()
        .zip(&model.r)
        .map(|(qi, ri)| {
            let mut m = DMatrix::zeros(a.nrows(), a.nrows());
            for k in gains.iter().rev() {
                let closed = a - b * k;
                m = qi + k.transpose() * ri * k + closed.transpose() * &m * &closed * gamma;
            }
            -sigma2 * m.trace()
        })
        .collect();
    Ok(LqrOracleEntry {
        preference: pref.clone(),
        gains,
        returns,
    })
}

/// Riccati oracle over a preference grid, dominance-filtered.
pub fn lqr_oracle_front(params: &MoLqrParams, grid: &[Preference]) -> Result<OracleFront> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty preference grid".into()));
    }
    let solved = grid
        .iter()
        .map(|w| lqr_scalarized_solution(params, w))
        .collect::<Result<Vec<_>>>()?;
    let points: Vec<Vec<f64>> = solved.iter().map(|e| e.returns.clone()).collect();
    let dominated = dominated_flags(&points)?;
    let entries = solved
        .into_iter()
        .zip(dominated)
        .filter(|(_, d)| !d)
        .map(|(e, _)| (e.preference, e.returns))
        .collect();
    Ok(OracleFront {
        entries,
        method: "riccati-exact".into(),
    })
}

/// Monte-Carlo returns of an oracle controller, for cross-checking the exact
/// propagation.
pub fn lqr_monte_carlo_returns(
    params: &MoLqrParams,
    entry: &LqrOracleEntry,
    episodes: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let mut env = MoLqrEnv::new(params.clone())?;
    env.seed(seed);
    let m = env.spec().num_objectives;
    let mut total = vec![0.0; m];
    for _ in 0..episodes {
        let mut x = env.reset();
        let mut discount = 1.0;
        for t in 0..params.horizon {
            let step = env.step(&entry.action(t, &x))?;
            for (acc, r) in total.iter_mut().zip(&step.reward) {
                *acc += discount * r;
            }
            discount *= params.gamma;
            x = step.state;
        }
    }
    Ok(total.into_iter().map(|v| v / episodes as f64).collect())
}
