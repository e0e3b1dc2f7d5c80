//! Small tanh MLPs over flat parameter vectors, with hand-written reverse
//! passes, and the diagonal-Gaussian policy head built on top of them.

use std::ops::{Deref, DerefMut, Range};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// A flat parameter vector. Its meaning comes from the layout that owns it.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FlatParams(pub Vec<f64>);

impl FlatParams {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn ensure_finite(&self, what: &str) -> Result<()> {
        match self.0.iter().position(|v| !v.is_finite()) {
            None => Ok(()),
            Some(i) => Err(Error::NonFinite(format!("{what}[{i}] = {}", self.0[i]))),
        }
    }
}

impl Deref for FlatParams {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for FlatParams {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for FlatParams {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// A named contiguous block `[offset, offset + rows * cols)` of a flat vector.
/// Matrices are row-major with `rows` outputs and `cols` inputs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorSlice {
    pub name: String,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl TensorSlice {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Fully connected network: tanh on hidden layers, identity on the output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct MlpLayout {
    sizes: Vec<usize>,
    slices: Vec<TensorSlice>,
    num_params: usize,
}

impl TryFrom<Vec<usize>> for MlpLayout {
    type Error = Error;

    fn try_from(sizes: Vec<usize>) -> Result<Self> {
        Self::new(&sizes)
    }
}

impl From<MlpLayout> for Vec<usize> {
    fn from(l: MlpLayout) -> Self {
        l.sizes
    }
}

/// Post-activation outputs of every layer, input first.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub activations: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("cache always holds the input")
    }
}

impl MlpLayout {
    /// `sizes` lists input, hidden and output widths; at least two entries.
    pub fn new(sizes: &[usize]) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "MLP needs >= 2 positive layer sizes, got {sizes:?}"
            )));
        }
        let mut slices = Vec::with_capacity(2 * (sizes.len() - 1));
        let mut offset = 0;
        for (l, pair) in sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            slices.push(TensorSlice {
                name: format!("layer{l}.weight"),
                offset,
                rows: fan_out,
                cols: fan_in,
            });
            offset += fan_in * fan_out;
            slices.push(TensorSlice {
                name: format!("layer{l}.bias"),
                offset,
                rows: fan_out,
                cols: 1,
            });
            offset += fan_out;
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            slices,
            num_params: offset,
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn slices(&self) -> &[TensorSlice] {
        &self.slices
    }

    pub fn num_params(&self) -> usize {
        self.num_params
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    /// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` for weights and biases.
    pub fn init_params<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut params = vec![0.0; self.num_params];
        for l in 0..self.num_layers() {
            let bound = 1.0 / (self.sizes[l] as f64).sqrt();
            for s in &self.slices[2 * l..2 * l + 2] {
                for p in &mut params[s.range()] {
                    *p = rng.random_range(-bound..bound);
                }
            }
        }
        params
    }

    pub fn forward(&self, params: &[f64], input: &[f64]) -> Vec<f64> {
        let mut x = input.to_vec();
        for l in 0..self.num_layers() {
            x = self.layer(params, l, &x);
        }
        x
    }

    pub fn forward_cached(&self, params: &[f64], input: &[f64]) -> ForwardCache {
        let mut activations = Vec::with_capacity(self.sizes.len());
        activations.push(input.to_vec());
        for l in 0..self.num_layers() {
            let next = self.layer(params, l, activations.last().unwrap());
            activations.push(next);
        }
        ForwardCache { activations }
    }

    fn layer(&self, params: &[f64], l: usize, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(params.len(), self.num_params);
        let ws = &self.slices[2 * l];
        let bs = &self.slices[2 * l + 1];
        let w = &params[ws.range()];
        let b = &params[bs.range()];
        let hidden = l + 1 < self.num_layers();
        let mut out = b.to_vec();
        for (j, o) in out.iter_mut().enumerate() {
            let row = &w[j * ws.cols..(j + 1) * ws.cols];
            let z = *o + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
            *o = if hidden { z.tanh() } else { z };
        }
        out
    }

    /// Accumulates `d_output^T dOut/dParams` into `grad` and returns the
    /// gradient with respect to the input.
    pub fn backward(&self, params: &[f64], cache: &ForwardCache, d_output: &[f64], grad: &mut [f64]) -> Vec<f64> {
        debug_assert_eq!(grad.len(), self.num_params);
        let mut delta = d_output.to_vec();
        for l in (0..self.num_layers()).rev() {
            let ws = &self.slices[2 * l];
            let bs = &self.slices[2 * l + 1];
            if l + 1 < self.num_layers() {
                for (d, a) in delta.iter_mut().zip(&cache.activations[l + 1]) {
                    *d *= 1.0 - a * a;
                }
            }
            let input = &cache.activations[l];
            for (g, d) in grad[bs.range()].iter_mut().zip(&delta) {
                *g += d;
            }
            let gw = &mut grad[ws.range()];
            for (j, d) in delta.iter().enumerate() {
                if *d == 0.0 {
                    continue;
                }
                for (g, x) in gw[j * ws.cols..(j + 1) * ws.cols].iter_mut().zip(input) {
                    *g += d * x;
                }
            }
            let w = &params[ws.range()];
            let mut prev = vec![0.0; ws.cols];
            for (j, d) in delta.iter().enumerate() {
                for (p, wv) in prev.iter_mut().zip(&w[j * ws.cols..(j + 1) * ws.cols]) {
                    *p += d * wv;
                }
            }
            delta = prev;
        }
        delta
    }
}

/// Diagonal Gaussian policy: an MLP for the mean plus a trailing,
/// state-independent `log_std` block.
///
/// An optional floor clamps the effective `log_std` from below; entries under
/// the floor get zero gradient. An optional bound squashes the mean to
/// `bound * tanh(out)` so it cannot drift far past a clipped action range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyLayout {
    mlp: MlpLayout,
    log_std: TensorSlice,
    #[serde(default)]
    log_std_floor: Option<f64>,
    #[serde(default)]
    mean_bound: Option<f64>,
}

impl PolicyLayout {
    pub fn new(state_dim: usize, hidden: &[usize], action_dim: usize) -> Result<Self> {
        let mut sizes = vec![state_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(action_dim);
        Self::from_mlp(MlpLayout::new(&sizes)?)
    }

    pub fn from_mlp(mlp: MlpLayout) -> Result<Self> {
        let log_std = TensorSlice {
            name: "log_std".into(),
            offset: mlp.num_params(),
            rows: mlp.output_dim(),
            cols: 1,
        };
        Ok(Self {
            mlp,
            log_std,
            log_std_floor: None,
            mean_bound: None,
        })
    }

    pub fn with_log_std_floor(mut self, floor: Option<f64>) -> Result<Self> {
        if let Some(f) = floor {
            if !f.is_finite() {
                return Err(Error::InvalidArgument(format!("log_std floor must be finite, got {f}")));
            }
        }
        self.log_std_floor = floor;
        Ok(self)
    }

    pub fn log_std_floor(&self) -> Option<f64> {
        self.log_std_floor
    }

    pub fn with_mean_bound(mut self, bound: Option<f64>) -> Result<Self> {
        if let Some(b) = bound {
            if !(b > 0.0 && b.is_finite()) {
                return Err(Error::InvalidArgument(format!("mean bound must be positive, got {b}")));
            }
        }
        self.mean_bound = bound;
        Ok(self)
    }

    pub fn mean_bound(&self) -> Option<f64> {
        self.mean_bound
    }

    fn squash_mean(&self, mut out: Vec<f64>) -> Vec<f64> {
        if let Some(b) = self.mean_bound {
            out.iter_mut().for_each(|v| *v = b * v.tanh());
        }
        out
    }

    #[inline]
    fn effective_log_std(&self, ls: f64) -> f64 {
        match self.log_std_floor {
            Some(f) => ls.max(f),
            None => ls,
        }
    }

    pub fn mlp(&self) -> &MlpLayout {
        &self.mlp
    }

    pub fn log_std_slice(&self) -> &TensorSlice {
        &self.log_std
    }

    pub fn num_params(&self) -> usize {
        self.mlp.num_params() + self.log_std.len()
    }

    pub fn state_dim(&self) -> usize {
        self.mlp.input_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.mlp.output_dim()
    }

    /// All slices, network tensors first then `log_std`; they tile `[0, n)`.
    pub fn slices(&self) -> Vec<TensorSlice> {
        let mut s = self.mlp.slices().to_vec();
        s.push(self.log_std.clone());
        s
    }

    /// Network weights from the scaled-uniform scheme, `log_std = 0`.
    pub fn init_params<R: Rng + ?Sized>(&self, rng: &mut R) -> FlatParams {
        let mut p = self.mlp.init_params(rng);
        p.extend(std::iter::repeat_n(0.0, self.log_std.len()));
        FlatParams(p)
    }

    fn check_theta(&self, theta: &[f64]) -> Result<()> {
        check_dim("policy parameters", self.num_params(), theta.len())
    }

    /// Mean and standard deviation of the action distribution.
    pub fn forward(&self, theta: &[f64], state: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_theta(theta)?;
        check_dim("policy state", self.state_dim(), state.len())?;
        if let Some(i) = theta.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("theta[{i}] = {}", theta[i])));
        }
        Ok(self.forward_unchecked(theta, state))
    }

    /// Forward pass without validation; callers check `theta` once per rollout.
    pub(crate) fn forward_unchecked(&self, theta: &[f64], state: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mean = self.mean_unchecked(theta, state);
        let std = theta[self.log_std.range()]
            .iter()
            .map(|s| self.effective_log_std(*s).exp())
            .collect();
        (mean, std)
    }

    fn mean_unchecked(&self, theta: &[f64], state: &[f64]) -> Vec<f64> {
        self.squash_mean(self.mlp.forward(&theta[..self.mlp.num_params()], state))
    }

    /// Adds `scale * d log pi(action | state) / d theta` into `grad` and
    /// returns the log-probability.
    pub fn accumulate_grad_log_prob(
        &self,
        theta: &[f64],
        state: &[f64],
        action: &[f64],
        scale: f64,
        grad: &mut [f64],
    ) -> f64 {
        let split = self.mlp.num_params();
        let cache = self.mlp.forward_cached(&theta[..split], state);
        let mean = self.squash_mean(cache.output().to_vec());
        let log_std = &theta[self.log_std.range()];
        let mut d_mean = Vec::with_capacity(mean.len());
        let mut lp = 0.0;
        for (k, ((&mu, &raw), &a)) in mean.iter().zip(log_std).zip(action).enumerate() {
            let ls = self.effective_log_std(raw);
            let inv_var = (-2.0 * ls).exp();
            let diff = a - mu;
            lp += gaussian_term(diff, ls, inv_var);
            let d = scale * diff * inv_var;
            d_mean.push(match self.mean_bound {
                Some(b) => d * (b - mu * mu / b),
                None => d,
            });
            if ls == raw {
                grad[self.log_std.offset + k] += scale * (diff * diff * inv_var - 1.0);
            }
        }
        if scale != 0.0 {
            self.mlp.backward(&theta[..split], &cache, &d_mean, &mut grad[..split]);
        }
        lp
    }

    /// Same arithmetic as [`PolicyLayout::accumulate_grad_log_prob`], so a
    /// probability ratio against an unchanged `theta` is exactly one.
    pub(crate) fn log_prob_unchecked(&self, theta: &[f64], state: &[f64], action: &[f64]) -> f64 {
        let mean = self.mean_unchecked(theta, state);
        self.log_prob_given_mean(&mean, theta, action)
    }

    /// Log-probability of `action` given an already computed mean.
    pub(crate) fn log_prob_given_mean(&self, mean: &[f64], theta: &[f64], action: &[f64]) -> f64 {
        mean.iter()
            .zip(&theta[self.log_std.range()])
            .zip(action)
            .map(|((&mu, &raw), &a)| {
                let ls = self.effective_log_std(raw);
                gaussian_term(a - mu, ls, (-2.0 * ls).exp())
            })
            .sum()
    }

    /// Log-probability of `action` under the current parameters.
    pub fn log_prob(&self, theta: &[f64], state: &[f64], action: &[f64]) -> Result<f64> {
        let (mean, std) = self.forward(theta, state)?;
        log_prob(&mean, &std, action)
    }
}

#[inline]
fn gaussian_term(diff: f64, log_std: f64, inv_var: f64) -> f64 {
    -0.5 * diff * diff * inv_var - log_std - 0.5 * LN_2PI
}

/// Diagonal-Gaussian log density summed over action dimensions.
pub fn log_prob(mean: &[f64], std: &[f64], action: &[f64]) -> Result<f64> {
    check_dim("log_prob std", mean.len(), std.len())?;
    check_dim("log_prob action", mean.len(), action.len())?;
    if let Some(s) = std.iter().find(|s| !(**s > 0.0)) {
        return Err(Error::InvalidArgument(format!(
            "standard deviation must be positive, got {s}"
        )));
    }
    Ok(mean
        .iter()
        .zip(std)
        .zip(action)
        .map(|((m, s), a)| {
            let z = (a - m) / s;
            -0.5 * z * z - s.ln() - 0.5 * LN_2PI
        })
        .sum())
}

/// Gradient of `log pi(action | state)` with respect to all of `theta`.
pub fn policy_grad_logprob(layout: &PolicyLayout, theta: &[f64], state: &[f64], action: &[f64]) -> Result<FlatParams> {
    layout.check_theta(theta)?;
    check_dim("policy state", layout.state_dim(), state.len())?;
    check_dim("policy action", layout.action_dim(), action.len())?;
    let mut grad = vec![0.0; theta.len()];
    layout.accumulate_grad_log_prob(theta, state, action, 1.0, &mut grad);
    Ok(FlatParams(grad))
}

/// Sets the `log_std` block to zero (unit standard deviation), leaving every
/// other entry untouched.
pub fn reset_exploration(theta: &FlatParams, layout: &PolicyLayout) -> Result<FlatParams> {
    layout.check_theta(theta)?;
    let mut out = theta.clone();
    out[layout.log_std.range()].fill(0.0);
    Ok(out)
}
