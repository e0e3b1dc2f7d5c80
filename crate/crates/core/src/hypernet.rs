//! The affine hypernet `theta(w) = W f_mu(w) + b` mapping a preference to a
//! full set of policy parameters, and its pullback.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::momdp::Preference;
use crate::nn::{FlatParams, MlpLayout, PolicyLayout};

/// Hypernet parameters. `w` is `n x d`, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypernetParams {
    pub n: usize,
    pub d: usize,
    pub embedding: MlpLayout,
    pub w: Vec<f64>,
    pub mu: FlatParams,
    pub b: FlatParams,
}

/// Gradient (or any other quantity) shaped like [`HypernetParams`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct HypernetGrad {
    pub w: Vec<f64>,
    pub mu: Vec<f64>,
    pub b: Vec<f64>,
}

impl HypernetGrad {
    pub fn zeros_like(phi: &HypernetParams) -> Self {
        Self {
            w: vec![0.0; phi.w.len()],
            mu: vec![0.0; phi.mu.len()],
            b: vec![0.0; phi.b.len()],
        }
    }

    pub fn add_assign(&mut self, other: &HypernetGrad) {
        for (a, b) in [
            (&mut self.w, &other.w),
            (&mut self.mu, &other.mu),
            (&mut self.b, &other.b),
        ] {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }

    pub fn scale(&mut self, s: f64) {
        for v in [&mut self.w, &mut self.mu, &mut self.b] {
            v.iter_mut().for_each(|x| *x *= s);
        }
    }

    /// Concatenation `[w, mu, b]`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.w.len() + self.mu.len() + self.b.len());
        v.extend_from_slice(&self.w);
        v.extend_from_slice(&self.mu);
        v.extend_from_slice(&self.b);
        v
    }
}

/// Embedding net `f_mu`: `m -> hidden... -> d` (tanh hidden, linear output).
pub fn embedding_layout(m: usize, hidden: &[usize], d: usize) -> Result<MlpLayout> {
    let mut sizes = vec![m];
    sizes.extend_from_slice(hidden);
    sizes.push(d);
    MlpLayout::new(&sizes)
}

impl HypernetParams {
    pub fn num_objectives(&self) -> usize {
        self.embedding.input_dim()
    }

    /// `n*d + n + |mu|`.
    pub fn num_params(&self) -> usize {
        self.w.len() + self.b.len() + self.mu.len()
    }

    pub fn validate(&self) -> Result<()> {
        check_dim("hypernet d", self.d, self.embedding.output_dim())?;
        check_dim("hypernet W", self.n * self.d, self.w.len())?;
        check_dim("hypernet b", self.n, self.b.len())?;
        check_dim("hypernet mu", self.embedding.num_params(), self.mu.len())?;
        if self.d > self.n {
            return Err(Error::InvalidArgument(format!(
                "reduced dimension d = {} exceeds policy size n = {}",
                self.d, self.n
            )));
        }
        Ok(())
    }

    pub fn embed(&self, pref: &Preference) -> Result<Vec<f64>> {
        check_dim("hypernet preference", self.num_objectives(), pref.dim())?;
        Ok(self.embedding.forward(&self.mu, pref.weights()))
    }

    /// Column `j` of `W`.
    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.w[i * self.d + j]).collect()
    }

    pub fn w_is_zero(&self) -> bool {
        self.w.iter().all(|v| *v == 0.0)
    }

    /// Concatenation `[w, mu, b]`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.num_params());
        v.extend_from_slice(&self.w);
        v.extend_from_slice(&self.mu);
        v.extend_from_slice(&self.b);
        v
    }

    /// Inverse of [`HypernetParams::to_flat`].
    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        check_dim("hypernet flat vector", self.num_params(), flat.len())?;
        let (w, rest) = flat.split_at(self.w.len());
        let (mu, b) = rest.split_at(self.mu.len());
        self.w.copy_from_slice(w);
        self.mu.copy_from_slice(mu);
        self.b.copy_from_slice(b);
        Ok(())
    }
}

pub fn hypernet_forward(phi: &HypernetParams, pref: &Preference) -> Result<FlatParams> {
    let z = phi.embed(pref)?;
    let mut theta = phi.b.clone();
    for (i, t) in theta.iter_mut().enumerate() {
        let row = &phi.w[i * phi.d..(i + 1) * phi.d];
        *t += row.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>();
    }
    Ok(theta)
}

/// Bias-HyperInit: `W = 0`, `b` drawn like a standalone policy, `mu` by the
/// same scheme for the embedding net. Every preference then maps to `b`.
pub fn bias_hyper_init<R: Rng + ?Sized>(
    rng: &mut R,
    policy: &PolicyLayout,
    embedding: &MlpLayout,
) -> Result<HypernetParams> {
    let n = policy.num_params();
    let d = embedding.output_dim();
    let b = policy.init_params(rng);
    let mu = FlatParams(embedding.init_params(rng));
    let phi = HypernetParams {
        n,
        d,
        embedding: embedding.clone(),
        w: vec![0.0; n * d],
        mu,
        b,
    };
    phi.validate()?;
    Ok(phi)
}

/// Pulls a policy-space gradient `g_theta` back onto `{W, mu, b}`.
pub fn hypernet_vjp(phi: &HypernetParams, pref: &Preference, g_theta: &[f64]) -> Result<HypernetGrad> {
    let mut out = HypernetGrad::zeros_like(phi);
    hypernet_vjp_into(phi, pref, g_theta, &mut out)?;
    Ok(out)
}

/// Accumulating form of [`hypernet_vjp`].
pub fn hypernet_vjp_into(
    phi: &HypernetParams,
    pref: &Preference,
    g_theta: &[f64],
    out: &mut HypernetGrad,
) -> Result<()> {
    check_dim("hypernet vjp g_theta", phi.n, g_theta.len())?;
    check_dim("hypernet preference", phi.num_objectives(), pref.dim())?;
    let cache = phi.embedding.forward_cached(&phi.mu, pref.weights());
    let z = cache.output();
    let d = phi.d;
    let mut wt_g = vec![0.0; d];
    for (i, g) in g_theta.iter().enumerate() {
        out.b[i] += g;
        if *g == 0.0 {
            continue;
        }
        let row = &phi.w[i * d..(i + 1) * d];
        let grow = &mut out.w[i * d..(i + 1) * d];
        for j in 0..d {
            grow[j] += g * z[j];
            wt_g[j] += row[j] * g;
        }
    }
    if wt_g.iter().any(|v| *v != 0.0) {
        phi.embedding.backward(&phi.mu, &cache, &wt_g, &mut out.mu);
    }
    Ok(())
}
