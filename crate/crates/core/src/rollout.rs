//! Running policies in environments.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, Error, Result};
use crate::momdp::{Environment, Trajectory};
use crate::nn::PolicyLayout;

fn check_theta(layout: &PolicyLayout, theta: &[f64]) -> Result<()> {
    check_dim("policy parameters", layout.num_params(), theta.len())?;
    match theta.iter().position(|v| !v.is_finite()) {
        None => Ok(()),
        Some(i) => Err(Error::NonFinite(format!("theta[{i}] = {}", theta[i]))),
    }
}

/// Samples one episode with `a = mean + std * eps`. Starts from `start` if
/// given, otherwise from the environment's own reset distribution.
pub fn rollout<E, R>(
    env: &mut E,
    layout: &PolicyLayout,
    theta: &[f64],
    rng: &mut R,
    start: Option<&[f64]>,
) -> Result<Trajectory>
where
    E: Environment + ?Sized,
    R: Rng + ?Sized,
{
    check_theta(layout, theta)?;
    let mut state = match start {
        Some(s) => env.reset_to(s)?,
        None => env.reset(),
    };
    let mut traj = Trajectory::new();
    loop {
        let (mean, std) = layout.forward_unchecked(theta, &state);
        let action: Vec<f64> = mean
            .iter()
            .zip(&std)
            .map(|(m, s)| m + s * rng.sample::<f64, _>(StandardNormal))
            .collect();
        if action.iter().any(|a| !a.is_finite()) {
            return Err(Error::NonFinite(format!("sampled action {action:?}")));
        }
        let log_prob = layout.log_prob_given_mean(&mean, theta, &action);
        let step = env.step(&action)?;
        if step.reward.iter().any(|r| !r.is_finite()) {
            return Err(Error::NonFinite(format!("reward {:?}", step.reward)));
        }
        traj.push(state, action, log_prob, step.reward);
        state = step.state;
        if step.done {
            return Ok(traj);
        }
    }
}

/// Mean discounted return over the given starts using the mean action.
pub fn evaluate_policy<E>(env: &mut E, layout: &PolicyLayout, theta: &[f64], starts: &[Vec<f64>]) -> Result<Vec<f64>>
where
    E: Environment + ?Sized,
{
    check_theta(layout, theta)?;
    if starts.is_empty() {
        return Err(Error::InvalidArgument("no evaluation starts".into()));
    }
    let spec = env.spec().clone();
    let mut total = vec![0.0; spec.num_objectives];
    for s in starts {
        let mut state = env.reset_to(s)?;
        let mut discount = 1.0;
        loop {
            let (mean, _) = layout.forward_unchecked(theta, &state);
            let step = env.step(&mean)?;
            for (acc, r) in total.iter_mut().zip(&step.reward) {
                *acc += discount * r;
            }
            discount *= spec.gamma;
            state = step.state;
            if step.done {
                break;
            }
        }
    }
    let n = starts.len() as f64;
    let out: Vec<f64> = total.into_iter().map(|v| v / n).collect();
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("evaluated returns {out:?}")));
    }
    Ok(out)
}
