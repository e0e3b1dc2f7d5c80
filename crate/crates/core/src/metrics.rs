//! Pareto dominance, exact hypervolume for two and three objectives, HVIP
//! and front extraction from a trained hypernet.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::hypernet::{hypernet_forward, HypernetParams};
use crate::momdp::{Environment, Preference};
use crate::nn::{FlatParams, PolicyLayout};
use crate::rollout::evaluate_policy;

/// `a` dominates `b` (maximization): no worse anywhere, better somewhere.
pub fn dominates(a: &[f64], b: &[f64]) -> Result<bool> {
    check_dim("dominates", a.len(), b.len())?;
    Ok(dominates_unchecked(a, b))
}

fn dominates_unchecked(a: &[f64], b: &[f64]) -> bool {
    let mut strict = false;
    for (x, y) in a.iter().zip(b) {
        if x < y {
            return false;
        }
        if x > y {
            strict = true;
        }
    }
    strict
}

fn lex_desc(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match y.total_cmp(x) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    Ordering::Equal
}

/// `flags[i]` is true iff some other point dominates `points[i]`.
///
/// Points are visited in decreasing lexicographic order, so any dominator
/// of a point is visited before it; checking against the non-dominated set
/// found so far is enough by transitivity.
pub fn dominated_flags(points: &[Vec<f64>]) -> Result<Vec<bool>> {
    let Some(first) = points.first() else {
        return Ok(Vec::new());
    };
    let m = first.len();
    for p in points {
        check_dim("front point", m, p.len())?;
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("front point {p:?}")));
        }
    }
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&i, &j| lex_desc(&points[i], &points[j]));
    let mut flags = vec![false; points.len()];
    let mut kept: Vec<usize> = Vec::new();
    for i in order {
        let p = &points[i];
        if kept.iter().any(|&k| dominates_unchecked(&points[k], p)) {
            flags[i] = true;
        } else {
            kept.push(i);
        }
    }
    Ok(flags)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontEntry {
    pub preference: Preference,
    pub objectives: Vec<f64>,
    pub dominated: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ParetoFront {
    pub entries: Vec<FrontEntry>,
}

impl ParetoFront {
    pub fn num_objectives(&self) -> Option<usize> {
        self.entries.first().map(|e| e.objectives.len())
    }

    pub fn non_dominated(&self) -> impl Iterator<Item = &FrontEntry> {
        self.entries.iter().filter(|e| !e.dominated)
    }

    pub fn non_dominated_points(&self) -> Vec<Vec<f64>> {
        self.non_dominated().map(|e| e.objectives.clone()).collect()
    }

    pub fn all_points(&self) -> Vec<Vec<f64>> {
        self.entries.iter().map(|e| e.objectives.clone()).collect()
    }
}

/// Flags every dominated entry; order is preserved.
pub fn filter_front(points: Vec<(Preference, Vec<f64>)>) -> Result<ParetoFront> {
    if points.is_empty() {
        return Err(Error::InvalidArgument("cannot filter an empty front".into()));
    }
    let objs: Vec<Vec<f64>> = points.iter().map(|(_, j)| j.clone()).collect();
    let flags = dominated_flags(&objs)?;
    Ok(ParetoFront {
        entries: points
            .into_iter()
            .zip(flags)
            .map(|((preference, objectives), dominated)| FrontEntry {
                preference,
                objectives,
                dominated,
            })
            .collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HvConfig {
    pub reference_point: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HvReport {
    pub hypervolume: f64,
    pub counted: usize,
    /// Points that do not strictly dominate the reference point.
    pub excluded: usize,
}

/// Exact hypervolume of the non-dominated entries of `front`.
pub fn hypervolume(front: &ParetoFront, cfg: &HvConfig) -> Result<f64> {
    Ok(hypervolume_report(&front.non_dominated_points(), &cfg.reference_point)?.hypervolume)
}

/// Lebesgue measure of the union of boxes `[reference, p]`; `m` must be 2
/// or 3. Points not strictly better than the reference in every objective
/// are skipped and counted in `excluded`.
pub fn hypervolume_report(points: &[Vec<f64>], reference: &[f64]) -> Result<HvReport> {
    let m = reference.len();
    if !(2..=3).contains(&m) {
        return Err(Error::Unsupported(format!(
            "exact hypervolume is implemented for 2 or 3 objectives, got {m}"
        )));
    }
    let mut shifted = Vec::with_capacity(points.len());
    let mut excluded = 0;
    for p in points {
        check_dim("hypervolume point", m, p.len())?;
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("front point {p:?}")));
        }
        if p.iter().zip(reference).all(|(a, r)| a > r) {
            shifted.push(p.iter().zip(reference).map(|(a, r)| a - r).collect::<Vec<_>>());
        } else {
            excluded += 1;
        }
    }
    let hv = if m == 2 {
        let mut s = Staircase::default();
        for p in &shifted {
            s.insert(p[0], p[1]);
        }
        s.area
    } else {
        hv3(&mut shifted)
    };
    Ok(HvReport {
        hypervolume: hv,
        counted: shifted.len(),
        excluded,
    })
}

/// Sweep over the third coordinate, maintaining the 2-D dominated area of
/// every point seen so far.
fn hv3(points: &mut [Vec<f64>]) -> f64 {
    points.sort_by(|a, b| b[2].total_cmp(&a[2]));
    let mut s = Staircase::default();
    let mut hv = 0.0;
    for i in 0..points.len() {
        s.insert(points[i][0], points[i][1]);
        let next = points.get(i + 1).map_or(0.0, |p| p[2]);
        hv += s.area * (points[i][2] - next);
    }
    hv
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Key(f64);

impl Eq for Key {}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// 2-D non-dominated staircase relative to the origin: keys increase in `x`
/// while heights strictly decrease.
#[derive(Default)]
struct Staircase {
    steps: BTreeMap<Key, f64>,
    area: f64,
}

impl Staircase {
    fn insert(&mut self, px: f64, py: f64) {
        // Height of the current staircase just right of px.
        let succ = self.steps.range(Key(px)..).next().map(|(_, &y)| y);
        if succ.is_some_and(|y| y >= py) {
            return;
        }
        let mut right = px;
        let mut h = succ.unwrap_or(0.0);
        let mut added = 0.0;
        let mut blocked = false;
        for (&Key(xk), &yk) in self.steps.range(..Key(px)).rev() {
            added += (right - xk) * (py - h);
            if yk >= py {
                blocked = true;
                break;
            }
            right = xk;
            h = yk;
        }
        if !blocked {
            added += right * (py - h);
        }
        self.area += added;
        let doomed: Vec<Key> = self
            .steps
            .range(..=Key(px))
            .rev()
            .take_while(|(_, &y)| y <= py)
            .map(|(k, _)| *k)
            .collect();
        for k in doomed {
            self.steps.remove(&k);
        }
        self.steps.insert(Key(px), py);
    }
}

/// Reference point `min_i - margin * (max_i - min_i)` per objective. A
/// degenerate range falls back to `margin * max(|min_i|, 1)`.
pub fn reference_from_points(points: &[Vec<f64>], margin: f64) -> Result<Vec<f64>> {
    let first = points
        .first()
        .ok_or_else(|| Error::InvalidArgument("no points".into()))?;
    let m = first.len();
    (0..m)
        .map(|i| {
            let (lo, hi) = points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                (lo.min(p[i]), hi.max(p[i]))
            });
            if !lo.is_finite() || !hi.is_finite() {
                return Err(Error::NonFinite("reference from non-finite points".into()));
            }
            let range = hi - lo;
            let pad = if range > 0.0 {
                margin * range
            } else {
                margin * lo.abs().max(1.0)
            };
            Ok(lo - pad)
        })
        .collect()
}

/// Percentage hypervolume improvement over a baseline.
pub fn hvip(hv_x: f64, hv_0: f64) -> Result<f64> {
    if !(hv_0 > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "baseline hypervolume must be positive, got {hv_0}"
        )));
    }
    Ok((hv_x - hv_0) / hv_0 * 100.0)
}

/// How fronts are read off a trained hypernet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalSettings {
    pub episodes: usize,
    pub seed: u64,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            episodes: 16,
            seed: 0x5eed,
        }
    }
}

/// Evaluates `theta = H(w)` for every grid preference with mean actions,
/// averaging discounted returns over the environment's evaluation starts.
pub fn evaluate_hypernet<E>(
    phi: &HypernetParams,
    policy: &PolicyLayout,
    env: &E,
    grid: &[Preference],
    settings: EvalSettings,
) -> Result<ParetoFront>
where
    E: Environment + Clone + Send + Sync,
{
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty preference grid".into()));
    }
    check_dim("hypernet output vs policy", policy.num_params(), phi.n)?;
    let starts = env.evaluation_starts(settings.episodes, settings.seed);
    let points = grid
        .par_iter()
        .map_init(
            || env.clone(),
            |env, w| {
                let theta = hypernet_forward(phi, w)?;
                let j = evaluate_policy(env, policy, &theta, &starts)?;
                Ok((w.clone(), j))
            },
        )
        .collect::<Result<Vec<_>>>()?;
    filter_front(points)
}

/// Principal components computed by power iteration.
#[derive(Debug, Clone)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// Unit-norm principal directions, strongest first.
    pub components: Vec<Vec<f64>>,
    /// Variance captured by each component.
    pub variances: Vec<f64>,
    pub total_variance: f64,
    /// Coordinates of every input vector along each component.
    pub scores: Vec<Vec<f64>>,
}

impl Pca {
    /// Fraction of the total variance in the leading `k` components.
    pub fn explained(&self, k: usize) -> f64 {
        if self.total_variance == 0.0 {
            return 1.0;
        }
        self.variances.iter().take(k).sum::<f64>() / self.total_variance
    }
}

/// Top-`k` principal components of `vectors`. Works on whichever of the
/// covariance and Gram matrices is smaller.
pub fn pca(vectors: &[Vec<f64>], k: usize) -> Result<Pca> {
    let count = vectors.len();
    if count < 2 {
        return Err(Error::InvalidArgument("PCA needs at least two vectors".into()));
    }
    let dim = vectors[0].len();
    for v in vectors {
        check_dim("PCA vector", dim, v.len())?;
    }
    let mut mean = vec![0.0; dim];
    for v in vectors {
        for (m, x) in mean.iter_mut().zip(v) {
            *m += x / count as f64;
        }
    }
    let centred: Vec<Vec<f64>> = vectors
        .iter()
        .map(|v| v.iter().zip(&mean).map(|(x, m)| x - m).collect())
        .collect();
    let total_variance = centred
        .iter()
        .map(|v| v.iter().map(|x| x * x).sum::<f64>())
        .sum::<f64>()
        / count as f64;

    let use_gram = count < dim;
    let size = if use_gram { count } else { dim };
    let mut mat = vec![0.0; size * size];
    if use_gram {
        for i in 0..count {
            for j in i..count {
                let g = dot(&centred[i], &centred[j]) / count as f64;
                mat[i * size + j] = g;
                mat[j * size + i] = g;
            }
        }
    } else {
        for v in &centred {
            for i in 0..dim {
                for j in i..dim {
                    mat[i * size + j] += v[i] * v[j] / count as f64;
                }
            }
        }
        for i in 0..dim {
            for j in 0..i {
                mat[i * size + j] = mat[j * size + i];
            }
        }
    }

    let k = k.min(size);
    let (eigvals, eigvecs) = top_eigenpairs(&mat, size, k);
    let mut components = Vec::with_capacity(k);
    let mut scores = vec![Vec::with_capacity(k); count];
    for (lambda, v) in eigvals.iter().zip(&eigvecs) {
        let u: Vec<f64> = if use_gram {
            let mut u = vec![0.0; dim];
            for (vi, x) in v.iter().zip(&centred) {
                for (uj, xj) in u.iter_mut().zip(x) {
                    *uj += vi * xj;
                }
            }
            let norm = dot(&u, &u).sqrt();
            if norm > 0.0 {
                u.iter_mut().for_each(|x| *x /= norm);
            }
            u
        } else {
            v.clone()
        };
        let _ = lambda;
        for (s, x) in scores.iter_mut().zip(&centred) {
            s.push(dot(x, &u));
        }
        components.push(u);
    }
    Ok(Pca {
        mean,
        components,
        variances: eigvals,
        total_variance,
        scores,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Leading eigenpairs of a symmetric PSD matrix by power iteration, each
/// iterate kept orthogonal to the pairs already found.
fn top_eigenpairs(mat: &[f64], size: usize, k: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(0x9ca);
    let scale = (0..size).map(|i| mat[i * size + i]).sum::<f64>().max(f64::MIN_POSITIVE);
    let mut vals = Vec::with_capacity(k);
    let mut vecs: Vec<Vec<f64>> = Vec::with_capacity(k);
    for _ in 0..k {
        let mut v: Vec<f64> = (0..size).map(|_| rng.random_range(-1.0..1.0)).collect();
        orthogonalize(&mut v, &vecs);
        let mut lambda = 0.0;
        if normalize(&mut v) {
            for _ in 0..20_000 {
                let mut w = matvec(mat, size, &v);
                orthogonalize(&mut w, &vecs);
                if !normalize(&mut w) || dot(&matvec(mat, size, &v), &v) <= 1e-15 * scale {
                    break;
                }
                let delta = w.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                v = w;
                if delta < 1e-13 {
                    break;
                }
            }
            lambda = dot(&matvec(mat, size, &v), &v).max(0.0);
        }
        vals.push(lambda);
        vecs.push(v);
    }
    (vals, vecs)
}

fn matvec(mat: &[f64], size: usize, v: &[f64]) -> Vec<f64> {
    (0..size).map(|i| dot(&mat[i * size..(i + 1) * size], v)).collect()
}

fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) {
    for _ in 0..2 {
        for b in basis {
            let c = dot(v, b);
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= c * y);
        }
    }
}

fn normalize(v: &mut [f64]) -> bool {
    let n = dot(v, v).sqrt();
    if n > 0.0 && n.is_finite() {
        v.iter_mut().for_each(|x| *x /= n);
        true
    } else {
        v.iter_mut().for_each(|x| *x = 0.0);
        false
    }
}

/// Linear 2-D (or `target_dim`-D) view of a set of parameter vectors: their
/// scores on the leading principal directions.
pub fn project_front_params(thetas: &[FlatParams], target_dim: usize) -> Result<Vec<Vec<f64>>> {
    if thetas.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "need at least 3 parameter vectors, got {}",
            thetas.len()
        )));
    }
    let first = &thetas[0];
    if thetas.iter().all(|t| t.0 == first.0) {
        return Err(Error::InvalidArgument(
            "need at least 2 distinct parameter vectors".into(),
        ));
    }
    let vectors: Vec<Vec<f64>> = thetas.iter().map(|t| t.0.clone()).collect();
    let p = pca(&vectors, target_dim)?;
    Ok(p.scores
        .into_iter()
        .map(|mut s| {
            s.resize(target_dim, 0.0);
            s
        })
        .collect())
}
