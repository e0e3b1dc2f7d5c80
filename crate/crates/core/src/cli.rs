//! Command-line surface. Every subcommand is also a library function so
//! tests and bindings can drive it without spawning a process.
//!
//! Output layout of `train`:
//!
//! ```text
//! <out>/config.toml          effective config (after overrides)
//! <out>/train_log.jsonl      one LogRecord per line
//! <out>/checkpoints/         step_<iteration>.ckpt and final.ckpt
//! <out>/fronts/              step_<iteration>.csv and final.csv
//! <out>/summary.json         TrainSummary
//! ```

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypernet::hypernet_forward;
use crate::io::{config_to_toml, load_config, read_front, table_to_csv, write_atomic, write_front, Checkpoint};
use crate::metrics::{evaluate_hypernet, hvip, hypervolume_report, pca, FrontEntry, ParetoFront};
use crate::momdp::preference_grid;
use crate::trainer::{train, TrainConfig, TrainEvent};

/// Exit code for a failed command: 2 for config errors, 3 for numerical
/// failures, 1 for anything else.
pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) => 2,
        Error::NonFinite(_) => 3,
        _ => 1,
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// Replace training.seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Replace training.workers.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Force a single rollout worker.
    #[arg(long)]
    pub deterministic: bool,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut TrainConfig) {
        if let Some(s) = self.seed {
            cfg.training.seed = s;
        }
        if let Some(w) = self.workers {
            cfg.training.workers = w;
        }
        if self.deterministic {
            cfg.training.workers = 1;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub seed: u64,
    pub d: usize,
    pub alpha: f64,
    pub hypervolume: f64,
    pub counted: usize,
    pub excluded: usize,
    pub non_dominated: usize,
    pub reference_point: Vec<f64>,
    pub env_steps: u64,
    pub warmup_iterations: u64,
    pub psl_iterations: u64,
    pub rng_digest: String,
}

fn jsonl_line<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string(value)
        .map(|s| s + "\n")
        .map_err(|e| Error::Format(e.to_string()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let s = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    write_atomic(path, (s + "\n").as_bytes())
}

/// Trains with `cfg` and writes the full output layout under `out`.
pub fn cmd_train(cfg: &TrainConfig, out: &Path) -> Result<TrainSummary> {
    cfg.validate()?;
    fs::create_dir_all(out.join("checkpoints"))?;
    fs::create_dir_all(out.join("fronts"))?;
    write_atomic(&out.join("config.toml"), config_to_toml(cfg)?.as_bytes())?;
    let mut log = fs::File::create(out.join("train_log.jsonl"))?;
    let mut policy = None;
    let outcome = train(cfg, &mut |ev| match ev {
        TrainEvent::Log(rec) => {
            log.write_all(jsonl_line(rec)?.as_bytes())?;
            Ok(())
        }
        TrainEvent::Snapshot {
            iteration,
            phi,
            front,
            rng_digest,
            ..
        } => {
            let layout = match &policy {
                Some(p) => p,
                None => policy.insert(cfg.policy_layout()?),
            };
            let ck = Checkpoint {
                policy: layout.clone(),
                phi: phi.clone(),
                training_step: iteration,
                rng_digest: rng_digest.to_string(),
            };
            ck.save(&out.join("checkpoints").join(format!("step_{iteration:08}.ckpt")))?;
            write_front(&out.join("fronts").join(format!("step_{iteration:08}.csv")), front)
        }
    })?;
    log.flush()?;
    let (g_w, g_psl) = outcome.stage_iterations;
    let ck = Checkpoint {
        policy: outcome.policy.clone(),
        phi: outcome.phi.clone(),
        training_step: g_w + g_psl,
        rng_digest: outcome.rng_digest.clone(),
    };
    ck.save(&out.join("checkpoints").join("final.ckpt"))?;
    write_front(&out.join("fronts").join("final.csv"), &outcome.front)?;
    let summary = TrainSummary {
        seed: cfg.training.seed,
        d: cfg.hypernet.d,
        alpha: cfg.training.alpha,
        hypervolume: outcome.hv.hypervolume,
        counted: outcome.hv.counted,
        excluded: outcome.hv.excluded,
        non_dominated: outcome.front.non_dominated().count(),
        reference_point: outcome.reference_point,
        env_steps: outcome.env_steps,
        warmup_iterations: g_w,
        psl_iterations: g_psl,
        rng_digest: outcome.rng_digest,
    };
    write_json(&out.join("summary.json"), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HvSummary {
    pub hypervolume: f64,
    pub counted: usize,
    pub excluded: usize,
    pub non_dominated: usize,
    pub rows: usize,
    pub reference_point: Vec<f64>,
}

fn hv_summary(front: &ParetoFront, reference: &[f64]) -> Result<HvSummary> {
    let hv = hypervolume_report(&front.non_dominated_points(), reference)?;
    Ok(HvSummary {
        hypervolume: hv.hypervolume,
        counted: hv.counted,
        excluded: hv.excluded,
        non_dominated: front.non_dominated().count(),
        rows: front.entries.len(),
        reference_point: reference.to_vec(),
    })
}

/// Hypervolume of a front CSV written by this tool.
pub fn cmd_hv(cfg: &TrainConfig, front_csv: &Path) -> Result<HvSummary> {
    hv_summary(&read_front(front_csv)?, &cfg.reference_point()?)
}

/// Evaluates a checkpoint on a preference grid; writes `front.csv` and
/// `hv_summary.json` under `out`.
pub fn cmd_eval(cfg: &TrainConfig, checkpoint: &Path, resolution: Option<usize>, out: &Path) -> Result<HvSummary> {
    let ck = Checkpoint::load(checkpoint)?;
    ck.check_against(cfg)?;
    let m = cfg.num_objectives()?;
    let grid = preference_grid(m, resolution.unwrap_or(cfg.evaluation.grid_resolution))?;
    let env = cfg.environment.build()?;
    let front = evaluate_hypernet(&ck.phi, &ck.policy, &env, &grid, cfg.evaluation.settings())?;
    let summary = hv_summary(&front, &cfg.reference_point()?)?;
    fs::create_dir_all(out)?;
    write_front(&out.join("front.csv"), &front)?;
    write_json(&out.join("hv_summary.json"), &summary)?;
    Ok(summary)
}

/// Writes the environment's oracle front as a front CSV.
pub fn cmd_oracle(cfg: &TrainConfig, resolution: Option<usize>, out: &Path) -> Result<HvSummary> {
    let m = cfg.num_objectives()?;
    let grid = preference_grid(m, resolution.unwrap_or(cfg.evaluation.grid_resolution))?;
    let oracle = cfg.environment.oracle_front(&grid)?;
    let front = ParetoFront {
        entries: oracle
            .entries
            .into_iter()
            .map(|(preference, objectives)| FrontEntry {
                preference,
                objectives,
                dominated: false,
            })
            .collect(),
    };
    write_front(out, &front)?;
    hv_summary(&front, &cfg.reference_point()?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportSummary {
    pub vectors: usize,
    pub explained_top2: f64,
    pub explained_top_d: f64,
    pub variances: Vec<f64>,
}

/// Writes generated policy parameters (`thetas.csv`) and their 2-D PCA
/// projection (`projection.csv`) over a preference grid.
pub fn cmd_export(
    cfg: &TrainConfig,
    checkpoint: &Path,
    resolution: Option<usize>,
    out: &Path,
) -> Result<ExportSummary> {
    let ck = Checkpoint::load(checkpoint)?;
    ck.check_against(cfg)?;
    let grid = preference_grid(
        ck.phi.num_objectives(),
        resolution.unwrap_or(cfg.evaluation.grid_resolution),
    )?;
    let thetas = grid
        .iter()
        .map(|w| hypernet_forward(&ck.phi, w).map(|t| t.0))
        .collect::<Result<Vec<_>>>()?;
    let d = ck.phi.d;
    let p = pca(&thetas, d.max(2))?;
    fs::create_dir_all(out)?;
    let names: Vec<String> = (0..ck.phi.n).map(|i| format!("theta_{i}")).collect();
    write_atomic(&out.join("thetas.csv"), &table_to_csv(&grid, &names, &thetas)?)?;
    let proj: Vec<Vec<f64>> = p.scores.iter().map(|s| s[..2.min(s.len())].to_vec()).collect();
    let pc_names: Vec<String> = (0..proj[0].len()).map(|i| format!("pc_{i}")).collect();
    write_atomic(&out.join("projection.csv"), &table_to_csv(&grid, &pc_names, &proj)?)?;
    let summary = ExportSummary {
        vectors: thetas.len(),
        explained_top2: p.explained(2),
        explained_top_d: p.explained(d),
        variances: p.variances.clone(),
    };
    write_json(&out.join("export_summary.json"), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub runs: usize,
    pub hv_mean: f64,
    pub hv_std: f64,
    pub hv_median: f64,
    /// Percentage improvement over the `alpha = 0` row (alpha sweeps only).
    pub hvip: Option<f64>,
    pub hvip_median: Option<f64>,
}

fn stats(v: &[f64]) -> (f64, f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let std = if v.len() > 1 {
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let mid = s.len() / 2;
    let median = if s.len() % 2 == 1 {
        s[mid]
    } else {
        0.5 * (s[mid - 1] + s[mid])
    };
    (mean, std, median)
}

/// Trains one run per `(value, seed)` pair in parallel, each with a single
/// rollout worker, and returns the summaries grouped by value.
fn sweep<F>(
    base: &TrainConfig,
    values: &[f64],
    seeds: &[u64],
    out: &Path,
    label: &str,
    workers: usize,
    set: F,
) -> Result<Vec<Vec<TrainSummary>>>
where
    F: Fn(&mut TrainConfig, f64) + Sync,
{
    if values.is_empty() || seeds.is_empty() {
        return Err(Error::Config("sweep needs at least one value and one seed".into()));
    }
    let jobs: Vec<(usize, f64, u64)> = values
        .iter()
        .enumerate()
        .flat_map(|(i, v)| seeds.iter().map(move |s| (i, *v, *s)))
        .collect();
    let mut cfgs = Vec::with_capacity(jobs.len());
    for &(_, v, s) in &jobs {
        let mut c = base.clone();
        set(&mut c, v);
        c.training.seed = s;
        c.training.workers = 1;
        c.validate()?;
        cfgs.push(c);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let results = pool.install(|| {
        jobs.par_iter()
            .zip(&cfgs)
            .map(|(&(_, v, s), c)| cmd_train(c, &out.join(format!("{label}_{v}")).join(format!("seed_{s}"))))
            .collect::<Result<Vec<_>>>()
    })?;
    let mut grouped = vec![Vec::new(); values.len()];
    for ((i, _, _), r) in jobs.into_iter().zip(results) {
        grouped[i].push(r);
    }
    Ok(grouped)
}

fn write_sweep_table(path: &Path, label: &str, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([label, "runs", "hv_mean", "hv_std", "hv_median", "hvip", "hvip_median"])?;
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    for r in rows {
        w.write_record([
            r.value.to_string(),
            r.runs.to_string(),
            r.hv_mean.to_string(),
            r.hv_std.to_string(),
            r.hv_median.to_string(),
            opt(r.hvip),
            opt(r.hvip_median),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    write_atomic(path, &bytes)
}

fn rows_from(values: &[f64], grouped: &[Vec<TrainSummary>]) -> Vec<SweepRow> {
    values
        .iter()
        .zip(grouped)
        .map(|(v, runs)| {
            let hvs: Vec<f64> = runs.iter().map(|r| r.hypervolume).collect();
            let (hv_mean, hv_std, hv_median) = stats(&hvs);
            SweepRow {
                value: *v,
                runs: runs.len(),
                hv_mean,
                hv_std,
                hv_median,
                hvip: None,
                hvip_median: None,
            }
        })
        .collect()
}

/// Hypervolume as a function of the reduced dimension `d`; writes
/// `sweep_d.csv` under `out`.
pub fn cmd_sweep_d(
    base: &TrainConfig,
    d_values: &[usize],
    seeds: &[u64],
    out: &Path,
    workers: usize,
) -> Result<Vec<SweepRow>> {
    let values: Vec<f64> = d_values.iter().map(|d| *d as f64).collect();
    let grouped = sweep(base, &values, seeds, out, "d", workers, |c, v| {
        c.hypernet.d = v as usize
    })?;
    let rows = rows_from(&values, &grouped);
    write_sweep_table(&out.join("sweep_d.csv"), "d", &rows)?;
    Ok(rows)
}

/// Warm-up ablation: hypervolume per `alpha` and HVIP against `alpha = 0`;
/// writes `sweep_alpha.csv` under `out`.
pub fn cmd_sweep_alpha(
    base: &TrainConfig,
    alphas: &[f64],
    seeds: &[u64],
    out: &Path,
    workers: usize,
) -> Result<Vec<SweepRow>> {
    let zero = alphas
        .iter()
        .position(|a| *a == 0.0)
        .ok_or_else(|| Error::Config("alpha values must include 0 as the HVIP baseline".into()))?;
    let grouped = sweep(base, alphas, seeds, out, "alpha", workers, |c, v| c.training.alpha = v)?;
    let mut rows = rows_from(alphas, &grouped);
    let (base_mean, base_median) = (rows[zero].hv_mean, rows[zero].hv_median);
    for r in &mut rows {
        r.hvip = Some(hvip(r.hv_mean, base_mean)?);
        r.hvip_median = Some(hvip(r.hv_median, base_median)?);
    }
    write_sweep_table(&out.join("sweep_alpha.csv"), "alpha", &rows)?;
    Ok(rows)
}

#[derive(Debug, Parser)]
#[command(
    name = "hypermorl",
    version,
    about = "Pareto set learning with a preference-conditioned hypernet"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a hypernet and write checkpoints, log, fronts and a summary.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (defaults to $HYPERMORL_OUT).
        #[arg(long, env = "HYPERMORL_OUT")]
        out: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Evaluate a checkpoint on a preference grid.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Grid resolution H; the grid has C(H + m - 1, m - 1) points.
        #[arg(long)]
        resolution: Option<usize>,
        #[arg(long, env = "HYPERMORL_OUT")]
        out: PathBuf,
    },
    /// Hypervolume of an existing front CSV.
    Hv {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        front: PathBuf,
    },
    /// Train over several reduced dimensions d.
    SweepD {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = vec![1, 2, 3, 5, 10, 20])]
        d: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = vec![0, 1, 2, 3, 4, 5, 6, 7, 8])]
        seeds: Vec<u64>,
        #[arg(long, env = "HYPERMORL_OUT")]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        workers: usize,
    },
    /// Warm-up ablation over alpha with HVIP against alpha = 0.
    SweepAlpha {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.0, 0.05, 0.1, 0.2])]
        alpha: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_values_t = vec![0, 1, 2, 3, 4])]
        seeds: Vec<u64>,
        #[arg(long, env = "HYPERMORL_OUT")]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        workers: usize,
    },
    /// Write the environment's oracle front as CSV.
    Oracle {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        resolution: Option<usize>,
        /// Output CSV file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Export generated parameters and their PCA projection.
    Export {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        resolution: Option<usize>,
        #[arg(long, env = "HYPERMORL_OUT")]
        out: PathBuf,
    },
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!(
        "{}",
        serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?
    );
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { config, out, overrides } => {
            let mut cfg = load_config(&config)?;
            overrides.apply(&mut cfg);
            print_json(&cmd_train(&cfg, &out)?)
        }
        Command::Eval {
            config,
            checkpoint,
            resolution,
            out,
        } => print_json(&cmd_eval(&load_config(&config)?, &checkpoint, resolution, &out)?),
        Command::Hv { config, front } => print_json(&cmd_hv(&load_config(&config)?, &front)?),
        Command::SweepD {
            config,
            d,
            seeds,
            out,
            workers,
        } => print_json(&cmd_sweep_d(&load_config(&config)?, &d, &seeds, &out, workers)?),
        Command::SweepAlpha {
            config,
            alpha,
            seeds,
            out,
            workers,
        } => print_json(&cmd_sweep_alpha(&load_config(&config)?, &alpha, &seeds, &out, workers)?),
        Command::Oracle {
            config,
            resolution,
            out,
        } => print_json(&cmd_oracle(&load_config(&config)?, resolution, &out)?),
        Command::Export {
            config,
            checkpoint,
            resolution,
            out,
        } => print_json(&cmd_export(&load_config(&config)?, &checkpoint, resolution, &out)?),
    }
}
