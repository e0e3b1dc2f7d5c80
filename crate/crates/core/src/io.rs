//! Config files, checkpoints and CSV fronts.
//!
//! Checkpoint layout: a text header of `key value` lines
//!
//! ```text
//! HYPERMORL-CHECKPOINT 1
//! m 2
//! n 386
//! d 10
//! policy_layout 2 16 16 2
//! embedding_layout 2 32 10
//! log_std_floor -2
//! mean_bound 0.25
//! training_step 120
//! rng_digest <64 hex chars>
//! w_len 3860
//! mu_len 426
//! b_len 386
//! end_header
//! ```
//!
//! followed by `w`, `mu` and `b` as little-endian `f64`, back to back. The
//! `log_std_floor` and `mean_bound` lines are present only when the policy
//! sets them.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{check_dim, Error, Result};
use crate::hypernet::{embedding_layout, HypernetParams};
use crate::metrics::{FrontEntry, ParetoFront};
use crate::momdp::Preference;
use crate::nn::{FlatParams, MlpLayout, PolicyLayout};
use crate::trainer::TrainConfig;

const MAGIC: &str = "HYPERMORL-CHECKPOINT";
const VERSION: u32 = 1;

/// Parses and validates a TOML run config.
pub fn parse_config(text: &str) -> Result<TrainConfig> {
    let cfg: TrainConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<TrainConfig> {
    let text = fs::read_to_string(path)?;
    parse_config(&text).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn config_to_toml(cfg: &TrainConfig) -> Result<String> {
    toml::to_string(cfg).map_err(|e| Error::Format(e.to_string()))
}

/// Writes `bytes` to a sibling temp file and renames it over `path`, so a
/// reader never sees a half-written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidArgument(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp", name.to_string_lossy()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub policy: PolicyLayout,
    pub phi: HypernetParams,
    pub training_step: u64,
    pub rng_digest: String,
}

fn join(v: &[usize]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let phi = &self.phi;
        let floor = self
            .policy
            .log_std_floor()
            .map(|f| format!("log_std_floor {f}\n"))
            .unwrap_or_default();
        let bound = self
            .policy
            .mean_bound()
            .map(|b| format!("mean_bound {b}\n"))
            .unwrap_or_default();
        let header = format!(
            "{MAGIC} {VERSION}\nm {}\nn {}\nd {}\npolicy_layout {}\nembedding_layout {}\n{floor}{bound}training_step {}\nrng_digest {}\nw_len {}\nmu_len {}\nb_len {}\nend_header\n",
            phi.num_objectives(),
            phi.n,
            phi.d,
            join(self.policy.mlp().sizes()),
            join(phi.embedding.sizes()),
            self.training_step,
            self.rng_digest,
            phi.w.len(),
            phi.mu.len(),
            phi.b.len(),
        );
        let mut out = header.into_bytes();
        for v in phi.w.iter().chain(phi.mu.iter()).chain(phi.b.iter()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        const END: &[u8] = b"end_header\n";
        let split = bytes
            .windows(END.len())
            .position(|w| w == END)
            .ok_or_else(|| Error::Format("checkpoint header has no end_header line".into()))?
            + END.len();
        let header =
            std::str::from_utf8(&bytes[..split]).map_err(|_| Error::Format("checkpoint header is not UTF-8".into()))?;
        let mut lines = header.lines();
        let first = lines.next().unwrap_or_default();
        if first != format!("{MAGIC} {VERSION}") {
            return Err(Error::Format(format!("unrecognized checkpoint header {first:?}")));
        }
        let mut fields = std::collections::BTreeMap::new();
        for line in lines {
            if line == "end_header" {
                break;
            }
            let (k, v) = line
                .split_once(' ')
                .ok_or_else(|| Error::Format(format!("malformed header line {line:?}")))?;
            fields.insert(k, v);
        }
        let get = |k: &str| {
            fields
                .get(k)
                .copied()
                .ok_or_else(|| Error::Format(format!("checkpoint header lacks {k}")))
        };
        let num = |k: &str| -> Result<usize> {
            get(k)?
                .parse()
                .map_err(|_| Error::Format(format!("checkpoint field {k} is not an integer")))
        };
        let sizes = |k: &str| -> Result<Vec<usize>> {
            get(k)?
                .split(' ')
                .map(|s| s.parse().map_err(|_| Error::Format(format!("bad {k} entry {s:?}"))))
                .collect()
        };
        let (m, n, d) = (num("m")?, num("n")?, num("d")?);
        let optional = |k: &str| -> Result<Option<f64>> {
            fields
                .get(k)
                .map(|v| {
                    v.parse::<f64>()
                        .map_err(|_| Error::Format(format!("checkpoint {k} {v:?} is not a number")))
                })
                .transpose()
        };
        let policy = PolicyLayout::from_mlp(MlpLayout::new(&sizes("policy_layout")?)?)?
            .with_log_std_floor(optional("log_std_floor")?)
            .and_then(|p| p.with_mean_bound(optional("mean_bound")?))
            .map_err(|e| Error::Format(e.to_string()))?;
        let embedding = MlpLayout::new(&sizes("embedding_layout")?)?;
        check_dim("checkpoint n vs policy layout", policy.num_params(), n)?;
        check_dim("checkpoint m vs embedding input", embedding.input_dim(), m)?;
        check_dim("checkpoint d vs embedding output", embedding.output_dim(), d)?;
        let (w_len, mu_len, b_len) = (num("w_len")?, num("mu_len")?, num("b_len")?);
        check_dim("checkpoint w_len", n * d, w_len)?;
        check_dim("checkpoint mu_len", embedding.num_params(), mu_len)?;
        check_dim("checkpoint b_len", n, b_len)?;
        let body = &bytes[split..];
        check_dim("checkpoint body bytes", 8 * (w_len + mu_len + b_len), body.len())?;
        let values: Vec<f64> = body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        let phi = HypernetParams {
            n,
            d,
            embedding,
            w: values[..w_len].to_vec(),
            mu: FlatParams(values[w_len..w_len + mu_len].to_vec()),
            b: FlatParams(values[w_len + mu_len..].to_vec()),
        };
        phi.validate()?;
        Ok(Self {
            policy,
            phi,
            training_step: num("training_step")? as u64,
            rng_digest: get("rng_digest")?.to_string(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }

    /// Errors unless the checkpoint fits the environment and layouts of `cfg`.
    pub fn check_against(&self, cfg: &TrainConfig) -> Result<()> {
        let policy = cfg.policy_layout()?;
        check_dim("checkpoint policy size vs config", policy.num_params(), self.phi.n)?;
        if policy != self.policy {
            return Err(Error::DimensionMismatch {
                context: "checkpoint policy layout vs config",
                expected: policy.num_params(),
                got: self.policy.num_params(),
            });
        }
        let m = cfg.num_objectives()?;
        check_dim("checkpoint objectives vs environment", m, self.phi.num_objectives())?;
        let emb = embedding_layout(m, &cfg.hypernet.embedding_hidden, cfg.hypernet.d)?;
        check_dim("checkpoint embedding vs config", emb.num_params(), self.phi.mu.len())
    }
}

fn header(m: usize, extra: &[String]) -> Vec<String> {
    let mut h: Vec<String> = (0..m).map(|i| format!("pref_{i}")).collect();
    h.extend((0..m).map(|i| format!("obj_{i}")));
    h.extend_from_slice(extra);
    h
}

/// `pref_0..pref_{m-1}, obj_0..obj_{m-1}, dominated`. Floats use the
/// shortest representation that parses back to the same bits.
pub fn front_to_csv(front: &ParetoFront) -> Result<Vec<u8>> {
    let m = front.num_objectives().unwrap_or(0);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header(m, &["dominated".to_string()]))?;
    for e in &front.entries {
        check_dim("front entry preference", m, e.preference.dim())?;
        check_dim("front entry objectives", m, e.objectives.len())?;
        let mut row: Vec<String> = e.preference.weights().iter().map(|v| v.to_string()).collect();
        row.extend(e.objectives.iter().map(|v| v.to_string()));
        row.push(if e.dominated { "1" } else { "0" }.to_string());
        w.write_record(&row)?;
    }
    w.into_inner().map_err(|e| Error::Format(e.to_string()))
}

pub fn front_from_csv(bytes: &[u8]) -> Result<ParetoFront> {
    let mut r = csv::Reader::from_reader(bytes);
    let cols = r.headers()?.len();
    if cols < 5 || (cols - 1) % 2 != 0 {
        return Err(Error::Format(format!("front CSV has {cols} columns")));
    }
    let m = (cols - 1) / 2;
    if r.headers()?.iter().collect::<Vec<_>>() != header(m, &["dominated".to_string()]) {
        return Err(Error::Format("unexpected front CSV header".into()));
    }
    let mut entries = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let parse = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::Format(format!("row {}: {s:?} is not a number", line + 2)))
        };
        let vals: Vec<f64> = rec.iter().take(2 * m).map(parse).collect::<Result<_>>()?;
        let dominated = match &rec[2 * m] {
            "0" => false,
            "1" => true,
            other => return Err(Error::Format(format!("row {}: dominated flag {other:?}", line + 2))),
        };
        entries.push(FrontEntry {
            preference: Preference::new(vals[..m].to_vec())?,
            objectives: vals[m..].to_vec(),
            dominated,
        });
    }
    Ok(ParetoFront { entries })
}

pub fn write_front(path: &Path, front: &ParetoFront) -> Result<()> {
    write_atomic(path, &front_to_csv(front)?)
}

pub fn read_front(path: &Path) -> Result<ParetoFront> {
    front_from_csv(&fs::read(path)?)
}

/// Rows of `pref_*` followed by named numeric columns.
pub fn table_to_csv(prefs: &[Preference], names: &[String], rows: &[Vec<f64>]) -> Result<Vec<u8>> {
    check_dim("table rows", prefs.len(), rows.len())?;
    let m = prefs.first().map_or(0, Preference::dim);
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut h: Vec<String> = (0..m).map(|i| format!("pref_{i}")).collect();
    h.extend_from_slice(names);
    w.write_record(&h)?;
    for (p, row) in prefs.iter().zip(rows) {
        check_dim("table row", names.len(), row.len())?;
        let rec: Vec<String> = p.weights().iter().chain(row).map(|v| v.to_string()).collect();
        w.write_record(&rec)?;
    }
    w.into_inner().map_err(|e| Error::Format(e.to_string()))
}
