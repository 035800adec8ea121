//! LIBSVM ingestion, constant-feature augmentation and contiguous sharding.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::numerics::SparseVector;

/// One labelled observation.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub features: SparseVector,
    pub label: f64,
}

/// How raw LIBSVM labels are turned into training targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LabelPolicy {
    /// Labels `> 0` become 1, everything else 0. Absorbs both the `{0,1}`
    /// and `{-1,+1}` conventions.
    #[default]
    Binary,
    /// Keep the label as written (regression targets).
    Raw,
}

impl LabelPolicy {
    pub fn apply(self, raw: f64) -> f64 {
        match self {
            LabelPolicy::Binary => {
                if raw > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            LabelPolicy::Raw => raw,
        }
    }
}

/// Instances as parsed, before augmentation. Every feature vector carries
/// the same dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Parsed {
    pub instances: Vec<Instance>,
    pub dim: usize,
}

/// Parses LIBSVM text. When `dim` is `None` the dimension is the largest
/// index seen; otherwise indices above `dim` are rejected.
pub fn parse_libsvm<R: BufRead>(
    reader: R,
    policy: LabelPolicy,
    dim: Option<usize>,
) -> Result<Parsed> {
    let mut rows: Vec<(f64, Vec<usize>, Vec<f64>)> = Vec::new();
    let mut max_index = 0usize;

    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line?;
        let line = line.trim_end_matches('\r').trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse {
            line: lineno,
            message,
        };
        let mut tokens = line.split_ascii_whitespace();
        let label_tok = tokens.next().expect("non-empty line has a token");
        let label: f64 = label_tok
            .parse()
            .map_err(|_| err(format!("non-numeric label {label_tok:?}")))?;
        if !label.is_finite() {
            return Err(err(format!("non-finite label {label_tok:?}")));
        }

        let mut indices = Vec::new();
        let mut values = Vec::new();
        for tok in tokens {
            let (idx_s, val_s) = tok
                .split_once(':')
                .ok_or_else(|| err(format!("expected <index>:<value>, got {tok:?}")))?;
            let idx: usize = idx_s
                .parse()
                .map_err(|_| err(format!("non-numeric index {idx_s:?}")))?;
            if idx < 1 {
                return Err(err("feature index must be >= 1".to_string()));
            }
            let val: f64 = val_s
                .parse()
                .map_err(|_| err(format!("non-numeric value {val_s:?}")))?;
            if !val.is_finite() {
                return Err(err(format!("non-finite value {val_s:?}")));
            }
            let zero_based = idx - 1;
            if let Some(&prev) = indices.last() {
                if zero_based <= prev {
                    return Err(err(format!(
                        "non-increasing index {idx} after {}",
                        prev + 1
                    )));
                }
            }
            if let Some(d) = dim {
                if idx > d {
                    return Err(err(format!("index {idx} exceeds dimension {d}")));
                }
            }
            max_index = max_index.max(idx);
            indices.push(zero_based);
            values.push(val);
        }
        rows.push((policy.apply(label), indices, values));
    }

    let dim = dim.unwrap_or(max_index);
    let instances = rows
        .into_iter()
        .map(|(label, indices, values)| {
            Ok(Instance {
                features: SparseVector::new(indices, values, dim)?,
                label,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Parsed { instances, dim })
}

pub fn parse_libsvm_str(text: &str, policy: LabelPolicy, dim: Option<usize>) -> Result<Parsed> {
    parse_libsvm(text.as_bytes(), policy, dim)
}

pub fn read_libsvm_file(
    path: impl AsRef<std::path::Path>,
    policy: LabelPolicy,
    dim: Option<usize>,
) -> Result<Parsed> {
    let file = std::fs::File::open(path)?;
    parse_libsvm(std::io::BufReader::new(file), policy, dim)
}

/// Writes instances back out in LIBSVM format (1-based indices).
pub fn write_libsvm<W: Write>(mut out: W, instances: &[Instance]) -> Result<()> {
    for inst in instances {
        write!(out, "{}", inst.label)?;
        for (i, v) in inst.features.iter() {
            write!(out, " {}:{}", i + 1, v)?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Appends the constant feature `(m, 1.0)` to every instance.
pub fn augment(instances: Vec<Instance>, m: usize) -> Result<Vec<Instance>> {
    instances
        .into_iter()
        .map(|inst| {
            let mut features = inst.features.with_dim(m)?;
            features.push_trailing(1.0);
            Ok(Instance {
                features,
                label: inst.label,
            })
        })
        .collect()
}

/// Immutable partitioned collection of instances.
#[derive(Debug, Clone)]
pub struct ShardedDataset {
    shards: Vec<Vec<Instance>>,
    n: usize,
    dim: usize,
}

impl ShardedDataset {
    pub fn shards(&self) -> &[Vec<Instance>] {
        &self.shards
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_shards(&self) -> usize {
        self.shards.len()
    }

    pub fn shard_sizes(&self) -> Vec<usize> {
        self.shards.iter().map(Vec::len).collect()
    }

    pub fn instances(&self) -> impl Iterator<Item = &Instance> {
        self.shards.iter().flatten()
    }
}

/// Instance `i` goes to shard `floor(i * n_p / n)`.
pub fn shard(instances: Vec<Instance>, n_p: usize) -> Result<ShardedDataset> {
    if n_p < 1 {
        return Err(Error::InvalidArgument("shard count must be >= 1".into()));
    }
    let n = instances.len();
    let dim = instances.first().map_or(0, |i| i.features.dim());
    if let Some(bad) = instances.iter().find(|i| i.features.dim() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: bad.features.dim(),
        });
    }
    let mut shards: Vec<Vec<Instance>> = (0..n_p).map(|_| Vec::new()).collect();
    for (i, inst) in instances.into_iter().enumerate() {
        let t = ((i as u128 * n_p as u128) / n as u128) as usize;
        shards[t].push(inst);
    }
    Ok(ShardedDataset { shards, n, dim })
}
