//! Dataset directory: `manifest.json` plus one raw little-endian `f64` file
//! per split.

use std::fs;
use std::path::Path;

use anyhow::Context;
use isac_track_core::tracknet::{Normalizer, PhiVector, ThetaVector};
use isac_track_core::train::{
    compute_normalizer, episodes_for, simulate_episode, slice_episode, Dataset, Sample, Split,
};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::container::{bytes_f64, f64_bytes, sha256_hex, ContainerError};

pub const DATASET_FORMAT_VERSION: u32 = 1;
pub const MANIFEST: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitEntry {
    pub file: String,
    pub episodes: usize,
    pub samples: usize,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub seed: u64,
    pub config: RunConfig,
    pub sample_len: usize,
    pub n_tx: usize,
    pub n_rx: usize,
    /// Standardization statistics of the training split.
    pub normalization: Normalizer,
    /// Field order of one record; each count is in `f64` values.
    pub record_layout: Vec<(String, usize)>,
    pub record_len: usize,
    pub train: SplitEntry,
    pub val: SplitEntry,
    pub test: SplitEntry,
}

impl DatasetManifest {
    pub fn split(&self, s: Split) -> &SplitEntry {
        match s {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }
}

/// Layout of one sample record. Complex values are interleaved re/im; ids
/// are stored as exactly representable floats.
pub fn record_layout(sample_len: usize, n_tx: usize, n_rx: usize) -> Vec<(String, usize)> {
    let ns = sample_len;
    vec![
        ("episode".into(), 1),
        ("first_slot".into(), 1),
        ("phi0".into(), 8),
        (format!("tx[{ns}][{n_tx}] re,im"), 2 * n_tx * ns),
        (format!("rx[{ns}][{n_rx}] re,im"), 2 * n_rx * ns),
        (format!("echo[{ns}][{n_rx}] re,im"), 2 * n_rx * ns),
        (format!("theta[{ns}] x,y,phi,L,W"), 5 * ns),
        (format!("teacher[{ns}] x,y,phi,vx,vy,phi_rate,L,W"), 8 * ns),
    ]
}

fn push_complex(out: &mut Vec<f64>, v: &[Complex64]) {
    for c in v {
        out.push(c.re);
        out.push(c.im);
    }
}

fn encode_sample(s: &Sample, out: &mut Vec<f64>) {
    out.push(s.episode as f64);
    out.push(s.first_slot as f64);
    out.extend_from_slice(&s.phi0.0);
    push_complex(out, &s.tx);
    push_complex(out, &s.rx);
    push_complex(out, &s.echo);
    for t in &s.theta {
        out.extend_from_slice(&t.0);
    }
    for t in &s.teacher {
        out.extend_from_slice(&t.0);
    }
}

fn decode_sample(r: &[f64], ns: usize, n_tx: usize, n_rx: usize) -> Sample {
    let mut pos = 0;
    let mut take = |n: usize| {
        let s = &r[pos..pos + n];
        pos += n;
        s
    };
    let complex = |v: &[f64]| {
        v.chunks_exact(2)
            .map(|c| Complex64::new(c[0], c[1]))
            .collect::<Vec<_>>()
    };
    let episode = take(1)[0] as u64;
    let first_slot = take(1)[0] as usize;
    let phi0 = PhiVector(take(8).try_into().expect("8 values"));
    let tx = complex(take(2 * n_tx * ns));
    let rx = complex(take(2 * n_rx * ns));
    let echo = complex(take(2 * n_rx * ns));
    let theta = take(5 * ns)
        .chunks_exact(5)
        .map(|c| ThetaVector(c.try_into().expect("5")))
        .collect();
    let teacher = take(8 * ns)
        .chunks_exact(8)
        .map(|c| PhiVector(c.try_into().expect("8")))
        .collect();
    Sample {
        episode,
        first_slot,
        n_tx,
        n_rx,
        tx,
        rx,
        echo,
        theta,
        teacher,
        phi0,
    }
}

/// Episode counts per split: explicit, or enough for the configured sample counts.
pub fn episode_counts(cfg: &RunConfig, episodes: Option<usize>) -> [usize; 3] {
    let per = cfg.system.n_slots / cfg.train.sample_len;
    match episodes {
        Some(n) => [n; 3],
        None => [cfg.train.m_train, cfg.train.m_val, cfg.train.m_test].map(|m| episodes_for(m, per.max(1))),
    }
}

/// Simulates all splits, episodes in parallel. With `episodes` every split
/// gets that many whole episodes; otherwise splits are cut to the configured
/// sample counts. Identical to the sequential core builder.
pub fn generate(cfg: &RunConfig, episodes: Option<usize>) -> anyhow::Result<Dataset> {
    let counts = episode_counts(cfg, episodes);
    let mut splits: [Vec<Sample>; 3] = Default::default();
    for (k, split) in Split::ALL.into_iter().enumerate() {
        let per_episode: Vec<Vec<Sample>> = (0..counts[k] as u64)
            .into_par_iter()
            .map(|e| {
                let ep = simulate_episode(
                    &cfg.system,
                    &cfg.trajectory,
                    &cfg.prior,
                    cfg.seed,
                    split.episode_base() + e,
                )
                .with_context(|| format!("{} episode {e}", split.name()))?;
                Ok(slice_episode(&ep, cfg.train.sample_len, &cfg.prior))
            })
            .collect::<anyhow::Result<_>>()?;
        splits[k] = per_episode.into_iter().flatten().collect();
        if episodes.is_none() {
            splits[k].truncate([cfg.train.m_train, cfg.train.m_val, cfg.train.m_test][k]);
        }
    }
    let [train, val, test] = splits;
    let norm = compute_normalizer(&train);
    Ok(Dataset { train, val, test, norm })
}

fn encode_split(samples: &[Sample]) -> Vec<u8> {
    let mut v = Vec::new();
    for s in samples {
        encode_sample(s, &mut v);
    }
    f64_bytes(&v)
}

pub fn write_dataset(
    dir: &Path,
    cfg: &RunConfig,
    ds: &Dataset,
    episodes: [usize; 3],
) -> anyhow::Result<DatasetManifest> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let (ns, nt, nr) = (cfg.train.sample_len, cfg.system.n_tx, cfg.system.n_rx);
    let layout = record_layout(ns, nt, nr);
    let record_len = layout.iter().map(|(_, n)| n).sum();
    let mut entries = Vec::new();
    for (k, split) in Split::ALL.into_iter().enumerate() {
        let bytes = encode_split(ds.split(split));
        let file = format!("{}.bin", split.name());
        fs::write(dir.join(&file), &bytes).with_context(|| format!("writing {file}"))?;
        entries.push(SplitEntry {
            file,
            episodes: episodes[k],
            samples: ds.split(split).len(),
            bytes: bytes.len() as u64,
            sha256: sha256_hex(&bytes),
        });
    }
    let [train, val, test]: [SplitEntry; 3] = entries.try_into().expect("three splits");
    let manifest = DatasetManifest {
        format_version: DATASET_FORMAT_VERSION,
        seed: cfg.seed,
        config: cfg.clone(),
        sample_len: ns,
        n_tx: nt,
        n_rx: nr,
        normalization: ds.norm,
        record_layout: layout,
        record_len,
        train,
        val,
        test,
    };
    fs::write(dir.join(MANIFEST), serde_json::to_vec_pretty(&manifest)?)?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> anyhow::Result<DatasetManifest> {
    let path = dir.join(MANIFEST);
    let text = fs::read(&path).with_context(|| format!("reading {}", path.display()))?;
    let value: serde_json::Value =
        serde_json::from_slice(&text).with_context(|| format!("parsing {}", path.display()))?;
    let found = value.get("format_version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
    if found != DATASET_FORMAT_VERSION {
        return Err(ContainerError::Version {
            found,
            expected: DATASET_FORMAT_VERSION,
        }
        .into());
    }
    Ok(serde_json::from_value(value)?)
}

pub fn read_split(dir: &Path, m: &DatasetManifest, split: Split) -> anyhow::Result<Vec<Sample>> {
    let e = m.split(split);
    let bytes = fs::read(dir.join(&e.file)).with_context(|| format!("reading {}", e.file))?;
    let rec_bytes = (m.record_len * 8) as u64;
    let needed = rec_bytes * e.samples as u64;
    if (bytes.len() as u64) < needed {
        return Err(ContainerError::Truncated {
            needed,
            got: bytes.len() as u64,
        })
        .with_context(|| e.file.clone());
    }
    if bytes.len() as u64 > needed {
        return Err(ContainerError::Trailing(bytes.len() as u64 - needed)).with_context(|| e.file.clone());
    }
    let computed = sha256_hex(&bytes);
    if computed != e.sha256 {
        return Err(ContainerError::Hash {
            stored: e.sha256.clone(),
            computed,
        })
        .with_context(|| e.file.clone());
    }
    let values = bytes_f64(&bytes);
    Ok(values
        .chunks_exact(m.record_len)
        .map(|r| decode_sample(r, m.sample_len, m.n_tx, m.n_rx))
        .collect())
}

pub fn read_dataset(dir: &Path) -> anyhow::Result<(DatasetManifest, Dataset)> {
    let m = read_manifest(dir)?;
    let ds = Dataset {
        train: read_split(dir, &m, Split::Train)?,
        val: read_split(dir, &m, Split::Val)?,
        test: read_split(dir, &m, Split::Test)?,
        norm: m.normalization,
    };
    Ok((m, ds))
}
