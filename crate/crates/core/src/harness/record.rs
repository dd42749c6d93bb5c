//! Episode record files (newline-delimited JSON). The first line is a
//! [`RecordHeader`] carrying the resolved configuration, its SHA-256 hash and
//! the episode seeds; every following line is one [`SlotRow`], ordered by
//! (episode, t). Everything after the header is the record body, which is
//! byte-identical across reruns of the same configuration.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::federation::Regime;
use crate::tradeoff::Decision;

pub const RECORD_FORMAT: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordHeader {
    pub format: u32,
    /// Arm label, e.g. "federated" or "codebook+dynamic".
    pub arm: String,
    pub regime: Regime,
    pub dynamic: bool,
    /// Fleet size M the policy registry is sized for.
    pub registry_maps: usize,
    /// Number of policies the deployed regime maintains.
    pub complexity: usize,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub config: ExperimentConfig,
}

/// Metrics of one slot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlotRow {
    pub episode: u64,
    pub t: u64,
    pub m_s: usize,
    /// UEs associated with the donor or a MAP.
    pub connected: usize,
    pub sum_rate_bps: f64,
    pub eta: f64,
    /// Mean placement reward over deployed MAPs.
    pub mean_reward: f64,
    /// Trade-off counter of each deployed MAP after monitoring.
    pub theta: BTreeMap<usize, i64>,
    /// Decisions applied at the start of the slot.
    pub decisions: Vec<Decision>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub header: RecordHeader,
    pub rows: Vec<SlotRow>,
}

impl EpisodeRecord {
    /// The NDJSON body: one line per row.
    pub fn body_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        for row in &self.rows {
            serde_json::to_writer(&mut out, row)?;
            out.push(b'\n');
        }
        Ok(out)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = serde_json::to_vec(&self.header)?;
        out.push(b'\n');
        out.extend(self.body_bytes()?);
        Ok(out)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes()?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let mut lines = BufReader::new(file).lines();
        let first = lines.next().ok_or(Error::EmptyRecords)??;
        let header: RecordHeader = serde_json::from_str(&first)?;
        if header.format != RECORD_FORMAT {
            return Err(Error::Config(format!("{}: unsupported record format {}", path.display(), header.format)));
        }
        let mut rows = Vec::new();
        for line in lines {
            let line = line?;
            if !line.trim().is_empty() {
                rows.push(serde_json::from_str(&line)?);
            }
        }
        let rec = Self { header, rows };
        rec.check_order()?;
        Ok(rec)
    }

    /// Rows must be strictly increasing in (episode, t).
    pub fn check_order(&self) -> Result<()> {
        for w in self.rows.windows(2) {
            if (w[0].episode, w[0].t) >= (w[1].episode, w[1].t) {
                return Err(Error::Config(format!(
                    "record rows out of order at episode {} slot {}",
                    w[1].episode, w[1].t
                )));
            }
        }
        Ok(())
    }

    /// Mean sum-rate of each episode, in episode order.
    pub fn episode_means(&self) -> Vec<(u64, f64, f64)> {
        let mut acc: BTreeMap<u64, (f64, f64, usize)> = BTreeMap::new();
        for r in &self.rows {
            let e = acc.entry(r.episode).or_default();
            e.0 += r.sum_rate_bps;
            e.1 += r.eta;
            e.2 += 1;
        }
        acc.into_iter().map(|(ep, (r, eta, n))| (ep, r / n as f64, eta / n as f64)).collect()
    }
}
