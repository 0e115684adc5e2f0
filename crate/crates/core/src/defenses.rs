//! Padding defenses applied to traces, and overhead measurement.
//!
//! `RandomPadding` stretches every inter-cell gap by `1 + time` and then
//! inserts `⌈bandwidth·n⌉` dummy cells at uniform times over the stretched
//! duration, each with a fair-coin direction.
//!
//! `ConstantRate` emits each direction on a fixed clock of period `ρ_dir`.
//! A real cell leaves at the first free tick at or after its arrival; every
//! tick with nothing real to send carries a dummy. After the last real cell
//! of a direction, dummies continue until that direction's count is a
//! multiple of `block`. The two clocks are independent, so cells of
//! different directions may swap relative order; within a direction, real
//! cells keep their order.

use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::rng::{stream, unit_rng};
use crate::traces::{Cell, Dataset, Direction, PacketSequence};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DefenseConfig {
    RandomPadding { bandwidth: f64, time: f64 },
    ConstantRate { rho_out: f64, rho_in: f64, block: usize },
}

impl DefenseConfig {
    pub fn validate(&self) -> Result<()> {
        match *self {
            DefenseConfig::RandomPadding { bandwidth, time } => {
                if !(bandwidth >= 0.0 && time >= 0.0 && bandwidth.is_finite() && time.is_finite()) {
                    return Err(Error::param("padding overheads must be finite and non-negative"));
                }
            }
            DefenseConfig::ConstantRate { rho_out, rho_in, block } => {
                if !(rho_out > 0.0 && rho_in > 0.0 && rho_out.is_finite() && rho_in.is_finite()) {
                    return Err(Error::param("constant-rate periods must be positive"));
                }
                if block == 0 {
                    return Err(Error::param("block size must be at least 1"));
                }
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &'static str {
        match self {
            DefenseConfig::RandomPadding { .. } => "random_padding",
            DefenseConfig::ConstantRate { .. } => "constant_rate",
        }
    }

    /// Reads a flat `key = value` file with `kind` plus the variant's
    /// parameters.
    pub fn from_kv(text: &str) -> Result<Self> {
        let table: toml::Table = text.parse().map_err(|e| Error::Format(format!("defense config: {e}")))?;
        let cfg: DefenseConfig =
            table.try_into().map_err(|e| Error::Format(format!("defense config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_kv(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

/// A defended trace with a flag per cell marking the real ones.
#[derive(Debug, Clone, PartialEq)]
pub struct Defended {
    pub sequence: PacketSequence,
    pub is_real: Vec<bool>,
}

pub fn apply_defense(seq: &PacketSequence, cfg: &DefenseConfig, seed: u64) -> Result<PacketSequence> {
    Ok(apply_defense_tagged(seq, cfg, seed)?.sequence)
}

/// Same as [`apply_defense`] but also reports which output cells are real.
pub fn apply_defense_tagged(seq: &PacketSequence, cfg: &DefenseConfig, seed: u64) -> Result<Defended> {
    cfg.validate()?;
    if seq.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let tagged = match *cfg {
        DefenseConfig::RandomPadding { bandwidth, time } => random_padding(seq, bandwidth, time, seed),
        DefenseConfig::ConstantRate { rho_out, rho_in, block } => {
            let out = clock(seq, Direction::Out, rho_out, block);
            let inn = clock(seq, Direction::In, rho_in, block);
            merge(out, inn)
        }
    };
    let (cells, is_real): (Vec<Cell>, Vec<bool>) = tagged.into_iter().unzip();
    let mut sequence = PacketSequence::new(cells)?;
    if let Some(o) = seq.origin() {
        sequence = sequence.with_origin(o);
    }
    Ok(Defended { sequence, is_real })
}

fn random_padding(seq: &PacketSequence, bandwidth: f64, time: f64, seed: u64) -> Vec<(Cell, bool)> {
    let stretch = 1.0 + time;
    let real: Vec<(Cell, bool)> =
        seq.cells().iter().map(|c| (Cell::new(c.time * stretch, c.direction), true)).collect();
    let n_dummy = (bandwidth * seq.len() as f64 - 1e-9).ceil().max(0.0) as usize;
    if n_dummy == 0 {
        return real;
    }
    let span = seq.duration() * stretch;
    let mut rng = unit_rng(seed, stream::DEFENSE, 0);
    let mut dummies: Vec<(Cell, bool)> = (0..n_dummy)
        .map(|_| {
            let t = rng.random::<f64>() * span;
            let d = if rng.random::<bool>() { Direction::Out } else { Direction::In };
            (Cell::new(t, d), false)
        })
        .collect();
    dummies.sort_by(|a, b| a.0.time.total_cmp(&b.0.time));
    merge(real, dummies)
}

/// Stable merge by time; `a` wins ties.
fn merge(a: Vec<(Cell, bool)>, b: Vec<(Cell, bool)>) -> Vec<(Cell, bool)> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        let take_a = j == b.len() || (i < a.len() && a[i].0.time <= b[j].0.time);
        if take_a {
            out.push(a[i]);
            i += 1;
        } else {
            out.push(b[j]);
            j += 1;
        }
    }
    out
}

fn clock(seq: &PacketSequence, dir: Direction, rho: f64, block: usize) -> Vec<(Cell, bool)> {
    let mut out = Vec::new();
    let mut next_tick: u64 = 0;
    for c in seq.cells().iter().filter(|c| c.direction == dir) {
        let due = (c.time / rho).ceil() as u64;
        while next_tick < due {
            out.push((Cell::new(next_tick as f64 * rho, dir), false));
            next_tick += 1;
        }
        out.push((Cell::new(next_tick as f64 * rho, dir), true));
        next_tick += 1;
    }
    if !out.is_empty() {
        while out.len() % block != 0 {
            out.push((Cell::new(next_tick as f64 * rho, dir), false));
            next_tick += 1;
        }
    }
    out
}

/// Defends every trace of a dataset with a per-trace seed stream.
pub fn defend_dataset(data: &Dataset, cfg: &DefenseConfig, seed: u64) -> Result<Dataset> {
    let all: Vec<&PacketSequence> = data.elements().map(|(_, s)| s).collect();
    let defended: Vec<PacketSequence> = all
        .par_iter()
        .enumerate()
        .map(|(i, s)| apply_defense(s, cfg, seed ^ (i as u64).wrapping_mul(0xA24B_AED4_963E_E407)))
        .collect::<Result<_>>()?;
    let mut it = defended.into_iter();
    let monitored = data
        .monitored()
        .iter()
        .map(|(&p, v)| (p, it.by_ref().take(v.len()).collect()))
        .collect();
    let unmonitored = it.collect();
    Dataset::new(monitored, unmonitored)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverheadReport {
    pub bandwidth: f64,
    /// `None` when the original trace has zero duration.
    pub time: Option<f64>,
}

pub fn measure_overhead(original: &PacketSequence, defended: &PacketSequence) -> OverheadReport {
    let n = original.len() as f64;
    let t = original.duration();
    OverheadReport {
        bandwidth: (defended.len() as f64 - n) / n,
        time: (t > 0.0).then(|| (defended.duration() - t) / t),
    }
}
