//! Per-attack representations of a packet sequence.
//!
//! Tor cells have unit size, so every size-derived quantity reduces to a
//! count of cells. The feature catalog shared by the Pa-SVM, Wa-kNN and
//! Ha-kFP pipelines is laid out as follows (227 values):
//!
//! | offset | count | feature                                              |
//! |-------:|------:|------------------------------------------------------|
//! | 0      | 1     | total cell count                                     |
//! | 1      | 1     | outgoing cell count                                  |
//! | 2      | 1     | incoming cell count                                  |
//! | 3      | 1     | total transmission time                              |
//! | 4      | 20    | 1-based positions of the first 20 outgoing cells     |
//! | 24     | 100   | incoming counts in the first 100 30-cell windows     |
//! | 124    | 1     | number of bursts (maximal same-direction runs)       |
//! | 125    | 2     | mean and max outgoing burst length                   |
//! | 127    | 100   | cumulative signed sum after every 50th cell          |
//!
//! Slots a short trace cannot fill are 0.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::traces::{Direction, PacketSequence};
use crate::{Error, Result};

pub const CATALOG_LEN: usize = 227;
pub const CUMUL_LEN: usize = 104;

const FIRST_OUT: usize = 20;
const WINDOWS: usize = 100;
const WINDOW_LEN: usize = 30;
const CUMUL_STRIDE: usize = 50;
const CUMUL_SAMPLES: usize = 100;
const INTERP_POINTS: usize = 100;

/// Which recipe produced a [`FeatureVector`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Catalog {
    PaSvm,
    WaKnn,
    HaKfp,
    Cumul,
}

impl Catalog {
    pub fn len(self) -> usize {
        match self {
            Catalog::Cumul => CUMUL_LEN,
            _ => CATALOG_LEN,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Catalog::PaSvm => "pa_svm",
            Catalog::WaKnn => "wa_knn",
            Catalog::HaKfp => "ha_kfp",
            Catalog::Cumul => "cumul",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub catalog: Catalog,
}

/// Inter-packet times and unit lengths, as used by cross-correlation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XCorrRepr {
    pub times: Vec<f64>,
    pub lengths: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DirectionString {
    pub symbols: Vec<Direction>,
}

impl fmt::Display for DirectionString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.symbols.iter().try_for_each(|d| write!(f, "{}", d.symbol()))
    }
}

impl DirectionString {
    pub fn parse(s: &str) -> Result<Self> {
        let symbols = s
            .chars()
            .map(|c| match c {
                'O' => Ok(Direction::Out),
                'I' => Ok(Direction::In),
                _ => Err(Error::param(format!("direction symbol must be O or I, got {c:?}"))),
            })
            .collect::<Result<_>>()?;
        Ok(DirectionString { symbols })
    }
}

/// Inter-packet times (first is 0) and the ±1 direction of every cell.
pub fn repr_xcorr(seq: &PacketSequence) -> XCorrRepr {
    let cells = seq.cells();
    let mut times = Vec::with_capacity(cells.len());
    let mut prev = cells.first().map_or(0.0, |c| c.time);
    for c in cells {
        times.push(c.time - prev);
        prev = c.time;
    }
    XCorrRepr { times, lengths: cells.iter().map(|c| c.direction.sign()).collect() }
}

pub fn repr_direction_string(seq: &PacketSequence) -> DirectionString {
    DirectionString { symbols: seq.directions().collect() }
}

/// `[n_out, n_in, total_time, n]` followed by 100 linear interpolations of
/// the cumulative direction sum at positions `m·n/100`, `m = 1..=100`.
pub fn repr_cumul(seq: &PacketSequence) -> FeatureVector {
    let n = seq.len();
    let mut cumsum = Vec::with_capacity(n);
    let mut acc = 0.0;
    for d in seq.directions() {
        acc += d.sign();
        cumsum.push(acc);
    }
    let mut values = Vec::with_capacity(CUMUL_LEN);
    values.push(seq.count(Direction::Out) as f64);
    values.push(seq.count(Direction::In) as f64);
    values.push(seq.duration());
    values.push(n as f64);
    for m in 1..=INTERP_POINTS {
        values.push(interpolate(&cumsum, (m * n) as f64 / INTERP_POINTS as f64));
    }
    FeatureVector { values, catalog: Catalog::Cumul }
}

/// Piecewise-linear value of `c` at 1-based position `pos`, clamped to the
/// first element below 1.
fn interpolate(c: &[f64], pos: f64) -> f64 {
    if pos <= 1.0 {
        return c[0];
    }
    let lo = pos.floor() as usize;
    if lo >= c.len() {
        return c[c.len() - 1];
    }
    let frac = pos - lo as f64;
    if frac == 0.0 {
        return c[lo - 1];
    }
    c[lo - 1] + frac * (c[lo] - c[lo - 1])
}

/// Feature catalog vector (see the module table). All three catalogs share
/// the same recipe; the tag records which attack asked for it.
pub fn repr_catalog(seq: &PacketSequence, catalog: Catalog) -> FeatureVector {
    if catalog == Catalog::Cumul {
        return repr_cumul(seq);
    }
    let cells = seq.cells();
    let n_out = seq.count(Direction::Out);
    let mut values = Vec::with_capacity(CATALOG_LEN);
    values.push(cells.len() as f64);
    values.push(n_out as f64);
    values.push((cells.len() - n_out) as f64);
    values.push(seq.duration());

    let mut first_out: Vec<f64> = cells
        .iter()
        .enumerate()
        .filter(|(_, c)| c.direction == Direction::Out)
        .take(FIRST_OUT)
        .map(|(i, _)| (i + 1) as f64)
        .collect();
    first_out.resize(FIRST_OUT, 0.0);
    values.extend(first_out);

    let mut windows: Vec<f64> = cells
        .chunks(WINDOW_LEN)
        .take(WINDOWS)
        .map(|w| w.iter().filter(|c| c.direction == Direction::In).count() as f64)
        .collect();
    windows.resize(WINDOWS, 0.0);
    values.extend(windows);

    let mut bursts = 0usize;
    let mut out_bursts = Vec::new();
    let mut run = 0usize;
    for (i, c) in cells.iter().enumerate() {
        run += 1;
        let ends = cells.get(i + 1).is_none_or(|next| next.direction != c.direction);
        if ends {
            bursts += 1;
            if c.direction == Direction::Out {
                out_bursts.push(run as f64);
            }
            run = 0;
        }
    }
    values.push(bursts as f64);
    if out_bursts.is_empty() {
        values.extend([0.0, 0.0]);
    } else {
        values.push(out_bursts.iter().sum::<f64>() / out_bursts.len() as f64);
        values.push(out_bursts.iter().copied().fold(0.0, f64::max));
    }

    let mut acc = 0.0;
    let mut samples = Vec::with_capacity(CUMUL_SAMPLES);
    for (i, c) in cells.iter().enumerate() {
        acc += c.direction.sign();
        if (i + 1) % CUMUL_STRIDE == 0 && samples.len() < CUMUL_SAMPLES {
            samples.push(acc);
        }
    }
    samples.resize(CUMUL_SAMPLES, 0.0);
    values.extend(samples);

    debug_assert_eq!(values.len(), CATALOG_LEN);
    FeatureVector { values, catalog }
}

/// Writes one CSV row per trace: `id,catalog,f0,f1,...`.
pub fn write_features_csv<W: Write>(out: &mut W, rows: &[(String, FeatureVector)]) -> std::io::Result<()> {
    let width = rows.iter().map(|(_, f)| f.values.len()).max().unwrap_or(0);
    write!(out, "id,catalog")?;
    for i in 0..width {
        write!(out, ",f{i}")?;
    }
    writeln!(out)?;
    for (id, f) in rows {
        write!(out, "{id},{}", f.catalog.name())?;
        for v in &f.values {
            write!(out, ",{v}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}
