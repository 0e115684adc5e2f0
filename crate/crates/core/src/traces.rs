//! Packet sequences, datasets and their partitioning.
//!
//! A trace file holds one cell per line, `<seconds>\t<signed int>`, where the
//! sign is the direction (positive = outgoing from the client) and the
//! magnitude is ignored. A dataset directory holds monitored instances named
//! `<page>-<instance>`, unmonitored traces named `<page>`, and an `index.tsv`
//! manifest listing membership.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::rng::{stream, unit_rng};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    /// From the client towards the network.
    Out,
    /// Towards the client.
    In,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Out => 1.0,
            Direction::In => -1.0,
        }
    }

    pub fn symbol(self) -> char {
        match self {
            Direction::Out => 'O',
            Direction::In => 'I',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    /// Seconds since the first cell of the sequence.
    pub time: f64,
    pub direction: Direction,
}

impl Cell {
    pub fn new(time: f64, direction: Direction) -> Self {
        Cell { time, direction }
    }
}

/// One page load: a non-empty, time-ordered list of cells starting at t = 0.
///
/// Cells are shared behind an `Arc`, so cloning a sequence (e.g. when the
/// same trace lands in several folds) does not copy the cell data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PacketSequence {
    cells: Arc<[Cell]>,
    origin: Option<String>,
}

impl PacketSequence {
    /// Validates and normalizes `cells` so the first timestamp is zero.
    pub fn new(mut cells: Vec<Cell>) -> Result<Self> {
        let first = cells.first().ok_or(Error::EmptyTrace)?.time;
        let mut prev = f64::NEG_INFINITY;
        for (i, c) in cells.iter().enumerate() {
            if !c.time.is_finite() {
                return Err(Error::MalformedLine { line: i + 1, reason: "non-finite timestamp".into() });
            }
            if c.time < prev {
                return Err(Error::DecreasingTimestamp { line: i + 1, time: c.time });
            }
            prev = c.time;
        }
        if first != 0.0 {
            for c in &mut cells {
                c.time -= first;
            }
        }
        Ok(PacketSequence { cells: cells.into(), origin: None })
    }

    pub fn from_parts(times: &[f64], directions: &[Direction]) -> Result<Self> {
        if times.len() != directions.len() {
            return Err(Error::LengthMismatch(times.len(), directions.len()));
        }
        Self::new(times.iter().zip(directions).map(|(&t, &d)| Cell::new(t, d)).collect())
    }

    pub fn with_origin(mut self, origin: impl Into<String>) -> Self {
        self.origin = Some(origin.into());
        self
    }

    pub fn origin(&self) -> Option<&str> {
        self.origin.as_deref()
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    /// Always false; kept for API symmetry with `len`.
    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn directions(&self) -> impl Iterator<Item = Direction> + '_ {
        self.cells.iter().map(|c| c.direction)
    }

    /// Time of the last cell (the first is always at 0).
    pub fn duration(&self) -> f64 {
        self.cells.last().map_or(0.0, |c| c.time)
    }

    pub fn count(&self, dir: Direction) -> usize {
        self.cells.iter().filter(|c| c.direction == dir).count()
    }
}

/// Ground-truth or predicted class of a trace.
///
/// The derived ordering puts monitored pages first by ascending id and
/// `NonMonitored` last, which is the tie-break order used everywhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Monitored(u32),
    NonMonitored,
}

impl Label {
    pub fn is_monitored(self) -> bool {
        matches!(self, Label::Monitored(_))
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Monitored(p) => write!(f, "{p}"),
            Label::NonMonitored => f.write_str("nonmon"),
        }
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nonmon" | "-1" => Ok(Label::NonMonitored),
            _ => s
                .parse()
                .map(Label::Monitored)
                .map_err(|_| Error::UnknownLabel(s.to_string())),
        }
    }
}

/// Dataset shape in `AxB+C` notation: `A` monitored pages with `B`
/// instances each, plus `C` single-instance unmonitored pages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub n_monitored: usize,
    pub n_instances: usize,
    pub n_unmonitored: usize,
}

impl DatasetSpec {
    pub fn new(n_monitored: usize, n_instances: usize, n_unmonitored: usize) -> Result<Self> {
        if n_monitored > 0 && n_instances == 0 {
            return Err(Error::InvalidSpec(format!("{n_monitored}x{n_instances}+{n_unmonitored}")));
        }
        Ok(DatasetSpec { n_monitored, n_instances, n_unmonitored })
    }

    pub fn total(&self) -> usize {
        self.n_monitored * self.n_instances + self.n_unmonitored
    }
}

impl fmt::Display for DatasetSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}+{}", self.n_monitored, self.n_instances, self.n_unmonitored)
    }
}

impl FromStr for DatasetSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_spec(s)
    }
}

/// Parses `<A>x<B>+<C>` with plain decimal integers.
pub fn parse_spec(text: &str) -> Result<DatasetSpec> {
    let bad = || Error::InvalidSpec(text.to_string());
    let (a, rest) = text.trim().split_once('x').ok_or_else(bad)?;
    let (b, c) = rest.split_once('+').ok_or_else(bad)?;
    let num = |s: &str| -> Result<usize> {
        if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        s.parse().map_err(|_| bad())
    };
    let spec = DatasetSpec { n_monitored: num(a)?, n_instances: num(b)?, n_unmonitored: num(c)? };
    if spec.n_monitored > 0 && spec.n_instances == 0 {
        return Err(bad());
    }
    spec.n_monitored
        .checked_mul(spec.n_instances)
        .and_then(|m| m.checked_add(spec.n_unmonitored))
        .ok_or_else(bad)?;
    Ok(spec)
}

/// Parses a trace file body.
pub fn parse_trace(text: &str) -> Result<PacketSequence> {
    let mut cells = Vec::new();
    let mut prev = f64::NEG_INFINITY;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |reason: &str| Error::MalformedLine { line: i + 1, reason: reason.to_string() };
        let (t, size) = line.split_once('\t').ok_or_else(|| malformed("expected <time>\\t<size>"))?;
        let time: f64 = t.trim().parse().map_err(|_| malformed("bad timestamp"))?;
        if !time.is_finite() || time < 0.0 {
            return Err(malformed("timestamp must be finite and non-negative"));
        }
        let size: i64 = size.trim().parse().map_err(|_| malformed("bad signed size"))?;
        let direction = match size.signum() {
            1 => Direction::Out,
            -1 => Direction::In,
            _ => return Err(malformed("size 0 has no direction")),
        };
        if time < prev {
            return Err(Error::DecreasingTimestamp { line: i + 1, time });
        }
        prev = time;
        cells.push(Cell::new(time, direction));
    }
    PacketSequence::new(cells)
}

/// Inverse of [`parse_trace`]; sizes are written as `1` / `-1`.
pub fn serialize_trace(seq: &PacketSequence) -> String {
    let mut out = String::with_capacity(seq.len() * 12);
    for c in seq.cells() {
        let s = if c.direction == Direction::Out { 1 } else { -1 };
        out.push_str(&format!("{}\t{}\n", c.time, s));
    }
    out
}

/// Monitored pages (many instances each) plus single-instance unmonitored
/// traces. Page ids are dense: `0..n_pages`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Dataset {
    monitored: BTreeMap<u32, Vec<PacketSequence>>,
    unmonitored: Vec<PacketSequence>,
}

impl Dataset {
    pub fn new(monitored: BTreeMap<u32, Vec<PacketSequence>>, unmonitored: Vec<PacketSequence>) -> Result<Self> {
        for (expected, (&page, instances)) in monitored.iter().enumerate() {
            if page as usize != expected {
                return Err(Error::param(format!("page ids must be dense from 0; found {page} at {expected}")));
            }
            if instances.is_empty() {
                return Err(Error::param(format!("monitored page {page} has no instances")));
            }
        }
        Ok(Dataset { monitored, unmonitored })
    }

    pub fn monitored(&self) -> &BTreeMap<u32, Vec<PacketSequence>> {
        &self.monitored
    }

    pub fn unmonitored(&self) -> &[PacketSequence] {
        &self.unmonitored
    }

    pub fn n_pages(&self) -> usize {
        self.monitored.len()
    }

    pub fn n_monitored_instances(&self) -> usize {
        self.monitored.values().map(Vec::len).sum()
    }

    pub fn len(&self) -> usize {
        self.n_monitored_instances() + self.unmonitored.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn min_instances(&self) -> usize {
        self.monitored.values().map(Vec::len).min().unwrap_or(0)
    }

    /// Shape using the smallest per-page instance count.
    pub fn shape(&self) -> DatasetSpec {
        DatasetSpec {
            n_monitored: self.n_pages(),
            n_instances: self.min_instances(),
            n_unmonitored: self.unmonitored.len(),
        }
    }

    /// All elements with their labels: monitored pages in id order, then
    /// unmonitored traces.
    pub fn elements(&self) -> impl Iterator<Item = (Label, &PacketSequence)> + '_ {
        self.monitored
            .iter()
            .flat_map(|(&p, v)| v.iter().map(move |s| (Label::Monitored(p), s)))
            .chain(self.unmonitored.iter().map(|s| (Label::NonMonitored, s)))
    }

    /// Same dataset without its unmonitored traces.
    pub fn closed_world(&self) -> Dataset {
        Dataset { monitored: self.monitored.clone(), unmonitored: Vec::new() }
    }

    /// Keeps at most `n` unmonitored traces, chosen pseudo-randomly.
    pub fn with_unmonitored_limit(&self, n: usize, seed: u64) -> Dataset {
        if n >= self.unmonitored.len() {
            return self.clone();
        }
        let mut rng = unit_rng(seed, stream::UNMONITORED, 0);
        let keep = sorted_sample(self.unmonitored.len(), n, &mut rng);
        Dataset {
            monitored: self.monitored.clone(),
            unmonitored: keep.into_iter().map(|i| self.unmonitored[i].clone()).collect(),
        }
    }
}

fn sorted_sample<R: rand::Rng>(len: usize, n: usize, rng: &mut R) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..len).collect();
    idx.shuffle(rng);
    idx.truncate(n);
    idx.sort_unstable();
    idx
}

/// Deterministic subsample to the shape `spec`. Chosen pages are renumbered
/// densely in their original id order.
pub fn subset(dataset: &Dataset, spec: &DatasetSpec, seed: u64) -> Result<Dataset> {
    let exceeds = |available: String| Error::SpecExceedsDataset { requested: spec.to_string(), available };
    if spec.n_monitored > dataset.n_pages() || spec.n_unmonitored > dataset.unmonitored.len() {
        return Err(exceeds(dataset.shape().to_string()));
    }
    let mut rng = unit_rng(seed, stream::SUBSET, 0);
    let pages: Vec<u32> = dataset.monitored.keys().copied().collect();
    let chosen = sorted_sample(pages.len(), spec.n_monitored, &mut rng);
    let mut monitored = BTreeMap::new();
    for (new_id, &pi) in chosen.iter().enumerate() {
        let instances = &dataset.monitored[&pages[pi]];
        if spec.n_instances > instances.len() {
            return Err(exceeds(format!("page {} with {} instances", pages[pi], instances.len())));
        }
        let keep = sorted_sample(instances.len(), spec.n_instances, &mut rng);
        monitored.insert(new_id as u32, keep.into_iter().map(|i| instances[i].clone()).collect());
    }
    let keep = sorted_sample(dataset.unmonitored.len(), spec.n_unmonitored, &mut rng);
    let unmonitored = keep.into_iter().map(|i| dataset.unmonitored[i].clone()).collect();
    Ok(Dataset { monitored, unmonitored })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fold {
    pub train: Dataset,
    pub test: Dataset,
}

/// Stratified k-fold split. Each page's instances and the unmonitored
/// traces are dealt round-robin over the test folds after a seeded shuffle,
/// so fold sizes differ by at most one per page.
pub fn stratified_folds(dataset: &Dataset, k: usize, seed: u64) -> Result<Vec<Fold>> {
    if k < 2 {
        return Err(Error::param(format!("fold count must be at least 2, got {k}")));
    }
    let min = dataset.min_instances();
    if dataset.n_pages() > 0 && min < k {
        return Err(Error::TooManyFolds { k, min_instances: min });
    }
    let mut rng = unit_rng(seed, stream::FOLDS, 0);
    let mut deal = |len: usize| -> Vec<usize> {
        let mut idx: Vec<usize> = (0..len).collect();
        idx.shuffle(&mut rng);
        let mut fold_of = vec![0; len];
        for (pos, i) in idx.into_iter().enumerate() {
            fold_of[i] = pos % k;
        }
        fold_of
    };
    let page_folds: Vec<(u32, Vec<usize>)> =
        dataset.monitored.iter().map(|(&p, v)| (p, deal(v.len()))).collect();
    let unmon_folds = deal(dataset.unmonitored.len());

    let folds = (0..k)
        .map(|f| {
            let mut train = Dataset::default();
            let mut test = Dataset::default();
            for (p, assignment) in &page_folds {
                let instances = &dataset.monitored[p];
                let (te, tr): (Vec<_>, Vec<_>) =
                    instances.iter().zip(assignment).partition(|(_, &a)| a == f);
                test.monitored.insert(*p, te.into_iter().map(|(s, _)| s.clone()).collect());
                train.monitored.insert(*p, tr.into_iter().map(|(s, _)| s.clone()).collect());
            }
            for (s, &a) in dataset.unmonitored.iter().zip(&unmon_folds) {
                if a == f {
                    test.unmonitored.push(s.clone());
                } else {
                    train.unmonitored.push(s.clone());
                }
            }
            Fold { train, test }
        })
        .collect();
    Ok(folds)
}

/// Proportionally downsamples a training set to at most `max_elements`
/// while keeping at least one instance of every monitored page.
pub fn cap_training(train: &Dataset, max_elements: usize, seed: u64) -> Result<Dataset> {
    let pages = train.n_pages();
    if max_elements < pages {
        return Err(Error::param(format!("cap {max_elements} is below the page count {pages}")));
    }
    let total = train.len();
    if total <= max_elements {
        return Ok(train.clone());
    }
    let frac = max_elements as f64 / total as f64;
    let mut page_keep: Vec<(u32, usize)> = train
        .monitored
        .iter()
        .map(|(&p, v)| (p, ((v.len() as f64 * frac).floor() as usize).max(1)))
        .collect();
    let mut unmon_keep = (train.unmonitored.len() as f64 * frac).floor() as usize;
    let mut kept = page_keep.iter().map(|&(_, n)| n).sum::<usize>() + unmon_keep;
    if kept > max_elements {
        let cut = (kept - max_elements).min(unmon_keep);
        unmon_keep -= cut;
        kept -= cut;
    }
    while kept > max_elements {
        // trim the largest page, lowest id first
        let slot = page_keep
            .iter_mut()
            .filter(|(_, n)| *n > 1)
            .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
            .expect("cap >= page count guarantees a trimmable page");
        slot.1 -= 1;
        kept -= 1;
    }

    let mut rng = unit_rng(seed, stream::CAP, 0);
    let mut monitored = BTreeMap::new();
    for (p, n) in page_keep {
        let instances = &train.monitored[&p];
        let keep = sorted_sample(instances.len(), n, &mut rng);
        monitored.insert(p, keep.into_iter().map(|i| instances[i].clone()).collect());
    }
    let keep = sorted_sample(train.unmonitored.len(), unmon_keep, &mut rng);
    let unmonitored = keep.into_iter().map(|i| train.unmonitored[i].clone()).collect();
    Ok(Dataset { monitored, unmonitored })
}

pub const MANIFEST: &str = "index.tsv";

/// Writes `dataset` as a trace directory with an `index.tsv` manifest.
///
/// Manifest lines are `<file>\t<label>\t<host>`, where label is the page id
/// or `nonmon` and host is the trace origin (or `-`).
pub fn write_dataset_dir(dataset: &Dataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest = String::new();
    let mut write = |name: String, label: Label, seq: &PacketSequence| -> Result<()> {
        let path = dir.join(&name);
        fs::write(&path, serialize_trace(seq)).map_err(|e| Error::io(&path, e))?;
        manifest.push_str(&format!("{name}\t{label}\t{}\n", seq.origin().unwrap_or("-")));
        Ok(())
    };
    for (&p, instances) in &dataset.monitored {
        for (i, s) in instances.iter().enumerate() {
            write(format!("{p}-{i}"), Label::Monitored(p), s)?;
        }
    }
    for (u, s) in dataset.unmonitored.iter().enumerate() {
        write(format!("{u}"), Label::NonMonitored, s)?;
    }
    let path = dir.join(MANIFEST);
    fs::write(&path, manifest).map_err(|e| Error::io(&path, e))
}

/// Loads a trace directory through its manifest.
///
/// With `dedup_hosts`, unmonitored entries whose host shares its first
/// label (after a leading `www.`) with a monitored host or an earlier
/// unmonitored host are dropped.
pub fn load_dataset_dir(dir: &Path, dedup_hosts: bool) -> Result<Dataset> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let mut cols = line.split('\t');
        let (Some(file), Some(label)) = (cols.next(), cols.next()) else {
            return Err(Error::Format(format!("{}:{}: expected <file>\\t<label>", path.display(), i + 1)));
        };
        let host = cols.next().filter(|h| *h != "-").map(str::to_string);
        entries.push((file.to_string(), label.parse::<Label>()?, host));
    }

    let host_key = |h: &str| -> String {
        let h = h.trim().to_ascii_lowercase();
        let h = h.strip_prefix("www.").unwrap_or(&h).to_string();
        h.split('.').next().unwrap_or_default().to_string()
    };
    let mut seen: BTreeSet<String> = BTreeSet::new();
    if dedup_hosts {
        for (_, label, host) in &entries {
            if let (Label::Monitored(_), Some(h)) = (label, host) {
                seen.insert(host_key(h));
            }
        }
    }

    let mut by_page: BTreeMap<u32, Vec<PacketSequence>> = BTreeMap::new();
    let mut unmonitored = Vec::new();
    for (file, label, host) in entries {
        if dedup_hosts && label == Label::NonMonitored {
            if let Some(h) = &host {
                if !seen.insert(host_key(h)) {
                    continue;
                }
            }
        }
        let fpath = dir.join(&file);
        let body = fs::read_to_string(&fpath).map_err(|e| Error::io(&fpath, e))?;
        let mut seq = parse_trace(&body)?;
        seq = seq.with_origin(host.unwrap_or(file));
        match label {
            Label::Monitored(p) => by_page.entry(p).or_default().push(seq),
            Label::NonMonitored => unmonitored.push(seq),
        }
    }
    let monitored = by_page.into_values().enumerate().map(|(i, v)| (i as u32, v)).collect();
    Dataset::new(monitored, unmonitored)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(pages: usize, inst: usize, unmon: usize) -> Dataset {
        let mk = |tag: String| {
            PacketSequence::from_parts(&[0.0, 0.1], &[Direction::Out, Direction::In]).unwrap().with_origin(tag)
        };
        let monitored = (0..pages)
            .map(|p| (p as u32, (0..inst).map(|i| mk(format!("{p}-{i}"))).collect()))
            .collect();
        let unmonitored = (0..unmon).map(|u| mk(format!("u{u}"))).collect();
        Dataset::new(monitored, unmonitored).unwrap()
    }

    fn origins(d: &Dataset) -> BTreeSet<String> {
        d.elements().map(|(_, s)| s.origin().unwrap().to_string()).collect()
    }

    #[test]
    fn parse_trace_examples() {
        let s = parse_trace("0.0\t1\n0.5\t-1\n0.5\t-1").unwrap();
        let dirs: Vec<_> = s.directions().collect();
        assert_eq!(dirs, vec![Direction::Out, Direction::In, Direction::In]);
        let times: Vec<_> = s.cells().iter().map(|c| c.time).collect();
        assert_eq!(times, vec![0.0, 0.5, 0.5]);

        assert!(matches!(parse_trace(""), Err(Error::EmptyTrace)));

        let s = parse_trace("1.0\t512\n1.2\t-512").unwrap();
        assert_eq!(s.directions().collect::<Vec<_>>(), vec![Direction::Out, Direction::In]);
        assert!((s.cells()[1].time - 0.2).abs() < 1e-12);
        assert_eq!(s.cells()[0].time, 0.0);
    }

    #[test]
    fn parse_trace_rejects_bad_input() {
        assert!(matches!(parse_trace("0.0 1"), Err(Error::MalformedLine { line: 1, .. })));
        assert!(matches!(parse_trace("0.0\tx"), Err(Error::MalformedLine { .. })));
        assert!(matches!(parse_trace("0.0\t0"), Err(Error::MalformedLine { .. })));
        assert!(matches!(parse_trace("1.0\t1\n0.5\t1"), Err(Error::DecreasingTimestamp { line: 2, .. })));
        assert!(matches!(parse_trace("\n\n"), Err(Error::EmptyTrace)));
    }

    #[test]
    fn parse_spec_examples() {
        assert_eq!(parse_spec("50x100+20").unwrap(), DatasetSpec { n_monitored: 50, n_instances: 100, n_unmonitored: 20 });
        assert_eq!(parse_spec("100x500+50000").unwrap().total(), 100_000);
        assert_eq!(parse_spec("1x1+0").unwrap(), DatasetSpec { n_monitored: 1, n_instances: 1, n_unmonitored: 0 });
        for bad in ["", "50x100", "50+20", "ax1+2", "1x+2", "-1x1+2", "1x1++2", "99999999999999999999x1+0", "5x0+1"] {
            assert!(parse_spec(bad).is_err(), "{bad}");
        }
        assert!(parse_spec("4294967296x4294967296+4294967296").is_err() || usize::BITS > 64);
    }

    #[test]
    fn subset_shapes_and_bounds() {
        let d = toy(10, 8, 30);
        let s = subset(&d, &parse_spec("4x5+12").unwrap(), 7).unwrap();
        assert_eq!(s.n_pages(), 4);
        assert!(s.monitored().values().all(|v| v.len() == 5));
        assert_eq!(s.unmonitored().len(), 12);

        let same = subset(&d, &d.shape(), 3).unwrap();
        assert_eq!(origins(&same), origins(&d));

        assert!(subset(&d, &parse_spec("11x1+0").unwrap(), 1).is_err());
        assert!(subset(&d, &parse_spec("1x9+0").unwrap(), 1).is_err());
        assert!(subset(&d, &parse_spec("1x1+31").unwrap(), 1).is_err());
        assert_eq!(subset(&d, &parse_spec("4x5+12").unwrap(), 7).unwrap(), s);
    }

    #[test]
    fn folds_partition_the_dataset() {
        let d = toy(2, 2, 2);
        let folds = stratified_folds(&d, 2, 1).unwrap();
        assert_eq!(folds.len(), 2);
        for f in &folds {
            assert!(f.test.monitored().values().all(|v| v.len() == 1));
            assert_eq!(f.test.unmonitored().len(), 1);
            assert!(origins(&f.train).is_disjoint(&origins(&f.test)));
        }
        assert_eq!(stratified_folds(&d, 2, 1).unwrap(), folds);
        assert!(matches!(stratified_folds(&d, 3, 1), Err(Error::TooManyFolds { .. })));
        assert!(stratified_folds(&d, 1, 1).is_err());
    }

    #[test]
    fn ten_folds_match_the_reference_shape() {
        let d = toy(10, 50, 500);
        for f in stratified_folds(&d, 10, 4).unwrap() {
            assert_eq!(f.test.shape(), parse_spec("10x5+50").unwrap());
            assert_eq!(f.train.shape(), parse_spec("10x45+450").unwrap());
        }
    }

    #[test]
    fn cap_training_examples() {
        let d = toy(100, 45, 4500);
        let c = cap_training(&d, 1000, 2).unwrap();
        assert_eq!(c.shape(), parse_spec("100x5+500").unwrap());
        assert_eq!(cap_training(&d, 100_000, 2).unwrap(), d);
        let floor = cap_training(&d, 100, 2).unwrap();
        assert_eq!(floor.shape(), parse_spec("100x1+0").unwrap());
        assert!(cap_training(&d, 99, 2).is_err());
    }

    #[test]
    fn cap_training_never_exceeds_cap() {
        let d = toy(7, 3, 11);
        for cap in 7..d.len() {
            let c = cap_training(&d, cap, 0).unwrap();
            assert!(c.len() <= cap);
            assert_eq!(c.n_pages(), 7);
        }
    }

    #[test]
    fn dataset_dir_round_trip_and_dedup() {
        let dir = tempfile::tempdir().unwrap();
        let d = toy(2, 3, 4);
        write_dataset_dir(&d, dir.path()).unwrap();
        let back = load_dataset_dir(dir.path(), false).unwrap();
        assert_eq!(back.shape(), d.shape());

        let manifest = "0-0\t0\twww.news.com\n1\tnonmon\tnews.org\n2\tnonmon\tshop.com\n3\tnonmon\tshop.net\n";
        fs::write(dir.path().join(MANIFEST), manifest).unwrap();
        fs::write(dir.path().join("0-0"), "0\t1\n").unwrap();
        let dedup = load_dataset_dir(dir.path(), true).unwrap();
        assert_eq!(dedup.unmonitored().len(), 1);
        assert_eq!(dedup.unmonitored()[0].origin(), Some("shop.com"));
    }
}
