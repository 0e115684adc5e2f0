//! The six attack pipelines behind one match-score interface.
//!
//! | kind       | engine                         | match(P, C)                              |
//! |------------|--------------------------------|------------------------------------------|
//! | `BiXcor`   | per-class mean templates       | `X(R_t(P), R_t(C)) + X(R_ℓ(P), R_ℓ(C))`  |
//! | `PaSvm`    | one-vs-one RBF SVM on catalog  | pairwise votes for `C`                   |
//! | `CaOsad`   | one-vs-one SVM, OSA kernel     | pairwise votes for `C`                   |
//! | `WaKnn`    | weighted L1 over catalog       | `−min_{P'∈C} d(P, P')`                   |
//! | `HaKfp`    | random forest on catalog       | `Σ_trees L(C)/Σ_x L(x)`                  |
//! | `PaCumul`  | one-vs-one RBF SVM on CUMUL    | pairwise votes for `C`                   |
//!
//! The cross-correlation and nearest-neighbour scores are similarities
//! (larger is closer) so that every classifier picks the argmax.

pub mod forest;
pub mod knn;
pub mod svm;

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::distances::{weighted_l1_unchecked, XCorrPrepared, CUMUL_GAMMA, OSAD_MAX_LEN, PA_SVM_GAMMA};
use crate::features::{repr_catalog, repr_cumul, repr_xcorr, Catalog, XCorrRepr};
use crate::traces::{Dataset, Direction, Label, PacketSequence};
use crate::{Error, Result};

use forest::RandomForest;
use svm::{KernelPoints, Machine, Query};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ClassifierKind {
    BiXcor,
    PaSvm,
    CaOsad,
    WaKnn,
    HaKfp,
    PaCumul,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 6] = [
        ClassifierKind::BiXcor,
        ClassifierKind::PaSvm,
        ClassifierKind::CaOsad,
        ClassifierKind::WaKnn,
        ClassifierKind::HaKfp,
        ClassifierKind::PaCumul,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ClassifierKind::BiXcor => "Bi-XCor",
            ClassifierKind::PaSvm => "Pa-SVM",
            ClassifierKind::CaOsad => "Ca-OSAD",
            ClassifierKind::WaKnn => "Wa-kNN",
            ClassifierKind::HaKfp => "Ha-kFP",
            ClassifierKind::PaCumul => "Pa-CUMUL",
        }
    }

    pub fn is_svm(self) -> bool {
        matches!(self, ClassifierKind::PaSvm | ClassifierKind::CaOsad | ClassifierKind::PaCumul)
    }

    fn tag(self) -> u8 {
        ClassifierKind::ALL.iter().position(|&k| k == self).unwrap() as u8
    }
}

impl fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_lowercase();
        ClassifierKind::ALL
            .into_iter()
            .find(|k| k.name().replace('-', "").to_ascii_lowercase() == key)
            .ok_or_else(|| Error::param(format!("unknown classifier `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    /// Add a `NonMonitored` class trained on the unmonitored traces.
    pub background_class: bool,
    pub svm_cost: f64,
    pub svm_tolerance: f64,
    pub pa_svm_gamma: f64,
    pub cumul_gamma: f64,
    /// Min-max scale SVM features to [0, 1] using training ranges.
    pub min_max_scale: bool,
    pub osad_max_len: usize,
    pub knn_rounds: usize,
    pub knn_neighbors: usize,
    pub knn_delta: f64,
    pub forest_trees: usize,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            background_class: true,
            svm_cost: 87.0,
            svm_tolerance: 1e-3,
            pa_svm_gamma: PA_SVM_GAMMA,
            cumul_gamma: CUMUL_GAMMA,
            min_max_scale: false,
            osad_max_len: OSAD_MAX_LEN,
            knn_rounds: 3,
            knn_neighbors: 5,
            knn_delta: 0.01,
            forest_trees: 1000,
            seed: 0,
        }
    }
}

impl ClassifierConfig {
    /// Hex prefix of SHA-256 over the serialized config.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        let d = Sha256::digest(&bytes);
        d[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Per-class scores for one test element over the model's roster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchVector {
    /// Roster, ascending (`NonMonitored` last).
    pub labels: Vec<Label>,
    pub scores: Vec<f64>,
}

impl MatchVector {
    pub fn new(labels: Vec<Label>, scores: Vec<f64>) -> Result<Self> {
        if labels.len() != scores.len() {
            return Err(Error::LengthMismatch(labels.len(), scores.len()));
        }
        if labels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::param("roster labels must be strictly ascending"));
        }
        Ok(MatchVector { labels, scores })
    }

    /// Roster positions from best to worst match; equal scores keep roster
    /// order.
    pub fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.scores.len()).collect();
        idx.sort_by(|&a, &b| self.scores[b].total_cmp(&self.scores[a]).then(a.cmp(&b)));
        idx
    }

    pub fn top(&self) -> Label {
        let mut best = 0;
        for i in 1..self.scores.len() {
            if self.scores[i] > self.scores[best] {
                best = i;
            }
        }
        self.labels[best]
    }

    pub fn score_of(&self, label: Label) -> Option<f64> {
        self.labels.binary_search(&label).ok().map(|i| self.scores[i])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct MinMax {
    min: Vec<f64>,
    span: Vec<f64>,
}

impl MinMax {
    fn fit(rows: &[Vec<f64>]) -> Self {
        let d = rows[0].len();
        let mut min = vec![f64::INFINITY; d];
        let mut max = vec![f64::NEG_INFINITY; d];
        for r in rows {
            for i in 0..d {
                min[i] = min[i].min(r[i]);
                max[i] = max[i].max(r[i]);
            }
        }
        let span = min.iter().zip(&max).map(|(a, b)| b - a).collect();
        MinMax { min, span }
    }

    fn apply(&self, v: &mut [f64]) {
        for ((x, m), s) in v.iter_mut().zip(&self.min).zip(&self.span) {
            *x = if *s > 0.0 { (*x - m) / s } else { 0.0 };
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Engine {
    Templates(Vec<XCorrPrepared>),
    Svm {
        support: KernelPoints,
        machines: Vec<Machine>,
        scaler: Option<MinMax>,
        osad_max_len: usize,
    },
    Knn {
        weights: Vec<f64>,
        points: Vec<Vec<f64>>,
        classes: Vec<u32>,
    },
    Forest(RandomForest),
}

/// Diagnostics collected while training.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingNotes {
    pub degenerate_machines: usize,
    pub unconverged_machines: usize,
    pub support_vectors: usize,
}

/// An immutable trained classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    kind: ClassifierKind,
    roster: Vec<Label>,
    engine: Engine,
    seed: u64,
    config_hash: String,
    notes: TrainingNotes,
}

fn catalog_of(kind: ClassifierKind) -> Catalog {
    match kind {
        ClassifierKind::PaSvm => Catalog::PaSvm,
        ClassifierKind::WaKnn => Catalog::WaKnn,
        ClassifierKind::HaKfp => Catalog::HaKfp,
        _ => Catalog::Cumul,
    }
}

fn features(kind: ClassifierKind, seq: &PacketSequence) -> Vec<f64> {
    match kind {
        ClassifierKind::PaCumul => repr_cumul(seq).values,
        k => repr_catalog(seq, catalog_of(k)).values,
    }
}

/// Roster for `train`: its monitored pages, plus `NonMonitored` when the
/// background class is enabled and unmonitored traces exist.
pub fn roster_for(train: &Dataset, config: &ClassifierConfig) -> Vec<Label> {
    let mut roster: Vec<Label> = train.monitored().keys().map(|&p| Label::Monitored(p)).collect();
    if config.background_class && !train.unmonitored().is_empty() {
        roster.push(Label::NonMonitored);
    }
    roster
}

/// Trains `kind` on `train`.
pub fn train(kind: ClassifierKind, train: &Dataset, config: &ClassifierConfig) -> Result<TrainedModel> {
    let roster = roster_for(train, config);
    if roster.is_empty() {
        return Err(Error::param("training set has no classes"));
    }
    if kind.is_svm() && roster.len() < 2 {
        return Err(Error::param(format!("{kind} needs at least two classes")));
    }
    let elements: Vec<(usize, &PacketSequence)> = train
        .elements()
        .filter_map(|(l, s)| roster.binary_search(&l).ok().map(|c| (c, s)))
        .collect();
    let mut notes = TrainingNotes::default();

    let engine = match kind {
        ClassifierKind::BiXcor => {
            let templates = (0..roster.len())
                .into_par_iter()
                .map(|c| {
                    let members: Vec<XCorrRepr> =
                        elements.iter().filter(|(k, _)| *k == c).map(|(_, s)| repr_xcorr(s)).collect();
                    XCorrPrepared::new(mean_template(&members))
                })
                .collect();
            Engine::Templates(templates)
        }
        ClassifierKind::PaSvm | ClassifierKind::PaCumul | ClassifierKind::CaOsad => {
            let mut members = vec![Vec::new(); roster.len()];
            for (i, (c, _)) in elements.iter().enumerate() {
                members[*c].push(i);
            }
            let (points, scaler) = if kind == ClassifierKind::CaOsad {
                let pts = elements.par_iter().map(|(_, s)| s.directions().take(config.osad_max_len).collect()).collect();
                (KernelPoints::Osad { points: pts }, None)
            } else {
                let mut rows: Vec<Vec<f64>> = elements.par_iter().map(|(_, s)| features(kind, s)).collect();
                let scaler = config.min_max_scale.then(|| MinMax::fit(&rows));
                if let Some(sc) = &scaler {
                    rows.iter_mut().for_each(|r| sc.apply(r));
                }
                let gamma = if kind == ClassifierKind::PaSvm { config.pa_svm_gamma } else { config.cumul_gamma };
                (KernelPoints::Rbf { gamma, points: rows }, scaler)
            };
            let mut machines = svm::train_pairs(&points, &members, config.svm_cost, config.svm_tolerance);
            let used = svm::compact_support(&mut machines);
            notes.degenerate_machines = machines.iter().filter(|m| m.degenerate).count();
            notes.unconverged_machines = machines.iter().filter(|m| !m.converged).count();
            notes.support_vectors = used.len();
            Engine::Svm { support: points.select(&used), machines, scaler, osad_max_len: config.osad_max_len }
        }
        ClassifierKind::WaKnn => {
            let points: Vec<Vec<f64>> = elements.par_iter().map(|(_, s)| features(kind, s)).collect();
            let classes: Vec<u32> = elements.iter().map(|(c, _)| *c as u32).collect();
            let weights = weights_from(&points, &classes, &roster, config);
            Engine::Knn { weights, points, classes }
        }
        ClassifierKind::HaKfp => {
            let points: Vec<Vec<f64>> = elements.par_iter().map(|(_, s)| features(kind, s)).collect();
            let classes: Vec<usize> = elements.iter().map(|(c, _)| *c).collect();
            Engine::Forest(RandomForest::fit(&points, &classes, roster.len(), config.forest_trees, config.seed))
        }
    };
    Ok(TrainedModel { kind, roster, engine, seed: config.seed, config_hash: config.hash(), notes })
}

/// Learns weights on monitored points only; the unmonitored traces share a
/// label without sharing a page, so they carry no neighbourhood signal.
fn weights_from(points: &[Vec<f64>], classes: &[u32], roster: &[Label], config: &ClassifierConfig) -> Vec<f64> {
    let monitored: Vec<usize> =
        (0..points.len()).filter(|&i| roster[classes[i] as usize].is_monitored()).collect();
    let distinct: std::collections::BTreeSet<u32> = monitored.iter().map(|&i| classes[i]).collect();
    let pick: Vec<usize> = if distinct.len() >= 2 { monitored } else { (0..points.len()).collect() };
    let x: Vec<Vec<f64>> = pick.iter().map(|&i| points[i].clone()).collect();
    let y: Vec<usize> = pick.iter().map(|&i| classes[i] as usize).collect();
    knn::learn(&x, &y, config.knn_rounds, config.knn_neighbors, config.knn_delta, config.seed)
}

/// Weighted-L1 feature weights learned on the monitored pages of `train`.
pub fn learn_weights(train: &Dataset, rounds: usize, k_neighbors: usize, delta: f64, seed: u64) -> Result<Vec<f64>> {
    if k_neighbors == 0 {
        return Err(Error::param("k_neighbors must be at least 1"));
    }
    if !(0.0..1.0).contains(&delta) {
        return Err(Error::param(format!("delta must be in [0, 1), got {delta}")));
    }
    let config = ClassifierConfig {
        knn_rounds: rounds,
        knn_neighbors: k_neighbors,
        knn_delta: delta,
        seed,
        ..ClassifierConfig::default()
    };
    let roster = roster_for(train, &config);
    if roster.len() < 2 {
        return Err(Error::param("weight learning needs at least two classes"));
    }
    let (points, classes): (Vec<Vec<f64>>, Vec<u32>) = train
        .elements()
        .map(|(l, s)| (repr_catalog(s, Catalog::WaKnn).values, roster.binary_search(&l).unwrap() as u32))
        .unzip();
    Ok(weights_from(&points, &classes, &roster, &config))
}

/// Element-wise mean after aligning every member to the median length
/// (truncate or zero-pad).
fn mean_template(members: &[XCorrRepr]) -> XCorrRepr {
    let mut lens: Vec<usize> = members.iter().map(|m| m.times.len()).collect();
    lens.sort_unstable();
    let len = lens[lens.len() / 2];
    let mut times = vec![0.0; len];
    let mut lengths = vec![0.0; len];
    for m in members {
        for i in 0..len.min(m.times.len()) {
            times[i] += m.times[i];
            lengths[i] += m.lengths[i];
        }
    }
    let n = members.len() as f64;
    times.iter_mut().chain(lengths.iter_mut()).for_each(|v| *v /= n);
    XCorrRepr { times, lengths }
}

impl TrainedModel {
    pub fn kind(&self) -> ClassifierKind {
        self.kind
    }

    pub fn roster(&self) -> &[Label] {
        &self.roster
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn config_hash(&self) -> &str {
        &self.config_hash
    }

    pub fn notes(&self) -> &TrainingNotes {
        &self.notes
    }

    /// Number of pairwise machines (SVM kinds) or trees (forest).
    pub fn unit_count(&self) -> usize {
        match &self.engine {
            Engine::Svm { machines, .. } => machines.len(),
            Engine::Forest(f) => f.n_trees(),
            Engine::Templates(t) => t.len(),
            Engine::Knn { points, .. } => points.len(),
        }
    }

    /// Bi-XCor class templates (times, lengths) in roster order.
    pub fn templates(&self) -> Option<Vec<&XCorrRepr>> {
        match &self.engine {
            Engine::Templates(t) => Some(t.iter().map(|p| &p.repr).collect()),
            _ => None,
        }
    }

    pub fn knn_weights(&self) -> Option<&[f64]> {
        match &self.engine {
            Engine::Knn { weights, .. } => Some(weights),
            _ => None,
        }
    }

    /// Match scores of `seq` against every roster class.
    pub fn match_sequence(&self, seq: &PacketSequence) -> MatchVector {
        let scores = match &self.engine {
            Engine::Templates(templates) => {
                let p = XCorrPrepared::new(repr_xcorr(seq));
                templates.iter().map(|t| p.similarity(t)).collect()
            }
            Engine::Svm { support, machines, scaler, osad_max_len } => {
                let query = if self.kind == ClassifierKind::CaOsad {
                    Query::Directions(seq.directions().take(*osad_max_len).collect::<Vec<Direction>>())
                } else {
                    let mut f = features(self.kind, seq);
                    if let Some(sc) = scaler {
                        sc.apply(&mut f);
                    }
                    Query::Features(f)
                };
                let k = support.row_against(&query);
                let mut votes = vec![0.0; self.roster.len()];
                for m in machines {
                    votes[m.vote(&k)] += 1.0;
                }
                votes
            }
            Engine::Knn { weights, points, classes } => {
                let f = features(self.kind, seq);
                let mut best = vec![f64::INFINITY; self.roster.len()];
                for (p, &c) in points.iter().zip(classes) {
                    let d = weighted_l1_unchecked(&f, p, weights);
                    let slot = &mut best[c as usize];
                    if d < *slot {
                        *slot = d;
                    }
                }
                best.into_iter().map(|d| -d).collect()
            }
            Engine::Forest(forest) => forest.match_scores(&features(self.kind, seq)),
        };
        MatchVector { labels: self.roster.clone(), scores }
    }

    /// Scores many sequences; output order follows the input.
    pub fn match_many(&self, seqs: &[&PacketSequence]) -> Vec<MatchVector> {
        seqs.par_iter().map(|s| self.match_sequence(s)).collect()
    }

    pub fn classify(&self, seq: &PacketSequence) -> Label {
        self.match_sequence(seq).top()
    }

    /// Serializes into the versioned model container: magic `WFPM`, u16
    /// version, u8 kind tag, u8 reserved, 8-byte config hash prefix, u64
    /// payload length, then a JSON payload.
    pub fn to_bytes(&self) -> Vec<u8> {
        let payload = serde_json::to_vec(self).expect("model serializes");
        let mut out = Vec::with_capacity(payload.len() + 24);
        out.extend_from_slice(MODEL_MAGIC);
        out.extend_from_slice(&MODEL_VERSION.to_le_bytes());
        out.push(self.kind.tag());
        out.push(0);
        let mut hash = [0u8; 8];
        for (i, h) in hash.iter_mut().enumerate() {
            *h = u8::from_str_radix(&self.config_hash[2 * i..2 * i + 2], 16).unwrap_or(0);
        }
        out.extend_from_slice(&hash);
        out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
        out.extend_from_slice(&payload);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 24 || &bytes[..4] != MODEL_MAGIC {
            return Err(Error::Format("not a model file".into()));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != MODEL_VERSION {
            return Err(Error::Format(format!("unsupported model version {version}")));
        }
        let len = u64::from_le_bytes(bytes[16..24].try_into().unwrap()) as usize;
        let payload = bytes.get(24..24 + len).ok_or_else(|| Error::Format("truncated model file".into()))?;
        let model: TrainedModel =
            serde_json::from_slice(payload).map_err(|e| Error::Format(format!("model payload: {e}")))?;
        if model.kind.tag() != bytes[6] {
            return Err(Error::Format("model kind tag does not match payload".into()));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

const MODEL_MAGIC: &[u8; 4] = b"WFPM";
const MODEL_VERSION: u16 = 1;

/// Argmax of the match vector; ties go to the lowest page id, with
/// `NonMonitored` last.
pub fn classify_baseline(model: &TrainedModel, seq: &PacketSequence) -> Label {
    model.classify(seq)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::traces::Direction::{In, Out};
    use std::collections::BTreeMap;

    fn seq(times: &[f64], dirs: &[Direction]) -> PacketSequence {
        PacketSequence::from_parts(times, dirs).unwrap()
    }

    /// Page `p` is `p + 3` outgoing cells followed by `2p + 4` incoming, with
    /// page-specific spacing; every instance of a page is identical.
    fn page(p: usize) -> PacketSequence {
        let n_out = p + 3;
        let n = n_out + 2 * p + 4;
        let dirs: Vec<Direction> = (0..n).map(|i| if i < n_out || i % (p + 2) == 0 { Out } else { In }).collect();
        let times: Vec<f64> = (0..n).map(|i| (i * i) as f64 * 0.001 * (p + 1) as f64).collect();
        seq(&times, &dirs)
    }

    fn clusters(pages: usize, inst: usize, unmon: usize) -> Dataset {
        let monitored: BTreeMap<u32, Vec<PacketSequence>> =
            (0..pages).map(|p| (p as u32, vec![page(p); inst])).collect();
        let unmonitored = (0..unmon).map(|u| page(pages + 2 + u)).collect();
        Dataset::new(monitored, unmonitored).unwrap()
    }

    fn config() -> ClassifierConfig {
        ClassifierConfig { forest_trees: 25, min_max_scale: true, pa_svm_gamma: 1.0, cumul_gamma: 1.0, ..Default::default() }
    }

    #[test]
    fn kind_names_round_trip() {
        for k in ClassifierKind::ALL {
            assert_eq!(k.name().parse::<ClassifierKind>().unwrap(), k);
        }
        assert_eq!("ha_kfp".parse::<ClassifierKind>().unwrap(), ClassifierKind::HaKfp);
        assert!("svm".parse::<ClassifierKind>().is_err());
    }

    #[test]
    fn xcor_template_is_the_mean() {
        let a = seq(&[0.0, 1.0, 2.0], &[Out, In, Out]);
        let b = seq(&[0.0, 3.0, 4.0], &[Out, Out, Out]);
        let d = Dataset::new(BTreeMap::from([(0, vec![a, b])]), vec![]).unwrap();
        let m = train(ClassifierKind::BiXcor, &d, &config()).unwrap();
        let t = m.templates().unwrap();
        assert_eq!(t[0].times, vec![0.0, 2.0, 1.0]);
        assert_eq!(t[0].lengths, vec![1.0, 0.0, 1.0]);
    }

    #[test]
    fn svm_pair_count() {
        let d = clusters(4, 3, 2);
        let m = train(ClassifierKind::PaCumul, &d, &config()).unwrap();
        assert_eq!(m.unit_count(), 10);
        let v = m.match_sequence(&page(1));
        assert_eq!(v.scores.iter().sum::<f64>(), 10.0);
    }

    #[test]
    fn every_kind_fits_zero_variance_clusters() {
        let d = clusters(4, 3, 3);
        for kind in ClassifierKind::ALL {
            let m = train(kind, &d, &config()).unwrap();
            for (label, s) in d.elements() {
                assert_eq!(classify_baseline(&m, s), label, "{kind} on {label}");
            }
        }
    }

    #[test]
    fn knn_exact_training_match_scores_zero() {
        let d = clusters(3, 2, 2);
        let m = train(ClassifierKind::WaKnn, &d, &config()).unwrap();
        let v = m.match_sequence(&page(2));
        assert_eq!(v.score_of(Label::Monitored(2)), Some(0.0));
        assert_eq!(v.top(), Label::Monitored(2));
        assert_eq!(m.classify(&d.unmonitored()[1]), Label::NonMonitored);
    }

    #[test]
    fn ties_break_towards_low_page_ids() {
        let v = MatchVector::new(
            vec![Label::Monitored(0), Label::Monitored(1), Label::NonMonitored],
            vec![2.0, 2.0, 2.0],
        )
        .unwrap();
        assert_eq!(v.top(), Label::Monitored(0));
        assert_eq!(v.ranking(), vec![0, 1, 2]);
        let v = MatchVector::new(vec![Label::Monitored(3), Label::NonMonitored], vec![1.0, 5.0]).unwrap();
        assert_eq!(v.top(), Label::NonMonitored);
        assert!(MatchVector::new(vec![Label::NonMonitored, Label::Monitored(0)], vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn forest_votes_sum_to_tree_count() {
        let d = clusters(3, 4, 3);
        let m = train(ClassifierKind::HaKfp, &d, &config()).unwrap();
        for (_, s) in d.elements() {
            assert_eq!(m.match_sequence(s).scores.iter().sum::<f64>(), 25.0);
        }
    }

    #[test]
    fn svm_needs_two_classes() {
        let d = clusters(1, 3, 0);
        assert!(train(ClassifierKind::PaSvm, &d, &config()).is_err());
        assert!(train(ClassifierKind::BiXcor, &d, &config()).is_ok());
    }

    #[test]
    fn learn_weights_contract() {
        let d = clusters(3, 3, 0);
        assert!(learn_weights(&d, 2, 0, 0.01, 1).is_err());
        let w = learn_weights(&d, 0, 2, 0.0, 1).unwrap();
        assert!(w.iter().all(|&x| x == 1.0));
        assert_eq!(learn_weights(&d, 2, 2, 0.05, 4).unwrap(), learn_weights(&d, 2, 2, 0.05, 4).unwrap());
    }

    #[test]
    fn model_container_round_trip() {
        let d = clusters(3, 3, 2);
        for kind in [ClassifierKind::PaSvm, ClassifierKind::HaKfp, ClassifierKind::BiXcor, ClassifierKind::WaKnn] {
            let m = train(kind, &d, &config()).unwrap();
            let back = TrainedModel::from_bytes(&m.to_bytes()).unwrap();
            assert_eq!(back, m);
        }
        assert!(TrainedModel::from_bytes(b"nope").is_err());
    }
}
