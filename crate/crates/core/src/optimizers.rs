//! Precision optimizers: rules that may turn a positive decision into a
//! rejection (classified `NonMonitored`), and never into another page.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifiers::{ClassifierKind, MatchVector};
use crate::distances::{DistanceKind, Prepared};
use crate::traces::{Dataset, Label};
use crate::{Error, Result};

/// Outcome of a precision optimizer on one element.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PoDecision {
    Accept(Label),
    Reject,
}

impl PoDecision {
    /// The label the element ends up classified as.
    pub fn label(self) -> Label {
        match self {
            PoDecision::Accept(l) => l,
            PoDecision::Reject => Label::NonMonitored,
        }
    }

    fn accept_if(assumed: Label, keep: bool) -> Self {
        if keep && assumed.is_monitored() {
            PoDecision::Accept(assumed)
        } else {
            PoDecision::Reject
        }
    }
}

/// Match scores mapped affinely onto `[0, 1]`, best class at 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaledMatchVector {
    pub labels: Vec<Label>,
    pub scores: Vec<f64>,
    /// Roster positions from best (`C_1`) to worst.
    pub order: Vec<usize>,
    /// All raw scores were equal; every scaled score is 0.
    pub degenerate: bool,
}

impl ScaledMatchVector {
    pub fn assumed(&self) -> Label {
        self.labels[self.order[0]]
    }

    /// Scaled score of the class ranked `rank` (0-based, 0 = `C_1`).
    pub fn ranked(&self, rank: usize) -> f64 {
        self.scores[self.order[rank]]
    }

    pub fn score_of(&self, label: Label) -> Option<f64> {
        self.labels.binary_search(&label).ok().map(|i| self.scores[i])
    }
}

pub fn scale_matches(raw: &MatchVector) -> Result<ScaledMatchVector> {
    if raw.scores.len() < 2 {
        return Err(Error::param("scaling needs at least two classes"));
    }
    let max = raw.scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = raw.scores.iter().copied().fold(f64::INFINITY, f64::min);
    let span = max - min;
    let degenerate = !(span > 0.0);
    let scores = if degenerate {
        vec![0.0; raw.scores.len()]
    } else {
        raw.scores.iter().map(|&x| ((x - min) / span).clamp(0.0, 1.0)).collect()
    };
    Ok(ScaledMatchVector { labels: raw.labels.clone(), scores, order: raw.ranking(), degenerate })
}

/// Rejects when the mean scaled score of ranks 2..=K+1 exceeds `m_match`.
/// `m_match ≥ 1` can never reject, degenerate vectors included.
pub fn confidence_po(scaled: &ScaledMatchVector, k: usize, m_match: f64) -> Result<PoDecision> {
    if k == 0 || k + 1 > scaled.labels.len() {
        return Err(Error::param(format!("K = {k} needs a roster of at least {} classes", k + 1)));
    }
    let assumed = scaled.assumed();
    if m_match >= 1.0 {
        return Ok(PoDecision::accept_if(assumed, true));
    }
    if scaled.degenerate {
        return Ok(PoDecision::Reject);
    }
    let runners: f64 = (1..=k).map(|i| scaled.ranked(i)).sum();
    Ok(PoDecision::accept_if(assumed, runners <= k as f64 * m_match))
}

/// Expected in-class distance per monitored page.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InClassDistanceTable {
    pub distance: String,
    pub entries: BTreeMap<u32, f64>,
    /// Pages with a single training instance (entry forced to 0).
    pub singletons: Vec<u32>,
}

impl InClassDistanceTable {
    pub fn expected(&self, label: Label) -> Option<f64> {
        match label {
            Label::Monitored(p) => self.entries.get(&p).copied(),
            Label::NonMonitored => None,
        }
    }
}

/// Mean over all unordered instance pairs of each monitored page.
pub fn build_inclass_table(train: &Dataset, kind: &DistanceKind) -> Result<InClassDistanceTable> {
    kind.validate()?;
    let rows: Vec<(u32, f64, bool)> = train
        .monitored()
        .par_iter()
        .map(|(&page, seqs)| {
            let prepared: Vec<Prepared> = seqs.iter().map(|s| kind.prepare(s)).collect();
            inclass_mean(kind, &prepared).map_or((page, 0.0, true), |m| (page, m, false))
        })
        .collect();
    Ok(InClassDistanceTable {
        distance: kind.name().to_string(),
        entries: rows.iter().map(|&(p, m, _)| (p, m)).collect(),
        singletons: rows.iter().filter(|r| r.2).map(|r| r.0).collect(),
    })
}

/// Mean pairwise distance, `None` for fewer than two instances.
pub fn inclass_mean(kind: &DistanceKind, prepared: &[Prepared]) -> Option<f64> {
    let n = prepared.len();
    if n < 2 {
        return None;
    }
    let mut sum = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            sum += kind.between(&prepared[i], &prepared[j]);
        }
    }
    Some(sum / (n * (n - 1) / 2) as f64)
}

/// Rejects when the element is more than `m` times the expected in-class
/// distance from the assumed class.
pub fn too_far_po(assumed: Label, d_p: f64, expected: f64, m: f64) -> Result<PoDecision> {
    if d_p < 0.0 || expected < 0.0 || m < 0.0 || d_p.is_nan() || expected.is_nan() || m.is_nan() {
        return Err(Error::param("too-far inputs must be non-negative"));
    }
    let keep = if expected == 0.0 { d_p == 0.0 } else { d_p <= m * expected };
    Ok(PoDecision::accept_if(assumed, keep))
}

/// Rejects when at least `m` other classes are strictly closer than the
/// assumed one. `m = 0` rejects everything.
pub fn too_close_po(dists: &[(Label, f64)], assumed: Label, m: usize) -> Result<PoDecision> {
    let own = dists
        .iter()
        .find(|(l, _)| *l == assumed)
        .map(|d| d.1)
        .ok_or_else(|| Error::UnknownLabel(assumed.to_string()))?;
    let closer = dists.iter().filter(|(l, d)| *l != assumed && *d < own).count();
    Ok(PoDecision::accept_if(assumed, closer < m))
}

pub fn ensemble_unanimous(labels: &[Label]) -> Result<PoDecision> {
    let first = *labels.first().ok_or_else(|| Error::param("ensemble needs at least one classifier"))?;
    Ok(PoDecision::accept_if(first, labels.iter().all(|&l| l == first)))
}

/// Baseline precision ranking used to break plurality ties, most precise
/// first.
pub const DEFAULT_PRECISION_RANK: [ClassifierKind; 6] = [
    ClassifierKind::CaOsad,
    ClassifierKind::HaKfp,
    ClassifierKind::PaCumul,
    ClassifierKind::WaKnn,
    ClassifierKind::PaSvm,
    ClassifierKind::BiXcor,
];

/// Positions of `members` ordered by [`DEFAULT_PRECISION_RANK`].
pub fn precision_rank_of(members: &[ClassifierKind]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..members.len()).collect();
    idx.sort_by_key(|&i| DEFAULT_PRECISION_RANK.iter().position(|&k| k == members[i]));
    idx
}

/// Most common per-classifier argmax. Among tied labels the one chosen by
/// the best-ranked classifier wins.
pub fn plurality(scaled: &[ScaledMatchVector], precision_rank: &[usize]) -> Result<Label> {
    if scaled.is_empty() {
        return Err(Error::param("ensemble needs at least one classifier"));
    }
    let roster = &scaled[0].labels;
    if scaled.iter().any(|s| &s.labels != roster) {
        return Err(Error::RosterMismatch);
    }
    let mut rank = precision_rank.to_vec();
    rank.sort_unstable();
    if rank != (0..scaled.len()).collect::<Vec<_>>() {
        return Err(Error::param("precision ranking must be a permutation of the classifiers"));
    }
    let votes: Vec<Label> = scaled.iter().map(ScaledMatchVector::assumed).collect();
    let mut count: BTreeMap<Label, usize> = BTreeMap::new();
    for &v in &votes {
        *count.entry(v).or_default() += 1;
    }
    let top = *count.values().max().unwrap();
    Ok(precision_rank.iter().map(|&i| votes[i]).find(|l| count[l] == top).unwrap())
}

/// Rejects when the summed scaled score for the plurality class is below
/// `m_ensemble`.
pub fn ensemble_threshold(scaled: &[ScaledMatchVector], precision_rank: &[usize], m_ensemble: f64) -> Result<PoDecision> {
    let weights = vec![1.0; scaled.len()];
    weighted_sum_po(scaled, precision_rank, &weights, m_ensemble)
}

/// As [`ensemble_threshold`] with per-classifier weights on the scores.
pub fn ensemble_weighted(
    scaled: &[ScaledMatchVector],
    precision_rank: &[usize],
    weights: &[f64],
    m: f64,
) -> Result<PoDecision> {
    if weights.len() != scaled.len() {
        return Err(Error::LengthMismatch(weights.len(), scaled.len()));
    }
    if weights.iter().any(|w| !(*w >= 0.0)) {
        return Err(Error::param("ensemble weights must be non-negative"));
    }
    weighted_sum_po(scaled, precision_rank, weights, m)
}

fn weighted_sum_po(scaled: &[ScaledMatchVector], rank: &[usize], weights: &[f64], m: f64) -> Result<PoDecision> {
    let assumed = plurality(scaled, rank)?;
    let sum: f64 = scaled.iter().zip(weights).map(|(s, w)| w * s.score_of(assumed).unwrap()).sum();
    Ok(PoDecision::accept_if(assumed, sum >= m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::traces::PacketSequence;
    use crate::traces::Direction::{In, Out};
    use Label::{Monitored as M, NonMonitored as N};

    fn mv(scores: &[f64]) -> MatchVector {
        let mut labels: Vec<Label> = (0..scores.len() as u32 - 1).map(M).collect();
        labels.push(N);
        MatchVector::new(labels, scores.to_vec()).unwrap()
    }

    #[test]
    fn scaling_is_affine_and_idempotent() {
        let s = scale_matches(&mv(&[4.0, 2.0, 0.0])).unwrap();
        assert_eq!(s.scores, vec![1.0, 0.5, 0.0]);
        assert!(!s.degenerate);
        let again = scale_matches(&MatchVector::new(s.labels.clone(), s.scores.clone()).unwrap()).unwrap();
        assert_eq!(again, s);
        let flat = scale_matches(&mv(&[3.0, 3.0, 3.0])).unwrap();
        assert!(flat.degenerate);
        assert_eq!(flat.scores, vec![0.0; 3]);
        assert!(scale_matches(&MatchVector::new(vec![M(0)], vec![1.0]).unwrap()).is_err());
    }

    #[test]
    fn confidence_examples() {
        let s = scale_matches(&mv(&[1.0, 0.95, 0.0, 0.2])).unwrap();
        assert_eq!(confidence_po(&s, 1, 0.9).unwrap(), PoDecision::Reject);
        let s = scale_matches(&mv(&[1.0, 0.5, 0.3, 0.0])).unwrap();
        assert_eq!(confidence_po(&s, 2, 0.5).unwrap(), PoDecision::Accept(M(0)));
        let s = scale_matches(&mv(&[1.0, 1.0, 1.0, 0.0])).unwrap();
        assert_eq!(confidence_po(&s, 2, 1.0).unwrap(), PoDecision::Accept(M(0)));
        assert!(confidence_po(&s, 4, 0.5).is_err());
        let flat = scale_matches(&mv(&[2.0, 2.0, 2.0])).unwrap();
        assert_eq!(confidence_po(&flat, 1, 0.99).unwrap(), PoDecision::Reject);
        assert_eq!(confidence_po(&flat, 1, 1.0).unwrap(), PoDecision::Accept(M(0)));
    }

    #[test]
    fn non_monitored_assumption_passes_through() {
        let s = scale_matches(&mv(&[0.0, 0.1, 9.0])).unwrap();
        assert_eq!(confidence_po(&s, 1, 1.0).unwrap(), PoDecision::Reject);
        assert_eq!(too_far_po(N, 0.0, 1.0, 1.0).unwrap().label(), N);
    }

    #[test]
    fn too_far_examples() {
        assert_eq!(too_far_po(M(1), 0.5, 0.4, 1.0).unwrap(), PoDecision::Reject);
        assert_eq!(too_far_po(M(1), 0.5, 0.4, 2.0).unwrap(), PoDecision::Accept(M(1)));
        assert_eq!(too_far_po(M(1), 0.0, 0.0, 1.0).unwrap(), PoDecision::Accept(M(1)));
        assert_eq!(too_far_po(M(1), 0.1, 0.0, 9.0).unwrap(), PoDecision::Reject);
        assert!(too_far_po(M(1), -0.1, 0.4, 1.0).is_err());
    }

    #[test]
    fn too_close_examples() {
        let d = [(M(0), 0.2), (M(1), 0.5), (M(2), 0.1)];
        assert_eq!(too_close_po(&d, M(2), 1).unwrap(), PoDecision::Accept(M(2)));
        assert_eq!(too_close_po(&d, M(0), 1).unwrap(), PoDecision::Reject);
        assert_eq!(too_close_po(&d, M(0), 2).unwrap(), PoDecision::Accept(M(0)));
        assert_eq!(too_close_po(&d, M(1), 2).unwrap(), PoDecision::Reject);
        assert!(too_close_po(&d, M(7), 1).is_err());
    }

    #[test]
    fn unanimous_examples() {
        assert_eq!(ensemble_unanimous(&[M(3), M(3), M(3)]).unwrap(), PoDecision::Accept(M(3)));
        assert_eq!(ensemble_unanimous(&[M(3), M(3), M(4)]).unwrap(), PoDecision::Reject);
        assert_eq!(ensemble_unanimous(&[M(3), N]).unwrap(), PoDecision::Reject);
        assert!(ensemble_unanimous(&[]).is_err());
    }

    #[test]
    fn threshold_examples() {
        let top0 = scale_matches(&mv(&[5.0, 1.0, 0.0])).unwrap();
        let five = vec![top0.clone(); 5];
        let rank: Vec<usize> = (0..5).collect();
        assert_eq!(ensemble_threshold(&five, &rank, 3.5).unwrap(), PoDecision::Accept(M(0)));
        let other = scale_matches(&mv(&[0.2, 1.0, 0.0])).unwrap();
        let split = vec![top0.clone(), top0.clone(), top0.clone(), other.clone(), other.clone()];
        // Sum for page 0: 3 + 0.2 + 0.2 = 3.4.
        assert_eq!(ensemble_threshold(&split, &rank, 3.5).unwrap(), PoDecision::Reject);
        assert_eq!(ensemble_threshold(&split, &rank, 3.4 - 1e-9).unwrap(), PoDecision::Accept(M(0)));
    }

    #[test]
    fn plurality_ties_follow_rank() {
        let a = scale_matches(&mv(&[1.0, 0.0, 0.0])).unwrap();
        let b = scale_matches(&mv(&[0.0, 1.0, 0.0])).unwrap();
        let v = vec![a, b];
        assert_eq!(plurality(&v, &[0, 1]).unwrap(), M(0));
        assert_eq!(plurality(&v, &[1, 0]).unwrap(), M(1));
        assert!(plurality(&v, &[0, 0]).is_err());
    }

    #[test]
    fn uniform_weights_match_threshold() {
        let vs: Vec<ScaledMatchVector> = [[3.0, 1.0, 0.0], [2.0, 2.5, 0.0], [0.0, 1.0, 4.0]]
            .iter()
            .map(|s| scale_matches(&mv(s)).unwrap())
            .collect();
        let rank = [0, 1, 2];
        for m in [0.1, 0.3, 0.5, 0.8] {
            let w = ensemble_weighted(&vs, &rank, &[1.0 / 3.0; 3], m).unwrap();
            let t = ensemble_threshold(&vs, &rank, m * 3.0).unwrap();
            assert_eq!(w, t, "m = {m}");
        }
        assert!(ensemble_weighted(&vs, &rank, &[0.5, 0.5], 0.1).is_err());
    }

    #[test]
    fn roster_mismatch_is_an_error() {
        let a = scale_matches(&mv(&[1.0, 0.0, 0.0])).unwrap();
        let b = scale_matches(&mv(&[1.0, 0.0])).unwrap();
        assert!(matches!(plurality(&[a, b], &[0, 1]), Err(Error::RosterMismatch)));
    }

    #[test]
    fn rank_of_members() {
        let members = [ClassifierKind::BiXcor, ClassifierKind::HaKfp, ClassifierKind::WaKnn];
        assert_eq!(precision_rank_of(&members), vec![1, 2, 0]);
    }

    #[test]
    fn inclass_means() {
        let seq = |dirs: &[crate::traces::Direction]| {
            let t: Vec<f64> = (0..dirs.len()).map(|i| i as f64).collect();
            PacketSequence::from_parts(&t, dirs).unwrap()
        };
        let kind = DistanceKind::osad();
        let a = seq(&[Out, In, In, In]);
        let b = seq(&[Out, Out, In, In]);
        let monitored = BTreeMap::from([(0, vec![a.clone(), a.clone()]), (1, vec![a.clone(), b.clone()]), (2, vec![b.clone()])]);
        let t = build_inclass_table(&Dataset::new(monitored, vec![]).unwrap(), &kind).unwrap();
        assert_eq!(t.entries[&0], 0.0);
        assert!((t.entries[&1] - kind.distance(&a, &b)).abs() < 1e-12);
        assert_eq!(t.singletons, vec![2]);
    }
}
