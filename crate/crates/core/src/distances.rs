//! Sequence-to-sequence distances for the five distance-bearing attacks and
//! the six sequence-to-class aggregates built on top of them.
//!
//! None of these are metrics in the strict sense; only non-negativity,
//! symmetry and zero at identity are guaranteed.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::features::{repr_catalog, repr_cumul, repr_xcorr, Catalog, XCorrRepr};
use crate::traces::{Direction, PacketSequence};
use crate::{Error, Result};

/// Default gamma of the Pa-SVM radial basis function.
pub const PA_SVM_GAMMA: f64 = 1.0 / (1u64 << 25) as f64;
/// Default gamma of the Pa-CUMUL radial basis function.
pub const CUMUL_GAMMA: f64 = 1.0 / (1u64 << 28) as f64;
/// Default number of cells kept before computing OSA distances.
pub const OSAD_MAX_LEN: usize = 5000;

/// Result of a cross-correlation. `degenerate` is set when one of the lists
/// has zero spread, in which case `value` is 0 by convention.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correlation {
    pub value: f64,
    pub degenerate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct Moments {
    mean: f64,
    sd: f64,
}

impl Moments {
    fn of(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        Moments { mean, sd: var.sqrt() }
    }
}

fn correlate(a: &[f64], ma: Moments, b: &[f64], mb: Moments) -> Correlation {
    let denom_sd = ma.sd * mb.sd;
    if denom_sd == 0.0 || !denom_sd.is_finite() {
        return Correlation { value: 0.0, degenerate: true };
    }
    let m = a.len().min(b.len());
    let sum: f64 = a[..m].iter().zip(&b[..m]).map(|(x, y)| (x - ma.mean) * (y - mb.mean)).sum();
    Correlation { value: sum / (m as f64 * denom_sd), degenerate: false }
}

/// Cross-correlation over the common prefix, with mean and (population)
/// standard deviation taken over each full list.
pub fn cross_correlation(a: &[f64], b: &[f64]) -> Result<Correlation> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::param("cross-correlation needs non-empty lists"));
    }
    Ok(correlate(a, Moments::of(a), b, Moments::of(b)))
}

/// Cross-correlation representation with cached moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XCorrPrepared {
    pub repr: XCorrRepr,
    times: Moments,
    lengths: Moments,
}

impl XCorrPrepared {
    pub fn new(repr: XCorrRepr) -> Self {
        let times = Moments::of(&repr.times);
        let lengths = Moments::of(&repr.lengths);
        XCorrPrepared { repr, times, lengths }
    }

    /// `X_t + X_ℓ`, the similarity form used for matching.
    pub fn similarity(&self, other: &XCorrPrepared) -> f64 {
        correlate(&self.repr.times, self.times, &other.repr.times, other.times).value
            + correlate(&self.repr.lengths, self.lengths, &other.repr.lengths, other.lengths).value
    }
}

/// `2 − X(R_t, R_t') − X(R_ℓ, R_ℓ')`.
pub fn dist_xcorr(a: &PacketSequence, b: &PacketSequence) -> f64 {
    let pa = XCorrPrepared::new(repr_xcorr(a));
    let pb = XCorrPrepared::new(repr_xcorr(b));
    2.0 - pa.similarity(&pb)
}

pub fn squared_euclidean(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
}

/// `1 − exp(−γ‖a − b‖²)`.
pub fn dist_rbf(a: &[f64], b: &[f64], gamma: f64) -> Result<f64> {
    Ok(1.0 - (-gamma * squared_euclidean(a, b)?).exp())
}

/// Optimal string alignment distance (restricted Damerau–Levenshtein):
/// unit-cost insert, delete, substitute and adjacent transposition, with no
/// substring edited more than once. Uses three rolling rows over the
/// shorter input.
pub fn osa<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let (long, short) = if a.len() >= b.len() { (a, b) } else { (b, a) };
    let m = short.len();
    if m == 0 {
        return long.len();
    }
    let mut prev2: Vec<usize> = vec![0; m + 1];
    let mut prev: Vec<usize> = (0..=m).collect();
    let mut cur: Vec<usize> = vec![0; m + 1];
    for i in 1..=long.len() {
        cur[0] = i;
        for j in 1..=m {
            let cost = usize::from(long[i - 1] != short[j - 1]);
            let mut v = (prev[j] + 1).min(cur[j - 1] + 1).min(prev[j - 1] + cost);
            if i > 1 && j > 1 && long[i - 1] == short[j - 2] && long[i - 2] == short[j - 1] {
                v = v.min(prev2[j - 2] + 1);
            }
            cur[j] = v;
        }
        std::mem::swap(&mut prev2, &mut prev);
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[m]
}

/// `1 − exp(−2·OSA² / min(|a|, |b|))` over direction strings.
pub fn dist_osad_strings(a: &[Direction], b: &[Direction]) -> f64 {
    let m = a.len().min(b.len());
    if m == 0 {
        return if a.len() == b.len() { 0.0 } else { 1.0 };
    }
    let d = osa(a, b) as f64;
    1.0 - (-2.0 * d * d / m as f64).exp()
}

/// OSA-based distance between two sequences, each truncated to `max_len`
/// cells first.
pub fn dist_osad(a: &PacketSequence, b: &PacketSequence, max_len: usize) -> f64 {
    let da: Vec<Direction> = a.directions().take(max_len).collect();
    let db: Vec<Direction> = b.directions().take(max_len).collect();
    dist_osad_strings(&da, &db)
}

/// `Σ w_i |a_i − b_i|`.
pub fn dist_weighted_l1(a: &[f64], b: &[f64], weights: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    if weights.len() != a.len() {
        return Err(Error::LengthMismatch(weights.len(), a.len()));
    }
    Ok(weighted_l1_unchecked(a, b, weights))
}

pub(crate) fn weighted_l1_unchecked(a: &[f64], b: &[f64], weights: &[f64]) -> f64 {
    a.iter().zip(b).zip(weights).map(|((x, y), w)| w * (x - y).abs()).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DistanceKind {
    XCorr,
    PaSvmRbf { gamma: f64 },
    Osad { max_len: usize },
    WeightedL1 { weights: Arc<Vec<f64>> },
    CumulRbf { gamma: f64 },
}

impl DistanceKind {
    pub fn pa_svm() -> Self {
        DistanceKind::PaSvmRbf { gamma: PA_SVM_GAMMA }
    }

    pub fn cumul() -> Self {
        DistanceKind::CumulRbf { gamma: CUMUL_GAMMA }
    }

    pub fn osad() -> Self {
        DistanceKind::Osad { max_len: OSAD_MAX_LEN }
    }

    /// Weighted L1 with all weights 1 over the shared catalog.
    pub fn uniform_l1() -> Self {
        DistanceKind::WeightedL1 { weights: Arc::new(vec![1.0; crate::features::CATALOG_LEN]) }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            DistanceKind::PaSvmRbf { gamma } | DistanceKind::CumulRbf { gamma } if !(*gamma > 0.0) => {
                Err(Error::param(format!("gamma must be positive, got {gamma}")))
            }
            DistanceKind::WeightedL1 { weights }
                if weights.iter().any(|w| !(*w >= 0.0)) || weights.iter().all(|&w| w == 0.0) =>
            {
                Err(Error::param("weights must be non-negative and not all zero"))
            }
            DistanceKind::Osad { max_len: 0 } => Err(Error::param("OSA length cap must be positive")),
            _ => Ok(()),
        }
    }

    /// Short name used in result files.
    pub fn name(&self) -> &'static str {
        match self {
            DistanceKind::XCorr => "xcorr",
            DistanceKind::PaSvmRbf { .. } => "pa_svm",
            DistanceKind::Osad { .. } => "osad",
            DistanceKind::WeightedL1 { .. } => "wknn",
            DistanceKind::CumulRbf { .. } => "cumul",
        }
    }

    fn tag(&self) -> u8 {
        match self {
            DistanceKind::XCorr => 1,
            DistanceKind::PaSvmRbf { .. } => 2,
            DistanceKind::Osad { .. } => 3,
            DistanceKind::WeightedL1 { .. } => 4,
            DistanceKind::CumulRbf { .. } => 5,
        }
    }

    /// First 8 bytes of SHA-256 over the kind's parameters.
    pub fn digest(&self) -> [u8; 8] {
        let mut h = Sha256::new();
        h.update([self.tag()]);
        match self {
            DistanceKind::XCorr => {}
            DistanceKind::PaSvmRbf { gamma } | DistanceKind::CumulRbf { gamma } => h.update(gamma.to_le_bytes()),
            DistanceKind::Osad { max_len } => h.update((*max_len as u64).to_le_bytes()),
            DistanceKind::WeightedL1 { weights } => weights.iter().for_each(|w| h.update(w.to_le_bytes())),
        }
        let out = h.finalize();
        let mut d = [0u8; 8];
        d.copy_from_slice(&out[..8]);
        d
    }

    /// Precomputes the representation this kind compares.
    pub fn prepare(&self, seq: &PacketSequence) -> Prepared {
        match self {
            DistanceKind::XCorr => Prepared::XCorr(XCorrPrepared::new(repr_xcorr(seq))),
            DistanceKind::PaSvmRbf { .. } => Prepared::Features(repr_catalog(seq, Catalog::PaSvm).values),
            DistanceKind::WeightedL1 { .. } => Prepared::Features(repr_catalog(seq, Catalog::WaKnn).values),
            DistanceKind::CumulRbf { .. } => Prepared::Features(repr_cumul(seq).values),
            DistanceKind::Osad { max_len } => Prepared::Directions(seq.directions().take(*max_len).collect()),
        }
    }

    /// Distance between two representations produced by [`Self::prepare`].
    ///
    /// Panics if the representations do not belong to this kind.
    pub fn between(&self, a: &Prepared, b: &Prepared) -> f64 {
        match (self, a, b) {
            (DistanceKind::XCorr, Prepared::XCorr(x), Prepared::XCorr(y)) => 2.0 - x.similarity(y),
            (DistanceKind::PaSvmRbf { gamma } | DistanceKind::CumulRbf { gamma }, Prepared::Features(x), Prepared::Features(y)) => {
                let sq: f64 = x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum();
                1.0 - (-gamma * sq).exp()
            }
            (DistanceKind::WeightedL1 { weights }, Prepared::Features(x), Prepared::Features(y)) => {
                weighted_l1_unchecked(x, y, weights)
            }
            (DistanceKind::Osad { .. }, Prepared::Directions(x), Prepared::Directions(y)) => dist_osad_strings(x, y),
            _ => panic!("representation does not match distance kind {}", self.name()),
        }
    }

    pub fn distance(&self, a: &PacketSequence, b: &PacketSequence) -> f64 {
        self.between(&self.prepare(a), &self.prepare(b))
    }
}

/// Representation cached for a [`DistanceKind`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Prepared {
    XCorr(XCorrPrepared),
    Features(Vec<f64>),
    Directions(Vec<Direction>),
}

/// The six ways of turning element distances into a sequence-to-class
/// distance. `Top5`/`Top25` divide by the class size, not by 5 or 25.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ClassDistanceVariant {
    MeanAll,
    Top5,
    Top25,
    Nearest,
    Fifth,
    TwentyFifth,
}

impl ClassDistanceVariant {
    pub const ALL: [ClassDistanceVariant; 6] = [
        ClassDistanceVariant::MeanAll,
        ClassDistanceVariant::Top5,
        ClassDistanceVariant::Top25,
        ClassDistanceVariant::Nearest,
        ClassDistanceVariant::Fifth,
        ClassDistanceVariant::TwentyFifth,
    ];

    /// 1-based index in the order above.
    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&v| v == self).unwrap() + 1
    }

    pub fn from_index(i: usize) -> Result<Self> {
        Self::ALL
            .get(i.wrapping_sub(1))
            .copied()
            .ok_or_else(|| Error::param(format!("class distance variant must be 1..=6, got {i}")))
    }

    /// Smallest class size for which the variant is defined.
    pub fn min_class_size(self) -> usize {
        match self {
            ClassDistanceVariant::Fifth => 5,
            ClassDistanceVariant::TwentyFifth => 25,
            _ => 1,
        }
    }

    /// Aggregates element distances (any order) into a class distance.
    pub fn aggregate(self, dists: &[f64]) -> Result<f64> {
        let n = dists.len();
        if n < self.min_class_size().max(1) {
            return Err(Error::ClassTooSmall { needed: self.min_class_size().max(1), have: n });
        }
        let mut sorted = dists.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(match self {
            ClassDistanceVariant::MeanAll => sorted.iter().sum::<f64>() / n as f64,
            ClassDistanceVariant::Top5 => sorted.iter().take(5).sum::<f64>() / n as f64,
            ClassDistanceVariant::Top25 => sorted.iter().take(25).sum::<f64>() / n as f64,
            ClassDistanceVariant::Nearest => sorted[0],
            ClassDistanceVariant::Fifth => sorted[4],
            ClassDistanceVariant::TwentyFifth => sorted[24],
        })
    }
}

/// Distance from `seq` to a class of training sequences.
pub fn dist_to_class(
    seq: &PacketSequence,
    class: &[PacketSequence],
    kind: &DistanceKind,
    variant: ClassDistanceVariant,
) -> Result<f64> {
    kind.validate()?;
    let p = kind.prepare(seq);
    let dists: Vec<f64> = class.iter().map(|c| kind.between(&p, &kind.prepare(c))).collect();
    variant.aggregate(&dists)
}

/// Row-major matrix of `f32` distances.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f32>,
}

impl DistanceMatrix {
    pub fn get(&self, r: usize, c: usize) -> f32 {
        self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f32] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }
}

/// All `rows × cols` distances; rows are computed in parallel and written to
/// disjoint slices, so the result does not depend on the thread count.
pub fn distance_matrix(kind: &DistanceKind, rows: &[Prepared], cols: &[Prepared]) -> DistanceMatrix {
    let mut data = vec![0f32; rows.len() * cols.len()];
    if !cols.is_empty() {
        data.par_chunks_mut(cols.len()).zip(rows.par_iter()).for_each(|(out, r)| {
            for (o, c) in out.iter_mut().zip(cols) {
                *o = kind.between(r, c) as f32;
            }
        });
    }
    DistanceMatrix { rows: rows.len(), cols: cols.len(), data }
}

const MATRIX_MAGIC: &[u8; 4] = b"WFDM";
const MATRIX_VERSION: u16 = 1;

/// Writes a matrix as: magic `WFDM`, u16 version, u8 kind tag, u8 reserved,
/// 8-byte parameter digest, u64 rows, u64 cols, then row-major f32, all
/// little-endian.
pub fn save_matrix(path: &Path, kind: &DistanceKind, m: &DistanceMatrix) -> Result<()> {
    let mut buf = Vec::with_capacity(32 + m.data.len() * 4);
    buf.extend_from_slice(MATRIX_MAGIC);
    buf.extend_from_slice(&MATRIX_VERSION.to_le_bytes());
    buf.push(kind.tag());
    buf.push(0);
    buf.extend_from_slice(&kind.digest());
    buf.extend_from_slice(&(m.rows as u64).to_le_bytes());
    buf.extend_from_slice(&(m.cols as u64).to_le_bytes());
    for v in &m.data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

/// Reads a matrix written by [`save_matrix`], checking that it was computed
/// with the same kind and parameters.
pub fn load_matrix(path: &Path, kind: &DistanceKind) -> Result<DistanceMatrix> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    if bytes.len() < 32 || &bytes[..4] != MATRIX_MAGIC {
        return Err(Error::Format("not a distance matrix file".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != MATRIX_VERSION {
        return Err(Error::Format(format!("unsupported matrix version {version}")));
    }
    if bytes[6] != kind.tag() || bytes[8..16] != kind.digest() {
        return Err(Error::Format(format!("matrix was not computed with distance {}", kind.name())));
    }
    let rows = u64::from_le_bytes(bytes[16..24].try_into().unwrap()) as usize;
    let cols = u64::from_le_bytes(bytes[24..32].try_into().unwrap()) as usize;
    let body = &bytes[32..];
    if rows.checked_mul(cols).and_then(|n| n.checked_mul(4)) != Some(body.len()) {
        return Err(Error::Format("matrix body length does not match header".into()));
    }
    let data = body.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    Ok(DistanceMatrix { rows, cols, data })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::traces::Direction::{In, Out};
    use rand::{Rng, SeedableRng};

    fn seq(times: &[f64], dirs: &[Direction]) -> PacketSequence {
        PacketSequence::from_parts(times, dirs).unwrap()
    }

    #[test]
    fn cross_correlation_examples() {
        let a = [1.0, 2.0, 3.0];
        assert!((cross_correlation(&a, &a).unwrap().value - 1.0).abs() < 1e-12);
        let neg: Vec<f64> = a.iter().map(|x| -x).collect();
        assert!((cross_correlation(&a, &neg).unwrap().value + 1.0).abs() < 1e-12);

        // a=(1,2,3,4): mean 2.5, sd sqrt(1.25); b=(1,2): mean 1.5, sd 0.5
        // sum over 2 terms: (-1.5)(-0.5) + (-0.5)(0.5) = 0.5
        let x = cross_correlation(&[1.0, 2.0, 3.0, 4.0], &[1.0, 2.0]).unwrap();
        let expected = 0.5 / (2.0 * 1.25f64.sqrt() * 0.5);
        assert!((x.value - expected).abs() < 1e-12);

        let flat = cross_correlation(&[1.0, 1.0], &[1.0, 2.0]).unwrap();
        assert_eq!(flat, Correlation { value: 0.0, degenerate: true });
        assert!(cross_correlation(&[], &[1.0]).is_err());
    }

    #[test]
    fn xcorr_distance_examples() {
        let p = seq(&[0.0, 0.2, 0.5, 0.6, 1.0], &[Out, In, In, Out, In]);
        assert!(dist_xcorr(&p, &p).abs() < 1e-12);

        // same timing, reversed direction pattern: X_t = 1, so d = 1 - X_l
        let q = seq(&[0.0, 0.2, 0.5, 0.6, 1.0], &[In, Out, In, In, Out]);
        let xl = cross_correlation(&[1.0, -1.0, -1.0, 1.0, -1.0], &[-1.0, 1.0, -1.0, -1.0, 1.0]).unwrap().value;
        assert!((dist_xcorr(&p, &q) - (1.0 - xl)).abs() < 1e-12);
    }

    #[test]
    fn xcorr_of_unrelated_traces_is_near_two() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut total = 0.0;
        let trials = 200;
        for _ in 0..trials {
            let mut mk = || {
                let mut t = 0.0;
                let (times, dirs): (Vec<f64>, Vec<Direction>) = (0..200)
                    .map(|_| {
                        t += rng.random::<f64>();
                        (t, if rng.random::<bool>() { Out } else { In })
                    })
                    .unzip();
                seq(&times, &dirs)
            };
            let (a, b) = (mk(), mk());
            total += dist_xcorr(&a, &b);
        }
        assert!((total / trials as f64 - 2.0).abs() < 0.3);
    }

    #[test]
    fn rbf_examples() {
        let f = [1.0, 2.0, 3.0];
        assert_eq!(dist_rbf(&f, &f, 0.5).unwrap(), 0.0);
        let gamma = 0.25;
        let target = std::f64::consts::LN_2 / gamma;
        let d = dist_rbf(&[0.0], &[target.sqrt()], gamma).unwrap();
        assert!((d - 0.5).abs() < 1e-12);
        let d = dist_rbf(&[0.0], &[(1u64 << 25) as f64].map(f64::sqrt), PA_SVM_GAMMA).unwrap();
        assert!((d - (1.0 - (-1.0f64).exp())).abs() < 1e-12);
        assert!(dist_rbf(&[0.0], &[1.0, 2.0], 1.0).is_err());
    }

    #[test]
    fn osa_examples() {
        let s = |t: &str| t.chars().collect::<Vec<_>>();
        assert_eq!(osa(&s("OIIO"), &s("OIIO")), 0);
        assert_eq!(osa(&s("OI"), &s("IO")), 1);
        // insert O, then swap the original pair
        assert_eq!(osa(&s("IO"), &s("OOI")), 2);
        // the restriction shows up with three symbols: DL gives 2 here
        assert_eq!(osa(&s("CA"), &s("ABC")), 3);
        assert_eq!(osa(&s(""), &s("OIO")), 3);
        assert_eq!(osa(&s("kitten"), &s("sitting")), 3);
    }

    #[test]
    fn osad_examples() {
        let a = [Out, In, In];
        assert_eq!(dist_osad_strings(&a, &a), 0.0);
        let d = dist_osad_strings(&[Out, In], &[In, Out]);
        assert!((d - (1.0 - (-1.0f64).exp())).abs() < 1e-12);
        let far = dist_osad_strings(&[Out; 10], &[In; 10]);
        assert!(far > 0.99999);
    }

    #[test]
    fn weighted_l1_examples() {
        let w = [1.0, 1.0];
        assert_eq!(dist_weighted_l1(&[1.0, 2.0], &[1.0, 2.0], &w).unwrap(), 0.0);
        assert_eq!(dist_weighted_l1(&[1.0, 2.0], &[3.0, 1.0], &w).unwrap(), 3.0);
        assert_eq!(dist_weighted_l1(&[1.0, 2.0], &[3.0, 1.0], &[2.0, 2.0]).unwrap(), 6.0);
        assert!(dist_weighted_l1(&[1.0], &[1.0, 2.0], &w).is_err());
        assert!(dist_weighted_l1(&[1.0, 2.0], &[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn class_variants() {
        let p = seq(&[0.0, 0.1, 0.3, 0.4], &[Out, In, Out, In]);
        let kind = DistanceKind::pa_svm();
        let single = vec![seq(&[0.0, 0.2, 0.3], &[Out, Out, In])];
        let d = kind.distance(&p, &single[0]);
        for v in [ClassDistanceVariant::MeanAll, ClassDistanceVariant::Top5, ClassDistanceVariant::Top25, ClassDistanceVariant::Nearest] {
            assert_eq!(dist_to_class(&p, &single, &kind, v).unwrap(), d);
        }
        assert!(matches!(
            dist_to_class(&p, &single, &kind, ClassDistanceVariant::Fifth),
            Err(Error::ClassTooSmall { needed: 5, have: 1 })
        ));

        // {P} plus two far points: the mean exceeds the nearest (which is 0)
        let far = |n: usize| seq(&(0..n).map(|i| i as f64).collect::<Vec<_>>(), &vec![In; n]);
        let class = vec![p.clone(), far(300), far(600)];
        let kind = DistanceKind::uniform_l1();
        let mean = dist_to_class(&p, &class, &kind, ClassDistanceVariant::MeanAll).unwrap();
        let near = dist_to_class(&p, &class, &kind, ClassDistanceVariant::Nearest).unwrap();
        assert_eq!(near, 0.0);
        assert!(mean > near);
    }

    #[test]
    fn variant_order_statistics() {
        let dists: Vec<f64> = (0..30).map(|i| ((i * 37) % 30) as f64 / 7.0).collect();
        let a = ClassDistanceVariant::Nearest.aggregate(&dists).unwrap();
        let b = ClassDistanceVariant::Fifth.aggregate(&dists).unwrap();
        let c = ClassDistanceVariant::TwentyFifth.aggregate(&dists).unwrap();
        assert!(a <= b && b <= c);
        assert_eq!(ClassDistanceVariant::from_index(3).unwrap(), ClassDistanceVariant::Top25);
        assert_eq!(ClassDistanceVariant::Top25.index(), 3);
        assert!(ClassDistanceVariant::from_index(0).is_err());
        // top-5 sum is divided by the class size
        let top5 = ClassDistanceVariant::Top5.aggregate(&[1.0; 10]).unwrap();
        assert_eq!(top5, 0.5);
    }

    #[test]
    fn kind_validation() {
        assert!(DistanceKind::PaSvmRbf { gamma: 0.0 }.validate().is_err());
        assert!(DistanceKind::WeightedL1 { weights: Arc::new(vec![0.0, 0.0]) }.validate().is_err());
        assert!(DistanceKind::WeightedL1 { weights: Arc::new(vec![-1.0, 2.0]) }.validate().is_err());
        assert!(DistanceKind::cumul().validate().is_ok());
    }

    #[test]
    fn matrix_round_trip() {
        let kind = DistanceKind::XCorr;
        let seqs: Vec<_> = (1..5)
            .map(|n| seq(&(0..n * 3).map(|i| (i * i) as f64 * 0.01).collect::<Vec<_>>(), &vec![Out, In, In].repeat(n)))
            .collect();
        let prepared: Vec<_> = seqs.iter().map(|s| kind.prepare(s)).collect();
        let m = distance_matrix(&kind, &prepared, &prepared);
        assert_eq!((m.rows, m.cols), (4, 4));
        for i in 0..4 {
            assert!(m.get(i, i).abs() < 1e-6);
            for j in 0..4 {
                assert_eq!(m.get(i, j), m.get(j, i));
            }
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        save_matrix(&path, &kind, &m).unwrap();
        assert_eq!(load_matrix(&path, &kind).unwrap(), m);
        assert!(load_matrix(&path, &DistanceKind::cumul()).is_err());
    }
}
