//! Cross-validated experiments over classifiers and precision optimizers.
//!
//! Every fold trains each classifier once and scores its test elements
//! once. Match vectors and class distances are cached, and every optimizer
//! parameter point is then evaluated against the caches. Counts are summed
//! over folds before any estimate is formed.

mod config;
mod results;
mod scenario;
mod synth;

pub use config::{ExperimentConfig, Grid};
pub use results::{
    append_results, best_records, estimate_rows, parse_results, parse_value, read_results, ResultRecord, SweepRow,
    SCHEMA_LINE,
};
pub use scenario::{
    calibrate_identify, identify_client, selection_scenario, AccessScorer, IdentifyOutcome, SelectionMode,
};
pub use synth::synth_dataset;

use std::sync::Arc;

use rayon::prelude::*;

use crate::classifiers::{self, learn_weights, ClassifierKind, MatchVector};
use crate::distances::{ClassDistanceVariant, DistanceKind, Prepared};
use crate::metrics::{tally, ConfusionCounts};
use crate::optimizers::{
    confidence_po, ensemble_threshold, ensemble_unanimous, ensemble_weighted, inclass_mean, precision_rank_of,
    scale_matches, too_close_po, too_far_po, PoDecision, ScaledMatchVector,
};
use crate::traces::{cap_training, stratified_folds, Dataset, Fold, Label};
use crate::{Error, Result};

/// Runs `f` on a pool of `workers` threads, or on the global pool.
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::param(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}

fn is_capped(kind: ClassifierKind) -> bool {
    kind.is_svm() || kind == ClassifierKind::HaKfp
}

/// The training set `kind` sees in fold `f`.
fn training_set(cfg: &ExperimentConfig, fold: &Fold, f: usize, kind: ClassifierKind) -> Result<Dataset> {
    let mut train = match cfg.unmonitored_train {
        Some(n) => fold.train.with_unmonitored_limit(n, cfg.seed.wrapping_add(f as u64)),
        None => fold.train.clone(),
    };
    if let (Some(cap), true) = (cfg.train_cap, is_capped(kind)) {
        train = cap_training(&train, cap, cfg.seed.wrapping_add(f as u64))?;
    }
    Ok(train)
}

/// The distance behind a classifier, for the distance optimizers.
pub fn distance_for(kind: ClassifierKind, cfg: &ExperimentConfig, train: &Dataset, fold: usize) -> Result<DistanceKind> {
    Ok(match kind {
        ClassifierKind::BiXcor => DistanceKind::XCorr,
        ClassifierKind::PaSvm => DistanceKind::PaSvmRbf { gamma: cfg.pa_svm_gamma },
        ClassifierKind::CaOsad => DistanceKind::Osad { max_len: cfg.osad_max_len },
        ClassifierKind::PaCumul => DistanceKind::CumulRbf { gamma: cfg.cumul_gamma },
        ClassifierKind::WaKnn => {
            let c = cfg.classifier_config(fold);
            let w = learn_weights(train, c.knn_rounds, c.knn_neighbors, c.knn_delta, c.seed)?;
            DistanceKind::WeightedL1 { weights: Arc::new(w) }
        }
        ClassifierKind::HaKfp => return Err(Error::param("Ha-kFP has no distance")),
    })
}

struct DistCache {
    pages: Vec<u32>,
    expected: Vec<f64>,
    /// `[variant][element][page]`.
    by_variant: Vec<Vec<Vec<f64>>>,
}

impl DistCache {
    fn build(
        kind: DistanceKind,
        train: &Dataset,
        test: &[(Label, &crate::traces::PacketSequence)],
        variants: &[ClassDistanceVariant],
    ) -> Result<Self> {
        let classes: Vec<(u32, Vec<Prepared>)> = train
            .monitored()
            .par_iter()
            .map(|(&p, seqs)| (p, seqs.iter().map(|s| kind.prepare(s)).collect()))
            .collect();
        let expected = classes.par_iter().map(|(_, prep)| inclass_mean(&kind, prep).unwrap_or(0.0)).collect();
        let per_elem: Vec<Vec<Vec<f64>>> = test
            .par_iter()
            .map(|(_, s)| {
                let q = kind.prepare(s);
                let raw: Vec<Vec<f64>> =
                    classes.iter().map(|(_, prep)| prep.iter().map(|c| kind.between(&q, c)).collect()).collect();
                variants
                    .iter()
                    .map(|v| raw.iter().map(|d| v.aggregate(d)).collect::<Result<Vec<f64>>>())
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;
        let by_variant = (0..variants.len()).map(|v| per_elem.iter().map(|e| e[v].clone()).collect()).collect();
        Ok(DistCache { pages: classes.iter().map(|c| c.0).collect(), expected, by_variant })
    }

    fn page_index(&self, label: Label) -> Option<usize> {
        match label {
            Label::Monitored(p) => self.pages.binary_search(&p).ok(),
            Label::NonMonitored => None,
        }
    }
}

struct FoldCache {
    truths: Vec<Label>,
    matches: Vec<Vec<MatchVector>>,
    scaled: Vec<Vec<ScaledMatchVector>>,
    dists: Vec<DistCache>,
}

fn score_fold(cfg: &ExperimentConfig, kinds: &[ClassifierKind], fold: &Fold, f: usize) -> Result<FoldCache> {
    let test: Vec<(Label, &crate::traces::PacketSequence)> = fold.test.elements().collect();
    let seqs: Vec<&crate::traces::PacketSequence> = test.iter().map(|t| t.1).collect();
    let mut matches = Vec::with_capacity(kinds.len());
    for &kind in kinds {
        let train = training_set(cfg, fold, f, kind)?;
        let model = classifiers::train(kind, &train, &cfg.classifier_config(f))?;
        matches.push(model.match_many(&seqs));
    }
    let scaled = matches
        .iter()
        .map(|ms| ms.par_iter().map(scale_matches).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    let variants = cfg.variants()?;
    let mut dists = Vec::new();
    for dk in cfg.distance_classifiers()? {
        let kind = distance_for(dk, cfg, &fold.train, f)?;
        dists.push(DistCache::build(kind, &fold.train, &test, &variants)?);
    }
    Ok(FoldCache { truths: test.iter().map(|t| t.0).collect(), matches, scaled, dists })
}

#[derive(Debug, Clone)]
enum Rule {
    Baseline,
    Confidence { k: usize, m: f64 },
    TooFar { dist: usize, variant: usize, m: f64 },
    TooClose { dist: usize, variant: usize, m: usize },
    Unanimous,
    Threshold { m: f64 },
    Weighted { weights: Vec<f64>, m: f64 },
}

#[derive(Debug, Clone)]
struct PlanCell {
    /// Positions into the trained-kind list.
    members: Vec<usize>,
    rule: Rule,
    classifier: String,
    po: &'static str,
    params: String,
}

fn plan(cfg: &ExperimentConfig, kinds: &[ClassifierKind], roster_len: usize) -> Result<Vec<PlanCell>> {
    let mut cells = Vec::new();
    let variants = cfg.variants()?;
    let dist_names: Vec<String> = cfg.distance_classifiers()?.iter().map(|k| k.name().to_string()).collect();
    for (i, kind) in kinds.iter().enumerate() {
        let mut push = |rule: Rule, po: &'static str, params: String| {
            cells.push(PlanCell { members: vec![i], rule, classifier: kind.name().into(), po, params });
        };
        push(Rule::Baseline, "baseline", "-".into());
        for k in cfg.k_values.counts()? {
            if k + 1 > roster_len {
                continue;
            }
            for &m in cfg.m_match.values() {
                push(Rule::Confidence { k, m }, "confidence", format!("K={k};M={m}"));
            }
        }
        for (d, name) in dist_names.iter().enumerate() {
            for (v, variant) in variants.iter().enumerate() {
                let vi = variant.index();
                for &m in cfg.too_far_m.values() {
                    push(Rule::TooFar { dist: d, variant: v, m }, "too_far", format!("dist={name};variant={vi};M={m}"));
                }
                for m in cfg.too_close_m.counts()? {
                    push(
                        Rule::TooClose { dist: d, variant: v, m },
                        "too_close",
                        format!("dist={name};variant={vi};M={m}"),
                    );
                }
            }
        }
    }
    let ens: Vec<usize> = cfg.ensemble_kinds()?.iter().map(|k| kinds.iter().position(|x| x == k).unwrap()).collect();
    if !ens.is_empty() {
        let name = |members: &[usize]| members.iter().map(|&i| kinds[i].name()).collect::<Vec<_>>().join("+");
        let subsets: Vec<Vec<usize>> = if cfg.ensemble_subsets {
            let n = ens.len();
            let mut subs: Vec<Vec<usize>> =
                (1u32..(1 << n)).map(|mask| (0..n).filter(|b| mask & (1 << b) != 0).map(|b| ens[b]).collect()).collect();
            subs.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
            subs
        } else {
            vec![ens.clone()]
        };
        for s in subsets {
            let classifier = name(&s);
            cells.push(PlanCell { members: s, rule: Rule::Unanimous, classifier, po: "ensemble_unanimous", params: "-".into() });
        }
        if roster_len >= 2 {
            for &m in cfg.m_ensemble.values() {
                cells.push(PlanCell {
                    members: ens.clone(),
                    rule: Rule::Threshold { m },
                    classifier: name(&ens),
                    po: "ensemble_threshold",
                    params: format!("M={m}"),
                });
            }
            for weights in &cfg.ensemble_weights {
                let wtext = weights.iter().map(f64::to_string).collect::<Vec<_>>().join("/");
                for &m in cfg.m_weighted.values() {
                    cells.push(PlanCell {
                        members: ens.clone(),
                        rule: Rule::Weighted { weights: weights.clone(), m },
                        classifier: name(&ens),
                        po: "ensemble_weighted",
                        params: format!("w={wtext};M={m}"),
                    });
                }
            }
        }
    }
    Ok(cells)
}

fn decide(cell: &PlanCell, cache: &FoldCache, kinds: &[ClassifierKind], e: usize) -> Result<Label> {
    let top = |i: usize| cache.matches[i][e].top();
    let only = cell.members[0];
    let decision = match &cell.rule {
        Rule::Baseline => return Ok(top(only)),
        Rule::Confidence { k, m } => confidence_po(&cache.scaled[only][e], *k, *m)?,
        Rule::TooFar { dist, variant, m } => {
            let assumed = top(only);
            let dc = &cache.dists[*dist];
            match dc.page_index(assumed) {
                Some(p) => too_far_po(assumed, dc.by_variant[*variant][e][p], dc.expected[p], *m)?,
                None => PoDecision::Reject,
            }
        }
        Rule::TooClose { dist, variant, m } => {
            let assumed = top(only);
            let dc = &cache.dists[*dist];
            if dc.page_index(assumed).is_none() {
                PoDecision::Reject
            } else {
                let ds: Vec<(Label, f64)> =
                    dc.pages.iter().map(|&p| Label::Monitored(p)).zip(dc.by_variant[*variant][e].iter().copied()).collect();
                too_close_po(&ds, assumed, *m)?
            }
        }
        Rule::Unanimous => {
            let labels: Vec<Label> = cell.members.iter().map(|&i| top(i)).collect();
            ensemble_unanimous(&labels)?
        }
        Rule::Threshold { m } => {
            let (scaled, rank) = ensemble_inputs(cell, cache, kinds, e);
            ensemble_threshold(&scaled, &rank, *m)?
        }
        Rule::Weighted { weights, m } => {
            let (scaled, rank) = ensemble_inputs(cell, cache, kinds, e);
            ensemble_weighted(&scaled, &rank, weights, *m)?
        }
    };
    Ok(decision.label())
}

fn ensemble_inputs(
    cell: &PlanCell,
    cache: &FoldCache,
    kinds: &[ClassifierKind],
    e: usize,
) -> (Vec<ScaledMatchVector>, Vec<usize>) {
    let scaled = cell.members.iter().map(|&i| cache.scaled[i][e].clone()).collect();
    let member_kinds: Vec<ClassifierKind> = cell.members.iter().map(|&i| kinds[i]).collect();
    (scaled, precision_rank_of(&member_kinds))
}

/// Aggregated sweep output.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub rows: Vec<SweepRow>,
    /// Positive and negative test counts per fold.
    pub fold_sizes: Vec<(u64, u64)>,
}

impl ExperimentResult {
    pub fn records(&self, cfg: &ExperimentConfig) -> Vec<ResultRecord> {
        estimate_rows(&self.rows, &cfg.r_values, cfg.recall_floor, cfg.z)
    }

    pub fn row(&self, classifier: &str, po: &str, params: &str) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.classifier == classifier && r.po == po && r.params == params)
    }
}

/// Runs the full sweep on `data`.
pub fn run_experiment(cfg: &ExperimentConfig, data: &Dataset) -> Result<ExperimentResult> {
    cfg.validate()?;
    with_workers(cfg.workers, || run_inner(cfg, data))?
}

fn run_inner(cfg: &ExperimentConfig, data: &Dataset) -> Result<ExperimentResult> {
    let kinds = cfg.kinds()?;
    if kinds.is_empty() {
        return Err(Error::param("no classifiers configured"));
    }
    let folds = stratified_folds(data, cfg.folds, cfg.seed)?;
    let has_background =
        cfg.background_class && !data.unmonitored().is_empty() && cfg.unmonitored_train != Some(0);
    let roster_len = data.n_pages() + usize::from(has_background);
    let cells = plan(cfg, &kinds, roster_len)?;
    let mut totals = vec![ConfusionCounts::default(); cells.len()];
    let mut fold_sizes = Vec::with_capacity(folds.len());
    for (f, fold) in folds.iter().enumerate() {
        let cache = score_fold(cfg, &kinds, fold, f)?;
        let counts: Vec<ConfusionCounts> = cells
            .par_iter()
            .map(|cell| {
                let preds = (0..cache.truths.len())
                    .map(|e| decide(cell, &cache, &kinds, e))
                    .collect::<Result<Vec<Label>>>()?;
                Ok(tally(cache.truths.iter().copied().zip(preds)))
            })
            .collect::<Result<_>>()?;
        for (t, c) in totals.iter_mut().zip(&counts) {
            t.merge(c);
        }
        let c0 = &counts[0];
        fold_sizes.push((c0.n_p, c0.n_n));
    }
    let rows = cells
        .into_iter()
        .zip(totals)
        .map(|(c, counts)| SweepRow { classifier: c.classifier, po: c.po.to_string(), params: c.params, counts })
        .collect();
    Ok(ExperimentResult { rows, fold_sizes })
}

/// One point of the open-world size curve.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub n: usize,
    pub counts: ConfusionCounts,
    /// No background class was trained, so every unmonitored test element
    /// was forced into a monitored page.
    pub degenerate: bool,
}

/// Baseline counts of `kind` when each training fold keeps `n` unmonitored
/// traces, for every `n` in the grid. Test folds are the same for every
/// point.
pub fn openworld_size_curve(
    cfg: &ExperimentConfig,
    data: &Dataset,
    kind: ClassifierKind,
    n_grid: &[usize],
) -> Result<Vec<CurvePoint>> {
    cfg.validate()?;
    with_workers(cfg.workers, || {
        let folds = stratified_folds(data, cfg.folds, cfg.seed)?;
        let available = folds.iter().map(|f| f.train.unmonitored().len()).min().unwrap_or(0);
        if let Some(&bad) = n_grid.iter().find(|&&n| n > available) {
            return Err(Error::SpecExceedsDataset {
                requested: format!("{bad} unmonitored training traces"),
                available: available.to_string(),
            });
        }
        n_grid
            .iter()
            .map(|&n| {
                let mut counts = ConfusionCounts::default();
                for (f, fold) in folds.iter().enumerate() {
                    let local = ExperimentConfig { unmonitored_train: Some(n), ..cfg.clone() };
                    let train = training_set(&local, fold, f, kind)?;
                    let model = classifiers::train(kind, &train, &cfg.classifier_config(f))?;
                    let test: Vec<(Label, &crate::traces::PacketSequence)> = fold.test.elements().collect();
                    let preds: Vec<Label> = test.par_iter().map(|(_, s)| model.classify(s)).collect();
                    counts.merge(&tally(test.iter().map(|t| t.0).zip(preds)));
                }
                Ok(CurvePoint { n, counts, degenerate: n == 0 || !cfg.background_class })
            })
            .collect()
    })?
}

/// Which optimizer a scored pool applies to its decisions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PoChoice {
    Baseline,
    Confidence { k: usize, m_match: f64 },
}

/// Held-out test elements with their match vectors and final decisions.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredPool {
    pub truths: Vec<Label>,
    pub matches: Vec<MatchVector>,
    pub decisions: Vec<Label>,
}

impl ScoredPool {
    pub fn from_matches(truths: Vec<Label>, matches: Vec<MatchVector>, po: PoChoice) -> Result<Self> {
        if truths.len() != matches.len() {
            return Err(Error::LengthMismatch(truths.len(), matches.len()));
        }
        let decisions = matches
            .iter()
            .map(|m| match po {
                PoChoice::Baseline => Ok(m.top()),
                PoChoice::Confidence { k, m_match } => Ok(confidence_po(&scale_matches(m)?, k, m_match)?.label()),
            })
            .collect::<Result<_>>()?;
        Ok(ScoredPool { truths, matches, decisions })
    }
}

impl AccessScorer for ScoredPool {
    fn positive_for(&self, element: usize, target: u32) -> bool {
        self.decisions[element] == Label::Monitored(target)
    }

    fn target_score(&self, element: usize, target: u32) -> f64 {
        self.matches[element].score_of(Label::Monitored(target)).unwrap_or(f64::NEG_INFINITY)
    }
}

/// Scores every element once with a model that did not train on it.
pub fn build_pool(cfg: &ExperimentConfig, data: &Dataset, kind: ClassifierKind, po: PoChoice) -> Result<ScoredPool> {
    cfg.validate()?;
    with_workers(cfg.workers, || {
        let folds = stratified_folds(data, cfg.folds, cfg.seed)?;
        let mut truths = Vec::new();
        let mut matches = Vec::new();
        for (f, fold) in folds.iter().enumerate() {
            let train = training_set(cfg, fold, f, kind)?;
            let model = classifiers::train(kind, &train, &cfg.classifier_config(f))?;
            let test: Vec<(Label, &crate::traces::PacketSequence)> = fold.test.elements().collect();
            let seqs: Vec<_> = test.iter().map(|t| t.1).collect();
            truths.extend(test.iter().map(|t| t.0));
            matches.extend(model.match_many(&seqs));
        }
        ScoredPool::from_matches(truths, matches, po)
    })?
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> ExperimentConfig {
        ExperimentConfig {
            folds: 3,
            seed: 4,
            classifiers: vec!["Wa-kNN".into(), "Bi-XCor".into()],
            distance_kinds: vec!["Bi-XCor".into()],
            ensemble: vec!["Wa-kNN".into(), "Bi-XCor".into()],
            m_match: Grid(vec![0.5, 1.0]),
            too_far_m: Grid(vec![1.0, 2.0]),
            too_close_m: Grid(vec![1.0]),
            m_ensemble: Grid(vec![0.0, 1.5]),
            ensemble_weights: vec![vec![0.5, 0.5]],
            m_weighted: Grid(vec![0.75]),
            k_values: Grid(vec![1.0]),
            ..Default::default()
        }
    }

    #[test]
    fn sweep_structure() {
        let data = synth_dataset(&"4x6+20".parse().unwrap(), 2).unwrap();
        let cfg = small_cfg();
        let res = run_experiment(&cfg, &data).unwrap();
        let n_p: u64 = res.fold_sizes.iter().map(|f| f.0).sum();
        let n_n: u64 = res.fold_sizes.iter().map(|f| f.1).sum();
        assert_eq!(n_p as usize, data.n_monitored_instances());
        assert_eq!(n_n as usize, data.unmonitored().len());
        for kind in ["Wa-kNN", "Bi-XCor"] {
            let base = res.row(kind, "baseline", "-").unwrap();
            assert_eq!(res.row(kind, "confidence", "K=1;M=1").unwrap().counts, base.counts);
            assert!(res.row(kind, "too_far", "dist=Bi-XCor;variant=1;M=2").is_some());
        }
        let unanimous: Vec<_> = res.rows.iter().filter(|r| r.po == "ensemble_unanimous").collect();
        assert_eq!(unanimous.len(), 3);
        assert!(res.row("Bi-XCor+Wa-kNN", "ensemble_threshold", "M=1.5").is_some());
        assert!(res.row("Bi-XCor+Wa-kNN", "ensemble_weighted", "w=0.5/0.5;M=0.75").is_some());
        // Zero threshold keeps every plurality decision.
        let t0 = res.row("Bi-XCor+Wa-kNN", "ensemble_threshold", "M=0").unwrap();
        assert!(t0.counts.n_tp + t0.counts.n_wp > 0);
        for r in &res.rows {
            assert_eq!(r.counts.n_tp + r.counts.n_wp + r.counts.n_fn(), r.counts.n_p);
            assert_eq!(r.counts.n_fp + r.counts.n_tn(), r.counts.n_n);
        }
    }

    #[test]
    fn curve_and_pool() {
        let data = synth_dataset(&"3x6+18".parse().unwrap(), 7).unwrap();
        let cfg = ExperimentConfig { folds: 3, seed: 1, ..Default::default() };
        let curve = openworld_size_curve(&cfg, &data, ClassifierKind::WaKnn, &[0, 6, 12]).unwrap();
        assert_eq!(curve.len(), 3);
        assert!(curve[0].degenerate && !curve[1].degenerate);
        assert_eq!(curve[0].counts.n_fp, curve[0].counts.n_n);
        assert_eq!(curve, openworld_size_curve(&cfg, &data, ClassifierKind::WaKnn, &[0, 6, 12]).unwrap());
        assert!(openworld_size_curve(&cfg, &data, ClassifierKind::WaKnn, &[13]).is_err());
        let pool = build_pool(&cfg, &data, ClassifierKind::BiXcor, PoChoice::Baseline).unwrap();
        assert_eq!(pool.truths.len(), data.len());
    }
}
