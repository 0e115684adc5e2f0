use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize};

use crate::classifiers::{ClassifierConfig, ClassifierKind};
use crate::distances::{ClassDistanceVariant, CUMUL_GAMMA, OSAD_MAX_LEN, PA_SVM_GAMMA};
use crate::traces::{load_dataset_dir, parse_spec, subset, Dataset, DatasetSpec};
use crate::{Error, Result};

use super::synth::synth_dataset;

/// A parameter grid, written either as a list or as `start:stop:step`
/// (stop inclusive).
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Grid(pub Vec<f64>);

impl Grid {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    /// Values as counts; errors on negative or fractional entries.
    pub fn counts(&self) -> Result<Vec<usize>> {
        self.0
            .iter()
            .map(|&v| {
                if v >= 0.0 && v.fract() == 0.0 {
                    Ok(v as usize)
                } else {
                    Err(Error::param(format!("expected a whole number in grid, got {v}")))
                }
            })
            .collect()
    }

    pub fn parse_range(text: &str) -> Result<Self> {
        let parts: Vec<&str> = text.split(':').map(str::trim).collect();
        let num = |s: &str| s.parse::<f64>().map_err(|_| Error::param(format!("bad number `{s}` in grid `{text}`")));
        match parts.as_slice() {
            [single] => Ok(Grid(vec![num(single)?])),
            [start, stop, step] => {
                let (start, stop, step) = (num(start)?, num(stop)?, num(step)?);
                if !(step > 0.0) || stop < start {
                    return Err(Error::param(format!("grid `{text}` needs start ≤ stop and a positive step")));
                }
                let n = ((stop - start) / step + 1e-9).floor() as usize;
                if n > 1_000_000 {
                    return Err(Error::param(format!("grid `{text}` has too many points")));
                }
                Ok(Grid((0..=n).map(|i| round9(start + i as f64 * step)).collect()))
            }
            _ => Err(Error::param(format!("grid `{text}` is not start:stop:step"))),
        }
    }
}

/// Rounds to 9 decimals so generated grid points print cleanly.
fn round9(x: f64) -> f64 {
    (x * 1e9).round() / 1e9
}

impl<'de> Deserialize<'de> for Grid {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            List(Vec<f64>),
            Scalar(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::List(v) => Ok(Grid(v)),
            Raw::Scalar(v) => Ok(Grid(vec![v])),
            Raw::Text(t) => Grid::parse_range(&t).map_err(serde::de::Error::custom),
        }
    }
}

impl fmt::Display for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(f64::to_string).collect();
        write!(f, "[{}]", parts.join(", "))
    }
}

fn grid(text: &str) -> Grid {
    Grid::parse_range(text).expect("valid default grid")
}

/// Everything one sweep needs. Read from a flat `key = value` file; every
/// key is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Directory with an `index.tsv` manifest.
    pub dataset_dir: Option<PathBuf>,
    /// Shape of a synthetic dataset, e.g. `50x50+2000`; used when no
    /// directory is given.
    pub synth: Option<String>,
    /// Optional subsample shape applied after loading.
    pub subset: Option<String>,
    pub dedup_hosts: bool,
    pub folds: usize,
    pub seed: u64,
    pub classifiers: Vec<String>,

    pub background_class: bool,
    pub svm_cost: f64,
    pub svm_tolerance: f64,
    pub pa_svm_gamma: f64,
    pub cumul_gamma: f64,
    pub min_max_scale: bool,
    pub osad_max_len: usize,
    pub knn_rounds: usize,
    pub knn_neighbors: usize,
    pub knn_delta: f64,
    pub forest_trees: usize,

    /// Training-set cap for the SVM kinds and the forest.
    pub train_cap: Option<usize>,
    /// Number of unmonitored traces kept in each training fold.
    pub unmonitored_train: Option<usize>,

    pub k_values: Grid,
    pub m_match: Grid,
    /// Classifiers whose distance drives the distance optimizers.
    pub distance_kinds: Vec<String>,
    /// 1-based class-distance variants.
    pub distance_variants: Grid,
    pub too_far_m: Grid,
    pub too_close_m: Grid,
    pub ensemble: Vec<String>,
    pub ensemble_subsets: bool,
    pub m_ensemble: Grid,
    pub ensemble_weights: Vec<Vec<f64>>,
    pub m_weighted: Grid,

    pub recall_floor: f64,
    pub r_values: Vec<f64>,
    pub z: f64,
    pub workers: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let c = ClassifierConfig::default();
        ExperimentConfig {
            dataset_dir: None,
            synth: None,
            subset: None,
            dedup_hosts: false,
            folds: 10,
            seed: 0,
            classifiers: ClassifierKind::ALL.iter().map(|k| k.name().to_string()).collect(),
            background_class: c.background_class,
            svm_cost: c.svm_cost,
            svm_tolerance: c.svm_tolerance,
            pa_svm_gamma: PA_SVM_GAMMA,
            cumul_gamma: CUMUL_GAMMA,
            min_max_scale: false,
            osad_max_len: OSAD_MAX_LEN,
            knn_rounds: c.knn_rounds,
            knn_neighbors: c.knn_neighbors,
            knn_delta: c.knn_delta,
            forest_trees: c.forest_trees,
            train_cap: Some(10_000),
            unmonitored_train: None,
            k_values: Grid(vec![1.0, 2.0, 3.0]),
            m_match: grid("0:1:0.01"),
            distance_kinds: vec!["Bi-XCor".into(), "Pa-SVM".into()],
            distance_variants: Grid(vec![1.0]),
            too_far_m: grid("0.5:3:0.025"),
            too_close_m: Grid(vec![1.0, 2.0, 3.0]),
            ensemble: ["Bi-XCor", "Pa-SVM", "Wa-kNN", "Ha-kFP", "Pa-CUMUL"].map(String::from).to_vec(),
            ensemble_subsets: true,
            m_ensemble: grid("0:5:0.1"),
            ensemble_weights: Vec::new(),
            m_weighted: grid("0:1:0.02"),
            recall_floor: 0.2,
            r_values: vec![10.0, 1000.0],
            z: crate::metrics::Z95,
            workers: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_kv(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Format(format!("experiment config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_kv(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn to_kv(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.recall_floor) {
            return Err(Error::param(format!("recall floor {} outside [0, 1]", self.recall_floor)));
        }
        if self.r_values.iter().any(|r| !(*r >= 0.0)) {
            return Err(Error::param("r values must be non-negative"));
        }
        if self.folds < 2 {
            return Err(Error::param("need at least two folds"));
        }
        self.kinds()?;
        self.ensemble_kinds()?;
        self.distance_classifiers()?;
        self.variants()?;
        let ks = self.k_values.counts()?;
        if ks.contains(&0) {
            return Err(Error::param("K must be at least 1"));
        }
        self.too_close_m.counts()?;
        for w in &self.ensemble_weights {
            if w.len() != self.ensemble_kinds()?.len() {
                return Err(Error::param("each ensemble weight vector needs one weight per ensemble member"));
            }
        }
        self.classifier_config(0).validate()?;
        Ok(())
    }

    pub fn kinds(&self) -> Result<Vec<ClassifierKind>> {
        parse_kinds(&self.classifiers)
    }

    /// Ensemble members that are also trained, in canonical order.
    pub fn ensemble_kinds(&self) -> Result<Vec<ClassifierKind>> {
        let trained = self.kinds()?;
        Ok(parse_kinds(&self.ensemble)?.into_iter().filter(|k| trained.contains(k)).collect())
    }

    pub fn distance_classifiers(&self) -> Result<Vec<ClassifierKind>> {
        let kinds = parse_kinds(&self.distance_kinds)?;
        if kinds.contains(&ClassifierKind::HaKfp) {
            return Err(Error::param("Ha-kFP has no distance; remove it from distance_kinds"));
        }
        Ok(kinds)
    }

    pub fn variants(&self) -> Result<Vec<ClassDistanceVariant>> {
        self.distance_variants.counts()?.into_iter().map(ClassDistanceVariant::from_index).collect()
    }

    /// Classifier settings with the seed for one fold.
    pub fn classifier_config(&self, fold: usize) -> ClassifierConfig {
        ClassifierConfig {
            background_class: self.background_class,
            svm_cost: self.svm_cost,
            svm_tolerance: self.svm_tolerance,
            pa_svm_gamma: self.pa_svm_gamma,
            cumul_gamma: self.cumul_gamma,
            min_max_scale: self.min_max_scale,
            osad_max_len: self.osad_max_len,
            knn_rounds: self.knn_rounds,
            knn_neighbors: self.knn_neighbors,
            knn_delta: self.knn_delta,
            forest_trees: self.forest_trees,
            seed: self.seed.wrapping_add(fold as u64),
        }
    }

    /// Loads the configured dataset (directory, else synthetic) and
    /// applies `subset` if present.
    pub fn load_dataset(&self) -> Result<Dataset> {
        let data = match (&self.dataset_dir, &self.synth) {
            (Some(dir), _) => load_dataset_dir(dir, self.dedup_hosts)?,
            (None, Some(spec)) => synth_dataset(&parse_spec(spec)?, self.seed)?,
            (None, None) => return Err(Error::param("config needs dataset_dir or synth")),
        };
        match &self.subset {
            Some(s) => subset(&data, &parse_spec(s)?, self.seed),
            None => Ok(data),
        }
    }

    pub fn subset_spec(&self) -> Result<Option<DatasetSpec>> {
        self.subset.as_deref().map(parse_spec).transpose()
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.svm_cost > 0.0) || !(self.svm_tolerance > 0.0) {
            return Err(Error::param("SVM cost and tolerance must be positive"));
        }
        if !(self.pa_svm_gamma > 0.0) || !(self.cumul_gamma > 0.0) {
            return Err(Error::param("RBF gamma must be positive"));
        }
        if self.osad_max_len == 0 || self.knn_neighbors == 0 || self.forest_trees == 0 {
            return Err(Error::param("OSA cap, neighbour count and tree count must be positive"));
        }
        if !(0.0..1.0).contains(&self.knn_delta) {
            return Err(Error::param("knn_delta must be in [0, 1)"));
        }
        Ok(())
    }
}

fn parse_kinds(names: &[String]) -> Result<Vec<ClassifierKind>> {
    let mut kinds: Vec<ClassifierKind> = names.iter().map(|n| n.parse()).collect::<Result<_>>()?;
    kinds.sort();
    kinds.dedup();
    Ok(kinds)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids() {
        assert_eq!(Grid::parse_range("0:1:0.25").unwrap().0, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(Grid::parse_range("0.8:0.9:0.05").unwrap().0, vec![0.8, 0.85, 0.9]);
        assert_eq!(Grid::parse_range("0:1:0.01").unwrap().0.len(), 101);
        assert_eq!(Grid::parse_range("0:1:0.1").unwrap().0[3], 0.3);
        assert_eq!(Grid::parse_range("2").unwrap().0, vec![2.0]);
        assert!(Grid::parse_range("1:0:0.1").is_err());
        assert!(Grid::parse_range("0:1:0").is_err());
        assert!(Grid(vec![1.5]).counts().is_err());
    }

    #[test]
    fn kv_round_trip() {
        let text = "synth = \"10x10+100\"\nfolds = 5\nm_match = \"0.8:1:0.1\"\nk_values = [1, 2]\nclassifiers = [\"ha-kfp\", \"Wa-kNN\"]\nforest_trees = 20\n";
        let c = ExperimentConfig::from_kv(text).unwrap();
        assert_eq!(c.folds, 5);
        assert_eq!(c.m_match.0, vec![0.8, 0.9, 1.0]);
        assert_eq!(c.kinds().unwrap(), vec![ClassifierKind::WaKnn, ClassifierKind::HaKfp]);
        assert_eq!(c.ensemble_kinds().unwrap(), vec![ClassifierKind::WaKnn, ClassifierKind::HaKfp]);
        assert_eq!(ExperimentConfig::from_kv(&c.to_kv()).unwrap(), c);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(ExperimentConfig::from_kv("recall_floor = 1.5").is_err());
        assert!(ExperimentConfig::from_kv("no_such_key = 1").is_err());
        assert!(ExperimentConfig::from_kv("classifiers = [\"svm\"]").is_err());
        assert!(ExperimentConfig::from_kv("distance_kinds = [\"Ha-kFP\"]").is_err());
        assert!(ExperimentConfig::from_kv("distance_variants = [7]").is_err());
        assert!(ExperimentConfig::from_kv("ensemble_weights = [[0.5, 0.5]]").is_err());
        assert!(ExperimentConfig::from_kv("k_values = [0]").is_err());
    }

    #[test]
    fn dataset_source_required() {
        assert!(ExperimentConfig::default().load_dataset().is_err());
        let c = ExperimentConfig { synth: Some("3x4+5".into()), ..Default::default() };
        assert_eq!(c.load_dataset().unwrap().shape().to_string(), "3x4+5");
    }
}
