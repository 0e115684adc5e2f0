//! Confusion accounting, r-precision and its confidence bounds.
//!
//! Rates carry their own denominators: TP and WP rates are over `N_P`
//! positive test elements, the FP rate over `N_N` negative ones. Interval
//! endpoints are clamped to `[0, 1]` before entering the precision bounds.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::traces::Label;
use crate::{Error, Result};

/// Standard normal quantile for a two-sided 95% interval.
pub const Z95: f64 = 1.96;

/// Below this many false positives the Wilson lower bound replaces Wald.
pub const WILSON_FP_THRESHOLD: u64 = 10;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub n_p: u64,
    pub n_n: u64,
    pub n_tp: u64,
    pub n_wp: u64,
    pub n_fp: u64,
}

impl ConfusionCounts {
    pub fn n_fn(&self) -> u64 {
        self.n_p - self.n_tp - self.n_wp
    }

    pub fn n_tn(&self) -> u64 {
        self.n_n - self.n_fp
    }

    pub fn is_valid(&self) -> bool {
        self.n_tp + self.n_wp <= self.n_p && self.n_fp <= self.n_n
    }

    /// Adds one (truth, prediction) pair.
    pub fn record(&mut self, truth: Label, predicted: Label) {
        match (truth, predicted) {
            (Label::Monitored(t), Label::Monitored(p)) => {
                self.n_p += 1;
                if t == p {
                    self.n_tp += 1;
                } else {
                    self.n_wp += 1;
                }
            }
            (Label::Monitored(_), Label::NonMonitored) => self.n_p += 1,
            (Label::NonMonitored, Label::Monitored(_)) => {
                self.n_n += 1;
                self.n_fp += 1;
            }
            (Label::NonMonitored, Label::NonMonitored) => self.n_n += 1,
        }
    }

    pub fn merge(&mut self, other: &ConfusionCounts) {
        self.n_p += other.n_p;
        self.n_n += other.n_n;
        self.n_tp += other.n_tp;
        self.n_wp += other.n_wp;
        self.n_fp += other.n_fp;
    }

    /// Empirical rates; a zero denominator gives a zero rate.
    pub fn rates(&self) -> Rates {
        let div = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        Rates {
            tp: div(self.n_tp, self.n_p),
            wp: div(self.n_wp, self.n_p),
            fp: div(self.n_fp, self.n_n),
            n_p: self.n_p,
            n_n: self.n_n,
        }
    }
}

pub fn tally<I: IntoIterator<Item = (Label, Label)>>(pairs: I) -> ConfusionCounts {
    let mut c = ConfusionCounts::default();
    for (t, p) in pairs {
        c.record(t, p);
    }
    c
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub tp: f64,
    pub wp: f64,
    pub fp: f64,
    pub n_p: u64,
    pub n_n: u64,
}

impl Rates {
    /// Recall, the true-positive rate.
    pub fn recall(&self) -> f64 {
        self.tp
    }
}

/// `R_TP / (R_TP + R_WP + r·R_FP)`; `None` when all three rates are zero.
pub fn r_precision(tp: f64, wp: f64, fp: f64, r: f64) -> Option<f64> {
    let den = tp + wp + r * fp;
    if den > 0.0 {
        Some(tp / den)
    } else {
        None
    }
}

pub fn wald_halfwidth(x: f64, n: u64) -> Result<f64> {
    wald_halfwidth_z(x, n, Z95)
}

pub fn wald_halfwidth_z(x: f64, n: u64, z: f64) -> Result<f64> {
    check_rate(x, n)?;
    Ok(z * (x * (1.0 - x) / n as f64).sqrt())
}

pub fn wilson_upper(x: f64, n: u64) -> Result<f64> {
    wilson_upper_z(x, n, Z95)
}

pub fn wilson_upper_z(x: f64, n: u64, z: f64) -> Result<f64> {
    check_rate(x, n)?;
    let n = n as f64;
    let z2 = z * z;
    let centre = x + z2 / (2.0 * n);
    let spread = z * (x * (1.0 - x) / n + z2 / (4.0 * n * n)).sqrt();
    Ok((centre + spread) / (1.0 + z2 / n))
}

fn check_rate(x: f64, n: u64) -> Result<()> {
    if n == 0 {
        return Err(Error::param("interval needs a non-zero sample size"));
    }
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::param(format!("rate {x} outside [0, 1]")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    Wald,
    Wilson,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Wald => "WALD",
            Method::Wilson => "WILSON",
        })
    }
}

/// Why a precision value is missing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Absent {
    /// No positive classifications at all.
    NoPositives,
    /// The Wilson branch reports a lower bound only.
    LowerBoundOnly,
    /// A rate had a zero denominator.
    EmptyPopulation,
}

impl fmt::Display for Absent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Absent::NoPositives => "no_positives",
            Absent::LowerBoundOnly => "lower_bound_only",
            Absent::EmptyPopulation => "empty_population",
        })
    }
}

pub type Value = std::result::Result<f64, Absent>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrecisionEstimate {
    pub r: f64,
    pub method: Method,
    pub point: Value,
    pub lower: Value,
    pub upper: Value,
    pub rates: Rates,
}

impl PrecisionEstimate {
    /// Lower bound as a number, with missing values ordered below every
    /// real bound.
    pub fn lower_or_neg(&self) -> f64 {
        self.lower.unwrap_or(f64::NEG_INFINITY)
    }
}

struct Interval {
    min: f64,
    max: f64,
}

fn wald_interval(x: f64, n: u64, z: f64) -> Interval {
    let c = wald_halfwidth_z(x, n, z).unwrap_or(0.0);
    Interval { min: (x - c).max(0.0), max: (x + c).min(1.0) }
}

pub fn precision_estimate(counts: &ConfusionCounts, r: f64) -> PrecisionEstimate {
    precision_estimate_z(counts, r, Z95)
}

/// Wald bounds when `N_FP ≥ 10`, otherwise the Wilson lower bound alone.
pub fn precision_estimate_z(counts: &ConfusionCounts, r: f64, z: f64) -> PrecisionEstimate {
    let rates = counts.rates();
    let method = if counts.n_fp >= WILSON_FP_THRESHOLD { Method::Wald } else { Method::Wilson };
    let mut est = PrecisionEstimate {
        r,
        method,
        point: Err(Absent::NoPositives),
        lower: Err(Absent::NoPositives),
        upper: Err(Absent::NoPositives),
        rates,
    };
    if counts.n_p == 0 || counts.n_n == 0 {
        est.point = Err(Absent::EmptyPopulation);
        est.lower = Err(Absent::EmptyPopulation);
        est.upper = Err(Absent::EmptyPopulation);
        return est;
    }
    let tp = wald_interval(rates.tp, counts.n_p, z);
    let wp = wald_interval(rates.wp, counts.n_p, z);
    match method {
        Method::Wald => {
            let fp = wald_interval(rates.fp, counts.n_n, z);
            let Some(point) = r_precision(rates.tp, rates.wp, rates.fp, r) else {
                return est;
            };
            est.point = Ok(point);
            let upper = match r_precision(tp.max, wp.min, fp.min, r) {
                Some(u) => u.min(1.0),
                None => 1.0,
            };
            let c = upper - point;
            est.upper = Ok(upper);
            est.lower = Ok((point - c).max(0.0));
        }
        Method::Wilson => {
            let fp_max = wilson_upper_z(rates.fp, counts.n_n, z).unwrap_or(1.0).min(1.0);
            est.point = Err(Absent::LowerBoundOnly);
            est.upper = Err(Absent::LowerBoundOnly);
            let den = tp.max + wp.max + r * fp_max;
            est.lower = Ok(if den > 0.0 { tp.min / den } else { 0.0 });
        }
    }
    est
}

/// Lower bound against TPR with no wrong or false positives observed.
pub fn bound_curve(tp_grid: &[f64], n_p: u64, n_n: u64, r: f64) -> Result<Vec<(f64, f64)>> {
    if n_p == 0 || n_n == 0 {
        return Err(Error::param("bound curve needs non-zero N_P and N_N"));
    }
    tp_grid
        .iter()
        .map(|&x| {
            if !(0.0..=1.0).contains(&x) {
                return Err(Error::param(format!("TPR {x} outside [0, 1]")));
            }
            let counts = ConfusionCounts { n_p, n_n, n_tp: (x * n_p as f64).round() as u64, n_wp: 0, n_fp: 0 };
            let est = precision_estimate(&counts, r);
            Ok((x, est.lower.unwrap_or(0.0)))
        })
        .collect()
}
