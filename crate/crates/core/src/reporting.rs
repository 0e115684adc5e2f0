//! Tables and plot data rendered from result files.
//!
//! Tables are CSV with one row per (classifier, optimizer, r) showing the
//! best admissible parameter point. Figures are two-column whitespace
//! separated data plus a gnuplot script next to it.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::harness::{read_results, ResultRecord};
use crate::metrics::{bound_curve, r_precision};
use crate::{Error, Result};

pub const NO_POINT: &str = "no admissible point";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ReportKind {
    /// Baseline per classifier.
    T4,
    /// Confidence optimizer per classifier.
    T5,
    /// Too-far and too-close optimizers.
    T6,
    /// Unanimous ensembles over every non-empty member subset.
    T7,
    /// One block per defended-dataset result file.
    T8,
    /// Precision against unmonitored training size.
    F2,
    /// Precision against `M_match` at fixed K.
    F3,
    /// Precision against K at fixed `M_match`.
    F4,
    /// Lower bound against the too-far multiplier.
    F5,
    /// Lower bound against the ensemble threshold.
    F6,
    /// Lower bound against TPR with no wrong or false positives.
    F9,
}

impl ReportKind {
    pub const ALL: [ReportKind; 11] = [
        ReportKind::T4,
        ReportKind::T5,
        ReportKind::T6,
        ReportKind::T7,
        ReportKind::T8,
        ReportKind::F2,
        ReportKind::F3,
        ReportKind::F4,
        ReportKind::F5,
        ReportKind::F6,
        ReportKind::F9,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ReportKind::T4 => "t4",
            ReportKind::T5 => "t5",
            ReportKind::T6 => "t6",
            ReportKind::T7 => "t7",
            ReportKind::T8 => "t8",
            ReportKind::F2 => "f2",
            ReportKind::F3 => "f3",
            ReportKind::F4 => "f4",
            ReportKind::F5 => "f5",
            ReportKind::F6 => "f6",
            ReportKind::F9 => "f9",
        }
    }

    pub fn is_table(self) -> bool {
        matches!(self, ReportKind::T4 | ReportKind::T5 | ReportKind::T6 | ReportKind::T7 | ReportKind::T8)
    }
}

impl FromStr for ReportKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase();
        ReportKind::ALL
            .into_iter()
            .find(|k| k.name() == key)
            .ok_or_else(|| Error::param(format!("unknown report `{s}`")))
    }
}

/// Parameters of the synthetic lower-bound curve.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundSpec {
    pub n_p: u64,
    pub n_n: u64,
    pub r: f64,
    pub grid: Vec<f64>,
}

impl Default for BoundSpec {
    fn default() -> Self {
        BoundSpec { n_p: 50_000, n_n: 50_000, r: 1000.0, grid: (0..=100).map(|i| i as f64 / 100.0).collect() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportSpec {
    pub kind: ReportKind,
    pub inputs: Vec<PathBuf>,
    pub output: PathBuf,
    /// Classifier for figures (default: first one found).
    pub classifier: Option<String>,
    /// Base ratio to show (tables: all when unset; figures: 10 for
    /// F2-F4 and 1000 otherwise).
    pub r: Option<f64>,
    /// K held fixed in F3.
    pub k: usize,
    /// `M_match` held fixed in F4.
    pub m_match: f64,
    /// Distance name for F5 (default: first one found).
    pub dist: Option<String>,
    pub bound: BoundSpec,
}

impl ReportSpec {
    pub fn new(kind: ReportKind, inputs: Vec<PathBuf>, output: PathBuf) -> Self {
        ReportSpec {
            kind,
            inputs,
            output,
            classifier: None,
            r: None,
            k: 3,
            m_match: 0.9,
            dist: None,
            bound: BoundSpec::default(),
        }
    }
}

/// Splits `K=3;M=0.9` into a map.
pub fn parse_params(params: &str) -> BTreeMap<&str, &str> {
    params.split(';').filter_map(|kv| kv.split_once('=')).collect()
}

fn param_f64(rec: &ResultRecord, key: &str) -> Option<f64> {
    parse_params(&rec.params).get(key).and_then(|v| v.parse().ok())
}

/// Writes the report and returns the files produced.
pub fn render(spec: &ReportSpec) -> Result<Vec<PathBuf>> {
    let mut inputs = Vec::with_capacity(spec.inputs.len());
    for p in &spec.inputs {
        let label = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        inputs.push((label, read_results(p)?));
    }
    if spec.kind.is_table() {
        let text = render_table(spec, &inputs)?;
        write(&spec.output, &text)?;
        Ok(vec![spec.output.clone()])
    } else {
        let points = curve_points(spec, &inputs)?;
        let mut data = String::new();
        for (x, y) in &points {
            writeln!(data, "{x} {y}").unwrap();
        }
        write(&spec.output, &data)?;
        let script = spec.output.with_extension("gp");
        write(&script, &gnuplot_script(spec.kind, &spec.output))?;
        Ok(vec![spec.output.clone(), script])
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

const TABLE_HEADER: &str = "table,source,classifier,po,r,params,recall,point,lower,upper,method";

fn order_of_appearance<'a>(records: impl Iterator<Item = &'a str>) -> Vec<String> {
    let mut seen: Vec<String> = Vec::new();
    for r in records {
        if !seen.iter().any(|s| s == r) {
            seen.push(r.to_string());
        }
    }
    seen
}

fn r_values(records: &[ResultRecord], only: Option<f64>) -> Vec<f64> {
    let mut rs: Vec<f64> = records.iter().map(|r| r.r).collect();
    rs.sort_by(f64::total_cmp);
    rs.dedup();
    match only {
        Some(r) => rs.into_iter().filter(|x| *x == r).collect(),
        None => rs,
    }
}

fn table_line(out: &mut String, table: &str, source: &str, classifier: &str, po: &str, r: f64, best: Option<&ResultRecord>) {
    match best {
        Some(b) => writeln!(
            out,
            "{table},{source},{classifier},{po},{r},{},{},{},{},{},{}",
            b.params, b.r_tp, b.point, b.lower, b.upper, b.method
        ),
        None => writeln!(out, "{table},{source},{classifier},{po},{r},{NO_POINT},,,,,"),
    }
    .unwrap();
}

/// Renders a table analogue as CSV text.
pub fn render_table(spec: &ReportSpec, inputs: &[(String, Vec<ResultRecord>)]) -> Result<String> {
    if inputs.is_empty() || inputs.iter().all(|(_, r)| r.is_empty()) {
        return Err(Error::EmptyResults);
    }
    let table = spec.kind.name();
    let mut out = String::from(TABLE_HEADER);
    out.push('\n');
    let sources: &[(String, Vec<ResultRecord>)] = if spec.kind == ReportKind::T8 { inputs } else { &inputs[..1] };
    let merged: Vec<ResultRecord>;
    let sources: Vec<(&str, &[ResultRecord])> = if spec.kind == ReportKind::T8 {
        sources.iter().map(|(l, r)| (l.as_str(), r.as_slice())).collect()
    } else {
        merged = inputs.iter().flat_map(|(_, r)| r.iter().cloned()).collect();
        vec![("all", merged.as_slice())]
    };
    for (source, records) in sources {
        let pos: &[&str] = match spec.kind {
            ReportKind::T4 => &["baseline"],
            ReportKind::T5 => &["confidence"],
            ReportKind::T6 => &["too_far", "too_close"],
            ReportKind::T7 => &["ensemble_unanimous"],
            ReportKind::T8 => &["baseline", "confidence"],
            _ => unreachable!(),
        };
        let relevant: Vec<&ResultRecord> = records.iter().filter(|r| pos.contains(&r.po.as_str())).collect();
        if relevant.is_empty() {
            return Err(Error::Format(format!("{source}: no rows for table {table}")));
        }
        let best = |classifier: &str, po: &str, r: f64| {
            relevant.iter().find(|x| x.best && x.classifier == classifier && x.po == po && x.r == r).copied()
        };
        if spec.kind == ReportKind::T7 {
            let rs = r_values(records, spec.r);
            let r = *rs.last().ok_or(Error::EmptyResults)?;
            for subset in member_subsets(&relevant) {
                table_line(&mut out, table, source, &subset, "ensemble_unanimous", r, best(&subset, "ensemble_unanimous", r));
            }
            continue;
        }
        let classifiers = order_of_appearance(relevant.iter().map(|r| r.classifier.as_str()));
        for r in r_values(records, spec.r) {
            for c in &classifiers {
                for po in pos {
                    if relevant.iter().any(|x| &x.classifier == c && x.po == *po) {
                        table_line(&mut out, table, source, c, po, r, best(c, po, r));
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Every non-empty subset of the single-classifier members seen, by size
/// then member order.
fn member_subsets(records: &[&ResultRecord]) -> Vec<String> {
    let members = order_of_appearance(records.iter().flat_map(|r| r.classifier.split('+')));
    let n = members.len();
    let mut subsets: Vec<Vec<usize>> =
        (1u32..(1 << n)).map(|mask| (0..n).filter(|b| mask & (1 << b) != 0).collect()).collect();
    subsets.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    subsets.into_iter().map(|s| s.iter().map(|&i| members[i].as_str()).collect::<Vec<_>>().join("+")).collect()
}

/// Two-column data for a figure analogue.
pub fn curve_points(spec: &ReportSpec, inputs: &[(String, Vec<ResultRecord>)]) -> Result<Vec<(f64, f64)>> {
    if spec.kind == ReportKind::F9 {
        let b = &spec.bound;
        return bound_curve(&b.grid, b.n_p, b.n_n, b.r);
    }
    let records: Vec<&ResultRecord> = inputs.iter().flat_map(|(_, r)| r.iter()).collect();
    if records.is_empty() {
        return Err(Error::EmptyResults);
    }
    let po = match spec.kind {
        ReportKind::F2 => "openworld_size",
        ReportKind::F3 | ReportKind::F4 => "confidence",
        ReportKind::F5 => "too_far",
        ReportKind::F6 => "ensemble_threshold",
        _ => return Err(Error::param(format!("{} is a table", spec.kind.name()))),
    };
    let default_r = if matches!(spec.kind, ReportKind::F2 | ReportKind::F3 | ReportKind::F4) { 10.0 } else { 1000.0 };
    let r = spec.r.unwrap_or(default_r);
    let of_po: Vec<&ResultRecord> = records.into_iter().filter(|x| x.po == po && x.r == r).collect();
    let classifier = match &spec.classifier {
        Some(c) => c.clone(),
        None => of_po.first().map(|x| x.classifier.clone()).ok_or(Error::EmptyResults)?,
    };
    let rows: Vec<&ResultRecord> = of_po.into_iter().filter(|x| x.classifier == classifier).collect();
    let dist = spec.dist.clone().or_else(|| rows.first().and_then(|x| parse_params(&x.params).get("dist").map(|s| s.to_string())));
    let mut points = Vec::new();
    for rec in rows {
        let params = parse_params(&rec.params);
        let x = match spec.kind {
            ReportKind::F2 => param_f64(rec, "N"),
            ReportKind::F3 => (params.get("K") == Some(&spec.k.to_string().as_str())).then(|| param_f64(rec, "M")).flatten(),
            ReportKind::F4 => (param_f64(rec, "M") == Some(spec.m_match)).then(|| param_f64(rec, "K")).flatten(),
            ReportKind::F5 => (params.get("dist").map(|d| d.to_string()) == dist).then(|| param_f64(rec, "M")).flatten(),
            _ => param_f64(rec, "M"),
        };
        let Some(x) = x else { continue };
        if matches!(spec.kind, ReportKind::F5 | ReportKind::F6) && !rec.admissible {
            continue;
        }
        let y = match spec.kind {
            ReportKind::F2 | ReportKind::F3 | ReportKind::F4 => r_precision(rec.r_tp, rec.r_wp, rec.r_fp, rec.r),
            _ => rec.lower_value(),
        };
        if let Some(y) = y {
            points.push((x, y));
        }
    }
    if points.is_empty() {
        return Err(Error::EmptyResults);
    }
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(points)
}

fn gnuplot_script(kind: ReportKind, data: &Path) -> String {
    let (xlabel, ylabel) = match kind {
        ReportKind::F2 => ("unmonitored training traces N", "pi_10"),
        ReportKind::F3 => ("M_match", "pi_10"),
        ReportKind::F4 => ("K", "pi_10"),
        ReportKind::F5 => ("too-far multiplier M", "lower bound of pi_1000"),
        ReportKind::F6 => ("M_ensemble", "lower bound of pi_1000"),
        _ => ("TPR", "lower bound of pi_1000"),
    };
    let name = data.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let png = data.with_extension("png").file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    format!(
        "set terminal pngcairo size 800,500\nset output '{png}'\nset xlabel '{xlabel}'\nset ylabel '{ylabel}'\nset grid\nplot '{name}' using 1:2 with linespoints notitle\n"
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{estimate_rows, SweepRow};
    use crate::metrics::ConfusionCounts;

    fn rows() -> Vec<SweepRow> {
        let mut rows = Vec::new();
        let names = ["A", "B", "C", "D", "E"];
        let c = |tp, fp| ConfusionCounts { n_p: 1000, n_n: 5000, n_tp: tp, n_wp: 10, n_fp: fp };
        for n in names {
            rows.push(SweepRow { classifier: n.into(), po: "baseline".into(), params: "-".into(), counts: c(800, 200) });
            for (i, m) in [0.5, 0.9, 1.0].iter().enumerate() {
                rows.push(SweepRow {
                    classifier: n.into(),
                    po: "confidence".into(),
                    params: format!("K=3;M={m}"),
                    counts: c(400 + 200 * i as u64, 5 + 50 * i as u64),
                });
            }
        }
        for mask in 1u32..32 {
            let members: Vec<&str> = (0..5).filter(|b| mask & (1 << b) != 0).map(|b| names[b]).collect();
            if members.len() == 4 {
                continue;
            }
            rows.push(SweepRow {
                classifier: members.join("+"),
                po: "ensemble_unanimous".into(),
                params: "-".into(),
                counts: c(800 - 100 * members.len() as u64, 40 / members.len() as u64),
            });
        }
        rows
    }

    fn inputs() -> Vec<(String, Vec<ResultRecord>)> {
        vec![("run".into(), estimate_rows(&rows(), &[10.0, 1000.0], 0.2, 1.96))]
    }

    fn spec(kind: ReportKind) -> ReportSpec {
        ReportSpec::new(kind, vec![], PathBuf::from("out"))
    }

    #[test]
    fn t7_has_every_subset() {
        let text = render_table(&spec(ReportKind::T7), &inputs()).unwrap();
        let lines: Vec<&str> = text.lines().skip(1).collect();
        assert_eq!(lines.len(), 31);
        assert_eq!(lines.iter().filter(|l| l.contains(NO_POINT)).count(), 5);
        assert!(lines[0].starts_with("t7,all,A,ensemble_unanimous,1000,"));
        assert!(lines[30].contains(",A+B+C+D+E,"));
    }

    #[test]
    fn t4_and_t5_rows() {
        let t4 = render_table(&spec(ReportKind::T4), &inputs()).unwrap();
        assert_eq!(t4.lines().count(), 1 + 5 * 2);
        let t5 = render_table(&spec(ReportKind::T5), &inputs()).unwrap();
        assert!(t5.lines().skip(1).all(|l| l.contains("K=3;M=")));
        let only10 = ReportSpec { r: Some(10.0), ..spec(ReportKind::T4) };
        assert_eq!(render_table(&only10, &inputs()).unwrap().lines().count(), 6);
    }

    #[test]
    fn empty_results_are_errors() {
        assert!(matches!(render_table(&spec(ReportKind::T4), &[]), Err(Error::EmptyResults)));
        assert!(matches!(render_table(&spec(ReportKind::T4), &[("x".into(), vec![])]), Err(Error::EmptyResults)));
        assert!(curve_points(&spec(ReportKind::F3), &[]).is_err());
    }

    #[test]
    fn f9_is_the_bound_curve() {
        let s = spec(ReportKind::F9);
        let pts = curve_points(&s, &[]).unwrap();
        assert_eq!(pts, bound_curve(&s.bound.grid, 50_000, 50_000, 1000.0).unwrap());
    }

    #[test]
    fn f3_tracks_m_match() {
        let pts = curve_points(&spec(ReportKind::F3), &inputs()).unwrap();
        assert_eq!(pts.iter().map(|p| p.0).collect::<Vec<_>>(), vec![0.5, 0.9, 1.0]);
        assert!(pts[0].1 > pts[2].1);
    }

    #[test]
    fn render_writes_files_deterministically() {
        let dir = tempfile::tempdir().unwrap();
        let res = dir.path().join("res.csv");
        crate::harness::append_results(&res, &inputs()[0].1).unwrap();
        let out = dir.path().join("t7.csv");
        let s = ReportSpec::new(ReportKind::T7, vec![res.clone()], out.clone());
        render(&s).unwrap();
        let first = fs::read(&out).unwrap();
        render(&s).unwrap();
        assert_eq!(fs::read(&out).unwrap(), first);
        let fig = ReportSpec::new(ReportKind::F3, vec![res], dir.path().join("f3.dat"));
        let files = render(&fig).unwrap();
        assert!(fs::read_to_string(&files[1]).unwrap().contains("plot 'f3.dat'"));
    }

    #[test]
    fn kinds_parse() {
        assert_eq!("T7".parse::<ReportKind>().unwrap(), ReportKind::T7);
        assert!("t9".parse::<ReportKind>().is_err());
    }
}
