//! Result rows and their CSV form.
//!
//! A result file starts with a schema line, then a CSV header, then one row
//! per (classifier, optimizer, parameter point, r). Files are only ever
//! appended to; appending to a file with a different schema is an error.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::metrics::{precision_estimate_z, ConfusionCounts, Value};
use crate::{Error, Result};

pub const SCHEMA_LINE: &str = "# wfprecision-results v1";

/// Aggregated counts for one parameter point.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepRow {
    pub classifier: String,
    pub po: String,
    pub params: String,
    pub counts: ConfusionCounts,
}

/// One CSV line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub classifier: String,
    pub po: String,
    pub params: String,
    pub r: f64,
    pub n_p: u64,
    pub n_n: u64,
    pub n_tp: u64,
    pub n_wp: u64,
    pub n_fp: u64,
    pub r_tp: f64,
    pub r_wp: f64,
    pub r_fp: f64,
    pub method: String,
    pub point: String,
    pub lower: String,
    pub upper: String,
    pub admissible: bool,
    pub best: bool,
}

fn value_text(v: Value) -> String {
    match v {
        Ok(x) => x.to_string(),
        Err(reason) => format!("NA:{reason}"),
    }
}

/// Parses a value column; absent values give `None`.
pub fn parse_value(text: &str) -> Option<f64> {
    text.parse().ok()
}

impl ResultRecord {
    pub fn lower_value(&self) -> Option<f64> {
        parse_value(&self.lower)
    }

    pub fn point_value(&self) -> Option<f64> {
        parse_value(&self.point)
    }

    pub fn counts(&self) -> ConfusionCounts {
        ConfusionCounts { n_p: self.n_p, n_n: self.n_n, n_tp: self.n_tp, n_wp: self.n_wp, n_fp: self.n_fp }
    }
}

/// Expands rows into records for every `r`, then flags the best admissible
/// point per (classifier, optimizer, r): highest lower bound with recall at
/// least `floor`, earliest grid point on ties.
pub fn estimate_rows(rows: &[SweepRow], r_values: &[f64], floor: f64, z: f64) -> Vec<ResultRecord> {
    let mut out = Vec::with_capacity(rows.len() * r_values.len());
    for &r in r_values {
        for row in rows {
            let est = precision_estimate_z(&row.counts, r, z);
            let c = &row.counts;
            out.push(ResultRecord {
                classifier: row.classifier.clone(),
                po: row.po.clone(),
                params: row.params.clone(),
                r,
                n_p: c.n_p,
                n_n: c.n_n,
                n_tp: c.n_tp,
                n_wp: c.n_wp,
                n_fp: c.n_fp,
                r_tp: est.rates.tp,
                r_wp: est.rates.wp,
                r_fp: est.rates.fp,
                method: est.method.to_string(),
                point: value_text(est.point),
                lower: value_text(est.lower),
                upper: value_text(est.upper),
                admissible: est.rates.recall() >= floor && est.lower.is_ok(),
                best: false,
            });
        }
    }
    flag_best(&mut out);
    out
}

fn flag_best(records: &mut [ResultRecord]) {
    let mut best: BTreeMap<(String, String, u64), (usize, f64)> = BTreeMap::new();
    for (i, rec) in records.iter().enumerate() {
        if !rec.admissible {
            continue;
        }
        let lower = rec.lower_value().unwrap_or(f64::NEG_INFINITY);
        let key = (rec.classifier.clone(), rec.po.clone(), rec.r.to_bits());
        match best.get(&key) {
            Some(&(_, b)) if b >= lower => {}
            _ => {
                best.insert(key, (i, lower));
            }
        }
    }
    for (i, _) in best.into_values() {
        records[i].best = true;
    }
}

/// Best records only, in file order.
pub fn best_records(records: &[ResultRecord]) -> Vec<&ResultRecord> {
    records.iter().filter(|r| r.best).collect()
}

fn to_csv(records: &[ResultRecord], header: bool) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().has_headers(header).from_writer(Vec::new());
    for r in records {
        w.serialize(r).map_err(|e| Error::Format(format!("csv: {e}")))?;
    }
    if records.is_empty() && header {
        return Ok(header_line().into_bytes());
    }
    w.into_inner().map_err(|e| Error::Format(format!("csv: {e}")))
}

fn header_line() -> String {
    "classifier,po,params,r,n_p,n_n,n_tp,n_wp,n_fp,r_tp,r_wp,r_fp,method,point,lower,upper,admissible,best\n".into()
}

/// Appends records, writing the schema line and header if the file is new
/// or empty.
pub fn append_results(path: &Path, records: &[ResultRecord]) -> Result<()> {
    let fresh = fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    if !fresh {
        let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut first = String::new();
        BufReader::new(f).read_line(&mut first).map_err(|e| Error::io(path, e))?;
        if first.trim_end() != SCHEMA_LINE {
            return Err(Error::Format(format!("{} has a different schema", path.display())));
        }
    }
    let mut f = OpenOptions::new().create(true).append(true).open(path).map_err(|e| Error::io(path, e))?;
    let mut buf = Vec::new();
    if fresh {
        buf.extend_from_slice(SCHEMA_LINE.as_bytes());
        buf.push(b'\n');
    }
    buf.extend(to_csv(records, fresh)?);
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_results(&text).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn parse_results(text: &str) -> Result<Vec<ResultRecord>> {
    let body = text
        .strip_prefix(SCHEMA_LINE)
        .and_then(|rest| rest.strip_prefix('\n'))
        .ok_or_else(|| Error::Format("missing result schema line".into()))?;
    let mut rdr = csv::Reader::from_reader(body.as_bytes());
    rdr.deserialize().map(|r| r.map_err(|e| Error::Format(format!("csv: {e}")))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(classifier: &str, params: &str, tp: u64, fp: u64) -> SweepRow {
        SweepRow {
            classifier: classifier.into(),
            po: "confidence".into(),
            params: params.into(),
            counts: ConfusionCounts { n_p: 100, n_n: 1000, n_tp: tp, n_wp: 2, n_fp: fp },
        }
    }

    #[test]
    fn best_respects_floor() {
        let rows = vec![row("A", "M=1", 90, 400), row("A", "M=0.5", 40, 1), row("A", "M=0.1", 10, 0)];
        let recs = estimate_rows(&rows, &[10.0], 0.2, 1.96);
        let best = best_records(&recs);
        assert_eq!(best.len(), 1);
        assert_eq!(best[0].params, "M=0.5");
        assert!(!recs[2].admissible);
    }

    #[test]
    fn csv_round_trip_and_append() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        let recs = estimate_rows(&[row("A", "K=1;M=0.9", 50, 3), row("B", "-", 70, 30)], &[10.0, 1000.0], 0.2, 1.96);
        append_results(&path, &recs[..2]).unwrap();
        append_results(&path, &recs[2..]).unwrap();
        let back = read_results(&path).unwrap();
        assert_eq!(back, recs);
        assert_eq!(back[0].point, "NA:lower_bound_only");
        fs::write(&path, "# other\n").unwrap();
        assert!(append_results(&path, &recs).is_err());
        assert!(parse_results("a,b\n").is_err());
    }
}
