//! CSV layouts for connectedness tables and model-comparison reports.

use std::io::{Read, Write};

use nalgebra::DMatrix;

use crate::connectedness::{self, FevdTable, GroupTable};
use crate::error::{Error, Result};
use crate::selection::{CriteriaRow, FmseReport};

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_cell(s: &str, row: usize, column: usize) -> Result<f64> {
    s.trim().parse().map_err(|_| Error::Parse {
        row,
        column,
        message: format!("unparseable number `{s}`"),
    })
}

/// Connectedness table with a trailing "From others" column and "To others"
/// and "Net" rows. Every value is multiplied by `scale`; the bottom-right
/// cell is the off-diagonal mass divided by `K`.
pub fn write_connectedness_csv<W: Write>(table: &FevdTable, labels: &[String], scale: f64, sink: W) -> Result<()> {
    let k = table.k();
    if labels.len() != k {
        return Err(Error::Shape(format!("{} labels for a {k}x{k} table", labels.len())));
    }
    let summary = connectedness::summarize(table);
    let mut w = csv::Writer::from_writer(sink);
    let mut header = vec![String::new()];
    header.extend(labels.iter().cloned());
    header.push("From others".into());
    w.write_record(&header)?;
    for i in 0..k {
        let mut row = vec![labels[i].clone()];
        row.extend((0..k).map(|j| fmt_f64(table.theta[(i, j)] * scale)));
        row.push(fmt_f64(summary.from[i] * scale));
        w.write_record(&row)?;
    }
    let mut to = vec!["To others".to_string()];
    to.extend(summary.to.iter().map(|v| fmt_f64(v * scale)));
    to.push(fmt_f64(summary.total * scale));
    w.write_record(&to)?;
    let mut net = vec!["Net".to_string()];
    net.extend(summary.net.iter().map(|v| fmt_f64(v * scale)));
    net.push(String::new());
    w.write_record(&net)?;
    w.flush()?;
    Ok(())
}

/// Reads the `K x K` block of a table written by
/// [`write_connectedness_csv`], dividing by `scale`.
pub fn read_connectedness_csv<R: Read>(source: R, scale: f64) -> Result<(Vec<String>, DMatrix<f64>)> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(source);
    let header = r.headers()?.clone();
    if header.len() < 3 || header.get(header.len() - 1) != Some("From others") {
        return Err(Error::Parse {
            row: 1,
            column: header.len(),
            message: "expected a trailing `From others` column".into(),
        });
    }
    let labels: Vec<String> = header.iter().skip(1).take(header.len() - 2).map(str::to_owned).collect();
    let k = labels.len();
    let mut values = Vec::with_capacity(k * k);
    for (i, rec) in r.records().take(k).enumerate() {
        let rec = rec?;
        if rec.len() != k + 2 {
            return Err(Error::Parse {
                row: i + 2,
                column: rec.len(),
                message: format!("expected {} fields", k + 2),
            });
        }
        for j in 0..k {
            values.push(parse_cell(&rec[j + 1], i + 2, j + 2)? / scale);
        }
    }
    if values.len() != k * k {
        return Err(Error::Parse {
            row: values.len() / k.max(1) + 2,
            column: 1,
            message: "table has fewer rows than columns".into(),
        });
    }
    Ok((labels, DMatrix::from_row_slice(k, k, &values)))
}

/// Group table in the same layout; the diagonal holds within-group mass.
pub fn write_group_csv<W: Write>(table: &GroupTable, scale: f64, sink: W) -> Result<()> {
    let g = table.labels.len();
    let mut w = csv::Writer::from_writer(sink);
    let mut header = vec![String::new()];
    header.extend(table.labels.iter().cloned());
    header.push("From others".into());
    w.write_record(&header)?;
    for i in 0..g {
        let mut row = vec![table.labels[i].clone()];
        row.extend((0..g).map(|j| fmt_f64(table.matrix[(i, j)] * scale)));
        row.push(fmt_f64(table.from[i] * scale));
        w.write_record(&row)?;
    }
    let mut to = vec!["To others".to_string()];
    to.extend(table.to.iter().map(|v| fmt_f64(v * scale)));
    to.push(fmt_f64(table.grand_total() * scale));
    w.write_record(&to)?;
    let mut net = vec!["Net".to_string()];
    net.extend(table.net.iter().map(|v| fmt_f64(v * scale)));
    net.push(String::new());
    w.write_record(&net)?;
    w.flush()?;
    Ok(())
}

/// `Model,p,AIC,HQ,BIC`.
pub fn write_criteria_csv<W: Write>(rows: &[CriteriaRow], sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["Model", "p", "AIC", "HQ", "BIC"])?;
    for r in rows {
        w.write_record([r.estimator.clone(), r.p.to_string(), fmt_f64(r.aic), fmt_f64(r.hq), fmt_f64(r.bic)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_criteria_csv<R: Read>(source: R) -> Result<Vec<CriteriaRow>> {
    let mut r = csv::Reader::from_reader(source);
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        if rec.len() != 5 {
            return Err(Error::Parse {
                row: line,
                column: rec.len(),
                message: "expected 5 fields".into(),
            });
        }
        out.push(CriteriaRow {
            estimator: rec[0].to_string(),
            p: rec[1].parse().map_err(|_| Error::Parse {
                row: line,
                column: 2,
                message: "lag order".into(),
            })?,
            aic: parse_cell(&rec[2], line, 3)?,
            hq: parse_cell(&rec[3], line, 4)?,
            bic: parse_cell(&rec[4], line, 5)?,
        });
    }
    Ok(out)
}

/// `Lag,<estimator>,...`: one row per lag order, one column per estimator.
/// Missing combinations are left empty.
pub fn write_fmse_csv<W: Write>(reports: &[FmseReport], sink: W) -> Result<()> {
    let mut estimators: Vec<&str> = Vec::new();
    let mut lags: Vec<usize> = Vec::new();
    for r in reports {
        if !estimators.contains(&r.estimator.as_str()) {
            estimators.push(&r.estimator);
        }
        if !lags.contains(&r.p) {
            lags.push(r.p);
        }
    }
    lags.sort_unstable();
    let mut w = csv::Writer::from_writer(sink);
    let mut header = vec!["Lag".to_string()];
    header.extend(estimators.iter().map(|s| s.to_string()));
    w.write_record(&header)?;
    for p in lags {
        let mut row = vec![p.to_string()];
        for e in &estimators {
            row.push(
                reports
                    .iter()
                    .find(|r| r.p == p && r.estimator == *e)
                    .map(|r| fmt_f64(r.fmse))
                    .unwrap_or_default(),
            );
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
