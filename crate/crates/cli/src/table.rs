// SPDX-License-Identifier: MIT OR Apache-2.0

//! Norm × condition score tables.

use std::fmt::Write as _;
use std::str::FromStr;

use interp_core::baselines::ConditionName;
use interp_core::mappers::MapperKind;
use serde::{Deserialize, Serialize};

use crate::audit::AuditReport;
use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Style {
    Text,
    Csv,
    Json,
}

impl FromStr for Style {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        match s {
            "text" => Ok(Style::Text),
            "csv" => Ok(Style::Csv),
            "json" => Ok(Style::Json),
            _ => Err(CliError::Validation(format!("unknown style '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub norm: String,
    pub mapper: MapperKind,
    pub metric: String,
    /// One entry per column of [`ResultTable::conditions`].
    pub values: Vec<Option<f64>>,
}

/// Wide layout: one row per (norm, mapper, metric), one column per condition.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    pub conditions: Vec<ConditionName>,
    pub rows: Vec<TableRow>,
}

const KEY_COLUMNS: [&str; 3] = ["norm", "mapper", "metric"];

impl ResultTable {
    pub fn from_report(report: &AuditReport) -> Self {
        let present: Vec<ConditionName> = ConditionName::ALL
            .into_iter()
            .filter(|c| {
                report
                    .norms
                    .iter()
                    .flat_map(|n| &n.mappers)
                    .flat_map(|m| &m.cells)
                    .any(|cell| cell.condition == *c)
            })
            .collect();
        let mut rows = Vec::new();
        for n in &report.norms {
            for m in &n.mappers {
                let mut metrics: Vec<&str> = Vec::new();
                for c in &m.cells {
                    if !metrics.contains(&c.metric.as_str()) {
                        metrics.push(&c.metric);
                    }
                }
                for metric in metrics {
                    let values = present
                        .iter()
                        .map(|cond| {
                            m.cells
                                .iter()
                                .find(|c| c.condition == *cond && c.metric == metric)
                                .and_then(|c| c.mean)
                        })
                        .collect();
                    rows.push(TableRow {
                        norm: n.norm.clone(),
                        mapper: m.mapper,
                        metric: metric.to_string(),
                        values,
                    });
                }
            }
        }
        ResultTable {
            conditions: present,
            rows,
        }
    }

    /// Full-precision values; empty fields are cells without a score.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header: Vec<String> = KEY_COLUMNS.iter().map(|s| s.to_string()).collect();
        header.extend(self.conditions.iter().map(|c| c.to_string()));
        w.write_record(&header).expect("in-memory write");
        for r in &self.rows {
            let mut rec = vec![r.norm.clone(), r.mapper.to_string(), r.metric.clone()];
            rec.extend(r.values.iter().map(|v| v.map(|v| v.to_string()).unwrap_or_default()));
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }

    pub fn from_csv(text: &str) -> CliResult<Self> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let header = r.headers().map_err(CliError::validation)?.clone();
        if header.len() < KEY_COLUMNS.len() || header.iter().take(3).ne(KEY_COLUMNS) {
            return Err(CliError::validation("csv header must start with norm,mapper,metric"));
        }
        let conditions = header
            .iter()
            .skip(3)
            .map(|h| h.parse::<ConditionName>().map_err(CliError::validation))
            .collect::<CliResult<Vec<_>>>()?;
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(CliError::validation)?;
            let mapper = match &rec[1] {
                "plsr" => MapperKind::Plsr,
                "ffnn" => MapperKind::Ffnn,
                other => return Err(CliError::Validation(format!("unknown mapper '{other}'"))),
            };
            let values = rec
                .iter()
                .skip(3)
                .map(|v| {
                    if v.is_empty() {
                        Ok(None)
                    } else {
                        v.parse::<f64>().map(Some).map_err(CliError::validation)
                    }
                })
                .collect::<CliResult<Vec<_>>>()?;
            rows.push(TableRow {
                norm: rec[0].to_string(),
                mapper,
                metric: rec[2].to_string(),
                values,
            });
        }
        Ok(ResultTable { conditions, rows })
    }

    /// One block per (metric, mapper); rows are norms, two decimals, `-` for
    /// cells without a score.
    pub fn to_text(&self) -> String {
        let mut blocks: Vec<(String, MapperKind)> = Vec::new();
        for r in &self.rows {
            let key = (r.metric.clone(), r.mapper);
            if !blocks.contains(&key) {
                blocks.push(key);
            }
        }
        let mut out = String::new();
        for (i, (metric, mapper)) in blocks.iter().enumerate() {
            if i > 0 {
                out.push('\n');
            }
            let _ = writeln!(out, "{metric} ({mapper})");
            let rows: Vec<&TableRow> = self
                .rows
                .iter()
                .filter(|r| &r.metric == metric && r.mapper == *mapper)
                .collect();
            let mut grid: Vec<Vec<String>> = vec![std::iter::once("Norm".to_string())
                .chain(self.conditions.iter().map(|c| c.to_string()))
                .collect()];
            for r in rows {
                grid.push(
                    std::iter::once(r.norm.clone())
                        .chain(r.values.iter().map(|v| v.map(|v| format!("{v:.2}")).unwrap_or_else(|| "-".into())))
                        .collect(),
                );
            }
            let widths: Vec<usize> = (0..grid[0].len())
                .map(|c| grid.iter().map(|row| row[c].chars().count()).max().unwrap_or(0))
                .collect();
            for row in &grid {
                let line: Vec<String> = row
                    .iter()
                    .enumerate()
                    .map(|(c, s)| {
                        if c == 0 {
                            format!("{s:<w$}", w = widths[c])
                        } else {
                            format!("{s:>w$}", w = widths[c])
                        }
                    })
                    .collect();
                let _ = writeln!(out, "{}", line.join("  ").trim_end());
            }
        }
        out
    }
}

pub fn render_table(report: &AuditReport, style: Style) -> String {
    match style {
        Style::Text => {
            let mut text = ResultTable::from_report(report).to_text();
            let skipped: Vec<String> = report
                .norms
                .iter()
                .flat_map(|n| n.mappers.iter().map(move |m| (n, m)))
                .flat_map(|(n, m)| {
                    m.cells.iter().filter_map(move |c| {
                        c.skip_reason
                            .as_ref()
                            .map(|r| format!("  {}/{}/{}/{}: {r}", n.norm, m.mapper, c.condition, c.metric))
                    })
                })
                .collect();
            if !skipped.is_empty() {
                text.push_str("\nskipped:\n");
                for s in skipped {
                    text.push_str(&s);
                    text.push('\n');
                }
            }
            text
        }
        Style::Csv => ResultTable::from_report(report).to_csv(),
        Style::Json => {
            let mut s = serde_json::to_string_pretty(report).expect("report serializes");
            s.push('\n');
            s
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> ResultTable {
        ResultTable {
            conditions: vec![ConditionName::Sys, ConditionName::Upper, ConditionName::Rand],
            rows: vec![
                TableRow {
                    norm: "mcrae".into(),
                    mapper: MapperKind::Plsr,
                    metric: "F1@10".into(),
                    values: vec![Some(0.25), Some(0.1 + 0.2), None],
                },
                TableRow {
                    norm: "odd, name".into(),
                    mapper: MapperKind::Ffnn,
                    metric: "F1@10".into(),
                    values: vec![Some(1e-9), Some(0.5), Some(0.01)],
                },
            ],
        }
    }

    #[test]
    fn csv_round_trip() {
        let t = table();
        let text = t.to_csv();
        let back = ResultTable::from_csv(&text).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.to_csv(), text);
    }

    #[test]
    fn text_layout() {
        let text = table().to_text();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "F1@10 (plsr)");
        assert_eq!(lines[1], "Norm    Sys  Upper  Rand");
        assert_eq!(lines[2], "mcrae  0.25   0.30     -");
    }

    #[test]
    fn bad_header_rejected() {
        assert!(ResultTable::from_csv("a,b,c\n").is_err());
        assert!(ResultTable::from_csv("norm,mapper,metric,Bogus\n").is_err());
    }
}
