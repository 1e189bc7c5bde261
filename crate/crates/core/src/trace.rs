//! Per-round experiment traces and their plain-text CSV encoding.
//!
//! CSV schema (one row per evaluated round, stable column order):
//!
//!   round,epochs,primal,dual,gap,vectors,updates,synth_time
//!
//! `dual` and `gap` are empty for primal-only methods. Floats are written in
//! Rust's shortest round-trip form, so re-parsing a trace recovers it exactly
//! and identical runs produce byte-identical files.

use crate::error::{CoreError, Result};
use crate::runtime::LedgerSummary;
use serde::{Deserialize, Serialize};
use std::io::Write;

/// One evaluated round. Cumulative fields (`vectors`, `updates`,
/// `synth_time`) never decrease along a trace; `gap = primal - dual` whenever
/// both objectives are present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub round: u32,
    /// Fraction of the dataset processed so far: cumulative updates / n.
    pub epochs: f64,
    pub primal: f64,
    pub dual: Option<f64>,
    pub gap: Option<f64>,
    /// Cumulative vectors communicated, under the runtime's count direction.
    pub vectors: u64,
    /// Cumulative coordinate updates / subgradient steps.
    pub updates: u64,
    pub synth_time: f64,
}

/// Full run record: evaluated rounds plus the ledger summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
    pub ledger: LedgerSummary,
    /// Set when a baseline showed persistent dual decrease or produced
    /// non-finite objectives (expected for aggressive merge scalings).
    pub diverged: bool,
}

impl Trace {
    pub const CSV_HEADER: &'static str = "round,epochs,primal,dual,gap,vectors,updates,synth_time";

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{}", Self::CSV_HEADER)?;
        for r in &self.records {
            let dual = r.dual.map(|v| v.to_string()).unwrap_or_default();
            let gap = r.gap.map(|v| v.to_string()).unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.round, r.epochs, r.primal, dual, gap, r.vectors, r.updates, r.synth_time
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("write to vec");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    pub fn parse_csv(text: &str) -> Result<Vec<TraceRecord>> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, header)) if header == Self::CSV_HEADER => {}
            _ => {
                return Err(CoreError::Parse {
                    line: 1,
                    msg: "bad or missing header".into(),
                });
            }
        }
        let mut records = Vec::new();
        for (idx, line) in lines {
            let lineno = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 8 {
                return Err(CoreError::Parse {
                    line: lineno,
                    msg: format!("expected 8 fields, got {}", fields.len()),
                });
            }
            let bad = |msg: &str| CoreError::Parse {
                line: lineno,
                msg: msg.into(),
            };
            let opt = |s: &str, msg: &str| -> Result<Option<f64>> {
                if s.is_empty() {
                    Ok(None)
                } else {
                    s.parse().map(Some).map_err(|_| bad(msg))
                }
            };
            records.push(TraceRecord {
                round: fields[0].parse().map_err(|_| bad("bad round"))?,
                epochs: fields[1].parse().map_err(|_| bad("bad epochs"))?,
                primal: fields[2].parse().map_err(|_| bad("bad primal"))?,
                dual: opt(fields[3], "bad dual")?,
                gap: opt(fields[4], "bad gap")?,
                vectors: fields[5].parse().map_err(|_| bad("bad vectors"))?,
                updates: fields[6].parse().map_err(|_| bad("bad updates"))?,
                synth_time: fields[7].parse().map_err(|_| bad("bad synth_time"))?,
            });
        }
        Ok(records)
    }

    /// First record whose `metric` value is at or below `target`, scanning in
    /// round order; returns (round, cumulative vectors) of that record.
    pub fn first_at_or_below<F>(&self, metric: F, target: f64) -> Option<(u32, u64)>
    where
        F: Fn(&TraceRecord) -> Option<f64>,
    {
        self.records
            .iter()
            .find(|r| metric(r).is_some_and(|v| v <= target))
            .map(|r| (r.round, r.vectors))
    }

    pub fn final_record(&self) -> Option<&TraceRecord> {
        self.records.last()
    }
}
