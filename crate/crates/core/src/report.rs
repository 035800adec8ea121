//! Trace CSV output and LBFGS-vs-LBFGS-P style speedup tables.

use std::io::Write;

use serde::Serialize;

use crate::error::Result;
use crate::optimizer::TraceRecord;

pub const TRACE_HEADER: &str =
    "k,loss,grad_norm,step_size,n_e,cum_fg_evals,cum_coeff_evals,cum_bytes,elapsed_s";

pub fn write_trace_csv<W: Write>(out: W, trace: &[TraceRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for rec in trace {
        w.serialize(rec)?;
    }
    if trace.is_empty() {
        w.write_record(TRACE_HEADER.split(','))?;
    }
    w.flush()?;
    Ok(())
}

/// Iterations (and time) the candidate needs to match each baseline iterate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpeedupRow {
    /// `exp(-loss)` of the baseline iterate.
    pub target_accuracy: f64,
    pub baseline_iters: usize,
    pub candidate_iters: usize,
    pub iter_speedup: f64,
    pub baseline_seconds: f64,
    pub candidate_seconds: f64,
    /// `None` when no time was recorded.
    pub time_speedup: Option<f64>,
}

/// For every baseline iterate `k >= 1`, finds the first candidate iterate
/// whose accuracy proxy is at least as high. Baseline iterates the
/// candidate never matches are left out.
pub fn speedup_report(baseline: &[TraceRecord], candidate: &[TraceRecord]) -> Vec<SpeedupRow> {
    let mut rows = Vec::new();
    for b in baseline.iter().filter(|r| r.k >= 1) {
        let target = b.accuracy_proxy();
        let Some(c) = candidate
            .iter()
            .find(|r| r.k >= 1 && r.accuracy_proxy() >= target)
        else {
            continue;
        };
        let time_speedup = (c.elapsed_seconds > 0.0 && b.elapsed_seconds > 0.0)
            .then(|| b.elapsed_seconds / c.elapsed_seconds);
        rows.push(SpeedupRow {
            target_accuracy: target,
            baseline_iters: b.k,
            candidate_iters: c.k,
            iter_speedup: b.k as f64 / c.k as f64,
            baseline_seconds: b.elapsed_seconds,
            candidate_seconds: c.elapsed_seconds,
            time_speedup,
        });
    }
    rows
}

pub fn write_speedup_csv<W: Write>(out: W, rows: &[SpeedupRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if rows.is_empty() {
        w.write_record([
            "target_accuracy",
            "baseline_iters",
            "candidate_iters",
            "iter_speedup",
            "baseline_seconds",
            "candidate_seconds",
            "time_speedup",
        ])?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(k: usize, loss: f64, t: f64) -> TraceRecord {
        TraceRecord {
            k,
            loss,
            grad_norm: 0.0,
            step_size: 0.0,
            n_e: 1,
            cum_fg_evals: k as u64,
            cum_coeff_evals: 0,
            cum_bytes: 0,
            elapsed_seconds: t,
            ls_clean: true,
            restarted: false,
        }
    }

    #[test]
    fn trace_csv_header_and_rows() {
        let mut buf = Vec::new();
        write_trace_csv(&mut buf, &[rec(0, 0.5, 0.0), rec(1, 0.25, 0.0)]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(TRACE_HEADER));
        assert_eq!(lines.next(), Some("0,0.5,0.0,0.0,1,0,0,0,0.0"));
        assert_eq!(lines.count(), 1);

        let mut buf = Vec::new();
        write_trace_csv(&mut buf, &[]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().trim_end(), TRACE_HEADER);
    }

    #[test]
    fn speedup_matches_first_reaching_iterate() {
        let base = vec![
            rec(0, 0.7, 0.0),
            rec(1, 0.6, 1.0),
            rec(2, 0.5, 2.0),
            rec(3, 0.4, 3.0),
            rec(4, 0.35, 4.0),
        ];
        let cand = vec![rec(0, 0.7, 0.0), rec(1, 0.45, 1.0), rec(2, 0.35, 2.0)];
        let rows = speedup_report(&base, &cand);
        let pairs: Vec<(usize, usize)> = rows
            .iter()
            .map(|r| (r.baseline_iters, r.candidate_iters))
            .collect();
        assert_eq!(pairs, vec![(1, 1), (2, 1), (3, 2), (4, 2)]);
        assert_eq!(rows[3].iter_speedup, 2.0);
        assert_eq!(rows[3].time_speedup, Some(2.0));
    }

    #[test]
    fn unmatched_targets_are_skipped() {
        let base = vec![rec(0, 0.7, 0.0), rec(1, 0.1, 0.0)];
        let cand = vec![rec(0, 0.7, 0.0), rec(1, 0.5, 0.0)];
        assert!(speedup_report(&base, &cand).is_empty());
    }
}
