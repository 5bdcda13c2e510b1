//! JSON-lines trace files and the latency breakdown report.
//!
//! A file holds one or more traces back to back. Each trace is a header
//! line, one line per event, and a summary line whose digest covers the
//! header fingerprint and every event line.

use std::io::Write;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::engine::{Event, EventKind, SimTrace, TraceSummary};
use crate::latency::{LatencyError, LatencyTable};
use crate::model::{ConfigAssignment, ResourceLevel, Scenario};
use crate::optimizer::AccuracyModel;
use crate::predictor::ModalityIndicators;

pub const TRACE_SCHEMA: &str = "pipefuse-trace/1";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TraceError {
    #[error("line {line}: trace schema `{found}` is not `{TRACE_SCHEMA}`")]
    SchemaVersionMismatch { line: usize, found: String },
    #[error("line {line}: {reason}")]
    CorruptLine { line: usize, reason: String },
    #[error("line {line}: digest or fingerprint does not match the trace contents")]
    IntegrityMismatch { line: usize },
}

#[derive(Serialize, Deserialize)]
struct Header {
    record: String,
    schema: String,
    fingerprint: String,
    sample_id: u64,
    window_us: u64,
}

#[derive(Serialize, Deserialize)]
struct Footer {
    record: String,
    event_count: usize,
    digest: String,
    summary: TraceSummary,
}

fn digest(fingerprint: &str, lines: &[String]) -> String {
    let mut h = Sha256::new();
    h.update(fingerprint.as_bytes());
    h.update(b"\n");
    for l in lines {
        h.update(l.as_bytes());
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

fn is_fingerprint(s: &str) -> bool {
    s.len() == 64 && s.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b))
}

pub fn write_trace<W: Write>(out: &mut W, trace: &SimTrace) -> std::io::Result<()> {
    let header = Header {
        record: "header".into(),
        schema: TRACE_SCHEMA.into(),
        fingerprint: trace.fingerprint.clone(),
        sample_id: trace.sample_id,
        window_us: trace.window_us,
    };
    writeln!(out, "{}", serde_json::to_string(&header)?)?;
    let lines: Vec<String> =
        trace.events.iter().map(serde_json::to_string).collect::<Result<_, _>>()?;
    for l in &lines {
        writeln!(out, "{l}")?;
    }
    let footer = Footer {
        record: "summary".into(),
        event_count: lines.len(),
        digest: digest(&trace.fingerprint, &lines),
        summary: trace.summary.clone(),
    };
    writeln!(out, "{}", serde_json::to_string(&footer)?)
}

pub fn traces_to_string(traces: &[SimTrace]) -> String {
    let mut buf = Vec::new();
    for t in traces {
        write_trace(&mut buf, t).expect("writing to memory");
    }
    String::from_utf8(buf).expect("json is utf-8")
}

/// Parses every trace in `text`.
pub fn read_traces(text: &str) -> Result<Vec<SimTrace>, TraceError> {
    let mut out = Vec::new();
    let mut current: Option<(Header, usize, Vec<String>, Vec<Event>)> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let corrupt = |reason: String| TraceError::CorruptLine { line, reason };
        let value: Value = serde_json::from_str(raw).map_err(|e| corrupt(e.to_string()))?;
        match value.get("record").and_then(Value::as_str) {
            Some("header") => {
                if current.is_some() {
                    return Err(corrupt("header before the previous trace's summary".into()));
                }
                let found = value.get("schema").and_then(Value::as_str).unwrap_or_default();
                if found != TRACE_SCHEMA {
                    return Err(TraceError::SchemaVersionMismatch { line, found: found.into() });
                }
                let header: Header = serde_json::from_value(value).map_err(|e| corrupt(e.to_string()))?;
                if !is_fingerprint(&header.fingerprint) {
                    return Err(TraceError::IntegrityMismatch { line });
                }
                current = Some((header, line, Vec::new(), Vec::new()));
            }
            Some("summary") => {
                let (header, _, lines, events) = current.take().ok_or_else(|| corrupt("summary without a header".into()))?;
                let footer: Footer = serde_json::from_value(value).map_err(|e| corrupt(e.to_string()))?;
                if footer.event_count != events.len() || footer.digest != digest(&header.fingerprint, &lines) {
                    return Err(TraceError::IntegrityMismatch { line });
                }
                out.push(SimTrace {
                    fingerprint: header.fingerprint,
                    sample_id: header.sample_id,
                    window_us: header.window_us,
                    events,
                    summary: footer.summary,
                });
            }
            Some(other) => return Err(corrupt(format!("unknown record `{other}`"))),
            None => {
                let (_, _, lines, events) = current.as_mut().ok_or_else(|| corrupt("event outside a trace".into()))?;
                let event: Event = serde_json::from_str(raw).map_err(|e| corrupt(e.to_string()))?;
                lines.push(raw.to_string());
                events.push(event);
            }
        }
    }
    if let Some((_, line, ..)) = current {
        return Err(TraceError::CorruptLine { line, reason: "trace has no summary record".into() });
    }
    Ok(out)
}

/// Latency breakdown of one trace. Along the critical path (the modality
/// whose aggregation finished last before fusion started),
/// `sensing_bound + encode + aggregation + fusion` is the prediction time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportRow {
    pub sample: u64,
    pub mode: String,
    pub reported_latency_us: u64,
    /// Part of the critical modality's path spent inside the sensing window.
    pub sensing_bound_us: u64,
    /// Encode work left when the window closed (or when a skip cut it short).
    pub encode_us: u64,
    pub aggregation_us: u64,
    pub waiting_us: u64,
    pub fusion_us: u64,
    pub skip_savings_us: u64,
    pub skipped_units: u64,
}

pub fn report_row(trace: &SimTrace) -> Result<ReportRow, TraceError> {
    let missing = |what: &str| TraceError::CorruptLine { line: 0, reason: format!("trace has no {what} event") };
    let prediction = trace.prediction_time().ok_or_else(|| missing("prediction_emitted"))?;
    let fusion = trace.events_of("fusion_start").next().ok_or_else(|| missing("fusion_start"))?;
    let padded = match &fusion.kind {
        EventKind::FusionStart { padded } => padded.clone(),
        _ => unreachable!(),
    };
    let done: Vec<(u64, u64)> = trace
        .events
        .iter()
        .filter_map(|e| match e.kind {
            EventKind::AggregationDone { duration_us, .. } => Some((e.time_us, duration_us)),
            _ => None,
        })
        .collect();
    let (crit_done, crit_agg) = done
        .iter()
        .copied()
        .filter(|&(t, _)| t <= fusion.time_us)
        .max_by_key(|&(t, _)| t)
        .ok_or_else(|| missing("aggregation_done"))?;
    let agg_start = crit_done - crit_agg;
    let sensing_bound_us = agg_start.min(trace.window_us);
    let waiting_us = if padded.is_empty() {
        let times: Vec<u64> = done.iter().map(|d| d.0).collect();
        times.iter().max().unwrap_or(&0) - times.iter().min().unwrap_or(&0)
    } else {
        0
    };
    let (mut skip_savings_us, mut skipped_units) = (0, 0);
    for e in trace.events_of("skip_committed") {
        if let EventKind::SkipCommitted { units_skipped, saved_encode_us, .. } = e.kind {
            skip_savings_us += saved_encode_us;
            skipped_units += u64::from(units_skipped);
        }
    }
    let start = trace.events_of("unit_sensed").map(|e| e.time_us).min().unwrap_or(0);
    Ok(ReportRow {
        sample: trace.sample_id,
        mode: trace.summary.mode.to_string(),
        reported_latency_us: (prediction - start).saturating_sub(trace.window_us),
        sensing_bound_us,
        encode_us: agg_start - sensing_bound_us,
        aggregation_us: crit_agg,
        waiting_us,
        fusion_us: prediction - fusion.time_us,
        skip_savings_us,
        skipped_units,
    })
}

pub fn report_csv(traces: &[SimTrace]) -> Result<String, TraceError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for t in traces {
        w.serialize(report_row(t)?).expect("writing to memory");
    }
    if traces.is_empty() {
        w.write_record([
            "sample",
            "mode",
            "reported_latency_us",
            "sensing_bound_us",
            "encode_us",
            "aggregation_us",
            "waiting_us",
            "fusion_us",
            "skip_savings_us",
            "skipped_units",
        ])
        .expect("writing to memory");
    }
    Ok(String::from_utf8(w.into_inner().expect("flush to memory")).expect("csv is utf-8"))
}

/// One row of the full configuration sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub assignment: String,
    pub total_latency_us: u64,
    pub reported_latency_us: u64,
    pub feasible: bool,
    pub predicted_accuracy: f64,
}

/// Every assignment in lexicographic order with its latency at `resource`
/// and its score under `model`.
pub fn sweep_rows<M: AccuracyModel + ?Sized>(
    scenario: &Scenario,
    ind: &ModalityIndicators,
    model: &M,
    resource: ResourceLevel,
) -> Result<Vec<SweepRow>, LatencyError> {
    let table = LatencyTable::build(scenario, resource)?;
    Ok(ConfigAssignment::enumerate(scenario)
        .into_iter()
        .map(|a| SweepRow {
            assignment: a.to_string(),
            total_latency_us: table.total(&a),
            reported_latency_us: table.reported(&a),
            feasible: table.reported(&a) <= scenario.t_max_us,
            predicted_accuracy: model.score(ind, &a),
        })
        .collect())
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("writing to memory");
    }
    String::from_utf8(w.into_inner().expect("flush to memory")).expect("csv is utf-8")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::run;
    use crate::model::{two_modality_scenario, ExecutionMode};
    use crate::workload::{gen_accuracy_surface, gen_scenario};
    use crate::sample::{Difficulty, Sample};

    fn trace(mode: ExecutionMode) -> SimTrace {
        let s = two_modality_scenario(25).without_skipping().with_mode(mode);
        run(&s, &ConfigAssignment::minimal(2), &Sample::generate(4, 2, 5, Difficulty::Medium, false), None).unwrap()
    }

    #[test]
    fn round_trip() {
        let traces = vec![trace(ExecutionMode::Pipelined), trace(ExecutionMode::Blocking)];
        let text = traces_to_string(&traces);
        assert_eq!(read_traces(&text).unwrap(), traces);
        assert_eq!(traces_to_string(&read_traces(&text).unwrap()), text);
    }

    #[test]
    fn empty_trace_round_trips() {
        let mut t = trace(ExecutionMode::Pipelined);
        t.events.clear();
        let back = read_traces(&traces_to_string(std::slice::from_ref(&t))).unwrap();
        assert_eq!(back, vec![t]);
    }

    #[test]
    fn tampering_is_detected() {
        let t = trace(ExecutionMode::Pipelined);
        let text = traces_to_string(std::slice::from_ref(&t));
        let fp = &t.fingerprint;
        let bad = text.replacen(fp, &format!("{}0", &fp[..63]), 1);
        assert!(matches!(read_traces(&bad), Err(TraceError::IntegrityMismatch { .. })));
        let bad = text.replacen("\"time_us\":0,", "\"time_us\":1,", 1);
        assert!(matches!(read_traces(&bad), Err(TraceError::IntegrityMismatch { .. })));
        let bad = text.replacen(TRACE_SCHEMA, "pipefuse-trace/9", 1);
        assert!(matches!(read_traces(&bad), Err(TraceError::SchemaVersionMismatch { line: 1, .. })));
        let mut lines: Vec<&str> = text.lines().collect();
        lines[3] = "{not json";
        assert!(matches!(read_traces(&lines.join("\n")), Err(TraceError::CorruptLine { line: 4, .. })));
    }

    #[test]
    fn breakdown_adds_up() {
        for mode in [ExecutionMode::Pipelined, ExecutionMode::Blocking, ExecutionMode::NonBlocking] {
            let t = trace(mode);
            let r = report_row(&t).unwrap();
            assert_eq!(r.sensing_bound_us + r.encode_us + r.aggregation_us + r.fusion_us, t.prediction_time().unwrap());
            assert_eq!(r.reported_latency_us, t.summary.reported_latency_us);
            assert_eq!(r.waiting_us, t.summary.waiting_us);
        }
    }

    #[test]
    fn sweep_covers_every_assignment_in_order() {
        let s = gen_scenario("lrw-like", 0).unwrap();
        let f = gen_accuracy_surface(&s, 1);
        let rows = sweep_rows(&s, &ModalityIndicators::from_consistency(0.5), &f, ResourceLevel(0)).unwrap();
        assert_eq!(rows.len(), 81);
        assert_eq!(rows[0].assignment, "s0m0/s0m0");
        assert_eq!(sweep_csv(&rows).lines().count(), 82);
    }
}
