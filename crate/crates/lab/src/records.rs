//! Detection-record and truth-log files.
//!
//! Line-delimited JSON, one object per line:
//!
//! ```text
//! # qnd records config=<sha256 hex> seed=<u64>
//! {"seq":0,"k":1,"t":0.000357142857142857,"i":"c","j":0,"truth_n":4}
//! ```
//!
//! `seq` is the sequence id, `k` the 1-based atom index within the sequence,
//! `t` the detection time in seconds, `i` the detection direction (`a`–`d`),
//! `j` the outcome (0 or 1) and `truth_n` the simulated photon number, when
//! known. Truth logs hold `{"seq", "t", "n"}` lines giving the photon number
//! from `t` on. Times are written in the shortest decimal form that parses
//! back to the same `f64`.
//!
//! The CSV alternative carries the same header comment followed by a
//! column-name row and the same fields; `truth_n` is left empty when
//! unknown.

use std::collections::HashMap;
use std::io::{BufRead, Read, Write};

use serde::Serialize;
use serde_json::{Map, Value};

use qnd_core::decoder::DetectionRecord;
use qnd_core::sim::TruthEvent;
use qnd_core::{Outcome, PhaseIndex};

use crate::config::RecordFormat;
use crate::error::{LabError, Result};

/// Provenance line at the top of every output file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Header {
    pub kind: String,
    pub config_hash: String,
    pub seed: u64,
}

impl Header {
    pub fn new(kind: &str, config_hash: &str, seed: u64) -> Self {
        Self {
            kind: kind.to_owned(),
            config_hash: config_hash.to_owned(),
            seed,
        }
    }

    pub fn line(&self) -> String {
        format!("# qnd {} config={} seed={}", self.kind, self.config_hash, self.seed)
    }

    /// Parses a header comment; other comments give `None`.
    pub fn parse(line: &str) -> Option<Self> {
        let mut words = line.strip_prefix('#')?.split_whitespace();
        if words.next()? != "qnd" {
            return None;
        }
        let kind = words.next()?.to_owned();
        let config_hash = words.next()?.strip_prefix("config=")?.to_owned();
        let seed = words.next()?.strip_prefix("seed=")?.parse().ok()?;
        Some(Self {
            kind,
            config_hash,
            seed,
        })
    }
}

#[derive(Serialize)]
struct RecordLine {
    seq: u64,
    k: u32,
    t: f64,
    i: PhaseIndex,
    j: Outcome,
    #[serde(skip_serializing_if = "Option::is_none")]
    truth_n: Option<u32>,
}

impl From<&DetectionRecord> for RecordLine {
    fn from(r: &DetectionRecord) -> Self {
        Self {
            seq: r.seq_id,
            k: r.k,
            t: r.t,
            i: r.phase,
            j: r.outcome,
            truth_n: r.truth_n,
        }
    }
}

#[derive(Serialize)]
struct TruthLine {
    seq: u64,
    t: f64,
    n: u32,
}

/// One event of a truth log together with its sequence id.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthRow {
    pub seq: u64,
    pub event: TruthEvent,
}

/// Field value from either encoding.
enum Raw<'a> {
    Json(&'a Value),
    Text(&'a str),
}

struct FieldReader<'a> {
    line: u64,
    fields: Vec<(&'a str, Raw<'a>)>,
}

impl<'a> FieldReader<'a> {
    fn err(&self, field: &'static str, message: impl Into<String>) -> LabError {
        LabError::Record {
            line: self.line,
            field,
            message: message.into(),
        }
    }

    fn check_known(&self, known: &[&str]) -> Result<()> {
        if let Some((name, _)) = self.fields.iter().find(|(n, _)| !known.contains(n)) {
            return Err(LabError::Record {
                line: self.line,
                field: "<object>",
                message: format!("unknown field `{name}`"),
            });
        }
        Ok(())
    }

    fn raw(&self, field: &'static str) -> Option<&Raw<'a>> {
        self.fields
            .iter()
            .find(|(n, _)| *n == field)
            .map(|(_, v)| v)
            .filter(|v| match v {
                Raw::Json(Value::Null) => false,
                Raw::Text(s) => !s.is_empty(),
                Raw::Json(_) => true,
            })
    }

    fn opt_u64(&self, field: &'static str) -> Result<Option<u64>> {
        let Some(raw) = self.raw(field) else {
            return Ok(None);
        };
        let value = match raw {
            Raw::Json(v) => v.as_u64(),
            Raw::Text(s) => s.trim().parse().ok(),
        };
        value
            .map(Some)
            .ok_or_else(|| self.err(field, "expected a non-negative integer"))
    }

    fn u64(&self, field: &'static str) -> Result<u64> {
        self.opt_u64(field)?.ok_or_else(|| self.err(field, "missing"))
    }

    fn u32(&self, field: &'static str) -> Result<u32> {
        let v = self.u64(field)?;
        u32::try_from(v).map_err(|_| self.err(field, format!("{v} is out of range")))
    }

    fn opt_u32(&self, field: &'static str) -> Result<Option<u32>> {
        match self.opt_u64(field)? {
            None => Ok(None),
            Some(v) => u32::try_from(v)
                .map(Some)
                .map_err(|_| self.err(field, format!("{v} is out of range"))),
        }
    }

    fn time(&self, field: &'static str) -> Result<f64> {
        let raw = self.raw(field).ok_or_else(|| self.err(field, "missing"))?;
        let t = match raw {
            Raw::Json(v) => v.as_f64(),
            Raw::Text(s) => s.trim().parse().ok(),
        }
        .ok_or_else(|| self.err(field, "expected a number"))?;
        if !(t >= 0.0 && t.is_finite()) {
            return Err(self.err(field, format!("time {t} must be finite and non-negative")));
        }
        Ok(t)
    }

    fn phase(&self, field: &'static str) -> Result<PhaseIndex> {
        let raw = self.raw(field).ok_or_else(|| self.err(field, "missing"))?;
        let s = match raw {
            Raw::Json(Value::String(s)) => s.as_str(),
            Raw::Text(s) => s.trim(),
            Raw::Json(_) => return Err(self.err(field, "expected one of \"a\", \"b\", \"c\", \"d\"")),
        };
        let mut chars = s.chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) => PhaseIndex::from_letter(c),
            _ => None,
        }
        .ok_or_else(|| self.err(field, format!("`{s}` is not one of a, b, c, d")))
    }

    fn outcome(&self, field: &'static str) -> Result<Outcome> {
        let v = self.u64(field)?;
        u8::try_from(v)
            .ok()
            .and_then(Outcome::from_u8)
            .ok_or_else(|| self.err(field, format!("outcome must be 0 or 1, got {v}")))
    }
}

const RECORD_FIELDS: [&str; 6] = ["seq", "k", "t", "i", "j", "truth_n"];
const TRUTH_FIELDS: [&str; 3] = ["seq", "t", "n"];

fn record_from(fields: &FieldReader<'_>) -> Result<DetectionRecord> {
    fields.check_known(&RECORD_FIELDS)?;
    Ok(DetectionRecord {
        seq_id: fields.u64("seq")?,
        k: fields.u32("k")?,
        t: fields.time("t")?,
        phase: fields.phase("i")?,
        outcome: fields.outcome("j")?,
        truth_n: fields.opt_u32("truth_n")?,
    })
}

fn truth_from(fields: &FieldReader<'_>) -> Result<TruthRow> {
    fields.check_known(&TRUTH_FIELDS)?;
    Ok(TruthRow {
        seq: fields.u64("seq")?,
        event: TruthEvent {
            t: fields.time("t")?,
            n_after: fields.u32("n")?,
        },
    })
}

/// Per-sequence ordering: `k` strictly increasing, `t` non-decreasing.
#[derive(Default)]
struct OrderCheck {
    last: HashMap<u64, (u32, f64)>,
}

impl OrderCheck {
    fn check(&mut self, line: u64, r: &DetectionRecord) -> Result<()> {
        if let Some(&(k, t)) = self.last.get(&r.seq_id) {
            if r.k <= k {
                return Err(LabError::Record {
                    line,
                    field: "k",
                    message: format!("atom {} of sequence {} follows atom {k}", r.k, r.seq_id),
                });
            }
            if r.t < t {
                return Err(LabError::Record {
                    line,
                    field: "t",
                    message: format!("time {} of sequence {} precedes {t}", r.t, r.seq_id),
                });
            }
        }
        self.last.insert(r.seq_id, (r.k, r.t));
        Ok(())
    }
}

/// Contents of a parsed file: the provenance header, if present, and rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Parsed<T> {
    pub header: Option<Header>,
    pub rows: Vec<T>,
}

fn parse_jsonl<R: BufRead, T>(
    reader: R,
    mut row: impl FnMut(&FieldReader<'_>) -> Result<T>,
    mut after: impl FnMut(u64, &T) -> Result<()>,
) -> Result<Parsed<T>> {
    let mut header = None;
    let mut rows = Vec::new();
    for (idx, text) in reader.lines().enumerate() {
        let line = idx as u64 + 1;
        let text = text.map_err(|e| LabError::Data(format!("line {line}: {e}")))?;
        let trimmed = text.trim();
        if trimmed.is_empty() {
            continue;
        }
        if trimmed.starts_with('#') {
            if header.is_none() {
                header = Header::parse(trimmed);
            }
            continue;
        }
        let object: Map<String, Value> = serde_json::from_str(trimmed).map_err(|e| LabError::Record {
            line,
            field: "<object>",
            message: e.to_string(),
        })?;
        let fields = FieldReader {
            line,
            fields: object.iter().map(|(k, v)| (k.as_str(), Raw::Json(v))).collect(),
        };
        let value = row(&fields)?;
        after(line, &value)?;
        rows.push(value);
    }
    Ok(Parsed { header, rows })
}

fn parse_csv<R: Read, T>(
    mut reader: R,
    mut row: impl FnMut(&FieldReader<'_>) -> Result<T>,
    mut after: impl FnMut(u64, &T) -> Result<()>,
) -> Result<Parsed<T>> {
    let mut text = String::new();
    reader
        .read_to_string(&mut text)
        .map_err(|e| LabError::Data(e.to_string()))?;
    let header = text
        .lines()
        .take_while(|l| l.trim_start().starts_with('#'))
        .find_map(|l| Header::parse(l.trim()));
    let mut csv = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let names: Vec<String> = csv
        .headers()
        .map_err(|e| LabError::Data(format!("csv header: {e}")))?
        .iter()
        .map(str::to_owned)
        .collect();
    let mut rows = Vec::new();
    for record in csv.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            LabError::Record {
                line,
                field: "<row>",
                message: e.to_string(),
            }
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let fields = FieldReader {
            line,
            fields: names.iter().map(String::as_str).zip(record.iter().map(Raw::Text)).collect(),
        };
        let value = row(&fields)?;
        after(line, &value)?;
        rows.push(value);
    }
    Ok(Parsed { header, rows })
}

/// Parses a line-delimited JSON record stream, preserving order.
pub fn parse_record_stream<R: BufRead>(reader: R) -> Result<Vec<DetectionRecord>> {
    Ok(read_records(reader, RecordFormat::Jsonl)?.rows)
}

pub fn read_records<R: BufRead>(reader: R, format: RecordFormat) -> Result<Parsed<DetectionRecord>> {
    let mut order = OrderCheck::default();
    let after = |line: u64, r: &DetectionRecord| order.check(line, r);
    match format {
        RecordFormat::Jsonl => parse_jsonl(reader, record_from, after),
        RecordFormat::Csv => parse_csv(reader, record_from, after),
    }
}

pub fn read_truth<R: BufRead>(reader: R, format: RecordFormat) -> Result<Parsed<TruthRow>> {
    let mut last: HashMap<u64, f64> = HashMap::new();
    let after = |line: u64, r: &TruthRow| {
        let prev = last.insert(r.seq, r.event.t);
        match prev {
            Some(t) if r.event.t < t => Err(LabError::Record {
                line,
                field: "t",
                message: format!("time {} of sequence {} precedes {t}", r.event.t, r.seq),
            }),
            _ => Ok(()),
        }
    };
    match format {
        RecordFormat::Jsonl => parse_jsonl(reader, truth_from, after),
        RecordFormat::Csv => parse_csv(reader, truth_from, after),
    }
}

fn io_err(e: impl std::fmt::Display) -> LabError {
    LabError::Data(format!("write failed: {e}"))
}

pub fn write_records<'a, W: Write>(
    mut w: W,
    header: &Header,
    records: impl IntoIterator<Item = &'a DetectionRecord>,
    format: RecordFormat,
) -> Result<()> {
    writeln!(w, "{}", header.line()).map_err(io_err)?;
    match format {
        RecordFormat::Jsonl => {
            for r in records {
                serde_json::to_writer(&mut w, &RecordLine::from(r)).map_err(io_err)?;
                w.write_all(b"\n").map_err(io_err)?;
            }
        }
        RecordFormat::Csv => {
            let mut csv = csv::Writer::from_writer(&mut w);
            csv.write_record(RECORD_FIELDS).map_err(io_err)?;
            for r in records {
                let truth = r.truth_n.map(|n| n.to_string()).unwrap_or_default();
                csv.write_record([
                    r.seq_id.to_string(),
                    r.k.to_string(),
                    r.t.to_string(),
                    r.phase.to_string(),
                    r.outcome.as_u8().to_string(),
                    truth,
                ])
                .map_err(io_err)?;
            }
            csv.flush().map_err(io_err)?;
        }
    }
    Ok(())
}

pub fn write_truth<'a, W: Write>(
    mut w: W,
    header: &Header,
    rows: impl IntoIterator<Item = (u64, &'a TruthEvent)>,
    format: RecordFormat,
) -> Result<()> {
    writeln!(w, "{}", header.line()).map_err(io_err)?;
    match format {
        RecordFormat::Jsonl => {
            for (seq, e) in rows {
                let line = TruthLine {
                    seq,
                    t: e.t,
                    n: e.n_after,
                };
                serde_json::to_writer(&mut w, &line).map_err(io_err)?;
                w.write_all(b"\n").map_err(io_err)?;
            }
        }
        RecordFormat::Csv => {
            let mut csv = csv::Writer::from_writer(&mut w);
            csv.write_record(TRUTH_FIELDS).map_err(io_err)?;
            for (seq, e) in rows {
                csv.write_record([seq.to_string(), e.t.to_string(), e.n_after.to_string()])
                    .map_err(io_err)?;
            }
            csv.flush().map_err(io_err)?;
        }
    }
    Ok(())
}

/// Splits a record stream into sequences, ordered by sequence id.
pub fn group_by_sequence(records: Vec<DetectionRecord>) -> Vec<(u64, Vec<DetectionRecord>)> {
    let mut map: std::collections::BTreeMap<u64, Vec<DetectionRecord>> = Default::default();
    for r in records {
        map.entry(r.seq_id).or_default().push(r);
    }
    map.into_iter().collect()
}

/// Splits truth rows into per-sequence logs, ordered by sequence id.
pub fn group_truth(rows: Vec<TruthRow>) -> Vec<(u64, Vec<TruthEvent>)> {
    let mut map: std::collections::BTreeMap<u64, Vec<TruthEvent>> = Default::default();
    for r in rows {
        map.entry(r.seq).or_default().push(r.event);
    }
    map.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(seq: u64, k: u32, t: f64, i: PhaseIndex, j: Outcome, truth_n: Option<u32>) -> DetectionRecord {
        DetectionRecord {
            seq_id: seq,
            k,
            t,
            phase: i,
            outcome: j,
            truth_n,
        }
    }

    fn header() -> Header {
        Header::new("records", "ab12", 7)
    }

    fn sample() -> Vec<DetectionRecord> {
        vec![
            rec(0, 1, 0.0, PhaseIndex::A, Outcome::Zero, Some(4)),
            rec(0, 2, 1.0 / 1.4e4, PhaseIndex::B, Outcome::One, Some(4)),
            rec(1, 1, 3.0 / 1.4e4, PhaseIndex::D, Outcome::One, None),
        ]
    }

    #[test]
    fn header_round_trip() {
        let h = header();
        assert_eq!(Header::parse(&h.line()), Some(h));
        assert_eq!(Header::parse("# a comment"), None);
    }

    #[test]
    fn jsonl_layout() {
        let mut out = Vec::new();
        write_records(&mut out, &header(), &sample()[..1], RecordFormat::Jsonl).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(
            text,
            "# qnd records config=ab12 seed=7\n{\"seq\":0,\"k\":1,\"t\":0.0,\"i\":\"a\",\"j\":0,\"truth_n\":4}\n"
        );
    }

    #[test]
    fn both_formats_round_trip() {
        for format in [RecordFormat::Jsonl, RecordFormat::Csv] {
            let mut out = Vec::new();
            write_records(&mut out, &header(), &sample(), format).unwrap();
            let parsed = read_records(out.as_slice(), format).unwrap();
            assert_eq!(parsed.header, Some(header()));
            assert_eq!(parsed.rows, sample());
        }
    }

    #[test]
    fn truth_round_trip() {
        let events = [TruthEvent { t: 0.0, n_after: 5 }, TruthEvent { t: 0.0123456789012, n_after: 4 }];
        for format in [RecordFormat::Jsonl, RecordFormat::Csv] {
            let mut out = Vec::new();
            write_truth(&mut out, &header(), events.iter().map(|e| (3, e)), format).unwrap();
            let parsed = read_truth(out.as_slice(), format).unwrap();
            let back: Vec<TruthEvent> = parsed.rows.iter().map(|r| r.event).collect();
            assert_eq!(back, events);
            assert!(parsed.rows.iter().all(|r| r.seq == 3));
        }
    }

    fn record_error(text: &str) -> (u64, &'static str) {
        match parse_record_stream(text.as_bytes()) {
            Err(LabError::Record { line, field, .. }) => (line, field),
            other => panic!("expected a record error, got {other:?}"),
        }
    }

    #[test]
    fn bad_outcome_names_line_and_field() {
        let text = "# qnd records config=x seed=0\n{\"seq\":0,\"k\":1,\"t\":0.0,\"i\":\"a\",\"j\":0}\n{\"seq\":0,\"k\":2,\"t\":0.1,\"i\":\"a\",\"j\":2}\n";
        assert_eq!(record_error(text), (3, "j"));
    }

    #[test]
    fn field_errors() {
        assert_eq!(record_error("{\"seq\":0,\"k\":1,\"t\":0.0,\"i\":\"e\",\"j\":0}"), (1, "i"));
        assert_eq!(record_error("{\"seq\":0,\"k\":1,\"t\":-1.0,\"i\":\"a\",\"j\":0}"), (1, "t"));
        assert_eq!(record_error("{\"seq\":0,\"t\":0.0,\"i\":\"a\",\"j\":0}"), (1, "k"));
        assert_eq!(record_error("{\"seq\":-3,\"k\":1,\"t\":0.0,\"i\":\"a\",\"j\":0}"), (1, "seq"));
        assert_eq!(record_error("{\"seq\":0,\"k\":1,\"t\":0.0,\"i\":\"a\",\"j\":0,\"x\":1}"), (1, "<object>"));
        assert_eq!(record_error("\n\nnot json"), (3, "<object>"));
    }

    #[test]
    fn ordering_is_checked_per_sequence() {
        let ok = "{\"seq\":0,\"k\":1,\"t\":0.0,\"i\":\"a\",\"j\":0}\n{\"seq\":1,\"k\":1,\"t\":0.0,\"i\":\"a\",\"j\":0}\n{\"seq\":0,\"k\":2,\"t\":0.1,\"i\":\"b\",\"j\":1}";
        assert_eq!(parse_record_stream(ok.as_bytes()).unwrap().len(), 3);
        let repeated = "{\"seq\":0,\"k\":2,\"t\":0.0,\"i\":\"a\",\"j\":0}\n{\"seq\":0,\"k\":2,\"t\":0.1,\"i\":\"b\",\"j\":1}";
        assert_eq!(record_error(repeated), (2, "k"));
        let backwards = "{\"seq\":0,\"k\":1,\"t\":0.2,\"i\":\"a\",\"j\":0}\n{\"seq\":0,\"k\":2,\"t\":0.1,\"i\":\"b\",\"j\":1}";
        assert_eq!(record_error(backwards), (2, "t"));
    }

    #[test]
    fn csv_errors_report_physical_lines() {
        let text = "# qnd records config=x seed=0\nseq,k,t,i,j,truth_n\n0,1,0.0,a,0,\n0,2,0.1,a,2,\n";
        match read_records(text.as_bytes(), RecordFormat::Csv) {
            Err(LabError::Record { line, field, .. }) => assert_eq!((line, field), (4, "j")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn empty_input_is_empty() {
        assert!(parse_record_stream("".as_bytes()).unwrap().is_empty());
        let parsed = read_records("# qnd records config=x seed=1\n".as_bytes(), RecordFormat::Jsonl).unwrap();
        assert!(parsed.rows.is_empty());
        assert_eq!(parsed.header.unwrap().seed, 1);
    }

    #[test]
    fn grouping_orders_sequences() {
        let groups = group_by_sequence(vec![sample()[2], sample()[0], sample()[1]]);
        assert_eq!(groups.len(), 2);
        assert_eq!(groups[0].0, 0);
        assert_eq!(groups[0].1.len(), 2);
        assert_eq!(groups[1].1[0].phase, PhaseIndex::D);
    }
}
