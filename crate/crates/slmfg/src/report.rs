//! Reports as ordered records, rendered for people or as `key=value` lines.

use std::fmt::Write as _;

use slmfg_core::report::Status;

use crate::config::{Format, RunConfig};

/// One fact of a report. `mark` turns the record into a checklist item in
/// human output.
#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub kind: String,
    pub fields: Vec<(String, String)>,
    pub mark: Option<Status>,
}

impl Record {
    pub fn new(kind: impl Into<String>) -> Self {
        Record { kind: kind.into(), fields: Vec::new(), mark: None }
    }

    pub fn field(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.fields.push((key.into(), value.into()));
        self
    }

    pub fn num(self, key: impl Into<String>, v: f64) -> Self {
        self.field(key, num(v))
    }

    pub fn vec(self, key: impl Into<String>, v: &[f64]) -> Self {
        self.field(key, vector(v))
    }

    pub fn mark(mut self, s: Status) -> Self {
        self.mark = Some(s);
        self
    }
}

/// Shortest text that parses back to `v`.
pub fn num(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if (1e-4..1e15).contains(&v.abs()) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

pub fn vector(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|&x| num(x)).collect();
    format!("[{}]", parts.join(","))
}

pub fn indices(v: &[usize]) -> String {
    let parts: Vec<String> = v.iter().map(|i| i.to_string()).collect();
    format!("[{}]", parts.join(","))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub command: String,
    pub config: RunConfig,
    pub records: Vec<Record>,
}

fn quote_if_needed(v: &str) -> String {
    if !v.is_empty() && v.chars().all(|c| c.is_ascii_graphic() && c != '"' && c != '\\') {
        v.to_string()
    } else {
        format!("{v:?}")
    }
}

impl Report {
    pub fn new(command: impl Into<String>, config: &RunConfig) -> Self {
        Report { command: command.into(), config: config.clone(), records: Vec::new() }
    }

    pub fn push(&mut self, r: Record) {
        self.records.push(r);
    }

    pub fn render(&self) -> String {
        match self.config.format {
            Format::Human => self.human(),
            Format::Records => self.lines(),
        }
    }

    /// One line per record: `kind=<kind> key=value ...`, values quoted when
    /// they contain spaces or quotes. The first two lines name the command and
    /// the full configuration.
    pub fn lines(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "kind=report command={}", self.command);
        out.push_str("kind=config");
        for (k, v) in self.config.entries() {
            let _ = write!(out, " {k}={}", quote_if_needed(&v));
        }
        out.push('\n');
        for r in &self.records {
            let _ = write!(out, "kind={}", r.kind);
            for (k, v) in &r.fields {
                let _ = write!(out, " {k}={}", quote_if_needed(v));
            }
            out.push('\n');
        }
        out
    }

    pub fn human(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{}", self.command);
        let cfg: Vec<String> = self.config.entries().into_iter().map(|(k, v)| format!("{k} {v}")).collect();
        let _ = writeln!(out, "  config: {}", cfg.join(", "));
        for r in &self.records {
            let body: Vec<String> = r.fields.iter().map(|(k, v)| format!("{k} {v}")).collect();
            match r.mark {
                Some(s) => {
                    let box_ = match s {
                        Status::Holds => "[x]",
                        Status::Fails => "[ ]",
                        Status::Unknown => "[?]",
                    };
                    let _ = writeln!(out, "  {box_} {}: {}", r.kind, body.join(", "));
                }
                None => {
                    let _ = writeln!(out, "  {}: {}", r.kind, body.join(", "));
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(format: Format) -> Report {
        let cfg = RunConfig { format, ..RunConfig::default() };
        let mut r = Report::new("demo", &cfg);
        r.push(Record::new("point").vec("y", &[-0.5, 0.0, 1e-7]).field("note", "two words"));
        r.push(Record::new("slater").field("status", "fails").mark(Status::Fails));
        r
    }

    #[test]
    fn records_are_key_value_lines_with_config() {
        let text = sample(Format::Records).render();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "kind=report command=demo");
        assert!(lines[1].starts_with("kind=config format=records seed=0 tol=1e-6 "));
        assert_eq!(lines[2], "kind=point y=[-0.5,0,1e-7] note=\"two words\"");
        assert_eq!(lines[3], "kind=slater status=fails");
        for l in &lines {
            assert!(l.split(' ').all(|t| t.contains('=')) || l.contains('"'), "{l}");
        }
    }

    #[test]
    fn human_output_marks_checklist_items() {
        let text = sample(Format::Human).render();
        assert!(text.contains("  [ ] slater: status fails"), "{text}");
        assert!(text.contains("  point: y [-0.5,0,1e-7], note two words"), "{text}");
    }

    #[test]
    fn numbers_round_trip() {
        for v in [0.1, -1.0 / 3.0, 1e-300, 12345.678] {
            assert_eq!(num(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(num(-0.0), "0");
    }
}
