use std::fmt::Write as _;
use std::time::Duration;

use serde::Serialize;

use crate::tolerances::Tolerances;

/// Outcome of one check inside a report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Certified,
    Holds,
    Reproduced,
    Refuted,
    Violated,
    NotReproduced,
    Inconclusive,
    Info,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Certified | Status::Holds | Status::Reproduced | Status::Info => 0,
            Status::Refuted | Status::Violated | Status::NotReproduced => 1,
            Status::Inconclusive => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Status::Certified => "certified",
            Status::Holds => "holds",
            Status::Reproduced => "reproduced",
            Status::Refuted => "refuted",
            Status::Violated => "violated",
            Status::NotReproduced => "not reproduced",
            Status::Inconclusive => "inconclusive",
            Status::Info => "info",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Section {
    pub name: String,
    pub status: Status,
    pub summary: Vec<String>,
    /// Full witnesses for independent re-verification.
    pub data: serde_json::Value,
}

impl Section {
    pub fn new(name: impl Into<String>, status: Status, data: impl Serialize) -> Self {
        Section {
            name: name.into(),
            status,
            summary: vec![],
            data: serde_json::to_value(data).expect("report data serializes"),
        }
    }

    pub fn line(mut self, s: impl Into<String>) -> Self {
        self.summary.push(s.into());
        self
    }
}

/// Rows for a CSV side output.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

/// Everything a command produced. The JSON form is deterministic: it holds
/// no timings, paths are echoed as given, and floats print in shortest
/// round-trip form.
#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub tool: String,
    pub command: Vec<String>,
    pub input_sha256: Option<String>,
    pub tolerances: Tolerances,
    pub status: Status,
    pub exit_code: i32,
    pub sections: Vec<Section>,
    #[serde(skip)]
    pub timings: Vec<(String, Duration)>,
    #[serde(skip)]
    pub table: Option<Table>,
}

impl Report {
    pub(crate) fn new(input_sha256: Option<String>, tolerances: Tolerances, status: Status, sections: Vec<Section>) -> Self {
        Report {
            tool: format!("apcert {}", env!("CARGO_PKG_VERSION")),
            command: vec![],
            input_sha256,
            tolerances,
            status,
            exit_code: status.exit_code(),
            sections,
            timings: vec![],
            table: None,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{}", self.tool);
        if !self.command.is_empty() {
            let _ = writeln!(out, "command: {}", self.command.join(" "));
        }
        if let Some(h) = &self.input_sha256 {
            let _ = writeln!(out, "input sha256: {h}");
        }
        let t = &self.tolerances;
        let _ = writeln!(
            out,
            "tolerances: kkt={:e} activity={:e} feasibility={:e} complementarity={:e} max_iter={}",
            t.kkt, t.activity, t.feasibility, t.complementarity, t.max_iter
        );
        for s in &self.sections {
            let _ = writeln!(out, "\n[{}] {}", s.name, s.status.name());
            for l in &s.summary {
                let _ = writeln!(out, "  {l}");
            }
        }
        if !self.timings.is_empty() {
            let _ = writeln!(out);
            for (name, d) in &self.timings {
                let _ = writeln!(out, "time {name}: {:.3} s", d.as_secs_f64());
            }
        }
        let _ = writeln!(out, "\nresult: {} (exit {})", self.status.name(), self.exit_code);
        out
    }
}
