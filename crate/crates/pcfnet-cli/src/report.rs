use std::fmt::Write as _;

use clap::ValueEnum;
use serde::Serialize;
use serde_json::json;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Csv,
    Json,
}

#[derive(Clone, Debug, Serialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Table { name: name.into(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len(), "row width in {}", self.name);
        self.rows.push(row);
    }
}

/// Everything a subcommand prints. Cells are strings so exact values keep
/// their `p/q` form in every output format.
#[derive(Clone, Debug, Default, Serialize)]
pub struct RunReport {
    pub command: String,
    pub fractal: String,
    pub relation: Option<String>,
    pub mode: String,
    pub params: Vec<(String, String)>,
    pub tables: Vec<Table>,
    /// Named findings, including the level windows they were read from.
    pub evidence: Vec<(String, String)>,
    pub notes: Vec<String>,
    /// Only filled with `--timing`, so default output is reproducible.
    pub wall_time: Option<String>,
}

impl RunReport {
    pub fn param(&mut self, k: &str, v: impl ToString) {
        self.params.push((k.into(), v.to_string()));
    }

    pub fn evidence(&mut self, k: &str, v: impl ToString) {
        self.evidence.push((k.into(), v.to_string()));
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Table => self.render_text(),
            Format::Csv => self.render_csv(),
            Format::Json => self.render_json(),
        }
    }

    fn header(&self) -> Vec<(String, String)> {
        let mut h = vec![("command".to_string(), self.command.clone()), ("fractal".into(), self.fractal.clone())];
        if let Some(r) = &self.relation {
            h.push(("relation".into(), r.clone()));
        }
        h.push(("mode".into(), self.mode.clone()));
        for (k, v) in &self.params {
            h.push((format!("param.{k}"), v.clone()));
        }
        if let Some(t) = &self.wall_time {
            h.push(("wall_time".into(), t.clone()));
        }
        h
    }

    fn render_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.header() {
            let _ = writeln!(out, "{k}: {v}");
        }
        for t in &self.tables {
            let _ = writeln!(out, "\n== {}", t.name);
            let mut width: Vec<usize> = t.columns.iter().map(|c| c.chars().count()).collect();
            for r in &t.rows {
                for (w, c) in width.iter_mut().zip(r) {
                    *w = (*w).max(c.chars().count());
                }
            }
            let line = |cells: &[String]| {
                let padded: Vec<String> =
                    cells.iter().zip(&width).map(|(c, w)| format!("{c}{}", " ".repeat(w - c.chars().count()))).collect();
                padded.join("  ").trim_end().to_string()
            };
            let _ = writeln!(out, "{}", line(&t.columns));
            for r in &t.rows {
                let _ = writeln!(out, "{}", line(r));
            }
        }
        if !self.evidence.is_empty() {
            let _ = writeln!(out, "\n== evidence");
            for (k, v) in &self.evidence {
                let _ = writeln!(out, "{k}: {v}");
            }
        }
        for n in &self.notes {
            let _ = writeln!(out, "note: {n}");
        }
        out
    }

    fn render_csv(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.header() {
            let _ = writeln!(out, "# {k}: {v}");
        }
        for n in &self.notes {
            let _ = writeln!(out, "# note: {n}");
        }
        let mut sections: Vec<Table> = self.tables.clone();
        if !self.evidence.is_empty() {
            let mut e = Table::new("evidence", &["name", "value"]);
            for (k, v) in &self.evidence {
                e.push(vec![k.clone(), v.clone()]);
            }
            sections.push(e);
        }
        for t in &sections {
            let _ = writeln!(out, "# table: {}", t.name);
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(&t.columns).expect("in-memory write");
            for r in &t.rows {
                w.write_record(r).expect("in-memory write");
            }
            out.push_str(&String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 cells"));
        }
        out
    }

    fn render_json(&self) -> String {
        let pairs = |v: &[(String, String)]| {
            v.iter().map(|(k, v)| json!({ "name": k, "value": v })).collect::<Vec<_>>()
        };
        let doc = json!({
            "command": self.command,
            "fractal": self.fractal,
            "relation": self.relation,
            "mode": self.mode,
            "params": pairs(&self.params),
            "tables": self.tables,
            "evidence": pairs(&self.evidence),
            "notes": self.notes,
            "wall_time": self.wall_time,
        });
        let mut s = serde_json::to_string_pretty(&doc).expect("report serializes");
        s.push('\n');
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> RunReport {
        let mut r = RunReport { command: "trace x".into(), fractal: "x".into(), mode: "exact".into(), ..Default::default() };
        let mut t = Table::new("t", &["n", "value"]);
        t.push(vec!["1".into(), "35/4".into()]);
        t.push(vec!["2".into(), "a,b".into()]);
        r.tables.push(t);
        r
    }

    #[test]
    fn formats_carry_the_same_cells() {
        let r = sample();
        assert!(r.render(Format::Table).contains("1  35/4"));
        let csv = r.render(Format::Csv);
        assert!(csv.contains("1,35/4\n") && csv.contains("2,\"a,b\"\n"));
        let v: serde_json::Value = serde_json::from_str(&r.render(Format::Json)).unwrap();
        assert_eq!(v["tables"][0]["rows"][0][1], "35/4");
    }
}
