//! Verification reports: one row per check, written as JSON and CSV with no
//! run-dependent content, so equal inputs give byte-identical files.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::io::write_json;

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum Relation {
    /// `value ≤ threshold`
    Le,
    /// `value ≥ threshold`
    Ge,
    /// `value < threshold`
    Lt,
    /// `value > threshold`
    Gt,
}

impl Relation {
    pub fn holds(self, value: f64, threshold: f64) -> bool {
        match self {
            Relation::Le => value <= threshold,
            Relation::Ge => value >= threshold,
            Relation::Lt => value < threshold,
            Relation::Gt => value > threshold,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Relation::Le => "<=",
            Relation::Ge => ">=",
            Relation::Lt => "<",
            Relation::Gt => ">",
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Row {
    pub check_id: String,
    pub anchor: String,
    /// Non-finite values serialize as `null`.
    pub value: Option<f64>,
    pub relation: Relation,
    pub threshold: f64,
    pub pass: bool,
}

impl Row {
    /// NaN never passes; `-inf` passes an upper bound.
    pub fn new(check_id: impl Into<String>, anchor: &str, value: f64, relation: Relation, threshold: f64) -> Self {
        let pass = !value.is_nan() && relation.holds(value, threshold);
        Self { check_id: check_id.into(), anchor: anchor.into(), value: value.is_finite().then_some(value), relation, threshold, pass }
    }

    /// A check that could not be evaluated.
    pub fn failed(check_id: impl Into<String>, anchor: &str, relation: Relation, threshold: f64) -> Self {
        Self { check_id: check_id.into(), anchor: anchor.into(), value: None, relation, threshold, pass: false }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
pub struct Report {
    pub command: String,
    pub rows: Vec<Row>,
    /// Errors raised while computing checks, in order.
    pub errors: Vec<String>,
}

impl Report {
    pub fn new(command: &str) -> Self {
        Self { command: command.into(), rows: Vec::new(), errors: Vec::new() }
    }

    pub fn push(&mut self, row: Row) {
        self.rows.push(row);
    }

    pub fn extend(&mut self, rows: impl IntoIterator<Item = Row>) {
        self.rows.extend(rows);
    }

    pub fn all_pass(&self) -> bool {
        self.errors.is_empty() && self.rows.iter().all(|r| r.pass)
    }

    pub fn failures(&self) -> Vec<&Row> {
        self.rows.iter().filter(|r| !r.pass).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("check_id,anchor,value,relation,threshold,pass\n");
        for r in &self.rows {
            let value = match r.value {
                Some(v) => format!("{v:e}"),
                None => String::new(),
            };
            let _ = writeln!(s, "{},{},{},{},{:e},{}", csv_field(&r.check_id), csv_field(&r.anchor), value, r.relation.symbol(), r.threshold, r.pass);
        }
        s
    }

    /// Writes `<stem>.json` and `<stem>.csv` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        write_json(&dir.join(format!("{stem}.json")), self)?;
        std::fs::write(dir.join(format!("{stem}.csv")), self.to_csv())?;
        Ok(())
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
