//! Tables of registry-best results for external plotting.

use std::collections::{BTreeMap, BTreeSet};

use serde_json::{json, Value};
use wgs_core::models::Model;

use crate::error::{CliError, CliResult};
use crate::logfile::LogLine;

/// Lowest-energy line per distinct model, ordered by the model's parameters.
pub fn best_per_point(lines: &[LogLine]) -> Vec<&LogLine> {
    let mut best: Vec<&LogLine> = Vec::new();
    for l in lines {
        match best.iter_mut().find(|b| b.model == l.model) {
            Some(b) if l.energy < b.energy => *b = l,
            Some(_) => {}
            None => best.push(l),
        }
    }
    best.sort_by(|a, b| {
        a.model
            .name()
            .cmp(b.model.name())
            .then_with(|| a.model.parameters().partial_cmp(&b.model.parameters()).unwrap_or(std::cmp::Ordering::Equal))
    });
    best
}

/// A rectangular table: header and rows of JSON scalars.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

fn parameter_columns(lines: &[&LogLine]) -> Vec<String> {
    let mut names: Vec<String> = Vec::new();
    for l in lines {
        for n in l.model.parameter_names() {
            if !names.iter().any(|m| m == n) {
                names.push(n.to_string());
            }
        }
    }
    names
}

fn column_value(model: &Model, l: &LogLine, name: &str) -> Value {
    if name == "energy" {
        return json!(l.energy);
    }
    if let Ok(v) = model.parameter(name) {
        return json!(v);
    }
    l.observables.get(name).map_or(Value::Null, |v| json!(v))
}

/// Observables against Hamiltonian parameters, one row per point.
pub fn table(lines: &[LogLine]) -> Table {
    let best = best_per_point(lines);
    let params = parameter_columns(&best);
    let obs: BTreeSet<String> = best.iter().flat_map(|l| l.observables.keys().cloned()).collect();
    let mut header = vec!["model".to_string()];
    header.extend(params.iter().cloned());
    header.extend(["energy", "evals", "branches"].map(String::from));
    header.extend(obs.iter().cloned());
    let rows = best
        .iter()
        .map(|l| {
            let mut row = vec![json!(l.model.name())];
            row.extend(params.iter().map(|p| l.model.parameter(p).map_or(Value::Null, |v| json!(v))));
            row.push(json!(l.energy));
            row.push(json!(l.evals));
            row.push(json!(l.x.header.branches));
            row.extend(obs.iter().map(|o| l.observables.get(o).map_or(Value::Null, |v| json!(v))));
            row
        })
        .collect();
    Table { header, rows }
}

/// Scattered `(x, y, value)` triples for interpolation by external tools.
pub fn grid(lines: &[LogLine], x: &str, y: &str, value: &str) -> CliResult<Table> {
    let best = best_per_point(lines);
    let mut rows = Vec::new();
    for l in best {
        let cells: Vec<Value> = [x, y, value].iter().map(|c| column_value(&l.model, l, c)).collect();
        if cells.iter().any(Value::is_null) {
            return Err(CliError::Config(format!(
                "log line for {:?} has no column among {x:?}, {y:?}, {value:?}",
                l.model
            )));
        }
        rows.push(cells);
    }
    Ok(Table { header: vec![x.into(), y.into(), value.into()], rows })
}

fn cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

pub fn to_csv(t: &Table) -> CliResult<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |e: csv::Error| CliError::Config(e.to_string());
    w.write_record(&t.header).map_err(err)?;
    for r in &t.rows {
        w.write_record(r.iter().map(cell)).map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("CSV output is UTF-8"))
}

pub fn to_json(t: &Table) -> String {
    let objects: Vec<BTreeMap<&str, &Value>> =
        t.rows.iter().map(|r| t.header.iter().map(String::as_str).zip(r.iter()).collect()).collect();
    serde_json::to_string_pretty(&objects).expect("table serializes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use wgs_core::{Ansatz, Geometry, ParameterVector, PhaseMode};

    fn line(b: f64, e: f64) -> LogLine {
        let a = Ansatz::new(Geometry::ring(3).unwrap(), PhaseMode::Orbit, 2, 1).unwrap();
        LogLine {
            command: "sweep".into(),
            fingerprint: "f".into(),
            model: Model::ising(b),
            swept: Some("b".into()),
            round: Some(1),
            energy: e,
            evals: 1,
            provenance: String::new(),
            observables: BTreeMap::from([("max_corr_sv".to_string(), b / 10.0)]),
            diagnostic: None,
            x: ParameterVector::zeros(&a),
            timestamp: 0,
            elapsed_s: 0.0,
        }
    }

    #[test]
    fn empty_log_gives_header_only() {
        let t = table(&[]);
        assert!(t.rows.is_empty());
        assert_eq!(to_csv(&t).unwrap().lines().count(), 1);
    }

    #[test]
    fn one_row_per_point_sorted_and_best() {
        let lines = vec![line(1.2, -3.0), line(0.8, -2.0), line(1.2, -3.5), line(1.0, -2.5), line(1.2, -3.1)];
        let t = table(&lines);
        assert_eq!(t.rows.len(), 3);
        let bs: Vec<f64> = t.rows.iter().map(|r| r[1].as_f64().unwrap()).collect();
        assert_eq!(bs, vec![0.8, 1.0, 1.2]);
        let e_col = t.header.iter().position(|h| h == "energy").unwrap();
        assert_eq!(t.rows[2][e_col].as_f64(), Some(-3.5));
        let csv = to_csv(&t).unwrap();
        let mut r = csv::Reader::from_reader(csv.as_bytes());
        assert_eq!(r.records().count(), 3);
    }

    #[test]
    fn scattered_grid() {
        let t = grid(&[line(0.5, -1.0)], "b", "gamma", "max_corr_sv").unwrap();
        assert_eq!(t.rows, vec![vec![json!(0.5), json!(1.0), json!(0.05)]]);
        assert!(grid(&[line(0.5, -1.0)], "b", "mu", "energy").is_err());
    }
}
