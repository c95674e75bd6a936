use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use crate::cohort::{Cohort, StageRecord, Trajectory};
use crate::error::{Error, Result};

use super::{fmt_f64, CsvBuffer};

/// Column mapping for a long-format table with one row per subject and stage.
#[derive(Debug, Clone, PartialEq)]
pub struct LongTableSchema {
    pub id_column: String,
    pub stage_column: String,
    pub treatment_column: String,
    pub time_column: String,
    pub event_column: String,
    /// Covariate columns; `None` takes every column not named above.
    pub covariates: Option<Vec<String>>,
    /// Labels for arms A and B. When `None` they are inferred: with labels
    /// `0`/`1`, `1` is A; otherwise the lexicographically first label is A.
    pub treatment_labels: Option<[String; 2]>,
}

impl Default for LongTableSchema {
    fn default() -> Self {
        LongTableSchema {
            id_column: "id".into(),
            stage_column: "stage".into(),
            treatment_column: "treatment".into(),
            time_column: "time".into(),
            event_column: "event".into(),
            covariates: None,
            treatment_labels: None,
        }
    }
}

struct Row {
    line: usize,
    id: String,
    stage: usize,
    covariates: Vec<Option<f64>>,
    treatment: String,
    time: f64,
    event: bool,
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::Schema(format!("missing column `{name}`")))
}

fn parse_f64(cell: &str, line: usize, what: &str) -> Result<f64> {
    cell.trim().parse::<f64>().map_err(|_| Error::Parse {
        line,
        message: format!("{what} `{cell}` is not a number"),
    })
}

fn infer_labels(seen: &BTreeSet<String>) -> Result<[String; 2]> {
    let labels: Vec<&String> = seen.iter().collect();
    match labels.as_slice() {
        [a, b] if a.as_str() == "0" && b.as_str() == "1" => Ok(["1".into(), "0".into()]),
        [a, b] => Ok([(*a).clone(), (*b).clone()]),
        _ => Err(Error::Schema(format!(
            "treatment must take exactly two distinct labels, found {}: {}",
            labels.len(),
            labels
                .iter()
                .map(|s| s.as_str())
                .collect::<Vec<_>>()
                .join(", ")
        ))),
    }
}

/// Reads a long-format CSV into a cohort.
///
/// Subjects keep the order of their first row; each subject's records are
/// ordered by stage. Empty covariate cells are missing.
pub fn read_long_csv(path: impl AsRef<Path>, schema: &LongTableSchema) -> Result<Cohort> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::csv(path, e))?;
    let headers = reader.headers().map_err(|e| Error::csv(path, e))?.clone();

    let id_col = column(&headers, &schema.id_column)?;
    let stage_col = column(&headers, &schema.stage_column)?;
    let trt_col = column(&headers, &schema.treatment_column)?;
    let time_col = column(&headers, &schema.time_column)?;
    let event_col = column(&headers, &schema.event_column)?;
    let reserved = [id_col, stage_col, trt_col, time_col, event_col];
    let covariate_names: Vec<String> = match &schema.covariates {
        Some(names) => names.clone(),
        None => headers
            .iter()
            .enumerate()
            .filter(|(i, _)| !reserved.contains(i))
            .map(|(_, h)| h.to_string())
            .collect(),
    };
    let cov_cols = covariate_names
        .iter()
        .map(|c| column(&headers, c))
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::new();
    let mut labels = BTreeSet::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::csv(path, e))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let cell = |i: usize| record.get(i).unwrap_or("");

        let stage = cell(stage_col)
            .trim()
            .parse::<usize>()
            .map_err(|_| Error::Parse {
                line,
                message: format!("stage `{}` is not a positive integer", cell(stage_col)),
            })?;
        let time = parse_f64(cell(time_col), line, "time")?;
        if !(time.is_finite() && time > 0.0) {
            return Err(Error::Schema(format!(
                "line {line}: time must be positive, got {time}"
            )));
        }
        let event = match cell(event_col).trim() {
            "1" => true,
            "0" => false,
            other => {
                return Err(Error::Schema(format!(
                    "line {line}: event must be 0 or 1, got `{other}`"
                )))
            }
        };
        let covariates = cov_cols
            .iter()
            .zip(&covariate_names)
            .map(|(&c, name)| {
                let v = cell(c).trim();
                if v.is_empty() {
                    Ok(None)
                } else {
                    parse_f64(v, line, name).map(Some)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let treatment = cell(trt_col).trim().to_string();
        labels.insert(treatment.clone());
        if labels.len() > 2 && schema.treatment_labels.is_none() {
            return Err(Error::Schema(format!(
                "line {line}: more than two treatment labels ({})",
                labels.iter().cloned().collect::<Vec<_>>().join(", ")
            )));
        }
        rows.push(Row {
            line,
            id: cell(id_col).to_string(),
            stage,
            covariates,
            treatment,
            time,
            event,
        });
    }

    let treatment_labels = match &schema.treatment_labels {
        Some(l) => l.clone(),
        None => infer_labels(&labels)?,
    };
    let cohort_labels = Cohort {
        covariate_names: covariate_names.clone(),
        treatment_labels: treatment_labels.clone(),
        trajectories: Vec::new(),
    };

    let mut order: Vec<String> = Vec::new();
    let mut by_id: HashMap<String, Vec<Row>> = HashMap::new();
    for row in rows {
        let entry = by_id.entry(row.id.clone()).or_insert_with(|| {
            order.push(row.id.clone());
            Vec::new()
        });
        if let Some(prev) = entry.iter().find(|r| r.stage == row.stage) {
            return Err(Error::Schema(format!(
                "duplicate (id, stage) = ({}, {}) on lines {} and {}",
                row.id, row.stage, prev.line, row.line
            )));
        }
        entry.push(row);
    }

    let mut trajectories = Vec::with_capacity(order.len());
    for id in order {
        let mut subject_rows = by_id.remove(&id).expect("id recorded");
        subject_rows.sort_by_key(|r| r.stage);
        let mut stages = Vec::with_capacity(subject_rows.len());
        for (expected, row) in (1..).zip(subject_rows) {
            if row.stage != expected {
                return Err(Error::Schema(format!(
                    "subject {id}: stages must be contiguous from 1, found stage {} on line {}",
                    row.stage, row.line
                )));
            }
            let treatment = cohort_labels.arm_for_label(&row.treatment).ok_or_else(|| {
                Error::Schema(format!(
                    "line {}: treatment `{}` is neither `{}` nor `{}`",
                    row.line, row.treatment, treatment_labels[0], treatment_labels[1]
                ))
            })?;
            stages.push(StageRecord {
                covariates: row.covariates,
                treatment,
                time: row.time,
                event: row.event,
            });
        }
        trajectories.push(Trajectory { id, stages });
    }

    Ok(Cohort {
        covariate_names,
        treatment_labels,
        trajectories,
    })
}

/// Writes a cohort in the long format read by [`read_long_csv`] with the
/// default schema. Floats use the shortest representation that parses back
/// to the same value.
pub fn write_long_csv(cohort: &Cohort, path: impl AsRef<Path>) -> Result<()> {
    let schema = LongTableSchema::default();
    let mut header = vec![schema.id_column.as_str(), schema.stage_column.as_str()];
    header.extend(cohort.covariate_names.iter().map(String::as_str));
    header.extend([
        schema.treatment_column.as_str(),
        schema.time_column.as_str(),
        schema.event_column.as_str(),
    ]);
    let mut out = CsvBuffer::new(path.as_ref(), &header)?;
    for traj in &cohort.trajectories {
        for (k, rec) in (1..).zip(&traj.stages) {
            let mut fields = vec![traj.id.clone(), k.to_string()];
            fields.extend(
                rec.covariates
                    .iter()
                    .map(|v| v.map(fmt_f64).unwrap_or_default()),
            );
            fields.push(cohort.label(rec.treatment).to_string());
            fields.push(fmt_f64(rec.time));
            fields.push(if rec.event { "1" } else { "0" }.to_string());
            out.row(fields)?;
        }
    }
    out.finish()
}
