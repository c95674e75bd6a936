//! Plain-text persistence of fitted policies.
//!
//! A model directory holds `terms.txt` (one term set per stage),
//! `arms.txt` (the A and B labels), `coefficients.csv`
//! (`stage,method,term,estimate`) and, for Cox-imputed stages,
//! `cox_stage<k>_beta.csv` and `cox_stage<k>_baseline.csv` with the
//! Breslow cumulative hazard as `(time, hazard)` pairs.

use std::path::Path;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::qlearning::{FitMethod, Policy, StageQModel, TermSpec};

use super::{fmt_f64, write_atomic, CsvBuffer};

pub fn save_policy(policy: &Policy, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let terms: String = policy
        .stage_models
        .iter()
        .map(|m| format!("{}\n", m.terms))
        .collect();
    write_atomic(&dir.join("terms.txt"), terms.as_bytes())?;

    let arms = format!(
        "A,{}\nB,{}\n",
        policy.treatment_labels[0], policy.treatment_labels[1]
    );
    write_atomic(&dir.join("arms.txt"), arms.as_bytes())?;

    let coef_path = dir.join("coefficients.csv");
    let mut coef = CsvBuffer::new(&coef_path, &["stage", "method", "term", "estimate"])?;
    for m in &policy.stage_models {
        for (name, b) in m.terms.names().iter().zip(m.beta_hat.iter()) {
            coef.row([
                m.stage.to_string(),
                m.fit_method.as_str().to_string(),
                name.clone(),
                fmt_f64(*b),
            ])?;
        }
    }
    coef.finish()?;

    for m in &policy.stage_models {
        let Some(cox) = &m.cox else { continue };
        let beta_path = dir.join(format!("cox_stage{}_beta.csv", m.stage));
        let mut beta = CsvBuffer::new(&beta_path, &["term", "estimate"])?;
        for (name, b) in cox.column_names.iter().zip(cox.beta.iter()) {
            beta.row([name.clone(), fmt_f64(*b)])?;
        }
        beta.finish()?;
        let base_path = dir.join(format!("cox_stage{}_baseline.csv", m.stage));
        let mut base = CsvBuffer::new(&base_path, &["time", "hazard"])?;
        for (t, h) in cox.baseline_times.iter().zip(&cox.baseline_cum_hazard) {
            base.row([fmt_f64(*t), fmt_f64(*h)])?;
        }
        base.finish()?;
    }
    Ok(())
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Loads the stage Q-functions saved by [`save_policy`]. Cox imputation
/// fits are audit artifacts and are not read back.
pub fn load_policy(dir: impl AsRef<Path>) -> Result<Policy> {
    let dir = dir.as_ref();
    let term_specs = read_text(&dir.join("terms.txt"))?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(str::parse::<TermSpec>)
        .collect::<Result<Vec<_>>>()?;
    if term_specs.is_empty() {
        return Err(Error::Schema("terms.txt lists no stages".into()));
    }

    let arms_text = read_text(&dir.join("arms.txt"))?;
    let mut labels = [None, None];
    for line in arms_text.lines().filter(|l| !l.trim().is_empty()) {
        match line.split_once(',') {
            Some(("A", l)) => labels[0] = Some(l.to_string()),
            Some(("B", l)) => labels[1] = Some(l.to_string()),
            _ => return Err(Error::Schema(format!("arms.txt: unexpected line `{line}`"))),
        }
    }
    let [Some(a), Some(b)] = labels else {
        return Err(Error::Schema("arms.txt must name both arms A and B".into()));
    };

    let coef_path = dir.join("coefficients.csv");
    let mut reader = csv::Reader::from_path(&coef_path).map_err(|e| Error::csv(&coef_path, e))?;
    let mut rows: Vec<Vec<(String, f64)>> = vec![Vec::new(); term_specs.len()];
    let mut methods: Vec<Option<FitMethod>> = vec![None; term_specs.len()];
    for record in reader.records() {
        let record = record.map_err(|e| Error::csv(&coef_path, e))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let bad = |message: String| Error::Parse { line, message };
        let stage: usize = record[0]
            .parse()
            .map_err(|_| bad(format!("bad stage `{}`", &record[0])))?;
        if stage == 0 || stage > term_specs.len() {
            return Err(bad(format!("stage {stage} has no entry in terms.txt")));
        }
        let method: FitMethod = record[1].parse()?;
        let estimate: f64 = record[3]
            .parse()
            .map_err(|_| bad(format!("bad estimate `{}`", &record[3])))?;
        methods[stage - 1] = Some(method);
        rows[stage - 1].push((record[2].to_string(), estimate));
    }

    let mut stage_models = Vec::with_capacity(term_specs.len());
    for (i, (terms, coefs)) in term_specs.into_iter().zip(rows).enumerate() {
        let names: Vec<String> = coefs.iter().map(|(n, _)| n.clone()).collect();
        if names != terms.names() {
            return Err(Error::Schema(format!(
                "stage {}: coefficients ({}) do not match terms ({})",
                i + 1,
                names.join(", "),
                terms.names().join(", ")
            )));
        }
        stage_models.push(StageQModel {
            stage: i + 1,
            terms,
            beta_hat: DVector::from_iterator(coefs.len(), coefs.into_iter().map(|(_, b)| b)),
            fit_method: methods[i].expect("non-empty stage has a method"),
            bj: None,
            cox: None,
        });
    }
    Ok(Policy {
        stage_models,
        treatment_labels: [a, b],
    })
}
