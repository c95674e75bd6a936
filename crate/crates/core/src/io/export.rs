use std::path::Path;

use crate::cohort::{Arm, Cohort};
use crate::error::{Error, Result};
use crate::simulation::ExperimentOutput;

use super::{fmt_f64, CsvBuffer};

/// One step of a survival curve: the value just after `time` and the
/// number of subjects still at risk at `time`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMPoint {
    pub time: f64,
    pub survival: f64,
    pub at_risk: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMExportCurve {
    pub label: String,
    pub points: Vec<KMPoint>,
}

/// Product-limit steps at each distinct event time, preceded by `(0, 1, n)`.
pub fn km_steps(times: &[f64], events: &[bool]) -> Vec<KMPoint> {
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
    let mut points = vec![KMPoint {
        time: 0.0,
        survival: 1.0,
        at_risk: times.len(),
    }];
    let mut surv = 1.0;
    let mut i = 0;
    while i < order.len() {
        let t = times[order[i]];
        let at_risk = order.len() - i;
        let mut deaths = 0;
        while i < order.len() && times[order[i]] == t {
            deaths += usize::from(events[order[i]]);
            i += 1;
        }
        if deaths > 0 {
            surv *= 1.0 - deaths as f64 / at_risk as f64;
            points.push(KMPoint {
                time: t,
                survival: surv,
                at_risk,
            });
        }
    }
    points
}

/// Observed and imputed survival curves for each arm of a single-stage
/// cohort. `imputed[i]` is the completed outcome of trajectory `i`, counted
/// as an event. Curves come in the order observed A, observed B, imputed A,
/// imputed B and are labelled with the cohort's treatment labels.
pub fn export_km_pairs(cohort: &Cohort, imputed: &[f64]) -> Result<Vec<KMExportCurve>> {
    if cohort.n_stages() != 1 {
        return Err(Error::InvalidArgument(format!(
            "survival curve export needs single-stage data, found {} stages",
            cohort.n_stages()
        )));
    }
    if imputed.len() != cohort.trajectories.len() {
        return Err(Error::InvalidArgument(format!(
            "{} imputed outcomes for {} subjects",
            imputed.len(),
            cohort.trajectories.len()
        )));
    }
    let records: Vec<_> = cohort.trajectories.iter().map(|t| &t.stages[0]).collect();
    let mut curves = Vec::with_capacity(4);
    for arm in Arm::BOTH {
        let (times, events): (Vec<f64>, Vec<bool>) = records
            .iter()
            .filter(|r| r.treatment == arm)
            .map(|r| (r.time, r.event))
            .unzip();
        curves.push(KMExportCurve {
            label: format!("observed_{}", cohort.label(arm)),
            points: km_steps(&times, &events),
        });
    }
    for arm in Arm::BOTH {
        let times: Vec<f64> = records
            .iter()
            .zip(imputed)
            .filter(|(r, _)| r.treatment == arm)
            .map(|(_, &y)| y)
            .collect();
        curves.push(KMExportCurve {
            label: format!("imputed_{}", cohort.label(arm)),
            points: km_steps(&times, &vec![true; times.len()]),
        });
    }
    Ok(curves)
}

/// Columns `curve,time,survival,at_risk`.
pub fn write_km_curves(curves: &[KMExportCurve], path: impl AsRef<Path>) -> Result<()> {
    let mut out = CsvBuffer::new(path.as_ref(), &["curve", "time", "survival", "at_risk"])?;
    for c in curves {
        for p in &c.points {
            out.row([
                c.label.clone(),
                fmt_f64(p.time),
                fmt_f64(p.survival),
                p.at_risk.to_string(),
            ])?;
        }
    }
    out.finish()
}

/// Accuracy summaries of one or more experiments, one row per
/// `(n, method, scope)` in that sort order, rounded to 3 decimals.
pub fn write_summary_tables(outputs: &[ExperimentOutput], path: impl AsRef<Path>) -> Result<()> {
    let mut rows: Vec<_> = outputs
        .iter()
        .flat_map(|o| o.summaries.iter().map(move |s| (o.n, s)))
        .collect();
    rows.sort_by_key(|(n, s)| (*n, s.method, s.scope));
    let mut out = CsvBuffer::new(
        path.as_ref(),
        &[
            "n", "method", "scope", "min", "q1", "median", "mean", "q3", "max",
        ],
    )?;
    for (n, s) in rows {
        let mut fields = vec![n.to_string(), s.method.to_string(), s.scope.to_string()];
        fields.extend([s.min, s.q1, s.median, s.mean, s.q3, s.max].map(|v| format!("{v:.3}")));
        out.row(fields)?;
    }
    out.finish()
}

/// Per-replicate accuracies: `n,replicate,method,scope,accuracy`.
pub fn write_accuracies(outputs: &[ExperimentOutput], path: impl AsRef<Path>) -> Result<()> {
    let mut out = CsvBuffer::new(
        path.as_ref(),
        &["n", "replicate", "method", "scope", "accuracy"],
    )?;
    for o in outputs {
        for a in &o.accuracies {
            out.row([
                o.n.to_string(),
                a.replicate.to_string(),
                a.method.to_string(),
                a.scope.to_string(),
                fmt_f64(a.accuracy),
            ])?;
        }
    }
    out.finish()
}

/// Per-subject Q-values for box plots: `n,replicate,subject,scope,arms,method,q`.
pub fn write_qvalues(outputs: &[ExperimentOutput], path: impl AsRef<Path>) -> Result<()> {
    let mut out = CsvBuffer::new(
        path.as_ref(),
        &["n", "replicate", "subject", "scope", "arms", "method", "q"],
    )?;
    for o in outputs {
        for q in &o.qvalues {
            out.row([
                o.n.to_string(),
                q.replicate.to_string(),
                q.subject.to_string(),
                q.scope.to_string(),
                q.arms.clone(),
                q.method.to_string(),
                fmt_f64(q.q),
            ])?;
        }
    }
    out.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::{StageRecord, Trajectory};
    use crate::simulation::{AccuracySummary, Method, Scope};

    fn cohort(rows: &[(Arm, f64, bool)]) -> Cohort {
        Cohort::new(
            vec![],
            rows.iter()
                .enumerate()
                .map(|(i, &(treatment, time, event))| Trajectory {
                    id: i.to_string(),
                    stages: vec![StageRecord {
                        covariates: vec![],
                        treatment,
                        time,
                        event,
                    }],
                })
                .collect(),
        )
    }

    #[test]
    fn hand_computed_product_limit() {
        // 1 event of 3 at risk, then 1 censored, then 1 event of 1 at risk.
        let pts = km_steps(&[3.0, 1.0, 2.0], &[true, true, false]);
        assert_eq!(pts.len(), 3);
        assert_eq!(
            (pts[0].time, pts[0].survival, pts[0].at_risk),
            (0.0, 1.0, 3)
        );
        assert_eq!(pts[1].at_risk, 3);
        assert!((pts[1].survival - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(
            (pts[2].time, pts[2].survival, pts[2].at_risk),
            (3.0, 0.0, 1)
        );
    }

    #[test]
    fn all_censored_stays_at_one() {
        let pts = km_steps(&[1.0, 2.0], &[false, false]);
        assert_eq!(pts.len(), 1);
    }

    #[test]
    fn four_curves_and_identical_without_censoring() {
        let c = cohort(&[
            (Arm::A, 1.0, true),
            (Arm::B, 2.0, true),
            (Arm::A, 3.0, true),
        ]);
        let curves = export_km_pairs(&c, &[1.0, 2.0, 3.0]).unwrap();
        let labels: Vec<_> = curves.iter().map(|c| c.label.as_str()).collect();
        assert_eq!(
            labels,
            ["observed_A", "observed_B", "imputed_A", "imputed_B"]
        );
        assert_eq!(curves[0].points, curves[2].points);
        assert_eq!(curves[1].points, curves[3].points);
    }

    #[test]
    fn multi_stage_rejected() {
        let mut c = cohort(&[(Arm::A, 1.0, true)]);
        let rec = c.trajectories[0].stages[0].clone();
        c.trajectories[0].stages.push(rec);
        assert!(export_km_pairs(&c, &[1.0]).is_err());
    }

    #[test]
    fn summary_rows_sorted_and_rounded() {
        let dir = tempfile::tempdir().unwrap();
        let s = |method, scope| AccuracySummary::from_values(method, scope, &[0.12345, 0.9]);
        let output = |n, summaries| ExperimentOutput {
            n,
            stages: 1,
            summaries,
            accuracies: vec![],
            qvalues: vec![],
            failures: vec![],
            mean_censoring_fraction: 0.0,
            mean_missing_fraction: 0.0,
        };
        let outputs = vec![
            output(
                500,
                vec![
                    s(Method::CoxQ, Scope::Stage(1)),
                    s(Method::BjQ, Scope::Stage(1)),
                ],
            ),
            output(
                100,
                vec![
                    s(Method::BjQ, Scope::Cumulative),
                    s(Method::BjQ, Scope::Stage(1)),
                ],
            ),
        ];
        let p = dir.path().join("summary.csv");
        write_summary_tables(&outputs, &p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "n,method,scope,min,q1,median,mean,q3,max");
        assert_eq!(
            lines[1],
            "100,BJ-Q,stage1,0.123,0.318,0.512,0.512,0.706,0.900"
        );
        assert!(lines[2].starts_with("100,BJ-Q,cumulative"));
        assert!(lines[3].starts_with("500,BJ-Q,stage1"));
        assert!(lines[4].starts_with("500,Cox-Q,stage1"));
        assert!(!text.contains('\r'));
    }
}
