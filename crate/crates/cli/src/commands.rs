use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use bjq_core::io::{
    export_km_pairs, fmt_f64, load_policy, read_long_csv, save_policy, write_accuracies,
    write_atomic, write_km_curves, write_qvalues, write_summary_tables, CsvBuffer, LongTableSchema,
};
use bjq_core::qlearning::stage_q_values;
use bjq_core::simulation::SimConfig;
use bjq_core::{
    fit_policy, recommend_sequence, run_experiment, Arm, BJConfig, Cohort, CoxConfig, Error,
    FitMethod, Imputer, Policy, PolicyFit, Term, TermSpec,
};
use serde_json::json;

use crate::config;

fn create_dir(dir: &Path) -> Result<(), Error> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })
}

fn unix_seconds() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0.0, |d| d.as_secs_f64())
}

pub fn simulate(config_path: &Path, out: &Path) -> Result<(), Error> {
    let text = std::fs::read_to_string(config_path).map_err(|source| Error::Io {
        path: config_path.to_path_buf(),
        source,
    })?;
    let config = config::parse(&text)?;
    create_dir(out)?;
    let started = unix_seconds();

    let mut outputs = Vec::with_capacity(config.sample_sizes.len());
    for &n in &config.sample_sizes {
        let sim = SimConfig {
            n,
            ..config.sim.clone()
        };
        log::info!("n = {n}: {} replicates, K = {}", sim.replicates, sim.stages);
        let output = run_experiment(&sim)?;
        for (r, msg) in &output.failures {
            log::warn!("n = {n}, replicate {r} excluded: {msg}");
        }
        outputs.push(output);
    }

    let files = ["summary.csv", "accuracies.csv", "qvalues.csv"];
    write_summary_tables(&outputs, out.join(files[0]))?;
    write_accuracies(&outputs, out.join(files[1]))?;
    write_qvalues(&outputs, out.join(files[2]))?;

    let manifest = json!({
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "seed": config.sim.seed,
        "config": config::resolved(&config),
        "started_unix": started,
        "finished_unix": unix_seconds(),
        "outputs": files,
        "runs": outputs.iter().map(|o| json!({
            "n": o.n,
            "failed_replicates": o.failures.iter().map(|(r, m)| json!({"replicate": r, "error": m})).collect::<Vec<_>>(),
            "mean_censoring_fraction": o.mean_censoring_fraction,
            "mean_missing_fraction": o.mean_missing_fraction,
        })).collect::<Vec<_>>(),
    });
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serialises") + "\n";
    write_atomic(&out.join("manifest.json"), text.as_bytes())
}

/// Column names and arm labels of a long-format input table.
#[derive(Debug, Clone, clap::Args)]
pub struct SchemaArgs {
    #[arg(long, default_value = "id")]
    pub id_col: String,
    #[arg(long, default_value = "stage")]
    pub stage_col: String,
    #[arg(long, default_value = "treatment")]
    pub treatment_col: String,
    #[arg(long, default_value = "time")]
    pub time_col: String,
    #[arg(long, default_value = "event")]
    pub event_col: String,
    /// Comma-separated covariate columns (default: every other column).
    #[arg(long, value_delimiter = ',')]
    pub covariates: Option<Vec<String>>,
    /// Label of arm A (the arm coded 1 in `trt` terms).
    #[arg(long, requires = "arm_b")]
    pub arm_a: Option<String>,
    /// Label of arm B.
    #[arg(long, requires = "arm_a")]
    pub arm_b: Option<String>,
}

impl SchemaArgs {
    fn schema(&self, labels: Option<[String; 2]>) -> LongTableSchema {
        LongTableSchema {
            id_column: self.id_col.clone(),
            stage_column: self.stage_col.clone(),
            treatment_column: self.treatment_col.clone(),
            time_column: self.time_col.clone(),
            event_column: self.event_col.clone(),
            covariates: self.covariates.clone(),
            treatment_labels: labels.or_else(|| Some([self.arm_a.clone()?, self.arm_b.clone()?])),
        }
    }
}

pub struct FitArgs<'a> {
    pub data: &'a Path,
    pub stages: usize,
    pub method: FitMethod,
    pub terms: Option<&'a str>,
    pub cox_covariates: Option<&'a str>,
    pub schema: &'a SchemaArgs,
    pub out: &'a Path,
}

/// Every covariate as a main effect and as a treatment interaction.
fn default_terms(cohort: &Cohort) -> Result<TermSpec, Error> {
    let mut terms = vec![Term::Intercept];
    terms.extend(cohort.covariate_names.iter().cloned().map(Term::Covariate));
    terms.push(Term::Treatment);
    terms.extend(
        cohort
            .covariate_names
            .iter()
            .cloned()
            .map(Term::Interaction),
    );
    TermSpec::new(terms)
}

fn default_cox_covariates(cohort: &Cohort) -> Result<TermSpec, Error> {
    let mut terms: Vec<Term> = cohort
        .covariate_names
        .iter()
        .cloned()
        .map(Term::Covariate)
        .collect();
    terms.push(Term::Treatment);
    TermSpec::for_cox(terms)
}

fn write_recommendations(policy: &Policy, cohort: &Cohort, path: &Path) -> Result<(), Error> {
    let mut out = CsvBuffer::new(path, &["id", "stage", "q_a", "q_b", "recommended"])?;
    for traj in &cohort.trajectories {
        let q = stage_q_values(policy, cohort, traj)?;
        let seq = recommend_sequence(policy, cohort, traj)?;
        for (k, ((qa, qb), arm)) in q.iter().zip(&seq).enumerate() {
            out.row([
                traj.id.clone(),
                (k + 1).to_string(),
                fmt_f64(*qa),
                fmt_f64(*qb),
                policy.treatment_labels[usize::from(*arm == Arm::B)].clone(),
            ])?;
        }
    }
    out.finish()
}

fn write_imputed(fit: &PolicyFit, cohort: &Cohort, path: &Path) -> Result<(), Error> {
    let mut out = CsvBuffer::new(path, &["id", "stage", "time", "event", "imputed"])?;
    for stage in &fit.stages {
        let k = stage.model.stage;
        for (&i, y) in stage.subjects.iter().zip(&stage.imputed) {
            let traj = &cohort.trajectories[i];
            let rec = traj.stage(k).expect("entrant");
            out.row([
                traj.id.clone(),
                k.to_string(),
                fmt_f64(rec.time),
                u8::from(rec.event).to_string(),
                fmt_f64(*y),
            ])?;
        }
    }
    out.finish()
}

pub fn fit(args: FitArgs<'_>) -> Result<(), Error> {
    let cohort = read_long_csv(args.data, &args.schema.schema(None))?;
    log::info!(
        "read {} subjects, {} stage(s), covariates: {}",
        cohort.trajectories.len(),
        cohort.n_stages(),
        cohort.covariate_names.join(", ")
    );
    let terms = match args.terms {
        Some(t) => t.parse()?,
        None => default_terms(&cohort)?,
    };
    let imputer = match args.method {
        FitMethod::BuckleyJames => Imputer::BuckleyJames(BJConfig::default()),
        FitMethod::Cox => Imputer::Cox {
            covariates: match args.cox_covariates {
                Some(t) => TermSpec::parse_cox(t)?,
                None => default_cox_covariates(&cohort)?,
            },
            config: CoxConfig::default(),
        },
    };
    let fit = fit_policy(&cohort, args.stages, &terms, &imputer)?;
    for stage in &fit.stages {
        if let Some(bj) = &stage.model.bj {
            if !bj.converged {
                log::warn!(
                    "stage {}: Buckley-James iteration did not converge (oscillation: {})",
                    stage.model.stage,
                    bj.oscillation_detected
                );
            }
        }
    }

    create_dir(args.out)?;
    save_policy(&fit.policy, args.out)?;
    write_recommendations(&fit.policy, &cohort, &args.out.join("recommendations.csv"))?;
    write_imputed(&fit, &cohort, &args.out.join("imputed.csv"))?;
    if args.stages == 1 && cohort.n_stages() == 1 {
        let imputed = &fit.stages[0].imputed;
        write_km_curves(
            &export_km_pairs(&cohort, imputed)?,
            args.out.join("km_curves.csv"),
        )?;
    }
    Ok(())
}

pub fn recommend(model: &Path, data: &Path, schema: &SchemaArgs, out: &Path) -> Result<(), Error> {
    let policy = load_policy(model)?;
    let cohort = read_long_csv(data, &schema.schema(Some(policy.treatment_labels.clone())))?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    write_recommendations(&policy, &cohort, out)
}
