//! TOML run configuration for `bjq simulate`.
//!
//! Every key is optional; an empty file reproduces the default scenario.
//! Unknown keys and ill-typed or out-of-range values are all collected and
//! reported together.

use bjq_core::simulation::{CoxCovariates, MissingMechanism, SimConfig};
use bjq_core::Error;
use serde_json::{json, Value};
use toml::Table;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Sample sizes to run; each gets its own experiment.
    pub sample_sizes: Vec<usize>,
    pub sim: SimConfig,
}

const SECTIONS: [(&str, &[&str]); 6] = [
    ("simulation", &["n", "stages", "coefficients", "noise_sd"]),
    ("censoring", &["enabled", "quantiles", "literal_stagewise"]),
    (
        "missingness",
        &[
            "rate",
            "mechanism",
            "all_stages",
            "pmm_donors",
            "pmm_stratify_by_arm",
        ],
    ),
    ("buckley_james", &["tol", "max_iter", "tail_correction"]),
    ("cox", &["tol", "max_iter", "max_abs_beta", "covariates"]),
    ("run", &["replicates", "seed", "export_replicate"]),
];

/// Configuration-file key for each field named by [`SimConfig::validate`].
const FIELD_KEYS: [(&str, &str); 10] = [
    ("n", "simulation.n"),
    ("stages", "simulation.stages"),
    ("coefficients", "simulation.coefficients"),
    ("noise_sd", "simulation.noise_sd"),
    ("censor_quantiles", "censoring.quantiles"),
    ("missing_rate", "missingness.rate"),
    ("pmm_donors", "missingness.pmm_donors"),
    ("replicates", "run.replicates"),
    ("bj.tol", "buckley_james.tol"),
    ("bj.max_iter", "buckley_james.max_iter"),
];

fn rename_field(msg: String) -> String {
    match msg.split_once(':') {
        Some((field, rest)) => match FIELD_KEYS.iter().find(|(f, _)| *f == field) {
            Some((_, key)) => format!("{key}:{rest}"),
            None => msg,
        },
        None => msg,
    }
}

struct Reader<'a> {
    root: &'a Table,
    errors: Vec<String>,
}

impl<'a> Reader<'a> {
    fn get(&self, section: &str, key: &str) -> Option<&'a toml::Value> {
        self.root.get(section)?.as_table()?.get(key)
    }

    fn fail(&mut self, section: &str, key: &str, msg: impl std::fmt::Display) {
        self.errors.push(format!("{section}.{key}: {msg}"));
    }

    fn float(&mut self, section: &str, key: &str, default: f64) -> f64 {
        match self.get(section, key) {
            None => default,
            Some(toml::Value::Float(f)) => *f,
            Some(toml::Value::Integer(i)) => *i as f64,
            Some(other) => {
                self.fail(section, key, format!("expected a number, got {other}"));
                default
            }
        }
    }

    fn uint(&mut self, section: &str, key: &str, default: usize) -> usize {
        match self.get(section, key) {
            None => default,
            Some(toml::Value::Integer(i)) if *i >= 0 => *i as usize,
            Some(other) => {
                self.fail(
                    section,
                    key,
                    format!("expected a non-negative integer, got {other}"),
                );
                default
            }
        }
    }

    fn boolean(&mut self, section: &str, key: &str, default: bool) -> bool {
        match self.get(section, key) {
            None => default,
            Some(toml::Value::Boolean(b)) => *b,
            Some(other) => {
                self.fail(section, key, format!("expected true or false, got {other}"));
                default
            }
        }
    }

    fn string(&mut self, section: &str, key: &str) -> Option<&'a str> {
        match self.get(section, key) {
            None => None,
            Some(toml::Value::String(s)) => Some(s),
            Some(other) => {
                self.fail(section, key, format!("expected a string, got {other}"));
                None
            }
        }
    }

    fn floats(&mut self, section: &str, key: &str, len: usize) -> Option<Vec<f64>> {
        let value = self.get(section, key)?;
        let parsed: Option<Vec<f64>> = value.as_array().and_then(|a| {
            a.iter()
                .map(|v| v.as_float().or_else(|| v.as_integer().map(|i| i as f64)))
                .collect()
        });
        match parsed {
            Some(v) if v.len() == len => Some(v),
            _ => {
                self.fail(
                    section,
                    key,
                    format!("expected an array of {len} numbers, got {value}"),
                );
                None
            }
        }
    }

    fn sample_sizes(&mut self, default: usize) -> Vec<usize> {
        match self.get("simulation", "n") {
            None => vec![default],
            Some(toml::Value::Integer(i)) if *i > 0 => vec![*i as usize],
            Some(toml::Value::Array(a)) if !a.is_empty() => {
                let sizes: Option<Vec<usize>> = a
                    .iter()
                    .map(|v| v.as_integer().filter(|i| *i > 0).map(|i| i as usize))
                    .collect();
                sizes.unwrap_or_else(|| {
                    self.fail("simulation", "n", "every entry must be a positive integer");
                    vec![default]
                })
            }
            Some(other) => {
                self.fail(
                    "simulation",
                    "n",
                    format!("expected a positive integer or a list of them, got {other}"),
                );
                vec![default]
            }
        }
    }

    fn unknown_keys(&mut self) {
        for (name, value) in self.root {
            let Some((_, keys)) = SECTIONS.iter().find(|(s, _)| s == name) else {
                self.errors.push(format!("{name}: unknown section"));
                continue;
            };
            let Some(table) = value.as_table() else {
                self.errors.push(format!("{name}: expected a table"));
                continue;
            };
            for key in table.keys() {
                if !keys.contains(&key.as_str()) {
                    self.errors.push(format!("{name}.{key}: unknown key"));
                }
            }
        }
    }
}

/// Parses a configuration file's text, validating the resulting settings.
pub fn parse(text: &str) -> Result<RunConfig, Error> {
    let root: Table = text
        .parse()
        .map_err(|e: toml::de::Error| Error::Config(vec![e.message().to_string()]))?;
    let d = SimConfig::default();
    let mut r = Reader {
        root: &root,
        errors: Vec::new(),
    };
    r.unknown_keys();

    let sample_sizes = r.sample_sizes(d.n);
    let mut sim = SimConfig {
        n: sample_sizes[0],
        stages: r.uint("simulation", "stages", d.stages),
        noise_sd: r.float("simulation", "noise_sd", d.noise_sd),
        censoring: r.boolean("censoring", "enabled", d.censoring),
        literal_stagewise_censoring: r.boolean(
            "censoring",
            "literal_stagewise",
            d.literal_stagewise_censoring,
        ),
        missing_rate: r.float("missingness", "rate", d.missing_rate),
        mask_all_stages: r.boolean("missingness", "all_stages", d.mask_all_stages),
        pmm_donors: r.uint("missingness", "pmm_donors", d.pmm_donors),
        pmm_stratify_by_arm: r.boolean("missingness", "pmm_stratify_by_arm", d.pmm_stratify_by_arm),
        replicates: r.uint("run", "replicates", d.replicates),
        export_replicate: r.uint("run", "export_replicate", d.export_replicate),
        ..d.clone()
    };
    if let Some(c) = r.floats("simulation", "coefficients", 5) {
        sim.coefficients.copy_from_slice(&c);
    }
    if let Some(q) = r.floats("censoring", "quantiles", 2) {
        sim.censor_quantiles = (q[0], q[1]);
    }
    match r.string("missingness", "mechanism") {
        None => {}
        Some("mcar") => sim.missing_mechanism = MissingMechanism::Mcar,
        Some("mar_on_sex") => sim.missing_mechanism = MissingMechanism::MarOnSex,
        Some(other) => r.fail(
            "missingness",
            "mechanism",
            format!("expected \"mcar\" or \"mar_on_sex\", got \"{other}\""),
        ),
    }
    match r.get("run", "seed") {
        None => {}
        Some(toml::Value::Integer(i)) if *i >= 0 => sim.seed = *i as u64,
        Some(other) => r.fail(
            "run",
            "seed",
            format!("expected a non-negative integer, got {other}"),
        ),
    }
    sim.bj.tol = r.float("buckley_james", "tol", d.bj.tol);
    sim.bj.max_iter = r.uint("buckley_james", "max_iter", d.bj.max_iter);
    sim.bj.tail_correction = r.boolean("buckley_james", "tail_correction", d.bj.tail_correction);
    sim.cox.tol = r.float("cox", "tol", d.cox.tol);
    sim.cox.max_iter = r.uint("cox", "max_iter", d.cox.max_iter);
    sim.cox.max_abs_beta = r.float("cox", "max_abs_beta", d.cox.max_abs_beta);
    match r.string("cox", "covariates") {
        None => {}
        Some("main") => sim.cox_covariates = CoxCovariates::Main,
        Some("full") => sim.cox_covariates = CoxCovariates::Full,
        Some(other) => r.fail(
            "cox",
            "covariates",
            format!("expected \"main\" or \"full\", got \"{other}\""),
        ),
    }
    if sim.export_replicate >= sim.replicates && sim.replicates > 0 {
        r.fail(
            "run",
            "export_replicate",
            format!("must be below replicates ({})", sim.replicates),
        );
    }

    let mut errors = r.errors;
    for &n in &sample_sizes {
        if let Err(Error::Config(msgs)) = (SimConfig { n, ..sim.clone() }).validate() {
            for m in msgs.into_iter().map(rename_field) {
                if !errors.contains(&m) {
                    errors.push(m);
                }
            }
        }
    }
    if errors.is_empty() {
        Ok(RunConfig { sample_sizes, sim })
    } else {
        Err(Error::Config(errors))
    }
}

/// The fully resolved configuration, in the same layout as the file.
pub fn resolved(config: &RunConfig) -> Value {
    let s = &config.sim;
    json!({
        "simulation": {
            "n": config.sample_sizes,
            "stages": s.stages,
            "coefficients": s.coefficients,
            "noise_sd": s.noise_sd,
        },
        "censoring": {
            "enabled": s.censoring,
            "quantiles": [s.censor_quantiles.0, s.censor_quantiles.1],
            "literal_stagewise": s.literal_stagewise_censoring,
        },
        "missingness": {
            "rate": s.missing_rate,
            "mechanism": match s.missing_mechanism {
                MissingMechanism::Mcar => "mcar",
                MissingMechanism::MarOnSex => "mar_on_sex",
            },
            "all_stages": s.mask_all_stages,
            "pmm_donors": s.pmm_donors,
            "pmm_stratify_by_arm": s.pmm_stratify_by_arm,
        },
        "buckley_james": {
            "tol": s.bj.tol,
            "max_iter": s.bj.max_iter,
            "tail_correction": s.bj.tail_correction,
        },
        "cox": {
            "tol": s.cox.tol,
            "max_iter": s.cox.max_iter,
            "max_abs_beta": s.cox.max_abs_beta,
            "covariates": match s.cox_covariates {
                CoxCovariates::Main => "main",
                CoxCovariates::Full => "full",
            },
        },
        "run": {
            "replicates": s.replicates,
            "seed": s.seed,
            "export_replicate": s.export_replicate,
        },
    })
}
