use std::fmt;
use std::str::FromStr;

use crate::cohort::{Arm, Cohort, StageRecord};
use crate::error::{Error, Result};

/// One column of a linear Q-function design.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Term {
    Intercept,
    Covariate(String),
    /// Indicator of arm A.
    Treatment,
    /// Covariate times the arm-A indicator.
    Interaction(String),
}

impl Term {
    pub fn name(&self) -> String {
        match self {
            Term::Intercept => "(Intercept)".to_string(),
            Term::Covariate(c) => c.clone(),
            Term::Treatment => "trt".to_string(),
            Term::Interaction(c) => format!("trt:{c}"),
        }
    }

    pub fn depends_on_treatment(&self) -> bool {
        matches!(self, Term::Treatment | Term::Interaction(_))
    }
}

/// Ordered list of design terms.
///
/// Written as `1 + Sex + TumorSize + trt + trt:TumorSize`, where `1` is the
/// intercept and `trt` the arm-A indicator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TermSpec {
    terms: Vec<Term>,
}

impl TermSpec {
    /// A Q-function term set: exactly one intercept, unique names and at
    /// least one treatment-dependent term.
    pub fn new(terms: Vec<Term>) -> Result<Self> {
        let intercepts = terms.iter().filter(|t| **t == Term::Intercept).count();
        if intercepts != 1 {
            return Err(Error::InvalidArgument(format!(
                "a Q-function needs exactly one intercept, found {intercepts}"
            )));
        }
        if !terms.iter().any(Term::depends_on_treatment) {
            return Err(Error::InvalidArgument(
                "a Q-function needs at least one treatment-dependent term".into(),
            ));
        }
        Self::check_unique(&terms)?;
        Ok(TermSpec { terms })
    }

    /// Covariate set for a Cox linear predictor: no intercept, unique names.
    pub fn for_cox(terms: Vec<Term>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::InvalidArgument("empty Cox term set".into()));
        }
        if terms.contains(&Term::Intercept) {
            return Err(Error::InvalidArgument(
                "a Cox linear predictor has no intercept".into(),
            ));
        }
        Self::check_unique(&terms)?;
        Ok(TermSpec { terms })
    }

    /// Any list of unique terms, for building designs outside Q-function fitting.
    pub fn custom(terms: Vec<Term>) -> Result<Self> {
        Self::check_unique(&terms)?;
        Ok(TermSpec { terms })
    }

    fn check_unique(terms: &[Term]) -> Result<()> {
        for (i, t) in terms.iter().enumerate() {
            if terms[..i].contains(t) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate term `{}`",
                    t.name()
                )));
            }
        }
        Ok(())
    }

    /// Intercept, main effects, treatment and treatment-by-`modifier` interaction.
    pub fn main_effects_with_interaction(covariates: &[&str], modifier: &str) -> Self {
        let mut terms = vec![Term::Intercept];
        terms.extend(covariates.iter().map(|c| Term::Covariate(c.to_string())));
        terms.push(Term::Treatment);
        terms.push(Term::Interaction(modifier.to_string()));
        TermSpec::new(terms).expect("well-formed term set")
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.terms.iter().map(Term::name).collect()
    }

    /// The same terms with the intercept removed (the Cox parameterisation).
    pub fn without_intercept(&self) -> Result<TermSpec> {
        TermSpec::for_cox(
            self.terms
                .iter()
                .filter(|t| **t != Term::Intercept)
                .cloned()
                .collect(),
        )
    }

    /// Resolves covariate names against a cohort.
    pub(crate) fn resolve(&self, cohort: &Cohort) -> Result<ResolvedTerms> {
        let columns = self
            .terms
            .iter()
            .map(|t| {
                Ok(match t {
                    Term::Intercept => Column::One,
                    Term::Covariate(c) => Column::Covariate(cohort.covariate_index(c)?),
                    Term::Treatment => Column::Treatment,
                    Term::Interaction(c) => Column::Interaction(cohort.covariate_index(c)?),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ResolvedTerms {
            columns,
            names: cohort.covariate_names.clone(),
        })
    }
}

#[derive(Debug, Clone, Copy)]
enum Column {
    One,
    Covariate(usize),
    Treatment,
    Interaction(usize),
}

#[derive(Debug, Clone)]
pub(crate) struct ResolvedTerms {
    columns: Vec<Column>,
    names: Vec<String>,
}

impl ResolvedTerms {
    /// Design row for `record` with the treatment slot set to `arm`.
    pub(crate) fn row(&self, record: &StageRecord, arm: Arm, subject: &str) -> Result<Vec<f64>> {
        let value = |j: usize| {
            record.covariates[j].ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "covariate `{}` is missing for subject {subject}; impute it first",
                    self.names[j]
                ))
            })
        };
        self.columns
            .iter()
            .map(|c| {
                Ok(match *c {
                    Column::One => 1.0,
                    Column::Covariate(j) => value(j)?,
                    Column::Treatment => arm.indicator(),
                    Column::Interaction(j) => value(j)? * arm.indicator(),
                })
            })
            .collect()
    }
}

impl fmt::Display for TermSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .terms
            .iter()
            .map(|t| match t {
                Term::Intercept => "1".to_string(),
                other => other.name(),
            })
            .collect();
        f.write_str(&parts.join(" + "))
    }
}

fn parse_terms(s: &str) -> Result<Vec<Term>> {
    s.split('+')
        .map(str::trim)
        .map(|tok| {
            if tok.is_empty() {
                return Err(Error::InvalidArgument(format!("empty term in `{s}`")));
            }
            Ok(match tok {
                "1" => Term::Intercept,
                "trt" => Term::Treatment,
                _ => {
                    if let Some(c) = tok.strip_prefix("trt:") {
                        Term::Interaction(c.trim().to_string())
                    } else if let Some(c) = tok.strip_suffix(":trt") {
                        Term::Interaction(c.trim().to_string())
                    } else if tok.contains(':') {
                        return Err(Error::InvalidArgument(format!(
                            "only treatment interactions are supported, got `{tok}`"
                        )));
                    } else {
                        Term::Covariate(tok.to_string())
                    }
                }
            })
        })
        .collect()
}

impl FromStr for TermSpec {
    type Err = Error;

    /// Parses a Q-function term set.
    fn from_str(s: &str) -> Result<Self> {
        TermSpec::new(parse_terms(s)?)
    }
}

impl TermSpec {
    /// Parses a Cox covariate set such as `Sex + TumorSize`.
    pub fn parse_cox(s: &str) -> Result<Self> {
        TermSpec::for_cox(parse_terms(s)?)
    }
}
