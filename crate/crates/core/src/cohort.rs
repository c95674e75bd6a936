//! Longitudinal cohort representation shared by every module.

use std::fmt;

use crate::error::{Error, Result};

/// One of the two treatment options.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Arm {
    A,
    B,
}

impl Arm {
    pub const BOTH: [Arm; 2] = [Arm::A, Arm::B];

    /// Treatment indicator used in design rows: 1 for A, 0 for B.
    pub fn indicator(self) -> f64 {
        match self {
            Arm::A => 1.0,
            Arm::B => 0.0,
        }
    }

    pub fn other(self) -> Arm {
        match self {
            Arm::A => Arm::B,
            Arm::B => Arm::A,
        }
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Arm::A => "A",
            Arm::B => "B",
        })
    }
}

/// What was observed for one subject during one stage.
#[derive(Debug, Clone, PartialEq)]
pub struct StageRecord {
    /// Values aligned with [`Cohort::covariate_names`]; `None` is missing.
    pub covariates: Vec<Option<f64>>,
    pub treatment: Arm,
    /// Observed duration of the stage (event or censoring time).
    pub time: f64,
    /// `true` when the stage ended with an observed event.
    pub event: bool,
}

/// A subject's stage records in order. A subject enters stage `k` exactly
/// when it has at least `k` records.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub id: String,
    pub stages: Vec<StageRecord>,
}

impl Trajectory {
    /// Entry indicator for the 1-based stage `k`.
    pub fn entered(&self, k: usize) -> bool {
        k >= 1 && k <= self.stages.len()
    }

    pub fn stage(&self, k: usize) -> Option<&StageRecord> {
        k.checked_sub(1).and_then(|i| self.stages.get(i))
    }

    pub fn stage_mut(&mut self, k: usize) -> Option<&mut StageRecord> {
        k.checked_sub(1).and_then(move |i| self.stages.get_mut(i))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    pub covariate_names: Vec<String>,
    /// External labels for arms A and B, in that order.
    pub treatment_labels: [String; 2],
    pub trajectories: Vec<Trajectory>,
}

impl Cohort {
    pub fn new(covariate_names: Vec<String>, trajectories: Vec<Trajectory>) -> Self {
        Cohort {
            covariate_names,
            treatment_labels: ["A".to_string(), "B".to_string()],
            trajectories,
        }
    }

    pub fn covariate_index(&self, name: &str) -> Result<usize> {
        self.covariate_names
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::Schema(format!("unknown covariate `{name}`")))
    }

    /// Largest number of stages any subject entered.
    pub fn n_stages(&self) -> usize {
        self.trajectories
            .iter()
            .map(|t| t.stages.len())
            .max()
            .unwrap_or(0)
    }

    /// Indices of the subjects entering stage `k`.
    pub fn entrants(&self, k: usize) -> Vec<usize> {
        self.trajectories
            .iter()
            .enumerate()
            .filter(|(_, t)| t.entered(k))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn label(&self, arm: Arm) -> &str {
        match arm {
            Arm::A => &self.treatment_labels[0],
            Arm::B => &self.treatment_labels[1],
        }
    }

    pub fn arm_for_label(&self, label: &str) -> Option<Arm> {
        if label == self.treatment_labels[0] {
            Some(Arm::A)
        } else if label == self.treatment_labels[1] {
            Some(Arm::B)
        } else {
            None
        }
    }

    /// Number of missing cells for covariate `index`, over all stage records.
    pub fn missing_count(&self, index: usize) -> usize {
        self.trajectories
            .iter()
            .flat_map(|t| &t.stages)
            .filter(|r| r.covariates[index].is_none())
            .count()
    }
}
