//! Experiment configuration: one JSON file fully determines a run.
//!
//! Flags only override scalar fields (seed, output directory, CSV, thread
//! count), so the config file remains the single provenance artifact. The
//! `threads` and `output` fields are execution details: they never change
//! results and are excluded from the config echo inside reports.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use postselect_core::{Error, GeneratorKind, LearnerKind, Result, ThresholdSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    GenData,
    LostLuck,
    CvAudit,
    NestedCvAudit,
    Superlearner,
    Report,
}

impl Protocol {
    pub fn name(&self) -> &'static str {
        match self {
            Protocol::GenData => "gen-data",
            Protocol::LostLuck => "lost-luck",
            Protocol::CvAudit => "cv-audit",
            Protocol::NestedCvAudit => "nested-cv-audit",
            Protocol::Superlearner => "superlearner",
            Protocol::Report => "report",
        }
    }
}

impl std::fmt::Display for Protocol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub generator: GeneratorKind,
    pub d: usize,
    pub dim: usize,
    pub num_labels: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub fit: f64,
    pub val: f64,
    pub test: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NestedSpec {
    pub n: usize,
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputSpec {
    pub dir: PathBuf,
    pub csv: bool,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            csv: false,
        }
    }
}

fn default_se_multiplier() -> f64 {
    postselect_core::DEFAULT_SE_MULTIPLIER
}

fn default_honest_tolerance() -> f64 {
    postselect_core::DEFAULT_HONEST_TOLERANCE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub protocol: Protocol,
    pub master_seed: u64,
    pub dataset: DatasetSpec,
    /// Fit/validation/test fractions (lost-luck, report).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<SplitSpec>,
    /// Fold count over the development portion (cv-audit, superlearner).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub folds: Option<usize>,
    /// Input-output fold counts (nested-cv-audit, nested superlearner).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nested: Option<NestedSpec>,
    /// How many trailing samples are withheld as the test set in audit and
    /// superlearner runs; the fold plans cover the rest.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub withheld_test: Option<usize>,
    /// Learner families: the single family for lost-luck, the audited
    /// families for cv-audit, the honest candidates for superlearner, the
    /// architecture grid for report.
    #[serde(default)]
    pub learners: Vec<LearnerKind>,
    /// Candidate injected into the Super Learner.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub misconduct: Option<LearnerKind>,
    /// Trials for lost-luck; seeds per architecture for report.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_m: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_step: Option<f64>,
    /// Width of verdict tolerance bands, in sample standard deviations.
    #[serde(default = "default_se_multiplier")]
    pub se_multiplier: f64,
    /// Allowed |cv - test| gap for honest families in audits.
    #[serde(default = "default_honest_tolerance")]
    pub honest_tolerance: f64,
    /// Worker threads; never affects results.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(default)]
    pub output: OutputSpec,
}

impl ExperimentConfig {
    /// A runnable default configuration for each protocol.
    pub fn default_for(protocol: Protocol) -> Self {
        let noise = DatasetSpec {
            generator: GeneratorKind::PureNoiseLabels,
            d: 300,
            dim: 2,
            num_labels: 2,
        };
        let base = Self {
            protocol,
            master_seed: 7,
            dataset: noise,
            split: None,
            folds: None,
            nested: None,
            withheld_test: None,
            learners: Vec::new(),
            misconduct: None,
            trials: None,
            top_m: None,
            grid_step: None,
            se_multiplier: default_se_multiplier(),
            honest_tolerance: default_honest_tolerance(),
            threads: None,
            output: OutputSpec::default(),
        };
        let audited_families = vec![
            LearnerKind::Nnwt {
                threshold: ThresholdSpec::Construction,
            },
            LearnerKind::Pgnn,
            LearnerKind::OneNn,
        ];
        match protocol {
            Protocol::GenData => base,
            Protocol::LostLuck => Self {
                // A large validation set keeps the mean validation error a
                // tight estimate; five feature dimensions keep the seeded
                // prototype predictions close to exchangeable noise.
                dataset: DatasetSpec {
                    generator: GeneratorKind::PureNoiseLabels,
                    d: 500,
                    dim: 5,
                    num_labels: 2,
                },
                split: Some(SplitSpec {
                    fit: 0.4,
                    val: 0.4,
                    test: 0.2,
                }),
                learners: vec![LearnerKind::RandomPrototype { prototypes: 4 }],
                trials: Some(1000),
                top_m: Some(1),
                ..base
            },
            Protocol::CvAudit => Self {
                folds: Some(5),
                withheld_test: Some(200),
                learners: audited_families,
                ..base
            },
            Protocol::NestedCvAudit => Self {
                nested: Some(NestedSpec { n: 3, k: 2 }),
                withheld_test: Some(200),
                learners: audited_families,
                ..base
            },
            Protocol::Superlearner => Self {
                folds: Some(5),
                withheld_test: Some(200),
                learners: vec![
                    LearnerKind::OneNn,
                    LearnerKind::RandomPrototype { prototypes: 4 },
                    LearnerKind::Constant { label: 0 },
                ],
                misconduct: Some(LearnerKind::Nnwt {
                    threshold: ThresholdSpec::Construction,
                }),
                grid_step: Some(0.1),
                ..base
            },
            Protocol::Report => Self {
                dataset: DatasetSpec {
                    generator: GeneratorKind::GaussianClusters,
                    d: 300,
                    dim: 2,
                    num_labels: 3,
                },
                split: Some(SplitSpec {
                    fit: 0.6,
                    val: 0.2,
                    test: 0.2,
                }),
                learners: vec![
                    LearnerKind::RandomPrototype { prototypes: 2 },
                    LearnerKind::RandomPrototype { prototypes: 4 },
                    LearnerKind::RandomPrototype { prototypes: 8 },
                ],
                trials: Some(100),
                ..base
            },
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(Error::from)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    /// The part of the config that determines results: everything except
    /// execution details. This is what reports echo.
    pub fn experiment_identity(&self) -> serde_json::Value {
        let mut value = serde_json::to_value(self).expect("config serializes");
        let map = value.as_object_mut().expect("config is an object");
        map.remove("threads");
        map.remove("output");
        value
    }

    fn require<T: Copy>(field: Option<T>, name: &str, protocol: Protocol) -> Result<T> {
        field.ok_or_else(|| {
            Error::InvalidConfig(format!("`{name}` is required for the {protocol} protocol"))
        })
    }

    /// Cross-field validation beyond what serde enforces; the module
    /// preconditions still apply downstream.
    pub fn validate(&self) -> Result<()> {
        match self.protocol {
            Protocol::GenData => {}
            Protocol::LostLuck => {
                Self::require(self.split, "split", self.protocol)?;
                Self::require(self.trials, "trials", self.protocol)?;
                if self.learners.len() != 1 {
                    return Err(Error::InvalidConfig(format!(
                        "lost-luck takes exactly one learner family, got {}",
                        self.learners.len()
                    )));
                }
            }
            Protocol::CvAudit => {
                Self::require(self.folds, "folds", self.protocol)?;
                self.validate_withheld()?;
            }
            Protocol::NestedCvAudit => {
                Self::require(self.nested, "nested", self.protocol)?;
                self.validate_withheld()?;
            }
            Protocol::Superlearner => {
                if self.folds.is_none() && self.nested.is_none() {
                    return Err(Error::InvalidConfig(
                        "superlearner needs `folds` or `nested`".into(),
                    ));
                }
                Self::require(self.grid_step, "grid_step", self.protocol)?;
                self.validate_withheld()?;
                if self.misconduct.is_none() {
                    return Err(Error::InvalidConfig(
                        "superlearner needs a `misconduct` candidate to inject".into(),
                    ));
                }
                if self.learners.is_empty() {
                    return Err(Error::InvalidConfig(
                        "superlearner needs honest candidates in `learners`".into(),
                    ));
                }
                if let Some(dishonest) = self.learners.iter().find(|l| l.consumes_validation()) {
                    return Err(Error::InvalidConfig(format!(
                        "`learners` must hold honest candidates; move {dishonest} to `misconduct`"
                    )));
                }
            }
            Protocol::Report => {
                Self::require(self.split, "split", self.protocol)?;
                Self::require(self.trials, "trials", self.protocol)?;
                if self.learners.is_empty() {
                    return Err(Error::InvalidConfig(
                        "report needs at least one architecture in `learners`".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    fn validate_withheld(&self) -> Result<()> {
        let withheld = Self::require(self.withheld_test, "withheld_test", self.protocol)?;
        if withheld == 0 || withheld >= self.dataset.d {
            return Err(Error::InvalidConfig(format!(
                "withheld_test must be in 1..{} (dataset size {})",
                self.dataset.d, self.dataset.d
            )));
        }
        Ok(())
    }
}
