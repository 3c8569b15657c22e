use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::algorithms::{
    make_schedule_corollary1, make_schedule_theorem1, make_schedule_theorem2, Algorithm, Schedule,
};
use crate::error::{Error, Result};
use crate::geometry::{ConvexSet, SetShape};
use crate::metrics::SolverConfig;
use crate::network::GraphSchedule;
use crate::problem::{compute_constants, AdversaryModel, CoefficientRanges, ProblemConstants};
use crate::rng::{derive_seed, tag};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta1: Option<f64>,
    /// With `theta3`; both absent selects the `theta1`-only preset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta3: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SetKind {
    #[default]
    Box,
    Ball,
}

/// A single dimension shared by every learner, or one per learner.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Dims {
    Uniform(usize),
    PerLearner(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdversaryConfig {
    pub learners: usize,
    pub constraints: usize,
    pub dims: Dims,
    /// Box half-width or ball radius.
    pub half_width: f64,
    #[serde(default)]
    pub set: SetKind,
    #[serde(default)]
    pub ranges: CoefficientRanges,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphConfig {
    pub rho: f64,
    #[serde(default = "one")]
    pub iota: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComparatorKind {
    #[default]
    Static,
    Dynamic,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub algorithm: Algorithm,
    pub schedule: ScheduleConfig,
    pub adversary: AdversaryConfig,
    pub graph: GraphConfig,
    pub rounds: usize,
    #[serde(default = "one")]
    pub ensemble: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub parallel: usize,
    #[serde(default)]
    pub comparator: ComparatorKind,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub solver: SolverConfig,
}

/// Seeds of one ensemble member.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemberSeeds {
    pub member: usize,
    pub graph: u64,
    pub adversary: u64,
    pub learners: u64,
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        Ok(toml::from_str(s)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn dims(&self) -> Vec<usize> {
        match &self.adversary.dims {
            Dims::Uniform(p) => vec![*p; self.adversary.learners],
            Dims::PerLearner(v) => v.clone(),
        }
    }

    pub fn sets(&self) -> Result<Vec<ConvexSet>> {
        let shape = match self.adversary.set {
            SetKind::Box => SetShape::Box {
                half_width: self.adversary.half_width,
            },
            SetKind::Ball => SetShape::Ball {
                radius: self.adversary.half_width,
            },
        };
        self.dims()
            .into_iter()
            .map(|p| ConvexSet::new(shape, p))
            .collect()
    }

    pub fn member_seeds(&self, member: usize) -> MemberSeeds {
        let k = member as u64;
        MemberSeeds {
            member,
            graph: derive_seed(self.seed, &[tag::MEMBER, k, tag::GRAPH]),
            adversary: derive_seed(self.seed, &[tag::MEMBER, k, tag::ADVERSARY]),
            learners: derive_seed(self.seed, &[tag::MEMBER, k, tag::LEARNER]),
        }
    }

    pub fn adversary_model(&self, seeds: &MemberSeeds) -> Result<AdversaryModel> {
        AdversaryModel::new(
            self.sets()?,
            self.adversary.constraints,
            self.adversary.ranges,
            seeds.adversary,
        )
    }

    pub fn graph_schedule(&self, seeds: &MemberSeeds) -> Result<GraphSchedule> {
        GraphSchedule::new(
            self.adversary.learners,
            self.graph.rho,
            self.graph.iota,
            seeds.graph,
        )
    }

    /// Range-based constants; identical for every member.
    pub fn constants(&self) -> Result<ProblemConstants> {
        Ok(compute_constants(
            &self.adversary_model(&self.member_seeds(0))?,
        ))
    }

    pub fn build_schedule(&self, constants: &ProblemConstants) -> Result<Schedule> {
        let sets = self.sets()?;
        let m = self.adversary.constraints;
        let s = &self.schedule;
        match self.algorithm {
            Algorithm::OnePoint => {
                if s.kappa.is_some() {
                    return Err(Error::Config(
                        "kappa belongs to the two_point algorithm".into(),
                    ));
                }
                let theta1 = s
                    .theta1
                    .ok_or_else(|| Error::Config("one_point needs schedule.theta1".into()))?;
                match (s.theta2, s.theta3) {
                    (None, None) => make_schedule_corollary1(theta1, constants, &sets, m),
                    (Some(t2), Some(t3)) => {
                        make_schedule_theorem1(theta1, t2, t3, constants, &sets, m)
                    }
                    _ => Err(Error::Config(
                        "give both theta2 and theta3, or neither".into(),
                    )),
                }
            }
            Algorithm::TwoPoint => {
                if s.theta1.is_some() || s.theta2.is_some() || s.theta3.is_some() {
                    return Err(Error::Config(
                        "theta parameters belong to the one_point algorithm".into(),
                    ));
                }
                let kappa = s
                    .kappa
                    .ok_or_else(|| Error::Config("two_point needs schedule.kappa".into()))?;
                make_schedule_theorem2(kappa, &sets)
            }
        }
    }

    /// True for the one-point `theta1`-only preset.
    pub fn is_preset(&self) -> bool {
        self.algorithm == Algorithm::OnePoint
            && self.schedule.theta2.is_none()
            && self.schedule.theta3.is_none()
    }

    /// Checks everything that can be checked without running.
    pub fn validate(&self) -> Result<()> {
        let a = &self.adversary;
        if a.learners == 0 {
            return Err(Error::Config("adversary.learners must be positive".into()));
        }
        if a.constraints == 0 {
            return Err(Error::Config(
                "adversary.constraints must be positive".into(),
            ));
        }
        if let Dims::PerLearner(v) = &a.dims {
            if v.len() != a.learners {
                return Err(Error::Config(format!(
                    "adversary.dims lists {} entries for {} learners",
                    v.len(),
                    a.learners
                )));
            }
        }
        if self.dims().contains(&0) {
            return Err(Error::Config("adversary.dims must be positive".into()));
        }
        if !(a.half_width.is_finite() && a.half_width > 0.0) {
            return Err(Error::Config(
                "adversary.half_width must be positive".into(),
            ));
        }
        a.ranges.validate()?;
        if !(0.0..=1.0).contains(&self.graph.rho) {
            return Err(Error::Config("graph.rho must lie in [0, 1]".into()));
        }
        if self.graph.iota == 0 {
            return Err(Error::Config("graph.iota must be positive".into()));
        }
        if self.rounds < 2 {
            return Err(Error::Config("rounds must be at least 2".into()));
        }
        if self.ensemble == 0 {
            return Err(Error::Config("ensemble must be positive".into()));
        }
        if self.parallel == 0 {
            return Err(Error::Config("parallel must be positive".into()));
        }
        self.build_schedule(&self.constants()?)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FULL_SCALE: &str = r#"
algorithm = "two_point"
rounds = 1000
ensemble = 100
seed = 1

[schedule]
kappa = 0.5

[adversary]
learners = 50
constraints = 1
dims = 6
half_width = 10.0

[graph]
rho = 0.2
"#;

    #[test]
    fn full_scale_parses_and_validates() {
        let c = ExperimentConfig::from_toml_str(FULL_SCALE).unwrap();
        c.validate().unwrap();
        assert_eq!(c.dims(), vec![6; 50]);
        assert_eq!(c.adversary.ranges, CoefficientRanges::default());
        assert_eq!(c.comparator, ComparatorKind::Static);
        assert_eq!(c.parallel, 1);
    }

    #[test]
    fn toml_round_trip() {
        let c = ExperimentConfig::from_toml_str(FULL_SCALE).unwrap();
        let back = ExperimentConfig::from_toml_str(&c.to_toml_string().unwrap()).unwrap();
        assert_eq!(c, back);
    }

    #[test]
    fn schedule_errors_are_reported() {
        let mut c = ExperimentConfig::from_toml_str(FULL_SCALE).unwrap();
        c.schedule.kappa = Some(1.0);
        assert!(c.validate().unwrap_err().to_string().contains("kappa"));
        c.algorithm = Algorithm::OnePoint;
        c.schedule = ScheduleConfig {
            theta1: Some(0.5),
            theta2: Some(0.2),
            theta3: Some(0.25),
            kappa: None,
        };
        assert!(c.validate().unwrap_err().to_string().contains("theta2"));
        c.schedule = ScheduleConfig {
            theta1: Some(0.8),
            theta2: Some(0.1),
            theta3: None,
            kappa: None,
        };
        assert!(c.validate().is_err());
        c.schedule = ScheduleConfig {
            theta1: Some(5.0 / 6.0),
            ..Default::default()
        };
        c.validate().unwrap();
        assert!(c.is_preset());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = FULL_SCALE.replace("rho = 0.2", "rho = 0.2\nweight = 3");
        assert!(ExperimentConfig::from_toml_str(&bad).is_err());
    }

    #[test]
    fn member_seeds_are_distinct() {
        let c = ExperimentConfig::from_toml_str(FULL_SCALE).unwrap();
        let a = c.member_seeds(0);
        let b = c.member_seeds(1);
        assert_ne!(a.graph, b.graph);
        assert_ne!(a.adversary, a.graph);
        assert_ne!(a.learners, b.learners);
    }
}
