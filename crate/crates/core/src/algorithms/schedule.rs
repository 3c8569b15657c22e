//! Step-size, dual-regularization, shrinkage, and exploration sequences.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::ConvexSet;
use crate::problem::ProblemConstants;

const RANGE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ScheduleKind {
    OnePoint {
        theta1: f64,
        theta2: f64,
        theta3: f64,
    },
    TwoPoint {
        kappa: f64,
    },
}

/// Per-learner sequences `alpha_{i,t}, beta_t, gamma_t, xi_t, delta_{i,t}` as
/// pure functions of the round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    kind: ScheduleKind,
    inner_radii: Vec<f64>,
    /// `r_i^2 / (4 m p_i^2 F_{g_i}^2)` for the one-point family; unused otherwise.
    alpha_scale: Vec<f64>,
}

fn t_pow(t: usize, e: f64) -> f64 {
    (t as f64).powf(e)
}

impl Schedule {
    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    pub fn learners(&self) -> usize {
        self.inner_radii.len()
    }

    pub fn alpha(&self, i: usize, t: usize) -> f64 {
        match self.kind {
            ScheduleKind::OnePoint { theta1, .. } => self.alpha_scale[i] / t_pow(t, theta1),
            ScheduleKind::TwoPoint { kappa } => 1.0 / t_pow(t, kappa),
        }
    }

    pub fn beta(&self, t: usize) -> f64 {
        match self.kind {
            ScheduleKind::OnePoint { theta2, .. } => 2.0 / t_pow(t, theta2),
            ScheduleKind::TwoPoint { kappa } => 1.0 / t_pow(t, kappa),
        }
    }

    pub fn gamma(&self, t: usize) -> f64 {
        match self.kind {
            ScheduleKind::OnePoint { theta2, .. } => 1.0 / t_pow(t, 1.0 - theta2),
            ScheduleKind::TwoPoint { kappa } => 1.0 / t_pow(t, 1.0 - kappa),
        }
    }

    /// Shrinkage coefficient; `xi(0)` is defined as 1.
    pub fn xi(&self, t: usize) -> f64 {
        if t == 0 {
            return 1.0;
        }
        match self.kind {
            ScheduleKind::OnePoint { theta3, .. } => 1.0 / t_pow(t + 1, theta3),
            ScheduleKind::TwoPoint { .. } => 1.0 / (t + 1) as f64,
        }
    }

    pub fn delta(&self, i: usize, t: usize) -> f64 {
        self.inner_radii[i] * self.xi(t)
    }
}

fn check_sets(sets: &[ConvexSet]) -> Result<()> {
    if sets.is_empty() {
        Err(Error::Config("schedule needs at least one learner".into()))
    } else {
        Ok(())
    }
}

/// One-point schedules with `theta1 in (0,1)`, `theta2 in (0, theta1/3)`,
/// `theta3 in (theta2, (theta1 - theta2)/2]`.
pub fn make_schedule_theorem1(
    theta1: f64,
    theta2: f64,
    theta3: f64,
    constants: &ProblemConstants,
    sets: &[ConvexSet],
    m: usize,
) -> Result<Schedule> {
    check_sets(sets)?;
    if !(theta1 > 0.0 && theta1 < 1.0) {
        return Err(Error::Config(format!(
            "theta1 must lie in (0, 1), got {theta1}"
        )));
    }
    if !(theta2 > 0.0 && theta2 < theta1 / 3.0) {
        return Err(Error::Config(format!(
            "theta2 must lie in (0, theta1/3) = (0, {}), got {theta2}",
            theta1 / 3.0
        )));
    }
    let upper = (theta1 - theta2) / 2.0;
    if !(theta3 > theta2 && theta3 <= upper + RANGE_TOL) {
        return Err(Error::Config(format!(
            "theta3 must lie in (theta2, (theta1-theta2)/2] = ({theta2}, {upper}], got {theta3}"
        )));
    }
    if constants.learners() != sets.len() {
        return Err(Error::Config(
            "problem constants and sets disagree on the learner count".into(),
        ));
    }
    if m == 0 {
        return Err(Error::Config(
            "constraint dimension must be positive".into(),
        ));
    }
    let alpha_scale = sets
        .iter()
        .zip(&constants.constraint_bound)
        .map(|(s, &fg)| {
            let r = s.inner_radius();
            let p = s.dim() as f64;
            r * r / (4.0 * m as f64 * p * p * fg * fg)
        })
        .collect();
    Ok(Schedule {
        kind: ScheduleKind::OnePoint {
            theta1,
            theta2,
            theta3,
        },
        inner_radii: sets.iter().map(ConvexSet::inner_radius).collect(),
        alpha_scale,
    })
}

/// The preset `theta2 = 2 theta1 - 3/2`, `theta3 = theta1 - 1/2` for
/// `theta1 in (3/4, 5/6]`.
pub fn make_schedule_corollary1(
    theta1: f64,
    constants: &ProblemConstants,
    sets: &[ConvexSet],
    m: usize,
) -> Result<Schedule> {
    if !(theta1 > 0.75 && theta1 <= 5.0 / 6.0 + RANGE_TOL) {
        return Err(Error::Config(format!(
            "preset theta1 must lie in (3/4, 5/6], got {theta1}"
        )));
    }
    make_schedule_theorem1(theta1, 2.0 * theta1 - 1.5, theta1 - 0.5, constants, sets, m)
}

/// Two-point schedules with `kappa in (0, 1)`.
pub fn make_schedule_theorem2(kappa: f64, sets: &[ConvexSet]) -> Result<Schedule> {
    check_sets(sets)?;
    if !(kappa > 0.0 && kappa < 1.0) {
        return Err(Error::Config(format!(
            "kappa must lie in (0, 1), got {kappa}"
        )));
    }
    Ok(Schedule {
        kind: ScheduleKind::TwoPoint { kappa },
        inner_radii: sets.iter().map(ConvexSet::inner_radius).collect(),
        alpha_scale: vec![0.0; sets.len()],
    })
}
