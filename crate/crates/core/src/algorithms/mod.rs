//! The one-point and two-point distributed bandit learners and the
//! synchronous round simulator that drives them.

mod learner;
mod schedule;

pub use learner::LearnerState;
pub use schedule::{
    make_schedule_corollary1, make_schedule_theorem1, make_schedule_theorem2, Schedule,
    ScheduleKind,
};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::geometry::CONTAINMENT_TOL;
use crate::metrics::Trajectory;
use crate::network::{consensus_step, GraphSchedule};
use crate::problem::{Adversary, BanditOracle, ProblemConstants};
use crate::rng::{self, tag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    OnePoint,
    TwoPoint,
}

impl Algorithm {
    /// Function evaluations allowed per learner, round, and function.
    pub fn query_budget(self) -> u32 {
        match self {
            Algorithm::OnePoint => 1,
            Algorithm::TwoPoint => 2,
        }
    }

    fn matches(self, schedule: &Schedule) -> bool {
        matches!(
            (self, schedule.kind()),
            (Algorithm::OnePoint, ScheduleKind::OnePoint { .. })
                | (Algorithm::TwoPoint, ScheduleKind::TwoPoint { .. })
        )
    }
}

/// `B_1 = sqrt(m) F_g + sqrt(m) p G_g R_max` with `p = sum_i p_i`.
pub fn two_point_dual_constant(
    constants: &ProblemConstants,
    dims: &[usize],
    outer_radii: &[f64],
    m: usize,
) -> f64 {
    let sm = (m as f64).sqrt();
    let p: usize = dims.iter().sum();
    let r_max = outer_radii.iter().copied().fold(0.0, f64::max);
    sm * constants.constraint_bound_max()
        + sm * p as f64 * constants.constraint_grad_bound_max() * r_max
}

/// Numerator `D` of the dual bound `|q_{i,t}| <= D / beta_t`: `sqrt(m) F_g`
/// for the one-point algorithm, `B_1` for the two-point algorithm.
pub fn dual_bound_constant(
    algorithm: Algorithm,
    adversary: &dyn Adversary,
    constants: &ProblemConstants,
) -> f64 {
    let m = adversary.constraint_dim();
    match algorithm {
        Algorithm::OnePoint => (m as f64).sqrt() * constants.constraint_bound_max(),
        Algorithm::TwoPoint => {
            let radii: Vec<f64> = adversary.sets().iter().map(|s| s.outer_radius()).collect();
            two_point_dual_constant(constants, &adversary.dims(), &radii, m)
        }
    }
}

/// Invariant checks performed during a run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunAudit {
    pub feasibility_checks: u64,
    pub dual_checks: u64,
    /// Largest observed `|q_{i,t}| beta_t / D`; at most 1 when the bound holds.
    pub max_dual_ratio: f64,
}

/// Everything a run needs besides the adversary and the graph.
#[derive(Debug, Clone)]
pub struct SimulationSetup<'a> {
    pub algorithm: Algorithm,
    pub schedule: &'a Schedule,
    pub constants: &'a ProblemConstants,
    pub rounds: usize,
    /// Seed of the learners' exploration streams, keyed further by learner id.
    pub learner_seed: u64,
    /// Initial `z_{i,1}` (one-point) or `x_{i,1}` (two-point); origin if absent.
    pub initial: Option<Vec<DVector<f64>>>,
}

/// Runs one realization for `rounds` rounds.
///
/// Every played point is checked against its set and every dual against its
/// `D / beta_t` bound; a violation aborts the run with [`Error::Invariant`].
pub fn simulate(
    adversary: &dyn Adversary,
    graph: &GraphSchedule,
    setup: &SimulationSetup<'_>,
) -> Result<(Trajectory, RunAudit)> {
    let SimulationSetup {
        algorithm,
        schedule,
        constants,
        rounds,
        learner_seed,
        ..
    } = *setup;
    let sets = adversary.sets().to_vec();
    let n = sets.len();
    let m = adversary.constraint_dim();
    check_dim(n, graph.n)?;
    check_dim(n, schedule.learners())?;
    if rounds == 0 {
        return Err(Error::Config("need at least one round".into()));
    }
    if !algorithm.matches(schedule) {
        return Err(Error::Config(format!(
            "schedule {:?} does not belong to {algorithm:?}",
            schedule.kind()
        )));
    }

    let initial = match &setup.initial {
        Some(v) => {
            check_dim(n, v.len())?;
            v.clone()
        }
        None => sets.iter().map(|s| DVector::zeros(s.dim())).collect(),
    };
    let mut learners = initial
        .into_iter()
        .enumerate()
        .map(|(i, x0)| {
            let stream = rng::stream(learner_seed, &[tag::LEARNER, i as u64]);
            match algorithm {
                Algorithm::OnePoint => {
                    LearnerState::init_one_point(i, &sets[i], schedule, m, x0, stream)
                }
                Algorithm::TwoPoint => {
                    LearnerState::init_two_point(i, &sets[i], schedule, m, x0, stream)
                }
            }
        })
        .collect::<Result<Vec<_>>>()?;

    let dual_numerator = dual_bound_constant(algorithm, adversary, constants);
    let mut audit = RunAudit::default();
    let mut oracle = BanditOracle::new(adversary, algorithm.query_budget());
    let mut trajectory = Trajectory::with_capacity(rounds, m);

    let check_round = |t: usize,
                       learners: &[LearnerState],
                       audit: &mut RunAudit|
     -> Result<Vec<DVector<f64>>> {
        let beta = schedule.beta(t);
        for (l, set) in learners.iter().zip(&sets) {
            audit.feasibility_checks += 1;
            let excess = set.excess(&l.x)?;
            if excess > CONTAINMENT_TOL {
                return Err(Error::Invariant {
                    round: t,
                    message: format!("learner {} played a point {excess:e} outside its set", l.id),
                });
            }
            if l.q.iter().chain(l.q_tilde.iter()).any(|&v| v < 0.0) {
                return Err(Error::Invariant {
                    round: t,
                    message: format!("learner {} has a negative dual", l.id),
                });
            }
            let norm = l.q.norm();
            audit.dual_checks += 1;
            let ratio = norm * beta / dual_numerator;
            audit.max_dual_ratio = audit.max_dual_ratio.max(ratio);
            if ratio > 1.0 + 1e-9 {
                return Err(Error::Invariant {
                    round: t,
                    message: format!(
                        "learner {} dual norm {norm} exceeds {dual_numerator}/beta_t",
                        l.id
                    ),
                });
            }
        }
        Ok(learners.iter().map(|l| l.x.clone()).collect())
    };

    let decisions = check_round(1, &learners, &mut audit)?;
    trajectory.push(adversary, decisions, 0.0);

    for t in 2..=rounds {
        let w = graph.generate(t - 1);
        let duals = DMatrix::from_fn(n, m, |i, j| learners[i].q[j]);
        let mixed = consensus_step(&w, &duals)?;
        for (i, learner) in learners.iter_mut().enumerate() {
            let input = mixed.row(i).transpose();
            match algorithm {
                Algorithm::OnePoint => {
                    learner.alg1_round(t, &input, &mut oracle, schedule, &sets[i])?
                }
                Algorithm::TwoPoint => {
                    learner.alg2_round(t, &input, &mut oracle, schedule, &sets[i])?
                }
            }
        }
        let decisions = check_round(t, &learners, &mut audit)?;
        let max_dual = learners.iter().map(|l| l.q.norm()).fold(0.0, f64::max);
        trajectory.push(adversary, decisions, max_dual);
    }

    trajectory.loss_queries = oracle.loss_queries();
    trajectory.constraint_queries = oracle.constraint_queries();
    Ok((trajectory, audit))
}
