//! Regret, constraint violation, comparator path length, offline comparator
//! solvers, and the theoretical bound constants.

mod blockqp;
mod bounds;
mod solver;

pub use bounds::{
    bound_check, compute_bound_constants, corollary1_bounds, corollary2_bounds, theorem1_bounds,
    theorem2_bounds, BoundCheck, BoundConstants, BoundPair, OnePointConstants, TwoPointConstants,
};
pub use solver::{
    solve_dynamic_comparator, solve_static_comparator, Certificate, QuadForm, SeparableQuadratic,
    Solution, SolverConfig,
};

use nalgebra::DVector;

use crate::error::{check_dim, Error, Result};
use crate::geometry::CONTAINMENT_TOL;
use crate::problem::Adversary;

/// Decisions and realized global values of one run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    /// `decisions[t-1][i]` is `x_{i,t}`.
    pub decisions: Vec<Vec<DVector<f64>>>,
    /// `f_t(x_t)`.
    pub losses: Vec<f64>,
    /// `g_t(x_t)`.
    pub constraints: Vec<DVector<f64>>,
    /// `sum_{s<=t} g_s(x_s)`.
    pub cumulative_constraint: Vec<DVector<f64>>,
    /// `max_i |q_{i,t}|`.
    pub max_dual_norm: Vec<f64>,
    pub loss_queries: u64,
    pub constraint_queries: u64,
}

impl Trajectory {
    pub fn with_capacity(rounds: usize, _m: usize) -> Self {
        Self {
            decisions: Vec::with_capacity(rounds),
            losses: Vec::with_capacity(rounds),
            constraints: Vec::with_capacity(rounds),
            cumulative_constraint: Vec::with_capacity(rounds),
            max_dual_norm: Vec::with_capacity(rounds),
            ..Self::default()
        }
    }

    pub fn rounds(&self) -> usize {
        self.losses.len()
    }

    /// Appends round `self.rounds() + 1`, evaluating its functions exactly.
    pub fn push(
        &mut self,
        adversary: &dyn Adversary,
        decisions: Vec<DVector<f64>>,
        max_dual_norm: f64,
    ) {
        let t = self.rounds() + 1;
        let funcs = adversary.round(t);
        let g = funcs.global_constraint(&decisions);
        let cumulative = match self.cumulative_constraint.last() {
            Some(prev) => prev + &g,
            None => g.clone(),
        };
        self.losses.push(funcs.global_loss(&decisions));
        self.constraints.push(g);
        self.cumulative_constraint.push(cumulative);
        self.decisions.push(decisions);
        self.max_dual_norm.push(max_dual_norm);
    }

    /// Drops the stored decisions, keeping the per-round values.
    pub fn discard_decisions(&mut self) {
        self.decisions = Vec::new();
    }
}

/// Comparator sequence for regret.
#[derive(Debug, Clone, PartialEq)]
pub enum Comparator {
    /// One decision per learner, played every round.
    Static(Vec<DVector<f64>>),
    /// `points[t-1][i]` is `y_{i,t}`.
    Dynamic(Vec<Vec<DVector<f64>>>),
}

impl Comparator {
    pub fn at(&self, t: usize) -> &[DVector<f64>] {
        match self {
            Comparator::Static(y) => y,
            Comparator::Dynamic(ys) => &ys[t - 1],
        }
    }

    fn check(&self, adversary: &dyn Adversary, rounds: usize) -> Result<()> {
        let sets = adversary.sets();
        let rows: Vec<&[DVector<f64>]> = match self {
            Comparator::Static(y) => vec![y],
            Comparator::Dynamic(ys) => {
                if ys.len() < rounds {
                    return Err(Error::DimensionMismatch {
                        expected: rounds,
                        actual: ys.len(),
                    });
                }
                ys.iter().take(rounds).map(Vec::as_slice).collect()
            }
        };
        for row in rows {
            check_dim(sets.len(), row.len())?;
            for (i, (y, set)) in row.iter().zip(sets).enumerate() {
                let excess = set.excess(y)?;
                if excess > CONTAINMENT_TOL {
                    return Err(Error::InvalidParameter(format!(
                        "comparator point of learner {i} lies {excess:e} outside its set"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// `sum_t f_t(y_t)` for every prefix `t = 1..=rounds`.
pub fn comparator_losses(
    adversary: &dyn Adversary,
    comparator: &Comparator,
    rounds: usize,
) -> Result<Vec<f64>> {
    comparator.check(adversary, rounds)?;
    let mut acc = 0.0;
    Ok((1..=rounds)
        .map(|t| {
            acc += adversary.round(t).global_loss(comparator.at(t));
            acc
        })
        .collect())
}

/// Regret to date after every round.
pub fn regret_series(
    traj: &Trajectory,
    adversary: &dyn Adversary,
    comparator: &Comparator,
) -> Result<Vec<f64>> {
    let reference = comparator_losses(adversary, comparator, traj.rounds())?;
    let mut acc = 0.0;
    Ok(traj
        .losses
        .iter()
        .zip(reference)
        .map(|(&f, r)| {
            acc += f;
            acc - r
        })
        .collect())
}

/// `sum_t f_t(x_t) - sum_t f_t(y_t)`.
pub fn regret(
    traj: &Trajectory,
    adversary: &dyn Adversary,
    comparator: &Comparator,
) -> Result<f64> {
    Ok(regret_series(traj, adversary, comparator)?
        .last()
        .copied()
        .unwrap_or(0.0))
}

fn clipped_norm(v: &DVector<f64>) -> f64 {
    v.iter().map(|&x| x.max(0.0).powi(2)).sum::<f64>().sqrt()
}

/// `|[sum_{s<=t} g_s(x_s)]_+|` after every round.
pub fn violation_series(traj: &Trajectory) -> Vec<f64> {
    traj.cumulative_constraint
        .iter()
        .map(clipped_norm)
        .collect()
}

/// `|[sum_t g_t(x_t)]_+|`.
pub fn violation(traj: &Trajectory) -> f64 {
    traj.cumulative_constraint.last().map_or(0.0, clipped_norm)
}

/// `|sum_t [g_t(x_t)]_+|`, the per-round-clipped variant; never below
/// [`violation`].
pub fn clipped_violation(traj: &Trajectory) -> f64 {
    let m = traj.constraints.first().map_or(0, DVector::len);
    let sum = traj
        .constraints
        .iter()
        .fold(DVector::zeros(m), |acc: DVector<f64>, g| {
            acc + g.map(|v| v.max(0.0))
        });
    sum.norm()
}

/// `V(y) = sum_t sum_i |y_{i,t+1} - y_{i,t}|`.
pub fn path_length(sequence: &[Vec<DVector<f64>>]) -> f64 {
    sequence
        .windows(2)
        .map(|w| {
            w[0].iter()
                .zip(&w[1])
                .map(|(a, b)| (b - a).norm())
                .sum::<f64>()
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ConvexSet;
    use crate::problem::{FixedAdversary, QuadraticFunction, RoundFunctions};

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    fn linear_scalar() -> FixedAdversary {
        let f = QuadraticFunction::affine(v(&[1.0]), 0.0);
        let g = QuadraticFunction::constant(1, -1.0);
        FixedAdversary::new(
            vec![ConvexSet::cube(1.0, 1).unwrap()],
            RoundFunctions {
                losses: vec![f],
                constraints: vec![vec![g]],
            },
        )
        .unwrap()
    }

    fn traj_from(adv: &dyn Adversary, xs: &[f64]) -> Trajectory {
        let mut tr = Trajectory::with_capacity(xs.len(), 1);
        for &x in xs {
            tr.push(adv, vec![v(&[x])], 0.0);
        }
        tr
    }

    #[test]
    fn regret_against_itself_is_zero() {
        let adv = linear_scalar();
        let tr = traj_from(&adv, &[0.3, -0.2, 0.9]);
        let cmp = Comparator::Dynamic(tr.decisions.clone());
        assert_eq!(regret(&tr, &adv, &cmp).unwrap(), 0.0);
    }

    #[test]
    fn single_round_regret_arithmetic() {
        let adv = linear_scalar();
        let tr = traj_from(&adv, &[0.0]);
        assert_eq!(
            regret(&tr, &adv, &Comparator::Static(vec![v(&[-1.0])])).unwrap(),
            1.0
        );
    }

    #[test]
    fn zero_loss_gives_zero_regret() {
        let adv = FixedAdversary::new(
            vec![ConvexSet::cube(1.0, 2).unwrap()],
            RoundFunctions {
                losses: vec![QuadraticFunction::zero(2)],
                constraints: vec![vec![QuadraticFunction::constant(2, -1.0)]],
            },
        )
        .unwrap();
        let mut tr = Trajectory::default();
        tr.push(&adv, vec![v(&[0.5, 0.5])], 0.0);
        tr.push(&adv, vec![v(&[-0.5, 0.1])], 0.0);
        assert_eq!(
            regret(&tr, &adv, &Comparator::Static(vec![v(&[1.0, -1.0])])).unwrap(),
            0.0
        );
    }

    #[test]
    fn infeasible_comparator_is_rejected() {
        let adv = linear_scalar();
        let tr = traj_from(&adv, &[0.0]);
        assert!(regret(&tr, &adv, &Comparator::Static(vec![v(&[-1.5])])).is_err());
    }

    #[test]
    fn violation_examples() {
        let mut tr = Trajectory::default();
        tr.cumulative_constraint.push(v(&[3.0, -4.0]));
        assert_eq!(violation(&tr), 3.0);

        let adv = FixedAdversary::new(
            vec![ConvexSet::cube(1.0, 1).unwrap()],
            RoundFunctions {
                losses: vec![QuadraticFunction::zero(1)],
                constraints: vec![vec![QuadraticFunction::affine(v(&[1.0]), 0.0)]],
            },
        )
        .unwrap();
        let tr = traj_from(&adv, &[1.0, -1.0]);
        assert_eq!(violation_series(&tr), vec![1.0, 0.0]);
        assert_eq!(clipped_violation(&tr), 1.0);

        let tr = traj_from(&adv, &[-0.5, -0.2]);
        assert_eq!(violation(&tr), 0.0);
    }

    #[test]
    fn cumulative_matches_running_sum() {
        let adv = linear_scalar();
        let tr = traj_from(&adv, &[0.1; 50]);
        let mut acc = 0.0;
        for (g, c) in tr.constraints.iter().zip(&tr.cumulative_constraint) {
            acc += g[0];
            assert!((acc - c[0]).abs() < 1e-9);
        }
    }

    #[test]
    fn path_length_examples() {
        assert_eq!(path_length(&vec![vec![v(&[1.0, 2.0])]; 4]), 0.0);
        assert_eq!(
            path_length(&[vec![v(&[0.0, 0.0])], vec![v(&[3.0, 4.0])]]),
            5.0
        );
        assert_eq!(path_length(&[vec![v(&[7.0])]]), 0.0);
    }
}
