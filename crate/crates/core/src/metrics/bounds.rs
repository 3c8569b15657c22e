//! Constants of the expected regret and violation bounds, and the soundness
//! check of ensemble means against them.

use serde::{Deserialize, Serialize};

use crate::algorithms::{two_point_dual_constant, Schedule, ScheduleKind};
use crate::error::{check_dim, Error, Result};
use crate::geometry::ConvexSet;
use crate::network::contraction_rate;
use crate::problem::ProblemConstants;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OnePointConstants {
    pub theta1: f64,
    pub theta2: f64,
    pub theta3: f64,
    pub c0: f64,
    pub c1: f64,
    pub c21: f64,
    pub c2: f64,
    /// `max_i 8 m p_i^2 F_{g_i}^2 R_i / r_i^2`, the path-length coefficient.
    pub path_coefficient: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoPointConstants {
    pub kappa: f64,
    pub b1: f64,
    pub c0_hat: f64,
    pub c3: f64,
    pub c41: f64,
    pub c4: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundConstants {
    pub tau: f64,
    pub lambda: f64,
    pub r_max: f64,
    pub one_point: Option<OnePointConstants>,
    pub two_point: Option<TwoPointConstants>,
}

/// Regret and violation bounds at a horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundPair {
    pub regret: f64,
    pub violation: f64,
}

/// Evaluates the constant family matching the schedule.
pub fn compute_bound_constants(
    constants: &ProblemConstants,
    m: usize,
    sets: &[ConvexSet],
    w_min: f64,
    iota: usize,
    schedule: &Schedule,
) -> Result<BoundConstants> {
    let n = sets.len();
    check_dim(n, constants.learners())?;
    if n == 0 || m == 0 || iota == 0 || !(w_min > 0.0 && w_min <= 1.0) {
        return Err(Error::InvalidParameter(
            "bound constants need n, m, iota >= 1 and w in (0, 1]".into(),
        ));
    }
    let (nf, mf) = (n as f64, m as f64);
    let tau = (1.0 - w_min / (2.0 * nf * nf)).powi(-2);
    let lambda = contraction_rate(w_min, n, iota);
    let inner: Vec<f64> = sets.iter().map(ConvexSet::inner_radius).collect();
    let outer: Vec<f64> = sets.iter().map(ConvexSet::outer_radius).collect();
    let dims: Vec<usize> = sets.iter().map(ConvexSet::dim).collect();
    let r_max = outer.iter().copied().fold(0.0, f64::max);
    let fg = constants.constraint_bound_max();
    let sum_ff: f64 = constants.loss_bound.iter().sum();

    let mut out = BoundConstants {
        tau,
        lambda,
        r_max,
        one_point: None,
        two_point: None,
    };
    match schedule.kind() {
        ScheduleKind::OnePoint {
            theta1,
            theta2,
            theta3,
        } => {
            let c0 = 6.0 * mf * nf * nf * fg * fg * tau / (1.0 - lambda) + 2.0 * mf * nf * fg * fg;
            let mut c1 = c0 / theta2;
            let mut ratio_max = 0.0f64;
            let mut path_coefficient = 0.0f64;
            for i in 0..n {
                let (r, big_r, p) = (inner[i], outer[i], dims[i] as f64);
                let (ff, fgi) = (constants.loss_bound[i], constants.constraint_bound[i]);
                let (gf, gg) = (
                    constants.loss_grad_bound[i],
                    constants.constraint_grad_bound[i],
                );
                let explore = mf * p * p * fgi * fgi * big_r * big_r / (r * r);
                c1 += mf * fg * gg * (2.0 * r + big_r) / (1.0 - theta3 + theta2)
                    + gf * (2.0 * r + big_r) / (1.0 - theta3)
                    + 8.0 * explore
                    + ff * ff / (4.0 * mf * fgi * fgi * (1.0 - theta1 + 2.0 * theta3))
                    + 16.0 * explore;
                ratio_max = ratio_max.max(ff * ff / (fgi * fgi * (1.0 - theta1 + 2.0 * theta3)));
                path_coefficient =
                    path_coefficient.max(8.0 * mf * p * p * fgi * fgi * big_r / (r * r));
            }
            let c21 = 2.0 * nf * (1.0 + ratio_max + 1.0 / (1.0 - theta2));
            let c2 = c21 * (2.0 * sum_ff + c1);
            out.one_point = Some(OnePointConstants {
                theta1,
                theta2,
                theta3,
                c0,
                c1,
                c21,
                c2,
                path_coefficient,
            });
        }
        ScheduleKind::TwoPoint { kappa } => {
            let sm = mf.sqrt();
            let b1 = two_point_dual_constant(constants, &dims, &outer, m);
            let c0_hat = 6.0 * nf * nf * sm * tau * b1 * fg / (1.0 - lambda) + 2.0 * nf * b1 * b1;
            let mut c3 = c0_hat / kappa;
            let mut c41 = 0.0;
            for i in 0..n {
                let (r, big_r, p) = (inner[i], outer[i], dims[i] as f64);
                let (gf, gg) = (
                    constants.loss_grad_bound[i],
                    constants.constraint_grad_bound[i],
                );
                c3 += 2.0 * gf * (r + big_r)
                    + 8.0 * big_r * big_r
                    + 2.0 * sm * b1 * gg * big_r / kappa
                    + p * p * gf * gf / (1.0 - kappa);
                c41 += 2.0 * ((2.0 * mf * p * p * gg * gg + 1.0) / (1.0 - kappa) + 1.0);
            }
            let c4 = c41 * (2.0 * sum_ff + c3);
            out.two_point = Some(TwoPointConstants {
                kappa,
                b1,
                c0_hat,
                c3,
                c41,
                c4,
            });
        }
    }
    Ok(out)
}

fn one_point(bc: &BoundConstants) -> Result<&OnePointConstants> {
    bc.one_point
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("no one-point bound constants".into()))
}

fn two_point(bc: &BoundConstants) -> Result<&TwoPointConstants> {
    bc.two_point
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("no two-point bound constants".into()))
}

/// `C_1 T^theta1` and `sqrt(C_2) T^(7/4 - theta1)`; static comparator, preset
/// schedule.
pub fn corollary1_bounds(bc: &BoundConstants, rounds: usize) -> Result<BoundPair> {
    let c = one_point(bc)?;
    let t = rounds as f64;
    Ok(BoundPair {
        regret: c.c1 * t.powf(c.theta1),
        violation: c.c2.sqrt() * t.powf(1.75 - c.theta1),
    })
}

/// General one-point bounds for a comparator with path length `path`. The
/// violation bound uses `C_2`.
pub fn theorem1_bounds(bc: &BoundConstants, rounds: usize, path: f64) -> Result<BoundPair> {
    let c = one_point(bc)?;
    let t = rounds as f64;
    let exponent = c
        .theta1
        .max(1.0 - c.theta1 + 2.0 * c.theta3)
        .max(1.0 - c.theta3 + c.theta2);
    Ok(BoundPair {
        regret: c.c2 * t.powf(exponent) + c.path_coefficient * t.powf(c.theta1) * path,
        violation: c.c2.sqrt() * t.powf(1.0 - c.theta2 / 2.0),
    })
}

/// `C_3 T^max(kappa, 1-kappa)` and `sqrt(C_4) T^(1 - kappa/2)`.
pub fn corollary2_bounds(bc: &BoundConstants, rounds: usize) -> Result<BoundPair> {
    let c = two_point(bc)?;
    let t = rounds as f64;
    Ok(BoundPair {
        regret: c.c3 * t.powf(c.kappa.max(1.0 - c.kappa)),
        violation: c.c4.sqrt() * t.powf(1.0 - c.kappa / 2.0),
    })
}

pub fn theorem2_bounds(bc: &BoundConstants, rounds: usize, path: f64) -> Result<BoundPair> {
    let c = two_point(bc)?;
    let t = rounds as f64;
    let base = corollary2_bounds(bc, rounds)?;
    Ok(BoundPair {
        regret: base.regret + 2.0 * bc.r_max * t.powf(c.kappa) * path,
        ..base
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub members: usize,
    pub mean_regret: f64,
    pub regret_bound: f64,
    /// `bound / |mean|`; infinite when the mean is zero.
    pub regret_slack: f64,
    pub regret_ok: bool,
    pub mean_violation: f64,
    pub violation_bound: f64,
    pub violation_slack: f64,
    pub violation_ok: bool,
}

impl BoundCheck {
    pub fn passed(&self) -> bool {
        self.regret_ok && self.violation_ok
    }
}

/// Compares ensemble means of terminal regret and violation with `bounds`.
pub fn bound_check(regrets: &[f64], violations: &[f64], bounds: BoundPair) -> Result<BoundCheck> {
    check_dim(regrets.len(), violations.len())?;
    if regrets.len() < 2 {
        return Err(Error::InvalidParameter(
            "bound checks need an ensemble of at least two runs".into(),
        ));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (mr, mv) = (mean(regrets), mean(violations));
    Ok(BoundCheck {
        members: regrets.len(),
        mean_regret: mr,
        regret_bound: bounds.regret,
        regret_slack: bounds.regret / mr.abs(),
        regret_ok: mr <= bounds.regret,
        mean_violation: mv,
        violation_bound: bounds.violation,
        violation_slack: bounds.violation / mv.abs(),
        violation_ok: mv <= bounds.violation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algorithms::{make_schedule_corollary1, make_schedule_theorem2};

    fn setup(n: usize) -> (ProblemConstants, Vec<ConvexSet>) {
        let sets = vec![ConvexSet::cube(10.0, 6).unwrap(); n];
        let c = ProblemConstants {
            loss_bound: vec![3.0; n],
            constraint_bound: vec![2.0; n],
            loss_grad_bound: vec![1.5; n],
            constraint_grad_bound: vec![0.5; n],
        };
        (c, sets)
    }

    #[test]
    fn tau_lambda_single_learner() {
        let (c, sets) = setup(1);
        let s = make_schedule_theorem2(0.5, &sets).unwrap();
        let bc = compute_bound_constants(&c, 1, &sets, 1.0, 1, &s).unwrap();
        assert!((bc.tau - 4.0).abs() < 1e-12);
        assert!((bc.lambda - 0.5).abs() < 1e-12);
    }

    #[test]
    fn ranges_over_valid_graph_parameters() {
        for n in [1usize, 2, 5, 50] {
            let (c, sets) = setup(n);
            let s = make_schedule_theorem2(0.5, &sets).unwrap();
            for k in 1..=10 {
                let w = k as f64 / 10.0;
                for iota in [1usize, 2, 7] {
                    let bc = compute_bound_constants(&c, 1, &sets, w, iota, &s).unwrap();
                    assert!(bc.tau > 1.0 && bc.lambda > 0.0 && bc.lambda < 1.0);
                }
            }
        }
    }

    #[test]
    fn constant_ordering_and_positivity() {
        let (c, sets) = setup(4);
        for kappa in [0.1, 0.5, 0.9] {
            let s = make_schedule_theorem2(kappa, &sets).unwrap();
            let t = compute_bound_constants(&c, 2, &sets, 0.25, 2, &s)
                .unwrap()
                .two_point
                .unwrap();
            assert!(t.c4 > t.c3 && t.c3 > 0.0 && t.c4.is_finite());
            assert!(t.b1 > 0.0 && t.c0_hat > 0.0 && t.c41 > 0.0);
        }
        let s = make_schedule_corollary1(5.0 / 6.0, &c, &sets, 2).unwrap();
        let o = compute_bound_constants(&c, 2, &sets, 0.25, 2, &s)
            .unwrap()
            .one_point
            .unwrap();
        assert!(o.c2 > o.c1 && o.c1 > o.c0 / o.theta2 && o.c0 > 0.0 && o.c2.is_finite());
    }

    #[test]
    fn single_learner_one_point_by_hand() {
        let sets = vec![ConvexSet::cube(1.0, 1).unwrap()];
        let c = ProblemConstants {
            loss_bound: vec![1.0],
            constraint_bound: vec![1.0],
            loss_grad_bound: vec![1.0],
            constraint_grad_bound: vec![1.0],
        };
        let s = make_schedule_corollary1(5.0 / 6.0, &c, &sets, 1).unwrap();
        let o = compute_bound_constants(&c, 1, &sets, 1.0, 1, &s)
            .unwrap()
            .one_point
            .unwrap();
        // tau = 4, lambda = 1/2
        assert!((o.c0 - (6.0 * 4.0 / 0.5 + 2.0)).abs() < 1e-9);
        let (t1, t2, t3) = (5.0 / 6.0, 1.0 / 6.0, 1.0 / 3.0);
        let c1 = 3.0 / (1.0 - t3 + t2)
            + 3.0 / (1.0 - t3)
            + 8.0
            + 1.0 / (4.0 * (1.0 - t1 + 2.0 * t3))
            + 16.0
            + o.c0 / t2;
        assert!((o.c1 - c1).abs() < 1e-9);
        let c21 = 2.0 * (1.0 + 1.0 / (1.0 - t1 + 2.0 * t3) + 1.0 / (1.0 - t2));
        assert!((o.c21 - c21).abs() < 1e-12);
        assert!((o.c2 - c21 * (2.0 + c1)).abs() < 1e-9);
    }

    #[test]
    fn bound_forms() {
        let (c, sets) = setup(2);
        let s = make_schedule_theorem2(0.5, &sets).unwrap();
        let bc = compute_bound_constants(&c, 1, &sets, 0.5, 1, &s).unwrap();
        let tp = bc.two_point.unwrap();
        let b = corollary2_bounds(&bc, 100).unwrap();
        assert!((b.regret - tp.c3 * 10.0).abs() < 1e-6 * b.regret);
        assert!((b.violation - tp.c4.sqrt() * 100f64.powf(0.75)).abs() < 1e-9 * b.violation);
        let th = theorem2_bounds(&bc, 100, 3.0).unwrap();
        assert!((th.regret - b.regret - 2.0 * bc.r_max * 10.0 * 3.0).abs() < 1e-6 * th.regret);
        assert!(corollary1_bounds(&bc, 100).is_err());
    }

    #[test]
    fn check_reports_slack() {
        let r = bound_check(
            &[1.0, 3.0],
            &[0.5, 0.5],
            BoundPair {
                regret: 10.0,
                violation: 0.25,
            },
        )
        .unwrap();
        assert!(r.regret_ok && !r.violation_ok && !r.passed());
        assert_eq!(r.regret_slack, 5.0);
        assert!(bound_check(
            &[1.0],
            &[1.0],
            BoundPair {
                regret: 1.0,
                violation: 1.0
            }
        )
        .is_err());
    }
}
