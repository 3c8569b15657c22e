//! Per-learner state and the two round updates.

use nalgebra::DVector;

use super::schedule::Schedule;
use crate::error::{check_dim, Result};
use crate::estimators::{
    grad_one_point, grad_two_point, jacobian_estimate, sample_sphere, SpherePoint,
};
use crate::geometry::{clip_nonnegative, ConvexSet};
use crate::problem::BanditOracle;
use crate::rng::Stream;

/// Local iterates of one learner.
#[derive(Debug, Clone)]
pub struct LearnerState {
    pub id: usize,
    /// Unperturbed iterate in the shrunk set (one-point algorithm only).
    pub z: Option<DVector<f64>>,
    /// Decision played this round.
    pub x: DVector<f64>,
    /// Local dual variable, nonnegative.
    pub q: DVector<f64>,
    /// Consensus estimate of the average dual, nonnegative.
    pub q_tilde: DVector<f64>,
    /// Direction behind the latest exploration step. For the one-point
    /// algorithm this is the `u` in `x = z + delta u`; for the two-point
    /// algorithm it is the direction of the last pair of queries.
    pub u: Option<SpherePoint>,
    /// Exploration radius paired with `u`.
    pub delta: f64,
    rng: Stream,
}

impl LearnerState {
    fn base(id: usize, x: DVector<f64>, m: usize, rng: Stream) -> Self {
        Self {
            id,
            z: None,
            x,
            q: DVector::zeros(m),
            q_tilde: DVector::zeros(m),
            u: None,
            delta: 0.0,
            rng,
        }
    }

    /// Round-1 state of the one-point algorithm: `z_1` projected into the
    /// shrunk set, `x_1 = z_1 + delta_1 u_1`, `q_1 = 0`.
    pub fn init_one_point(
        id: usize,
        set: &ConvexSet,
        schedule: &Schedule,
        m: usize,
        z0: DVector<f64>,
        mut rng: Stream,
    ) -> Result<Self> {
        check_dim(set.dim(), z0.len())?;
        let z = set.shrink(schedule.xi(1))?.project(&z0)?;
        let u = sample_sphere(&mut rng, set.dim())?;
        let delta = schedule.delta(id, 1);
        let x = &z + u.as_vector() * delta;
        Ok(Self {
            z: Some(z),
            u: Some(u),
            delta,
            ..Self::base(id, x, m, rng)
        })
    }

    /// Round-1 state of the two-point algorithm: `x_1` projected into the
    /// shrunk set, `q_1 = 0`.
    pub fn init_two_point(
        id: usize,
        set: &ConvexSet,
        schedule: &Schedule,
        m: usize,
        x0: DVector<f64>,
        rng: Stream,
    ) -> Result<Self> {
        check_dim(set.dim(), x0.len())?;
        let x = set.shrink(schedule.xi(1))?.project(&x0)?;
        Ok(Self::base(id, x, m, rng))
    }

    /// One-point update for round `t >= 2`.
    ///
    /// Samples `f_{t-1}` and `g_{t-1}` at `x_{t-1}`, forms the direction
    /// from the `(delta, u)` pair that produced `x_{t-1}`, takes the projected
    /// primal step on `z`, re-perturbs, and updates the dual.
    pub fn alg1_round(
        &mut self,
        t: usize,
        consensus_input: &DVector<f64>,
        oracle: &mut BanditOracle<'_>,
        schedule: &Schedule,
        set: &ConvexSet,
    ) -> Result<()> {
        let i = self.id;
        check_dim(self.q.len(), consensus_input.len())?;
        let f_val = oracle.query_loss(i, t - 1, &self.x)?;
        let g_val = oracle.query_constraint(i, t - 1, &self.x)?;

        self.q_tilde = consensus_input.clone();

        let u_prev = self
            .u
            .as_ref()
            .expect("one-point learner always holds a direction");
        let jac = jacobian_estimate(&g_val, None, self.delta, u_prev)?;
        let direction = grad_one_point(f_val, self.delta, u_prev)? + jac.tr_mul(&self.q_tilde);

        let z_prev = self.z.as_ref().expect("one-point learner always holds z");
        let z = set
            .shrink(schedule.xi(t))?
            .project(&(z_prev - direction * schedule.alpha(i, t)))?;

        let u = sample_sphere(&mut self.rng, set.dim())?;
        let delta = schedule.delta(i, t);
        self.x = &z + u.as_vector() * delta;
        self.z = Some(z);
        self.u = Some(u);
        self.delta = delta;

        let (beta, gamma) = (schedule.beta(t), schedule.gamma(t));
        self.q = clip_nonnegative(&(&self.q_tilde * (1.0 - beta * gamma) + g_val * gamma));
        Ok(())
    }

    /// Two-point update for round `t >= 2`.
    ///
    /// Draws `u_{t-1}`, samples both functions at `x_{t-1} + delta_{t-1}
    /// u_{t-1}` and at `x_{t-1}`, takes the projected primal step, then uses
    /// the new decision in the linearized constraint that drives the dual.
    pub fn alg2_round(
        &mut self,
        t: usize,
        consensus_input: &DVector<f64>,
        oracle: &mut BanditOracle<'_>,
        schedule: &Schedule,
        set: &ConvexSet,
    ) -> Result<()> {
        let i = self.id;
        check_dim(self.q.len(), consensus_input.len())?;
        let u = sample_sphere(&mut self.rng, set.dim())?;
        let delta = schedule.delta(i, t - 1);
        let probe = &self.x + u.as_vector() * delta;
        let f_probe = oracle.query_loss(i, t - 1, &probe)?;
        let f_base = oracle.query_loss(i, t - 1, &self.x)?;
        let g_probe = oracle.query_constraint(i, t - 1, &probe)?;
        let g_base = oracle.query_constraint(i, t - 1, &self.x)?;

        self.q_tilde = consensus_input.clone();

        let jac = jacobian_estimate(&g_probe, Some(&g_base), delta, &u)?;
        let direction = grad_two_point(f_probe, f_base, delta, &u)? + jac.tr_mul(&self.q_tilde);
        let x_new = set
            .shrink(schedule.xi(t))?
            .project(&(&self.x - direction * schedule.alpha(i, t)))?;

        let linearized = &jac * (&x_new - &self.x) + g_base;
        let (beta, gamma) = (schedule.beta(t), schedule.gamma(t));
        self.q = clip_nonnegative(&(&self.q_tilde * (1.0 - gamma * beta) + linearized * gamma));

        self.x = x_new;
        self.u = Some(u);
        self.delta = delta;
        Ok(())
    }
}
