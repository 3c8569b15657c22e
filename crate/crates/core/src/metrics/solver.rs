//! Offline solver for separable convex quadratic programs with coupled
//! quadratic inequality constraints over products of boxes and balls.
//!
//! The method is an augmented Lagrangian with projected accelerated gradient
//! inner solves. Constraints enter a working set only once they are nearly
//! active, which keeps the static comparator (one constraint per round and
//! component) cheap when most of them are slack.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::blockqp;
use crate::error::{check_dim, Error, Result};
use crate::geometry::ConvexSet;
use crate::problem::{Adversary, QuadraticFunction, RoundFunctions, MIN_CONSTANT};

/// `x' G x + <linear, x> + constant` with `G` symmetric positive semidefinite.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadForm {
    pub gram: DMatrix<f64>,
    pub linear: DVector<f64>,
    pub constant: f64,
}

impl QuadForm {
    pub fn zero(dim: usize) -> Self {
        Self {
            gram: DMatrix::zeros(dim, dim),
            linear: DVector::zeros(dim),
            constant: 0.0,
        }
    }

    pub fn from_function(f: &QuadraticFunction) -> Self {
        Self {
            gram: f.gram(),
            linear: f.linear().clone(),
            constant: f.constant_term(),
        }
    }

    pub fn accumulate(&mut self, f: &QuadraticFunction) {
        self.gram += f.gram();
        self.linear += f.linear();
        self.constant += f.constant_term();
    }

    pub fn dim(&self) -> usize {
        self.linear.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let p = x.len();
        let mut acc = self.constant;
        for (j, &xj) in x.iter().enumerate() {
            let col = &self.gram.as_slice()[j * p..(j + 1) * p];
            let gx: f64 = col.iter().zip(x).map(|(a, b)| a * b).sum();
            acc += xj * (gx + self.linear[j]);
        }
        acc
    }

    /// `out += weight * (2 G x + linear)`.
    fn add_gradient(&self, x: &[f64], weight: f64, out: &mut [f64]) {
        let p = x.len();
        for (j, o) in out.iter_mut().enumerate().take(p) {
            let col = &self.gram.as_slice()[j * p..(j + 1) * p];
            let gx: f64 = col.iter().zip(x).map(|(a, b)| a * b).sum();
            *o += weight * (2.0 * gx + self.linear[j]);
        }
    }

    /// Crude bound on `|value|` over the ball of radius `radius`.
    fn magnitude(&self, radius: f64) -> f64 {
        self.gram.norm() * radius * radius + self.linear.norm() * radius + self.constant.abs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Largest accepted constraint violation, relative to each constraint's
    /// magnitude over the decision set.
    pub feasibility_tolerance: f64,
    /// Target for the normalized KKT residuals.
    pub kkt_tolerance: f64,
    /// Budget of inner gradient iterations across the whole solve.
    pub max_iterations: usize,
    pub max_outer: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            feasibility_tolerance: 1e-4,
            kkt_tolerance: 1e-8,
            max_iterations: 100_000,
            max_outer: 80,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub objective: f64,
    /// `max_k [h_k(x)]_+` in the constraints' own units.
    pub max_violation: f64,
    /// The same, divided by each constraint's magnitude.
    pub normalized_violation: f64,
    pub iterations: usize,
    pub outer_iterations: usize,
    pub working_set: usize,
    /// Whether the KKT target was met before the budget ran out.
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub x: Vec<DVector<f64>>,
    pub certificate: Certificate,
}

/// `min sum_i f_i(x_i)` s.t. `sum_i h_{k,i}(x_i) <= 0` for every `k`,
/// `x_i in X_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparableQuadratic {
    sets: Vec<ConvexSet>,
    offsets: Vec<usize>,
    objective: Vec<QuadForm>,
    /// `constraints[k][i]`.
    constraints: Vec<Vec<QuadForm>>,
    objective_scale: f64,
    constraint_scales: Vec<f64>,
}

impl SeparableQuadratic {
    pub fn new(
        sets: Vec<ConvexSet>,
        objective: Vec<QuadForm>,
        constraints: Vec<Vec<QuadForm>>,
    ) -> Result<Self> {
        check_dim(sets.len(), objective.len())?;
        for (set, f) in sets.iter().zip(&objective) {
            check_dim(set.dim(), f.dim())?;
        }
        for row in &constraints {
            check_dim(sets.len(), row.len())?;
            for (set, h) in sets.iter().zip(row) {
                check_dim(set.dim(), h.dim())?;
            }
        }
        let mut offsets = vec![0];
        for s in &sets {
            offsets.push(offsets.last().unwrap() + s.dim());
        }
        let radii: Vec<f64> = sets.iter().map(ConvexSet::outer_radius).collect();
        let magnitude = |forms: &[QuadForm]| -> f64 {
            forms
                .iter()
                .zip(&radii)
                .map(|(f, &r)| f.magnitude(r))
                .sum::<f64>()
                .max(MIN_CONSTANT)
        };
        let objective_scale = magnitude(&objective);
        let constraint_scales = constraints.iter().map(|row| magnitude(row)).collect();
        Ok(Self {
            sets,
            offsets,
            objective,
            constraints,
            objective_scale,
            constraint_scales,
        })
    }

    /// The per-round problem `min f_t(x)` s.t. `g_t(x) <= 0`.
    pub fn from_round(sets: &[ConvexSet], funcs: &RoundFunctions) -> Result<Self> {
        check_dim(sets.len(), funcs.learners())?;
        let m = funcs.constraints.first().map_or(0, Vec::len);
        let objective = funcs.losses.iter().map(QuadForm::from_function).collect();
        let constraints = (0..m)
            .map(|k| {
                funcs
                    .constraints
                    .iter()
                    .map(|row| QuadForm::from_function(&row[k]))
                    .collect()
            })
            .collect();
        Self::new(sets.to_vec(), objective, constraints)
    }

    /// `min sum_t f_t(x)` s.t. `g_t(x) <= 0` for every `t <= rounds`.
    pub fn static_problem(adversary: &dyn Adversary, rounds: usize) -> Result<Self> {
        let sets = adversary.sets().to_vec();
        let m = adversary.constraint_dim();
        let mut objective: Vec<QuadForm> = sets.iter().map(|s| QuadForm::zero(s.dim())).collect();
        let mut constraints = Vec::with_capacity(rounds * m);
        for t in 1..=rounds {
            let funcs = adversary.round(t);
            for (acc, f) in objective.iter_mut().zip(&funcs.losses) {
                acc.accumulate(f);
            }
            for k in 0..m {
                constraints.push(
                    funcs
                        .constraints
                        .iter()
                        .map(|row| QuadForm::from_function(&row[k]))
                        .collect(),
                );
            }
        }
        Self::new(sets, objective, constraints)
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    fn total_dim(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    fn block<'a>(&self, x: &'a [f64], i: usize) -> &'a [f64] {
        &x[self.offsets[i]..self.offsets[i + 1]]
    }

    fn project(&self, x: &mut [f64]) {
        for (i, set) in self.sets.iter().enumerate() {
            set.project_slice(&mut x[self.offsets[i]..self.offsets[i + 1]]);
        }
    }

    fn objective_flat(&self, x: &[f64]) -> f64 {
        self.objective
            .iter()
            .enumerate()
            .map(|(i, f)| f.value(self.block(x, i)))
            .sum()
    }

    fn constraint_flat(&self, k: usize, x: &[f64]) -> f64 {
        self.constraints[k]
            .iter()
            .enumerate()
            .map(|(i, h)| h.value(self.block(x, i)))
            .sum()
    }

    fn split(&self, x: &[f64]) -> Vec<DVector<f64>> {
        (0..self.sets.len())
            .map(|i| DVector::from_column_slice(self.block(x, i)))
            .collect()
    }

    fn flatten(&self, xs: &[DVector<f64>]) -> Result<Vec<f64>> {
        check_dim(self.sets.len(), xs.len())?;
        let mut out = Vec::with_capacity(self.total_dim());
        for (x, s) in xs.iter().zip(&self.sets) {
            check_dim(s.dim(), x.len())?;
            out.extend(x.iter());
        }
        Ok(out)
    }

    pub fn objective(&self, xs: &[DVector<f64>]) -> Result<f64> {
        Ok(self.objective_flat(&self.flatten(xs)?))
    }

    pub fn constraint_values(&self, xs: &[DVector<f64>]) -> Result<Vec<f64>> {
        let x = self.flatten(xs)?;
        Ok((0..self.constraints.len())
            .map(|k| self.constraint_flat(k, &x))
            .collect())
    }

    /// Solves from `start` (origin if absent). Fails if the final iterate
    /// violates some constraint by more than the feasibility tolerance.
    pub fn solve(&self, config: &SolverConfig, start: Option<&[DVector<f64>]>) -> Result<Solution> {
        if !(config.feasibility_tolerance > 0.0 && config.kkt_tolerance > 0.0) {
            return Err(Error::Config("solver tolerances must be positive".into()));
        }
        let mut x = match start {
            Some(s) => self.flatten(s)?,
            None => vec![0.0; self.total_dim()],
        };
        if self.constraints.len() <= 1 {
            return self.solve_dual_bisection(config);
        }
        self.project(&mut x);

        let tol = config.kkt_tolerance;
        let slack_margin = 1e-3;
        let mut working: Vec<usize> = (0..self.constraints.len())
            .filter(|&k| self.normalized(k, &x) > -slack_margin)
            .collect();
        let mut mu = vec![0.0; working.len()];
        let mut rho = 10.0;
        let mut lip = 1.0;
        let mut budget = config.max_iterations;
        let mut outer = 0;
        let mut converged = false;

        'sets: loop {
            let mut prev_violation = f64::INFINITY;
            loop {
                let inner_ok = {
                    let al = Augmented {
                        problem: self,
                        working: &working,
                        mu: &mu,
                        rho,
                    };
                    al.minimize(&mut x, &mut lip, tol, &mut budget)
                };
                outer += 1;
                let h: Vec<f64> = working.iter().map(|&k| self.normalized(k, &x)).collect();
                let mut violation = 0.0f64;
                let mut complementarity = 0.0f64;
                for (m, &hk) in mu.iter_mut().zip(&h) {
                    *m = (*m + rho * hk).max(0.0);
                    violation = violation.max(hk);
                    complementarity = complementarity.max((-hk).min(*m).abs());
                }
                if inner_ok && violation <= tol && complementarity <= tol {
                    break;
                }
                if budget == 0 || outer >= config.max_outer {
                    break 'sets;
                }
                if violation > 0.25 * prev_violation {
                    rho = (rho * 10.0).min(1e12);
                }
                prev_violation = violation;
            }
            let newcomers: Vec<usize> = (0..self.constraints.len())
                .filter(|k| !working.contains(k))
                .filter(|&k| self.normalized(k, &x) > tol)
                .collect();
            if newcomers.is_empty() {
                converged = true;
                break;
            }
            // Pull in the near-active neighbours as well so the set settles quickly.
            for k in 0..self.constraints.len() {
                if !working.contains(&k) && self.normalized(k, &x) > -slack_margin {
                    working.push(k);
                    mu.push(0.0);
                }
            }
            if budget == 0 || outer >= config.max_outer {
                break;
            }
        }

        let mut max_violation = 0.0f64;
        let mut normalized_violation = 0.0f64;
        for k in 0..self.constraints.len() {
            let h = self.constraint_flat(k, &x);
            max_violation = max_violation.max(h);
            normalized_violation = normalized_violation.max(h / self.constraint_scales[k]);
        }
        let objective = self.objective_flat(&x);
        if normalized_violation > config.feasibility_tolerance {
            return Err(Error::Solver {
                message: format!(
                    "normalized violation {normalized_violation:e} above {:e} after {} iterations",
                    config.feasibility_tolerance,
                    config.max_iterations - budget
                ),
                objective,
                max_violation,
                best: x,
            });
        }
        Ok(Solution {
            x: self.split(&x),
            certificate: Certificate {
                objective,
                max_violation,
                normalized_violation,
                iterations: config.max_iterations - budget,
                outer_iterations: outer,
                working_set: working.len(),
                converged,
            },
        })
    }

    /// Blockwise minimizer of `f + mu h` for a single constraint `h`.
    fn lagrangian_minimizer(&self, mu: f64) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.total_dim());
        for (i, (set, f)) in self.sets.iter().zip(&self.objective).enumerate() {
            let mut gram = f.gram.clone();
            let mut linear = f.linear.clone();
            if let Some(row) = self.constraints.first() {
                gram += &row[i].gram * mu;
                linear += &row[i].linear * mu;
            }
            x.extend(blockqp::minimize(&gram, &linear, set).iter());
        }
        x
    }

    /// Exact path for at most one coupled constraint: blockwise QP solves
    /// inside a bisection on the multiplier. The returned point is the
    /// feasible end of the final bracket.
    fn solve_dual_bisection(&self, config: &SolverConfig) -> Result<Solution> {
        let mut evaluations = 1;
        let mut x = self.lagrangian_minimizer(0.0);
        let mut bracket = 0;
        if !self.constraints.is_empty() && self.normalized(0, &x) > 0.0 {
            let (mut lo, mut hi) = (0.0f64, 1.0f64);
            loop {
                x = self.lagrangian_minimizer(hi);
                evaluations += 1;
                if self.normalized(0, &x) <= 0.0 {
                    break;
                }
                if hi > 1e15 {
                    return Err(self.solver_error(
                        x,
                        config,
                        evaluations,
                        "constraint cannot be satisfied",
                    ));
                }
                lo = hi;
                hi *= 4.0;
            }
            while hi - lo > 1e-14 * hi && evaluations < config.max_iterations {
                let mid = 0.5 * (lo + hi);
                let y = self.lagrangian_minimizer(mid);
                evaluations += 1;
                let h = self.normalized(0, &y);
                if h <= 0.0 {
                    hi = mid;
                    x = y;
                    if h > -config.kkt_tolerance {
                        break;
                    }
                } else {
                    lo = mid;
                }
            }
            bracket = 1;
        }
        let max_violation = (0..self.constraints.len())
            .map(|k| self.constraint_flat(k, &x))
            .fold(0.0, f64::max);
        let normalized_violation = (0..self.constraints.len())
            .map(|k| self.normalized(k, &x))
            .fold(0.0, f64::max);
        Ok(Solution {
            certificate: Certificate {
                objective: self.objective_flat(&x),
                max_violation,
                normalized_violation,
                iterations: evaluations,
                outer_iterations: 1,
                working_set: bracket,
                converged: true,
            },
            x: self.split(&x),
        })
    }

    fn solver_error(
        &self,
        x: Vec<f64>,
        config: &SolverConfig,
        iterations: usize,
        reason: &str,
    ) -> Error {
        let max_violation = (0..self.constraints.len())
            .map(|k| self.constraint_flat(k, &x))
            .fold(0.0, f64::max);
        let normalized = (0..self.constraints.len())
            .map(|k| self.normalized(k, &x))
            .fold(0.0, f64::max);
        Error::Solver {
            message: format!(
                "{reason}: normalized violation {normalized:e} above {:e} after {iterations} iterations",
                config.feasibility_tolerance
            ),
            objective: self.objective_flat(&x),
            max_violation,
            best: x,
        }
    }

    fn normalized(&self, k: usize, x: &[f64]) -> f64 {
        self.constraint_flat(k, x) / self.constraint_scales[k]
    }
}

/// `f/s_f + (1/(2 rho)) sum_k ([mu_k + rho h_k/s_k]_+^2 - mu_k^2)` over the
/// working set.
struct Augmented<'a> {
    problem: &'a SeparableQuadratic,
    working: &'a [usize],
    mu: &'a [f64],
    rho: f64,
}

impl Augmented<'_> {
    fn value(&self, x: &[f64]) -> f64 {
        let p = self.problem;
        let mut v = p.objective_flat(x) / p.objective_scale;
        for (&k, &m) in self.working.iter().zip(self.mu) {
            let s = (m + self.rho * p.normalized(k, x)).max(0.0);
            v += (s * s - m * m) / (2.0 * self.rho);
        }
        v
    }

    fn value_and_gradient(&self, x: &[f64], grad: &mut [f64]) -> f64 {
        let p = self.problem;
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut v = 0.0;
        let w = 1.0 / p.objective_scale;
        for (i, f) in p.objective.iter().enumerate() {
            let xb = p.block(x, i);
            v += f.value(xb) * w;
            f.add_gradient(xb, w, &mut grad[p.offsets[i]..p.offsets[i + 1]]);
        }
        for (&k, &m) in self.working.iter().zip(self.mu) {
            let s = (m + self.rho * p.normalized(k, x)).max(0.0);
            v += (s * s - m * m) / (2.0 * self.rho);
            if s > 0.0 {
                let w = s / p.constraint_scales[k];
                for (i, h) in p.constraints[k].iter().enumerate() {
                    h.add_gradient(p.block(x, i), w, &mut grad[p.offsets[i]..p.offsets[i + 1]]);
                }
            }
        }
        v
    }

    /// Projected accelerated gradient with backtracking and function-value
    /// restarts. Returns whether the gradient-mapping norm reached `tol`.
    fn minimize(&self, x: &mut [f64], lip: &mut f64, tol: f64, budget: &mut usize) -> bool {
        let n = x.len();
        let mut y = x.to_vec();
        let mut grad = vec![0.0; n];
        let mut cand = vec![0.0; n];
        let mut fx = self.value(x);
        let mut momentum = 1.0f64;
        *lip = (*lip * 0.5).max(1e-12);
        while *budget > 0 {
            *budget -= 1;
            let fy = self.value_and_gradient(&y, &mut grad);
            let (fc, gap) = loop {
                for j in 0..n {
                    cand[j] = y[j] - grad[j] / *lip;
                }
                self.problem.project(&mut cand);
                let mut lin = 0.0;
                let mut sq = 0.0;
                for j in 0..n {
                    let d = cand[j] - y[j];
                    lin += grad[j] * d;
                    sq += d * d;
                }
                let fc = self.value(&cand);
                if fc <= fy + lin + 0.5 * *lip * sq + 1e-13 * (1.0 + fy.abs()) || *lip > 1e30 {
                    break (fc, *lip * sq.sqrt());
                }
                *lip *= 2.0;
            };
            if fc > fx && momentum > 1.0 {
                y.copy_from_slice(x);
                momentum = 1.0;
                continue;
            }
            let next = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
            let beta = (momentum - 1.0) / next;
            for j in 0..n {
                y[j] = cand[j] + beta * (cand[j] - x[j]);
            }
            x.copy_from_slice(&cand);
            fx = fc;
            momentum = next;
            if gap <= tol {
                return true;
            }
        }
        false
    }
}

/// Best fixed decision in hindsight over the first `rounds` rounds.
pub fn solve_static_comparator(
    adversary: &dyn Adversary,
    rounds: usize,
    config: &SolverConfig,
) -> Result<Solution> {
    SeparableQuadratic::static_problem(adversary, rounds)?.solve(config, None)
}

/// Per-round minimizers of `f_t` subject to `g_t <= 0`, each warm-started
/// from the previous round's solution.
pub fn solve_dynamic_comparator(
    adversary: &dyn Adversary,
    rounds: usize,
    config: &SolverConfig,
) -> Result<Vec<Solution>> {
    let sets = adversary.sets();
    let mut out: Vec<Solution> = Vec::with_capacity(rounds);
    for t in 1..=rounds {
        let problem = SeparableQuadratic::from_round(sets, &adversary.round(t))?;
        let start = out.last().map(|s| s.x.as_slice());
        out.push(problem.solve(config, start)?);
    }
    Ok(out)
}
