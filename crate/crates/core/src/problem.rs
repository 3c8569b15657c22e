//! Time-varying quadratic adversary, bandit oracle, and the uniform bounds on
//! function values and gradients.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::geometry::{ConvexSet, SetShape, CONTAINMENT_TOL};
use crate::rng::{self, tag, Stream};

/// Floor applied to derived constants so step sizes stay finite on
/// degenerate (constant or zero) instances.
pub const MIN_CONSTANT: f64 = 1e-12;

/// `x' F' F x + <linear, x> + constant`, convex for any factor `F`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticFunction {
    factor: DMatrix<f64>,
    linear: DVector<f64>,
    constant: f64,
}

impl QuadraticFunction {
    pub fn new(factor: DMatrix<f64>, linear: DVector<f64>, constant: f64) -> Result<Self> {
        check_dim(linear.len(), factor.ncols())?;
        Ok(Self {
            factor,
            linear,
            constant,
        })
    }

    pub fn zero(dim: usize) -> Self {
        Self {
            factor: DMatrix::zeros(dim, dim),
            linear: DVector::zeros(dim),
            constant: 0.0,
        }
    }

    pub fn affine(linear: DVector<f64>, constant: f64) -> Self {
        let dim = linear.len();
        Self {
            factor: DMatrix::zeros(dim, dim),
            linear,
            constant,
        }
    }

    pub fn constant(dim: usize, constant: f64) -> Self {
        Self {
            constant,
            ..Self::zero(dim)
        }
    }

    pub fn dim(&self) -> usize {
        self.linear.len()
    }

    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    pub fn linear(&self) -> &DVector<f64> {
        &self.linear
    }

    pub fn constant_term(&self) -> f64 {
        self.constant
    }

    /// `F' F`, half the Hessian.
    pub fn gram(&self) -> DMatrix<f64> {
        self.factor.tr_mul(&self.factor)
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        let fx = &self.factor * x;
        fx.norm_squared() + self.linear.dot(x) + self.constant
    }

    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        self.factor.tr_mul(&(&self.factor * x)) * 2.0 + &self.linear
    }

    pub fn hessian(&self) -> DMatrix<f64> {
        self.gram() * 2.0
    }

    /// Closed-form bounds `(|f| <= F, |grad f| <= G)` over the ball of radius
    /// `outer_radius`.
    pub fn bounds(&self, outer_radius: f64) -> (f64, f64) {
        let q = self.factor.norm_squared();
        let l = self.linear.norm();
        (
            q * outer_radius * outer_radius + l * outer_radius + self.constant.abs(),
            2.0 * q * outer_radius + l,
        )
    }

    fn to_json(&self) -> serde_json::Value {
        let rows: Vec<Vec<f64>> = self
            .factor
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect();
        serde_json::json!({
            "factor": rows,
            "linear": self.linear.as_slice(),
            "constant": self.constant,
        })
    }
}

/// Losses and constraints of every learner for one round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundFunctions {
    pub losses: Vec<QuadraticFunction>,
    /// `constraints[i][j]` is component `j` of learner `i`'s constraint.
    pub constraints: Vec<Vec<QuadraticFunction>>,
}

impl RoundFunctions {
    pub fn learners(&self) -> usize {
        self.losses.len()
    }

    pub fn loss(&self, i: usize, x: &DVector<f64>) -> f64 {
        self.losses[i].value(x)
    }

    pub fn constraint(&self, i: usize, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.constraints[i].len(),
            self.constraints[i].iter().map(|g| g.value(x)),
        )
    }

    /// `f_t(x) = sum_i f_{i,t}(x_i)`.
    pub fn global_loss(&self, xs: &[DVector<f64>]) -> f64 {
        xs.iter().enumerate().map(|(i, x)| self.loss(i, x)).sum()
    }

    /// `g_t(x) = sum_i g_{i,t}(x_i)`.
    pub fn global_constraint(&self, xs: &[DVector<f64>]) -> DVector<f64> {
        let m = self.constraints.first().map_or(0, Vec::len);
        xs.iter()
            .enumerate()
            .fold(DVector::zeros(m), |acc, (i, x)| acc + self.constraint(i, x))
    }

    pub fn to_json(&self, round: usize) -> Result<String> {
        let learners: Vec<_> = self
            .losses
            .iter()
            .zip(&self.constraints)
            .map(|(f, gs)| {
                serde_json::json!({
                    "loss": f.to_json(),
                    "constraints": gs.iter().map(QuadraticFunction::to_json).collect::<Vec<_>>(),
                })
            })
            .collect();
        Ok(serde_json::to_string_pretty(
            &serde_json::json!({ "round": round, "learners": learners }),
        )?)
    }
}

/// Per-learner bounds of Assumption-2 type, uniform over rounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemConstants {
    /// `|f_{i,t}(x)| <= loss_bound[i]`
    pub loss_bound: Vec<f64>,
    /// `|[g_{i,t}(x)]_j| <= constraint_bound[i]`
    pub constraint_bound: Vec<f64>,
    /// `|grad f_{i,t}(x)| <= loss_grad_bound[i]`
    pub loss_grad_bound: Vec<f64>,
    /// `|grad [g_{i,t}(x)]_j| <= constraint_grad_bound[i]`
    pub constraint_grad_bound: Vec<f64>,
}

impl ProblemConstants {
    pub fn learners(&self) -> usize {
        self.loss_bound.len()
    }

    /// `F_g = max_i F_{g_i}`
    pub fn constraint_bound_max(&self) -> f64 {
        self.constraint_bound.iter().copied().fold(0.0, f64::max)
    }

    /// `G_g = max_i G_{g_i}`
    pub fn constraint_grad_bound_max(&self) -> f64 {
        self.constraint_grad_bound
            .iter()
            .copied()
            .fold(0.0, f64::max)
    }

    fn floored(mut self) -> Self {
        for v in [
            &mut self.loss_bound,
            &mut self.constraint_bound,
            &mut self.loss_grad_bound,
            &mut self.constraint_grad_bound,
        ] {
            v.iter_mut().for_each(|c| *c = c.max(MIN_CONSTANT));
        }
        self
    }
}

/// Source of per-round functions. Implementations must be pure in `t`.
pub trait Adversary: Send + Sync {
    fn sets(&self) -> &[ConvexSet];
    fn constraint_dim(&self) -> usize;
    fn round(&self, t: usize) -> RoundFunctions;
    fn constants(&self) -> ProblemConstants;

    fn learners(&self) -> usize {
        self.sets().len()
    }

    fn dims(&self) -> Vec<usize> {
        self.sets().iter().map(ConvexSet::dim).collect()
    }
}

/// Integer ranges (inclusive) of the coefficient draws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientRanges {
    pub loss_quad: [i64; 2],
    pub loss_lin: [i64; 2],
    pub constraint_quad: [i64; 2],
    pub constraint_lin: [i64; 2],
    pub constraint_const: [i64; 2],
}

impl Default for CoefficientRanges {
    fn default() -> Self {
        Self {
            loss_quad: [-5, 5],
            loss_lin: [0, 10],
            constraint_quad: [-5, 5],
            constraint_lin: [-5, 5],
            constraint_const: [-5, -1],
        }
    }
}

impl CoefficientRanges {
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("loss_quad", self.loss_quad),
            ("loss_lin", self.loss_lin),
            ("constraint_quad", self.constraint_quad),
            ("constraint_lin", self.constraint_lin),
            ("constraint_const", self.constraint_const),
        ];
        for (name, [lo, hi]) in named {
            if lo > hi {
                return Err(Error::Config(format!(
                    "range {name} is empty: [{lo}, {hi}]"
                )));
            }
        }
        if self.constraint_const[1] >= 0 {
            return Err(Error::Config(
                "constraint_const must be strictly negative so the origin is strictly feasible"
                    .into(),
            ));
        }
        Ok(())
    }
}

fn abs_max([lo, hi]: [i64; 2]) -> f64 {
    lo.unsigned_abs().max(hi.unsigned_abs()) as f64
}

fn draw(rng: &mut Stream, [lo, hi]: [i64; 2]) -> f64 {
    rng.gen_range(lo..=hi) as f64
}

/// Random quadratic adversary of the power-grid experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct AdversaryModel {
    sets: Vec<ConvexSet>,
    m: usize,
    ranges: CoefficientRanges,
    seed: u64,
}

impl AdversaryModel {
    pub fn new(
        sets: Vec<ConvexSet>,
        m: usize,
        ranges: CoefficientRanges,
        seed: u64,
    ) -> Result<Self> {
        if sets.is_empty() {
            return Err(Error::Config("need at least one learner".into()));
        }
        if m == 0 {
            return Err(Error::Config(
                "constraint dimension must be positive".into(),
            ));
        }
        ranges.validate()?;
        Ok(Self {
            sets,
            m,
            ranges,
            seed,
        })
    }

    pub fn ranges(&self) -> &CoefficientRanges {
        &self.ranges
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Coefficients of learner `i` at round `t`, from the `(seed, t, i)`
    /// sub-stream.
    pub fn learner_round(&self, t: usize, i: usize) -> (QuadraticFunction, Vec<QuadraticFunction>) {
        let p = self.sets[i].dim();
        let r = &self.ranges;
        let mut rng = rng::stream(self.seed, &[tag::ADVERSARY, t as u64, i as u64]);
        let loss_factor = DMatrix::from_fn(p, p, |_, _| draw(&mut rng, r.loss_quad));
        let loss_linear = DVector::from_fn(p, |_, _| draw(&mut rng, r.loss_lin));
        let loss = QuadraticFunction {
            factor: loss_factor,
            linear: loss_linear,
            constant: 0.0,
        };
        let constraints = (0..self.m)
            .map(|_| {
                let factor = DMatrix::from_fn(p, p, |_, _| draw(&mut rng, r.constraint_quad));
                let linear = DVector::from_fn(p, |_, _| draw(&mut rng, r.constraint_lin));
                let constant = draw(&mut rng, r.constraint_const);
                QuadraticFunction {
                    factor,
                    linear,
                    constant,
                }
            })
            .collect();
        (loss, constraints)
    }

    pub fn generate_round(&self, t: usize) -> RoundFunctions {
        let (losses, constraints) = (0..self.sets.len())
            .map(|i| self.learner_round(t, i))
            .unzip();
        RoundFunctions {
            losses,
            constraints,
        }
    }
}

impl Adversary for AdversaryModel {
    fn sets(&self) -> &[ConvexSet] {
        &self.sets
    }

    fn constraint_dim(&self) -> usize {
        self.m
    }

    fn round(&self, t: usize) -> RoundFunctions {
        self.generate_round(t)
    }

    fn constants(&self) -> ProblemConstants {
        compute_constants(self)
    }
}

/// Range-based bounds, valid for every coefficient draw:
/// `|x'P'Px + <p, x> + c| <= |P|_F^2 R^2 + |p| R + |c|` and
/// `|2P'Px + p| <= 2 |P|_F^2 R + |p|`, with each norm bounded by its range.
pub fn compute_constants(model: &AdversaryModel) -> ProblemConstants {
    let r = &model.ranges;
    let mut out = ProblemConstants {
        loss_bound: vec![],
        constraint_bound: vec![],
        loss_grad_bound: vec![],
        constraint_grad_bound: vec![],
    };
    for set in &model.sets {
        let p = set.dim() as f64;
        let radius = set.outer_radius();
        let quad_f = (abs_max(r.loss_quad) * p).powi(2);
        let lin_f = abs_max(r.loss_lin) * p.sqrt();
        let quad_g = (abs_max(r.constraint_quad) * p).powi(2);
        let lin_g = abs_max(r.constraint_lin) * p.sqrt();
        let const_g = abs_max(r.constraint_const);
        out.loss_bound
            .push(quad_f * radius * radius + lin_f * radius);
        out.loss_grad_bound.push(2.0 * quad_f * radius + lin_f);
        out.constraint_bound
            .push(quad_g * radius * radius + lin_g * radius + const_g);
        out.constraint_grad_bound
            .push(2.0 * quad_g * radius + lin_g);
    }
    out.floored()
}

/// The same functions every round.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedAdversary {
    sets: Vec<ConvexSet>,
    functions: RoundFunctions,
}

impl FixedAdversary {
    pub fn new(sets: Vec<ConvexSet>, functions: RoundFunctions) -> Result<Self> {
        check_dim(sets.len(), functions.losses.len())?;
        check_dim(sets.len(), functions.constraints.len())?;
        let m = functions.constraints.first().map_or(0, Vec::len);
        if m == 0 {
            return Err(Error::Config(
                "constraint dimension must be positive".into(),
            ));
        }
        for (i, set) in sets.iter().enumerate() {
            check_dim(set.dim(), functions.losses[i].dim())?;
            check_dim(m, functions.constraints[i].len())?;
            for g in &functions.constraints[i] {
                check_dim(set.dim(), g.dim())?;
            }
        }
        Ok(Self { sets, functions })
    }
}

impl Adversary for FixedAdversary {
    fn sets(&self) -> &[ConvexSet] {
        &self.sets
    }

    fn constraint_dim(&self) -> usize {
        self.functions.constraints[0].len()
    }

    fn round(&self, _t: usize) -> RoundFunctions {
        self.functions.clone()
    }

    /// Closed-form bounds from the actual coefficients.
    fn constants(&self) -> ProblemConstants {
        let mut out = ProblemConstants {
            loss_bound: vec![],
            constraint_bound: vec![],
            loss_grad_bound: vec![],
            constraint_grad_bound: vec![],
        };
        for (i, set) in self.sets.iter().enumerate() {
            let radius = set.outer_radius();
            let (ff, gf) = self.functions.losses[i].bounds(radius);
            let (fg, gg) = self.functions.constraints[i]
                .iter()
                .map(|g| g.bounds(radius))
                .fold((0.0, 0.0), |a: (f64, f64), b| (a.0.max(b.0), a.1.max(b.1)));
            out.loss_bound.push(ff);
            out.loss_grad_bound.push(gf);
            out.constraint_bound.push(fg);
            out.constraint_grad_bound.push(gg);
        }
        out.floored()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Family {
    Loss,
    Constraint,
}

impl Family {
    fn name(self) -> &'static str {
        match self {
            Family::Loss => "loss",
            Family::Constraint => "constraint",
        }
    }
}

/// Value-only access to the adversary with a per-(learner, round, function)
/// query budget.
pub struct BanditOracle<'a> {
    adversary: &'a dyn Adversary,
    budget: u32,
    counts: BTreeMap<(usize, usize, Family), u32>,
    cache: BTreeMap<usize, RoundFunctions>,
    loss_queries: u64,
    constraint_queries: u64,
}

impl<'a> BanditOracle<'a> {
    pub fn new(adversary: &'a dyn Adversary, budget: u32) -> Self {
        Self {
            adversary,
            budget,
            counts: BTreeMap::new(),
            cache: BTreeMap::new(),
            loss_queries: 0,
            constraint_queries: 0,
        }
    }

    pub fn budget(&self) -> u32 {
        self.budget
    }

    pub fn loss_queries(&self) -> u64 {
        self.loss_queries
    }

    pub fn constraint_queries(&self) -> u64 {
        self.constraint_queries
    }

    fn admit(
        &mut self,
        i: usize,
        t: usize,
        family: Family,
        x: &DVector<f64>,
    ) -> Result<&RoundFunctions> {
        let set = self
            .adversary
            .sets()
            .get(i)
            .ok_or_else(|| Error::InvalidParameter(format!("no learner {i}")))?;
        let excess = set.excess(x)?;
        if excess > CONTAINMENT_TOL {
            return Err(Error::InfeasibleQuery {
                learner: i,
                round: t,
                excess,
            });
        }
        let count = self.counts.entry((t, i, family)).or_insert(0);
        if *count >= self.budget {
            return Err(Error::BudgetExceeded {
                learner: i,
                round: t,
                function: family.name(),
                budget: self.budget,
            });
        }
        *count += 1;
        // Learners only ever query the latest couple of rounds.
        if !self.cache.contains_key(&t) {
            while self.cache.len() >= 2 {
                self.cache.pop_first();
            }
            self.cache.insert(t, self.adversary.round(t));
        }
        Ok(&self.cache[&t])
    }

    pub fn query_loss(&mut self, i: usize, t: usize, x: &DVector<f64>) -> Result<f64> {
        let v = self.admit(i, t, Family::Loss, x)?.loss(i, x);
        self.loss_queries += 1;
        Ok(v)
    }

    pub fn query_constraint(
        &mut self,
        i: usize,
        t: usize,
        x: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        let v = self.admit(i, t, Family::Constraint, x)?.constraint(i, x);
        self.constraint_queries += 1;
        Ok(v)
    }
}

/// Sampling audit of [`ProblemConstants`] against actual evaluations.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ConstantsAudit {
    pub evaluations: u64,
    pub value_violations: u64,
    pub gradient_violations: u64,
    pub lipschitz_violations: u64,
    pub convexity_violations: u64,
    pub origin_infeasible_rounds: Vec<usize>,
}

impl ConstantsAudit {
    pub fn passed(&self) -> bool {
        self.value_violations == 0
            && self.gradient_violations == 0
            && self.lipschitz_violations == 0
            && self.convexity_violations == 0
            && self.origin_infeasible_rounds.is_empty()
    }
}

/// Uniform random point of a set.
pub fn sample_in_set<R: Rng + ?Sized>(set: &ConvexSet, rng: &mut R) -> DVector<f64> {
    let r = set.inner_radius();
    match set.shape() {
        SetShape::Box { .. } => DVector::from_fn(set.dim(), |_, _| rng.gen_range(-r..=r)),
        SetShape::Ball { .. } => {
            crate::estimators::sample_ball(rng, set.dim()).expect("set dimension is positive") * r
        }
    }
}

/// Evaluates every function of the given rounds at `points_per_round` random
/// points (and point pairs) per learner and counts bound violations.
pub fn audit_constants(
    adversary: &dyn Adversary,
    constants: &ProblemConstants,
    rounds: &[usize],
    points_per_round: usize,
    seed: u64,
) -> ConstantsAudit {
    let mut audit = ConstantsAudit::default();
    let mut rng = rng::stream(seed, &[0xa0d1]);
    let sets = adversary.sets();
    let n = sets.len();
    for &t in rounds {
        let funcs = adversary.round(t);
        let origin: Vec<_> = sets.iter().map(|s| DVector::zeros(s.dim())).collect();
        if funcs.global_constraint(&origin).iter().any(|&v| v >= 0.0) {
            audit.origin_infeasible_rounds.push(t);
        }
        for i in 0..n {
            let all: Vec<(&QuadraticFunction, f64, f64)> = std::iter::once((
                &funcs.losses[i],
                constants.loss_bound[i],
                constants.loss_grad_bound[i],
            ))
            .chain(funcs.constraints[i].iter().map(|g| {
                (
                    g,
                    constants.constraint_bound[i],
                    constants.constraint_grad_bound[i],
                )
            }))
            .collect();
            for _ in 0..points_per_round {
                let x = sample_in_set(&sets[i], &mut rng);
                let y = sample_in_set(&sets[i], &mut rng);
                let lam: f64 = rng.gen();
                for &(f, fb, gb) in &all {
                    audit.evaluations += 1;
                    let (fx, fy) = (f.value(&x), f.value(&y));
                    if fx.abs() > fb {
                        audit.value_violations += 1;
                    }
                    if f.gradient(&x).norm() > gb {
                        audit.gradient_violations += 1;
                    }
                    if (fx - fy).abs() > gb * (&x - &y).norm() + 1e-9 {
                        audit.lipschitz_violations += 1;
                    }
                    let mid = f.value(&(&x * lam + &y * (1.0 - lam)));
                    if mid > lam * fx + (1.0 - lam) * fy + 1e-9 * (1.0 + fx.abs() + fy.abs()) {
                        audit.convexity_violations += 1;
                    }
                }
            }
        }
    }
    audit
}
