//! Experiment runner: configuration, seeded ensembles, aggregation, CSV and
//! JSON output, bound checks, and pre-run validation.

mod config;
mod fit;

pub use config::{
    AdversaryConfig, ComparatorKind, Dims, ExperimentConfig, GraphConfig, MemberSeeds,
    ScheduleConfig, SetKind,
};
pub use fit::{fit_sublinearity, SlopeFit};

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algorithms::{simulate, Algorithm, RunAudit, SimulationSetup};
use crate::error::{Error, Result};
use crate::metrics::{
    bound_check, compute_bound_constants, corollary1_bounds, corollary2_bounds, path_length,
    regret_series, solve_dynamic_comparator, solve_static_comparator, theorem1_bounds, BoundCheck,
    BoundConstants, BoundPair, Certificate, Comparator, Trajectory,
};
use crate::network::validate_assumption1;
use crate::network::Assumption1Report;
use crate::problem::{audit_constants, AdversaryModel, ConstantsAudit, ProblemConstants};

pub const CSV_HEADER: &str =
    "t,mean_regret_per_t,se_regret,mean_violation_per_t,se_violation,max_dual_norm";
pub const CSV_FILE: &str = "metrics.csv";
pub const SUMMARY_FILE: &str = "summary.json";

/// One row of the ensemble CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub t: usize,
    pub mean_regret_per_t: f64,
    pub se_regret: f64,
    pub mean_violation_per_t: f64,
    pub se_violation: f64,
    pub max_dual_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparatorSummary {
    pub kind: ComparatorKind,
    /// Total comparator loss over all rounds.
    pub loss: f64,
    pub path_length: f64,
    pub max_violation: f64,
    pub solver_iterations: usize,
}

/// Per-round series and terminal metrics of one ensemble member.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberResult {
    pub seeds: MemberSeeds,
    #[serde(skip)]
    pub losses: Vec<f64>,
    #[serde(skip)]
    pub regret: Vec<f64>,
    #[serde(skip)]
    pub violation: Vec<f64>,
    #[serde(skip)]
    pub max_dual_norm: Vec<f64>,
    pub terminal_regret: f64,
    pub terminal_violation: f64,
    pub loss_queries: u64,
    pub constraint_queries: u64,
    pub audit: RunAudit,
    pub comparator: ComparatorSummary,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    #[serde(skip)]
    pub rows: Vec<SummaryRow>,
    pub terminal: Option<SummaryRow>,
    pub members: Vec<MemberResult>,
    pub wall_seconds: f64,
}

fn with_pool<T: Send>(parallel: usize, job: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallel)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {parallel} worker threads: {e}")))?;
    Ok(pool.install(job))
}

fn comparator_for(
    config: &ExperimentConfig,
    adversary: &AdversaryModel,
    kind: ComparatorKind,
) -> Result<(Comparator, Vec<Certificate>, f64)> {
    match kind {
        ComparatorKind::Static => {
            let sol = solve_static_comparator(adversary, config.rounds, &config.solver)?;
            Ok((Comparator::Static(sol.x), vec![sol.certificate], 0.0))
        }
        ComparatorKind::Dynamic => {
            let sols = solve_dynamic_comparator(adversary, config.rounds, &config.solver)?;
            let (points, certs): (Vec<_>, Vec<_>) =
                sols.into_iter().map(|s| (s.x, s.certificate)).unzip();
            let v = path_length(&points);
            Ok((Comparator::Dynamic(points), certs, v))
        }
    }
}

fn run_member(
    config: &ExperimentConfig,
    constants: &ProblemConstants,
    member: usize,
) -> Result<MemberResult> {
    let start = Instant::now();
    let seeds = config.member_seeds(member);
    let adversary = config.adversary_model(&seeds)?;
    let graph = config.graph_schedule(&seeds)?;
    let schedule = config.build_schedule(constants)?;
    let setup = SimulationSetup {
        algorithm: config.algorithm,
        schedule: &schedule,
        constants,
        rounds: config.rounds,
        learner_seed: seeds.learners,
        initial: None,
    };
    let (mut traj, audit): (Trajectory, RunAudit) = simulate(&adversary, &graph, &setup)?;
    traj.discard_decisions();

    let (comparator, certs, path) = comparator_for(config, &adversary, config.comparator)?;
    let regret = regret_series(&traj, &adversary, &comparator)?;
    let violation = crate::metrics::violation_series(&traj);
    let cumulative_loss: f64 = traj.losses.iter().sum();
    let comparator_loss = cumulative_loss - regret.last().copied().unwrap_or(0.0);
    Ok(MemberResult {
        seeds,
        terminal_regret: *regret.last().unwrap(),
        terminal_violation: *violation.last().unwrap(),
        losses: traj.losses,
        regret,
        violation,
        max_dual_norm: traj.max_dual_norm,
        loss_queries: traj.loss_queries,
        constraint_queries: traj.constraint_queries,
        audit,
        comparator: ComparatorSummary {
            kind: config.comparator,
            loss: comparator_loss,
            path_length: path,
            max_violation: certs.iter().map(|c| c.max_violation).fold(0.0, f64::max),
            solver_iterations: certs.iter().map(|c| c.iterations).sum(),
        },
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

fn mean_se(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let v: Vec<f64> = values.collect();
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Ensemble means and standard errors of `Reg/t` and violation`/t` per round.
pub fn aggregate(members: &[MemberResult], rounds: usize) -> Vec<SummaryRow> {
    (1..=rounds)
        .map(|t| {
            let tf = t as f64;
            let (mr, sr) = mean_se(members.iter().map(|m| m.regret[t - 1] / tf));
            let (mv, sv) = mean_se(members.iter().map(|m| m.violation[t - 1] / tf));
            SummaryRow {
                t,
                mean_regret_per_t: mr,
                se_regret: sr,
                mean_violation_per_t: mv,
                se_violation: sv,
                max_dual_norm: members
                    .iter()
                    .map(|m| m.max_dual_norm[t - 1])
                    .fold(0.0, f64::max),
            }
        })
        .collect()
}

/// Runs the configured ensemble. Members are independent and are collected
/// in member order, so the output does not depend on `parallel`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let start = Instant::now();
    let constants = config.constants()?;
    let members = with_pool(config.parallel, || {
        (0..config.ensemble)
            .into_par_iter()
            .map(|k| run_member(config, &constants, k))
            .collect::<Result<Vec<_>>>()
    })??;
    let rows = aggregate(&members, config.rounds);
    Ok(ExperimentResult {
        config: config.clone(),
        terminal: rows.last().copied(),
        rows,
        members,
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

pub fn write_csv<W: Write>(rows: &[SummaryRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(path)
}

impl ExperimentResult {
    /// Writes `metrics.csv` and `summary.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        write_csv(&self.rows, fs::File::create(dir.join(CSV_FILE))?)?;
        write_json(dir, SUMMARY_FILE, self)?;
        Ok(())
    }

    pub fn mean_regret_series(&self) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| r.mean_regret_per_t * r.t as f64)
            .collect()
    }

    pub fn mean_violation_series(&self) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| r.mean_violation_per_t * r.t as f64)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    /// Which bound family was evaluated.
    pub form: String,
    pub rounds: usize,
    pub constants: ProblemConstants,
    pub bound_constants: BoundConstants,
    pub bounds: BoundPair,
    pub mean_path_length: f64,
    pub check: BoundCheck,
}

impl BoundsReport {
    pub fn passed(&self) -> bool {
        self.check.passed()
    }
}

/// Bounds matching an experiment's schedule and comparator.
pub fn bounds_for(
    config: &ExperimentConfig,
    mean_path: f64,
) -> Result<(String, BoundConstants, BoundPair)> {
    let constants = config.constants()?;
    let schedule = config.build_schedule(&constants)?;
    let sets = config.sets()?;
    let w_min = 1.0 / config.adversary.learners as f64;
    let bc = compute_bound_constants(
        &constants,
        config.adversary.constraints,
        &sets,
        w_min,
        config.graph.iota,
        &schedule,
    )?;
    let t = config.rounds;
    let dynamic = config.comparator == ComparatorKind::Dynamic;
    let (form, pair) = match config.algorithm {
        Algorithm::OnePoint if config.is_preset() && !dynamic => {
            ("corollary1", corollary1_bounds(&bc, t)?)
        }
        Algorithm::OnePoint => ("theorem1", theorem1_bounds(&bc, t, mean_path)?),
        Algorithm::TwoPoint if !dynamic => ("corollary2", corollary2_bounds(&bc, t)?),
        Algorithm::TwoPoint => (
            "theorem2",
            crate::metrics::theorem2_bounds(&bc, t, mean_path)?,
        ),
    };
    Ok((form.to_string(), bc, pair))
}

/// Runs the ensemble and compares terminal means with the bounds.
pub fn check_bounds(config: &ExperimentConfig) -> Result<(BoundsReport, ExperimentResult)> {
    let result = run_experiment(config)?;
    let report = bounds_report(config, &result)?;
    Ok((report, result))
}

pub fn bounds_report(config: &ExperimentConfig, result: &ExperimentResult) -> Result<BoundsReport> {
    let n = result.members.len() as f64;
    let mean_path = result
        .members
        .iter()
        .map(|m| m.comparator.path_length)
        .sum::<f64>()
        / n;
    let (form, bound_constants, bounds) = bounds_for(config, mean_path)?;
    let regrets: Vec<f64> = result.members.iter().map(|m| m.terminal_regret).collect();
    let violations: Vec<f64> = result
        .members
        .iter()
        .map(|m| m.terminal_violation)
        .collect();
    Ok(BoundsReport {
        form,
        rounds: config.rounds,
        constants: config.constants()?,
        bound_constants,
        bounds,
        mean_path_length: mean_path,
        check: bound_check(&regrets, &violations, bounds)?,
    })
}

pub fn write_bounds_report(report: &BoundsReport, dir: &Path) -> Result<PathBuf> {
    write_json(dir, "bounds.json", report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfflineMember {
    pub seeds: MemberSeeds,
    pub kind: ComparatorKind,
    /// Static decision, one vector per learner; empty for dynamic comparators.
    pub decision: Vec<Vec<f64>>,
    pub certificates: Vec<Certificate>,
    pub path_length: f64,
}

/// Solves the configured comparator of every member without running the
/// learners.
pub fn solve_offline(config: &ExperimentConfig) -> Result<Vec<OfflineMember>> {
    config.validate()?;
    with_pool(config.parallel, || {
        (0..config.ensemble)
            .into_par_iter()
            .map(|k| {
                let seeds = config.member_seeds(k);
                let adversary = config.adversary_model(&seeds)?;
                let (comparator, certificates, path_length) =
                    comparator_for(config, &adversary, config.comparator)?;
                let decision = match comparator {
                    Comparator::Static(x) => {
                        x.iter().map(|v| v.iter().copied().collect()).collect()
                    }
                    Comparator::Dynamic(_) => Vec::new(),
                };
                Ok(OfflineMember {
                    seeds,
                    kind: config.comparator,
                    decision,
                    certificates,
                    path_length,
                })
            })
            .collect::<Result<Vec<_>>>()
    })?
}

pub fn write_offline(members: &[OfflineMember], dir: &Path) -> Result<PathBuf> {
    write_json(dir, "offline.json", &members)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MemberValidation {
    pub seeds: MemberSeeds,
    pub graph: Assumption1Report,
    pub constants: ConstantsAudit,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub constants: ProblemConstants,
    pub members: Vec<MemberValidation>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.members
            .iter()
            .all(|m| m.graph.passed() && m.constants.passed())
    }
}

/// Rounds sampled by the constants audit.
const AUDIT_ROUNDS: usize = 20;
const AUDIT_POINTS: usize = 20;

/// Audits the graph sequence and the problem constants of every member
/// without running the learners.
pub fn validate_experiment(config: &ExperimentConfig) -> Result<ValidationReport> {
    config.validate()?;
    let constants = config.constants()?;
    let members = with_pool(config.parallel, || {
        (0..config.ensemble)
            .into_par_iter()
            .map(|k| {
                let seeds = config.member_seeds(k);
                let graph = config.graph_schedule(&seeds)?;
                let matrices: Vec<_> = (1..=config.rounds).map(|t| graph.generate(t)).collect();
                let graph_report =
                    validate_assumption1(&matrices, config.graph.iota, graph.w_min())?;
                let adversary = config.adversary_model(&seeds)?;
                let step = (config.rounds / AUDIT_ROUNDS).max(1);
                let rounds: Vec<usize> = (1..=config.rounds).step_by(step).collect();
                let audit = audit_constants(
                    &adversary,
                    &constants,
                    &rounds,
                    AUDIT_POINTS,
                    seeds.adversary,
                );
                Ok(MemberValidation {
                    seeds,
                    graph: graph_report,
                    constants: audit,
                })
            })
            .collect::<Result<Vec<_>>>()
    })??;
    Ok(ValidationReport { constants, members })
}

pub fn write_validation(report: &ValidationReport, dir: &Path) -> Result<PathBuf> {
    write_json(dir, "validation.json", report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(algorithm: Algorithm) -> ExperimentConfig {
        let schedule = match algorithm {
            Algorithm::OnePoint => ScheduleConfig {
                theta1: Some(5.0 / 6.0),
                ..Default::default()
            },
            Algorithm::TwoPoint => ScheduleConfig {
                kappa: Some(0.5),
                ..Default::default()
            },
        };
        ExperimentConfig {
            algorithm,
            schedule,
            adversary: AdversaryConfig {
                learners: 3,
                constraints: 1,
                dims: Dims::Uniform(2),
                half_width: 10.0,
                set: SetKind::Box,
                ranges: Default::default(),
            },
            graph: GraphConfig { rho: 0.2, iota: 1 },
            rounds: 120,
            ensemble: 3,
            seed: 5,
            parallel: 2,
            comparator: ComparatorKind::Static,
            out_dir: PathBuf::from("out"),
            solver: Default::default(),
        }
    }

    #[test]
    fn csv_header_is_stable() {
        let mut buf = Vec::new();
        write_csv(
            &[SummaryRow {
                t: 1,
                mean_regret_per_t: 0.5,
                se_regret: 0.0,
                mean_violation_per_t: 2.0,
                se_violation: 0.25,
                max_dual_norm: 1.0,
            }],
            &mut buf,
        )
        .unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, format!("{CSV_HEADER}\n1,0.5,0.0,2.0,0.25,1.0\n"));
    }

    #[test]
    fn rows_match_members() {
        let cfg = small(Algorithm::TwoPoint);
        let res = run_experiment(&cfg).unwrap();
        assert_eq!(res.rows.len(), cfg.rounds);
        assert_eq!(res.terminal, res.rows.last().copied());
        let t = cfg.rounds as f64;
        let mean = res.members.iter().map(|m| m.terminal_regret).sum::<f64>() / 3.0 / t;
        assert!(
            (res.terminal.unwrap().mean_regret_per_t - mean).abs() < 1e-9 * mean.abs().max(1.0)
        );
        for m in &res.members {
            assert_eq!(m.loss_queries, 2 * 3 * (cfg.rounds as u64 - 1));
        }
    }

    #[test]
    fn output_does_not_depend_on_parallelism() {
        let mut cfg = small(Algorithm::OnePoint);
        cfg.parallel = 1;
        let a = run_experiment(&cfg).unwrap();
        cfg.parallel = 3;
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(a.rows, b.rows);
    }

    #[test]
    fn summary_round_trips_config() {
        let cfg = small(Algorithm::OnePoint);
        let res = run_experiment(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        res.write(dir.path()).unwrap();
        let json: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join(SUMMARY_FILE)).unwrap())
                .unwrap();
        let back: ExperimentConfig = serde_json::from_value(json["config"].clone()).unwrap();
        assert_eq!(back, cfg);
        let csv = fs::read_to_string(dir.path().join(CSV_FILE)).unwrap();
        assert_eq!(csv.lines().count(), cfg.rounds + 1);
        assert_eq!(csv.lines().next().unwrap(), CSV_HEADER);
    }

    #[test]
    fn validation_passes_on_generated_instances() {
        let report = validate_experiment(&small(Algorithm::TwoPoint)).unwrap();
        assert!(report.passed(), "{report:?}");
    }

    #[test]
    fn dynamic_regret_dominates_static() {
        let mut cfg = small(Algorithm::TwoPoint);
        cfg.ensemble = 2;
        let stat = run_experiment(&cfg).unwrap();
        cfg.comparator = ComparatorKind::Dynamic;
        let dynm = run_experiment(&cfg).unwrap();
        for (s, d) in stat.members.iter().zip(&dynm.members) {
            let scale = s.comparator.loss.abs().max(1.0);
            assert!(d.terminal_regret >= s.terminal_regret - 1e-3 * scale);
            assert!(d.comparator.path_length > 0.0);
        }
    }
}
