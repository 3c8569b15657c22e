use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dbco::harness::{
    self, check_bounds, fit_sublinearity, run_experiment, solve_offline, validate_experiment,
    ExperimentConfig,
};

#[derive(Parser)]
#[command(
    name = "dbco",
    version,
    about = "Distributed bandit online convex optimization experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the ensemble and write metrics.csv and summary.json.
    Run(Common),
    /// Run the ensemble and compare terminal means with the theoretical bounds.
    CheckBounds(Common),
    /// Solve the offline comparators only.
    SolveOffline(Common),
    /// Audit graph and problem assumptions without running the learners.
    Validate(Common),
}

#[derive(Args)]
struct Common {
    /// TOML experiment configuration.
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    ensemble: Option<usize>,
    #[arg(long)]
    parallel: Option<usize>,
}

impl Common {
    fn load(&self) -> dbco::Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(d) = &self.out_dir {
            cfg.out_dir = d.clone();
        }
        if let Some(e) = self.ensemble {
            cfg.ensemble = e;
        }
        if let Some(p) = self.parallel {
            cfg.parallel = p;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn execute(command: Command) -> dbco::Result<bool> {
    match command {
        Command::Run(c) => {
            let cfg = c.load()?;
            let res = run_experiment(&cfg)?;
            res.write(&cfg.out_dir)?;
            let last = res.terminal.expect("at least two rounds");
            println!(
                "T={} ensemble={} Reg/T={:.6e} (se {:.2e}) viol/T={:.6e} (se {:.2e})",
                last.t,
                cfg.ensemble,
                last.mean_regret_per_t,
                last.se_regret,
                last.mean_violation_per_t,
                last.se_violation
            );
            if let Ok(fit) = fit_sublinearity(&res.mean_violation_series(), 0.5) {
                println!(
                    "violation tail slope {:.4} +/- {:.4}",
                    fit.slope,
                    1.96 * fit.std_err
                );
            }
            println!("wrote {}", cfg.out_dir.display());
            Ok(true)
        }
        Command::CheckBounds(c) => {
            let cfg = c.load()?;
            let (report, res) = check_bounds(&cfg)?;
            res.write(&cfg.out_dir)?;
            harness::write_bounds_report(&report, &cfg.out_dir)?;
            let k = &report.check;
            println!(
                "{}: regret {:.4e} <= {:.4e} [{}] (slack {:.3e}); violation {:.4e} <= {:.4e} [{}] (slack {:.3e})",
                report.form,
                k.mean_regret,
                k.regret_bound,
                if k.regret_ok { "ok" } else { "FAIL" },
                k.regret_slack,
                k.mean_violation,
                k.violation_bound,
                if k.violation_ok { "ok" } else { "FAIL" },
                k.violation_slack
            );
            Ok(report.passed())
        }
        Command::SolveOffline(c) => {
            let cfg = c.load()?;
            let members = solve_offline(&cfg)?;
            let path = harness::write_offline(&members, &cfg.out_dir)?;
            for m in &members {
                let worst = m
                    .certificates
                    .iter()
                    .map(|c| c.normalized_violation)
                    .fold(0.0, f64::max);
                let objective: f64 = m.certificates.iter().map(|c| c.objective).sum();
                println!(
                    "member {}: objective {objective:.6e}, normalized violation {worst:.2e}",
                    m.seeds.member
                );
            }
            println!("wrote {}", path.display());
            Ok(true)
        }
        Command::Validate(c) => {
            let cfg = c.load()?;
            let report = validate_experiment(&cfg)?;
            let path = harness::write_validation(&report, &cfg.out_dir)?;
            for m in &report.members {
                println!(
                    "member {}: graph {} constants {}",
                    m.seeds.member,
                    if m.graph.passed() { "ok" } else { "FAIL" },
                    if m.constants.passed() { "ok" } else { "FAIL" }
                );
            }
            println!("wrote {}", path.display());
            Ok(report.passed())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
