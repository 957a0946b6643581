use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use nashcl::config::{Config, Scenario};
use nashcl::gain_advisor::{algorithm1, estimate_constants, GainBoundsReport};
use nashcl::lq_oracle::{oracle_weights, solve_coupled_riccati, DEFAULT_MAX_ITER, DEFAULT_TOL};
use nashcl::simulator::{run, RunRecord};
use nashcl::linalg::Vector;
use nashcl::Error;

const EXIT_CONFIG: u8 = 1;
const EXIT_NUMERICAL: u8 = 2;
const EXIT_CONDITIONS: u8 = 3;

#[derive(Parser)]
#[command(name = "nashcl", version, about = "Concurrent-learning actor-critic solver for N-player differential games")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Clone)]
struct Manifest {
    /// Scenario document (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the learning system and write run.csv and summary.txt.
    Simulate(Manifest),
    /// Evaluate the sufficient gain conditions over the configured compact set.
    CheckGains(Manifest),
    /// Solve the coupled Riccati equations of a linear-quadratic game.
    Oracle(Manifest),
    /// Print the version.
    Version,
}

enum Failure {
    Config(String),
    Numerical(String),
    Conditions,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::NonFiniteState { .. }
            | Error::GammaCollapse { .. }
            | Error::NoConvergence { .. }
            | Error::NonHurwitz { .. }
            | Error::NonFinite { .. } => Failure::Numerical(e.to_string()),
            other => Failure::Config(other.to_string()),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Config(format!("{e:#}"))
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Simulate(m) => simulate(&m),
        Command::CheckGains(m) => check_gains(&m),
        Command::Oracle(m) => oracle(&m),
        Command::Version => {
            println!("nashcl {}", env!("CARGO_PKG_VERSION"));
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("numerical failure: {msg}");
            ExitCode::from(EXIT_NUMERICAL)
        }
        Err(Failure::Conditions) => ExitCode::from(EXIT_CONDITIONS),
    }
}

fn load(m: &Manifest) -> Result<Scenario, Failure> {
    let mut config = Config::load(&m.config)?;
    if let Some(seed) = m.seed {
        config.seed = seed;
    }
    let scenario = config.build()?;
    fs::create_dir_all(&m.out).with_context(|| format!("cannot create {}", m.out.display()))?;
    Ok(scenario)
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), Failure> {
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

fn simulate(m: &Manifest) -> Outcome {
    let scenario = load(m)?;
    let cfg = scenario.simulation_config()?;
    let reference = scenario.reference()?;
    let (record, abort) = match run(&scenario.game, &scenario.basis, &cfg) {
        Ok(r) => (r, None),
        Err(a) => (a.record, Some(a.error)),
    };
    write(&m.out, "run.csv", &record.to_csv_string())?;
    let summary = summarize(&scenario, &record, reference.as_ref().map(|r| r.weights.as_slice()), abort.as_ref());
    write(&m.out, "summary.txt", &summary)?;
    print!("{summary}");
    match abort {
        Some(e) => Err(Failure::Numerical(e.to_string())),
        None => Ok(()),
    }
}

fn summarize(
    scenario: &Scenario,
    record: &RunRecord,
    reference: Option<&[Vector]>,
    abort: Option<&Error>,
) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "seed: {}", scenario.seed);
    let _ = writeln!(s, "steps: {}", record.steps);
    let last = record.final_sample();
    let _ = writeln!(s, "final time: {:.6}", last.t);
    match abort {
        Some(e) => {
            let _ = writeln!(s, "status: aborted ({e})");
        }
        None => {
            let _ = writeln!(s, "status: completed");
        }
    }
    for i in 0..scenario.players() {
        let c = &scenario.critic[i];
        let _ = writeln!(s, "player {i}:");
        let fmt = |v: &Vector| {
            v.iter().map(|x| format!("{x:.8}")).collect::<Vec<_>>().join(", ")
        };
        let _ = writeln!(s, "  critic weights: [{}]", fmt(&last.critic[i]));
        let _ = writeln!(s, "  actor weights:  [{}]", fmt(&last.actor[i]));
        if let Some(w) = reference {
            let norm = w[i].norm().max(f64::MIN_POSITIVE);
            let _ = writeln!(s, "  reference weights: [{}]", fmt(&w[i]));
            let _ = writeln!(
                s,
                "  critic error: {:.6e} (relative {:.6e})",
                (&w[i] - &last.critic[i]).norm(),
                (&w[i] - &last.critic[i]).norm() / norm
            );
            let _ = writeln!(
                s,
                "  actor error:  {:.6e} (relative {:.6e})",
                (&w[i] - &last.actor[i]).norm(),
                (&w[i] - &last.actor[i]).norm() / norm
            );
        }
        let _ = writeln!(s, "  observed c_lower: {:.6e}", record.observed_c_lower[i]);
        let _ = writeln!(
            s,
            "  rank condition: at start {}, throughout {}",
            record.rank_satisfied_at_start[i], record.rank_satisfied_throughout[i]
        );
        let gl = record.observed_gamma_lower[i];
        let positive = record.samples.iter().all(|x| x.gamma_min_eig[i] > 0.0);
        let bounded = record.samples.iter().all(|x| x.gamma_norm[i] <= c.gamma_bar + 1e-6);
        let regressor_bound = 1.0 / (2.0 * (c.nu * gl).sqrt());
        let regressor_ok = record
            .samples
            .iter()
            .all(|x| x.normalized_regressor_norm[i] <= regressor_bound * (1.0 + 1e-9));
        let verdict = |ok: bool| if ok { "ok" } else { "VIOLATED" };
        let _ = writeln!(s, "  Gamma lambda_min > 0: {}", verdict(positive));
        let _ = writeln!(s, "  |Gamma| <= Gamma_bar: {}", verdict(bounded));
        let _ = writeln!(s, "  |omega/rho| <= 1/(2 sqrt(nu Gamma_lower)): {}", verdict(regressor_ok));
        let _ = writeln!(s, "  observed Gamma_lower: {gl:.6e}");
    }
    if let (Some(z), Some(u)) = (record.max_z_norm, record.ultimate_z_norm) {
        let _ = writeln!(s, "max |Z|: {z:.6e}");
        let _ = writeln!(s, "max |Z| over last 10%: {u:.6e}");
    }
    s
}

fn check_gains(m: &Manifest) -> Outcome {
    let scenario = load(m)?;
    let reference = scenario.reference()?.ok_or_else(|| {
        Failure::Config(
            "check-gains needs ideal weights: use an LQ game with a quadratic basis, or set advisor.ideal_weights and advisor.kappa_v"
                .into(),
        )
    })?;
    let setup = scenario.advisor_setup(&reference)?;
    let report: GainBoundsReport = match scenario.compact_set()? {
        Some(set) => estimate_constants(&setup, &set)?,
        None => {
            let z_init = match &scenario.config.advisor.set {
                Some(nashcl::config::SetSpec::Ball { z_init }) => *z_init,
                _ => unreachable!("compact_set returns None only for a ball"),
            };
            let out = algorithm1(&setup, z_init, scenario.config.advisor.sample_count)?;
            println!("compact-set selection finished after iteration {}", out.iterations);
            if out.needs_richer_basis {
                println!("the radius kept growing: a richer basis is required");
            }
            out.report
        }
    };
    let text = report.to_text();
    write(&m.out, "gain_report.txt", &text)?;
    write(&m.out, "gain_report.json", &report.to_json())?;
    print!("{text}");
    if report.conditions.satisfied() {
        println!("all gain conditions satisfied");
        Ok(())
    } else {
        println!("gain conditions NOT satisfied");
        Err(Failure::Conditions)
    }
}

fn oracle(m: &Manifest) -> Outcome {
    let scenario = load(m)?;
    let lq = scenario.lq.as_ref().ok_or_else(|| {
        Failure::Config("the oracle needs a linear_quadratic game; this config describes a polynomial game".into())
    })?;
    let sol = solve_coupled_riccati(lq, DEFAULT_TOL, DEFAULT_MAX_ITER)?;
    let weights = oracle_weights(&sol, &scenario.basis).ok();
    let mut csv = String::from("player,quantity,index,value\n");
    for (i, p) in sol.p.iter().enumerate() {
        println!("player {i}: P =");
        for r in 0..p.nrows() {
            let row: Vec<String> = (0..p.ncols()).map(|c| format!("{:.10}", p[(r, c)])).collect();
            println!("  [{}]", row.join(", "));
            for c in 0..p.ncols() {
                let _ = writeln!(csv, "{i},P,{r}:{c},{:.16e}", p[(r, c)]);
            }
        }
        if let Some(w) = &weights {
            let items: Vec<String> = w[i].iter().map(|v| format!("{v:.10}")).collect();
            println!("  weights: [{}]", items.join(", "));
            for (k, v) in w[i].iter().enumerate() {
                let _ = writeln!(csv, "{i},W,{k},{v:.16e}");
            }
        }
        println!("  residual: {:.3e}", sol.residuals[i]);
        let _ = writeln!(csv, "{i},residual,0,{:.16e}", sol.residuals[i]);
    }
    let eig: Vec<String> = sol
        .closed_loop_eigenvalues
        .iter()
        .map(|c| format!("{:.6}{:+.6}i", c.re, c.im))
        .collect();
    println!("closed-loop eigenvalues: [{}]", eig.join(", "));
    println!("converged: {} after {} iterations", sol.converged, sol.iterations);
    write(&m.out, "oracle.csv", &csv)?;
    Ok(())
}
