//! `coarsening-lab`: command-line front end for the coarsening experiments.
//!
//! Experiment subcommands read an optional TOML/JSON config (defaults
//! otherwise), apply command-line overrides, run, and write a CSV table plus
//! a JSON sidecar. `rate`, `fredholm` and `renorm` evaluate the analytic
//! pieces directly.
//!
//! Exit codes: 0 success, 2 precondition or usage error, 3 workload refusal,
//! 1 anything else.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use coarsening_core::experiments::{self, ExperimentSpec};
use coarsening_core::fredholm::{prob_xm_nonnegative, QuadratureSpec};
use coarsening_core::rate::{critical_points, phi_hat_plus, phi_plus, radii_admissible, s_second, RateParams};
use coarsening_core::renorm::{check_conditions, constants_alpha1, schedule, ScheduleParams};
use coarsening_core::Error;
use serde_json::json;

#[derive(Parser)]
#[command(name = "coarsening-lab", version, about = "Zero-temperature coarsening and ASEP experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Quadrant Glauber dynamics versus ASEP at one site.
    CouplingCheck(ExperimentArgs),
    /// ASEP current law of large numbers.
    CurrentLln(ExperimentArgs),
    /// ASEP lower-tail probabilities and log-slope fits.
    LdTail(ExperimentArgs),
    /// Erosion time of a minus cube in a plus sea.
    ErosionScaling(ExperimentArgs),
    /// Fixation of a q = 1 box with minus boundary.
    Q1BoxFixation(ExperimentArgs),
    /// Probability that the box centre is minus after time t.
    FixationProbe(ExperimentArgs),
    /// Rate-function table over a grid of ε values, as CSV.
    Rate(RateArgs),
    /// Exact P(x_m(t/γ) ≥ 0) from the Fredholm determinant formula.
    Fredholm(FredholmArgs),
    /// Renormalisation schedule as CSV, followed by a JSON condition report.
    Renorm(RenormArgs),
}

#[derive(Args)]
struct ExperimentArgs {
    /// TOML config, or a JSON spec / result sidecar.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicas: Option<u64>,
    /// CSV output path; the sidecar is written to `<out>.json`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
    /// Print the annotated default config and exit.
    #[arg(long)]
    dump_defaults: bool,
}

#[derive(Args)]
struct RateArgs {
    #[arg(long)]
    q: f64,
    /// Explicit ε values (comma separated); overrides `--points`.
    #[arg(long, value_delimiter = ',')]
    eps: Vec<f64>,
    /// Number of equally spaced ε values in (0, 1).
    #[arg(long, default_value_t = 99)]
    points: usize,
}

#[derive(Args)]
struct FredholmArgs {
    #[arg(long)]
    q: f64,
    #[arg(long)]
    m: u32,
    #[arg(long)]
    t: f64,
    /// Use the ε-adapted contours instead of the defaults.
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    r: Option<f64>,
    #[arg(long)]
    r_prime: Option<f64>,
    #[arg(long = "big-r")]
    big_r: Option<f64>,
    #[arg(long)]
    n_zeta: Option<usize>,
    #[arg(long)]
    n_eta: Option<usize>,
    #[arg(long)]
    n_mu: Option<usize>,
    #[arg(long)]
    n_max: Option<usize>,
}

#[derive(Args)]
struct RenormArgs {
    #[arg(long, default_value_t = 2)]
    d: u32,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long, default_value_t = 1e-3)]
    eps0: f64,
    #[arg(long, default_value_t = 4.0)]
    l0: f64,
    #[arg(long, default_value_t = 5)]
    k_max: usize,
    /// Growth exponent for α > 1.
    #[arg(long, default_value_t = 0.0)]
    delta: f64,
    /// Decay constant; required when α > 1.
    #[arg(long)]
    chi: Option<f64>,
    /// Point at which the smallness conditions are evaluated (default ε0).
    #[arg(long)]
    eps_prime: Option<f64>,
}

fn run_experiment(name: &str, args: &ExperimentArgs) -> anyhow::Result<()> {
    if args.dump_defaults {
        print!("{}", experiments::defaults_toml(name)?);
        return Ok(());
    }
    let mut spec = match &args.config {
        Some(path) => ExperimentSpec::from_file(path).with_context(|| format!("reading {}", path.display()))?,
        None => experiments::default_spec(name)?,
    };
    if spec.params.name() != name {
        return Err(Error::InvalidInput(format!("config describes `{}`, not `{name}`", spec.params.name())).into());
    }
    if let Some(s) = args.seed {
        spec.master_seed = s;
    }
    if let Some(r) = args.replicas {
        spec.replicas = r;
    }
    if let Some(t) = args.threads {
        spec.threads = t;
    }
    if args.out.is_some() {
        spec.out = args.out.clone();
    }
    let result = experiments::run(&spec)?;
    match &spec.out {
        Some(out) => {
            let (csv, side) = result.write(out)?;
            eprintln!("wrote {} and {}", csv.display(), side.display());
            println!("{}", serde_json::to_string_pretty(&result.summary)?);
        }
        None => {
            print!("{}", result.csv_string()?);
            eprintln!("{}", serde_json::to_string(&result.summary)?);
        }
    }
    Ok(())
}

fn run_rate(a: &RateArgs) -> anyhow::Result<()> {
    let params = RateParams::new(a.q)?;
    let grid: Vec<f64> = if a.eps.is_empty() {
        (1..=a.points).map(|k| k as f64 / (a.points + 1) as f64).collect()
    } else {
        a.eps.clone()
    };
    let mut w = csv::Writer::from_writer(std::io::stdout());
    w.write_record(["eps", "phi_hat_plus", "phi_plus", "zeta1", "zeta2", "s2_zeta1", "s2_zeta2", "radii_admissible"])?;
    for &eps in &grid {
        let (z1, z2) = critical_points(eps)?;
        let (s1, s2) = s_second(eps)?;
        w.write_record([
            eps.to_string(),
            phi_hat_plus(eps)?.to_string(),
            phi_plus(eps, &params)?.to_string(),
            z1.to_string(),
            z2.to_string(),
            s1.to_string(),
            s2.to_string(),
            radii_admissible(eps, &params)?.to_string(),
        ])?;
    }
    w.flush()?;
    eprintln!("q = {}, gamma = {}, tau = {}, eps_circ = {}", params.q, params.gamma, params.tau, params.eps_circ);
    Ok(())
}

fn run_fredholm(a: &FredholmArgs) -> anyhow::Result<()> {
    let params = RateParams::new(a.q)?;
    let mut quad = match a.eps {
        Some(e) => QuadratureSpec::for_eps(&params, e)?,
        None => QuadratureSpec::default_for(&params)?,
    };
    quad.r = a.r.unwrap_or(quad.r);
    quad.r_prime = a.r_prime.unwrap_or(quad.r_prime);
    quad.big_r = a.big_r.unwrap_or(quad.big_r);
    quad.n_zeta = a.n_zeta.unwrap_or(quad.n_zeta);
    quad.n_eta = a.n_eta.unwrap_or(quad.n_eta);
    quad.n_mu = a.n_mu.unwrap_or(quad.n_mu);
    quad.n_max = a.n_max.unwrap_or(quad.n_max);
    let report = prob_xm_nonnegative(a.m, a.t, &params, &quad)?;
    let out = json!({ "q": a.q, "m": a.m, "t": a.t, "quadrature": quad, "report": report });
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

fn run_renorm(a: &RenormArgs) -> anyhow::Result<()> {
    let p = ScheduleParams {
        d: a.d,
        alpha: a.alpha,
        c: a.c,
        gamma: a.gamma,
        eps0: a.eps0,
        l0: a.l0,
        delta: a.delta,
        chi: a.chi,
        k_max: a.k_max,
    };
    let rows = schedule(&p)?;
    let mut w = csv::Writer::from_writer(std::io::stdout());
    w.write_record([
        "k",
        "eps_k",
        "n_k",
        "l_k",
        "L_k",
        "t_k",
        "T_k",
        "master_bound_k",
        "bound_holds",
        "time_constraint_holds",
        "underflow",
        "note",
    ])?;
    for r in &rows {
        w.write_record([
            r.k.to_string(),
            r.eps_k.to_string(),
            r.n_k.to_string(),
            r.l_k.to_string(),
            r.big_l_k.to_string(),
            r.t_k.to_string(),
            r.big_t_k.to_string(),
            r.master_bound_k.as_ref().map(|m| m.to_string()).unwrap_or_default(),
            r.bound_holds.map(|b| b.to_string()).unwrap_or_default(),
            r.time_constraint_holds.to_string(),
            r.underflow.to_string(),
            r.master_note.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    drop(w);
    let footer = if a.alpha == 1.0 {
        let (dd, chi) = constants_alpha1(a.d, a.c, a.gamma)?;
        let report = check_conditions(a.eps_prime.unwrap_or(a.eps0), a.d, dd, chi, a.gamma, a.c, Some(&rows))?;
        json!({ "D": dd, "chi": chi, "all_hold": report.all_hold(), "conditions": report })
    } else {
        json!({ "conditions": null, "note": "smallness conditions are stated for α = 1 only" })
    };
    println!();
    println!("{}", serde_json::to_string_pretty(&footer)?);
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(Error::WorkloadExceeded { .. }) => 3,
        Some(Error::InvalidInput(_) | Error::Precondition { .. } | Error::Parse(_)) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::CouplingCheck(a) => run_experiment("coupling-check", a),
        Command::CurrentLln(a) => run_experiment("current-lln", a),
        Command::LdTail(a) => run_experiment("ld-tail", a),
        Command::ErosionScaling(a) => run_experiment("erosion-scaling", a),
        Command::Q1BoxFixation(a) => run_experiment("q1-box-fixation", a),
        Command::FixationProbe(a) => run_experiment("fixation-probe", a),
        Command::Rate(a) => run_rate(a),
        Command::Fredholm(a) => run_fredholm(a),
        Command::Renorm(a) => run_renorm(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
