//! `manifold`: command-line front end for the free-energy functionals.
//!
//! Exit codes: 0 success, 1 invalid configuration or input, 2 numerical failure
//! (no convergence, guarded domain, work budget), 3 a verification check failed.

mod commands;
mod config;

use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;

use commands::{Output, RouteArg};

#[derive(Debug, Parser)]
#[command(
    name = "manifold",
    version,
    about = "Free-energy functionals for elastic manifolds and coupled spherical spin glasses"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// Seed for every random stream.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Tolerance override (solver tolerance, or the pass threshold for `verify`).
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Directory for JSON and CSV artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true, env = "MANIFOLD_THREADS")]
    threads: Option<usize>,
}

#[derive(Debug, Args)]
struct ConfigArg {
    /// JSON configuration file.
    #[arg(long)]
    config: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Inverse of the resolvent-diagonal map.
    Kd {
        #[command(subcommand)]
        cmd: KdCmd,
    },
    /// Profile conversions.
    Profile {
        #[command(subcommand)]
        cmd: ProfileCmd,
    },
    /// Functional evaluation.
    Functional {
        #[command(subcommand)]
        cmd: FunctionalCmd,
    },
    /// Minimize the spherical functional over profiles.
    Minimize(ConfigArg),
    /// Euclidean free energy.
    Euclidean {
        #[command(subcommand)]
        cmd: EuclideanCmd,
    },
    /// Cascade recursion checks.
    Rpc {
        #[command(subcommand)]
        cmd: RpcCmd,
    },
    /// Monte Carlo samplers.
    Mc {
        #[command(subcommand)]
        cmd: McCmd,
    },
    /// Run acceptance criteria.
    Verify {
        /// `all`, a group name, or a criterion id; repeatable or comma separated.
        #[arg(long, value_delimiter = ',', default_value = "all")]
        suite: Vec<String>,
    },
}

#[derive(Debug, Subcommand)]
enum KdCmd {
    /// Solve `diag((D+K)⁻¹) = u` for `K`.
    Solve(ConfigArg),
}

#[derive(Debug, Subcommand)]
enum ProfileCmd {
    /// Convert a Talagrand or Panchenko profile to continuum form.
    Convert(ConfigArg),
}

#[derive(Debug, Subcommand)]
enum FunctionalCmd {
    /// Evaluate `ℬ`, `𝒜`, `𝒫` or the cascade quantities.
    Eval {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long, value_enum, default_value = "direct")]
        route: RouteArg,
    },
}

#[derive(Debug, Subcommand)]
enum EuclideanCmd {
    /// `sup_q inf 𝒫` with its certificate.
    FreeEnergy(ConfigArg),
}

#[derive(Debug, Subcommand)]
enum RpcCmd {
    /// Compare `Y^b` from the recursion with its closed form.
    VerifyYb(ConfigArg),
    /// Finite-replica values `𝒜₁`, `𝒜₂` against the limit.
    #[command(name = "a-m")]
    AM(ConfigArg),
}

#[derive(Debug, Subcommand)]
enum McCmd {
    /// Empirical field covariance against its target.
    Covariance(ConfigArg),
    /// Check the constant-shift identity in `h`.
    HShift(ConfigArg),
    /// Quenched free energy at small N against the annealed value.
    FreeEnergyDemo(ConfigArg),
}

fn load<T: DeserializeOwned>(c: &ConfigArg) -> anyhow::Result<T> {
    config::load(&c.config)
}

/// Command name used for artifact files.
fn dispatch(cmd: &Command, g: &Global) -> anyhow::Result<(&'static str, Output)> {
    let seed = g.seed;
    Ok(match cmd {
        Command::Kd {
            cmd: KdCmd::Solve(c),
        } => ("kd_solve", commands::kd_solve(load(c)?, g.tol)?),
        Command::Profile {
            cmd: ProfileCmd::Convert(c),
        } => ("profile_convert", commands::profile_convert(load(c)?)?),
        Command::Functional {
            cmd: FunctionalCmd::Eval { config, route },
        } => (
            "functional_eval",
            commands::functional_eval(load(config)?, *route)?,
        ),
        Command::Minimize(c) => ("minimize", commands::minimize(load(c)?, seed)?),
        Command::Euclidean {
            cmd: EuclideanCmd::FreeEnergy(c),
        } => (
            "euclidean_free_energy",
            commands::euclidean_free_energy(load(c)?, seed)?,
        ),
        Command::Rpc {
            cmd: RpcCmd::VerifyYb(c),
        } => ("rpc_verify_yb", commands::rpc_verify_yb(load(c)?, seed)?),
        Command::Rpc { cmd: RpcCmd::AM(c) } => ("rpc_a_m", commands::rpc_a_m(load(c)?, seed)?),
        Command::Mc {
            cmd: McCmd::Covariance(c),
        } => ("mc_covariance", commands::mc_covariance(load(c)?, seed)?),
        Command::Mc {
            cmd: McCmd::HShift(c),
        } => ("mc_h_shift", commands::mc_h_shift(load(c)?, seed)?),
        Command::Mc {
            cmd: McCmd::FreeEnergyDemo(c),
        } => (
            "mc_free_energy_demo",
            commands::mc_free_energy_demo(load(c)?, seed)?,
        ),
        Command::Verify { suite } => ("verify", commands::verify_suites(suite, g.tol)?),
    })
}

fn write_artifacts(dir: &Path, name: &str, out: &Output) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    std::fs::write(
        dir.join(format!("{name}.json")),
        serde_json::to_string_pretty(&out.json)? + "\n",
    )?;
    for t in &out.tables {
        let mut w = csv::Writer::from_path(dir.join(format!("{name}_{}.csv", t.name)))?;
        w.write_record(&t.header)?;
        for row in &t.rows {
            w.write_record(row)?;
        }
        w.flush()?;
    }
    Ok(())
}

/// Exit code for a failure: 1 for bad input, 2 for numerical failure.
fn exit_code(e: &anyhow::Error) -> i32 {
    use manifold_core::Error as E;
    match e.downcast_ref::<E>() {
        Some(
            E::NoConvergence { .. }
            | E::OutOfGuard { .. }
            | E::BudgetExceeded { .. }
            | E::TruncationInsufficient { .. },
        ) => 2,
        _ => 1,
    }
}

/// Final residual carried by a numerical failure, if any.
fn failure_residual(e: &anyhow::Error) -> Option<f64> {
    use manifold_core::Error as E;
    match e.downcast_ref::<E>() {
        Some(E::NoConvergence { residual, .. } | E::OutOfGuard { residual, .. }) => Some(*residual),
        _ => None,
    }
}

/// Prints pretty JSON to stdout; a closed pipe is not an error.
fn emit(v: &serde_json::Value) {
    use std::io::Write;
    let text = serde_json::to_string_pretty(v).unwrap_or_default();
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn run(cli: &Cli) -> anyhow::Result<i32> {
    if let Some(n) = cli.global.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()?;
    }
    let (name, out) = dispatch(&cli.command, &cli.global)?;
    emit(&out.json);
    if let Some(dir) = &cli.global.out {
        write_artifacts(dir, name, &out)?;
    }
    Ok(out.exit)
}

fn main() {
    // Usage errors are input errors (exit 1); help and version exit 0.
    let cli = Cli::try_parse().unwrap_or_else(|e| {
        let _ = e.print();
        std::process::exit(if e.use_stderr() { 1 } else { 0 })
    });
    let code = match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            let code = exit_code(&e);
            eprintln!("error: {e:#}");
            let report = serde_json::json!({
                "status": if code == 2 { "numerical-failure" } else { "invalid-input" },
                "message": format!("{e:#}"),
                "residual": failure_residual(&e),
            });
            emit(&report);
            code
        }
    };
    std::process::exit(code);
}
