use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use filmlab::commands::{self, Context, InequalityParams};
use filmlab::{CliError, ExperimentConfig};
use filmlab_core::solver::RunStatus;

#[derive(Parser)]
#[command(name = "filmlab", version, about = "Stochastic thin-film laboratory")]
struct Cli {
    /// TOML experiment file; the prototype configuration when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configuration seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the coefficients, noise and solution-space parameters.
    Validate,
    /// Run the configured number of trajectories.
    Simulate,
    /// Stratonovich vs shifted Itô identity and the Heun gap.
    CompareSchemes {
        #[arg(long, default_value_t = 4)]
        levels: u8,
    },
    /// Coupled temporal refinement and spatial refinement.
    Converge {
        #[arg(long, default_value_t = 4)]
        levels: u8,
        #[arg(long, default_value_t = 3)]
        spatial_levels: u8,
    },
    /// Explicit sup bound over a random corpus and the gamma table.
    Inequalities {
        #[arg(long, default_value_t = 1000)]
        corpus: usize,
        #[arg(long, default_value_t = 8)]
        modes: u32,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true, default_values_t = [-0.4, 0.0, 0.5])]
        beta: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_values_t = [3.0, 8.0])]
        theta: Vec<f64>,
    },
    /// Maximal-regularity ratios and the Caccioppoli ratio.
    Maxreg,
    /// Version, RNG scheme and derived quantities.
    Info,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut config = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        config.seed = s;
    }
    let write = cli.out.is_some();
    let mut ctx = Context::new(config);
    ctx.threads = cli.threads;
    if let Some(out) = cli.out {
        ctx.out = out;
    }
    match cli.command {
        Command::Validate => {
            let rep = commands::cmd_validate(&ctx, write)?;
            print!("{}", rep.table());
            if !rep.all_pass {
                return Err(CliError::Property("validation failed".into()));
            }
        }
        Command::Simulate => {
            let rep = commands::cmd_simulate(&ctx)?;
            println!(
                "{} of {} path(s) completed -> {}",
                rep.completed,
                rep.paths.len(),
                ctx.out.display()
            );
            for p in &rep.paths {
                if let RunStatus::BlowUp(b) = &p.status {
                    eprintln!("path {}: blow-up {}", p.path, commands::describe_blow_up(b));
                }
            }
            if rep.blow_ups > 0 {
                return Err(CliError::BlowUp(rep.blow_ups));
            }
        }
        Command::CompareSchemes { levels } => {
            let rep = commands::cmd_compare_schemes(&ctx, levels)?;
            println!("bit-equal paths: {}/{}", rep.bit_equal_paths, rep.paths);
            for (dt, g) in rep.dts.iter().zip(&rep.mean_gaps) {
                println!("dt={dt:.6e} heun_gap={g:.6e}");
            }
            println!("fitted order: {}", fmt_order(rep.order));
        }
        Command::Converge {
            levels,
            spatial_levels,
        } => {
            let rep = commands::cmd_converge(&ctx, levels, spatial_levels)?;
            for (dt, e) in rep.temporal.dts.iter().zip(&rep.temporal.mean_errors) {
                println!("dt={dt:.6e} error={e:.6e}");
            }
            println!(
                "temporal order: {} (paths used {}, excluded {})",
                fmt_order(rep.temporal.order),
                rep.temporal.used_paths,
                rep.temporal.excluded_paths
            );
            if let Some(s) = &rep.spatial {
                println!("spatial order: {}", fmt_order(s.order));
            }
        }
        Command::Inequalities {
            corpus,
            modes,
            beta,
            theta,
        } => {
            let params = InequalityParams {
                corpus,
                n: ctx.config.grid.n,
                modes,
                seed: ctx.config.seed,
                betas: beta,
                thetas: theta,
            };
            let rep = commands::cmd_inequalities(&ctx, &params, write)?;
            for c in &rep.explicit {
                println!(
                    "beta={:<5} theta={:<4} pass {}/{} max lhs/rhs {:.6}",
                    c.beta,
                    c.theta,
                    c.passes,
                    c.passes + c.failures,
                    c.max_ratio
                );
            }
            for c in &rep.calibration {
                println!(
                    "beta={:<5} theta={:<4} r313 {:.4e} r_min {:.4e} r_max {:.4e}",
                    c.beta, c.theta, c.r_313, c.r_energy_min, c.r_energy_max
                );
            }
            for g in &rep.gamma_table {
                println!("beta={:<5} gamma in [{:.6}, {:.6}]", g.beta, g.lo, g.hi);
            }
            if rep.total_failures > 0 {
                return Err(CliError::Property(format!(
                    "{} explicit sup-bound failures",
                    rep.total_failures
                )));
            }
        }
        Command::Maxreg => {
            let (mr, cac) = commands::cmd_maxreg(&ctx)?;
            for r in &mr.runs {
                println!(
                    "lambda={} kappa={} spread {:.6} refined {:.6} change {:.3e}",
                    r.lambda,
                    r.weight.kappa,
                    r.stats.spread,
                    r.stats.refined_spread,
                    r.stats.refinement_change
                );
            }
            println!(
                "caccioppoli max ratio per scale {:?}, scale spread {:.4}, constant control {}",
                cac.stats.max_ratio, cac.stats.scale_spread, cac.constant_control
            );
        }
        Command::Info => print!("{}", commands::info(&ctx)?),
    }
    Ok(())
}

fn fmt_order(o: Option<f64>) -> String {
    o.map_or_else(|| "n/a".into(), |v| format!("{v:.4}"))
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
