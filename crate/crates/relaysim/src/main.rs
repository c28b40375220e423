//! Command-line interface: scenario runs, closed-form bound queries, bit
//! scaling, figure regeneration, and the self-test suite.
//!
//! Exit status: 0 on success, 1 on usage or configuration errors, 2 on
//! numerical failures.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use relaysim::bounds::{
    b1_limit, ceiling_fixed_hop1, ceiling_fixed_hop2, optimal_theta, rate_loss_bound_high_snr,
    scale_bits, sum_feedback,
};
use relaysim::scenario::{
    parse_config, power_from_db, report_selftest, reproduce_figure, run_scenario, run_selftest,
    FigureOptions, DEFAULT_SEED, DEFAULT_TRIALS,
};
use relaysim::SimError;

#[derive(Parser)]
#[command(
    name = "relaysim",
    about = "Two-hop MIMO relay downlink simulator with quantized CSI feedback",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a sweep described by a key = value config file and write CSV.
    Simulate {
        /// Path to the scenario config.
        config: PathBuf,
    },
    /// Print the closed-form rate-loss bound and rate ceilings.
    Bounds {
        #[arg(long = "M")]
        bs_antennas: usize,
        #[arg(long = "N")]
        relay_antennas: usize,
        #[arg(long = "P1-dB")]
        p1_db: f64,
        #[arg(long = "P2-dB")]
        p2_db: f64,
        #[arg(long = "B1")]
        b1: u32,
        #[arg(long = "B2")]
        b2: u32,
    },
    /// Print the feedback-bit scaling plan for a target rate-loss budget.
    ScaleBits {
        #[arg(long = "M")]
        bs_antennas: usize,
        #[arg(long = "N")]
        relay_antennas: usize,
        #[arg(long = "P1-dB")]
        p1_db: f64,
        #[arg(long = "P2-dB")]
        p2_db: f64,
        /// Loss budget factor: the per-user bound is (1/2) log2(b).
        #[arg(long = "b")]
        b: f64,
        /// Budget split between the hops, in (0, 1).
        #[arg(long = "theta")]
        theta: Option<f64>,
    },
    /// Print the sum-feedback-minimizing budget split.
    ThetaOpt {
        #[arg(long = "M")]
        bs_antennas: usize,
        #[arg(long = "N")]
        relay_antennas: usize,
    },
    /// Regenerate a preset figure (CSV plus gnuplot script).
    Figure {
        /// Figure id, 2 through 8.
        id: u8,
        #[arg(long = "out", default_value = "figures")]
        out: PathBuf,
        #[arg(long = "trials", default_value_t = DEFAULT_TRIALS)]
        trials: usize,
        #[arg(long = "seed", default_value_t = DEFAULT_SEED)]
        seed: u64,
    },
    /// Run the condensed invariant suite.
    Selftest {
        #[arg(long = "trials", default_value_t = 2000)]
        trials: usize,
        #[arg(long = "seed", default_value_t = DEFAULT_SEED)]
        seed: u64,
    },
}

const EXIT_USAGE: u8 = 1;
const EXIT_NUMERICAL: u8 = 2;

fn exit_for(e: &SimError) -> u8 {
    match e {
        SimError::Config(_) | SimError::Dimension(_) => EXIT_USAGE,
        _ => EXIT_NUMERICAL,
    }
}

fn run(cli: Cli) -> Result<(), u8> {
    match cli.command {
        Command::Simulate { config } => {
            let text = std::fs::read_to_string(&config).map_err(|e| {
                eprintln!("cannot read {}: {e}", config.display());
                EXIT_USAGE
            })?;
            let scenario = parse_config(&text).map_err(|e| {
                eprintln!("{e}");
                EXIT_USAGE
            })?;
            let rows = run_scenario(&scenario).map_err(|e| {
                eprintln!("{e}");
                exit_for(&e)
            })?;
            println!(
                "wrote {} rows to {}",
                rows.len(),
                scenario.output_dir.join("sweep.csv").display()
            );
            for row in &rows {
                if let (Some(b1), Some(b2)) = (row.b1_used, row.b2_used) {
                    println!(
                        "  point {}: B1={} B2={} discards={}",
                        row.sweep_value, b1, b2, row.discards
                    );
                }
            }
            Ok(())
        }
        Command::Bounds {
            bs_antennas,
            relay_antennas,
            p1_db,
            p2_db,
            b1,
            b2,
        } => {
            let p1 = power_from_db(p1_db);
            let p2 = power_from_db(p2_db);
            let loss = rate_loss_bound_high_snr(
                bs_antennas,
                relay_antennas,
                p1,
                p2,
                b1 as f64,
                b2 as f64,
            );
            let c1 = ceiling_fixed_hop1(bs_antennas, relay_antennas, b1).map_err(|e| {
                eprintln!("{e}");
                exit_for(&e)
            })?;
            let c2 = ceiling_fixed_hop2(bs_antennas, relay_antennas, b2).map_err(|e| {
                eprintln!("{e}");
                exit_for(&e)
            })?;
            let half_n = relay_antennas as f64 / 2.0;
            println!("per-user rate-loss bound (high-SNR term): {loss:.6} b/s/Hz");
            println!(
                "rate ceiling, B1={b1} fixed, perfect hop-2: {:.6} b/s/Hz sum rate{}",
                half_n * c1.value,
                if c1.approximate { " (asymptotic harmonic sum)" } else { "" }
            );
            println!(
                "rate ceiling, B2={b2} fixed, perfect hop-1: {:.6} b/s/Hz sum rate{}",
                half_n * c2.value,
                if c2.approximate { " (asymptotic harmonic sum)" } else { "" }
            );
            Ok(())
        }
        Command::ScaleBits {
            bs_antennas,
            relay_antennas,
            p1_db,
            p2_db,
            b,
            theta,
        } => {
            let theta = theta.unwrap_or(0.5);
            let p1 = power_from_db(p1_db);
            let p2 = power_from_db(p2_db);
            let plan = scale_bits(bs_antennas, relay_antennas, p1, p2, b, theta).map_err(|e| {
                eprintln!("{e}");
                exit_for(&e)
            })?;
            let total = sum_feedback(bs_antennas, relay_antennas, p1, p2, b, theta)
                .expect("same validation as scale_bits");
            println!("B1 = {} (exact {:.4})", plan.b1, plan.b1_exact);
            println!("B2 = {} (exact {:.4})", plan.b2, plan.b2_exact);
            println!("theta = {}, alpha = {:.4}, target loss = {:.4} b/s/Hz per user", plan.theta, plan.alpha, 0.5 * b.log2());
            println!("sum feedback rate (exact bits) = {total:.4} bits");
            println!(
                "B1 limit as P1 grows, P2 fixed: {:.4} bits",
                b1_limit(bs_antennas, relay_antennas, p2, b)
            );
            Ok(())
        }
        Command::ThetaOpt {
            bs_antennas,
            relay_antennas,
        } => {
            if bs_antennas < 2 || relay_antennas < 2 || bs_antennas < relay_antennas {
                eprintln!("theta-opt needs M >= N >= 2");
                return Err(EXIT_USAGE);
            }
            println!("theta* = {}", optimal_theta(bs_antennas, relay_antennas));
            Ok(())
        }
        Command::Figure {
            id,
            out,
            trials,
            seed,
        } => {
            let opts = FigureOptions {
                out_dir: out,
                trials,
                seed,
            };
            let fig = reproduce_figure(id, &opts).map_err(|e| {
                eprintln!("{e}");
                exit_for(&e)
            })?;
            println!("wrote {}", fig.csv_path.display());
            println!("wrote {}", fig.script_path.display());
            Ok(())
        }
        Command::Selftest { trials, seed } => {
            let checks = run_selftest(trials, seed);
            let ok = report_selftest(&checks, std::io::stdout());
            if ok {
                Ok(())
            } else {
                Err(EXIT_NUMERICAL)
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap's default exit code for usage errors is 2; this tool
            // reserves 2 for numerical failures
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(code) => ExitCode::from(code),
    }
}
