use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use l1adapt::bounds::Certificate;
use l1adapt::scenario::{
    curve_crossing, curve_is_nonincreasing, parse_range, sweep_is_monotone, write_curve_csv,
    write_sweep_csv, RunError, Scenario, ScenarioError, SimReport,
};
use l1adapt::sim::SimError;

const EXIT_OK: u8 = 0;
const EXIT_FAILED: u8 = 1;
const EXIT_SCHEMA: u8 = 2;
const EXIT_DIVERGED: u8 = 3;

#[derive(Parser)]
#[command(name = "l1adapt", version, about = "Certify and simulate L1 adaptive controllers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the L1 requirement and print the performance bounds.
    Certify {
        /// Scenario file, or `builtin:<name>`.
        scenario: String,
    },
    /// Simulate a scenario and check the applicable bounds.
    Simulate {
        scenario: String,
        /// Co-simulate the closed-loop reference system.
        #[arg(long)]
        with_reference: bool,
        /// Write the trace as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run even if the certificate fails.
        #[arg(long = "unsafe")]
        unsafe_run: bool,
    },
    /// Emit the `‖G‖·L` curve over a range of `ωk`.
    Fig2 {
        scenario: String,
        /// `lo:hi:steps`.
        #[arg(long, default_value = "5:100:96")]
        wk_range: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate over several adaptation gains.
    SweepGamma {
        scenario: String,
        /// Comma-separated list of gains.
        #[arg(long, value_delimiter = ',', default_value = "100,1000,10000,100000")]
        gammas: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(spec: &str) -> Result<Scenario, ScenarioError> {
    if let Some(name) = spec.strip_prefix("builtin:") {
        return Scenario::builtin(name).ok_or_else(|| {
            ScenarioError::Schema(format!(
                "unknown builtin {name:?}; available: {}",
                Scenario::BUILTIN_NAMES.join(", ")
            ))
        });
    }
    Scenario::load(Path::new(spec))
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |x| format!("{x:.6e}"))
}

fn print_certificate(c: &Certificate) {
    let d = &c.details;
    println!("l1_condition_value = {:.6}", c.l1_condition_value);
    println!("l1_condition_pass = {}", c.l1_condition_pass);
    if let Some(h) = c.hurwitz_sweep_pass {
        println!("hurwitz_sweep_pass = {h}");
    }
    println!("worst_omega = {}", d.worst_omega);
    println!("L = {}", d.l);
    println!("lambda_min_p = {:.6}", d.lambda_min_p);
    println!("lambda_max_p = {:.6}", d.lambda_max_p);
    println!("theta_m = {:.6e}", c.theta_m);
    println!("xtilde_bound = {:.6e}", c.xtilde_bound);
    println!("gamma1 = {:.6e}", c.gamma1);
    println!("gamma2 = {:.6e}", c.gamma2);
    println!("gamma1_lambda_max = {:.6e}", d.gamma1_lambda_max);
    println!("gamma2_lambda_max = {:.6e}", d.gamma2_lambda_max);
    println!("gamma3 = {}", opt(c.gamma3));
    println!("gamma4 = {}", opt(c.gamma4));
    let c_o: Vec<String> = c.c_o.iter().map(|v| format!("{v}")).collect();
    println!("c_o = [{}]", c_o.join(", "));
}

fn print_report(rep: &SimReport) {
    let m = &rep.output.metrics;
    for w in &rep.output.warnings {
        println!("warning: {w}");
    }
    println!("steps = {}", m.steps);
    println!("sup_xtilde = {:.6e}", m.sup_xtilde);
    println!("sup_e = {}", opt(m.sup_e));
    println!("sup_u_err = {}", opt(m.sup_u_err));
    println!("terminal_xtilde = {:.6e}", m.terminal_xtilde);
    println!("tracking_rms_after({}) = {:.6e}", m.transient, m.tracking_rms_after);
    println!("sup_u = {:.6e}", m.sup_u);
    if !rep.certified {
        println!("bounds: N/A (certificate failed)");
        return;
    }
    for c in &rep.checks {
        let verdict = if c.pass() { "PASS" } else { "FAIL" };
        println!("{verdict} {}: {:.6e} <= {:.6e}", c.name, c.measured, c.bound);
    }
}

fn run_error_code(e: &RunError) -> u8 {
    match e {
        RunError::Scenario(_) | RunError::InvalidArgument(_) => EXIT_SCHEMA,
        RunError::Sim(SimError::InvalidSettings(_) | SimError::StateDependentCommand) => EXIT_SCHEMA,
        RunError::Sim(_) => EXIT_DIVERGED,
        _ => EXIT_FAILED,
    }
}

fn run(cli: Cli) -> anyhow::Result<u8> {
    match cli.command {
        Command::Certify { scenario } => {
            let s = match load(&scenario) {
                Ok(s) => s,
                Err(e) => return schema_failure(e),
            };
            let cert = match s.certify() {
                Ok(c) => c,
                Err(e) => return Ok(report_run_error(e)),
            };
            println!("scenario = {}", s.name());
            print_certificate(&cert);
            Ok(if cert.passes() { EXIT_OK } else { EXIT_FAILED })
        }
        Command::Simulate {
            scenario,
            with_reference,
            out,
            unsafe_run,
        } => {
            let s = match load(&scenario) {
                Ok(s) => s,
                Err(e) => return schema_failure(e),
            };
            let rep = match s.simulate(with_reference, unsafe_run) {
                Ok(r) => r,
                Err(e) => {
                    if let (RunError::Sim(se), Some(path)) = (&e, &out) {
                        if let Some(partial) = se.partial() {
                            partial.trace.write_csv(create(path)?)?;
                        }
                    }
                    return Ok(report_run_error(e));
                }
            };
            println!("scenario = {}", s.name());
            print_report(&rep);
            if let Some(path) = out {
                rep.output.trace.write_csv(create(&path)?)?;
            }
            Ok(if rep.all_pass() { EXIT_OK } else { EXIT_FAILED })
        }
        Command::Fig2 {
            scenario,
            wk_range,
            out,
        } => {
            let s = match load(&scenario) {
                Ok(s) => s,
                Err(e) => return schema_failure(e),
            };
            let wk = match parse_range(&wk_range) {
                Ok(w) => w,
                Err(e) => return Ok(report_run_error(e)),
            };
            let curve = match s.fig2_curve(&wk) {
                Ok(c) => c,
                Err(e) => return Ok(report_run_error(e)),
            };
            match curve_crossing(&curve) {
                Some(w) => println!("crossing_wk = {w}"),
                None => println!("crossing_wk = none"),
            }
            println!("nonincreasing = {}", curve_is_nonincreasing(&curve, 1e-3));
            match out {
                Some(path) => write_curve_csv(&curve, create(&path)?)?,
                None => write_curve_csv(&curve, std::io::stdout().lock())?,
            }
            Ok(EXIT_OK)
        }
        Command::SweepGamma {
            scenario,
            gammas,
            out,
        } => {
            let s = match load(&scenario) {
                Ok(s) => s,
                Err(e) => return schema_failure(e),
            };
            let rows = match s.sweep_gamma(&gammas) {
                Ok(r) => r,
                Err(e) => return Ok(report_run_error(e)),
            };
            let monotone = sweep_is_monotone(&rows);
            println!("sup_e_strictly_decreasing = {monotone}");
            match out {
                Some(path) => write_sweep_csv(&rows, create(&path)?)?,
                None => write_sweep_csv(&rows, std::io::stdout().lock())?,
            }
            Ok(if monotone { EXIT_OK } else { EXIT_FAILED })
        }
    }
}

fn schema_failure(e: ScenarioError) -> anyhow::Result<u8> {
    eprintln!("error: {e}");
    Ok(EXIT_SCHEMA)
}

fn report_run_error(e: RunError) -> u8 {
    eprintln!("error: {e}");
    if let RunError::Sim(SimError::EstimateOutOfBounds { .. }) = e {
        eprintln!("hint: reduce sim.dt");
    }
    run_error_code(&e)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_FAILED)
        }
    }
}
