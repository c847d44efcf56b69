use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use super::{px_monte_carlo_oracle, run_sweep, write_csv_to, Engines, SweepSpec, PX_CHECK_POINTS};
use crate::airtime::{build_timing_table, TimingTable};
use crate::error::{Error, Result};
use crate::model::{evaluate_model, p_x_retry};
use crate::scenario::ScenarioConfig;
use crate::simulator::{estimate_per, rng_for, stream_id, SimConfig, SimStats, Simulation};

#[derive(Parser, Debug)]
#[command(
    name = "lorawan-capacity",
    version,
    about = "Capacity of acknowledged LoRaWAN class A uplinks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print frame and ACK durations per rate.
    Airtime {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Evaluate the analytic model at one load.
    Model {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Aggregate frame arrival rate, frames/s.
        #[arg(long)]
        lambda: f64,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Simulate at one load and print per-replication counters as CSV.
    Simulate {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long)]
        lambda: f64,
        #[command(flatten)]
        sim: SimArgs,
        /// Write an event trace of the first replication here.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Sweep the load over a log grid and write CSV.
    Sweep {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, default_value_t = 1e-3)]
        lambda_min: f64,
        #[arg(long, default_value_t = 10.0)]
        lambda_max: f64,
        #[arg(long, default_value_t = 25)]
        points: usize,
        #[arg(long, conflicts_with = "sim_only")]
        model_only: bool,
        #[arg(long)]
        sim_only: bool,
        #[command(flatten)]
        sim: SimArgs,
        #[arg(long, default_value_t = 1e4)]
        target_attempts: f64,
        #[arg(long, default_value_t = 1e7)]
        max_duration: f64,
        /// CSV destination; stdout when absent.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Compare the repeat-collision closed form against Monte Carlo.
    ValidatePx {
        /// Check a single point instead of the built-in set.
        #[arg(long, requires_all = ["t", "w"])]
        r: Option<f64>,
        #[arg(long)]
        t: Option<f64>,
        #[arg(long)]
        w: Option<f64>,
        #[arg(long, default_value_t = 1_000_000)]
        samples: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Args, Debug)]
struct ScenarioArgs {
    /// Scenario TOML file.
    #[arg(long, conflicts_with = "preset")]
    scenario: Option<PathBuf>,
    /// Built-in scenario name.
    #[arg(long)]
    preset: Option<String>,
}

impl ScenarioArgs {
    fn load(&self) -> Result<(ScenarioConfig, TimingTable)> {
        let config = match (&self.scenario, &self.preset) {
            (Some(path), _) => ScenarioConfig::load(path)?,
            (None, Some(name)) => ScenarioConfig::preset(name)?,
            (None, None) => ScenarioConfig::preset("paper")?,
        };
        let timing = build_timing_table(&config)?;
        Ok((config, timing))
    }
}

#[derive(Args, Debug)]
struct SimArgs {
    #[arg(long, default_value_t = 100_000.0)]
    duration: f64,
    #[arg(long, default_value_t = 1_000.0)]
    warmup: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 5)]
    replications: usize,
    /// Step the rate down after every two consecutive failures.
    #[arg(long)]
    rate_decrement: bool,
}

impl SimArgs {
    fn config(&self) -> SimConfig {
        SimConfig {
            duration: self.duration,
            warmup: self.warmup,
            seed: self.seed,
            replications: self.replications,
            rate_decrement: self.rate_decrement,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Csv,
    Json,
}

/// Runs the command line `args` (program name first) and returns the exit
/// code: 0 on success, 1 on a runtime error, 2 on a usage error.
pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn open_output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(path) => Box::new(BufWriter::new(File::create(path).map_err(|source| {
            Error::Io {
                path: path.clone(),
                source,
            }
        })?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Airtime { scenario, format } => {
            let (config, timing) = scenario.load()?;
            airtime(&config, &timing, format)
        }
        Command::Model {
            scenario,
            lambda,
            format,
        } => {
            let (config, timing) = scenario.load()?;
            model(&config, &timing, lambda, format)
        }
        Command::Simulate {
            scenario,
            lambda,
            sim,
            trace,
            output,
        } => {
            let (config, timing) = scenario.load()?;
            simulate(&config, &timing, lambda, &sim.config(), trace, &output)
        }
        Command::Sweep {
            scenario,
            lambda_min,
            lambda_max,
            points,
            model_only,
            sim_only,
            sim,
            target_attempts,
            max_duration,
            output,
        } => {
            let (config, timing) = scenario.load()?;
            let engines = match (model_only, sim_only) {
                (true, _) => Engines::Model,
                (_, true) => Engines::Sim,
                _ => Engines::Both,
            };
            let spec = SweepSpec {
                lambda_min,
                lambda_max,
                points,
                engines,
                sim: sim.config(),
                target_attempts,
                max_duration,
                record_transmissions: false,
                output: None,
            };
            let result = run_sweep(&config, &timing, &spec)?;
            eprintln!("lambda_star = {:.6e}", result.lambda_star);
            let mut out = open_output(&output)?;
            write_csv_to(&result.rows, &mut out)?;
            out.flush()?;
            Ok(())
        }
        Command::ValidatePx {
            r,
            t,
            w,
            samples,
            seed,
        } => {
            let points = match (r, t, w) {
                (Some(r), Some(t), Some(w)) => vec![(r, t, w)],
                (None, None, None) => PX_CHECK_POINTS.to_vec(),
                _ => {
                    return Err(Error::InvalidField {
                        field: "r/t/w",
                        reason: "give all three or none".into(),
                    })
                }
            };
            validate_px(&points, samples, seed)
        }
    }
}

fn airtime(config: &ScenarioConfig, timing: &TimingTable, format: Format) -> Result<()> {
    let mut out = io::stdout().lock();
    match format {
        Format::Text => {
            writeln!(out, "rate  sf  t_data_s     t_ack_s      ack1_rate")?;
            for i in 0..timing.n_rates() {
                writeln!(
                    out,
                    "{i:<5} {:<3} {:<12.6} {:<12.6} {}",
                    config.radio.data_rates[i].spreading_factor,
                    timing.t_data[i],
                    timing.t_ack[i],
                    timing.ack1_rate[i]
                )?;
            }
            writeln!(
                out,
                "t1 = {} s, t2 = {} s, mean backoff = {} s",
                timing.t1, timing.t2, timing.t_wait_mean
            )?;
        }
        Format::Json => {
            serde_json::to_writer_pretty(&mut out, timing).map_err(io::Error::from)?;
            writeln!(out)?;
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            w.write_record(["rate", "spreading_factor", "t_data", "t_ack", "ack1_rate"])?;
            for i in 0..timing.n_rates() {
                w.write_record([
                    i.to_string(),
                    config.radio.data_rates[i].spreading_factor.to_string(),
                    format!("{:.12e}", timing.t_data[i]),
                    format!("{:.12e}", timing.t_ack[i]),
                    timing.ack1_rate[i].to_string(),
                ])?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

fn model(config: &ScenarioConfig, timing: &TimingTable, lambda: f64, format: Format) -> Result<()> {
    let result = evaluate_model(config, timing, lambda)?;
    let mut out = io::stdout().lock();
    match format {
        Format::Text => {
            writeln!(out, "lambda      = {:.6e}", result.lambda)?;
            writeln!(out, "lambda_star = {:.6e}", result.lambda_star)?;
            writeln!(out, "valid       = {}", result.is_valid())?;
            writeln!(out, "PER         = {:.6e}", result.per)?;
            writeln!(out, "PER1        = {:.6e}", result.per1)?;
            writeln!(out, "P_1         = {:.6e}", result.p_1)?;
            writeln!(out, "P_N         = {:.6e}", result.p_n)?;
            writeln!(
                out,
                "rate  r            p_data       p_ack        p_x          p_data_re"
            )?;
            for (i, t) in result.per_rate.iter().enumerate() {
                writeln!(
                    out,
                    "{i:<5} {:<12.6e} {:<12.6} {:<12.6} {:<12.6} {:<12.6}",
                    t.r, t.p_data, t.p_ack, t.p_x, t.p_data_re
                )?;
            }
        }
        Format::Json => {
            serde_json::to_writer_pretty(&mut out, &result).map_err(io::Error::from)?;
            writeln!(out)?;
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            w.write_record([
                "lambda",
                "lambda_star",
                "valid",
                "per",
                "per1",
                "p_1",
                "p_n",
            ])?;
            let num = |v: f64| format!("{v:.12e}");
            w.write_record([
                num(result.lambda),
                num(result.lambda_star),
                result.is_valid().to_string(),
                num(result.per),
                num(result.per1),
                num(result.p_1),
                num(result.p_n),
            ])?;
            w.flush()?;
        }
    }
    Ok(())
}

fn simulate(
    config: &ScenarioConfig,
    timing: &TimingTable,
    lambda: f64,
    sim: &SimConfig,
    trace: Option<PathBuf>,
    output: &Option<PathBuf>,
) -> Result<()> {
    sim.validate()?;
    let mut runs = Vec::with_capacity(sim.replications);
    for rep in 0..sim.replications {
        let rng = rng_for(sim.seed, stream_id(0, rep));
        let simulation = Simulation::new(config, timing, lambda, sim, rng)?;
        let stats = match (&trace, rep) {
            (Some(path), 0) => {
                let file = File::create(path).map_err(|source| Error::Io {
                    path: path.clone(),
                    source,
                })?;
                let mut writer = BufWriter::new(file);
                let stats = simulation.with_trace(&mut writer).run()?.stats;
                writer.flush()?;
                stats
            }
            _ => simulation.run()?.stats,
        };
        runs.push(stats);
    }
    let mut w = csv::Writer::from_writer(open_output(output)?);
    w.write_record([
        "replication",
        "lambda",
        "frames_generated",
        "frames_delivered",
        "frames_dropped",
        "frames_superseded",
        "frames_in_flight",
        "attempts_total",
        "attempts_successful",
        "first_attempts_total",
        "first_attempts_successful",
        "ack1_cancelled",
        "per",
        "per_ci",
        "per1",
        "per1_ci",
    ])?;
    let num = |v: f64| format!("{v:.12e}");
    let estimate = |e: Option<crate::simulator::Estimate>| match e {
        Some(e) => [num(e.value), num(e.ci_half_width)],
        None => [String::new(), String::new()],
    };
    for (rep, s) in runs.iter().enumerate() {
        let mut record = vec![rep.to_string(), num(s.lambda)];
        record.extend(counters(s).map(|c| c.to_string()));
        record.extend(estimate(s.per()));
        record.extend(estimate(s.per1()));
        w.write_record(&record)?;
    }
    if let Ok(summary) = estimate_per(&runs) {
        let mut record = vec!["mean".to_string(), num(lambda)];
        record.extend(std::iter::repeat_n(String::new(), 10));
        record.extend(estimate(Some(summary.per)));
        record.extend(estimate(Some(summary.per1)));
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

fn counters(s: &SimStats) -> [u64; 10] {
    [
        s.frames_generated,
        s.frames_delivered,
        s.frames_dropped,
        s.frames_superseded,
        s.frames_in_flight,
        s.attempts_total,
        s.attempts_successful,
        s.first_attempts_total,
        s.first_attempts_successful,
        s.ack1_cancelled,
    ]
}

fn validate_px(points: &[(f64, f64, f64)], samples: u64, seed: u64) -> Result<()> {
    let mut out = io::stdout().lock();
    writeln!(out, "r,t,w,rt,closed_form,monte_carlo,std_error,z")?;
    let mut worst: f64 = 0.0;
    for (k, &(r, t, w)) in points.iter().enumerate() {
        let closed = p_x_retry(r, t, w)?;
        let mc = px_monte_carlo_oracle(r, t, w, samples, seed.wrapping_add(k as u64))?;
        let z = if mc.std_error > 0.0 {
            (closed - mc.estimate) / mc.std_error
        } else {
            0.0
        };
        worst = worst.max(z.abs());
        writeln!(
            out,
            "{r:e},{t},{w},{:e},{closed:.9},{:.9},{:.3e},{z:.3}",
            r * t,
            mc.estimate,
            mc.std_error
        )?;
    }
    eprintln!("largest |z| = {worst:.3}");
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_every_subcommand() {
        for args in [
            vec!["x", "airtime"],
            vec!["x", "airtime", "--format", "csv"],
            vec!["x", "model", "--lambda", "0.05", "--format", "json"],
            vec![
                "x",
                "simulate",
                "--lambda",
                "0.1",
                "--replications",
                "2",
                "--trace",
                "t.csv",
            ],
            vec![
                "x",
                "sweep",
                "--model-only",
                "--output",
                "s.csv",
                "--preset",
                "paper",
            ],
            vec!["x", "validate-px", "--r", "0.5", "--t", "1", "--w", "2"],
        ] {
            assert!(Cli::try_parse_from(&args).is_ok(), "{args:?}");
        }
    }

    #[test]
    fn rejects_bad_usage() {
        assert_eq!(cli_main(["x", "model", "--bogus"]), 2);
        assert_eq!(cli_main(["x", "model"]), 2);
        assert_eq!(cli_main(["x", "sweep", "--model-only", "--sim-only"]), 2);
        assert_eq!(
            cli_main(["x", "airtime", "--scenario", "a.toml", "--preset", "paper"]),
            2
        );
    }

    #[test]
    fn runtime_errors_exit_one() {
        assert_eq!(cli_main(["x", "airtime", "--preset", "nope"]), 1);
        assert_eq!(cli_main(["x", "model", "--lambda=-1"]), 1);
    }
}
