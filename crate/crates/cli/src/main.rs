use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use cvqkd_lo::protocol::write_samples_csv;
use cvqkd_lo::scenario::{self, ScenarioConfig, SweepConfig};

/// LO calibration attack simulator for CV-QKD.
///
/// Exit codes: 0 secure, 1 error, 2 abort, 3 breached.
#[derive(Debug, Parser)]
#[command(name = "cvqkd-lo", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// key=value configuration file.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides the seed from the configuration.
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    /// Directory for output artifacts.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Print CSV instead of key=value lines.
    #[arg(long)]
    csv: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one attack scenario end to end.
    Run {
        #[command(flatten)]
        common: Common,
        /// Also write every pulse to samples.csv in the output directory.
        #[arg(long)]
        samples: bool,
    },
    /// Key rate against distance, with and without the countermeasure.
    Sweep {
        #[command(flatten)]
        common: Common,
    },
    /// Two LO pulses with equal measured power and different trigger times.
    PulseDemo {
        #[command(flatten)]
        common: Common,
        /// Minimum trigger delay of the crafted pulse.
        #[arg(long, value_name = "NS", default_value_t = 10.0)]
        shift_ns: f64,
    },
    /// Fit calibration lines with the nominal and the delayed trigger.
    Calibrate {
        #[command(flatten)]
        common: Common,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(cmd: Command) -> Result<u8> {
    match cmd {
        Command::Run { common, samples } => run(&common, samples),
        Command::Sweep { common } => sweep(&common).map(|_| 0),
        Command::PulseDemo { common, shift_ns } => pulse_demo(&common, shift_ns).map(|_| 0),
        Command::Calibrate { common } => calibrate(&common).map(|_| 0),
    }
}

fn read_config(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn scenario_config(common: &Common) -> Result<ScenarioConfig> {
    let path = common
        .config
        .as_deref()
        .context("--config is required for this subcommand")?;
    let mut cfg = ScenarioConfig::parse(&read_config(path)?)
        .with_context(|| format!("parsing {}", path.display()))?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn out_dir(common: &Common, fallback: Option<&Path>) -> Result<Option<PathBuf>> {
    let dir = common
        .out
        .clone()
        .or_else(|| fallback.map(Path::to_path_buf));
    if let Some(d) = &dir {
        fs::create_dir_all(d).with_context(|| format!("creating {}", d.display()))?;
    }
    Ok(dir)
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn run(common: &Common, samples: bool) -> Result<u8> {
    let cfg = scenario_config(common)?;
    let dir = out_dir(common, cfg.out_dir.as_deref())?;
    if samples && dir.is_none() {
        anyhow::bail!("--samples needs an output directory");
    }
    let result = scenario::run_scenario_with_samples(&cfg)?;
    let report = &result.report;

    let csv = format!("{}\n{}\n", report.csv_header(), report.csv_row());
    let kv = report.to_key_value();
    if let Some(dir) = &dir {
        fs::write(dir.join("config.txt"), cfg.to_config_text())?;
        fs::write(dir.join("report.txt"), &kv)?;
        fs::write(dir.join("report.csv"), &csv)?;
        if samples {
            write_samples_csv(&result.records, create(dir, "samples.csv")?)?;
        }
    }
    print!("{}", if common.csv { &csv } else { &kv });
    Ok(report.verdict.exit_code() as u8)
}

fn sweep(common: &Common) -> Result<()> {
    let cfg = match &common.config {
        Some(path) => SweepConfig::parse(&read_config(path)?)
            .with_context(|| format!("parsing {}", path.display()))?,
        None => SweepConfig::default(),
    };
    let result = scenario::sweep_keyrate(&cfg)?;
    if let Some(dir) = out_dir(common, None)? {
        scenario::write_sweep_csv(&result.baseline, create(&dir, "sweep_baseline.csv")?)?;
        scenario::write_sweep_csv(
            &result.countermeasure,
            create(&dir, "sweep_countermeasure.csv")?,
        )?;
    }
    let mut stdout = io::stdout().lock();
    if common.csv {
        result.write_csv(&mut stdout)?;
    } else {
        writeln!(stdout, "baseline_max_km={}", result.baseline_max_km)?;
        writeln!(
            stdout,
            "countermeasure_max_km={}",
            result.countermeasure_max_km
        )?;
        writeln!(
            stdout,
            "gap_km={}",
            result.baseline_max_km - result.countermeasure_max_km
        )?;
        writeln!(stdout, "rows={}", result.baseline.len())?;
    }
    Ok(())
}

fn pulse_demo(common: &Common, shift_ns: f64) -> Result<()> {
    let demo = scenario::pulse_demo(shift_ns)?;
    if let Some(dir) = out_dir(common, None)? {
        demo.base.to_writer(create(&dir, "pulse_base.csv")?)?;
        demo.crafted.to_writer(create(&dir, "pulse_crafted.csv")?)?;
    }
    let mut stdout = io::stdout().lock();
    if common.csv {
        demo.write_csv(&mut stdout)?;
    } else {
        writeln!(stdout, "power_base={}", demo.power_base)?;
        writeln!(stdout, "power_crafted={}", demo.power_crafted)?;
        writeln!(
            stdout,
            "power_relative_error={}",
            (demo.power_crafted - demo.power_base).abs() / demo.power_base
        )?;
        writeln!(stdout, "trigger_base_ns={}", demo.trigger_base)?;
        writeln!(stdout, "trigger_crafted_ns={}", demo.trigger_crafted)?;
        writeln!(
            stdout,
            "trigger_shift_ns={}",
            demo.trigger_crafted - demo.trigger_base
        )?;
    }
    Ok(())
}

fn calibrate(common: &Common) -> Result<()> {
    let cfg = scenario_config(common)?;
    let out = scenario::calibrate(&cfg)?;
    if let Some(dir) = out_dir(common, cfg.out_dir.as_deref())? {
        out.write_csv(create(&dir, "calibration.csv")?)?;
    }
    let mut stdout = io::stdout().lock();
    if common.csv {
        out.write_csv(&mut stdout)?;
    } else {
        let lines = [
            ("nominal", &out.line_nominal),
            ("delayed", &out.line_delayed),
        ];
        for (name, line) in lines {
            writeln!(stdout, "slope_{name}={}", line.slope)?;
            writeln!(stdout, "slope_{name}_stderr={}", line.slope_stderr)?;
            writeln!(stdout, "intercept_{name}={}", line.intercept)?;
        }
        writeln!(stdout, "gain={}", out.gain)?;
        writeln!(stdout, "slope_ratio={}", out.slope_ratio())?;
        writeln!(
            stdout,
            "n0_nominal={}",
            out.line_nominal.shot_noise(cfg.calibration.lo_power)
        )?;
    }
    Ok(())
}
