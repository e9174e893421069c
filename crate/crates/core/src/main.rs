use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use disep::exec::Exec;
use disep::metrics::{self, STEADY_WINDOW_PERIODS};
use disep::modulation::write_command_csv;
use disep::report::{self, format_summary, summarize};
use disep::scenario::{Artifact, Scenario, SweepParameter};
use disep::sim::{run, samples_per_period};
use disep::sweep::{self, calibrate_e_sw, inductance_sweep, simulation_sweep};
use disep::verify::{verify_oracle, Tolerances};
use disep::Error;

const EXIT_FAILURE: u8 = 1;
const EXIT_VALIDATION: u8 = 2;
const EXIT_NOT_SETTLED: u8 = 3;
const EXIT_IO: u8 = 4;
const EXIT_BREACH: u8 = 5;

#[derive(Parser)]
#[command(name = "disep", version, about = "Direction-selective parallel module string simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Output directory [default: out/<scenario name>]
    #[arg(long, env = "DISEP_OUT_DIR")]
    out_dir: Option<PathBuf>,
    /// Sub-steps per carrier period
    #[arg(long)]
    oversample: Option<usize>,
    #[arg(long)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and write its artifacts
    Run {
        scenario: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run the sweep declared in a scenario
    Sweep {
        scenario: PathBuf,
        #[command(flatten)]
        common: Common,
        /// Evaluate grid points on one thread
        #[arg(long)]
        sequential: bool,
    },
    /// Compare closed-form loop solutions against the ODE oracle
    VerifyOracle {
        #[arg(long, default_value_t = 1000)]
        cases: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[command(flatten)]
        common: Common,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidParameter { .. } | Error::Scenario(_) | Error::Json(_) | Error::Domain(_) | Error::Precondition(_) => {
            EXIT_VALIDATION
        }
        Error::NotSettled { .. } => EXIT_NOT_SETTLED,
        Error::Io(_) | Error::Csv(_) => EXIT_IO,
        _ => EXIT_FAILURE,
    }
}

fn create(dir: &Path, name: &str) -> disep::Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn load(path: &Path, common: &Common) -> disep::Result<Scenario> {
    let text = fs::read_to_string(path)?;
    let mut s = Scenario::from_json(&text)?;
    if let Some(o) = common.oversample {
        s.simulation.oversample = o;
        s.validate()?;
    }
    Ok(s)
}

fn out_dir(common: &Common, name: &str) -> disep::Result<PathBuf> {
    let dir = common.out_dir.clone().unwrap_or_else(|| Path::new("out").join(name));
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn cmd_run(path: &Path, common: &Common) -> disep::Result<()> {
    let mut s = load(path, common)?;
    if s.outputs.contains(&Artifact::Traces) && s.simulation.trace_stride == 0 {
        s.simulation.trace_stride = 1;
    }
    let cfg = s.converter_config()?;
    let modulator = s.modulator_config(&cfg);
    let result = run(&cfg, &modulator, &s.simulation)?;
    let summary = summarize(&result, STEADY_WINDOW_PERIODS);
    let dir = out_dir(common, &s.name)?;
    for artifact in &s.outputs {
        match artifact {
            Artifact::Waveforms => report::write_waveforms_csv(&result, create(&dir, "waveforms.csv")?)?,
            Artifact::Traces => report::write_traces_csv(&result, create(&dir, "traces.csv")?)?,
            Artifact::Profile => report::write_profile_json(&s.name, &result, &summary, create(&dir, "profile.json")?)?,
            Artifact::Losses => report::write_losses_json(&s.name, &result, &summary, create(&dir, "losses.json")?)?,
            Artifact::Summary => report::write_summary_json(&s.name, &summary, create(&dir, "summary.json")?)?,
            Artifact::Spectrum => {
                let k = STEADY_WINDOW_PERIODS.min(result.period_means.len());
                let spec = metrics::output_spectrum(&result, k)?;
                metrics::write_spectrum_csv(&spec, create(&dir, "spectrum.csv")?)?;
            }
            Artifact::Commands => {
                let spp = samples_per_period(&cfg, s.simulation.oversample);
                write_command_csv(&modulator, result.dt, spp * s.simulation.periods, create(&dir, "commands.csv")?)?;
            }
        }
    }
    if !common.quiet {
        print!("{}", format_summary(&s.name, &summary));
        println!("artifacts         {}", dir.display());
    }
    if !summary.settled {
        return Err(Error::NotSettled {
            periods: result.period_means.len(),
        });
    }
    Ok(())
}

fn cmd_sweep(path: &Path, common: &Common, sequential: bool) -> disep::Result<()> {
    let s = load(path, common)?;
    let spec = s
        .sweep
        .clone()
        .ok_or_else(|| Error::Scenario("scenario declares no `sweep` section".into()))?;
    let exec = if sequential { Exec::Sequential } else { Exec::default() };
    let grid = spec.grid.points();
    let cfg = s.converter_config()?;
    let dir = out_dir(common, &s.name)?;

    if spec.parameter == SweepParameter::LoopInductance {
        let link = cfg.links[0];
        let rows = inductance_sweep(
            cfg.modules[0].capacitance,
            link.r_loop,
            link.v_d_loop,
            spec.delta_v0.unwrap_or(10.0),
            &grid,
        )?;
        sweep::write_inductance_csv(&rows, create(&dir, "inductance_sweep.csv")?)?;
        if !common.quiet {
            println!("{:>12}  {:>10}  {:>12}  {:>12}", "L (H)", "regime", "dV_inf (V)", "loss (J)");
            for r in &rows {
                let l = r.l_h.map_or("-".to_string(), |l| format!("{l:.3e}"));
                println!("{l:>12}  {:>10}  {:>12.5}  {:>12.6}", r.regime, r.delta_v_inf_v, r.energy_loss_j);
            }
        }
        return Ok(());
    }

    let modulator = s.modulator_config(&cfg);
    let mut opts = s.simulation.clone();
    if let Some(cal) = &spec.calibrate {
        let report = calibrate_e_sw(&cfg, &modulator, &opts, &cal.targets, STEADY_WINDOW_PERIODS, exec)?;
        serde_json::to_writer_pretty(create(&dir, "calibration.json")?, &report)?;
        if !common.quiet {
            println!("calibrated e_sw   {:.4e} J{}", report.e_sw_j, if report.clamped { " (clamped at 0)" } else { "" });
        }
        opts.e_sw = report.e_sw_j;
    }
    let points = simulation_sweep(&cfg, &modulator, &opts, spec.parameter, &grid, STEADY_WINDOW_PERIODS, exec)?;
    sweep::write_sweep_csv(spec.parameter, &points, create(&dir, "sweep.csv")?)?;
    sweep::write_deviation_csv(&points, create(&dir, "deviation.csv")?)?;
    if !common.quiet {
        let pct = |x: Option<f64>| x.map_or("n/a".into(), |v| format!("{:.2}", 100.0 * v));
        println!("{:>12}  {:>7}  {:>8}  {:>8}  {:>8}", "value", "settled", "THD %", "THD+N %", "eff %");
        for p in &points {
            let sm = &p.summary;
            println!(
                "{:>12.4e}  {:>7}  {:>8}  {:>8}  {:>8}",
                p.value,
                sm.settled,
                pct(sm.thd),
                pct(sm.thd_n),
                pct(sm.efficiency)
            );
        }
    }
    if let Some(p) = points.iter().find(|p| !p.summary.settled) {
        return Err(Error::NotSettled {
            periods: p.summary.window_periods,
        });
    }
    Ok(())
}

fn cmd_verify(cases: usize, seed: u64, common: &Common) -> Result<(), (u8, String)> {
    let report = verify_oracle(cases, seed, Tolerances::default(), Exec::default()).map_err(|e| (exit_code(&e), e.to_string()))?;
    if let Some(dir) = &common.out_dir {
        let write = || -> disep::Result<()> {
            fs::create_dir_all(dir)?;
            serde_json::to_writer_pretty(create(dir, "oracle_report.json")?, &report)?;
            Ok(())
        };
        write().map_err(|e| (exit_code(&e), e.to_string()))?;
    }
    if !common.quiet {
        println!("{:>10}  {:>6}  {:>12}  {:>12}  {:>12}", "regime", "cases", "max dV err", "max E err", "max t err");
        for (name, st) in [("resistive", &report.resistive), ("inductive", &report.inductive), ("boundary", &report.boundary)] {
            println!(
                "{name:>10}  {:>6}  {:>12.3e}  {:>12.3e}  {:>12.3e}",
                st.cases, st.max_delta_v_err, st.max_energy_err, st.max_t_end_err
            );
        }
    }
    if report.passed() {
        Ok(())
    } else {
        let lines: Vec<String> = report.breaches.iter().map(|b| format!("  {:?}", b)).collect();
        Err((EXIT_BREACH, format!("{} draws breached tolerance:\n{}", report.breaches.len(), lines.join("\n"))))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run { scenario, common } => cmd_run(scenario, common).map_err(|e| (exit_code(&e), e.to_string())),
        Command::Sweep {
            scenario,
            common,
            sequential,
        } => cmd_sweep(scenario, common, *sequential).map_err(|e| (exit_code(&e), e.to_string())),
        Command::VerifyOracle { cases, seed, common } => cmd_verify(*cases, *seed, common),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
