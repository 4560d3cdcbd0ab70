//! `covsim`: simulate, assess and report timing covert channels on a
//! cyclically scheduled separation kernel.
//!
//! Exit status: 0 success, 2 invalid input (config, overrides, trace files,
//! mismatched trace sets), 3 runtime failure. Whether a channel is feasible
//! is reported in the output, never in the exit status.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use covsim_core::attackchan::{
    bits_to_string, decode, encode, parse_bits, receive, BitMessage, BurstSpec, DecodeParams, DecodeResult,
    ThresholdCalibration,
};
use covsim_core::harness::{
    fit_config, ingest_trace, load_plan_result, run_plan, verdicts_csv, write_report, ExperimentPlan, HarnessError,
    PartialMetadata, PlanResult, RunOptions,
};
use covsim_core::par::Execution;
use covsim_core::simkernel::{parse_override, run_simulation, sidecar_path, SimConfig, TimingTrace};
use covsim_core::timestats::{assess, summarize, AttackVerdict, DEFAULT_ALPHA};

const EXIT_VALIDATION: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(
    name = "covsim",
    version,
    about = "Timing covert channel simulator and assessment toolkit"
)]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct OutArg {
    /// Output directory.
    #[arg(long, env = "COVSIM_OUT", default_value = "covsim-out")]
    out: PathBuf,
}

#[derive(Args)]
struct Overrides {
    /// Dotted-path override, e.g. `--set jitter.magnitude=2000`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Replace the seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write its receiver trace.
    Run {
        /// Simulation config (TOML); the calibrated default when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
        /// Transmit this message (`0x` hex or binary); runs without attack otherwise.
        #[arg(long)]
        message: Option<String>,
        /// Run the continuous attack (a burst every sender activation).
        #[arg(long, conflicts_with = "message")]
        attack: bool,
        #[arg(long, default_value_t = 1)]
        frames_per_bit: u32,
        #[arg(long, default_value_t = 16)]
        preamble: u32,
        /// Hypercalls per burst.
        #[arg(long, default_value_t = BurstSpec::default().count)]
        burst_count: u32,
        /// Base name of the written files.
        #[arg(long, default_value = "trace")]
        name: String,
        #[command(flatten)]
        out: OutArg,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Run (or resume) an experiment plan and write the results directory.
    Plan {
        /// Plan file (TOML); the default 36-point plan when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long)]
        alpha: Option<f64>,
        /// Worker threads; 0 uses every core.
        #[arg(long, default_value_t = 0)]
        jobs: usize,
        #[command(flatten)]
        out: OutArg,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Compare with-attack and without-attack trace sets.
    Assess {
        /// Directory of with-attack traces (`*.csv` with sidecars).
        #[arg(long = "with")]
        with_dir: PathBuf,
        /// Directory of without-attack traces.
        #[arg(long = "without")]
        without_dir: PathBuf,
        #[arg(long, default_value_t = DEFAULT_ALPHA)]
        alpha: f64,
        #[command(flatten)]
        out: OutArg,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Decode the bits carried by a receiver trace.
    Decode {
        #[arg(long)]
        trace: PathBuf,
        /// Ground-truth record written by `run --message`.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Expected message, when no truth file is given.
        #[arg(long)]
        message: Option<String>,
        #[arg(long, default_value_t = 1)]
        frames_per_bit: u32,
        #[arg(long, default_value_t = 16)]
        preamble: u32,
        /// Use this threshold instead of training on the preamble.
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Convert an external trace (native CSV or raw counter list) into the native format.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        meta: MetaArgs,
        #[arg(long, default_value = "ingested")]
        name: String,
        #[command(flatten)]
        out: OutArg,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Regenerate the report of a stored plan.
    Report {
        /// Results directory written by `plan`.
        #[arg(long)]
        results: PathBuf,
        /// Where to write report.md and histograms; defaults to the results directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 40)]
        bins: usize,
    },
    /// Fit the cost model to a no-attack reference trace.
    Calibrate {
        #[arg(long)]
        reference: PathBuf,
        /// Template config (TOML); the calibrated default when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
        #[command(flatten)]
        meta: MetaArgs,
        #[command(flatten)]
        out: OutArg,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
}

#[derive(Args)]
struct MetaArgs {
    #[arg(long)]
    config_digest: Option<String>,
    #[arg(long)]
    attack_flag: Option<bool>,
    #[arg(long)]
    counter_freq: Option<u64>,
    #[arg(long)]
    trace_seed: Option<u64>,
    #[arg(long)]
    speed_exponent: Option<u32>,
}

impl MetaArgs {
    fn partial(&self) -> PartialMetadata {
        PartialMetadata {
            config_digest: self.config_digest.clone(),
            attack: self.attack_flag,
            seed: self.trace_seed,
            counter_freq: self.counter_freq,
            speed_exponent: self.speed_exponent,
            ..Default::default()
        }
    }
}

/// Failure split by exit status.
enum Failure {
    Validation(anyhow::Error),
    Runtime(anyhow::Error),
}

type CliResult<T> = Result<T, Failure>;

trait Classify<T> {
    fn invalid(self) -> CliResult<T>;
    fn runtime(self) -> CliResult<T>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn invalid(self) -> CliResult<T> {
        self.map_err(|e| Failure::Validation(e.into()))
    }
    fn runtime(self) -> CliResult<T> {
        self.map_err(|e| Failure::Runtime(e.into()))
    }
}

fn harness<T>(r: Result<T, HarnessError>) -> CliResult<T> {
    r.map_err(|e| {
        if e.is_validation() {
            Failure::Validation(e.into())
        } else {
            Failure::Runtime(e.into())
        }
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_VALIDATION)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}

fn dispatch(cmd: Command) -> CliResult<()> {
    match cmd {
        Command::Run {
            config,
            overrides,
            message,
            attack,
            frames_per_bit,
            preamble,
            burst_count,
            name,
            out,
            format,
        } => cmd_run(
            config.as_deref(),
            &overrides,
            RunAttack {
                message,
                continuous: attack,
                frames_per_bit,
                preamble,
                burst_count,
            },
            &name,
            &out.out,
            format,
        ),
        Command::Plan {
            config,
            overrides,
            alpha,
            jobs,
            out,
            format,
        } => cmd_plan(config.as_deref(), &overrides, alpha, jobs, &out.out, format),
        Command::Assess {
            with_dir,
            without_dir,
            alpha,
            out,
            format,
        } => cmd_assess(&with_dir, &without_dir, alpha, &out.out, format),
        Command::Decode {
            trace,
            truth,
            message,
            frames_per_bit,
            preamble,
            threshold,
            format,
        } => cmd_decode(
            &trace,
            truth.as_deref(),
            message,
            frames_per_bit,
            preamble,
            threshold,
            format,
        ),
        Command::Ingest {
            input,
            meta,
            name,
            out,
            format,
        } => cmd_ingest(&input, &meta, &name, &out.out, format),
        Command::Report { results, out, bins } => cmd_report(&results, out.as_deref(), bins),
        Command::Calibrate {
            reference,
            config,
            overrides,
            meta,
            out,
            format,
        } => cmd_calibrate(&reference, config.as_deref(), &overrides, &meta, &out.out, format),
    }
}

fn parse_overrides(o: &Overrides) -> CliResult<Vec<(String, String)>> {
    o.set
        .iter()
        .map(|s| parse_override(s))
        .collect::<Result<_, _>>()
        .invalid()
}

fn load_config(path: Option<&Path>, o: &Overrides) -> CliResult<(SimConfig, Vec<String>)> {
    let base = match path {
        Some(p) => {
            let text = fs::read_to_string(p)
                .with_context(|| format!("reading {}", p.display()))
                .invalid()?;
            SimConfig::from_toml(&text)
                .with_context(|| p.display().to_string())
                .invalid()?
        }
        None => SimConfig::calibrated_default(),
    };
    let pairs = parse_overrides(o)?;
    let mut cfg = base.with_overrides(&pairs).invalid()?;
    let mut applied: Vec<String> = pairs.iter().map(|(k, v)| format!("{k}={v}")).collect();
    if let Some(seed) = o.seed {
        cfg.seed = seed;
        applied.push(format!("seed={seed}"));
    }
    Ok((cfg, applied))
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir)
        .with_context(|| format!("creating {}", dir.display()))
        .runtime()
}

fn write(path: &Path, contents: &str) -> CliResult<()> {
    fs::write(path, contents)
        .with_context(|| format!("writing {}", path.display()))
        .runtime()
}

fn to_json<T: serde::Serialize>(v: &T) -> CliResult<String> {
    serde_json::to_string_pretty(v).runtime()
}

struct RunAttack {
    message: Option<String>,
    continuous: bool,
    frames_per_bit: u32,
    preamble: u32,
    burst_count: u32,
}

fn cmd_run(
    config: Option<&Path>,
    overrides: &Overrides,
    attack: RunAttack,
    name: &str,
    out: &Path,
    format: Format,
) -> CliResult<()> {
    let (cfg, applied) = load_config(config, overrides)?;
    let validated = cfg.validate().invalid()?;
    let burst = BurstSpec {
        count: attack.burst_count,
        ..BurstSpec::default()
    };
    let message = match &attack.message {
        Some(m) => Some(BitMessage::new(parse_bits(m).invalid()?, attack.frames_per_bit, attack.preamble).invalid()?),
        None => None,
    };
    let plan = match (&message, attack.continuous) {
        (Some(m), _) => Some(encode(m, burst).invalid()?),
        (None, true) => Some(covsim_core::attackchan::AttackPlan::continuous(burst)),
        (None, false) => None,
    };
    if let Some(m) = &message {
        let needed = m.frame_count() as u64 * validated.major_frame_ns();
        if needed > validated.config().sim_duration {
            return Err(Failure::Validation(anyhow!(
                "message needs {} frames ({} ns) but sim_duration is {} ns",
                m.frame_count(),
                needed,
                validated.config().sim_duration
            )));
        }
    }

    let (mut trace, log) = run_simulation(&validated, plan.as_ref()).invalid()?;
    trace.metadata.overrides = applied;
    create_dir(out)?;
    let csv = trace.write_files(out, name).context("writing trace").runtime()?;
    if let Some(m) = &message {
        let truth = serde_json::json!({
            "message": bits_to_string(&m.bits),
            "layout": m,
            "burst": burst,
        });
        write(&out.join(format!("{name}.truth.json")), &to_json(&truth)?)?;
    }
    info!("wrote {}", csv.display());

    let summary = summarize(&trace.deltas(), 1).runtime()?;
    match format {
        Format::Json => {
            let v = serde_json::json!({
                "trace": csv,
                "trace_digest": trace.digest(),
                "config_digest": trace.metadata.config_digest,
                "attack": trace.metadata.attack,
                "samples": trace.len(),
                "mean_ticks": summary.mean,
                "variance_ticks2": summary.variance,
                "audit_events": log.audit.len(),
                "hypercalls_issued": log.hypercalls_issued,
            });
            println!("{}", to_json(&v)?);
        }
        Format::Csv => {
            println!("trace,trace_digest,attack,samples,mean_ticks,variance_ticks2");
            println!(
                "{},{},{},{},{},{}",
                csv.display(),
                trace.digest(),
                trace.metadata.attack,
                trace.len(),
                summary.mean,
                summary.variance.unwrap_or(f64::NAN)
            );
        }
    }
    Ok(())
}

fn cmd_plan(
    config: Option<&Path>,
    overrides: &Overrides,
    alpha: Option<f64>,
    jobs: usize,
    out: &Path,
    format: Format,
) -> CliResult<()> {
    let mut plan = match config {
        Some(p) => {
            let text = fs::read_to_string(p)
                .with_context(|| format!("reading {}", p.display()))
                .invalid()?;
            harness(ExperimentPlan::from_toml(&text))?
        }
        None => ExperimentPlan::default(),
    };
    plan = harness(plan.with_overrides(&parse_overrides(overrides)?))?;
    if let Some(seed) = overrides.seed {
        plan.seed = seed;
    }
    if let Some(a) = alpha {
        plan.alpha = a;
    }
    let opts = RunOptions {
        execution: Execution::with_jobs(jobs),
        out_dir: Some(out.to_path_buf()),
        ..Default::default()
    };
    let result = harness(run_plan(&plan, &opts))?;
    print_plan(&result, format)?;
    if !result.failed_runs.is_empty() {
        eprintln!(
            "warning: {} run(s) failed; the plan is partial",
            result.failed_runs.len()
        );
    }
    Ok(())
}

fn print_plan(result: &PlanResult, format: Format) -> CliResult<()> {
    match format {
        Format::Csv => print!("{}", verdicts_csv(result)),
        Format::Json => println!("{}", to_json(result)?),
    }
    Ok(())
}

/// All `*.csv` traces of a directory, sorted by file name.
fn read_trace_dir(dir: &Path) -> CliResult<Vec<TimingTrace>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))
        .invalid()?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Failure::Validation(anyhow!("no *.csv traces in {}", dir.display())));
    }
    paths.iter().map(|p| TimingTrace::read_files(p).invalid()).collect()
}

fn cmd_assess(with_dir: &Path, without_dir: &Path, alpha: f64, out: &Path, format: Format) -> CliResult<()> {
    let with = read_trace_dir(with_dir)?;
    let without = read_trace_dir(without_dir)?;
    let verdict = assess(&with, &without, alpha).invalid()?;
    create_dir(out)?;
    write(&out.join("verdict.json"), &to_json(&verdict)?)?;
    print_verdict(&verdict, format)
}

fn print_verdict(v: &AttackVerdict, format: Format) -> CliResult<()> {
    match format {
        Format::Json => println!("{}", to_json(v)?),
        Format::Csv => {
            println!("repetition,t_statistic,degrees_of_freedom,p_value,reject");
            for (i, r) in v.repetitions.iter().enumerate() {
                println!(
                    "{i},{},{},{},{}",
                    r.t_statistic, r.degrees_of_freedom, r.p_value, r.reject
                );
            }
            println!(
                "# feasible={} reproducible={} mean_shift_ticks={}",
                v.feasible, v.reproducible, v.mean_shift_ticks
            );
        }
    }
    Ok(())
}

fn cmd_decode(
    trace_path: &Path,
    truth: Option<&Path>,
    message: Option<String>,
    frames_per_bit: u32,
    preamble: u32,
    threshold: Option<f64>,
    format: Format,
) -> CliResult<()> {
    let trace = TimingTrace::read_files(trace_path).invalid()?;
    let layout = match (truth, message) {
        (Some(p), _) => {
            let text = fs::read_to_string(p)
                .with_context(|| format!("reading {}", p.display()))
                .invalid()?;
            let v: serde_json::Value = serde_json::from_str(&text).invalid()?;
            serde_json::from_value::<BitMessage>(v["layout"].clone())
                .context("truth file has no valid `layout`")
                .invalid()?
        }
        (None, Some(m)) => BitMessage::new(parse_bits(&m).invalid()?, frames_per_bit, preamble).invalid()?,
        (None, None) => BitMessage::new(Vec::new(), frames_per_bit, preamble).invalid()?,
    };
    let truth_bits = (!layout.bits.is_empty()).then_some(layout.bits.as_slice());

    let (calibration, result): (Option<ThresholdCalibration>, DecodeResult) = match threshold {
        Some(t) => {
            let fpb = layout.frames_per_bit as usize;
            let params = DecodeParams {
                threshold_ticks: t,
                frames_per_bit: fpb,
                start_sample: layout.preamble_len as usize * fpb,
                bit_count: truth_bits.map(<[u8]>::len),
            };
            (None, decode(&trace, &params, truth_bits).runtime()?)
        }
        None if truth_bits.is_none() => {
            return Err(Failure::Validation(anyhow!(
                "without --truth or --message the payload length is unknown; pass --threshold to decode every frame"
            )))
        }
        None => {
            let (c, r) = receive(&trace, &layout, truth_bits).runtime()?;
            (Some(c), r)
        }
    };
    match format {
        Format::Json => {
            let v = serde_json::json!({
                "decoded": bits_to_string(&result.decoded_bits),
                "calibration": calibration,
                "result": result,
            });
            println!("{}", to_json(&v)?);
        }
        Format::Csv => {
            println!("decoded,bits,bit_errors,ber,threshold_ticks,partial");
            println!(
                "{},{},{},{},{},{}",
                bits_to_string(&result.decoded_bits),
                result.decoded_bits.len(),
                result.bit_errors.map(|e| e.to_string()).unwrap_or_default(),
                result.ber.map(|b| b.to_string()).unwrap_or_default(),
                result.threshold_ticks,
                result.partial
            );
        }
    }
    Ok(())
}

fn cmd_ingest(input: &Path, meta: &MetaArgs, name: &str, out: &Path, format: Format) -> CliResult<()> {
    let trace = harness(ingest_trace(input, &meta.partial()))?;
    let summary = summarize(&trace.deltas(), 40).runtime()?;
    create_dir(out)?;
    let csv = trace.write_files(out, name).context("writing trace").runtime()?;
    match format {
        Format::Json => {
            let v = serde_json::json!({
                "trace": csv,
                "trace_digest": trace.digest(),
                "summary": summary,
            });
            println!("{}", to_json(&v)?);
        }
        Format::Csv => {
            println!("trace,samples,mean_ticks,variance_ticks2,min,max");
            println!(
                "{},{},{},{},{},{}",
                csv.display(),
                summary.n,
                summary.mean,
                summary.variance.unwrap_or(f64::NAN),
                summary.min,
                summary.max
            );
        }
    }
    Ok(())
}

fn cmd_report(results: &Path, out: Option<&Path>, bins: usize) -> CliResult<()> {
    let result = harness(load_plan_result(results))?;
    let out = out.unwrap_or(results);
    create_dir(out)?;
    harness(write_report(&result, out, bins))?;
    println!("{}", out.join("report.md").display());
    if result.partial {
        eprintln!("warning: the plan is incomplete; see the report");
    }
    Ok(())
}

fn cmd_calibrate(
    reference: &Path,
    config: Option<&Path>,
    overrides: &Overrides,
    meta: &MetaArgs,
    out: &Path,
    format: Format,
) -> CliResult<()> {
    let (template, _) = load_config(config, overrides)?;
    let mut partial = meta.partial();
    if !sidecar_path(reference).exists() {
        // A bare reference needs no config digest for fitting.
        partial.config_digest.get_or_insert_with(|| "reference".into());
        partial.attack.get_or_insert(false);
    }
    let trace = harness(ingest_trace(reference, &partial))?;
    if trace.metadata.attack {
        return Err(Failure::Validation(anyhow!(
            "calibration needs a no-attack reference trace"
        )));
    }
    let fit = harness(fit_config(&trace, &template))?;
    create_dir(out)?;
    let toml = fit.config.to_toml().runtime()?;
    write(&out.join("fitted.toml"), &toml)?;
    write(&out.join("calibration.json"), &to_json(&fit)?)?;
    for d in &fit.diagnostics {
        eprintln!("diagnostic: {d}");
    }
    match format {
        Format::Json => println!("{}", to_json(&fit)?),
        Format::Csv => {
            println!("base_switch_cost,jitter_magnitude,reference_mean,fitted_mean,reference_variance,fitted_variance,diagnostics");
            println!(
                "{},{},{},{},{},{},{}",
                fit.config.base_switch_cost,
                fit.config.jitter.magnitude,
                fit.reference_mean,
                fit.fitted_mean,
                fit.reference_variance,
                fit.fitted_variance,
                fit.diagnostics.len()
            );
        }
    }
    Ok(())
}
