//! Command-line front end: traffic synthesis, threshold training, scheme
//! evaluation, mitigation simulation, and table rendering, all as thin
//! adapters over the library modules.
//!
//! Exit codes: 0 on success, 1 on usage errors (bad flags/arguments), 2 on
//! data errors (unreadable traces, malformed configs, untrainable labels).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use slowguard::attack_synth::{
    merge_traces, synth_benign, synthesize, AttackProfile, AttackTool, BenignProfile,
};
use slowguard::error::Error;
use slowguard::evaluator::{render_table, run_experiment, EvalReport, RunOptions};
use slowguard::mitigation_sim::{run_pipeline, SimConfig};
use slowguard::schemes::{Scheme, SchemeConfig};
use slowguard::trace_io::{
    label_from_blocks, read_labels, read_pcap, sidecar_path, write_labels, write_trace, Cidr,
    Endpoint, LabelSidecar, LabeledTrace, PayloadMode,
};
use slowguard::trainer::{train_report, TrainingSpec};

#[derive(Parser)]
#[command(
    name = "slowguard",
    version,
    about = "Detect, train against, and simulate mitigation of slow-rate denial-of-service attacks"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,

    /// RNG seed for synthesis (fixed default keeps runs reproducible).
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,

    /// Suspicious observations required before a client is classified.
    #[arg(long, global = true, default_value_t = 1)]
    strikes: u32,

    /// Count handshake segments toward the metrics (the default).
    #[arg(long, global = true, conflicts_with = "no_handshake")]
    handshake: bool,

    /// Exclude handshake segments from the metrics.
    #[arg(long, global = true)]
    no_handshake: bool,
}

impl Cli {
    fn include_handshake(&self) -> bool {
        !self.no_handshake
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Synthesize attack or benign traffic as a labeled pcap.
    Synth(SynthArgs),
    /// Train a scheme threshold on a labeled trace.
    Train(TrainArgs),
    /// Evaluate scheme configurations against a labeled trace.
    Eval(EvalArgs),
    /// Replay a labeled trace through the mitigation pipeline.
    Simulate(SimulateArgs),
    /// Render evaluation reports as a text table.
    Report(ReportArgs),
}

fn parse_cidr(s: &str) -> Result<Cidr, String> {
    s.parse()
}

fn parse_endpoint(s: &str) -> Result<Endpoint, String> {
    s.parse()
}

fn parse_scheme(s: &str) -> Result<Scheme, String> {
    s.parse()
}

#[derive(Args)]
struct SynthArgs {
    /// slowloris, slowhttptest, slowloris-ng, or benign.
    #[arg(long)]
    tool: Option<String>,

    /// Output pcap path; a .labels.json sidecar is written next to it.
    #[arg(long)]
    out: PathBuf,

    /// Attack profile JSON; explicit flags below override its fields.
    #[arg(long)]
    profile: Option<PathBuf>,

    #[arg(long)]
    clients: Option<u32>,

    /// Trace length in seconds.
    #[arg(long)]
    duration: Option<f64>,

    /// Seconds between keep-alive sends or body chunks.
    #[arg(long)]
    interval: Option<f64>,

    /// Uniform jitter half-width on the interval, seconds.
    #[arg(long)]
    jitter: Option<f64>,

    /// Connections per client.
    #[arg(long)]
    sockets: Option<u32>,

    #[arg(long)]
    content_length: Option<u32>,

    #[arg(long)]
    body_chunk: Option<u32>,

    /// Send keep-alive lines as single packets instead of per-character
    /// bursts (slowloris-ng only).
    #[arg(long)]
    single_packet_lines: bool,

    /// Client address block.
    #[arg(long, value_parser = parse_cidr)]
    block: Option<Cidr>,

    /// Target endpoint as ip:port.
    #[arg(long, value_parser = parse_endpoint)]
    target: Option<Endpoint>,

    /// Trace start timestamp in seconds.
    #[arg(long)]
    start: Option<f64>,

    /// Existing benign pcap to overlay this attack onto.
    #[arg(long)]
    benign: Option<PathBuf>,

    /// Shift applied to the attack when overlaying, seconds.
    #[arg(long, default_value_t = 0.0)]
    offset: f64,

    /// Write packet headers only (no zero-filled payload bytes).
    #[arg(long)]
    headers_only: bool,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    trace: PathBuf,

    #[arg(long, value_parser = parse_scheme)]
    scheme: Scheme,

    /// Target endpoint; defaults to the trace sidecar's target.
    #[arg(long, value_parser = parse_endpoint)]
    target: Option<Endpoint>,

    /// Label clients inside this block as attackers when no sidecar exists.
    #[arg(long, value_parser = parse_cidr)]
    attacker_block: Option<Cidr>,

    /// Lower search bound (default: derived from observed values).
    #[arg(long)]
    lo: Option<f64>,

    /// Upper search bound (default: derived from observed values).
    #[arg(long)]
    hi: Option<f64>,

    #[arg(long)]
    max_iters: Option<u32>,

    /// Relative interval-width stopping tolerance.
    #[arg(long)]
    tol: Option<f64>,

    /// Skip the exhaustive sweep-oracle comparison.
    #[arg(long)]
    no_oracle: bool,

    /// Output path for the training report JSON (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    trace: PathBuf,

    /// Scheme configuration JSON: one object or an array (a grid).
    #[arg(long, conflicts_with_all = ["scheme", "threshold", "delta"])]
    config: Option<PathBuf>,

    #[arg(long, value_parser = parse_scheme)]
    scheme: Option<Scheme>,

    /// Threshold for the chosen scheme (rate pair: the rate bound).
    #[arg(long, allow_hyphen_values = true)]
    threshold: Option<f64>,

    /// Distance-difference bound for the rate/distance pair scheme.
    #[arg(long, allow_hyphen_values = true)]
    delta: Option<f64>,

    /// Run idle duration sweeps every this many seconds.
    #[arg(long)]
    sweep_interval: Option<f64>,

    /// Dataset name recorded in the report.
    #[arg(long)]
    dataset: Option<String>,

    /// Attack name recorded in the report (default: the trace's tool label).
    #[arg(long)]
    attack: Option<String>,

    #[arg(long, value_parser = parse_endpoint)]
    target: Option<Endpoint>,

    #[arg(long, value_parser = parse_cidr)]
    attacker_block: Option<Cidr>,

    /// Output path for the report JSON (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    trace: PathBuf,

    /// Simulation config JSON: server pool/timeout plus controller scheme.
    #[arg(long)]
    config: PathBuf,

    #[arg(long, value_parser = parse_endpoint)]
    target: Option<Endpoint>,

    #[arg(long, value_parser = parse_cidr)]
    attacker_block: Option<Cidr>,

    /// Output path for the simulation report JSON (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Evaluation report JSON files (single objects or arrays).
    #[arg(long, required = true, num_args = 1..)]
    input: Vec<PathBuf>,

    /// Output path for the rendered table (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

// ── error & output plumbing ─────────────────────────────────────────────────

enum CliError {
    Usage(String),
    Data(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Data(e)
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Data(Error::InvalidConfig(format!("{}: {e}", path.display()))))
}

fn emit(out: Option<&Path>, body: &str) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, body).map_err(|e| CliError::Data(Error::io(path, e))),
        None => {
            println!("{body}");
            Ok(())
        }
    }
}

fn to_json<T: serde::Serialize>(value: &T) -> Result<String, CliError> {
    serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Data(Error::Inconsistent(format!("serializing output: {e}"))))
}

/// Load a trace plus its ground truth. The target comes from `--target` or
/// the sidecar; labels come from the sidecar or `--attacker-block`.
fn load_labeled(
    trace_path: &Path,
    target: Option<Endpoint>,
    attacker_block: Option<Cidr>,
) -> Result<LabeledTrace, CliError> {
    if !trace_path.exists() {
        return Err(CliError::Data(Error::io(
            trace_path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no such file"),
        )));
    }
    let sidecar = {
        let p = sidecar_path(trace_path);
        if p.exists() {
            Some(read_labels(&p)?)
        } else {
            None
        }
    };
    let target = match (target, &sidecar) {
        (Some(t), _) => t,
        (None, Some(s)) => s.target()?,
        (None, None) => {
            return Err(usage(format!(
                "{}: no label sidecar found; pass --target ip:port",
                trace_path.display()
            )))
        }
    };
    let (mut trace, _stats) = read_pcap(trace_path, target)?;
    if let Some(block) = attacker_block {
        label_from_blocks(&mut trace, block);
    } else if let Some(s) = &sidecar {
        slowguard::trace_io::apply_sidecar(&mut trace, s)?;
    }
    Ok(trace)
}

// ── subcommands ─────────────────────────────────────────────────────────────

fn run_synth(args: &SynthArgs, cli: &Cli) -> Result<(), CliError> {
    let tool_flag = args.tool.as_deref();
    if tool_flag == Some("benign") {
        if args.profile.is_some() {
            return Err(usage("--profile applies to attack tools; benign traffic is configured by flags"));
        }
        let mut profile = BenignProfile { rng_seed: cli.seed, ..BenignProfile::default() };
        if let Some(c) = args.clients {
            profile.clients = c;
        }
        if let Some(d) = args.duration {
            profile.duration_s = d;
        }
        if let Some(s) = args.start {
            profile.start_ts_s = s;
        }
        if let Some(b) = args.block {
            profile.client_block = b;
        }
        if let Some(t) = args.target {
            profile.target = t;
        }
        let trace = synth_benign(&profile)?;
        return write_out(&trace, args);
    }

    let mut profile = match (&args.profile, tool_flag) {
        (Some(path), _) => {
            let p: AttackProfile = read_json(path)?;
            if let Some(flag) = tool_flag {
                let flag_tool: AttackTool = flag.parse().map_err(usage)?;
                if flag_tool != p.tool {
                    return Err(usage(format!(
                        "--tool {flag} disagrees with the profile's tool {}",
                        p.tool
                    )));
                }
            }
            p
        }
        (None, Some(flag)) => AttackProfile::for_tool(flag.parse().map_err(usage)?),
        (None, None) => return Err(usage("pass --tool or --profile")),
    };

    profile.rng_seed = cli.seed;
    if let Some(c) = args.clients {
        profile.clients = c;
    }
    if let Some(d) = args.duration {
        profile.duration_s = d;
    }
    if let Some(i) = args.interval {
        profile.interval_s = i;
    }
    if let Some(j) = args.jitter {
        profile.jitter_s = j;
    }
    if let Some(s) = args.sockets {
        profile.sockets_per_client = s;
    }
    if let Some(c) = args.content_length {
        profile.content_length = c;
    }
    if let Some(b) = args.body_chunk {
        profile.body_chunk = b;
    }
    if args.single_packet_lines {
        profile.burst_per_char = false;
    }
    if let Some(b) = args.block {
        profile.attacker_block = b;
    }
    if let Some(t) = args.target {
        profile.target = t;
    }
    if let Some(s) = args.start {
        profile.start_ts_s = s;
    }

    let attack = synthesize(&profile)?;
    let trace = match &args.benign {
        Some(benign_path) => {
            let benign = load_labeled(benign_path, Some(profile.target), None)?;
            merge_traces(&benign, &attack, args.offset)?
        }
        None => attack,
    };
    write_out(&trace, args)
}

fn write_out(trace: &LabeledTrace, args: &SynthArgs) -> Result<(), CliError> {
    let mode = if args.headers_only { PayloadMode::HeadersOnly } else { PayloadMode::ZeroFilled };
    write_trace(trace, &args.out, mode)?;
    write_labels(&LabelSidecar::from_trace(trace), sidecar_path(&args.out))?;
    eprintln!(
        "wrote {} packets, {} attacker clients -> {} (+ labels sidecar)",
        trace.packets.len(),
        trace.attacker_ips.len(),
        args.out.display()
    );
    Ok(())
}

fn run_train(args: &TrainArgs, cli: &Cli) -> Result<(), CliError> {
    let trace = load_labeled(&args.trace, args.target, args.attacker_block)?;
    let mut spec = TrainingSpec::new(args.scheme, cli.include_handshake());
    spec.search_lo = args.lo;
    spec.search_hi = args.hi;
    if let Some(m) = args.max_iters {
        spec.max_iters = m;
    }
    if let Some(t) = args.tol {
        spec.tol = t;
    }
    let report = train_report(&trace, &spec, !args.no_oracle)?;
    emit(args.out.as_deref(), &to_json(&report)?)
}

fn scheme_config_from_flags(
    scheme: Scheme,
    threshold: f64,
    delta: Option<f64>,
    include_handshake: bool,
    strikes: u32,
) -> Result<SchemeConfig, CliError> {
    let cfg = match scheme {
        Scheme::Lc => SchemeConfig::lc(threshold, strikes),
        Scheme::Lpr => SchemeConfig::lpr(threshold, include_handshake, strikes),
        Scheme::Pdu => SchemeConfig::pdu(threshold, include_handshake, strikes),
        Scheme::Mpr => SchemeConfig::mpr(threshold, include_handshake, strikes),
        Scheme::Prv => SchemeConfig::prv(threshold, include_handshake, strikes),
        Scheme::LprPdu => {
            let delta = delta.ok_or_else(|| usage("the rate/distance pair needs --delta as well"))?;
            SchemeConfig::lpr_pdu(threshold, delta, include_handshake, strikes)
        }
    };
    Ok(cfg)
}

fn run_eval(args: &EvalArgs, cli: &Cli) -> Result<(), CliError> {
    let trace = load_labeled(&args.trace, args.target, args.attacker_block)?;
    let opts = RunOptions {
        sweep_interval_s: args.sweep_interval,
        dataset: args.dataset.clone(),
        attack: args.attack.clone(),
    };

    let body = match (&args.config, args.scheme) {
        (Some(path), _) => {
            let value: serde_json::Value = read_json(path)?;
            if value.is_array() {
                let configs: Vec<SchemeConfig> = serde_json::from_value(value).map_err(|e| {
                    CliError::Data(Error::InvalidConfig(format!("{}: {e}", path.display())))
                })?;
                let reports = configs
                    .iter()
                    .map(|cfg| run_experiment(&trace, cfg, &opts))
                    .collect::<Result<Vec<EvalReport>, Error>>()?;
                to_json(&reports)?
            } else {
                let cfg: SchemeConfig = serde_json::from_value(value).map_err(|e| {
                    CliError::Data(Error::InvalidConfig(format!("{}: {e}", path.display())))
                })?;
                to_json(&run_experiment(&trace, &cfg, &opts)?)?
            }
        }
        (None, Some(scheme)) => {
            let threshold =
                args.threshold.ok_or_else(|| usage("--scheme needs --threshold"))?;
            let cfg = scheme_config_from_flags(
                scheme,
                threshold,
                args.delta,
                cli.include_handshake(),
                cli.strikes,
            )?;
            to_json(&run_experiment(&trace, &cfg, &opts)?)?
        }
        (None, None) => return Err(usage("pass --config or --scheme with --threshold")),
    };
    emit(args.out.as_deref(), &body)
}

fn run_simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let trace = load_labeled(&args.trace, args.target, args.attacker_block)?;
    let cfg: SimConfig = read_json(&args.config)?;
    let report = run_pipeline(&trace, &cfg)?;
    emit(args.out.as_deref(), &to_json(&report)?)
}

fn run_report(args: &ReportArgs) -> Result<(), CliError> {
    let mut reports = Vec::new();
    for path in &args.input {
        let value: serde_json::Value = read_json(path)?;
        if value.is_array() {
            let mut batch: Vec<EvalReport> = serde_json::from_value(value).map_err(|e| {
                CliError::Data(Error::InvalidConfig(format!("{}: {e}", path.display())))
            })?;
            reports.append(&mut batch);
        } else {
            let one: EvalReport = serde_json::from_value(value).map_err(|e| {
                CliError::Data(Error::InvalidConfig(format!("{}: {e}", path.display())))
            })?;
            reports.push(one);
        }
    }
    emit(args.out.as_deref(), render_table(&reports).trim_end())
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    if cli.strikes == 0 {
        return Err(usage("--strikes must be at least 1"));
    }
    match &cli.cmd {
        Cmd::Synth(args) => run_synth(args, cli),
        Cmd::Train(args) => run_train(args, cli),
        Cmd::Eval(args) => run_eval(args, cli),
        Cmd::Simulate(args) => run_simulate(args),
        Cmd::Report(args) => run_report(args),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Data(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
