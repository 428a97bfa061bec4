mod analyze;
mod ceremonies;
mod exit;
mod input;
mod remote;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{anyhow, Context};
use bido_core::geometry::{validate_frame, Rejection};
use bido_core::protocol::{http, CredentialStore, RelyingParty};
use bido_core::simulator::{generate_dataset, NoiseConfig, Population, DEFAULT_SPREAD_PX};
use clap::{Args, Parser, Subcommand};

use crate::exit::{fail, Class, ClassifyExt, CliResult};

#[derive(Debug, Parser)]
#[command(name = "bido", version, about = "Device-free biometric WebAuthn credentials")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic landmark dataset.
    Simulate(SimulateArgs),
    /// Check a landmark file against the wire format and the frame gates.
    Validate(ValidateArgs),
    /// Enroll from a frame stream and register with a relying party.
    Enroll(ceremonies::EnrollArgs),
    /// Authenticate a registered credential from a frame stream.
    Auth(ceremonies::AuthArgs),
    /// Run the mock relying party over HTTP.
    RpServe(ServeArgs),
    /// Entropy and binding analysis.
    #[command(subcommand)]
    Analyze(analyze::AnalyzeCommand),
    /// Seeded simulate, enroll, authenticate and verify; prints the
    /// registration message and PASS or FAIL.
    Roundtrip(ceremonies::RoundtripArgs),
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    subjects: u64,
    /// Frames per subject.
    #[arg(long)]
    frames: usize,
    /// Landmark jitter sigma in pixels. Zero also disables pose variation.
    #[arg(long, default_value_t = 0.0)]
    jitter: f64,
    /// Master seed for subject templates.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Session seed for frame noise (defaults to the master seed).
    #[arg(long)]
    frame_seed: Option<u64>,
    #[arg(long, default_value_t = DEFAULT_SPREAD_PX)]
    spread: f64,
    #[arg(long, default_value_t = 0.0)]
    invalid_rate: f64,
    #[arg(long, default_value_t = 0.0)]
    nonfrontal_rate: f64,
    #[arg(long, default_value_t = 0.0)]
    degenerate_rate: f64,
    /// Output path, or `-` for stdout.
    #[arg(long, default_value = "-")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    /// JSONL landmark frames, or `-` for stdin.
    #[arg(long)]
    frames: PathBuf,
    /// Frontality tolerance in pixels.
    #[arg(long, default_value_t = 0)]
    tolerance: u32,
}

#[derive(Debug, Args)]
struct ServeArgs {
    /// Credential store file, created if missing.
    #[arg(long)]
    store: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    listen: String,
}

fn simulate(args: &SimulateArgs) -> CliResult<()> {
    let base = if args.jitter > 0.0 {
        NoiseConfig::webcam(args.jitter)
    } else {
        NoiseConfig::noiseless()
    };
    let noise = NoiseConfig {
        invalid_frame_rate: args.invalid_rate,
        nonfrontal_rate: args.nonfrontal_rate,
        degenerate_rate: args.degenerate_rate,
        ..base
    };
    noise.validate().class(Class::Usage)?;
    if !(args.spread >= 0.0 && args.spread.is_finite()) {
        return fail(Class::Usage, anyhow!("--spread must be a non-negative number"));
    }
    let pop = Population::new(args.seed, args.spread);
    let frame_seed = args.frame_seed.unwrap_or(args.seed);
    let mut out: Box<dyn Write> = if args.out.as_os_str() == "-" {
        Box::new(io::stdout().lock())
    } else {
        let file = File::create(&args.out)
            .with_context(|| format!("creating {}", args.out.display()))
            .input()?;
        Box::new(BufWriter::new(file))
    };
    generate_dataset(&pop, args.subjects, args.frames, &noise, frame_seed, &mut out)
        .and_then(|()| out.flush())
        .context("writing dataset")
        .input()
}

fn validate(args: &ValidateArgs) -> CliResult<()> {
    let (total, rejections) = input::with_frames(&args.frames, |frames| {
        let mut rejections: BTreeMap<String, usize> = BTreeMap::new();
        let mut total = 0usize;
        for frame in frames {
            total += 1;
            if let Err(reason) = validate_frame(&frame, args.tolerance) {
                *rejections.entry(rejection_name(reason).to_owned()).or_default() += 1;
            }
        }
        (total, rejections)
    })?;
    let rejected: usize = rejections.values().sum();
    println!("frames: {total}  valid: {}  rejected: {rejected}", total - rejected);
    for (reason, n) in rejections {
        println!("  {reason}: {n}");
    }
    Ok(())
}

fn rejection_name(reason: Rejection) -> &'static str {
    match reason {
        Rejection::NotExactlyOneFace => "NotExactlyOneFace",
        Rejection::DegenerateEyes => "DegenerateEyes",
        Rejection::NotFrontal => "NotFrontal",
    }
}

fn serve(args: &ServeArgs) -> CliResult<()> {
    let store = CredentialStore::open(&args.store).input()?;
    let rp = Arc::new(RelyingParty::new(store));
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .context("starting runtime")
        .input()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(&args.listen)
            .await
            .with_context(|| format!("binding {}", args.listen))
            .transport()?;
        let addr = listener.local_addr().context("local address").transport()?;
        println!("listening on http://{addr}");
        io::stdout().flush().ok();
        let shutdown = async {
            tokio::signal::ctrl_c().await.ok();
        };
        http::serve(listener, rp, shutdown)
            .await
            .context("serving")
            .transport()
    })
}

fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Simulate(args) => simulate(args),
        Command::Validate(args) => validate(args),
        Command::Enroll(args) => ceremonies::run_enroll(args),
        Command::Auth(args) => ceremonies::run_auth(args),
        Command::RpServe(args) => serve(args),
        Command::Analyze(cmd) => analyze::run(cmd),
        Command::Roundtrip(args) => ceremonies::run_roundtrip(args),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {failure}");
            failure.exit_code()
        }
    }
}
