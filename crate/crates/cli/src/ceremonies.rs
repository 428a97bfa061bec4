//! `enroll`, `auth` and `roundtrip`.

use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{anyhow, Context};
use bido_core::b64;
use bido_core::config::PipelineConfig;
use bido_core::protocol::{
    authenticate, enroll, AssertionMessage, CeremonyError, Challenge, CredentialStore,
    ManualClock, Purpose, RegistrationMessage, RelyingParty, RpError, NONCE_LEN,
};
use bido_core::simulator::{NoiseConfig, Population, DEFAULT_SPREAD_PX};
use clap::Args;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use zeroize::Zeroizing;

use crate::exit::{fail, Class, ClassifyExt, CliResult, Failure};
use crate::input::{load_config, read_salt, with_frames};
use crate::remote::RemoteRp;

#[derive(Debug, Args)]
pub struct RpTarget {
    /// Base URL of a running `rp-serve`.
    #[arg(long, value_name = "URL", conflicts_with = "store")]
    rp: Option<String>,
    /// Run the relying party in-process on this credential store file.
    #[arg(long, value_name = "PATH", required_unless_present = "rp")]
    store: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CeremonyInput {
    /// JSONL landmark frames, or `-` for stdin.
    #[arg(long, value_name = "PATH")]
    frames: PathBuf,
    /// Environment variable holding the salt. Without it, the salt is
    /// prompted for on the terminal.
    #[arg(long, value_name = "VAR")]
    salt_env: Option<String>,
    /// Pipeline configuration JSON.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EnrollArgs {
    #[command(flatten)]
    input: CeremonyInput,
    #[command(flatten)]
    target: RpTarget,
}

#[derive(Debug, Args)]
pub struct AuthArgs {
    #[command(flatten)]
    input: CeremonyInput,
    /// Credential id returned by `enroll` (base64url).
    #[arg(long, value_name = "B64")]
    cred_id: String,
    #[command(flatten)]
    target: RpTarget,
}

#[derive(Debug, Args)]
pub struct RoundtripArgs {
    /// Seeds the simulated subject, the salt and the relying party's nonces.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Landmark jitter in pixels. Zero renders noiseless frames.
    #[arg(long, default_value_t = 0.0)]
    jitter: f64,
}

enum Rp {
    Local(RelyingParty),
    Remote(RemoteRp),
}

fn rp_error(err: RpError) -> Failure {
    let class = match err {
        RpError::Store(_) => Class::Input,
        _ => Class::Rejected,
    };
    Failure {
        class,
        error: anyhow!("{}: {err}", err.code()),
    }
}

fn ceremony_error(err: CeremonyError) -> Failure {
    Failure {
        class: Class::Rejected,
        error: anyhow!("{}: {err}", err.code()),
    }
}

impl Rp {
    fn open(target: &RpTarget) -> CliResult<Self> {
        match (&target.rp, &target.store) {
            (Some(url), _) => Ok(Self::Remote(RemoteRp::new(url)?)),
            (None, Some(path)) => {
                let store = CredentialStore::open(path).input()?;
                Ok(Self::Local(RelyingParty::new(store)))
            }
            (None, None) => fail(Class::Usage, anyhow!("pass --rp URL or --store PATH")),
        }
    }

    fn registration_challenge(&self) -> CliResult<[u8; NONCE_LEN]> {
        match self {
            Self::Local(rp) => Ok(rp.issue_challenge(Purpose::Registration).nonce),
            Self::Remote(rp) => rp.register_challenge(),
        }
    }

    fn register(&self, msg: &RegistrationMessage, nonce: &[u8; NONCE_LEN]) -> CliResult<Vec<u8>> {
        match self {
            Self::Local(rp) => Ok(rp.register(msg, nonce).map_err(rp_error)?.cred_id),
            Self::Remote(rp) => rp.register_complete(msg),
        }
    }

    fn auth_challenge(&self, cred_id: &[u8]) -> CliResult<([u8; NONCE_LEN], Vec<Vec<u8>>)> {
        match self {
            Self::Local(rp) => {
                let (ch, allow) = rp.issue_auth_challenge(Some(cred_id));
                Ok((ch.nonce, allow))
            }
            Self::Remote(rp) => rp.auth_challenge(Some(cred_id)),
        }
    }

    fn finish_auth(&self, msg: &AssertionMessage, nonce: &[u8; NONCE_LEN]) -> CliResult<()> {
        match self {
            Self::Local(rp) => rp.finish_auth(msg, nonce).map(drop).map_err(rp_error),
            Self::Remote(rp) => rp.auth_complete(msg, nonce),
        }
    }
}

fn now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

pub fn run_enroll(args: &EnrollArgs) -> CliResult<()> {
    let config = load_config(args.input.config.as_ref())?;
    let salt = read_salt(args.input.salt_env.as_deref())?;
    let rp = Rp::open(&args.target)?;
    let nonce = rp.registration_challenge()?;
    let challenge = Challenge::received(nonce, Purpose::Registration, now());
    let msg = with_frames(&args.input.frames, |frames| {
        enroll(frames, &salt, &challenge, &config)
    })?
    .map_err(ceremony_error)?;
    drop(salt);
    let cred_id = rp.register(&msg, &nonce)?;
    println!("{}", b64::encode(cred_id));
    Ok(())
}

pub fn run_auth(args: &AuthArgs) -> CliResult<()> {
    let cred_id = b64::decode(&args.cred_id)
        .context("--cred-id is not base64url")
        .input()?;
    let config = load_config(args.input.config.as_ref())?;
    let salt = read_salt(args.input.salt_env.as_deref())?;
    let rp = Rp::open(&args.target)?;
    let (nonce, allow) = rp.auth_challenge(&cred_id)?;
    let challenge = Challenge::received(nonce, Purpose::Authentication, now());
    let assertion = with_frames(&args.input.frames, |frames| {
        authenticate(frames, &salt, &challenge, &allow, &config)
    })?
    .map_err(ceremony_error)?;
    drop(salt);
    rp.finish_auth(&assertion, &nonce)?;
    println!("accepted");
    Ok(())
}

/// Simulate, enroll, authenticate and verify in one process, fully seeded.
pub fn run_roundtrip(args: &RoundtripArgs) -> CliResult<()> {
    let config = PipelineConfig::default();
    let noise = if args.jitter > 0.0 {
        NoiseConfig::webcam(args.jitter)
    } else {
        NoiseConfig::noiseless()
    };
    noise.validate().class(Class::Usage)?;
    let pop = Population::new(args.seed, DEFAULT_SPREAD_PX);
    let salt = Zeroizing::new(format!("roundtrip-{:016x}", args.seed));
    let rp = RelyingParty::with_rng(
        CredentialStore::in_memory(),
        ChaCha20Rng::seed_from_u64(args.seed),
    )
    .with_clock(Arc::new(ManualClock::new(0)));

    let reg = rp.issue_challenge(Purpose::Registration);
    let msg = enroll(pop.frames(0, &noise, args.seed), &salt, &reg, &config)
        .map_err(ceremony_error)?;
    println!("{}", serde_json::to_string(&msg).expect("message serializes"));
    let cred_id = rp.register(&msg, &reg.nonce).map_err(rp_error)?.cred_id;

    let (ch, allow) = rp.issue_auth_challenge(Some(&cred_id));
    let frames = pop.frames(0, &noise, args.seed.wrapping_add(1));
    let genuine = authenticate(frames, &salt, &ch, &allow, &config)
        .map_err(ceremony_error)
        .and_then(|a| rp.finish_auth(&a, &ch.nonce).map_err(rp_error));

    let (ch, allow) = rp.issue_auth_challenge(Some(&cred_id));
    let frames = pop.frames(0, &noise, args.seed.wrapping_add(2));
    let wrong_salt = format!("{}!", salt.as_str());
    let impostor = authenticate(frames, &wrong_salt, &ch, &allow, &config);

    match (genuine, impostor) {
        (Ok(_), Err(CeremonyError::AuthTimeout(_))) => {
            println!("PASS");
            Ok(())
        }
        (Err(e), _) => {
            println!("FAIL");
            Err(e)
        }
        (Ok(_), other) => {
            println!("FAIL");
            fail(
                Class::Rejected,
                anyhow!("wrong-salt attempt should time out, got {other:?}"),
            )
        }
    }
}
